//! Minimal line-oriented config format shared by corpus manifests and
//! experiment files.
//!
//! The format is a strict subset of INI: optional `[section]` headers,
//! `key = value` entries, `#` comment lines, and blank lines.  Values are
//! taken verbatim (trimmed, never quoted), so there is no escaping to get
//! wrong and files round-trip byte-for-byte through a writer that emits the
//! same shape.

// ── Parsed representation ───────────────────────────────────────────────────

/// One parsed file: entries before any section header, then the sections in
/// file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct KvFile {
    pub root: Vec<KvEntry>,
    pub sections: Vec<KvSection>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct KvSection {
    /// 1-based line number of the `[name]` header.
    pub line: usize,
    pub name: String,
    pub entries: Vec<KvEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct KvEntry {
    /// 1-based line number of the entry.
    pub line: usize,
    pub key: String,
    pub value: String,
}

impl KvFile {
    /// Looks up a root-level key; last occurrence wins.
    pub fn root_value(&self, key: &str) -> Option<&str> {
        lookup(&self.root, key)
    }

    /// Returns sections whose name starts with `prefix.`, paired with the
    /// remainder of the name.
    pub fn sections_with_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a KvSection)> {
        self.sections.iter().filter_map(move |s| {
            s.name
                .strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('.'))
                .map(|rest| (rest, s))
        })
    }
}

impl KvSection {
    pub fn value(&self, key: &str) -> Option<&str> {
        lookup(&self.entries, key)
    }
}

fn lookup<'a>(entries: &'a [KvEntry], key: &str) -> Option<&'a str> {
    entries
        .iter()
        .rev()
        .find(|e| e.key == key)
        .map(|e| e.value.as_str())
}

// ── Parsing ─────────────────────────────────────────────────────────────────

/// Parses the format.  Errors carry the 1-based offending line number.
pub(crate) fn parse(text: &str) -> Result<KvFile, (usize, String)> {
    let mut file = KvFile { root: Vec::new(), sections: Vec::new() };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| (line_no, "unterminated section header".to_string()))?
                .trim();
            if name.is_empty() {
                return Err((line_no, "empty section name".to_string()));
            }
            file.sections.push(KvSection {
                line: line_no,
                name: name.to_string(),
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| (line_no, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err((line_no, "empty key".to_string()));
        }
        let entry = KvEntry {
            line: line_no,
            key: key.to_string(),
            value: value.trim().to_string(),
        };
        match file.sections.last_mut() {
            Some(section) => section.entries.push(entry),
            None => file.root.push(entry),
        }
    }
    Ok(file)
}

/// Serializes entries back into the same shape `parse` accepts.
pub(crate) fn render(file: &KvFile) -> String {
    let mut out = String::new();
    for e in &file.root {
        out.push_str(&format!("{} = {}\n", e.key, e.value));
    }
    for s in &file.sections {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("[{}]\n", s.name));
        for e in &s.entries {
            out.push_str(&format!("{} = {}\n", e.key, e.value));
        }
    }
    out
}

// ── Typed value helpers ─────────────────────────────────────────────────────

/// Parses a value with a type's `FromStr`, reporting the key on failure.
pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("key `{key}`: cannot parse `{value}`"))
}

/// Splits a comma-separated list, trimming items and dropping empties.
pub(crate) fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}
