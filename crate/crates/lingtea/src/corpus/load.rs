//! Corpus disk format: a `corpus.toml` manifest plus JSONL data files.
//!
//! The manifest is the line-oriented `key = value` format used throughout
//! this crate.  Root keys declare `vocab_size`, the ordered `languages`
//! list, and optionally `pivot` (defaults to the first language).  Each
//! language gets a `[lang.<code>]` section with its resource `level` and
//! relative paths for the four aligned splits, plus optional `pretrain`,
//! `cloze_forget`, and `cloze_test` files.  An optional `[splits]` section
//! declares expected per-language sizes, which are verified at load time.
//!
//! Sequence records are one JSON object per line: `{"item_id": 7,
//! "tokens": [1, 2, 3]}`, optionally with a `"text"` field.  With the
//! whitespace tokenizer, records carry `"text"` instead and ids are assigned
//! to whitespace-separated words by sorted order across the whole corpus.
//! Cloze records either carry explicit token spans (`prefix`, `suffix`,
//! `answer`, `candidates`) or — whitespace tokenizer only — a `text` with a
//! single `[MASK]` marker plus string `answer`/`candidates`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    ClozeFact, CorpusError, CorpusParts, LanguageSpec, ParallelCorpus, ResourceLevel, Sequence,
    Split,
};
use crate::kv;

/// Name of the manifest file inside a corpus directory.
pub const MANIFEST_NAME: &str = "corpus.toml";

/// Marker splitting text-form cloze sentences into prefix and suffix.
const MASK_MARKER: &str = "[MASK]";

// ── Tokenizer ───────────────────────────────────────────────────────────────

/// How data files map to token ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizerKind {
    /// Records carry explicit `tokens` arrays.
    Ids,
    /// Records carry `text`; each distinct whitespace-separated word becomes
    /// one token id, assigned in sorted word order.
    Whitespace,
}

impl std::str::FromStr for TokenizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ids" => Ok(TokenizerKind::Ids),
            "whitespace" => Ok(TokenizerKind::Whitespace),
            other => Err(format!("unknown tokenizer `{other}` (expected ids|whitespace)")),
        }
    }
}

// ── Raw records ─────────────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct SeqRecord {
    item_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClozeTokenRecord {
    item_id: u64,
    prefix: Vec<usize>,
    suffix: Vec<usize>,
    answer: Vec<usize>,
    candidates: Vec<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ClozeRecord {
    Tokens(ClozeTokenRecord),
    Text { item_id: u64, text: String, answer: String, candidates: Vec<String> },
}

/// A data file parsed into per-line records.
struct RawFile<T> {
    path: String,
    records: Vec<(usize, T)>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<RawFile<T>, CorpusError> {
    let shown = path.display().to_string();
    let body = std::fs::read_to_string(path)
        .map_err(|source| CorpusError::File { path: shown.clone(), source })?;
    let mut records = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| CorpusError::Record {
            path: shown.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push((idx + 1, record));
    }
    Ok(RawFile { path: shown, records })
}

// ── Manifest model ──────────────────────────────────────────────────────────

struct ManifestLang {
    spec: LanguageSpec,
    split_paths: [PathBuf; 4],
    pretrain: Option<PathBuf>,
    cloze_forget: Option<PathBuf>,
    cloze_test: Option<PathBuf>,
}

struct Manifest {
    vocab_size: usize,
    pivot: usize,
    langs: Vec<ManifestLang>,
    declared_sizes: Option<[usize; 4]>,
}

fn manifest_err(path: &Path, line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Manifest {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_manifest(dir: &Path) -> Result<Manifest, CorpusError> {
    let path = dir.join(MANIFEST_NAME);
    let body = std::fs::read_to_string(&path)
        .map_err(|source| CorpusError::File { path: path.display().to_string(), source })?;
    let file = kv::parse(&body).map_err(|(line, msg)| manifest_err(&path, line, msg))?;

    let root_req = |key: &str| -> Result<&str, CorpusError> {
        file.root_value(key)
            .ok_or_else(|| manifest_err(&path, 0, format!("missing root key `{key}`")))
    };
    let vocab_size: usize = kv::parse_value("vocab_size", root_req("vocab_size")?)
        .map_err(|m| manifest_err(&path, 0, m))?;
    let codes = kv::split_list(root_req("languages")?);
    if codes.is_empty() {
        return Err(manifest_err(&path, 0, "`languages` lists no language codes"));
    }
    let pivot_code = file.root_value("pivot").unwrap_or(&codes[0]).to_string();
    let pivot = codes
        .iter()
        .position(|c| *c == pivot_code)
        .ok_or_else(|| manifest_err(&path, 0, format!("pivot `{pivot_code}` not in languages")))?;

    let mut langs = Vec::with_capacity(codes.len());
    for code in &codes {
        let section_name = format!("lang.{code}");
        let section = file
            .sections
            .iter()
            .find(|s| s.name == section_name)
            .ok_or_else(|| manifest_err(&path, 0, format!("missing section [{section_name}]")))?;
        let level: ResourceLevel = section
            .value("level")
            .ok_or_else(|| manifest_err(&path, section.line, "missing `level`"))?
            .parse()
            .map_err(|m: String| manifest_err(&path, section.line, m))?;
        let file_of = |key: &str| -> Result<PathBuf, CorpusError> {
            section
                .value(key)
                .map(|rel| dir.join(rel))
                .ok_or_else(|| manifest_err(&path, section.line, format!("missing `{key}` file")))
        };
        let opt_file = |key: &str| section.value(key).map(|rel| dir.join(rel));
        langs.push(ManifestLang {
            spec: LanguageSpec { code: code.clone(), level },
            split_paths: [
                file_of("forget")?,
                file_of("retain")?,
                file_of("validation")?,
                file_of("test")?,
            ],
            pretrain: opt_file("pretrain"),
            cloze_forget: opt_file("cloze_forget"),
            cloze_test: opt_file("cloze_test"),
        });
    }

    // A [lang.*] section for an undeclared code is almost certainly a typo,
    // and silently ignoring it would drop data on the floor.
    for (code, section) in file.sections_with_prefix("lang") {
        if !codes.iter().any(|c| c == code) {
            return Err(manifest_err(
                &path,
                section.line,
                format!("section [lang.{code}] has no matching entry in `languages`"),
            ));
        }
    }

    let declared_sizes = match file.sections.iter().find(|s| s.name == "splits") {
        None => None,
        Some(section) => {
            let mut sizes = [0usize; 4];
            for (i, split) in Split::ALL.iter().enumerate() {
                let raw = section.value(split.as_str()).ok_or_else(|| {
                    manifest_err(&path, section.line, format!("missing `{split}` size"))
                })?;
                sizes[i] = kv::parse_value(split.as_str(), raw)
                    .map_err(|m| manifest_err(&path, section.line, m))?;
            }
            Some(sizes)
        }
    };

    Ok(Manifest { vocab_size, pivot, langs, declared_sizes })
}

// ── Loading ─────────────────────────────────────────────────────────────────

/// Loads a corpus directory written by [`write_corpus`] or assembled by hand.
pub fn load_parallel_corpus(
    dir: &Path,
    tokenizer: TokenizerKind,
) -> Result<ParallelCorpus, CorpusError> {
    let manifest = parse_manifest(dir)?;
    let n_langs = manifest.langs.len();

    // Read every file up front so the whitespace tokenizer can see the whole
    // corpus before ids are assigned.
    let mut seq_files: Vec<[RawFile<SeqRecord>; 4]> = Vec::with_capacity(n_langs);
    let mut pretrain_files: Vec<Option<RawFile<SeqRecord>>> = Vec::with_capacity(n_langs);
    let mut cloze_files: Vec<[Option<RawFile<ClozeRecord>>; 2]> = Vec::with_capacity(n_langs);
    for lang in &manifest.langs {
        seq_files.push([
            read_jsonl(&lang.split_paths[0])?,
            read_jsonl(&lang.split_paths[1])?,
            read_jsonl(&lang.split_paths[2])?,
            read_jsonl(&lang.split_paths[3])?,
        ]);
        pretrain_files.push(lang.pretrain.as_deref().map(read_jsonl).transpose()?);
        cloze_files.push([
            lang.cloze_forget.as_deref().map(read_jsonl).transpose()?,
            lang.cloze_test.as_deref().map(read_jsonl).transpose()?,
        ]);
    }

    let vocab = match tokenizer {
        TokenizerKind::Ids => None,
        TokenizerKind::Whitespace => {
            let mut words = BTreeSet::new();
            let mut add_text = |text: &str| {
                for w in text.split_whitespace() {
                    words.insert(w.to_string());
                }
            };
            for f in seq_files.iter().flatten().chain(pretrain_files.iter().flatten()) {
                for (_, r) in &f.records {
                    if let Some(t) = &r.text {
                        add_text(t);
                    }
                }
            }
            for pair in &cloze_files {
                for f in pair.iter().flatten() {
                    for (_, r) in &f.records {
                        if let ClozeRecord::Text { text, answer, candidates, .. } = r {
                            add_text(text);
                            add_text(answer);
                            for c in candidates {
                                add_text(c);
                            }
                        }
                    }
                }
            }
            let map: BTreeMap<String, usize> =
                words.into_iter().enumerate().map(|(i, w)| (w, i)).collect();
            if map.len() > manifest.vocab_size {
                return Err(manifest_err(
                    &dir.join(MANIFEST_NAME),
                    0,
                    format!(
                        "vocab_size {} is smaller than the {} distinct words in the corpus",
                        manifest.vocab_size,
                        map.len()
                    ),
                ));
            }
            Some(map)
        }
    };

    let encode = |text: &str| -> Vec<usize> {
        let map = vocab.as_ref().expect("encode only called in whitespace mode");
        text.split_whitespace().map(|w| map[w]).collect()
    };

    let seq_of = |file: &RawFile<SeqRecord>,
                  line: usize,
                  r: &SeqRecord,
                  code: &str|
     -> Result<Sequence, CorpusError> {
        let tokens = match (tokenizer, &r.tokens, &r.text) {
            (TokenizerKind::Ids, Some(t), _) => t.clone(),
            (TokenizerKind::Ids, None, _) => {
                return Err(CorpusError::Record {
                    path: file.path.clone(),
                    line,
                    message: "record has no `tokens` (ids tokenizer)".into(),
                })
            }
            (TokenizerKind::Whitespace, None, Some(t)) => encode(t),
            (TokenizerKind::Whitespace, Some(_), _) => {
                return Err(CorpusError::Record {
                    path: file.path.clone(),
                    line,
                    message: "record has `tokens` but the whitespace tokenizer expects `text` only"
                        .into(),
                })
            }
            (TokenizerKind::Whitespace, None, None) => {
                return Err(CorpusError::Record {
                    path: file.path.clone(),
                    line,
                    message: "record has no `text` (whitespace tokenizer)".into(),
                })
            }
        };
        Ok(Sequence { item_id: r.item_id, lang: code.to_string(), tokens, text: r.text.clone() })
    };

    let cloze_of = |file: &RawFile<ClozeRecord>,
                    line: usize,
                    r: &ClozeRecord,
                    code: &str|
     -> Result<ClozeFact, CorpusError> {
        match r {
            ClozeRecord::Tokens(t) => Ok(ClozeFact {
                item_id: t.item_id,
                lang: code.to_string(),
                prefix: t.prefix.clone(),
                suffix: t.suffix.clone(),
                gold: t.answer.clone(),
                candidates: t.candidates.clone(),
            }),
            ClozeRecord::Text { item_id, text, answer, candidates } => {
                if tokenizer != TokenizerKind::Whitespace {
                    return Err(CorpusError::Record {
                        path: file.path.clone(),
                        line,
                        message: "text-form cloze records need the whitespace tokenizer".into(),
                    });
                }
                let parts: Vec<&str> = text.split(MASK_MARKER).collect();
                if parts.len() != 2 {
                    return Err(CorpusError::Record {
                        path: file.path.clone(),
                        line,
                        message: format!(
                            "cloze text must contain `{MASK_MARKER}` exactly once, found {}",
                            parts.len().saturating_sub(1)
                        ),
                    });
                }
                Ok(ClozeFact {
                    item_id: *item_id,
                    lang: code.to_string(),
                    prefix: encode(parts[0]),
                    suffix: encode(parts[1]),
                    gold: encode(answer),
                    candidates: candidates.iter().map(|c| encode(c)).collect(),
                })
            }
        }
    };

    let mut parts = CorpusParts {
        languages: manifest.langs.iter().map(|l| l.spec.clone()).collect(),
        pivot: manifest.pivot,
        vocab_size: manifest.vocab_size,
        ..CorpusParts::default()
    };

    for (li, lang) in manifest.langs.iter().enumerate() {
        let code = &lang.spec.code;
        let mut splits: Vec<Vec<Sequence>> = Vec::with_capacity(4);
        for file in &seq_files[li] {
            let mut seqs = Vec::with_capacity(file.records.len());
            for (line, r) in &file.records {
                seqs.push(seq_of(file, *line, r, code)?);
            }
            splits.push(seqs);
        }
        let [f, r, v, t] = <[Vec<Sequence>; 4]>::try_from(splits).expect("four splits");
        parts.forget.push(f);
        parts.retain.push(r);
        parts.validation.push(v);
        parts.test.push(t);

        let mut pre = Vec::new();
        if let Some(file) = &pretrain_files[li] {
            for (line, rec) in &file.records {
                pre.push(seq_of(file, *line, rec, code)?);
            }
        }
        parts.pretrain.push(pre);

        for (slot, bucket) in
            [&mut parts.cloze_forget, &mut parts.cloze_test].into_iter().enumerate()
        {
            if let Some(file) = &cloze_files[li][slot] {
                let mut probes = Vec::with_capacity(file.records.len());
                for (line, rec) in &file.records {
                    probes.push(cloze_of(file, *line, rec, code)?);
                }
                bucket.push(probes);
            }
        }
    }

    // If any language declared a cloze file, all must (alignment check in
    // `ParallelCorpus::new` requires a full language grid).
    for (name, bucket) in
        [("cloze_forget", &parts.cloze_forget), ("cloze_test", &parts.cloze_test)]
    {
        if !bucket.is_empty() && bucket.len() != n_langs {
            return Err(CorpusError::Language(format!(
                "{name} files are declared for {} of {n_langs} languages; declare all or none",
                bucket.len()
            )));
        }
    }

    if let Some(sizes) = manifest.declared_sizes {
        for (i, split) in Split::ALL.iter().enumerate() {
            let buckets = [&parts.forget, &parts.retain, &parts.validation, &parts.test][i];
            for (li, lang_seqs) in buckets.iter().enumerate() {
                if lang_seqs.len() != sizes[i] {
                    return Err(CorpusError::SizeMismatch {
                        split: *split,
                        lang: manifest.langs[li].spec.code.clone(),
                        declared: sizes[i],
                        got: lang_seqs.len(),
                    });
                }
            }
        }
    }

    ParallelCorpus::new(parts)
}

// ── Writing ─────────────────────────────────────────────────────────────────

fn write_file(path: &Path, body: &str) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|source| CorpusError::File { path: parent.display().to_string(), source })?;
    }
    std::fs::write(path, body)
        .map_err(|source| CorpusError::File { path: path.display().to_string(), source })
}

fn render_seqs(seqs: &[Sequence]) -> String {
    let mut out = String::new();
    for s in seqs {
        let record = SeqRecord {
            item_id: s.item_id,
            tokens: Some(s.tokens.clone()),
            text: s.text.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("sequence record serializes"));
        out.push('\n');
    }
    out
}

fn render_cloze(probes: &[ClozeFact]) -> String {
    let mut out = String::new();
    for p in probes {
        let record = ClozeTokenRecord {
            item_id: p.item_id,
            prefix: p.prefix.clone(),
            suffix: p.suffix.clone(),
            answer: p.gold.clone(),
            candidates: p.candidates.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("cloze record serializes"));
        out.push('\n');
    }
    out
}

/// Writes `corpus` into `dir` as a manifest plus token-form JSONL files; the
/// result loads back identically with the ids tokenizer.
pub fn write_corpus(corpus: &ParallelCorpus, dir: &Path) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir)
        .map_err(|source| CorpusError::File { path: dir.display().to_string(), source })?;

    let mut manifest = String::new();
    manifest.push_str(&format!("vocab_size = {}\n", corpus.vocab_size()));
    let codes: Vec<&str> = corpus.languages().iter().map(|l| l.code.as_str()).collect();
    manifest.push_str(&format!("languages = {}\n", codes.join(", ")));
    manifest.push_str(&format!("pivot = {}\n", corpus.pivot_code()));

    manifest.push_str("\n[splits]\n");
    for split in Split::ALL {
        manifest.push_str(&format!("{split} = {}\n", corpus.split_len(split)));
    }

    for (li, lang) in corpus.languages().iter().enumerate() {
        let code = &lang.code;
        manifest.push_str(&format!("\n[lang.{code}]\nlevel = {}\n", lang.level));
        for split in Split::ALL {
            let rel = format!("{code}/{split}.jsonl");
            manifest.push_str(&format!("{split} = {rel}\n"));
            write_file(&dir.join(&rel), &render_seqs(&corpus.split(split)[li]))?;
        }
        if !corpus.pretrain().is_empty() {
            let rel = format!("{code}/pretrain.jsonl");
            manifest.push_str(&format!("pretrain = {rel}\n"));
            write_file(&dir.join(&rel), &render_seqs(&corpus.pretrain()[li]))?;
        }
        for (name, split) in [("cloze_forget", Split::Forget), ("cloze_test", Split::Test)] {
            let probes = corpus.cloze(split);
            if !probes.is_empty() {
                let rel = format!("{code}/{name}.jsonl");
                manifest.push_str(&format!("{name} = {rel}\n"));
                write_file(&dir.join(&rel), &render_cloze(&probes[li]))?;
            }
        }
    }

    write_file(&dir.join(MANIFEST_NAME), &manifest)
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SynthSpec};

    #[test]
    fn synthetic_corpus_round_trips_through_disk() {
        let corpus = generate_synthetic_corpus(&SynthSpec::default(), 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus, dir.path()).unwrap();
        let loaded = load_parallel_corpus(dir.path(), TokenizerKind::Ids).unwrap();
        assert_eq!(corpus, loaded);
    }

    #[test]
    fn missing_manifest_reports_file_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_parallel_corpus(dir.path(), TokenizerKind::Ids).unwrap_err();
        assert!(matches!(err, CorpusError::File { .. }));
    }

    #[test]
    fn declared_split_size_is_verified() {
        let corpus = generate_synthetic_corpus(&SynthSpec::default(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus, dir.path()).unwrap();
        // Drop one line from one language's forget file.
        let path = dir.path().join("fr/forget.jsonl");
        let body = std::fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = body.lines().skip(1).collect();
        std::fs::write(&path, truncated.join("\n")).unwrap();
        let err = load_parallel_corpus(dir.path(), TokenizerKind::Ids).unwrap_err();
        match err {
            CorpusError::SizeMismatch { split, lang, declared, got } => {
                assert_eq!(split, Split::Forget);
                assert_eq!(lang, "fr");
                assert_eq!(declared, 32);
                assert_eq!(got, 31);
            }
            other => panic!("expected size mismatch, got {other}"),
        }
    }

    #[test]
    fn malformed_json_names_file_and_line() {
        let corpus = generate_synthetic_corpus(&SynthSpec::default(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&corpus, dir.path()).unwrap();
        let path = dir.path().join("en/retain.jsonl");
        let mut body = std::fs::read_to_string(&path).unwrap();
        body.push_str("{not json\n");
        std::fs::write(&path, body).unwrap();
        let err = load_parallel_corpus(dir.path(), TokenizerKind::Ids).unwrap_err();
        match err {
            CorpusError::Record { path, line, .. } => {
                assert!(path.ends_with("retain.jsonl"));
                assert_eq!(line, 33);
            }
            other => panic!("expected record error, got {other}"),
        }
    }

    #[test]
    fn whitespace_tokenizer_loads_text_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = "\
vocab_size = 32
languages = aa, bb

[lang.aa]
level = high
forget = aa_forget.jsonl
retain = aa_retain.jsonl
validation = aa_validation.jsonl
test = aa_test.jsonl
cloze_forget = aa_cloze.jsonl

[lang.bb]
level = low
forget = bb_forget.jsonl
retain = bb_retain.jsonl
validation = bb_validation.jsonl
test = bb_test.jsonl
cloze_forget = bb_cloze.jsonl
";
        std::fs::write(dir.path().join(MANIFEST_NAME), manifest).unwrap();
        let files = [
            ("aa_forget.jsonl", r#"{"item_id": 0, "text": "the cat sleeps"}"#),
            ("aa_retain.jsonl", r#"{"item_id": 1, "text": "the dog runs"}"#),
            ("aa_validation.jsonl", r#"{"item_id": 2, "text": "a bird sings"}"#),
            ("aa_test.jsonl", r#"{"item_id": 3, "text": "the fish swims"}"#),
            (
                "aa_cloze.jsonl",
                r#"{"item_id": 0, "text": "the [MASK] sleeps", "answer": "cat", "candidates": ["cat", "dog"]}"#,
            ),
            ("bb_forget.jsonl", r#"{"item_id": 0, "text": "le chat dort"}"#),
            ("bb_retain.jsonl", r#"{"item_id": 1, "text": "le chien court"}"#),
            ("bb_validation.jsonl", r#"{"item_id": 2, "text": "un oiseau chante"}"#),
            ("bb_test.jsonl", r#"{"item_id": 3, "text": "le poisson nage"}"#),
            (
                "bb_cloze.jsonl",
                r#"{"item_id": 0, "text": "le [MASK] dort", "answer": "chat", "candidates": ["chat", "chien"]}"#,
            ),
        ];
        for (name, body) in files {
            std::fs::write(dir.path().join(name), format!("{body}\n")).unwrap();
        }
        let corpus = load_parallel_corpus(dir.path(), TokenizerKind::Whitespace).unwrap();
        assert_eq!(corpus.languages().len(), 2);
        // Word ids follow sorted order over the whole corpus vocabulary.
        let forget = &corpus.split(Split::Forget)[0][0];
        assert_eq!(forget.tokens.len(), 3);
        assert_eq!(forget.text.as_deref(), Some("the cat sleeps"));
        // Same word, same id: "the" appears in several sentences.
        let retain = &corpus.split(Split::Retain)[0][0];
        assert_eq!(forget.tokens[0], retain.tokens[0]);
        // Cloze probes reassemble the forget sentence.
        let probe = &corpus.cloze(Split::Forget)[0][0];
        assert_eq!(probe.sentence_with(&probe.gold), forget.tokens);
    }

    #[test]
    fn whitespace_mode_rejects_token_records() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = "\
vocab_size = 8
languages = aa

[lang.aa]
level = high
forget = f.jsonl
retain = r.jsonl
validation = v.jsonl
test = t.jsonl
";
        std::fs::write(dir.path().join(MANIFEST_NAME), manifest).unwrap();
        std::fs::write(dir.path().join("f.jsonl"), "{\"item_id\": 0, \"tokens\": [1, 2]}\n").unwrap();
        for name in ["r.jsonl", "v.jsonl", "t.jsonl"] {
            std::fs::write(dir.path().join(name), "{\"item_id\": 1, \"text\": \"a b\"}\n").unwrap();
        }
        let err = load_parallel_corpus(dir.path(), TokenizerKind::Whitespace).unwrap_err();
        assert!(matches!(err, CorpusError::Record { .. }));
    }

    #[test]
    fn vocab_size_must_cover_distinct_words() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = "\
vocab_size = 2
languages = aa

[lang.aa]
level = high
forget = f.jsonl
retain = r.jsonl
validation = v.jsonl
test = t.jsonl
";
        std::fs::write(dir.path().join(MANIFEST_NAME), manifest).unwrap();
        std::fs::write(dir.path().join("f.jsonl"), "{\"item_id\": 0, \"text\": \"a b c\"}\n")
            .unwrap();
        for (i, name) in ["r.jsonl", "v.jsonl", "t.jsonl"].iter().enumerate() {
            std::fs::write(
                dir.path().join(name),
                format!("{{\"item_id\": {}, \"text\": \"a b\"}}\n", i + 1),
            )
            .unwrap();
        }
        let err = load_parallel_corpus(dir.path(), TokenizerKind::Whitespace).unwrap_err();
        assert!(matches!(err, CorpusError::Manifest { .. }));
    }
}
