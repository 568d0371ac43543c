//! Parallel multilingual corpora: aligned splits, cloze probes, batch
//! sampling, synthesis, and disk I/O.
//!
//! A [`ParallelCorpus`] holds the same set of items expressed in several
//! languages.  The four aligned splits (forget / retain / validation / test)
//! contain one sequence per `(item, language)` pair, matched by `item_id`;
//! an optional unaligned pretraining pool provides extra monolingual text
//! with sizes that differ by resource level.  Cloze probes attach a
//! fill-in-the-blank question with candidate answers to forget and test
//! items so downstream metrics can rank candidates by sentence likelihood.
//!
//! Invariants are enforced at construction time and again after any
//! transformation: aligned splits carry identical `item_id` multisets in
//! every language, forget and retain never share an item, every token id is
//! below the vocabulary size, and every sequence is long enough to score at
//! least one next-token prediction.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

mod load;
mod synth;

pub use load::{load_parallel_corpus, write_corpus, TokenizerKind};
pub use synth::{generate_synthetic_corpus, SynthSpec};

// ── Errors ──────────────────────────────────────────────────────────────────

/// Failures in corpus construction, validation, sampling, or I/O.
#[derive(Debug)]
pub enum CorpusError {
    /// A manifest file could not be parsed or is missing required keys.
    Manifest { path: String, line: usize, message: String },
    /// A data file named by the manifest could not be found or read.
    File { path: String, source: std::io::Error },
    /// A record inside a data file is malformed.
    Record { path: String, line: usize, message: String },
    /// The declared languages are invalid (empty, duplicated, unknown pivot…).
    Language(String),
    /// An aligned split has different item sets across languages.
    Alignment { split: Split, lang: String, detail: String },
    /// A split's size disagrees with the size the manifest declares.
    SizeMismatch { split: Split, lang: String, declared: usize, got: usize },
    /// An item appears in both the forget and retain splits.
    Overlap { item_id: u64 },
    /// A token id is outside the vocabulary.
    Token { item_id: u64, token: usize, vocab_size: usize },
    /// A sequence is too short to score a single next-token prediction.
    ShortSequence { item_id: u64, len: usize },
    /// A cloze probe is malformed (gold missing from candidates, …).
    Cloze { item_id: u64, message: String },
    /// A sampler or subset request asks for more items than exist.
    Capacity { what: String, requested: usize, available: usize },
    /// Synthetic generation could not satisfy the spec (vocab too small,
    /// not enough distinct sentences, …).
    Generation(String),
}

impl std::fmt::Display for CorpusError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CorpusError::Manifest { path, line, message } => {
                write!(f, "manifest {path}:{line}: {message}")
            }
            CorpusError::File { path, source } => write!(f, "cannot read {path}: {source}"),
            CorpusError::Record { path, line, message } => {
                write!(f, "{path}:{line}: {message}")
            }
            CorpusError::Language(msg) => write!(f, "language set: {msg}"),
            CorpusError::Alignment { split, lang, detail } => {
                write!(f, "split {split} is misaligned in language {lang}: {detail}")
            }
            CorpusError::SizeMismatch { split, lang, declared, got } => write!(
                f,
                "split {split} in language {lang} has {got} items but the manifest declares {declared}"
            ),
            CorpusError::Overlap { item_id } => {
                write!(f, "item {item_id} appears in both forget and retain splits")
            }
            CorpusError::Token { item_id, token, vocab_size } => write!(
                f,
                "item {item_id} contains token {token} outside vocabulary of size {vocab_size}"
            ),
            CorpusError::ShortSequence { item_id, len } => write!(
                f,
                "item {item_id} has {len} token(s); at least 2 are needed to score a prediction"
            ),
            CorpusError::Cloze { item_id, message } => {
                write!(f, "cloze probe for item {item_id}: {message}")
            }
            CorpusError::Capacity { what, requested, available } => {
                write!(f, "{what}: requested {requested} but only {available} available")
            }
            CorpusError::Generation(msg) => write!(f, "corpus generation: {msg}"),
        }
    }
}

impl std::error::Error for CorpusError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CorpusError::File { source, .. } => Some(source),
            _ => None,
        }
    }
}

// ── Basic vocabulary of types ───────────────────────────────────────────────

/// Declares the implementation of Display in terms of `as_str`.
macro_rules! fmt_as_str {
    () => {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            f.write_str(self.as_str())
        }
    };
}

/// The four aligned evaluation splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Forget,
    Retain,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Forget, Split::Retain, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Forget => "forget",
            Split::Retain => "retain",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fmt_as_str!();
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forget" => Ok(Split::Forget),
            "retain" => Ok(Split::Retain),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// How much monolingual data a language contributes to pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ResourceLevel {
    High,
    Mid,
    Low,
}

impl ResourceLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceLevel::High => "high",
            ResourceLevel::Mid => "mid",
            ResourceLevel::Low => "low",
        }
    }
}

impl std::fmt::Display for ResourceLevel {
    fmt_as_str!();
}

impl std::str::FromStr for ResourceLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "high" => Ok(ResourceLevel::High),
            "mid" => Ok(ResourceLevel::Mid),
            "low" => Ok(ResourceLevel::Low),
            other => Err(format!("unknown resource level `{other}`")),
        }
    }
}

/// Reporting group a language belongs to: the pivot stands alone, all other
/// languages group by resource level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LangGroup {
    Pivot,
    HighSrc,
    MidSrc,
    LowSrc,
}

impl LangGroup {
    pub const ALL: [LangGroup; 4] =
        [LangGroup::Pivot, LangGroup::HighSrc, LangGroup::MidSrc, LangGroup::LowSrc];

    pub fn as_str(self) -> &'static str {
        match self {
            LangGroup::Pivot => "en",
            LangGroup::HighSrc => "high-src",
            LangGroup::MidSrc => "mid-src",
            LangGroup::LowSrc => "low-src",
        }
    }
}

impl std::fmt::Display for LangGroup {
    fmt_as_str!();
}

/// One declared language: its code and pretraining resource level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageSpec {
    pub code: String,
    pub level: ResourceLevel,
}

impl LanguageSpec {
    pub fn new(code: &str, level: ResourceLevel) -> Self {
        LanguageSpec { code: code.to_string(), level }
    }
}

/// One tokenized sentence in one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    /// Cross-lingual identity: translations of the same item share this id.
    pub item_id: u64,
    /// Language code the sequence is written in.
    pub lang: String,
    /// Token ids, already within the model vocabulary.
    pub tokens: Vec<usize>,
    /// Optional surface form, kept for inspection only.
    pub text: Option<String>,
}

/// A fill-in-the-blank probe: `prefix ++ answer ++ suffix` forms a full
/// sentence, and each candidate answer can be substituted into the blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClozeFact {
    pub item_id: u64,
    pub lang: String,
    pub prefix: Vec<usize>,
    pub suffix: Vec<usize>,
    /// The correct answer span.
    pub gold: Vec<usize>,
    /// All candidate answer spans; contains `gold`.
    pub candidates: Vec<Vec<usize>>,
}

impl ClozeFact {
    /// The full sentence with `candidate` substituted into the blank.
    pub fn sentence_with(&self, candidate: &[usize]) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.prefix.len() + candidate.len() + self.suffix.len());
        s.extend_from_slice(&self.prefix);
        s.extend_from_slice(candidate);
        s.extend_from_slice(&self.suffix);
        s
    }

    /// Index of the gold span inside `candidates`.
    pub fn gold_index(&self) -> Option<usize> {
        self.candidates.iter().position(|c| c == &self.gold)
    }
}

// ── ParallelCorpus ──────────────────────────────────────────────────────────

/// Everything needed to build a corpus; [`ParallelCorpus::new`] validates it.
///
/// All per-language vectors are indexed in the order of `languages`.
#[derive(Debug, Clone, Default)]
pub struct CorpusParts {
    pub languages: Vec<LanguageSpec>,
    /// Index into `languages` of the pivot language.
    pub pivot: usize,
    pub vocab_size: usize,
    pub forget: Vec<Vec<Sequence>>,
    pub retain: Vec<Vec<Sequence>>,
    pub validation: Vec<Vec<Sequence>>,
    pub test: Vec<Vec<Sequence>>,
    /// Unaligned pretraining pool; may be empty, sizes may differ by language.
    pub pretrain: Vec<Vec<Sequence>>,
    /// Cloze probes for forget items; empty when the corpus carries none.
    pub cloze_forget: Vec<Vec<ClozeFact>>,
    /// Cloze probes for test items; empty when the corpus carries none.
    pub cloze_test: Vec<Vec<ClozeFact>>,
}

/// A validated multilingual corpus with aligned splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    languages: Vec<LanguageSpec>,
    pivot: usize,
    vocab_size: usize,
    forget: Vec<Vec<Sequence>>,
    retain: Vec<Vec<Sequence>>,
    validation: Vec<Vec<Sequence>>,
    test: Vec<Vec<Sequence>>,
    pretrain: Vec<Vec<Sequence>>,
    cloze_forget: Vec<Vec<ClozeFact>>,
    cloze_test: Vec<Vec<ClozeFact>>,
}

impl ParallelCorpus {
    /// Validates `parts` and freezes them into a corpus.
    pub fn new(parts: CorpusParts) -> Result<Self, CorpusError> {
        let CorpusParts {
            languages,
            pivot,
            vocab_size,
            forget,
            retain,
            validation,
            test,
            pretrain,
            cloze_forget,
            cloze_test,
        } = parts;

        if languages.is_empty() {
            return Err(CorpusError::Language("no languages declared".into()));
        }
        let mut seen = HashSet::new();
        for l in &languages {
            if l.code.is_empty() {
                return Err(CorpusError::Language("empty language code".into()));
            }
            if !seen.insert(l.code.clone()) {
                return Err(CorpusError::Language(format!("duplicate language `{}`", l.code)));
            }
        }
        if pivot >= languages.len() {
            return Err(CorpusError::Language(format!(
                "pivot index {pivot} out of range for {} languages",
                languages.len()
            )));
        }
        if vocab_size == 0 {
            return Err(CorpusError::Language("vocabulary size must be positive".into()));
        }

        let corpus = ParallelCorpus {
            languages,
            pivot,
            vocab_size,
            forget,
            retain,
            validation,
            test,
            pretrain,
            cloze_forget,
            cloze_test,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    /// Re-checks every structural invariant.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let n_langs = self.languages.len();

        for (split, seqs) in Split::ALL.iter().zip([
            &self.forget,
            &self.retain,
            &self.validation,
            &self.test,
        ]) {
            if seqs.len() != n_langs {
                return Err(CorpusError::Alignment {
                    split: *split,
                    lang: String::new(),
                    detail: format!("{} language lists for {} languages", seqs.len(), n_langs),
                });
            }
            // Alignment: identical item_id multisets across languages.
            let reference = sorted_ids(&seqs[0]);
            for (li, lang_seqs) in seqs.iter().enumerate() {
                let ids = sorted_ids(lang_seqs);
                if ids != reference {
                    let detail = first_multiset_diff(&reference, &ids);
                    return Err(CorpusError::Alignment {
                        split: *split,
                        lang: self.languages[li].code.clone(),
                        detail,
                    });
                }
                for seq in lang_seqs {
                    self.check_sequence(seq, li)?;
                }
            }
        }

        if self.pretrain.len() != n_langs && !self.pretrain.is_empty() {
            return Err(CorpusError::Language(format!(
                "pretrain pool has {} language lists for {} languages",
                self.pretrain.len(),
                n_langs
            )));
        }
        for (li, lang_seqs) in self.pretrain.iter().enumerate() {
            for seq in lang_seqs {
                self.check_sequence(seq, li)?;
            }
        }

        // Forget and retain must not share items.
        let forget_ids: HashSet<u64> = self.forget[0].iter().map(|s| s.item_id).collect();
        for seq in &self.retain[0] {
            if forget_ids.contains(&seq.item_id) {
                return Err(CorpusError::Overlap { item_id: seq.item_id });
            }
        }

        for (split, probes) in [
            (Split::Forget, &self.cloze_forget),
            (Split::Test, &self.cloze_test),
        ] {
            if probes.is_empty() {
                continue;
            }
            if probes.len() != n_langs {
                return Err(CorpusError::Language(format!(
                    "cloze probes for {split} have {} language lists for {n_langs} languages",
                    probes.len()
                )));
            }
            let split_ids: HashSet<u64> =
                self.split(split)[0].iter().map(|s| s.item_id).collect();
            let reference: Vec<u64> = {
                let mut ids: Vec<u64> = probes[0].iter().map(|c| c.item_id).collect();
                ids.sort_unstable();
                ids
            };
            for (li, lang_probes) in probes.iter().enumerate() {
                let mut ids: Vec<u64> = lang_probes.iter().map(|c| c.item_id).collect();
                ids.sort_unstable();
                if ids != reference {
                    return Err(CorpusError::Alignment {
                        split,
                        lang: self.languages[li].code.clone(),
                        detail: "cloze probes cover different items across languages".into(),
                    });
                }
                for probe in lang_probes {
                    self.check_cloze(probe, li, &split_ids)?;
                }
            }
        }

        Ok(())
    }

    fn check_sequence(&self, seq: &Sequence, lang_index: usize) -> Result<(), CorpusError> {
        if seq.tokens.len() < 2 {
            return Err(CorpusError::ShortSequence { item_id: seq.item_id, len: seq.tokens.len() });
        }
        for &t in &seq.tokens {
            if t >= self.vocab_size {
                return Err(CorpusError::Token {
                    item_id: seq.item_id,
                    token: t,
                    vocab_size: self.vocab_size,
                });
            }
        }
        let expected = &self.languages[lang_index].code;
        if &seq.lang != expected {
            return Err(CorpusError::Alignment {
                split: Split::Forget,
                lang: expected.clone(),
                detail: format!(
                    "item {} is tagged `{}` but stored under `{}`",
                    seq.item_id, seq.lang, expected
                ),
            });
        }
        Ok(())
    }

    fn check_cloze(
        &self,
        probe: &ClozeFact,
        lang_index: usize,
        split_ids: &HashSet<u64>,
    ) -> Result<(), CorpusError> {
        let id = probe.item_id;
        if !split_ids.contains(&id) {
            return Err(CorpusError::Cloze {
                item_id: id,
                message: "no sequence with this item id in the probed split".into(),
            });
        }
        if probe.lang != self.languages[lang_index].code {
            return Err(CorpusError::Cloze {
                item_id: id,
                message: format!(
                    "tagged `{}` but stored under `{}`",
                    probe.lang, self.languages[lang_index].code
                ),
            });
        }
        if probe.gold.is_empty() {
            return Err(CorpusError::Cloze { item_id: id, message: "empty gold span".into() });
        }
        if probe.candidates.len() < 2 {
            return Err(CorpusError::Cloze {
                item_id: id,
                message: format!("{} candidate(s); at least 2 needed", probe.candidates.len()),
            });
        }
        if probe.gold_index().is_none() {
            return Err(CorpusError::Cloze {
                item_id: id,
                message: "gold span missing from candidates".into(),
            });
        }
        for span in std::iter::once(&probe.prefix)
            .chain(std::iter::once(&probe.suffix))
            .chain(std::iter::once(&probe.gold))
            .chain(probe.candidates.iter())
        {
            for &t in span {
                if t >= self.vocab_size {
                    return Err(CorpusError::Token { item_id: id, token: t, vocab_size: self.vocab_size });
                }
            }
        }
        for c in &probe.candidates {
            if c.is_empty() {
                return Err(CorpusError::Cloze { item_id: id, message: "empty candidate span".into() });
            }
            if self.sentence_len(probe, c) < 2 {
                return Err(CorpusError::Cloze {
                    item_id: id,
                    message: "substituted sentence shorter than 2 tokens".into(),
                });
            }
        }
        Ok(())
    }

    fn sentence_len(&self, probe: &ClozeFact, candidate: &[usize]) -> usize {
        probe.prefix.len() + candidate.len() + probe.suffix.len()
    }

    // ── accessors ──

    pub fn languages(&self) -> &[LanguageSpec] {
        &self.languages
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn pivot_index(&self) -> usize {
        self.pivot
    }

    pub fn pivot_code(&self) -> &str {
        &self.languages[self.pivot].code
    }

    /// Index of a language code, if declared.
    pub fn lang_index(&self, code: &str) -> Option<usize> {
        self.languages.iter().position(|l| l.code == code)
    }

    /// Reporting group of the language at `lang_index`.
    pub fn group_of(&self, lang_index: usize) -> LangGroup {
        if lang_index == self.pivot {
            LangGroup::Pivot
        } else {
            match self.languages[lang_index].level {
                ResourceLevel::High => LangGroup::HighSrc,
                ResourceLevel::Mid => LangGroup::MidSrc,
                ResourceLevel::Low => LangGroup::LowSrc,
            }
        }
    }

    /// Per-language sequence lists for an aligned split, indexed like
    /// [`Self::languages`].
    pub fn split(&self, split: Split) -> &[Vec<Sequence>] {
        match split {
            Split::Forget => &self.forget,
            Split::Retain => &self.retain,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Unaligned pretraining pool; empty when the corpus carries none.
    pub fn pretrain(&self) -> &[Vec<Sequence>] {
        &self.pretrain
    }

    /// Cloze probes for `split` (only forget and test may carry them).
    pub fn cloze(&self, split: Split) -> &[Vec<ClozeFact>] {
        match split {
            Split::Forget => &self.cloze_forget,
            Split::Test => &self.cloze_test,
            _ => &[],
        }
    }

    /// Number of items per language in an aligned split.
    pub fn split_len(&self, split: Split) -> usize {
        self.split(split)[0].len()
    }

    /// Item ids of the forget split in stored (pivot) order.
    pub fn forget_item_ids(&self) -> Vec<u64> {
        self.forget[0].iter().map(|s| s.item_id).collect()
    }

    /// A corpus whose forget split (and forget cloze probes) is restricted to
    /// `item_ids`; every id must exist in the current forget split.
    pub fn with_forget_subset(&self, item_ids: &HashSet<u64>) -> Result<Self, CorpusError> {
        let current: HashSet<u64> = self.forget[0].iter().map(|s| s.item_id).collect();
        for &id in item_ids {
            if !current.contains(&id) {
                return Err(CorpusError::Capacity {
                    what: format!("forget subset includes unknown item {id}"),
                    requested: item_ids.len(),
                    available: current.len(),
                });
            }
        }
        if item_ids.is_empty() {
            return Err(CorpusError::Capacity {
                what: "forget subset".into(),
                requested: 0,
                available: current.len(),
            });
        }
        let mut out = self.clone();
        for lang_seqs in &mut out.forget {
            lang_seqs.retain(|s| item_ids.contains(&s.item_id));
        }
        for lang_probes in &mut out.cloze_forget {
            lang_probes.retain(|c| item_ids.contains(&c.item_id));
        }
        out.validate()?;
        Ok(out)
    }
}

fn sorted_ids(seqs: &[Sequence]) -> Vec<u64> {
    let mut ids: Vec<u64> = seqs.iter().map(|s| s.item_id).collect();
    ids.sort_unstable();
    ids
}

fn first_multiset_diff(reference: &[u64], got: &[u64]) -> String {
    if reference.len() != got.len() {
        return format!("{} items where the first language has {}", got.len(), reference.len());
    }
    for (a, b) in reference.iter().zip(got) {
        if a != b {
            return format!("item {b} where the first language has item {a}");
        }
    }
    "item sets differ".into()
}

// ── Batch sampling ──────────────────────────────────────────────────────────

/// Which languages a sampler draws from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LanguageSampling {
    /// Each batch picks one language uniformly at random.
    Uniform,
    /// Every batch comes from this language code.
    Fixed(String),
}

/// Draws single-language batches from one split: each call picks a language,
/// then takes `batch_size` distinct items from a per-language shuffled pass
/// over the split, reshuffling when a pass runs out.
#[derive(Debug)]
pub struct LanguageBatchSampler<'c> {
    corpus: &'c ParallelCorpus,
    split: Split,
    batch_size: usize,
    /// Language indices eligible for sampling.
    allowed: Vec<usize>,
    /// Per-allowed-language positions (into the split) eligible for sampling.
    pool: Vec<usize>,
    /// Per-allowed-language remaining positions in the current pass; drawn
    /// from the back.
    queues: Vec<Vec<usize>>,
}

impl<'c> LanguageBatchSampler<'c> {
    /// `languages = None` allows every declared language.  `item_ids`
    /// restricts sampling to those items (useful for forget subsets).
    pub fn new(
        corpus: &'c ParallelCorpus,
        split: Split,
        batch_size: usize,
        languages: &LanguageSampling,
        item_ids: Option<&HashSet<u64>>,
    ) -> Result<Self, CorpusError> {
        if batch_size == 0 {
            return Err(CorpusError::Capacity {
                what: format!("batch size for {split}"),
                requested: 0,
                available: corpus.split_len(split),
            });
        }
        let allowed: Vec<usize> = match languages {
            LanguageSampling::Uniform => (0..corpus.languages().len()).collect(),
            LanguageSampling::Fixed(code) => {
                let idx = corpus.lang_index(code).ok_or_else(|| {
                    CorpusError::Language(format!("unknown language `{code}` for sampling"))
                })?;
                vec![idx]
            }
        };
        // Positions are aligned across languages (same item_id multiset), so
        // a single pool computed on the first language applies to all; we
        // still require identical ordering, which holds for corpora built by
        // this crate.  To stay safe with hand-built corpora, restrict by id.
        let pool: Vec<usize> = corpus.split(split)[allowed[0]]
            .iter()
            .enumerate()
            .filter(|(_, s)| item_ids.map_or(true, |ids| ids.contains(&s.item_id)))
            .map(|(i, _)| i)
            .collect();
        if pool.len() < batch_size {
            return Err(CorpusError::Capacity {
                what: format!("batch from {split}"),
                requested: batch_size,
                available: pool.len(),
            });
        }
        let queues = vec![Vec::new(); allowed.len()];
        Ok(LanguageBatchSampler { corpus, split, batch_size, allowed, pool, queues })
    }

    /// Draws the next batch: `(language index, sequences)`.
    pub fn next_batch<R: Rng>(&mut self, rng: &mut R) -> (usize, Vec<&'c Sequence>) {
        let ai = if self.allowed.len() == 1 { 0 } else { rng.gen_range(0..self.allowed.len()) };
        let lang = self.allowed[ai];
        let mut picked: Vec<usize> = Vec::with_capacity(self.batch_size);
        while picked.len() < self.batch_size {
            if self.queues[ai].is_empty() {
                let mut pass = self.pool.clone();
                pass.shuffle(rng);
                self.queues[ai] = pass;
            }
            let queue = &mut self.queues[ai];
            // Pop from the back, skipping positions already in this batch
            // (possible only right after a reshuffle mid-batch).
            let mut k = queue.len();
            while k > 0 && picked.contains(&queue[k - 1]) {
                k -= 1;
            }
            if k == 0 {
                // Whole remaining pass is already in the batch; drop it and
                // reshuffle.  Terminates because pool ≥ batch_size.
                queue.clear();
                continue;
            }
            picked.push(queue.remove(k - 1));
        }
        let seqs = picked
            .iter()
            .map(|&pos| &self.corpus.split(self.split)[lang][pos])
            .collect();
        (lang, seqs)
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Number of eligible items per language (one full pass).  Independent
    /// of how many languages are allowed: every language shares the same
    /// aligned pool.
    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────
