//! Experiment orchestration: config files, multi-seed runs, report files,
//! and the canned comparison recipes behind the `unlearn` command.
//!
//! An experiment file is plain `key = value` text with `[section]` headers.
//! Root keys name the experiment and pick the method, recipe, seeds, and
//! output directory; sections configure the corpus, model, and training
//! phases.  Command-line flags override file values.  Every run writes
//! `out/<name>/<seed>/{history.jsonl, report.csv, checkpoint}` and the
//! experiment writes `out/<name>/summary.{csv,md}`; recipes that compare
//! several variants nest one directory per variant under the seed.
//!
//! Outputs are deterministic functions of the experiment file and the seeds:
//! corpora are generated from their own seed, every sampler is seeded from
//! the run seed, and seeds running in parallel (capped by the
//! `UNLEARN_THREADS` environment variable) never share mutable state.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::baselines::{ga_kl, grad_ascent_plus, neg_task_vector_plus, NegTaskVectorConfig};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::corpus::{
    generate_synthetic_corpus, load_parallel_corpus, LanguageSpec, ParallelCorpus, Split,
    SynthSpec, TokenizerKind,
};
use crate::error::Error;
use crate::kv::{self, KvEntry, KvFile, KvSection};
use crate::losses::RetainMode;
use crate::metrics::{evaluate, EvalOptions, EvalReport, MetricRow};
use crate::model::{ModelConfig, ModelParams};
use crate::trainer::{
    oracle_unlearn, pretrain, sequential_unlearn, unlearn, LanguageSchedule, PretrainConfig,
    RunHistory, UnlearnConfig,
};

// ── Experiment vocabulary ───────────────────────────────────────────────────

/// The unlearning procedure an experiment applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lingtea,
    GradAscentPlus,
    NegTaskVectorPlus,
    GaKl,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Lingtea,
        Method::GradAscentPlus,
        Method::NegTaskVectorPlus,
        Method::GaKl,
        Method::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lingtea => "lingtea",
            Method::GradAscentPlus => "grad_ascent_plus",
            Method::NegTaskVectorPlus => "neg_task_vector_plus",
            Method::GaKl => "ga_kl",
            Method::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown method `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Which canned experiment shape to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipe {
    /// One method, evaluated before and after, averaged over seeds.
    Single,
    /// Adaptive mixing versus a list of fixed mix weights.
    KappaAblation,
    /// Batch versus chunked unlearning as the forget set grows.
    Scaling,
    /// Pivot-only ascent versus the multilingual objective, per language.
    TransferDemo,
}

impl Recipe {
    pub const ALL: [Recipe; 4] = [
        Recipe::Single,
        Recipe::KappaAblation,
        Recipe::Scaling,
        Recipe::TransferDemo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Recipe::Single => "single",
            Recipe::KappaAblation => "kappa_ablation",
            Recipe::Scaling => "scaling",
            Recipe::TransferDemo => "transfer_demo",
        }
    }
}

impl std::fmt::Display for Recipe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Recipe {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Recipe::ALL.iter().map(|r| r.as_str()).collect();
                format!("unknown recipe `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Where the corpus comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    /// Load a corpus directory written by the corpus writer.
    Path { dir: PathBuf, tokenizer: TokenizerKind },
    /// Generate a synthetic parallel corpus.
    Synthetic { spec: SynthSpec, seed: u64 },
}

/// Everything one experiment needs, parsed from a config file plus
/// command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Experiment name; the output directory component.
    pub name: String,
    pub corpus: CorpusSource,
    pub model: ModelConfig,
    pub method: Method,
    pub unlearn: UnlearnConfig,
    pub pretrain: PretrainConfig,
    /// Load this checkpoint instead of pretraining.
    pub pretrained_checkpoint: Option<PathBuf>,
    /// Scales for the task-vector method.
    pub alpha_forget: f64,
    pub alpha_retain: f64,
    /// Epochs of each task-vector finetune.
    pub task_vector_epochs: usize,
    /// Run seeds; reports are averaged across them.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub recipe: Recipe,
    /// Mix weights compared by the ablation recipe.
    pub fixed_kappas: Vec<f64>,
    /// Forget-set size multipliers compared by the scaling recipe.
    pub multipliers: Vec<usize>,
    /// Sequential-unlearning chunk size for the scaling recipe.
    pub chunk_size: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            corpus: CorpusSource::Synthetic { spec: SynthSpec::default(), seed: 0 },
            model: ModelConfig::toy(0),
            method: Method::Lingtea,
            unlearn: UnlearnConfig::default(),
            pretrain: PretrainConfig::default(),
            pretrained_checkpoint: None,
            alpha_forget: 1.0,
            alpha_retain: 1.0,
            task_vector_epochs: 3,
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("out"),
            recipe: Recipe::Single,
            fixed_kappas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            multipliers: vec![1, 2, 4],
            chunk_size: 32,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.name.is_empty() {
            return Err(Error::Config("`name` must not be empty".into()));
        }
        if self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            return Err(Error::Config(format!(
                "`name` must be a single path component, got `{}`",
                self.name
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("`seeds` must list at least one seed".into()));
        }
        let mut seen = HashSet::new();
        for &s in &self.seeds {
            if !seen.insert(s) {
                return Err(Error::Config(format!("duplicate seed {s}")));
            }
        }
        self.unlearn.validate()?;
        self.pretrain.validate()?;
        for (key, value) in [("alpha_forget", self.alpha_forget), ("alpha_retain", self.alpha_retain)] {
            if !value.is_finite() {
                return Err(Error::Config(format!("`{key}` must be finite, got {value}")));
            }
        }
        for &k in &self.fixed_kappas {
            if !k.is_finite() || !(0.0..=1.0).contains(&k) {
                return Err(Error::Config(format!("ablation kappa {k} outside [0, 1]")));
            }
        }
        if self.multipliers.is_empty() || self.multipliers.contains(&0) {
            return Err(Error::Config(
                "`multipliers` must be a nonempty list of positive integers".into(),
            ));
        }
        if self.chunk_size == 0 {
            return Err(Error::Config("`chunk_size` must be at least 1".into()));
        }
        Ok(())
    }
}

// ── Config files ────────────────────────────────────────────────────────────

fn config_err(path: &Path, line: usize, message: impl std::fmt::Display) -> Error {
    Error::Config(format!("{}:{line}: {message}", path.display()))
}

fn parse_entry<T: std::str::FromStr>(path: &Path, entry: &KvEntry) -> Result<T, Error> {
    kv::parse_value(&entry.key, &entry.value).map_err(|m| config_err(path, entry.line, m))
}

/// `value` or `none`.
fn parse_optional_f64(path: &Path, entry: &KvEntry) -> Result<Option<f64>, Error> {
    if entry.value == "none" {
        Ok(None)
    } else {
        parse_entry::<f64>(path, entry).map(Some)
    }
}

fn parse_list_of<T: std::str::FromStr>(path: &Path, entry: &KvEntry) -> Result<Vec<T>, Error> {
    kv::split_list(&entry.value)
        .iter()
        .map(|item| {
            kv::parse_value::<T>(&entry.key, item).map_err(|m| config_err(path, entry.line, m))
        })
        .collect()
}

fn parse_language_schedule(path: &Path, entry: &KvEntry) -> Result<LanguageSchedule, Error> {
    match entry.value.as_str() {
        "uniform" => Ok(LanguageSchedule::Uniform),
        "oracle_sequential" => Ok(LanguageSchedule::OracleSequential),
        other => match other.strip_prefix("fixed:") {
            Some(code) if !code.is_empty() => Ok(LanguageSchedule::Fixed(code.to_string())),
            _ => Err(config_err(
                path,
                entry.line,
                format!(
                    "key `language_sampling`: expected uniform, fixed:<code>, or \
                     oracle_sequential, got `{other}`"
                ),
            )),
        },
    }
}

fn parse_retain_mode(path: &Path, entry: &KvEntry) -> Result<RetainMode, Error> {
    match entry.value.as_str() {
        "adaptive" => Ok(RetainMode::Adaptive),
        "hard_label" => Ok(RetainMode::HardLabel),
        "kl_only" => Ok(RetainMode::KlOnly),
        other => match other.strip_prefix("fixed:").map(str::parse::<f64>) {
            Some(Ok(k)) => Ok(RetainMode::Fixed(k)),
            _ => Err(config_err(
                path,
                entry.line,
                format!(
                    "key `retain_mode`: expected adaptive, fixed:<weight>, hard_label, \
                     or kl_only, got `{other}`"
                ),
            )),
        },
    }
}

fn parse_languages(path: &Path, entry: &KvEntry) -> Result<Vec<LanguageSpec>, Error> {
    let mut langs = Vec::new();
    for item in kv::split_list(&entry.value) {
        let (code, level) = item.split_once(':').ok_or_else(|| {
            config_err(
                path,
                entry.line,
                format!("key `languages`: expected `code:level`, got `{item}`"),
            )
        })?;
        let level = level
            .trim()
            .parse()
            .map_err(|m: String| config_err(path, entry.line, format!("key `languages`: {m}")))?;
        langs.push(LanguageSpec::new(code.trim(), level));
    }
    Ok(langs)
}

/// Parses the `[corpus]` entries into a source: a `path` key loads a corpus
/// directory, anything else configures the synthetic generator.
fn parse_corpus_source(path: &Path, entries: &[KvEntry]) -> Result<CorpusSource, Error> {
    let has_path = entries.iter().any(|e| e.key == "path");
    if has_path {
        let mut dir = None;
        let mut tokenizer = TokenizerKind::Ids;
        for e in entries {
            match e.key.as_str() {
                "path" => dir = Some(PathBuf::from(&e.value)),
                "tokenizer" => {
                    tokenizer = e.value.parse().map_err(|m: String| {
                        config_err(path, e.line, format!("key `tokenizer`: {m}"))
                    })?
                }
                other => {
                    return Err(config_err(
                        path,
                        e.line,
                        format!("key `{other}` does not apply to a corpus loaded from `path`"),
                    ))
                }
            }
        }
        return Ok(CorpusSource::Path { dir: dir.expect("checked above"), tokenizer });
    }

    let mut spec = SynthSpec::default();
    let mut seed = 0u64;
    for e in entries {
        match e.key.as_str() {
            "languages" => spec.languages = parse_languages(path, e)?,
            "vocab_size" => spec.vocab_size = parse_entry(path, e)?,
            "min_len" => spec.min_len = parse_entry(path, e)?,
            "max_len" => spec.max_len = parse_entry(path, e)?,
            "forget_size" => spec.forget_size = parse_entry(path, e)?,
            "retain_size" => spec.retain_size = parse_entry(path, e)?,
            "validation_size" => spec.validation_size = parse_entry(path, e)?,
            "test_size" => spec.test_size = parse_entry(path, e)?,
            "pretrain_base" => spec.pretrain_base = parse_entry(path, e)?,
            "pivot_share" => spec.pivot_share = parse_entry(path, e)?,
            "high_share" => spec.high_share = parse_entry(path, e)?,
            "mid_share" => spec.mid_share = parse_entry(path, e)?,
            "low_share" => spec.low_share = parse_entry(path, e)?,
            "cloze_candidates" => spec.cloze_candidates = parse_entry(path, e)?,
            "function_tokens" => spec.function_tokens = parse_entry(path, e)?,
            "seed" => seed = parse_entry(path, e)?,
            other => {
                return Err(config_err(path, e.line, format!("unknown [corpus] key `{other}`")))
            }
        }
    }
    Ok(CorpusSource::Synthetic { spec, seed })
}

/// Reads an experiment file.  Unknown keys and sections are errors so typos
/// fail loudly instead of silently using defaults.
pub fn load_experiment_spec(path: &Path) -> Result<ExperimentSpec, Error> {
    let text = std::fs::read_to_string(path)?;
    let file = kv::parse(&text).map_err(|(line, m)| config_err(path, line, m))?;

    let mut spec = ExperimentSpec::default();
    for e in &file.root {
        match e.key.as_str() {
            "name" => spec.name = e.value.clone(),
            "method" => {
                spec.method = e
                    .value
                    .parse()
                    .map_err(|m: String| config_err(path, e.line, m))?
            }
            "recipe" => {
                spec.recipe = e
                    .value
                    .parse()
                    .map_err(|m: String| config_err(path, e.line, m))?
            }
            "seeds" => spec.seeds = parse_list_of(path, e)?,
            "out" => spec.out_dir = PathBuf::from(&e.value),
            other => return Err(config_err(path, e.line, format!("unknown root key `{other}`"))),
        }
    }

    for section in &file.sections {
        match section.name.as_str() {
            "corpus" => spec.corpus = parse_corpus_source(path, &section.entries)?,
            "model" => {
                for e in &section.entries {
                    match e.key.as_str() {
                        "vocab_size" => spec.model.vocab_size = parse_entry(path, e)?,
                        "d_model" => spec.model.d_model = parse_entry(path, e)?,
                        "n_layers" => spec.model.n_layers = parse_entry(path, e)?,
                        "n_heads" => spec.model.n_heads = parse_entry(path, e)?,
                        "max_seq_len" => spec.model.max_seq_len = parse_entry(path, e)?,
                        other => {
                            return Err(config_err(
                                path,
                                e.line,
                                format!("unknown [model] key `{other}`"),
                            ))
                        }
                    }
                }
            }
            "unlearn" => {
                let u = &mut spec.unlearn;
                for e in &section.entries {
                    match e.key.as_str() {
                        "learning_rate" => u.learning_rate = parse_entry(path, e)?,
                        "warmup_ratio" => u.warmup_ratio = parse_entry(path, e)?,
                        "lambda" => u.lambda = parse_entry(path, e)?,
                        "batch_size" => u.batch_size = parse_entry(path, e)?,
                        "retain_sample_count" => u.retain_sample_count = parse_entry(path, e)?,
                        "max_epochs" => u.max_epochs = parse_entry(path, e)?,
                        "early_stop_tolerance" => u.early_stop_tolerance = parse_entry(path, e)?,
                        "ppl_guard_delta" => u.ppl_guard_delta = parse_entry(path, e)?,
                        "grad_clip" => u.grad_clip = parse_optional_f64(path, e)?,
                        "weight_decay" => u.weight_decay = parse_entry(path, e)?,
                        "language_sampling" => {
                            u.language_sampling = parse_language_schedule(path, e)?
                        }
                        "retain_mode" => u.retain_mode = parse_retain_mode(path, e)?,
                        "eval_languages" => {
                            u.eval_languages = if e.value == "all" {
                                None
                            } else {
                                Some(kv::split_list(&e.value))
                            }
                        }
                        other => {
                            return Err(config_err(
                                path,
                                e.line,
                                format!("unknown [unlearn] key `{other}`"),
                            ))
                        }
                    }
                }
            }
            "pretrain" => {
                let p = &mut spec.pretrain;
                for e in &section.entries {
                    match e.key.as_str() {
                        "learning_rate" => p.learning_rate = parse_entry(path, e)?,
                        "warmup_ratio" => p.warmup_ratio = parse_entry(path, e)?,
                        "batch_size" => p.batch_size = parse_entry(path, e)?,
                        "max_epochs" => p.max_epochs = parse_entry(path, e)?,
                        "memorization_threshold" => {
                            p.memorization_threshold = parse_entry(path, e)?
                        }
                        "weight_decay" => p.weight_decay = parse_entry(path, e)?,
                        "grad_clip" => p.grad_clip = parse_optional_f64(path, e)?,
                        "checkpoint" => {
                            spec.pretrained_checkpoint = Some(PathBuf::from(&e.value))
                        }
                        other => {
                            return Err(config_err(
                                path,
                                e.line,
                                format!("unknown [pretrain] key `{other}`"),
                            ))
                        }
                    }
                }
            }
            "task_vector" => {
                for e in &section.entries {
                    match e.key.as_str() {
                        "alpha_forget" => spec.alpha_forget = parse_entry(path, e)?,
                        "alpha_retain" => spec.alpha_retain = parse_entry(path, e)?,
                        "epochs" => spec.task_vector_epochs = parse_entry(path, e)?,
                        other => {
                            return Err(config_err(
                                path,
                                e.line,
                                format!("unknown [task_vector] key `{other}`"),
                            ))
                        }
                    }
                }
            }
            "ablation" => {
                for e in &section.entries {
                    match e.key.as_str() {
                        "kappas" => spec.fixed_kappas = parse_list_of(path, e)?,
                        other => {
                            return Err(config_err(
                                path,
                                e.line,
                                format!("unknown [ablation] key `{other}`"),
                            ))
                        }
                    }
                }
            }
            "scaling" => {
                for e in &section.entries {
                    match e.key.as_str() {
                        "multipliers" => spec.multipliers = parse_list_of(path, e)?,
                        "chunk_size" => spec.chunk_size = parse_entry(path, e)?,
                        other => {
                            return Err(config_err(
                                path,
                                e.line,
                                format!("unknown [scaling] key `{other}`"),
                            ))
                        }
                    }
                }
            }
            other => {
                return Err(config_err(
                    path,
                    section.line,
                    format!("unknown section `[{other}]`"),
                ))
            }
        }
    }
    Ok(spec)
}

/// Renders a spec in the same format [`load_experiment_spec`] reads; written
/// next to each experiment's reports so runs stay reproducible from their
/// outputs alone.
pub fn render_spec(spec: &ExperimentSpec) -> String {
    let entry = |key: &str, value: String| KvEntry { line: 0, key: key.to_string(), value };
    let list = |items: &[String]| items.join(", ");

    let root = vec![
        entry("name", spec.name.clone()),
        entry("method", spec.method.to_string()),
        entry("recipe", spec.recipe.to_string()),
        entry("seeds", list(&spec.seeds.iter().map(u64::to_string).collect::<Vec<_>>())),
        entry("out", spec.out_dir.display().to_string()),
    ];

    let corpus_entries = match &spec.corpus {
        CorpusSource::Path { dir, tokenizer } => vec![
            entry("path", dir.display().to_string()),
            entry(
                "tokenizer",
                match tokenizer {
                    TokenizerKind::Ids => "ids".into(),
                    TokenizerKind::Whitespace => "whitespace".into(),
                },
            ),
        ],
        CorpusSource::Synthetic { spec: s, seed } => vec![
            entry(
                "languages",
                list(
                    &s.languages
                        .iter()
                        .map(|l| format!("{}:{}", l.code, l.level.as_str()))
                        .collect::<Vec<_>>(),
                ),
            ),
            entry("vocab_size", s.vocab_size.to_string()),
            entry("min_len", s.min_len.to_string()),
            entry("max_len", s.max_len.to_string()),
            entry("forget_size", s.forget_size.to_string()),
            entry("retain_size", s.retain_size.to_string()),
            entry("validation_size", s.validation_size.to_string()),
            entry("test_size", s.test_size.to_string()),
            entry("pretrain_base", s.pretrain_base.to_string()),
            entry("pivot_share", s.pivot_share.to_string()),
            entry("high_share", s.high_share.to_string()),
            entry("mid_share", s.mid_share.to_string()),
            entry("low_share", s.low_share.to_string()),
            entry("cloze_candidates", s.cloze_candidates.to_string()),
            entry("function_tokens", s.function_tokens.to_string()),
            entry("seed", seed.to_string()),
        ],
    };

    let model_entries = vec![
        entry("vocab_size", spec.model.vocab_size.to_string()),
        entry("d_model", spec.model.d_model.to_string()),
        entry("n_layers", spec.model.n_layers.to_string()),
        entry("n_heads", spec.model.n_heads.to_string()),
        entry("max_seq_len", spec.model.max_seq_len.to_string()),
    ];

    let clip = |c: Option<f64>| c.map_or("none".to_string(), |v| v.to_string());
    let u = &spec.unlearn;
    let unlearn_entries = vec![
        entry("learning_rate", u.learning_rate.to_string()),
        entry("warmup_ratio", u.warmup_ratio.to_string()),
        entry("lambda", u.lambda.to_string()),
        entry("batch_size", u.batch_size.to_string()),
        entry("retain_sample_count", u.retain_sample_count.to_string()),
        entry("max_epochs", u.max_epochs.to_string()),
        entry("early_stop_tolerance", u.early_stop_tolerance.to_string()),
        entry("ppl_guard_delta", u.ppl_guard_delta.to_string()),
        entry("grad_clip", clip(u.grad_clip)),
        entry("weight_decay", u.weight_decay.to_string()),
        entry(
            "language_sampling",
            match &u.language_sampling {
                LanguageSchedule::Uniform => "uniform".into(),
                LanguageSchedule::Fixed(code) => format!("fixed:{code}"),
                LanguageSchedule::OracleSequential => "oracle_sequential".into(),
            },
        ),
        entry(
            "retain_mode",
            match &u.retain_mode {
                RetainMode::Adaptive => "adaptive".into(),
                RetainMode::Fixed(k) => format!("fixed:{k}"),
                RetainMode::HardLabel => "hard_label".into(),
                RetainMode::KlOnly => "kl_only".into(),
            },
        ),
        entry(
            "eval_languages",
            u.eval_languages.as_ref().map_or("all".into(), |langs| list(langs)),
        ),
    ];

    let p = &spec.pretrain;
    let mut pretrain_entries = vec![
        entry("learning_rate", p.learning_rate.to_string()),
        entry("warmup_ratio", p.warmup_ratio.to_string()),
        entry("batch_size", p.batch_size.to_string()),
        entry("max_epochs", p.max_epochs.to_string()),
        entry("memorization_threshold", p.memorization_threshold.to_string()),
        entry("weight_decay", p.weight_decay.to_string()),
        entry("grad_clip", clip(p.grad_clip)),
    ];
    if let Some(path) = &spec.pretrained_checkpoint {
        pretrain_entries.push(entry("checkpoint", path.display().to_string()));
    }

    let sections = vec![
        ("corpus", corpus_entries),
        ("model", model_entries),
        ("unlearn", unlearn_entries),
        ("pretrain", pretrain_entries),
        (
            "task_vector",
            vec![
                entry("alpha_forget", spec.alpha_forget.to_string()),
                entry("alpha_retain", spec.alpha_retain.to_string()),
                entry("epochs", spec.task_vector_epochs.to_string()),
            ],
        ),
        (
            "ablation",
            vec![entry(
                "kappas",
                list(&spec.fixed_kappas.iter().map(f64::to_string).collect::<Vec<_>>()),
            )],
        ),
        (
            "scaling",
            vec![
                entry(
                    "multipliers",
                    list(&spec.multipliers.iter().map(usize::to_string).collect::<Vec<_>>()),
                ),
                entry("chunk_size", spec.chunk_size.to_string()),
            ],
        ),
    ];

    kv::render(&KvFile {
        root,
        sections: sections
            .into_iter()
            .map(|(name, entries)| KvSection { line: 0, name: name.to_string(), entries })
            .collect(),
    })
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct SpecOverrides {
    pub method: Option<Method>,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub recipe: Option<Recipe>,
    pub fixed_kappas: Option<Vec<f64>>,
    pub multipliers: Option<Vec<usize>>,
}

impl SpecOverrides {
    pub fn apply(&self, spec: &mut ExperimentSpec) {
        if let Some(m) = self.method {
            spec.method = m;
        }
        if !self.seeds.is_empty() {
            spec.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out_dir {
            spec.out_dir = out.clone();
        }
        if let Some(r) = self.recipe {
            spec.recipe = r;
        }
        if let Some(k) = &self.fixed_kappas {
            spec.fixed_kappas = k.clone();
        }
        if let Some(m) = &self.multipliers {
            spec.multipliers = m.clone();
        }
    }
}

// ── Report rows ─────────────────────────────────────────────────────────────

/// One line of a report: a metric value tagged with the method (or variant)
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// `"Original"`, a method name, or a recipe variant label.
    pub method: String,
    /// `"lang"` or `"group"`.
    pub scope: String,
    /// Language code or group name.
    pub name: String,
    pub split: Split,
    /// `"ma"`, `"ppl"`, or `"pa"`.
    pub metric: String,
    pub value: f64,
}

/// Header line of report CSV files.
pub const REPORT_HEADER: &str = "method,scope,name,split,metric,value";

fn tag_rows(method: &str, report: &EvalReport) -> Vec<ReportRow> {
    report
        .to_rows()
        .into_iter()
        .map(|r: MetricRow| ReportRow {
            method: method.to_string(),
            scope: r.scope,
            name: r.name,
            split: r.split,
            metric: r.metric,
            value: r.value,
        })
        .collect()
}

/// Renders rows as CSV.  Float formatting is the shortest representation
/// that parses back to identical bits, so parse → render is a byte-level
/// fixed point.
pub fn render_report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.method, r.scope, r.name, r.split, r.metric, r.value
        ));
    }
    out
}

/// Parses a CSV produced by [`render_report_csv`].
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == REPORT_HEADER => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(format!("line {}: expected 6 fields, got {}", idx + 2, fields.len()));
        }
        rows.push(ReportRow {
            method: fields[0].to_string(),
            scope: fields[1].to_string(),
            name: fields[2].to_string(),
            split: fields[3].parse().map_err(|e| format!("line {}: {e}", idx + 2))?,
            metric: fields[4].to_string(),
            value: fields[5]
                .parse()
                .map_err(|e| format!("line {}: bad value: {e}", idx + 2))?,
        });
    }
    Ok(rows)
}

/// Renders rows as a markdown table.
pub fn render_report_md(title: &str, rows: &[ReportRow]) -> String {
    let mut out = format!("# {title}\n\n");
    out.push_str("| method | scope | name | split | metric | value |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.4} |\n",
            r.method, r.scope, r.name, r.split, r.metric, r.value
        ));
    }
    out
}

/// Averages row values across runs that must share the exact same row keys
/// in the exact same order.
fn average_rows(per_run: &[Vec<ReportRow>]) -> Result<Vec<ReportRow>, Error> {
    let first = &per_run[0];
    for rows in &per_run[1..] {
        if rows.len() != first.len() {
            return Err(Error::Numeric(format!(
                "cannot average reports of different shapes ({} vs {} rows)",
                first.len(),
                rows.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(first.len());
    for (i, base) in first.iter().enumerate() {
        let mut sum = 0.0;
        for rows in per_run {
            let r = &rows[i];
            if (&r.method, &r.scope, &r.name, r.split, &r.metric)
                != (&base.method, &base.scope, &base.name, base.split, &base.metric)
            {
                return Err(Error::Numeric(format!(
                    "cannot average reports: row {i} keys differ across runs"
                )));
            }
            sum += r.value;
        }
        out.push(ReportRow { value: sum / per_run.len() as f64, ..base.clone() });
    }
    Ok(out)
}

// ── Worker pool ─────────────────────────────────────────────────────────────

/// The worker cap: `UNLEARN_THREADS` if set, otherwise available
/// parallelism.
fn worker_cap() -> Result<usize, Error> {
    match std::env::var("UNLEARN_THREADS") {
        Ok(raw) => match raw.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!(
                "UNLEARN_THREADS must be a positive integer, got `{raw}`"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

type Job<'env, T> = Box<dyn FnOnce() -> Result<T, Error> + Send + 'env>;

/// Runs jobs on up to `cap` threads at a time, preserving result order.
fn run_jobs<'env, T: Send + 'env>(cap: usize, mut jobs: Vec<Job<'env, T>>) -> Vec<Result<T, Error>> {
    let mut results = Vec::with_capacity(jobs.len());
    while !jobs.is_empty() {
        let take = cap.min(jobs.len());
        let batch: Vec<Job<'env, T>> = jobs.drain(..take).collect();
        let mut batch_results: Vec<Result<T, Error>> = Vec::with_capacity(take);
        std::thread::scope(|scope| {
            let handles: Vec<_> = batch.into_iter().map(|job| scope.spawn(job)).collect();
            for handle in handles {
                batch_results.push(handle.join().unwrap_or_else(|_| {
                    Err(Error::Numeric("worker thread panicked".into()))
                }));
            }
        });
        results.append(&mut batch_results);
    }
    results
}

// ── Shared run plumbing ─────────────────────────────────────────────────────

/// Builds or loads the corpus an experiment runs on.
pub fn materialize_corpus(source: &CorpusSource) -> Result<ParallelCorpus, Error> {
    match source {
        CorpusSource::Path { dir, tokenizer } => Ok(load_parallel_corpus(dir, *tokenizer)?),
        CorpusSource::Synthetic { spec, seed } => Ok(generate_synthetic_corpus(spec, *seed)?),
    }
}

fn check_vocab(spec: &ExperimentSpec, corpus: &ParallelCorpus) -> Result<(), Error> {
    if corpus.vocab_size() > spec.model.vocab_size {
        return Err(Error::Config(format!(
            "corpus vocabulary ({}) exceeds the model's ({}); raise [model] vocab_size",
            corpus.vocab_size(),
            spec.model.vocab_size
        )));
    }
    Ok(())
}

/// What every report evaluates: all four splits, probes included.
fn report_options() -> EvalOptions {
    EvalOptions {
        splits: vec![Split::Forget, Split::Retain, Split::Validation, Split::Test],
        probing: true,
        length_normalized_pa: false,
        languages: None,
    }
}

fn evaluate_rows(
    label: &str,
    params: &ModelParams,
    corpus: &ParallelCorpus,
) -> Result<Vec<ReportRow>, Error> {
    let report = evaluate(params, corpus, &report_options())?;
    Ok(tag_rows(label, &report))
}

/// The pre-unlearning model for one run seed: loaded from the configured
/// checkpoint, or freshly initialized and pretrained to memorization.
fn obtain_original(
    spec: &ExperimentSpec,
    corpus: &ParallelCorpus,
    run_seed: u64,
) -> Result<ModelParams, Error> {
    if let Some(path) = &spec.pretrained_checkpoint {
        return Ok(load_checkpoint(path)?);
    }
    let model_config = ModelConfig { seed: run_seed, ..spec.model.clone() };
    let init = ModelParams::init(&model_config)?;
    let pretrain_config = PretrainConfig { seed: run_seed, ..spec.pretrain.clone() };
    Ok(pretrain(init, corpus, &pretrain_config)?)
}

/// Applies the spec's method to the original model.
fn apply_method(
    spec: &ExperimentSpec,
    original: &ModelParams,
    corpus: &ParallelCorpus,
    run_seed: u64,
) -> Result<(ModelParams, RunHistory), Error> {
    let config = UnlearnConfig { seed: run_seed, ..spec.unlearn.clone() };
    let result = match spec.method {
        Method::Lingtea => unlearn(original.clone(), original, corpus, &config)?,
        Method::Oracle => oracle_unlearn(original.clone(), original, corpus, &config)?,
        Method::GradAscentPlus => grad_ascent_plus(original.clone(), corpus, &config)?,
        Method::GaKl => ga_kl(original.clone(), original, corpus, &config)?,
        Method::NegTaskVectorPlus => {
            let ntv = NegTaskVectorConfig {
                finetune: UnlearnConfig { max_epochs: spec.task_vector_epochs, ..config },
                alpha_forget: spec.alpha_forget,
                alpha_retain: spec.alpha_retain,
            };
            (neg_task_vector_plus(original, corpus, &ntv)?, RunHistory::default())
        }
    };
    Ok(result)
}

/// Writes one run directory: `report.csv`, `history.jsonl`, `checkpoint`.
fn write_run_dir(
    dir: &Path,
    rows: &[ReportRow],
    history: &RunHistory,
    params: &ModelParams,
) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), render_report_csv(rows))?;
    history.write_jsonl(&dir.join("history.jsonl"))?;
    save_checkpoint(params, &dir.join("checkpoint"))?;
    Ok(())
}

fn write_summary(
    out_root: &Path,
    spec: &ExperimentSpec,
    rows: &[ReportRow],
) -> Result<(PathBuf, PathBuf), Error> {
    std::fs::create_dir_all(out_root)?;
    let csv = out_root.join("summary.csv");
    let md = out_root.join("summary.md");
    std::fs::write(&csv, render_report_csv(rows))?;
    std::fs::write(&md, render_report_md(&spec.name, rows))?;
    std::fs::write(out_root.join("config.txt"), render_spec(spec))?;
    Ok((csv, md))
}

// ── Recipes ─────────────────────────────────────────────────────────────────

/// What a recipe produced: each run's labeled rows, the seed-level or
/// variant-level summary, and where everything was written.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub out_root: PathBuf,
    /// `("seed 0", rows)` for the single recipe, `(variant, rows)` for
    /// comparison recipes.
    pub runs: Vec<(String, Vec<ReportRow>)>,
    pub summary_rows: Vec<ReportRow>,
    pub summary_csv: PathBuf,
    pub summary_md: PathBuf,
}

/// Runs the spec's method once per seed and averages the reports.
///
/// Per seed: pretrain (or load) the original model, evaluate it, apply the
/// method, evaluate again, and write the run directory; `Original` rows come
/// first in every report.  The summary holds the arithmetic mean of each row
/// across seeds.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome, Error> {
    spec.validate()?;
    let corpus = materialize_corpus(&spec.corpus)?;
    check_vocab(spec, &corpus)?;
    let out_root = spec.out_dir.join(&spec.name);

    let cap = worker_cap()?;
    let jobs: Vec<Job<'_, Vec<ReportRow>>> = spec
        .seeds
        .iter()
        .map(|&seed| {
            let corpus = &corpus;
            let out_root = out_root.clone();
            Box::new(move || {
                let original = obtain_original(spec, corpus, seed)?;
                let mut rows = evaluate_rows("Original", &original, corpus)?;
                let (unlearned, history) = apply_method(spec, &original, corpus, seed)?;
                rows.extend(evaluate_rows(spec.method.as_str(), &unlearned, corpus)?);
                write_run_dir(&out_root.join(seed.to_string()), &rows, &history, &unlearned)?;
                Ok(rows)
            }) as Job<'_, Vec<ReportRow>>
        })
        .collect();

    let mut runs = Vec::with_capacity(spec.seeds.len());
    for (seed, result) in spec.seeds.iter().zip(run_jobs(cap, jobs)) {
        runs.push((format!("seed {seed}"), result?));
    }

    let per_seed: Vec<Vec<ReportRow>> = runs.iter().map(|(_, rows)| rows.clone()).collect();
    let summary_rows = average_rows(&per_seed)?;
    let (summary_csv, summary_md) = write_summary(&out_root, spec, &summary_rows)?;
    Ok(ExperimentOutcome { out_root, runs, summary_rows, summary_csv, summary_md })
}

fn kappa_label(k: f64) -> String {
    format!("kappa_{k}")
}

/// Keeps the rows comparison summaries are built from: accuracy on the
/// forget and test splits, and perplexity on the test split.
fn comparison_rows(rows: &[ReportRow]) -> Vec<ReportRow> {
    rows.iter()
        .filter(|r| {
            (r.metric == "ma" && (r.split == Split::Forget || r.split == Split::Test))
                || (r.metric == "ppl" && r.split == Split::Test)
        })
        .cloned()
        .collect()
}

/// Compares adaptive mixing against each fixed mix weight, all starting from
/// the same pretrained model on the first seed.  Emits one block of rows per
/// variant — `adaptive` first, then one per weight — with forget/test
/// accuracy per language and group.
pub fn kappa_ablation(
    spec: &ExperimentSpec,
    fixed_kappas: &[f64],
) -> Result<ExperimentOutcome, Error> {
    let mut spec = spec.clone();
    spec.fixed_kappas = fixed_kappas.to_vec();
    spec.validate()?;
    let corpus = materialize_corpus(&spec.corpus)?;
    check_vocab(&spec, &corpus)?;
    let out_root = spec.out_dir.join(&spec.name);

    let seed = spec.seeds[0];
    let original = obtain_original(&spec, &corpus, seed)?;
    let seed_dir = out_root.join(seed.to_string());

    let mut variants: Vec<(String, RetainMode)> = vec![("adaptive".into(), RetainMode::Adaptive)];
    for &k in &spec.fixed_kappas {
        variants.push((kappa_label(k), RetainMode::Fixed(k)));
    }

    let cap = worker_cap()?;
    let jobs: Vec<Job<'_, Vec<ReportRow>>> = variants
        .iter()
        .map(|(label, mode)| {
            let spec = &spec;
            let corpus = &corpus;
            let original = &original;
            let dir = seed_dir.join(label);
            let label = label.clone();
            let mode = mode.clone();
            Box::new(move || {
                let config = UnlearnConfig {
                    seed,
                    retain_mode: mode,
                    ..spec.unlearn.clone()
                };
                let (params, history) = unlearn(original.clone(), original, corpus, &config)?;
                let mut rows = evaluate_rows("Original", original, corpus)?;
                rows.extend(evaluate_rows(&label, &params, corpus)?);
                write_run_dir(&dir, &rows, &history, &params)?;
                Ok(rows)
            }) as Job<'_, Vec<ReportRow>>
        })
        .collect();

    let mut runs = Vec::with_capacity(variants.len());
    let mut summary_rows = Vec::new();
    for ((label, _), result) in variants.iter().zip(run_jobs(cap, jobs)) {
        let rows = result?;
        summary_rows.extend(comparison_rows(
            &rows.iter().filter(|r| &r.method == label).cloned().collect::<Vec<_>>(),
        ));
        runs.push((label.clone(), rows));
    }

    let (summary_csv, summary_md) = write_summary(&out_root, &spec, &summary_rows)?;
    Ok(ExperimentOutcome { out_root, runs, summary_rows, summary_csv, summary_md })
}

/// Grows the forget set by each multiplier and unlearns it two ways from the
/// same pretrained model: all at once (`batch_xM`) and one chunk at a time
/// (`sequential_xM`).  Forget accuracy is measured on the targeted items;
/// test perplexity on the full held-out split.
pub fn scaling_experiment(
    spec: &ExperimentSpec,
    multipliers: &[usize],
) -> Result<ExperimentOutcome, Error> {
    let mut spec = spec.clone();
    spec.multipliers = multipliers.to_vec();
    spec.validate()?;
    let corpus = materialize_corpus(&spec.corpus)?;
    check_vocab(&spec, &corpus)?;
    let out_root = spec.out_dir.join(&spec.name);

    let forget_ids = corpus.forget_item_ids();
    let largest = spec.multipliers.iter().max().copied().unwrap_or(0);
    if largest * spec.chunk_size > forget_ids.len() {
        return Err(Error::Config(format!(
            "multiplier {largest} needs {} forget items per language, corpus has {}",
            largest * spec.chunk_size,
            forget_ids.len()
        )));
    }

    let seed = spec.seeds[0];
    let original = obtain_original(&spec, &corpus, seed)?;
    let seed_dir = out_root.join(seed.to_string());
    let mut summary_rows = comparison_rows(&evaluate_rows("Original", &original, &corpus)?);
    let mut runs = Vec::new();

    // One sub-corpus per multiplier, shared by its batch and sequential runs.
    struct Variant {
        label: String,
        chunks: Option<Vec<HashSet<u64>>>,
        ids: Vec<u64>,
    }
    let mut variants = Vec::new();
    for &m in &spec.multipliers {
        let ids: Vec<u64> = forget_ids.iter().copied().take(m * spec.chunk_size).collect();
        variants.push(Variant { label: format!("batch_x{m}"), chunks: None, ids: ids.clone() });
        let chunks: Vec<HashSet<u64>> =
            ids.chunks(spec.chunk_size).map(|c| c.iter().copied().collect()).collect();
        variants.push(Variant { label: format!("sequential_x{m}"), chunks: Some(chunks), ids });
    }

    let cap = worker_cap()?;
    let jobs: Vec<Job<'_, Vec<ReportRow>>> = variants
        .iter()
        .map(|variant| {
            let spec = &spec;
            let corpus = &corpus;
            let original = &original;
            let dir = seed_dir.join(&variant.label);
            Box::new(move || {
                let subset: HashSet<u64> = variant.ids.iter().copied().collect();
                let sub = corpus.with_forget_subset(&subset)?;
                let config = UnlearnConfig { seed, ..spec.unlearn.clone() };
                let (params, history) = match &variant.chunks {
                    None => unlearn(original.clone(), original, &sub, &config)?,
                    Some(chunks) => {
                        sequential_unlearn(original.clone(), original, &sub, chunks, &config)?
                    }
                };
                let mut rows = evaluate_rows("Original", original, &sub)?;
                rows.extend(evaluate_rows(&variant.label, &params, &sub)?);
                write_run_dir(&dir, &rows, &history, &params)?;
                Ok(rows)
            }) as Job<'_, Vec<ReportRow>>
        })
        .collect();

    for (variant, result) in variants.iter().zip(run_jobs(cap, jobs)) {
        let rows = result?;
        summary_rows.extend(comparison_rows(
            &rows.iter().filter(|r| r.method == variant.label).cloned().collect::<Vec<_>>(),
        ));
        runs.push((variant.label.clone(), rows));
    }

    let (summary_csv, summary_md) = write_summary(&out_root, &spec, &summary_rows)?;
    Ok(ExperimentOutcome { out_root, runs, summary_rows, summary_csv, summary_md })
}

/// Shows why multilingual unlearning is needed: ascent confined to the pivot
/// language (`pivot_ga`) barely touches the other languages' memorized
/// content, while the multilingual objective (`multilingual`) removes it
/// everywhere.  Uses the first seed.
pub fn transfer_demo(spec: &ExperimentSpec) -> Result<ExperimentOutcome, Error> {
    spec.validate()?;
    let corpus = materialize_corpus(&spec.corpus)?;
    check_vocab(spec, &corpus)?;
    let out_root = spec.out_dir.join(&spec.name);

    let seed = spec.seeds[0];
    let original = obtain_original(spec, &corpus, seed)?;
    let seed_dir = out_root.join(seed.to_string());
    let pivot = corpus.pivot_code().to_string();
    let original_rows = evaluate_rows("Original", &original, &corpus)?;

    enum Plan {
        PivotGa,
        Multilingual,
    }
    let variants = [("pivot_ga", Plan::PivotGa), ("multilingual", Plan::Multilingual)];

    let cap = worker_cap()?;
    let jobs: Vec<Job<'_, Vec<ReportRow>>> = variants
        .iter()
        .map(|(label, plan)| {
            let corpus = &corpus;
            let original = &original;
            let original_rows = &original_rows;
            let pivot = pivot.clone();
            let dir = seed_dir.join(label);
            Box::new(move || {
                let (params, history) = match plan {
                    Plan::PivotGa => {
                        let config = UnlearnConfig {
                            seed,
                            language_sampling: LanguageSchedule::Fixed(pivot.clone()),
                            eval_languages: Some(vec![pivot.clone()]),
                            ..spec.unlearn.clone()
                        };
                        grad_ascent_plus(original.clone(), corpus, &config)?
                    }
                    Plan::Multilingual => {
                        let config = UnlearnConfig { seed, ..spec.unlearn.clone() };
                        unlearn(original.clone(), original, corpus, &config)?
                    }
                };
                let mut rows = original_rows.clone();
                rows.extend(evaluate_rows(label, &params, corpus)?);
                write_run_dir(&dir, &rows, &history, &params)?;
                Ok(rows)
            }) as Job<'_, Vec<ReportRow>>
        })
        .collect();

    let mut summary_rows = comparison_rows(&original_rows);
    let mut runs = Vec::new();
    for ((label, _), result) in variants.iter().zip(run_jobs(cap, jobs)) {
        let rows = result?;
        summary_rows.extend(comparison_rows(
            &rows.iter().filter(|r| r.method == *label).cloned().collect::<Vec<_>>(),
        ));
        runs.push((label.to_string(), rows));
    }

    let (summary_csv, summary_md) = write_summary(&out_root, spec, &summary_rows)?;
    Ok(ExperimentOutcome { out_root, runs, summary_rows, summary_csv, summary_md })
}

/// Dispatches on the spec's recipe.
pub fn run_recipe(spec: &ExperimentSpec) -> Result<ExperimentOutcome, Error> {
    match spec.recipe {
        Recipe::Single => run_experiment(spec),
        Recipe::KappaAblation => kappa_ablation(spec, &spec.fixed_kappas.clone()),
        Recipe::Scaling => scaling_experiment(spec, &spec.multipliers.clone()),
        Recipe::TransferDemo => transfer_demo(spec),
    }
}

/// Parses a corpus spec file for `gen-corpus`: either a `[corpus]` section
/// or bare root keys, using the same keys as experiment files.
pub fn load_corpus_source(path: &Path) -> Result<CorpusSource, Error> {
    let text = std::fs::read_to_string(path)?;
    let file = kv::parse(&text).map_err(|(line, m)| config_err(path, line, m))?;
    let entries: Vec<KvEntry> = match file.sections.iter().find(|s| s.name == "corpus") {
        Some(section) => section.entries.clone(),
        None => file.root.clone(),
    };
    parse_corpus_source(path, &entries)
}

// ── Tests ───────────────────────────────────────────────────────────────────
