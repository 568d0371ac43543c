//! The unlearning loop: alternating forget/retain updates with random
//! language sampling, guarded early stopping, and checkpoint selection —
//! plus pretraining and the one-language-at-a-time and chunked variants.
//!
//! One run repeats a two-step cycle: sample a language, take one optimizer
//! step *minimizing the mean log-probability* of a forget batch (ascent on
//! the usual objective); sample a language again, take one step minimizing
//! the strength-scaled retention loss on a batch from a fixed retain subset.
//! After each epoch the student is scored on forget-set accuracy and
//! validation perplexity; an epoch counts as an improvement only when its
//! perplexity stays under a guardrail ceiling *and* its forget accuracy is
//! the lowest seen.  The run stops after a fixed number of consecutive
//! non-improvements and returns the best accepted checkpoint (or the
//! starting parameters when nothing was ever accepted).
//!
//! Retention strength 0 makes every retain step a true no-op: the loss is
//! scaled by zero, every gradient is exactly ±0.0, and the optimizer skips
//! zero-gradient steps entirely, so the trajectory is bit-identical to pure
//! gradient ascent with idle steps in between.

use std::collections::HashSet;
use std::io::{self, BufRead};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    CorpusError, LanguageBatchSampler, LanguageSampling, ParallelCorpus, Sequence, Split,
};
use crate::losses::{
    forget_step_loss, retain_step_loss, sequence_eval, LossError, RetainMode, SequenceEval,
};
use crate::metrics::{self, EvalOptions};
use crate::model::{ModelError, ModelParams};
use crate::optim::{clip_global_norm, AdamW, GuardedSelector, LinearSchedule, OptimError};
use crate::tensor::{Tape, TensorError};

// ── Errors ──────────────────────────────────────────────────────────────────

/// Failures in training runs.
#[derive(Debug)]
pub enum TrainError {
    /// A configuration field is unusable.
    Config { field: &'static str, message: String },
    /// A loss became non-finite; training aborted with its location.
    NonFinite {
        step: u64,
        phase: String,
        language: String,
        what: &'static str,
        value: f64,
    },
    /// Pretraining never memorized the forget set to the threshold.
    Memorization {
        achieved: f64,
        threshold: f64,
        epochs: usize,
    },
    /// Forget-set chunks do not partition the forget set.
    ChunkCoverage(String),
    Corpus(CorpusError),
    Model(ModelError),
    Loss(LossError),
    Optim(OptimError),
    Tensor(TensorError),
    Io(io::Error),
}

impl std::fmt::Display for TrainError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainError::Config { field, message } => {
                write!(f, "invalid config `{field}`: {message}")
            }
            TrainError::NonFinite {
                step,
                phase,
                language,
                what,
                value,
            } => write!(
                f,
                "aborted: non-finite {what} ({value}) at step {step} \
                 ({phase} step on `{language}`)"
            ),
            TrainError::Memorization {
                achieved,
                threshold,
                epochs,
            } => write!(
                f,
                "pretraining reached forget-set accuracy {achieved:.4} after {epochs} \
                 epochs, below the memorization threshold {threshold}; increase model \
                 capacity (d_model, n_layers) or max_epochs"
            ),
            TrainError::ChunkCoverage(detail) => {
                write!(f, "forget chunks must partition the forget set: {detail}")
            }
            TrainError::Corpus(e) => write!(f, "corpus: {e}"),
            TrainError::Model(e) => write!(f, "model: {e}"),
            TrainError::Loss(e) => write!(f, "loss: {e}"),
            TrainError::Optim(e) => write!(f, "optimizer: {e}"),
            TrainError::Tensor(e) => write!(f, "tensor: {e}"),
            TrainError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for TrainError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            TrainError::Corpus(e) => Some(e),
            TrainError::Model(e) => Some(e),
            TrainError::Loss(e) => Some(e),
            TrainError::Optim(e) => Some(e),
            TrainError::Tensor(e) => Some(e),
            TrainError::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<CorpusError> for TrainError {
    fn from(e: CorpusError) -> Self {
        TrainError::Corpus(e)
    }
}
impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}
impl From<LossError> for TrainError {
    fn from(e: LossError) -> Self {
        TrainError::Loss(e)
    }
}
impl From<OptimError> for TrainError {
    fn from(e: OptimError) -> Self {
        TrainError::Optim(e)
    }
}
impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Tensor(e)
    }
}
impl From<io::Error> for TrainError {
    fn from(e: io::Error) -> Self {
        TrainError::Io(e)
    }
}

// ── Configuration ───────────────────────────────────────────────────────────

/// Which languages the two samplers draw from across a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LanguageSchedule {
    /// Every batch picks a language uniformly at random.
    Uniform,
    /// Every batch comes from this language.
    Fixed(String),
    /// One full guarded run per language, in declaration order, each stage
    /// continuing from the previous stage's result.
    OracleSequential,
}

impl std::fmt::Display for LanguageSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LanguageSchedule::Uniform => write!(f, "uniform"),
            LanguageSchedule::Fixed(code) => write!(f, "fixed({code})"),
            LanguageSchedule::OracleSequential => write!(f, "oracle-sequential"),
        }
    }
}

/// Knobs of one unlearning run.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlearnConfig {
    /// Peak learning rate of the warmup/decay schedule.
    pub learning_rate: f64,
    /// Fraction of total steps spent warming up.
    pub warmup_ratio: f64,
    /// Retention strength: the retain step minimizes `lambda ·` retention
    /// loss, so 0 disables retention exactly.
    pub lambda: f64,
    /// Sequences per batch, both phases.
    pub batch_size: usize,
    /// Size of the retain subset drawn once at run start; every retain batch
    /// comes from this subset.
    pub retain_sample_count: usize,
    /// Upper bound on epochs (one epoch = one pass over the forget pool).
    pub max_epochs: usize,
    /// Consecutive non-improving validations tolerated before stopping.
    pub early_stop_tolerance: usize,
    /// Guardrail slack: epochs whose validation perplexity exceeds
    /// `(1 + delta) ·` the starting model's are never selected.
    pub ppl_guard_delta: f64,
    /// Global gradient-norm ceiling, if any.
    pub grad_clip: Option<f64>,
    /// Decoupled weight decay (keep 0 for exact zero-gradient no-ops).
    pub weight_decay: f64,
    pub seed: u64,
    pub language_sampling: LanguageSchedule,
    /// How retain steps combine distillation and hard-label terms.
    pub retain_mode: RetainMode,
    /// Languages scored during validation (None = all).
    pub eval_languages: Option<Vec<String>>,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            learning_rate: 5e-4,
            warmup_ratio: 0.1,
            lambda: 1.0,
            batch_size: 32,
            retain_sample_count: 32,
            max_epochs: 100,
            early_stop_tolerance: 5,
            ppl_guard_delta: 0.3,
            grad_clip: Some(1.0),
            weight_decay: 0.0,
            seed: 0,
            language_sampling: LanguageSchedule::Uniform,
            retain_mode: RetainMode::Adaptive,
            eval_languages: None,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &'static str, message: String| Err(TrainError::Config { field, message });
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning_rate", format!("{} must be positive", self.learning_rate));
        }
        if !self.warmup_ratio.is_finite() || !(0.0..1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio", format!("{} outside [0, 1)", self.warmup_ratio));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return bad("lambda", format!("{} must be finite and non-negative", self.lambda));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if self.retain_sample_count < self.batch_size {
            return bad(
                "retain_sample_count",
                format!(
                    "{} is smaller than batch_size {}",
                    self.retain_sample_count, self.batch_size
                ),
            );
        }
        if self.early_stop_tolerance == 0 {
            return bad("early_stop_tolerance", "must be at least 1".into());
        }
        if !self.ppl_guard_delta.is_finite() || self.ppl_guard_delta < 0.0 {
            return bad(
                "ppl_guard_delta",
                format!("{} must be finite and non-negative", self.ppl_guard_delta),
            );
        }
        if let Some(c) = self.grad_clip {
            if !c.is_finite() || c <= 0.0 {
                return bad("grad_clip", format!("{c} must be finite and positive"));
            }
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return bad(
                "weight_decay",
                format!("{} must be finite and non-negative", self.weight_decay),
            );
        }
        if let Some(langs) = &self.eval_languages {
            if langs.is_empty() {
                return bad("eval_languages", "must name at least one language".into());
            }
        }
        self.retain_mode.validate()?;
        Ok(())
    }

    /// Checks the parts that depend on the corpus.
    fn validate_against(&self, corpus: &ParallelCorpus) -> Result<(), TrainError> {
        if self.retain_sample_count > corpus.split_len(Split::Retain) {
            return Err(TrainError::Config {
                field: "retain_sample_count",
                message: format!(
                    "{} exceeds the retain split size {}",
                    self.retain_sample_count,
                    corpus.split_len(Split::Retain)
                ),
            });
        }
        if let Some(langs) = &self.eval_languages {
            for code in langs {
                if corpus.lang_index(code).is_none() {
                    return Err(TrainError::Config {
                        field: "eval_languages",
                        message: format!("unknown language `{code}`"),
                    });
                }
            }
        }
        Ok(())
    }
}

// ── Run history ─────────────────────────────────────────────────────────────

/// Which objective an optimizer step minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forget,
    Retain,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Forget => "forget",
            Phase::Retain => "retain",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One optimizer step.  Loss fields hold batch means and are present only
/// when the phase's objective computed them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// Stage index for multi-stage runs; 0 for plain runs.
    #[serde(default)]
    pub stage: usize,
    pub phase: Phase,
    pub language: String,
    pub lr: f64,
    pub grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_lt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_lm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_r: Option<f64>,
}

/// One end-of-epoch validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    /// Stage index for multi-stage runs; 0 for plain runs.
    #[serde(default)]
    pub stage: usize,
    /// Epoch within its stage.
    pub epoch: usize,
    /// Optimizer steps completed when this validation ran.
    pub step: u64,
    /// Mean forget-set accuracy over the scored languages.
    pub forget_ma: f64,
    /// Mean validation perplexity over the scored languages.
    pub val_ppl: f64,
    /// Perplexity stayed under the guardrail ceiling.
    pub accepted: bool,
    /// Became the new best checkpoint.
    pub improved: bool,
    /// Consecutive non-improving validations so far.
    pub streak: usize,
}

/// A chronological training log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HistoryRecord {
    Step(StepRecord),
    Validation(ValidationRecord),
}

/// Chronological log of one run: every optimizer step and every validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub records: Vec<HistoryRecord>,
}

impl RunHistory {
    pub fn push_step(&mut self, record: StepRecord) {
        self.records.push(HistoryRecord::Step(record));
    }

    pub fn push_validation(&mut self, record: ValidationRecord) {
        self.records.push(HistoryRecord::Validation(record));
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            HistoryRecord::Step(s) => Some(s),
            _ => None,
        })
    }

    pub fn validations(&self) -> impl Iterator<Item = &ValidationRecord> {
        self.records.iter().filter_map(|r| match r {
            HistoryRecord::Validation(v) => Some(v),
            _ => None,
        })
    }

    /// Number of optimizer steps recorded.
    pub fn step_count(&self) -> usize {
        self.steps().count()
    }

    /// Whether step phases strictly alternate forget → retain → forget…
    pub fn phases_alternate(&self) -> bool {
        self.steps().enumerate().all(|(i, s)| {
            s.phase == if i % 2 == 0 { Phase::Forget } else { Phase::Retain }
        })
    }

    /// Appends another run's records as stage `stage`, renumbering its step
    /// counters to continue this history's.
    fn append_stage(&mut self, stage_history: RunHistory, stage: usize) {
        let offset = self.step_count() as u64;
        for mut record in stage_history.records {
            match &mut record {
                HistoryRecord::Step(s) => {
                    s.step += offset;
                    s.stage = stage;
                }
                HistoryRecord::Validation(v) => {
                    v.step += offset;
                    v.stage = stage;
                }
            }
            self.records.push(record);
        }
    }

    /// Writes one JSON record per line.
    pub fn write_jsonl(&self, path: &Path) -> io::Result<()> {
        let mut out = String::new();
        for record in &self.records {
            let line = serde_json::to_string(record)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            out.push_str(&line);
            out.push('\n');
        }
        std::fs::write(path, out)
    }

    /// Reads a log written by [`Self::write_jsonl`].
    pub fn read_jsonl(path: &Path) -> io::Result<RunHistory> {
        let file = std::fs::File::open(path)?;
        let mut records = Vec::new();
        for (i, line) in io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: HistoryRecord = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("line {}: {e}", i + 1),
                )
            })?;
            records.push(record);
        }
        Ok(RunHistory { records })
    }
}

// ── Single optimizer steps ──────────────────────────────────────────────────

/// Which loss a step minimizes.
pub(crate) enum StepKind<'m> {
    Forget,
    Retain { mode: &'m RetainMode, strength: f64 },
}

/// Batch-mean loss values observed during one step.
pub(crate) struct StepStats {
    pub objective: f64,
    pub grad_norm: f64,
    pub l_f: Option<f64>,
    pub l_lt: Option<f64>,
    pub l_lm: Option<f64>,
    pub kappa: Option<f64>,
    pub l_r: Option<f64>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn global_norm(grads: &[Vec<f64>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|&x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Builds the step's loss on a fresh tape, backpropagates, clips, and applies
/// one optimizer update to `student`.
pub(crate) fn optimize_batch(
    student: &mut ModelParams,
    teacher: Option<&ModelParams>,
    batch: &[&Sequence],
    kind: &StepKind<'_>,
    optimizer: &mut AdamW,
    lr: f64,
    grad_clip: Option<f64>,
    step: u64,
    phase: &str,
    language: &str,
) -> Result<StepStats, TrainError> {
    let non_finite = |what: &'static str, value: f64| TrainError::NonFinite {
        step,
        phase: phase.to_string(),
        language: language.to_string(),
        what,
        value,
    };

    let mut tape = Tape::new();
    let bound = student.bind(&mut tape, true);
    let teacher_bound = match (teacher, kind) {
        (Some(t), StepKind::Retain { mode, .. }) if mode.needs_teacher() => {
            Some(t.bind(&mut tape, false))
        }
        _ => None,
    };

    let mut evals: Vec<SequenceEval> = Vec::with_capacity(batch.len());
    for seq in batch {
        let rows = bound.next_token_log_dists(&mut tape, &seq.tokens)?;
        let teacher_rows = match &teacher_bound {
            Some(tb) => Some(tb.next_token_log_dists(&mut tape, &seq.tokens)?),
            None => None,
        };
        evals.push(sequence_eval(&mut tape, rows, teacher_rows, &seq.tokens[1..])?);
    }

    let (loss_id, mut stats) = match kind {
        StepKind::Forget => {
            let loss = forget_step_loss(&mut tape, &evals)?;
            let stats = StepStats {
                objective: 0.0,
                grad_norm: 0.0,
                l_f: None,
                l_lt: None,
                l_lm: None,
                kappa: None,
                l_r: None,
            };
            (loss, stats)
        }
        StepKind::Retain { mode, strength } => {
            let uses_kl = mode.needs_teacher();
            let uses_hard = !matches!(mode, RetainMode::KlOnly);
            let l_lt = if uses_kl {
                let vals: Vec<f64> = evals
                    .iter()
                    .map(|e| tape.value(e.distill.expect("teacher rows were bound")))
                    .collect::<Result<_, _>>()?;
                Some(mean(&vals))
            } else {
                None
            };
            let l_lm = if uses_hard {
                let vals: Vec<f64> = evals
                    .iter()
                    .map(|e| tape.value(e.mean_log_prob).map(|v| -v))
                    .collect::<Result<_, _>>()?;
                Some(mean(&vals))
            } else {
                None
            };
            let rb = retain_step_loss(&mut tape, &evals, mode, *strength)?;
            let l_r = tape.value(rb.unscaled)?;
            let stats = StepStats {
                objective: 0.0,
                grad_norm: 0.0,
                l_f: None,
                l_lt,
                l_lm,
                kappa: Some(rb.mean_mix_weight),
                l_r: Some(l_r),
            };
            (rb.loss, stats)
        }
    };

    stats.objective = tape.value(loss_id)?;
    if let StepKind::Forget = kind {
        stats.l_f = Some(stats.objective);
    }
    if !stats.objective.is_finite() {
        return Err(non_finite("loss", stats.objective));
    }

    tape.backward(loss_id)?;
    let mut grads: Vec<Vec<f64>> = bound
        .param_ids()
        .iter()
        .map(|&id| match tape.grad(id) {
            Some(g) => g.to_vec(),
            None => vec![0.0; tape.data(id).len()],
        })
        .collect();
    drop(tape);

    stats.grad_norm = match grad_clip {
        Some(limit) => clip_global_norm(&mut grads, limit)?,
        None => global_norm(&grads),
    };
    if !stats.grad_norm.is_finite() {
        return Err(non_finite("gradient norm", stats.grad_norm));
    }

    let views: Vec<&mut [f64]> = student
        .groups_mut()
        .iter_mut()
        .map(|(_, t)| t.data.as_mut_slice())
        .collect();
    let grad_views: Vec<&[f64]> = grads.iter().map(|g| g.as_slice()).collect();
    optimizer.step(lr, views, &grad_views)?;
    Ok(stats)
}

// ── Validation scoring ──────────────────────────────────────────────────────

/// Mean forget-set accuracy and mean validation perplexity over the scored
/// languages.
fn guard_metrics(
    params: &ModelParams,
    corpus: &ParallelCorpus,
    languages: &Option<Vec<String>>,
) -> Result<(f64, f64), TrainError> {
    let opts = EvalOptions {
        splits: vec![Split::Forget, Split::Validation],
        probing: false,
        length_normalized_pa: false,
        languages: languages.clone(),
    };
    let report = metrics::evaluate(params, corpus, &opts)?;
    let (mut ma_sum, mut ma_n, mut ppl_sum, mut ppl_n) = (0.0, 0usize, 0.0, 0usize);
    for ((_, split), values) in &report.languages {
        match split {
            Split::Forget => {
                ma_sum += values.ma;
                ma_n += 1;
            }
            Split::Validation => {
                ppl_sum += values.ppl;
                ppl_n += 1;
            }
            _ => {}
        }
    }
    Ok((ma_sum / ma_n as f64, ppl_sum / ppl_n as f64))
}

/// Lowest per-language forget-set accuracy and mean validation perplexity.
fn memorization_floor(
    params: &ModelParams,
    corpus: &ParallelCorpus,
) -> Result<(f64, f64), TrainError> {
    let opts = EvalOptions {
        splits: vec![Split::Forget, Split::Validation],
        probing: false,
        length_normalized_pa: false,
        languages: None,
    };
    let report = metrics::evaluate(params, corpus, &opts)?;
    let mut floor = f64::INFINITY;
    let (mut ppl_sum, mut ppl_n) = (0.0, 0usize);
    for ((_, split), values) in &report.languages {
        match split {
            Split::Forget => floor = floor.min(values.ma),
            Split::Validation => {
                ppl_sum += values.ppl;
                ppl_n += 1;
            }
            _ => {}
        }
    }
    Ok((floor, ppl_sum / ppl_n as f64))
}

// ── The alternating loop ────────────────────────────────────────────────────

/// Shared engine behind [`unlearn`] and the baselines: alternates one forget
/// step and one retain step per cycle under `config`, with the retain step
/// built per `config.retain_mode`.  `teacher` may be omitted only for modes
/// that never consult it.
pub(crate) fn run_alternating(
    student: ModelParams,
    teacher: Option<&ModelParams>,
    corpus: &ParallelCorpus,
    config: &UnlearnConfig,
) -> Result<(ModelParams, RunHistory), TrainError> {
    config.validate()?;
    config.validate_against(corpus)?;
    let mode = &config.retain_mode;
    if mode.needs_teacher() && teacher.is_none() {
        return Err(TrainError::Config {
            field: "retain_mode",
            message: format!("{mode} retention requires a teacher model"),
        });
    }
    if let Some(t) = teacher {
        t.compatible_with(&student)?;
    }
    let sampling = match &config.language_sampling {
        LanguageSchedule::Uniform => LanguageSampling::Uniform,
        LanguageSchedule::Fixed(code) => LanguageSampling::Fixed(code.clone()),
        LanguageSchedule::OracleSequential => {
            return Err(TrainError::Config {
                field: "language_sampling",
                message: "oracle-sequential runs must go through oracle_unlearn".into(),
            })
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // The retain subset is fixed for the whole run.
    let mut retain_ids: Vec<u64> = corpus.split(Split::Retain)[0]
        .iter()
        .map(|s| s.item_id)
        .collect();
    retain_ids.shuffle(&mut rng);
    retain_ids.truncate(config.retain_sample_count);
    let retain_subset: HashSet<u64> = retain_ids.into_iter().collect();

    let mut forget_sampler =
        LanguageBatchSampler::new(corpus, Split::Forget, config.batch_size, &sampling, None)?;
    let mut retain_sampler = LanguageBatchSampler::new(
        corpus,
        Split::Retain,
        config.batch_size,
        &sampling,
        Some(&retain_subset),
    )?;

    let cycles_per_epoch =
        (forget_sampler.pool_len() + config.batch_size - 1) / config.batch_size;
    let total_steps = config.max_epochs * cycles_per_epoch * 2;
    let mut history = RunHistory::default();
    if total_steps == 0 {
        return Ok((student, history));
    }
    let schedule = LinearSchedule::new(config.learning_rate, config.warmup_ratio, total_steps)?;
    let sizes: Vec<usize> = student.groups().iter().map(|(_, t)| t.data.len()).collect();
    let mut optimizer = AdamW::new(&sizes, config.weight_decay)?;

    let (_, reference_ppl) = guard_metrics(&student, corpus, &config.eval_languages)?;
    let mut selector = GuardedSelector::new(
        reference_ppl,
        config.ppl_guard_delta,
        config.early_stop_tolerance,
    )?;

    let mut params = student;
    let start_snapshot = params.clone();
    let mut best: Option<ModelParams> = None;
    let mut step: u64 = 0;

    'epochs: for epoch in 0..config.max_epochs {
        for _ in 0..cycles_per_epoch {
            // Forget step.
            let (lang_idx, batch) = forget_sampler.next_batch(&mut rng);
            let language = corpus.languages()[lang_idx].code.clone();
            let lr = schedule.lr(step as usize);
            let stats = optimize_batch(
                &mut params,
                None,
                &batch,
                &StepKind::Forget,
                &mut optimizer,
                lr,
                config.grad_clip,
                step,
                Phase::Forget.as_str(),
                &language,
            )?;
            history.push_step(StepRecord {
                step,
                stage: 0,
                phase: Phase::Forget,
                language,
                lr,
                grad_norm: stats.grad_norm,
                l_f: stats.l_f,
                l_lt: None,
                l_lm: None,
                kappa: None,
                l_r: None,
            });
            step += 1;

            // Retain step.
            let (lang_idx, batch) = retain_sampler.next_batch(&mut rng);
            let language = corpus.languages()[lang_idx].code.clone();
            let lr = schedule.lr(step as usize);
            let stats = optimize_batch(
                &mut params,
                teacher,
                &batch,
                &StepKind::Retain {
                    mode,
                    strength: config.lambda,
                },
                &mut optimizer,
                lr,
                config.grad_clip,
                step,
                Phase::Retain.as_str(),
                &language,
            )?;
            history.push_step(StepRecord {
                step,
                stage: 0,
                phase: Phase::Retain,
                language,
                lr,
                grad_norm: stats.grad_norm,
                l_f: None,
                l_lt: stats.l_lt,
                l_lm: stats.l_lm,
                kappa: stats.kappa,
                l_r: stats.l_r,
            });
            step += 1;
        }

        let (forget_ma, val_ppl) = guard_metrics(&params, corpus, &config.eval_languages)?;
        let verdict = selector.observe(epoch, forget_ma, val_ppl);
        if verdict.improved {
            best = Some(params.clone());
        }
        history.push_validation(ValidationRecord {
            stage: 0,
            epoch,
            step,
            forget_ma,
            val_ppl,
            accepted: verdict.accepted,
            improved: verdict.improved,
            streak: verdict.streak,
        });
        if verdict.stop {
            break 'epochs;
        }
    }

    Ok((best.unwrap_or(start_snapshot), history))
}

// ── Public operations ───────────────────────────────────────────────────────

/// Runs the adaptive teacher-student unlearning loop and returns the best
/// guarded checkpoint with its full history.
///
/// The `teacher` is the frozen pre-unlearning model: it supplies the
/// distillation targets and the per-sequence confidence weights, and the
/// student typically starts as a copy of it.  With
/// [`LanguageSchedule::OracleSequential`] this delegates to
/// [`oracle_unlearn`].
pub fn unlearn(
    student: ModelParams,
    teacher: &ModelParams,
    corpus: &ParallelCorpus,
    config: &UnlearnConfig,
) -> Result<(ModelParams, RunHistory), TrainError> {
    if config.language_sampling == LanguageSchedule::OracleSequential {
        return oracle_unlearn(student, teacher, corpus, config);
    }
    run_alternating(student, Some(teacher), corpus, config)
}

/// Unlearns one language at a time: a full guarded run restricted to each
/// language in declaration order, every stage continuing from the previous
/// stage's result.  Histories are concatenated with stage indices and
/// globally renumbered steps, so the total step count shows the
/// linear-in-languages cost.
pub fn oracle_unlearn(
    student: ModelParams,
    teacher: &ModelParams,
    corpus: &ParallelCorpus,
    config: &UnlearnConfig,
) -> Result<(ModelParams, RunHistory), TrainError> {
    config.validate()?;
    let mut params = student;
    let mut history = RunHistory::default();
    for (stage, lang) in corpus.languages().iter().enumerate() {
        let mut stage_config = config.clone();
        stage_config.language_sampling = LanguageSchedule::Fixed(lang.code.clone());
        stage_config.eval_languages = Some(vec![lang.code.clone()]);
        stage_config.seed = config.seed.wrapping_add(stage as u64);
        let (next, stage_history) =
            run_alternating(params, Some(teacher), corpus, &stage_config)?;
        params = next;
        history.append_stage(stage_history, stage);
    }
    Ok((params, history))
}

/// Unlearns the forget set in chunks: one full guarded run per chunk, each
/// continuing from the previous result, with the retain set fixed
/// throughout.  The chunks must partition the forget set exactly.
pub fn sequential_unlearn(
    student: ModelParams,
    teacher: &ModelParams,
    corpus: &ParallelCorpus,
    chunks: &[HashSet<u64>],
    config: &UnlearnConfig,
) -> Result<(ModelParams, RunHistory), TrainError> {
    config.validate()?;
    if chunks.is_empty() {
        return Err(TrainError::ChunkCoverage("no chunks given".into()));
    }
    let forget_ids: HashSet<u64> = corpus.forget_item_ids().into_iter().collect();
    let mut seen: HashSet<u64> = HashSet::new();
    for (i, chunk) in chunks.iter().enumerate() {
        if chunk.is_empty() {
            return Err(TrainError::ChunkCoverage(format!("chunk {i} is empty")));
        }
        for &id in chunk {
            if !forget_ids.contains(&id) {
                return Err(TrainError::ChunkCoverage(format!(
                    "chunk {i} references item {id}, which is not in the forget set"
                )));
            }
            if !seen.insert(id) {
                return Err(TrainError::ChunkCoverage(format!(
                    "item {id} appears in more than one chunk"
                )));
            }
        }
    }
    if seen.len() != forget_ids.len() {
        return Err(TrainError::ChunkCoverage(format!(
            "chunks cover {} of {} forget items",
            seen.len(),
            forget_ids.len()
        )));
    }

    let mut params = student;
    let mut history = RunHistory::default();
    for (stage, chunk) in chunks.iter().enumerate() {
        let restricted = corpus.with_forget_subset(chunk)?;
        let mut stage_config = config.clone();
        stage_config.seed = config.seed.wrapping_add(stage as u64);
        let (next, stage_history) =
            run_alternating(params, Some(teacher), &restricted, &stage_config)?;
        params = next;
        history.append_stage(stage_history, stage);
    }
    Ok((params, history))
}

// ── Pretraining ─────────────────────────────────────────────────────────────

/// Knobs for producing a memorized starting model.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once every language's forget-set accuracy reaches this.
    pub memorization_threshold: f64,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            learning_rate: 1e-3,
            warmup_ratio: 0.1,
            batch_size: 32,
            max_epochs: 300,
            memorization_threshold: 0.9,
            weight_decay: 0.0,
            grad_clip: Some(1.0),
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &'static str, message: String| Err(TrainError::Config { field, message });
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning_rate", format!("{} must be positive", self.learning_rate));
        }
        if !self.warmup_ratio.is_finite() || !(0.0..1.0).contains(&self.warmup_ratio) {
            return bad("warmup_ratio", format!("{} outside [0, 1)", self.warmup_ratio));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs", "must be at least 1".into());
        }
        if !self.memorization_threshold.is_finite()
            || !(0.0..=1.0).contains(&self.memorization_threshold)
            || self.memorization_threshold == 0.0
        {
            return bad(
                "memorization_threshold",
                format!("{} outside (0, 1]", self.memorization_threshold),
            );
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return bad(
                "weight_decay",
                format!("{} must be finite and non-negative", self.weight_decay),
            );
        }
        if let Some(c) = self.grad_clip {
            if !c.is_finite() || c <= 0.0 {
                return bad("grad_clip", format!("{c} must be finite and positive"));
            }
        }
        Ok(())
    }
}

/// Ordinary language-model training on the pretraining pool plus the forget
/// and retain splits (validation and test stay held out), with mixed-language
/// batches, until every language's forget-set accuracy reaches the
/// memorization threshold.  Returns the first set of parameters that clears
/// the threshold, or a diagnostic error if the horizon runs out first.
pub fn pretrain(
    model: ModelParams,
    corpus: &ParallelCorpus,
    config: &PretrainConfig,
) -> Result<ModelParams, TrainError> {
    config.validate()?;
    let mut pool: Vec<&Sequence> = Vec::new();
    for lists in [corpus.pretrain(), corpus.split(Split::Forget), corpus.split(Split::Retain)] {
        for lang_seqs in lists {
            pool.extend(lang_seqs.iter());
        }
    }
    if pool.is_empty() {
        return Err(TrainError::Config {
            field: "corpus",
            message: "no training sequences (pretrain, forget, and retain are all empty)".into(),
        });
    }

    let steps_per_epoch = (pool.len() + config.batch_size - 1) / config.batch_size;
    let schedule = LinearSchedule::new(
        config.learning_rate,
        config.warmup_ratio,
        config.max_epochs * steps_per_epoch,
    )?;
    let sizes: Vec<usize> = model.groups().iter().map(|(_, t)| t.data.len()).collect();
    let mut optimizer = AdamW::new(&sizes, config.weight_decay)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut params = model;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut best_floor = 0.0_f64;
    let mut step: u64 = 0;
    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sequence> = chunk.iter().map(|&i| pool[i]).collect();
            let lr = schedule.lr(step as usize);
            optimize_batch(
                &mut params,
                None,
                &batch,
                &StepKind::Retain {
                    mode: &RetainMode::HardLabel,
                    strength: 1.0,
                },
                &mut optimizer,
                lr,
                config.grad_clip,
                step,
                "pretrain",
                "mixed",
            )?;
            step += 1;
        }
        let (floor, _) = memorization_floor(&params, corpus)?;
        best_floor = best_floor.max(floor);
        if floor >= config.memorization_threshold {
            return Ok(params);
        }
    }
    Err(TrainError::Memorization {
        achieved: best_floor,
        threshold: config.memorization_threshold,
        epochs: config.max_epochs,
    })
}

// ── Tests ───────────────────────────────────────────────────────────────────
