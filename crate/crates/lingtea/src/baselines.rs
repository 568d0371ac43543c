//! Reference unlearning methods the adaptive objective is compared against.
//!
//! All three reuse the trainer's alternating loop or its building blocks, so
//! any differences in outcomes come from the objectives, not the plumbing:
//!
//! * **Gradient ascent plus retention** — ascent on forget batches, plain
//!   hard-label descent on retain batches.  No teacher anywhere.  This is
//!   exactly the adaptive method with the mix weight pinned to 0.
//! * **Gradient ascent plus distillation** — ascent on forget batches,
//!   teacher-student divergence on retain batches.  The adaptive method with
//!   the mix weight pinned to 1.
//! * **Negated task vectors** — no alternating loop at all: finetune the
//!   base model separately toward the forget set and toward the retain set,
//!   then subtract the forget direction and add the retain direction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ParallelCorpus, Sequence, Split};
use crate::losses::RetainMode;
use crate::model::{apply_task_vectors, ModelParams, TaskVector};
use crate::optim::{AdamW, LinearSchedule};
use crate::trainer::{
    optimize_batch, run_alternating, RunHistory, StepKind, TrainError, UnlearnConfig,
};

// ── Method names ────────────────────────────────────────────────────────────

/// The comparison methods, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    GradAscentPlus,
    NegTaskVectorPlus,
    GaKl,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [
        BaselineKind::GradAscentPlus,
        BaselineKind::NegTaskVectorPlus,
        BaselineKind::GaKl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::GradAscentPlus => "grad_ascent_plus",
            BaselineKind::NegTaskVectorPlus => "neg_task_vector_plus",
            BaselineKind::GaKl => "ga_kl",
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown baseline `{s}`"))
    }
}

// ── Alternating baselines ───────────────────────────────────────────────────

/// Gradient ascent on forget batches with hard-label retention: the
/// alternating loop with the retain step's mix weight pinned to the
/// hard-label end.  Needs no teacher.
pub fn grad_ascent_plus(
    student: ModelParams,
    corpus: &ParallelCorpus,
    config: &UnlearnConfig,
) -> Result<(ModelParams, RunHistory), TrainError> {
    let mut config = config.clone();
    config.retain_mode = RetainMode::HardLabel;
    run_alternating(student, None, corpus, &config)
}

/// Gradient ascent on forget batches with pure distillation retention: the
/// alternating loop with the retain step's mix weight pinned to the
/// teacher-divergence end.
pub fn ga_kl(
    student: ModelParams,
    teacher: &ModelParams,
    corpus: &ParallelCorpus,
    config: &UnlearnConfig,
) -> Result<(ModelParams, RunHistory), TrainError> {
    let mut config = config.clone();
    config.retain_mode = RetainMode::KlOnly;
    run_alternating(student, Some(teacher), corpus, &config)
}

// ── Negated task vectors ────────────────────────────────────────────────────

/// Knobs for the task-vector method: both finetunes share the training
/// schedule in `finetune`, and the resulting directions are applied with the
/// two scaling factors.
#[derive(Debug, Clone, PartialEq)]
pub struct NegTaskVectorConfig {
    /// Schedule shared by both finetunes.  Only the optimization fields are
    /// consulted (learning rate, warmup, batch size, epochs, clipping,
    /// weight decay, seed); retention and early-stop fields are ignored
    /// because each finetune is plain language-model descent on one split
    /// for a fixed number of epochs.
    pub finetune: UnlearnConfig,
    /// Scale on the subtracted forget direction.
    pub alpha_forget: f64,
    /// Scale on the added retain direction.
    pub alpha_retain: f64,
}

impl Default for NegTaskVectorConfig {
    fn default() -> Self {
        NegTaskVectorConfig {
            finetune: UnlearnConfig {
                max_epochs: 3,
                ..UnlearnConfig::default()
            },
            alpha_forget: 1.0,
            alpha_retain: 1.0,
        }
    }
}

impl NegTaskVectorConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.finetune.validate()?;
        for (field, value) in [
            ("alpha_forget", self.alpha_forget),
            ("alpha_retain", self.alpha_retain),
        ] {
            if !value.is_finite() {
                return Err(TrainError::Config {
                    field,
                    message: format!("{value} must be finite"),
                });
            }
        }
        Ok(())
    }
}

/// Plain language-model descent on every sequence of one split, mixing
/// languages within batches, for exactly `max_epochs` passes.  No early
/// stopping and no retention: this measures the *direction* finetuning moves
/// the parameters.
fn finetune_split(
    start: &ModelParams,
    corpus: &ParallelCorpus,
    split: Split,
    config: &UnlearnConfig,
) -> Result<ModelParams, TrainError> {
    let mut pool: Vec<&Sequence> = Vec::new();
    for lang_seqs in corpus.split(split) {
        pool.extend(lang_seqs.iter());
    }
    if pool.is_empty() {
        return Err(TrainError::Config {
            field: "corpus",
            message: format!("the {split} split has no sequences to finetune on"),
        });
    }

    let steps_per_epoch = (pool.len() + config.batch_size - 1) / config.batch_size;
    let total_steps = config.max_epochs * steps_per_epoch;
    let mut params = start.clone();
    if total_steps == 0 {
        return Ok(params);
    }
    let schedule = LinearSchedule::new(config.learning_rate, config.warmup_ratio, total_steps)?;
    let sizes: Vec<usize> = params.groups().iter().map(|(_, t)| t.data.len()).collect();
    let mut optimizer = AdamW::new(&sizes, config.weight_decay)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut step: u64 = 0;
    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sequence> = chunk.iter().map(|&i| pool[i]).collect();
            optimize_batch(
                &mut params,
                None,
                &batch,
                &StepKind::Retain {
                    mode: &RetainMode::HardLabel,
                    strength: 1.0,
                },
                &mut optimizer,
                schedule.lr(step as usize),
                config.grad_clip,
                step,
                "finetune",
                "mixed",
            )?;
            step += 1;
        }
    }
    Ok(params)
}

/// Unlearning by parameter arithmetic: finetune the base model on the forget
/// split and, separately and symmetrically, on the retain split; treat each
/// parameter delta as a direction; return
/// `base − alpha_forget · (forget direction) + alpha_retain · (retain
/// direction)`.  With zero epochs or both scales zero the result is the base
/// model, bit for bit.
pub fn neg_task_vector_plus(
    teacher: &ModelParams,
    corpus: &ParallelCorpus,
    config: &NegTaskVectorConfig,
) -> Result<ModelParams, TrainError> {
    config.validate()?;
    let tuned_forget = finetune_split(teacher, corpus, Split::Forget, &config.finetune)?;
    let tuned_retain = finetune_split(teacher, corpus, Split::Retain, &config.finetune)?;
    let delta_forget = TaskVector::between(&tuned_forget, teacher)?;
    let delta_retain = TaskVector::between(&tuned_retain, teacher)?;
    Ok(apply_task_vectors(
        teacher,
        &delta_forget,
        &delta_retain,
        config.alpha_forget,
        config.alpha_retain,
    )?)
}

// ── Tests ───────────────────────────────────────────────────────────────────
