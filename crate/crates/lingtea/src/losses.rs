//! Training objectives for forgetting and retention.
//!
//! Everything here operates on next-token log-distribution rows produced by
//! a model forward pass (`[len-1, vocab]`, one row per predicted position).
//!
//! The forget step minimizes the **mean log-probability** of the true next
//! tokens, which is gradient *ascent* on the usual cross-entropy: each step
//! pushes probability mass away from the sequences being unlearned.  The
//! retention step counteracts the collateral damage with a per-sequence mix
//! of two ingredients:
//!
//! * a **distillation** term — KL divergence from the frozen pre-unlearning
//!   teacher's next-token distributions to the student's — which preserves
//!   the full predictive distribution where the teacher is reliable, and
//! * a **hard-label** term — plain negative mean log-likelihood of the true
//!   tokens — which re-anchors the student to the data itself where the
//!   teacher is not.
//!
//! The mixing weight is the teacher's own confidence: the mean probability
//! it assigns to the true next tokens of that sequence.  Confident teacher →
//! lean on distillation; unsure teacher → lean on the data.  The weight is
//! computed from teacher outputs only and no gradient flows through it.
//!
//! The individual terms are exposed as named functions (`forget_loss`,
//! `language_modeling_loss`, `language_teaching_loss`, `teacher_confidence`,
//! `retain_loss`, `total_loss`); [`LossBundle`] collects their scalar values
//! for one jointly evaluated sequence and enforces the arithmetic identities
//! that tie them together.

use crate::tensor::{Tape, TensorError, TensorId};

// ── Errors ──────────────────────────────────────────────────────────────────

/// Failures in loss assembly.
#[derive(Debug)]
pub enum LossError {
    /// A batch reduction was asked for zero sequences.
    EmptyBatch,
    /// A sequence has no predicted positions (fewer than two tokens).
    EmptySequence,
    /// The retention mode needs teacher outputs but none were provided.
    TeacherRequired(&'static str),
    /// A fixed mixing weight is outside `[0, 1]` or not finite.
    MixWeight(f64),
    /// A retention strength is negative or not finite.
    Strength(f64),
    /// A distillation divergence is negative beyond numerical tolerance.
    Divergence(f64),
    /// A loss term that must be finite is not.
    NonFinite(&'static str),
    /// An arithmetic identity between loss terms does not hold.
    Identity {
        name: &'static str,
        got: f64,
        want: f64,
    },
    /// An underlying tensor operation failed.
    Tensor(TensorError),
}

impl std::fmt::Display for LossError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossError::EmptyBatch => write!(f, "loss over an empty batch"),
            LossError::EmptySequence => write!(f, "sequence has no predicted positions"),
            LossError::TeacherRequired(what) => {
                write!(f, "{what} requires teacher outputs, but none were provided")
            }
            LossError::MixWeight(k) => {
                write!(f, "mixing weight {k} outside [0, 1]")
            }
            LossError::Strength(l) => {
                write!(f, "retention strength {l} must be finite and non-negative")
            }
            LossError::Divergence(v) => {
                write!(f, "distillation divergence {v} is negative beyond tolerance")
            }
            LossError::NonFinite(name) => write!(f, "loss term `{name}` is not finite"),
            LossError::Identity { name, got, want } => {
                write!(f, "loss identity `{name}` violated: got {got}, want {want}")
            }
            LossError::Tensor(e) => write!(f, "tensor operation: {e}"),
        }
    }
}

impl std::error::Error for LossError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            LossError::Tensor(e) => Some(e),
            _ => None,
        }
    }
}

impl From<TensorError> for LossError {
    fn from(e: TensorError) -> Self {
        LossError::Tensor(e)
    }
}

// ── Named objective terms ───────────────────────────────────────────────────

/// Mean of the per-position log-probabilities (scalar node).  This is the
/// quantity *minimized* on forget batches: lowering the mean log-probability
/// is gradient ascent on the ordinary language-modeling objective, pushing
/// the model away from the sequence.
pub fn forget_loss(tape: &mut Tape, log_probs: TensorId) -> Result<TensorId, LossError> {
    Ok(tape.mean(log_probs)?)
}

/// Negative mean of the per-position log-probabilities (scalar node): the
/// ordinary hard-label language-modeling objective.  Always the exact
/// negation of [`forget_loss`] on the same inputs.
pub fn language_modeling_loss(
    tape: &mut Tape,
    log_probs: TensorId,
) -> Result<TensorId, LossError> {
    let mean = tape.mean(log_probs)?;
    Ok(tape.scale(mean, -1.0)?)
}

/// Row-averaged KL divergence from the teacher's next-token log-distribution
/// rows to the student's (scalar node).  Zero exactly when every row agrees;
/// gradients flow into the student rows only if the teacher rows are frozen.
pub fn language_teaching_loss(
    tape: &mut Tape,
    teacher_rows: TensorId,
    student_rows: TensorId,
) -> Result<TensorId, LossError> {
    Ok(tape.kl_divergence(teacher_rows, student_rows)?)
}

/// Mean probability the teacher's log-distribution rows assign to the true
/// next tokens, clamped to `[0, 1]`.  Reads values only; adds nothing to the
/// graph, so no gradient ever flows through the confidence.
pub fn teacher_confidence(
    tape: &Tape,
    teacher_rows: TensorId,
    targets: &[usize],
) -> Result<f64, LossError> {
    let shape = tape.shape(teacher_rows).to_vec();
    if shape.len() != 2 || shape[0] != targets.len() {
        return Err(LossError::Tensor(TensorError::ShapeMismatch {
            op: "confidence",
            lhs: shape,
            rhs: vec![targets.len()],
        }));
    }
    let cols = shape[1];
    let data = tape.data(teacher_rows);
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= cols {
            return Err(LossError::Tensor(TensorError::IndexOutOfRange {
                op: "confidence",
                index: t,
                bound: cols,
            }));
        }
        total += data[r * cols + t].exp();
    }
    Ok((total / targets.len() as f64).clamp(0.0, 1.0))
}

/// Confidence-weighted retention objective (scalar node):
/// `kappa · distill + (1 − kappa) · hard_label`.  Both terms are scaled and
/// added regardless of the weight, so the endpoints 0 and 1 silence one term
/// through an exact multiply-by-zero rather than by skipping it.
pub fn retain_loss(
    tape: &mut Tape,
    distill: TensorId,
    hard_label: TensorId,
    kappa: f64,
) -> Result<TensorId, LossError> {
    if !kappa.is_finite() || !(0.0..=1.0).contains(&kappa) {
        return Err(LossError::MixWeight(kappa));
    }
    let a = tape.scale(distill, kappa)?;
    let b = tape.scale(hard_label, 1.0 - kappa)?;
    Ok(tape.add(a, b)?)
}

/// Combined objective for a jointly evaluated step (scalar node):
/// `forget + strength · retain`.  Differentiating this node yields exactly
/// the sum of the two terms' separate gradients.
pub fn total_loss(
    tape: &mut Tape,
    forget: TensorId,
    retain: TensorId,
    strength: f64,
) -> Result<TensorId, LossError> {
    if !strength.is_finite() || strength < 0.0 {
        return Err(LossError::Strength(strength));
    }
    let scaled = tape.scale(retain, strength)?;
    Ok(tape.add(forget, scaled)?)
}

// ── Loss bundle ─────────────────────────────────────────────────────────────

/// Scalar values of every objective term for one jointly evaluated sequence,
/// with the arithmetic identities between them enforced.
///
/// The identities only hold when all terms refer to the same data, so a
/// bundle describes a single sequence (or a single batch evaluated with one
/// shared mixing weight) — aggregating bundles by field-wise averaging does
/// not preserve `l_r = κ·l_lt + (1−κ)·l_lm` because a mean of products is
/// not a product of means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBundle {
    /// Mean log-probability of the true next tokens (minimized to forget).
    pub l_f: f64,
    /// Teacher→student distillation divergence.
    pub l_lt: f64,
    /// Hard-label language-modeling loss.
    pub l_lm: f64,
    /// Teacher-confidence mixing weight in `[0, 1]`.
    pub kappa: f64,
    /// Retention objective: `kappa·l_lt + (1 − kappa)·l_lm`.
    pub l_r: f64,
    /// Retention strength multiplier.
    pub lambda: f64,
    /// Combined objective: `l_f + lambda·l_r`.
    pub l_total: f64,
}

impl LossBundle {
    /// Tolerance for the internal arithmetic identities.
    pub const IDENTITY_TOL: f64 = 1e-12;
    /// Most negative divergence accepted as numerical noise around zero.
    pub const DIVERGENCE_SLACK: f64 = -1e-12;

    /// Assembles a bundle from the independent terms, deriving `l_r` and
    /// `l_total` so the identities hold by construction; still validates so
    /// out-of-range weights or non-finite terms are rejected.
    pub fn assemble(
        l_f: f64,
        l_lt: f64,
        l_lm: f64,
        kappa: f64,
        lambda: f64,
    ) -> Result<LossBundle, LossError> {
        let l_r = kappa * l_lt + (1.0 - kappa) * l_lm;
        let l_total = l_f + lambda * l_r;
        let bundle = LossBundle {
            l_f,
            l_lt,
            l_lm,
            kappa,
            l_r,
            lambda,
            l_total,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Checks finiteness, weight ranges, divergence non-negativity, and the
    /// two arithmetic identities within [`Self::IDENTITY_TOL`].
    pub fn validate(&self) -> Result<(), LossError> {
        for (name, value) in [
            ("l_f", self.l_f),
            ("l_lt", self.l_lt),
            ("l_lm", self.l_lm),
            ("kappa", self.kappa),
            ("l_r", self.l_r),
            ("lambda", self.lambda),
            ("l_total", self.l_total),
        ] {
            if !value.is_finite() {
                return Err(LossError::NonFinite(name));
            }
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(LossError::MixWeight(self.kappa));
        }
        if self.lambda < 0.0 {
            return Err(LossError::Strength(self.lambda));
        }
        if self.l_lt < Self::DIVERGENCE_SLACK {
            return Err(LossError::Divergence(self.l_lt));
        }
        let want_r = self.kappa * self.l_lt + (1.0 - self.kappa) * self.l_lm;
        if (self.l_r - want_r).abs() > Self::IDENTITY_TOL {
            return Err(LossError::Identity {
                name: "retention mix",
                got: self.l_r,
                want: want_r,
            });
        }
        let want_total = self.l_f + self.lambda * self.l_r;
        if (self.l_total - want_total).abs() > Self::IDENTITY_TOL {
            return Err(LossError::Identity {
                name: "total",
                got: self.l_total,
                want: want_total,
            });
        }
        Ok(())
    }
}

// ── Retention modes ─────────────────────────────────────────────────────────

/// How the retention step combines distillation and hard-label terms.
#[derive(Debug, Clone, PartialEq)]
pub enum RetainMode {
    /// Per-sequence mix weighted by the teacher's confidence in the true
    /// tokens.
    Adaptive,
    /// Both terms with a constant mixing weight in `[0, 1]`; `Fixed(0.0)`
    /// weighs like `HardLabel` and `Fixed(1.0)` like `KlOnly`, but both
    /// terms are still materialized, exercising the full code path.
    Fixed(f64),
    /// Hard-label term only; no teacher needed.
    HardLabel,
    /// Distillation term only.
    KlOnly,
}

impl RetainMode {
    /// Whether this mode consumes teacher outputs.
    pub fn needs_teacher(&self) -> bool {
        !matches!(self, RetainMode::HardLabel)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if let RetainMode::Fixed(k) = self {
            if !k.is_finite() || !(0.0..=1.0).contains(k) {
                return Err(LossError::MixWeight(*k));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for RetainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RetainMode::Adaptive => write!(f, "adaptive"),
            RetainMode::Fixed(k) => write!(f, "fixed({k})"),
            RetainMode::HardLabel => write!(f, "hard-label"),
            RetainMode::KlOnly => write!(f, "kl-only"),
        }
    }
}

// ── Per-sequence evaluation ─────────────────────────────────────────────────

/// Loss ingredients for one sequence, all living on the shared tape.
pub struct SequenceEval {
    /// Per-position `log p_student(true next token)` (vector node, one entry
    /// per predicted position).
    pub log_probs: TensorId,
    /// Mean of `log_probs` (scalar node) — the per-sequence forget term.
    pub mean_log_prob: TensorId,
    /// Row-averaged `KL(teacher ‖ student)` (scalar node), when teacher rows
    /// were provided.
    pub distill: Option<TensorId>,
    /// Teacher's mean probability of the true next tokens, clamped to
    /// `[0, 1]`.  Computed from teacher values only — never differentiated.
    pub teacher_confidence: Option<f64>,
}

/// Builds the per-sequence ingredients from student (and optionally teacher)
/// next-token log-distribution rows.  `targets` are the realized next tokens,
/// one per row.
pub fn sequence_eval(
    tape: &mut Tape,
    student_rows: TensorId,
    teacher_rows: Option<TensorId>,
    targets: &[usize],
) -> Result<SequenceEval, LossError> {
    if targets.is_empty() {
        return Err(LossError::EmptySequence);
    }
    let log_probs = tape.gather_log_prob(student_rows, targets)?;
    let mean_log_prob = forget_loss(tape, log_probs)?;
    let (distill, confidence) = match teacher_rows {
        None => (None, None),
        Some(teacher) => {
            let kl = language_teaching_loss(tape, teacher, student_rows)?;
            let conf = teacher_confidence(tape, teacher, targets)?;
            (Some(kl), Some(conf))
        }
    };
    Ok(SequenceEval {
        log_probs,
        mean_log_prob,
        distill,
        teacher_confidence: confidence,
    })
}

// ── Step losses ─────────────────────────────────────────────────────────────

/// Objective minimized on a forget batch: the batch-mean of the sequences'
/// mean log-probabilities.  Minimizing it drives the probability of the
/// forget sequences down.
pub fn forget_step_loss(tape: &mut Tape, seqs: &[SequenceEval]) -> Result<TensorId, LossError> {
    if seqs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let ids: Vec<TensorId> = seqs.iter().map(|s| s.mean_log_prob).collect();
    Ok(tape.mean_of(&ids)?)
}

/// Retention term for one sequence under `mode` (scalar node).
pub fn retain_term(
    tape: &mut Tape,
    seq: &SequenceEval,
    mode: &RetainMode,
) -> Result<TensorId, LossError> {
    mode.validate()?;
    match mode {
        RetainMode::HardLabel => language_modeling_loss(tape, seq.log_probs),
        RetainMode::KlOnly => seq
            .distill
            .ok_or(LossError::TeacherRequired("distillation-only retention")),
        RetainMode::Adaptive => {
            let kappa = seq
                .teacher_confidence
                .ok_or(LossError::TeacherRequired("adaptive retention"))?;
            mixed_term(tape, seq, kappa)
        }
        RetainMode::Fixed(kappa) => mixed_term(tape, seq, *kappa),
    }
}

/// Both retention ingredients combined through [`retain_loss`].
fn mixed_term(tape: &mut Tape, seq: &SequenceEval, kappa: f64) -> Result<TensorId, LossError> {
    let distill = seq
        .distill
        .ok_or(LossError::TeacherRequired("mixed retention"))?;
    let hard = language_modeling_loss(tape, seq.log_probs)?;
    retain_loss(tape, distill, hard, kappa)
}

/// A retention batch loss with its logging by-products.
pub struct RetainBatch {
    /// Strength-scaled loss to differentiate.
    pub loss: TensorId,
    /// Batch-mean retention loss before strength scaling.
    pub unscaled: TensorId,
    /// Mean mixing weight across the batch: the per-sequence teacher
    /// confidences for `Adaptive`, the constant for `Fixed`, and the
    /// endpoint values 0 / 1 for `HardLabel` / `KlOnly`.
    pub mean_mix_weight: f64,
}

/// Objective minimized on a retain batch: the batch-mean retention term,
/// scaled by `strength`.
pub fn retain_step_loss(
    tape: &mut Tape,
    seqs: &[SequenceEval],
    mode: &RetainMode,
    strength: f64,
) -> Result<RetainBatch, LossError> {
    if !strength.is_finite() || strength < 0.0 {
        return Err(LossError::Strength(strength));
    }
    if seqs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let mut terms = Vec::with_capacity(seqs.len());
    let mut weight_total = 0.0;
    for seq in seqs {
        terms.push(retain_term(tape, seq, mode)?);
        weight_total += match mode {
            RetainMode::Adaptive => seq
                .teacher_confidence
                .ok_or(LossError::TeacherRequired("adaptive retention"))?,
            RetainMode::Fixed(k) => *k,
            RetainMode::HardLabel => 0.0,
            RetainMode::KlOnly => 1.0,
        };
    }
    let unscaled = tape.mean_of(&terms)?;
    let loss = tape.scale(unscaled, strength)?;
    Ok(RetainBatch {
        loss,
        unscaled,
        mean_mix_weight: weight_total / seqs.len() as f64,
    })
}

// ── Tests ───────────────────────────────────────────────────────────────────
