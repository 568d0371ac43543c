//! Optimization machinery: AdamW, the warmup/decay learning-rate schedule,
//! global gradient clipping, and the guarded early-stopping selector.
//!
//! The optimizer exposes one deliberately strong guarantee: a step whose
//! gradients are all exactly zero, under zero weight decay, mutates nothing —
//! not the parameters, not the moment estimates, not the step counter.  A
//! disabled objective (e.g. a retention term scaled by strength 0) therefore
//! leaves the training trajectory bit-identical to never having stepped,
//! instead of letting stale momentum keep pushing the weights around.

// ── Errors ──────────────────────────────────────────────────────────────────

/// Failures in optimizer or schedule configuration and use.
#[derive(Debug)]
pub enum OptimError {
    /// A base or per-step learning rate is negative or not finite.
    LearningRate(f64),
    /// A weight-decay coefficient is negative or not finite.
    Decay(f64),
    /// A warmup ratio is outside `[0, 1)` or not finite.
    WarmupRatio(f64),
    /// A schedule was asked for zero total steps.
    TotalSteps,
    /// The number of parameter groups differs from the optimizer state.
    GroupCount { got: usize, want: usize },
    /// A parameter or gradient group has the wrong length.
    GroupSize {
        group: usize,
        got: usize,
        want: usize,
    },
    /// A clipping limit is non-positive or not finite.
    ClipLimit(f64),
    /// A reference perplexity for the guardrail is non-positive or not finite.
    Reference(f64),
    /// A guardrail slack is negative or not finite.
    Delta(f64),
    /// An early-stopping tolerance of zero would stop before the first check.
    Tolerance,
}

impl std::fmt::Display for OptimError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptimError::LearningRate(v) => {
                write!(f, "learning rate {v} must be finite and non-negative")
            }
            OptimError::Decay(v) => {
                write!(f, "weight decay {v} must be finite and non-negative")
            }
            OptimError::WarmupRatio(v) => write!(f, "warmup ratio {v} outside [0, 1)"),
            OptimError::TotalSteps => write!(f, "schedule needs at least one step"),
            OptimError::GroupCount { got, want } => {
                write!(f, "expected {want} parameter groups, got {got}")
            }
            OptimError::GroupSize { group, got, want } => {
                write!(f, "group {group}: expected {want} elements, got {got}")
            }
            OptimError::ClipLimit(v) => {
                write!(f, "clip limit {v} must be finite and positive")
            }
            OptimError::Reference(v) => {
                write!(f, "reference perplexity {v} must be finite and positive")
            }
            OptimError::Delta(v) => {
                write!(f, "guardrail slack {v} must be finite and non-negative")
            }
            OptimError::Tolerance => write!(f, "early-stopping tolerance must be at least 1"),
        }
    }
}

impl std::error::Error for OptimError {}

// ── AdamW ───────────────────────────────────────────────────────────────────

/// First-moment decay rate.
pub const ADAM_BETA1: f64 = 0.9;
/// Second-moment decay rate.
pub const ADAM_BETA2: f64 = 0.999;
/// Denominator fuzz keeping updates finite for vanishing second moments.
pub const ADAM_EPS: f64 = 1e-8;

/// Adam with decoupled weight decay, holding per-group moment estimates.
///
/// Parameters are passed to [`AdamW::step`] as one mutable slice per group;
/// group count and sizes are fixed at construction and validated on every
/// step.
pub struct AdamW {
    weight_decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    /// Fresh optimizer state for parameter groups of the given sizes.
    pub fn new(group_sizes: &[usize], weight_decay: f64) -> Result<AdamW, OptimError> {
        if !weight_decay.is_finite() || weight_decay < 0.0 {
            return Err(OptimError::Decay(weight_decay));
        }
        Ok(AdamW {
            weight_decay,
            t: 0,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    /// Number of completed (state-mutating) steps.
    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one update with the given learning rate.
    ///
    /// If every gradient entry is exactly zero and the weight decay is zero,
    /// the call returns after validation without mutating anything: the
    /// parameters, moments, and step counter all stay bit-identical.
    pub fn step(
        &mut self,
        lr: f64,
        mut params: Vec<&mut [f64]>,
        grads: &[&[f64]],
    ) -> Result<(), OptimError> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(OptimError::LearningRate(lr));
        }
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(OptimError::GroupCount {
                got: params.len().min(grads.len()),
                want: self.m.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() {
                return Err(OptimError::GroupSize {
                    group: i,
                    got: p.len(),
                    want: self.m[i].len(),
                });
            }
            if g.len() != self.m[i].len() {
                return Err(OptimError::GroupSize {
                    group: i,
                    got: g.len(),
                    want: self.m[i].len(),
                });
            }
        }

        let all_zero = grads.iter().all(|g| g.iter().all(|&x| x == 0.0));
        if all_zero && self.weight_decay == 0.0 {
            return Ok(());
        }

        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..self.m.len() {
            let x = &mut params[i];
            let g = grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..g.len() {
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                x[j] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + self.weight_decay * x[j]);
            }
        }
        Ok(())
    }
}

// ── Gradient clipping ───────────────────────────────────────────────────────

/// Rescales all gradient groups so their joint L2 norm is at most `limit`,
/// returning the pre-clip norm.  Gradients at or under the limit are left
/// untouched.  A non-finite norm (from a diverged backward pass) is returned
/// as-is without scaling, for the caller to detect.
pub fn clip_global_norm(grads: &mut [Vec<f64>], limit: f64) -> Result<f64, OptimError> {
    if !limit.is_finite() || limit <= 0.0 {
        return Err(OptimError::ClipLimit(limit));
    }
    let mut sum_sq = 0.0;
    for g in grads.iter() {
        for &x in g {
            sum_sq += x * x;
        }
    }
    let norm = sum_sq.sqrt();
    if norm.is_finite() && norm > limit {
        let scale = limit / norm;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    Ok(norm)
}

// ── Learning-rate schedule ──────────────────────────────────────────────────

/// Piecewise-linear warmup/decay schedule over a fixed horizon.
///
/// With warmup `w = round(ratio · total)` and last index `n = total − 1`:
///
/// * `lr(s) = base · s / w` for `s < w` — zero at step 0 whenever `w > 0`;
/// * `lr(s) = base · (n − s) / (n − w)` for `w ≤ s ≤ n` — peak `base` at the
///   end of warmup, exactly zero at the final step;
/// * `lr(s) = 0` for `s > n`.
///
/// A single-step horizon runs its only step at the peak rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    base: f64,
    warmup_steps: usize,
    total_steps: usize,
}

impl LinearSchedule {
    pub fn new(base: f64, warmup_ratio: f64, total_steps: usize) -> Result<Self, OptimError> {
        if !base.is_finite() || base < 0.0 {
            return Err(OptimError::LearningRate(base));
        }
        if !warmup_ratio.is_finite() || !(0.0..1.0).contains(&warmup_ratio) {
            return Err(OptimError::WarmupRatio(warmup_ratio));
        }
        if total_steps == 0 {
            return Err(OptimError::TotalSteps);
        }
        let warmup_steps =
            ((warmup_ratio * total_steps as f64).round() as usize).min(total_steps - 1);
        Ok(LinearSchedule {
            base,
            warmup_steps,
            total_steps,
        })
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup_steps
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn peak(&self) -> f64 {
        self.base
    }

    /// Learning rate at the given step index.
    pub fn lr(&self, step: usize) -> f64 {
        let last = self.total_steps - 1;
        if step >= last {
            return if step == 0 { self.base } else { 0.0 };
        }
        if step < self.warmup_steps {
            self.base * step as f64 / self.warmup_steps as f64
        } else if last == self.warmup_steps {
            // Degenerate horizon: the peak coincides with the final step,
            // which the closed form above already forces to zero.
            0.0
        } else {
            self.base * (last - step) as f64 / (last - self.warmup_steps) as f64
        }
    }
}

// ── Guarded early stopping and checkpoint selection ─────────────────────────

/// Outcome of one validation observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    /// Validation perplexity stayed within the guardrail ceiling.
    pub accepted: bool,
    /// Accepted and strictly better (lower forget accuracy) than every
    /// previously accepted observation.
    pub improved: bool,
    /// Consecutive non-improving observations so far.
    pub streak: usize,
    /// The streak has reached the tolerance; training should stop.
    pub stop: bool,
}

/// Tracks validation results, enforcing a perplexity guardrail and stopping
/// after a fixed number of consecutive non-improvements.
///
/// An observation *improves* when its validation perplexity is at most
/// `(1 + delta) · reference` **and** its forget accuracy is strictly lower
/// than the best accepted so far.  Anything else — guardrail violation,
/// equal or higher accuracy, non-finite metrics — extends the non-improving
/// streak, and the streak reaching `tolerance` stops the run.  The best
/// accepted observation's epoch is retained for checkpoint selection.
#[derive(Debug, Clone)]
pub struct GuardedSelector {
    ceiling: f64,
    tolerance: usize,
    best: Option<(usize, f64)>,
    streak: usize,
}

impl GuardedSelector {
    pub fn new(reference_ppl: f64, delta: f64, tolerance: usize) -> Result<Self, OptimError> {
        if !reference_ppl.is_finite() || reference_ppl <= 0.0 {
            return Err(OptimError::Reference(reference_ppl));
        }
        if !delta.is_finite() || delta < 0.0 {
            return Err(OptimError::Delta(delta));
        }
        if tolerance == 0 {
            return Err(OptimError::Tolerance);
        }
        Ok(GuardedSelector {
            ceiling: (1.0 + delta) * reference_ppl,
            tolerance,
            best: None,
            streak: 0,
        })
    }

    /// Highest validation perplexity that still passes the guardrail.
    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    /// Epoch of the best accepted observation, if any was accepted yet.
    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    /// Forget accuracy of the best accepted observation.
    pub fn best_forget_ma(&self) -> Option<f64> {
        self.best.map(|(_, ma)| ma)
    }

    pub fn streak(&self) -> usize {
        self.streak
    }

    /// Records one validation result and reports its verdict.
    pub fn observe(&mut self, epoch: usize, forget_ma: f64, val_ppl: f64) -> Verdict {
        let accepted = val_ppl.is_finite() && forget_ma.is_finite() && val_ppl <= self.ceiling;
        let improved = accepted && self.best.map_or(true, |(_, best)| forget_ma < best);
        if improved {
            self.best = Some((epoch, forget_ma));
            self.streak = 0;
        } else {
            self.streak += 1;
        }
        Verdict {
            accepted,
            improved,
            streak: self.streak,
            stop: self.streak >= self.tolerance,
        }
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference AdamW update for one parameter, mirroring the published
    /// algorithm line by line.
    fn adamw_oracle(
        x: f64,
        g: &[f64],
        lr: f64,
        wd: f64,
    ) -> f64 {
        let (mut m, mut v, mut x) = (0.0, 0.0, x);
        for (t, &gt) in g.iter().enumerate() {
            let t = (t + 1) as i32;
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * gt;
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * gt * gt;
            let m_hat = m / (1.0 - ADAM_BETA1.powi(t));
            let v_hat = v / (1.0 - ADAM_BETA2.powi(t));
            x -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + wd * x);
        }
        x
    }

    #[test]
    fn steps_match_scalar_oracle() {
        let grads = [[0.3, -1.2], [0.05, 0.4], [-0.7, 0.0]];
        let mut params = vec![1.5, -0.25];
        let mut opt = AdamW::new(&[2], 0.0).unwrap();
        for g in &grads {
            let views = vec![params.as_mut_slice()];
            opt.step(0.01, views, &[g.as_slice()]).unwrap();
        }
        for j in 0..2 {
            let series: Vec<f64> = grads.iter().map(|g| g[j]).collect();
            let want = adamw_oracle(if j == 0 { 1.5 } else { -0.25 }, &series, 0.01, 0.0);
            assert!(
                (params[j] - want).abs() < 1e-15,
                "param {j}: {} vs {want}",
                params[j]
            );
        }
        assert_eq!(opt.steps_taken(), 3);
    }

    #[test]
    fn decay_is_decoupled_from_the_adaptive_update() {
        let run = |wd: f64| {
            let mut params = vec![2.0];
            let mut opt = AdamW::new(&[1], wd).unwrap();
            opt.step(0.1, vec![params.as_mut_slice()], &[&[0.5]])
                .unwrap();
            params[0]
        };
        let plain = run(0.0);
        let decayed = run(0.01);
        // Decoupled decay subtracts exactly lr·wd·x on top of the Adam term.
        assert!((plain - decayed - 0.1 * 0.01 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_zero_decay_step_mutates_nothing() {
        let mut params = vec![0.7, -1.1, 3.0];
        let mut opt = AdamW::new(&[3], 0.0).unwrap();
        // Build up non-zero moments first.
        opt.step(0.05, vec![params.as_mut_slice()], &[&[0.2, -0.4, 1.0]])
            .unwrap();
        opt.step(0.05, vec![params.as_mut_slice()], &[&[-0.1, 0.3, 0.5]])
            .unwrap();

        let bits: Vec<u64> = params.iter().map(|x| x.to_bits()).collect();
        let moments_before = (opt.m.clone(), opt.v.clone(), opt.t);
        opt.step(0.05, vec![params.as_mut_slice()], &[&[0.0, -0.0, 0.0]])
            .unwrap();
        let after: Vec<u64> = params.iter().map(|x| x.to_bits()).collect();
        assert_eq!(bits, after, "parameters must be bit-identical");
        assert_eq!(moments_before.0, opt.m);
        assert_eq!(moments_before.1, opt.v);
        assert_eq!(moments_before.2, opt.t, "step counter must not advance");
    }

    #[test]
    fn zero_grad_steps_leave_the_trajectory_unchanged() {
        // Interleaving no-op steps anywhere must reproduce the trajectory of
        // an optimizer that never saw them.
        let grads = [[0.3, -0.2], [0.1, 0.9]];
        let mut with_noops = vec![1.0, -1.0];
        let mut plain = vec![1.0, -1.0];
        let mut opt_a = AdamW::new(&[2], 0.0).unwrap();
        let mut opt_b = AdamW::new(&[2], 0.0).unwrap();
        for g in &grads {
            opt_a
                .step(0.02, vec![with_noops.as_mut_slice()], &[&[0.0, 0.0]])
                .unwrap();
            opt_a
                .step(0.02, vec![with_noops.as_mut_slice()], &[g.as_slice()])
                .unwrap();
            opt_b
                .step(0.02, vec![plain.as_mut_slice()], &[g.as_slice()])
                .unwrap();
        }
        let a: Vec<u64> = with_noops.iter().map(|x| x.to_bits()).collect();
        let b: Vec<u64> = plain.iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_grad_with_decay_still_decays() {
        let mut params = vec![2.0];
        let mut opt = AdamW::new(&[1], 0.5).unwrap();
        opt.step(0.1, vec![params.as_mut_slice()], &[&[0.0]])
            .unwrap();
        assert!(params[0] < 2.0);
    }

    #[test]
    fn step_validates_shapes_and_rates() {
        let mut opt = AdamW::new(&[2], 0.0).unwrap();
        let mut p = vec![0.0, 0.0];
        assert!(matches!(
            opt.step(f64::NAN, vec![p.as_mut_slice()], &[&[0.0, 0.0]]),
            Err(OptimError::LearningRate(_))
        ));
        assert!(matches!(
            opt.step(0.1, vec![p.as_mut_slice()], &[&[0.0]]),
            Err(OptimError::GroupSize { .. })
        ));
        let mut q = vec![0.0];
        assert!(matches!(
            opt.step(
                0.1,
                vec![p.as_mut_slice(), q.as_mut_slice()],
                &[&[0.0, 0.0], &[0.0]]
            ),
            Err(OptimError::GroupCount { .. })
        ));
        assert!(matches!(AdamW::new(&[1], -0.1), Err(OptimError::Decay(_))));
    }

    #[test]
    fn clip_leaves_small_gradients_untouched() {
        let mut grads = vec![vec![0.3, -0.4]]; // norm 0.5
        let norm = clip_global_norm(&mut grads, 1.0).unwrap();
        assert!((norm - 0.5).abs() < 1e-15);
        assert_eq!(grads[0], vec![0.3, -0.4]);
    }

    #[test]
    fn clip_rescales_to_the_limit() {
        let mut grads = vec![vec![3.0], vec![4.0]]; // norm 5
        let norm = clip_global_norm(&mut grads, 1.0).unwrap();
        assert!((norm - 5.0).abs() < 1e-12);
        let clipped = (grads[0][0].powi(2) + grads[1][0].powi(2)).sqrt();
        assert!((clipped - 1.0).abs() < 1e-12);
        assert!(matches!(
            clip_global_norm(&mut grads, 0.0),
            Err(OptimError::ClipLimit(_))
        ));
    }

    #[test]
    fn clip_reports_non_finite_norms_without_scaling() {
        let mut grads = vec![vec![f64::NAN, 1.0]];
        let norm = clip_global_norm(&mut grads, 1.0).unwrap();
        assert!(norm.is_nan());
        assert_eq!(grads[0][1], 1.0);
    }

    #[test]
    fn schedule_matches_the_closed_form_pointwise() {
        let total = 20;
        let sched = LinearSchedule::new(0.5, 0.1, total).unwrap();
        let w = sched.warmup_steps();
        assert_eq!(w, 2);
        let last = total - 1;
        for s in 0..total + 5 {
            let want = if s >= last {
                0.0
            } else if s < w {
                0.5 * s as f64 / w as f64
            } else {
                0.5 * (last - s) as f64 / (last - w) as f64
            };
            assert!(
                (sched.lr(s) - want).abs() <= 1e-12,
                "step {s}: {} vs {want}",
                sched.lr(s)
            );
        }
        assert_eq!(sched.lr(0), 0.0, "first step must start from zero");
        assert_eq!(sched.lr(w), 0.5, "end of warmup must hit the peak");
        assert_eq!(sched.lr(last), 0.0, "final step must land on zero");
    }

    #[test]
    fn schedule_without_warmup_starts_at_peak() {
        let sched = LinearSchedule::new(0.3, 0.0, 10).unwrap();
        assert_eq!(sched.warmup_steps(), 0);
        assert_eq!(sched.lr(0), 0.3);
        assert_eq!(sched.lr(9), 0.0);
    }

    #[test]
    fn schedule_rises_then_falls_monotonically() {
        let sched = LinearSchedule::new(1.0, 0.25, 40).unwrap();
        let w = sched.warmup_steps();
        for s in 1..w {
            assert!(sched.lr(s) > sched.lr(s - 1));
        }
        for s in w + 1..40 {
            assert!(sched.lr(s) < sched.lr(s - 1));
        }
    }

    #[test]
    fn schedule_single_step_runs_at_peak() {
        let sched = LinearSchedule::new(0.2, 0.0, 1).unwrap();
        assert_eq!(sched.lr(0), 0.2);
        assert_eq!(sched.lr(1), 0.0);
    }

    #[test]
    fn schedule_validates_inputs() {
        assert!(matches!(
            LinearSchedule::new(-0.1, 0.1, 10),
            Err(OptimError::LearningRate(_))
        ));
        assert!(matches!(
            LinearSchedule::new(0.1, 1.0, 10),
            Err(OptimError::WarmupRatio(_))
        ));
        assert!(matches!(
            LinearSchedule::new(0.1, 0.1, 0),
            Err(OptimError::TotalSteps)
        ));
    }

    #[test]
    fn selector_stops_after_exactly_the_tolerated_streak() {
        let mut sel = GuardedSelector::new(10.0, 0.3, 5).unwrap();
        // Two improvements, then a run of non-improvements.
        assert!(sel.observe(0, 0.9, 10.0).improved);
        assert!(sel.observe(1, 0.8, 11.0).improved);
        for k in 1..=4 {
            let v = sel.observe(1 + k, 0.8, 11.0); // equal MA: not an improvement
            assert_eq!(v.streak, k);
            assert!(!v.stop, "must not stop at streak {k}");
        }
        let v = sel.observe(6, 0.8, 11.0);
        assert_eq!(v.streak, 5);
        assert!(v.stop, "must stop exactly at the tolerance");
        assert_eq!(sel.best_epoch(), Some(1));
    }

    #[test]
    fn selector_rejects_guardrail_violations() {
        let mut sel = GuardedSelector::new(10.0, 0.3, 3).unwrap();
        assert!((sel.ceiling() - 13.0).abs() < 1e-12);
        let v = sel.observe(0, 0.1, 13.0 + 1e-9); // above the ceiling
        assert!(!v.accepted && !v.improved);
        let v = sel.observe(1, 0.5, 13.0); // exactly at the ceiling: accepted
        assert!(v.accepted && v.improved);
        // A lower MA above the ceiling must never displace the best.
        sel.observe(2, 0.01, 50.0);
        assert_eq!(sel.best_epoch(), Some(1));
        assert_eq!(sel.best_forget_ma(), Some(0.5));
    }

    #[test]
    fn selector_keeps_the_lowest_accepted_forget_accuracy() {
        let mut sel = GuardedSelector::new(10.0, 0.0, 10).unwrap();
        sel.observe(0, 0.9, 9.0);
        sel.observe(1, 0.4, 9.5);
        sel.observe(2, 0.6, 9.0); // worse MA: ignored
        sel.observe(3, 0.4, 8.0); // tie: not strictly better
        assert_eq!(sel.best_epoch(), Some(1));
    }

    #[test]
    fn selector_treats_non_finite_metrics_as_non_improvements() {
        let mut sel = GuardedSelector::new(10.0, 0.3, 2).unwrap();
        let v = sel.observe(0, f64::NAN, 9.0);
        assert!(!v.improved);
        let v = sel.observe(1, 0.5, f64::NAN);
        assert!(!v.improved);
        assert!(v.stop);
        assert_eq!(sel.best_epoch(), None);
    }

    #[test]
    fn selector_validates_inputs() {
        assert!(matches!(
            GuardedSelector::new(0.0, 0.3, 5),
            Err(OptimError::Reference(_))
        ));
        assert!(matches!(
            GuardedSelector::new(10.0, -0.1, 5),
            Err(OptimError::Delta(_))
        ));
        assert!(matches!(
            GuardedSelector::new(10.0, 0.3, 0),
            Err(OptimError::Tolerance)
        ));
    }
}
