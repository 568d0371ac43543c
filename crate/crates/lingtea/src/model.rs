//! A tiny pre-norm decoder-only transformer language model.
//!
//! The architecture is the standard one, shrunk until a laptop CPU can train
//! it in minutes: learned token + absolute position embeddings, `n_layers`
//! blocks of (layer norm → causal multi-head attention → residual, layer
//! norm → GELU MLP → residual), a final layer norm, and an untied output
//! projection to vocabulary logits. Attention projections carry no biases;
//! the MLP does.
//!
//! Parameters live in named groups ([`ModelParams`]) so that optimizers,
//! checkpoints, and task-vector arithmetic can all address them uniformly.
//! Initialization is fully determined by the config's seed: two calls to
//! [`ModelParams::init`] with the same config produce bit-identical weights.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::{Tape, Tensor, TensorError, TensorId};

/// Variance epsilon used by every layer norm in the model.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Width multiplier of the MLP hidden layer.
pub const MLP_RATIO: usize = 4;

/// Standard deviation of the weight initialization.
pub const INIT_STD: f64 = 0.02;

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug)]
pub enum ModelError {
    /// The config itself is unusable (zero sizes, indivisible heads, ...).
    Config(String),
    /// A token id at or above `vocab_size` was fed to the model.
    Vocab { token: usize, vocab_size: usize },
    /// A sequence is too long for the position table, or too short to score.
    SequenceLength { len: usize, min: usize, max: usize },
    /// Two parameter sets (or a checkpoint and its expectation) disagree
    /// about a named group.
    Structure { group: String, detail: String },
    /// A checkpoint file is not in the expected format.
    Format(String),
    /// A checkpoint file ended mid-record.
    Truncated,
    Io(std::io::Error),
    Tensor(TensorError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Config(msg) => write!(f, "invalid model config: {msg}"),
            ModelError::Vocab { token, vocab_size } => {
                write!(f, "token id {token} is outside the vocabulary (size {vocab_size})")
            }
            ModelError::SequenceLength { len, min, max } => {
                write!(f, "sequence length {len} outside supported range {min}..={max}")
            }
            ModelError::Structure { group, detail } => {
                write!(f, "parameter group `{group}`: {detail}")
            }
            ModelError::Format(msg) => write!(f, "bad checkpoint format: {msg}"),
            ModelError::Truncated => write!(f, "checkpoint file is truncated"),
            ModelError::Io(e) => write!(f, "checkpoint i/o: {e}"),
            ModelError::Tensor(e) => write!(f, "tensor failure inside model: {e}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<TensorError> for ModelError {
    fn from(e: TensorError) -> Self {
        ModelError::Tensor(e)
    }
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ModelError::Truncated
        } else {
            ModelError::Io(e)
        }
    }
}

pub type ModelResult<T> = Result<T, ModelError>;

// ── Config ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub max_seq_len: usize,
    /// Seed for weight initialization.
    pub seed: u64,
}

impl ModelConfig {
    /// The default toy scale: big enough to memorize a synthetic corpus,
    /// small enough to finite-difference.
    pub fn toy(seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size: 512,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            max_seq_len: 64,
            seed,
        }
    }

    pub fn validate(&self) -> ModelResult<()> {
        if self.vocab_size == 0 {
            return Err(ModelError::Config("vocab_size must be positive".into()));
        }
        if self.d_model == 0 || self.n_layers == 0 || self.n_heads == 0 || self.max_seq_len == 0 {
            return Err(ModelError::Config(
                "d_model, n_layers, n_heads and max_seq_len must all be positive".into(),
            ));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Total scalar parameter count, in closed form:
    /// `2·V·d + T_max·d + L·(12·d² + 9·d) + 2·d`.
    ///
    /// Per layer: four `d×d` attention matrices plus two `d×4d` MLP matrices
    /// give `(4 + 2·ratio)·d²`, and the two norms (`4d`), the hidden bias
    /// (`ratio·d`), and the output bias (`d`) give `(5 + ratio)·d`.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        2 * self.vocab_size * d
            + self.max_seq_len * d
            + self.n_layers * ((4 + 2 * MLP_RATIO) * d * d + (5 + MLP_RATIO) * d)
            + 2 * d
    }

    /// The ordered (name, shape) layout of every parameter group.
    pub fn group_layout(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let hidden = MLP_RATIO * d;
        let mut groups = vec![
            ("token_embedding".to_string(), vec![self.vocab_size, d]),
            ("position_embedding".to_string(), vec![self.max_seq_len, d]),
        ];
        for l in 0..self.n_layers {
            groups.push((format!("layer{l}.attn_norm.gamma"), vec![d]));
            groups.push((format!("layer{l}.attn_norm.beta"), vec![d]));
            groups.push((format!("layer{l}.attn.wq"), vec![d, d]));
            groups.push((format!("layer{l}.attn.wk"), vec![d, d]));
            groups.push((format!("layer{l}.attn.wv"), vec![d, d]));
            groups.push((format!("layer{l}.attn.wo"), vec![d, d]));
            groups.push((format!("layer{l}.mlp_norm.gamma"), vec![d]));
            groups.push((format!("layer{l}.mlp_norm.beta"), vec![d]));
            groups.push((format!("layer{l}.mlp.w1"), vec![d, hidden]));
            groups.push((format!("layer{l}.mlp.b1"), vec![hidden]));
            groups.push((format!("layer{l}.mlp.w2"), vec![hidden, d]));
            groups.push((format!("layer{l}.mlp.b2"), vec![d]));
        }
        groups.push(("final_norm.gamma".to_string(), vec![d]));
        groups.push(("final_norm.beta".to_string(), vec![d]));
        groups.push(("output.weight".to_string(), vec![d, self.vocab_size]));
        groups
    }
}

/// Number of parameter groups per transformer block.
const GROUPS_PER_LAYER: usize = 12;

// ── Parameters ──────────────────────────────────────────────────────────

/// A named, ordered set of parameter tensors plus the config that shaped
/// them. Group order is fixed by [`ModelConfig::group_layout`] and is part
/// of the checkpoint format.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    groups: Vec<(String, Tensor)>,
}

impl ModelParams {
    /// Seeded initialization: weights are N(0, [`INIT_STD`]²), norm scales
    /// start at one, and norm shifts plus MLP biases start at zero.
    pub fn init(config: &ModelConfig) -> ModelResult<ModelParams> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("finite std");
        let groups = config
            .group_layout()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = if name.ends_with(".gamma") {
                    vec![1.0; n]
                } else if name.ends_with(".beta") || name.ends_with(".b1") || name.ends_with(".b2")
                {
                    vec![0.0; n]
                } else {
                    (0..n).map(|_| normal.sample(&mut rng)).collect()
                };
                let tensor = Tensor {
                    shape,
                    data,
                    requires_grad: true,
                    grad: None,
                };
                (name, tensor)
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            groups,
        })
    }

    /// Builds params from pre-existing tensors; used by the checkpoint
    /// loader. Group names, order and shapes must match the config layout.
    pub fn from_groups(
        config: ModelConfig,
        groups: Vec<(String, Tensor)>,
    ) -> ModelResult<ModelParams> {
        config.validate()?;
        let layout = config.group_layout();
        if groups.len() != layout.len() {
            return Err(ModelError::Structure {
                group: layout
                    .get(groups.len())
                    .map(|(n, _)| n.clone())
                    .unwrap_or_else(|| "<extra>".to_string()),
                detail: format!("expected {} groups, got {}", layout.len(), groups.len()),
            });
        }
        for ((name, tensor), (want_name, want_shape)) in groups.iter().zip(&layout) {
            if name != want_name {
                return Err(ModelError::Structure {
                    group: want_name.clone(),
                    detail: format!("found `{name}` in its place"),
                });
            }
            if &tensor.shape != want_shape {
                return Err(ModelError::Structure {
                    group: name.clone(),
                    detail: format!("shape {:?}, expected {:?}", tensor.shape, want_shape),
                });
            }
        }
        Ok(ModelParams { config, groups })
    }

    pub fn groups(&self) -> &[(String, Tensor)] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.groups
    }

    pub fn group(&self, name: &str) -> Option<&Tensor> {
        self.groups
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn param_count(&self) -> usize {
        self.groups.iter().map(|(_, t)| t.data.len()).sum()
    }

    /// Checks that `other` has the same group names and shapes, naming the
    /// first mismatching group otherwise.
    pub fn compatible_with(&self, other: &ModelParams) -> ModelResult<()> {
        if self.groups.len() != other.groups.len() {
            return Err(ModelError::Structure {
                group: "<count>".to_string(),
                detail: format!(
                    "{} groups vs {} groups",
                    self.groups.len(),
                    other.groups.len()
                ),
            });
        }
        for ((an, at), (bn, bt)) in self.groups.iter().zip(&other.groups) {
            if an != bn {
                return Err(ModelError::Structure {
                    group: an.clone(),
                    detail: format!("other model has `{bn}` in its place"),
                });
            }
            if at.shape != bt.shape {
                return Err(ModelError::Structure {
                    group: an.clone(),
                    detail: format!("shape {:?} vs {:?}", at.shape, bt.shape),
                });
            }
        }
        Ok(())
    }

    /// Copies every group onto a tape. With `trainable` the leaves require
    /// gradients (a student); without, the whole subgraph is frozen (a
    /// teacher) and backward will never touch it.
    pub fn bind<'a>(&'a self, tape: &mut Tape, trainable: bool) -> BoundModel {
        let ids = self
            .groups
            .iter()
            .map(|(_, t)| {
                let mut leaf = t.clone();
                leaf.requires_grad = trainable;
                leaf.grad = None;
                tape.leaf(&leaf)
            })
            .collect();
        BoundModel {
            config: self.config.clone(),
            ids,
        }
    }

    /// Runs the model on one sequence without recording gradients and
    /// returns the `[len, vocab_size]` logits as a standalone tensor.
    pub fn logits(&self, tokens: &[usize]) -> ModelResult<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let out = bound.forward(&mut tape, tokens)?;
        Ok(tape.tensor(out))
    }
}

// ── Forward pass ────────────────────────────────────────────────────────

/// A model whose parameters have been copied onto a specific tape.
/// All forward passes that should share one backward sweep (e.g. every
/// sequence in a batch) go through the same binding.
pub struct BoundModel {
    config: ModelConfig,
    ids: Vec<TensorId>,
}

impl BoundModel {
    pub fn param_ids(&self) -> &[TensorId] {
        &self.ids
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn layer(&self, l: usize, offset: usize) -> TensorId {
        self.ids[2 + l * GROUPS_PER_LAYER + offset]
    }

    fn check_tokens(&self, tokens: &[usize], min_len: usize) -> ModelResult<()> {
        if tokens.len() < min_len || tokens.len() > self.config.max_seq_len {
            return Err(ModelError::SequenceLength {
                len: tokens.len(),
                min: min_len,
                max: self.config.max_seq_len,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(ModelError::Vocab {
                token: bad,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Full forward pass: `[len]` token ids to `[len, vocab_size]` logits.
    ///
    /// Causality is structural: the logits at position `t` depend only on
    /// tokens `0..=t`, so changing a suffix leaves every earlier row
    /// bit-identical.
    pub fn forward(&self, tape: &mut Tape, tokens: &[usize]) -> ModelResult<TensorId> {
        self.check_tokens(tokens, 1)?;
        let t = tokens.len();
        let positions: Vec<usize> = (0..t).collect();

        let tok = tape.embedding(self.ids[0], tokens)?;
        let pos = tape.embedding(self.ids[1], &positions)?;
        let mut x = tape.add(tok, pos)?;

        for l in 0..self.config.n_layers {
            let normed = tape.layer_norm(x, self.layer(l, 0), self.layer(l, 1), LAYER_NORM_EPS)?;
            let q = tape.matmul(normed, self.layer(l, 2))?;
            let k = tape.matmul(normed, self.layer(l, 3))?;
            let v = tape.matmul(normed, self.layer(l, 4))?;
            let attended = tape.causal_attention(q, k, v, self.config.n_heads)?;
            let projected = tape.matmul(attended, self.layer(l, 5))?;
            x = tape.add(x, projected)?;

            let normed = tape.layer_norm(x, self.layer(l, 6), self.layer(l, 7), LAYER_NORM_EPS)?;
            let hidden = tape.matmul(normed, self.layer(l, 8))?;
            let hidden = tape.add_bias(hidden, self.layer(l, 9))?;
            let hidden = tape.gelu(hidden)?;
            let out = tape.matmul(hidden, self.layer(l, 10))?;
            let out = tape.add_bias(out, self.layer(l, 11))?;
            x = tape.add(x, out)?;
        }

        let base = 2 + self.config.n_layers * GROUPS_PER_LAYER;
        let x = tape.layer_norm(x, self.ids[base], self.ids[base + 1], LAYER_NORM_EPS)?;
        Ok(tape.matmul(x, self.ids[base + 2])?)
    }

    /// Next-token log-distributions for positions `1..len`: row `i` is
    /// `log p(· | tokens[0..=i])`, shaped `[len - 1, vocab_size]`.
    pub fn next_token_log_dists(&self, tape: &mut Tape, tokens: &[usize]) -> ModelResult<TensorId> {
        self.check_tokens(tokens, 2)?;
        let logits = self.forward(tape, tokens)?;
        let context = tape.narrow_rows(logits, 0, tokens.len() - 1)?;
        Ok(tape.log_softmax(context)?)
    }

    /// Log-probability of each realized next token: entry `i` is
    /// `log p(tokens[i + 1] | tokens[0..=i])`, shaped `[len - 1]`.
    pub fn sequence_log_probs(&self, tape: &mut Tape, tokens: &[usize]) -> ModelResult<TensorId> {
        let dists = self.next_token_log_dists(tape, tokens)?;
        Ok(tape.gather_log_prob(dists, &tokens[1..])?)
    }
}

// ── Task vectors ────────────────────────────────────────────────────────

/// The elementwise difference between two compatible parameter sets,
/// stored per group.
#[derive(Debug, Clone)]
pub struct TaskVector {
    groups: Vec<(String, Vec<f64>)>,
}

impl TaskVector {
    /// `tuned - base`, group by group.
    pub fn between(tuned: &ModelParams, base: &ModelParams) -> ModelResult<TaskVector> {
        base.compatible_with(tuned)?;
        let groups = tuned
            .groups
            .iter()
            .zip(&base.groups)
            .map(|((name, t), (_, b))| {
                let delta = t.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
                (name.clone(), delta)
            })
            .collect();
        Ok(TaskVector { groups })
    }

    /// An all-zero vector shaped like `params`.
    pub fn zeros_like(params: &ModelParams) -> TaskVector {
        TaskVector {
            groups: params
                .groups
                .iter()
                .map(|(name, t)| (name.clone(), vec![0.0; t.data.len()]))
                .collect(),
        }
    }

    pub fn groups(&self) -> &[(String, Vec<f64>)] {
        &self.groups
    }

    fn check_against(&self, params: &ModelParams) -> ModelResult<()> {
        if self.groups.len() != params.groups.len() {
            return Err(ModelError::Structure {
                group: "<count>".to_string(),
                detail: format!(
                    "task vector has {} groups, model has {}",
                    self.groups.len(),
                    params.groups.len()
                ),
            });
        }
        for ((dn, dv), (pn, pt)) in self.groups.iter().zip(&params.groups) {
            if dn != pn {
                return Err(ModelError::Structure {
                    group: pn.clone(),
                    detail: format!("task vector has `{dn}` in its place"),
                });
            }
            if dv.len() != pt.data.len() {
                return Err(ModelError::Structure {
                    group: pn.clone(),
                    detail: format!("{} elements vs {}", dv.len(), pt.data.len()),
                });
            }
        }
        Ok(())
    }
}

/// Task-vector editing: `θ' = θ₀ − α_f·Δ_f + α_r·Δ_r`, elementwise.
///
/// Pure parameter arithmetic — no gradients, no tape.
pub fn apply_task_vectors(
    base: &ModelParams,
    delta_forget: &TaskVector,
    delta_retain: &TaskVector,
    alpha_forget: f64,
    alpha_retain: f64,
) -> ModelResult<ModelParams> {
    delta_forget.check_against(base)?;
    delta_retain.check_against(base)?;
    if !alpha_forget.is_finite() || !alpha_retain.is_finite() {
        return Err(ModelError::Config(
            "task vector scaling factors must be finite".to_string(),
        ));
    }
    let mut out = base.clone();
    for ((_, t), ((_, df), (_, dr))) in out
        .groups
        .iter_mut()
        .zip(delta_forget.groups.iter().zip(&delta_retain.groups))
    {
        for ((p, f), r) in t.data.iter_mut().zip(df).zip(dr) {
            *p = *p - alpha_forget * f + alpha_retain * r;
        }
    }
    Ok(out)
}

// ── Tests ───────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size: 17,
            d_model: 8,
            n_layers: 2,
            n_heads: 2,
            max_seq_len: 12,
            seed,
        }
    }

    #[test]
    fn param_count_matches_closed_form() {
        for config in [small_config(0), ModelConfig::toy(1)] {
            let params = ModelParams::init(&config).unwrap();
            assert_eq!(params.param_count(), config.param_count());
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = ModelParams::init(&small_config(7)).unwrap();
        let b = ModelParams::init(&small_config(7)).unwrap();
        for ((_, ta), (_, tb)) in a.groups().iter().zip(b.groups()) {
            assert_eq!(ta.data, tb.data);
        }
        let c = ModelParams::init(&small_config(8)).unwrap();
        assert!(a
            .groups()
            .iter()
            .zip(c.groups())
            .any(|((_, ta), (_, tc))| ta.data != tc.data));
    }

    #[test]
    fn config_validation_catches_bad_heads() {
        let mut config = small_config(0);
        config.n_heads = 3;
        assert!(matches!(
            ModelParams::init(&config),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn forward_shape_and_determinism() {
        let params = ModelParams::init(&small_config(3)).unwrap();
        let tokens = [1usize, 5, 2, 9, 16];
        let a = params.logits(&tokens).unwrap();
        assert_eq!(a.shape, vec![5, 17]);
        let b = params.logits(&tokens).unwrap();
        assert_eq!(a.data, b.data, "same weights + tokens must be bit-identical");
    }

    #[test]
    fn forward_is_causal() {
        let params = ModelParams::init(&small_config(4)).unwrap();
        let base = [3usize, 8, 1, 2, 2, 11];
        let mut changed = base;
        changed[4] = 9;
        changed[5] = 0;
        let a = params.logits(&base).unwrap();
        let b = params.logits(&changed).unwrap();
        let v = 17;
        assert_eq!(&a.data[..4 * v], &b.data[..4 * v]);
        assert_ne!(&a.data[4 * v..5 * v], &b.data[4 * v..5 * v]);
    }

    #[test]
    fn forward_rejects_bad_tokens_and_lengths() {
        let params = ModelParams::init(&small_config(5)).unwrap();
        match params.logits(&[1, 17]) {
            Err(ModelError::Vocab { token: 17, vocab_size: 17 }) => {}
            other => panic!("expected vocab error, got {other:?}"),
        }
        let long = vec![0usize; 13];
        assert!(matches!(
            params.logits(&long),
            Err(ModelError::SequenceLength { len: 13, .. })
        ));
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        assert!(matches!(
            bound.sequence_log_probs(&mut tape, &[4]),
            Err(ModelError::SequenceLength { len: 1, min: 2, .. })
        ));
    }

    #[test]
    fn sequence_log_probs_are_log_probabilities() {
        let params = ModelParams::init(&small_config(6)).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let lp = bound
            .sequence_log_probs(&mut tape, &[1, 2, 3, 4])
            .unwrap();
        assert_eq!(tape.shape(lp), &[3]);
        assert!(tape.data(lp).iter().all(|&v| v <= 0.0 && v.is_finite()));
    }

    #[test]
    fn task_vector_roundtrip_recovers_tuned_params() {
        // Perturb a copy multiplicatively (so every difference is exactly
        // representable) and check θ₀ − (−1)·Δ + 0 lands back on it bitwise.
        let base = ModelParams::init(&small_config(9)).unwrap();
        let mut tuned = base.clone();
        for (_, t) in tuned.groups_mut() {
            for v in t.data.iter_mut() {
                *v *= 1.5;
            }
        }
        let delta = TaskVector::between(&tuned, &base).unwrap();
        let zero = TaskVector::zeros_like(&base);
        let restored = apply_task_vectors(&base, &delta, &zero, -1.0, 0.0).unwrap();
        for ((_, a), (_, b)) in restored.groups().iter().zip(tuned.groups()) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn zero_deltas_and_zero_alphas_leave_base_untouched() {
        let base = ModelParams::init(&small_config(10)).unwrap();
        let zero = TaskVector::zeros_like(&base);
        let same = apply_task_vectors(&base, &zero, &zero, 1.0, 1.0).unwrap();
        for ((_, a), (_, b)) in same.groups().iter().zip(base.groups()) {
            assert_eq!(a.data, b.data);
        }

        let mut tuned = base.clone();
        for (_, t) in tuned.groups_mut() {
            for v in t.data.iter_mut() {
                *v += 0.25;
            }
        }
        let delta = TaskVector::between(&tuned, &base).unwrap();
        let same = apply_task_vectors(&base, &delta, &delta, 0.0, 0.0).unwrap();
        for ((_, a), (_, b)) in same.groups().iter().zip(base.groups()) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn incompatible_shapes_name_the_offending_group() {
        let a = ModelParams::init(&small_config(11)).unwrap();
        let mut other_config = small_config(11);
        other_config.vocab_size = 19;
        let b = ModelParams::init(&other_config).unwrap();
        match a.compatible_with(&b) {
            Err(ModelError::Structure { group, .. }) => {
                assert_eq!(group, "token_embedding");
            }
            other => panic!("expected structure error, got {other:?}"),
        }
    }
}
