//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Everything here is deliberately small and deterministic: tensors are
//! row-major `Vec<f64>` buffers, a [`Tape`] is a define-by-run arena that
//! records every operation as it executes, and [`Tape::backward`] walks the
//! arena once in reverse to accumulate gradients. Tapes are cheap and are
//! rebuilt for every forward pass; there is no graph caching and no implicit
//! global state, which is what makes bit-identical reruns possible.
//!
//! Design choices worth knowing about:
//!
//! * All arithmetic is `f64`. The models this crate trains are tiny, so we
//!   buy exactness and easy finite-difference checking instead of speed.
//! * No broadcasting, with one exception: [`Tape::add_bias`] adds a vector
//!   across the rows of a matrix. Everything else requires exact shapes.
//! * Scalars are rank-0 tensors (empty shape, one element).
//! * Probability-space operations work in the log domain throughout.
//!   [`Tape::kl_divergence`] treats a term with zero reference mass
//!   (`log p = -inf`) as contributing exactly zero.
//! * Calling [`Tape::backward`] a second time on the same tape is an error;
//!   rebuild the tape instead.

use std::fmt;

// ── Errors ──────────────────────────────────────────────────────────────

/// Everything that can go wrong while building or differentiating a tape.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Two operands whose shapes must agree do not.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An operand has the wrong rank for the operation.
    Rank {
        op: &'static str,
        expected: &'static str,
        shape: Vec<usize>,
    },
    /// A data buffer does not match the element count implied by its shape.
    DataLength { expected: usize, got: usize },
    /// An operation that needs at least one element got none.
    EmptyInput { op: &'static str },
    /// A gather index points outside the tensor it indexes.
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    /// `d_model` is not divisible by the requested head count.
    HeadSplit { d_model: usize, n_heads: usize },
    /// `backward` needs a single-element loss tensor.
    NotScalar { op: &'static str, shape: Vec<usize> },
    /// `backward` was called on a value with no differentiable ancestry.
    NoGradPath,
    /// `backward` was already run on this tape.
    BackwardAlreadyRun,
    /// A row fed to `kl_divergence` does not sum to one in probability space.
    NotLogDistribution { row: usize, log_total: f64 },
    /// A non-finite value appeared where the contract requires finite input.
    NonFinite { op: &'static str },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            TensorError::Rank {
                op,
                expected,
                shape,
            } => write!(f, "{op}: expected {expected}, got shape {shape:?}"),
            TensorError::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape ({expected} elements)")
            }
            TensorError::EmptyInput { op } => write!(f, "{op}: empty input"),
            TensorError::IndexOutOfRange { op, index, bound } => {
                write!(f, "{op}: index {index} out of range (bound {bound})")
            }
            TensorError::HeadSplit { d_model, n_heads } => {
                write!(f, "d_model {d_model} is not divisible by n_heads {n_heads}")
            }
            TensorError::NotScalar { op, shape } => {
                write!(f, "{op}: expected a scalar, got shape {shape:?}")
            }
            TensorError::NoGradPath => {
                write!(f, "backward: loss has no differentiable ancestry")
            }
            TensorError::BackwardAlreadyRun => {
                write!(f, "backward was already run on this tape; build a fresh tape")
            }
            TensorError::NotLogDistribution { row, log_total } => write!(
                f,
                "kl_divergence: row {row} is not a log-distribution (logsumexp = {log_total:e})"
            ),
            TensorError::NonFinite { op } => write!(f, "{op}: non-finite value"),
        }
    }
}

impl std::error::Error for TensorError {}

pub type TensorResult<T> = Result<T, TensorError>;

// ── Tensors ─────────────────────────────────────────────────────────────

/// A dense row-major `f64` tensor.
///
/// `grad`, when present, always has the same length as `data`. Rank-0
/// tensors (empty shape) hold exactly one element and act as scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor, checking that `data` matches `shape` and is finite.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> TensorResult<Tensor> {
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(TensorError::DataLength {
                expected,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "from_vec" });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_grad(mut self) -> Tensor {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

// ── Tape ────────────────────────────────────────────────────────────────

/// Handle to a tensor stored on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

/// One recorded operation. Variants store whatever forward-pass byproducts
/// the backward pass needs (attention probabilities, layer-norm statistics),
/// so backward never recomputes a softmax.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add {
        lhs: usize,
        rhs: usize,
    },
    AddBias {
        x: usize,
        bias: usize,
    },
    Sub {
        lhs: usize,
        rhs: usize,
    },
    Mul {
        lhs: usize,
        rhs: usize,
    },
    Scale {
        x: usize,
        factor: f64,
    },
    MatMul {
        lhs: usize,
        rhs: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Embedding {
        table: usize,
        indices: Vec<usize>,
    },
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        /// Per-row 1/sqrt(var + eps).
        inv_std: Vec<f64>,
        /// The whitened activations, before scale and shift.
        normalized: Vec<f64>,
    },
    Gelu {
        x: usize,
    },
    CausalAttention {
        q: usize,
        k: usize,
        v: usize,
        n_heads: usize,
        /// Post-softmax attention weights, `[head][query][key]`, zero above
        /// the diagonal.
        probs: Vec<f64>,
    },
    LogSoftmax {
        x: usize,
    },
    GatherLogProb {
        x: usize,
        targets: Vec<usize>,
        cols: usize,
    },
    KlDivergence {
        p_log: usize,
        q_log: usize,
        rows: usize,
    },
    Sum {
        x: usize,
    },
    Mean {
        x: usize,
    },
    NarrowRows {
        x: usize,
        start: usize,
        cols: usize,
    },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// A define-by-run computation tape.
///
/// Forward methods validate their inputs, compute eagerly, and append a node.
/// Nodes only ever reference earlier nodes, so a single reverse sweep in
/// [`Tape::backward`] visits the graph in reverse-topological order and
/// accumulates each gradient exactly once per use.
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> TensorId {
        self.nodes.push(Node {
            tensor: Tensor {
                shape,
                data,
                requires_grad,
                grad: None,
            },
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Copies a tensor onto the tape as a leaf, keeping its `requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> TensorId {
        self.push(t.shape.clone(), t.data.clone(), t.requires_grad, Op::Leaf)
    }

    /// Adds a differentiable leaf from raw parts.
    pub fn input(
        &mut self,
        shape: Vec<usize>,
        data: Vec<f64>,
        requires_grad: bool,
    ) -> TensorResult<TensorId> {
        let t = Tensor::from_vec(shape, data)?;
        Ok(self.push(t.shape, t.data, requires_grad, Op::Leaf))
    }

    /// Adds a non-differentiable leaf from raw parts.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> TensorResult<TensorId> {
        self.input(shape, data, false)
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].tensor.shape
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].tensor.data
    }

    /// The gradient of the last `backward` target with respect to `id`, if
    /// one was accumulated.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].tensor.grad.as_deref()
    }

    /// Reads a single-element tensor as a plain `f64`.
    pub fn value(&self, id: TensorId) -> TensorResult<f64> {
        let t = &self.nodes[id.0].tensor;
        if t.numel() != 1 {
            return Err(TensorError::NotScalar {
                op: "value",
                shape: t.shape.clone(),
            });
        }
        Ok(t.data[0])
    }

    /// Clones a node back out of the tape as a standalone tensor.
    pub fn tensor(&self, id: TensorId) -> Tensor {
        self.nodes[id.0].tensor.clone()
    }

    fn requires(&self, id: TensorId) -> bool {
        self.nodes[id.0].tensor.requires_grad
    }

    /// Interprets a rank-1 or rank-2 shape as `(rows, cols)`.
    fn as_rows(&self, id: TensorId, op: &'static str) -> TensorResult<(usize, usize)> {
        let shape = self.shape(id);
        match shape.len() {
            1 => Ok((1, shape[0])),
            2 => Ok((shape[0], shape[1])),
            _ => Err(TensorError::Rank {
                op,
                expected: "rank 1 or 2",
                shape: shape.to_vec(),
            }),
        }
    }

    // ── Elementwise and linear ops ──────────────────────────────────────

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&mut self, lhs: TensorId, rhs: TensorId) -> TensorResult<TensorId> {
        self.zip("add", lhs, rhs, |a, b| a + b, |l, r| Op::Add { lhs: l, rhs: r })
    }

    /// Elementwise difference; shapes must match exactly.
    pub fn sub(&mut self, lhs: TensorId, rhs: TensorId) -> TensorResult<TensorId> {
        self.zip("sub", lhs, rhs, |a, b| a - b, |l, r| Op::Sub { lhs: l, rhs: r })
    }

    /// Elementwise product; shapes must match exactly.
    pub fn mul(&mut self, lhs: TensorId, rhs: TensorId) -> TensorResult<TensorId> {
        self.zip("mul", lhs, rhs, |a, b| a * b, |l, r| Op::Mul { lhs: l, rhs: r })
    }

    fn zip(
        &mut self,
        op: &'static str,
        lhs: TensorId,
        rhs: TensorId,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize) -> Op,
    ) -> TensorResult<TensorId> {
        if self.shape(lhs) != self.shape(rhs) {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape(lhs).to_vec(),
                rhs: self.shape(rhs).to_vec(),
            });
        }
        let data: Vec<f64> = self
            .data(lhs)
            .iter()
            .zip(self.data(rhs))
            .map(|(a, b)| f(*a, *b))
            .collect();
        let rg = self.requires(lhs) || self.requires(rhs);
        Ok(self.push(self.shape(lhs).to_vec(), data, rg, make(lhs.0, rhs.0)))
    }

    /// Adds a length-`n` bias vector to every row of an `[r, n]` matrix.
    pub fn add_bias(&mut self, x: TensorId, bias: TensorId) -> TensorResult<TensorId> {
        let (rows, cols) = self.as_rows(x, "add_bias")?;
        let bshape = self.shape(bias);
        if bshape.len() != 1 || bshape[0] != cols {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape(x).to_vec(),
                rhs: bshape.to_vec(),
            });
        }
        let mut data = self.data(x).to_vec();
        let b = self.data(bias);
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] += b[c];
            }
        }
        let rg = self.requires(x) || self.requires(bias);
        Ok(self.push(
            self.shape(x).to_vec(),
            data,
            rg,
            Op::AddBias {
                x: x.0,
                bias: bias.0,
            },
        ))
    }

    /// Multiplies every element by a finite constant.
    pub fn scale(&mut self, x: TensorId, factor: f64) -> TensorResult<TensorId> {
        if !factor.is_finite() {
            return Err(TensorError::NonFinite { op: "scale" });
        }
        let data: Vec<f64> = self.data(x).iter().map(|v| v * factor).collect();
        let rg = self.requires(x);
        Ok(self.push(self.shape(x).to_vec(), data, rg, Op::Scale { x: x.0, factor }))
    }

    /// Dense matrix product of an `[m, k]` and a `[k, n]` tensor.
    pub fn matmul(&mut self, lhs: TensorId, rhs: TensorId) -> TensorResult<TensorId> {
        let (ls, rs) = (self.shape(lhs).to_vec(), self.shape(rhs).to_vec());
        if ls.len() != 2 {
            return Err(TensorError::Rank {
                op: "matmul",
                expected: "rank 2",
                shape: ls,
            });
        }
        if rs.len() != 2 {
            return Err(TensorError::Rank {
                op: "matmul",
                expected: "rank 2",
                shape: rs,
            });
        }
        if ls[1] != rs[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: ls,
                rhs: rs,
            });
        }
        let (m, k, n) = (ls[0], ls[1], rs[1]);
        let mut data = vec![0.0; m * n];
        matmul_into(self.data(lhs), self.data(rhs), &mut data, m, k, n);
        let rg = self.requires(lhs) || self.requires(rhs);
        Ok(self.push(
            vec![m, n],
            data,
            rg,
            Op::MatMul {
                lhs: lhs.0,
                rhs: rhs.0,
                m,
                k,
                n,
            },
        ))
    }

    // ── Lookup and shaping ──────────────────────────────────────────────

    /// Gathers rows of an `[n, d]` table: the output's row `i` is
    /// `table[indices[i]]`. Repeated indices are fine; their gradients
    /// accumulate.
    pub fn embedding(&mut self, table: TensorId, indices: &[usize]) -> TensorResult<TensorId> {
        let shape = self.shape(table).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::Rank {
                op: "embedding",
                expected: "rank 2",
                shape,
            });
        }
        if indices.is_empty() {
            return Err(TensorError::EmptyInput { op: "embedding" });
        }
        let (n, d) = (shape[0], shape[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(TensorError::IndexOutOfRange {
                op: "embedding",
                index: bad,
                bound: n,
            });
        }
        let src = self.data(table);
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let rg = self.requires(table);
        Ok(self.push(
            vec![indices.len(), d],
            data,
            rg,
            Op::Embedding {
                table: table.0,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Copies rows `start .. start + len` of a rank-2 tensor.
    pub fn narrow_rows(&mut self, x: TensorId, start: usize, len: usize) -> TensorResult<TensorId> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::Rank {
                op: "narrow_rows",
                expected: "rank 2",
                shape,
            });
        }
        if len == 0 {
            return Err(TensorError::EmptyInput { op: "narrow_rows" });
        }
        if start + len > shape[0] {
            return Err(TensorError::IndexOutOfRange {
                op: "narrow_rows",
                index: start + len,
                bound: shape[0],
            });
        }
        let cols = shape[1];
        let data = self.data(x)[start * cols..(start + len) * cols].to_vec();
        let rg = self.requires(x);
        Ok(self.push(
            vec![len, cols],
            data,
            rg,
            Op::NarrowRows {
                x: x.0,
                start,
                cols,
            },
        ))
    }

    // ── Normalization and activation ────────────────────────────────────

    /// Per-row layer normalization of an `[r, d]` tensor with learnable
    /// scale `gamma` and shift `beta` (both `[d]`). Uses the biased variance.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    ) -> TensorResult<TensorId> {
        let (rows, cols) = self.as_rows(x, "layer_norm")?;
        if cols == 0 {
            return Err(TensorError::EmptyInput { op: "layer_norm" });
        }
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            let s = self.shape(id);
            if s.len() != 1 || s[0] != cols {
                let _ = name;
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: self.shape(x).to_vec(),
                    rhs: s.to_vec(),
                });
            }
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(TensorError::NonFinite { op: "layer_norm" });
        }
        let xs = self.data(x);
        let g = self.data(gamma);
        let b = self.data(beta);
        let mut data = vec![0.0; rows * cols];
        let mut normalized = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &xs[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let nh = (row[c] - mean) * is;
                normalized[r * cols + c] = nh;
                data[r * cols + c] = g[c] * nh + b[c];
            }
        }
        let rg = self.requires(x) || self.requires(gamma) || self.requires(beta);
        Ok(self.push(
            self.shape(x).to_vec(),
            data,
            rg,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                inv_std,
                normalized,
            },
        ))
    }

    /// Elementwise GELU (tanh approximation).
    pub fn gelu(&mut self, x: TensorId) -> TensorResult<TensorId> {
        let data: Vec<f64> = self.data(x).iter().map(|&v| gelu_value(v)).collect();
        let rg = self.requires(x);
        Ok(self.push(self.shape(x).to_vec(), data, rg, Op::Gelu { x: x.0 }))
    }

    /// Multi-head scaled dot-product attention with a strict causal mask.
    ///
    /// `q`, `k`, `v` are all `[t, d]`; the row at position `i` attends to
    /// key/value positions `0..=i` only, so the output at `i` is completely
    /// independent of any later position.
    pub fn causal_attention(
        &mut self,
        q: TensorId,
        k: TensorId,
        v: TensorId,
        n_heads: usize,
    ) -> TensorResult<TensorId> {
        let shape = self.shape(q).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::Rank {
                op: "causal_attention",
                expected: "rank 2",
                shape,
            });
        }
        for other in [k, v] {
            if self.shape(other) != shape.as_slice() {
                return Err(TensorError::ShapeMismatch {
                    op: "causal_attention",
                    lhs: shape,
                    rhs: self.shape(other).to_vec(),
                });
            }
        }
        let (t, d) = (shape[0], shape[1]);
        if n_heads == 0 || d % n_heads != 0 {
            return Err(TensorError::HeadSplit {
                d_model: d,
                n_heads,
            });
        }
        let hd = d / n_heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let qs = self.data(q);
        let ks = self.data(k);
        let vs = self.data(v);
        let mut out = vec![0.0; t * d];
        let mut probs = vec![0.0; n_heads * t * t];
        let mut scores = vec![0.0; t];
        for h in 0..n_heads {
            let off = h * hd;
            for i in 0..t {
                let qrow = &qs[i * d + off..i * d + off + hd];
                let mut max_s = f64::NEG_INFINITY;
                for j in 0..=i {
                    let krow = &ks[j * d + off..j * d + off + hd];
                    let s = dot(qrow, krow) * scale;
                    scores[j] = s;
                    if s > max_s {
                        max_s = s;
                    }
                }
                let mut denom = 0.0;
                for s in scores.iter_mut().take(i + 1) {
                    *s = (*s - max_s).exp();
                    denom += *s;
                }
                for j in 0..=i {
                    let p = scores[j] / denom;
                    probs[(h * t + i) * t + j] = p;
                    let vrow = &vs[j * d + off..j * d + off + hd];
                    let orow = &mut out[i * d + off..i * d + off + hd];
                    for c in 0..hd {
                        orow[c] += p * vrow[c];
                    }
                }
            }
        }
        let rg = self.requires(q) || self.requires(k) || self.requires(v);
        Ok(self.push(
            vec![t, d],
            out,
            rg,
            Op::CausalAttention {
                q: q.0,
                k: k.0,
                v: v.0,
                n_heads,
                probs,
            },
        ))
    }

    // ── Probability-space ops ───────────────────────────────────────────

    /// Row-wise log-softmax of a rank-1 or rank-2 tensor, stabilized by
    /// max subtraction so arbitrarily large logits stay finite.
    pub fn log_softmax(&mut self, x: TensorId) -> TensorResult<TensorId> {
        let (rows, cols) = self.as_rows(x, "log_softmax")?;
        if cols == 0 {
            return Err(TensorError::EmptyInput { op: "log_softmax" });
        }
        let xs = self.data(x);
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xs[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row {
                total += (v - max).exp();
            }
            let lse = max + total.ln();
            for c in 0..cols {
                data[r * cols + c] = row[c] - lse;
            }
        }
        let rg = self.requires(x);
        Ok(self.push(self.shape(x).to_vec(), data, rg, Op::LogSoftmax { x: x.0 }))
    }

    /// Picks `x[i, targets[i]]` out of a `[r, v]` matrix of log-probabilities,
    /// producing a length-`r` vector.
    pub fn gather_log_prob(&mut self, x: TensorId, targets: &[usize]) -> TensorResult<TensorId> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 2 {
            return Err(TensorError::Rank {
                op: "gather_log_prob",
                expected: "rank 2",
                shape,
            });
        }
        let (rows, cols) = (shape[0], shape[1]);
        if targets.len() != rows {
            return Err(TensorError::ShapeMismatch {
                op: "gather_log_prob",
                lhs: shape,
                rhs: vec![targets.len()],
            });
        }
        if rows == 0 {
            return Err(TensorError::EmptyInput {
                op: "gather_log_prob",
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_log_prob",
                index: bad,
                bound: cols,
            });
        }
        let xs = self.data(x);
        let data: Vec<f64> = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| xs[r * cols + t])
            .collect();
        let rg = self.requires(x);
        Ok(self.push(
            vec![rows],
            data,
            rg,
            Op::GatherLogProb {
                x: x.0,
                targets: targets.to_vec(),
                cols,
            },
        ))
    }

    /// Kullback-Leibler divergence `KL(p ‖ q)` between rows of two
    /// log-distribution tensors, averaged over rows.
    ///
    /// Both inputs must hold valid log-distributions (each row's logsumexp
    /// within `1e-6` of zero). A term whose reference probability is exactly
    /// zero (`log p = -inf`, or so negative that `exp` underflows)
    /// contributes exactly zero, in value and in gradient.
    pub fn kl_divergence(&mut self, p_log: TensorId, q_log: TensorId) -> TensorResult<TensorId> {
        if self.shape(p_log) != self.shape(q_log) {
            return Err(TensorError::ShapeMismatch {
                op: "kl_divergence",
                lhs: self.shape(p_log).to_vec(),
                rhs: self.shape(q_log).to_vec(),
            });
        }
        let (rows, cols) = self.as_rows(p_log, "kl_divergence")?;
        if cols == 0 {
            return Err(TensorError::EmptyInput {
                op: "kl_divergence",
            });
        }
        for id in [p_log, q_log] {
            let xs = self.data(id);
            for r in 0..rows {
                let lse = log_sum_exp(&xs[r * cols..(r + 1) * cols]);
                if lse.abs() > 1e-6 {
                    return Err(TensorError::NotLogDistribution { row: r, log_total: lse });
                }
            }
        }
        let ps = self.data(p_log);
        let qs = self.data(q_log);
        let mut total = 0.0;
        for idx in 0..rows * cols {
            let pe = ps[idx].exp();
            if pe == 0.0 {
                continue;
            }
            total += pe * (ps[idx] - qs[idx]);
        }
        let value = total / rows as f64;
        let rg = self.requires(p_log) || self.requires(q_log);
        Ok(self.push(
            Vec::new(),
            vec![value],
            rg,
            Op::KlDivergence {
                p_log: p_log.0,
                q_log: q_log.0,
                rows,
            },
        ))
    }

    // ── Reductions ──────────────────────────────────────────────────────

    /// Sums all elements into a rank-0 scalar.
    pub fn sum(&mut self, x: TensorId) -> TensorResult<TensorId> {
        if self.data(x).is_empty() {
            return Err(TensorError::EmptyInput { op: "sum" });
        }
        let value = self.data(x).iter().sum();
        let rg = self.requires(x);
        Ok(self.push(Vec::new(), vec![value], rg, Op::Sum { x: x.0 }))
    }

    /// Averages all elements into a rank-0 scalar.
    pub fn mean(&mut self, x: TensorId) -> TensorResult<TensorId> {
        let n = self.data(x).len();
        if n == 0 {
            return Err(TensorError::EmptyInput { op: "mean" });
        }
        let value = self.data(x).iter().sum::<f64>() / n as f64;
        let rg = self.requires(x);
        Ok(self.push(Vec::new(), vec![value], rg, Op::Mean { x: x.0 }))
    }

    /// Averages a list of same-shaped tensors (used for batch reduction).
    pub fn mean_of(&mut self, items: &[TensorId]) -> TensorResult<TensorId> {
        let Some((&first, rest)) = items.split_first() else {
            return Err(TensorError::EmptyInput { op: "mean_of" });
        };
        let mut acc = first;
        for &id in rest {
            acc = self.add(acc, id)?;
        }
        self.scale(acc, 1.0 / items.len() as f64)
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Accumulates `d loss / d node` for every differentiable node that
    /// `loss` depends on, storing the result in each node's `grad`.
    ///
    /// `loss` must be a single-element tensor with a differentiable
    /// ancestry. A tape can only be differentiated once; a second call
    /// returns [`TensorError::BackwardAlreadyRun`].
    pub fn backward(&mut self, loss: TensorId) -> TensorResult<()> {
        if self.backward_done {
            return Err(TensorError::BackwardAlreadyRun);
        }
        let lt = &self.nodes[loss.0].tensor;
        if lt.numel() != 1 {
            return Err(TensorError::NotScalar {
                op: "backward",
                shape: lt.shape.clone(),
            });
        }
        if !lt.requires_grad {
            return Err(TensorError::NoGradPath);
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tensor.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if let Some(g) = g {
                node.tensor.grad = Some(g);
            }
        }
        self.backward_done = true;
        Ok(())
    }

    /// Applies node `i`'s chain rule, adding contributions into the
    /// gradient slots of its differentiable inputs.
    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        // Accumulates into an input's slot only if that input is
        // differentiable; non-differentiable subgraphs (e.g. a frozen
        // teacher) are never touched.
        macro_rules! slot {
            ($idx:expr) => {{
                let idx = $idx;
                if self.nodes[idx].tensor.requires_grad {
                    let len = self.nodes[idx].tensor.data.len();
                    Some(grads[idx].get_or_insert_with(|| vec![0.0; len]))
                } else {
                    None
                }
            }};
        }

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add { lhs, rhs } => {
                if let Some(dl) = slot!(*lhs) {
                    for (d, gv) in dl.iter_mut().zip(g) {
                        *d += gv;
                    }
                }
                if let Some(dr) = slot!(*rhs) {
                    for (d, gv) in dr.iter_mut().zip(g) {
                        *d += gv;
                    }
                }
            }
            Op::Sub { lhs, rhs } => {
                if let Some(dl) = slot!(*lhs) {
                    for (d, gv) in dl.iter_mut().zip(g) {
                        *d += gv;
                    }
                }
                if let Some(dr) = slot!(*rhs) {
                    for (d, gv) in dr.iter_mut().zip(g) {
                        *d -= gv;
                    }
                }
            }
            Op::Mul { lhs, rhs } => {
                if let Some(dl) = slot!(*lhs) {
                    let rv = &self.nodes[*rhs].tensor.data;
                    for ((d, gv), r) in dl.iter_mut().zip(g).zip(rv) {
                        *d += gv * r;
                    }
                }
                if let Some(dr) = slot!(*rhs) {
                    let lv = &self.nodes[*lhs].tensor.data;
                    for ((d, gv), l) in dr.iter_mut().zip(g).zip(lv) {
                        *d += gv * l;
                    }
                }
            }
            Op::AddBias { x, bias } => {
                let cols = self.nodes[*bias].tensor.data.len();
                if let Some(dx) = slot!(*x) {
                    for (d, gv) in dx.iter_mut().zip(g) {
                        *d += gv;
                    }
                }
                if let Some(db) = slot!(*bias) {
                    for (idx, gv) in g.iter().enumerate() {
                        db[idx % cols] += gv;
                    }
                }
            }
            Op::Scale { x, factor } => {
                if let Some(dx) = slot!(*x) {
                    for (d, gv) in dx.iter_mut().zip(g) {
                        *d += factor * gv;
                    }
                }
            }
            Op::MatMul { lhs, rhs, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                if let Some(dl) = slot!(*lhs) {
                    // dA[i,p] += sum_j g[i,j] * B[p,j]
                    let b = &self.nodes[*rhs].tensor.data;
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            dl[i * k + p] += dot(grow, &b[p * n..(p + 1) * n]);
                        }
                    }
                }
                if let Some(dr) = slot!(*rhs) {
                    // dB[p,j] += sum_i A[i,p] * g[i,j]
                    let a = &self.nodes[*lhs].tensor.data;
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let a_ip = a[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            let drow = &mut dr[p * n..(p + 1) * n];
                            for j in 0..n {
                                drow[j] += a_ip * grow[j];
                            }
                        }
                    }
                }
            }
            Op::Embedding { table, indices } => {
                if let Some(dt) = slot!(*table) {
                    let d = self.nodes[*table].tensor.shape[1];
                    for (row, &idx) in indices.iter().enumerate() {
                        let grow = &g[row * d..(row + 1) * d];
                        let trow = &mut dt[idx * d..(idx + 1) * d];
                        for c in 0..d {
                            trow[c] += grow[c];
                        }
                    }
                }
            }
            Op::NarrowRows { x, start, cols } => {
                if let Some(dx) = slot!(*x) {
                    let offset = start * cols;
                    for (d, gv) in dx[offset..offset + g.len()].iter_mut().zip(g) {
                        *d += gv;
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                inv_std,
                normalized,
            } => {
                let cols = self.nodes[*gamma].tensor.data.len();
                let rows = inv_std.len();
                if let Some(db) = slot!(*beta) {
                    for (idx, gv) in g.iter().enumerate() {
                        db[idx % cols] += gv;
                    }
                }
                if let Some(dg) = slot!(*gamma) {
                    for (idx, gv) in g.iter().enumerate() {
                        dg[idx % cols] += gv * normalized[idx];
                    }
                }
                if let Some(dx) = slot!(*x) {
                    let gamma_v = &self.nodes[*gamma].tensor.data;
                    for r in 0..rows {
                        let grow = &g[r * cols..(r + 1) * cols];
                        let nrow = &normalized[r * cols..(r + 1) * cols];
                        // h = g * gamma; dx = inv_std * (h - mean(h) - nh * mean(h * nh))
                        let mut mean_h = 0.0;
                        let mut mean_hn = 0.0;
                        for c in 0..cols {
                            let h = grow[c] * gamma_v[c];
                            mean_h += h;
                            mean_hn += h * nrow[c];
                        }
                        mean_h /= cols as f64;
                        mean_hn /= cols as f64;
                        let drow = &mut dx[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            let h = grow[c] * gamma_v[c];
                            drow[c] += inv_std[r] * (h - mean_h - nrow[c] * mean_hn);
                        }
                    }
                }
            }
            Op::Gelu { x } => {
                if let Some(dx) = slot!(*x) {
                    let xv = &self.nodes[*x].tensor.data;
                    for ((d, gv), &v) in dx.iter_mut().zip(g).zip(xv) {
                        *d += gv * gelu_derivative(v);
                    }
                }
            }
            Op::CausalAttention {
                q,
                k,
                v,
                n_heads,
                probs,
            } => {
                let d = self.nodes[*q].tensor.shape[1];
                let t = self.nodes[*q].tensor.shape[0];
                let hd = d / n_heads;
                let scale = 1.0 / (hd as f64).sqrt();
                let qs = &self.nodes[*q].tensor.data;
                let ks = &self.nodes[*k].tensor.data;
                let vs = &self.nodes[*v].tensor.data;
                // q, k, v always share requires_grad in practice (they come
                // from the same projection inputs), but each is guarded
                // independently anyway.
                let mut dq = vec![0.0; t * d];
                let mut dk = vec![0.0; t * d];
                let mut dv = vec![0.0; t * d];
                let mut dprobs = vec![0.0; t];
                for h in 0..*n_heads {
                    let off = h * hd;
                    for i in 0..t {
                        let grow = &g[i * d + off..i * d + off + hd];
                        let prow = &probs[(h * t + i) * t..(h * t + i) * t + t];
                        let mut dot_pd = 0.0;
                        for j in 0..=i {
                            let dp = dot(grow, &vs[j * d + off..j * d + off + hd]);
                            dprobs[j] = dp;
                            dot_pd += prow[j] * dp;
                        }
                        for j in 0..=i {
                            let p = prow[j];
                            let ds = p * (dprobs[j] - dot_pd) * scale;
                            let qrow = &qs[i * d + off..i * d + off + hd];
                            let krow = &ks[j * d + off..j * d + off + hd];
                            let dqrow = &mut dq[i * d + off..i * d + off + hd];
                            for c in 0..hd {
                                dqrow[c] += ds * krow[c];
                            }
                            let dkrow = &mut dk[j * d + off..j * d + off + hd];
                            for c in 0..hd {
                                dkrow[c] += ds * qrow[c];
                            }
                            let dvrow = &mut dv[j * d + off..j * d + off + hd];
                            for c in 0..hd {
                                dvrow[c] += p * grow[c];
                            }
                        }
                    }
                }
                if let Some(s) = slot!(*q) {
                    for (dst, src) in s.iter_mut().zip(&dq) {
                        *dst += src;
                    }
                }
                if let Some(s) = slot!(*k) {
                    for (dst, src) in s.iter_mut().zip(&dk) {
                        *dst += src;
                    }
                }
                if let Some(s) = slot!(*v) {
                    for (dst, src) in s.iter_mut().zip(&dv) {
                        *dst += src;
                    }
                }
            }
            Op::LogSoftmax { x } => {
                if let Some(dx) = slot!(*x) {
                    let y = &self.nodes[i].tensor.data;
                    let cols = *self.nodes[i].tensor.shape.last().unwrap();
                    let rows = y.len() / cols;
                    for r in 0..rows {
                        let grow = &g[r * cols..(r + 1) * cols];
                        let yrow = &y[r * cols..(r + 1) * cols];
                        let gsum: f64 = grow.iter().sum();
                        let drow = &mut dx[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            drow[c] += grow[c] - yrow[c].exp() * gsum;
                        }
                    }
                }
            }
            Op::GatherLogProb { x, targets, cols } => {
                if let Some(dx) = slot!(*x) {
                    for (r, &t) in targets.iter().enumerate() {
                        dx[r * cols + t] += g[r];
                    }
                }
            }
            Op::KlDivergence { p_log, q_log, rows } => {
                let gs = g[0] / *rows as f64;
                let ps = &self.nodes[*p_log].tensor.data;
                let qs = &self.nodes[*q_log].tensor.data;
                if let Some(dq) = slot!(*q_log) {
                    for (idx, d) in dq.iter_mut().enumerate() {
                        let pe = ps[idx].exp();
                        if pe == 0.0 {
                            continue;
                        }
                        *d -= gs * pe;
                    }
                }
                if let Some(dp) = slot!(*p_log) {
                    for (idx, d) in dp.iter_mut().enumerate() {
                        let pe = ps[idx].exp();
                        if pe == 0.0 {
                            continue;
                        }
                        *d += gs * pe * (ps[idx] - qs[idx] + 1.0);
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(dx) = slot!(*x) {
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::Mean { x } => {
                if let Some(dx) = slot!(*x) {
                    let n = dx.len() as f64;
                    for d in dx.iter_mut() {
                        *d += g[0] / n;
                    }
                }
            }
        }
    }
}

// ── Free helpers ────────────────────────────────────────────────────────

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// `out += a @ b` for row-major `[m, k]` and `[k, n]` buffers.
fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += a_ip * brow[j];
            }
        }
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
    max + total.ln()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[inline]
fn gelu_value(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let th = u.tanh();
    let sech2 = 1.0 - th * th;
    0.5 * (1.0 + th) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

// ── Tests ───────────────────────────────────────────────────────────────
