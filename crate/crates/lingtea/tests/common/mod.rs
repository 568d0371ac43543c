//! Shared helpers for the integration suites: central-difference gradient
//! checking against the tape's analytic gradients, random input generation,
//! and lazily built corpus/model fixtures reused across expensive tests.

#![allow(dead_code)]

use std::sync::OnceLock;

use lingtea::corpus::{generate_synthetic_corpus, ParallelCorpus, SynthSpec};
use lingtea::model::{BoundModel, ModelConfig, ModelParams};
use lingtea::tensor::{Tape, TensorId};
use lingtea::trainer::{pretrain, PretrainConfig};

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ── Random inputs ───────────────────────────────────────────────────────────

/// `n` doubles drawn uniformly from `[lo, hi)`.
pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let dist = Uniform::new(lo, hi);
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// `len` token ids drawn uniformly from `0..vocab`.
pub fn rand_tokens(rng: &mut ChaCha8Rng, len: usize, vocab: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(0..vocab)).collect()
}

// ── Finite-difference gradient checking ─────────────────────────────────────

/// Central-difference step width.
pub const FD_STEP: f64 = 1e-5;

/// Largest tolerated mismatch between analytic and numeric derivatives.
pub const GRAD_TOL: f64 = 1e-4;

/// Mixed absolute/relative error: absolute near zero, relative otherwise.
pub fn grad_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// One differentiable leaf of a graph under test.
#[derive(Debug, Clone)]
pub struct Leaf {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Leaf {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Leaf {
        Leaf { shape, data }
    }

    pub fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Leaf {
        let n = shape.iter().product();
        Leaf {
            shape,
            data: rand_vec(rng, n, lo, hi),
        }
    }
}

/// Evaluates `build` on a fresh tape with non-trainable copies of `leaves`
/// and returns the scalar output value.
pub fn scalar_value<F>(leaves: &[Leaf], build: &F) -> f64
where
    F: Fn(&mut Tape, &[TensorId]) -> TensorId,
{
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = leaves
        .iter()
        .map(|l| {
            tape.input(l.shape.clone(), l.data.clone(), false)
                .expect("leaf input")
        })
        .collect();
    let out = build(&mut tape, &ids);
    tape.value(out).expect("scalar graph output")
}

/// Differentiates `build` once and returns the gradient of each leaf.
pub fn analytic_gradients<F>(leaves: &[Leaf], build: &F) -> Vec<Vec<f64>>
where
    F: Fn(&mut Tape, &[TensorId]) -> TensorId,
{
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = leaves
        .iter()
        .map(|l| {
            tape.input(l.shape.clone(), l.data.clone(), true)
                .expect("leaf input")
        })
        .collect();
    let out = build(&mut tape, &ids);
    tape.backward(out).expect("backward");
    ids.iter()
        .map(|&id| tape.grad(id).expect("leaf gradient").to_vec())
        .collect()
}

/// Checks every coordinate of every leaf of `build` against a central
/// difference, panicking on the first violation.  Returns the worst error
/// seen so callers can report headroom.
pub fn check_gradients<F>(label: &str, leaves: &[Leaf], build: F) -> f64
where
    F: Fn(&mut Tape, &[TensorId]) -> TensorId,
{
    let analytic = analytic_gradients(leaves, &build);
    let mut worst = 0.0f64;
    for (li, leaf) in leaves.iter().enumerate() {
        for ci in 0..leaf.data.len() {
            let mut plus = leaves.to_vec();
            plus[li].data[ci] += FD_STEP;
            let mut minus = leaves.to_vec();
            minus[li].data[ci] -= FD_STEP;
            let numeric =
                (scalar_value(&plus, &build) - scalar_value(&minus, &build)) / (2.0 * FD_STEP);
            let err = grad_error(analytic[li][ci], numeric);
            assert!(
                err <= GRAD_TOL,
                "{label}: leaf {li} coordinate {ci}: analytic {} vs numeric {} (error {err:.3e})",
                analytic[li][ci],
                numeric,
            );
            worst = worst.max(err);
        }
    }
    worst
}

/// Reduces a (possibly non-scalar) node to a scalar through fixed constant
/// weights, so a gradient check exercises every output coordinate with a
/// distinct scale instead of the uniform weighting a plain sum would apply.
pub fn weighted_sum(tape: &mut Tape, x: TensorId) -> TensorId {
    let shape = tape.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (0.35 + 0.1 * (i % 7) as f64)
        })
        .collect();
    let w = tape.constant(shape, weights).expect("weight constant");
    let prod = tape.mul(x, w).expect("weighted product");
    tape.sum(prod).expect("weighted reduction")
}

// ── Whole-model gradient checking ───────────────────────────────────────────

/// Evaluates `eval` on a fresh tape over a non-trainable binding of `params`.
pub fn model_scalar<F>(params: &ModelParams, eval: &F) -> f64
where
    F: Fn(&mut Tape, &BoundModel) -> TensorId,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let out = eval(&mut tape, &bound);
    tape.value(out).expect("scalar model output")
}

/// Differentiates `eval` once with respect to every parameter group and
/// returns the gradients in group order.
pub fn model_gradients<F>(params: &ModelParams, eval: &F) -> Vec<Vec<f64>>
where
    F: Fn(&mut Tape, &BoundModel) -> TensorId,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let out = eval(&mut tape, &bound);
    tape.backward(out).expect("backward");
    bound
        .param_ids()
        .iter()
        .map(|&id| tape.grad(id).expect("parameter gradient").to_vec())
        .collect()
}

/// Checks the analytic gradient of `eval` against central differences for
/// every single parameter coordinate of `params`.  Returns the worst error.
pub fn check_model_gradients<F>(label: &str, params: &ModelParams, eval: F) -> f64
where
    F: Fn(&mut Tape, &BoundModel) -> TensorId,
{
    let analytic = model_gradients(params, &eval);
    let mut worst = 0.0f64;
    for (gi, (name, tensor)) in params.groups().iter().enumerate() {
        for ci in 0..tensor.data.len() {
            let mut plus = params.clone();
            plus.groups_mut()[gi].1.data[ci] += FD_STEP;
            let mut minus = params.clone();
            minus.groups_mut()[gi].1.data[ci] -= FD_STEP;
            let numeric =
                (model_scalar(&plus, &eval) - model_scalar(&minus, &eval)) / (2.0 * FD_STEP);
            let err = grad_error(analytic[gi][ci], numeric);
            assert!(
                err <= GRAD_TOL,
                "{label}: group {name} coordinate {ci}: analytic {} vs numeric {} (error {err:.3e})",
                analytic[gi][ci],
                numeric,
            );
            worst = worst.max(err);
        }
    }
    worst
}

// ── Fixtures ────────────────────────────────────────────────────────────────

/// A model small enough that finite differences over every parameter
/// coordinate stay cheap, yet deep enough to cross every operation kind:
/// embeddings, attention, layer norm, the MLP, and the output projection.
pub fn micro_model() -> (ModelConfig, ModelParams) {
    let config = ModelConfig {
        vocab_size: 20,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        max_seq_len: 8,
        seed: 5,
    };
    let params = ModelParams::init(&config).expect("micro model init");
    (config, params)
}

/// Two-language corpus sized for fast trainer-level tests.
pub fn tiny_synth_spec() -> SynthSpec {
    SynthSpec {
        languages: vec![
            lingtea::corpus::LanguageSpec::new("aa", lingtea::corpus::ResourceLevel::High),
            lingtea::corpus::LanguageSpec::new("bb", lingtea::corpus::ResourceLevel::Low),
        ],
        vocab_size: 64,
        min_len: 4,
        max_len: 6,
        forget_size: 6,
        retain_size: 6,
        validation_size: 4,
        test_size: 4,
        pretrain_base: 8,
        pivot_share: 1.0,
        high_share: 0.5,
        mid_share: 0.25,
        low_share: 0.05,
        cloze_candidates: 4,
        function_tokens: 4,
    }
}

pub fn tiny_corpus(seed: u64) -> ParallelCorpus {
    generate_synthetic_corpus(&tiny_synth_spec(), seed).expect("tiny corpus")
}

/// Seed used for the shared four-language demonstration fixture.
pub const TOY_SEED: u64 = 11;

/// Four parallel languages at equal resource share, 12 aligned forget items,
/// a wide retain split anchoring the shared vocabulary, held-out validation
/// and test splits.  Sized so a 2-layer d=64 model memorizes the forget
/// split in under a minute on a CPU.
pub fn toy_demo_spec() -> SynthSpec {
    SynthSpec {
        languages: vec![
            lingtea::corpus::LanguageSpec::new("en", lingtea::corpus::ResourceLevel::High),
            lingtea::corpus::LanguageSpec::new("fr", lingtea::corpus::ResourceLevel::High),
            lingtea::corpus::LanguageSpec::new("zh", lingtea::corpus::ResourceLevel::High),
            lingtea::corpus::LanguageSpec::new("sw", lingtea::corpus::ResourceLevel::High),
        ],
        forget_size: 12,
        retain_size: 64,
        pretrain_base: 160,
        high_share: 1.0,
        ..SynthSpec::default()
    }
}

/// Pretraining settings that take [`toy_demo_spec`] past the 0.9
/// memorization floor in roughly half a minute.
pub fn toy_pretrain_config() -> PretrainConfig {
    PretrainConfig {
        learning_rate: 3e-3,
        max_epochs: 60,
        ..PretrainConfig::default()
    }
}

/// Reference unlearning settings for the demonstration fixture: batch equal
/// to the per-language forget pool, short warmup, tight perplexity guard.
pub fn toy_unlearn_config() -> lingtea::trainer::UnlearnConfig {
    lingtea::trainer::UnlearnConfig {
        batch_size: 12,
        warmup_ratio: 0.05,
        max_epochs: 60,
        ppl_guard_delta: 0.2,
        retain_sample_count: 64,
        ..lingtea::trainer::UnlearnConfig::default()
    }
}

static TOY: OnceLock<(ParallelCorpus, ModelParams)> = OnceLock::new();

/// Four-language corpus plus a toy transformer pretrained until every
/// language's forget split is memorized (greedy accuracy at least 0.9).
/// Built once per test binary and shared; expensive on first use.
pub fn pretrained_toy() -> &'static (ParallelCorpus, ModelParams) {
    TOY.get_or_init(|| {
        let corpus =
            generate_synthetic_corpus(&toy_demo_spec(), TOY_SEED).expect("toy corpus");
        let config = ModelConfig::toy(TOY_SEED);
        let params = ModelParams::init(&config).expect("toy model init");
        let trained = pretrain(params, &corpus, &toy_pretrain_config())
            .expect("toy pretraining reaches threshold");
        (corpus, trained)
    })
}
