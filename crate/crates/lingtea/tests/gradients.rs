//! Central-difference verification of every differentiable tape operation
//! and of full model-level objectives.  Each check perturbs every input
//! coordinate in both directions and compares the quotient against the
//! analytic gradient from one backward pass.

mod common;

use common::{
    check_gradients, check_model_gradients, micro_model, rand_tokens, weighted_sum, Leaf,
};
use lingtea::losses::{
    forget_step_loss, retain_step_loss, sequence_eval, total_loss, RetainMode,
};
use lingtea::model::ModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ── Elementwise arithmetic ──────────────────────────────────────────────────

#[test]
fn add_matches_finite_differences() {
    let mut r = rng(1);
    for case in 0..6 {
        let rows = 1 + case % 3;
        let cols = 2 + case % 4;
        let leaves = vec![
            Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0),
            Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0),
        ];
        check_gradients("add", &leaves, |tape, ids| {
            let out = tape.add(ids[0], ids[1]).unwrap();
            weighted_sum(tape, out)
        });
    }
}

#[test]
fn sub_matches_finite_differences() {
    let mut r = rng(2);
    for case in 0..6 {
        let n = 3 + case;
        let leaves = vec![
            Leaf::random(&mut r, vec![n], -2.0, 2.0),
            Leaf::random(&mut r, vec![n], -2.0, 2.0),
        ];
        check_gradients("sub", &leaves, |tape, ids| {
            let out = tape.sub(ids[0], ids[1]).unwrap();
            weighted_sum(tape, out)
        });
    }
}

#[test]
fn mul_matches_finite_differences() {
    let mut r = rng(3);
    for case in 0..6 {
        let rows = 2 + case % 2;
        let cols = 2 + case % 3;
        let leaves = vec![
            Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0),
            Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0),
        ];
        check_gradients("mul", &leaves, |tape, ids| {
            let out = tape.mul(ids[0], ids[1]).unwrap();
            weighted_sum(tape, out)
        });
    }
}

#[test]
fn add_bias_matches_finite_differences() {
    let mut r = rng(4);
    for case in 0..6 {
        let rows = 2 + case % 3;
        let cols = 2 + case % 4;
        let leaves = vec![
            Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0),
            Leaf::random(&mut r, vec![cols], -1.0, 1.0),
        ];
        check_gradients("add_bias", &leaves, |tape, ids| {
            let out = tape.add_bias(ids[0], ids[1]).unwrap();
            weighted_sum(tape, out)
        });
    }
}

#[test]
fn scale_matches_finite_differences() {
    let mut r = rng(5);
    for &factor in &[2.5, -0.75, 0.0, 1.0, -3.0, 0.1] {
        let leaves = vec![Leaf::random(&mut r, vec![3, 3], -2.0, 2.0)];
        check_gradients("scale", &leaves, |tape, ids| {
            let out = tape.scale(ids[0], factor).unwrap();
            weighted_sum(tape, out)
        });
    }
}

// ── Linear algebra and table lookups ────────────────────────────────────────

#[test]
fn matmul_matches_finite_differences() {
    let mut r = rng(6);
    for case in 0..6 {
        let m = 1 + case % 3;
        let k = 2 + case % 3;
        let n = 2 + case % 4;
        let leaves = vec![
            Leaf::random(&mut r, vec![m, k], -1.5, 1.5),
            Leaf::random(&mut r, vec![k, n], -1.5, 1.5),
        ];
        check_gradients("matmul", &leaves, |tape, ids| {
            let out = tape.matmul(ids[0], ids[1]).unwrap();
            weighted_sum(tape, out)
        });
    }
}

#[test]
fn embedding_accumulates_gradients_for_repeated_rows() {
    let mut r = rng(7);
    for case in 0..6 {
        let vocab = 5 + case;
        let dim = 3 + case % 3;
        // Repeats force the backward pass to accumulate into shared rows.
        let indices = vec![0, 2, 0, vocab - 1, 2, 1];
        let leaves = vec![Leaf::random(&mut r, vec![vocab, dim], -1.0, 1.0)];
        check_gradients("embedding", &leaves, move |tape, ids| {
            let out = tape.embedding(ids[0], &indices).unwrap();
            weighted_sum(tape, out)
        });
    }
}

#[test]
fn narrow_rows_matches_finite_differences() {
    let mut r = rng(8);
    for case in 0..6 {
        let rows = 4 + case % 3;
        let cols = 2 + case % 3;
        let start = case % 2;
        let len = 2 + case % 2;
        let leaves = vec![Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0)];
        check_gradients("narrow_rows", &leaves, move |tape, ids| {
            let out = tape.narrow_rows(ids[0], start, len).unwrap();
            weighted_sum(tape, out)
        });
    }
}

// ── Nonlinearities and normalization ────────────────────────────────────────

#[test]
fn gelu_matches_finite_differences() {
    let mut r = rng(9);
    for case in 0..6 {
        let n = 4 + case;
        let leaves = vec![Leaf::random(&mut r, vec![2, n], -3.0, 3.0)];
        check_gradients("gelu", &leaves, |tape, ids| {
            let out = tape.gelu(ids[0]).unwrap();
            weighted_sum(tape, out)
        });
    }
}

#[test]
fn layer_norm_matches_finite_differences() {
    let mut r = rng(10);
    for case in 0..6 {
        let rows = 2 + case % 3;
        let cols = 3 + case % 4;
        let leaves = vec![
            Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0),
            Leaf::random(&mut r, vec![cols], 0.5, 1.5),
            Leaf::random(&mut r, vec![cols], -0.5, 0.5),
        ];
        check_gradients("layer_norm", &leaves, |tape, ids| {
            let out = tape.layer_norm(ids[0], ids[1], ids[2], 1e-5).unwrap();
            weighted_sum(tape, out)
        });
    }
}

#[test]
fn causal_attention_matches_finite_differences() {
    let mut r = rng(11);
    for case in 0..6 {
        let t = 2 + case % 4;
        let heads = if case % 2 == 0 { 1 } else { 2 };
        let d = heads * (2 + case % 2);
        let leaves = vec![
            Leaf::random(&mut r, vec![t, d], -1.0, 1.0),
            Leaf::random(&mut r, vec![t, d], -1.0, 1.0),
            Leaf::random(&mut r, vec![t, d], -1.0, 1.0),
        ];
        check_gradients("causal_attention", &leaves, move |tape, ids| {
            let out = tape.causal_attention(ids[0], ids[1], ids[2], heads).unwrap();
            weighted_sum(tape, out)
        });
    }
}

// ── Probabilistic heads ─────────────────────────────────────────────────────

#[test]
fn log_softmax_matches_finite_differences() {
    let mut r = rng(12);
    for case in 0..6 {
        let rows = 1 + case % 3;
        let cols = 3 + case % 4;
        let leaves = vec![Leaf::random(&mut r, vec![rows, cols], -2.5, 2.5)];
        check_gradients("log_softmax", &leaves, |tape, ids| {
            let out = tape.log_softmax(ids[0]).unwrap();
            weighted_sum(tape, out)
        });
    }
}

#[test]
fn gather_log_prob_matches_finite_differences() {
    let mut r = rng(13);
    for case in 0..6 {
        let rows = 2 + case % 3;
        let cols = 4 + case % 3;
        let targets: Vec<usize> = (0..rows).map(|_| r.gen_range(0..cols)).collect();
        let leaves = vec![Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0)];
        check_gradients("gather_log_prob", &leaves, move |tape, ids| {
            let dists = tape.log_softmax(ids[0]).unwrap();
            let picked = tape.gather_log_prob(dists, &targets).unwrap();
            weighted_sum(tape, picked)
        });
    }
}

#[test]
fn kl_divergence_matches_finite_differences_for_both_sides() {
    let mut r = rng(14);
    for case in 0..6 {
        let rows = 1 + case % 3;
        let cols = 3 + case % 4;
        let leaves = vec![
            Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0),
            Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0),
        ];
        // Both arguments must be row-normalized log-distributions, so the
        // raw leaves pass through log_softmax inside the graph; gradients
        // are checked through to both underlying logits.
        check_gradients("kl_divergence", &leaves, |tape, ids| {
            let p = tape.log_softmax(ids[0]).unwrap();
            let q = tape.log_softmax(ids[1]).unwrap();
            tape.kl_divergence(p, q).unwrap()
        });
    }
}

// ── Reductions ──────────────────────────────────────────────────────────────

#[test]
fn sum_and_mean_match_finite_differences() {
    let mut r = rng(15);
    for case in 0..6 {
        let rows = 1 + case % 3;
        let cols = 2 + case % 4;
        let leaves = vec![Leaf::random(&mut r, vec![rows, cols], -2.0, 2.0)];
        check_gradients("sum", &leaves, |tape, ids| tape.sum(ids[0]).unwrap());
        check_gradients("mean", &leaves, |tape, ids| tape.mean(ids[0]).unwrap());
    }
}

#[test]
fn mean_of_matches_finite_differences() {
    let mut r = rng(16);
    for case in 0..6 {
        let count = 2 + case % 3;
        let leaves: Vec<Leaf> = (0..count)
            .map(|_| Leaf::random(&mut r, vec![3], -2.0, 2.0))
            .collect();
        check_gradients("mean_of", &leaves, |tape, ids| {
            let scalars: Vec<_> = ids.iter().map(|&id| tape.mean(id).unwrap()).collect();
            tape.mean_of(&scalars).unwrap()
        });
    }
}

// ── Whole-model composites ──────────────────────────────────────────────────

#[test]
fn forget_objective_matches_finite_differences_over_all_parameters() {
    let mut r = rng(17);
    let (config, params) = micro_model();
    let batch: Vec<Vec<usize>> = (0..2)
        .map(|_| rand_tokens(&mut r, 5, config.vocab_size))
        .collect();
    check_model_gradients("forget objective", &params, move |tape, bound| {
        let evals: Vec<_> = batch
            .iter()
            .map(|tokens| {
                let rows = bound.next_token_log_dists(tape, tokens).unwrap();
                sequence_eval(tape, rows, None, &tokens[1..]).unwrap()
            })
            .collect();
        forget_step_loss(tape, &evals).unwrap()
    });
}

#[test]
fn full_objective_matches_finite_differences_over_all_parameters() {
    let mut r = rng(18);
    let (config, student) = micro_model();
    // An independently perturbed teacher keeps the distillation term and the
    // confidence weights away from their degenerate zero point.
    let mut teacher = student.clone();
    for (_, tensor) in teacher.groups_mut() {
        for v in &mut tensor.data {
            *v += r.gen_range(-0.05..0.05);
        }
    }
    let forget_batch: Vec<Vec<usize>> = (0..2)
        .map(|_| rand_tokens(&mut r, 5, config.vocab_size))
        .collect();
    let retain_batch: Vec<Vec<usize>> = (0..2)
        .map(|_| rand_tokens(&mut r, 6, config.vocab_size))
        .collect();
    check_model_gradients("full objective", &student, move |tape, bound| {
        let frozen_teacher = teacher.bind(tape, false);
        let forget_evals: Vec<_> = forget_batch
            .iter()
            .map(|tokens| {
                let rows = bound.next_token_log_dists(tape, tokens).unwrap();
                sequence_eval(tape, rows, None, &tokens[1..]).unwrap()
            })
            .collect();
        let forget = forget_step_loss(tape, &forget_evals).unwrap();
        let retain_evals: Vec<_> = retain_batch
            .iter()
            .map(|tokens| {
                let student_rows = bound.next_token_log_dists(tape, tokens).unwrap();
                let teacher_rows = frozen_teacher.next_token_log_dists(tape, tokens).unwrap();
                sequence_eval(tape, student_rows, Some(teacher_rows), &tokens[1..]).unwrap()
            })
            .collect();
        let retain = retain_step_loss(tape, &retain_evals, &RetainMode::Adaptive, 1.0).unwrap();
        total_loss(tape, forget, retain.unscaled, 0.7).unwrap()
    });
}

#[test]
fn fresh_parameter_sets_differ_by_seed_but_share_shapes() {
    let (config, a) = micro_model();
    let mut other = config;
    other.seed = 99;
    let b = ModelParams::init(&other).expect("init");
    assert!(a.compatible_with(&b).is_ok());
    let differs = a
        .groups()
        .iter()
        .zip(b.groups())
        .any(|((_, x), (_, y))| x.data != y.data);
    assert!(differs, "different seeds must give different parameters");
}
