//! Evaluation metrics over parallel corpora.
//!
//! Three measurements, each computed per `(language, split)` cell and rolled
//! up into per-group means:
//!
//! * **Memorization accuracy (MA)** — the fraction of next-token positions
//!   where the model's greedy prediction equals the true token, pooled over
//!   all positions of the split.  When a row has tied maxima the prediction
//!   is the lowest-index one, so a tie counts as correct only if the true
//!   token is that lowest index.
//! * **Perplexity (PPL)** — `exp(total NLL / total predicted positions)`,
//!   pooled over the split (not a mean of per-sequence perplexities).
//! * **Probing accuracy (PA)** — for cloze probes, the fraction where the
//!   gold candidate's full-sentence log-likelihood is strictly greater than
//!   every other candidate's; ties count against the gold.  Optionally the
//!   log-likelihood is divided by the number of predicted positions before
//!   ranking (off by default).
//!
//! Group rollups are unweighted means over member languages; the pivot
//! language forms its own group.  Reports render to a long-format CSV
//! (`scope,name,split,metric,value`) that parses back losslessly, and to a
//! Markdown table for quick reading.

use std::collections::BTreeMap;

use crate::corpus::{ClozeFact, LangGroup, ParallelCorpus, Sequence, Split};
use crate::model::{ModelError, ModelParams};

// ── Scalar building blocks ──────────────────────────────────────────────────

/// Index of the greatest value; ties resolve to the lowest index.
pub fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Whether the gold candidate strictly beats every other score; any tie
/// with another candidate counts as a loss.
pub fn gold_ranks_first(scores: &[f64], gold_index: usize) -> bool {
    scores
        .iter()
        .enumerate()
        .all(|(i, &s)| i == gold_index || scores[gold_index] > s)
}

/// Row-wise log-softmax denominator: `log Σ exp(row)`, max-subtracted.
fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = row.iter().map(|v| (v - max).exp()).sum();
    max + total.ln()
}

/// Greedy-correct positions in one sequence given its `[len, vocab]` logits:
/// returns `(correct, positions)` over the `len - 1` predicted positions.
fn greedy_hits(logits: &[f64], vocab: usize, tokens: &[usize]) -> (usize, usize) {
    let positions = tokens.len() - 1;
    let mut correct = 0;
    for i in 0..positions {
        let row = &logits[i * vocab..(i + 1) * vocab];
        if argmax_lowest(row) == tokens[i + 1] {
            correct += 1;
        }
    }
    (correct, positions)
}

/// Total negative log-likelihood of a sequence given its logits, summed over
/// the `len - 1` predicted positions.
fn sequence_nll(logits: &[f64], vocab: usize, tokens: &[usize]) -> f64 {
    let mut nll = 0.0;
    for i in 0..tokens.len() - 1 {
        let row = &logits[i * vocab..(i + 1) * vocab];
        nll += log_sum_exp(row) - row[tokens[i + 1]];
    }
    nll
}

// ── Split-level metrics ─────────────────────────────────────────────────────

/// Pooled greedy next-token accuracy over all predicted positions of `seqs`.
pub fn memorization_accuracy(
    params: &ModelParams,
    seqs: &[Sequence],
) -> Result<f64, ModelError> {
    let vocab = params.config.vocab_size;
    let (mut correct, mut total) = (0usize, 0usize);
    for seq in seqs {
        let logits = params.logits(&seq.tokens)?;
        let (c, n) = greedy_hits(&logits.data, vocab, &seq.tokens);
        correct += c;
        total += n;
    }
    if total == 0 {
        return Err(ModelError::Config("memorization accuracy over no positions".into()));
    }
    Ok(correct as f64 / total as f64)
}

/// Pooled corpus-level perplexity of `seqs`.
pub fn perplexity(params: &ModelParams, seqs: &[Sequence]) -> Result<f64, ModelError> {
    let vocab = params.config.vocab_size;
    let mut nll = 0.0;
    let mut positions = 0usize;
    for seq in seqs {
        let logits = params.logits(&seq.tokens)?;
        nll += sequence_nll(&logits.data, vocab, &seq.tokens);
        positions += seq.tokens.len() - 1;
    }
    if positions == 0 {
        return Err(ModelError::Config("perplexity over no positions".into()));
    }
    Ok((nll / positions as f64).exp())
}

/// Log-likelihood a model assigns to a full sentence (sum over predicted
/// positions), optionally divided by the number of predicted positions.
pub fn sentence_log_likelihood(
    params: &ModelParams,
    tokens: &[usize],
    length_normalized: bool,
) -> Result<f64, ModelError> {
    let vocab = params.config.vocab_size;
    let logits = params.logits(tokens)?;
    let ll = -sequence_nll(&logits.data, vocab, tokens);
    if length_normalized {
        Ok(ll / (tokens.len() - 1) as f64)
    } else {
        Ok(ll)
    }
}

/// Fraction of cloze probes whose gold candidate ranks strictly first by
/// substituted-sentence log-likelihood.
pub fn probing_accuracy(
    params: &ModelParams,
    probes: &[ClozeFact],
    length_normalized: bool,
) -> Result<f64, ModelError> {
    if probes.is_empty() {
        return Err(ModelError::Config("probing accuracy over no probes".into()));
    }
    let mut correct = 0usize;
    for probe in probes {
        let gold_index = probe.gold_index().ok_or_else(|| {
            ModelError::Config(format!("probe {} has no gold candidate", probe.item_id))
        })?;
        let mut scores = Vec::with_capacity(probe.candidates.len());
        for candidate in &probe.candidates {
            let sentence = probe.sentence_with(candidate);
            scores.push(sentence_log_likelihood(params, &sentence, length_normalized)?);
        }
        if gold_ranks_first(&scores, gold_index) {
            correct += 1;
        }
    }
    Ok(correct as f64 / probes.len() as f64)
}

// ── Reports ─────────────────────────────────────────────────────────────────

/// One `(language, split)` or `(group, split)` measurement cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValues {
    pub ma: f64,
    pub ppl: f64,
    pub pa: Option<f64>,
}

/// What [`evaluate`] measures.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Splits to evaluate.
    pub splits: Vec<Split>,
    /// Score cloze probes (on splits that carry them).
    pub probing: bool,
    /// Length-normalize probe log-likelihoods before ranking.
    pub length_normalized_pa: bool,
    /// Restrict to these language codes (`None` = all).
    pub languages: Option<Vec<String>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            splits: Split::ALL.to_vec(),
            probing: true,
            length_normalized_pa: false,
            languages: None,
        }
    }
}

/// Per-language and per-group measurements for one parameter set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    /// `(language code, split) → values`.
    pub languages: BTreeMap<(String, Split), MetricValues>,
    /// `(group, split) → values`, unweighted means over member languages.
    pub groups: BTreeMap<(LangGroup, Split), MetricValues>,
}

/// Measures `params` on `corpus` per the options.
pub fn evaluate(
    params: &ModelParams,
    corpus: &ParallelCorpus,
    opts: &EvalOptions,
) -> Result<EvalReport, ModelError> {
    let lang_indices: Vec<usize> = match &opts.languages {
        None => (0..corpus.languages().len()).collect(),
        Some(codes) => codes
            .iter()
            .map(|c| {
                corpus
                    .lang_index(c)
                    .ok_or_else(|| ModelError::Config(format!("unknown language `{c}`")))
            })
            .collect::<Result<_, _>>()?,
    };

    let mut report = EvalReport::default();
    for &split in &opts.splits {
        let mut group_members: BTreeMap<LangGroup, Vec<MetricValues>> = BTreeMap::new();
        for &li in &lang_indices {
            let code = corpus.languages()[li].code.clone();
            let seqs = &corpus.split(split)[li];
            let probes = corpus.cloze(split);
            let pa = if opts.probing && !probes.is_empty() {
                Some(probing_accuracy(params, &probes[li], opts.length_normalized_pa)?)
            } else {
                None
            };
            let values = MetricValues {
                ma: memorization_accuracy(params, seqs)?,
                ppl: perplexity(params, seqs)?,
                pa,
            };
            group_members.entry(corpus.group_of(li)).or_default().push(values);
            report.languages.insert((code, split), values);
        }
        for (group, members) in group_members {
            report.groups.insert((group, split), average_values(&members));
        }
    }
    Ok(report)
}

/// Unweighted mean of measurement cells; the probe column averages only when
/// every member carries it.
pub fn average_values(items: &[MetricValues]) -> MetricValues {
    let n = items.len() as f64;
    let pa = if items.iter().all(|v| v.pa.is_some()) {
        Some(items.iter().map(|v| v.pa.unwrap()).sum::<f64>() / n)
    } else {
        None
    };
    MetricValues {
        ma: items.iter().map(|v| v.ma).sum::<f64>() / n,
        ppl: items.iter().map(|v| v.ppl).sum::<f64>() / n,
        pa,
    }
}

// ── CSV round-trip ──────────────────────────────────────────────────────────

/// One long-format row of a metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    /// `"lang"` or `"group"`.
    pub scope: String,
    /// Language code or group name.
    pub name: String,
    pub split: Split,
    /// `"ma"`, `"ppl"`, or `"pa"`.
    pub metric: String,
    pub value: f64,
}

/// Header line of the long-format CSV.
pub const CSV_HEADER: &str = "scope,name,split,metric,value";

impl EvalReport {
    /// Flattens the report into long-format rows, languages first.
    pub fn to_rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        let mut push = |scope: &str, name: String, split: Split, values: &MetricValues| {
            let mut add = |metric: &str, value: f64| {
                rows.push(MetricRow {
                    scope: scope.to_string(),
                    name: name.clone(),
                    split,
                    metric: metric.to_string(),
                    value,
                });
            };
            add("ma", values.ma);
            add("ppl", values.ppl);
            if let Some(pa) = values.pa {
                add("pa", pa);
            }
        };
        for ((code, split), values) in &self.languages {
            push("lang", code.clone(), *split, values);
        }
        for ((group, split), values) in &self.groups {
            push("group", group.to_string(), *split, values);
        }
        rows
    }
}

/// Renders rows as CSV.  Float formatting uses the shortest representation
/// that parses back to the identical bits, so render → parse → render is a
/// byte-level fixed point.
pub fn render_rows_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.scope, r.name, r.split, r.metric, r.value));
    }
    out
}

/// Parses a CSV produced by [`render_rows_csv`].
pub fn parse_rows_csv(text: &str) -> Result<Vec<MetricRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(format!("line {}: expected 5 fields, got {}", idx + 2, fields.len()));
        }
        rows.push(MetricRow {
            scope: fields[0].to_string(),
            name: fields[1].to_string(),
            split: fields[2].parse().map_err(|e| format!("line {}: {e}", idx + 2))?,
            metric: fields[3].to_string(),
            value: fields[4]
                .parse()
                .map_err(|e| format!("line {}: bad value: {e}", idx + 2))?,
        });
    }
    Ok(rows)
}

/// Renders the report as a Markdown table, one row per `(name, split)`.
pub fn render_report_markdown(report: &EvalReport) -> String {
    let mut out = String::from("| scope | name | split | MA | PPL | PA |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    let fmt_pa = |pa: Option<f64>| pa.map_or("–".to_string(), |v| format!("{v:.4}"));
    for ((code, split), v) in &report.languages {
        out.push_str(&format!(
            "| lang | {code} | {split} | {:.4} | {:.3} | {} |\n",
            v.ma,
            v.ppl,
            fmt_pa(v.pa)
        ));
    }
    for ((group, split), v) in &report.groups {
        out.push_str(&format!(
            "| group | {group} | {split} | {:.4} | {:.3} | {} |\n",
            v.ma,
            v.ppl,
            fmt_pa(v.pa)
        ));
    }
    out
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, LanguageSpec, ResourceLevel, SynthSpec};
    use crate::model::ModelConfig;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 32,
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            max_seq_len: 12,
            seed: 11,
        }
    }

    fn tiny_corpus_spec() -> SynthSpec {
        SynthSpec {
            languages: vec![
                LanguageSpec::new("aa", ResourceLevel::High),
                LanguageSpec::new("bb", ResourceLevel::Low),
            ],
            vocab_size: 32,
            min_len: 4,
            max_len: 6,
            forget_size: 4,
            retain_size: 4,
            validation_size: 2,
            test_size: 2,
            pretrain_base: 4,
            cloze_candidates: 2,
            function_tokens: 2,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn argmax_breaks_ties_at_lowest_index() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_lowest(&[5.0]), 0);
        assert_eq!(argmax_lowest(&[2.0, 2.0]), 0);
        assert_eq!(argmax_lowest(&[-1.0, -0.5]), 1);
    }

    #[test]
    fn gold_must_strictly_beat_every_candidate() {
        assert!(gold_ranks_first(&[3.0, 1.0, 2.0], 0));
        assert!(!gold_ranks_first(&[3.0, 3.0, 2.0], 0), "a tie defeats the gold");
        assert!(!gold_ranks_first(&[1.0, 3.0, 2.0], 0));
        assert!(gold_ranks_first(&[1.0, 3.0, 2.0], 1));
    }

    /// Independent oracle: per-position prefix forwards.  The prediction for
    /// position i+1 comes from a fresh forward pass over tokens[0..=i] only,
    /// exercising none of the row-narrowing used by the pooled path.
    fn brute_force_ma(params: &ModelParams, seqs: &[Sequence]) -> f64 {
        let vocab = params.config.vocab_size;
        let (mut correct, mut total) = (0usize, 0usize);
        for seq in seqs {
            for i in 0..seq.tokens.len() - 1 {
                let logits = params.logits(&seq.tokens[..=i]).unwrap();
                let last = &logits.data[i * vocab..(i + 1) * vocab];
                if argmax_lowest(last) == seq.tokens[i + 1] {
                    correct += 1;
                }
                total += 1;
            }
        }
        correct as f64 / total as f64
    }

    #[test]
    fn memorization_accuracy_matches_prefix_forward_oracle() {
        let params = crate::model::ModelParams::init(&tiny_config()).unwrap();
        let corpus = generate_synthetic_corpus(&tiny_corpus_spec(), 3).unwrap();
        let seqs = &corpus.split(Split::Forget)[0];
        let fast = memorization_accuracy(&params, seqs).unwrap();
        let slow = brute_force_ma(&params, seqs);
        assert_eq!(fast, slow);
    }

    #[test]
    fn perplexity_matches_scalar_recomputation() {
        let params = crate::model::ModelParams::init(&tiny_config()).unwrap();
        let corpus = generate_synthetic_corpus(&tiny_corpus_spec(), 4).unwrap();
        let seqs = &corpus.split(Split::Retain)[1];
        let ppl = perplexity(&params, seqs).unwrap();

        // Recompute from per-prefix forwards with a plain scalar loop.
        let vocab = params.config.vocab_size;
        let mut nll = 0.0;
        let mut positions = 0;
        for seq in seqs {
            for i in 0..seq.tokens.len() - 1 {
                let logits = params.logits(&seq.tokens[..=i]).unwrap();
                let row = &logits.data[i * vocab..(i + 1) * vocab];
                let lse = log_sum_exp(row);
                nll += lse - row[seq.tokens[i + 1]];
                positions += 1;
            }
        }
        let expected = (nll / positions as f64).exp();
        assert!((ppl - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn untrained_model_perplexity_is_near_uniform() {
        // With 0.02-scale random init the logits are nearly flat, so
        // perplexity starts close to the vocabulary size.
        let params = crate::model::ModelParams::init(&tiny_config()).unwrap();
        let corpus = generate_synthetic_corpus(&tiny_corpus_spec(), 5).unwrap();
        let ppl = perplexity(&params, &corpus.split(Split::Test)[0]).unwrap();
        assert!((ppl - 32.0).abs() < 2.0, "near-uniform model should sit near |V|, got {ppl}");
    }

    #[test]
    fn probing_accuracy_matches_manual_ranking() {
        let params = crate::model::ModelParams::init(&tiny_config()).unwrap();
        let corpus = generate_synthetic_corpus(&tiny_corpus_spec(), 6).unwrap();
        let probes = &corpus.cloze(Split::Forget)[0];
        let pa = probing_accuracy(&params, probes, false).unwrap();

        let mut correct = 0;
        for probe in probes {
            let gold_ll = sentence_log_likelihood(
                &params,
                &probe.sentence_with(&probe.gold),
                false,
            )
            .unwrap();
            let mut wins = true;
            for (i, c) in probe.candidates.iter().enumerate() {
                if i == probe.gold_index().unwrap() {
                    continue;
                }
                let ll =
                    sentence_log_likelihood(&params, &probe.sentence_with(c), false).unwrap();
                if ll >= gold_ll {
                    wins = false;
                }
            }
            if wins {
                correct += 1;
            }
        }
        assert_eq!(pa, correct as f64 / probes.len() as f64);
    }

    #[test]
    fn duplicate_candidate_ties_count_against_gold() {
        let params = crate::model::ModelParams::init(&tiny_config()).unwrap();
        let probe = ClozeFact {
            item_id: 0,
            lang: "aa".into(),
            prefix: vec![1, 2],
            suffix: vec![3],
            gold: vec![4],
            // The duplicate of the gold span scores identically, so the gold
            // cannot be *strictly* best.
            candidates: vec![vec![4], vec![4], vec![5]],
        };
        let pa = probing_accuracy(&params, &[probe], false).unwrap();
        assert_eq!(pa, 0.0);
    }

    #[test]
    fn length_normalization_changes_ranking_when_candidates_differ_in_length() {
        let params = crate::model::ModelParams::init(&tiny_config()).unwrap();
        let probe = ClozeFact {
            item_id: 0,
            lang: "aa".into(),
            prefix: vec![1, 2],
            suffix: vec![3],
            gold: vec![4],
            candidates: vec![vec![4], vec![5, 6, 7]],
        };
        // Raw log-likelihood penalizes the longer candidate for having more
        // factors; normalized scoring divides them away.  We only check both
        // settings run and give results in [0, 1] (the direction depends on
        // model weights).
        for normalized in [false, true] {
            let pa = probing_accuracy(&params, std::slice::from_ref(&probe), normalized).unwrap();
            assert!((0.0..=1.0).contains(&pa));
        }
    }

    #[test]
    fn evaluate_covers_languages_groups_and_probe_columns() {
        let params = crate::model::ModelParams::init(&tiny_config()).unwrap();
        let corpus = generate_synthetic_corpus(&tiny_corpus_spec(), 7).unwrap();
        let report = evaluate(&params, &corpus, &EvalOptions::default()).unwrap();

        assert_eq!(report.languages.len(), 2 * 4);
        // aa is the pivot; bb is low-resource.
        assert!(report.languages.contains_key(&("aa".into(), Split::Forget)));
        assert!(report.groups.contains_key(&(LangGroup::Pivot, Split::Forget)));
        assert!(report.groups.contains_key(&(LangGroup::LowSrc, Split::Test)));
        // Probes exist only for forget and test.
        let f = report.languages[&("aa".into(), Split::Forget)];
        let v = report.languages[&("aa".into(), Split::Validation)];
        assert!(f.pa.is_some());
        assert!(v.pa.is_none());
        // Single-member groups equal their member.
        let lang = report.languages[&("bb".into(), Split::Forget)];
        let group = report.groups[&(LangGroup::LowSrc, Split::Forget)];
        assert_eq!(lang, group);
    }

    #[test]
    fn evaluate_restricted_to_one_language() {
        let params = crate::model::ModelParams::init(&tiny_config()).unwrap();
        let corpus = generate_synthetic_corpus(&tiny_corpus_spec(), 8).unwrap();
        let opts = EvalOptions {
            languages: Some(vec!["bb".into()]),
            splits: vec![Split::Forget],
            ..EvalOptions::default()
        };
        let report = evaluate(&params, &corpus, &opts).unwrap();
        assert_eq!(report.languages.len(), 1);
        assert_eq!(report.groups.len(), 1);
        assert!(report.languages.contains_key(&("bb".into(), Split::Forget)));
    }

    #[test]
    fn group_average_is_unweighted_mean() {
        let a = MetricValues { ma: 0.5, ppl: 10.0, pa: Some(0.25) };
        let b = MetricValues { ma: 1.0, ppl: 20.0, pa: Some(0.75) };
        let avg = average_values(&[a, b]);
        assert_eq!(avg.ma, 0.75);
        assert_eq!(avg.ppl, 15.0);
        assert_eq!(avg.pa, Some(0.5));
        let c = MetricValues { ma: 0.0, ppl: 1.0, pa: None };
        assert_eq!(average_values(&[a, c]).pa, None);
    }

    #[test]
    fn csv_round_trips_byte_identically() {
        let params = crate::model::ModelParams::init(&tiny_config()).unwrap();
        let corpus = generate_synthetic_corpus(&tiny_corpus_spec(), 9).unwrap();
        let report = evaluate(&params, &corpus, &EvalOptions::default()).unwrap();
        let rows = report.to_rows();
        let rendered = render_rows_csv(&rows);
        let parsed = parse_rows_csv(&rendered).unwrap();
        assert_eq!(parsed, rows);
        assert_eq!(render_rows_csv(&parsed), rendered, "render → parse → render is stable");
    }

    #[test]
    fn csv_parser_rejects_malformed_input() {
        assert!(parse_rows_csv("nope\n").is_err());
        let missing = format!("{CSV_HEADER}\nlang,en,forget,ma\n");
        assert!(parse_rows_csv(&missing).is_err());
        let bad_split = format!("{CSV_HEADER}\nlang,en,nosuch,ma,0.5\n");
        assert!(parse_rows_csv(&bad_split).is_err());
    }

    #[test]
    fn markdown_table_lists_every_cell() {
        let params = crate::model::ModelParams::init(&tiny_config()).unwrap();
        let corpus = generate_synthetic_corpus(&tiny_corpus_spec(), 10).unwrap();
        let report = evaluate(&params, &corpus, &EvalOptions::default()).unwrap();
        let md = render_report_markdown(&report);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 2 + report.languages.len() + report.groups.len());
        assert!(lines[2].starts_with("| lang |"));
    }
}
