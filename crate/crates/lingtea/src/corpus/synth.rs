//! Seeded synthetic parallel corpora.
//!
//! Languages are modeled as disjoint bands of the token space: language `z`
//! owns tokens `[z·band, (z+1)·band)`.  Every sentence is first composed in
//! a band-local "pivot form" — grammar templates whose slots are filled with
//! Zipf-distributed noun and verb tokens plus a few function tokens — and
//! then projected into each language by a seeded permutation of the content
//! region (the pivot uses the identity).  Translations therefore share
//! structure and alignment but no surface tokens, which keeps per-language
//! measurements clean while still giving every language the same underlying
//! item.
//!
//! Function tokens are mapped by identity inside each band, playing the role
//! of closed-class grammar words; content tokens split into a noun region
//! and a verb region so cloze distractors can be drawn from the right class.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::{
    ClozeFact, CorpusError, CorpusParts, LanguageSpec, ParallelCorpus, ResourceLevel, Sequence,
};

/// Zipf exponent for content-token frequencies.
const ZIPF_EXPONENT: f64 = 1.2;

/// Attempt multiplier for rejection sampling of distinct sentences.
const DEDUP_ATTEMPT_FACTOR: usize = 200;

// ── Spec ────────────────────────────────────────────────────────────────────

/// Shape of a synthetic corpus.  The first language acts as the pivot.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Declared languages; index 0 is the pivot.
    pub languages: Vec<LanguageSpec>,
    /// Total token-id space; it is split into equal per-language bands and
    /// any remainder stays unused.
    pub vocab_size: usize,
    /// Inclusive sentence-length bounds, in tokens.
    pub min_len: usize,
    pub max_len: usize,
    /// Items per aligned split (each item appears once per language).
    pub forget_size: usize,
    pub retain_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    /// Pretraining sentences for a share-1.0 language; per-language counts
    /// are `round(share · pretrain_base)`.
    pub pretrain_base: usize,
    /// Pretraining shares: the pivot, then non-pivot languages by level.
    pub pivot_share: f64,
    pub high_share: f64,
    pub mid_share: f64,
    pub low_share: f64,
    /// Candidates per cloze probe (gold included); 0 disables cloze probes.
    pub cloze_candidates: usize,
    /// Function tokens per language band; the rest of the band is content.
    pub function_tokens: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            languages: vec![
                LanguageSpec::new("en", ResourceLevel::High),
                LanguageSpec::new("fr", ResourceLevel::High),
                LanguageSpec::new("zh", ResourceLevel::High),
                LanguageSpec::new("sw", ResourceLevel::Low),
            ],
            vocab_size: 512,
            min_len: 8,
            max_len: 12,
            forget_size: 32,
            retain_size: 32,
            validation_size: 16,
            test_size: 16,
            pretrain_base: 160,
            pivot_share: 1.0,
            high_share: 0.5,
            mid_share: 0.25,
            low_share: 0.05,
            cloze_candidates: 4,
            function_tokens: 8,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<Geometry, CorpusError> {
        let n_langs = self.languages.len();
        if n_langs == 0 {
            return Err(CorpusError::Generation("no languages declared".into()));
        }
        let mut seen = HashSet::new();
        for l in &self.languages {
            if !seen.insert(&l.code) {
                return Err(CorpusError::Generation(format!("duplicate language `{}`", l.code)));
            }
        }
        if self.min_len < 2 || self.max_len < self.min_len {
            return Err(CorpusError::Generation(format!(
                "sentence length bounds [{}, {}] invalid; need 2 <= min <= max",
                self.min_len, self.max_len
            )));
        }
        for (name, n) in [
            ("forget", self.forget_size),
            ("retain", self.retain_size),
            ("validation", self.validation_size),
            ("test", self.test_size),
        ] {
            if n == 0 {
                return Err(CorpusError::Generation(format!("{name} split must be non-empty")));
            }
        }
        for (name, s) in [
            ("pivot", self.pivot_share),
            ("high", self.high_share),
            ("mid", self.mid_share),
            ("low", self.low_share),
        ] {
            if !(0.0..=1.0).contains(&s) || !s.is_finite() {
                return Err(CorpusError::Generation(format!(
                    "{name} share {s} outside [0, 1]"
                )));
            }
        }
        let band = self.vocab_size / n_langs;
        if band < self.function_tokens + 4 {
            return Err(CorpusError::Generation(format!(
                "vocabulary of {} gives band {band} per language; need at least {} \
                 ({} function tokens + 4 content tokens)",
                self.vocab_size,
                self.function_tokens + 4,
                self.function_tokens
            )));
        }
        let content = band - self.function_tokens;
        let nouns = content / 2;
        let verbs = content - nouns;
        if self.cloze_candidates == 1 {
            return Err(CorpusError::Generation(
                "cloze probes need at least 2 candidates (or 0 to disable)".into(),
            ));
        }
        if self.cloze_candidates > nouns.min(verbs) {
            return Err(CorpusError::Generation(format!(
                "{} cloze candidates exceed the smaller content region ({} tokens)",
                self.cloze_candidates,
                nouns.min(verbs)
            )));
        }
        Ok(Geometry { band, content, nouns })
    }

    fn share_of(&self, lang_index: usize) -> f64 {
        if lang_index == 0 {
            self.pivot_share
        } else {
            match self.languages[lang_index].level {
                ResourceLevel::High => self.high_share,
                ResourceLevel::Mid => self.mid_share,
                ResourceLevel::Low => self.low_share,
            }
        }
    }
}

/// Derived band layout shared by the generation passes.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    /// Tokens per language band.
    band: usize,
    /// Content tokens per band (`band - function_tokens`).
    content: usize,
    /// Size of the noun region (`[0, nouns)`); verbs fill `[nouns, content)`.
    nouns: usize,
}

// ── Sentence composer ───────────────────────────────────────────────────────

/// A vocabulary slice sentences draw their content words from: specific noun
/// and verb token ids with Zipf-shaped frequencies over each list.
struct Lexicon {
    nouns: Vec<usize>,
    verbs: Vec<usize>,
    noun_dist: Zipf<f64>,
    verb_dist: Zipf<f64>,
}

impl Lexicon {
    fn new(nouns: Vec<usize>, verbs: Vec<usize>) -> Result<Self, CorpusError> {
        let mk = |n: usize| {
            Zipf::new(n as u64, ZIPF_EXPONENT)
                .map_err(|e| CorpusError::Generation(format!("frequency distribution: {e}")))
        };
        let noun_dist = mk(nouns.len())?;
        let verb_dist = mk(verbs.len())?;
        Ok(Lexicon { nouns, verbs, noun_dist, verb_dist })
    }

    fn noun<R: Rng>(&self, rng: &mut R) -> usize {
        self.nouns[self.noun_dist.sample(rng) as usize - 1]
    }

    fn verb<R: Rng>(&self, rng: &mut R) -> usize {
        self.verbs[self.verb_dist.sample(rng) as usize - 1]
    }
}

/// Emits pivot-form sentences: clause templates over noun/verb/function
/// slots, lengths uniform in `[min_len, max_len]`, content words drawn from
/// a caller-chosen lexicon.
struct Composer {
    geo: Geometry,
    min_len: usize,
    max_len: usize,
    function_tokens: usize,
}

impl Composer {
    fn new(spec: &SynthSpec, geo: Geometry) -> Self {
        Composer {
            geo,
            min_len: spec.min_len,
            max_len: spec.max_len,
            function_tokens: spec.function_tokens,
        }
    }

    fn function(&self, k: usize) -> usize {
        self.geo.content + k % self.function_tokens
    }

    /// One clause in band-local token ids; every clause carries a content
    /// token within its first two positions, so any >=2-token truncation of
    /// a sentence still contains content.
    fn clause<R: Rng>(&self, rng: &mut R, lex: &Lexicon) -> Vec<usize> {
        match rng.gen_range(0..4u8) {
            0 => vec![self.function(0), lex.noun(rng), lex.verb(rng)],
            1 => vec![self.function(1), lex.noun(rng), lex.verb(rng), lex.noun(rng)],
            2 => vec![self.function(2), lex.noun(rng), self.function(3), lex.verb(rng)],
            _ => vec![lex.noun(rng), lex.verb(rng), self.function(4), lex.noun(rng)],
        }
    }

    /// One full sentence in band-local token ids, opened by `topic`.  The
    /// topic slot cycles through the lexicon across sentences so prefixes
    /// identify sentences early; without it, sentences sharing a frequent
    /// first token have intrinsically ambiguous continuations, which caps
    /// greedy memorization well below 1 no matter how long training runs.
    fn sentence<R: Rng>(&self, rng: &mut R, topic: usize, lex: &Lexicon) -> Vec<usize> {
        let target = rng.gen_range(self.min_len..=self.max_len);
        let mut tokens = Vec::with_capacity(target + 4);
        tokens.push(topic);
        while tokens.len() < target {
            tokens.extend(self.clause(rng, lex));
        }
        tokens.truncate(target);
        tokens
    }
}

// ── Generator ───────────────────────────────────────────────────────────────

/// Generates a corpus from `spec`, fully determined by `seed`: same spec and
/// seed give token-identical output.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<ParallelCorpus, CorpusError> {
    let geo = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_langs = spec.languages.len();
    let composer = Composer::new(spec, geo);

    // Per-language projection of the content region.  Index 0 (pivot) is the
    // identity; other languages get an independent seeded shuffle.
    let mut projections: Vec<Vec<usize>> = Vec::with_capacity(n_langs);
    for z in 0..n_langs {
        let mut map: Vec<usize> = (0..geo.content).collect();
        if z != 0 {
            map.shuffle(&mut rng);
        }
        projections.push(map);
    }

    let project = |local: &[usize], z: usize| -> Vec<usize> {
        local
            .iter()
            .map(|&t| {
                let mapped = if t < geo.content { projections[z][t] } else { t };
                z * geo.band + mapped
            })
            .collect()
    };

    // Distinct pivot-form sentences for all aligned splits, then pretrain.
    // The content region is split into two disjoint lexicons.  Forget
    // sentences draw their openers and content words from a reserved slice —
    // one exclusive opener per forget item (so prefixes identify them
    // uniquely and memorization is never capped by shared-prefix ambiguity)
    // plus a pool of body words no other split uses, the way the entities of
    // targeted facts rarely occur in general-domain text.  Retain,
    // validation, test, and pretraining filler all share the remaining
    // lexicon: retain sentences anchor the same vocabulary in the same kinds
    // of contexts the held-out splits are scored on.
    let aligned_total =
        spec.forget_size + spec.retain_size + spec.validation_size + spec.test_size;
    let forget_nouns_needed = spec.forget_size;
    let forget_verbs_needed = (spec.forget_size / 2).max(2);
    let verbs_total = geo.content - geo.nouns;
    if forget_nouns_needed + 2 > geo.nouns || forget_verbs_needed + 2 > verbs_total {
        return Err(CorpusError::Generation(format!(
            "{} forget sentences need {} reserved nouns and {} reserved verbs plus at least \
             2 shared tokens of each kind, but the per-language band only has {} nouns and \
             {} verbs; increase vocab_size or shrink the forget split",
            spec.forget_size, forget_nouns_needed, forget_verbs_needed, geo.nouns, verbs_total
        )));
    }
    let mut noun_order: Vec<usize> = (0..geo.nouns).collect();
    noun_order.shuffle(&mut rng);
    let mut verb_order: Vec<usize> = (geo.nouns..geo.content).collect();
    verb_order.shuffle(&mut rng);
    let forget_lex = Lexicon::new(
        noun_order[..forget_nouns_needed].to_vec(),
        verb_order[..forget_verbs_needed].to_vec(),
    )?;
    let shared_lex = Lexicon::new(
        noun_order[forget_nouns_needed..].to_vec(),
        verb_order[forget_verbs_needed..].to_vec(),
    )?;
    // Openers: each forget item gets one reserved noun; the shared splits
    // cycle through the whole shared lexicon in a seeded shuffled order.
    let forget_topics: Vec<usize> = forget_lex.nouns.clone();
    let mut shared_topics: Vec<usize> =
        shared_lex.nouns.iter().chain(shared_lex.verbs.iter()).copied().collect();
    shared_topics.shuffle(&mut rng);

    fn draw_distinct(
        composer: &Composer,
        rng: &mut ChaCha8Rng,
        count: usize,
        seen: &mut HashSet<Vec<usize>>,
        lex: &Lexicon,
        topics: &[usize],
        cursor: &mut usize,
    ) -> Result<Vec<Vec<usize>>, CorpusError> {
        let mut out = Vec::with_capacity(count);
        let budget = 1000 + DEDUP_ATTEMPT_FACTOR * count;
        let mut attempts = 0;
        while out.len() < count {
            attempts += 1;
            if attempts > budget {
                return Err(CorpusError::Generation(format!(
                    "could not draw {count} distinct sentences after {budget} attempts; \
                     widen the length range or the vocabulary"
                )));
            }
            let topic = topics[*cursor % topics.len()];
            let s = composer.sentence(rng, topic, lex);
            if seen.insert(s.clone()) {
                *cursor += 1;
                out.push(s);
            }
        }
        Ok(out)
    }

    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut forget_cursor = 0usize;
    let mut shared_cursor = 0usize;
    let mut aligned = draw_distinct(
        &composer,
        &mut rng,
        spec.forget_size,
        &mut seen,
        &forget_lex,
        &forget_topics,
        &mut forget_cursor,
    )?;
    aligned.extend(draw_distinct(
        &composer,
        &mut rng,
        aligned_total - spec.forget_size,
        &mut seen,
        &shared_lex,
        &shared_topics,
        &mut shared_cursor,
    )?);
    let mut next_item_id: u64 = 0;
    let mut take = |count: usize, offset: &mut usize| -> Vec<(u64, Vec<usize>)> {
        let slice = &aligned[*offset..*offset + count];
        *offset += count;
        slice
            .iter()
            .map(|s| {
                let id = next_item_id;
                next_item_id += 1;
                (id, s.clone())
            })
            .collect()
    };
    let mut offset = 0;
    let forget_pivot = take(spec.forget_size, &mut offset);
    let retain_pivot = take(spec.retain_size, &mut offset);
    let validation_pivot = take(spec.validation_size, &mut offset);
    let test_pivot = take(spec.test_size, &mut offset);

    let materialize = |items: &[(u64, Vec<usize>)]| -> Vec<Vec<Sequence>> {
        (0..n_langs)
            .map(|z| {
                items
                    .iter()
                    .map(|(id, local)| Sequence {
                        item_id: *id,
                        lang: spec.languages[z].code.clone(),
                        tokens: project(local, z),
                        text: None,
                    })
                    .collect()
            })
            .collect()
    };

    let forget = materialize(&forget_pivot);
    let retain = materialize(&retain_pivot);
    let validation = materialize(&validation_pivot);
    let test = materialize(&test_pivot);

    // Cloze probes: pick a content position, offer same-region distractors.
    let cloze_for = |items: &[(u64, Vec<usize>)],
                         rng: &mut ChaCha8Rng|
     -> Result<Vec<Vec<ClozeFact>>, CorpusError> {
        if spec.cloze_candidates == 0 {
            return Ok(Vec::new());
        }
        let mut per_lang: Vec<Vec<ClozeFact>> = vec![Vec::new(); n_langs];
        for (id, local) in items {
            let content_positions: Vec<usize> =
                (0..local.len()).filter(|&i| local[i] < geo.content).collect();
            debug_assert!(!content_positions.is_empty());
            let pos = content_positions[rng.gen_range(0..content_positions.len())];
            let gold = local[pos];
            let (region_start, region_end) =
                if gold < geo.nouns { (0, geo.nouns) } else { (geo.nouns, geo.content) };
            let mut distractors: Vec<usize> = Vec::with_capacity(spec.cloze_candidates - 1);
            while distractors.len() < spec.cloze_candidates - 1 {
                let d = rng.gen_range(region_start..region_end);
                if d != gold && !distractors.contains(&d) {
                    distractors.push(d);
                }
            }
            let mut candidates: Vec<usize> = std::iter::once(gold).chain(distractors).collect();
            candidates.shuffle(rng);
            for (z, probes) in per_lang.iter_mut().enumerate() {
                probes.push(ClozeFact {
                    item_id: *id,
                    lang: spec.languages[z].code.clone(),
                    prefix: project(&local[..pos], z),
                    suffix: project(&local[pos + 1..], z),
                    gold: project(&[gold], z),
                    candidates: candidates.iter().map(|&c| project(&[c], z)).collect(),
                });
            }
        }
        Ok(per_lang)
    };
    let cloze_forget = cloze_for(&forget_pivot, &mut rng)?;
    let cloze_test = cloze_for(&test_pivot, &mut rng)?;

    // Pretraining pool: per-language monolingual sentences, counts scaled by
    // resource share, drawn from the shared lexicon and kept distinct from
    // every aligned item (and from each other) in pivot form.  Filler keeps
    // cycling the shared topic order from where the retain and held-out
    // draws left off.
    let mut pretrain: Vec<Vec<Sequence>> = Vec::with_capacity(n_langs);
    for z in 0..n_langs {
        let count = (spec.share_of(z) * spec.pretrain_base as f64).round() as usize;
        let sentences = draw_distinct(
            &composer,
            &mut rng,
            count,
            &mut seen,
            &shared_lex,
            &shared_topics,
            &mut shared_cursor,
        )?;
        let mut lang_seqs = Vec::with_capacity(count);
        for local in &sentences {
            let id = next_item_id;
            next_item_id += 1;
            lang_seqs.push(Sequence {
                item_id: id,
                lang: spec.languages[z].code.clone(),
                tokens: project(local, z),
                text: None,
            });
        }
        pretrain.push(lang_seqs);
    }

    ParallelCorpus::new(CorpusParts {
        languages: spec.languages.clone(),
        pivot: 0,
        vocab_size: spec.vocab_size,
        forget,
        retain,
        validation,
        test,
        pretrain,
        cloze_forget,
        cloze_test,
    })
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;

    #[test]
    fn default_spec_generates_and_validates() {
        let corpus = generate_synthetic_corpus(&SynthSpec::default(), 0).unwrap();
        assert_eq!(corpus.languages().len(), 4);
        assert_eq!(corpus.split_len(Split::Forget), 32);
        assert_eq!(corpus.split_len(Split::Retain), 32);
        assert_eq!(corpus.split_len(Split::Validation), 16);
        assert_eq!(corpus.split_len(Split::Test), 16);
        assert_eq!(corpus.cloze(Split::Forget)[0].len(), 32);
        assert_eq!(corpus.cloze(Split::Test)[0].len(), 16);
    }

    #[test]
    fn same_seed_is_token_identical_and_seeds_differ() {
        let spec = SynthSpec::default();
        let a = generate_synthetic_corpus(&spec, 7).unwrap();
        let b = generate_synthetic_corpus(&spec, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(&spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn languages_occupy_disjoint_token_bands() {
        let spec = SynthSpec::default();
        let corpus = generate_synthetic_corpus(&spec, 1).unwrap();
        let band = spec.vocab_size / spec.languages.len();
        for split in Split::ALL {
            for (z, lang_seqs) in corpus.split(split).iter().enumerate() {
                for seq in lang_seqs {
                    for &t in &seq.tokens {
                        assert!(
                            (z * band..(z + 1) * band).contains(&t),
                            "token {t} of lang {z} outside band"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn translations_share_structure_via_function_tokens() {
        // Function tokens map by identity within each band, so the positions
        // holding function tokens must agree between languages after
        // removing the band offset.
        let spec = SynthSpec::default();
        let corpus = generate_synthetic_corpus(&spec, 2).unwrap();
        let band = spec.vocab_size / spec.languages.len();
        let content = band - spec.function_tokens;
        let forget = corpus.split(Split::Forget);
        for (a, b) in forget[0].iter().zip(&forget[1]) {
            assert_eq!(a.item_id, b.item_id);
            assert_eq!(a.tokens.len(), b.tokens.len());
            for (&ta, &tb) in a.tokens.iter().zip(&b.tokens) {
                let (la, lb) = (ta % band, tb % band);
                assert_eq!(la >= content, lb >= content, "function/content class must align");
                if la >= content {
                    assert_eq!(la, lb, "function tokens are shared grammar");
                }
            }
        }
    }

    #[test]
    fn projection_is_a_bijection_per_language() {
        // Round-tripping all content tokens of language 2 back through its
        // projection hits every content id exactly once.
        let spec = SynthSpec::default();
        let corpus = generate_synthetic_corpus(&spec, 3).unwrap();
        let band = spec.vocab_size / spec.languages.len();
        let content = band - spec.function_tokens;
        // Gather observed local ids from all splits for language 2.
        let mut observed = HashSet::new();
        for split in Split::ALL {
            for seq in &corpus.split(split)[2] {
                for &t in &seq.tokens {
                    let local = t - 2 * band;
                    if local < content {
                        observed.insert(local);
                    }
                }
            }
        }
        // A bijection cannot map two pivot tokens to one local id, so the
        // number of distinct observed ids must match the pivot side.
        let mut pivot_observed = HashSet::new();
        for split in Split::ALL {
            for seq in &corpus.split(split)[0] {
                for &t in &seq.tokens {
                    if t < content {
                        pivot_observed.insert(t);
                    }
                }
            }
        }
        assert_eq!(observed.len(), pivot_observed.len());
    }

    #[test]
    fn pretrain_counts_follow_resource_shares() {
        let spec = SynthSpec::default();
        let corpus = generate_synthetic_corpus(&spec, 4).unwrap();
        let pre = corpus.pretrain();
        assert_eq!(pre[0].len(), 160); // pivot: share 1.0
        assert_eq!(pre[1].len(), 80); // high: share 0.5
        assert_eq!(pre[2].len(), 80);
        assert_eq!(pre[3].len(), 8); // low: share 0.05 = 10% of high
    }

    #[test]
    fn sentence_lengths_respect_bounds() {
        let spec = SynthSpec { min_len: 4, max_len: 7, ..SynthSpec::default() };
        let corpus = generate_synthetic_corpus(&spec, 5).unwrap();
        for split in Split::ALL {
            for lang_seqs in corpus.split(split) {
                for seq in lang_seqs {
                    assert!((4..=7).contains(&seq.tokens.len()));
                }
            }
        }
    }

    #[test]
    fn cloze_probe_reassembles_its_sentence() {
        let spec = SynthSpec::default();
        let corpus = generate_synthetic_corpus(&spec, 6).unwrap();
        for (z, probes) in corpus.cloze(Split::Forget).iter().enumerate() {
            for probe in probes {
                let seq = corpus.split(Split::Forget)[z]
                    .iter()
                    .find(|s| s.item_id == probe.item_id)
                    .unwrap();
                assert_eq!(probe.sentence_with(&probe.gold), seq.tokens);
                assert!(probe.gold_index().is_some());
                assert_eq!(probe.candidates.len(), spec.cloze_candidates);
            }
        }
    }

    #[test]
    fn rejects_vocabulary_too_small_for_bands() {
        let spec = SynthSpec { vocab_size: 40, ..SynthSpec::default() };
        let err = generate_synthetic_corpus(&spec, 0).unwrap_err();
        assert!(matches!(err, CorpusError::Generation(_)));
    }

    #[test]
    fn zipf_frequencies_are_skewed() {
        // The most frequent noun should appear several times more often than
        // the median noun across a decent sample.
        let spec = SynthSpec::default();
        let corpus = generate_synthetic_corpus(&spec, 9).unwrap();
        let band = spec.vocab_size / spec.languages.len();
        let content = band - spec.function_tokens;
        let nouns = content / 2;
        let mut counts = vec![0usize; nouns];
        for lang_seqs in corpus.pretrain().iter().take(1) {
            for seq in lang_seqs {
                for &t in &seq.tokens {
                    if t < nouns {
                        counts[t] += 1;
                    }
                }
            }
        }
        let max = *counts.iter().max().unwrap();
        let total: usize = counts.iter().sum();
        assert!(
            max * 4 >= total / 4,
            "frequency mass should concentrate: max {max}, total {total}"
        );
        let mut nonzero: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
        nonzero.sort_unstable();
        let median = nonzero[nonzero.len() / 2];
        assert!(
            max >= median * 3,
            "top noun should dominate the median noun: max {max}, median {median}"
        );
    }
}
