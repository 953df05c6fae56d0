//! Synthetic corpora with planted structural regimes.
//!
//! Each side (high or low evaluation) either follows a template, perturbed
//! element-wise at the side's noise rate, or draws fresh random sequences when
//! its noise rate is 1. Middle deciles blend the two sides. Every document
//! also carries one planted transition at a Beta-distributed position.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convergence::Verdict;
use crate::corpus::{Corpus, CorpusMeta, Document, Segment};
use crate::error::{Error, Result};
use crate::features::Lexicons;
use crate::sequence::{edit_distance, run_length_encode, Label, SequenceRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    pub regime: Verdict,
    pub n_docs: usize,
    pub seg_range: (usize, usize),
    pub alphabet: usize,
    pub noise_high: f64,
    pub noise_low: f64,
    pub position_shape_high: (f64, f64),
    pub position_shape_low: (f64, f64),
    pub planted: (Label, Label),
    pub template_runs: usize,
    pub seed: u64,
}

const CONVERGING_NOISE: f64 = 0.05;
const CONCENTRATED_LATE: (f64, f64) = (16.0, 4.0);
const CONCENTRATED_EARLY: (f64, f64) = (4.0, 16.0);
const UNIFORM: (f64, f64) = (1.0, 1.0);

impl RegimeSpec {
    pub fn new(regime: Verdict, seed: u64) -> Self {
        let (high_converges, low_converges) = match regime {
            Verdict::Ordered => (true, true),
            Verdict::Akp => (true, false),
            Verdict::ReverseAkp => (false, true),
            Verdict::Noisy => (false, false),
        };
        RegimeSpec {
            regime,
            n_docs: 200,
            seg_range: (30, 80),
            alphabet: 5,
            noise_high: if high_converges { CONVERGING_NOISE } else { 1.0 },
            noise_low: if low_converges { CONVERGING_NOISE } else { 1.0 },
            position_shape_high: if high_converges { CONCENTRATED_LATE } else { UNIFORM },
            position_shape_low: if low_converges { CONCENTRATED_EARLY } else { UNIFORM },
            planted: (1, 4),
            template_runs: 8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_docs < 20 {
            problems.push(format!("n_docs must be at least 20, got {}", self.n_docs));
        }
        if self.seg_range.0 < 1 || self.seg_range.0 > self.seg_range.1 {
            problems.push(format!("seg_range {:?} is infeasible", self.seg_range));
        }
        if self.alphabet < 2 {
            problems.push("alphabet needs at least 2 labels".into());
        }
        for (name, p) in [("noise_high", self.noise_high), ("noise_low", self.noise_low)] {
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        for (name, (a, b)) in [
            ("position_shape_high", self.position_shape_high),
            ("position_shape_low", self.position_shape_low),
        ] {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                problems.push(format!("{name} needs positive parameters, got ({a}, {b})"));
            }
        }
        let (f, t) = self.planted;
        if f == t || f as usize >= self.alphabet || t as usize >= self.alphabet {
            problems.push(format!("planted transition {f} -> {t} is not a pair of distinct labels"));
        }
        if self.template_runs < 2 {
            problems.push("template_runs must be at least 2".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthDoc {
    pub id: String,
    pub eval_score: f64,
    pub decile: usize,
    pub high_side: bool,
    pub labels: Vec<Label>,
    /// Realized position of the planted transition.
    pub planted_position: f64,
}

impl SynthDoc {
    pub fn record(&self) -> SequenceRecord {
        SequenceRecord {
            id: self.id.clone(),
            eval_score: self.eval_score,
            group: None,
            domain: Some("synthetic".into()),
            genre_tags: Vec::new(),
            labels: self.labels.clone(),
        }
    }
}

fn random_label(rng: &mut ChaCha8Rng, alphabet: usize, avoid: Option<Label>) -> Label {
    match avoid {
        Some(a) => {
            let x = rng.random_range(0..alphabet as Label - 1);
            if x >= a { x + 1 } else { x }
        }
        None => rng.random_range(0..alphabet as Label),
    }
}

fn random_compressed(rng: &mut ChaCha8Rng, alphabet: usize, runs: usize, banned: Option<(Label, Label)>) -> Vec<Label> {
    let mut out: Vec<Label> = Vec::with_capacity(runs);
    while out.len() < runs {
        let prev = out.last().copied();
        let x = random_label(rng, alphabet, prev);
        if banned.is_some_and(|(f, t)| prev == Some(f) && x == t) {
            continue;
        }
        // Templates also avoid x-y-x patterns.
        if banned.is_some() && out.len() >= 2 && out[out.len() - 2] == x {
            continue;
        }
        out.push(x);
    }
    out
}

fn contains_pair(seq: &[Label], (f, t): (Label, Label)) -> bool {
    seq.windows(2).any(|w| w[0] == f && w[1] == t)
}

/// Perturbs the template, redrawing perturbations that create the planted pair.
fn perturb_avoiding(
    rng: &mut ChaCha8Rng,
    template: &[Label],
    alphabet: usize,
    noise: f64,
    banned: (Label, Label),
) -> Vec<Label> {
    for _ in 0..50 {
        let out = perturb(rng, template, alphabet, noise);
        if !contains_pair(&out, banned) {
            return out;
        }
    }
    template.to_vec()
}

fn perturb(rng: &mut ChaCha8Rng, template: &[Label], alphabet: usize, noise: f64) -> Vec<Label> {
    let mut out = Vec::with_capacity(template.len() + 2);
    for &x in template {
        if rng.random::<f64>() >= noise {
            out.push(x);
            continue;
        }
        match rng.random_range(0..3) {
            0 => out.push(random_label(rng, alphabet, Some(x))),
            1 => {
                out.push(x);
                out.push(random_label(rng, alphabet, None));
            }
            _ => {}
        }
    }
    let mut out = run_length_encode(&out);
    if out.is_empty() {
        out.push(random_label(rng, alphabet, None));
    }
    out
}

/// Random composition of `total` into `parts` positive run lengths.
fn run_lengths(rng: &mut ChaCha8Rng, total: usize, parts: usize) -> Vec<usize> {
    debug_assert!(parts >= 1 && parts <= total);
    let mut cuts: Vec<usize> = sample(rng, total - 1, parts - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let mut lengths = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(total)) {
        lengths.push(c - prev);
        prev = c;
    }
    lengths
}

fn expand(rng: &mut ChaCha8Rng, runs: &[Label], segments: usize, out: &mut Vec<Label>) {
    for (&label, len) in runs.iter().zip(run_lengths(rng, segments, runs.len())) {
        out.extend(std::iter::repeat_n(label, len));
    }
}

/// Splices `from -> to` into the compressed sequence at relative position
/// `anchor` and expands it so the incoming run starts at segment
/// `round(p * n)`, clamped so every run keeps at least one segment.
fn plant(
    rng: &mut ChaCha8Rng,
    compressed: &[Label],
    n: usize,
    anchor: f64,
    p: f64,
    planted: (Label, Label),
) -> (Vec<Label>, f64) {
    let q = ((anchor * compressed.len() as f64).round() as usize).min(compressed.len());
    let mut prefix = compressed[..q].to_vec();
    prefix.push(planted.0);
    let prefix = run_length_encode(&prefix);
    let mut suffix = vec![planted.1];
    suffix.extend_from_slice(&compressed[q..]);
    let suffix = run_length_encode(&suffix);
    let n = n.max(prefix.len() + suffix.len());
    let j = ((p * n as f64).round() as usize).clamp(prefix.len() + 1, n - suffix.len() + 1);
    let mut labels = Vec::with_capacity(n);
    expand(rng, &prefix, j - 1, &mut labels);
    expand(rng, &suffix, n - j + 1, &mut labels);
    (labels, j as f64 / n as f64)
}

fn templates(spec: &RegimeSpec) -> (Vec<Label>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let banned = Some(spec.planted);
    let high = random_compressed(&mut rng, spec.alphabet, spec.template_runs, banned);
    let mut best = random_compressed(&mut rng, spec.alphabet, spec.template_runs, banned);
    for _ in 0..200 {
        if edit_distance(&best, &high) + 1 >= spec.template_runs {
            break;
        }
        let cand = random_compressed(&mut rng, spec.alphabet, spec.template_runs, banned);
        if edit_distance(&cand, &high) > edit_distance(&best, &high) {
            best = cand;
        }
    }
    (high, best)
}

/// Generates `spec.n_docs` documents with ascending scores; document `i`
/// belongs to decile `floor(10 i / n_docs)`.
pub fn generate(spec: &RegimeSpec) -> Result<Vec<SynthDoc>> {
    spec.validate()?;
    let (template_high, template_low) = templates(spec);
    let beta_high = Beta::new(spec.position_shape_high.0, spec.position_shape_high.1)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let beta_low = Beta::new(spec.position_shape_low.0, spec.position_shape_low.1)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let width = spec.n_docs.to_string().len().max(4);
    let docs = (0..spec.n_docs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64 + 1);
            let decile = i * 10 / spec.n_docs;
            let high_side = match decile {
                7.. => true,
                0..=2 => false,
                d => rng.random::<f64>() < (d - 2) as f64 / 5.0,
            };
            let (template, noise, beta, shape) = if high_side {
                (&template_high, spec.noise_high, &beta_high, spec.position_shape_high)
            } else {
                (&template_low, spec.noise_low, &beta_low, spec.position_shape_low)
            };
            let compressed = if noise >= 1.0 {
                let lo = spec.template_runs.saturating_sub(2).max(1);
                let runs = rng.random_range(lo..=spec.template_runs + 2);
                random_compressed(&mut rng, spec.alphabet, runs, None)
            } else {
                perturb_avoiding(&mut rng, template, spec.alphabet, noise, spec.planted)
            };
            let n = rng.random_range(spec.seg_range.0..=spec.seg_range.1);
            let p: f64 = beta.sample(&mut rng);
            let (labels, planted_position) = plant(&mut rng, &compressed, n, shape.0 / (shape.0 + shape.1), p, spec.planted);
            SynthDoc {
                id: format!("doc{i:0width$}"),
                eval_score: i as f64,
                decile,
                high_side,
                labels,
                planted_position,
            }
        })
        .collect();
    Ok(docs)
}

const STOPWORDS_PER_LABEL: usize = 8;

/// Disjoint per-label vocabularies used to render labels as text.
pub struct Vocabulary {
    stop: Vec<Vec<String>>,
    affect: Vec<Vec<String>>,
}

impl Vocabulary {
    pub fn new(lex: &Lexicons, alphabet: usize) -> Self {
        let mut stop = vec![Vec::new(); alphabet];
        for (i, w) in lex.stopwords().iter().enumerate().take(STOPWORDS_PER_LABEL * alphabet) {
            stop[i % alphabet].push(w.clone());
        }
        let mut affect_words: Vec<String> = lex.affect_words().map(str::to_string).collect();
        affect_words.sort();
        let mut affect = vec![Vec::new(); alphabet];
        for (i, w) in affect_words.into_iter().enumerate() {
            affect[i % alphabet].push(w);
        }
        Vocabulary { stop, affect }
    }

    /// Roughly two dozen tokens drawn from the label's vocabulary.
    pub fn render(&self, rng: &mut ChaCha8Rng, label: Label) -> String {
        let l = label as usize;
        let mut words: Vec<String> = Vec::with_capacity(25);
        let pick = |rng: &mut ChaCha8Rng, pool: &[String]| pool[rng.random_range(0..pool.len())].clone();
        for _ in 0..14 {
            words.push(pick(rng, &self.stop[l]));
        }
        for _ in 0..6 {
            words.push(format!("w{l}x{}", rng.random_range(0..20)));
        }
        if !self.affect[l].is_empty() {
            for _ in 0..2 {
                words.push(pick(rng, &self.affect[l]));
            }
        }
        for i in (1..words.len()).rev() {
            words.swap(i, rng.random_range(0..=i));
        }
        let mut text = words.join(" ");
        text.push('.');
        text
    }
}

/// Token mode: one text segment per label, rendered from the shared seed.
pub fn to_corpus(docs: &[SynthDoc], spec: &RegimeSpec, lex: &Lexicons) -> Result<Corpus> {
    let vocab = Vocabulary::new(lex, spec.alphabet);
    if vocab.stop.iter().any(Vec::is_empty) {
        return Err(Error::invalid("stopword list too short for the synthetic alphabet"));
    }
    let documents = docs
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x746f_6b65_6e73);
            rng.set_stream(i as u64 + 1);
            let segments = d
                .labels
                .iter()
                .enumerate()
                .map(|(s, &l)| Segment::from_text(s, &vocab.render(&mut rng, l)))
                .collect();
            Document {
                id: d.id.clone(),
                domain: "synthetic".into(),
                genre_tags: vec![spec.regime.as_str().to_string()],
                eval_score: d.eval_score,
                segments,
                group: None,
            }
        })
        .collect();
    let meta = CorpusMeta { sources: vec![format!("synth:{}:{}", spec.regime, spec.seed)], ..Default::default() };
    Corpus::new(documents, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(regime: Verdict, seed: u64) -> RegimeSpec {
        RegimeSpec::new(regime, seed)
    }

    #[test]
    fn zero_noise_ordered_gives_two_templates() {
        let mut s = spec(Verdict::Ordered, 4);
        s.noise_high = 0.0;
        s.noise_low = 0.0;
        let docs = generate(&s).unwrap();
        let side = |high: bool| -> Vec<Vec<Label>> {
            docs.iter().filter(|d| d.high_side == high).map(|d| run_length_encode(&d.labels)).collect()
        };
        let (high, low) = (side(true), side(false));
        assert!(high.iter().all(|c| c == &high[0]));
        assert!(low.iter().all(|c| c == &low[0]));
        assert_ne!(high[0], low[0]);
        assert!(docs.iter().all(|d| (d.decile >= 7) <= d.high_side && (d.decile <= 2) <= !d.high_side));
    }

    #[test]
    fn planted_transition_lands_where_recorded() {
        let docs = generate(&spec(Verdict::Akp, 8)).unwrap();
        for d in &docs {
            let n = d.labels.len();
            let j = (d.planted_position * n as f64).round() as usize;
            assert_eq!((d.labels[j - 2], d.labels[j - 1]), (1, 4), "{}", d.id);
        }
    }

    #[test]
    fn beta_mean_of_planted_positions() {
        let mut s = spec(Verdict::Akp, 1);
        s.n_docs = 10_000;
        s.position_shape_high = (5.0, 2.0);
        s.position_shape_low = (5.0, 2.0);
        let docs = generate(&s).unwrap();
        let m = docs.iter().map(|d| d.planted_position).sum::<f64>() / docs.len() as f64;
        assert!((m - 5.0 / 7.0).abs() < 0.02, "{m}");
    }

    #[test]
    fn deterministic() {
        let s = spec(Verdict::Noisy, 12);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let lex = Lexicons::builtin();
        let docs = generate(&s).unwrap();
        assert_eq!(to_corpus(&docs, &s, &lex).unwrap(), to_corpus(&docs, &s, &lex).unwrap());
    }

    #[test]
    fn infeasible_specs_rejected() {
        let mut s = spec(Verdict::Akp, 0);
        s.seg_range = (10, 5);
        assert!(generate(&s).is_err());
        let mut s = spec(Verdict::Akp, 0);
        s.n_docs = 19;
        assert!(generate(&s).is_err());
        let mut s = spec(Verdict::Akp, 0);
        s.noise_low = 1.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn decile_membership_matches_scores() {
        let docs = generate(&spec(Verdict::Ordered, 2)).unwrap();
        for (i, d) in docs.iter().enumerate() {
            assert_eq!(d.eval_score, i as f64);
            assert_eq!(d.decile, i * 10 / docs.len());
            assert!(d.labels.len() >= 30 && d.labels.len() <= 80);
        }
    }

    #[test]
    fn token_mode_renders_one_segment_per_label() {
        let s = spec(Verdict::Akp, 3);
        let docs = generate(&s).unwrap();
        let corpus = to_corpus(&docs[..5], &s, &Lexicons::builtin()).unwrap();
        for (doc, d) in corpus.documents.iter().zip(&docs) {
            assert_eq!(doc.segments.len(), d.labels.len());
            assert!(doc.segments.iter().all(|s| s.tokens.len() >= 20));
        }
    }
}
