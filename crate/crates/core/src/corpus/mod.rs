//! Document/corpus data model, ingestion, outlier filtering and evaluation binning.

mod conllu;
mod jsonl;
mod tags;
mod tokenize;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile_sorted;

pub use jsonl::{read_jsonl, write_jsonl};
pub use tags::{Deprel, Upos, DEPREL_LABELS, UPOS_TAGS};
pub use tokenize::{tokenize, tokenize_surfaces};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub upos: Option<Upos>,
    pub deprel: Option<Deprel>,
    /// Set by [`Corpus::mark_stopwords`] against the active lexicon.
    #[serde(default)]
    pub is_stopword: bool,
}

impl Token {
    pub fn plain(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            upos: None,
            deprel: None,
            is_stopword: false,
        }
    }

    pub fn is_annotated(&self) -> bool {
        self.upos.is_some() || self.deprel.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub tokens: Vec<Token>,
    pub raw_text: Option<String>,
    pub time_start: Option<f64>,
    pub time_end: Option<f64>,
}

impl Segment {
    pub fn from_text(index: usize, text: &str) -> Self {
        Segment {
            index,
            tokens: tokenize(text),
            raw_text: Some(text.to_string()),
            time_start: None,
            time_end: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub domain: String,
    pub genre_tags: Vec<String>,
    pub eval_score: f64,
    pub segments: Vec<Segment>,
    /// Evaluation group, assigned by [`rank_bin`].
    pub group: Option<usize>,
}

impl Document {
    /// Drops token-less segments and renumbers the rest from 0. Returns the
    /// number of segments dropped.
    pub fn drop_empty_segments(&mut self) -> usize {
        let before = self.segments.len();
        self.segments.retain(|s| !s.tokens.is_empty());
        for (i, s) in self.segments.iter_mut().enumerate() {
            s.index = i;
        }
        before - self.segments.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    Jsonl,
    ConlluDir,
    SubtitleJsonl,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "conllu_dir" => Ok(CorpusFormat::ConlluDir),
            "subtitle_jsonl" => Ok(CorpusFormat::SubtitleJsonl),
            other => Err(Error::invalid(format!("unknown corpus format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IqrReport {
    pub multiplier: f64,
    pub q1: f64,
    pub q3: f64,
    pub lower: f64,
    pub upper: f64,
    pub dropped: Vec<String>,
    pub empty_result: bool,
}

/// Ingestion provenance and the bookkeeping of every filter applied since.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub sources: Vec<String>,
    pub format: Option<CorpusFormat>,
    pub lexicons: Vec<String>,
    pub dropped_empty_segments: usize,
    pub dropped_empty_documents: Vec<String>,
    pub iqr: Option<IqrReport>,
    pub n_bins: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub meta: CorpusMeta,
}

impl Corpus {
    /// Builds a corpus, sorting documents by id and rejecting duplicates.
    pub fn new(mut documents: Vec<Document>, meta: CorpusMeta) -> Result<Self> {
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = documents.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::DuplicateId(w[0].id.clone()));
        }
        Ok(Corpus { documents, meta })
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.documents[i])
    }

    pub fn segment_counts(&self) -> Vec<usize> {
        self.documents.iter().map(|d| d.segments.len()).collect()
    }

    pub fn n_segments(&self) -> usize {
        self.documents.iter().map(|d| d.segments.len()).sum()
    }

    /// Resolves `is_stopword` on every token.
    pub fn mark_stopwords(&mut self, is_stopword: impl Fn(&str) -> bool) {
        for t in self
            .documents
            .iter_mut()
            .flat_map(|d| d.segments.iter_mut())
            .flat_map(|s| s.tokens.iter_mut())
        {
            t.is_stopword = is_stopword(&t.surface);
        }
    }

    /// Keeps documents matching a `key=value` slice (`genre=` or `domain=`).
    pub fn slice(&self, key: &str, value: &str) -> Result<Corpus> {
        let keep: Box<dyn Fn(&Document) -> bool> = match key {
            "genre" => Box::new(|d| d.genre_tags.iter().any(|g| g == value)),
            "domain" => Box::new(|d| d.domain == value),
            other => return Err(Error::invalid(format!("unknown slice key `{other}`"))),
        };
        Ok(Corpus {
            documents: self.documents.iter().filter(|d| keep(d)).cloned().collect(),
            meta: self.meta.clone(),
        })
    }

    /// Drops empty segments everywhere, then documents left with none.
    pub(crate) fn prune_empty(&mut self) {
        let mut dropped_docs = Vec::new();
        for d in &mut self.documents {
            let n = d.drop_empty_segments();
            if n > 0 {
                log::warn!("document {}: dropped {n} empty segment(s)", d.id);
            }
            self.meta.dropped_empty_segments += n;
        }
        self.documents.retain(|d| {
            if d.segments.is_empty() {
                log::warn!("document {} has no non-empty segments; dropped", d.id);
                dropped_docs.push(d.id.clone());
                false
            } else {
                true
            }
        });
        self.meta.dropped_empty_documents.extend(dropped_docs);
    }
}

/// Reads a corpus in one of the supported on-disk formats.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    let documents = match format {
        CorpusFormat::Jsonl => jsonl::load(path, false)?,
        CorpusFormat::SubtitleJsonl => jsonl::load(path, true)?,
        CorpusFormat::ConlluDir => conllu::load_dir(path)?,
    };
    let meta = CorpusMeta {
        sources: vec![path.display().to_string()],
        format: Some(format),
        ..CorpusMeta::default()
    };
    let mut corpus = Corpus::new(documents, meta)?;
    corpus.prune_empty();
    Ok(corpus)
}

/// Tukey fences on per-document segment counts.
///
/// Quantiles use linear interpolation between order statistics. A corpus
/// whose metadata shows it already passed through the filter with the same
/// multiplier is returned unchanged, so the filter is idempotent.
pub fn iqr_filter(corpus: &Corpus, multiplier: f64) -> Result<Corpus> {
    if corpus.documents.is_empty() {
        return Err(Error::invalid("iqr_filter on an empty corpus"));
    }
    if !(multiplier >= 0.0) {
        return Err(Error::invalid(format!(
            "IQR multiplier must be nonnegative, got {multiplier}"
        )));
    }
    if corpus
        .meta
        .iqr
        .as_ref()
        .is_some_and(|r| r.multiplier == multiplier)
    {
        return Ok(corpus.clone());
    }
    let counts: Vec<f64> = corpus.segment_counts().iter().map(|&n| n as f64).collect();
    let sorted = crate::stats::sorted_copy(&counts);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lower = q1 - multiplier * iqr;
    let upper = q3 + multiplier * iqr;

    let (kept, dropped): (Vec<&Document>, Vec<&Document>) =
        corpus.documents.iter().partition(|d| {
            let n = d.segments.len() as f64;
            lower <= n && n <= upper
        });
    let mut meta = corpus.meta.clone();
    meta.iqr = Some(IqrReport {
        multiplier,
        q1,
        q3,
        lower,
        upper,
        dropped: dropped.iter().map(|d| d.id.clone()).collect(),
        empty_result: kept.is_empty(),
    });
    Ok(Corpus {
        documents: kept.into_iter().cloned().collect(),
        meta,
    })
}

/// Assigns equal-frequency evaluation groups `0..n_bins` by score rank.
///
/// Documents are ranked by `(eval_score, id)`; rank `r` of `N` lands in
/// group `floor(r * n_bins / N)`.
pub fn rank_bin(corpus: &Corpus, n_bins: usize) -> Result<Corpus> {
    let groups = rank_groups(
        corpus
            .documents
            .iter()
            .map(|d| (d.eval_score, d.id.as_str())),
        n_bins,
    )?;
    let mut out = corpus.clone();
    for (d, g) in out.documents.iter_mut().zip(groups) {
        d.group = Some(g);
    }
    out.meta.n_bins = Some(n_bins);
    Ok(out)
}

/// Rank-binning on bare `(score, id)` pairs; returns groups in input order.
pub fn rank_groups<'a>(
    items: impl IntoIterator<Item = (f64, &'a str)>,
    n_bins: usize,
) -> Result<Vec<usize>> {
    let items: Vec<(f64, &str)> = items.into_iter().collect();
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be at least 1"));
    }
    if items.len() < n_bins {
        return Err(Error::invalid(format!(
            "rank_bin needs at least {n_bins} documents, got {}",
            items.len()
        )));
    }
    if let Some((s, id)) = items.iter().find(|(s, _)| !s.is_finite()) {
        return Err(Error::invalid(format!(
            "document {id} has non-finite eval_score {s}"
        )));
    }
    let ids: HashSet<&str> = items.iter().map(|(_, id)| *id).collect();
    if ids.len() != items.len() {
        return Err(Error::invalid("rank_bin requires unique document ids"));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[a]
            .0
            .total_cmp(&items[b].0)
            .then_with(|| items[a].1.cmp(items[b].1))
    });
    let n = items.len();
    let mut groups = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        groups[i] = rank * n_bins / n;
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, score: f64, n_segments: usize) -> Document {
        Document {
            id: id.to_string(),
            domain: "test".into(),
            genre_tags: vec![],
            eval_score: score,
            segments: (0..n_segments)
                .map(|i| Segment::from_text(i, "a b"))
                .collect(),
            group: None,
        }
    }

    fn corpus_with_counts(counts: &[usize]) -> Corpus {
        let docs = counts
            .iter()
            .enumerate()
            .map(|(i, &n)| doc(&format!("d{i:02}"), i as f64, n))
            .collect();
        Corpus::new(docs, CorpusMeta::default()).unwrap()
    }

    #[test]
    fn iqr_keeps_constant_counts() {
        let c = corpus_with_counts(&[10, 10, 10, 10, 10]);
        let f = iqr_filter(&c, 1.5).unwrap();
        assert_eq!(f.documents.len(), 5);
        assert!(f.meta.iqr.unwrap().dropped.is_empty());
    }

    #[test]
    fn iqr_drops_the_far_outlier() {
        // Q1 = 9.25, Q3 = 11.75, IQR = 2.5 -> fences [5.5, 15.5].
        let c = corpus_with_counts(&[8, 9, 10, 11, 12, 500]);
        let f = iqr_filter(&c, 1.5).unwrap();
        let r = f.meta.iqr.clone().unwrap();
        assert_eq!((r.q1, r.q3, r.lower, r.upper), (9.25, 11.75, 5.5, 15.5));
        assert_eq!(r.dropped, vec!["d05".to_string()]);
        assert_eq!(f.documents.len(), 5);
    }

    #[test]
    fn huge_multiplier_drops_nothing() {
        let c = corpus_with_counts(&[1, 9, 10, 11, 12, 500]);
        assert_eq!(iqr_filter(&c, 1e9).unwrap().documents.len(), 6);
    }

    #[test]
    fn iqr_filter_is_idempotent() {
        let c = corpus_with_counts(&[1, 2, 3, 4, 5, 6, 7, 8, 30, 31]);
        let once = iqr_filter(&c, 0.5).unwrap();
        let twice = iqr_filter(&once, 0.5).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn rank_bin_equal_split() {
        let docs = (0..100).map(|i| doc(&format!("d{i:03}"), (i * 7 % 100) as f64, 1)).collect();
        let c = rank_bin(&Corpus::new(docs, CorpusMeta::default()).unwrap(), 10).unwrap();
        let mut sizes = [0usize; 10];
        for d in &c.documents {
            sizes[d.group.unwrap()] += 1;
        }
        assert_eq!(sizes, [10; 10]);
        let top = c
            .documents
            .iter()
            .max_by(|a, b| a.eval_score.total_cmp(&b.eval_score))
            .unwrap();
        assert_eq!(top.group, Some(9));
    }

    #[test]
    fn rank_bin_23_docs() {
        // Enumerated floor(r * 10 / 23) for r = 0..22.
        let expected_sizes = [3, 2, 2, 3, 2, 2, 3, 2, 2, 2];
        let mut oracle = [0usize; 10];
        for r in 0..23 {
            oracle[r * 10 / 23] += 1;
        }
        assert_eq!(oracle, expected_sizes);

        let docs = (0..23).map(|i| doc(&format!("d{i:02}"), -(i as f64), 1)).collect();
        let c = rank_bin(&Corpus::new(docs, CorpusMeta::default()).unwrap(), 10).unwrap();
        let mut sizes = [0usize; 10];
        for d in &c.documents {
            sizes[d.group.unwrap()] += 1;
        }
        assert_eq!(sizes, expected_sizes);
        for a in &c.documents {
            for b in &c.documents {
                if a.eval_score < b.eval_score {
                    assert!(a.group <= b.group);
                }
            }
        }
    }

    #[test]
    fn rank_bin_ties_break_by_id() {
        let docs = (0..15).map(|i| doc(&format!("d{i:02}"), 1.0, 1)).collect();
        let c = rank_bin(&Corpus::new(docs, CorpusMeta::default()).unwrap(), 10).unwrap();
        let groups: Vec<usize> = c.documents.iter().map(|d| d.group.unwrap()).collect();
        let expected: Vec<usize> = (0..15).map(|r| r * 10 / 15).collect();
        assert_eq!(groups, expected);
    }

    #[test]
    fn rank_bin_needs_enough_documents() {
        let c = corpus_with_counts(&[1, 2, 3]);
        assert!(matches!(rank_bin(&c, 10), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::new(vec![doc("x", 1.0, 1), doc("x", 2.0, 1)], CorpusMeta::default());
        assert!(matches!(err, Err(Error::DuplicateId(id)) if id == "x"));
    }

    #[test]
    fn slicing_by_genre_and_domain() {
        let mut a = doc("a", 1.0, 1);
        a.genre_tags = vec!["mystery".into(), "drama".into()];
        let mut b = doc("b", 1.0, 1);
        b.domain = "film".into();
        let c = Corpus::new(vec![a, b], CorpusMeta::default()).unwrap();
        assert_eq!(c.slice("genre", "mystery").unwrap().documents.len(), 1);
        assert_eq!(c.slice("domain", "film").unwrap().documents[0].id, "b");
        assert!(c.slice("colour", "red").is_err());
    }
}
