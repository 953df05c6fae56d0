//! Per-segment surface profiles and the standardized corpus feature matrix.
//!
//! Four families describe a segment: part-of-speech distribution, dependency
//! label distribution, distribution over the stopword lexicon (plus the
//! overall stopword share), and lexicon-based affect. Every distribution is
//! normalized within its segment so segment length does not leak into the
//! vector.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Deprel, Segment, Upos, DEPREL_LABELS, UPOS_TAGS};
use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
const DEFAULT_AFFECT: &str = include_str!("../data/affect_en.tsv");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affect {
    /// In [-1, 1].
    pub polarity: f64,
    /// In [0, 1].
    pub intensity: f64,
}

/// Stopword list and affect lexicon. Lookups are case-insensitive.
#[derive(Clone, Debug)]
pub struct Lexicons {
    stopwords: Vec<String>,
    stop_index: HashMap<String, usize>,
    affect: HashMap<String, Affect>,
    ids: Vec<String>,
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl Lexicons {
    pub fn new(stopwords: Vec<String>, affect: HashMap<String, Affect>) -> Result<Self> {
        let stopwords: Vec<String> = stopwords.into_iter().map(|w| w.to_lowercase()).collect();
        if stopwords.is_empty() {
            return Err(Error::invalid("stopword list is empty"));
        }
        let mut stop_index = HashMap::with_capacity(stopwords.len());
        for (i, w) in stopwords.iter().enumerate() {
            if stop_index.insert(w.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate stopword `{w}`")));
            }
        }
        let mut lowered = HashMap::with_capacity(affect.len());
        for (w, a) in affect {
            if !(-1.0..=1.0).contains(&a.polarity) || !(0.0..=1.0).contains(&a.intensity) {
                return Err(Error::invalid(format!(
                    "affect entry `{w}` out of range: polarity {} intensity {}",
                    a.polarity, a.intensity
                )));
            }
            lowered.insert(w.to_lowercase(), a);
        }
        Ok(Lexicons {
            stopwords,
            stop_index,
            affect: lowered,
            ids: Vec::new(),
        })
    }

    /// Parses a one-word-per-line stopword list and a `surface<TAB>polarity<TAB>intensity` TSV.
    pub fn parse(stopwords: &str, affect_tsv: &str) -> Result<Self> {
        let words = stopwords
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        let mut affect = HashMap::new();
        for (i, line) in affect_tsv.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let parsed = match cols.as_slice() {
                [w, p, s] => p.trim().parse().ok().zip(s.trim().parse().ok()).map(|(p, s)| (w, p, s)),
                _ => None,
            };
            let (w, polarity, intensity) = parsed.ok_or_else(|| Error::Record {
                file: "affect lexicon".into(),
                line: i + 1,
                field: "row".into(),
                message: "expected surface<TAB>polarity<TAB>intensity".into(),
            })?;
            affect.insert(w.to_string(), Affect { polarity, intensity });
        }
        let mut lex = Lexicons::new(words, affect)?;
        lex.ids = vec![
            format!("stopwords:sha256:{}", digest(stopwords)),
            format!("affect:sha256:{}", digest(affect_tsv)),
        ];
        Ok(lex)
    }

    pub fn builtin() -> Self {
        Lexicons::parse(DEFAULT_STOPWORDS, DEFAULT_AFFECT).expect("bundled lexicons are valid")
    }

    /// Loads lexicons from files, falling back to the bundled ones per part.
    pub fn load(stopwords: Option<&Path>, affect: Option<&Path>) -> Result<Self> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        let stop_text = stopwords.map(read).transpose()?;
        let affect_text = affect.map(read).transpose()?;
        Lexicons::parse(
            stop_text.as_deref().unwrap_or(DEFAULT_STOPWORDS),
            affect_text.as_deref().unwrap_or(DEFAULT_AFFECT),
        )
    }

    pub fn stopwords(&self) -> &[String] {
        &self.stopwords
    }

    /// Content digests identifying the active lexicons.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn stopword_index(&self, surface: &str) -> Option<usize> {
        match self.stop_index.get(surface) {
            Some(&i) => Some(i),
            None if surface.chars().any(char::is_uppercase) => {
                self.stop_index.get(&surface.to_lowercase()).copied()
            }
            None => None,
        }
    }

    pub fn is_stopword(&self, surface: &str) -> bool {
        self.stopword_index(surface).is_some()
    }

    pub fn affect(&self, surface: &str) -> Option<Affect> {
        match self.affect.get(surface) {
            Some(&a) => Some(a),
            None if surface.chars().any(char::is_uppercase) => {
                self.affect.get(&surface.to_lowercase()).copied()
            }
            None => None,
        }
    }

    /// Affect lexicon entries, in no particular order.
    pub fn affect_words(&self) -> impl Iterator<Item = &str> {
        self.affect.keys().map(String::as_str)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Families {
    pub pos: bool,
    pub deprel: bool,
    pub stop: bool,
    pub affect: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub pos: Vec<f64>,
    pub deprel: Vec<f64>,
    pub stop: Vec<f64>,
    /// Stopword tokens over all tokens.
    pub stop_share: f64,
    /// `(polarity mapped to [0, 1], intensity)`; neutral `(0.5, 0.0)` when absent.
    pub affect: [f64; 2],
    pub present: Families,
}

pub const NEUTRAL_AFFECT: [f64; 2] = [0.5, 0.0];

fn normalize(counts: &mut [f64]) -> bool {
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        counts.iter_mut().for_each(|c| *c /= total);
        true
    } else {
        false
    }
}

pub fn extract_features(segment: &Segment, lex: &Lexicons) -> FeatureVector {
    let mut pos = vec![0.0; Upos::COUNT];
    let mut deprel = vec![0.0; Deprel::COUNT];
    let mut stop = vec![0.0; lex.stopwords.len()];
    let (mut n_stop, mut n_affect) = (0usize, 0usize);
    let (mut pol, mut inten) = (0.0, 0.0);
    for t in &segment.tokens {
        if let Some(u) = t.upos {
            pos[u.index()] += 1.0;
        }
        if let Some(d) = t.deprel {
            deprel[d.index()] += 1.0;
        }
        if let Some(i) = lex.stopword_index(&t.surface) {
            stop[i] += 1.0;
            n_stop += 1;
        }
        if let Some(a) = lex.affect(&t.surface) {
            pol += (a.polarity + 1.0) / 2.0;
            inten += a.intensity;
            n_affect += 1;
        }
    }
    let present = Families {
        pos: normalize(&mut pos),
        deprel: normalize(&mut deprel),
        stop: normalize(&mut stop),
        affect: n_affect > 0,
    };
    let affect = if n_affect > 0 {
        [pol / n_affect as f64, inten / n_affect as f64]
    } else {
        NEUTRAL_AFFECT
    };
    let n_tokens = segment.tokens.len();
    FeatureVector {
        pos,
        deprel,
        stop,
        stop_share: if n_tokens > 0 {
            n_stop as f64 / n_tokens as f64
        } else {
            0.0
        },
        affect,
        present,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyWeights {
    pub pos: f64,
    pub deprel: f64,
    pub stop: f64,
    pub affect: f64,
}

impl Default for FamilyWeights {
    fn default() -> Self {
        FamilyWeights {
            pos: 1.0,
            deprel: 1.0,
            stop: 1.0,
            affect: 1.0,
        }
    }
}

/// Standardized segment-by-dimension matrix, rows in `(document id, segment)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    /// `(document id, segment index)` for each row.
    pub row_index: Vec<(String, usize)>,
    /// Row-major standardized values.
    pub values: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_index.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    /// CSV with a `doc_id,segment,<dimension names>` header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut header = vec!["doc_id".to_string(), "segment".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        let mut rec = Vec::with_capacity(header.len());
        let mut buf = ryu_like::Buffer::new();
        for (i, (id, seg)) in self.row_index.iter().enumerate() {
            rec.clear();
            rec.push(id.clone());
            rec.push(seg.to_string());
            rec.extend(self.row(i).iter().map(|v| buf.format(*v).to_string()));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, scaling: &Scaling) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
        if header.len() < 2 || &header[0] != "doc_id" || &header[1] != "segment" {
            return Err(Error::invalid(format!(
                "{}: header must start with doc_id,segment",
                path.display()
            )));
        }
        let columns: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        if columns != scaling.columns {
            return Err(Error::invalid(format!(
                "{}: columns do not match the scaling file",
                path.display()
            )));
        }
        let mut row_index = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let bad = |field: &str| Error::Record {
                file: path.display().to_string(),
                line: line + 2,
                field: field.to_string(),
                message: "unparseable value".into(),
            };
            let seg: usize = rec[1].parse().map_err(|_| bad("segment"))?;
            row_index.push((rec[0].to_string(), seg));
            for (j, v) in rec.iter().skip(2).enumerate() {
                values.push(v.parse::<f64>().map_err(|_| bad(&columns[j]))?);
            }
        }
        Ok(FeatureMatrix {
            columns,
            row_index,
            values,
            mean: scaling.mean.clone(),
            std: scaling.std.clone(),
        })
    }

    pub fn scaling(&self) -> Scaling {
        Scaling {
            columns: self.columns.clone(),
            mean: self.mean.clone(),
            std: self.std.clone(),
        }
    }
}

/// Per-dimension standardization parameters, persisted next to the matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::invalid(format!("{}: {e}", path.display()))
}

/// Shortest round-trip float formatting through `Display`.
mod ryu_like {
    pub struct Buffer(String);

    impl Buffer {
        pub fn new() -> Self {
            Buffer(String::with_capacity(32))
        }

        pub fn format(&mut self, v: f64) -> &str {
            use std::fmt::Write;
            self.0.clear();
            write!(self.0, "{v}").unwrap();
            &self.0
        }
    }
}

/// Annotation families a document can supply: (has UPOS, has DEPREL).
fn annotation_mask(doc: &crate::corpus::Document) -> (bool, bool) {
    let tokens = || doc.segments.iter().flat_map(|s| s.tokens.iter());
    (
        tokens().any(|t| t.upos.is_some()),
        tokens().any(|t| t.deprel.is_some()),
    )
}

/// Builds the standardized feature matrix over every segment of the corpus.
///
/// Family blocks are scaled by `weights` and then z-scored per dimension with
/// the population standard deviation; constant dimensions become 0. The POS
/// and dependency blocks are included only when the corpus carries those
/// annotations, and all documents must agree on which they carry.
pub fn assemble_matrix(corpus: &Corpus, lex: &Lexicons, weights: FamilyWeights) -> Result<FeatureMatrix> {
    let masks: Vec<(bool, bool)> = corpus.documents.iter().map(annotation_mask).collect();
    let mut tally: Vec<((bool, bool), usize)> = Vec::new();
    for m in &masks {
        match tally.iter_mut().find(|(k, _)| k == m) {
            Some((_, n)) => *n += 1,
            None => tally.push((*m, 1)),
        }
    }
    let (majority, _) = tally
        .iter()
        .copied()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .unwrap_or(((false, false), 0));
    if tally.len() > 1 {
        let offending = corpus
            .documents
            .iter()
            .zip(&masks)
            .filter(|(_, m)| **m != majority)
            .map(|(d, _)| d.id.clone())
            .collect();
        return Err(Error::InconsistentFamilies(offending));
    }
    let (use_pos, use_deprel) = majority;

    let mut columns = Vec::new();
    if use_pos {
        columns.extend(UPOS_TAGS.iter().map(|t| format!("pos:{t}")));
    }
    if use_deprel {
        columns.extend(DEPREL_LABELS.iter().map(|t| format!("deprel:{t}")));
    }
    columns.extend(lex.stopwords().iter().map(|w| format!("stop:{w}")));
    columns.push("stop_share".into());
    columns.push("affect:polarity".into());
    columns.push("affect:intensity".into());
    let d = columns.len();

    let n = corpus.n_segments();
    let mut values = Vec::with_capacity(n * d);
    let mut row_index = Vec::with_capacity(n);
    for doc in &corpus.documents {
        for seg in &doc.segments {
            let fv = extract_features(seg, lex);
            if use_pos {
                values.extend(fv.pos.iter().map(|x| x * weights.pos));
            }
            if use_deprel {
                values.extend(fv.deprel.iter().map(|x| x * weights.deprel));
            }
            values.extend(fv.stop.iter().map(|x| x * weights.stop));
            values.push(fv.stop_share * weights.stop);
            values.extend(fv.affect.iter().map(|x| x * weights.affect));
            row_index.push((doc.id.clone(), seg.index));
        }
    }
    let (mean, std) = standardize(&mut values, d);
    Ok(FeatureMatrix {
        columns,
        row_index,
        values,
        mean,
        std,
    })
}

/// In-place column z-scoring of a row-major matrix. Returns `(mean, std)`;
/// columns whose spread is negligible get std 0 and are zeroed.
fn standardize(values: &mut [f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    if d == 0 || values.is_empty() {
        return (vec![0.0; d], vec![0.0; d]);
    }
    let n = values.len() / d;
    let mut mean = vec![0.0; d];
    for row in values.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in values.chunks_exact(d) {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std: Vec<f64> = var
        .iter()
        .zip(&mean)
        .map(|(v, m)| {
            let s = (v / n as f64).sqrt();
            if s > 1e-12 * m.abs().max(1.0) {
                s
            } else {
                0.0
            }
        })
        .collect();
    for row in values.chunks_exact_mut(d) {
        for ((x, m), s) in row.iter_mut().zip(&mean).zip(&std) {
            *x = if *s > 0.0 { (*x - m) / s } else { 0.0 };
        }
    }
    (mean, std)
}

/// Writes the matrix CSV and its scaling JSON side by side.
pub fn write_matrix(matrix: &FeatureMatrix, csv_path: &Path, scaling_path: &Path) -> Result<()> {
    matrix.write_csv(csv_path)?;
    let mut f = fs::File::create(scaling_path).map_err(|e| Error::io(scaling_path, e))?;
    serde_json::to_writer_pretty(&mut f, &matrix.scaling()).map_err(|e| Error::Internal(e.to_string()))?;
    f.write_all(b"\n").map_err(|e| Error::io(scaling_path, e))
}
