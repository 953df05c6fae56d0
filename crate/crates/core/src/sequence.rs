//! Sequence algebra over block-label sequences: run-length compression,
//! transition extraction, Levenshtein distance and PAM k-medoids.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::BlockSequence;
use crate::error::{Error, Result};

pub type Label = u32;

/// Collapses runs of equal consecutive elements to a single element.
pub fn run_length_encode<T: PartialEq + Clone>(labels: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(labels.len());
    for x in labels {
        if out.last() != Some(x) {
            out.push(x.clone());
        }
    }
    out
}

/// `(label, run length)` pairs.
pub fn runs<T: PartialEq + Clone>(labels: &[T]) -> Vec<(T, usize)> {
    let mut out: Vec<(T, usize)> = Vec::new();
    for x in labels {
        match out.last_mut() {
            Some((y, n)) if y == x => *n += 1,
            _ => out.push((x.clone(), 1)),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub from_label: Label,
    pub to_label: Label,
    /// `(1-based first segment of the incoming run) / total segments`, in (0, 1].
    pub position: f64,
    pub doc_id: String,
}

/// One event per run boundary, located at the first segment of the incoming run.
pub fn extract_transitions(seq: &BlockSequence) -> Vec<TransitionEvent> {
    transitions_of(&seq.labels, &seq.doc_id)
}

pub fn transitions_of(labels: &[Label], doc_id: &str) -> Vec<TransitionEvent> {
    let total = labels.len() as f64;
    let mut events = Vec::new();
    for i in 1..labels.len() {
        if labels[i] != labels[i - 1] {
            events.push(TransitionEvent {
                from_label: labels[i - 1],
                to_label: labels[i],
                position: (i + 1) as f64 / total,
                doc_id: doc_id.to_string(),
            });
        }
    }
    events
}

/// Levenshtein distance with unit costs, two-row dynamic program.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the longer length (0 for two empty sequences).
pub fn normalized_edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        0.0
    } else {
        edit_distance(a, b) as f64 / longest as f64
    }
}

/// Dense symmetric distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates shape, symmetry, zero diagonal and nonnegativity.
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::invalid(format!(
                "distance matrix has {} entries, expected {n}x{n}",
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("distance matrix diagonal [{i}] is nonzero")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("distance [{i}][{j}] = {v} is invalid")));
                }
                if v != values[j * n + i] {
                    return Err(Error::invalid(format!("distance matrix asymmetric at [{i}][{j}]")));
                }
            }
        }
        Ok(DistanceMatrix { n, values })
    }

    /// Fills the upper triangle from `f` and mirrors it.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        DistanceMatrix { n, values }
    }

    pub fn edit_distances(seqs: &[Vec<Label>], normalized: bool) -> Self {
        DistanceMatrix::from_fn(seqs.len(), |i, j| {
            if normalized {
                normalized_edit_distance(&seqs[i], &seqs[j])
            } else {
                edit_distance(&seqs[i], &seqs[j]) as f64
            }
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn write_csv(&self, path: &Path, headers: &[String]) -> Result<()> {
        write_square_csv(path, headers, self.n, |i, j| self.get(i, j))
    }
}

pub(crate) fn write_square_csv(
    path: &Path,
    headers: &[String],
    n: usize,
    get: impl Fn(usize, usize) -> f64,
) -> Result<()> {
    assert_eq!(headers.len(), n);
    let err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut head = vec![String::new()];
    head.extend(headers.iter().cloned());
    w.write_record(&head).map_err(err)?;
    for (i, h) in headers.iter().enumerate() {
        let mut rec = vec![h.clone()];
        rec.extend((0..n).map(|j| get(i, j).to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PamResult {
    /// Medoid indices, ascending.
    pub medoids: Vec<usize>,
    /// Index into `medoids` of each point's nearest medoid.
    pub assignment: Vec<usize>,
    pub cost: f64,
}

struct Nearest {
    d1: Vec<f64>,
    d2: Vec<f64>,
    /// Position in the medoid list of the nearest medoid.
    slot: Vec<usize>,
}

fn nearest(dist: &DistanceMatrix, medoids: &[usize]) -> Nearest {
    let n = dist.len();
    let mut out = Nearest {
        d1: vec![f64::INFINITY; n],
        d2: vec![f64::INFINITY; n],
        slot: vec![0; n],
    };
    for j in 0..n {
        for (s, &m) in medoids.iter().enumerate() {
            let d = dist.get(m, j);
            let better = d < out.d1[j] || (d == out.d1[j] && m < medoids[out.slot[j]]);
            if better {
                out.d2[j] = out.d1[j];
                out.d1[j] = d;
                out.slot[j] = s;
            } else if d < out.d2[j] {
                out.d2[j] = d;
            }
        }
    }
    out
}

/// PAM: greedy BUILD, then the best improving single swap until none remains.
/// Ties go to the lowest index throughout, so the result is deterministic.
pub fn pam(dist: &DistanceMatrix, m: usize) -> Result<PamResult> {
    let n = dist.len();
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "k-medoids needs 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }

    let mut medoids: Vec<usize> = Vec::with_capacity(m);
    let first = (0..n)
        .map(|i| (i, (0..n).map(|j| dist.get(i, j)).sum::<f64>()))
        .fold((0, f64::INFINITY), |best, (i, s)| if s < best.1 { (i, s) } else { best })
        .0;
    medoids.push(first);
    let mut d1: Vec<f64> = (0..n).map(|j| dist.get(first, j)).collect();
    while medoids.len() < m {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for i in (0..n).filter(|i| !medoids.contains(i)) {
            let gain: f64 = (0..n).map(|j| (d1[j] - dist.get(i, j)).max(0.0)).sum();
            if gain > best.1 {
                best = (i, gain);
            }
        }
        medoids.push(best.0);
        for (j, dj) in d1.iter_mut().enumerate() {
            *dj = dj.min(dist.get(best.0, j));
        }
    }

    loop {
        let near = nearest(dist, &medoids);
        let cost: f64 = near.d1.iter().sum();
        let tol = 1e-12 * cost.abs().max(1.0);
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..m {
            for h in (0..n).filter(|h| !medoids.contains(h)) {
                let mut delta = 0.0;
                for j in 0..n {
                    let dh = dist.get(h, j);
                    let replacement = if near.slot[j] == slot {
                        dh.min(near.d2[j])
                    } else {
                        dh.min(near.d1[j])
                    };
                    delta += replacement - near.d1[j];
                }
                if delta < -tol && best.is_none_or(|b| delta < b.2) {
                    best = Some((slot, h, delta));
                }
            }
        }
        match best {
            Some((slot, h, _)) => medoids[slot] = h,
            None => break,
        }
    }

    medoids.sort_unstable();
    let near = nearest(dist, &medoids);
    Ok(PamResult {
        cost: near.d1.iter().sum(),
        assignment: near.slot,
        medoids,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedoidSet {
    pub group: usize,
    pub medoids: Vec<Vec<Label>>,
    /// Positions of the medoids within the group's sequence list.
    pub medoid_indices: Vec<usize>,
    pub assignment_cost: f64,
}

/// PAM over `sequences` with the given pairwise distances.
pub fn k_medoids(sequences: &[Vec<Label>], m: usize, dist: &DistanceMatrix) -> Result<MedoidSet> {
    if dist.len() != sequences.len() {
        return Err(Error::invalid(format!(
            "distance matrix is {}x{} but there are {} sequences",
            dist.len(),
            dist.len(),
            sequences.len()
        )));
    }
    let r = pam(dist, m)?;
    Ok(MedoidSet {
        group: 0,
        medoids: r.medoids.iter().map(|&i| sequences[i].clone()).collect(),
        medoid_indices: r.medoids,
        assignment_cost: r.cost,
    })
}

/// One line of `sequences.jsonl`: a document's per-segment block labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub eval_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub genre_tags: Vec<String>,
    pub labels: Vec<Label>,
}

impl SequenceRecord {
    pub fn block_sequence(&self) -> BlockSequence {
        BlockSequence::new(self.id.clone(), self.labels.clone())
    }
}

pub fn read_sequences(path: &Path) -> Result<Vec<SequenceRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SequenceRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            file: path.display().to_string(),
            line: i + 1,
            field: "<record>".into(),
            message: e.to_string(),
        })?;
        if !rec.eval_score.is_finite() {
            return Err(Error::Record {
                file: path.display().to_string(),
                line: i + 1,
                field: "eval_score".into(),
                message: format!("record `{}` has a non-finite score", rec.id),
            });
        }
        out.push(rec);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = out.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::DuplicateId(w[0].id.clone()));
    }
    Ok(out)
}

pub fn write_sequences(path: &Path, records: &[SequenceRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Internal(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn rle_examples() {
        assert_eq!(run_length_encode(&sym("AAABBAACCC")), sym("ABAC"));
        assert_eq!(run_length_encode(&sym("AAAA")), sym("A"));
        assert!(run_length_encode::<u32>(&[]).is_empty());
        assert_eq!(runs(&sym("AAABB")), vec![('A', 3), ('B', 2)]);
    }

    #[test]
    fn transitions_of_aaabbaaccc() {
        // A=0, B=1, C=2
        let labels = [0, 0, 0, 1, 1, 0, 0, 2, 2, 2];
        let ev = transitions_of(&labels, "doc");
        let pairs: Vec<(Label, Label)> = ev.iter().map(|e| (e.from_label, e.to_label)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0), (0, 2)]);
        let pos: Vec<f64> = ev.iter().map(|e| e.position).collect();
        assert_eq!(pos, vec![0.4, 0.6, 0.8]);
        assert!(transitions_of(&[3, 3, 3, 3], "d").is_empty());
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(edit_distance(&[1, 4, 2], &[1, 4, 2]), 0);
        assert_eq!(edit_distance(&sym("AB"), &sym("BA")), 2);
        assert_eq!(edit_distance(&sym("ABC"), &sym("AC")), 1);
        assert_eq!(edit_distance(&sym("kitten"), &sym("sitting")), 3);
        assert_eq!(edit_distance::<u8>(&[], &[1, 2]), 2);
        assert_eq!(normalized_edit_distance(&sym("ABC"), &sym("AC")), 1.0 / 3.0);
    }

    #[test]
    fn medoid_of_s_s_t() {
        // d(s, t) = 3: medoid s costs 3, medoid t costs 6.
        let seqs = vec![vec![0, 1, 2], vec![0, 1, 2], vec![2, 1, 0, 3]];
        let dist = DistanceMatrix::edit_distances(&seqs, false);
        assert_eq!(dist.get(0, 2), 3.0);
        let ms = k_medoids(&seqs, 1, &dist).unwrap();
        assert_eq!(ms.medoids, vec![vec![0, 1, 2]]);
        assert_eq!(ms.assignment_cost, 3.0);
    }

    #[test]
    fn every_point_a_medoid() {
        let seqs: Vec<Vec<Label>> = vec![vec![0], vec![1, 2], vec![3, 1, 4], vec![2]];
        let dist = DistanceMatrix::edit_distances(&seqs, false);
        let ms = k_medoids(&seqs, 4, &dist).unwrap();
        assert_eq!(ms.assignment_cost, 0.0);
        assert_eq!(ms.medoid_indices, vec![0, 1, 2, 3]);
        let single = k_medoids(&seqs[..1], 1, &DistanceMatrix::edit_distances(&seqs[..1], false)).unwrap();
        assert_eq!((single.medoids.clone(), single.assignment_cost), (vec![vec![0]], 0.0));
    }

    #[test]
    fn bad_matrices_rejected() {
        assert!(DistanceMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![0.0; 3]).is_err());
        let d = DistanceMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(pam(&d, 0).is_err());
        assert!(pam(&d, 3).is_err());
        assert!(k_medoids(&[vec![1]], 1, &d).is_err());
    }

    #[test]
    fn sequences_file_round_trip() {
        let recs = vec![
            SequenceRecord {
                id: "a".into(),
                eval_score: 1.5,
                group: Some(2),
                domain: None,
                genre_tags: vec![],
                labels: vec![0, 0, 1],
            },
            SequenceRecord {
                id: "b".into(),
                eval_score: -3.0,
                group: None,
                domain: Some("film".into()),
                genre_tags: vec!["mystery".into()],
                labels: vec![4],
            },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_sequences(f.path(), &recs).unwrap();
        assert_eq!(read_sequences(f.path()).unwrap(), recs);
    }
}
