//! k-means over segment feature vectors and conversion of documents into
//! block-label sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::sequence::{run_length_encode, Label};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    pub k: usize,
    pub inertia: f64,
    pub seed: u64,
    pub n_iter: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
}

impl KMeansModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Nearest centroid by squared Euclidean distance; ties go to the lower index.
    pub fn predict(&self, row: &[f64]) -> Label {
        nearest_centroid(row, &self.centroids).0 as Label
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub n_init: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions { n_init: 10, max_iter: 300, tol: 1e-6 }
    }
}

/// Per-restart inertia after every assignment step, including the final one.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub inertia: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSequence {
    pub doc_id: String,
    pub labels: Vec<Label>,
    pub compressed: Vec<Label>,
}

impl BlockSequence {
    pub fn new(doc_id: impl Into<String>, labels: Vec<Label>) -> Self {
        let compressed = run_length_encode(&labels);
        BlockSequence { doc_id: doc_id.into(), labels, compressed }
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            lanes[l] += d * d;
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

fn nearest_centroid(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn kmeans_fit(matrix: &FeatureMatrix, k: usize, seed: u64, opts: KMeansOptions) -> Result<KMeansModel> {
    let (mut model, _) = kmeans_fit_traced(&matrix.values, matrix.n_cols(), k, seed, opts)?;
    model.columns = matrix.columns.clone();
    Ok(model)
}

/// k-means on a flat row-major buffer, returning the best model and the
/// inertia trace of every restart.
pub fn kmeans_fit_traced(
    data: &[f64],
    dim: usize,
    k: usize,
    seed: u64,
    opts: KMeansOptions,
) -> Result<(KMeansModel, Vec<RunTrace>)> {
    if k < 2 {
        return Err(Error::invalid(format!("k-means needs k >= 2, got {k}")));
    }
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::invalid("feature matrix has no columns"));
    }
    let n = data.len() / dim;
    if n < k {
        return Err(Error::invalid(format!("k-means needs at least k = {k} rows, got {n}")));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite feature at row {}, column {}",
            i / dim,
            i % dim
        )));
    }
    if opts.n_init == 0 || opts.max_iter == 0 || !(opts.tol >= 0.0) {
        return Err(Error::invalid("n_init and max_iter must be positive and tol nonnegative"));
    }

    // All-zero columns are dropped before fitting and restored afterwards.
    let active: Vec<usize> = (0..dim)
        .filter(|&c| (0..n).any(|r| data[r * dim + c] != 0.0))
        .collect();
    let width = active.len().max(1);
    let compact: Vec<f64> = if active.is_empty() {
        vec![0.0; n]
    } else {
        (0..n)
            .flat_map(|r| active.iter().map(move |&c| data[r * dim + c]))
            .collect()
    };

    let mut best: Option<(Vec<Vec<f64>>, f64, usize)> = None;
    let mut traces = Vec::with_capacity(opts.n_init);
    for run in 0..opts.n_init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run as u64);
        let (centroids, inertia, n_iter, trace) = lloyd(&compact, width, k, &mut rng, opts);
        traces.push(RunTrace { inertia: trace });
        if best.as_ref().is_none_or(|b| inertia < b.1) {
            best = Some((centroids, inertia, n_iter));
        }
    }
    let (compact_centroids, inertia, n_iter) = best.expect("n_init >= 1");
    let centroids = compact_centroids
        .into_iter()
        .map(|c| {
            let mut full = vec![0.0; dim];
            for (v, &col) in c.iter().zip(&active) {
                full[col] = *v;
            }
            full
        })
        .collect();
    Ok((
        KMeansModel { centroids, k, inertia, seed, n_iter, columns: Vec::new() },
        traces,
    ))
}

fn kmeans_pp(data: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let trials = 2 + (k as f64).ln() as usize;
    let first = rng.random_range(0..n);
    let mut centroids = vec![row(first).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            let pick = rng.random_range(0..n);
            centroids.push(row(pick).to_vec());
            continue;
        }
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            let cand = row(chosen);
            let next: Vec<f64> = d2
                .par_iter()
                .enumerate()
                .map(|(i, &d)| d.min(sq_dist(row(i), cand)))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| potential < *p) {
                best = Some((potential, chosen, next));
            }
        }
        let (_, chosen, next) = best.expect("at least one trial");
        centroids.push(row(chosen).to_vec());
        d2 = next;
    }
    centroids
}

fn assign(data: &[f64], dim: usize, centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    data.par_chunks(dim).map(|r| nearest_centroid(r, centroids)).collect()
}

#[derive(Clone, Copy)]
struct Bound {
    label: usize,
    sq: f64,
    lower: f64,
}

fn full_scan(row: &[f64], centroids: &[Vec<f64>]) -> Bound {
    let (mut best, mut second) = ((0, f64::INFINITY), f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            second = best.1;
            best = (c, d);
        } else if d < second {
            second = d;
        }
    }
    Bound { label: best.0, sq: best.1, lower: second.sqrt() }
}

/// Nearest-centroid assignment that skips the full scan when triangle
/// bounds already single out the current centroid.
fn assign_bounded(data: &[f64], dim: usize, centroids: &[Vec<f64>], bounds: &mut [Bound]) {
    let k = centroids.len();
    let half_gap: Vec<f64> = (0..k)
        .map(|c| {
            (0..k)
                .filter(|&o| o != c)
                .map(|o| sq_dist(&centroids[c], &centroids[o]).sqrt())
                .fold(f64::INFINITY, f64::min)
                / 2.0
        })
        .collect();
    data.par_chunks(dim).zip(bounds.par_iter_mut()).for_each(|(row, b)| {
        let sq = sq_dist(row, &centroids[b.label]);
        let upper = sq.sqrt();
        let guard = half_gap[b.label].max(b.lower);
        if upper + 1e-9 * (1.0 + upper) < guard {
            b.sq = sq;
        } else {
            *b = full_scan(row, centroids);
        }
    });
}

fn lloyd(
    data: &[f64],
    dim: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
    opts: KMeansOptions,
) -> (Vec<Vec<f64>>, f64, usize, Vec<f64>) {
    let n = data.len() / dim;
    let mut centroids = kmeans_pp(data, dim, k, rng);
    let mut trace = Vec::new();
    let mut n_iter = 0;
    let mut bounds = vec![Bound { label: 0, sq: 0.0, lower: f64::NEG_INFINITY }; n];
    loop {
        assign_bounded(data, dim, &centroids, &mut bounds);
        let labels: Vec<(usize, f64)> = bounds.iter().map(|b| (b.label, b.sq)).collect();
        trace.push(labels.iter().map(|l| l.1).sum());
        if n_iter == opts.max_iter {
            break;
        }
        n_iter += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        let mut owner: Vec<usize> = labels.iter().map(|l| l.0).collect();
        for (i, &c) in owner.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(&data[i * dim..(i + 1) * dim]) {
                *s += v;
            }
        }
        let mut forced: Vec<Option<usize>> = vec![None; k];
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| counts[owner[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if labels[b].1 >= labels[i].1 => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = donor {
                let from = owner[i];
                counts[from] -= 1;
                for (s, v) in sums[from].iter_mut().zip(&data[i * dim..(i + 1) * dim]) {
                    *s -= v;
                }
                owner[i] = c;
                counts[c] = 1;
                forced[c] = Some(i);
            }
        }

        let mut shift: f64 = 0.0;
        let mut next = Vec::with_capacity(k);
        for c in 0..k {
            let updated: Vec<f64> = match forced[c] {
                Some(i) => data[i * dim..(i + 1) * dim].to_vec(),
                None if counts[c] == 0 => centroids[c].clone(),
                None => sums[c].iter().map(|s| s / counts[c] as f64).collect(),
            };
            shift = shift.max(sq_dist(&updated, &centroids[c]).sqrt());
            next.push(updated);
        }
        centroids = next;
        bounds.par_iter_mut().for_each(|b| b.lower -= shift);
        if shift < opts.tol {
            let last = assign(data, dim, &centroids);
            trace.push(last.iter().map(|l| l.1).sum());
            break;
        }
    }
    let inertia = *trace.last().expect("at least one assignment");
    (centroids, inertia, n_iter, trace)
}

/// Labels every segment with its nearest centroid and builds one sequence
/// per document, in corpus order.
pub fn assign_blocks(corpus: &Corpus, matrix: &FeatureMatrix, model: &KMeansModel) -> Result<Vec<BlockSequence>> {
    if model.dim() != matrix.n_cols() {
        return Err(Error::invalid(format!(
            "model has {} dimensions but the feature matrix has {} columns",
            model.dim(),
            matrix.n_cols()
        )));
    }
    if !model.columns.is_empty() && model.columns != matrix.columns {
        return Err(Error::invalid("model columns differ from feature matrix columns"));
    }
    let expected: usize = corpus.n_segments();
    if matrix.n_rows() != expected {
        return Err(Error::invalid(format!(
            "feature matrix has {} rows but the corpus has {expected} segments",
            matrix.n_rows()
        )));
    }
    let labels: Vec<Label> = (0..matrix.n_rows())
        .into_par_iter()
        .map(|i| model.predict(matrix.row(i)))
        .collect();
    let mut out = Vec::with_capacity(corpus.documents.len());
    let mut r = 0;
    for doc in &corpus.documents {
        for seg in 0..doc.segments.len() {
            let (id, s) = &matrix.row_index[r + seg];
            if id != &doc.id || *s != seg {
                return Err(Error::invalid(format!(
                    "feature row {} is ({id}, {s}) but segment {seg} of `{}` was expected",
                    r + seg,
                    doc.id
                )));
            }
        }
        out.push(BlockSequence::new(doc.id.clone(), labels[r..r + doc.segments.len()].to_vec()));
        r += doc.segments.len();
    }
    Ok(out)
}
