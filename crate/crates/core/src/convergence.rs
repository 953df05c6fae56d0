//! Group-level comparisons of transition order and transition position, and
//! the four-way regime classifier built on them.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::BlockSequence;
use crate::error::{Error, Result};
use crate::sequence::{
    edit_distance, k_medoids, normalized_edit_distance, write_square_csv, DistanceMatrix, Label, MedoidSet,
    TransitionEvent,
};
use crate::stats::{mean, quantile_sorted, sample_std, sorted_copy, trapezoid};

/// Square matrix indexed by the evaluation groups it covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMatrix {
    pub groups: Vec<usize>,
    pub values: Vec<f64>,
}

impl GroupMatrix {
    pub fn from_fn(groups: Vec<usize>, f: impl Fn(usize, usize) -> f64) -> Self {
        let n = groups.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        GroupMatrix { groups, values }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn position_of(&self, group: usize) -> Option<usize> {
        self.groups.iter().position(|&g| g == group)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.values.len() != n * n {
            return Err(Error::invalid(format!("group matrix has {} entries for {n} groups", self.values.len())));
        }
        let mut seen = self.groups.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != n {
            return Err(Error::invalid("group matrix lists a group twice"));
        }
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(Error::invalid(format!("group matrix diagonal for group {} is nonzero", self.groups[i])));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 || v != self.get(j, i) {
                    return Err(Error::invalid(format!(
                        "group matrix entry ({}, {}) = {v} is negative, non-finite or asymmetric",
                        self.groups[i], self.groups[j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// CSV with `group_<g>` headers on both axes.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let headers: Vec<String> = self.groups.iter().map(|g| format!("group_{g}")).collect();
        write_square_csv(path, &headers, self.len(), |i, j| self.get(i, j))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Min,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "min" => Ok(Aggregation::Min),
            _ => Err(Error::invalid(format!("unknown aggregation `{s}` (expected mean or min)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderOptions {
    pub m: usize,
    pub aggregation: Aggregation,
    /// Divide edit distances by the longer sequence length.
    pub normalized: bool,
}

impl Default for OrderOptions {
    fn default() -> Self {
        OrderOptions { m: 1, aggregation: Aggregation::Mean, normalized: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupOrderAnalysis {
    pub medoid_sets: Vec<MedoidSet>,
    /// Mean distance of members to their nearest medoid, per group.
    pub cohesion: Vec<f64>,
    pub matrix: GroupMatrix,
}

fn seq_distance(a: &[Label], b: &[Label], normalized: bool) -> f64 {
    if normalized {
        normalized_edit_distance(a, b)
    } else {
        edit_distance(a, b) as f64
    }
}

/// Medoids of the compressed sequences in each group and the distances
/// between groups' medoids. `groups[g]` holds the documents of group `g`.
pub fn analyze_order(groups: &[Vec<BlockSequence>], opts: OrderOptions) -> Result<GroupOrderAnalysis> {
    if let Some(g) = groups.iter().position(Vec::is_empty) {
        return Err(Error::EmptyGroup(g));
    }
    if opts.m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    let medoid_sets: Vec<MedoidSet> = groups
        .par_iter()
        .enumerate()
        .map(|(g, members)| {
            let mut members: Vec<&BlockSequence> = members.iter().collect();
            members.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
            let seqs: Vec<Vec<Label>> = members.iter().map(|s| s.compressed.clone()).collect();
            let dist = DistanceMatrix::edit_distances(&seqs, opts.normalized);
            let mut set = k_medoids(&seqs, opts.m.min(seqs.len()), &dist)?;
            set.group = g;
            Ok(set)
        })
        .collect::<Result<_>>()?;
    let cohesion = groups
        .iter()
        .zip(&medoid_sets)
        .map(|(members, set)| set.assignment_cost / members.len() as f64)
        .collect();
    let matrix = GroupMatrix::from_fn((0..groups.len()).collect(), |i, j| {
        let pairs = medoid_sets[i].medoids.iter().flat_map(|a| {
            medoid_sets[j].medoids.iter().map(move |b| seq_distance(a, b, opts.normalized))
        });
        match opts.aggregation {
            Aggregation::Mean => {
                let (s, c) = pairs.fold((0.0, 0usize), |(s, c), d| (s + d, c + 1));
                s / c as f64
            }
            Aggregation::Min => pairs.fold(f64::INFINITY, f64::min),
        }
    });
    Ok(GroupOrderAnalysis { medoid_sets, cohesion, matrix })
}

/// Exact 1-Wasserstein distance between two empirical measures on the line.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("wasserstein distance needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("wasserstein distance needs finite samples"));
    }
    let a = sorted_copy(a);
    let b = sorted_copy(b);
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (y - x).abs()).sum::<f64>() / a.len() as f64);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    let mut x = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        let gap = (i as f64 / na - j as f64 / nb).abs();
        total += gap * (next - x);
        x = next;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    /// Degenerate input: all mass placed on the grid point nearest the sample.
    pub spike: bool,
}

impl KdeCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_columns(path, ("grid", &self.grid), ("density", &self.density))
    }
}

pub(crate) fn write_columns(path: &Path, a: (&str, &[f64]), b: (&str, &[f64])) -> Result<()> {
    let err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record([a.0, b.0]).map_err(err)?;
    for (x, y) in a.1.iter().zip(b.1) {
        w.write_record([x.to_string(), y.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Silverman bandwidth; falls back to the standard deviation when the IQR is
/// zero, and is 0 for constant samples.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 || samples.iter().all(|&s| s == samples[0]) {
        return 0.0;
    }
    let sd = sample_std(samples);
    let sorted = sorted_copy(samples);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Gaussian KDE on `grid_size` evenly spaced points over [0, 1], reflected at
/// both boundaries and normalized by the trapezoid rule.
pub fn kde_curve(samples: &[f64], grid_size: usize) -> Result<KdeCurve> {
    if samples.is_empty() {
        return Err(Error::invalid("kde needs at least one sample"));
    }
    if grid_size < 2 {
        return Err(Error::invalid("kde grid needs at least 2 points"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("kde samples must be finite"));
    }
    let step = 1.0 / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|i| i as f64 * step).collect();
    let h = silverman_bandwidth(samples);
    if !(h > 0.0) {
        let centre = mean(samples).clamp(0.0, 1.0);
        let at = (centre / step).round() as usize;
        let mut density = vec![0.0; grid_size];
        let edge = at == 0 || at == grid_size - 1;
        density[at] = if edge { 2.0 / step } else { 1.0 / step };
        return Ok(KdeCurve { grid, density, bandwidth: 0.0, spike: true });
    }
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let kernel = |u: f64| (-0.5 * u * u).exp();
    let mut density: Vec<f64> = grid
        .par_iter()
        .map(|&x| {
            samples
                .iter()
                .map(|&s| kernel((x - s) / h) + kernel((x + s) / h) + kernel((x - (2.0 - s)) / h))
                .sum::<f64>()
                * norm
        })
        .collect();
    let area = trapezoid(&grid, &density);
    for d in &mut density {
        *d /= area;
    }
    Ok(KdeCurve { grid, density, bandwidth: h, spike: false })
}

/// Normalized histogram over [0, 1]: bin centres and densities.
pub fn histogram(samples: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let width = 1.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        let b = ((s / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = samples.len().max(1) as f64;
    let centres = (0..bins).map(|b| (b as f64 + 0.5) * width).collect();
    let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    (centres, density)
}

/// Mean W1 between the two halves of `splits` seeded random partitions.
pub fn split_half_cohesion(samples: &[f64], splits: usize, seed: u64, stream: u64) -> f64 {
    if samples.len() < 2 || splits == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut work = sorted_copy(samples);
    let half = work.len() / 2;
    let mut total = 0.0;
    for _ in 0..splits {
        work.shuffle(&mut rng);
        total += wasserstein_1d(&work[..half], &work[half..]).expect("both halves non-empty");
    }
    total / splits as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionOptions {
    pub filter: Option<(Label, Label)>,
    pub grid_size: usize,
    pub bootstrap_splits: usize,
    pub seed: u64,
    pub histogram_bins: usize,
}

impl Default for PositionOptions {
    fn default() -> Self {
        PositionOptions { filter: None, grid_size: 512, bootstrap_splits: 20, seed: 0, histogram_bins: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPositionAnalysis {
    /// Sorted positions per group, indexed by group.
    pub samples: Vec<Vec<f64>>,
    /// Groups with no events after filtering; excluded from the matrix.
    pub absent: Vec<usize>,
    /// One curve per group in `matrix.groups`.
    pub kde: Vec<KdeCurve>,
    pub matrix: GroupMatrix,
    /// Split-half cohesion per group in `matrix.groups`.
    pub cohesion: Vec<f64>,
}

pub fn analyze_position(groups: &[Vec<TransitionEvent>], opts: &PositionOptions) -> Result<GroupPositionAnalysis> {
    let samples: Vec<Vec<f64>> = groups
        .iter()
        .map(|events| {
            let pos: Vec<f64> = events
                .iter()
                .filter(|e| opts.filter.is_none_or(|(f, t)| e.from_label == f && e.to_label == t))
                .map(|e| e.position)
                .collect();
            sorted_copy(&pos)
        })
        .collect();
    let present: Vec<usize> = (0..groups.len()).filter(|&g| !samples[g].is_empty()).collect();
    let absent: Vec<usize> = (0..groups.len()).filter(|&g| samples[g].is_empty()).collect();
    if present.is_empty() {
        return Err(Error::invalid(match opts.filter {
            Some((f, t)) => format!("no group has a {f} -> {t} transition"),
            None => "no group has any transition".to_string(),
        }));
    }
    for g in &absent {
        log::warn!("group {g} has no matching transitions and is excluded");
    }
    let kde = present
        .iter()
        .map(|&g| kde_curve(&samples[g], opts.grid_size))
        .collect::<Result<Vec<_>>>()?;
    let cohesion = present
        .par_iter()
        .map(|&g| split_half_cohesion(&samples[g], opts.bootstrap_splits, opts.seed, g as u64))
        .collect();
    let matrix = GroupMatrix::from_fn(present.clone(), |i, j| {
        wasserstein_1d(&samples[present[i]], &samples[present[j]]).expect("present groups are non-empty")
    });
    Ok(GroupPositionAnalysis { samples, absent, kde, matrix, cohesion })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Ordered,
    Akp,
    ReverseAkp,
    Noisy,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Ordered => "ordered",
            Verdict::Akp => "akp",
            Verdict::ReverseAkp => "reverse_akp",
            Verdict::Noisy => "noisy",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Verdict {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ordered" => Ok(Verdict::Ordered),
            "akp" => Ok(Verdict::Akp),
            "reverse_akp" => Ok(Verdict::ReverseAkp),
            "noisy" => Ok(Verdict::Noisy),
            _ => Err(Error::invalid(format!("unknown regime `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
    pub gamma: f64,
    pub high_groups: Vec<usize>,
    pub low_groups: Vec<usize>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { low: 0.8, high: 1.1, gamma: 1.25, high_groups: vec![7, 8, 9], low_groups: vec![0, 1, 2] }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [("low", self.low), ("high", self.high), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("threshold `{name}` must be positive, got {v}"));
            }
        }
        if self.high_groups.is_empty() || self.low_groups.is_empty() {
            problems.push("high and low group blocks must be non-empty".into());
        }
        if self.high_groups.iter().any(|g| self.low_groups.contains(g)) {
            problems.push("high and low group blocks overlap".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub c_high: f64,
    pub c_low: f64,
    pub c_high_norm: f64,
    pub c_low_norm: f64,
    pub reference: f64,
    pub cross: f64,
    pub grand: f64,
    pub separation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub verdict: Verdict,
    pub diagnostics: Diagnostics,
    pub thresholds: Thresholds,
}

/// `cohesion[i]` belongs to group `matrix.groups[i]`. Groups of a block that
/// are missing from the matrix are skipped.
pub fn classify_regime(matrix: &GroupMatrix, cohesion: &[f64], th: &Thresholds) -> Result<RegimeLabel> {
    matrix.validate()?;
    th.validate()?;
    if cohesion.len() != matrix.len() {
        return Err(Error::invalid(format!(
            "{} cohesion values for {} groups",
            cohesion.len(),
            matrix.len()
        )));
    }
    if matrix.len() < 2 {
        return Err(Error::invalid("regime classification needs at least two groups"));
    }
    if cohesion.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::invalid("cohesion values must be finite and nonnegative"));
    }
    let block = |gs: &[usize], name: &str| -> Result<Vec<usize>> {
        let idx: Vec<usize> = gs.iter().filter_map(|&g| matrix.position_of(g)).collect();
        if idx.is_empty() {
            Err(Error::invalid(format!("none of the {name} groups {gs:?} is present")))
        } else {
            Ok(idx)
        }
    };
    let hi = block(&th.high_groups, "high")?;
    let lo = block(&th.low_groups, "low")?;

    let c_high = mean(&hi.iter().map(|&i| cohesion[i]).collect::<Vec<_>>());
    let c_low = mean(&lo.iter().map(|&i| cohesion[i]).collect::<Vec<_>>());
    let all_mean = mean(cohesion);
    let reference = if all_mean > 0.0 { all_mean } else { 1.0 };
    let cross = mean(&hi.iter().flat_map(|&i| lo.iter().map(move |&j| matrix.get(i, j))).collect::<Vec<_>>());
    let n = matrix.len();
    let off: Vec<f64> = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| matrix.get(i, j)).collect();
    let grand = mean(&off);
    let separation = if grand > 0.0 { cross / grand } else { 1.0 };
    let c_high_norm = c_high / reference;
    let c_low_norm = c_low / reference;

    let verdict = if c_high_norm <= th.low && c_low_norm <= th.low && separation >= th.high {
        Verdict::Ordered
    } else if c_high_norm <= th.low && c_low_norm >= th.high {
        Verdict::Akp
    } else if c_low_norm <= th.low && c_high_norm >= th.high {
        Verdict::ReverseAkp
    } else {
        Verdict::Noisy
    };
    Ok(RegimeLabel {
        verdict,
        diagnostics: Diagnostics { c_high, c_low, c_high_norm, c_low_norm, reference, cross, grand, separation },
        thresholds: th.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::transitions_of;

    fn seq(id: &str, labels: &[Label]) -> BlockSequence {
        BlockSequence::new(id, labels.to_vec())
    }

    #[test]
    fn identical_groups_give_zero_matrix() {
        let groups: Vec<Vec<BlockSequence>> = (0..10).map(|g| vec![seq(&format!("d{g}"), &[0, 1, 2])]).collect();
        let a = analyze_order(&groups, OrderOptions::default()).unwrap();
        assert!(a.matrix.values.iter().all(|&v| v == 0.0));
        assert!(a.cohesion.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn two_group_fixture() {
        // Disjoint alphabets: four substitutions.
        let s = [0, 1, 0, 1];
        let t = [2, 3, 2, 3];
        assert_eq!(edit_distance(&s, &t), 4);
        let groups = vec![
            vec![seq("a1", &s), seq("a2", &s)],
            vec![seq("b1", &t), seq("b2", &t), seq("b3", &t)],
        ];
        let a = analyze_order(&groups, OrderOptions::default()).unwrap();
        assert_eq!(a.matrix.get(0, 1), 4.0);
        assert_eq!(a.cohesion, vec![0.0, 0.0]);
    }

    #[test]
    fn middle_element_is_the_medoid() {
        // d(s,t) = 1, d(t,u) = 1, d(s,u) = 2.
        let (s, t, u) = ([0, 1], [0, 1, 2], [0, 1, 2, 3]);
        let groups = vec![vec![seq("s", &s), seq("t", &t), seq("u", &u)]];
        let a = analyze_order(&groups, OrderOptions::default()).unwrap();
        assert_eq!(a.medoid_sets[0].medoids, vec![t.to_vec()]);
        assert!((a.cohesion[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_group_named() {
        let groups = vec![vec![seq("a", &[1])], vec![]];
        match analyze_order(&groups, OrderOptions::default()) {
            Err(Error::EmptyGroup(1)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn min_aggregation() {
        let groups = vec![vec![seq("a", &[0]), seq("b", &[1, 2, 3])], vec![seq("c", &[1, 2, 3, 4])]];
        let opts = OrderOptions { m: 2, aggregation: Aggregation::Min, normalized: false };
        let a = analyze_order(&groups, opts).unwrap();
        assert_eq!(a.matrix.get(0, 1), 1.0);
        let mean = analyze_order(&groups, OrderOptions { aggregation: Aggregation::Mean, ..opts }).unwrap();
        assert_eq!(mean.matrix.get(0, 1), 2.5);
    }

    #[test]
    fn wasserstein_closed_forms() {
        assert_eq!(wasserstein_1d(&[0.3, 0.1], &[0.1, 0.3]).unwrap(), 0.0);
        assert!((wasserstein_1d(&[0.2], &[0.5]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[0.5, 0.5]).unwrap(), 0.5);
        assert!(wasserstein_1d(&[], &[0.5]).is_err());
    }

    #[test]
    fn kde_normalized_and_symmetric() {
        let samples = [0.1, 0.2, 0.45, 0.55, 0.8, 0.9];
        let k = kde_curve(&samples, 512).unwrap();
        assert!(!k.spike);
        assert!((trapezoid(&k.grid, &k.density) - 1.0).abs() < 1e-3);
        for i in 0..512 {
            assert!((k.density[i] - k.density[511 - i]).abs() < 1e-9);
        }
    }

    #[test]
    fn kde_spike_for_degenerate_input() {
        for samples in [vec![0.3], vec![1.0, 1.0, 1.0]] {
            let k = kde_curve(&samples, 101).unwrap();
            assert!(k.spike);
            assert!((trapezoid(&k.grid, &k.density) - 1.0).abs() < 1e-12);
        }
        assert!(kde_curve(&[], 512).is_err());
    }

    fn events(doc: &str, positions: &[f64]) -> Vec<TransitionEvent> {
        positions
            .iter()
            .map(|&p| TransitionEvent { from_label: 1, to_label: 4, position: p, doc_id: doc.into() })
            .collect()
    }

    #[test]
    fn point_mass_groups() {
        let mut groups: Vec<Vec<TransitionEvent>> = vec![Vec::new(); 10];
        groups[9] = events("h", &[0.9, 0.9]);
        groups[0] = events("l", &[0.1]);
        let a = analyze_position(&groups, &PositionOptions::default()).unwrap();
        assert_eq!(a.matrix.groups, vec![0, 9]);
        assert!((a.matrix.get(0, 1) - 0.8).abs() < 1e-12);
        assert_eq!(a.absent, vec![1, 2, 3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn filter_restricts_pairs() {
        let labels = [0, 0, 0, 1, 1, 0, 0, 2, 2, 2];
        let groups = vec![transitions_of(&labels, "x")];
        let opts = PositionOptions { filter: Some((1, 0)), ..Default::default() };
        let a = analyze_position(&groups, &opts).unwrap();
        assert_eq!(a.samples[0], vec![0.6]);
        let none = PositionOptions { filter: Some((4, 3)), ..Default::default() };
        assert!(analyze_position(&groups, &none).is_err());
    }

    fn flat(groups: usize, d: f64) -> GroupMatrix {
        GroupMatrix::from_fn((0..groups).collect(), |_, _| d)
    }

    #[test]
    fn regime_examples() {
        let th = Thresholds::default();
        let r = classify_regime(&flat(10, 2.0), &[1.0; 10], &th).unwrap();
        assert_eq!(r.verdict, Verdict::Noisy);

        let mut coh = vec![1.0; 10];
        for g in 7..10 {
            coh[g] = 0.1;
        }
        for g in 0..3 {
            coh[g] = 1.5;
        }
        assert_eq!(classify_regime(&flat(10, 2.0), &coh, &th).unwrap().verdict, Verdict::Akp);
        coh.reverse();
        assert_eq!(classify_regime(&flat(10, 2.0), &coh, &th).unwrap().verdict, Verdict::ReverseAkp);

        // H and L at half the reference, cross distance raising cross/grand to 1.5.
        let mut coh = vec![0.5; 10];
        for g in 3..7 {
            coh[g] = 1.75;
        }
        let hl = |g: usize| (g <= 2) != (g >= 7) && (g <= 2 || g >= 7);
        let base = 1.0;
        // Cross pairs (9 of 45) at c, all others at 1: c / ((36 + 9c)/45) = 1.5 gives c = 12/7.
        let c = 12.0 / 7.0;
        let m = GroupMatrix::from_fn((0..10).collect(), |i, j| {
            if hl(i) && hl(j) && (i <= 2) != (j <= 2) {
                c
            } else {
                base
            }
        });
        let r = classify_regime(&m, &coh, &th).unwrap();
        assert!((r.diagnostics.separation - 1.5).abs() < 1e-12);
        assert_eq!(r.verdict, Verdict::Ordered);
    }

    #[test]
    fn regime_rejects_malformed_input() {
        let th = Thresholds::default();
        let mut m = flat(10, 1.0);
        m.values[1] = 2.0;
        assert!(classify_regime(&m, &[1.0; 10], &th).is_err());
        assert!(classify_regime(&flat(10, 1.0), &[1.0; 9], &th).is_err());
        let bad = Thresholds { low_groups: vec![7], ..Thresholds::default() };
        assert!(classify_regime(&flat(10, 1.0), &[1.0; 10], &bad).is_err());
    }

    #[test]
    fn all_zero_cohesion_uses_unit_reference() {
        let r = classify_regime(&flat(10, 0.0), &[0.0; 10], &Thresholds::default()).unwrap();
        assert_eq!(r.diagnostics.reference, 1.0);
        assert_eq!(r.verdict, Verdict::Noisy);
    }
}
