//! Segment production for documents that are not pre-segmented: marker-based
//! splitting of running text and Bayesian Blocks over subtitle cue times.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Segment, Token};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct MarkerRule {
    pattern: Regex,
    min_tokens: usize,
}

impl MarkerRule {
    pub fn new(pattern: &str, min_tokens: usize) -> Result<Self> {
        if min_tokens < 1 {
            return Err(Error::invalid("MarkerRule.min_tokens must be >= 1"));
        }
        let pattern = Regex::new(pattern)
            .map_err(|e| Error::invalid(format!("bad marker pattern {pattern:?}: {e}")))?;
        Ok(MarkerRule {
            pattern,
            min_tokens,
        })
    }

    pub fn min_tokens(&self) -> usize {
        self.min_tokens
    }
}

/// Splits `raw_text` at every marker match, dropping the marker text itself.
///
/// Pieces with fewer than `min_tokens` tokens are merged into the previous
/// segment, or into the next one when nothing precedes them.
pub fn segment_by_markers(raw_text: &str, rule: &MarkerRule) -> Result<Vec<Segment>> {
    let mut pieces = Vec::new();
    let mut last = 0;
    for m in rule.pattern.find_iter(raw_text) {
        pieces.push(&raw_text[last..m.start()]);
        last = m.end();
    }
    pieces.push(&raw_text[last..]);

    let mut out: Vec<(String, Vec<Token>)> = Vec::new();
    let mut carry: Option<(String, Vec<Token>)> = None;
    for piece in pieces {
        let (mut text, mut tokens) = carry.take().unwrap_or_default();
        text.push_str(piece);
        tokens.extend(tokenize(piece));
        if tokens.len() >= rule.min_tokens {
            out.push((text, tokens));
        } else if let Some(prev) = out.last_mut() {
            prev.0.push_str(&text);
            prev.1.extend(tokens);
        } else {
            carry = Some((text, tokens));
        }
    }
    if let Some(rest) = carry {
        out.push(rest);
    }
    if out.iter().all(|(_, t)| t.is_empty()) {
        return Err(Error::invalid("segment_by_markers: text contains no tokens"));
    }
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(index, (text, tokens))| Segment {
            index,
            tokens,
            raw_text: Some(text),
            time_start: None,
            time_end: None,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePointResult {
    /// Block boundaries: first is the earliest event, last the latest.
    pub edges: Vec<f64>,
    pub n_blocks: usize,
}

/// Per-block prior for event data at false-alarm probability `p0`.
pub fn ncp_prior(n_events: usize, p0: f64) -> f64 {
    4.0 - (73.53 * p0 * (n_events as f64).powf(-0.478)).ln()
}

/// Event-data fitness `N ln(N / T)` of one block.
pub fn block_fitness(n_events: f64, duration: f64) -> f64 {
    n_events * (n_events / duration).ln()
}

/// Bayesian Blocks segmentation of ascending event times.
pub fn bayesian_blocks(timestamps: &[f64], p0: f64) -> Result<ChangePointResult> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::invalid(format!("p0 must lie in (0, 1), got {p0}")));
    }
    bayesian_blocks_with_prior(timestamps, ncp_prior(timestamps.len(), p0))
}

/// Distinct timestamps in ascending order with their multiplicities.
pub fn unique_counts(timestamps: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut values: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for &t in timestamps {
        match values.last() {
            Some(&prev) if prev == t => *counts.last_mut().expect("paired with values") += 1,
            _ => {
                values.push(t);
                counts.push(1);
            }
        }
    }
    (values, counts)
}

/// Cell edges: data extremes plus midpoints between consecutive events.
pub fn cell_edges(t: &[f64]) -> Vec<f64> {
    let mut edges = Vec::with_capacity(t.len() + 1);
    edges.push(t[0]);
    edges.extend(t.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(t[t.len() - 1]);
    edges
}

/// Exact O(n^2) optimal partition with an explicit per-block penalty.
pub fn bayesian_blocks_with_prior(timestamps: &[f64], ncp_prior: f64) -> Result<ChangePointResult> {
    if timestamps.is_empty() {
        return Err(Error::invalid("bayesian_blocks needs at least one timestamp"));
    }
    if let Some(t) = timestamps.iter().find(|t| !t.is_finite()) {
        return Err(Error::invalid(format!("non-finite timestamp {t}")));
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::invalid(format!(
            "timestamps must be ascending; t[{}] = {} < t[{}] = {}",
            i + 1,
            timestamps[i + 1],
            i,
            timestamps[i]
        )));
    }
    let (t, counts) = unique_counts(timestamps);
    if t.len() == 1 {
        return Ok(ChangePointResult {
            edges: vec![t[0], t[0]],
            n_blocks: 1,
        });
    }

    let n = t.len();
    let edges = cell_edges(&t);
    let mut cumulative = vec![0usize; n + 1];
    for (i, c) in counts.iter().enumerate() {
        cumulative[i + 1] = cumulative[i] + c;
    }

    let mut best = vec![0.0f64; n];
    let mut last = vec![0usize; n];
    for r in 0..n {
        let mut arg = 0;
        let mut top = f64::NEG_INFINITY;
        for start in 0..=r {
            let count = (cumulative[r + 1] - cumulative[start]) as f64;
            let width = edges[r + 1] - edges[start];
            let prior = if start > 0 { best[start - 1] } else { 0.0 };
            let value = prior + block_fitness(count, width) - ncp_prior;
            if value > top {
                top = value;
                arg = start;
            }
        }
        best[r] = top;
        last[r] = arg;
    }

    let mut cuts = vec![n];
    let mut ind = n;
    while ind > 0 {
        ind = last[ind - 1];
        cuts.push(ind);
    }
    cuts.reverse();
    let edges: Vec<f64> = cuts.iter().map(|&i| edges[i]).collect();
    Ok(ChangePointResult {
        n_blocks: edges.len() - 1,
        edges,
    })
}

/// Merges timed cues into one segment per change-point block, keyed on each
/// cue's start time. Blocks that receive no cue are dropped.
pub fn regroup_cues(cues: &[Segment], result: &ChangePointResult) -> Vec<Segment> {
    let n_blocks = result.n_blocks.max(1);
    let inner = &result.edges[1..result.edges.len().saturating_sub(1).max(1)];
    let mut blocks: Vec<Vec<&Segment>> = vec![Vec::new(); n_blocks];
    for cue in cues {
        let t = cue.time_start.unwrap_or(f64::NEG_INFINITY);
        let b = inner.partition_point(|&e| e <= t).min(n_blocks - 1);
        blocks[b].push(cue);
    }
    blocks
        .into_iter()
        .filter(|b| !b.is_empty())
        .enumerate()
        .map(|(index, members)| {
            let texts: Vec<&str> = members.iter().filter_map(|c| c.raw_text.as_deref()).collect();
            Segment {
                index,
                tokens: members.iter().flat_map(|c| c.tokens.iter().cloned()).collect(),
                raw_text: (!texts.is_empty()).then(|| texts.join("\n")),
                time_start: members.first().and_then(|c| c.time_start),
                time_end: members
                    .iter()
                    .filter_map(|c| c.time_end)
                    .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x)))),
            }
        })
        .collect()
}

/// Re-segments a document's timed cues with Bayesian Blocks on cue starts.
pub fn segment_cues(cues: &[Segment], p0: f64) -> Result<Vec<Segment>> {
    let times: Vec<f64> = cues
        .iter()
        .map(|c| {
            c.time_start
                .ok_or_else(|| Error::invalid("cue without time_start"))
        })
        .collect::<Result<_>>()?;
    let blocks = bayesian_blocks(&times, p0)?;
    Ok(regroup_cues(cues, &blocks))
}
