//! Turning per-detection match scores into a matched/unmatched decision.
//! The interesting mode needs no threshold: scores are clustered with
//! average-linkage agglomeration down to two groups and the higher-scoring
//! group is taken. A plain threshold mode exists as a baseline, and a
//! majority-vote layer stabilizes per-detection decisions across a track's
//! lifetime.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Matched,
    Unmatched,
}

/// One scored track observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    pub track_id: u64,
    pub frame: u64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Threshold,
    Cluster,
    ClusterMajority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub mode: SelectionMode,
    /// Used only in threshold mode.
    pub threshold: f64,
    /// Score spread below which everything is considered one group and
    /// labeled matched.
    pub min_spread: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            mode: SelectionMode::ClusterMajority,
            threshold: 0.5,
            min_spread: 1e-6,
        }
    }
}

/// Summary of one selection run, written alongside the per-detection labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub total: usize,
    pub matched: usize,
    pub unmatched: usize,
    /// Ten equal-width bins over [min score, max score]; all in the single
    /// bin when the spread is zero.
    pub histogram: Vec<usize>,
    pub selected_track_ids: Vec<u64>,
    pub mode: SelectionMode,
    pub threshold: Option<f64>,
}

/// Label everything at or above the threshold as matched.
pub fn threshold_select(scores: &[ScoredDetection], threshold: f64) -> Vec<Label> {
    scores
        .iter()
        .map(|s| {
            if s.score >= threshold {
                Label::Matched
            } else {
                Label::Unmatched
            }
        })
        .collect()
}

/// Average-linkage 1-D agglomeration down to two clusters, higher mean wins.
///
/// In one dimension average linkage only ever merges adjacent runs of the
/// sorted order, so clusters are kept as contiguous segments and each step
/// scans adjacent pairs for the smallest mean difference, merging the
/// leftmost pair on ties. Returns per-input labels in the original order.
/// Degenerate inputs (single point, spread below `min_spread`) label
/// everything matched: with no evidence of two populations the query is
/// assumed to describe what it was scored against.
pub fn cluster_select(scores: &[ScoredDetection], min_spread: f64) -> Vec<Label> {
    if scores.is_empty() {
        return Vec::new();
    }
    let lo = scores.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    let hi = scores
        .iter()
        .map(|s| s.score)
        .fold(f64::NEG_INFINITY, f64::max);
    if scores.len() == 1 || hi - lo < min_spread {
        return vec![Label::Matched; scores.len()];
    }

    // Sort by (score, track_id, frame) so equal scores order deterministically.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let sa = &scores[a];
        let sb = &scores[b];
        sa.score
            .partial_cmp(&sb.score)
            .expect("scores must be comparable")
            .then(sa.track_id.cmp(&sb.track_id))
            .then(sa.frame.cmp(&sb.frame))
    });

    // Each segment is a contiguous slice of the sorted order, tracked by its
    // running sum and count so means stay exact to accumulation order.
    struct Segment {
        sum: f64,
        count: usize,
        end: usize, // exclusive index into `order`
    }
    let mut segments: Vec<Segment> = Vec::with_capacity(scores.len());
    for (rank, &idx) in order.iter().enumerate() {
        segments.push(Segment {
            sum: scores[idx].score,
            count: 1,
            end: rank + 1,
        });
    }

    while segments.len() > 2 {
        // Adjacent means are non-decreasing, so meanB - meanA is the
        // average-linkage distance and is never negative.
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for i in 0..segments.len() - 1 {
            let a = &segments[i];
            let b = &segments[i + 1];
            let d = b.sum / b.count as f64 - a.sum / a.count as f64;
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let b = segments.remove(best + 1);
        let a = &mut segments[best];
        a.sum += b.sum;
        a.count += b.count;
        a.end = b.end;
    }

    let split = segments[0].end;
    let mut labels = vec![Label::Unmatched; scores.len()];
    for (rank, &idx) in order.iter().enumerate() {
        labels[idx] = if rank < split {
            Label::Unmatched
        } else {
            Label::Matched
        };
    }
    labels
}

/// Collapse per-detection labels to one verdict per track: matched when
/// strictly more than half of a track's detections matched, and also on an
/// exact tie, since a query that fits half the time usually fits a track
/// whose motion word flips at the margin. Detections then all take their
/// track's verdict. Errors if a label references a track absent from
/// `scores`.
pub fn majority_vote(scores: &[ScoredDetection], labels: &[Label]) -> Result<Vec<Label>> {
    if scores.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "majority vote needs one label per score: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    let mut tally: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for (s, l) in scores.iter().zip(labels) {
        let e = tally.entry(s.track_id).or_insert((0, 0));
        e.0 += 1;
        if *l == Label::Matched {
            e.1 += 1;
        }
    }
    let verdict: BTreeMap<u64, Label> = tally
        .iter()
        .map(|(&id, &(total, matched))| {
            let v = if 2 * matched >= total {
                Label::Matched
            } else {
                Label::Unmatched
            };
            (id, v)
        })
        .collect();
    scores
        .iter()
        .map(|s| {
            verdict
                .get(&s.track_id)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("unknown track id {}", s.track_id)))
        })
        .collect()
}

/// Run the configured selection mode and build the report.
pub fn select(
    scores: &[ScoredDetection],
    cfg: &SelectionConfig,
) -> Result<(Vec<Label>, SelectionReport)> {
    let labels = match cfg.mode {
        SelectionMode::Threshold => threshold_select(scores, cfg.threshold),
        SelectionMode::Cluster => cluster_select(scores, cfg.min_spread),
        SelectionMode::ClusterMajority => {
            let per_detection = cluster_select(scores, cfg.min_spread);
            majority_vote(scores, &per_detection)?
        }
    };

    let matched = labels.iter().filter(|l| **l == Label::Matched).count();
    let mut histogram = vec![0usize; 10];
    if !scores.is_empty() {
        let lo = scores.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
        let hi = scores
            .iter()
            .map(|s| s.score)
            .fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for s in scores {
            let bin = if span <= 0.0 {
                0
            } else {
                (((s.score - lo) / span * 10.0) as usize).min(9)
            };
            histogram[bin] += 1;
        }
    }
    let selected_track_ids: Vec<u64> = scores
        .iter()
        .zip(&labels)
        .filter(|(_, l)| **l == Label::Matched)
        .map(|(s, _)| s.track_id)
        .collect::<BTreeSet<u64>>()
        .into_iter()
        .collect();
    let report = SelectionReport {
        total: scores.len(),
        matched,
        unmatched: scores.len() - matched,
        histogram,
        selected_track_ids,
        mode: cfg.mode,
        threshold: match cfg.mode {
            SelectionMode::Threshold => Some(cfg.threshold),
            _ => None,
        },
    };
    Ok((labels, report))
}
