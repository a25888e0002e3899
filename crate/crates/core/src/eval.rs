//! Higher-order tracking accuracy over image-plane boxes. Detection quality,
//! association quality, and localization quality are measured jointly: a
//! global two-pass scheme first estimates how well each ground-truth and
//! predicted identity align over the whole sequence, then resolves per-frame
//! matches with that alignment as a prior, and finally scores the result at
//! nineteen IoU thresholds and averages them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_2d, Rect2D};
use crate::tracker::min_cost_assignment;

/// IoU thresholds 0.05, 0.10, .. 0.95.
pub fn alpha_values() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Slack on the per-alpha similarity gate so boxes engineered to sit exactly
/// at a threshold count as matched.
const ALPHA_EPS: f64 = 1e-9;

/// Ground truth and predictions for one query over one sequence, as
/// (frame, identity, image box) triplets in any order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalInput {
    pub gt: Vec<(u64, u64, Rect2D)>,
    pub pred: Vec<(u64, u64, Rect2D)>,
}

/// Metrics at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaMetrics {
    pub alpha: f64,
    pub true_positives: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub hota: f64,
    pub det_a: f64,
    pub det_re: f64,
    pub det_pr: f64,
    pub ass_a: f64,
    pub ass_re: f64,
    pub ass_pr: f64,
    pub loc_a: f64,
}

/// Final metrics: each scalar is the mean of its per-alpha values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub hota: f64,
    pub det_a: f64,
    pub det_re: f64,
    pub det_pr: f64,
    pub ass_a: f64,
    pub ass_re: f64,
    pub ass_pr: f64,
    pub loc_a: f64,
    pub per_alpha: Vec<AlphaMetrics>,
}

struct Side {
    /// frame -> (dense identity index, box), sorted by dense index
    frames: BTreeMap<u64, Vec<(usize, Rect2D)>>,
    /// appearances per dense index
    counts: Vec<u64>,
}

fn build_side(rows: &[(u64, u64, Rect2D)], what: &str) -> Result<Side> {
    let mut index = BTreeMap::new();
    for (_, id, _) in rows {
        let next = index.len();
        index.entry(*id).or_insert(next);
    }
    let mut frames: BTreeMap<u64, Vec<(usize, Rect2D)>> = BTreeMap::new();
    let mut counts = vec![0u64; index.len()];
    for (frame, id, rect) in rows {
        let dense = index[id];
        let entry = frames.entry(*frame).or_default();
        if entry.iter().any(|(d, _)| *d == dense) {
            return Err(Error::Invalid(format!(
                "{what} id {id} appears twice in frame {frame}"
            )));
        }
        entry.push((dense, *rect));
        counts[dense] += 1;
    }
    for list in frames.values_mut() {
        list.sort_by_key(|(d, _)| *d);
    }
    Ok(Side { frames, counts })
}

/// Evaluate one query's predictions against its ground truth.
pub fn evaluate(input: &EvalInput) -> Result<EvalResult> {
    let gt = build_side(&input.gt, "ground-truth")?;
    let pred = build_side(&input.pred, "predicted")?;
    let alphas = alpha_values();

    let mut all_frames: Vec<u64> = gt.frames.keys().copied().collect();
    all_frames.extend(pred.frames.keys().copied());
    all_frames.sort_unstable();
    all_frames.dedup();
    let empty: Vec<(usize, Rect2D)> = Vec::new();

    // Pass 1: soft co-occurrence mass between every gt/pred identity pair,
    // each frame contributing IoU normalized by that pair's local Jaccard
    // denominator.
    let mut potential: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for frame in &all_frames {
        let gts = gt.frames.get(frame).unwrap_or(&empty);
        let prs = pred.frames.get(frame).unwrap_or(&empty);
        if gts.is_empty() || prs.is_empty() {
            continue;
        }
        let sim: Vec<Vec<f64>> = gts
            .iter()
            .map(|(_, g)| prs.iter().map(|(_, p)| iou_2d(g, p)).collect())
            .collect();
        let row_sums: Vec<f64> = sim.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<f64> = (0..prs.len())
            .map(|j| sim.iter().map(|r| r[j]).sum())
            .collect();
        for (i, (gi, _)) in gts.iter().enumerate() {
            for (j, (pj, _)) in prs.iter().enumerate() {
                let denom = row_sums[i] + col_sums[j] - sim[i][j];
                if denom > f64::EPSILON {
                    *potential.entry((*gi, *pj)).or_insert(0.0) += sim[i][j] / denom;
                }
            }
        }
    }
    let galign = |gi: usize, pj: usize| -> f64 {
        let pm = potential.get(&(gi, pj)).copied().unwrap_or(0.0);
        let denom = gt.counts[gi] as f64 + pred.counts[pj] as f64 - pm;
        if denom > 0.0 {
            pm / denom
        } else {
            0.0
        }
    };

    // Pass 2: per-frame assignment maximizing alignment-weighted IoU. The
    // matching itself is threshold-free; each alpha then keeps only the
    // matched pairs whose raw IoU clears it.
    let n_alpha = alphas.len();
    let mut tp = vec![0u64; n_alpha];
    let mut fn_cnt = vec![0u64; n_alpha];
    let mut fp_cnt = vec![0u64; n_alpha];
    let mut loc_sum = vec![0.0f64; n_alpha];
    let mut match_counts: Vec<BTreeMap<(usize, usize), u64>> = vec![BTreeMap::new(); n_alpha];

    for frame in &all_frames {
        let gts = gt.frames.get(frame).unwrap_or(&empty);
        let prs = pred.frames.get(frame).unwrap_or(&empty);
        if gts.is_empty() {
            for fp in fp_cnt.iter_mut() {
                *fp += prs.len() as u64;
            }
            continue;
        }
        if prs.is_empty() {
            for fn_ in fn_cnt.iter_mut() {
                *fn_ += gts.len() as u64;
            }
            continue;
        }
        let sim: Vec<Vec<f64>> = gts
            .iter()
            .map(|(_, g)| prs.iter().map(|(_, p)| iou_2d(g, p)).collect())
            .collect();
        let cost: Vec<Vec<f64>> = gts
            .iter()
            .enumerate()
            .map(|(i, (gi, _))| {
                prs.iter()
                    .enumerate()
                    .map(|(j, (pj, _))| -(galign(*gi, *pj) * sim[i][j]))
                    .collect()
            })
            .collect();
        let assignment = min_cost_assignment(&cost);
        for (a, &alpha) in alphas.iter().enumerate() {
            let mut matched = 0u64;
            for &(i, j) in &assignment.matches {
                if sim[i][j] >= alpha - ALPHA_EPS {
                    matched += 1;
                    loc_sum[a] += sim[i][j];
                    *match_counts[a]
                        .entry((gts[i].0, prs[j].0))
                        .or_insert(0) += 1;
                }
            }
            tp[a] += matched;
            fn_cnt[a] += gts.len() as u64 - matched;
            fp_cnt[a] += prs.len() as u64 - matched;
        }
    }

    let mut per_alpha = Vec::with_capacity(n_alpha);
    for (a, &alpha) in alphas.iter().enumerate() {
        let tp_f = tp[a] as f64;
        let det_re = tp_f / (tp[a] + fn_cnt[a]).max(1) as f64;
        let det_pr = tp_f / (tp[a] + fp_cnt[a]).max(1) as f64;
        let det_a = tp_f / (tp[a] + fn_cnt[a] + fp_cnt[a]).max(1) as f64;
        let mut ass_a = 0.0;
        let mut ass_re = 0.0;
        let mut ass_pr = 0.0;
        for (&(gi, pj), &mc) in &match_counts[a] {
            let mc_f = mc as f64;
            let union = (gt.counts[gi] + pred.counts[pj]).saturating_sub(mc).max(1) as f64;
            ass_a += mc_f * (mc_f / union);
            ass_re += mc_f * (mc_f / gt.counts[gi].max(1) as f64);
            ass_pr += mc_f * (mc_f / pred.counts[pj].max(1) as f64);
        }
        ass_a /= tp[a].max(1) as f64;
        ass_re /= tp[a].max(1) as f64;
        ass_pr /= tp[a].max(1) as f64;
        let loc_a = loc_sum[a].max(1e-10) / tp_f.max(1e-10);
        per_alpha.push(AlphaMetrics {
            alpha,
            true_positives: tp[a],
            false_negatives: fn_cnt[a],
            false_positives: fp_cnt[a],
            hota: (det_a * ass_a).sqrt(),
            det_a,
            det_re,
            det_pr,
            ass_a,
            ass_re,
            ass_pr,
            loc_a,
        });
    }

    let n = n_alpha as f64;
    let mean = |f: fn(&AlphaMetrics) -> f64| per_alpha.iter().map(f).sum::<f64>() / n;
    Ok(EvalResult {
        hota: mean(|m| m.hota),
        det_a: mean(|m| m.det_a),
        det_re: mean(|m| m.det_re),
        det_pr: mean(|m| m.det_pr),
        ass_a: mean(|m| m.ass_a),
        ass_re: mean(|m| m.ass_re),
        ass_pr: mean(|m| m.ass_pr),
        loc_a: mean(|m| m.loc_a),
        per_alpha,
    })
}

/// Per-query results plus their plain averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub per_query: BTreeMap<String, EvalResult>,
    pub mean_hota: f64,
    pub mean_det_a: f64,
    pub mean_ass_a: f64,
    pub mean_loc_a: f64,
}

/// Evaluate a set of queries and average the headline numbers. A query with
/// ground truth but no prediction rows still counts, as all misses.
pub fn evaluate_suite(inputs: &BTreeMap<String, EvalInput>) -> Result<SuiteSummary> {
    if inputs.is_empty() {
        return Err(Error::Invalid("evaluation needs at least one query".into()));
    }
    let mut per_query = BTreeMap::new();
    for (id, input) in inputs {
        per_query.insert(id.clone(), evaluate(input)?);
    }
    let n = per_query.len() as f64;
    Ok(SuiteSummary {
        mean_hota: per_query.values().map(|r| r.hota).sum::<f64>() / n,
        mean_det_a: per_query.values().map(|r| r.det_a).sum::<f64>() / n,
        mean_ass_a: per_query.values().map(|r| r.ass_a).sum::<f64>() / n,
        mean_loc_a: per_query.values().map(|r| r.loc_a).sum::<f64>() / n,
        per_query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Rect2D {
        Rect2D::try_new(x_min, y_min, x_max, y_max).unwrap()
    }

    fn unit_at(x: f64) -> Rect2D {
        rect(x, 0.0, x + 10.0, 10.0)
    }

    #[test]
    fn perfect_tracking_scores_one() {
        let mut gt = Vec::new();
        for frame in 0..3u64 {
            gt.push((frame, 1, unit_at(0.0)));
            gt.push((frame, 2, unit_at(100.0)));
        }
        let input = EvalInput {
            pred: gt.clone(),
            gt,
        };
        let r = evaluate(&input).unwrap();
        assert!((r.hota - 1.0).abs() < 1e-12);
        assert!((r.det_a - 1.0).abs() < 1e-12);
        assert!((r.ass_a - 1.0).abs() < 1e-12);
        assert!((r.loc_a - 1.0).abs() < 1e-12);
        assert_eq!(r.per_alpha.len(), 19);
        assert_eq!(r.per_alpha[0].true_positives, 6);
    }

    #[test]
    fn missing_second_object_halves_detection() {
        // Two ground-truth tracks, predictions cover only the first. Every
        // alpha sees TP=T, FN=T, FP=0 and perfect association.
        let mut gt = Vec::new();
        let mut pred = Vec::new();
        for frame in 0..4u64 {
            gt.push((frame, 1, unit_at(0.0)));
            gt.push((frame, 2, unit_at(100.0)));
            pred.push((frame, 7, unit_at(0.0)));
        }
        let r = evaluate(&EvalInput { gt, pred }).unwrap();
        assert!((r.det_a - 0.5).abs() < 1e-12);
        assert!((r.ass_a - 1.0).abs() < 1e-12);
        assert!((r.hota - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identity_switch_halves_association() {
        // One object, two frames; the predictor covers both frames perfectly
        // but swaps identity between them.
        let gt = vec![(0, 1, unit_at(0.0)), (1, 1, unit_at(0.0))];
        let pred = vec![(0, 10, unit_at(0.0)), (1, 20, unit_at(0.0))];
        let r = evaluate(&EvalInput { gt, pred }).unwrap();
        assert!((r.det_a - 1.0).abs() < 1e-12);
        assert!((r.ass_a - 0.5).abs() < 1e-12);
        assert!((r.hota - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((r.hota - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn empty_inputs_produce_zeros_without_nan() {
        let r = evaluate(&EvalInput::default()).unwrap();
        assert_eq!(r.hota, 0.0);
        assert_eq!(r.det_a, 0.0);
        assert_eq!(r.ass_a, 0.0);
        assert_eq!(r.loc_a, 1.0);
        assert!(r.per_alpha.iter().all(|m| m.hota.is_finite()));
    }

    #[test]
    fn predictions_without_ground_truth_score_zero() {
        let pred = vec![(0, 1, unit_at(0.0)), (1, 1, unit_at(0.0))];
        let r = evaluate(&EvalInput { gt: Vec::new(), pred }).unwrap();
        assert_eq!(r.hota, 0.0);
        assert_eq!(r.det_pr, 0.0);
        assert_eq!(r.per_alpha[0].false_positives, 2);
    }

    #[test]
    fn alpha_gate_counts_half_overlap_up_to_point_five() {
        // IoU exactly 0.5 passes the ten thresholds 0.05..=0.50 and fails
        // the remaining nine.
        let gt = vec![(0, 1, rect(0.0, 0.0, 1.0, 2.0))];
        let pred = vec![(0, 1, rect(0.0, 0.0, 2.0, 2.0))];
        let r = evaluate(&EvalInput { gt, pred }).unwrap();
        assert!((r.hota - 10.0 / 19.0).abs() < 1e-12);
        assert!((r.det_a - 10.0 / 19.0).abs() < 1e-12);
        assert_eq!(r.per_alpha[9].true_positives, 1);
        assert_eq!(r.per_alpha[10].true_positives, 0);
    }

    #[test]
    fn duplicate_id_in_frame_is_rejected() {
        let gt = vec![(0, 1, unit_at(0.0)), (0, 1, unit_at(5.0))];
        assert!(evaluate(&EvalInput { gt, pred: Vec::new() }).is_err());
    }

    #[test]
    fn suite_averages_and_handles_missing_predictions() {
        let perfect = EvalInput {
            gt: vec![(0, 1, unit_at(0.0))],
            pred: vec![(0, 1, unit_at(0.0))],
        };
        let missed = EvalInput {
            gt: vec![(0, 1, unit_at(0.0))],
            pred: Vec::new(),
        };
        let mut inputs = BTreeMap::new();
        inputs.insert("q1".to_string(), perfect);
        inputs.insert("q2".to_string(), missed);
        let suite = evaluate_suite(&inputs).unwrap();
        assert!((suite.per_query["q1"].hota - 1.0).abs() < 1e-12);
        assert_eq!(suite.per_query["q2"].hota, 0.0);
        assert!((suite.mean_hota - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_suite_is_an_error() {
        assert!(evaluate_suite(&BTreeMap::new()).is_err());
    }

    fn small_rows() -> impl Strategy<Value = Vec<(u64, u64, Rect2D)>> {
        proptest::collection::vec(
            (0u64..3, 1u64..4, 0.0f64..30.0, 0.0f64..30.0),
            0..6,
        )
        .prop_map(|rows| {
            let mut seen = std::collections::BTreeSet::new();
            rows.into_iter()
                .filter(|(f, id, _, _)| seen.insert((*f, *id)))
                .map(|(f, id, x, y)| (f, id, rect(x, y, x + 8.0, y + 8.0)))
                .collect()
        })
    }

    proptest! {
        /// All metrics stay finite and inside [0, 1] for arbitrary inputs.
        #[test]
        fn metrics_are_bounded(gt in small_rows(), pred in small_rows()) {
            let r = evaluate(&EvalInput { gt, pred }).unwrap();
            for v in [r.hota, r.det_a, r.det_re, r.det_pr, r.ass_a, r.ass_re, r.ass_pr, r.loc_a] {
                prop_assert!(v.is_finite());
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v), "{v}");
            }
        }

        /// Evaluating predictions against themselves is always perfect.
        #[test]
        fn self_evaluation_is_perfect(rows in small_rows()) {
            prop_assume!(!rows.is_empty());
            let r = evaluate(&EvalInput { gt: rows.clone(), pred: rows }).unwrap();
            prop_assert!((r.hota - 1.0).abs() < 1e-12);
        }
    }
}
