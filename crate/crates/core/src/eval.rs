//! Instance-segmentation metrics: mask IoU, greedy matching, recall curves,
//! AR@N, AP and non-maximum suppression.
//!
//! Proposals are always visited in descending score with ties broken by
//! ascending input index. A proposal claims the unclaimed ground truth with
//! the highest IoU at or above the threshold (lowest index on ties).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::grid::{BBox, BinaryMask, BoxProposal};
use crate::{Error, Result};

/// Box-stage NMS threshold.
pub const BOX_NMS_IOU: f64 = 0.7;
/// Proposals kept after box-stage NMS.
pub const BOX_NMS_TOP_K: usize = 300;
/// Mask-stage NMS threshold.
pub const MASK_NMS_IOU: f64 = 0.5;
pub const DEFAULT_AP_IOUS: [f64; 2] = [0.5, 0.7];
pub const DEFAULT_AR_NS: [usize; 3] = [10, 100, 1000];

/// `0.50, 0.55, ..., 0.95`, each computed as `(50 + 5i) / 100`.
pub fn ar_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// `|a & b| / |a | b|`; 1 when both are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.expect_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// IoU of two masks positioned at different image offsets.
fn offset_mask_iou(a: &BinaryMask, ao: (i64, i64), b: &BinaryMask, bo: (i64, i64)) -> f64 {
    let fa = BBox::full(a.width(), a.height()).translate(ao.0, ao.1);
    let fb = BBox::full(b.width(), b.height()).translate(bo.0, bo.1);
    let mut inter = 0usize;
    if let Some(ov) = fa.intersect(&fb) {
        for y in ov.y0..ov.y1 {
            for x in ov.x0..ov.x1 {
                let va = a.get((x - ao.0) as usize, (y - ao.1) as usize);
                let vb = b.get((x - bo.0) as usize, (y - bo.1) as usize);
                inter += (va && vb) as usize;
            }
        }
    }
    let union = a.area() + b.area() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mask IoU of two proposals, honouring each mask's anchor.
pub fn proposal_mask_iou(a: &BoxProposal, b: &BoxProposal) -> Result<f64> {
    match (&a.mask, &b.mask) {
        (Some(ma), Some(mb)) => Ok(offset_mask_iou(ma, a.mask_origin(), mb, b.mask_origin())),
        _ => Err(Error::param("mask IoU requested for a proposal without a mask")),
    }
}

/// Indices sorted by descending score, ties by ascending index.
pub fn score_order(proposals: &[BoxProposal]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&i, &j| {
        proposals[j]
            .score
            .total_cmp(&proposals[i].score)
            .then(i.cmp(&j))
    });
    order
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// `(proposal index, ground-truth index, iou)` in claiming order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gts: Vec<usize>,
}

fn check_gts(gts: &[BinaryMask]) -> Result<(usize, usize)> {
    let first = gts.first().ok_or(Error::EmptyGroundTruth)?;
    for g in &gts[1..] {
        first.expect_dims(g)?;
    }
    Ok((first.width(), first.height()))
}

/// Row `i` holds the IoU of proposal `i` against every ground truth.
pub fn iou_matrix(proposals: &[BoxProposal], gts: &[BinaryMask]) -> Result<Vec<Vec<f64>>> {
    let (w, h) = check_gts(gts)?;
    proposals
        .par_iter()
        .map(|p| {
            let mask = p
                .canvas_mask(w, h)?
                .ok_or_else(|| Error::param(format!("proposal {} has no mask", p.id)))?;
            gts.iter().map(|g| mask_iou(&mask, g)).collect()
        })
        .collect()
}

fn greedy_from_matrix(order: &[usize], ious: &[Vec<f64>], n_gts: usize, thresh: f64) -> MatchResult {
    let mut claimed = vec![false; n_gts];
    let mut pairs = Vec::new();
    for &p in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, &iou) in ious[p].iter().enumerate() {
            if claimed[g] || iou < thresh {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, iou)) = best {
            claimed[g] = true;
            pairs.push((p, g, iou));
        }
    }
    let unmatched_gts = (0..n_gts).filter(|&g| !claimed[g]).collect();
    MatchResult {
        pairs,
        unmatched_gts,
    }
}

/// Greedy score-ordered one-to-one matching at `iou_thresh`.
pub fn greedy_match(
    proposals: &[BoxProposal],
    gts: &[BinaryMask],
    iou_thresh: f64,
) -> Result<MatchResult> {
    let ious = iou_matrix(proposals, gts)?;
    Ok(greedy_from_matrix(&score_order(proposals), &ious, gts.len(), iou_thresh))
}

/// `(threshold, recall)` for each threshold; thresholds must be ascending.
pub fn recall_curve(
    proposals: &[BoxProposal],
    gts: &[BinaryMask],
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::param("recall thresholds must be sorted ascending"));
    }
    let ious = iou_matrix(proposals, gts)?;
    let order = score_order(proposals);
    Ok(thresholds
        .iter()
        .map(|&t| {
            let m = greedy_from_matrix(&order, &ious, gts.len(), t);
            (t, m.pairs.len() as f64 / gts.len() as f64)
        })
        .collect())
}

/// The `n` best-scoring proposals, in score order.
pub fn top_n(proposals: &[BoxProposal], n: usize) -> Vec<BoxProposal> {
    score_order(proposals)
        .into_iter()
        .take(n)
        .map(|i| proposals[i].clone())
        .collect()
}

/// Recall averaged over the ten thresholds `0.5:0.05:0.95`, using the `n`
/// highest-scoring proposals.
pub fn average_recall(proposals: &[BoxProposal], gts: &[BinaryMask], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("N must be >= 1"));
    }
    let curve = recall_curve(&top_n(proposals, n), gts, &ar_thresholds())?;
    Ok(curve.iter().map(|&(_, r)| r).sum::<f64>() / curve.len() as f64)
}

/// Area under the precision-recall curve with the non-increasing precision
/// envelope (all-points interpolation).
pub fn average_precision(
    proposals: &[BoxProposal],
    gts: &[BinaryMask],
    iou_thresh: f64,
) -> Result<f64> {
    let ious = iou_matrix(proposals, gts)?;
    let order = score_order(proposals);
    let matched = greedy_from_matrix(&order, &ious, gts.len(), iou_thresh);
    let mut is_tp = vec![false; proposals.len()];
    for &(p, _, _) in &matched.pairs {
        is_tp[p] = true;
    }
    Ok(ap_from_ranked(
        &order.iter().map(|&p| is_tp[p]).collect::<Vec<_>>(),
        gts.len(),
    ))
}

/// AP of a ranked true/false-positive sequence against `n_gts` positives.
pub fn ap_from_ranked(ranked_tp: &[bool], n_gts: usize) -> f64 {
    let mut recall = vec![0.0];
    let mut precision = vec![0.0];
    let mut tp = 0usize;
    for (i, &hit) in ranked_tp.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / n_gts as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .filter(|&i| recall[i] != recall[i - 1])
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}

/// Greedy suppression: a proposal survives unless it overlaps an earlier
/// survivor with IoU above `iou_thresh`. Survivors come out in score order.
pub fn nms(proposals: &[BoxProposal], iou_thresh: f64, use_masks: bool) -> Result<Vec<BoxProposal>> {
    let mut kept: Vec<&BoxProposal> = Vec::new();
    for i in score_order(proposals) {
        let cand = &proposals[i];
        let mut suppressed = false;
        for k in &kept {
            let overlap = if use_masks {
                proposal_mask_iou(cand, k)?
            } else {
                cand.bbox.iou(&k.bbox)
            };
            if overlap > iou_thresh {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(cand);
        }
    }
    Ok(kept.into_iter().cloned().collect())
}

/// NMS followed by keeping at most `top_k` survivors.
pub fn nms_top_k(
    proposals: &[BoxProposal],
    iou_thresh: f64,
    use_masks: bool,
    top_k: usize,
) -> Result<Vec<BoxProposal>> {
    let mut kept = nms(proposals, iou_thresh, use_masks)?;
    kept.truncate(top_k);
    Ok(kept)
}

/// Ground-truth area bucket `[min, max)` in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaRange {
    pub min: usize,
    pub max: usize,
}

impl AreaRange {
    pub const ALL: AreaRange = AreaRange {
        min: 0,
        max: usize::MAX,
    };

    /// Small / medium / large split at `small_max` and `medium_max`.
    pub fn buckets(small_max: usize, medium_max: usize) -> [(&'static str, AreaRange); 3] {
        [
            ("small", AreaRange { min: 0, max: small_max }),
            ("medium", AreaRange { min: small_max, max: medium_max }),
            ("large", AreaRange { min: medium_max, max: usize::MAX }),
        ]
    }

    pub fn contains(&self, area: usize) -> bool {
        area >= self.min && area < self.max
    }
}

pub fn filter_gts_by_area(gts: &[BinaryMask], range: AreaRange) -> Vec<BinaryMask> {
    gts.iter().filter(|g| range.contains(g.area())).cloned().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub ar_ns: Vec<usize>,
    pub ap_ious: Vec<f64>,
    pub curve_thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ar_ns: DEFAULT_AR_NS.to_vec(),
            ap_ious: DEFAULT_AP_IOUS.to_vec(),
            curve_thresholds: ar_thresholds(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub recall_curve: Vec<(f64, f64)>,
    pub ar_at_n: BTreeMap<usize, f64>,
    /// `(iou threshold, AP)` in configuration order.
    pub ap_at: Vec<(f64, f64)>,
    pub num_proposals: usize,
    pub num_gts: usize,
}

pub fn evaluate(proposals: &[BoxProposal], gts: &[BinaryMask], config: &EvalConfig) -> Result<EvalReport> {
    check_gts(gts)?;
    let recall_curve = recall_curve(proposals, gts, &config.curve_thresholds)?;
    let ar_at_n = config
        .ar_ns
        .iter()
        .map(|&n| Ok((n, average_recall(proposals, gts, n)?)))
        .collect::<Result<_>>()?;
    let ap_at = config
        .ap_ious
        .iter()
        .map(|&t| Ok((t, average_precision(proposals, gts, t)?)))
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        recall_curve,
        ar_at_n,
        ap_at,
        num_proposals: proposals.len(),
        num_gts: gts.len(),
    })
}

impl EvalReport {
    pub fn recall_is_monotone(&self) -> bool {
        let mut sorted = self.recall_curve.clone();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        sorted.windows(2).all(|w| w[1].1 <= w[0].1)
    }
}
