//! Training objectives: hard-negative-mined cross-entropy on TS, masked L1
//! on TCBP, border-masked L1 on TCD, and their weighted total.
//!
//! These validate objective values; no gradients here.

use crate::labelgen::{LabelSet, RasterMap};

/// Probability clamp for the cross-entropy.
pub const EPS: f64 = 1e-7;

/// Negatives selected per positive in hard negative mining.
pub const NEG_PER_POS: usize = 3;

/// Hardest negatives used when the image has no positive pixel.
pub const ZERO_POS_FALLBACK: usize = 256;

/// Task balancing weights.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub lambda_tcbp: f64,
    pub lambda_tcd: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_tcbp: 5.0,
            lambda_tcd: 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_ts: f64,
    pub l_tcbp: f64,
    pub l_tcd: f64,
    pub total: f64,
    pub n_pos: usize,
    pub n_neg_selected: usize,
}

/// Encode a [-1,1] direction component to the (0,1) sigmoid range.
pub fn encode_unit(v: f32) -> f32 {
    (v + 1.0) / 2.0
}

/// Decode a (0,1) prediction back to [-1,1] ("multiply by 2 and subtract 1").
pub fn decode_unit(s: f32) -> f32 {
    2.0 * s - 1.0
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(EPS, 1.0 - EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Cross-entropy over all positives plus the 3·n_pos hardest negatives
/// (256 hardest when there are no positives). Ignore-mask pixels are
/// excluded before selection. Returns (value, n_pos, n_neg_selected).
pub fn loss_ts(pred: &RasterMap, gt: &LabelSet) -> (f64, usize, usize) {
    assert_eq!(pred.width, gt.ts.width);
    assert_eq!(pred.height, gt.ts.height);
    let ign = gt.ignore.channel(0);
    let ts = gt.ts.channel(0);
    let pr = pred.channel(0);

    let mut pos_sum = 0.0;
    let mut n_pos = 0usize;
    let mut neg: Vec<(f64, usize)> = Vec::new();
    for i in 0..ts.len() {
        if ign[i] != 0.0 {
            continue;
        }
        let l = bce(pr[i] as f64, ts[i] as f64);
        if ts[i] >= 0.5 {
            pos_sum += l;
            n_pos += 1;
        } else {
            neg.push((l, i));
        }
    }
    let want = if n_pos > 0 {
        NEG_PER_POS * n_pos
    } else {
        ZERO_POS_FALLBACK
    };
    let take = want.min(neg.len());
    // hardest first; ties broken by pixel index
    neg.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let neg_sum: f64 = neg[..take].iter().map(|(l, _)| l).sum();
    let denom = n_pos + take;
    let value = if denom == 0 {
        0.0
    } else {
        (pos_sum + neg_sum) / denom as f64
    };
    (value, n_pos, take)
}

/// L1 on TCBP over text pixels only (ignore pixels excluded).
pub fn loss_tcbp(pred: &RasterMap, gt: &LabelSet) -> f64 {
    let ts = gt.ts.channel(0);
    let ign = gt.ignore.channel(0);
    let g = gt.tcbp.channel(0);
    let p = pred.channel(0);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..ts.len() {
        if ign[i] != 0.0 || ts[i] < 0.5 {
            continue;
        }
        num += (p[i] as f64 - g[i] as f64).abs();
        den += 1.0;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcdMaskSource {
    /// Training rule: mask by the *predicted* TCBP.
    PredictedTcbp,
    /// Deterministic variant for testing: mask by the ground-truth TCBP.
    GroundTruthTcbp,
}

/// Border-masked L1 on the direction field: mask = text ∧ (TCBP < γ),
/// summed over both vector components, normalized by the masked pixel
/// count. `pred_u` must already be decoded to [-1,1].
pub fn loss_tcd(
    pred_u: &RasterMap,
    gt: &LabelSet,
    pred_tcbp: &RasterMap,
    gamma: f32,
    mask_source: TcdMaskSource,
) -> f64 {
    assert_eq!(pred_u.channels, 2);
    let ts = gt.ts.channel(0);
    let ign = gt.ignore.channel(0);
    let mask_map = match mask_source {
        TcdMaskSource::PredictedTcbp => pred_tcbp.channel(0),
        TcdMaskSource::GroundTruthTcbp => gt.tcbp.channel(0),
    };
    let (pu, pv) = (pred_u.channel(0), pred_u.channel(1));
    let (gu, gv) = (gt.tcd.channel(0), gt.tcd.channel(1));
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..ts.len() {
        if ign[i] != 0.0 || ts[i] < 0.5 || mask_map[i] >= gamma {
            continue;
        }
        num += (pu[i] as f64 - gu[i] as f64).abs() + (pv[i] as f64 - gv[i] as f64).abs();
        den += 1.0;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Weighted total: l_ts + λ₁·l_tcbp + λ₂·l_tcd.
pub fn total_loss(
    l_ts: f64,
    l_tcbp: f64,
    l_tcd: f64,
    n_pos: usize,
    n_neg_selected: usize,
    weights: &LossWeights,
) -> LossReport {
    LossReport {
        l_ts,
        l_tcbp,
        l_tcd,
        total: l_ts + weights.lambda_tcbp * l_tcbp + weights.lambda_tcd * l_tcd,
        n_pos,
        n_neg_selected,
    }
}

/// Full loss evaluation of a predicted bundle against ground truth.
/// `pred_tcd` is taken in decoded [-1,1] form.
pub fn evaluate(
    pred_ts: &RasterMap,
    pred_tcbp: &RasterMap,
    pred_tcd: &RasterMap,
    gt: &LabelSet,
    gamma: f32,
    weights: &LossWeights,
) -> LossReport {
    let (l_ts, n_pos, n_neg) = loss_ts(pred_ts, gt);
    let l_tcbp = loss_tcbp(pred_tcbp, gt);
    let l_tcd = loss_tcd(pred_tcd, gt, pred_tcbp, gamma, TcdMaskSource::PredictedTcbp);
    total_loss(l_ts, l_tcbp, l_tcd, n_pos, n_neg, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelgen::{generate_labels, RasterMap};
    use crate::geometry::{Point, TextPolygon};
    use approx::assert_abs_diff_eq;

    fn rect_labels(w: usize, h: usize) -> LabelSet {
        let poly = TextPolygon::quad(
            [
                Point::new(4.0, 4.0),
                Point::new(40.0, 4.0),
                Point::new(40.0, 20.0),
                Point::new(4.0, 20.0),
            ],
            false,
        )
        .unwrap();
        generate_labels(&[poly], w, h)
    }

    fn perfect_ts_pred(gt: &LabelSet) -> RasterMap {
        let eps = 1e-7f32;
        RasterMap {
            width: gt.ts.width,
            height: gt.ts.height,
            channels: 1,
            data: gt
                .ts
                .channel(0)
                .iter()
                .map(|&v| if v >= 0.5 { 1.0 - eps } else { eps })
                .collect(),
        }
    }

    #[test]
    fn loss_ts_zero_at_ground_truth() {
        let gt = rect_labels(128, 64);
        let (l, n_pos, n_neg) = loss_ts(&perfect_ts_pred(&gt), &gt);
        assert!(l < 1e-5, "loss {l}");
        assert!(n_pos > 0);
        assert_eq!(n_neg, 3 * n_pos);
    }

    #[test]
    fn loss_ts_fallback_on_empty_image() {
        let gt = generate_labels(&[], 64, 32);
        let pred = RasterMap {
            width: 64,
            height: 32,
            channels: 1,
            data: vec![0.5; 64 * 32],
        };
        let (l, n_pos, n_neg) = loss_ts(&pred, &gt);
        assert_eq!(n_pos, 0);
        assert_eq!(n_neg, 256);
        assert_abs_diff_eq!(l, std::f64::consts::LN_2, epsilon = 1e-9);
    }

    #[test]
    fn hard_negative_selection_dominates_unselected() {
        let gt = rect_labels(128, 64);
        // noisy prediction
        let mut pred = perfect_ts_pred(&gt);
        for (i, v) in pred.data.iter_mut().enumerate() {
            *v = (*v + ((i * 2654435761) % 1000) as f32 / 3000.0).clamp(1e-7, 1.0 - 1e-7);
        }
        let (_, n_pos, n_neg) = loss_ts(&pred, &gt);
        assert_eq!(n_neg, 3 * n_pos);

        // recompute per-pixel losses and verify the selection boundary
        let ts = gt.ts.channel(0);
        let ign = gt.ignore.channel(0);
        let mut neg: Vec<f64> = Vec::new();
        for i in 0..ts.len() {
            if ign[i] != 0.0 || ts[i] >= 0.5 {
                continue;
            }
            neg.push(bce(pred.data[i] as f64, 0.0));
        }
        neg.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let selected_min = neg[n_neg - 1];
        let unselected_max = neg[n_neg];
        assert!(selected_min >= unselected_max);
    }

    #[test]
    fn loss_tcbp_offsets_and_empty() {
        let gt = rect_labels(64, 32);
        assert_eq!(loss_tcbp(&gt.tcbp, &gt), 0.0);

        let mut pred = gt.tcbp.clone();
        for v in pred.data.iter_mut() {
            *v += 0.1;
        }
        assert_abs_diff_eq!(loss_tcbp(&pred, &gt), 0.1, epsilon = 1e-6);

        let empty = generate_labels(&[], 64, 32);
        assert_eq!(loss_tcbp(&pred, &empty), 0.0);
    }

    #[test]
    fn loss_tcbp_ignores_non_text_pixels() {
        let gt = rect_labels(64, 32);
        let mut pred = gt.tcbp.clone();
        let base = loss_tcbp(&pred, &gt);
        let ts = gt.ts.channel(0).to_vec();
        for (i, v) in pred.data.iter_mut().enumerate() {
            if ts[i] < 0.5 {
                *v = 0.77;
            }
        }
        assert_eq!(loss_tcbp(&pred, &gt), base);
    }

    #[test]
    fn loss_tcd_basic() {
        let gt = rect_labels(64, 32);
        // perfect prediction, gt-tcbp as predicted tcbp
        assert_eq!(
            loss_tcd(&gt.tcd, &gt, &gt.tcbp, 0.6, TcdMaskSource::PredictedTcbp),
            0.0
        );

        // predicted TCBP ≥ γ everywhere: empty mask, zero loss
        let ones = RasterMap {
            width: 64,
            height: 32,
            channels: 1,
            data: vec![1.0; 64 * 32],
        };
        let mut wrong = gt.tcd.clone();
        for v in wrong.data.iter_mut() {
            *v = -*v;
        }
        assert_eq!(
            loss_tcd(&wrong, &gt, &ones, 0.6, TcdMaskSource::PredictedTcbp),
            0.0
        );
    }

    #[test]
    fn loss_tcd_single_pixel_l1() {
        // 1x1 text pixel, gt u=(0,1), pred u=(1,0)
        let mk = |u: f32, v: f32| RasterMap {
            width: 1,
            height: 1,
            channels: 2,
            data: vec![u, v],
        };
        let gt = LabelSet {
            ts: RasterMap {
                width: 1,
                height: 1,
                channels: 1,
                data: vec![1.0],
            },
            tcbp: RasterMap::zeros(1, 1, 1),
            tcd: mk(0.0, 1.0),
            ignore: RasterMap::zeros(1, 1, 1),
            instance_gt: crate::grouping::InstanceMap::zeros(1, 1),
        };
        let l = loss_tcd(
            &mk(1.0, 0.0),
            &gt,
            &RasterMap::zeros(1, 1, 1),
            0.6,
            TcdMaskSource::PredictedTcbp,
        );
        assert_abs_diff_eq!(l, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn total_weighting() {
        let w = LossWeights::default();
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0, 0, &w).total, 0.0);
        assert_abs_diff_eq!(total_loss(1.0, 1.0, 1.0, 1, 3, &w).total, 8.5);
        assert_abs_diff_eq!(total_loss(0.2, 0.1, 0.0, 1, 3, &w).total, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn codec_roundtrip() {
        for k in 0..=20 {
            let v = -1.0 + k as f32 * 0.1;
            assert_abs_diff_eq!(decode_unit(encode_unit(v)), v, epsilon = 1e-6);
        }
    }
}
