//! Polygon-IoU detection evaluation: greedy score-ordered matching against
//! ground truth with DO-NOT-CARE handling, aggregated into
//! precision/recall/F-measure.

use crate::detect::Detection;
use crate::geometry::Point;
use geo::{Area, BooleanOps, LineString, Polygon as GeoPolygon};

/// Default IoU threshold for a match.
pub const DEFAULT_IOU_MIN: f64 = 0.5;

/// One ground-truth region for evaluation.
#[derive(Debug, Clone)]
pub struct GtRegion {
    pub polygon: Vec<Point>,
    pub ignore: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ImageTally {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Detections excluded because they fell on DO-NOT-CARE regions.
    pub ignored_dets: usize,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub per_image: Vec<ImageTally>,
}

fn to_geo(points: &[Point]) -> GeoPolygon<f64> {
    GeoPolygon::new(
        LineString::from(points.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>()),
        vec![],
    )
}

/// Area IoU of two simple polygons via polygon clipping. Degenerate inputs
/// give 0.
pub fn polygon_iou(a: &[Point], b: &[Point]) -> f64 {
    if a.len() < 3 || b.len() < 3 {
        return 0.0;
    }
    let ga = to_geo(a);
    let gb = to_geo(b);
    if ga.unsigned_area() < 1e-12 || gb.unsigned_area() < 1e-12 {
        return 0.0;
    }
    let inter = ga.intersection(&gb).unsigned_area();
    let union = ga.union(&gb).unsigned_area();
    if union < 1e-12 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Match one image's detections against its ground truth.
///
/// Detections are visited in descending score (ties by input order); each
/// claims the unmatched non-ignore GT with highest IoU ≥ `iou_min`.
/// Unmatched detections overlapping a DO-NOT-CARE region at `iou_min` are
/// excluded from both TP and FP.
pub fn match_image(dets: &[Detection], gts: &[GtRegion], iou_min: f64) -> ImageTally {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut gt_matched = vec![false; gts.len()];
    let mut tally = ImageTally::default();
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt.ignore || gt_matched[gi] {
                continue;
            }
            let iou = polygon_iou(&det.polygon, &gt.polygon);
            if iou >= iou_min && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, _)) => {
                gt_matched[gi] = true;
                tally.tp += 1;
            }
            None => {
                let on_ignore = gts.iter().any(|gt| {
                    gt.ignore && polygon_iou(&det.polygon, &gt.polygon) >= iou_min
                });
                if on_ignore {
                    tally.ignored_dets += 1;
                } else {
                    tally.fp += 1;
                }
            }
        }
    }
    tally.fn_ = gts
        .iter()
        .enumerate()
        .filter(|(gi, gt)| !gt.ignore && !gt_matched[*gi])
        .count();
    tally
}

/// Aggregate tallies into dataset-level precision/recall/F.
pub fn aggregate(per_image: Vec<ImageTally>) -> EvalResult {
    let tp: usize = per_image.iter().map(|t| t.tp).sum();
    let fp: usize = per_image.iter().map(|t| t.fp).sum();
    let fn_: usize = per_image.iter().map(|t| t.fn_).sum();
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    EvalResult {
        precision,
        recall,
        f_measure,
        tp,
        fp,
        fn_,
        per_image,
    }
}

/// Single-image convenience wrapper.
pub fn match_and_score(dets: &[Detection], gts: &[GtRegion], iou_min: f64) -> EvalResult {
    aggregate(vec![match_image(dets, gts, iou_min)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sq(x0: f64, y0: f64, s: f64) -> Vec<Point> {
        vec![
            Point::new(x0, y0),
            Point::new(x0 + s, y0),
            Point::new(x0 + s, y0 + s),
            Point::new(x0, y0 + s),
        ]
    }

    #[test]
    fn iou_identical_disjoint_overlap() {
        let a = sq(0.0, 0.0, 1.0);
        assert_abs_diff_eq!(polygon_iou(&a, &a), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(polygon_iou(&a, &sq(5.0, 5.0, 1.0)), 0.0, epsilon = 1e-12);
        // half-overlapping unit squares: 0.5 / 1.5
        let b = sq(0.5, 0.0, 1.0);
        assert_abs_diff_eq!(polygon_iou(&a, &b), 1.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn iou_symmetric_and_degenerate() {
        let a = sq(0.0, 0.0, 2.0);
        let b = sq(1.0, 1.0, 2.0);
        assert_abs_diff_eq!(polygon_iou(&a, &b), polygon_iou(&b, &a), epsilon = 1e-12);
        let line = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        assert_eq!(polygon_iou(&a, &line), 0.0);
    }

    fn det(poly: Vec<Point>, score: f32) -> Detection {
        Detection {
            polygon: poly,
            score,
        }
    }

    #[test]
    fn perfect_detections() {
        let gts = vec![
            GtRegion {
                polygon: sq(0.0, 0.0, 10.0),
                ignore: false,
            },
            GtRegion {
                polygon: sq(20.0, 0.0, 10.0),
                ignore: false,
            },
        ];
        let dets = vec![det(sq(0.0, 0.0, 10.0), 0.9), det(sq(20.0, 0.0, 10.0), 0.8)];
        let r = match_and_score(&dets, &gts, DEFAULT_IOU_MIN);
        assert_eq!((r.tp, r.fp, r.fn_), (2, 0, 0));
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.f_measure, 1.0);
    }

    #[test]
    fn duplicate_counts_as_fp() {
        let gts = vec![GtRegion {
            polygon: sq(0.0, 0.0, 10.0),
            ignore: false,
        }];
        let dets = vec![det(sq(0.0, 0.0, 10.0), 0.9), det(sq(0.0, 0.0, 10.0), 0.8)];
        let r = match_and_score(&dets, &gts, DEFAULT_IOU_MIN);
        assert_eq!((r.tp, r.fp), (1, 1));
        assert_abs_diff_eq!(r.precision, 0.5);
        assert_abs_diff_eq!(r.recall, 1.0);
        assert_abs_diff_eq!(r.f_measure, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn detection_on_ignore_region_is_excluded() {
        let gts = vec![
            GtRegion {
                polygon: sq(0.0, 0.0, 10.0),
                ignore: true,
            },
            GtRegion {
                polygon: sq(20.0, 0.0, 10.0),
                ignore: false,
            },
        ];
        let dets = vec![det(sq(0.0, 0.0, 10.0), 0.9)];
        let r = match_and_score(&dets, &gts, DEFAULT_IOU_MIN);
        assert_eq!((r.tp, r.fp, r.fn_), (0, 0, 1));
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.per_image[0].ignored_dets, 1);
    }
}
