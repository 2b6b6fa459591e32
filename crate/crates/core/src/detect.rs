//! Inference pipeline: predicted maps -> peak extraction -> grouping ->
//! fitted output polygons with scores.
//!
//! Polygon fitting is a post-step on the instance raster: quad mode fits a
//! minimum-area rotated rectangle (rotating calipers over the convex hull
//! of the traced boundary), curved mode simplifies the traced boundary.

use crate::geometry::Point;
use crate::grouping::{
    extract_peaks, group_parallel, next_from_tcbp, next_from_tcd, score_instances,
    text_mask_from_ts, GraphSource, GroupConfig, InstanceMap,
};
use crate::labelgen::RasterMap;

/// Instances smaller than this many pixels are dropped.
pub const MIN_INSTANCE_AREA: usize = 10;

/// Max-deviation tolerance (px) for curved-contour simplification.
pub const SIMPLIFY_TOLERANCE: f64 = 0.6;

/// Vertex cap for curved-mode output polygons.
pub const MAX_CURVED_VERTICES: usize = 14;

fn centroid_of(ring: &[Point]) -> Point {
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..ring.len() {
        let p = ring[i];
        let q = ring[(i + 1) % ring.len()];
        let w = p.cross(q);
        a2 += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    if a2.abs() < 1e-12 {
        return ring[0];
    }
    Point::new(cx / (3.0 * a2), cy / (3.0 * a2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectMode {
    Quad,
    Curved,
}

/// One output text region.
#[derive(Debug, Clone)]
pub struct Detection {
    pub polygon: Vec<Point>,
    /// Mean TS over the instance pixels.
    pub score: f32,
}

/// Trace the outer boundary of the region `inside` as a closed polygon on
/// the pixel-corner lattice, clockwise in image coordinates. `start` must
/// be the topmost-then-leftmost inside pixel. Vertices are emitted at
/// direction changes, so the polygon area equals the traced pixel area.
pub fn trace_boundary(inside: impl Fn(isize, isize) -> bool, start: (usize, usize)) -> Vec<Point> {
    // directions: 0=E, 1=S, 2=W, 3=N (y down)
    const STEP: [(isize, isize); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
    // cells ahead of a vertex, relative to travel direction: (right, left)
    fn ahead(d: usize, vx: isize, vy: isize) -> ((isize, isize), (isize, isize)) {
        match d {
            0 => ((vx, vy), (vx, vy - 1)),
            1 => ((vx - 1, vy), (vx, vy)),
            2 => ((vx - 1, vy - 1), (vx - 1, vy)),
            _ => ((vx, vy - 1), (vx - 1, vy - 1)),
        }
    }

    let start_v = (start.0 as isize, start.1 as isize);
    let mut v = start_v;
    let mut d = 0usize; // east along the top edge, inside on the right
    let mut out = vec![Point::new(v.0 as f64, v.1 as f64)];
    loop {
        let (sx, sy) = STEP[d];
        v = (v.0 + sx, v.1 + sy);
        if v == start_v && d == 0 {
            break;
        }
        let (r, l) = ahead(d, v.0, v.1);
        let right_in = inside(r.0, r.1);
        let left_in = inside(l.0, l.1);
        let nd = if left_in {
            (d + 3) % 4 // turn left (also the checker case: keep 4-connected)
        } else if right_in {
            d // straight on
        } else {
            (d + 1) % 4 // turn right
        };
        if nd != d {
            out.push(Point::new(v.0 as f64, v.1 as f64));
            d = nd;
        }
        if v == start_v && d == 0 {
            break;
        }
    }
    out
}

/// Convex hull (monotone chain), counterclockwise in y-up / clockwise on
/// screen. Collinear points are dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
    });
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return pts;
    }
    let turn = |chain: &[Point], p: Point| -> f64 {
        let a = chain[chain.len() - 2];
        let b = chain[chain.len() - 1];
        b.sub(a).cross(p.sub(a))
    };
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && turn(&lower, p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(&upper, p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Minimum-area rotated rectangle over the convex hull of `points`
/// (rotating calipers: one rectangle side is flush with a hull edge).
pub fn min_area_rect(points: &[Point]) -> Option<[Point; 4]> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return None;
    }
    let mut best_area = f64::INFINITY;
    let mut best: Option<[Point; 4]> = None;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let Some(dir) = b.sub(a).normalized() else {
            continue;
        };
        let nrm = Point::new(-dir.y, dir.x);
        let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &p in &hull {
            let u = p.dot(dir);
            let v = p.dot(nrm);
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let area = (umax - umin) * (vmax - vmin);
        if area < best_area {
            best_area = area;
            let corner = |u: f64, v: f64| dir.scale(u).add(nrm.scale(v));
            best = Some([
                corner(umin, vmin),
                corner(umax, vmin),
                corner(umax, vmax),
                corner(umin, vmax),
            ]);
        }
    }
    best
}

fn dp_simplify_open(pts: &[Point], tol: f64, out: &mut Vec<Point>) {
    if pts.len() <= 2 {
        out.extend_from_slice(&pts[..pts.len().saturating_sub(1)]);
        return;
    }
    let a = pts[0];
    let b = pts[pts.len() - 1];
    let ab = b.sub(a);
    let len = ab.norm();
    let mut worst = 0.0;
    let mut idx = 0;
    for (i, &p) in pts.iter().enumerate().skip(1).take(pts.len() - 2) {
        let d = if len < 1e-12 {
            p.dist(a)
        } else {
            (ab.cross(p.sub(a)) / len).abs()
        };
        if d > worst {
            worst = d;
            idx = i;
        }
    }
    if worst <= tol {
        out.push(a);
    } else {
        dp_simplify_open(&pts[..=idx], tol, out);
        dp_simplify_open(&pts[idx..], tol, out);
    }
}

/// Douglas-Peucker on a closed ring: split at the vertex farthest from
/// vertex 0, simplify both chains.
pub fn simplify_ring(ring: &[Point], tol: f64) -> Vec<Point> {
    if ring.len() <= 4 {
        return ring.to_vec();
    }
    let far = ring
        .iter()
        .enumerate()
        .max_by(|a, b| {
            a.1.dist(ring[0])
                .partial_cmp(&b.1.dist(ring[0]))
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let mut closed: Vec<Point> = ring.to_vec();
    closed.push(ring[0]);
    let mut out = Vec::new();
    dp_simplify_open(&closed[..=far], tol, &mut out);
    dp_simplify_open(&closed[far..], tol, &mut out);
    out
}

/// Sum of squared distances from the ring points strictly between `i` and
/// `j` (cyclic indices) to the chord `ring[i] -> ring[j]`.
fn gap_deviation(ring: &[Point], i: usize, j: usize) -> f64 {
    let n = ring.len();
    let a = ring[i];
    let b = ring[j];
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    let mut acc = 0.0;
    let mut k = (i + 1) % n;
    while k != j {
        let ap = ring[k].sub(a);
        let d2 = if len2 < 1e-12 {
            ap.dot(ap)
        } else {
            let c = ab.cross(ap);
            c * c / len2
        };
        acc += d2;
        k = (k + 1) % n;
    }
    acc
}

/// Number of ring steps from `i` forward to `j` (cyclic).
fn cyclic_dist(n: usize, i: usize, j: usize) -> usize {
    (j + n - i) % n
}

/// Slide each selected vertex along the ring, by coordinate descent, to
/// minimize the area between the fitted chords and the boundary. The
/// Douglas-Peucker pass picks deviation extrema, which on curved sides can
/// sit far from the best vertex positions for a fixed vertex budget.
fn refine_vertex_indices(ring: &[Point], idx: &mut [usize], window: usize, passes: usize) {
    let n = ring.len();
    let k = idx.len();
    if k < 3 {
        return;
    }
    for _ in 0..passes {
        let mut moved = false;
        for v in 0..k {
            let prev = idx[(v + k - 1) % k];
            let next = idx[(v + 1) % k];
            let span = cyclic_dist(n, prev, next);
            if span < 2 {
                continue;
            }
            let cur_off = cyclic_dist(n, prev, idx[v]);
            let lo = cur_off.saturating_sub(window).max(1);
            let hi = (cur_off + window).min(span - 1);
            let mut best = (f64::INFINITY, idx[v]);
            for off in lo..=hi {
                let c = (prev + off) % n;
                let cost = gap_deviation(ring, prev, c) + gap_deviation(ring, c, next);
                if cost < best.0 {
                    best = (cost, c);
                }
            }
            if best.1 != idx[v] {
                idx[v] = best.1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Fit one polygon per instance and score it by mean TS.
pub fn instance_to_polygons(inst: &InstanceMap, ts: &RasterMap, mode: DetectMode) -> Vec<Detection> {
    let k = inst.max_label() as usize;
    if k == 0 {
        return Vec::new();
    }
    // per-instance pixel stats and topmost-leftmost start pixel
    let mut count = vec![0usize; k + 1];
    let mut score = vec![0.0f64; k + 1];
    let mut start = vec![(usize::MAX, usize::MAX); k + 1];
    for y in 0..inst.height {
        for x in 0..inst.width {
            let id = inst.get(x, y) as usize;
            if id == 0 {
                continue;
            }
            count[id] += 1;
            score[id] += ts.get(x, y, 0) as f64;
            if start[id].0 == usize::MAX {
                start[id] = (x, y); // first in row-major order = topmost-leftmost
            }
        }
    }

    let mut dets = Vec::new();
    for id in 1..=k {
        if count[id] < MIN_INSTANCE_AREA {
            continue;
        }
        let inside = |x: isize, y: isize| -> bool {
            x >= 0
                && y >= 0
                && (x as usize) < inst.width
                && (y as usize) < inst.height
                && inst.get(x as usize, y as usize) as usize == id
        };
        let ring = trace_boundary(inside, start[id]);
        let polygon = match mode {
            DetectMode::Quad => {
                let Some(rect) = min_area_rect(&ring) else {
                    continue;
                };
                rect.to_vec()
            }
            DetectMode::Curved => {
                // Resample the traced ring at ~1 px spacing (the tracer only
                // emits turn vertices), then take a 5-point moving average to
                // remove the half-pixel staircase before vertex selection.
                let mut dense: Vec<Point> = Vec::with_capacity(ring.len() * 2);
                for i in 0..ring.len() {
                    let a = ring[i];
                    let b = ring[(i + 1) % ring.len()];
                    let steps = a.dist(b).ceil().max(1.0) as usize;
                    for s in 0..steps {
                        let t = s as f64 / steps as f64;
                        dense.push(Point::new(
                            a.x + (b.x - a.x) * t,
                            a.y + (b.y - a.y) * t,
                        ));
                    }
                }
                let n = dense.len();
                let smoothed: Vec<Point> = if n >= 8 {
                    (0..n)
                        .map(|i| {
                            let mut acc = Point::new(0.0, 0.0);
                            for k in 0..5usize {
                                acc = acc.add(dense[(i + n + k - 2) % n]);
                            }
                            acc.scale(1.0 / 5.0)
                        })
                        .collect()
                } else {
                    dense
                };
                let mut tol = SIMPLIFY_TOLERANCE;
                let mut simp = simplify_ring(&smoothed, tol);
                while simp.len() > MAX_CURVED_VERTICES {
                    tol *= 1.2;
                    simp = simplify_ring(&smoothed, tol);
                }
                if simp.len() < 3 {
                    continue;
                }
                // Map the kept vertices back to ring indices and let them
                // slide to their locally optimal positions.
                let mut idx: Vec<usize> = simp
                    .iter()
                    .map(|p| {
                        (0..smoothed.len())
                            .min_by(|&a, &b| {
                                p.dist(smoothed[a]).partial_cmp(&p.dist(smoothed[b])).unwrap()
                            })
                            .unwrap()
                    })
                    .collect();
                idx.sort_unstable();
                idx.dedup();
                refine_vertex_indices(&smoothed, &mut idx, 12, 4);
                idx.dedup();
                let mut simp: Vec<Point> = idx.iter().map(|&i| smoothed[i]).collect();
                if simp.len() < 3 {
                    continue;
                }
                // simplification inscribes the traced boundary; rescale about
                // the centroid so the polygon area matches the pixel count
                let poly_area = crate::geometry::signed_area(&simp).abs();
                if poly_area > 1e-9 {
                    let k = (count[id] as f64 / poly_area).sqrt();
                    let c = centroid_of(&simp);
                    for p in simp.iter_mut() {
                        *p = c.add(p.sub(c).scale(k));
                    }
                }
                simp
            }
        };
        dets.push(Detection {
            polygon,
            score: (score[id] / count[id] as f64) as f32,
        });
    }
    dets
}

/// Predicted map bundle for inference. `tcd` is needed only when the
/// grouping graph comes from the direction field.
pub struct PredictedMaps<'a> {
    pub ts: &'a RasterMap,
    pub tcbp: &'a RasterMap,
    pub tcd: Option<&'a RasterMap>,
}

/// Full post-processing: peaks -> instance filter -> next graph ->
/// parallel climb -> polygon fitting.
/// 3x3 mean filter. Predicted maps carry per-pixel noise that creates
/// spurious local maxima in the climb graph; one smoothing pass restores a
/// monotone slope without moving the mountain ridge.
pub fn box_smooth(map: &RasterMap) -> RasterMap {
    let (w, h) = (map.width, map.height);
    let mut out = RasterMap::zeros(w, h, map.channels);
    for c in 0..map.channels {
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0.0f32;
                let mut n = 0u32;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                            sum += map.get(nx as usize, ny as usize, c);
                            n += 1;
                        }
                    }
                }
                out.set(x, y, c, sum / n as f32);
            }
        }
    }
    out
}

pub fn detect_pipeline(
    maps: &PredictedMaps<'_>,
    cfg: &GroupConfig,
    mode: DetectMode,
) -> Vec<Detection> {
    let tcbp = box_smooth(maps.tcbp);
    let maps = PredictedMaps {
        ts: maps.ts,
        tcbp: &tcbp,
        tcd: maps.tcd,
    };
    let (seeds, _) = extract_peaks(maps.tcbp, maps.ts, cfg);
    let (seeds, k) = score_instances(&seeds, maps.ts, cfg);
    if k == 0 {
        return Vec::new();
    }
    let mask = text_mask_from_ts(maps.ts, cfg.ts_border_min);
    let next = match cfg.graph_source {
        GraphSource::Tcbp => next_from_tcbp(maps.tcbp, &mask),
        GraphSource::Tcd => {
            let tcd = maps.tcd.expect("TCD graph source requires a TCD map");
            next_from_tcd(tcd)
        }
    };
    let grouped = group_parallel(&seeds, &next, &mask);
    instance_to_polygons(&grouped, maps.ts, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::signed_area;

    fn rect_instance(w: usize, h: usize, x0: usize, y0: usize, rw: usize, rh: usize) -> InstanceMap {
        let mut m = InstanceMap::zeros(w, h);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                m.set(x, y, 1);
            }
        }
        m
    }

    fn ones_ts(w: usize, h: usize) -> RasterMap {
        RasterMap {
            width: w,
            height: h,
            channels: 1,
            data: vec![1.0; w * h],
        }
    }

    #[test]
    fn rect_recovers_itself() {
        let inst = rect_instance(120, 40, 0, 0, 100, 20);
        let dets = instance_to_polygons(&inst, &ones_ts(120, 40), DetectMode::Quad);
        assert_eq!(dets.len(), 1);
        let expect = [
            Point::new(0.0, 0.0),
            Point::new(100.0, 0.0),
            Point::new(100.0, 20.0),
            Point::new(0.0, 20.0),
        ];
        for e in expect {
            let ok = dets[0]
                .polygon
                .iter()
                .any(|p| p.dist(e) <= 1.0);
            assert!(ok, "no vertex near {e:?}: {:?}", dets[0].polygon);
        }
        assert_eq!(dets[0].score, 1.0);
    }

    #[test]
    fn disk_area_recovered() {
        let (w, h, r) = (80usize, 80usize, 30.0f64);
        let mut inst = InstanceMap::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 + 0.5 - 40.0;
                let dy = y as f64 + 0.5 - 40.0;
                if dx * dx + dy * dy <= r * r {
                    inst.set(x, y, 1);
                }
            }
        }
        let dets = instance_to_polygons(&inst, &ones_ts(w, h), DetectMode::Curved);
        assert_eq!(dets.len(), 1);
        assert!(dets[0].polygon.len() <= MAX_CURVED_VERTICES);
        let area = signed_area(&dets[0].polygon).abs();
        let expect = std::f64::consts::PI * r * r;
        assert!(
            (area - expect).abs() / expect < 0.05,
            "area {area} vs {expect}"
        );
    }

    #[test]
    fn rotated_rect_angle_recovered() {
        // 45-degree rectangle rasterized, min-area rect angle within 2 degrees
        let (w, h) = (160usize, 160usize);
        let c = Point::new(80.0, 80.0);
        let ang = std::f64::consts::FRAC_PI_4;
        let (ca, sa) = (ang.cos(), ang.sin());
        let half = (60.0, 12.0);
        let mut inst = InstanceMap::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let p = Point::new(x as f64 + 0.5, y as f64 + 0.5).sub(c);
                let u = p.x * ca + p.y * sa;
                let v = -p.x * sa + p.y * ca;
                if u.abs() <= half.0 && v.abs() <= half.1 {
                    inst.set(x, y, 1);
                }
            }
        }
        let dets = instance_to_polygons(&inst, &ones_ts(w, h), DetectMode::Quad);
        assert_eq!(dets.len(), 1);
        let q = &dets[0].polygon;
        // longest edge direction vs 45 degrees
        let mut best = (0.0, 0.0f64);
        for i in 0..4 {
            let e = q[(i + 1) % 4].sub(q[i]);
            if e.norm() > best.1 {
                best = (e.y.atan2(e.x).to_degrees().rem_euclid(90.0), e.norm());
            }
        }
        let diff = (best.0 - 45.0).abs();
        assert!(diff < 2.0, "angle off by {diff}");
    }

    #[test]
    fn tiny_instances_dropped_and_empty_ok() {
        let inst = rect_instance(20, 20, 5, 5, 3, 3); // 9 px < 10
        let dets = instance_to_polygons(&inst, &ones_ts(20, 20), DetectMode::Quad);
        assert!(dets.is_empty());

        let empty = InstanceMap::zeros(16, 16);
        assert!(instance_to_polygons(&empty, &ones_ts(16, 16), DetectMode::Quad).is_empty());
    }

    #[test]
    fn trace_boundary_single_pixel() {
        let ring = trace_boundary(|x, y| x == 0 && y == 0, (0, 0));
        assert_eq!(signed_area(&ring).abs(), 1.0);
    }

    #[test]
    fn hull_and_rect_of_square() {
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(4.0, 0.0),
            Point::new(4.0, 4.0),
            Point::new(0.0, 4.0),
            Point::new(2.0, 2.0),
        ];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        let rect = min_area_rect(&pts).unwrap();
        let area = signed_area(&rect).abs();
        assert!((area - 16.0).abs() < 1e-9);
    }
}
