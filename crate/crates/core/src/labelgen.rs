//! Ground-truth map generation: text score (TS), text center-border
//! probability (TCBP) and text center-direction (TCD) rasters from polygon
//! annotations, for both quadrangle and curved text lines.

use crate::geometry::{
    center_dir_from_side, closest_on_side, interp_unit, perp_vectors_quad, point_in_polygon,
    smooth_side, GeometryError, Point, PolyKind, Result, SideSet, SmoothedSide, TextPolygon,
};
use crate::grouping::InstanceMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum text-line height (Eq.-of-height at the centroid) below which an
/// annotation is ignored during training.
pub const MIN_TEXT_HEIGHT: f64 = 10.0;

/// A W×H×C float raster, planar (channel-major), row-major per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl RasterMap {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, c: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[self.idx(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        let i = self.idx(x, y, c);
        self.data[i] = v;
    }

    /// View of one channel plane.
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.width * self.height;
        &self.data[c * plane..(c + 1) * plane]
    }
}

/// Ground-truth bundle for one image.
#[derive(Debug, Clone)]
pub struct LabelSet {
    pub ts: RasterMap,
    pub tcbp: RasterMap,
    /// 2-channel unit vectors in [-1,1]; (0,0) where the thrust is zero or
    /// outside text.
    pub tcd: RasterMap,
    /// 1 where loss must be masked out (DO-NOT-CARE or sub-minimum height).
    pub ignore: RasterMap,
    /// Ground-truth instance ids, for round-trip testing.
    pub instance_gt: InstanceMap,
}

/// Height of the text line at `p`: min over opposite side pairs of the sum
/// of perpendicular distances.
pub fn height_quad(poly: &TextPolygon, p: Point) -> Result<f64> {
    let a = perp_vectors_quad(poly, p)?;
    let d: Vec<f64> = a.iter().map(|v| v.norm()).collect();
    Ok((d[0] + d[2]).min(d[1] + d[3]))
}

/// TCBP at `p` inside a quad: 2·min(‖a_i‖)/h, clamped to [0,1].
pub fn tcbp_quad(poly: &TextPolygon, p: Point) -> Result<f64> {
    let a = perp_vectors_quad(poly, p)?;
    let d: Vec<f64> = a.iter().map(|v| v.norm()).collect();
    let h = (d[0] + d[2]).min(d[1] + d[3]);
    if h < 1e-6 {
        return Err(GeometryError::DegenerateHeight);
    }
    let m = d.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((2.0 * m / h).clamp(0.0, 1.0))
}

/// TCD at `p` inside a quad: thrust-weighted sum of per-side inward
/// directions, normalized; (0,0) when every thrust weight is zero.
pub fn tcd_quad(poly: &TextPolygon, p: Point) -> Result<Point> {
    let a = perp_vectors_quad(poly, p)?;
    let d: Vec<f64> = a.iter().map(|v| v.norm()).collect();
    let h = (d[0] + d[2]).min(d[1] + d[3]);
    let v = poly.vertices();
    let mut sum = Point::default();
    for i in 0..4 {
        let w = (h / 2.0 - d[i]).max(0.0);
        if w <= 0.0 {
            continue;
        }
        let dir = if d[i] < 1e-6 {
            // on the side itself: use the side's inward normal
            let f = v[(i + 1) % 4].sub(v[i]).normalized().unwrap();
            center_dir_from_side(f)
        } else {
            a[i].scale(1.0 / d[i])
        };
        sum = sum.add(dir.scale(w));
    }
    if sum.norm() < 1e-9 {
        return Ok(Point::default());
    }
    Ok(sum.normalized().unwrap())
}

/// Pre-smoothed sides of a curved (or quad) polygon, cached so per-pixel
/// label evaluation does not redo the smoothing.
#[derive(Debug, Clone)]
pub struct SmoothedPolygon {
    sides: [Vec<Point>; 4],
    smoothed: [SmoothedSide; 4],
}

impl SmoothedPolygon {
    pub fn new(poly: &TextPolygon) -> Result<Self> {
        let SideSet { sides } = SideSet::from_polygon(poly);
        let smoothed = [
            smooth_side(&sides[0])?,
            smooth_side(&sides[1])?,
            smooth_side(&sides[2])?,
            smooth_side(&sides[3])?,
        ];
        Ok(Self { sides, smoothed })
    }

    fn dists(&self, p: Point) -> [crate::geometry::ClosestPoint; 4] {
        [
            closest_on_side(&self.sides[0], p),
            closest_on_side(&self.sides[1], p),
            closest_on_side(&self.sides[2], p),
            closest_on_side(&self.sides[3], p),
        ]
    }

    pub fn height(&self, p: Point) -> f64 {
        let c = self.dists(p);
        (c[0].dist + c[2].dist).min(c[1].dist + c[3].dist)
    }

    pub fn tcbp(&self, p: Point) -> Result<f64> {
        let c = self.dists(p);
        let h = (c[0].dist + c[2].dist).min(c[1].dist + c[3].dist);
        if h < 1e-6 {
            return Err(GeometryError::DegenerateHeight);
        }
        let m = c.iter().map(|x| x.dist).fold(f64::INFINITY, f64::min);
        Ok((2.0 * m / h).clamp(0.0, 1.0))
    }

    pub fn tcd(&self, p: Point) -> Result<Point> {
        let c = self.dists(p);
        let h = (c[0].dist + c[2].dist).min(c[1].dist + c[3].dist);
        let mut sum = Point::default();
        for i in 0..4 {
            let w = (h / 2.0 - c[i].dist).max(0.0);
            if w <= 0.0 {
                continue;
            }
            let f = interp_unit(&self.smoothed[i], c[i].segment, c[i].point)?;
            let dir = center_dir_from_side(f);
            sum = sum.add(dir.scale(w));
        }
        if sum.norm() < 1e-9 {
            return Ok(Point::default());
        }
        Ok(sum.normalized().unwrap())
    }
}

/// TCBP at `p` inside a Curved14 polygon (clamped closest-point distances).
pub fn tcbp_curved(poly: &TextPolygon, p: Point) -> Result<f64> {
    SmoothedPolygon::new(poly)?.tcbp(p)
}

/// TCD at `p` inside a Curved14 polygon (interpolated side angles).
pub fn tcd_curved(poly: &TextPolygon, p: Point) -> Result<Point> {
    SmoothedPolygon::new(poly)?.tcd(p)
}

/// Height at the polygon centroid, by the kind-appropriate distance rule.
pub fn height_at_centroid(poly: &TextPolygon) -> Result<f64> {
    let c = poly.centroid();
    match poly.kind() {
        PolyKind::Quad => height_quad(poly, c),
        PolyKind::Curved14 => Ok(SmoothedPolygon::new(poly)?.height(c)),
    }
}

/// Output of [`rasterize_ts`].
#[derive(Debug, Clone)]
pub struct TsRaster {
    pub ts: RasterMap,
    pub ignore: RasterMap,
    pub instance_gt: InstanceMap,
    /// Count of annotations skipped because label geometry failed on them.
    pub skipped: usize,
}

/// Rasterize text-score ground truth at pixel centers (x+0.5, y+0.5).
///
/// Overlaps resolve to the smaller-area polygon. DO-NOT-CARE polygons and
/// polygons below [`MIN_TEXT_HEIGHT`] contribute to the ignore mask only.
pub fn rasterize_ts(polys: &[TextPolygon], width: usize, height: usize) -> TsRaster {
    let mut ts = RasterMap::zeros(width, height, 1);
    let mut ignore = RasterMap::zeros(width, height, 1);
    let mut inst = InstanceMap::zeros(width, height);
    let mut skipped = 0usize;

    // assign instance ids to trainable polygons in input order
    let mut effective: Vec<(usize, bool, u32)> = Vec::new(); // (poly idx, is_ignore, id)
    let mut next_id = 0u32;
    for (i, poly) in polys.iter().enumerate() {
        let ign = poly.ignore
            || match height_at_centroid(poly) {
                Ok(h) => h < MIN_TEXT_HEIGHT,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            };
        let id = if ign {
            0
        } else {
            next_id += 1;
            next_id
        };
        effective.push((i, ign, id));
    }

    // larger areas first so smaller polygons overwrite on overlap
    effective.sort_by(|a, b| {
        polys[b.0]
            .area()
            .partial_cmp(&polys[a.0].area())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });

    for &(pi, ign, id) in &effective {
        let poly = &polys[pi];
        let (min, max) = poly.bbox();
        let x0 = (min.x.floor().max(0.0)) as usize;
        let y0 = (min.y.floor().max(0.0)) as usize;
        let x1 = (max.x.ceil().min(width as f64)) as usize;
        let y1 = (max.y.ceil().min(height as f64)) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let p = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                if !point_in_polygon(poly.vertices(), p) {
                    continue;
                }
                if ign {
                    ignore.set(x, y, 0, 1.0);
                    ts.set(x, y, 0, 0.0);
                    inst.set(x, y, 0);
                } else {
                    ts.set(x, y, 0, 1.0);
                    ignore.set(x, y, 0, 0.0);
                    inst.set(x, y, id);
                }
            }
        }
    }

    TsRaster {
        ts,
        ignore,
        instance_gt: inst,
        skipped,
    }
}

enum PolyGeom<'a> {
    Quad(&'a TextPolygon),
    Curved(SmoothedPolygon),
}

impl PolyGeom<'_> {
    fn tcbp(&self, p: Point) -> Result<f64> {
        match self {
            PolyGeom::Quad(q) => tcbp_quad(q, p),
            PolyGeom::Curved(s) => s.tcbp(p),
        }
    }

    fn tcd(&self, p: Point) -> Result<Point> {
        match self {
            PolyGeom::Quad(q) => tcd_quad(q, p),
            PolyGeom::Curved(s) => s.tcd(p),
        }
    }
}

/// Generate the full ground-truth bundle for one image.
///
/// TCD is computed at all text pixels; restricting it to the border happens
/// in the loss, not here.
pub fn generate_labels(polys: &[TextPolygon], width: usize, height: usize) -> LabelSet {
    let base = rasterize_ts(polys, width, height);
    let mut tcbp = RasterMap::zeros(width, height, 1);
    let mut tcd = RasterMap::zeros(width, height, 2);

    // id -> geometry for trainable polygons, in the same order rasterize_ts
    // assigned ids
    let mut geoms: Vec<Option<PolyGeom>> = vec![None]; // id 0 unused
    for poly in polys {
        let ign = poly.ignore
            || match height_at_centroid(poly) {
                Ok(h) => h < MIN_TEXT_HEIGHT,
                Err(_) => continue,
            };
        if ign {
            continue;
        }
        let geom = match poly.kind() {
            PolyKind::Quad => Some(PolyGeom::Quad(poly)),
            PolyKind::Curved14 => SmoothedPolygon::new(poly).ok().map(PolyGeom::Curved),
        };
        geoms.push(geom);
    }

    let inst = &base.instance_gt;
    let plane = width * height;
    let compute_row = |y: usize| -> (Vec<f32>, Vec<f32>, Vec<f32>) {
        let mut r_tcbp = vec![0.0f32; width];
        let mut r_u = vec![0.0f32; width];
        let mut r_v = vec![0.0f32; width];
        for x in 0..width {
            let id = inst.get(x, y) as usize;
            if id == 0 || id >= geoms.len() {
                continue;
            }
            let Some(geom) = &geoms[id] else { continue };
            let p = Point::new(x as f64 + 0.5, y as f64 + 0.5);
            if let Ok(v) = geom.tcbp(p) {
                r_tcbp[x] = v as f32;
            }
            if let Ok(d) = geom.tcd(p) {
                r_u[x] = d.x as f32;
                r_v[x] = d.y as f32;
            }
        }
        (r_tcbp, r_u, r_v)
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<_> = (0..height).into_par_iter().map(compute_row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<_> = (0..height).map(compute_row).collect();

    for (y, (r_tcbp, r_u, r_v)) in rows.into_iter().enumerate() {
        tcbp.data[y * width..(y + 1) * width].copy_from_slice(&r_tcbp);
        tcd.data[y * width..(y + 1) * width].copy_from_slice(&r_u);
        tcd.data[plane + y * width..plane + (y + 1) * width].copy_from_slice(&r_v);
    }

    LabelSet {
        ts: base.ts,
        tcbp,
        tcd,
        ignore: base.ignore,
        instance_gt: base.instance_gt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rect(x0: f64, y0: f64, w: f64, h: f64) -> TextPolygon {
        TextPolygon::quad(
            [
                Point::new(x0, y0),
                Point::new(x0 + w, y0),
                Point::new(x0 + w, y0 + h),
                Point::new(x0, y0 + h),
            ],
            false,
        )
        .unwrap()
    }

    /// Rectangle re-encoded as a Curved14: long sides subdivided into 6
    /// collinear segments each.
    fn rect_as_curved(x0: f64, y0: f64, w: f64, h: f64) -> TextPolygon {
        let mut v = Vec::with_capacity(14);
        for i in 0..7 {
            v.push(Point::new(x0 + w * i as f64 / 6.0, y0));
        }
        for i in 0..7 {
            v.push(Point::new(x0 + w * (6 - i) as f64 / 6.0, y0 + h));
        }
        TextPolygon::curved14(v, false).unwrap()
    }

    #[test]
    fn tcbp_quad_rect_values() {
        let poly = rect(0.0, 0.0, 100.0, 20.0);
        assert_abs_diff_eq!(
            tcbp_quad(&poly, Point::new(50.0, 10.0)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            tcbp_quad(&poly, Point::new(50.0, 5.0)).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            tcbp_quad(&poly, Point::new(5.0, 10.0)).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            tcbp_quad(&poly, Point::new(50.0, 0.0)).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn tcd_quad_rect_values() {
        let poly = rect(0.0, 0.0, 100.0, 20.0);
        let u = tcd_quad(&poly, Point::new(50.0, 5.0)).unwrap();
        assert_abs_diff_eq!(u.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u.y, 1.0, epsilon = 1e-12);

        let u = tcd_quad(&poly, Point::new(50.0, 10.0)).unwrap();
        assert_abs_diff_eq!(u.norm(), 0.0, epsilon = 1e-12);

        // top and left thrust equally
        let u = tcd_quad(&poly, Point::new(5.0, 5.0)).unwrap();
        let e = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(u.x, e, epsilon = 1e-12);
        assert_abs_diff_eq!(u.y, e, epsilon = 1e-12);
    }

    #[test]
    fn rasterize_counts_and_ignore() {
        let polys = vec![rect(10.0, 10.0, 100.0, 20.0)];
        let r = rasterize_ts(&polys, 200, 100);
        let count = r.ts.data.iter().filter(|&&v| v == 1.0).count();
        assert_eq!(count, 2000);
        assert_eq!(r.skipped, 0);

        // DO-NOT-CARE region
        let mut dnc = rect(10.0, 50.0, 50.0, 20.0);
        dnc.ignore = true;
        let r = rasterize_ts(&[rect(10.0, 10.0, 100.0, 20.0), dnc], 200, 100);
        assert_eq!(r.ts.data.iter().filter(|&&v| v == 1.0).count(), 2000);
        assert_eq!(r.ignore.data.iter().filter(|&&v| v == 1.0).count(), 1000);

        // below-minimum height
        let small = rect(10.0, 50.0, 50.0, 8.0);
        let r = rasterize_ts(&[small], 200, 100);
        assert_eq!(r.ts.data.iter().filter(|&&v| v == 1.0).count(), 0);
        assert_eq!(r.ignore.data.iter().filter(|&&v| v == 1.0).count(), 400);
    }

    #[test]
    fn overlap_resolves_to_smaller_polygon() {
        let big = rect(0.0, 0.0, 100.0, 50.0);
        let small = rect(20.0, 10.0, 30.0, 20.0);
        let r = rasterize_ts(&[big, small], 120, 60);
        // pixel inside both belongs to the smaller polygon (id 2)
        assert_eq!(r.instance_gt.get(30, 15), 2);
        assert_eq!(r.instance_gt.get(5, 5), 1);
    }

    #[test]
    fn curved_degenerate_rect_matches_quad() {
        let q = rect(5.0, 5.0, 60.0, 20.0);
        let c = rect_as_curved(5.0, 5.0, 60.0, 20.0);
        let sc = SmoothedPolygon::new(&c).unwrap();
        for y in 6..24 {
            for x in 6..64 {
                let p = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                let tq = tcbp_quad(&q, p).unwrap();
                let tc = sc.tcbp(p).unwrap();
                assert_abs_diff_eq!(tq, tc, epsilon = 1e-6);
                let uq = tcd_quad(&q, p).unwrap();
                let uc = sc.tcd(p).unwrap();
                if uq.norm() > 1e-9 && uc.norm() > 1e-9 {
                    let ang = uq.dot(uc).clamp(-1.0, 1.0).acos();
                    assert!(ang < 1e-6, "angle diff {ang} at {x},{y}");
                }
            }
        }
    }

    #[test]
    fn annulus_sector_tcbp_and_tcd() {
        // half-ring, outer r=50, inner r=30, centered at (60, 60)
        let cx = 60.0;
        let cy = 60.0;
        let mut v = Vec::with_capacity(14);
        // outer arc left-to-right across the top (clockwise in y-down)
        for i in 0..7 {
            let a = std::f64::consts::PI * (1.0 - i as f64 / 6.0);
            v.push(Point::new(cx + 50.0 * a.cos(), cy - 50.0 * a.sin()));
        }
        for i in 0..7 {
            let a = std::f64::consts::PI * (i as f64 / 6.0);
            v.push(Point::new(cx + 30.0 * a.cos(), cy - 30.0 * a.sin()));
        }
        let poly = TextPolygon::curved14(v, false).unwrap();
        let sp = SmoothedPolygon::new(&poly).unwrap();

        // pixel on the mid-radius arc, at a polyline vertex angle where the
        // chord approximation is exact
        let a = std::f64::consts::PI / 3.0;
        let p = Point::new(cx + 40.0 * a.cos(), cy - 40.0 * a.sin());
        let t = sp.tcbp(p).unwrap();
        assert!((t - 1.0).abs() < 0.05, "mid-radius TCBP {t}");
        // mid-chord dips by at most the chord sagitta ratio
        let b = std::f64::consts::FRAC_PI_4;
        let p = Point::new(cx + 40.0 * b.cos(), cy - 40.0 * b.sin());
        let t = sp.tcbp(p).unwrap();
        assert!(t > 0.8, "mid-chord TCBP {t}");

        // pixel adjacent to the outer arc: TCD within 15 degrees of inward radial
        let p = Point::new(cx + 48.0 * a.cos(), cy - 48.0 * a.sin());
        let u = sp.tcd(p).unwrap();
        let radial = Point::new(-a.cos(), a.sin()); // toward center
        let ang = u.dot(radial).clamp(-1.0, 1.0).acos().to_degrees();
        assert!(ang < 15.0, "TCD off inward radial by {ang} degrees");
    }

    #[test]
    fn generate_labels_basic() {
        let empty = generate_labels(&[], 64, 64);
        assert!(empty.ts.data.iter().all(|&v| v == 0.0));
        assert!(empty.tcbp.data.iter().all(|&v| v == 0.0));

        let ls = generate_labels(&[rect(10.0, 20.0, 40.0, 11.0)], 64, 64);
        let max = ls.tcbp.data.iter().cloned().fold(0.0f32, f32::max);
        assert!(max > 0.9, "tcbp max {max}");
        // unit norm at text pixels with nonzero thrust
        for y in 0..64 {
            for x in 0..64 {
                if ls.ts.get(x, y, 0) == 1.0 {
                    let u = ls.tcd.get(x, y, 0) as f64;
                    let v = ls.tcd.get(x, y, 1) as f64;
                    let n = (u * u + v * v).sqrt();
                    assert!(n < 1e-9 || (n - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn adjacent_rects_opposite_tcd_across_shared_edge() {
        // two rects sharing the vertical edge x=50
        let a = rect(0.0, 0.0, 50.0, 20.0);
        let b = rect(50.0, 0.0, 50.0, 20.0);
        let ua = tcd_quad(&a, Point::new(49.5, 10.0)).unwrap();
        let ub = tcd_quad(&b, Point::new(50.5, 10.0)).unwrap();
        // directions differ by ~180 degrees
        let d = ua.dot(ub);
        assert!(d < -0.99, "dot {d}");
    }
}
