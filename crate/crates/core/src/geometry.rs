//! Planar geometry for text-line label computation: perpendicular distances
//! to quad sides, clamped closest points on curved sides, side-angle
//! smoothing and the interpolated center-direction field.
//!
//! Coordinates are continuous image coordinates, x right and y down.
//! Annotation vertex order is clockwise in that frame.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("side {0} has zero length")]
    DegenerateSide(usize),
    #[error("adjacent segments are antiparallel; smoothed unit undefined")]
    AntiparallelSegments,
    #[error("interpolated direction has near-zero norm")]
    ZeroInterpolation,
    #[error("polygon has {got} vertices, expected {expected}")]
    BadVertexCount { expected: usize, got: usize },
    #[error("polygon is self-intersecting")]
    SelfIntersecting,
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("degenerate polygon: height below 1e-6")]
    DegenerateHeight,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// A 2D point (or vector) in continuous image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// 2D cross product (z component of the 3D cross).
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    pub fn normalized(self) -> Option<Point> {
        let n = self.norm();
        if n < 1e-12 {
            None
        } else {
            Some(self.scale(1.0 / n))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyKind {
    /// 4-vertex quadrangle annotation.
    Quad,
    /// 14-vertex curved annotation: two opposite 7-point curved sides.
    Curved14,
}

/// An annotated text region, clockwise in image coordinates.
#[derive(Debug, Clone)]
pub struct TextPolygon {
    kind: PolyKind,
    vertices: Vec<Point>,
    pub ignore: bool,
}

impl TextPolygon {
    pub fn new(kind: PolyKind, vertices: Vec<Point>, ignore: bool) -> Result<Self> {
        let expected = match kind {
            PolyKind::Quad => 4,
            PolyKind::Curved14 => 14,
        };
        if vertices.len() != expected {
            return Err(GeometryError::BadVertexCount {
                expected,
                got: vertices.len(),
            });
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if signed_area(&vertices).abs() < 1e-9 {
            return Err(GeometryError::ZeroArea);
        }
        if !is_simple(&vertices) {
            return Err(GeometryError::SelfIntersecting);
        }
        Ok(Self {
            kind,
            vertices,
            ignore,
        })
    }

    pub fn quad(vertices: [Point; 4], ignore: bool) -> Result<Self> {
        Self::new(PolyKind::Quad, vertices.to_vec(), ignore)
    }

    pub fn curved14(vertices: Vec<Point>, ignore: bool) -> Result<Self> {
        Self::new(PolyKind::Curved14, vertices, ignore)
    }

    pub fn kind(&self) -> PolyKind {
        self.kind
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    /// Area centroid of the polygon.
    pub fn centroid(&self) -> Point {
        let v = &self.vertices;
        let mut a2 = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..v.len() {
            let p = v[i];
            let q = v[(i + 1) % v.len()];
            let w = p.cross(q);
            a2 += w;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        if a2.abs() < 1e-12 {
            // fall back to vertex mean
            let n = v.len() as f64;
            return Point::new(
                v.iter().map(|p| p.x).sum::<f64>() / n,
                v.iter().map(|p| p.y).sum::<f64>() / n,
            );
        }
        Point::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    pub fn bbox(&self) -> (Point, Point) {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        (min, max)
    }
}

pub fn signed_area(vertices: &[Point]) -> f64 {
    let mut a = 0.0;
    for i in 0..vertices.len() {
        a += vertices[i].cross(vertices[(i + 1) % vertices.len()]);
    }
    a / 2.0
}

/// Simplicity test: no two non-adjacent edges intersect. O(n²), fine for ≤14 vertices.
fn is_simple(vertices: &[Point]) -> bool {
    let n = vertices.len();
    for i in 0..n {
        let (a1, a2) = (vertices[i], vertices[(i + 1) % n]);
        for j in (i + 1)..n {
            // skip adjacent edges (they share a vertex)
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (b1, b2) = (vertices[j], vertices[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

fn segments_intersect(a1: Point, a2: Point, b1: Point, b2: Point) -> bool {
    let d1 = a2.sub(a1).cross(b1.sub(a1));
    let d2 = a2.sub(a1).cross(b2.sub(a1));
    let d3 = b2.sub(b1).cross(a1.sub(b1));
    let d4 = b2.sub(b1).cross(a2.sub(b1));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    false
}

/// The four sides of a text line as polylines. For quads each side is one
/// segment; for Curved14 sides 0 and 2 are 7-point polylines and sides
/// 1 and 3 are single segments. Opposite pairs are (0,2) and (1,3).
#[derive(Debug, Clone)]
pub struct SideSet {
    pub sides: [Vec<Point>; 4],
}

impl SideSet {
    pub fn from_polygon(poly: &TextPolygon) -> Self {
        let v = poly.vertices();
        let sides = match poly.kind() {
            PolyKind::Quad => [
                vec![v[0], v[1]],
                vec![v[1], v[2]],
                vec![v[2], v[3]],
                vec![v[3], v[0]],
            ],
            PolyKind::Curved14 => [
                v[0..=6].to_vec(),
                vec![v[6], v[7]],
                v[7..=13].to_vec(),
                vec![v[13], v[0]],
            ],
        };
        Self { sides }
    }
}

/// Perpendicular vectors a_1..a_4 from the foot on each side's infinite
/// supporting line to `p`. `‖a_i‖` is the perpendicular distance.
pub fn perp_vectors_quad(poly: &TextPolygon, p: Point) -> Result<[Point; 4]> {
    debug_assert_eq!(poly.kind(), PolyKind::Quad);
    let v = poly.vertices();
    let mut out = [Point::default(); 4];
    for i in 0..4 {
        let s = v[i];
        let e = v[(i + 1) % 4];
        let dir = e
            .sub(s)
            .normalized()
            .ok_or(GeometryError::DegenerateSide(i))?;
        let foot = s.add(dir.scale(p.sub(s).dot(dir)));
        out[i] = p.sub(foot);
    }
    Ok(out)
}

/// Closest point on a polyline, clamped to segment endpoints.
#[derive(Debug, Clone, Copy)]
pub struct ClosestPoint {
    pub point: Point,
    pub dist: f64,
    /// Index of the segment containing the closest point.
    pub segment: usize,
    /// Parameter in [0,1] along that segment.
    pub t: f64,
}

pub fn closest_on_side(side: &[Point], p: Point) -> ClosestPoint {
    debug_assert!(side.len() >= 2);
    let mut best = ClosestPoint {
        point: side[0],
        dist: p.dist(side[0]),
        segment: 0,
        t: 0.0,
    };
    for i in 0..side.len() - 1 {
        let a = side[i];
        let b = side[i + 1];
        let ab = b.sub(a);
        let len2 = ab.dot(ab);
        let t = if len2 < 1e-24 {
            0.0
        } else {
            (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0)
        };
        let q = a.add(ab.scale(t));
        let d = p.dist(q);
        if d < best.dist {
            best = ClosestPoint {
                point: q,
                dist: d,
                segment: i,
                t,
            };
        }
    }
    best
}

/// A polyline side with smoothed per-point direction units.
#[derive(Debug, Clone)]
pub struct SmoothedSide {
    pub points: Vec<Point>,
    /// Unit direction of each segment i -> i+1.
    pub segment_units: Vec<Point>,
    /// Per-point unit: endpoints take the adjacent segment's unit, interior
    /// points the normalized mean of their two adjacent segment units.
    pub point_units: Vec<Point>,
}

pub fn smooth_side(side: &[Point]) -> Result<SmoothedSide> {
    let n = side.len();
    debug_assert!(n >= 2);
    let mut segment_units = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let u = side[i + 1]
            .sub(side[i])
            .normalized()
            .ok_or(GeometryError::DegenerateSide(i))?;
        segment_units.push(u);
    }
    let mut point_units = Vec::with_capacity(n);
    for i in 0..n {
        let u = if i == 0 {
            segment_units[0]
        } else if i == n - 1 {
            segment_units[n - 2]
        } else {
            segment_units[i - 1]
                .add(segment_units[i])
                .normalized()
                .ok_or(GeometryError::AntiparallelSegments)?
        };
        point_units.push(u);
    }
    Ok(SmoothedSide {
        points: side.to_vec(),
        segment_units,
        point_units,
    })
}

/// Direction unit at an arbitrary point `b` on segment `segment` of the
/// side, interpolated between the two stored point units by their
/// distances to `b` and renormalized.
pub fn interp_unit(side: &SmoothedSide, segment: usize, b: Point) -> Result<Point> {
    let pi = side.points[segment];
    let pj = side.points[segment + 1];
    let di = b.dist(pi);
    let dj = b.dist(pj);
    let w = side.point_units[segment]
        .scale(dj)
        .add(side.point_units[segment + 1].scale(di));
    if w.norm() < 1e-9 {
        // both distances zero means a degenerate segment
        if di < 1e-12 {
            return Ok(side.point_units[segment]);
        }
        return Err(GeometryError::ZeroInterpolation);
    }
    Ok(w.normalized().unwrap())
}

/// Rotate the side direction a quarter turn so it points into the text.
/// With clockwise vertices and y-down coordinates this is θ + π/2.
pub fn center_dir_from_side(f: Point) -> Point {
    Point::new(-f.y, f.x)
}

/// Even-odd containment test; boundary points count as inside.
/// `poly` is sampled at pixel centers by callers, so the boundary rule only
/// matters for points landing exactly on an edge.
pub fn point_in_polygon(vertices: &[Point], p: Point) -> bool {
    let n = vertices.len();
    // boundary check
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let ab = b.sub(a);
        let len2 = ab.dot(ab);
        if len2 < 1e-24 {
            continue;
        }
        let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
        if p.dist(a.add(ab.scale(t))) <= 1e-9 {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[j];
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}
