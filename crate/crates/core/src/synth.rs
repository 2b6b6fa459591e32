//! Seeded synthetic scenes: non-overlapping rotated quads and ring-sector
//! curved texts, their ground-truth maps, and a noise model that imitates
//! imperfect network output.

use geo::{Distance, Euclidean, LineString, Polygon as GeoPolygon};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Point, TextPolygon};
use crate::labelgen::{generate_labels, LabelSet};

/// Scene generation parameters.
#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// Target number of text regions per scene.
    pub n_polys: usize,
    /// Fraction of regions generated as curved ring sectors.
    pub curved_fraction: f64,
    /// Required clearance between regions, px.
    pub min_separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 640,
            height: 640,
            n_polys: 6,
            curved_fraction: 0.3,
            min_separation: 2.0,
        }
    }
}

fn to_geo(poly: &TextPolygon) -> GeoPolygon<f64> {
    GeoPolygon::new(
        LineString::from(
            poly.vertices()
                .iter()
                .map(|p| (p.x, p.y))
                .collect::<Vec<_>>(),
        ),
        vec![],
    )
}

fn fits(poly: &TextPolygon, placed: &[GeoPolygon<f64>], cfg: &SynthConfig) -> bool {
    let (min, max) = poly.bbox();
    if min.x < 1.0 || min.y < 1.0 || max.x > cfg.width as f64 - 1.0 || max.y > cfg.height as f64 - 1.0
    {
        return false;
    }
    let g = to_geo(poly);
    placed
        .iter()
        .all(|other| Euclidean.distance(&g, other) >= cfg.min_separation)
}

fn random_quad(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Option<TextPolygon> {
    let h: f64 = rng.random_range(12.0..80.0);
    let aspect: f64 = rng.random_range(1.0..10.0);
    let w = (h * aspect).min(cfg.width as f64 * 0.8);
    let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (ca, sa) = (ang.cos(), ang.sin());
    let cx: f64 = rng.random_range(0.0..cfg.width as f64);
    let cy: f64 = rng.random_range(0.0..cfg.height as f64);
    let corner = |u: f64, v: f64| Point::new(cx + u * ca - v * sa, cy + u * sa + v * ca);
    TextPolygon::quad(
        [
            corner(-w / 2.0, -h / 2.0),
            corner(w / 2.0, -h / 2.0),
            corner(w / 2.0, h / 2.0),
            corner(-w / 2.0, h / 2.0),
        ],
        false,
    )
    .ok()
}

fn random_ring_sector(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Option<TextPolygon> {
    let band: f64 = rng.random_range(14.0..50.0);
    let r_in: f64 = rng.random_range(20.0..80.0);
    let r_out = r_in + band;
    let span: f64 = rng.random_range(1.2..2.8); // radians
    let start: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let cx: f64 = rng.random_range(0.0..cfg.width as f64);
    let cy: f64 = rng.random_range(0.0..cfg.height as f64);
    let mut v = Vec::with_capacity(14);
    // outer arc traversed with decreasing angle so the ring reads clockwise
    for i in 0..7 {
        let a = start + span * (1.0 - i as f64 / 6.0);
        v.push(Point::new(cx + r_out * a.cos(), cy - r_out * a.sin()));
    }
    for i in 0..7 {
        let a = start + span * (i as f64 / 6.0);
        v.push(Point::new(cx + r_in * a.cos(), cy - r_in * a.sin()));
    }
    TextPolygon::curved14(v, false).ok()
}

/// Place up to `n_polys` non-overlapping regions. Placement is rejection
/// sampling; crowded configs may yield fewer polygons than asked.
pub fn generate_scene(cfg: &SynthConfig, seed: u64) -> Vec<TextPolygon> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut polys: Vec<TextPolygon> = Vec::new();
    let mut placed: Vec<GeoPolygon<f64>> = Vec::new();
    let mut attempts = 0;
    while polys.len() < cfg.n_polys && attempts < cfg.n_polys * 60 {
        attempts += 1;
        let curved = rng.random_bool(cfg.curved_fraction);
        let cand = if curved {
            random_ring_sector(&mut rng, cfg)
        } else {
            random_quad(&mut rng, cfg)
        };
        let Some(poly) = cand else { continue };
        if fits(&poly, &placed, cfg) {
            placed.push(to_geo(&poly));
            polys.push(poly);
        }
    }
    polys
}

/// Scene plus its exact ground-truth maps.
pub fn generate_scene_with_labels(cfg: &SynthConfig, seed: u64) -> (Vec<TextPolygon>, LabelSet) {
    let polys = generate_scene(cfg, seed);
    let labels = generate_labels(&polys, cfg.width, cfg.height);
    (polys, labels)
}

/// Imperfect-prediction model: clipped Gaussian noise on TS and TCBP,
/// Gaussian angle noise on the direction field.
pub fn apply_noise(labels: &mut LabelSet, sigma: f64, angle_sigma_deg: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).unwrap();
        for v in labels.ts.data.iter_mut() {
            *v = (*v as f64 + n.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
        for v in labels.tcbp.data.iter_mut() {
            *v = (*v as f64 + n.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }
    if angle_sigma_deg > 0.0 {
        let n = Normal::new(0.0, angle_sigma_deg.to_radians()).unwrap();
        let plane = labels.tcd.width * labels.tcd.height;
        for i in 0..plane {
            let (u, v) = (labels.tcd.data[i] as f64, labels.tcd.data[plane + i] as f64);
            if u == 0.0 && v == 0.0 {
                continue;
            }
            let a = n.sample(&mut rng);
            let (ca, sa) = (a.cos(), a.sin());
            labels.tcd.data[i] = (u * ca - v * sa) as f32;
            labels.tcd.data[plane + i] = (u * sa + v * ca) as f32;
        }
    }
}
