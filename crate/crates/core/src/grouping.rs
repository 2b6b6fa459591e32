//! Mountain-climbing post-processing: threshold the center-border map into
//! peaks, label them, build a per-pixel next-step graph, and let every
//! border pixel climb to its peak in parallel.
//!
//! The parallel climb is wait-free: color and block cells transition once
//! (unset -> final value), and a walker that observes an unset cell simply
//! keeps walking. The terminal of every pointer chain is fixed by the next
//! map alone, so the output is identical across schedulings and equals the
//! single-walker reference.

use std::sync::atomic::{AtomicU32, AtomicU8, Ordering};

use crate::labelgen::RasterMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Component threshold on the direction quantizer: cos(3π/8).
pub fn direction_quantize_threshold() -> f64 {
    (3.0 * std::f64::consts::PI / 8.0).cos()
}

/// Post-processing thresholds.
#[derive(Debug, Clone, Copy)]
pub struct GroupConfig {
    /// Peak threshold γ on TCBP.
    pub gamma: f32,
    /// Minimum mean TS over a peak for the instance to survive.
    pub instance_score_min: f32,
    /// TS threshold separating text from background.
    pub ts_border_min: f32,
    /// Which map drives the next-step graph.
    pub graph_source: GraphSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphSource {
    Tcbp,
    Tcd,
}

impl Default for GroupConfig {
    fn default() -> Self {
        Self {
            gamma: 0.6,
            instance_score_min: 0.7,
            ts_border_min: 0.6,
            graph_source: GraphSource::Tcbp,
        }
    }
}

/// Per-pixel instance ids; 0 is background / uncolored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl InstanceMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u32) {
        self.labels[y * self.width + x] = v;
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Per-pixel boolean raster (text masks and the like).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BitMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Text mask from the score map: TS ≥ threshold.
pub fn text_mask_from_ts(ts: &RasterMap, thresh: f32) -> BitMask {
    BitMask {
        width: ts.width,
        height: ts.height,
        data: ts.channel(0).iter().map(|&v| v >= thresh).collect(),
    }
}

/// Per-pixel step offsets in {-1,0,1}², clamped to image bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NextMap {
    pub width: usize,
    pub height: usize,
    pub offsets: Vec<(i8, i8)>,
}

impl NextMap {
    #[inline]
    pub fn step(&self, x: usize, y: usize) -> (usize, usize) {
        let (dx, dy) = self.offsets[y * self.width + x];
        (
            (x as isize + dx as isize) as usize,
            (y as isize + dy as isize) as usize,
        )
    }
}

/// Peak pixels (TS ≥ ts_border_min and TCBP > γ) labeled 1..K with
/// 4-connectivity. Returns the seed map and K.
pub fn extract_peaks(tcbp: &RasterMap, ts: &RasterMap, cfg: &GroupConfig) -> (InstanceMap, u32) {
    let (w, h) = (tcbp.width, tcbp.height);
    let mut seeds = InstanceMap::zeros(w, h);
    let is_peak = |x: usize, y: usize| -> bool {
        ts.get(x, y, 0) >= cfg.ts_border_min && tcbp.get(x, y, 0) > cfg.gamma
    };
    let mut k = 0u32;
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !is_peak(x, y) || seeds.get(x, y) != 0 {
                continue;
            }
            k += 1;
            seeds.set(x, y, k);
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                let mut visit = |nx: usize, ny: usize, seeds: &mut InstanceMap| {
                    if is_peak(nx, ny) && seeds.get(nx, ny) == 0 {
                        seeds.set(nx, ny, k);
                        stack.push((nx, ny));
                    }
                };
                if cx > 0 {
                    visit(cx - 1, cy, &mut seeds);
                }
                if cx + 1 < w {
                    visit(cx + 1, cy, &mut seeds);
                }
                if cy > 0 {
                    visit(cx, cy - 1, &mut seeds);
                }
                if cy + 1 < h {
                    visit(cx, cy + 1, &mut seeds);
                }
            }
        }
    }
    (seeds, k)
}

/// Drop instances whose mean TS over their seed pixels is below
/// `instance_score_min` (kept when equal), relabeling densely.
pub fn score_instances(seeds: &InstanceMap, ts: &RasterMap, cfg: &GroupConfig) -> (InstanceMap, u32) {
    let k = seeds.max_label() as usize;
    let mut sum = vec![0.0f64; k + 1];
    let mut cnt = vec![0usize; k + 1];
    for y in 0..seeds.height {
        for x in 0..seeds.width {
            let id = seeds.get(x, y) as usize;
            if id > 0 {
                sum[id] += ts.get(x, y, 0) as f64;
                cnt[id] += 1;
            }
        }
    }
    let mut remap = vec![0u32; k + 1];
    let mut next = 0u32;
    for id in 1..=k {
        if cnt[id] > 0 && sum[id] / cnt[id] as f64 >= cfg.instance_score_min as f64 {
            next += 1;
            remap[id] = next;
        }
    }
    let mut out = InstanceMap::zeros(seeds.width, seeds.height);
    for (o, &s) in out.labels.iter_mut().zip(seeds.labels.iter()) {
        *o = remap[s as usize];
    }
    (out, next)
}

/// Row-major neighbor offsets, the tie-break scan order for the TCBP graph.
const NEIGHBORS: [(i8, i8); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Next-step graph from TCBP: each text pixel points at its largest-TCBP
/// in-bounds 8-neighbor; ties go to the first offset in scan order.
pub fn next_from_tcbp(tcbp: &RasterMap, text_mask: &BitMask) -> NextMap {
    let (w, h) = (tcbp.width, tcbp.height);
    let mut offsets = vec![(0i8, 0i8); w * h];
    for y in 0..h {
        for x in 0..w {
            if !text_mask.get(x, y) {
                continue;
            }
            let mut best = f32::NEG_INFINITY;
            let mut best_off = (0i8, 0i8);
            for &(dx, dy) in &NEIGHBORS {
                let nx = x as isize + dx as isize;
                let ny = y as isize + dy as isize;
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let v = tcbp.get(nx as usize, ny as usize, 0);
                if v > best {
                    best = v;
                    best_off = (dx, dy);
                }
            }
            offsets[y * w + x] = best_off;
        }
    }
    NextMap {
        width: w,
        height: h,
        offsets,
    }
}

/// Next-step graph from the direction map: each component quantized to
/// {-1,0,1} at ±cos(3π/8), then clamped to image bounds.
pub fn next_from_tcd(u: &RasterMap) -> NextMap {
    debug_assert_eq!(u.channels, 2);
    let (w, h) = (u.width, u.height);
    let c = direction_quantize_threshold() as f32;
    let mut offsets = vec![(0i8, 0i8); w * h];
    for y in 0..h {
        for x in 0..w {
            let quant = |v: f32| -> i8 {
                if v > c {
                    1
                } else if v < -c {
                    -1
                } else {
                    0
                }
            };
            let mut dx = quant(u.get(x, y, 0));
            let mut dy = quant(u.get(x, y, 1));
            if (x == 0 && dx < 0) || (x + 1 == w && dx > 0) {
                dx = 0;
            }
            if (y == 0 && dy < 0) || (y + 1 == h && dy > 0) {
                dy = 0;
            }
            offsets[y * w + x] = (dx, dy);
        }
    }
    NextMap {
        width: w,
        height: h,
        offsets,
    }
}

/// Walk outcome shared by the parallel and sequential groupers.
enum Walk {
    Colored(u32),
    Blocked { own: usize, also: Option<usize> },
}

#[inline]
fn walk(
    start: usize,
    next: &NextMap,
    text_mask: &BitMask,
    n_limit: usize,
    read_color: impl Fn(usize) -> u32,
    read_block: impl Fn(usize) -> bool,
) -> Walk {
    let w = next.width;
    let (sx, sy) = (start % w, start / w);
    let (mut nx, mut ny) = next.step(sx, sy);
    let mut prev = start;
    let mut i = 0usize;
    loop {
        i += 1;
        let pn = ny * w + nx;
        if read_block(pn) {
            return Walk::Blocked {
                own: start,
                also: None,
            };
        }
        if !text_mask.data[pn] || pn == prev || pn == start || i > n_limit {
            return Walk::Blocked {
                own: start,
                also: Some(pn),
            };
        }
        let c = read_color(pn);
        if c != 0 {
            return Walk::Colored(c);
        }
        prev = pn;
        let (x, y) = next.step(nx, ny);
        nx = x;
        ny = y;
    }
}

/// Algorithm-1 grouping: every positive border pixel climbs the next-step
/// graph until it reaches a colored pixel, adopting its color, or blocks
/// (leaves the mask, self-loops, or exceeds the step budget N = number of
/// positive pixels).
pub fn group_parallel(seeds: &InstanceMap, next: &NextMap, text_mask: &BitMask) -> InstanceMap {
    let n = text_mask.count();
    let colors: Vec<AtomicU32> = seeds.labels.iter().map(|&v| AtomicU32::new(v)).collect();
    let blocks: Vec<AtomicU8> = (0..seeds.labels.len()).map(|_| AtomicU8::new(0)).collect();

    let walkers: Vec<usize> = (0..seeds.labels.len())
        .filter(|&i| text_mask.data[i] && seeds.labels[i] == 0)
        .collect();

    let run = |&p: &usize| {
        match walk(
            p,
            next,
            text_mask,
            n,
            |i| colors[i].load(Ordering::Relaxed),
            |i| blocks[i].load(Ordering::Relaxed) == 1,
        ) {
            Walk::Colored(c) => colors[p].store(c, Ordering::Relaxed),
            Walk::Blocked { own, also } => {
                if let Some(q) = also {
                    blocks[q].store(1, Ordering::Relaxed);
                }
                blocks[own].store(1, Ordering::Relaxed);
            }
        }
    };

    #[cfg(feature = "parallel")]
    walkers.par_iter().for_each(run);
    #[cfg(not(feature = "parallel"))]
    walkers.iter().for_each(run);

    InstanceMap {
        width: seeds.width,
        height: seeds.height,
        labels: colors.into_iter().map(|a| a.into_inner()).collect(),
    }
}

/// Single-walker reference with no shortcut coloring: each border pixel
/// follows its chain reading only the original seeds. Same contract as
/// [`group_parallel`]; used as the grouping oracle.
pub fn group_sequential(seeds: &InstanceMap, next: &NextMap, text_mask: &BitMask) -> InstanceMap {
    let n = text_mask.count();
    let mut out = seeds.clone();
    for p in 0..seeds.labels.len() {
        if !text_mask.data[p] || seeds.labels[p] != 0 {
            continue;
        }
        if let Walk::Colored(c) = walk(p, next, text_mask, n, |i| seeds.labels[i], |_| false) {
            out.labels[p] = c;
        }
    }
    out
}
