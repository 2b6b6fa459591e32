//! File formats: the TMM1 float-map container, ICDAR-style annotation
//! lines, detection output, and PPM rendering of maps and instances.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::detect::Detection;
use crate::geometry::{Point, PolyKind, TextPolygon};
use crate::grouping::InstanceMap;
use crate::labelgen::RasterMap;

const MAGIC: &[u8; 4] = b"TMM1";
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected TMM1")]
    BadMagic,
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("truncated map file: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, IoError>;

/// Write a map as TMM1: magic, u32-LE width/height/channels, then planar
/// channel-major row-major f32-LE values.
pub fn write_map(path: &Path, map: &RasterMap) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + map.data.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(map.width as u32).to_le_bytes());
    buf.extend_from_slice(&(map.height as u32).to_le_bytes());
    buf.extend_from_slice(&(map.channels as u32).to_le_bytes());
    for v in &map.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_map(path: &Path) -> Result<RasterMap> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(IoError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(IoError::BadMagic);
    }
    let rd = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (width, height, channels) = (rd(4), rd(8), rd(12));
    if channels == 0 || width == 0 || height == 0 {
        return Err(IoError::BadHeader(format!(
            "zero dimension: {width}x{height}x{channels}"
        )));
    }
    let count = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| IoError::BadHeader("dimension overflow".into()))?;
    let expected = HEADER_LEN + count * 4;
    if bytes.len() != expected {
        return Err(IoError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RasterMap {
        width,
        height,
        channels,
        data,
    })
}

/// A non-fatal annotation parse problem, reported with its 1-based line.
#[derive(Debug, Clone)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

/// Parse annotation lines: comma-separated coordinates (8 for quads, 28
/// for curved), optionally followed by a transcription; `###` marks
/// DO-NOT-CARE. Malformed lines are skipped with a warning.
pub fn parse_annotation_str(text: &str) -> (Vec<TextPolygon>, Vec<ParseWarning>) {
    let mut polys = Vec::new();
    let mut warnings = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim().trim_start_matches('\u{feff}');
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').collect();
        let mut nums: Vec<f64> = Vec::new();
        let mut rest = 0;
        for (j, t) in tokens.iter().enumerate() {
            match t.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => nums.push(v),
                _ => {
                    rest = j;
                    break;
                }
            }
            rest = j + 1;
        }
        let transcription = tokens[rest..].join(",");
        let ignore = transcription.trim() == "###";
        let kind = match nums.len() {
            8 => PolyKind::Quad,
            28 => PolyKind::Curved14,
            n => {
                warnings.push(ParseWarning {
                    line: line_no,
                    message: format!("expected 8 or 28 coordinates, found {n}"),
                });
                continue;
            }
        };
        let vertices: Vec<Point> = nums
            .chunks_exact(2)
            .map(|c| Point::new(c[0], c[1]))
            .collect();
        match TextPolygon::new(kind, vertices, ignore) {
            Ok(p) => polys.push(p),
            Err(e) => warnings.push(ParseWarning {
                line: line_no,
                message: e.to_string(),
            }),
        }
    }
    (polys, warnings)
}

pub fn parse_annotations(path: &Path) -> Result<(Vec<TextPolygon>, Vec<ParseWarning>)> {
    let text = fs::read_to_string(path)?;
    Ok(parse_annotation_str(&text))
}

/// One polygon per line, coordinates then the score.
pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    let mut out = String::new();
    for d in dets {
        out.push_str(&format_detection(d));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn format_detection(d: &Detection) -> String {
    let mut s = String::new();
    for p in &d.polygon {
        s.push_str(&format!("{},{},", trim_float(p.x), trim_float(p.y)));
    }
    s.push_str(&trim_float(d.score as f64));
    s
}

fn trim_float(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.4}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

/// Parse a detections file written by [`write_detections`].
pub fn parse_detections_str(text: &str) -> Vec<Detection> {
    let mut dets = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split(',')
            .filter_map(|t| t.trim().parse::<f64>().ok())
            .collect();
        if nums.len() < 7 || nums.len() % 2 == 0 {
            continue;
        }
        let polygon = nums[..nums.len() - 1]
            .chunks_exact(2)
            .map(|c| Point::new(c[0], c[1]))
            .collect();
        dets.push(Detection {
            polygon,
            score: *nums.last().unwrap() as f32,
        });
    }
    dets
}

/// Binary PPM (P6) writer.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    assert_eq!(rgb.len(), width * height * 3);
    let mut f = fs::File::create(path)?;
    write!(f, "P6\n{width} {height}\n255\n")?;
    f.write_all(rgb)?;
    Ok(())
}

/// Grayscale rendering of a 1-channel map (values clamped to [0,1]).
pub fn render_gray(map: &RasterMap) -> Vec<u8> {
    let mut rgb = Vec::with_capacity(map.width * map.height * 3);
    for &v in map.channel(0) {
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        rgb.extend_from_slice(&[g, g, g]);
    }
    rgb
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Direction-field rendering: hue from the vector angle, brightness from
/// its norm (the color-wheel style used for center-direction maps).
pub fn render_direction(map: &RasterMap) -> Vec<u8> {
    assert_eq!(map.channels, 2);
    let (u, v) = (map.channel(0), map.channel(1));
    let mut rgb = Vec::with_capacity(map.width * map.height * 3);
    for i in 0..u.len() {
        let norm = (u[i] * u[i] + v[i] * v[i]).sqrt().clamp(0.0, 1.0);
        if norm < 1e-6 {
            rgb.extend_from_slice(&[0, 0, 0]);
        } else {
            let ang = v[i].atan2(u[i]).to_degrees();
            rgb.extend_from_slice(&hsv_to_rgb(ang, 1.0, norm));
        }
    }
    rgb
}

/// Distinct color per instance id (golden-angle hues), black background.
pub fn render_instances(inst: &InstanceMap) -> Vec<u8> {
    let mut rgb = Vec::with_capacity(inst.labels.len() * 3);
    for &id in &inst.labels {
        if id == 0 {
            rgb.extend_from_slice(&[0, 0, 0]);
        } else {
            let hue = (id as f32 * 137.508).rem_euclid(360.0);
            rgb.extend_from_slice(&hsv_to_rgb(hue, 0.85, 1.0));
        }
    }
    rgb
}
