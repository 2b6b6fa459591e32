//! Command-line workflows: label generation, synthetic scenes, detection,
//! evaluation, loss reporting, grouping benchmarks and map rendering.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use textmountain::detect::{detect_pipeline, DetectMode, Detection, PredictedMaps};
use textmountain::eval::{aggregate, match_image, GtRegion};
use textmountain::grouping::{
    extract_peaks, group_parallel, group_sequential, next_from_tcbp, score_instances,
    text_mask_from_ts, GraphSource, GroupConfig, InstanceMap,
};
use textmountain::io::{
    format_detection, parse_annotations, parse_detections_str, read_map, render_direction,
    render_gray, render_instances, write_map, write_ppm,
};
use textmountain::labelgen::{generate_labels, LabelSet, RasterMap};
use textmountain::loss::{self, LossWeights, TcdMaskSource};
use textmountain::synth::{apply_noise, generate_scene_with_labels, SynthConfig};

#[derive(Parser)]
#[command(name = "textmountain", version, about)]
struct Cli {
    /// Worker threads for parallel stages (default: TM_WORKERS or all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Tcbp,
    Tcd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Quad,
    Curved,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Auto,
    Gray,
    Dir,
    Inst,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground-truth maps from an annotation file
    GenLabels {
        /// Annotation file (x1,y1,...,[transcription|###] per line)
        ann: PathBuf,
        /// Image size as WxH, e.g. 640x480
        size: String,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Generate random synthetic scenes with ground-truth maps
    Synth {
        /// Number of scenes
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Scene size as WxH
        #[arg(long, default_value = "640x640")]
        size: String,
        /// Clipped Gaussian noise sigma on TS/TCBP
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Gaussian angle noise on TCD, degrees
        #[arg(long, default_value_t = 0.0)]
        angle_noise: f64,
        /// Text regions per scene
        #[arg(long, default_value_t = 6)]
        polys: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run post-processing on predicted maps and write detections
    Detect {
        /// Directory with ts.tmm/tcbp.tmm (and tcd.tmm), or of scene subdirs
        maps: PathBuf,
        #[arg(long, value_enum, default_value_t = SourceArg::Tcbp)]
        source: SourceArg,
        #[arg(long, value_enum, default_value_t = ModeArg::Curved)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.6)]
        gamma: f32,
        #[arg(long, default_value_t = 0.7)]
        score_min: f32,
        #[arg(long, default_value_t = 0.6)]
        border_min: f32,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score detections against ground truth
    Eval {
        /// Detections file written by `detect`
        dets: PathBuf,
        /// Ground-truth annotation file, or directory of scene subdirs
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// Report loss components between predicted and ground-truth bundles
    Loss {
        pred_dir: PathBuf,
        gt_dir: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        gamma: f32,
        #[arg(long, default_value_t = 5.0)]
        lambda_tcbp: f64,
        #[arg(long, default_value_t = 2.5)]
        lambda_tcd: f64,
    },
    /// Time sequential vs parallel grouping on a map bundle
    Bench {
        /// Directory with ts.tmm and tcbp.tmm
        maps: PathBuf,
        #[arg(long, default_value_t = 10)]
        iterations: usize,
    },
    /// Render a TMM1 map or instance map to a PPM image
    Render {
        map: PathBuf,
        #[arg(long, value_enum, default_value_t = StyleArg::Auto)]
        style: StyleArg,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let workers = cli.workers.or_else(|| {
        std::env::var("TM_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .context("size must be WxH, e.g. 640x480")?;
    Ok((w.parse()?, h.parse()?))
}

fn write_label_bundle(dir: &Path, labels: &LabelSet) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_map(&dir.join("ts.tmm"), &labels.ts)?;
    write_map(&dir.join("tcbp.tmm"), &labels.tcbp)?;
    write_map(&dir.join("tcd.tmm"), &labels.tcd)?;
    write_map(&dir.join("ignore.tmm"), &labels.ignore)?;
    let inst = RasterMap {
        width: labels.instance_gt.width,
        height: labels.instance_gt.height,
        channels: 1,
        data: labels.instance_gt.labels.iter().map(|&v| v as f32).collect(),
    };
    write_map(&dir.join("instances.tmm"), &inst)?;
    Ok(())
}

/// Scene subdirectories (sorted by name), or the directory itself when it
/// holds a map bundle directly.
fn scene_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    if root.join("ts.tmm").exists() {
        return Ok(vec![(String::from("."), root.to_path_buf())]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).with_context(|| format!("reading {}", root.display()))? {
        let entry = entry?;
        let p = entry.path();
        if p.is_dir() && p.join("ts.tmm").exists() {
            out.push((entry.file_name().to_string_lossy().into_owned(), p));
        }
    }
    out.sort();
    if out.is_empty() {
        bail!("no map bundles (ts.tmm) under {}", root.display());
    }
    Ok(out)
}

fn read_bundle(dir: &Path) -> Result<(RasterMap, RasterMap, Option<RasterMap>)> {
    let ts = read_map(&dir.join("ts.tmm"))?;
    let tcbp = read_map(&dir.join("tcbp.tmm"))?;
    let tcd = dir
        .join("tcd.tmm")
        .exists()
        .then(|| read_map(&dir.join("tcd.tmm")))
        .transpose()?;
    Ok((ts, tcbp, tcd))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenLabels { ann, size, out } => {
            let (w, h) = parse_size(&size)?;
            let (polys, warnings) =
                parse_annotations(&ann).with_context(|| format!("parsing {}", ann.display()))?;
            for w in &warnings {
                eprintln!("warning: {} line {}: {}", ann.display(), w.line, w.message);
            }
            let labels = generate_labels(&polys, w, h);
            write_label_bundle(&out, &labels)?;
            println!(
                "wrote {} maps for {} polygons ({} lines skipped)",
                out.display(),
                polys.len(),
                warnings.len()
            );
        }
        Command::Synth {
            n,
            size,
            noise,
            angle_noise,
            polys,
            seed,
            out,
        } => {
            let (w, h) = parse_size(&size)?;
            let cfg = SynthConfig {
                width: w,
                height: h,
                n_polys: polys,
                ..Default::default()
            };
            for i in 0..n {
                let scene_seed = seed.wrapping_add(i as u64);
                let (regions, mut labels) = generate_scene_with_labels(&cfg, scene_seed);
                if noise > 0.0 || angle_noise > 0.0 {
                    apply_noise(&mut labels, noise, angle_noise, scene_seed ^ 0x9e3779b9);
                }
                let dir = out.join(format!("scene_{i:03}"));
                write_label_bundle(&dir, &labels)?;
                let gt: String = regions
                    .iter()
                    .map(|p| {
                        let coords: Vec<String> = p
                            .vertices()
                            .iter()
                            .flat_map(|q| [format!("{:.2}", q.x), format!("{:.2}", q.y)])
                            .collect();
                        format!(
                            "{},{}\n",
                            coords.join(","),
                            if p.ignore { "###" } else { "text" }
                        )
                    })
                    .collect();
                std::fs::write(dir.join("gt.txt"), gt)?;
                println!("scene_{i:03}: {} regions", regions.len());
            }
        }
        Command::Detect {
            maps,
            source,
            mode,
            gamma,
            score_min,
            border_min,
            out,
        } => {
            let cfg = GroupConfig {
                gamma,
                instance_score_min: score_min,
                ts_border_min: border_min,
                graph_source: match source {
                    SourceArg::Tcbp => GraphSource::Tcbp,
                    SourceArg::Tcd => GraphSource::Tcd,
                },
            };
            let mode = match mode {
                ModeArg::Quad => DetectMode::Quad,
                ModeArg::Curved => DetectMode::Curved,
            };
            let mut lines = String::new();
            for (name, dir) in scene_dirs(&maps)? {
                let (ts, tcbp, tcd) = read_bundle(&dir)?;
                if cfg.graph_source == GraphSource::Tcd && tcd.is_none() {
                    bail!("--source tcd requires tcd.tmm in {}", dir.display());
                }
                let dets = detect_pipeline(
                    &PredictedMaps {
                        ts: &ts,
                        tcbp: &tcbp,
                        tcd: tcd.as_ref(),
                    },
                    &cfg,
                    mode,
                );
                lines.push_str(&format!("# {name}\n"));
                for d in &dets {
                    lines.push_str(&format_detection(d));
                    lines.push('\n');
                }
                println!("{name}: {} detections", dets.len());
            }
            std::fs::write(&out, lines)?;
        }
        Command::Eval { dets, gt, iou } => {
            let text = std::fs::read_to_string(&dets)
                .with_context(|| format!("reading {}", dets.display()))?;
            let per_scene = split_detections(&text);
            let mut tallies = Vec::new();
            for (name, scene_dets) in &per_scene {
                let gt_path = if gt.is_dir() {
                    let sub = gt.join(name).join("gt.txt");
                    if sub.exists() {
                        sub
                    } else {
                        gt.join("gt.txt")
                    }
                } else {
                    gt.clone()
                };
                let (polys, _) = parse_annotations(&gt_path)
                    .with_context(|| format!("parsing {}", gt_path.display()))?;
                let gts: Vec<GtRegion> = polys
                    .iter()
                    .map(|p| GtRegion {
                        polygon: p.vertices().to_vec(),
                        ignore: p.ignore,
                    })
                    .collect();
                tallies.push(match_image(scene_dets, &gts, iou));
            }
            let r = aggregate(tallies);
            println!(
                "P={:.3} R={:.3} F={:.3} (tp={} fp={} fn={})",
                r.precision, r.recall, r.f_measure, r.tp, r.fp, r.fn_
            );
        }
        Command::Loss {
            pred_dir,
            gt_dir,
            gamma,
            lambda_tcbp,
            lambda_tcd,
        } => {
            let (p_ts, p_tcbp, p_tcd) = read_bundle(&pred_dir)?;
            let p_tcd = p_tcd.context("pred bundle must include tcd.tmm")?;
            let (g_ts, g_tcbp, g_tcd) = read_bundle(&gt_dir)?;
            let g_tcd = g_tcd.context("gt bundle must include tcd.tmm")?;
            let ignore = if gt_dir.join("ignore.tmm").exists() {
                read_map(&gt_dir.join("ignore.tmm"))?
            } else {
                RasterMap::zeros(g_ts.width, g_ts.height, 1)
            };
            let gt = LabelSet {
                instance_gt: InstanceMap::zeros(g_ts.width, g_ts.height),
                ts: g_ts,
                tcbp: g_tcbp,
                tcd: g_tcd,
                ignore,
            };
            let weights = LossWeights {
                lambda_tcbp,
                lambda_tcd,
            };
            let (l_ts, n_pos, n_neg) = loss::loss_ts(&p_ts, &gt);
            let l_tcbp = loss::loss_tcbp(&p_tcbp, &gt);
            let l_tcd = loss::loss_tcd(&p_tcd, &gt, &p_tcbp, gamma, TcdMaskSource::PredictedTcbp);
            let r = loss::total_loss(l_ts, l_tcbp, l_tcd, n_pos, n_neg, &weights);
            println!(
                "l_ts={:.6} l_tcbp={:.6} l_tcd={:.6} total={:.6} (n_pos={} n_neg={})",
                r.l_ts, r.l_tcbp, r.l_tcd, r.total, r.n_pos, r.n_neg_selected
            );
        }
        Command::Bench { maps, iterations } => {
            let dir = &scene_dirs(&maps)?[0].1;
            let (ts, tcbp, _) = read_bundle(dir)?;
            let cfg = GroupConfig::default();
            let (seeds, _) = extract_peaks(&tcbp, &ts, &cfg);
            let (seeds, k) = score_instances(&seeds, &ts, &cfg);
            let mask = text_mask_from_ts(&ts, cfg.ts_border_min);
            let next = next_from_tcbp(&tcbp, &mask);

            let t0 = Instant::now();
            let mut seq = None;
            for _ in 0..iterations {
                seq = Some(group_sequential(&seeds, &next, &mask));
            }
            let seq_ms = t0.elapsed().as_secs_f64() * 1000.0 / iterations as f64;

            let t0 = Instant::now();
            let mut par = None;
            for _ in 0..iterations {
                par = Some(group_parallel(&seeds, &next, &mask));
            }
            let par_ms = t0.elapsed().as_secs_f64() * 1000.0 / iterations as f64;

            let same = seq == par;
            println!(
                "{}x{} K={} workers={} sequential={:.3}ms parallel={:.3}ms speedup={:.2}x identical={}",
                ts.width,
                ts.height,
                k,
                rayon::current_num_threads(),
                seq_ms,
                par_ms,
                seq_ms / par_ms,
                same
            );
        }
        Command::Render { map, style, out } => {
            let m = read_map(&map)?;
            let style = match style {
                StyleArg::Auto => {
                    if m.channels == 2 {
                        StyleArg::Dir
                    } else if map
                        .file_stem()
                        .map(|s| s.to_string_lossy().contains("instance"))
                        .unwrap_or(false)
                    {
                        StyleArg::Inst
                    } else {
                        StyleArg::Gray
                    }
                }
                s => s,
            };
            let rgb = match style {
                StyleArg::Gray => render_gray(&m),
                StyleArg::Dir => render_direction(&m),
                StyleArg::Inst => {
                    let inst = InstanceMap {
                        width: m.width,
                        height: m.height,
                        labels: m.channel(0).iter().map(|&v| v.max(0.0) as u32).collect(),
                    };
                    render_instances(&inst)
                }
                StyleArg::Auto => unreachable!(),
            };
            write_ppm(&out, m.width, m.height, &rgb)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

/// Split a detections file into per-scene lists on `# scene` headers.
fn split_detections(text: &str) -> Vec<(String, Vec<Detection>)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        if let Some(name) = line.strip_prefix("# ") {
            out.push((name.trim().to_string(), String::new()));
        } else if let Some(last) = out.last_mut() {
            last.1.push_str(line);
            last.1.push('\n');
        } else {
            out.push((String::from("."), format!("{line}\n")));
        }
    }
    if out.is_empty() {
        out.push((String::from("."), String::new()));
    }
    out.into_iter()
        .map(|(name, body)| (name, parse_detections_str(&body)))
        .collect()
}
