//! Deterministic synthetic glyph corpus.
//!
//! Each class gets a prototype of a few line/arc strokes plus up to two
//! dots, derived from (master seed, class id). Each sample renders the
//! prototype under translation/rotation/thickness jitter with a sprinkling
//! of speck noise, derived from (master seed, class id, sample index), so a
//! configuration always regenerates the corpus byte for byte. The glyphs are
//! not any real script; they exist to give the pipeline a labeled,
//! letter-shaped workload.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{load_dataset, write_pgm, DatasetError, GrayImage, RawDataset};
use crate::rng::{seeded, subseed};

const INK_LEVEL: f64 = 30.0;
const PAPER_LEVEL: f64 = 235.0;
const NOISE_SPAN: i64 = 15;
/// Dot radius as a fraction of the canvas; big enough to survive the default
/// speck filter.
const DOT_RADIUS: f64 = 0.04;

const STREAM_PROTOTYPE: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Corpus shape and difficulty knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub canvas_w: usize,
    pub canvas_h: usize,
    /// Maximum per-sample translation, in pixels.
    pub max_translation: f64,
    /// Maximum per-sample rotation, in degrees.
    pub max_rotation_deg: f64,
    /// Per-sample stroke thickness range, in pixels.
    pub thickness_min: f64,
    pub thickness_max: f64,
    /// Expected speck count per image.
    pub speck_rate: f64,
    pub master_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_classes: 44,
            samples_per_class: 102,
            canvas_w: 64,
            canvas_h: 64,
            max_translation: 6.0,
            max_rotation_deg: 10.0,
            thickness_min: 2.0,
            thickness_max: 4.0,
            speck_rate: 2.0,
            master_seed: 42,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad synth config: {0}")]
    BadConfig(String),
    #[error("class {class_id} out of range, corpus has {n_classes} classes")]
    ClassOutOfRange { class_id: usize, n_classes: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |what: &str| Err(SynthError::BadConfig(what.into()));
        if self.n_classes < 2 {
            return bad("n_classes must be >= 2");
        }
        if self.samples_per_class < 2 {
            return bad("samples_per_class must be >= 2");
        }
        if self.canvas_w < 16 || self.canvas_h < 16 {
            return bad("canvas must be at least 16x16");
        }
        if self.thickness_min.is_nan()
            || self.thickness_min <= 0.0
            || self.thickness_max < self.thickness_min
        {
            return bad("thickness range must be positive and ordered");
        }
        if self.max_translation < 0.0 || self.max_rotation_deg < 0.0 || self.speck_rate < 0.0 {
            return bad("jitter amounts must be non-negative");
        }
        Ok(())
    }
}

/// Stroke primitives in normalized [0, 1] glyph coordinates.
#[derive(Debug, Clone, Copy)]
enum Stroke {
    Line { x0: f64, y0: f64, x1: f64, y1: f64 },
    Arc { cx: f64, cy: f64, radius: f64, start: f64, sweep: f64 },
}

#[derive(Debug, Clone)]
struct Prototype {
    strokes: Vec<Stroke>,
    dots: Vec<(f64, f64)>,
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen::<f64>()
}

fn derive_prototype(master_seed: u64, class_id: usize) -> Prototype {
    let mut rng = seeded(subseed(master_seed, &[STREAM_PROTOTYPE, class_id as u64]));
    let n_strokes = rng.gen_range(2..=5usize);
    let mut strokes = Vec::with_capacity(n_strokes);
    for _ in 0..n_strokes {
        if rng.gen_bool(0.5) {
            // Keep segments away from the border and long enough to read as
            // strokes rather than specks.
            let pick = |rng: &mut ChaCha8Rng| 0.2 + 0.6 * unit(rng);
            let (mut x0, mut y0, mut x1, mut y1) =
                (pick(&mut rng), pick(&mut rng), pick(&mut rng), pick(&mut rng));
            for _ in 0..32 {
                let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
                if len >= 0.3 {
                    break;
                }
                x0 = pick(&mut rng);
                y0 = pick(&mut rng);
                x1 = pick(&mut rng);
                y1 = pick(&mut rng);
            }
            strokes.push(Stroke::Line { x0, y0, x1, y1 });
        } else {
            strokes.push(Stroke::Arc {
                cx: 0.3 + 0.4 * unit(&mut rng),
                cy: 0.3 + 0.4 * unit(&mut rng),
                radius: 0.12 + 0.16 * unit(&mut rng),
                start: 2.0 * PI * unit(&mut rng),
                sweep: 0.5 * PI + PI * unit(&mut rng),
            });
        }
    }
    let n_dots = rng.gen_range(0..=2usize);
    let dots = (0..n_dots)
        .map(|_| (0.25 + 0.5 * unit(&mut rng), 0.25 + 0.5 * unit(&mut rng)))
        .collect();
    Prototype { strokes, dots }
}

fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> usize {
    // Knuth's multiplication method; fine for the small rates used here.
    let limit = (-rate).exp();
    let mut count = 0usize;
    let mut product = unit(rng);
    while product > limit {
        count += 1;
        product *= unit(rng);
    }
    count
}

fn distance_to_segment(px: f64, py: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (x0 + t * dx, y0 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

fn distance_to_arc(px: f64, py: f64, cx: f64, cy: f64, radius: f64, start: f64, sweep: f64) -> f64 {
    let (vx, vy) = (px - cx, py - cy);
    let angle = vy.atan2(vx);
    let delta = (angle - start).rem_euclid(2.0 * PI);
    if delta <= sweep {
        ((vx * vx + vy * vy).sqrt() - radius).abs()
    } else {
        let ends = [start, start + sweep];
        ends.iter()
            .map(|a| {
                let (ex, ey) = (cx + radius * a.cos(), cy + radius * a.sin());
                ((px - ex).powi(2) + (py - ey).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Renders one glyph image. The result is a pure function of
/// (config, class id, sample index).
pub fn gen_glyph(
    class_id: usize,
    sample_index: usize,
    cfg: &SynthConfig,
) -> Result<GrayImage, SynthError> {
    cfg.validate()?;
    if class_id >= cfg.n_classes {
        return Err(SynthError::ClassOutOfRange {
            class_id,
            n_classes: cfg.n_classes,
        });
    }

    let proto = derive_prototype(cfg.master_seed, class_id);
    let (w, h) = (cfg.canvas_w, cfg.canvas_h);
    let scale = (w.min(h) - 1) as f64;
    let (center_x, center_y) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);

    let mut rng = seeded(subseed(
        cfg.master_seed,
        &[STREAM_SAMPLE, class_id as u64, sample_index as u64],
    ));
    let dx = (2.0 * unit(&mut rng) - 1.0) * cfg.max_translation;
    let dy = (2.0 * unit(&mut rng) - 1.0) * cfg.max_translation;
    let theta = (2.0 * unit(&mut rng) - 1.0) * cfg.max_rotation_deg.to_radians();
    let thickness =
        cfg.thickness_min + unit(&mut rng) * (cfg.thickness_max - cfg.thickness_min);

    let (sin_t, cos_t) = theta.sin_cos();
    let place = |x: f64, y: f64| -> (f64, f64) {
        // Normalized coords -> pixels -> rotate about the canvas center ->
        // translate by the sample jitter.
        let (px, py) = (x * scale, y * scale);
        let (rx, ry) = (px - center_x, py - center_y);
        (
            center_x + rx * cos_t - ry * sin_t + dx,
            center_y + rx * sin_t + ry * cos_t + dy,
        )
    };

    enum Placed {
        Segment { x0: f64, y0: f64, x1: f64, y1: f64, radius: f64 },
        Arc { cx: f64, cy: f64, radius: f64, start: f64, sweep: f64, half_width: f64 },
        Dot { cx: f64, cy: f64, radius: f64 },
    }

    let half_thick = thickness / 2.0;
    let mut placed = Vec::new();
    for stroke in &proto.strokes {
        match *stroke {
            Stroke::Line { x0, y0, x1, y1 } => {
                let (x0, y0) = place(x0, y0);
                let (x1, y1) = place(x1, y1);
                placed.push(Placed::Segment { x0, y0, x1, y1, radius: half_thick });
            }
            Stroke::Arc { cx, cy, radius, start, sweep } => {
                let (cx, cy) = place(cx, cy);
                placed.push(Placed::Arc {
                    cx,
                    cy,
                    radius: radius * scale,
                    start: start + theta,
                    sweep,
                    half_width: half_thick,
                });
            }
        }
    }
    for &(x, y) in &proto.dots {
        let (cx, cy) = place(x, y);
        placed.push(Placed::Dot { cx, cy, radius: DOT_RADIUS * scale });
    }

    let mut ink = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64, y as f64);
            let inked = placed.iter().any(|p| match *p {
                Placed::Segment { x0, y0, x1, y1, radius } => {
                    distance_to_segment(px, py, x0, y0, x1, y1) <= radius
                }
                Placed::Arc { cx, cy, radius, start, sweep, half_width } => {
                    distance_to_arc(px, py, cx, cy, radius, start, sweep) <= half_width
                }
                Placed::Dot { cx, cy, radius } => {
                    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() <= radius
                }
            });
            if inked {
                ink[y * w + x] = true;
            }
        }
    }

    // Specks: tiny ink blots of 1..=3 pixels, small enough for the default
    // speck filter to erase.
    for _ in 0..poisson(&mut rng, cfg.speck_rate) {
        let x = (unit(&mut rng) * w as f64) as usize % w;
        let y = (unit(&mut rng) * h as f64) as usize % h;
        let area = rng.gen_range(1..=3usize);
        let offsets = [(0usize, 0usize), (1, 0), (0, 1)];
        for &(ox, oy) in offsets.iter().take(area) {
            let (sx, sy) = (x + ox, y + oy);
            if sx < w && sy < h {
                ink[sy * w + sx] = true;
            }
        }
    }

    // Per-class noise texture: all samples of a class share it, so disabling
    // the jitter reproduces the prototype image exactly.
    let mut noise_rng = seeded(subseed(cfg.master_seed, &[STREAM_NOISE, class_id as u64]));
    let pixels: Vec<u8> = ink
        .iter()
        .map(|&is_ink| {
            let base = if is_ink { INK_LEVEL } else { PAPER_LEVEL };
            let noise = noise_rng.gen_range(-NOISE_SPAN..=NOISE_SPAN) as f64;
            (base + noise).clamp(0.0, 255.0) as u8
        })
        .collect();

    Ok(GrayImage::new(w, h, pixels))
}

/// Writes the full corpus in the dataset-directory layout (`classes.tsv`
/// plus `class_<id>/s<index>.pgm` files) and loads it back.
pub fn gen_corpus(cfg: &SynthConfig, out: &Path) -> Result<RawDataset, SynthError> {
    cfg.validate()?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source: io::Error| SynthError::Io { path, source }
    };

    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut tsv = String::new();
    for class_id in 0..cfg.n_classes {
        tsv.push_str(&format!("{class_id}\tsynth_{class_id}\n"));
    }
    let tsv_path = out.join("classes.tsv");
    fs::write(&tsv_path, tsv).map_err(io_err(&tsv_path))?;

    let digits = (cfg.samples_per_class - 1).to_string().len().max(3);
    for class_id in 0..cfg.n_classes {
        let dir = out.join(format!("class_{class_id}"));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for index in 0..cfg.samples_per_class {
            let img = gen_glyph(class_id, index, cfg)?;
            let path = dir.join(format!("s{index:0digits$}.pgm"));
            fs::write(&path, write_pgm(&img)).map_err(io_err(&path))?;
        }
    }

    Ok(load_dataset(out)?)
}
