//! Static-grid zoning features and the entropy score of a density vector.
//!
//! A grid splits the canvas into `rows x cols` zones; the feature of a zone
//! is the fraction of its pixels that are foreground ink. On the default
//! 44x44 canvas the 4x4 grid yields sixteen exactly 11x11 zones.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::preprocess::{preprocess_pipeline, PreprocessConfig, PreprocessDiagnostics};
use crate::raster::{BinaryImage, ClassInfo, RawDataset};

/// Uniform zone grid: `rows x cols` zones over the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    rows: usize,
    cols: usize,
}

impl GridSpec {
    /// Panics if either dimension is zero.
    pub fn new(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid dimensions must be >= 1");
        Self { rows, cols }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of features the grid produces.
    pub fn zones(&self) -> usize {
        self.rows * self.cols
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 4, cols: 4 }
    }
}

impl FromStr for GridSpec {
    type Err = ZoningError;

    /// Parses `"4x4"` style grid specs.
    fn from_str(s: &str) -> Result<Self, ZoningError> {
        let bad = || ZoningError::BadGridSpec(s.to_string());
        let (rows, cols) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let rows: usize = rows.trim().parse().map_err(|_| bad())?;
        let cols: usize = cols.trim().parse().map_err(|_| bad())?;
        if rows == 0 || cols == 0 {
            return Err(bad());
        }
        Ok(Self { rows, cols })
    }
}

/// Zone densities in row-major zone order, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ZoningError> {
        for &v in &values {
            if !(0.0..=1.0).contains(&v) {
                return Err(ZoningError::ValueOutOfRange(v));
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// One labeled feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub class_id: usize,
    pub sample_id: String,
    pub features: FeatureVector,
}

/// Labeled feature vectors for a whole corpus; the unit the splitter and the
/// classifiers consume.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub grid: GridSpec,
    pub classes: Vec<ClassInfo>,
    pub rows: Vec<FeatureRow>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ZoningError {
    #[error("image {width}x{height} is smaller than the {rows}x{cols} grid")]
    ImageSmallerThanGrid {
        width: usize,
        height: usize,
        rows: usize,
        cols: usize,
    },
    #[error("feature value {0} outside [0, 1]")]
    ValueOutOfRange(f64),
    #[error("negative value {0} passed to grid entropy")]
    NegativeEntropyInput(f64),
    #[error("invalid grid spec {0:?}, expected ROWSxCOLS")]
    BadGridSpec(String),
    #[error("feature csv line {line}: {what}")]
    Csv { line: usize, what: String },
}

/// Foreground count and pixel count per zone; integer arithmetic, the exact
/// numbers behind [`zone_densities`].
pub fn zone_counts(img: &BinaryImage, grid: &GridSpec) -> Result<Vec<(usize, usize)>, ZoningError> {
    let (w, h) = (img.width(), img.height());
    if w < grid.cols || h < grid.rows {
        return Err(ZoningError::ImageSmallerThanGrid {
            width: w,
            height: h,
            rows: grid.rows,
            cols: grid.cols,
        });
    }
    let mut counts = Vec::with_capacity(grid.zones());
    for zr in 0..grid.rows {
        let y0 = zr * h / grid.rows;
        let y1 = (zr + 1) * h / grid.rows;
        for zc in 0..grid.cols {
            let x0 = zc * w / grid.cols;
            let x1 = (zc + 1) * w / grid.cols;
            let mut fg = 0;
            for y in y0..y1 {
                for x in x0..x1 {
                    if img.get(x, y) {
                        fg += 1;
                    }
                }
            }
            counts.push((fg, (y1 - y0) * (x1 - x0)));
        }
    }
    Ok(counts)
}

/// Zone ink densities in row-major zone order (top-left zone first).
pub fn zone_densities(img: &BinaryImage, grid: &GridSpec) -> Result<FeatureVector, ZoningError> {
    let values = zone_counts(img, grid)?
        .into_iter()
        .map(|(fg, area)| fg as f64 / area as f64)
        .collect();
    Ok(FeatureVector { values })
}

/// Shannon entropy (bits) of a non-negative vector after normalizing it to
/// sum 1. An all-zero vector scores 0; zero entries contribute nothing.
pub fn grid_entropy(values: &[f64]) -> Result<f64, ZoningError> {
    let mut sum = 0.0;
    for &v in values {
        if v < 0.0 {
            return Err(ZoningError::NegativeEntropyInput(v));
        }
        sum += v;
    }
    if sum == 0.0 {
        return Ok(0.0);
    }
    let mut entropy = 0.0;
    for &v in values {
        if v > 0.0 {
            let p = v / sum;
            entropy -= p * p.log2();
        }
    }
    Ok(entropy)
}

/// Runs the preprocessing pipeline and the zoning extractor over a whole
/// dataset. Returns one feature row per sample in dataset order, plus the
/// per-sample preprocessing diagnostics in the same order.
pub fn extract_all(
    ds: &RawDataset,
    pcfg: &PreprocessConfig,
    grid: &GridSpec,
) -> Result<(FeatureTable, Vec<PreprocessDiagnostics>), ZoningError> {
    let mut rows = Vec::with_capacity(ds.samples.len());
    let mut diagnostics = Vec::with_capacity(ds.samples.len());
    for sample in &ds.samples {
        let (binary, diag) = preprocess_pipeline(&sample.image, pcfg);
        let features = zone_densities(&binary, grid)?;
        rows.push(FeatureRow {
            class_id: sample.class_id,
            sample_id: sample.sample_id.clone(),
            features,
        });
        diagnostics.push(diag);
    }
    Ok((
        FeatureTable {
            grid: *grid,
            classes: ds.classes.clone(),
            rows,
        },
        diagnostics,
    ))
}

/// Formats a feature value with 9 significant digits; the fixed CSV precision.
fn format_feature(v: f64) -> String {
    format!("{v:.8e}")
}

impl FeatureTable {
    /// Serializes to the interchange CSV: header `class_id,sample_id,f0,...`,
    /// features at 9 significant digits. Writing, parsing, and re-writing a
    /// table reproduces the bytes exactly.
    pub fn to_csv(&self) -> String {
        let width = self.grid.zones();
        let mut out = String::from("class_id,sample_id");
        for i in 0..width {
            let _ = write!(out, ",f{i}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.class_id, row.sample_id);
            for &v in row.features.values() {
                let _ = write!(out, ",{}", format_feature(v));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the interchange CSV. The grid geometry is not recorded in the
    /// file, so the result carries a flat `1 x n_features` grid; class names
    /// are reconstructed as `class_<id>`.
    pub fn from_csv(text: &str) -> Result<Self, ZoningError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(ZoningError::Csv {
            line: 1,
            what: "empty file".into(),
        })?;
        let mut fields = header.split(',');
        if fields.next() != Some("class_id") || fields.next() != Some("sample_id") {
            return Err(ZoningError::Csv {
                line: 1,
                what: "header must start with class_id,sample_id".into(),
            });
        }
        let n_features = fields.count();
        if n_features == 0 {
            return Err(ZoningError::Csv {
                line: 1,
                what: "no feature columns".into(),
            });
        }

        let mut rows = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let bad = |what: String| ZoningError::Csv { line: lineno, what };
            let mut fields = line.split(',');
            let class_id: usize = fields
                .next()
                .ok_or_else(|| bad("missing class_id".into()))?
                .parse()
                .map_err(|_| bad("class_id is not an unsigned integer".into()))?;
            let sample_id = fields
                .next()
                .ok_or_else(|| bad("missing sample_id".into()))?
                .to_string();
            let mut values = Vec::with_capacity(n_features);
            for field in fields {
                let v: f64 = field
                    .parse()
                    .map_err(|_| bad(format!("bad feature value {field:?}")))?;
                values.push(v);
            }
            if values.len() != n_features {
                return Err(bad(format!(
                    "expected {n_features} features, found {}",
                    values.len()
                )));
            }
            let features = FeatureVector::new(values)
                .map_err(|e| bad(e.to_string()))?;
            rows.push(FeatureRow {
                class_id,
                sample_id,
                features,
            });
        }

        let mut ids: Vec<usize> = rows.iter().map(|r| r.class_id).collect();
        ids.sort_unstable();
        ids.dedup();
        for (index, &id) in ids.iter().enumerate() {
            if id != index {
                return Err(ZoningError::Csv {
                    line: 1,
                    what: format!("class ids must be contiguous 0..N-1, found {id}"),
                });
            }
        }
        let classes = ids
            .iter()
            .map(|&id| ClassInfo {
                id,
                name: format!("class_{id}"),
            })
            .collect();

        Ok(Self {
            grid: GridSpec::new(1, n_features),
            classes,
            rows,
        })
    }

    /// Number of samples with each class id, indexed by class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for row in &self.rows {
            counts[row.class_id] += 1;
        }
        counts
    }

    pub fn n_features(&self) -> usize {
        self.grid.zones()
    }
}
