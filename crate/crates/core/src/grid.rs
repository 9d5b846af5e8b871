//! Attribution rasters over a 2D slice of the input space.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::{Method, MethodTag};
use crate::dataset::fmt17;
use crate::error::{check_dim, Error, Result};
use crate::function::ScalarModel;
use crate::heatmap;
use crate::par::{self, Execution};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// `row,col,value` lines under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,value\n");
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push_str(&format!("{r},{c},{}\n", fmt17(self.get(r, c))));
            }
        }
        out
    }

    pub fn from_csv(text: &str, rows: usize, cols: usize) -> Result<Self> {
        let mut m = Matrix::zeros(rows, cols);
        let mut seen = vec![false; rows * cols];
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        for record in reader.records() {
            let record = record?;
            let field = |i: usize| {
                record
                    .get(i)
                    .ok_or_else(|| Error::Format("short row".into()))
            };
            let parse_idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Format(format!("bad index `{s}`: {e}")))
            };
            let r = parse_idx(field(0)?)?;
            let c = parse_idx(field(1)?)?;
            let v: f64 = field(2)?
                .parse()
                .map_err(|e| Error::Format(format!("bad value: {e}")))?;
            if r >= rows || c >= cols {
                return Err(Error::Format(format!("cell ({r}, {c}) out of range")));
            }
            m.data[r * cols + c] = v;
            seen[r * cols + c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("channel file is missing cells".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Feature swept along columns (left to right).
    pub dim_x: usize,
    /// Feature swept along rows (bottom to top; row 0 is the top).
    pub dim_y: usize,
    /// Full-length base point; entries at `dim_x` and `dim_y` are ignored.
    pub fixed_values: Vec<f64>,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// `(width, height)` in cells.
    pub resolution: (usize, usize),
}

impl GridSpec {
    pub const DEFAULT_RESOLUTION: (usize, usize) = (100, 73);

    /// Sweeps features 0 and 1 over the given ranges at the default resolution.
    pub fn plane(n: usize, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        GridSpec {
            dim_x: 0,
            dim_y: 1,
            fixed_values: vec![0.0; n],
            x_range,
            y_range,
            resolution: Self::DEFAULT_RESOLUTION,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 2 {
            return Err(Error::config("grid needs a model with at least two inputs"));
        }
        check_dim(n, self.fixed_values.len())?;
        if self.dim_x == self.dim_y || self.dim_x >= n || self.dim_y >= n {
            return Err(Error::config(
                "grid axes must be two distinct input features",
            ));
        }
        if self.resolution.0 < 2 || self.resolution.1 < 2 {
            return Err(Error::config("grid resolution must be at least 2×2"));
        }
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && hi > lo;
        if !ordered(self.x_range) || !ordered(self.y_range) {
            return Err(Error::config("grid ranges must be nonempty"));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.resolution.0
    }

    pub fn height(&self) -> usize {
        self.resolution.1
    }

    /// Center of cell `(row, col)`.
    pub fn cell_point(&self, row: usize, col: usize) -> Vec<f64> {
        let (xlo, xhi) = self.x_range;
        let (ylo, yhi) = self.y_range;
        let mut p = self.fixed_values.clone();
        p[self.dim_x] = xlo + (col as f64 + 0.5) * (xhi - xlo) / self.width() as f64;
        p[self.dim_y] = yhi - (row as f64 + 0.5) * (yhi - ylo) / self.height() as f64;
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub lp_digest: Option<String>,
    pub encoding: Option<String>,
    pub method: MethodTag,
    pub config_digest: String,
    /// Base seed the per-cell seeds are derived from.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub spec: GridSpec,
    /// One channel per input feature.
    pub feature_channels: Vec<Matrix>,
    /// Elementwise sum of the feature channels, in feature order.
    pub sum: Matrix,
    pub prediction: Matrix,
    pub provenance: Provenance,
}

/// Evaluates `method` at every cell center of `grid`.
///
/// Randomized methods get an independent seed per cell derived from the
/// method's own seed and the cell index, so the result does not depend on
/// `exec`.
pub fn grid_attribution(
    model: &impl ScalarModel,
    method: &Method,
    grid: &GridSpec,
    exec: Execution,
) -> Result<GridResult> {
    let n = model.input_dim();
    grid.validate(n)?;
    let (width, height) = grid.resolution;
    let cells = width * height;
    let base_seed = match method {
        Method::FeaturePermutation(c) | Method::Lime(c) => c.seed,
        _ => 0,
    };

    let points: Vec<Vec<f64>> = (0..cells)
        .map(|k| grid.cell_point(k / width, k % width))
        .collect();
    let attributions = exec.map_indexed(cells, |k| {
        let cell_method = if method.is_randomized() {
            method.with_seed(par::derive_seed(base_seed, k as u64))
        } else {
            method.clone()
        };
        cell_method.attribute(model, &points[k])
    });

    let mut feature_channels = vec![Matrix::zeros(height, width); n];
    let mut sum = Matrix::zeros(height, width);
    for (k, a) in attributions.into_iter().enumerate() {
        let a = a?;
        for (ch, v) in feature_channels.iter_mut().zip(&a.values) {
            ch.data[k] = *v;
        }
        sum.data[k] = a.values.iter().sum();
    }
    let predictions = model.values(&points);
    let prediction = Matrix::from_vec(height, width, predictions)?;
    Ok(GridResult {
        spec: grid.clone(),
        feature_channels,
        sum,
        prediction,
        provenance: Provenance {
            lp_digest: None,
            encoding: None,
            method: method.tag(),
            config_digest: method.config_digest(),
            seed: base_seed,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub name: String,
    pub csv: String,
    pub ppm: String,
    pub csv_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridManifest {
    pub provenance: Provenance,
    pub spec: GridSpec,
    pub rows: usize,
    pub cols: usize,
    pub channels: Vec<ChannelEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl GridResult {
    /// Channels in file order: `x1..xn`, `sum`, `prediction`.
    pub fn named_channels(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = self
            .feature_channels
            .iter()
            .enumerate()
            .map(|(i, m)| (format!("x{}", i + 1), m))
            .collect();
        out.push(("sum".into(), &self.sum));
        out.push(("prediction".into(), &self.prediction));
        out
    }

    /// Writes one CSV and one PPM per channel plus `manifest.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<GridManifest> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut channels = Vec::new();
        for (name, matrix) in self.named_channels() {
            let csv_name = format!("channel_{name}.csv");
            let ppm_name = format!("channel_{name}.ppm");
            let csv_text = matrix.to_csv();
            std::fs::write(dir.join(&csv_name), &csv_text)?;
            heatmap::render_heatmap(matrix, dir.join(&ppm_name))?;
            channels.push(ChannelEntry {
                name,
                csv: csv_name,
                ppm: ppm_name,
                csv_sha256: hex::encode(Sha256::digest(csv_text.as_bytes())),
            });
        }
        let manifest = GridManifest {
            provenance: self.provenance.clone(),
            spec: self.spec.clone(),
            rows: self.sum.rows,
            cols: self.sum.cols,
            channels,
        };
        std::fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(manifest)
    }
}

/// Re-reads a written grid and checks file digests and that the sum channel
/// equals the sum of the feature channels at every cell.
pub fn verify_grid_dir(dir: impl AsRef<Path>) -> Result<GridManifest> {
    let dir = dir.as_ref();
    let manifest: GridManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let mut features = Vec::new();
    let mut sum = None;
    for entry in &manifest.channels {
        let text = std::fs::read_to_string(dir.join(&entry.csv))?;
        if hex::encode(Sha256::digest(text.as_bytes())) != entry.csv_sha256 {
            return Err(Error::Format(format!(
                "{} does not match its digest",
                entry.csv
            )));
        }
        if !dir.join(&entry.ppm).is_file() {
            return Err(Error::Format(format!("missing image {}", entry.ppm)));
        }
        let m = Matrix::from_csv(&text, manifest.rows, manifest.cols)?;
        match entry.name.as_str() {
            "sum" => sum = Some(m),
            "prediction" => {}
            _ => features.push(m),
        }
    }
    let sum = sum.ok_or_else(|| Error::Format("manifest lists no sum channel".into()))?;
    if features.is_empty() {
        return Err(Error::Format("manifest lists no feature channels".into()));
    }
    for k in 0..sum.data.len() {
        let expected: f64 = features.iter().map(|f| f.data[k]).sum();
        if expected != sum.data[k] {
            return Err(Error::Format(format!(
                "sum channel differs from feature sum at cell {k}: {} vs {expected}",
                sum.data[k]
            )));
        }
    }
    Ok(manifest)
}
