// SPDX-License-Identifier: Apache-2.0

//! Deterministic synthetic models with known decompositions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ModelGrid, ModelVector};
use crate::linops::SparseMatrix;

/// Constant background plus one rectangle of constant negative anomaly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockyParams {
    pub nz: usize,
    pub nx: usize,
    pub background: f64,
    pub anomaly: f64,
    /// Rectangle extents as fractions of the grid, drawn uniformly in these ranges.
    pub min_frac: f64,
    pub max_frac: f64,
    /// Cells between the rectangle and the grid boundary.
    pub margin: usize,
}

impl Default for BlockyParams {
    fn default() -> Self {
        BlockyParams {
            nz: 20,
            nx: 20,
            background: 2500.0,
            anomaly: -150.0,
            min_frac: 0.25,
            max_frac: 0.5,
            margin: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub z0: usize,
    pub z1: usize,
    pub x0: usize,
    pub x1: usize,
}

impl Rectangle {
    pub fn contains(&self, z: usize, x: usize) -> bool {
        (self.z0..self.z1).contains(&z) && (self.x0..self.x1).contains(&x)
    }
}

#[derive(Debug, Clone)]
pub struct BlockyModel {
    pub model: ModelVector,
    /// Anomaly part, zero outside the rectangle.
    pub anomaly: ModelVector,
    /// Constant background part.
    pub background: ModelVector,
    pub rectangle: Rectangle,
}

impl BlockyModel {
    pub fn support(&self) -> Vec<bool> {
        self.anomaly.data().iter().map(|&v| v != 0.0).collect()
    }

    /// Anisotropic total variation of the model.
    pub fn total_variation(&self) -> f64 {
        let r = &self.rectangle;
        let perim = 2 * ((r.z1 - r.z0) + (r.x1 - r.x0));
        // edges on the grid boundary have no difference across them
        let nz = self.model.grid().dims()[0];
        let nx = self.model.grid().dims()[1];
        let missing = [r.z0 == 0, r.z1 == nz].iter().filter(|&&b| b).count() * (r.x1 - r.x0)
            + [r.x0 == 0, r.x1 == nx].iter().filter(|&&b| b).count() * (r.z1 - r.z0);
        (perim - missing) as f64 * self.anomaly.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn blocky_anomaly_2d(p: &BlockyParams, seed: u64) -> Result<BlockyModel> {
    if p.nz < 2 * p.margin + 1 || p.nx < 2 * p.margin + 1 || p.nz < 2 || p.nx < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid {}x{} is too small for a margin of {}",
            p.nz, p.nx, p.margin
        )));
    }
    if !(0.0 < p.min_frac && p.min_frac <= p.max_frac && p.max_frac <= 1.0) {
        return Err(Error::InvalidParameter("need 0 < min_frac <= max_frac <= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extent = |n: usize| -> (usize, usize) {
        let room = n - 2 * p.margin;
        let lo = ((p.min_frac * n as f64).round() as usize).clamp(1, room);
        let hi = ((p.max_frac * n as f64).round() as usize).clamp(lo, room);
        let len = rng.random_range(lo..=hi);
        let start = rng.random_range(p.margin..=n - p.margin - len);
        (start, start + len)
    };
    let (z0, z1) = extent(p.nz);
    let (x0, x1) = extent(p.nx);
    let rectangle = Rectangle { z0, z1, x0, x1 };
    let grid = ModelGrid::new(&[p.nz, p.nx])?;
    let mut anomaly = vec![0.0; grid.len()];
    for x in 0..p.nx {
        for z in 0..p.nz {
            if rectangle.contains(z, x) {
                anomaly[grid.flat_index(&[z, x])] = p.anomaly;
            }
        }
    }
    let model = anomaly.iter().map(|a| a + p.background).collect();
    Ok(BlockyModel {
        model: ModelVector::new(grid.clone(), model)?,
        anomaly: ModelVector::new(grid.clone(), anomaly)?,
        background: ModelVector::constant(grid, p.background),
        rectangle,
    })
}

/// A row-selection operator keeping each cell with probability `fraction`
/// (exactly `round(fraction · n)` cells, chosen uniformly).
pub fn random_mask(n: usize, fraction: f64, seed: u64) -> Result<SparseMatrix> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("mask fraction {fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = (fraction * n as f64).round() as usize;
    let mut keep = rand::seq::index::sample(&mut rng, n, k).into_vec();
    keep.sort_unstable();
    let t: Vec<_> = keep.iter().enumerate().map(|(r, &c)| (r, c, 1.0)).collect();
    SparseMatrix::from_triplets(k, n, &t)
}

/// Rank-2 periodic background with rectangular "persons" in the leading
/// frames; the last `clean_frames` frames have no anomalies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoParams {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub clean_frames: usize,
    /// Background period in frames.
    pub period: usize,
    pub persons: usize,
    /// Person extent along x.
    pub width: usize,
    /// Person extent along y; split into head, body and legs bands.
    pub height: usize,
    /// Band intensities added to the background (head, body, legs).
    pub bands: [f64; 3],
    pub noise: f64,
}

impl Default for VideoParams {
    fn default() -> Self {
        VideoParams {
            nx: 32,
            ny: 24,
            nt: 40,
            clean_frames: 20,
            period: 10,
            persons: 2,
            width: 3,
            height: 8,
            bands: [60.0, -60.0, 60.0],
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub video: ModelVector,
    pub background: ModelVector,
    pub anomaly: ModelVector,
    /// Top-left corner `(x, y)` of every person, per frame.
    pub positions: Vec<Vec<(usize, usize)>>,
}

impl SyntheticVideo {
    pub fn support(&self) -> Vec<bool> {
        self.anomaly.data().iter().map(|&v| v != 0.0).collect()
    }
}

pub fn lowrank_sparse_video(p: &VideoParams, seed: u64) -> Result<SyntheticVideo> {
    if p.nx < 2 || p.ny < 2 || p.nt == 0 || p.period == 0 {
        return Err(Error::InvalidParameter("video extents and period must be positive (spatial >= 2)".into()));
    }
    if p.clean_frames > p.nt {
        return Err(Error::InvalidParameter(format!(
            "{} clean frames requested but the video has {}",
            p.clean_frames, p.nt
        )));
    }
    if p.persons > 0 && (p.width == 0 || p.height < 3 || p.width > p.nx || p.height > p.ny) {
        return Err(Error::InvalidParameter(format!(
            "person of {}x{} does not fit a {}x{} frame (height must be >= 3)",
            p.width, p.height, p.nx, p.ny
        )));
    }
    let grid = ModelGrid::new(&[p.nx, p.ny, p.nt])?;
    let per = p.nx * p.ny;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Smooth ramp and a step pattern, mixed with periodic weights.
    let mut ramp = vec![0.0; per];
    let mut steps = vec![0.0; per];
    for y in 0..p.ny {
        for x in 0..p.nx {
            let i = x + y * p.nx;
            ramp[i] = 110.0 + 40.0 * (x as f64 / p.nx as f64) + 20.0 * (y as f64 / p.ny as f64);
            steps[i] = if (y / 2) % 2 == 0 { 25.0 } else { -25.0 };
        }
    }
    let noise = Normal::new(0.0, p.noise.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut background = Vec::with_capacity(grid.len());
    for t in 0..p.nt {
        let phase = 2.0 * std::f64::consts::PI * t as f64 / p.period as f64;
        let (a, b) = (1.0 + 0.1 * phase.sin(), phase.cos());
        for i in 0..per {
            background.push(a * ramp[i] + b * steps[i]);
        }
    }

    let band_rows = |h: usize| -> [usize; 3] {
        let head = (h / 4).max(1);
        let legs = (h / 4).max(1);
        [head, h - head - legs, legs]
    };
    let rows = band_rows(p.height);
    let mut anomaly = vec![0.0; grid.len()];
    let mut positions = Vec::with_capacity(p.nt);
    for t in 0..p.nt {
        let mut here = Vec::new();
        if t < p.nt - p.clean_frames {
            for _ in 0..p.persons {
                // persons occupy disjoint columns so the derivative budgets hold
                let mut x0 = rng.random_range(0..=p.nx - p.width);
                let mut tries = 0;
                while here.iter().any(|&(o, _): &(usize, usize)| x0 < o + p.width && o < x0 + p.width) {
                    tries += 1;
                    if tries > 1000 {
                        return Err(Error::InvalidParameter(format!(
                            "cannot place {} persons of width {} side by side in {} columns",
                            p.persons, p.width, p.nx
                        )));
                    }
                    x0 = rng.random_range(0..=p.nx - p.width);
                }
                let y0 = rng.random_range(0..=p.ny - p.height);
                here.push((x0, y0));
                let mut y = y0;
                for (band, &n) in rows.iter().enumerate() {
                    for _ in 0..n {
                        for x in x0..x0 + p.width {
                            anomaly[x + y * p.nx + t * per] = p.bands[band];
                        }
                        y += 1;
                    }
                }
            }
        }
        positions.push(here);
    }
    let video: Vec<f64> = background
        .iter()
        .zip(&anomaly)
        .map(|(b, a)| (b + a + noise.sample(&mut rng)).clamp(0.0, 255.0))
        .collect();
    Ok(SyntheticVideo {
        video: ModelVector::new(grid.clone(), video)?,
        background: ModelVector::new(grid.clone(), background)?,
        anomaly: ModelVector::new(grid, anomaly)?,
        positions,
    })
}

/// I.i.d. normal entries with the given mean and standard deviation.
pub fn random_model(grid: ModelGrid, mean: f64, std_dev: f64, seed: u64) -> Result<ModelVector> {
    let dist = Normal::new(mean, std_dev)
        .map_err(|e| Error::InvalidParameter(format!("normal({mean}, {std_dev}): {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..grid.len()).map(|_| dist.sample(&mut rng)).collect();
    ModelVector::new(grid, data)
}

/// Precision, recall and F1 of a predicted support against the truth.
pub fn support_scores(predicted: &[bool], truth: &[bool]) -> (f64, f64, f64) {
    let tp = predicted.iter().zip(truth).filter(|(p, t)| **p && **t).count() as f64;
    let np = predicted.iter().filter(|p| **p).count() as f64;
    let nt = truth.iter().filter(|t| **t).count() as f64;
    let precision = if np > 0.0 { tp / np } else { 1.0 };
    let recall = if nt > 0.0 { tp / nt } else { 1.0 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    (precision, recall, f1)
}

/// `|A ∩ B| / |A ∪ B|`, 1 for two empty sets.
pub fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 { 1.0 } else { inter as f64 / union as f64 }
}
