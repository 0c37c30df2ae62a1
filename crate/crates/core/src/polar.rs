//! Log-polar registration.
//!
//! A face is resampled onto a (log-radius, angle) grid around its center, so
//! that rotating the source image becomes a circular shift along the column
//! (angle) axis and uniformly rescaling it becomes a shift along the row
//! (log-radius) axis. The stages mirror the processing order: find center and
//! radius, sample the polar grid by inverse mapping, re-space rows
//! logarithmically, then resize to a fixed square.

use crate::imaging::GrayImage;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolarError {
    #[error("image {width}x{height} too small, need at least 3x3")]
    ImageTooSmall { width: usize, height: usize },
    #[error("radius {radius} does not exceed r_min {r_min}")]
    DegenerateRadius { radius: f64, r_min: f64 },
}

/// Settings for the log-polar stage.
///
/// `fixed_side`, when set, must be a power of `base`; it overrides the
/// per-image side rule so every image in a dataset maps to the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarConfig {
    pub base: u32,
    pub fixed_side: Option<usize>,
    pub r_min: f64,
}

impl Default for PolarConfig {
    fn default() -> Self {
        Self {
            base: 2,
            fixed_side: Some(128),
            r_min: 1.0,
        }
    }
}

impl PolarConfig {
    /// # Panics
    /// If `base < 2`, `r_min <= 0`, or `fixed_side` is not a power of `base`.
    pub fn validate(&self) {
        assert!(self.base >= 2, "base must be at least 2");
        assert!(
            self.r_min > 0.0 && self.r_min.is_finite(),
            "r_min must be positive"
        );
        if let Some(side) = self.fixed_side {
            assert!(
                is_power_of(side, self.base),
                "fixed_side {side} is not a power of {}",
                self.base
            );
        }
    }
}

pub(crate) fn is_power_of(mut n: usize, base: u32) -> bool {
    if n == 0 {
        return false;
    }
    while n.is_multiple_of(base as usize) {
        n /= base as usize;
    }
    n == 1
}

/// Intermediate polar sampling: `rows[i][j]` holds the intensity at radius
/// index `i` and angle index `j`. Carries the source radius so later stages
/// know the radial extent the rows span.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGrid {
    pub radius: f64,
    pub rows: Vec<Vec<f64>>,
}

/// Square log-polar image: rows index log-radius (row 0 = smallest), columns
/// index angle (column 0 = 0°, increasing counterclockwise). The column axis
/// is circular; `side` is a power of the configured base.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage {
    side: usize,
    pixels: Vec<f64>,
}

impl PolarImage {
    /// # Panics
    /// If the pixel count is not `side * side`.
    pub fn new(side: usize, pixels: Vec<f64>) -> Self {
        assert!(side > 0, "side must be positive");
        assert_eq!(pixels.len(), side * side, "pixel count mismatch");
        Self { side, pixels }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Intensity at (row, column). Note the order: row first, unlike
    /// `GrayImage::get`.
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.side + col]
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::new(self.side, self.side, self.pixels.clone())
    }
}

/// Center `(m, n)` and the radius of the largest circle around it that stays
/// inside the frame. `m` is the column index, `n` the row index.
pub fn center_and_radius(img: &GrayImage) -> Result<(usize, usize, f64), PolarError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(PolarError::ImageTooSmall {
            width: w,
            height: h,
        });
    }
    let m = w / 2;
    let n = h / 2;
    let r = m.min(n).min(w - 1 - m).min(h - 1 - n);
    Ok((m, n, r as f64))
}

/// Samples the image on a uniform (radius, angle) grid by inverse mapping:
/// each grid cell looks up the nearest Cartesian pixel at
/// `(m + r cos θ, n + r sin θ)`, with `θ = j·360°/angular_samples` and
/// `r = i·R/(radial_samples−1)`.
pub fn to_polar(
    img: &GrayImage,
    angular_samples: usize,
    radial_samples: usize,
) -> Result<PolarGrid, PolarError> {
    assert!(angular_samples >= 8, "need at least 8 angular samples");
    assert!(radial_samples >= 8, "need at least 8 radial samples");
    let (m, n, radius) = center_and_radius(img)?;
    let (w, h) = (img.width(), img.height());

    let angles: Vec<(f64, f64)> = (0..angular_samples)
        .map(|j| {
            let theta = (j as f64) * std::f64::consts::TAU / angular_samples as f64;
            (theta.cos(), theta.sin())
        })
        .collect();

    let mut rows = Vec::with_capacity(radial_samples);
    for i in 0..radial_samples {
        let r = i as f64 * radius / (radial_samples - 1) as f64;
        let mut row = Vec::with_capacity(angular_samples);
        for &(cos_t, sin_t) in &angles {
            let x = (m as f64 + r * cos_t).round().clamp(0.0, (w - 1) as f64) as usize;
            let y = (n as f64 + r * sin_t).round().clamp(0.0, (h - 1) as f64) as usize;
            row.push(img.get(x, y));
        }
        rows.push(row);
    }
    Ok(PolarGrid { radius, rows })
}

/// Re-spaces the radial axis logarithmically: output row `i` takes the input
/// row whose log-radius is nearest to the `i`-th point of a uniform grid on
/// `[ln r_min, ln R]`. Radii below `r_min` are clamped before the log, which
/// resolves the `r = 0` singularity at the center.
pub fn log_radial(grid: &PolarGrid, cfg: &PolarConfig) -> Result<PolarGrid, PolarError> {
    cfg.validate();
    if grid.radius <= cfg.r_min {
        return Err(PolarError::DegenerateRadius {
            radius: grid.radius,
            r_min: cfg.r_min,
        });
    }
    let rows = grid.rows.len();
    assert!(rows >= 2, "need at least 2 radial rows");
    let log_min = cfg.r_min.ln();
    let log_max = grid.radius.ln();

    // log-radius of each input row, after the r_min clamp
    let input_p: Vec<f64> = (0..rows)
        .map(|j| {
            let r = j as f64 * grid.radius / (rows - 1) as f64;
            r.max(cfg.r_min).ln()
        })
        .collect();

    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let target = log_min + i as f64 * (log_max - log_min) / (rows - 1) as f64;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, p) in input_p.iter().enumerate() {
            let d = (p - target).abs();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        out.push(grid.rows[best].clone());
    }
    Ok(PolarGrid {
        radius: grid.radius,
        rows: out,
    })
}

fn side_for_radius(radius: f64, cfg: &PolarConfig) -> usize {
    if let Some(side) = cfg.fixed_side {
        return side;
    }
    // smallest q with base^q >= R
    let mut side = 1usize;
    while (side as f64) < radius - 1e-9 {
        side *= cfg.base as usize;
    }
    side
}

/// Nearest-neighbor resize to the final square: `cfg.fixed_side` when set,
/// otherwise `base^⌈log_base R⌉`. Rows resample with endpoints preserved;
/// columns resample circularly.
pub fn resize_square(grid: &PolarGrid, cfg: &PolarConfig) -> PolarImage {
    cfg.validate();
    let side = side_for_radius(grid.radius, cfg);
    let (rows_in, cols_in) = (grid.rows.len(), grid.rows[0].len());
    let mut pixels = Vec::with_capacity(side * side);
    for i in 0..side {
        let src_row = if side == 1 {
            0
        } else {
            let f = i as f64 * (rows_in - 1) as f64 / (side - 1) as f64;
            (f.round() as usize).min(rows_in - 1)
        };
        let row = &grid.rows[src_row];
        for j in 0..side {
            let src_col = (j as f64 * cols_in as f64 / side as f64).round() as usize % cols_in;
            pixels.push(row[src_col]);
        }
    }
    PolarImage::new(side, pixels)
}

/// Whole chain: center and radius, inverse-mapped polar sampling at 4x the
/// final side (both axes, to tame angular aliasing), logarithmic row
/// re-spacing, then the final square resize.
pub fn log_polar_transform(img: &GrayImage, cfg: &PolarConfig) -> Result<PolarImage, PolarError> {
    cfg.validate();
    let (_, _, radius) = center_and_radius(img)?;
    let side = side_for_radius(radius, cfg);
    let samples = 4 * side;
    let grid = to_polar(img, samples, samples)?;
    let grid = log_radial(&grid, cfg)?;
    Ok(resize_square(&grid, cfg))
}

/// `out[i][j] = in[i][(j + k) mod side]`: the image content moves `k` columns
/// toward column 0.
pub fn shift_columns(img: &PolarImage, k: usize) -> PolarImage {
    let side = img.side();
    let mut pixels = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            pixels.push(img.at(i, (j + k) % side));
        }
    }
    PolarImage::new(side, pixels)
}

/// Pearson correlation over all pixels. Zero-variance inputs compare by
/// equality: 1 for identical images, 0 otherwise.
pub fn normalized_correlation(a: &PolarImage, b: &PolarImage) -> f64 {
    assert_eq!(a.side(), b.side(), "side mismatch");
    let n = a.pixels().len() as f64;
    let mean_a = a.pixels().iter().sum::<f64>() / n;
    let mean_b = b.pixels().iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.pixels().iter().zip(b.pixels()) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    let denom = (var_a * var_b).sqrt();
    if denom == 0.0 {
        return if a.pixels() == b.pixels() { 1.0 } else { 0.0 };
    }
    cov / denom
}

/// Column shift of `b` maximizing its correlation with `a`, with the peak
/// correlation value. A rotation of the source by Δ degrees shows up here as
/// a shift of `round(Δ/360 · side)`.
pub fn best_column_shift(a: &PolarImage, b: &PolarImage) -> (usize, f64) {
    assert_eq!(a.side(), b.side(), "side mismatch");
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..a.side() {
        let c = normalized_correlation(a, &shift_columns(b, k));
        if c > best.1 {
            best = (k, c);
        }
    }
    best
}
