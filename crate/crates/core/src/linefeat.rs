//! Line-feature extraction over polar faces.
//!
//! A bank of twelve 3x3 zero-sum masks (four orientations, three line
//! positions each) is correlated with the polar image; per pixel the largest
//! absolute response across the bank is kept and the map is normalized by its
//! own maximum. The column axis wraps (it is the angle axis); rows replicate
//! at the edges.

use crate::polar::PolarImage;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LineFeatError {
    #[error("polar image side {side} too small, need at least 3")]
    ImageTooSmall { side: usize },
    #[error("mask bank {path} line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("mask bank {path} block {block} sums to {sum}, expected 0")]
    NonZeroSumMask { path: String, block: usize, sum: f64 },
    #[error("mask bank {path} has {found} masks, expected 12")]
    WrongCount { path: String, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Horizontal,
    Vertical,
    DiagPlus45,
    DiagMinus45,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Orientation::Horizontal => "horizontal",
            Orientation::Vertical => "vertical",
            Orientation::DiagPlus45 => "diag_plus45",
            Orientation::DiagMinus45 => "diag_minus45",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    TopOrLeft,
    Center,
    BottomOrRight,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Position::TopOrLeft => "top_or_left",
            Position::Center => "center",
            Position::BottomOrRight => "bottom_or_right",
        };
        f.write_str(s)
    }
}

/// One 3x3 line-detection mask. Coefficients sum to zero so constant regions
/// produce no response.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3 {
    pub orientation: Orientation,
    pub position: Position,
    pub coefficients: [[f64; 3]; 3],
}

impl Mask3 {
    /// # Panics
    /// If the coefficients do not sum to zero (within 1e-9).
    pub fn new(orientation: Orientation, position: Position, coefficients: [[f64; 3]; 3]) -> Self {
        let sum: f64 = coefficients.iter().flatten().sum();
        assert!(sum.abs() <= 1e-9, "mask sums to {sum}, expected 0");
        Self {
            orientation,
            position,
            coefficients,
        }
    }

    fn from_line_cells(
        orientation: Orientation,
        position: Position,
        cells: [(usize, usize); 3],
    ) -> Self {
        let mut c = [[-1.0f64; 3]; 3];
        for (u, v) in cells {
            c[u][v] = 2.0;
        }
        Self::new(orientation, position, c)
    }
}

/// Ordered bank of exactly 12 masks. The default bank is closed under 90°
/// rotation: rotating any mask's coefficients yields another mask in the
/// bank.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskBank {
    masks: Vec<Mask3>,
}

impl MaskBank {
    /// # Panics
    /// If the bank does not hold exactly 12 masks.
    pub fn new(masks: Vec<Mask3>) -> Self {
        assert_eq!(masks.len(), 12, "mask bank must hold exactly 12 masks");
        Self { masks }
    }

    pub fn masks(&self) -> &[Mask3] {
        &self.masks
    }

    /// Text form understood by [`load_mask_bank`]: 12 blocks of 3 rows, blank
    /// lines between blocks, `#` comment lines naming each mask.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in &self.masks {
            out.push_str(&format!("# {} {}\n", m.orientation, m.position));
            for row in &m.coefficients {
                out.push_str(&format!("{} {} {}\n", row[0], row[1], row[2]));
            }
            out.push('\n');
        }
        out
    }
}

/// The reconstructed bank: for each orientation (0°, 90°, +45°, −45°) a line
/// through each of the three positions in the window, weighted +2 on the
/// three line cells and −1 on the six background cells.
pub fn default_mask_bank() -> MaskBank {
    use Orientation::*;
    use Position::*;
    MaskBank::new(vec![
        Mask3::from_line_cells(Horizontal, TopOrLeft, [(0, 0), (0, 1), (0, 2)]),
        Mask3::from_line_cells(Horizontal, Center, [(1, 0), (1, 1), (1, 2)]),
        Mask3::from_line_cells(Horizontal, BottomOrRight, [(2, 0), (2, 1), (2, 2)]),
        Mask3::from_line_cells(Vertical, TopOrLeft, [(0, 0), (1, 0), (2, 0)]),
        Mask3::from_line_cells(Vertical, Center, [(0, 1), (1, 1), (2, 1)]),
        Mask3::from_line_cells(Vertical, BottomOrRight, [(0, 2), (1, 2), (2, 2)]),
        Mask3::from_line_cells(DiagPlus45, TopOrLeft, [(0, 0), (0, 1), (1, 0)]),
        Mask3::from_line_cells(DiagPlus45, Center, [(0, 2), (1, 1), (2, 0)]),
        Mask3::from_line_cells(DiagPlus45, BottomOrRight, [(1, 2), (2, 1), (2, 2)]),
        Mask3::from_line_cells(DiagMinus45, TopOrLeft, [(0, 1), (0, 2), (1, 2)]),
        Mask3::from_line_cells(DiagMinus45, Center, [(0, 0), (1, 1), (2, 2)]),
        Mask3::from_line_cells(DiagMinus45, BottomOrRight, [(1, 0), (2, 0), (2, 1)]),
    ])
}

const ORIENTATION_ORDER: [Orientation; 4] = [
    Orientation::Horizontal,
    Orientation::Vertical,
    Orientation::DiagPlus45,
    Orientation::DiagMinus45,
];
const POSITION_ORDER: [Position; 3] = [Position::TopOrLeft, Position::Center, Position::BottomOrRight];

/// Loads a replacement bank from its text form. Blocks are labeled by their
/// order in the file: orientations in the order horizontal, vertical,
/// diag_plus45, diag_minus45, and within each the positions top_or_left,
/// center, bottom_or_right.
pub fn load_mask_bank(path: &Path) -> Result<MaskBank, LineFeatError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| LineFeatError::Parse {
        path: origin.clone(),
        line: 0,
        reason: e.to_string(),
    })?;

    let mut blocks: Vec<[[f64; 3]; 3]> = Vec::new();
    let mut pending: Vec<[f64; 3]> = Vec::new();
    let mut flush = |pending: &mut Vec<[f64; 3]>, line: usize| -> Result<(), LineFeatError> {
        if pending.is_empty() {
            return Ok(());
        }
        if pending.len() != 3 {
            return Err(LineFeatError::Parse {
                path: origin.clone(),
                line,
                reason: format!("block has {} rows, expected 3", pending.len()),
            });
        }
        blocks.push([pending[0], pending[1], pending[2]]);
        pending.clear();
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            flush(&mut pending, line_no)?;
            continue;
        }
        let nums: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let nums = nums.map_err(|_| LineFeatError::Parse {
            path: origin.clone(),
            line: line_no,
            reason: format!("bad row {line:?}"),
        })?;
        if nums.len() != 3 {
            return Err(LineFeatError::Parse {
                path: origin.clone(),
                line: line_no,
                reason: format!("row has {} values, expected 3", nums.len()),
            });
        }
        pending.push([nums[0], nums[1], nums[2]]);
    }
    flush(&mut pending, text.lines().count())?;

    if blocks.len() != 12 {
        return Err(LineFeatError::WrongCount {
            path: origin,
            found: blocks.len(),
        });
    }
    let mut masks = Vec::with_capacity(12);
    for (i, c) in blocks.into_iter().enumerate() {
        let sum: f64 = c.iter().flatten().sum();
        if sum.abs() > 1e-9 {
            return Err(LineFeatError::NonZeroSumMask {
                path: origin,
                block: i + 1,
                sum,
            });
        }
        masks.push(Mask3::new(
            ORIENTATION_ORDER[i / 3],
            POSITION_ORDER[i % 3],
            c,
        ));
    }
    Ok(MaskBank::new(masks))
}

/// Combined, normalized line responses; same square layout as the polar image
/// it came from.
pub type LineImage = PolarImage;

/// Correlates the mask with the image (applied as written, no flip). Columns
/// wrap circularly; rows replicate at the top and bottom edges.
pub fn convolve3(img: &PolarImage, mask: &Mask3) -> Result<Vec<Vec<f64>>, LineFeatError> {
    let side = img.side();
    if side < 3 {
        return Err(LineFeatError::ImageTooSmall { side });
    }
    let n = side as isize;
    let mut out = vec![vec![0.0f64; side]; side];
    for i in 0..n {
        for j in 0..n {
            // Accumulating coeff * (pixel - center) instead of coeff * pixel
            // changes nothing for a zero-sum mask but cancels exactly on
            // constant regions, which would otherwise leak rounding residue.
            let center = img.at(i as usize, j as usize);
            let mut acc = 0.0;
            for (u, row) in mask.coefficients.iter().enumerate() {
                let si = (i + u as isize - 1).clamp(0, n - 1) as usize;
                for (v, &coeff) in row.iter().enumerate() {
                    let sj = (j + v as isize - 1).rem_euclid(n) as usize;
                    acc += coeff * (img.at(si, sj) - center);
                }
            }
            out[i as usize][j as usize] = acc;
        }
    }
    Ok(out)
}

/// Per pixel, the largest absolute response over the whole bank, normalized
/// by the map's own maximum. An all-zero response map stays all-zero.
pub fn extract_line_image(img: &PolarImage, bank: &MaskBank) -> Result<LineImage, LineFeatError> {
    let side = img.side();
    if side < 3 {
        return Err(LineFeatError::ImageTooSmall { side });
    }
    let mut combined = vec![0.0f64; side * side];
    for mask in bank.masks() {
        let resp = convolve3(img, mask)?;
        for i in 0..side {
            for j in 0..side {
                let v = resp[i][j].abs();
                if v > combined[i * side + j] {
                    combined[i * side + j] = v;
                }
            }
        }
    }
    let max = combined.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in &mut combined {
            *v /= max;
        }
    }
    Ok(LineImage::new(side, combined))
}

/// Optional hard threshold: values at or above `threshold` become 1, the rest
/// 0. Off by default in the pipeline.
pub fn binarize(img: &LineImage, threshold: f64) -> LineImage {
    let pixels = img
        .pixels()
        .iter()
        .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
        .collect();
    LineImage::new(img.side(), pixels)
}
