//! PGM codec: reads P2 (ASCII) and P5 (raw) at 8 or 16 bits, writes 8-bit P5.

use super::{GrayImage, ImageError};
use std::path::Path;

pub(super) enum PgmError {
    Unsupported(String),
    Corrupt(String),
}

impl PgmError {
    pub(super) fn into_image_error(self, path: &Path) -> ImageError {
        let path = path.display().to_string();
        match self {
            PgmError::Unsupported(reason) => ImageError::UnsupportedFormat { path, reason },
            PgmError::Corrupt(reason) => ImageError::UnreadableFile { path, reason },
        }
    }
}

/// Header token scanner. Whitespace separates tokens; `#` starts a comment
/// that runs to end of line.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(bytes: &'a [u8], pos: usize) -> Self {
        Self { bytes, pos }
    }

    fn skip_filler(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn next_u32(&mut self) -> Result<u32, PgmError> {
        self.skip_filler();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(PgmError::Corrupt("expected integer in header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::Corrupt("integer overflow in header".into()))
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 {
        return Err(PgmError::Corrupt("file too short".into()));
    }
    let magic = &bytes[..2];
    let raw = match magic {
        b"P2" => false,
        b"P5" => true,
        b"P3" | b"P6" => {
            return Err(PgmError::Unsupported(
                "color PPM images are not supported".into(),
            ))
        }
        b"P1" | b"P4" => {
            return Err(PgmError::Unsupported(
                "bitmap PBM images are not supported".into(),
            ))
        }
        _ => {
            return Err(PgmError::Unsupported(format!(
                "unknown magic {:?}",
                String::from_utf8_lossy(magic)
            )))
        }
    };

    let mut tokens = Tokens::new(bytes, 2);
    let width = tokens.next_u32()? as usize;
    let height = tokens.next_u32()? as usize;
    let maxval = tokens.next_u32()?;
    if width == 0 || height == 0 {
        return Err(PgmError::Corrupt("zero dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PgmError::Corrupt(format!("invalid maxval {maxval}")));
    }

    let count = width * height;
    let mut pixels = Vec::with_capacity(count);
    let scale = 1.0 / maxval as f64;

    if raw {
        // A single whitespace byte terminates the header before binary data.
        let data_start = tokens.pos + 1;
        if tokens.pos >= bytes.len() || !bytes[tokens.pos].is_ascii_whitespace() {
            return Err(PgmError::Corrupt("missing separator before raster".into()));
        }
        let data = &bytes[data_start..];
        if maxval < 256 {
            if data.len() < count {
                return Err(PgmError::Corrupt("truncated raster".into()));
            }
            pixels.extend(data[..count].iter().map(|&b| b as f64 * scale));
        } else {
            if data.len() < 2 * count {
                return Err(PgmError::Corrupt("truncated raster".into()));
            }
            // 16-bit samples are big-endian.
            pixels.extend(
                data[..2 * count]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale),
            );
        }
    } else {
        for _ in 0..count {
            let v = tokens.next_u32()?;
            if v > maxval {
                return Err(PgmError::Corrupt(format!("sample {v} exceeds maxval")));
            }
            pixels.push(v as f64 * scale);
        }
    }

    for p in &mut pixels {
        if *p > 1.0 {
            return Err(PgmError::Corrupt("sample exceeds maxval".into()));
        }
    }
    Ok(GrayImage::new(width, height, pixels))
}

pub(super) fn encode(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.pixels()
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}
