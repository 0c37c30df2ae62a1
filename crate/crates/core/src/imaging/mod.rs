//! Grayscale images, file I/O, synthetic faces, and the dataset manifest.
//!
//! Pixel intensities are unit-interval `f64` everywhere inside the pipeline;
//! quantization only happens at file boundaries.

mod manifest;
mod pgm;
mod synth;

pub use manifest::{load_manifest, parse_manifest, DatasetManifest, ManifestEntry, ManifestError};
pub use synth::{generate_corpus, synth_face, CorpusSpec};

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    /// Missing, unreadable, or corrupt file.
    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: String, reason: String },
    /// Readable file but not a grayscale format we accept.
    #[error("unsupported format {path}: {reason}")]
    UnsupportedFormat { path: String, reason: String },
    #[error("write failure {path}: {reason}")]
    WriteFailure { path: String, reason: String },
    /// Out-of-range argument to the synthetic generator.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A grayscale image with row-major unit-interval intensities.
///
/// Invariants: `pixels.len() == width * height` and every value lies in
/// `[0.0, 1.0]`. Coordinates follow `(x, y)` = (column, row).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    /// # Panics
    /// If the pixel count does not match the dimensions or a value falls
    /// outside `[0, 1]`.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count mismatch");
        assert!(
            pixels.iter().all(|p| (0.0..=1.0).contains(p)),
            "pixel out of [0,1]"
        );
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.pixels[y * self.width + x] = value;
    }

    /// Nearest-neighbor resize with endpoints preserved on both axes.
    pub fn resize_nearest(&self, new_width: usize, new_height: usize) -> GrayImage {
        assert!(new_width > 0 && new_height > 0);
        let src_index = |i: usize, n_out: usize, n_in: usize| -> usize {
            if n_out == 1 {
                0
            } else {
                let f = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
                (f.round() as usize).min(n_in - 1)
            }
        };
        let mut pixels = Vec::with_capacity(new_width * new_height);
        for y in 0..new_height {
            let sy = src_index(y, new_height, self.height);
            for x in 0..new_width {
                let sx = src_index(x, new_width, self.width);
                pixels.push(self.get(sx, sy));
            }
        }
        GrayImage {
            width: new_width,
            height: new_height,
            pixels,
        }
    }
}

/// Loads an 8/16-bit grayscale PGM (P2 or P5) or an 8-bit grayscale PNG.
///
/// Intensities are rescaled to `[0, 1]` by dividing by the format's maximum
/// value.
pub fn load_image(path: &Path) -> Result<GrayImage, ImageError> {
    let bytes = std::fs::read(path).map_err(|e| ImageError::UnreadableFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if bytes.starts_with(b"\x89PNG") {
        return load_png(path, &bytes);
    }
    pgm::decode(&bytes).map_err(|e| e.into_image_error(path))
}

fn load_png(path: &Path, bytes: &[u8]) -> Result<GrayImage, ImageError> {
    use image::{DynamicImage, ImageReader};
    use std::io::Cursor;

    let decoded = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| ImageError::UnreadableFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?
        .decode()
        .map_err(|e| ImageError::UnreadableFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    match decoded {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            let pixels = img.into_raw().iter().map(|&b| b as f64 / 255.0).collect();
            Ok(GrayImage::new(w, h, pixels))
        }
        other => Err(ImageError::UnsupportedFormat {
            path: path.display().to_string(),
            reason: format!("PNG must be 8-bit grayscale, got {:?}", other.color()),
        }),
    }
}

/// Writes the image as an 8-bit binary PGM (P5, maxval 255).
///
/// Quantization is `round(value * 255)` with round-half-up, so a save/load
/// round trip moves no pixel by more than 1/255.
pub fn save_image(img: &GrayImage, path: &Path) -> Result<(), ImageError> {
    let data = pgm::encode(img);
    std::fs::write(path, data).map_err(|e| ImageError::WriteFailure {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn p2_maxval_255_all_white_normalizes_to_one() {
        let dir = tmp();
        let p = dir.path().join("w.pgm");
        std::fs::write(&p, "P2\n3 2\n255\n255 255 255\n255 255 255\n").unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert!(img.pixels().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn p2_zero_pixel_is_zero() {
        let dir = tmp();
        let p = dir.path().join("z.pgm");
        std::fs::write(&p, "P2\n1 1\n255\n0\n").unwrap();
        assert_eq!(load_image(&p).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn p5_16bit_normalizes_by_maxval() {
        let dir = tmp();
        let p = dir.path().join("d.pgm");
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&32768u16.to_be_bytes());
        std::fs::write(&p, bytes).unwrap();
        let img = load_image(&p).unwrap();
        assert!((img.get(0, 0) - 32768.0 / 65535.0).abs() < 1e-12);
        assert!((img.get(0, 0) - 0.50000763).abs() < 1e-7);
    }

    #[test]
    fn p5_8bit_roundtrip_and_comments() {
        let dir = tmp();
        let p = dir.path().join("c.pgm");
        std::fs::write(&p, b"P5\n# a comment\n2 2\n# another\n255\n\x00\x40\x80\xff").unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img.get(1, 1), 1.0);
        assert!((img.get(0, 1) - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn save_all_ones_writes_255_bytes() {
        let dir = tmp();
        let p = dir.path().join("o.pgm");
        save_image(&GrayImage::filled(4, 3, 1.0), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let body = &bytes[bytes.len() - 12..];
        assert!(body.iter().all(|&b| b == 255));
    }

    #[test]
    fn save_rounds_half_up() {
        let dir = tmp();
        let p = dir.path().join("h.pgm");
        // 0.5 * 255 = 127.5 -> 128
        save_image(&GrayImage::filled(1, 1, 0.5), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(*bytes.last().unwrap(), 128);
    }

    #[test]
    fn save_load_roundtrip_error_within_one_quantum() {
        let dir = tmp();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let pixels: Vec<f64> = (0..24 * 17).map(|_| rng.random_range(0.0..=1.0)).collect();
            let img = GrayImage::new(24, 17, pixels);
            let p = dir.path().join(format!("r{trial}.pgm"));
            save_image(&img, &p).unwrap();
            let back = load_image(&p).unwrap();
            let max_err = img
                .pixels()
                .iter()
                .zip(back.pixels())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err <= 1.0 / 255.0, "max_err {max_err}");
        }
    }

    #[test]
    fn png_8bit_grayscale_loads() {
        let dir = tmp();
        let p = dir.path().join("g.png");
        image::save_buffer(&p, &[0u8, 128, 255, 64], 2, 2, image::ColorType::L8).unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.get(0, 1), 1.0);
        assert!((img.get(1, 0) - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn color_png_is_unsupported() {
        let dir = tmp();
        let p = dir.path().join("c.png");
        image::save_buffer(&p, &[255u8, 0, 0, 0, 255, 0], 2, 1, image::ColorType::Rgb8).unwrap();
        match load_image(&p) {
            Err(ImageError::UnsupportedFormat { .. }) => {}
            other => panic!("expected UnsupportedFormat, got {other:?}"),
        }
    }

    #[test]
    fn color_ppm_is_unsupported() {
        let dir = tmp();
        let p = dir.path().join("c.ppm");
        std::fs::write(&p, "P3\n1 1\n255\n255 0 0\n").unwrap();
        match load_image(&p) {
            Err(ImageError::UnsupportedFormat { .. }) => {}
            other => panic!("expected UnsupportedFormat, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_unreadable() {
        match load_image(Path::new("/nonexistent/x.pgm")) {
            Err(ImageError::UnreadableFile { .. }) => {}
            other => panic!("expected UnreadableFile, got {other:?}"),
        }
    }

    #[test]
    fn truncated_p5_is_unreadable() {
        let dir = tmp();
        let p = dir.path().join("t.pgm");
        std::fs::write(&p, b"P5\n4 4\n255\n\x01\x02").unwrap();
        match load_image(&p) {
            Err(ImageError::UnreadableFile { .. }) => {}
            other => panic!("expected UnreadableFile, got {other:?}"),
        }
    }

    #[test]
    fn resize_nearest_preserves_corners() {
        let mut img = GrayImage::filled(8, 6, 0.25);
        img.set(0, 0, 1.0);
        img.set(7, 5, 0.75);
        let small = img.resize_nearest(4, 3);
        assert_eq!(small.get(0, 0), 1.0);
        assert_eq!(small.get(3, 2), 0.75);
    }
}
