use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader, RgbImage};

use super::Image;
use crate::error::{Error, Result};

/// Reads an 8-bit RGB, RGBA or grayscale PNG. Alpha is dropped.
pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(Error::MalformedPng {
            path: path.to_path_buf(),
            reason: "not a PNG stream".into(),
        });
    }
    let decoded = reader.decode().map_err(|e| Error::MalformedPng {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgb = match decoded {
        DynamicImage::ImageRgb8(img) => img,
        img @ (DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_)) => {
            img.to_rgb8()
        }
        other => {
            return Err(Error::UnsupportedDepth {
                path: path.to_path_buf(),
                format: format!("{:?}", other.color()),
            })
        }
    };
    let (w, h) = rgb.dimensions();
    let pixels = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Image::new(h as usize, w as usize, pixels)
}

/// Writes an 8-bit RGB PNG, rounding half up.
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = img
        .pixels()
        .iter()
        .map(|&v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect();
    let buf =
        RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes).expect("buffer length matches dimensions");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black_png_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("black.png");
        RgbImage::new(8, 8).save(&p).unwrap();
        let img = load_png(&p).unwrap();
        assert_eq!((img.height(), img.width()), (8, 8));
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn save_load_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let img = Image::new(
            9,
            7,
            (0..9 * 7 * 3).map(|i| ((i * 7919) % 1000) as f32 / 999.0).collect(),
        )
        .unwrap();
        save_png(&img, &p).unwrap();
        let back = load_png(&p).unwrap();
        let worst = img
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst <= 1.0 / 255.0 + 1e-7, "{worst}");
    }

    #[test]
    fn sixteen_bit_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("deep.png");
        image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(8, 8)
            .save(&p)
            .unwrap();
        assert_eq!(load_png(&p).unwrap_err().kind(), "unsupported-depth");
    }

    #[test]
    fn missing_and_malformed() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            load_png(dir.path().join("nope.png")).unwrap_err().kind(),
            "missing-file"
        );
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"\x89PNG\r\n\x1a\ngarbage").unwrap();
        assert_eq!(load_png(&p).unwrap_err().kind(), "malformed-png");
    }
}
