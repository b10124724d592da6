//! RGB images and the pixel-level tooling around them.

mod dataset;
mod io;
mod metrics;
mod procedural;
mod rain;

use crate::error::{Error, Result};
use crate::tensor::{bilinear_resize, Real, Tensor};

pub use dataset::{PairedDataset, Split};
pub use io::{load_png, save_png};
pub use metrics::{psnr, ssim};
pub use procedural::procedural_scene;
pub use rain::{synth_rain, RainParams};

/// `H x W x 3` image with channel values in `[0, 1]`, stored interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Image {
    /// Builds an image from interleaved RGB values, clamping into `[0, 1]`.
    pub fn new(height: usize, width: usize, mut pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width * 3 {
            return Err(Error::dim(
                "image",
                "pixels",
                format!(
                    "{height}x{width}x3 needs {} values, got {}",
                    height * width * 3,
                    pixels.len()
                ),
            ));
        }
        for v in &mut pixels {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Image { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Image {
            height,
            width,
            pixels: vec![value.clamp(0.0, 1.0); height * width * 3],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    /// Channel-major `[3, H, W]` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let plane = self.height * self.width;
        Tensor::from_fn([3, self.height, self.width], |i| {
            let (c, p) = (i / plane, i % plane);
            T::of(self.pixels[p * 3 + c] as f64)
        })
    }

    /// Inverse of [`to_tensor`](Self::to_tensor); values are clamped.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let (c, h, w) = t.chw()?;
        if c != 3 {
            return Err(Error::dim("image", "channels", format!("expected 3, got {c}")));
        }
        let plane = h * w;
        let d = t.data();
        let pixels = (0..plane * 3)
            .map(|i| d[(i % 3) * plane + i / 3].f64() as f32)
            .collect();
        Image::new(h, w, pixels)
    }

    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || y + h > self.height || x + w > self.width {
            return Err(Error::dim(
                "crop",
                "H,W",
                format!("{h}x{w} at ({y},{x}) outside {}x{}", self.height, self.width),
            ));
        }
        let mut pixels = Vec::with_capacity(h * w * 3);
        for row in y..y + h {
            let start = (row * self.width + x) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + w * 3]);
        }
        Ok(Image {
            height: h,
            width: w,
            pixels,
        })
    }

    /// Places images side by side, top-aligned, padding with black.
    pub fn hstack(images: &[&Image]) -> Result<Self> {
        let height = images.iter().map(|i| i.height).max().unwrap_or(0);
        let width: usize = images.iter().map(|i| i.width).sum();
        let mut pixels = vec![0.0; height * width * 3];
        let mut x0 = 0;
        for img in images {
            for y in 0..img.height {
                let src = &img.pixels[y * img.width * 3..(y + 1) * img.width * 3];
                let dst = (y * width + x0) * 3;
                pixels[dst..dst + src.len()].copy_from_slice(src);
            }
            x0 += img.width;
        }
        Image::new(height, width, pixels)
    }
}

/// Bilinear reduction by 2 or 4; dimensions must divide exactly.
pub fn downsample(img: &Image, factor: usize) -> Result<Image> {
    if factor != 2 && factor != 4 {
        return Err(Error::Contract(format!(
            "downsample factor must be 2 or 4, got {factor}"
        )));
    }
    if !img.height.is_multiple_of(factor) || !img.width.is_multiple_of(factor) {
        return Err(Error::dim(
            "downsample",
            "H,W",
            format!("{}x{} not divisible by {factor}", img.height, img.width),
        ));
    }
    let t = bilinear_resize(&img.to_tensor::<f64>(), img.height / factor, img.width / factor)?;
    Image::from_tensor(&t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_roundtrip() {
        let img = Image::new(2, 3, (0..18).map(|i| i as f32 / 17.0).collect()).unwrap();
        let t = img.to_tensor::<f32>();
        assert_eq!(t.shape(), &[3, 2, 3]);
        assert_eq!(t.data()[0], img.get(0, 0, 0));
        assert_eq!(t.data()[6], img.get(0, 0, 1));
        assert_eq!(Image::from_tensor(&t).unwrap(), img);
    }

    #[test]
    fn new_clamps() {
        let img = Image::new(1, 1, vec![-0.5, 0.5, 2.0]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn downsample_constant_and_shape() {
        let img = Image::filled(64, 64, 0.3);
        let half = downsample(&img, 2).unwrap();
        assert_eq!((half.height(), half.width()), (32, 32));
        assert!(half.pixels().iter().all(|&v| (v - 0.3).abs() < 1e-6));
        let quarter = downsample(&img, 4).unwrap();
        assert_eq!((quarter.height(), quarter.width()), (16, 16));
        assert_eq!(
            downsample(&Image::filled(10, 12, 0.0), 4).unwrap_err().kind(),
            "dimension"
        );
    }

    #[test]
    fn crop_and_hstack() {
        let img = Image::new(2, 2, (0..12).map(|i| i as f32 / 11.0).collect()).unwrap();
        let c = img.crop(1, 1, 1, 1).unwrap();
        assert_eq!(c.pixels(), &img.pixels()[9..12]);
        let s = Image::hstack(&[&img, &c]).unwrap();
        assert_eq!((s.height(), s.width()), (2, 3));
        assert_eq!(s.get(0, 2, 0), c.get(0, 0, 0));
        assert_eq!(s.get(1, 2, 0), 0.0);
    }
}
