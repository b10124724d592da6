use super::Image;
use crate::error::{Error, Result};
use crate::tensor::kernels;

fn same_dims(op: &'static str, a: &Image, b: &Image) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::dim(
            op,
            "H,W",
            format!("{}x{} vs {}x{}", a.height(), a.width(), b.height(), b.width()),
        ));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB for peak value 1. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    same_dims("psnr", a, b)?;
    let mse = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.pixels().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Mean SSIM over RGB channels with an 11x11 Gaussian window (sigma 1.5),
/// `K1 = 0.01`, `K2 = 0.03`, dynamic range 1.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_dims("ssim", a, b)?;
    let (ta, tb) = (a.to_tensor::<f64>(), b.to_tensor::<f64>());
    let (c, h, w) = kernels::ssim_check(ta.shape(), tb.shape())?;
    Ok(kernels::ssim_forward(ta.data(), tb.data(), c, h, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_closed_form() {
        let a = Image::filled(8, 8, 0.0);
        let b = Image::filled(8, 8, 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-4);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &Image::filled(8, 9, 0.0)).is_err());
    }

    #[test]
    fn ssim_self_is_one_and_small_rejected() {
        let a = Image::new(16, 16, (0..768).map(|i| ((i * 31) % 97) as f32 / 96.0).collect()).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(
            ssim(&Image::filled(10, 20, 0.5), &Image::filled(10, 20, 0.5))
                .unwrap_err()
                .kind(),
            "dimension"
        );
    }
}
