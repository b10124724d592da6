use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::{Graph, Real, Var};

/// Negative SSIM between the restored and clean images; lies in `[-1, 1]`.
pub fn ssim_loss<T: Real>(g: &mut Graph<T>, restored: Var, clean: Var) -> Result<Var> {
    let s = g.ssim(restored, clean)?;
    Ok(g.scalar_mul(s, -1.0))
}

/// Uniform index in `0..n`, skipping `exclude` when there is anything else to pick.
pub fn exemplar_index<R: Rng>(n: usize, rng: &mut R, exclude: Option<usize>) -> Result<usize> {
    match (n, exclude) {
        (0, _) => Err(Error::Dataset("cannot draw an exemplar from an empty dataset".into())),
        (1, _) | (_, None) => Ok(rng.random_range(0..n)),
        (_, Some(x)) => {
            let j = rng.random_range(0..n - 1);
            Ok(if j >= x { j + 1 } else { j })
        }
    }
}

/// Top-left corner of a uniformly placed `crop x crop` window.
pub fn crop_origin<R: Rng>(img: &Image, crop: usize, rng: &mut R) -> Result<(usize, usize)> {
    if img.height() < crop || img.width() < crop {
        return Err(Error::Dataset(format!(
            "image {}x{} is smaller than the {crop}x{crop} training crop",
            img.height(),
            img.width()
        )));
    }
    Ok((
        rng.random_range(0..=img.height() - crop),
        rng.random_range(0..=img.width() - crop),
    ))
}

/// Random rainy exemplar, cropped at a random offset.
pub fn sample_exemplar<R: Rng>(rainy: &[Image], rng: &mut R, exclude: Option<usize>, crop: usize) -> Result<Image> {
    let j = exemplar_index(rainy.len(), rng, exclude)?;
    let (y, x) = crop_origin(&rainy[j], crop, rng)?;
    rainy[j].crop(y, x, crop, crop)
}
