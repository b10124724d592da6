use crate::error::Result;
use crate::image::{psnr, ssim, Image, PairedDataset};
use crate::network::Msgnn;

/// Metrics for one image pair.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub name: String,
    /// Derained output against the clean image.
    pub psnr: f64,
    pub ssim: f64,
    /// Rainy input against the clean image.
    pub baseline_psnr: f64,
    pub baseline_ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    pub fn mean_psnr(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.psnr))
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.ssim))
    }

    pub fn mean_baseline_psnr(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.baseline_psnr))
    }

    pub fn mean_baseline_ssim(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.baseline_ssim))
    }
}

/// Derains every pair on the full image and scores it. Each input is its own
/// exemplar unless `exemplar` is given.
pub fn evaluate(model: &Msgnn<f32>, data: &PairedDataset, exemplar: Option<&Image>) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(data.len());
    for ((name, rainy), clean) in data.names.iter().zip(&data.rainy).zip(&data.clean) {
        let (out, _) = model.derain(rainy, exemplar)?;
        rows.push(EvalRow {
            name: name.clone(),
            psnr: psnr(&out, clean)?,
            ssim: ssim(&out, clean)?,
            baseline_psnr: psnr(rainy, clean)?,
            baseline_ssim: ssim(rainy, clean)?,
        });
    }
    Ok(EvalReport { rows })
}
