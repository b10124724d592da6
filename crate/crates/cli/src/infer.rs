use std::path::{Path, PathBuf};

use msgnn::image::{load_png, save_png, Image, PairedDataset};
use msgnn::network::{Checkpoint, Msgnn};
use msgnn::train::{evaluate, EvalReport};

use crate::settings::load_settings;
use crate::table::{psnr_cell, ssim_cell, Table};
use crate::Result;

pub struct DerainArgs {
    pub input: PathBuf,
    pub checkpoint: PathBuf,
    pub output: PathBuf,
    pub exemplar: Option<PathBuf>,
    pub residual: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub config: Option<PathBuf>,
}

pub struct EvalArgs {
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub report: Option<PathBuf>,
    pub exemplar: Option<PathBuf>,
    pub held_out: bool,
    pub config: Option<PathBuf>,
}

/// Loads a model, checking it against the config file when one is given.
fn load_model(checkpoint: &Path, config: Option<&Path>) -> Result<Msgnn<f32>> {
    let ckpt = Checkpoint::load(checkpoint)?;
    Ok(match config {
        Some(path) => Msgnn::from_checkpoint_with(&ckpt, &load_settings(Some(path), &[])?.model)?,
        None => Msgnn::from_checkpoint(&ckpt)?,
    })
}

pub fn derain(args: DerainArgs) -> Result<()> {
    let model = load_model(&args.checkpoint, args.config.as_deref())?;
    let input = load_png(&args.input)?;
    let exemplar = args.exemplar.as_deref().map(load_png).transpose()?;
    let (derained, rain) = model.derain(&input, exemplar.as_ref())?;
    save_png(&derained, &args.output)?;
    if let Some(p) = &args.residual {
        save_png(&rain, p)?;
    }
    if let Some(p) = &args.grid {
        save_png(&Image::hstack(&[&input, &derained, &rain])?, p)?;
    }
    Ok(())
}

/// Per-image rows followed by a `mean` row.
pub fn eval_table(report: &EvalReport) -> Table {
    let mut t = Table::new(&["image", "psnr", "ssim", "rainy_psnr", "rainy_ssim"]);
    for r in &report.rows {
        t.push(vec![
            r.name.clone(),
            psnr_cell(r.psnr),
            ssim_cell(r.ssim),
            psnr_cell(r.baseline_psnr),
            ssim_cell(r.baseline_ssim),
        ]);
    }
    t.push(vec![
        "mean".into(),
        psnr_cell(report.mean_psnr()),
        ssim_cell(report.mean_ssim()),
        psnr_cell(report.mean_baseline_psnr()),
        ssim_cell(report.mean_baseline_ssim()),
    ]);
    t
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.checkpoint, args.config.as_deref())?;
    let mut data = PairedDataset::load(&args.data)?;
    if args.held_out {
        data = data.subset(&data.split().held_out);
    }
    let exemplar = args.exemplar.as_deref().map(load_png).transpose()?;
    let table = eval_table(&evaluate(&model, &data, exemplar.as_ref())?);
    print!("{}", table.to_text());
    if let Some(stem) = &args.report {
        table.write(stem)?;
    }
    Ok(())
}
