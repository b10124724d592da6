use std::path::PathBuf;

use clap::ValueEnum;
use msgnn::error::Error;
use msgnn::image::PairedDataset;
use msgnn::train::{evaluate, train, Quiet};

use crate::settings::{load_settings, Settings};
use crate::table::{psnr_cell, ssim_cell, Table};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Fusion connection, channel gate and graph switches.
    Components,
    K,
    L,
    S,
    N,
    Scales,
    Exemplar,
    Attention,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Components => "components",
            Axis::K => "k",
            Axis::L => "l",
            Axis::S => "s",
            Axis::N => "n",
            Axis::Scales => "scales",
            Axis::Exemplar => "exemplar",
            Axis::Attention => "attention",
        }
    }

    fn defaults(self) -> &'static str {
        match self {
            Axis::Components => "m1,m2,m4,m5,m6",
            Axis::K | Axis::L => "3,5,7",
            Axis::S => "1,2,3",
            Axis::N => "1,2,3,4,5,6",
            Axis::Scales => "all,wo-full,wo-half-quarter,wo-half,wo-quarter",
            Axis::Exemplar => "on,off",
            Axis::Attention => "none,se,ct",
        }
    }
}

/// One row of an ablation: a label plus the settings it changes.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub assignments: Vec<(&'static str, String)>,
}

fn component_preset(name: &str) -> Result<Vec<(&'static str, String)>> {
    let (fusion, attention, graph) = match name {
        "m1" => ("false", "none", "false"),
        "m2" => ("true", "none", "false"),
        "m3" => return Err(Error::Config("preset m3 uses an ECA gate, which is not implemented".into()).into()),
        "m4" => ("true", "se", "false"),
        "m5" => ("true", "ct", "false"),
        "m6" => ("true", "ct", "true"),
        other => return Err(Error::Config(format!("unknown components preset {other:?}; use m1..m6")).into()),
    };
    Ok(vec![
        ("fusion", fusion.into()),
        ("attention", attention.into()),
        ("graph", graph.into()),
    ])
}

fn scales_preset(name: &str) -> String {
    match name {
        "all" => "full,half,quarter".into(),
        "wo-full" => "half,quarter".into(),
        "wo-half-quarter" => "full".into(),
        "wo-half" => "full,quarter".into(),
        "wo-quarter" => "full,half".into(),
        explicit => explicit.replace('+', ","),
    }
}

/// Parses `values` (or the axis defaults) into variants.
pub fn axis_values(axis: Axis, values: Option<&str>) -> Result<Vec<Variant>> {
    let text = values.unwrap_or(axis.defaults());
    let mut out = Vec::new();
    for v in text.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let assignments = match axis {
            Axis::Components => component_preset(v)?,
            Axis::K => vec![("k", v.into())],
            Axis::L => vec![("l", v.into())],
            Axis::S => vec![("s", v.into())],
            Axis::N => vec![("n", v.into())],
            Axis::Scales => vec![("scales", scales_preset(v))],
            Axis::Exemplar => vec![("use_exemplar", v.into())],
            Axis::Attention => vec![("attention", v.into())],
        };
        out.push(Variant {
            label: v.to_string(),
            assignments,
        });
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no values for axis {}", axis.name())).into());
    }
    Ok(out)
}

pub struct Args {
    pub data: PathBuf,
    pub axis: Axis,
    pub values: Option<String>,
    pub budget: u64,
    pub out: PathBuf,
    pub seed: u64,
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
}

/// Settings for every variant, validated up front.
fn plan(args: &Args, variants: &[Variant], train_len: usize) -> Result<Vec<Settings>> {
    if args.budget == 0 {
        return Err(Error::Config("budget must be at least one step".into()).into());
    }
    let base = load_settings(args.config.as_deref(), &args.sets)?;
    variants
        .iter()
        .map(|v| {
            let mut s = base.clone();
            for (k, val) in &v.assignments {
                s.set(k, val)?;
            }
            let batches_per_epoch = train_len.div_ceil(s.train.batch).max(1) as u64;
            s.set("max_steps", &args.budget.to_string())?;
            s.set("epochs", &(args.budget.div_ceil(batches_per_epoch) + 1).to_string())?;
            s.set("milestones", "none")?;
            s.set("eval_each_epoch", "false")?;
            s.set("seed", &args.seed.to_string())?;
            s.validate()?;
            Ok(s)
        })
        .collect()
}

pub fn run(args: Args) -> Result<()> {
    let variants = axis_values(args.axis, args.values.as_deref())?;
    let data = PairedDataset::load(&args.data)?;
    let split = data.split();
    let settings = plan(&args, &variants, split.train.len())?;
    let held = if split.held_out.is_empty() {
        data.clone()
    } else {
        data.subset(&split.held_out)
    };

    let mut table = Table::new(&[args.axis.name(), "params", "loss", "psnr", "ssim"]);
    let mut rainy_row = None;
    for (variant, s) in variants.iter().zip(settings) {
        log::info!(
            "ablation {}={} for {} steps",
            args.axis.name(),
            variant.label,
            args.budget
        );
        let (trainer, report) = train(&data, s.model, s.train, &mut Quiet)?;
        let tail = &report.steps[report.steps.len().saturating_sub(10)..];
        let loss = tail.iter().map(|r| r.loss).sum::<f64>() / tail.len().max(1) as f64;
        let eval = evaluate(&trainer.model, &held, None)?;
        rainy_row.get_or_insert_with(|| {
            vec![
                "rainy input".into(),
                "-".into(),
                "-".into(),
                psnr_cell(eval.mean_baseline_psnr()),
                ssim_cell(eval.mean_baseline_ssim()),
            ]
        });
        table.push(vec![
            variant.label.clone(),
            trainer.model.scalar_count().to_string(),
            format!("{loss:.4}"),
            psnr_cell(eval.mean_psnr()),
            ssim_cell(eval.mean_ssim()),
        ]);
    }
    if let Some(row) = rainy_row {
        table.rows.insert(0, row);
    }
    print!("{}", table.to_text());
    table.write(&args.out.join(args.axis.name()))?;
    Ok(())
}
