use std::path::PathBuf;

use msgnn::error::Error;
use msgnn::image::PairedDataset;
use msgnn::network::Checkpoint;
use msgnn::train::{RunDirectory, Trainer};

use crate::settings::{read_settings, Settings};
use crate::Result;

pub struct Args {
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub resume: Option<PathBuf>,
    pub sets: Vec<String>,
    pub max_steps: Option<u64>,
}

/// Builds the trainer without touching the dataset, so every configuration
/// problem surfaces before any compute.
fn prepare(args: &Args) -> Result<Trainer> {
    let mut settings = read_settings(args.config.as_deref(), &args.sets)?;
    if let Some(seed) = args.seed {
        settings.set("seed", &seed.to_string())?;
    }
    if let Some(n) = args.max_steps {
        settings.set("max_steps", &n.to_string())?;
    }
    let Some(resume) = &args.resume else {
        settings.validate()?;
        return Ok(Trainer::new(settings.model, settings.train)?);
    };

    let mut trainer = Trainer::from_checkpoint(&Checkpoint::load(resume)?)?;
    let mut model = trainer.model.config.clone();
    let mut train = trainer.config.clone();
    settings.replay_onto(&mut model, &mut train)?;
    let recorded = trainer.model.config.pairs();
    if let Some(((k, want), (_, got))) = model.pairs().into_iter().zip(recorded).find(|(a, b)| a.1 != b.1) {
        return Err(Error::Checkpoint(format!(
            "config mismatch on {k}: requested {want}, checkpoint has {got}"
        ))
        .into());
    }
    Settings {
        model,
        train: train.clone(),
        assigned: Vec::new(),
    }
    .validate()?;
    trainer.config = train;
    Ok(trainer)
}

pub fn run(args: Args) -> Result<()> {
    let mut trainer = prepare(&args)?;
    let run_dir = RunDirectory::new(&args.out)?;
    if args.resume.is_none() {
        for p in [run_dir.metrics_path(), run_dir.steps_path()] {
            if p.exists() {
                return Err(Error::Contract(format!(
                    "{} already exists; pick a fresh --out or pass --resume",
                    p.display()
                ))
                .into());
            }
        }
    }
    let data = PairedDataset::load(&args.data)?;
    let cfg_path = args.out.join("config.txt");
    std::fs::write(&cfg_path, Settings::render(&trainer.model.config, &trainer.config)).map_err(|e| Error::Io {
        path: cfg_path,
        source: e,
    })?;

    log::info!(
        "training {} parameters on {} pairs from step {}",
        trainer.model.scalar_count(),
        data.len(),
        trainer.progress.step
    );
    let mut observer = run_dir;
    let report = trainer.run(&data, &mut observer)?;
    if let Some(last) = report.epochs.last() {
        println!("{}", last.log_line());
    }
    println!(
        "steps {} checkpoint {}",
        trainer.progress.step,
        observer.checkpoint_path().display()
    );
    Ok(())
}
