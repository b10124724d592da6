use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, crop_origin, evaluate, exemplar_index, lr_at, ssim_loss, OptimizerState, TrainConfig};
use crate::error::{Error, Result};
use crate::image::PairedDataset;
use crate::network::{Checkpoint, Msgnn, MsgnnConfig};
use crate::tensor::{GradientMap, Graph, ParamId, Tensor};

/// Where the run stands; enough to continue it exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Progress {
    /// Current epoch, 0-based.
    pub epoch: usize,
    /// Batches already done in the current epoch.
    pub batch: usize,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Loss sum and count over the current epoch's steps.
    pub loss_sum: f64,
    pub loss_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub loss: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl EpochRecord {
    /// `epoch<TAB>loss<TAB>psnr<TAB>ssim`.
    pub fn log_line(&self) -> String {
        format!("{}\t{:.6}\t{:.4}\t{:.6}", self.epoch, self.loss, self.psnr, self.ssim)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

/// Hooks called during [`Trainer::run`].
pub trait Observer {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }
    fn on_epoch(&mut self, _record: &EpochRecord) -> Result<()> {
        Ok(())
    }
    /// Called every `checkpoint_every` steps and once when the run stops.
    fn on_checkpoint(&mut self, _trainer: &Trainer) -> Result<()> {
        Ok(())
    }
}

/// Discards every event.
pub struct Quiet;

impl Observer for Quiet {}

/// Writes `metrics.tsv`, `steps.tsv` and `checkpoint.ckpt` under a directory.
/// Logs are appended so a resumed run continues them.
pub struct RunDirectory {
    pub dir: PathBuf,
}

impl RunDirectory {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(RunDirectory { dir })
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join("metrics.tsv")
    }

    pub fn steps_path(&self) -> PathBuf {
        self.dir.join("steps.tsv")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.dir.join("checkpoint.ckpt")
    }

    fn append(path: &Path, line: &str) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))
    }
}

impl Observer for RunDirectory {
    fn on_step(&mut self, r: &StepRecord) -> Result<()> {
        let line = format!("{}\t{}\t{:e}\t{:.6}", r.step, r.epoch + 1, r.lr, r.loss);
        Self::append(&self.steps_path(), &line)
    }

    fn on_epoch(&mut self, r: &EpochRecord) -> Result<()> {
        Self::append(&self.metrics_path(), &r.log_line())
    }

    fn on_checkpoint(&mut self, t: &Trainer) -> Result<()> {
        t.to_checkpoint().save(&self.checkpoint_path())
    }
}

/// One training sample of a batch: crop of pair `index` at `(y, x)` and an
/// exemplar crop of rainy image `exemplar` at `(ey, ex)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplePlan {
    pub index: usize,
    pub y: usize,
    pub x: usize,
    pub exemplar: usize,
    pub ey: usize,
    pub ex: usize,
}

/// Batches of one epoch. Draws come from a stream keyed by `(seed, epoch)`, so
/// any epoch can be regenerated without replaying earlier ones.
pub fn plan_epoch(data: &PairedDataset, cfg: &TrainConfig, epoch: usize) -> Result<Vec<Vec<SamplePlan>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    order
        .chunks(cfg.batch)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&index| {
                    let (y, x) = crop_origin(&data.rainy[index], cfg.crop, &mut rng)?;
                    let exemplar = exemplar_index(data.len(), &mut rng, Some(index))?;
                    let (ey, ex) = crop_origin(&data.rainy[exemplar], cfg.crop, &mut rng)?;
                    Ok(SamplePlan {
                        index,
                        y,
                        x,
                        exemplar,
                        ey,
                        ex,
                    })
                })
                .collect()
        })
        .collect()
}

/// Model, optimizer and schedule position.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer {
    pub model: Msgnn<f32>,
    pub optimizer: OptimizerState<f32>,
    pub config: TrainConfig,
    pub progress: Progress,
}

impl Trainer {
    pub fn new(model_config: MsgnnConfig, config: TrainConfig) -> Result<Self> {
        model_config.validate()?;
        config.validate()?;
        let model = Msgnn::new(model_config)?;
        let optimizer = OptimizerState::new(&model.params);
        Ok(Trainer {
            model,
            optimizer,
            config,
            progress: Progress::default(),
        })
    }

    /// Loss and averaged gradients of one batch.
    fn batch_gradients(&self, data: &PairedDataset, batch: &[SamplePlan]) -> Result<(f64, GradientMap<f32>)> {
        let c = self.config.crop;
        let mut total = GradientMap::new();
        let mut loss = 0.0;
        for s in batch {
            let rainy = data.rainy[s.index].crop(s.y, s.x, c, c)?;
            let clean = data.clean[s.index].crop(s.y, s.x, c, c)?;
            let exemplar = data.rainy[s.exemplar].crop(s.ey, s.ex, c, c)?;
            let mut g = Graph::new();
            let o = g.constant(rainy.to_tensor());
            let b = g.constant(clean.to_tensor());
            let e = g.constant(exemplar.to_tensor());
            let out = self.model.forward(&mut g, o, Some(e))?;
            let l = ssim_loss(&mut g, out.derained, b)?;
            loss += g.value(l).item() as f64;
            total.merge(g.backward(l)?);
        }
        let n = batch.len() as f64;
        total.scale(1.0 / n);
        Ok((loss / n, total))
    }

    /// Trains on the training split of `data` until `epochs` or `max_steps`
    /// is reached, evaluating on the held-out split at every epoch end.
    /// A trainer restored from a checkpoint continues where it stopped.
    pub fn run(&mut self, data: &PairedDataset, observer: &mut dyn Observer) -> Result<TrainReport> {
        let split = data.split();
        let train = data.subset(&split.train);
        if train.is_empty() {
            return Err(Error::Dataset("no training pairs".into()));
        }
        let held = if split.held_out.is_empty() {
            log::warn!("no held-out pairs; epoch metrics use the training set");
            train.clone()
        } else {
            data.subset(&split.held_out)
        };
        for (name, img) in train.names.iter().zip(&train.rainy) {
            if img.height() < self.config.crop || img.width() < self.config.crop {
                return Err(Error::Dataset(format!(
                    "{name} is {}x{}, smaller than crop {}",
                    img.height(),
                    img.width(),
                    self.config.crop
                )));
            }
        }

        let cfg = self.config.clone();
        let mut report = TrainReport::default();
        'epochs: while self.progress.epoch < cfg.epochs {
            let epoch = self.progress.epoch;
            let plan = plan_epoch(&train, &cfg, epoch)?;
            let lr = lr_at(epoch, &cfg);
            while self.progress.batch < plan.len() {
                if cfg.max_steps > 0 && self.progress.step >= cfg.max_steps {
                    break 'epochs;
                }
                let (loss, grads) = self.batch_gradients(&train, &plan[self.progress.batch])?;
                adam_step(&mut self.model.params, &grads, &mut self.optimizer, lr, &cfg.adam())?;
                let p = &mut self.progress;
                p.batch += 1;
                p.step += 1;
                p.loss_sum += loss;
                p.loss_count += 1;
                let record = StepRecord {
                    step: p.step,
                    epoch,
                    lr,
                    loss,
                };
                log::debug!("step {} loss {loss:.6}", record.step);
                observer.on_step(&record)?;
                report.steps.push(record);
                if cfg.checkpoint_every > 0 && self.progress.step.is_multiple_of(cfg.checkpoint_every) {
                    observer.on_checkpoint(self)?;
                }
            }
            let (psnr, ssim) = if cfg.eval_each_epoch {
                let r = evaluate(&self.model, &held, None)?;
                (r.mean_psnr(), r.mean_ssim())
            } else {
                (f64::NAN, f64::NAN)
            };
            let record = EpochRecord {
                epoch: epoch + 1,
                loss: self.progress.loss_sum / self.progress.loss_count.max(1) as f64,
                psnr,
                ssim,
            };
            log::info!("{}", record.log_line());
            observer.on_epoch(&record)?;
            report.epochs.push(record);
            self.progress = Progress {
                epoch: epoch + 1,
                step: self.progress.step,
                ..Progress::default()
            };
        }
        observer.on_checkpoint(self)?;
        Ok(report)
    }

    /// Model checkpoint extended with the training configuration, progress
    /// and optimizer moments.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = self.model.to_checkpoint();
        for (k, v) in self.config.pairs() {
            ckpt.set_meta(format!("train.{k}"), v);
        }
        let p = &self.progress;
        ckpt.set_meta("state.epoch", p.epoch);
        ckpt.set_meta("state.batch", p.batch);
        ckpt.set_meta("state.step", p.step);
        ckpt.set_meta("state.loss_sum", p.loss_sum);
        ckpt.set_meta("state.loss_count", p.loss_count);
        ckpt.set_meta("state.adam_step", self.optimizer.step);
        for (id, name, _) in self.model.params.iter() {
            ckpt.tensors
                .push((format!("optim.m.{name}"), self.optimizer.m[id.0].clone()));
            ckpt.tensors
                .push((format!("optim.v.{name}"), self.optimizer.v[id.0].clone()));
        }
        ckpt
    }

    /// Restores a run saved by [`to_checkpoint`](Self::to_checkpoint).
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let model = Msgnn::from_checkpoint(ckpt)?;
        let mut config = TrainConfig::default();
        for (k, v) in &ckpt.meta {
            if let Some(key) = k.strip_prefix("train.") {
                if !config.set(key, v)? {
                    return Err(Error::Checkpoint(format!("unknown training key {key}")));
                }
            }
        }
        config.validate()?;
        let state = |key: &str| -> Result<&str> {
            ckpt.meta(key)
                .ok_or_else(|| Error::Checkpoint(format!("missing {key}; not a training checkpoint")))
        };
        let num = |key: &str| -> Result<f64> {
            state(key)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("{key} is not a number")))
        };
        let progress = Progress {
            epoch: num("state.epoch")? as usize,
            batch: num("state.batch")? as usize,
            step: num("state.step")? as u64,
            loss_sum: num("state.loss_sum")?,
            loss_count: num("state.loss_count")? as usize,
        };
        let moment = |kind: &str, id: ParamId| -> Result<Tensor<f32>> {
            let name = format!("optim.{kind}.{}", model.params.name(id));
            let t = ckpt
                .tensor(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != model.params.get(id).shape() {
                return Err(Error::Checkpoint(format!("tensor {name} has shape {:?}", t.shape())));
            }
            Ok(t.clone())
        };
        let optimizer = OptimizerState {
            m: model.params.ids().map(|id| moment("m", id)).collect::<Result<_>>()?,
            v: model.params.ids().map(|id| moment("v", id)).collect::<Result<_>>()?,
            step: num("state.adam_step")? as u64,
        };
        Ok(Trainer {
            model,
            optimizer,
            config,
            progress,
        })
    }
}

/// Trains a fresh model; returns the final trainer and the step/epoch records.
pub fn train(
    data: &PairedDataset,
    model_config: MsgnnConfig,
    config: TrainConfig,
    observer: &mut dyn Observer,
) -> Result<(Trainer, TrainReport)> {
    let mut trainer = Trainer::new(model_config, config)?;
    let report = trainer.run(data, observer)?;
    Ok((trainer, report))
}
