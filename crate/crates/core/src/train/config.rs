use crate::error::{Error, Result};
use crate::network::{parse, parse_bool};

/// Optimization settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Epochs at which the learning rate is multiplied by `decay`.
    pub milestones: Vec<usize>,
    pub decay: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Side of the square training crop.
    pub crop: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Stop after this many optimizer steps in total; 0 means no limit.
    pub max_steps: u64,
    /// Checkpoint every this many steps; 0 checkpoints only at the end.
    pub checkpoint_every: u64,
    /// Evaluate on the held-out split at each epoch end.
    pub eval_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            milestones: vec![300, 400],
            decay: 0.1,
            epochs: 500,
            batch: 8,
            crop: 64,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_steps: 0,
            checkpoint_every: 0,
            eval_each_epoch: true,
        }
    }
}

/// ADAM hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.epochs == 0 || self.batch == 0 {
            return fail("epochs and batch must be at least 1".into());
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("milestones must be strictly increasing: {:?}", self.milestones));
        }
        if let Some(&last) = self.milestones.last() {
            if last >= self.epochs {
                return fail(format!("milestone {last} is not below epochs={}", self.epochs));
            }
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail(format!("decay must be in (0, 1], got {}", self.decay));
        }
        if self.crop < 16 || !self.crop.is_multiple_of(4) {
            return fail(format!(
                "crop must be at least 16 and divisible by 4, got {}",
                self.crop
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return fail("adam betas must be in [0, 1)".into());
        }
        if self.adam_eps <= 0.0 {
            return fail("adam_eps must be positive".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    /// Sets one field from its text key. Returns `Ok(false)` for keys this
    /// config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "lr" => self.lr = parse(key, value)?,
            "milestones" => {
                let v = value.trim();
                self.milestones = if v.is_empty() || v == "none" {
                    Vec::new()
                } else {
                    v.split(',').map(|m| parse(key, m)).collect::<Result<_>>()?
                };
            }
            "decay" => self.decay = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "crop" => self.crop = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "max_steps" => self.max_steps = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "eval_each_epoch" => self.eval_each_epoch = parse_bool(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let milestones = if self.milestones.is_empty() {
            "none".to_string()
        } else {
            self.milestones
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            ("lr", self.lr.to_string()),
            ("milestones", milestones),
            ("decay", self.decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("crop", self.crop.to_string()),
            ("seed", self.seed.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("eval_each_epoch", self.eval_each_epoch.to_string()),
        ]
    }
}

/// Learning rate for `epoch`: `lr * decay^(milestones passed)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let passed = cfg.milestones.iter().filter(|&&m| epoch >= m).count();
    cfg.lr * cfg.decay.powi(passed as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_steps_down_at_milestones() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 5e-4);
        assert_eq!(lr_at(299, &cfg), 5e-4);
        assert!((lr_at(300, &cfg) - 5e-5).abs() < 1e-18);
        assert!((lr_at(400, &cfg) - 5e-6).abs() < 1e-18);
        assert!((lr_at(499, &cfg) - 5e-6).abs() < 1e-18);
    }

    #[test]
    fn pairs_round_trip_and_validation() {
        let cfg = TrainConfig {
            milestones: vec![],
            max_steps: 17,
            ..Default::default()
        };
        let mut back = TrainConfig::default();
        for (k, v) in cfg.pairs() {
            assert!(back.set(k, &v).unwrap(), "{k}");
        }
        assert_eq!(back, cfg);
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                milestones: vec![400, 300],
                ..Default::default()
            },
            TrainConfig {
                milestones: vec![500],
                ..Default::default()
            },
            TrainConfig {
                crop: 18,
                ..Default::default()
            },
            TrainConfig {
                crop: 12,
                ..Default::default()
            },
            TrainConfig {
                lr: 0.0,
                ..Default::default()
            },
        ] {
            assert_eq!(bad.validate().unwrap_err().kind(), "config");
        }
    }
}
