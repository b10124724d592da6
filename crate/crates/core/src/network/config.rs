use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Channel gate used inside each residual block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionVariant {
    /// Global pool, 1x1 reduce (ratio 8), leaky ReLU, 1x1 expand, sigmoid.
    Ct,
    /// Squeeze-and-excitation: same layout with a plain ReLU.
    Se,
    /// No gating.
    None,
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionVariant::Ct => "ct",
            AttentionVariant::Se => "se",
            AttentionVariant::None => "none",
        })
    }
}

impl FromStr for AttentionVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ct" => Ok(AttentionVariant::Ct),
            "se" => Ok(AttentionVariant::Se),
            "none" => Ok(AttentionVariant::None),
            _ => Err(Error::Config(format!("attention must be ct, se or none, got {s:?}"))),
        }
    }
}

/// Internal scales the graph relates the input to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scales {
    pub full: bool,
    pub half: bool,
    pub quarter: bool,
}

impl Scales {
    pub const ALL: Scales = Scales {
        full: true,
        half: true,
        quarter: true,
    };
    pub const NONE: Scales = Scales {
        full: false,
        half: false,
        quarter: false,
    };
}

impl fmt::Display for Scales {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.full, "full"), (self.half, "half"), (self.quarter, "quarter")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

impl FromStr for Scales {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut out = Scales::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "full" => out.full = true,
                "half" => out.half = true,
                "quarter" => out.quarter = true,
                "none" => {}
                other => return Err(Error::Config(format!("unknown scale {other:?}"))),
            }
        }
        Ok(out)
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MsgnnConfig {
    /// Number of sub-networks (N).
    pub subnetworks: usize,
    /// Residual blocks per sub-network (M).
    pub blocks: usize,
    pub channels: usize,
    /// Neighbors per query patch.
    pub k: usize,
    /// Patch side length.
    pub l: usize,
    /// Patch stride.
    pub s: usize,
    pub leaky_slope: f64,
    pub use_exemplar: bool,
    pub scales: Scales,
    pub attention: AttentionVariant,
    /// Fusion connections between sub-networks; off feeds each sub-network
    /// only its predecessor's output.
    pub fusion: bool,
    /// Master switch for every graph branch and the injection blocks.
    pub graph: bool,
    /// Stride of the first 5x5 injection convolution. Stride 2 halves the
    /// map, which is resized back to full resolution after the second conv.
    pub inject_stride: usize,
    pub init_seed: u64,
}

impl Default for MsgnnConfig {
    fn default() -> Self {
        MsgnnConfig {
            subnetworks: 4,
            blocks: 8,
            channels: 32,
            k: 5,
            l: 3,
            s: 3,
            leaky_slope: 0.2,
            use_exemplar: true,
            scales: Scales::ALL,
            attention: AttentionVariant::Ct,
            fusion: true,
            graph: true,
            inject_stride: 1,
            init_seed: 0,
        }
    }
}

pub(crate) fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl MsgnnConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.subnetworks < 1 || self.blocks < 1 {
            return fail("n and m must be at least 1");
        }
        if self.channels < 4 {
            return fail("channels must be at least 4");
        }
        if self.l < 1 || self.s < 1 || self.k < 1 {
            return fail("k, l and s must be at least 1");
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return fail("leaky_slope must be in (0, 1)");
        }
        if self.inject_stride != 1 && self.inject_stride != 2 {
            return fail("inject_stride must be 1 or 2");
        }
        Ok(())
    }

    /// Number of graph branches feeding each injection.
    pub fn branch_count(&self) -> usize {
        if !self.graph {
            return 0;
        }
        [
            self.scales.full,
            self.scales.half,
            self.scales.quarter,
            self.use_exemplar,
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }

    /// Sets one field from its text key. Returns `Ok(false)` for keys this
    /// config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "n" => self.subnetworks = parse(key, value)?,
            "m" => self.blocks = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "l" => self.l = parse(key, value)?,
            "s" => self.s = parse(key, value)?,
            "leaky_slope" => self.leaky_slope = parse(key, value)?,
            "use_exemplar" => self.use_exemplar = parse_bool(key, value)?,
            "scales" => self.scales = value.trim().parse()?,
            "attention" => self.attention = value.trim().parse()?,
            "fusion" => self.fusion = parse_bool(key, value)?,
            "graph" => self.graph = parse_bool(key, value)?,
            "inject_stride" => self.inject_stride = parse(key, value)?,
            "init_seed" => self.init_seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n", self.subnetworks.to_string()),
            ("m", self.blocks.to_string()),
            ("channels", self.channels.to_string()),
            ("k", self.k.to_string()),
            ("l", self.l.to_string()),
            ("s", self.s.to_string()),
            ("leaky_slope", self.leaky_slope.to_string()),
            ("use_exemplar", self.use_exemplar.to_string()),
            ("scales", self.scales.to_string()),
            ("attention", self.attention.to_string()),
            ("fusion", self.fusion.to_string()),
            ("graph", self.graph.to_string()),
            ("inject_stride", self.inject_stride.to_string()),
            ("init_seed", self.init_seed.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_round_trip() {
        let cfg = MsgnnConfig {
            subnetworks: 2,
            scales: Scales {
                full: true,
                half: false,
                quarter: true,
            },
            attention: AttentionVariant::Se,
            leaky_slope: 0.15,
            ..Default::default()
        };
        let mut back = MsgnnConfig::default();
        for (k, v) in cfg.pairs() {
            assert!(back.set(k, &v).unwrap());
        }
        assert_eq!(back, cfg);
        assert!(!back.set("bogus", "1").unwrap());
    }

    #[test]
    fn validation() {
        assert!(MsgnnConfig::default().validate().is_ok());
        for bad in [
            MsgnnConfig {
                subnetworks: 0,
                ..Default::default()
            },
            MsgnnConfig {
                channels: 3,
                ..Default::default()
            },
            MsgnnConfig {
                k: 0,
                ..Default::default()
            },
            MsgnnConfig {
                leaky_slope: 1.0,
                ..Default::default()
            },
        ] {
            assert_eq!(bad.validate().unwrap_err().kind(), "config");
        }
    }

    #[test]
    fn branch_count_follows_switches() {
        assert_eq!(MsgnnConfig::default().branch_count(), 4);
        assert_eq!(
            MsgnnConfig {
                use_exemplar: false,
                ..Default::default()
            }
            .branch_count(),
            3
        );
        assert_eq!(
            MsgnnConfig {
                graph: false,
                ..Default::default()
            }
            .branch_count(),
            0
        );
        assert_eq!("none".parse::<Scales>().unwrap(), Scales::NONE);
    }
}
