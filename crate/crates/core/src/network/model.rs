use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CtResBlock, Fusion, Injection, MsgnnConfig};
use crate::error::{Error, Result};
use crate::graph::{GraphModel, KeySource};
use crate::image::Image;
use crate::tensor::{Conv, Graph, ParamStore, Real, Var};

/// Layer layout of the deraining network. Holds parameter handles only; the
/// values live in [`Msgnn::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Layers {
    pub head: Conv,
    pub graph: Option<GraphModel>,
    /// One injection per sub-network input when the graph is enabled.
    pub injections: Vec<Injection>,
    pub subnetworks: Vec<Vec<CtResBlock>>,
    /// `fusions[n - 1]` builds the input of sub-network `n` from outputs `0..n`.
    pub fusions: Vec<Fusion>,
    pub output_fusion: Option<Fusion>,
    pub tail: Conv,
}

/// Deraining network: predicts the rain layer and subtracts it from the input.
#[derive(Clone, Debug, PartialEq)]
pub struct Msgnn<T = f32> {
    pub config: MsgnnConfig,
    pub layers: Layers,
    pub params: ParamStore<T>,
}

/// Forward results on the tape.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// Estimated clean image, clamped to `[0, 1]`.
    pub derained: Var,
    /// Predicted rain layer.
    pub residual: Var,
}

impl<T: Real> Msgnn<T> {
    /// Builds the network with freshly initialized weights drawn from
    /// `config.init_seed`.
    pub fn new(config: MsgnnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut store = ParamStore::new();
        let c = config.channels;
        let slope = config.leaky_slope;

        let head = Conv::same3(&mut store, &mut rng, "head", 3, c, 1.0);
        let graph = config
            .graph
            .then(|| GraphModel::new(&mut store, &mut rng, "graph", c, config.k, config.l, config.s, slope));
        let branches = config.branch_count();
        let mut injections = Vec::new();
        let mut subnetworks = Vec::new();
        let mut fusions = Vec::new();
        for n in 0..config.subnetworks {
            if n > 0 && config.fusion {
                fusions.push(Fusion::new(&mut store, &mut rng, &format!("fusion{n}"), n, c));
            }
            if config.graph {
                injections.push(Injection::new(
                    &mut store,
                    &mut rng,
                    &format!("inject{n}"),
                    branches,
                    c,
                    config.inject_stride,
                    slope,
                ));
            }
            let blocks = (0..config.blocks)
                .map(|m| {
                    CtResBlock::new(
                        &mut store,
                        &mut rng,
                        &format!("subnet{n}.block{m}"),
                        c,
                        config.attention,
                        slope,
                    )
                })
                .collect();
            subnetworks.push(blocks);
        }
        let output_fusion = config
            .fusion
            .then(|| Fusion::new(&mut store, &mut rng, "output_fusion", config.subnetworks, c));
        let tail = Conv::same3(&mut store, &mut rng, "tail", c, 3, 0.01);

        Ok(Msgnn {
            config,
            layers: Layers {
                head,
                graph,
                injections,
                subnetworks,
                fusions,
                output_fusion,
                tail,
            },
            params: store,
        })
    }

    /// Same layout and values in another precision.
    pub fn cast<U: Real>(&self) -> Msgnn<U> {
        Msgnn {
            config: self.config.clone(),
            layers: self.layers.clone(),
            params: self.params.cast(),
        }
    }

    /// Zeroes the output convolution, making the network the identity map.
    pub fn zero_tail(&mut self) {
        for id in [self.layers.tail.weight, self.layers.tail.bias] {
            self.params.get_mut(id).data_mut().fill(T::zero());
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Per-component scalar counts keyed by the first name segment, in
    /// registration order.
    pub fn breakdown(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for (_, name, t) in self.params.iter() {
            let mut parts = name.split('.');
            let first = parts.next().unwrap_or(name);
            let group = if first == "graph" {
                format!("graph.{}", parts.next().unwrap_or(""))
            } else {
                first.to_string()
            };
            match out.last_mut() {
                Some((g, n)) if *g == group => *n += t.numel(),
                _ => out.push((group, t.numel())),
            }
        }
        out
    }

    /// Largest downscaling factor used by an enabled graph branch.
    fn min_scale_divisor(&self) -> usize {
        match self.config.scales {
            s if s.quarter => 4,
            s if s.half => 2,
            _ => 1,
        }
    }

    /// Graph outputs for every enabled branch, each at the input's resolution.
    pub fn graph_features(&self, g: &mut Graph<T>, rainy: Var, exemplar: Option<Var>) -> Result<Vec<Var>> {
        let Some(model) = &self.layers.graph else {
            return Ok(Vec::new());
        };
        let cfg = &self.config;
        let (_, h, w) = g.value(rainy).chw()?;
        let min = cfg.l * self.min_scale_divisor();
        if h < min || w < min {
            return Err(Error::dim(
                "forward",
                "H,W",
                format!("input {h}x{w} too small: graph branches need sides of at least {min}"),
            ));
        }
        let features = model.features.forward(g, &self.params, rainy)?;
        let query = model.query(g, features)?;
        let mut out = Vec::new();
        if cfg.scales.full {
            out.push(model.relate(g, &self.params, &query, KeySource::Itself)?);
        }
        for (on, factor) in [(cfg.scales.half, 2), (cfg.scales.quarter, 4)] {
            if on {
                let small = g.bilinear_resize(rainy, h / factor, w / factor)?;
                out.push(model.relate(g, &self.params, &query, KeySource::Image(small))?);
            }
        }
        if cfg.use_exemplar {
            let e = exemplar.unwrap_or(rainy);
            out.push(model.relate(g, &self.params, &query, KeySource::Image(e))?);
        }
        Ok(out)
    }

    /// Records the forward pass for a `[3, H, W]` rainy input.
    ///
    /// Inputs whose sides are not multiples of 4 are reflection-padded
    /// internally and the outputs cropped back. Without an exemplar the
    /// input serves as its own exemplar.
    pub fn forward(&self, g: &mut Graph<T>, rainy: Var, exemplar: Option<Var>) -> Result<ForwardOutput> {
        let (c, h, w) = g.value(rainy).chw()?;
        if c != 3 {
            return Err(Error::dim("forward", "C", format!("expected 3 channels, got {c}")));
        }
        let padded = g.reflect_pad(rainy, (4 - h % 4) % 4, (4 - w % 4) % 4)?;
        let graph_features = self.graph_features(g, padded, exemplar)?;

        let slope = self.config.leaky_slope;
        let x = self.layers.head.forward(g, &self.params, padded)?;
        let mut x = g.leaky_relu(x, slope);
        let mut outputs: Vec<Var> = Vec::with_capacity(self.config.subnetworks);
        for (n, blocks) in self.layers.subnetworks.iter().enumerate() {
            if n > 0 {
                x = match self.layers.fusions.get(n - 1) {
                    Some(f) => f.forward(g, &self.params, &outputs)?,
                    None => outputs[n - 1],
                };
            }
            if let Some(inj) = self.layers.injections.get(n) {
                x = inj.forward(g, &self.params, x, &graph_features)?;
            }
            for block in blocks {
                x = block.forward(g, &self.params, x)?;
            }
            outputs.push(x);
        }
        let last = match &self.layers.output_fusion {
            Some(f) => f.forward(g, &self.params, &outputs)?,
            None => x,
        };
        let residual = self.layers.tail.forward(g, &self.params, last)?;
        let residual = g.crop(residual, h, w)?;
        let diff = g.sub(rainy, residual)?;
        let derained = g.clamp(diff, 0.0, 1.0);
        Ok(ForwardOutput { derained, residual })
    }

    /// Inference on images; returns `(derained, rain layer)`.
    pub fn derain(&self, rainy: &Image, exemplar: Option<&Image>) -> Result<(Image, Image)> {
        let mut g = Graph::new();
        let o = g.constant(rainy.to_tensor());
        let e = exemplar.map(|e| g.constant(e.to_tensor()));
        let out = self.forward(&mut g, o, e)?;
        Ok((
            Image::from_tensor(g.value(out.derained))?,
            Image::from_tensor(g.value(out.residual))?,
        ))
    }
}

/// Number of trainable scalars for a configuration.
pub fn param_count(config: &MsgnnConfig) -> Result<usize> {
    Ok(Msgnn::<f32>::new(config.clone())?.scalar_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::procedural_scene;

    fn tiny() -> MsgnnConfig {
        MsgnnConfig {
            subnetworks: 2,
            blocks: 1,
            channels: 4,
            k: 3,
            ..Default::default()
        }
    }

    #[test]
    fn zero_tail_is_identity() {
        let mut net = Msgnn::<f32>::new(tiny()).unwrap();
        net.zero_tail();
        let img = procedural_scene(13, 18, 2);
        let (out, rain) = net.derain(&img, None).unwrap();
        assert_eq!(out, img);
        assert!(rain.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_matches_input_size() {
        let net = Msgnn::<f32>::new(tiny()).unwrap();
        for (h, w) in [(12, 12), (17, 13), (12, 23)] {
            let (out, _) = net.derain(&procedural_scene(h, w, 1), None).unwrap();
            assert_eq!((out.height(), out.width()), (h, w));
        }
        let err = net.derain(&procedural_scene(8, 23, 1), None).unwrap_err();
        assert_eq!(err.kind(), "dimension");
    }

    #[test]
    fn exemplar_branch_changes_output() {
        let img = procedural_scene(16, 16, 3);
        let on = Msgnn::<f32>::new(tiny()).unwrap().derain(&img, None).unwrap().0;
        let cfg = MsgnnConfig {
            use_exemplar: false,
            ..tiny()
        };
        let off = Msgnn::<f32>::new(cfg).unwrap().derain(&img, None).unwrap().0;
        assert_ne!(on, off);
    }

    #[test]
    fn counts_grow_with_depth() {
        let base = MsgnnConfig::default();
        let total = param_count(&base).unwrap();
        assert!((1_000_000..=10_000_000).contains(&total), "{total}");
        let more_n = param_count(&MsgnnConfig {
            subnetworks: 5,
            ..base.clone()
        })
        .unwrap();
        let more_m = param_count(&MsgnnConfig {
            blocks: 9,
            ..base.clone()
        })
        .unwrap();
        assert!(more_n > total && more_m > total);
        let net = Msgnn::<f32>::new(base).unwrap();
        assert_eq!(net.breakdown().iter().map(|(_, n)| n).sum::<usize>(), total);
    }

    #[test]
    fn forward_is_deterministic() {
        let img = procedural_scene(12, 12, 5);
        let a = Msgnn::<f32>::new(tiny()).unwrap().derain(&img, None).unwrap();
        let b = Msgnn::<f32>::new(tiny()).unwrap().derain(&img, None).unwrap();
        assert_eq!(a, b);
    }
}
