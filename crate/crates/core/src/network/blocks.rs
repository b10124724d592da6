use rand::Rng;

use super::AttentionVariant;
use crate::error::{Error, Result};
use crate::tensor::{Conv, Graph, ParamStore, Real, Var};

/// Channel gate: `sigmoid(fc2(act(fc1(avg_pool(x)))))`, reduction ratio 8.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelGate {
    pub fc1: Conv,
    pub fc2: Conv,
    /// Negative slope of the hidden activation; 0 is a plain ReLU.
    pub slope: f64,
}

impl ChannelGate {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let pooled = g.channel_mean(x)?;
        let h = self.fc1.forward(g, store, pooled)?;
        let h = g.leaky_relu(h, self.slope);
        let h = self.fc2.forward(g, store, h)?;
        let gate = g.sigmoid(h);
        g.scale_channels(x, gate)
    }
}

/// Residual block `y = x + gate(conv_b(act(conv_a(x))))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CtResBlock {
    pub conv_a: Conv,
    pub conv_b: Conv,
    pub gate: Option<ChannelGate>,
    pub slope: f64,
}

impl CtResBlock {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        prefix: &str,
        channels: usize,
        variant: AttentionVariant,
        slope: f64,
    ) -> Self {
        let conv_a = Conv::same3(store, rng, &format!("{prefix}.conv_a"), channels, channels, 1.0);
        // Residual branches start small so deep stacks stay near identity.
        let conv_b = Conv::same3(store, rng, &format!("{prefix}.conv_b"), channels, channels, 0.1);
        let hidden = (channels / 8).max(1);
        let gate = match variant {
            AttentionVariant::None => None,
            AttentionVariant::Ct | AttentionVariant::Se => Some(ChannelGate {
                fc1: Conv::new(
                    store,
                    rng,
                    &format!("{prefix}.gate.fc1"),
                    channels,
                    hidden,
                    1,
                    1,
                    0,
                    1.0,
                ),
                fc2: Conv::new(
                    store,
                    rng,
                    &format!("{prefix}.gate.fc2"),
                    hidden,
                    channels,
                    1,
                    1,
                    0,
                    1.0,
                ),
                slope: if variant == AttentionVariant::Ct { slope } else { 0.0 },
            }),
        };
        CtResBlock {
            conv_a,
            conv_b,
            gate,
            slope,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let c = g.value(x).chw()?.0;
        if c != self.conv_a.in_channels {
            return Err(Error::dim(
                "ct_res_block",
                "C",
                format!("block expects {} channels, got {c}", self.conv_a.in_channels),
            ));
        }
        let h = self.conv_a.forward(g, store, x)?;
        let h = g.leaky_relu(h, self.slope);
        let mut h = self.conv_b.forward(g, store, h)?;
        if let Some(gate) = &self.gate {
            h = gate.forward(g, store, h)?;
        }
        g.add(x, h)
    }
}

/// Concatenation of several `[C,H,W]` maps followed by a 1x1 convolution back to `C`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fusion {
    pub conv: Conv,
}

impl Fusion {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        inputs: usize,
        channels: usize,
    ) -> Self {
        Fusion {
            conv: Conv::new(store, rng, name, inputs * channels, channels, 1, 1, 0, 1.0),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, features: &[Var]) -> Result<Var> {
        let x = g.concat_channels(features)?;
        if g.shape(x)[0] != self.conv.in_channels {
            return Err(Error::dim(
                "fusion_connection",
                "C",
                format!(
                    "expected {} stacked channels, got {}",
                    self.conv.in_channels,
                    g.shape(x)[0]
                ),
            ));
        }
        self.conv.forward(g, store, x)
    }
}

/// Concatenates backbone features with graph outputs and applies two 5x5
/// convolutions with a leaky ReLU between them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Injection {
    pub conv1: Conv,
    pub conv2: Conv,
    pub slope: f64,
}

impl Injection {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        prefix: &str,
        branches: usize,
        channels: usize,
        stride: usize,
        slope: f64,
    ) -> Self {
        let cin = (1 + branches) * channels;
        Injection {
            conv1: Conv::new(store, rng, &format!("{prefix}.conv1"), cin, channels, 5, stride, 2, 1.0),
            conv2: Conv::new(store, rng, &format!("{prefix}.conv2"), channels, channels, 5, 1, 2, 1.0),
            slope,
        }
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        backbone: Var,
        graph_features: &[Var],
    ) -> Result<Var> {
        let (_, h, w) = g.value(backbone).chw()?;
        for &f in graph_features {
            let (_, fh, fw) = g.value(f).chw()?;
            if (fh, fw) != (h, w) {
                return Err(Error::dim(
                    "graph_inject",
                    "H,W",
                    format!("graph features {fh}x{fw} vs backbone {h}x{w}"),
                ));
            }
        }
        let mut inputs = vec![backbone];
        inputs.extend_from_slice(graph_features);
        let x = g.concat_channels(&inputs)?;
        let x = self.conv1.forward(g, store, x)?;
        let x = g.leaky_relu(x, self.slope);
        let x = self.conv2.forward(g, store, x)?;
        if g.shape(x)[1..] != [h, w] {
            return g.bilinear_resize(x, h, w);
        }
        Ok(x)
    }
}
