use rand::Rng;

use crate::error::Result;
use crate::image::Image;
use crate::tensor::{Conv, Graph, ParamStore, Real, Tensor, Var};

/// Which input a feature map was computed from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScaleTag {
    Full,
    Half,
    Quarter,
    Exemplar,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T = f32> {
    /// `[C, H, W]`.
    pub tensor: Tensor<T>,
    pub scale: ScaleTag,
}

/// Three 3x3 convolutions (3 -> C -> C -> C), leaky ReLU after the first two.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureExtractor {
    pub layers: [Conv; 3],
    pub slope: f64,
}

impl FeatureExtractor {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        prefix: &str,
        channels: usize,
        slope: f64,
    ) -> Self {
        let layers = [
            Conv::same3(store, rng, &format!("{prefix}.conv1"), 3, channels, 1.0),
            Conv::same3(store, rng, &format!("{prefix}.conv2"), channels, channels, 1.0),
            Conv::same3(store, rng, &format!("{prefix}.conv3"), channels, channels, 1.0),
        ];
        FeatureExtractor { layers, slope }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, image: Var) -> Result<Var> {
        let mut x = image;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, store, x)?;
            if i < 2 {
                x = g.leaky_relu(x, self.slope);
            }
        }
        Ok(x)
    }

    pub fn channels(&self) -> usize {
        self.layers[2].out_channels
    }
}

pub fn extract_features<T: Real>(
    image: &Image,
    scale: ScaleTag,
    extractor: &FeatureExtractor,
    store: &ParamStore<T>,
) -> Result<FeatureMap<T>> {
    let mut g = Graph::new();
    let x = g.constant(image.to_tensor());
    let f = extractor.forward(&mut g, store, x)?;
    Ok(FeatureMap {
        tensor: g.value(f).clone(),
        scale,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn shape_and_zero_response() {
        let mut store = ParamStore::<f32>::new();
        let fe = FeatureExtractor::new(&mut store, &mut ChaCha8Rng::seed_from_u64(1), "f", 32, 0.2);
        let f = extract_features(&Image::filled(64, 64, 0.4), ScaleTag::Full, &fe, &store).unwrap();
        assert_eq!(f.tensor.shape(), &[32, 64, 64]);
        // Zero input with zero biases stays zero through every layer.
        let z = extract_features(&Image::filled(16, 16, 0.0), ScaleTag::Full, &fe, &store).unwrap();
        assert!(z.tensor.data().iter().all(|&v| v == 0.0));
    }
}
