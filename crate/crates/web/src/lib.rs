//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The page holds one `Demo`: a procedural scene with synthetic rain. It can
//! re-rain the scene, show the nearest patches of a clicked patch, and
//! replace every patch by the attention-weighted mean of its neighbours.

use msgnn::graph::{attentional_aggregate, img2patch, knn_search_self, patch2img, AttentionNet};
use msgnn::image::{procedural_scene, synth_rain, Image, RainParams};
use msgnn::tensor::ParamStore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: msgnn::error::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Interleaved RGBA bytes for a canvas `ImageData`.
pub fn rgba(img: &Image) -> Vec<u8> {
    img.pixels()
        .chunks(3)
        .flat_map(|p| [p[0], p[1], p[2], 1.0].map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect()
}

/// Largest `l + n*s` that fits in `len`, so patches tile it exactly.
fn tiled(len: usize, l: usize, s: usize) -> usize {
    if len < l {
        0
    } else {
        l + (len - l) / s * s
    }
}

#[wasm_bindgen]
pub struct Demo {
    clean: Image,
    rainy: Image,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, scene_seed: u64) -> Result<Demo, JsError> {
        if size < 16 {
            return Err(JsError::new("scene size must be at least 16"));
        }
        let clean = procedural_scene(size, size, scene_seed);
        Ok(Demo {
            rainy: clean.clone(),
            clean,
        })
    }

    pub fn size(&self) -> usize {
        self.clean.height()
    }

    /// Replaces the rainy image with fresh streaks over the clean scene.
    pub fn rain(&mut self, density: f64, angle: f64, length: usize, intensity: f64, seed: u64) -> Result<(), JsError> {
        let params = RainParams {
            density,
            angle_deg: angle,
            length_px: length,
            intensity,
            seed,
        };
        self.rainy = synth_rain(&self.clean, &params).map_err(js_err)?.0;
        Ok(())
    }

    pub fn clean_rgba(&self) -> Vec<u8> {
        rgba(&self.clean)
    }

    pub fn rainy_rgba(&self) -> Vec<u8> {
        rgba(&self.rainy)
    }

    /// Top-left corners `[y0, x0, y1, x1, ...]` of the `k` patches closest to
    /// the non-overlapping `l x l` patch under pixel `(y, x)`. The first entry
    /// is the clicked patch itself.
    pub fn matches(&self, y: usize, x: usize, k: usize, l: usize) -> Result<Vec<u32>, JsError> {
        let (h, w) = (tiled(self.size(), l, l), tiled(self.size(), l, l));
        if l == 0 || h == 0 || y >= h || x >= w {
            return Err(JsError::new("point lies outside the patch grid"));
        }
        let img = self.rainy.crop(0, 0, h, w).map_err(js_err)?;
        let set = img2patch(&img.to_tensor::<f32>(), l, l).map_err(js_err)?;
        let knn = knn_search_self(&set, k).map_err(js_err)?;
        let cols = w / l;
        let q = (y / l) * cols + x / l;
        Ok(knn
            .neighbors_of(q)
            .iter()
            .flat_map(|&j| [((j / cols) * l) as u32, ((j % cols) * l) as u32])
            .collect())
    }

    /// RGBA of the rainy image after every `l x l` patch (stride `s`) is
    /// replaced by the attention-weighted mean of its `k` nearest patches.
    /// The attention network is freshly initialised from `seed`, so this
    /// previews the relation step before any training.
    pub fn aggregate(&self, k: usize, l: usize, s: usize, seed: u64) -> Result<Vec<u8>, JsError> {
        let out = aggregate_image(&self.rainy, k, l, s, seed).map_err(js_err)?;
        Ok(rgba(&out))
    }

    /// Side length of the image returned by `aggregate` for these settings.
    pub fn aggregate_size(&self, l: usize, s: usize) -> usize {
        tiled(self.size(), l, s.max(1))
    }
}

/// Self-similarity aggregation over the top-left region that `l`, `s` tile.
pub fn aggregate_image(img: &Image, k: usize, l: usize, s: usize, seed: u64) -> msgnn::error::Result<Image> {
    if l == 0 || s == 0 || s > l {
        return Err(msgnn::error::Error::Config(format!(
            "need 1 <= s <= l, got l={l} s={s}"
        )));
    }
    let (h, w) = (tiled(img.height(), l, s), tiled(img.width(), l, s));
    let region = img.crop(0, 0, h, w)?;
    let set = img2patch(&region.to_tensor::<f32>(), l, s)?;
    let knn = knn_search_self(&set, k)?;
    let mut store = ParamStore::new();
    let net = AttentionNet::new(&mut store, &mut ChaCha8Rng::seed_from_u64(seed), "att", 3, 0.2);
    let merged = attentional_aggregate(&knn, &set, &set, &net, &store)?;
    Image::from_tensor(&patch2img(&merged)?)
}
