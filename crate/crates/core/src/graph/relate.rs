use rand::Rng;

use super::{aggregate, knn::knn_rows, patchify, unpatchify, AttentionNet, FeatureExtractor, FeatureMap, PatchLayout};
use crate::error::Result;
use crate::image::Image;
use crate::tensor::{Graph, ParamStore, Real, Var};

/// Feature extractor, attention scorer and search settings shared by every
/// graph branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphModel {
    pub features: FeatureExtractor,
    pub attention: AttentionNet,
    pub k: usize,
    pub l: usize,
    pub s: usize,
}

/// Query-side patches, computed once per forward pass.
#[derive(Clone, Copy, Debug)]
pub struct QueryPatches {
    pub patches: Var,
    pub layout: PatchLayout,
}

/// Where the neighbor patches come from.
#[derive(Clone, Copy, Debug)]
pub enum KeySource {
    /// The query feature map itself.
    Itself,
    /// Features extracted from another image (a rescaled copy or an exemplar).
    Image(Var),
}

impl GraphModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        prefix: &str,
        channels: usize,
        k: usize,
        l: usize,
        s: usize,
        slope: f64,
    ) -> Self {
        GraphModel {
            features: FeatureExtractor::new(store, rng, &format!("{prefix}.features"), channels, slope),
            attention: AttentionNet::new(store, rng, &format!("{prefix}.attention"), channels, slope),
            k,
            l,
            s,
        }
    }

    pub fn query<T: Real>(&self, g: &mut Graph<T>, query_features: Var) -> Result<QueryPatches> {
        let (patches, layout) = patchify(g, query_features, self.l, self.s)?;
        Ok(QueryPatches { patches, layout })
    }

    /// Nearest-neighbor search followed by attentional aggregation; the
    /// output is a `[C, H, W]` map at the query's resolution.
    pub fn relate<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        query: &QueryPatches,
        key: KeySource,
    ) -> Result<Var> {
        let (key_patches, self_search) = match key {
            KeySource::Itself => (query.patches, true),
            KeySource::Image(image) => {
                let f = self.features.forward(g, store, image)?;
                (patchify(g, f, self.l, self.s)?.0, false)
            }
        };
        let d = query.layout.geometry.patch_len();
        let key_count = g.shape(key_patches)[0];
        let k = if self.k > key_count {
            log::warn!("k={} exceeds {key_count} key patches; clamping", self.k);
            key_count
        } else {
            self.k
        };
        // Indices are data-dependent constants on the tape.
        let knn = knn_rows(
            g.value(query.patches).data(),
            g.value(key_patches).data(),
            d,
            k,
            self_search,
        )?;
        let channels = query.layout.geometry.channels;
        let out = aggregate(
            g,
            store,
            &self.attention,
            &knn,
            query.patches,
            key_patches,
            channels,
            self.l,
        )?;
        unpatchify(g, out, query.layout)
    }
}

/// One graph branch on plain tensors: relates `query_features` to the
/// features of `key` (or to itself when `key` is `None`).
pub fn graph_relate<T: Real>(
    model: &GraphModel,
    store: &ParamStore<T>,
    query_features: &FeatureMap<T>,
    key: Option<&Image>,
) -> Result<FeatureMap<T>> {
    let mut g = Graph::new();
    let f = g.constant(query_features.tensor.clone());
    let q = model.query(&mut g, f)?;
    let source = match key {
        None => KeySource::Itself,
        Some(img) => KeySource::Image(g.constant(img.to_tensor())),
    };
    let out = model.relate(&mut g, store, &q, source)?;
    Ok(FeatureMap {
        tensor: g.value(out).clone(),
        scale: query_features.scale,
    })
}
