use rand::Rng;

use super::{KnnGraph, PatchSet};
use crate::error::{Error, Result};
use crate::tensor::{Conv, Graph, ParamStore, Real, Tensor, Var};

/// Scores a `C x l x l` patch difference: conv 3x3 (C -> C), leaky ReLU,
/// conv 3x3 (C -> 1), spatial mean. The aggregation weight is `exp(score)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionNet {
    pub conv1: Conv,
    pub conv2: Conv,
    pub slope: f64,
}

impl AttentionNet {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        prefix: &str,
        channels: usize,
        slope: f64,
    ) -> Self {
        AttentionNet {
            conv1: Conv::same3(store, rng, &format!("{prefix}.conv1"), channels, channels, 1.0),
            conv2: Conv::same3(store, rng, &format!("{prefix}.conv2"), channels, 1, 1.0),
            slope,
        }
    }

    /// `[B, C, l, l]` differences to `[B]` logits.
    pub fn logits<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, diffs: Var) -> Result<Var> {
        let h = self.conv1.forward(g, store, diffs)?;
        let h = g.leaky_relu(h, self.slope);
        let s = self.conv2.forward(g, store, h)?;
        let shape = g.shape(s).to_vec();
        let flat = g.reshape(s, [shape[0], shape[2] * shape[3]])?;
        g.row_mean(flat)
    }

    /// Logit for one `[C, l, l]` difference.
    pub fn logit<T: Real>(&self, store: &ParamStore<T>, diff: &Tensor<T>) -> Result<T> {
        let (c, h, w) = diff.chw()?;
        let mut g = Graph::new();
        let d = g.constant(diff.clone().reshape([1, c, h, w])?);
        let out = self.logits(&mut g, store, d)?;
        Ok(g.value(out).item())
    }
}

/// Weighted average of each query's neighbors:
/// `out_q = sum_r a_r P_key[n_r] / sum_r a_r` with
/// `a_r = exp(logit(P_query[q] - P_key[n_r]))`.
///
/// `query` is `[Q, C*l*l]`, `key` is `[K, C*l*l]`; the result has the query's row count.
#[allow(clippy::too_many_arguments)]
pub fn aggregate<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    net: &AttentionNet,
    knn: &KnnGraph,
    query: Var,
    key: Var,
    channels: usize,
    l: usize,
) -> Result<Var> {
    let (weights, neighbors) = weights_and_neighbors(g, store, net, knn, query, key, channels, l)?;
    g.weighted_group_sum(weights, neighbors, knn.k)
}

#[allow(clippy::too_many_arguments)]
fn weights_and_neighbors<T: Real>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    net: &AttentionNet,
    knn: &KnnGraph,
    query: Var,
    key: Var,
    channels: usize,
    l: usize,
) -> Result<(Var, Var)> {
    let q = g.shape(query)[0];
    if knn.queries() != q || g.shape(query)[1] != channels * l * l || g.shape(key)[1] != channels * l * l {
        return Err(Error::dim(
            "attentional_aggregate",
            "geometry",
            format!(
                "graph has {} queries, query patches {:?}, key patches {:?}, patch {channels}x{l}x{l}",
                knn.queries(),
                g.shape(query),
                g.shape(key)
            ),
        ));
    }
    let k = knn.k;
    let repeated: Vec<usize> = (0..q).flat_map(|i| std::iter::repeat_n(i, k)).collect();
    let qrows = g.gather_rows(query, repeated)?;
    let nrows = g.gather_rows(key, knn.neighbors.clone())?;
    let diff = g.sub(qrows, nrows)?;
    let diff = g.reshape(diff, [q * k, channels, l, l])?;
    let logits = net.logits(g, store, diff)?;
    // exp(a_r) / sum exp(a_j), shifted by the group max for range safety.
    let weights = g.group_softmax(logits, k)?;
    Ok((weights, nrows))
}

/// Aggregated patches on the query's layout.
pub fn attentional_aggregate<T: Real>(
    knn: &KnnGraph,
    query: &PatchSet<T>,
    key: &PatchSet<T>,
    net: &AttentionNet,
    store: &ParamStore<T>,
) -> Result<PatchSet<T>> {
    let c = query.layout.geometry.channels;
    let l = query.layout.geometry.l;
    if key.layout.geometry.l != l || key.layout.geometry.channels != c {
        return Err(Error::dim(
            "attentional_aggregate",
            "patch",
            "query and key patch shapes differ",
        ));
    }
    let mut g = Graph::new();
    let qv = g.constant(query.patches.clone());
    let kv = g.constant(key.patches.clone());
    let out = aggregate(&mut g, store, net, knn, qv, kv, c, l)?;
    Ok(PatchSet {
        patches: g.value(out).clone(),
        layout: query.layout,
    })
}

/// Normalized aggregation weights, `Q x k` row-major.
pub fn attention_weights<T: Real>(
    knn: &KnnGraph,
    query: &PatchSet<T>,
    key: &PatchSet<T>,
    net: &AttentionNet,
    store: &ParamStore<T>,
) -> Result<Vec<T>> {
    let c = query.layout.geometry.channels;
    let l = query.layout.geometry.l;
    let mut g = Graph::new();
    let qv = g.constant(query.patches.clone());
    let kv = g.constant(key.patches.clone());
    let (w, _) = weights_and_neighbors(&mut g, store, net, knn, qv, kv, c, l)?;
    Ok(g.value(w).data().to_vec())
}
