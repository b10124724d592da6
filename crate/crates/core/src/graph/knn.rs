use super::PatchSet;
use crate::error::{Error, Result};
use crate::tensor::Real;

/// Per-query neighbor table: `k` key indices per query, nearest first.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnGraph {
    pub k: usize,
    /// Row-major `Q x k` indices into the key patch set.
    pub neighbors: Vec<usize>,
    /// Row-major `Q x k` Euclidean distances, non-decreasing per row.
    pub distances: Vec<f64>,
}

impl KnnGraph {
    pub fn queries(&self) -> usize {
        self.neighbors.len() / self.k
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors_of(&self, q: usize) -> &[usize] {
        &self.neighbors[q * self.k..(q + 1) * self.k]
    }

    pub fn distances_of(&self, q: usize) -> &[f64] {
        &self.distances[q * self.k..(q + 1) * self.k]
    }
}

/// Accumulated in f64 over four lanes; exact for integer-valued inputs, so
/// ties there are real ties.
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let mut tail = 0.0;
    for (&x, &y) in ac.remainder().iter().zip(bc.remainder()) {
        let d = x - y;
        tail += d * d;
    }
    for (x, y) in ac.zip(bc) {
        for i in 0..4 {
            let d = x[i] - y[i];
            acc[i] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Exact k-NN over the rows of `query` (`q x d`) against `key` (`n x d`).
/// Equal distances resolve to the smaller key index. With `self_first`, the
/// key with the query's own index outranks every other key.
pub(crate) fn knn_rows<T: Real>(query: &[T], key: &[T], d: usize, k: usize, self_first: bool) -> Result<KnnGraph> {
    let (nq, nk) = (query.len() / d, key.len() / d);
    if k == 0 || k > nk {
        return Err(Error::Contract(format!("knn: k={k} must be in 1..={nk}")));
    }
    let query: Vec<f64> = query.iter().map(|v| v.f64()).collect();
    let key: Vec<f64> = key.iter().map(|v| v.f64()).collect();
    let mut neighbors = Vec::with_capacity(nq * k);
    let mut distances = Vec::with_capacity(nq * k);
    // (rank key, index, squared distance), sorted ascending by (rank key, index).
    let mut best: Vec<(f64, usize, f64)> = Vec::with_capacity(k + 1);
    for q in 0..nq {
        best.clear();
        let qrow = &query[q * d..(q + 1) * d];
        for j in 0..nk {
            let dist = squared_distance(qrow, &key[j * d..(j + 1) * d]);
            let rank = if self_first && j == q { -1.0 } else { dist };
            if best.len() == k && rank >= best[k - 1].0 {
                continue;
            }
            // Keys arrive in ascending index order, so inserting after every
            // entry with rank <= this one keeps the index tie rule.
            let pos = best.partition_point(|e| e.0 <= rank);
            best.insert(pos, (rank, j, dist));
            best.truncate(k);
        }
        for &(_, j, dist) in &best {
            neighbors.push(j);
            distances.push(dist.sqrt());
        }
    }
    Ok(KnnGraph {
        k,
        neighbors,
        distances,
    })
}

fn check_dims<T: Real>(query: &PatchSet<T>, key: &PatchSet<T>) -> Result<()> {
    if query.patch_len() != key.patch_len() {
        return Err(Error::dim(
            "knn_search",
            "feature length",
            format!("query {} vs key {}", query.patch_len(), key.patch_len()),
        ));
    }
    Ok(())
}

/// k nearest key patches (Euclidean) for every query patch.
pub fn knn_search<T: Real>(query: &PatchSet<T>, key: &PatchSet<T>, k: usize) -> Result<KnnGraph> {
    check_dims(query, key)?;
    knn_rows(query.patches.data(), key.patches.data(), query.patch_len(), k, false)
}

/// k-NN of a patch set against itself; each query is its own first neighbor.
pub fn knn_search_self<T: Real>(patches: &PatchSet<T>, k: usize) -> Result<KnnGraph> {
    let data = patches.patches.data();
    knn_rows(data, data, patches.patch_len(), k, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_one_dimensional() {
        let g = knn_rows(&[0.0f64], &[3.0, 1.0, 2.0], 1, 2, false).unwrap();
        assert_eq!(g.neighbors, [1, 2]);
        assert_eq!(g.distances, [1.0, 2.0]);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn ties_resolve_to_lower_index() {
        let g = knn_rows(&[0.0f64], &[1.0, -1.0, 1.0, -1.0], 1, 3, false).unwrap();
        assert_eq!(g.neighbors, [0, 1, 2]);
    }

    #[test]
    fn self_ranks_first_even_with_duplicates() {
        let data = [5.0f64, 5.0, 5.0];
        let g = knn_rows(&data, &data, 1, 2, true).unwrap();
        assert_eq!(g.neighbors, [0, 1, 1, 0, 2, 0]);
        assert!(g.distances.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn k_bounds() {
        assert!(knn_rows(&[0.0f64], &[1.0, 2.0], 1, 3, false).is_err());
        assert!(knn_rows(&[0.0f64], &[1.0, 2.0], 1, 0, false).is_err());
    }
}
