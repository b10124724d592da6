use msgnn::graph::{img2patch, knn_search, knn_search_self, patch2img};
use msgnn::tensor::{Graph, Tensor};
use proptest::prelude::*;

fn tensor(shape: [usize; 3], seed: u64) -> Tensor<f32> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(shape, |_| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 33) % 1000) as f32 / 250.0 - 2.0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patches_round_trip(c in 1usize..5, l in 1usize..5, s in 1usize..4, ny in 1usize..6, nx in 1usize..6, seed: u64) {
        let s = s.min(l);
        let f = tensor([c, l + (ny - 1) * s, l + (nx - 1) * s], seed);
        let set = img2patch(&f, l, s).unwrap();
        prop_assert_eq!(set.count(), ny * nx);
        prop_assert_eq!(set.patch_len(), c * l * l);
        let back = patch2img(&set).unwrap();
        // Overlapping windows average several copies, which may round.
        if s == l {
            prop_assert_eq!(back, f);
        } else {
            prop_assert!(back.max_abs_diff(&f) < 1e-6);
        }
    }

    #[test]
    fn knn_distances_are_sorted_and_exact(d in 1usize..6, k in 1usize..5, seed: u64) {
        let q = img2patch(&tensor([d, 3, 4], seed), 1, 1).unwrap();
        let key = img2patch(&tensor([d, 4, 5], seed ^ 0xabc), 1, 1).unwrap();
        let g = knn_search(&q, &key, k).unwrap();
        for i in 0..q.count() {
            let dist = &g.distances[i * k..(i + 1) * k];
            prop_assert!(dist.windows(2).all(|w| w[0] <= w[1]));
            for (j, &n) in g.neighbors_of(i).iter().enumerate() {
                let sq: f64 = q.row(i).iter().zip(key.row(n)).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum();
                prop_assert!((sq - dist[j] * dist[j]).abs() <= 1e-9 * (1.0 + sq));
            }
        }
    }

    #[test]
    fn self_search_ranks_the_query_first(d in 1usize..6, k in 1usize..5, seed: u64) {
        let p = img2patch(&tensor([d, 3, 3], seed), 1, 1).unwrap();
        let g = knn_search_self(&p, k).unwrap();
        for i in 0..p.count() {
            prop_assert_eq!(g.neighbors_of(i)[0], i);
        }
    }

    #[test]
    fn group_softmax_rows_sum_to_one(groups in 1usize..6, size in 1usize..6, seed: u64) {
        let mut g = Graph::<f64>::new();
        let x = g.constant(tensor([1, groups, size], seed).cast::<f64>().reshape([groups * size]).unwrap());
        let y = g.group_softmax(x, size).unwrap();
        for row in g.value(y).data().chunks(size) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| *v > 0.0));
        }
    }
}
