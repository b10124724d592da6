use msgnn::train::exemplar_index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn exemplar_draws_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 5;
    let draws = 10_000;
    let mut counts = vec![0usize; n];
    for _ in 0..draws {
        counts[exemplar_index(n, &mut rng, None).unwrap()] += 1;
    }
    let expected = draws as f64 / n as f64;
    for (i, c) in counts.iter().enumerate() {
        assert!((*c as f64 - expected).abs() / expected < 0.05, "index {i}: {c} draws");
    }
}

#[test]
fn excluded_index_is_never_drawn_and_others_stay_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 5;
    let mut counts = vec![0usize; n];
    for _ in 0..10_000 {
        counts[exemplar_index(n, &mut rng, Some(2)).unwrap()] += 1;
    }
    assert_eq!(counts[2], 0);
    for c in counts.iter().enumerate().filter(|(i, _)| *i != 2).map(|(_, c)| *c) {
        assert!((c as f64 - 2500.0).abs() / 2500.0 < 0.05, "{counts:?}");
    }
    assert_eq!(exemplar_index(1, &mut rng, Some(0)).unwrap(), 0);
    assert!(exemplar_index(0, &mut rng, None).is_err());
}
