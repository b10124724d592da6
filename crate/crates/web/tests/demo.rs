use msgnn::image::procedural_scene;
use msgnn_web::{aggregate_image, rgba, Demo};

#[test]
fn rain_changes_only_the_rainy_view() {
    let mut d = Demo::new(32, 3).unwrap();
    let clean = d.clean_rgba();
    assert_eq!(clean.len(), 32 * 32 * 4);
    assert_eq!(d.rainy_rgba(), clean);
    d.rain(0.05, 10.0, 7, 0.8, 1).unwrap();
    assert_eq!(d.clean_rgba(), clean);
    assert_ne!(d.rainy_rgba(), clean);
    assert!(clean.chunks(4).all(|p| p[3] == 255));
}

#[test]
fn clicked_patch_is_its_own_first_match() {
    let d = Demo::new(40, 5).unwrap();
    let m = d.matches(13, 29, 4, 6).unwrap();
    assert_eq!(m.len(), 8);
    assert_eq!(&m[..2], &[12, 24]);
    assert!(m.iter().all(|v| v % 6 == 0 && *v < 36));
}

#[test]
fn single_neighbour_aggregation_is_the_identity() {
    let img = procedural_scene(30, 30, 9);
    let out = aggregate_image(&img, 1, 4, 2, 0).unwrap();
    assert_eq!((out.height(), out.width()), (30, 30));
    let diff = out
        .pixels()
        .iter()
        .zip(img.pixels())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn aggregation_crops_to_the_patch_grid() {
    let d = Demo::new(33, 1).unwrap();
    assert_eq!(d.aggregate_size(5, 2), 33);
    assert_eq!(d.aggregate_size(4, 3), 31);
    let out = d.aggregate(3, 4, 3, 7).unwrap();
    assert_eq!(out.len(), 31 * 31 * 4);
    assert!(aggregate_image(&procedural_scene(20, 20, 1), 3, 3, 4, 0).is_err());
    assert_eq!(rgba(&procedural_scene(16, 16, 2)).len(), 16 * 16 * 4);
}
