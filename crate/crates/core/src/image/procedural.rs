use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Image;

/// Bilinearly interpolated random lattice with `cell`-pixel spacing, values in `[-1, 1]`.
fn value_noise(height: usize, width: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let (gh, gw) = (height / cell + 2, width / cell + 2);
    let lattice: Vec<f32> = (0..gh * gw).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        let (fy, ty) = ((y / cell), (y % cell) as f32 / cell as f32);
        for x in 0..width {
            let (fx, tx) = ((x / cell), (x % cell) as f32 / cell as f32);
            let at = |i: usize, j: usize| lattice[(fy + i) * gw + fx + j];
            let top = at(0, 0) * (1.0 - tx) + at(0, 1) * tx;
            let bot = at(1, 0) * (1.0 - tx) + at(1, 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Synthetic natural-looking scene used as a clean background for toy
/// datasets: a color gradient, overlapping ellipses with fairly crisp
/// edges, an oriented stripe field and two octaves of value noise.
pub fn procedural_scene(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut color = || {
        [
            rng.random_range(0.05..0.75f32),
            rng.random_range(0.05..0.75),
            rng.random_range(0.05..0.75),
        ]
    };
    let top = color();
    let bottom = color();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 1);
    let blobs: Vec<_> = (0..rng.random_range(4..9))
        .map(|_| {
            let cy = rng.random_range(0.0..height as f32);
            let cx = rng.random_range(0.0..width as f32);
            let ry = rng.random_range(0.08..0.35) * height as f32;
            let rx = rng.random_range(0.08..0.35) * width as f32;
            let col = [
                rng.random_range(0.0..0.85f32),
                rng.random_range(0.0..0.85),
                rng.random_range(0.0..0.85),
            ];
            (cy, cx, ry, rx, col)
        })
        .collect();
    let theta = rng.random_range(0.0..std::f32::consts::PI);
    let period = rng.random_range(4.0..10.0f32);
    let (sy, sx) = (
        theta.sin() * std::f32::consts::TAU / period,
        theta.cos() * std::f32::consts::TAU / period,
    );
    let stripe_amp = rng.random_range(0.04..0.12f32);
    let coarse = value_noise(height, width, 8, &mut rng);
    let fine = value_noise(height, width, 3, &mut rng);
    let tint: [f32; 3] = [
        rng.random_range(0.6..1.0),
        rng.random_range(0.6..1.0),
        rng.random_range(0.6..1.0),
    ];

    let mut pixels = Vec::with_capacity(height * width * 3);
    for y in 0..height {
        let t = y as f32 / (height.max(2) - 1) as f32;
        for x in 0..width {
            let mut px = [0.0f32; 3];
            for c in 0..3 {
                px[c] = top[c] * (1.0 - t) + bottom[c] * t;
            }
            for (cy, cx, ry, rx, col) in &blobs {
                let d = ((y as f32 - cy) / ry).powi(2) + ((x as f32 - cx) / rx).powi(2);
                // Smooth step from inside (1) to outside (0) over d in [0.9, 1.1].
                let a = ((1.1 - d) / 0.2).clamp(0.0, 1.0);
                let a = a * a * (3.0 - 2.0 * a);
                for c in 0..3 {
                    px[c] = px[c] * (1.0 - a) + col[c] * a;
                }
            }
            let i = y * width + x;
            let stripes = stripe_amp * (sy * y as f32 + sx * x as f32).sin();
            let tex = 0.10 * coarse[i] + 0.06 * fine[i] + stripes;
            for c in 0..3 {
                px[c] += tex * tint[c];
            }
            pixels.extend(px);
        }
    }
    Image::new(height, width, pixels).expect("dimensions are consistent")
}
