use crate::error::{Error, Result};
use crate::tensor::{Graph, PatchGeometry, Real, Tensor, Var};

/// Flattened feature patches plus the layout needed to put them back.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet<T = f32> {
    /// `[Q, C*l*l]`, row `q` is the row-major flattening of one `C x l x l` window.
    pub patches: Tensor<T>,
    pub layout: PatchLayout,
}

/// Patch geometry over a reflection-padded map, plus the unpadded size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchLayout {
    pub geometry: PatchGeometry,
    pub source_height: usize,
    pub source_width: usize,
}

impl<T: Real> PatchSet<T> {
    pub fn count(&self) -> usize {
        self.layout.geometry.count()
    }

    pub fn patch_len(&self) -> usize {
        self.layout.geometry.patch_len()
    }

    pub fn row(&self, q: usize) -> &[T] {
        let d = self.patch_len();
        &self.patches.data()[q * d..(q + 1) * d]
    }
}

/// Pads `x` (bottom/right, reflection) to a size tiled exactly by `l`/`s`,
/// then cuts it into patches.
pub fn patchify<T: Real>(g: &mut Graph<T>, x: Var, l: usize, s: usize) -> Result<(Var, PatchLayout)> {
    let (_, h, w) = g.value(x).chw()?;
    if l > h || l > w {
        return Err(Error::dim(
            "img2patch",
            "H,W",
            format!("patch size {l} exceeds map {h}x{w}"),
        ));
    }
    let (ph, pw) = PatchGeometry::padding_for(h, w, l, s);
    let padded = g.reflect_pad(x, ph, pw)?;
    let (patches, geometry) = g.img2patch(padded, l, s)?;
    Ok((
        patches,
        PatchLayout {
            geometry,
            source_height: h,
            source_width: w,
        },
    ))
}

/// Inverse of [`patchify`]: overlap-averaged reassembly and crop.
pub fn unpatchify<T: Real>(g: &mut Graph<T>, patches: Var, layout: PatchLayout) -> Result<Var> {
    let full = g.patch2img(patches, layout.geometry)?;
    g.crop(full, layout.source_height, layout.source_width)
}

pub fn img2patch<T: Real>(features: &Tensor<T>, l: usize, s: usize) -> Result<PatchSet<T>> {
    let mut g = Graph::new();
    let x = g.constant(features.clone());
    let (p, layout) = patchify(&mut g, x, l, s)?;
    Ok(PatchSet {
        patches: g.value(p).clone(),
        layout,
    })
}

pub fn patch2img<T: Real>(set: &PatchSet<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let p = g.constant(set.patches.clone());
    let out = unpatchify(&mut g, p, set.layout)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_fn([c, h, w], |i| (i as f32 * 0.37).sin())
    }

    #[test]
    fn count_and_length() {
        let set = img2patch(&ramp(32, 6, 6), 3, 3).unwrap();
        assert_eq!(set.patches.shape(), &[4, 288]);
        let set = img2patch(&ramp(1, 7, 7), 3, 2).unwrap();
        assert_eq!((set.layout.geometry.rows, set.layout.geometry.cols), (3, 3));
    }

    #[test]
    fn whole_map_is_one_patch() {
        let f = ramp(2, 5, 5);
        let set = img2patch(&f, 5, 5).unwrap();
        assert_eq!(set.count(), 1);
        assert_eq!(set.patches.data(), f.data());
    }

    #[test]
    fn round_trip_exact_without_overlap() {
        let f = ramp(3, 8, 10);
        let set = img2patch(&f, 3, 3).unwrap();
        assert_eq!((set.layout.geometry.height, set.layout.geometry.width), (9, 12));
        assert_eq!(patch2img(&set).unwrap(), f);
    }

    #[test]
    fn round_trip_with_overlap() {
        let f = ramp(4, 7, 9);
        let back = patch2img(&img2patch(&f, 3, 2).unwrap()).unwrap();
        assert!(back.max_abs_diff(&f) < 1e-6);
    }

    #[test]
    fn ones_stay_ones_under_overlap() {
        let geometry = PatchGeometry::new(2, 7, 7, 3, 1).unwrap();
        let set = PatchSet {
            patches: Tensor::full([geometry.count(), geometry.patch_len()], 1.0f32),
            layout: PatchLayout {
                geometry,
                source_height: 7,
                source_width: 7,
            },
        };
        assert!(patch2img(&set).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn patch_larger_than_map_rejected() {
        assert_eq!(img2patch(&ramp(1, 2, 8), 3, 1).unwrap_err().kind(), "dimension");
    }
}
