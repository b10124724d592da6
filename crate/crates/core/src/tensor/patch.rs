use super::Real;
use crate::error::{Error, Result};

/// Sliding-window layout of `l x l` patches with stride `s` over a `[C,H,W]` map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub l: usize,
    pub s: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PatchGeometry {
    /// Requires `(H - l)` and `(W - l)` to be multiples of `s`.
    pub fn new(channels: usize, height: usize, width: usize, l: usize, s: usize) -> Result<Self> {
        if l == 0 || s == 0 {
            return Err(Error::Contract("patch size and stride must be positive".into()));
        }
        if l > height || l > width {
            return Err(Error::dim(
                "img2patch",
                "H,W",
                format!("patch size {l} exceeds map {height}x{width}"),
            ));
        }
        if !(height - l).is_multiple_of(s) || !(width - l).is_multiple_of(s) {
            return Err(Error::dim(
                "img2patch",
                "H,W",
                format!("{height}x{width} not tiled exactly by l={l}, s={s}"),
            ));
        }
        Ok(PatchGeometry {
            channels,
            height,
            width,
            l,
            s,
            rows: (height - l) / s + 1,
            cols: (width - l) / s + 1,
        })
    }

    /// Bottom/right padding that makes an `h x w` map tile exactly.
    pub fn padding_for(h: usize, w: usize, l: usize, s: usize) -> (usize, usize) {
        let pad = |n: usize| {
            if n <= l {
                l - n
            } else {
                (s - (n - l) % s) % s
            }
        };
        (pad(h), pad(w))
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.l * self.l
    }

    /// Top-left pixel of patch `q`.
    pub fn origin(&self, q: usize) -> (usize, usize) {
        ((q / self.cols) * self.s, (q % self.cols) * self.s)
    }

    pub(crate) fn extract<T: Real>(&self, x: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.count() * self.patch_len());
        for q in 0..self.count() {
            let (y0, x0) = self.origin(q);
            for c in 0..self.channels {
                for i in 0..self.l {
                    let row = (c * self.height + y0 + i) * self.width + x0;
                    out.extend_from_slice(&x[row..row + self.l]);
                }
            }
        }
        out
    }

    /// Adjoint of [`extract`](Self::extract): sums patch rows into the map.
    pub(crate) fn scatter_add<T: Real>(&self, patches: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.channels * self.height * self.width];
        let d = self.patch_len();
        for q in 0..self.count() {
            let (y0, x0) = self.origin(q);
            let p = &patches[q * d..(q + 1) * d];
            for c in 0..self.channels {
                for i in 0..self.l {
                    let row = (c * self.height + y0 + i) * self.width + x0;
                    let src = &p[(c * self.l + i) * self.l..(c * self.l + i + 1) * self.l];
                    for (o, &v) in out[row..row + self.l].iter_mut().zip(src) {
                        *o += v;
                    }
                }
            }
        }
        out
    }

    /// Number of patches covering each pixel of one channel plane.
    pub(crate) fn coverage(&self) -> Vec<usize> {
        let mut cov = vec![0usize; self.height * self.width];
        for q in 0..self.count() {
            let (y0, x0) = self.origin(q);
            for i in 0..self.l {
                for c in &mut cov[(y0 + i) * self.width + x0..(y0 + i) * self.width + x0 + self.l] {
                    *c += 1;
                }
            }
        }
        cov
    }

    /// Scatter followed by division by coverage; uncovered pixels are zero.
    pub(crate) fn assemble<T: Real>(&self, patches: &[T]) -> Vec<T> {
        let mut out = self.scatter_add(patches);
        let cov = self.coverage();
        let plane = self.height * self.width;
        for (i, v) in out.iter_mut().enumerate() {
            let n = cov[i % plane];
            if n > 1 {
                *v = *v / T::of(n as f64);
            }
        }
        out
    }

    pub(crate) fn assemble_adjoint<T: Real>(&self, dout: &[T]) -> Vec<T> {
        let cov = self.coverage();
        let plane = self.height * self.width;
        let scaled: Vec<T> = dout
            .iter()
            .enumerate()
            .map(|(i, &d)| match cov[i % plane] {
                0 | 1 => d,
                n => d / T::of(n as f64),
            })
            .collect();
        self.extract(&scaled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_formula() {
        let g = PatchGeometry::new(32, 6, 6, 3, 3).unwrap();
        assert_eq!((g.count(), g.patch_len()), (4, 288));
        let g = PatchGeometry::new(1, 7, 7, 3, 2).unwrap();
        assert_eq!((g.rows, g.cols, g.count()), (3, 3, 9));
        assert!(PatchGeometry::new(1, 8, 8, 3, 3).is_err());
        assert_eq!(PatchGeometry::new(1, 2, 8, 3, 1).unwrap_err().kind(), "dimension");
    }

    #[test]
    fn padding_makes_sizes_compatible() {
        for h in 3..40 {
            for (l, s) in [(3, 3), (3, 2), (5, 3), (7, 1), (3, 1)] {
                if h < l {
                    continue;
                }
                let (ph, _) = PatchGeometry::padding_for(h, h, l, s);
                assert!(ph < s.max(1));
                assert!(PatchGeometry::new(1, h + ph, h + ph, l, s).is_ok(), "h={h} l={l} s={s}");
            }
        }
    }

    #[test]
    fn assemble_adjoint_is_transpose() {
        let g = PatchGeometry::new(2, 7, 9, 3, 2).unwrap();
        let p: Vec<f64> = (0..g.count() * g.patch_len())
            .map(|i| ((i * 13) % 7) as f64 - 3.0)
            .collect();
        let d: Vec<f64> = (0..2 * 7 * 9).map(|i| ((i * 5) % 11) as f64 * 0.5).collect();
        let lhs: f64 = g.assemble(&p).iter().zip(&d).map(|(a, b)| a * b).sum();
        let rhs: f64 = p.iter().zip(g.assemble_adjoint(&d)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
