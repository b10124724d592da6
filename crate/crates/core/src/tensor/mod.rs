//! Dense tensors and a reverse-mode tape.
//!
//! [`Tensor`] is plain row-major storage. Differentiable computation goes
//! through a [`Graph`], which records every operation and replays it backwards
//! in [`Graph::backward`]. Everything is generic over [`Real`] so the same
//! model code can run in `f32` for training and in `f64` for gradient checks.

pub mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod params;
mod patch;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::Float;

use crate::error::{Error, Result};

pub use graph::{GradientMap, Graph, ParamId, Var};
pub use params::{Conv, ParamStore};
pub use patch::PatchGeometry;

/// Floating point element type usable in tensors.
pub trait Real: Float + Default + Debug + Display + Send + Sync + Sum + AddAssign + MulAssign + 'static {
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        if shape.contains(&0) {
            return Err(Error::dim(
                "tensor",
                "shape",
                format!("zero-sized dimension in {shape:?}"),
            ));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(
                "tensor",
                "data",
                format!("shape {shape:?} needs {n} elements, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Tensor {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() || shape.contains(&0) {
            return Err(Error::dim("reshape", "shape", format!("{:?} -> {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.f64() - b.f64()).abs())
            .fold(0.0, f64::max)
    }

    /// `(C, H, W)` of a rank-3 tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::dim(
                "chw",
                "rank",
                format!("expected [C,H,W], got {:?}", self.shape),
            )),
        }
    }

    /// Channels `start..start + len` of a `[C,H,W]` tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Self> {
        let (c, h, w) = self.chw()?;
        if len == 0 || start + len > c {
            return Err(Error::dim(
                "slice_channels",
                "channel",
                format!("range {start}..{} outside {c}", start + len),
            ));
        }
        let plane = h * w;
        Ok(Tensor {
            shape: vec![len, h, w],
            data: self.data[start * plane..(start + len) * plane].to_vec(),
        })
    }
}

/// Concatenates `[C_i,H,W]` tensors along the channel axis.
pub fn concat_channels<T: Real>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let (total, h, w) = kernels::concat_shape(inputs.iter().map(|t| t.shape()))?;
    let mut data = Vec::with_capacity(total * h * w);
    for t in inputs {
        data.extend_from_slice(t.data());
    }
    Tensor::new([total, h, w], data)
}

/// Direct 2-D convolution of `[C_in,H,W]` with `[C_out,C_in,kh,kw]`.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let wv = g.constant(weight.clone());
    let b = g.constant(bias.clone());
    let y = g.conv2d(x, wv, b, stride, padding)?;
    Ok(g.value(y).clone())
}

/// Bilinear resampling with half-pixel centers (align-corners off).
pub fn bilinear_resize<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let (c, h, w) = input.chw()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Contract("bilinear_resize: output size must be positive".into()));
    }
    let data = kernels::resize_forward(input.data(), c, h, w, out_h, out_w);
    Tensor::new([c, out_h, out_w], data)
}

pub fn leaky_relu<T: Real>(x: &Tensor<T>, slope: f64) -> Tensor<T> {
    let s = T::of(slope);
    x.map(|v| if v >= T::zero() { v } else { s * v })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::<f32>::new([2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::new([2, 0], vec![]).is_err());
    }

    #[test]
    fn concat_then_slice_recovers_inputs() {
        let a = Tensor::<f32>::zeros([1, 2, 2]);
        let b = Tensor::<f32>::full([1, 2, 2], 1.0);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 2, 2]);
        assert_eq!(&c.data()[..4], &[0.0; 4]);
        assert_eq!(&c.data()[4..], &[1.0; 4]);
        assert_eq!(c.slice_channels(0, 1).unwrap(), a);
        assert_eq!(c.slice_channels(1, 1).unwrap(), b);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::<f32>::zeros([1, 2, 2]);
        let b = Tensor::<f32>::zeros([1, 3, 2]);
        let err = concat_channels(&[&a, &b]).unwrap_err();
        assert_eq!(err.kind(), "dimension");
    }

    #[test]
    fn leaky_relu_definition() {
        let x = Tensor::new([3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        let y = leaky_relu(&x, 0.2);
        assert!((y.data()[0] + 0.2).abs() < 1e-7);
        assert_eq!(&y.data()[1..], &[0.0, 2.0]);
    }

    #[test]
    fn cast_roundtrip() {
        let x = Tensor::new([2], vec![0.25f32, -3.5]).unwrap();
        assert_eq!(x.cast::<f64>().cast::<f32>(), x);
    }
}
