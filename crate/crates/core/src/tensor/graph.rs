use std::collections::{BTreeMap, HashMap};

use super::kernels::{self, ConvGeom};
use super::{PatchGeometry, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Handle to a trainable parameter owned by a parameter store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Gradients keyed by parameter; uses at several tape sites are summed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientMap<T = f32> {
    grads: BTreeMap<ParamId, Tensor<T>>,
}

impl<T: Real> GradientMap<T> {
    pub fn new() -> Self {
        GradientMap { grads: BTreeMap::new() }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(&id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    /// Adds `grad` into the entry for `id`.
    pub fn accumulate(&mut self, id: ParamId, grad: Tensor<T>) {
        match self.grads.get_mut(&id) {
            Some(acc) => {
                for (a, g) in acc.data_mut().iter_mut().zip(grad.data()) {
                    *a += *g;
                }
            }
            None => {
                self.grads.insert(id, grad);
            }
        }
    }

    /// Sums another map into this one.
    pub fn merge(&mut self, other: GradientMap<T>) {
        for (id, g) in other.grads {
            self.accumulate(id, g);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        let f = T::of(factor);
        for g in self.grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= f);
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom },
    LeakyRelu { x: Var, slope: f64 },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Sigmoid(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    SliceChannels { x: Var, start: usize },
    Resize(Var),
    Reshape(Var),
    ChannelMean(Var),
    ScaleChannels { x: Var, gate: Var },
    ReflectPad(Var),
    Crop(Var),
    Img2Patch { x: Var, geom: PatchGeometry },
    Patch2Img { x: Var, geom: PatchGeometry },
    GatherRows { x: Var, idx: Vec<usize> },
    RowMean(Var),
    GroupSoftmax { x: Var, group: usize },
    WeightedGroupSum { w: Var, rows: Var, group: usize },
    Clamp { x: Var, lo: f64, hi: f64 },
    Ssim(Var, Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Reverse-mode tape. One graph records one forward pass and is consumed
/// by [`Graph::backward`].
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_or_scalar(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if a == b || nb == 1 {
        Ok(a.to_vec())
    } else if na == 1 {
        Ok(b.to_vec())
    } else {
        Err(Error::dim(op, "shape", format!("{a:?} vs {b:?}")))
    }
}

#[inline]
fn bcast<T: Copy>(v: &[T], i: usize) -> T {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

/// Reduces a gradient back onto an operand that may have been broadcast.
fn unbroadcast<T: Real>(grad: Vec<T>, operand_len: usize) -> Vec<T> {
    if operand_len == 1 && grad.len() != 1 {
        vec![grad.iter().copied().sum()]
    } else {
        grad
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a value that takes no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a trainable leaf. Repeated calls with the same id return the
    /// same handle so gradients from every use site are summed.
    pub fn param(&mut self, id: ParamId, value: &Tensor<T>) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(value.clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        self.params.insert(id, v);
        v
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(w), self.shape(b), stride, padding)?;
        let batched = self.shape(x).len() == 4;
        let out = kernels::conv_forward(self.value(x).data(), self.value(w).data(), self.value(b).data(), &geom);
        let value = Tensor::new(geom.out_shape(batched), out)?;
        let rg = self.rg(&[x, w, b]);
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, rg))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = super::leaky_relu(self.value(x), slope);
        let rg = self.rg(&[x]);
        self.push(value, Op::LeakyRelu { x, slope }, rg)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<(Tensor<T>, bool)> {
        let shape = same_or_scalar(name, self.shape(a), self.shape(b))?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let n: usize = shape.iter().product();
        let data = (0..n).map(|i| f(bcast(da, i), bcast(db, i))).collect();
        Ok((Tensor::new(shape, data)?, self.rg(&[a, b])))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, rg) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, rg) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, rg) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn scalar_mul(&mut self, x: Var, s: f64) -> Var {
        let k = T::of(s);
        let v = self.value(x).map(|e| e * k);
        let rg = self.rg(&[x]);
        self.push(v, Op::ScalarMul(x, s), rg)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let k = T::of(s);
        let v = self.value(x).map(|e| e + k);
        let rg = self.rg(&[x]);
        self.push(v, Op::AddScalar(x), rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| e.exp());
        let rg = self.rg(&[x]);
        self.push(v, Op::Exp(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        let rg = self.rg(&[x]);
        self.push(v, Op::Sigmoid(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().copied().sum::<T>() / T::of(t.numel() as f64);
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor<T>> = inputs.iter().map(|&v| self.value(v)).collect();
        let value = super::concat_channels(&tensors)?;
        let rg = self.rg(inputs);
        Ok(self.push(value, Op::Concat(inputs.to_vec()), rg))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x).slice_channels(start, len)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::SliceChannels { x, start }, rg))
    }

    pub fn bilinear_resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let value = super::bilinear_resize(self.value(x), out_h, out_w)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Resize(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Global average pool of `[C,H,W]` to `[C,1,1]`.
    pub fn channel_mean(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        let n = T::of((h * w) as f64);
        let data = self
            .value(x)
            .data()
            .chunks(h * w)
            .map(|p| p.iter().copied().sum::<T>() / n)
            .collect();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new([c, 1, 1], data)?, Op::ChannelMean(x), rg))
    }

    /// Multiplies every channel of `[C,H,W]` by the matching entry of a `[C,1,1]` gate.
    pub fn scale_channels(&mut self, x: Var, gate: Var) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if self.shape(gate) != [c, 1, 1] {
            return Err(Error::dim(
                "scale_channels",
                "gate",
                format!("expected [{c},1,1], got {:?}", self.shape(gate)),
            ));
        }
        let gv = self.value(gate).data();
        let data = self
            .value(x)
            .data()
            .chunks(h * w)
            .zip(gv)
            .flat_map(|(p, &g)| p.iter().map(move |&v| v * g))
            .collect();
        let rg = self.rg(&[x, gate]);
        Ok(self.push(Tensor::new([c, h, w], data)?, Op::ScaleChannels { x, gate }, rg))
    }

    /// Extends `[C,H,W]` at the bottom and right by mirror reflection
    /// (edge sample not repeated).
    pub fn reflect_pad(&mut self, x: Var, pad_bottom: usize, pad_right: usize) -> Result<Var> {
        let (c, h, w) = self.value(x).chw()?;
        if pad_bottom >= h || pad_right >= w {
            return Err(Error::dim(
                "reflect_pad",
                "H,W",
                format!("padding ({pad_bottom},{pad_right}) too large for {h}x{w}"),
            ));
        }
        if pad_bottom == 0 && pad_right == 0 {
            return Ok(x);
        }
        let (ph, pw) = (h + pad_bottom, w + pad_right);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(c * ph * pw);
        for ch in 0..c {
            for y in 0..ph {
                let sy = reflect(y, h);
                for xx in 0..pw {
                    data.push(src[(ch * h + sy) * w + reflect(xx, w)]);
                }
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new([c, ph, pw], data)?, Op::ReflectPad(x), rg))
    }

    /// Keeps the top-left `h x w` window of `[C,H,W]`.
    pub fn crop(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let (c, sh, sw) = self.value(x).chw()?;
        if h > sh || w > sw || h == 0 || w == 0 {
            return Err(Error::dim("crop", "H,W", format!("{h}x{w} from {sh}x{sw}")));
        }
        if (h, w) == (sh, sw) {
            return Ok(x);
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            for y in 0..h {
                let row = (ch * sh + y) * sw;
                data.extend_from_slice(&src[row..row + w]);
            }
        }
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new([c, h, w], data)?, Op::Crop(x), rg))
    }

    /// Sliding `l x l` windows of `[C,H,W]` as rows of a `[Q, C*l*l]` matrix.
    pub fn img2patch(&mut self, x: Var, l: usize, s: usize) -> Result<(Var, PatchGeometry)> {
        let (c, h, w) = self.value(x).chw()?;
        let geom = PatchGeometry::new(c, h, w, l, s)?;
        let value = Tensor::new([geom.count(), geom.patch_len()], geom.extract(self.value(x).data()))?;
        let rg = self.rg(&[x]);
        Ok((self.push(value, Op::Img2Patch { x, geom }, rg), geom))
    }

    /// Scatters `[Q, C*l*l]` rows back into `[C,H,W]`, averaging overlaps.
    pub fn patch2img(&mut self, x: Var, geom: PatchGeometry) -> Result<Var> {
        if self.shape(x) != [geom.count(), geom.patch_len()] {
            return Err(Error::dim(
                "patch2img",
                "geometry",
                format!(
                    "patches {:?} do not match {} x {}",
                    self.shape(x),
                    geom.count(),
                    geom.patch_len()
                ),
            ));
        }
        let value = Tensor::new(
            [geom.channels, geom.height, geom.width],
            geom.assemble(self.value(x).data()),
        )?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Patch2Img { x, geom }, rg))
    }

    /// Selects rows of a rank-2 tensor.
    pub fn gather_rows(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let [rows, d] = self.shape(x)[..] else {
            return Err(Error::dim(
                "gather_rows",
                "rank",
                format!("expected rank 2, got {:?}", self.shape(x)),
            ));
        };
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::dim("gather_rows", "row", format!("index {bad} out of {rows}")));
        }
        if idx.is_empty() {
            return Err(Error::Contract("gather_rows: empty index list".into()));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in &idx {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let value = Tensor::new([idx.len(), d], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::GatherRows { x, idx }, rg))
    }

    /// Mean along the last axis of a rank-2 tensor: `[R, D] -> [R]`.
    pub fn row_mean(&mut self, x: Var) -> Result<Var> {
        let [r, d] = self.shape(x)[..] else {
            return Err(Error::dim(
                "row_mean",
                "rank",
                format!("expected rank 2, got {:?}", self.shape(x)),
            ));
        };
        let n = T::of(d as f64);
        let data = self
            .value(x)
            .data()
            .chunks(d)
            .map(|row| row.iter().copied().sum::<T>() / n)
            .collect();
        let rg = self.rg(&[x]);
        Ok(self.push(Tensor::new([r], data)?, Op::RowMean(x), rg))
    }

    /// Normalized exponentials within consecutive groups of `group` entries:
    /// `exp(x_i) / sum_j exp(x_j)`, evaluated with the group max subtracted.
    pub fn group_softmax(&mut self, x: Var, group: usize) -> Result<Var> {
        let n = self.value(x).numel();
        if group == 0 || !n.is_multiple_of(group) {
            return Err(Error::dim(
                "group_softmax",
                "length",
                format!("{n} not divisible by {group}"),
            ));
        }
        let mut data = Vec::with_capacity(n);
        for chunk in self.value(x).data().chunks(group) {
            let m = chunk.iter().copied().fold(T::neg_infinity(), T::max);
            let e: Vec<T> = chunk.iter().map(|&v| (v - m).exp()).collect();
            let s: T = e.iter().copied().sum();
            data.extend(e.into_iter().map(|v| v / s));
        }
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::GroupSoftmax { x, group }, rg))
    }

    /// `out[q] = sum_r w[q*group + r] * rows[q*group + r]` for `rows: [Q*group, D]`.
    pub fn weighted_group_sum(&mut self, w: Var, rows: Var, group: usize) -> Result<Var> {
        let [n, d] = self.shape(rows)[..] else {
            return Err(Error::dim(
                "weighted_group_sum",
                "rank",
                format!("{:?}", self.shape(rows)),
            ));
        };
        if self.value(w).numel() != n || group == 0 || n % group != 0 {
            return Err(Error::dim(
                "weighted_group_sum",
                "rows",
                format!("{} weights for {n} rows in groups of {group}", self.value(w).numel()),
            ));
        }
        let q = n / group;
        let (wv, rv) = (self.value(w).data(), self.value(rows).data());
        let mut data = vec![T::zero(); q * d];
        for qi in 0..q {
            let out = &mut data[qi * d..(qi + 1) * d];
            for r in 0..group {
                let i = qi * group + r;
                let a = wv[i];
                for (o, &v) in out.iter_mut().zip(&rv[i * d..(i + 1) * d]) {
                    *o += a * v;
                }
            }
        }
        let rg = self.rg(&[w, rows]);
        Ok(self.push(Tensor::new([q, d], data)?, Op::WeightedGroupSum { w, rows, group }, rg))
    }

    /// Clamps elementwise; gradient passes only strictly inside the bounds.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let (l, h) = (T::of(lo), T::of(hi));
        let v = self.value(x).map(|e| e.max(l).min(h));
        let rg = self.rg(&[x]);
        self.push(v, Op::Clamp { x, lo, hi }, rg)
    }

    /// Mean SSIM of two `[C,H,W]` images (11x11 Gaussian window, sigma 1.5,
    /// dynamic range 1), averaged over channels.
    pub fn ssim(&mut self, a: Var, b: Var) -> Result<Var> {
        let (c, h, w) = kernels::ssim_check(self.shape(a), self.shape(b))?;
        let s = kernels::ssim_forward(self.value(a).data(), self.value(b).data(), c, h, w);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(T::of(s)), Op::Ssim(a, b), rg))
    }

    /// Runs reverse-mode differentiation from a scalar loss.
    pub fn backward(self, loss: Var) -> Result<GradientMap<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        let mut out = GradientMap::new();

        for idx in (0..=loss.0).rev() {
            let Some(dout) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Some(pid) = node.param {
                out.accumulate(pid, Tensor::new(node.value.shape().to_vec(), dout)?);
                continue;
            }
            self.propagate(node, &dout, &mut grads);
        }
        Ok(out)
    }

    fn propagate(&self, node: &Node<T>, dout: &[T], grads: &mut [Option<Vec<T>>]) {
        let mut send = |v: Var, g: Vec<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                slot => *slot = Some(g),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        let y = node.value.data();

        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let want_dx = self.nodes[x.0].requires_grad;
                let (dx, dw, db) = kernels::conv_backward(val(*x), val(*w), dout, geom, want_dx);
                if let Some(dx) = dx {
                    send(*x, dx);
                }
                send(*w, dw);
                send(*b, db);
            }
            Op::LeakyRelu { x, slope } => {
                let s = T::of(*slope);
                let g = val(*x)
                    .iter()
                    .zip(dout)
                    .map(|(&xv, &d)| if xv >= T::zero() { d } else { s * d })
                    .collect();
                send(*x, g);
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -T::one()
                } else {
                    T::one()
                };
                send(*a, unbroadcast(dout.to_vec(), val(*a).len()));
                let gb = dout.iter().map(|&d| sign * d).collect();
                send(*b, unbroadcast(gb, val(*b).len()));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let ga = dout.iter().enumerate().map(|(i, &d)| d * bcast(bv, i)).collect();
                let gb = dout.iter().enumerate().map(|(i, &d)| d * bcast(av, i)).collect();
                send(*a, unbroadcast(ga, av.len()));
                send(*b, unbroadcast(gb, bv.len()));
            }
            Op::ScalarMul(x, s) => {
                let k = T::of(*s);
                send(*x, dout.iter().map(|&d| d * k).collect());
            }
            Op::AddScalar(x) | Op::Reshape(x) => send(*x, dout.to_vec()),
            Op::Exp(x) => send(*x, dout.iter().zip(y).map(|(&d, &e)| d * e).collect()),
            Op::Sigmoid(x) => send(*x, dout.iter().zip(y).map(|(&d, &s)| d * s * (T::one() - s)).collect()),
            Op::Sum(x) => send(*x, vec![dout[0]; val(*x).len()]),
            Op::Mean(x) => {
                let n = val(*x).len();
                send(*x, vec![dout[0] / T::of(n as f64); n]);
            }
            Op::Concat(inputs) => {
                let mut off = 0;
                for v in inputs {
                    let n = val(*v).len();
                    send(*v, dout[off..off + n].to_vec());
                    off += n;
                }
            }
            Op::SliceChannels { x, start } => {
                let (_, h, w) = self.nodes[x.0].value.chw().expect("rank 3");
                let mut g = vec![T::zero(); val(*x).len()];
                let off = start * h * w;
                g[off..off + dout.len()].copy_from_slice(dout);
                send(*x, g);
            }
            Op::Resize(x) => {
                let (c, h, w) = self.nodes[x.0].value.chw().expect("rank 3");
                let (_, oh, ow) = node.value.chw().expect("rank 3");
                send(*x, kernels::resize_backward(dout, c, h, w, oh, ow));
            }
            Op::ChannelMean(x) => {
                let (_, h, w) = self.nodes[x.0].value.chw().expect("rank 3");
                let n = T::of((h * w) as f64);
                let g = dout.iter().flat_map(|&d| std::iter::repeat_n(d / n, h * w)).collect();
                send(*x, g);
            }
            Op::ScaleChannels { x, gate } => {
                let (_, h, w) = self.nodes[x.0].value.chw().expect("rank 3");
                let (xv, gv) = (val(*x), val(*gate));
                let gx = dout
                    .chunks(h * w)
                    .zip(gv)
                    .flat_map(|(d, &g)| d.iter().map(move |&v| v * g))
                    .collect();
                let gg = dout
                    .chunks(h * w)
                    .zip(xv.chunks(h * w))
                    .map(|(d, xp)| d.iter().zip(xp).map(|(&a, &b)| a * b).sum())
                    .collect();
                send(*x, gx);
                send(*gate, gg);
            }
            Op::ReflectPad(x) => {
                let (c, h, w) = self.nodes[x.0].value.chw().expect("rank 3");
                let (_, ph, pw) = node.value.chw().expect("rank 3");
                let mut g = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    for yy in 0..ph {
                        let sy = reflect(yy, h);
                        for xx in 0..pw {
                            g[(ch * h + sy) * w + reflect(xx, w)] += dout[(ch * ph + yy) * pw + xx];
                        }
                    }
                }
                send(*x, g);
            }
            Op::Crop(x) => {
                let (c, sh, sw) = self.nodes[x.0].value.chw().expect("rank 3");
                let (_, h, w) = node.value.chw().expect("rank 3");
                let mut g = vec![T::zero(); c * sh * sw];
                for ch in 0..c {
                    for yy in 0..h {
                        let dst = (ch * sh + yy) * sw;
                        g[dst..dst + w].copy_from_slice(&dout[(ch * h + yy) * w..(ch * h + yy + 1) * w]);
                    }
                }
                send(*x, g);
            }
            Op::Img2Patch { x, geom } => send(*x, geom.scatter_add(dout)),
            Op::Patch2Img { x, geom } => send(*x, geom.assemble_adjoint(dout)),
            Op::GatherRows { x, idx } => {
                let d = self.nodes[x.0].value.shape()[1];
                let mut g = vec![T::zero(); val(*x).len()];
                for (r, &i) in idx.iter().enumerate() {
                    for (a, &b) in g[i * d..(i + 1) * d].iter_mut().zip(&dout[r * d..(r + 1) * d]) {
                        *a += b;
                    }
                }
                send(*x, g);
            }
            Op::RowMean(x) => {
                let d = self.nodes[x.0].value.shape()[1];
                let n = T::of(d as f64);
                send(*x, dout.iter().flat_map(|&g| std::iter::repeat_n(g / n, d)).collect());
            }
            Op::GroupSoftmax { x, group } => {
                let mut g = Vec::with_capacity(y.len());
                for (p, d) in y.chunks(*group).zip(dout.chunks(*group)) {
                    let dotp: T = p.iter().zip(d).map(|(&a, &b)| a * b).sum();
                    g.extend(p.iter().zip(d).map(|(&pi, &di)| pi * (di - dotp)));
                }
                send(*x, g);
            }
            Op::WeightedGroupSum { w, rows, group } => {
                let d = self.nodes[rows.0].value.shape()[1];
                let (wv, rv) = (val(*w), val(*rows));
                let mut gw = vec![T::zero(); wv.len()];
                let mut gr = vec![T::zero(); rv.len()];
                for (i, gwi) in gw.iter_mut().enumerate() {
                    let q = i / group;
                    let dq = &dout[q * d..(q + 1) * d];
                    let row = &rv[i * d..(i + 1) * d];
                    *gwi = dq.iter().zip(row).map(|(&a, &b)| a * b).sum();
                    for (o, &dv) in gr[i * d..(i + 1) * d].iter_mut().zip(dq) {
                        *o = wv[i] * dv;
                    }
                }
                send(*w, gw);
                send(*rows, gr);
            }
            Op::Clamp { x, lo, hi } => {
                let (l, h) = (T::of(*lo), T::of(*hi));
                let g = val(*x)
                    .iter()
                    .zip(dout)
                    .map(|(&v, &d)| if v > l && v < h { d } else { T::zero() })
                    .collect();
                send(*x, g);
            }
            Op::Ssim(a, b) => {
                let (c, h, w) = self.nodes[a.0].value.chw().expect("rank 3");
                let (ga, gb) = kernels::ssim_backward(val(*a), val(*b), c, h, w, dout[0].f64());
                send(*a, ga);
                send(*b, gb);
            }
        }
    }
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn reflect(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * n - 2 - i
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn elementwise_values() {
        let mut g = Graph::<f64>::new();
        let z = g.constant(Tensor::scalar(0.0));
        let e = g.exp(z);
        let s = g.sigmoid(z);
        assert_eq!(g.value(e).item(), 1.0);
        assert_eq!(g.value(s).item(), 0.5);
        let ones = g.constant(Tensor::full([2, 2], 1.0));
        let total = g.sum(ones);
        assert_eq!(g.value(total).item(), 4.0);
    }

    #[test]
    fn broadcast_limited_to_scalar() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::zeros([2, 3]));
        let b = g.constant(Tensor::zeros([3, 2]));
        let s = g.constant(Tensor::scalar(2.0));
        assert!(g.add(a, b).is_err());
        let y = g.mul(a, s).unwrap();
        assert_eq!(g.shape(y), &[2, 3]);
    }

    #[test]
    fn linear_gradient_is_input() {
        let x = t(&[3], &[1.0, -2.0, 0.5]);
        let w = t(&[3], &[0.3, 0.1, 0.7]);
        let mut g = Graph::new();
        let wv = g.param(ParamId(0), &w);
        let xv = g.constant(x.clone());
        let p = g.mul(wv, xv).unwrap();
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap(), &x);
    }

    #[test]
    fn unused_param_has_no_gradient() {
        let mut g = Graph::<f64>::new();
        let p = g.param(ParamId(0), &Tensor::scalar(1.0));
        let q = g.param(ParamId(1), &Tensor::scalar(2.0));
        let _ = p;
        let loss = g.scalar_mul(q, 3.0);
        let grads = g.backward(loss).unwrap();
        let absent_or_zero = grads.get(ParamId(0)).is_none_or(|t| t.data().iter().all(|&v| v == 0.0));
        assert!(absent_or_zero);
        assert_eq!(grads.get(ParamId(1)).unwrap().item(), 3.0);
    }

    #[test]
    fn reused_param_accumulates() {
        let mut g = Graph::<f64>::new();
        let w = Tensor::scalar(2.0);
        let a = g.param(ParamId(0), &w);
        let b = g.param(ParamId(0), &w);
        assert_eq!(a, b);
        let y = g.mul(a, b).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(ParamId(0)).unwrap().item(), 4.0);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut g = Graph::<f64>::new();
        let x = g.param(ParamId(0), &Tensor::zeros([2]));
        assert_eq!(g.backward(x).unwrap_err().kind(), "contract");
    }

    #[test]
    fn leaky_relu_piecewise_gradient() {
        for (x, expect) in [(-3.0, 0.2), (3.0, 1.0)] {
            let mut g = Graph::<f64>::new();
            let v = g.param(ParamId(0), &Tensor::scalar(x));
            let y = g.leaky_relu(v, 0.2);
            let grads = g.backward(y).unwrap();
            assert!((grads.get(ParamId(0)).unwrap().item() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn group_softmax_rows_sum_to_one() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[6], &[1.0, 2.0, 3.0, -50.0, 0.0, 700.0]));
        let p = g.group_softmax(x, 3).unwrap();
        for chunk in g.value(p).data().chunks(3) {
            assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(chunk.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn reflect_pad_and_crop() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let p = g.reflect_pad(x, 1, 2).unwrap();
        assert_eq!(g.shape(p), &[1, 3, 5]);
        assert_eq!(
            g.value(p).data(),
            &[1.0, 2.0, 3.0, 2.0, 1.0, 4.0, 5.0, 6.0, 5.0, 4.0, 1.0, 2.0, 3.0, 2.0, 1.0]
        );
        let c = g.crop(p, 2, 3).unwrap();
        assert_eq!(g.value(c), g.value(x));
    }
}
