//! Dense and convolution layers with hand-written reverse passes.
//!
//! Activations are stored batch-major and, for images, channel-major within a sample
//! (`n x c x h x w`). Backward functions *accumulate* into parameter gradients.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Role of a parameter tensor, used by the architecture descriptor and model files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    DenseWeight,
    DenseBias,
    ConvWeight,
    ConvBias,
}

impl TensorKind {
    pub fn tag(self) -> u8 {
        match self {
            TensorKind::DenseWeight => 1,
            TensorKind::DenseBias => 2,
            TensorKind::ConvWeight => 3,
            TensorKind::ConvBias => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => TensorKind::DenseWeight,
            2 => TensorKind::DenseBias,
            3 => TensorKind::ConvWeight,
            4 => TensorKind::ConvBias,
            _ => return None,
        })
    }
}

/// `y = x W^T + b` with `W` of shape `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Dense {
            w: Tensor::zeros(&[outputs, inputs]),
            b: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.w.shape[0]
    }

    pub fn forward(&self, x: &[T], n: usize) -> Vec<T> {
        let (i, o) = (self.inputs(), self.outputs());
        debug_assert_eq!(x.len(), n * i);
        let mut y = Vec::with_capacity(n * o);
        for _ in 0..n {
            y.extend_from_slice(&self.b.data);
        }
        T::gemm(n, i, o, T::one(), x, i as isize, 1, &self.w.data, 1, i as isize, T::one(), &mut y, o as isize, 1);
        y
    }

    /// Accumulates `dL/dW`, `dL/db` and, if requested, returns `dL/dx`.
    pub fn backward(
        &self,
        x: &[T],
        gy: &[T],
        n: usize,
        gw: &mut [T],
        gb: &mut [T],
        want_gx: bool,
    ) -> Option<Vec<T>> {
        let (i, o) = (self.inputs(), self.outputs());
        T::gemm(o, n, i, T::one(), gy, 1, o as isize, x, i as isize, 1, T::one(), gw, i as isize, 1);
        for row in gy.chunks_exact(o) {
            for (g, &v) in gb.iter_mut().zip(row) {
                *g += v;
            }
        }
        want_gx.then(|| {
            let mut gx = vec![T::zero(); n * i];
            T::gemm(n, o, i, T::one(), gy, o as isize, 1, &self.w.data, i as isize, 1, T::zero(), &mut gx, i as isize, 1);
            gx
        })
    }
}

/// Square-kernel 2-D convolution with zero padding; weights `[out, in, k, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> Conv<T> {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Self {
        Conv {
            w: Tensor::zeros(&[cout, cin, k, k]),
            b: Tensor::zeros(&[cout]),
            stride,
            pad,
        }
    }

    pub fn cin(&self) -> usize {
        self.w.shape[1]
    }

    pub fn cout(&self) -> usize {
        self.w.shape[0]
    }

    fn k(&self) -> usize {
        self.w.shape[2]
    }

    pub fn out_side(&self, side: usize) -> usize {
        (side + 2 * self.pad - self.k()) / self.stride + 1
    }

    fn im2col(&self, x: &[T], side: usize, out: usize, cols: &mut [T]) {
        let (k, s, pad) = (self.k(), self.stride, self.pad as isize);
        let p = out * out;
        for c in 0..self.cin() {
            let plane = &x[c * side * side..(c + 1) * side * side];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &mut cols[((c * k + ki) * k + kj) * p..][..p];
                    for oy in 0..out {
                        let iy = (oy * s + ki) as isize - pad;
                        let dst = &mut row[oy * out..(oy + 1) * out];
                        if iy < 0 || iy >= side as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * side..(iy as usize + 1) * side];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kj) as isize - pad;
                            *d = if ix < 0 || ix >= side as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], side: usize, out: usize, gx: &mut [T]) {
        let (k, s, pad) = (self.k(), self.stride, self.pad as isize);
        let p = out * out;
        for c in 0..self.cin() {
            let plane = &mut gx[c * side * side..(c + 1) * side * side];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &cols[((c * k + ki) * k + kj) * p..][..p];
                    for oy in 0..out {
                        let iy = (oy * s + ki) as isize - pad;
                        if iy < 0 || iy >= side as isize {
                            continue;
                        }
                        for ox in 0..out {
                            let ix = (ox * s + kj) as isize - pad;
                            if ix >= 0 && ix < side as isize {
                                plane[iy as usize * side + ix as usize] += row[oy * out + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Input of `n` square images of side `side`.
    pub fn forward(&self, x: &[T], n: usize, side: usize) -> Vec<T> {
        let (cin, cout) = (self.cin(), self.cout());
        let out = self.out_side(side);
        let (p, kk) = (out * out, cin * self.k() * self.k());
        debug_assert_eq!(x.len(), n * cin * side * side);
        let mut cols = vec![T::zero(); kk * p];
        let mut y = vec![T::zero(); n * cout * p];
        for s in 0..n {
            self.im2col(&x[s * cin * side * side..(s + 1) * cin * side * side], side, out, &mut cols);
            let ys = &mut y[s * cout * p..(s + 1) * cout * p];
            for (o, chunk) in ys.chunks_exact_mut(p).enumerate() {
                chunk.fill(self.b.data[o]);
            }
            T::gemm(cout, kk, p, T::one(), &self.w.data, kk as isize, 1, &cols, p as isize, 1, T::one(), ys, p as isize, 1);
        }
        y
    }

    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &[T],
        gy: &[T],
        n: usize,
        side: usize,
        gw: &mut [T],
        gb: &mut [T],
        want_gx: bool,
    ) -> Option<Vec<T>> {
        let (cin, cout) = (self.cin(), self.cout());
        let out = self.out_side(side);
        let (p, kk) = (out * out, cin * self.k() * self.k());
        let plane = cin * side * side;
        let mut cols = vec![T::zero(); kk * p];
        let mut gcols = vec![T::zero(); kk * p];
        let mut gx = want_gx.then(|| vec![T::zero(); n * plane]);
        for s in 0..n {
            let gys = &gy[s * cout * p..(s + 1) * cout * p];
            self.im2col(&x[s * plane..(s + 1) * plane], side, out, &mut cols);
            T::gemm(cout, p, kk, T::one(), gys, p as isize, 1, &cols, 1, p as isize, T::one(), gw, kk as isize, 1);
            for (g, chunk) in gb.iter_mut().zip(gys.chunks_exact(p)) {
                *g += chunk.iter().copied().sum::<T>();
            }
            if let Some(gx) = gx.as_mut() {
                T::gemm(kk, cout, p, T::one(), &self.w.data, 1, kk as isize, gys, p as isize, 1, T::zero(), &mut gcols, p as isize, 1);
                self.col2im(&gcols, side, out, &mut gx[s * plane..(s + 1) * plane]);
            }
        }
        gx
    }
}

/// Nearest-neighbour 2x upsampling of `n * c` planes of side `side`.
pub fn upsample2<T: Scalar>(x: &[T], planes: usize, side: usize) -> Vec<T> {
    let big = 2 * side;
    let mut y = vec![T::zero(); planes * big * big];
    for (src, dst) in x.chunks_exact(side * side).zip(y.chunks_exact_mut(big * big)) {
        for yy in 0..big {
            for xx in 0..big {
                dst[yy * big + xx] = src[(yy / 2) * side + xx / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward<T: Scalar>(gy: &[T], planes: usize, side: usize) -> Vec<T> {
    let big = 2 * side;
    let mut gx = vec![T::zero(); planes * side * side];
    for (src, dst) in gy.chunks_exact(big * big).zip(gx.chunks_exact_mut(side * side)) {
        for yy in 0..big {
            for xx in 0..big {
                dst[(yy / 2) * side + xx / 2] += src[yy * big + xx];
            }
        }
    }
    gx
}

pub fn leaky<T: Scalar>(x: &[T], slope: T) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { v * slope }).collect()
}

/// In-place `g *= leaky'(pre)`.
pub fn leaky_backward<T: Scalar>(g: &mut [T], pre: &[T], slope: T) {
    for (g, &p) in g.iter_mut().zip(pre) {
        if p <= T::zero() {
            *g *= slope;
        }
    }
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^v)` without overflow.
pub fn softplus<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// `(tanh(v) + 1) / 2`, the generator's output squash onto `[0, 1]`.
pub fn squash<T: Scalar>(v: T) -> T {
    let half = T::lit(0.5);
    half * (v.tanh() + T::one())
}

/// Derivative of [`squash`] expressed through its output `o`: `2 o (1 - o)`.
pub fn squash_grad<T: Scalar>(o: T) -> T {
    T::lit(2.0) * o * (T::one() - o)
}
