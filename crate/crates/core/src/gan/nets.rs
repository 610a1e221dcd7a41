//! Generator and discriminator networks with cached forward traces.

use super::layers::{
    leaky, leaky_backward, squash, squash_grad, upsample2, upsample2_backward, Conv, Dense, Tensor,
    TensorKind,
};
use super::{GanConfig, COND_DIM};
use crate::scalar::Scalar;

/// Per-tensor gradients, in the order of the owning network's `tensors()`.
pub type Grads<T> = Vec<Vec<T>>;

pub(crate) fn zero_grads<T: Scalar>(tensors: &[&Tensor<T>]) -> Grads<T> {
    tensors.iter().map(|t| vec![T::zero(); t.len()]).collect()
}

/// `z ++ embed(k)` generator with three upsampling stages.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub embed: Dense<T>,
    pub fc: Dense<T>,
    pub stages: Vec<Conv<T>>,
    pub out: Conv<T>,
    nz: usize,
    base: usize,
    side0: usize,
    slope: T,
}

pub struct GenTrace<T> {
    n: usize,
    cond: Vec<T>,
    embed_pre: Vec<T>,
    h0: Vec<T>,
    fc_pre: Vec<T>,
    /// Upsampled input of each stage.
    stage_in: Vec<Vec<T>>,
    stage_pre: Vec<Vec<T>>,
    last: Vec<T>,
    /// Output images in `[0, 1]`.
    pub images: Vec<T>,
}

/// Output channel counts of the three generator stages.
fn stage_channels(base: usize) -> [usize; 3] {
    [base / 2, base / 4, base / 4]
}

impl<T: Scalar> Generator<T> {
    pub fn new(cfg: &GanConfig) -> Self {
        let side0 = cfg.side / 8;
        let ch = stage_channels(cfg.g_base);
        let mut cin = cfg.g_base;
        let stages = ch
            .iter()
            .map(|&c| {
                let conv = Conv::new(cin, c, 3, 1, 1);
                cin = c;
                conv
            })
            .collect();
        Generator {
            embed: Dense::new(COND_DIM, cfg.ne),
            fc: Dense::new(cfg.nz + cfg.ne, cfg.g_base * side0 * side0),
            stages,
            out: Conv::new(cin, cfg.channels, 3, 1, 1),
            nz: cfg.nz,
            base: cfg.g_base,
            side0,
            slope: T::lit(cfg.slope),
        }
    }

    pub fn names() -> Vec<&'static str> {
        vec![
            "g.embed.w", "g.embed.b", "g.fc.w", "g.fc.b", "g.up1.w", "g.up1.b", "g.up2.w",
            "g.up2.b", "g.up3.w", "g.up3.b", "g.out.w", "g.out.b",
        ]
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.embed.w, &self.embed.b, &self.fc.w, &self.fc.b];
        for s in &self.stages {
            v.push(&s.w);
            v.push(&s.b);
        }
        v.push(&self.out.w);
        v.push(&self.out.b);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.embed.w, &mut self.embed.b, &mut self.fc.w, &mut self.fc.b];
        for s in &mut self.stages {
            v.push(&mut s.w);
            v.push(&mut s.b);
        }
        v.push(&mut self.out.w);
        v.push(&mut self.out.b);
        v
    }

    pub fn kinds() -> Vec<TensorKind> {
        use TensorKind::*;
        let mut v = vec![DenseWeight, DenseBias, DenseWeight, DenseBias];
        v.extend([ConvWeight, ConvBias].repeat(4));
        v
    }

    /// `z` is `n x nz`, `cond` the encoded conditioning rows (`n x COND_DIM`).
    pub fn forward(&self, z: &[T], cond: &[T], n: usize) -> GenTrace<T> {
        let ne = self.embed.outputs();
        let embed_pre = self.embed.forward(cond, n);
        let e = leaky(&embed_pre, self.slope);
        let mut h0 = Vec::with_capacity(n * (self.nz + ne));
        for i in 0..n {
            h0.extend_from_slice(&z[i * self.nz..(i + 1) * self.nz]);
            h0.extend_from_slice(&e[i * ne..(i + 1) * ne]);
        }
        let fc_pre = self.fc.forward(&h0, n);
        let mut act: Vec<T> = fc_pre.iter().map(|&v| v.max(T::zero())).collect();
        let (mut side, mut ch) = (self.side0, self.base);
        let mut stage_in = Vec::with_capacity(3);
        let mut stage_pre = Vec::with_capacity(3);
        for conv in &self.stages {
            let up = upsample2(&act, n * ch, side);
            side *= 2;
            let pre = conv.forward(&up, n, side);
            act = pre.iter().map(|&v| v.max(T::zero())).collect();
            ch = conv.cout();
            stage_in.push(up);
            stage_pre.push(pre);
        }
        let images = self.out.forward(&act, n, side).into_iter().map(squash).collect();
        GenTrace {
            n,
            cond: cond.to_vec(),
            embed_pre,
            h0,
            fc_pre,
            stage_in,
            stage_pre,
            last: act,
            images,
        }
    }

    /// Parameter gradients given `dL/dimages`.
    pub fn backward(&self, tr: &GenTrace<T>, g_images: &[T]) -> Grads<T> {
        let n = tr.n;
        let mut grads = zero_grads(&self.tensors());
        let side = self.side0 << 3;
        let mut g: Vec<T> = g_images
            .iter()
            .zip(&tr.images)
            .map(|(&g, &o)| g * squash_grad(o))
            .collect();
        let (gw, gb) = pair(&mut grads, 10);
        let mut g_act = self.out.backward(&tr.last, &g, n, side, gw, gb, true).expect("input grad");
        let mut s = side;
        for (i, conv) in self.stages.iter().enumerate().rev() {
            for (gv, &p) in g_act.iter_mut().zip(&tr.stage_pre[i]) {
                if p <= T::zero() {
                    *gv = T::zero();
                }
            }
            let (gw, gb) = pair(&mut grads, 4 + 2 * i);
            let g_up = conv.backward(&tr.stage_in[i], &g_act, n, s, gw, gb, true).expect("input grad");
            s /= 2;
            g_act = upsample2_backward(&g_up, n * conv.cin(), s);
        }
        for (gv, &p) in g_act.iter_mut().zip(&tr.fc_pre) {
            if p <= T::zero() {
                *gv = T::zero();
            }
        }
        let (gw, gb) = pair(&mut grads, 2);
        let g_h0 = self.fc.backward(&tr.h0, &g_act, n, gw, gb, true).expect("input grad");
        let ne = self.embed.outputs();
        let width = self.nz + ne;
        g = (0..n)
            .flat_map(|i| g_h0[i * width + self.nz..(i + 1) * width].iter().copied())
            .collect();
        leaky_backward(&mut g, &tr.embed_pre, self.slope);
        let (gw, gb) = pair(&mut grads, 0);
        self.embed.backward(&tr.cond, &g, n, gw, gb, false);
        grads
    }
}

/// Mutable views of the weight and bias gradients starting at `i`.
fn pair<T>(grads: &mut [Vec<T>], i: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = grads[i..].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

/// Strided convolution stack with the conditioning projection joined at the
/// coarsest resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    pub convs: Vec<Conv<T>>,
    pub proj: Dense<T>,
    pub fuse: Conv<T>,
    pub head: Dense<T>,
    side: usize,
    slope: T,
}

pub struct DiscTrace<T> {
    n: usize,
    /// Centred input `2x - 1`.
    input: Vec<T>,
    pre: Vec<Vec<T>>,
    acts: Vec<Vec<T>>,
    cond: Vec<T>,
    cat: Vec<T>,
    fuse_pre: Vec<T>,
    fuse_act: Vec<T>,
    pub logits: Vec<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(cfg: &GanConfig) -> Self {
        let d = cfg.d_base;
        let chans = [d, 2 * d, 4 * d];
        let mut cin = cfg.channels;
        let convs = chans
            .iter()
            .map(|&c| {
                let conv = Conv::new(cin, c, 4, 2, 1);
                cin = c;
                conv
            })
            .collect();
        let r = cfg.side / 8;
        Discriminator {
            convs,
            proj: Dense::new(COND_DIM, cfg.nd),
            fuse: Conv::new(4 * d + cfg.nd, 4 * d, 1, 1, 0),
            head: Dense::new(4 * d * r * r, 1),
            side: cfg.side,
            slope: T::lit(cfg.slope),
        }
    }

    pub fn names() -> Vec<&'static str> {
        vec![
            "d.down1.w", "d.down1.b", "d.down2.w", "d.down2.b", "d.down3.w", "d.down3.b",
            "d.proj.w", "d.proj.b", "d.fuse.w", "d.fuse.b", "d.head.w", "d.head.b",
        ]
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = Vec::new();
        for c in &self.convs {
            v.push(&c.w);
            v.push(&c.b);
        }
        v.extend([&self.proj.w, &self.proj.b, &self.fuse.w, &self.fuse.b, &self.head.w, &self.head.b]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for c in &mut self.convs {
            v.push(&mut c.w);
            v.push(&mut c.b);
        }
        v.extend([
            &mut self.proj.w,
            &mut self.proj.b,
            &mut self.fuse.w,
            &mut self.fuse.b,
            &mut self.head.w,
            &mut self.head.b,
        ]);
        v
    }

    pub fn kinds() -> Vec<TensorKind> {
        use TensorKind::*;
        let mut v = [ConvWeight, ConvBias].repeat(3);
        v.extend([DenseWeight, DenseBias, ConvWeight, ConvBias, DenseWeight, DenseBias]);
        v
    }

    /// `x` holds `n` images in `[0, 1]`; returns the pre-sigmoid scores in the trace.
    pub fn forward(&self, x: &[T], cond: &[T], n: usize) -> DiscTrace<T> {
        let two = T::lit(2.0);
        let input: Vec<T> = x.iter().map(|&v| two * v - T::one()).collect();
        let mut side = self.side;
        let mut pre = Vec::with_capacity(3);
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(3);
        for conv in &self.convs {
            let src = acts.last().unwrap_or(&input);
            let p = conv.forward(src, n, side);
            side = conv.out_side(side);
            acts.push(leaky(&p, self.slope));
            pre.push(p);
        }
        let r2 = side * side;
        let c3 = self.convs[2].cout();
        let nd = self.proj.outputs();
        let proj = self.proj.forward(cond, n);
        let mut cat = Vec::with_capacity(n * (c3 + nd) * r2);
        let last = &acts[2];
        for i in 0..n {
            cat.extend_from_slice(&last[i * c3 * r2..(i + 1) * c3 * r2]);
            for &v in &proj[i * nd..(i + 1) * nd] {
                cat.extend(std::iter::repeat_n(v, r2));
            }
        }
        let fuse_pre = self.fuse.forward(&cat, n, side);
        let fuse_act = leaky(&fuse_pre, self.slope);
        let logits = self.head.forward(&fuse_act, n);
        DiscTrace {
            n,
            input,
            pre,
            acts,
            cond: cond.to_vec(),
            cat,
            fuse_pre,
            fuse_act,
            logits,
        }
    }

    /// Backpropagates `dL/dlogits`. Parameter gradients are accumulated into `grads`
    /// when given; `dL/dx` is returned when `want_input`.
    pub fn backward(
        &self,
        tr: &DiscTrace<T>,
        g_logits: &[T],
        grads: Option<&mut Grads<T>>,
        want_input: bool,
    ) -> Option<Vec<T>> {
        let n = tr.n;
        let mut scratch = zero_grads(&self.tensors());
        let grads: &mut Grads<T> = match grads {
            Some(g) => g,
            None => &mut scratch,
        };
        let side = self.side / 8;
        let r2 = side * side;
        let (gw, gb) = pair(grads, 10);
        let mut g = self.head.backward(&tr.fuse_act, g_logits, n, gw, gb, true).expect("input grad");
        leaky_backward(&mut g, &tr.fuse_pre, self.slope);
        let (gw, gb) = pair(grads, 8);
        let g_cat = self.fuse.backward(&tr.cat, &g, n, side, gw, gb, true).expect("input grad");
        let c3 = self.convs[2].cout();
        let nd = self.proj.outputs();
        let width = (c3 + nd) * r2;
        let mut g_act = Vec::with_capacity(n * c3 * r2);
        let mut g_proj = Vec::with_capacity(n * nd);
        for i in 0..n {
            let row = &g_cat[i * width..(i + 1) * width];
            g_act.extend_from_slice(&row[..c3 * r2]);
            for j in 0..nd {
                g_proj.push(row[(c3 + j) * r2..(c3 + j + 1) * r2].iter().copied().sum::<T>());
            }
        }
        let (gw, gb) = pair(grads, 6);
        self.proj.backward(&tr.cond, &g_proj, n, gw, gb, false);
        let mut s = side;
        for i in (0..3).rev() {
            leaky_backward(&mut g_act, &tr.pre[i], self.slope);
            s *= 2;
            let src = if i == 0 { &tr.input } else { &tr.acts[i - 1] };
            let need = i > 0 || want_input;
            let (gw, gb) = pair(grads, 2 * i);
            {
                let gx = self.convs[i].backward(src, &g_act, n, s, gw, gb, need)?;
                g_act = gx
            }
        }
        let two = T::lit(2.0);
        Some(g_act.into_iter().map(|v| v * two).collect())
    }
}
