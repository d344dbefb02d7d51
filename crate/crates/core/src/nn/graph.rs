//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its value and the information its
//! backward rule needs. [`Graph::backward`] walks the tape in reverse,
//! skipping nodes that do not lead to a variable requiring a gradient.

use super::conv::{conv_backward, conv_forward, conv_t_backward, conv_t_forward, ConvGeometry};
use super::real::Real;
use super::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeometry, cols: Vec<T> },
    ConvT { x: Var, w: Var, b: Option<Var>, geom: ConvGeometry },
    LeakyRelu { x: Var, slope: T },
    Sigmoid { x: Var },
    InstanceNorm { x: Var, inv_std: Vec<T> },
    Concat { a: Var, b: Var },
    Gray { x: Var },
    SpectralNorm { w: Var, u: Vec<T>, v: Vec<T>, sigma: T },
    L1Mean { a: Var, b: Var },
    SquaredMean { x: Var, target: T },
    Add { a: Var, b: Var },
    Scale { x: Var, k: T },
    AvgPool { x: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Luma weights used by [`Graph::grayscale3`].
const GRAY: [f64; 3] = [0.299, 0.587, 0.114];

pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients indexed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// The gradient of `v`, or zeros of `shape` when `v` did not influence the loss.
    pub fn take_or_zeros(&mut self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.grads[v.0].take().unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf whose gradient is computed by [`Graph::backward`].
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn leaf(&mut self, t: Tensor<T>, trainable: bool) -> Var {
        self.push(t, Op::Leaf, trainable)
    }

    /// 2-D convolution. `w` is `Cout×Cin×k×k`, `b` has `Cout` entries.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (n, cin, h, wd) = self.value(x).dims4();
        let (cout, wcin, k, k2) = self.value(w).dims4();
        assert_eq!(cin, wcin, "conv2d channel mismatch");
        assert_eq!(k, k2, "square kernels only");
        let geom = ConvGeometry { channels: cin, height: h, width: wd, kernel: k, stride, pad };
        assert!(geom.valid(), "conv2d kernel larger than padded input");
        let (kk, p) = (geom.col_rows(), geom.col_cols());
        let mut cols = vec![T::zero(); n * kk * p];
        let mut out = vec![T::zero(); n * cout * p];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = b.map(|b| self.value(b).data());
            let per_in = cin * h * wd;
            for i in 0..n {
                conv_forward(
                    &geom,
                    &xv[i * per_in..(i + 1) * per_in],
                    wv,
                    bv,
                    cout,
                    &mut cols[i * kk * p..(i + 1) * kk * p],
                    &mut out[i * cout * p..(i + 1) * cout * p],
                );
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        let value = Tensor::new(vec![n, cout, geom.out_height(), geom.out_width()], out);
        self.push(value, Op::Conv { x, w, b, geom, cols }, needs)
    }

    /// Transposed 2-D convolution. `w` is `Cin×Cout×k×k`; the output size is
    /// `(H − 1)·stride − 2·pad + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let (n, cin, h, wd) = self.value(x).dims4();
        let (wcin, cout, k, k2) = self.value(w).dims4();
        assert_eq!(cin, wcin, "conv_transpose2d channel mismatch");
        assert_eq!(k, k2, "square kernels only");
        let ho = (h - 1) * stride + k - 2 * pad;
        let wo = (wd - 1) * stride + k - 2 * pad;
        let geom = ConvGeometry { channels: cout, height: ho, width: wo, kernel: k, stride, pad };
        debug_assert_eq!((geom.out_height(), geom.out_width()), (h, wd));
        let mut out = vec![T::zero(); n * cout * ho * wo];
        let mut scratch = Vec::new();
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = b.map(|b| self.value(b).data());
            let per_in = cin * h * wd;
            let per_out = cout * ho * wo;
            for i in 0..n {
                conv_t_forward(
                    &geom,
                    &xv[i * per_in..(i + 1) * per_in],
                    wv,
                    bv,
                    cin,
                    &mut scratch,
                    &mut out[i * per_out..(i + 1) * per_out],
                );
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(Tensor::new(vec![n, cout, ho, wo], out), Op::ConvT { x, w, b, geom }, needs)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let slope = T::lit(slope);
        let value = self.value(x).map(|v| if v > T::zero() { v } else { v * slope });
        let needs = self.needs(x);
        self.push(value, Op::LeakyRelu { x, slope }, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        let needs = self.needs(x);
        self.push(value, Op::Sigmoid { x }, needs)
    }

    /// Per-sample, per-channel normalization over the spatial axes (no affine
    /// parameters).
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let eps = T::lit(eps);
        let count = T::lit(hw as f64);
        let mut out = vec![T::zero(); n * c * hw];
        let mut inv_std = Vec::with_capacity(n * c);
        let xv = self.value(x).data();
        for (plane, dst) in xv.chunks_exact(hw).zip(out.chunks_exact_mut(hw)) {
            let mean = plane.iter().copied().sum::<T>() / count;
            let var = plane.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / count;
            let inv = T::one() / (var + eps).sqrt();
            for (d, v) in dst.iter_mut().zip(plane) {
                *d = (*v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let needs = self.needs(x);
        self.push(Tensor::new(vec![n, c, h, w], out), Op::InstanceNorm { x, inv_std }, needs)
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let (n, ca, h, w) = self.value(a).dims4();
        let (nb, cb, hb, wb) = self.value(b).dims4();
        assert_eq!((n, h, w), (nb, hb, wb), "concat_channels shape mismatch");
        let hw = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * hw);
        for i in 0..n {
            out.extend_from_slice(&self.value(a).data()[i * ca * hw..(i + 1) * ca * hw]);
            out.extend_from_slice(&self.value(b).data()[i * cb * hw..(i + 1) * cb * hw]);
        }
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::new(vec![n, ca + cb, h, w], out), Op::Concat { a, b }, needs)
    }

    /// Three-channel grayscale of an RGB batch (`N×3×H×W`).
    pub fn grayscale3(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(c, 3, "grayscale3 needs RGB input");
        let hw = h * w;
        let wts = GRAY.map(T::lit);
        let mut out = vec![T::zero(); n * 3 * hw];
        let xv = self.value(x).data();
        for i in 0..n {
            let base = i * 3 * hw;
            for p in 0..hw {
                let l = wts[0] * xv[base + p] + wts[1] * xv[base + hw + p] + wts[2] * xv[base + 2 * hw + p];
                out[base + p] = l;
                out[base + hw + p] = l;
                out[base + 2 * hw + p] = l;
            }
        }
        let needs = self.needs(x);
        self.push(Tensor::new(vec![n, 3, h, w], out), Op::Gray { x }, needs)
    }

    /// Divides a kernel by its leading singular value, estimated by
    /// `iterations` rounds of power iteration started from `u`. The kernel is
    /// viewed as a matrix of `shape[0]` rows. Returns the normalized kernel and
    /// the updated left singular vector. The backward rule treats `u` and `v`
    /// as constants.
    pub fn spectral_normalize(&mut self, w: Var, u: &[T], iterations: usize) -> (Var, Vec<T>) {
        let (u, v, sigma) = power_iteration(self.value(w), u, iterations.max(1));
        let value = self.value(w).map(|x| x / sigma);
        let needs = self.needs(w);
        let var = self.push(value, Op::SpectralNorm { w, u: u.clone(), v, sigma }, needs);
        (var, u)
    }

    /// `mean(|a − b|)` over every element.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "l1_mean shape mismatch");
        let n = T::lit(self.value(a).len() as f64);
        let s: T = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| (*x - *y).abs()).sum();
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::scalar(s / n), Op::L1Mean { a, b }, needs)
    }

    /// `mean((x − target)²)` over every element.
    pub fn squared_mean(&mut self, x: Var, target: f64) -> Var {
        let t = T::lit(target);
        let n = T::lit(self.value(x).len() as f64);
        let s: T = self.value(x).data().iter().map(|v| (*v - t) * (*v - t)).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s / n), Op::SquaredMean { x, target: t }, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shape mismatch");
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(value, Op::Add { a, b }, needs)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let k = T::lit(k);
        let value = self.value(x).map(|v| v * k);
        let needs = self.needs(x);
        self.push(value, Op::Scale { x, k }, needs)
    }

    /// Sums scalar nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = self.add(acc, *p);
        }
        acc
    }

    /// Mean over the spatial axes: `N×C×H×W → N×C×1×1`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = T::lit((h * w) as f64);
        let out = self.value(x).data().chunks_exact(h * w).map(|p| p.iter().copied().sum::<T>() / hw).collect();
        let needs = self.needs(x);
        self.push(Tensor::new(vec![n, c, 1, 1], out), Op::AvgPool { x }, needs)
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![T::one()]));
        let mut scratch = Vec::new();
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else { continue };
            self.backward_node(node, &gy, &mut grads, &mut scratch);
            grads[idx] = Some(gy);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn grad_buffer(&self, v: Var) -> Option<Tensor<T>> {
        self.needs(v).then(|| Tensor::zeros(self.value(v).shape().to_vec()))
    }

    fn backward_node(&self, node: &Node<T>, gy: &Tensor<T>, grads: &mut [Option<Tensor<T>>], scratch: &mut Vec<T>) {
        let dy = gy.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, geom, cols } => {
                let (n, _, _, _) = self.value(*x).dims4();
                let cout = self.value(*w).shape()[0];
                let (kk, p) = (geom.col_rows(), geom.col_cols());
                let per_in = geom.channels * geom.height * geom.width;
                let mut dx = self.grad_buffer(*x);
                let mut dw = self.grad_buffer(*w);
                let mut db = b.and_then(|b| self.grad_buffer(b));
                let wv = self.value(*w).data();
                for i in 0..n {
                    conv_backward(
                        geom,
                        &cols[i * kk * p..(i + 1) * kk * p],
                        wv,
                        cout,
                        &dy[i * cout * p..(i + 1) * cout * p],
                        dx.as_mut().map(|t| &mut t.data_mut()[i * per_in..(i + 1) * per_in]),
                        dw.as_mut().map(|t| t.data_mut()),
                        db.as_mut().map(|t| t.data_mut()),
                        scratch,
                    );
                }
                if let Some(g) = dx {
                    self.accumulate(grads, *x, g);
                }
                if let Some(g) = dw {
                    self.accumulate(grads, *w, g);
                }
                if let (Some(b), Some(g)) = (b, db) {
                    self.accumulate(grads, *b, g);
                }
            }
            Op::ConvT { x, w, b, geom } => {
                let (n, cin, h, wd) = self.value(*x).dims4();
                let per_in = cin * h * wd;
                let per_out = geom.channels * geom.height * geom.width;
                let mut dx = self.grad_buffer(*x);
                let mut dw = self.grad_buffer(*w);
                let mut db = b.and_then(|b| self.grad_buffer(b));
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                for i in 0..n {
                    conv_t_backward(
                        geom,
                        &xv[i * per_in..(i + 1) * per_in],
                        wv,
                        cin,
                        &dy[i * per_out..(i + 1) * per_out],
                        dx.as_mut().map(|t| &mut t.data_mut()[i * per_in..(i + 1) * per_in]),
                        dw.as_mut().map(|t| t.data_mut()),
                        db.as_mut().map(|t| t.data_mut()),
                        scratch,
                    );
                }
                if let Some(g) = dx {
                    self.accumulate(grads, *x, g);
                }
                if let Some(g) = dw {
                    self.accumulate(grads, *w, g);
                }
                if let (Some(b), Some(g)) = (b, db) {
                    self.accumulate(grads, *b, g);
                }
            }
            Op::LeakyRelu { x, slope } => {
                if self.needs(*x) {
                    let xv = self.value(*x).data();
                    let g = xv.iter().zip(dy).map(|(v, d)| if *v > T::zero() { *d } else { *d * *slope }).collect();
                    self.accumulate(grads, *x, Tensor::new(gy.shape().to_vec(), g));
                }
            }
            Op::Sigmoid { x } => {
                if self.needs(*x) {
                    let s = node.value.data();
                    let g = s.iter().zip(dy).map(|(s, d)| *d * *s * (T::one() - *s)).collect();
                    self.accumulate(grads, *x, Tensor::new(gy.shape().to_vec(), g));
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                if self.needs(*x) {
                    let (_, _, h, w) = node.value.dims4();
                    let hw = h * w;
                    let count = T::lit(hw as f64);
                    let xhat = node.value.data();
                    let mut g = vec![T::zero(); xhat.len()];
                    for (pi, inv) in inv_std.iter().enumerate() {
                        let r = pi * hw..(pi + 1) * hw;
                        let (xh, d) = (&xhat[r.clone()], &dy[r.clone()]);
                        let sum_d: T = d.iter().copied().sum();
                        let sum_dx: T = d.iter().zip(xh).map(|(a, b)| *a * *b).sum();
                        for (k, out) in g[r].iter_mut().enumerate() {
                            *out = *inv / count * (count * d[k] - sum_d - xh[k] * sum_dx);
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(gy.shape().to_vec(), g));
                }
            }
            Op::Concat { a, b } => {
                let (n, ca, h, w) = self.value(*a).dims4();
                let cb = self.value(*b).shape()[1];
                let hw = h * w;
                let c = ca + cb;
                if self.needs(*a) {
                    let mut g = Vec::with_capacity(n * ca * hw);
                    for i in 0..n {
                        g.extend_from_slice(&dy[i * c * hw..(i * c + ca) * hw]);
                    }
                    self.accumulate(grads, *a, Tensor::new(vec![n, ca, h, w], g));
                }
                if self.needs(*b) {
                    let mut g = Vec::with_capacity(n * cb * hw);
                    for i in 0..n {
                        g.extend_from_slice(&dy[(i * c + ca) * hw..(i + 1) * c * hw]);
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![n, cb, h, w], g));
                }
            }
            Op::Gray { x } => {
                if self.needs(*x) {
                    let (n, _, h, w) = node.value.dims4();
                    let hw = h * w;
                    let wts = GRAY.map(T::lit);
                    let mut g = vec![T::zero(); n * 3 * hw];
                    for i in 0..n {
                        let base = i * 3 * hw;
                        for p in 0..hw {
                            let s = dy[base + p] + dy[base + hw + p] + dy[base + 2 * hw + p];
                            for c in 0..3 {
                                g[base + c * hw + p] = wts[c] * s;
                            }
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(vec![n, 3, h, w], g));
                }
            }
            Op::SpectralNorm { w, u, v, sigma } => {
                if self.needs(*w) {
                    // d/dW of W/σ with σ = uᵀWv: (G − <G, W/σ>·u vᵀ) / σ
                    let wsn = node.value.data();
                    let inner: T = dy.iter().zip(wsn).map(|(a, b)| *a * *b).sum();
                    let cols = v.len();
                    let g = dy
                        .iter()
                        .enumerate()
                        .map(|(idx, d)| (*d - inner * u[idx / cols] * v[idx % cols]) / *sigma)
                        .collect();
                    self.accumulate(grads, *w, Tensor::new(gy.shape().to_vec(), g));
                }
            }
            Op::L1Mean { a, b } => {
                let g0 = dy[0];
                let av = self.value(*a);
                let n = T::lit(av.len() as f64);
                let sign: Vec<T> = av
                    .data()
                    .iter()
                    .zip(self.value(*b).data())
                    .map(|(x, y)| {
                        let d = *x - *y;
                        if d > T::zero() {
                            g0 / n
                        } else if d < T::zero() {
                            -g0 / n
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                if self.needs(*b) {
                    let neg = sign.iter().map(|s| -*s).collect();
                    self.accumulate(grads, *b, Tensor::new(av.shape().to_vec(), neg));
                }
                if self.needs(*a) {
                    self.accumulate(grads, *a, Tensor::new(av.shape().to_vec(), sign));
                }
            }
            Op::SquaredMean { x, target } => {
                if self.needs(*x) {
                    let xv = self.value(*x);
                    let k = T::lit(2.0) * dy[0] / T::lit(xv.len() as f64);
                    let g = xv.map(|v| k * (v - *target));
                    self.accumulate(grads, *x, g);
                }
            }
            Op::Add { a, b } => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, gy.clone());
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, gy.clone());
                }
            }
            Op::Scale { x, k } => {
                if self.needs(*x) {
                    self.accumulate(grads, *x, gy.map(|d| d * *k));
                }
            }
            Op::AvgPool { x } => {
                if self.needs(*x) {
                    let (n, c, h, w) = self.value(*x).dims4();
                    let hw = h * w;
                    let inv = T::one() / T::lit(hw as f64);
                    let mut g = Vec::with_capacity(n * c * hw);
                    for d in dy {
                        g.extend(std::iter::repeat_n(*d * inv, hw));
                    }
                    self.accumulate(grads, *x, Tensor::new(vec![n, c, h, w], g));
                }
            }
        }
    }
}

/// Power iteration on `w` viewed as a `rows × (len/rows)` matrix. Returns
/// `(u, v, σ)` with `σ = uᵀ W v`.
pub fn power_iteration<T: Real>(w: &Tensor<T>, u0: &[T], iterations: usize) -> (Vec<T>, Vec<T>, T) {
    let rows = w.shape()[0];
    let cols = w.len() / rows;
    assert_eq!(u0.len(), rows, "power iteration vector has the wrong length");
    let m = w.data();
    let eps = T::lit(1e-12);
    let normalize = |x: &mut Vec<T>| {
        let n = x.iter().map(|v| *v * *v).sum::<T>().sqrt();
        let d = if n > eps { n } else { eps };
        x.iter_mut().for_each(|v| *v = *v / d);
    };
    let mut u = u0.to_vec();
    let mut v = vec![T::zero(); cols];
    for _ in 0..iterations {
        v.iter_mut().for_each(|x| *x = T::zero());
        for r in 0..rows {
            let row = &m[r * cols..(r + 1) * cols];
            for (vj, wj) in v.iter_mut().zip(row) {
                *vj = *vj + *wj * u[r];
            }
        }
        normalize(&mut v);
        for (r, ur) in u.iter_mut().enumerate() {
            *ur = m[r * cols..(r + 1) * cols].iter().zip(&v).map(|(a, b)| *a * *b).sum();
        }
        normalize(&mut u);
    }
    let sigma = (0..rows)
        .map(|r| u[r] * m[r * cols..(r + 1) * cols].iter().zip(&v).map(|(a, b)| *a * *b).sum::<T>())
        .sum::<T>();
    let sigma = if sigma > eps { sigma } else { eps };
    (u, v, sigma)
}
