use super::gemm::gemm;
use super::tensor::{Scalar, Tensor};
use crate::error::{ensure, Error, Result};
use crate::par;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn hwo(&self) -> usize {
        self.ho * self.wo
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Dense { x: Var, w: Var, b: Option<Var> },
    Relu { x: Var },
    MaxPool2 { x: Var, argmax: Vec<u32> },
    GlobalAvgPool { x: Var },
    UpsampleNearest { x: Var },
    Add { a: Var, b: Var },
    Clamp { x: Var, lo: T, hi: T },
    Scale { x: Var, s: T },
    Sum { x: Var },
    Mean { x: Var },
    SoftmaxXent { logits: Var, probs: Vec<T>, labels: Vec<usize> },
    L1 { a: Var, b: Var },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Records a computation for reverse-mode differentiation.
///
/// A tape is single-owner: build one per forward pass (or per worker) and
/// drop it after [`Tape::backward`].
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    checked: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T: Scalar = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn add_into<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn is_pointwise(g: &ConvGeom) -> bool {
    g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0
}

/// Output columns `[lo, hi)` whose input column `ox·stride + j − pad`
/// falls inside the image.
fn valid_cols(g: &ConvGeom, j: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(j).div_ceil(g.stride).min(g.wo);
    // largest ox with ox·stride + j − pad < w
    let hi = if g.w + g.pad > j { ((g.w + g.pad - j - 1) / g.stride + 1).min(g.wo) } else { 0 };
    (lo, hi.max(lo))
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let hwo = g.hwo();
    for c in 0..g.c {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * hwo;
                let (lo, hi) = valid_cols(g, j);
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    let dst = &mut col[row + oy * g.wo..row + (oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..(c * g.h + iy as usize + 1) * g.w];
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    let start = lo * g.stride + j - g.pad;
                    if g.stride == 1 {
                        dst[lo..hi].copy_from_slice(&src[start..start + hi - lo]);
                    } else {
                        for (k, d) in dst[lo..hi].iter_mut().enumerate() {
                            *d = src[start + k * g.stride];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let hwo = g.hwo();
    for c in 0..g.c {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let row = ((c * g.kh + i) * g.kw + j) * hwo;
                let (lo, hi) = valid_cols(g, j);
                if lo == hi {
                    continue;
                }
                let start = lo * g.stride + j - g.pad;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w + start;
                    let src = &col[row + oy * g.wo + lo..row + oy * g.wo + hi];
                    if g.stride == 1 {
                        for (d, &v) in dx[base..base + src.len()].iter_mut().zip(src) {
                            *d = *d + v;
                        }
                    } else {
                        for (k, &v) in src.iter().enumerate() {
                            dx[base + k * g.stride] = dx[base + k * g.stride] + v;
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), checked: true }
    }

    /// In checked mode (the default) every op rejects non-finite inputs.
    pub fn with_checked(mut self, checked: bool) -> Self {
        self.checked = checked;
        self
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

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        if self.checked && !value.is_finite() {
            return Err(Error::Numeric("non-finite value in leaf tensor".into()));
        }
        Ok(self.push(value, requires_grad, Op::Leaf))
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, op: &str, vars: &[Var]) -> Result<()> {
        for &v in vars {
            ensure!(v.0 < self.nodes.len(), "{op}: unknown variable");
        }
        if self.checked {
            for &v in vars {
                if !self.nodes[v.0].value.is_finite() {
                    return Err(Error::Numeric(format!("{op}: non-finite input")));
                }
            }
        }
        Ok(())
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// 2-D convolution. `x`: N×C×H×W, `w`: O×C×kh×kw, `b`: O.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let mut vars = vec![x, w];
        vars.extend(b);
        self.check("conv2d", &vars)?;
        let (xs, ws) = (self.shape(x), self.shape(w));
        ensure!(xs.len() == 4 && ws.len() == 4, "conv2d expects 4-D input and weight, got {xs:?} {ws:?}");
        ensure!(xs[1] == ws[1], "conv2d channel mismatch: input {} vs weight {}", xs[1], ws[1]);
        ensure!(stride >= 1, "conv2d stride must be >= 1");
        let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, kh, kw) = (ws[0], ws[2], ws[3]);
        ensure!(h + 2 * pad >= kh && wd + 2 * pad >= kw, "conv2d kernel larger than padded input");
        if let Some(b) = b {
            ensure!(self.shape(b) == [o], "conv2d bias shape {:?} != [{o}]", self.shape(b));
        }
        let geom = ConvGeom {
            n,
            c,
            h,
            w: wd,
            o,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (wd + 2 * pad - kw) / stride + 1,
        };
        let (xv, wv) = (self.value(x).data(), self.value(w).data());
        let bv = b.map(|b| self.value(b).data());
        let (k, hwo) = (geom.k(), geom.hwo());
        let in_stride = c * h * wd;
        let pointwise = is_pointwise(&geom);
        // columns are rebuilt in the backward pass rather than stored
        let results: Vec<Vec<T>> = par::map_range_init(
            n,
            || vec![T::zero(); if pointwise { 0 } else { k * hwo }],
            |col, i| {
                let xi = &xv[i * in_stride..(i + 1) * in_stride];
                let col: &[T] = if pointwise {
                    xi
                } else {
                    im2col(xi, &geom, col);
                    col
                };
                let mut out = vec![T::zero(); o * hwo];
                if let Some(bv) = bv {
                    for (oc, chunk) in out.chunks_mut(hwo).enumerate() {
                        chunk.fill(bv[oc]);
                    }
                }
                gemm(o, k, hwo, wv, false, col, false, &mut out, bv.is_some());
                out
            },
        );
        let value = Tensor::new(&[n, o, geom.ho, geom.wo], results.concat())?;
        let rg = self.any_grad(&vars);
        Ok(self.push(value, rg, Op::Conv2d { x, w, b, geom }))
    }

    /// `x·wᵀ + b` with `x`: N×D, `w`: O×D, `b`: O.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let mut vars = vec![x, w];
        vars.extend(b);
        self.check("dense", &vars)?;
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        ensure!(xs.len() == 2 && ws.len() == 2, "dense expects 2-D input and weight");
        ensure!(xs[1] == ws[1], "dense width mismatch: {} vs {}", xs[1], ws[1]);
        let (n, d, o) = (xs[0], xs[1], ws[0]);
        let mut out = vec![T::zero(); n * o];
        if let Some(b) = b {
            ensure!(self.shape(b) == [o], "dense bias shape mismatch");
            let bv = self.value(b).data();
            for row in out.chunks_mut(o) {
                row.copy_from_slice(bv);
            }
        }
        gemm(n, d, o, self.value(x).data(), false, self.value(w).data(), true, &mut out, b.is_some());
        let rg = self.any_grad(&vars);
        Ok(self.push(Tensor::new(&[n, o], out)?, rg, Op::Dense { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check("relu", &[x])?;
        let v = self.value(x).map(|a| if a > T::zero() { a } else { T::zero() });
        let rg = self.any_grad(&[x]);
        Ok(self.push(v, rg, Op::Relu { x }))
    }

    /// 2×2 max pooling with stride 2 (odd trailing rows/columns dropped).
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        self.check("maxpool2", &[x])?;
        let s = self.shape(x).to_vec();
        ensure!(s.len() == 4 && s[2] >= 2 && s[3] >= 2, "maxpool2 expects N×C×H×W with H,W >= 2");
        let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (h / 2, w / 2);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(nc * ho * wo);
        let mut argmax = Vec::with_capacity(nc * ho * wo);
        for p in 0..nc {
            let base = p * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xv[idx] > xv[best] {
                            best = idx;
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let rg = self.any_grad(&[x]);
        let value = Tensor::new(&[s[0], s[1], ho, wo], out)?;
        Ok(self.push(value, rg, Op::MaxPool2 { x, argmax }))
    }

    /// N×C×H×W → N×C spatial mean.
    pub fn avgpool_global(&mut self, x: Var) -> Result<Var> {
        self.check("avgpool_global", &[x])?;
        let s = self.shape(x).to_vec();
        ensure!(s.len() == 4, "avgpool_global expects 4-D input");
        let hw = s[2] * s[3];
        let inv = T::one() / T::of(hw as f64);
        let data = self.value(x).data().chunks(hw).map(|c| c.iter().copied().sum::<T>() * inv).collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[s[0], s[1]], data)?, rg, Op::GlobalAvgPool { x }))
    }

    /// Nearest-neighbour resize of N×C×H×W to N×C×`height`×`width`.
    pub fn upsample_nearest(&mut self, x: Var, height: usize, width: usize) -> Result<Var> {
        self.check("upsample_nearest", &[x])?;
        let s = self.shape(x).to_vec();
        ensure!(s.len() == 4, "upsample_nearest expects 4-D input");
        ensure!(height >= 1 && width >= 1, "upsample target must be non-empty");
        let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(nc * height * width);
        for p in 0..nc {
            for oy in 0..height {
                let iy = oy * h / height;
                for ox in 0..width {
                    out.push(xv[p * h * w + iy * w + ox * w / width]);
                }
            }
        }
        let rg = self.any_grad(&[x]);
        let value = Tensor::new(&[s[0], s[1], height, width], out)?;
        Ok(self.push(value, rg, Op::UpsampleNearest { x }))
    }

    /// Elementwise sum of equally-shaped tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check("add", &[a, b])?;
        ensure!(
            self.shape(a) == self.shape(b),
            "add shape mismatch: {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(v, rg, Op::Add { a, b }))
    }

    /// Skip connection `skip + residual`; same rule as [`Tape::add`].
    pub fn residual_add(&mut self, skip: Var, residual: Var) -> Result<Var> {
        self.add(skip, residual)
    }

    /// Clamp to `[lo, hi]`; the gradient passes where `lo <= x <= hi`.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Result<Var> {
        self.check("clamp", &[x])?;
        ensure!(lo <= hi, "clamp bounds reversed");
        let v = self.value(x).map(|a| a.max(lo).min(hi));
        let rg = self.any_grad(&[x]);
        Ok(self.push(v, rg, Op::Clamp { x, lo, hi }))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        self.affine(x, s, T::zero())
    }

    /// Elementwise `s·x + b`.
    pub fn affine(&mut self, x: Var, s: T, b: T) -> Result<Var> {
        self.check("affine", &[x])?;
        let v = self.value(x).map(|a| a * s + b);
        let rg = self.any_grad(&[x]);
        // the offset does not enter the gradient
        Ok(self.push(v, rg, Op::Scale { x, s }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check("sum", &[x])?;
        let v = Tensor::scalar(self.value(x).sum());
        let rg = self.any_grad(&[x]);
        Ok(self.push(v, rg, Op::Sum { x }))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check("mean", &[x])?;
        let t = self.value(x);
        ensure!(!t.is_empty(), "mean of empty tensor");
        let v = Tensor::scalar(t.sum() / T::of(t.len() as f64));
        let rg = self.any_grad(&[x]);
        Ok(self.push(v, rg, Op::Mean { x }))
    }

    /// Mean cross-entropy of softmax over axis 1. `logits` is N×K or
    /// N×K×H×W; `labels` holds one class per (sample, position) in
    /// row-major order.
    pub fn softmax_xent(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check("softmax_xent", &[logits])?;
        let s = self.shape(logits).to_vec();
        ensure!(s.len() >= 2, "softmax_xent expects at least 2-D logits");
        let (n, k) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        ensure!(labels.len() == n * inner, "softmax_xent: {} labels for {} positions", labels.len(), n * inner);
        ensure!(labels.iter().all(|&l| l < k), "softmax_xent: label out of range [0, {k})");
        let lv = self.value(logits).data();
        let mut probs = vec![T::zero(); lv.len()];
        let mut total = 0.0f64;
        for i in 0..n {
            for p in 0..inner {
                let at = |c: usize| i * k * inner + c * inner + p;
                let max = (0..k).map(|c| lv[at(c)]).fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for c in 0..k {
                    let e = (lv[at(c)] - max).exp();
                    probs[at(c)] = e;
                    z = z + e;
                }
                for c in 0..k {
                    probs[at(c)] = probs[at(c)] / z;
                }
                let label = labels[i * inner + p];
                total -= (lv[at(label)] - max - z.ln()).to_f64().unwrap_or(f64::NAN);
            }
        }
        let loss = T::of(total / (n * inner) as f64);
        let rg = self.any_grad(&[logits]);
        Ok(self.push(Tensor::scalar(loss), rg, Op::SoftmaxXent { logits, probs, labels: labels.to_vec() }))
    }

    /// `mean(|a − b|)` over all elements.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check("l1_loss", &[a, b])?;
        ensure!(
            self.shape(a) == self.shape(b),
            "l1_loss shape mismatch: {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        ensure!(!av.is_empty(), "l1_loss of empty tensors");
        let s: f64 = av.iter().zip(bv).map(|(&x, &y)| (x - y).abs().to_f64().unwrap_or(f64::NAN)).sum();
        let v = Tensor::scalar(T::of(s / av.len() as f64));
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(v, rg, Op::L1 { a, b }))
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        ensure!(loss.0 < self.nodes.len(), "backward: unknown variable");
        ensure!(
            self.value(loss).len() == 1,
            "backward needs a scalar loss, got shape {:?}",
            self.shape(loss)
        );
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            // keep intermediate gradients for inspection (Grad-CAM)
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let g2 = *geom;
                let (k, hwo, o) = (g2.k(), g2.hwo(), g2.o);
                let (need_x, need_w) = (self.wants(*x), self.wants(*w));
                let wv = self.value(*w).data();
                let xv = self.value(*x).data();
                let in_stride = g2.c * g2.h * g2.w;
                let pointwise = is_pointwise(&g2);
                let scratch = if pointwise { 0 } else { k * hwo };
                #[allow(clippy::type_complexity)]
                let parts: Vec<(Option<Vec<T>>, Option<Vec<T>>)> = par::map_range_init(
                    g2.n,
                    || (vec![T::zero(); if need_w { scratch } else { 0 }], vec![T::zero(); if need_x { scratch } else { 0 }]),
                    |(col, dcol), i| {
                        let dy = &gd[i * o * hwo..(i + 1) * o * hwo];
                        let xi = &xv[i * in_stride..(i + 1) * in_stride];
                        let dw = need_w.then(|| {
                            let mut dw = vec![T::zero(); o * k];
                            let col: &[T] = if pointwise {
                                xi
                            } else {
                                im2col(xi, &g2, col);
                                col
                            };
                            gemm(o, hwo, k, dy, false, col, true, &mut dw, false);
                            dw
                        });
                        let dx = need_x.then(|| {
                            if pointwise {
                                let mut dx = vec![T::zero(); k * hwo];
                                gemm(k, o, hwo, wv, true, dy, false, &mut dx, false);
                                dx
                            } else {
                                gemm(k, o, hwo, wv, true, dy, false, dcol, false);
                                let mut dx = vec![T::zero(); in_stride];
                                col2im(dcol, &g2, &mut dx);
                                dx
                            }
                        });
                        (dw, dx)
                    },
                );
                let mut dw_total = need_w.then(|| vec![T::zero(); o * k]);
                let mut dx_total = need_x.then(|| Vec::with_capacity(xv.len()));
                for (dw, dx) in parts {
                    if let (Some(acc), Some(dw)) = (dw_total.as_mut(), dw) {
                        for (a, v) in acc.iter_mut().zip(dw) {
                            *a = *a + v;
                        }
                    }
                    if let (Some(acc), Some(dx)) = (dx_total.as_mut(), dx) {
                        acc.extend(dx);
                    }
                }
                if let Some(dw) = dw_total {
                    add_into(&mut grads[w.0], Tensor::new(self.shape(*w), dw).expect("shape"));
                }
                if let Some(dx) = dx_total {
                    add_into(&mut grads[x.0], Tensor::new(self.shape(*x), dx).expect("shape"));
                }
                if let Some(b) = b.filter(|b| self.wants(*b)) {
                    let mut db = vec![T::zero(); o];
                    for i in 0..g2.n {
                        for (oc, d) in db.iter_mut().enumerate() {
                            let s = &gd[(i * o + oc) * hwo..(i * o + oc + 1) * hwo];
                            *d = *d + s.iter().copied().sum::<T>();
                        }
                    }
                    add_into(&mut grads[b.0], Tensor::new(&[o], db).expect("shape"));
                }
            }
            Op::Dense { x, w, b } => {
                let (n, d) = (self.shape(*x)[0], self.shape(*x)[1]);
                let o = self.shape(*w)[0];
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); n * d];
                    gemm(n, o, d, gd, false, self.value(*w).data(), false, &mut dx, false);
                    add_into(&mut grads[x.0], Tensor::new(&[n, d], dx).expect("shape"));
                }
                if self.wants(*w) {
                    let mut dw = vec![T::zero(); o * d];
                    gemm(o, n, d, gd, true, self.value(*x).data(), false, &mut dw, false);
                    add_into(&mut grads[w.0], Tensor::new(&[o, d], dw).expect("shape"));
                }
                if let Some(b) = b.filter(|b| self.wants(*b)) {
                    let mut db = vec![T::zero(); o];
                    for row in gd.chunks(o) {
                        for (a, &v) in db.iter_mut().zip(row) {
                            *a = *a + v;
                        }
                    }
                    add_into(&mut grads[b.0], Tensor::new(&[o], db).expect("shape"));
                }
            }
            Op::Relu { x } => {
                if self.wants(*x) {
                    let xv = self.value(*x).data();
                    let dx = gd.iter().zip(xv).map(|(&g, &a)| if a > T::zero() { g } else { T::zero() }).collect();
                    add_into(&mut grads[x.0], Tensor::new(self.shape(*x), dx).expect("shape"));
                }
            }
            Op::MaxPool2 { x, argmax } => {
                if self.wants(*x) {
                    let mut dx = Tensor::zeros(self.shape(*x));
                    let dd = dx.data_mut();
                    for (&idx, &gv) in argmax.iter().zip(gd) {
                        dd[idx as usize] = dd[idx as usize] + gv;
                    }
                    add_into(&mut grads[x.0], dx);
                }
            }
            Op::GlobalAvgPool { x } => {
                if self.wants(*x) {
                    let s = self.shape(*x);
                    let hw = s[2] * s[3];
                    let inv = T::one() / T::of(hw as f64);
                    let dx = gd.iter().flat_map(|&gv| std::iter::repeat_n(gv * inv, hw)).collect();
                    add_into(&mut grads[x.0], Tensor::new(s, dx).expect("shape"));
                }
            }
            Op::UpsampleNearest { x } => {
                if self.wants(*x) {
                    let s = self.shape(*x);
                    let os = node.value.shape();
                    let (h, w, oh, ow) = (s[2], s[3], os[2], os[3]);
                    let mut dx = Tensor::zeros(s);
                    let dd = dx.data_mut();
                    for p in 0..s[0] * s[1] {
                        for oy in 0..oh {
                            let iy = oy * h / oh;
                            for ox in 0..ow {
                                let di = p * h * w + iy * w + ox * w / ow;
                                dd[di] = dd[di] + gd[p * oh * ow + oy * ow + ox];
                            }
                        }
                    }
                    add_into(&mut grads[x.0], dx);
                }
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    if self.wants(*v) {
                        add_into(&mut grads[v.0], g.clone());
                    }
                }
            }
            Op::Clamp { x, lo, hi } => {
                if self.wants(*x) {
                    let xv = self.value(*x).data();
                    let dx = gd
                        .iter()
                        .zip(xv)
                        .map(|(&gv, &a)| if a >= *lo && a <= *hi { gv } else { T::zero() })
                        .collect();
                    add_into(&mut grads[x.0], Tensor::new(self.shape(*x), dx).expect("shape"));
                }
            }
            Op::Scale { x, s } => {
                if self.wants(*x) {
                    add_into(&mut grads[x.0], g.map(|v| v * *s));
                }
            }
            Op::Sum { x } => {
                if self.wants(*x) {
                    add_into(&mut grads[x.0], Tensor::full(self.shape(*x), gd[0]));
                }
            }
            Op::Mean { x } => {
                if self.wants(*x) {
                    let n = T::of(self.value(*x).len() as f64);
                    add_into(&mut grads[x.0], Tensor::full(self.shape(*x), gd[0] / n));
                }
            }
            Op::SoftmaxXent { logits, probs, labels } => {
                if self.wants(*logits) {
                    let s = self.shape(*logits);
                    let (k, inner) = (s[1], s[2..].iter().product::<usize>());
                    let scale = gd[0] / T::of(labels.len() as f64);
                    let mut dx = probs.clone();
                    for (pos, &label) in labels.iter().enumerate() {
                        let (i, p) = (pos / inner, pos % inner);
                        let idx = i * k * inner + label * inner + p;
                        dx[idx] = dx[idx] - T::one();
                    }
                    for v in &mut dx {
                        *v = *v * scale;
                    }
                    add_into(&mut grads[logits.0], Tensor::new(s, dx).expect("shape"));
                }
            }
            Op::L1 { a, b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let scale = gd[0] / T::of(av.len() as f64);
                let sign = |d: T| {
                    if d > T::zero() {
                        scale
                    } else if d < T::zero() {
                        -scale
                    } else {
                        T::zero()
                    }
                };
                if self.wants(*a) {
                    let da = av.iter().zip(bv).map(|(&x, &y)| sign(x - y)).collect();
                    add_into(&mut grads[a.0], Tensor::new(self.shape(*a), da).expect("shape"));
                }
                if self.wants(*b) {
                    let db = av.iter().zip(bv).map(|(&x, &y)| -sign(x - y)).collect();
                    add_into(&mut grads[b.0], Tensor::new(self.shape(*b), db).expect("shape"));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn relu_values() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[3], &[-1.0, 0.0, 2.0]), false).unwrap();
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn l1_values() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(t(&[2], &[1.0, 2.0]), false).unwrap();
        let b = tape.leaf(t(&[2], &[2.0, 4.0]), false).unwrap();
        let l = tape.l1_loss(a, b).unwrap();
        assert_eq!(tape.value(l).item(), 1.5);
        let l0 = tape.l1_loss(a, a).unwrap();
        assert_eq!(tape.value(l0).item(), 0.0);
    }

    #[test]
    fn l1_subgradient() {
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(t(&[3], &[2.0, -3.0, 0.0]), true).unwrap();
        let z = tape.leaf(Tensor::zeros(&[3]), false).unwrap();
        let l = tape.l1_loss(w, z).unwrap();
        let g = tape.backward(l).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(g.get(w).unwrap().data(), &[third, -third, 0.0]);
        assert!(g.get(z).is_none());
    }

    #[test]
    fn identity_pointwise_conv() {
        let mut tape = Tape::<f64>::new();
        let xv = Tensor::from_fn(&[2, 3, 4, 5], |i| i as f64 * 0.1 - 2.0);
        let x = tape.leaf(xv.clone(), false).unwrap();
        let mut wv = Tensor::zeros(&[3, 3, 1, 1]);
        for c in 0..3 {
            wv.data_mut()[c * 3 + c] = 1.0;
        }
        let w = tape.leaf(wv, false).unwrap();
        let y = tape.conv2d(x, w, None, 1, 0).unwrap();
        assert_eq!(tape.value(y), &xv);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(t(&[3], &[1.0, 5.0, -2.0]), true).unwrap();
        let s = tape.sum(w).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let w = tape.leaf(t(&[2], &[1.0, 2.0]), true).unwrap();
        assert!(matches!(tape.backward(w), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn nan_rejected_in_checked_mode() {
        let mut tape = Tape::<f64>::new();
        assert!(matches!(tape.leaf(t(&[1], &[f64::NAN]), false), Err(Error::Numeric(_))));
        let mut loose = Tape::<f64>::new().with_checked(false);
        let x = loose.leaf(t(&[1], &[f64::NAN]), false).unwrap();
        assert!(loose.relu(x).is_ok());
    }

    #[test]
    fn shape_mismatch_is_invalid_argument() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::zeros(&[2]), false).unwrap();
        let b = tape.leaf(Tensor::zeros(&[3]), false).unwrap();
        assert!(matches!(tape.add(a, b), Err(Error::InvalidArgument(_))));
        let x = tape.leaf(Tensor::zeros(&[1, 2, 4, 4]), false).unwrap();
        let w = tape.leaf(Tensor::zeros(&[1, 3, 3, 3]), false).unwrap();
        assert!(matches!(tape.conv2d(x, w, None, 1, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn non_grad_leaves_untouched() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(t(&[2], &[1.0, 2.0]), true).unwrap();
        let b = tape.leaf(t(&[2], &[3.0, 4.0]), false).unwrap();
        let s = tape.add(a, b).unwrap();
        let l = tape.sum(s).unwrap();
        let g = tape.backward(l).unwrap();
        assert!(g.get(a).is_some());
        assert!(g.get(b).is_none());
    }
}
