//! Reverse-mode differentiation over 2-D `f64` matrices.
//!
//! Every op evaluates eagerly and appends a node to the tape; `backward`
//! walks the nodes in reverse and accumulates vector-Jacobian products.
//! Parameter leaves carry the index of the parameter they snapshot, so the
//! gradient of one parameter used in several forward passes is summed.

use std::sync::atomic::{AtomicU64, Ordering};

use super::params::{Gradients, ModelParams};
use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node recorded on a specific [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Geometry of a square-kernel 2-D convolution on `[channels, height, width]` inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn in_features(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn out_features(&self) -> usize {
        self.out_channels * self.out_height() * self.out_width()
    }

    fn weight_cols(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(usize, usize),
    MatMulTransB(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Ln { input: usize, floor: f64 },
    Softmax(usize),
    RowNormalize(usize),
    SelectRows(usize, Vec<usize>),
    RowSum(usize),
    SumAll(usize),
    Conv2d {
        input: usize,
        weight: usize,
        bias: usize,
        geometry: ConvGeometry,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Computation record for one forward pass.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn as_matrix(t: &Tensor) -> Tensor {
    let (r, c) = t.matrix_dims();
    // Reshape of a valid tensor to its own matrix view cannot fail.
    t.reshape(&[r, c]).expect("matrix view")
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(vec![rows, cols], data).expect("op output shape")
}

pub(crate) fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Graph(format!(
                "variable {} does not belong to this tape",
                v.index
            )));
        }
        Ok(v.index)
    }

    fn val(&self, i: usize) -> &Tensor {
        &self.nodes[i].value
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        let i = self.idx(v)?;
        Ok(self.val(i))
    }

    /// Scalar value of a `[1, 1]` node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let t = self.value(v)?;
        if t.numel() != 1 {
            return Err(Error::Graph(format!(
                "expected scalar, found shape {:?}",
                t.shape()
            )));
        }
        Ok(t.data()[0])
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(as_matrix(&value), Op::Constant)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.push(matrix(1, 1, vec![value]), Op::Constant)
    }

    /// Records a snapshot of parameter `index` as a differentiable leaf.
    pub fn param(&mut self, index: usize, value: &Tensor) -> Var {
        self.push(as_matrix(value), Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (n, k) = self.val(ia).matrix_dims();
        let (k2, m) = self.val(ib).matrix_dims();
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul [{n},{k}] x [{k2},{m}]"
            )));
        }
        let (ad, bd) = (self.val(ia).data(), self.val(ib).data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let av = ad[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &bd[p * m..(p + 1) * m];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        Ok(self.push(matrix(n, m, out), Op::MatMul(ia, ib)))
    }

    /// `a · bᵀ`
    pub fn matmul_transpose_b(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (n, k) = self.val(ia).matrix_dims();
        let (m, k2) = self.val(ib).matrix_dims();
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul [{n},{k}] x [{m},{k2}]^T"
            )));
        }
        let (ad, bd) = (self.val(ia).data(), self.val(ib).data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = &ad[i * k..(i + 1) * k];
            for j in 0..m {
                let brow = &bd[j * k..(j + 1) * k];
                out[i * m + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        Ok(self.push(matrix(n, m, out), Op::MatMulTransB(ia, ib)))
    }

    /// Adds a `[1, m]` row to every row of an `[n, m]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (ix, ib) = (self.idx(x)?, self.idx(bias)?);
        let (n, m) = self.val(ix).matrix_dims();
        let b = self.val(ib);
        if b.numel() != m {
            return Err(Error::Shape(format!(
                "bias of {} values for {m} columns",
                b.numel()
            )));
        }
        let bd = b.data();
        let mut out = self.val(ix).data().to_vec();
        for row in out.chunks_mut(m) {
            for (o, &bv) in row.iter_mut().zip(bd) {
                *o += bv;
            }
        }
        Ok(self.push(matrix(n, m, out), Op::AddBias(ix, ib)))
    }

    fn binary(&mut self, a: Var, b: Var, f: fn(f64, f64) -> f64) -> Result<(usize, usize, Tensor)> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (da, db) = (self.val(ia).matrix_dims(), self.val(ib).matrix_dims());
        if da != db {
            return Err(Error::Shape(format!(
                "elementwise [{},{}] vs [{},{}]",
                da.0, da.1, db.0, db.1
            )));
        }
        let out = self
            .val(ia)
            .data()
            .iter()
            .zip(self.val(ib).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok((ia, ib, matrix(da.0, da.1, out)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, out) = self.binary(a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(ia, ib)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, out) = self.binary(a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(ia, ib)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib, out) = self.binary(a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(ia, ib)))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64) -> Result<(usize, Tensor)> {
        let ix = self.idx(x)?;
        let (r, c) = self.val(ix).matrix_dims();
        let out = self.val(ix).data().iter().map(|&v| f(v)).collect();
        Ok((ix, matrix(r, c, out)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let (ix, out) = self.unary(x, |v| v * factor)?;
        Ok(self.push(out, Op::Scale(ix, factor)))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let (ix, out) = self.unary(x, f64::tanh)?;
        Ok(self.push(out, Op::Tanh(ix)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let (ix, out) = self.unary(x, |v| v.max(0.0))?;
        Ok(self.push(out, Op::Relu(ix)))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let (ix, out) = self.unary(x, f64::exp)?;
        Ok(self.push(out, Op::Exp(ix)))
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn ln_clamped(&mut self, x: Var, floor: f64) -> Result<Var> {
        let (ix, out) = self.unary(x, |v| v.max(floor).ln())?;
        Ok(self.push(out, Op::Ln { input: ix, floor }))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let src = self.val(ix);
        if !src.is_finite() {
            return Err(Error::NumericInput("softmax of non-finite logits".into()));
        }
        let (r, c) = src.matrix_dims();
        let mut out = vec![0.0; r * c];
        for (o, l) in out.chunks_mut(c).zip(src.data().chunks(c)) {
            softmax_row(l, o);
        }
        Ok(self.push(matrix(r, c, out), Op::Softmax(ix)))
    }

    /// Scales every row to unit L2 norm. Zero rows are rejected.
    pub fn row_normalize(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let (r, c) = self.val(ix).matrix_dims();
        let mut out = self.val(ix).data().to_vec();
        for (i, row) in out.chunks_mut(c).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateEmbedding(format!(
                    "row {i} has norm {norm}"
                )));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(self.push(matrix(r, c, out), Op::RowNormalize(ix)))
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let ix = self.idx(x)?;
        let (r, c) = self.val(ix).matrix_dims();
        if rows.is_empty() {
            return Err(Error::Shape("cannot select zero rows".into()));
        }
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            if i >= r {
                return Err(Error::Shape(format!("row {i} out of {r}")));
            }
            out.extend_from_slice(self.val(ix).row(i));
        }
        Ok(self.push(matrix(rows.len(), c, out), Op::SelectRows(ix, rows.to_vec())))
    }

    /// `[n, m] → [n, 1]`
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let (r, _) = self.val(ix).matrix_dims();
        let out = self.val(ix).row_iter().map(|row| row.iter().sum()).collect();
        Ok(self.push(matrix(r, 1, out), Op::RowSum(ix)))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let s = self.val(ix).data().iter().sum();
        Ok(self.push(matrix(1, 1, vec![s]), Op::SumAll(ix)))
    }

    /// Batched convolution. `input` rows are flattened `[channels, h, w]` images,
    /// `weight` is `[out_channels, in_channels·k·k]`, `bias` holds `out_channels` values.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, g: ConvGeometry) -> Result<Var> {
        let (ii, iw, ib) = (self.idx(input)?, self.idx(weight)?, self.idx(bias)?);
        let (n, f) = self.val(ii).matrix_dims();
        if f != g.in_features() {
            return Err(Error::Shape(format!(
                "conv input has {f} features, geometry expects {}",
                g.in_features()
            )));
        }
        if self.val(iw).matrix_dims() != (g.out_channels, g.weight_cols())
            || self.val(ib).numel() != g.out_channels
        {
            return Err(Error::Shape("conv weight/bias do not match geometry".into()));
        }
        let (ho, wo) = (g.out_height(), g.out_width());
        let x = self.val(ii).data();
        let w = self.val(iw).data();
        let b = self.val(ib).data();
        let mut out = vec![0.0; n * g.out_features()];
        for s in 0..n {
            let xs = &x[s * f..(s + 1) * f];
            let os = &mut out[s * g.out_features()..(s + 1) * g.out_features()];
            for oc in 0..g.out_channels {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[oc];
                        conv_taps(&g, oy, ox, |ic, ky, kx, pix| {
                            acc += w[oc * g.weight_cols() + (ic * g.kernel + ky) * g.kernel + kx]
                                * xs[pix];
                        });
                        os[(oc * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        let of = g.out_features();
        Ok(self.push(
            matrix(n, of, out),
            Op::Conv2d {
                input: ii,
                weight: iw,
                bias: ib,
                geometry: g,
            },
        ))
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf,
    /// shaped like `params`. Parameters the loss does not reach get zeros.
    pub fn backward(&self, loss: Var, params: &ModelParams) -> Result<Gradients> {
        let li = self.idx(loss)?;
        if self.val(li).numel() != 1 {
            return Err(Error::Graph(format!(
                "loss must be scalar, found shape {:?}",
                self.val(li).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=li).map(|_| None).collect();
        grads[li] = Some(vec![1.0]);
        let mut out = Gradients::zeros_like(params);

        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let (r, c) = node.value.matrix_dims();
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => {
                    let dst = out.get_mut(*p).ok_or_else(|| {
                        Error::Graph(format!("parameter {p} is not part of the model"))
                    })?;
                    if dst.numel() != g.len() {
                        return Err(Error::Shape(format!(
                            "parameter {p} changed shape during the pass"
                        )));
                    }
                    for (d, v) in dst.data_mut().iter_mut().zip(&g) {
                        *d += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (ad, bd) = (self.val(*a).data(), self.val(*b).data());
                    let k = self.val(*a).cols();
                    let mut ga = vec![0.0; r * k];
                    let mut gb = vec![0.0; k * c];
                    for row in 0..r {
                        let grow = &g[row * c..(row + 1) * c];
                        for p in 0..k {
                            let brow = &bd[p * c..(p + 1) * c];
                            ga[row * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                            let av = ad[row * k + p];
                            for (gbv, &gv) in gb[p * c..(p + 1) * c].iter_mut().zip(grow) {
                                *gbv += av * gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulTransB(a, b) => {
                    let (ad, bd) = (self.val(*a).data(), self.val(*b).data());
                    let k = self.val(*a).cols();
                    let mut ga = vec![0.0; r * k];
                    let mut gb = vec![0.0; c * k];
                    for i2 in 0..r {
                        for j in 0..c {
                            let gv = g[i2 * c + j];
                            if gv == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                ga[i2 * k + p] += gv * bd[j * k + p];
                                gb[j * k + p] += gv * ad[i2 * k + p];
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddBias(x, b) => {
                    let mut gb = vec![0.0; c];
                    for row in g.chunks(c) {
                        for (s, v) in gb.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads, *x, g);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.iter().map(|v| -v).collect());
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (ad, bd) = (self.val(*a).data(), self.val(*b).data());
                    let ga = g.iter().zip(bd).map(|(x, y)| x * y).collect();
                    let gb = g.iter().zip(ad).map(|(x, y)| x * y).collect();
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(x, f) => {
                    accumulate(&mut grads, *x, g.iter().map(|v| v * f).collect());
                }
                Op::Tanh(x) => {
                    let y = node.value.data();
                    let gx = g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let xv = self.val(*x).data();
                    let gx = g
                        .iter()
                        .zip(xv)
                        .map(|(gv, &v)| if v > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Exp(x) => {
                    let y = node.value.data();
                    accumulate(&mut grads, *x, g.iter().zip(y).map(|(a, b)| a * b).collect());
                }
                Op::Ln { input, floor } => {
                    let xv = self.val(*input).data();
                    let gx = g
                        .iter()
                        .zip(xv)
                        .map(|(gv, &v)| if v > *floor { gv / v } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *input, gx);
                }
                Op::Softmax(x) => {
                    let y = node.value.data();
                    let mut gx = vec![0.0; r * c];
                    for ((gxr, gr), yr) in gx.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, gv), yv) in gxr.iter_mut().zip(gr).zip(yr) {
                            *o = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::RowNormalize(x) => {
                    let y = node.value.data();
                    let xv = self.val(*x).data();
                    let mut gx = vec![0.0; r * c];
                    for row in 0..r {
                        let span = row * c..(row + 1) * c;
                        let norm = xv[span.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
                        let yr = &y[span.clone()];
                        let gr = &g[span.clone()];
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, gv), yv) in gx[span].iter_mut().zip(gr).zip(yr) {
                            *o = (gv - yv * dot) / norm;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::SelectRows(x, rows) => {
                    let (xr, xc) = self.val(*x).matrix_dims();
                    let mut gx = vec![0.0; xr * xc];
                    for (k, &src) in rows.iter().enumerate() {
                        for (d, v) in gx[src * xc..(src + 1) * xc]
                            .iter_mut()
                            .zip(&g[k * xc..(k + 1) * xc])
                        {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::RowSum(x) => {
                    let xc = self.val(*x).cols();
                    let gx = g.iter().flat_map(|&v| std::iter::repeat_n(v, xc)).collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::SumAll(x) => {
                    let n = self.val(*x).numel();
                    accumulate(&mut grads, *x, vec![g[0]; n]);
                }
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geometry,
                } => {
                    let gm = *geometry;
                    let (ho, wo) = (gm.out_height(), gm.out_width());
                    let (n, f) = self.val(*input).matrix_dims();
                    let xv = self.val(*input).data();
                    let wv = self.val(*weight).data();
                    let wc = gm.weight_cols();
                    let of = gm.out_features();
                    let mut gx = vec![0.0; n * f];
                    let mut gw = vec![0.0; wv.len()];
                    let mut gb = vec![0.0; gm.out_channels];
                    for s in 0..n {
                        let xs = &xv[s * f..(s + 1) * f];
                        let gs = &g[s * of..(s + 1) * of];
                        let gxs = &mut gx[s * f..(s + 1) * f];
                        for oc in 0..gm.out_channels {
                            for oy in 0..ho {
                                for ox in 0..wo {
                                    let go = gs[(oc * ho + oy) * wo + ox];
                                    if go == 0.0 {
                                        continue;
                                    }
                                    gb[oc] += go;
                                    conv_taps(&gm, oy, ox, |ic, ky, kx, pix| {
                                        let wi = oc * wc + (ic * gm.kernel + ky) * gm.kernel + kx;
                                        gw[wi] += go * xs[pix];
                                        gxs[pix] += go * wv[wi];
                                    });
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *input, gx);
                    accumulate(&mut grads, *weight, gw);
                    accumulate(&mut grads, *bias, gb);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], index: usize, g: Vec<f64>) {
    match &mut grads[index] {
        Some(existing) => {
            for (e, v) in existing.iter_mut().zip(&g) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Visits every in-bounds kernel tap feeding output pixel `(oy, ox)`.
fn conv_taps(g: &ConvGeometry, oy: usize, ox: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    for ic in 0..g.in_channels {
        for ky in 0..g.kernel {
            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
            if iy < 0 || iy >= g.height as isize {
                continue;
            }
            for kx in 0..g.kernel {
                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                if ix < 0 || ix >= g.width as isize {
                    continue;
                }
                f(ic, ky, kx, (ic * g.height + iy as usize) * g.width + ix as usize);
            }
        }
    }
}
