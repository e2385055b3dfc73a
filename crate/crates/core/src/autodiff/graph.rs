//! Tape-style computation graph. Nodes are appended in evaluation order, so
//! a reverse sweep over the node list is a valid backward schedule.

use std::f64::consts::LN_2;
use std::sync::Arc;

use super::{ParameterSet, Tensor};
use crate::cmat::{CMatrix, C64};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Constant data the bilinear gain op multiplies against.
#[derive(Debug, Clone)]
pub enum GainSource {
    /// Cascaded channels `Hc_k` (`N × M`); the gain needs a phase vector.
    Cascaded(Arc<Vec<CMatrix>>),
    /// Rows `h_kᴴ` (length `M`) of fixed effective channels.
    Rows(Arc<Vec<Vec<C64>>>),
}

impl GainSource {
    fn users(&self) -> usize {
        match self {
            GainSource::Cascaded(h) => h.len(),
            GainSource::Rows(r) => r.len(),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { x: NodeId, w: NodeId, b: NodeId },
    Conv2d { x: NodeId, w: NodeId, b: NodeId, pad: usize },
    Relu(NodeId),
    MaxPool2 { x: NodeId, argmax: Vec<usize> },
    Reshape(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Square(NodeId),
    Log2(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Scale(NodeId, f64),
    Lstm(Box<LstmTrace>),
    UnitModulus(NodeId),
    PowerProject { x: NodeId, budget: f64 },
    Gains(Box<GainTrace>),
    SumRate { gains: NodeId, noise: Vec<f64> },
}

#[derive(Debug, Clone)]
struct LstmTrace {
    x: NodeId,
    h: NodeId,
    c: NodeId,
    wx: NodeId,
    wh: NodeId,
    b: NodeId,
    /// Activated gates `[i, f, g, o]`, each of width `hidden`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
struct GainTrace {
    v: Option<NodeId>,
    w: NodeId,
    source: GainSource,
    /// `r_k` with `a_kj = Σ_m r_km w_jm`.
    r: Vec<Vec<C64>>,
    /// `a_kj`, index `k * K + j`.
    a: Vec<C64>,
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(String, NodeId)>,
}

fn check_shape(context: &'static str, ok: bool, expected: impl std::fmt::Debug, actual: impl std::fmt::Debug) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::shape(context, expected, actual))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn acc(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn numel(&self, id: NodeId) -> usize {
        self.nodes[id.0].value.numel()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let tracked = inputs.iter().any(|i| self.nodes[i.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        NodeId(self.nodes.len() - 1)
    }

    /// Untracked input.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.nodes.push(Node { value: t, op: Op::Leaf, tracked: false });
        NodeId(self.nodes.len() - 1)
    }

    /// Tracked leaf whose gradient is reported under `name`.
    pub fn param(&mut self, name: &str, t: Tensor) -> NodeId {
        self.nodes.push(Node { value: t, op: Op::Leaf, tracked: true });
        let id = NodeId(self.nodes.len() - 1);
        self.params.push((name.to_string(), id));
        id
    }

    /// Binds every tensor of `params` as a tracked leaf.
    pub fn bind(&mut self, params: &ParameterSet) -> Vec<NodeId> {
        params.iter().map(|(name, t)| self.param(name, t.clone())).collect()
    }

    /// Looks up a bound parameter by name.
    pub fn param_id(&self, name: &str) -> Option<NodeId> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, id)| *id)
    }

    /// `W·x + b`, `W` of shape `[out, in]`; `x` is read flat.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let ws = self.shape(w);
        check_shape("linear (weight rank)", ws.len() == 2, "[out, in]", ws)?;
        let (out, inp) = (ws[0], ws[1]);
        check_shape("linear (input)", self.numel(x) == inp, inp, self.shape(x))?;
        check_shape("linear (bias)", self.numel(b) == out, out, self.shape(b))?;
        let xs = self.data(x);
        let wd = self.data(w);
        let mut y = self.data(b).to_vec();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &wd[o * inp..(o + 1) * inp];
            *yo += row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(self.push(Tensor::vector(y), Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// Stride-1 2D convolution with symmetric zero padding.
    /// `x: [C, H, W]`, `w: [F, C, KH, KW]`, `b: [F]` → `[F, H', W']`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, pad: usize) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        check_shape("conv2d (input rank)", xs.len() == 3, "[C, H, W]", &xs)?;
        check_shape("conv2d (filter rank)", ws.len() == 4, "[F, C, KH, KW]", &ws)?;
        let (c, h, wd) = (xs[0], xs[1], xs[2]);
        let (f, fc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        check_shape("conv2d (channels)", fc == c, c, fc)?;
        check_shape("conv2d (bias)", self.numel(b) == f, f, self.shape(b))?;
        let (hp, wp) = (h + 2 * pad, wd + 2 * pad);
        check_shape("conv2d (kernel larger than input)", hp >= kh && wp >= kw, (kh, kw), (hp, wp))?;
        let (ho, wo) = (hp - kh + 1, wp - kw + 1);
        let xd = self.data(x);
        let fd = self.data(w);
        let bd = self.data(b);
        let mut out = vec![0.0; f * ho * wo];
        for fi in 0..f {
            for i in 0..ho {
                for j in 0..wo {
                    let mut s = bd[fi];
                    for ci in 0..c {
                        for u in 0..kh {
                            let r = i + u;
                            if r < pad || r >= h + pad {
                                continue;
                            }
                            let xrow = ((ci * h) + (r - pad)) * wd;
                            let frow = ((fi * c + ci) * kh + u) * kw;
                            for v in 0..kw {
                                let col = j + v;
                                if col < pad || col >= wd + pad {
                                    continue;
                                }
                                s += fd[frow + v] * xd[xrow + col - pad];
                            }
                        }
                    }
                    out[(fi * ho + i) * wo + j] = s;
                }
            }
        }
        let t = Tensor::new(vec![f, ho, wo], out)?;
        Ok(self.push(t, Op::Conv2d { x, w, b, pad }, &[x, w, b]))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.max(0.0)).collect();
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        self.push(t, Op::Relu(x), &[x])
    }

    /// 2×2 max pooling with stride 2 over `[C, H, W]`. Odd trailing rows or
    /// columns form partial windows, so the output is `[C, ⌈H/2⌉, ⌈W/2⌉]`.
    pub fn maxpool2(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        check_shape("maxpool2 (rank)", xs.len() == 3, "[C, H, W]", &xs)?;
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
        let xd = self.data(x);
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ci in 0..c {
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for r in 2 * i..(2 * i + 2).min(h) {
                        for col in 2 * j..(2 * j + 2).min(w) {
                            let idx = (ci * h + r) * w + col;
                            if xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_idx);
                }
            }
        }
        let t = Tensor::new(vec![c, ho, wo], out)?;
        Ok(self.push(t, Op::MaxPool2 { x, argmax }, &[x]))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = self.value(x).reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    pub fn flatten(&mut self, x: NodeId) -> NodeId {
        let n = self.numel(x);
        self.reshape(x, &[n]).expect("flatten preserves size")
    }

    /// Flat concatenation.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut data = Vec::with_capacity(parts.iter().map(|p| self.numel(*p)).sum());
        for p in parts {
            data.extend_from_slice(self.data(*p));
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), parts)
    }

    /// `x[start..start + len]` of the flat input.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        check_shape("slice", start + len <= self.numel(x), self.numel(x), start + len)?;
        let data = self.data(x)[start..start + len].to_vec();
        Ok(self.push(Tensor::vector(data), Op::Slice { x, start }, &[x]))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, context: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        check_shape(context, self.shape(a) == self.shape(b), self.shape(a), self.shape(b))?;
        Ok(self.data(a).iter().zip(self.data(b)).map(|(x, y)| f(*x, *y)).collect())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let data = self.binary(a, b, "add", |x, y| x + y)?;
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let data = self.binary(a, b, "mul", |x, y| x * y)?;
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    fn unary(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let v = self.value(x);
        let t = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| f(*a)).collect()).expect("same shape");
        self.push(t, op, &[x])
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Square(x), |a| a * a)
    }

    pub fn log2(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Log2(x), f64::log2)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.unary(x, Op::Scale(x, c), |a| a * c)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.data(x).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let s = self.data(x).iter().sum::<f64>() / self.numel(x) as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// One LSTM step with gate order `[input, forget, cell, output]`.
    /// `w_x: [4H, in]`, `w_h: [4H, H]`, `b: [4H]`. Returns `(h', c')`.
    pub fn lstm_cell(
        &mut self,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        w_x: NodeId,
        w_h: NodeId,
        b: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let hidden = self.numel(h);
        let input = self.numel(x);
        check_shape("lstm_cell (cell state)", self.numel(c) == hidden, hidden, self.shape(c))?;
        check_shape("lstm_cell (w_x)", self.shape(w_x) == [4 * hidden, input], [4 * hidden, input], self.shape(w_x))?;
        check_shape("lstm_cell (w_h)", self.shape(w_h) == [4 * hidden, hidden], [4 * hidden, hidden], self.shape(w_h))?;
        check_shape("lstm_cell (bias)", self.numel(b) == 4 * hidden, 4 * hidden, self.shape(b))?;

        let xd = self.data(x);
        let hd = self.data(h);
        let wxd = self.data(w_x);
        let whd = self.data(w_h);
        let mut z = self.data(b).to_vec();
        for (r, zr) in z.iter_mut().enumerate() {
            let a: f64 = wxd[r * input..(r + 1) * input].iter().zip(xd).map(|(p, q)| p * q).sum();
            let bsum: f64 = whd[r * hidden..(r + 1) * hidden].iter().zip(hd).map(|(p, q)| p * q).sum();
            *zr += a + bsum;
        }
        let mut gates = z;
        for (r, g) in gates.iter_mut().enumerate() {
            *g = if (2 * hidden..3 * hidden).contains(&r) { g.tanh() } else { sigmoid(*g) };
        }
        let cd = self.data(c);
        let mut out = vec![0.0; 2 * hidden];
        let mut tanh_c = vec![0.0; hidden];
        for j in 0..hidden {
            let (i, f, g, o) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
            let c_new = f * cd[j] + i * g;
            tanh_c[j] = c_new.tanh();
            out[j] = o * tanh_c[j];
            out[hidden + j] = c_new;
        }
        let trace = LstmTrace { x, h, c, wx: w_x, wh: w_h, b, gates, tanh_c };
        let both = self.push(Tensor::vector(out), Op::Lstm(Box::new(trace)), &[x, h, c, w_x, w_h, b]);
        let h_new = self.slice(both, 0, hidden)?;
        let c_new = self.slice(both, hidden, hidden)?;
        Ok((h_new, c_new))
    }

    /// Entry-wise `z / |z|` over a `[re…, im…]` vector; (near-)zero entries
    /// become `1 + 0j` with zero gradient.
    pub fn unit_modulus(&mut self, x: NodeId) -> Result<NodeId> {
        let len = self.numel(x);
        check_shape("unit_modulus (even length)", len.is_multiple_of(2), "2N", len)?;
        let n = len / 2;
        let d = self.data(x);
        let mut out = vec![0.0; len];
        for i in 0..n {
            let (a, b) = (d[i], d[n + i]);
            let r = a.hypot(b);
            if r < 1e-12 {
                out[i] = 1.0;
            } else {
                out[i] = a / r;
                out[n + i] = b / r;
            }
        }
        Ok(self.push(Tensor::vector(out), Op::UnitModulus(x), &[x]))
    }

    /// Scales the flat input onto the ball `‖x‖² ≤ budget`.
    pub fn power_project(&mut self, x: NodeId, budget: f64) -> NodeId {
        let d = self.data(x);
        let p: f64 = d.iter().map(|v| v * v).sum();
        let out = if p > budget {
            let s = (budget / p).sqrt();
            d.iter().map(|v| v * s).collect()
        } else {
            d.to_vec()
        };
        self.push(Tensor::vector(out), Op::PowerProject { x, budget }, &[x])
    }

    /// Link gains `|a_kj|²` (flat, index `k·K + j`) where `a_kj` is the
    /// amplitude of stream `j` at user `k`:
    /// `vᵀ Hc_k w_j` for [`GainSource::Cascaded`] and `h_kᴴ w_j` for
    /// [`GainSource::Rows`]. `v` is `[re…, im…]` of length `2N`; `w` is
    /// `[re…, im…]` of the `M × K` precoder with column `j` stored at
    /// `j·M .. (j+1)·M`.
    pub fn gains(&mut self, v: Option<NodeId>, w: NodeId, source: GainSource) -> Result<NodeId> {
        let k_users = source.users();
        let r: Vec<Vec<C64>> = match (&source, v) {
            (GainSource::Cascaded(chans), Some(v)) => {
                let (n, _) = chans.first().map(CMatrix::shape).unwrap_or((0, 0));
                check_shape("gains (phase)", self.numel(v) == 2 * n, 2 * n, self.shape(v))?;
                let vd = self.data(v);
                let vc: Vec<C64> = (0..n).map(|i| C64::new(vd[i], vd[n + i])).collect();
                chans.iter().map(|h| h.tr_mul_vec(&vc)).collect()
            }
            (GainSource::Rows(rows), None) => rows.as_ref().clone(),
            _ => return Err(Error::shape("gains", "phase input iff cascaded source", v.is_some())),
        };
        let m = r.first().map_or(0, Vec::len);
        check_shape("gains (precoder)", self.numel(w) == 2 * m * k_users, 2 * m * k_users, self.shape(w))?;
        let wd = self.data(w);
        let mk = m * k_users;
        let mut a = vec![C64::new(0.0, 0.0); k_users * k_users];
        for k in 0..k_users {
            for j in 0..k_users {
                let mut s = C64::new(0.0, 0.0);
                for mi in 0..m {
                    let wj = C64::new(wd[j * m + mi], wd[mk + j * m + mi]);
                    s += r[k][mi] * wj;
                }
                a[k * k_users + j] = s;
            }
        }
        let g = a.iter().map(|z| z.norm_sqr()).collect();
        let trace = GainTrace { v, w, source, r, a };
        let inputs: Vec<NodeId> = v.into_iter().chain(Some(w)).collect();
        Ok(self.push(Tensor::vector(g), Op::Gains(Box::new(trace)), &inputs))
    }

    /// `Σ_k log2(1 + g_kk / (Σ_{j≠k} g_kj + σ_k²))` from flat `K × K` gains.
    pub fn sum_rate(&mut self, gains: NodeId, noise: &[f64]) -> Result<NodeId> {
        let k_users = noise.len();
        check_shape("sum_rate", self.numel(gains) == k_users * k_users, k_users * k_users, self.shape(gains))?;
        let g = self.data(gains);
        let mut rate = 0.0;
        for k in 0..k_users {
            let row = &g[k * k_users..(k + 1) * k_users];
            let interference: f64 = row.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| v).sum::<f64>() + noise[k];
            rate += (1.0 + row[k] / interference).log2();
        }
        Ok(self.push(Tensor::scalar(rate), Op::SumRate { gains, noise: noise.to_vec() }, &[gains]))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        check_shape("backward (loss must be scalar)", self.numel(loss) == 1, 1, self.shape(loss))?;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            let (lo, _) = grads.split_at_mut(i);
            self.backward_node(node, &g, lo);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracked
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let inp = self.numel(*x);
                let xd = self.data(*x);
                let wd = self.data(*w);
                if self.wants(*w) {
                    let gw = acc(&mut grads[w.0], wd.len());
                    for (o, go) in g.iter().enumerate() {
                        if *go != 0.0 {
                            for (gwi, xi) in gw[o * inp..(o + 1) * inp].iter_mut().zip(xd) {
                                *gwi += go * xi;
                            }
                        }
                    }
                }
                if self.wants(*b) {
                    let gb = acc(&mut grads[b.0], g.len());
                    for (a, v) in gb.iter_mut().zip(g) {
                        *a += v;
                    }
                }
                if self.wants(*x) {
                    let gx = acc(&mut grads[x.0], inp);
                    for (o, go) in g.iter().enumerate() {
                        if *go != 0.0 {
                            for (gxi, wi) in gx.iter_mut().zip(&wd[o * inp..(o + 1) * inp]) {
                                *gxi += go * wi;
                            }
                        }
                    }
                }
            }
            Op::Conv2d { x, w, b, pad } => self.conv2d_backward(*x, *w, *b, *pad, node.value.shape(), g, grads),
            Op::Relu(x) => {
                if self.wants(*x) {
                    let xd = self.data(*x);
                    let gx = acc(&mut grads[x.0], xd.len());
                    for ((a, v), xi) in gx.iter_mut().zip(g).zip(xd) {
                        if *xi > 0.0 {
                            *a += v;
                        }
                    }
                }
            }
            Op::MaxPool2 { x, argmax } => {
                if self.wants(*x) {
                    let gx = acc(&mut grads[x.0], self.numel(*x));
                    for (v, &idx) in g.iter().zip(argmax) {
                        gx[idx] += v;
                    }
                }
            }
            Op::Reshape(x) => {
                if self.wants(*x) {
                    let gx = acc(&mut grads[x.0], g.len());
                    for (a, v) in gx.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.numel(*p);
                    if self.wants(*p) {
                        let gp = acc(&mut grads[p.0], n);
                        for (a, v) in gp.iter_mut().zip(&g[off..off + n]) {
                            *a += v;
                        }
                    }
                    off += n;
                }
            }
            Op::Slice { x, start } => {
                if self.wants(*x) {
                    let gx = acc(&mut grads[x.0], self.numel(*x));
                    for (a, v) in gx[*start..*start + g.len()].iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            Op::Add(a, b) => {
                for id in [a, b] {
                    if self.wants(*id) {
                        let ga = acc(&mut grads[id.0], g.len());
                        for (s, v) in ga.iter_mut().zip(g) {
                            *s += v;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                for (id, other) in [(a, b), (b, a)] {
                    if self.wants(*id) {
                        let od = self.data(*other);
                        let ga = acc(&mut grads[id.0], g.len());
                        for ((s, v), o) in ga.iter_mut().zip(g).zip(od) {
                            *s += v * o;
                        }
                    }
                }
            }
            Op::Square(x) => {
                if self.wants(*x) {
                    let xd = self.data(*x);
                    let gx = acc(&mut grads[x.0], g.len());
                    for ((s, v), xi) in gx.iter_mut().zip(g).zip(xd) {
                        *s += 2.0 * xi * v;
                    }
                }
            }
            Op::Log2(x) => {
                if self.wants(*x) {
                    let xd = self.data(*x);
                    let gx = acc(&mut grads[x.0], g.len());
                    for ((s, v), xi) in gx.iter_mut().zip(g).zip(xd) {
                        *s += v / (xi * LN_2);
                    }
                }
            }
            Op::Sum(x) | Op::Mean(x) => {
                if self.wants(*x) {
                    let n = self.numel(*x);
                    let scale = if matches!(node.op, Op::Mean(_)) { g[0] / n as f64 } else { g[0] };
                    let gx = acc(&mut grads[x.0], n);
                    for s in gx.iter_mut() {
                        *s += scale;
                    }
                }
            }
            Op::Scale(x, c) => {
                if self.wants(*x) {
                    let gx = acc(&mut grads[x.0], g.len());
                    for (s, v) in gx.iter_mut().zip(g) {
                        *s += c * v;
                    }
                }
            }
            Op::Lstm(trace) => self.lstm_backward(trace, g, grads),
            Op::UnitModulus(x) => {
                if self.wants(*x) {
                    let d = self.data(*x);
                    let n = d.len() / 2;
                    let gx = acc(&mut grads[x.0], d.len());
                    for i in 0..n {
                        let (a, b) = (d[i], d[n + i]);
                        let r = a.hypot(b);
                        if r < 1e-12 {
                            continue;
                        }
                        let r3 = r * r * r;
                        let (ga, gb) = (g[i], g[n + i]);
                        gx[i] += (b * b * ga - a * b * gb) / r3;
                        gx[n + i] += (a * a * gb - a * b * ga) / r3;
                    }
                }
            }
            Op::PowerProject { x, budget } => {
                if self.wants(*x) {
                    let d = self.data(*x);
                    let p: f64 = d.iter().map(|v| v * v).sum();
                    let gx = acc(&mut grads[x.0], d.len());
                    if p > *budget {
                        let s = (budget / p).sqrt();
                        let dot: f64 = d.iter().zip(g).map(|(a, b)| a * b).sum();
                        for ((o, gi), xi) in gx.iter_mut().zip(g).zip(d) {
                            *o += s * (gi - xi * dot / p);
                        }
                    } else {
                        for (o, gi) in gx.iter_mut().zip(g) {
                            *o += gi;
                        }
                    }
                }
            }
            Op::Gains(trace) => self.gains_backward(trace, g, grads),
            Op::SumRate { gains, noise } => {
                if self.wants(*gains) {
                    let k_users = noise.len();
                    let gd = self.data(*gains);
                    let out = acc(&mut grads[gains.0], gd.len());
                    for k in 0..k_users {
                        let row = &gd[k * k_users..(k + 1) * k_users];
                        let total: f64 = row.iter().sum::<f64>() + noise[k];
                        let interference = total - row[k];
                        let d_signal = 1.0 / (LN_2 * total);
                        let d_interf = -row[k] / (LN_2 * total * interference);
                        for j in 0..k_users {
                            out[k * k_users + j] += g[0] * if j == k { d_signal } else { d_interf };
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv2d_backward(
        &self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        pad: usize,
        out_shape: &[usize],
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let (c, h, wd) = (xs[0], xs[1], xs[2]);
        let (f, kh, kw) = (ws[0], ws[2], ws[3]);
        let (ho, wo) = (out_shape[1], out_shape[2]);
        let xd = self.data(x);
        let fd = self.data(w);
        if self.wants(b) {
            let gb = acc(&mut grads[b.0], f);
            for fi in 0..f {
                gb[fi] += g[fi * ho * wo..(fi + 1) * ho * wo].iter().sum::<f64>();
            }
        }
        let want_w = self.wants(w);
        let want_x = self.wants(x);
        if !want_w && !want_x {
            return;
        }
        let mut gw = if want_w { Some(vec![0.0; fd.len()]) } else { None };
        let mut gx = if want_x { Some(vec![0.0; xd.len()]) } else { None };
        for fi in 0..f {
            for i in 0..ho {
                for j in 0..wo {
                    let go = g[(fi * ho + i) * wo + j];
                    if go == 0.0 {
                        continue;
                    }
                    for ci in 0..c {
                        for u in 0..kh {
                            let r = i + u;
                            if r < pad || r >= h + pad {
                                continue;
                            }
                            let xrow = ((ci * h) + (r - pad)) * wd;
                            let frow = ((fi * c + ci) * kh + u) * kw;
                            for v in 0..kw {
                                let col = j + v;
                                if col < pad || col >= wd + pad {
                                    continue;
                                }
                                if let Some(gw) = gw.as_mut() {
                                    gw[frow + v] += go * xd[xrow + col - pad];
                                }
                                if let Some(gx) = gx.as_mut() {
                                    gx[xrow + col - pad] += go * fd[frow + v];
                                }
                            }
                        }
                    }
                }
            }
        }
        if let Some(local) = gw {
            let slot = acc(&mut grads[w.0], local.len());
            for (a, v) in slot.iter_mut().zip(local) {
                *a += v;
            }
        }
        if let Some(local) = gx {
            let slot = acc(&mut grads[x.0], local.len());
            for (a, v) in slot.iter_mut().zip(local) {
                *a += v;
            }
        }
    }

    fn lstm_backward(&self, t: &LstmTrace, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let hidden = t.tanh_c.len();
        let input = self.numel(t.x);
        let cd = self.data(t.c);
        let gates = &t.gates;
        let mut dz = vec![0.0; 4 * hidden];
        let mut dc_prev = vec![0.0; hidden];
        for j in 0..hidden {
            let (i, f, gg, o) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
            let tc = t.tanh_c[j];
            let gh = g[j];
            let dc = g[hidden + j] + gh * o * (1.0 - tc * tc);
            dz[j] = dc * gg * i * (1.0 - i);
            dz[hidden + j] = dc * cd[j] * f * (1.0 - f);
            dz[2 * hidden + j] = dc * i * (1.0 - gg * gg);
            dz[3 * hidden + j] = gh * tc * o * (1.0 - o);
            dc_prev[j] = dc * f;
        }
        if self.wants(t.c) {
            let gc = acc(&mut grads[t.c.0], hidden);
            for (a, v) in gc.iter_mut().zip(&dc_prev) {
                *a += v;
            }
        }
        if self.wants(t.b) {
            let gb = acc(&mut grads[t.b.0], 4 * hidden);
            for (a, v) in gb.iter_mut().zip(&dz) {
                *a += v;
            }
        }
        for (src, w, width) in [(t.x, t.wx, input), (t.h, t.wh, hidden)] {
            let sd = self.data(src);
            let wd = self.data(w);
            if self.wants(w) {
                let gw = acc(&mut grads[w.0], wd.len());
                for (r, dzr) in dz.iter().enumerate() {
                    if *dzr != 0.0 {
                        for (a, s) in gw[r * width..(r + 1) * width].iter_mut().zip(sd) {
                            *a += dzr * s;
                        }
                    }
                }
            }
            if self.wants(src) {
                let gs = acc(&mut grads[src.0], width);
                for (r, dzr) in dz.iter().enumerate() {
                    if *dzr != 0.0 {
                        for (a, wv) in gs.iter_mut().zip(&wd[r * width..(r + 1) * width]) {
                            *a += dzr * wv;
                        }
                    }
                }
            }
        }
    }

    fn gains_backward(&self, t: &GainTrace, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let k_users = t.r.len();
        let m = t.r.first().map_or(0, Vec::len);
        let mk = m * k_users;
        // coef_kj = (∂L/∂g_kj) · conj(a_kj); each |a|² contributes 2·Re(coef · ∂a).
        let coef: Vec<C64> = t.a.iter().zip(g).map(|(a, gi)| a.conj() * *gi).collect();
        if self.wants(t.w) {
            let gw = acc(&mut grads[t.w.0], 2 * mk);
            for j in 0..k_users {
                for mi in 0..m {
                    let mut s = C64::new(0.0, 0.0);
                    for k in 0..k_users {
                        s += coef[k * k_users + j] * t.r[k][mi];
                    }
                    gw[j * m + mi] += 2.0 * s.re;
                    gw[mk + j * m + mi] -= 2.0 * s.im;
                }
            }
        }
        if let (Some(v), GainSource::Cascaded(chans)) = (t.v, &t.source) {
            if self.wants(v) {
                let wd = self.data(t.w);
                let n = self.numel(v) / 2;
                let mut u = vec![C64::new(0.0, 0.0); n];
                for (k, h) in chans.iter().enumerate() {
                    let mut z = vec![C64::new(0.0, 0.0); m];
                    for j in 0..k_users {
                        let c = coef[k * k_users + j];
                        for (mi, zm) in z.iter_mut().enumerate() {
                            *zm += c * C64::new(wd[j * m + mi], wd[mk + j * m + mi]);
                        }
                    }
                    for (un, hz) in u.iter_mut().zip(h.mul_vec(&z)) {
                        *un += hz;
                    }
                }
                let gv = acc(&mut grads[v.0], 2 * n);
                for (i, un) in u.iter().enumerate() {
                    gv[i] += 2.0 * un.re;
                    gv[n + i] -= 2.0 * un.im;
                }
            }
        }
    }

    /// Collects the gradients of every bound parameter (zeros for unused
    /// ones) into a [`ParameterSet`].
    pub fn param_grads(&self, grads: &Gradients) -> ParameterSet {
        let mut out = ParameterSet::new();
        for (name, id) in &self.params {
            let shape = self.shape(*id).to_vec();
            let data = grads.wrt(*id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; self.numel(*id)]);
            // names are unique by construction of the bound set
            let _ = out.insert(name.clone(), Tensor::new(shape, data).expect("shape of leaf"));
        }
        out
    }
}
