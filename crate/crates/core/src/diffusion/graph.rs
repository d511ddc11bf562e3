//! Tape-based reverse-mode differentiation for the handful of operations
//! the toy denoiser needs.
//!
//! A [`Graph`] is rebuilt for every forward pass. Parameter leaves are
//! marked trainable or frozen; gradients are only propagated into subgraphs
//! that reach a trainable leaf, and only trainable parameters receive
//! gradients.

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    /// Same-padded stride-1 convolution; kernel side is odd.
    Conv2d { x: Var, w: Var, b: Var },
    Add(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    Concat(Vec<Var>),
    /// `x[c, :, :] + bias[c]`.
    AddChannelBias { x: Var, bias: Var },
    /// `W x + b` for vectors.
    Linear { x: Var, w: Var, b: Var },
    /// Mean of selected rows of an embedding table.
    EmbedMean { table: Var, ids: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-parameter gradients, indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Grads {
    pub(crate) slots: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn new(n: usize) -> Self {
        Self { slots: vec![None; n] }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots.get(id.0).and_then(|s| s.as_ref())
    }

    fn accumulate(&mut self, id: ParamId, g: Tensor) {
        match &mut self.slots[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    pub fn merge(&mut self, other: Grads) {
        for (i, g) in other.slots.into_iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.slots.iter_mut().flatten() {
            for v in &mut g.data {
                *v *= s;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.slots
            .iter()
            .flatten()
            .flat_map(|g| g.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Unfolds `x` into rows of length `h·w`, one per `(input channel, ky, kx)`.
fn im2col(x: &Tensor, k: usize) -> Vec<f64> {
    let (ci, h, wd) = x.chw();
    let hw = h * wd;
    let pad = (k / 2) as isize;
    let mut cols = vec![0.0; ci * k * k * hw];
    for i in 0..ci {
        let src = &x.data[i * hw..(i + 1) * hw];
        for ky in 0..k {
            let dy = ky as isize - pad;
            for kx in 0..k {
                let dx = kx as isize - pad;
                let row = &mut cols[((i * k + ky) * k + kx) * hw..][..hw];
                let x0 = (-dx).max(0) as usize;
                let x1 = (wd as isize - dx).min(wd as isize) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    for xx in x0..x1 {
                        row[y * wd + xx] = src[sy * wd + (xx as isize + dx) as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im(cols: &[f64], ci: usize, h: usize, wd: usize, k: usize) -> Vec<f64> {
    let hw = h * wd;
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; ci * hw];
    for i in 0..ci {
        let dst = &mut out[i * hw..(i + 1) * hw];
        for ky in 0..k {
            let dy = ky as isize - pad;
            for kx in 0..k {
                let dx = kx as isize - pad;
                let row = &cols[((i * k + ky) * k + kx) * hw..][..hw];
                let x0 = (-dx).max(0) as usize;
                let x1 = (wd as isize - dx).min(wd as isize) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    for xx in x0..x1 {
                        dst[sy * wd + (xx as isize + dx) as usize] += row[y * wd + xx];
                    }
                }
            }
        }
    }
    out
}

fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (ci, h, wd) = x.chw();
    let (co, wci, k) = (w.shape[0], w.shape[1], w.shape[2]);
    assert_eq!(ci, wci, "conv input channels");
    let hw = h * wd;
    let r = ci * k * k;
    let cols = if k == 1 { x.data.clone() } else { im2col(x, k) };
    let mut out = vec![0.0; co * hw];
    for o in 0..co {
        let plane = &mut out[o * hw..(o + 1) * hw];
        plane.iter_mut().for_each(|v| *v = b.data[o]);
        for (j, &wv) in w.data[o * r..(o + 1) * r].iter().enumerate() {
            if wv == 0.0 {
                continue;
            }
            for (p, c) in plane.iter_mut().zip(&cols[j * hw..(j + 1) * hw]) {
                *p += wv * c;
            }
        }
    }
    Tensor::new(vec![co, h, wd], out)
}

/// Returns `(dx, dw, db)`; weight gradients are skipped when not needed.
fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dout: &Tensor,
    want_dx: bool,
    want_dw: bool,
) -> (Option<Tensor>, Option<Tensor>, Option<Tensor>) {
    let (ci, h, wd) = x.chw();
    let (co, k) = (w.shape[0], w.shape[2]);
    let hw = h * wd;
    let r = ci * k * k;
    let dw = want_dw.then(|| {
        let cols = if k == 1 { x.data.clone() } else { im2col(x, k) };
        let mut dw = vec![0.0; w.len()];
        for o in 0..co {
            let g = &dout.data[o * hw..(o + 1) * hw];
            for j in 0..r {
                dw[o * r + j] = g.iter().zip(&cols[j * hw..(j + 1) * hw]).map(|(a, b)| a * b).sum();
            }
        }
        Tensor::new(w.shape.clone(), dw)
    });
    let dx = want_dx.then(|| {
        let mut dcols = vec![0.0; r * hw];
        for o in 0..co {
            let g = &dout.data[o * hw..(o + 1) * hw];
            for j in 0..r {
                let wv = w.data[o * r + j];
                if wv == 0.0 {
                    continue;
                }
                for (d, gv) in dcols[j * hw..(j + 1) * hw].iter_mut().zip(g) {
                    *d += wv * gv;
                }
            }
        }
        let data = if k == 1 { dcols } else { col2im(&dcols, ci, h, wd, k) };
        Tensor::new(vec![ci, h, wd], data)
    });
    let db = want_dw.then(|| {
        let data = (0..co).map(|o| dout.data[o * hw..(o + 1) * hw].iter().sum()).collect();
        Tensor::new(vec![co], data)
    });
    (dx, dw, db)
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input, false)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId, trainable: bool) -> Var {
        self.push(store.get(id).clone(), Op::Param(id), trainable)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Var {
        let out = conv2d_forward(self.value(x), self.value(w), self.value(b));
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(out, Op::Conv2d { x, w, b }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scaled(s);
        let ng = self.needs(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::new(x.shape.clone(), x.data.iter().map(|&v| v * sigmoid(v)).collect());
        let ng = self.needs(a);
        self.push(out, Op::Silu(a), ng)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let refs: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_channels(&refs);
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(out, Op::Concat(parts.to_vec()), ng)
    }

    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Var {
        let (c, h, w) = self.value(x).chw();
        let bv = self.value(bias);
        assert_eq!(bv.len(), c);
        let mut out = self.value(x).clone();
        for ch in 0..c {
            let b = bv.data[ch];
            out.data[ch * h * w..(ch + 1) * h * w].iter_mut().for_each(|v| *v += b);
        }
        let ng = self.needs(x) || self.needs(bias);
        self.push(out, Op::AddChannelBias { x, bias }, ng)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (m, n) = (wv.shape[0], wv.shape[1]);
        assert_eq!(xv.len(), n);
        let out = (0..m)
            .map(|r| bv.data[r] + (0..n).map(|c| wv.data[r * n + c] * xv.data[c]).sum::<f64>())
            .collect();
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(Tensor::new(vec![m], out), Op::Linear { x, w, b }, ng)
    }

    pub fn embed_mean(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let d = t.shape[1];
        let mut out = vec![0.0; d];
        for &id in ids {
            for (o, v) in out.iter_mut().zip(&t.data[id * d..(id + 1) * d]) {
                *o += v / ids.len() as f64;
            }
        }
        let ng = self.needs(table);
        self.push(Tensor::new(vec![d], out), Op::EmbedMean { table, ids: ids.to_vec() }, ng)
    }

    /// Back-propagates `seed` (the gradient of the objective w.r.t. `root`)
    /// and returns gradients for every trainable parameter that was reached.
    pub fn backward(&self, root: Var, seed: Tensor, num_params: usize) -> Grads {
        let mut grads = Grads::new(num_params);
        if !self.needs(root) {
            return grads;
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[root.0] = Some(seed);
        let acc = |adj: &mut Vec<Option<Tensor>>, v: Var, g: Tensor| match &mut adj[v.0] {
            Some(a) => a.add_assign(&g),
            slot @ None => *slot = Some(g),
        };
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => grads.accumulate(*id, g),
                Op::Conv2d { x, w, b } => {
                    let want_w = self.needs(*w) || self.needs(*b);
                    let (dx, dw, db) =
                        conv2d_backward(self.value(*x), self.value(*w), &g, self.needs(*x), want_w);
                    if let (Some(d), true) = (dx, self.needs(*x)) {
                        acc(&mut adj, *x, d);
                    }
                    if let (Some(d), true) = (dw, self.needs(*w)) {
                        acc(&mut adj, *w, d);
                    }
                    if let (Some(d), true) = (db, self.needs(*b)) {
                        acc(&mut adj, *b, d);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        acc(&mut adj, *b, g.clone());
                    }
                    if self.needs(*a) {
                        acc(&mut adj, *a, g);
                    }
                }
                Op::Scale(a, s) => acc(&mut adj, *a, g.scaled(*s)),
                Op::Silu(a) => {
                    let x = self.value(*a);
                    let data = x
                        .data
                        .iter()
                        .zip(&g.data)
                        .map(|(&v, &gv)| {
                            let s = sigmoid(v);
                            gv * (s + v * s * (1.0 - s))
                        })
                        .collect();
                    acc(&mut adj, *a, Tensor::new(x.shape.clone(), data));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        if self.needs(*p) {
                            let shape = self.value(*p).shape.clone();
                            acc(&mut adj, *p, Tensor::new(shape, g.data[offset..offset + n].to_vec()));
                        }
                        offset += n;
                    }
                }
                Op::AddChannelBias { x, bias } => {
                    if self.needs(*bias) {
                        let (c, h, w) = g.chw();
                        let db = (0..c).map(|ch| g.data[ch * h * w..(ch + 1) * h * w].iter().sum()).collect();
                        acc(&mut adj, *bias, Tensor::new(vec![c], db));
                    }
                    if self.needs(*x) {
                        acc(&mut adj, *x, g);
                    }
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (m, n) = (wv.shape[0], wv.shape[1]);
                    if self.needs(*x) {
                        let dx = (0..n).map(|c| (0..m).map(|r| wv.data[r * n + c] * g.data[r]).sum()).collect();
                        acc(&mut adj, *x, Tensor::new(vec![n], dx));
                    }
                    if self.needs(*w) {
                        let dw = (0..m * n).map(|i| g.data[i / n] * xv.data[i % n]).collect();
                        acc(&mut adj, *w, Tensor::new(vec![m, n], dw));
                    }
                    if self.needs(*b) {
                        acc(&mut adj, *b, g);
                    }
                }
                Op::EmbedMean { table, ids } => {
                    let t = self.value(*table);
                    let d = t.shape[1];
                    let mut dt = Tensor::zeros(&t.shape);
                    for &id in ids {
                        for j in 0..d {
                            dt.data[id * d + j] += g.data[j] / ids.len() as f64;
                        }
                    }
                    acc(&mut adj, *table, dt);
                }
            }
        }
        grads
    }
}
