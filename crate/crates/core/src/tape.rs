// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reverse-mode automatic differentiation over flat `f64` buffers.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! Calling [`Graph::backward`] on a scalar node walks the tape in reverse and
//! accumulates gradients for every node that transitively depends on a
//! parameter leaf. Constant leaves and frozen weight matrices never receive a
//! gradient buffer, which is what the frozen-backbone checks rely on.
//!
//! Tensors carry no shape of their own. Callers pass the dimensions needed by
//! each operation, images use row-major `(y, x, channel)` layout and matrices
//! are row-major `rows x cols`.

use std::sync::Arc;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Affine { x: Var, scale: f64 },
    Sigmoid(Var),
    Tanh(Var),
    Sqrt(Var),
    MulScalar { x: Var, s: Var },
    DivScalar { x: Var, s: Var },
    Sum(Var),
    Dot(Var, Var),
    Norm(Var),
    MatVec { w: Var, x: Var, rows: usize, cols: usize },
    FrozenMatVec { w: Arc<[f64]>, x: Var, cols: usize },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    MeanRows { x: Var, rows: usize, cols: usize },
    Shift2d { x: Var, geom: ImageGeom, dx: f64, dy: f64 },
    AvgPool { x: Var, geom: ImageGeom, k: usize },
    RepeatChannels { x: Var, channels: usize },
}

/// Height, width and channel count of an image-shaped buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageGeom {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageGeom {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

/// Operation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`, or `None` when `v` does not
    /// depend on any parameter leaf.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Like [`Gradients::get`] but materialises zeros for parameters the root
    /// does not depend on.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len])
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bilinear taps for sampling position `x - shift` on an axis of length `n`.
/// Returns `(index, weight)` pairs with out-of-range taps dropped.
fn axis_taps(pos: usize, shift: f64, n: usize) -> [(usize, f64); 2] {
    let src = pos as f64 - shift;
    let base = src.floor();
    let frac = src - base;
    let i0 = base as i64;
    let mut taps = [(usize::MAX, 0.0); 2];
    if i0 >= 0 && (i0 as usize) < n {
        taps[0] = (i0 as usize, 1.0 - frac);
    }
    let i1 = i0 + 1;
    if frac != 0.0 && i1 >= 0 && (i1 as usize) < n {
        taps[1] = (i1 as usize, frac);
    }
    taps
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

    fn push(&mut self, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.constant(vec![value])
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "node {} is not a scalar", v.0);
        val[0]
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.ng(v)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "elementwise length mismatch");
        let value = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(value, op, ng)
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let ng = self.ng(x);
        self.push(value, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.map(x, |v| scale * v + shift, Op::Affine { x, scale })
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.map(x, f64::sqrt, Op::Sqrt(x))
    }

    /// Vector times a scalar node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let value = self.value(x).iter().map(|&v| v * sv).collect();
        let ng = self.ng(x) || self.ng(s);
        self.push(value, Op::MulScalar { x, s }, ng)
    }

    /// Vector divided by a scalar node.
    pub fn div_scalar(&mut self, x: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let value = self.value(x).iter().map(|&v| v / sv).collect();
        let ng = self.ng(x) || self.ng(s);
        self.push(value, Op::DivScalar { x, s }, ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        let ng = self.ng(x);
        self.push(vec![total], Op::Sum(x), ng)
    }

    /// Sum of a list of same-length nodes, accumulated left to right.
    pub fn add_all(&mut self, terms: &[Var]) -> Var {
        assert!(!terms.is_empty(), "add_all needs at least one term");
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t);
        }
        acc
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.len(), vb.len(), "dot length mismatch");
        let d = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        let ng = self.ng(a) || self.ng(b);
        self.push(vec![d], Op::Dot(a, b), ng)
    }

    /// Euclidean norm. The gradient at the origin is taken to be zero.
    pub fn norm(&mut self, x: Var) -> Var {
        let n = self.value(x).iter().map(|v| v * v).sum::<f64>().sqrt();
        let ng = self.ng(x);
        self.push(vec![n], Op::Norm(x), ng)
    }

    /// `W x` for a trainable (or at least graph-resident) `rows x cols` matrix.
    pub fn matvec(&mut self, w: Var, x: Var, rows: usize, cols: usize) -> Var {
        let (wv, xv) = (self.value(w), self.value(x));
        assert_eq!(wv.len(), rows * cols, "matvec weight size");
        assert_eq!(xv.len(), cols, "matvec input size");
        let value = wv.chunks_exact(cols).map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum()).collect();
        let ng = self.ng(w) || self.ng(x);
        self.push(value, Op::MatVec { w, x, rows, cols }, ng)
    }

    /// `W x` for a frozen matrix held outside the graph.
    pub fn frozen_matvec(&mut self, w: &Arc<[f64]>, x: Var, rows: usize, cols: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(w.len(), rows * cols, "frozen matvec weight size");
        assert_eq!(xv.len(), cols, "frozen matvec input size");
        let value = w.chunks_exact(cols).map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum()).collect();
        let ng = self.ng(x);
        self.push(value, Op::FrozenMatVec { w: Arc::clone(w), x, cols }, ng)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::new();
        for &p in parts {
            value.extend_from_slice(self.value(p));
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(value, Op::Concat(parts.to_vec()), ng)
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x)[start..start + len].to_vec();
        let ng = self.ng(x);
        self.push(value, Op::Slice { x, start }, ng)
    }

    /// Column-wise mean of a `rows x cols` matrix.
    pub fn mean_rows(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), rows * cols, "mean_rows size");
        let mut value = vec![0.0; cols];
        for row in xv.chunks_exact(cols) {
            for (acc, v) in value.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let inv = 1.0 / rows as f64;
        value.iter_mut().for_each(|v| *v *= inv);
        let ng = self.ng(x);
        self.push(value, Op::MeanRows { x, rows, cols }, ng)
    }

    /// Translate an image by `(dx, dy)` pixels with bilinear sampling and
    /// zero padding. Content at `(x, y)` moves to `(x + dx, y + dy)`.
    pub fn shift2d(&mut self, x: Var, geom: ImageGeom, dx: f64, dy: f64) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), geom.len(), "shift2d size");
        let mut value = vec![0.0; geom.len()];
        let c = geom.channels;
        for oy in 0..geom.height {
            let ty = axis_taps(oy, dy, geom.height);
            for ox in 0..geom.width {
                let tx = axis_taps(ox, dx, geom.width);
                let out = &mut value[(oy * geom.width + ox) * c..][..c];
                for &(iy, wy) in &ty {
                    if iy == usize::MAX {
                        continue;
                    }
                    for &(ix, wx) in &tx {
                        if ix == usize::MAX {
                            continue;
                        }
                        let wgt = wy * wx;
                        let src = &xv[(iy * geom.width + ix) * c..][..c];
                        for (o, s) in out.iter_mut().zip(src) {
                            *o += wgt * s;
                        }
                    }
                }
            }
        }
        let ng = self.ng(x);
        self.push(value, Op::Shift2d { x, geom, dx, dy }, ng)
    }

    /// Non-overlapping `k x k` average pooling. Height and width must be
    /// divisible by `k`.
    pub fn avg_pool(&mut self, x: Var, geom: ImageGeom, k: usize) -> Var {
        assert!(k > 0 && geom.height % k == 0 && geom.width % k == 0, "avg_pool geometry");
        let xv = self.value(x);
        assert_eq!(xv.len(), geom.len(), "avg_pool size");
        let (ph, pw, c) = (geom.height / k, geom.width / k, geom.channels);
        let mut value = vec![0.0; ph * pw * c];
        let inv = 1.0 / (k * k) as f64;
        for y in 0..geom.height {
            for x_ in 0..geom.width {
                let dst = ((y / k) * pw + x_ / k) * c;
                let src = (y * geom.width + x_) * c;
                for ch in 0..c {
                    value[dst + ch] += xv[src + ch] * inv;
                }
            }
        }
        let ng = self.ng(x);
        self.push(value, Op::AvgPool { x, geom, k }, ng)
    }

    /// Repeat each entry `channels` times, turning a single-channel map into
    /// an interleaved multi-channel one.
    pub fn repeat_channels(&mut self, x: Var, channels: usize) -> Var {
        let value = self.value(x).iter().flat_map(|&v| std::iter::repeat_n(v, channels)).collect();
        let ng = self.ng(x);
        self.push(value, Op::RepeatChannels { x, channels }, ng)
    }

    /// Reverse pass from a scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        if !self.ng(root) {
            return Gradients { grads };
        }
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.ng(v) {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| -> &[f64] { &self.nodes[v.0].value };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(t) = self.acc(grads, v) {
                        t.iter_mut().zip(g).for_each(|(t, g)| *t += g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(t) = self.acc(grads, *a) {
                    t.iter_mut().zip(g).for_each(|(t, g)| *t += g);
                }
                if let Some(t) = self.acc(grads, *b) {
                    t.iter_mut().zip(g).for_each(|(t, g)| *t -= g);
                }
            }
            Op::Mul(a, b) => {
                if let Some(t) = self.acc(grads, *a) {
                    for ((t, g), y) in t.iter_mut().zip(g).zip(val(*b)) {
                        *t += g * y;
                    }
                }
                if let Some(t) = self.acc(grads, *b) {
                    for ((t, g), x) in t.iter_mut().zip(g).zip(val(*a)) {
                        *t += g * x;
                    }
                }
            }
            Op::Div(a, b) => {
                if let Some(t) = self.acc(grads, *a) {
                    for ((t, g), y) in t.iter_mut().zip(g).zip(val(*b)) {
                        *t += g / y;
                    }
                }
                if let Some(t) = self.acc(grads, *b) {
                    for (((t, g), x), y) in t.iter_mut().zip(g).zip(val(*a)).zip(val(*b)) {
                        *t -= g * x / (y * y);
                    }
                }
            }
            Op::Affine { x, scale } => {
                if let Some(t) = self.acc(grads, *x) {
                    t.iter_mut().zip(g).for_each(|(t, g)| *t += scale * g);
                }
            }
            Op::Sigmoid(x) => {
                if let Some(t) = self.acc(grads, *x) {
                    for ((t, g), y) in t.iter_mut().zip(g).zip(&node.value) {
                        *t += g * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(t) = self.acc(grads, *x) {
                    for ((t, g), y) in t.iter_mut().zip(g).zip(&node.value) {
                        *t += g * (1.0 - y * y);
                    }
                }
            }
            Op::Sqrt(x) => {
                if let Some(t) = self.acc(grads, *x) {
                    for ((t, g), y) in t.iter_mut().zip(g).zip(&node.value) {
                        if *y > 0.0 {
                            *t += g * 0.5 / y;
                        }
                    }
                }
            }
            Op::MulScalar { x, s } => {
                let sv = val(*s)[0];
                if let Some(t) = self.acc(grads, *x) {
                    t.iter_mut().zip(g).for_each(|(t, g)| *t += g * sv);
                }
                if self.ng(*s) {
                    let d: f64 = g.iter().zip(val(*x)).map(|(g, x)| g * x).sum();
                    if let Some(t) = self.acc(grads, *s) {
                        t[0] += d;
                    }
                }
            }
            Op::DivScalar { x, s } => {
                let sv = val(*s)[0];
                if let Some(t) = self.acc(grads, *x) {
                    t.iter_mut().zip(g).for_each(|(t, g)| *t += g / sv);
                }
                if self.ng(*s) {
                    let d: f64 = g.iter().zip(val(*x)).map(|(g, x)| g * x).sum();
                    if let Some(t) = self.acc(grads, *s) {
                        t[0] -= d / (sv * sv);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(t) = self.acc(grads, *x) {
                    t.iter_mut().for_each(|t| *t += g[0]);
                }
            }
            Op::Dot(a, b) => {
                if let Some(t) = self.acc(grads, *a) {
                    t.iter_mut().zip(val(*b)).for_each(|(t, y)| *t += g[0] * y);
                }
                if let Some(t) = self.acc(grads, *b) {
                    t.iter_mut().zip(val(*a)).for_each(|(t, x)| *t += g[0] * x);
                }
            }
            Op::Norm(x) => {
                let n = node.value[0];
                if n > 0.0 {
                    if let Some(t) = self.acc(grads, *x) {
                        t.iter_mut().zip(val(*x)).for_each(|(t, x)| *t += g[0] * x / n);
                    }
                }
            }
            Op::MatVec { w, x, rows, cols } => {
                let (wv, xv) = (val(*w), val(*x));
                if let Some(t) = self.acc(grads, *w) {
                    for r in 0..*rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        t[r * cols..(r + 1) * cols].iter_mut().zip(xv).for_each(|(t, x)| *t += gr * x);
                    }
                }
                if let Some(t) = self.acc(grads, *x) {
                    for (row, gr) in wv.chunks_exact(*cols).zip(g) {
                        t.iter_mut().zip(row).for_each(|(t, w)| *t += gr * w);
                    }
                }
            }
            Op::FrozenMatVec { w, x, cols, .. } => {
                if let Some(t) = self.acc(grads, *x) {
                    for (row, gr) in w.chunks_exact(*cols).zip(g) {
                        t.iter_mut().zip(row).for_each(|(t, w)| *t += gr * w);
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    if let Some(t) = self.acc(grads, p) {
                        t.iter_mut().zip(&g[offset..offset + len]).for_each(|(t, g)| *t += g);
                    }
                    offset += len;
                }
            }
            Op::Slice { x, start } => {
                if let Some(t) = self.acc(grads, *x) {
                    t[*start..*start + g.len()].iter_mut().zip(g).for_each(|(t, g)| *t += g);
                }
            }
            Op::MeanRows { x, rows, cols } => {
                let inv = 1.0 / *rows as f64;
                if let Some(t) = self.acc(grads, *x) {
                    for row in t.chunks_exact_mut(*cols) {
                        row.iter_mut().zip(g).for_each(|(t, g)| *t += g * inv);
                    }
                }
            }
            Op::Shift2d { x, geom, dx, dy } => {
                if let Some(t) = self.acc(grads, *x) {
                    let c = geom.channels;
                    for oy in 0..geom.height {
                        let ty = axis_taps(oy, *dy, geom.height);
                        for ox in 0..geom.width {
                            let tx = axis_taps(ox, *dx, geom.width);
                            let go = &g[(oy * geom.width + ox) * c..][..c];
                            for &(iy, wy) in &ty {
                                if iy == usize::MAX {
                                    continue;
                                }
                                for &(ix, wx) in &tx {
                                    if ix == usize::MAX {
                                        continue;
                                    }
                                    let wgt = wy * wx;
                                    let dst = &mut t[(iy * geom.width + ix) * c..][..c];
                                    dst.iter_mut().zip(go).for_each(|(d, g)| *d += wgt * g);
                                }
                            }
                        }
                    }
                }
            }
            Op::AvgPool { x, geom, k } => {
                if let Some(t) = self.acc(grads, *x) {
                    let (pw, c) = (geom.width / k, geom.channels);
                    let inv = 1.0 / (k * k) as f64;
                    for y in 0..geom.height {
                        for x_ in 0..geom.width {
                            let src = ((y / k) * pw + x_ / k) * c;
                            let dst = (y * geom.width + x_) * c;
                            for ch in 0..c {
                                t[dst + ch] += g[src + ch] * inv;
                            }
                        }
                    }
                }
            }
            Op::RepeatChannels { x, channels } => {
                if let Some(t) = self.acc(grads, *x) {
                    for (t, chunk) in t.iter_mut().zip(g.chunks_exact(*channels)) {
                        *t += chunk.iter().sum::<f64>();
                    }
                }
            }
        }
    }
}
