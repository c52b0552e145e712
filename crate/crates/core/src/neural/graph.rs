//! Reverse-mode automatic differentiation on an append-only graph.
//!
//! Values are computed eagerly when a node is added. [`Graph::grad`] emits
//! the backward pass as new nodes built from the same op family, so
//! gradients are themselves differentiable (needed for the gradient
//! penalty, which differentiates through a gradient norm).

use crate::error::{Error, Result};

use super::kernels::{self, ConvGeom};
use super::tensor::{fmt_shape, Shape, Tensor4};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div0(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sqrt(Var),
    BroadcastTo(Var),
    SumTo(Var),
    Reshape(Var),
    LeakyRelu(Var, f64),
    // g * leaky'(x); carries no gradient into x.
    LeakyMask(Var, Var, f64),
    MatMul(Var, Var, bool, bool),
    Conv(Var, Var, ConvGeom),
    ConvT(Var, Var, ConvGeom),
    ConvW(Var, Var, ConvGeom),
    Slice(Var, usize, usize),
    Pad(Var, usize, usize),
    Concat(Var, Var, usize),
}

impl Op {
    fn inputs(&self) -> ([Option<Var>; 2], usize) {
        use Op::*;
        match *self {
            Leaf => ([None, None], 0),
            Scale(a, _)
            | Sqrt(a)
            | BroadcastTo(a)
            | SumTo(a)
            | Reshape(a)
            | AddScalar(a)
            | LeakyRelu(a, _)
            | Slice(a, ..)
            | Pad(a, ..) => ([Some(a), None], 1),
            Add(a, b)
            | Sub(a, b)
            | Mul(a, b)
            | Div0(a, b)
            | LeakyMask(a, b, _)
            | MatMul(a, b, ..)
            | Conv(a, b, _)
            | ConvT(a, b, _)
            | ConvW(a, b, _)
            | Concat(a, b, _) => ([Some(a), Some(b)], 2),
        }
    }
}

struct Node {
    op: Op,
    value: Tensor4,
}

/// Append-only computation graph.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn same_shape(a: &Tensor4, b: &Tensor4, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: {} vs {}",
            fmt_shape(&a.shape()),
            fmt_shape(&b.shape())
        )));
    }
    Ok(())
}

fn zip_map(a: &Tensor4, b: &Tensor4, f: impl Fn(f64, f64) -> f64) -> Tensor4 {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor4::new(a.shape(), data).expect("shapes checked")
}

fn map(a: &Tensor4, f: impl Fn(f64) -> f64) -> Tensor4 {
    Tensor4::new(a.shape(), a.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

#[inline]
fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

fn strides(s: &Shape) -> [usize; 4] {
    [s[1] * s[2] * s[3], s[2] * s[3], s[3], 1]
}

fn broadcast_compatible(small: &Shape, big: &Shape) -> bool {
    small.iter().zip(big).all(|(&s, &b)| s == b || s == 1)
}

fn broadcast_value(a: &Tensor4, to: Shape) -> Tensor4 {
    let s = a.shape();
    let st = strides(&s);
    let mut out = Tensor4::zeros(to);
    let mut idx = 0;
    for i0 in 0..to[0] {
        for i1 in 0..to[1] {
            for i2 in 0..to[2] {
                for i3 in 0..to[3] {
                    let src = [i0, i1, i2, i3]
                        .iter()
                        .zip(&s)
                        .zip(&st)
                        .map(|((&i, &d), &t)| if d == 1 { 0 } else { i * t })
                        .sum::<usize>();
                    out.data_mut()[idx] = a.data()[src];
                    idx += 1;
                }
            }
        }
    }
    out
}

fn sum_to_value(a: &Tensor4, to: Shape) -> Tensor4 {
    let s = a.shape();
    let st = strides(&to);
    let mut out = Tensor4::zeros(to);
    let mut idx = 0;
    for i0 in 0..s[0] {
        for i1 in 0..s[1] {
            for i2 in 0..s[2] {
                for i3 in 0..s[3] {
                    let dst = [i0, i1, i2, i3]
                        .iter()
                        .zip(&to)
                        .zip(&st)
                        .map(|((&i, &d), &t)| if d == 1 { 0 } else { i * t })
                        .sum::<usize>();
                    out.data_mut()[dst] += a.data()[idx];
                    idx += 1;
                }
            }
        }
    }
    out
}

// (outer, axis, inner) view of a shape.
fn split_axis(s: &Shape, axis: usize) -> (usize, usize, usize) {
    (
        s[..axis].iter().product(),
        s[axis],
        s[axis + 1..].iter().product(),
    )
}

fn with_axis(mut s: Shape, axis: usize, len: usize) -> Shape {
    s[axis] = len;
    s
}

fn slice_value(a: &Tensor4, axis: usize, start: usize, len: usize) -> Tensor4 {
    let (outer, full, inner) = split_axis(&a.shape(), axis);
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * full + start) * inner;
        data.extend_from_slice(&a.data()[base..base + len * inner]);
    }
    Tensor4::new(with_axis(a.shape(), axis, len), data).expect("slice shape")
}

fn pad_value(a: &Tensor4, axis: usize, start: usize, total: usize) -> Tensor4 {
    let (outer, len, inner) = split_axis(&a.shape(), axis);
    let mut out = Tensor4::zeros(with_axis(a.shape(), axis, total));
    for o in 0..outer {
        let dst = (o * total + start) * inner;
        out.data_mut()[dst..dst + len * inner]
            .copy_from_slice(&a.data()[o * len * inner..(o + 1) * len * inner]);
    }
    out
}

fn concat_value(a: &Tensor4, b: &Tensor4, axis: usize) -> Tensor4 {
    let (outer, la, inner) = split_axis(&a.shape(), axis);
    let lb = b.shape()[axis];
    let mut data = Vec::with_capacity(outer * (la + lb) * inner);
    for o in 0..outer {
        data.extend_from_slice(&a.data()[o * la * inner..(o + 1) * la * inner]);
        data.extend_from_slice(&b.data()[o * lb * inner..(o + 1) * lb * inner]);
    }
    Tensor4::new(with_axis(a.shape(), axis, la + lb), data).expect("concat shape")
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

    fn push(&mut self, op: Op, value: Tensor4) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Adds an input or parameter.
    pub fn leaf(&mut self, value: Tensor4) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, v: Var) -> &Tensor4 {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// `a / b`, defined as 0 wherever `b == 0`.
    pub fn div0(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "div")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| {
            if y == 0.0 {
                0.0
            } else {
                x / y
            }
        });
        Ok(self.push(Op::Div0(a, b), v))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = map(self.value(a), |x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = map(self.value(a), |x| x + s);
        self.push(Op::AddScalar(a), v)
    }

    /// Square root; negative inputs are treated as 0 and the gradient at 0 is 0.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = map(self.value(a), |x| x.max(0.0).sqrt());
        self.push(Op::Sqrt(a), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a).expect("same var")
    }

    pub fn broadcast_to(&mut self, a: Var, shape: Shape) -> Result<Var> {
        let s = self.shape(a);
        if s == shape {
            return Ok(a);
        }
        if !broadcast_compatible(&s, &shape) {
            return Err(Error::shape(format!(
                "cannot broadcast {} to {}",
                fmt_shape(&s),
                fmt_shape(&shape)
            )));
        }
        let v = broadcast_value(self.value(a), shape);
        Ok(self.push(Op::BroadcastTo(a), v))
    }

    /// Sums over every axis where `shape` has extent 1.
    pub fn sum_to(&mut self, a: Var, shape: Shape) -> Result<Var> {
        let s = self.shape(a);
        if s == shape {
            return Ok(a);
        }
        if !broadcast_compatible(&shape, &s) {
            return Err(Error::shape(format!(
                "cannot reduce {} to {}",
                fmt_shape(&s),
                fmt_shape(&shape)
            )));
        }
        let v = sum_to_value(self.value(a), shape);
        Ok(self.push(Op::SumTo(a), v))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        self.sum_to(a, [1, 1, 1, 1])
            .expect("scalar is always compatible")
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&mut self, a: Var, shape: Shape) -> Result<Var> {
        let s = self.shape(a);
        if s == shape {
            return Ok(a);
        }
        let v = self.value(a).reshaped(shape)?;
        Ok(self.push(Op::Reshape(a), v))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = map(self.value(a), |x| x * leaky(x, slope));
        self.push(Op::LeakyRelu(a, slope), v)
    }

    fn leaky_mask(&mut self, g: Var, x: Var, slope: f64) -> Var {
        let v = zip_map(self.value(g), self.value(x), |gv, xv| gv * leaky(xv, slope));
        self.push(Op::LeakyMask(g, x, slope), v)
    }

    /// `op(a) @ op(b)` on the `[rows, 1, 1, cols]` matrix views.
    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let v = kernels::matmul(self.value(a), self.value(b), ta, tb)?;
        Ok(self.push(Op::MatMul(a, b, ta, tb), v))
    }

    /// Adds a per-channel bias `[1, 1, 1, C]` (or any broadcastable shape).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let s = self.shape(x);
        let b = self.broadcast_to(bias, s)?;
        self.add(x, b)
    }

    /// Strided convolution with "same" padding; `w` is `[kh, kw, c_in, c_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: (usize, usize)) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        let geom = ConvGeom::same((ws[0], ws[1]), stride, (xs[1], xs[2]))?;
        self.conv2d_geom(x, w, geom)
    }

    fn conv2d_geom(&mut self, x: Var, w: Var, geom: ConvGeom) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        let (ci, _) = geom.check_weight(&ws)?;
        geom.check_spatial(&xs, geom.input, "conv input")?;
        if xs[3] != ci {
            return Err(Error::shape(format!(
                "conv input {} has {} channels, weight expects {ci}",
                fmt_shape(&xs),
                xs[3]
            )));
        }
        let v = kernels::conv2d(self.value(x), self.value(w), &geom);
        Ok(self.push(Op::Conv(x, w, geom), v))
    }

    /// Transposed convolution upsampling by `stride`; `w` is
    /// `[kh, kw, c_out, c_in]` (the layout of the matching forward conv).
    pub fn conv2d_transpose(&mut self, u: Var, w: Var, stride: (usize, usize)) -> Result<Var> {
        let (us, ws) = (self.shape(u), self.shape(w));
        let big = (us[1] * stride.0, us[2] * stride.1);
        let geom = ConvGeom::same((ws[0], ws[1]), stride, big)?;
        self.conv2d_transpose_geom(u, w, geom)
    }

    fn conv2d_transpose_geom(&mut self, u: Var, w: Var, geom: ConvGeom) -> Result<Var> {
        let (us, ws) = (self.shape(u), self.shape(w));
        let (_, co) = geom.check_weight(&ws)?;
        geom.check_spatial(&us, geom.output, "transposed conv input")?;
        if us[3] != co {
            return Err(Error::shape(format!(
                "transposed conv input {} has {} channels, weight expects {co}",
                fmt_shape(&us),
                us[3]
            )));
        }
        let v = kernels::conv2d_transpose(self.value(u), self.value(w), &geom);
        Ok(self.push(Op::ConvT(u, w, geom), v))
    }

    /// Weight gradient of a convolution with geometry `geom`.
    pub fn conv2d_weight(&mut self, x: Var, gy: Var, geom: ConvGeom) -> Result<Var> {
        let (xs, gs) = (self.shape(x), self.shape(gy));
        geom.check_spatial(&xs, geom.input, "conv input")?;
        geom.check_spatial(&gs, geom.output, "conv output gradient")?;
        if xs[0] != gs[0] {
            return Err(Error::shape("batch sizes differ"));
        }
        let v = kernels::conv2d_weight(self.value(x), self.value(gy), &geom);
        Ok(self.push(Op::ConvW(x, gy, geom), v))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a);
        if axis > 3 || len == 0 || start + len > s[axis] {
            return Err(Error::shape(format!(
                "slice {start}..{} on axis {axis} of {}",
                start + len,
                fmt_shape(&s)
            )));
        }
        if len == s[axis] {
            return Ok(a);
        }
        let v = slice_value(self.value(a), axis, start, len);
        Ok(self.push(Op::Slice(a, axis, start), v))
    }

    /// Zero-pads `a` along `axis` so it occupies `start..start+len` of `total`.
    pub fn pad(&mut self, a: Var, axis: usize, start: usize, total: usize) -> Result<Var> {
        let s = self.shape(a);
        if axis > 3 || start + s[axis] > total {
            return Err(Error::shape(format!(
                "pad {} at {start} on axis {axis} to {total}",
                fmt_shape(&s)
            )));
        }
        if total == s[axis] {
            return Ok(a);
        }
        let v = pad_value(self.value(a), axis, start, total);
        Ok(self.push(Op::Pad(a, axis, start), v))
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok = axis <= 3 && (0..4).all(|d| d == axis || sa[d] == sb[d]);
        if !ok {
            return Err(Error::shape(format!(
                "concat {} and {} on axis {axis}",
                fmt_shape(&sa),
                fmt_shape(&sb)
            )));
        }
        let v = concat_value(self.value(a), self.value(b), axis);
        Ok(self.push(Op::Concat(a, b, axis), v))
    }

    /// Gradients of the sum of `y` with respect to each of `wrt`.
    ///
    /// The returned vars are ordinary graph nodes and can be differentiated
    /// again. Inputs that `y` does not depend on get a zero leaf.
    pub fn grad(&mut self, y: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let n = y.0 + 1;
        let mut needs = vec![false; n];
        for w in wrt {
            if w.0 < n {
                needs[w.0] = true;
            }
        }
        for i in 0..n {
            if !needs[i] {
                let (ins, k) = self.nodes[i].op.inputs();
                needs[i] = ins[..k].iter().flatten().any(|v| needs[v.0]);
            }
        }
        let mut adj: Vec<Option<Var>> = vec![None; n];
        if needs[y.0] {
            let ones = Tensor4::filled(self.shape(y), 1.0);
            adj[y.0] = Some(self.leaf(ones));
        }
        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            for (input, gi) in self.backward(Var(i), g, &needs)? {
                adj[input.0] = Some(match adj[input.0] {
                    Some(prev) => self.add(prev, gi)?,
                    None => gi,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|&w| match adj.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let z = Tensor4::zeros(self.shape(w));
                    self.leaf(z)
                }
            })
            .collect())
    }

    fn backward(&mut self, node: Var, g: Var, needs: &[bool]) -> Result<Vec<(Var, Var)>> {
        use Op::*;
        let op = self.nodes[node.0].op;
        let want = |v: Var| needs[v.0];
        let mut out = Vec::with_capacity(2);
        match op {
            Leaf => {}
            Add(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, g));
                }
            }
            Sub(a, b) => {
                if want(a) {
                    out.push((a, g));
                }
                if want(b) {
                    out.push((b, self.scale(g, -1.0)));
                }
            }
            Mul(a, b) => {
                if want(a) {
                    out.push((a, self.mul(g, b)?));
                }
                if want(b) {
                    out.push((b, self.mul(g, a)?));
                }
            }
            Div0(a, b) => {
                if want(a) {
                    out.push((a, self.div0(g, b)?));
                }
                if want(b) {
                    let gy = self.mul(g, node)?;
                    let q = self.div0(gy, b)?;
                    out.push((b, self.scale(q, -1.0)));
                }
            }
            Scale(a, s) => {
                if want(a) {
                    out.push((a, self.scale(g, s)));
                }
            }
            AddScalar(a) => {
                if want(a) {
                    out.push((a, g));
                }
            }
            Sqrt(a) => {
                if want(a) {
                    let twice = self.scale(node, 2.0);
                    out.push((a, self.div0(g, twice)?));
                }
            }
            BroadcastTo(a) => {
                if want(a) {
                    let s = self.shape(a);
                    out.push((a, self.sum_to(g, s)?));
                }
            }
            SumTo(a) => {
                if want(a) {
                    let s = self.shape(a);
                    out.push((a, self.broadcast_to(g, s)?));
                }
            }
            Reshape(a) => {
                if want(a) {
                    let s = self.shape(a);
                    out.push((a, self.reshape(g, s)?));
                }
            }
            LeakyRelu(a, slope) => {
                if want(a) {
                    out.push((a, self.leaky_mask(g, a, slope)));
                }
            }
            LeakyMask(h, x, slope) => {
                if want(h) {
                    out.push((h, self.leaky_mask(g, x, slope)));
                }
            }
            MatMul(a, b, ta, tb) => {
                if want(a) {
                    let ga = if ta {
                        self.matmul(b, g, tb, true)?
                    } else {
                        self.matmul(g, b, false, !tb)?
                    };
                    let s = self.shape(a);
                    out.push((a, self.reshape(ga, s)?));
                }
                if want(b) {
                    let gb = if tb {
                        self.matmul(g, a, true, ta)?
                    } else {
                        self.matmul(a, g, !ta, false)?
                    };
                    let s = self.shape(b);
                    out.push((b, self.reshape(gb, s)?));
                }
            }
            Conv(x, w, geom) => {
                if want(x) {
                    out.push((x, self.conv2d_transpose_geom(g, w, geom)?));
                }
                if want(w) {
                    out.push((w, self.conv2d_weight(x, g, geom)?));
                }
            }
            ConvT(u, w, geom) => {
                if want(u) {
                    out.push((u, self.conv2d_geom(g, w, geom)?));
                }
                if want(w) {
                    out.push((w, self.conv2d_weight(g, u, geom)?));
                }
            }
            ConvW(x, gy, geom) => {
                if want(x) {
                    out.push((x, self.conv2d_transpose_geom(gy, g, geom)?));
                }
                if want(gy) {
                    out.push((gy, self.conv2d_geom(x, g, geom)?));
                }
            }
            Slice(a, axis, start) => {
                if want(a) {
                    let total = self.shape(a)[axis];
                    out.push((a, self.pad(g, axis, start, total)?));
                }
            }
            Pad(a, axis, start) => {
                if want(a) {
                    let len = self.shape(a)[axis];
                    out.push((a, self.slice(g, axis, start, len)?));
                }
            }
            Concat(a, b, axis) => {
                let la = self.shape(a)[axis];
                if want(a) {
                    out.push((a, self.slice(g, axis, 0, la)?));
                }
                if want(b) {
                    let lb = self.shape(b)[axis];
                    out.push((b, self.slice(g, axis, la, lb)?));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type Build = dyn Fn(&mut Graph, &[Var]) -> Result<Var>;

    // Scalar objective: sum(f(inputs) * r) for a fixed random r.
    fn objective(build: &Build, inputs: &[Tensor4], seed: u64) -> (Graph, Vec<Var>, Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let y = build(&mut g, &vars).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = g.leaf(Tensor4::randn(g.shape(y), 1.0, &mut rng));
        let p = g.mul(y, r).unwrap();
        let s = g.sum_all(p);
        (g, vars, s)
    }

    fn check_gradients(build: &Build, inputs: Vec<Tensor4>, tol: f64) {
        let (mut g, vars, s) = objective(build, &inputs, 99);
        let grads = g.grad(s, &vars).unwrap();
        let h = 1e-5;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = g.value(grads[k]).clone();
            assert_eq!(analytic.shape(), input.shape());
            for e in 0..input.len() {
                let eval = |delta: f64| {
                    let mut moved = inputs.clone();
                    moved[k].data_mut()[e] += delta;
                    let (g2, _, s2) = objective(build, &moved, 99);
                    g2.value(s2).item()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.data()[e];
                let scale = fd.abs().max(a.abs()).max(1e-2);
                assert!(
                    (a - fd).abs() <= tol * scale,
                    "input {k} elem {e}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    fn rand(shape: Shape, seed: u64) -> Tensor4 {
        Tensor4::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn positive(shape: Shape, seed: u64) -> Tensor4 {
        let t = rand(shape, seed);
        let d = t.data().iter().map(|x| 0.5 + x.abs()).collect();
        Tensor4::new(shape, d).unwrap()
    }

    const TOL: f64 = 1e-4;

    #[test]
    fn fd_elementwise() {
        let s = [2, 2, 3, 2];
        check_gradients(&|g, v| g.add(v[0], v[1]), vec![rand(s, 1), rand(s, 2)], TOL);
        check_gradients(&|g, v| g.sub(v[0], v[1]), vec![rand(s, 1), rand(s, 2)], TOL);
        check_gradients(&|g, v| g.mul(v[0], v[1]), vec![rand(s, 1), rand(s, 2)], TOL);
        check_gradients(
            &|g, v| g.div0(v[0], v[1]),
            vec![rand(s, 1), positive(s, 2)],
            TOL,
        );
        check_gradients(&|g, v| Ok(g.scale(v[0], -2.5)), vec![rand(s, 3)], TOL);
        check_gradients(&|g, v| Ok(g.add_scalar(v[0], 4.0)), vec![rand(s, 3)], TOL);
        check_gradients(&|g, v| Ok(g.sqrt(v[0])), vec![positive(s, 4)], TOL);
        check_gradients(&|g, v| Ok(g.leaky_relu(v[0], 0.2)), vec![rand(s, 5)], TOL);
    }

    #[test]
    fn fd_shape_ops() {
        check_gradients(
            &|g, v| g.broadcast_to(v[0], [3, 2, 4, 2]),
            vec![rand([1, 2, 1, 2], 1)],
            TOL,
        );
        check_gradients(
            &|g, v| g.sum_to(v[0], [1, 2, 1, 1]),
            vec![rand([3, 2, 4, 2], 2)],
            TOL,
        );
        check_gradients(
            &|g, v| g.reshape(v[0], [4, 1, 1, 6]),
            vec![rand([2, 2, 3, 2], 3)],
            TOL,
        );
        check_gradients(
            &|g, v| g.slice(v[0], 2, 1, 2),
            vec![rand([2, 2, 4, 2], 4)],
            TOL,
        );
        check_gradients(
            &|g, v| g.pad(v[0], 2, 1, 5),
            vec![rand([2, 2, 2, 2], 5)],
            TOL,
        );
        check_gradients(
            &|g, v| g.concat(v[0], v[1], 2),
            vec![rand([2, 2, 3, 2], 6), rand([2, 2, 1, 2], 7)],
            TOL,
        );
        check_gradients(
            &|g, v| Ok(g.mean_all(v[0])),
            vec![rand([2, 2, 3, 2], 8)],
            TOL,
        );
    }

    #[test]
    fn fd_matmul() {
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let a = if ta {
                rand([4, 1, 1, 3], 1)
            } else {
                rand([3, 1, 1, 4], 1)
            };
            let b = if tb {
                rand([2, 1, 1, 4], 2)
            } else {
                rand([4, 1, 1, 2], 2)
            };
            check_gradients(&move |g, v| g.matmul(v[0], v[1], ta, tb), vec![a, b], TOL);
        }
    }

    #[test]
    fn fd_convolutions() {
        check_gradients(
            &|g, v| g.conv2d(v[0], v[1], (4, 1)),
            vec![rand([2, 8, 3, 2], 1), rand([8, 3, 2, 3], 2)],
            TOL,
        );
        check_gradients(
            &|g, v| g.conv2d(v[0], v[1], (1, 2)),
            vec![rand([1, 2, 6, 2], 3), rand([1, 4, 2, 2], 4)],
            TOL,
        );
        check_gradients(
            &|g, v| g.conv2d_transpose(v[0], v[1], (4, 1)),
            vec![rand([2, 2, 3, 3], 5), rand([8, 3, 2, 3], 6)],
            TOL,
        );
        let geom = ConvGeom::same((3, 3), (1, 1), (3, 4)).unwrap();
        check_gradients(
            &move |g, v| g.conv2d_weight(v[0], v[1], geom),
            vec![rand([2, 3, 4, 2], 7), rand([2, 3, 4, 3], 8)],
            TOL,
        );
    }

    #[test]
    fn fd_second_order_through_gradient_norm() {
        // phi(x, w) = || d/dx sum(lrelu(conv(x, w))) ||^2, differentiated in x and w.
        let build: &Build = &|g, v| {
            let y = g.conv2d(v[0], v[1], (1, 1))?;
            let a = g.leaky_relu(y, 0.2);
            let s = g.sum_all(a);
            let gx = g.grad(s, &[v[0]])?[0];
            let sq = g.square(gx);
            let n = g.sum_to(sq, [2, 1, 1, 1])?;
            Ok(g.sqrt(n))
        };
        check_gradients(
            build,
            vec![rand([2, 3, 3, 2], 1), rand([3, 3, 2, 2], 2)],
            TOL,
        );
    }

    #[test]
    fn sqrt_gradient_is_zero_at_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor4::zeros([1, 1, 1, 2]));
        let s = g.sqrt(x);
        let t = g.sum_all(s);
        let gx = g.grad(t, &[x]).unwrap()[0];
        assert_eq!(g.value(gx).data(), &[0.0, 0.0]);
    }

    #[test]
    fn shape_errors_at_build_time() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor4::zeros([1, 2, 2, 1]));
        let b = g.leaf(Tensor4::zeros([1, 2, 3, 1]));
        assert!(matches!(g.add(a, b), Err(Error::Shape(_))));
        assert!(g.concat(a, b, 1).is_err());
        assert!(g.concat(a, b, 2).is_ok());
        let w = g.leaf(Tensor4::zeros([3, 3, 2, 1]));
        assert!(g.conv2d(a, w, (1, 1)).is_err());
        assert!(g.slice(a, 2, 1, 2).is_err());
    }

    #[test]
    fn unrelated_inputs_get_zero_gradients() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor4::scalar(2.0));
        let b = g.leaf(Tensor4::scalar(3.0));
        let y = g.square(a);
        let grads = g.grad(y, &[a, b]).unwrap();
        assert_eq!(g.value(grads[0]).item(), 4.0);
        assert_eq!(g.value(grads[1]).item(), 0.0);
    }
}
