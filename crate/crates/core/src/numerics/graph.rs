//! Compute record for reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so walking the node list backwards
//! is a valid reverse topological order and every record is visited once.

use super::ops::{self, NormStats};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<F> {
    Input,
    Param(usize),
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        stats: NormStats<F>,
    },
    StandardizeColumns {
        x: Var,
        inv_std: Vec<F>,
    },
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    ConcatCols {
        a: Var,
        b: Var,
    },
    Reshape(Var),
    Add(Var, Var),
    Mul(Var, Var),
    MulRow {
        x: Var,
        row: Var,
    },
    AddRow {
        x: Var,
        row: Var,
    },
    Scale(Var, F),
    AddScalar(Var),
    Sum(Var),
    GatherRow {
        table: Var,
        index: usize,
    },
    Bce {
        p: Var,
        target: F,
    },
    Distance {
        a: Var,
        b: Var,
    },
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
}

/// Ordered record of primitive applications.
#[derive(Debug, Default)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
}

/// Per-node gradients of one backward pass.
#[derive(Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

impl<F: Real> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<F>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn accumulate<F: Real>(grads: &mut [Option<Tensor<F>>], v: Var, g: Tensor<F>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map<F: Real>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map shapes agree")
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v.0].value.data()[0]
    }

    pub fn input(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Input)
    }

    /// Leaf bound to parameter slot `slot` of the caller's parameter store.
    pub fn param(&mut self, slot: usize, value: Tensor<F>) -> Var {
        self.push(value, Op::Param(slot))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::dense(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Op::Dense { x, w, b }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul { a, b }))
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let out = ops::conv1d(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(out, Op::Conv1d { x, w, b }))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: F) -> Result<Var> {
        let (out, stats) = ops::layer_norm(self.value(x), self.value(gain), self.value(bias), eps)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                stats,
            },
        ))
    }

    /// Per-column standardization over the time axis of a `T×D` matrix.
    pub fn standardize_columns(&mut self, x: Var, eps: F) -> Result<Var> {
        let stats = ops::standardize_columns(self.value(x), eps)?;
        Ok(self.push(
            stats.normalized,
            Op::StandardizeColumns {
                x,
                inv_std: stats.inv_std,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = ops::sigmoid(self.value(x));
        self.push(out, Op::Sigmoid(x))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let out = ops::softmax(self.value(x));
        self.push(out, Op::Softmax(x))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::concat_cols(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::ConcatCols { a, b }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                "add",
                self.value(a).shape(),
                self.value(b).shape(),
            ));
        }
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                "mul",
                self.value(a).shape(),
                self.value(b).shape(),
            ));
        }
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    fn row_broadcast(
        &self,
        op: &'static str,
        x: Var,
        row: Var,
        f: impl Fn(F, F) -> F,
    ) -> Result<Tensor<F>> {
        let (xv, rv) = (self.value(x), self.value(row));
        let d = xv.last_dim();
        if rv.len() != d {
            return Err(Error::shape(op, xv.shape(), rv.shape()));
        }
        let mut out = xv.clone();
        for chunk in out.data_mut().chunks_mut(d) {
            for (o, &r) in chunk.iter_mut().zip(rv.data()) {
                *o = f(*o, r);
            }
        }
        Ok(out)
    }

    /// Multiplies every row of `x` elementwise by `row`.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let out = self.row_broadcast("mul_row", x, row, |a, b| a * b)?;
        Ok(self.push(out, Op::MulRow { x, row }))
    }

    /// Adds `row` to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let out = self.row_broadcast("add_row", x, row, |a, b| a + b)?;
        Ok(self.push(out, Op::AddRow { x, row }))
    }

    pub fn scale(&mut self, x: Var, c: F) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: F) -> Var {
        let out = self.value(x).map(|v| v + c);
        self.push(out, Op::AddScalar(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x))
    }

    /// Selects one row of a 2-D table as a `1×E` matrix.
    pub fn gather_row(&mut self, table: Var, index: usize) -> Result<Var> {
        let t = self.value(table);
        let (n, e) = match t.shape() {
            [n, e] => (*n, *e),
            other => return Err(Error::shape("gather_row", other, &[index])),
        };
        if index >= n {
            return Err(Error::Lookup(format!(
                "row {index} out of range for table with {n} rows"
            )));
        }
        let out = Tensor::new(vec![1, e], t.row(index).to_vec())?;
        Ok(self.push(out, Op::GatherRow { table, index }))
    }

    /// Binary cross-entropy of a one-element probability against a 0/1 target.
    pub fn bce(&mut self, p: Var, target: F) -> Result<Var> {
        let pv = self.value(p);
        if pv.len() != 1 {
            return Err(Error::shape("bce", pv.shape(), &[1]));
        }
        let lo = F::of(BCE_CLAMP);
        let c = pv.data()[0].max(lo).min(F::one() - lo);
        let loss = -(target * c.ln() + (F::one() - target) * (F::one() - c).ln());
        Ok(self.push(Tensor::scalar(loss), Op::Bce { p, target }))
    }

    /// Euclidean distance between two equally sized tensors.
    pub fn distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(Error::shape("distance", av.shape(), bv.shape()));
        }
        let d = ops::euclidean(av.data(), bv.data());
        Ok(self.push(Tensor::scalar(d), Op::Distance { a, b }))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients<F>> {
        let v = self.value(output);
        if v.len() != 1 {
            return Err(Error::shape("backward", v.shape(), &[1]));
        }
        Ok(self.backward_from(vec![(output, Tensor::full(v.shape(), F::one()))]))
    }

    /// Reverse pass seeded with upstream gradients on arbitrary nodes.
    pub fn backward_from(&self, seeds: Vec<(Var, Tensor<F>)>) -> Gradients<F> {
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            accumulate(&mut grads, v, g);
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    /// Sums the gradients of every parameter leaf into `out`, indexed by slot.
    pub fn accumulate_param_grads(&self, grads: &Gradients<F>, out: &mut [Tensor<F>]) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(slot), Some(g)) = (&node.op, grads.grads[i].as_ref()) {
                out[*slot].add_assign(g);
            }
        }
    }

    fn propagate(&self, i: usize, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Dense { x, w, b } => {
                let (dx, dw) = self.matmul_backward(*x, *w, g);
                let mut db = Tensor::zeros(self.value(*b).shape());
                let d = db.len();
                for row in g.data().chunks(d) {
                    for (acc, &v) in db.data_mut().iter_mut().zip(row) {
                        *acc = *acc + v;
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *w, dw);
                accumulate(grads, *b, db);
            }
            Op::MatMul { a, b } => {
                let (da, db) = self.matmul_backward(*a, *b, g);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Conv1d { x, w, b } => {
                let (dx, dw, db) = self.conv1d_backward(*x, *w, g);
                accumulate(grads, *x, dx);
                accumulate(grads, *w, dw);
                accumulate(grads, *b, db);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                stats,
            } => {
                let gain_v = self.value(*gain).data();
                let d = gain_v.len();
                let xhat = stats.normalized.data();
                let mut dx = vec![F::zero(); xhat.len()];
                let mut dgain = vec![F::zero(); d];
                let mut dbias = vec![F::zero(); d];
                let n = F::of(d as f64);
                for (r, &is) in stats.inv_std.iter().enumerate() {
                    let gr = &g.data()[r * d..(r + 1) * d];
                    let xr = &xhat[r * d..(r + 1) * d];
                    let mut mean_dxh = F::zero();
                    let mut mean_dxh_xh = F::zero();
                    for j in 0..d {
                        let dxh = gr[j] * gain_v[j];
                        mean_dxh = mean_dxh + dxh;
                        mean_dxh_xh = mean_dxh_xh + dxh * xr[j];
                        dgain[j] = dgain[j] + gr[j] * xr[j];
                        dbias[j] = dbias[j] + gr[j];
                    }
                    mean_dxh = mean_dxh / n;
                    mean_dxh_xh = mean_dxh_xh / n;
                    for j in 0..d {
                        let dxh = gr[j] * gain_v[j];
                        dx[r * d + j] = is * (dxh - mean_dxh - xr[j] * mean_dxh_xh);
                    }
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(g.shape().to_vec(), dx).expect("shape"),
                );
                accumulate(grads, *gain, Tensor::new(vec![d], dgain).expect("shape"));
                accumulate(grads, *bias, Tensor::new(vec![d], dbias).expect("shape"));
            }
            Op::StandardizeColumns { x, inv_std } => {
                let d = inv_std.len();
                let t = g.len() / d;
                let n = F::of(t as f64);
                let xhat = node.value.data();
                let gd = g.data();
                let mut mean_g = vec![F::zero(); d];
                let mut mean_gx = vec![F::zero(); d];
                for r in 0..t {
                    for j in 0..d {
                        mean_g[j] = mean_g[j] + gd[r * d + j];
                        mean_gx[j] = mean_gx[j] + gd[r * d + j] * xhat[r * d + j];
                    }
                }
                let mut dx = vec![F::zero(); t * d];
                for r in 0..t {
                    for j in 0..d {
                        let k = r * d + j;
                        dx[k] = inv_std[j] * (gd[k] - mean_g[j] / n - xhat[k] * mean_gx[j] / n);
                    }
                }
                accumulate(
                    grads,
                    *x,
                    Tensor::new(g.shape().to_vec(), dx).expect("shape"),
                );
            }
            Op::Relu(x) => {
                let dx = zip_map(g, self.value(*x), |gv, xv| {
                    if xv > F::zero() {
                        gv
                    } else {
                        F::zero()
                    }
                });
                accumulate(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let dx = zip_map(g, &node.value, |gv, s| gv * s * (F::one() - s));
                accumulate(grads, *x, dx);
            }
            Op::Softmax(x) => {
                let d = node.value.last_dim();
                let mut dx = g.clone();
                for (dr, sr) in dx.data_mut().chunks_mut(d).zip(node.value.data().chunks(d)) {
                    let dot: F = dr.iter().zip(sr).map(|(&a, &b)| a * b).sum();
                    for (dv, &s) in dr.iter_mut().zip(sr) {
                        *dv = s * (*dv - dot);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::ConcatCols { a, b } => {
                let (ca, cb) = (self.value(*a).last_dim(), self.value(*b).last_dim());
                let rows = g.len() / (ca + cb);
                let mut da = Vec::with_capacity(rows * ca);
                let mut db = Vec::with_capacity(rows * cb);
                for row in g.data().chunks(ca + cb) {
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..]);
                }
                let sa = self.value(*a).shape().to_vec();
                let sb = self.value(*b).shape().to_vec();
                accumulate(grads, *a, Tensor::new(sa, da).expect("shape"));
                accumulate(grads, *b, Tensor::new(sb, db).expect("shape"));
            }
            Op::Reshape(x) => {
                let dx = g.clone().reshape(self.value(*x).shape()).expect("shape");
                accumulate(grads, *x, dx);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, zip_map(g, self.value(*b), |x, y| x * y));
                accumulate(grads, *b, zip_map(g, self.value(*a), |x, y| x * y));
            }
            Op::MulRow { x, row } => {
                let rv = self.value(*row);
                let xv = self.value(*x);
                let d = rv.len();
                let mut dx = g.clone();
                let mut drow = Tensor::zeros(rv.shape());
                for (r, chunk) in dx.data_mut().chunks_mut(d).enumerate() {
                    let xr = &xv.data()[r * d..(r + 1) * d];
                    for j in 0..d {
                        drow.data_mut()[j] = drow.data()[j] + chunk[j] * xr[j];
                        chunk[j] = chunk[j] * rv.data()[j];
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *row, drow);
            }
            Op::AddRow { x, row } => {
                let rv = self.value(*row);
                let d = rv.len();
                let mut drow = Tensor::zeros(rv.shape());
                for chunk in g.data().chunks(d) {
                    for (acc, &v) in drow.data_mut().iter_mut().zip(chunk) {
                        *acc = *acc + v;
                    }
                }
                accumulate(grads, *x, g.clone());
                accumulate(grads, *row, drow);
            }
            Op::Scale(x, c) => accumulate(grads, *x, g.map(|v| v * *c)),
            Op::AddScalar(x) => accumulate(grads, *x, g.clone()),
            Op::Sum(x) => {
                let shape = self.value(*x).shape().to_vec();
                accumulate(grads, *x, Tensor::full(&shape, g.data()[0]));
            }
            Op::GatherRow { table, index } => {
                let tv = self.value(*table);
                let e = tv.last_dim();
                let mut dt = Tensor::zeros(tv.shape());
                dt.data_mut()[index * e..(index + 1) * e].copy_from_slice(g.data());
                accumulate(grads, *table, dt);
            }
            Op::Bce { p, target } => {
                let pv = self.value(*p);
                let lo = F::of(BCE_CLAMP);
                let x = pv.data()[0];
                let d = if x > lo && x < F::one() - lo {
                    -*target / x + (F::one() - *target) / (F::one() - x)
                } else {
                    F::zero()
                };
                accumulate(grads, *p, Tensor::full(pv.shape(), d * g.data()[0]));
            }
            Op::Distance { a, b } => {
                let dist = node.value.data()[0];
                let (av, bv) = (self.value(*a), self.value(*b));
                let scale = if dist > F::zero() {
                    g.data()[0] / dist
                } else {
                    F::zero()
                };
                let da = zip_map(av, bv, |x, y| (x - y) * scale);
                let db = da.map(|v| -v);
                accumulate(grads, *a, da);
                accumulate(
                    grads,
                    *b,
                    Tensor::new(bv.shape().to_vec(), db.into_data()).expect("shape"),
                );
            }
        }
    }

    /// Gradients of `a[m×k] · b[k×n]` given upstream `g[m×n]`.
    fn matmul_backward(&self, a: Var, b: Var, g: &Tensor<F>) -> (Tensor<F>, Tensor<F>) {
        let (av, bv) = (self.value(a), self.value(b));
        let k = av.last_dim();
        let m = av.len() / k.max(1);
        let n = bv.last_dim();
        let (ad, bd, gd) = (av.data(), bv.data(), g.data());
        let mut da = vec![F::zero(); m * k];
        let mut db = vec![F::zero(); k * n];
        for i in 0..m {
            let gr = &gd[i * n..(i + 1) * n];
            for p in 0..k {
                let br = &bd[p * n..(p + 1) * n];
                da[i * k + p] = gr.iter().zip(br).map(|(&x, &y)| x * y).sum();
                let av = ad[i * k + p];
                if av != F::zero() {
                    for (acc, &gv) in db[p * n..(p + 1) * n].iter_mut().zip(gr) {
                        *acc = *acc + av * gv;
                    }
                }
            }
        }
        (
            Tensor::new(av.shape().to_vec(), da).expect("shape"),
            Tensor::new(bv.shape().to_vec(), db).expect("shape"),
        )
    }

    fn conv1d_backward(&self, x: Var, w: Var, g: &Tensor<F>) -> (Tensor<F>, Tensor<F>, Tensor<F>) {
        let (xv, wv) = (self.value(x), self.value(w));
        let (t_len, cin) = (xv.shape()[0], xv.shape()[1]);
        let (k, cout) = (wv.shape()[0], wv.shape()[2]);
        let pad = (k - 1) / 2;
        let (xd, wd, gd) = (xv.data(), wv.data(), g.data());
        let mut dx = vec![F::zero(); t_len * cin];
        let mut dw = vec![F::zero(); k * cin * cout];
        let mut db = vec![F::zero(); cout];
        for t in 0..t_len {
            let gr = &gd[t * cout..(t + 1) * cout];
            for (acc, &v) in db.iter_mut().zip(gr) {
                *acc = *acc + v;
            }
            for kk in 0..k {
                let Some(s) = (t + kk).checked_sub(pad).filter(|&s| s < t_len) else {
                    continue;
                };
                let base = kk * cin * cout;
                for c in 0..cin {
                    let wr = &wd[base + c * cout..base + (c + 1) * cout];
                    let dot: F = gr.iter().zip(wr).map(|(&a, &b)| a * b).sum();
                    dx[s * cin + c] = dx[s * cin + c] + dot;
                    let xv = xd[s * cin + c];
                    if xv != F::zero() {
                        for (acc, &gv) in dw[base + c * cout..base + (c + 1) * cout]
                            .iter_mut()
                            .zip(gr)
                        {
                            *acc = *acc + xv * gv;
                        }
                    }
                }
            }
        }
        (
            Tensor::new(xv.shape().to_vec(), dx).expect("shape"),
            Tensor::new(wv.shape().to_vec(), dw).expect("shape"),
            Tensor::new(vec![cout], db).expect("shape"),
        )
    }
}
