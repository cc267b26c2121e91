//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! Every primitive appends one node holding its forward value. Nodes are
//! created in evaluation order, so the node list is already topologically
//! sorted and `backward` walks it in reverse.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    GatherRow {
        table: Var,
        ids: Vec<usize>,
    },
    GatherMean {
        input: Var,
        groups: Vec<Vec<usize>>,
    },
    Relu(Var),
    RowSoftmax(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum(Var),
    Reshape(Var),
    TransposeLast(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient; allocated only for leaves that require it.
    grad: Option<Tensor>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// `c += op(a) * op(b)` where `op(a)` is `p x k` and `op(b)` is `k x q`.
/// With `ta`, `a` is stored `k x p`; with `tb`, `b` is stored `q x k`.
#[allow(clippy::too_many_arguments)]
fn gemm(p: usize, k: usize, q: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64]) {
    for i in 0..p {
        let crow = &mut c[i * q..(i + 1) * q];
        for l in 0..k {
            let av = if ta { a[l * p + i] } else { a[i * k + l] };
            if av == 0.0 {
                continue;
            }
            if tb {
                for (j, cv) in crow.iter_mut().enumerate() {
                    *cv += av * b[j * k + l];
                }
            } else {
                let brow = &b[l * q..(l + 1) * q];
                for (cv, &bv) in crow.iter_mut().zip(brow) {
                    *cv += av * bv;
                }
            }
        }
    }
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Shape of a matmul as `(batch, p, k, q, rhs_batched)`.
fn matmul_shape(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize, usize, bool)> {
    let bad = || Error::shape("matmul", format!("{a:?} x {b:?}"));
    match (a.len(), b.len()) {
        (2, 2) if a[1] == b[0] => Ok((1, a[0], a[1], b[1], false)),
        (3, 2) if a[2] == b[0] => Ok((1, a[0] * a[1], a[2], b[1], false)),
        (3, 3) if a[0] == b[0] && a[2] == b[1] => Ok((a[0], a[1], a[2], b[2], true)),
        _ => Err(bad()),
    }
}

fn concat_geometry(dims: &[usize], axis: usize) -> (usize, usize) {
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis..].iter().product();
    (outer, inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf; gradients are accumulated for it when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let grad = requires_grad.then(|| Tensor::zeros(value.dims()));
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            if let Some(g) = n.grad.as_mut() {
                g.data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ad, bd) = (self.value(a).dims(), self.value(b).dims());
        let (batch, p, k, q, batched) = matmul_shape(ad, bd)?;
        let mut dims = ad[..ad.len() - 1].to_vec();
        dims.push(q);
        let mut out = vec![0.0; batch * p * q];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        for s in 0..batch {
            let bs = if batched {
                &bv[s * k * q..(s + 1) * k * q]
            } else {
                bv
            };
            gemm(
                p,
                k,
                q,
                &av[s * p * k..(s + 1) * p * k],
                false,
                bs,
                false,
                &mut out[s * p * q..(s + 1) * p * q],
            );
        }
        let value = Tensor::new(dims, out)?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    /// `a + b`, where `b` has either the shape of `a` or the shape of its
    /// trailing axes (broadcast over the leading ones).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ad, bd) = (self.value(a).dims(), self.value(b).dims());
        if bd.len() > ad.len() || ad[ad.len() - bd.len()..] != *bd {
            return Err(Error::shape("add", format!("{ad:?} + {bd:?}")));
        }
        let bv = self.value(b).data();
        let w = bv.len();
        let mut out = self.value(a).data().to_vec();
        if w > 0 {
            for chunk in out.chunks_mut(w) {
                for (o, &x) in chunk.iter_mut().zip(bv) {
                    *o += x;
                }
            }
        }
        let value = Tensor::new(ad.to_vec(), out)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.dims() != tb.dims() {
            return Err(Error::shape(
                "mul_elementwise",
                format!("{:?} * {:?}", ta.dims(), tb.dims()),
            ));
        }
        let out = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(ta.dims().to_vec(), out)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a);
        let value = Tensor::new(t.dims().to_vec(), t.data().iter().map(|x| x * s).collect())
            .expect("same shape");
        self.push(value, Op::Scale(a, s), &[a])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.value(*first).dims().to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} for {base:?}")));
        }
        let mut dims = base.clone();
        dims[axis] = 0;
        for v in inputs {
            let d = self.value(*v).dims();
            let compatible = d.len() == base.len()
                && d.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape(
                    "concat",
                    format!("{d:?} vs {base:?} on axis {axis}"),
                ));
            }
            dims[axis] += d[axis];
        }
        let (outer, _) = concat_geometry(&dims, axis);
        let mut out = Vec::with_capacity(dims.iter().product());
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let (_, inner) = concat_geometry(t.dims(), axis);
                out.extend_from_slice(&t.data()[o * inner..(o + 1) * inner]);
            }
        }
        let value = Tensor::new(dims, out)?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Rows `ids` of a rank-2 table.
    pub fn gather_row(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(Error::shape("gather_row", format!("table {:?}", t.dims())));
        }
        let (rows, w) = (t.dims()[0], t.dims()[1]);
        let mut out = Vec::with_capacity(ids.len() * w);
        for &i in ids {
            if i >= rows {
                return Err(Error::shape("gather_row", format!("row {i} of {rows}")));
            }
            out.extend_from_slice(t.row(i));
        }
        let value = Tensor::new(vec![ids.len(), w], out)?;
        Ok(self.push(
            value,
            Op::GatherRow {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Row `i` of the output is the mean of `input` rows `groups[i]`
    /// (zero for an empty group).
    pub fn gather_mean(&mut self, input: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let t = self.value(input);
        if t.rank() != 2 {
            return Err(Error::shape("gather_mean", format!("input {:?}", t.dims())));
        }
        let (rows, w) = (t.dims()[0], t.dims()[1]);
        let mut out = vec![0.0; groups.len() * w];
        for (g, o) in groups.iter().zip(out.chunks_mut(w.max(1))) {
            if g.is_empty() {
                continue;
            }
            let inv = 1.0 / g.len() as f64;
            for &j in g {
                if j >= rows {
                    return Err(Error::shape("gather_mean", format!("row {j} of {rows}")));
                }
                for (ov, &x) in o.iter_mut().zip(t.row(j)) {
                    *ov += x * inv;
                }
            }
        }
        let value = Tensor::new(vec![groups.len(), w], out)?;
        Ok(self.push(
            value,
            Op::GatherMean {
                input,
                groups: groups.to_vec(),
            },
            &[input],
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::new(
            t.dims().to_vec(),
            t.data().iter().map(|&x| x.max(0.0)).collect(),
        )
        .expect("same shape");
        self.push(value, Op::Relu(a), &[a])
    }

    /// Softmax over the last axis, with max subtraction.
    pub fn rowsoftmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let w = t.last_dim().max(1);
        let mut out = t.data().to_vec();
        out.chunks_mut(w).for_each(softmax_row);
        let value = Tensor::new(t.dims().to_vec(), out).expect("same shape");
        self.push(value, Op::RowSoftmax(a), &[a])
    }

    /// Mean over rows of `-log softmax(logits_i)[target_i]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 2 || t.dims()[0] != targets.len() || targets.is_empty() {
            return Err(Error::shape(
                "cross_entropy",
                format!("logits {:?}, {} targets", t.dims(), targets.len()),
            ));
        }
        let c = t.dims()[1];
        if let Some(&bad) = targets.iter().find(|&&k| k >= c) {
            return Err(Error::ClassRange {
                id: bad as i64,
                classes: c,
            });
        }
        let mut probs = t.data().to_vec();
        let mut loss = 0.0;
        for (row, (p, &k)) in t.data().chunks(c).zip(probs.chunks_mut(c).zip(targets)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            loss += lse - row[k];
            softmax_row(p);
        }
        loss /= targets.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(dims.to_vec())?;
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    /// Swaps the last two axes of a rank-2 or rank-3 tensor.
    pub fn transpose_last(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let d = t.dims();
        if d.len() < 2 {
            return Err(Error::shape("transpose", format!("{d:?}")));
        }
        let (r, c) = (d[d.len() - 2], d[d.len() - 1]);
        let batch = t.len() / (r * c).max(1);
        let mut out = vec![0.0; t.len()];
        for b in 0..batch {
            let src = &t.data()[b * r * c..(b + 1) * r * c];
            let dst = &mut out[b * r * c..(b + 1) * r * c];
            for i in 0..r {
                for j in 0..c {
                    dst[j * r + i] = src[i * c + j];
                }
            }
        }
        let mut dims = d.to_vec();
        let n = dims.len();
        dims.swap(n - 2, n - 1);
        let value = Tensor::new(dims, out)?;
        Ok(self.push(value, Op::TransposeLast(a), &[a]))
    }

    /// Back-propagates from a scalar `loss`, adding into leaf gradients.
    /// Calling it twice without [`Tape::zero_grad`] doubles them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.value(loss).dims()),
            ));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut adj)?;
            if let Some(acc) = self.nodes[idx].grad.as_mut() {
                for (a, x) in acc.data_mut().iter_mut().zip(&g) {
                    *a += x;
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let mut give = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = adj[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (batch, p, k, q, batched) = matmul_shape(ta.dims(), tb.dims())?;
                give(*a, &|da| {
                    for s in 0..batch {
                        let bs = if batched {
                            &tb.data()[s * k * q..(s + 1) * k * q]
                        } else {
                            tb.data()
                        };
                        gemm(
                            p,
                            q,
                            k,
                            &g[s * p * q..(s + 1) * p * q],
                            false,
                            bs,
                            true,
                            &mut da[s * p * k..(s + 1) * p * k],
                        );
                    }
                });
                give(*b, &|db| {
                    for s in 0..batch {
                        let dbs = if batched {
                            &mut db[s * k * q..(s + 1) * k * q]
                        } else {
                            &mut db[..]
                        };
                        gemm(
                            k,
                            p,
                            q,
                            &ta.data()[s * p * k..(s + 1) * p * k],
                            true,
                            &g[s * p * q..(s + 1) * p * q],
                            false,
                            dbs,
                        );
                    }
                });
            }
            Op::Add(a, b) => {
                give(*a, &|da| da.iter_mut().zip(g).for_each(|(d, x)| *d += x));
                give(*b, &|db| {
                    let w = db.len();
                    if w == 0 {
                        return;
                    }
                    for chunk in g.chunks(w) {
                        db.iter_mut().zip(chunk).for_each(|(d, x)| *d += x);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                give(*a, &|da| {
                    for ((d, x), y) in da.iter_mut().zip(g).zip(vb) {
                        *d += x * y;
                    }
                });
                give(*b, &|db| {
                    for ((d, x), y) in db.iter_mut().zip(g).zip(va) {
                        *d += x * y;
                    }
                });
            }
            Op::Scale(a, s) => give(*a, &|da| {
                da.iter_mut().zip(g).for_each(|(d, x)| *d += s * x)
            }),
            Op::Concat { inputs, axis } => {
                let (outer, total) = concat_geometry(node.value.dims(), *axis);
                let mut offset = 0;
                for v in inputs {
                    let (_, inner) = concat_geometry(self.value(*v).dims(), *axis);
                    give(*v, &|dv| {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + inner];
                            dv[o * inner..(o + 1) * inner]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, x)| *d += x);
                        }
                    });
                    offset += inner;
                }
            }
            Op::GatherRow { table, ids } => {
                let w = self.value(*table).last_dim();
                give(*table, &|dt| {
                    for (r, &i) in ids.iter().enumerate() {
                        dt[i * w..(i + 1) * w]
                            .iter_mut()
                            .zip(&g[r * w..(r + 1) * w])
                            .for_each(|(d, x)| *d += x);
                    }
                });
            }
            Op::GatherMean { input, groups } => {
                let w = self.value(*input).last_dim();
                give(*input, &|di| {
                    for (r, grp) in groups.iter().enumerate() {
                        if grp.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / grp.len() as f64;
                        for &j in grp {
                            di[j * w..(j + 1) * w]
                                .iter_mut()
                                .zip(&g[r * w..(r + 1) * w])
                                .for_each(|(d, x)| *d += x * inv);
                        }
                    }
                });
            }
            Op::Relu(a) => {
                let va = self.value(*a).data();
                give(*a, &|da| {
                    for ((d, x), &z) in da.iter_mut().zip(g).zip(va) {
                        if z > 0.0 {
                            *d += x;
                        }
                    }
                });
            }
            Op::RowSoftmax(a) => {
                let y = node.value.data();
                let w = node.value.last_dim().max(1);
                give(*a, &|da| {
                    for ((dr, gr), yr) in da.chunks_mut(w).zip(g.chunks(w)).zip(y.chunks(w)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                        for ((d, x), yv) in dr.iter_mut().zip(gr).zip(yr) {
                            *d += yv * (x - dot);
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let c = self.value(*logits).last_dim();
                let scale = g[0] / targets.len() as f64;
                give(*logits, &|dl| {
                    for (i, &k) in targets.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == k { 1.0 } else { 0.0 };
                            dl[i * c + j] += scale * (probs[i * c + j] - onehot);
                        }
                    }
                });
            }
            Op::Sum(a) => give(*a, &|da| da.iter_mut().for_each(|d| *d += g[0])),
            Op::Reshape(a) => give(*a, &|da| da.iter_mut().zip(g).for_each(|(d, x)| *d += x)),
            Op::TransposeLast(a) => {
                let d = self.value(*a).dims();
                let (r, c) = (d[d.len() - 2], d[d.len() - 1]);
                give(*a, &|da| {
                    let batch = da.len() / (r * c).max(1);
                    for b in 0..batch {
                        for i in 0..r {
                            for j in 0..c {
                                da[b * r * c + i * c + j] += g[b * r * c + j * r + i];
                            }
                        }
                    }
                });
            }
        }
        Ok(())
    }
}
