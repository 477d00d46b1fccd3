use std::collections::{BTreeMap, HashMap};

use super::tensor::{gemm_nt, gemm_tn, log_sigmoid, sigmoid, softmax_rows, Tensor};
use super::{NumericError, ParamStore};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise operations exposed through [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Transpose(Var),
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    MaxPoolGroups {
        x: Var,
        // argmax[g * cols + c] is the source row for group g, column c
        argmax: Vec<usize>,
    },
    SoftmaxRows(Var),
    SoftmaxCe {
        logits: Var,
        labels: Vec<Option<usize>>,
        probs: Tensor,
        count: usize,
    },
    BinaryCe {
        logits: Var,
        targets: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Linear record of differentiable operations. Nodes are appended in
/// execution order, so index order is a topological order and the reverse
/// pass simply walks the node list backwards.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    param_order: Vec<(Var, String)>,
}

/// Reverse-pass result: one optional gradient per recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    visited: usize,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Number of operations whose backward rule was executed.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumericError {
    NumericError::Dimension {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.values()[0]
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Records parameter `name` as a leaf. Repeated lookups of the same name
    /// return the same handle so its gradient is accumulated in one place.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NumericError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let t = store
            .get(name)
            .ok_or_else(|| NumericError::MissingParam(name.to_string()))?
            .clone();
        let v = self.push(t, Op::Leaf);
        self.params.insert(name.to_string(), v);
        self.param_order.push((v, name.to_string()));
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str) -> Result<Tensor, NumericError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err(name, ta, tb));
        }
        let f: fn(f64, f64) -> f64 = match name {
            "add" => |x, y| x + y,
            "sub" => |x, y| x - y,
            _ => |x, y| x * y,
        };
        let values = ta.values().iter().zip(tb.values()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), values)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = self.binary(a, b, "add")?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = self.binary(a, b, "sub")?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = self.binary(a, b, "mul")?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a bias vector `[n]` to every row of `x: [m, n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NumericError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.len() != tx.cols() {
            return Err(dim_err("add_bias", tx, tb));
        }
        let c = tx.cols();
        let mut out = tx.clone();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            *v += tb.values()[i % c];
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn elementwise(&mut self, op: Elementwise, args: &[Var]) -> Result<Var, NumericError> {
        let arity = match op {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        };
        if args.len() != arity {
            return Err(NumericError::Arity {
                op: format!("{op:?}"),
                expected: arity,
                got: args.len(),
            });
        }
        match op {
            Elementwise::Add => self.add(args[0], args[1]),
            Elementwise::Sub => self.sub(args[0], args[1]),
            Elementwise::Mul => self.mul(args[0], args[1]),
            Elementwise::Sigmoid => Ok(self.sigmoid(args[0])),
            Elementwise::Tanh => Ok(self.tanh(args[0])),
            Elementwise::Relu => Ok(self.relu(args[0])),
        }
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose(x))
    }

    /// Concatenates matrices along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, NumericError> {
        let first = *parts.first().ok_or(NumericError::EmptyInput("concat"))?;
        if parts.len() == 1 {
            return Ok(first);
        }
        let t0 = self.value(first);
        if axis > 1 || t0.shape().len() != 2 {
            return Err(NumericError::Axis { axis, shape: t0.shape().to_vec() });
        }
        let out = if axis == 0 {
            let cols = t0.cols();
            let mut rows = 0;
            let mut values = Vec::new();
            for &p in parts {
                let t = self.value(p);
                if t.shape().len() != 2 || t.cols() != cols {
                    return Err(dim_err("concat", t0, t));
                }
                rows += t.rows();
                values.extend_from_slice(t.values());
            }
            Tensor::new(vec![rows, cols], values)?
        } else {
            let rows = t0.rows();
            let mut cols = 0;
            for &p in parts {
                let t = self.value(p);
                if t.shape().len() != 2 || t.rows() != rows {
                    return Err(dim_err("concat", t0, t));
                }
                cols += t.cols();
            }
            let mut values = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for &p in parts {
                    values.extend_from_slice(self.value(p).row(i));
                }
            }
            Tensor::new(vec![rows, cols], values)?
        };
        Ok(self.push(out, Op::Concat { parts: parts.to_vec(), axis }))
    }

    /// Column-wise maximum over all rows, returning shape `[d]`.
    pub fn max_pool_rows(&mut self, x: Var) -> Result<Var, NumericError> {
        let rows = self.value(x).rows();
        let cols = self.value(x).cols();
        let pooled = self.max_pool_groups(x, rows)?;
        let t = self.nodes[pooled.0].value.clone().reshape(vec![cols])?;
        self.nodes[pooled.0].value = t;
        Ok(pooled)
    }

    /// Splits the rows of `x` into consecutive groups of `group` rows and
    /// takes the column-wise maximum of each, giving `[rows / group, cols]`.
    /// Ties go to the lowest row index.
    pub fn max_pool_groups(&mut self, x: Var, group: usize) -> Result<Var, NumericError> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if rows == 0 || group == 0 {
            return Err(NumericError::EmptyInput("max_pool"));
        }
        if rows % group != 0 {
            return Err(NumericError::Shape { shape: vec![group], len: rows });
        }
        let groups = rows / group;
        let mut out = vec![f64::NEG_INFINITY; groups * cols];
        let mut argmax = vec![0usize; groups * cols];
        let v = t.values();
        for g in 0..groups {
            for r in g * group..(g + 1) * group {
                let row = &v[r * cols..(r + 1) * cols];
                for c in 0..cols {
                    if row[c] > out[g * cols + c] {
                        out[g * cols + c] = row[c];
                        argmax[g * cols + c] = r;
                    }
                }
            }
        }
        let out = Tensor::new(vec![groups, cols], out)?;
        Ok(self.push(out, Op::MaxPoolGroups { x, argmax }))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = softmax_rows(self.value(x));
        self.push(out, Op::SoftmaxRows(x))
    }

    /// Mean softmax cross-entropy over rows that carry a label. Rows with
    /// `None` are ignored; with no labeled rows the loss is 0.
    pub fn softmax_ce(&mut self, logits: Var, labels: &[Option<usize>]) -> Result<Var, NumericError> {
        let t = self.value(logits);
        let (rows, classes) = (t.rows(), t.cols());
        if labels.len() != rows {
            return Err(NumericError::Shape { shape: t.shape().to_vec(), len: labels.len() });
        }
        let probs = softmax_rows(t);
        let mut loss = 0.0;
        let mut count = 0;
        for (i, label) in labels.iter().enumerate() {
            if let Some(c) = *label {
                if c >= classes {
                    return Err(NumericError::Label { index: c, classes });
                }
                let row = t.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                loss += lse - row[c];
                count += 1;
            }
        }
        if count > 0 {
            loss /= count as f64;
        }
        let op = Op::SoftmaxCe { logits, labels: labels.to_vec(), probs, count };
        Ok(self.push(Tensor::scalar(loss), op))
    }

    /// Mean over all entries of `-[y ln σ(z) + (1 - y) ln(1 - σ(z))]`.
    pub fn binary_ce(&mut self, logits: Var, targets: &Tensor) -> Result<Var, NumericError> {
        let t = self.value(logits);
        if t.shape() != targets.shape() {
            return Err(dim_err("binary_ce", t, targets));
        }
        if let Some(&bad) = targets.values().iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(NumericError::Target(bad));
        }
        let mut loss = 0.0;
        for (&z, &y) in t.values().iter().zip(targets.values()) {
            loss -= y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z);
        }
        loss /= t.len() as f64;
        let op = Op::BinaryCe { logits, targets: targets.clone() };
        Ok(self.push(Tensor::scalar(loss), op))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(NumericError::NotScalar(lt.shape().to_vec()));
        }
        if !lt.is_finite() {
            return Err(NumericError::NonFinite("loss"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lt.shape(), 1.0));
        let mut visited = 0;
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
            visited += 1;
        }
        Ok(Gradients { grads, visited })
    }

    fn backward_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, delta: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let mut da = vec![0.0; m * k];
                gemm_nt(g.values(), tb.values(), &mut da, m, n, k);
                let mut db = vec![0.0; k * n];
                gemm_tn(ta.values(), g.values(), &mut db, m, k, n);
                acc(*a, Tensor::new(ta.shape().to_vec(), da).expect("shape"));
                acc(*b, Tensor::new(tb.shape().to_vec(), db).expect("shape"));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = zip_map(g, tb, |g, y| g * y);
                let db = zip_map(g, ta, |g, x| g * x);
                acc(*a, da);
                acc(*b, db);
            }
            Op::AddBias(x, b) => {
                let tb = self.value(*b);
                let c = tb.len();
                let mut db = vec![0.0; c];
                for (i, v) in g.values().iter().enumerate() {
                    db[i % c] += v;
                }
                acc(*x, g.clone());
                acc(*b, Tensor::new(tb.shape().to_vec(), db).expect("shape"));
            }
            Op::Scale(x, f) => acc(*x, g.map(|v| v * f)),
            Op::Sigmoid(x) => acc(*x, zip_map(g, &node.value, |g, s| g * s * (1.0 - s))),
            Op::Tanh(x) => acc(*x, zip_map(g, &node.value, |g, t| g * (1.0 - t * t))),
            Op::Relu(x) => {
                let tx = self.value(*x);
                acc(*x, zip_map(g, tx, |g, v| if v > 0.0 { g } else { 0.0 }));
            }
            Op::Transpose(x) => acc(*x, g.transpose()),
            Op::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        let slice = g.values()[offset..offset + n].to_vec();
                        acc(p, Tensor::new(self.value(p).shape().to_vec(), slice).expect("shape"));
                        offset += n;
                    }
                } else {
                    let rows = g.rows();
                    let mut col = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let mut slice = Vec::with_capacity(rows * pc);
                        for i in 0..rows {
                            slice.extend_from_slice(&g.row(i)[col..col + pc]);
                        }
                        acc(p, Tensor::new(self.value(p).shape().to_vec(), slice).expect("shape"));
                        col += pc;
                    }
                }
            }
            Op::MaxPoolGroups { x, argmax } => {
                let tx = self.value(*x);
                let cols = tx.cols();
                let mut dx = vec![0.0; tx.len()];
                for (slot, &r) in argmax.iter().enumerate() {
                    dx[r * cols + slot % cols] += g.values()[slot];
                }
                acc(*x, Tensor::new(tx.shape().to_vec(), dx).expect("shape"));
            }
            Op::SoftmaxRows(x) => {
                let s = &node.value;
                let c = s.cols();
                let mut dx = vec![0.0; s.len()];
                for i in 0..s.rows() {
                    let srow = s.row(i);
                    let grow = g.row(i);
                    let dot: f64 = srow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        dx[i * c + j] = srow[j] * (grow[j] - dot);
                    }
                }
                acc(*x, Tensor::new(s.shape().to_vec(), dx).expect("shape"));
            }
            Op::SoftmaxCe { logits, labels, probs, count } => {
                let c = probs.cols();
                let mut dx = vec![0.0; probs.len()];
                if *count > 0 {
                    let scale = g.values()[0] / *count as f64;
                    for (i, label) in labels.iter().enumerate() {
                        if let Some(k) = *label {
                            for j in 0..c {
                                dx[i * c + j] = probs.get(i, j) * scale;
                            }
                            dx[i * c + k] -= scale;
                        }
                    }
                }
                acc(*logits, Tensor::new(probs.shape().to_vec(), dx).expect("shape"));
            }
            Op::BinaryCe { logits, targets } => {
                let tz = self.value(*logits);
                let scale = g.values()[0] / tz.len() as f64;
                acc(*logits, zip_map(tz, targets, |z, y| (sigmoid(z) - y) * scale));
            }
        }
    }

    /// Gradients of every parameter recorded on this tape, keyed by name.
    pub fn param_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.param_order
            .iter()
            .map(|(v, name)| {
                let g = grads
                    .get(*v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(self.value(*v).shape()));
                (name.clone(), g)
            })
            .collect()
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let values = a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), values).expect("zip_map operands share a shape")
}

#[cfg(test)]
pub(crate) fn matmul_into(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = vec![0.0; a.rows() * b.cols()];
    super::tensor::gemm_nn(a.values(), b.values(), &mut out, a.rows(), a.cols(), b.cols());
    Tensor::new(vec![a.rows(), b.cols()], out).unwrap()
}
