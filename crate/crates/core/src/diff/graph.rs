//! Eagerly evaluated computation graph with reverse-mode differentiation.
//!
//! Every operation computes its value immediately and appends a node. Backward
//! passes are themselves recorded as graph nodes, so a gradient can be
//! differentiated again (needed by the critic's gradient penalty). Only the
//! norm and cross-entropy backward nodes refuse a second differentiation.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::params::{GradMap, ParamStore};
use super::tensor::{matmul, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Leaf {
    Param { store: String, name: String },
    Input,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf(LeafKind),
    /// `x * wᵀ (+ b)` with `w` stored as `[out, in]`.
    Affine,
    MatMul { ta: bool, tb: bool },
    LeakyRelu { slope: f64 },
    /// `g ⊙ lrelu'(reference)`; the mask is constant under differentiation.
    MaskMul { slope: f64 },
    Add,
    Mul,
    Scale(f64),
    AddScalar(f64),
    ConcatCols,
    SliceCols { start: usize, len: usize },
    PadCols { start: usize, total: usize },
    BroadcastRows { rows: usize },
    SumRows,
    BroadcastCols { cols: usize },
    RowSum,
    SumAll,
    Mean,
    BroadcastScalar { rows: usize, cols: usize },
    RowL2Norm,
    NormBackward,
    SoftmaxCrossEntropy { labels: Vec<usize> },
    SoftmaxCeBackward { labels: Vec<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeafKind {
    Param,
    Input,
    Constant,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Affine => "affine",
            Op::MatMul { .. } => "matmul",
            Op::LeakyRelu { .. } => "leaky-relu",
            Op::MaskMul { .. } => "mask-mul",
            Op::Add => "add",
            Op::Mul => "elementwise-mul",
            Op::Scale(_) => "scale",
            Op::AddScalar(_) => "add-scalar",
            Op::ConcatCols => "concat",
            Op::SliceCols { .. } => "slice",
            Op::PadCols { .. } => "pad",
            Op::BroadcastRows { .. } => "broadcast-rows",
            Op::SumRows => "sum-rows",
            Op::BroadcastCols { .. } => "broadcast-cols",
            Op::RowSum => "row-sum",
            Op::SumAll => "sum",
            Op::Mean => "mean",
            Op::BroadcastScalar { .. } => "broadcast-scalar",
            Op::RowL2Norm => "l2-norm",
            Op::NormBackward => "l2-norm-backward",
            Op::SoftmaxCrossEntropy { .. } => "softmax-cross-entropy",
            Op::SoftmaxCeBackward { .. } => "softmax-cross-entropy-backward",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    leaf: Option<Leaf>,
    parents: Vec<Var>,
    value: Tensor,
}

/// Gradients of a scalar with respect to every parameter leaf in the graph.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    by_param: BTreeMap<(String, String), Tensor>,
}

impl Gradients {
    /// Gradient map for one store; parameters not reached from the root map to zero.
    pub fn for_store(&self, store: &ParamStore) -> GradMap {
        let mut out = GradMap::new();
        for (name, value) in store.iter() {
            let key = (store.name().to_string(), name.to_string());
            let grad = match self.by_param.get(&key) {
                Some(g) => g.clone(),
                None => Tensor::zeros(value.shape()),
            };
            out.insert(name.to_string(), grad);
        }
        out
    }

    /// Whether any parameter of `store` was reached from the root.
    pub fn touches(&self, store: &ParamStore) -> bool {
        self.by_param.keys().any(|(s, _)| s == store.name())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_cache: HashMap<(String, String), Var>,
    frozen: HashSet<String>,
}

fn dims(t: &Tensor) -> (usize, usize) {
    t.dims().expect("graph values are matrices")
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let (r, c) = dims(t);
    Tensor::from_parts(r, c, t.values().iter().map(|&v| f(v)).collect())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (r, c) = dims(a);
    Tensor::from_parts(
        r,
        c,
        a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn lrelu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Parameters of a frozen store enter the graph as constants.
    pub fn freeze(&mut self, store: &ParamStore) {
        self.frozen.insert(store.name().to_string());
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn parents(&self, v: Var) -> &[Var] {
        &self.nodes[v.0].parents
    }

    fn push(&mut self, op: Op, parents: Vec<Var>, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name()));
        }
        self.nodes.push(Node {
            op,
            leaf: None,
            parents,
            value,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push_leaf(&mut self, leaf: Leaf, value: Tensor) -> Var {
        let kind = match leaf {
            Leaf::Param { .. } => LeafKind::Param,
            Leaf::Input => LeafKind::Input,
            Leaf::Constant => LeafKind::Constant,
        };
        self.nodes.push(Node {
            op: Op::Leaf(kind),
            leaf: Some(leaf),
            parents: Vec::new(),
            value,
        });
        Var(self.nodes.len() - 1)
    }

    fn d(&self, v: Var) -> (usize, usize) {
        dims(&self.nodes[v.0].value)
    }

    fn check_matrix(t: &Tensor) -> Result<()> {
        t.dims().map(|_| ())
    }

    /// Leaf bound to a named parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let key = (store.name().to_string(), name.to_string());
        if let Some(&v) = self.param_cache.get(&key) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {}.{}", store.name(), name)))?
            .clone();
        Self::check_matrix(&value)?;
        let leaf = if self.frozen.contains(store.name()) {
            Leaf::Constant
        } else {
            Leaf::Param {
                store: key.0.clone(),
                name: key.1.clone(),
            }
        };
        let v = self.push_leaf(leaf, value);
        self.param_cache.insert(key, v);
        Ok(v)
    }

    /// Differentiable input leaf.
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        Self::check_matrix(&value)?;
        Ok(self.push_leaf(Leaf::Input, value))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        Self::check_matrix(&value)?;
        Ok(self.push_leaf(Leaf::Constant, value))
    }

    // ── forward operations ───────────────────────────────────────────

    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, input) = self.d(x);
        let (out, w_in) = self.d(w);
        if input != w_in {
            return Err(Error::shape(
                "affine",
                format!("input width {input} vs weight columns {w_in}"),
            ));
        }
        let (_, _, mut data) = matmul(
            self.value(x).values(),
            (n, input),
            self.value(w).values(),
            (out, w_in),
            false,
            true,
        )?;
        let mut parents = vec![x, w];
        if let Some(b) = b {
            let bias = self.value(b);
            if bias.len() != out {
                return Err(Error::shape(
                    "affine",
                    format!("bias length {} vs output width {out}", bias.len()),
                ));
            }
            for row in data.chunks_mut(out) {
                for (o, bv) in row.iter_mut().zip(bias.values()) {
                    *o += bv;
                }
            }
            parents.push(b);
        }
        self.push(Op::Affine, parents, Tensor::from_parts(n, out, data))
    }

    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (m, n, data) = matmul(
            self.value(a).values(),
            self.d(a),
            self.value(b).values(),
            self.d(b),
            ta,
            tb,
        )?;
        self.push(Op::MatMul { ta, tb }, vec![a, b], Tensor::from_parts(m, n, data))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let value = map(self.value(x), |v| if v > 0.0 { v } else { slope * v });
        self.push(Op::LeakyRelu { slope }, vec![x], value)
    }

    pub fn mask_mul(&mut self, g: Var, reference: Var, slope: f64) -> Result<Var> {
        self.same_dims("mask-mul", g, reference)?;
        let value = zip(self.value(g), self.value(reference), |gv, r| {
            gv * lrelu_grad(r, slope)
        });
        self.push(Op::MaskMul { slope }, vec![g, reference], value)
    }

    fn same_dims(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.d(a) != self.d(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.d(a), self.d(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("add", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add, vec![a, b], value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims("elementwise-mul", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul, vec![a, b], value)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = map(self.value(a), |x| c * x);
        self.push(Op::Scale(c), vec![a], value)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = map(self.value(a), |x| x + c);
        self.push(Op::AddScalar(c), vec![a], value)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.d(a);
        let (rb, cb) = self.d(b);
        if ra != rb {
            return Err(Error::shape("concat", format!("row counts {ra} vs {rb}")));
        }
        let va = self.value(a).values();
        let vb = self.value(b).values();
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(&va[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&vb[i * cb..(i + 1) * cb]);
        }
        self.push(Op::ConcatCols, vec![a, b], Tensor::from_parts(ra, ca + cb, data))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.d(a);
        if len == 0 || start + len > c {
            return Err(Error::shape("slice", format!("{start}+{len} exceeds {c} columns")));
        }
        let va = self.value(a).values();
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&va[i * c + start..i * c + start + len]);
        }
        self.push(Op::SliceCols { start, len }, vec![a], Tensor::from_parts(r, len, data))
    }

    pub fn pad_cols(&mut self, a: Var, start: usize, total: usize) -> Result<Var> {
        let (r, c) = self.d(a);
        if start + c > total {
            return Err(Error::shape("pad", format!("{start}+{c} exceeds {total} columns")));
        }
        let va = self.value(a).values();
        let mut data = vec![0.0; r * total];
        for i in 0..r {
            data[i * total + start..i * total + start + c].copy_from_slice(&va[i * c..(i + 1) * c]);
        }
        self.push(Op::PadCols { start, total }, vec![a], Tensor::from_parts(r, total, data))
    }

    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let (r, c) = self.d(a);
        if r != 1 || rows == 0 {
            return Err(Error::shape("broadcast-rows", format!("needs a single row, got {r}")));
        }
        let data = self.value(a).values().repeat(rows);
        self.push(Op::BroadcastRows { rows }, vec![a], Tensor::from_parts(rows, c, data))
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.d(a);
        let va = self.value(a).values();
        let mut data = vec![0.0; c];
        for i in 0..r {
            for (o, v) in data.iter_mut().zip(&va[i * c..(i + 1) * c]) {
                *o += v;
            }
        }
        self.push(Op::SumRows, vec![a], Tensor::from_parts(1, c, data))
    }

    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        let (r, c) = self.d(a);
        if c != 1 || cols == 0 {
            return Err(Error::shape("broadcast-cols", format!("needs a single column, got {c}")));
        }
        let va = self.value(a).values();
        let data = va.iter().flat_map(|&v| std::iter::repeat_n(v, cols)).collect();
        self.push(Op::BroadcastCols { cols }, vec![a], Tensor::from_parts(r, cols, data))
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.d(a);
        let data = self.value(a).values().chunks(c).map(|row| row.iter().sum()).collect();
        self.push(Op::RowSum, vec![a], Tensor::from_parts(r, 1, data))
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).values().iter().sum();
        self.push(Op::SumAll, vec![a], Tensor::from_parts(1, 1, vec![s]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.values().iter().sum::<f64>() / t.len() as f64;
        self.push(Op::Mean, vec![a], Tensor::from_parts(1, 1, vec![s]))
    }

    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let v = self.value(a).item()?;
        self.push(
            Op::BroadcastScalar { rows, cols },
            vec![a],
            Tensor::from_parts(rows, cols, vec![v; rows * cols]),
        )
    }

    /// Euclidean norm of each row, shape `[n, 1]`.
    pub fn row_l2_norm(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.d(a);
        let data = self
            .value(a)
            .values()
            .chunks(c)
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        self.push(Op::RowL2Norm, vec![a], Tensor::from_parts(r, 1, data))
    }

    fn norm_backward(&mut self, g: Var, x: Var, y: Var) -> Result<Var> {
        let (r, c) = self.d(x);
        let gv = self.value(g).values();
        let yv = self.value(y).values();
        let xv = self.value(x).values();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            // Subgradient zero at the origin.
            if yv[i] == 0.0 {
                continue;
            }
            let s = gv[i] / yv[i];
            for j in 0..c {
                data[i * c + j] = xv[i * c + j] * s;
            }
        }
        self.push(Op::NormBackward, vec![g, x, y], Tensor::from_parts(r, c, data))
    }

    /// Per-row cross-entropy `logsumexp(l) - l[label]`, shape `[n, 1]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (r, c) = self.d(logits);
        if labels.len() != r {
            return Err(Error::shape(
                "softmax-cross-entropy",
                format!("{} labels for {r} rows", labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::invalid(format!("label {bad} out of range for {c} classes")));
        }
        let lv = self.value(logits).values();
        let data = lv
            .chunks(c)
            .zip(labels)
            .map(|(row, &y)| log_sum_exp(row) - row[y])
            .collect();
        self.push(
            Op::SoftmaxCrossEntropy {
                labels: labels.to_vec(),
            },
            vec![logits],
            Tensor::from_parts(r, 1, data),
        )
    }

    fn softmax_ce_backward(&mut self, g: Var, logits: Var, labels: &[usize]) -> Result<Var> {
        let (r, c) = self.d(logits);
        let gv = self.value(g).values();
        let lv = self.value(logits).values();
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in lv.chunks(c).enumerate() {
            let p = softmax(row);
            for (j, pj) in p.into_iter().enumerate() {
                let target = if j == labels[i] { 1.0 } else { 0.0 };
                data.push((pj - target) * gv[i]);
            }
        }
        self.push(
            Op::SoftmaxCeBackward {
                labels: labels.to_vec(),
            },
            vec![g, logits],
            Tensor::from_parts(r, c, data),
        )
    }

    // ── reverse mode ─────────────────────────────────────────────────

    /// Records the gradient of scalar `root` with respect to each of `wrt` as
    /// new graph nodes. Entries are `None` when `root` does not depend on them.
    pub fn gradients(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Option<Var>>> {
        if self.value(root).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("root must be scalar, got {:?}", self.value(root).shape()),
            ));
        }
        let n = root.0 + 1;
        let mut relevant = vec![false; n];
        for w in wrt {
            if w.0 < n {
                relevant[w.0] = true;
            }
        }
        for i in 0..n {
            if !relevant[i] && self.nodes[i].parents.iter().any(|p| relevant[p.0]) {
                relevant[i] = true;
            }
        }
        let mut adjoint: Vec<Option<Var>> = vec![None; n];
        if relevant[root.0] {
            let (r, c) = self.d(root);
            let seed = self.constant(Tensor::filled(&[r, c], 1.0))?;
            adjoint[root.0] = Some(seed);
        }
        for i in (0..n).rev() {
            let Some(g) = adjoint[i] else { continue };
            if self.nodes[i].parents.is_empty() {
                continue;
            }
            let parents = self.nodes[i].parents.clone();
            let needs: Vec<bool> = parents.iter().map(|p| relevant[p.0]).collect();
            if !needs.iter().any(|&b| b) {
                continue;
            }
            let contribs = self.backward_rule(Var(i), g, &parents, &needs)?;
            for ((p, need), contrib) in parents.iter().zip(&needs).zip(contribs) {
                if !need {
                    continue;
                }
                if let Some(c) = contrib {
                    adjoint[p.0] = Some(match adjoint[p.0] {
                        Some(prev) => self.add(prev, c)?,
                        None => c,
                    });
                }
            }
        }
        Ok(wrt
            .iter()
            .map(|w| if w.0 < n { adjoint[w.0] } else { None })
            .collect())
    }

    fn backward_rule(
        &mut self,
        node: Var,
        g: Var,
        parents: &[Var],
        needs: &[bool],
    ) -> Result<Vec<Option<Var>>> {
        let op = self.nodes[node.0].op.clone();
        let mut out = vec![None; parents.len()];
        match op {
            Op::Leaf(_) => {}
            Op::Affine => {
                let (x, w) = (parents[0], parents[1]);
                if needs[0] {
                    out[0] = Some(self.matmul(g, w, false, false)?);
                }
                if needs[1] {
                    out[1] = Some(self.matmul(g, x, true, false)?);
                }
                if parents.len() > 2 && needs[2] {
                    out[2] = Some(self.sum_rows(g)?);
                }
            }
            Op::MatMul { ta, tb } => {
                let (a, b) = (parents[0], parents[1]);
                if needs[0] {
                    out[0] = Some(match (ta, tb) {
                        (false, false) => self.matmul(g, b, false, true)?,
                        (false, true) => self.matmul(g, b, false, false)?,
                        (true, false) => self.matmul(b, g, false, true)?,
                        (true, true) => self.matmul(b, g, true, true)?,
                    });
                }
                if needs[1] {
                    out[1] = Some(match (ta, tb) {
                        (false, false) => self.matmul(a, g, true, false)?,
                        (false, true) => self.matmul(g, a, true, false)?,
                        (true, false) => self.matmul(a, g, false, false)?,
                        (true, true) => self.matmul(g, a, true, true)?,
                    });
                }
            }
            Op::LeakyRelu { slope } => {
                out[0] = Some(self.mask_mul(g, parents[0], slope)?);
            }
            Op::MaskMul { slope } => {
                if needs[0] {
                    out[0] = Some(self.mask_mul(g, parents[1], slope)?);
                }
            }
            Op::Add => {
                out[0] = Some(g);
                out[1] = Some(g);
            }
            Op::Mul => {
                let (a, b) = (parents[0], parents[1]);
                if needs[0] {
                    out[0] = Some(self.mul(g, b)?);
                }
                if needs[1] {
                    out[1] = Some(self.mul(g, a)?);
                }
            }
            Op::Scale(c) => out[0] = Some(self.scale(g, c)?),
            Op::AddScalar(_) => out[0] = Some(g),
            Op::ConcatCols => {
                let ca = self.d(parents[0]).1;
                let cb = self.d(parents[1]).1;
                if needs[0] {
                    out[0] = Some(self.slice_cols(g, 0, ca)?);
                }
                if needs[1] {
                    out[1] = Some(self.slice_cols(g, ca, cb)?);
                }
            }
            Op::SliceCols { start, .. } => {
                let total = self.d(parents[0]).1;
                out[0] = Some(self.pad_cols(g, start, total)?);
            }
            Op::PadCols { start, .. } => {
                let len = self.d(parents[0]).1;
                out[0] = Some(self.slice_cols(g, start, len)?);
            }
            Op::BroadcastRows { .. } => out[0] = Some(self.sum_rows(g)?),
            Op::SumRows => {
                let rows = self.d(parents[0]).0;
                out[0] = Some(self.broadcast_rows(g, rows)?);
            }
            Op::BroadcastCols { .. } => out[0] = Some(self.row_sum(g)?),
            Op::RowSum => {
                let cols = self.d(parents[0]).1;
                out[0] = Some(self.broadcast_cols(g, cols)?);
            }
            Op::SumAll => {
                let (r, c) = self.d(parents[0]);
                out[0] = Some(self.broadcast_scalar(g, r, c)?);
            }
            Op::Mean => {
                let (r, c) = self.d(parents[0]);
                let b = self.broadcast_scalar(g, r, c)?;
                out[0] = Some(self.scale(b, 1.0 / (r * c) as f64)?);
            }
            Op::BroadcastScalar { .. } => out[0] = Some(self.sum_all(g)?),
            Op::RowL2Norm => {
                out[0] = Some(self.norm_backward(g, parents[0], node)?);
            }
            Op::SoftmaxCrossEntropy { labels } => {
                out[0] = Some(self.softmax_ce_backward(g, parents[0], &labels)?);
            }
            Op::NormBackward | Op::SoftmaxCeBackward { .. } => {
                return Err(Error::HigherOrder(op.name()));
            }
        }
        Ok(out)
    }

    /// Gradients of scalar `root` with respect to every trainable parameter leaf.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        let mut keys: Vec<((String, String), Var)> = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(Leaf::Param { store, name }) = &node.leaf {
                keys.push(((store.clone(), name.clone()), Var(i)));
            }
        }
        let wrt: Vec<Var> = keys.iter().map(|(_, v)| *v).collect();
        let grads = self.gradients(root, &wrt)?;
        let mut by_param = BTreeMap::new();
        for ((key, leaf), grad) in keys.into_iter().zip(grads) {
            if let Some(g) = grad {
                let shape = self.value(leaf).shape().to_vec();
                by_param.insert(key, self.value(g).reshape(&shape)?);
            }
        }
        Ok(Gradients { by_param })
    }

    /// Convenience: the gradient map for a single store.
    pub fn param_gradients(&mut self, root: Var, store: &ParamStore) -> Result<GradMap> {
        Ok(self.backward(root)?.for_store(store))
    }

    /// Gradient of scalar `root` with respect to an input leaf.
    pub fn input_gradient(&mut self, root: Var, leaf: Var) -> Result<Tensor> {
        let is_input = self
            .nodes
            .get(leaf.0)
            .map(|n| matches!(n.leaf, Some(Leaf::Input)))
            .unwrap_or(false);
        if !is_input {
            return Err(Error::invalid(format!("node {} is not an input leaf of this graph", leaf.0)));
        }
        let grads = self.gradients(root, &[leaf])?;
        Ok(match grads[0] {
            Some(g) => self.value(g).clone(),
            None => Tensor::zeros(self.value(leaf).shape()),
        })
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
