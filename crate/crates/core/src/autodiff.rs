//! A small reverse-mode differentiation tape over [`Mat`] values.
//!
//! Every forward pass builds a fresh [`Graph`]; parameters are pulled in from a
//! [`ParamStore`] and their gradients are collected after [`Graph::backward`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::crf::{self, Transitions};
use crate::tensor::{Mat, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Mat<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Mat<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Mat<T>)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Mat::cast).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(Mat::is_finite)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }
}

/// Gradients aligned with a [`ParamStore`]; `None` for parameters the loss did not touch.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    pub by_param: Vec<Option<Mat<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Self {
            by_param: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Mat<T>> {
        self.by_param[id.0].as_ref()
    }

    pub fn accumulate(&mut self, other: &Grads<T>) {
        for (dst, src) in self.by_param.iter_mut().zip(&other.by_param) {
            if let Some(src) = src {
                match dst {
                    Some(d) => d.add_assign(src),
                    None => *dst = Some(src.clone()),
                }
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for g in self.by_param.iter_mut().flatten() {
            g.scale(k);
        }
    }

    pub fn global_norm(&self) -> T {
        self.by_param
            .iter()
            .flatten()
            .map(Mat::sum_sq)
            .sum::<T>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Gather(ParamId, Vec<usize>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Abs(Var),
    SoftmaxRows(Var),
    Normalize(Var, Vec<T>),
    SelectRows(Var, Vec<usize>),
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    Sum(Var),
    CrfNll(CrfNode<T>),
}

#[derive(Debug)]
struct CrfNode<T> {
    emissions: Var,
    transitions: Option<(Var, Var, Var)>,
    forbid_invalid: bool,
    gold: Vec<usize>,
    marginals: crf::Marginals<T>,
}

/// One forward pass worth of values plus the recipe to differentiate them.
pub struct Graph<'p, T> {
    store: &'p ParamStore<T>,
    values: Vec<Mat<T>>,
    ops: Vec<Op<T>>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(store: &'p ParamStore<T>) -> Self {
        Self {
            store,
            values: Vec::new(),
            ops: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore<T> {
        self.store
    }

    fn push(&mut self, value: Mat<T>, op: Op<T>) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat<T> {
        &self.values[v.0]
    }

    pub fn constant(&mut self, value: Mat<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Param(id));
        self.param_vars.insert(id, v);
        v
    }

    /// Rows `ids` of a parameter table (embedding lookup).
    pub fn gather(&mut self, table: ParamId, ids: &[usize]) -> Var {
        let t = self.store.get(table);
        let mut out = Mat::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(out, Op::Gather(table, ids.to_vec()))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Mat<T> {
        let (x, y) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        Mat::from_vec(
            x.rows,
            x.cols,
            x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a, b))
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (&self.values[a.0], &self.values[row.0]);
        assert_eq!((1, x.cols), r.shape(), "add_row expects a 1 x cols row");
        let mut out = x.clone();
        for i in 0..out.rows {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *o = *o + b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 × c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (&self.values[a.0], &self.values[row.0]);
        assert_eq!((1, x.cols), r.shape(), "mul_row expects a 1 x cols row");
        let mut out = x.clone();
        for i in 0..out.rows {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *o = *o * b;
            }
        }
        self.push(out, Op::MulRow(a, row))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0].matmul(&self.values[b.0]);
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0].matmul_t(&self.values[b.0]);
        self.push(v, Op::MatMulT(a, b))
    }

    /// `x · W + b` for a `1 × out` bias row.
    pub fn linear(&mut self, x: Var, w: ParamId, b: ParamId) -> Var {
        let w = self.param(w);
        let b = self.param(b);
        let h = self.matmul(x, w);
        self.add_row(h, b)
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let mut v = self.values[a.0].clone();
        v.scale(k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let x = &self.values[a.0];
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().map(|p| p.tanh()).collect());
        self.push(v, Op::Tanh(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let x = &self.values[a.0];
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().map(|p| p.abs()).collect());
        self.push(v, Op::Abs(a))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.values[a.0].clone();
        for r in 0..v.rows {
            softmax_in_place(v.row_mut(r));
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Row-wise standardisation `(x - mean) / sqrt(var + eps)` (layer norm without affine).
    pub fn normalize_rows(&mut self, a: Var, eps: T) -> Var {
        let x = &self.values[a.0];
        let n = T::of(x.cols as f64);
        let mut out = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = out.row_mut(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&p| (p - mean) * (p - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            for p in row.iter_mut() {
                *p = (*p - mean) * inv;
            }
            inv_std.push(inv);
        }
        self.push(out, Op::Normalize(a, inv_std))
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let x = &self.values[a.0];
        let mut out = Mat::zeros(rows.len(), x.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(x.row(r));
        }
        self.push(out, Op::SelectRows(a, rows.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = &self.values[a.0];
        assert!(start <= end && end <= x.cols, "column slice out of range");
        let w = end - start;
        let mut out = Mat::zeros(x.rows, w);
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..end]);
        }
        self.push(out, Op::SliceCols(a, start, end))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.values[parts[0].0].rows;
        let cols: usize = parts.iter().map(|p| self.values[p.0].cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let x = &self.values[p.0];
                assert_eq!(x.rows, rows, "concat_cols row mismatch");
                out.row_mut(r)[off..off + x.cols].copy_from_slice(x.row(r));
                off += x.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.values[a.0].data.iter().copied().sum();
        self.push(Mat::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Negative log-likelihood of `gold` under a linear-chain CRF over `emissions` (`m × 3`).
    ///
    /// `transitions` is `(start 1×3, trans 3×3, stop 1×3)`; `None` scores every transition as 0.
    /// With `forbid_invalid`, BIO-invalid transitions are pinned to [`crf::FORBIDDEN`] and get no gradient.
    pub fn crf_nll(
        &mut self,
        emissions: Var,
        transitions: Option<(Var, Var, Var)>,
        forbid_invalid: bool,
        gold: &[usize],
    ) -> Var {
        let trans = self.transitions_value(transitions, forbid_invalid);
        let em = &self.values[emissions.0];
        let marginals = crf::marginals(em, &trans);
        let gold_score = crf::sequence_score(em, &trans, gold);
        let loss = marginals.log_z - gold_score;
        self.push(
            Mat::from_vec(1, 1, vec![loss]),
            Op::CrfNll(CrfNode {
                emissions,
                transitions,
                forbid_invalid,
                gold: gold.to_vec(),
                marginals,
            }),
        )
    }

    pub fn transitions_value(
        &self,
        transitions: Option<(Var, Var, Var)>,
        forbid_invalid: bool,
    ) -> Transitions<T> {
        let mut t = match transitions {
            Some((s, m, e)) => Transitions::from_mats(
                &self.values[s.0],
                &self.values[m.0],
                &self.values[e.0],
            ),
            None => Transitions::zeros(),
        };
        if forbid_invalid {
            t.forbid_invalid();
        }
        t
    }

    /// Back-propagates from a `1 × 1` root and returns parameter gradients.
    pub fn backward(&self, root: Var) -> Grads<T> {
        assert_eq!(self.values[root.0].shape(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Mat<T>>> = vec![None; self.values.len()];
        grads[root.0] = Some(Mat::from_vec(1, 1, vec![T::one()]));
        let mut out = Grads::zeros_like(self.store);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.ops[idx] {
                Op::Leaf => {}
                Op::Param(id) => accumulate_param(&mut out, *id, g),
                Op::Gather(id, ids) => {
                    let table = self.store.get(*id);
                    let slot = out.by_param[id.0]
                        .get_or_insert_with(|| Mat::zeros(table.rows, table.cols));
                    for (r, &row) in ids.iter().enumerate() {
                        for (d, &s) in slot.row_mut(row).iter_mut().zip(g.row(r)) {
                            *d = *d + s;
                        }
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    let mut n = g;
                    n.scale(-T::one());
                    acc(&mut grads, *b, n);
                }
                Op::Mul(a, b) => {
                    let ga = hadamard(&g, &self.values[b.0]);
                    let gb = hadamard(&g, &self.values[a.0]);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = col_sums(&g);
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *row, gr);
                }
                Op::MulRow(a, row) => {
                    let x = &self.values[a.0];
                    let r = &self.values[row.0];
                    let mut ga = g.clone();
                    for i in 0..ga.rows {
                        for (o, &b) in ga.row_mut(i).iter_mut().zip(&r.data) {
                            *o = *o * b;
                        }
                    }
                    let gr = col_sums(&hadamard(&g, x));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *row, gr);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(&self.values[b.0]);
                    let gb = self.values[a.0].t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(&self.values[b.0]);
                    let gb = g.t_matmul(&self.values[a.0]);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => {
                    let mut ga = g;
                    ga.scale(*k);
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let y = &self.values[idx];
                    let mut ga = g;
                    for (d, &yv) in ga.data.iter_mut().zip(&y.data) {
                        *d = *d * (T::one() - yv * yv);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let x = &self.values[a.0];
                    let mut ga = g;
                    for (d, &xv) in ga.data.iter_mut().zip(&x.data) {
                        *d = *d * sign(xv);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.values[idx];
                    let mut ga = g;
                    for r in 0..ga.rows {
                        let yr = y.row(r);
                        let dot: T = ga.row(r).iter().zip(yr).map(|(&d, &p)| d * p).sum();
                        for (d, &p) in ga.row_mut(r).iter_mut().zip(yr) {
                            *d = p * (*d - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Normalize(a, inv_std) => {
                    let y = &self.values[idx];
                    let n = T::of(y.cols as f64);
                    let mut ga = g;
                    for r in 0..ga.rows {
                        let yr = y.row(r);
                        let mean_g = ga.row(r).iter().copied().sum::<T>() / n;
                        let mean_gy: T =
                            ga.row(r).iter().zip(yr).map(|(&d, &p)| d * p).sum::<T>() / n;
                        for (d, &p) in ga.row_mut(r).iter_mut().zip(yr) {
                            *d = inv_std[r] * (*d - mean_g - p * mean_gy);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SelectRows(a, rows) => {
                    let x = &self.values[a.0];
                    let mut ga = Mat::zeros(x.rows, x.cols);
                    for (i, &r) in rows.iter().enumerate() {
                        for (d, &s) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                            *d = *d + s;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start, end) => {
                    let x = &self.values[a.0];
                    let mut ga = Mat::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        ga.row_mut(r)[*start..*end].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let x = &self.values[p.0];
                        let mut gp = Mat::zeros(x.rows, x.cols);
                        for r in 0..x.rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + x.cols]);
                        }
                        off += x.cols;
                        acc(&mut grads, *p, gp);
                    }
                }
                Op::Sum(a) => {
                    let x = &self.values[a.0];
                    let ga = Mat::from_vec(x.rows, x.cols, vec![g.data[0]; x.len()]);
                    acc(&mut grads, *a, ga);
                }
                Op::CrfNll(node) => self.crf_backward(node, g.data[0], &mut grads),
            }
        }
        out
    }

    fn crf_backward(&self, node: &CrfNode<T>, upstream: T, grads: &mut [Option<Mat<T>>]) {
        let m = &node.marginals;
        // d(log Z - gold)/d(emission) = marginal - gold indicator
        let mut ge = m.unary.clone();
        for (j, &y) in node.gold.iter().enumerate() {
            let v = ge.get(j, y) - T::one();
            ge.set(j, y, v);
        }
        ge.scale(upstream);
        acc(grads, node.emissions, ge);

        if let Some((s, t, e)) = node.transitions {
            let mut gs = Mat::from_vec(1, crf::NUM_TAGS, m.start.to_vec());
            let mut gt = Mat::zeros(crf::NUM_TAGS, crf::NUM_TAGS);
            for a in 0..crf::NUM_TAGS {
                for b in 0..crf::NUM_TAGS {
                    gt.set(a, b, m.pair[a][b]);
                }
            }
            let mut ge = Mat::from_vec(1, crf::NUM_TAGS, m.stop.to_vec());
            let gold = &node.gold;
            if let (Some(&first), Some(&last)) = (gold.first(), gold.last()) {
                gs.data[first] = gs.data[first] - T::one();
                ge.data[last] = ge.data[last] - T::one();
            }
            for w in gold.windows(2) {
                let v = gt.get(w[0], w[1]) - T::one();
                gt.set(w[0], w[1], v);
            }
            if node.forbid_invalid {
                for (a, b) in crf::forbidden_pairs() {
                    gt.set(a, b, T::zero());
                }
                for b in crf::forbidden_starts() {
                    gs.data[b] = T::zero();
                }
            }
            for x in [&mut gs, &mut gt, &mut ge] {
                x.scale(upstream);
            }
            acc(grads, s, gs);
            acc(grads, t, gt);
            acc(grads, e, ge);
        }
    }
}

fn accumulate_param<T: Scalar>(out: &mut Grads<T>, id: ParamId, g: Mat<T>) {
    match &mut out.by_param[id.0] {
        Some(d) => d.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn acc<T: Scalar>(grads: &mut [Option<Mat<T>>], v: Var, g: Mat<T>) {
    match &mut grads[v.0] {
        Some(d) => d.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn hadamard<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    Mat::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).collect(),
    )
}

fn col_sums<T: Scalar>(g: &Mat<T>) -> Mat<T> {
    let mut out = Mat::zeros(1, g.cols);
    for r in 0..g.rows {
        for (o, &v) in out.data.iter_mut().zip(g.row(r)) {
            *o = *o + v;
        }
    }
    out
}

fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for p in row.iter_mut() {
        *p = (*p - max).exp();
        total = total + *p;
    }
    for p in row.iter_mut() {
        *p = *p / total;
    }
}
