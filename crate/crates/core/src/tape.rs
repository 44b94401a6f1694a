//! Reverse-mode differentiation over a fixed vocabulary of batch operations.
//!
//! A [`ComputationTape`] is a Wengert list: every node stores its operation and
//! forward value, nodes are appended in evaluation order, and [`backward`]
//! walks the list in reverse accumulating adjoints. Matrices are row-major
//! with one example per row, so batch rows never interact except through the
//! final mean reduction of a loss node.
//!
//! [`backward`]: ComputationTape::backward

use std::collections::BTreeMap;

use crate::error::{invalid, Error, Result};
use crate::tensor::{dot, matmul_nn, matmul_nt, matmul_tn, DenseTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

/// Caller-chosen identifier for a parameter block on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamKey(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamKey),
    /// `x · wᵀ + b` with `x: m×in`, `w: out×in`, `b: out`.
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Relu(NodeId),
    Tanh(NodeId),
    /// Mean over rows of `-log softmax(z_i)[y_i]`; caches the softmax rows.
    SoftmaxCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    /// Mean over rows of `Σ_j (p_ij - y_ij)²`.
    SquaredError { pred: NodeId, targets: Vec<f64> },
    /// Inner product of two equally sized nodes, producing a scalar.
    Dot(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: DenseTensor,
}

/// Ordered record of primitive operations and their cached forward values.
#[derive(Debug, Clone, Default)]
pub struct ComputationTape {
    nodes: Vec<Node>,
}

/// Parameter gradients keyed by the [`ParamKey`] each block was registered with.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TapeGradients {
    pub by_key: BTreeMap<ParamKey, DenseTensor>,
}

impl TapeGradients {
    pub fn get(&self, key: ParamKey) -> Option<&DenseTensor> {
        self.by_key.get(&key)
    }
}

fn shape_err(context: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Error {
    Error::Shape {
        context,
        expected: expected.into(),
        actual: actual.into(),
    }
}

fn log_softmax_rows(z: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    let mut probs = vec![0.0; rows * cols];
    let mut logp = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &z[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for c in 0..cols {
            logp[r * cols + c] = row[c] - lse;
            probs[r * cols + c] = logp[r * cols + c].exp();
        }
    }
    (probs, logp)
}

impl ComputationTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseTensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: DenseTensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: DenseTensor) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, key: ParamKey, value: DenseTensor) -> NodeId {
        self.push(Op::Param(key), value)
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let value = eval_affine(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(Op::Affine { x, w, b }, value))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = eval_relu(self.value(x));
        self.push(Op::Relu(x), value)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = eval_tanh(self.value(x));
        self.push(Op::Tanh(x), value)
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let (value, probs) = eval_softmax_ce(self.value(logits), labels)?;
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            value,
        ))
    }

    pub fn squared_error(&mut self, pred: NodeId, targets: &[f64]) -> Result<NodeId> {
        let value = eval_squared_error(self.value(pred), targets)?;
        Ok(self.push(
            Op::SquaredError {
                pred,
                targets: targets.to_vec(),
            },
            value,
        ))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = eval_dot(self.value(a), self.value(b))?;
        Ok(self.push(Op::Dot(a, b), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = eval_add(self.value(a), self.value(b))?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let mut value = self.value(a).clone();
        value.scale(s);
        self.push(Op::Scale(a, s), value)
    }

    /// Class probabilities cached by a softmax cross-entropy node.
    pub fn softmax_probs(&self, loss: NodeId) -> Option<&[f64]> {
        match &self.nodes[loss.0].op {
            Op::SoftmaxCrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Re-evaluate every node from the recorded inputs and parameters.
    pub fn replay(&self) -> Result<Vec<DenseTensor>> {
        let mut values: Vec<DenseTensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Input | Op::Param(_) => node.value.clone(),
                Op::Affine { x, w, b } => eval_affine(&values[x.0], &values[w.0], &values[b.0])?,
                Op::Relu(x) => eval_relu(&values[x.0]),
                Op::Tanh(x) => eval_tanh(&values[x.0]),
                Op::SoftmaxCrossEntropy { logits, labels, .. } => {
                    eval_softmax_ce(&values[logits.0], labels)?.0
                }
                Op::SquaredError { pred, targets } => eval_squared_error(&values[pred.0], targets)?,
                Op::Dot(a, b) => eval_dot(&values[a.0], &values[b.0])?,
                Op::Add(a, b) => eval_add(&values[a.0], &values[b.0])?,
                Op::Scale(a, s) => {
                    let mut v = values[a.0].clone();
                    v.scale(*s);
                    v
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Reverse sweep from `loss`. Adjoints of nodes for which `keep` returns
    /// true survive in the returned vector; all others are dropped once they
    /// have been propagated.
    fn reverse_sweep(
        &self,
        loss: NodeId,
        seed: f64,
        keep: impl Fn(&Op) -> bool,
    ) -> Result<Vec<Option<DenseTensor>>> {
        if loss.0 >= self.nodes.len() {
            return Err(invalid(format!("node {} is not on this tape", loss.0)));
        }
        if !self.value(loss).is_scalar() {
            return Err(shape_err(
                "backward",
                "scalar terminal node",
                format!("shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut adj: Vec<Option<DenseTensor>> = vec![None; loss.0 + 1];
        let mut seed_t = self.value(loss).clone();
        seed_t.data_mut()[0] = seed;
        adj[loss.0] = Some(seed_t);

        fn send(adj: &mut [Option<DenseTensor>], to: NodeId, contrib: DenseTensor) {
            match &mut adj[to.0] {
                Some(acc) => acc.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        }

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let g = if keep(&node.op) {
                match &adj[i] {
                    Some(g) => g.clone(),
                    None => continue,
                }
            } else {
                match adj[i].take() {
                    Some(g) => g,
                    None => continue,
                }
            };
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::Affine { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let (m, inp) = xv.dims2();
                    let (out, _) = wv.dims2();
                    let dx = matmul_nn(g.data(), wv.data(), m, out, inp);
                    let dw = matmul_tn(g.data(), xv.data(), m, out, inp);
                    let mut db = vec![0.0; out];
                    for row in g.data().chunks_exact(out) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    send(&mut adj, *x, DenseTensor::new(xv.shape().to_vec(), dx)?);
                    send(&mut adj, *w, DenseTensor::new(wv.shape().to_vec(), dw)?);
                    send(&mut adj, *b, DenseTensor::new(self.value(*b).shape().to_vec(), db)?);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let d = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                        .collect();
                    send(&mut adj, *x, DenseTensor::new(xv.shape().to_vec(), d)?);
                }
                Op::Tanh(x) => {
                    let d = node
                        .value
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&t, &gv)| gv * (1.0 - t * t))
                        .collect();
                    send(&mut adj, *x, DenseTensor::new(node.value.shape().to_vec(), d)?);
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let zv = self.value(*logits);
                    let (m, c) = zv.dims2();
                    let s = g.data()[0] / m as f64;
                    let mut d: Vec<f64> = probs.iter().map(|p| p * s).collect();
                    for (r, &y) in labels.iter().enumerate() {
                        d[r * c + y] -= s;
                    }
                    send(&mut adj, *logits, DenseTensor::new(zv.shape().to_vec(), d)?);
                }
                Op::SquaredError { pred, targets } => {
                    let pv = self.value(*pred);
                    let (m, _) = pv.dims2();
                    let s = 2.0 * g.data()[0] / m as f64;
                    let d = pv.data().iter().zip(targets).map(|(p, y)| s * (p - y)).collect();
                    send(&mut adj, *pred, DenseTensor::new(pv.shape().to_vec(), d)?);
                }
                Op::Dot(a, b) => {
                    let s = g.data()[0];
                    let mut da = self.value(*b).clone();
                    da.scale(s);
                    let mut db = self.value(*a).clone();
                    db.scale(s);
                    send(&mut adj, *a, da);
                    send(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    send(&mut adj, *a, g.clone());
                    send(&mut adj, *b, g);
                }
                Op::Scale(a, s) => {
                    let mut d = g;
                    d.scale(*s);
                    send(&mut adj, *a, d);
                }
            }
        }
        Ok(adj)
    }

    /// Exact gradient of `seed · loss` with respect to every parameter block
    /// recorded before `loss`. Blocks the loss does not depend on get zeros.
    pub fn backward_seeded(&self, loss: NodeId, seed: f64) -> Result<TapeGradients> {
        let adj = self.reverse_sweep(loss, seed, |op| matches!(op, Op::Param(_)))?;
        let mut out = TapeGradients::default();
        for (node, a) in self.nodes[..=loss.0].iter().zip(adj) {
            if let Op::Param(key) = node.op {
                let g = a.unwrap_or_else(|| DenseTensor::zeros(node.value.shape().to_vec()));
                match out.by_key.get_mut(&key) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        out.by_key.insert(key, g);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&self, loss: NodeId) -> Result<TapeGradients> {
        self.backward_seeded(loss, 1.0)
    }

    /// Squared norm of each example's own loss gradient, for a tape whose
    /// terminal node is a mean-reduced loss over a stack of affine layers.
    ///
    /// Uses the rank-one structure of affine-layer gradients: the weight
    /// gradient of row `i` is `δ_i x_iᵀ`, so its squared norm is
    /// `‖δ_i‖² ‖x_i‖²`, and the bias contributes `‖δ_i‖²`. Requires every
    /// parameter block to feed exactly one affine node.
    pub fn per_example_sq_grad_norms(&self, loss: NodeId) -> Result<Vec<f64>> {
        let rows = match &self.nodes.get(loss.0).map(|n| &n.op) {
            Some(Op::SoftmaxCrossEntropy { labels, .. }) => labels.len(),
            Some(Op::SquaredError { pred, .. }) => self.value(*pred).dims2().0,
            _ => return Err(invalid("per-example norms need a mean-reduced loss node")),
        };
        let mut uses: BTreeMap<usize, usize> = BTreeMap::new();
        for node in &self.nodes[..=loss.0] {
            match node.op {
                Op::Affine { w, b, .. } => {
                    for p in [w, b] {
                        if !matches!(self.nodes[p.0].op, Op::Param(_)) {
                            return Err(invalid("affine weights must be parameter leaves"));
                        }
                        *uses.entry(p.0).or_default() += 1;
                    }
                }
                Op::Dot(..) | Op::Add(..) => {
                    return Err(invalid("per-example norms need a pure layer stack"));
                }
                _ => {}
            }
        }
        if uses.values().any(|&u| u > 1) {
            return Err(invalid("a parameter block feeds more than one affine node"));
        }

        let adj = self.reverse_sweep(loss, 1.0, |op| matches!(op, Op::Affine { .. }))?;
        let scale = (rows as f64) * (rows as f64);
        let mut norms = vec![0.0; rows];
        for (node, a) in self.nodes[..=loss.0].iter().zip(&adj) {
            let (Op::Affine { x, .. }, Some(delta)) = (&node.op, a) else { continue };
            let xv = self.value(*x);
            let (_, inp) = xv.dims2();
            let (_, out) = delta.dims2();
            for r in 0..rows {
                let d = &delta.data()[r * out..(r + 1) * out];
                let xr = &xv.data()[r * inp..(r + 1) * inp];
                norms[r] += dot(d, d) * (dot(xr, xr) + 1.0) * scale;
            }
        }
        Ok(norms)
    }
}

fn eval_affine(x: &DenseTensor, w: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let (m, inp) = x.dims2();
    if w.shape().len() != 2 || w.shape()[1] != inp {
        return Err(shape_err(
            "affine weight",
            format!("[outputs, {inp}]"),
            format!("{:?}", w.shape()),
        ));
    }
    let out = w.shape()[0];
    if b.len() != out {
        return Err(shape_err("affine bias", format!("[{out}]"), format!("{:?}", b.shape())));
    }
    let mut y = matmul_nt(x.data(), w.data(), m, inp, out);
    for row in y.chunks_exact_mut(out) {
        for (v, bias) in row.iter_mut().zip(b.data()) {
            *v += bias;
        }
    }
    DenseTensor::new(vec![m, out], y)
}

fn eval_relu(x: &DenseTensor) -> DenseTensor {
    let d = x.data().iter().map(|&v| v.max(0.0)).collect();
    DenseTensor::new(x.shape().to_vec(), d).expect("same shape")
}

fn eval_tanh(x: &DenseTensor) -> DenseTensor {
    let d = x.data().iter().map(|&v| v.tanh()).collect();
    DenseTensor::new(x.shape().to_vec(), d).expect("same shape")
}

fn eval_softmax_ce(z: &DenseTensor, labels: &[usize]) -> Result<(DenseTensor, Vec<f64>)> {
    let (m, c) = z.dims2();
    if labels.len() != m {
        return Err(shape_err("softmax labels", format!("{m} labels"), format!("{}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(invalid(format!("class id {bad} outside 0..{c}")));
    }
    let (probs, logp) = log_softmax_rows(z.data(), m, c);
    let total: f64 = labels.iter().enumerate().map(|(r, &y)| -logp[r * c + y]).sum();
    Ok((DenseTensor::scalar(total / m.max(1) as f64), probs))
}

fn eval_squared_error(p: &DenseTensor, targets: &[f64]) -> Result<DenseTensor> {
    let (m, _) = p.dims2();
    if targets.len() != p.len() {
        return Err(shape_err(
            "squared-error targets",
            format!("{} values", p.len()),
            format!("{}", targets.len()),
        ));
    }
    let total: f64 = p.data().iter().zip(targets).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(DenseTensor::scalar(total / m.max(1) as f64))
}

fn eval_dot(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    if a.len() != b.len() {
        return Err(shape_err("dot", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(DenseTensor::scalar(dot(a.data(), b.data())))
}

fn eval_add(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    if a.shape() != b.shape() {
        return Err(shape_err("add", format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    let mut v = a.clone();
    v.add_assign(b);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_loss_gradient() {
        let mut t = ComputationTape::new();
        let x = t.input(DenseTensor::from_vec(vec![3.0]));
        let w = t.param(ParamKey(0), DenseTensor::from_vec(vec![2.0]));
        let l = t.dot(w, x).unwrap();
        assert_eq!(t.value(l).data(), &[6.0]);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(ParamKey(0)).unwrap().data(), &[3.0]);
    }

    #[test]
    fn softmax_ce_gradient_is_softmax_minus_onehot() {
        let mut t = ComputationTape::new();
        let z = t.param(ParamKey(0), DenseTensor::matrix(1, 3, vec![0.5, -1.0, 2.0]).unwrap());
        let l = t.softmax_cross_entropy(z, &[1]).unwrap();
        let g = t.backward(l).unwrap();
        let zs = [0.5f64, -1.0, 2.0];
        let denom: f64 = zs.iter().map(|v| v.exp()).sum();
        for (c, &zc) in zs.iter().enumerate() {
            let want = zc.exp() / denom - if c == 1 { 1.0 } else { 0.0 };
            assert!((g.get(ParamKey(0)).unwrap().data()[c] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn non_scalar_terminal_rejected() {
        let mut t = ComputationTape::new();
        let z = t.param(ParamKey(0), DenseTensor::from_vec(vec![1.0, 2.0]));
        let r = t.relu(z);
        assert!(matches!(t.backward(r), Err(Error::Shape { .. })));
    }

    #[test]
    fn unreachable_params_get_zero_gradients() {
        let mut t = ComputationTape::new();
        let a = t.param(ParamKey(0), DenseTensor::from_vec(vec![1.0]));
        let _unused = t.param(ParamKey(1), DenseTensor::from_vec(vec![5.0, 6.0]));
        let l = t.dot(a, a).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(ParamKey(1)).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(g.get(ParamKey(0)).unwrap().data(), &[2.0]);
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let mut t = ComputationTape::new();
        let x = t.input(DenseTensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap());
        let w = t.param(ParamKey(0), DenseTensor::matrix(2, 3, vec![0.7, 0.1, -0.3, 0.2, 0.9, 0.4]).unwrap());
        let b = t.param(ParamKey(1), DenseTensor::from_vec(vec![0.05, -0.05]));
        let h = t.affine(x, w, b).unwrap();
        let a = t.tanh(h);
        let l = t.softmax_cross_entropy(a, &[0, 1]).unwrap();
        let replayed = t.replay().unwrap();
        for (i, v) in replayed.iter().enumerate() {
            assert_eq!(v, t.value(NodeId(i)));
        }
        assert_eq!(replayed[l.0].data(), t.value(l).data());
    }
}
