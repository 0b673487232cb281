//! Define-by-run computation graph with reverse-mode gradients.
//!
//! Every call on [`Graph`] evaluates one primitive eagerly and records it.
//! Node ids are handed out in evaluation order, so the node list is already
//! topologically sorted and [`Graph::backward`] is a single reverse sweep.
//!
//! [`Graph::stop_gradient`] adds a barrier node: its value is a copy of its
//! input, and the backward sweep never propagates anything past it.

use std::collections::BTreeSet;

use super::{ParamVector, Tensor};
use crate::diffcore::tensor::{matmul_at_raw, matmul_bt_raw, matmul_raw};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Log(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Embedding(NodeId, Vec<usize>),
    ConcatCols(NodeId, NodeId),
    SumRows(NodeId),
    MeanBatch(NodeId),
    Sum(NodeId),
    StopGradient(NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Nodes bound to the segments of one [`ParamVector`].
#[derive(Clone, Debug)]
pub struct ParamHandle {
    names: Vec<String>,
    nodes: Vec<NodeId>,
    shapes: Vec<Vec<usize>>,
}

impl ParamHandle {
    pub fn get(&self, name: &str) -> Result<NodeId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.nodes[i])
            .ok_or_else(|| Error::UnknownSegment(name.to_string()))
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }
}

/// Recorded forward computation.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    barriers: BTreeSet<NodeId>,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a node, `None` if nothing reached it.
    pub fn get(&self, node: NodeId) -> Option<&Tensor> {
        self.grads.get(node.0).and_then(Option::as_ref)
    }

    /// Gradient w.r.t. every segment of a bound parameter vector; segments
    /// that received nothing are exact zeros.
    pub fn wrt(&self, handle: &ParamHandle) -> ParamVector {
        let mut pv = ParamVector::new();
        for ((name, node), shape) in handle.names.iter().zip(&handle.nodes).zip(&handle.shapes) {
            let t = self
                .get(*node)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(shape));
            pv.push(name.clone(), t).expect("handle names are unique");
        }
        pv
    }
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

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0].value
    }

    pub fn barriers(&self) -> &BTreeSet<NodeId> {
        &self.barriers
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn compute(&self, op: &Op, vals: &[&Tensor]) -> Result<Tensor> {
        eval(op, vals)
    }

    fn record(&mut self, op: Op) -> Result<NodeId> {
        let value = {
            let inputs: Vec<&Tensor> = operands(&op).iter().map(|id| self.value(*id)).collect();
            self.compute(&op, &inputs)?
        };
        Ok(self.push(op, value))
    }

    /// Constant leaf.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    /// Binds every segment of `params` as a differentiable leaf.
    pub fn bind(&mut self, params: &ParamVector) -> ParamHandle {
        let mut handle = ParamHandle {
            names: Vec::new(),
            nodes: Vec::new(),
            shapes: Vec::new(),
        };
        for seg in params.segments() {
            let id = self.push(Op::Param, seg.tensor.clone());
            handle.names.push(seg.name.clone());
            handle.nodes.push(id);
            handle.shapes.push(seg.tensor.shape().to_vec());
        }
        handle
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::MatMul(a, b))
    }

    /// `a[n,m] + bias[m]` broadcast over rows.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        self.record(Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add(a, b))
    }

    /// Element-wise product of equally shaped tensors.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.record(Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Tanh(a))
    }

    /// Natural log; inputs must be strictly positive.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Log(a))
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Softmax(a))
    }

    /// Row-wise log-softmax (log-sum-exp stabilized).
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::LogSoftmax(a))
    }

    /// Looks up rows of `table[v,d]`, giving `[indices.len(), d]`.
    pub fn embedding(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        self.record(Op::Embedding(table, indices.to_vec()))
    }

    /// `[n,p] ‖ [n,q] -> [n,p+q]`
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::ConcatCols(a, b))
    }

    /// `[n,m] -> [n]`
    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::SumRows(a))
    }

    /// Mean over the leading (batch) axis: `[n] -> []`, `[n,m] -> [m]`.
    pub fn mean_batch(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::MeanBatch(a))
    }

    /// Sum of all entries, giving a scalar.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sum(a))
    }

    /// Inner product of two equally shaped tensors.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let p = self.mul(a, b)?;
        self.sum(p)
    }

    /// Same forward value; blocks all gradient flow into `a`.
    pub fn stop_gradient(&mut self, a: NodeId) -> NodeId {
        if self.barriers.contains(&a) {
            return a;
        }
        let value = self.value(a).clone();
        let id = self.push(Op::StopGradient(a), value);
        self.barriers.insert(id);
        id
    }

    /// Recomputes every node from the recorded leaves and returns the value
    /// of `output`.
    pub fn replay(&self, output: NodeId) -> Result<Tensor> {
        let mut values: Vec<Tensor> = Vec::with_capacity(output.0 + 1);
        for node in &self.nodes[..=output.0] {
            let v = match node.op {
                Op::Input | Op::Param => node.value.clone(),
                ref op => {
                    let inputs: Vec<&Tensor> =
                        operands(op).iter().map(|id| &values[id.0]).collect();
                    eval(op, &inputs)?
                }
            };
            values.push(v);
        }
        Ok(values.pop().expect("output node exists"))
    }

    /// Reverse sweep from `output` seeded with `seed`; the result holds
    /// `∂(seed · output)/∂node` for every node reached.
    pub fn backward(&self, output: NodeId, seed: &Tensor) -> Result<Gradients> {
        let out_val = self.value(output);
        if out_val.shape() != seed.shape() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: out_val.shape().to_vec(),
                rhs: seed.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed.clone());

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let id = NodeId(idx);
            if !self.barriers.contains(&id) {
                let node = &self.nodes[idx];
                for (input, contrib) in self.local_grads(node, &g) {
                    accumulate(&mut grads[input.0], contrib);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backward from a scalar node with seed 1.
    pub fn backward_scalar(&self, output: NodeId) -> Result<Gradients> {
        let seed = Tensor::new(self.value(output).shape().to_vec(), vec![1.0])?;
        self.backward(output, &seed)
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<(NodeId, Tensor)> {
        let out = &node.value;
        match &node.op {
            Op::Input | Op::Param | Op::StopGradient(_) => Vec::new(),
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (n, k) = (av.rows(), av.cols());
                let m = bv.cols();
                let ga = matmul_bt_raw(g.data(), bv.data(), n, m, k);
                let gb = matmul_at_raw(av.data(), g.data(), n, k, m);
                vec![
                    (*a, Tensor::new(av.shape().to_vec(), ga).expect("shape")),
                    (*b, Tensor::new(bv.shape().to_vec(), gb).expect("shape")),
                ]
            }
            Op::AddBias(a, bias) => {
                let m = g.cols();
                let mut gb = vec![0.0; m];
                for row in g.data().chunks(m.max(1)) {
                    for (acc, v) in gb.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                let bshape = self.value(*bias).shape().to_vec();
                vec![
                    (*a, g.clone()),
                    (*bias, Tensor::new(bshape, gb).expect("shape")),
                ]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let ga = zip_map(g, bv, |x, y| x * y);
                let gb = zip_map(g, av, |x, y| x * y);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(a, f) => vec![(*a, g.map(|v| v * f))],
            Op::Tanh(a) => vec![(*a, zip_map(g, out, |gv, y| gv * (1.0 - y * y)))],
            Op::Log(a) => {
                let av = self.value(*a);
                vec![(*a, zip_map(g, av, |gv, x| gv / x))]
            }
            Op::Softmax(a) => {
                let c = out.cols();
                let mut gi = vec![0.0; out.len()];
                for ((gr, yr), dst) in g
                    .data()
                    .chunks(c.max(1))
                    .zip(out.data().chunks(c.max(1)))
                    .zip(gi.chunks_mut(c.max(1)))
                {
                    let s: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                    for ((d, gv), y) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = y * (gv - s);
                    }
                }
                vec![(*a, Tensor::new(out.shape().to_vec(), gi).expect("shape"))]
            }
            Op::LogSoftmax(a) => {
                let c = out.cols();
                let mut gi = vec![0.0; out.len()];
                for ((gr, lr), dst) in g
                    .data()
                    .chunks(c.max(1))
                    .zip(out.data().chunks(c.max(1)))
                    .zip(gi.chunks_mut(c.max(1)))
                {
                    let s: f64 = gr.iter().sum();
                    for ((d, gv), l) in dst.iter_mut().zip(gr).zip(lr) {
                        *d = gv - l.exp() * s;
                    }
                }
                vec![(*a, Tensor::new(out.shape().to_vec(), gi).expect("shape"))]
            }
            Op::Embedding(table, indices) => {
                let tv = self.value(*table);
                let d = tv.cols();
                let mut gt = Tensor::zeros(tv.shape());
                for (row, &ix) in g.data().chunks(d.max(1)).zip(indices) {
                    let dst = &mut gt.data_mut()[ix * d..(ix + 1) * d];
                    for (acc, v) in dst.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                vec![(*table, gt)]
            }
            Op::ConcatCols(a, b) => {
                let p = self.value(*a).cols();
                let q = self.value(*b).cols();
                let n = g.rows();
                let mut ga = Vec::with_capacity(n * p);
                let mut gb = Vec::with_capacity(n * q);
                for row in g.data().chunks((p + q).max(1)) {
                    ga.extend_from_slice(&row[..p]);
                    gb.extend_from_slice(&row[p..]);
                }
                vec![
                    (*a, Tensor::new(vec![n, p], ga).expect("shape")),
                    (*b, Tensor::new(vec![n, q], gb).expect("shape")),
                ]
            }
            Op::SumRows(a) => {
                let av = self.value(*a);
                let c = av.cols();
                let data = g
                    .data()
                    .iter()
                    .flat_map(|&v| std::iter::repeat_n(v, c))
                    .collect();
                vec![(*a, Tensor::new(av.shape().to_vec(), data).expect("shape"))]
            }
            Op::MeanBatch(a) => {
                let av = self.value(*a);
                let n = av.rows();
                let inv = 1.0 / n as f64;
                let mut data = Vec::with_capacity(av.len());
                for _ in 0..n {
                    data.extend(g.data().iter().map(|v| v * inv));
                }
                vec![(*a, Tensor::new(av.shape().to_vec(), data).expect("shape"))]
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                let gv = g.item();
                vec![(
                    *a,
                    Tensor::new(av.shape().to_vec(), vec![gv; av.len()]).expect("shape"),
                )]
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, contrib: Tensor) {
    match slot {
        Some(t) => t.add_assign(&contrib),
        None => *slot = Some(contrib),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("equal shapes")
}

fn operands(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Input | Op::Param => Vec::new(),
        Op::MatMul(a, b)
        | Op::AddBias(a, b)
        | Op::Add(a, b)
        | Op::Mul(a, b)
        | Op::ConcatCols(a, b) => {
            vec![*a, *b]
        }
        Op::Scale(a, _)
        | Op::Tanh(a)
        | Op::Log(a)
        | Op::Softmax(a)
        | Op::LogSoftmax(a)
        | Op::Embedding(a, _)
        | Op::SumRows(a)
        | Op::MeanBatch(a)
        | Op::Sum(a)
        | Op::StopGradient(a) => vec![*a],
    }
}

fn eval(op: &Op, v: &[&Tensor]) -> Result<Tensor> {
    match op {
        Op::Input | Op::Param => unreachable!("leaves carry their own value"),
        Op::MatMul(..) => {
            let (n, k) = v[0].expect_matrix("matmul")?;
            let (k2, m) = v[1].expect_matrix("matmul")?;
            if k != k2 {
                return Err(Error::ShapeMismatch {
                    op: "matmul",
                    lhs: v[0].shape().to_vec(),
                    rhs: v[1].shape().to_vec(),
                });
            }
            Tensor::new(vec![n, m], matmul_raw(v[0].data(), v[1].data(), n, k, m))
        }
        Op::AddBias(..) => {
            let (_, m) = v[0].expect_matrix("add_bias")?;
            if v[1].shape() != [m] {
                return Err(Error::ShapeMismatch {
                    op: "add_bias",
                    lhs: v[0].shape().to_vec(),
                    rhs: v[1].shape().to_vec(),
                });
            }
            let mut out = v[0].clone();
            for row in out.data_mut().chunks_mut(m.max(1)) {
                for (x, b) in row.iter_mut().zip(v[1].data()) {
                    *x += b;
                }
            }
            Ok(out)
        }
        Op::Add(..) => {
            v[0].same_shape(v[1], "add")?;
            Ok(zip_map(v[0], v[1], |a, b| a + b))
        }
        Op::Mul(..) => {
            v[0].same_shape(v[1], "mul")?;
            Ok(zip_map(v[0], v[1], |a, b| a * b))
        }
        Op::Scale(_, f) => Ok(v[0].map(|x| x * f)),
        Op::Tanh(_) => Ok(v[0].map(f64::tanh)),
        Op::Log(_) => {
            if let Some(bad) = v[0].data().iter().find(|&&x| x <= 0.0 || x.is_nan()) {
                return Err(Error::NonFinite(format!("log of non-positive value {bad}")));
            }
            Ok(v[0].map(f64::ln))
        }
        Op::Softmax(_) => {
            let (_, c) = v[0].expect_matrix("softmax")?;
            let mut out = v[0].clone();
            for row in out.data_mut().chunks_mut(c.max(1)) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    total += *x;
                }
                for x in row.iter_mut() {
                    *x /= total;
                }
            }
            Ok(out)
        }
        Op::LogSoftmax(_) => {
            let (_, c) = v[0].expect_matrix("log_softmax")?;
            let mut out = v[0].clone();
            for row in out.data_mut().chunks_mut(c.max(1)) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                for x in row.iter_mut() {
                    *x -= lse;
                }
            }
            Ok(out)
        }
        Op::Embedding(_, indices) => {
            let (rows, d) = v[0].expect_matrix("embedding")?;
            let mut data = Vec::with_capacity(indices.len() * d);
            for &ix in indices {
                if ix >= rows {
                    return Err(Error::IndexOutOfRange {
                        op: "embedding",
                        index: ix,
                        bound: rows,
                    });
                }
                data.extend_from_slice(v[0].row(ix));
            }
            Tensor::new(vec![indices.len(), d], data)
        }
        Op::ConcatCols(..) => {
            let (n, p) = v[0].expect_matrix("concat_cols")?;
            let (n2, q) = v[1].expect_matrix("concat_cols")?;
            if n != n2 {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: v[0].shape().to_vec(),
                    rhs: v[1].shape().to_vec(),
                });
            }
            let mut data = Vec::with_capacity(n * (p + q));
            for i in 0..n {
                data.extend_from_slice(v[0].row(i));
                data.extend_from_slice(v[1].row(i));
            }
            Tensor::new(vec![n, p + q], data)
        }
        Op::SumRows(_) => {
            let (n, c) = v[0].expect_matrix("sum_rows")?;
            let data = (0..n)
                .map(|i| v[0].data()[i * c..(i + 1) * c].iter().sum())
                .collect();
            Tensor::new(vec![n], data)
        }
        Op::MeanBatch(_) => {
            let t = v[0];
            let n = t.rows();
            if t.shape().is_empty() || n == 0 {
                return Err(Error::ShapeMismatch {
                    op: "mean_batch",
                    lhs: t.shape().to_vec(),
                    rhs: vec![1],
                });
            }
            let c = t.cols();
            let mut acc = vec![0.0; c];
            for i in 0..n {
                for (a, x) in acc.iter_mut().zip(t.row(i)) {
                    *a += x;
                }
            }
            let inv = 1.0 / n as f64;
            acc.iter_mut().for_each(|a| *a *= inv);
            Tensor::new(t.shape()[1..].to_vec(), acc)
        }
        Op::Sum(_) => Ok(Tensor::scalar(v[0].data().iter().sum())),
        Op::StopGradient(_) => Ok(v[0].clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(r: usize, c: usize, d: &[f64]) -> Tensor {
        Tensor::matrix(r, c, d.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = g.input(mat(1, 3, &[0., 0., 0.]));
        let s = g.softmax(x).unwrap();
        for &p in g.value(s).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tanh_zero_and_identity_matmul() {
        let mut g = Graph::new();
        let z = g.input(Tensor::vector(vec![0.0]));
        let t = g.tanh(z).unwrap();
        assert_eq!(g.value(t).data(), &[0.0]);

        let a = mat(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let i = g.input(Tensor::identity(2));
        let an = g.input(a.clone());
        let p = g.matmul(i, an).unwrap();
        assert_eq!(g.value(p), &a);
    }

    #[test]
    fn dot_gradient_is_other_operand() {
        let params =
            ParamVector::from_segments(vec![("w".into(), Tensor::vector(vec![0.3, -0.7]))])
                .unwrap();
        let mut g = Graph::new();
        let h = g.bind(&params);
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        let y = g.dot(h.get("w").unwrap(), x).unwrap();
        let grads = g.backward(y, &Tensor::scalar(1.0)).unwrap();
        assert_eq!(grads.wrt(&h).get("w").unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn barrier_blocks_everything_upstream() {
        let params = ParamVector::from_segments(vec![
            ("a".into(), Tensor::vector(vec![0.5, 1.5])),
            ("w".into(), Tensor::vector(vec![2.0, -1.0])),
        ])
        .unwrap();
        let mut g = Graph::new();
        let h = g.bind(&params);
        let a = h.get("a").unwrap();
        let t = g.tanh(a).unwrap();
        let t_stop = g.stop_gradient(t);
        assert_eq!(g.value(t_stop), g.value(t));
        assert!(g.barriers().contains(&t_stop));
        let y = g.dot(t_stop, h.get("w").unwrap()).unwrap();
        let grads = g.backward_scalar(y).unwrap().wrt(&h);
        assert_eq!(grads.get("a").unwrap().data(), &[0.0, 0.0]);
        let expected: Vec<f64> = [0.5f64, 1.5].iter().map(|v| v.tanh()).collect();
        assert_eq!(grads.get("w").unwrap().data(), expected.as_slice());
    }

    #[test]
    fn stop_gradient_is_idempotent() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(1.0));
        let s = g.stop_gradient(x);
        assert_eq!(g.stop_gradient(s), s);
    }

    #[test]
    fn shape_errors_name_the_primitive() {
        let mut g = Graph::new();
        let a = g.input(mat(2, 3, &[0.0; 6]));
        let b = g.input(mat(2, 3, &[0.0; 6]));
        match g.matmul(a, b).unwrap_err() {
            Error::ShapeMismatch { op, lhs, rhs } => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            e => panic!("unexpected {e:?}"),
        }
        let table = g.input(mat(3, 2, &[0.0; 6]));
        assert!(matches!(
            g.embedding(table, &[0, 3]),
            Err(Error::IndexOutOfRange {
                op: "embedding",
                index: 3,
                bound: 3
            })
        ));
    }

    #[test]
    fn seed_shape_checked() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![1.0, 2.0]));
        let s = g.sum(x).unwrap();
        assert!(g.backward(s, &Tensor::vector(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let mut g = Graph::new();
        let x = g.input(mat(2, 3, &[1000., 1001., 999., -3., 0.5, 2.0]));
        let ls = g.log_softmax(x).unwrap();
        let s = g.softmax(x).unwrap();
        let l = g.log(s).unwrap();
        for (a, b) in g.value(ls).data().iter().zip(g.value(l).data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut g = Graph::new();
        let x = g.input(mat(2, 2, &[0.1, -0.4, 2.0, 0.3]));
        let w = g.input(mat(2, 3, &[0.2, 0.1, -0.5, 0.7, 0.3, 0.9]));
        let h = g.matmul(x, w).unwrap();
        let t = g.tanh(h).unwrap();
        let s = g.softmax(t).unwrap();
        let m = g.mean_batch(s).unwrap();
        assert_eq!(&g.replay(m).unwrap(), g.value(m));
    }
}
