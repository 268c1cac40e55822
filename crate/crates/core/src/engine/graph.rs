//! Append-only computation graph with reverse-mode differentiation.
//!
//! Each node caches its forward value. `backward` walks nodes in strict
//! reverse creation order, so node inputs always precede the node itself and
//! the graph is acyclic by construction.
//!
//! `hessian_vector` runs the same reverse sweep while also carrying the
//! directional derivative of every value and adjoint along a parameter-space
//! tangent (Pearlmutter's R-operator), which yields an exact `H·v`.

use std::ops::Range;

use super::params::ParamVector;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(Range<usize>),
    MatMul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Abs(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Mean(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    /// Registers a parameter segment as a leaf, snapshotting its current values.
    pub fn param(&mut self, params: &ParamVector, segment: usize) -> NodeId {
        let seg = &params.segments()[segment];
        let mut shape = seg.shape.clone();
        if shape.len() == 1 {
            shape.insert(0, 1);
        }
        let value = Tensor::new(shape, params.segment_values(segment).to_vec())
            .expect("segment shape matches its range");
        self.push(Op::Param(seg.range.clone()), value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = self.value(x).add_row(self.value(bias))?;
        Ok(self.push(Op::AddRow(x, bias), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.value(a).same_shape(self.value(b), "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.value(a).same_shape(self.value(b), "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.value(a).same_shape(self.value(b), "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { 0.0 });
        self.push(Op::Relu(x), v)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), v)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::abs);
        self.push(Op::Abs(x), v)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| a * a);
        self.push(Op::Square(x), v)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), v)
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::contract("mean of an empty tensor"));
        }
        let v = Tensor::scalar(self.value(x).sum() / n as f64);
        Ok(self.push(Op::Mean(x), v))
    }

    fn check_loss(&self, loss: NodeId) -> Result<()> {
        let v = self.value(loss);
        if !v.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss node, got shape {:?}",
                v.shape()
            )));
        }
        Ok(())
    }

    /// Writes `∂loss/∂θ` into `params.grads()`, overwriting previous contents.
    pub fn backward(&self, loss: NodeId, params: &mut ParamVector) -> Result<()> {
        self.check_loss(loss)?;
        params.zero_grads();
        let adj = self.reverse(loss, None);
        let grads = params.grads_mut();
        for (node, a) in self.nodes.iter().zip(&adj) {
            if let (Op::Param(range), Some((g, _))) = (&node.op, a) {
                for (dst, &src) in grads[range.clone()].iter_mut().zip(g.data()) {
                    *dst += src;
                }
            }
        }
        Ok(())
    }

    /// Gradient and exact Hessian-vector product along `tangent`, both
    /// indexed like the parameter vector of length `n_params`.
    pub fn hessian_vector(
        &self,
        loss: NodeId,
        n_params: usize,
        tangent: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_loss(loss)?;
        if tangent.len() != n_params {
            return Err(Error::Shape {
                context: "hessian-vector tangent",
                expected: vec![n_params],
                got: vec![tangent.len()],
            });
        }
        let dots = self.tangents(tangent);
        let adj = self.reverse(loss, Some(&dots));
        let mut grad = vec![0.0; n_params];
        let mut hv = vec![0.0; n_params];
        for (node, a) in self.nodes.iter().zip(&adj) {
            if let (Op::Param(range), Some((g, rg))) = (&node.op, a) {
                let rg = rg.as_ref().expect("tangent adjoint present");
                for ((dg, dh), (&g, &h)) in grad[range.clone()]
                    .iter_mut()
                    .zip(&mut hv[range.clone()])
                    .zip(g.data().iter().zip(rg.data()))
                {
                    *dg += g;
                    *dh += h;
                }
            }
        }
        Ok((grad, hv))
    }

    /// Forward directional derivative of every node value.
    fn tangents(&self, tangent: &[f64]) -> Vec<Tensor> {
        let mut dots: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let val = &node.value;
            let d = match &node.op {
                Op::Constant => Tensor::zeros(val.shape().to_vec()),
                Op::Param(range) => {
                    Tensor::new(val.shape().to_vec(), tangent[range.clone()].to_vec())
                        .expect("param tangent shape")
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (da, db) = (&dots[a.0], &dots[b.0]);
                    let l = da.matmul(vb).expect("shapes checked on forward");
                    let r = va.matmul(db).expect("shapes checked on forward");
                    l.zip_map(&r, |x, y| x + y)
                }
                Op::AddRow(x, b) => dots[x.0].add_row(&dots[b.0]).expect("checked"),
                Op::Add(a, b) => dots[a.0].zip_map(&dots[b.0], |x, y| x + y),
                Op::Sub(a, b) => dots[a.0].zip_map(&dots[b.0], |x, y| x - y),
                Op::Mul(a, b) => {
                    let l = dots[a.0].zip_map(self.value(*b), |x, y| x * y);
                    let r = self.value(*a).zip_map(&dots[b.0], |x, y| x * y);
                    l.zip_map(&r, |x, y| x + y)
                }
                Op::Relu(x) => dots[x.0].zip_map(self.value(*x), |d, a| if a > 0.0 { d } else { 0.0 }),
                Op::Tanh(x) => dots[x.0].zip_map(val, |d, y| d * (1.0 - y * y)),
                Op::Abs(x) => dots[x.0].zip_map(self.value(*x), |d, a| d * sign(a)),
                Op::Square(x) => dots[x.0].zip_map(self.value(*x), |d, a| 2.0 * a * d),
                Op::Sum(x) => Tensor::scalar(dots[x.0].sum()),
                Op::Mean(x) => Tensor::scalar(dots[x.0].sum() / dots[x.0].len() as f64),
            };
            dots.push(d);
        }
        dots
    }

    /// Reverse sweep. Each slot holds the adjoint and, when tangents are
    /// supplied, the adjoint's directional derivative.
    fn reverse(
        &self,
        loss: NodeId,
        dots: Option<&[Tensor]>,
    ) -> Vec<Option<(Tensor, Option<Tensor>)>> {
        let mut adj: Vec<Option<(Tensor, Option<Tensor>)>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some((
            Tensor::scalar(1.0),
            dots.map(|_| Tensor::scalar(0.0)),
        ));

        fn accumulate(
            slot: &mut Option<(Tensor, Option<Tensor>)>,
            g: Tensor,
            rg: Option<Tensor>,
        ) {
            match slot {
                None => *slot = Some((g, rg)),
                Some((acc, racc)) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                    if let (Some(racc), Some(rg)) = (racc.as_mut(), rg) {
                        for (a, b) in racc.data_mut().iter_mut().zip(rg.data()) {
                            *a += b;
                        }
                    }
                }
            }
        }

        fn add(a: Tensor, b: Tensor) -> Tensor {
            a.zip_map(&b, |x, y| x + y)
        }

        for i in (0..=loss.0).rev() {
            let Some((g, rg)) = adj[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            let dot = |id: NodeId| &dots.expect("tangent mode")[id.0];
            match &node.op {
                Op::Constant | Op::Param(_) => {
                    adj[i] = Some((g, rg));
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = g.matmul_t(vb);
                    let gb = va.t_matmul(&g);
                    let (rga, rgb) = match &rg {
                        Some(rg) => (
                            Some(add(rg.matmul_t(vb), g.matmul_t(dot(*b)))),
                            Some(add(dot(*a).t_matmul(&g), va.t_matmul(rg))),
                        ),
                        None => (None, None),
                    };
                    accumulate(&mut adj[a.0], ga, rga);
                    accumulate(&mut adj[b.0], gb, rgb);
                }
                Op::AddRow(x, b) => {
                    let gb = g.sum_rows();
                    let rgb = rg.as_ref().map(Tensor::sum_rows);
                    accumulate(&mut adj[b.0], gb, rgb);
                    accumulate(&mut adj[x.0], g, rg);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[a.0], g.clone(), rg.clone());
                    accumulate(&mut adj[b.0], g, rg);
                }
                Op::Sub(a, b) => {
                    let neg = g.map(|x| -x);
                    let rneg = rg.as_ref().map(|t| t.map(|x| -x));
                    accumulate(&mut adj[a.0], g, rg);
                    accumulate(&mut adj[b.0], neg, rneg);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = g.zip_map(vb, |x, y| x * y);
                    let gb = g.zip_map(va, |x, y| x * y);
                    let (rga, rgb) = match &rg {
                        Some(rg) => (
                            Some(add(rg.zip_map(vb, |x, y| x * y), g.zip_map(dot(*b), |x, y| x * y))),
                            Some(add(rg.zip_map(va, |x, y| x * y), g.zip_map(dot(*a), |x, y| x * y))),
                        ),
                        None => (None, None),
                    };
                    accumulate(&mut adj[a.0], ga, rga);
                    accumulate(&mut adj[b.0], gb, rgb);
                }
                Op::Relu(x) => {
                    let vx = self.value(*x);
                    let mask = |t: &Tensor| t.zip_map(vx, |g, a| if a > 0.0 { g } else { 0.0 });
                    let gx = mask(&g);
                    let rgx = rg.as_ref().map(mask);
                    accumulate(&mut adj[x.0], gx, rgx);
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let gx = g.zip_map(y, |g, y| g * (1.0 - y * y));
                    let rgx = rg.as_ref().map(|rg| {
                        let dy = &dot(NodeId(i));
                        let first = rg.zip_map(y, |r, y| r * (1.0 - y * y));
                        let second = g
                            .zip_map(y, |g, y| -2.0 * g * y)
                            .zip_map(dy, |a, d| a * d);
                        add(first, second)
                    });
                    accumulate(&mut adj[x.0], gx, rgx);
                }
                Op::Abs(x) => {
                    let vx = self.value(*x);
                    let gx = g.zip_map(vx, |g, a| g * sign(a));
                    let rgx = rg.as_ref().map(|r| r.zip_map(vx, |r, a| r * sign(a)));
                    accumulate(&mut adj[x.0], gx, rgx);
                }
                Op::Square(x) => {
                    let vx = self.value(*x);
                    let gx = g.zip_map(vx, |g, a| 2.0 * a * g);
                    let rgx = rg.as_ref().map(|rg| {
                        add(
                            rg.zip_map(vx, |r, a| 2.0 * a * r),
                            g.zip_map(dot(*x), |g, d| 2.0 * d * g),
                        )
                    });
                    accumulate(&mut adj[x.0], gx, rgx);
                }
                Op::Sum(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    let n = self.value(*x).len();
                    let gx = Tensor::new(shape.clone(), vec![g.data()[0]; n]).expect("shape");
                    let rgx = rg
                        .as_ref()
                        .map(|r| Tensor::new(shape.clone(), vec![r.data()[0]; n]).expect("shape"));
                    accumulate(&mut adj[x.0], gx, rgx);
                }
                Op::Mean(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    let n = self.value(*x).len();
                    let scale = 1.0 / n as f64;
                    let gx = Tensor::new(shape.clone(), vec![g.data()[0] * scale; n]).expect("shape");
                    let rgx = rg.as_ref().map(|r| {
                        Tensor::new(shape.clone(), vec![r.data()[0] * scale; n]).expect("shape")
                    });
                    accumulate(&mut adj[x.0], gx, rgx);
                }
            }
        }
        adj
    }
}
