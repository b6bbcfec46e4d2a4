//! A minimal eager reverse-mode tape over `Vec<f64>` values.
//!
//! Forward calls compute values immediately (reading weights from a
//! [`ModelParams`]); [`Tape::backward`] replays the recorded ops in reverse
//! and accumulates parameter gradients into a same-shape container. The
//! parameter set must not change between recording and backward.

use super::params::{BlockRef, ModelParams};

/// Index of a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    ParamRow { block: BlockRef, row: usize },
    Sum { parts: Vec<NodeId> },
    Scale { x: NodeId, c: f64 },
    MatVec { block: BlockRef, x: NodeId },
    Concat { parts: Vec<NodeId> },
    Dot { a: NodeId, b: NodeId },
    LeakyRelu { x: NodeId, slope: f64 },
    Relu { x: NodeId },
    Sigmoid { x: NodeId },
    Softmax { x: NodeId },
    WeightedSum { weights: NodeId, values: Vec<NodeId> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Recorded computation; one tape per training batch.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// The scalar held by a length-1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant leaf; receives no gradient.
    pub fn input(&mut self, value: Vec<f64>) -> NodeId {
        self.push(Op::Input, value)
    }

    /// One row of a parameter tensor; gradients flow into that row.
    pub fn param_row(&mut self, params: &ModelParams, block: BlockRef, row: usize) -> NodeId {
        let value = params.mat(block).row(row).to_vec();
        self.push(Op::ParamRow { block, row }, value)
    }

    /// Elementwise sum of equal-length nodes.
    pub fn sum(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "sum over no nodes");
        let mut value = self.nodes[parts[0].0].value.clone();
        for p in &parts[1..] {
            let v = &self.nodes[p.0].value;
            assert_eq!(v.len(), value.len(), "sum length mismatch");
            value.iter_mut().zip(v).for_each(|(acc, x)| *acc += x);
        }
        self.push(Op::Sum { parts: parts.to_vec() }, value)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|v| c * v).collect();
        self.push(Op::Scale { x, c }, value)
    }

    /// `W · x` with `W` taken from the parameter tensor `block`.
    pub fn matvec(&mut self, params: &ModelParams, block: BlockRef, x: NodeId) -> NodeId {
        let value = params.mat(block).matvec(&self.nodes[x.0].value);
        self.push(Op::MatVec { block, x }, value)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of no nodes");
        let mut value = Vec::new();
        for p in parts {
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(Op::Concat { parts: parts.to_vec() }, value)
    }

    /// Inner product; yields a length-1 node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.len(), vb.len(), "dot length mismatch");
        let value = vec![va.iter().zip(vb).map(|(x, y)| x * y).sum()];
        self.push(Op::Dot { a, b }, value)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let value = self.nodes[x.0]
            .value
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        self.push(Op::LeakyRelu { x, slope }, value)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|&v| v.max(0.0)).collect();
        self.push(Op::Relu { x }, value)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0]
            .value
            .iter()
            .map(|&v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        self.push(Op::Sigmoid { x }, value)
    }

    /// Numerically stable softmax over the whole node.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let v = &self.nodes[x.0].value;
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.iter().map(|&e| (e - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let value = exps.into_iter().map(|e| e / total).collect();
        self.push(Op::Softmax { x }, value)
    }

    /// `Σ_i weights[i] · values_i` where `weights` has one entry per value node.
    pub fn weighted_sum(&mut self, weights: NodeId, values: &[NodeId]) -> NodeId {
        let w = self.nodes[weights.0].value.clone();
        assert_eq!(w.len(), values.len(), "one weight per value node");
        assert!(!values.is_empty(), "weighted sum over no nodes");
        let dim = self.nodes[values[0].0].value.len();
        let mut value = vec![0.0; dim];
        for (wi, vid) in w.iter().zip(values) {
            let v = &self.nodes[vid.0].value;
            assert_eq!(v.len(), dim, "weighted sum length mismatch");
            value.iter_mut().zip(v).for_each(|(acc, x)| *acc += wi * x);
        }
        self.push(Op::WeightedSum { weights, values: values.to_vec() }, value)
    }

    /// Reverse pass. Each seed is a (scalar node, adjoint) pair; parameter
    /// gradients accumulate into `grads`, which must share `params`' shapes.
    pub fn backward(&self, params: &ModelParams, seeds: &[(NodeId, f64)], grads: &mut ModelParams) {
        let mut adj: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        for &(id, s) in seeds {
            assert_eq!(self.nodes[id.0].value.len(), 1, "seeds must be scalar nodes");
            adj[id.0][0] += s;
        }

        for i in (0..self.nodes.len()).rev() {
            if adj[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut adj[i]);
            match &self.nodes[i].op {
                Op::Input => {}
                Op::ParamRow { block, row } => {
                    let dst = grads.mat_mut(*block);
                    dst.row_mut(*row).iter_mut().zip(&g).for_each(|(d, x)| *d += x);
                }
                Op::Sum { parts } => {
                    for p in parts {
                        adj[p.0].iter_mut().zip(&g).for_each(|(a, x)| *a += x);
                    }
                }
                Op::Scale { x, c } => {
                    adj[x.0].iter_mut().zip(&g).for_each(|(a, v)| *a += c * v);
                }
                Op::MatVec { block, x } => {
                    let w = params.mat(*block);
                    let xv = &self.nodes[x.0].value;
                    {
                        let gw = grads.mat_mut(*block);
                        for (r, &gr) in g.iter().enumerate().take(w.rows) {
                            let grow = gw.row_mut(r);
                            for c in 0..w.cols {
                                grow[c] += gr * xv[c];
                            }
                        }
                    }
                    let gx = &mut adj[x.0];
                    for (r, &gr) in g.iter().enumerate().take(w.rows) {
                        let wrow = w.row(r);
                        for c in 0..w.cols {
                            gx[c] += wrow[c] * gr;
                        }
                    }
                }
                Op::Concat { parts } => {
                    let mut cursor = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        adj[p.0]
                            .iter_mut()
                            .zip(&g[cursor..cursor + len])
                            .for_each(|(a, x)| *a += x);
                        cursor += len;
                    }
                }
                Op::Dot { a, b } => {
                    let (va, vb) = (self.nodes[a.0].value.clone(), self.nodes[b.0].value.clone());
                    adj[a.0].iter_mut().zip(&vb).for_each(|(ga, x)| *ga += g[0] * x);
                    adj[b.0].iter_mut().zip(&va).for_each(|(gb, x)| *gb += g[0] * x);
                }
                Op::LeakyRelu { x, slope } => {
                    let xv = &self.nodes[x.0].value;
                    adj[x.0]
                        .iter_mut()
                        .zip(xv.iter().zip(&g))
                        .for_each(|(a, (&v, gr))| *a += gr * if v > 0.0 { 1.0 } else { *slope });
                }
                Op::Relu { x } => {
                    let xv = &self.nodes[x.0].value;
                    adj[x.0]
                        .iter_mut()
                        .zip(xv.iter().zip(&g))
                        .for_each(|(a, (&v, gr))| *a += if v > 0.0 { *gr } else { 0.0 });
                }
                Op::Sigmoid { x } => {
                    let y = &self.nodes[i].value;
                    adj[x.0]
                        .iter_mut()
                        .zip(y.iter().zip(&g))
                        .for_each(|(a, (&s, gr))| *a += gr * s * (1.0 - s));
                }
                Op::Softmax { x } => {
                    let y = &self.nodes[i].value;
                    let inner: f64 = y.iter().zip(&g).map(|(s, gr)| s * gr).sum();
                    adj[x.0]
                        .iter_mut()
                        .zip(y.iter().zip(&g))
                        .for_each(|(a, (&s, gr))| *a += s * (gr - inner));
                }
                Op::WeightedSum { weights, values } => {
                    let w = self.nodes[weights.0].value.clone();
                    for (k, vid) in values.iter().enumerate() {
                        let vv = self.nodes[vid.0].value.clone();
                        adj[vid.0].iter_mut().zip(&g).for_each(|(a, gr)| *a += w[k] * gr);
                        adj[weights.0][k] += g.iter().zip(&vv).map(|(gr, x)| gr * x).sum::<f64>();
                    }
                }
            }
        }
    }
}
