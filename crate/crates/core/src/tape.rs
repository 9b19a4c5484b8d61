//! Recorded operation graphs with reverse-mode gradient evaluation.
//!
//! A `Tape` owns an append-only list of nodes. Forward values are computed
//! eagerly at record time (shapes and domains validated, results checked
//! finite), and `backward` walks the tape in reverse to accumulate adjoints.
//! Nodes are identified by index, so parents always precede children.
//!
//! A tape is single-threaded; distinct tapes may be used concurrently.

use std::collections::BTreeMap;

use crate::array::{logsumexp, sigmoid, softplus, DenseArray};
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Gradients keyed by leaf name. BTreeMap keeps iteration deterministic.
pub type GradMap = BTreeMap<String, DenseArray>;

/// Which parameter family a block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Theta,
    Phi,
    Psi,
}

/// A named trainable array with a fixed role.
#[derive(Clone, Debug)]
pub struct ParamBlock {
    name: String,
    pub value: DenseArray,
    role: Role,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, value: DenseArray, role: Role) -> Self {
        ParamBlock {
            name: name.into(),
            value,
            role,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn role(&self) -> Role {
        self.role
    }
}

#[derive(Clone, Debug)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Scale(f64),
    MatMul,
    Sigmoid,
    Tanh,
    Softplus,
    Log,
    Exp,
    Square,
    Neg,
    Sum,
    Mean,
    LogSumExp,
    /// Replicates a length-d vector into the given number of rows.
    BroadcastRow(usize),
}

enum NodeKind {
    Leaf,
    Constant,
    Op(OpKind),
}

struct Node {
    kind: NodeKind,
    parents: Vec<NodeId>,
    value: DenseArray,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaves: BTreeMap<String, NodeId>,
}

const EXP_MAX_ARG: f64 = 709.0;

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

    pub fn value(&self, id: NodeId) -> &DenseArray {
        &self.nodes[id].value
    }

    /// Registers a parameter block as a differentiable leaf. Idempotent:
    /// registering the same name again returns the existing node.
    pub fn leaf(&mut self, block: &ParamBlock) -> Result<NodeId> {
        if let Some(&id) = self.leaves.get(block.name()) {
            if self.nodes[id].value.shape() != block.value.shape() {
                return Err(Error::LeafShape {
                    name: block.name().to_string(),
                });
            }
            return Ok(id);
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            kind: NodeKind::Leaf,
            parents: Vec::new(),
            value: block.value.clone(),
        });
        self.leaves.insert(block.name().to_string(), id);
        Ok(id)
    }

    /// Appends a non-differentiable value (data, noise, detached samples).
    pub fn constant(&mut self, value: DenseArray) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            kind: NodeKind::Constant,
            parents: Vec::new(),
            value,
        });
        id
    }

    /// Records one operation, computing its forward value eagerly.
    pub fn record(&mut self, kind: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        let value = self.eval(&kind, inputs)?;
        value.ensure_finite(op_name(&kind))?;
        let id = self.nodes.len();
        self.nodes.push(Node {
            kind: NodeKind::Op(kind),
            parents: inputs.to_vec(),
            value,
        });
        Ok(id)
    }

    fn eval(&self, kind: &OpKind, inputs: &[NodeId]) -> Result<DenseArray> {
        let val = |i: usize| &self.nodes[inputs[i]].value;
        match kind {
            OpKind::Add => val(0).add(val(1)),
            OpKind::Sub => val(0).sub(val(1)),
            OpKind::Mul => val(0).mul_elem(val(1)),
            OpKind::Scale(c) => Ok(val(0).scale(*c)),
            OpKind::MatMul => val(0).matmul(val(1)),
            OpKind::Sigmoid => Ok(val(0).map(sigmoid)),
            OpKind::Tanh => Ok(val(0).map(f64::tanh)),
            OpKind::Softplus => Ok(val(0).map(softplus)),
            OpKind::Log => {
                let x = val(0);
                if let Some(bad) = x.values().iter().find(|&&v| v <= 0.0) {
                    return Err(Error::Domain {
                        op: "log",
                        detail: format!("argument {bad} is not positive"),
                    });
                }
                Ok(x.map(f64::ln))
            }
            OpKind::Exp => {
                let x = val(0);
                if let Some(bad) = x.values().iter().find(|&&v| v > EXP_MAX_ARG) {
                    return Err(Error::Domain {
                        op: "exp",
                        detail: format!("argument {bad} would overflow"),
                    });
                }
                Ok(x.map(f64::exp))
            }
            OpKind::Square => Ok(val(0).map(|v| v * v)),
            OpKind::Neg => Ok(val(0).scale(-1.0)),
            OpKind::Sum => Ok(DenseArray::scalar(val(0).sum())),
            OpKind::Mean => Ok(DenseArray::scalar(val(0).mean())),
            OpKind::LogSumExp => Ok(DenseArray::scalar(logsumexp(val(0).values()))),
            OpKind::BroadcastRow(rows) => {
                let x = val(0);
                let vec = x.as_vector().ok_or_else(|| Error::ShapeMismatch {
                    op: "broadcast-row",
                    left: x.shape().to_vec(),
                    right: vec![*rows],
                })?;
                let d = vec.len();
                let mut out = Vec::with_capacity(rows * d);
                for _ in 0..*rows {
                    out.extend_from_slice(vec);
                }
                DenseArray::new(vec![*rows, d], out)
            }
        }
    }

    /// Reverse sweep from a scalar root. Returns gradients for every
    /// registered leaf; leaves not reachable from the root map to zeros.
    pub fn backward(&self, root: NodeId) -> Result<GradMap> {
        if !self.nodes[root].value.is_scalar() {
            return Err(Error::NonScalarRoot {
                shape: self.nodes[root].value.shape().to_vec(),
            });
        }
        let mut adjoints: Vec<Option<DenseArray>> = vec![None; self.nodes.len()];
        adjoints[root] = Some(DenseArray::scalar(1.0));

        for id in (0..=root).rev() {
            let Some(g) = adjoints[id].take() else {
                continue;
            };
            match &self.nodes[id].kind {
                NodeKind::Leaf | NodeKind::Constant => {
                    adjoints[id] = Some(g);
                    continue;
                }
                NodeKind::Op(kind) => {
                    self.push_adjoints(
                        kind,
                        &self.nodes[id].parents,
                        &self.nodes[id].value,
                        &g,
                        &mut adjoints,
                    )?;
                }
            }
        }

        let mut grads = GradMap::new();
        for (name, &id) in &self.leaves {
            let g = adjoints[id]
                .take()
                .unwrap_or_else(|| DenseArray::zeros(self.nodes[id].value.shape()));
            grads.insert(name.clone(), g);
        }
        Ok(grads)
    }

    fn push_adjoints(
        &self,
        kind: &OpKind,
        parents: &[NodeId],
        out_val: &DenseArray,
        g: &DenseArray,
        adjoints: &mut [Option<DenseArray>],
    ) -> Result<()> {
        let acc =
            |adjoints: &mut [Option<DenseArray>], id: NodeId, delta: DenseArray| -> Result<()> {
                match &mut adjoints[id] {
                    Some(a) => {
                        *a = a.add(&delta)?;
                    }
                    slot @ None => *slot = Some(delta),
                }
                Ok(())
            };
        let pval = |i: usize| &self.nodes[parents[i]].value;

        match kind {
            OpKind::Add => {
                acc(adjoints, parents[0], g.clone())?;
                acc(adjoints, parents[1], g.clone())?;
            }
            OpKind::Sub => {
                acc(adjoints, parents[0], g.clone())?;
                acc(adjoints, parents[1], g.scale(-1.0))?;
            }
            OpKind::Mul => {
                acc(adjoints, parents[0], g.mul_elem(pval(1))?)?;
                acc(adjoints, parents[1], g.mul_elem(pval(0))?)?;
            }
            OpKind::Scale(c) => acc(adjoints, parents[0], g.scale(*c))?,
            OpKind::MatMul => {
                acc(adjoints, parents[0], g.matmul_nt(pval(1))?)?;
                acc(adjoints, parents[1], pval(0).matmul_tn(g)?)?;
            }
            OpKind::Sigmoid => {
                let d = out_val.map(|y| y * (1.0 - y));
                acc(adjoints, parents[0], g.mul_elem(&d)?)?;
            }
            OpKind::Tanh => {
                let d = out_val.map(|y| 1.0 - y * y);
                acc(adjoints, parents[0], g.mul_elem(&d)?)?;
            }
            OpKind::Softplus => {
                let d = pval(0).map(sigmoid);
                acc(adjoints, parents[0], g.mul_elem(&d)?)?;
            }
            OpKind::Log => {
                let d = pval(0).map(|x| 1.0 / x);
                acc(adjoints, parents[0], g.mul_elem(&d)?)?;
            }
            OpKind::Exp => acc(adjoints, parents[0], g.mul_elem(out_val)?)?,
            OpKind::Square => {
                let d = pval(0).scale(2.0);
                acc(adjoints, parents[0], g.mul_elem(&d)?)?;
            }
            OpKind::Neg => acc(adjoints, parents[0], g.scale(-1.0))?,
            OpKind::Sum => {
                acc(
                    adjoints,
                    parents[0],
                    DenseArray::full(pval(0).shape(), g.item()),
                )?;
            }
            OpKind::Mean => {
                let n = pval(0).len() as f64;
                acc(
                    adjoints,
                    parents[0],
                    DenseArray::full(pval(0).shape(), g.item() / n),
                )?;
            }
            OpKind::LogSumExp => {
                let y = out_val.item();
                let soft = pval(0).map(|x| (x - y).exp());
                acc(adjoints, parents[0], soft.scale(g.item()))?;
            }
            OpKind::BroadcastRow(rows) => {
                let d = pval(0).len();
                let mut col = vec![0.0; d];
                for r in 0..*rows {
                    for (c, acc_c) in col.iter_mut().enumerate() {
                        *acc_c += g.values()[r * d + c];
                    }
                }
                let delta = DenseArray::new(pval(0).shape().to_vec(), col)?;
                acc(adjoints, parents[0], delta)?;
            }
        }
        Ok(())
    }
}

// ── Convenience wrappers ─────────────────────────────────────────────

impl Tape {
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(OpKind::Add, &[a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(OpKind::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(OpKind::Mul, &[a, b])
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.record(OpKind::Scale(c), &[a])
    }
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(OpKind::MatMul, &[a, b])
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Sigmoid, &[a])
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Tanh, &[a])
    }
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Softplus, &[a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Log, &[a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Exp, &[a])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Square, &[a])
    }
    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Neg, &[a])
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Sum, &[a])
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::Mean, &[a])
    }
    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(OpKind::LogSumExp, &[a])
    }
    pub fn broadcast_row(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        self.record(OpKind::BroadcastRow(rows), &[a])
    }

    /// `x W + b` for a batch `x: [n, d_in]`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let rows = self.value(x).rows();
        let xw = self.matmul(x, w)?;
        let bb = self.broadcast_row(b, rows)?;
        self.add(xw, bb)
    }

    /// Row sums of an `[n, d]` matrix as `[n, 1]`.
    pub fn row_sums(&mut self, x: NodeId) -> Result<NodeId> {
        let d = self.value(x).cols();
        let ones = self.constant(DenseArray::full(&[d, 1], 1.0));
        self.matmul(x, ones)
    }

    /// `1 - x` elementwise.
    pub fn one_minus(&mut self, x: NodeId) -> Result<NodeId> {
        let ones = self.constant(DenseArray::full(self.value(x).shape(), 1.0));
        self.sub(ones, x)
    }

    /// Row-wise log-sum-exp of `[n, d]` as `[n, 1]`, built from the core
    /// op set with a detached per-row max (the gradient is exact anyway).
    pub fn logsumexp_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let (n, d) = (v.rows(), v.cols());
        let maxes: Vec<f64> = (0..n)
            .map(|r| v.row(r).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let m = self.constant(DenseArray::new(vec![n, 1], maxes)?);
        let ones_row = self.constant(DenseArray::full(&[1, d], 1.0));
        let spread = self.matmul(m, ones_row)?;
        let shifted = self.sub(x, spread)?;
        let e = self.exp(shifted)?;
        let s = self.row_sums(e)?;
        let ls = self.log(s)?;
        self.add(m, ls)
    }

    /// `log sigmoid(x)` as `-softplus(-x)`.
    pub fn log_sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let nx = self.neg(x)?;
        let sp = self.softplus(nx)?;
        self.neg(sp)
    }
}

fn op_name(kind: &OpKind) -> &'static str {
    match kind {
        OpKind::Add => "add",
        OpKind::Sub => "sub",
        OpKind::Mul => "mul",
        OpKind::Scale(_) => "scale",
        OpKind::MatMul => "matmul",
        OpKind::Sigmoid => "sigmoid",
        OpKind::Tanh => "tanh",
        OpKind::Softplus => "softplus",
        OpKind::Log => "log",
        OpKind::Exp => "exp",
        OpKind::Square => "square",
        OpKind::Neg => "neg",
        OpKind::Sum => "sum",
        OpKind::Mean => "mean",
        OpKind::LogSumExp => "logsumexp",
        OpKind::BroadcastRow(_) => "broadcast-row",
    }
}
