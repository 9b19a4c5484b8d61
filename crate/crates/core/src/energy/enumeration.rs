//! Brute-force oracles: exact log partition functions and full joint
//! probability tables for desk-scale models.
//!
//! The RBM partition function enumerates the smaller side and collapses the
//! other side analytically; the DBM enumerates the middle layer, given which
//! both neighbors factorize. Hidden-side sums walk configurations in Gray
//! order so each step updates one coupling column.

use crate::array::{logsumexp, softplus, DenseArray};
use crate::error::{Error, Result};

use super::{DbmParams, EnergyModel, GrbmParams, RbmParams};

/// Flat bit codes: unit `j` of a layer is bit `j` of the code.
pub fn code_bits(code: usize, d: usize) -> Vec<f64> {
    (0..d).map(|j| ((code >> j) & 1) as f64).collect()
}

const LOG_Z_BUDGET_BITS: usize = 25;
const JOINT_BUDGET_BITS: usize = 20;

/// Exact log partition function by analytic marginalization plus
/// enumeration of one side.
pub fn exact_log_z(model: &EnergyModel) -> Result<f64> {
    match model {
        EnergyModel::Rbm(p) => rbm_log_z(p),
        EnergyModel::Grbm(p) => grbm_log_z(p),
        EnergyModel::Dbm(p) => dbm_log_z(p),
    }
}

fn rbm_log_z(p: &RbmParams) -> Result<f64> {
    let (d_v, d_h) = p.dims();
    let side = d_v.min(d_h);
    if side > LOG_Z_BUDGET_BITS {
        return Err(Error::BudgetExceeded(format!(
            "rbm log Z needs 2^{side} states; budget is 2^{LOG_Z_BUDGET_BITS}"
        )));
    }
    let lz = if d_h <= d_v {
        // log Z = logsumexp_h [ c.h + sum_i softplus(b_i + (W h)_i) ]
        let b = p.b.value.values();
        hidden_side_sum(&p.w.value, p.c.value.values(), |acc| {
            acc.iter().zip(b).map(|(&a, &bi)| softplus(bi + a)).sum()
        })
    } else {
        // symmetric form over v with roles of b and c swapped
        let wt = p.w.value.transpose();
        let c = p.c.value.values();
        hidden_side_sum(&wt, p.b.value.values(), |acc| {
            acc.iter().zip(c).map(|(&a, &cj)| softplus(cj + a)).sum()
        })
    };
    Ok(lz - p.energy_offset)
}

fn grbm_log_z(p: &GrbmParams) -> Result<f64> {
    let (d_v, d_h) = p.dims();
    if d_h > LOG_Z_BUDGET_BITS {
        return Err(Error::BudgetExceeded(format!(
            "grbm log Z needs 2^{d_h} states; budget is 2^{LOG_Z_BUDGET_BITS}"
        )));
    }
    // log Z = logsumexp_h [ c.h + ||b + sigma W h||^2 / (2 sigma^2)
    //                       - ||b||^2 / (2 sigma^2) ] + (d_v/2) log(2 pi sigma^2)
    // (Gaussian integral over v; verified against quadrature in tests.)
    let s = p.sigma;
    let b = p.b.value.values();
    let b_sq: f64 = b.iter().map(|&x| x * x).sum();
    let lz = hidden_side_sum(&p.w.value, p.c.value.values(), |wh| {
        let m_sq: f64 = wh
            .iter()
            .zip(b)
            .map(|(&whi, &bi)| {
                let m = bi + s * whi;
                m * m
            })
            .sum();
        (m_sq - b_sq) / (2.0 * s * s)
    });
    Ok(lz + 0.5 * d_v as f64 * (std::f64::consts::TAU * s * s).ln() - p.energy_offset)
}

fn dbm_log_z(p: &DbmParams) -> Result<f64> {
    let (d_v, d_h1, d_h2) = p.dims();
    if d_v + d_h1 + d_h2 > LOG_Z_BUDGET_BITS {
        return Err(Error::BudgetExceeded(format!(
            "dbm log Z budget is {LOG_Z_BUDGET_BITS} total bits, got {}",
            d_v + d_h1 + d_h2
        )));
    }
    // enumerate h1; v and h2 factorize given h1
    let w1t = p.w1.value.transpose(); // [d_h1, d_v]
    let b = p.b.value.values();
    let c1 = p.c1.value.values();
    let c2 = p.c2.value.values();
    let mut terms = Vec::with_capacity(1 << d_h1);
    for code in 0..(1usize << d_h1) {
        let h1 = code_bits(code, d_h1);
        let bias: f64 = h1.iter().zip(c1).map(|(&x, &c)| x * c).sum();
        let v_part: f64 = (0..d_v)
            .map(|i| {
                let wi: f64 = h1.iter().enumerate().map(|(j, &x)| x * w1t.at(j, i)).sum();
                softplus(b[i] + wi)
            })
            .sum();
        let h2_part: f64 = (0..d_h2)
            .map(|k| {
                let wk: f64 = h1
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| x * p.w2.value.at(j, k))
                    .sum();
                softplus(c2[k] + wk)
            })
            .sum();
        terms.push(bias + v_part + h2_part);
    }
    Ok(logsumexp(&terms) - p.energy_offset)
}

/// Walks hidden configurations in Gray order, maintaining `W h` as an
/// accumulator, and returns `logsumexp_h [ c.h + collapse(W h) ]`.
fn hidden_side_sum(w: &DenseArray, hidden_bias: &[f64], collapse: impl Fn(&[f64]) -> f64) -> f64 {
    let d_v = w.shape()[0];
    let d_h = w.shape()[1];
    let mut acc = vec![0.0f64; d_v]; // W h for the current configuration
    let mut bias = 0.0f64; // c.h
    let mut gray = 0usize;
    let mut terms = Vec::with_capacity(1 << d_h);
    terms.push(bias + collapse(&acc));
    for i in 1..(1usize << d_h) {
        let next = i ^ (i >> 1);
        let bit = (gray ^ next).trailing_zeros() as usize;
        let turned_on = next & (1 << bit) != 0;
        let sign = if turned_on { 1.0 } else { -1.0 };
        for (r, a) in acc.iter_mut().enumerate() {
            *a += sign * w.at(r, bit);
        }
        bias += sign * hidden_bias[bit];
        gray = next;
        terms.push(bias + collapse(&acc));
    }
    logsumexp(&terms)
}

/// Normalized joint probability table over every discrete configuration.
#[derive(Clone, Debug)]
pub struct JointTable {
    /// Layer bit-widths, visible first.
    pub layer_dims: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
    pub log_z: f64,
}

impl JointTable {
    /// Flat index of a configuration given per-layer codes (visible first).
    pub fn index(&self, codes: &[usize]) -> usize {
        assert_eq!(codes.len(), self.layer_dims.len());
        let mut idx = 0usize;
        for (code, &d) in codes.iter().zip(&self.layer_dims) {
            idx = (idx << d) | code;
        }
        idx
    }

    pub fn hidden_bits(&self) -> usize {
        self.layer_dims[1..].iter().sum()
    }

    /// Marginal over visible codes.
    pub fn v_marginal(&self) -> Vec<f64> {
        let hb = self.hidden_bits();
        let n_v = 1usize << self.layer_dims[0];
        let mut out = vec![0.0; n_v];
        for (vc, o) in out.iter_mut().enumerate() {
            let base = vc << hb;
            *o = self.probs[base..base + (1 << hb)].iter().sum();
        }
        out
    }

    /// Conditional distribution over all-hidden codes given a visible code.
    pub fn hidden_given_v(&self, v_code: usize) -> Vec<f64> {
        let hb = self.hidden_bits();
        let base = v_code << hb;
        let slice = &self.probs[base..base + (1 << hb)];
        let total: f64 = slice.iter().sum();
        slice.iter().map(|&p| p / total).collect()
    }
}

/// Enumerates the full joint of a binary model (RBM or DBM).
pub fn enumerate_joint(model: &EnergyModel) -> Result<JointTable> {
    let layer_dims: Vec<usize> = match model {
        EnergyModel::Rbm(p) => {
            let (dv, dh) = p.dims();
            vec![dv, dh]
        }
        EnergyModel::Dbm(p) => {
            let (dv, dh1, dh2) = p.dims();
            vec![dv, dh1, dh2]
        }
        EnergyModel::Grbm(_) => {
            return Err(Error::Incompatible {
                method: "joint enumeration".into(),
                model: "grbm (continuous visibles)".into(),
            })
        }
    };
    let total_bits: usize = layer_dims.iter().sum();
    if total_bits > JOINT_BUDGET_BITS {
        return Err(Error::BudgetExceeded(format!(
            "joint table budget is {JOINT_BUDGET_BITS} bits, got {total_bits}"
        )));
    }

    let size = 1usize << total_bits;
    let mut neg_energy = Vec::with_capacity(size);
    match model {
        EnergyModel::Rbm(p) => {
            let (dv, dh) = p.dims();
            for vc in 0..(1usize << dv) {
                let v = DenseArray::new(vec![1, dv], code_bits(vc, dv))?;
                for hc in 0..(1usize << dh) {
                    let h = DenseArray::new(vec![1, dh], code_bits(hc, dh))?;
                    neg_energy.push(-model.energy_batch(&v, &[&h])?[0]);
                }
            }
        }
        EnergyModel::Dbm(p) => {
            let (dv, dh1, dh2) = p.dims();
            for vc in 0..(1usize << dv) {
                let v = DenseArray::new(vec![1, dv], code_bits(vc, dv))?;
                for h1c in 0..(1usize << dh1) {
                    let h1 = DenseArray::new(vec![1, dh1], code_bits(h1c, dh1))?;
                    for h2c in 0..(1usize << dh2) {
                        let h2 = DenseArray::new(vec![1, dh2], code_bits(h2c, dh2))?;
                        neg_energy.push(-model.energy_batch(&v, &[&h1, &h2])?[0]);
                    }
                }
            }
        }
        EnergyModel::Grbm(_) => unreachable!(),
    }

    let log_z = logsumexp(&neg_energy);
    let log_probs: Vec<f64> = neg_energy.iter().map(|&e| e - log_z).collect();
    let probs: Vec<f64> = log_probs.iter().map(|&lp| lp.exp()).collect();
    Ok(JointTable {
        layer_dims,
        log_probs,
        probs,
        log_z,
    })
}

/// DBM free energies by enumeration of the middle layer.
pub fn dbm_free_energy_enum(p: &DbmParams, v: &DenseArray) -> Result<Vec<f64>> {
    let (d_v, d_h1, d_h2) = p.dims();
    if d_h1 > LOG_Z_BUDGET_BITS {
        return Err(Error::BudgetExceeded(format!(
            "dbm free energy needs 2^{d_h1} states; budget is 2^{LOG_Z_BUDGET_BITS}"
        )));
    }
    if v.cols() != d_v {
        return Err(Error::DimMismatch(format!(
            "visible width {} does not match model d_v {d_v}",
            v.cols()
        )));
    }
    let vw1 = v.matmul(&p.w1.value)?;
    let b = p.b.value.values();
    let c1 = p.c1.value.values();
    let c2 = p.c2.value.values();
    let mut out = Vec::with_capacity(v.rows());
    for r in 0..v.rows() {
        let vb: f64 = v.row(r).iter().zip(b).map(|(&x, &bi)| x * bi).sum();
        let mut terms = Vec::with_capacity(1 << d_h1);
        for code in 0..(1usize << d_h1) {
            let h1 = code_bits(code, d_h1);
            let hc: f64 = h1.iter().zip(c1).map(|(&x, &c)| x * c).sum();
            let coupling: f64 = vw1.row(r).iter().zip(&h1).map(|(&x, &hj)| x * hj).sum();
            let top: f64 = (0..d_h2)
                .map(|k| {
                    let wk: f64 = h1
                        .iter()
                        .enumerate()
                        .map(|(j, &x)| x * p.w2.value.at(j, k))
                        .sum();
                    softplus(c2[k] + wk)
                })
                .sum();
            terms.push(vb + hc + coupling + top);
        }
        out.push(-logsumexp(&terms) + p.energy_offset);
    }
    Ok(out)
}
