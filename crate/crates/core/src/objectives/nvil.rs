//! Variational upper bound of the partition function through a tractable
//! sampler `q(v)`: `E_q[(P~(v)/q(v))^2] >= Z^2`, so half the log of the
//! left side over-estimates `log Z`. Valid only while the support of `q`
//! covers the support of `P~`.

use crate::array::{logsumexp, sigmoid, DenseArray};
use crate::energy::enumeration::code_bits;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tape::{NodeId, ParamBlock, Role, Tape};
use crate::variational::PROB_CLAMP;

use super::{BatchEstimate, Objective};

/// Mixture of factorized Bernoullis over the visibles. Component
/// probabilities are `sigmoid` of a `[d_v, K]` logit block; mixture
/// weights are a softmax over a `[K, 1]` block. Both train by gradient.
#[derive(Clone, Debug)]
pub struct BernoulliMixture {
    pub comp_logits: ParamBlock,
    pub weight_logits: ParamBlock,
}

impl BernoulliMixture {
    pub fn random(d_v: usize, k: usize, rng: &mut Prng) -> Self {
        BernoulliMixture {
            comp_logits: ParamBlock::new(
                "q.components",
                DenseArray::new(
                    vec![d_v, k],
                    (0..d_v * k).map(|_| rng.normal() * 0.01).collect(),
                )
                .expect("finite init"),
                Role::Psi,
            ),
            weight_logits: ParamBlock::new("q.weights", DenseArray::zeros(&[k, 1]), Role::Psi),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (
            self.comp_logits.value.shape()[0],
            self.comp_logits.value.shape()[1],
        )
    }

    pub fn blocks(&self) -> [&ParamBlock; 2] {
        [&self.comp_logits, &self.weight_logits]
    }

    pub fn blocks_mut(&mut self) -> [&mut ParamBlock; 2] {
        [&mut self.comp_logits, &mut self.weight_logits]
    }

    fn mixture_log_weights(&self) -> Vec<f64> {
        let lse = logsumexp(self.weight_logits.value.values());
        self.weight_logits
            .value
            .values()
            .iter()
            .map(|&w| w - lse)
            .collect()
    }

    /// `log q(v)` per row, value domain.
    pub fn log_density_raw(&self, v: &DenseArray) -> Vec<f64> {
        let (d_v, k) = self.dims();
        let logw = self.mixture_log_weights();
        (0..v.rows())
            .map(|r| {
                let row = v.row(r);
                let per_comp: Vec<f64> = (0..k)
                    .map(|kk| {
                        let mut acc = logw[kk];
                        for i in 0..d_v {
                            let p = squeeze_prob(sigmoid(self.comp_logits.value.at(i, kk)));
                            acc += if row[i] > 0.5 { p.ln() } else { (1.0 - p).ln() };
                        }
                        acc
                    })
                    .collect();
                logsumexp(&per_comp)
            })
            .collect()
    }

    /// Ancestral draw: component by weight, then factorized Bernoulli.
    pub fn sample_raw(&self, n: usize, rng: &mut Prng) -> DenseArray {
        let (d_v, k) = self.dims();
        let logw = self.mixture_log_weights();
        let weights: Vec<f64> = logw.iter().map(|&lw| lw.exp()).collect();
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut comp = k - 1;
            for (kk, &w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    comp = kk;
                    break;
                }
            }
            let row: Vec<f64> = (0..d_v)
                .map(|i| rng.bernoulli(sigmoid(self.comp_logits.value.at(i, comp))))
                .collect();
            rows.push(row);
        }
        DenseArray::from_rows(&rows).expect("rectangular")
    }

    /// `log q(v)` on the tape for a constant batch node (clamped
    /// probabilities, so the density never vanishes), `[n, 1]`.
    pub fn log_density_rows(&self, tape: &mut Tape, v: NodeId) -> Result<NodeId> {
        let n = tape.value(v).rows();
        let cl = tape.leaf(&self.comp_logits)?;
        let p = tape.sigmoid(cl)?;
        let p = {
            let scaled = tape.scale(p, 1.0 - 2.0 * PROB_CLAMP)?;
            let shift = tape.constant(DenseArray::full(tape.value(scaled).shape(), PROB_CLAMP));
            tape.add(scaled, shift)?
        };
        let logp = tape.log(p)?;
        let omp = tape.one_minus(p)?;
        let logomp = tape.log(omp)?;
        let pos = tape.matmul(v, logp)?; // [n, K]
        let omv = tape.one_minus(v)?;
        let neg = tape.matmul(omv, logomp)?;
        let mass = tape.add(pos, neg)?;
        let wl = tape.leaf(&self.weight_logits)?;
        let lse = tape.logsumexp(wl)?;
        let lse_col = tape.broadcast_row(lse, tape.value(wl).rows())?; // [K, 1]
        let logw = tape.sub(wl, lse_col)?;
        let logw_row = tape.broadcast_row(logw, n)?; // [n, K]
        let scored = tape.add(mass, logw_row)?;
        tape.logsumexp_rows(scored)
    }
}

/// Same affine squeeze the tape path applies before taking logs.
fn squeeze_prob(p: f64) -> f64 {
    PROB_CLAMP + (1.0 - 2.0 * PROB_CLAMP) * p
}

/// Monte Carlo estimate of the log partition upper bound on a
/// caller-provided tape: `1/2 log mean_i exp(2 (log P~(v_i) - log q(v_i)))`,
/// differentiable in both the model and the mixture parameters (samples
/// held fixed, matching the reference training protocol).
pub fn nvil_bound_on(
    tape: &mut Tape,
    model: &EnergyModel,
    q: &BernoulliMixture,
    n_samples: usize,
    rng: &mut Prng,
) -> Result<NodeId> {
    if n_samples == 0 {
        return Err(Error::Domain {
            op: "nvil_bound",
            detail: "need at least one sample".into(),
        });
    }
    let (d_v, _) = q.dims();
    if d_v != model.d_v() {
        return Err(Error::DimMismatch(format!(
            "mixture width {d_v} does not match model d_v {}",
            model.d_v()
        )));
    }
    let samples = q.sample_raw(n_samples, rng);
    let v = tape.constant(samples);
    let f = model.free_energy_rows(tape, v)?;
    let log_q = q.log_density_rows(tape, v)?;
    // 2 (log P~ - log q) = -2 F - 2 log q
    let s = tape.add(f, log_q)?;
    let s = tape.scale(s, -2.0)?;
    let lse = tape.logsumexp(s)?;
    let shifted = {
        let c = tape.constant(DenseArray::scalar(-((n_samples as f64).ln())));
        tape.add(lse, c)?
    };
    tape.scale(shifted, 0.5)
}

pub fn nvil_bound_mc(
    model: &EnergyModel,
    q: &BernoulliMixture,
    n_samples: usize,
    rng: &mut Prng,
) -> Result<Objective> {
    let mut tape = Tape::new();
    let root = nvil_bound_on(&mut tape, model, q, n_samples, rng)?;
    let estimate = BatchEstimate {
        value: tape.value(root).item(),
        n_neg: n_samples,
        ..Default::default()
    };
    Ok(Objective {
        root,
        tape,
        estimate,
    })
}

/// Exact bound value for a mixture by summing over all visibles.
pub fn nvil_bound_exact(model: &EnergyModel, q: &BernoulliMixture) -> Result<f64> {
    let d_v = model.d_v();
    let all_v = all_visible_configs(d_v)?;
    let log_q = q.log_density_raw(&all_v);
    exact_from_log_q(model, &all_v, &log_q)
}

/// Exact bound value for an arbitrary distribution over visibles given as
/// a table indexed by visible code. Zero mass anywhere is invalid support
/// (the unnormalized marginal is strictly positive).
pub fn nvil_bound_exact_table(model: &EnergyModel, q_v: &[f64]) -> Result<f64> {
    let d_v = model.d_v();
    if q_v.len() != 1 << d_v {
        return Err(Error::DimMismatch(format!(
            "table needs {} entries, got {}",
            1usize << d_v,
            q_v.len()
        )));
    }
    if let Some(idx) = q_v.iter().position(|&p| p <= 0.0) {
        return Err(Error::InvalidSupport(format!(
            "q assigns zero mass to visible code {idx} where the model is positive"
        )));
    }
    let all_v = all_visible_configs(d_v)?;
    let log_q: Vec<f64> = q_v.iter().map(|&p| p.ln()).collect();
    exact_from_log_q(model, &all_v, &log_q)
}

fn exact_from_log_q(model: &EnergyModel, all_v: &DenseArray, log_q: &[f64]) -> Result<f64> {
    // E_q[(P~/q)^2] = sum_v P~(v)^2 / q(v)
    let f = model.free_energy_batch(all_v)?;
    let terms: Vec<f64> = f
        .iter()
        .zip(log_q)
        .map(|(&fi, &lq)| -2.0 * fi - lq)
        .collect();
    Ok(0.5 * logsumexp(&terms))
}

fn all_visible_configs(d_v: usize) -> Result<DenseArray> {
    if d_v > 20 {
        return Err(Error::BudgetExceeded(format!(
            "exact bound enumerates 2^{d_v} visibles; budget is 2^20"
        )));
    }
    let rows: Vec<Vec<f64>> = (0..(1usize << d_v)).map(|vc| code_bits(vc, d_v)).collect();
    DenseArray::from_rows(&rows)
}
