//! Training objectives and gradient estimators.
//!
//! The central quantity is the two-phase surrogate
//!
//! ```text
//!   value = E_{data, Q(h|v)}[ E(v,h) + log Q(h|v) ]                (positive phase)
//!         - E_{q(v,h,z)}  [ E(v,h) + log q(v|h) + log q(h|z)
//!                           + log q(z) - log r(z|h) ]              (negative phase)
//! ```
//!
//! which lower-bounds the encoder's free-energy bound: the negative phase
//! replaces the decoder entropy by its auxiliary-variable lower bound, so
//! maximizing over the decoder and auxiliary parameters tightens the
//! partition-function estimate while minimization over the model and
//! encoder parameters drives learning. All expectations are Monte Carlo
//! with reparameterized (relaxed) samples; tabular encoder/decoder
//! overrides switch the corresponding phase to an exact sum for oracle
//! tests on enumerable models.

pub mod cd;
pub mod nvil;

use crate::array::DenseArray;
use crate::energy::enumeration::{code_bits, dbm_free_energy_enum, exact_log_z};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tape::{GradMap, NodeId, Tape};
use crate::variational::{
    aux_log_prob, decoder_log_terms, decoder_sample, encoder_forward, AuxNet, Decoder, Encoder,
    RelaxationConfig, TabularJoint, TabularPosterior,
};

pub use cd::{cd_grad, vcd_grad, CdStats};
pub use nvil::{
    nvil_bound_exact, nvil_bound_exact_table, nvil_bound_mc, nvil_bound_on, BernoulliMixture,
};

/// How the positive-phase energy treats the hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyMode {
    /// Energy at relaxed samples.
    Relaxed,
    /// Replace each layer by its Bernoulli probabilities where the energy
    /// is linear in that layer (exact in expectation; lower variance).
    AnalyticLinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyMode {
    Analytic,
    Sampled,
}

#[derive(Clone, Copy, Debug)]
pub struct ObjectiveCfg {
    pub relax: RelaxationConfig,
    pub energy_mode: EnergyMode,
    pub entropy_mode: EntropyMode,
}

impl Default for ObjectiveCfg {
    fn default() -> Self {
        ObjectiveCfg {
            relax: RelaxationConfig::default(),
            energy_mode: EnergyMode::Relaxed,
            entropy_mode: EntropyMode::Analytic,
        }
    }
}

/// Value plus per-term breakdown of a two-phase estimate. The signed
/// reconstruction is
/// `(positive_energy - positive_entropy) - (negative_energy - negative_entropy_bound)`.
#[derive(Clone, Debug, Default)]
pub struct BatchEstimate {
    pub value: f64,
    pub positive_energy: f64,
    pub positive_entropy: f64,
    pub negative_energy: f64,
    pub negative_entropy_bound: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl BatchEstimate {
    pub fn signed_sum(&self) -> f64 {
        (self.positive_energy - self.positive_entropy)
            - (self.negative_energy - self.negative_entropy_bound)
    }
}

/// A built objective: the recorded graph, its scalar root, and the
/// term-level breakdown. Gradients come from one backward sweep.
pub struct Objective {
    pub tape: Tape,
    pub root: NodeId,
    pub estimate: BatchEstimate,
}

impl Objective {
    pub fn value(&self) -> f64 {
        self.tape.value(self.root).item()
    }

    pub fn grads(&self) -> Result<GradMap> {
        self.tape.backward(self.root)
    }
}

/// Scalar nodes of one phase: mean energy, mean entropy estimate, and the
/// combined `energy - entropy` phase value.
struct PhaseBuild {
    energy: NodeId,
    entropy: NodeId,
    phase: NodeId,
}

fn combine_phase(tape: &mut Tape, energy: NodeId, entropy: NodeId) -> Result<PhaseBuild> {
    let neg_ent = tape.neg(entropy)?;
    let phase = tape.add(energy, neg_ent)?;
    Ok(PhaseBuild {
        energy,
        entropy,
        phase,
    })
}

// ── Positive phase ───────────────────────────────────────────────────

fn positive_phase_net(
    model: &EnergyModel,
    enc: &crate::variational::EncoderNet,
    tape: &mut Tape,
    batch: &DenseArray,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<PhaseBuild> {
    let v = tape.constant(batch.clone());
    let fwd = encoder_forward(enc, tape, v, &cfg.relax, rng)?;
    let h_for_energy: Vec<NodeId> = match (cfg.energy_mode, model) {
        (EnergyMode::Relaxed, _) => fwd.samples.clone(),
        (EnergyMode::AnalyticLinear, EnergyModel::Dbm(_)) => {
            // keep the sampled h1 (it couples to both neighbors); the top
            // layer is linear given h1, so its probabilities are exact
            vec![fwd.samples[0], fwd.probs[1]]
        }
        (EnergyMode::AnalyticLinear, _) => vec![fwd.probs[0]],
    };
    let e_rows = model.energy_rows(tape, v, &h_for_energy)?;
    let energy = tape.mean(e_rows)?;
    let entropy = match cfg.entropy_mode {
        EntropyMode::Analytic => tape.mean(fwd.entropy_rows)?,
        EntropyMode::Sampled => {
            let m = tape.mean(fwd.log_q_rows)?;
            tape.neg(m)?
        }
    };
    combine_phase(tape, energy, entropy)
}

fn positive_phase_tabular(
    model: &EnergyModel,
    tab: &TabularPosterior,
    tape: &mut Tape,
    batch: &DenseArray,
) -> Result<PhaseBuild> {
    let n = batch.rows();
    let v_codes: Vec<usize> = (0..n).map(|r| row_code(batch.row(r))).collect();
    if batch.values().iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::Domain {
            op: "positive_phase",
            detail: "tabular encoder needs binary data".into(),
        });
    }
    let hidden_bits: usize = tab.hidden_dims.iter().sum();
    let v = tape.constant(batch.clone());

    let mut energy_acc: Option<NodeId> = None;
    for hc in 0..(1usize << hidden_bits) {
        let weights: Vec<f64> = v_codes.iter().map(|&vc| tab.cond[vc][hc]).collect();
        if weights.iter().all(|&w| w == 0.0) {
            continue;
        }
        let h_nodes: Vec<NodeId> = split_hidden(hc, &tab.hidden_dims)
            .into_iter()
            .zip(&tab.hidden_dims)
            .map(|(code, &d)| {
                let row = DenseArray::new(vec![1, d], code_bits(code, d))?;
                let node = tape.constant(row);
                tape.broadcast_row(node, n)
            })
            .collect::<Result<_>>()?;
        let e_rows = model.energy_rows(tape, v, &h_nodes)?;
        let w = tape.constant(DenseArray::new(vec![n, 1], weights)?);
        let weighted = tape.mul(e_rows, w)?;
        let s = tape.sum(weighted)?;
        energy_acc = Some(match energy_acc {
            None => s,
            Some(acc) => tape.add(acc, s)?,
        });
    }
    let energy = tape.scale(energy_acc.expect("nonempty posterior"), 1.0 / n as f64)?;

    let ent_per_datum: Vec<f64> = v_codes
        .iter()
        .map(|&vc| {
            tab.cond[vc]
                .iter()
                .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
                .sum()
        })
        .collect();
    let mean_ent = ent_per_datum.iter().sum::<f64>() / n as f64;
    let entropy = tape.constant(DenseArray::scalar(mean_ent));
    combine_phase(tape, energy, entropy)
}

fn positive_phase(
    model: &EnergyModel,
    enc: &Encoder,
    tape: &mut Tape,
    batch: &DenseArray,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<PhaseBuild> {
    match enc {
        Encoder::Net(net) => positive_phase_net(model, net, tape, batch, cfg, rng),
        Encoder::Tabular(tab) => positive_phase_tabular(model, tab, tape, batch),
    }
}

// ── Negative phase ───────────────────────────────────────────────────

fn negative_phase_net(
    model: &EnergyModel,
    dec: &crate::variational::DecoderNet,
    aux: Option<&AuxNet>,
    tape: &mut Tape,
    n_neg: usize,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<PhaseBuild> {
    let aux = aux
        .ok_or_else(|| Error::config("aux", "network decoder needs the auxiliary inference net"))?;
    let s = decoder_sample(dec, tape, n_neg, &cfg.relax, rng)?;
    let e_rows = model.energy_rows(tape, s.v, &s.h)?;
    let energy = tape.mean(e_rows)?;

    let terms = decoder_log_terms(dec, tape, s.z, &s.h, s.v)?;
    let h_top = *s.h.last().expect("decoder has hidden layers");
    let log_r = aux_log_prob(aux, tape, h_top, s.z)?;
    // inner = log q(v|h) + log q(h|z) + log q(z) - log r(z|h)
    let t = tape.add(terms.log_qv, terms.log_qh)?;
    let t = tape.add(t, terms.log_qz)?;
    let inner = tape.sub(t, log_r)?;
    let mean_inner = tape.mean(inner)?;
    let entropy_bound = tape.neg(mean_inner)?;
    combine_phase(tape, energy, entropy_bound)
}

fn negative_phase_tabular(
    model: &EnergyModel,
    tab: &TabularJoint,
    tape: &mut Tape,
) -> Result<PhaseBuild> {
    let dims = &tab.layer_dims;
    let total_bits: usize = dims.iter().sum();
    let rows = 1usize << total_bits;
    // one batch holding every configuration, weighted by q
    let mut v_rows = Vec::with_capacity(rows);
    let mut h_rows: Vec<Vec<Vec<f64>>> =
        dims[1..].iter().map(|_| Vec::with_capacity(rows)).collect();
    for idx in 0..rows {
        let codes = split_config(idx, dims);
        v_rows.push(code_bits(codes[0], dims[0]));
        for (li, &code) in codes[1..].iter().enumerate() {
            h_rows[li].push(code_bits(code, dims[1 + li]));
        }
    }
    let v = tape.constant(DenseArray::from_rows(&v_rows)?);
    let h_nodes: Vec<NodeId> = h_rows
        .iter()
        .map(|rows| Ok(tape.constant(DenseArray::from_rows(rows)?)))
        .collect::<Result<_>>()?;
    let e_rows = model.energy_rows(tape, v, &h_nodes)?;
    let w = tape.constant(DenseArray::new(vec![rows, 1], tab.probs.clone())?);
    let weighted = tape.mul(e_rows, w)?;
    let energy = tape.sum(weighted)?;
    let h_q: f64 = tab
        .probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum();
    let entropy = tape.constant(DenseArray::scalar(h_q));
    combine_phase(tape, energy, entropy)
}

fn negative_phase(
    model: &EnergyModel,
    dec: &Decoder,
    aux: Option<&AuxNet>,
    tape: &mut Tape,
    n_neg: usize,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<PhaseBuild> {
    match dec {
        Decoder::Net(net) => negative_phase_net(model, net, aux, tape, n_neg, cfg, rng),
        Decoder::Tabular(tab) => negative_phase_tabular(model, tab, tape),
    }
}

// ── Public objectives ────────────────────────────────────────────────

/// `E_{data, Q}[E + log Q]` on a caller-provided tape. This is the
/// free-energy upper bound shifted by `-log Z`; adding the exact log
/// partition function (oracle contexts) yields the full encoder bound.
/// It is also the VCD positive phase.
pub fn free_energy_upper_on(
    tape: &mut Tape,
    model: &EnergyModel,
    enc: &Encoder,
    batch: &DenseArray,
    n_samples: usize,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<(NodeId, BatchEstimate)> {
    if n_samples == 0 {
        return Err(Error::Domain {
            op: "free_energy_upper",
            detail: "need at least one sample".into(),
        });
    }
    let expanded;
    let batch = if n_samples > 1 && matches!(enc, Encoder::Net(_)) {
        expanded = batch.repeat_rows(n_samples);
        &expanded
    } else {
        batch
    };
    let pos = positive_phase(model, enc, tape, batch, cfg, rng)?;
    let estimate = BatchEstimate {
        value: tape.value(pos.phase).item(),
        positive_energy: tape.value(pos.energy).item(),
        positive_entropy: tape.value(pos.entropy).item(),
        negative_energy: 0.0,
        negative_entropy_bound: 0.0,
        n_pos: batch.rows(),
        n_neg: 0,
    };
    Ok((pos.phase, estimate))
}

pub fn free_energy_upper(
    model: &EnergyModel,
    enc: &Encoder,
    batch: &DenseArray,
    n_samples: usize,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<Objective> {
    let mut tape = Tape::new();
    let (root, estimate) = free_energy_upper_on(&mut tape, model, enc, batch, n_samples, cfg, rng)?;
    Ok(Objective {
        root,
        tape,
        estimate,
    })
}

/// The decoder-side objective alone (what the inner maximization sees):
/// `E_q[E] + E_q[log q(v|h) + log q(h|z) + log q(z) - log r(z|h)]`.
/// The negative of this value is the partition-function lower estimate.
pub fn negative_phase_objective_on(
    tape: &mut Tape,
    model: &EnergyModel,
    dec: &Decoder,
    aux: Option<&AuxNet>,
    n_neg: usize,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<(NodeId, BatchEstimate)> {
    if n_neg == 0 {
        return Err(Error::Domain {
            op: "negative_phase",
            detail: "need at least one decoder sample".into(),
        });
    }
    let neg = negative_phase(model, dec, aux, tape, n_neg, cfg, rng)?;
    let estimate = BatchEstimate {
        value: tape.value(neg.phase).item(),
        positive_energy: 0.0,
        positive_entropy: 0.0,
        negative_energy: tape.value(neg.energy).item(),
        negative_entropy_bound: tape.value(neg.entropy).item(),
        n_pos: 0,
        n_neg,
    };
    Ok((neg.phase, estimate))
}

pub fn negative_phase_objective(
    model: &EnergyModel,
    dec: &Decoder,
    aux: Option<&AuxNet>,
    n_neg: usize,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<Objective> {
    let mut tape = Tape::new();
    let (root, estimate) =
        negative_phase_objective_on(&mut tape, model, dec, aux, n_neg, cfg, rng)?;
    Ok(Objective {
        root,
        tape,
        estimate,
    })
}

/// The full two-phase surrogate, differentiable in theta, phi, and psi,
/// built on a caller-provided tape.
#[allow(clippy::too_many_arguments)]
pub fn l2_surrogate_on(
    tape: &mut Tape,
    model: &EnergyModel,
    enc: &Encoder,
    dec: &Decoder,
    aux: Option<&AuxNet>,
    batch: &DenseArray,
    n_neg: usize,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<(NodeId, BatchEstimate)> {
    if n_neg == 0 && matches!(dec, Decoder::Net(_)) {
        return Err(Error::Domain {
            op: "l2_surrogate",
            detail: "need at least one decoder sample".into(),
        });
    }
    let pos = positive_phase(model, enc, tape, batch, cfg, rng)?;
    let neg = negative_phase(model, dec, aux, tape, n_neg, cfg, rng)?;
    let root = tape.sub(pos.phase, neg.phase)?;
    let estimate = BatchEstimate {
        value: tape.value(root).item(),
        positive_energy: tape.value(pos.energy).item(),
        positive_entropy: tape.value(pos.entropy).item(),
        negative_energy: tape.value(neg.energy).item(),
        negative_entropy_bound: tape.value(neg.entropy).item(),
        n_pos: batch.rows(),
        n_neg,
    };
    Ok((root, estimate))
}

#[allow(clippy::too_many_arguments)]
pub fn l2_surrogate(
    model: &EnergyModel,
    enc: &Encoder,
    dec: &Decoder,
    aux: Option<&AuxNet>,
    batch: &DenseArray,
    n_neg: usize,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<Objective> {
    let mut tape = Tape::new();
    let (root, estimate) =
        l2_surrogate_on(&mut tape, model, enc, dec, aux, batch, n_neg, cfg, rng)?;
    Ok(Objective {
        root,
        tape,
        estimate,
    })
}

/// Model-parameter gradient `E_{data,Q}[dE/dtheta] - E_q[dE/dtheta]` with
/// the variational samples detached. Under common random numbers this
/// equals the theta-restriction of `l2_surrogate` gradients exactly (the
/// entropy terms carry no theta dependence).
pub fn theta_grad(
    model: &EnergyModel,
    enc: &Encoder,
    dec: &Decoder,
    batch: &DenseArray,
    n_neg: usize,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<(GradMap, BatchEstimate)> {
    let mut tape = Tape::new();

    // positive side
    let pos_phase = match enc {
        Encoder::Net(net) => {
            let v = tape.constant(batch.clone());
            let fwd = encoder_forward(net, &mut tape, v, &cfg.relax, rng)?;
            let h_vals: Vec<DenseArray> = match (cfg.energy_mode, model) {
                (EnergyMode::Relaxed, _) => {
                    fwd.samples.iter().map(|&s| tape.value(s).clone()).collect()
                }
                (EnergyMode::AnalyticLinear, EnergyModel::Dbm(_)) => vec![
                    tape.value(fwd.samples[0]).clone(),
                    tape.value(fwd.probs[1]).clone(),
                ],
                (EnergyMode::AnalyticLinear, _) => vec![tape.value(fwd.probs[0]).clone()],
            };
            let h_const: Vec<NodeId> = h_vals.into_iter().map(|a| tape.constant(a)).collect();
            let e_rows = model.energy_rows(&mut tape, v, &h_const)?;
            tape.mean(e_rows)?
        }
        Encoder::Tabular(tab) => positive_phase_tabular(model, tab, &mut tape, batch)?.energy,
    };

    // negative side
    let neg_phase = match dec {
        Decoder::Net(net) => {
            let s = decoder_sample(net, &mut tape, n_neg, &cfg.relax, rng)?;
            // same noise draws as the attached path, then detach the values
            let v_const = {
                let v = tape.value(s.v).clone();
                tape.constant(v)
            };
            let h_const: Vec<NodeId> =
                s.h.iter()
                    .map(|&h| {
                        let v = tape.value(h).clone();
                        tape.constant(v)
                    })
                    .collect();
            let e_rows = model.energy_rows(&mut tape, v_const, &h_const)?;
            tape.mean(e_rows)?
        }
        Decoder::Tabular(tab) => negative_phase_tabular(model, tab, &mut tape)?.energy,
    };

    let root = tape.sub(pos_phase, neg_phase)?;
    let all = tape.backward(root)?;
    let theta_names: Vec<String> = model
        .theta_blocks()
        .iter()
        .map(|b| b.name().to_string())
        .collect();
    let grads: GradMap = all
        .into_iter()
        .filter(|(k, _)| theta_names.contains(k))
        .collect();
    let estimate = BatchEstimate {
        value: tape.value(root).item(),
        positive_energy: tape.value(pos_phase).item(),
        positive_entropy: 0.0,
        negative_energy: tape.value(neg_phase).item(),
        negative_entropy_bound: 0.0,
        n_pos: batch.rows(),
        n_neg,
    };
    Ok((grads, estimate))
}

/// Two-phase gradient from explicit sample sets (testing and VCD reuse).
pub fn theta_grad_from_samples(
    model: &EnergyModel,
    pos_v: &DenseArray,
    pos_h: &[&DenseArray],
    neg_v: &DenseArray,
    neg_h: &[&DenseArray],
) -> Result<GradMap> {
    let mut tape = Tape::new();
    let pv = tape.constant(pos_v.clone());
    let ph: Vec<NodeId> = pos_h.iter().map(|h| tape.constant((*h).clone())).collect();
    let pe = model.energy_rows(&mut tape, pv, &ph)?;
    let pe = tape.mean(pe)?;
    let nv = tape.constant(neg_v.clone());
    let nh: Vec<NodeId> = neg_h.iter().map(|h| tape.constant((*h).clone())).collect();
    let ne = model.energy_rows(&mut tape, nv, &nh)?;
    let ne = tape.mean(ne)?;
    let root = tape.sub(pe, ne)?;
    let all = tape.backward(root)?;
    let theta_names: Vec<String> = model
        .theta_blocks()
        .iter()
        .map(|b| b.name().to_string())
        .collect();
    Ok(all
        .into_iter()
        .filter(|(k, _)| theta_names.contains(k))
        .collect())
}

/// Exact negative log-likelihood on enumerable models: mean free energy
/// plus the exact log partition function.
pub fn nll_exact(model: &EnergyModel, data: &DenseArray) -> Result<f64> {
    let log_z = exact_log_z(model)?;
    let f = match model {
        EnergyModel::Dbm(p) => dbm_free_energy_enum(p, data)?,
        _ => model.free_energy_batch(data)?,
    };
    Ok(f.iter().sum::<f64>() / f.len() as f64 + log_z)
}

fn row_code(bits: &[f64]) -> usize {
    bits.iter()
        .enumerate()
        .map(|(j, &x)| ((x > 0.5) as usize) << j)
        .sum()
}

/// Splits an all-hidden code into per-layer codes (first layer in the
/// high bits, matching `JointTable::index`).
fn split_hidden(code: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(dims.len());
    let mut rest = code;
    for (i, &d) in dims.iter().enumerate() {
        let below: usize = dims[i + 1..].iter().sum();
        out.push((rest >> below) & ((1 << d) - 1));
        rest &= (1 << below) - 1;
    }
    out
}

/// Splits a full configuration index into per-layer codes, visible first.
fn split_config(idx: usize, dims: &[usize]) -> Vec<usize> {
    split_hidden(idx, dims)
}

#[cfg(test)]
mod tests;
