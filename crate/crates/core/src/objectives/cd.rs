//! Contrastive-divergence style estimators: CD-k / PCD for models with a
//! tractable free energy, and the variational variant (VCD) for two-layer
//! DBMs where the free energy is replaced by the encoder bound and Gibbs
//! sampling is approximated through the encoder.

use crate::array::DenseArray;
use crate::energy::gibbs::{gibbs_sweep, GibbsState};
use crate::energy::{bernoulli_sample, EnergyModel};
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tape::{GradMap, Tape};
use crate::variational::{encoder_forward, EncoderNet};

use super::ObjectiveCfg;

#[derive(Clone, Copy, Debug)]
pub struct CdStats {
    pub positive_free_energy: f64,
    pub negative_free_energy: f64,
}

/// `E_data[dF/dtheta] - E_neg[dF/dtheta]` with negative samples from `k`
/// Gibbs sweeps started at the data batch (CD) or at a persistent chain
/// state (PCD, chains updated in place).
pub fn cd_grad(
    model: &EnergyModel,
    batch: &DenseArray,
    k: usize,
    persistent: Option<&mut GibbsState>,
    rng: &mut Prng,
) -> Result<(GradMap, CdStats)> {
    if matches!(model, EnergyModel::Dbm(_)) {
        return Err(Error::Incompatible {
            method: "contrastive divergence".into(),
            model: "dbm (free energy intractable)".into(),
        });
    }
    if k == 0 {
        return Err(Error::Domain {
            op: "cd_grad",
            detail: "need at least one Gibbs sweep".into(),
        });
    }
    let neg_v = match persistent {
        Some(state) => {
            for _ in 0..k {
                gibbs_sweep(model, state, rng)?;
            }
            state.v.clone()
        }
        None => {
            let mut state = GibbsState::from_visible(model, batch.clone(), rng)?;
            for _ in 0..k {
                gibbs_sweep(model, &mut state, rng)?;
            }
            state.v
        }
    };

    let mut tape = Tape::new();
    let pv = tape.constant(batch.clone());
    let pf = model.free_energy_rows(&mut tape, pv)?;
    let pf = tape.mean(pf)?;
    let nv = tape.constant(neg_v);
    let nf = model.free_energy_rows(&mut tape, nv)?;
    let nf = tape.mean(nf)?;
    let root = tape.sub(pf, nf)?;
    let grads = tape.backward(root)?;
    let stats = CdStats {
        positive_free_energy: tape.value(pf).item(),
        negative_free_energy: tape.value(nf).item(),
    };
    Ok((grads, stats))
}

/// Variational CD for a two-layer DBM. The per-datum objective is the
/// encoder bound `G(v) = E_Q[E(v,h)] - H(Q(.|v))`; negative samples come
/// from alternating `h1 ~ Q(h1|v)`, `v ~ P(v|h1)` for `k` rounds. `k = 0`
/// degenerates to identical phases (zero gradient), kept for testing.
pub fn vcd_grad(
    model: &EnergyModel,
    enc: &EncoderNet,
    batch: &DenseArray,
    k: usize,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<(GradMap, CdStats)> {
    let EnergyModel::Dbm(dbm) = model else {
        return Err(Error::Incompatible {
            method: "variational contrastive divergence".into(),
            model: model.family().into(),
        });
    };

    let mut neg_v = batch.clone();
    for _ in 0..k {
        let h1_probs = enc.layers[0].apply_raw(&neg_v)?.map(crate::array::sigmoid);
        let h1 = bernoulli_sample(&h1_probs, rng);
        neg_v = bernoulli_sample(&dbm.v_probs(&h1)?, rng);
    }

    // common random numbers across the phases: lower variance, and the
    // k = 0 case cancels identically
    let noise = Prng::seed_from(rng.next_u64());
    let mut tape = Tape::new();
    let pos = bound_energy_mean(model, enc, &mut tape, batch, cfg, &mut noise.clone())?;
    let neg = bound_energy_mean(model, enc, &mut tape, &neg_v, cfg, &mut noise.clone())?;
    let root = tape.sub(pos, neg)?;
    let all = tape.backward(root)?;
    let theta_names: Vec<String> = model
        .theta_blocks()
        .iter()
        .map(|b| b.name().to_string())
        .collect();
    let grads: GradMap = all
        .into_iter()
        .filter(|(n, _)| theta_names.contains(n))
        .collect();
    let stats = CdStats {
        positive_free_energy: tape.value(pos).item(),
        negative_free_energy: tape.value(neg).item(),
    };
    Ok((grads, stats))
}

/// Mean of `E_Q[E(v, h)]` over a batch with detached encoder samples: the
/// theta-carrying part of the bound (its entropy term is theta-free).
fn bound_energy_mean(
    model: &EnergyModel,
    enc: &EncoderNet,
    tape: &mut Tape,
    batch: &DenseArray,
    cfg: &ObjectiveCfg,
    rng: &mut Prng,
) -> Result<crate::tape::NodeId> {
    let v = tape.constant(batch.clone());
    let fwd = encoder_forward(enc, tape, v, &cfg.relax, rng)?;
    let h_vals: Vec<DenseArray> = match cfg.energy_mode {
        super::EnergyMode::Relaxed => fwd.samples.iter().map(|&s| tape.value(s).clone()).collect(),
        super::EnergyMode::AnalyticLinear => vec![
            tape.value(fwd.samples[0]).clone(),
            tape.value(fwd.probs[1]).clone(),
        ],
    };
    let h_const: Vec<crate::tape::NodeId> = h_vals.into_iter().map(|a| tape.constant(a)).collect();
    let e = model.energy_rows(tape, v, &h_const)?;
    tape.mean(e)
}
