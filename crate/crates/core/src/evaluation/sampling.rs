//! Sample grids for visual inspection: means of the final conditional,
//! from long Gibbs chains or from the decoder's ancestral sampler.

use crate::array::DenseArray;
use crate::energy::gibbs::{gibbs_sweep, GibbsState};
use crate::energy::EnergyModel;
use crate::error::Result;
use crate::rng::Prng;
use crate::variational::DecoderNet;

pub enum GridSource<'a> {
    /// Random-start chains with the given burn-in sweep count.
    ModelGibbs {
        model: &'a EnergyModel,
        burnin: usize,
    },
    Decoder(&'a DecoderNet),
}

/// Returns a `[count, d_v]` batch of Bernoulli means (Gaussian means for
/// real-visible models) ready for grid export.
pub fn sample_grid(source: GridSource<'_>, count: usize, rng: &mut Prng) -> Result<DenseArray> {
    match source {
        GridSource::ModelGibbs { model, burnin } => {
            let mut state = GibbsState::random(model, count, rng);
            for _ in 0..burnin {
                gibbs_sweep(model, &mut state, rng)?;
            }
            match model {
                EnergyModel::Rbm(p) => p.v_probs(&state.h[0]),
                EnergyModel::Dbm(p) => p.v_probs(&state.h[0]),
                EnergyModel::Grbm(p) => p.v_mean(&state.h[0]),
            }
        }
        GridSource::Decoder(dec) => {
            let (_, _, _, mean) = dec.sample_raw(count, rng)?;
            Ok(mean)
        }
    }
}
