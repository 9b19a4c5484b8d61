//! Block Gibbs transitions with exact conditional sampling.

use crate::array::DenseArray;
use crate::error::Result;
use crate::rng::Prng;

use super::{bernoulli_sample, gaussian_sample, EnergyModel};

/// Chain state: a batch of visible rows plus one array per hidden layer.
/// Discrete layers hold hard `{0, 1}` entries; GRBM visibles are real.
#[derive(Clone, Debug)]
pub struct GibbsState {
    pub v: DenseArray,
    pub h: Vec<DenseArray>,
}

impl GibbsState {
    /// Uniform random initialization of all layers (standard normal
    /// visibles for GRBM).
    pub fn random(model: &EnergyModel, n: usize, rng: &mut Prng) -> Self {
        let d_v = model.d_v();
        let v = if model.is_binary_visible() {
            DenseArray::zeros(&[n, d_v]).map_with(|_| rng.bernoulli(0.5))
        } else {
            DenseArray::zeros(&[n, d_v]).map_with(|_| rng.normal())
        };
        let h = model
            .hidden_dims()
            .iter()
            .map(|&d| DenseArray::zeros(&[n, d]).map_with(|_| rng.bernoulli(0.5)))
            .collect();
        GibbsState { v, h }
    }

    /// Starts chains at the given visible batch; hidden layers are drawn
    /// from their conditionals in a bottom-up pass.
    pub fn from_visible(model: &EnergyModel, v: DenseArray, rng: &mut Prng) -> Result<Self> {
        let n = v.rows();
        let h = match model {
            EnergyModel::Rbm(p) => vec![bernoulli_sample(&p.h_probs(&v)?, rng)],
            EnergyModel::Grbm(p) => vec![bernoulli_sample(&p.h_probs(&v)?, rng)],
            EnergyModel::Dbm(p) => {
                let (_, _, d_h2) = p.dims();
                let h2 = DenseArray::zeros(&[n, d_h2]).map_with(|_| rng.bernoulli(0.5));
                let h1 = bernoulli_sample(&p.h1_probs(&v, &h2)?, rng);
                let h2 = bernoulli_sample(&p.h2_probs(&h1)?, rng);
                vec![h1, h2]
            }
        };
        Ok(GibbsState { v, h })
    }

    pub fn n_chains(&self) -> usize {
        self.v.rows()
    }
}

/// One full alternating block update.
///
/// RBM/GRBM: `h | v` then `v | h`. DBM: `{v, h2} | h1` then `h1 | {v, h2}`.
pub fn gibbs_sweep(model: &EnergyModel, state: &mut GibbsState, rng: &mut Prng) -> Result<()> {
    match model {
        EnergyModel::Rbm(p) => {
            state.h[0] = bernoulli_sample(&p.h_probs(&state.v)?, rng);
            state.v = bernoulli_sample(&p.v_probs(&state.h[0])?, rng);
        }
        EnergyModel::Grbm(p) => {
            state.h[0] = bernoulli_sample(&p.h_probs(&state.v)?, rng);
            state.v = gaussian_sample(&p.v_mean(&state.h[0])?, p.sigma, rng);
        }
        EnergyModel::Dbm(p) => {
            state.v = bernoulli_sample(&p.v_probs(&state.h[0])?, rng);
            state.h[1] = bernoulli_sample(&p.h2_probs(&state.h[0])?, rng);
            state.h[0] = bernoulli_sample(&p.h1_probs(&state.v, &state.h[1])?, rng);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{enumerate_joint, RbmParams};

    #[test]
    fn uniform_model_has_uniform_marginals() {
        let model = EnergyModel::Rbm(RbmParams::zeros(4, 3));
        let mut rng = Prng::seed_from(5);
        let mut state = GibbsState::random(&model, 1, &mut rng);
        let mut sums = vec![0.0; 4];
        let sweeps = 10_000;
        for _ in 0..sweeps {
            gibbs_sweep(&model, &mut state, &mut rng).unwrap();
            for (s, &x) in sums.iter_mut().zip(state.v.values()) {
                *s += x;
            }
        }
        for s in sums {
            let mean = s / sweeps as f64;
            assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
        }
    }

    #[test]
    fn empirical_frequencies_match_enumerated_joint() {
        let mut rng = Prng::seed_from(11);
        let model = EnergyModel::Rbm(RbmParams::random(4, 3, 0.8, &mut rng));
        let table = enumerate_joint(&model).unwrap();

        let mut state = GibbsState::random(&model, 1, &mut rng);
        for _ in 0..1000 {
            gibbs_sweep(&model, &mut state, &mut rng).unwrap(); // burn-in
        }
        let sweeps = 200_000;
        let mut counts = vec![0u64; table.probs.len()];
        for _ in 0..sweeps {
            gibbs_sweep(&model, &mut state, &mut rng).unwrap();
            let vc = code_of(state.v.row(0));
            let hc = code_of(state.h[0].row(0));
            counts[table.index(&[vc, hc])] += 1;
        }
        let tv: f64 = counts
            .iter()
            .zip(&table.probs)
            .map(|(&c, &p)| (c as f64 / sweeps as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let mut rng = Prng::seed_from(3);
        let model = EnergyModel::Rbm(RbmParams::random(5, 4, 0.5, &mut rng));
        let run = |seed: u64| {
            let mut r = Prng::seed_from(seed);
            let mut s = GibbsState::random(&model, 3, &mut r);
            for _ in 0..50 {
                gibbs_sweep(&model, &mut s, &mut r).unwrap();
            }
            (s.v.values().to_vec(), s.h[0].values().to_vec())
        };
        assert_eq!(run(99), run(99));
    }

    // Each half-update leaves the joint invariant and is reversible; check
    // the h-block flow balance empirically on a 3-unit model.
    #[test]
    fn half_kernel_detailed_balance() {
        let mut rng = Prng::seed_from(13);
        let model = EnergyModel::Rbm(RbmParams::random(2, 1, 1.0, &mut rng));
        let EnergyModel::Rbm(p) = &model else {
            unreachable!()
        };
        let table = enumerate_joint(&model).unwrap();

        let mut state = GibbsState::random(&model, 1, &mut rng);
        for _ in 0..500 {
            gibbs_sweep(&model, &mut state, &mut rng).unwrap();
        }
        let n = 300_000;
        let states = 8;
        let mut flow = vec![vec![0u64; states]; states];
        for _ in 0..n {
            let before = table.index(&[code_of(state.v.row(0)), code_of(state.h[0].row(0))]);
            state.h[0] = bernoulli_sample(&p.h_probs(&state.v).unwrap(), &mut rng);
            let after = table.index(&[code_of(state.v.row(0)), code_of(state.h[0].row(0))]);
            flow[before][after] += 1;
            // mix v too so the chain roams the full space
            state.v = bernoulli_sample(&p.v_probs(&state.h[0]).unwrap(), &mut rng);
        }
        for x in 0..states {
            for y in 0..x {
                let fxy = flow[x][y] as f64 / n as f64;
                let fyx = flow[y][x] as f64 / n as f64;
                let tol = 5.0 * ((fxy + fyx) / n as f64 + 1e-9).sqrt();
                assert!(
                    (fxy - fyx).abs() < tol,
                    "flow imbalance {x}->{y}: {fxy} vs {fyx} (tol {tol})"
                );
            }
        }
    }

    fn code_of(bits: &[f64]) -> usize {
        bits.iter()
            .enumerate()
            .map(|(j, &x)| ((x > 0.5) as usize) << j)
            .sum()
    }
}
