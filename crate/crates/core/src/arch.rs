//! Serializable architecture descriptions and parameter initialization.

use crate::energy::{DbmParams, EnergyModel, GrbmParams, RbmParams};
use crate::error::{Error, Result};
use crate::rng::Prng;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelArch {
    Rbm {
        d_v: usize,
        d_h: usize,
    },
    Dbm {
        d_v: usize,
        d_h1: usize,
        d_h2: usize,
    },
    Grbm {
        d_v: usize,
        d_h: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
}

fn default_sigma() -> f64 {
    1.0
}

impl ModelArch {
    pub fn build(&self, init_scale: f64, rng: &mut Prng) -> Result<EnergyModel> {
        Ok(match *self {
            ModelArch::Rbm { d_v, d_h } => {
                check_pos(&[d_v, d_h])?;
                EnergyModel::Rbm(RbmParams::random(d_v, d_h, init_scale, rng))
            }
            ModelArch::Dbm { d_v, d_h1, d_h2 } => {
                check_pos(&[d_v, d_h1, d_h2])?;
                EnergyModel::Dbm(DbmParams::random(d_v, d_h1, d_h2, init_scale, rng))
            }
            ModelArch::Grbm { d_v, d_h, sigma } => {
                check_pos(&[d_v, d_h])?;
                if sigma <= 0.0 {
                    return Err(Error::config("model.sigma", "must be positive"));
                }
                let mut p = GrbmParams::random(d_v, d_h, init_scale, rng);
                p.sigma = sigma;
                EnergyModel::Grbm(p)
            }
        })
    }

    pub fn of(model: &EnergyModel) -> Self {
        match model {
            EnergyModel::Rbm(p) => {
                let (d_v, d_h) = p.dims();
                ModelArch::Rbm { d_v, d_h }
            }
            EnergyModel::Dbm(p) => {
                let (d_v, d_h1, d_h2) = p.dims();
                ModelArch::Dbm { d_v, d_h1, d_h2 }
            }
            EnergyModel::Grbm(p) => {
                let (d_v, d_h) = p.dims();
                ModelArch::Grbm {
                    d_v,
                    d_h,
                    sigma: p.sigma,
                }
            }
        }
    }

    pub fn d_v(&self) -> usize {
        match *self {
            ModelArch::Rbm { d_v, .. }
            | ModelArch::Dbm { d_v, .. }
            | ModelArch::Grbm { d_v, .. } => d_v,
        }
    }
}

fn check_pos(dims: &[usize]) -> Result<()> {
    if dims.iter().all(|&d| d > 0) {
        Ok(())
    } else {
        Err(Error::config("model", "all dimensions must be positive"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_model() {
        let mut rng = Prng::seed_from(1);
        for arch in [
            ModelArch::Rbm { d_v: 5, d_h: 3 },
            ModelArch::Dbm {
                d_v: 4,
                d_h1: 3,
                d_h2: 2,
            },
            ModelArch::Grbm {
                d_v: 6,
                d_h: 2,
                sigma: 0.5,
            },
        ] {
            let model = arch.build(0.01, &mut rng).unwrap();
            assert_eq!(ModelArch::of(&model), arch);
        }
    }

    #[test]
    fn json_shape() {
        let arch = ModelArch::Rbm { d_v: 64, d_h: 50 };
        let json = serde_json::to_string(&arch).unwrap();
        assert_eq!(json, r#"{"kind":"rbm","d_v":64,"d_h":50}"#);
        let back: ModelArch = serde_json::from_str(&json).unwrap();
        assert_eq!(back, arch);
    }
}
