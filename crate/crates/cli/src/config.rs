//! Run configuration: one JSON schema covers all five methods, and fields
//! a method does not consume are rejected rather than ignored.

use std::path::{Path, PathBuf};

use advil::arch::ModelArch;
use advil::data::DataSpec;
use advil::error::Error;
use advil::objectives::{EnergyMode, EntropyMode};
use advil::trainer::{Method, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub method: Method,
    pub model: ModelArch,
    pub data: DataSpec,
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variational: Option<VariationalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cd: Option<CdSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nvil: Option<NvilSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub max_iters: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_mode: Option<EntropyMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_mode: Option<EnergyMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence_limit: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariationalSection {
    pub d_z: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdSection {
    pub k: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NvilSection {
    pub components: usize,
}

impl RunSpec {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let spec: RunSpec = serde_json::from_str(&text).map_err(|e| Error::Config {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    /// The method-compatibility matrix. Sections a method cannot consume
    /// are configuration errors, never silent defaults.
    pub fn validate(&self) -> Result<(), Error> {
        let reject = |present: bool, path: &str| {
            if present {
                Err(Error::config(
                    path,
                    format!("not used by method {}", self.method.name()),
                ))
            } else {
                Ok(())
            }
        };
        let require = |present: bool, path: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::config(
                    path,
                    format!("required by method {}", self.method.name()),
                ))
            }
        };
        match self.method {
            Method::Advil => {
                require(self.variational.is_some(), "variational")?;
                reject(self.cd.is_some(), "cd")?;
                reject(self.nvil.is_some(), "nvil")?;
            }
            Method::Cd | Method::Pcd => {
                require(self.cd.is_some(), "cd")?;
                reject(self.variational.is_some(), "variational")?;
                reject(self.nvil.is_some(), "nvil")?;
                if matches!(self.model, ModelArch::Dbm { .. }) {
                    return Err(Error::config(
                        "model.kind",
                        "cd/pcd need a tractable free energy (rbm or grbm)",
                    ));
                }
            }
            Method::Vcd => {
                require(self.cd.is_some(), "cd")?;
                reject(self.variational.is_some(), "variational")?;
                reject(self.nvil.is_some(), "nvil")?;
                if !matches!(self.model, ModelArch::Dbm { .. }) {
                    return Err(Error::config("model.kind", "vcd applies to dbm only"));
                }
            }
            Method::Nvil => {
                require(self.nvil.is_some(), "nvil")?;
                reject(self.variational.is_some(), "variational")?;
                reject(self.cd.is_some(), "cd")?;
                if matches!(self.model, ModelArch::Dbm { .. }) {
                    return Err(Error::config(
                        "model.kind",
                        "nvil needs a tractable free energy (rbm or grbm)",
                    ));
                }
            }
        }
        // model/data sanity
        let d = self.model.d_v();
        if let Some(thr) = self.data.binarize_threshold {
            if !thr.is_finite() {
                return Err(Error::config("data.binarize_threshold", "must be finite"));
            }
        }
        let _ = d;
        self.to_train_config().validate()
    }

    pub fn to_train_config(&self) -> TrainConfig {
        let t = &self.train;
        let mut cfg = TrainConfig::defaults(self.method, t.max_iters, t.seed);
        if let Some(x) = t.k1 {
            cfg.k1 = x;
        }
        if let Some(x) = t.k2 {
            cfg.k2 = x;
        }
        if let Some(x) = t.lr {
            cfg.lr = x;
        }
        if let Some(x) = t.beta1 {
            cfg.beta1 = x;
        }
        if let Some(x) = t.beta2 {
            cfg.beta2 = x;
        }
        if let Some(x) = t.eps {
            cfg.eps = x;
        }
        if let Some(x) = t.batch_size {
            cfg.batch_size = x;
        }
        if let Some(x) = t.tau {
            cfg.tau = x;
        }
        if let Some(x) = t.eval_every {
            cfg.eval_every = x;
        }
        if let Some(x) = t.entropy_mode {
            cfg.entropy_mode = x;
        }
        if let Some(x) = t.energy_mode {
            cfg.energy_mode = x;
        }
        if let Some(x) = t.init_scale {
            cfg.init_scale = x;
        }
        if let Some(x) = t.divergence_limit {
            cfg.divergence_limit = x;
        }
        if let Some(cd) = &self.cd {
            cfg.cd_k = cd.k;
        }
        if let Some(nv) = &self.nvil {
            cfg.nvil_components = nv.components;
        }
        cfg
    }

    pub fn d_z(&self) -> Option<usize> {
        self.variational.as_ref().map(|v| v.d_z)
    }

    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable spec")
    }
}

/// Dataset root resolution: explicit flag wins over the environment.
pub fn data_root(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os("ADVIL_DATA_DIR").map(PathBuf::from))
}
