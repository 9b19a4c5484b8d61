//! Alternating stochastic-gradient training.
//!
//! One outer iteration of the adversarial method runs K1 ascent steps on
//! the decoder/auxiliary parameters (fresh decoder batch each step), K2
//! descent steps on the encoder (fresh data batch each), and one descent
//! step on the model parameters, all under one Adam configuration. The
//! baselines (CD/PCD/VCD/NVIL) reuse the same batch protocol and optimizer.
//!
//! Update isolation holds by construction: each step hands Adam exactly
//! the blocks of one parameter family.

pub mod adam;
pub mod checkpoint;

use crate::arch::ModelArch;
use crate::data::metrics::MetricsRecord;
use crate::data::Dataset;
use crate::energy::gibbs::GibbsState;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::objectives::{
    cd_grad, free_energy_upper, negative_phase_objective, nvil_bound_on, theta_grad, vcd_grad,
    BernoulliMixture, EnergyMode, EntropyMode, ObjectiveCfg,
};
use crate::rng::Prng;
use crate::tape::ParamBlock;
use crate::variational::{AuxNet, Decoder, DecoderNet, Encoder, EncoderNet, RelaxationConfig};

pub use adam::{AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Advil,
    Cd,
    Pcd,
    Vcd,
    Nvil,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Advil => "advil",
            Method::Cd => "cd",
            Method::Pcd => "pcd",
            Method::Vcd => "vcd",
            Method::Nvil => "nvil",
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    /// Decoder/auxiliary (or NVIL sampler) updates per outer iteration.
    #[serde(default = "default_k1")]
    pub k1: usize,
    /// Encoder updates per outer iteration.
    #[serde(default = "default_k2")]
    pub k2: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub max_iters: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default = "default_entropy_mode")]
    pub entropy_mode: EntropyMode,
    #[serde(default = "default_energy_mode")]
    pub energy_mode: EnergyMode,
    /// Gibbs sweeps per update for CD/PCD, encoder rounds for VCD.
    #[serde(default = "default_cd_k")]
    pub cd_k: usize,
    #[serde(default = "default_nvil_components")]
    pub nvil_components: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_divergence_limit")]
    pub divergence_limit: f64,
}

fn default_k1() -> usize {
    100
}
fn default_k2() -> usize {
    1
}
fn default_lr() -> f64 {
    3e-4
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_batch() -> usize {
    500
}
fn default_tau() -> f64 {
    0.25
}
fn default_eval_every() -> u64 {
    100
}
fn default_entropy_mode() -> EntropyMode {
    EntropyMode::Analytic
}
fn default_energy_mode() -> EnergyMode {
    EnergyMode::Relaxed
}
fn default_cd_k() -> usize {
    1
}
fn default_nvil_components() -> usize {
    50
}
fn default_init_scale() -> f64 {
    0.01
}
fn default_divergence_limit() -> f64 {
    1e6
}

impl TrainConfig {
    pub fn defaults(method: Method, max_iters: u64, seed: u64) -> Self {
        TrainConfig {
            method,
            k1: default_k1(),
            k2: default_k2(),
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            batch_size: default_batch(),
            max_iters,
            seed,
            tau: default_tau(),
            eval_every: default_eval_every(),
            entropy_mode: default_entropy_mode(),
            energy_mode: default_energy_mode(),
            cd_k: default_cd_k(),
            nvil_components: default_nvil_components(),
            init_scale: default_init_scale(),
            divergence_limit: default_divergence_limit(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, path: &str, detail: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(path, detail))
            }
        };
        check(self.k1 >= 1, "train.k1", "must be at least 1")?;
        check(self.k2 >= 1, "train.k2", "must be at least 1")?;
        check(self.lr > 0.0, "train.lr", "must be positive")?;
        check(
            (0.0..1.0).contains(&self.beta1),
            "train.beta1",
            "must be in [0, 1)",
        )?;
        check(
            (0.0..1.0).contains(&self.beta2),
            "train.beta2",
            "must be in [0, 1)",
        )?;
        check(
            self.batch_size >= 1,
            "train.batch_size",
            "must be at least 1",
        )?;
        check(self.tau > 0.0, "train.tau", "must be positive")?;
        check(
            self.eval_every >= 1,
            "train.eval_every",
            "must be at least 1",
        )?;
        check(self.cd_k >= 1, "train.cd_k", "must be at least 1")?;
        Ok(())
    }

    pub fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn objective_cfg(&self) -> ObjectiveCfg {
        ObjectiveCfg {
            relax: RelaxationConfig {
                temperature: self.tau,
                hard_forward: false,
            },
            energy_mode: self.energy_mode,
            entropy_mode: self.entropy_mode,
        }
    }
}

/// Everything a run owns: parameters, optimizer moments, RNG, cursors.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub model: EnergyModel,
    pub enc: Option<Encoder>,
    pub dec: Option<Decoder>,
    pub aux: Option<AuxNet>,
    pub nvil_q: Option<BernoulliMixture>,
    pub adam_theta: AdamState,
    pub adam_phi: AdamState,
    pub adam_psi: AdamState,
    pub rng: Prng,
    pub iteration: u64,
    pub data_cursor: u64,
    pub pcd: Option<GibbsState>,
}

impl TrainState {
    /// Fresh state for a method/architecture pair. `d_z` is required for
    /// the adversarial method and must be absent for the others except
    /// that VCD ignores it.
    pub fn init(cfg: &TrainConfig, arch: &ModelArch, d_z: Option<usize>) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Prng::seed_from(cfg.seed);
        let model = arch.build(cfg.init_scale, &mut rng)?;
        let mut state = TrainState {
            model,
            enc: None,
            dec: None,
            aux: None,
            nvil_q: None,
            adam_theta: AdamState::new(),
            adam_phi: AdamState::new(),
            adam_psi: AdamState::new(),
            rng,
            iteration: 0,
            data_cursor: 0,
            pcd: None,
        };
        match cfg.method {
            Method::Advil => {
                let d_z =
                    d_z.ok_or_else(|| Error::config("variational.d_z", "required for advil"))?;
                state.enc = Some(Encoder::Net(EncoderNet::random(
                    &state.model,
                    &mut state.rng,
                )));
                let dec = DecoderNet::random(&state.model, d_z, &mut state.rng);
                state.aux = Some(AuxNet::random(dec.d_h_top(), d_z, &mut state.rng));
                state.dec = Some(Decoder::Net(dec));
            }
            Method::Vcd => {
                if !matches!(state.model, EnergyModel::Dbm(_)) {
                    return Err(Error::Incompatible {
                        method: "vcd".into(),
                        model: state.model.family().into(),
                    });
                }
                state.enc = Some(Encoder::Net(EncoderNet::random(
                    &state.model,
                    &mut state.rng,
                )));
            }
            Method::Cd | Method::Pcd => {
                if matches!(state.model, EnergyModel::Dbm(_)) {
                    return Err(Error::Incompatible {
                        method: cfg.method.name().into(),
                        model: "dbm".into(),
                    });
                }
            }
            Method::Nvil => {
                if matches!(state.model, EnergyModel::Dbm(_)) {
                    return Err(Error::Incompatible {
                        method: "nvil".into(),
                        model: "dbm (no closed-form free energy)".into(),
                    });
                }
                state.nvil_q = Some(BernoulliMixture::random(
                    state.model.d_v(),
                    cfg.nvil_components,
                    &mut state.rng,
                ));
            }
        }
        Ok(state)
    }
}

/// Observer hooks; the trainer calls them synchronously.
pub trait TrainHooks {
    fn on_metrics(&mut self, _rec: &MetricsRecord) -> Result<()> {
        Ok(())
    }
    fn should_stop(&mut self, _iteration: u64) -> bool {
        false
    }
}

pub struct NoHooks;
impl TrainHooks for NoHooks {}

/// Deterministic shuffled-epoch batch: the permutation is a pure function
/// of `(seed, epoch)`, so a resumed run sees identical batches.
fn batch_rows(seed: u64, n: usize, batch_size: usize, cursor: u64) -> Vec<usize> {
    let per_epoch = n.div_ceil(batch_size) as u64;
    let epoch = cursor / per_epoch;
    let slot = (cursor % per_epoch) as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = Prng::stream(seed ^ 0x9e3779b97f4a7c15, epoch);
    rng.shuffle(&mut idx);
    let lo = slot * batch_size;
    let hi = ((slot + 1) * batch_size).min(n);
    idx[lo..hi].to_vec()
}

fn guard(value: f64, limit: f64, iteration: u64) -> Result<()> {
    if value.abs() > limit || !value.is_finite() {
        Err(Error::Diverged {
            iteration,
            value,
            limit,
        })
    } else {
        Ok(())
    }
}

/// Dispatches on the configured method.
pub fn train(
    cfg: &TrainConfig,
    state: &mut TrainState,
    data: &Dataset,
    hooks: &mut dyn TrainHooks,
) -> Result<Vec<MetricsRecord>> {
    match cfg.method {
        Method::Advil => advil_train(cfg, state, data, hooks),
        _ => baseline_train(cfg, state, data, hooks),
    }
}

/// The adversarial loop: K1 decoder/auxiliary ascent steps, K2 encoder
/// descent steps, one model descent step per outer iteration.
pub fn advil_train(
    cfg: &TrainConfig,
    state: &mut TrainState,
    data: &Dataset,
    hooks: &mut dyn TrainHooks,
) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    if data.train.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let obj_cfg = cfg.objective_cfg();
    let hyper = cfg.adam_hyper();
    let n = data.train.rows();
    let mut stream = Vec::new();

    while state.iteration < cfg.max_iters {
        let iter = state.iteration;
        if hooks.should_stop(iter) {
            break;
        }

        // decoder + auxiliary: maximizing the surrogate over psi means
        // descending the negative phase E_q[E + log q - log r]
        for _ in 0..cfg.k1 {
            let obj = negative_phase_objective(
                &state.model,
                state.dec.as_ref().expect("advil state has decoder"),
                state.aux.as_ref(),
                cfg.batch_size,
                &obj_cfg,
                &mut state.rng,
            )?;
            guard(obj.value(), cfg.divergence_limit, iter)?;
            let grads = obj.grads()?;
            let mut blocks = match state.dec.as_mut() {
                Some(Decoder::Net(net)) => net.blocks_mut(),
                _ => unreachable!("advil decoder is a network"),
            };
            blocks.extend(state.aux.as_mut().expect("aux").blocks_mut());
            state.adam_psi.step(&mut blocks, &grads, &hyper, 1.0)?;
        }

        // encoder descent
        for _ in 0..cfg.k2 {
            let rows = batch_rows(cfg.seed, n, cfg.batch_size, state.data_cursor);
            state.data_cursor += 1;
            let batch = data.train.select_rows(&rows);
            let obj = free_energy_upper(
                &state.model,
                state.enc.as_ref().expect("advil state has encoder"),
                &batch,
                1,
                &obj_cfg,
                &mut state.rng,
            )?;
            guard(obj.value(), cfg.divergence_limit, iter)?;
            let grads = obj.grads()?;
            let mut blocks = match state.enc.as_mut() {
                Some(Encoder::Net(net)) => net.blocks_mut(),
                _ => unreachable!("advil encoder is a network"),
            };
            state.adam_phi.step(&mut blocks, &grads, &hyper, 1.0)?;
        }

        // model descent
        let rows = batch_rows(cfg.seed, n, cfg.batch_size, state.data_cursor);
        state.data_cursor += 1;
        let batch = data.train.select_rows(&rows);
        let (grads, est) = theta_grad(
            &state.model,
            state.enc.as_ref().expect("encoder"),
            state.dec.as_ref().expect("decoder"),
            &batch,
            cfg.batch_size,
            &obj_cfg,
            &mut state.rng,
        )?;
        guard(est.value, cfg.divergence_limit, iter)?;
        let mut blocks = state.model.theta_blocks_mut();
        state.adam_theta.step(&mut blocks, &grads, &hyper, 1.0)?;

        state.iteration += 1;
        if state.iteration % cfg.eval_every == 0 {
            let rec = advil_metrics(cfg, state, data, &obj_cfg)?;
            hooks.on_metrics(&rec)?;
            stream.push(rec);
        }
    }
    Ok(stream)
}

fn advil_metrics(
    cfg: &TrainConfig,
    state: &mut TrainState,
    data: &Dataset,
    obj_cfg: &ObjectiveCfg,
) -> Result<MetricsRecord> {
    let n = data.train.rows();
    let rows = batch_rows(cfg.seed, n, cfg.batch_size, state.data_cursor);
    state.data_cursor += 1;
    let batch = data.train.select_rows(&rows);
    let obj = crate::objectives::l2_surrogate(
        &state.model,
        state.enc.as_ref().expect("encoder"),
        state.dec.as_ref().expect("decoder"),
        state.aux.as_ref(),
        &batch,
        cfg.batch_size,
        obj_cfg,
        &mut state.rng,
    )?;
    let e = &obj.estimate;
    Ok(MetricsRecord {
        iteration: state.iteration,
        values: vec![
            ("theta_loss".into(), e.value),
            ("positive_energy".into(), e.positive_energy),
            ("positive_entropy".into(), e.positive_entropy),
            ("negative_energy".into(), e.negative_energy),
            ("negative_entropy_bound".into(), e.negative_entropy_bound),
            (
                "log_z_lower".into(),
                e.negative_entropy_bound - e.negative_energy,
            ),
        ],
    })
}

/// CD / PCD / VCD / NVIL under the shared batch-and-Adam protocol.
pub fn baseline_train(
    cfg: &TrainConfig,
    state: &mut TrainState,
    data: &Dataset,
    hooks: &mut dyn TrainHooks,
) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    if data.train.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let hyper = cfg.adam_hyper();
    let obj_cfg = cfg.objective_cfg();
    let n = data.train.rows();
    let mut stream = Vec::new();

    while state.iteration < cfg.max_iters {
        let iter = state.iteration;
        if hooks.should_stop(iter) {
            break;
        }
        let rows = batch_rows(cfg.seed, n, cfg.batch_size, state.data_cursor);
        state.data_cursor += 1;
        let batch = data.train.select_rows(&rows);

        let mut values: Vec<(String, f64)> = Vec::new();
        match cfg.method {
            Method::Cd | Method::Pcd => {
                if cfg.method == Method::Pcd && state.pcd.is_none() {
                    // persistent chains start at the first data batch
                    state.pcd = Some(GibbsState::from_visible(
                        &state.model,
                        batch.clone(),
                        &mut state.rng,
                    )?);
                }
                let (grads, stats) = cd_grad(
                    &state.model,
                    &batch,
                    cfg.cd_k,
                    state.pcd.as_mut(),
                    &mut state.rng,
                )?;
                guard(stats.positive_free_energy, cfg.divergence_limit, iter)?;
                guard(stats.negative_free_energy, cfg.divergence_limit, iter)?;
                let mut blocks = state.model.theta_blocks_mut();
                state.adam_theta.step(&mut blocks, &grads, &hyper, 1.0)?;
                values.push(("positive_free_energy".into(), stats.positive_free_energy));
                values.push(("negative_free_energy".into(), stats.negative_free_energy));
                values.push((
                    "free_energy_gap".into(),
                    stats.positive_free_energy - stats.negative_free_energy,
                ));
            }
            Method::Vcd => {
                for _ in 0..cfg.k2 {
                    let obj = free_energy_upper(
                        &state.model,
                        state.enc.as_ref().expect("vcd state has encoder"),
                        &batch,
                        1,
                        &obj_cfg,
                        &mut state.rng,
                    )?;
                    guard(obj.value(), cfg.divergence_limit, iter)?;
                    let grads = obj.grads()?;
                    let mut blocks = match state.enc.as_mut() {
                        Some(Encoder::Net(net)) => net.blocks_mut(),
                        _ => unreachable!("vcd encoder is a network"),
                    };
                    state.adam_phi.step(&mut blocks, &grads, &hyper, 1.0)?;
                }
                let (grads, stats) = {
                    let enc = match state.enc.as_ref() {
                        Some(Encoder::Net(net)) => net,
                        _ => unreachable!("vcd encoder is a network"),
                    };
                    vcd_grad(
                        &state.model,
                        enc,
                        &batch,
                        cfg.cd_k,
                        &obj_cfg,
                        &mut state.rng,
                    )?
                };
                guard(stats.positive_free_energy, cfg.divergence_limit, iter)?;
                let mut blocks = state.model.theta_blocks_mut();
                state.adam_theta.step(&mut blocks, &grads, &hyper, 1.0)?;
                values.push(("positive_bound".into(), stats.positive_free_energy));
                values.push(("negative_bound".into(), stats.negative_free_energy));
                values.push((
                    "bound_gap".into(),
                    stats.positive_free_energy - stats.negative_free_energy,
                ));
            }
            Method::Nvil => {
                // tighten the sampler bound
                for _ in 0..cfg.k1 {
                    let mut tape = crate::tape::Tape::new();
                    let root = nvil_bound_on(
                        &mut tape,
                        &state.model,
                        state.nvil_q.as_ref().expect("nvil state has sampler"),
                        cfg.batch_size,
                        &mut state.rng,
                    )?;
                    guard(tape.value(root).item(), cfg.divergence_limit, iter)?;
                    let grads = tape.backward(root)?;
                    let q_mut = state.nvil_q.as_mut().expect("sampler");
                    let mut blocks_vec: Vec<&mut ParamBlock> = q_mut.blocks_mut().into();
                    state.adam_psi.step(&mut blocks_vec, &grads, &hyper, 1.0)?;
                }
                // model step: mean data free energy plus the bound
                let q = state.nvil_q.as_ref().expect("sampler");
                let mut tape = crate::tape::Tape::new();
                let v = tape.constant(batch.clone());
                let f = state.model.free_energy_rows(&mut tape, v)?;
                let f = tape.mean(f)?;
                let bound =
                    nvil_bound_on(&mut tape, &state.model, q, cfg.batch_size, &mut state.rng)?;
                let root = tape.add(f, bound)?;
                let nll_upper = tape.value(root).item();
                guard(nll_upper, cfg.divergence_limit, iter)?;
                let grads = tape.backward(root)?;
                let mut blocks = state.model.theta_blocks_mut();
                state.adam_theta.step(&mut blocks, &grads, &hyper, 1.0)?;
                values.push(("mean_free_energy".into(), tape.value(f).item()));
                values.push(("log_z_upper".into(), tape.value(bound).item()));
                values.push(("nll_upper".into(), nll_upper));
            }
            Method::Advil => unreachable!("dispatched to advil_train"),
        }

        state.iteration += 1;
        if state.iteration % cfg.eval_every == 0 {
            let rec = MetricsRecord {
                iteration: state.iteration,
                values,
            };
            hooks.on_metrics(&rec)?;
            stream.push(rec);
        }
    }
    Ok(stream)
}
