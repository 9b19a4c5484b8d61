//! Subcommand implementations. Every command is deterministic under a
//! fixed seed and writes only beneath its output path.

use std::path::{Path, PathBuf};

use advil::data::metrics::{read_metrics, MetricsRecord, MetricsWriter};
use advil::data::{
    dirichlet_categorical_synth, load_dataset, pgm::write_pgm_grid, plot::plot_svg, save_csv,
};
use advil::energy::EnergyModel;
use advil::error::Error;
use advil::evaluation::{
    ais_log_z, gradient_condition_check, sample_grid, test_nll, track_bounds, AisBase, AisConfig,
    AisSchedule, GridSource, TrackCfg,
};
use advil::objectives::nll_exact;
use advil::rng::Prng;
use advil::trainer::checkpoint::config_hash_of;
use advil::trainer::{
    load_checkpoint, save_checkpoint, train as run_train, TrainConfig, TrainHooks, TrainState,
};
use anyhow::{Context, Result};

use crate::config::{data_root, RunSpec};

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    config_path: String,
    resolved_config: serde_json::Value,
    config_hash: String,
    dataset_hash: String,
    git_describe: String,
    out_dir: String,
}

/// Run identity: the resolved configuration minus the stopping point, so
/// resuming with a larger iteration budget stays compatible while any
/// other change is rejected.
fn run_identity_hash(resolved: &serde_json::Value) -> u64 {
    let mut v = resolved.clone();
    if let Some(t) = v.get_mut("train").and_then(|t| t.as_object_mut()) {
        t.remove("max_iters");
    }
    config_hash_of(&v)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

struct CsvHooks {
    metrics: MetricsWriter,
}

impl TrainHooks for CsvHooks {
    fn on_metrics(&mut self, rec: &MetricsRecord) -> advil::Result<()> {
        self.metrics.write(rec)
    }
}

// ── train ────────────────────────────────────────────────────────────

pub fn train(
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    resume: Option<&Path>,
    data_dir: Option<&Path>,
    checkpoint_every: u64,
) -> Result<()> {
    let mut spec = RunSpec::load(config_path)?;
    if let Some(s) = seed {
        spec.train.seed = s;
    }
    let cfg = spec.to_train_config();
    let resolved = spec.canonical_json();
    let config_hash = run_identity_hash(&resolved);

    let dataset = load_dataset(&spec.data, data_root(data_dir).as_deref())?;
    std::fs::create_dir_all(out)?;

    let manifest = Manifest {
        config_path: config_path.display().to_string(),
        resolved_config: resolved.clone(),
        config_hash: format!("{config_hash:016x}"),
        dataset_hash: format!("{:016x}", dataset.content_hash()),
        git_describe: git_describe(),
        out_dir: out.display().to_string(),
    };
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    let mut state = match resume {
        None => TrainState::init(&cfg, &spec.model, spec.d_z())?,
        Some(ckpt) => {
            let (state, method, hash) = load_checkpoint(ckpt)?;
            if method != cfg.method {
                return Err(
                    Error::config("method", "checkpoint method differs from config").into(),
                );
            }
            if hash != config_hash {
                return Err(Error::config(
                    "config",
                    format!(
                        "checkpoint belongs to a different configuration \
                         ({hash:016x} vs {config_hash:016x})"
                    ),
                )
                .into());
            }
            state
        }
    };

    let mut hooks = CsvHooks {
        metrics: MetricsWriter::create(out.join("metrics.csv"))?.with_wall_clock(),
    };
    if checkpoint_every == 0 {
        run_train(&cfg, &mut state, &dataset, &mut hooks)?;
    } else {
        while state.iteration < cfg.max_iters {
            let mut chunk = cfg.clone();
            chunk.max_iters = (state.iteration + checkpoint_every).min(cfg.max_iters);
            run_train(&chunk, &mut state, &dataset, &mut hooks)?;
            let path = out.join(format!("ckpt_{:08}.ckpt", state.iteration));
            save_checkpoint(path, &state, &cfg, config_hash)?;
        }
    }
    save_checkpoint(out.join("final.ckpt"), &state, &cfg, config_hash)?;
    println!(
        "run complete: {} iterations, checkpoint {}",
        state.iteration,
        out.join("final.ckpt").display()
    );
    Ok(())
}

// ── eval ─────────────────────────────────────────────────────────────

fn load_run(run: &Path) -> Result<(RunSpec, TrainState, TrainConfig)> {
    let manifest: Manifest = serde_json::from_str(
        &std::fs::read_to_string(run.join("manifest.json"))
            .with_context(|| format!("run directory {} has no manifest", run.display()))?,
    )?;
    let spec: RunSpec = serde_json::from_value(manifest.resolved_config)
        .map_err(|e| Error::config("manifest.resolved_config", e.to_string()))?;
    let (state, _, _) = load_checkpoint(run.join("final.ckpt"))?;
    let cfg = spec.to_train_config();
    Ok((spec, state, cfg))
}

fn base_rates(dataset: &advil::data::Dataset) -> Vec<f64> {
    let m = &dataset.train;
    let (n, d) = (m.rows(), m.cols());
    let mut rates = vec![0.0; d];
    for r in 0..n {
        for (j, &x) in m.row(r).iter().enumerate() {
            rates[j] += x;
        }
    }
    rates.iter().map(|&s| s / n as f64).collect()
}

#[derive(serde::Serialize)]
struct EvalReport {
    split: String,
    ais_chains: usize,
    ais_temps: usize,
    seed: u64,
    log_z_estimate: f64,
    log_z_standard_error: f64,
    dropped_chains: usize,
    ais_valid: bool,
    nll: f64,
    log_likelihood: f64,
    likelihood_is_bound: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    run: &Path,
    ais_chains: usize,
    ais_temps: usize,
    split: &str,
    seed: u64,
    threads: usize,
    eval_samples: usize,
    ais_base: &str,
    data_dir: Option<&Path>,
) -> Result<()> {
    let (spec, state, _) = load_run(run)?;
    let dataset = load_dataset(&spec.data, data_root(data_dir).as_deref())?;
    let (split_name, rows) = match dataset.eval_split(split) {
        Ok(m) => (split.to_string(), m),
        Err(_) if split == "test" => {
            eprintln!("note: no test split, scoring the validation split");
            ("valid".to_string(), &dataset.valid)
        }
        Err(e) => return Err(e.into()),
    };

    let base = match ais_base {
        "data" => AisBase::DataBaseRates(base_rates(&dataset)),
        "uniform" => AisBase::Uniform,
        other => {
            return Err(Error::config("ais-base", format!("unknown base {other}")).into());
        }
    };
    let ais_cfg = AisConfig {
        n_chains: ais_chains,
        n_temperatures: ais_temps,
        schedule: AisSchedule::Linear,
        base,
        seed,
        threads,
    };
    let ais = ais_log_z(&state.model, &ais_cfg)?;
    if !ais.valid {
        eprintln!(
            "warning: {} of {} chains dropped; the estimate is flagged invalid",
            ais.dropped_chains, ais_chains
        );
    }
    let mut rng = Prng::stream(seed, 0xe7a1);
    let nll = test_nll(
        &state.model,
        state.enc.as_ref(),
        rows,
        ais.estimate,
        eval_samples,
        &mut rng,
    )?;

    let report = EvalReport {
        split: split_name,
        ais_chains,
        ais_temps,
        seed,
        log_z_estimate: ais.estimate,
        log_z_standard_error: ais.standard_error,
        dropped_chains: ais.dropped_chains,
        ais_valid: ais.valid,
        nll: nll.nll,
        log_likelihood: nll.log_likelihood(),
        likelihood_is_bound: nll.is_bound,
    };
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(run.join("report.json"), &json)?;
    println!("{json}");
    Ok(())
}

// ── oracle ───────────────────────────────────────────────────────────

pub fn oracle(
    run: Option<&Path>,
    config: Option<&Path>,
    seed: u64,
    samples: usize,
    data_dir: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let (spec, state) = match (run, config) {
        (Some(r), _) => {
            let (spec, state, _) = load_run(r)?;
            (spec, state)
        }
        (None, Some(c)) => {
            let spec = RunSpec::load(c)?;
            let cfg = spec.to_train_config();
            let state = TrainState::init(&cfg, &spec.model, spec.d_z())?;
            (spec, state)
        }
        (None, None) => {
            return Err(Error::config("oracle", "need --run or --config").into());
        }
    };
    let dataset = load_dataset(&spec.data, data_root(data_dir).as_deref())?;
    let enc = state
        .enc
        .as_ref()
        .ok_or_else(|| Error::config("oracle", "bound tracking needs an encoder (advil runs)"))?;
    let dec = match state.dec.as_ref() {
        Some(advil::variational::Decoder::Net(net)) => net,
        _ => return Err(Error::config("oracle", "bound tracking needs a network decoder").into()),
    };
    let aux = state
        .aux
        .as_ref()
        .ok_or_else(|| Error::config("oracle", "bound tracking needs the auxiliary net"))?;

    let mut rng = Prng::seed_from(seed);
    let track = TrackCfg {
        n_samples: samples,
        n_z_oracle: samples.min(5_000),
    };
    let mut report = track_bounds(
        &state.model,
        enc,
        dec,
        aux,
        &dataset.valid,
        &track,
        &mut rng,
    )?;
    report.iteration = state.iteration;
    let body = serde_json::json!({
        "iteration": report.iteration,
        "free_energy_gap": report.free_energy_gap,
        "free_energy_gap_se": report.free_energy_gap_se,
        "entropy_gap": report.entropy_gap,
        "entropy_gap_se": report.entropy_gap_se,
        "log_z_gap": report.log_z_gap,
        "log_z_gap_se": report.log_z_gap_se,
        "exact_nll_valid": nll_exact(&state.model, &dataset.valid).ok(),
    });
    let json = serde_json::to_string_pretty(&body)?;
    match out {
        Some(p) => std::fs::write(p, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

// ── lemma ────────────────────────────────────────────────────────────

pub fn lemma(
    config_path: &Path,
    out: &Path,
    every: u64,
    z_samples: usize,
    data_dir: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    let mut spec = RunSpec::load(config_path)?;
    if let Some(s) = seed {
        spec.train.seed = s;
    }
    let cfg = spec.to_train_config();
    let dataset = load_dataset(&spec.data, data_root(data_dir).as_deref())?;
    std::fs::create_dir_all(out)?;
    let mut state = TrainState::init(&cfg, &spec.model, spec.d_z())?;
    let mut metrics = MetricsWriter::create(out.join("lemma.csv"))?;
    let mut trace_rng = Prng::stream(cfg.seed, 0x1e44a);

    let probe = |state: &TrainState, rng: &mut Prng| -> Result<MetricsRecord> {
        let enc = state.enc.as_ref().expect("advil encoder");
        let dec = match state.dec.as_ref() {
            Some(advil::variational::Decoder::Net(net)) => net,
            _ => unreachable!("advil decoder"),
        };
        let dec_enum = advil::variational::Decoder::Net(dec.clone());
        let report =
            gradient_condition_check(&state.model, enc, &dec_enum, &dataset.train, z_samples, rng)?;
        let nll = nll_exact(&state.model, &dataset.train)?;
        // exact encoder bound: analytic positive phase plus exact log Z
        let obj_cfg = advil::objectives::ObjectiveCfg {
            energy_mode: advil::objectives::EnergyMode::AnalyticLinear,
            ..Default::default()
        };
        let bound = advil::objectives::free_energy_upper(
            &state.model,
            enc,
            &dataset.train,
            1,
            &obj_cfg,
            rng,
        )?
        .value();
        let l1 = bound + advil::energy::exact_log_z(&state.model)?;
        Ok(MetricsRecord {
            iteration: state.iteration,
            values: vec![
                ("lhs".into(), report.lhs),
                ("rhs".into(), report.rhs),
                ("nll_exact".into(), nll),
                ("l1_exact".into(), l1),
            ],
        })
    };

    let rec = probe(&state, &mut trace_rng)?;
    metrics.write(&rec)?;
    while state.iteration < cfg.max_iters {
        let mut chunk = cfg.clone();
        chunk.max_iters = (state.iteration + every).min(cfg.max_iters);
        run_train(&chunk, &mut state, &dataset, &mut advil::trainer::NoHooks)?;
        let rec = probe(&state, &mut trace_rng)?;
        metrics.write(&rec)?;
    }
    save_checkpoint(out.join("final.ckpt"), &state, &cfg, 0)?;
    println!("trace written to {}", out.join("lemma.csv").display());
    Ok(())
}

// ── synth ────────────────────────────────────────────────────────────

pub fn synth(d: usize, alpha: f64, seed: u64, sizes: &str, out: &Path) -> Result<()> {
    let parts: Vec<usize> = sizes
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::config("sizes", "expected three comma-separated counts"))?;
    if parts.len() != 3 {
        return Err(Error::config("sizes", "expected train,valid,test").into());
    }
    let (dataset, table) =
        dirichlet_categorical_synth(d, alpha, (parts[0], parts[1], parts[2]), seed)?;
    std::fs::create_dir_all(out)?;
    save_csv(out.join("train.csv"), &dataset.train)?;
    save_csv(out.join("valid.csv"), &dataset.valid)?;
    if let Some(test) = &dataset.test {
        save_csv(out.join("test.csv"), test)?;
    }
    std::fs::write(
        out.join("truth.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "d": d,
            "alpha": alpha,
            "seed": seed,
            "sizes": parts,
            "table": table,
        }))?,
    )?;
    println!("synthetic dataset written to {}", out.display());
    Ok(())
}

// ── sample ───────────────────────────────────────────────────────────

#[allow(clippy::too_many_arguments)]
pub fn sample(
    run: &Path,
    source: &str,
    count: usize,
    burnin: usize,
    seed: u64,
    out: Option<&Path>,
    img_h: Option<usize>,
    img_w: Option<usize>,
) -> Result<()> {
    let (_, state, _) = load_run(run)?;
    let mut rng = Prng::seed_from(seed);
    let grid = match source {
        "model-gibbs" => sample_grid(
            GridSource::ModelGibbs {
                model: &state.model,
                burnin,
            },
            count,
            &mut rng,
        )?,
        "decoder" => {
            let dec = match state.dec.as_ref() {
                Some(advil::variational::Decoder::Net(net)) => net,
                _ => {
                    return Err(Error::config("sample", "run has no network decoder").into());
                }
            };
            sample_grid(GridSource::Decoder(dec), count, &mut rng)?
        }
        other => {
            return Err(Error::config(
                "source",
                format!("unknown source {other}; use model-gibbs or decoder"),
            )
            .into())
        }
    };

    let d_v = grid.cols();
    let (h, w) = match (img_h, img_w) {
        (Some(h), Some(w)) if h * w == d_v => (h, w),
        (None, None) => squarest_factors(d_v),
        _ => {
            return Err(Error::config("img", format!("--img-h * --img-w must equal {d_v}")).into())
        }
    };
    let base: PathBuf = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.join(format!("samples_{source}")));
    let cols = (count as f64).sqrt().ceil() as usize;
    let range = if matches!(state.model, EnergyModel::Grbm(_)) {
        None
    } else {
        Some((0.0, 1.0))
    };
    write_pgm_grid(base.with_extension("pgm"), &grid, h, w, cols.max(1), range)?;
    save_csv(base.with_extension("csv"), &grid)?;
    println!(
        "wrote {} and {}",
        base.with_extension("pgm").display(),
        base.with_extension("csv").display()
    );
    Ok(())
}

fn squarest_factors(n: usize) -> (usize, usize) {
    let mut best = (1, n);
    for h in 1..=((n as f64).sqrt() as usize) {
        if n % h == 0 {
            best = (h, n / h);
        }
    }
    best
}

// ── plot ─────────────────────────────────────────────────────────────

pub fn plot(metrics: &Path, names: &str, out: &Path) -> Result<()> {
    let records = read_metrics(metrics)?;
    let names: Vec<&str> = names.split(',').map(str::trim).collect();
    plot_svg(out, &records, &names)?;
    println!("wrote {}", out.display());
    Ok(())
}
