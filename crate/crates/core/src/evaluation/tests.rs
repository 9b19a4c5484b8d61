use super::*;
use crate::energy::{exact_log_z, GrbmParams, RbmParams};
use crate::variational::{AuxNet, Decoder, DecoderNet, TabularJoint, TabularPosterior};

const LN_2: f64 = std::f64::consts::LN_2;

fn ais_cfg(chains: usize, temps: usize, seed: u64) -> AisConfig {
    AisConfig {
        n_chains: chains,
        n_temperatures: temps,
        schedule: AisSchedule::Linear,
        base: AisBase::Uniform,
        seed,
        threads: 1,
    }
}

#[test]
fn uniform_target_gives_exactly_zero_weights() {
    let model = EnergyModel::Rbm(RbmParams::zeros(6, 4));
    let res = ais_log_z(&model, &ais_cfg(20, 50, 1)).unwrap();
    assert!(res.log_weights.iter().all(|&w| w == 0.0));
    assert!((res.estimate - 10.0 * LN_2).abs() < 1e-12);
    assert!(res.valid);
    assert_eq!(res.dropped_chains, 0);
}

#[test]
fn ais_tracks_exact_log_z_on_small_models() {
    let mut rng = Prng::seed_from(3);
    let model = EnergyModel::Rbm(RbmParams::random(10, 8, 0.5, &mut rng));
    let exact = exact_log_z(&model).unwrap();
    let res = ais_log_z(&model, &ais_cfg(60, 2_000, 4)).unwrap();
    assert!(
        (res.estimate - exact).abs() < 0.25,
        "ais {} vs exact {exact}",
        res.estimate
    );
}

#[test]
fn ais_grbm_matches_closed_form() {
    let mut rng = Prng::seed_from(5);
    let model = EnergyModel::Grbm(GrbmParams::random(6, 4, 0.4, &mut rng));
    let exact = exact_log_z(&model).unwrap();
    let res = ais_log_z(&model, &ais_cfg(60, 2_000, 6)).unwrap();
    assert!(
        (res.estimate - exact).abs() < 0.3,
        "ais {} vs exact {exact}",
        res.estimate
    );
}

#[test]
fn ais_dbm_matches_enumeration() {
    let mut rng = Prng::seed_from(7);
    let model = EnergyModel::Dbm(crate::energy::DbmParams::random(5, 4, 3, 0.5, &mut rng));
    let exact = exact_log_z(&model).unwrap();
    let res = ais_log_z(&model, &ais_cfg(60, 2_000, 8)).unwrap();
    assert!(
        (res.estimate - exact).abs() < 0.3,
        "ais {} vs exact {exact}",
        res.estimate
    );
}

#[test]
fn more_temperatures_reduce_bias_in_trend() {
    let mut rng = Prng::seed_from(9);
    let model = EnergyModel::Rbm(RbmParams::random(8, 6, 0.8, &mut rng));
    let exact = exact_log_z(&model).unwrap();
    let mut errs = Vec::new();
    for &temps in &[50usize, 200, 800] {
        let mut acc = 0.0;
        for seed in 0..3 {
            let res = ais_log_z(&model, &ais_cfg(40, temps, 100 + seed)).unwrap();
            acc += (res.estimate - exact).abs();
        }
        errs.push(acc / 3.0);
    }
    assert!(
        errs[2] <= errs[0] + 1e-9,
        "bias did not shrink across temperatures: {errs:?}"
    );
}

#[test]
fn threaded_reduction_is_deterministic() {
    let mut rng = Prng::seed_from(11);
    let model = EnergyModel::Rbm(RbmParams::random(7, 5, 0.6, &mut rng));
    let mut cfg = ais_cfg(16, 200, 12);
    let single = ais_log_z(&model, &cfg).unwrap();
    cfg.threads = 4;
    let multi = ais_log_z(&model, &cfg).unwrap();
    assert_eq!(single.log_weights, multi.log_weights);
    assert_eq!(single.estimate, multi.estimate);
}

#[test]
fn overflowing_chains_are_dropped_and_flagged() {
    // couplings at the float ceiling overflow the accumulated weights
    let mut p = RbmParams::zeros(4, 3);
    p.w.value = DenseArray::full(&[4, 3], 1e308);
    let model = EnergyModel::Rbm(p);
    let res = ais_log_z(&model, &ais_cfg(10, 20, 13)).unwrap_err();
    // every weight overflows here: the run fails loudly instead of lying
    assert!(res.to_string().contains("non-finite"));
}

#[test]
fn sigmoid_spaced_schedule_is_monotone_and_spans() {
    let cfg = AisConfig {
        schedule: AisSchedule::SigmoidSpaced,
        ..ais_cfg(1, 100, 0)
    };
    let betas = cfg.betas();
    assert_eq!(betas.len(), 101);
    assert!((betas[0]).abs() < 1e-12 && (betas[100] - 1.0).abs() < 1e-12);
    assert!(betas.windows(2).all(|w| w[1] >= w[0]));
}

// ── test_nll ─────────────────────────────────────────────────────────

#[test]
fn uniform_model_test_nll() {
    let model = EnergyModel::Rbm(RbmParams::zeros(5, 3));
    let mut rng = Prng::seed_from(14);
    let split = DenseArray::zeros(&[4, 5]).map_with(|_| rng.bernoulli(0.5));
    let lz = exact_log_z(&model).unwrap();
    let out = test_nll(&model, None, &split, lz, 1, &mut rng).unwrap();
    assert!((out.nll - 5.0 * LN_2).abs() < 1e-10);
    assert!(!out.is_bound);
    assert_eq!(out.log_likelihood(), -out.nll);
}

#[test]
fn dbm_bound_reports_as_bound_and_dominates_exact() {
    let mut rng = Prng::seed_from(15);
    let model = EnergyModel::Dbm(crate::energy::DbmParams::random(4, 3, 2, 0.6, &mut rng));
    let enc = Encoder::Net(EncoderNet::random(&model, &mut rng));
    let split = DenseArray::zeros(&[6, 4]).map_with(|_| rng.bernoulli(0.5));
    let lz = exact_log_z(&model).unwrap();
    let exact = test_nll(&model, None, &split, lz, 1, &mut rng).unwrap();
    let bound = test_nll(&model, Some(&enc), &split, lz, 400, &mut rng).unwrap();
    assert!(bound.is_bound && !exact.is_bound);
    assert!(
        bound.nll >= exact.nll - 0.05,
        "bound {} under exact {}",
        bound.nll,
        exact.nll
    );
}

// ── decoder entropy oracle ───────────────────────────────────────────

#[test]
fn uniform_decoder_entropy() {
    let model = EnergyModel::Rbm(RbmParams::zeros(4, 3));
    let mut dec = DecoderNet::random(&model, 2, &mut Prng::seed_from(16));
    for b in dec.blocks_mut() {
        b.value = DenseArray::zeros(b.value.shape());
    }
    let mut rng = Prng::seed_from(17);
    let (h, _) = decoder_entropy_oracle(&dec, 400, &mut rng).unwrap();
    assert!((h - 7.0 * LN_2).abs() < 1e-6, "entropy {h}");
}

#[test]
fn degenerate_decoder_entropy_near_zero() {
    let model = EnergyModel::Rbm(RbmParams::zeros(4, 3));
    let mut dec = DecoderNet::random(&model, 2, &mut Prng::seed_from(18));
    for b in dec.blocks_mut() {
        b.value = DenseArray::zeros(b.value.shape());
    }
    dec.h_maps[0].b.value = DenseArray::full(&[3, 1], 50.0);
    dec.v_map.b.value = DenseArray::full(&[4, 1], -50.0);
    let mut rng = Prng::seed_from(19);
    let (h, _) = decoder_entropy_oracle(&dec, 200, &mut rng).unwrap();
    assert!(h.abs() < 1e-4, "entropy {h}");
}

#[test]
fn oracle_matches_ancestral_monte_carlo() {
    let model = EnergyModel::Rbm(RbmParams::zeros(3, 4));
    let mut rng = Prng::seed_from(20);
    let dec = DecoderNet::random(&model, 2, &mut rng);
    let (oracle, oracle_se) = decoder_entropy_oracle(&dec, 20_000, &mut rng).unwrap();

    // -E[log q(v,h)] with an inner estimate of q(h)
    let mut q_h = vec![0.0f64; 16];
    let inner = 20_000;
    for _ in 0..inner {
        let z = DenseArray::zeros(&[1, 2]).map_with(|_| rng.normal());
        let probs = dec.h_maps[0]
            .apply_raw(&z)
            .unwrap()
            .map(crate::array::sigmoid);
        for (code, q) in q_h.iter_mut().enumerate() {
            *q += probs
                .row(0)
                .iter()
                .enumerate()
                .map(|(j, &p)| if (code >> j) & 1 == 1 { p } else { 1.0 - p })
                .product::<f64>();
        }
    }
    for q in q_h.iter_mut() {
        *q /= inner as f64;
    }
    let n = 1_000_000;
    let (_, h_layers, v, _) = {
        // draw ancestral samples in one large batch
        dec.sample_raw(n, &mut rng).unwrap()
    };
    let h = &h_layers[0];
    let mut acc = 0.0;
    for r in 0..n {
        let code: usize = h
            .row(r)
            .iter()
            .enumerate()
            .map(|(j, &x)| ((x > 0.5) as usize) << j)
            .sum();
        let hrow = DenseArray::from_rows(&[h.row(r).to_vec()]).unwrap();
        let v_probs = dec
            .v_map
            .apply_raw(&hrow)
            .unwrap()
            .map(crate::array::sigmoid);
        let log_qvh: f64 = v
            .row(r)
            .iter()
            .zip(v_probs.row(0))
            .map(|(&x, &p)| if x > 0.5 { p.ln() } else { (1.0 - p).ln() })
            .sum();
        acc -= q_h[code].ln() + log_qvh;
    }
    let mc = acc / n as f64;
    assert!(
        (oracle - mc).abs() < 0.01 + 3.0 * oracle_se,
        "oracle {oracle} vs mc {mc}"
    );
}

#[test]
fn entropy_oracle_batches_agree() {
    let model = EnergyModel::Rbm(RbmParams::zeros(4, 3));
    let mut rng = Prng::seed_from(21);
    let dec = DecoderNet::random(&model, 3, &mut rng);
    let (h1, se1) = decoder_entropy_oracle(&dec, 5_000, &mut rng).unwrap();
    let (h2, se2) = decoder_entropy_oracle(&dec, 5_000, &mut rng).unwrap();
    let combined = (se1 * se1 + se2 * se2).sqrt();
    assert!(
        (h1 - h2).abs() <= 3.0 * combined + 1e-9,
        "{h1} vs {h2} (se {combined})"
    );
}

// ── entropy bound sandwich ───────────────────────────────────────────

#[test]
fn lower_and_upper_estimates_sandwich_the_oracle() {
    let model = EnergyModel::Rbm(RbmParams::zeros(4, 4));
    let mut rng = Prng::seed_from(22);
    let dec = DecoderNet::random(&model, 2, &mut rng);
    let aux = AuxNet::random(dec.d_h_top(), 2, &mut rng);
    let (oracle, oracle_se) = decoder_entropy_oracle(&dec, 40_000, &mut rng).unwrap();
    let (lower, lower_se) = entropy_lower_estimate(&dec, &aux, 200_000, &mut rng).unwrap();
    let (upper, upper_se) = entropy_upper_estimate(&dec, &aux, 200_000, &mut rng).unwrap();
    let se_lo = (oracle_se * oracle_se + lower_se * lower_se).sqrt();
    let se_hi = (oracle_se * oracle_se + upper_se * upper_se).sqrt();
    assert!(
        lower <= oracle + 3.0 * se_lo,
        "lower {lower} above oracle {oracle} (se {se_lo})"
    );
    assert!(
        upper >= oracle - 3.0 * se_hi,
        "upper {upper} below oracle {oracle} (se {se_hi})"
    );
    // the sandwich is strict for an untrained auxiliary
    assert!(lower < upper);
}

// ── track_bounds ─────────────────────────────────────────────────────

#[test]
fn untrained_bounds_have_positive_gaps() {
    let mut rng = Prng::seed_from(23);
    let model = EnergyModel::Rbm(RbmParams::random(5, 4, 0.7, &mut rng));
    let enc = Encoder::Net(EncoderNet::random(&model, &mut rng));
    let dec = DecoderNet::random(&model, 2, &mut rng);
    let aux = AuxNet::random(dec.d_h_top(), 2, &mut rng);
    let data = DenseArray::zeros(&[12, 5]).map_with(|_| rng.bernoulli(0.5));
    let cfg = TrackCfg {
        n_samples: 20_000,
        n_z_oracle: 4_000,
    };
    let report = track_bounds(&model, &enc, &dec, &aux, &data, &cfg, &mut rng).unwrap();
    assert!(report.free_energy_gap >= -3.0 * report.free_energy_gap_se - 1e-9);
    assert!(report.entropy_gap >= -3.0 * report.entropy_gap_se);
    assert!(report.log_z_gap >= -3.0 * report.log_z_gap_se);
}

#[test]
fn exact_posterior_closes_the_free_energy_gap() {
    let mut rng = Prng::seed_from(24);
    let model = EnergyModel::Rbm(RbmParams::random(4, 3, 0.6, &mut rng));
    let enc = Encoder::Tabular(TabularPosterior::exact(&model).unwrap());
    let dec = DecoderNet::random(&model, 2, &mut rng);
    let aux = AuxNet::random(dec.d_h_top(), 2, &mut rng);
    let data = DenseArray::zeros(&[10, 4]).map_with(|_| rng.bernoulli(0.5));
    let report = track_bounds(
        &model,
        &enc,
        &dec,
        &aux,
        &data,
        &TrackCfg::default(),
        &mut rng,
    )
    .unwrap();
    assert!(
        report.free_energy_gap.abs() < 1e-9,
        "gap {}",
        report.free_energy_gap
    );
}

// ── lemma-2 condition probe ──────────────────────────────────────────

#[test]
fn exact_tabular_decoder_zeroes_the_lhs() {
    let mut rng = Prng::seed_from(25);
    let model = EnergyModel::Rbm(RbmParams::random(4, 4, 0.6, &mut rng));
    let enc = Encoder::Net(EncoderNet::random(&model, &mut rng));
    let dec = Decoder::Tabular(TabularJoint::exact(&model).unwrap());
    let data = DenseArray::zeros(&[8, 4]).map_with(|_| rng.bernoulli(0.5));
    let report = gradient_condition_check(&model, &enc, &dec, &data, 100, &mut rng).unwrap();
    assert!(report.lhs < 1e-12, "lhs {}", report.lhs);
    assert!(report.rhs > 0.0);
}

#[test]
fn probe_reports_both_norms_without_claims() {
    let mut rng = Prng::seed_from(26);
    let model = EnergyModel::Rbm(RbmParams::random(4, 4, 0.8, &mut rng));
    let enc = Encoder::Net(EncoderNet::random(&model, &mut rng));
    let dec = Decoder::Net(DecoderNet::random(&model, 4, &mut rng));
    let data = DenseArray::zeros(&[8, 4]).map_with(|_| rng.bernoulli(0.5));
    let report = gradient_condition_check(&model, &enc, &dec, &data, 2_000, &mut rng).unwrap();
    assert!(report.lhs.is_finite() && report.rhs.is_finite());
    // budget guard
    let big = EnergyModel::Rbm(RbmParams::zeros(8, 8));
    assert!(gradient_condition_check(&big, &enc, &dec, &data, 10, &mut rng).is_err());
}
