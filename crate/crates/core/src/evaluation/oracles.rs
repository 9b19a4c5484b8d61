//! Brute-force oracles over the decoder and the gradient-condition probe.

use crate::array::{sigmoid, DenseArray};
use crate::energy::enumeration::code_bits;
use crate::energy::{enumerate_joint, EnergyModel};
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::variational::{
    bernoulli_entropy_value, AuxNet, DecoderNet, Encoder, VisibleKind, PROB_CLAMP,
};

fn squeeze(p: f64) -> f64 {
    PROB_CLAMP + (1.0 - 2.0 * PROB_CLAMP) * p
}

fn bernoulli_log_mass(probs: &[f64], x: &[f64]) -> f64 {
    probs
        .iter()
        .zip(x)
        .map(|(&p, &xi)| {
            let p = squeeze(p);
            xi * p.ln() + (1.0 - xi) * (1.0 - p).ln()
        })
        .sum()
}

fn std_normal_log_density(x: &[f64]) -> f64 {
    x.iter()
        .map(|&z| -0.5 * (z * z + std::f64::consts::TAU.ln()))
        .sum()
}

/// Evaluates `log r(z|h)` in the value domain (soft-clamped log-variance,
/// matching the tape path).
fn aux_log_density(aux: &AuxNet, h_top: &DenseArray, z: &[f64], row: usize) -> Result<f64> {
    let mu = aux.mean.apply_raw(h_top)?;
    let raw = aux.logvar.apply_raw(h_top)?;
    Ok(mu
        .row(row)
        .iter()
        .zip(raw.row(row))
        .zip(z)
        .map(|((&m, &r), &zi)| {
            let s = 10.0 * (r / 10.0).tanh();
            -0.5 * ((zi - m) * (zi - m) * (-s).exp() + s + std::f64::consts::TAU.ln())
        })
        .sum())
}

/// Brute-force decoder entropy: enumerates every hidden configuration,
/// estimates the top-layer marginal by prior samples, and adds the
/// analytic conditional entropy of the visibles. The standard error comes
/// from ten sample blocks.
pub fn decoder_entropy_oracle(
    dec: &DecoderNet,
    n_z_samples: usize,
    rng: &mut Prng,
) -> Result<(f64, f64)> {
    let hidden_dims: Vec<usize> = dec.h_maps.iter().map(|m| m.d_out()).collect();
    let total_bits: usize = hidden_dims.iter().sum();
    if total_bits > 20 {
        return Err(Error::BudgetExceeded(format!(
            "decoder entropy oracle budget is 20 hidden bits, got {total_bits}"
        )));
    }
    if n_z_samples == 0 {
        return Err(Error::Domain {
            op: "decoder_entropy_oracle",
            detail: "need at least one prior sample".into(),
        });
    }

    let d_top = hidden_dims[0];
    let n_top = 1usize << d_top;

    // q(h_top) by prior Monte Carlo, accumulated per block for the error bar
    let blocks = 10usize.min(n_z_samples);
    let mut block_q: Vec<Vec<f64>> = vec![vec![0.0; n_top]; blocks];
    let mut block_n = vec![0usize; blocks];
    for s in 0..n_z_samples {
        let z = DenseArray::zeros(&[1, dec.d_z]).map_with(|_| rng.normal());
        let probs = dec.h_maps[0].apply_raw(&z)?.map(sigmoid);
        let block = s % blocks;
        block_n[block] += 1;
        for code in 0..n_top {
            let mass: f64 = probs
                .row(0)
                .iter()
                .enumerate()
                .map(|(j, &p)| if (code >> j) & 1 == 1 { p } else { 1.0 - p })
                .product();
            block_q[block][code] += mass;
        }
    }

    // entropy from a given top-layer marginal
    let entropy_given_q_top = |q_top: &[f64]| -> Result<f64> {
        // walk the deterministic lower conditionals exactly
        // joint over all hidden layers: start with (top layer marginal)
        let mut layer_codes: Vec<(Vec<usize>, f64)> = q_top
            .iter()
            .enumerate()
            .map(|(c, &q)| (vec![c], q))
            .collect();
        for (li, map) in dec.h_maps.iter().enumerate().skip(1) {
            let d_in = hidden_dims[li - 1];
            let d_out = hidden_dims[li];
            let mut next = Vec::with_capacity(layer_codes.len() << d_out);
            for (codes, q) in &layer_codes {
                let parent =
                    DenseArray::from_rows(&[code_bits(*codes.last().expect("codes"), d_in)])?;
                let probs = map.apply_raw(&parent)?.map(sigmoid);
                for code in 0..(1usize << d_out) {
                    let mass: f64 = probs
                        .row(0)
                        .iter()
                        .enumerate()
                        .map(|(j, &p)| if (code >> j) & 1 == 1 { p } else { 1.0 - p })
                        .product();
                    let mut cs = codes.clone();
                    cs.push(code);
                    next.push((cs, q * mass));
                }
            }
            layer_codes = next;
        }
        // H(hidden joint) + sum q(h) H(v | bottom h)
        let mut h_hidden = 0.0;
        let mut h_visible = 0.0;
        for (codes, q) in &layer_codes {
            if *q <= 0.0 {
                continue;
            }
            h_hidden -= q * q.ln();
            let bottom = DenseArray::from_rows(&[code_bits(
                *codes.last().expect("codes"),
                *hidden_dims.last().expect("dims"),
            )])?;
            let h_v = match dec.visible {
                VisibleKind::Binary => {
                    let probs = dec.v_map.apply_raw(&bottom)?.map(sigmoid);
                    probs
                        .row(0)
                        .iter()
                        .map(|&p| bernoulli_entropy_value(p))
                        .sum::<f64>()
                }
                VisibleKind::Gaussian => {
                    0.5 * dec.v_map.d_out() as f64
                        * (std::f64::consts::TAU * std::f64::consts::E).ln()
                }
            };
            h_visible += q * h_v;
        }
        Ok(h_hidden + h_visible)
    };

    // pooled estimate plus block spread
    let mut pooled = vec![0.0; n_top];
    for (bq, &bn) in block_q.iter().zip(&block_n) {
        for (p, &x) in pooled.iter_mut().zip(bq) {
            let _ = bn;
            *p += x;
        }
    }
    for p in pooled.iter_mut() {
        *p /= n_z_samples as f64;
    }
    let estimate = entropy_given_q_top(&pooled)?;

    let mut block_h = Vec::with_capacity(blocks);
    for (bq, &bn) in block_q.iter().zip(&block_n) {
        if bn == 0 {
            continue;
        }
        let q: Vec<f64> = bq.iter().map(|&x| x / bn as f64).collect();
        block_h.push(entropy_given_q_top(&q)?);
    }
    let bm = block_h.iter().sum::<f64>() / block_h.len() as f64;
    let bvar = block_h.iter().map(|x| (x - bm) * (x - bm)).sum::<f64>()
        / (block_h.len().max(2) as f64 - 1.0);
    let se = (bvar / block_h.len() as f64).sqrt();
    Ok((estimate, se))
}

/// Per-sample terms `E(v,h) + log q(v|h) + log q(h|z) + log q(z) - log r(z|h)`
/// from hard ancestral decoder draws. Means of `-term` estimate `log Z`
/// from below; shared by the bound tracker.
pub fn negative_phase_terms(
    model: &EnergyModel,
    dec: &DecoderNet,
    aux: &AuxNet,
    n: usize,
    rng: &mut Prng,
) -> Result<Vec<f64>> {
    let (log_q_terms, e) = decoder_sample_log_terms(Some(model), dec, aux, n, rng)?;
    Ok(log_q_terms
        .iter()
        .zip(&e)
        .map(|(&lq, &ei)| ei + lq)
        .collect())
}

/// The entropy lower-bound estimator: `-E[log q(v|h) + log q(h|z) +
/// log q(z) - log r(z|h)]` over hard ancestral samples.
pub fn entropy_lower_estimate(
    dec: &DecoderNet,
    aux: &AuxNet,
    n: usize,
    rng: &mut Prng,
) -> Result<(f64, f64)> {
    let (terms, _) = decoder_sample_log_terms(None, dec, aux, n, rng)?;
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = terms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    Ok((-mean, (var / n as f64).sqrt()))
}

fn decoder_sample_log_terms(
    model: Option<&EnergyModel>,
    dec: &DecoderNet,
    aux: &AuxNet,
    n: usize,
    rng: &mut Prng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Domain {
            op: "negative_phase_terms",
            detail: "need at least one sample".into(),
        });
    }
    let mut log_terms = Vec::with_capacity(n);
    let mut energies = Vec::with_capacity(n);
    let chunk = 512usize;
    let mut remaining = n;
    while remaining > 0 {
        let m = chunk.min(remaining);
        remaining -= m;
        let z = DenseArray::zeros(&[m, dec.d_z]).map_with(|_| rng.normal());
        let mut log_q = vec![0.0f64; m];
        for r in 0..m {
            log_q[r] += std_normal_log_density(z.row(r));
        }
        // top-down hard sampling with running log-mass
        let mut input = z.clone();
        let mut h_layers: Vec<DenseArray> = Vec::new();
        for map in &dec.h_maps {
            let probs = map.apply_raw(&input)?.map(sigmoid);
            let sample = crate::energy::bernoulli_sample(&probs, rng);
            for r in 0..m {
                log_q[r] += bernoulli_log_mass(probs.row(r), sample.row(r));
            }
            input = sample.clone();
            h_layers.push(sample);
        }
        let v_pre = dec.v_map.apply_raw(&input)?;
        let v = match dec.visible {
            VisibleKind::Binary => {
                let probs = v_pre.map(sigmoid);
                let sample = crate::energy::bernoulli_sample(&probs, rng);
                for r in 0..m {
                    log_q[r] += bernoulli_log_mass(probs.row(r), sample.row(r));
                }
                sample
            }
            VisibleKind::Gaussian => {
                let sample = crate::energy::gaussian_sample(&v_pre, 1.0, rng);
                for r in 0..m {
                    let diff: Vec<f64> = sample
                        .row(r)
                        .iter()
                        .zip(v_pre.row(r))
                        .map(|(&a, &b)| a - b)
                        .collect();
                    log_q[r] += std_normal_log_density(&diff);
                }
                sample
            }
        };
        let h_top = h_layers.last().expect("hidden layers");
        for r in 0..m {
            log_q[r] -= aux_log_density(aux, h_top, z.row(r), r)?;
        }
        // bottom-up layer order for the energy
        match model {
            Some(em) => {
                let bottom_up: Vec<&DenseArray> = h_layers.iter().rev().collect();
                energies.extend(em.energy_batch(&v, &bottom_up)?);
            }
            None => energies.extend(std::iter::repeat_n(0.0, m)),
        }
        log_terms.extend(log_q);
    }
    Ok((log_terms, energies))
}

/// The discarded upper-bound variant, kept as a verification fixture: the
/// inner expectation re-samples `z ~ r(z|h)` instead of reusing the
/// generative draw.
pub fn entropy_upper_estimate(
    dec: &DecoderNet,
    aux: &AuxNet,
    n: usize,
    rng: &mut Prng,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Domain {
            op: "entropy_upper_estimate",
            detail: "need at least one sample".into(),
        });
    }
    let mut terms = Vec::with_capacity(n);
    for _ in 0..n {
        let z0 = DenseArray::zeros(&[1, dec.d_z]).map_with(|_| rng.normal());
        let mut input = z0.clone();
        let mut h_layers = Vec::new();
        let mut log_qvh = 0.0; // log q(v|h) + lower hidden conditionals
        for (li, map) in dec.h_maps.iter().enumerate() {
            let probs = map.apply_raw(&input)?.map(sigmoid);
            let sample = crate::energy::bernoulli_sample(&probs, rng);
            if li > 0 {
                log_qvh += bernoulli_log_mass(probs.row(0), sample.row(0));
            }
            input = sample.clone();
            h_layers.push(sample);
        }
        let v_pre = dec.v_map.apply_raw(&input)?;
        match dec.visible {
            VisibleKind::Binary => {
                let probs = v_pre.map(sigmoid);
                let sample = crate::energy::bernoulli_sample(&probs, rng);
                log_qvh += bernoulli_log_mass(probs.row(0), sample.row(0));
            }
            VisibleKind::Gaussian => {
                log_qvh += -0.5 * dec.v_map.d_out() as f64 * std::f64::consts::TAU.ln();
                // E[log N(v; mean, I)] at a fresh draw contributes the
                // sampled quadratic; draw it explicitly
                let sample = crate::energy::gaussian_sample(&v_pre, 1.0, rng);
                let quad: f64 = sample
                    .row(0)
                    .iter()
                    .zip(v_pre.row(0))
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                log_qvh += -0.5 * quad;
            }
        }
        // resample z from r(z|h_top)
        let h_top = h_layers.last().expect("layers");
        let mu = aux.mean.apply_raw(h_top)?;
        let raw = aux.logvar.apply_raw(h_top)?;
        let z_r: Vec<f64> = mu
            .row(0)
            .iter()
            .zip(raw.row(0))
            .map(|(&m, &r)| {
                let s = 10.0 * (r / 10.0).tanh();
                m + (0.5 * s).exp() * rng.normal()
            })
            .collect();
        // log q(h_top | z_r) under the generative map, plus log q(z_r)
        let zr = DenseArray::from_rows(&[z_r.clone()])?;
        let probs_top = dec.h_maps[0].apply_raw(&zr)?.map(sigmoid);
        let log_q_hz = bernoulli_log_mass(probs_top.row(0), h_top.row(0));
        let log_qz = std_normal_log_density(&z_r);
        let log_r = aux_log_density(aux, h_top, &z_r, 0)?;
        terms.push(log_qvh + log_q_hz + log_qz - log_r);
    }
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = terms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    Ok((-mean, (var / n as f64).sqrt()))
}

// ── Gradient-condition probe ─────────────────────────────────────────

/// Both sides of the gradient-alignment condition: the decoder's
/// displacement term against the exact encoder-bound gradient norm.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct GradientConditionReport {
    /// `|| sum_{v,h} (q(v,h) - P(v,h)) dE/dtheta ||_2`
    pub lhs: f64,
    /// `|| dL1/dtheta ||_2`
    pub rhs: f64,
}

/// Measures the condition on an enumerable RBM: `q(v,h)` by hidden/visible
/// enumeration with prior Monte Carlo for the auxiliary marginal, `P` and
/// the exact bound gradient by brute force.
pub fn gradient_condition_check(
    model: &EnergyModel,
    enc: &Encoder,
    dec: &crate::variational::Decoder,
    data: &DenseArray,
    n_z_samples: usize,
    rng: &mut Prng,
) -> Result<GradientConditionReport> {
    let EnergyModel::Rbm(p) = model else {
        return Err(Error::Incompatible {
            method: "gradient-condition probe".into(),
            model: model.family().into(),
        });
    };
    let (d_v, d_h) = p.dims();
    if d_v + d_h > 12 {
        return Err(Error::BudgetExceeded(format!(
            "condition probe budget is 12 bits, got {}",
            d_v + d_h
        )));
    }
    let table = enumerate_joint(model)?;
    let n_h = 1usize << d_h;

    // q(v,h): tabular override exact, or q(h) q(v|h) with the auxiliary
    // marginal by prior samples
    let q_vh_of: Box<dyn Fn(usize, usize) -> f64> = match dec {
        crate::variational::Decoder::Tabular(t) => {
            if t.layer_dims != vec![d_v, d_h] {
                return Err(Error::DimMismatch("tabular decoder dims".into()));
            }
            let probs = t.probs.clone();
            let hd = d_h;
            Box::new(move |vc, hc| probs[(vc << hd) | hc])
        }
        crate::variational::Decoder::Net(net) => {
            let mut q_h = vec![0.0f64; n_h];
            let chunk = 1024usize;
            let mut left = n_z_samples;
            while left > 0 {
                let m = chunk.min(left);
                left -= m;
                let z = DenseArray::zeros(&[m, net.d_z]).map_with(|_| rng.normal());
                let probs = net.h_maps[0].apply_raw(&z)?.map(sigmoid);
                for r in 0..m {
                    for (code, slot) in q_h.iter_mut().enumerate() {
                        let mass: f64 = probs
                            .row(r)
                            .iter()
                            .enumerate()
                            .map(|(j, &pp)| if (code >> j) & 1 == 1 { pp } else { 1.0 - pp })
                            .product();
                        *slot += mass;
                    }
                }
            }
            for q in q_h.iter_mut() {
                *q /= n_z_samples as f64;
            }
            let mut v_cond = vec![vec![0.0f64; 1 << d_v]; n_h];
            for (hc, cond) in v_cond.iter_mut().enumerate() {
                let hrow = DenseArray::from_rows(&[code_bits(hc, d_h)])?;
                let v_probs = net.v_map.apply_raw(&hrow)?.map(sigmoid);
                for (vc, slot) in cond.iter_mut().enumerate() {
                    let v = code_bits(vc, d_v);
                    *slot = v
                        .iter()
                        .zip(v_probs.row(0))
                        .map(|(&x, &pp)| if x > 0.5 { pp } else { 1.0 - pp })
                        .product::<f64>();
                }
            }
            Box::new(move |vc, hc| q_h[hc] * v_cond[hc][vc])
        }
    };

    // lhs accumulators per theta entry
    let mut dw = vec![0.0f64; d_v * d_h];
    let mut db = vec![0.0f64; d_v];
    let mut dc = vec![0.0f64; d_h];
    for hc in 0..n_h {
        let h = code_bits(hc, d_h);
        for vc in 0..(1usize << d_v) {
            let v = code_bits(vc, d_v);
            let delta = q_vh_of(vc, hc) - table.probs[table.index(&[vc, hc])];
            for (i, &vi) in v.iter().enumerate() {
                db[i] += delta * (-vi);
                for (j, &hj) in h.iter().enumerate() {
                    dw[i * d_h + j] += delta * (-vi * hj);
                }
            }
            for (j, &hj) in h.iter().enumerate() {
                dc[j] += delta * (-hj);
            }
        }
    }
    let lhs = norm3(&dw, &db, &dc);

    // rhs: exact bound gradient with analytic encoder expectations
    let enc_probs: DenseArray = match enc {
        Encoder::Net(net) => net.layers[0].apply_raw(data)?.map(sigmoid),
        Encoder::Tabular(tab) => {
            // expected h under the tabular posterior per datum
            let mut rows = Vec::with_capacity(data.rows());
            for r in 0..data.rows() {
                let vc: usize = data
                    .row(r)
                    .iter()
                    .enumerate()
                    .map(|(j, &x)| ((x > 0.5) as usize) << j)
                    .sum();
                let mut mean = vec![0.0f64; d_h];
                for (hc, &q) in tab.cond[vc].iter().enumerate() {
                    for (j, m) in mean.iter_mut().enumerate() {
                        if (hc >> j) & 1 == 1 {
                            *m += q;
                        }
                    }
                }
                rows.push(mean);
            }
            DenseArray::from_rows(&rows)?
        }
    };
    let n = data.rows() as f64;
    let mut dw = vec![0.0f64; d_v * d_h];
    let mut db = vec![0.0f64; d_v];
    let mut dc = vec![0.0f64; d_h];
    for r in 0..data.rows() {
        let v = data.row(r);
        let ph = enc_probs.row(r);
        for (i, &vi) in v.iter().enumerate() {
            db[i] += -vi / n;
            for (j, &pj) in ph.iter().enumerate() {
                dw[i * d_h + j] += -vi * pj / n;
            }
        }
        for (j, &pj) in ph.iter().enumerate() {
            dc[j] += -pj / n;
        }
    }
    // subtract the model expectation
    for vc in 0..(1usize << d_v) {
        for hc in 0..n_h {
            let pr = table.probs[table.index(&[vc, hc])];
            let v = code_bits(vc, d_v);
            let h = code_bits(hc, d_h);
            for (i, &vi) in v.iter().enumerate() {
                db[i] -= pr * (-vi);
                for (j, &hj) in h.iter().enumerate() {
                    dw[i * d_h + j] -= pr * (-vi * hj);
                }
            }
            for (j, &hj) in h.iter().enumerate() {
                dc[j] -= pr * (-hj);
            }
        }
    }
    let rhs = norm3(&dw, &db, &dc);
    Ok(GradientConditionReport { lhs, rhs })
}

fn norm3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let s: f64 = a.iter().chain(b).chain(c).map(|&x| x * x).sum();
    s.sqrt()
}
