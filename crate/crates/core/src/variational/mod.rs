//! The three variational distributions: encoder `Q(h|v)`, decoder
//! `q(v,h) = ∫ q(z) q(h|z) q(v|h) dz`, and auxiliary inference `r(z|h)`.
//!
//! Discrete layers are sampled with the binary Concrete relaxation
//! `sigmoid((logits + L) / tau)` for logistic noise `L`, so samples stay
//! differentiable in the network parameters. An optional hard-forward mode
//! thresholds the forward value at 0.5 (an exact Bernoulli draw) while the
//! gradient keeps flowing through the relaxed path.
//!
//! Bernoulli log-masses are evaluated at relaxed points by the multilinear
//! extension `x log p + (1-x) log(1-p)`, with probabilities squeezed into
//! `[1e-7, 1-1e-7]` before the log.

use crate::array::{sigmoid, DenseArray};
use crate::energy::{enumerate_joint, EnergyModel, JointTable};
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tape::{NodeId, ParamBlock, Role, Tape};

pub const PROB_CLAMP: f64 = 1e-7;
const LOGIT_CLAMP: f64 = 15.0;
const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Clone, Copy, Debug)]
pub struct RelaxationConfig {
    pub temperature: f64,
    pub hard_forward: bool,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        RelaxationConfig {
            // low enough that relaxed samples track the discrete law the
            // energies see, high enough for usable gradients
            temperature: 0.25,
            hard_forward: false,
        }
    }
}

impl RelaxationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain {
                op: "RelaxationConfig",
                detail: format!("temperature must be positive, got {}", self.temperature),
            })
        }
    }
}

// ── Affine building block ────────────────────────────────────────────

/// One affine map `x -> x W + b`; every conditional in the variational
/// networks is a single affine layer followed by its link function.
#[derive(Clone, Debug)]
pub struct Affine {
    pub w: ParamBlock,
    pub b: ParamBlock,
}

impl Affine {
    pub fn zeros(prefix: &str, role: Role, d_in: usize, d_out: usize) -> Self {
        Affine {
            w: ParamBlock::new(
                format!("{prefix}.w"),
                DenseArray::zeros(&[d_in, d_out]),
                role,
            ),
            b: ParamBlock::new(format!("{prefix}.b"), DenseArray::zeros(&[d_out, 1]), role),
        }
    }

    /// Weights `N(0, 1/d_in)`, biases zero.
    pub fn random(prefix: &str, role: Role, d_in: usize, d_out: usize, rng: &mut Prng) -> Self {
        let mut a = Self::zeros(prefix, role, d_in, d_out);
        let scale = 1.0 / (d_in as f64).sqrt();
        a.w.value = DenseArray::new(
            vec![d_in, d_out],
            (0..d_in * d_out).map(|_| rng.normal() * scale).collect(),
        )
        .expect("finite init");
        a
    }

    pub fn d_in(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let w = tape.leaf(&self.w)?;
        let b = tape.leaf(&self.b)?;
        tape.affine(x, w, b)
    }

    pub fn apply_raw(&self, x: &DenseArray) -> Result<DenseArray> {
        let mut out = x.matmul(&self.w.value)?;
        let bias = self.b.value.values();
        let cols = out.cols();
        for (i, o) in out.values_mut().iter_mut().enumerate() {
            *o += bias[i % cols];
        }
        Ok(out)
    }

    pub fn blocks(&self) -> [&ParamBlock; 2] {
        [&self.w, &self.b]
    }

    pub fn blocks_mut(&mut self) -> [&mut ParamBlock; 2] {
        [&mut self.w, &mut self.b]
    }
}

// ── Relaxed Bernoulli sampling ───────────────────────────────────────

/// Binary Concrete sample from logits: `sigmoid((logits + L) / tau)`.
pub fn relaxed_bernoulli_from_logits(
    tape: &mut Tape,
    logits: NodeId,
    relax: &RelaxationConfig,
    rng: &mut Prng,
) -> Result<NodeId> {
    relax.validate()?;
    let shape = tape.value(logits).shape().to_vec();
    let noise = tape.constant(DenseArray::new(
        shape,
        (0..tape.value(logits).len())
            .map(|_| rng.logistic())
            .collect(),
    )?);
    let pre = tape.add(logits, noise)?;
    let scaled = tape.scale(pre, 1.0 / relax.temperature)?;
    let soft = tape.sigmoid(scaled)?;
    if !relax.hard_forward {
        return Ok(soft);
    }
    // hard forward, relaxed gradient: soft + stopgrad(threshold(soft) - soft)
    let correction = tape.value(soft).map(|s| if s > 0.5 { 1.0 - s } else { -s });
    let c = tape.constant(correction);
    tape.add(soft, c)
}

/// Binary Concrete sample from a probability node. Probabilities exactly 0
/// or 1 get their logit clamped to +/-15; the returned counter reports how
/// many entries were clamped.
pub fn relaxed_bernoulli_sample(
    tape: &mut Tape,
    probs: NodeId,
    relax: &RelaxationConfig,
    rng: &mut Prng,
) -> Result<(NodeId, u64)> {
    relax.validate()?;
    let vals = tape.value(probs);
    let lo = sigmoid(-LOGIT_CLAMP);
    let hi = sigmoid(LOGIT_CLAMP);
    let clamped = vals
        .values()
        .iter()
        .filter(|&&p| p == 0.0 || p == 1.0)
        .count() as u64;
    let p_node = if clamped > 0 {
        // straight-through nudge off the boundary; gradient is untouched
        let delta = vals.map(|p| {
            if p == 0.0 {
                lo
            } else if p == 1.0 {
                hi - 1.0
            } else {
                0.0
            }
        });
        let d = tape.constant(delta);
        tape.add(probs, d)?
    } else {
        probs
    };
    let logp = tape.log(p_node)?;
    let om = tape.one_minus(p_node)?;
    let logom = tape.log(om)?;
    let logits = tape.sub(logp, logom)?;
    let sample = relaxed_bernoulli_from_logits(tape, logits, relax, rng)?;
    Ok((sample, clamped))
}

// ── Bernoulli helpers on the tape ────────────────────────────────────

/// Squeezes probabilities into `[PROB_CLAMP, 1 - PROB_CLAMP]` so logs stay
/// bounded; affine in p, so gradients are exact.
fn squeeze_probs(tape: &mut Tape, probs: NodeId) -> Result<NodeId> {
    let scaled = tape.scale(probs, 1.0 - 2.0 * PROB_CLAMP)?;
    let shift = tape.constant(DenseArray::full(tape.value(scaled).shape(), PROB_CLAMP));
    tape.add(scaled, shift)
}

/// Row sums of `x log p + (1 - x) log(1 - p)` with `p = sigmoid(logits)`,
/// `[n, 1]`. Exact at binary `x`; the multilinear extension at relaxed `x`.
pub fn bernoulli_log_mass_rows(tape: &mut Tape, logits: NodeId, x: NodeId) -> Result<NodeId> {
    let p = tape.sigmoid(logits)?;
    let ps = squeeze_probs(tape, p)?;
    let logp = tape.log(ps)?;
    let om = tape.one_minus(ps)?;
    let logom = tape.log(om)?;
    let t1 = tape.mul(x, logp)?;
    let omx = tape.one_minus(x)?;
    let t2 = tape.mul(omx, logom)?;
    let s = tape.add(t1, t2)?;
    tape.row_sums(s)
}

/// Row sums of the factorized Bernoulli entropy
/// `p softplus(-L) + (1 - p) softplus(L)`, `[n, 1]`. Finite for any finite
/// logits (0 log 0 resolves to 0 as the logits saturate).
pub fn bernoulli_entropy_rows(tape: &mut Tape, logits: NodeId) -> Result<NodeId> {
    let p = tape.sigmoid(logits)?;
    let neg = tape.neg(logits)?;
    let sp_neg = tape.softplus(neg)?;
    let sp_pos = tape.softplus(logits)?;
    let t1 = tape.mul(p, sp_neg)?;
    let omp = tape.one_minus(p)?;
    let t2 = tape.mul(omp, sp_pos)?;
    let s = tape.add(t1, t2)?;
    tape.row_sums(s)
}

/// Row sums of `log N(x; 0, I)`, `[n, 1]`.
pub fn std_normal_log_density_rows(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
    let sq = tape.square(x)?;
    let s = tape.row_sums(sq)?;
    let s = tape.scale(s, -0.5)?;
    let d = tape.value(x).cols() as f64;
    let c = tape.constant(DenseArray::full(
        tape.value(s).shape(),
        -0.5 * d * (std::f64::consts::TAU).ln(),
    ));
    tape.add(s, c)
}

/// Bernoulli entropy of a probability value, with `0 log 0 := 0`.
pub fn bernoulli_entropy_value(p: f64) -> f64 {
    let term = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    term(p) + term(1.0 - p)
}

// ── Encoder ──────────────────────────────────────────────────────────

/// Amortized posterior: affine+sigmoid per layer, factorized Bernoulli.
/// For a DBM the second layer reads the sampled relaxed first layer.
#[derive(Clone, Debug)]
pub struct EncoderNet {
    pub layers: Vec<Affine>,
}

impl EncoderNet {
    /// Layer widths `v -> h1 (-> h2)` matching the model.
    pub fn random(model: &EnergyModel, rng: &mut Prng) -> Self {
        let mut dims = vec![model.d_v()];
        dims.extend(model.hidden_dims());
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Affine::random(&format!("phi.enc{i}"), Role::Phi, w[0], w[1], rng))
            .collect();
        EncoderNet { layers }
    }

    pub fn zeros(model: &EnergyModel) -> Self {
        let mut dims = vec![model.d_v()];
        dims.extend(model.hidden_dims());
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Affine::zeros(&format!("phi.enc{i}"), Role::Phi, w[0], w[1]))
            .collect();
        EncoderNet { layers }
    }

    pub fn blocks(&self) -> Vec<&ParamBlock> {
        self.layers.iter().flat_map(|a| a.blocks()).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        self.layers
            .iter_mut()
            .flat_map(|a| a.blocks_mut())
            .collect()
    }

    /// Hidden-layer probabilities in the value domain; deeper layers read a
    /// hard sample of the layer below.
    pub fn layer_probs_raw(&self, v: &DenseArray, rng: &mut Prng) -> Result<Vec<DenseArray>> {
        let mut probs = Vec::with_capacity(self.layers.len());
        let mut input = v.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let p = layer.apply_raw(&input)?.map(sigmoid);
            if i + 1 < self.layers.len() {
                input = crate::energy::bernoulli_sample(&p, rng);
            }
            probs.push(p);
        }
        Ok(probs)
    }

    /// Hard samples per layer, ancestrally.
    pub fn hard_sample(&self, v: &DenseArray, rng: &mut Prng) -> Result<Vec<DenseArray>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut input = v.clone();
        for layer in &self.layers {
            let p = layer.apply_raw(&input)?.map(sigmoid);
            let s = crate::energy::bernoulli_sample(&p, rng);
            input = s.clone();
            out.push(s);
        }
        Ok(out)
    }
}

/// Everything the positive phase needs from one encoder pass.
pub struct EncoderForward {
    /// Per-layer probability nodes.
    pub probs: Vec<NodeId>,
    /// Per-layer relaxed samples (hard forward if configured).
    pub samples: Vec<NodeId>,
    /// Analytic factorized entropy per row, `[n, 1]`.
    pub entropy_rows: NodeId,
    /// `log Q(h~|v)` at the drawn samples per row, `[n, 1]`.
    pub log_q_rows: NodeId,
}

pub fn encoder_forward(
    enc: &EncoderNet,
    tape: &mut Tape,
    v: NodeId,
    relax: &RelaxationConfig,
    rng: &mut Prng,
) -> Result<EncoderForward> {
    let mut probs = Vec::new();
    let mut samples = Vec::new();
    let mut entropy_rows = None;
    let mut log_q_rows = None;
    let mut input = v;
    for layer in &enc.layers {
        let logits = layer.apply(tape, input)?;
        let p = tape.sigmoid(logits)?;
        let s = relaxed_bernoulli_from_logits(tape, logits, relax, rng)?;
        let h_ent = bernoulli_entropy_rows(tape, logits)?;
        let lq = bernoulli_log_mass_rows(tape, logits, s)?;
        entropy_rows = Some(match entropy_rows {
            None => h_ent,
            Some(acc) => tape.add(acc, h_ent)?,
        });
        log_q_rows = Some(match log_q_rows {
            None => lq,
            Some(acc) => tape.add(acc, lq)?,
        });
        probs.push(p);
        samples.push(s);
        input = s;
    }
    Ok(EncoderForward {
        probs,
        samples,
        entropy_rows: entropy_rows.expect("at least one layer"),
        log_q_rows: log_q_rows.expect("at least one layer"),
    })
}

/// Exact tabular posterior over all hidden configurations, used as an
/// oracle override on enumerable models.
#[derive(Clone, Debug)]
pub struct TabularPosterior {
    pub d_v: usize,
    pub hidden_dims: Vec<usize>,
    /// Per visible code: distribution over all-hidden codes.
    pub cond: Vec<Vec<f64>>,
}

impl TabularPosterior {
    /// The exact posterior `P(h|v)` of an enumerable model.
    pub fn exact(model: &EnergyModel) -> Result<Self> {
        let table = enumerate_joint(model)?;
        Ok(Self::from_joint(&table))
    }

    pub fn from_joint(table: &JointTable) -> Self {
        let d_v = table.layer_dims[0];
        let cond = (0..(1usize << d_v))
            .map(|vc| table.hidden_given_v(vc))
            .collect();
        TabularPosterior {
            d_v,
            hidden_dims: table.layer_dims[1..].to_vec(),
            cond,
        }
    }
}

/// Encoder dispatch: a neural net in production, a table in oracle tests.
#[derive(Clone, Debug)]
pub enum Encoder {
    Net(EncoderNet),
    Tabular(TabularPosterior),
}

impl Encoder {
    pub fn as_net(&self) -> Option<&EncoderNet> {
        match self {
            Encoder::Net(n) => Some(n),
            Encoder::Tabular(_) => None,
        }
    }
}

// ── Decoder ──────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisibleKind {
    Binary,
    Gaussian,
}

/// Directed sampler `z -> h(top) -> ... -> h(bottom) -> v` with a standard
/// normal prior on `z`.
#[derive(Clone, Debug)]
pub struct DecoderNet {
    pub d_z: usize,
    /// Top-down maps: `z -> h_top`, then one per lower hidden layer.
    pub h_maps: Vec<Affine>,
    /// Bottom hidden layer to visibles (logits, or mean for Gaussian).
    pub v_map: Affine,
    pub visible: VisibleKind,
}

impl DecoderNet {
    pub fn random(model: &EnergyModel, d_z: usize, rng: &mut Prng) -> Self {
        let hidden = model.hidden_dims();
        // chain dims top-down: z, h_top, ..., h_bottom
        let mut chain = vec![d_z];
        chain.extend(hidden.iter().rev());
        let h_maps = chain
            .windows(2)
            .enumerate()
            .map(|(i, w)| Affine::random(&format!("psi.dec.g{i}"), Role::Psi, w[0], w[1], rng))
            .collect();
        let v_map = Affine::random("psi.dec.v", Role::Psi, hidden[0], model.d_v(), rng);
        let visible = if model.is_binary_visible() {
            VisibleKind::Binary
        } else {
            VisibleKind::Gaussian
        };
        DecoderNet {
            d_z,
            h_maps,
            v_map,
            visible,
        }
    }

    pub fn d_h_top(&self) -> usize {
        self.h_maps[0].d_out()
    }

    pub fn blocks(&self) -> Vec<&ParamBlock> {
        let mut bs: Vec<&ParamBlock> = self.h_maps.iter().flat_map(|a| a.blocks()).collect();
        bs.extend(self.v_map.blocks());
        bs
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut bs: Vec<&mut ParamBlock> = self
            .h_maps
            .iter_mut()
            .flat_map(|a| a.blocks_mut())
            .collect();
        bs.extend(self.v_map.blocks_mut());
        bs
    }

    /// Hard ancestral sample in the value domain. Returns `(z, h bottom-up,
    /// v draw, final conditional mean)`.
    pub fn sample_raw(
        &self,
        n: usize,
        rng: &mut Prng,
    ) -> Result<(DenseArray, Vec<DenseArray>, DenseArray, DenseArray)> {
        let z = DenseArray::zeros(&[n, self.d_z]).map_with(|_| rng.normal());
        let mut h_top_down = Vec::with_capacity(self.h_maps.len());
        let mut input = z.clone();
        for map in &self.h_maps {
            let p = map.apply_raw(&input)?.map(sigmoid);
            let s = crate::energy::bernoulli_sample(&p, rng);
            input = s.clone();
            h_top_down.push(s);
        }
        let pre = self.v_map.apply_raw(&input)?;
        let (v, mean) = match self.visible {
            VisibleKind::Binary => {
                let p = pre.map(sigmoid);
                (crate::energy::bernoulli_sample(&p, rng), p)
            }
            VisibleKind::Gaussian => (crate::energy::gaussian_sample(&pre, 1.0, rng), pre),
        };
        h_top_down.reverse();
        Ok((z, h_top_down, v, mean))
    }
}

/// Reparameterized decoder draw, all nodes on the tape.
pub struct DecoderSample {
    pub n: usize,
    pub z: NodeId,
    /// Relaxed hidden samples, bottom-up (matching the energy builders).
    pub h: Vec<NodeId>,
    /// Logit (or mean) nodes aligned with `h`, bottom-up.
    pub h_pre: Vec<NodeId>,
    pub v: NodeId,
    /// Visible logits (binary) or mean (Gaussian).
    pub v_pre: NodeId,
}

pub fn decoder_sample(
    dec: &DecoderNet,
    tape: &mut Tape,
    n: usize,
    relax: &RelaxationConfig,
    rng: &mut Prng,
) -> Result<DecoderSample> {
    if n == 0 {
        return Err(Error::Domain {
            op: "decoder_sample",
            detail: "need at least one sample".into(),
        });
    }
    let z_vals = DenseArray::zeros(&[n, dec.d_z]).map_with(|_| rng.normal());
    let z = tape.constant(z_vals);
    let mut h_top_down = Vec::new();
    let mut pre_top_down = Vec::new();
    let mut input = z;
    for map in &dec.h_maps {
        let logits = map.apply(tape, input)?;
        let s = relaxed_bernoulli_from_logits(tape, logits, relax, rng)?;
        h_top_down.push(s);
        pre_top_down.push(logits);
        input = s;
    }
    let v_pre = dec.v_map.apply(tape, input)?;
    let v = match dec.visible {
        VisibleKind::Binary => relaxed_bernoulli_from_logits(tape, v_pre, relax, rng)?,
        VisibleKind::Gaussian => {
            let noise = tape
                .constant(DenseArray::zeros(&[n, dec.v_map.d_out()]).map_with(|_| rng.normal()));
            tape.add(v_pre, noise)?
        }
    };
    h_top_down.reverse();
    pre_top_down.reverse();
    Ok(DecoderSample {
        n,
        z,
        h: h_top_down,
        h_pre: pre_top_down,
        v,
        v_pre,
    })
}

/// The three per-row log-density terms of the decoder joint.
pub struct DecoderLogTerms {
    pub log_qz: NodeId,
    /// Sum over hidden layers of `log q(h_layer | parent)`.
    pub log_qh: NodeId,
    pub log_qv: NodeId,
}

/// Evaluates `(log q(z), log q(h|z), log q(v|h))` at the given nodes, which
/// may be relaxed samples or any values on the generative path.
pub fn decoder_log_terms(
    dec: &DecoderNet,
    tape: &mut Tape,
    z: NodeId,
    h_bottom_up: &[NodeId],
    v: NodeId,
) -> Result<DecoderLogTerms> {
    if h_bottom_up.len() != dec.h_maps.len() {
        return Err(Error::DimMismatch(format!(
            "decoder has {} hidden layers, got {}",
            dec.h_maps.len(),
            h_bottom_up.len()
        )));
    }
    let log_qz = std_normal_log_density_rows(tape, z)?;

    let mut log_qh = None;
    let mut input = z;
    // walk top-down; h_bottom_up is reversed relative to h_maps
    for (map, h) in dec.h_maps.iter().zip(h_bottom_up.iter().rev()) {
        let logits = map.apply(tape, input)?;
        let lm = bernoulli_log_mass_rows(tape, logits, *h)?;
        log_qh = Some(match log_qh {
            None => lm,
            Some(acc) => tape.add(acc, lm)?,
        });
        input = *h;
    }

    let v_pre = dec.v_map.apply(tape, input)?;
    let log_qv = match dec.visible {
        VisibleKind::Binary => bernoulli_log_mass_rows(tape, v_pre, v)?,
        VisibleKind::Gaussian => {
            let diff = tape.sub(v, v_pre)?;
            std_normal_log_density_rows(tape, diff)?
        }
    };
    Ok(DecoderLogTerms {
        log_qz,
        log_qh: log_qh.expect("at least one hidden layer"),
        log_qv,
    })
}

/// An explicit joint table standing in for the decoder in oracle tests;
/// its entropy and expectations are exact sums.
#[derive(Clone, Debug)]
pub struct TabularJoint {
    pub layer_dims: Vec<usize>,
    pub probs: Vec<f64>,
}

impl TabularJoint {
    pub fn exact(model: &EnergyModel) -> Result<Self> {
        let t = enumerate_joint(model)?;
        Ok(TabularJoint {
            layer_dims: t.layer_dims,
            probs: t.probs,
        })
    }

    pub fn new(layer_dims: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        let bits: usize = layer_dims.iter().sum();
        if probs.len() != 1 << bits {
            return Err(Error::DimMismatch(format!(
                "table needs {} entries, got {}",
                1usize << bits,
                probs.len()
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 || probs.iter().any(|&p| p < 0.0) {
            return Err(Error::Domain {
                op: "TabularJoint::new",
                detail: "probabilities must be nonnegative and sum to 1".into(),
            });
        }
        Ok(TabularJoint { layer_dims, probs })
    }
}

#[derive(Clone, Debug)]
pub enum Decoder {
    Net(DecoderNet),
    Tabular(TabularJoint),
}

impl Decoder {
    pub fn as_net(&self) -> Option<&DecoderNet> {
        match self {
            Decoder::Net(n) => Some(n),
            Decoder::Tabular(_) => None,
        }
    }
}

// ── Auxiliary inference r(z|h) ───────────────────────────────────────

/// Diagonal Gaussian `r(z|h)` with affine mean and soft-clamped
/// log-variance (`10 tanh(raw / 10)`, keeping it inside (-10, 10) while
/// staying differentiable).
#[derive(Clone, Debug)]
pub struct AuxNet {
    pub mean: Affine,
    pub logvar: Affine,
}

impl AuxNet {
    pub fn random(d_h_top: usize, d_z: usize, rng: &mut Prng) -> Self {
        AuxNet {
            mean: Affine::random("psi.aux.mean", Role::Psi, d_h_top, d_z, rng),
            logvar: Affine::zeros("psi.aux.logvar", Role::Psi, d_h_top, d_z),
        }
    }

    pub fn blocks(&self) -> Vec<&ParamBlock> {
        let mut bs: Vec<&ParamBlock> = self.mean.blocks().to_vec();
        bs.extend(self.logvar.blocks());
        bs
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let [mw, mb] = self.mean.blocks_mut();
        let [lw, lb] = self.logvar.blocks_mut();
        vec![mw, mb, lw, lb]
    }
}

/// `log r(z|h)` per row, `[n, 1]`. `h` is the top hidden layer.
pub fn aux_log_prob(aux: &AuxNet, tape: &mut Tape, h_top: NodeId, z: NodeId) -> Result<NodeId> {
    let mu = aux.mean.apply(tape, h_top)?;
    let raw = aux.logvar.apply(tape, h_top)?;
    let squashed = tape.scale(raw, 1.0 / LOGVAR_CLAMP)?;
    let t = tape.tanh(squashed)?;
    let logvar = tape.scale(t, LOGVAR_CLAMP)?;
    // -1/2 sum[(z - mu)^2 e^{-s} + s + log 2 pi]
    let diff = tape.sub(z, mu)?;
    let sq = tape.square(diff)?;
    let neg_s = tape.neg(logvar)?;
    let prec = tape.exp(neg_s)?;
    let quad = tape.mul(sq, prec)?;
    let inner = tape.add(quad, logvar)?;
    let row = tape.row_sums(inner)?;
    let row = tape.scale(row, -0.5)?;
    let d = tape.value(z).cols() as f64;
    let c = tape.constant(DenseArray::full(
        tape.value(row).shape(),
        -0.5 * d * (std::f64::consts::TAU).ln(),
    ));
    tape.add(row, c)
}
