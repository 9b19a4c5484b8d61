//! Energy functions, free energies, and exact conditionals for RBM,
//! two-layer DBM, and Gaussian RBM.
//!
//! Energies are multilinear in each layer, so every builder accepts relaxed
//! inputs in `[0, 1]`; hard binary values are only produced by the Gibbs
//! samplers. Each family exposes two paths: tape builders (differentiable,
//! used by the objectives) and raw batch evaluators (used by Gibbs, AIS and
//! the oracles, where recording a graph would only add overhead).

pub mod enumeration;
pub mod gibbs;

use crate::array::{sigmoid, softplus, DenseArray};
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tape::{NodeId, ParamBlock, Role, Tape};

pub use enumeration::{enumerate_joint, exact_log_z, JointTable};
pub use gibbs::GibbsState;

// ── Parameter containers ─────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct RbmParams {
    /// Coupling, `[d_v, d_h]`.
    pub w: ParamBlock,
    /// Visible bias, `[d_v, 1]`.
    pub b: ParamBlock,
    /// Hidden bias, `[d_h, 1]`.
    pub c: ParamBlock,
    /// Constant added to the energy; kept for gauge-invariance checks.
    pub energy_offset: f64,
}

#[derive(Clone, Debug)]
pub struct DbmParams {
    pub w1: ParamBlock,
    pub w2: ParamBlock,
    pub b: ParamBlock,
    pub c1: ParamBlock,
    pub c2: ParamBlock,
    pub energy_offset: f64,
}

#[derive(Clone, Debug)]
pub struct GrbmParams {
    pub w: ParamBlock,
    pub b: ParamBlock,
    pub c: ParamBlock,
    /// Standard deviation of the Gaussian visibles; fixed, not trained.
    pub sigma: f64,
    pub energy_offset: f64,
}

#[derive(Clone, Debug)]
pub enum EnergyModel {
    Rbm(RbmParams),
    Dbm(DbmParams),
    Grbm(GrbmParams),
}

fn check_dims(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::DimMismatch(what.to_string()))
    }
}

impl RbmParams {
    pub fn new(w: ParamBlock, b: ParamBlock, c: ParamBlock) -> Result<Self> {
        let (dv, dh) = (w.value.shape()[0], w.value.shape()[1]);
        check_dims(w.value.shape().len() == 2, "rbm W must be 2-D")?;
        check_dims(b.value.shape() == [dv, 1], "rbm b must be [d_v, 1]")?;
        check_dims(c.value.shape() == [dh, 1], "rbm c must be [d_h, 1]")?;
        Ok(RbmParams {
            w,
            b,
            c,
            energy_offset: 0.0,
        })
    }

    pub fn zeros(d_v: usize, d_h: usize) -> Self {
        RbmParams {
            w: ParamBlock::new("theta.w", DenseArray::zeros(&[d_v, d_h]), Role::Theta),
            b: ParamBlock::new("theta.b", DenseArray::zeros(&[d_v, 1]), Role::Theta),
            c: ParamBlock::new("theta.c", DenseArray::zeros(&[d_h, 1]), Role::Theta),
            energy_offset: 0.0,
        }
    }

    /// Weights `N(0, scale^2)`, biases zero.
    pub fn random(d_v: usize, d_h: usize, scale: f64, rng: &mut Prng) -> Self {
        let mut m = Self::zeros(d_v, d_h);
        m.w.value = DenseArray::new(
            vec![d_v, d_h],
            (0..d_v * d_h).map(|_| rng.normal() * scale).collect(),
        )
        .expect("finite init");
        m
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.w.value.shape()[0], self.w.value.shape()[1])
    }

    /// `P(h_j = 1 | v) = sigmoid(c_j + (v W)_j)` for a batch of rows.
    pub fn h_probs(&self, v: &DenseArray) -> Result<DenseArray> {
        let vw = v.matmul(&self.w.value)?;
        affine_sigmoid(&vw, self.c.value.values())
    }

    /// `P(v_i = 1 | h) = sigmoid(b_i + (W h)_i)`.
    pub fn v_probs(&self, h: &DenseArray) -> Result<DenseArray> {
        let hw = h.matmul_nt(&self.w.value)?;
        affine_sigmoid(&hw, self.b.value.values())
    }

    /// Free energies `F(v)` for a batch, as a plain vector.
    pub fn free_energy_batch(&self, v: &DenseArray) -> Result<Vec<f64>> {
        let vw = v.matmul(&self.w.value)?;
        let b = self.b.value.values();
        let c = self.c.value.values();
        let (n, dh) = (vw.rows(), vw.cols());
        let mut out = Vec::with_capacity(n);
        for r in 0..n {
            let vb: f64 = v.row(r).iter().zip(b).map(|(&x, &bi)| x * bi).sum();
            let sp: f64 = vw
                .row(r)
                .iter()
                .zip(c)
                .map(|(&x, &cj)| softplus(cj + x))
                .sum();
            out.push(-vb - sp + self.energy_offset);
            debug_assert_eq!(vw.row(r).len(), dh);
        }
        Ok(out)
    }
}

impl DbmParams {
    pub fn new(
        w1: ParamBlock,
        w2: ParamBlock,
        b: ParamBlock,
        c1: ParamBlock,
        c2: ParamBlock,
    ) -> Result<Self> {
        let (dv, dh1) = (w1.value.shape()[0], w1.value.shape()[1]);
        let dh2 = w2.value.shape()[1];
        check_dims(w2.value.shape()[0] == dh1, "dbm W2 rows must equal d_h1")?;
        check_dims(b.value.shape() == [dv, 1], "dbm b must be [d_v, 1]")?;
        check_dims(c1.value.shape() == [dh1, 1], "dbm c1 must be [d_h1, 1]")?;
        check_dims(c2.value.shape() == [dh2, 1], "dbm c2 must be [d_h2, 1]")?;
        Ok(DbmParams {
            w1,
            w2,
            b,
            c1,
            c2,
            energy_offset: 0.0,
        })
    }

    pub fn zeros(d_v: usize, d_h1: usize, d_h2: usize) -> Self {
        DbmParams {
            w1: ParamBlock::new("theta.w1", DenseArray::zeros(&[d_v, d_h1]), Role::Theta),
            w2: ParamBlock::new("theta.w2", DenseArray::zeros(&[d_h1, d_h2]), Role::Theta),
            b: ParamBlock::new("theta.b", DenseArray::zeros(&[d_v, 1]), Role::Theta),
            c1: ParamBlock::new("theta.c1", DenseArray::zeros(&[d_h1, 1]), Role::Theta),
            c2: ParamBlock::new("theta.c2", DenseArray::zeros(&[d_h2, 1]), Role::Theta),
            energy_offset: 0.0,
        }
    }

    pub fn random(d_v: usize, d_h1: usize, d_h2: usize, scale: f64, rng: &mut Prng) -> Self {
        let mut m = Self::zeros(d_v, d_h1, d_h2);
        m.w1.value = DenseArray::new(
            vec![d_v, d_h1],
            (0..d_v * d_h1).map(|_| rng.normal() * scale).collect(),
        )
        .expect("finite init");
        m.w2.value = DenseArray::new(
            vec![d_h1, d_h2],
            (0..d_h1 * d_h2).map(|_| rng.normal() * scale).collect(),
        )
        .expect("finite init");
        m
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.w1.value.shape()[0],
            self.w1.value.shape()[1],
            self.w2.value.shape()[1],
        )
    }

    /// `P(h1 | v, h2)`: both neighbors contribute.
    pub fn h1_probs(&self, v: &DenseArray, h2: &DenseArray) -> Result<DenseArray> {
        let vw = v.matmul(&self.w1.value)?;
        let hw = h2.matmul_nt(&self.w2.value)?;
        let pre = vw.add(&hw)?;
        affine_sigmoid(&pre, self.c1.value.values())
    }

    pub fn v_probs(&self, h1: &DenseArray) -> Result<DenseArray> {
        let hw = h1.matmul_nt(&self.w1.value)?;
        affine_sigmoid(&hw, self.b.value.values())
    }

    pub fn h2_probs(&self, h1: &DenseArray) -> Result<DenseArray> {
        let hw = h1.matmul(&self.w2.value)?;
        affine_sigmoid(&hw, self.c2.value.values())
    }
}

impl GrbmParams {
    pub fn new(w: ParamBlock, b: ParamBlock, c: ParamBlock, sigma: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::Domain {
                op: "GrbmParams::new",
                detail: format!("sigma must be positive, got {sigma}"),
            });
        }
        let rbm = RbmParams::new(w, b, c)?;
        Ok(GrbmParams {
            w: rbm.w,
            b: rbm.b,
            c: rbm.c,
            sigma,
            energy_offset: 0.0,
        })
    }

    pub fn zeros(d_v: usize, d_h: usize) -> Self {
        let rbm = RbmParams::zeros(d_v, d_h);
        GrbmParams {
            w: rbm.w,
            b: rbm.b,
            c: rbm.c,
            sigma: 1.0,
            energy_offset: 0.0,
        }
    }

    pub fn random(d_v: usize, d_h: usize, scale: f64, rng: &mut Prng) -> Self {
        let rbm = RbmParams::random(d_v, d_h, scale, rng);
        GrbmParams {
            w: rbm.w,
            b: rbm.b,
            c: rbm.c,
            sigma: 1.0,
            energy_offset: 0.0,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.w.value.shape()[0], self.w.value.shape()[1])
    }

    /// `P(h_j = 1 | v) = sigmoid(c_j + (v W)_j / sigma)`.
    pub fn h_probs(&self, v: &DenseArray) -> Result<DenseArray> {
        let vw = v.matmul(&self.w.value)?.scale(1.0 / self.sigma);
        affine_sigmoid(&vw, self.c.value.values())
    }

    /// `v | h ~ Normal(b + sigma W h, sigma^2 I)`; returns the mean batch.
    pub fn v_mean(&self, h: &DenseArray) -> Result<DenseArray> {
        let hw = h.matmul_nt(&self.w.value)?.scale(self.sigma);
        let b = self.b.value.values();
        let mut out = hw;
        let cols = out.cols();
        for (i, x) in out.values_mut().iter_mut().enumerate() {
            *x += b[i % cols];
        }
        Ok(out)
    }

    pub fn free_energy_batch(&self, v: &DenseArray) -> Result<Vec<f64>> {
        let vw = v.matmul(&self.w.value)?;
        let b = self.b.value.values();
        let c = self.c.value.values();
        let inv_two_s2 = 1.0 / (2.0 * self.sigma * self.sigma);
        let mut out = Vec::with_capacity(v.rows());
        for r in 0..v.rows() {
            let quad: f64 = v
                .row(r)
                .iter()
                .zip(b)
                .map(|(&x, &bi)| (x - bi) * (x - bi))
                .sum();
            let sp: f64 = vw
                .row(r)
                .iter()
                .zip(c)
                .map(|(&x, &cj)| softplus(cj + x / self.sigma))
                .sum();
            out.push(quad * inv_two_s2 - sp + self.energy_offset);
        }
        Ok(out)
    }
}

fn affine_sigmoid(pre: &DenseArray, bias: &[f64]) -> Result<DenseArray> {
    let cols = pre.cols();
    check_dims(bias.len() == cols, "bias length must match columns")?;
    let mut out = pre.clone();
    for (i, x) in out.values_mut().iter_mut().enumerate() {
        *x = sigmoid(*x + bias[i % cols]);
    }
    Ok(out)
}

// ── Model-level dispatch ─────────────────────────────────────────────

impl EnergyModel {
    pub fn d_v(&self) -> usize {
        match self {
            EnergyModel::Rbm(p) => p.dims().0,
            EnergyModel::Dbm(p) => p.dims().0,
            EnergyModel::Grbm(p) => p.dims().0,
        }
    }

    /// Hidden layer widths, bottom-up.
    pub fn hidden_dims(&self) -> Vec<usize> {
        match self {
            EnergyModel::Rbm(p) => vec![p.dims().1],
            EnergyModel::Dbm(p) => {
                let (_, h1, h2) = p.dims();
                vec![h1, h2]
            }
            EnergyModel::Grbm(p) => vec![p.dims().1],
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            EnergyModel::Rbm(_) => "rbm",
            EnergyModel::Dbm(_) => "dbm",
            EnergyModel::Grbm(_) => "grbm",
        }
    }

    pub fn is_binary_visible(&self) -> bool {
        !matches!(self, EnergyModel::Grbm(_))
    }

    pub fn energy_offset(&self) -> f64 {
        match self {
            EnergyModel::Rbm(p) => p.energy_offset,
            EnergyModel::Dbm(p) => p.energy_offset,
            EnergyModel::Grbm(p) => p.energy_offset,
        }
    }

    pub fn set_energy_offset(&mut self, kappa: f64) {
        match self {
            EnergyModel::Rbm(p) => p.energy_offset = kappa,
            EnergyModel::Dbm(p) => p.energy_offset = kappa,
            EnergyModel::Grbm(p) => p.energy_offset = kappa,
        }
    }

    pub fn theta_blocks(&self) -> Vec<&ParamBlock> {
        match self {
            EnergyModel::Rbm(p) => vec![&p.w, &p.b, &p.c],
            EnergyModel::Dbm(p) => vec![&p.w1, &p.w2, &p.b, &p.c1, &p.c2],
            EnergyModel::Grbm(p) => vec![&p.w, &p.b, &p.c],
        }
    }

    pub fn theta_blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        match self {
            EnergyModel::Rbm(p) => vec![&mut p.w, &mut p.b, &mut p.c],
            EnergyModel::Dbm(p) => vec![&mut p.w1, &mut p.w2, &mut p.b, &mut p.c1, &mut p.c2],
            EnergyModel::Grbm(p) => vec![&mut p.w, &mut p.b, &mut p.c],
        }
    }

    fn check_layers(&self, got: usize) -> Result<()> {
        let want = self.hidden_dims().len();
        if got == want {
            Ok(())
        } else {
            Err(Error::DimMismatch(format!(
                "{} expects {want} hidden layer(s), got {got}",
                self.family()
            )))
        }
    }

    /// Per-row energies on the tape, `[n, 1]`. Inputs may be relaxed.
    pub fn energy_rows(&self, tape: &mut Tape, v: NodeId, h_layers: &[NodeId]) -> Result<NodeId> {
        self.check_layers(h_layers.len())?;
        let n = tape.value(v).rows();
        if tape.value(v).cols() != self.d_v() {
            return Err(Error::DimMismatch(format!(
                "visible width {} does not match model d_v {}",
                tape.value(v).cols(),
                self.d_v()
            )));
        }
        for (h, want) in h_layers.iter().zip(self.hidden_dims()) {
            if tape.value(*h).cols() != want {
                return Err(Error::DimMismatch(format!(
                    "hidden width {} does not match layer width {want}",
                    tape.value(*h).cols()
                )));
            }
        }
        let neg_e = match self {
            EnergyModel::Rbm(p) => {
                let h = h_layers[0];
                let wb = tape.leaf(&p.b)?;
                let wc = tape.leaf(&p.c)?;
                let ww = tape.leaf(&p.w)?;
                let vb = tape.matmul(v, wb)?;
                let hc = tape.matmul(h, wc)?;
                let vw = tape.matmul(v, ww)?;
                let coupling = tape.mul(vw, h)?;
                let cs = tape.row_sums(coupling)?;
                let t = tape.add(vb, hc)?;
                tape.add(t, cs)?
            }
            EnergyModel::Dbm(p) => {
                let (h1, h2) = (h_layers[0], h_layers[1]);
                let wb = tape.leaf(&p.b)?;
                let wc1 = tape.leaf(&p.c1)?;
                let wc2 = tape.leaf(&p.c2)?;
                let ww1 = tape.leaf(&p.w1)?;
                let ww2 = tape.leaf(&p.w2)?;
                let vb = tape.matmul(v, wb)?;
                let h1c = tape.matmul(h1, wc1)?;
                let h2c = tape.matmul(h2, wc2)?;
                let vw1 = tape.matmul(v, ww1)?;
                let lower = tape.mul(vw1, h1)?;
                let lower = tape.row_sums(lower)?;
                let h1w2 = tape.matmul(h1, ww2)?;
                let upper = tape.mul(h1w2, h2)?;
                let upper = tape.row_sums(upper)?;
                let t = tape.add(vb, h1c)?;
                let t = tape.add(t, h2c)?;
                let t = tape.add(t, lower)?;
                tape.add(t, upper)?
            }
            EnergyModel::Grbm(p) => {
                // -E = -||v - b||^2 / (2 sigma^2) + c.h + v W h / sigma
                let h = h_layers[0];
                let wb = tape.leaf(&p.b)?;
                let wc = tape.leaf(&p.c)?;
                let ww = tape.leaf(&p.w)?;
                let brow = tape.broadcast_row(wb, n)?;
                let diff = tape.sub(v, brow)?;
                let sq = tape.square(diff)?;
                let quad = tape.row_sums(sq)?;
                let quad = tape.scale(quad, -1.0 / (2.0 * p.sigma * p.sigma))?;
                let hc = tape.matmul(h, wc)?;
                let vw = tape.matmul(v, ww)?;
                let coupling = tape.mul(vw, h)?;
                let cs = tape.row_sums(coupling)?;
                let cs = tape.scale(cs, 1.0 / p.sigma)?;
                let t = tape.add(quad, hc)?;
                // quad already carries its sign; fold the rest in below
                let rest = tape.add(t, cs)?;
                // rest = -quad_term + c.h + coupling; energy = -rest
                rest
            }
        };
        let mut e = tape.neg(neg_e)?;
        let kappa = self.energy_offset();
        if kappa != 0.0 {
            let off = tape.constant(DenseArray::full(&[n, 1], kappa));
            e = tape.add(e, off)?;
        }
        Ok(e)
    }

    /// Per-row free energies on the tape, `[n, 1]`. RBM and GRBM only.
    pub fn free_energy_rows(&self, tape: &mut Tape, v: NodeId) -> Result<NodeId> {
        let n = tape.value(v).rows();
        let f = match self {
            EnergyModel::Rbm(p) => {
                let wb = tape.leaf(&p.b)?;
                let wc = tape.leaf(&p.c)?;
                let ww = tape.leaf(&p.w)?;
                let vb = tape.matmul(v, wb)?;
                let vw = tape.matmul(v, ww)?;
                let logits = {
                    let crow = tape.broadcast_row(wc, n)?;
                    tape.add(vw, crow)?
                };
                let sp = tape.softplus(logits)?;
                let sps = tape.row_sums(sp)?;
                let t = tape.add(vb, sps)?;
                tape.neg(t)?
            }
            EnergyModel::Grbm(p) => {
                let wb = tape.leaf(&p.b)?;
                let wc = tape.leaf(&p.c)?;
                let ww = tape.leaf(&p.w)?;
                let brow = tape.broadcast_row(wb, n)?;
                let diff = tape.sub(v, brow)?;
                let sq = tape.square(diff)?;
                let quad = tape.row_sums(sq)?;
                let quad = tape.scale(quad, 1.0 / (2.0 * p.sigma * p.sigma))?;
                let vw = tape.matmul(v, ww)?;
                let vw = tape.scale(vw, 1.0 / p.sigma)?;
                let logits = {
                    let crow = tape.broadcast_row(wc, n)?;
                    tape.add(vw, crow)?
                };
                let sp = tape.softplus(logits)?;
                let sps = tape.row_sums(sp)?;
                tape.sub(quad, sps)?
            }
            EnergyModel::Dbm(_) => {
                return Err(Error::Incompatible {
                    method: "closed-form free energy".into(),
                    model: "dbm".into(),
                })
            }
        };
        let kappa = self.energy_offset();
        if kappa != 0.0 {
            let off = tape.constant(DenseArray::full(&[n, 1], kappa));
            return tape.add(f, off);
        }
        Ok(f)
    }

    /// Raw free energies for RBM/GRBM batches.
    pub fn free_energy_batch(&self, v: &DenseArray) -> Result<Vec<f64>> {
        match self {
            EnergyModel::Rbm(p) => p.free_energy_batch(v),
            EnergyModel::Grbm(p) => p.free_energy_batch(v),
            EnergyModel::Dbm(_) => Err(Error::Incompatible {
                method: "closed-form free energy".into(),
                model: "dbm".into(),
            }),
        }
    }

    /// Raw per-row energies (value domain) for arbitrary layer values.
    pub fn energy_batch(&self, v: &DenseArray, h_layers: &[&DenseArray]) -> Result<Vec<f64>> {
        self.check_layers(h_layers.len())?;
        let n = v.rows();
        let mut out = vec![self.energy_offset(); n];
        match self {
            EnergyModel::Rbm(p) => {
                let vw = v.matmul(&p.w.value)?;
                let h = h_layers[0];
                for r in 0..n {
                    let vb: f64 = dotv(v.row(r), p.b.value.values());
                    let hc: f64 = dotv(h.row(r), p.c.value.values());
                    let cp: f64 = dotv(vw.row(r), h.row(r));
                    out[r] += -vb - hc - cp;
                }
            }
            EnergyModel::Dbm(p) => {
                let vw1 = v.matmul(&p.w1.value)?;
                let (h1, h2) = (h_layers[0], h_layers[1]);
                let h1w2 = h1.matmul(&p.w2.value)?;
                for r in 0..n {
                    let vb = dotv(v.row(r), p.b.value.values());
                    let h1c = dotv(h1.row(r), p.c1.value.values());
                    let h2c = dotv(h2.row(r), p.c2.value.values());
                    let low = dotv(vw1.row(r), h1.row(r));
                    let up = dotv(h1w2.row(r), h2.row(r));
                    out[r] += -vb - h1c - h2c - low - up;
                }
            }
            EnergyModel::Grbm(p) => {
                let vw = v.matmul(&p.w.value)?;
                let h = h_layers[0];
                let inv_two_s2 = 1.0 / (2.0 * p.sigma * p.sigma);
                for r in 0..n {
                    let quad: f64 = v
                        .row(r)
                        .iter()
                        .zip(p.b.value.values())
                        .map(|(&x, &bi)| (x - bi) * (x - bi))
                        .sum();
                    let hc = dotv(h.row(r), p.c.value.values());
                    let cp = dotv(vw.row(r), h.row(r)) / p.sigma;
                    out[r] += quad * inv_two_s2 - hc - cp;
                }
            }
        }
        Ok(out)
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Draws hard `{0, 1}` samples from a matrix of Bernoulli probabilities.
pub fn bernoulli_sample(probs: &DenseArray, rng: &mut Prng) -> DenseArray {
    probs.map_with(|p| rng.bernoulli(p))
}

/// Draws `mean + sigma * eps` with standard normal `eps`.
pub fn gaussian_sample(mean: &DenseArray, sigma: f64, rng: &mut Prng) -> DenseArray {
    mean.map_with(|m| m + sigma * rng.normal())
}

impl DenseArray {
    /// Elementwise map with a stateful closure (sampling helpers).
    pub fn map_with(&self, mut f: impl FnMut(f64) -> f64) -> DenseArray {
        DenseArray::new(
            self.shape().to_vec(),
            self.values().iter().map(|&x| f(x)).collect(),
        )
        .expect("finite map")
    }
}
