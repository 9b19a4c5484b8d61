//! Central-finite-difference verification of tape gradients.

use crate::array::DenseArray;
use crate::error::{Error, Result};
use crate::tape::{NodeId, ParamBlock, Tape};

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Block name and flat entry index of the worst discrepancy.
    pub worst: Option<(String, usize)>,
    pub passed: bool,
    /// Set when a perturbed evaluation failed outright.
    pub failure: Option<String>,
}

/// Compares backward-mode gradients of `build` against central finite
/// differences, entrywise over every block in `params`.
///
/// `build` receives a fresh tape plus one leaf/constant node per block, in
/// order, and must return a scalar root. Relative error uses the
/// `max(|a|, |b|, 1e-8)` denominator.
pub fn grad_check<F>(
    build: F,
    params: &[ParamBlock],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if step <= 0.0 || tol <= 0.0 {
        return Err(Error::Domain {
            op: "grad_check",
            detail: format!("step ({step}) and tol ({tol}) must be positive"),
        });
    }

    let eval = |blocks: &[ParamBlock]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = blocks.iter().map(|b| tape.leaf(b)).collect::<Result<_>>()?;
        let root = build(&mut tape, &ids)?;
        let v = tape.value(root);
        if !v.is_scalar() {
            return Err(Error::NonScalarRoot {
                shape: v.shape().to_vec(),
            });
        }
        Ok(v.item())
    };

    // Analytic gradients from one backward pass.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|b| tape.leaf(b)).collect::<Result<_>>()?;
    let root = build(&mut tape, &ids)?;
    if !tape.value(root).is_scalar() {
        return Err(Error::NonScalarRoot {
            shape: tape.value(root).shape().to_vec(),
        });
    }
    let grads = tape.backward(root)?;

    let mut max_rel_err = 0.0_f64;
    let mut worst = None;
    for (bi, block) in params.iter().enumerate() {
        let analytic = &grads[block.name()];
        for ei in 0..block.value.len() {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut blocks = params.to_vec();
                let mut vals = blocks[bi].value.values().to_vec();
                vals[ei] += delta;
                blocks[bi].value = DenseArray::new(block.value.shape().to_vec(), vals)?;
                eval(&blocks)
            };
            let (up, dn) = match (perturbed(step), perturbed(-step)) {
                (Ok(u), Ok(d)) => (u, d),
                (Err(e), _) | (_, Err(e)) => {
                    return Ok(GradCheckReport {
                        max_rel_err: f64::INFINITY,
                        worst: Some((block.name().to_string(), ei)),
                        passed: false,
                        failure: Some(format!(
                            "non-finite evaluation at {}[{}]: {e}",
                            block.name(),
                            ei
                        )),
                    })
                }
            };
            let fd = (up - dn) / (2.0 * step);
            let a = analytic.values()[ei];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some((block.name().to_string(), ei));
            }
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        worst,
        passed: max_rel_err < tol,
        failure: None,
    })
}
