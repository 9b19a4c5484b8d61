//! Bias-corrected Adam over named parameter blocks.

use std::collections::BTreeMap;

use crate::array::DenseArray;
use crate::error::{Error, Result};
use crate::tape::{GradMap, ParamBlock};

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First/second moments per block plus the shared step counter. A
/// non-finite gradient skips the whole step and bumps `skipped`.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub t: u64,
    pub skipped: u64,
    slots: BTreeMap<String, (DenseArray, DenseArray)>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn moments(&self) -> impl Iterator<Item = (&String, &(DenseArray, DenseArray))> {
        self.slots.iter()
    }

    pub fn restore_slot(&mut self, name: String, m: DenseArray, v: DenseArray) {
        self.slots.insert(name, (m, v));
    }

    /// One update over the given blocks. `direction = 1.0` descends,
    /// `-1.0` ascends. Every block must have a gradient entry.
    pub fn step(
        &mut self,
        blocks: &mut [&mut ParamBlock],
        grads: &GradMap,
        hyper: &AdamHyper,
        direction: f64,
    ) -> Result<()> {
        for block in blocks.iter() {
            let g = grads.get(block.name()).ok_or_else(|| {
                Error::config("adam", format!("missing gradient for {}", block.name()))
            })?;
            if !g.values().iter().all(|x| x.is_finite()) {
                self.skipped += 1;
                return Ok(());
            }
        }
        self.t += 1;
        let bc1 = 1.0 - hyper.beta1.powi(self.t as i32);
        let bc2 = 1.0 - hyper.beta2.powi(self.t as i32);
        for block in blocks.iter_mut() {
            let g = &grads[block.name()];
            let (m, v) = self
                .slots
                .entry(block.name().to_string())
                .or_insert_with(|| {
                    (
                        DenseArray::zeros(block.value.shape()),
                        DenseArray::zeros(block.value.shape()),
                    )
                });
            let mut new_vals = block.value.values().to_vec();
            for (i, &gi) in g.values().iter().enumerate() {
                let gi = direction * gi;
                let mi = hyper.beta1 * m.values()[i] + (1.0 - hyper.beta1) * gi;
                let vi = hyper.beta2 * v.values()[i] + (1.0 - hyper.beta2) * gi * gi;
                m.values_mut()[i] = mi;
                v.values_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                new_vals[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
            }
            block.value = DenseArray::new(block.value.shape().to_vec(), new_vals)?;
        }
        Ok(())
    }
}
