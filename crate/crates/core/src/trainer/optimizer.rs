//! AdamW with decoupled weight decay and optional 8-bit moment storage.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::quantize::{dequantize_state, quantize_state, QuantizedStateVector};

/// Adam moment hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment storage precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMode {
    Full,
    /// Moments are kept as blockwise 8-bit vectors and round-trip through
    /// dequantize/update/requantize on every step.
    Quantized { block_size: usize },
}

enum Slot {
    Full {
        m: Vec<f64>,
        v: Vec<f64>,
    },
    Quantized {
        m: QuantizedStateVector,
        v: QuantizedStateVector,
        block_size: usize,
    },
}

/// Per-tensor first/second moments plus the shared step counter.
pub struct OptimizerState {
    hyper: AdamHyper,
    step: u64,
    slots: Vec<Slot>,
}

impl OptimizerState {
    /// One slot per trainable tensor, all moments starting at zero.
    pub fn new(tensor_lens: &[usize], hyper: AdamHyper, mode: MomentMode) -> Self {
        let slots = tensor_lens
            .iter()
            .map(|&len| match mode {
                MomentMode::Full => Slot::Full {
                    m: vec![0.0; len],
                    v: vec![0.0; len],
                },
                MomentMode::Quantized { block_size } => Slot::Quantized {
                    m: quantize_state(&vec![0.0; len], block_size)
                        .expect("zero vector always quantizes"),
                    v: quantize_state(&vec![0.0; len], block_size)
                        .expect("zero vector always quantizes"),
                    block_size,
                },
            })
            .collect();
        OptimizerState {
            hyper,
            step: 0,
            slots,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn hyper(&self) -> AdamHyper {
        self.hyper
    }

    /// One AdamW update across all tensors.
    ///
    /// Decoupled weight decay shrinks parameters by `lr * weight_decay`
    /// before the Adam step; moments are bias-corrected by the shared step
    /// counter. Rejects non-finite gradients.
    pub fn apply_step(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        lr: f64,
        weight_decay: f64,
    ) -> Result<(), TrainError> {
        if params.len() != self.slots.len() || grads.len() != self.slots.len() {
            return Err(TrainError::ShapeMismatch(format!(
                "{} parameter tensors, {} gradient tensors, {} slots",
                params.len(),
                grads.len(),
                self.slots.len()
            )));
        }
        for ((p, g), slot) in params.iter().zip(grads).zip(&self.slots) {
            let slot_len = match slot {
                Slot::Full { m, .. } => m.len(),
                Slot::Quantized { m, .. } => m.len(),
            };
            if p.len() != g.len() || p.len() != slot_len {
                return Err(TrainError::ShapeMismatch(format!(
                    "parameter length {}, gradient length {}, moment length {slot_len}",
                    p.len(),
                    g.len()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(TrainError::DivergentStep);
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for ((slot, params), grads) in self.slots.iter_mut().zip(params).zip(grads) {
            let (mut m, mut v, requantize) = match slot {
                Slot::Full { m, v } => (std::mem::take(m), std::mem::take(v), None),
                Slot::Quantized { m, v, block_size } => {
                    (dequantize_state(m), dequantize_state(v), Some(*block_size))
                }
            };

            for i in 0..params.len() {
                let g = grads[i];
                if weight_decay != 0.0 {
                    params[i] -= lr * weight_decay * params[i];
                }
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }

            match (slot, requantize) {
                (Slot::Full { m: sm, v: sv }, None) => {
                    *sm = m;
                    *sv = v;
                }
                (Slot::Quantized { m: qm, v: qv, .. }, Some(block)) => {
                    *qm = quantize_state(&m, block)?;
                    *qv = quantize_state(&v, block)?;
                }
                _ => unreachable!(),
            }
        }
        Ok(())
    }
}
