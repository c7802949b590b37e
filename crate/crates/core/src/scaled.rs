//! Log-domain network representation for training at extreme initialization
//! scales.
//!
//! Each neuron stores mantissas (v, b) kept near 1 and a shared log-scale c,
//! representing w_j = e^c v and a_j = s e^c b. Gradient descent on (w, a)
//! translates to mantissa updates that do not involve e^c at all — the common
//! factor cancels — so the dynamics are exact even when e^c underflows. Only
//! the network output needs the absolute scale, and a neuron whose 2c is
//! below the representable range contributes exactly 0 there.

use serde::{Deserialize, Serialize};

use crate::dataset::{dot, norm, Basis, OrthonormalDataset};
use crate::error::{Error, Result};
use crate::init::InitDraw;
use crate::network::DenseNetwork;

/// ln(f64::MIN_POSITIVE): below this log-scale, e^x is not a normal float.
pub const LN_MIN_NORMAL: f64 = -708.396_418_532_264_1;

/// Mantissas are renormalized back toward 1 when they leave [1/2, 2].
pub const RENORM_BAND: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledNeuron {
    /// Hidden-weight mantissa.
    pub v: Vec<f64>,
    /// Output-weight magnitude mantissa, kept positive.
    pub b: f64,
    /// Shared natural-log scale.
    pub c: f64,
    /// Output sign, +1.0 or -1.0, constant during training.
    pub sign: f64,
}

impl ScaledNeuron {
    /// sign * e^{2c} * b, the factor multiplying max(0, v^T x) in the network
    /// output. Exactly 0 once 2c is below the normal-float range.
    pub fn output_scale(&self) -> f64 {
        let t = 2.0 * self.c;
        if t < LN_MIN_NORMAL {
            0.0
        } else {
            self.sign * t.exp() * self.b
        }
    }

    /// ln |w_j| = c + ln |v|.
    pub fn log_w_norm(&self) -> f64 {
        self.c + norm(&self.v).ln()
    }

    /// ln |a_j| = c + ln b.
    pub fn log_a_abs(&self) -> f64 {
        self.c + self.b.ln()
    }

    /// Relative balancedness defect |a^2 - |w|^2| / (a^2 + |w|^2), computed in
    /// mantissa space where it is well defined at any scale.
    pub fn balance_defect(&self) -> f64 {
        let b2 = self.b * self.b;
        let v2 = dot(&self.v, &self.v);
        (b2 - v2).abs() / (b2 + v2)
    }

    pub fn needs_renorm(&self) -> bool {
        let vn = norm(&self.v);
        !(RENORM_BAND.0..=RENORM_BAND.1).contains(&vn)
            || !(RENORM_BAND.0..=RENORM_BAND.1).contains(&self.b)
    }

    /// Rescale mantissas by r = sqrt(|v| b), folding r into the log-scale.
    /// The represented (w, a) are unchanged in real arithmetic; afterwards
    /// |v| b = 1 and both mantissas sit inside the band whenever the ratio
    /// |v| / b was within [1/4, 4].
    pub fn renormalize(&mut self, index: usize) -> Result<()> {
        let vn = norm(&self.v);
        if vn <= 0.0 || self.b <= 0.0 || !vn.is_finite() || !self.b.is_finite() {
            return Err(Error::CollapsedNeuron {
                index,
                v_norm: vn,
                b: self.b,
            });
        }
        let r = (vn * self.b).sqrt();
        self.c += r.ln();
        for x in self.v.iter_mut() {
            *x /= r;
        }
        self.b /= r;
        Ok(())
    }
}

/// A full log-domain network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledNetwork {
    pub neurons: Vec<ScaledNeuron>,
}

/// Snapshot of one full-batch evaluation: outputs, residuals, loss, and (for
/// explicit bases) the preactivation mantissas reused by the step.
pub struct EpochEval {
    pub outputs: Vec<f64>,
    pub residuals: Vec<f64>,
    pub loss: f64,
    /// v_j^T x_i per neuron, only kept for explicit bases.
    pub preacts: Option<Vec<Vec<f64>>>,
}

impl ScaledNetwork {
    pub fn from_init(init: &InitDraw) -> Self {
        let neurons = init
            .directions
            .iter()
            .zip(&init.signs)
            .map(|(u, &s)| ScaledNeuron {
                v: u.clone(),
                b: 1.0,
                c: init.alpha_log,
                sign: s,
            })
            .collect();
        Self { neurons }
    }

    pub fn m(&self) -> usize {
        self.neurons.len()
    }

    /// Full-batch outputs, residuals and loss.
    pub fn evaluate(&self, data: &OrthonormalDataset) -> EpochEval {
        let n = data.n();
        let mut outputs = vec![0.0; n];
        let preacts = match data.basis() {
            Basis::Identity => {
                for neuron in &self.neurons {
                    let scale = neuron.output_scale();
                    if scale != 0.0 {
                        for (h, &z) in outputs.iter_mut().zip(&neuron.v) {
                            if z > 0.0 {
                                *h += scale * z;
                            }
                        }
                    }
                }
                None
            }
            Basis::Explicit(_) => {
                let z: Vec<Vec<f64>> = self
                    .neurons
                    .iter()
                    .map(|nr| (0..n).map(|i| data.dot_input(i, &nr.v)).collect())
                    .collect();
                for (neuron, zs) in self.neurons.iter().zip(&z) {
                    let scale = neuron.output_scale();
                    if scale != 0.0 {
                        for (h, &zi) in outputs.iter_mut().zip(zs) {
                            if zi > 0.0 {
                                *h += scale * zi;
                            }
                        }
                    }
                }
                Some(z)
            }
        };
        let residuals: Vec<f64> = outputs
            .iter()
            .zip(data.labels())
            .map(|(h, y)| h - y)
            .collect();
        let loss = residuals.iter().map(|r| r * r).sum::<f64>() / (2.0 * n as f64);
        EpochEval {
            outputs,
            residuals,
            loss,
            preacts,
        }
    }

    /// Apply one full-batch gradient step with the given evaluation snapshot.
    /// Mantissa updates: dv = lr s b fD, db = lr s (fD . v), where
    /// fD_j = -(1/n) sum over active i of r_i x_i. Renormalizes any neuron
    /// whose mantissas leave the band.
    pub fn apply_step(
        &mut self,
        data: &OrthonormalDataset,
        lr: f64,
        eval: &EpochEval,
        epoch: u64,
    ) -> Result<()> {
        let n = data.n();
        let nf = n as f64;
        let r = &eval.residuals;
        for (j, neuron) in self.neurons.iter_mut().enumerate() {
            let coeff = lr * neuron.sign;
            match data.basis() {
                Basis::Identity => {
                    let mut g = 0.0;
                    for (i, &ri) in r.iter().enumerate() {
                        if neuron.v[i] > 0.0 {
                            g += (-ri / nf) * neuron.v[i];
                        }
                    }
                    let bv = coeff * neuron.b;
                    for (i, &ri) in r.iter().enumerate() {
                        if neuron.v[i] > 0.0 {
                            neuron.v[i] += bv * (-ri / nf);
                        }
                    }
                    neuron.b += coeff * g;
                }
                Basis::Explicit(_) => {
                    let z = &eval.preacts.as_ref().expect("explicit basis keeps preacts")[j];
                    let d = neuron.v.len();
                    let mut fd = vec![0.0; d];
                    for (i, &ri) in r.iter().enumerate() {
                        if z[i] > 0.0 {
                            data.add_input(i, -ri / nf, &mut fd);
                        }
                    }
                    let g = dot(&fd, &neuron.v);
                    let bv = coeff * neuron.b;
                    for (vx, fx) in neuron.v.iter_mut().zip(&fd) {
                        *vx += bv * fx;
                    }
                    neuron.b += coeff * g;
                }
            }
            let vn2 = dot(&neuron.v, &neuron.v);
            if !vn2.is_finite() || !neuron.b.is_finite() {
                return Err(Error::NonFinite { index: j, epoch });
            }
            if neuron.needs_renorm() {
                neuron.renormalize(j)?;
            }
        }
        Ok(())
    }

    /// Active sets from the scale-free sign of the preactivation mantissa.
    pub fn active_sets(&self, data: &OrthonormalDataset) -> Vec<Vec<usize>> {
        self.neurons
            .iter()
            .map(|nr| {
                (0..data.n())
                    .filter(|&i| data.dot_input(i, &nr.v) > 0.0)
                    .collect()
            })
            .collect()
    }

    /// Half squared parameter norm of the represented network. Neurons whose
    /// scale underflows contribute 0, matching their represented value.
    pub fn half_sq_norm(&self) -> f64 {
        self.neurons
            .iter()
            .map(|nr| {
                let t = 2.0 * nr.c;
                if t < LN_MIN_NORMAL {
                    0.0
                } else {
                    0.5 * t.exp() * (nr.b * nr.b + dot(&nr.v, &nr.v))
                }
            })
            .sum()
    }

    /// Materialize the represented network (underflowed neurons become zero).
    pub fn to_dense(&self) -> DenseNetwork {
        let a = self
            .neurons
            .iter()
            .map(|nr| {
                if nr.c < LN_MIN_NORMAL {
                    0.0
                } else {
                    nr.sign * nr.c.exp() * nr.b
                }
            })
            .collect();
        let w = self
            .neurons
            .iter()
            .map(|nr| {
                if nr.c < LN_MIN_NORMAL {
                    vec![0.0; nr.v.len()]
                } else {
                    let s = nr.c.exp();
                    nr.v.iter().map(|x| s * x).collect()
                }
            })
            .collect();
        DenseNetwork { a, w }
    }
}

/// One full-batch gradient-descent step as a pure function (the training loop
/// uses the in-place [`ScaledNetwork::apply_step`] with a shared evaluation).
pub fn gd_step(
    state: &ScaledNetwork,
    data: &OrthonormalDataset,
    lr: f64,
) -> Result<ScaledNetwork> {
    let mut next = state.clone();
    let eval = next.evaluate(data);
    next.apply_step(data, lr, &eval, 0)?;
    Ok(next)
}
