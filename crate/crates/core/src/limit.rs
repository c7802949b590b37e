//! Construction of the saddle-to-saddle limit process.
//!
//! Given the activation mask and the labels, the builder reproduces the whole
//! limit trajectory in closed form, without ever training a network: the
//! sequence of activated neurons, the jump times, the per-neuron norm
//! exponents, and the final interpolating parameters. Everything is expressed
//! in data coordinates (w vectors are coefficient vectors over data indices),
//! which coincides with ambient coordinates for the default identity basis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskMatrix;
use crate::network::DenseNetwork;

/// Relative tolerance under which two jump-selection ratios count as tied.
pub const ARGMAX_TIE_TOL: f64 = 1e-12;

/// Assumption checks on the mask and labels. `argmax_unique` stays `None`
/// until a build has actually run the recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub rows_nonzero: bool,
    pub cols_nonzero: bool,
    pub cols_distinct: bool,
    pub labels_nonzero: bool,
    pub argmax_unique: Option<bool>,
}

impl AssumptionReport {
    /// All five flags hold. A pending argmax flag counts as satisfied, since
    /// ties are excluded for almost every label vector.
    pub fn passed(&self) -> bool {
        self.rows_nonzero
            && self.cols_nonzero
            && self.cols_distinct
            && self.labels_nonzero
            && self.argmax_unique.unwrap_or(true)
    }
}

/// Check the mask/label assumptions: every row of A non-zero, every column
/// non-zero, columns pairwise distinct, labels non-zero.
pub fn check_assumptions(mask: &MaskMatrix, labels: &[f64]) -> AssumptionReport {
    let rows_nonzero = mask.entries.iter().all(|row| row.iter().any(|&b| b));
    let cols_nonzero = mask.active_sets.iter().all(|s| !s.is_empty());
    let mut cols_distinct = true;
    'outer: for j in 0..mask.m {
        for k in (j + 1)..mask.m {
            if mask.column(j) == mask.column(k) {
                cols_distinct = false;
                break 'outer;
            }
        }
    }
    let labels_nonzero = labels.iter().all(|&y| y != 0.0);
    AssumptionReport {
        rows_nonzero,
        cols_nonzero,
        cols_distinct,
        labels_nonzero,
        argmax_unique: None,
    }
}

/// One saddle of the limit process, recorded just before its jump (or at
/// termination, when `j_star` is absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub k: usize,
    /// Jump time t_k at which this saddle is reached (t_0 = 0).
    pub t: f64,
    /// Unfitted data indices, sorted.
    pub s_u: Vec<usize>,
    /// Unfitted neuron indices, sorted.
    pub n_u: Vec<usize>,
    /// Neuron selected to activate at the end of this stage.
    pub j_star: Option<usize>,
    /// Norm exponents ell_j(t_k), all in [-1, 0].
    pub ell: Vec<f64>,
    /// Defining index set of D_j at this stage (frozen for fitted neurons).
    pub d_sets: Vec<Vec<usize>>,
    /// |D_j| at this stage.
    pub d_norms: Vec<f64>,
}

/// Full output of the limit-process construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitProcess {
    pub n: usize,
    pub m: usize,
    pub labels: Vec<f64>,
    pub signs: Vec<f64>,
    /// Stage records for k = 0..=p (the terminal stage has no `j_star`).
    pub stages: Vec<StageRecord>,
    /// Finite jump times t_0 = 0, t_1, ..., t_p. The convention t_{p+1} = +inf
    /// is implicit: the terminal stage extends to infinity.
    pub jump_times: Vec<f64>,
    /// Final parameters, in data coordinates (d = n).
    pub final_params: DenseNetwork,
    pub assumption_report: AssumptionReport,
    /// True when the recursion exited with unfitted data left.
    pub non_interpolating: bool,
}

/// Run the jump recursion.
///
/// Per stage: D_j is the label-weighted sum of the unfitted data the neuron is
/// active on (frozen once the neuron has fitted); the activated neuron
/// maximizes ell_j / |D_j| over unfitted neurons, with the ratio taken as
/// -infinity when |D_j| = 0; the jump time advances by -ell / |D|; exponents
/// grow linearly at rate |D_j| and are capped at 0.
///
/// In strict mode a zero label or a tie in the argmax (relative 1e-12 on the
/// ratio) is an error. In lenient mode ties break toward the lowest neuron
/// index and are recorded in the assumption report.
pub fn build(mask: &MaskMatrix, labels: &[f64], strict: bool) -> Result<LimitProcess> {
    assert_eq!(mask.n, labels.len());
    if let Some(i) = labels.iter().position(|y| !y.is_finite()) {
        return Err(Error::DimensionMismatch(format!("label y[{i}] not finite")));
    }
    if strict {
        if let Some(index) = labels.iter().position(|&y| y == 0.0) {
            return Err(Error::ZeroLabel { index });
        }
    }
    let n = mask.n;
    let m = mask.m;
    let nf = n as f64;

    let mut report = check_assumptions(mask, labels);
    let mut argmax_unique = true;

    let mut unfitted_data = vec![true; n];
    let mut unfitted_neuron = vec![true; m];
    let mut ell = vec![-1.0; m];
    let mut t = 0.0;
    let mut d_sets: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut d_norms = vec![0.0; m];
    let mut stages = Vec::new();
    let mut jump_times = vec![0.0];

    loop {
        // Refresh D for unfitted neurons; fitted ones keep their frozen value.
        for j in 0..m {
            if unfitted_neuron[j] {
                let set: Vec<usize> = mask.active_sets[j]
                    .iter()
                    .copied()
                    .filter(|&i| unfitted_data[i])
                    .collect();
                let sumsq: f64 = set.iter().map(|&i| labels[i] * labels[i]).sum();
                d_norms[j] = sumsq.sqrt() / nf;
                d_sets[j] = set;
            }
        }

        // Select the next neuron: argmax of ell_j / |D_j| over unfitted
        // neurons, ratio = -inf when |D_j| = 0.
        let mut best: Option<(usize, f64)> = None;
        let mut runner_up: Option<f64> = None;
        for j in 0..m {
            if !unfitted_neuron[j] || d_norms[j] == 0.0 {
                continue;
            }
            let ratio = ell[j] / d_norms[j];
            match best {
                None => best = Some((j, ratio)),
                Some((_, best_ratio)) if ratio > best_ratio => {
                    runner_up = Some(best_ratio);
                    best = Some((j, ratio));
                }
                Some(_) => {
                    runner_up = Some(runner_up.map_or(ratio, |r| r.max(ratio)));
                }
            }
        }

        let k = stages.len();
        let s_u: Vec<usize> = (0..n).filter(|&i| unfitted_data[i]).collect();
        let n_u: Vec<usize> = (0..m).filter(|&j| unfitted_neuron[j]).collect();

        let Some((j_star, best_ratio)) = best else {
            // No unfitted neuron can still make progress: terminal stage.
            stages.push(StageRecord {
                k,
                t,
                s_u,
                n_u,
                j_star: None,
                ell: ell.clone(),
                d_sets: d_sets.clone(),
                d_norms: d_norms.clone(),
            });
            break;
        };

        if let Some(second) = runner_up {
            let tol = ARGMAX_TIE_TOL * best_ratio.abs().max(second.abs());
            if (best_ratio - second).abs() <= tol {
                if strict {
                    let other = (0..m)
                        .find(|&j| {
                            j != j_star
                                && unfitted_neuron[j]
                                && d_norms[j] > 0.0
                                && (ell[j] / d_norms[j] - best_ratio).abs() <= tol
                        })
                        .unwrap_or(j_star);
                    return Err(Error::AmbiguousArgmax {
                        stage: k,
                        a: j_star.min(other),
                        b: j_star.max(other),
                        ratio: best_ratio,
                    });
                }
                argmax_unique = false;
            }
        }

        stages.push(StageRecord {
            k,
            t,
            s_u,
            n_u,
            j_star: Some(j_star),
            ell: ell.clone(),
            d_sets: d_sets.clone(),
            d_norms: d_norms.clone(),
        });

        let t_next = t - ell[j_star] / d_norms[j_star];
        for j in 0..m {
            ell[j] = (ell[j] + (t_next - t) * d_norms[j]).min(0.0);
        }
        // t_next is defined as the time this exponent reaches zero; pin it
        // there rather than keeping the rounding residue.
        ell[j_star] = 0.0;
        for &i in &d_sets[j_star] {
            unfitted_data[i] = false;
        }
        unfitted_neuron[j_star] = false;
        t = t_next;
        jump_times.push(t);
    }

    report.argmax_unique = Some(argmax_unique);
    let terminal = stages.last().expect("at least the terminal stage");
    let non_interpolating = !terminal.s_u.is_empty();

    // Final parameters: fitted neurons at their closed-form values, everyone
    // else at zero. In data coordinates (n D_j)[i] = y_i on the defining set.
    let mut final_params = DenseNetwork::zeros(m, n);
    for j in 0..m {
        if terminal.n_u.contains(&j) {
            continue;
        }
        let n_d_norm = nf * terminal.d_norms[j];
        if n_d_norm == 0.0 {
            continue;
        }
        let scale = n_d_norm.sqrt();
        final_params.a[j] = mask.signs[j] * scale;
        for &i in &terminal.d_sets[j] {
            final_params.w[j][i] = mask.signs[j] * labels[i] / scale;
        }
    }

    Ok(LimitProcess {
        n,
        m,
        labels: labels.to_vec(),
        signs: mask.signs.clone(),
        stages,
        jump_times,
        final_params,
        assumption_report: report,
        non_interpolating,
    })
}

impl LimitProcess {
    /// Number of jumps p.
    pub fn stage_count(&self) -> usize {
        self.stages.len() - 1
    }

    /// Index of the stage whose interval [t_k, t_{k+1}) contains t.
    pub fn stage_at(&self, t: f64) -> usize {
        assert!(t >= 0.0, "limit process is defined for t >= 0");
        match self
            .jump_times
            .iter()
            .rposition(|&tk| tk <= t)
        {
            Some(k) => k.min(self.stages.len() - 1),
            None => 0,
        }
    }

    /// The piecewise-constant process theta(t), in data coordinates.
    pub fn theta_at(&self, t: f64) -> DenseNetwork {
        let stage = &self.stages[self.stage_at(t)];
        let nf = self.n as f64;
        let mut net = DenseNetwork::zeros(self.m, self.n);
        for j in 0..self.m {
            if stage.n_u.contains(&j) {
                continue;
            }
            let n_d_norm = nf * stage.d_norms[j];
            if n_d_norm == 0.0 {
                continue;
            }
            let scale = n_d_norm.sqrt();
            net.a[j] = self.signs[j] * scale;
            for &i in &stage.d_sets[j] {
                net.w[j][i] = self.signs[j] * self.labels[i] / scale;
            }
        }
        net
    }

    /// The piecewise-affine norm exponent ell_j(t), capped at 0.
    pub fn exponent_at(&self, j: usize, t: f64) -> f64 {
        let stage = &self.stages[self.stage_at(t)];
        (stage.ell[j] + (t - stage.t) * stage.d_norms[j]).min(0.0)
    }

    /// Half squared norm of the final parameters: sum_j n * |D_j^(p)|.
    pub fn pred_sq_norm(&self) -> f64 {
        let terminal = self.stages.last().unwrap();
        let nf = self.n as f64;
        terminal.d_norms.iter().map(|d| nf * d).sum()
    }

    /// The newly fitted data of stage k: S_U^(k) ∩ S_{j*}.
    pub fn fitted_at_stage(&self, k: usize) -> Vec<usize> {
        let stage = &self.stages[k];
        match stage.j_star {
            Some(j) => stage.d_sets[j].clone(),
            None => Vec::new(),
        }
    }

    /// The sequence of activated neurons (j*^(0), ..., j*^(p-1)).
    pub fn activation_order(&self) -> Vec<usize> {
        self.stages.iter().filter_map(|s| s.j_star).collect()
    }
}

/// Half squared norm of the minimum-norm interpolator:
/// sqrt(sum over positive labels of y^2) + sqrt(sum over negative labels of y^2).
pub fn opt_sq_norm(labels: &[f64]) -> f64 {
    let pos: f64 = labels.iter().filter(|&&y| y > 0.0).map(|y| y * y).sum();
    let neg: f64 = labels.iter().filter(|&&y| y < 0.0).map(|y| y * y).sum();
    pos.sqrt() + neg.sqrt()
}

/// High-probability upper bound on the learned half squared norm:
/// 5 (sqrt(n_+) + sqrt(n_-)) max_i |y_i|.
pub fn bias_bound(labels: &[f64]) -> f64 {
    let n_plus = labels.iter().filter(|&&y| y > 0.0).count() as f64;
    let n_minus = labels.iter().filter(|&&y| y < 0.0).count() as f64;
    let y_max = labels.iter().fold(0.0f64, |acc, y| acc.max(y.abs()));
    5.0 * (n_plus.sqrt() + n_minus.sqrt()) * y_max
}
