//! Quantitative comparison of trained trajectories against the limit process:
//! jump-time matching, exponent-slope verification, alignment, norm
//! accounting, and log-log scaling fits.

use serde::{Deserialize, Serialize};

use crate::dataset::{dot, norm};
use crate::error::{Error, Result};
use crate::limit::LimitProcess;
use crate::network::DenseNetwork;
use crate::trainer::{accelerated_time_f, Trajectory};

/// Fit events within this relative epoch window collapse into one jump.
/// Jumps are separated by order-one accelerated time while a single jump's
/// events span a vanishing fraction of it, so 1% sits safely between.
pub const CLUSTER_REL_WINDOW: f64 = 0.01;

/// Fraction of an inter-jump window trimmed from each end before slope fits,
/// keeping the realignment transients out of the regression.
pub const SLOPE_MARGIN: f64 = 0.2;

/// Minimum number of interior samples for a slope fit.
pub const MIN_SLOPE_SAMPLES: usize = 10;

/// A group of fit events attributed to a single jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpCluster {
    /// Representative epoch (mean of the clustered event epochs).
    pub epoch: f64,
    /// Event epochs in the cluster, ascending.
    pub epochs: Vec<u64>,
    /// Data indices fitted at this jump, sorted.
    pub data: Vec<usize>,
}

/// Cluster the trajectory's fit events into jumps: events whose epochs lie
/// within 1% (relative to the cluster's first epoch) belong to one jump.
/// Errors when the number of clusters differs from the expected stage count.
pub fn detect_jumps(traj: &Trajectory, expected: usize) -> Result<Vec<JumpCluster>> {
    let mut events: Vec<(u64, usize)> = traj
        .fit_events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.map(|epoch| (epoch, i)))
        .collect();
    events.sort_unstable();

    let mut clusters: Vec<JumpCluster> = Vec::new();
    for (epoch, datum) in events {
        let joins = clusters.last().is_some_and(|c| {
            epoch as f64 <= c.epochs[0] as f64 * (1.0 + CLUSTER_REL_WINDOW)
        });
        if joins {
            let c = clusters.last_mut().unwrap();
            c.epochs.push(epoch);
            c.data.push(datum);
        } else {
            clusters.push(JumpCluster {
                epoch: 0.0,
                epochs: vec![epoch],
                data: vec![datum],
            });
        }
    }
    for c in clusters.iter_mut() {
        c.epoch = c.epochs.iter().map(|&e| e as f64).sum::<f64>() / c.epochs.len() as f64;
        c.data.sort_unstable();
    }
    if clusters.len() != expected {
        return Err(Error::ClusterMismatch {
            found: clusters.len(),
            expected,
        });
    }
    Ok(clusters)
}

/// One predicted-vs-observed jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMatch {
    pub stage: usize,
    pub predicted_t: f64,
    pub observed_epoch: f64,
    pub observed_t: f64,
    pub rel_error: f64,
    /// Whether the clustered data indices equal the stage's fitted set.
    pub sets_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpComparison {
    pub jumps: Vec<JumpMatch>,
    pub max_rel_error: f64,
    pub all_sets_match: bool,
}

/// Match clustered fit events against the limit process's jump times,
/// converting epochs to accelerated time.
pub fn compare_jumps(
    traj: &Trajectory,
    lp: &LimitProcess,
    lr: f64,
    alpha_log: f64,
) -> Result<JumpComparison> {
    let clusters = detect_jumps(traj, lp.stage_count())?;
    let mut jumps = Vec::with_capacity(clusters.len());
    for (k, cluster) in clusters.iter().enumerate() {
        let predicted_t = lp.jump_times[k + 1];
        let observed_t = accelerated_time_f(cluster.epoch, lr, alpha_log)?;
        let rel_error = (observed_t - predicted_t).abs() / predicted_t;
        let sets_match = cluster.data == lp.fitted_at_stage(k);
        jumps.push(JumpMatch {
            stage: k,
            predicted_t,
            observed_epoch: cluster.epoch,
            observed_t,
            rel_error,
            sets_match,
        });
    }
    let max_rel_error = jumps.iter().map(|j| j.rel_error).fold(0.0, f64::max);
    let all_sets_match = jumps.iter().all(|j| j.sets_match);
    Ok(JumpComparison {
        jumps,
        max_rel_error,
        all_sets_match,
    })
}

/// One fitted slope of ln|w_j| against epochs within an inter-jump window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub neuron: usize,
    pub stage: usize,
    pub observed: f64,
    /// lr * |D_j^(k)| for unfitted neurons, 0 for already-fitted ones.
    pub predicted: f64,
    /// |observed - predicted| / predicted, absent when the prediction is 0.
    pub rel_error: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub rows: Vec<SlopeRow>,
    /// Stages whose windows had too few interior samples and were skipped.
    pub skipped_stages: Vec<usize>,
}

/// OLS slopes of ln|w_j| vs epoch over the interior 60% of every inter-jump
/// window, compared against the predicted lr * |D_j^(k)|. Windows with fewer
/// than 10 interior samples are skipped; erroring only when none remain.
pub fn segment_slopes(traj: &Trajectory, lp: &LimitProcess, lr: f64) -> Result<SlopeReport> {
    let clusters = detect_jumps(traj, lp.stage_count())?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for k in 0..lp.stage_count() {
        let lo = if k == 0 { 0.0 } else { clusters[k - 1].epoch };
        let hi = clusters[k].epoch;
        let span = hi - lo;
        let (a, b) = (lo + SLOPE_MARGIN * span, hi - SLOPE_MARGIN * span);
        let window: Vec<&crate::trainer::Sample> = traj
            .samples
            .iter()
            .filter(|s| (s.epoch as f64) >= a && (s.epoch as f64) <= b)
            .collect();
        if window.len() < MIN_SLOPE_SAMPLES {
            skipped.push(k);
            continue;
        }
        let xs: Vec<f64> = window.iter().map(|s| s.epoch as f64).collect();
        let stage = &lp.stages[k];
        for j in 0..lp.m {
            let ys: Vec<f64> = window.iter().map(|s| s.log_w_norms[j]).collect();
            let (slope, _, _) = ols(&xs, &ys);
            let predicted = if stage.n_u.contains(&j) {
                lr * stage.d_norms[j]
            } else {
                0.0
            };
            let rel_error = (predicted > 0.0).then(|| (slope - predicted).abs() / predicted);
            rows.push(SlopeRow {
                neuron: j,
                stage: k,
                observed: slope,
                predicted,
                rel_error,
                samples: window.len(),
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::TooFewSamples {
            min: MIN_SLOPE_SAMPLES,
        });
    }
    Ok(SlopeReport {
        rows,
        skipped_stages: skipped,
    })
}

/// Cosines between the hidden-weight directions and the stage-k target
/// directions D_j^(k). `None` where either vector vanishes. The network is
/// expected in data coordinates (identity basis).
pub fn alignment(net: &DenseNetwork, lp: &LimitProcess, stage: usize) -> Vec<Option<f64>> {
    let dirs: Vec<Vec<f64>> = net
        .w
        .iter()
        .map(|w| {
            let nrm = norm(w);
            if nrm == 0.0 {
                Vec::new()
            } else {
                w.iter().map(|x| x / nrm).collect()
            }
        })
        .collect();
    alignment_directions(&dirs, lp, stage)
}

/// Same as [`alignment`] for pre-normalized directions (empty slice = dead).
pub fn alignment_directions(
    dirs: &[Vec<f64>],
    lp: &LimitProcess,
    stage: usize,
) -> Vec<Option<f64>> {
    let rec = &lp.stages[stage];
    let nf = lp.n as f64;
    dirs.iter()
        .enumerate()
        .map(|(j, dir)| {
            if rec.d_norms[j] == 0.0 || dir.is_empty() {
                return None;
            }
            let mut d = vec![0.0; lp.n];
            for &i in &rec.d_sets[j] {
                d[i] = lp.labels[i] / nf;
            }
            Some(dot(dir, &d) / rec.d_norms[j])
        })
        .collect()
}

/// Half squared parameter norm of a network.
pub fn network_sq_norm(net: &DenseNetwork) -> f64 {
    net.half_sq_norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// OLS of ln(value) against ln(n) for scaling-law checks.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::DegenerateFit("values must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let x_var = variance(&xs);
    if x_var == 0.0 {
        return Err(Error::DegenerateFit("all x values coincide".into()));
    }
    let (slope, intercept, r2) = ols(&xs, &ys);
    Ok(LogLogFit {
        slope,
        intercept,
        r2,
    })
}

/// Ordinary least squares: slope, intercept, and r^2 (1 when the targets are
/// constant, i.e. a horizontal line fits perfectly).
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::build;
    use crate::mask::MaskMatrix;
    use crate::trainer::{Sample, StopReason, Trajectory};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn e2_limit() -> LimitProcess {
        let labels = vec![1.0, 2.0];
        let entries = vec![vec![true, false], vec![false, true]];
        let mask = MaskMatrix::from_entries(entries, &labels, &[1.0, 1.0]).unwrap();
        build(&mask, &labels, true).unwrap()
    }

    fn empty_trajectory(n: usize, m: usize, fit_events: Vec<Option<u64>>) -> Trajectory {
        Trajectory {
            n,
            m,
            labels: vec![1.0; n],
            lr: 0.01,
            alpha_log: Some(-500.0),
            fit_threshold: 0.5,
            samples: Vec::new(),
            fit_events,
            stop: StopReason::Converged,
            epochs_run: 0,
            final_loss: 0.0,
            final_half_sq_norm: 0.0,
        }
    }

    #[test]
    fn clustering_by_relative_window() {
        let traj = empty_trajectory(
            3,
            2,
            vec![Some(507_000), Some(507_012), Some(790_000)],
        );
        let clusters = detect_jumps(&traj, 2).unwrap();
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].data, vec![0, 1]);
        assert_abs_diff_eq!(clusters[0].epoch, 507_006.0, epsilon = 1e-9);
        assert_eq!(clusters[1].data, vec![2]);
    }

    #[test]
    fn no_events_is_zero_clusters() {
        let traj = empty_trajectory(2, 1, vec![None, None]);
        let clusters = detect_jumps(&traj, 0).unwrap();
        assert!(clusters.is_empty());
        assert!(matches!(
            detect_jumps(&traj, 1),
            Err(Error::ClusterMismatch {
                found: 0,
                expected: 1
            })
        ));
    }

    /// Events placed exactly at the predicted epochs reproduce the jump times
    /// with zero error (closure test).
    #[test]
    fn self_closure_has_zero_error() {
        let lp = e2_limit();
        // lr = 0.01, alpha_log = -500: epoch(t) = 50_000 t, integers here
        let traj = empty_trajectory(2, 2, vec![Some(100_000), Some(50_000)]);
        let cmp = compare_jumps(&traj, &lp, 0.01, -500.0).unwrap();
        assert_eq!(cmp.jumps.len(), 2);
        assert_eq!(cmp.max_rel_error, 0.0);
        assert!(cmp.all_sets_match);
        assert_eq!(cmp.jumps[0].predicted_t, 1.0);
        assert_eq!(cmp.jumps[0].observed_t, 1.0);
    }

    /// A trajectory synthesized from the exponent process itself yields exact
    /// slopes per stage.
    #[test]
    fn slopes_recover_exact_piecewise_rates() {
        let lp = e2_limit();
        let lr = 0.01;
        let alpha = 500.0;
        let epoch_of = |t: f64| (t * alpha / lr) as u64;
        let mut samples = Vec::new();
        let mut e = 0u64;
        while e <= epoch_of(2.0) {
            let t = e as f64 * lr / alpha;
            samples.push(Sample {
                epoch: e,
                time: t,
                loss: 1.0,
                log_w_norms: (0..2)
                    .map(|j| -alpha * (-lp.exponent_at(j, t)))
                    .collect(),
                log_a_norms: vec![0.0; 2],
                residuals: vec![0.0; 2],
                fd_norms: vec![0.0; 2],
                fit_flags: vec![false; 2],
                directions: None,
            });
            e += 1000;
        }
        let mut traj = empty_trajectory(2, 2, vec![Some(100_000), Some(50_000)]);
        traj.samples = samples;
        let report = segment_slopes(&traj, &lp, lr).unwrap();
        assert!(report.skipped_stages.is_empty());
        for row in &report.rows {
            // ln|w_j| = -500 * (-ell_j(t)) grows at lr * |D| per epoch
            if row.predicted > 0.0 {
                assert_relative_eq!(row.observed, row.predicted, max_relative = 1e-9);
                assert!(row.rel_error.unwrap() < 1e-9);
            } else {
                // fitted neuron: frozen (slope 0 within float noise)
                assert_abs_diff_eq!(row.observed, 0.0, epsilon = 1e-12);
            }
        }
        // stage 1 row for neuron 1 (fitted at stage 0) carries predicted 0
        assert!(report
            .rows
            .iter()
            .any(|r| r.stage == 1 && r.neuron == 1 && r.predicted == 0.0));
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let lp = e2_limit();
        let mut traj = empty_trajectory(2, 2, vec![Some(100_000), Some(50_000)]);
        // three samples cannot satisfy the 10-sample window floor anywhere
        for epoch in [0u64, 60_000, 120_000] {
            traj.samples.push(Sample {
                epoch,
                time: 0.0,
                loss: 1.0,
                log_w_norms: vec![0.0; 2],
                log_a_norms: vec![0.0; 2],
                residuals: vec![0.0; 2],
                fd_norms: vec![0.0; 2],
                fit_flags: vec![false; 2],
                directions: None,
            });
        }
        assert!(matches!(
            segment_slopes(&traj, &lp, 0.01),
            Err(Error::TooFewSamples { min: 10 })
        ));
    }

    #[test]
    fn alignment_examples() {
        let lp = e2_limit();
        // neuron at its exact limit value aligns perfectly at stage 1
        let net = lp.theta_at(1.5);
        let cos = alignment(&net, &lp, 1);
        // neuron 0 is still unfitted and zero: skipped
        assert_eq!(cos[0], None);
        assert_relative_eq!(cos[1].unwrap(), 1.0, max_relative = 1e-12);

        // orthogonal construction: direction with no mass on D's support
        let mut net = DenseNetwork::zeros(2, 2);
        net.w[1] = vec![1.0, 0.0]; // D_2 is supported on datum 1
        let cos = alignment(&net, &lp, 0);
        assert_abs_diff_eq!(cos[1].unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn network_norm_identities() {
        let lp = e2_limit();
        assert_eq!(network_sq_norm(&DenseNetwork::zeros(3, 2)), 0.0);
        assert_relative_eq!(
            network_sq_norm(&lp.final_params),
            3.0,
            max_relative = 1e-12
        );
        // balanced network: half squared norm equals sum a_j^2
        let net = lp.final_params.clone();
        let sum_a2: f64 = net.a.iter().map(|a| a * a).sum();
        assert_relative_eq!(network_sq_norm(&net), sum_a2, max_relative = 1e-12);
    }

    #[test]
    fn norm_along_limit_process_is_nondecreasing() {
        let lp = e2_limit();
        let mut prev = -1.0;
        for t in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 10.0] {
            let v = network_sq_norm(&lp.theta_at(t));
            assert!(v >= prev);
            prev = v;
        }
        assert_relative_eq!(prev, lp.pred_sq_norm(), max_relative = 1e-12);
    }

    #[test]
    fn loglog_examples() {
        let sqrt_points: Vec<(f64, f64)> = [8.0f64, 16.0, 32.0, 64.0]
            .iter()
            .map(|&n| (n, n.sqrt()))
            .collect();
        let fit = loglog_slope(&sqrt_points).unwrap();
        assert_relative_eq!(fit.slope, 0.5, max_relative = 1e-12);
        assert_relative_eq!(fit.r2, 1.0, max_relative = 1e-12);

        let flat: Vec<(f64, f64)> = [8.0, 16.0, 32.0].iter().map(|&n| (n, 2.5)).collect();
        let fit = loglog_slope(&flat).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.0, epsilon = 1e-15);

        assert!(matches!(
            loglog_slope(&[(1.0, 1.0), (2.0, 2.0)]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            loglog_slope(&[(1.0, 1.0), (2.0, -2.0), (3.0, 3.0)]),
            Err(Error::DegenerateFit(_))
        ));
    }
}
