//! Monte-Carlo verification of the probabilistic statements: the mask
//! assumption probability, the incremental halving of the unfitted set, and
//! the high-probability norm bound.
//!
//! Every trial draws from its own counter-derived stream, so trial t of run s
//! is reproducible in isolation and aggregation order does not matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{generate_dataset, BasisSpec, LabelSpec};
use crate::error::{Error, Result};
use crate::init::sample_init;
use crate::limit::{bias_bound, build, check_assumptions};
use crate::mask::{mask_matrix, MaskMatrix};

/// Derive an independent seed for one trial (splitmix64 finalizer).
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of a Monte-Carlo estimate against a theoretical lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    /// Trials that counted (excluded ones subtracted).
    pub trials: u64,
    pub successes: u64,
    /// Trials set aside (e.g. non-interpolating instances).
    pub excluded: u64,
    pub empirical_p: f64,
    /// 95% normal-approximation halfwidth.
    pub ci95_halfwidth: f64,
    /// Theoretical lower bound when one exists in closed form.
    pub theoretical_bound: Option<f64>,
    /// empirical_p + ci >= bound; vacuously true for absent or non-positive
    /// bounds.
    pub passed: bool,
}

impl McReport {
    fn from_counts(successes: u64, trials: u64, excluded: u64, bound: Option<f64>) -> Self {
        let p = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        let ci = if trials == 0 {
            0.0
        } else {
            1.96 * (p * (1.0 - p) / trials as f64).sqrt()
        };
        let passed = match bound {
            Some(b) if b > 0.0 => p + ci >= b,
            _ => true, // vacuous-pass
        };
        Self {
            trials,
            successes,
            excluded,
            empirical_p: p,
            ci95_halfwidth: ci,
            theoretical_bound: bound,
            passed,
        }
    }
}

/// Lower bound on the probability that the mask assumption holds:
/// 1 - n (3/4)^m - (m(m+3)/2) (1/2)^(min(n+, n-) + 1).
/// May be negative (vacuous); returned as-is.
pub fn prop42_bound(n_plus: usize, n_minus: usize, m: usize) -> f64 {
    let n = (n_plus + n_minus) as f64;
    let mf = m as f64;
    let min_pm = n_plus.min(n_minus) as f64;
    1.0 - n * 0.75f64.powi(m as i32) - (mf * (mf + 3.0) / 2.0) * 0.5f64.powf(min_pm + 1.0)
}

/// Estimate the probability that a sampled mask satisfies the assumption
/// (rows non-zero, columns non-zero, columns pairwise distinct) for a label
/// pattern with the given sign counts, and compare against [`prop42_bound`].
pub fn mc_assumption(
    n_plus: usize,
    n_minus: usize,
    m: usize,
    trials: u64,
    seed: u64,
) -> McReport {
    let n = n_plus + n_minus;
    let mut labels = vec![1.0; n_plus];
    labels.extend(vec![-1.0; n_minus]);
    let dataset = generate_dataset(
        n,
        n,
        &LabelSpec::Explicit { values: labels },
        BasisSpec::Identity,
        0,
    )
    .expect("identity dataset");
    let successes = (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let init = sample_init(m, n, -1.0, trial_seed(seed, t));
            let mask = mask_matrix(&dataset, &init).expect("shapes agree");
            let rep = check_assumptions(&mask, dataset.labels());
            rep.rows_nonzero && rep.cols_nonzero && rep.cols_distinct
        })
        .count() as u64;
    McReport::from_counts(
        successes,
        trials,
        0,
        Some(prop42_bound(n_plus, n_minus, m)),
    )
}

/// Neuron ordering for the halving simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitOrdering {
    /// Deterministic ordering j_k = k, independent of data and masks; the
    /// per-step split counts are then conditionally Binomial(|S_U|, 1/2).
    Fixed,
    /// The ordering selected by the limit-process recursion itself.
    Algorithmic,
}

/// One trial of the masked halving recursion: cardinalities |S_U^k| and the
/// near-halving indicators G_k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSplitTrace {
    /// |S_U^k| for k = 0..=steps.
    pub counts: Vec<usize>,
    /// G_k = { | |S_U^k| - |S_U^(k-1)|/2 | <= delta |S_U^(k-1)| }, k = 1..=steps.
    pub g: Vec<bool>,
}

/// Simulate one trial. Mask entries over the (all-positive) label block are
/// iid Bernoulli(1/2), the conditional model given positive output signs.
pub fn half_split_trace(
    n: usize,
    m: usize,
    steps: usize,
    delta: f64,
    ordering: SplitOrdering,
    rng: &mut impl Rng,
) -> HalfSplitTrace {
    let counts: Vec<usize> = match ordering {
        SplitOrdering::Fixed => {
            let mut alive = vec![true; n];
            let mut counts = vec![n];
            for _k in 0..steps {
                for a in alive.iter_mut() {
                    // removed when the k-th neuron is active on this datum
                    if *a && rng.gen::<bool>() {
                        *a = false;
                    }
                }
                counts.push(alive.iter().filter(|&&a| a).count());
            }
            counts
        }
        SplitOrdering::Algorithmic => {
            let entries: Vec<Vec<bool>> = (0..n)
                .map(|_| (0..m).map(|_| rng.gen::<bool>()).collect())
                .collect();
            let labels: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
                .collect();
            let mask =
                MaskMatrix::from_entries(entries, &labels, &vec![1.0; m]).expect("positive block");
            let lp = build(&mask, &labels, false).expect("lenient build");
            let mut counts: Vec<usize> =
                lp.stages.iter().map(|s| s.s_u.len()).collect();
            let last = *counts.last().unwrap();
            while counts.len() <= steps {
                counts.push(last);
            }
            counts.truncate(steps + 1);
            counts
        }
    };
    let g = (1..counts.len())
        .map(|k| {
            let prev = counts[k - 1] as f64;
            let cur = counts[k] as f64;
            (cur - prev / 2.0).abs() <= delta * prev
        })
        .collect();
    HalfSplitTrace { counts, g }
}

/// Per-step aggregate over the Monte-Carlo trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSplitStep {
    pub k: usize,
    /// Mean of |S_U^k| / |S_U^(k-1)| over trials with a non-empty previous set.
    pub mean_ratio: f64,
    /// Mean of the standardized deviation from the Binomial(prev, 1/2) mean.
    pub mean_z: f64,
    /// Variance of that standardized deviation (1 under the binomial law).
    pub var_z: f64,
    pub trials_counted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSplitSummary {
    pub n: usize,
    pub m: usize,
    pub trials: u64,
    pub delta: f64,
    pub rho: f64,
    /// floor((1 - rho) ln(n) / ln 2), the number of tracked steps.
    pub k_star: usize,
    pub ordering: SplitOrdering,
    /// Fraction of trials where G_k held for every k <= k_star.
    pub success_freq: f64,
    /// 1 - 3 ln(n) exp(-(4/3) n^(rho/2) delta^2); often non-positive at desk
    /// scales.
    pub theoretical_bound: f64,
    pub bound_vacuous: bool,
    pub steps: Vec<HalfSplitStep>,
}

/// Run the halving simulation. `delta` must lie in the admissible range
/// (0, rho ln(2) / (8 (1 - rho))) and `rho` in (0, 1/2).
pub fn half_split_stats(
    n: usize,
    m: usize,
    trials: u64,
    delta: f64,
    rho: f64,
    seed: u64,
    ordering: SplitOrdering,
) -> Result<HalfSplitSummary> {
    if !(rho > 0.0 && rho < 0.5) {
        return Err(Error::BadRho { rho });
    }
    let limit = rho * 2f64.ln() / (8.0 * (1.0 - rho));
    if !(delta > 0.0 && delta < limit) {
        return Err(Error::BadDelta { delta, limit });
    }
    let k_star_f = (1.0 - rho) * (n as f64).ln() / 2f64.ln();
    let k_star = (k_star_f + 1e-9).floor() as usize;
    let steps = k_star.min(m);

    let traces: Vec<HalfSplitTrace> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t + 1);
            half_split_trace(n, m, steps, delta, ordering, &mut rng)
        })
        .collect();

    let success = traces.iter().filter(|tr| tr.g.iter().all(|&g| g)).count();
    let mut step_stats = Vec::with_capacity(steps);
    for k in 1..=steps {
        let mut ratios = Vec::new();
        let mut zs = Vec::new();
        for tr in &traces {
            let prev = tr.counts[k - 1] as f64;
            if prev > 0.0 {
                let cur = tr.counts[k] as f64;
                ratios.push(cur / prev);
                zs.push((cur - prev / 2.0) / (prev / 4.0).sqrt());
            }
        }
        let cnt = ratios.len() as f64;
        let mean_ratio = ratios.iter().sum::<f64>() / cnt;
        let mean_z = zs.iter().sum::<f64>() / cnt;
        let var_z = zs.iter().map(|z| (z - mean_z) * (z - mean_z)).sum::<f64>() / cnt;
        step_stats.push(HalfSplitStep {
            k,
            mean_ratio,
            mean_z,
            var_z,
            trials_counted: ratios.len() as u64,
        });
    }

    let bound = 1.0 - 3.0 * (n as f64).ln() * (-(4.0 / 3.0) * (n as f64).powf(rho / 2.0) * delta * delta).exp();
    Ok(HalfSplitSummary {
        n,
        m,
        trials,
        delta,
        rho,
        k_star,
        ordering,
        success_freq: success as f64 / trials as f64,
        theoretical_bound: bound,
        bound_vacuous: bound <= 0.0,
        steps: step_stats,
    })
}

/// Label magnitudes for the norm-bound Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasLabels {
    /// |y_i| = 1.
    Unit,
    /// |y_i| = |z_i|, z standard normal.
    AbsGaussian,
}

/// Per trial: draw labels with the given sign counts, run the limit process
/// (no training), and test pred_sq_norm <= bias_bound. Non-interpolating
/// instances are excluded and counted separately.
pub fn mc_bias_bound(
    n_plus: usize,
    n_minus: usize,
    m: usize,
    labels: BiasLabels,
    trials: u64,
    seed: u64,
) -> McReport {
    let n = n_plus + n_minus;
    let outcomes: Vec<Option<bool>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t + 1);
            let mut y: Vec<f64> = (0..n)
                .map(|i| {
                    let mag = match labels {
                        BiasLabels::Unit => 1.0,
                        BiasLabels::AbsGaussian => rng.sample::<f64, _>(StandardNormal).abs(),
                    };
                    if i < n_plus {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            // guard against an exactly-zero Gaussian draw
            for v in y.iter_mut() {
                if *v == 0.0 {
                    *v = f64::MIN_POSITIVE;
                }
            }
            let dataset = generate_dataset(
                n,
                n,
                &LabelSpec::Explicit { values: y.clone() },
                BasisSpec::Identity,
                0,
            )
            .expect("identity dataset");
            let init = crate::init::sample_init_with(m, n, -1.0, &mut rng);
            let mask = mask_matrix(&dataset, &init).expect("shapes agree");
            let lp = build(&mask, &y, false).expect("lenient build");
            if lp.non_interpolating {
                None
            } else {
                Some(lp.pred_sq_norm() <= bias_bound(&y))
            }
        })
        .collect();
    let excluded = outcomes.iter().filter(|o| o.is_none()).count() as u64;
    let successes = outcomes.iter().filter(|o| **o == Some(true)).count() as u64;
    McReport::from_counts(successes, trials - excluded, excluded, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn prop42_bound_values() {
        assert_abs_diff_eq!(prop42_bound(32, 32, 20), 0.7971, epsilon = 2e-4);
        assert_abs_diff_eq!(prop42_bound(64, 64, 30), 0.9771, epsilon = 2e-4);
        assert_eq!(prop42_bound(1, 1, 1), -1.0);
    }

    #[test]
    fn mc_assumption_beats_bound_small_grid() {
        let rep = mc_assumption(8, 8, 12, 2000, 7);
        let bound = prop42_bound(8, 8, 12);
        assert!(
            rep.empirical_p >= bound - 3.0 * rep.ci95_halfwidth,
            "p = {}, bound = {bound}",
            rep.empirical_p
        );
        assert!(rep.passed);
    }

    #[test]
    fn mc_assumption_saturates_for_wide_networks() {
        // (3/4)^m < 1e-9 at m = 80; columns collide with probability ~0
        let rep = mc_assumption(64, 64, 80, 300, 3);
        assert!(rep.empirical_p > 0.99);
    }

    #[test]
    fn vacuous_bound_passes_trivially() {
        let rep = mc_assumption(1, 1, 1, 50, 1);
        assert_eq!(rep.theoretical_bound, Some(-1.0));
        assert!(rep.passed);
    }

    #[test]
    fn trial_seed_is_deterministic_and_spread() {
        assert_eq!(trial_seed(5, 9), trial_seed(5, 9));
        assert_ne!(trial_seed(5, 9), trial_seed(5, 10));
        assert_ne!(trial_seed(5, 9), trial_seed(6, 9));
    }

    /// Two data, one neuron, one step: |S_U^1| takes values {0, 1, 2} with
    /// probabilities {1/4, 1/2, 1/4} (the four equally likely mask columns).
    #[test]
    fn single_step_split_distribution() {
        let trials = 8000u64;
        let mut freq = [0u64; 3];
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            rng.set_stream(t + 1);
            let trace = half_split_trace(2, 1, 1, 0.1, SplitOrdering::Fixed, &mut rng);
            freq[trace.counts[1]] += 1;
        }
        for (count, expect) in freq.iter().zip([0.25, 0.5, 0.25]) {
            let p = *count as f64 / trials as f64;
            let sigma = (expect * (1.0 - expect) / trials as f64).sqrt();
            assert!(
                (p - expect).abs() <= 4.0 * sigma,
                "p = {p}, expected {expect}"
            );
        }
    }

    #[test]
    fn half_split_parameter_validation() {
        assert!(matches!(
            half_split_stats(64, 8, 10, 0.5, 0.25, 0, SplitOrdering::Fixed),
            Err(Error::BadDelta { .. })
        ));
        assert!(matches!(
            half_split_stats(64, 8, 10, 0.01, 0.9, 0, SplitOrdering::Fixed),
            Err(Error::BadRho { .. })
        ));
    }

    #[test]
    fn fixed_ordering_ratios_near_half() {
        let summary =
            half_split_stats(256, 10, 500, 1.0 / 40.0, 0.25, 21, SplitOrdering::Fixed).unwrap();
        // k_star = 0.75 * 8 = 6
        assert_eq!(summary.k_star, 6);
        for step in &summary.steps {
            assert!(
                (step.mean_ratio - 0.5).abs() < 0.05,
                "step {} ratio {}",
                step.k,
                step.mean_ratio
            );
        }
        assert!(summary.bound_vacuous);
    }

    #[test]
    fn algorithmic_ordering_also_halves_early() {
        let summary = half_split_stats(
            256,
            20,
            300,
            1.0 / 40.0,
            0.25,
            5,
            SplitOrdering::Algorithmic,
        )
        .unwrap();
        // the first selected neuron still removes about half the data
        let first = &summary.steps[0];
        assert!(
            (first.mean_ratio - 0.5).abs() < 0.05,
            "ratio {}",
            first.mean_ratio
        );
    }

    #[test]
    fn bias_bound_mc_small() {
        let rep = mc_bias_bound(64, 0, 40, BiasLabels::Unit, 200, 13);
        assert!(rep.trials + rep.excluded == 200);
        assert!(
            rep.empirical_p >= 0.99,
            "bound frequency {}",
            rep.empirical_p
        );
    }

    /// Width dependence of the bound frequency, recorded as an observation
    /// only (no monotonicity is established, so nothing is asserted on it).
    #[test]
    fn bias_bound_frequency_observed_across_widths() {
        for m in [10usize, 20, 40] {
            let rep = mc_bias_bound(32, 0, m, BiasLabels::AbsGaussian, 200, 9);
            println!(
                "m = {m:2}: bound held in {:.3} of {} interpolating trials ({} excluded)",
                rep.empirical_p, rep.trials, rep.excluded
            );
            assert!((0.0..=1.0).contains(&rep.empirical_p));
        }
    }

    /// Below the interpolation threshold, non-interpolating trials are set
    /// aside rather than counted as failures.
    #[test]
    fn underparameterized_trials_are_excluded() {
        let rep = mc_bias_bound(32, 0, 3, BiasLabels::Unit, 200, 4);
        assert!(rep.excluded > 0, "m = 3 on 32 data should often miss rows");
        assert_eq!(rep.trials + rep.excluded, 200);
    }

    /// Forced mask: one neuron active on everything, equal labels. The single
    /// jump fits all data and pred = opt = sqrt(n).
    #[test]
    fn forced_single_neuron_matches_opt() {
        let n = 16;
        let y = vec![1.0; n];
        let entries = vec![vec![true]; n];
        let mask = MaskMatrix::from_entries(entries, &y, &[1.0]).unwrap();
        let lp = build(&mask, &y, true).unwrap();
        assert!(!lp.non_interpolating);
        let pred = lp.pred_sq_norm();
        assert_relative_eq!(pred, (n as f64).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(pred, crate::limit::opt_sq_norm(&y), max_relative = 1e-12);
        assert!(pred <= bias_bound(&y));
    }
}
