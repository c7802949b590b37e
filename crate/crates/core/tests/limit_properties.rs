//! Structural invariants of the limit-process construction, checked over
//! seeded random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use saddleflow_core::*;

fn random_instance(
    rng: &mut ChaCha8Rng,
    n_max: usize,
    m_max: usize,
) -> (OrthonormalDataset, InitDraw, MaskMatrix) {
    let n = rng.gen_range(2..=n_max);
    let m = rng.gen_range(1..=m_max);
    let labels: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            if z == 0.0 {
                0.5
            } else {
                z
            }
        })
        .collect();
    let ds = generate_dataset(
        n,
        n,
        &LabelSpec::Explicit { values: labels },
        BasisSpec::Identity,
        0,
    )
    .unwrap();
    let init = sample_init(m, n, -500.0, rng.gen());
    let mask = mask_matrix(&ds, &init).unwrap();
    (ds, init, mask)
}

#[test]
fn jump_times_strictly_increase_and_stage_count_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..500 {
        let (ds, _, mask) = random_instance(&mut rng, 8, 6);
        let lp = build(&mask, ds.labels(), false).unwrap();
        for w in lp.jump_times.windows(2) {
            assert!(w[1] > w[0], "jump times not strictly increasing: {w:?}");
        }
        assert!(lp.stage_count() <= ds.n().min(lp.m));
    }
}

#[test]
fn selected_neuron_exponent_reaches_zero_at_its_jump() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..300 {
        let (ds, _, mask) = random_instance(&mut rng, 8, 6);
        let lp = build(&mask, ds.labels(), false).unwrap();
        for k in 0..lp.stage_count() {
            let j = lp.stages[k].j_star.unwrap();
            let t_next = lp.jump_times[k + 1];
            let raw = lp.stages[k].ell[j] + (t_next - lp.stages[k].t) * lp.stages[k].d_norms[j];
            assert!(raw.abs() < 1e-12, "exit exponent {raw} at stage {k}");
            // and the recorded next-stage value is the capped 0
            assert_eq!(lp.stages[k + 1].ell[j], 0.0);
        }
    }
}

#[test]
fn exponents_stay_in_range_and_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..200 {
        let (ds, _, mask) = random_instance(&mut rng, 8, 6);
        let lp = build(&mask, ds.labels(), false).unwrap();
        for j in 0..lp.m {
            let mut prev = f64::NEG_INFINITY;
            for stage in &lp.stages {
                let e = stage.ell[j];
                assert!((-1.0..=0.0).contains(&e), "ell = {e}");
                assert!(e >= prev, "exponent decreased across stages");
                prev = e;
            }
            // and along continuous time
            let t_end = *lp.jump_times.last().unwrap();
            let mut prev = -1.0;
            for step in 0..=50 {
                let t = t_end * step as f64 / 50.0;
                let e = lp.exponent_at(j, t);
                assert!(e >= prev - 1e-15);
                prev = e;
            }
        }
    }
}

/// Interpolating instances can never beat the minimum-norm interpolator.
#[test]
fn pred_norm_dominates_opt_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut checked = 0;
    while checked < 1000 {
        let (ds, _, mask) = random_instance(&mut rng, 8, 6);
        let lp = build(&mask, ds.labels(), false).unwrap();
        if lp.non_interpolating {
            continue;
        }
        checked += 1;
        let pred = lp.pred_sq_norm();
        let opt = opt_sq_norm(ds.labels());
        assert!(
            pred >= opt * (1.0 - 1e-12),
            "pred {pred} < opt {opt} on an interpolating instance"
        );
    }
}

/// pred_sq_norm telescopes over the per-stage fitted chunks.
#[test]
fn pred_norm_telescopes_over_stages() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..300 {
        let (ds, _, mask) = random_instance(&mut rng, 8, 6);
        let lp = build(&mask, ds.labels(), false).unwrap();
        let y = ds.labels();
        let telescoped: f64 = (0..lp.stage_count())
            .map(|k| {
                let chunk: f64 = lp
                    .fitted_at_stage(k)
                    .iter()
                    .map(|&i| y[i] * y[i])
                    .sum();
                chunk.sqrt()
            })
            .sum();
        let pred = lp.pred_sq_norm();
        assert!(
            (pred - telescoped).abs() <= 1e-12 * pred.max(1.0),
            "pred {pred} vs telescoped {telescoped}"
        );
    }
}

/// When the assumption report passes, the terminal stage has no unfitted data
/// and the final parameters interpolate to machine precision.
#[test]
fn passing_assumptions_imply_interpolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut checked = 0;
    while checked < 200 {
        let (ds, _, mask) = random_instance(&mut rng, 8, 6);
        let lp = build(&mask, ds.labels(), false).unwrap();
        if !lp.assumption_report.passed() {
            continue;
        }
        checked += 1;
        assert!(!lp.non_interpolating);
        assert!(lp.stages.last().unwrap().s_u.is_empty());
        let resid = lp.final_params.residuals(&ds);
        let max = resid.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        assert!(max < 1e-12, "max residual {max}");
        // loss at the limit parameters is numerically zero
        assert!(lp.final_params.loss(&ds) < 1e-24);
    }
}

/// Relabeling the neurons relabels the output and nothing else.
#[test]
fn build_is_invariant_under_neuron_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for _ in 0..200 {
        let (ds, init, mask) = random_instance(&mut rng, 8, 5);
        let lp = build(&mask, ds.labels(), false).unwrap();
        if lp.assumption_report.argmax_unique != Some(true) {
            continue; // lenient tie-break is index-dependent by design
        }
        let m = init.m;
        // rotate the neuron order by one
        let perm: Vec<usize> = (0..m).map(|j| (j + 1) % m).collect();
        let signs: Vec<f64> = perm.iter().map(|&j| init.signs[j]).collect();
        let dirs: Vec<Vec<f64>> = perm.iter().map(|&j| init.directions[j].clone()).collect();
        let permuted = InitDraw::from_parts(init.alpha_log, signs, dirs);
        let mask2 = mask_matrix(&ds, &permuted).unwrap();
        let lp2 = build(&mask2, ds.labels(), false).unwrap();

        assert_eq!(lp.jump_times.len(), lp2.jump_times.len());
        for (a, b) in lp.jump_times.iter().zip(&lp2.jump_times) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        // activation orders correspond through the permutation
        let order: Vec<usize> = lp.activation_order();
        let order2: Vec<usize> = lp2.activation_order().iter().map(|&j| perm[j]).collect();
        assert_eq!(order, order2);
        assert!((lp.pred_sq_norm() - lp2.pred_sq_norm()).abs() <= 1e-12);
    }
}

/// theta_at is piecewise constant: constant within stages, jumping only at
/// the recorded times.
#[test]
fn theta_is_piecewise_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (ds, _, mask) = random_instance(&mut rng, 8, 6);
    let lp = build(&mask, ds.labels(), false).unwrap();
    for k in 0..lp.stage_count() {
        let (t0, t1) = (lp.jump_times[k], lp.jump_times[k + 1]);
        let a = lp.theta_at(t0);
        let b = lp.theta_at(t0 + 0.5 * (t1 - t0));
        let c = lp.theta_at(t1 - 1e-9 * (t1 - t0));
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_ne!(lp.theta_at(t1), b, "no jump at t_{}", k + 1);
    }
}
