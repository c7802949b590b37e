//! Command implementations: every command reads a config and/or flags,
//! computes deterministically, writes machine artifacts into the output
//! directory, and prints a short human summary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use saddleflow_core::analysis::{JumpComparison, SlopeReport};
use saddleflow_core::*;

use crate::config::{DatasetSource, InitMode, RunConfig};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// limit
// ---------------------------------------------------------------------------

pub fn cmd_limit(config: &RunConfig, out: &Path) -> Result<()> {
    let dataset = config.dataset()?;
    let init = config.init_draw(dataset.d());
    let mask = mask_matrix(&dataset, &init)?;
    let lp = build(&mask, dataset.labels(), config.strict)?;

    let path = out.join("limit.json");
    write_json(&path, &lp)?;

    let y = dataset.labels();
    println!("limit process: {} stages over {} neurons, {} data", lp.stage_count(), lp.m, lp.n);
    println!("  jump times: {:?}", &lp.jump_times[1..]);
    println!(
        "  1/2 |theta_pred|^2 = {:.6}, 1/2 |theta_opt|^2 = {:.6}, norm bound = {:.6}",
        lp.pred_sq_norm(),
        opt_sq_norm(y),
        bias_bound(y)
    );
    println!(
        "  assumption: rows {} cols {} distinct {} labels {} argmax-unique {:?}",
        lp.assumption_report.rows_nonzero,
        lp.assumption_report.cols_nonzero,
        lp.assumption_report.cols_distinct,
        lp.assumption_report.labels_nonzero,
        lp.assumption_report.argmax_unique
    );
    if lp.non_interpolating {
        println!("  warning: terminal stage leaves unfitted data");
    }
    println!("  wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TrainSummary {
    schema_version: u32,
    n: usize,
    m: usize,
    stop: StopReason,
    epochs_run: u64,
    final_loss: f64,
    final_half_sq_norm: f64,
    lr: f64,
    alpha_log: Option<f64>,
    fit_threshold: f64,
    fit_events: Vec<Option<u64>>,
}

fn run_training(config: &RunConfig, dataset: &OrthonormalDataset) -> Result<Trajectory> {
    let trajectory = match config.init.mode {
        InitMode::Scaled => {
            let init = config.init_draw(dataset.d());
            train(dataset, &init, &config.trainer)?.trajectory
        }
        InitMode::Dense => {
            let init = config.init_draw(dataset.d());
            train_dense(
                dataset,
                DenseNetwork::from_init(&init),
                &config.trainer,
                Some(init.alpha_log),
            )?
            .trajectory
        }
        InitMode::HeUniform => {
            let net = DenseNetwork::he_uniform(config.init.m, dataset.d(), config.init.seed);
            train_dense(dataset, net, &config.trainer, None)?.trajectory
        }
    };
    Ok(trajectory)
}

pub fn cmd_train(config: &RunConfig, out: &Path) -> Result<()> {
    let dataset = config.dataset()?;
    let trajectory = run_training(config, &dataset)?;

    let csv_path = out.join("trajectory.csv");
    let file = fs::File::create(&csv_path)?;
    trajectory.write_csv(file, config.trainer.record_residuals)?;
    let summary = TrainSummary {
        schema_version: crate::config::SCHEMA_VERSION,
        n: trajectory.n,
        m: trajectory.m,
        stop: trajectory.stop,
        epochs_run: trajectory.epochs_run,
        final_loss: trajectory.final_loss,
        final_half_sq_norm: trajectory.final_half_sq_norm,
        lr: trajectory.lr,
        alpha_log: trajectory.alpha_log,
        fit_threshold: trajectory.fit_threshold,
        fit_events: trajectory.fit_events.clone(),
    };
    write_json(&out.join("final.json"), &summary)?;

    println!(
        "trained {} epochs ({:?}), final loss {:.3e}, 1/2 |theta|^2 = {:.6}",
        trajectory.epochs_run, trajectory.stop, trajectory.final_loss,
        trajectory.final_half_sq_norm
    );
    println!("  wrote {} and final.json", csv_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ComparisonReport {
    schema_version: u32,
    jumps: JumpComparison,
    slopes: SlopeReport,
    trained_half_sq_norm: f64,
    predicted_half_sq_norm: f64,
    norm_rel_error: f64,
}

pub fn cmd_compare(config: &RunConfig, out: &Path) -> Result<()> {
    let dataset = config.dataset()?;
    let init = config.init_draw(dataset.d());
    let mask = mask_matrix(&dataset, &init)?;
    let lp = build(&mask, dataset.labels(), config.strict)?;
    write_json(&out.join("limit.json"), &lp)?;

    let trajectory = run_training(config, &dataset)?;
    let file = fs::File::create(out.join("trajectory.csv"))?;
    trajectory.write_csv(file, config.trainer.record_residuals)?;

    let jumps = compare_jumps(&trajectory, &lp, config.trainer.lr, config.init.alpha_log)?;
    let slopes = segment_slopes(&trajectory, &lp, config.trainer.lr)?;
    let trained = trajectory.final_half_sq_norm;
    let predicted = lp.pred_sq_norm();
    let report = ComparisonReport {
        schema_version: crate::config::SCHEMA_VERSION,
        trained_half_sq_norm: trained,
        predicted_half_sq_norm: predicted,
        norm_rel_error: (trained - predicted).abs() / predicted,
        jumps,
        slopes,
    };
    let path = out.join("comparison.json");
    write_json(&path, &report)?;

    println!(
        "compare: max jump rel error {:.5}, norm rel error {:.2e}, {} slope rows",
        report.jumps.max_rel_error,
        report.norm_rel_error,
        report.slopes.rows.len()
    );
    println!("  wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-n (scaling in the number of data points)
// ---------------------------------------------------------------------------

/// Width preset: ceil(ln(10000 n) / ln(4/3)) neurons, enough that a typical
/// draw covers every datum.
pub fn width_rule(n: usize) -> usize {
    ((10_000.0 * n as f64).ln() / (4.0f64 / 3.0).ln()).ceil() as usize
}

/// Init-scale preset for width sweeps: norm 1e-30 / sqrt(m), so the initial
/// total parameter norm is width-independent.
pub fn sweep_alpha_log(m: usize) -> f64 {
    (1e-30f64).ln() - 0.5 * (m as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepMode {
    /// Evaluate the limit process only (fast path).
    Alg,
    /// Actually train the dense network (lr 0.5, stop at 1e-10).
    Train,
}

#[derive(Serialize)]
struct SweepNSummary {
    schema_version: u32,
    mode: String,
    pred_fit: LogLogFit,
    opt_fit: LogLogFit,
    ratio_bound_ok: bool,
}

pub fn cmd_sweep_n(ns: &[usize], seeds: u64, mode: SweepMode, base_seed: u64, out: &Path) -> Result<()> {
    struct Point {
        n: usize,
        m: usize,
        seed: u64,
        value: f64,
        opt: f64,
        bound: f64,
        interpolating: bool,
    }
    let jobs: Vec<(usize, u64)> = ns
        .iter()
        .flat_map(|&n| (0..seeds).map(move |s| (n, s)))
        .collect();
    let points: Vec<Point> = jobs
        .par_iter()
        .map(|&(n, seed)| -> Result<Point> {
            let m = width_rule(n);
            let ds = generate_dataset(
                n,
                n,
                &LabelSpec::Gaussian,
                BasisSpec::Identity,
                base_seed + 1000 + seed,
            )?;
            let init_seed = base_seed + 2000 + seed;
            let (value, interpolating) = match mode {
                SweepMode::Alg => {
                    let init = sample_init(m, n, -500.0, init_seed);
                    let mask = mask_matrix(&ds, &init)?;
                    let lp = build(&mask, ds.labels(), false)?;
                    (lp.pred_sq_norm(), !lp.non_interpolating)
                }
                SweepMode::Train => {
                    let alpha_log = sweep_alpha_log(m);
                    let init = sample_init(m, n, alpha_log, init_seed);
                    let cfg = TrainerConfig {
                        lr: 0.5,
                        max_epochs: 1_000_000,
                        loss_stop: 1e-10,
                        record_every: 100_000,
                        ..TrainerConfig::default()
                    };
                    let run =
                        train_dense(&ds, DenseNetwork::from_init(&init), &cfg, Some(alpha_log))?;
                    (
                        run.trajectory.final_half_sq_norm,
                        run.trajectory.stop == StopReason::Converged,
                    )
                }
            };
            Ok(Point {
                n,
                m,
                seed,
                value,
                opt: opt_sq_norm(ds.labels()),
                bound: bias_bound(ds.labels()),
                interpolating,
            })
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.n.to_string(),
                p.m.to_string(),
                p.seed.to_string(),
                fmt_f(p.value),
                fmt_f(p.opt),
                fmt_f(p.bound),
                p.interpolating.to_string(),
            ]
        })
        .collect();
    write_csv_rows(
        &out.join("sweep_n.csv"),
        &["n", "m", "seed", "half_sq_norm", "opt_sq_norm", "bias_bound", "interpolating"],
        &rows,
    )?;

    let mut pred_pts = Vec::new();
    let mut opt_pts = Vec::new();
    for &n in ns {
        let of_n: Vec<&Point> = points.iter().filter(|p| p.n == n).collect();
        let mp = of_n.iter().map(|p| p.value).sum::<f64>() / of_n.len() as f64;
        let mo = of_n.iter().map(|p| p.opt).sum::<f64>() / of_n.len() as f64;
        pred_pts.push((n as f64, mp));
        opt_pts.push((n as f64, mo));
    }
    let summary = SweepNSummary {
        schema_version: crate::config::SCHEMA_VERSION,
        mode: format!("{mode:?}").to_lowercase(),
        pred_fit: loglog_slope(&pred_pts)?,
        opt_fit: loglog_slope(&opt_pts)?,
        ratio_bound_ok: points.iter().all(|p| p.value <= p.bound),
    };
    write_json(&out.join("sweep_n_summary.json"), &summary)?;
    println!(
        "sweep-n ({:?}): learned-norm slope {:.4} (r2 {:.4}), opt slope {:.4}, bound ok {}",
        mode, summary.pred_fit.slope, summary.pred_fit.r2, summary.opt_fit.slope,
        summary.ratio_bound_ok
    );
    println!("  wrote sweep_n.csv and sweep_n_summary.json in {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-m (width sweep at fixed n, small vs He initialization)
// ---------------------------------------------------------------------------

pub fn cmd_sweep_m(n: usize, ms: &[usize], seeds: u64, base_seed: u64, out: &Path) -> Result<()> {
    let ds = generate_dataset(n, n, &LabelSpec::Gaussian, BasisSpec::Identity, base_seed + 77)?;
    let jobs: Vec<(usize, u64, bool)> = ms
        .iter()
        .flat_map(|&m| (0..seeds).flat_map(move |s| [(m, s, false), (m, s, true)]))
        .collect();
    let results: Vec<(usize, u64, bool, Trajectory)> = jobs
        .par_iter()
        .map(|&(m, seed, he)| -> Result<(usize, u64, bool, Trajectory)> {
            let traj = if he {
                let cfg = TrainerConfig {
                    lr: 0.001,
                    max_epochs: 1_000_000,
                    loss_stop: 1e-10,
                    record_every: 200_000,
                    ..TrainerConfig::default()
                };
                train_dense(
                    &ds,
                    DenseNetwork::he_uniform(m, n, base_seed + 600 + seed),
                    &cfg,
                    None,
                )?
                .trajectory
            } else {
                let alpha_log = sweep_alpha_log(m);
                let init = sample_init(m, n, alpha_log, base_seed + 770 + seed);
                let cfg = TrainerConfig {
                    lr: 1.0,
                    max_epochs: 1_000_000,
                    loss_stop: 1e-10,
                    record_every: 200_000,
                    ..TrainerConfig::default()
                };
                train_dense(&ds, DenseNetwork::from_init(&init), &cfg, Some(alpha_log))?
                    .trajectory
            };
            Ok((m, seed, he, traj))
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(m, seed, he, traj)| {
            vec![
                m.to_string(),
                if *he { "he-uniform" } else { "small-balanced" }.to_string(),
                seed.to_string(),
                fmt_f(traj.final_half_sq_norm),
                fmt_f(traj.final_loss),
                traj.epochs_run.to_string(),
                format!("{:?}", traj.stop).to_lowercase(),
            ]
        })
        .collect();
    write_csv_rows(
        &out.join("sweep_m.csv"),
        &["m", "scheme", "seed", "half_sq_norm", "final_loss", "epochs", "stop"],
        &rows,
    )?;
    println!(
        "sweep-m at n = {n}: opt = {:.4}; wrote sweep_m.csv in {}",
        opt_sq_norm(ds.labels()),
        out.display()
    );
    for &m in ms {
        let mean = |he: bool| {
            let vals: Vec<f64> = results
                .iter()
                .filter(|(rm, _, rhe, _)| *rm == m && *rhe == he)
                .map(|(_, _, _, t)| t.final_half_sq_norm)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        println!("  m = {m:3}: small {:.4}, he {:.4}", mean(false), mean(true));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify-* commands
// ---------------------------------------------------------------------------

pub fn cmd_verify_assumptions(
    point: Option<(usize, usize, usize)>,
    trials: u64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    match point {
        Some((n_plus, n_minus, m)) => {
            let report = mc_assumption(n_plus, n_minus, m, trials, seed);
            write_json(&out.join("mc_report.json"), &report)?;
            println!(
                "assumption check ({n_plus}, {n_minus}, m = {m}): empirical {:.4} vs bound {:.4} -> {}",
                report.empirical_p,
                report.theoretical_bound.unwrap_or(f64::NAN),
                if report.passed { "pass" } else { "FAIL" }
            );
        }
        None => {
            let grid: Vec<(usize, usize)> = [8usize, 16, 32, 64]
                .iter()
                .flat_map(|&np| [10usize, 20, 30].iter().map(move |&m| (np, m)))
                .collect();
            let reports: Vec<(usize, usize, McReport)> = grid
                .par_iter()
                .map(|&(np, m)| (np, m, mc_assumption(np, np, m, trials, seed)))
                .collect();
            let mut all_pass = true;
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|(np, m, r)| {
                    let bound = r.theoretical_bound.unwrap();
                    let ok = r.empirical_p >= bound - 3.0 * r.ci95_halfwidth;
                    all_pass &= ok;
                    vec![
                        np.to_string(),
                        np.to_string(),
                        m.to_string(),
                        r.trials.to_string(),
                        r.successes.to_string(),
                        fmt_f(r.empirical_p),
                        fmt_f(r.ci95_halfwidth),
                        fmt_f(bound),
                        ok.to_string(),
                    ]
                })
                .collect();
            write_csv_rows(
                &out.join("verify_assumptions.csv"),
                &["n_plus", "n_minus", "m", "trials", "successes", "empirical_p", "ci95", "bound", "pass"],
                &rows,
            )?;
            println!(
                "assumption grid ({} points x {trials} trials): {}; wrote verify_assumptions.csv",
                grid.len(),
                if all_pass { "all pass" } else { "FAILURES" }
            );
            anyhow::ensure!(all_pass, "some grid points fell below bound - 3 ci");
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_verify_split(
    n: usize,
    m: usize,
    trials: u64,
    delta: f64,
    rho: f64,
    ordering: SplitOrdering,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let summary = half_split_stats(n, m, trials, delta, rho, seed, ordering)?;
    write_json(&out.join("split_report.json"), &summary)?;
    let rows: Vec<Vec<String>> = summary
        .steps
        .iter()
        .map(|s| {
            vec![
                s.k.to_string(),
                fmt_f(s.mean_ratio),
                fmt_f(s.mean_z),
                fmt_f(s.var_z),
                s.trials_counted.to_string(),
            ]
        })
        .collect();
    write_csv_rows(
        &out.join("split_steps.csv"),
        &["k", "mean_ratio", "mean_z", "var_z", "trials"],
        &rows,
    )?;
    println!(
        "half-split (n = {n}, k* = {}): success freq {:.4}, bound {:.3e}{}",
        summary.k_star,
        summary.success_freq,
        summary.theoretical_bound,
        if summary.bound_vacuous { " (vacuous)" } else { "" }
    );
    for s in &summary.steps {
        println!("  k = {}: mean ratio {:.4}", s.k, s.mean_ratio);
    }
    Ok(())
}

pub fn cmd_verify_bias(
    n_plus: usize,
    n_minus: usize,
    m: usize,
    labels: BiasLabels,
    trials: u64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let report = mc_bias_bound(n_plus, n_minus, m, labels, trials, seed);
    write_json(&out.join("bias_report.json"), &report)?;
    println!(
        "norm bound ({n_plus}+, {n_minus}-, m = {m}): held in {:.4} of {} interpolating trials ({} excluded)",
        report.empirical_p, report.trials, report.excluded
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// figures
// ---------------------------------------------------------------------------

/// Emit the CSV/JSON data behind the five reference experiments:
/// 1. loss and fit events of the 64-point run with predicted jump times,
/// 2. per-neuron log-norm slopes,
/// 3. polar snapshots (norm + projected direction),
/// 4. norm scaling in n,
/// 5. width sweep contrasting small and He initialization.
pub fn cmd_figures(out: &Path) -> Result<()> {
    let mut config = RunConfig::default();
    config.trainer.record_directions = true;
    config.trainer.record_residuals = true;
    let dataset = config.dataset()?;
    let init = config.init_draw(dataset.d());
    let mask = mask_matrix(&dataset, &init)?;
    let lp = build(&mask, dataset.labels(), true)?;
    write_json(&out.join("fig1_limit.json"), &lp)?;

    let run = train(&dataset, &init, &config.trainer)?;
    let traj = &run.trajectory;
    let file = fs::File::create(out.join("fig1_trajectory.csv"))?;
    traj.write_csv(file, true)?;

    let jumps = compare_jumps(traj, &lp, config.trainer.lr, config.init.alpha_log)?;
    let slopes = segment_slopes(traj, &lp, config.trainer.lr)?;
    let report = ComparisonReport {
        schema_version: crate::config::SCHEMA_VERSION,
        trained_half_sq_norm: traj.final_half_sq_norm,
        predicted_half_sq_norm: lp.pred_sq_norm(),
        norm_rel_error: (traj.final_half_sq_norm - lp.pred_sq_norm()).abs() / lp.pred_sq_norm(),
        jumps,
        slopes: slopes.clone(),
    };
    write_json(&out.join("fig1_comparison.json"), &report)?;

    let slope_rows: Vec<Vec<String>> = slopes
        .rows
        .iter()
        .map(|r| {
            vec![
                r.neuron.to_string(),
                r.stage.to_string(),
                fmt_f(r.observed),
                fmt_f(r.predicted),
                r.rel_error.map_or(String::new(), fmt_f),
                r.samples.to_string(),
            ]
        })
        .collect();
    write_csv_rows(
        &out.join("fig2_slopes.csv"),
        &["neuron", "stage", "observed", "predicted", "rel_error", "samples"],
        &slope_rows,
    )?;

    // figure 3: project each recorded direction onto a seeded random 2-plane
    let plane = {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows = saddleflow_core::dataset::random_orthonormal_rows(2, dataset.d(), &mut rng);
        (rows[0].clone(), rows[1].clone())
    };
    let mut polar_rows = Vec::new();
    for s in &traj.samples {
        let Some(dirs) = &s.directions else { continue };
        for (j, dir) in dirs.iter().enumerate() {
            let px: f64 = dir.iter().zip(&plane.0).map(|(a, b)| a * b).sum();
            let py: f64 = dir.iter().zip(&plane.1).map(|(a, b)| a * b).sum();
            polar_rows.push(vec![
                s.epoch.to_string(),
                fmt_f(s.time),
                (j + 1).to_string(),
                fmt_f(s.log_w_norms[j]),
                fmt_f(px),
                fmt_f(py),
            ]);
        }
    }
    write_csv_rows(
        &out.join("fig3_polar.csv"),
        &["epoch", "t", "neuron", "ln_norm", "px", "py"],
        &polar_rows,
    )?;
    println!(
        "figures 1-3: {} epochs, max jump rel error {:.5}",
        traj.epochs_run, report.jumps.max_rel_error
    );

    cmd_sweep_n(&[8, 16, 32, 64, 128, 256], 3, SweepMode::Alg, 0, out)?;
    fs::rename(out.join("sweep_n.csv"), out.join("fig4_scaling.csv"))?;
    fs::rename(out.join("sweep_n_summary.json"), out.join("fig4_fit.json"))?;

    cmd_sweep_m(32, &[8, 16, 32, 64], 3, 0, out)?;
    fs::rename(out.join("sweep_m.csv"), out.join("fig5_widths.csv"))?;

    println!("figures: all CSVs in {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------------

pub fn resolve_out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| std::env::var_os("SADDLEFLOW_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

pub fn apply_global_flags(
    mut config: RunConfig,
    seed: Option<u64>,
    strict: bool,
) -> RunConfig {
    if let Some(seed) = seed {
        if let DatasetSource::Generate(spec) = &mut config.dataset {
            spec.seed = seed;
        }
        config.init.seed = seed;
    }
    if strict {
        config.strict = true;
    }
    config
}
