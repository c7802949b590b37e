//! Full-batch gradient-descent training loops (explicit Euler on the flow),
//! trajectory recording, fit events, and accelerated-time conversion.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{dot, norm, Basis, OrthonormalDataset};
use crate::error::{Error, Result};
use crate::init::InitDraw;
use crate::network::DenseNetwork;
use crate::scaled::{EpochEval, ScaledNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    /// Learning rate per epoch.
    pub lr: f64,
    pub max_epochs: u64,
    /// Stop as soon as the loss drops below this.
    pub loss_stop: f64,
    /// Epochs between regular trajectory samples (fit events always sample).
    pub record_every: u64,
    /// A datum counts as fitted once h(x_i) / y_i reaches this fraction.
    pub fit_threshold: f64,
    /// Include residual columns when streaming the trajectory to CSV.
    pub record_residuals: bool,
    /// Keep normalized per-neuron directions in every sample.
    pub record_directions: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            max_epochs: 10_000_000,
            loss_stop: 1e-20,
            record_every: 1000,
            fit_threshold: 0.5,
            record_residuals: false,
            record_directions: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::DimensionMismatch(format!("lr = {} must be > 0", self.lr)));
        }
        if self.loss_stop.is_nan() || self.loss_stop < 0.0 {
            return Err(Error::DimensionMismatch("loss_stop must be >= 0".into()));
        }
        if !(self.fit_threshold > 0.0 && self.fit_threshold < 1.0) {
            return Err(Error::DimensionMismatch(format!(
                "fit_threshold = {} must be in (0, 1)",
                self.fit_threshold
            )));
        }
        if self.record_every == 0 {
            return Err(Error::DimensionMismatch("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// One recorded point of a training run (state before the step at `epoch`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub epoch: u64,
    /// Accelerated time epoch * lr / (-alpha_log); NaN when no scale applies.
    pub time: f64,
    pub loss: f64,
    /// ln |w_j| per neuron.
    pub log_w_norms: Vec<f64>,
    /// ln |a_j| per neuron.
    pub log_a_norms: Vec<f64>,
    pub residuals: Vec<f64>,
    /// |fD_j| per neuron at this epoch.
    pub fd_norms: Vec<f64>,
    /// Whether each datum currently satisfies the fit-ratio test.
    pub fit_flags: Vec<bool>,
    /// Unit directions of the hidden weights, if requested.
    pub directions: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Loss dropped below `loss_stop`.
    Converged,
    /// Ran out of epochs.
    Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    pub labels: Vec<f64>,
    pub lr: f64,
    pub alpha_log: Option<f64>,
    pub fit_threshold: f64,
    pub samples: Vec<Sample>,
    /// First epoch at which each datum reached the fit threshold.
    pub fit_events: Vec<Option<u64>>,
    pub stop: StopReason,
    pub epochs_run: u64,
    pub final_loss: f64,
    pub final_half_sq_norm: f64,
}

impl Trajectory {
    /// Stream samples as CSV: epoch, t, loss, ln|w_j| per neuron, then
    /// optionally the residuals. '.' decimals, LF line endings, header row.
    pub fn write_csv<W: Write>(&self, out: W, include_residuals: bool) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["epoch".to_string(), "t".to_string(), "loss".to_string()];
        header.extend((1..=self.m).map(|j| format!("lnw_{j}")));
        if include_residuals {
            header.extend((1..=self.n).map(|i| format!("r_{i}")));
        }
        wtr.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.epoch.to_string(), fmt(s.time), fmt(s.loss)];
            row.extend(s.log_w_norms.iter().map(|v| fmt(*v)));
            if include_residuals {
                row.extend(s.residuals.iter().map(|v| fmt(*v)));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    // ryu-style shortest representation, stable across platforms
    let mut buf = ryu_format(v);
    if buf == "-0" {
        buf = "0".into();
    }
    buf
}

fn ryu_format(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// Convert an epoch count to accelerated time t = epoch * lr / (-alpha_log).
pub fn accelerated_time(epoch: u64, lr: f64, alpha_log: f64) -> Result<f64> {
    accelerated_time_f(epoch as f64, lr, alpha_log)
}

/// Float-epoch variant, used for cluster representatives.
pub fn accelerated_time_f(epoch: f64, lr: f64, alpha_log: f64) -> Result<f64> {
    if alpha_log >= 0.0 {
        return Err(Error::BadScale { alpha_log });
    }
    Ok(epoch * lr / (-alpha_log))
}

/// Recompute fit events at sample resolution for an arbitrary threshold:
/// the first recorded sample whose ratio h(x_i)/y_i reaches the threshold.
/// Data with zero labels never fire.
pub fn fit_events(traj: &Trajectory, threshold: f64) -> Result<Vec<Option<u64>>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::DimensionMismatch(format!(
            "threshold = {threshold} must be in (0, 1)"
        )));
    }
    let mut events = vec![None; traj.n];
    for s in &traj.samples {
        for ((event, &y), &r) in events.iter_mut().zip(&traj.labels).zip(&s.residuals) {
            if event.is_some() || y == 0.0 {
                continue;
            }
            if (r + y) / y >= threshold {
                *event = Some(s.epoch);
            }
        }
    }
    Ok(events)
}

/// Per-neuron dynamical vectors and the fitted-data error vector, in data
/// coordinates (coefficients over the x_i).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientDiagnostics {
    /// fD_j = -(1/n) sum over active i of r_i x_i.
    pub fd: Vec<Vec<f64>>,
    /// E = -(1/n) sum over the supplied fitted set of r_i x_i.
    pub e_fitted: Vec<f64>,
}

impl GradientDiagnostics {
    pub fn compute(
        residuals: &[f64],
        active_sets: &[Vec<usize>],
        fitted: &[usize],
    ) -> Self {
        let n = residuals.len();
        let nf = n as f64;
        let fd = active_sets
            .iter()
            .map(|set| {
                let mut v = vec![0.0; n];
                for &i in set {
                    v[i] = -residuals[i] / nf;
                }
                v
            })
            .collect();
        let mut e_fitted = vec![0.0; n];
        for &i in fitted {
            e_fitted[i] = -residuals[i] / nf;
        }
        Self { fd, e_fitted }
    }

    pub fn fd_norms(&self) -> Vec<f64> {
        self.fd.iter().map(|v| norm(v)).collect()
    }
}

/// |fD_j| per neuron straight from residuals and active sets; with
/// orthonormal inputs |fD_j|^2 = (1/n^2) sum over active i of r_i^2.
fn fd_norms_from(residuals: &[f64], active: impl Iterator<Item = Vec<usize>>) -> Vec<f64> {
    let nf = residuals.len() as f64;
    active
        .map(|set| {
            let s: f64 = set.iter().map(|&i| residuals[i] * residuals[i]).sum();
            s.sqrt() / nf
        })
        .collect()
}

// Abstraction over the two trainable representations so the loop, recording
// and stopping logic exist once.
trait GdModel {
    fn evaluate(&self, data: &OrthonormalDataset) -> EpochEval;
    fn apply_step(
        &mut self,
        data: &OrthonormalDataset,
        lr: f64,
        eval: &EpochEval,
        epoch: u64,
    ) -> Result<()>;
    fn log_w_norms(&self) -> Vec<f64>;
    fn log_a_norms(&self) -> Vec<f64>;
    fn active_sets(&self, data: &OrthonormalDataset) -> Vec<Vec<usize>>;
    fn half_sq_norm(&self) -> f64;
    fn unit_directions(&self) -> Vec<Vec<f64>>;
}

impl GdModel for ScaledNetwork {
    fn evaluate(&self, data: &OrthonormalDataset) -> EpochEval {
        ScaledNetwork::evaluate(self, data)
    }
    fn apply_step(
        &mut self,
        data: &OrthonormalDataset,
        lr: f64,
        eval: &EpochEval,
        epoch: u64,
    ) -> Result<()> {
        ScaledNetwork::apply_step(self, data, lr, eval, epoch)
    }
    fn log_w_norms(&self) -> Vec<f64> {
        self.neurons.iter().map(|nr| nr.log_w_norm()).collect()
    }
    fn log_a_norms(&self) -> Vec<f64> {
        self.neurons.iter().map(|nr| nr.log_a_abs()).collect()
    }
    fn active_sets(&self, data: &OrthonormalDataset) -> Vec<Vec<usize>> {
        ScaledNetwork::active_sets(self, data)
    }
    fn half_sq_norm(&self) -> f64 {
        ScaledNetwork::half_sq_norm(self)
    }
    fn unit_directions(&self) -> Vec<Vec<f64>> {
        self.neurons
            .iter()
            .map(|nr| {
                let nrm = norm(&nr.v);
                nr.v.iter().map(|x| x / nrm).collect()
            })
            .collect()
    }
}

impl GdModel for DenseNetwork {
    fn evaluate(&self, data: &OrthonormalDataset) -> EpochEval {
        let n = data.n();
        let mut outputs = vec![0.0; n];
        let preacts = match data.basis() {
            Basis::Identity => {
                for (a, w) in self.a.iter().zip(&self.w) {
                    for (h, &z) in outputs.iter_mut().zip(w) {
                        if z > 0.0 {
                            *h += a * z;
                        }
                    }
                }
                None
            }
            Basis::Explicit(_) => {
                let z: Vec<Vec<f64>> = self
                    .w
                    .iter()
                    .map(|w| (0..n).map(|i| data.dot_input(i, w)).collect())
                    .collect();
                for ((a, _), zs) in self.a.iter().zip(&self.w).zip(&z) {
                    for (h, &zi) in outputs.iter_mut().zip(zs) {
                        if zi > 0.0 {
                            *h += a * zi;
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

    fn apply_step(
        &mut self,
        data: &OrthonormalDataset,
        lr: f64,
        eval: &EpochEval,
        epoch: u64,
    ) -> Result<()> {
        let nf = data.n() as f64;
        let r = &eval.residuals;
        for j in 0..self.a.len() {
            let a_old = self.a[j];
            match data.basis() {
                Basis::Identity => {
                    let w = &mut self.w[j];
                    let mut g = 0.0;
                    for (i, &ri) in r.iter().enumerate() {
                        if w[i] > 0.0 {
                            g += (-ri / nf) * w[i];
                        }
                    }
                    for (i, &ri) in r.iter().enumerate() {
                        if w[i] > 0.0 {
                            w[i] += lr * a_old * (-ri / nf);
                        }
                    }
                    self.a[j] += lr * g;
                }
                Basis::Explicit(_) => {
                    let z = &eval.preacts.as_ref().expect("explicit basis keeps preacts")[j];
                    let d = self.w[j].len();
                    let mut fd = vec![0.0; d];
                    for (i, &ri) in r.iter().enumerate() {
                        if z[i] > 0.0 {
                            data.add_input(i, -ri / nf, &mut fd);
                        }
                    }
                    let g = dot(&fd, &self.w[j]);
                    for (wx, fx) in self.w[j].iter_mut().zip(&fd) {
                        *wx += lr * a_old * fx;
                    }
                    self.a[j] += lr * g;
                }
            }
            let wn2 = dot(&self.w[j], &self.w[j]);
            if !wn2.is_finite() || !self.a[j].is_finite() {
                return Err(Error::NonFinite { index: j, epoch });
            }
        }
        Ok(())
    }

    fn log_w_norms(&self) -> Vec<f64> {
        self.w.iter().map(|w| norm(w).ln()).collect()
    }
    fn log_a_norms(&self) -> Vec<f64> {
        self.a.iter().map(|a| a.abs().ln()).collect()
    }
    fn active_sets(&self, data: &OrthonormalDataset) -> Vec<Vec<usize>> {
        self.w
            .iter()
            .map(|w| {
                (0..data.n())
                    .filter(|&i| data.dot_input(i, w) > 0.0)
                    .collect()
            })
            .collect()
    }
    fn half_sq_norm(&self) -> f64 {
        DenseNetwork::half_sq_norm(self)
    }
    fn unit_directions(&self) -> Vec<Vec<f64>> {
        self.w
            .iter()
            .map(|w| {
                let nrm = norm(w);
                if nrm == 0.0 {
                    vec![0.0; w.len()]
                } else {
                    w.iter().map(|x| x / nrm).collect()
                }
            })
            .collect()
    }
}

fn train_loop<M: GdModel>(
    mut model: M,
    data: &OrthonormalDataset,
    config: &TrainerConfig,
    alpha_log: Option<f64>,
) -> Result<(Trajectory, M)> {
    config.validate()?;
    let n = data.n();
    let m = model.log_w_norms().len();
    let labels = data.labels().to_vec();
    let mut fit_events: Vec<Option<u64>> = vec![None; n];
    let mut samples = Vec::new();

    let time_of = |epoch: u64| -> f64 {
        match alpha_log {
            Some(al) if al < 0.0 => epoch as f64 * config.lr / (-al),
            _ => f64::NAN,
        }
    };

    let mut epoch: u64 = 0;
    let (stop, final_loss) = loop {
        let eval = model.evaluate(data);

        let mut new_fit = false;
        let mut fit_flags = vec![false; n];
        for i in 0..n {
            if labels[i] == 0.0 {
                continue;
            }
            let ratio = eval.outputs[i] / labels[i];
            fit_flags[i] = ratio >= config.fit_threshold;
            if fit_flags[i] && fit_events[i].is_none() {
                fit_events[i] = Some(epoch);
                new_fit = true;
            }
        }

        let converged = eval.loss < config.loss_stop;
        let exhausted = epoch >= config.max_epochs;
        if new_fit || converged || exhausted || epoch % config.record_every == 0 {
            samples.push(Sample {
                epoch,
                time: time_of(epoch),
                loss: eval.loss,
                log_w_norms: model.log_w_norms(),
                log_a_norms: model.log_a_norms(),
                residuals: eval.residuals.clone(),
                fd_norms: fd_norms_from(
                    &eval.residuals,
                    model.active_sets(data).into_iter(),
                ),
                fit_flags,
                directions: config.record_directions.then(|| model.unit_directions()),
            });
        }
        if converged {
            break (StopReason::Converged, eval.loss);
        }
        if exhausted {
            break (StopReason::Budget, eval.loss);
        }
        model.apply_step(data, config.lr, &eval, epoch)?;
        epoch += 1;
    };

    let trajectory = Trajectory {
        n,
        m,
        labels,
        lr: config.lr,
        alpha_log,
        fit_threshold: config.fit_threshold,
        samples,
        fit_events,
        stop,
        epochs_run: epoch,
        final_loss,
        final_half_sq_norm: model.half_sq_norm(),
    };
    Ok((trajectory, model))
}

/// A finished log-domain training run.
pub struct ScaledRun {
    pub trajectory: Trajectory,
    pub network: ScaledNetwork,
}

/// Train from a balanced draw in the log-domain representation.
pub fn train(
    data: &OrthonormalDataset,
    init: &InitDraw,
    config: &TrainerConfig,
) -> Result<ScaledRun> {
    if init.d != data.d() {
        return Err(Error::DimensionMismatch(format!(
            "init d = {}, dataset d = {}",
            init.d,
            data.d()
        )));
    }
    let (trajectory, network) =
        train_loop(ScaledNetwork::from_init(init), data, config, Some(init.alpha_log))?;
    Ok(ScaledRun {
        trajectory,
        network,
    })
}

/// A finished plain-float training run.
pub struct DenseRun {
    pub trajectory: Trajectory,
    pub network: DenseNetwork,
}

/// Train a plain-float network (moderate scales or He initialization).
/// `alpha_log` only feeds the accelerated-time column of the trajectory.
pub fn train_dense(
    data: &OrthonormalDataset,
    network: DenseNetwork,
    config: &TrainerConfig,
    alpha_log: Option<f64>,
) -> Result<DenseRun> {
    if network.d() != data.d() {
        return Err(Error::DimensionMismatch(format!(
            "network d = {}, dataset d = {}",
            network.d(),
            data.d()
        )));
    }
    let (trajectory, network) = train_loop(network, data, config, alpha_log)?;
    Ok(DenseRun {
        trajectory,
        network,
    })
}
