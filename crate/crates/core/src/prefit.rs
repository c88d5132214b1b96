//! SLIP dataset collection and supervised pre-fitting of the actor.
//!
//! Each dataset row pairs the observation at control tick t with the
//! reference controller's target joint positions one control period
//! later (the command the controller issued at t + 0.01 s on the actual
//! rollout). The actor is then fitted by minimizing the MSE through a
//! three-phase optimizer schedule.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::control::{slip_reference, SlipParams};
use crate::env::{BoundEnv, EnvParams};
use crate::error::{BounderError, Result};
use crate::neural::{
    backprop, mse_loss, optimizer_step, Gradients, MlpSpec, NetworkWeights,
    OptimizerKind, OptimizerState,
};
use crate::observation::column_names;
use crate::reward::Termination;
use crate::rng::{derive_seed, Role, Stream};
use crate::robot::{RobotModel, NUM_JOINTS};
use crate::sim::Terrain;

/// Supervised dataset: observations and 12-joint position labels.
/// The first `train_rows` rows are the training split; the remainder is
/// validation (contiguous blocks, no shuffling).
#[derive(Debug, Clone, PartialEq)]
pub struct PrefitDataset {
    pub inputs: Array2<f64>,
    pub labels: Array2<f64>,
    pub train_rows: usize,
    pub column_names: Vec<String>,
}

impl PrefitDataset {
    pub fn rows(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn row_width(&self) -> usize {
        self.inputs.ncols() + self.labels.ncols()
    }

    pub fn train_split(&self) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
        (
            self.inputs.slice(ndarray::s![..self.train_rows, ..]),
            self.labels.slice(ndarray::s![..self.train_rows, ..]),
        )
    }

    pub fn validation_split(&self) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
        (
            self.inputs.slice(ndarray::s![self.train_rows.., ..]),
            self.labels.slice(ndarray::s![self.train_rows.., ..]),
        )
    }

    /// Mean over label columns of the population variance; the natural
    /// scale against which a fit MSE is judged.
    pub fn label_variance(&self) -> f64 {
        let n = self.labels.nrows() as f64;
        let mut acc = 0.0;
        for col in self.labels.axis_iter(Axis(1)) {
            let mean = col.sum() / n;
            acc += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        }
        acc / self.labels.ncols() as f64
    }

    /// Write the dataset as CSV: header row, then observation columns
    /// followed by label columns.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut out = String::new();
        let mut header: Vec<String> = self.column_names.clone();
        let legs = ["lf", "rf", "lh", "rh"];
        let slots = ["roll", "hip_pitch", "knee"];
        for leg in legs {
            for slot in slots {
                header.push(format!("label_{leg}_{slot}"));
            }
        }
        writeln!(out, "{}", header.join(",")).unwrap();
        for r in 0..self.rows() {
            let mut fields: Vec<String> = Vec::with_capacity(self.row_width());
            for v in self.inputs.row(r) {
                fields.push(format!("{v}"));
            }
            for v in self.labels.row(r) {
                fields.push(format!("{v}"));
            }
            writeln!(out, "{}", fields.join(",")).unwrap();
        }
        std::fs::write(path, out).map_err(|e| BounderError::io(path.display().to_string(), e))
    }

    /// Read a dataset CSV written by [`to_csv`](Self::to_csv).
    pub fn from_csv(path: &Path, train_fraction: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BounderError::io(path.display().to_string(), e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| BounderError::Data(format!("{}: empty dataset", path.display())))?;
        let names: Vec<String> = header.split(',').map(str::to_string).collect();
        let label_cols = NUM_JOINTS;
        if names.len() <= label_cols {
            return Err(BounderError::Data(format!(
                "{}: too few columns ({})",
                path.display(),
                names.len()
            )));
        }
        let obs_cols = names.len() - label_cols;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        let mut rows = 0usize;
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let values: Vec<f64> = line
                .split(',')
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| BounderError::Data(format!(
                        "{}: row {}: unparsable value {:?}",
                        path.display(),
                        i + 2,
                        tok
                    )))
                })
                .collect::<Result<_>>()?;
            if values.len() != names.len() {
                return Err(BounderError::Data(format!(
                    "{}: row {}: expected {} values, got {}",
                    path.display(),
                    i + 2,
                    names.len(),
                    values.len()
                )));
            }
            inputs.extend_from_slice(&values[..obs_cols]);
            labels.extend_from_slice(&values[obs_cols..]);
            rows += 1;
        }
        let inputs = Array2::from_shape_vec((rows, obs_cols), inputs).unwrap();
        let labels = Array2::from_shape_vec((rows, label_cols), labels).unwrap();
        let train_rows = split_point(rows, train_fraction);
        Ok(PrefitDataset {
            inputs,
            labels,
            train_rows,
            column_names: names[..obs_cols].to_vec(),
        })
    }
}

fn split_point(rows: usize, train_fraction: f64) -> usize {
    ((rows as f64) * train_fraction).floor() as usize
}

/// Collection options.
#[derive(Debug, Clone, Copy)]
pub struct CollectOptions {
    pub n_control_steps: usize,
    pub seed: u64,
    pub train_fraction: f64,
    /// Gaussian noise added to the applied reference commands (rad).
    /// Labels stay the clean corrective commands, so the dataset covers
    /// a tube around the nominal cycle instead of a single trajectory.
    pub action_noise_std: f64,
}

/// Roll the SLIP reference controller and record (observation, next
/// command) pairs. Episodes run on the nominal model and terrain with
/// seeded initial-pose perturbations; a fall aborts collection.
pub fn collect_dataset(
    opts: &CollectOptions,
    slip: &SlipParams,
    env_params: &EnvParams,
    model: &RobotModel,
    terrain: &Terrain,
) -> Result<PrefitDataset> {
    let control_dt = env_params.control_dt();
    let steps_per_episode =
        (env_params.termination.max_episode_duration / control_dt).round() as usize;
    let episodes = opts.n_control_steps.div_ceil(steps_per_episode);

    // Episodes are independent; collect in parallel, merge in seed order.
    let results: Vec<Result<(Vec<f64>, Vec<f64>, usize)>> = (0..episodes)
        .into_par_iter()
        .map(|ep| {
            collect_episode(
                derive_seed(opts.seed, Role::Collection, ep as u64),
                steps_per_episode,
                opts.action_noise_std,
                slip,
                env_params,
                model,
                terrain,
            )
            .map_err(|e| match e {
                BounderError::ReferenceFell { step, reason } => BounderError::ReferenceFell {
                    step: ep * steps_per_episode + step,
                    reason,
                },
                other => other,
            })
        })
        .collect();

    let obs_dim = env_params.feature.mode.dim();
    let mut inputs = Vec::with_capacity(opts.n_control_steps * obs_dim);
    let mut labels = Vec::with_capacity(opts.n_control_steps * NUM_JOINTS);
    let mut rows = 0usize;
    for r in results {
        let (i, l, n) = r?;
        let take = (opts.n_control_steps - rows).min(n);
        inputs.extend_from_slice(&i[..take * obs_dim]);
        labels.extend_from_slice(&l[..take * NUM_JOINTS]);
        rows += take;
        if rows == opts.n_control_steps {
            break;
        }
    }

    let inputs = Array2::from_shape_vec((rows, obs_dim), inputs).unwrap();
    let labels = Array2::from_shape_vec((rows, NUM_JOINTS), labels).unwrap();
    Ok(PrefitDataset {
        inputs,
        labels,
        train_rows: split_point(rows, opts.train_fraction),
        column_names: column_names(env_params.feature.mode),
    })
}

fn collect_episode(
    seed: u64,
    steps: usize,
    action_noise_std: f64,
    slip: &SlipParams,
    env_params: &EnvParams,
    model: &RobotModel,
    terrain: &Terrain,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    // Collection pins the gait phase at episode start: the standing
    // initial state is otherwise identical across episodes, and pairing
    // it with a random phase would alias one observation onto hundreds
    // of contradictory labels. Phase diversity still comes from the ~24
    // gait cycles inside each episode.
    let mut env_params = env_params.clone();
    env_params.reset_cfg.randomize_gait_phase = false;
    let mut env = BoundEnv::new(env_params.clone(), model.clone(), terrain.clone(), seed);
    let mut noise = Stream::seeded(seed ^ 0x6e6f_6973_655f_7631);
    let obs_dim = env_params.feature.mode.dim();
    let mut inputs = Vec::with_capacity(steps * obs_dim);
    let mut labels = Vec::with_capacity(steps * NUM_JOINTS);
    let mut pending_obs: Option<Vec<f64>> = None;

    for k in 0..steps {
        let obs = env.observe();
        let cmd = slip_reference(env.reference_time(), env.state(), slip, env.model());
        if let Some(prev) = pending_obs.take() {
            inputs.extend_from_slice(&prev);
            labels.extend_from_slice(&cmd.target_positions);
        }
        pending_obs = Some(obs.values);
        // Apply a perturbed command; the recorded label stays clean.
        let mut applied = cmd.target_positions;
        if action_noise_std > 0.0 {
            for a in &mut applied {
                *a += action_noise_std * noise.normal();
            }
        }
        let out = env.step_control(&applied)?;
        if let Termination::Fallen(reason) = out.termination {
            return Err(BounderError::ReferenceFell {
                step: k,
                reason: format!("{reason:?}"),
            });
        }
    }
    // Label for the final observation: the command the controller would
    // issue at the next tick on the reached state.
    let cmd = slip_reference(env.reference_time(), env.state(), slip, env.model());
    if let Some(prev) = pending_obs.take() {
        inputs.extend_from_slice(&prev);
        labels.extend_from_slice(&cmd.target_positions);
    }
    Ok((inputs, labels, steps))
}

/// One optimizer phase of the pre-fit schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePhase {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub iterations: usize,
}

/// Ordered optimizer phases. The default is the published three-phase
/// sequence: SGD 1e-2 x500, Adam 1e-3 x500, Adam 1e-4 x500.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSchedule {
    pub phases: Vec<SchedulePhase>,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule {
            phases: vec![
                SchedulePhase {
                    kind: OptimizerKind::Sgd,
                    learning_rate: 1e-2,
                    iterations: 500,
                },
                SchedulePhase {
                    kind: OptimizerKind::Adam,
                    learning_rate: 1e-3,
                    iterations: 500,
                },
                SchedulePhase {
                    kind: OptimizerKind::Adam,
                    learning_rate: 1e-4,
                    iterations: 500,
                },
            ],
        }
    }
}

impl TrainingSchedule {
    pub fn total_iterations(&self) -> usize {
        self.phases.iter().map(|p| p.iterations).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(BounderError::Config("schedule has no phases".into()));
        }
        for p in &self.phases {
            if p.iterations == 0 || !(p.learning_rate > 0.0) {
                return Err(BounderError::Config(
                    "schedule phases need positive iterations and learning rate".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Batch regime for the pre-fit gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    Full,
    Minibatch(usize),
}

/// Pre-fit outcome: fitted weights, per-iteration train MSE, and the
/// validation MSE after each phase.
#[derive(Debug, Clone)]
pub struct PrefitResult {
    pub weights: NetworkWeights,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
}

/// Fit `spec` to the dataset's training split through the schedule.
pub fn run_prefit(
    dataset: &PrefitDataset,
    schedule: &TrainingSchedule,
    spec: &MlpSpec,
    init_seed: u64,
    batch: BatchMode,
) -> Result<PrefitResult> {
    schedule.validate()?;
    if dataset.rows() == 0 {
        return Err(BounderError::Data("dataset is empty".into()));
    }
    if spec.input_dim() != dataset.inputs.ncols() {
        return Err(BounderError::Dimension {
            expected: dataset.inputs.ncols(),
            got: spec.input_dim(),
            context: "network input width vs dataset".into(),
        });
    }

    let mut stream = Stream::derived(init_seed, Role::NetworkInit, 0);
    let mut weights = NetworkWeights::init(spec, &mut stream);
    let (train_x, train_y) = dataset.train_split();
    let train_x = train_x.to_owned();
    let train_y = train_y.to_owned();

    let mut train_loss = Vec::with_capacity(schedule.total_iterations());
    let mut validation_loss = Vec::with_capacity(schedule.phases.len());
    let mut cursor = 0usize;

    for (phase_idx, phase) in schedule.phases.iter().enumerate() {
        let mut opt = OptimizerState::new(phase.kind, phase.learning_rate);
        for it in 0..phase.iterations {
            let (loss, grads) = match batch {
                BatchMode::Full => batch_loss_and_grads(&weights, &train_x.view(), &train_y.view()),
                BatchMode::Minibatch(size) => {
                    let n = train_x.nrows();
                    let size = size.min(n);
                    let start = cursor % n;
                    let end = (start + size).min(n);
                    cursor = end % n;
                    let x = train_x.slice(ndarray::s![start..end, ..]);
                    let y = train_y.slice(ndarray::s![start..end, ..]);
                    batch_loss_and_grads(&weights, &x, &y)
                }
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(BounderError::Divergence {
                    phase: phase_idx,
                    iteration: it,
                });
            }
            train_loss.push(loss);
            optimizer_step(&mut opt, &mut weights, &grads);
        }
        let (val_x, val_y) = dataset.validation_split();
        let val = if val_x.nrows() > 0 {
            mse_loss(&weights.forward_batch(&val_x.to_owned()), &val_y.to_owned())
        } else {
            f64::NAN
        };
        validation_loss.push(val);
    }

    Ok(PrefitResult {
        weights,
        train_loss,
        validation_loss,
    })
}

/// MSE and parameter gradients over a batch, computed in fixed-size
/// chunks that are reduced in order (parallel but bit-deterministic for
/// any worker count).
pub fn batch_loss_and_grads(
    weights: &NetworkWeights,
    x: &ArrayView2<'_, f64>,
    y: &ArrayView2<'_, f64>,
) -> (f64, Gradients) {
    const CHUNK: usize = 4096;
    let n = x.nrows();
    let m = y.ncols() as f64;
    let ranges: Vec<(usize, usize)> = (0..n.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect();

    let partials: Vec<(f64, Gradients)> = ranges
        .par_iter()
        .map(|&(lo, hi)| {
            let xc = x.slice(ndarray::s![lo..hi, ..]).to_owned();
            let yc = y.slice(ndarray::s![lo..hi, ..]).to_owned();
            let cache = weights.forward_cached(&xc);
            let diff = cache.output() - &yc;
            let sq_sum = diff.mapv(|v| v * v).sum();
            // Gradient of the unnormalized sum of per-row mean squared
            // errors; normalized by row count after the reduction.
            let out_grad = diff * (2.0 / m);
            let grads = backprop(weights, &cache, &out_grad);
            (sq_sum / m, grads)
        })
        .collect();

    let mut total = Gradients::zeros_like(weights);
    let mut loss_sum = 0.0;
    for (l, g) in &partials {
        loss_sum += l;
        total.add(g);
    }
    total.scale(1.0 / n as f64);
    (loss_sum / n as f64, total)
}

/// Mean over rows of the mean squared per-joint error.
pub fn evaluate_mse(
    weights: &NetworkWeights,
    inputs: &ArrayView2<'_, f64>,
    labels: &ArrayView2<'_, f64>,
) -> f64 {
    mse_loss(
        &weights.forward_batch(&inputs.to_owned()),
        &labels.to_owned(),
    )
}
