//! Episode traces and gait-quality metrics.
//!
//! Traces are CSVs with one row per control step. Metrics cover the
//! quantities plotted in locomotion evaluations: forward speed, CoM
//! height statistics (population standard deviation), the dominant
//! contact frequency via autocorrelation, the front/hind contact phase
//! difference via cross-correlation, and the fall rate.

use std::path::Path;

use crate::error::{BounderError, Result};
use crate::reward::RewardBreakdown;
use crate::robot::{NUM_JOINTS, NUM_LEGS};
use crate::sim::SimState;

/// One control step of an episode trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub time: f64,
    pub torso_x: f64,
    pub torso_z: f64,
    pub pitch: f64,
    pub torso_vx: f64,
    pub torso_vz: f64,
    pub pitch_rate: f64,
    pub joint_positions: [f64; NUM_JOINTS],
    pub joint_velocities: [f64; NUM_JOINTS],
    pub torques: [f64; NUM_JOINTS],
    pub contacts: [u8; NUM_LEGS],
    pub reward: RewardBreakdown,
}

impl TraceRow {
    pub fn from_state(
        state: &SimState,
        torques: &[f64; NUM_JOINTS],
        reward: &RewardBreakdown,
        time: f64,
    ) -> Self {
        TraceRow {
            time,
            torso_x: state.torso_x,
            torso_z: state.torso_z,
            pitch: state.pitch,
            torso_vx: state.torso_vx,
            torso_vz: state.torso_vz,
            pitch_rate: state.pitch_rate,
            joint_positions: state.joint_positions(),
            joint_velocities: state.joint_velocities(),
            torques: *torques,
            contacts: state.contact_flags,
            reward: *reward,
        }
    }
}

/// A full episode recorded at the control rate.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTrace {
    pub rows: Vec<TraceRow>,
}

const LEG_NAMES: [&str; 4] = ["lf", "rf", "lh", "rh"];
const SLOT_NAMES: [&str; 3] = ["roll", "hip_pitch", "knee"];
const REWARD_NAMES: [&str; 9] = [
    "rew_body_velocity",
    "rew_joint_torque",
    "rew_joint_velocity",
    "rew_gait",
    "rew_position_uniformity",
    "rew_torque_uniformity",
    "rew_smoothness",
    "rew_pitch_limitation",
    "rew_total",
];

fn trace_header() -> String {
    let mut cols = vec![
        "time".to_string(),
        "torso_x".into(),
        "torso_z".into(),
        "pitch".into(),
        "torso_vx".into(),
        "torso_vz".into(),
        "pitch_rate".into(),
    ];
    for prefix in ["q", "dq", "tau"] {
        for leg in LEG_NAMES {
            for slot in SLOT_NAMES {
                cols.push(format!("{prefix}_{leg}_{slot}"));
            }
        }
    }
    for leg in LEG_NAMES {
        cols.push(format!("contact_{leg}"));
    }
    cols.extend(REWARD_NAMES.iter().map(|s| s.to_string()));
    cols.join(",")
}

impl EpisodeTrace {
    pub fn control_dt(&self) -> f64 {
        if self.rows.len() >= 2 {
            self.rows[1].time - self.rows[0].time
        } else {
            0.01
        }
    }

    pub fn duration(&self) -> f64 {
        self.rows.last().map(|r| r.time).unwrap_or(0.0)
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut out = String::new();
        writeln!(out, "{}", trace_header()).unwrap();
        for r in &self.rows {
            let mut f: Vec<String> = vec![
                format!("{}", r.time),
                format!("{}", r.torso_x),
                format!("{}", r.torso_z),
                format!("{}", r.pitch),
                format!("{}", r.torso_vx),
                format!("{}", r.torso_vz),
                format!("{}", r.pitch_rate),
            ];
            f.extend(r.joint_positions.iter().map(|v| format!("{v}")));
            f.extend(r.joint_velocities.iter().map(|v| format!("{v}")));
            f.extend(r.torques.iter().map(|v| format!("{v}")));
            f.extend(r.contacts.iter().map(|v| format!("{v}")));
            let terms = r.reward.terms();
            f.extend(terms.iter().map(|v| format!("{v}")));
            f.push(format!("{}", r.reward.total));
            writeln!(out, "{}", f.join(",")).unwrap();
        }
        std::fs::write(path, out).map_err(|e| BounderError::io(path.display().to_string(), e))
    }

    pub fn from_csv(path: &Path) -> Result<EpisodeTrace> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BounderError::io(path.display().to_string(), e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| BounderError::Data(format!("{}: empty trace", path.display())))?;
        if header != trace_header() {
            return Err(BounderError::Data(format!(
                "{}: trace schema mismatch",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        BounderError::Data(format!(
                            "{}: row {}: unparsable value {:?}",
                            path.display(),
                            i + 2,
                            tok
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let expected = 7 + 3 * NUM_JOINTS + NUM_LEGS + REWARD_NAMES.len();
            if v.len() != expected {
                return Err(BounderError::Data(format!(
                    "{}: row {}: expected {} columns, got {}",
                    path.display(),
                    i + 2,
                    expected,
                    v.len()
                )));
            }
            let mut row = TraceRow {
                time: v[0],
                torso_x: v[1],
                torso_z: v[2],
                pitch: v[3],
                torso_vx: v[4],
                torso_vz: v[5],
                pitch_rate: v[6],
                joint_positions: [0.0; NUM_JOINTS],
                joint_velocities: [0.0; NUM_JOINTS],
                torques: [0.0; NUM_JOINTS],
                contacts: [0; NUM_LEGS],
                reward: RewardBreakdown::default(),
            };
            let mut k = 7;
            for slot in 0..NUM_JOINTS {
                row.joint_positions[slot] = v[k + slot];
            }
            k += NUM_JOINTS;
            for slot in 0..NUM_JOINTS {
                row.joint_velocities[slot] = v[k + slot];
            }
            k += NUM_JOINTS;
            for slot in 0..NUM_JOINTS {
                row.torques[slot] = v[k + slot];
            }
            k += NUM_JOINTS;
            for leg in 0..NUM_LEGS {
                row.contacts[leg] = if v[k + leg] != 0.0 { 1 } else { 0 };
            }
            k += NUM_LEGS;
            row.reward.body_velocity = v[k];
            row.reward.joint_torque = v[k + 1];
            row.reward.joint_velocity = v[k + 2];
            row.reward.gait = v[k + 3];
            row.reward.position_uniformity = v[k + 4];
            row.reward.torque_uniformity = v[k + 5];
            row.reward.smoothness = v[k + 6];
            row.reward.pitch_limitation = v[k + 7];
            row.reward.total = v[k + 8];
            rows.push(row);
        }
        Ok(EpisodeTrace { rows })
    }
}

/// Gait-quality metrics over one or more traces.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub mean_forward_speed: f64,
    pub com_height_min: f64,
    pub com_height_max: f64,
    /// Population standard deviation, pooled over all traces.
    pub com_height_stddev: f64,
    pub per_episode_com_stddev: Vec<f64>,
    pub dominant_contact_frequency: f64,
    /// Front/hind contact phase difference as a fraction of a period.
    pub pair_phase_difference: f64,
    pub falls_per_minute: f64,
    pub episodes: usize,
}

/// Height extractor: torso origin by default, full multi-body CoM when a
/// model is supplied.
pub enum HeightEstimator<'a> {
    TorsoOrigin,
    FullCom(&'a crate::robot::RobotModel),
}

fn row_height(row: &TraceRow, estimator: &HeightEstimator<'_>) -> f64 {
    match estimator {
        HeightEstimator::TorsoOrigin => row.torso_z,
        HeightEstimator::FullCom(model) => {
            let mut state = SimState {
                torso_x: row.torso_x,
                torso_z: row.torso_z,
                pitch: row.pitch,
                torso_vx: row.torso_vx,
                torso_vz: row.torso_vz,
                pitch_rate: row.pitch_rate,
                planar_joint_angles: [0.0; 8],
                planar_joint_velocities: [0.0; 8],
                roll_servo_angles: [0.0; 4],
                roll_servo_velocities: [0.0; 4],
                contact_flags: row.contacts,
                contact_forces: [0.0; 4],
                time: row.time,
                steps: 0,
            };
            for leg in 0..NUM_LEGS {
                state.planar_joint_angles[2 * leg] = row.joint_positions[3 * leg + 1];
                state.planar_joint_angles[2 * leg + 1] = row.joint_positions[3 * leg + 2];
                state.roll_servo_angles[leg] = row.joint_positions[3 * leg];
            }
            crate::sim::full_com_height(&state, model)
        }
    }
}

/// Compute the metrics report.
pub fn compute_metrics(
    traces: &[EpisodeTrace],
    max_episode_duration: f64,
    estimator: HeightEstimator<'_>,
) -> Result<MetricsReport> {
    if traces.is_empty() || traces.iter().any(|t| t.rows.is_empty()) {
        return Err(BounderError::Data("metrics need at least one non-empty trace".into()));
    }

    // Pooled speed: total displacement over total observed time.
    let mut displacement = 0.0;
    let mut observed_time = 0.0;
    // Episode time (from t = 0) for the fall rate.
    let mut episode_time = 0.0;
    for t in traces {
        displacement += t.rows.last().unwrap().torso_x - t.rows.first().unwrap().torso_x;
        observed_time += t.duration() - t.rows.first().unwrap().time;
        episode_time += t.duration();
    }
    let mean_forward_speed = if observed_time > 0.0 {
        displacement / observed_time
    } else {
        0.0
    };

    // CoM height statistics (two-pass population variance).
    let mut heights: Vec<f64> = Vec::new();
    let mut per_episode_std = Vec::with_capacity(traces.len());
    for t in traces {
        let hs: Vec<f64> = t.rows.iter().map(|r| row_height(r, &estimator)).collect();
        per_episode_std.push(population_stddev(&hs));
        heights.extend(hs);
    }
    let com_min = heights.iter().cloned().fold(f64::INFINITY, f64::min);
    let com_max = heights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let com_std = population_stddev(&heights);

    // Dominant contact frequency: mean over feet and traces of the first
    // autocorrelation peak.
    let mut freq_estimates = Vec::new();
    for t in traces {
        let dt = t.control_dt();
        for leg in 0..NUM_LEGS {
            let signal: Vec<f64> = t.rows.iter().map(|r| r.contacts[leg] as f64).collect();
            if let Some(lag) = first_autocorrelation_peak(&signal) {
                freq_estimates.push(1.0 / (lag as f64 * dt));
            }
        }
    }
    let dominant = if freq_estimates.is_empty() {
        0.0
    } else {
        freq_estimates.iter().sum::<f64>() / freq_estimates.len() as f64
    };

    // Front/hind phase difference from the cross-correlation lag.
    let mut phase_estimates = Vec::new();
    if dominant > 0.0 {
        for t in traces {
            let dt = t.control_dt();
            let period_samples = (1.0 / (dominant * dt)).round() as usize;
            if period_samples < 4 || t.rows.len() < 3 * period_samples {
                continue;
            }
            let front: Vec<f64> = t
                .rows
                .iter()
                .map(|r| (r.contacts[0] as f64 + r.contacts[1] as f64) / 2.0)
                .collect();
            let hind: Vec<f64> = t
                .rows
                .iter()
                .map(|r| (r.contacts[2] as f64 + r.contacts[3] as f64) / 2.0)
                .collect();
            if let Some(lag) = best_cross_correlation_lag(&front, &hind, period_samples) {
                phase_estimates.push(lag as f64 / period_samples as f64);
            }
        }
    }
    let pair_phase = if phase_estimates.is_empty() {
        f64::NAN
    } else {
        phase_estimates.iter().sum::<f64>() / phase_estimates.len() as f64
    };

    // Falls: episodes ending before the configured maximum duration.
    let dt = traces[0].control_dt();
    let falls = traces
        .iter()
        .filter(|t| t.duration() < max_episode_duration - dt / 2.0)
        .count();
    let falls_per_minute = if episode_time > 0.0 {
        falls as f64 / (episode_time / 60.0)
    } else {
        0.0
    };

    Ok(MetricsReport {
        mean_forward_speed,
        com_height_min: com_min,
        com_height_max: com_max,
        com_height_stddev: com_std,
        per_episode_com_stddev: per_episode_std,
        dominant_contact_frequency: dominant,
        pair_phase_difference: pair_phase,
        falls_per_minute,
        episodes: traces.len(),
    })
}

/// Two-pass population standard deviation.
pub fn population_stddev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// First local maximum of the (de-meaned, normalized) autocorrelation at
/// positive lag; None for flat signals.
fn first_autocorrelation_peak(signal: &[f64]) -> Option<usize> {
    let n = signal.len();
    if n < 8 {
        return None;
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = signal.iter().map(|v| v - mean).collect();
    let r0: f64 = centered.iter().map(|v| v * v).sum();
    if r0 <= 1e-12 {
        return None;
    }
    let max_lag = n / 2;
    let r = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for t in lag..n {
            acc += centered[t] * centered[t - lag];
        }
        acc / r0
    };
    let values: Vec<f64> = (0..=max_lag).map(r).collect();
    for lag in 2..max_lag {
        if values[lag] > 0.2 && values[lag] >= values[lag - 1] && values[lag] >= values[lag + 1] {
            // Refine plateaus to their center.
            let mut hi = lag;
            while hi + 1 <= max_lag && values[hi + 1] == values[lag] {
                hi += 1;
            }
            return Some((lag + hi) / 2);
        }
    }
    None
}

/// Lag in [0, period) by which the second signal trails the first,
/// maximizing the overlap-normalized cross-correlation.
fn best_cross_correlation_lag(first: &[f64], second: &[f64], period: usize) -> Option<usize> {
    let n = first.len().min(second.len());
    if n <= period {
        return None;
    }
    let mean_f = first.iter().take(n).sum::<f64>() / n as f64;
    let mean_s = second.iter().take(n).sum::<f64>() / n as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for lag in 0..period {
        let mut acc = 0.0;
        for t in lag..n {
            acc += (first[t] - mean_f) * (second[t - lag] - mean_s);
        }
        let score = acc / (n - lag) as f64;
        if score > best.1 {
            best = (lag, score);
        }
    }
    Some(best.0)
}
