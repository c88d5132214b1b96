//! Observation vector construction and feature engineering.
//!
//! Raw layout (34 slots):
//!
//! | slots | content |
//! |-------|---------|
//! | 0     | body height, m |
//! | 1:4   | world z-axis expressed in the robot frame |
//! | 4:16  | joint positions, LF RF LH RH x (roll, hip-pitch, knee) |
//! | 16:19 | body angular velocity, rad/s |
//! | 19:22 | body linear acceleration, m/s^2 (finite-differenced IMU) |
//! | 22:34 | joint angular velocities, rad/s |
//!
//! Engineered mode (30 slots) removes the eight hip-pitch/knee position
//! slots and inserts four front-minus-hind differences, pairing each
//! front leg with the same-side hind leg: slots 4:8 are the roll
//! positions, 8:12 the differences (LF-LH hip-pitch, LF-LH knee,
//! RF-RH hip-pitch, RF-RH knee); everything else passes through in
//! order.

use crate::error::{BounderError, Result};
use crate::robot::RobotModel;
use crate::sim::SimState;

pub const RAW_DIM: usize = 34;
pub const ENGINEERED_DIM: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    #[default]
    Raw,
    Engineered,
}

impl FeatureMode {
    pub fn dim(self) -> usize {
        match self {
            FeatureMode::Raw => RAW_DIM,
            FeatureMode::Engineered => ENGINEERED_DIM,
        }
    }
}

/// Observation configuration. The joint ordering is fixed for the
/// lifetime of a trained network: LF, RF, LH, RH; within each leg
/// (roll, hip-pitch, knee).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
}

/// The state vector handed to the networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVector {
    pub values: Vec<f64>,
}

/// Builds observations for one environment. Carries the one-sample
/// velocity cache behind the finite-differenced IMU acceleration.
#[derive(Debug, Clone)]
pub struct ObservationBuilder {
    cfg: FeatureConfig,
    /// Control period over which the acceleration is differenced.
    control_dt: f64,
    prev_velocity: Option<(f64, f64)>,
}

impl ObservationBuilder {
    pub fn new(cfg: FeatureConfig, control_dt: f64) -> Self {
        ObservationBuilder {
            cfg,
            control_dt,
            prev_velocity: None,
        }
    }

    pub fn mode(&self) -> FeatureMode {
        self.cfg.mode
    }

    /// Clear the acceleration cache (call on episode reset).
    pub fn reset(&mut self) {
        self.prev_velocity = None;
    }

    /// Observation for the current state; updates the velocity cache.
    pub fn observe(&mut self, state: &SimState, model: &RobotModel) -> ObservationVector {
        let raw = self.observe_raw(state, model);
        match self.cfg.mode {
            FeatureMode::Raw => ObservationVector { values: raw },
            FeatureMode::Engineered => ObservationVector {
                values: apply_feature_engineering(&raw).expect("raw width is fixed"),
            },
        }
    }

    fn observe_raw(&mut self, state: &SimState, model: &RobotModel) -> Vec<f64> {
        let mut v = Vec::with_capacity(RAW_DIM);
        v.push(state.torso_z);

        // World z-axis in the robot frame (planar pitch only).
        let phi = state.pitch;
        v.extend_from_slice(&[-phi.sin(), 0.0, phi.cos()]);

        v.extend_from_slice(&state.joint_positions());

        // Angular velocity about the pitch axis.
        v.extend_from_slice(&[0.0, state.pitch_rate, 0.0]);

        // IMU-style linear acceleration: first-order difference of the
        // torso velocity over the control period, expressed in the body
        // frame. First sample after a reset reads zero.
        let (ax_w, az_w) = match self.prev_velocity {
            Some((pvx, pvz)) => (
                (state.torso_vx - pvx) / self.control_dt,
                (state.torso_vz - pvz) / self.control_dt,
            ),
            None => (0.0, 0.0),
        };
        self.prev_velocity = Some((state.torso_vx, state.torso_vz));
        let (c, s) = (phi.cos(), phi.sin());
        let a_body = (ax_w * c - az_w * s, ax_w * s + az_w * c);
        v.extend_from_slice(&[a_body.0, 0.0, a_body.1]);

        v.extend_from_slice(&state.joint_velocities());
        debug_assert_eq!(v.len(), RAW_DIM);
        let _ = model;
        v
    }
}

/// Index of joint-position slot (leg, within-leg slot) in the raw layout.
fn pos_slot(leg: usize, slot: usize) -> usize {
    4 + 3 * leg + slot
}

/// Replace the eight hip-pitch/knee position slots with four
/// front-minus-hind differences. Input must be the raw 34-vector.
pub fn apply_feature_engineering(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() != RAW_DIM {
        return Err(BounderError::Dimension {
            expected: RAW_DIM,
            got: raw.len(),
            context: "feature engineering input".into(),
        });
    }
    let mut out = Vec::with_capacity(ENGINEERED_DIM);
    out.extend_from_slice(&raw[0..4]);
    // Roll positions survive.
    for leg in 0..4 {
        out.push(raw[pos_slot(leg, 0)]);
    }
    // Front leg i paired with hind leg i+2, hip-pitch then knee.
    for front in 0..2 {
        for slot in [1, 2] {
            out.push(raw[pos_slot(front, slot)] - raw[pos_slot(front + 2, slot)]);
        }
    }
    out.extend_from_slice(&raw[16..RAW_DIM]);
    debug_assert_eq!(out.len(), ENGINEERED_DIM);
    Ok(out)
}

/// Column names for dataset headers, raw layout.
pub fn raw_column_names() -> Vec<String> {
    let mut names = Vec::with_capacity(RAW_DIM);
    names.push("obs00_body_height".into());
    for axis in ["x", "y", "z"] {
        names.push(format!("obs_zaxis_{axis}"));
    }
    let legs = ["lf", "rf", "lh", "rh"];
    let slots = ["roll", "hip_pitch", "knee"];
    for leg in legs {
        for slot in slots {
            names.push(format!("obs_qpos_{leg}_{slot}"));
        }
    }
    for axis in ["x", "y", "z"] {
        names.push(format!("obs_angvel_{axis}"));
    }
    for axis in ["x", "y", "z"] {
        names.push(format!("obs_linacc_{axis}"));
    }
    for leg in legs {
        for slot in slots {
            names.push(format!("obs_qvel_{leg}_{slot}"));
        }
    }
    names
}

/// Column names for dataset headers, engineered layout.
pub fn engineered_column_names() -> Vec<String> {
    let raw = raw_column_names();
    let mut names = Vec::with_capacity(ENGINEERED_DIM);
    names.extend_from_slice(&raw[0..4]);
    for leg in ["lf", "rf", "lh", "rh"] {
        names.push(format!("obs_qpos_{leg}_roll"));
    }
    for pair in ["lf_lh", "rf_rh"] {
        for slot in ["hip_pitch", "knee"] {
            names.push(format!("obs_qdiff_{pair}_{slot}"));
        }
    }
    names.extend_from_slice(&raw[16..RAW_DIM]);
    names
}

pub fn column_names(mode: FeatureMode) -> Vec<String> {
    match mode {
        FeatureMode::Raw => raw_column_names(),
        FeatureMode::Engineered => engineered_column_names(),
    }
}
