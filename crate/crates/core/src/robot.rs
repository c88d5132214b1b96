//! Robot model: masses, geometry and joint limits.
//!
//! Joint vectors throughout the crate are ordered LF, RF, LH, RH and
//! within each leg (roll, hip-pitch, knee), giving 12 entries. The
//! sagittal dynamics use only the 8 hip-pitch/knee joints; the 4 roll
//! joints are decoupled servos so the 12-joint interface stays intact.

use crate::error::{BounderError, Result};

pub const NUM_LEGS: usize = 4;
pub const NUM_JOINTS: usize = 12;
pub const NUM_PLANAR_JOINTS: usize = 8;

/// Leg indices. Front pair first, matching the observation layout.
pub const LF: usize = 0;
pub const RF: usize = 1;
pub const LH: usize = 2;
pub const RH: usize = 3;

/// Joint classes, one set of limits per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointClass {
    HipRoll,
    HipPitch,
    Knee,
}

/// Index into a 12-vector for (leg, slot) with slot 0=roll, 1=hip-pitch, 2=knee.
pub fn joint_index(leg: usize, slot: usize) -> usize {
    3 * leg + slot
}

/// Class of joint `i` in the 12-joint ordering.
pub fn joint_class(i: usize) -> JointClass {
    match i % 3 {
        0 => JointClass::HipRoll,
        1 => JointClass::HipPitch,
        _ => JointClass::Knee,
    }
}

/// Position/velocity/torque limits for one joint class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub pos_min: f64,
    pub pos_max: f64,
    pub vel_min: f64,
    pub vel_max: f64,
    pub torque_continuous: f64,
    pub torque_peak: f64,
}

impl JointLimits {
    fn validate(&self, name: &str) -> Result<()> {
        if !(self.pos_min < self.pos_max) {
            return Err(BounderError::Config(format!(
                "{name}: position limits must satisfy min < max"
            )));
        }
        if !(self.vel_min < self.vel_max) {
            return Err(BounderError::Config(format!(
                "{name}: velocity limits must satisfy min < max"
            )));
        }
        if self.torque_continuous <= 0.0 || self.torque_peak <= 0.0 {
            return Err(BounderError::Config(format!("{name}: torques must be > 0")));
        }
        Ok(())
    }
}

/// Planar quadruped model. Defaults reproduce the physical platform's
/// spec sheet: thigh 0.22 m, shank 0.25 m, 22 kg total, hip-roll
/// position +/-22 deg, hip-pitch -158..+28 deg, knee 38..163 deg, peak
/// torques 23.0 / 26.0 / 41.5 N*m per class.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub torso_mass: f64,
    /// Pitch-axis inertia of the torso about its CoM, kg*m^2.
    pub torso_inertia_pitch: f64,
    /// Torso CoM offset from the geometric body origin, torso frame.
    pub torso_com_x: f64,
    pub torso_com_z: f64,
    pub thigh_length: f64,
    pub shank_length: f64,
    /// One mass per leg link so per-link randomization has a target.
    pub thigh_mass: [f64; NUM_LEGS],
    pub shank_mass: [f64; NUM_LEGS],
    /// Rod inertia about each link CoM.
    pub thigh_inertia: [f64; NUM_LEGS],
    pub shank_inertia: [f64; NUM_LEGS],
    /// CoM distance from the proximal joint along the link.
    pub thigh_com: [f64; NUM_LEGS],
    pub shank_com: [f64; NUM_LEGS],
    /// Hip pivots sit at (+/-hip_x_offset, hip_z_offset) in the torso frame.
    pub hip_x_offset: f64,
    pub hip_z_offset: f64,
    /// Body length/width/height, m.
    pub body_dims: [f64; 3],
    pub hip_roll_limits: JointLimits,
    pub hip_pitch_limits: JointLimits,
    pub knee_limits: JointLimits,
    /// Rotor-scale inertia of the decoupled roll servos.
    pub roll_servo_inertia: f64,
    /// Internal viscous damping of the roll servos; with the default PD
    /// gains the closed roll loop is approximately critically damped.
    pub roll_servo_damping: f64,
}

impl Default for RobotModel {
    fn default() -> Self {
        let thigh_mass = 1.25;
        let shank_mass = 0.75;
        let thigh_length = 0.22;
        let shank_length = 0.25;
        let deg = std::f64::consts::PI / 180.0;
        RobotModel {
            torso_mass: 14.0,
            // Uniform box over (length, height) in the sagittal plane.
            torso_inertia_pitch: 14.0 * (0.7f64.powi(2) + 0.5f64.powi(2)) / 12.0,
            torso_com_x: 0.0,
            torso_com_z: 0.0,
            thigh_length,
            shank_length,
            thigh_mass: [thigh_mass; NUM_LEGS],
            shank_mass: [shank_mass; NUM_LEGS],
            thigh_inertia: [thigh_mass * thigh_length * thigh_length / 12.0; NUM_LEGS],
            shank_inertia: [shank_mass * shank_length * shank_length / 12.0; NUM_LEGS],
            thigh_com: [thigh_length / 2.0; NUM_LEGS],
            shank_com: [shank_length / 2.0; NUM_LEGS],
            hip_x_offset: 0.25,
            hip_z_offset: 0.0,
            body_dims: [0.7, 0.4, 0.5],
            hip_roll_limits: JointLimits {
                pos_min: -22.0 * deg,
                pos_max: 22.0 * deg,
                vel_min: -15.0,
                vel_max: 15.0,
                torque_continuous: 10.0,
                torque_peak: 23.0,
            },
            hip_pitch_limits: JointLimits {
                pos_min: -158.0 * deg,
                pos_max: 28.0 * deg,
                vel_min: -18.0,
                vel_max: 18.0,
                torque_continuous: 10.0,
                torque_peak: 26.0,
            },
            knee_limits: JointLimits {
                pos_min: 38.0 * deg,
                pos_max: 163.0 * deg,
                vel_min: -20.0,
                vel_max: 20.0,
                torque_continuous: 17.0,
                torque_peak: 41.5,
            },
            roll_servo_inertia: 0.01,
            roll_servo_damping: 0.05,
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("torso_mass", self.torso_mass),
            ("torso_inertia_pitch", self.torso_inertia_pitch),
            ("thigh_length", self.thigh_length),
            ("shank_length", self.shank_length),
            ("roll_servo_inertia", self.roll_servo_inertia),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(BounderError::Config(format!("robot.{name} must be > 0")));
            }
        }
        for leg in 0..NUM_LEGS {
            if !(self.thigh_mass[leg] > 0.0 && self.shank_mass[leg] > 0.0) {
                return Err(BounderError::Config(format!("leg {leg}: masses must be > 0")));
            }
            if !(self.thigh_inertia[leg] > 0.0 && self.shank_inertia[leg] > 0.0) {
                return Err(BounderError::Config(format!(
                    "leg {leg}: inertias must be > 0"
                )));
            }
        }
        for d in self.body_dims {
            if !(d > 0.0) {
                return Err(BounderError::Config("body dims must be > 0".into()));
            }
        }
        self.hip_roll_limits.validate("hip_roll")?;
        self.hip_pitch_limits.validate("hip_pitch")?;
        self.knee_limits.validate("knee")?;
        Ok(())
    }

    pub fn limits_for(&self, class: JointClass) -> &JointLimits {
        match class {
            JointClass::HipRoll => &self.hip_roll_limits,
            JointClass::HipPitch => &self.hip_pitch_limits,
            JointClass::Knee => &self.knee_limits,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.torso_mass
            + self.thigh_mass.iter().sum::<f64>()
            + self.shank_mass.iter().sum::<f64>()
    }

    /// Hip pivot in the torso frame; front legs forward.
    pub fn hip_local(&self, leg: usize) -> (f64, f64) {
        let x = if leg == LF || leg == RF {
            self.hip_x_offset
        } else {
            -self.hip_x_offset
        };
        (x, self.hip_z_offset)
    }

    /// Clamp a position command to the class limits.
    pub fn clamp_position(&self, joint: usize, q: f64) -> f64 {
        let l = self.limits_for(joint_class(joint));
        q.clamp(l.pos_min, l.pos_max)
    }

    /// Clamp a torque to the class peak.
    pub fn clamp_torque(&self, joint: usize, tau: f64) -> f64 {
        let peak = self.limits_for(joint_class(joint)).torque_peak;
        tau.clamp(-peak, peak)
    }

    /// Clamp a full 12-vector of torques to the per-class peaks.
    pub fn clamp_torques(&self, tau: &[f64; NUM_JOINTS]) -> [f64; NUM_JOINTS] {
        let mut out = [0.0; NUM_JOINTS];
        for (i, t) in tau.iter().enumerate() {
            out[i] = self.clamp_torque(i, *t);
        }
        out
    }

    /// Longest reachable hip-to-foot distance given the knee limits.
    pub fn leg_reach_max(&self) -> f64 {
        leg_length(self, self.knee_limits.pos_max)
    }

    /// Shortest reachable hip-to-foot distance given the knee limits.
    pub fn leg_reach_min(&self) -> f64 {
        leg_length(self, self.knee_limits.pos_min)
    }
}

/// Hip-to-foot distance for an interior knee angle `q_k` (law of cosines;
/// q_k = pi is a fully straight leg).
pub fn leg_length(model: &RobotModel, q_k: f64) -> f64 {
    let (a, b) = (model.thigh_length, model.shank_length);
    (a * a + b * b - 2.0 * a * b * q_k.cos()).sqrt()
}
