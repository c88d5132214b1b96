//! Planar sagittal-plane rigid-body simulation of the quadruped.
//!
//! The torso is a floating planar body (x, z, pitch) carrying four
//! two-link legs, 11 generalized coordinates in total. Ground contact is
//! a penalty spring-damper with a Coulomb friction cap and stick/slip
//! regularization. Integration is semi-implicit Euler; the mass matrix
//! is assembled per step from the articulated chain.
//!
//! Conventions: x forward, z up. Positive pitch is nose-down, so the
//! world z-axis expressed in the robot frame is (-sin phi, 0, cos phi).
//! Hip-pitch angle 0 points the thigh straight down in the torso frame,
//! positive swings the foot forward. The knee coordinate is the interior
//! angle between thigh and shank (pi = straight leg); flexing the knee
//! tips the shank forward of the thigh line (all-elbow layout).

use nalgebra::{SMatrix, SVector};

use crate::error::{BounderError, Result};
use crate::rng::Stream;
use crate::robot::{joint_index, RobotModel, NUM_JOINTS, NUM_LEGS, NUM_PLANAR_JOINTS};

/// Generalized coordinate count: x, z, pitch + 8 leg joints.
pub const NDOF: usize = 11;

/// Depth of the torso underside below the hip line, used for the
/// torso-touches-ground check (legs mount near the chassis underside).
pub const TORSO_HALF_THICKNESS: f64 = 0.05;

pub const GRAVITY: f64 = 9.81;

type Mat = SMatrix<f64, NDOF, NDOF>;
type Vec11 = SVector<f64, NDOF>;

/// Full simulator state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub torso_x: f64,
    pub torso_z: f64,
    pub pitch: f64,
    pub torso_vx: f64,
    pub torso_vz: f64,
    pub pitch_rate: f64,
    /// (hip-pitch, knee) per leg, LF RF LH RH.
    pub planar_joint_angles: [f64; NUM_PLANAR_JOINTS],
    pub planar_joint_velocities: [f64; NUM_PLANAR_JOINTS],
    pub roll_servo_angles: [f64; NUM_LEGS],
    pub roll_servo_velocities: [f64; NUM_LEGS],
    /// G(i, t): 1 while foot i touches the ground.
    pub contact_flags: [u8; NUM_LEGS],
    /// Normal force per foot, N.
    pub contact_forces: [f64; NUM_LEGS],
    /// Simulation time since reset, s.
    pub time: f64,
    /// Steps taken since reset.
    pub steps: u64,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        let scalars = [
            self.torso_x,
            self.torso_z,
            self.pitch,
            self.torso_vx,
            self.torso_vz,
            self.pitch_rate,
            self.time,
        ];
        scalars.iter().all(|v| v.is_finite())
            && self.planar_joint_angles.iter().all(|v| v.is_finite())
            && self.planar_joint_velocities.iter().all(|v| v.is_finite())
            && self.roll_servo_angles.iter().all(|v| v.is_finite())
            && self.roll_servo_velocities.iter().all(|v| v.is_finite())
            && self.contact_forces.iter().all(|v| v.is_finite())
    }

    /// Joint positions as the canonical 12-vector (roll, hip-pitch, knee per leg).
    pub fn joint_positions(&self) -> [f64; NUM_JOINTS] {
        let mut q = [0.0; NUM_JOINTS];
        for leg in 0..NUM_LEGS {
            q[joint_index(leg, 0)] = self.roll_servo_angles[leg];
            q[joint_index(leg, 1)] = self.planar_joint_angles[2 * leg];
            q[joint_index(leg, 2)] = self.planar_joint_angles[2 * leg + 1];
        }
        q
    }

    /// Joint velocities as the canonical 12-vector.
    pub fn joint_velocities(&self) -> [f64; NUM_JOINTS] {
        let mut v = [0.0; NUM_JOINTS];
        for leg in 0..NUM_LEGS {
            v[joint_index(leg, 0)] = self.roll_servo_velocities[leg];
            v[joint_index(leg, 1)] = self.planar_joint_velocities[2 * leg];
            v[joint_index(leg, 2)] = self.planar_joint_velocities[2 * leg + 1];
        }
        v
    }
}

/// Ground description: piecewise-constant heightfield plus surface
/// parameters. Flat ground is a heightfield of zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    /// Height samples every `spacing` meters starting at `x_start`.
    pub heights: Vec<f64>,
    pub spacing: f64,
    pub x_start: f64,
    pub friction: f64,
    pub restitution: f64,
}

impl Terrain {
    pub fn flat(friction: f64) -> Self {
        Terrain {
            heights: Vec::new(),
            spacing: 0.2,
            x_start: -5.0,
            friction,
            restitution: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.friction >= 0.0) {
            return Err(BounderError::Config("terrain friction must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(BounderError::Config(
                "terrain restitution must be in [0, 1]".into(),
            ));
        }
        if !(self.spacing > 0.0) {
            return Err(BounderError::Config("terrain spacing must be > 0".into()));
        }
        if self.heights.iter().any(|h| !h.is_finite()) {
            return Err(BounderError::Config("terrain heights must be finite".into()));
        }
        Ok(())
    }

    /// Ground height under world x. Outside the sampled range the ground
    /// is flat at zero.
    pub fn height_at(&self, x: f64) -> f64 {
        if self.heights.is_empty() {
            return 0.0;
        }
        let i = ((x - self.x_start) / self.spacing).floor();
        if i < 0.0 || i as usize >= self.heights.len() {
            0.0
        } else {
            self.heights[i as usize]
        }
    }
}

/// Penalty contact parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactParams {
    pub normal_stiffness: f64,
    pub normal_damping: f64,
    /// Foot height above ground up to which G(i,t) reports contact.
    pub contact_tolerance: f64,
    /// Tangential velocity scale of the stick/slip regularization.
    pub slip_velocity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            normal_stiffness: 1e5,
            normal_damping: 1e3,
            contact_tolerance: 1e-3,
            slip_velocity: 0.05,
        }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.normal_stiffness > 0.0) {
            return Err(BounderError::Config("contact stiffness must be > 0".into()));
        }
        if !(self.normal_damping >= 0.0) {
            return Err(BounderError::Config("contact damping must be >= 0".into()));
        }
        if !(self.slip_velocity > 0.0) {
            return Err(BounderError::Config("slip velocity must be > 0".into()));
        }
        Ok(())
    }
}

/// Initial-pose perturbation drawn at reset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetConfig {
    /// Nominal hip-to-foot distance of the standing pose.
    pub stand_leg_length: f64,
    /// Uniform pitch perturbation, rad.
    pub pitch_range: f64,
    /// Uniform per-joint angle perturbation, rad.
    pub joint_range: f64,
    /// Randomize the gait-phase offset over a full period.
    pub randomize_gait_phase: bool,
}

impl Default for ResetConfig {
    fn default() -> Self {
        ResetConfig {
            stand_leg_length: 0.33,
            pitch_range: 0.1,
            joint_range: 0.05,
            randomize_gait_phase: true,
        }
    }
}

/// Direction of a leg segment whose angle is measured from straight
/// down, positive tipping forward (+x).
#[inline]
fn seg_dir(alpha: f64) -> (f64, f64) {
    (alpha.sin(), -alpha.cos())
}

/// Derivative of `seg_dir` with respect to its angle.
#[inline]
fn seg_dir_prime(alpha: f64) -> (f64, f64) {
    (alpha.cos(), alpha.sin())
}

/// Rotate a torso-frame point into a world offset (positive pitch is
/// nose-down).
#[inline]
fn body_to_world(pitch: f64, p: (f64, f64)) -> (f64, f64) {
    let (c, s) = (pitch.cos(), pitch.sin());
    (p.0 * c + p.1 * s, -p.0 * s + p.1 * c)
}

/// Rotate a world-frame vector into the torso frame.
#[inline]
pub fn world_to_body(pitch: f64, v: (f64, f64)) -> (f64, f64) {
    let (c, s) = (pitch.cos(), pitch.sin());
    (v.0 * c - v.1 * s, v.0 * s + v.1 * c)
}

/// World angles (from straight down, forward-positive) of a leg's thigh
/// and shank.
#[inline]
fn leg_world_angles(state: &SimState, leg: usize) -> (f64, f64) {
    let q_h = state.planar_joint_angles[2 * leg];
    let q_k = state.planar_joint_angles[2 * leg + 1];
    let alpha_t = q_h - state.pitch;
    let alpha_s = alpha_t + std::f64::consts::PI - q_k;
    (alpha_t, alpha_s)
}

/// World position of a hip pivot.
pub fn hip_position(state: &SimState, model: &RobotModel, leg: usize) -> (f64, f64) {
    let o = body_to_world(state.pitch, model.hip_local(leg));
    (state.torso_x + o.0, state.torso_z + o.1)
}

/// Forward kinematics: planar world positions of the four feet.
pub fn foot_positions(state: &SimState, model: &RobotModel) -> [(f64, f64); NUM_LEGS] {
    let mut feet = [(0.0, 0.0); NUM_LEGS];
    for leg in 0..NUM_LEGS {
        let hip = hip_position(state, model, leg);
        let (alpha_t, alpha_s) = leg_world_angles(state, leg);
        let ut = seg_dir(alpha_t);
        let us = seg_dir(alpha_s);
        feet[leg] = (
            hip.0 + model.thigh_length * ut.0 + model.shank_length * us.0,
            hip.1 + model.thigh_length * ut.1 + model.shank_length * us.1,
        );
    }
    feet
}

/// World velocities of the four feet.
pub fn foot_velocities(state: &SimState, model: &RobotModel) -> [(f64, f64); NUM_LEGS] {
    let mut vels = [(0.0, 0.0); NUM_LEGS];
    let (c, s) = (state.pitch.cos(), state.pitch.sin());
    for leg in 0..NUM_LEGS {
        let (a, b) = model.hip_local(leg);
        // d/dphi of the rotated hip offset.
        let op = (-a * s + b * c, -a * c - b * s);
        let (alpha_t, alpha_s) = leg_world_angles(state, leg);
        let dq_h = state.planar_joint_velocities[2 * leg];
        let dq_k = state.planar_joint_velocities[2 * leg + 1];
        let da_t = dq_h - state.pitch_rate;
        let da_s = dq_h - dq_k - state.pitch_rate;
        let upt = seg_dir_prime(alpha_t);
        let ups = seg_dir_prime(alpha_s);
        vels[leg] = (
            state.torso_vx
                + op.0 * state.pitch_rate
                + model.thigh_length * upt.0 * da_t
                + model.shank_length * ups.0 * da_s,
            state.torso_vz
                + op.1 * state.pitch_rate
                + model.thigh_length * upt.1 * da_t
                + model.shank_length * ups.1 * da_s,
        );
    }
    vels
}

/// Contact indicator G(i, t): 1 iff foot height above local ground is at
/// most the tolerance (the boundary counts as contact).
pub fn detect_contacts(
    state: &SimState,
    model: &RobotModel,
    terrain: &Terrain,
    contact_tolerance: f64,
) -> [u8; NUM_LEGS] {
    let feet = foot_positions(state, model);
    let mut flags = [0u8; NUM_LEGS];
    for (i, (fx, fz)) in feet.iter().enumerate() {
        if fz - terrain.height_at(*fx) <= contact_tolerance {
            flags[i] = 1;
        }
    }
    flags
}

/// One rigid body's contribution to the equations of motion.
struct BodyKinematics {
    mass: f64,
    inertia: f64,
    /// Nonzero Jacobian columns: (coordinate index, d r / d q).
    jac: [(usize, (f64, f64)); 5],
    jac_len: usize,
    /// d omega / d qdot entries aligned with `jac`.
    jw: [f64; 5],
    /// Velocity-product (zero-acceleration) linear acceleration.
    accel_bias: (f64, f64),
}

/// Assemble per-body kinematics for the torso and the eight leg links.
fn body_kinematics(state: &SimState, model: &RobotModel) -> Vec<BodyKinematics> {
    let mut bodies = Vec::with_capacity(1 + 2 * NUM_LEGS);
    let (c, s) = (state.pitch.cos(), state.pitch.sin());
    let w = state.pitch_rate;

    // Torso.
    let com = (model.torso_com_x, model.torso_com_z);
    let o = (com.0 * c + com.1 * s, -com.0 * s + com.1 * c);
    let op = (-com.0 * s + com.1 * c, -com.0 * c - com.1 * s);
    bodies.push(BodyKinematics {
        mass: model.torso_mass,
        inertia: model.torso_inertia_pitch,
        jac: [
            (0, (1.0, 0.0)),
            (1, (0.0, 1.0)),
            (2, op),
            (0, (0.0, 0.0)),
            (0, (0.0, 0.0)),
        ],
        jac_len: 3,
        jw: [0.0, 0.0, -1.0, 0.0, 0.0],
        accel_bias: (-o.0 * w * w, -o.1 * w * w),
    });

    for leg in 0..NUM_LEGS {
        let (a, b) = model.hip_local(leg);
        let oh = (a * c + b * s, -a * s + b * c);
        let ohp = (-a * s + b * c, -a * c - b * s);
        let (alpha_t, alpha_s) = leg_world_angles(state, leg);
        let dq_h = state.planar_joint_velocities[2 * leg];
        let dq_k = state.planar_joint_velocities[2 * leg + 1];
        let da_t = dq_h - w;
        let da_s = dq_h - dq_k - w;
        let ut = seg_dir(alpha_t);
        let upt = seg_dir_prime(alpha_t);
        let us = seg_dir(alpha_s);
        let ups = seg_dir_prime(alpha_s);
        let col_h = 3 + 2 * leg;
        let col_k = 4 + 2 * leg;

        // Thigh.
        let ct = model.thigh_com[leg];
        bodies.push(BodyKinematics {
            mass: model.thigh_mass[leg],
            inertia: model.thigh_inertia[leg],
            jac: [
                (0, (1.0, 0.0)),
                (1, (0.0, 1.0)),
                (2, (ohp.0 - ct * upt.0, ohp.1 - ct * upt.1)),
                (col_h, (ct * upt.0, ct * upt.1)),
                (0, (0.0, 0.0)),
            ],
            jac_len: 4,
            jw: [0.0, 0.0, -1.0, 1.0, 0.0],
            accel_bias: (
                -oh.0 * w * w - ct * ut.0 * da_t * da_t,
                -oh.1 * w * w - ct * ut.1 * da_t * da_t,
            ),
        });

        // Shank.
        let lt = model.thigh_length;
        let cs = model.shank_com[leg];
        bodies.push(BodyKinematics {
            mass: model.shank_mass[leg],
            inertia: model.shank_inertia[leg],
            jac: [
                (0, (1.0, 0.0)),
                (1, (0.0, 1.0)),
                (
                    2,
                    (
                        ohp.0 - lt * upt.0 - cs * ups.0,
                        ohp.1 - lt * upt.1 - cs * ups.1,
                    ),
                ),
                (col_h, (lt * upt.0 + cs * ups.0, lt * upt.1 + cs * ups.1)),
                (col_k, (-cs * ups.0, -cs * ups.1)),
            ],
            jac_len: 5,
            jw: [0.0, 0.0, -1.0, 1.0, -1.0],
            accel_bias: (
                -oh.0 * w * w - lt * ut.0 * da_t * da_t - cs * us.0 * da_s * da_s,
                -oh.1 * w * w - lt * ut.1 * da_t * da_t - cs * us.1 * da_s * da_s,
            ),
        });
    }
    bodies
}

/// Nonzero Jacobian columns of foot `leg`: (coordinate, d p / d q).
fn foot_jacobian(state: &SimState, model: &RobotModel, leg: usize) -> [(usize, (f64, f64)); 5] {
    let (c, s) = (state.pitch.cos(), state.pitch.sin());
    let (a, b) = model.hip_local(leg);
    let ohp = (-a * s + b * c, -a * c - b * s);
    let (alpha_t, alpha_s) = leg_world_angles(state, leg);
    let upt = seg_dir_prime(alpha_t);
    let ups = seg_dir_prime(alpha_s);
    let lt = model.thigh_length;
    let ls = model.shank_length;
    [
        (0, (1.0, 0.0)),
        (1, (0.0, 1.0)),
        (
            2,
            (
                ohp.0 - lt * upt.0 - ls * ups.0,
                ohp.1 - lt * upt.1 - ls * ups.1,
            ),
        ),
        (3 + 2 * leg, (lt * upt.0 + ls * ups.0, lt * upt.1 + ls * ups.1)),
        (4 + 2 * leg, (-ls * ups.0, -ls * ups.1)),
    ]
}

/// Reported penalty contact normal force on one foot.
fn contact_normal_force(
    pen: f64,
    foot_vel: (f64, f64),
    terrain: &Terrain,
    params: &ContactParams,
) -> f64 {
    if pen <= 0.0 {
        return 0.0;
    }
    // Restitution is realized through the damping term: full damping at
    // restitution 0, none at 1.
    let d_eff = params.normal_damping * (1.0 - terrain.restitution);
    let pen_rate = -foot_vel.1;
    (params.normal_stiffness * pen + d_eff * pen_rate.max(0.0)).max(0.0)
}

/// Joint-stop spring stiffness beyond the position limits, N*m/rad.
const STOP_STIFFNESS: f64 = 300.0;
/// Joint-stop damping while inside the violated limit, N*m*s/rad.
const STOP_DAMPING: f64 = 2.0;

/// Actuator torque after the velocity limit: torque pushing further past
/// the limit drops to zero (back-EMF style derating).
fn derate_torque(tau: f64, velocity: f64, vel_min: f64, vel_max: f64) -> f64 {
    if (velocity > vel_max && tau > 0.0) || (velocity < vel_min && tau < 0.0) {
        0.0
    } else {
        tau
    }
}

/// Restoring torque of a hard joint stop.
fn stop_torque(q: f64, qd: f64, pos_min: f64, pos_max: f64) -> f64 {
    if q > pos_max {
        -STOP_STIFFNESS * (q - pos_max) - STOP_DAMPING * qd
    } else if q < pos_min {
        -STOP_STIFFNESS * (q - pos_min) - STOP_DAMPING * qd
    } else {
        0.0
    }
}

/// Physical sanity bounds: states past these are treated as a dynamics
/// blowup even while still finite, so downstream rewards stay bounded.
fn state_within_sanity_bounds(state: &SimState) -> bool {
    state.torso_vx.abs() < 50.0
        && state.torso_vz.abs() < 50.0
        && state.pitch_rate.abs() < 200.0
        && state
            .planar_joint_velocities
            .iter()
            .all(|v| v.abs() < 500.0)
        && state.torso_z.abs() < 100.0
}

/// Advance the state by one semi-implicit Euler step. Torques are the
/// 12-joint command; they are clamped to the per-class peak limits,
/// derated past the velocity limits, and joint stops engage beyond the
/// position limits. Roll torques drive the decoupled roll servos only.
pub fn step(
    state: &SimState,
    torques: &[f64; NUM_JOINTS],
    model: &RobotModel,
    terrain: &Terrain,
    contact: &ContactParams,
    dt: f64,
) -> Result<SimState> {
    debug_assert!(dt > 0.0);
    let mut tau = model.clamp_torques(torques);
    let qd = state.joint_velocities();
    let q = state.joint_positions();
    for i in 0..NUM_JOINTS {
        let limits = model.limits_for(crate::robot::joint_class(i));
        tau[i] = derate_torque(tau[i], qd[i], limits.vel_min, limits.vel_max);
        tau[i] += stop_torque(q[i], qd[i], limits.pos_min, limits.pos_max);
    }

    let bodies = body_kinematics(state, model);
    let mut mass = Mat::zeros();
    let mut rhs = Vec11::zeros();

    for body in &bodies {
        for i in 0..body.jac_len {
            let (ci, ji) = body.jac[i];
            let jwi = body.jw[i];
            for k in 0..body.jac_len {
                let (ck, jk) = body.jac[k];
                let jwk = body.jw[k];
                mass[(ci, ck)] +=
                    body.mass * (ji.0 * jk.0 + ji.1 * jk.1) + body.inertia * jwi * jwk;
            }
            // Gravity and velocity-product bias projected through J^T.
            rhs[ci] += body.mass
                * (ji.0 * (-body.accel_bias.0) + ji.1 * (-GRAVITY - body.accel_bias.1));
        }
    }

    // Actuated planar joints.
    for leg in 0..NUM_LEGS {
        rhs[3 + 2 * leg] += tau[joint_index(leg, 1)];
        rhs[4 + 2 * leg] += tau[joint_index(leg, 2)];
    }

    // Contacts. The elastic term is explicit; the damping and the
    // sticking-regime friction viscosity act on the post-step velocity,
    // folded into the mass matrix (dt * c * j^T j). An explicit damping
    // force would spike at touchdown and pump energy into the light
    // shank at this timestep.
    let feet = foot_positions(state, model);
    let foot_vels = foot_velocities(state, model);
    let d_eff = contact.normal_damping * (1.0 - terrain.restitution);
    for leg in 0..NUM_LEGS {
        let pen = terrain.height_at(feet[leg].0) - feet[leg].1;
        if pen <= 0.0 {
            continue;
        }
        let jac = foot_jacobian(state, model, leg);
        let spring = contact.normal_stiffness * pen;
        for (col, j) in jac {
            rhs[col] += j.1 * spring;
        }
        // Normal damper only while approaching (no suction on separation):
        // force -d * v_z' split into the current-velocity part on the RHS
        // and dt * d * j^T j on the matrix for the velocity delta.
        if foot_vels[leg].1 < 0.0 && d_eff > 0.0 {
            for (col, j) in jac {
                rhs[col] += j.1 * (-d_eff * foot_vels[leg].1);
            }
            for i in 0..jac.len() {
                for k in 0..jac.len() {
                    mass[(jac[i].0, jac[k].0)] += dt * d_eff * jac[i].1 .1 * jac[k].1 .1;
                }
            }
        }
        // Coulomb friction capped at mu * spring with stick/slip
        // regularization: kinetic (constant force) when sliding,
        // implicit viscous inside the regularization band.
        let cap = terrain.friction * spring;
        let vx = foot_vels[leg].0;
        if vx.abs() > contact.slip_velocity {
            let fx = -cap * vx.signum();
            for (col, j) in jac {
                rhs[col] += j.0 * fx;
            }
        } else if cap > 0.0 {
            let c_t = cap / contact.slip_velocity;
            for (col, j) in jac {
                rhs[col] += j.0 * (-c_t * vx);
            }
            for i in 0..jac.len() {
                for k in 0..jac.len() {
                    mass[(jac[i].0, jac[k].0)] += dt * c_t * jac[i].1 .0 * jac[k].1 .0;
                }
            }
        }
    }

    let accel = mass
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .ok_or(BounderError::DynamicsBlowup { step: state.steps })?;

    let mut next = state.clone();
    next.torso_vx += accel[0] * dt;
    next.torso_vz += accel[1] * dt;
    next.pitch_rate += accel[2] * dt;
    for j in 0..NUM_PLANAR_JOINTS {
        next.planar_joint_velocities[j] += accel[3 + j] * dt;
    }
    next.torso_x += next.torso_vx * dt;
    next.torso_z += next.torso_vz * dt;
    next.pitch += next.pitch_rate * dt;
    for j in 0..NUM_PLANAR_JOINTS {
        next.planar_joint_angles[j] += next.planar_joint_velocities[j] * dt;
    }

    // Decoupled roll servos: small rotors with internal viscous damping.
    for leg in 0..NUM_LEGS {
        let tau_roll = tau[joint_index(leg, 0)];
        let acc = (tau_roll - model.roll_servo_damping * state.roll_servo_velocities[leg])
            / model.roll_servo_inertia;
        next.roll_servo_velocities[leg] += acc * dt;
        next.roll_servo_angles[leg] += next.roll_servo_velocities[leg] * dt;
    }

    next.time += dt;
    next.steps += 1;
    next.contact_flags = detect_contacts(&next, model, terrain, contact.contact_tolerance);
    let next_feet = foot_positions(&next, model);
    let next_vels = foot_velocities(&next, model);
    for leg in 0..NUM_LEGS {
        let pen = terrain.height_at(next_feet[leg].0) - next_feet[leg].1;
        next.contact_forces[leg] = contact_normal_force(pen, next_vels[leg], terrain, contact);
    }

    if !next.is_finite() || !state_within_sanity_bounds(&next) {
        return Err(BounderError::DynamicsBlowup { step: state.steps });
    }
    Ok(next)
}

/// Lowest point of the torso box (used by the termination rule).
pub fn torso_lowest_height(state: &SimState, model: &RobotModel, terrain: &Terrain) -> f64 {
    let half = model.body_dims[0] / 2.0;
    let mut lowest = f64::INFINITY;
    for corner_x in [-half, half] {
        let o = body_to_world(state.pitch, (corner_x, -TORSO_HALF_THICKNESS));
        let (x, z) = (state.torso_x + o.0, state.torso_z + o.1);
        lowest = lowest.min(z - terrain.height_at(x));
    }
    lowest
}

/// Two-link inverse kinematics: joint targets that put the foot at
/// `target` (torso frame, relative to the hip). Out-of-reach targets are
/// clamped to the workspace boundary; outputs respect the joint limits.
pub fn leg_inverse_kinematics(model: &RobotModel, target: (f64, f64)) -> (f64, f64) {
    let lt = model.thigh_length;
    let ls = model.shank_length;
    let r = (target.0 * target.0 + target.1 * target.1)
        .sqrt()
        .clamp(model.leg_reach_min(), model.leg_reach_max());
    let cos_knee = ((lt * lt + ls * ls - r * r) / (2.0 * lt * ls)).clamp(-1.0, 1.0);
    let q_k = cos_knee.acos();
    let gamma = target.0.atan2(-target.1);
    let psi = std::f64::consts::PI - q_k;
    let beta = (ls * psi.sin()).atan2(lt + ls * psi.cos());
    let q_h = gamma - beta;
    (
        model.clamp_position(1, q_h),
        model.clamp_position(2, q_k),
    )
}

/// Nominal standing pose: all feet directly under their hips at the given
/// leg length, zero pitch, feet resting on the terrain.
pub fn nominal_pose(model: &RobotModel, terrain: &Terrain, stand_leg_length: f64) -> SimState {
    let (q_h, q_k) = leg_inverse_kinematics(model, (0.0, -stand_leg_length));
    let mut state = SimState {
        torso_x: 0.0,
        torso_z: 0.0,
        pitch: 0.0,
        torso_vx: 0.0,
        torso_vz: 0.0,
        pitch_rate: 0.0,
        planar_joint_angles: [0.0; NUM_PLANAR_JOINTS],
        planar_joint_velocities: [0.0; NUM_PLANAR_JOINTS],
        roll_servo_angles: [0.0; NUM_LEGS],
        roll_servo_velocities: [0.0; NUM_LEGS],
        contact_flags: [0; NUM_LEGS],
        contact_forces: [0.0; NUM_LEGS],
        time: 0.0,
        steps: 0,
    };
    for leg in 0..NUM_LEGS {
        state.planar_joint_angles[2 * leg] = q_h;
        state.planar_joint_angles[2 * leg + 1] = q_k;
    }
    settle_to_ground(&mut state, model, terrain);
    state
}

/// Translate the torso vertically so the lowest foot exactly touches the
/// terrain.
fn settle_to_ground(state: &mut SimState, model: &RobotModel, terrain: &Terrain) {
    let feet = foot_positions(state, model);
    let mut dz = f64::NEG_INFINITY;
    for (fx, fz) in feet {
        dz = dz.max(terrain.height_at(fx) - fz);
    }
    state.torso_z += dz;
}

/// Seeded reset: nominal standing pose plus uniform perturbations on
/// pitch and joint angles, feet re-settled onto the terrain. Returns the
/// state and the gait-phase offset drawn for the episode (fraction of a
/// period in [0, 1), 0 when phase randomization is off).
pub fn reset(
    model: &RobotModel,
    terrain: &Terrain,
    contact: &ContactParams,
    seed: u64,
    cfg: &ResetConfig,
) -> (SimState, f64) {
    let mut stream = Stream::seeded(seed);
    let mut state = nominal_pose(model, terrain, cfg.stand_leg_length);
    state.pitch = stream.symmetric(cfg.pitch_range);
    for leg in 0..NUM_LEGS {
        for j in 0..2 {
            let idx = 2 * leg + j;
            let class_joint = joint_index(leg, j + 1);
            let perturbed = state.planar_joint_angles[idx] + stream.symmetric(cfg.joint_range);
            state.planar_joint_angles[idx] = model.clamp_position(class_joint, perturbed);
        }
    }
    let phase = if cfg.randomize_gait_phase {
        stream.uniform()
    } else {
        0.0
    };
    settle_to_ground(&mut state, model, terrain);
    state.contact_flags = detect_contacts(&state, model, terrain, contact.contact_tolerance);
    (state, phase)
}

/// Total mechanical energy (kinetic + gravitational potential) of the
/// planar system. Roll servos are excluded; they are not part of the
/// planar dynamics.
pub fn mechanical_energy(state: &SimState, model: &RobotModel) -> f64 {
    let velocities = body_com_states(state, model);
    let mut e = 0.0;
    for (mass, inertia, _pos, vel, omega, z) in velocities {
        e += 0.5 * mass * (vel.0 * vel.0 + vel.1 * vel.1) + 0.5 * inertia * omega * omega;
        e += mass * GRAVITY * z;
    }
    e
}

/// Horizontal momentum of the full planar system.
pub fn horizontal_momentum(state: &SimState, model: &RobotModel) -> f64 {
    body_com_states(state, model)
        .into_iter()
        .map(|(mass, _, _, vel, _, _)| mass * vel.0)
        .sum()
}

/// Height of the full multi-body center of mass.
pub fn full_com_height(state: &SimState, model: &RobotModel) -> f64 {
    let bodies = body_com_states(state, model);
    let total: f64 = bodies.iter().map(|b| b.0).sum();
    bodies.iter().map(|b| b.0 * b.5).sum::<f64>() / total
}

/// (mass, inertia, com position, com velocity, angular velocity, com z)
/// for each of the nine planar bodies.
#[allow(clippy::type_complexity)]
fn body_com_states(
    state: &SimState,
    model: &RobotModel,
) -> Vec<(f64, f64, (f64, f64), (f64, f64), f64, f64)> {
    let bodies = body_kinematics(state, model);
    let qdot: Vec11 = generalized_velocities(state);
    let (c, s) = (state.pitch.cos(), state.pitch.sin());
    let mut out = Vec::with_capacity(bodies.len());

    // Positions are easiest recomputed directly.
    let mut positions = Vec::with_capacity(bodies.len());
    let tcom = (model.torso_com_x, model.torso_com_z);
    positions.push((
        state.torso_x + tcom.0 * c + tcom.1 * s,
        state.torso_z - tcom.0 * s + tcom.1 * c,
    ));
    for leg in 0..NUM_LEGS {
        let hip = hip_position(state, model, leg);
        let (alpha_t, alpha_s) = leg_world_angles(state, leg);
        let ut = seg_dir(alpha_t);
        let us = seg_dir(alpha_s);
        positions.push((
            hip.0 + model.thigh_com[leg] * ut.0,
            hip.1 + model.thigh_com[leg] * ut.1,
        ));
        positions.push((
            hip.0 + model.thigh_length * ut.0 + model.shank_com[leg] * us.0,
            hip.1 + model.thigh_length * ut.1 + model.shank_com[leg] * us.1,
        ));
    }

    for (body, pos) in bodies.iter().zip(positions) {
        let mut vel = (0.0, 0.0);
        let mut omega = 0.0;
        for i in 0..body.jac_len {
            let (col, j) = body.jac[i];
            vel.0 += j.0 * qdot[col];
            vel.1 += j.1 * qdot[col];
            omega += body.jw[i] * qdot[col];
        }
        out.push((body.mass, body.inertia, pos, vel, omega, pos.1));
    }
    out
}

fn generalized_velocities(state: &SimState) -> Vec11 {
    let mut v = Vec11::zeros();
    v[0] = state.torso_vx;
    v[1] = state.torso_vz;
    v[2] = state.pitch_rate;
    for j in 0..NUM_PLANAR_JOINTS {
        v[3 + j] = state.planar_joint_velocities[j];
    }
    v
}

/// Forward kinematics check helper exposed for tests and tooling: hip,
/// knee and foot of one leg in world coordinates.
pub fn leg_points(
    state: &SimState,
    model: &RobotModel,
    leg: usize,
) -> ((f64, f64), (f64, f64), (f64, f64)) {
    let hip = hip_position(state, model, leg);
    let (alpha_t, alpha_s) = leg_world_angles(state, leg);
    let ut = seg_dir(alpha_t);
    let us = seg_dir(alpha_s);
    let knee = (
        hip.0 + model.thigh_length * ut.0,
        hip.1 + model.thigh_length * ut.1,
    );
    let foot = (
        knee.0 + model.shank_length * us.0,
        knee.1 + model.shank_length * us.1,
    );
    (hip, knee, foot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn airborne_state(model: &RobotModel) -> SimState {
        let terrain = Terrain::flat(0.6);
        let mut s = nominal_pose(model, &terrain, 0.33);
        // High enough to stay clear of the ground for a full second.
        s.torso_z = 10.0;
        s.contact_flags = [0; NUM_LEGS];
        s
    }

    #[test]
    fn free_fall_velocity_is_exact() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let contact = ContactParams::default();
        let mut s = airborne_state(&model);
        let torques = [0.0; NUM_JOINTS];
        for _ in 0..400 {
            s = step(&s, &torques, &model, &terrain, &contact, 0.0025).unwrap();
        }
        assert_abs_diff_eq!(s.torso_vz, -9.81, epsilon = 1e-9);
        // Joints feel no relative acceleration in free fall.
        for v in s.planar_joint_velocities {
            assert!(v.abs() < 1e-9, "joint velocity {v}");
        }
    }

    #[test]
    fn straight_leg_foot_height() {
        // Hip-pitch 0 and a fully straight knee (interior angle pi; pure
        // kinematics, outside the physical knee range) put the foot
        // thigh+shank below the hip.
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let mut s = nominal_pose(&model, &terrain, 0.33);
        for leg in 0..NUM_LEGS {
            s.planar_joint_angles[2 * leg] = 0.0;
            s.planar_joint_angles[2 * leg + 1] = std::f64::consts::PI;
        }
        let feet = foot_positions(&s, &model);
        for leg in 0..NUM_LEGS {
            let hip = hip_position(&s, &model, leg);
            assert_abs_diff_eq!(feet[leg].1, hip.1 - (0.22 + 0.25), epsilon = 1e-12);
            assert_abs_diff_eq!(feet[leg].0, hip.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bent_knee_matches_independent_fk() {
        // Knee bent 90 degrees, hip-pitch 0: foot sits thigh_length along
        // the leg axis and shank_length perpendicular to it. The oracle
        // composes 2x2 rotation matrices, independent of seg_dir.
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let mut s = nominal_pose(&model, &terrain, 0.33);
        let q_k = std::f64::consts::FRAC_PI_2;
        for leg in 0..NUM_LEGS {
            s.planar_joint_angles[2 * leg] = 0.0;
            s.planar_joint_angles[2 * leg + 1] = q_k;
        }
        let feet = foot_positions(&s, &model);
        for leg in 0..NUM_LEGS {
            let hip = hip_position(&s, &model, leg);
            let expected = fk_oracle(&model, hip, 0.0, 0.0, q_k);
            assert_abs_diff_eq!(feet[leg].0, expected.0, epsilon = 1e-12);
            assert_abs_diff_eq!(feet[leg].1, expected.1, epsilon = 1e-12);
            // The stated geometry: 0.22 down the leg axis, 0.25 forward.
            assert_abs_diff_eq!(feet[leg].0 - hip.0, 0.25, epsilon = 1e-12);
            assert_abs_diff_eq!(feet[leg].1 - hip.1, -0.22, epsilon = 1e-12);
        }
    }

    /// Independent two-link FK via rotation matrices: thigh rotated by
    /// (q_h - pitch) from straight down, shank rotated a further
    /// (pi - q_k).
    fn fk_oracle(
        model: &RobotModel,
        hip: (f64, f64),
        pitch: f64,
        q_h: f64,
        q_k: f64,
    ) -> (f64, f64) {
        let rot = |a: f64, v: (f64, f64)| -> (f64, f64) {
            // CCW rotation in the x-z plane.
            (a.cos() * v.0 - a.sin() * v.1, a.sin() * v.0 + a.cos() * v.1)
        };
        let down = (0.0, -1.0);
        let thigh_dir = rot(q_h - pitch, down);
        let shank_dir = rot(q_h - pitch + std::f64::consts::PI - q_k, down);
        (
            hip.0 + model.thigh_length * thigh_dir.0 + model.shank_length * shank_dir.0,
            hip.1 + model.thigh_length * thigh_dir.1 + model.shank_length * shank_dir.1,
        )
    }

    #[test]
    fn mirrored_angles_mirror_foot_x() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let mut s = nominal_pose(&model, &terrain, 0.33);
        let (q_h, q_k) = (-0.6, 1.4);
        s.planar_joint_angles[0] = q_h;
        s.planar_joint_angles[1] = q_k;
        // Fore-aft mirror: negate the hip angle and the knee flexion.
        s.planar_joint_angles[2] = -q_h;
        s.planar_joint_angles[3] = 2.0 * std::f64::consts::PI - q_k;
        let feet = foot_positions(&s, &model);
        let hip0 = hip_position(&s, &model, 0);
        let hip1 = hip_position(&s, &model, 1);
        assert_abs_diff_eq!(feet[0].0 - hip0.0, -(feet[1].0 - hip1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(feet[0].1, feet[1].1, epsilon = 1e-12);
    }

    #[test]
    fn contact_flag_boundaries() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let tol = 1e-3;
        let mut s = nominal_pose(&model, &terrain, 0.33);

        // 2 mm below the terrain.
        s.torso_z -= 0.002;
        assert_eq!(detect_contacts(&s, &model, &terrain, tol), [1; NUM_LEGS]);

        // 5 cm above.
        s.torso_z += 0.002 + 0.05;
        assert_eq!(detect_contacts(&s, &model, &terrain, tol), [0; NUM_LEGS]);

        // Exactly at the tolerance counts as contact.
        let mut t = nominal_pose(&model, &terrain, 0.33);
        let feet = foot_positions(&t, &model);
        t.torso_z += tol - (feet[0].1 - terrain.height_at(feet[0].0));
        let flags = detect_contacts(&t, &model, &terrain, tol);
        assert_eq!(flags[0], 1);
    }

    #[test]
    fn reset_is_deterministic_and_unperturbed_when_disabled() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let contact = ContactParams::default();
        let zero = ResetConfig {
            pitch_range: 0.0,
            joint_range: 0.0,
            randomize_gait_phase: false,
            ..ResetConfig::default()
        };
        let (a, pa) = reset(&model, &terrain, &contact, 7, &zero);
        let (b, pb) = reset(&model, &terrain, &contact, 8, &zero);
        assert_eq!(a, b);
        assert_eq!(pa, 0.0);
        assert_eq!(pb, 0.0);
        let nominal = nominal_pose(&model, &terrain, zero.stand_leg_length);
        assert_eq!(a.planar_joint_angles, nominal.planar_joint_angles);

        let cfg = ResetConfig::default();
        let (c, pc) = reset(&model, &terrain, &contact, 42, &cfg);
        let (d, pd) = reset(&model, &terrain, &contact, 42, &cfg);
        assert_eq!(c, d);
        assert_eq!(pc, pd);
    }

    #[test]
    fn reset_pitch_perturbation_is_uniform() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let contact = ContactParams::default();
        let cfg = ResetConfig {
            pitch_range: 0.1,
            joint_range: 0.0,
            randomize_gait_phase: false,
            ..ResetConfig::default()
        };
        let n = 1000;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for seed in 0..n {
            let (s, _) = reset(&model, &terrain, &contact, seed, &cfg);
            min = min.min(s.pitch);
            max = max.max(s.pitch);
            sum += s.pitch;
        }
        assert!(min >= -0.1 && max <= 0.1, "range [{min}, {max}]");
        // 3 sigma of the mean of U(-0.1, 0.1).
        let sigma = 0.2 / (12.0f64).sqrt() / (n as f64).sqrt();
        assert!((sum / n as f64).abs() < 3.0 * sigma);
    }

    #[test]
    fn step_is_deterministic() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let contact = ContactParams::default();
        let (s, _) = reset(&model, &terrain, &contact, 3, &ResetConfig::default());
        let mut torques = [0.0; NUM_JOINTS];
        for (i, t) in torques.iter_mut().enumerate() {
            *t = (i as f64 - 5.5) * 1.7;
        }
        let a = step(&s, &torques, &model, &terrain, &contact, 0.0025).unwrap();
        let b = step(&s, &torques, &model, &terrain, &contact, 0.0025).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn raising_a_foot_clears_its_flag() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let tol = 1e-3;
        let mut s = nominal_pose(&model, &terrain, 0.33);
        // Retract leg 2 well above the tolerance.
        let (q_h, q_k) = leg_inverse_kinematics(&model, (0.0, -0.25));
        s.planar_joint_angles[4] = q_h;
        s.planar_joint_angles[5] = q_k;
        let flags = detect_contacts(&s, &model, &terrain, tol);
        assert_eq!(flags[2], 0);
        assert_eq!(flags[0], 1);
    }

    #[test]
    fn ik_fk_roundtrip() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        for (tx, tz) in [(0.0, -0.33), (0.1, -0.3), (-0.12, -0.35), (0.05, -0.42)] {
            let (q_h, q_k) = leg_inverse_kinematics(&model, (tx, tz));
            let mut s = nominal_pose(&model, &terrain, 0.33);
            s.planar_joint_angles[0] = q_h;
            s.planar_joint_angles[1] = q_k;
            let (hip, _, foot) = leg_points(&s, &model, 0);
            assert_abs_diff_eq!(foot.0 - hip.0, tx, epsilon = 1e-9);
            assert_abs_diff_eq!(foot.1 - hip.1, tz, epsilon = 1e-9);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// Identical inputs give bit-identical successor states.
            #[test]
            fn step_is_pure(
                seed in 0u64..1000,
                torques in proptest::array::uniform12(-50.0f64..50.0),
                vx in -2.0f64..2.0,
                pitch_rate in -3.0f64..3.0,
            ) {
                let model = RobotModel::default();
                let terrain = Terrain::flat(0.6);
                let contact = ContactParams::default();
                let (mut s, _) = reset(&model, &terrain, &contact, seed, &ResetConfig::default());
                s.torso_vx = vx;
                s.pitch_rate = pitch_rate;
                let a = step(&s, &torques, &model, &terrain, &contact, 0.0025).unwrap();
                let b = step(&s, &torques, &model, &terrain, &contact, 0.0025).unwrap();
                prop_assert_eq!(a, b);
            }

            /// Applied torques never exceed the per-class peaks.
            #[test]
            fn torque_clamp_respects_peaks(
                torques in proptest::array::uniform12(-500.0f64..500.0),
            ) {
                let model = RobotModel::default();
                let clamped = model.clamp_torques(&torques);
                for (i, t) in clamped.iter().enumerate() {
                    let peak = model.limits_for(crate::robot::joint_class(i)).torque_peak;
                    prop_assert!(t.abs() <= peak);
                }
            }
        }
    }

    #[test]
    fn ik_clamps_unreachable_targets() {
        let model = RobotModel::default();
        let (q_h, q_k) = leg_inverse_kinematics(&model, (0.0, -2.0));
        assert!(q_k <= model.knee_limits.pos_max);
        assert!(q_h >= model.hip_pitch_limits.pos_min);
        let (_, q_k_short) = leg_inverse_kinematics(&model, (0.0, -0.01));
        assert!(q_k_short >= model.knee_limits.pos_min);
    }
}
