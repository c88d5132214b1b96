//! PD + feedforward torque layer and the model-based SLIP bounding
//! controller used to generate pre-fitting data.
//!
//! The policy (or the SLIP reference) emits target joint positions; a
//! stable PD controller converts them to torques and a gravity
//! feedforward term is added on top. Output torques are always clamped
//! to the per-class peak limits.

use crate::robot::{joint_index, RobotModel, NUM_JOINTS, NUM_LEGS};
use crate::sim::{leg_inverse_kinematics, world_to_body, SimState};

/// Nominal PD stiffness used to express the stance pitch bias (a torque)
/// as a position-target offset.
const NOMINAL_PD_KP: f64 = 60.0;

// Internal reference-controller tuning, calibrated for a bound that
// survives perturbed resets on the default robot.

/// Fraction of the desired-minus-actual speed folded into the stance
/// sweep rate.
const SWEEP_BLEND: f64 = 0.5;

/// Leg-length offset per radian of pitch error, split between the front
/// and hind pairs, m/rad.
const PITCH_LENGTH_GAIN: f64 = 0.1;

/// Pitch-rate weight inside the pitch error.
const PITCH_RATE_WEIGHT: f64 = 0.3;

/// Desired-speed ramp-in time from standstill, s.
const SPEED_RAMP_TIME: f64 = 1.5;

/// Swing-phase leg retraction for ground clearance, m.
const SWING_RETRACT: f64 = 0.12;

/// Commanded leg extension ramped over the second half of stance, m.
const THRUST_EXTENSION: f64 = 0.03;

/// Stance hip torque per m/s of speed error, N*m/(m/s).
const SPEED_PUSH_GAIN: f64 = 20.0;

/// Target joint positions (and optional velocities) for the PD layer.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCommand {
    pub target_positions: [f64; NUM_JOINTS],
    pub target_velocities: [f64; NUM_JOINTS],
}

impl JointCommand {
    /// Build a command from raw targets, clamping positions to the joint
    /// limits. Target velocities default to zero.
    pub fn clamped(model: &RobotModel, targets: &[f64; NUM_JOINTS]) -> Self {
        let mut positions = [0.0; NUM_JOINTS];
        for (i, t) in targets.iter().enumerate() {
            positions[i] = model.clamp_position(i, *t);
        }
        JointCommand {
            target_positions: positions,
            target_velocities: [0.0; NUM_JOINTS],
        }
    }
}

/// PD gains, one entry per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub kp: [f64; NUM_JOINTS],
    pub kd: [f64; NUM_JOINTS],
}

impl GainSet {
    pub fn uniform(kp: f64, kd: f64) -> Self {
        GainSet {
            kp: [kp; NUM_JOINTS],
            kd: [kd; NUM_JOINTS],
        }
    }
}

impl Default for GainSet {
    fn default() -> Self {
        // Stable 3 Hz tracking at the 2.5 ms timestep.
        GainSet::uniform(60.0, 1.5)
    }
}

/// Parameters of the SLIP-style bounding reference controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipParams {
    pub gait_frequency: f64,
    pub duty_factor: f64,
    pub virtual_spring_stiffness: f64,
    pub leg_rest_length: f64,
    pub raibert_speed_gain: f64,
    pub desired_speed: f64,
    pub pitch_gain: f64,
}

impl Default for SlipParams {
    fn default() -> Self {
        SlipParams {
            gait_frequency: 3.0,
            duty_factor: 0.5,
            virtual_spring_stiffness: 4000.0,
            leg_rest_length: 0.42,
            raibert_speed_gain: 0.12,
            desired_speed: 0.9,
            pitch_gain: 20.0,
        }
    }
}

/// tau_i = kp_i (q*_i - q_i) + kd_i (qdot*_i - qdot_i) + tau_ff_i, then
/// clamped to the per-class peak torque.
pub fn pd_torque(
    cmd: &JointCommand,
    state: &SimState,
    gains: &GainSet,
    tau_ff: &[f64; NUM_JOINTS],
    model: &RobotModel,
) -> [f64; NUM_JOINTS] {
    let q = state.joint_positions();
    let qd = state.joint_velocities();
    let mut tau = [0.0; NUM_JOINTS];
    for i in 0..NUM_JOINTS {
        let raw = gains.kp[i] * (cmd.target_positions[i] - q[i])
            + gains.kd[i] * (cmd.target_velocities[i] - qd[i])
            + tau_ff[i];
        tau[i] = model.clamp_torque(i, raw);
    }
    tau
}

/// Gravity-compensation feedforward evaluated at the commanded joint
/// configuration (torso assumed level). Roll entries are zero.
pub fn feedforward(cmd: &JointCommand, model: &RobotModel) -> [f64; NUM_JOINTS] {
    let g = crate::sim::GRAVITY;
    let mut tau = [0.0; NUM_JOINTS];
    for leg in 0..NUM_LEGS {
        let q_h = cmd.target_positions[joint_index(leg, 1)];
        let q_k = cmd.target_positions[joint_index(leg, 2)];
        let alpha_s = q_h + std::f64::consts::PI - q_k;
        let m_t = model.thigh_mass[leg];
        let m_s = model.shank_mass[leg];
        let c_t = model.thigh_com[leg];
        let c_s = model.shank_com[leg];
        let l_t = model.thigh_length;
        // Holding torque = d(potential)/d(q): cancels the gravitational
        // moment of the leg links about each joint.
        tau[joint_index(leg, 1)] =
            g * (m_t * c_t * q_h.sin() + m_s * (l_t * q_h.sin() + c_s * alpha_s.sin()));
        tau[joint_index(leg, 2)] = -g * m_s * c_s * alpha_s.sin();
    }
    tau
}

/// Gait phase bookkeeping shared by the reference controller: front pair
/// at phase 0, hind pair half a period later.
fn leg_phase(t: f64, params: &SlipParams, leg: usize) -> f64 {
    let cycles = params.gait_frequency * t + if leg >= 2 { 0.5 } else { 0.0 };
    cycles - cycles.floor()
}

/// Phase-driven bounding command. In stance the virtual leg follows a
/// compression pulse against the virtual spring plus a pitch-stabilizing
/// hip bias; in swing the foot tracks a Raibert touchdown point. The
/// result is converted through two-link IK, so targets always satisfy
/// the joint limits. Roll targets are zero.
pub fn slip_reference(
    t: f64,
    state: &SimState,
    params: &SlipParams,
    model: &RobotModel,
) -> JointCommand {
    let mut targets = [0.0; NUM_JOINTS];
    let v = state.torso_vx;
    let t_stance = params.duty_factor / params.gait_frequency;
    // Desired speed ramps in from standstill so the transient does not
    // topple the gait.
    let ramp = (t / SPEED_RAMP_TIME).clamp(0.0, 1.0);
    let v_des = params.desired_speed * ramp;
    // Raibert touchdown point, hip-relative.
    let x_td = v * t_stance / 2.0 + params.raibert_speed_gain * (v - v_des);
    // Stance sweep rate biased toward the desired speed so the gait
    // propels itself up to speed instead of only balancing.
    let sweep_v = v + SWEEP_BLEND * (v_des - v);
    let x_lift = x_td - sweep_v * t_stance;
    let rest = params.leg_rest_length.min(model.leg_reach_max() - 0.01);
    // The PD layer tracking a fixed stance length already behaves as the
    // virtual leg spring (kp through the leg Jacobian gives roughly the
    // configured stiffness); stance adds only a late thrust ramp plus a
    // pitch-corrective length split between the pairs. An upward front
    // force pitches the nose up, so a nose-down error (positive pitch)
    // lengthens the front legs and shortens the hind legs.
    let pitch_err = state.pitch + PITCH_RATE_WEIGHT * state.pitch_rate;
    let pitch_len = (PITCH_LENGTH_GAIN * pitch_err).clamp(-0.06, 0.06);

    for leg in 0..NUM_LEGS {
        let phase = leg_phase(t, params, leg);
        let stance = phase < params.duty_factor;
        let front = leg < 2;
        let (mut fx, r) = if stance {
            let s = phase / params.duty_factor;
            // Leg sweeps back as the hip passes over the planted foot.
            let fx = x_td - sweep_v * t_stance * s;
            let thrust = if s > 0.5 {
                THRUST_EXTENSION * (std::f64::consts::PI * (2.0 * s - 1.0)).sin()
            } else {
                0.0
            };
            let r = rest + thrust + if front { pitch_len } else { -pitch_len };
            (fx, r)
        } else {
            let s = (phase - params.duty_factor) / (1.0 - params.duty_factor);
            let blend = 0.5 * (1.0 - (std::f64::consts::PI * s).cos());
            let fx = x_lift + (x_td - x_lift) * blend;
            // Retract during swing for ground clearance.
            let r = rest - SWING_RETRACT * (std::f64::consts::PI * s).sin();
            (fx, r)
        };
        let r = r.clamp(model.leg_reach_min() + 0.01, model.leg_reach_max() - 0.001);
        // Keep the target inside the leg workspace cone.
        fx = fx.clamp(-0.8 * r, 0.8 * r);
        let fz = -(r * r - fx * fx).sqrt();
        // World-frame placement expressed in the torso frame.
        let local = world_to_body(state.pitch, (fx, fz));
        let (mut q_h, q_k) = leg_inverse_kinematics(model, local);
        if stance {
            // Hip torque biases realized as target offsets: pitch
            // stabilization plus a rowing push toward the desired speed
            // (negative hip torque sweeps the planted leg backward,
            // driving the body forward).
            let tau_bias = -params.pitch_gain * pitch_err;
            let tau_push = -SPEED_PUSH_GAIN * (v_des - v);
            q_h = model.clamp_position(
                joint_index(leg, 1),
                q_h + (tau_bias + tau_push) / NOMINAL_PD_KP,
            );
        }
        targets[joint_index(leg, 1)] = q_h;
        targets[joint_index(leg, 2)] = q_k;
    }
    JointCommand {
        target_positions: targets,
        target_velocities: [0.0; NUM_JOINTS],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{nominal_pose, ContactParams, ResetConfig, Terrain};
    use approx::assert_abs_diff_eq;

    fn standing_state() -> (RobotModel, SimState) {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let s = nominal_pose(&model, &terrain, 0.33);
        (model, s)
    }

    #[test]
    fn pd_formula_matches_hand_arithmetic() {
        let (model, mut state) = standing_state();
        // kp 60, position error 0.1, kd 2, qdot 0.5, qdot* 0, ff 3 -> 8.0.
        state.planar_joint_angles[0] = 0.2;
        state.planar_joint_velocities[0] = 0.5;
        let mut cmd = JointCommand {
            target_positions: state.joint_positions(),
            target_velocities: [0.0; NUM_JOINTS],
        };
        cmd.target_positions[joint_index(0, 1)] = 0.2 + 0.1;
        let gains = GainSet::uniform(60.0, 2.0);
        let mut ff = [0.0; NUM_JOINTS];
        ff[joint_index(0, 1)] = 3.0;
        let tau = pd_torque(&cmd, &state, &gains, &ff, &model);
        assert_abs_diff_eq!(tau[joint_index(0, 1)], 8.0, epsilon = 1e-12);
    }

    #[test]
    fn pd_zero_error_zero_torque() {
        let (model, state) = standing_state();
        let cmd = JointCommand {
            target_positions: state.joint_positions(),
            target_velocities: [0.0; NUM_JOINTS],
        };
        let tau = pd_torque(&cmd, &state, &GainSet::default(), &[0.0; NUM_JOINTS], &model);
        assert_eq!(tau, [0.0; NUM_JOINTS]);
    }

    #[test]
    fn pd_clamps_to_peak() {
        let (model, state) = standing_state();
        let mut cmd = JointCommand {
            target_positions: state.joint_positions(),
            target_velocities: [0.0; NUM_JOINTS],
        };
        // 55 N*m of raw knee torque demand.
        let knee = joint_index(0, 2);
        cmd.target_positions[knee] += 55.0 / 60.0;
        let tau = pd_torque(&cmd, &state, &GainSet::uniform(60.0, 0.0), &[0.0; NUM_JOINTS], &model);
        assert_abs_diff_eq!(tau[knee], 41.5, epsilon = 1e-12);
    }

    #[test]
    fn pd_is_affine_in_errors() {
        let (model, mut state) = standing_state();
        state.planar_joint_velocities[2] = -0.3;
        let mut cmd = JointCommand {
            target_positions: state.joint_positions(),
            target_velocities: [0.0; NUM_JOINTS],
        };
        let hp = joint_index(1, 1);
        cmd.target_positions[hp] += 0.05;
        let gains = GainSet::default();
        let tau1 = pd_torque(&cmd, &state, &gains, &[0.0; NUM_JOINTS], &model);
        // Double both errors.
        let mut cmd2 = cmd.clone();
        cmd2.target_positions[hp] += 0.05;
        let mut state2 = state.clone();
        state2.planar_joint_velocities[2] *= 2.0;
        let tau2 = pd_torque(&cmd2, &state2, &gains, &[0.0; NUM_JOINTS], &model);
        assert_abs_diff_eq!(tau2[hp], 2.0 * tau1[hp], epsilon = 1e-12);
    }

    #[test]
    fn feedforward_zero_for_massless_links() {
        let mut model = RobotModel::default();
        model.thigh_mass = [0.0; NUM_LEGS];
        model.shank_mass = [0.0; NUM_LEGS];
        let cmd = JointCommand::clamped(&model, &[0.3; NUM_JOINTS]);
        assert_eq!(feedforward(&cmd, &model), [0.0; NUM_JOINTS]);
    }

    #[test]
    fn feedforward_zero_for_vertical_leg() {
        // Both links pointing straight down: q_h = 0, straight knee.
        let model = RobotModel::default();
        let mut targets = [0.0; NUM_JOINTS];
        for leg in 0..NUM_LEGS {
            targets[joint_index(leg, 1)] = 0.0;
            targets[joint_index(leg, 2)] = std::f64::consts::PI;
        }
        let cmd = JointCommand {
            target_positions: targets,
            target_velocities: [0.0; NUM_JOINTS],
        };
        let tau = feedforward(&cmd, &model);
        for leg in 0..NUM_LEGS {
            assert_abs_diff_eq!(tau[joint_index(leg, 1)], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(tau[joint_index(leg, 2)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn feedforward_matches_statics_oracle_for_horizontal_thigh() {
        // Thigh horizontal (q_h = pi/2), knee bent 90 degrees. The oracle
        // sums moments of each link's weight about the hip and knee from
        // explicit CoM positions.
        let model = RobotModel::default();
        let q_h = std::f64::consts::FRAC_PI_2;
        let q_k = std::f64::consts::FRAC_PI_2;
        let mut targets = [0.0; NUM_JOINTS];
        targets[joint_index(0, 1)] = q_h;
        targets[joint_index(0, 2)] = q_k;
        let cmd = JointCommand {
            target_positions: targets,
            target_velocities: [0.0; NUM_JOINTS],
        };
        let tau = feedforward(&cmd, &model);

        let g = crate::sim::GRAVITY;
        let alpha_s = q_h + std::f64::consts::PI - q_k;
        // Horizontal lever arms of the two CoMs about the hip.
        let thigh_arm = model.thigh_com[0] * q_h.sin();
        let shank_arm = model.thigh_length * q_h.sin() + model.shank_com[0] * alpha_s.sin();
        let expected_hip =
            g * (model.thigh_mass[0] * thigh_arm + model.shank_mass[0] * shank_arm);
        assert_abs_diff_eq!(tau[joint_index(0, 1)], expected_hip, epsilon = 1e-12);
        // d = horizontal distance from hip to shank CoM appears with the
        // stated (m_t c_t + m_s d) g structure.
        let stated = g * (model.thigh_mass[0] * model.thigh_com[0] + model.shank_mass[0] * shank_arm);
        assert_abs_diff_eq!(expected_hip, stated, epsilon = 1e-12);

        let expected_knee = -g * model.shank_mass[0] * model.shank_com[0] * alpha_s.sin();
        assert_abs_diff_eq!(tau[joint_index(0, 2)], expected_knee, epsilon = 1e-12);
    }

    #[test]
    fn slip_neutral_placement_is_under_hip() {
        // Zero body velocity and zero speed gain: the swing target sits
        // directly under the hip, so IK returns the crouch for the
        // current swing leg length.
        let (model, mut state) = standing_state();
        state.torso_vx = 0.0;
        let params = SlipParams {
            raibert_speed_gain: 0.0,
            desired_speed: 0.0,
            ..SlipParams::default()
        };
        // Mid-swing for the front pair.
        let t = (params.duty_factor + 0.5 * (1.0 - params.duty_factor)) / params.gait_frequency;
        let cmd = slip_reference(t, &state, &params, &model);
        let r = params.leg_rest_length.min(model.leg_reach_max() - 0.01) - 0.12;
        let (q_h, q_k) = leg_inverse_kinematics(&model, (0.0, -r));
        assert_abs_diff_eq!(cmd.target_positions[joint_index(0, 1)], q_h, epsilon = 1e-9);
        assert_abs_diff_eq!(cmd.target_positions[joint_index(0, 2)], q_k, epsilon = 1e-9);
    }

    #[test]
    fn slip_is_periodic() {
        // Past the startup speed ramp the command is a pure function of
        // the gait phase, so shifting time by one period changes nothing.
        let (model, mut state) = standing_state();
        state.torso_vx = 0.7;
        let params = SlipParams::default();
        for t in [2.01, 2.1, 2.2] {
            let a = slip_reference(t, &state, &params, &model);
            let b = slip_reference(t + 1.0 / params.gait_frequency, &state, &params, &model);
            for i in 0..NUM_JOINTS {
                assert_abs_diff_eq!(
                    a.target_positions[i],
                    b.target_positions[i],
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn slip_front_hind_half_period_apart() {
        let params = SlipParams::default();
        for t in [0.0, 0.04, 0.123, 0.9] {
            let front = leg_phase(t, &params, 0);
            let hind = leg_phase(t, &params, 2);
            let diff = (front - hind).rem_euclid(1.0);
            assert_abs_diff_eq!(diff, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn slip_raibert_offset_matches_formula() {
        // v = desired = 1.0: foothold offset is exactly v * T_stance / 2
        // at the touchdown instant.
        let (model, mut state) = standing_state();
        state.torso_vx = 1.0;
        let params = SlipParams {
            desired_speed: 1.0,
            ..SlipParams::default()
        };
        let t_stance = params.duty_factor / params.gait_frequency;
        let expected_x = 1.0 * t_stance / 2.0;
        // End of swing (phase -> 1) approaches the touchdown target; pick
        // a time past the startup ramp so the speed-error term is zero.
        let t = (6.0 + 0.9999) / params.gait_frequency;
        let cmd = slip_reference(t, &state, &params, &model);
        let rest = params.leg_rest_length.min(model.leg_reach_max() - 0.01);
        let s_sw = (0.9999 - params.duty_factor) / (1.0 - params.duty_factor);
        let r = rest - 0.12 * (std::f64::consts::PI * s_sw).sin();
        let (q_h_exp, q_k_exp) =
            leg_inverse_kinematics(&model, (expected_x, -(r * r - expected_x * expected_x).sqrt()));
        assert_abs_diff_eq!(
            cmd.target_positions[joint_index(0, 1)],
            q_h_exp,
            epsilon = 1e-3
        );
        assert_abs_diff_eq!(
            cmd.target_positions[joint_index(0, 2)],
            q_k_exp,
            epsilon = 1e-3
        );
    }

    #[test]
    fn slip_targets_respect_limits() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let contact = ContactParams::default();
        let params = SlipParams::default();
        let mut rng = crate::rng::Stream::seeded(11);
        for trial in 0..50 {
            let (mut state, _) =
                crate::sim::reset(&model, &terrain, &contact, trial, &ResetConfig::default());
            state.torso_vx = rng.symmetric(2.0);
            state.pitch = rng.symmetric(0.5);
            state.pitch_rate = rng.symmetric(2.0);
            let t = rng.uniform_in(0.0, 3.0);
            let cmd = slip_reference(t, &state, &params, &model);
            for i in 0..NUM_JOINTS {
                let class = crate::robot::joint_class(i);
                let l = model.limits_for(class);
                assert!(
                    cmd.target_positions[i] >= l.pos_min - 1e-12
                        && cmd.target_positions[i] <= l.pos_max + 1e-12,
                    "joint {i} target {} outside [{}, {}]",
                    cmd.target_positions[i],
                    l.pos_min,
                    l.pos_max
                );
            }
        }
    }
}
