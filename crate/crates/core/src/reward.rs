//! Reward terms, the periodic gait signal, and episode termination.
//!
//! The gait reward couples a zero-symmetric periodic signal S_i(t) with
//! the contact indicator G(i, t): with a negative coefficient, contact
//! while S_i > 0 (commanded swing) is penalized and contact while
//! S_i < 0 (commanded stance) is rewarded. Front feet share one phase,
//! hind feet the opposite phase, so a bound earns the maximum gait
//! reward while pronking does not.

use crate::robot::{joint_index, RobotModel, NUM_JOINTS, NUM_LEGS};
use crate::sim::{torso_lowest_height, SimState, Terrain};

/// Coefficients of the eight reward terms. Defaults are the published
/// coefficient table; the pitch-limitation row is applied as a penalty
/// (`pitch_limit_sign` = -1) since it belongs to the safety costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub body_velocity_k: f64,
    pub joint_torque_k: f64,
    pub joint_torque_c: f64,
    pub joint_velocity_k: f64,
    pub joint_velocity_c: f64,
    pub gait_k: f64,
    pub position_uniformity_k: f64,
    pub torque_uniformity_k: f64,
    pub smoothness_k: f64,
    pub pitch_limit_k: f64,
    pub pitch_threshold: f64,
    pub pitch_limit_sign: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            body_velocity_k: 160.0,
            joint_torque_k: -0.002,
            joint_torque_c: 0.04,
            joint_velocity_k: -0.0003,
            joint_velocity_c: 0.02,
            gait_k: -50.0,
            position_uniformity_k: -0.01,
            torque_uniformity_k: -0.001,
            smoothness_k: -1e-6,
            pitch_limit_k: 20.0,
            pitch_threshold: 0.3,
            pitch_limit_sign: -1.0,
        }
    }
}

/// Gait signal parameters: angular frequency and per-foot phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitSignalParams {
    pub omega: f64,
    pub per_foot_phase: [f64; NUM_LEGS],
}

impl Default for GaitSignalParams {
    fn default() -> Self {
        GaitSignalParams {
            omega: 2.0 * std::f64::consts::PI * 3.0,
            per_foot_phase: [0.0, 0.0, std::f64::consts::PI, std::f64::consts::PI],
        }
    }
}

impl GaitSignalParams {
    /// Shift every foot phase by a fraction of a period (used by the
    /// per-episode gait-phase randomization).
    pub fn with_phase_offset(mut self, fraction: f64) -> Self {
        for p in &mut self.per_foot_phase {
            *p += 2.0 * std::f64::consts::PI * fraction;
        }
        self
    }
}

/// Third-order superposition of trigonometric functions evaluated at a
/// raw angle x.
pub fn gait_signal_at(x: f64) -> f64 {
    x.sin() + (3.0 * x).sin() / 3.0 + (5.0 * x).sin() / 5.0
}

/// S_i(t) for foot `foot`.
pub fn gait_signal(t: f64, params: &GaitSignalParams, foot: usize) -> f64 {
    gait_signal_at(params.omega * t + params.per_foot_phase[foot])
}

/// Per-term reward values. `total` is the exact sum of the fields in
/// declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub body_velocity: f64,
    pub joint_torque: f64,
    pub joint_velocity: f64,
    pub gait: f64,
    pub position_uniformity: f64,
    pub torque_uniformity: f64,
    pub smoothness: f64,
    pub pitch_limitation: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn terms(&self) -> [f64; 8] {
        [
            self.body_velocity,
            self.joint_torque,
            self.joint_velocity,
            self.gait,
            self.position_uniformity,
            self.torque_uniformity,
            self.smoothness,
            self.pitch_limitation,
        ]
    }
}

/// All eight reward terms for one control step. `t` is the time since
/// episode start; torques are the applied (clamped) 12-joint vectors of
/// this and the previous control step.
pub fn compute_reward(
    _prev: &SimState,
    cur: &SimState,
    torques: &[f64; NUM_JOINTS],
    prev_torques: &[f64; NUM_JOINTS],
    t: f64,
    w: &RewardWeights,
    g: &GaitSignalParams,
) -> RewardBreakdown {
    let mut out = RewardBreakdown::default();

    // Planar model: v_y is identically zero.
    let vx = cur.torso_vx;
    out.body_velocity = w.body_velocity_k * (vx * vx);

    let torque_sum: f64 = torques.iter().map(|x| x.abs()).sum();
    out.joint_torque = w.joint_torque_k * (w.joint_torque_c * t).tanh() * torque_sum;

    let qd = cur.joint_velocities();
    let vel_sum: f64 = qd.iter().map(|x| x.abs()).sum();
    out.joint_velocity = w.joint_velocity_k * (w.joint_velocity_c * t).tanh() * vel_sum;

    let mut gait = 0.0;
    for foot in 0..NUM_LEGS {
        if cur.contact_flags[foot] == 1 {
            gait += gait_signal(t, g, foot);
        }
    }
    out.gait = w.gait_k * gait;

    let q = cur.joint_positions();
    out.position_uniformity =
        w.position_uniformity_k * (pair_l1(&q, 0, 1) + pair_l1(&q, 2, 3));
    out.torque_uniformity =
        w.torque_uniformity_k * (pair_l1(torques, 0, 1) + pair_l1(torques, 2, 3));

    let mut delta_sq = 0.0;
    for i in 0..NUM_JOINTS {
        let d = torques[i] - prev_torques[i];
        delta_sq += d * d;
    }
    out.smoothness = w.smoothness_k * delta_sq.sqrt();

    let phi = cur.pitch.abs();
    out.pitch_limitation = if phi > w.pitch_threshold {
        w.pitch_limit_sign * w.pitch_limit_k * (phi - w.pitch_threshold)
    } else {
        0.0
    };

    out.total = out.terms().iter().sum();
    out
}

/// L1 distance between the 3-joint vectors of two legs.
fn pair_l1(values: &[f64; NUM_JOINTS], leg_a: usize, leg_b: usize) -> f64 {
    (0..3)
        .map(|s| (values[joint_index(leg_a, s)] - values[joint_index(leg_b, s)]).abs())
        .sum()
}

/// Episode termination thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationRule {
    pub min_body_height: f64,
    pub max_abs_pitch: f64,
    pub torso_contact_fails: bool,
    pub max_episode_duration: f64,
}

impl Default for TerminationRule {
    fn default() -> Self {
        TerminationRule {
            min_body_height: 0.15,
            max_abs_pitch: 1.0,
            torso_contact_fails: true,
            max_episode_duration: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Continue,
    /// The robot fell (height, pitch or torso contact).
    Fallen(FallReason),
    /// The episode reached its maximum duration.
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallReason {
    Height,
    Pitch,
    TorsoContact,
}

impl Termination {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Termination::Continue)
    }
}

/// Check the termination rule for a state at `elapsed` seconds since
/// episode start.
pub fn check_termination(
    state: &SimState,
    model: &RobotModel,
    terrain: &Terrain,
    rule: &TerminationRule,
    elapsed: f64,
) -> Termination {
    let ground = terrain.height_at(state.torso_x);
    if state.torso_z - ground < rule.min_body_height {
        return Termination::Fallen(FallReason::Height);
    }
    if state.pitch.abs() > rule.max_abs_pitch {
        return Termination::Fallen(FallReason::Pitch);
    }
    if rule.torso_contact_fails && torso_lowest_height(state, model, terrain) <= 0.0 {
        return Termination::Fallen(FallReason::TorsoContact);
    }
    if elapsed > rule.max_episode_duration {
        return Termination::Timeout;
    }
    Termination::Continue
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{nominal_pose, ContactParams, ResetConfig, Terrain};
    use approx::assert_abs_diff_eq;

    const FRAC_13_15: f64 = 13.0 / 15.0;

    #[test]
    fn signal_zero_at_zero() {
        assert_eq!(gait_signal_at(0.0), 0.0);
    }

    #[test]
    fn signal_quarter_period_value() {
        assert_abs_diff_eq!(
            gait_signal_at(std::f64::consts::FRAC_PI_2),
            FRAC_13_15,
            epsilon = 1e-12
        );
    }

    #[test]
    fn signal_rms_exceeds_plain_sine() {
        // Midpoint rule over one period is exact (to rounding) for a
        // trigonometric polynomial of degree 5.
        let n = 4096;
        let mut acc = 0.0;
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64 * 2.0 * std::f64::consts::PI;
            let s = gait_signal_at(x);
            acc += s * s;
        }
        let rms = (acc / n as f64).sqrt();
        let expected = ((1.0 + 1.0 / 9.0 + 1.0 / 25.0) / 2.0f64).sqrt();
        assert_abs_diff_eq!(rms, expected, epsilon = 1e-9);
        assert!(rms > std::f64::consts::FRAC_1_SQRT_2);
    }

    #[test]
    fn signal_half_period_antisymmetry_and_periodicity() {
        let params = GaitSignalParams::default();
        let half = std::f64::consts::PI / params.omega;
        for i in 0..200 {
            let t = i as f64 * 0.0013;
            let s = gait_signal(t, &params, 0);
            assert_abs_diff_eq!(gait_signal(t + half, &params, 0), -s, epsilon = 1e-12);
            assert_abs_diff_eq!(gait_signal(t + 2.0 * half, &params, 0), s, epsilon = 1e-12);
        }
    }

    #[test]
    fn front_and_hind_signals_are_negations() {
        let params = GaitSignalParams::default();
        for i in 0..100 {
            let t = i as f64 * 0.003;
            assert_eq!(gait_signal(t, &params, 0), gait_signal(t, &params, 1));
            assert_eq!(gait_signal(t, &params, 2), gait_signal(t, &params, 3));
            assert_abs_diff_eq!(
                gait_signal(t, &params, 2),
                -gait_signal(t, &params, 0),
                epsilon = 1e-12
            );
        }
    }

    fn fixture() -> (RobotModel, SimState) {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let state = nominal_pose(&model, &terrain, 0.33);
        (model, state)
    }

    #[test]
    fn body_velocity_term() {
        let (_, mut state) = fixture();
        state.torso_vx = 1.0;
        state.contact_flags = [0; NUM_LEGS];
        let r = compute_reward(
            &state.clone(),
            &state,
            &[0.0; NUM_JOINTS],
            &[0.0; NUM_JOINTS],
            1.0,
            &RewardWeights::default(),
            &GaitSignalParams::default(),
        );
        assert_abs_diff_eq!(r.body_velocity, 160.0, epsilon = 1e-12);
    }

    #[test]
    fn torque_terms_zero_at_episode_start() {
        let (_, state) = fixture();
        let torques = [10.0; NUM_JOINTS];
        let r = compute_reward(
            &state.clone(),
            &state,
            &torques,
            &[0.0; NUM_JOINTS],
            0.0,
            &RewardWeights::default(),
            &GaitSignalParams::default(),
        );
        assert_eq!(r.joint_torque, 0.0);
        assert_eq!(r.joint_velocity, 0.0);
    }

    #[test]
    fn gait_term_all_feet_at_quarter_period() {
        // Degenerate phase vector (all zeros) with every foot in contact
        // at x = pi/2: gait term is k * 4 * 13/15.
        let (_, mut state) = fixture();
        state.contact_flags = [1; NUM_LEGS];
        let g = GaitSignalParams {
            omega: 1.0,
            per_foot_phase: [0.0; NUM_LEGS],
        };
        let r = compute_reward(
            &state.clone(),
            &state,
            &[0.0; NUM_JOINTS],
            &[0.0; NUM_JOINTS],
            std::f64::consts::FRAC_PI_2,
            &RewardWeights::default(),
            &g,
        );
        assert_abs_diff_eq!(r.gait, -50.0 * 4.0 * FRAC_13_15, epsilon = 1e-9);
    }

    #[test]
    fn gait_term_zero_without_contact() {
        let (_, mut state) = fixture();
        state.contact_flags = [0; NUM_LEGS];
        let r = compute_reward(
            &state.clone(),
            &state,
            &[0.0; NUM_JOINTS],
            &[0.0; NUM_JOINTS],
            0.123,
            &RewardWeights::default(),
            &GaitSignalParams::default(),
        );
        assert_eq!(r.gait, 0.0);
    }

    #[test]
    fn uniformity_and_smoothness_terms() {
        let (_, mut state) = fixture();
        state.contact_flags = [0; NUM_LEGS];
        // Perturb LF hip-pitch by 0.2 relative to RF.
        state.planar_joint_angles[0] += 0.2;
        let mut torques = [0.0; NUM_JOINTS];
        torques[joint_index(0, 2)] = 3.0; // LF knee differs from RF knee
        let prev_t = [0.0; NUM_JOINTS];
        let r = compute_reward(
            &state.clone(),
            &state,
            &torques,
            &prev_t,
            0.0,
            &RewardWeights::default(),
            &GaitSignalParams::default(),
        );
        assert_abs_diff_eq!(r.position_uniformity, -0.01 * 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(r.torque_uniformity, -0.001 * 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.smoothness, -1e-6 * 3.0, epsilon = 1e-15);
    }

    #[test]
    fn pitch_limitation_kicks_in_past_threshold() {
        let (_, mut state) = fixture();
        state.contact_flags = [0; NUM_LEGS];
        state.pitch = 0.25;
        let w = RewardWeights::default();
        let g = GaitSignalParams::default();
        let zero = compute_reward(
            &state.clone(),
            &state,
            &[0.0; NUM_JOINTS],
            &[0.0; NUM_JOINTS],
            0.0,
            &w,
            &g,
        );
        assert_eq!(zero.pitch_limitation, 0.0);
        state.pitch = -0.5;
        let hit = compute_reward(
            &state.clone(),
            &state,
            &[0.0; NUM_JOINTS],
            &[0.0; NUM_JOINTS],
            0.0,
            &w,
            &g,
        );
        assert_abs_diff_eq!(hit.pitch_limitation, -20.0 * 0.2, epsilon = 1e-12);
    }

    #[test]
    fn total_is_exact_sum_and_reward_is_pure() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let contact = ContactParams::default();
        let (mut state, _) =
            crate::sim::reset(&model, &terrain, &contact, 5, &ResetConfig::default());
        state.torso_vx = 0.8;
        state.contact_flags = [1, 0, 1, 0];
        let torques = [2.0; NUM_JOINTS];
        let prev_t = [1.0; NUM_JOINTS];
        let w = RewardWeights::default();
        let g = GaitSignalParams::default();
        let a = compute_reward(&state.clone(), &state, &torques, &prev_t, 0.7, &w, &g);
        let b = compute_reward(&state.clone(), &state, &torques, &prev_t, 0.7, &w, &g);
        assert_eq!(a, b);
        let sum: f64 = a.terms().iter().sum();
        assert_eq!(a.total, sum);
    }

    #[test]
    fn cost_terms_monotone_in_magnitudes() {
        let (_, state) = fixture();
        let w = RewardWeights::default();
        let g = GaitSignalParams::default();
        let small = compute_reward(
            &state.clone(),
            &state,
            &[1.0; NUM_JOINTS],
            &[1.0; NUM_JOINTS],
            2.0,
            &w,
            &g,
        );
        let large = compute_reward(
            &state.clone(),
            &state,
            &[5.0; NUM_JOINTS],
            &[5.0; NUM_JOINTS],
            2.0,
            &w,
            &g,
        );
        assert!(large.joint_torque < small.joint_torque);
    }

    #[test]
    fn termination_cases() {
        let model = RobotModel::default();
        let terrain = Terrain::flat(0.6);
        let rule = TerminationRule::default();
        let state = nominal_pose(&model, &terrain, 0.33);
        assert_eq!(
            check_termination(&state, &model, &terrain, &rule, 1.0),
            Termination::Continue
        );

        let mut pitched = state.clone();
        pitched.pitch = 1.2;
        assert_eq!(
            check_termination(&pitched, &model, &terrain, &rule, 1.0),
            Termination::Fallen(FallReason::Pitch)
        );

        let mut low = state.clone();
        low.torso_z = 0.10;
        assert!(matches!(
            check_termination(&low, &model, &terrain, &rule, 1.0),
            Termination::Fallen(_)
        ));

        assert_eq!(
            check_termination(&state, &model, &terrain, &rule, 8.5),
            Termination::Timeout
        );
    }
}
