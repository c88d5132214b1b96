//! One simulated environment: the simulator plus the control loop.
//!
//! The policy (or the SLIP reference) runs once per control period
//! (10 ms); the PD layer recomputes torques every two simulator steps
//! (5 ms); the simulator advances at 2.5 ms. Rewards and termination are
//! evaluated once per control step.

use crate::control::{feedforward, pd_torque, GainSet, JointCommand};
use crate::error::Result;
use crate::observation::{FeatureConfig, ObservationBuilder, ObservationVector};
use crate::reward::{
    check_termination, compute_reward, GaitSignalParams, RewardBreakdown, RewardWeights,
    Termination, TerminationRule,
};
use crate::robot::{RobotModel, NUM_JOINTS};
use crate::sim::{reset, step, ContactParams, ResetConfig, SimState, Terrain};

/// Static configuration shared by every environment instance.
#[derive(Debug, Clone)]
pub struct EnvParams {
    pub contact: ContactParams,
    pub gains: GainSet,
    pub feature: FeatureConfig,
    pub termination: TerminationRule,
    pub reward_weights: RewardWeights,
    pub gait: GaitSignalParams,
    pub reset_cfg: ResetConfig,
    pub sim_dt: f64,
    pub substeps_per_control: usize,
    pub pd_every_substeps: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            contact: ContactParams::default(),
            gains: GainSet::default(),
            feature: FeatureConfig::default(),
            termination: TerminationRule::default(),
            reward_weights: RewardWeights::default(),
            gait: GaitSignalParams::default(),
            reset_cfg: ResetConfig::default(),
            sim_dt: 0.0025,
            substeps_per_control: 4,
            pd_every_substeps: 2,
        }
    }
}

impl EnvParams {
    pub fn control_dt(&self) -> f64 {
        self.sim_dt * self.substeps_per_control as f64
    }
}

/// Result of one control step.
#[derive(Debug, Clone)]
pub struct ControlStepOutcome {
    pub reward: RewardBreakdown,
    pub termination: Termination,
    /// Applied (clamped) torques at the last PD update of the step.
    pub applied_torques: [f64; NUM_JOINTS],
}

/// A single environment: owns its simulator state, active (possibly
/// randomized) model and terrain, and the per-episode gait clock.
#[derive(Debug, Clone)]
pub struct BoundEnv {
    pub params: EnvParams,
    model: RobotModel,
    terrain: Terrain,
    state: SimState,
    obs_builder: ObservationBuilder,
    /// Gait signal with this episode's phase offset folded in.
    episode_gait: GaitSignalParams,
    /// Additive offset for phase-driven reference controllers, s.
    slip_time_offset: f64,
    episode_time: f64,
    prev_control_torques: [f64; NUM_JOINTS],
}

impl BoundEnv {
    pub fn new(params: EnvParams, model: RobotModel, terrain: Terrain, seed: u64) -> Self {
        let control_dt = params.control_dt();
        let mut env = BoundEnv {
            obs_builder: ObservationBuilder::new(params.feature, control_dt),
            episode_gait: params.gait,
            params,
            model: model.clone(),
            terrain: terrain.clone(),
            state: SimState {
                torso_x: 0.0,
                torso_z: 0.0,
                pitch: 0.0,
                torso_vx: 0.0,
                torso_vz: 0.0,
                pitch_rate: 0.0,
                planar_joint_angles: [0.0; 8],
                planar_joint_velocities: [0.0; 8],
                roll_servo_angles: [0.0; 4],
                roll_servo_velocities: [0.0; 4],
                contact_flags: [0; 4],
                contact_forces: [0.0; 4],
                time: 0.0,
                steps: 0,
            },
            slip_time_offset: 0.0,
            episode_time: 0.0,
            prev_control_torques: [0.0; NUM_JOINTS],
        };
        env.reset_with(model, terrain, seed);
        env
    }

    /// Start a new episode on the given (possibly randomized) model and
    /// terrain.
    pub fn reset_with(&mut self, model: RobotModel, terrain: Terrain, seed: u64) {
        let (state, phase_frac) = reset(
            &model,
            &terrain,
            &self.params.contact,
            seed,
            &self.params.reset_cfg,
        );
        self.model = model;
        self.terrain = terrain;
        self.state = state;
        self.obs_builder.reset();
        self.episode_gait = self.params.gait.with_phase_offset(phase_frac);
        // The same phase offset drives time-based reference controllers.
        let period = 2.0 * std::f64::consts::PI / self.params.gait.omega;
        self.slip_time_offset = phase_frac * period;
        self.episode_time = 0.0;
        self.prev_control_torques = [0.0; NUM_JOINTS];
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn terrain(&self) -> &Terrain {
        &self.terrain
    }

    pub fn episode_time(&self) -> f64 {
        self.episode_time
    }

    /// Episode-phase-adjusted time for phase-driven controllers.
    pub fn reference_time(&self) -> f64 {
        self.episode_time + self.slip_time_offset
    }

    pub fn gait_params(&self) -> &GaitSignalParams {
        &self.episode_gait
    }

    /// Observation of the current state. Call exactly once per control
    /// step: the IMU acceleration cache advances on every call.
    pub fn observe(&mut self) -> ObservationVector {
        self.obs_builder.observe(&self.state, &self.model)
    }

    /// Observation of the current state without advancing the IMU
    /// acceleration cache (for value bootstraps and diagnostics).
    pub fn peek_observation(&self) -> ObservationVector {
        self.obs_builder.clone().observe(&self.state, &self.model)
    }

    /// Apply target joint positions for one control period.
    pub fn step_control(&mut self, targets: &[f64; NUM_JOINTS]) -> Result<ControlStepOutcome> {
        let cmd = JointCommand::clamped(&self.model, targets);
        let ff = feedforward(&cmd, &self.model);
        let prev_state = self.state.clone();
        let mut torques = [0.0; NUM_JOINTS];
        for sub in 0..self.params.substeps_per_control {
            if sub % self.params.pd_every_substeps == 0 {
                torques = pd_torque(&cmd, &self.state, &self.params.gains, &ff, &self.model);
            }
            self.state = step(
                &self.state,
                &torques,
                &self.model,
                &self.terrain,
                &self.params.contact,
                self.params.sim_dt,
            )?;
        }
        self.episode_time += self.params.control_dt();

        let reward = compute_reward(
            &prev_state,
            &self.state,
            &torques,
            &self.prev_control_torques,
            self.episode_time,
            &self.params.reward_weights,
            &self.episode_gait,
        );
        self.prev_control_torques = torques;

        let termination = check_termination(
            &self.state,
            &self.model,
            &self.terrain,
            &self.params.termination,
            self.episode_time,
        );

        Ok(ControlStepOutcome {
            reward,
            termination,
            applied_torques: torques,
        })
    }
}
