//! Run configuration: a flat `section.key = value` file.
//!
//! Every pipeline parameter lives here with a default; unknown keys are
//! rejected. `resolved_string` renders the fully-resolved configuration
//! in canonical order, and re-running from that file reproduces the
//! original run byte-for-byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::control::{GainSet, SlipParams};
use crate::env::EnvParams;
use crate::error::{BounderError, Result};
use crate::neural::{MlpSpec, OptimizerKind};
use crate::observation::{FeatureConfig, FeatureMode};
use crate::prefit::{BatchMode, SchedulePhase, TrainingSchedule};
use crate::reward::{GaitSignalParams, RewardWeights, TerminationRule};
use crate::robot::RobotModel;
use crate::sim::{ContactParams, ResetConfig, Terrain};
use crate::trainer::{DomainRandomizationConfig, PpoConfig};

/// Environment variable overriding `run.out_dir`.
pub const OUT_DIR_ENV: &str = "BOUNDER_OUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,

    pub sim_dt: f64,
    pub substeps_per_control: usize,
    pub pd_every_substeps: usize,

    // Robot (positions in degrees, mirroring the spec sheet).
    pub torso_mass: f64,
    pub torso_inertia_pitch: f64,
    pub torso_com_x: f64,
    pub torso_com_z: f64,
    pub thigh_mass: f64,
    pub shank_mass: f64,
    pub thigh_length: f64,
    pub shank_length: f64,
    pub thigh_com: f64,
    pub shank_com: f64,
    pub hip_x_offset: f64,
    pub hip_z_offset: f64,
    pub body_length: f64,
    pub body_width: f64,
    pub body_height: f64,
    pub roll_servo_inertia: f64,
    pub roll_servo_damping: f64,
    pub hip_roll_pos_deg_min: f64,
    pub hip_roll_pos_deg_max: f64,
    pub hip_pitch_pos_deg_min: f64,
    pub hip_pitch_pos_deg_max: f64,
    pub knee_pos_deg_min: f64,
    pub knee_pos_deg_max: f64,
    pub hip_roll_vel_max: f64,
    pub hip_pitch_vel_max: f64,
    pub knee_vel_max: f64,
    pub hip_roll_torque_cont: f64,
    pub hip_roll_torque_peak: f64,
    pub hip_pitch_torque_cont: f64,
    pub hip_pitch_torque_peak: f64,
    pub knee_torque_cont: f64,
    pub knee_torque_peak: f64,

    pub contact: ContactParams,

    pub terrain_friction: f64,
    pub terrain_restitution: f64,
    pub terrain_spacing: f64,
    pub terrain_x_start: f64,
    pub terrain_length: f64,

    pub kp: f64,
    pub kd: f64,

    pub slip: SlipParams,
    pub reward: RewardWeights,

    pub gait_frequency: f64,
    pub gait_front_phase: f64,
    pub gait_hind_phase: f64,

    pub feature_mode: FeatureMode,

    pub hidden_layers: Vec<usize>,
    pub init_action_std: f64,

    pub prefit_dataset_steps: usize,
    pub prefit_train_fraction: f64,
    pub prefit_action_noise_std: f64,
    pub prefit_batch_mode: BatchMode,
    pub prefit_schedule: TrainingSchedule,

    pub ppo: PpoConfig,
    pub domain_randomization: DomainRandomizationConfig,
    pub reset: ResetConfig,
    pub termination: TerminationRule,

    pub eval_episodes: usize,
    pub metrics_full_com: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let robot = RobotModel::default();
        RunConfig {
            seed: 42,
            out_dir: "out".into(),
            sim_dt: 0.0025,
            substeps_per_control: 4,
            pd_every_substeps: 2,
            torso_mass: robot.torso_mass,
            torso_inertia_pitch: robot.torso_inertia_pitch,
            torso_com_x: 0.0,
            torso_com_z: 0.0,
            thigh_mass: 1.25,
            shank_mass: 0.75,
            thigh_length: 0.22,
            shank_length: 0.25,
            thigh_com: 0.11,
            shank_com: 0.125,
            hip_x_offset: 0.25,
            hip_z_offset: 0.0,
            body_length: 0.7,
            body_width: 0.4,
            body_height: 0.5,
            roll_servo_inertia: 0.01,
            roll_servo_damping: 0.05,
            hip_roll_pos_deg_min: -22.0,
            hip_roll_pos_deg_max: 22.0,
            hip_pitch_pos_deg_min: -158.0,
            hip_pitch_pos_deg_max: 28.0,
            knee_pos_deg_min: 38.0,
            knee_pos_deg_max: 163.0,
            hip_roll_vel_max: 15.0,
            hip_pitch_vel_max: 18.0,
            knee_vel_max: 20.0,
            hip_roll_torque_cont: 10.0,
            hip_roll_torque_peak: 23.0,
            hip_pitch_torque_cont: 10.0,
            hip_pitch_torque_peak: 26.0,
            knee_torque_cont: 17.0,
            knee_torque_peak: 41.5,
            contact: ContactParams::default(),
            terrain_friction: 0.6,
            terrain_restitution: 0.0,
            terrain_spacing: 0.2,
            terrain_x_start: -5.0,
            terrain_length: 80.0,
            kp: 60.0,
            kd: 1.5,
            slip: SlipParams::default(),
            reward: RewardWeights::default(),
            gait_frequency: 3.0,
            gait_front_phase: 0.0,
            gait_hind_phase: std::f64::consts::PI,
            feature_mode: FeatureMode::Raw,
            hidden_layers: vec![128, 128],
            init_action_std: 0.1,
            prefit_dataset_steps: 60_000,
            prefit_train_fraction: 0.9,
            prefit_action_noise_std: 0.03,
            prefit_batch_mode: BatchMode::Full,
            prefit_schedule: TrainingSchedule::default(),
            ppo: PpoConfig::default(),
            domain_randomization: DomainRandomizationConfig::default(),
            reset: ResetConfig::default(),
            termination: TerminationRule::default(),
            eval_episodes: 5,
            metrics_full_com: false,
        }
    }
}

struct KeyMap {
    entries: BTreeMap<String, String>,
}

impl KeyMap {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn take_f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| BounderError::Config(format!("{key}: expected a number, got {v:?}"))),
        }
    }

    fn take_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| BounderError::Config(format!("{key}: expected an integer, got {v:?}"))),
        }
    }

    fn take_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| BounderError::Config(format!("{key}: expected an integer, got {v:?}"))),
        }
    }

    fn take_bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(BounderError::Config(format!(
                    "{key}: expected true or false, got {v:?}"
                ))),
            },
        }
    }

    fn take_string(&mut self, key: &str, default: &str) -> String {
        self.take(key).unwrap_or_else(|| default.to_string())
    }
}

impl RunConfig {
    /// Parse a config file; missing keys take defaults, unknown keys are
    /// rejected. An unreadable config file is a configuration error.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            BounderError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                BounderError::Config(format!("line {}: expected 'key = value'", i + 1))
            })?;
            let key = key.trim().to_string();
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(BounderError::Config(format!(
                    "line {}: duplicate key {key}",
                    i + 1
                )));
            }
        }
        let mut map = KeyMap { entries };
        let d = RunConfig::default();

        let cfg = RunConfig {
            seed: map.take_u64("run.seed", d.seed)?,
            out_dir: map.take_string("run.out_dir", &d.out_dir),
            sim_dt: map.take_f64("sim.dt", d.sim_dt)?,
            substeps_per_control: map
                .take_usize("sim.substeps_per_control", d.substeps_per_control)?,
            pd_every_substeps: map.take_usize("sim.pd_every_substeps", d.pd_every_substeps)?,
            torso_mass: map.take_f64("robot.torso_mass", d.torso_mass)?,
            torso_inertia_pitch: map
                .take_f64("robot.torso_inertia_pitch", d.torso_inertia_pitch)?,
            torso_com_x: map.take_f64("robot.torso_com_x", d.torso_com_x)?,
            torso_com_z: map.take_f64("robot.torso_com_z", d.torso_com_z)?,
            thigh_mass: map.take_f64("robot.thigh_mass", d.thigh_mass)?,
            shank_mass: map.take_f64("robot.shank_mass", d.shank_mass)?,
            thigh_length: map.take_f64("robot.thigh_length", d.thigh_length)?,
            shank_length: map.take_f64("robot.shank_length", d.shank_length)?,
            thigh_com: map.take_f64("robot.thigh_com", d.thigh_com)?,
            shank_com: map.take_f64("robot.shank_com", d.shank_com)?,
            hip_x_offset: map.take_f64("robot.hip_x_offset", d.hip_x_offset)?,
            hip_z_offset: map.take_f64("robot.hip_z_offset", d.hip_z_offset)?,
            body_length: map.take_f64("robot.body_length", d.body_length)?,
            body_width: map.take_f64("robot.body_width", d.body_width)?,
            body_height: map.take_f64("robot.body_height", d.body_height)?,
            roll_servo_inertia: map.take_f64("robot.roll_servo_inertia", d.roll_servo_inertia)?,
            roll_servo_damping: map.take_f64("robot.roll_servo_damping", d.roll_servo_damping)?,
            hip_roll_pos_deg_min: map
                .take_f64("robot.hip_roll_pos_deg_min", d.hip_roll_pos_deg_min)?,
            hip_roll_pos_deg_max: map
                .take_f64("robot.hip_roll_pos_deg_max", d.hip_roll_pos_deg_max)?,
            hip_pitch_pos_deg_min: map
                .take_f64("robot.hip_pitch_pos_deg_min", d.hip_pitch_pos_deg_min)?,
            hip_pitch_pos_deg_max: map
                .take_f64("robot.hip_pitch_pos_deg_max", d.hip_pitch_pos_deg_max)?,
            knee_pos_deg_min: map.take_f64("robot.knee_pos_deg_min", d.knee_pos_deg_min)?,
            knee_pos_deg_max: map.take_f64("robot.knee_pos_deg_max", d.knee_pos_deg_max)?,
            hip_roll_vel_max: map.take_f64("robot.hip_roll_vel_max", d.hip_roll_vel_max)?,
            hip_pitch_vel_max: map.take_f64("robot.hip_pitch_vel_max", d.hip_pitch_vel_max)?,
            knee_vel_max: map.take_f64("robot.knee_vel_max", d.knee_vel_max)?,
            hip_roll_torque_cont: map
                .take_f64("robot.hip_roll_torque_cont", d.hip_roll_torque_cont)?,
            hip_roll_torque_peak: map
                .take_f64("robot.hip_roll_torque_peak", d.hip_roll_torque_peak)?,
            hip_pitch_torque_cont: map
                .take_f64("robot.hip_pitch_torque_cont", d.hip_pitch_torque_cont)?,
            hip_pitch_torque_peak: map
                .take_f64("robot.hip_pitch_torque_peak", d.hip_pitch_torque_peak)?,
            knee_torque_cont: map.take_f64("robot.knee_torque_cont", d.knee_torque_cont)?,
            knee_torque_peak: map.take_f64("robot.knee_torque_peak", d.knee_torque_peak)?,
            contact: ContactParams {
                normal_stiffness: map
                    .take_f64("contact.normal_stiffness", d.contact.normal_stiffness)?,
                normal_damping: map
                    .take_f64("contact.normal_damping", d.contact.normal_damping)?,
                contact_tolerance: map
                    .take_f64("contact.tolerance", d.contact.contact_tolerance)?,
                slip_velocity: map.take_f64("contact.slip_velocity", d.contact.slip_velocity)?,
            },
            terrain_friction: map.take_f64("terrain.friction", d.terrain_friction)?,
            terrain_restitution: map.take_f64("terrain.restitution", d.terrain_restitution)?,
            terrain_spacing: map.take_f64("terrain.spacing", d.terrain_spacing)?,
            terrain_x_start: map.take_f64("terrain.x_start", d.terrain_x_start)?,
            terrain_length: map.take_f64("terrain.length", d.terrain_length)?,
            kp: map.take_f64("gains.kp", d.kp)?,
            kd: map.take_f64("gains.kd", d.kd)?,
            slip: SlipParams {
                gait_frequency: map.take_f64("slip.gait_frequency", d.slip.gait_frequency)?,
                duty_factor: map.take_f64("slip.duty_factor", d.slip.duty_factor)?,
                virtual_spring_stiffness: map.take_f64(
                    "slip.virtual_spring_stiffness",
                    d.slip.virtual_spring_stiffness,
                )?,
                leg_rest_length: map.take_f64("slip.leg_rest_length", d.slip.leg_rest_length)?,
                raibert_speed_gain: map
                    .take_f64("slip.raibert_speed_gain", d.slip.raibert_speed_gain)?,
                desired_speed: map.take_f64("slip.desired_speed", d.slip.desired_speed)?,
                pitch_gain: map.take_f64("slip.pitch_gain", d.slip.pitch_gain)?,
            },
            reward: RewardWeights {
                body_velocity_k: map
                    .take_f64("reward.body_velocity_k", d.reward.body_velocity_k)?,
                joint_torque_k: map.take_f64("reward.joint_torque_k", d.reward.joint_torque_k)?,
                joint_torque_c: map.take_f64("reward.joint_torque_c", d.reward.joint_torque_c)?,
                joint_velocity_k: map
                    .take_f64("reward.joint_velocity_k", d.reward.joint_velocity_k)?,
                joint_velocity_c: map
                    .take_f64("reward.joint_velocity_c", d.reward.joint_velocity_c)?,
                gait_k: map.take_f64("reward.gait_k", d.reward.gait_k)?,
                position_uniformity_k: map.take_f64(
                    "reward.position_uniformity_k",
                    d.reward.position_uniformity_k,
                )?,
                torque_uniformity_k: map.take_f64(
                    "reward.torque_uniformity_k",
                    d.reward.torque_uniformity_k,
                )?,
                smoothness_k: map.take_f64("reward.smoothness_k", d.reward.smoothness_k)?,
                pitch_limit_k: map.take_f64("reward.pitch_limit_k", d.reward.pitch_limit_k)?,
                pitch_threshold: map
                    .take_f64("reward.pitch_threshold", d.reward.pitch_threshold)?,
                pitch_limit_sign: map
                    .take_f64("reward.pitch_limit_sign", d.reward.pitch_limit_sign)?,
            },
            gait_frequency: map.take_f64("gait.frequency", d.gait_frequency)?,
            gait_front_phase: map.take_f64("gait.front_phase", d.gait_front_phase)?,
            gait_hind_phase: map.take_f64("gait.hind_phase", d.gait_hind_phase)?,
            feature_mode: match map.take_string("observation.mode", "raw").as_str() {
                "raw" => FeatureMode::Raw,
                "engineered" => FeatureMode::Engineered,
                other => {
                    return Err(BounderError::Config(format!(
                        "observation.mode: expected raw or engineered, got {other:?}"
                    )))
                }
            },
            hidden_layers: parse_usize_list(&map.take_string("network.hidden", "128,128"))?,
            init_action_std: map.take_f64("network.init_action_std", d.init_action_std)?,
            prefit_dataset_steps: map
                .take_usize("prefit.dataset_steps", d.prefit_dataset_steps)?,
            prefit_train_fraction: map
                .take_f64("prefit.train_fraction", d.prefit_train_fraction)?,
            prefit_action_noise_std: map
                .take_f64("prefit.action_noise_std", d.prefit_action_noise_std)?,
            prefit_batch_mode: {
                let mode = map.take_string("prefit.batch_mode", "full");
                let size = map.take_usize("prefit.minibatch_size", 8192)?;
                match mode.as_str() {
                    "full" => BatchMode::Full,
                    "minibatch" => BatchMode::Minibatch(size),
                    other => {
                        return Err(BounderError::Config(format!(
                            "prefit.batch_mode: expected full or minibatch, got {other:?}"
                        )))
                    }
                }
            },
            prefit_schedule: parse_schedule(&map.take_string(
                "prefit.schedule",
                "sgd:0.01:500,adam:0.001:500,adam:0.0001:500",
            ))?,
            ppo: PpoConfig {
                gamma: map.take_f64("ppo.gamma", d.ppo.gamma)?,
                gae_lambda: map.take_f64("ppo.gae_lambda", d.ppo.gae_lambda)?,
                clip_epsilon: map.take_f64("ppo.clip_epsilon", d.ppo.clip_epsilon)?,
                epochs: map.take_usize("ppo.epochs", d.ppo.epochs)?,
                minibatch_size: map.take_usize("ppo.minibatch_size", d.ppo.minibatch_size)?,
                learning_rate: map.take_f64("ppo.learning_rate", d.ppo.learning_rate)?,
                n_envs: map.take_usize("ppo.n_envs", d.ppo.n_envs)?,
                rollout_length: map.take_usize("ppo.rollout_length", d.ppo.rollout_length)?,
                iterations: map.take_usize("ppo.iterations", d.ppo.iterations)?,
                value_coef: map.take_f64("ppo.value_coef", d.ppo.value_coef)?,
                entropy_coef: map.take_f64("ppo.entropy_coef", d.ppo.entropy_coef)?,
                checkpoint_interval: map
                    .take_usize("ppo.checkpoint_interval", d.ppo.checkpoint_interval)?,
                init_action_std: 0.0, // filled from network.init_action_std below
            },
            domain_randomization: DomainRandomizationConfig {
                link_mass_pct: map
                    .take_f64("rand.link_mass_pct", d.domain_randomization.link_mass_pct)?,
                link_inertia_pct: map.take_f64(
                    "rand.link_inertia_pct",
                    d.domain_randomization.link_inertia_pct,
                )?,
                link_com_offset: map.take_f64(
                    "rand.link_com_offset",
                    d.domain_randomization.link_com_offset,
                )?,
                friction_delta: map.take_f64(
                    "rand.friction_delta",
                    d.domain_randomization.friction_delta,
                )?,
                restitution_max: map.take_f64(
                    "rand.restitution_max",
                    d.domain_randomization.restitution_max,
                )?,
                bump_height_max: map.take_f64(
                    "rand.bump_height_max",
                    d.domain_randomization.bump_height_max,
                )?,
            },
            reset: ResetConfig {
                stand_leg_length: map
                    .take_f64("reset.stand_leg_length", d.reset.stand_leg_length)?,
                pitch_range: map.take_f64("reset.pitch_range", d.reset.pitch_range)?,
                joint_range: map.take_f64("reset.joint_range", d.reset.joint_range)?,
                randomize_gait_phase: map
                    .take_bool("reset.randomize_gait_phase", d.reset.randomize_gait_phase)?,
            },
            termination: TerminationRule {
                min_body_height: map
                    .take_f64("termination.min_body_height", d.termination.min_body_height)?,
                max_abs_pitch: map
                    .take_f64("termination.max_abs_pitch", d.termination.max_abs_pitch)?,
                torso_contact_fails: map.take_bool(
                    "termination.torso_contact_fails",
                    d.termination.torso_contact_fails,
                )?,
                max_episode_duration: map.take_f64(
                    "termination.max_episode_duration",
                    d.termination.max_episode_duration,
                )?,
            },
            eval_episodes: map.take_usize("eval.episodes", d.eval_episodes)?,
            metrics_full_com: map.take_bool("metrics.full_com", d.metrics_full_com)?,
        };

        if let Some(unknown) = map.entries.keys().next() {
            return Err(BounderError::Config(format!("unknown key {unknown:?}")));
        }

        let mut cfg = cfg;
        cfg.ppo.init_action_std = cfg.init_action_std;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sim_dt > 0.0) {
            return Err(BounderError::Config("sim.dt must be > 0".into()));
        }
        if self.substeps_per_control == 0 || self.pd_every_substeps == 0 {
            return Err(BounderError::Config("sim substep counts must be >= 1".into()));
        }
        if !(self.prefit_train_fraction > 0.0 && self.prefit_train_fraction <= 1.0) {
            return Err(BounderError::Config(
                "prefit.train_fraction must be in (0, 1]".into(),
            ));
        }
        if !(self.slip.duty_factor > 0.0 && self.slip.duty_factor < 1.0) {
            return Err(BounderError::Config("slip.duty_factor must be in (0,1)".into()));
        }
        if !(self.slip.gait_frequency > 0.0) {
            return Err(BounderError::Config("slip.gait_frequency must be > 0".into()));
        }
        self.robot_model()?.validate()?;
        self.terrain().validate()?;
        self.contact.validate()?;
        self.prefit_schedule.validate()?;
        self.ppo.validate()?;
        if self.slip.leg_rest_length > self.thigh_length + self.shank_length {
            return Err(BounderError::Config(
                "slip.leg_rest_length exceeds thigh + shank".into(),
            ));
        }
        MlpSpec::new(self.actor_sizes()).validate()?;
        Ok(())
    }

    pub fn robot_model(&self) -> Result<RobotModel> {
        let deg = std::f64::consts::PI / 180.0;
        let mut m = RobotModel {
            torso_mass: self.torso_mass,
            torso_inertia_pitch: self.torso_inertia_pitch,
            torso_com_x: self.torso_com_x,
            torso_com_z: self.torso_com_z,
            thigh_length: self.thigh_length,
            shank_length: self.shank_length,
            thigh_mass: [self.thigh_mass; 4],
            shank_mass: [self.shank_mass; 4],
            thigh_inertia: [self.thigh_mass * self.thigh_length * self.thigh_length / 12.0; 4],
            shank_inertia: [self.shank_mass * self.shank_length * self.shank_length / 12.0; 4],
            thigh_com: [self.thigh_com; 4],
            shank_com: [self.shank_com; 4],
            hip_x_offset: self.hip_x_offset,
            hip_z_offset: self.hip_z_offset,
            body_dims: [self.body_length, self.body_width, self.body_height],
            roll_servo_inertia: self.roll_servo_inertia,
            roll_servo_damping: self.roll_servo_damping,
            ..RobotModel::default()
        };
        m.hip_roll_limits.pos_min = self.hip_roll_pos_deg_min * deg;
        m.hip_roll_limits.pos_max = self.hip_roll_pos_deg_max * deg;
        m.hip_roll_limits.vel_min = -self.hip_roll_vel_max;
        m.hip_roll_limits.vel_max = self.hip_roll_vel_max;
        m.hip_roll_limits.torque_continuous = self.hip_roll_torque_cont;
        m.hip_roll_limits.torque_peak = self.hip_roll_torque_peak;
        m.hip_pitch_limits.pos_min = self.hip_pitch_pos_deg_min * deg;
        m.hip_pitch_limits.pos_max = self.hip_pitch_pos_deg_max * deg;
        m.hip_pitch_limits.vel_min = -self.hip_pitch_vel_max;
        m.hip_pitch_limits.vel_max = self.hip_pitch_vel_max;
        m.hip_pitch_limits.torque_continuous = self.hip_pitch_torque_cont;
        m.hip_pitch_limits.torque_peak = self.hip_pitch_torque_peak;
        m.knee_limits.pos_min = self.knee_pos_deg_min * deg;
        m.knee_limits.pos_max = self.knee_pos_deg_max * deg;
        m.knee_limits.vel_min = -self.knee_vel_max;
        m.knee_limits.vel_max = self.knee_vel_max;
        m.knee_limits.torque_continuous = self.knee_torque_cont;
        m.knee_limits.torque_peak = self.knee_torque_peak;
        Ok(m)
    }

    pub fn terrain(&self) -> Terrain {
        let cells = (self.terrain_length / self.terrain_spacing).ceil().max(0.0) as usize;
        Terrain {
            heights: vec![0.0; cells],
            spacing: self.terrain_spacing,
            x_start: self.terrain_x_start,
            friction: self.terrain_friction,
            restitution: self.terrain_restitution,
        }
    }

    pub fn env_params(&self) -> EnvParams {
        EnvParams {
            contact: self.contact,
            gains: GainSet::uniform(self.kp, self.kd),
            feature: FeatureConfig {
                mode: self.feature_mode,
            },
            termination: self.termination,
            reward_weights: self.reward,
            gait: GaitSignalParams {
                omega: 2.0 * std::f64::consts::PI * self.gait_frequency,
                per_foot_phase: [
                    self.gait_front_phase,
                    self.gait_front_phase,
                    self.gait_hind_phase,
                    self.gait_hind_phase,
                ],
            },
            reset_cfg: self.reset,
            sim_dt: self.sim_dt,
            substeps_per_control: self.substeps_per_control,
            pd_every_substeps: self.pd_every_substeps,
        }
    }

    pub fn actor_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.feature_mode.dim()];
        sizes.extend(&self.hidden_layers);
        sizes.push(crate::robot::NUM_JOINTS);
        sizes
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.feature_mode.dim()];
        sizes.extend(&self.hidden_layers);
        sizes.push(1);
        sizes
    }

    /// Output directory, honoring the environment-variable override.
    pub fn resolve_out_dir(&self) -> PathBuf {
        match std::env::var(OUT_DIR_ENV) {
            Ok(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(&self.out_dir),
        }
    }

    /// Canonical fully-resolved config text. Parsing it reproduces this
    /// configuration exactly.
    pub fn resolved_string(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv(&mut s, "run.seed", self.seed.to_string());
        kv(&mut s, "run.out_dir", self.out_dir.clone());
        kv(&mut s, "sim.dt", format!("{}", self.sim_dt));
        kv(
            &mut s,
            "sim.substeps_per_control",
            self.substeps_per_control.to_string(),
        );
        kv(
            &mut s,
            "sim.pd_every_substeps",
            self.pd_every_substeps.to_string(),
        );
        kv(&mut s, "robot.torso_mass", format!("{}", self.torso_mass));
        kv(
            &mut s,
            "robot.torso_inertia_pitch",
            format!("{}", self.torso_inertia_pitch),
        );
        kv(&mut s, "robot.torso_com_x", format!("{}", self.torso_com_x));
        kv(&mut s, "robot.torso_com_z", format!("{}", self.torso_com_z));
        kv(&mut s, "robot.thigh_mass", format!("{}", self.thigh_mass));
        kv(&mut s, "robot.shank_mass", format!("{}", self.shank_mass));
        kv(&mut s, "robot.thigh_length", format!("{}", self.thigh_length));
        kv(&mut s, "robot.shank_length", format!("{}", self.shank_length));
        kv(&mut s, "robot.thigh_com", format!("{}", self.thigh_com));
        kv(&mut s, "robot.shank_com", format!("{}", self.shank_com));
        kv(&mut s, "robot.hip_x_offset", format!("{}", self.hip_x_offset));
        kv(&mut s, "robot.hip_z_offset", format!("{}", self.hip_z_offset));
        kv(&mut s, "robot.body_length", format!("{}", self.body_length));
        kv(&mut s, "robot.body_width", format!("{}", self.body_width));
        kv(&mut s, "robot.body_height", format!("{}", self.body_height));
        kv(
            &mut s,
            "robot.roll_servo_inertia",
            format!("{}", self.roll_servo_inertia),
        );
        kv(
            &mut s,
            "robot.roll_servo_damping",
            format!("{}", self.roll_servo_damping),
        );
        kv(
            &mut s,
            "robot.hip_roll_pos_deg_min",
            format!("{}", self.hip_roll_pos_deg_min),
        );
        kv(
            &mut s,
            "robot.hip_roll_pos_deg_max",
            format!("{}", self.hip_roll_pos_deg_max),
        );
        kv(
            &mut s,
            "robot.hip_pitch_pos_deg_min",
            format!("{}", self.hip_pitch_pos_deg_min),
        );
        kv(
            &mut s,
            "robot.hip_pitch_pos_deg_max",
            format!("{}", self.hip_pitch_pos_deg_max),
        );
        kv(
            &mut s,
            "robot.knee_pos_deg_min",
            format!("{}", self.knee_pos_deg_min),
        );
        kv(
            &mut s,
            "robot.knee_pos_deg_max",
            format!("{}", self.knee_pos_deg_max),
        );
        kv(
            &mut s,
            "robot.hip_roll_vel_max",
            format!("{}", self.hip_roll_vel_max),
        );
        kv(
            &mut s,
            "robot.hip_pitch_vel_max",
            format!("{}", self.hip_pitch_vel_max),
        );
        kv(&mut s, "robot.knee_vel_max", format!("{}", self.knee_vel_max));
        kv(
            &mut s,
            "robot.hip_roll_torque_cont",
            format!("{}", self.hip_roll_torque_cont),
        );
        kv(
            &mut s,
            "robot.hip_roll_torque_peak",
            format!("{}", self.hip_roll_torque_peak),
        );
        kv(
            &mut s,
            "robot.hip_pitch_torque_cont",
            format!("{}", self.hip_pitch_torque_cont),
        );
        kv(
            &mut s,
            "robot.hip_pitch_torque_peak",
            format!("{}", self.hip_pitch_torque_peak),
        );
        kv(
            &mut s,
            "robot.knee_torque_cont",
            format!("{}", self.knee_torque_cont),
        );
        kv(
            &mut s,
            "robot.knee_torque_peak",
            format!("{}", self.knee_torque_peak),
        );
        kv(
            &mut s,
            "contact.normal_stiffness",
            format!("{}", self.contact.normal_stiffness),
        );
        kv(
            &mut s,
            "contact.normal_damping",
            format!("{}", self.contact.normal_damping),
        );
        kv(
            &mut s,
            "contact.tolerance",
            format!("{}", self.contact.contact_tolerance),
        );
        kv(
            &mut s,
            "contact.slip_velocity",
            format!("{}", self.contact.slip_velocity),
        );
        kv(&mut s, "terrain.friction", format!("{}", self.terrain_friction));
        kv(
            &mut s,
            "terrain.restitution",
            format!("{}", self.terrain_restitution),
        );
        kv(&mut s, "terrain.spacing", format!("{}", self.terrain_spacing));
        kv(&mut s, "terrain.x_start", format!("{}", self.terrain_x_start));
        kv(&mut s, "terrain.length", format!("{}", self.terrain_length));
        kv(&mut s, "gains.kp", format!("{}", self.kp));
        kv(&mut s, "gains.kd", format!("{}", self.kd));
        kv(
            &mut s,
            "slip.gait_frequency",
            format!("{}", self.slip.gait_frequency),
        );
        kv(&mut s, "slip.duty_factor", format!("{}", self.slip.duty_factor));
        kv(
            &mut s,
            "slip.virtual_spring_stiffness",
            format!("{}", self.slip.virtual_spring_stiffness),
        );
        kv(
            &mut s,
            "slip.leg_rest_length",
            format!("{}", self.slip.leg_rest_length),
        );
        kv(
            &mut s,
            "slip.raibert_speed_gain",
            format!("{}", self.slip.raibert_speed_gain),
        );
        kv(
            &mut s,
            "slip.desired_speed",
            format!("{}", self.slip.desired_speed),
        );
        kv(&mut s, "slip.pitch_gain", format!("{}", self.slip.pitch_gain));
        kv(
            &mut s,
            "reward.body_velocity_k",
            format!("{}", self.reward.body_velocity_k),
        );
        kv(
            &mut s,
            "reward.joint_torque_k",
            format!("{}", self.reward.joint_torque_k),
        );
        kv(
            &mut s,
            "reward.joint_torque_c",
            format!("{}", self.reward.joint_torque_c),
        );
        kv(
            &mut s,
            "reward.joint_velocity_k",
            format!("{}", self.reward.joint_velocity_k),
        );
        kv(
            &mut s,
            "reward.joint_velocity_c",
            format!("{}", self.reward.joint_velocity_c),
        );
        kv(&mut s, "reward.gait_k", format!("{}", self.reward.gait_k));
        kv(
            &mut s,
            "reward.position_uniformity_k",
            format!("{}", self.reward.position_uniformity_k),
        );
        kv(
            &mut s,
            "reward.torque_uniformity_k",
            format!("{}", self.reward.torque_uniformity_k),
        );
        kv(
            &mut s,
            "reward.smoothness_k",
            format!("{}", self.reward.smoothness_k),
        );
        kv(
            &mut s,
            "reward.pitch_limit_k",
            format!("{}", self.reward.pitch_limit_k),
        );
        kv(
            &mut s,
            "reward.pitch_threshold",
            format!("{}", self.reward.pitch_threshold),
        );
        kv(
            &mut s,
            "reward.pitch_limit_sign",
            format!("{}", self.reward.pitch_limit_sign),
        );
        kv(&mut s, "gait.frequency", format!("{}", self.gait_frequency));
        kv(&mut s, "gait.front_phase", format!("{}", self.gait_front_phase));
        kv(&mut s, "gait.hind_phase", format!("{}", self.gait_hind_phase));
        kv(
            &mut s,
            "observation.mode",
            match self.feature_mode {
                FeatureMode::Raw => "raw".into(),
                FeatureMode::Engineered => "engineered".into(),
            },
        );
        kv(
            &mut s,
            "network.hidden",
            self.hidden_layers
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv(
            &mut s,
            "network.init_action_std",
            format!("{}", self.init_action_std),
        );
        kv(
            &mut s,
            "prefit.dataset_steps",
            self.prefit_dataset_steps.to_string(),
        );
        kv(
            &mut s,
            "prefit.train_fraction",
            format!("{}", self.prefit_train_fraction),
        );
        kv(
            &mut s,
            "prefit.action_noise_std",
            format!("{}", self.prefit_action_noise_std),
        );
        match self.prefit_batch_mode {
            BatchMode::Full => {
                kv(&mut s, "prefit.batch_mode", "full".into());
                kv(&mut s, "prefit.minibatch_size", "8192".into());
            }
            BatchMode::Minibatch(n) => {
                kv(&mut s, "prefit.batch_mode", "minibatch".into());
                kv(&mut s, "prefit.minibatch_size", n.to_string());
            }
        }
        kv(
            &mut s,
            "prefit.schedule",
            schedule_to_string(&self.prefit_schedule),
        );
        kv(&mut s, "ppo.gamma", format!("{}", self.ppo.gamma));
        kv(&mut s, "ppo.gae_lambda", format!("{}", self.ppo.gae_lambda));
        kv(&mut s, "ppo.clip_epsilon", format!("{}", self.ppo.clip_epsilon));
        kv(&mut s, "ppo.epochs", self.ppo.epochs.to_string());
        kv(
            &mut s,
            "ppo.minibatch_size",
            self.ppo.minibatch_size.to_string(),
        );
        kv(
            &mut s,
            "ppo.learning_rate",
            format!("{}", self.ppo.learning_rate),
        );
        kv(&mut s, "ppo.n_envs", self.ppo.n_envs.to_string());
        kv(
            &mut s,
            "ppo.rollout_length",
            self.ppo.rollout_length.to_string(),
        );
        kv(&mut s, "ppo.iterations", self.ppo.iterations.to_string());
        kv(&mut s, "ppo.value_coef", format!("{}", self.ppo.value_coef));
        kv(&mut s, "ppo.entropy_coef", format!("{}", self.ppo.entropy_coef));
        kv(
            &mut s,
            "ppo.checkpoint_interval",
            self.ppo.checkpoint_interval.to_string(),
        );
        kv(
            &mut s,
            "rand.link_mass_pct",
            format!("{}", self.domain_randomization.link_mass_pct),
        );
        kv(
            &mut s,
            "rand.link_inertia_pct",
            format!("{}", self.domain_randomization.link_inertia_pct),
        );
        kv(
            &mut s,
            "rand.link_com_offset",
            format!("{}", self.domain_randomization.link_com_offset),
        );
        kv(
            &mut s,
            "rand.friction_delta",
            format!("{}", self.domain_randomization.friction_delta),
        );
        kv(
            &mut s,
            "rand.restitution_max",
            format!("{}", self.domain_randomization.restitution_max),
        );
        kv(
            &mut s,
            "rand.bump_height_max",
            format!("{}", self.domain_randomization.bump_height_max),
        );
        kv(
            &mut s,
            "reset.stand_leg_length",
            format!("{}", self.reset.stand_leg_length),
        );
        kv(&mut s, "reset.pitch_range", format!("{}", self.reset.pitch_range));
        kv(&mut s, "reset.joint_range", format!("{}", self.reset.joint_range));
        kv(
            &mut s,
            "reset.randomize_gait_phase",
            self.reset.randomize_gait_phase.to_string(),
        );
        kv(
            &mut s,
            "termination.min_body_height",
            format!("{}", self.termination.min_body_height),
        );
        kv(
            &mut s,
            "termination.max_abs_pitch",
            format!("{}", self.termination.max_abs_pitch),
        );
        kv(
            &mut s,
            "termination.torso_contact_fails",
            self.termination.torso_contact_fails.to_string(),
        );
        kv(
            &mut s,
            "termination.max_episode_duration",
            format!("{}", self.termination.max_episode_duration),
        );
        kv(&mut s, "eval.episodes", self.eval_episodes.to_string());
        kv(&mut s, "metrics.full_com", self.metrics_full_com.to_string());
        s
    }

    /// FNV-1a hash of the resolved config text.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.resolved_string().as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| BounderError::Config(format!("bad integer list entry {tok:?}")))
        })
        .collect()
}

/// Schedule syntax: comma-separated `optimizer:lr:iterations` phases.
fn parse_schedule(text: &str) -> Result<TrainingSchedule> {
    let mut phases = Vec::new();
    for part in text.split(',') {
        let fields: Vec<&str> = part.trim().split(':').collect();
        if fields.len() != 3 {
            return Err(BounderError::Config(format!(
                "schedule phase {part:?}: expected optimizer:lr:iterations"
            )));
        }
        let kind = match fields[0] {
            "sgd" => OptimizerKind::Sgd,
            "adam" => OptimizerKind::Adam,
            other => {
                return Err(BounderError::Config(format!(
                    "schedule optimizer {other:?}: expected sgd or adam"
                )))
            }
        };
        let learning_rate: f64 = fields[1]
            .parse()
            .map_err(|_| BounderError::Config(format!("schedule lr {:?}", fields[1])))?;
        let iterations: usize = fields[2]
            .parse()
            .map_err(|_| BounderError::Config(format!("schedule iterations {:?}", fields[2])))?;
        phases.push(SchedulePhase {
            kind,
            learning_rate,
            iterations,
        });
    }
    Ok(TrainingSchedule { phases })
}

fn schedule_to_string(schedule: &TrainingSchedule) -> String {
    schedule
        .phases
        .iter()
        .map(|p| {
            format!(
                "{}:{}:{}",
                match p.kind {
                    OptimizerKind::Sgd => "sgd",
                    OptimizerKind::Adam => "adam",
                },
                p.learning_rate,
                p.iterations
            )
        })
        .collect::<Vec<_>>()
        .join(",")
}
