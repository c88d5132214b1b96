//! Per-episode domain randomization of the robot model and terrain.

use crate::rng::Stream;
use crate::robot::{RobotModel, NUM_LEGS};
use crate::sim::Terrain;

/// Uniform noise intervals. Defaults follow the published noise table:
/// link mass +/-5%, link inertia +/-10%, link CoM +/-7.5 cm, ground
/// friction +/-0.1 and ground restitution drawn from [0, 0.15]; terrain
/// bumps up to 4 cm at the heightfield spacing. A zero entry disables
/// that draw entirely, so an all-zero config is an exact identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainRandomizationConfig {
    pub link_mass_pct: f64,
    pub link_inertia_pct: f64,
    pub link_com_offset: f64,
    pub friction_delta: f64,
    pub restitution_max: f64,
    pub bump_height_max: f64,
}

impl Default for DomainRandomizationConfig {
    fn default() -> Self {
        DomainRandomizationConfig {
            link_mass_pct: 0.05,
            link_inertia_pct: 0.10,
            link_com_offset: 0.075,
            friction_delta: 0.1,
            restitution_max: 0.15,
            bump_height_max: 0.04,
        }
    }
}

impl DomainRandomizationConfig {
    pub fn zero() -> Self {
        DomainRandomizationConfig {
            link_mass_pct: 0.0,
            link_inertia_pct: 0.0,
            link_com_offset: 0.0,
            friction_delta: 0.0,
            restitution_max: 0.0,
            bump_height_max: 0.0,
        }
    }
}

/// Margin keeping a randomized link CoM on the physical link.
const COM_MARGIN: f64 = 0.005;

fn mass_factor(stream: &mut Stream, pct: f64) -> f64 {
    // The rejection loop cannot trigger at the default +/-5% but keeps
    // the contract explicit for pathological configs.
    loop {
        let f = stream.uniform_in(1.0 - pct, 1.0 + pct);
        if f > 0.0 {
            return f;
        }
    }
}

/// Draw a randomized model and terrain. Deterministic per seed; the draw
/// order is fixed (masses, inertias, CoM offsets, friction, restitution,
/// terrain bumps) and part of the reproducibility contract.
pub fn randomize_domain(
    model: &RobotModel,
    terrain: &Terrain,
    cfg: &DomainRandomizationConfig,
    seed: u64,
) -> (RobotModel, Terrain) {
    let mut stream = Stream::seeded(seed);
    let mut m = model.clone();
    let mut t = terrain.clone();

    if cfg.link_mass_pct > 0.0 {
        m.torso_mass *= mass_factor(&mut stream, cfg.link_mass_pct);
        for leg in 0..NUM_LEGS {
            m.thigh_mass[leg] *= mass_factor(&mut stream, cfg.link_mass_pct);
        }
        for leg in 0..NUM_LEGS {
            m.shank_mass[leg] *= mass_factor(&mut stream, cfg.link_mass_pct);
        }
    }

    if cfg.link_inertia_pct > 0.0 {
        m.torso_inertia_pitch *= stream.uniform_in(1.0 - cfg.link_inertia_pct, 1.0 + cfg.link_inertia_pct);
        for leg in 0..NUM_LEGS {
            m.thigh_inertia[leg] *=
                stream.uniform_in(1.0 - cfg.link_inertia_pct, 1.0 + cfg.link_inertia_pct);
        }
        for leg in 0..NUM_LEGS {
            m.shank_inertia[leg] *=
                stream.uniform_in(1.0 - cfg.link_inertia_pct, 1.0 + cfg.link_inertia_pct);
        }
    }

    if cfg.link_com_offset > 0.0 {
        m.torso_com_x += stream.symmetric(cfg.link_com_offset);
        for leg in 0..NUM_LEGS {
            let shifted = m.thigh_com[leg] + stream.symmetric(cfg.link_com_offset);
            m.thigh_com[leg] = shifted.clamp(COM_MARGIN, m.thigh_length - COM_MARGIN);
        }
        for leg in 0..NUM_LEGS {
            let shifted = m.shank_com[leg] + stream.symmetric(cfg.link_com_offset);
            m.shank_com[leg] = shifted.clamp(COM_MARGIN, m.shank_length - COM_MARGIN);
        }
    }

    if cfg.friction_delta > 0.0 {
        t.friction = (t.friction + stream.symmetric(cfg.friction_delta)).max(0.0);
    }
    if cfg.restitution_max > 0.0 {
        t.restitution = stream.uniform_in(0.0, cfg.restitution_max);
    }
    if cfg.bump_height_max > 0.0 {
        for h in &mut t.heights {
            *h = stream.uniform_in(0.0, cfg.bump_height_max);
        }
    }

    (m, t)
}
