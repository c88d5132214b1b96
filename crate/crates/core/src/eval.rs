//! Deterministic policy evaluation: mean actions through a weight set,
//! nominal model and terrain, traces recorded at the control rate.

use crate::env::{BoundEnv, EnvParams};
use crate::error::{BounderError, Result};
use crate::metrics::{EpisodeTrace, TraceRow};
use crate::neural::NetworkWeights;
use crate::reward::Termination;
use crate::rng::{derive_seed, Role};
use crate::robot::{RobotModel, NUM_JOINTS};
use crate::sim::Terrain;

/// Roll `episodes` seeded episodes under the policy mean (no exploration
/// noise) and record one trace per episode. Episodes end at the
/// termination rule or the configured maximum duration.
pub fn evaluate_policy(
    params: &EnvParams,
    model: &RobotModel,
    terrain: &Terrain,
    net: &NetworkWeights,
    episodes: usize,
    master_seed: u64,
) -> Result<Vec<EpisodeTrace>> {
    let expected = params.feature.mode.dim();
    if net.input_dim() != expected {
        return Err(BounderError::Dimension {
            expected,
            got: net.input_dim(),
            context: "weight CSV input width vs observation mode".into(),
        });
    }
    if net.output_dim() != NUM_JOINTS {
        return Err(BounderError::Dimension {
            expected: NUM_JOINTS,
            got: net.output_dim(),
            context: "policy output width".into(),
        });
    }
    let steps_per_episode =
        (params.termination.max_episode_duration / params.control_dt()).round() as usize;
    let mut traces = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let seed = derive_seed(master_seed, Role::Reset, ep as u64);
        let mut env = BoundEnv::new(params.clone(), model.clone(), terrain.clone(), seed);
        let mut trace = EpisodeTrace::default();
        for _ in 0..steps_per_episode {
            let obs = env.observe();
            let mean = net.forward(&obs.values)?;
            let mut action = [0.0; NUM_JOINTS];
            action.copy_from_slice(&mean);
            let outcome = env.step_control(&action)?;
            trace.rows.push(TraceRow::from_state(
                env.state(),
                &outcome.applied_torques,
                &outcome.reward,
                env.episode_time(),
            ));
            if outcome.termination != Termination::Continue {
                break;
            }
        }
        traces.push(trace);
    }
    Ok(traces)
}
