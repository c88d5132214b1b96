//! Command-line entry point for the bounding lab.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bounder::config::RunConfig;
use bounder::error::{BounderError, Result};
use bounder::eval::evaluate_policy;
use bounder::metrics::{compute_metrics, EpisodeTrace, HeightEstimator, MetricsReport};
use bounder::neural::{csv_io, MlpSpec};
use bounder::prefit::{collect_dataset, run_prefit, CollectOptions, PrefitDataset};
use bounder::trainer::{train, write_reward_curve, TrainSetup};

#[derive(Parser)]
#[command(name = "bounder", version, about = "Quadruped bounding lab: simulate, pre-fit, fine-tune, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll the SLIP reference controller and record a pre-fit dataset.
    Collect {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pre-fit the actor network on a collected dataset.
    Prefit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset CSV (defaults to <out>/dataset.csv).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fine-tune with PPO.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Pre-fitted actor weights CSV; random init when omitted.
        #[arg(long)]
        init_weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress per-iteration progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Roll out a weight CSV through the standalone inference path.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-export a checkpoint's actor weights as a weight CSV.
    Export {
        /// Checkpoint directory (contains actor.csv).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute gait metrics from recorded traces.
    Metrics {
        #[arg(long)]
        config: PathBuf,
        /// Directory of trace CSVs.
        #[arg(long)]
        traces: PathBuf,
        /// Report file (defaults to <traces>/metrics.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project stored curves and traces into tidy plot CSVs.
    PlotData {
        #[arg(long)]
        config: PathBuf,
        /// Run directory holding prefit/train/eval outputs.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o.display().to_string();
    }
    Ok(cfg)
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.resolve_out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| BounderError::io(dir.display().to_string(), e))?;
    let resolved = dir.join("resolved_config.cfg");
    std::fs::write(&resolved, cfg.resolved_string())
        .map_err(|e| BounderError::io(resolved.display().to_string(), e))?;
    Ok(dir)
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Collect { config, seed, out } => {
            let cfg = load_config(&config, seed, out)?;
            let dir = prepare_out_dir(&cfg)?;
            let dataset = collect_from_config(&cfg)?;
            let path = dir.join("dataset.csv");
            dataset.to_csv(&path)?;
            println!(
                "collect: {} rows ({} train / {} validation) -> {}",
                dataset.rows(),
                dataset.train_rows,
                dataset.rows() - dataset.train_rows,
                path.display()
            );
            Ok(())
        }
        Command::Prefit {
            config,
            seed,
            dataset,
            out,
        } => {
            let cfg = load_config(&config, seed, out)?;
            let dir = prepare_out_dir(&cfg)?;
            let dataset_path = dataset.unwrap_or_else(|| dir.join("dataset.csv"));
            let data = PrefitDataset::from_csv(&dataset_path, cfg.prefit_train_fraction)?;
            let spec = MlpSpec::new(cfg.actor_sizes());
            let result = run_prefit(
                &data,
                &cfg.prefit_schedule,
                &spec,
                cfg.seed,
                cfg.prefit_batch_mode,
            )?;
            let weights_path = dir.join("prefit_weights.csv");
            csv_io::export_csv(&result.weights, &weights_path)?;
            write_loss_curve(&dir.join("prefit_loss.csv"), &result.train_loss)?;
            write_validation(&dir.join("prefit_validation.csv"), &result.validation_loss)?;
            let final_mse = result.train_loss.last().copied().unwrap_or(f64::NAN);
            println!(
                "prefit: final train mse {:.6} (validation {:?}) -> {}",
                final_mse,
                result.validation_loss,
                weights_path.display()
            );
            Ok(())
        }
        Command::Train {
            config,
            seed,
            init_weights,
            out,
            quiet,
        } => {
            let cfg = load_config(&config, seed, out)?;
            let dir = prepare_out_dir(&cfg)?;
            let init_actor = match &init_weights {
                Some(p) => Some(csv_io::import_csv(p)?),
                None => None,
            };
            let setup = TrainSetup {
                env_params: cfg.env_params(),
                base_model: cfg.robot_model()?,
                base_terrain: cfg.terrain(),
                domain_randomization: cfg.domain_randomization,
                actor_spec: MlpSpec::new(cfg.actor_sizes()),
                critic_spec: MlpSpec::new(cfg.critic_sizes()),
                master_seed: cfg.seed,
                init_actor,
                out_dir: dir.clone(),
                config_hash: cfg.hash(),
            };
            let output = train(&setup, &cfg.ppo, quiet)?;
            write_reward_curve(&dir.join("reward_curve.csv"), &output.reward_curve)?;
            println!(
                "train: {} iterations, final checkpoint {}",
                cfg.ppo.iterations,
                output.final_checkpoint.display()
            );
            Ok(())
        }
        Command::Eval {
            config,
            weights,
            episodes,
            seed,
            out,
        } => {
            let cfg = load_config(&config, seed, out)?;
            let dir = prepare_out_dir(&cfg)?;
            let episodes = episodes.unwrap_or(cfg.eval_episodes);
            let net = csv_io::import_csv(&weights)?;
            let traces_dir = dir.join("traces");
            std::fs::create_dir_all(&traces_dir)
                .map_err(|e| BounderError::io(traces_dir.display().to_string(), e))?;
            let traces = evaluate_policy(
                &cfg.env_params(),
                &cfg.robot_model()?,
                &cfg.terrain(),
                &net,
                episodes,
                cfg.seed,
            )?;
            for (i, t) in traces.iter().enumerate() {
                t.to_csv(&traces_dir.join(format!("episode_{i:03}.csv")))?;
            }
            let report = compute_metrics(
                &traces,
                cfg.termination.max_episode_duration,
                estimator_for(&cfg)?,
            )?;
            print_report(&report);
            Ok(())
        }
        Command::Export { checkpoint, out } => {
            let actor = csv_io::import_csv(&checkpoint.join("actor.csv"))?;
            csv_io::export_csv(&actor, &out)?;
            println!("export: {} -> {}", checkpoint.display(), out.display());
            Ok(())
        }
        Command::Metrics {
            config,
            traces,
            out,
        } => {
            let cfg = load_config(&config, None, None)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&traces)
                .map_err(|e| BounderError::io(traces.display().to_string(), e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension().map(|x| x == "csv").unwrap_or(false)
                        && p.file_name()
                            .map(|n| n.to_string_lossy().starts_with("episode_"))
                            .unwrap_or(false)
                })
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(BounderError::Data(format!(
                    "{}: no episode_*.csv traces found",
                    traces.display()
                )));
            }
            let loaded: Vec<EpisodeTrace> = paths
                .iter()
                .map(|p| EpisodeTrace::from_csv(p))
                .collect::<Result<_>>()?;
            let report = compute_metrics(
                &loaded,
                cfg.termination.max_episode_duration,
                estimator_for(&cfg)?,
            )?;
            print_report(&report);
            let out_path = out.unwrap_or_else(|| traces.join("metrics.csv"));
            write_metrics_csv(&out_path, &report)?;
            println!("metrics -> {}", out_path.display());
            Ok(())
        }
        Command::PlotData { config, run, out } => {
            let cfg = load_config(&config, None, None)?;
            let out_dir = out.unwrap_or_else(|| run.join("plot_data"));
            std::fs::create_dir_all(&out_dir)
                .map_err(|e| BounderError::io(out_dir.display().to_string(), e))?;
            let mut wrote = 0usize;
            wrote += project_prefit_loss(&run, &out_dir)?;
            wrote += project_reward_curve(&run, &out_dir)?;
            wrote += project_traces(&cfg, &run, &out_dir)?;
            if wrote == 0 {
                return Err(BounderError::Data(format!(
                    "{}: nothing to project (no prefit_loss.csv, reward_curve.csv or traces/)",
                    run.display()
                )));
            }
            println!("plot-data: wrote {wrote} file(s) to {}", out_dir.display());
            Ok(())
        }
    }
}

fn estimator_for(cfg: &RunConfig) -> Result<HeightEstimator<'static>> {
    if cfg.metrics_full_com {
        // Leak a model per process invocation; the CLI exits right after.
        let model = Box::leak(Box::new(cfg.robot_model()?));
        Ok(HeightEstimator::FullCom(model))
    } else {
        Ok(HeightEstimator::TorsoOrigin)
    }
}

fn collect_from_config(cfg: &RunConfig) -> Result<PrefitDataset> {
    let opts = CollectOptions {
        n_control_steps: cfg.prefit_dataset_steps,
        seed: cfg.seed,
        train_fraction: cfg.prefit_train_fraction,
        action_noise_std: cfg.prefit_action_noise_std,
    };
    collect_dataset(
        &opts,
        &cfg.slip,
        &cfg.env_params(),
        &cfg.robot_model()?,
        &cfg.terrain(),
    )
}

fn print_report(r: &MetricsReport) {
    println!("episodes            : {}", r.episodes);
    println!("mean forward speed  : {:.3} m/s", r.mean_forward_speed);
    println!(
        "CoM height range    : [{:.3}, {:.3}] m",
        r.com_height_min, r.com_height_max
    );
    println!(
        "CoM height stddev   : {:.4} m (population, pooled)",
        r.com_height_stddev
    );
    println!(
        "contact frequency   : {:.2} Hz",
        r.dominant_contact_frequency
    );
    println!(
        "pair phase diff     : {:.3} of a period",
        r.pair_phase_difference
    );
    println!("falls per minute    : {:.2}", r.falls_per_minute);
}

fn write_metrics_csv(path: &Path, r: &MetricsReport) -> Result<()> {
    use std::fmt::Write as _;
    // Standard deviations are population (not sample) values.
    let mut s = String::from(
        "scope,mean_forward_speed,com_height_min,com_height_max,com_height_stddev,contact_frequency_hz,pair_phase_difference,falls_per_minute\n",
    );
    writeln!(
        s,
        "pooled,{},{},{},{},{},{},{}",
        r.mean_forward_speed,
        r.com_height_min,
        r.com_height_max,
        r.com_height_stddev,
        r.dominant_contact_frequency,
        r.pair_phase_difference,
        r.falls_per_minute
    )
    .unwrap();
    for (i, std) in r.per_episode_com_stddev.iter().enumerate() {
        writeln!(s, "episode_{i:03},,,,{std},,,").unwrap();
    }
    std::fs::write(path, s).map_err(|e| BounderError::io(path.display().to_string(), e))
}

fn write_loss_curve(path: &Path, losses: &[f64]) -> Result<()> {
    use std::fmt::Write as _;
    let mut s = String::from("iteration,train_mse\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(s, "{i},{l}").unwrap();
    }
    std::fs::write(path, s).map_err(|e| BounderError::io(path.display().to_string(), e))
}

fn write_validation(path: &Path, losses: &[f64]) -> Result<()> {
    use std::fmt::Write as _;
    let mut s = String::from("phase,validation_mse\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(s, "{i},{l}").unwrap();
    }
    std::fs::write(path, s).map_err(|e| BounderError::io(path.display().to_string(), e))
}

fn project_prefit_loss(run: &Path, out: &Path) -> Result<usize> {
    let src = run.join("prefit_loss.csv");
    if !src.exists() {
        return Ok(0);
    }
    let text =
        std::fs::read_to_string(&src).map_err(|e| BounderError::io(src.display().to_string(), e))?;
    let dst = out.join("fig_prefit_loss.csv");
    std::fs::write(&dst, text).map_err(|e| BounderError::io(dst.display().to_string(), e))?;
    Ok(1)
}

fn project_reward_curve(run: &Path, out: &Path) -> Result<usize> {
    use std::fmt::Write as _;
    let src = run.join("reward_curve.csv");
    if !src.exists() {
        return Ok(0);
    }
    let text =
        std::fs::read_to_string(&src).map_err(|e| BounderError::io(src.display().to_string(), e))?;
    let mut s = String::from("iteration,mean_episode_reward,mean_episode_length\n");
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() >= 3 {
            writeln!(s, "{},{},{}", fields[0], fields[1], fields[2]).unwrap();
        }
    }
    let dst = out.join("fig_reward_curve.csv");
    std::fs::write(&dst, s).map_err(|e| BounderError::io(dst.display().to_string(), e))?;
    Ok(1)
}

/// Joint position/torque/gait and CoM height projections of the first
/// recorded trace (left-hind leg, matching the usual presentation).
fn project_traces(cfg: &RunConfig, run: &Path, out: &Path) -> Result<usize> {
    use std::fmt::Write as _;
    let traces_dir = run.join("traces");
    if !traces_dir.exists() {
        return Ok(0);
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&traces_dir)
        .map_err(|e| BounderError::io(traces_dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "csv").unwrap_or(false))
        .collect();
    paths.sort();
    let Some(first) = paths.first() else {
        return Ok(0);
    };
    let trace = EpisodeTrace::from_csv(first)?;
    let gait = cfg.env_params().gait;

    let mut joints = String::from(
        "time,lh_hip_pitch_pos,lh_knee_pos,lh_hip_pitch_torque,lh_knee_torque,gait_signal_hind,contact_lf,contact_rf,contact_lh,contact_rh\n",
    );
    let mut com = String::from("time,com_height\n");
    for r in &trace.rows {
        let s_hind = bounder::reward::gait_signal(r.time, &gait, 2);
        writeln!(
            joints,
            "{},{},{},{},{},{},{},{},{},{}",
            r.time,
            r.joint_positions[7],
            r.joint_positions[8],
            r.torques[7],
            r.torques[8],
            s_hind,
            r.contacts[0],
            r.contacts[1],
            r.contacts[2],
            r.contacts[3]
        )
        .unwrap();
        writeln!(com, "{},{}", r.time, r.torso_z).unwrap();
    }
    let p1 = out.join("fig_joint_timeseries.csv");
    std::fs::write(&p1, joints).map_err(|e| BounderError::io(p1.display().to_string(), e))?;
    let p2 = out.join("fig_com_height.csv");
    std::fs::write(&p2, com).map_err(|e| BounderError::io(p2.display().to_string(), e))?;
    Ok(2)
}
