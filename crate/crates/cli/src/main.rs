/*
Copyright 2026 The tdcr Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! `tdcr`: run scenarios, repeat trials, train the residual, serve teleop
//! and validate Jacobians.

mod check;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use tdcr_core::model::ShapeModel;
use tdcr_core::plant::{Plant, PlantPerturbation};
use tdcr_core::residual::{run_experiment, write_loss_history, Checkpoint, ExperimentConfig};
use tdcr_core::scenario::log::write_run;
use tdcr_core::scenario::presets::{self, TrackShape};
use tdcr_core::scenario::trials::{reaching_trials, repeated_trials, tracking_trials, Stat, TrialsReport};
use tdcr_core::scenario::{load_model, run_scenario_with_model, ScenarioConfig};
use tdcr_service::{ServiceConfig, DEFAULT_PORT, PORT_ENV};

#[derive(Parser)]
#[command(
    name = "tdcr",
    version,
    about = "Shape-aware control of tendon-driven continuum robots"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop scenario and write its logs.
    Run(RunArgs),
    /// Randomized repeats of a scenario with a summary table.
    Trials(TrialsArgs),
    /// Fit the residual network against a synthetic plant.
    Train(TrainArgs),
    /// Start the live teleop service.
    Serve(ServeArgs),
    /// Validate the finite-difference Jacobian.
    JacobianCheck(check::CheckArgs),
}

/// Overrides shared by `run` and `trials`.
#[derive(Args)]
struct Overrides {
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// MPPI rollouts per step.
    #[arg(long)]
    samples: Option<usize>,
    /// Residual checkpoint for the controller's model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Drive the seeded perturbed plant instead of the nominal one.
    #[arg(long, value_name = "SEED")]
    perturbed: Option<u64>,
}

impl Overrides {
    fn apply(&self, c: &mut ScenarioConfig) {
        if let Some(d) = self.duration {
            c.duration = d;
        }
        if let Some(k) = self.samples {
            c.mppi.num_samples = k;
        }
        if let Some(p) = &self.checkpoint {
            c.checkpoint = Some(p.clone());
        }
        if let Some(s) = self.perturbed {
            c.plant = Plant::Perturbed(PlantPerturbation::seeded(s));
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Preset: a tracking shape, `obstacles`, `reaching` or `teleop`.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    scenario: Option<String>,
    /// Scenario file, TOML or JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct TrialsArgs {
    /// A tracking shape, `reaching` or `obstacles`.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write `trials.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment file (TOML); defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out/train")]
    out: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Window of the smoothed loss check.
    #[arg(long, default_value_t = 500)]
    window: usize,
}

#[derive(Args)]
struct ServeArgs {
    /// Service file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    host: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Trials(a) => cmd_trials(a),
        Command::Train(a) => cmd_train(a),
        Command::Serve(a) => cmd_serve(a),
        Command::JacobianCheck(a) => check::run(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let mut config = match (&a.scenario, &a.config) {
        (Some(name), _) => presets::by_name(name)?,
        (None, Some(path)) => ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    a.overrides.apply(&mut config);
    config.validate()?;
    let model = load_model(&config)?;
    info!("running {} for {} s", config.name, config.duration);
    let result = run_scenario_with_model(&config, &model)?;
    let dir = write_run(&a.out, &config, &result)?;
    println!("{}", dir.display());
    println!("{}", serde_json::to_string(&result.summary)?);
    Ok(ExitCode::SUCCESS)
}

fn model_for(overrides: &Overrides) -> Result<ShapeModel> {
    Ok(match &overrides.checkpoint {
        Some(p) => {
            ShapeModel::from_checkpoint(&Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?)?
        }
        None => ShapeModel::nominal(Default::default()),
    })
}

fn cmd_trials(a: TrialsArgs) -> Result<ExitCode> {
    if a.n == 0 {
        bail!("--n must be positive");
    }
    let model = model_for(&a.overrides)?;
    let customize = |c: &mut ScenarioConfig| a.overrides.apply(c);
    let report = match a.scenario.as_str() {
        "reaching" => reaching_trials(a.n, a.seed, &model, customize)?,
        "obstacles" | "teleop" => {
            let mut base = presets::by_name(&a.scenario)?;
            customize(&mut base);
            repeated_trials(&base, a.n, a.seed, &model)?
        }
        other => tracking_trials(other.parse::<TrackShape>()?, a.n, a.seed, &model, customize)?,
    };
    print!("{}", summary_table(&report));
    if let Some(out) = &a.out {
        write_report(out, &report)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_report(dir: &Path, report: &TrialsReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join("trials.json");
    fs::write(&path, serde_json::to_string_pretty(report)?)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn summary_table(r: &TrialsReport) -> String {
    let mut s = format!("{}: {} trials in {:.1} s\n", r.scenario, r.trials.len(), r.elapsed_secs);
    let rows: [(&str, Option<Stat>); 9] = [
        ("rmse_m", Some(r.rmse)),
        ("mean_error_m", Some(r.mean_error)),
        ("max_error_m", Some(r.max_error)),
        ("final_tip_error_m", Some(r.final_tip_error)),
        ("final_shape_error_m", r.final_shape_error),
        ("tip_settling_s", r.tip_settling_time),
        ("shape_settling_s", r.shape_settling_time),
        ("min_clearance_m", r.min_clearance),
        (
            "elapsed_per_trial_s",
            Stat::of(&[r.elapsed_secs / r.trials.len() as f64]),
        ),
    ];
    for (name, stat) in rows {
        if let Some(st) = stat {
            s += &format!(
                "{name:<22} {:>11.6} ± {:<11.6} [{:.6}, {:.6}]\n",
                st.mean, st.std, st.min, st.max
            );
        }
    }
    s
}

fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let mut config = match &a.config {
        Some(p) => ExperimentConfig::from_toml_str(&fs::read_to_string(p)?)
            .with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = a.iterations {
        config.training.iterations = n;
    }
    if let Some(b) = a.budget {
        config.training.time_budget_secs = Some(b);
    }
    if let Some(s) = a.seed {
        config.training.seed = s;
    }
    config.validate()?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("config.echo.json"), serde_json::to_string_pretty(&config)?)?;

    let every = (config.training.iterations / 20).max(1);
    let mut losses = Vec::new();
    let outcome = run_experiment(&config, a.window, |it, loss| {
        losses.push(loss);
        if it % every == 0 {
            info!("iteration {it}: loss {loss:.3e}");
        }
    });
    // Keep what was learned about the run even when it fails midway.
    write_loss_history(a.out.join("loss.csv"), &losses)?;
    let experiment = outcome?;
    experiment.checkpoint.save(a.out.join("checkpoint.json"))?;
    fs::write(
        a.out.join("report.json"),
        serde_json::to_string_pretty(&experiment.report)?,
    )?;
    let r = &experiment.report;
    println!(
        "{} of {} iterations in {:.1} s; holdout rms {:.3e} m nominal, {:.3e} m hybrid (ratio {:.3})",
        r.iterations, r.target_iterations, r.elapsed_secs, r.nominal_rms, r.hybrid_rms, r.ratio
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve(a: ServeArgs) -> Result<ExitCode> {
    let config = match &a.config {
        Some(p) => ServiceConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ServiceConfig::default(),
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        let handle = tdcr_service::spawn(config, listener).await?;
        println!("{}", handle.url());
        tokio::signal::ctrl_c().await?;
        handle.shutdown().await?;
        anyhow::Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}
