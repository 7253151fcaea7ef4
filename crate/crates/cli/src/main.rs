//! `twolayer`: synthesize far-field data, run forward solves and reconstructions.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;

use twolayer_core::data_io::{
    add_noise, angles_to_points, dataset_to_csv, export_trace_curves, read_dataset, read_run_config, read_trace, synthesize,
    uniform_angles, write_curve, write_dataset, write_trace, Dataset, RunConfig,
};
use twolayer_core::forward::assemble_system;
use twolayer_core::geometry::check_pair;
use twolayer_core::inverse::{jacobian_check, multi_frequency_drive, StopReason};
use twolayer_core::Error;

#[derive(Debug, Parser)]
#[command(name = "twolayer", version, about = "Two-layer transmission scattering: forward solves and shape reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Noise seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores; 1 gives bitwise reproducible runs).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override a config key, e.g. `--set solver.rho=0.7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize (noisy) far-field data for the `truth` geometry and write `dataset.csv`.
    Synth(Common),
    /// Solve the forward problem for the `truth` geometry and write `farfield.csv`.
    Forward(Common),
    /// Reconstruct from `data` (or synthesized data) and write `trace.json` and curve CSVs.
    Invert(Common),
    /// Compare Jacobian columns at the initial guess with central differences.
    CheckDerivative {
        #[command(flatten)]
        common: Common,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Write per-iteration curve CSVs for a trace.
    ExportPlot {
        /// Trace written by `invert`.
        #[arg(long, value_name = "PATH")]
        trace: PathBuf,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Input("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut config = read_run_config(&common.config, &common.overrides)
        .with_context(|| format!("reading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(config)
}

fn noisy_dataset(config: &RunConfig) -> anyhow::Result<Dataset> {
    let clean = synthesize(config.truth()?, &config.solver)?;
    Ok(add_noise(&clean, config.solver.delta, config.seed)?)
}

fn synth(common: &Common) -> anyhow::Result<()> {
    let config = load(common)?;
    let data = noisy_dataset(&config)?;
    let path = common.out.join("dataset.csv");
    write_dataset(&path, &data)?;
    let truth = config.truth()?;
    write_curve(&common.out.join("truth_outer.csv"), &truth.outer)?;
    write_curve(&common.out.join("truth_inner.csv"), &truth.inner)?;
    println!(
        "wrote {} ({} frequencies × {} incident × {} observation, delta={}, seed={})",
        path.display(),
        data.frequencies.len(),
        data.incident_angles.len(),
        data.observation_angles.len(),
        data.delta,
        config.seed
    );
    Ok(())
}

fn forward(common: &Common) -> anyhow::Result<()> {
    let config = load(common)?;
    let truth = config.truth()?;
    let solver = &config.solver;
    check_pair(&truth.outer, &truth.inner)?;
    let incident_angles = uniform_angles(solver.incident_directions);
    let observation_angles = uniform_angles(solver.n_obs);
    let mut values = Vec::new();
    for &k0 in &solver.frequencies {
        let params = truth.medium(k0, solver)?;
        let system = assemble_system(&truth.outer, &truth.inner, solver.n_solve, &params)?;
        let ff = system.far_fields(&angles_to_points(&incident_angles), &angles_to_points(&observation_angles))?;
        let norm = ff.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        println!("k0={k0}: system size {}, condition ≈ {:.3e}, max |u∞| = {norm:.6e}", system.size(), system.condition());
        values.push(ff.values);
    }
    let data = Dataset {
        frequencies: solver.frequencies.clone(),
        incident_angles,
        observation_angles,
        values,
        delta: 0.0,
        seed: None,
    };
    let path = common.out.join("farfield.csv");
    fs::write(&path, dataset_to_csv(&data)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Fails with a numerical error if any frequency stage was aborted (the trace is still written).
fn invert(common: &Common) -> anyhow::Result<()> {
    let config = load(common)?;
    let data = match &config.data {
        Some(p) => {
            let path = resolve(&common.config, p);
            read_dataset(&path).with_context(|| format!("reading {}", path.display()))?
        }
        None => noisy_dataset(&config)?,
    };
    if data.frequencies != config.solver.frequencies {
        return Err(Error::Config(format!(
            "dataset frequencies {:?} differ from solver.frequencies {:?}",
            data.frequencies, config.solver.frequencies
        ))
        .into());
    }
    let initial = config.initial()?.state(config.solver.degree)?;
    let (state, trace) = multi_frequency_drive(&initial, &data.far_fields(), &config.solver)?;
    write_trace(&common.out.join("trace.json"), &trace)?;
    let (o, i) = state.curves();
    write_curve(&common.out.join("outer.csv"), &o)?;
    write_curve(&common.out.join("inner.csv"), &i)?;
    for s in &trace.stages {
        println!(
            "k0={}: {} iterations, Err={:.4e}, lambda1={:.4e}, stop={:?}{}",
            s.k0,
            s.iterations,
            s.err,
            s.state.lambda1,
            s.stop,
            s.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default()
        );
    }
    println!("classification: {:?}", trace.classification);
    println!("wrote {}", common.out.join("trace.json").display());
    match trace.stages.iter().find(|s| s.stop == StopReason::Aborted) {
        Some(s) => Err(Error::StageAborted {
            k0: s.k0,
            reason: s.message.clone().unwrap_or_default(),
        }
        .into()),
        None => Ok(()),
    }
}

fn resolve(config_path: &Path, p: &str) -> PathBuf {
    let path = PathBuf::from(p);
    if path.is_relative() {
        config_path.parent().map(|d| d.join(&path)).unwrap_or(path)
    } else {
        path
    }
}

/// Columns below this fraction of the largest column norm are reported but not scored.
const FLAT_COLUMN: f64 = 1e-6;

fn check_derivative(common: &Common, step: f64) -> anyhow::Result<()> {
    let config = load(common)?;
    let state = config.initial()?.state(config.solver.degree)?;
    let k0 = config.solver.frequencies[0];
    let checks = jacobian_check(&state, k0, &config.solver, step)?;
    let largest = checks.iter().map(|c| c.column_norm).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    let mut flat = 0;
    for c in &checks {
        if c.column_norm <= FLAT_COLUMN * largest {
            flat += 1;
            println!("{:?}: {:.3e} (column norm {:.3e}, insensitive)", c.parameter, c.relative_error, c.column_norm);
        } else {
            worst = worst.max(c.relative_error);
            println!("{:?}: {:.3e} (column norm {:.3e})", c.parameter, c.relative_error, c.column_norm);
        }
    }
    println!(
        "max relative column error: {worst:.3e} ({} columns, {flat} insensitive, step {step:e}, k0={k0})",
        checks.len()
    );
    Ok(())
}

fn export_plot(trace: &Path, out: &Path) -> anyhow::Result<()> {
    let trace = read_trace(trace).with_context(|| format!("reading {}", trace.display()))?;
    let count = export_trace_curves(out, &trace)?;
    println!("wrote {count} curve files to {}", out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    info!("{:?}", cli.command);
    let result = match &cli.command {
        Command::Synth(c) => synth(c),
        Command::Forward(c) => forward(c),
        Command::Invert(c) => invert(c),
        Command::CheckDerivative { common, step } => check_derivative(common, *step),
        Command::ExportPlot { trace, out } => export_plot(trace, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_errors_map_to_exit_code_two() {
        let aborted: anyhow::Error = Error::StageAborted { k0: 2.0, reason: "radius floor".into() }.into();
        assert_eq!(exit_code(&aborted.context("inverting")), 2);
        let singular: anyhow::Error = Error::Singular { condition: 1e17 }.into();
        assert_eq!(exit_code(&singular), 2);
    }

    #[test]
    fn other_errors_map_to_exit_code_one() {
        let config: anyhow::Error = Error::Config("missing key `truth`".into()).into();
        assert_eq!(exit_code(&config.context("reading run.json")), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 1);
    }

    #[test]
    fn relative_data_paths_follow_the_config() {
        assert_eq!(resolve(Path::new("runs/a.json"), "d.csv"), PathBuf::from("runs/d.csv"));
        assert_eq!(resolve(Path::new("runs/a.json"), "/x/d.csv"), PathBuf::from("/x/d.csv"));
    }
}
