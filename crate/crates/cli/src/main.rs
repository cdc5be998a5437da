use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use oksphere::dfs::Grid;
use oksphere::dynamics::{RunOptions, Startup};
use oksphere::experiments::{
    convergence_harness, count_bubbles, gamma12_sweep, gamma_sweep, ConvergenceTable, SweepRow,
    SweepRun,
};
use oksphere::harmonics::{harmonic_field, laplace_eigenvalue};
use oksphere::helmholtz::SolverPlan;
use oksphere::io::{
    read_snapshot, run_config, write_heatmap, write_json, write_snapshot, InitSpec, RawConfig,
    RunConfig, SystemKind,
};
use oksphere::{Error, Result};

#[derive(Parser)]
#[command(
    name = "oksphere",
    version,
    about = "Phase-field bubble assemblies on the sphere"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the configuration file.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Square grid size `n` (`n_φ = n_θ = n`).
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Sok,
    Sno,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartupArg {
    FullStep,
    ShortStep,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration to equilibrium and write its outputs.
    Run {
        #[command(flatten)]
        o: Overrides,
    },
    /// Temporal convergence table against a small-step benchmark.
    Converge {
        #[arg(long, value_enum)]
        system: SystemArg,
        #[command(flatten)]
        o: Overrides,
        #[arg(long, default_value_t = 0.01)]
        final_time: f64,
        #[arg(long, default_value_t = 1e-6)]
        benchmark_tau: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [5e-4, 2.5e-4, 1.25e-4, 6.25e-5, 3.125e-5])]
        ladder: Vec<f64>,
        #[arg(long, value_enum)]
        startup: Option<StartupArg>,
    },
    /// Best-of-seeds equilibria over a list of γ (γ₁₁ = γ₂₂ for two species).
    SweepGamma {
        #[command(flatten)]
        o: Overrides,
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
        /// Number of seeds, starting at `--seed`.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Best-of-seeds two-species equilibria over a list of γ₁₂.
    SweepGamma12 {
        #[command(flatten)]
        o: Overrides,
        #[arg(long, value_delimiter = ',', required = true)]
        gamma12s: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Inverse Laplacian against spherical harmonics of degree 1..=4.
    HelmholtzTest {
        #[arg(long, value_delimiter = ',', default_values_t = [32usize, 64])]
        grids: Vec<usize>,
    },
    /// Bubble statistics of a stored snapshot.
    CountBubbles {
        /// Snapshot path without extension.
        snapshot: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            ExitCode::FAILURE
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { o } => {
            let cfg = resolve(&o, None)?;
            let s = run_config(&cfg)?;
            print_json(&json!({
                "output_dir": cfg.output_dir,
                "stop_reason": s.stop_reason,
                "steps": s.steps,
                "time": s.time,
                "energy": s.energy,
                "bubble_counts": s.bubble_counts,
            }));
            Ok(())
        }
        Command::Converge {
            system,
            o,
            final_time,
            benchmark_tau,
            ladder,
            startup,
        } => converge(system, &o, final_time, benchmark_tau, &ladder, startup),
        Command::SweepGamma { o, gammas, seeds } => sweep(&o, &gammas, seeds, false),
        Command::SweepGamma12 { o, gamma12s, seeds } => sweep(&o, &gamma12s, seeds, true),
        Command::HelmholtzTest { grids } => helmholtz_test(&grids),
        Command::CountBubbles {
            snapshot,
            threshold,
        } => {
            let (meta, fields) = read_snapshot(&snapshot)?;
            let reports: Vec<_> = fields.iter().map(|f| count_bubbles(f, threshold)).collect();
            print_json(&json!({"step": meta.step, "time": meta.time, "species": reports}));
            Ok(())
        }
    }
}

fn print_json(v: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("value serializes")
    );
}

/// Loads the configuration (or `base` when no file is given) and applies
/// the command-line overrides.
fn resolve(o: &Overrides, base: Option<RawConfig>) -> Result<RunConfig> {
    let mut raw = match (&o.config, base) {
        (Some(path), _) => read_raw(path)?,
        (None, Some(raw)) => raw,
        (None, None) => return Err(Error::Config("--config is required".into())),
    };
    if let Some(seed) = o.seed {
        raw.seed = Some(seed);
    }
    if let Some(n) = o.grid {
        raw.n_phi = Some(n);
        raw.n_theta = Some(n);
    }
    if let Some(tau) = o.tau {
        raw.tau = Some(tau);
    }
    if let Some(out) = &o.out {
        raw.output_dir = Some(out.clone());
    }
    RunConfig::from_raw(&raw)
}

fn read_raw(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let raw = RawConfig::parse(&text, path)?;
    // validate before overrides so errors refer to the file as written
    RunConfig::from_raw(&raw)?;
    Ok(raw)
}

/// Convergence-test defaults: γ = 100 and a random-circle start.
fn converge_base(system: SystemArg) -> RawConfig {
    match system {
        SystemArg::Sok => RawConfig {
            system: Some(SystemKind::Sok),
            gamma: Some(100.0),
            init: Some(InitSpec::Circle),
            n_phi: Some(128),
            n_theta: Some(128),
            ..Default::default()
        },
        SystemArg::Sno => RawConfig {
            system: Some(SystemKind::Sno),
            gamma11: Some(100.0),
            gamma22: Some(100.0),
            init: Some(InitSpec::TwoCircles),
            n_phi: Some(128),
            n_theta: Some(128),
            ..Default::default()
        },
    }
}

fn converge(
    system: SystemArg,
    o: &Overrides,
    final_time: f64,
    benchmark_tau: f64,
    ladder: &[f64],
    startup: Option<StartupArg>,
) -> Result<()> {
    let mut cfg = resolve(o, Some(converge_base(system)))?;
    if let Some(s) = startup {
        cfg.scheme.startup = match s {
            StartupArg::FullStep => Startup::FullStep,
            StartupArg::ShortStep => Startup::ShortStep,
        };
    }
    let init = cfg.initial_fields(cfg.seed)?;
    let table = convergence_harness(&cfg.model(), &init, ladder, benchmark_tau, final_time)?;
    println!("{}", format_table(&table));
    if let Some(out) = &o.out {
        std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        write_json(&out.join("converge.json"), &table)?;
    }
    Ok(())
}

fn format_table(t: &ConvergenceTable) -> String {
    let mut s = format!(
        "# T = {}, benchmark tau = {}\n{:>12}  {:>14}  {:>6}\n",
        t.final_time, t.benchmark_tau, "tau", "error", "rate"
    );
    for r in &t.rows {
        let rate = r.rate.map_or("-".to_string(), |x| format!("{x:.2}"));
        s.push_str(&format!(
            "{:>12.4e}  {:>14.6e}  {:>6}\n",
            r.tau, r.error, rate
        ));
    }
    s.trim_end().to_string()
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn sweep(o: &Overrides, values: &[f64], seeds: u64, cross: bool) -> Result<()> {
    let cfg = resolve(o, None)?;
    if cross && cfg.system() != SystemKind::Sno {
        return Err(Error::Config(
            "sweep-gamma12 needs a two-species config".into(),
        ));
    }
    if seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let seed_list: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
    let model = cfg.model();
    let opts = RunOptions {
        stop: cfg.stop,
        record_every: cfg.record_every,
        record_energy: true,
        check_modified_energy: false,
    };
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let raw = cfg.to_raw();
    let sink = |param: f64, run: &SweepRun, fields: &[oksphere::dfs::SphereField]| -> Result<()> {
        let run_dir = dir.join(format!("p{param}_s{}", run.seed));
        std::fs::create_dir_all(&run_dir).map_err(|e| io_err(&run_dir, e))?;
        let time = model.system().step_time(run.steps);
        write_snapshot(
            &run_dir.join("final"),
            fields,
            run.steps,
            time,
            Some(raw.clone()),
        )?;
        write_heatmap(&run_dir.join("final.ppm"), fields)?;
        write_json(&run_dir.join("run.json"), run)
    };
    let init = |seed: u64| cfg.initial_fields(seed);
    let rows: Vec<SweepRow> = if cross {
        gamma12_sweep(&model, values, &seed_list, &init, &opts, Some(&sink))?
    } else {
        gamma_sweep(&model, values, &seed_list, &init, &opts, Some(&sink))?
    };
    write_json(&dir.join("sweep.json"), &rows)?;
    for r in &rows {
        let best = r.best.as_ref();
        print_json(&json!({
            "parameter": r.gamma,
            "best_seed": best.map(|b| b.seed),
            "best_count": r.best_count(),
            "pairing": best.and_then(|b| b.pairing.clone()),
            "failures": r.failures.len(),
        }));
    }
    Ok(())
}

fn helmholtz_test(grids: &[usize]) -> Result<()> {
    let mut worst = 0.0_f64;
    println!(
        "{:>5}  {:>6}  {:>3}  {:>12}",
        "n", "degree", "m", "rel_error"
    );
    for &n in grids {
        let g = Grid::square(n)?;
        let plan = SolverPlan::new(g, &[0.0])?;
        for d in 1..=4usize {
            for m in -(d as i64)..=d as i64 {
                let y = harmonic_field(g, d, m);
                let u = plan.inv_laplacian(&y)?;
                let expect = &y * (1.0 / laplace_eigenvalue(d));
                let err = (&u - &expect).max_abs() / expect.max_abs();
                worst = worst.max(err);
                println!("{n:>5}  {d:>6}  {m:>3}  {err:>12.3e}");
            }
        }
    }
    if worst > 1e-10 {
        return Err(Error::Config(format!(
            "eigenfunction residual {worst:e} exceeds 1e-10"
        )));
    }
    Ok(())
}
