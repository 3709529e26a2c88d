use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uhgf_core::network::{Network, NetworkSpec, Trajectory, TwoLevelConfig, UpdateMode};
use uhgf_sim::config::HarnessConfig;
use uhgf_sim::filter::{mode_name, robustness_preset, standard_preset};
use uhgf_sim::kl_grid::write_kl_csv;
use uhgf_sim::report::{create, to_json_string, write_json};
use uhgf_sim::scan::{write_scan_csv, ScanConfig};
use uhgf_sim::series::SeriesSummary;
use uhgf_sim::{compare, generate_series, run_filter, run_kl_grid, run_param_scan, HarnessError, Series};

#[derive(Parser)]
#[command(
    name = "uhgf-sim",
    version,
    about = "Simulation harness for hierarchical Gaussian filtering"
)]
struct Cli {
    /// Harness config file (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Overrides the series seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for grid runs (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Format of the per-cell / per-step table
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// KL divergence of both approximations over a canonical parameter grid
    KlGrid,
    /// Generate the synthetic regime-switching series
    GenSeries,
    /// Filter a series in one update mode
    Filter {
        #[arg(long, value_enum, default_value_t = Mode::Uhgf)]
        mode: Mode,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Filter in both modes and diff the trajectories
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Coverage of both modes over an (omega1, omega2) grid
    Scan {
        #[arg(long, value_enum, default_value_t = ScanPreset::Desk)]
        preset: ScanPreset,
        /// Series CSV to scan on instead of the generated series
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Series CSV: one observation per line, optional ground-truth column
    #[arg(long)]
    input: Option<PathBuf>,
    /// Network spec file (TOML); replaces the two-level network
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Standard)]
    preset: Preset,
    #[arg(long, allow_hyphen_values = true)]
    omega1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    omega2: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Classic,
    Uhgf,
}

impl From<Mode> for UpdateMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Classic => UpdateMode::Classic,
            Mode::Uhgf => UpdateMode::Uhgf,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// omega1 = 2, omega2 = -1, input variance 1000
    Standard,
    /// As standard with omega2 = 2
    Robust,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScanPreset {
    /// 19 x 19, step 1
    Desk,
    /// 181 x 181, step 0.1
    Full,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.series.seed = seed;
    }
    let pool = match cli.threads {
        Some(0) => return Err(HarnessError::config("--threads must be at least 1")),
        n => rayon::ThreadPoolBuilder::new()
            .num_threads(n.unwrap_or(0))
            .build()
            .map_err(|e| HarnessError::config(format!("cannot start thread pool: {e}")))?,
    };
    std::fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    let format = cli.format;

    match cli.command {
        Command::KlGrid => {
            let report = pool.install(|| run_kl_grid(&cfg.kl_grid))?;
            match format {
                Format::Csv => write_kl_csv(&report.cells, create(&out.join("kl_grid.csv"))?)?,
                Format::Json => std::fs::write(out.join("kl_grid.json"), to_json_string(&report.cells))?,
            }
            write_json(&out.join("summary.json"), &report.summary)?;
            let s = &report.summary;
            println!(
                "cells {}  classic failures {} ({:.1}%)  uhgf ok {}  mean KL classic {:.4} uhgf {:.4}",
                s.cells,
                s.classic_failures,
                100.0 * s.classic_failure_rate,
                s.uhgf_successes,
                s.mean_classic_kl,
                s.mean_uhgf_kl
            );
        }
        Command::GenSeries => {
            let series = generate_series(&cfg.series)?;
            write_series(&series, out, format)?;
            let summary = SeriesSummary::new(&cfg.series, &series);
            write_json(&out.join("summary.json"), &summary)?;
            let stats = summary.stats;
            println!(
                "{} observations, mean {:.3}, sd {:.3}",
                stats.length, stats.mean, stats.sd
            );
        }
        Command::Filter { mode, run } => {
            let series = load_series(&cfg, run.input.as_deref())?;
            let network = build_network(&cfg, &run)?;
            let result = run_filter(&series, &network, mode.into())?;
            write_trajectory(&result.trajectory, out, "trajectory", format)?;
            write_json(&out.join("summary.json"), &result.summary)?;
            let s = &result.summary;
            match &s.failure {
                Some(f) => println!(
                    "{}: negative precision at step {} on {} after {} steps",
                    mode_name(s.mode),
                    f.step,
                    f.node,
                    s.steps_completed
                ),
                None => println!("{}: completed {} steps", mode_name(s.mode), s.steps_completed),
            }
        }
        Command::Compare { run } => {
            let series = load_series(&cfg, run.input.as_deref())?;
            let network = build_network(&cfg, &run)?;
            let cmp = compare(&series, &network)?;
            write_trajectory(&cmp.classic.trajectory, out, "trajectory_classic", format)?;
            write_trajectory(&cmp.uhgf.trajectory, out, "trajectory_uhgf", format)?;
            write_json(&out.join("summary.json"), &cmp.summary)?;
            match &cmp.summary.classic.failure {
                Some(f) => println!("classic: negative precision at step {} on {}", f.step, f.node),
                None => println!("classic: completed {} steps", cmp.summary.classic.steps_completed),
            }
            println!(
                "uhgf: completed {} of {} steps",
                cmp.summary.uhgf.steps_completed, cmp.summary.uhgf.steps_requested
            );
            for m in &cmp.summary.uhgf.min_precision {
                println!("uhgf min precision {}: {}", m.node, m.min_precision);
            }
        }
        Command::Scan { preset, input } => {
            let series = load_series(&cfg, input.as_deref())?;
            let base = match preset {
                ScanPreset::Desk => ScanConfig::desk(),
                ScanPreset::Full => ScanConfig::full(),
            };
            let scan_cfg = ScanConfig {
                omega1: cfg.scan.omega1.unwrap_or(base.omega1),
                omega2: cfg.scan.omega2.unwrap_or(base.omega2),
                network: cfg.network.unwrap_or(base.network),
            };
            let report = pool.install(|| run_param_scan(&scan_cfg, &series))?;
            match format {
                Format::Csv => write_scan_csv(&report.cells, create(&out.join("scan.csv"))?)?,
                Format::Json => std::fs::write(out.join("scan.json"), to_json_string(&report.cells))?,
            }
            write_json(&out.join("summary.json"), &report.summary)?;
            let s = &report.summary;
            println!(
                "{} cells  classic coverage {:.1}%  uhgf coverage {:.1}%",
                s.cells, s.classic_coverage, s.uhgf_coverage
            );
        }
    }
    Ok(())
}

fn load_series(cfg: &HarnessConfig, input: Option<&Path>) -> Result<Series, HarnessError> {
    match input.or(cfg.filter.input.as_deref()) {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| HarnessError::config(format!("cannot open {}: {e}", path.display())))?;
            Series::read_csv(file)
        }
        None => generate_series(&cfg.series),
    }
}

fn build_network(cfg: &HarnessConfig, run: &RunArgs) -> Result<Network, HarnessError> {
    if let Some(path) = run.network.as_deref().or(cfg.filter.network_file.as_deref()) {
        if run.omega1.is_some() || run.omega2.is_some() {
            return Err(HarnessError::config(
                "--omega1/--omega2 apply only to the two-level network",
            ));
        }
        return Ok(Network::load(path)?);
    }
    let base = match run.preset {
        Preset::Standard => cfg.network.unwrap_or_else(standard_preset),
        Preset::Robust => robustness_preset(),
    };
    let two = TwoLevelConfig {
        omega1: run.omega1.unwrap_or(base.omega1),
        omega2: run.omega2.unwrap_or(base.omega2),
        ..base
    };
    Ok(Network::from_spec(&NetworkSpec::two_level(&two))?)
}

fn write_series(series: &Series, out: &Path, format: Format) -> Result<(), HarnessError> {
    match format {
        Format::Csv => series.write_csv(create(&out.join("series.csv"))?)?,
        Format::Json => std::fs::write(out.join("series.json"), to_json_string(series))?,
    }
    Ok(())
}

fn write_trajectory(traj: &Trajectory, out: &Path, stem: &str, format: Format) -> Result<(), HarnessError> {
    match format {
        Format::Csv => traj.write_csv(create(&out.join(format!("{stem}.csv")))?)?,
        Format::Json => std::fs::write(out.join(format!("{stem}.json")), to_json_string(traj))?,
    }
    Ok(())
}
