use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use obslab_cli::config::{Analysis, ConfigError, ScenarioConfig};
use obslab_cli::registry::Registry;
use obslab_cli::runner::{provenance, run_scenario, RunReport, EXIT_CONFIG, EXIT_FAIL};
use obslab_cli::study::refinement_study;
use obslab_core::io::{write_json, CsvTable};

#[derive(Parser)]
#[command(name = "obslab", version, about = "Obstacle-problem solver and free-boundary analysis laboratory")]
struct Cli {
    /// Worker threads for the parallel analyses (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the obstacle problem and check its residuals.
    Solve(RunArgs),
    /// Run every analysis listed in the scenario.
    Analyze(RunArgs),
    /// Solve, then classify free-boundary points into regular points and
    /// singular strata.
    Stratify(RunArgs),
    /// Rerun the scenario under grid refinement and report observed orders.
    Study {
        #[command(flatten)]
        run: RunArgs,
        /// Number of refinement levels (at least 2).
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// List the builtin scenarios.
    List {
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario configuration file (JSON).
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Builtin scenario name (see `obslab list`).
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory (default: the config's `out`, else `out/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Working resolution in nodes per unit length (replaces the configured
    /// list; for `study` it is the coarsest level).
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Format of the summary printed to stdout.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn load(args: &RunArgs) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
                path: ".".into(),
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            ScenarioConfig::from_json(&text)?
        }
        (None, Some(name)) => Registry::builtin().lookup(name)?,
        (None, None) => {
            return Err(ConfigError {
                path: ".".into(),
                message: "pass --config <path> or --scenario <name>".into(),
            })
        }
    };
    if let Some(n) = args.resolution {
        cfg.resolutions = vec![n];
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(args: &RunArgs, cfg: &ScenarioConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn print_report(report: &RunReport, format: Format) -> anyhow::Result<()> {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(report)?),
        Format::Csv => {
            println!("analysis,pass,detail");
            for v in &report.verdicts {
                let detail = if v.detail.contains([',', '"']) {
                    format!("\"{}\"", v.detail.replace('"', "\"\""))
                } else {
                    v.detail.clone()
                };
                println!("{},{},{}", v.analysis, if v.pass { "PASS" } else { "FAIL" }, detail);
            }
        }
    }
    Ok(())
}

fn run(args: &RunArgs, restrict: Option<&[Analysis]>) -> anyhow::Result<i32> {
    let mut cfg = match load(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return Ok(EXIT_CONFIG);
        }
    };
    if let Some(only) = restrict {
        cfg.analyses = only.to_vec();
    }
    let out = out_dir(args, &cfg);
    let report = run_scenario(&cfg, &out)?;
    print_report(&report, args.format)?;
    eprintln!("wrote {} files to {}", report.files.len(), out.display());
    Ok(report.status)
}

fn study(args: &RunArgs, levels: usize) -> anyhow::Result<i32> {
    let cfg = match load(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return Ok(EXIT_CONFIG);
        }
    };
    if levels < 2 {
        eprintln!("config error at 'levels': a refinement study needs at least 2 levels");
        return Ok(EXIT_CONFIG);
    }
    let table = refinement_study(&cfg, levels)?;
    let out = out_dir(args, &cfg);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let grid = cfg.grid_at(cfg.resolutions[0]).map_err(anyhow::Error::msg)?;
    let prov = provenance(&cfg, &grid);
    let csv = table.render_csv(&prov)?;
    std::fs::write(out.join("study.csv"), &csv)?;
    write_json(&out.join("study.json"), &table)?;
    match args.format {
        Format::Csv => print!("{}", table.to_csv().render_body()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&table)?),
    }
    Ok(0)
}

fn list(format: Format) -> anyhow::Result<i32> {
    let items = Registry::builtin().list();
    match format {
        Format::Csv => {
            let mut t = CsvTable::new(&["name", "description"]);
            for (n, d) in items {
                t.push(vec![n, d]);
            }
            print!("{}", t.render_body());
        }
        Format::Json => {
            let v: Vec<_> = items
                .into_iter()
                .map(|(name, description)| serde_json::json!({ "name": name, "description": description }))
                .collect();
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("cannot configure {k} threads: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    let result = match &cli.command {
        Command::Solve(a) => run(a, Some(&[Analysis::Solve, Analysis::Residuals])),
        Command::Analyze(a) => run(a, None),
        Command::Stratify(a) => run(a, Some(&[Analysis::Solve, Analysis::Stratify])),
        Command::Study { run: a, levels } => study(a, *levels),
        Command::List { format } => list(*format),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAIL as u8)
        }
    }
}
