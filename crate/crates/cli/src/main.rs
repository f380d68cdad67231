use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use revs_core::admm::run_admm;
use revs_core::config::{write_generated, ScenarioConfig};
use revs_core::error::RevsError;
use revs_core::generator::{generate_network, lowest_base_voltage, GeneratorParams};
use revs_core::network::DistributionNetwork;
use revs_core::report::{comparison_table, write_report};
use revs_core::scenario::{run_comparison, sample_adopters, ComparisonReport, Mode, Scenario};
use revs_core::tariff::{load_profiles, load_tariff, EvSpec, Tariff, HOURS_PER_DAY};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_SOLVER: u8 = 4;

/// Voltage-aware EV charge scheduling on radial distribution feeders.
#[derive(Debug, Parser)]
#[command(name = "revs", version)]
struct Cli {
    /// Worker threads for the parallel solves (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic feeder with base-load profiles and communities.
    Generate(GenerateArgs),
    /// Run a scenario and write the report tables.
    Run(RunArgs),
    /// Run both modes and print hourly undervoltage counts side by side.
    Compare(RunArgs),
    /// Run the distributed scheme for one adoption level and seed and write its trace.
    Trace(TraceArgs),
    /// Check a scenario's input files.
    Validate(ConfigArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    feeders: u32,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u32).range(1..))]
    homes: u32,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    homes_per_transformer: u32,
    /// Trunk segments per transformer.
    #[arg(long, default_value_t = 1)]
    depth: u32,
    /// Rescale line resistances so base load alone bottoms out at this voltage (p.u.).
    #[arg(long)]
    min_base_voltage: Option<f64>,
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Scenario file.
    #[arg(long, env = "REVS_CONFIG")]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    mode: Option<Mode>,
    /// Adoption fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    adoption: Option<Vec<f64>>,
    /// First seed; overrides the seeds in the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds starting at the first one.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: Option<u64>,
    #[arg(long)]
    community: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    adoption: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Trace file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A command-line mistake that clap cannot catch.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs as usize).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a, false),
        Command::Compare(a) => run(a, true),
        Command::Trace(a) => trace(a),
        Command::Validate(a) => validate(&a.config),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<RevsError>() {
        Some(r) if r.is_solver_failure() => EXIT_SOLVER,
        _ => EXIT_DATA,
    }
}

fn generate(a: GenerateArgs) -> anyhow::Result<ExitCode> {
    let params = GeneratorParams {
        feeders: a.feeders as usize,
        homes: a.homes as usize,
        homes_per_transformer: a.homes_per_transformer as usize,
        depth: a.depth as usize,
        min_base_voltage_pu: a.min_base_voltage,
        seed: a.seed,
        ..Default::default()
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    let feeder = generate_network(&params)?;
    write_generated(&a.out, &feeder, &[a.seed])?;
    let vmin = lowest_base_voltage(&feeder.network, &feeder.profiles)?.sqrt();
    println!(
        "wrote {}: {} nodes, {} edges, {} residences, {} communities, lowest base-load voltage {:.4} p.u.",
        a.out.display(),
        feeder.network.n() + 1,
        feeder.network.edges().len(),
        feeder.network.residences().len(),
        feeder.communities.len(),
        vmin
    );
    Ok(ExitCode::SUCCESS)
}

fn load_config(path: &Path) -> anyhow::Result<ScenarioConfig> {
    Ok(ScenarioConfig::load(path)?)
}

fn apply_overrides(cfg: &mut ScenarioConfig, a: &RunArgs) -> anyhow::Result<()> {
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(ad) = &a.adoption {
        cfg.adoption = ad.clone();
    }
    if let Some(c) = &a.community {
        cfg.community = Some(c.clone());
    }
    if let Some(k) = a.kappa {
        cfg.admm.kappa = k;
    }
    if let Some(n) = a.max_iters {
        cfg.admm.max_iters = n;
    }
    let first = match a.seed {
        Some(s) => Some(s),
        None if a.seeds.is_some() => Some(
            *cfg.seeds
                .first()
                .ok_or_else(|| usage("--seeds needs --seed or seeds in the scenario file"))?,
        ),
        None => None,
    };
    if let Some(first) = first {
        let n = a.seeds.unwrap_or(1);
        cfg.seeds = (0..n).map(|i| first.wrapping_add(i)).collect();
    }
    if cfg.seeds.is_empty() {
        return Err(usage("no seeds: pass --seed or list seeds in the scenario file"));
    }
    Ok(())
}

fn solver_failures(report: &ComparisonReport) -> Vec<String> {
    let mut out = Vec::new();
    for run in &report.runs {
        for mode in [Mode::Individual, Mode::Distributed] {
            let tag = format!("adoption {} seed {} {mode}", run.adoption, run.seed);
            if let Some(e) = run.error(mode) {
                out.push(format!("{tag}: {}", e.message));
            }
            if let Some(o) = run.outcome(mode) {
                if o.converged == Some(false) {
                    out.push(format!("{tag}: no consensus after {} iterations", o.iterations.unwrap_or(0)));
                }
            }
        }
    }
    out
}

fn run(a: RunArgs, compare: bool) -> anyhow::Result<ExitCode> {
    let mut cfg = load_config(&a.config.config)?;
    apply_overrides(&mut cfg, &a)?;
    if compare {
        cfg.mode = Mode::Both;
    }
    let scenario: Scenario = cfg.build()?;
    let report = run_comparison(&scenario)?;
    let out = a.out.clone().or(cfg.output.clone());
    let out = match (out, compare) {
        (Some(p), _) => Some(p),
        (None, false) => Some(PathBuf::from("report")),
        (None, true) => None,
    };
    if let Some(dir) = &out {
        write_report(dir, &scenario, &report)?;
        eprintln!("report written to {}", dir.display());
    }
    if compare {
        print!("{}", comparison_table(&report));
    }
    let failures = solver_failures(&report);
    for f in &failures {
        eprintln!("warning: {f}");
    }
    let data_errors = report.runs.iter().any(|r| {
        [Mode::Individual, Mode::Distributed]
            .into_iter()
            .any(|m| r.error(m).is_some_and(|e| !e.solver))
    });
    Ok(if data_errors {
        ExitCode::from(EXIT_DATA)
    } else if !failures.is_empty() {
        ExitCode::from(EXIT_SOLVER)
    } else {
        ExitCode::SUCCESS
    })
}

fn trace(a: TraceArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = load_config(&a.config.config)?;
    cfg.adoption = vec![a.adoption];
    cfg.seeds = vec![a.seed];
    if let Some(k) = a.kappa {
        cfg.admm.kappa = k;
    }
    if let Some(n) = a.max_iters {
        cfg.admm.max_iters = n;
    }
    let sc = cfg.build()?;
    let start = sc.horizon_start_hour;
    let profiles: Vec<_> = sc.profiles.iter().map(|p| p.rotated(start)).collect();
    let tariff = sc.tariff.rotated(start);
    let spec = sc.ev.spec_for_horizon(start, tariff.len())?;
    let adopters = sample_adopters(&sc.community, a.adoption, a.seed)?;
    let specs: BTreeMap<_, EvSpec> = adopters.iter().map(|&n| (n, spec)).collect();
    let res = run_admm(&sc.network, &profiles, &specs, &tariff, &sc.admm)?;
    let csv = res.trace.to_csv();
    match &a.out {
        Some(p) => std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    eprintln!(
        "{} adopters, {} iterations, converged: {}, voltage feasible: {}",
        adopters.len(),
        res.iterations,
        res.converged,
        res.voltage_feasible
    );
    Ok(if res.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_SOLVER)
    })
}

struct Checks {
    failed: bool,
}

impl Checks {
    fn line<T>(&mut self, name: &str, r: Result<T, impl std::fmt::Display>, ok: impl FnOnce(&T) -> String) -> Option<T> {
        match r {
            Ok(v) => {
                println!("[PASS] {name}: {}", ok(&v));
                Some(v)
            }
            Err(e) => {
                self.failed = true;
                println!("[FAIL] {name}: {e}");
                None
            }
        }
    }

    fn skip(&self, name: &str) {
        println!("[SKIP] {name}: depends on a failed check");
    }
}

fn validate(path: &Path) -> anyhow::Result<ExitCode> {
    let mut c = Checks { failed: false };
    let Some(cfg) = c.line("config", ScenarioConfig::load(path), |_| path.display().to_string()) else {
        return Ok(ExitCode::from(EXIT_DATA));
    };
    let network = c.line("tree", DistributionNetwork::read_csv(&cfg.network), |n: &DistributionNetwork| {
        format!("{} nodes, {} edges", n.n() + 1, n.edges().len())
    });
    let profiles = match &network {
        Some(n) => c.line("profile coverage", load_profiles(&cfg.profiles, n), |p| {
            format!("{} residences with {HOURS_PER_DAY} hourly values", p.len())
        }),
        None => {
            c.skip("profile coverage");
            None
        }
    };
    let tariff = match &cfg.tariff {
        Some(p) => load_tariff(p),
        None => Ok(Tariff::experiment_default()),
    };
    c.line("tariff", tariff, |t: &Tariff| format!("{} rates", t.len()));
    match &network {
        Some(n) => {
            c.line("community", cfg.select_community(n), |m| format!("{} members", m.len()));
        }
        None => c.skip("community"),
    }
    let ev = cfg
        .ev
        .spec_for_horizon(cfg.horizon_start_hour, HOURS_PER_DAY)
        .and_then(|s| s.validate_for(HOURS_PER_DAY).map(|_| s));
    c.line("ev feasibility", ev, |s: &EvSpec| {
        format!("{} to {} charging intervals", s.min_charges(), s.max_charges())
    });
    let limits = cfg.voltage_limits();
    c.line("solver settings", cfg.admm.validate().and_then(|_| cfg.voltage_limits()), |_| {
        format!("kappa {}, max_iters {}", cfg.admm.kappa, cfg.admm.max_iters)
    });
    match (&network, &profiles, limits) {
        (Some(n), Some(p), Ok(l)) => {
            let v = lowest_base_voltage(n, p);
            let r = v.map_err(|e| e.to_string()).and_then(|v2| {
                let v = v2.sqrt();
                if v2 >= l.alpha {
                    Ok(v)
                } else {
                    Err(format!("base load alone drops to {v:.4} p.u., below {:.4}", l.alpha.sqrt()))
                }
            });
            c.line("base-load voltage", r, |v| format!("lowest {v:.4} p.u."));
        }
        _ => c.skip("base-load voltage"),
    }
    Ok(if c.failed {
        ExitCode::from(EXIT_DATA)
    } else {
        ExitCode::SUCCESS
    })
}
