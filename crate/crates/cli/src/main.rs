mod report;

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use roundabout::controllers::{check_ranges, ControllerKind, ControllerParams};
use roundabout::fuzzy::{MembershipDocument, MembershipSet};
use roundabout::phases::{render_table, FLOWS};
use roundabout::pso::{self, SwarmConfig, TrafficFitness};
use roundabout::sim::{self, builtin_condition, builtin_conditions, Scenario, SimMetrics};
use serde::{Deserialize, Serialize};

use report::{ComparisonReport, RunRow};

const DESK_HORIZON: u64 = 20_000;
const DESK_REPLICATIONS: u64 = 10;
const DESK_ITERATIONS: usize = 100;
const DEFAULT_TRAINING: [&str; 2] = ["C5", "C8"];
const DEFAULT_TRAINING_SEED: u64 = 1000;

#[derive(Parser)]
#[command(
    name = "roundabout",
    version,
    about = "Signalized roundabout simulator and fuzzy controller experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario under one controller and print a metrics row.
    Simulate(SimulateArgs),
    /// Run conditions x controllers x seeds and print aggregate tables.
    Compare(CompareArgs),
    /// Train FUZZY-MIX membership functions with PSO.
    Optimize(OptimizeArgs),
    /// Print the built-in traffic conditions.
    Conditions,
    /// Print the phase table.
    Phases,
}

#[derive(Args, Default)]
struct HorizonArgs {
    /// Simulation length in time units; overrides `--full`.
    #[arg(long)]
    horizon: Option<u64>,
    /// Use the built-in conditions' full horizon instead of the desk default.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in condition name, e.g. C1.
    #[arg(long, conflicts_with = "scenario")]
    condition: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "mix")]
    controller: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    horizon: HorizonArgs,
    /// Membership-function document for mix-opt.
    #[arg(long)]
    mf_file: Option<PathBuf>,
    /// Write the queue trace to `<out>/trace.csv`.
    #[arg(long, requires = "out")]
    trace: bool,
    /// Write the decision log to `<out>/log.csv`.
    #[arg(long, requires = "out")]
    log: bool,
    /// Output directory for metrics.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-run a previously written manifest.
    #[arg(long, conflicts_with_all = ["condition", "scenario"])]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated built-in conditions; default all sixteen.
    #[arg(long, value_delimiter = ',')]
    conditions: Vec<String>,
    /// Scenario JSON files, in addition to `--conditions`.
    #[arg(long)]
    scenario: Vec<PathBuf>,
    /// Comma-separated controllers; default all five.
    #[arg(long, value_delimiter = ',')]
    controllers: Vec<String>,
    /// Number of replications.
    #[arg(long, default_value_t = DESK_REPLICATIONS)]
    seeds: u64,
    /// Seed of the first replication; the rest follow consecutively.
    #[arg(long, default_value_t = 1)]
    base_seed: u64,
    #[command(flatten)]
    horizon: HorizonArgs,
    #[arg(long)]
    mf_file: Option<PathBuf>,
    /// Output directory for runs.csv, report.csv, report.txt, manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    /// JSON optimize configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training conditions, comma-separated.
    #[arg(long, value_delimiter = ',')]
    conditions: Vec<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    /// Optimizer seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Arrival seed shared by every candidate evaluation.
    #[arg(long)]
    training_seed: Option<u64>,
    #[command(flatten)]
    horizon: HorizonArgs,
    /// Output directory for mf.json, fitness_history.csv, manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, conflicts_with = "config")]
    replay: Option<PathBuf>,
}

/// Everything needed to reproduce a command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
enum Manifest {
    Simulate(SimulatePlan),
    Compare(ComparePlan),
    Optimize(OptimizePlan),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SimulatePlan {
    scenario: Scenario,
    controller: ControllerKind,
    seed: u64,
    params: ControllerParams,
    membership: Option<MembershipDocument>,
    trace: bool,
    log: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ComparePlan {
    scenarios: Vec<Scenario>,
    controllers: Vec<ControllerKind>,
    seeds: Vec<u64>,
    params: ControllerParams,
    membership: Option<MembershipDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizePlan {
    swarm: SwarmConfig,
    objective: TrafficFitness,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
struct OptimizeConfig {
    conditions: Vec<String>,
    horizon: Option<u64>,
    training_seed: u64,
    swarm: SwarmConfig,
    params: ControllerParams,
    miss_weight: f64,
    delay_weight: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            conditions: DEFAULT_TRAINING.iter().map(|s| s.to_string()).collect(),
            horizon: None,
            training_seed: DEFAULT_TRAINING_SEED,
            swarm: SwarmConfig {
                iterations: DESK_ITERATIONS,
                ..SwarmConfig::default()
            },
            params: ControllerParams::default(),
            miss_weight: TrafficFitness::DEFAULT_MISS_WEIGHT,
            delay_weight: TrafficFitness::DEFAULT_DELAY_WEIGHT,
        }
    }
}

#[derive(Serialize)]
struct TraceRow {
    t: u64,
    mean_queue_len: f64,
}

#[derive(Serialize)]
struct LogRow {
    t: u64,
    event: &'static str,
    phase: String,
    duration: u32,
}

#[derive(Serialize)]
struct HistoryRow {
    iteration: usize,
    gbest_fitness: f64,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
        Command::Optimize(a) => optimize(a),
        Command::Conditions => {
            print!("{}", conditions_text());
            Ok(())
        }
        Command::Phases => {
            print!("{}", render_table());
            Ok(())
        }
    }
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m)?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn resolve_horizon(scenario: Scenario, h: &HorizonArgs, builtin: bool) -> Scenario {
    match (h.horizon, builtin && !h.full) {
        (Some(n), _) => scenario.with_horizon(n),
        (None, true) => scenario.with_horizon(DESK_HORIZON),
        (None, false) => scenario,
    }
}

fn load_scenario_file(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::from_json(&text).with_context(|| format!("loading scenario {}", path.display()))
}

fn parse_controller(s: &str) -> Result<ControllerKind> {
    s.parse::<ControllerKind>()
        .with_context(|| "expected one of va, turn, jump, mix, mix-opt")
}

/// The tuned set for mix-opt: `--mf-file` if given, else the shipped one.
fn tuned_document(
    kinds: &[ControllerKind],
    mf_file: Option<&Path>,
) -> Result<Option<MembershipDocument>> {
    if !kinds.contains(&ControllerKind::MixOpt) {
        return Ok(None);
    }
    let set = match mf_file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            MembershipSet::from_json(&text).with_context(|| format!("loading {}", p.display()))?
        }
        None => roundabout::controllers::shipped_optimized(),
    };
    check_ranges(&set)?;
    Ok(Some(set.to_document()))
}

fn tuned_set(doc: Option<&MembershipDocument>) -> Result<Option<MembershipSet>> {
    doc.map(|d| MembershipSet::from_document(d).map_err(anyhow::Error::from))
        .transpose()
}

fn run_row(scenario: &Scenario, kind: ControllerKind, seed: u64, m: &SimMetrics) -> RunRow {
    RunRow {
        condition: scenario.name.clone(),
        controller: kind.as_str().to_string(),
        seed,
        veh_miss: m.veh_miss,
        veh_pass: m.veh_pass,
        veh_delay_s: m.veh_delay_s,
    }
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let plan = match &a.replay {
        Some(p) => match read_manifest(p)? {
            Manifest::Simulate(plan) => plan,
            _ => bail!("{} is not a simulate manifest", p.display()),
        },
        None => {
            let scenario = match (&a.condition, &a.scenario) {
                (Some(c), None) => resolve_horizon(builtin_condition(c)?, &a.horizon, true),
                (None, Some(p)) => resolve_horizon(load_scenario_file(p)?, &a.horizon, false),
                _ => bail!("give exactly one of --condition or --scenario"),
            };
            let controller = parse_controller(&a.controller)?;
            SimulatePlan {
                scenario,
                controller,
                seed: a.seed,
                params: ControllerParams::default(),
                membership: tuned_document(&[controller], a.mf_file.as_deref())?,
                trace: a.trace,
                log: a.log,
            }
        }
    };

    let scenario = plan.scenario.clone().with_seed(plan.seed);
    let tuned = tuned_set(plan.membership.as_ref())?;
    let mut ctrl = plan.controller.build(plan.params, tuned.as_ref())?;
    let (metrics, log) = sim::run_logged(&scenario, ctrl.as_mut())?;
    let row = run_row(&scenario, plan.controller, plan.seed, &metrics);

    write_rows(io::stdout().lock(), [&row])?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        write_rows(File::create(dir.join("metrics.csv"))?, [&row])?;
        if plan.trace {
            let rows = metrics.queue_trace.iter().map(|&(t, q)| TraceRow {
                t,
                mean_queue_len: q,
            });
            write_rows(File::create(dir.join("trace.csv"))?, rows)?;
        }
        if plan.log {
            let rows = log.iter().map(|e| LogRow {
                t: e.t,
                event: e.event.as_str(),
                phase: e.phase.to_string(),
                duration: e.duration,
            });
            write_rows(File::create(dir.join("log.csv"))?, rows)?;
        }
        write_manifest(dir, &Manifest::Simulate(plan))?;
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let plan = match &a.replay {
        Some(p) => match read_manifest(p)? {
            Manifest::Compare(plan) => plan,
            _ => bail!("{} is not a compare manifest", p.display()),
        },
        None => {
            let mut scenarios = Vec::new();
            if a.conditions.is_empty() && a.scenario.is_empty() {
                scenarios.extend(
                    builtin_conditions()
                        .into_iter()
                        .map(|s| resolve_horizon(s, &a.horizon, true)),
                );
            }
            for c in &a.conditions {
                scenarios.push(resolve_horizon(builtin_condition(c)?, &a.horizon, true));
            }
            for p in &a.scenario {
                scenarios.push(resolve_horizon(load_scenario_file(p)?, &a.horizon, false));
            }
            let controllers = if a.controllers.is_empty() {
                ControllerKind::ALL.to_vec()
            } else {
                a.controllers
                    .iter()
                    .map(|s| parse_controller(s))
                    .collect::<Result<Vec<_>>>()?
            };
            if a.seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            ComparePlan {
                membership: tuned_document(&controllers, a.mf_file.as_deref())?,
                scenarios,
                controllers,
                seeds: (a.base_seed..a.base_seed + a.seeds).collect(),
                params: ControllerParams::default(),
            }
        }
    };

    let runs = run_plan(&plan)?;
    let report = ComparisonReport::from_runs(&runs);
    print!("{}", report.render_text());
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        write_rows(File::create(dir.join("runs.csv"))?, &runs)?;
        report.write_csv(File::create(dir.join("report.csv"))?)?;
        fs::write(dir.join("report.txt"), report.render_text())?;
        write_manifest(dir, &Manifest::Compare(plan))?;
    }
    Ok(())
}

fn run_plan(plan: &ComparePlan) -> Result<Vec<RunRow>> {
    let tuned = tuned_set(plan.membership.as_ref())?;
    let jobs: Vec<(&Scenario, ControllerKind, u64)> = plan
        .scenarios
        .iter()
        .flat_map(|s| {
            plan.controllers
                .iter()
                .flat_map(move |&k| plan.seeds.iter().map(move |&seed| (s, k, seed)))
        })
        .collect();
    jobs.par_iter()
        .map(|&(s, kind, seed)| {
            let scenario = s.clone().with_seed(seed);
            let mut ctrl = kind.build(plan.params, tuned.as_ref())?;
            let m = sim::run(&scenario, ctrl.as_mut())?;
            Ok(run_row(&scenario, kind, seed, &m))
        })
        .collect()
}

fn optimize(a: OptimizeArgs) -> Result<()> {
    let plan = match &a.replay {
        Some(p) => match read_manifest(p)? {
            Manifest::Optimize(plan) => plan,
            _ => bail!("{} is not an optimize manifest", p.display()),
        },
        None => optimize_plan(&a)?,
    };

    let bounds = pso::search_bounds();
    let objective = &plan.objective;
    let every = (plan.swarm.iterations / 10).max(1);
    let result = pso::optimize_with(
        &plan.swarm,
        &bounds,
        |x| objective.evaluate(x).unwrap_or(f64::INFINITY),
        |it, swarm| {
            if (it + 1) % every == 0 {
                eprintln!("iteration {:>5}  gbest {:.6e}", it + 1, swarm.best_fitness);
            }
        },
    )?;
    let set = pso::decode(&result.best_position)?;

    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("mf.json"), set.to_json() + "\n")?;
    let rows = result.history.iter().enumerate().map(|(i, &f)| HistoryRow {
        iteration: i,
        gbest_fitness: f,
    });
    write_rows(File::create(a.out.join("fitness_history.csv"))?, rows)?;
    let default_fit = objective.evaluate_set(&MembershipSet::hand_crafted())?;
    write_manifest(&a.out, &Manifest::Optimize(plan))?;

    println!("gbest fitness    {:.6e}", result.best_fitness);
    println!("default fitness  {default_fit:.6e}");
    println!("evaluations      {}", result.evaluations);
    Ok(())
}

fn optimize_plan(a: &OptimizeArgs) -> Result<OptimizePlan> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<OptimizeConfig>(&text)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => OptimizeConfig::default(),
    };
    if !a.conditions.is_empty() {
        cfg.conditions = a.conditions.clone();
    }
    if let Some(n) = a.iterations {
        cfg.swarm.iterations = n;
    } else if a.horizon.full && a.config.is_none() {
        cfg.swarm.iterations = SwarmConfig::default().iterations;
    }
    if let Some(n) = a.particles {
        cfg.swarm.particles = n;
    }
    if let Some(s) = a.seed {
        cfg.swarm.seed = s;
    }
    if let Some(s) = a.training_seed {
        cfg.training_seed = s;
    }
    let horizon = HorizonArgs {
        horizon: a.horizon.horizon.or(cfg.horizon),
        full: a.horizon.full,
    };
    if cfg.conditions.is_empty() {
        bail!("no training conditions");
    }
    cfg.swarm.validate()?;
    let scenarios = cfg
        .conditions
        .iter()
        .map(|c| {
            Ok(resolve_horizon(builtin_condition(c)?, &horizon, true).with_seed(cfg.training_seed))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut objective = TrafficFitness::new(scenarios, cfg.params);
    objective.miss_weight = cfg.miss_weight;
    objective.delay_weight = cfg.delay_weight;
    Ok(OptimizePlan {
        swarm: cfg.swarm,
        objective,
    })
}

fn conditions_text() -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<5} {:>8}", "cond", "t"));
    for f in FLOWS {
        out.push_str(&format!(" {:>7}", f.to_string()));
    }
    out.push('\n');
    for s in builtin_conditions() {
        let sched = &s.rate_schedule;
        let n = FLOWS
            .iter()
            .map(|&f| sched.waypoints(f).len())
            .max()
            .unwrap_or(0);
        for i in 0..n {
            let name = if i == 0 { s.name.as_str() } else { "" };
            let t = sched
                .waypoints(FLOWS[0])
                .get(i)
                .map(|w| w.0)
                .unwrap_or(f64::NAN);
            out.push_str(&format!("{name:<5} {t:>8}"));
            for f in FLOWS {
                match sched.waypoints(f).get(i) {
                    Some(&(_, rate)) => out.push_str(&format!(" {rate:>7.3}")),
                    None => out.push_str(&format!(" {:>7}", "")),
                }
            }
            out.push('\n');
        }
    }
    out
}
