//! Command-line front end: scenario runs, suites, model checking, graph
//! generation and trace rendering.
//!
//! Exit codes: 0 = all checks passed, 1 = a property check failed,
//! 2 = usage or schema error.

mod render;

use bbhsim::engine::{ExecutionTrace, Round};
use bbhsim::graph::GraphFile;
use bbhsim::protocols::programs::Program;
use bbhsim::scenario::{GeneratorSpec, Scenario};
use bbhsim::verify::{model_check, CheckStats, CoverageSpec, ModelCheckCfg, Verdict};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bbhsim", version, about = "Synchronous mobile-agent simulator for graphs with a Byzantine black hole")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario: write the trace and a verdict report.
    Run(RunArgs),
    /// Run a manifest of scenarios and compare verdicts to expectations.
    Suite(SuiteArgs),
    /// Exhaustively explore activation schedules for a scenario.
    Modelcheck(ModelcheckArgs),
    /// Generate a graph file from a generator spec.
    Gen(GenArgs),
    /// Render a trace file as an ASCII time diagram.
    Render(RenderArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Trace output path (JSON lines, one record per round).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report output path (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Override the scenario horizon.
    #[arg(long)]
    horizon: Option<Round>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SuiteArgs {
    /// Manifest JSON file.
    manifest: PathBuf,
    /// Parallel scenario jobs (BBH_SIM_JOBS overrides).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Aggregate report output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelcheckArgs {
    /// Scenario JSON file; its first coverage check (if any) is enforced on
    /// every branch, and survivor knowledge is always required.
    scenario: PathBuf,
    /// Branch on activation choices up to this round (default: horizon/2).
    #[arg(long)]
    branch_horizon: Option<Round>,
    /// Exploration budget.
    #[arg(long, default_value_t = 10_000_000)]
    max_branches: u64,
    /// Disable relevance pruning (branch on every round).
    #[arg(long)]
    unpruned: bool,
    /// Counterexample trace output path.
    #[arg(long)]
    counterexample: Option<PathBuf>,
    /// Verdict report output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Generator spec as inline JSON, or @file.json.
    #[arg(long)]
    spec: String,
    /// Agent count recorded in the graph file.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Trace file (JSON lines).
    trace: PathBuf,
    /// Graph file the trace was produced on.
    #[arg(long)]
    graph: PathBuf,
    /// Column layout: path | bfs.
    #[arg(long, default_value = "path")]
    layout: render::Layout,
    /// Output path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    /// "pass" or "fail".
    expect: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    scenarios: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize)]
struct ModelcheckReport {
    property: String,
    #[serde(flatten)]
    verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    counterexample_file: Option<String>,
    stats: CheckStats,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Suite(args) => cmd_suite(args),
        Command::Modelcheck(args) => cmd_modelcheck(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Render(args) => cmd_render(args),
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, String> {
    let mut scenario = Scenario::load(&args.scenario).map_err(|e| e.to_string())?;
    if let Some(h) = args.horizon {
        scenario.horizon = h;
    }
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    let (_, trace, _, report) = scenario.execute().map_err(|e| e.to_string())?;
    if let Some(out) = &args.out {
        std::fs::write(out, trace.to_jsonl()).map_err(|e| e.to_string())?;
    }
    let report_json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    match &args.report {
        Some(p) => std::fs::write(p, &report_json).map_err(|e| e.to_string())?,
        None => println!("{report_json}"),
    }
    for c in &report.checks {
        let status = if c.verdict.passed() { "PASS" } else { "FAIL" };
        eprintln!("{status} {}", c.property);
    }
    Ok(if report.all_passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_suite(args: SuiteArgs) -> Result<ExitCode, String> {
    let text = std::fs::read_to_string(&args.manifest).map_err(|e| e.to_string())?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let base = args.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let jobs = std::env::var("BBH_SIM_JOBS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(args.jobs)
        .max(1);

    let entries: Vec<(usize, PathBuf, String)> = manifest
        .scenarios
        .iter()
        .enumerate()
        .map(|(i, e)| (i, base.join(&e.file), e.expect.clone()))
        .collect();

    let results = run_parallel(entries, jobs);

    #[derive(Serialize)]
    struct SuiteRow {
        file: String,
        expect: String,
        got: String,
        matched: bool,
    }
    let mut rows = Vec::new();
    let mut mismatches = 0;
    for (i, (file, expect, got)) in results.into_iter().enumerate() {
        let matched = expect == got;
        if !matched {
            mismatches += 1;
        }
        println!(
            "{} {} expected={expect} got={got}",
            if matched { "OK  " } else { "MISM" },
            manifest.scenarios[i].file
        );
        rows.push(SuiteRow { file, expect, got, matched });
    }
    if let Some(out) = &args.out {
        let body = serde_json::to_string_pretty(&rows).map_err(|e| e.to_string())?;
        std::fs::write(out, body).map_err(|e| e.to_string())?;
    }
    println!("{} scenarios, {} mismatches", rows.len(), mismatches);
    Ok(if mismatches == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// Runs scenarios on a small thread pool; result order is by index, so the
/// report is independent of scheduling.
fn run_parallel(
    entries: Vec<(usize, PathBuf, String)>,
    jobs: usize,
) -> Vec<(String, String, String)> {
    use std::sync::Mutex;
    let results: Mutex<Vec<Option<(String, String, String)>>> =
        Mutex::new(vec![None; entries.len()]);
    let next: Mutex<usize> = Mutex::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(entries.len().max(1)) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= entries.len() {
                    break;
                }
                let (idx, path, expect) = &entries[i];
                let got = match Scenario::load(path).and_then(|s| s.execute()) {
                    Ok((_, _, _, report)) => {
                        if report.all_passed {
                            "pass".to_string()
                        } else {
                            "fail".to_string()
                        }
                    }
                    Err(e) => format!("error: {e}"),
                };
                results.lock().unwrap()[*idx] =
                    Some((path.display().to_string(), expect.clone(), got));
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.unwrap()).collect()
}

fn cmd_modelcheck(args: ModelcheckArgs) -> Result<ExitCode, String> {
    let scenario = Scenario::load(&args.scenario).map_err(|e| e.to_string())?;
    let instance = scenario.instance().map_err(|e| e.to_string())?;
    let program = Program::new(&scenario.program, &instance).map_err(|e| e.to_string())?;
    let coverage: Option<CoverageSpec> = scenario.checks.iter().find_map(|c| match c {
        bbhsim::scenario::CheckSpec::Coverage(s) => Some(*s),
        _ => None,
    });
    let cfg = ModelCheckCfg {
        branch_horizon: args.branch_horizon.unwrap_or(scenario.horizon / 2),
        run_horizon: scenario.horizon,
        prune_irrelevant: !args.unpruned,
        max_branches: args.max_branches,
        coverage,
        require_knowledge: true,
    };
    let (verdict, stats) = model_check(&instance, &program, &cfg);
    let mut counterexample_file = None;
    if let Verdict::Fail { schedule, .. } = &verdict {
        if let Some(path) = &args.counterexample {
            let mut adv = bbhsim::adversary::scripted(schedule.iter().copied().collect());
            let (trace, _) = bbhsim::engine::run(&instance, &program, &mut adv, cfg.run_horizon)
                .map_err(|e| e.to_string())?;
            std::fs::write(path, trace.to_jsonl()).map_err(|e| e.to_string())?;
            counterexample_file = Some(path.display().to_string());
        }
    }
    let failed = matches!(verdict, Verdict::Fail { .. });
    let report = ModelcheckReport {
        property: "model_check".into(),
        verdict,
        counterexample_file,
        stats,
    };
    let body = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    match &args.out {
        Some(p) => std::fs::write(p, &body).map_err(|e| e.to_string())?,
        None => println!("{body}"),
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode, String> {
    let text = if let Some(path) = args.spec.strip_prefix('@') {
        std::fs::read_to_string(path).map_err(|e| e.to_string())?
    } else {
        args.spec.clone()
    };
    let spec: GeneratorSpec = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let instance = spec.build(args.k).map_err(|e| e.to_string())?;
    let file = GraphFile::from_instance(&instance);
    let body = serde_json::to_string(&file).map_err(|e| e.to_string())?;
    std::fs::write(&args.out, body).map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_render(args: RenderArgs) -> Result<ExitCode, String> {
    let trace_text = std::fs::read_to_string(&args.trace).map_err(|e| e.to_string())?;
    let trace = ExecutionTrace::from_jsonl(&trace_text).map_err(|e| e.to_string())?;
    let graph_text = std::fs::read_to_string(&args.graph).map_err(|e| e.to_string())?;
    let graph: GraphFile = serde_json::from_str(&graph_text).map_err(|e| e.to_string())?;
    let out = render::render(&trace, &graph, args.layout)?;
    match &args.out {
        Some(p) => std::fs::write(p, out).map_err(|e| e.to_string())?,
        None => print!("{out}"),
    }
    Ok(ExitCode::SUCCESS)
}
