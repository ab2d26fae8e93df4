//! `csqf` — run scheduling experiments, verify exported schedules, and
//! generate inputs / plot data. See the workspace README for formats.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use csqf_cli::{
    emit_plot_data, run_experiment, verify_files, AggregateRef, AlgoChoice, ExperimentSpec,
    HarnessError, RunOptions, EXIT_BAD_INPUT, EXIT_VERIFICATION,
};
use csqf_core::{
    flows_to_entries, gen_er_topology, gen_flows, internet2_topology, Nanos, TrafficProfile,
};

#[derive(Parser)]
#[command(name = "csqf", version, about = "Cycle-grid scheduling experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec (or preset) and write run artifacts.
    Run(RunCmd),
    /// Replay-check an exported schedule against its input files.
    Verify(VerifyCmd),
    /// Generate topology or flow files.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Reduce aggregate CSVs to plot-ready series files.
    Plot(PlotCmd),
}

#[derive(Args)]
struct RunCmd {
    /// Experiment spec file (JSON).
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Built-in spec: `desk` (CI-sized) or `full` (the complete protocol).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the spec's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override; replaces the spec's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Algorithm subset override, comma-separated.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<AlgoChoice>,
    /// Flow-level override, comma-separated.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<usize>,
    /// Corrupt one scheduled flow per run before replay (must exit 3).
    #[arg(long)]
    inject_fault: bool,
}

#[derive(Args)]
struct VerifyCmd {
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    topo: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    flows: PathBuf,
}

#[derive(Subcommand)]
enum GenCmd {
    /// Write a topology file.
    Topo(GenTopoCmd),
    /// Write a flow file drawn from a traffic profile.
    Flows(GenFlowsCmd),
}

#[derive(Args)]
struct GenTopoCmd {
    /// The embedded 8-node backbone.
    #[arg(long, conflicts_with_all = ["er", "nodes", "links"])]
    internet2: bool,
    /// A seeded random connected graph (needs --nodes/--links).
    #[arg(long, requires = "nodes", requires = "links")]
    er: bool,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    links: Option<usize>,
    #[arg(long, default_value_t = 100)]
    delay_min_us: u64,
    #[arg(long, default_value_t = 2000)]
    delay_max_us: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenFlowsCmd {
    #[arg(long)]
    topo: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [4u64, 8, 16, 32])]
    periods_ms: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    packets_min: u32,
    #[arg(long, default_value_t = 3)]
    packets_max: u32,
    #[arg(long, default_value_t = 30)]
    deadline_min_ms: u64,
    #[arg(long, default_value_t = 50)]
    deadline_max_ms: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotCmd {
    /// Aggregate CSV, optionally labeled: `LABEL=path.csv`. Repeatable.
    #[arg(long = "aggregate", required = true)]
    aggregates: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_BAD_INPUT as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Run(cmd) => run(cmd),
        Command::Verify(cmd) => verify(cmd),
        Command::Gen(GenCmd::Topo(cmd)) => gen_topo(cmd),
        Command::Gen(GenCmd::Flows(cmd)) => gen_flows_cmd(cmd),
        Command::Plot(cmd) => plot(cmd),
    }
}

fn run(cmd: RunCmd) -> Result<i32, HarnessError> {
    let mut spec = match (&cmd.spec, cmd.preset.as_deref()) {
        (Some(path), None) => ExperimentSpec::load(path)?,
        (None, Some("desk")) => ExperimentSpec::desk_preset(),
        (None, Some("full")) => ExperimentSpec::full_preset(),
        (None, Some(other)) => {
            return Err(HarnessError::Spec(format!("unknown preset {other:?} (desk|full)")))
        }
        (None, None) => return Err(HarnessError::Spec("need --spec or --preset".into())),
        (Some(_), Some(_)) => unreachable!("clap conflict"),
    };
    if let Some(seed) = cmd.seed {
        spec.master_seed = Some(seed);
        spec.seeds.clear();
    }
    if !cmd.algo.is_empty() {
        spec.algorithms = cmd.algo.clone();
    }
    if !cmd.levels.is_empty() {
        spec.levels = cmd.levels.clone();
    }
    let out_dir = cmd
        .out
        .or_else(|| spec.output_dir.clone())
        .ok_or_else(|| HarnessError::Spec("no output directory (--out or output_dir)".into()))?;

    let opts = RunOptions { out_dir, inject_fault: cmd.inject_fault };
    let summary = run_experiment(&spec, &opts)?;
    for r in &summary.records {
        println!(
            "{} n={} s={}: {}/{} scheduled ({:.1}%), {:.1} ms{}",
            r.algorithm,
            r.flow_count,
            r.seed,
            r.scheduled_count,
            r.flow_count,
            r.scheduled_pct,
            r.total_runtime_ms,
            if r.verifier_violations > 0 {
                format!(", {} violations", r.verifier_violations)
            } else {
                String::new()
            }
        );
    }
    println!("wrote {}", summary.aggregate_path.display());
    if summary.total_violations > 0 {
        eprintln!("replay verification failed: {} violations", summary.total_violations);
        return Ok(EXIT_VERIFICATION);
    }
    Ok(0)
}

fn verify(cmd: VerifyCmd) -> Result<i32, HarnessError> {
    let outcome = verify_files(&cmd.schedule, &cmd.topo, &cmd.config, &cmd.flows)?;
    if outcome.violations.is_empty() {
        println!(
            "clean: {} flows checked, {} scheduled",
            outcome.flows_checked, outcome.scheduled
        );
        Ok(0)
    } else {
        for line in &outcome.violations {
            eprintln!("violation: {line}");
        }
        eprintln!("{} violations", outcome.violations.len());
        Ok(EXIT_VERIFICATION)
    }
}

fn gen_topo(cmd: GenTopoCmd) -> Result<i32, HarnessError> {
    let topo = match (cmd.internet2, cmd.er) {
        (true, false) => internet2_topology(),
        (false, true) => gen_er_topology(
            cmd.nodes.expect("clap requires"),
            cmd.links.expect("clap requires"),
            (cmd.delay_min_us, cmd.delay_max_us),
            cmd.seed,
        )
        .map_err(|e| HarnessError::Spec(e.to_string()))?,
        _ => return Err(HarnessError::Spec("pick exactly one of --internet2 / --er".into())),
    };
    write_json(&cmd.out, &topo.to_raw())?;
    println!(
        "wrote {} ({} nodes, {} edges)",
        cmd.out.display(),
        topo.node_count(),
        topo.edge_count()
    );
    Ok(0)
}

fn gen_flows_cmd(cmd: GenFlowsCmd) -> Result<i32, HarnessError> {
    let raw: csqf_core::Topology = csqf_cli::spec::read_json(&cmd.topo)?;
    let topo = csqf_core::validate_topology(&raw)
        .map_err(|e| HarnessError::Spec(format!("{}: {e}", cmd.topo.display())))?;
    let profile = TrafficProfile {
        flow_count: cmd.count,
        periods: cmd.periods_ms.iter().map(|&ms| Nanos::from_ms(ms)).collect(),
        packets: (cmd.packets_min, cmd.packets_max),
        deadline_ms: (cmd.deadline_min_ms, cmd.deadline_max_ms),
    };
    let flows =
        gen_flows(&profile, &topo, cmd.seed).map_err(|e| HarnessError::Spec(e.to_string()))?;
    write_json(&cmd.out, &flows_to_entries(&flows, &topo))?;
    println!("wrote {} ({} flows)", cmd.out.display(), flows.len());
    Ok(0)
}

fn plot(cmd: PlotCmd) -> Result<i32, HarnessError> {
    let refs: Vec<AggregateRef> = cmd.aggregates.iter().map(|a| AggregateRef::parse(a)).collect();
    emit_plot_data(&refs, &cmd.out)?;
    println!("wrote {} series files to {}", csqf_cli::PLOT_FILES.len(), cmd.out.display());
    Ok(0)
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::Spec(format!("serialization: {e}")))?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| HarnessError::Io { path: parent.to_owned(), detail: e.to_string() })?;
        }
    }
    std::fs::write(path, text)
        .map_err(|e| HarnessError::Io { path: path.clone(), detail: e.to_string() })
}
