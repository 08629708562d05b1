use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mdm_sched::analysis::{
    pairwise_similarity, stepblock_mean_vector, write_metrics_csv, write_similarity_csv, write_trajectories,
    TrajectoryVector,
};
use mdm_sched::harness::{
    self, build_predictor, check_items, compare, load_dataset, read_profile, read_traces, resolve_seed, sweep, toy,
    write_json, write_jsonl, write_run, DatasetItem, FrontierAxis, PolicySpec, PredictorKind, PredictorSpec, RunSetup,
    SweepGrid,
};
use mdm_sched::predictor::Predictor;
use mdm_sched::strategies::{osdt_calibrate, DecodePolicy, Metric, Mode, RecordScope, Strategy};
use mdm_sched::GenLayout;

#[derive(Parser)]
#[command(name = "mdm-sched", version, about = "Decoding policies for masked diffusion LMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a dataset under one policy.
    Run(RunArgs),
    /// Decode the first dataset item statically and write the threshold profile.
    Calibrate(CalibrateArgs),
    /// Run OSDT over a grid of mode × metric × cap × slack.
    Sweep(SweepArgs),
    /// Trajectories and pairwise cosine similarity from a run's traces.
    Analyze(AnalyzeArgs),
    /// Run several policies and report their accuracy/throughput frontier.
    Compare(CompareArgs),
    /// Print a generated toy dataset as JSONL.
    Toy(ToyArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value_t = PredictorKind::Noisy)]
    predictor: PredictorKind,
    #[arg(long = "extern-cmd")]
    extern_cmd: Option<String>,
    #[arg(long = "gen-len", default_value_t = 256)]
    gen_len: usize,
    #[arg(long = "block-len", default_value_t = 32)]
    block_len: usize,
    /// Falls back to $MDM_SCHED_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value_t = Mode::Block)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = Metric::Q1)]
    metric: Metric,
    #[arg(long, default_value_t = 0.8)]
    cap: f64,
    #[arg(long, default_value_t = 0.1)]
    slack: f64,
    #[arg(long = "calib-tau", default_value_t = 0.9)]
    calib_tau: f64,
    #[arg(long = "record-scope", value_enum, default_value_t = RecordScope::AcceptedTokens)]
    record_scope: RecordScope,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Strategy::Osdt)]
    strategy: Strategy,
    #[arg(long, default_value_t = 1)]
    quota: usize,
    #[arg(long, default_value_t = 0.9)]
    tau: f64,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Reuse a saved profile instead of calibrating on the first item.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Grid JSON file, or `full` for the complete 2×5×5×5 grid.
    #[arg(long)]
    grid: String,
    #[arg(long = "calib-tau", default_value_t = 0.9)]
    calib_tau: f64,
    #[arg(long = "record-scope", value_enum, default_value_t = RecordScope::AcceptedTokens)]
    record_scope: RecordScope,
    #[arg(long = "frontier-axis", value_enum, default_value_t = FrontierAxis::TokensPerCall)]
    frontier_axis: FrontierAxis,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory holding a `traces.jsonl`.
    #[arg(long)]
    traces: PathBuf,
    /// Output directory; defaults to the traces directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    policies: PathBuf,
    #[arg(long = "frontier-axis", value_enum, default_value_t = FrontierAxis::TokensPerCall)]
    frontier_axis: FrontierAxis,
}

#[derive(Clone, Copy, ValueEnum)]
enum ToyTask {
    Copy,
    Text,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, value_enum)]
    task: ToyTask,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long = "prompt-len", default_value_t = 16)]
    prompt_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Loaded {
    items: Vec<DatasetItem>,
    predictor: Box<dyn Predictor<f64>>,
    spec: PredictorSpec,
    layout: GenLayout,
    seed: u64,
}

impl Loaded {
    fn setup(&self) -> RunSetup<'_> {
        RunSetup {
            layout: self.layout,
            predictor: &self.spec,
            seed: self.seed,
        }
    }
}

fn load(common: &Common) -> Result<Loaded> {
    let seed = resolve_seed(common.seed)?;
    let layout = GenLayout::new(common.gen_len, common.block_len)?;
    let items = load_dataset(&common.dataset)?;
    if items.is_empty() {
        bail!("dataset {} is empty", common.dataset.display());
    }
    let spec = PredictorSpec {
        kind: common.predictor,
        extern_cmd: common.extern_cmd.clone(),
    };
    let predictor = build_predictor::<f64>(&spec, &items, seed)?;
    check_items(&items, layout.gen_len, predictor.vocab_size(), predictor.mask_id())?;
    Ok(Loaded {
        items,
        predictor,
        spec,
        layout,
        seed,
    })
}

fn osdt_policy(p: &PolicyArgs) -> DecodePolicy<f64> {
    DecodePolicy {
        strategy: Strategy::Osdt,
        mode: p.mode,
        metric: p.metric,
        cap: p.cap,
        slack: p.slack,
        calibration_tau: p.calib_tau,
        record_scope: p.record_scope,
        ..DecodePolicy::default()
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let loaded = load(&args.common)?;
    let policy = DecodePolicy {
        strategy: args.strategy,
        quota: args.quota,
        tau_static: args.tau,
        ..osdt_policy(&args.policy)
    };
    policy.validate()?;
    let profile = match &args.profile {
        Some(path) if policy.strategy == Strategy::Osdt => Some(read_profile::<f64>(path)?),
        Some(_) => bail!("--profile only applies to --strategy osdt"),
        None => None,
    };
    // A loaded profile decides mode and metric; keep the report consistent with it.
    let policy = match &profile {
        Some(p) => DecodePolicy {
            mode: p.mode(),
            metric: p.metric,
            ..policy
        },
        None => policy,
    };
    let report = harness::execute(
        &loaded.items,
        &*loaded.predictor,
        &policy,
        profile.as_ref(),
        loaded.setup(),
    )?;
    write_run(&args.common.out, &report)?;
    let m = &report.metrics;
    println!(
        "{}: accuracy={:.4} tokens_per_call={:.4} tokens_per_second={:.1} predictor_calls={}",
        report.label, m.accuracy, m.tokens_per_call, m.tokens_per_second, m.predictor_calls
    );
    Ok(())
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let loaded = load(&args.common)?;
    let policy = osdt_policy(&args.policy);
    let first = &loaded.items[0];
    let (out, profile) = osdt_calibrate(&first.context(), &*loaded.predictor, loaded.layout, &policy)?;
    fs::create_dir_all(&args.common.out)?;
    write_json(&args.common.out.join("profile.json"), &profile)?;
    let line = harness::TraceLine {
        state: serde_json::to_value(&out.state)?,
        trace: out.trace,
    };
    write_jsonl(&args.common.out.join("traces.jsonl"), &[line])?;
    println!(
        "calibrated {} mode / {} on {:?}: {} blocks",
        profile.mode(),
        profile.metric,
        first.id,
        profile.num_blocks()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let loaded = load(&args.common)?;
    let grid: SweepGrid<f64> = if args.grid == "full" {
        SweepGrid::full()
    } else {
        let text = fs::read_to_string(&args.grid).with_context(|| format!("reading grid {}", args.grid))?;
        serde_json::from_str(&text).with_context(|| format!("parsing grid {}", args.grid))?
    };
    let base = DecodePolicy {
        calibration_tau: args.calib_tau,
        record_scope: args.record_scope,
        ..DecodePolicy::default()
    };
    let entries = sweep(&loaded.items, &*loaded.predictor, &grid, &base, loaded.setup());
    let out = &args.common.out;
    fs::create_dir_all(out)?;
    write_jsonl(&out.join("sweep.jsonl"), &entries)?;
    let ok: Vec<(String, _)> = entries
        .iter()
        .filter_map(|e| e.metrics.map(|m| (e.label.clone(), m)))
        .collect();
    write_metrics_csv(File::create(out.join("sweep.csv"))?, &ok)?;
    let frontier = harness::frontier_of(ok.iter().map(|(l, m)| (l.as_str(), m)), args.frontier_axis);
    write_frontier(&out.join("frontier.csv"), &frontier, &ok)?;
    let failed = entries.len() - ok.len();
    println!(
        "{} configurations, {} failed, {} on the frontier",
        entries.len(),
        failed,
        frontier.len()
    );
    Ok(())
}

fn write_frontier(
    path: &Path,
    frontier: &[mdm_sched::analysis::ParetoPoint],
    rows: &[(String, mdm_sched::analysis::RunMetrics)],
) -> Result<()> {
    let picked: Vec<(String, _)> = frontier
        .iter()
        .filter_map(|p| rows.iter().find(|(l, _)| *l == p.label).cloned())
        .collect();
    write_metrics_csv(File::create(path)?, &picked)?;
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let lines = read_traces::<f64>(&args.traces.join("traces.jsonl"))?;
    let out = args.out.clone().unwrap_or_else(|| args.traces.clone());
    fs::create_dir_all(&out)?;
    let vectors: Vec<TrajectoryVector<f64>> = lines
        .iter()
        .map(|l| stepblock_mean_vector(&l.trace.prompt_id, &l.trace.confidence_records(), None))
        .collect::<Result<_, _>>()?;
    write_trajectories(File::create(out.join("trajectories.jsonl"))?, &vectors)?;
    let aligned = vectors.len() >= 2 && vectors.iter().all(|v| v.values.len() == vectors[0].values.len());
    if aligned {
        let matrix = pairwise_similarity(&vectors)?;
        write_similarity_csv(File::create(out.join("similarity.csv"))?, &matrix)?;
        println!(
            "{} trajectories of length {}; min off-diagonal cosine {:.6}",
            vectors.len(),
            vectors[0].values.len(),
            matrix.min_off_diagonal().unwrap_or(1.0)
        );
    } else {
        println!("{} ragged trajectories; similarity matrix skipped", vectors.len());
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let loaded = load(&args.common)?;
    let file = File::open(&args.policies).with_context(|| format!("opening {}", args.policies.display()))?;
    let specs: Vec<PolicySpec<f64>> = serde_json::from_reader(BufReader::new(file))?;
    let policies: Vec<_> = specs.iter().map(PolicySpec::resolve).collect();
    let (report, runs) = compare(
        &loaded.items,
        &*loaded.predictor,
        &policies,
        args.frontier_axis,
        loaded.setup(),
    )?;
    let out = &args.common.out;
    fs::create_dir_all(out)?;
    write_json(&out.join("compare.json"), &report)?;
    let rows: Vec<_> = report.rows.iter().map(|r| (r.label.clone(), r.metrics)).collect();
    write_metrics_csv(File::create(out.join("metrics.csv"))?, &rows)?;
    write_frontier(&out.join("frontier.csv"), &report.frontier, &rows)?;
    for (i, run) in runs.iter().enumerate() {
        write_run(&out.join(format!("policy-{i:02}")), run)?;
    }
    for r in &report.rows {
        let on = report.frontier.iter().any(|p| p.label == r.label);
        println!(
            "{:<40} accuracy={:.4} tokens_per_call={:.4}{}",
            r.label,
            r.metrics.accuracy,
            r.metrics.tokens_per_call,
            if on { "  [frontier]" } else { "" }
        );
    }
    Ok(())
}

fn cmd_toy(args: &ToyArgs) -> Result<()> {
    let items = match args.task {
        ToyTask::Copy => toy::copy_task(args.n, args.prompt_len, args.seed),
        ToyTask::Text => toy::text_task(args.n, args.seed),
    };
    let stdout = io::stdout();
    let mut w = stdout.lock();
    for item in items {
        let line = serde_json::json!({
            "id": item.id,
            "prompt": harness::decode_bytes(&item.prompt),
            "reference": harness::decode_bytes(&item.reference),
        });
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Toy(a) => cmd_toy(a),
    }
}
