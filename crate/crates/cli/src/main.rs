//! `gridshield` command-line tool.
//!
//! Exit codes: 0 on success, 2 for invalid arguments or input files, 3 when
//! synthesis aborts because a run left the grid, 1 for other failures.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gridshield::caap::{self, partitioning_of_grid, partitioning_of_tree, CompactOptions};
use gridshield::eval::{self, BatchConfig, EvalError, Fallback, LearnConfig, RunStatistics, Strategy};
use gridshield::models::{self, ParamOverrides};
use gridshield::synthesis::{self, OutOfBoundsMode, SynthesisConfig, SynthesisError};
use gridshield::{seeding, GridSpec, Model, ModelError, SamplePlan, Shield};
use gridshield_cli::svg::{self, Slice};
use gridshield_cli::{
    load_any, trace, AnyShieldFile, FileError, ShieldFile, ShieldProvenance, TreeFile, TreeProvenance,
};

#[derive(Parser)]
#[command(name = "gridshield", version, about = "Synthesize, compact and evaluate safety shields")]
struct Cli {
    /// Worker threads for synthesis and evaluation (default: all cores).
    #[arg(long, global = true, env = "GRIDSHIELD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a grid shield for a built-in model.
    Synth(SynthArgs),
    /// Compact a grid or tree shield into a smaller decision tree.
    Compact(CompactArgs),
    /// Estimate violation probability and cost of a strategy.
    Eval(EvalArgs),
    /// Write simulation traces as CSV.
    Simulate(SimulateArgs),
    /// Learn a cost-efficient policy within a shield, then evaluate it.
    Learn(LearnArgs),
    /// Render a 2-D slice of a shield as SVG.
    Plot(PlotArgs),
    /// Print a shield or tree file's contents and provenance.
    Info(InfoArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Built-in model name.
    #[arg(long)]
    model: String,
    /// JSON file with parameter overrides (a flat name to number map).
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Grid such as "v[-13,13]:1300,p[0,11]:550,loc".
    #[arg(long)]
    grid: String,
    /// Safety property the shield enforces.
    #[arg(long)]
    safety: String,
    /// Samples per continuous dimension.
    #[arg(long, default_value_t = 3)]
    n: u32,
    /// Simulations per sample.
    #[arg(long, default_value_t = 1)]
    m: u32,
    /// Out-of-bounds handling: error, safe, unsafe or auto.
    #[arg(long, default_value = "auto")]
    oob: OutOfBoundsMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CompactArgs {
    /// Shield or tree file.
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    max_iters: u32,
    /// Stop once an iteration gains less than this many percent.
    #[arg(long, default_value_t = 1.0)]
    min_gain: f64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Shield or tree file restricting the strategy.
    #[arg(long)]
    shield: Option<PathBuf>,
    /// Property checked on every visited state (default: the shield's).
    #[arg(long)]
    property: Option<String>,
    /// What to do where the shield allows nothing: abort or allow-all.
    #[arg(long, default_value = "abort", value_parser = parse_fallback)]
    fallback: Fallback,
    /// Simulated seconds per run.
    #[arg(long, default_value_t = 120.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// `random`, or `fixed:ACTION`.
    #[arg(long, default_value = "random")]
    strategy: String,
    #[arg(long, default_value_t = 10_000)]
    runs: u64,
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,
    /// Print the statistics as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// `random`, or `fixed:ACTION`.
    #[arg(long, default_value = "random")]
    strategy: String,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// CSV destination (default: standard output).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Grid of the learned action-value table.
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 2000)]
    episodes: u32,
    /// Evaluation runs of the learned policy.
    #[arg(long, default_value_t = 10_000)]
    runs: u64,
    #[arg(long, default_value_t = 0.99)]
    confidence: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// Shield or tree file.
    input: PathBuf,
    /// Horizontal axis.
    #[arg(long)]
    x: String,
    /// Vertical axis.
    #[arg(long)]
    y: String,
    /// Value of another axis, as NAME=VALUE; repeatable.
    #[arg(long = "pin")]
    pins: Vec<String>,
    /// Raster columns (default: the x axis cell count).
    #[arg(long)]
    width: Option<u32>,
    /// Raster rows (default: the y axis cell count).
    #[arg(long)]
    height: Option<u32>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct InfoArgs {
    input: PathBuf,
}

/// A failure with its exit code.
struct Fail {
    code: u8,
    message: String,
}

impl Fail {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<FileError> for Fail {
    fn from(e: FileError) -> Self {
        match e {
            FileError::Io { .. } => Fail::runtime(e.to_string()),
            _ => Fail::usage(e.to_string()),
        }
    }
}

impl From<ModelError> for Fail {
    fn from(e: ModelError) -> Self {
        Fail::usage(e.to_string())
    }
}

impl From<SynthesisError> for Fail {
    fn from(e: SynthesisError) -> Self {
        let code = match e {
            SynthesisError::OutOfBounds { .. } => 3,
            SynthesisError::Model(_) => 1,
            _ => 2,
        };
        Fail {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EvalError> for Fail {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidArgument(_) => Fail::usage(e.to_string()),
            _ => Fail::runtime(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Fail>;

fn parse_fallback(s: &str) -> std::result::Result<Fallback, String> {
    match s {
        "abort" => Ok(Fallback::Abort),
        "allow-all" => Ok(Fallback::AllowAll),
        other => Err(format!("unknown fallback `{other}` (expected abort or allow-all)")),
    }
}

fn load_model(args: &ModelArgs) -> Result<Box<dyn Model>> {
    let overrides: ParamOverrides = match &args.params {
        None => ParamOverrides::new(),
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| Fail::runtime(format!("{}: {e}", path.display())))?;
            serde_json::from_slice(&bytes)
                .map_err(|e| Fail::usage(format!("{}: expected a flat name to number map: {e}", path.display())))?
        }
    };
    Ok(models::by_name(&args.model, &overrides)?)
}

/// The shield named by `--shield`, bound to `model`, and the property
/// recorded in its provenance if any.
fn load_shield(path: Option<&Path>, model: &dyn Model) -> Result<(Option<Arc<Shield>>, Option<String>)> {
    let Some(path) = path else {
        return Ok((None, None));
    };
    let (file, _) = load_any(path)?;
    let property = match &file {
        AnyShieldFile::Grid(f) => f.provenance.as_ref().map(|p| p.property.clone()),
        AnyShieldFile::Tree(_) => None,
    };
    let shield = Shield::new(file.into_repr(), model.descriptor())
        .map_err(|e| Fail::usage(format!("{}: {e}", path.display())))?;
    Ok((Some(Arc::new(shield)), property))
}

fn property_for(run: &RunArgs, from_shield: Option<String>, model: &dyn Model) -> Result<String> {
    let property = run
        .property
        .clone()
        .or(from_shield)
        .ok_or_else(|| Fail::usage("--property is required when the shield does not record one"))?;
    if !model.descriptor().has_property(&property) {
        return Err(Fail::usage(format!(
            "model {} has no property `{property}` (known: {})",
            model.descriptor().name,
            model.descriptor().properties.join(", ")
        )));
    }
    Ok(property)
}

fn strategy_for(spec: &str, model: &dyn Model, shield: Option<Arc<Shield>>, fallback: Fallback) -> Result<Strategy> {
    if spec == "random" {
        return Ok(Strategy::Random { shield, fallback });
    }
    if let Some(name) = spec.strip_prefix("fixed:") {
        let action = model
            .descriptor()
            .action_id(name)
            .ok_or_else(|| Fail::usage(format!("unknown action `{name}`")))?;
        return Ok(Strategy::Fixed(action));
    }
    Err(Fail::usage(format!("unknown strategy `{spec}` (expected random or fixed:ACTION)")))
}

fn print_stats(label: &str, s: &RunStatistics) {
    println!("{label}:");
    println!("  runs: {}", s.runs);
    println!("  violations: {}", s.violations);
    println!(
        "  violation probability ({}% confidence): [{:.6}, {:.6}]",
        s.confidence * 100.0,
        s.violation_interval.0,
        s.violation_interval.1
    );
    println!("  mean cost: {:.4} ± {:.4}", s.mean_cost, s.cost_half_width);
}

fn synth(args: SynthArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let grid = GridSpec::parse(&args.grid, model.descriptor()).map_err(|e| Fail::usage(format!("--grid: {e}")))?;
    let plan = SamplePlan::new(args.n).map_err(|e| Fail::usage(format!("--n: {e}")))?;
    let config = SynthesisConfig {
        property: args.safety.clone(),
        plan,
        repeats: args.m,
        seed: args.seed,
        out_of_bounds: args.oob,
    };
    let s = synthesis::synthesize(model.as_ref(), &grid, &config)?;
    let out_safe = s.out_safe();
    let file = ShieldFile::new(
        s.shield,
        Some(ShieldProvenance {
            model: args.model.model.clone(),
            property: args.safety,
            samples_per_axis: args.n,
            repeats: args.m,
            seed: args.seed,
            out_of_bounds: args.oob,
            synthesis_seconds: s.elapsed.as_secs_f64(),
        }),
    );
    let digest = file.save(&args.output)?;
    println!("cells: {}", grid.total_cells());
    println!("initially safe: {}", s.initially_safe);
    println!("safe: {}", file.shield.safe_cells());
    println!("out of bounds safe: {out_safe}");
    println!("synthesis time: {:.3} s", s.elapsed.as_secs_f64());
    println!("wrote {} (sha256 {digest})", args.output.display());
    Ok(())
}

fn compact(args: CompactArgs) -> Result<()> {
    if !(0.0..=100.0).contains(&args.min_gain) {
        return Err(Fail::usage("--min-gain must be a percentage between 0 and 100"));
    }
    let (file, digest) = load_any(&args.input)?;
    let part = match &file {
        AnyShieldFile::Grid(f) => partitioning_of_grid(&f.shield),
        AnyShieldFile::Tree(f) => partitioning_of_tree(&f.tree),
    }
    .map_err(|e| Fail::usage(e.to_string()))?;
    let options = CompactOptions {
        seed: args.seed,
        max_iterations: args.max_iters,
        min_relative_gain: args.min_gain / 100.0,
    };
    let start = Instant::now();
    let c = caap::compact(&part, &options).map_err(|e| Fail::runtime(e.to_string()))?;
    let elapsed = start.elapsed();
    println!("input regions: {}", part.num_regions());
    for (i, step) in c.history.iter().enumerate() {
        println!(
            "iteration {}: {} regions -> {} boxes -> {} leaves{}",
            i + 1,
            step.input_regions,
            step.caap_regions,
            step.tree_leaves,
            if step.accepted { "" } else { " (not kept)" }
        );
    }
    println!("regions: {}", c.regions());
    println!("tree depth: {}", c.tree.depth());
    println!("compaction time: {:.3} s", elapsed.as_secs_f64());
    let out = TreeFile::new(
        c.tree,
        Some(TreeProvenance {
            source_digest: digest,
            seed: args.seed,
            max_iterations: args.max_iters,
            min_relative_gain: options.min_relative_gain,
            iterations: c.history,
        }),
    );
    let digest = out.save(&args.output)?;
    println!("wrote {} (sha256 {digest})", args.output.display());
    Ok(())
}

fn evaluate(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.run.model)?;
    let (shield, recorded) = load_shield(args.run.shield.as_deref(), model.as_ref())?;
    let property = property_for(&args.run, recorded, model.as_ref())?;
    let strategy = strategy_for(&args.strategy, model.as_ref(), shield, args.run.fallback)?;
    let batch = BatchConfig {
        property,
        runs: args.runs,
        horizon: args.run.horizon,
        confidence: args.confidence,
        seed: args.run.seed,
    };
    let stats = eval::estimate(model.as_ref(), &strategy, &batch)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&stats).expect("statistics serialize"));
    } else {
        print_stats(&args.strategy, &stats);
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let model = load_model(&args.run.model)?;
    let (shield, recorded) = load_shield(args.run.shield.as_deref(), model.as_ref())?;
    let property = property_for(&args.run, recorded, model.as_ref())?;
    let strategy = strategy_for(&args.strategy, model.as_ref(), shield, args.run.fallback)?;
    let d = model.descriptor();
    let mut csv = trace::header(d);
    csv.push('\n');
    for run in 0..args.runs {
        let mut rng = seeding::rng_for(args.run.seed, &[run]);
        let out = eval::run_simulation(model.as_ref(), &strategy, &property, args.run.horizon, &mut rng, true)?;
        csv.push_str(&trace::rows(d, run, &out.trace));
    }
    match &args.output {
        Some(path) => std::fs::write(path, csv).map_err(|e| Fail::runtime(format!("{}: {e}", path.display())))?,
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| Fail::runtime(e.to_string()))?,
    }
    Ok(())
}

fn learn(args: LearnArgs) -> Result<()> {
    let model = load_model(&args.run.model)?;
    let (shield, recorded) = load_shield(args.run.shield.as_deref(), model.as_ref())?;
    let property = property_for(&args.run, recorded, model.as_ref())?;
    let grid = GridSpec::parse(&args.grid, model.descriptor()).map_err(|e| Fail::usage(format!("--grid: {e}")))?;
    let config = LearnConfig {
        property: property.clone(),
        episodes: args.episodes,
        horizon: args.run.horizon,
        seed: args.run.seed,
        ..LearnConfig::default()
    };
    let start = Instant::now();
    let (policy, metrics) = eval::learn_under_shield(model.as_ref(), shield.as_deref(), grid, &config)?;
    let learn_time = start.elapsed();
    let strategy = Strategy::Policy {
        policy: Arc::new(policy),
        shield,
        fallback: args.run.fallback,
    };
    let batch = BatchConfig {
        property,
        runs: args.runs,
        horizon: args.run.horizon,
        confidence: args.confidence,
        // Evaluation uses streams disjoint from training.
        seed: seeding::derive(args.run.seed, &[u64::MAX]),
    };
    let stats = eval::estimate(model.as_ref(), &strategy, &batch)?;
    if args.json {
        let doc = serde_json::json!({
            "episodes": args.episodes,
            "unsafe_episodes": metrics.unsafe_episodes,
            "steps": metrics.steps,
            "evaluation": stats,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("summary serializes"));
    } else {
        let tail = metrics.episode_costs.len().min(100);
        let recent = metrics.episode_costs[metrics.episode_costs.len() - tail..].iter().sum::<f64>() / tail as f64;
        println!("episodes: {} ({} unsafe), {} steps in {:.2} s", args.episodes, metrics.unsafe_episodes, metrics.steps, learn_time.as_secs_f64());
        println!("mean cost of the last {tail} episodes: {recent:.4}");
        print_stats("learned policy", &stats);
    }
    Ok(())
}

fn plot(args: PlotArgs) -> Result<()> {
    let (file, _) = load_any(&args.input)?;
    let repr = file.into_repr();
    let axes = repr.axes();
    let find = |name: &str| {
        axes.iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Fail::usage(format!("no axis named `{name}`")))
    };
    let (x, y) = (find(&args.x)?, find(&args.y)?);
    let mut pinned = vec![None; axes.len()];
    for pin in &args.pins {
        let (name, value) = pin
            .split_once('=')
            .ok_or_else(|| Fail::usage(format!("--pin `{pin}`: expected NAME=VALUE")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Fail::usage(format!("--pin `{pin}`: `{value}` is not a number")))?;
        pinned[find(name.trim())?] = Some(value);
    }
    let slice = Slice {
        x,
        y,
        pinned,
        width: args.width.unwrap_or(axes[x].count()),
        height: args.height.unwrap_or(axes[y].count()),
    };
    let doc = svg::render(&repr, &slice).map_err(|e| Fail::usage(e.to_string()))?;
    std::fs::write(&args.output, doc).map_err(|e| Fail::runtime(format!("{}: {e}", args.output.display())))?;
    println!("wrote {}", args.output.display());
    Ok(())
}

fn describe_axes(axes: &[gridshield::Axis]) -> String {
    GridSpec::new(axes.to_vec()).map_or_else(|_| format!("{axes:?}"), |g| g.to_string())
}

fn info(args: InfoArgs) -> Result<()> {
    let (file, digest) = load_any(&args.input)?;
    println!("sha256: {digest}");
    match file {
        AnyShieldFile::Grid(f) => {
            let s = &f.shield;
            println!("kind: grid shield");
            println!("grid: {}", s.grid());
            println!("actions: {}", s.actions().join(", "));
            println!("cells: {}", s.cells().len());
            println!("safe cells: {}", s.safe_cells());
            if let Some(p) = &f.provenance {
                println!("provenance: {}", serde_json::to_string_pretty(p).expect("provenance serializes"));
            }
        }
        AnyShieldFile::Tree(f) => {
            let t = &f.tree;
            println!("kind: decision tree");
            println!("domain: {}", describe_axes(t.domain()));
            println!("actions: {}", t.actions().join(", "));
            println!("regions: {}", t.num_leaves());
            println!("nodes: {}", t.nodes().len());
            println!("depth: {}", t.depth());
            if let Some(p) = &f.provenance {
                println!("provenance: {}", serde_json::to_string_pretty(p).expect("provenance serializes"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Compact(a) => compact(a),
        Command::Eval(a) => evaluate(a),
        Command::Simulate(a) => simulate(a),
        Command::Learn(a) => learn(a),
        Command::Plot(a) => plot(a),
        Command::Info(a) => info(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
