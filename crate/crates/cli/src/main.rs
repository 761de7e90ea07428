use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use srg_core::constructions::{
    bethe, ep_graph, factorized_ep_spec, grid_boxes, grid_faces, grid_tree_ep_spec, k23_ep_spec, loop_graph,
    star_rg, LoopSpec,
};
use srg_core::factor_graph::{
    exact_inference, grid_model, random_bipartite_model, random_complete_model, random_tree_model, FactorGraph,
    PotentialStyle, DEFAULT_STATE_LIMIT,
};
use srg_core::gbp::{node_marginals, run_gbp, GbpConfig, Schedule, UpdateRule};
use srg_core::harness::{format_float, run_experiment, ExperimentName, ExperimentSpec, Overrides};
use srg_core::io::{parse_model, parse_region_graph, to_dot, write_model, write_region_graph};
use srg_core::pursuit::{region_pursuit, PursuitConfig, PursuitMode};
use srg_core::reductions::{loop_graph_singular, nonsingular_general, reduce_to_ordinary, Witness};
use srg_core::region_graph::RegionGraph;
use srg_core::{Error, Result};

/// Structured region graphs: build, check, reduce and run inference.
#[derive(Parser)]
#[command(name = "srg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a region graph for a model
    Build(BuildArgs),
    /// Check the validity conditions of a region graph
    Validate {
        #[arg(long)]
        rg: PathBuf,
    },
    /// Reduce a structured region graph to an ordinary one
    Reduce {
        #[arg(long)]
        rg: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decide whether a region graph is singular
    Diagnose {
        #[arg(long)]
        rg: PathBuf,
    },
    /// Run generalized belief propagation
    Infer(InferArgs),
    /// Exact marginals and log partition function by enumeration
    Exact {
        #[arg(long)]
        model: PathBuf,
        /// Largest joint state space to enumerate
        #[arg(long, default_value_t = DEFAULT_STATE_LIMIT)]
        limit: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy triangle pursuit on pairwise models
    Pursue(PursueArgs),
    /// Run one of the bundled experiments and write CSV
    Experiment(ExperimentArgs),
    /// Render a region graph in Graphviz format
    ExportDot {
        #[arg(long)]
        rg: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a random model
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BuildKind {
    Bethe,
    Squares,
    Star,
    Loops,
    Epgraph,
    Faces,
}

#[derive(Clone, Copy, ValueEnum)]
enum EpKind {
    Factorized,
    GridTree,
    K23,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long, value_enum)]
    kind: BuildKind,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Star width
    #[arg(long, default_value_t = 1)]
    width: usize,
    /// Node order for star roots, comma separated
    #[arg(long, value_delimiter = ',')]
    order: Vec<usize>,
    /// Grid rows (squares, faces, grid-tree EP)
    #[arg(long)]
    rows: Option<usize>,
    /// Grid columns (squares, faces, grid-tree EP)
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, default_value_t = 2)]
    box_rows: usize,
    #[arg(long, default_value_t = 2)]
    box_cols: usize,
    /// Loops as dash-joined cycles, e.g. `0-1-2,1-2-3`
    #[arg(long, value_delimiter = ',')]
    loops: Vec<String>,
    #[arg(long, value_enum, default_value_t = EpKind::Factorized)]
    ep: EpKind,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    DoubleLoop,
    OuterInner,
    ParentToChild,
}

impl From<RuleArg> for UpdateRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::DoubleLoop => UpdateRule::DoubleLoop,
            RuleArg::OuterInner => UpdateRule::OuterInner,
            RuleArg::ParentToChild => UpdateRule::ParentToChild,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Sequential,
    Random,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Sequential => Schedule::SequentialTopological,
            ScheduleArg::Random => Schedule::RandomPermutation,
        }
    }
}

#[derive(Args, Clone)]
struct GbpArgs {
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
    #[arg(long, value_enum)]
    rule: Option<RuleArg>,
}

impl GbpArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            damping: self.damping,
            max_iters: self.max_iters,
            tolerance: self.tol,
            schedule: self.schedule.map(Into::into),
            rule: self.rule.map(Into::into),
            ..Overrides::default()
        }
    }

    fn config(&self, seed: u64) -> GbpConfig {
        let d = GbpConfig::default();
        GbpConfig {
            damping: self.damping.unwrap_or(d.damping),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tolerance: self.tol.unwrap_or(d.tolerance),
            schedule: self.schedule.map_or(d.schedule, Into::into),
            rule: self.rule.map_or(d.rule, Into::into),
            seed,
            ..d
        }
    }
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    rg: PathBuf,
    #[command(flatten)]
    gbp: GbpArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON result file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Node marginals as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Best,
    Worst,
    FixedOrder,
}

#[derive(Args)]
struct PursueArgs {
    /// Model file; when absent each trial draws a complete model
    #[arg(long)]
    model: Option<PathBuf>,
    /// Size of the generated complete models
    #[arg(long, default_value_t = 7)]
    nodes: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Best)]
    mode: ModeArg,
    /// Reject triangles that would make the graph singular
    #[arg(long)]
    constrain: bool,
    #[arg(long)]
    max_triangles: Option<usize>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    gbp: GbpArgs,
    /// Per-step CSV; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_parser = parse_experiment)]
    name: ExperimentName,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gbp: GbpArgs,
    #[arg(long)]
    max_triangles: Option<usize>,
    #[command(flatten)]
    style: StyleArgs,
}

fn parse_experiment(s: &str) -> std::result::Result<ExperimentName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    UniformSmall,
    MinkaQi,
    Gaussian,
}

#[derive(Args)]
struct StyleArgs {
    /// Potential generator
    #[arg(long, value_enum)]
    style: Option<StyleArg>,
    /// Coupling scale for minka-qi
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    /// Edge probability for gaussian
    #[arg(long, default_value_t = 0.75)]
    edge_prob: f64,
}

impl StyleArgs {
    fn style(&self) -> Option<PotentialStyle> {
        self.style.map(|s| match s {
            StyleArg::UniformSmall => PotentialStyle::UniformSmall,
            StyleArg::MinkaQi => PotentialStyle::MinkaQi { strength: self.strength },
            StyleArg::Gaussian => PotentialStyle::Gaussian { edge_prob: self.edge_prob },
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Topology {
    Complete,
    Bipartite,
    Grid,
    Tree,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Topology,
    /// Node count (complete, tree) or left side size (bipartite)
    #[arg(long, default_value_t = 6)]
    n: usize,
    /// Right side size (bipartite)
    #[arg(long, default_value_t = 3)]
    right: usize,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    cols: usize,
    #[command(flatten)]
    style: StyleArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<FactorGraph> {
    parse_model(&read(path)?)
}

fn read_rg(path: &Path) -> Result<RegionGraph> {
    parse_region_graph(&read(path)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn need(v: Option<usize>, flag: &str) -> Result<usize> {
    v.ok_or_else(|| Error::InvalidConfig(format!("--{flag} is required for this kind")))
}

fn build(a: &BuildArgs) -> Result<()> {
    let fg = read_model(&a.model)?;
    let rg = match a.kind {
        BuildKind::Bethe => bethe(&fg),
        BuildKind::Star => star_rg(&fg, a.width, &a.order)?,
        BuildKind::Squares => grid_boxes(&fg, need(a.rows, "rows")?, need(a.cols, "cols")?, a.box_rows, a.box_cols)?,
        BuildKind::Faces => loop_graph(&fg, &grid_faces(need(a.rows, "rows")?, need(a.cols, "cols")?)?, &[])?,
        BuildKind::Loops => {
            let loops = a
                .loops
                .iter()
                .map(|l| {
                    l.split('-')
                        .map(|v| v.trim().parse().map_err(|_| Error::InvalidConfig(format!("bad loop `{l}`"))))
                        .collect::<Result<Vec<usize>>>()
                })
                .collect::<Result<_>>()?;
            loop_graph(&fg, &LoopSpec::new(loops), &[])?
        }
        BuildKind::Epgraph => {
            let spec = match a.ep {
                EpKind::Factorized => factorized_ep_spec(&fg),
                EpKind::GridTree => grid_tree_ep_spec(&fg, need(a.rows, "rows")?, need(a.cols, "cols")?)?,
                EpKind::K23 => k23_ep_spec(&fg)?,
            };
            ep_graph(&fg, &spec)?
        }
    };
    fs::write(&a.out, write_region_graph(&rg))?;
    println!("{} regions, {} edges, total counting number {}", rg.len(), rg.num_edges(), rg.total_counting_number()?);
    Ok(())
}

fn validate(rg: &Path) -> Result<()> {
    let rg = read_rg(rg)?;
    let report = rg.validate();
    if report.overall {
        println!("valid: {} regions, {} edges", rg.len(), rg.num_edges());
        return Ok(());
    }
    let failures = report.failures();
    for f in &failures {
        println!("FAIL {f}");
    }
    Err(Error::InvalidRegionGraph(format!("{} failed checks", failures.len())))
}

fn reduce(rg: &Path, out: &Path) -> Result<()> {
    let red = reduce_to_ordinary(&read_rg(rg)?)?;
    for (k, step) in red.trace.iter().enumerate() {
        println!("{:>4}. {step}", k + 1);
    }
    fs::write(out, write_region_graph(&red.graph))?;
    println!("{} steps; {} regions remain", red.trace.len(), red.graph.len());
    Ok(())
}

fn diagnose(rg: &Path) -> Result<()> {
    let rg = read_rg(rg)?;
    println!("total counting number: {}", rg.total_counting_number()?);
    let general = nonsingular_general(&rg);
    println!("verdict: {}", general.verdict);
    match &general.witness {
        Some(Witness::Loops(ids)) => println!("witness loops: {ids:?}"),
        Some(Witness::Residual(res)) => {
            println!("witness residual graph:");
            print!("{}", write_region_graph(res));
        }
        None => {}
    }
    if let Ok(peel) = loop_graph_singular(&rg) {
        println!("loop peeling: {}", peel.verdict);
    }
    Ok(())
}

fn infer(a: &InferArgs) -> Result<()> {
    let fg = read_model(&a.model)?;
    let rg = read_rg(&a.rg)?;
    let res = run_gbp(&rg, &fg, &a.gbp.config(a.seed))?;
    let marginals = node_marginals(&rg, &res.beliefs)?;
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["variable", "state", "probability"])?;
        for (v, m) in marginals.iter().enumerate() {
            for (s, p) in m.iter().enumerate() {
                w.write_record([v.to_string(), s.to_string(), format_float(*p)])?;
            }
        }
        w.flush()?;
    }
    let doc = json!({
        "converged": res.converged,
        "iterations": res.iterations,
        "final_change": res.final_change,
        "free_energy": res.free_energy,
        "max_constraint_residual": res.max_constraint_residual,
        "marginals": marginals,
    });
    emit(a.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&doc).expect("json")))
}

fn exact(model: &Path, limit: u64, out: Option<&Path>) -> Result<()> {
    let ex = exact_inference(&read_model(model)?, limit)?;
    let doc = json!({ "log_partition": ex.log_partition, "marginals": ex.marginals });
    emit(out, &format!("{}\n", serde_json::to_string_pretty(&doc).expect("json")))
}

fn pursue(a: &PursueArgs) -> Result<()> {
    let fixed = a.model.as_deref().map(read_model).transpose()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "step", "triangle", "accepted", "error", "free_energy", "iterations"])?;
    for trial in 0..a.trials {
        let seed = a.seed.wrapping_add(trial as u64);
        let fg = match &fixed {
            Some(fg) => fg.clone(),
            None => random_complete_model(a.nodes, seed, PotentialStyle::UniformSmall)?,
        };
        let cfg = PursuitConfig {
            max_triangles: a.max_triangles.unwrap_or(usize::MAX),
            mode: match a.mode {
                ModeArg::Best => PursuitMode::Best,
                ModeArg::Worst => PursuitMode::Worst,
                ModeArg::FixedOrder => PursuitMode::FixedOrder,
            },
            constrain_nonsingular: a.constrain,
            gbp: a.gbp.config(seed),
            seed,
            order: None,
        };
        let trace = region_pursuit(&fg, &cfg)?;
        let b = trace.base;
        w.write_record([
            trial.to_string(),
            "0".into(),
            String::new(),
            String::new(),
            format_float(b.error),
            format_float(b.free_energy),
            b.iterations.to_string(),
        ])?;
        for (k, s) in trace.steps.iter().enumerate() {
            let (err, fe, it) = s.stats.map_or((String::new(), String::new(), String::new()), |st| {
                (format_float(st.error), format_float(st.free_energy), st.iterations.to_string())
            });
            let t = s.triangle;
            w.write_record([
                trial.to_string(),
                (k + 1).to_string(),
                format!("{}-{}-{}", t[0], t[1], t[2]),
                (s.accepted as u8).to_string(),
                err,
                fe,
                it,
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    emit(a.out.as_deref(), &String::from_utf8_lossy(&bytes))
}

fn experiment(a: &ExperimentArgs) -> Result<()> {
    let spec = ExperimentSpec {
        name: a.name,
        trials: a.trials,
        seed: a.seed,
        output_path: Some(a.out.clone()),
        overrides: Overrides {
            max_triangles: a.max_triangles,
            style: a.style.style(),
            ..a.gbp.overrides()
        },
    };
    let res = run_experiment(&spec)?;
    let failed = res.rows.iter().filter(|r| !r.is_ok()).count();
    println!(
        "{}: {} trial rows ({failed} failed), {} aggregate rows -> {}",
        a.name,
        res.rows.len(),
        res.aggregates.len(),
        a.out.display()
    );
    Ok(())
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let style = a.style.style().unwrap_or_default();
    let fg = match a.kind {
        Topology::Complete => random_complete_model(a.n, a.seed, style)?,
        Topology::Bipartite => random_bipartite_model(a.n, a.right, a.seed, style)?,
        Topology::Grid => grid_model(a.rows, a.cols, a.seed, style)?,
        Topology::Tree => random_tree_model(a.n, a.seed, style)?,
    };
    emit(a.out.as_deref(), &write_model(&fg))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build(a) => build(&a),
        Command::Validate { rg } => validate(&rg),
        Command::Reduce { rg, out } => reduce(&rg, &out),
        Command::Diagnose { rg } => diagnose(&rg),
        Command::Infer(a) => infer(&a),
        Command::Exact { model, limit, out } => exact(&model, limit, out.as_deref()),
        Command::Pursue(a) => pursue(&a),
        Command::Experiment(a) => experiment(&a),
        Command::ExportDot { rg, out } => emit(out.as_deref(), &to_dot(&read_rg(&rg)?)?),
        Command::Generate(a) => generate(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
