//! Experiment drivers producing plot-ready CSV.
//!
//! Every experiment draws one seed per trial from the master seed, runs its
//! trials in parallel and emits one row per (trial, method, step) followed
//! by aggregate rows holding the arithmetic mean of the successful trial
//! rows with the same method and step. Floats are written with 12
//! significant digits; `wall_ms` is the only column that varies between
//! reruns.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chordal::VarSet;
use crate::constructions::{
    bethe, cluster_variation, ep_graph, factorized_ep_spec, grid_boxes, k23_ep_spec, loop_graph, star_clusters,
    LoopSpec,
};
use crate::error::{Error, Result};
use crate::factor_graph::{
    exact_inference, grid_model, random_bipartite_model, random_complete_model, FactorGraph, PotentialStyle,
    VarId, DEFAULT_STATE_LIMIT,
};
use crate::gbp::{loopy_bp, max_marginal_error, node_marginals, run_gbp, GbpConfig, Schedule, UpdateRule};
use crate::pursuit::{region_pursuit, PursuitConfig, PursuitMode, PursuitTrace, Triangle};
use crate::reductions::{loop_graph_singular, nonsingular_general, reduce_to_ordinary, refine_outer_regions, Verdict};
use crate::region_graph::RegionGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExperimentName {
    Table1Complete,
    Table1Bipartite,
    GridBoxesSweep,
    PursuitFig6,
    ConvergenceFig7,
    ReductionEquivalence,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        ExperimentName::Table1Complete,
        ExperimentName::Table1Bipartite,
        ExperimentName::GridBoxesSweep,
        ExperimentName::PursuitFig6,
        ExperimentName::ConvergenceFig7,
        ExperimentName::ReductionEquivalence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Table1Complete => "table1_complete",
            ExperimentName::Table1Bipartite => "table1_bipartite",
            ExperimentName::GridBoxesSweep => "grid_boxes_sweep",
            ExperimentName::PursuitFig6 => "pursuit_fig6",
            ExperimentName::ConvergenceFig7 => "convergence_fig7",
            ExperimentName::ReductionEquivalence => "reduction_equivalence",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment `{s}`")))
    }
}

/// Optional replacements for the experiment's default settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub damping: Option<f64>,
    pub max_iters: Option<usize>,
    pub tolerance: Option<f64>,
    pub schedule: Option<Schedule>,
    pub rule: Option<UpdateRule>,
    pub max_triangles: Option<usize>,
    /// Potential generator replacing every model draw's default.
    pub style: Option<PotentialStyle>,
}

impl Overrides {
    fn gbp(&self, mut cfg: GbpConfig) -> GbpConfig {
        cfg.damping = self.damping.unwrap_or(cfg.damping);
        cfg.max_iters = self.max_iters.unwrap_or(cfg.max_iters);
        cfg.tolerance = self.tolerance.unwrap_or(cfg.tolerance);
        cfg.schedule = self.schedule.unwrap_or(cfg.schedule);
        cfg.rule = self.rule.unwrap_or(cfg.rule);
        cfg
    }

    fn style(&self, default: PotentialStyle) -> PotentialStyle {
        self.style.unwrap_or(default)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub trials: usize,
    pub seed: u64,
    /// Where [`run_experiment`] writes the CSV, if anywhere.
    pub output_path: Option<PathBuf>,
    pub overrides: Overrides,
}

impl ExperimentSpec {
    pub fn new(name: ExperimentName, trials: usize, seed: u64) -> Self {
        ExperimentSpec {
            name,
            trials,
            seed,
            output_path: None,
            overrides: Overrides::default(),
        }
    }
}

/// One CSV row. Trial rows have `trial = Some(k)`; aggregate rows have
/// `None` and hold means, so `converged` becomes a convergence rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub trial: Option<usize>,
    pub method: String,
    /// Triangles accepted so far in pursuit experiments, otherwise 0.
    pub step: usize,
    pub triangle: Option<Triangle>,
    /// Mean over nodes of the largest absolute marginal error.
    pub mean_error: f64,
    /// Largest absolute single-node marginal error.
    pub max_error: f64,
    pub converged: f64,
    pub iterations: f64,
    pub free_energy: f64,
    pub total_counting: f64,
    /// 1 for singular, 0 for non-singular, NaN when undecided.
    pub singular: f64,
    /// `ok`, or the error that stopped this trial.
    pub status: String,
    pub wall_ms: f64,
}

impl Row {
    fn new(trial: usize, method: impl Into<String>) -> Self {
        Row {
            trial: Some(trial),
            method: method.into(),
            step: 0,
            triangle: None,
            mean_error: f64::NAN,
            max_error: f64::NAN,
            converged: f64::NAN,
            iterations: f64::NAN,
            free_energy: f64::NAN,
            total_counting: f64::NAN,
            singular: f64::NAN,
            status: "ok".into(),
            wall_ms: 0.0,
        }
    }

    fn failed(trial: usize, method: impl Into<String>, e: &Error) -> Self {
        Row {
            status: format!("error: {e}"),
            ..Row::new(trial, method)
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn metrics(&self) -> [f64; 8] {
        [
            self.mean_error,
            self.max_error,
            self.converged,
            self.iterations,
            self.free_energy,
            self.total_counting,
            self.singular,
            self.wall_ms,
        ]
    }
}

pub const CSV_HEADER: [&str; 13] = [
    "trial",
    "method",
    "step",
    "triangle",
    "mean_error",
    "max_error",
    "converged",
    "iterations",
    "free_energy",
    "total_counting",
    "singular",
    "status",
    "wall_ms",
];

pub fn format_float(x: f64) -> String {
    format!("{x:.11e}")
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub name: ExperimentName,
    pub rows: Vec<Row>,
    pub aggregates: Vec<Row>,
}

impl ExperimentResult {
    fn from_rows(name: ExperimentName, rows: Vec<Row>) -> Self {
        let mut groups: Vec<((String, usize), Vec<&Row>)> = Vec::new();
        for r in &rows {
            let key = (r.method.clone(), r.step);
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, g)) => g.push(r),
                None => groups.push((key, vec![r])),
            }
        }
        let aggregates = groups
            .into_iter()
            .filter_map(|((method, step), g)| {
                let ok: Vec<&Row> = g.into_iter().filter(|r| r.is_ok()).collect();
                if ok.is_empty() {
                    return None;
                }
                let n = ok.len() as f64;
                let mut m = [0.0; 8];
                for r in &ok {
                    for (acc, x) in m.iter_mut().zip(r.metrics()) {
                        *acc += x;
                    }
                }
                let [mean_error, max_error, converged, iterations, free_energy, total_counting, singular, wall_ms] =
                    m.map(|x| x / n);
                Some(Row {
                    trial: None,
                    method,
                    step,
                    triangle: None,
                    mean_error,
                    max_error,
                    converged,
                    iterations,
                    free_energy,
                    total_counting,
                    singular,
                    status: "ok".into(),
                    wall_ms,
                })
            })
            .collect();
        ExperimentResult { name, rows, aggregates }
    }

    /// The aggregate row for `method` at `step`.
    pub fn aggregate(&self, method: &str, step: usize) -> Option<&Row> {
        self.aggregates.iter().find(|r| r.method == method && r.step == step)
    }

    pub fn trial_rows<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in self.rows.iter().chain(&self.aggregates) {
            let trial = r.trial.map_or_else(|| "mean".to_string(), |t| t.to_string());
            let triangle = r.triangle.map_or_else(String::new, |t| format!("{}-{}-{}", t[0], t[1], t[2]));
            let mut rec = vec![trial, r.method.clone(), r.step.to_string(), triangle];
            rec.extend(r.metrics()[..7].iter().map(|&x| format_float(x)));
            rec.push(r.status.clone());
            rec.push(format_float(r.wall_ms));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Runs an experiment and writes its CSV to `spec.output_path` if set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.trials < 1 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let ov = &spec.overrides;
    let gbp_default = ov.gbp(experiment_gbp());
    gbp_default.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let seeds: Vec<u64> = (0..spec.trials).map(|_| rng.random()).collect();
    let trial = |k: usize| -> Vec<Row> {
        let s = seeds[k];
        match spec.name {
            ExperimentName::Table1Complete => table1_complete(k, s, &gbp_default, ov),
            ExperimentName::Table1Bipartite => table1_bipartite(k, s, &gbp_default, ov),
            ExperimentName::GridBoxesSweep => grid_sweep(k, s, &gbp_default, ov),
            ExperimentName::PursuitFig6 => pursuit_fig6(k, s, &gbp_default, ov),
            ExperimentName::ConvergenceFig7 => convergence_fig7(k, s, &gbp_default, ov),
            ExperimentName::ReductionEquivalence => reduction_equivalence(k, s, &gbp_default, ov),
        }
    };
    let rows: Vec<Row> = (0..spec.trials).into_par_iter().flat_map_iter(trial).collect();
    let result = ExperimentResult::from_rows(spec.name, rows);
    if let Some(path) = &spec.output_path {
        std::fs::write(path, result.to_csv()?)?;
    }
    Ok(result)
}

/// GBP settings shared by the experiments: the library defaults with a
/// larger sweep budget.
pub fn experiment_gbp() -> GbpConfig {
    GbpConfig {
        max_iters: 20_000,
        ..GbpConfig::default()
    }
}

fn verdict_code(v: Verdict) -> f64 {
    match v {
        Verdict::NonSingular => 0.0,
        Verdict::Singular => 1.0,
        Verdict::Unknown => f64::NAN,
    }
}

fn node_errors(a: &[Vec<f64>], b: &[Vec<f64>]) -> (f64, f64) {
    let per: Vec<f64> = a.iter().zip(b).map(|(x, y)| max_marginal_error(&[x.clone()], &[y.clone()])).collect();
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    (mean, per.iter().copied().fold(0.0, f64::max))
}

/// Runs GBP on `rg` and scores it against exact marginals.
fn score_graph(
    trial: usize,
    method: &str,
    fg: &FactorGraph,
    rg: Result<RegionGraph>,
    exact: &[Vec<f64>],
    cfg: &GbpConfig,
    verdict: bool,
) -> Row {
    let start = Instant::now();
    let run = || -> Result<Row> {
        let rg = rg?;
        let res = run_gbp(&rg, fg, cfg)?;
        let (mean_error, max_error) = node_errors(&node_marginals(&rg, &res.beliefs)?, exact);
        let singular = if verdict { verdict_code(nonsingular_general(&rg).verdict) } else { f64::NAN };
        Ok(Row {
            mean_error,
            max_error,
            converged: res.converged as u8 as f64,
            iterations: res.iterations as f64,
            free_energy: res.free_energy,
            total_counting: rg.total_counting_number()? as f64,
            singular,
            ..Row::new(trial, method)
        })
    };
    let mut row = run().unwrap_or_else(|e| Row::failed(trial, method, &e));
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

/// The width-`w` star clusters plus one extra cluster over nodes
/// `order[1..=w+2]`.
fn star_plus_one(fg: &FactorGraph, w: usize, order: &[VarId]) -> Result<RegionGraph> {
    let mut clusters = star_clusters(fg, w, order)?;
    clusters.push(order[1..=w + 2].iter().copied().collect::<VarSet>());
    cluster_variation(fg, &clusters)
}

/// Bethe, then star widths 1 to 3, each followed by its singular "+1" variant.
pub const TABLE1_METHODS: [&str; 7] = ["bethe", "star1", "star1+1", "star2", "star2+1", "star3", "star3+1"];

fn table1_rows(trial: usize, fg: Result<FactorGraph>, order: &[VarId], cfg: &GbpConfig) -> Vec<Row> {
    let prepared = fg.and_then(|fg| exact_inference(&fg, DEFAULT_STATE_LIMIT).map(|e| (fg, e.marginals)));
    let (fg, exact) = match prepared {
        Ok(p) => p,
        Err(e) => return TABLE1_METHODS.iter().map(|m| Row::failed(trial, *m, &e)).collect(),
    };
    let mut rows = vec![score_graph(trial, "bethe", &fg, Ok(bethe(&fg)), &exact, cfg, true)];
    for w in 1..=3 {
        let star = star_clusters(&fg, w, order).and_then(|c| cluster_variation(&fg, &c));
        rows.push(score_graph(trial, &format!("star{w}"), &fg, star, &exact, cfg, true));
        let plus = star_plus_one(&fg, w, order);
        rows.push(score_graph(trial, &format!("star{w}+1"), &fg, plus, &exact, cfg, true));
    }
    rows
}

fn table1_complete(trial: usize, seed: u64, cfg: &GbpConfig, ov: &Overrides) -> Vec<Row> {
    let order: Vec<VarId> = (0..6).collect();
    table1_rows(trial, random_complete_model(6, seed, ov.style(PotentialStyle::UniformSmall)), &order, cfg)
}

/// Star roots alternate between the two sides of `K_{10,10}`.
pub fn bipartite_order(side: usize) -> Vec<VarId> {
    (0..side).flat_map(|i| [i, side + i]).collect()
}

fn table1_bipartite(trial: usize, seed: u64, cfg: &GbpConfig, ov: &Overrides) -> Vec<Row> {
    let fg = random_bipartite_model(10, 10, seed, ov.style(PotentialStyle::UniformSmall));
    table1_rows(trial, fg, &bipartite_order(10), cfg)
}

/// Grid shapes and box sizes of the sweep.
pub const GRID_SHAPES: [(usize, usize); 2] = [(4, 4), (4, 6)];
pub const GRID_BOXES: [(usize, usize); 3] = [(2, 2), (3, 3), (4, 3)];

fn grid_sweep(trial: usize, seed: u64, cfg: &GbpConfig, ov: &Overrides) -> Vec<Row> {
    let mut rows = Vec::new();
    for (g, &(r, c)) in GRID_SHAPES.iter().enumerate() {
        let label = |m: &str| format!("{r}x{c}/{m}");
        let fg = grid_model(r, c, seed.wrapping_add(g as u64), ov.style(PotentialStyle::MinkaQi { strength: 0.5 }));
        let prepared = fg.and_then(|fg| exact_inference(&fg, DEFAULT_STATE_LIMIT).map(|e| (fg, e.marginals)));
        let (fg, exact) = match prepared {
            Ok(p) => p,
            Err(e) => {
                rows.push(Row::failed(trial, label("all"), &e));
                continue;
            }
        };
        rows.push(score_graph(trial, &label("bethe"), &fg, Ok(bethe(&fg)), &exact, cfg, false));
        for (br, bc) in GRID_BOXES {
            let rg = grid_boxes(&fg, r, c, br, bc);
            rows.push(score_graph(trial, &label(&format!("box{br}x{bc}")), &fg, rg, &exact, cfg, false));
        }
    }
    rows
}

fn pursuit_rows(trial: usize, method: &str, fg: &FactorGraph, cfg: &PursuitConfig) -> (Vec<Row>, Option<PursuitTrace>) {
    let start = Instant::now();
    let trace = match region_pursuit(fg, cfg) {
        Ok(t) => t,
        Err(e) => return (vec![Row::failed(trial, method, &e)], None),
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let mut accepted = Vec::new();
    let mut triangles = vec![None];
    for s in trace.steps.iter().filter(|s| s.accepted) {
        triangles.push(Some(s.triangle));
    }
    let rows = trace
        .curve()
        .into_iter()
        .zip(triangles)
        .enumerate()
        .map(|(step, (st, tri))| {
            accepted.extend(tri);
            let mut row = Row::new(trial, method);
            let loops = accepted.iter().map(|t: &Triangle| t.to_vec()).collect();
            let rg = loop_graph(fg, &LoopSpec::new(loops), &[]);
            if let Ok(rg) = rg {
                row.total_counting = rg.total_counting_number().map_or(f64::NAN, |t| t as f64);
                row.singular = loop_graph_singular(&rg).map_or(f64::NAN, |v| verdict_code(v.verdict));
            }
            Row {
                step,
                triangle: tri,
                mean_error: f64::NAN,
                max_error: st.error,
                converged: st.converged as u8 as f64,
                iterations: st.iterations as f64,
                free_energy: st.free_energy,
                wall_ms: if step == 0 { ms } else { 0.0 },
                ..row
            }
        })
        .collect();
    (rows, Some(trace))
}

/// Pursuit modes of the seven-node study.
pub const FIG6_METHODS: [&str; 3] = ["best", "worst", "nonsingular"];

fn pursuit_fig6(trial: usize, seed: u64, gbp: &GbpConfig, ov: &Overrides) -> Vec<Row> {
    let fg = match random_complete_model(7, seed, ov.style(PotentialStyle::UniformSmall)) {
        Ok(fg) => fg,
        Err(e) => return FIG6_METHODS.iter().map(|m| Row::failed(trial, *m, &e)).collect(),
    };
    let mut rows = Vec::new();
    for (method, mode, constrain) in [
        ("best", PursuitMode::Best, false),
        ("worst", PursuitMode::Worst, false),
        ("nonsingular", PursuitMode::Best, true),
    ] {
        let cfg = PursuitConfig {
            max_triangles: ov.max_triangles.unwrap_or(usize::MAX),
            mode,
            constrain_nonsingular: constrain,
            gbp: *gbp,
            seed,
            order: None,
        };
        rows.extend(pursuit_rows(trial, method, &fg, &cfg).0);
    }
    rows
}

pub const FIG7_TRIANGLES: usize = 30;

fn convergence_fig7(trial: usize, seed: u64, gbp: &GbpConfig, ov: &Overrides) -> Vec<Row> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(11..=15);
    let fg = match random_complete_model(n, rng.random(), ov.style(PotentialStyle::Gaussian { edge_prob: 0.75 })) {
        Ok(fg) => fg,
        Err(e) => return vec![Row::failed(trial, "pursuit", &e), Row::failed(trial, "nonsingular", &e)],
    };
    let cfg = PursuitConfig {
        max_triangles: ov.max_triangles.unwrap_or(FIG7_TRIANGLES),
        mode: PursuitMode::Best,
        constrain_nonsingular: false,
        gbp: *gbp,
        seed,
        order: None,
    };
    let (mut rows, control) = pursuit_rows(trial, "pursuit", &fg, &cfg);
    let Some(control) = control else {
        rows.push(Row::failed(trial, "nonsingular", &Error::InvalidConfig("control run failed".into())));
        return rows;
    };
    // the same picks in the same order, skipping those that make the graph singular
    let alt = PursuitConfig {
        mode: PursuitMode::FixedOrder,
        constrain_nonsingular: true,
        order: Some(control.steps.iter().map(|s| s.triangle).collect()),
        ..cfg
    };
    rows.extend(pursuit_rows(trial, "nonsingular", &fg, &alt).0);
    rows
}

fn reduction_equivalence(trial: usize, seed: u64, cfg: &GbpConfig, ov: &Overrides) -> Vec<Row> {
    let k23 = || -> Result<Row> {
        let fg = random_bipartite_model(2, 3, seed, ov.style(PotentialStyle::MinkaQi { strength: 0.5 }))?;
        let c = reduce_to_ordinary(&ep_graph(&fg, &k23_ep_spec(&fg)?)?)?.graph;
        let d = refine_outer_regions(&c)?.graph;
        let (rc, rd) = (run_gbp(&c, &fg, cfg)?, run_gbp(&d, &fg, cfg)?);
        let (mean_error, max_error) =
            node_errors(&node_marginals(&c, &rc.beliefs)?, &node_marginals(&d, &rd.beliefs)?);
        Ok(Row {
            mean_error,
            max_error,
            converged: (rc.converged && rd.converged) as u8 as f64,
            iterations: (rc.iterations + rd.iterations) as f64,
            free_energy: rc.free_energy - rd.free_energy,
            total_counting: d.total_counting_number()? as f64,
            ..Row::new(trial, "k23_5c_vs_5d")
        })
    };
    let factorized = || -> Result<Row> {
        let fg = random_complete_model(5, seed, ov.style(PotentialStyle::UniformSmall))?;
        let reduced = reduce_to_ordinary(&ep_graph(&fg, &factorized_ep_spec(&fg))?)?.graph;
        let res = run_gbp(&reduced, &fg, cfg)?;
        let bp = loopy_bp(&fg, cfg)?;
        let (mean_error, max_error) = node_errors(&node_marginals(&reduced, &res.beliefs)?, &bp.marginals);
        Ok(Row {
            mean_error,
            max_error,
            converged: (res.converged && bp.converged) as u8 as f64,
            iterations: (res.iterations + bp.iterations) as f64,
            free_energy: res.free_energy,
            total_counting: reduced.total_counting_number()? as f64,
            ..Row::new(trial, "factorized_ep_vs_loopy_bp")
        })
    };
    let mut out = Vec::new();
    for (name, f) in [("k23_5c_vs_5d", &k23 as &dyn Fn() -> Result<Row>), ("factorized_ep_vs_loopy_bp", &factorized)] {
        let t = Instant::now();
        let mut row = f().unwrap_or_else(|e| Row::failed(trial, name, &e));
        row.wall_ms = t.elapsed().as_secs_f64() * 1e3;
        out.push(row);
    }
    out
}

/// Drops the trailing wall-time column so reruns can be compared.
pub fn strip_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Mean of a column over the trial rows of one method, skipping failures.
pub fn mean_over_trials(rows: &[Row], method: &str, col: impl Fn(&Row) -> f64) -> Option<f64> {
    let xs: Vec<f64> = rows.iter().filter(|r| r.method == method && r.is_ok()).map(col).collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}
