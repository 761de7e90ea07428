//! Generalized belief propagation on ordinary region graphs.
//!
//! Three update rules share one driver. The single-loop rules (parent-to-child
//! and outer-inner) run damped sweeps with a convergence test on the largest
//! undamped log-message change and escalate damping when that change stalls.
//! The double-loop rule wraps the outer-inner updates in a convex bound of
//! the free energy and is the default, since single-loop dynamics can be
//! unstable around perfectly good fixed points when inner regions carry
//! negative counting numbers. All rules share their fixed points: the
//! stationary points of the Kikuchi free energy under the region graph's
//! marginal constraints.

mod bp;
mod outer_inner;
mod parent_child;

pub use bp::{loopy_bp, BpResult};

use outer_inner::OuterInner;
use parent_child::ParentToChild;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::factor_graph::{FactorGraph, VarId};
use crate::region_graph::{RegionGraph, RegionId};
use crate::table::{self, LOG_FLOOR};

/// Damping levels tried in turn when escalation is enabled.
pub const DAMPING_LADDER: [f64; 3] = [0.5, 0.7, 0.9];
/// Sweeps over which the message change must decrease before damping escalates.
pub const ESCALATION_WINDOW: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Edges in topological order of their parents.
    SequentialTopological,
    /// A fresh random permutation of the edges each sweep.
    RandomPermutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// Outer-inner updates with every negative-counting inner entropy
    /// replaced by its tangent, re-linearized until the beliefs settle.
    /// Damping and escalation do not apply.
    DoubleLoop,
    /// Messages between each inner region and its outer ancestors.
    OuterInner,
    /// Messages along every region-graph edge.
    ParentToChild,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MessageInit {
    Uniform,
    /// Log-messages drawn uniformly from `[-scale, scale]`.
    Random { seed: u64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbpConfig {
    /// Weight of the old message: `new = (1 − damping)·candidate + damping·old`.
    pub damping: f64,
    pub max_iters: usize,
    /// Convergence threshold on the largest undamped log-message change.
    pub tolerance: f64,
    pub schedule: Schedule,
    pub seed: u64,
    pub init: MessageInit,
    /// Raise damping along [`DAMPING_LADDER`] when the change stops shrinking.
    pub escalate: bool,
    pub rule: UpdateRule,
}

impl Default for GbpConfig {
    fn default() -> Self {
        GbpConfig {
            damping: 0.5,
            max_iters: 2000,
            tolerance: 1e-10,
            schedule: Schedule::SequentialTopological,
            seed: 0,
            init: MessageInit::Uniform,
            escalate: true,
            rule: UpdateRule::DoubleLoop,
        }
    }
}

impl GbpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidConfig(format!("damping {} not in [0, 1)", self.damping)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance {} must be positive", self.tolerance)));
        }
        Ok(())
    }
}

/// A normalized table over an ordered list of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub vars: Vec<VarId>,
    pub cards: Vec<usize>,
    pub probs: Vec<f64>,
}

impl Belief {
    pub fn uniform(vars: Vec<VarId>, cards: Vec<usize>) -> Self {
        let n = table::num_states(&cards);
        Belief {
            vars,
            cards,
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Sums out everything but `sub`, which must be a subset of `vars`.
    pub fn marginal(&self, sub: &[VarId]) -> Vec<f64> {
        let card = |v: VarId| self.cards[self.vars.iter().position(|&w| w == v).expect("sub ⊆ vars")];
        let sub_cards: Vec<usize> = sub.iter().map(|&v| card(v)).collect();
        let proj = table::projection(&self.vars, sub, card);
        let mut out = vec![0.0; table::num_states(&sub_cards)];
        for (p, &k) in self.probs.iter().zip(&proj) {
            out[k] += p;
        }
        out
    }
}

pub type BeliefSet = BTreeMap<RegionId, Belief>;

/// Log-domain messages keyed by `(sender side, receiver side)` region pairs,
/// each over the smaller region's variables in ascending order.
pub type MessageSet = BTreeMap<(RegionId, RegionId), Vec<f64>>;

#[derive(Debug, Clone)]
pub struct GbpResult {
    pub beliefs: BeliefSet,
    pub messages: MessageSet,
    pub converged: bool,
    pub iterations: usize,
    /// Largest undamped message change in the final sweep.
    pub final_change: f64,
    pub final_damping: f64,
    pub free_energy: f64,
    pub max_constraint_residual: f64,
}

/// Region layout shared by the update rules.
pub(crate) struct Layout {
    pub ids: Vec<RegionId>,
    pub index: BTreeMap<RegionId, usize>,
    pub vars: Vec<Vec<VarId>>,
    pub cards: Vec<Vec<usize>>,
}

impl Layout {
    fn new(rg: &RegionGraph, fg: &FactorGraph) -> Result<Self> {
        let ids = rg.topological_order()?;
        let index = ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let vars: Vec<Vec<VarId>> = ids
            .iter()
            .map(|&id| rg.region(id).map(|r| r.vars.iter().copied().collect()))
            .collect::<Result<_>>()?;
        let cards = vars.iter().map(|v| v.iter().map(|&x| fg.cardinality(x)).collect()).collect();
        Ok(Layout {
            ids,
            index,
            vars,
            cards,
        })
    }

    pub fn states(&self, k: usize) -> usize {
        table::num_states(&self.cards[k])
    }

    pub fn belief(&self, k: usize, log_b: &[f64]) -> Belief {
        Belief {
            vars: self.vars[k].clone(),
            cards: self.cards[k].clone(),
            probs: if log_b.is_empty() { Vec::new() } else { table::normalize_log(log_b) },
        }
    }
}

/// One message-passing scheme over a fixed layout.
pub(crate) trait Engine {
    /// Number of independently schedulable update units.
    fn units(&self) -> usize;
    /// Updates one unit and returns the largest undamped log-message change.
    fn update(&mut self, unit: usize, damping: f64) -> f64;
    /// Recomputes cached quantities from the messages.
    fn refresh(&mut self) {}
    fn keys(&self) -> Vec<(RegionId, RegionId)>;
    fn messages_mut(&mut self) -> &mut [Vec<f64>];
    fn beliefs(&self) -> BeliefSet;
    fn as_outer_inner(&mut self) -> Option<&mut OuterInner> {
        None
    }
    /// Messages in the form accepted by [`run_gbp_from`].
    fn exported(&mut self) -> Vec<Vec<f64>> {
        self.messages_mut().to_vec()
    }
}

/// Log-sum-exp of `log_b` into the buckets given by `proj`.
pub(crate) fn log_marginal(log_b: &[f64], proj: &[usize], n: usize) -> Vec<f64> {
    let mut max = vec![f64::NEG_INFINITY; n];
    for (x, &s) in log_b.iter().zip(proj) {
        max[s] = max[s].max(*x);
    }
    let mut sum = vec![0.0; n];
    for (x, &s) in log_b.iter().zip(proj) {
        sum[s] += (x - max[s]).exp();
    }
    max.iter().zip(&sum).map(|(m, s)| m + s.ln()).collect()
}

/// Blends `cand` into `old` with the damping rule and returns the undamped change.
pub(crate) fn damp_into(old: &mut [f64], cand: &[f64], damping: f64) -> f64 {
    let mut change = 0.0f64;
    for (o, c) in old.iter_mut().zip(cand) {
        change = change.max((c - *o).abs());
        *o = (1.0 - damping) * c + damping * *o;
    }
    normalize_floor(old);
    change
}

fn check_ordinary(rg: &RegionGraph, fg: &FactorGraph) -> Result<()> {
    let report = rg.validate();
    if !report.overall {
        return Err(Error::InvalidRegionGraph(report.failures().join("; ")));
    }
    for id in rg.inner_regions() {
        if !rg.region(id)?.is_complete() {
            return Err(Error::NonCompleteInnerRegion(id));
        }
    }
    for f in fg.factors() {
        if rg.scope(f.id) != Some(&f.scope_set()) {
            return Err(Error::ShapeMismatch(format!("factor {} scope differs from the model", f.id)));
        }
    }
    Ok(())
}

/// Adds the log-table of every factor in `factors` to `out`, a table over `vars`.
pub(crate) fn add_factor_logs(
    fg: &FactorGraph,
    vars: &[VarId],
    factors: impl IntoIterator<Item = usize>,
    out: &mut [f64],
) {
    let card = |v: VarId| fg.cardinality(v);
    for f in factors {
        let fac = fg.factor(f);
        let logs = fg.log_table(f);
        let proj = table::projection(vars, &fac.scope, card);
        for (x, &k) in out.iter_mut().zip(&proj) {
            *x += logs[k];
        }
    }
}

pub(crate) fn normalize_floor(m: &mut [f64]) {
    let z = table::log_sum_exp(m);
    for x in m.iter_mut() {
        *x = (*x - z).max(LOG_FLOOR);
    }
}

fn init_messages(msgs: &mut [Vec<f64>], init: MessageInit) {
    if let MessageInit::Random { seed, scale } = init {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in msgs.iter_mut() {
            for x in m.iter_mut() {
                *x = rng.random_range(-scale..=scale);
            }
            normalize_floor(m);
        }
    }
}

/// Runs damped GBP from the messages chosen by `cfg.init`.
///
/// The graph must be valid and ordinary. Failure to converge is reported
/// through [`GbpResult::converged`], not as an error.
pub fn run_gbp(rg: &RegionGraph, fg: &FactorGraph, cfg: &GbpConfig) -> Result<GbpResult> {
    run(rg, fg, cfg, None)
}

/// As [`run_gbp`], starting from the given messages. Messages missing from
/// `start` are initialized as `cfg.init` says.
pub fn run_gbp_from(rg: &RegionGraph, fg: &FactorGraph, cfg: &GbpConfig, start: &MessageSet) -> Result<GbpResult> {
    run(rg, fg, cfg, Some(start))
}

fn load_messages(engine: &mut dyn Engine, init: MessageInit, start: Option<&MessageSet>) -> Result<()> {
    let keys = engine.keys();
    init_messages(engine.messages_mut(), init);
    let Some(start) = start else {
        return Ok(());
    };
    for (key, m) in keys.iter().zip(engine.messages_mut().iter_mut()) {
        if let Some(given) = start.get(key) {
            if given.len() != m.len() {
                return Err(Error::ShapeMismatch(format!(
                    "message {} -> {} has {} entries, expected {}",
                    key.0,
                    key.1,
                    given.len(),
                    m.len()
                )));
            }
            m.clone_from(given);
        }
    }
    engine.refresh();
    Ok(())
}

struct Sweeper {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    schedule: Schedule,
}

impl Sweeper {
    fn sweep(&mut self, engine: &mut dyn Engine, damping: f64) -> f64 {
        if self.schedule == Schedule::RandomPermutation {
            self.order.shuffle(&mut self.rng);
        }
        engine.refresh();
        let mut change = 0.0f64;
        for &u in &self.order {
            change = change.max(engine.update(u, damping));
        }
        change
    }
}

struct Outcome {
    converged: bool,
    iterations: usize,
    change: f64,
    damping: f64,
}

fn single_loop(engine: &mut dyn Engine, sweeper: &mut Sweeper, cfg: &GbpConfig) -> Outcome {
    let mut damping = cfg.damping;
    let mut history: Vec<f64> = Vec::new();
    let mut converged = engine.units() == 0;
    let mut iterations = 0;
    let mut change = 0.0;
    while !converged && iterations < cfg.max_iters {
        change = sweeper.sweep(engine, damping);
        iterations += 1;
        converged = change < cfg.tolerance;
        history.push(change);
        if cfg.escalate && history.len() > ESCALATION_WINDOW {
            let past = history[history.len() - 1 - ESCALATION_WINDOW];
            if change >= past {
                if let Some(&next) = DAMPING_LADDER.iter().find(|&&d| d > damping) {
                    damping = next;
                    history.clear();
                }
            }
        }
    }
    Outcome {
        converged,
        iterations,
        change,
        damping,
    }
}

/// Outer loop: re-linearize the negative-counting entropies at the current
/// beliefs. Inner loop: undamped block updates of the convex problem, run to
/// a tolerance that tightens with the outer change.
fn double_loop(engine: &mut OuterInner, sweeper: &mut Sweeper, cfg: &GbpConfig) -> Outcome {
    let mut reference = engine.load_effective();
    let mut iterations = 0;
    let mut outer_change = 1.0f64;
    let mut change = f64::INFINITY;
    let mut converged = engine.units() == 0;
    while !converged && iterations < cfg.max_iters {
        let inner_tol = cfg.tolerance.max(1e-2 * outer_change);
        loop {
            change = sweeper.sweep(engine, 0.0);
            iterations += 1;
            if change < inner_tol || iterations >= cfg.max_iters {
                break;
            }
        }
        if !engine.has_convexified() {
            converged = change < cfg.tolerance;
            continue;
        }
        let next = engine.inner_reference();
        outer_change = next
            .iter()
            .zip(&reference)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        reference = next;
        engine.set_tangent(&reference);
        change = change.max(outer_change);
        converged = change < cfg.tolerance;
    }
    Outcome {
        converged,
        iterations,
        change,
        damping: 0.0,
    }
}

fn run(rg: &RegionGraph, fg: &FactorGraph, cfg: &GbpConfig, start: Option<&MessageSet>) -> Result<GbpResult> {
    cfg.validate()?;
    check_ordinary(rg, fg)?;
    let layout = Layout::new(rg, fg)?;
    let mut engine: Box<dyn Engine> = match cfg.rule {
        UpdateRule::DoubleLoop => Box::new(OuterInner::new(rg, fg, layout, true)?),
        UpdateRule::OuterInner => Box::new(OuterInner::new(rg, fg, layout, false)?),
        UpdateRule::ParentToChild => Box::new(ParentToChild::new(rg, fg, layout)?),
    };
    load_messages(engine.as_mut(), cfg.init, start)?;
    let mut sweeper = Sweeper {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        order: (0..engine.units()).collect(),
        schedule: cfg.schedule,
    };
    let outcome = match cfg.rule {
        UpdateRule::DoubleLoop => {
            let oi = engine.as_outer_inner().expect("double loop runs on the outer-inner engine");
            double_loop(oi, &mut sweeper, cfg)
        }
        _ => single_loop(engine.as_mut(), &mut sweeper, cfg),
    };

    engine.refresh();
    let beliefs = engine.beliefs();
    let keys = engine.keys();
    let messages = keys.into_iter().zip(engine.exported()).collect();
    let free_energy = free_energy(rg, fg, &beliefs)?;
    let max_constraint_residual = constraint_residual(rg, &beliefs);
    Ok(GbpResult {
        beliefs,
        messages,
        converged: outcome.converged,
        iterations: outcome.iterations,
        final_change: outcome.change,
        final_damping: outcome.damping,
        free_energy,
        max_constraint_residual,
    })
}

/// Kikuchi free energy `Σ_R c_R Σ_x q_R log(q_R / f_R)`, where `f_R` is the
/// product of the factors owned by `R`.
pub fn free_energy(rg: &RegionGraph, fg: &FactorGraph, beliefs: &BeliefSet) -> Result<f64> {
    let counting = rg.counting_numbers()?;
    let mut total = 0.0;
    for r in rg.regions() {
        let c = counting.get(r.id);
        if c == 0 {
            continue;
        }
        let b = beliefs
            .get(&r.id)
            .ok_or_else(|| Error::ShapeMismatch(format!("no belief for region {}", r.id)))?;
        let vars: Vec<VarId> = r.vars.iter().copied().collect();
        let cards: Vec<usize> = vars.iter().map(|&v| fg.cardinality(v)).collect();
        if b.vars != vars || b.probs.len() != table::num_states(&cards) {
            return Err(Error::ShapeMismatch(format!("belief of region {} does not match its variables", r.id)));
        }
        let mut log_f = vec![0.0; b.probs.len()];
        add_factor_logs(fg, &vars, r.factors.iter().copied(), &mut log_f);
        let term: f64 = b
            .probs
            .iter()
            .zip(&log_f)
            .filter(|(&q, _)| q > 0.0)
            .map(|(&q, &lf)| q * (q.ln() - lf))
            .sum();
        total += c as f64 * term;
    }
    Ok(total)
}

/// Largest L∞ gap between a parent's and a child's marginals on any clique
/// of the child.
pub fn constraint_residual(rg: &RegionGraph, beliefs: &BeliefSet) -> f64 {
    let mut worst = 0.0f64;
    for (p, c) in rg.edges() {
        let (Some(bp), Some(bc), Ok(child)) = (beliefs.get(&p), beliefs.get(&c), rg.region(c)) else {
            continue;
        };
        for clique in &child.cliques {
            let sub: Vec<VarId> = clique.0.iter().copied().collect();
            let a = bp.marginal(&sub);
            let b = bc.marginal(&sub);
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

/// Single-variable marginals for variables `0..=max`, each read from the
/// deepest region holding the variable (then fewest variables, then lowest id).
pub fn node_marginals(rg: &RegionGraph, beliefs: &BeliefSet) -> Result<Vec<Vec<f64>>> {
    let order = rg.topological_order()?;
    let mut depth: BTreeMap<RegionId, usize> = BTreeMap::new();
    for &id in &order {
        let d = rg.parents(id).iter().map(|p| depth[p] + 1).max().unwrap_or(0);
        depth.insert(id, d);
    }
    let n = rg.variables().iter().next_back().map_or(0, |&v| v + 1);
    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        let best = rg
            .regions()
            .filter(|r| r.vars.contains(&v))
            .min_by_key(|r| (std::cmp::Reverse(depth[&r.id]), r.vars.len(), r.id))
            .ok_or(Error::UncoveredVariable(v))?;
        let b = beliefs
            .get(&best.id)
            .ok_or_else(|| Error::ShapeMismatch(format!("no belief for region {}", best.id)))?;
        out.push(b.marginal(&[v]));
    }
    Ok(out)
}

/// Largest absolute entry-wise difference between two marginal lists.
pub fn max_marginal_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}
