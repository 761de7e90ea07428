//! Region pursuit: grow a Bethe-like loop-graph one triangle at a time.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chordal::VarSet;
use crate::constructions::{loop_graph, LoopSpec};
use crate::error::{Error, Result};
use crate::factor_graph::{exact_inference, FactorGraph, VarId, DEFAULT_STATE_LIMIT};
use crate::gbp::{max_marginal_error, node_marginals, run_gbp, BeliefSet, GbpConfig, GbpResult};
use crate::reductions::loop_graph_singular;
use crate::region_graph::{Region, RegionGraph};
use crate::table;

pub type Triangle = [VarId; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PursuitMode {
    /// Largest estimated free-energy change first.
    Best,
    /// Smallest estimated free-energy change first.
    Worst,
    /// A fixed sequence: [`PursuitConfig::order`], or a seeded shuffle of
    /// the candidates when none is given.
    FixedOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PursuitConfig {
    pub max_triangles: usize,
    pub mode: PursuitMode,
    pub constrain_nonsingular: bool,
    pub gbp: GbpConfig,
    pub seed: u64,
    pub order: Option<Vec<Triangle>>,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        PursuitConfig {
            max_triangles: usize::MAX,
            mode: PursuitMode::Best,
            constrain_nonsingular: true,
            gbp: GbpConfig::default(),
            seed: 0,
            order: None,
        }
    }
}

/// Accuracy and cost of one GBP run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Largest absolute single-node marginal error against the exact answer.
    pub error: f64,
    pub free_energy: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PursuitStep {
    pub triangle: Triangle,
    pub accepted: bool,
    /// Score at the time of the pick; `None` in fixed-order mode.
    pub score: Option<f64>,
    /// Statistics after adding the triangle; `None` for rejections.
    pub stats: Option<StepStats>,
}

#[derive(Debug, Clone)]
pub struct PursuitTrace {
    /// Statistics of the loop-free starting graph.
    pub base: StepStats,
    pub steps: Vec<PursuitStep>,
    pub accepted: Vec<Triangle>,
    pub graph: RegionGraph,
}

impl PursuitTrace {
    /// Statistics after each acceptance, starting with the base graph.
    pub fn curve(&self) -> Vec<StepStats> {
        std::iter::once(self.base)
            .chain(self.steps.iter().filter_map(|s| s.stats))
            .collect()
    }
}

/// All triangles of the model graph, each sorted, in lexicographic order.
pub fn candidate_triangles(fg: &FactorGraph) -> Result<Vec<Triangle>> {
    if let Some(f) = fg.first_non_pairwise() {
        return Err(Error::NotPairwise(f));
    }
    let edges = fg.pair_edges();
    let n = fg.num_vars();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !edges.contains(&(i, j)) {
                continue;
            }
            for k in j + 1..n {
                if edges.contains(&(i, k)) && edges.contains(&(j, k)) {
                    out.push([i, j, k]);
                }
            }
        }
    }
    Ok(out)
}

fn sorted(t: Triangle) -> Triangle {
    let mut t = t;
    t.sort_unstable();
    t
}

/// Triangle belief `q_ij q_jk q_ik / (q_i q_j q_k)`, normalized, over the
/// sorted triangle.
fn kirkwood(beliefs: &BeliefSet, rg: &RegionGraph, t: Triangle) -> Result<Vec<f64>> {
    let belief_of = |vars: &[VarId]| -> Result<Vec<f64>> {
        let key: VarSet = vars.iter().copied().collect();
        let r = rg
            .regions()
            .filter(|r| key.is_subset(&r.vars))
            .min_by_key(|r| (r.vars.len(), r.id))
            .ok_or_else(|| Error::NotALoopGraph(format!("no region holds {vars:?}")))?;
        let b = beliefs
            .get(&r.id)
            .ok_or_else(|| Error::ShapeMismatch(format!("no belief for region {}", r.id)))?;
        Ok(b.marginal(vars))
    };
    let [a, b, c] = t;
    let pairs = [(belief_of(&[a, b])?, [0, 1]), (belief_of(&[b, c])?, [1, 2]), (belief_of(&[a, c])?, [0, 2])];
    let singles = [belief_of(&[a])?, belief_of(&[b])?, belief_of(&[c])?];
    let cards = [singles[0].len(), singles[1].len(), singles[2].len()];
    let mut log_q = Vec::with_capacity(cards.iter().product());
    let mut s = [0usize; 3];
    for k in 0..cards.iter().product() {
        table::decode(k, &cards, &mut s);
        let mut x = 0.0;
        for (p, [u, v]) in &pairs {
            x += table::floored_ln(p[s[*u] * cards[*v] + s[*v]]);
        }
        for (m, single) in singles.iter().enumerate() {
            x -= table::floored_ln(single[s[m]]);
        }
        log_q.push(x);
    }
    Ok(table::normalize_log(&log_q))
}

/// Estimated |ΔF| of adding triangle `t` to a converged loop-graph.
///
/// The triangle's belief is the Kirkwood combination of the current edge
/// and node beliefs; every other belief stays frozen. The score is the
/// change of `Σ_R c_R Σ q_R log q_R` when the triangle region is attached
/// above its three edge regions and counting numbers are recomputed.
pub fn delta_f_score(rg: &RegionGraph, result: &GbpResult, t: Triangle) -> Result<f64> {
    if !result.converged {
        return Err(Error::NotConverged);
    }
    delta_f_unchecked(rg, &result.beliefs, t)
}

pub(crate) fn delta_f_unchecked(rg: &RegionGraph, beliefs: &BeliefSet, t: Triangle) -> Result<f64> {
    let t = sorted(t);
    let before = rg.counting_numbers()?;
    let mut grown = rg.clone();
    let tri = grown.add_region(Region::complete(t.iter().copied().collect()));
    for (u, v) in [(t[0], t[1]), (t[1], t[2]), (t[0], t[2])] {
        let key: VarSet = [u, v].into_iter().collect();
        let edge = rg
            .regions()
            .find(|r| r.vars == key)
            .ok_or_else(|| Error::NotALoopGraph(format!("no edge region for ({u}, {v})")))?
            .id;
        grown.add_edge(tri, edge)?;
    }
    let after = grown.counting_numbers()?;
    let mut delta = after.get(tri) as f64 * table::neg_entropy(&kirkwood(beliefs, rg, t)?);
    for r in rg.regions() {
        let dc = after.get(r.id) - before.get(r.id);
        if dc != 0 {
            let b = beliefs
                .get(&r.id)
                .ok_or_else(|| Error::ShapeMismatch(format!("no belief for region {}", r.id)))?;
            delta += dc as f64 * table::neg_entropy(&b.probs);
        }
    }
    Ok(delta.abs())
}

fn loop_rg(fg: &FactorGraph, loops: &[Triangle]) -> Result<RegionGraph> {
    loop_graph(fg, &LoopSpec::new(loops.iter().map(|t| t.to_vec()).collect()), &[])
}

fn stats(rg: &RegionGraph, res: &GbpResult, exact: &[Vec<f64>]) -> Result<StepStats> {
    Ok(StepStats {
        error: max_marginal_error(&node_marginals(rg, &res.beliefs)?, exact),
        free_energy: res.free_energy,
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// Greedy triangle pursuit starting from the loop-free loop-graph (Bethe).
///
/// Each round picks a remaining candidate per the mode. Under the
/// non-singularity constraint a pick whose loop-graph would be singular is
/// recorded as rejected and dropped; otherwise it is added, GBP is rerun
/// and the new error is recorded. Stops after `max_triangles` acceptances or
/// when candidates run out.
pub fn region_pursuit(fg: &FactorGraph, cfg: &PursuitConfig) -> Result<PursuitTrace> {
    let candidates = candidate_triangles(fg)?;
    let exact = exact_inference(fg, DEFAULT_STATE_LIMIT)?.marginals;
    let mut remaining: Vec<Triangle> = match (&cfg.mode, &cfg.order) {
        (PursuitMode::FixedOrder, Some(order)) => order.iter().map(|&t| sorted(t)).collect(),
        (PursuitMode::FixedOrder, None) => {
            let mut c = candidates.clone();
            c.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
            c
        }
        _ => candidates.clone(),
    };
    for t in &remaining {
        if !candidates.contains(t) {
            return Err(Error::InvalidConfig(format!("{t:?} is not a triangle of the model")));
        }
    }

    let mut accepted: Vec<Triangle> = Vec::new();
    let mut rg = loop_rg(fg, &accepted)?;
    let mut res = run_gbp(&rg, fg, &cfg.gbp)?;
    let base = stats(&rg, &res, &exact)?;
    let mut steps = Vec::new();
    let mut scores: BTreeMap<Triangle, f64> = BTreeMap::new();

    while accepted.len() < cfg.max_triangles && !remaining.is_empty() {
        let (pos, score) = match cfg.mode {
            PursuitMode::FixedOrder => (0, None),
            PursuitMode::Best | PursuitMode::Worst => {
                if scores.is_empty() {
                    for &t in &remaining {
                        scores.insert(t, delta_f_unchecked(&rg, &res.beliefs, t)?);
                    }
                }
                let mut best = 0;
                for k in 1..remaining.len() {
                    let (s, b) = (scores[&remaining[k]], scores[&remaining[best]]);
                    let better = match cfg.mode {
                        PursuitMode::Best => s > b,
                        _ => s < b,
                    };
                    if better || (s == b && remaining[k] < remaining[best]) {
                        best = k;
                    }
                }
                (best, Some(scores[&remaining[best]]))
            }
        };
        let t = remaining.remove(pos);
        let mut trial = accepted.clone();
        trial.push(t);
        let next = loop_rg(fg, &trial)?;
        if cfg.constrain_nonsingular && loop_graph_singular(&next)?.is_singular() {
            steps.push(PursuitStep {
                triangle: t,
                accepted: false,
                score,
                stats: None,
            });
            continue;
        }
        accepted = trial;
        rg = next;
        res = run_gbp(&rg, fg, &cfg.gbp)?;
        scores.clear();
        steps.push(PursuitStep {
            triangle: t,
            accepted: true,
            score,
            stats: Some(stats(&rg, &res, &exact)?),
        });
    }
    Ok(PursuitTrace {
        base,
        steps,
        accepted,
        graph: rg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::bethe;
    use crate::factor_graph::{grid_model, random_complete_model, random_tree_model, PotentialStyle};
    use crate::gbp::{free_energy, Belief};

    #[test]
    fn candidate_counts() {
        let k7 = random_complete_model(7, 0, PotentialStyle::UniformSmall).unwrap();
        assert_eq!(candidate_triangles(&k7).unwrap().len(), 35);
        let tree = random_tree_model(8, 0, PotentialStyle::UniformSmall).unwrap();
        assert!(candidate_triangles(&tree).unwrap().is_empty());
        let square = grid_model(2, 2, 0, PotentialStyle::UniformSmall).unwrap();
        assert!(candidate_triangles(&square).unwrap().is_empty());
    }

    #[test]
    fn uniform_edges_score_zero() {
        let fg = random_complete_model(4, 0, PotentialStyle::UniformSmall).unwrap().uniform_copy();
        let rg = loop_rg(&fg, &[]).unwrap();
        let res = run_gbp(&rg, &fg, &GbpConfig::default()).unwrap();
        assert!(delta_f_score(&rg, &res, [0, 1, 2]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn score_matches_free_energy_difference_at_frozen_beliefs() {
        let fg = random_complete_model(3, 5, PotentialStyle::MinkaQi { strength: 1.0 }).unwrap();
        let rg = loop_rg(&fg, &[]).unwrap();
        let res = run_gbp(&rg, &fg, &GbpConfig::default()).unwrap();
        let score = delta_f_score(&rg, &res, [2, 0, 1]).unwrap();
        // from scratch: entropy-only free energies before and after
        let flat = fg.uniform_copy();
        let before = free_energy(&rg, &flat, &res.beliefs).unwrap();
        let grown = loop_rg(&fg, &[[0, 1, 2]]).unwrap();
        let mut frozen = BeliefSet::new();
        for r in grown.regions() {
            let b = match rg.regions().find(|o| o.vars == r.vars) {
                Some(o) => res.beliefs[&o.id].clone(),
                None => Belief {
                    vars: vec![0, 1, 2],
                    cards: vec![2, 2, 2],
                    probs: kirkwood(&res.beliefs, &rg, [0, 1, 2]).unwrap(),
                },
            };
            frozen.insert(r.id, b);
        }
        let after = free_energy(&grown, &flat, &frozen).unwrap();
        assert!(score > 0.0);
        assert!((score - (after - before).abs()).abs() < 1e-12);
        // vertex order does not matter
        for t in [[0, 1, 2], [1, 2, 0], [2, 1, 0]] {
            assert_eq!(delta_f_score(&rg, &res, t).unwrap(), score);
        }
        let unconverged = GbpResult {
            converged: false,
            ..res
        };
        assert_eq!(delta_f_score(&rg, &unconverged, [0, 1, 2]), Err(Error::NotConverged));
    }

    #[test]
    fn constrained_pursuit_on_k7() {
        let fg = random_complete_model(7, 1, PotentialStyle::UniformSmall).unwrap();
        let cfg = PursuitConfig::default();
        let trace = region_pursuit(&fg, &cfg).unwrap();
        assert_eq!(trace.accepted.len(), 15);
        assert_eq!(trace.steps.len(), 35);
        assert!(loop_graph_singular(&trace.graph).unwrap().is_nonsingular());
        assert_eq!(trace.graph.total_counting_number().unwrap(), 1);
    }

    #[test]
    fn zero_triangles_is_bethe() {
        let fg = random_complete_model(5, 2, PotentialStyle::UniformSmall).unwrap();
        let trace = region_pursuit(
            &fg,
            &PursuitConfig {
                max_triangles: 0,
                ..PursuitConfig::default()
            },
        )
        .unwrap();
        assert!(trace.steps.is_empty());
        let b = bethe(&fg);
        let res = run_gbp(&b, &fg, &GbpConfig::default()).unwrap();
        let exact = exact_inference(&fg, DEFAULT_STATE_LIMIT).unwrap().marginals;
        let err = max_marginal_error(&node_marginals(&b, &res.beliefs).unwrap(), &exact);
        assert!((trace.base.error - err).abs() < 1e-9);
    }

    #[test]
    fn fixed_order_is_deterministic() {
        let fg = random_complete_model(6, 3, PotentialStyle::UniformSmall).unwrap();
        let cfg = PursuitConfig {
            mode: PursuitMode::FixedOrder,
            seed: 9,
            ..PursuitConfig::default()
        };
        let a = region_pursuit(&fg, &cfg).unwrap();
        let b = region_pursuit(&fg, &cfg).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.accepted.len(), 10);
        assert!(a.steps.iter().any(|s| !s.accepted));
    }
}
