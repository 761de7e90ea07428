//! Shared model and region-graph corpus for the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use srg_core::chordal::VarSet;
use srg_core::constructions::{
    bethe, ep_graph, factorized_ep_spec, grid_boxes, grid_faces, grid_tree_ep_spec, k23_ep_spec, loop_graph,
    star_rg, EpGraphSpec, LoopSpec, OuterSpec,
};
use srg_core::factor_graph::{
    grid_model, random_bipartite_model, random_complete_model, FactorGraph, PotentialStyle, VarId,
};
use srg_core::reductions::{
    drop_region, duplicate_merge, factor_move, find_split, grow_shrink, link_death, merge, split,
};
use srg_core::region_graph::{subsumes, RegionGraph, RegionId};

pub struct Named {
    pub name: String,
    pub model: FactorGraph,
    pub graph: RegionGraph,
}

fn named(name: impl Into<String>, model: &FactorGraph, graph: RegionGraph) -> Named {
    Named {
        name: name.into(),
        model: model.clone(),
        graph,
    }
}

/// EP-graph over a random spanning tree of a pairwise model. The remaining
/// edges are dealt to `outers` outer regions at random; each factor goes to
/// an outer region covering its scope.
pub fn random_tree_ep_spec(fg: &FactorGraph, outers: usize, rng: &mut ChaCha8Rng) -> EpGraphSpec {
    let n = fg.num_vars();
    let mut edges: Vec<(VarId, VarId)> = fg.pair_edges().into_iter().collect();
    edges.shuffle(rng);
    let mut comp: Vec<usize> = (0..n).collect();
    fn root(c: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while c[r] != r {
            r = c[r];
        }
        r
    }
    let (mut tree, mut rest) = (Vec::new(), Vec::new());
    for (a, b) in edges {
        let (ra, rb) = (root(&mut comp, a), root(&mut comp, b));
        if ra != rb {
            comp[ra] = rb;
            tree.push((a, b));
        } else {
            rest.push((a, b));
        }
    }
    let mut specs: Vec<OuterSpec> = (0..outers.max(1))
        .map(|_| OuterSpec {
            added_cliques: Vec::new(),
            factors: Vec::new(),
        })
        .collect();
    let mut owner = std::collections::BTreeMap::new();
    for e in rest {
        let k = rng.random_range(0..specs.len());
        specs[k].added_cliques.push([e.0, e.1].into_iter().collect());
        owner.insert(e, k);
    }
    for f in fg.factors() {
        let k = match f.scope.as_slice() {
            &[a, b] => owner.get(&(a.min(b), a.max(b))).copied(),
            _ => None,
        }
        .unwrap_or_else(|| rng.random_range(0..specs.len()));
        specs[k].factors.push(f.id);
    }
    let base: Vec<VarSet> = tree.into_iter().map(|(a, b)| [a, b].into_iter().collect()).collect();
    EpGraphSpec {
        base_cliques: base,
        outers: specs,
    }
}

/// EP-graphs: fully factorized, tree-based on grids, the K_{2,3} example
/// and random spanning-tree bases.
pub fn ep_corpus() -> Vec<Named> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..4 {
        let fg = random_complete_model(4 + seed as usize, seed, PotentialStyle::UniformSmall).unwrap();
        out.push(named(format!("factorized K{}", 4 + seed), &fg, ep_graph(&fg, &factorized_ep_spec(&fg)).unwrap()));
        for k in 1..=3 {
            let spec = random_tree_ep_spec(&fg, k, &mut rng);
            out.push(named(format!("tree-ep K{} x{k}", 4 + seed), &fg, ep_graph(&fg, &spec).unwrap()));
        }
    }
    for (r, c) in [(2, 2), (3, 3), (4, 4), (3, 5)] {
        let fg = grid_model(r, c, 1, PotentialStyle::MinkaQi { strength: 0.5 }).unwrap();
        out.push(named(format!("grid-tree-ep {r}x{c}"), &fg, ep_graph(&fg, &grid_tree_ep_spec(&fg, r, c).unwrap()).unwrap()));
    }
    let k23 = random_bipartite_model(2, 3, 0, PotentialStyle::MinkaQi { strength: 0.5 }).unwrap();
    out.push(named("k23-ep", &k23, ep_graph(&k23, &k23_ep_spec(&k23).unwrap()).unwrap()));
    out
}

/// Ordinary region graphs from every construction.
pub fn ordinary_corpus() -> Vec<Named> {
    let mut out = Vec::new();
    for n in [4, 5, 6] {
        let fg = random_complete_model(n, n as u64, PotentialStyle::UniformSmall).unwrap();
        out.push(named(format!("bethe K{n}"), &fg, bethe(&fg)));
        for w in 1..=n - 2 {
            out.push(named(format!("star{w} K{n}"), &fg, star_rg(&fg, w, &[]).unwrap()));
        }
        let tri: Vec<Vec<VarId>> = (1..n - 1).map(|j| vec![0, j, j + 1]).collect();
        out.push(named(format!("fan loops K{n}"), &fg, loop_graph(&fg, &LoopSpec::new(tri), &[]).unwrap()));
    }
    for (r, c) in [(3, 3), (4, 4), (3, 5)] {
        let fg = grid_model(r, c, 2, PotentialStyle::MinkaQi { strength: 0.5 }).unwrap();
        out.push(named(format!("bethe grid {r}x{c}"), &fg, bethe(&fg)));
        out.push(named(format!("squares {r}x{c}"), &fg, grid_boxes(&fg, r, c, 2, 2).unwrap()));
        out.push(named(format!("boxes3 {r}x{c}"), &fg, grid_boxes(&fg, r, c, 3, 3).unwrap()));
        out.push(named(format!("faces {r}x{c}"), &fg, loop_graph(&fg, &grid_faces(r, c).unwrap(), &[]).unwrap()));
    }
    let k23 = random_bipartite_model(2, 3, 0, PotentialStyle::UniformSmall).unwrap();
    out.push(named("star1 K23", &k23, star_rg(&k23, 1, &[3, 0, 1, 2, 4]).unwrap()));
    out.push(named("bethe K23", &k23, bethe(&k23)));
    out
}

/// Outcome of one successful operator application.
pub struct Applied {
    pub op: &'static str,
    pub before: i64,
    pub after: i64,
    /// Counting number of the split region for empty-separator splits.
    pub empty_split_c: Option<i64>,
    pub split_outer: bool,
}

fn pick<T: Clone>(xs: &[T], rng: &mut ChaCha8Rng) -> Option<T> {
    xs.choose(rng).cloned()
}

/// Tries one random operator on `rg`; returns the rewritten graph and what
/// happened, or `None` when the chosen application is invalid.
pub fn random_operator(rg: &RegionGraph, rng: &mut ChaCha8Rng) -> Option<(RegionGraph, Applied)> {
    let before = rg.total_counting_number().ok()?;
    let ids = rg.ids();
    let edges = rg.edges();
    let mut empty_split_c = None;
    let mut split_outer = false;
    let (op, out) = match rng.random_range(0..7) {
        0 => {
            let (p, c) = pick(&edges, rng)?;
            ("link-death", link_death(rg, p, c))
        }
        1 => {
            let id = pick(&rg.outer_regions(), rng)?;
            let r = rg.region(id).ok()?;
            let vars: Vec<VarId> = r.vars.iter().copied().collect();
            if rng.random_bool(0.5) && vars.len() >= 2 {
                let pair: VarSet = vars.choose_multiple(rng, 2).copied().collect();
                ("grow-shrink", grow_shrink(rg, id, &[pair], &[]))
            } else {
                let cl: Vec<VarSet> = r.cliques.iter().map(|c| c.vars().clone()).collect();
                let drop = pick(&cl, rng)?;
                ("grow-shrink", grow_shrink(rg, id, &[], &[drop]))
            }
        }
        2 => ("drop", drop_region(rg, pick(&ids, rng)?)),
        3 => {
            let from = pick(&rg.outer_regions(), rng)?;
            let fs: Vec<usize> = rg.region(from).ok()?.factors.iter().copied().collect();
            let f = pick(&fs, rng)?;
            let scope = rg.scope(f)?.clone();
            let targets: Vec<RegionId> = ids
                .iter()
                .copied()
                .filter(|&t| t != from && scope.is_subset(&rg.region(t).unwrap().vars))
                .collect();
            ("factor-move", factor_move(rg, f, from, pick(&targets, rng)?))
        }
        4 => {
            let ready: Vec<(RegionId, RegionId)> = edges
                .iter()
                .copied()
                .filter(|&(p, c)| {
                    let (rp, rc) = (rg.region(p).unwrap(), rg.region(c).unwrap());
                    rp.factors.is_empty() && subsumes(rc, rp)
                })
                .collect();
            let (p, c) = pick(&ready, rng).or_else(|| pick(&edges, rng))?;
            ("merge", merge(rg, p, c))
        }
        5 => {
            let disconnected: Vec<RegionId> = ids
                .iter()
                .copied()
                .filter(|&id| {
                    find_split(rg.region(id).unwrap()).is_ok_and(|p| p.s.is_empty() && split(rg, id, &p).is_ok())
                })
                .collect();
            let id = if rng.random_bool(0.5) { pick(&disconnected, rng) } else { None }.or_else(|| pick(&ids, rng))?;
            let p = find_split(rg.region(id).ok()?).ok()?;
            if p.s.is_empty() {
                empty_split_c = Some(rg.counting_numbers().ok()?.get(id));
                split_outer = rg.is_outer(id);
            }
            ("split", split(rg, id, &p))
        }
        _ => ("duplicate-merge", Ok(duplicate_merge(rg))),
    };
    let out = out.ok()?;
    let after = out.total_counting_number().ok()?;
    Some((
        out,
        Applied {
            op,
            before,
            after,
            empty_split_c,
            split_outer,
        },
    ))
}

/// A copy with one redundant grandparent-to-grandchild link, which leaves
/// every ancestor set and so every counting number unchanged.
pub fn with_shortcut(rg: &RegionGraph) -> Option<RegionGraph> {
    for (p, c) in rg.edges() {
        for &g in rg.children(c) {
            if !rg.has_edge(p, g) {
                let mut out = rg.clone();
                out.add_edge(p, g).ok()?;
                return Some(out);
            }
        }
    }
    None
}

/// Random walks of operator applications over the SRG corpus until
/// `target` applications succeeded.
pub fn operator_walk(target: usize, seed: u64) -> Vec<Applied> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<RegionGraph> = ep_corpus()
        .into_iter()
        .chain(ordinary_corpus())
        .map(|n| n.graph)
        .collect();
    let shortcuts: Vec<RegionGraph> = starts.iter().filter_map(with_shortcut).collect();
    starts.extend(shortcuts);
    let mut log = Vec::new();
    let mut attempts = 0;
    while log.len() < target && attempts < 200 * target {
        let mut rg = starts[attempts % starts.len()].clone();
        for _ in 0..30 {
            attempts += 1;
            if let Some((next, a)) = random_operator(&rg, &mut rng) {
                log.push(a);
                rg = next;
            }
        }
    }
    log
}

/// All triangles of `K_n`.
pub fn triangles(n: usize) -> Vec<Vec<VarId>> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                out.push(vec![i, j, k]);
            }
        }
    }
    out
}

/// A random nonempty subset of `items`.
pub fn random_subset<T: Clone>(items: &[T], rng: &mut ChaCha8Rng) -> Vec<T> {
    loop {
        let s: Vec<T> = items.iter().filter(|_| rng.random_bool(0.4)).cloned().collect();
        if !s.is_empty() {
            return s;
        }
    }
}

pub fn edge_set(fg: &FactorGraph) -> BTreeSet<(VarId, VarId)> {
    fg.pair_edges()
}
