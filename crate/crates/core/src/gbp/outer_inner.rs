use super::{add_factor_logs, damp_into, log_marginal, normalize_floor, BeliefSet, Engine, Layout};
use crate::error::{Error, Result};
use crate::factor_graph::{FactorGraph, VarId};
use crate::region_graph::{RegionGraph, RegionId};
use crate::table;

/// Messages between every inner region `β` and each of its `n_β` outer
/// ancestors `α`, over the variables of `β`.
///
/// `q_α ∝ f_α ∏_β μ_{β→α}` and
/// `q_β ∝ f_β^{c_β/(c_β+n_β)} ∏_α μ_{α→β}^{1/(c_β+n_β)}` with
/// `μ_{α→β} = q_α(x_β) / μ_{β→α}`. Updating `β` refreshes all its
/// `μ_{β→α} = q_β / μ_{α→β}` at once.
///
/// In convex mode every inner region with `c_β < 0` is given counting
/// number zero; its entropy term is replaced by the tangent
/// `c_β Σ q_β log q̂_β` at a reference belief `q̂_β`, which is spread evenly
/// over the outer ancestors' potentials together with its factor term. The
/// updates are then exact block maximizations of a concave dual.
pub(crate) struct OuterInner {
    layout: Layout,
    /// Per outer region: (layout index, log of its own factors).
    outer_pot: Vec<(usize, Vec<f64>)>,
    /// Potentials plus tangent terms, per outer slot.
    outer_eff: Vec<Vec<f64>>,
    /// Cached unnormalized log-belief per outer slot.
    outer_log: Vec<Vec<f64>>,
    inner: Vec<InnerSlot>,
    /// Per pair: (outer slot, inner slot, outer state → inner state).
    pairs: Vec<(usize, usize, Vec<usize>)>,
    msgs: Vec<Vec<f64>>,
    /// Reference log-beliefs of the current tangents, per inner slot.
    reference: Vec<Vec<f64>>,
}

struct InnerSlot {
    k: usize,
    /// Own factor logs, unweighted.
    log_f: Vec<f64>,
    c: f64,
    /// Counting number used by the updates.
    c_eff: f64,
    pairs: Vec<usize>,
}

impl InnerSlot {
    fn convexified(&self) -> bool {
        self.c_eff != self.c
    }
}

impl OuterInner {
    pub fn new(rg: &RegionGraph, fg: &FactorGraph, layout: Layout, convex: bool) -> Result<Self> {
        let card = |v: VarId| fg.cardinality(v);
        let counting = rg.counting_numbers()?;
        let mut outer_slot = vec![usize::MAX; layout.ids.len()];
        let mut outer_pot = Vec::new();
        let mut inner = Vec::new();
        let mut pairs = Vec::new();
        for (k, &id) in layout.ids.iter().enumerate() {
            let r = rg.region(id)?;
            let mut pot = vec![0.0; layout.states(k)];
            add_factor_logs(fg, &layout.vars[k], r.factors.iter().copied(), &mut pot);
            if rg.is_outer(id) {
                outer_slot[k] = outer_pot.len();
                outer_pot.push((k, pot));
                continue;
            }
            let outers: Vec<usize> = rg
                .ancestors(id)
                .into_iter()
                .filter(|&a| rg.is_outer(a))
                .map(|a| outer_slot[layout.index[&a]])
                .collect();
            let c = counting.get(id) as f64;
            let c_eff = if convex && c < 0.0 { 0.0 } else { c };
            if c_eff + outers.len() as f64 == 0.0 {
                return Err(Error::InvalidRegionGraph(format!(
                    "inner region {id} has counting number equal to minus its outer ancestor count"
                )));
            }
            let slot = inner.len();
            let mut mine = Vec::new();
            for o in outers {
                mine.push(pairs.len());
                let ok = outer_pot[o].0;
                pairs.push((o, slot, table::projection(&layout.vars[ok], &layout.vars[k], card)));
            }
            inner.push(InnerSlot {
                k,
                log_f: pot,
                c,
                c_eff,
                pairs: mine,
            });
        }
        let msgs = pairs
            .iter()
            .map(|&(_, i, _)| {
                let n = layout.states(inner[i].k);
                vec![-(n as f64).ln(); n]
            })
            .collect();
        let outer_eff: Vec<Vec<f64>> = outer_pot.iter().map(|(_, p)| p.clone()).collect();
        let mut engine = OuterInner {
            layout,
            outer_pot,
            outer_log: outer_eff.clone(),
            outer_eff,
            inner,
            pairs,
            msgs,
            reference: Vec::new(),
        };
        let flat: Vec<Vec<f64>> = engine.inner.iter().map(|s| vec![0.0; s.log_f.len()]).collect();
        engine.set_tangent(&flat);
        Ok(engine)
    }

    pub fn has_convexified(&self) -> bool {
        self.inner.iter().any(InnerSlot::convexified)
    }

    /// Rebuilds the outer potentials with tangents at the reference
    /// log-beliefs `reference` (one table per inner slot; only convexified
    /// slots are read).
    pub fn set_tangent(&mut self, reference: &[Vec<f64>]) {
        for (o, (_, pot)) in self.outer_pot.iter().enumerate() {
            self.outer_eff[o].clone_from(pot);
        }
        for p in 0..self.pairs.len() {
            if let Some(t) = self.tangent_term(p, reference) {
                let (o, _, ref proj) = self.pairs[p];
                for (x, &st) in self.outer_eff[o].iter_mut().zip(proj) {
                    *x += t[st];
                }
            }
        }
        self.reference = reference.to_vec();
        self.refresh();
    }

    /// Tangent contribution of pair `p` to its outer region, if convexified.
    fn tangent_term(&self, p: usize, reference: &[Vec<f64>]) -> Option<Vec<f64>> {
        let (_, i, _) = self.pairs[p];
        let s = &self.inner[i];
        s.convexified().then(|| {
            let w = s.c / s.pairs.len() as f64;
            s.log_f.iter().zip(&reference[i]).map(|(f, r)| w * (f - r)).collect()
        })
    }

    /// Messages as seen by the outer regions: the plain messages of the
    /// unmodified problem, tangents folded in.
    pub fn effective_messages(&self) -> Vec<Vec<f64>> {
        (0..self.pairs.len())
            .map(|p| {
                let mut m = self.msgs[p].clone();
                if let Some(t) = self.tangent_term(p, &self.reference) {
                    m.iter_mut().zip(&t).for_each(|(x, y)| *x += y);
                    normalize_floor(&mut m);
                }
                m
            })
            .collect()
    }

    /// Reads the current messages as effective messages, takes the tangents
    /// at the beliefs they imply, and returns that reference.
    pub fn load_effective(&mut self) -> Vec<Vec<f64>> {
        for (o, (_, pot)) in self.outer_pot.iter().enumerate() {
            self.outer_eff[o].clone_from(pot);
        }
        self.refresh();
        let reference = self.inner_reference();
        for p in 0..self.pairs.len() {
            if let Some(t) = self.tangent_term(p, &reference) {
                self.msgs[p].iter_mut().zip(&t).for_each(|(x, y)| *x -= y);
                normalize_floor(&mut self.msgs[p]);
            }
        }
        self.set_tangent(&reference);
        reference
    }

    /// Normalized log-beliefs of the inner regions, averaged over their
    /// outer ancestors' marginals.
    pub fn inner_reference(&self) -> Vec<Vec<f64>> {
        self.inner
            .iter()
            .map(|s| {
                let n = self.layout.states(s.k);
                let mut avg = vec![0.0; n];
                for &p in &s.pairs {
                    let (o, _, ref proj) = self.pairs[p];
                    let mut m = log_marginal(&self.outer_log[o], proj, n);
                    normalize_floor(&mut m);
                    for (a, x) in avg.iter_mut().zip(&m) {
                        *a += x.exp() / s.pairs.len() as f64;
                    }
                }
                avg.iter().map(|&a| table::floored_ln(a)).collect()
            })
            .collect()
    }

    /// `log μ_{α→β}` for every pair of inner slot `i`, from the cached outer beliefs.
    fn upward(&self, i: usize) -> Vec<Vec<f64>> {
        let n = self.layout.states(self.inner[i].k);
        self.inner[i]
            .pairs
            .iter()
            .map(|&p| {
                let (o, _, ref proj) = self.pairs[p];
                let mut m = log_marginal(&self.outer_log[o], proj, n);
                for (x, y) in m.iter_mut().zip(&self.msgs[p]) {
                    *x -= y;
                }
                m
            })
            .collect()
    }

    fn inner_log(&self, i: usize, up: &[Vec<f64>]) -> Vec<f64> {
        let s = &self.inner[i];
        let mut q: Vec<f64> = s.log_f.iter().map(|x| s.c_eff * x).collect();
        for m in up {
            for (x, y) in q.iter_mut().zip(m) {
                *x += y;
            }
        }
        let w = 1.0 / (s.c_eff + s.pairs.len() as f64);
        q.iter_mut().for_each(|x| *x *= w);
        q
    }
}

impl Engine for OuterInner {
    fn units(&self) -> usize {
        self.inner.len()
    }

    fn update(&mut self, i: usize, damping: f64) -> f64 {
        let up = self.upward(i);
        let q = self.inner_log(i, &up);
        let mut change = 0.0f64;
        for (&p, m) in self.inner[i].pairs.iter().zip(&up) {
            let mut cand: Vec<f64> = q.iter().zip(m).map(|(a, b)| a - b).collect();
            normalize_floor(&mut cand);
            let before = self.msgs[p].clone();
            change = change.max(damp_into(&mut self.msgs[p], &cand, damping));
            let (o, _, ref proj) = self.pairs[p];
            let after = &self.msgs[p];
            for (x, &s) in self.outer_log[o].iter_mut().zip(proj) {
                *x += after[s] - before[s];
            }
        }
        change
    }

    fn refresh(&mut self) {
        for (o, eff) in self.outer_eff.iter().enumerate() {
            self.outer_log[o].clone_from(eff);
        }
        for (p, (o, _, proj)) in self.pairs.iter().enumerate() {
            let m = &self.msgs[p];
            for (x, &s) in self.outer_log[*o].iter_mut().zip(proj) {
                *x += m[s];
            }
        }
    }

    fn keys(&self) -> Vec<(RegionId, RegionId)> {
        self.pairs
            .iter()
            .map(|&(o, i, _)| (self.layout.ids[self.outer_pot[o].0], self.layout.ids[self.inner[i].k]))
            .collect()
    }

    fn messages_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.msgs
    }

    fn as_outer_inner(&mut self) -> Option<&mut OuterInner> {
        Some(self)
    }

    fn exported(&mut self) -> Vec<Vec<f64>> {
        self.effective_messages()
    }

    fn beliefs(&self) -> BeliefSet {
        let mut out = BeliefSet::new();
        for (o, (k, _)) in self.outer_pot.iter().enumerate() {
            out.insert(self.layout.ids[*k], self.layout.belief(*k, &self.outer_log[o]));
        }
        for i in 0..self.inner.len() {
            let k = self.inner[i].k;
            out.insert(self.layout.ids[k], self.layout.belief(k, &self.inner_log(i, &self.upward(i))));
        }
        out
    }
}
