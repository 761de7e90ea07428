use crate::error::Result;
use crate::factor_graph::FactorGraph;
use crate::table::{self, LOG_FLOOR};

use super::GbpConfig;

#[derive(Debug, Clone)]
pub struct BpResult {
    pub marginals: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

fn normalize(m: &mut [f64]) {
    let z = table::log_sum_exp(m);
    for x in m.iter_mut() {
        *x = (*x - z).max(LOG_FLOOR);
    }
}

/// Sum-product loopy belief propagation on the factor graph itself.
///
/// Factors are visited in id order; for each factor the variable-to-factor
/// messages are refreshed and then each factor-to-variable message is
/// updated with the same damping rule as GBP. Only `damping`, `max_iters`
/// and `tolerance` of the configuration are used.
pub fn loopy_bp(fg: &FactorGraph, cfg: &GbpConfig) -> Result<BpResult> {
    cfg.validate()?;
    let n = fg.num_vars();
    let card = |v: usize| fg.cardinality(v);
    let factors = fg.factors();
    // factor → variable messages, indexed [factor][position in scope]
    let mut msgs: Vec<Vec<Vec<f64>>> = factors
        .iter()
        .map(|f| f.scope.iter().map(|&v| vec![-(card(v) as f64).ln(); card(v)]).collect())
        .collect();
    let mut touching: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (a, f) in factors.iter().enumerate() {
        for (pos, &v) in f.scope.iter().enumerate() {
            touching[v].push((a, pos));
        }
    }
    let logs: Vec<Vec<f64>> = factors.iter().map(|f| fg.log_table(f.id)).collect();
    let projs: Vec<Vec<Vec<usize>>> = factors
        .iter()
        .map(|f| f.scope.iter().map(|&v| table::projection(&f.scope, &[v], card)).collect())
        .collect();

    let mut converged = factors.is_empty();
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iters {
        let mut change = 0.0f64;
        for (a, f) in factors.iter().enumerate() {
            let to_factor: Vec<Vec<f64>> = f
                .scope
                .iter()
                .map(|&v| {
                    let mut m = vec![0.0; card(v)];
                    for &(b, pos) in &touching[v] {
                        if b != a {
                            for (x, y) in m.iter_mut().zip(&msgs[b][pos]) {
                                *x += y;
                            }
                        }
                    }
                    m
                })
                .collect();
            let mut joint = logs[a].clone();
            for (pos, m) in to_factor.iter().enumerate() {
                for (x, &s) in joint.iter_mut().zip(&projs[a][pos]) {
                    *x += m[s];
                }
            }
            for (pos, &v) in f.scope.iter().enumerate() {
                let mut cand = vec![f64::NEG_INFINITY; card(v)];
                let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); card(v)];
                for (x, &s) in joint.iter().zip(&projs[a][pos]) {
                    buckets[s].push(x - to_factor[pos][s]);
                }
                for (c, b) in cand.iter_mut().zip(&buckets) {
                    *c = table::log_sum_exp(b);
                }
                normalize(&mut cand);
                let old = &mut msgs[a][pos];
                for (o, c) in old.iter_mut().zip(&cand) {
                    change = change.max((c - *o).abs());
                    *o = (1.0 - cfg.damping) * c + cfg.damping * *o;
                }
                normalize(old);
            }
        }
        iterations += 1;
        converged = change < cfg.tolerance;
    }

    let marginals = (0..n)
        .map(|v| {
            let mut b = vec![0.0; card(v)];
            for &(a, pos) in &touching[v] {
                for (x, y) in b.iter_mut().zip(&msgs[a][pos]) {
                    *x += y;
                }
            }
            table::normalize_log(&b)
        })
        .collect();
    Ok(BpResult {
        marginals,
        converged,
        iterations,
    })
}
