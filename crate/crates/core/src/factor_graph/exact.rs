use super::FactorGraph;
use crate::error::{Error, Result};
use crate::table;

/// Default bound on the number of enumerated joint states (2^24).
pub const DEFAULT_STATE_LIMIT: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub marginals: Vec<Vec<f64>>,
    pub log_partition: f64,
}

/// Exact marginals and log-partition by exhaustive enumeration.
///
/// Zero factor entries are treated as true zeros here; this is the reference
/// the approximate methods are measured against.
pub fn exact_inference(fg: &FactorGraph, state_limit: u64) -> Result<ExactResult> {
    let cards = fg.cardinalities();
    let log_states = fg.log_state_count();
    if log_states > (state_limit as f64).ln() + 1e-9 {
        return Err(Error::StateSpaceTooLarge {
            states: log_states.exp(),
            limit: state_limit,
        });
    }
    let n = cards.len();
    let total = table::num_states(&cards);

    struct Compiled {
        vars: Vec<usize>,
        strides: Vec<usize>,
        log: Vec<f64>,
    }
    let compiled: Vec<Compiled> = fg
        .factors()
        .iter()
        .map(|f| {
            let sc: Vec<usize> = f.scope.iter().map(|&v| cards[v]).collect();
            Compiled {
                vars: f.scope.clone(),
                strides: table::strides(&sc),
                log: f
                    .table
                    .iter()
                    .map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
                    .collect(),
            }
        })
        .collect();

    // running log-sum-exp with a moving reference point
    let mut reference = f64::NEG_INFINITY;
    let mut z = 0.0f64;
    let mut acc: Vec<Vec<f64>> = cards.iter().map(|&k| vec![0.0; k]).collect();
    let mut state = vec![0usize; n];
    for _ in 0..total {
        let mut lw = 0.0;
        for c in &compiled {
            let mut idx = 0;
            for (v, s) in c.vars.iter().zip(&c.strides) {
                idx += state[*v] * s;
            }
            lw += c.log[idx];
        }
        if lw > f64::NEG_INFINITY {
            if lw > reference {
                let scale = (reference - lw).exp();
                z *= scale;
                for a in acc.iter_mut() {
                    for x in a.iter_mut() {
                        *x *= scale;
                    }
                }
                reference = lw;
            }
            let w = (lw - reference).exp();
            z += w;
            for (v, &s) in state.iter().enumerate() {
                acc[v][s] += w;
            }
        }
        for k in (0..n).rev() {
            state[k] += 1;
            if state[k] < cards[k] {
                break;
            }
            state[k] = 0;
        }
    }
    if z <= 0.0 || !reference.is_finite() {
        return Err(Error::ZeroPartition);
    }
    let marginals = acc
        .into_iter()
        .map(|a| a.into_iter().map(|x| x / z).collect())
        .collect();
    Ok(ExactResult {
        marginals,
        log_partition: reference + z.ln(),
    })
}
