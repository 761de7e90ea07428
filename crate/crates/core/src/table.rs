//! Dense row-major tables over ordered variable lists.
//!
//! The last variable of a scope varies fastest. All tables in the crate
//! (factor tables, beliefs, messages) use this layout.

/// Floor applied to log-domain values so zero entries never become `-inf`.
pub const LOG_FLOOR: f64 = -690.0;

pub fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; cards.len()];
    for k in (0..cards.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * cards[k + 1];
    }
    s
}

pub fn num_states(cards: &[usize]) -> usize {
    cards.iter().product()
}

/// Decodes a flat index into per-variable states.
pub fn decode(mut index: usize, cards: &[usize], out: &mut [usize]) {
    for k in (0..cards.len()).rev() {
        out[k] = index % cards[k];
        index /= cards[k];
    }
}

/// For every state of `vars`, the index of the induced state of `sub`.
///
/// `sub` must be a subset of `vars`; both are given with their cardinalities
/// looked up through `card`.
pub fn projection(vars: &[usize], sub: &[usize], card: impl Fn(usize) -> usize) -> Vec<usize> {
    let cards: Vec<usize> = vars.iter().map(|&v| card(v)).collect();
    let sub_cards: Vec<usize> = sub.iter().map(|&v| card(v)).collect();
    let sub_strides = strides(&sub_cards);
    // stride contribution of each position of `vars` into the sub index
    let contrib: Vec<usize> = vars
        .iter()
        .map(|v| match sub.iter().position(|s| s == v) {
            Some(p) => sub_strides[p],
            None => 0,
        })
        .collect();
    debug_assert!(sub.iter().all(|s| vars.contains(s)), "sub must be a subset");
    let n = num_states(&cards);
    let mut out = Vec::with_capacity(n);
    let mut state = vec![0usize; vars.len()];
    let mut idx = 0usize;
    for _ in 0..n {
        out.push(idx);
        // odometer increment, last position fastest
        for k in (0..vars.len()).rev() {
            state[k] += 1;
            idx += contrib[k];
            if state[k] < cards[k] {
                break;
            }
            idx -= contrib[k] * cards[k];
            state[k] = 0;
        }
    }
    out
}

/// Numerically stable `log(sum(exp(xs)))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalizes log values in place to probabilities.
pub fn normalize_log(xs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(xs);
    xs.iter().map(|x| (x - z).exp()).collect()
}

/// `sum p log p` with `0 log 0 = 0`.
pub fn neg_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum()
}

pub fn floored_ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln().max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}
