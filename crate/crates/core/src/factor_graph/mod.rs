//! Discrete factor graphs `p(x) ∝ ∏_a f_a(x_a)`.
//!
//! Variables are identified by their dense index `0..n`. Factor tables are
//! stored row-major over the factor scope (last scope variable fastest).

mod exact;
mod generators;

pub use exact::{exact_inference, ExactResult, DEFAULT_STATE_LIMIT};
pub use generators::{grid_model, random_bipartite_model, random_complete_model, random_tree_model, PotentialStyle};

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::table;

pub type VarId = usize;
pub type FactorId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableDecl {
    pub id: VarId,
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub id: FactorId,
    pub scope: Vec<VarId>,
    pub table: Vec<f64>,
}

impl Factor {
    pub fn new(id: FactorId, scope: Vec<VarId>, table: Vec<f64>) -> Self {
        Factor { id, scope, table }
    }

    pub fn scope_set(&self) -> BTreeSet<VarId> {
        self.scope.iter().copied().collect()
    }

    pub fn arity(&self) -> usize {
        self.scope.len()
    }
}

/// An immutable discrete factor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    variables: Vec<VariableDecl>,
    factors: Vec<Factor>,
}

impl FactorGraph {
    /// Builds and validates a model. Variable ids must be exactly `0..n` and
    /// factor ids exactly `0..m` (in any listing order).
    pub fn new(mut variables: Vec<VariableDecl>, mut factors: Vec<Factor>) -> Result<Self> {
        variables.sort_by_key(|v| v.id);
        for (i, v) in variables.iter().enumerate() {
            if v.id != i {
                return Err(Error::InvalidModel(format!(
                    "variable ids must be 0..{} without gaps or duplicates",
                    variables.len()
                )));
            }
            if v.cardinality == 0 {
                return Err(Error::InvalidModel(format!("variable {i} has cardinality 0")));
            }
        }
        factors.sort_by_key(|f| f.id);
        for (i, f) in factors.iter().enumerate() {
            if f.id != i {
                return Err(Error::InvalidModel(format!(
                    "factor ids must be 0..{} without gaps or duplicates",
                    factors.len()
                )));
            }
            let mut seen = BTreeSet::new();
            for &v in &f.scope {
                if v >= variables.len() {
                    return Err(Error::InvalidModel(format!(
                        "factor {i} references undeclared variable {v}"
                    )));
                }
                if !seen.insert(v) {
                    return Err(Error::InvalidModel(format!(
                        "factor {i} repeats variable {v} in its scope"
                    )));
                }
            }
            let expected: usize = f.scope.iter().map(|&v| variables[v].cardinality).product();
            if f.table.len() != expected {
                return Err(Error::InvalidModel(format!(
                    "factor {i} table has {} entries, expected {expected}",
                    f.table.len()
                )));
            }
            if f.table.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "factor {i} has a negative or non-finite entry"
                )));
            }
            if !f.table.iter().any(|&x| x > 0.0) {
                return Err(Error::InvalidModel(format!("factor {i} is identically zero")));
            }
        }
        let fg = FactorGraph { variables, factors };
        if !fg.is_connected() {
            return Err(Error::InvalidModel(
                "variable-factor graph is not connected".into(),
            ));
        }
        Ok(fg)
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, id: FactorId) -> &Factor {
        &self.factors[id]
    }

    pub fn cardinality(&self, v: VarId) -> usize {
        self.variables[v].cardinality
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.cardinality).collect()
    }

    /// Log of the total number of joint configurations.
    pub fn log_state_count(&self) -> f64 {
        self.variables.iter().map(|v| (v.cardinality as f64).ln()).sum()
    }

    /// True when every factor has at most two variables.
    pub fn is_pairwise(&self) -> bool {
        self.factors.iter().all(|f| f.arity() <= 2)
    }

    /// Returns the first factor of arity greater than two, if any.
    pub fn first_non_pairwise(&self) -> Option<FactorId> {
        self.factors.iter().find(|f| f.arity() > 2).map(|f| f.id)
    }

    /// Undirected edges `(i, j)` with `i < j` induced by pairwise factors.
    pub fn pair_edges(&self) -> BTreeSet<(VarId, VarId)> {
        self.factors
            .iter()
            .filter(|f| f.arity() == 2)
            .map(|f| {
                let (a, b) = (f.scope[0], f.scope[1]);
                (a.min(b), a.max(b))
            })
            .collect()
    }

    /// Returns a copy with factor `id` multiplied by `scale`.
    pub fn with_scaled_factor(&self, id: FactorId, scale: f64) -> Result<Self> {
        let mut factors = self.factors.clone();
        for x in &mut factors[id].table {
            *x *= scale;
        }
        FactorGraph::new(self.variables.clone(), factors)
    }

    /// Returns a copy of the model with every factor table set to ones.
    pub fn uniform_copy(&self) -> Self {
        let factors = self
            .factors
            .iter()
            .map(|f| Factor::new(f.id, f.scope.clone(), vec![1.0; f.table.len()]))
            .collect();
        FactorGraph {
            variables: self.variables.clone(),
            factors,
        }
    }

    /// Log-table of factor `id`, with zero entries floored.
    pub fn log_table(&self, id: FactorId) -> Vec<f64> {
        self.factors[id].table.iter().map(|&x| table::floored_ln(x)).collect()
    }

    fn is_connected(&self) -> bool {
        let n = self.variables.len();
        if n <= 1 {
            return true;
        }
        // union-find over variables, joined through factor scopes
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        for f in &self.factors {
            for w in f.scope.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                parent[a] = b;
            }
        }
        let root = find(&mut parent, 0);
        (1..n).all(|v| find(&mut parent, v) == root)
    }
}
