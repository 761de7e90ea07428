//! Line-oriented text formats for models and region graphs, plus DOT export.
//!
//! Blank lines and lines starting with `#` are ignored. A model is a list of
//!
//! ```text
//! var <id> <cardinality>
//! factor <id> <scope ids...> : <table values...>
//! ```
//!
//! with tables in row-major order over the listed scope (last variable
//! fastest). Floats are written in the shortest form that parses back to the
//! same bits.
//!
//! A region graph is a list of
//!
//! ```text
//! scope <factor id> : <vars...>
//! region <id> vars <vars...> cliques <a,b,c> <d,e> factors <ids...>
//! edge <parent id> <child id>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::chordal::VarSet;
use crate::error::{Error, Result};
use crate::factor_graph::{Factor, FactorGraph, VariableDecl};
use crate::region_graph::{Clique, Region, RegionGraph, RegionId};

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| parse_err(line, format!("bad number `{tok}`")))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>, sep: &str) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

pub fn write_model(fg: &FactorGraph) -> String {
    let mut out = String::new();
    for v in fg.variables() {
        writeln!(out, "var {} {}", v.id, v.cardinality).unwrap();
    }
    for f in fg.factors() {
        writeln!(out, "factor {} {} : {}", f.id, join(&f.scope, " "), join(&f.table, " ")).unwrap();
    }
    out
}

pub fn parse_model(text: &str) -> Result<FactorGraph> {
    let mut vars = Vec::new();
    let mut factors = Vec::new();
    for (line, l) in content_lines(text) {
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("var") => {
                let rest: Vec<&str> = toks.collect();
                if rest.len() != 2 {
                    return Err(parse_err(line, "expected `var <id> <cardinality>`"));
                }
                vars.push(VariableDecl {
                    id: num(rest[0], line)?,
                    cardinality: num(rest[1], line)?,
                });
            }
            Some("factor") => {
                let (head, table) = l["factor".len()..]
                    .split_once(':')
                    .ok_or_else(|| parse_err(line, "factor line needs `:` before the table"))?;
                let head: Vec<usize> = head.split_whitespace().map(|t| num(t, line)).collect::<Result<_>>()?;
                let (&id, scope) = head.split_first().ok_or_else(|| parse_err(line, "factor id missing"))?;
                let table = table.split_whitespace().map(|t| num(t, line)).collect::<Result<_>>()?;
                factors.push(Factor::new(id, scope.to_vec(), table));
            }
            Some(k) => return Err(parse_err(line, format!("unknown keyword `{k}`"))),
            None => unreachable!(),
        }
    }
    FactorGraph::new(vars, factors)
}

pub fn write_region_graph(rg: &RegionGraph) -> String {
    let mut out = String::new();
    for (f, s) in rg.scopes() {
        writeln!(out, "scope {f} : {}", join(s, " ")).unwrap();
    }
    for r in rg.regions() {
        let cliques = join(r.cliques.iter().map(|c| join(c.vars(), ",")), " ");
        writeln!(
            out,
            "region {} vars {} cliques {} factors {}",
            r.id,
            join(&r.vars, " "),
            cliques,
            join(&r.factors, " ")
        )
        .unwrap();
    }
    for (p, c) in rg.edges() {
        writeln!(out, "edge {p} {c}").unwrap();
    }
    out
}

pub fn parse_region_graph(text: &str) -> Result<RegionGraph> {
    let mut scopes: BTreeMap<usize, VarSet> = BTreeMap::new();
    let mut regions = Vec::new();
    let mut edges = Vec::new();
    for (line, l) in content_lines(text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks[0] {
            "scope" => {
                if toks.len() < 3 || toks[2] != ":" {
                    return Err(parse_err(line, "expected `scope <id> : <vars...>`"));
                }
                let vars = toks[3..].iter().map(|t| num(t, line)).collect::<Result<_>>()?;
                if scopes.insert(num(toks[1], line)?, vars).is_some() {
                    return Err(parse_err(line, "duplicate scope"));
                }
            }
            "region" => regions.push((line, parse_region(&toks, line)?)),
            "edge" => {
                if toks.len() != 3 {
                    return Err(parse_err(line, "expected `edge <parent> <child>`"));
                }
                edges.push((line, RegionId(num(toks[1], line)?), RegionId(num(toks[2], line)?)));
            }
            k => return Err(parse_err(line, format!("unknown keyword `{k}`"))),
        }
    }
    let mut rg = RegionGraph::new(scopes);
    for (line, r) in regions {
        rg.insert_region(r).map_err(|e| parse_err(line, e.to_string()))?;
    }
    for (line, p, c) in edges {
        rg.add_edge(p, c).map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(rg)
}

fn parse_region(toks: &[&str], line: usize) -> Result<Region> {
    if toks.len() < 2 {
        return Err(parse_err(line, "region id missing"));
    }
    let id = RegionId(num(toks[1], line)?);
    let mut sections: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut current = None;
    for &t in &toks[2..] {
        match t {
            "vars" | "cliques" | "factors" => {
                if sections.insert(t, Vec::new()).is_some() {
                    return Err(parse_err(line, format!("section `{t}` repeated")));
                }
                current = Some(t);
            }
            _ => match current {
                Some(s) => sections.get_mut(s).unwrap().push(t),
                None => return Err(parse_err(line, format!("unexpected token `{t}`"))),
            },
        }
    }
    let section = |name: &str| {
        sections
            .get(name)
            .cloned()
            .ok_or_else(|| parse_err(line, format!("region {id} lacks `{name}`")))
    };
    let vars: VarSet = section("vars")?.iter().map(|t| num(t, line)).collect::<Result<_>>()?;
    let cliques = section("cliques")?
        .iter()
        .map(|t| t.split(',').map(|v| num(v, line)).collect::<Result<VarSet>>().map(Clique))
        .collect::<Result<_>>()?;
    let factors = section("factors")?.iter().map(|t| num(t, line)).collect::<Result<_>>()?;
    Ok(Region {
        id,
        vars,
        cliques,
        factors,
    })
}

/// Graphviz rendering with each region labeled by its variables and counting
/// number.
pub fn to_dot(rg: &RegionGraph) -> Result<String> {
    let c = rg.counting_numbers()?;
    let mut out = String::from("digraph region_graph {\n  node [shape=box];\n");
    for r in rg.regions() {
        let shape = if r.is_complete() { "" } else { ", style=dashed" };
        writeln!(
            out,
            "  r{} [label=\"{}: {{{}}}\\nc = {}\"{shape}];",
            r.id,
            r.id,
            join(&r.vars, ","),
            c.get(r.id)
        )
        .unwrap();
    }
    for (p, ch) in rg.edges() {
        writeln!(out, "  r{p} -> r{ch};").unwrap();
    }
    out.push_str("}\n");
    Ok(out)
}
