//! Classical baselines, metrics, and post-processing used to evaluate
//! trained networks: saturation-based greedy coloring, lowest-degree greedy
//! independent sets, stochastic local search for binary Max-SAT, induced-edge
//! repair, cut quality relative to the asymptotic optimum, and the
//! colorability classification protocol.

use crate::csp::{ConstraintLanguage, HardAssignment, Instance};
use crate::model::{boosted_solve, ModelConfig, ModelError, Objective, Parameters, SolveOptions};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Cut quality on a d-regular n-vertex graph: (z/n - d/4) / sqrt(d/4).
/// Approaches ~0.7632 at the asymptotic optimum; larger is better.
pub fn p_value(cut_size: usize, num_vars: usize, degree: usize) -> f64 {
    assert!(num_vars > 0 && degree > 0);
    let quarter = degree as f64 / 4.0;
    (cut_size as f64 / num_vars as f64 - quarter) / quarter.sqrt()
}

/// A proper coloring and the number of colors it uses.
#[derive(Clone, Debug)]
pub struct Coloring {
    pub assignment: HardAssignment,
    pub colors_used: usize,
}

#[derive(Debug, thiserror::Error)]
#[error("coloring needs more than the allowed {max_colors} colors (stuck at vertex {vertex})")]
pub struct ColorBudgetExceeded {
    pub max_colors: usize,
    pub vertex: usize,
}

/// Greedy coloring by maximum saturation degree.
///
/// Ties break by degree among uncolored neighbors, then by lowest index;
/// each vertex takes the smallest feasible color. With `max_colors` set the
/// run fails loudly instead of exceeding the budget, which turns the greedy
/// into a (one-sided) decision procedure.
pub fn dsatur(graph: &Instance, max_colors: Option<usize>) -> Result<Coloring, ColorBudgetExceeded> {
    let n = graph.num_vars();
    let adj = distinct_adjacency(graph);
    let mut color: Vec<Option<usize>> = vec![None; n];
    let mut neighbor_colors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut uncolored_degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut colors_used = 0usize;

    for _ in 0..n {
        let mut pick = usize::MAX;
        for v in 0..n {
            if color[v].is_some() {
                continue;
            }
            if pick == usize::MAX {
                pick = v;
                continue;
            }
            let (sat_v, sat_p) = (neighbor_colors[v].len(), neighbor_colors[pick].len());
            if sat_v > sat_p
                || (sat_v == sat_p && uncolored_degree[v] > uncolored_degree[pick])
            {
                pick = v;
            }
        }
        let mut chosen = 0;
        while neighbor_colors[pick].contains(&chosen) {
            chosen += 1;
        }
        if let Some(limit) = max_colors {
            if chosen >= limit {
                return Err(ColorBudgetExceeded {
                    max_colors: limit,
                    vertex: pick,
                });
            }
        }
        color[pick] = Some(chosen);
        colors_used = colors_used.max(chosen + 1);
        for &w in &adj[pick] {
            neighbor_colors[w].insert(chosen);
            uncolored_degree[w] = uncolored_degree[w].saturating_sub(1);
        }
    }

    Ok(Coloring {
        assignment: HardAssignment::new(color.into_iter().map(|c| c.unwrap_or(0)).collect()),
        colors_used,
    })
}

/// Greedy independent set: repeatedly take the vertex of lowest remaining
/// degree (ties to the lowest index) and delete its closed neighborhood.
pub fn greedy_is(graph: &Instance) -> Vec<usize> {
    let n = graph.num_vars();
    let adj = distinct_adjacency(graph);
    let mut alive = vec![true; n];
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut remaining = n;
    let mut set = Vec::new();

    while remaining > 0 {
        let mut pick = usize::MAX;
        for v in 0..n {
            if alive[v] && (pick == usize::MAX || degree[v] < degree[pick]) {
                pick = v;
            }
        }
        set.push(pick);
        let mut removed = vec![pick];
        removed.extend(adj[pick].iter().copied().filter(|&w| alive[w]));
        for &w in &removed {
            if alive[w] {
                alive[w] = false;
                remaining -= 1;
                for &x in &adj[w] {
                    if alive[x] {
                        degree[x] = degree[x].saturating_sub(1);
                    }
                }
            }
        }
    }
    set.sort_unstable();
    set
}

/// Drop members until the set is independent: repeatedly remove the member
/// incident to the most induced edges (ties to the higher index).
pub fn is_repair(graph: &Instance, set: &[usize]) -> Vec<usize> {
    let n = graph.num_vars();
    let mut member = vec![false; n];
    for &v in set {
        member[v] = true;
    }
    let adj = distinct_adjacency(graph);
    let mut conflicts = vec![0usize; n];
    for v in 0..n {
        if member[v] {
            conflicts[v] = adj[v].iter().filter(|&&w| member[w]).count();
        }
    }
    loop {
        let mut worst = usize::MAX;
        for v in 0..n {
            if member[v]
                && conflicts[v] > 0
                && (worst == usize::MAX
                    || conflicts[v] > conflicts[worst]
                    || (conflicts[v] == conflicts[worst] && v > worst))
            {
                worst = v;
            }
        }
        if worst == usize::MAX {
            break;
        }
        member[worst] = false;
        for &w in &adj[worst] {
            if member[w] {
                conflicts[w] -= 1;
            }
        }
    }
    (0..n).filter(|&v| member[v]).collect()
}

/// Stochastic local search over a binary domain, WalkSAT style: pick an
/// unsatisfied constraint, then flip either a random endpoint (with
/// probability `noise`) or the endpoint whose flip satisfies the most
/// constraints. Returns the best assignment seen.
///
/// This is a stand-in for external local-search baselines, useful for
/// relative comparisons only; it does not reproduce any particular solver's
/// noise schedule.
pub fn local_search_maxsat(
    inst: &Instance,
    max_flips: usize,
    noise: f64,
    seed: u64,
) -> HardAssignment {
    assert_eq!(inst.domain_size(), 2, "local search works on binary domains");
    let n = inst.num_vars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2usize)).collect();

    let rels = inst.language().relations();
    let constraints = inst.constraints();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, c) in constraints.iter().enumerate() {
        incident[c.u].push(i);
        incident[c.v].push(i);
    }
    let sat =
        |values: &[usize], ci: usize| rels[constraints[ci].rel].contains(values[constraints[ci].u], values[constraints[ci].v]);

    let mut unsat: Vec<usize> = (0..constraints.len()).filter(|&i| !sat(&values, i)).collect();
    let mut best_values = values.clone();
    let mut best_unsat = unsat.len();

    for _ in 0..max_flips {
        if unsat.is_empty() {
            break;
        }
        let ci = unsat[rng.gen_range(0..unsat.len())];
        let c = constraints[ci];
        let flip_var = if rng.gen_bool(noise) {
            if rng.gen_bool(0.5) {
                c.u
            } else {
                c.v
            }
        } else {
            // Greedy: the endpoint whose flip leaves fewer broken constraints.
            let delta = |var: usize, values: &mut Vec<usize>| -> isize {
                let mut change = 0isize;
                values[var] = 1 - values[var];
                for &i in &incident[var] {
                    let now = sat(values, i);
                    let before = {
                        values[var] = 1 - values[var];
                        let b = sat(values, i);
                        values[var] = 1 - values[var];
                        b
                    };
                    change += now as isize - before as isize;
                }
                values[var] = 1 - values[var];
                change
            };
            if delta(c.u, &mut values) >= delta(c.v, &mut values) {
                c.u
            } else {
                c.v
            }
        };
        values[flip_var] = 1 - values[flip_var];
        // Rebuild satisfaction of the touched constraints.
        unsat.retain(|&i| !sat(&values, i));
        for &i in &incident[flip_var] {
            if !sat(&values, i) && !unsat.contains(&i) {
                unsat.push(i);
            }
        }
        if unsat.len() < best_unsat {
            best_unsat = unsat.len();
            best_values = values.clone();
        }
    }
    HardAssignment::new(best_values)
}

/// Classify colorability by whether boosted inference finds a conflict-free
/// coloring. A positive answer always carries a verified witness, so false
/// positives cannot occur.
pub fn classify_coloring<S: Scalar>(
    params: &Parameters<S>,
    cfg: &ModelConfig,
    graph: &Instance,
    opts: &SolveOptions,
) -> Result<Option<HardAssignment>, ModelError> {
    let result = boosted_solve(params, cfg, graph, opts)?;
    if result.best_satisfied == graph.num_constraints() {
        debug_assert_eq!(graph.count_satisfied(&result.best).unwrap(), graph.num_constraints());
        Ok(Some(result.best))
    } else {
        Ok(None)
    }
}

/// Try models of ascending domain size until one produces a conflict-free
/// coloring; returns the winning color count and its witness.
pub fn chromatic_sweep<S: Scalar>(
    models: &[(usize, ModelConfig, Parameters<S>)],
    edges: &[(usize, usize)],
    num_vars: usize,
    opts: &SolveOptions,
) -> Result<Option<(usize, HardAssignment)>, ModelError> {
    assert!(!models.is_empty(), "sweep needs at least one model");
    let mut ordered: Vec<&(usize, ModelConfig, Parameters<S>)> = models.iter().collect();
    ordered.sort_by_key(|(colors, _, _)| *colors);
    for (colors, cfg, params) in ordered {
        let language = ConstraintLanguage::coloring(*colors);
        let inst = Instance::from_edges(language, num_vars, edges)?;
        if let Some(witness) = classify_coloring(params, cfg, &inst, opts)? {
            return Ok(Some((*colors, witness)));
        }
    }
    Ok(None)
}

/// Per-instance evaluation record; `objective` is problem-specific (cut
/// size, set size, colors used, satisfied clauses).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalRecord {
    pub name: String,
    pub num_vars: usize,
    pub num_constraints: usize,
    pub satisfied: usize,
    pub fraction: f64,
    pub objective: f64,
    pub wall_time_ms: f64,
    /// Baseline objective values keyed by baseline name, in request order.
    pub baselines: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvalAggregate {
    pub instances: usize,
    pub mean_fraction: f64,
    pub mean_objective: f64,
    pub stddev_objective: f64,
    pub mean_wall_time_ms: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn aggregate(&self) -> EvalAggregate {
        let n = self.records.len();
        if n == 0 {
            return EvalAggregate::default();
        }
        let count = n as f64;
        let mean_fraction = self.records.iter().map(|r| r.fraction).sum::<f64>() / count;
        let mean_objective = self.records.iter().map(|r| r.objective).sum::<f64>() / count;
        let var = self
            .records
            .iter()
            .map(|r| (r.objective - mean_objective).powi(2))
            .sum::<f64>()
            / count;
        let mean_wall_time_ms = self.records.iter().map(|r| r.wall_time_ms).sum::<f64>() / count;
        EvalAggregate {
            instances: n,
            mean_fraction,
            mean_objective,
            stddev_objective: var.sqrt(),
            mean_wall_time_ms,
        }
    }
}

/// Adjacency with duplicate edges collapsed; the combinatorial baselines
/// operate on the simple graph.
fn distinct_adjacency(graph: &Instance) -> Vec<Vec<usize>> {
    let n = graph.num_vars();
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for c in graph.constraints() {
        sets[c.u].insert(c.v);
        sets[c.v].insert(c.u);
    }
    sets.into_iter().map(|s| s.into_iter().collect()).collect()
}
