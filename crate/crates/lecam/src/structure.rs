//! Combinatorial feasibility structures for the fixed-set solvers.
//!
//! Three concrete families ship: subsets of one fixed cardinality, subsets
//! within a deterministic knapsack budget, and edge sets of s-t paths in a
//! DAG. Each exposes an independent membership checker (used to verify every
//! solver output) and exhaustive enumeration for the oracles.

use std::collections::{BTreeMap, BTreeSet};

use num::Zero;
use serde::{Deserialize, Serialize};

use crate::rational::{serde_rat, serde_rat_vec, Rational};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeasibilityStructure {
    /// All subsets of size exactly k.
    Cardinality { k: usize },
    /// All subsets whose deterministic cost fits the budget; `costs[i]`
    /// belongs to item i.
    KnapsackBudget {
        #[serde(with = "serde_rat")]
        budget: Rational,
        #[serde(with = "serde_rat_vec")]
        costs: Vec<Rational>,
    },
    /// Edge sets of source→target paths; `edges[j] = (from, to, item)` and
    /// every item labels exactly one edge.
    DagPath {
        nodes: usize,
        source: usize,
        target: usize,
        edges: Vec<(usize, usize, usize)>,
    },
}

impl FeasibilityStructure {
    pub fn validate(&self, n_items: usize) -> Result<()> {
        match self {
            FeasibilityStructure::Cardinality { k } => {
                if *k > n_items {
                    return Err(Error::InvalidInput(format!(
                        "cardinality {k} exceeds item count {n_items}"
                    )));
                }
            }
            FeasibilityStructure::KnapsackBudget { costs, .. } => {
                if costs.len() != n_items {
                    return Err(Error::InvalidInput(
                        "knapsack-budget costs must cover every item".into(),
                    ));
                }
            }
            FeasibilityStructure::DagPath {
                nodes,
                source,
                target,
                edges,
            } => {
                if *source >= *nodes || *target >= *nodes {
                    return Err(Error::InvalidInput("dag endpoints out of range".into()));
                }
                let mut seen = BTreeSet::new();
                for &(u, v, item) in edges {
                    if u >= *nodes || v >= *nodes {
                        return Err(Error::InvalidInput("dag edge endpoint out of range".into()));
                    }
                    if u >= v {
                        return Err(Error::InvalidInput(
                            "dag edges must go forward in a topological numbering".into(),
                        ));
                    }
                    if item >= n_items || !seen.insert(item) {
                        return Err(Error::InvalidInput(
                            "every item must label exactly one dag edge".into(),
                        ));
                    }
                }
                if seen.len() != n_items {
                    return Err(Error::InvalidInput(
                        "every item must label exactly one dag edge".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Independent membership check on a candidate item set.
    pub fn is_feasible(&self, set: &BTreeSet<usize>) -> bool {
        match self {
            FeasibilityStructure::Cardinality { k } => set.len() == *k,
            FeasibilityStructure::KnapsackBudget { budget, costs } => {
                let total: Rational = set.iter().map(|&i| costs[i].clone()).sum();
                total <= *budget
            }
            FeasibilityStructure::DagPath {
                source,
                target,
                edges,
                ..
            } => {
                // The chosen edges must form exactly one walk source→target.
                let chosen: Vec<(usize, usize)> = edges
                    .iter()
                    .filter(|(_, _, item)| set.contains(item))
                    .map(|&(u, v, _)| (u, v))
                    .collect();
                if chosen.len() != set.len() {
                    return false; // an item not present as an edge
                }
                if chosen.is_empty() {
                    return source == target;
                }
                let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                let mut indeg: BTreeMap<usize, usize> = BTreeMap::new();
                for &(u, v) in &chosen {
                    out.entry(u).or_default().push(v);
                    *indeg.entry(v).or_insert(0) += 1;
                }
                // Walk from the source consuming each edge once.
                let mut at = *source;
                let mut used = 0;
                while let Some(nexts) = out.get_mut(&at) {
                    if nexts.is_empty() {
                        break;
                    }
                    if nexts.len() > 1 {
                        return false; // branching: not a single path
                    }
                    at = nexts.pop().unwrap();
                    used += 1;
                }
                at == *target
                    && used == chosen.len()
                    && indeg.get(source).copied().unwrap_or(0) == 0
            }
        }
    }

    /// Can the partial set `partial` be completed to a feasible set using
    /// only items from `pool`?
    pub fn extendable(&self, partial: &BTreeSet<usize>, pool: &[usize]) -> bool {
        match self {
            FeasibilityStructure::Cardinality { k } => {
                let extra: usize = pool.iter().filter(|i| !partial.contains(i)).count();
                partial.len() <= *k && partial.len() + extra >= *k
            }
            FeasibilityStructure::KnapsackBudget { budget, costs } => {
                let total: Rational = partial.iter().map(|&i| costs[i].clone()).sum();
                total <= *budget
            }
            FeasibilityStructure::DagPath {
                nodes,
                source,
                target,
                edges,
            } => {
                // Path DP over (node, subset of `partial` covered); edges
                // labeled by items outside partial ∪ pool are forbidden.
                let required: Vec<usize> = partial.iter().copied().collect();
                let allowed: BTreeSet<usize> = pool.iter().copied().collect();
                let full = (1usize << required.len()) - 1;
                let mut reach = vec![vec![false; full + 1]; *nodes];
                reach[*source][0] = true;
                // edges go forward so one pass over nodes in order suffices
                let mut by_node: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
                for &(u, v, item) in edges {
                    by_node.entry(u).or_default().push((v, item));
                }
                for u in 0..*nodes {
                    for (v, item) in by_node.get(&u).cloned().unwrap_or_default() {
                        let bit = required.iter().position(|&r| r == item);
                        for mask in 0..=full {
                            if !reach[u][mask] {
                                continue;
                            }
                            match bit {
                                Some(b) => reach[v][mask | (1 << b)] = true,
                                None if allowed.contains(&item) || partial.contains(&item) => {
                                    reach[v][mask] = true
                                }
                                None => {}
                            }
                        }
                    }
                }
                reach[*target][full]
            }
        }
    }

    /// Exhaustive enumeration of the feasible family (oracle use).
    pub fn enumerate_feasible(&self, n_items: usize, max_sets: usize) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::new();
        match self {
            FeasibilityStructure::Cardinality { k } => {
                let mut current = Vec::new();
                enumerate_combinations(n_items, *k, 0, &mut current, &mut out, max_sets)?;
            }
            FeasibilityStructure::KnapsackBudget { budget, costs } => {
                for mask in 0u64..(1u64 << n_items) {
                    let mut total = Rational::zero();
                    let mut set = Vec::new();
                    for (i, cost) in costs.iter().enumerate() {
                        if mask >> i & 1 == 1 {
                            total += cost;
                            set.push(i);
                        }
                    }
                    if total <= *budget {
                        out.push(set);
                        if out.len() > max_sets {
                            return Err(Error::ResourceCap {
                                what: "feasible sets",
                                count: out.len(),
                            });
                        }
                    }
                }
            }
            FeasibilityStructure::DagPath {
                source,
                target,
                edges,
                ..
            } => {
                let mut by_node: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
                for &(u, v, item) in edges {
                    by_node.entry(u).or_default().push((v, item));
                }
                let mut path = Vec::new();
                dfs_paths(*source, *target, &by_node, &mut path, &mut out, max_sets)?;
            }
        }
        Ok(out)
    }
}

fn enumerate_combinations(
    n: usize,
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    max_sets: usize,
) -> Result<()> {
    if current.len() == k {
        out.push(current.clone());
        if out.len() > max_sets {
            return Err(Error::ResourceCap {
                what: "feasible sets",
                count: out.len(),
            });
        }
        return Ok(());
    }
    for i in start..n {
        current.push(i);
        enumerate_combinations(n, k, i + 1, current, out, max_sets)?;
        current.pop();
    }
    Ok(())
}

fn dfs_paths(
    at: usize,
    target: usize,
    by_node: &BTreeMap<usize, Vec<(usize, usize)>>,
    path: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    max_sets: usize,
) -> Result<()> {
    if at == target {
        let mut set = path.clone();
        set.sort_unstable();
        out.push(set);
        if out.len() > max_sets {
            return Err(Error::ResourceCap {
                what: "feasible sets",
                count: out.len(),
            });
        }
        return Ok(());
    }
    for (v, item) in by_node.get(&at).cloned().unwrap_or_default() {
        path.push(item);
        dfs_paths(v, target, by_node, path, out, max_sets)?;
        path.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    #[test]
    fn cardinality_checks() {
        let s = FeasibilityStructure::Cardinality { k: 2 };
        assert!(s.is_feasible(&BTreeSet::from([0, 3])));
        assert!(!s.is_feasible(&BTreeSet::from([0])));
        assert!(s.extendable(&BTreeSet::from([0]), &[1, 2]));
        assert!(!s.extendable(&BTreeSet::from([0, 1, 2]), &[]));
        assert!(!s.extendable(&BTreeSet::new(), &[]));
        assert_eq!(s.enumerate_feasible(4, 100).unwrap().len(), 6);
    }

    #[test]
    fn budget_checks() {
        let s = FeasibilityStructure::KnapsackBudget {
            budget: rat_int(2),
            costs: vec![rat_int(1), rat_int(1), rat(3, 2)],
        };
        assert!(s.is_feasible(&BTreeSet::from([0, 1])));
        assert!(!s.is_feasible(&BTreeSet::from([1, 2])));
        // all subsets of cost ≤ 2: {}, {0}, {1}, {2}, {0,1}
        assert_eq!(s.enumerate_feasible(3, 100).unwrap().len(), 5);
    }

    #[test]
    fn dag_path_checks() {
        // 0 → 1 → 2 plus a skip edge 0 → 2; items 0,1,2
        let s = FeasibilityStructure::DagPath {
            nodes: 3,
            source: 0,
            target: 2,
            edges: vec![(0, 1, 0), (1, 2, 1), (0, 2, 2)],
        };
        s.validate(3).unwrap();
        assert!(s.is_feasible(&BTreeSet::from([0, 1])));
        assert!(s.is_feasible(&BTreeSet::from([2])));
        assert!(!s.is_feasible(&BTreeSet::from([0])));
        assert!(!s.is_feasible(&BTreeSet::from([0, 2])));
        let fam = s.enumerate_feasible(3, 100).unwrap();
        assert_eq!(fam.len(), 2);
        assert!(s.extendable(&BTreeSet::from([0]), &[1, 2]));
        assert!(!s.extendable(&BTreeSet::from([0, 2]), &[1]));
    }
}
