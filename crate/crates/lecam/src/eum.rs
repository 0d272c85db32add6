//! Expected utility maximization over a fixed-set structure: enumerate heavy
//! item sets, summarize light sets by signatures through a forward DP, and
//! pick the feasible union with the best exact expected utility.
//!
//! The signature DP realizes the "find a light set with this exact
//! signature" step constructively: every reachable signature comes with a
//! witness set, so candidate unions are evaluated by exact convolution. The
//! monotone variant keeps only coordinatewise-minimal signatures and accepts
//! componentwise-≤ matches.

use std::collections::{BTreeMap, BTreeSet};

use num::Zero;

use crate::discretize::{discretize_all, DiscretizationParams, DiscretizedItem, RawItem};
use crate::dist::{DiscreteDistribution, RawDist};
use crate::rational::Rational;
use crate::signature::{item_signature, Signature};
use crate::structure::FeasibilityStructure;
use crate::utility::{expected_utility_grid, expected_utility_raw, UtilityFunction};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EumInstance {
    pub raw_items: Vec<RawItem>,
    pub items: Vec<DiscretizedItem>,
    pub structure: FeasibilityStructure,
    pub utility: UtilityFunction,
    pub params: DiscretizationParams,
}

impl EumInstance {
    pub fn new(
        raw_items: Vec<RawItem>,
        structure: FeasibilityStructure,
        utility: UtilityFunction,
        params: DiscretizationParams,
    ) -> Result<Self> {
        structure.validate(raw_items.len())?;
        let items = discretize_all(&raw_items, &params)?;
        Ok(EumInstance {
            raw_items,
            items,
            structure,
            utility,
            params,
        })
    }

    /// Exact `E[μ(X(S))]` via full convolution; `use_discretized` switches
    /// between the discretized laws X̃ and the original laws X.
    pub fn expected_utility(&self, set: &[usize], use_discretized: bool) -> Rational {
        let capacity = &self.params.grid.capacity;
        if use_discretized {
            let dists: Vec<&DiscreteDistribution<Rational>> =
                set.iter().map(|&i| &self.items[i].size_dist).collect();
            let cap = self.params.grid.capacity_index();
            let sum = crate::dist::convolve_all(&dists, &self.params.grid, cap)
                .expect("instance items share one grid");
            expected_utility_grid(&sum, &self.utility, capacity)
        } else {
            let mut raw = RawDist::point(capacity.clone());
            for &i in set {
                raw.convolve_law(&self.raw_items[i].size_law());
            }
            expected_utility_raw(&raw, &self.utility, capacity)
        }
    }
}

/// Solver knobs. The heavy budget is the `E[X̃(H)] < 3/ε` enumeration cap.
#[derive(Debug, Clone)]
pub struct EumConfig {
    pub heavy_budget: Rational,
    pub max_heavy_set_size: usize,
    pub max_heavy_sets: usize,
    pub max_states: usize,
    /// Coordinatewise slack accepted by the monotone light-set search
    /// (ε⁶ in the single-ε parameterization).
    pub mono_slack: Rational,
}

impl Default for EumConfig {
    fn default() -> Self {
        EumConfig {
            heavy_budget: crate::rational::rat_int(12),
            max_heavy_set_size: 6,
            max_heavy_sets: 100_000,
            max_states: 1_000_000,
            mono_slack: Rational::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EumSolution {
    /// Item indices, sorted ascending.
    pub chosen: Vec<usize>,
    pub chosen_ids: Vec<String>,
    pub utility_discretized: Rational,
    pub utility_original: Rational,
}

/// Partition by expected discretized size: strictly above the cutoff is
/// heavy, on the boundary is light.
pub fn split_heavy_light(
    items: &[DiscretizedItem],
    params: &DiscretizationParams,
) -> (Vec<usize>, Vec<usize>) {
    let mut heavy = Vec::new();
    let mut light = Vec::new();
    for (i, it) in items.iter().enumerate() {
        if it.expected_size > params.heavy_cutoff_eum {
            heavy.push(i);
        } else {
            light.push(i);
        }
    }
    (heavy, light)
}

/// Every heavy subset of cardinality ≤ `cfg.max_heavy_set_size` with
/// `E[X̃(H)] < budget` (∅ always qualifies) that is extendable within the
/// structure. Errors with a resource cap when the count explodes.
pub fn enumerate_heavy_sets(
    heavy: &[usize],
    items: &[DiscretizedItem],
    structure: &FeasibilityStructure,
    light: &[usize],
    budget: &Rational,
    cfg: &EumConfig,
) -> Result<Vec<BTreeSet<usize>>> {
    let mut out = Vec::new();
    let mut current = BTreeSet::new();
    let mut mean = Rational::zero();
    rec_heavy(
        heavy, items, structure, light, budget, cfg, 0, &mut current, &mut mean, &mut out,
    )?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn rec_heavy(
    heavy: &[usize],
    items: &[DiscretizedItem],
    structure: &FeasibilityStructure,
    light: &[usize],
    budget: &Rational,
    cfg: &EumConfig,
    start: usize,
    current: &mut BTreeSet<usize>,
    mean: &mut Rational,
    out: &mut Vec<BTreeSet<usize>>,
) -> Result<()> {
    let within_budget = current.is_empty() || &*mean < budget;
    if within_budget && structure.extendable(current, light) {
        out.push(current.clone());
        if out.len() > cfg.max_heavy_sets {
            return Err(Error::ResourceCap {
                what: "heavy sets",
                count: out.len(),
            });
        }
    }
    if current.len() >= cfg.max_heavy_set_size {
        return Ok(());
    }
    for pos in start..heavy.len() {
        let idx = heavy[pos];
        let m = items[idx].expected_size.clone();
        let new_mean = &*mean + &m;
        if new_mean >= *budget {
            continue; // budget is monotone in the set, safe to skip this item
        }
        current.insert(idx);
        *mean = new_mean;
        rec_heavy(
            heavy, items, structure, light, budget, cfg, pos + 1, current, mean, out,
        )?;
        current.remove(&idx);
        *mean -= &m;
    }
    Ok(())
}

type SigKey = Vec<u64>;

/// Forward DP over light items: for every reachable signature of a light set
/// L with H ∪ L feasible, one witness L. States are keyed by the exact
/// integer signature (plus the structure's own state during the sweep).
pub fn reachable_signature_dp(
    items: &[DiscretizedItem],
    light: &[usize],
    structure: &FeasibilityStructure,
    heavy: &BTreeSet<usize>,
    q: &Rational,
    max_states: usize,
) -> Result<BTreeMap<Signature, Vec<usize>>> {
    let grid = if let Some(it) = items.first() {
        it.size_dist.grid().clone()
    } else {
        return Ok(BTreeMap::new());
    };
    let dims = grid.len() - 1;
    let sig_of = |i: usize| -> SigKey { item_signature(&items[i], q).counts().to_vec() };
    let mut completed: BTreeMap<SigKey, Vec<usize>> = BTreeMap::new();

    match structure {
        FeasibilityStructure::Cardinality { k } => {
            if heavy.len() > *k || k - heavy.len() > light.len() {
                return Ok(BTreeMap::new());
            }
            let need = k - heavy.len();
            let mut states: BTreeMap<(usize, SigKey), Vec<usize>> = BTreeMap::new();
            states.insert((0, vec![0; dims]), Vec::new());
            for &i in light {
                let sig = sig_of(i);
                let snapshot: Vec<((usize, SigKey), Vec<usize>)> = states
                    .iter()
                    .filter(|((c, _), _)| *c < need)
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                for ((count, key), witness) in snapshot {
                    let new_key = add_keys(&key, &sig);
                    let entry = (count + 1, new_key);
                    states.entry(entry).or_insert_with(|| {
                        let mut w = witness.clone();
                        w.push(i);
                        w
                    });
                }
                check_states(states.len(), max_states)?;
            }
            for ((count, key), witness) in states {
                if count == need {
                    completed.entry(key).or_insert(witness);
                }
            }
        }
        FeasibilityStructure::KnapsackBudget { budget, costs } => {
            let spent_on_heavy: Rational = heavy.iter().map(|&i| costs[i].clone()).sum();
            if spent_on_heavy > *budget {
                return Ok(BTreeMap::new());
            }
            let remaining = budget - spent_on_heavy;
            let mut states: BTreeMap<(Rational, SigKey), Vec<usize>> = BTreeMap::new();
            states.insert((Rational::zero(), vec![0; dims]), Vec::new());
            for &i in light {
                let sig = sig_of(i);
                let cost = costs[i].clone();
                let snapshot: Vec<((Rational, SigKey), Vec<usize>)> = states
                    .iter()
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                for ((spent, key), witness) in snapshot {
                    let new_spent = &spent + &cost;
                    if new_spent > remaining {
                        continue;
                    }
                    let new_key = add_keys(&key, &sig);
                    states.entry((new_spent, new_key)).or_insert_with(|| {
                        let mut w = witness.clone();
                        w.push(i);
                        w
                    });
                }
                check_states(states.len(), max_states)?;
            }
            for ((_, key), witness) in states {
                completed.entry(key).or_insert(witness);
            }
        }
        FeasibilityStructure::DagPath {
            nodes,
            source,
            target,
            edges,
        } => {
            let light_set: BTreeSet<usize> = light.iter().copied().collect();
            let required: Vec<usize> = heavy.iter().copied().collect();
            let full: u32 = (1u32 << required.len()) - 1;
            let mut by_node: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
            for &(u, v, item) in edges {
                by_node.entry(u).or_default().push((v, item));
            }
            let mut states: BTreeMap<(usize, u32, SigKey), Vec<usize>> = BTreeMap::new();
            states.insert((*source, 0, vec![0; dims]), Vec::new());
            for u in 0..*nodes {
                let at_u: Vec<((usize, u32, SigKey), Vec<usize>)> = states
                    .range((u, 0, vec![])..(u + 1, 0, vec![]))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                for ((_, mask, key), witness) in at_u {
                    for &(v, item) in by_node.get(&u).into_iter().flatten() {
                        if let Some(bit) = required.iter().position(|&r| r == item) {
                            let new_mask = mask | (1 << bit);
                            states
                                .entry((v, new_mask, key.clone()))
                                .or_insert_with(|| witness.clone());
                        } else if light_set.contains(&item) {
                            let new_key = add_keys(&key, &sig_of(item));
                            states.entry((v, mask, new_key)).or_insert_with(|| {
                                let mut w = witness.clone();
                                w.push(item);
                                w
                            });
                        }
                    }
                }
                check_states(states.len(), max_states)?;
            }
            for ((node, mask, key), witness) in states {
                if node == *target && mask == full {
                    completed.entry(key).or_insert(witness);
                }
            }
        }
    }

    Ok(completed
        .into_iter()
        .map(|(key, mut witness)| {
            witness.sort_unstable();
            (Signature::from_counts(grid.clone(), q.clone(), key), witness)
        })
        .collect())
}

/// Monotone variant: the same sweep, but only coordinatewise-minimal
/// signatures survive per structure state, and the result is the minimal
/// frontier of completed light sets.
pub fn reachable_signature_dp_mono(
    items: &[DiscretizedItem],
    light: &[usize],
    structure: &FeasibilityStructure,
    heavy: &BTreeSet<usize>,
    q: &Rational,
    max_states: usize,
) -> Result<Vec<(Signature, Vec<usize>)>> {
    let all = reachable_signature_dp(items, light, structure, heavy, q, max_states)?;
    // Pareto-reduce: keep only signatures with no other signature ≤ them.
    let entries: Vec<(Signature, Vec<usize>)> = all.into_iter().collect();
    let mut keep = Vec::new();
    'outer: for (i, (sig, witness)) in entries.iter().enumerate() {
        for (j, (other, _)) in entries.iter().enumerate() {
            if i != j {
                let le = other.leq(sig)?;
                let ge = sig.leq(other)?;
                if le && (!ge || j < i) {
                    continue 'outer; // dominated (ties keep the first)
                }
            }
        }
        keep.push((sig.clone(), witness.clone()));
    }
    Ok(keep)
}

fn add_keys(a: &SigKey, b: &SigKey) -> SigKey {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn check_states(len: usize, max: usize) -> Result<()> {
    if len > max {
        Err(Error::ResourceCap {
            what: "signature DP states",
            count: len,
        })
    } else {
        Ok(())
    }
}

/// Algorithm: enumerate heavy sets × reachable light signatures, evaluate
/// `E[μ(X̃(H∪L))]` exactly per witness, return the argmax (ties broken by
/// lexicographically smallest id set).
pub fn solve_eum(instance: &EumInstance, cfg: &EumConfig) -> Result<EumSolution> {
    solve_eum_inner(instance, cfg, false)
}

/// Monotone variant: nonincreasing utility required; light-set search
/// accepts coordinatewise-dominated signatures via the pruned frontier.
pub fn solve_eum_mono(instance: &EumInstance, cfg: &EumConfig) -> Result<EumSolution> {
    if !instance.utility.is_monotone_nonincreasing() {
        return Err(Error::NonMonotoneUtility);
    }
    solve_eum_inner(instance, cfg, true)
}

fn solve_eum_inner(instance: &EumInstance, cfg: &EumConfig, mono: bool) -> Result<EumSolution> {
    let (heavy, light) = split_heavy_light(&instance.items, &instance.params);
    let heavy_sets = enumerate_heavy_sets(
        &heavy,
        &instance.items,
        &instance.structure,
        &light,
        &cfg.heavy_budget,
        cfg,
    )?;
    let q = &instance.params.prob_granularity;
    let mut best: Option<(Rational, Vec<usize>, Vec<String>)> = None;
    for h in &heavy_sets {
        let candidates: Vec<Vec<usize>> = if mono {
            reachable_signature_dp_mono(
                &instance.items,
                &light,
                &instance.structure,
                h,
                q,
                cfg.max_states,
            )?
            .into_iter()
            .map(|(_, w)| w)
            .collect()
        } else {
            reachable_signature_dp(
                &instance.items,
                &light,
                &instance.structure,
                h,
                q,
                cfg.max_states,
            )?
            .into_values()
            .collect()
        };
        for witness in candidates {
            let mut set: Vec<usize> = h.iter().copied().chain(witness.iter().copied()).collect();
            set.sort_unstable();
            let as_set: BTreeSet<usize> = set.iter().copied().collect();
            if !instance.structure.is_feasible(&as_set) {
                continue;
            }
            let val = instance.expected_utility(&set, true);
            let ids: Vec<String> = set.iter().map(|&i| instance.items[i].id.clone()).collect();
            let better = match &best {
                None => true,
                Some((bv, _, bids)) => val > *bv || (val == *bv && ids < *bids),
            };
            if better {
                best = Some((val, set, ids));
            }
        }
    }
    let (utility_discretized, chosen, chosen_ids) = best.ok_or_else(|| {
        Error::Infeasible("no feasible heavy/light combination found".into())
    })?;
    let utility_original = instance.expected_utility(&chosen, false);
    Ok(EumSolution {
        chosen,
        chosen_ids,
        utility_discretized,
        utility_original,
    })
}
