//! Exact brute-force baselines for every solver, valid on small instances:
//! exhaustive set enumeration for utility maximization, memoized adaptive
//! DPs for knapsack and online selection, subset-partition DP for bin
//! packing, value iteration for the unlimited-copy problem, and Monte Carlo
//! policy evaluation.

use std::collections::HashMap;

use num::{One, Zero};
use rand::Rng;

use crate::discretize::DiscretizedItem;
use crate::dist::RawDist;
use crate::eum::EumInstance;
use crate::policy::{BlockTree, PolicyTree};
use crate::rational::{rat_to_f64, Rational};
use crate::sk::ItemGroup;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct OracleBudget {
    pub max_subsets: usize,
    pub max_states: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_subsets: 2_000_000,
            max_states: 5_000_000,
            mc_samples: 100_000,
            seed: 0,
        }
    }
}

/// Exhaustive maximizer of `E[μ(X(S))]` over the feasible family; exact
/// convolution per set. Errors when the family is empty or too large.
pub fn brute_force_eum(
    instance: &EumInstance,
    use_discretized: bool,
    budget: &OracleBudget,
) -> Result<(Vec<usize>, Rational)> {
    let family = instance
        .structure
        .enumerate_feasible(instance.items.len(), budget.max_subsets)?;
    if family.is_empty() {
        return Err(Error::Infeasible("empty feasible family".into()));
    }
    let mut best: Option<(Rational, Vec<usize>)> = None;
    for set in family {
        let val = instance.expected_utility(&set, use_discretized);
        let better = match &best {
            None => true,
            Some((bv, bs)) => val > *bv || (val == *bv && set < *bs),
        };
        if better {
            best = Some((val, set));
        }
    }
    let (value, set) = best.unwrap();
    Ok((set, value))
}

/// Exhaustive maximizer of the original-law threshold probability
/// `Pr[X(S) ≤ β]` (the step objective behind the χ̃ surrogate).
pub fn brute_force_tpm(
    instance: &EumInstance,
    beta: &Rational,
    budget: &OracleBudget,
) -> Result<(Vec<usize>, Rational)> {
    let family = instance
        .structure
        .enumerate_feasible(instance.items.len(), budget.max_subsets)?;
    if family.is_empty() {
        return Err(Error::Infeasible("empty feasible family".into()));
    }
    let fold = instance.params.grid.max_size.clone();
    let mut best: Option<(Rational, Vec<usize>)> = None;
    for set in family {
        let mut dist = RawDist::point(fold.clone());
        for &i in &set {
            dist.convolve_law(&instance.raw_items[i].size_law());
        }
        let val = dist.threshold_prob(beta);
        let better = match &best {
            None => true,
            Some((bv, bs)) => val > *bv || (val == *bv && set < *bs),
        };
        if better {
            best = Some((val, set));
        }
    }
    let (value, set) = best.unwrap();
    Ok((set, value))
}

/// Exact adaptive optimum on the discretized instance: memoized value of
/// (available groups, remaining grid capacity) with a stop action, packing
/// at most one member per group. The capacity multiplier `relax` widens the
/// knapsack to (1+relax)·C before flooring onto the grid.
pub fn brute_force_adaptive(
    items: &[DiscretizedItem],
    groups: &[ItemGroup],
    capacity: &Rational,
    relax: &Rational,
    budget: &OracleBudget,
) -> Result<Rational> {
    if groups.len() > 20 {
        return Err(Error::ResourceCap {
            what: "oracle groups",
            count: groups.len(),
        });
    }
    let grid = match items.first() {
        Some(it) => it.size_dist.grid().clone(),
        None => return Ok(Rational::zero()),
    };
    let eff = capacity * (Rational::one() + relax);
    let max_units = num::ToPrimitive::to_usize(&(&eff / &grid.step).floor().to_integer())
        .unwrap_or(0)
        .min(grid.top_index());
    let state_bound = (1usize << groups.len()).saturating_mul(max_units + 1);
    if state_bound > budget.max_states {
        return Err(Error::ResourceCap {
            what: "oracle adaptive states",
            count: state_bound,
        });
    }
    let mut memo: HashMap<(u32, usize), Rational> = HashMap::new();
    Ok(adaptive_value(
        items,
        groups,
        (1u32 << groups.len()) - 1,
        max_units,
        &mut memo,
    ))
}

fn adaptive_value(
    items: &[DiscretizedItem],
    groups: &[ItemGroup],
    mask: u32,
    rem: usize,
    memo: &mut HashMap<(u32, usize), Rational>,
) -> Rational {
    if mask == 0 {
        return Rational::zero();
    }
    if let Some(v) = memo.get(&(mask, rem)) {
        return v.clone();
    }
    let mut best = Rational::zero(); // stopping is always allowed
    for (gi, group) in groups.iter().enumerate() {
        if mask >> gi & 1 == 0 {
            continue;
        }
        let next_mask = mask & !(1 << gi);
        for &m in &group.members {
            let it = &items[m];
            let mut val = Rational::zero();
            for (s, pi) in it.size_dist.support() {
                if s <= rem {
                    val += it.profit_at(s);
                    let cont = adaptive_value(items, groups, next_mask, rem - s, memo);
                    if !cont.is_zero() {
                        val += pi * cont;
                    }
                }
            }
            if val > best {
                best = val;
            }
        }
    }
    memo.insert((mask, rem), best.clone());
    best
}

/// Unmemoized reference recursion (bit-for-bit cross-check of the memo DP).
pub fn brute_force_adaptive_plain(
    items: &[DiscretizedItem],
    groups: &[ItemGroup],
    capacity: &Rational,
) -> Rational {
    let grid = match items.first() {
        Some(it) => it.size_dist.grid().clone(),
        None => return Rational::zero(),
    };
    let max_units = num::ToPrimitive::to_usize(&(capacity / &grid.step).floor().to_integer())
        .unwrap_or(0)
        .min(grid.top_index());
    fn rec(items: &[DiscretizedItem], groups: &[ItemGroup], mask: u32, rem: usize) -> Rational {
        let mut best = Rational::zero();
        for (gi, group) in groups.iter().enumerate() {
            if mask >> gi & 1 == 0 {
                continue;
            }
            for &m in &group.members {
                let it = &items[m];
                let mut val = Rational::zero();
                for (s, pi) in it.size_dist.support() {
                    if s <= rem {
                        val += it.profit_at(s);
                        val += pi * rec(items, groups, mask & !(1 << gi), rem - s);
                    }
                }
                if val > best {
                    best = val;
                }
            }
        }
        best
    }
    rec(items, groups, (1u32 << groups.len()) - 1, max_units)
}

/// Minimum bin count such that every bin's exact overflow probability at
/// `capacity·(1+cap_relax)` stays at most p; subset-partition DP over masks.
/// `None` when some item alone is infeasible.
pub fn brute_force_binpacking(
    items: &[DiscretizedItem],
    capacity: &Rational,
    p: &Rational,
    cap_relax: &Rational,
    budget: &OracleBudget,
) -> Result<Option<usize>> {
    let n = items.len();
    if n == 0 {
        return Ok(Some(0));
    }
    if n > 16 {
        return Err(Error::ResourceCap {
            what: "oracle bin-packing items",
            count: n,
        });
    }
    if (1usize << n) > budget.max_states {
        return Err(Error::ResourceCap {
            what: "oracle bin-packing states",
            count: 1 << n,
        });
    }
    let grid = items[0].size_dist.grid().clone();
    let eff = capacity * (Rational::one() + cap_relax);
    let full = (1usize << n) - 1;
    let mut feasible = vec![false; full + 1];
    for (mask, slot) in feasible.iter_mut().enumerate().skip(1) {
        let bin: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        *slot = crate::sbp::exact_overflow(items, &bin, &grid, &eff) <= *p;
    }
    for i in 0..n {
        if !feasible[1 << i] {
            return Ok(None);
        }
    }
    let mut bins = vec![usize::MAX; full + 1];
    bins[0] = 0;
    for mask in 1..=full {
        // iterate submasks containing the lowest set bit (canonical part)
        let low = mask & mask.wrapping_neg();
        let mut sub = mask;
        let mut best = usize::MAX;
        while sub > 0 {
            if sub & low != 0 && feasible[sub] && bins[mask ^ sub] != usize::MAX {
                best = best.min(1 + bins[mask ^ sub]);
            }
            sub = (sub - 1) & mask;
        }
        bins[mask] = best;
    }
    Ok((bins[full] != usize::MAX).then_some(bins[full]))
}

/// Simulates an adaptive policy tree on the discretized laws; returns the
/// mean collected profit and a 95% CI.
pub fn mc_policy_value<R: Rng>(
    tree: &PolicyTree,
    items: &[DiscretizedItem],
    capacity: &Rational,
    samples: usize,
    rng: &mut R,
) -> (f64, (f64, f64)) {
    assert!(samples >= 1);
    let step = items
        .first()
        .map(|i| i.size_dist.grid().step.clone())
        .unwrap_or_else(Rational::one);
    let max_units =
        num::ToPrimitive::to_usize(&(capacity / &step).floor().to_integer()).unwrap_or(usize::MAX);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..samples {
        let mut profit = 0.0;
        let mut node = tree;
        let mut used = 0usize;
        while let PolicyTree::Insert { item, children } = node {
            let it = &items[*item];
            let s = it.size_dist.sample(rng);
            if used + s > max_units {
                break;
            }
            // conditional expected profit at this size
            let pi = it.size_dist.mass_at(s);
            profit += rat_to_f64(&(it.profit_at(s) / pi));
            used += s;
            match children.get(&s) {
                Some(child) => node = child,
                None => break,
            }
        }
        sum += profit;
        sumsq += profit * profit;
    }
    let mean = sum / samples as f64;
    let var = (sumsq / samples as f64 - mean * mean).max(0.0);
    let half = 1.96 * (var / samples as f64).sqrt();
    (mean, (mean - half, mean + half))
}

/// Simulates a block-adaptive tree on the discretized laws.
pub fn mc_block_value<R: Rng>(
    tree: &BlockTree,
    items: &[DiscretizedItem],
    capacity: &Rational,
    samples: usize,
    rng: &mut R,
) -> (f64, (f64, f64)) {
    assert!(samples >= 1);
    let step = items
        .first()
        .map(|i| i.size_dist.grid().step.clone())
        .unwrap_or_else(Rational::one);
    let max_units =
        num::ToPrimitive::to_usize(&(capacity / &step).floor().to_integer()).unwrap_or(usize::MAX);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..samples {
        let mut profit = 0.0;
        let mut node = tree;
        let mut used = 0usize;
        'walk: loop {
            let mut total = 0usize;
            for &b in &node.items {
                let it = &items[b];
                let s = it.size_dist.sample(rng);
                if used + total + s <= max_units {
                    let pi = it.size_dist.mass_at(s);
                    profit += rat_to_f64(&(it.profit_at(s) / pi));
                }
                total += s;
            }
            if used + total > max_units {
                break 'walk;
            }
            used += total;
            match node.children.get(&total) {
                Some(child) => node = child,
                None => break 'walk,
            }
        }
        sum += profit;
        sumsq += profit * profit;
    }
    let mean = sum / samples as f64;
    let var = (sumsq / samples as f64 - mean * mean).max(0.0);
    let half = 1.96 * (var / samples as f64).sqrt();
    (mean, (mean - half, mean + half))
}

/// Finite-capacity value iteration for the unlimited-copies knapsack; the
/// fixed point of `V(s) = max_b Σ_{k ≤ s} (p̃_b(s_k) + π̃_b(s_k)·V(s−s_k))`.
pub fn value_iteration_sku(
    items: &[DiscretizedItem],
    capacity: &Rational,
    tol: f64,
) -> Result<Vec<f64>> {
    let grid = items
        .first()
        .map(|it| it.size_dist.grid().clone())
        .ok_or_else(|| Error::InvalidInput("value iteration needs items".into()))?;
    let max_units = num::ToPrimitive::to_usize(&(capacity / &grid.step).floor().to_integer())
        .unwrap_or(0)
        .min(grid.top_index());
    let profit: Vec<Vec<f64>> = items
        .iter()
        .map(|it| {
            (0..=max_units)
                .map(|k| rat_to_f64(&it.profit_at(k)))
                .collect()
        })
        .collect();
    let mass: Vec<Vec<f64>> = items
        .iter()
        .map(|it| {
            (0..=max_units)
                .map(|k| rat_to_f64(&it.size_dist.mass_at(k)))
                .collect()
        })
        .collect();
    let mut v = vec![0.0f64; max_units + 1];
    for _ in 0..1_000_000 {
        let mut next = vec![0.0f64; max_units + 1];
        let mut delta: f64 = 0.0;
        for s in 0..=max_units {
            let mut best = 0.0f64;
            for b in 0..items.len() {
                let mut val = 0.0;
                for k in 0..=s {
                    val += profit[b][k] + mass[b][k] * if k == 0 { v[s] } else { next[s - k] };
                }
                best = best.max(val);
            }
            next[s] = best;
            delta = delta.max((next[s] - v[s]).abs());
        }
        v = next;
        if delta < tol {
            return Ok(v);
        }
    }
    Err(Error::Unbounded(
        "value iteration failed to converge".into(),
    ))
}

/// Exact adaptive optimum of Bayesian online selection on the discretized
/// instance: choose an item, observe its realization, accept (if it fits)
/// or reject irrevocably. `fixed_order` forces ascending item order.
pub struct BospOracle<'a> {
    pub items: &'a [DiscretizedItem],
    pub max_units: usize,
    pub fixed_order: bool,
    memo: HashMap<(u32, usize), Rational>,
}

impl<'a> BospOracle<'a> {
    pub fn new(
        items: &'a [DiscretizedItem],
        capacity: &Rational,
        fixed_order: bool,
    ) -> Result<Self> {
        if items.len() > 20 {
            return Err(Error::ResourceCap {
                what: "oracle online-selection items",
                count: items.len(),
            });
        }
        let grid = items
            .first()
            .map(|it| it.size_dist.grid().clone())
            .ok_or_else(|| Error::InvalidInput("oracle needs items".into()))?;
        let max_units = num::ToPrimitive::to_usize(&(capacity / &grid.step).floor().to_integer())
            .unwrap_or(0)
            .min(grid.top_index());
        Ok(BospOracle {
            items,
            max_units,
            fixed_order,
            memo: HashMap::new(),
        })
    }

    pub fn optimum(&mut self) -> Rational {
        let full = (1u32 << self.items.len()) - 1;
        self.value(full, self.max_units)
    }

    pub fn value(&mut self, mask: u32, rem: usize) -> Rational {
        if mask == 0 {
            return Rational::zero();
        }
        if let Some(v) = self.memo.get(&(mask, rem)) {
            return v.clone();
        }
        let mut best = Rational::zero();
        for i in self.choices(mask) {
            let val = self.item_value(mask, rem, i);
            if val > best {
                best = val;
            }
        }
        self.memo.insert((mask, rem), best.clone());
        best
    }

    fn choices(&self, mask: u32) -> Vec<usize> {
        let avail: Vec<usize> = (0..self.items.len()).filter(|&i| mask >> i & 1 == 1).collect();
        if self.fixed_order {
            vec![avail[0]]
        } else {
            avail
        }
    }

    /// Expected value of probing item i at this state.
    pub fn item_value(&mut self, mask: u32, rem: usize, i: usize) -> Rational {
        let next = mask & !(1 << i);
        let support: Vec<(usize, Rational)> = self.items[i]
            .size_dist
            .support()
            .map(|(s, m)| (s, m.clone()))
            .collect();
        let mut val = Rational::zero();
        for (s, pi) in support {
            let reject = self.value(next, rem);
            let mut outcome = reject.clone();
            if s <= rem {
                // conditional expected profit of this realization
                let accept = self.items[i].profit_at(s) / &pi + self.value(next, rem - s);
                if accept > outcome {
                    outcome = accept;
                }
            }
            val += pi * outcome;
        }
        val
    }

    /// The optimal accept decision per realized size of item i (ties accept)
    /// — for the cutoff-monotonicity check.
    pub fn accept_decisions(&mut self, mask: u32, rem: usize, i: usize) -> Vec<(usize, bool)> {
        let next = mask & !(1 << i);
        let support: Vec<(usize, Rational)> = self.items[i]
            .size_dist
            .support()
            .map(|(s, m)| (s, m.clone()))
            .collect();
        support
            .into_iter()
            .map(|(s, pi)| {
                let reject = self.value(next, rem);
                let accept = if s <= rem {
                    Some(self.items[i].profit_at(s) / &pi + self.value(next, rem - s))
                } else {
                    None
                };
                (s, accept.map_or(false, |a| a >= reject))
            })
            .collect()
    }
}

/// Classic 0/1 knapsack on deterministic items (the degenerate reduction
/// check for the stochastic solver).
pub fn deterministic_knapsack(
    sizes: &[usize],
    profits: &[Rational],
    capacity_units: usize,
) -> Rational {
    let mut dp = vec![Rational::zero(); capacity_units + 1];
    for (i, &sz) in sizes.iter().enumerate() {
        for c in (0..=capacity_units).rev() {
            if sz <= c {
                let cand = &dp[c - sz] + &profits[i];
                if cand > dp[c] {
                    dp[c] = cand;
                }
            }
        }
    }
    dp[capacity_units].clone()
}
