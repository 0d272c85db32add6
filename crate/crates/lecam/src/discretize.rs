//! Two-step discretization of item size laws and the effective-profit
//! bookkeeping for correlated size/profit.
//!
//! Step 1 (small region): conditional on the size being at most the small
//! threshold τ, mass moves to {0, τ} so the conditional mean is preserved
//! exactly. The split point is an atom whose mass divides into a part mapped
//! to 0 and a part mapped to τ; effective profit divides proportionally.
//!
//! Step 2 (large region): sizes above τ round down to the grid.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDistribution;
use crate::grid::SizeGrid;
use crate::rational::{serde_rat, Rational};
use crate::{Error, Result};

/// Thresholds and granularities. The single-ε analysis pins every knob to a
/// power of one ε; here each is an independent field so desk-scale runs stay
/// feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationParams {
    pub grid: Arc<SizeGrid>,
    /// Mirror of `grid.small_threshold` (ε⁴ in the single-ε parameterization).
    pub small_threshold: Rational,
    /// Items with expected discretized size strictly above this are heavy in
    /// the utility-maximization solver (ε¹⁰).
    pub heavy_cutoff_eum: Rational,
    /// Items with expected size at least this are heavy in bin packing
    /// (ε¹⁵; the boundary is inclusive).
    pub heavy_cutoff_sbp: Rational,
    /// Signature granularity q (ε⁶/n).
    pub prob_granularity: Rational,
}

impl DiscretizationParams {
    pub fn new(
        grid: Arc<SizeGrid>,
        heavy_cutoff_eum: Rational,
        heavy_cutoff_sbp: Rational,
        prob_granularity: Rational,
    ) -> Result<Self> {
        for (name, v) in [
            ("heavy_cutoff_eum", &heavy_cutoff_eum),
            ("heavy_cutoff_sbp", &heavy_cutoff_sbp),
            ("prob_granularity", &prob_granularity),
        ] {
            if !v.is_positive() {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        Ok(DiscretizationParams {
            small_threshold: grid.small_threshold.clone(),
            grid,
            heavy_cutoff_eum,
            heavy_cutoff_sbp,
            prob_granularity,
        })
    }

    /// Single-ε defaults for a given ε and item count.
    pub fn from_epsilon(eps: &Rational, capacity: Rational, n: usize) -> Result<Self> {
        let grid = Arc::new(SizeGrid::from_epsilon(eps, capacity)?);
        let n = Rational::from_integer(n.max(1).into());
        Self::new(
            grid,
            num::pow::pow(eps.clone(), 10),
            num::pow::pow(eps.clone(), 15),
            num::pow::pow(eps.clone(), 6) / n,
        )
    }
}

/// One realization of an item: joint (size, profit) atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawEntry {
    #[serde(with = "serde_rat")]
    pub size: Rational,
    #[serde(with = "serde_rat")]
    pub profit: Rational,
    #[serde(with = "serde_rat")]
    pub prob: Rational,
}

/// An item as given: a finite joint law of size and profit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawItem {
    pub id: String,
    pub law: Vec<LawEntry>,
}

impl RawItem {
    pub fn new(id: impl Into<String>, law: Vec<(Rational, Rational, Rational)>) -> Self {
        RawItem {
            id: id.into(),
            law: law
                .into_iter()
                .map(|(size, profit, prob)| LawEntry { size, profit, prob })
                .collect(),
        }
    }

    /// Fixed-profit helper: law over (size, prob) pairs, one profit.
    pub fn with_fixed_profit(
        id: impl Into<String>,
        profit: Rational,
        sizes: Vec<(Rational, Rational)>,
    ) -> Self {
        RawItem {
            id: id.into(),
            law: sizes
                .into_iter()
                .map(|(size, prob)| LawEntry {
                    size,
                    profit: profit.clone(),
                    prob,
                })
                .collect(),
        }
    }

    pub fn validate(&self, grid: &SizeGrid) -> Result<()> {
        let mut total = Rational::zero();
        for e in &self.law {
            if e.prob.is_negative() {
                return Err(Error::InvalidInput(format!(
                    "item {}: negative probability",
                    self.id
                )));
            }
            if e.profit.is_negative() {
                return Err(Error::InvalidInput(format!(
                    "item {}: negative profit",
                    self.id
                )));
            }
            if e.size.is_negative() || e.size > grid.max_size {
                return Err(Error::InvalidInput(format!(
                    "item {}: size outside [0, max_size]",
                    self.id
                )));
            }
            total += &e.prob;
        }
        if !total.is_one() {
            return Err(Error::InvalidInput(format!(
                "item {}: probabilities sum to {total}, not 1",
                self.id
            )));
        }
        Ok(())
    }

    /// Per-size probability masses (merging entries at equal sizes).
    pub fn size_masses(&self) -> BTreeMap<Rational, Rational> {
        let mut m: BTreeMap<Rational, Rational> = BTreeMap::new();
        for e in &self.law {
            if !e.prob.is_zero() {
                *m.entry(e.size.clone()).or_insert_with(Rational::zero) += &e.prob;
            }
        }
        m
    }

    pub fn expected_size(&self) -> Rational {
        self.law.iter().map(|e| &e.size * &e.prob).sum()
    }

    /// Law as (size, prob) pairs for raw convolutions.
    pub fn size_law(&self) -> Vec<(Rational, Rational)> {
        self.size_masses().into_iter().collect()
    }
}

/// `p_b(w) = E[P_b | X_b = w] · Pr[X_b = w]`, per distinct size.
pub fn effective_profit(item: &RawItem) -> BTreeMap<Rational, Rational> {
    let mut m: BTreeMap<Rational, Rational> = BTreeMap::new();
    for e in &item.law {
        if !e.prob.is_zero() {
            *m.entry(e.size.clone()).or_insert_with(Rational::zero) += &e.profit * &e.prob;
        }
    }
    m
}

/// How one original size maps onto the grid. `targets` carries (grid index,
/// fraction of the atom) pairs; fractions sum to 1 and only the split atom
/// has two targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeBranch {
    pub size: Rational,
    pub targets: Vec<(usize, Rational)>,
}

/// Outcome of step 1 on an item.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSplitRecord {
    /// Split support point d (None when the small region is empty or τ = 0).
    pub threshold: Option<Rational>,
    /// Unconditional mass mapped to 0 / to τ.
    pub to_zero: Rational,
    pub to_threshold: Rational,
    /// Branches for every original size ≤ τ.
    pub branches: Vec<SizeBranch>,
}

/// Step 1. Moves the small-region mass to {0, τ} preserving the conditional
/// mean exactly. The split point d is the smallest support point whose strict
/// upper tail no longer covers the mean requirement; its atom divides per the
/// d₁/d₂ construction.
pub fn discretize_small(item: &RawItem, params: &DiscretizationParams) -> SmallSplitRecord {
    let tau = &params.small_threshold;
    let grid = &params.grid;
    let small: Vec<(Rational, Rational)> = item
        .size_masses()
        .into_iter()
        .filter(|(w, _)| w <= tau)
        .collect();
    if small.is_empty() || tau.is_zero() {
        // τ = 0 leaves only literal zeros in the small region; map them to 0.
        let branches = small
            .into_iter()
            .map(|(w, _)| SizeBranch {
                size: w,
                targets: vec![(0, Rational::one())],
            })
            .collect();
        return SmallSplitRecord {
            threshold: None,
            to_zero: Rational::zero(),
            to_threshold: Rational::zero(),
            branches,
        };
    }
    let tau_idx = grid.small_index();
    let mean: Rational = small.iter().map(|(w, q)| w * q).sum();
    // Unconditional mass that must land on τ.
    let target = &mean / tau;
    // Smallest support point d with Pr[X > d] ≤ target.
    let total: Rational = small.iter().map(|(_, q)| q.clone()).sum();
    let mut below = Rational::zero(); // Pr[X < d]
    let mut split_at = small.len() - 1;
    for (i, (_, q)) in small.iter().enumerate() {
        let above = &total - &below - q; // Pr[X > d]
        if above <= target {
            split_at = i;
            break;
        }
        below += q;
    }
    let (d, d_mass) = &small[split_at];
    let above: Rational = small[split_at + 1..].iter().map(|(_, q)| q.clone()).sum();
    let to_tau_from_d = &target - &above; // ∈ [0, d_mass]
    let to_zero_from_d = d_mass - &to_tau_from_d;
    let mut branches = Vec::new();
    for (i, (w, q)) in small.iter().enumerate() {
        let mut targets = Vec::new();
        if i < split_at {
            targets.push((0, Rational::one()));
        } else if i > split_at {
            targets.push((tau_idx, Rational::one()));
        } else {
            if !to_zero_from_d.is_zero() {
                targets.push((0, &to_zero_from_d / q));
            }
            if !to_tau_from_d.is_zero() {
                targets.push((tau_idx, &to_tau_from_d / q));
            }
            if targets.is_empty() {
                // Zero-mean small region: everything sits at size 0 already.
                targets.push((0, Rational::one()));
            }
        }
        branches.push(SizeBranch {
            size: w.clone(),
            targets,
        });
    }
    SmallSplitRecord {
        threshold: Some(d.clone()),
        to_zero: &total - &target,
        to_threshold: target,
        branches,
    }
}

/// Step 2. Rounds every size above τ down to the grid.
pub fn discretize_large(item: &RawItem, params: &DiscretizationParams) -> Vec<SizeBranch> {
    let tau = &params.small_threshold;
    item.size_masses()
        .into_keys()
        .filter(|w| w > tau)
        .map(|w| {
            let idx = params.grid.floor_index(&w);
            SizeBranch {
                size: w,
                targets: vec![(idx, Rational::one())],
            }
        })
        .collect()
}

/// An item after both discretization steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedItem {
    pub id: String,
    pub size_dist: DiscreteDistribution<Rational>,
    /// Discretized effective profit `p̃_b(s) = Σ_{w | D_b(w)=s} p_b(w)`.
    pub eff_profit: BTreeMap<usize, Rational>,
    pub expected_size: Rational,
    /// The recorded map D_b from original sizes to grid indices (with the
    /// split-atom fractions), for canonical-policy evaluation on the
    /// original law.
    pub size_map: Vec<SizeBranch>,
}

impl DiscretizedItem {
    pub fn profit_at(&self, index: usize) -> Rational {
        self.eff_profit
            .get(&index)
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn total_effective_profit(&self) -> Rational {
        self.eff_profit.values().sum()
    }

    /// `π̃_b(s_k)` for k ≥ 1 as a dense vector (signature building block).
    pub fn nonzero_mass_vector(&self) -> Vec<Rational> {
        let z = self.size_dist.grid().len();
        let mut v = vec![Rational::zero(); z - 1];
        for (k, m) in self.size_dist.support() {
            if k >= 1 {
                v[k - 1] = m.clone();
            }
        }
        v
    }

    /// Probability of a nonzero discretized size.
    pub fn nonzero_prob(&self) -> Rational {
        Rational::one() - self.size_dist.mass_at(0)
    }
}

/// Both steps composed; records D_b for canonical-policy semantics.
pub fn discretize_item(item: &RawItem, params: &DiscretizationParams) -> Result<DiscretizedItem> {
    item.validate(&params.grid)?;
    let mut size_map = discretize_small(item, params).branches;
    size_map.extend(discretize_large(item, params));
    size_map.sort_by(|a, b| a.size.cmp(&b.size));

    let masses = item.size_masses();
    let profits = effective_profit(item);
    let mut mass: BTreeMap<usize, Rational> = BTreeMap::new();
    let mut eff: BTreeMap<usize, Rational> = BTreeMap::new();
    for branch in &size_map {
        let q = &masses[&branch.size];
        let p = profits
            .get(&branch.size)
            .cloned()
            .unwrap_or_else(Rational::zero);
        for (idx, frac) in &branch.targets {
            *mass.entry(*idx).or_insert_with(Rational::zero) += q * frac;
            let share = &p * frac;
            if !share.is_zero() {
                *eff.entry(*idx).or_insert_with(Rational::zero) += share;
            }
        }
    }
    let size_dist = DiscreteDistribution::from_mass(params.grid.clone(), mass)?;
    let expected_size = size_dist.expectation_rational();
    Ok(DiscretizedItem {
        id: item.id.clone(),
        size_dist,
        eff_profit: eff,
        expected_size,
        size_map,
    })
}

pub fn discretize_all(
    items: &[RawItem],
    params: &DiscretizationParams,
) -> Result<Vec<DiscretizedItem>> {
    let mut ids = std::collections::BTreeSet::new();
    for it in items {
        if !ids.insert(&it.id) {
            return Err(Error::InvalidInput(format!("duplicate item id {}", it.id)));
        }
    }
    items.iter().map(|it| discretize_item(it, params)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    fn params() -> DiscretizationParams {
        // step 1/16, τ = 1/4, C = 1
        let grid = Arc::new(SizeGrid::new(rat(1, 16), rat(1, 4), rat_int(2), rat_int(1)).unwrap());
        DiscretizationParams::new(grid, rat(1, 100), rat(1, 100), rat(1, 100)).unwrap()
    }

    #[test]
    fn effective_profit_merges_equal_sizes() {
        let item = RawItem::new(
            "a",
            vec![
                (rat(1, 2), rat_int(1), rat(1, 2)),
                (rat(1, 2), rat_int(3), rat(1, 2)),
            ],
        );
        let p = effective_profit(&item);
        assert_eq!(p[&rat(1, 2)], rat_int(2));
        assert_eq!(p.len(), 1);

        let single = RawItem::new("b", vec![(rat(1, 2), rat_int(2), rat_int(1))]);
        assert_eq!(effective_profit(&single)[&rat(1, 2)], rat_int(2));

        let distinct = RawItem::new(
            "c",
            vec![
                (rat(1, 4), rat_int(1), rat(1, 2)),
                (rat(1, 2), rat_int(1), rat(1, 2)),
            ],
        );
        assert_eq!(effective_profit(&distinct).len(), 2);
    }

    #[test]
    fn small_split_forced_by_mean_preservation() {
        // All mass at τ/2 → Bernoulli(τ; 1/2).
        let p = params();
        let item = RawItem::new("a", vec![(rat(1, 8), rat_int(0), rat_int(1))]);
        let d = discretize_item(&item, &p).unwrap();
        assert_eq!(d.size_dist.mass_at(0), rat(1, 2));
        assert_eq!(d.size_dist.mass_at(4), rat(1, 2));
        // Mean preserved exactly.
        assert_eq!(d.expected_size, rat(1, 8));
    }

    #[test]
    fn small_split_example_with_atom_split() {
        // Atoms {0.2τ: 1/2, τ: 1/2}, conditional mean 0.6τ with τ = 1/4.
        let p = params();
        let item = RawItem::new(
            "a",
            vec![
                (rat(1, 20), rat_int(1), rat(1, 2)),
                (rat(1, 4), rat_int(1), rat(1, 2)),
            ],
        );
        let rec = discretize_small(&item, &p);
        assert_eq!(rec.threshold, Some(rat(1, 20)));
        assert_eq!(rec.to_threshold, rat(3, 5)); // Pr[X̃ = τ] = 0.6
        assert_eq!(rec.to_zero, rat(2, 5));
        let d = discretize_item(&item, &p).unwrap();
        assert_eq!(d.size_dist.mass_at(4), rat(3, 5));
        assert_eq!(d.size_dist.mass_at(0), rat(2, 5));
        // 0.4 of the 0.2τ atom maps to 0, 0.1 maps to τ; profit splits 4:1.
        assert_eq!(d.profit_at(0), rat(2, 5));
        assert_eq!(d.profit_at(4), rat(1, 10) + rat(1, 2));
        assert_eq!(d.expected_size, item.expected_size());
    }

    #[test]
    fn no_small_mass_is_noop() {
        let p = params();
        let item = RawItem::new("a", vec![(rat(1, 2), rat_int(1), rat_int(1))]);
        let rec = discretize_small(&item, &p);
        assert!(rec.threshold.is_none());
        assert!(rec.branches.is_empty());
    }

    #[test]
    fn large_rounding() {
        let p = params();
        // 7.3·step
        let w = rat(73, 160);
        let item = RawItem::new("a", vec![(w, rat_int(1), rat_int(1))]);
        let d = discretize_item(&item, &p).unwrap();
        assert_eq!(d.size_dist.mass_at(7), rat_int(1));

        // on-grid size stays put
        let item = RawItem::new("b", vec![(rat(5, 16), rat_int(1), rat_int(1))]);
        let d = discretize_item(&item, &p).unwrap();
        assert_eq!(d.size_dist.mass_at(5), rat_int(1));

        // two sizes in one bucket accumulate probability and profit
        let item = RawItem::new(
            "c",
            vec![
                (rat(21, 64), rat_int(1), rat(1, 2)), // 5.25 steps
                (rat(23, 64), rat_int(2), rat(1, 2)), // 5.75 steps
            ],
        );
        let d = discretize_item(&item, &p).unwrap();
        assert_eq!(d.size_dist.mass_at(5), rat_int(1));
        assert_eq!(d.profit_at(5), rat(3, 2));
    }

    #[test]
    fn deterministic_size_example() {
        // size 0.37, C = 1, step 1/16 → 5/16.
        let p = params();
        let item = RawItem::new("a", vec![(rat(37, 100), rat_int(2), rat_int(1))]);
        let d = discretize_item(&item, &p).unwrap();
        assert_eq!(d.size_dist.mass_at(5), rat_int(1));
        assert_eq!(d.profit_at(5), rat_int(2));
    }

    #[test]
    fn mixed_item_matches_hand_composition() {
        let p = params();
        let item = RawItem::new(
            "a",
            vec![
                (rat(1, 8), rat_int(1), rat(1, 4)), // small: τ/2
                (rat(37, 100), rat_int(2), rat(1, 4)),
                (rat(1, 2), rat_int(3), rat(1, 2)),
            ],
        );
        let d = discretize_item(&item, &p).unwrap();
        // Small region: mass 1/4 at 1/8, conditional mean 1/8 → Pr[τ | small] = 1/2.
        assert_eq!(d.size_dist.mass_at(0), rat(1, 8));
        assert_eq!(d.size_dist.mass_at(4), rat(1, 8));
        assert_eq!(d.size_dist.mass_at(5), rat(1, 4));
        assert_eq!(d.size_dist.mass_at(8), rat(1, 2));
        // Profit conservation.
        assert_eq!(
            d.total_effective_profit(),
            effective_profit(&item).values().sum::<Rational>()
        );
        // Small-region mean preserved + large region rounded down.
        assert_eq!(
            d.expected_size,
            rat(1, 8) * rat(1, 4) + rat(5, 16) * rat(1, 4) + rat(1, 2) * rat(1, 2)
        );
    }

    #[test]
    fn large_region_sandwich_holds() {
        let p = params();
        let item = RawItem::new(
            "a",
            vec![
                (rat(37, 100), rat_int(1), rat(1, 3)),
                (rat(91, 100), rat_int(1), rat(1, 3)),
                (rat(3, 2), rat_int(1), rat(1, 3)),
            ],
        );
        let d = discretize_item(&item, &p).unwrap();
        let eps = p.grid.step_ratio();
        for br in &d.size_map {
            let (idx, _) = br.targets[0];
            let disc = p.grid.size_at(idx);
            assert!(disc <= br.size);
            assert!(br.size <= (Rational::one() + &eps) * &disc);
        }
    }

    #[test]
    fn validation_rejects_bad_items() {
        let p = params();
        let bad_prob = RawItem::new("a", vec![(rat(1, 2), rat_int(1), rat(1, 2))]);
        assert!(discretize_item(&bad_prob, &p).is_err());
        let neg_profit = RawItem::new("a", vec![(rat(1, 2), rat_int(-1), rat_int(1))]);
        assert!(discretize_item(&neg_profit, &p).is_err());
        let big = RawItem::new("a", vec![(rat_int(3), rat_int(1), rat_int(1))]);
        assert!(discretize_item(&big, &p).is_err());
    }
}
