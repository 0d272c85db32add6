//! Bayesian online selection under a knapsack constraint, reduced to the
//! generalized stochastic knapsack: realizations are bucketed geometrically,
//! acceptance sets are staircases on the bucket grid (huge-profit
//! realizations are force-accepted when they fit), and each staircase
//! becomes one derived item in the item's group.

use std::collections::BTreeMap;

use num::{One, Signed, Zero};

use crate::discretize::{discretize_all, DiscretizationParams, DiscretizedItem, LawEntry, RawItem};
use crate::policy::BlockTree;
use crate::rational::Rational;
use crate::sk::{solve_gensk_ordered, ItemGroup, SkConfig};
use crate::{Error, Result};

/// One bucketed realization of an item's joint law.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BucketPoint {
    pub size: Rational,
    pub profit: Rational,
    pub prob: Rational,
    /// Profit above the OPT estimate: excluded from the staircase choice,
    /// accepted whenever it fits the remaining capacity.
    pub huge: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketedJoint {
    pub points: Vec<BucketPoint>,
}

/// Geometric bucketing parameters (ratio 1+ε, thresholds εC/n and ε·OPT/n).
#[derive(Debug, Clone)]
pub struct BucketSpec {
    pub eps: Rational,
    pub n: usize,
    pub opt_estimate: Rational,
    pub capacity: Rational,
}

fn geo_floor(x: &Rational, base: &Rational, ratio: &Rational) -> Rational {
    let mut val = base.clone();
    loop {
        let next = &val * ratio;
        if next <= *x {
            val = next;
        } else {
            return val;
        }
    }
}

/// Moves sub-threshold sizes to 0 and sub-threshold profits to 0, then
/// rounds the rest down to the geometric grids. Probability masses merge per
/// bucket; huge-profit realizations keep their exact profit.
pub fn bucket_joint(law: &[LawEntry], spec: &BucketSpec) -> Result<BucketedJoint> {
    if !spec.opt_estimate.is_positive() || !spec.eps.is_positive() {
        return Err(Error::InvalidInput(
            "bucketing needs positive ε and OPT estimate".into(),
        ));
    }
    let n = Rational::from_integer((spec.n.max(1) as i64).into());
    let size_base = &spec.eps * &spec.capacity / &n;
    let profit_base = &spec.eps * &spec.opt_estimate / &n;
    let ratio = Rational::one() + &spec.eps;
    let mut merged: BTreeMap<(Rational, Rational, bool), Rational> = BTreeMap::new();
    for e in law {
        if e.prob.is_zero() {
            continue;
        }
        let huge = e.profit > spec.opt_estimate;
        let size = if e.size <= size_base {
            Rational::zero()
        } else {
            geo_floor(&e.size, &size_base, &ratio)
        };
        let profit = if huge {
            e.profit.clone()
        } else if e.profit <= profit_base {
            Rational::zero()
        } else {
            geo_floor(&e.profit, &profit_base, &ratio)
        };
        *merged
            .entry((size, profit, huge))
            .or_insert_with(Rational::zero) += &e.prob;
    }
    Ok(BucketedJoint {
        points: merged
            .into_iter()
            .map(|((size, profit, huge), prob)| BucketPoint {
                size,
                profit,
                prob,
                huge,
            })
            .collect(),
    })
}

/// A staircase acceptance region on the bucket grid, restricted to
/// `[0, cap] × [0, OPT]`. `cutoffs[l]` counts the accepted size levels at
/// the l-th profit level; nondecreasing in the profit, which is exactly the
/// downward-left closure.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AcceptanceSet {
    pub size_levels: Vec<Rational>,
    pub profit_levels: Vec<Rational>,
    pub cutoffs: Vec<usize>,
    pub cap: Rational,
}

impl AcceptanceSet {
    /// Does the staircase accept a (non-huge) bucketed realization?
    pub fn accepts(&self, size: &Rational, profit: &Rational) -> bool {
        let Some(l) = self.profit_levels.iter().position(|p| p == profit) else {
            return false;
        };
        let Some(s) = self.size_levels.iter().position(|x| x == size) else {
            return false;
        };
        s < self.cutoffs[l]
    }

    /// Downward-left closure: accepted (x, p) forces every (x' ≤ x, p' ≥ p).
    pub fn is_downward_left_closed(&self) -> bool {
        self.cutoffs.windows(2).all(|w| w[0] <= w[1])
    }
}

/// All nondecreasing cutoff sequences of length `b` over `0..=a` — the
/// monotone-path count C(a+b, a).
pub fn enumerate_staircases(a: usize, b: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; b];
    fn rec(a: usize, b: usize, pos: usize, floor: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == b {
            out.push(cur.clone());
            return;
        }
        for c in floor..=a {
            cur[pos] = c;
            rec(a, b, pos + 1, c, cur, out);
        }
    }
    rec(a, b, 0, 0, &mut cur, &mut out);
    out
}

/// All staircase acceptance sets of a bucketed law, one family per candidate
/// remaining capacity. Guards against bucket-count blow-ups.
pub fn enumerate_acceptance_sets(
    joint: &BucketedJoint,
    remaining_caps: &[Rational],
    opt_estimate: &Rational,
    max_levels: usize,
) -> Result<Vec<AcceptanceSet>> {
    let mut out = Vec::new();
    for cap in remaining_caps {
        let mut sizes: Vec<Rational> = joint
            .points
            .iter()
            .filter(|pt| !pt.huge && pt.size <= *cap && pt.profit <= *opt_estimate)
            .map(|pt| pt.size.clone())
            .collect();
        sizes.sort();
        sizes.dedup();
        let mut profits: Vec<Rational> = joint
            .points
            .iter()
            .filter(|pt| !pt.huge && pt.size <= *cap && pt.profit <= *opt_estimate)
            .map(|pt| pt.profit.clone())
            .collect();
        profits.sort();
        profits.dedup();
        if sizes.len() > max_levels || profits.len() > max_levels {
            return Err(Error::ResourceCap {
                what: "acceptance-set bucket levels",
                count: sizes.len().max(profits.len()),
            });
        }
        for cutoffs in enumerate_staircases(sizes.len(), profits.len()) {
            out.push(AcceptanceSet {
                size_levels: sizes.clone(),
                profit_levels: profits.clone(),
                cutoffs,
                cap: cap.clone(),
            });
        }
    }
    Ok(out)
}

/// The derived item of an acceptance set: accepted realizations keep their
/// (size, profit), everything else becomes (0, 0). Huge-profit realizations
/// are accepted exactly when they fit the set's capacity restriction.
pub fn derived_item(id: String, joint: &BucketedJoint, acc: &AcceptanceSet) -> RawItem {
    let mut law: Vec<LawEntry> = Vec::new();
    for pt in &joint.points {
        let accepted = if pt.huge {
            pt.size <= acc.cap
        } else {
            pt.size <= acc.cap && acc.accepts(&pt.size, &pt.profit)
        };
        if accepted {
            law.push(LawEntry {
                size: pt.size.clone(),
                profit: pt.profit.clone(),
                prob: pt.prob.clone(),
            });
        } else {
            law.push(LawEntry {
                size: Rational::zero(),
                profit: Rational::zero(),
                prob: pt.prob.clone(),
            });
        }
    }
    RawItem { id, law }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalOrder {
    Free,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct BospConfig {
    pub sk: SkConfig,
    pub bucket_eps: Rational,
    /// Number of geometric remaining-capacity levels (≥ 1; level 0 is C).
    pub cap_levels: usize,
    pub max_bucket_levels: usize,
    pub max_group_members: usize,
}

#[derive(Debug, Clone)]
pub struct BospSolution {
    pub tree: BlockTree,
    pub value: Rational,
    /// The derived-item slate the tree's indices refer to.
    pub slate: Vec<RawItem>,
    pub items: Vec<DiscretizedItem>,
    pub groups: Vec<ItemGroup>,
}

/// Builds per-item groups of acceptance-set items and solves the resulting
/// generalized knapsack; in fixed-order mode the group DP only extends the
/// currently lowest populated blocks.
pub fn solve_bosp(
    raw_items: &[RawItem],
    params: &DiscretizationParams,
    cfg: &BospConfig,
    order: ArrivalOrder,
) -> Result<BospSolution> {
    let capacity = params.grid.capacity.clone();
    let spec = BucketSpec {
        eps: cfg.bucket_eps.clone(),
        n: raw_items.len(),
        opt_estimate: cfg.sk.opt_estimate.clone(),
        capacity: capacity.clone(),
    };
    let ratio = Rational::one() + &cfg.bucket_eps;
    let mut caps = Vec::new();
    let mut level = capacity.clone();
    for _ in 0..cfg.cap_levels.max(1) {
        caps.push(level.clone());
        level /= &ratio;
    }
    let mut slate: Vec<RawItem> = Vec::new();
    let mut groups: Vec<ItemGroup> = Vec::new();
    for item in raw_items {
        let joint = bucket_joint(&item.law, &spec)?;
        let sets = enumerate_acceptance_sets(
            &joint,
            &caps,
            &cfg.sk.opt_estimate,
            cfg.max_bucket_levels,
        )?;
        let mut members = Vec::new();
        let mut seen: Vec<Vec<LawEntry>> = Vec::new();
        for (si, acc) in sets.iter().enumerate() {
            let derived = derived_item(format!("{}#{}", item.id, si), &joint, acc);
            let mut canon = derived.law.clone();
            canon.sort_by(|a, b| (&a.size, &a.profit).cmp(&(&b.size, &b.profit)));
            if seen.contains(&canon) {
                continue;
            }
            seen.push(canon);
            members.push(slate.len());
            slate.push(derived);
            if members.len() > cfg.max_group_members {
                return Err(Error::ResourceCap {
                    what: "acceptance sets per item",
                    count: members.len(),
                });
            }
        }
        groups.push(ItemGroup {
            id: item.id.clone(),
            members,
        });
    }
    let items = discretize_all(&slate, params)?;
    let (tree, value) = solve_gensk_ordered(
        &items,
        &groups,
        &capacity,
        &cfg.sk,
        order == ArrivalOrder::Fixed,
    )?;
    Ok(BospSolution {
        tree,
        value,
        slate,
        items,
        groups,
    })
}
