//! Adaptive policy trees and block-adaptive trees: exact evaluation on the
//! discretized and on the original laws, the ancestor-dominance
//! normalization, and the segment partition that turns a canonical policy
//! into a block-adaptive one.

use std::collections::{BTreeMap, BTreeSet};

use num::{One, Signed, Zero};

use crate::discretize::{DiscretizedItem, RawItem};
use crate::rational::Rational;
use crate::{Error, Result};

/// Decision tree of an adaptive policy: each node inserts an item and
/// branches on the realized discretized size (one edge per support index).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PolicyTree {
    Stop,
    Insert {
        item: usize,
        children: BTreeMap<usize, PolicyTree>,
    },
}

impl PolicyTree {
    pub fn insert(item: usize, children: BTreeMap<usize, PolicyTree>) -> Self {
        PolicyTree::Insert { item, children }
    }

    pub fn node_count(&self) -> usize {
        match self {
            PolicyTree::Stop => 0,
            PolicyTree::Insert { children, .. } => {
                1 + children.values().map(|c| c.node_count()).sum::<usize>()
            }
        }
    }
}

/// Structural validity: every insert node's edges cover exactly the item's
/// discretized support, and no item repeats on a realization path. With a
/// group map, no two items of one group may share a path.
pub fn validate_policy(
    tree: &PolicyTree,
    items: &[DiscretizedItem],
    group_of: Option<&[usize]>,
) -> Result<()> {
    fn walk(
        node: &PolicyTree,
        items: &[DiscretizedItem],
        group_of: Option<&[usize]>,
        seen_items: &mut BTreeSet<usize>,
        seen_groups: &mut BTreeSet<usize>,
    ) -> Result<()> {
        let PolicyTree::Insert { item, children } = node else {
            return Ok(());
        };
        if *item >= items.len() {
            return Err(Error::MalformedPolicy(format!("unknown item index {item}")));
        }
        if !seen_items.insert(*item) {
            return Err(Error::MalformedPolicy(format!(
                "item {} repeats on a realization path",
                items[*item].id
            )));
        }
        if let Some(groups) = group_of {
            if !seen_groups.insert(groups[*item]) {
                return Err(Error::MalformedPolicy(format!(
                    "two items of group {} share a realization path",
                    groups[*item]
                )));
            }
        }
        let support: BTreeSet<usize> = items[*item].size_dist.support().map(|(k, _)| k).collect();
        let edges: BTreeSet<usize> = children.keys().copied().collect();
        if support != edges {
            return Err(Error::MalformedPolicy(format!(
                "edges of item {} do not match its support",
                items[*item].id
            )));
        }
        for child in children.values() {
            walk(child, items, group_of, seen_items, seen_groups)?;
        }
        seen_items.remove(item);
        if let Some(groups) = group_of {
            seen_groups.remove(&groups[*item]);
        }
        Ok(())
    }
    walk(
        tree,
        items,
        group_of,
        &mut BTreeSet::new(),
        &mut BTreeSet::new(),
    )
}

fn capacity_units(capacity: &Rational, step: &Rational) -> usize {
    if capacity.is_negative() {
        return 0;
    }
    num::ToPrimitive::to_usize(&(capacity / step).floor().to_integer()).unwrap_or(usize::MAX)
}

/// Exact expected profit of a policy on the discretized instance:
/// `P(v) = Σ_{e: W(v)+w_e ≤ C} [p̃_v(w_e) + π̃_e·P(u)]`.
pub fn evaluate_policy(
    tree: &PolicyTree,
    items: &[DiscretizedItem],
    capacity: &Rational,
) -> Result<Rational> {
    validate_policy(tree, items, None)?;
    let step = items
        .first()
        .map(|i| i.size_dist.grid().step.clone())
        .unwrap_or_else(Rational::one);
    let max_units = capacity_units(capacity, &step);
    Ok(eval_units(tree, items, 0, max_units))
}

pub(crate) fn eval_units(
    node: &PolicyTree,
    items: &[DiscretizedItem],
    used: usize,
    max_units: usize,
) -> Rational {
    let PolicyTree::Insert { item, children } = node else {
        return Rational::zero();
    };
    let it = &items[*item];
    let mut acc = Rational::zero();
    for (s, child) in children {
        if used + s <= max_units {
            acc += it.profit_at(*s);
            let cont = eval_units(child, items, used + s, max_units);
            if !cont.is_zero() {
                acc += it.size_dist.mass_at(*s) * cont;
            }
        }
    }
    acc
}

/// Canonical-policy evaluation on the original laws: branching follows the
/// recorded discretized-size map D_b (integrating over the split atom), the
/// occupied capacity accrues actual sizes, and an edge's profit counts only
/// while the actual total stays within `capacity`.
pub fn evaluate_policy_original(
    tree: &PolicyTree,
    raw_items: &[RawItem],
    items: &[DiscretizedItem],
    capacity: &Rational,
) -> Result<Rational> {
    validate_policy(tree, items, None)?;
    fn eval(
        node: &PolicyTree,
        raw_items: &[RawItem],
        items: &[DiscretizedItem],
        used: &Rational,
        capacity: &Rational,
    ) -> Rational {
        let PolicyTree::Insert { item, children } = node else {
            return Rational::zero();
        };
        let mut acc = Rational::zero();
        for entry in &raw_items[*item].law {
            if entry.prob.is_zero() {
                continue;
            }
            let branch = items[*item]
                .size_map
                .iter()
                .find(|b| b.size == entry.size)
                .expect("discretization recorded every original size");
            let total = used + &entry.size;
            let fits = total <= *capacity;
            for (idx, frac) in &branch.targets {
                let weight = &entry.prob * frac;
                if fits {
                    acc += &entry.profit * &weight;
                }
                if let Some(child) = children.get(idx) {
                    let cont = eval(child, raw_items, items, &total, capacity);
                    if !cont.is_zero() {
                        acc += weight * cont;
                    }
                }
            }
        }
        acc
    }
    Ok(eval(tree, raw_items, items, &Rational::zero(), capacity))
}

/// Repeatedly replaces an ancestor subtree by a descendant subtree of larger
/// in-place value until `P(u) ≥ P(v)` for every ancestor-descendant pair.
/// The value never decreases and the pass is idempotent.
pub fn normalize_policy(
    tree: &PolicyTree,
    items: &[DiscretizedItem],
    capacity: &Rational,
) -> Result<PolicyTree> {
    validate_policy(tree, items, None)?;
    let step = items
        .first()
        .map(|i| i.size_dist.grid().step.clone())
        .unwrap_or_else(Rational::one);
    let max_units = capacity_units(capacity, &step);
    let mut current = tree.clone();
    let guard = current.node_count().pow(2) + 16;
    for _ in 0..guard {
        let (next, changed) = improve(&current, items, 0, max_units);
        current = next;
        if !changed {
            return Ok(current);
        }
    }
    Ok(current)
}

/// One bottom-up improvement sweep; returns the (possibly replaced) subtree.
fn improve(
    node: &PolicyTree,
    items: &[DiscretizedItem],
    used: usize,
    max_units: usize,
) -> (PolicyTree, bool) {
    let PolicyTree::Insert { item, children } = node else {
        return (PolicyTree::Stop, false);
    };
    let mut changed = false;
    let mut new_children = BTreeMap::new();
    for (&s, child) in children {
        if used + s <= max_units {
            let (c, ch) = improve(child, items, used + s, max_units);
            changed |= ch;
            new_children.insert(s, c);
        } else {
            new_children.insert(s, child.clone());
        }
    }
    let candidate = PolicyTree::Insert {
        item: *item,
        children: new_children,
    };
    let own = eval_units(&candidate, items, used, max_units);
    let mut best: Option<(Rational, &PolicyTree)> = None;
    collect_best_descendant(&candidate, items, used, max_units, &mut best);
    if let Some((val, sub)) = best {
        if val > own {
            return (sub.clone(), true);
        }
    }
    (candidate, changed)
}

fn collect_best_descendant<'a>(
    node: &'a PolicyTree,
    items: &[DiscretizedItem],
    used: usize,
    max_units: usize,
    best: &mut Option<(Rational, &'a PolicyTree)>,
) {
    let PolicyTree::Insert { children, .. } = node else {
        return;
    };
    for child in children.values() {
        if let PolicyTree::Insert { .. } = child {
            let val = eval_units(child, items, used, max_units);
            if best.as_ref().map_or(true, |(b, _)| val > *b) {
                *best = Some((val, child));
            }
            collect_best_descendant(child, items, used, max_units, best);
        }
    }
}

/// Cuts every node whose realization path exceeds the expected-size budget
/// (the bounded-expected-size normal form for policies).
pub fn truncate_mean_budget(
    tree: &PolicyTree,
    items: &[DiscretizedItem],
    budget: &Rational,
) -> PolicyTree {
    fn walk(
        node: &PolicyTree,
        items: &[DiscretizedItem],
        spent: &Rational,
        budget: &Rational,
    ) -> PolicyTree {
        let PolicyTree::Insert { item, children } = node else {
            return PolicyTree::Stop;
        };
        let spent = spent + &items[*item].expected_size;
        if spent > *budget {
            return PolicyTree::Stop;
        }
        PolicyTree::Insert {
            item: *item,
            children: children
                .iter()
                .map(|(&s, c)| (s, walk(c, items, &spent, budget)))
                .collect(),
        }
    }
    walk(tree, items, &Rational::zero(), budget)
}

/// Decision tree of a block-adaptive policy: a node inserts a whole ordered
/// block and branches on the realized total discretized block size.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockTree {
    pub items: Vec<usize>,
    pub children: BTreeMap<usize, BlockTree>,
}

impl BlockTree {
    pub fn leaf(items: Vec<usize>) -> Self {
        BlockTree {
            items,
            children: BTreeMap::new(),
        }
    }

    pub fn block_count(&self) -> usize {
        1 + self.children.values().map(|c| c.block_count()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self
            .children
            .values()
            .map(|c| c.depth())
            .max()
            .unwrap_or(0)
    }

    pub fn max_branching(&self) -> usize {
        self.children
            .len()
            .max(self.children.values().map(|c| c.max_branching()).max().unwrap_or(0))
    }

    /// Largest `Σ E[X̃_b]` over multi-item blocks.
    pub fn max_multi_block_mass(&self, items: &[DiscretizedItem]) -> Rational {
        let own = if self.items.len() > 1 {
            self.items
                .iter()
                .map(|&i| items[i].expected_size.clone())
                .sum()
        } else {
            Rational::zero()
        };
        self.children
            .values()
            .map(|c| c.max_multi_block_mass(items))
            .fold(own, |a, b| if b > a { b } else { a })
    }

    /// No item (or group, when given) may repeat on a root-leaf path.
    pub fn validate(&self, items: &[DiscretizedItem], group_of: Option<&[usize]>) -> Result<()> {
        fn walk(
            node: &BlockTree,
            items: &[DiscretizedItem],
            group_of: Option<&[usize]>,
            seen: &mut BTreeSet<usize>,
            seen_groups: &mut BTreeSet<usize>,
        ) -> Result<()> {
            for &i in &node.items {
                if i >= items.len() {
                    return Err(Error::MalformedPolicy(format!("unknown item index {i}")));
                }
                if !seen.insert(i) {
                    return Err(Error::MalformedPolicy(format!(
                        "item {} repeats on a realization path",
                        items[i].id
                    )));
                }
                if let Some(groups) = group_of {
                    if !seen_groups.insert(groups[i]) {
                        return Err(Error::MalformedPolicy(format!(
                            "two items of group {} share a realization path",
                            groups[i]
                        )));
                    }
                }
            }
            for child in node.children.values() {
                walk(child, items, group_of, seen, seen_groups)?;
            }
            for &i in &node.items {
                seen.remove(&i);
                if let Some(groups) = group_of {
                    seen_groups.remove(&groups[i]);
                }
            }
            Ok(())
        }
        walk(self, items, group_of, &mut BTreeSet::new(), &mut BTreeSet::new())
    }
}

/// Exact expected profit of a block-adaptive policy on the discretized
/// instance. Within a block, items are inserted in order and an item's
/// effective profit counts only while the running total fits; after the
/// block the policy branches on the realized total (missing edge = stop).
pub fn evaluate_block_tree(
    tree: &BlockTree,
    items: &[DiscretizedItem],
    capacity: &Rational,
) -> Result<Rational> {
    tree.validate(items, None)?;
    let step = items
        .first()
        .map(|i| i.size_dist.grid().step.clone())
        .unwrap_or_else(Rational::one);
    let max_units = capacity_units(capacity, &step);
    Ok(eval_block(tree, items, 0, max_units))
}

pub(crate) fn eval_block(
    node: &BlockTree,
    items: &[DiscretizedItem],
    used: usize,
    max_units: usize,
) -> Rational {
    let mut profit = Rational::zero();
    // running total of the block's inserted items, as a distribution
    let overflow_marker = max_units + 1 - used.min(max_units);
    let mut dist: BTreeMap<usize, Rational> = BTreeMap::new();
    dist.insert(0, Rational::one());
    for &b in &node.items {
        let it = &items[b];
        let mut next: BTreeMap<usize, Rational> = BTreeMap::new();
        for (t, mass) in &dist {
            for (s, pi) in it.size_dist.support() {
                if used + t + s <= max_units {
                    profit += mass * it.profit_at(s);
                    *next.entry(t + s).or_insert_with(Rational::zero) += mass * pi;
                } else {
                    // overflowed realizations: lumped, they never continue
                    *next
                        .entry(overflow_marker.max(t + s))
                        .or_insert_with(Rational::zero) += mass * pi;
                }
            }
        }
        dist = next;
    }
    for (t, mass) in &dist {
        if used + t <= max_units {
            if let Some(child) = node.children.get(t) {
                let cont = eval_block(child, items, used + t, max_units);
                if !cont.is_zero() {
                    profit += mass * cont;
                }
            }
        }
    }
    profit
}

/// Caps for the segment partition: the multi-item block mass budget and the
/// tolerated value spread among a segment's same-size continuations.
#[derive(Debug, Clone)]
pub struct SegmentCaps {
    pub mass: Rational,
    pub value_gap: Rational,
}

/// Partitions the leftmost (zero-size) paths of a canonical policy into
/// segments under the mass and value-spread caps; segments become blocks and
/// each realized size rewires to the last node's corresponding child.
pub fn segment_partition(
    tree: &PolicyTree,
    items: &[DiscretizedItem],
    caps: &SegmentCaps,
    capacity: &Rational,
) -> Result<BlockTree> {
    validate_policy(tree, items, None)?;
    let PolicyTree::Insert { .. } = tree else {
        return Err(Error::MalformedPolicy("empty policy has no blocks".into()));
    };
    let step = items
        .first()
        .map(|i| i.size_dist.grid().step.clone())
        .unwrap_or_else(Rational::one);
    let max_units = capacity_units(capacity, &step);
    Ok(build_block(tree, items, caps, 0, max_units))
}

fn build_block(
    node: &PolicyTree,
    items: &[DiscretizedItem],
    caps: &SegmentCaps,
    used: usize,
    max_units: usize,
) -> BlockTree {
    // Collect the segment: a maximal prefix of the leftmost path.
    let mut seg: Vec<usize> = Vec::new();
    let mut mass = Rational::zero();
    // per-size min/max of the in-place continuation values seen so far
    let mut spreads: BTreeMap<usize, (Rational, Rational)> = BTreeMap::new();
    let mut cursor = node;
    while let PolicyTree::Insert { item, children } = cursor {
        let item_mass = items[*item].expected_size.clone();
        if !seg.is_empty() {
            // condition 1: the segment mass budget
            if &mass + &item_mass > caps.mass {
                break;
            }
            // condition 2: per-size value spread within the gap
            let mut ok = true;
            let mut trial = spreads.clone();
            for (&s, child) in children {
                if s == 0 {
                    continue;
                }
                let v = eval_units(child, items, used + s, max_units);
                let e = trial.entry(s).or_insert_with(|| (v.clone(), v.clone()));
                if v < e.0 {
                    e.0 = v.clone();
                }
                if v > e.1 {
                    e.1 = v;
                }
                if &e.1 - &e.0 > caps.value_gap {
                    ok = false;
                    break;
                }
            }
            if !ok {
                break;
            }
            spreads = trial;
        } else {
            for (&s, child) in children {
                if s == 0 {
                    continue;
                }
                let v = eval_units(child, items, used + s, max_units);
                spreads.insert(s, (v.clone(), v));
            }
        }
        seg.push(*item);
        mass += item_mass;
        match children.get(&0) {
            Some(next @ PolicyTree::Insert { .. }) => cursor = next,
            _ => break,
        }
    }

    // `cursor` is now the first node after the segment on the leftmost path
    // (Stop when the path ended). The last segment node's children provide
    // the rewiring targets; block totals land on its same-size children.
    let last = locate_last(node, seg.len());
    let PolicyTree::Insert { children: last_children, .. } = last else {
        unreachable!("segment is nonempty");
    };
    let mut totals = BTreeSet::new();
    totals.insert(0usize);
    for &b in &seg {
        let mut next = BTreeSet::new();
        for t in &totals {
            for (s, _) in items[b].size_dist.support() {
                next.insert(t + s);
            }
        }
        totals = next;
    }
    let mut children = BTreeMap::new();
    for t in totals {
        if used + t > max_units {
            continue;
        }
        if let Some(child @ PolicyTree::Insert { .. }) = last_children.get(&t) {
            children.insert(t, build_block(child, items, caps, used + t, max_units));
        }
    }
    BlockTree {
        items: seg,
        children,
    }
}

/// The `len`-th node (1-based) along the leftmost path.
fn locate_last(node: &PolicyTree, len: usize) -> &PolicyTree {
    let mut cursor = node;
    for _ in 1..len {
        let PolicyTree::Insert { children, .. } = cursor else {
            break;
        };
        cursor = children.get(&0).expect("segment followed zero edges");
    }
    cursor
}
