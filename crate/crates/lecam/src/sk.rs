//! Adaptive stochastic knapsack: block-adaptive topology enumeration, the
//! signature-indexed placement DP (with the one-item-per-group constraint of
//! the generalized problem), cancelation expansion, and the unlimited-copy
//! dynamic program.

use std::collections::{BTreeMap, BTreeSet};

use num::{One, Signed, Zero};

use crate::discretize::{DiscretizedItem, LawEntry, RawItem};
use crate::policy::{eval_block, BlockTree};
use crate::rational::Rational;
use crate::signature::{item_block_signature, BlockSignature};
use crate::{Error, Result};

/// A set of mutually exclusive items: any policy packs at most one member on
/// each realization path.
#[derive(Debug, Clone)]
pub struct ItemGroup {
    pub id: String,
    /// Indices into the shared discretized-item slate.
    pub members: Vec<usize>,
}

/// Knobs for the block-adaptive search. Topology enumeration is capped far
/// below the astronomic constant the full analysis allows; quality is
/// oracle-relative.
#[derive(Debug, Clone)]
pub struct SkConfig {
    /// Block-signature profit granularity (unit is `q_p · opt_estimate`).
    pub block_profit_granularity: Rational,
    /// Block-signature probability granularity.
    pub block_prob_granularity: Rational,
    pub opt_estimate: Rational,
    /// Total blocks allowed in a topology.
    pub max_blocks: usize,
    /// How many realized-total sizes may carry children.
    pub max_branch_keys: usize,
    /// Multi-item blocks keep Σ E[X̃] at or below this.
    pub block_mass_cap: Rational,
    pub max_states: usize,
}

impl SkConfig {
    pub fn desk_default(opt_estimate: Rational) -> Self {
        SkConfig {
            block_profit_granularity: crate::rational::rat(1, 8),
            block_prob_granularity: crate::rational::rat(1, 8),
            opt_estimate,
            max_blocks: 3,
            max_branch_keys: 4,
            block_mass_cap: crate::rational::rat(1, 2),
            max_states: 200_000,
        }
    }
}

/// Tree shape of a block-adaptive policy; children keyed by realized total
/// block size in grid units.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Topology {
    pub children: BTreeMap<usize, Topology>,
}

impl Topology {
    pub fn single() -> Self {
        Topology {
            children: BTreeMap::new(),
        }
    }

    pub fn block_count(&self) -> usize {
        1 + self.children.values().map(|c| c.block_count()).sum::<usize>()
    }
}

/// All topologies with at most `max_blocks` blocks whose branch edges use
/// the given keys (at most `max_branching` children per block).
pub fn enumerate_topologies(
    max_blocks: usize,
    branch_keys: &[usize],
    max_branching: usize,
) -> Vec<Topology> {
    let mut out = Vec::new();
    for b in 1..=max_blocks {
        out.extend(topologies_exact(b, branch_keys, max_branching));
    }
    out.sort();
    out.dedup();
    out
}

fn topologies_exact(blocks: usize, keys: &[usize], max_branching: usize) -> Vec<Topology> {
    if blocks == 0 {
        return vec![];
    }
    if blocks == 1 {
        return vec![Topology::single()];
    }
    // Distribute blocks-1 among a subset of keys, each child nonempty.
    let mut out = Vec::new();
    distribute(
        blocks - 1,
        keys,
        keys,
        max_branching,
        &mut BTreeMap::new(),
        &mut out,
    );
    out
}

fn distribute(
    remaining: usize,
    all_keys: &[usize],
    open_keys: &[usize],
    max_branching: usize,
    acc: &mut BTreeMap<usize, Topology>,
    out: &mut Vec<Topology>,
) {
    if remaining == 0 {
        out.push(Topology {
            children: acc.clone(),
        });
        return;
    }
    if open_keys.is_empty() || acc.len() >= max_branching {
        return;
    }
    let key = open_keys[0];
    // skip this key
    distribute(remaining, all_keys, &open_keys[1..], max_branching, acc, out);
    // or give it a child with 1..=remaining blocks (subtrees use all keys)
    for sub_blocks in 1..=remaining {
        for sub in topologies_exact(sub_blocks, all_keys, max_branching) {
            acc.insert(key, sub);
            distribute(
                remaining - sub_blocks,
                all_keys,
                &open_keys[1..],
                max_branching,
                acc,
                out,
            );
            acc.remove(&key);
        }
    }
}

/// Flat view of a topology: per block its parent and children-keys, in
/// preorder. Block 0 is the root.
struct TopologyIndex {
    parent: Vec<Option<usize>>,
    /// ancestors[b] includes b itself.
    ancestors: Vec<BTreeSet<usize>>,
    /// children as (key, block id) pairs per block.
    children: Vec<Vec<(usize, usize)>>,
    antichains: Vec<Vec<usize>>,
}

impl TopologyIndex {
    fn build(topo: &Topology) -> Self {
        let mut parent = Vec::new();
        let mut children: Vec<Vec<(usize, usize)>> = Vec::new();
        fn walk(
            t: &Topology,
            par: Option<usize>,
            parent: &mut Vec<Option<usize>>,
            children: &mut Vec<Vec<(usize, usize)>>,
        ) -> usize {
            let id = parent.len();
            parent.push(par);
            children.push(Vec::new());
            for (&key, sub) in &t.children {
                let cid = walk(sub, Some(id), parent, children);
                children[id].push((key, cid));
            }
            id
        }
        walk(topo, None, &mut parent, &mut children);
        let n = parent.len();
        let mut ancestors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for b in 0..n {
            let mut cur = Some(b);
            while let Some(c) = cur {
                ancestors[b].insert(c);
                cur = parent[c];
            }
        }
        // Antichains: nonempty block sets with no ancestor-descendant pair.
        let mut antichains = Vec::new();
        for mask in 1u32..(1 << n) {
            let blocks: Vec<usize> = (0..n).filter(|&b| mask >> b & 1 == 1).collect();
            let ok = blocks.iter().all(|&a| {
                blocks
                    .iter()
                    .all(|&b| a == b || (!ancestors[a].contains(&b) && !ancestors[b].contains(&a)))
            });
            if ok {
                antichains.push(blocks);
            }
        }
        TopologyIndex {
            parent,
            ancestors,
            children,
            antichains,
        }
    }

    fn blocks(&self) -> usize {
        self.parent.len()
    }

    fn is_strict_descendant(&self, b: usize, of: usize) -> bool {
        b != of && self.ancestors[b].contains(&of)
    }
}

#[derive(Debug, Clone)]
struct DpState {
    /// (group index, member index within group, block id), in placement order.
    placements: Vec<(usize, usize, usize)>,
    block_mean: Vec<Rational>,
    block_count: Vec<usize>,
}

/// Reachability DP over per-block signature tuples. Transitions place at
/// most one member of the current group into an antichain of blocks (so no
/// realization path sees the group twice); with `fixed_order`, placements may
/// not sit above an already-populated block on their path. Among completed
/// configurations, witnesses are rebuilt and the best exact block-tree value
/// is returned.
pub fn block_dp(
    items: &[DiscretizedItem],
    groups: &[ItemGroup],
    topology: &Topology,
    capacity: &Rational,
    cfg: &SkConfig,
    fixed_order: bool,
) -> Result<(BlockTree, Rational)> {
    let index = TopologyIndex::build(topology);
    let nblocks = index.blocks();
    let zero_sig = |grid: &std::sync::Arc<crate::grid::SizeGrid>| {
        BlockSignature::zero(
            grid.clone(),
            &cfg.block_profit_granularity * &cfg.opt_estimate,
            cfg.block_prob_granularity.clone(),
        )
    };
    let grid = items
        .first()
        .map(|it| it.size_dist.grid().clone())
        .ok_or_else(|| Error::InvalidInput("block_dp needs at least one item".into()))?;
    let member_sigs: BTreeMap<usize, BlockSignature> = groups
        .iter()
        .flat_map(|g| g.members.iter().copied())
        .map(|i| {
            (
                i,
                item_block_signature(
                    &items[i],
                    &cfg.block_profit_granularity,
                    &cfg.block_prob_granularity,
                    &cfg.opt_estimate,
                ),
            )
        })
        .collect();

    let key_of = |sigs: &[BlockSignature]| -> Vec<u64> {
        let mut key = Vec::new();
        for s in sigs {
            s.flatten_into(&mut key);
        }
        key
    };
    let empty_sigs: Vec<BlockSignature> = (0..nblocks).map(|_| zero_sig(&grid)).collect();
    let mut states: BTreeMap<Vec<u64>, (Vec<BlockSignature>, DpState)> = BTreeMap::new();
    states.insert(
        key_of(&empty_sigs),
        (
            empty_sigs,
            DpState {
                placements: Vec::new(),
                block_mean: vec![Rational::zero(); nblocks],
                block_count: vec![0; nblocks],
            },
        ),
    );

    for (gi, group) in groups.iter().enumerate() {
        let snapshot: Vec<(Vec<BlockSignature>, DpState)> =
            states.values().cloned().collect();
        for (sigs, st) in snapshot {
            for antichain in &index.antichains {
                // member tuple per block in the antichain, lexicographic
                let mut combo = vec![0usize; antichain.len()];
                'combos: loop {
                    // fixed order: no populated block strictly below a target
                    let placement_ok = !fixed_order
                        || antichain.iter().all(|&b| {
                            (0..nblocks).all(|c| {
                                st.block_count[c] == 0 || !index.is_strict_descendant(c, b)
                            })
                        });
                    if placement_ok {
                        // mass cap per multi-item target block
                        let b3_ok = antichain.iter().enumerate().all(|(t, &b)| {
                            let member = items[group.members[combo[t]]].expected_size.clone();
                            let new_count = st.block_count[b] + 1;
                            new_count == 1
                                || &st.block_mean[b] + &member <= cfg.block_mass_cap
                        });
                        if b3_ok {
                            let mut new_sigs = sigs.clone();
                            let mut new_state = st.clone();
                            for (t, &b) in antichain.iter().enumerate() {
                                let m = group.members[combo[t]];
                                new_sigs[b] = new_sigs[b].add(&member_sigs[&m])?;
                                new_state.placements.push((gi, combo[t], b));
                                new_state.block_mean[b] += &items[m].expected_size;
                                new_state.block_count[b] += 1;
                            }
                            let key = key_of(&new_sigs);
                            states.entry(key).or_insert((new_sigs, new_state));
                            if states.len() > cfg.max_states {
                                return Err(Error::ResourceCap {
                                    what: "block DP states",
                                    count: states.len(),
                                });
                            }
                        }
                    }
                    // advance the member combo
                    let mut pos = antichain.len();
                    loop {
                        if pos == 0 {
                            break 'combos;
                        }
                        pos -= 1;
                        combo[pos] += 1;
                        if combo[pos] < group.members.len() {
                            break;
                        }
                        combo[pos] = 0;
                    }
                }
            }
        }
    }

    // Materialize and evaluate every completed configuration's witness.
    let step = grid.step.clone();
    let max_units = num::ToPrimitive::to_usize(&(capacity / &step).floor().to_integer())
        .unwrap_or(usize::MAX);
    let mut best: Option<(Rational, BlockTree)> = None;
    for (_, (_, st)) in states {
        let tree = materialize(&index, groups, &st);
        let value = eval_block(&tree, items, 0, max_units);
        let better = match &best {
            None => true,
            Some((bv, bt)) => value > *bv || (value == *bv && tree < *bt),
        };
        if better {
            best = Some((value, tree));
        }
    }
    let (value, tree) = best.expect("the empty configuration always exists");
    Ok((tree, value))
}

fn materialize(index: &TopologyIndex, groups: &[ItemGroup], st: &DpState) -> BlockTree {
    let mut items_per_block: Vec<Vec<usize>> = vec![Vec::new(); index.blocks()];
    for &(gi, mi, b) in &st.placements {
        items_per_block[b].push(groups[gi].members[mi]);
    }
    fn build(index: &TopologyIndex, items: &[Vec<usize>], b: usize) -> BlockTree {
        BlockTree {
            items: items[b].clone(),
            children: index.children[b]
                .iter()
                .map(|&(key, cid)| (key, build(index, items, cid)))
                .collect(),
        }
    }
    build(index, &items_per_block, 0)
}

/// Branch keys for topology enumeration: zero plus the most common nonzero
/// support indices, capped.
fn default_branch_keys(items: &[DiscretizedItem], groups: &[ItemGroup], cap: usize) -> Vec<usize> {
    let mut keys: BTreeSet<usize> = BTreeSet::new();
    keys.insert(0);
    for g in groups {
        for &m in &g.members {
            for (k, _) in items[m].size_dist.support() {
                keys.insert(k);
            }
        }
    }
    keys.into_iter().take(cap).collect()
}

/// Generalized stochastic knapsack: enumerate bounded topologies and run the
/// signature DP on each, best tree wins.
pub fn solve_gensk(
    items: &[DiscretizedItem],
    groups: &[ItemGroup],
    capacity: &Rational,
    cfg: &SkConfig,
) -> Result<(BlockTree, Rational)> {
    solve_gensk_ordered(items, groups, capacity, cfg, false)
}

pub fn solve_gensk_ordered(
    items: &[DiscretizedItem],
    groups: &[ItemGroup],
    capacity: &Rational,
    cfg: &SkConfig,
    fixed_order: bool,
) -> Result<(BlockTree, Rational)> {
    if groups.is_empty() {
        return Ok((BlockTree::leaf(vec![]), Rational::zero()));
    }
    let keys = default_branch_keys(items, groups, cfg.max_branch_keys);
    let topologies = enumerate_topologies(cfg.max_blocks, &keys, keys.len());
    let mut best: Option<(Rational, BlockTree)> = None;
    for topo in &topologies {
        let (tree, value) = block_dp(items, groups, topo, capacity, cfg, fixed_order)?;
        let better = match &best {
            None => true,
            Some((bv, bt)) => value > *bv || (value == *bv && tree < *bt),
        };
        if better {
            best = Some((value, tree));
        }
    }
    let (value, tree) = best.expect("at least the single-block topology exists");
    let group_of = group_map(items.len(), groups);
    tree.validate(items, Some(&group_of))?;
    Ok((tree, value))
}

pub fn group_map(n_items: usize, groups: &[ItemGroup]) -> Vec<usize> {
    let mut group_of = vec![usize::MAX; n_items];
    for (gi, g) in groups.iter().enumerate() {
        for &m in &g.members {
            group_of[m] = gi;
        }
    }
    group_of
}

/// Plain stochastic knapsack: every item is its own group.
pub fn solve_sk(
    items: &[DiscretizedItem],
    capacity: &Rational,
    cfg: &SkConfig,
) -> Result<(BlockTree, Rational)> {
    let groups: Vec<ItemGroup> = (0..items.len())
        .map(|i| ItemGroup {
            id: items[i].id.clone(),
            members: vec![i],
        })
        .collect();
    solve_gensk(items, &groups, capacity, cfg)
}

/// Expands an item into its cancelation variants: one member per distinct
/// cancelation threshold t at a support point, with running time
/// `min(X, t)`, profit kept below t and zeroed at and above it. The
/// never-cancel member comes first so the base item stays available.
pub fn expand_cancelations(item: &RawItem) -> Vec<RawItem> {
    let mut members = vec![item.clone()];
    let masses = item.size_masses();
    let supports: Vec<Rational> = masses.keys().cloned().collect();
    for t in &supports {
        if t.is_zero() {
            continue; // canceling at 0 is the same as never packing
        }
        let mut law: Vec<LawEntry> = Vec::new();
        let mut cut_mass = Rational::zero();
        for e in &item.law {
            if e.prob.is_zero() {
                continue;
            }
            if e.size < *t {
                law.push(e.clone());
            } else {
                cut_mass += &e.prob;
            }
        }
        if !cut_mass.is_zero() {
            law.push(LawEntry {
                size: t.clone(),
                profit: Rational::zero(),
                prob: cut_mass,
            });
        }
        members.push(RawItem {
            id: format!("{}@{}", item.id, crate::rational::format_rat(t)),
            law,
        });
    }
    // Distinct laws only (cancel at max support can coincide with others).
    let mut seen: Vec<BTreeMap<(Rational, Rational), Rational>> = Vec::new();
    members.retain(|m| {
        let mut law: BTreeMap<(Rational, Rational), Rational> = BTreeMap::new();
        for e in &m.law {
            if !e.prob.is_zero() {
                *law
                    .entry((e.size.clone(), e.profit.clone()))
                    .or_insert_with(Rational::zero) += &e.prob;
            }
        }
        if seen.contains(&law) {
            false
        } else {
            seen.push(law);
            true
        }
    });
    members
}

/// Binary search over a monotone signature-generating function: all
/// thresholds (in `0..=t_max`) where the signature changes, without scanning
/// the full range. Each coordinate must change monotonically in t, so a
/// signature never repeats after changing.
pub fn distinct_signature_thresholds<F: Fn(u64) -> BlockSignature>(
    sig_at: F,
    t_max: u64,
) -> Vec<u64> {
    let mut out = vec![0];
    let mut t = 0u64;
    let mut current = sig_at(0);
    while t < t_max {
        if sig_at(t_max) == current {
            break;
        }
        // smallest t' in (t, t_max] with a different signature
        let (mut lo, mut hi) = (t, t_max);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if sig_at(mid) == current {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        t = hi;
        current = sig_at(t);
        out.push(t);
    }
    out
}

/// Value table and stationary policy of the unlimited-copies knapsack:
/// at remaining capacity s the best item is repeatedly available, zero-size
/// realizations repeat geometrically.
#[derive(Debug, Clone)]
pub struct SkuSolution {
    /// `values[k]` = optimal expected profit with remaining capacity `s_k`.
    pub values: Vec<Rational>,
    /// Best item per capacity (None when no item yields positive value).
    pub policy: Vec<Option<usize>>,
}

pub fn solve_sku(
    items: &[DiscretizedItem],
    capacity: &Rational,
) -> Result<SkuSolution> {
    let grid = items
        .first()
        .map(|it| it.size_dist.grid().clone())
        .ok_or_else(|| Error::InvalidInput("solve_sku needs at least one item".into()))?;
    let max_units = num::ToPrimitive::to_usize(&(capacity / &grid.step).floor().to_integer())
        .unwrap_or(0)
        .min(grid.top_index());
    for it in items {
        if it.size_dist.mass_at(0).is_one() && it.profit_at(0).is_positive() {
            return Err(Error::Unbounded(format!(
                "item {} always realizes size zero with positive profit",
                it.id
            )));
        }
    }
    let mut values: Vec<Rational> = Vec::with_capacity(max_units + 1);
    let mut policy: Vec<Option<usize>> = Vec::with_capacity(max_units + 1);
    for s in 0..=max_units {
        let mut best = Rational::zero();
        let mut best_item = None;
        for (i, it) in items.iter().enumerate() {
            let zero_mass = it.size_dist.mass_at(0);
            let denom = Rational::one() - &zero_mass;
            if denom.is_zero() {
                continue; // profitless degenerate item
            }
            let mut inner = it.profit_at(0);
            for k in 1..=s {
                let pi = it.size_dist.mass_at(k);
                let pr = it.profit_at(k);
                if !pr.is_zero() {
                    inner += pr;
                }
                if !pi.is_zero() {
                    inner += pi * &values[s - k];
                }
            }
            let val = inner / &denom;
            if val > best {
                best = val;
                best_item = Some(i);
            }
        }
        values.push(best);
        policy.push(best_item);
    }
    Ok(SkuSolution { values, policy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{discretize_all, DiscretizationParams};
    use crate::grid::SizeGrid;
    use crate::policy::evaluate_block_tree;
    use crate::rational::{rat, rat_int};
    use std::sync::Arc;

    fn params() -> DiscretizationParams {
        let grid = Arc::new(SizeGrid::new(rat(1, 4), rat(1, 4), rat_int(2), rat_int(1)).unwrap());
        DiscretizationParams::new(grid, rat_int(10), rat_int(10), rat(1, 16)).unwrap()
    }

    fn cfg() -> SkConfig {
        SkConfig {
            block_profit_granularity: rat(1, 64),
            block_prob_granularity: rat(1, 64),
            opt_estimate: rat_int(1),
            max_blocks: 3,
            max_branch_keys: 4,
            block_mass_cap: rat(1, 2),
            max_states: 100_000,
        }
    }

    fn item(id: &str, k: usize, p: Rational, profit: Rational) -> RawItem {
        let prm = params();
        let rest = Rational::one() - &p;
        RawItem::new(
            id,
            vec![
                (prm.grid.size_at(k), profit, p),
                (Rational::zero(), Rational::zero(), rest),
            ],
        )
    }

    #[test]
    fn topology_enumeration_counts() {
        // one key, ≤ 2 blocks: root alone or a 2-chain
        let topos = enumerate_topologies(2, &[0], 1);
        assert_eq!(topos.len(), 2);
        // two keys, ≤ 2 blocks: root, root+child@0, root+child@1
        let topos = enumerate_topologies(2, &[0, 1], 2);
        assert_eq!(topos.len(), 3);
        // ≤ 3 blocks over two keys: root (1); root + one child (2);
        // root + grandchild chains (4); root + both children (1)
        let topos = enumerate_topologies(3, &[0, 1], 2);
        assert_eq!(topos.len(), 1 + 2 + 4 + 1);
        for t in &topos {
            assert!(t.block_count() <= 3);
        }
    }

    #[test]
    fn single_group_single_block_picks_best_member() {
        let prm = params();
        let raws = vec![
            item("weak", 2, rat(1, 2), rat_int(1)),
            item("strong", 2, rat(1, 2), rat_int(3)),
        ];
        let items = discretize_all(&raws, &prm).unwrap();
        let groups = vec![ItemGroup {
            id: "g".into(),
            members: vec![0, 1],
        }];
        let (tree, value) = block_dp(
            &items,
            &groups,
            &Topology::single(),
            &rat_int(1),
            &cfg(),
            false,
        )
        .unwrap();
        // expected truncated profit of "strong": p̃ = 3·1/2 = 3/2
        assert_eq!(value, rat(3, 2));
        assert_eq!(tree.items, vec![1]);
    }

    #[test]
    fn empty_groups_give_empty_policy() {
        let prm = params();
        let raws = vec![item("a", 2, rat(1, 2), rat_int(1))];
        let items = discretize_all(&raws, &prm).unwrap();
        let (tree, value) = solve_gensk(&items, &[], &rat_int(1), &cfg()).unwrap();
        assert!(tree.items.is_empty());
        assert_eq!(value, rat_int(0));
    }

    #[test]
    fn block_dp_matches_exhaustive_assignment_on_chain() {
        // 3 singleton groups, a 2-block chain (child at total 0), coarse grid:
        // compare against brute force over all assignments of ≤1 item per
        // block with no repeats along the chain.
        let prm = params();
        let raws = vec![
            item("a", 2, rat(1, 2), rat_int(2)),
            item("b", 3, rat(1, 3), rat_int(3)),
            item("c", 4, rat(1, 4), rat_int(4)),
        ];
        let items = discretize_all(&raws, &prm).unwrap();
        let groups: Vec<ItemGroup> = (0..3)
            .map(|i| ItemGroup {
                id: format!("g{i}"),
                members: vec![i],
            })
            .collect();
        let topo = Topology {
            children: BTreeMap::from([(0usize, Topology::single())]),
        };
        let c = cfg();
        let (_, value) = block_dp(&items, &groups, &topo, &rat_int(1), &c, false).unwrap();

        // exhaustive: every assignment of the items to {root, child, skip},
        // items in index order within a block, respecting the multi-item
        // block mass cap exactly as the DP does
        let mut best = Rational::zero();
        for assign in 0..3usize.pow(3) {
            let slots: Vec<usize> = (0..3).map(|i| assign / 3usize.pow(i as u32) % 3).collect();
            let root: Vec<usize> = (0..3).filter(|&i| slots[i] == 0).collect();
            let child: Vec<usize> = (0..3).filter(|&i| slots[i] == 1).collect();
            let cap_ok = |blk: &[usize]| {
                blk.len() <= 1
                    || blk
                        .iter()
                        .map(|&i| items[i].expected_size.clone())
                        .sum::<Rational>()
                        <= c.block_mass_cap
            };
            if !cap_ok(&root) || !cap_ok(&child) {
                continue;
            }
            let tree = BlockTree {
                items: root,
                children: BTreeMap::from([(0usize, BlockTree::leaf(child))]),
            };
            let v = evaluate_block_tree(&tree, &items, &rat_int(1)).unwrap();
            if v > best {
                best = v;
            }
        }
        assert_eq!(value, best);
    }

    #[test]
    fn gensk_on_singleton_groups_equals_solve_sk() {
        let prm = params();
        let raws = vec![
            item("a", 2, rat(1, 2), rat_int(2)),
            item("b", 3, rat(1, 3), rat_int(3)),
        ];
        let items = discretize_all(&raws, &prm).unwrap();
        let groups: Vec<ItemGroup> = (0..2)
            .map(|i| ItemGroup {
                id: format!("g{i}"),
                members: vec![i],
            })
            .collect();
        let c = cfg();
        let (t1, v1) = solve_sk(&items, &rat_int(1), &c).unwrap();
        let (t2, v2) = solve_gensk(&items, &groups, &rat_int(1), &c).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn cancelation_expansion_examples() {
        // single nonzero support point → never-cancel + cancel-at-s1 (profit 0)
        let it = item("j", 2, rat(1, 2), rat_int(5));
        let members = expand_cancelations(&it);
        assert_eq!(members.len(), 2);
        assert_eq!(members[0].law.len(), 2); // the original
        let cancel = &members[1];
        // min(X, s2): sizes unchanged here, but all profit gone
        assert!(cancel
            .law
            .iter()
            .all(|e| e.profit.is_zero()));

        // two-point law: cancel at the smaller point truncates the larger
        let prm = params();
        let two = RawItem::new(
            "k",
            vec![
                (prm.grid.size_at(1), rat_int(1), rat(1, 2)),
                (prm.grid.size_at(3), rat_int(4), rat(1, 2)),
            ],
        );
        let members = expand_cancelations(&two);
        // t=∞, t=s1, t=s3 — all distinct
        assert_eq!(members.len(), 3);
        let at_s1 = &members[1];
        assert_eq!(at_s1.law.len(), 1);
        assert_eq!(at_s1.law[0].size, prm.grid.size_at(1));
        assert_eq!(at_s1.law[0].prob, rat_int(1));
        assert!(at_s1.law[0].profit.is_zero());
        let at_s3 = &members[2];
        // below t: keeps (s1, profit 1, 1/2); at/above: (s3, 0, 1/2)
        assert_eq!(at_s3.law.len(), 2);
        assert_eq!(at_s3.law[1].profit, rat_int(0));
    }

    #[test]
    fn binary_search_finds_signature_change_points() {
        let prm = params();
        // synthetic monotone signature: coordinate grows with t at 10, 20
        let sig_at = |t: u64| {
            let mut counts = vec![0u64; prm.grid.len()];
            counts[0] = (t >= 10) as u64 + (t >= 20) as u64;
            // reuse BlockSignature as the carrier: profit side only
            let mut sig = BlockSignature::zero(prm.grid.clone(), rat_int(1), rat_int(1));
            for _ in 0..counts[0] {
                sig = sig
                    .add(&BlockSignature::zero(prm.grid.clone(), rat_int(1), rat_int(1)))
                    .unwrap();
            }
            // encode count in the profit vector by adding a synthetic item
            sig_with_count(&prm, counts[0])
        };
        let points = distinct_signature_thresholds(sig_at, 100);
        assert_eq!(points, vec![0, 10, 20]);
    }

    fn sig_with_count(prm: &DiscretizationParams, c: u64) -> BlockSignature {
        let raw = RawItem::new(
            "x",
            vec![(
                prm.grid.size_at(1),
                Rational::from_integer((c as i64).into()),
                Rational::one(),
            )],
        );
        let it = crate::discretize::discretize_item(&raw, prm).unwrap();
        item_block_signature(&it, &rat_int(1), &rat_int(1), &rat_int(1))
    }

    #[test]
    fn sku_closed_form_and_monotonicity() {
        let prm = params();
        // π̃(0) = 1/2 with profit 1 at zero size, rest overflows the grid cap
        let raw = RawItem::new(
            "r",
            vec![
                (Rational::zero(), rat_int(2), rat(1, 2)),
                (rat_int(2), Rational::zero(), rat(1, 2)),
            ],
        );
        let items = discretize_all(&[raw], &prm).unwrap();
        let sol = solve_sku(&items, &rat_int(1)).unwrap();
        // DP(0) = p̃(0)/(1−π̃(0)) = 1/(1/2) = 2
        assert_eq!(sol.values[0], rat_int(2));
        for w in sol.values.windows(2) {
            assert!(w[0] <= w[1]);
        }

        // all-zero profits → identically zero
        let raw = RawItem::new(
            "z",
            vec![
                (rat(1, 2), Rational::zero(), rat(1, 2)),
                (Rational::zero(), Rational::zero(), rat(1, 2)),
            ],
        );
        let items = discretize_all(&[raw], &prm).unwrap();
        let sol = solve_sku(&items, &rat_int(1)).unwrap();
        assert!(sol.values.iter().all(|v| v.is_zero()));
        assert!(sol.policy.iter().all(|p| p.is_none()));
    }

    #[test]
    fn sku_detects_divergence() {
        let prm = params();
        let raw = RawItem::new("d", vec![(Rational::zero(), rat_int(1), Rational::one())]);
        let items = discretize_all(&[raw], &prm).unwrap();
        assert!(matches!(
            solve_sku(&items, &rat_int(1)),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn fixed_order_restricts_placements() {
        // Two groups; free order can put group 1 at the root, fixed order
        // cannot place group 0 below group 1.
        let prm = params();
        let raws = vec![
            item("first", 2, rat(1, 2), rat_int(1)),
            item("second", 2, rat(1, 2), rat_int(5)),
        ];
        let items = discretize_all(&raws, &prm).unwrap();
        let groups: Vec<ItemGroup> = (0..2)
            .map(|i| ItemGroup {
                id: format!("g{i}"),
                members: vec![i],
            })
            .collect();
        let c = cfg();
        let (_, free) = solve_gensk_ordered(&items, &groups, &rat_int(1), &c, false).unwrap();
        let (_, fixed) = solve_gensk_ordered(&items, &groups, &rat_int(1), &c, true).unwrap();
        assert!(fixed <= free);
    }
}
