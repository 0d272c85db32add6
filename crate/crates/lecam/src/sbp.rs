//! Stochastic bin packing: heavy-type classification, per-bin configuration
//! enumeration, the vector-scheduling LP feasibility test with round-robin
//! rounding, and the merge procedure that avoids relaxing the overflow
//! probability.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::{One, Signed, Zero};
use rand::Rng;

use crate::cpd::compound_poisson_pmf;
use crate::discretize::{DiscretizationParams, DiscretizedItem};
use crate::dist::{convolve, convolve_all, DiscreteDistribution};
use crate::rational::{rat_to_f64, Rational};
use crate::signature::{exact_set_mass_vector, rounded_signature_up, Signature};
use crate::simplex::{solve_lp, Constraint, LpError, Rel};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SbpConfig {
    pub params: DiscretizationParams,
    /// Heavy-law probability rounding unit (ε²²).
    pub heavy_prob_granularity: Rational,
    /// Relaxed capacity is (1 + cap_relax)·C.
    pub cap_relax: Rational,
    /// Configurations must estimate overflow ≤ p + prob_relax.
    pub prob_relax: Rational,
    /// Merge threshold factor ε; requires ε < (p−p²)/(1+4p).
    pub merge_eps: Rational,
    pub per_bin_heavy_cap: usize,
    pub max_sconfigs: usize,
    pub max_rsig_candidates: usize,
    pub mc_samples: usize,
    pub cpd_tail_tol: f64,
}

impl SbpConfig {
    pub fn new(params: DiscretizationParams) -> Self {
        SbpConfig {
            params,
            heavy_prob_granularity: crate::rational::rat(1, 64),
            cap_relax: crate::rational::rat(1, 10),
            prob_relax: crate::rational::rat(1, 20),
            merge_eps: crate::rational::rat(1, 20),
            per_bin_heavy_cap: 8,
            max_sconfigs: 2_000_000,
            max_rsig_candidates: 5_000,
            mc_samples: 20_000,
            cpd_tail_tol: 1e-12,
        }
    }

    pub fn relaxed_capacity(&self) -> Rational {
        (Rational::one() + &self.cap_relax) * &self.params.grid.capacity
    }
}

/// Distinct rounded heavy size laws Π₁..Π_|ℋ| and the item→type map.
#[derive(Debug, Clone)]
pub struct HeavyTypeTable {
    pub types: Vec<DiscreteDistribution<Rational>>,
    pub item_type: BTreeMap<usize, usize>,
    pub type_members: Vec<Vec<usize>>,
}

impl HeavyTypeTable {
    pub fn type_counts(&self) -> Vec<usize> {
        self.type_members.iter().map(|m| m.len()).collect()
    }
}

/// Per-bin heavy census: `counts[k]` items of type Π_k.
pub type Arrangement = Vec<usize>;

/// Per-bin summary: heavy arrangement plus ceiling-rounded light signature.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Configuration {
    pub arrangement: Arrangement,
    pub rsig: Signature,
}

/// A packing: item indices per bin plus each bin's exact overflow
/// probability at the relaxed capacity.
#[derive(Debug, Clone)]
pub struct PackingSolution {
    pub bins: Vec<Vec<usize>>,
    pub overflow: Vec<Rational>,
    pub relaxed_capacity: Rational,
    /// Light items the LP left fractional (assigned round-robin).
    pub fractional: Vec<usize>,
}

/// Rounds the nonzero masses of a heavy law down to multiples of `gamma`;
/// the freed mass moves to zero.
fn round_heavy_law(
    dist: &DiscreteDistribution<Rational>,
    gamma: &Rational,
) -> DiscreteDistribution<Rational> {
    let grid = dist.grid().clone();
    let mut mass: BTreeMap<usize, Rational> = BTreeMap::new();
    let mut nonzero_total = Rational::zero();
    for (k, m) in dist.support() {
        if k == 0 {
            continue;
        }
        let rounded = (m / gamma).floor() * gamma;
        if !rounded.is_zero() {
            nonzero_total += &rounded;
            mass.insert(k, rounded);
        }
    }
    mass.insert(0, Rational::one() - nonzero_total);
    DiscreteDistribution::from_mass(grid, mass).expect("rounded masses stay a distribution")
}

/// Heavy/light split at the (inclusive) bin-packing cutoff, heavy laws
/// rounded and deduplicated into types.
pub fn classify_heavy(
    items: &[DiscretizedItem],
    cfg: &SbpConfig,
) -> (HeavyTypeTable, Vec<usize>) {
    let mut light = Vec::new();
    let mut types: Vec<DiscreteDistribution<Rational>> = Vec::new();
    let mut item_type = BTreeMap::new();
    let mut type_members: Vec<Vec<usize>> = Vec::new();
    for (i, it) in items.iter().enumerate() {
        if it.expected_size >= cfg.params.heavy_cutoff_sbp {
            let rounded = round_heavy_law(&it.size_dist, &cfg.heavy_prob_granularity);
            let t = match types.iter().position(|d| *d == rounded) {
                Some(t) => t,
                None => {
                    types.push(rounded);
                    type_members.push(Vec::new());
                    types.len() - 1
                }
            };
            item_type.insert(i, t);
            type_members[t].push(i);
        } else {
            light.push(i);
        }
    }
    (
        HeavyTypeTable {
            types,
            item_type,
            type_members,
        },
        light,
    )
}

/// `Pr(Cf, capacity)`: exact convolution of the arrangement's rounded heavy
/// laws, convolved with the compound Poisson law of the rounded signature;
/// upper-tail mass at `capacity`.
pub fn config_overflow_prob(
    cf: &Configuration,
    table: &HeavyTypeTable,
    capacity: &Rational,
    tail_tol: f64,
) -> Result<f64> {
    let grid = cf.rsig.grid().clone();
    let top = grid.top_index();
    let mut heavy = DiscreteDistribution::<Rational>::point_mass(grid.clone(), 0);
    for (t, &count) in cf.arrangement.iter().enumerate() {
        for _ in 0..count {
            heavy = convolve(&heavy, &table.types[t], top)?;
        }
    }
    let light = compound_poisson_pmf(&cf.rsig.cpd_spec()?, top, tail_tol)?;
    let total = convolve(&heavy.to_float(), &light, top)?;
    Ok(total.tail_prob(capacity))
}

/// LP-based feasibility test for one s-configuration. Heavy items are
/// assigned by type counts; light items fractionally via the vector
/// scheduling LP, whose basic solution leaves at most (|𝒮|−1)·m items
/// fractional; those are distributed round-robin by ascending index.
/// Returns `None` when the heavy census or the LP is infeasible.
pub fn feasibility_test(
    configs: &[Configuration],
    items: &[DiscretizedItem],
    table: &HeavyTypeTable,
    lights: &[usize],
    cfg: &SbpConfig,
) -> Result<Option<PackingSolution>> {
    let m = configs.len();
    let totals = table.type_counts();
    for (t, &total) in totals.iter().enumerate() {
        let assigned: usize = configs.iter().map(|c| c.arrangement[t]).sum();
        if assigned != total {
            return Ok(None);
        }
    }
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut frac_out: Vec<usize> = Vec::new();
    for (t, members) in table.type_members.iter().enumerate() {
        let mut next = members.iter();
        for (j, cf) in configs.iter().enumerate() {
            for _ in 0..cf.arrangement[t] {
                bins[j].push(*next.next().expect("census checked above"));
            }
        }
    }

    if !lights.is_empty() {
        let grid = &cfg.params.grid;
        let dims = grid.len() - 1;
        let nv = lights.len() * m;
        let var = |i: usize, j: usize| i * m + j;
        let mut cons: Vec<Constraint<Rational>> = Vec::new();
        for i in 0..lights.len() {
            let mut coeffs = vec![Rational::zero(); nv];
            for j in 0..m {
                coeffs[var(i, j)] = Rational::one();
            }
            cons.push(Constraint {
                coeffs,
                rel: Rel::Eq,
                rhs: Rational::one(),
            });
        }
        let masses: Vec<Vec<Rational>> = lights
            .iter()
            .map(|&i| items[i].nonzero_mass_vector())
            .collect();
        for (j, cf) in configs.iter().enumerate() {
            for k in 1..=dims {
                let mut coeffs = vec![Rational::zero(); nv];
                let mut any = false;
                for (i, mv) in masses.iter().enumerate() {
                    if !mv[k - 1].is_zero() {
                        coeffs[var(i, j)] = mv[k - 1].clone();
                        any = true;
                    }
                }
                if any {
                    cons.push(Constraint {
                        coeffs,
                        rel: Rel::Le,
                        rhs: cf.rsig.mass_at(k),
                    });
                }
            }
        }
        let objective = vec![Rational::zero(); nv];
        let sol = match solve_lp(&objective, &cons) {
            Ok(s) => s,
            Err(LpError::Infeasible) => return Ok(None),
            Err(LpError::Unbounded) => {
                return Err(Error::InvalidInput(
                    "feasibility LP cannot be unbounded".into(),
                ))
            }
        };
        let mut fractional = Vec::new();
        for (i, &item) in lights.iter().enumerate() {
            let positives: Vec<usize> = (0..m)
                .filter(|&j| sol.x[var(i, j)].is_positive())
                .collect();
            if positives.len() == 1 && sol.x[var(i, positives[0])].is_one() {
                bins[positives[0]].push(item);
            } else {
                fractional.push(item);
            }
        }
        fractional.sort_unstable();
        for (t, &item) in fractional.iter().enumerate() {
            bins[t % m].push(item);
        }
        frac_out = fractional;
    }

    let rel_cap = cfg.relaxed_capacity();
    let mut overflow = Vec::with_capacity(m);
    for bin in &mut bins {
        bin.sort_unstable();
        overflow.push(exact_overflow(items, bin, &cfg.params.grid, &rel_cap));
    }
    Ok(Some(PackingSolution {
        bins,
        overflow,
        relaxed_capacity: rel_cap,
        fractional: frac_out,
    }))
}

/// Exact `Pr[X̃(bin) ≥ capacity]` by rational convolution.
pub fn exact_overflow(
    items: &[DiscretizedItem],
    bin: &[usize],
    grid: &Arc<crate::grid::SizeGrid>,
    capacity: &Rational,
) -> Rational {
    let dists: Vec<&DiscreteDistribution<Rational>> =
        bin.iter().map(|&i| &items[i].size_dist).collect();
    let sum = convolve_all(&dists, grid, grid.top_index()).expect("one grid");
    sum.tail_prob(capacity)
}

/// Candidate per-bin configurations: arrangements within the heavy census ×
/// ceiling-rounded signatures of light subsets, prefiltered by the overflow
/// estimate. Deterministic order.
fn candidate_configurations(
    items: &[DiscretizedItem],
    table: &HeavyTypeTable,
    lights: &[usize],
    p: &Rational,
    cfg: &SbpConfig,
) -> Result<Vec<Configuration>> {
    let grid = &cfg.params.grid;
    let q = &cfg.params.prob_granularity;
    // Arrangements: count vectors bounded by the census and the per-bin cap.
    let totals = table.type_counts();
    let mut arrangements: Vec<Arrangement> = vec![vec![]];
    for &t in &totals {
        let mut next = Vec::new();
        for a in &arrangements {
            let used: usize = a.iter().sum();
            for c in 0..=t.min(cfg.per_bin_heavy_cap.saturating_sub(used)) {
                let mut b = a.clone();
                b.push(c);
                next.push(b);
            }
        }
        arrangements = next;
    }
    // Rounded signatures of light subsets.
    if lights.len() > 20 {
        return Err(Error::ResourceCap {
            what: "light subsets for rsig candidates",
            count: lights.len(),
        });
    }
    let mut rsigs: Vec<Signature> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for mask in 0u64..(1u64 << lights.len()) {
        let subset: Vec<&DiscretizedItem> = lights
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, &i)| &items[i])
            .collect();
        let exact = exact_set_mass_vector(&subset, grid);
        let rsig = rounded_signature_up(&exact, grid, q);
        if seen.insert(rsig.counts().to_vec()) {
            rsigs.push(rsig);
        }
        if rsigs.len() > cfg.max_rsig_candidates {
            return Err(Error::ResourceCap {
                what: "rounded signature candidates",
                count: rsigs.len(),
            });
        }
    }
    rsigs.sort();

    let rel_cap = cfg.relaxed_capacity();
    let bound = rat_to_f64(&(p + &cfg.prob_relax)) + 1e-12;
    let mut out = Vec::new();
    for a in &arrangements {
        for r in &rsigs {
            let empty_heavy = a.iter().all(|&c| c == 0);
            if empty_heavy && r.is_zero() {
                continue; // an empty bin never helps at minimal m
            }
            let cf = Configuration {
                arrangement: a.clone(),
                rsig: r.clone(),
            };
            if config_overflow_prob(&cf, table, &rel_cap, cfg.cpd_tail_tol)? <= bound {
                out.push(cf);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Algorithm: for m = 1..n, enumerate s-configurations (multisets of
/// candidate configurations), accept the first that passes the census,
/// the per-configuration overflow filter (already folded into the candidate
/// list), and the LP feasibility test.
pub fn solve_sbp(
    items: &[DiscretizedItem],
    p: &Rational,
    cfg: &SbpConfig,
) -> Result<PackingSolution> {
    if !p.is_positive() || *p >= Rational::one() {
        return Err(Error::InvalidInput(
            "overflow probability must lie in (0, 1)".into(),
        ));
    }
    if items.is_empty() {
        return Ok(PackingSolution {
            bins: vec![],
            overflow: vec![],
            relaxed_capacity: cfg.relaxed_capacity(),
            fractional: vec![],
        });
    }
    let (table, lights) = classify_heavy(items, cfg);
    let candidates = candidate_configurations(items, &table, &lights, p, cfg)?;
    let totals = table.type_counts();
    let light_total = {
        let subset: Vec<&DiscretizedItem> = lights.iter().map(|&i| &items[i]).collect();
        exact_set_mass_vector(&subset, &cfg.params.grid)
    };
    // Optimistic per-coordinate cover: the largest candidate signature mass.
    let dims = cfg.params.grid.len() - 1;
    let mut max_rsig = vec![0u64; dims];
    for c in &candidates {
        for (k, &v) in c.rsig.counts().iter().enumerate() {
            max_rsig[k] = max_rsig[k].max(v);
        }
    }
    let q = &cfg.params.prob_granularity;
    let mut budget = cfg.max_sconfigs;
    for m in 1..=items.len() {
        let mut chosen: Vec<usize> = Vec::new();
        if let Some(sol) = try_sconfigs(
            items,
            &table,
            &lights,
            &candidates,
            &totals,
            &light_total,
            &max_rsig,
            q,
            cfg,
            m,
            0,
            &mut chosen,
            &mut budget,
        )? {
            return Ok(sol);
        }
    }
    Err(Error::Infeasible(
        "no s-configuration passes the feasibility test".into(),
    ))
}

#[allow(clippy::too_many_arguments)]
fn try_sconfigs(
    items: &[DiscretizedItem],
    table: &HeavyTypeTable,
    lights: &[usize],
    candidates: &[Configuration],
    totals: &[usize],
    light_total: &[Rational],
    max_rsig: &[u64],
    q: &Rational,
    cfg: &SbpConfig,
    remaining: usize,
    min_idx: usize,
    chosen: &mut Vec<usize>,
    budget: &mut usize,
) -> Result<Option<PackingSolution>> {
    if *budget == 0 {
        return Err(Error::ResourceCap {
            what: "s-configuration trials",
            count: cfg.max_sconfigs,
        });
    }
    *budget -= 1;
    if remaining == 0 {
        let configs: Vec<Configuration> =
            chosen.iter().map(|&i| candidates[i].clone()).collect();
        return feasibility_test(&configs, items, table, lights, cfg);
    }
    'next: for idx in min_idx..candidates.len() {
        // Census bound: heavy counts must stay within the totals and must be
        // completable (remaining bins can still hold what is left).
        let mut used = vec![0usize; totals.len()];
        for &c in chosen.iter() {
            for (t, &n) in candidates[c].arrangement.iter().enumerate() {
                used[t] += n;
            }
        }
        for (t, &n) in candidates[idx].arrangement.iter().enumerate() {
            used[t] += n;
            if used[t] > totals[t] {
                continue 'next;
            }
        }
        let max_per_bin = cfg.per_bin_heavy_cap;
        let deficit: usize = totals
            .iter()
            .zip(&used)
            .map(|(&tot, &u)| tot - u)
            .sum();
        if deficit > (remaining - 1) * max_per_bin {
            continue 'next;
        }
        // Light cover bound: chosen signatures plus optimistic remainder
        // must dominate the exact light mass.
        for (k, lt) in light_total.iter().enumerate() {
            let mut have: u64 = candidates[idx].rsig.counts()[k];
            for &c in chosen.iter() {
                have += candidates[c].rsig.counts()[k];
            }
            have += (remaining as u64 - 1) * max_rsig[k];
            let have_mass = Rational::from_integer(have.into()) * q;
            if have_mass < *lt {
                continue 'next;
            }
        }
        chosen.push(idx);
        let res = try_sconfigs(
            items, table, lights, candidates, totals, light_total, max_rsig, q, cfg,
            remaining - 1, idx, chosen, budget,
        )?;
        chosen.pop();
        if res.is_some() {
            return Ok(res);
        }
    }
    Ok(None)
}

/// Monte Carlo estimate of `Pr[Σ X_i ≥ capacity]` with a 95% binomial CI.
pub fn estimate_overflow_mc<R: Rng>(
    dists: &[&DiscreteDistribution<Rational>],
    capacity: &Rational,
    samples: usize,
    rng: &mut R,
) -> (f64, (f64, f64)) {
    assert!(samples >= 1);
    let step = dists
        .first()
        .map(|d| d.grid().step.clone())
        .unwrap_or_else(Rational::one);
    // Σ k_i·step ≥ capacity ⟺ Σ k_i ≥ ⌈capacity/step⌉ (integer compare).
    let need = (capacity / &step).ceil();
    let need = num::ToPrimitive::to_usize(&need.to_integer()).unwrap_or(usize::MAX);
    let mut hits = 0usize;
    for _ in 0..samples {
        let total: usize = dists.iter().map(|d| d.sample(rng)).sum();
        if total >= need {
            hits += 1;
        }
    }
    let est = hits as f64 / samples as f64;
    let half = 1.96 * (est * (1.0 - est) / samples as f64).sqrt();
    (est, ((est - half).max(0.0), (est + half).min(1.0)))
}

/// Outcome of the no-relaxation variant, keeping the per-input-bin piece
/// counts so the ≤3-pieces claim is checkable.
#[derive(Debug, Clone)]
pub struct NorelaxOutcome {
    pub packing: PackingSolution,
    pub base_bins: usize,
    pub pieces_per_bin: Vec<usize>,
}

/// Splits every bin of the relaxed-probability packing into singletons and
/// greedily merges pairs while the estimated merged overflow stays at most
/// (1−ε)p (and the exact overflow at most p, which the output contract
/// requires). Final bins keep overflow ≤ p at the relaxed capacity.
pub fn solve_sbp_norelax<R: Rng>(
    items: &[DiscretizedItem],
    p: &Rational,
    cfg: &SbpConfig,
    rng: &mut R,
) -> Result<NorelaxOutcome> {
    let one = Rational::one();
    if !p.is_positive() || *p >= one {
        return Err(Error::InvalidInput(
            "overflow probability must lie in (0, 1)".into(),
        ));
    }
    let eps_bound = (p - p * p) / (&one + Rational::from_integer(4.into()) * p);
    if cfg.merge_eps >= eps_bound {
        return Err(Error::InvalidInput(format!(
            "merge_eps must be below (p-p²)/(1+4p) = {eps_bound}"
        )));
    }
    let base = solve_sbp(items, p, cfg)?;
    let rel_cap = base.relaxed_capacity.clone();
    let grid = &cfg.params.grid;
    let merge_bound = (&one - &cfg.merge_eps) * p;
    let mc_bound = rat_to_f64(&merge_bound);

    let mut final_bins: Vec<Vec<usize>> = Vec::new();
    let mut pieces_per_bin = Vec::new();
    for bin in &base.bins {
        // Each item alone must satisfy the strict bound, otherwise no
        // feasible unrelaxed solution exists at all.
        for &i in bin {
            if exact_overflow(items, &[i], grid, &rel_cap) > *p {
                return Err(Error::Infeasible(format!(
                    "item {} alone exceeds the overflow bound",
                    items[i].id
                )));
            }
        }
        let mut groups: Vec<Vec<usize>> = bin.iter().map(|&i| vec![i]).collect();
        'merge: loop {
            for a in 0..groups.len() {
                for b in a + 1..groups.len() {
                    let merged: Vec<usize> =
                        groups[a].iter().chain(groups[b].iter()).copied().collect();
                    let dists: Vec<&DiscreteDistribution<Rational>> =
                        merged.iter().map(|&i| &items[i].size_dist).collect();
                    let (est, _) = estimate_overflow_mc(&dists, &rel_cap, cfg.mc_samples, rng);
                    if est <= mc_bound && exact_overflow(items, &merged, grid, &rel_cap) <= *p {
                        let mut m = merged;
                        m.sort_unstable();
                        groups.remove(b);
                        groups.remove(a);
                        groups.push(m);
                        groups.sort();
                        continue 'merge;
                    }
                }
            }
            break;
        }
        pieces_per_bin.push(groups.len());
        final_bins.extend(groups);
    }
    let overflow: Vec<Rational> = final_bins
        .iter()
        .map(|bin| exact_overflow(items, bin, grid, &rel_cap))
        .collect();
    Ok(NorelaxOutcome {
        packing: PackingSolution {
            bins: final_bins,
            overflow,
            relaxed_capacity: rel_cap,
            fractional: vec![],
        },
        base_bins: base.bins.len(),
        pieces_per_bin,
    })
}
