//! Property tests: metric and convolution laws as proptests, plus the
//! explicit-constant probabilistic bounds (equal-signature total variation,
//! configuration fidelity, block replacement) checked on constructed
//! and randomized inputs with exact arithmetic wherever possible.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::{One, Signed, Zero};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lecam::cpd::compound_poisson_pmf;
use lecam::discretize::{discretize_all, discretize_item, DiscretizationParams, RawItem};
use lecam::dist::{
    convolve, convolve_all, stochastically_dominates, total_variation, DiscreteDistribution,
};
use lecam::eum::EumInstance;
use lecam::grid::SizeGrid;
use lecam::oracle::{mc_block_value, OracleBudget};
use lecam::policy::{
    evaluate_block_tree, evaluate_policy, normalize_policy, segment_partition, PolicyTree,
    SegmentCaps,
};
use lecam::rational::{rat, rat_int, rat_to_f64, Rational};
use lecam::sbp::{classify_heavy, config_overflow_prob, feasibility_test, solve_sbp, Configuration, SbpConfig};
use lecam::signature::{
    block_signature, exact_set_mass_vector, items_signature,
    rounded_signature_up, Signature,
};
use lecam::sk::{solve_sk, solve_sku, SkConfig};
use lecam::structure::FeasibilityStructure;
use lecam::utility::UtilityFunction;

fn grid_default() -> Arc<SizeGrid> {
    Arc::new(SizeGrid::new(rat(1, 8), rat(1, 8), rat_int(2), rat_int(1)).unwrap())
}

fn params_with(grid: &Arc<SizeGrid>, q: Rational) -> DiscretizationParams {
    DiscretizationParams::new(grid.clone(), rat_int(10), rat_int(10), q).unwrap()
}

prop_compose! {
    /// A discrete distribution over the default grid with dyadic masses.
    fn arb_dist()(entries in prop::collection::vec((0usize..=16, 1u32..=16), 1..5)) -> DiscreteDistribution<Rational> {
        let grid = grid_default();
        let mut mass: BTreeMap<usize, Rational> = BTreeMap::new();
        let mut total = Rational::zero();
        for (k, w) in entries {
            let m = rat(w as i64, 64);
            let m = if &total + &m > Rational::one() { Rational::one() - &total } else { m };
            total += &m;
            *mass.entry(k).or_insert_with(Rational::zero) += m;
        }
        let rest = Rational::one() - total;
        if rest.is_positive() {
            *mass.entry(0).or_insert_with(Rational::zero) += rest;
        }
        DiscreteDistribution::from_mass(grid, mass).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Δ is a metric (up to the factor-2 convention): symmetric, triangle
    /// inequality, and bounded by 2.
    #[test]
    fn tv_is_a_metric(a in arb_dist(), b in arb_dist(), c in arb_dist()) {
        let ab = total_variation(&a, &b).unwrap();
        let ba = total_variation(&b, &a).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert!(ab >= Rational::zero() && ab <= rat_int(2));
        let ac = total_variation(&a, &c).unwrap();
        let cb = total_variation(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb);
        prop_assert!(total_variation(&a, &a).unwrap().is_zero());
    }

    /// Convolution is commutative and associative given one folding cap,
    /// and folding at the top commutes with re-folding lower.
    #[test]
    fn convolution_laws(a in arb_dist(), b in arb_dist(), c in arb_dist(), cap in 4usize..=16) {
        let top = a.grid().top_index();
        let ab = convolve(&a, &b, top).unwrap();
        let ba = convolve(&b, &a, top).unwrap();
        prop_assert_eq!(&ab, &ba);
        let abc = convolve(&ab, &c, top).unwrap();
        let bca = convolve(&convolve(&b, &c, top).unwrap(), &a, top).unwrap();
        prop_assert_eq!(&abc, &bca);
        // total mass is preserved through folds
        let folded = abc.with_cap(cap);
        let total = folded.on_grid_total() + folded.overflow().clone();
        prop_assert_eq!(total, Rational::one());
        // folding last equals folding stepwise
        let stepwise = convolve(&convolve(&a, &b, cap).unwrap(), &c, cap).unwrap();
        prop_assert_eq!(folded, stepwise);
    }

    /// Step-1 mean preservation and total-effective-profit conservation are
    /// exact for arbitrary finite laws.
    #[test]
    fn discretization_preserves_mean_and_profit(
        law in prop::collection::vec((1i64..=64, 0i64..=8, 1u32..=8), 1..5)
    ) {
        let grid = grid_default();
        let prm = params_with(&grid, rat(1, 16));
        let total_w: i64 = law.iter().map(|(_, _, w)| *w as i64).sum();
        let entries: Vec<(Rational, Rational, Rational)> = law
            .iter()
            .map(|(s, p, w)| (rat(*s, 64), rat_int(*p), rat(*w as i64, total_w)))
            .collect();
        let item = RawItem::new("x", entries);
        let disc = discretize_item(&item, &prm).unwrap();
        // small-region mean is preserved exactly, so only the large-region
        // floor can shrink the mean, never below the all-floored value
        prop_assert!(disc.expected_size <= item.expected_size());
        let small_mean: Rational = item
            .size_masses()
            .iter()
            .filter(|(w, _)| *w <= &prm.small_threshold)
            .map(|(w, q)| w * q)
            .sum();
        // recompute the small-region mean through the recorded size map
        let masses = item.size_masses();
        let disc_small_mean: Rational = disc
            .size_map
            .iter()
            .filter(|br| br.size <= prm.small_threshold)
            .map(|br| {
                let q = &masses[&br.size];
                br.targets
                    .iter()
                    .map(|(idx, frac)| grid.size_at(*idx) * q * frac)
                    .sum::<Rational>()
            })
            .sum();
        prop_assert_eq!(small_mean, disc_small_mean);
        let total_profit: Rational = item.law.iter().map(|e| &e.profit * &e.prob).sum();
        prop_assert_eq!(disc.total_effective_profit(), total_profit);
    }

    /// Signatures add componentwise over disjoint unions.
    #[test]
    fn signature_additive(seed in 0u64..1000) {
        let grid = grid_default();
        let prm = params_with(&grid, rat(1, 16));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raws: Vec<RawItem> = (0..6)
            .map(|i| {
                let k = rng.random_range(1..=6usize);
                let p = rat(rng.random_range(1..=15i64), 16);
                let rest = Rational::one() - &p;
                RawItem::new(
                    format!("i{i}"),
                    vec![
                        (grid.size_at(k), Rational::zero(), p),
                        (Rational::zero(), Rational::zero(), rest),
                    ],
                )
            })
            .collect();
        let items = discretize_all(&raws, &prm).unwrap();
        let refs: Vec<&lecam::discretize::DiscretizedItem> = items.iter().collect();
        let q = rat(1, 16);
        let whole = items_signature(&refs, &grid, &q);
        let left = items_signature(&refs[..3], &grid, &q);
        let right = items_signature(&refs[3..], &grid, &q);
        prop_assert_eq!(whole, left.add(&right).unwrap());
    }

    /// Compound Poisson masses sum to one within the tail tolerance.
    #[test]
    fn cpd_mass_sums_to_one(rates in prop::collection::btree_map(1usize..=8, 1u32..=32, 1..4)) {
        let grid = grid_default();
        let rational_rates: BTreeMap<usize, Rational> =
            rates.iter().map(|(&k, &v)| (k, rat(v as i64, 64))).collect();
        let spec = lecam::cpd::CompoundPoissonSpec::from_rational_rates(grid.clone(), &rational_rates).unwrap();
        let d = compound_poisson_pmf(&spec, grid.top_index(), 1e-12).unwrap();
        let total = d.on_grid_total() + *d.overflow();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    /// Unlimited-copies values are monotone nondecreasing in capacity.
    #[test]
    fn sku_values_monotone(seed in 0u64..500) {
        let grid = grid_default();
        let prm = params_with(&grid, rat(1, 16));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raws: Vec<RawItem> = (0..2)
            .map(|i| {
                let k = rng.random_range(1..=6usize);
                let p = rat(rng.random_range(1..=12i64), 16);
                let rest = Rational::one() - &p;
                RawItem::new(
                    format!("i{i}"),
                    vec![
                        (grid.size_at(k), rat_int(rng.random_range(0..=4i64)), p),
                        (Rational::zero(), Rational::zero(), rest),
                    ],
                )
            })
            .collect();
        let items = discretize_all(&raws, &prm).unwrap();
        let sol = solve_sku(&items, &grid.capacity).unwrap();
        for w in sol.values.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
    }
}

/// Equal signatures bound the total variation of the set sums by the
/// explicit chain: per-item rounding plus both Le Cam terms.
#[test]
fn equal_signatures_bound_total_variation() {
    let grid = grid_default();
    let q = rat(1, 32);
    let prm = params_with(&grid, q.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..25 {
        // Build two light sets whose per-coordinate exact masses are
        // multiples of q partitioned differently: equal signatures by
        // construction, different convolutions.
        let coords: Vec<usize> = (1..=3).collect();
        let mut s1: Vec<RawItem> = Vec::new();
        let mut s2: Vec<RawItem> = Vec::new();
        for &k in &coords {
            let total = rng.random_range(2..=4u64); // total mass = total·q ≤ 1/8
            let split1 = rng.random_range(1..total.min(3) + 1);
            let make = |counts: Vec<u64>, tag: &str| -> Vec<RawItem> {
                counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(j, &c)| {
                        let p = rat(c as i64, 32);
                        let rest = Rational::one() - &p;
                        RawItem::new(
                            format!("{tag}-{k}-{j}"),
                            vec![
                                (grid.size_at(k), Rational::zero(), p),
                                (Rational::zero(), Rational::zero(), rest),
                            ],
                        )
                    })
                    .collect()
            };
            s1.extend(make(vec![split1, total - split1], "a"));
            s2.extend(make(vec![total], "b"));
        }
        let d1 = discretize_all(&s1, &prm).unwrap();
        let d2 = discretize_all(&s2, &prm).unwrap();
        let r1: Vec<&lecam::discretize::DiscretizedItem> = d1.iter().collect();
        let r2: Vec<&lecam::discretize::DiscretizedItem> = d2.iter().collect();
        let sg1 = items_signature(&r1, &grid, &q);
        let sg2 = items_signature(&r2, &grid, &q);
        assert_eq!(sg1, sg2, "constructed to share one signature");

        let conv1 = convolve_all(
            &r1.iter().map(|it| &it.size_dist).collect::<Vec<_>>(),
            &grid,
            grid.top_index(),
        )
        .unwrap();
        let conv2 = convolve_all(
            &r2.iter().map(|it| &it.size_dist).collect::<Vec<_>>(),
            &grid,
            grid.top_index(),
        )
        .unwrap();
        let delta = rat_to_f64(&total_variation(&conv1, &conv2).unwrap());

        let n = (d1.len() + d2.len()) as f64;
        let z_minus_1 = (grid.len() - 1) as f64;
        let rounding = 2.0 * n * rat_to_f64(&q) * z_minus_1;
        let lecam: f64 = d1
            .iter()
            .chain(d2.iter())
            .map(|it| {
                let p = rat_to_f64(&it.nonzero_prob());
                2.0 * p * p
            })
            .sum();
        assert!(
            delta <= rounding + lecam,
            "Δ = {delta} exceeds the explicit budget {}",
            rounding + lecam
        );
    }
}

/// Monotone dominance restated: exactly ordered signatures give dominated
/// compound Poisson laws.
#[test]
fn ordered_signatures_give_dominated_cpds() {
    let grid = grid_default();
    let q = rat(1, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let dims = grid.len() - 1;
        let mut c1 = vec![0u64; dims];
        let mut c2 = vec![0u64; dims];
        for k in 0..5 {
            let a = rng.random_range(0..=4u64);
            c1[k] = a;
            c2[k] = a + rng.random_range(0..=3u64);
        }
        let s1 = Signature::from_counts(grid.clone(), q.clone(), c1);
        let s2 = Signature::from_counts(grid.clone(), q.clone(), c2);
        assert!(s1.leq(&s2).unwrap());
        let d1 = compound_poisson_pmf(&s1.cpd_spec().unwrap(), grid.top_index(), 1e-13).unwrap();
        let d2 = compound_poisson_pmf(&s2.cpd_spec().unwrap(), grid.top_index(), 1e-13).unwrap();
        assert!(stochastically_dominates(&d2, &d1).unwrap());
    }
}

/// Any set reaching expected utility ε keeps its expected size below 3α/ε —
/// the mean-budget lemma, asserted over the whole feasible family.
#[test]
fn mean_budget_holds_on_all_feasible_sets() {
    let grid = Arc::new(SizeGrid::new(rat(1, 8), rat(1, 8), rat_int(2), rat_int(1)).unwrap());
    let prm = params_with(&grid, rat(1, 16));
    // μ is (4/3)-Lipschitz; with ε = 9/10 the bound 3α/ε = 40/9 really bites
    // (total means can reach ~7).
    let utility = UtilityFunction::chi_tilde(rat(1, 4), rat(3, 4)).unwrap();
    let alpha = utility.lipschitz.clone();
    let eps = rat(9, 10);
    let bound = rat_int(3) * &alpha / &eps;
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for _ in 0..10 {
        let n = 8;
        let raws: Vec<RawItem> = (0..n)
            .map(|i| {
                let k = rng.random_range(1..=14usize);
                let p = rat(rng.random_range(1..=16i64), 16);
                let rest = Rational::one() - &p;
                RawItem::new(
                    format!("i{i}"),
                    vec![
                        (grid.size_at(k), Rational::zero(), p),
                        (Rational::zero(), Rational::zero(), rest),
                    ],
                )
            })
            .collect();
        let inst = EumInstance::new(
            raws.clone(),
            FeasibilityStructure::Cardinality { k: n },
            utility.clone(),
            prm.clone(),
        )
        .unwrap();
        for mask in 0u32..(1 << n) {
            let set: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            let util = inst.expected_utility(&set, false);
            if util >= eps {
                let mean: Rational = set.iter().map(|&i| raws[i].expected_size()).sum();
                assert!(
                    mean <= bound,
                    "set with E[μ] = {util} has mean {mean} > 3α/ε = {bound}"
                );
            }
        }
    }
}

/// Every bin-packing solution partitions the items, and the LP rounding
/// keeps each bin's exact signature within the additive rounding allowance.
#[test]
fn sbp_partition_and_rounding_guarantee() {
    let grid = grid_default();
    let params = DiscretizationParams::new(grid.clone(), rat(1, 50), rat(1, 20), rat(1, 64)).unwrap();
    let cfg = SbpConfig::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let n = rng.random_range(3..=6usize);
        let raws: Vec<RawItem> = (0..n)
            .map(|i| {
                let k = rng.random_range(1..=7usize);
                let p = rat(rng.random_range(1..=10i64), 16);
                let rest = Rational::one() - &p;
                RawItem::new(
                    format!("i{i}"),
                    vec![
                        (grid.size_at(k), Rational::zero(), p),
                        (Rational::zero(), Rational::zero(), rest),
                    ],
                )
            })
            .collect();
        let items = discretize_all(&raws, &cfg.params).unwrap();
        let sol = solve_sbp(&items, &rat(3, 10), &cfg).unwrap();
        // partition: every item in exactly one bin
        let mut seen = vec![0usize; n];
        for bin in &sol.bins {
            for &i in bin {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "items must partition");

        // rounding guarantee on a constructed feasibility test
        let (table, lights) = classify_heavy(&items, &cfg);
        if lights.is_empty() {
            continue;
        }
        let m = 2;
        let mut bins: Vec<Vec<&lecam::discretize::DiscretizedItem>> = vec![Vec::new(); m];
        for &i in &lights {
            bins[rng.random_range(0..m)].push(&items[i]);
        }
        let configs: Vec<Configuration> = bins
            .iter()
            .map(|bin| Configuration {
                arrangement: vec![0; table.types.len()],
                rsig: rounded_signature_up(
                    &exact_set_mass_vector(bin, &grid),
                    &grid,
                    &cfg.params.prob_granularity,
                ),
            })
            .collect();
        if table.types.iter().any(|_| true) && !table.type_members.iter().all(|m| m.is_empty()) {
            continue; // the zero arrangement cannot host heavy items
        }
        let packed = feasibility_test(&configs, &items, &table, &lights, &cfg)
            .unwrap()
            .expect("feasible by construction");
        // π_max: the largest per-coordinate light mass
        let pi_max = lights
            .iter()
            .flat_map(|&i| items[i].nonzero_mass_vector())
            .max()
            .unwrap_or_else(Rational::zero);
        let dims = grid.len() - 1;
        let allowance = rat((dims) as i64, 1) * &pi_max;
        for (j, bin) in packed.bins.iter().enumerate() {
            let members: Vec<&lecam::discretize::DiscretizedItem> =
                bin.iter().map(|&i| &items[i]).collect();
            let exact = exact_set_mass_vector(&members, &grid);
            for (k, mass) in exact.iter().enumerate() {
                let cap = configs[j].rsig.mass_at(k + 1) + &allowance;
                assert!(
                    *mass <= cap,
                    "bin {j} coordinate {k}: {mass} > rounded + (|𝒮|−1)·π_max"
                );
            }
        }
    }
}

/// Configuration fidelity: the compound-Poisson configuration estimate stays
/// within the explicit budget of the exact overflow probability.
#[test]
fn configuration_fidelity_budget() {
    let grid = grid_default();
    let params = DiscretizationParams::new(grid.clone(), rat(1, 50), rat(1, 20), rat(1, 64)).unwrap();
    let cfg = SbpConfig::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..20 {
        let n_heavy = rng.random_range(0..=2usize);
        let n_light = rng.random_range(1..=5usize);
        let mut raws: Vec<RawItem> = Vec::new();
        for i in 0..n_heavy {
            let k = rng.random_range(3..=8usize);
            let p = rat(rng.random_range(4..=12i64), 16);
            let rest = Rational::one() - &p;
            raws.push(RawItem::new(
                format!("h{i}"),
                vec![
                    (grid.size_at(k), Rational::zero(), p),
                    (Rational::zero(), Rational::zero(), rest),
                ],
            ));
        }
        for i in 0..n_light {
            let k = rng.random_range(1..=4usize);
            let p = rat(rng.random_range(1..=2i64), 64);
            let rest = Rational::one() - &p;
            raws.push(RawItem::new(
                format!("l{i}"),
                vec![
                    (grid.size_at(k), Rational::zero(), p),
                    (Rational::zero(), Rational::zero(), rest),
                ],
            ));
        }
        let items = discretize_all(&raws, &cfg.params).unwrap();
        let (table, lights) = classify_heavy(&items, &cfg);
        let light_items: Vec<&lecam::discretize::DiscretizedItem> =
            lights.iter().map(|&i| &items[i]).collect();
        let mut arrangement = vec![0usize; table.types.len()];
        for t in table.item_type.values() {
            arrangement[*t] += 1;
        }
        let rsig = rounded_signature_up(
            &exact_set_mass_vector(&light_items, &grid),
            &grid,
            &cfg.params.prob_granularity,
        );
        let config = Configuration { arrangement, rsig };
        let capacity = grid.capacity.clone();
        let estimate = config_overflow_prob(&config, &table, &capacity, 1e-13).unwrap();
        let all: Vec<usize> = (0..items.len()).collect();
        let exact = rat_to_f64(&lecam::sbp::exact_overflow(&items, &all, &grid, &capacity));

        let z = grid.len() as f64;
        let heavy_budget =
            n_heavy as f64 * z * rat_to_f64(&cfg.heavy_prob_granularity);
        let lecam_budget: f64 = lights
            .iter()
            .map(|&i| {
                let p = rat_to_f64(&items[i].nonzero_prob());
                2.0 * p * p
            })
            .sum();
        let sig_budget = z * rat_to_f64(&cfg.params.prob_granularity);
        let budget = heavy_budget + lecam_budget + sig_budget;
        assert!(
            (estimate - exact).abs() <= budget + 1e-12,
            "|{estimate} − {exact}| > budget {budget}"
        );
    }
}

/// Block replacement stability: equal-signature blocks within the mass cap
/// have close values and close sum distributions, with the explicit bounds.
#[test]
fn block_replacement_stability() {
    let grid = grid_default();
    let q = rat(1, 32);
    let prm = params_with(&grid, q.clone());
    let q_p = rat(1, 8);
    let q_pi = rat(1, 32);
    let opt = rat_int(4);
    let mass_cap = rat(1, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    for _ in 0..20 {
        // same construction trick as the signature test: per coordinate,
        // partition a q-multiple of probability mass differently; profits
        // are multiples of the profit unit so both blocks share a signature
        let k = rng.random_range(1..=2usize);
        let total = rng.random_range(2..=4u64);
        let split = rng.random_range(1..total.min(3) + 1);
        let unit_profit = &q_p * &opt; // = 1/2
        let profit_units = rng.random_range(0..=2u64) * 2;
        let make = |counts: Vec<u64>, tag: &str| -> Vec<RawItem> {
            let nonzero = counts.iter().filter(|&&c| c > 0).count() as u64;
            counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(j, &c)| {
                    let p = rat(c as i64, 32);
                    let rest = Rational::one() - &p;
                    // per-item effective profit is an exact unit multiple so
                    // the floor loses nothing and the block sums agree
                    let eff = rat_int((profit_units / nonzero) as i64) * &unit_profit;
                    let cond = &eff / &p;
                    RawItem::new(
                        format!("{tag}{j}"),
                        vec![
                            (grid.size_at(k), cond, p),
                            (Rational::zero(), Rational::zero(), rest),
                        ],
                    )
                })
                .collect()
        };
        let raw1 = make(vec![split, total - split], "m1-");
        let raw2 = make(vec![total], "m2-");
        let b1 = discretize_all(&raw1, &prm).unwrap();
        let b2 = discretize_all(&raw2, &prm).unwrap();
        let r1: Vec<&lecam::discretize::DiscretizedItem> = b1.iter().collect();
        let r2: Vec<&lecam::discretize::DiscretizedItem> = b2.iter().collect();
        let sg1 = block_signature(&r1, &q_p, &q_pi, &opt, &grid);
        let sg2 = block_signature(&r2, &q_p, &q_pi, &opt, &grid);
        assert_eq!(sg1, sg2, "blocks constructed with one signature");
        let mass1: Rational = b1.iter().map(|it| it.expected_size.clone()).sum();
        let mass2: Rational = b2.iter().map(|it| it.expected_size.clone()).sum();
        assert!(mass1 <= mass_cap && mass2 <= mass_cap);

        // block values at a capacity C′ ≤ C
        let cap = grid.capacity.clone();
        let t1 = lecam::policy::BlockTree::leaf((0..b1.len()).collect());
        let t2 = lecam::policy::BlockTree::leaf((0..b2.len()).collect());
        let p1 = evaluate_block_tree(&t1, &b1, &cap).unwrap();
        let p2 = evaluate_block_tree(&t2, &b2, &cap).unwrap();
        let pmax = if p1 > p2 { p1.clone() } else { p2.clone() };
        let z = grid.len() as i64;
        let profit_bound = rat_int(z) * &q_p * &opt
            + rat_int(3) * &mass_cap / &prm.small_threshold * &pmax;
        let diff = (&p1 - &p2).abs();
        assert!(
            diff <= profit_bound,
            "|P(M₁) − P(M₂)| = {diff} > {profit_bound}"
        );

        // distribution distance within per-item rounding plus both Le Cam terms
        let conv1 = convolve_all(
            &r1.iter().map(|it| &it.size_dist).collect::<Vec<_>>(),
            &grid,
            grid.top_index(),
        )
        .unwrap();
        let conv2 = convolve_all(
            &r2.iter().map(|it| &it.size_dist).collect::<Vec<_>>(),
            &grid,
            grid.top_index(),
        )
        .unwrap();
        let delta = rat_to_f64(&total_variation(&conv1, &conv2).unwrap());
        let n = (b1.len() + b2.len()) as f64;
        let dist_budget = 2.0 * n * rat_to_f64(&q_pi) * (grid.len() - 1) as f64
            + b1
                .iter()
                .chain(b2.iter())
                .map(|it| {
                    let p = rat_to_f64(&it.nonzero_prob());
                    2.0 * p * p
                })
                .sum::<f64>();
        assert!(delta <= dist_budget, "Δ = {delta} > budget {dist_budget}");
    }
}

/// Solver-emitted block trees satisfy the structural caps and agree with
/// Monte Carlo within the confidence interval.
#[test]
fn solver_block_trees_respect_caps_and_mc() {
    let grid = Arc::new(SizeGrid::new(rat(1, 2), rat(1, 2), rat(3, 2), rat_int(1)).unwrap());
    let prm = params_with(&grid, rat(1, 8));
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    let budget = OracleBudget::default();
    for case in 0..5 {
        let n = rng.random_range(2..=4usize);
        let raws: Vec<RawItem> = (0..n)
            .map(|i| {
                let p = rat(rng.random_range(1..=4i64), 8);
                let rest = Rational::one() - &p;
                RawItem::new(
                    format!("i{i}"),
                    vec![
                        (grid.size_at(1), rat_int(rng.random_range(1..=6i64)), p),
                        (Rational::zero(), Rational::zero(), rest),
                    ],
                )
            })
            .collect();
        let items = discretize_all(&raws, &prm).unwrap();
        let cfg = SkConfig {
            block_profit_granularity: rat(1, 8),
            block_prob_granularity: rat(1, 8),
            opt_estimate: rat_int(1),
            max_blocks: 3,
            max_branch_keys: 3,
            block_mass_cap: rat(1, 2),
            max_states: 200_000,
        };
        let cap = rat(6, 5);
        let (tree, value) = solve_sk(&items, &cap, &cfg).unwrap();
        // structural caps: block count, branching, multi-item mass
        assert!(tree.block_count() <= cfg.max_blocks);
        assert!(tree.max_branching() <= grid.len());
        assert!(tree.max_multi_block_mass(&items) <= cfg.block_mass_cap);
        tree.validate(&items, None).unwrap();
        // MC smoke within the 95% CI (plus a small slack for the CI itself)
        let mut mc_rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let (est, (lo, hi)) = mc_block_value(&tree, &items, &cap, 200_000, &mut mc_rng);
        let v = rat_to_f64(&value);
        assert!(
            lo - 1e-9 <= v && v <= hi + 1e-9,
            "case {case}: exact {v} outside CI [{lo}, {hi}] (est {est})"
        );
        drop(budget.clone());
    }
}

/// Segment counts per root-leaf path stay within the three-event bound:
/// nonzero edges, mass-cap breaks, and value-gap breaks.
#[test]
fn segment_partition_path_bound() {
    let grid = Arc::new(SizeGrid::new(rat(1, 4), rat(1, 4), rat_int(2), rat_int(1)).unwrap());
    let prm = params_with(&grid, rat(1, 8));
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    for _ in 0..10 {
        let n = 5;
        let raws: Vec<RawItem> = (0..n)
            .map(|i| {
                let k = rng.random_range(1..=2usize);
                let p = rat(rng.random_range(1..=3i64), 8);
                let rest = Rational::one() - &p;
                RawItem::new(
                    format!("i{i}"),
                    vec![
                        (grid.size_at(k), rat_int(rng.random_range(1..=4i64)), p),
                        (Rational::zero(), Rational::zero(), rest),
                    ],
                )
            })
            .collect();
        let items = discretize_all(&raws, &prm).unwrap();
        // a random chain policy over distinct items
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut tree = PolicyTree::Stop;
        for &i in order.iter().rev() {
            let children: BTreeMap<usize, PolicyTree> = items[i]
                .size_dist
                .support()
                .map(|(s, _)| (s, if s == 0 { tree.clone() } else { PolicyTree::Stop }))
                .collect();
            tree = PolicyTree::Insert { item: i, children };
        }
        let cap = grid.capacity.clone();
        let tree = normalize_policy(&tree, &items, &cap).unwrap();
        let opt = evaluate_policy(&tree, &items, &cap).unwrap();
        let caps = SegmentCaps {
            mass: rat(1, 8),
            value_gap: if opt.is_zero() { rat_int(1) } else { &opt / rat_int(2) },
        };
        let bt = segment_partition(&tree, &items, &caps, &cap).unwrap();
        bt.validate(&items, None).unwrap();
        // walk every root-leaf path of the block tree
        fn paths(bt: &lecam::policy::BlockTree) -> Vec<(usize, usize, Vec<usize>)> {
            // (blocks, nonzero edges, items) per path
            if bt.children.is_empty() {
                return vec![(1, 0, bt.items.clone())];
            }
            let mut out = Vec::new();
            for (&key, child) in &bt.children {
                for (blocks, nz, mut its) in paths(child) {
                    let mut items = bt.items.clone();
                    items.append(&mut its);
                    out.push((blocks + 1, nz + usize::from(key != 0), items));
                }
            }
            out
        }
        let z = grid.len();
        for (blocks, nonzero_edges, path_items) in paths(&bt) {
            let mass: Rational = path_items
                .iter()
                .map(|&i| items[i].expected_size.clone())
                .sum();
            let mass_breaks = rat_to_f64(&(&mass / &caps.mass)).ceil() as usize;
            let value_breaks = z * rat_to_f64(&(&opt / &caps.value_gap)).ceil() as usize;
            let bound = 1 + nonzero_edges + mass_breaks + value_breaks;
            assert!(
                blocks <= bound,
                "{blocks} blocks on a path exceed the event bound {bound}"
            );
        }
    }
}
