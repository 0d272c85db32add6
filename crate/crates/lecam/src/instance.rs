//! Instance files, generators, solver dispatch, and tabular reporting.
//!
//! Instances are JSON with every rational as a `"p/q"` string; unknown
//! fields are rejected. Each run emits one CSV row and a solution artifact
//! with the full configuration for provenance.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bosp::{solve_bosp, ArrivalOrder, BospConfig};
use crate::discretize::{discretize_all, DiscretizationParams, RawItem};
use crate::eum::{solve_eum, solve_eum_mono, EumConfig, EumInstance};
use crate::grid::SizeGrid;
use crate::oracle::{
    brute_force_adaptive, brute_force_binpacking, brute_force_eum, value_iteration_sku,
    BospOracle, OracleBudget,
};
use crate::policy::BlockTree;
use crate::rational::{format_rat, rat, rat_int, rat_to_f64, serde_rat, serde_rat_opt, Rational};
use crate::sbp::{solve_sbp, solve_sbp_norelax, SbpConfig};
use crate::sk::{expand_cancelations, solve_gensk, solve_sk, solve_sku, ItemGroup, SkConfig};
use crate::structure::FeasibilityStructure;
use crate::utility::UtilityFunction;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Eum,
    Sbp,
    Sk,
    Gensk,
    Bosp,
    Sku,
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProblemKind::Eum => "eum",
            ProblemKind::Sbp => "sbp",
            ProblemKind::Sk => "sk",
            ProblemKind::Gensk => "gensk",
            ProblemKind::Bosp => "bosp",
            ProblemKind::Sku => "sku",
        };
        f.write_str(s)
    }
}

/// All tunable knobs, with desk-scale defaults. The single-ε analysis pins
/// most of these to powers of one ε; they are independent here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsSpec {
    pub grid: SizeGrid,
    #[serde(with = "serde_rat")]
    pub heavy_cutoff_eum: Rational,
    #[serde(with = "serde_rat")]
    pub heavy_cutoff_sbp: Rational,
    #[serde(with = "serde_rat")]
    pub prob_granularity: Rational,
    #[serde(with = "serde_rat")]
    pub heavy_prob_granularity: Rational,
    #[serde(with = "serde_rat")]
    pub cap_relax: Rational,
    #[serde(with = "serde_rat")]
    pub prob_relax: Rational,
    #[serde(with = "serde_rat")]
    pub merge_eps: Rational,
    #[serde(with = "serde_rat")]
    pub block_profit_granularity: Rational,
    #[serde(with = "serde_rat")]
    pub block_prob_granularity: Rational,
    /// OPT estimate for signature units; computed greedily when absent.
    #[serde(with = "serde_rat_opt")]
    pub opt_estimate: Option<Rational>,
    #[serde(with = "serde_rat")]
    pub bucket_eps: Rational,
    pub cap_levels: usize,
    #[serde(with = "serde_rat")]
    pub heavy_budget: Rational,
    pub max_heavy_set_size: usize,
    pub max_blocks: usize,
    pub max_branch_keys: usize,
    #[serde(with = "serde_rat")]
    pub block_mass_cap: Rational,
    /// Extra capacity multiplier used when solving adaptive knapsacks
    /// (policies run at (1+sk_cap_relax)·C).
    #[serde(with = "serde_rat")]
    pub sk_cap_relax: Rational,
    pub max_states: usize,
    pub mc_samples: usize,
    pub per_bin_heavy_cap: usize,
}

impl Default for ParamsSpec {
    fn default() -> Self {
        ParamsSpec {
            grid: SizeGrid::new(rat(1, 8), rat(1, 8), rat_int(2), rat_int(1))
                .expect("default grid is valid"),
            heavy_cutoff_eum: rat(1, 50),
            heavy_cutoff_sbp: rat(1, 20),
            prob_granularity: rat(1, 16),
            heavy_prob_granularity: rat(1, 64),
            cap_relax: rat(1, 10),
            prob_relax: rat(1, 20),
            merge_eps: rat(1, 20),
            block_profit_granularity: rat(1, 16),
            block_prob_granularity: rat(1, 16),
            opt_estimate: None,
            bucket_eps: rat(1, 4),
            cap_levels: 1,
            heavy_budget: rat_int(12),
            max_heavy_set_size: 6,
            max_blocks: 3,
            max_branch_keys: 4,
            block_mass_cap: rat(1, 2),
            sk_cap_relax: rat(1, 5),
            max_states: 500_000,
            mc_samples: 20_000,
            per_bin_heavy_cap: 8,
        }
    }
}

impl ParamsSpec {
    pub fn discretization(&self) -> Result<DiscretizationParams> {
        DiscretizationParams::new(
            Arc::new(self.grid.clone()),
            self.heavy_cutoff_eum.clone(),
            self.heavy_cutoff_sbp.clone(),
            self.prob_granularity.clone(),
        )
    }

    pub fn sbp_config(&self) -> Result<SbpConfig> {
        let mut cfg = SbpConfig::new(self.discretization()?);
        cfg.heavy_prob_granularity = self.heavy_prob_granularity.clone();
        cfg.cap_relax = self.cap_relax.clone();
        cfg.prob_relax = self.prob_relax.clone();
        cfg.merge_eps = self.merge_eps.clone();
        cfg.per_bin_heavy_cap = self.per_bin_heavy_cap;
        cfg.mc_samples = self.mc_samples;
        Ok(cfg)
    }

    pub fn sk_config(&self, opt_estimate: Rational) -> SkConfig {
        SkConfig {
            block_profit_granularity: self.block_profit_granularity.clone(),
            block_prob_granularity: self.block_prob_granularity.clone(),
            opt_estimate,
            max_blocks: self.max_blocks,
            max_branch_keys: self.max_branch_keys,
            block_mass_cap: self.block_mass_cap.clone(),
            max_states: self.max_states,
        }
    }

    pub fn eum_config(&self) -> EumConfig {
        EumConfig {
            heavy_budget: self.heavy_budget.clone(),
            max_heavy_set_size: self.max_heavy_set_size,
            max_heavy_sets: self.max_states,
            max_states: self.max_states,
            mono_slack: Rational::zero(),
        }
    }
}

/// A complete experiment input.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: String,
    pub id: String,
    pub kind: ProblemKind,
    pub seed: u64,
    pub items: Vec<RawItem>,
    /// gensk: member ids per group. Omitted elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<Vec<String>>>,
    /// gensk: derive groups by cancelation expansion of `items`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cancelations: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<FeasibilityStructure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityFunction>,
    /// eum: use the monotone solver.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub mono: bool,
    /// sbp: per-bin overflow probability bound.
    #[serde(default, with = "serde_rat_opt", skip_serializing_if = "Option::is_none")]
    pub overflow_prob: Option<Rational>,
    /// sbp: run the merge-based variant that keeps the probability strict.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub norelax: bool,
    /// bosp: arrival order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<String>,
    pub params: ParamsSpec,
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let inst: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if inst.version != "1" {
            return Err(Error::Schema(format!(
                "unsupported instance version {}",
                inst.version
            )));
        }
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instances serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One CSV row per run.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub instance_id: String,
    pub kind: ProblemKind,
    pub solver_value: f64,
    pub oracle_value: Option<f64>,
    pub gap: Option<f64>,
    pub relaxed_capacity: Rational,
    pub wall_ms: u128,
}

pub const CSV_HEADER: &str = "instance_id,kind,solver_value,oracle_value,gap,relaxed_capacity,wall_ms";

impl ReportRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.instance_id,
            self.kind,
            self.solver_value,
            self.oracle_value.map_or(String::new(), |v| v.to_string()),
            self.gap.map_or(String::new(), |v| v.to_string()),
            format_rat(&self.relaxed_capacity),
            self.wall_ms
        )
    }

    fn with_oracle(mut self, oracle: f64) -> Self {
        let tiny = 1e-12;
        self.gap = Some((oracle - self.solver_value) / oracle.max(tiny));
        self.oracle_value = Some(oracle);
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ReportRow,
    pub solution: serde_json::Value,
}

/// Supported generator families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    GridBernoulli,
    GridUniform,
    TwoPointCorrelated,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid-bernoulli" => Ok(Family::GridBernoulli),
            "grid-uniform" => Ok(Family::GridUniform),
            "two-point" | "two-point-correlated" => Ok(Family::TwoPointCorrelated),
            other => Err(Error::Schema(format!("unknown family {other:?}"))),
        }
    }
}

/// Deterministic instance generation: same (kind, n, family, seed) → the
/// same file, byte for byte. All laws land on the default grid.
pub fn generate_instance(kind: ProblemKind, n: usize, family: Family, seed: u64) -> InstanceFile {
    let params = ParamsSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("b{i}");
        let item = match family {
            Family::GridBernoulli => {
                let k = rng.random_range(1..=8usize);
                let p = rat(rng.random_range(1..=12i64), 16);
                let profit = rat_int(rng.random_range(1..=8i64));
                let rest = Rational::one() - &p;
                RawItem::new(
                    id,
                    vec![
                        (params.grid.size_at(k), profit, p),
                        (Rational::zero(), Rational::zero(), rest),
                    ],
                )
            }
            Family::GridUniform => {
                let lo = rng.random_range(0..=4usize);
                let width = rng.random_range(1..=4usize);
                let profit = rat_int(rng.random_range(1..=8i64));
                let mass = rat(1, width as i64);
                let law = (0..width)
                    .map(|j| (params.grid.size_at(lo + j), profit.clone(), mass.clone()))
                    .collect();
                RawItem::new(id, law)
            }
            Family::TwoPointCorrelated => {
                let k1 = rng.random_range(1..=4usize);
                let k2 = rng.random_range(5..=10usize);
                let p = rat(rng.random_range(2..=14i64), 16);
                // larger size carries the larger profit
                let small = rat_int(rng.random_range(1..=4i64));
                let big = rat_int(rng.random_range(4..=9i64));
                let rest = Rational::one() - &p;
                RawItem::new(
                    id,
                    vec![
                        (params.grid.size_at(k1), small, rest),
                        (params.grid.size_at(k2), big, p),
                    ],
                )
            }
        };
        items.push(item);
    }
    let structure = matches!(kind, ProblemKind::Eum).then(|| FeasibilityStructure::Cardinality {
        k: (n / 2).max(1).min(n),
    });
    let utility = matches!(kind, ProblemKind::Eum)
        .then(|| UtilityFunction::chi_tilde(rat(3, 4), rat(1, 8)).expect("valid χ̃"));
    InstanceFile {
        version: "1".into(),
        id: format!("{kind}-{family:?}-n{n}-s{seed}"),
        kind,
        seed,
        items,
        groups: None,
        cancelations: kind == ProblemKind::Gensk,
        structure,
        utility,
        mono: false,
        overflow_prob: matches!(kind, ProblemKind::Sbp).then(|| rat(3, 10)),
        norelax: false,
        order: matches!(kind, ProblemKind::Bosp).then(|| "free".into()),
        params,
    }
}

/// Greedy constant-factor stand-in for OPT: the best single item's total
/// effective profit (any constant approximation suffices for the signature
/// units).
fn greedy_opt_estimate(items: &[crate::discretize::DiscretizedItem]) -> Rational {
    let best = items
        .iter()
        .map(|it| it.total_effective_profit())
        .max()
        .unwrap_or_else(Rational::zero);
    if best.is_positive() {
        best
    } else {
        Rational::one()
    }
}

fn block_tree_json(tree: &BlockTree, items: &[crate::discretize::DiscretizedItem]) -> serde_json::Value {
    let children: serde_json::Map<String, serde_json::Value> = tree
        .children
        .iter()
        .map(|(k, c)| (k.to_string(), block_tree_json(c, items)))
        .collect();
    serde_json::json!({
        "items": tree.items.iter().map(|&i| items[i].id.clone()).collect::<Vec<_>>(),
        "children": children,
    })
}

/// Dispatches an instance to its solver (and optionally its oracle), returns
/// the report row plus the solution artifact.
pub fn run(instance: &InstanceFile, with_oracle: bool) -> Result<RunOutcome> {
    let start = Instant::now();
    let params = instance.params.discretization()?;
    let budget = OracleBudget {
        mc_samples: instance.params.mc_samples,
        seed: instance.seed,
        ..Default::default()
    };
    let capacity = params.grid.capacity.clone();
    let (mut report, solution) = match instance.kind {
        ProblemKind::Eum => {
            let structure = instance
                .structure
                .clone()
                .ok_or_else(|| Error::Schema("eum needs a structure".into()))?;
            let utility = instance
                .utility
                .clone()
                .ok_or_else(|| Error::Schema("eum needs a utility".into()))?;
            let inst = EumInstance::new(instance.items.clone(), structure, utility, params)?;
            let cfg = instance.params.eum_config();
            let sol = if instance.mono {
                solve_eum_mono(&inst, &cfg)?
            } else {
                solve_eum(&inst, &cfg)?
            };
            let mut row = base_row(instance, rat_to_f64(&sol.utility_discretized), &capacity);
            if with_oracle {
                let (_, oracle) = brute_force_eum(&inst, true, &budget)?;
                row = row.with_oracle(rat_to_f64(&oracle));
            }
            let solution = serde_json::json!({
                "chosen": sol.chosen_ids,
                "utility_discretized": format_rat(&sol.utility_discretized),
                "utility_original": format_rat(&sol.utility_original),
            });
            (row, solution)
        }
        ProblemKind::Sbp => {
            let p = instance
                .overflow_prob
                .clone()
                .ok_or_else(|| Error::Schema("sbp needs overflow_prob".into()))?;
            let cfg = instance.params.sbp_config()?;
            let items = discretize_all(&instance.items, &cfg.params)?;
            let sol = if instance.norelax {
                let mut rng = ChaCha8Rng::seed_from_u64(instance.seed);
                solve_sbp_norelax(&items, &p, &cfg, &mut rng)?.packing
            } else {
                solve_sbp(&items, &p, &cfg)?
            };
            let mut row = base_row(instance, sol.bins.len() as f64, &sol.relaxed_capacity);
            if with_oracle {
                let oracle = brute_force_binpacking(
                    &items,
                    &capacity,
                    &p,
                    &Rational::zero(),
                    &budget,
                )?;
                if let Some(bins) = oracle {
                    row = row.with_oracle(bins as f64);
                }
            }
            let mut mc_rng = ChaCha8Rng::seed_from_u64(instance.seed.wrapping_add(1));
            let mc_overflow: Vec<f64> = sol
                .bins
                .iter()
                .map(|bin| {
                    let dists: Vec<&crate::dist::DiscreteDistribution<Rational>> =
                        bin.iter().map(|&i| &items[i].size_dist).collect();
                    crate::sbp::estimate_overflow_mc(
                        &dists,
                        &sol.relaxed_capacity,
                        instance.params.mc_samples,
                        &mut mc_rng,
                    )
                    .0
                })
                .collect();
            let solution = serde_json::json!({
                "bins": sol.bins.iter()
                    .map(|b| b.iter().map(|&i| items[i].id.clone()).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
                "overflow": sol.overflow.iter().map(format_rat).collect::<Vec<_>>(),
                "overflow_mc": mc_overflow,
                "relaxed_capacity": format_rat(&sol.relaxed_capacity),
            });
            (row, solution)
        }
        ProblemKind::Sk | ProblemKind::Gensk => {
            let items_raw;
            let groups: Vec<ItemGroup>;
            if instance.kind == ProblemKind::Gensk {
                if instance.cancelations {
                    let mut slate = Vec::new();
                    let mut gs = Vec::new();
                    for item in &instance.items {
                        let members = expand_cancelations(item);
                        let idxs: Vec<usize> =
                            (slate.len()..slate.len() + members.len()).collect();
                        slate.extend(members);
                        gs.push(ItemGroup {
                            id: item.id.clone(),
                            members: idxs,
                        });
                    }
                    items_raw = slate;
                    groups = gs;
                } else {
                    let group_ids = instance
                        .groups
                        .clone()
                        .ok_or_else(|| Error::Schema("gensk needs groups or cancelations".into()))?;
                    let index: BTreeMap<&str, usize> = instance
                        .items
                        .iter()
                        .enumerate()
                        .map(|(i, it)| (it.id.as_str(), i))
                        .collect();
                    let mut gs = Vec::new();
                    for (gi, members) in group_ids.iter().enumerate() {
                        let mut idxs = Vec::new();
                        for m in members {
                            let &i = index
                                .get(m.as_str())
                                .ok_or_else(|| Error::Schema(format!("unknown member {m}")))?;
                            idxs.push(i);
                        }
                        gs.push(ItemGroup {
                            id: format!("g{gi}"),
                            members: idxs,
                        });
                    }
                    items_raw = instance.items.clone();
                    groups = gs;
                }
            } else {
                items_raw = instance.items.clone();
                groups = (0..items_raw.len())
                    .map(|i| ItemGroup {
                        id: items_raw[i].id.clone(),
                        members: vec![i],
                    })
                    .collect();
            }
            let items = discretize_all(&items_raw, &params)?;
            let opt = instance
                .params
                .opt_estimate
                .clone()
                .unwrap_or_else(|| greedy_opt_estimate(&items));
            let cfg = instance.params.sk_config(opt);
            let solve_cap =
                &capacity * (Rational::one() + &instance.params.sk_cap_relax);
            let (tree, value) = if instance.kind == ProblemKind::Sk {
                solve_sk(&items, &solve_cap, &cfg)?
            } else {
                solve_gensk(&items, &groups, &solve_cap, &cfg)?
            };
            let mut row = base_row(instance, rat_to_f64(&value), &solve_cap);
            if with_oracle {
                let oracle = brute_force_adaptive(
                    &items,
                    &groups,
                    &capacity,
                    &Rational::zero(),
                    &budget,
                )?;
                row = row.with_oracle(rat_to_f64(&oracle));
            }
            let solution = serde_json::json!({
                "value": format_rat(&value),
                "policy": block_tree_json(&tree, &items),
            });
            (row, solution)
        }
        ProblemKind::Bosp => {
            let order = match instance.order.as_deref() {
                Some("fixed") => ArrivalOrder::Fixed,
                Some("free") | None => ArrivalOrder::Free,
                Some(other) => {
                    return Err(Error::Schema(format!("unknown order {other:?}")))
                }
            };
            let items = discretize_all(&instance.items, &params)?;
            let opt = instance
                .params
                .opt_estimate
                .clone()
                .unwrap_or_else(|| greedy_opt_estimate(&items));
            let cfg = BospConfig {
                sk: instance.params.sk_config(opt),
                bucket_eps: instance.params.bucket_eps.clone(),
                cap_levels: instance.params.cap_levels,
                max_bucket_levels: 12,
                max_group_members: 512,
            };
            let sol = solve_bosp(&instance.items, &params, &cfg, order)?;
            let mut row = base_row(instance, rat_to_f64(&sol.value), &capacity);
            if with_oracle {
                let mut oracle =
                    BospOracle::new(&items, &capacity, order == ArrivalOrder::Fixed)?;
                row = row.with_oracle(rat_to_f64(&oracle.optimum()));
            }
            let solution = serde_json::json!({
                "value": format_rat(&sol.value),
                "policy": block_tree_json(&sol.tree, &sol.items),
            });
            (row, solution)
        }
        ProblemKind::Sku => {
            let items = discretize_all(&instance.items, &params)?;
            let sol = solve_sku(&items, &capacity)?;
            // monotone by construction; asserted here as the run contract
            for w in sol.values.windows(2) {
                if w[0] > w[1] {
                    return Err(Error::Unbounded(
                        "sku value table must be monotone".into(),
                    ));
                }
            }
            let top = sol.values.last().cloned().unwrap_or_else(Rational::zero);
            let mut row = base_row(instance, rat_to_f64(&top), &capacity);
            if with_oracle {
                let vi = value_iteration_sku(&items, &capacity, 1e-13)?;
                row = row.with_oracle(*vi.last().unwrap_or(&0.0));
            }
            let solution = serde_json::json!({
                "values": sol.values.iter().map(format_rat).collect::<Vec<_>>(),
                "policy": sol.policy.iter()
                    .map(|p| p.map(|i| items[i].id.clone()))
                    .collect::<Vec<_>>(),
            });
            (row, solution)
        }
    };
    report.wall_ms = start.elapsed().as_millis();
    let solution = serde_json::json!({
        "instance": instance.id,
        "kind": instance.kind.to_string(),
        "seed": instance.seed,
        "params": serde_json::to_value(&instance.params).map_err(|e| Error::Schema(e.to_string()))?,
        "solution": solution,
    });
    Ok(RunOutcome {
        report,
        solution,
    })
}

fn base_row(instance: &InstanceFile, value: f64, relaxed_capacity: &Rational) -> ReportRow {
    ReportRow {
        instance_id: instance.id.clone(),
        kind: instance.kind,
        solver_value: value,
        oracle_value: None,
        gap: None,
        relaxed_capacity: relaxed_capacity.clone(),
        wall_ms: 0,
    }
}

/// Writes atomically: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp: PathBuf = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs one instance and persists `{id}.csv` + `{id}.solution.json` under
/// `out_dir` (when given).
pub fn run_to_files(
    instance: &InstanceFile,
    with_oracle: bool,
    out_dir: Option<&Path>,
) -> Result<RunOutcome> {
    let outcome = run(instance, with_oracle)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let csv = format!("{}\n{}\n", CSV_HEADER, outcome.report.csv_line());
        write_atomic(&dir.join(format!("{}.csv", instance.id)), &csv)?;
        let json = serde_json::to_string_pretty(&outcome.solution)
            .map_err(|e| Error::Schema(e.to_string()))?;
        write_atomic(&dir.join(format!("{}.solution.json", instance.id)), &json)?;
    }
    Ok(outcome)
}

/// Batch mode over a worker pool; the pool size comes from LECAM_WORKERS
/// (default 1). Results keep the input order.
pub fn run_batch(
    instances: &[InstanceFile],
    with_oracle: bool,
    out_dir: Option<&Path>,
) -> Vec<Result<RunOutcome>> {
    let workers: usize = std::env::var("LECAM_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w >= 1)
        .unwrap_or(1);
    if workers == 1 || instances.len() <= 1 {
        return instances
            .iter()
            .map(|inst| run_to_files(inst, with_oracle, out_dir))
            .collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<RunOutcome>>>> =
        instances.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(instances.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= instances.len() {
                    break;
                }
                let out = run_to_files(&instances[i], with_oracle, out_dir);
                *results[i].lock().unwrap() = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker finished"))
        .collect()
}
