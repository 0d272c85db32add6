//! Compound Poisson distributions on the size grid.
//!
//! `Y = Σ_{j=1}^{N} Y_j` with `N ~ Pois(λ)`, `Pr[Y_j = s_k] = V_k / λ`, where
//! `V` is a nonnegative rate vector indexed by nonzero grid sizes and
//! `λ = Σ_k V_k`. The PMF follows the Panjer-style recursion
//! `p₀ = e^{−λ}`, `p_m = (1/m) Σ_k k·V_k·p_{m−k}` over grid indices.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::dist::DiscreteDistribution;
use crate::grid::SizeGrid;
use crate::rational::{rat_to_f64, Rational};
use crate::{Error, Result};

/// Rate vector of a compound Poisson law.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundPoissonSpec {
    grid: Arc<SizeGrid>,
    /// index k (1 ≤ k ≤ z−1) → rate V_k; zero rates omitted.
    rates: BTreeMap<usize, f64>,
    lambda: f64,
}

impl CompoundPoissonSpec {
    pub fn new(grid: Arc<SizeGrid>, rates: BTreeMap<usize, f64>) -> Result<Self> {
        let mut lambda = 0.0;
        for (&k, &v) in &rates {
            if k == 0 || k > grid.top_index() {
                return Err(Error::InvalidInput(format!(
                    "rate index {k} outside 1..={}",
                    grid.top_index()
                )));
            }
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidInput("rates must be finite and ≥ 0".into()));
            }
            lambda += v;
        }
        Ok(CompoundPoissonSpec {
            grid,
            rates: rates.into_iter().filter(|&(_, v)| v > 0.0).collect(),
            lambda,
        })
    }

    pub fn from_rational_rates(grid: Arc<SizeGrid>, rates: &BTreeMap<usize, Rational>) -> Result<Self> {
        Self::new(
            grid,
            rates.iter().map(|(&k, v)| (k, rat_to_f64(v))).collect(),
        )
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rates(&self) -> &BTreeMap<usize, f64> {
        &self.rates
    }

    pub fn grid(&self) -> &Arc<SizeGrid> {
        &self.grid
    }
}

/// PMF of the compound Poisson law, truncated once the residual mass drops
/// below `tail_tol` (at the latest at `cap_index`); the residual folds into
/// the overflow bucket. An all-zero rate vector yields a point mass at 0.
pub fn compound_poisson_pmf(
    spec: &CompoundPoissonSpec,
    cap_index: usize,
    tail_tol: f64,
) -> Result<DiscreteDistribution<f64>> {
    if tail_tol <= 0.0 || tail_tol.is_nan() {
        return Err(Error::InvalidInput("tail_tol must be positive".into()));
    }
    let cap = cap_index.min(spec.grid.top_index());
    let mut pmf = vec![0.0f64; cap + 1];
    pmf[0] = (-spec.lambda).exp();
    let mut covered = pmf[0];
    for m in 1..=cap {
        if 1.0 - covered < tail_tol {
            break;
        }
        let mut s = 0.0;
        for (&k, &v) in &spec.rates {
            if k > m {
                break;
            }
            s += k as f64 * v * pmf[m - k];
        }
        pmf[m] = s / m as f64;
        covered += pmf[m];
    }
    let overflow = (1.0 - covered).max(0.0);
    let mass: BTreeMap<usize, f64> = pmf
        .into_iter()
        .enumerate()
        .filter(|&(_, p)| p > 0.0)
        .collect();
    Ok(DiscreteDistribution::from_parts(
        spec.grid.clone(),
        cap,
        mass,
        overflow,
    ))
}
