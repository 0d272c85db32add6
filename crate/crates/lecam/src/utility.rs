//! Piecewise-linear utility functions on [0, C], exact rational evaluation,
//! and the threshold surrogate χ̃.

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dist::{DiscreteDistribution, RawDist};
use crate::rational::{serde_rat, Rational};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakpoint {
    #[serde(with = "serde_rat")]
    pub x: Rational,
    #[serde(with = "serde_rat")]
    pub value: Rational,
}

/// Continuous piecewise-linear utility with values in [0, 1], α-Lipschitz.
/// Evaluation is zero at and above the capacity C, and constant beyond the
/// last breakpoint below that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityFunction {
    pub breakpoints: Vec<Breakpoint>,
    #[serde(with = "serde_rat")]
    pub lipschitz: Rational,
}

impl UtilityFunction {
    pub fn new(breakpoints: Vec<(Rational, Rational)>, lipschitz: Rational) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::InvalidInput("utility needs breakpoints".into()));
        }
        if lipschitz.is_negative() {
            return Err(Error::InvalidInput("Lipschitz constant must be ≥ 0".into()));
        }
        let breakpoints: Vec<Breakpoint> = breakpoints
            .into_iter()
            .map(|(x, value)| Breakpoint { x, value })
            .collect();
        if breakpoints[0].x.is_negative() {
            return Err(Error::InvalidInput("breakpoints start at x ≥ 0".into()));
        }
        for w in breakpoints.windows(2) {
            if w[1].x <= w[0].x {
                return Err(Error::InvalidInput("breakpoints must be strictly increasing".into()));
            }
            let slope = (&w[1].value - &w[0].value) / (&w[1].x - &w[0].x);
            if slope.abs() > lipschitz {
                return Err(Error::InvalidInput(format!(
                    "segment slope {slope} exceeds Lipschitz bound {lipschitz}"
                )));
            }
        }
        for b in &breakpoints {
            if b.value.is_negative() || b.value > Rational::one() {
                return Err(Error::InvalidInput("utility values must lie in [0, 1]".into()));
            }
        }
        Ok(UtilityFunction {
            breakpoints,
            lipschitz,
        })
    }

    /// The 1/ε-Lipschitz surrogate of the threshold indicator: 1 on
    /// [0, θ], linear down to 0 at θ+ε, 0 beyond.
    pub fn chi_tilde(threshold: Rational, eps: Rational) -> Result<Self> {
        if !eps.is_positive() {
            return Err(Error::InvalidInput("χ̃ needs ε > 0".into()));
        }
        let lip = Rational::one() / &eps;
        Self::new(
            vec![
                (Rational::zero(), Rational::one()),
                (threshold.clone(), Rational::one()),
                (threshold + eps, Rational::zero()),
            ],
            lip,
        )
    }

    pub fn constant_one() -> Self {
        UtilityFunction {
            breakpoints: vec![Breakpoint {
                x: Rational::zero(),
                value: Rational::one(),
            }],
            lipschitz: Rational::zero(),
        }
    }

    pub fn is_monotone_nonincreasing(&self) -> bool {
        self.breakpoints
            .windows(2)
            .all(|w| w[1].value <= w[0].value)
    }

    /// Exact value at x, truncated to 0 at and above `capacity`.
    pub fn eval(&self, x: &Rational, capacity: &Rational) -> Rational {
        if x >= capacity || x.is_negative() {
            return Rational::zero();
        }
        let bps = &self.breakpoints;
        if *x <= bps[0].x {
            return bps[0].value.clone();
        }
        for w in bps.windows(2) {
            if *x <= w[1].x {
                let t = (x - &w[0].x) / (&w[1].x - &w[0].x);
                return &w[0].value + t * (&w[1].value - &w[0].value);
            }
        }
        bps.last().unwrap().value.clone()
    }
}

/// `E[μ(X)] = Σ_s Pr[X = s]·μ(s)` over a grid distribution; the overflow
/// bucket contributes 0 (it lies at or above the capacity by construction).
pub fn expected_utility_grid(
    dist: &DiscreteDistribution<Rational>,
    u: &UtilityFunction,
    capacity: &Rational,
) -> Rational {
    let grid = dist.grid().clone();
    let mut acc = Rational::zero();
    for (k, m) in dist.support() {
        let v = u.eval(&grid.size_at(k), capacity);
        if !v.is_zero() {
            acc += v * m;
        }
    }
    acc
}

/// Same on an exact off-grid distribution.
pub fn expected_utility_raw(dist: &RawDist, u: &UtilityFunction, capacity: &Rational) -> Rational {
    let mut acc = Rational::zero();
    for (x, m) in &dist.map {
        let v = u.eval(x, capacity);
        if !v.is_zero() {
            acc += v * m;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    #[test]
    fn chi_tilde_shape() {
        let u = UtilityFunction::chi_tilde(rat_int(1), rat(1, 4)).unwrap();
        let cap = rat(5, 4);
        assert_eq!(u.eval(&rat_int(0), &cap), rat_int(1));
        assert_eq!(u.eval(&rat_int(1), &cap), rat_int(1));
        assert_eq!(u.eval(&rat(9, 8), &cap), rat(1, 2));
        assert_eq!(u.eval(&rat(5, 4), &cap), rat_int(0));
        assert_eq!(u.eval(&rat_int(2), &cap), rat_int(0));
        assert!(u.is_monotone_nonincreasing());
        assert_eq!(u.lipschitz, rat_int(4));
    }

    #[test]
    fn validation() {
        // slope exceeding the Lipschitz constant
        assert!(UtilityFunction::new(
            vec![(rat_int(0), rat_int(1)), (rat(1, 10), rat_int(0))],
            rat_int(1),
        )
        .is_err());
        // out-of-range value
        assert!(UtilityFunction::new(vec![(rat_int(0), rat_int(2))], rat_int(1)).is_err());
        // non-monotone is fine for EUM, flagged by the predicate
        let zigzag = UtilityFunction::new(
            vec![
                (rat_int(0), rat(1, 2)),
                (rat(1, 2), rat_int(1)),
                (rat_int(1), rat_int(0)),
            ],
            rat_int(2),
        )
        .unwrap();
        assert!(!zigzag.is_monotone_nonincreasing());
    }

    #[test]
    fn expected_utility_on_grid() {
        use crate::grid::SizeGrid;
        use std::sync::Arc;
        let grid = Arc::new(SizeGrid::new(rat(1, 4), rat(1, 4), rat_int(2), rat_int(1)).unwrap());
        let u = UtilityFunction::chi_tilde(rat(1, 2), rat(1, 4)).unwrap();
        let d = DiscreteDistribution::<Rational>::bernoulli(grid.clone(), 3, rat(1, 2));
        // s3 = 3/4 = θ+ε → 0; s0 = 0 → 1.
        let cap = rat_int(1);
        assert_eq!(expected_utility_grid(&d, &u, &cap), rat(1, 2));
    }
}
