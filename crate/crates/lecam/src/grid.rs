//! The discretized size grid `𝒮 = {s₀, s₁, …, s_{z−1}}`, `s_k = k·step`.

use num::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{rat, serde_rat, Rational};
use crate::{Error, Result};

/// Finite grid of discretized sizes. In the single-ε parameterization `step`
/// is ε⁵ and `small_threshold` is ε⁴; both are independent knobs here.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeGrid {
    #[serde(with = "serde_rat")]
    pub step: Rational,
    #[serde(with = "serde_rat")]
    pub small_threshold: Rational,
    #[serde(with = "serde_rat")]
    pub max_size: Rational,
    #[serde(with = "serde_rat")]
    pub capacity: Rational,
}

impl SizeGrid {
    pub fn new(
        step: Rational,
        small_threshold: Rational,
        max_size: Rational,
        capacity: Rational,
    ) -> Result<Self> {
        if !step.is_positive() {
            return Err(Error::InvalidInput("grid step must be positive".into()));
        }
        for (name, v) in [
            ("small_threshold", &small_threshold),
            ("max_size", &max_size),
            ("capacity", &capacity),
        ] {
            if !(v / &step).is_integer() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be an integer multiple of step"
                )));
            }
        }
        if capacity < rat(1, 2) || capacity > rat(2, 1) {
            return Err(Error::InvalidInput(
                "capacity must lie in [1/2, 2] after normalization".into(),
            ));
        }
        if small_threshold.is_negative() || small_threshold > capacity {
            return Err(Error::InvalidInput(
                "small_threshold must lie in [0, capacity]".into(),
            ));
        }
        if max_size < capacity {
            return Err(Error::InvalidInput("max_size must cover the capacity".into()));
        }
        Ok(SizeGrid {
            step,
            small_threshold,
            max_size,
            capacity,
        })
    }

    /// Grid with the single-ε exponents: step = ε⁵, small threshold = ε⁴,
    /// sizes up to 2·C.
    pub fn from_epsilon(eps: &Rational, capacity: Rational) -> Result<Self> {
        let step = num::pow::pow(eps.clone(), 5);
        let small = num::pow::pow(eps.clone(), 4);
        let max = &capacity * rat(2, 1);
        // Snap max_size up to a step multiple.
        let max = (&max / &step).ceil() * &step;
        Self::new(step, small, max, capacity)
    }

    /// Number of grid points z.
    pub fn len(&self) -> usize {
        let q = (&self.max_size / &self.step).to_integer();
        use num::ToPrimitive;
        q.to_usize().expect("grid too large") + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn size_at(&self, k: usize) -> Rational {
        rat(k as i64, 1) * &self.step
    }

    /// Exact index of an on-grid size.
    pub fn index_of(&self, size: &Rational) -> Option<usize> {
        let q = size / &self.step;
        if !q.is_integer() || q.is_negative() {
            return None;
        }
        use num::ToPrimitive;
        let k = q.to_integer().to_usize()?;
        (k < self.len()).then_some(k)
    }

    /// Index of `⌊size/step⌋·step`, clamped to the grid.
    pub fn floor_index(&self, size: &Rational) -> usize {
        if size.is_negative() {
            return 0;
        }
        use num::ToPrimitive;
        let k = (size / &self.step).floor().to_integer();
        k.to_usize()
            .map(|k| k.min(self.len() - 1))
            .unwrap_or(self.len() - 1)
    }

    /// Largest index whose size is ≤ `beta` (None when beta < 0).
    pub fn floor_index_checked(&self, beta: &Rational) -> Option<usize> {
        if beta.is_negative() {
            None
        } else {
            Some(self.floor_index(beta))
        }
    }

    pub fn small_index(&self) -> usize {
        self.index_of(&self.small_threshold)
            .expect("small_threshold is on-grid by construction")
    }

    pub fn capacity_index(&self) -> usize {
        self.index_of(&self.capacity)
            .expect("capacity is on-grid by construction")
    }

    pub fn top_index(&self) -> usize {
        self.len() - 1
    }

    /// ε implied by this grid's step/threshold ratio (the large-region
    /// relative rounding error).
    pub fn step_ratio(&self) -> Rational {
        if self.small_threshold.is_zero() {
            Rational::zero()
        } else {
            &self.step / &self.small_threshold
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat_int;

    fn grid() -> SizeGrid {
        SizeGrid::new(rat(1, 16), rat(1, 4), rat_int(2), rat_int(1)).unwrap()
    }

    #[test]
    fn indices_and_sizes() {
        let g = grid();
        assert_eq!(g.len(), 33);
        assert_eq!(g.size_at(4), rat(1, 4));
        assert_eq!(g.index_of(&rat(1, 4)), Some(4));
        assert_eq!(g.index_of(&rat(1, 3)), None);
        assert_eq!(g.floor_index(&rat(7, 32)), 3); // 7/32 ∈ [3/16, 4/16)
        assert_eq!(g.small_index(), 4);
        assert_eq!(g.capacity_index(), 16);
    }

    #[test]
    fn validation() {
        assert!(SizeGrid::new(rat_int(0), rat(1, 4), rat_int(2), rat_int(1)).is_err());
        assert!(SizeGrid::new(rat(1, 16), rat(1, 5), rat_int(2), rat_int(1)).is_err());
        assert!(SizeGrid::new(rat(1, 16), rat(1, 4), rat_int(2), rat(1, 4)).is_err());
        assert!(SizeGrid::new(rat(1, 16), rat(1, 4), rat(1, 2), rat_int(1)).is_err());
    }

    #[test]
    fn epsilon_defaults() {
        let g = SizeGrid::from_epsilon(&rat(1, 2), rat_int(1)).unwrap();
        assert_eq!(g.step, rat(1, 32));
        assert_eq!(g.small_threshold, rat(1, 16));
        assert_eq!(g.max_size, rat_int(2));
    }
}
