//! Fixed-point signature vectors: the integer summaries that stand in for
//! sets of light items, bins, and blocks.
//!
//! A signature stores, per nonzero grid size, the item's probability mass
//! floored to multiples of a granularity q. Signatures of sets add
//! componentwise, equality is exact integer equality, and a signature's rate
//! vector defines the compound Poisson law that approximates the set's sum.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::cpd::CompoundPoissonSpec;
use crate::discretize::DiscretizedItem;
use crate::grid::SizeGrid;
use crate::rational::{serde_rat, Rational};
use crate::{Error, Result};

/// Rounded probability-mass vector over nonzero grid sizes: `counts[k−1]·q`
/// approximates `π̃(s_k)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Signature {
    grid: Arc<SizeGrid>,
    #[serde(with = "serde_rat")]
    granularity: Rational,
    counts: Vec<u64>,
}

impl Signature {
    pub fn zero(grid: Arc<SizeGrid>, granularity: Rational) -> Self {
        let z = grid.len();
        Signature {
            grid,
            granularity,
            counts: vec![0; z - 1],
        }
    }

    pub fn from_counts(grid: Arc<SizeGrid>, granularity: Rational, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), grid.len() - 1);
        Signature {
            grid,
            granularity,
            counts,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn granularity(&self) -> &Rational {
        &self.granularity
    }

    pub fn grid(&self) -> &Arc<SizeGrid> {
        &self.grid
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Rounded mass at grid index k ≥ 1.
    pub fn mass_at(&self, k: usize) -> Rational {
        Rational::from_integer(self.counts[k - 1].into()) * &self.granularity
    }

    /// `Σ_k counts[k]·q·s_k` — the expected-size proxy bounded by 3/ε.
    pub fn weighted_size(&self) -> Rational {
        let mut acc = Rational::zero();
        for (i, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                acc += Rational::from_integer(c.into()) * &self.granularity * self.grid.size_at(i + 1);
            }
        }
        acc
    }

    pub fn add(&self, other: &Signature) -> Result<Signature> {
        if self.grid != other.grid || self.granularity != other.granularity {
            return Err(Error::GranularityMismatch);
        }
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Signature {
            grid: self.grid.clone(),
            granularity: self.granularity.clone(),
            counts,
        })
    }

    /// Exact componentwise order (no slack).
    pub fn leq(&self, other: &Signature) -> Result<bool> {
        signature_leq(self, other, &Rational::zero())
    }

    /// Rate vector of the compound Poisson law this signature encodes.
    pub fn cpd_spec(&self) -> Result<CompoundPoissonSpec> {
        let rates: BTreeMap<usize, Rational> = self
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| {
                (
                    i + 1,
                    Rational::from_integer(c.into()) * &self.granularity,
                )
            })
            .collect();
        CompoundPoissonSpec::from_rational_rates(self.grid.clone(), &rates)
    }
}

/// `counts[k] = ⌊π̃_b(s_k)/q⌋` — the floor convention for items.
pub fn item_signature(item: &DiscretizedItem, q: &Rational) -> Signature {
    assert!(q.is_positive(), "granularity must be positive");
    let grid = item.size_dist.grid().clone();
    let counts = item
        .nonzero_mass_vector()
        .into_iter()
        .map(|m| floor_div(&m, q))
        .collect();
    Signature {
        grid,
        granularity: q.clone(),
        counts,
    }
}

/// Componentwise integer sum over a set; errors on mixed granularity.
pub fn set_signature(signatures: &[Signature]) -> Result<Signature> {
    let mut iter = signatures.iter();
    let first = match iter.next() {
        Some(s) => s.clone(),
        None => {
            return Err(Error::InvalidInput(
                "set_signature of an empty list needs a grid; use Signature::zero".into(),
            ))
        }
    };
    iter.try_fold(first, |acc, s| acc.add(s))
}

/// Signature of a set of items (empty set → zero vector).
pub fn items_signature(
    items: &[&DiscretizedItem],
    grid: &Arc<SizeGrid>,
    q: &Rational,
) -> Signature {
    items.iter().fold(Signature::zero(grid.clone(), q.clone()), |acc, it| {
        acc.add(&item_signature(it, q)).expect("same grid and q")
    })
}

/// Exact (unrounded) mass vector of a set over nonzero sizes — the input to
/// the ceiling-rounded bin-packing signature.
pub fn exact_set_mass_vector(items: &[&DiscretizedItem], grid: &Arc<SizeGrid>) -> Vec<Rational> {
    let mut v = vec![Rational::zero(); grid.len() - 1];
    for it in items {
        for (k, m) in it.size_dist.support() {
            if k >= 1 {
                v[k - 1] += m;
            }
        }
    }
    v
}

/// Ceiling-rounding of each coordinate to multiples of q (the bin-packing
/// convention, distinct from the floor used for items).
pub fn rounded_signature_up(exact: &[Rational], grid: &Arc<SizeGrid>, q: &Rational) -> Signature {
    assert!(q.is_positive(), "granularity must be positive");
    assert_eq!(exact.len(), grid.len() - 1);
    let counts = exact.iter().map(|m| ceil_div(m, q)).collect();
    Signature {
        grid: grid.clone(),
        granularity: q.clone(),
        counts,
    }
}

/// True iff `a_k ≤ (1+slack)·b_k` for every coordinate.
pub fn signature_leq(a: &Signature, b: &Signature, slack: &Rational) -> Result<bool> {
    if a.grid != b.grid || a.granularity != b.granularity {
        return Err(Error::GranularityMismatch);
    }
    let factor = Rational::one() + slack;
    Ok(a.counts.iter().zip(&b.counts).all(|(&x, &y)| {
        Rational::from_integer(x.into()) <= Rational::from_integer(y.into()) * &factor
    }))
}

fn floor_div(m: &Rational, q: &Rational) -> u64 {
    use num::ToPrimitive;
    (m / q).floor().to_integer().to_u64().unwrap_or(0)
}

fn ceil_div(m: &Rational, q: &Rational) -> u64 {
    use num::ToPrimitive;
    (m / q).ceil().to_integer().to_u64().unwrap_or(0)
}

/// Signature of a block: floor-rounded effective-profit vector (over all grid
/// sizes, in units `q_p·OPT̂`) plus floor-rounded probability vector (over
/// nonzero sizes, in units `q_π`), both componentwise-additive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockSignature {
    grid: Arc<SizeGrid>,
    profit_unit: Rational,
    prob_unit: Rational,
    profit_counts: Vec<u64>,
    prob_counts: Vec<u64>,
}

impl BlockSignature {
    pub fn zero(grid: Arc<SizeGrid>, profit_unit: Rational, prob_unit: Rational) -> Self {
        let z = grid.len();
        BlockSignature {
            grid,
            profit_unit,
            prob_unit,
            profit_counts: vec![0; z],
            prob_counts: vec![0; z - 1],
        }
    }

    pub fn add(&self, other: &BlockSignature) -> Result<BlockSignature> {
        if self.grid != other.grid
            || self.profit_unit != other.profit_unit
            || self.prob_unit != other.prob_unit
        {
            return Err(Error::GranularityMismatch);
        }
        Ok(BlockSignature {
            grid: self.grid.clone(),
            profit_unit: self.profit_unit.clone(),
            prob_unit: self.prob_unit.clone(),
            profit_counts: self
                .profit_counts
                .iter()
                .zip(&other.profit_counts)
                .map(|(a, b)| a + b)
                .collect(),
            prob_counts: self
                .prob_counts
                .iter()
                .zip(&other.prob_counts)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn profit_counts(&self) -> &[u64] {
        &self.profit_counts
    }

    pub fn prob_counts(&self) -> &[u64] {
        &self.prob_counts
    }

    /// Rounded total effective profit the signature certifies.
    pub fn rounded_profit(&self) -> Rational {
        let total: u64 = self.profit_counts.iter().sum();
        Rational::from_integer(total.into()) * &self.profit_unit
    }

    /// Rounded mean of the size law: `Σ prob_counts[k]·q_π·s_k`.
    pub fn rounded_mean(&self) -> Rational {
        let mut acc = Rational::zero();
        for (i, &c) in self.prob_counts.iter().enumerate() {
            if c > 0 {
                acc += Rational::from_integer(c.into()) * &self.prob_unit * self.grid.size_at(i + 1);
            }
        }
        acc
    }

    /// Flat integer key for DP state tables.
    pub fn flatten_into(&self, out: &mut Vec<u64>) {
        out.extend_from_slice(&self.profit_counts);
        out.extend_from_slice(&self.prob_counts);
    }

    pub fn is_zero(&self) -> bool {
        self.profit_counts.iter().all(|&c| c == 0) && self.prob_counts.iter().all(|&c| c == 0)
    }
}

/// Block signature of a single item. `q_p` scales with the OPT estimate
/// (the `ε²³·OPT/n` unit in the single-ε parameterization); any
/// constant-factor estimate suffices.
pub fn item_block_signature(
    item: &DiscretizedItem,
    q_p: &Rational,
    q_pi: &Rational,
    opt_estimate: &Rational,
) -> BlockSignature {
    assert!(opt_estimate.is_positive(), "opt_estimate must be positive");
    let grid = item.size_dist.grid().clone();
    let profit_unit = q_p * opt_estimate;
    let z = grid.len();
    let mut profit_counts = vec![0u64; z];
    for (&k, p) in &item.eff_profit {
        profit_counts[k] = floor_div(p, &profit_unit);
    }
    let prob_counts = item
        .nonzero_mass_vector()
        .into_iter()
        .map(|m| floor_div(&m, q_pi))
        .collect();
    BlockSignature {
        grid,
        profit_unit,
        prob_unit: q_pi.clone(),
        profit_counts,
        prob_counts,
    }
}

/// Floor-rounded profit and probability vectors summed over a block.
pub fn block_signature(
    items: &[&DiscretizedItem],
    q_p: &Rational,
    q_pi: &Rational,
    opt_estimate: &Rational,
    grid: &Arc<SizeGrid>,
) -> BlockSignature {
    let zero = BlockSignature::zero(grid.clone(), q_p * opt_estimate, q_pi.clone());
    items.iter().fold(zero, |acc, it| {
        acc.add(&item_block_signature(it, q_p, q_pi, opt_estimate))
            .expect("same grid and units")
    })
}
