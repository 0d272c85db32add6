//! Finite discrete distributions over the size grid, with an absorbing
//! overflow bucket, plus the total-variation and dominance checks used by the
//! Poisson-approximation arguments.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num::{One, Signed, Zero};
use rand::Rng;

use crate::grid::SizeGrid;
use crate::rational::{rat_to_f64, Rational};
use crate::{Error, Result};

/// Probability value. Two instantiations ship: exact [`Rational`] (the
/// default everywhere) and `f64` for compound-Poisson masses.
pub trait Mass:
    Clone
    + PartialEq
    + PartialOrd
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
{
    fn mass_zero() -> Self;
    fn mass_one() -> Self;
    fn is_zero_mass(&self) -> bool;
    fn is_negative_mass(&self) -> bool;
    fn from_rational(r: &Rational) -> Self;
    fn to_f64_mass(&self) -> f64;
    fn abs_mass(&self) -> Self;
    /// Slack used when comparing cumulative values (absorbs representation
    /// noise in the inexact instantiation; zero when exact).
    fn comparison_slack() -> Self;
    /// Allowed deviation of a total mass from 1 at validation time.
    fn sum_tolerance() -> Self;
}

impl Mass for Rational {
    fn mass_zero() -> Self {
        num::Zero::zero()
    }
    fn mass_one() -> Self {
        num::One::one()
    }
    fn is_zero_mass(&self) -> bool {
        num::Zero::is_zero(self)
    }
    fn is_negative_mass(&self) -> bool {
        self.is_negative()
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn to_f64_mass(&self) -> f64 {
        rat_to_f64(self)
    }
    fn abs_mass(&self) -> Self {
        self.abs()
    }
    fn comparison_slack() -> Self {
        num::Zero::zero()
    }
    fn sum_tolerance() -> Self {
        num::Zero::zero()
    }
}

impl Mass for f64 {
    fn mass_zero() -> Self {
        0.0
    }
    fn mass_one() -> Self {
        1.0
    }
    fn is_zero_mass(&self) -> bool {
        *self == 0.0
    }
    fn is_negative_mass(&self) -> bool {
        *self < 0.0
    }
    fn from_rational(r: &Rational) -> Self {
        rat_to_f64(r)
    }
    fn to_f64_mass(&self) -> f64 {
        *self
    }
    fn abs_mass(&self) -> Self {
        self.abs()
    }
    fn comparison_slack() -> Self {
        1e-12
    }
    fn sum_tolerance() -> Self {
        1e-9
    }
}

/// Probability distribution over grid indices `0..=cap_index`, with mass that
/// landed strictly above `cap_index` pooled in an absorbing overflow bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<T: Mass = Rational> {
    grid: Arc<SizeGrid>,
    cap_index: usize,
    mass: BTreeMap<usize, T>,
    overflow: T,
}

impl<T: Mass> DiscreteDistribution<T> {
    /// Builds a distribution from per-index masses (cap at the top of the
    /// grid, empty overflow). Masses must be nonnegative and sum to 1 within
    /// the instantiation's tolerance.
    pub fn from_mass(grid: Arc<SizeGrid>, mass: BTreeMap<usize, T>) -> Result<Self> {
        let cap = grid.top_index();
        let mut total = T::mass_zero();
        for (&k, m) in &mass {
            if k > cap {
                return Err(Error::InvalidInput(format!(
                    "support index {k} outside grid of length {}",
                    grid.len()
                )));
            }
            if m.is_negative_mass() {
                return Err(Error::InvalidInput("negative probability mass".into()));
            }
            total = total + m.clone();
        }
        let dev = (total - T::mass_one()).abs_mass();
        if dev > T::sum_tolerance() {
            return Err(Error::InvalidInput("masses must sum to one".into()));
        }
        let mass: BTreeMap<usize, T> = mass.into_iter().filter(|(_, m)| !m.is_zero_mass()).collect();
        Ok(DiscreteDistribution {
            grid,
            cap_index: cap,
            mass,
            overflow: T::mass_zero(),
        })
    }

    pub fn point_mass(grid: Arc<SizeGrid>, index: usize) -> Self {
        assert!(index <= grid.top_index());
        let mut mass = BTreeMap::new();
        mass.insert(index, T::mass_one());
        DiscreteDistribution {
            cap_index: grid.top_index(),
            grid,
            mass,
            overflow: T::mass_zero(),
        }
    }

    /// Mass `p` at `index`, remainder at zero.
    pub fn bernoulli(grid: Arc<SizeGrid>, index: usize, p: T) -> Self {
        assert!(index <= grid.top_index());
        if index == 0 {
            return Self::point_mass(grid, 0);
        }
        let mut mass = BTreeMap::new();
        let rest = T::mass_one() - p.clone();
        if !rest.is_zero_mass() {
            mass.insert(0, rest);
        }
        if !p.is_zero_mass() {
            mass.insert(index, p);
        }
        DiscreteDistribution {
            cap_index: grid.top_index(),
            grid,
            mass,
            overflow: T::mass_zero(),
        }
    }

    pub fn grid(&self) -> &Arc<SizeGrid> {
        &self.grid
    }

    pub fn cap_index(&self) -> usize {
        self.cap_index
    }

    pub fn overflow(&self) -> &T {
        &self.overflow
    }

    pub fn mass_at(&self, index: usize) -> T {
        self.mass.get(&index).cloned().unwrap_or_else(T::mass_zero)
    }

    pub fn support(&self) -> impl Iterator<Item = (usize, &T)> {
        self.mass.iter().map(|(&k, m)| (k, m))
    }

    /// Total on-grid mass (1 − overflow).
    pub fn on_grid_total(&self) -> T {
        let mut t = T::mass_zero();
        for m in self.mass.values() {
            t = t + m.clone();
        }
        t
    }

    /// Re-folds everything above `cap_index` into the overflow bucket.
    pub fn with_cap(&self, cap_index: usize) -> Self {
        let mut mass = BTreeMap::new();
        let mut overflow = self.overflow.clone();
        for (&k, m) in &self.mass {
            if k <= cap_index {
                mass.insert(k, m.clone());
            } else {
                overflow = overflow + m.clone();
            }
        }
        DiscreteDistribution {
            grid: self.grid.clone(),
            cap_index,
            mass,
            overflow,
        }
    }

    /// Expected size `Σ s_k · mass(k)`. Meaningful only when there is no
    /// overflow mass (item-level laws).
    pub fn expectation_rational(&self) -> Rational
    where
        T: Into<Rational> + Clone,
    {
        let mut e = Rational::zero();
        for (&k, m) in &self.mass {
            let m: Rational = m.clone().into();
            e += self.grid.size_at(k) * m;
        }
        e
    }

    /// `Pr[X ≤ β]` for β ≥ 0. Overflow mass never counts (it sits above the
    /// cap by construction).
    pub fn threshold_prob(&self, beta: &Rational) -> T {
        debug_assert!(!beta.is_negative(), "threshold_prob requires β ≥ 0");
        let mut acc = T::mass_zero();
        for (&k, m) in &self.mass {
            if self.grid.size_at(k) <= *beta {
                acc = acc + m.clone();
            } else {
                break;
            }
        }
        acc
    }

    /// `Pr[X ≥ β]`; the overflow bucket always counts.
    pub fn tail_prob(&self, beta: &Rational) -> T {
        let mut acc = self.overflow.clone();
        for (&k, m) in self.mass.iter().rev() {
            if self.grid.size_at(k) >= *beta {
                acc = acc + m.clone();
            } else {
                break;
            }
        }
        acc
    }

    /// Draws a grid index; deterministic given the RNG state. Overflow mass
    /// (if any) draws as `grid.len()`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (&k, m) in &self.mass {
            acc += m.to_f64_mass();
            if u < acc {
                return k;
            }
        }
        if self.overflow.is_zero_mass() {
            // Round-off landed past the last bucket; return the top of the support.
            self.mass.keys().next_back().copied().unwrap_or(0)
        } else {
            self.grid.len()
        }
    }

    pub fn to_float(&self) -> DiscreteDistribution<f64> {
        DiscreteDistribution {
            grid: self.grid.clone(),
            cap_index: self.cap_index,
            mass: self
                .mass
                .iter()
                .map(|(&k, m)| (k, m.to_f64_mass()))
                .collect(),
            overflow: self.overflow.to_f64_mass(),
        }
    }

    /// Raw constructor for modules that compute masses themselves (compound
    /// Poisson); no sum validation.
    pub(crate) fn from_parts(
        grid: Arc<SizeGrid>,
        cap_index: usize,
        mass: BTreeMap<usize, T>,
        overflow: T,
    ) -> Self {
        DiscreteDistribution {
            grid,
            cap_index,
            mass: mass.into_iter().filter(|(_, m)| !m.is_zero_mass()).collect(),
            overflow,
        }
    }
}

/// Wire format: `{"grid": {...}, "mass": {"0": "3/10", "4": "7/10"}}`.
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct DistRepr {
    grid: SizeGrid,
    mass: BTreeMap<String, String>,
}

impl serde::Serialize for DiscreteDistribution<Rational> {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.overflow.is_zero_mass() {
            return Err(serde::ser::Error::custom(
                "folded distributions (nonzero overflow) do not serialize",
            ));
        }
        let repr = DistRepr {
            grid: (*self.grid).clone(),
            mass: self
                .mass
                .iter()
                .map(|(k, m)| (k.to_string(), crate::rational::format_rat(m)))
                .collect(),
        };
        repr.serialize(ser)
    }
}

impl<'de> serde::Deserialize<'de> for DiscreteDistribution<Rational> {
    fn deserialize<D: serde::Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Self, D::Error> {
        let repr = DistRepr::deserialize(de)?;
        let mut mass = BTreeMap::new();
        for (k, m) in repr.mass {
            let idx: usize = k
                .parse()
                .map_err(|_| serde::de::Error::custom(format!("bad grid index {k:?}")))?;
            mass.insert(
                idx,
                crate::rational::parse_rat(&m).map_err(serde::de::Error::custom)?,
            );
        }
        DiscreteDistribution::from_mass(Arc::new(repr.grid), mass)
            .map_err(serde::de::Error::custom)
    }
}

/// Distribution of the sum of two independent on-grid variables. Mass landing
/// strictly above `cap_index` is pooled into the absorbing overflow bucket;
/// overflow in either input stays overflow. Total mass is preserved.
pub fn convolve<T: Mass>(
    a: &DiscreteDistribution<T>,
    b: &DiscreteDistribution<T>,
    cap_index: usize,
) -> Result<DiscreteDistribution<T>> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let mut mass: BTreeMap<usize, T> = BTreeMap::new();
    // overflow ⊛ anything stays overflow
    let mut overflow = a.overflow.clone() * (b.on_grid_total() + b.overflow.clone())
        + a.on_grid_total() * b.overflow.clone();
    for (&i, ma) in &a.mass {
        for (&j, mb) in &b.mass {
            let m = ma.clone() * mb.clone();
            if i + j <= cap_index {
                let slot = mass.entry(i + j).or_insert_with(T::mass_zero);
                *slot = slot.clone() + m;
            } else {
                overflow = overflow + m;
            }
        }
    }
    Ok(DiscreteDistribution::from_parts(
        a.grid.clone(),
        cap_index,
        mass,
        overflow,
    ))
}

/// Convolution of many distributions under one cap.
pub fn convolve_all<T: Mass>(
    dists: &[&DiscreteDistribution<T>],
    grid: &Arc<SizeGrid>,
    cap_index: usize,
) -> Result<DiscreteDistribution<T>> {
    let mut acc = DiscreteDistribution::<T>::point_mass(grid.clone(), 0).with_cap(cap_index);
    for d in dists {
        acc = convolve(&acc, d, cap_index)?;
    }
    Ok(acc)
}

/// `Δ(a, b) = Σ_s |a(s) − b(s)|` — the sum-of-differences convention, twice the
/// standard total-variation distance; values in [0, 2]. The overflow buckets
/// are compared as one extra point; inputs with different caps are re-folded
/// to the smaller cap first.
pub fn total_variation<T: Mass>(
    a: &DiscreteDistribution<T>,
    b: &DiscreteDistribution<T>,
) -> Result<T> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let cap = a.cap_index.min(b.cap_index);
    let (fa, fb);
    let (a, b) = if a.cap_index != b.cap_index {
        fa = a.with_cap(cap);
        fb = b.with_cap(cap);
        (&fa, &fb)
    } else {
        (a, b)
    };
    let mut acc = (a.overflow.clone() - b.overflow.clone()).abs_mass();
    let keys: std::collections::BTreeSet<usize> =
        a.mass.keys().chain(b.mass.keys()).copied().collect();
    for k in keys {
        acc = acc + (a.mass_at(k) - b.mass_at(k)).abs_mass();
    }
    Ok(acc)
}

/// True iff `CDF_a(s) ≤ CDF_b(s)` at every grid point, i.e. `a` is the
/// (weakly) larger variable. Comparison uses the instantiation's slack.
pub fn stochastically_dominates<T: Mass>(
    a: &DiscreteDistribution<T>,
    b: &DiscreteDistribution<T>,
) -> Result<bool> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let cap = a.cap_index.min(b.cap_index);
    let (fa, fb);
    let (a, b) = if a.cap_index != b.cap_index {
        fa = a.with_cap(cap);
        fb = b.with_cap(cap);
        (&fa, &fb)
    } else {
        (a, b)
    };
    let slack = T::comparison_slack();
    let mut cdf_a = T::mass_zero();
    let mut cdf_b = T::mass_zero();
    let keys: std::collections::BTreeSet<usize> =
        a.mass.keys().chain(b.mass.keys()).copied().collect();
    for k in keys {
        cdf_a = cdf_a + a.mass_at(k);
        cdf_b = cdf_b + b.mass_at(k);
        if cdf_a > cdf_b.clone() + slack.clone() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exact distribution of the sum of laws with arbitrary rational support
/// (no grid): used for original-law evaluation and oracles. Mass strictly
/// above `fold_above` pools into `overflow`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDist {
    pub map: BTreeMap<Rational, Rational>,
    pub overflow: Rational,
    pub fold_above: Rational,
}

impl RawDist {
    pub fn point(fold_above: Rational) -> Self {
        let mut map = BTreeMap::new();
        map.insert(Rational::zero(), num::One::one());
        RawDist {
            map,
            overflow: Rational::zero(),
            fold_above,
        }
    }

    /// Adds an independent law given as (value, prob) pairs.
    pub fn convolve_law(&mut self, law: &[(Rational, Rational)]) {
        let mut next: BTreeMap<Rational, Rational> = BTreeMap::new();
        let mut overflow = Rational::zero();
        for (_, m) in law {
            overflow += &self.overflow * m;
        }
        for (x, mx) in &self.map {
            for (v, mv) in law {
                let m = mx * mv;
                let s = x + v;
                if s <= self.fold_above {
                    *next.entry(s).or_insert_with(Rational::zero) += m;
                } else {
                    overflow += m;
                }
            }
        }
        self.map = next;
        self.overflow = overflow;
    }

    pub fn threshold_prob(&self, beta: &Rational) -> Rational {
        self.map
            .iter()
            .take_while(|(x, _)| *x <= beta)
            .map(|(_, m)| m)
            .sum()
    }

    pub fn tail_prob_geq(&self, beta: &Rational) -> Rational {
        let below: Rational = self
            .map
            .iter()
            .take_while(|(x, _)| *x < beta)
            .map(|(_, m)| m)
            .sum();
        Rational::one() - below
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};
    use rand::SeedableRng;

    pub(crate) fn test_grid() -> Arc<SizeGrid> {
        Arc::new(SizeGrid::new(rat(1, 8), rat(1, 4), rat_int(2), rat_int(1)).unwrap())
    }

    #[test]
    fn convolve_identity_and_shift() {
        let g = test_grid();
        let d = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 3, rat(2, 5));
        let zero = DiscreteDistribution::<Rational>::point_mass(g.clone(), 0);
        let c = convolve(&zero, &d, g.top_index()).unwrap();
        assert_eq!(c, d.with_cap(g.top_index()));

        let p1 = DiscreteDistribution::<Rational>::point_mass(g.clone(), 1);
        let c = convolve(&p1, &p1, g.top_index()).unwrap();
        assert_eq!(c.mass_at(2), rat_int(1));
    }

    #[test]
    fn convolve_bernoulli_pair_enumerates_four_outcomes() {
        let g = test_grid();
        let b = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 1, rat(1, 2));
        let c = convolve(&b, &b, g.top_index()).unwrap();
        assert_eq!(c.mass_at(0), rat(1, 4));
        assert_eq!(c.mass_at(1), rat(1, 2));
        assert_eq!(c.mass_at(2), rat(1, 4));
    }

    #[test]
    fn convolve_mismatched_grids_errors() {
        let g1 = test_grid();
        let g2 = Arc::new(SizeGrid::new(rat(1, 4), rat(1, 4), rat_int(2), rat_int(1)).unwrap());
        let a = DiscreteDistribution::<Rational>::point_mass(g1, 0);
        let b = DiscreteDistribution::<Rational>::point_mass(g2, 0);
        assert!(matches!(
            convolve(&a, &b, 0),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn overflow_folding_preserves_total_mass() {
        let g = test_grid();
        let d = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 10, rat(1, 2));
        let c = convolve(&d, &d, 12).unwrap();
        // 10+10=20 > 12 overflows with prob 1/4.
        assert_eq!(c.overflow, rat(1, 4));
        assert_eq!(c.on_grid_total() + c.overflow.clone(), rat_int(1));
    }

    #[test]
    fn folding_last_equals_folding_stepwise() {
        // Commutativity/associativity up to overflow folding.
        let g = test_grid();
        let a = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 7, rat(1, 3));
        let b = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 9, rat(1, 5));
        let c = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 5, rat(4, 7));
        let top = g.top_index();
        let folded_each_step = convolve(&convolve(&a, &b, top).unwrap(), &c, top).unwrap();
        let other_order = convolve(&convolve(&c, &a, top).unwrap(), &b, top).unwrap();
        assert_eq!(folded_each_step, other_order);
        let refold = folded_each_step.with_cap(10);
        let direct = convolve(&convolve(&a, &b, top).unwrap(), &c, 10).unwrap();
        assert_eq!(refold, direct);
    }

    #[test]
    fn total_variation_examples() {
        let g = test_grid();
        let d = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 1, rat(2, 5));
        assert_eq!(total_variation(&d, &d).unwrap(), rat_int(0));

        let a = DiscreteDistribution::<Rational>::point_mass(g.clone(), 2);
        let b = DiscreteDistribution::<Rational>::point_mass(g.clone(), 3);
        assert_eq!(total_variation(&a, &b).unwrap(), rat_int(2));

        let a = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 1, rat(2, 5));
        let b = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 1, rat(1, 2));
        assert_eq!(total_variation(&a, &b).unwrap(), rat(1, 5));
    }

    #[test]
    fn dominance_examples() {
        let g = test_grid();
        let d = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 1, rat(2, 5));
        assert!(stochastically_dominates(&d, &d).unwrap());
        let p1 = DiscreteDistribution::<Rational>::point_mass(g.clone(), 1);
        let p2 = DiscreteDistribution::<Rational>::point_mass(g.clone(), 2);
        assert!(stochastically_dominates(&p2, &p1).unwrap());
        assert!(!stochastically_dominates(&p1, &p2).unwrap());
    }

    #[test]
    fn threshold_prob_examples() {
        let g = test_grid();
        let p0 = DiscreteDistribution::<Rational>::point_mass(g.clone(), 0);
        assert_eq!(p0.threshold_prob(&rat_int(0)), rat_int(1));

        let d = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 1, rat(7, 10));
        assert_eq!(d.threshold_prob(&rat(1, 16)), rat(3, 10));

        // Uniform on s1..s4, β = s2 → 0.5.
        let mut m = BTreeMap::new();
        for k in 1..=4 {
            m.insert(k, rat(1, 4));
        }
        let u = DiscreteDistribution::<Rational>::from_mass(g.clone(), m).unwrap();
        assert_eq!(u.threshold_prob(&g.size_at(2)), rat(1, 2));
    }

    #[test]
    fn sampling_is_deterministic_and_unbiased() {
        let g = test_grid();
        let p3 = DiscreteDistribution::<Rational>::point_mass(g.clone(), 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            assert_eq!(p3.sample(&mut rng), 3);
        }

        let d = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 1, rat(1, 4));
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let s1: Vec<usize> = (0..100).map(|_| d.sample(&mut r1)).collect();
        let s2: Vec<usize> = (0..100).map(|_| d.sample(&mut r2)).collect();
        assert_eq!(s1, s2);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let hits = (0..n).filter(|_| d.sample(&mut rng) == 1).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.25).abs() < 0.005, "freq = {freq}");
    }

    #[test]
    fn raw_dist_convolution() {
        let mut d = RawDist::point(rat_int(2));
        d.convolve_law(&[(rat(1, 3), rat(1, 2)), (rat(1, 7), rat(1, 2))]);
        d.convolve_law(&[(rat(1, 3), rat_int(1))]);
        // support {10/21, 2/3}, each mass 1/2
        assert_eq!(d.threshold_prob(&rat(1, 2)), rat(1, 2));
        assert_eq!(d.threshold_prob(&rat(2, 3)), rat_int(1));
        assert_eq!(d.tail_prob_geq(&rat(2, 3)), rat(1, 2));
        assert_eq!(d.tail_prob_geq(&rat(10, 21)), rat_int(1));
    }

    #[test]
    fn json_wire_format_roundtrip() {
        let g = test_grid();
        let d = DiscreteDistribution::<Rational>::bernoulli(g.clone(), 4, rat(7, 10));
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains("\"4\":\"7/10\""));
        let back: DiscreteDistribution<Rational> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        // folded distributions refuse to serialize
        let folded = d.with_cap(2);
        assert!(serde_json::to_string(&folded).is_err());
        // bad masses refuse to parse
        let bad = json.replace("7/10", "9/10");
        assert!(serde_json::from_str::<DiscreteDistribution<Rational>>(&bad).is_err());
    }
}
