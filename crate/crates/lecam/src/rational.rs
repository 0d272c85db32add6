//! Exact rational arithmetic helpers and the `"p/q"` wire format.

use num::bigint::{BigInt, Sign};
use num::{BigRational, One, Signed, Zero};

use crate::{Error, Result};

pub type Rational = BigRational;

/// `n/d` as an exact rational.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"p/q"` (or a bare integer `"p"`).
pub fn parse_rat(s: &str) -> Result<Rational> {
    let s = s.trim();
    let mk_err = || Error::Schema(format!("not a rational: {s:?}"));
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = num.parse().map_err(|_| mk_err())?;
    let d: BigInt = den.parse().map_err(|_| mk_err())?;
    if d.is_zero() {
        return Err(mk_err());
    }
    Ok(Rational::new(n, d))
}

pub fn format_rat(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Rational → f64 that stays finite for numerators/denominators far beyond
/// the f64 exponent range (num's `to_f64` yields NaN there).
pub fn rat_to_f64(r: &Rational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let neg = r.is_negative();
    let num = r.numer().abs();
    let den = r.denom().clone();
    let nb = num.bits() as i64;
    let db = den.bits() as i64;
    // Shift the numerator so the integer quotient carries ~64 significant bits.
    let k = 64 - (nb - db);
    let quot = if k >= 0 {
        (num << k as u64) / den
    } else {
        num / (den << (-k) as u64)
    };
    let q = match quot.to_u64_digits() {
        (Sign::NoSign, _) => 0.0,
        (_, digits) => {
            let mut v = 0.0f64;
            for d in digits.iter().rev() {
                v = v * 1.8446744073709552e19 + *d as f64;
            }
            v
        }
    };
    let val = scale_pow2(q, -k);
    if neg {
        -val
    } else {
        val
    }
}

/// `x · 2^e`, applied in chunks so intermediate factors stay normal.
fn scale_pow2(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

/// serde adapter: rationals as `"p/q"` strings.
pub mod serde_rat {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&format_rat(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Rational, D::Error> {
        let s = String::deserialize(de)?;
        parse_rat(&s).map_err(serde::de::Error::custom)
    }
}

/// serde adapter: vectors of rationals as `"p/q"` strings.
pub mod serde_rat_vec {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    #[allow(clippy::ptr_arg)] // serde's `with` contract passes &Vec
    pub fn serialize<S: Serializer>(
        v: &Vec<Rational>,
        ser: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_seq(v.iter().map(format_rat))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Vec<Rational>, D::Error> {
        let strs: Vec<String> = Vec::deserialize(de)?;
        strs.iter()
            .map(|s| parse_rat(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// serde adapter for `Option<Rational>`.
pub mod serde_rat_opt {
    use super::*;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        r: &Option<Rational>,
        ser: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        match r {
            Some(r) => ser.serialize_some(&format_rat(r)),
            None => ser.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Option<Rational>, D::Error> {
        let s: Option<String> = Option::deserialize(de)?;
        s.map(|s| parse_rat(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_roundtrip() {
        for s in ["3/10", "-7/2", "4", "0"] {
            let r = parse_rat(s).unwrap();
            assert_eq!(parse_rat(&format_rat(&r)).unwrap(), r);
        }
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("x").is_err());
    }

    #[test]
    fn to_f64_small_values() {
        assert_eq!(rat_to_f64(&rat(1, 2)), 0.5);
        assert_eq!(rat_to_f64(&rat(-3, 4)), -0.75);
        assert_eq!(rat_to_f64(&rat_int(0)), 0.0);
    }

    #[test]
    fn to_f64_survives_huge_denominators() {
        // 1024^100 is outside the f64 exponent range as an integer, but the
        // quotient (1/2)^1000-ish is representable after scaling.
        let big = num::pow::pow(rat(1, 1024), 100);
        let v = rat_to_f64(&big);
        assert!(v > 0.0 && v.is_finite());
        let expect = 2f64.powi(-1000);
        assert!((v - expect).abs() <= expect * 1e-9);

        // A product of many distinct item probabilities stays finite too.
        let mut r = rat_int(1);
        for i in 1..200 {
            r *= rat(i, 1000);
        }
        assert!(rat_to_f64(&r).is_finite());
    }
}
