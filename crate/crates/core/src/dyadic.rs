//! Exact dyadic rationals `k / 2^j`.
//!
//! Every value a network with weights in `{0, ±1/2, ±1, 2}` computes from
//! dyadic inputs is again dyadic, so the exact evaluator never rounds.
//! Mantissas are arbitrary precision; values that fit in an `i64` stay
//! on an allocation-free fast path.
//!
//! Canonical form: the mantissa is odd, or the exponent is zero (integers
//! keep their even mantissas because the exponent is a natural number).
//! Zero is always `0/2^0`. Two values are equal iff their canonical forms
//! are equal, which the derived `PartialEq` relies on.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Mantissa {
    Small(i64),
    // Only used when the value does not fit in an i64.
    Big(BigInt),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    mantissa: Mantissa,
    exponent: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic {
        mantissa: Mantissa::Small(0),
        exponent: 0,
    };
    pub const ONE: Dyadic = Dyadic {
        mantissa: Mantissa::Small(1),
        exponent: 0,
    };

    /// `mantissa / 2^exponent`, canonicalized.
    pub fn new(mantissa: impl Into<BigInt>, exponent: u32) -> Self {
        Self::from_big(mantissa.into(), exponent)
    }

    pub fn from_int(value: i64) -> Self {
        Self::from_i128(value as i128, 0)
    }

    /// `2^-exponent`.
    pub fn pow2_inv(exponent: u32) -> Self {
        Dyadic {
            mantissa: Mantissa::Small(1),
            exponent,
        }
    }

    /// `2^exponent` for a natural exponent.
    pub fn pow2(exponent: u32) -> Self {
        if exponent < 63 {
            Self::from_i128(1i128 << exponent, 0)
        } else {
            Self::from_big(BigInt::one() << exponent, 0)
        }
    }

    fn from_i128(mut m: i128, mut e: u32) -> Self {
        if m == 0 {
            return Self::ZERO;
        }
        let shift = m.trailing_zeros().min(e);
        m >>= shift;
        e -= shift;
        match i64::try_from(m) {
            Ok(small) => Dyadic {
                mantissa: Mantissa::Small(small),
                exponent: e,
            },
            Err(_) => Dyadic {
                mantissa: Mantissa::Big(BigInt::from(m)),
                exponent: e,
            },
        }
    }

    fn from_big(mut m: BigInt, mut e: u32) -> Self {
        let Some(tz) = m.trailing_zeros() else {
            return Self::ZERO;
        };
        let shift = (tz.min(e as u64)) as u32;
        if shift > 0 {
            m >>= shift;
            e -= shift;
        }
        match m.to_i64() {
            Some(small) => Dyadic {
                mantissa: Mantissa::Small(small),
                exponent: e,
            },
            None => Dyadic {
                mantissa: Mantissa::Big(m),
                exponent: e,
            },
        }
    }

    pub fn mantissa(&self) -> BigInt {
        match &self.mantissa {
            Mantissa::Small(m) => BigInt::from(*m),
            Mantissa::Big(m) => m.clone(),
        }
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.mantissa, Mantissa::Small(0))
    }

    pub fn is_negative(&self) -> bool {
        match &self.mantissa {
            Mantissa::Small(m) => *m < 0,
            Mantissa::Big(m) => m.sign() == Sign::Minus,
        }
    }

    pub fn is_positive(&self) -> bool {
        !self.is_zero() && !self.is_negative()
    }

    pub fn abs(&self) -> Dyadic {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }

    /// ReLU: `max(self, 0)`.
    pub fn relu(&self) -> Dyadic {
        if self.is_negative() {
            Self::ZERO
        } else {
            self.clone()
        }
    }

    pub fn half(&self) -> Dyadic {
        match &self.mantissa {
            Mantissa::Small(m) => Self::from_i128(*m as i128, self.exponent + 1),
            Mantissa::Big(m) => Self::from_big(m.clone(), self.exponent + 1),
        }
    }

    pub fn double(&self) -> Dyadic {
        if self.exponent > 0 {
            return Dyadic {
                mantissa: self.mantissa.clone(),
                exponent: self.exponent - 1,
            };
        }
        match &self.mantissa {
            Mantissa::Small(m) => Self::from_i128((*m as i128) << 1, 0),
            Mantissa::Big(m) => Self::from_big(m << 1u32, 0),
        }
    }

    /// Multiply by `2^shift` (shift may be negative).
    pub fn scale_pow2(&self, shift: i64) -> Dyadic {
        if shift >= 0 {
            let s = shift as u64;
            if s <= self.exponent as u64 {
                return Dyadic {
                    mantissa: self.mantissa.clone(),
                    exponent: self.exponent - s as u32,
                };
            }
            let rest = s - self.exponent as u64;
            Self::from_big(self.mantissa() << rest, 0)
        } else {
            let e = self.exponent as u64 + shift.unsigned_abs();
            Self::from_big(self.mantissa(), u32::try_from(e).expect("dyadic exponent overflow"))
        }
    }

    /// Nearest binary64 value; never fails.
    pub fn to_f64(&self) -> f64 {
        match &self.mantissa {
            Mantissa::Small(m) if m.unsigned_abs() < (1u64 << 53) && self.exponent <= 1022 => {
                (*m as f64) * 2f64.powi(-(self.exponent as i32))
            }
            _ => {
                // Keep the leading 64 bits so the scale step cannot overflow.
                let m = self.mantissa();
                let bits = m.bits();
                let drop = bits.saturating_sub(64);
                let top = (&m >> drop).to_f64().unwrap_or(0.0);
                ldexp(top, drop as i64 - self.exponent as i64)
            }
        }
    }

    /// Binary64 value, or `Error::Inexact` when the value has no exact
    /// binary64 representation in the guaranteed range
    /// (`|mantissa| < 2^53`, `exponent <= 1022`).
    pub fn to_f64_exact(&self) -> Result<f64> {
        match &self.mantissa {
            Mantissa::Small(m) if m.unsigned_abs() < (1u64 << 53) && self.exponent <= 1022 => Ok(self.to_f64()),
            _ => Err(Error::Inexact {
                value: self.to_string(),
                nearest: self.to_f64(),
            }),
        }
    }

    /// Exact conversion of a finite binary64 value.
    pub fn from_f64(x: f64) -> Result<Dyadic> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("{x} is not finite")));
        }
        if x == 0.0 {
            return Ok(Self::ZERO);
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1i128 } else { 1 };
        let raw_exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp2) = if raw_exp == 0 {
            (frac, -1074i64)
        } else {
            (frac | (1u64 << 52), raw_exp - 1075)
        };
        let m = sign * mant as i128;
        if exp2 >= 0 {
            Ok(Self::from_big(BigInt::from(m) << exp2 as u64, 0))
        } else {
            Ok(Self::from_i128(m, (-exp2) as u32))
        }
    }

    /// Largest integer `<= self`.
    pub fn floor(&self) -> BigInt {
        let m = self.mantissa();
        if self.exponent == 0 {
            return m;
        }
        let d = BigInt::one() << self.exponent;
        num_integer::Integer::div_floor(&m, &d)
    }

    fn aligned_small(a: &Dyadic, b: &Dyadic) -> Option<(i128, i128, u32)> {
        let (Mantissa::Small(ma), Mantissa::Small(mb)) = (&a.mantissa, &b.mantissa) else {
            return None;
        };
        let e = a.exponent.max(b.exponent);
        let sa = e - a.exponent;
        let sb = e - b.exponent;
        if sa < 64 && sb < 64 {
            Some(((*ma as i128) << sa, (*mb as i128) << sb, e))
        } else {
            None
        }
    }

    fn aligned_big(a: &Dyadic, b: &Dyadic) -> (BigInt, BigInt, u32) {
        let e = a.exponent.max(b.exponent);
        (a.mantissa() << (e - a.exponent), b.mantissa() << (e - b.exponent), e)
    }
}

fn ldexp(x: f64, k: i64) -> f64 {
    let mut x = x;
    let mut k = k;
    while k > 1000 {
        x *= 2f64.powi(1000);
        k -= 1000;
    }
    while k < -1000 {
        x *= 2f64.powi(-1000);
        k += 1000;
    }
    x * 2f64.powi(k as i32)
}

impl Default for Dyadic {
    fn default() -> Self {
        Self::ZERO
    }
}

impl From<i64> for Dyadic {
    fn from(v: i64) -> Self {
        Self::from_int(v)
    }
}

impl Add<&Dyadic> for &Dyadic {
    type Output = Dyadic;

    fn add(self, rhs: &Dyadic) -> Dyadic {
        if rhs.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return rhs.clone();
        }
        match Dyadic::aligned_small(self, rhs) {
            Some((a, b, e)) => Dyadic::from_i128(a + b, e),
            None => {
                let (a, b, e) = Dyadic::aligned_big(self, rhs);
                Dyadic::from_big(a + b, e)
            }
        }
    }
}

impl Sub<&Dyadic> for &Dyadic {
    type Output = Dyadic;

    fn sub(self, rhs: &Dyadic) -> Dyadic {
        self + &(-rhs)
    }
}

impl Mul<&Dyadic> for &Dyadic {
    type Output = Dyadic;

    fn mul(self, rhs: &Dyadic) -> Dyadic {
        if self.is_zero() || rhs.is_zero() {
            return Dyadic::ZERO;
        }
        let e = self.exponent + rhs.exponent;
        match (&self.mantissa, &rhs.mantissa) {
            (Mantissa::Small(a), Mantissa::Small(b)) => Dyadic::from_i128(*a as i128 * *b as i128, e),
            _ => Dyadic::from_big(self.mantissa() * rhs.mantissa(), e),
        }
    }
}

impl Neg for &Dyadic {
    type Output = Dyadic;

    fn neg(self) -> Dyadic {
        match &self.mantissa {
            Mantissa::Small(m) => Dyadic::from_i128(-(*m as i128), self.exponent),
            Mantissa::Big(m) => Dyadic::from_big(-m, self.exponent),
        }
    }
}

impl Neg for Dyadic {
    type Output = Dyadic;

    fn neg(self) -> Dyadic {
        -&self
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident) => {
        impl $tr<Dyadic> for Dyadic {
            type Output = Dyadic;
            fn $method(self, rhs: Dyadic) -> Dyadic {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Dyadic> for Dyadic {
            type Output = Dyadic;
            fn $method(self, rhs: &Dyadic) -> Dyadic {
                (&self).$method(rhs)
            }
        }
        impl $tr<Dyadic> for &Dyadic {
            type Output = Dyadic;
            fn $method(self, rhs: Dyadic) -> Dyadic {
                self.$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);

impl AddAssign<&Dyadic> for Dyadic {
    fn add_assign(&mut self, rhs: &Dyadic) {
        *self = &*self + rhs;
    }
}

impl AddAssign<Dyadic> for Dyadic {
    fn add_assign(&mut self, rhs: Dyadic) {
        *self = &*self + &rhs;
    }
}

impl Sum for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::ZERO, |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Dyadic> for Dyadic {
    fn sum<I: Iterator<Item = &'a Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::ZERO, |acc, x| acc + x)
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        match Dyadic::aligned_small(self, other) {
            Some((a, b, _)) => a.cmp(&b),
            None => {
                let (a, b, _) = Dyadic::aligned_big(self, other);
                a.cmp(&b)
            }
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.mantissa {
            Mantissa::Small(m) => write!(f, "{m}")?,
            Mantissa::Big(m) => write!(f, "{m}")?,
        }
        if self.exponent > 0 {
            write!(f, "/2^{}", self.exponent)?;
        }
        Ok(())
    }
}

impl FromStr for Dyadic {
    type Err = Error;

    /// Accepts `"m/2^e"` or a plain integer `"m"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(s.to_string());
        let (num, exp) = match s.split_once('/') {
            None => (s, 0u32),
            Some((num, den)) => {
                let exp = den.trim().strip_prefix("2^").ok_or_else(bad)?;
                (num, exp.trim().parse::<u32>().map_err(|_| bad())?)
            }
        };
        let m: BigInt = num.trim().parse().map_err(|_| bad())?;
        Ok(Dyadic::new(m, exp))
    }
}

impl Serialize for Dyadic {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Dyadic {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Zero for Dyadic {
    fn zero() -> Self {
        Self::ZERO
    }

    fn is_zero(&self) -> bool {
        Dyadic::is_zero(self)
    }
}

impl One for Dyadic {
    fn one() -> Self {
        Self::ONE
    }
}

/// Shorthand for `k / 2^j` in tests and builders.
pub fn dy(k: i64, j: u32) -> Dyadic {
    Dyadic::from_i128(k as i128, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn add_examples() {
        assert_eq!(dy(1, 1) + dy(1, 1), Dyadic::ONE);
        assert_eq!(dy(3, 3) + dy(-1, 3), dy(1, 2));
        assert_eq!(Dyadic::ZERO + dy(7, 5), dy(7, 5));
    }

    #[test]
    fn mul_examples() {
        assert_eq!(dy(3, 2) * dy(1, 1), dy(3, 3));
        assert_eq!(dy(2, 0) * dy(5, 3), dy(5, 2));
        assert_eq!(dy(5, 3) * Dyadic::ZERO, Dyadic::ZERO);
    }

    #[test]
    fn relu_examples() {
        assert_eq!(dy(-3, 0).relu(), Dyadic::ZERO);
        assert_eq!(dy(5, 4).relu(), dy(5, 4));
        assert_eq!(Dyadic::ZERO.relu(), Dyadic::ZERO);
    }

    #[test]
    fn to_float_examples() {
        assert_eq!(dy(1, 1).to_f64_exact().unwrap(), 0.5);
        assert_eq!(dy(3, 3).to_f64_exact().unwrap(), 0.375);
        let big = Dyadic::new((BigInt::one() << 60u32) + 1, 60);
        assert!(matches!(big.to_f64_exact(), Err(Error::Inexact { .. })));
        assert!((big.to_f64() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_form() {
        let x = Dyadic::new(12, 3);
        assert_eq!(x.mantissa(), BigInt::from(3));
        assert_eq!(x.exponent(), 1);
        let z = Dyadic::new(0, 9);
        assert_eq!(z.exponent(), 0);
        // integers keep even mantissas at exponent 0
        assert_eq!(Dyadic::new(8, 2), dy(2, 0));
        assert_eq!(dy(2, 0).mantissa(), BigInt::from(2));
    }

    #[test]
    fn text_form() {
        assert_eq!(dy(5, 3).to_string(), "5/2^3");
        assert_eq!(dy(-4, 0).to_string(), "-4");
        assert_eq!("5/2^3".parse::<Dyadic>().unwrap(), dy(5, 3));
        assert_eq!("10/2^4".parse::<Dyadic>().unwrap(), dy(5, 3));
        assert_eq!("-7".parse::<Dyadic>().unwrap(), dy(-7, 0));
        assert!("3/5".parse::<Dyadic>().is_err());
        assert!("x".parse::<Dyadic>().is_err());
    }

    #[test]
    fn big_path() {
        let huge = Dyadic::pow2(100);
        let x = &huge + &Dyadic::ONE;
        assert_eq!(&x - &huge, Dyadic::ONE);
        let tiny = Dyadic::pow2_inv(200);
        assert_eq!((&tiny + &Dyadic::ONE) - Dyadic::ONE, tiny);
        assert_eq!(huge.half(), Dyadic::pow2(99));
        assert_eq!(Dyadic::pow2(62).double(), Dyadic::pow2(63));
        assert_eq!(dy(i64::MIN, 0).abs(), Dyadic::pow2(63));
    }

    #[test]
    fn from_f64_exact() {
        assert_eq!(Dyadic::from_f64(0.375).unwrap(), dy(3, 3));
        assert_eq!(Dyadic::from_f64(-6.0).unwrap(), dy(-6, 0));
        assert_eq!(Dyadic::from_f64(2f64.powi(80)).unwrap(), Dyadic::pow2(80));
        let x = 0.1f64;
        assert_eq!(Dyadic::from_f64(x).unwrap().to_f64_exact().unwrap(), x);
        assert!(Dyadic::from_f64(f64::NAN).is_err());
    }

    #[test]
    fn floor_and_scale() {
        assert_eq!(dy(-3, 1).floor(), BigInt::from(-2));
        assert_eq!(dy(7, 2).floor(), BigInt::from(1));
        assert_eq!(dy(3, 1).scale_pow2(3), dy(12, 0));
        assert_eq!(dy(3, 0).scale_pow2(-2), dy(3, 2));
    }

    fn arb_dyadic() -> impl Strategy<Value = Dyadic> {
        prop_oneof![
            (any::<i32>(), 0u32..40).prop_map(|(m, e)| dy(m as i64, e)),
            (any::<i64>(), 0u32..90).prop_map(|(m, e)| Dyadic::new(BigInt::from(m) * BigInt::from(m), e)),
        ]
    }

    fn reference(x: &Dyadic) -> (BigInt, u32) {
        (x.mantissa(), x.exponent())
    }

    proptest! {
        #[test]
        fn ring_laws(a in arb_dyadic(), b in arb_dyadic(), c in arb_dyadic()) {
            prop_assert_eq!(&a + &b, &b + &a);
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!((&a + &b) + &c, &a + &(&b + &c));
            prop_assert_eq!((&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&a - &a, Dyadic::ZERO);
            prop_assert_eq!(&a + &Dyadic::ZERO, a.clone());
        }

        #[test]
        fn canonicalization_idempotent(a in arb_dyadic()) {
            let (m, e) = reference(&a);
            let again = Dyadic::new(m.clone(), e);
            prop_assert_eq!(&again, &a);
            prop_assert!(e == 0 || m.trailing_zeros() == Some(0));
        }

        #[test]
        fn order_matches_difference_sign(a in arb_dyadic(), b in arb_dyadic()) {
            let d = &a - &b;
            let expected = if d.is_zero() { Ordering::Equal } else if d.is_negative() { Ordering::Less } else { Ordering::Greater };
            prop_assert_eq!(a.cmp(&b), expected);
        }

        #[test]
        fn halving_and_doubling_invert(a in arb_dyadic()) {
            prop_assert_eq!(a.half().double(), a.clone());
            prop_assert_eq!(a.double().half(), a.clone());
            prop_assert_eq!(a.half(), &a * &dy(1, 1));
        }

        #[test]
        fn text_roundtrip(a in arb_dyadic()) {
            prop_assert_eq!(a.to_string().parse::<Dyadic>().unwrap(), a);
        }
    }
}
