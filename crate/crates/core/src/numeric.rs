//! Numeric backends.
//!
//! Everything that can be computed exactly is computed in [`Rational`]
//! (arbitrary precision). Quantities involving non-integer powers, logarithms
//! or exponentials are computed in [`Interval`], an outward-rounded `f64`
//! enclosure: every operation returns an interval guaranteed to contain the
//! true real result, so comparisons made with [`Interval::certainly_le`]
//! never produce false positives from rounding.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// `base^exp` for a signed integer exponent. `base` must be nonzero when `exp < 0`.
pub fn pow_i(base: &Rational, exp: i64) -> Rational {
    let mag = exp.unsigned_abs();
    let mut acc = Rational::one();
    let mut b = base.clone();
    let mut e = mag;
    while e > 0 {
        if e & 1 == 1 {
            acc *= &b;
        }
        b = &b * &b;
        e >>= 1;
    }
    if exp < 0 {
        acc.recip()
    } else {
        acc
    }
}

/// Parses `"p/q"`, `"p"` or a plain decimal such as `"1.25"` / `"-0.5"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || FlowError::Parse(format!("not a rational number: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = whole.starts_with('-');
        let whole_digits = whole.trim_start_matches(['-', '+']);
        let digits = format!("{}{}", if whole_digits.is_empty() { "0" } else { whole_digits }, frac);
        let mut n: BigInt = digits.parse().map_err(|_| bad())?;
        if neg {
            n = -n;
        }
        let d = num_traits::pow(BigInt::from(10), frac.len());
        return Ok(Rational::new(n, d));
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Smallest and largest of two rationals, by reference.
pub fn rmax<'a>(a: &'a Rational, b: &'a Rational) -> &'a Rational {
    if a >= b {
        a
    } else {
        b
    }
}

/// Sum-accumulator abstraction used by the prefix-sum tables.
pub trait Accum: Clone + Send + Sync {
    fn empty() -> Self;
    fn acc(&mut self, other: &Self);
    fn diff(&self, other: &Self) -> Self;
}

impl Accum for Rational {
    fn empty() -> Self {
        Rational::zero()
    }
    fn acc(&mut self, other: &Self) {
        *self += other;
    }
    fn diff(&self, other: &Self) -> Self {
        self - other
    }
}

impl Accum for f64 {
    fn empty() -> Self {
        0.0
    }
    fn acc(&mut self, other: &Self) {
        *self += *other;
    }
    fn diff(&self, other: &Self) -> Self {
        self - other
    }
}

impl Accum for Interval {
    fn empty() -> Self {
        Interval::point(0.0)
    }
    fn acc(&mut self, other: &Self) {
        *self = *self + *other;
    }
    fn diff(&self, other: &Self) -> Self {
        *self - *other
    }
}

/// Closed interval `[lo, hi]` of reals with outward rounding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

fn down(x: f64) -> f64 {
    if x.is_nan() {
        x
    } else {
        x.next_down()
    }
}

fn up(x: f64) -> f64 {
    if x.is_nan() {
        x
    } else {
        x.next_up()
    }
}

// libm transcendental functions are accurate to within one ulp; two ulps of
// slack keeps the enclosure sound.
fn down2(x: f64) -> f64 {
    down(down(x))
}

fn up2(x: f64) -> f64 {
    up(up(x))
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan());
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn from_rational(r: &Rational) -> Self {
        let v = to_f64(r);
        match Rational::from_float(v) {
            Some(exact) if &exact == r => Interval::point(v),
            _ => Interval { lo: down(v), hi: up(v) },
        }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// `true` only when every point of `self` is `<=` every point of `other`.
    pub fn certainly_le(&self, other: &Interval) -> bool {
        self.hi <= other.lo
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Enclosure of `max(a, b)` for `a ∈ self`, `b ∈ other`.
    pub fn max(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.max(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn abs(&self) -> Interval {
        if self.lo >= 0.0 {
            *self
        } else if self.hi <= 0.0 {
            Interval { lo: -self.hi, hi: -self.lo }
        } else {
            Interval { lo: 0.0, hi: (-self.lo).max(self.hi) }
        }
    }

    pub fn recip(&self) -> Result<Interval> {
        Interval::point(1.0) / *self
    }

    pub fn ln(&self) -> Result<Interval> {
        if self.lo <= 0.0 {
            return Err(FlowError::Numeric(format!("log of non-positive interval {self:?}")));
        }
        Ok(Interval { lo: down2(self.lo.ln()), hi: up2(self.hi.ln()) })
    }

    pub fn exp(&self) -> Interval {
        Interval { lo: down2(self.lo.exp()).max(0.0), hi: up2(self.hi.exp()) }
    }

    /// `self^e` for a strictly positive base.
    pub fn pow(&self, e: &Interval) -> Result<Interval> {
        if self.lo <= 0.0 {
            return Err(FlowError::Numeric(format!("power of non-positive interval {self:?}")));
        }
        let cands = [
            self.lo.powf(e.lo),
            self.lo.powf(e.hi),
            self.hi.powf(e.lo),
            self.hi.powf(e.hi),
        ];
        let lo = cands.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cands.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Interval { lo: down2(lo).max(0.0), hi: up2(hi) })
    }

    pub fn pow_rational(&self, e: &Rational) -> Result<Interval> {
        self.pow(&Interval::from_rational(e))
    }
}

impl std::ops::Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        let lo = self.lo + o.lo;
        let hi = self.hi + o.hi;
        Interval { lo: down(lo), hi: up(hi) }
    }
}

impl std::ops::Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval { lo: down(self.lo - o.hi), hi: up(self.hi - o.lo) }
    }
}

impl std::ops::Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval { lo: down(lo), hi: up(hi) }
    }
}

impl std::ops::Div for Interval {
    type Output = Result<Interval>;
    fn div(self, o: Interval) -> Result<Interval> {
        if o.lo <= 0.0 && o.hi >= 0.0 {
            return Err(FlowError::Numeric(format!("division by interval containing zero {o:?}")));
        }
        let c = [self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi];
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Interval { lo: down(lo), hi: up(hi) })
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

/// A computed constant: exact when the computation stayed rational,
/// otherwise a certified enclosure.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstantValue {
    Exact(Rational),
    Enclosure(Interval),
}

impl ConstantValue {
    pub fn one() -> Self {
        ConstantValue::Exact(Rational::one())
    }

    pub fn exact(&self) -> Option<&Rational> {
        match self {
            ConstantValue::Exact(r) => Some(r),
            ConstantValue::Enclosure(_) => None,
        }
    }

    pub fn interval(&self) -> Interval {
        match self {
            ConstantValue::Exact(r) => Interval::from_rational(r),
            ConstantValue::Enclosure(i) => *i,
        }
    }

    pub fn lo(&self) -> f64 {
        self.interval().lo
    }

    pub fn hi(&self) -> f64 {
        self.interval().hi
    }

    pub fn approx(&self) -> f64 {
        match self {
            ConstantValue::Exact(r) => to_f64(r),
            ConstantValue::Enclosure(i) => i.mid(),
        }
    }

    /// Certified `self <= other`; exact comparison when both are exact.
    pub fn certainly_le(&self, other: &ConstantValue) -> bool {
        match (self, other) {
            (ConstantValue::Exact(a), ConstantValue::Exact(b)) => a <= b,
            _ => self.interval().certainly_le(&other.interval()),
        }
    }

    /// Enclosure of the maximum of two constants.
    pub fn max(&self, other: &ConstantValue) -> ConstantValue {
        match (self, other) {
            (ConstantValue::Exact(a), ConstantValue::Exact(b)) => ConstantValue::Exact(rmax(a, b).clone()),
            _ => ConstantValue::Enclosure(self.interval().max(&other.interval())),
        }
    }

    pub fn to_float(&self) -> ConstantValue {
        ConstantValue::Enclosure(self.interval())
    }

    pub fn mul(&self, o: &ConstantValue) -> ConstantValue {
        match (self, o) {
            (ConstantValue::Exact(a), ConstantValue::Exact(b)) => ConstantValue::Exact(a * b),
            _ => ConstantValue::Enclosure(self.interval() * o.interval()),
        }
    }

    pub fn add(&self, o: &ConstantValue) -> ConstantValue {
        match (self, o) {
            (ConstantValue::Exact(a), ConstantValue::Exact(b)) => ConstantValue::Exact(a + b),
            _ => ConstantValue::Enclosure(self.interval() + o.interval()),
        }
    }

    pub fn div(&self, o: &ConstantValue) -> Result<ConstantValue> {
        match (self, o) {
            (ConstantValue::Exact(a), ConstantValue::Exact(b)) => {
                if b.is_zero() {
                    Err(FlowError::Numeric("division by zero".into()))
                } else {
                    Ok(ConstantValue::Exact(a / b))
                }
            }
            _ => Ok(ConstantValue::Enclosure((self.interval() / o.interval())?)),
        }
    }

    /// `self^e`; exact when `self` is exact and `e` is an integer.
    pub fn pow(&self, e: &Rational) -> Result<ConstantValue> {
        if let ConstantValue::Exact(a) = self {
            if e.is_integer() {
                let k = e.to_integer().to_i64().ok_or_else(|| FlowError::Numeric(format!("exponent {e} too large")))?;
                if a.is_zero() && k < 0 {
                    return Err(FlowError::Numeric("zero to a negative power".into()));
                }
                return Ok(ConstantValue::Exact(pow_i(a, k)));
            }
        }
        Ok(ConstantValue::Enclosure(self.interval().pow_rational(e)?))
    }

    /// Raises the lower end of an enclosure to `floor` (sound when the true
    /// value is known to be at least `floor`).
    pub fn clamp_below(self, floor: f64) -> ConstantValue {
        match self {
            ConstantValue::Enclosure(i) => ConstantValue::Enclosure(Interval { lo: i.lo.max(floor), hi: i.hi.max(floor) }),
            e => e,
        }
    }

    /// Smallest rational at least as large as the value.
    pub fn upper_rational(&self) -> Rational {
        match self {
            ConstantValue::Exact(r) => r.clone(),
            ConstantValue::Enclosure(i) => Rational::from_float(i.hi).unwrap_or_else(|| int(i64::MAX)),
        }
    }

    /// Ordering used to pick an argmax: exact values compare exactly,
    /// enclosures by their lower end.
    pub fn rank_cmp(&self, other: &ConstantValue) -> Ordering {
        match (self, other) {
            (ConstantValue::Exact(a), ConstantValue::Exact(b)) => a.cmp(b),
            _ => self.lo().total_cmp(&other.lo()).then(self.hi().total_cmp(&other.hi())),
        }
    }
}

impl fmt::Display for ConstantValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstantValue::Exact(r) => write!(f, "{r}"),
            ConstantValue::Enclosure(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ConstantRepr {
    Exact { exact: String, approx: f64 },
    Enclosure { lo: f64, hi: f64 },
}

impl Serialize for ConstantValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            ConstantValue::Exact(r) => ConstantRepr::Exact { exact: r.to_string(), approx: to_f64(r) },
            ConstantValue::Enclosure(i) => ConstantRepr::Enclosure { lo: i.lo, hi: i.hi },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConstantValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ConstantRepr::deserialize(d)? {
            ConstantRepr::Exact { exact, .. } => parse_rational(&exact)
                .map(ConstantValue::Exact)
                .map_err(serde::de::Error::custom),
            ConstantRepr::Enclosure { lo, hi } => Ok(ConstantValue::Enclosure(Interval { lo, hi })),
        }
    }
}

/// `#[serde(with = "rational_serde")]` for a single rational as `"p/q"`.
pub mod rational_serde {
    use super::{parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "rational_vec_serde")]` for a list of rationals.
pub mod rational_vec_serde {
    use super::{parse_rational, Rational};
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for r in v {
            seq.serialize_element(&r.to_string())?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter().map(|s| parse_rational(s).map_err(serde::de::Error::custom)).collect()
    }
}

/// Positive part check shared by weight and measure constructors.
pub fn is_positive(r: &Rational) -> bool {
    r.is_positive()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("3/6").unwrap(), ratio(1, 2));
        assert_eq!(parse_rational("-4").unwrap(), int(-4));
        assert_eq!(parse_rational("1.25").unwrap(), ratio(5, 4));
        assert_eq!(parse_rational("-0.5").unwrap(), ratio(-1, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1.").is_err());
    }

    #[test]
    fn integer_powers() {
        assert_eq!(pow_i(&int(2), 10), int(1024));
        assert_eq!(pow_i(&int(3), -2), ratio(1, 9));
        assert_eq!(pow_i(&ratio(2, 3), 0), int(1));
    }

    #[test]
    fn interval_encloses_third() {
        let third = Interval::from_rational(&ratio(1, 3));
        assert!(third.lo < 1.0 / 3.0 || third.lo <= third.hi);
        let three = Interval::point(3.0);
        let one = third * three;
        assert!(one.contains(1.0));
        assert!(one.width() < 1e-14);
    }

    #[test]
    fn transcendental_enclosures() {
        let x = Interval::point(2.0);
        let l = x.ln().unwrap();
        assert!(l.contains(std::f64::consts::LN_2));
        let back = l.exp();
        assert!(back.contains(2.0));
        let sq = x.pow(&Interval::point(0.5)).unwrap();
        assert!(sq.contains(std::f64::consts::SQRT_2));
        assert!(Interval::point(0.0).ln().is_err());
        assert!((Interval::point(1.0) / Interval::new(-1.0, 1.0)).is_err());
    }

    #[test]
    fn constant_value_ordering() {
        let a = ConstantValue::Exact(ratio(9, 8));
        let b = ConstantValue::Exact(ratio(5, 4));
        assert!(a.certainly_le(&b));
        assert!(!b.certainly_le(&a));
        assert_eq!(a.max(&b), b);
        let e = ConstantValue::Enclosure(Interval::new(1.3, 1.4));
        assert!(b.certainly_le(&e));
        let json = serde_json::to_string(&a).unwrap();
        let back: ConstantValue = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }
}
