//! Numeric scalars.
//!
//! Two implementations of [`Scalar`]: [`Rational`] (arbitrary precision,
//! exact comparisons) and `f64` (comparisons within [`TOLERANCE`]).

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Absolute tolerance used by approximate comparisons.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Approx,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Mode::Exact),
            "approx" => Ok(Mode::Approx),
            other => Err(Error::Input(format!("unknown numeric mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Approx => "approx",
        })
    }
}

pub trait Scalar:
    Clone
    + fmt::Debug
    + fmt::Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + Serialize
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
    + AddAssign
    + for<'a> AddAssign<&'a Self>
    + Sum
{
    const MODE: Mode;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(n: i64) -> Self;
    fn from_rational(r: &Rational) -> Self;
    fn to_rational(&self) -> Rational;
    fn to_f64(&self) -> f64;
    /// Accepts integers, decimals, scientific notation and `n/d`.
    fn parse(text: &str) -> Result<Self>;
    /// Zero for exact scalars.
    fn tolerance() -> f64;

    fn ratio(n: i64, d: i64) -> Self {
        Self::from_i64(n) / Self::from_i64(d)
    }

    fn approx_eq(&self, other: &Self) -> bool;

    /// Largest integer not above `self`, snapping to an integer within the tolerance.
    fn floor_i64(&self) -> i64;

    /// Smallest integer not below `self`, snapping to an integer within the tolerance.
    fn ceil_i64(&self) -> i64;

    /// `self < other` by more than the tolerance.
    fn definitely_lt(&self, other: &Self) -> bool;

    fn definitely_gt(&self, other: &Self) -> bool {
        other.definitely_lt(self)
    }

    /// `self <= other` up to the tolerance.
    fn le_tol(&self, other: &Self) -> bool {
        !other.definitely_lt(self)
    }

    fn ge_tol(&self, other: &Self) -> bool {
        !self.definitely_lt(other)
    }

    fn is_zero_tol(&self) -> bool {
        self.approx_eq(&Self::zero())
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn abs_val(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn powi(&self, n: i32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n.unsigned_abs() {
            acc = acc * self;
        }
        if n < 0 {
            Self::one() / acc
        } else {
            acc
        }
    }

    /// Converts between scalar types through the decimal/fraction text form.
    fn convert<T: Scalar>(&self) -> T {
        match (Self::MODE, T::MODE) {
            (Mode::Exact, _) => T::from_rational(&self.to_rational()),
            (Mode::Approx, Mode::Approx) => T::parse(&self.to_string()).expect("finite float"),
            (Mode::Approx, Mode::Exact) => {
                T::parse(&self.to_string()).unwrap_or_else(|_| T::from_rational(&self.to_rational()))
            }
        }
    }
}

/// Arbitrary-precision rational. Serializes as `"num/den"`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Rational(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn integer(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_big(r: BigRational) -> Self {
        Rational(r)
    }

    pub fn as_big(&self) -> &BigRational {
        &self.0
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn recip(&self) -> Self {
        Rational(self.0.recip())
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// Exact binary value of a finite float.
    pub fn from_f64_exact(x: f64) -> Option<Self> {
        BigRational::from_float(x).map(Rational)
    }
}

impl Default for Rational {
    fn default() -> Self {
        Rational(BigRational::zero())
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Rational {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_rational(s).map(Rational).ok_or_else(|| Error::Parse(s.to_string()))
    }
}

macro_rules! forward_binop {
    ($tr:ident, $m:ident) => {
        impl $tr for Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                Rational(self.0.$m(rhs.0))
            }
        }
        impl<'a> $tr<&'a Rational> for Rational {
            type Output = Rational;
            fn $m(self, rhs: &'a Rational) -> Rational {
                Rational(self.0.$m(&rhs.0))
            }
        }
        impl<'a, 'b> $tr<&'b Rational> for &'a Rational {
            type Output = Rational;
            fn $m(self, rhs: &'b Rational) -> Rational {
                Rational((&self.0).$m(&rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl AddAssign for Rational {
    fn add_assign(&mut self, rhs: Rational) {
        self.0 += rhs.0;
    }
}

impl<'a> AddAssign<&'a Rational> for Rational {
    fn add_assign(&mut self, rhs: &'a Rational) {
        self.0 += &rhs.0;
    }
}

impl SubAssign for Rational {
    fn sub_assign(&mut self, rhs: Rational) {
        self.0 -= rhs.0;
    }
}

impl Sum for Rational {
    fn sum<I: Iterator<Item = Rational>>(iter: I) -> Rational {
        let mut acc = BigRational::zero();
        for r in iter {
            acc += r.0;
        }
        Rational(acc)
    }
}

impl<'a> Sum<&'a Rational> for Rational {
    fn sum<I: Iterator<Item = &'a Rational>>(iter: I) -> Rational {
        let mut acc = BigRational::zero();
        for r in iter {
            acc += &r.0;
        }
        Rational(acc)
    }
}

impl Serialize for Rational {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct RationalVisitor;

        impl<'de> Visitor<'de> for RationalVisitor {
            type Value = Rational;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a \"num/den\" string")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Rational, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Rational, E> {
                Ok(Rational::integer(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Rational, E> {
                Ok(Rational(BigRational::from_integer(BigInt::from(v))))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Rational, E> {
                Rational::parse(&v.to_string()).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(RationalVisitor)
    }
}

impl Scalar for Rational {
    const MODE: Mode = Mode::Exact;

    fn zero() -> Self {
        Rational(BigRational::zero())
    }

    fn one() -> Self {
        Rational(BigRational::one())
    }

    fn from_i64(n: i64) -> Self {
        Rational::integer(n)
    }

    fn ratio(n: i64, d: i64) -> Self {
        Rational::new(n, d)
    }

    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn to_rational(&self) -> Rational {
        self.clone()
    }

    fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    fn parse(text: &str) -> Result<Self> {
        text.parse()
    }

    fn tolerance() -> f64 {
        0.0
    }

    fn approx_eq(&self, other: &Self) -> bool {
        self == other
    }

    fn definitely_lt(&self, other: &Self) -> bool {
        self < other
    }

    fn floor_i64(&self) -> i64 {
        self.0.floor().to_integer().to_i64().expect("integer part fits in i64")
    }

    fn ceil_i64(&self) -> i64 {
        self.0.ceil().to_integer().to_i64().expect("integer part fits in i64")
    }

    fn powi(&self, n: i32) -> Self {
        use num_traits::Pow;
        Rational(Pow::pow(&self.0, n))
    }
}

impl Scalar for f64 {
    const MODE: Mode = Mode::Approx;

    fn zero() -> Self {
        0.0
    }

    fn one() -> Self {
        1.0
    }

    fn from_i64(n: i64) -> Self {
        n as f64
    }

    fn from_rational(r: &Rational) -> Self {
        r.to_f64()
    }

    fn to_rational(&self) -> Rational {
        Rational::from_f64_exact(*self).expect("finite float")
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.contains('/') {
            return parse_rational(t).and_then(|r| r.to_f64()).ok_or_else(|| Error::Parse(text.to_string()));
        }
        match t.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(Error::Parse(text.to_string())),
        }
    }

    fn tolerance() -> f64 {
        TOLERANCE
    }

    fn approx_eq(&self, other: &Self) -> bool {
        (self - other).abs() <= TOLERANCE
    }

    fn definitely_lt(&self, other: &Self) -> bool {
        *self < *other - TOLERANCE
    }

    fn floor_i64(&self) -> i64 {
        (self + TOLERANCE).floor() as i64
    }

    fn ceil_i64(&self) -> i64 {
        (self - TOLERANCE).ceil() as i64
    }

    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
}

/// Total order for sorting scalars that are known not to be NaN.
pub fn cmp_scalar<S: Scalar>(a: &S, b: &S) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

fn parse_rational(text: &str) -> Option<BigRational> {
    let t = text.trim();
    match t.split_once('/') {
        Some((n, d)) => {
            let n = parse_decimal(n)?;
            let d = parse_decimal(d)?;
            if d.is_zero() {
                None
            } else {
                Some(n / d)
            }
        }
        None => parse_decimal(t),
    }
}

fn parse_decimal(text: &str) -> Option<BigRational> {
    let t = text.trim();
    let (negative, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("0{int_part}{frac_part}").parse().ok()?;
    let scale = exponent.checked_sub(i32::try_from(frac_part.len()).ok()?)?;
    let ten = BigInt::from(10u32);
    let mut value = BigRational::from_integer(digits);
    if scale >= 0 {
        value *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= BigRational::from_integer(num_traits::pow(ten, scale.unsigned_abs() as usize));
    }
    Some(if negative { -value } else { value })
}
