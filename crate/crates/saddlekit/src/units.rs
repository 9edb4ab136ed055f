//! Exact physical-dimension algebra with rational exponents.
//!
//! A [`Dimension`] is a vector of exact rational exponents over the ordered
//! base `(m, kg, s, K, obj)`, where `obj` is the abstract unit in which an
//! optimization objective is measured. Equality of dimensions is exact
//! rational equality, which makes dimensional consistency a checkable
//! predicate rather than a convention. No magnitude conversion happens here;
//! the algebra tracks dimensions only.

use std::fmt;
use std::ops::{Div, Mul};
use std::str::FromStr;
use thiserror::Error;

/// Number of base dimensions.
pub const NUM_BASE: usize = 5;

/// Symbols of the base dimensions, in storage order.
pub const BASE_SYMBOLS: [&str; NUM_BASE] = ["m", "kg", "s", "K", "obj"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UnitsError {
    #[error("rational exponent has zero denominator")]
    ZeroDenominator,
    #[error("exponent arithmetic overflowed i64")]
    ExponentOverflow,
    #[error("unit syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown unit symbol `{symbol}` at byte {position}")]
    UnknownSymbol { symbol: String, position: usize },
}

/// Exact rational number with positive denominator, stored in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rational {
    num: i64,
    den: i64,
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

impl Rational {
    pub const ZERO: Rational = Rational { num: 0, den: 1 };
    pub const ONE: Rational = Rational { num: 1, den: 1 };

    pub fn new(num: i64, den: i64) -> Result<Self, UnitsError> {
        if den == 0 {
            return Err(UnitsError::ZeroDenominator);
        }
        let sign = if den < 0 { -1 } else { 1 };
        let num = num.checked_mul(sign).ok_or(UnitsError::ExponentOverflow)?;
        let den = den.checked_mul(sign).ok_or(UnitsError::ExponentOverflow)?;
        let g = gcd(num, den);
        if g == 0 {
            return Ok(Rational::ZERO);
        }
        Ok(Rational { num: num / g, den: den / g })
    }

    pub const fn integer(n: i64) -> Self {
        Rational { num: n, den: 1 }
    }

    pub fn numer(&self) -> i64 {
        self.num
    }

    pub fn denom(&self) -> i64 {
        self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn checked_add(self, other: Self) -> Result<Self, UnitsError> {
        let a = self.num.checked_mul(other.den).ok_or(UnitsError::ExponentOverflow)?;
        let b = other.num.checked_mul(self.den).ok_or(UnitsError::ExponentOverflow)?;
        let num = a.checked_add(b).ok_or(UnitsError::ExponentOverflow)?;
        let den = self.den.checked_mul(other.den).ok_or(UnitsError::ExponentOverflow)?;
        Rational::new(num, den)
    }

    pub fn checked_neg(self) -> Result<Self, UnitsError> {
        Ok(Rational { num: self.num.checked_neg().ok_or(UnitsError::ExponentOverflow)?, den: self.den })
    }

    pub fn checked_sub(self, other: Self) -> Result<Self, UnitsError> {
        self.checked_add(other.checked_neg()?)
    }

    pub fn checked_mul(self, other: Self) -> Result<Self, UnitsError> {
        let num = self.num.checked_mul(other.num).ok_or(UnitsError::ExponentOverflow)?;
        let den = self.den.checked_mul(other.den).ok_or(UnitsError::ExponentOverflow)?;
        Rational::new(num, den)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Physical dimension: exact rational exponents over `(m, kg, s, K, obj)`.
///
/// The all-zero vector is the dimensionless element. The type is `Copy` and
/// immutable; it is freely shareable across threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dimension {
    exponents: [Rational; NUM_BASE],
}

impl Dimension {
    pub const DIMENSIONLESS: Dimension = Dimension::base([0, 0, 0, 0, 0]);
    pub const METER: Dimension = Dimension::base([1, 0, 0, 0, 0]);
    pub const KILOGRAM: Dimension = Dimension::base([0, 1, 0, 0, 0]);
    pub const SECOND: Dimension = Dimension::base([0, 0, 1, 0, 0]);
    pub const KELVIN: Dimension = Dimension::base([0, 0, 0, 1, 0]);
    pub const OBJECTIVE: Dimension = Dimension::base([0, 0, 0, 0, 1]);
    /// kg m / s^2
    pub const NEWTON: Dimension = Dimension::base([1, 1, -2, 0, 0]);
    /// N m
    pub const JOULE: Dimension = Dimension::base([2, 1, -2, 0, 0]);
    /// J / s
    pub const WATT: Dimension = Dimension::base([2, 1, -3, 0, 0]);

    const fn base(e: [i64; NUM_BASE]) -> Dimension {
        Dimension {
            exponents: [
                Rational::integer(e[0]),
                Rational::integer(e[1]),
                Rational::integer(e[2]),
                Rational::integer(e[3]),
                Rational::integer(e[4]),
            ],
        }
    }

    pub fn from_exponents(exponents: [Rational; NUM_BASE]) -> Dimension {
        Dimension { exponents }
    }

    pub fn from_integers(e: [i64; NUM_BASE]) -> Dimension {
        Dimension::base(e)
    }

    pub fn exponents(&self) -> &[Rational; NUM_BASE] {
        &self.exponents
    }

    pub fn is_dimensionless(&self) -> bool {
        self.exponents.iter().all(Rational::is_zero)
    }

    /// Component-wise scaling of the exponents by `r`.
    pub fn pow(self, r: Rational) -> Dimension {
        let mut out = self.exponents;
        for e in &mut out {
            *e = e.checked_mul(r).expect("dimension exponent overflow");
        }
        Dimension { exponents: out }
    }

    pub fn powi(self, n: i64) -> Dimension {
        self.pow(Rational::integer(n))
    }

    /// Multiplicative inverse, `self^-1`.
    pub fn recip(self) -> Dimension {
        self.powi(-1)
    }

    /// Square root, the half power that appears in interpolated preconditioner scalings.
    pub fn sqrt(self) -> Dimension {
        self.pow(Rational::new(1, 2).unwrap())
    }
}

impl Mul for Dimension {
    type Output = Dimension;

    fn mul(self, rhs: Dimension) -> Dimension {
        let mut out = self.exponents;
        for (e, r) in out.iter_mut().zip(rhs.exponents.iter()) {
            *e = e.checked_add(*r).expect("dimension exponent overflow");
        }
        Dimension { exponents: out }
    }
}

impl Div for Dimension {
    type Output = Dimension;

    fn div(self, rhs: Dimension) -> Dimension {
        let mut out = self.exponents;
        for (e, r) in out.iter_mut().zip(rhs.exponents.iter()) {
            *e = e.checked_sub(*r).expect("dimension exponent overflow");
        }
        Dimension { exponents: out }
    }
}

impl fmt::Display for Dimension {
    /// Canonical form: positive-exponent factors joined by `*`, then one `/f`
    /// per negative factor, so the output re-parses in a left-associative
    /// grammar without parentheses. Non-integer exponents print as `^(n/d)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut numer: Vec<String> = Vec::new();
        let mut denom: Vec<String> = Vec::new();
        for (sym, e) in BASE_SYMBOLS.iter().zip(self.exponents.iter()) {
            if e.is_zero() {
                continue;
            }
            let abs = Rational { num: e.num.abs(), den: e.den };
            let factor = if abs == Rational::ONE {
                (*sym).to_string()
            } else if abs.is_integer() {
                format!("{}^{}", sym, abs.num)
            } else {
                format!("{}^({}/{})", sym, abs.num, abs.den)
            };
            if e.num > 0 {
                numer.push(factor);
            } else {
                denom.push(factor);
            }
        }
        if numer.is_empty() {
            write!(f, "1")?;
        } else {
            write!(f, "{}", numer.join("*"))?;
        }
        for d in denom {
            write!(f, "/{}", d)?;
        }
        Ok(())
    }
}

fn symbol_dimension(sym: &str) -> Option<Dimension> {
    match sym {
        "m" => Some(Dimension::METER),
        "kg" => Some(Dimension::KILOGRAM),
        "s" => Some(Dimension::SECOND),
        "K" => Some(Dimension::KELVIN),
        "obj" => Some(Dimension::OBJECTIVE),
        "N" => Some(Dimension::NEWTON),
        "J" => Some(Dimension::JOULE),
        "W" => Some(Dimension::WATT),
        _ => None,
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { text, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn syntax(&self, message: &str) -> UnitsError {
        UnitsError::Syntax { position: self.pos, message: message.to_string() }
    }

    fn parse_integer(&mut self) -> Result<i64, UnitsError> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        let digits = self.rest().chars().take_while(|c| c.is_ascii_digit()).count();
        if digits == 0 {
            return Err(self.syntax("expected integer"));
        }
        self.pos += digits;
        self.text[start..self.pos]
            .parse::<i64>()
            .map_err(|_| UnitsError::ExponentOverflow)
    }

    fn parse_exponent(&mut self) -> Result<Rational, UnitsError> {
        self.skip_ws();
        if self.peek() == Some('(') {
            self.pos += 1;
            self.skip_ws();
            let num = self.parse_integer()?;
            self.skip_ws();
            if self.peek() != Some('/') {
                return Err(self.syntax("expected `/` in rational exponent"));
            }
            self.pos += 1;
            self.skip_ws();
            let den = self.parse_integer()?;
            self.skip_ws();
            if self.peek() != Some(')') {
                return Err(self.syntax("expected `)` closing rational exponent"));
            }
            self.pos += 1;
            Rational::new(num, den)
        } else {
            Ok(Rational::integer(self.parse_integer()?))
        }
    }

    fn parse_factor(&mut self) -> Result<Dimension, UnitsError> {
        self.skip_ws();
        if self.peek() == Some('1') {
            self.pos += 1;
            return Ok(Dimension::DIMENSIONLESS);
        }
        let start = self.pos;
        let len = self.rest().chars().take_while(|c| c.is_ascii_alphabetic()).count();
        if len == 0 {
            return Err(self.syntax("expected unit symbol"));
        }
        self.pos += len;
        let sym = &self.text[start..self.pos];
        let dim = symbol_dimension(sym).ok_or_else(|| UnitsError::UnknownSymbol {
            symbol: sym.to_string(),
            position: start,
        })?;
        self.skip_ws();
        if self.peek() == Some('^') {
            self.pos += 1;
            let e = self.parse_exponent()?;
            Ok(dim.pow(e))
        } else {
            Ok(dim)
        }
    }

    fn parse_unit(&mut self) -> Result<Dimension, UnitsError> {
        let mut acc = self.parse_factor()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    acc = acc * self.parse_factor()?;
                }
                Some('/') => {
                    self.pos += 1;
                    acc = acc / self.parse_factor()?;
                }
                None => return Ok(acc),
                Some(_) => return Err(self.syntax("expected `*`, `/`, or end of input")),
            }
        }
    }
}

impl FromStr for Dimension {
    type Err = UnitsError;

    /// Parses products/quotients/powers of `{m, kg, s, K, obj, N, J, W}`.
    /// Derived symbols expand to base exponents. `1` denotes the
    /// dimensionless factor, so `1/s` is a valid frequency dimension.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        p.skip_ws();
        if p.rest().is_empty() {
            return Err(p.syntax("empty unit expression"));
        }
        p.parse_unit()
    }
}

/// One dimension per scalar field of a (possibly product) function space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitVector(pub Vec<Dimension>);

impl UnitVector {
    pub fn single(d: Dimension) -> Self {
        UnitVector(vec![d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Field-wise quotient `numerator / self`, the rule that assigns dual
    /// space units from the Lagrangian unit.
    pub fn dual_under(&self, lagrangian: Dimension) -> UnitVector {
        UnitVector(self.0.iter().map(|d| lagrangian / *d).collect())
    }
}

impl fmt::Display for UnitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ")")
    }
}

/// A scalar magnitude together with its dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub dim: Dimension,
}

impl Quantity {
    pub fn new(value: f64, dim: Dimension) -> Self {
        Quantity { value, dim }
    }

    pub fn dimensionless(value: f64) -> Self {
        Quantity { value, dim: Dimension::DIMENSIONLESS }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dim.is_dimensionless() {
            write!(f, "{}", self.value)
        } else {
            write!(f, "{} {}", self.value, self.dim)
        }
    }
}
