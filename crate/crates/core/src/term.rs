//! Linear terms in normal form.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::var::Var;
use crate::{Assignment, Error, Result};

/// A linear term `a_1 x_1 + ... + a_n x_n + c` in normal form.
///
/// Invariant: no stored coefficient is zero; keys are ordered by variable
/// index. Structural equality therefore coincides with semantic equality.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Term {
    coeffs: BTreeMap<Var, BigInt>,
    constant: BigInt,
}

impl Term {
    /// The zero term.
    pub fn zero() -> Term {
        Term::default()
    }

    /// A constant term.
    pub fn constant(c: impl Into<BigInt>) -> Term {
        Term { coeffs: BTreeMap::new(), constant: c.into() }
    }

    /// The term `1*v`.
    pub fn var(v: Var) -> Term {
        Term::monomial(BigInt::one(), v)
    }

    /// The term `a*v`.
    pub fn monomial(a: impl Into<BigInt>, v: Var) -> Term {
        let a = a.into();
        let mut coeffs = BTreeMap::new();
        if !a.is_zero() {
            coeffs.insert(v, a);
        }
        Term { coeffs, constant: BigInt::zero() }
    }

    /// Builds a term from `(variable, coefficient)` pairs and a constant,
    /// collecting repeated variables and dropping zeros.
    pub fn from_parts<I>(parts: I, constant: impl Into<BigInt>) -> Term
    where
        I: IntoIterator<Item = (Var, BigInt)>,
    {
        let mut t = Term::constant(constant);
        for (v, a) in parts {
            t.add_monomial(v, a);
        }
        t
    }

    fn add_monomial(&mut self, v: Var, a: BigInt) {
        if a.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(v).or_insert_with(BigInt::zero);
        *entry += a;
        if entry.is_zero() {
            self.coeffs.remove(&v);
        }
    }

    /// Coefficient of `v` (zero when absent).
    pub fn coeff(&self, v: Var) -> BigInt {
        self.coeffs.get(&v).cloned().unwrap_or_else(BigInt::zero)
    }

    /// The constant part.
    pub fn constant_part(&self) -> &BigInt {
        &self.constant
    }

    /// Nonzero coefficients in canonical variable order.
    pub fn coeffs(&self) -> impl Iterator<Item = (Var, &BigInt)> {
        self.coeffs.iter().map(|(v, a)| (*v, a))
    }

    /// Variables with nonzero coefficient.
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.coeffs.keys().copied()
    }

    /// Whether `v` occurs with nonzero coefficient.
    pub fn mentions(&self, v: Var) -> bool {
        self.coeffs.contains_key(&v)
    }

    /// Whether the term has no variables.
    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// The term with the `v` summand removed.
    pub fn without(&self, v: Var) -> Term {
        let mut t = self.clone();
        t.coeffs.remove(&v);
        t
    }

    /// The term without its constant.
    pub fn linear_part(&self) -> Term {
        Term { coeffs: self.coeffs.clone(), constant: BigInt::zero() }
    }

    /// Multiplies by an integer.
    pub fn scale(&self, k: &BigInt) -> Term {
        if k.is_zero() {
            return Term::zero();
        }
        Term {
            coeffs: self.coeffs.iter().map(|(v, a)| (*v, a * k)).collect(),
            constant: &self.constant * k,
        }
    }

    /// Adds an integer constant.
    pub fn plus_const(&self, c: &BigInt) -> Term {
        let mut t = self.clone();
        t.constant += c;
        t
    }

    /// Replaces `v` by the term `by`.
    pub fn substitute(&self, v: Var, by: &Term) -> Term {
        match self.coeffs.get(&v) {
            None => self.clone(),
            Some(a) => &self.without(v) + &by.scale(a),
        }
    }

    /// Value under an assignment.
    pub fn eval(&self, a: &Assignment) -> Result<BigInt> {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            let val = a.get(*v).ok_or(Error::Unbound(*v))?;
            acc += c * val;
        }
        Ok(acc)
    }

    /// Largest absolute coefficient, or zero.
    pub fn max_abs_coeff(&self) -> BigInt {
        self.coeffs.values().map(|a| a.abs()).max().unwrap_or_else(BigInt::zero)
    }
}

impl Add for &Term {
    type Output = Term;
    fn add(self, rhs: &Term) -> Term {
        let mut t = self.clone();
        for (v, a) in &rhs.coeffs {
            t.add_monomial(*v, a.clone());
        }
        t.constant += &rhs.constant;
        t
    }
}

impl Sub for &Term {
    type Output = Term;
    fn sub(self, rhs: &Term) -> Term {
        self + &(-rhs)
    }
}

impl Neg for &Term {
    type Output = Term;
    fn neg(self) -> Term {
        Term {
            coeffs: self.coeffs.iter().map(|(v, a)| (*v, -a)).collect(),
            constant: -&self.constant,
        }
    }
}

impl Mul<&BigInt> for &Term {
    type Output = Term;
    fn mul(self, k: &BigInt) -> Term {
        self.scale(k)
    }
}

impl fmt::Display for Term {
    /// Canonical surface form: `a*v` summands in variable order, then the
    /// constant; `0` for the zero term.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, a) in &self.coeffs {
            if first {
                write!(f, "{a}*{v}")?;
                first = false;
            } else if a.is_negative() {
                write!(f, " - {}*{v}", -a)?;
            } else {
                write!(f, " + {a}*{v}")?;
            }
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant.is_negative() {
            write!(f, " - {}", -&self.constant)
        } else if self.constant.is_positive() {
            write!(f, " + {}", self.constant)
        } else {
            Ok(())
        }
    }
}

/// A term expression before normalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RawTerm {
    Var(Var),
    Const(BigInt),
    Scale(BigInt, Box<RawTerm>),
    Add(Box<RawTerm>, Box<RawTerm>),
    Sub(Box<RawTerm>, Box<RawTerm>),
    Neg(Box<RawTerm>),
}

/// Normal form of a raw term expression.
pub fn normalize_term(raw: &RawTerm) -> Term {
    match raw {
        RawTerm::Var(v) => Term::var(*v),
        RawTerm::Const(c) => Term::constant(c.clone()),
        RawTerm::Scale(k, t) => normalize_term(t).scale(k),
        RawTerm::Add(a, b) => &normalize_term(a) + &normalize_term(b),
        RawTerm::Sub(a, b) => &normalize_term(a) - &normalize_term(b),
        RawTerm::Neg(t) => -&normalize_term(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: &str) -> Var {
        Var::named(n)
    }

    #[test]
    fn collects_coefficients() {
        let x = v("x");
        let raw = RawTerm::Sub(
            Box::new(RawTerm::Add(
                Box::new(RawTerm::Scale(3.into(), Box::new(RawTerm::Var(x)))),
                Box::new(RawTerm::Scale(2.into(), Box::new(RawTerm::Var(x)))),
            )),
            Box::new(RawTerm::Const(1.into())),
        );
        let t = normalize_term(&raw);
        assert_eq!(t, Term::from_parts([(x, BigInt::from(5))], -1));
    }

    #[test]
    fn cancellation_gives_zero() {
        let x = v("x");
        let raw = RawTerm::Sub(Box::new(RawTerm::Var(x)), Box::new(RawTerm::Var(x)));
        assert_eq!(normalize_term(&raw), Term::zero());
    }

    #[test]
    fn example_difference() {
        let (x, y) = (v("x"), v("y"));
        let lhs = Term::from_parts([(x, BigInt::from(-13))], 2);
        let rhs = Term::from_parts([(x, BigInt::from(3)), (y, BigInt::from(1))], -2);
        let d = &lhs - &rhs;
        assert_eq!(d, Term::from_parts([(x, BigInt::from(-16)), (y, BigInt::from(-1))], 4));
    }

    #[test]
    fn display_is_canonical() {
        let (x, y) = (v("tdx"), v("tdy"));
        assert_eq!(Term::var(x).plus_const(&BigInt::from(-1)).to_string(), "1*tdx - 1");
        let t = Term::from_parts([(x, BigInt::from(-2)), (y, BigInt::from(-3))], 4);
        assert_eq!(t.to_string(), "-2*tdx - 3*tdy + 4");
        assert_eq!(Term::zero().to_string(), "0");
        assert_eq!(Term::constant(-7).to_string(), "-7");
    }
}
