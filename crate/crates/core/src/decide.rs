//! Decision strategies and witness-bound certificates.
//!
//! The default strategy compiles a closed sentence with the three passes
//! and evaluates the resulting ground formula. The bounded strategy
//! evaluates quantifiers recursively over finite search spaces that scale
//! with the values already chosen. The certified bounds themselves are
//! far too large to search for all but trivial inputs; they are computed
//! exactly where feasible and otherwise rendered by their digit count.

use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::counting::eliminate_all_counting;
use crate::formula::{Atom, Formula, Node};
use crate::metrics::metrics;
use crate::modcount::eliminate_all_modcount;
use crate::oracle::eval_qf;
use crate::qe::{qe_full_with, QeOptions};
use crate::term::Term;
use crate::{Assignment, Error, Result};

/// Default `κ`.
pub const DEFAULT_KAPPA: u32 = 8;
/// Certificates with more decimal digits are not expanded.
pub const EXACT_DIGIT_CAP: u64 = 20_000;
/// Caveat attached to every certificate that depends on `κ`.
pub const KAPPA_CAVEAT: &str = "sound only if kappa exceeds the implicit constant of the witness-bound argument";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CertKind {
    ExistsBound,
    ModCountBound,
    GlobalD,
}

/// `factor · base^(exp_base^exp_exp)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Tower {
    pub factor: BigInt,
    pub base: BigInt,
    pub exp_base: BigInt,
    pub exp_exp: BigInt,
}

impl Tower {
    /// `log10` of the exponent `exp_base^exp_exp`.
    fn log10_exponent(&self) -> f64 {
        log10_big(&self.exp_base) * self.exp_exp.to_f64().unwrap_or(f64::INFINITY)
    }

    /// `log10` of the digit count, ignoring the factor.
    fn log10_log10(&self) -> f64 {
        self.log10_exponent() + log10_big(&self.base).log10()
    }

    /// The exponent, when it has at most `max_bits` bits.
    fn exponent(&self, max_bits: u64) -> Option<BigInt> {
        let bits = self.exp_base.bits() as f64 * self.exp_exp.to_f64()?;
        if bits > max_bits as f64 {
            return None;
        }
        Some(self.exp_base.pow(self.exp_exp.to_u32()?))
    }

    /// The exact value when it has at most `cap` decimal digits.
    pub fn exact(&self, cap: u64) -> Option<BigInt> {
        if self.factor.is_zero() {
            return Some(BigInt::zero());
        }
        if self.log10_log10() > (cap as f64).log10() + 1.0 {
            return None;
        }
        let e = self.exponent(64)?.to_u32()?;
        let v = &self.factor * self.base.pow(e);
        (decimal_digits(&v) <= cap).then_some(v)
    }
}

fn log10_big(n: &BigInt) -> f64 {
    let bits = n.bits();
    if bits < 1000 {
        return n.to_f64().expect("finite").abs().log10();
    }
    let shift = bits - 64;
    let top = (n.abs() >> shift).to_f64().expect("64 bits");
    top.log10() + shift as f64 * std::f64::consts::LOG10_2
}

fn decimal_digits(n: &BigInt) -> u64 {
    n.abs().to_string().len() as u64
}

/// Decimal size of a certificate value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Digits {
    /// Counted on the exact value.
    Exact(u64),
    /// `⌊log10 value⌋ + 1` from floating-point logarithms.
    Estimated(u64),
    /// Only `log10` of the digit count is representable.
    Astronomical(f64),
}

impl fmt::Display for Digits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Digits::Exact(n) => write!(f, "{n} decimal digits"),
            Digits::Estimated(n) => write!(f, "about {n} decimal digits"),
            Digits::Astronomical(l) => write!(f, "about 10^{l:.1} decimal digits"),
        }
    }
}

/// A witness bound with its exact value where feasible.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCert {
    pub kind: CertKind,
    pub tower: Tower,
    pub exact: Option<BigInt>,
    pub digits: Digits,
    pub kappa: Option<BigInt>,
    pub caveat: Option<String>,
    /// Size of the values a recursive evaluation may touch, when relevant.
    pub recursion_digits: Option<Digits>,
}

impl BoundCert {
    fn new(kind: CertKind, tower: Tower, kappa: Option<&BigInt>) -> BoundCert {
        let exact = tower.exact(EXACT_DIGIT_CAP);
        let digits = match &exact {
            Some(v) => Digits::Exact(decimal_digits(v)),
            None => estimate_digits(&tower),
        };
        BoundCert {
            kind,
            tower,
            exact,
            digits,
            kappa: kappa.cloned(),
            caveat: kappa.map(|_| KAPPA_CAVEAT.to_string()),
            recursion_digits: None,
        }
    }

    /// `log10` of the value.
    pub fn log10(&self) -> f64 {
        let e = self.tower.log10_exponent();
        log10_big(&self.tower.factor) + 10f64.powf(e) * log10_big(&self.tower.base)
    }
}

fn estimate_digits(t: &Tower) -> Digits {
    let ll = t.log10_log10();
    if ll < 15.0 {
        let l = log10_big(&t.factor) + 10f64.powf(t.log10_exponent()) * log10_big(&t.base);
        Digits::Estimated(l.floor() as u64 + 1)
    } else {
        Digits::Astronomical(ll)
    }
}

impl fmt::Display for BoundCert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.tower;
        write!(f, "{:?}: ", self.kind)?;
        if !t.factor.is_one() {
            write!(f, "{}·", t.factor)?;
        }
        write!(f, "{}^({}^{}) ({})", t.base, t.exp_base, t.exp_exp, self.digits)?;
        if let Some(k) = &self.kappa {
            write!(f, ", kappa = {k}")?;
        }
        if let Some(r) = &self.recursion_digits {
            write!(f, ", recursion values up to {r}")?;
        }
        if let Some(c) = &self.caveat {
            write!(f, "; {c}")?;
        }
        Ok(())
    }
}

/// `A^{A^5}·B` for `A ≥ 6`, `B ≥ 0`.
pub fn exists_bound(a: &BigInt, b: &BigInt) -> Result<BoundCert> {
    if *a < BigInt::from(6) || b.is_negative() {
        return Err(Error::Precondition(format!("exists_bound needs A ≥ 6 and B ≥ 0, got A = {a}, B = {b}")));
    }
    let tower = Tower { factor: b.clone(), base: a.clone(), exp_base: a.clone(), exp_exp: 5.into() };
    Ok(BoundCert::new(CertKind::ExistsBound, tower, None))
}

/// `2^{maxP^{κ^e}}·maxConst·N·max{1,ℓ}` from explicit metrics.
fn power_bound(kind: CertKind, max_p: &BigInt, factor: BigInt, kappa: &BigInt, e: u32) -> BoundCert {
    let tower = Tower { factor, base: 2.into(), exp_base: max_p.clone(), exp_exp: kappa.pow(e) };
    BoundCert::new(kind, tower, Some(kappa))
}

/// Witness bound for `∃x` over a formula of depth `d` with parameters
/// bounded by `n`.
pub fn witness_bound_from(max_p: &BigInt, max_const: &BigInt, d: u32, n: &BigInt, l: u64, kappa: &BigInt) -> BoundCert {
    power_bound(CertKind::ExistsBound, max_p, max_const * n * l.max(1), kappa, d)
}

/// The bound `C` for `∃^{(q,p)}x`; witnesses exist in the ring
/// `C < |x| ≤ C²` only when there are infinitely many.
pub fn modcount_witness_bound_from(max_p: &BigInt, max_const: &BigInt, d: u32, n: &BigInt, l: u64, kappa: &BigInt) -> BoundCert {
    power_bound(CertKind::ModCountBound, max_p, max_const * n * l.max(1), kappa, d + 1)
}

fn check_kappa(kappa: &BigInt) -> Result<()> {
    if *kappa < BigInt::from(2) {
        return Err(Error::Precondition(format!("kappa must be at least 2, got {kappa}")));
    }
    Ok(())
}

/// [`witness_bound_from`] with the metrics of `f`; `ℓ` counts the
/// parameters besides the distinguished variable.
pub fn witness_bound(f: &Formula, n: &BigInt, l: u64, kappa: &BigInt) -> Result<BoundCert> {
    check_kappa(kappa)?;
    let m = metrics(f);
    if m.qd == 0 {
        return Err(Error::Precondition("witness bounds need quantifier depth at least 1".into()));
    }
    Ok(witness_bound_from(&m.max_p(), &m.max_const(), m.qd as u32, n, l, kappa))
}

/// [`modcount_witness_bound_from`] with the metrics of `f`.
pub fn modcount_witness_bound(f: &Formula, n: &BigInt, l: u64, kappa: &BigInt) -> Result<BoundCert> {
    check_kappa(kappa)?;
    let m = metrics(f);
    if m.qd == 0 {
        return Err(Error::Precondition("witness bounds need quantifier depth at least 1".into()));
    }
    Ok(modcount_witness_bound_from(&m.max_p(), &m.max_const(), m.qd as u32, n, l, kappa))
}

/// `D = 2^{maxP^{κ^{d+2}}}·maxConst` with the recursion bound `D^{4^d}`.
pub fn global_d_from(max_p: &BigInt, max_const: &BigInt, d: u32, kappa: &BigInt) -> BoundCert {
    let mut cert = power_bound(CertKind::GlobalD, max_p, max_const.clone(), kappa, d + 2);
    let ll = cert.tower.log10_log10() + d as f64 * 4f64.log10();
    cert.recursion_digits = Some(if ll < 15.0 {
        Digits::Estimated((cert.log10() * 4f64.powi(d as i32)).floor() as u64 + 1)
    } else {
        Digits::Astronomical(ll)
    });
    cert
}

/// [`global_d_from`] with the metrics of `f`.
pub fn global_d(f: &Formula, kappa: &BigInt) -> Result<BoundCert> {
    check_kappa(kappa)?;
    let m = metrics(f);
    Ok(global_d_from(&m.max_p(), &m.max_const(), m.qd as u32, kappa))
}

/// How to decide a closed sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Eliminate every quantifier and evaluate the ground result.
    Qe,
    /// Recursive evaluation with the given bound scaling every search.
    Bounded(u64),
    /// Recursive evaluation with the certified bound `D`.
    PaperBounded,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecideOptions {
    pub kappa: BigInt,
    pub qe: QeOptions,
    /// Cap on evaluated quantifier instances in the recursive strategies.
    pub max_steps: u64,
    /// Largest digit count of `D` the certified strategy will search.
    pub paper_digit_cap: u64,
}

impl Default for DecideOptions {
    fn default() -> DecideOptions {
        DecideOptions { kappa: DEFAULT_KAPPA.into(), qe: QeOptions::default(), max_steps: 200_000_000, paper_digit_cap: 6 }
    }
}

/// Result of a decision run.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Decided(bool),
    /// The certified search space is too large; the certificate explains.
    Infeasible(BoundCert),
}

/// Decides a closed sentence with default options.
pub fn decide(f: &Formula, strategy: &Strategy) -> Result<Outcome> {
    decide_with(f, strategy, &DecideOptions::default())
}

pub fn decide_with(f: &Formula, strategy: &Strategy, opts: &DecideOptions) -> Result<Outcome> {
    let free = f.free_vars();
    if !free.is_empty() {
        let names: Vec<String> = free.iter().map(|v| v.name()).collect();
        return Err(Error::Precondition(format!("sentence has free variables {}", names.join(", "))));
    }
    match strategy {
        Strategy::Qe => {
            let g = eliminate_all_counting(f)?;
            let g = eliminate_all_modcount(&g)?;
            let (h, _) = qe_full_with(&g, &opts.qe)?;
            Ok(Outcome::Decided(eval_qf(&h, &Assignment::new())?))
        }
        Strategy::Bounded(b) => {
            if *b == 0 {
                return Err(Error::Precondition("the search bound must be at least 1".into()));
            }
            Ok(Outcome::Decided(bounded_eval(f, *b as i128, opts.max_steps)?))
        }
        Strategy::PaperBounded => {
            check_kappa(&opts.kappa)?;
            let cert = global_d(f, &opts.kappa)?;
            match (&cert.exact, &cert.digits) {
                (Some(d), Digits::Exact(n)) if *n <= opts.paper_digit_cap => {
                    let d = d.to_i128().expect("few digits");
                    Ok(Outcome::Decided(bounded_eval(f, d, opts.max_steps)?))
                }
                _ => Ok(Outcome::Infeasible(cert)),
            }
        }
    }
}

/// Affine form `Σ a_i·v_i + c` over variable slots.
#[derive(Clone, Debug)]
struct Lin {
    terms: Vec<(usize, i128)>,
    constant: i128,
}

impl Lin {
    fn of(t: &Term) -> Result<Lin> {
        let conv = |n: &BigInt| n.to_i128().filter(|v| v.abs() < 1 << 62).ok_or_else(|| Error::Resource(format!("integer {n} is too large for bounded evaluation")));
        let terms = t.coeffs().map(|(v, a)| Ok((v.index(), conv(a)?))).collect::<Result<Vec<_>>>()?;
        Ok(Lin { terms, constant: conv(t.constant_part())? })
    }

    fn eval(&self, env: &[i128]) -> Result<i128> {
        let mut acc = self.constant;
        for &(s, a) in &self.terms {
            acc = a.checked_mul(env[s]).and_then(|p| acc.checked_add(p)).ok_or_else(overflow)?;
        }
        Ok(acc)
    }

    fn coeff(&self, slot: usize) -> i128 {
        self.terms.iter().find(|(s, _)| *s == slot).map_or(0, |(_, a)| *a)
    }
}

fn overflow() -> Error {
    Error::Resource("integer overflow in bounded evaluation".into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CountKind {
    ModCount,
    AtLeast,
    Exactly,
}

#[derive(Debug)]
enum Expr {
    /// `lin < 0`.
    Neg(Lin),
    /// `lin ≡ 0 (mod k)`.
    Div(Lin, i128),
    Not(Rc<Expr>),
    And(Rc<Expr>, Rc<Expr>),
    Or(Rc<Expr>, Rc<Expr>),
    Implies(Rc<Expr>, Rc<Expr>),
    Iff(Rc<Expr>, Rc<Expr>),
    Exists { slot: usize, body: Rc<Expr>, free: Vec<usize> },
    Count { kind: CountKind, residue: Option<Lin>, k: i128, slots: Vec<usize>, body: Rc<Expr>, free: Vec<usize> },
}

struct Compiler {
    memo: HashMap<usize, Rc<Expr>>,
    qf: HashMap<*const Expr, bool>,
}

impl Compiler {
    fn compile(&mut self, f: &Formula) -> Result<Rc<Expr>> {
        if let Some(e) = self.memo.get(&f.id()) {
            return Ok(e.clone());
        }
        let free = || f.free_vars().into_iter().map(|v| v.index()).collect::<Vec<_>>();
        let small = |n: &BigInt| n.to_i128().filter(|v| *v < 1 << 62).ok_or_else(|| Error::Resource(format!("integer {n} is too large for bounded evaluation")));
        let e = match f.node() {
            Node::Atomic(a @ Atom::Less(..)) => Expr::Neg(Lin::of(&a.difference())?),
            Node::Atomic(a @ Atom::ModEq(_, k, _)) => Expr::Div(Lin::of(&a.difference())?, small(k)?),
            Node::Not(a) => Expr::Not(self.compile(a)?),
            Node::And(a, b) => Expr::And(self.compile(a)?, self.compile(b)?),
            Node::Or(a, b) => Expr::Or(self.compile(a)?, self.compile(b)?),
            Node::Implies(a, b) => Expr::Implies(self.compile(a)?, self.compile(b)?),
            Node::Iff(a, b) => Expr::Iff(self.compile(a)?, self.compile(b)?),
            Node::Exists(x, body) => Expr::Exists { slot: x.index(), body: self.compile(body)?, free: free() },
            Node::ModCount { residue, modulus, vars, body } => Expr::Count {
                kind: CountKind::ModCount,
                residue: Some(Lin::of(residue)?),
                k: small(modulus)?,
                slots: vars.iter().map(|v| v.index()).collect(),
                body: self.compile(body)?,
                free: free(),
            },
            Node::AtLeast { threshold, vars, body } => Expr::Count {
                kind: CountKind::AtLeast,
                residue: None,
                k: small(threshold)?,
                slots: vars.iter().map(|v| v.index()).collect(),
                body: self.compile(body)?,
                free: free(),
            },
            Node::Exactly { count, vars, body } => Expr::Count {
                kind: CountKind::Exactly,
                residue: None,
                k: small(count)?,
                slots: vars.iter().map(|v| v.index()).collect(),
                body: self.compile(body)?,
                free: free(),
            },
        };
        let e = Rc::new(e);
        let qf = match &*e {
            Expr::Neg(_) | Expr::Div(..) => true,
            Expr::Not(a) => self.qf[&Rc::as_ptr(a)],
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) | Expr::Iff(a, b) => {
                self.qf[&Rc::as_ptr(a)] && self.qf[&Rc::as_ptr(b)]
            }
            _ => false,
        };
        self.qf.insert(Rc::as_ptr(&e), qf);
        self.memo.insert(f.id(), e.clone());
        Ok(e)
    }
}

/// Recursive evaluation: a quantifier whose free variables have largest
/// absolute value `m` searches `|x| ≤ R = bound·max{1, m}`; a counting
/// quantifier additionally treats any witness in the ring `R < |x| ≤ R²`
/// (maximum norm for tuples) as evidence of infinitely many witnesses.
pub fn bounded_eval(f: &Formula, bound: i128, max_steps: u64) -> Result<bool> {
    let mut c = Compiler { memo: HashMap::new(), qf: HashMap::new() };
    let e = c.compile(f)?;
    let mut ev = Bounded { bound, steps: 0, max_steps, qf: c.qf, env: vec![0; crate::var::Var::count()] };
    ev.eval(&e)
}

struct Bounded {
    bound: i128,
    steps: u64,
    max_steps: u64,
    qf: HashMap<*const Expr, bool>,
    env: Vec<i128>,
}

impl Bounded {
    fn tick(&mut self, n: u64) -> Result<()> {
        self.steps += n;
        if self.steps > self.max_steps {
            return Err(Error::Resource(format!("bounded evaluation exceeded {} steps", self.max_steps)));
        }
        Ok(())
    }

    fn is_qf(&self, e: &Rc<Expr>) -> bool {
        self.qf.get(&Rc::as_ptr(e)).copied().unwrap_or(false)
    }

    fn radius(&self, free: &[usize]) -> Result<i128> {
        let m = free.iter().map(|s| self.env[*s].abs()).max().unwrap_or(0).max(1);
        self.bound.checked_mul(m).ok_or_else(overflow)
    }

    fn eval(&mut self, e: &Rc<Expr>) -> Result<bool> {
        Ok(match &**e {
            Expr::Neg(l) => l.eval(&self.env)? < 0,
            Expr::Div(l, k) => l.eval(&self.env)?.rem_euclid(*k) == 0,
            Expr::Not(a) => !self.eval(a)?,
            Expr::And(a, b) => self.eval(a)? && self.eval(b)?,
            Expr::Or(a, b) => self.eval(a)? || self.eval(b)?,
            Expr::Implies(a, b) => !self.eval(a)? || self.eval(b)?,
            Expr::Iff(a, b) => self.eval(a)? == self.eval(b)?,
            Expr::Exists { slot, body, free } => {
                let r = self.radius(free)?;
                let saved = self.env[*slot];
                let found = self.count_range(body, *slot, -r, r, true)? > 0;
                self.env[*slot] = saved;
                found
            }
            Expr::Count { kind, residue, k, slots, body, free } => {
                let r = self.radius(free)?;
                let outer = r.checked_mul(r).ok_or_else(overflow)?;
                let q = match residue {
                    Some(l) => Some(l.eval(&self.env)?),
                    None => None,
                };
                let saved: Vec<i128> = slots.iter().map(|s| self.env[*s]).collect();
                let ring = self.count_tuples(body, slots, r, outer, true, true)? > 0;
                let count = if ring { 0 } else { self.count_tuples(body, slots, r, r, false, false)? };
                for (s, v) in slots.iter().zip(saved) {
                    self.env[*s] = v;
                }
                match kind {
                    CountKind::AtLeast => ring || count >= *k as u128,
                    CountKind::Exactly => !ring && count == *k as u128,
                    CountKind::ModCount => {
                        !ring && (count as i128).rem_euclid(*k) == q.expect("residue").rem_euclid(*k)
                    }
                }
            }
        })
    }

    /// Witnesses in the box `|ȳ|∞ ≤ outer`, excluding `|ȳ|∞ ≤ inner` when
    /// `ring` is set.
    fn count_tuples(&mut self, body: &Rc<Expr>, slots: &[usize], inner: i128, outer: i128, ring: bool, any: bool) -> Result<u128> {
        self.tuples_rec(body, slots, inner, outer, ring, any, true)
    }

    #[allow(clippy::too_many_arguments)]
    fn tuples_rec(&mut self, body: &Rc<Expr>, slots: &[usize], inner: i128, outer: i128, ring: bool, any: bool, inside: bool) -> Result<u128> {
        let (s, rest) = slots.split_first().expect("nonempty tuple");
        if rest.is_empty() {
            if ring && inside {
                let hi = self.count_range(body, *s, inner + 1, outer, any)?;
                if any && hi > 0 {
                    return Ok(hi);
                }
                return Ok(hi + self.count_range(body, *s, -outer, -inner - 1, any)?);
            }
            return self.count_range(body, *s, -outer, outer, any);
        }
        let mut total = 0u128;
        for v in -outer..=outer {
            self.tick(1)?;
            self.env[*s] = v;
            let still_inside = inside && v.abs() <= inner;
            total += self.tuples_rec(body, rest, inner, outer, ring, any, still_inside)?;
            if any && total > 0 {
                break;
            }
        }
        Ok(total)
    }

    /// Number of `v ∈ [lo, hi]` with `body[slot := v]`; stops at the first
    /// witness when `any` is set.
    fn count_range(&mut self, body: &Rc<Expr>, slot: usize, lo: i128, hi: i128, any: bool) -> Result<u128> {
        if lo > hi {
            return Ok(0);
        }
        if self.is_qf(body) {
            return self.count_qf(body, slot, lo, hi, any);
        }
        let mut found = 0u128;
        for v in by_magnitude(lo, hi) {
            self.tick(1)?;
            self.env[slot] = v;
            if self.eval(body)? {
                found += 1;
                if any {
                    break;
                }
            }
        }
        Ok(found)
    }

    /// Counting over a quantifier-free body: between consecutive points
    /// where an order atom may change its value the body is periodic in
    /// the lcm of the moduli mentioning the variable.
    fn count_qf(&mut self, body: &Rc<Expr>, slot: usize, lo: i128, hi: i128, any: bool) -> Result<u128> {
        let mut cuts = vec![lo, hi + 1];
        let mut period: i128 = 1;
        self.env[slot] = 0;
        let mut atoms = Vec::new();
        collect_atoms(body, &mut atoms, &mut std::collections::HashSet::new());
        for a in atoms {
            match &*a {
                Expr::Neg(l) => {
                    let c = l.coeff(slot);
                    if c != 0 {
                        let rest = l.eval(&self.env)?;
                        let p = Integer::div_floor(&-rest, &c);
                        for q in [p, p + 1] {
                            if q > lo && q <= hi {
                                cuts.push(q);
                            }
                        }
                    }
                }
                Expr::Div(l, k) => {
                    if l.coeff(slot) != 0 {
                        period = period.lcm(k);
                        if period > 1 << 20 {
                            return Err(Error::Resource(format!("period {period} too large for bounded evaluation")));
                        }
                    }
                }
                _ => {}
            }
        }
        cuts.sort_unstable();
        cuts.dedup();
        let mut total = 0u128;
        for w in cuts.windows(2) {
            let (s, e) = (w[0], w[1] - 1);
            let len = e - s + 1;
            if len <= 2 * period {
                for v in s..=e {
                    self.tick(1)?;
                    self.env[slot] = v;
                    if self.eval(body)? {
                        total += 1;
                        if any {
                            return Ok(total);
                        }
                    }
                }
            } else {
                let mut pattern = Vec::with_capacity(period as usize);
                for v in s..s + period {
                    self.tick(1)?;
                    self.env[slot] = v;
                    pattern.push(self.eval(body)?);
                }
                let per = pattern.iter().filter(|b| **b).count() as u128;
                if any && per > 0 {
                    return Ok(per);
                }
                let full = (len / period) as u128;
                let rem = (len % period) as usize;
                total += full * per + pattern[..rem].iter().filter(|b| **b).count() as u128;
            }
        }
        Ok(total)
    }
}

/// `[lo, hi]` ordered by absolute value, negative first on ties.
fn by_magnitude(lo: i128, hi: i128) -> Box<dyn Iterator<Item = i128>> {
    if lo >= 0 {
        Box::new(lo..=hi)
    } else if hi <= 0 {
        Box::new((lo..=hi).rev())
    } else {
        let m = (-lo).max(hi);
        Box::new(std::iter::once(0).chain((1..=m).flat_map(|i| [-i, i])).filter(move |v| *v >= lo && *v <= hi))
    }
}

fn collect_atoms(e: &Rc<Expr>, out: &mut Vec<Rc<Expr>>, seen: &mut std::collections::HashSet<*const Expr>) {
    if !seen.insert(Rc::as_ptr(e)) {
        return;
    }
    match &**e {
        Expr::Neg(_) | Expr::Div(..) => out.push(e.clone()),
        Expr::Not(a) => collect_atoms(a, out, seen),
        Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) | Expr::Iff(a, b) => {
            collect_atoms(a, out, seen);
            collect_atoms(b, out, seen);
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse;

    fn big(n: i64) -> BigInt {
        BigInt::from(n)
    }

    #[test]
    fn exists_bound_values() {
        let c = exists_bound(&big(6), &big(1)).unwrap();
        assert_eq!(c.exact, Some(big(6).pow(7776)));
        assert_eq!(c.digits, Digits::Exact(6051));
        assert_eq!(exists_bound(&big(6), &big(0)).unwrap().exact, Some(BigInt::zero()));
        assert_eq!(exists_bound(&big(7), &big(2)).unwrap().exact, Some(big(2) * big(7).pow(16807)));
        assert!(exists_bound(&big(5), &big(1)).is_err());
    }

    #[test]
    fn witness_bound_values() {
        let c = witness_bound_from(&big(2), &big(2), 1, &big(1), 0, &big(2));
        assert_eq!(c.exact, Some(big(32)));
        let c = witness_bound_from(&big(2), &big(1), 2, &big(1), 1, &big(2));
        assert_eq!(c.exact, Some(big(1 << 16)));
        let c = modcount_witness_bound_from(&big(2), &big(2), 1, &big(1), 0, &big(2));
        assert_eq!(c.exact, Some(big(2) * big(2).pow(16)));
        assert!(c.caveat.is_some());
    }

    #[test]
    fn global_d_values() {
        let c = global_d_from(&big(2), &big(2), 1, &big(2));
        assert_eq!(c.exact, Some(big(2).pow(257)));
        assert_eq!(c.digits.to_string(), "78 decimal digits");
        let c = global_d_from(&big(2), &big(1), 0, &big(3));
        assert_eq!(c.exact, Some(big(2).pow(512)));
        let huge = global_d_from(&big(16), &big(56), 3, &big(8));
        assert!(matches!(huge.digits, Digits::Astronomical(_)));
    }

    #[test]
    fn decide_examples() {
        for strategy in [Strategy::Qe, Strategy::Bounded(64)] {
            let f = parse("E[0 % 2] (x) : 0 < x && x < 5").unwrap();
            assert_eq!(decide(&f, &strategy).unwrap(), Outcome::Decided(true));
            let f = parse("E x : x < 0 && 0 < x").unwrap();
            assert_eq!(decide(&f, &strategy).unwrap(), Outcome::Decided(false));
        }
        let f = parse("E=2 (y) : 0 < y && y < 3").unwrap();
        assert_eq!(decide(&f, &Strategy::Bounded(64)).unwrap(), Outcome::Decided(true));
    }

    #[test]
    fn paper_strategy_reports_certificate() {
        let f = parse("E x : 0 < x").unwrap();
        match decide(&f, &Strategy::PaperBounded).unwrap() {
            Outcome::Infeasible(c) => assert_eq!(c.kind, CertKind::GlobalD),
            other => panic!("expected a certificate, got {other:?}"),
        }
    }

    #[test]
    fn bounded_ring_detects_infinite_sets() {
        let f = parse("E[0 % 2] (x) : 0 < x").unwrap();
        assert_eq!(decide(&f, &Strategy::Bounded(8)).unwrap(), Outcome::Decided(false));
        let f = parse("E>=100 (x) : x == 0 (mod 7)").unwrap();
        assert_eq!(decide(&f, &Strategy::Bounded(8)).unwrap(), Outcome::Decided(true));
        let f = parse("E[1 % 3] (x, y) : 0 < x && x < 3 && 0 < y && y < 3 && !(x = y)").unwrap();
        assert_eq!(decide(&f, &Strategy::Bounded(8)).unwrap(), Outcome::Decided(false));
    }

    #[test]
    fn qf_counting_matches_enumeration() {
        let f = parse("E[1 % 3] (x) : 2 < 3*x && x < 40 && !(x == 2 (mod 5)) || x == 0 (mod 4) && x < 9 && -9 < x").unwrap();
        let brute = (-100i64..=100)
            .filter(|&x| (2 < 3 * x && x < 40 && (x - 2).rem_euclid(5) != 0) || (x.rem_euclid(4) == 0 && x < 9 && -9 < x))
            .count();
        assert_eq!(decide(&f, &Strategy::Bounded(64)).unwrap(), Outcome::Decided(brute % 3 == 1));
    }

    #[test]
    fn open_formulas_are_rejected() {
        let f = parse("E x : x < y").unwrap();
        assert!(decide(&f, &Strategy::Qe).is_err());
    }
}
