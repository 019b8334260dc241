//! Reduction of modulo-counting quantifiers over tuples to unary ones with
//! constant residues.
//!
//! For `∃^{(t,p)}(y_1..y_ℓ) φ` the count of witnesses is finite iff for every
//! prefix the set of extensions by one more coordinate is finite, which is
//! expressible with unary modulo counting because a finite set always has
//! some residue. Given finiteness, the residue of the count is determined by
//! how many values of `y_1` have fibres of each residue, recursively.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::formula::{Formula, Node};
use crate::metrics::{metric_sets, qd, size};
use crate::term::Term;
use crate::var::Var;
use crate::{Error, Result};

/// Limits on the `p^{p·ℓ}` blow-up.
#[derive(Clone, Debug)]
pub struct ModcountOptions {
    /// Largest modulus accepted for tuples of arity at least two.
    pub max_modulus: u64,
    /// Largest tuple arity accepted.
    pub max_arity: usize,
    /// Largest accepted number of disjuncts `p^{p-1}` in one step, and of
    /// residue cases for a unary quantifier.
    pub max_disjuncts: u64,
}

impl Default for ModcountOptions {
    fn default() -> ModcountOptions {
        ModcountOptions { max_modulus: 5, max_arity: 3, max_disjuncts: 100_000 }
    }
}

/// Residues `(d_1, …, d_{p-1})` in `[0, p)` with `Σ d_i·i ≡ d (mod p)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ResidueTuple {
    pub entries: Vec<u64>,
}

impl ResidueTuple {
    /// `Σ d_i·i mod p`.
    pub fn weighted_sum(&self, p: u64) -> u64 {
        self.entries.iter().enumerate().fold(0, |acc, (i, d)| (acc + d * (i as u64 + 1)) % p)
    }
}

fn small_modulus(p: &BigInt, cap: u64) -> Result<u64> {
    match p.to_u64() {
        Some(v) if v >= 2 && v <= cap => Ok(v),
        Some(v) if v < 2 => Err(Error::Precondition(format!("modulus {p} must be at least 2"))),
        _ => Err(Error::Resource(format!("modulus {p} exceeds the cap {cap}"))),
    }
}

/// All residue tuples for target `d`, in lexicographic order. There are
/// exactly `p^{p-2}` of them: the first `p - 2` entries are free and fix
/// the last one.
pub fn residue_tuples(p: &BigInt, d: &BigInt) -> Result<Vec<ResidueTuple>> {
    residue_tuples_capped(p, d, ModcountOptions::default().max_disjuncts)
}

fn residue_tuples_capped(p: &BigInt, d: &BigInt, cap: u64) -> Result<Vec<ResidueTuple>> {
    let pv = small_modulus(p, u64::MAX)?;
    if outside_residues(d, p) {
        return Err(Error::Precondition(format!("residue {d} is outside [0, {p})")));
    }
    let count = pv.checked_pow((pv - 2) as u32).filter(|c| *c <= cap);
    let count = count.ok_or_else(|| Error::Resource(format!("{p}^{} residue tuples exceed the cap {cap}", pv - 2)))?;
    let dv = d.to_u64().expect("d < p");
    let free = (pv - 2) as usize;
    let mut out = Vec::with_capacity(count as usize);
    let mut prefix = vec![0u64; free];
    loop {
        let partial = prefix.iter().enumerate().fold(0, |acc, (i, x)| (acc + x * (i as u64 + 1)) % pv);
        // (p-1)·last ≡ -last, so last ≡ partial - d
        let last = (partial + pv - dv) % pv;
        let mut entries = prefix.clone();
        entries.push(last);
        out.push(ResidueTuple { entries });
        let mut k = free;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            prefix[k] += 1;
            if prefix[k] < pv {
                break;
            }
            prefix[k] = 0;
        }
    }
}

fn outside_residues(d: &BigInt, p: &BigInt) -> bool {
    *d < BigInt::zero() || d >= p
}

fn unary(q: u64, p: &BigInt, y: Var, body: Formula) -> Formula {
    Formula::mod_count(Term::constant(q), p.clone(), vec![y], body).expect("modulus checked")
}

/// `η_0`: the set of tuples `vars` satisfying `body` is finite.
pub fn finiteness_formula(vars: &[Var], p: &BigInt, body: &Formula) -> Result<Formula> {
    if vars.len() < 2 {
        return Err(Error::Precondition("finiteness formulas need at least two variables".into()));
    }
    let pv = small_modulus(p, u64::MAX)?;
    let l = vars.len();
    let some_residue = |y: Var, inner: &Formula| Formula::disj((0..pv).map(|i| unary(i, p, y, inner.clone())));
    // η_{ℓ-1}
    let mut eta = some_residue(vars[l - 1], body);
    for n in (0..l - 1).rev() {
        let rest = Formula::exists_all(&vars[n + 1..], body.clone());
        eta = Formula::and(some_residue(vars[n], &rest), Formula::forall(vars[n], eta));
    }
    Ok(eta)
}

/// `δ_n^d`: assuming finiteness, the number of completions of the first
/// `n` coordinates is `≡ d (mod p)`.
pub fn distribution_formula(n: usize, d: &BigInt, vars: &[Var], p: &BigInt, body: &Formula) -> Result<Formula> {
    distribution_with(n, d, vars, p, body, &ModcountOptions::default())
}

fn distribution_with(
    n: usize,
    d: &BigInt,
    vars: &[Var],
    p: &BigInt,
    body: &Formula,
    opts: &ModcountOptions,
) -> Result<Formula> {
    if n >= vars.len() {
        return Err(Error::Precondition(format!("level {n} is outside [0, {})", vars.len())));
    }
    let pv = small_modulus(p, u64::MAX)?;
    if outside_residues(d, p) {
        return Err(Error::Precondition(format!("residue {d} is outside [0, {p})")));
    }
    let l = vars.len();
    // level[i] = δ_m^i for the current m, shared across the disjuncts above it
    let mut level: Vec<Formula> = (0..pv).map(|i| unary(i, p, vars[l - 1], body.clone())).collect();
    let mut tuples: HashMap<u64, Vec<ResidueTuple>> = HashMap::new();
    for m in (n..l - 1).rev() {
        let mut next = Vec::with_capacity(pv as usize);
        for target in 0..pv {
            let ts = match tuples.get(&target) {
                Some(ts) => ts,
                None => {
                    let ts = residue_tuples_capped(p, &BigInt::from(target), opts.max_disjuncts)?;
                    tuples.entry(target).or_insert(ts)
                }
            };
            let y = vars[m];
            let disjuncts = ts.iter().map(|t| {
                Formula::conj(t.entries.iter().enumerate().map(|(k, di)| unary(*di, p, y, level[k + 1].clone())))
            });
            next.push(Formula::disj(disjuncts));
        }
        level = next;
    }
    Ok(level[d.to_usize().expect("d < p")].clone())
}

/// Record of one elimination.
#[derive(Clone, Debug, Serialize)]
pub struct ModcountTrace {
    pub vars: Vec<Var>,
    pub modulus: BigInt,
    pub residue: String,
    pub size_in: u64,
    pub size_out: u64,
}

fn eliminate_with(f: &Formula, opts: &ModcountOptions) -> Result<(Formula, ModcountTrace)> {
    let Node::ModCount { residue, modulus: p, vars, body } = f.node() else {
        return Err(Error::Precondition("expected a modulo-counting quantifier".into()));
    };
    if body.any_node(|n| match n {
        Node::AtLeast { .. } | Node::Exactly { .. } => true,
        Node::ModCount { vars, residue, .. } => vars.len() > 1 || !residue.is_constant(),
        _ => false,
    }) {
        return Err(Error::Precondition("the body must only contain unary constant-residue counting".into()));
    }
    let l = vars.len();
    let out = if l == 1 {
        if residue.is_constant() {
            let q = residue.constant_part().mod_floor(p);
            Formula::mod_count(Term::constant(q), p.clone(), vars.clone(), body.clone())?
        } else {
            let pv = small_modulus(p, opts.max_disjuncts)?;
            Formula::disj((0..pv).map(|r| {
                let cong = Formula::cong(Term::constant(r), p.clone(), residue.clone());
                Formula::and(cong, unary(r, p, vars[0], body.clone()))
            }))
        }
    } else {
        if l > opts.max_arity {
            return Err(Error::Resource(format!("arity {l} exceeds the cap {}", opts.max_arity)));
        }
        let pv = small_modulus(p, opts.max_modulus)?;
        if pv.checked_pow((pv - 1) as u32).is_none_or(|c| c > opts.max_disjuncts) {
            return Err(Error::Resource(format!("{pv}^{} disjuncts exceed the cap {}", pv - 1, opts.max_disjuncts)));
        }
        let eta = finiteness_formula(vars, p, body)?;
        let cases = (0..pv)
            .map(|r| {
                let delta = distribution_with(0, &BigInt::from(r), vars, p, body, opts)?;
                Ok(Formula::and(Formula::cong(Term::constant(r), p.clone(), residue.clone()), delta))
            })
            .collect::<Result<Vec<_>>>()?;
        Formula::and(eta, Formula::disj(cases))
    };
    check_containment(f, &out)?;
    let trace =
        ModcountTrace { vars: vars.clone(), modulus: p.clone(), residue: residue.to_string(), size_in: size(f), size_out: size(&out) };
    Ok((out, trace))
}

fn check_containment(input: &Formula, out: &Formula) -> Result<()> {
    let (si, so) = (metric_sets(input), metric_sets(out));
    if !(so.coeff.is_subset(&si.coeff) && so.konst.is_subset(&si.konst) && so.modulus.is_subset(&si.modulus)) {
        return Err(Error::Assertion("modulo-counting elimination enlarged a metric set".into()));
    }
    if qd(out) > qd(input) {
        return Err(Error::Assertion("modulo-counting elimination increased the quantifier depth".into()));
    }
    Ok(())
}

/// Replaces one modulo-counting node whose body only has unary
/// constant-residue counting.
pub fn eliminate_modcount_node(f: &Formula) -> Result<Formula> {
    Ok(eliminate_with(f, &ModcountOptions::default())?.0)
}

/// Eliminates tuple and term-residue modulo counting, innermost first.
pub fn eliminate_all_modcount(f: &Formula) -> Result<Formula> {
    Ok(eliminate_all_modcount_traced(f, &ModcountOptions::default())?.0)
}

/// Like [`eliminate_all_modcount`] with explicit caps, also returning one
/// trace per rewritten node.
pub fn eliminate_all_modcount_traced(f: &Formula, opts: &ModcountOptions) -> Result<(Formula, Vec<ModcountTrace>)> {
    if f.any_node(|n| matches!(n, Node::AtLeast { .. } | Node::Exactly { .. })) {
        return Err(Error::Precondition("threshold and exact counting must be eliminated first".into()));
    }
    let mut traces = Vec::new();
    let out = rewrite(f, opts, &mut traces, &mut HashMap::new())?;
    check_containment(f, &out)?;
    Ok((out, traces))
}

fn rewrite(
    f: &Formula,
    opts: &ModcountOptions,
    traces: &mut Vec<ModcountTrace>,
    memo: &mut HashMap<usize, Formula>,
) -> Result<Formula> {
    if let Some(g) = memo.get(&f.id()) {
        return Ok(g.clone());
    }
    let out = if f.children().is_empty() {
        f.clone()
    } else {
        let kids = f.children().into_iter().map(|c| rewrite(c, opts, traces, memo)).collect::<Result<Vec<_>>>()?;
        let rebuilt =
            if kids.iter().zip(f.children()).all(|(a, b)| a.id() == b.id()) { f.clone() } else { f.with_children(kids) };
        match rebuilt.node() {
            Node::ModCount { residue, modulus, vars, .. }
                if vars.len() > 1
                    || !residue.is_constant()
                    || outside_residues(residue.constant_part(), modulus) =>
            {
                let (g, t) = eliminate_with(&rebuilt, opts)?;
                traces.push(t);
                g
            }
            _ => rebuilt,
        }
    };
    memo.insert(f.id(), out.clone());
    Ok(out)
}
