//! Elimination of threshold and exact counting quantifiers.
//!
//! `∃^{≥c}ȳ φ` and `∃^{=c}ȳ φ` are rewritten into formulas that only use
//! `∃`, Boolean connectives and the body `φ`, by splitting a lexicographic
//! interval of `ℤ^ℓ` in half once per bit of `c`. Both halves are checked
//! by a single universally quantified copy of the recursive formula, so the
//! output grows by `O(ℓ·log c)` and `φ` occurs once.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::formula::{Formula, Node};
use crate::metrics::{block_depth, metric_sets, size};
use crate::term::Term;
use crate::var::{FreshVars, Var};
use crate::{Error, Result};

/// Measured growth constant: every single elimination satisfies
/// `size(out) - size(in) ≤ SIZE_LAW_K · ℓ · log₂(max(c, 2))`.
pub const SIZE_LAW_K: u64 = 344;

fn check_arity(ys: &[Var], zs: &[Var]) -> Result<()> {
    if ys.is_empty() || ys.len() != zs.len() {
        return Err(Error::Precondition(format!("tuples of arity {} and {} cannot be compared", ys.len(), zs.len())));
    }
    Ok(())
}

fn lex_less_unchecked(ys: &[Var], zs: &[Var]) -> Formula {
    let head = Formula::less(Term::var(ys[0]), Term::var(zs[0]));
    if ys.len() == 1 {
        return head;
    }
    let tie = Formula::equal(Term::var(ys[0]), Term::var(zs[0]));
    Formula::or(head, Formula::and(tie, lex_less_unchecked(&ys[1..], &zs[1..])))
}

/// `ȳ <_lex z̄`.
pub fn lex_less(ys: &[Var], zs: &[Var]) -> Result<Formula> {
    check_arity(ys, zs)?;
    Ok(lex_less_unchecked(ys, zs))
}

/// `ȳ ≤_lex z̄`, written `¬(z̄ <_lex ȳ)`.
pub fn lex_le(ys: &[Var], zs: &[Var]) -> Result<Formula> {
    check_arity(ys, zs)?;
    Ok(Formula::not(lex_less_unchecked(zs, ys)))
}

/// Componentwise equality.
pub fn lex_eq(ys: &[Var], zs: &[Var]) -> Result<Formula> {
    check_arity(ys, zs)?;
    Ok(Formula::conj(ys.iter().zip(zs).map(|(y, z)| Formula::equal(Term::var(*y), Term::var(*z)))))
}

/// `ȳ` is the immediate lexicographic predecessor of `z̄`; the tuple
/// `between` is bound inside.
pub fn lex_successor_with(ys: &[Var], zs: &[Var], between: &[Var]) -> Result<Formula> {
    check_arity(ys, zs)?;
    check_arity(ys, between)?;
    let gap = Formula::and(lex_less_unchecked(ys, between), lex_less_unchecked(between, zs));
    Ok(Formula::and(lex_less_unchecked(ys, zs), Formula::not(Formula::exists_all(between, gap))))
}

/// `ȳ` is the immediate lexicographic predecessor of `z̄`.
pub fn lex_successor(ys: &[Var], zs: &[Var]) -> Result<Formula> {
    check_arity(ys, zs)?;
    let mut fresh = FreshVars::avoiding(ys.iter().chain(zs).copied());
    let between = fresh.tuple(ys.len());
    lex_successor_with(ys, zs, &between)
}

/// Tuples used by the interval-splitting recursion.
///
/// All tuples have the arity of `x`, are pairwise disjoint, and apart from
/// `x` (the tuple bound by the counting quantifier) are disjoint from the
/// body's variables.
#[derive(Clone, Debug)]
pub struct LexContext {
    pub x: Vec<Var>,
    pub z_left: Vec<Var>,
    pub z_middle: Vec<Var>,
    pub z_right: Vec<Var>,
    pub z1: Vec<Var>,
    pub z2: Vec<Var>,
    pub z3: Vec<Var>,
    fresh: FreshVars,
    allocated: Vec<Vec<Var>>,
}

impl LexContext {
    /// Context for the bound tuple `x` with fresh names drawn from `fresh`.
    pub fn new(x: Vec<Var>, fresh: &mut FreshVars) -> LexContext {
        let l = x.len();
        let mut take = || fresh.tuple(l);
        let (z_left, z_middle, z_right, z1, z2, z3) = (take(), take(), take(), take(), take(), take());
        let allocated = vec![z_left.clone(), z_middle.clone(), z_right.clone(), z1.clone(), z2.clone(), z3.clone()];
        LexContext { x, z_left, z_middle, z_right, z1, z2, z3, fresh: fresh.clone(), allocated }
    }

    pub fn arity(&self) -> usize {
        self.x.len()
    }

    fn tuple(&mut self) -> Vec<Var> {
        let t = self.fresh.tuple(self.arity());
        self.allocated.push(t.clone());
        t
    }

    /// Every fresh tuple allocated so far.
    pub fn fresh_tuples(&self) -> &[Vec<Var>] {
        &self.allocated
    }

    /// The allocator state after the recursion.
    pub fn into_fresh(self) -> FreshVars {
        self.fresh
    }
}

fn member(x: &[Var], set: &[Vec<Var>]) -> Formula {
    Formula::disj(set.iter().map(|v| lex_eq(x, v).expect("tuples share the context arity")))
}

fn pair_is(l: &[Var], r: &[Var], a: &[Var], b: &[Var]) -> Formula {
    Formula::and(lex_eq(l, a).expect("same arity"), lex_eq(r, b).expect("same arity"))
}

/// `ψ_{n,V}`: the interval `[z_left, z_right)` together with the tuples of
/// `V` contains exactly `n` witnesses of `body` outside `V` plus those in
/// `V`, and every tuple of `V` is a witness.
pub fn build_psi(n: &BigInt, ctx: &mut LexContext, v: &[Vec<Var>], body: &Formula) -> Formula {
    let x = ctx.x.clone();
    let (zl, zr) = (ctx.z_left.clone(), ctx.z_right.clone());
    let in_interval = |lo: &[Var], hi: &[Var]| Formula::and(lex_le(lo, &x).expect("same arity"), lex_less_unchecked(&x, hi));
    if n.is_zero() {
        let guard = Formula::or(in_interval(&zl, &zr), member(&x, v));
        return Formula::forall_all(&x, Formula::implies(guard, Formula::iff(body.clone(), member(&x, v))));
    }
    if n.is_one() {
        let zm = ctx.z_middle.clone();
        let placed = Formula::and(lex_le(&zl, &zm).expect("same arity"), lex_less_unchecked(&zm, &zr));
        let mut with_m = v.to_vec();
        with_m.push(zm.clone());
        let guard = Formula::or(in_interval(&zl, &zr), member(&x, v));
        let each = Formula::forall_all(&x, Formula::implies(guard, Formula::iff(body.clone(), member(&x, &with_m))));
        return Formula::exists_all(&zm, Formula::and(placed, each));
    }
    let (z1, z2, z3) = (ctx.z1.clone(), ctx.z2.clone(), ctx.z3.clone());
    let (half, odd) = n.div_rem(&BigInt::from(2));
    let ends = Formula::and(lex_eq(&zl, &z1).expect("same arity"), lex_eq(&z3, &zr).expect("same arity"));
    let zipped = |a: &[Var], b: &[Var]| a.iter().chain(b).copied().collect::<Vec<Var>>();
    if odd.is_zero() {
        let order = Formula::and(lex_less_unchecked(&z1, &z2), lex_less_unchecked(&z2, &z3));
        let halves = Formula::or(pair_is(&zl, &zr, &z1, &z2), pair_is(&zl, &zr, &z2, &z3));
        let inner = build_psi(&half, ctx, v, body);
        let shared = Formula::forall_all(&zipped(&zl, &zr), Formula::implies(halves, inner));
        let all: Vec<Var> = [z1.clone(), z2.clone(), z3.clone()].concat();
        Formula::exists_all(&all, Formula::conj([ends, order, shared]))
    } else {
        let z2p = ctx.tuple();
        let between = ctx.tuple();
        let order = Formula::conj([
            lex_less_unchecked(&z1, &z2p),
            lex_less_unchecked(&z2p, &z2),
            lex_less_unchecked(&z2, &z3),
        ]);
        let succ = lex_successor_with(&z2p, &z2, &between).expect("same arity");
        let halves = Formula::or(pair_is(&zl, &zr, &z1, &z2p), pair_is(&zl, &zr, &z2, &z3));
        let mut with_mid = v.to_vec();
        with_mid.push(z2p.clone());
        let inner = build_psi(&half, ctx, &with_mid, body);
        let shared = Formula::forall_all(&zipped(&zl, &zr), Formula::implies(halves, inner));
        let all: Vec<Var> = [z1.clone(), z2p.clone(), z2.clone(), z3.clone()].concat();
        Formula::exists_all(&all, Formula::conj([ends, order, succ, shared]))
    }
}

/// Which counting quantifier an elimination removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CountingKind {
    AtLeast,
    Exactly,
}

/// Record of one elimination.
#[derive(Clone, Debug, Serialize)]
pub struct CountingTrace {
    pub kind: CountingKind,
    pub count: BigInt,
    /// The tuple bound by the eliminated quantifier.
    pub vars: Vec<Var>,
    /// Every fresh tuple bound in the replacement.
    pub fresh: Vec<Vec<Var>>,
    pub size_in: u64,
    pub size_out: u64,
}

/// `K · ℓ · log₂(max(c, 2))`, rounded up.
pub fn size_allowance(arity: usize, c: &BigInt) -> u64 {
    let c = c.max(&BigInt::from(2)).clone();
    let log = c.to_f64().map_or(c.bits() as f64, f64::log2);
    (SIZE_LAW_K as f64 * arity as f64 * log).ceil() as u64
}

/// Upper bound on the block depth of one elimination whose body has block
/// depth `body_bd`.
pub fn block_depth_allowance(c: &BigInt, body_bd: u64) -> u64 {
    let floor_log = c.bits().saturating_sub(1);
    body_bd + 2 * floor_log + 4
}

fn eliminate_with(f: &Formula, fresh: &mut FreshVars) -> Result<(Formula, CountingTrace)> {
    let (kind, c, vars, body) = match f.node() {
        Node::AtLeast { threshold, vars, body } => (CountingKind::AtLeast, threshold, vars, body),
        Node::Exactly { count, vars, body } => (CountingKind::Exactly, count, vars, body),
        _ => return Err(Error::Precondition("expected a threshold or exact counting quantifier".into())),
    };
    if body.any_node(|n| matches!(n, Node::AtLeast { .. } | Node::Exactly { .. })) {
        return Err(Error::Precondition("the body of an eliminated counting quantifier must be free of them".into()));
    }
    if !c.is_positive() {
        return Err(Error::Precondition(format!("count {c} must be at least 1")));
    }
    let mut ctx = LexContext::new(vars.clone(), fresh);
    let (zl, zr) = (ctx.z_left.clone(), ctx.z_right.clone());
    let out = match kind {
        CountingKind::AtLeast => {
            let psi = build_psi(c, &mut ctx, &[], body);
            let both: Vec<Var> = [zl.clone(), zr.clone()].concat();
            Formula::exists_all(&both, Formula::and(lex_less_unchecked(&zl, &zr), psi))
        }
        CountingKind::Exactly => {
            let (a, b) = (ctx.tuple(), ctx.tuple());
            let psi = build_psi(c, &mut ctx, &[], body);
            let wider = Formula::and(lex_le(&zl, &a)?, lex_le(&b, &zr)?);
            let both: Vec<Var> = [zl.clone(), zr.clone()].concat();
            let ends: Vec<Var> = [a, b].concat();
            Formula::exists_all(&ends, Formula::forall_all(&both, Formula::implies(wider, psi)))
        }
    };
    let trace = CountingTrace {
        kind,
        count: c.clone(),
        vars: vars.clone(),
        fresh: ctx.fresh_tuples().to_vec(),
        size_in: size(f),
        size_out: size(&out),
    };
    *fresh = ctx.into_fresh();
    check_node(f, body, &out, &trace)?;
    Ok((out, trace))
}

fn check_node(input: &Formula, body: &Formula, out: &Formula, trace: &CountingTrace) -> Result<()> {
    let (si, so) = (metric_sets(input), metric_sets(out));
    if !(so.coeff.is_subset(&si.coeff) && so.konst.is_subset(&si.konst) && so.modulus.is_subset(&si.modulus)) {
        return Err(Error::Assertion("counting elimination enlarged a metric set".into()));
    }
    let grown = trace.size_out.saturating_sub(trace.size_in);
    let allowed = size_allowance(trace.vars.len(), &trace.count);
    if grown > allowed {
        return Err(Error::Assertion(format!("counting elimination grew by {grown} > {allowed}")));
    }
    if let Ok(bd) = block_depth(body) {
        let got = block_depth(out)?;
        let allowed = block_depth_allowance(&trace.count, bd);
        if got > allowed {
            return Err(Error::Assertion(format!("block depth {got} exceeds {allowed}")));
        }
    }
    Ok(())
}

/// Replaces one `∃^{≥c}` or `∃^{=c}` node whose body has no such node.
pub fn eliminate_counting_node(f: &Formula) -> Result<Formula> {
    let mut fresh = FreshVars::avoiding(f.all_vars());
    Ok(eliminate_with(f, &mut fresh)?.0)
}

/// Eliminates every threshold and exact counting quantifier, innermost first.
pub fn eliminate_all_counting(f: &Formula) -> Result<Formula> {
    Ok(eliminate_all_counting_traced(f)?.0)
}

/// Like [`eliminate_all_counting`], also returning one trace per eliminated
/// node in elimination order.
pub fn eliminate_all_counting_traced(f: &Formula) -> Result<(Formula, Vec<CountingTrace>)> {
    let mut fresh = FreshVars::avoiding(f.all_vars());
    let mut traces = Vec::new();
    let out = rewrite(f, &mut fresh, &mut traces, &mut HashMap::new())?;
    let (si, so) = (metric_sets(f), metric_sets(&out));
    if !(so.coeff.is_subset(&si.coeff) && so.konst.is_subset(&si.konst) && so.modulus.is_subset(&si.modulus)) {
        return Err(Error::Assertion("counting elimination enlarged a metric set".into()));
    }
    Ok((out, traces))
}

fn rewrite(
    f: &Formula,
    fresh: &mut FreshVars,
    traces: &mut Vec<CountingTrace>,
    memo: &mut HashMap<usize, Formula>,
) -> Result<Formula> {
    if let Some(g) = memo.get(&f.id()) {
        return Ok(g.clone());
    }
    let out = if f.children().is_empty() {
        f.clone()
    } else {
        let kids = f.children().into_iter().map(|c| rewrite(c, fresh, traces, memo)).collect::<Result<Vec<_>>>()?;
        let rebuilt = if kids.iter().zip(f.children()).all(|(a, b)| a.id() == b.id()) { f.clone() } else { f.with_children(kids) };
        if matches!(rebuilt.node(), Node::AtLeast { .. } | Node::Exactly { .. }) {
            let (g, t) = eliminate_with(&rebuilt, fresh)?;
            traces.push(t);
            g
        } else {
            rebuilt
        }
    };
    memo.insert(f.id(), out.clone());
    Ok(out)
}

/// Per-coordinate constant bounds `[lo, hi]` on the witnesses of `body`,
/// read off its top-level conjunction of atoms and negated atoms, when
/// every coordinate of `vars` is bounded on both sides.
pub fn witness_box(body: &Formula, vars: &[Var]) -> Option<Vec<(i64, i64)>> {
    let mut lo: Vec<Option<BigInt>> = vec![None; vars.len()];
    let mut hi: Vec<Option<BigInt>> = vec![None; vars.len()];
    let mut stack = vec![(body.clone(), true)];
    while let Some((f, positive)) = stack.pop() {
        match (f.node(), positive) {
            (Node::And(a, b), true) | (Node::Or(a, b), false) => {
                stack.push((a.clone(), positive));
                stack.push((b.clone(), positive));
            }
            (Node::Not(a), _) => stack.push((a.clone(), !positive)),
            (Node::Atomic(atom @ crate::Atom::Less(..)), _) => {
                let d = -&atom.difference();
                let mut it = d.coeffs();
                let (Some((v, a)), None) = (it.next(), it.next()) else { continue };
                let Some(i) = vars.iter().position(|y| *y == v) else { continue };
                // positive: a*v + c > 0, negated: a*v + c ≤ 0
                let c = d.constant_part();
                let (is_lower, bound) = match (a.is_positive(), positive) {
                    (true, true) => (true, Integer::div_floor(&-c, a) + 1),
                    (false, true) => (false, Integer::div_floor(&(c - 1), &-a)),
                    (true, false) => (false, Integer::div_floor(&-c, a)),
                    (false, false) => (true, Integer::div_ceil(c, &-a)),
                };
                let slot = if is_lower { &mut lo[i] } else { &mut hi[i] };
                *slot = Some(match slot.take() {
                    Some(old) if is_lower => old.max(bound),
                    Some(old) => old.min(bound),
                    None => bound,
                });
            }
            _ => {}
        }
    }
    lo.into_iter()
        .zip(hi)
        .map(|(l, h)| Some((l?.to_i64()?, h?.to_i64()?)))
        .collect::<Option<Vec<_>>>()
        .filter(|b| b.iter().all(|(l, h)| l <= h && *h < i64::MAX))
}

/// Finite domains under which the output of one elimination has the same
/// truth value as over `ℤ`: the bound tuple and every fresh tuple range
/// over `[lo, hi + 1]` per coordinate.
pub fn relativized_domains(trace: &CountingTrace, bounds: &[(i64, i64)]) -> HashMap<Var, (i64, i64)> {
    let mut out = HashMap::new();
    for tuple in std::iter::once(&trace.vars).chain(&trace.fresh) {
        for (v, (lo, hi)) in tuple.iter().zip(bounds) {
            out.insert(*v, (*lo, hi + 1));
        }
    }
    out
}

/// Variables of a trace's fresh tuples.
pub fn trace_vars(t: &CountingTrace) -> BTreeSet<Var> {
    t.fresh.iter().flatten().copied().collect()
}
