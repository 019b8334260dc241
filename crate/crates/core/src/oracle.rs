//! Brute-force semantic evaluation.
//!
//! [`eval_qf`] is exact on quantifier-free formulas. [`Oracle`] evaluates
//! quantified formulas by enumeration. Before enumerating a quantified
//! variable it derives, from the atoms of the body that bound that
//! variable, a finite union of intervals containing every witness under
//! the current assignment. When that union is finite the enumeration is
//! exact; otherwise it falls back to the windows `[-B, B]` and `[-2B, 2B]`
//! and reports `Unstable` when the two windows disagree on a count.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::formula::{Atom, Formula, Node};
use crate::var::Var;
use crate::{Assignment, Error, Result};

/// Default enumeration bound.
pub const DEFAULT_BOUND: u64 = 16;
/// Default cap on enumerated values.
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

/// Exact truth value of a quantifier-free formula. Atoms are read through
/// their difference, so variables that cancel need no binding.
pub fn eval_qf(f: &Formula, a: &Assignment) -> Result<bool> {
    fn go(f: &Formula, a: &Assignment, memo: &mut HashMap<usize, bool>) -> Result<bool> {
        if let Some(&b) = memo.get(&f.id()) {
            return Ok(b);
        }
        let b = match f.node() {
            Node::Atomic(at @ Atom::Less(..)) => at.difference().eval(a)?.is_negative(),
            Node::Atomic(at @ Atom::ModEq(_, k, _)) => at.difference().eval(a)?.mod_floor(k).is_zero(),
            Node::Not(x) => !go(x, a, memo)?,
            Node::And(x, y) => go(x, a, memo)? && go(y, a, memo)?,
            Node::Or(x, y) => go(x, a, memo)? || go(y, a, memo)?,
            Node::Implies(x, y) => !go(x, a, memo)? || go(y, a, memo)?,
            Node::Iff(x, y) => go(x, a, memo)? == go(y, a, memo)?,
            _ => return Err(Error::Precondition("eval_qf requires a quantifier-free formula".into())),
        };
        memo.insert(f.id(), b);
        Ok(b)
    }
    go(f, a, &mut HashMap::new())
}

/// Three-valued verdict of the bounded oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Truth {
    True,
    False,
    Unstable,
}

impl Truth {
    pub fn from_bool(b: bool) -> Truth {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Truth::True => Some(true),
            Truth::False => Some(false),
            Truth::Unstable => None,
        }
    }

    fn not(self) -> Truth {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unstable => Truth::Unstable,
        }
    }
}

impl std::fmt::Display for Truth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Truth::True => "true",
            Truth::False => "false",
            Truth::Unstable => "unstable",
        })
    }
}

/// Verdict with the witness count of a counting quantifier at the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleVerdict {
    pub value: Truth,
    pub witness_count: Option<BigInt>,
}

/// Oracle settings.
#[derive(Clone, Debug)]
pub struct OracleConfig {
    /// Window half-width `B`; the stability window is `2B`.
    pub bound: u64,
    /// Cap on enumerated values across one evaluation.
    pub max_steps: u64,
    /// Explicit finite ranges for chosen variables. A variable with a range
    /// is enumerated over that range only, exactly and without windows.
    pub domains: HashMap<Var, (i64, i64)>,
    /// Report `False` instead of `Unstable` when a modulo or exact count
    /// is proven infinite.
    pub decide_infinite: bool,
}

impl Default for OracleConfig {
    fn default() -> OracleConfig {
        OracleConfig { bound: DEFAULT_BOUND, max_steps: DEFAULT_MAX_STEPS, domains: HashMap::new(), decide_infinite: false }
    }
}

/// Evaluates `f` under `a` with window bound `bound` and default caps.
pub fn eval_bounded(f: &Formula, a: &Assignment, bound: u64) -> Result<OracleVerdict> {
    if bound == 0 {
        return Err(Error::Precondition("bound must be at least 1".into()));
    }
    let mut o = Oracle::new(f, OracleConfig { bound, ..OracleConfig::default() })?;
    o.eval_verdict(a)
}

type Slot = usize;

/// `Σ coeff·slot + constant`.
#[derive(Clone, Debug)]
struct Lin {
    terms: Vec<(Slot, i64)>,
    constant: i64,
}

impl Lin {
    fn eval(&self, env: &[i64]) -> i128 {
        self.terms.iter().fold(self.constant as i128, |acc, &(s, a)| acc + a as i128 * env[s] as i128)
    }

    fn coeff(&self, s: Slot) -> i64 {
        self.terms.iter().find(|(v, _)| *v == s).map_or(0, |(_, a)| *a)
    }
}

#[derive(Clone, Copy, Debug)]
enum CountKind {
    AtLeast(u64),
    Exactly(u64),
    Mod(i64),
}

#[derive(Debug)]
enum ONode {
    /// True iff the value is positive.
    Pos(Lin),
    /// True iff the value is divisible by the modulus.
    Div(Lin, i64),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Imp(usize, usize),
    Iff(usize, usize),
    Exists { var: Slot, body: usize, pin: Pin, key: Vec<Slot> },
    Count { kind: CountKind, residue: Option<Lin>, vars: Vec<Slot>, body: usize, pins: Vec<Pin>, key: Vec<Slot> },
}

/// What is known statically about the witnesses of one bound variable.
#[derive(Clone, Debug)]
struct Pin {
    plan: Plan,
    tail: Option<Tail>,
}

/// Present when the body depends on the variable only through atoms whose
/// other variables are fixed. Outside the breakpoints of `less` the truth
/// of the body is then periodic in the variable with period `period`.
#[derive(Clone, Debug)]
struct Tail {
    less: Vec<(i64, Lin)>,
    period: i64,
}

const MAX_PERIOD: i64 = 1 << 20;

/// Over-approximation of the witness set of a variable.
#[derive(Clone, Debug)]
enum Plan {
    Any,
    /// `a·x + rest > 0` when `positive`, else `a·x + rest ≤ 0`.
    Bound { a: i64, rest: Lin, positive: bool },
    And(Vec<Plan>),
    Or(Vec<Plan>),
}

const NEG_INF: i128 = i128::MIN;
const POS_INF: i128 = i128::MAX;

/// Sorted, disjoint, non-adjacent closed intervals.
type Ranges = Vec<(i128, i128)>;

fn full() -> Ranges {
    vec![(NEG_INF, POS_INF)]
}

fn normalize(mut r: Ranges) -> Ranges {
    r.retain(|(lo, hi)| lo <= hi);
    r.sort();
    let mut out: Ranges = Vec::with_capacity(r.len());
    for (lo, hi) in r {
        if let Some(last) = out.last_mut() {
            if last.1 == POS_INF || lo <= last.1 + 1 {
                last.1 = last.1.max(hi);
                continue;
            }
        }
        out.push((lo, hi));
    }
    out
}

fn intersect(a: &Ranges, b: &Ranges) -> Ranges {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if lo <= hi {
            out.push((lo, hi));
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn is_finite(r: &Ranges) -> bool {
    r.first().map_or(true, |f| f.0 != NEG_INF) && r.last().map_or(true, |l| l.1 != POS_INF)
}

fn cardinality(r: &Ranges) -> u128 {
    r.iter().map(|(lo, hi)| (hi - lo) as u128 + 1).sum()
}

fn eval_plan(p: &Plan, env: &[i64]) -> Ranges {
    match p {
        Plan::Any => full(),
        Plan::Bound { a, rest, positive } => {
            let r = rest.eval(env);
            let a = *a as i128;
            let range = match (a > 0, positive) {
                // a·x > -r
                (true, true) => (Integer::div_floor(&(-r), &a) + 1, POS_INF),
                // |a|·x < r
                (false, true) => (NEG_INF, Integer::div_floor(&(r - 1), &-a)),
                // a·x ≤ -r
                (true, false) => (NEG_INF, Integer::div_floor(&(-r), &a)),
                // |a|·x ≥ r
                (false, false) => (Integer::div_ceil(&r, &-a), POS_INF),
            };
            normalize(vec![range])
        }
        Plan::And(ps) => {
            let mut acc = full();
            for q in ps {
                acc = intersect(&acc, &eval_plan(q, env));
                if acc.is_empty() {
                    break;
                }
            }
            acc
        }
        Plan::Or(ps) => {
            let mut acc = Vec::new();
            for q in ps {
                acc.extend(eval_plan(q, env));
                acc = normalize(acc);
                if acc == full() {
                    break;
                }
            }
            acc
        }
    }
}

fn plan_and(ps: Vec<Plan>) -> Plan {
    let mut kept: Vec<Plan> = ps.into_iter().filter(|p| !matches!(p, Plan::Any)).collect();
    match kept.len() {
        0 => Plan::Any,
        1 => kept.pop().unwrap(),
        _ => Plan::And(kept),
    }
}

fn plan_or(ps: Vec<Plan>) -> Plan {
    if ps.iter().any(|p| matches!(p, Plan::Any)) {
        return Plan::Any;
    }
    let mut ps = ps;
    match ps.len() {
        0 => Plan::Any,
        1 => ps.pop().unwrap(),
        _ => Plan::Or(ps),
    }
}

/// Arena compiled from a formula.
struct Arena {
    nodes: Vec<ONode>,
    slots: HashMap<Var, Slot>,
    free: Vec<BTreeSet<Slot>>,
}

const PLAN_BUDGET: usize = 4096;

impl Arena {
    fn slot(&mut self, v: Var) -> Slot {
        let n = self.slots.len();
        *self.slots.entry(v).or_insert(n)
    }

    fn lin(&mut self, t: &crate::term::Term) -> Result<Lin> {
        let small = |n: &BigInt| {
            n.to_i64().ok_or_else(|| Error::Resource(format!("integer {n} is too large for the enumeration oracle")))
        };
        let mut terms = Vec::new();
        for (v, a) in t.coeffs() {
            terms.push((self.slot(v), small(a)?));
        }
        Ok(Lin { terms, constant: small(t.constant_part())? })
    }

    fn compile(&mut self, f: &Formula, memo: &mut HashMap<usize, usize>) -> Result<usize> {
        if let Some(&i) = memo.get(&f.id()) {
            return Ok(i);
        }
        let (node, free): (ONode, BTreeSet<Slot>) = match f.node() {
            Node::Atomic(Atom::Less(l, r)) => {
                let lin = self.lin(&(r - l))?;
                let free = lin.terms.iter().map(|t| t.0).collect();
                (ONode::Pos(lin), free)
            }
            Node::Atomic(Atom::ModEq(l, k, r)) => {
                let lin = self.lin(&(l - r))?;
                let k = k.to_i64().ok_or_else(|| Error::Resource(format!("modulus {k} is too large")))?;
                let free = lin.terms.iter().map(|t| t.0).collect();
                (ONode::Div(lin, k), free)
            }
            Node::Not(a) => {
                let i = self.compile(a, memo)?;
                (ONode::Not(i), self.free[i].clone())
            }
            Node::And(a, b) | Node::Or(a, b) | Node::Implies(a, b) | Node::Iff(a, b) => {
                let i = self.compile(a, memo)?;
                let j = self.compile(b, memo)?;
                let free = self.free[i].union(&self.free[j]).copied().collect();
                let node = match f.node() {
                    Node::And(..) => ONode::And(i, j),
                    Node::Or(..) => ONode::Or(i, j),
                    Node::Implies(..) => ONode::Imp(i, j),
                    _ => ONode::Iff(i, j),
                };
                (node, free)
            }
            Node::Exists(x, body) => {
                let var = self.slot(*x);
                let b = self.compile(body, memo)?;
                let mut free = self.free[b].clone();
                free.remove(&var);
                let pin = self.pin(b, var, &BTreeSet::new());
                (ONode::Exists { var, body: b, pin, key: free.iter().copied().collect() }, free)
            }
            Node::ModCount { vars, body, .. } | Node::AtLeast { vars, body, .. } | Node::Exactly { vars, body, .. } => {
                let slots: Vec<Slot> = vars.iter().map(|v| self.slot(*v)).collect();
                let b = self.compile(body, memo)?;
                let mut free = self.free[b].clone();
                for s in &slots {
                    free.remove(s);
                }
                let (kind, residue) = match f.node() {
                    Node::ModCount { residue, modulus, .. } => {
                        let p = modulus.to_i64().ok_or_else(|| Error::Resource(format!("modulus {modulus} is too large")))?;
                        let lin = self.lin(residue)?;
                        free.extend(lin.terms.iter().map(|t| t.0));
                        (CountKind::Mod(p), Some(lin))
                    }
                    Node::AtLeast { threshold, .. } => (CountKind::AtLeast(threshold.to_u64().unwrap_or(u64::MAX)), None),
                    Node::Exactly { count, .. } => (CountKind::Exactly(count.to_u64().unwrap_or(u64::MAX)), None),
                    _ => unreachable!(),
                };
                let mut pins = Vec::new();
                for (i, &s) in slots.iter().enumerate() {
                    let later: BTreeSet<Slot> = slots[i + 1..].iter().copied().collect();
                    pins.push(self.pin(b, s, &later));
                }
                let key = free.iter().copied().collect();
                (ONode::Count { kind, residue, vars: slots, body: b, pins, key }, free)
            }
        };
        self.nodes.push(node);
        self.free.push(free);
        let i = self.nodes.len() - 1;
        memo.insert(f.id(), i);
        Ok(i)
    }

    fn pin(&self, body: usize, x: Slot, unknown: &BTreeSet<Slot>) -> Pin {
        let mut budget = PLAN_BUDGET;
        let plan = self.plan(body, x, unknown, true, &mut budget);
        let plan = if budget == 0 { Plan::Any } else { plan };
        let mut tail = Tail { less: Vec::new(), period: 1 };
        let mut seen = BTreeSet::new();
        let tail = self.tail(body, x, unknown, &mut tail, &mut seen).then_some(tail);
        Pin { plan, tail }
    }

    fn tail(&self, i: usize, x: Slot, unknown: &BTreeSet<Slot>, acc: &mut Tail, seen: &mut BTreeSet<usize>) -> bool {
        if !self.free[i].contains(&x) || !seen.insert(i) {
            return true;
        }
        if seen.len() > PLAN_BUDGET {
            return false;
        }
        match &self.nodes[i] {
            ONode::Pos(lin) => {
                if lin.terms.iter().any(|(s, _)| unknown.contains(s)) {
                    return false;
                }
                let rest = Lin { terms: lin.terms.iter().filter(|(s, _)| *s != x).copied().collect(), constant: lin.constant };
                acc.less.push((lin.coeff(x), rest));
                true
            }
            ONode::Div(_, k) => {
                acc.period = acc.period.lcm(k);
                acc.period <= MAX_PERIOD
            }
            ONode::Not(a) => self.tail(*a, x, unknown, acc, seen),
            ONode::And(a, b) | ONode::Or(a, b) | ONode::Imp(a, b) | ONode::Iff(a, b) => {
                self.tail(*a, x, unknown, acc, seen) && self.tail(*b, x, unknown, acc, seen)
            }
            ONode::Exists { .. } | ONode::Count { .. } => false,
        }
    }

    /// Witness over-approximation for `x` in node `i` read with the given
    /// polarity; atoms mentioning a variable of `unknown` are ignored.
    fn plan(&self, i: usize, x: Slot, unknown: &BTreeSet<Slot>, positive: bool, budget: &mut usize) -> Plan {
        if *budget == 0 {
            return Plan::Any;
        }
        *budget -= 1;
        if !self.free[i].contains(&x) {
            return Plan::Any;
        }
        match &self.nodes[i] {
            ONode::Pos(lin) => {
                let a = lin.coeff(x);
                if a == 0 || lin.terms.iter().any(|(s, _)| unknown.contains(s)) {
                    return Plan::Any;
                }
                let rest = Lin { terms: lin.terms.iter().filter(|(s, _)| *s != x).copied().collect(), constant: lin.constant };
                Plan::Bound { a, rest, positive }
            }
            ONode::Div(..) => Plan::Any,
            ONode::Not(a) => self.plan(*a, x, unknown, !positive, budget),
            ONode::And(a, b) | ONode::Or(a, b) => {
                let pa = self.plan(*a, x, unknown, positive, budget);
                let pb = self.plan(*b, x, unknown, positive, budget);
                if matches!(self.nodes[i], ONode::And(..)) == positive {
                    plan_and(vec![pa, pb])
                } else {
                    plan_or(vec![pa, pb])
                }
            }
            ONode::Imp(a, b) => {
                let pa = self.plan(*a, x, unknown, !positive, budget);
                let pb = self.plan(*b, x, unknown, positive, budget);
                if positive {
                    plan_or(vec![pa, pb])
                } else {
                    plan_and(vec![pa, pb])
                }
            }
            ONode::Iff(a, b) => {
                let (a, b) = (*a, *b);
                let at = self.plan(a, x, unknown, true, budget);
                let af = self.plan(a, x, unknown, false, budget);
                let bt = self.plan(b, x, unknown, true, budget);
                let bf = self.plan(b, x, unknown, false, budget);
                if positive {
                    plan_or(vec![plan_and(vec![at, bt]), plan_and(vec![af, bf])])
                } else {
                    plan_or(vec![plan_and(vec![at, bf]), plan_and(vec![af, bt])])
                }
            }
            ONode::Exists { var, body, .. } => {
                if !positive || *var == x {
                    return Plan::Any;
                }
                let mut u = unknown.clone();
                u.insert(*var);
                self.plan(*body, x, &u, true, budget)
            }
            ONode::Count { kind, vars, body, .. } => {
                if !positive || matches!(kind, CountKind::Mod(_)) || vars.contains(&x) {
                    return Plan::Any;
                }
                let mut u = unknown.clone();
                u.extend(vars.iter().copied());
                self.plan(*body, x, &u, true, budget)
            }
        }
    }
}

/// Reusable bounded evaluator for one formula. Results of quantified
/// subformulas are cached by the values of their free variables and reused
/// across calls.
pub struct Oracle {
    arena: Arena,
    root: usize,
    root_free: Vec<(Var, Slot)>,
    config: OracleConfig,
    domains: HashMap<Slot, (i64, i64)>,
    memo: HashMap<(usize, Vec<i64>), Truth>,
    steps: u64,
    last_count: Option<u64>,
}

struct Tally {
    w1: u64,
    w2: u64,
    unstable: bool,
    windowed: bool,
    infinite: bool,
}

struct Cands {
    vals: Vec<i64>,
    windowed: bool,
    /// Breakpoint hull; values outside it lie in a periodic tail.
    core: Option<(i128, i128)>,
}

impl Oracle {
    pub fn new(f: &Formula, config: OracleConfig) -> Result<Oracle> {
        let mut arena = Arena { nodes: Vec::new(), slots: HashMap::new(), free: Vec::new() };
        let root = arena.compile(f, &mut HashMap::new())?;
        let by_slot: HashMap<Slot, Var> = arena.slots.iter().map(|(v, s)| (*s, *v)).collect();
        let root_free = arena.free[root].iter().map(|s| (by_slot[s], *s)).collect();
        let domains = config
            .domains
            .iter()
            .filter_map(|(v, r)| arena.slots.get(v).map(|s| (*s, *r)))
            .collect();
        Ok(Oracle { arena, root, root_free, config, domains, memo: HashMap::new(), steps: 0, last_count: None })
    }

    /// Truth value under `a`, which must bind every free variable.
    pub fn eval(&mut self, a: &Assignment) -> Result<Truth> {
        Ok(self.eval_verdict(a)?.value)
    }

    /// Truth value plus the witness count when the root counts witnesses.
    pub fn eval_verdict(&mut self, a: &Assignment) -> Result<OracleVerdict> {
        let mut env = vec![0i64; self.arena.slots.len()];
        for (v, s) in &self.root_free {
            let n = a.get(*v).ok_or(Error::Unbound(*v))?;
            env[*s] = n.to_i64().ok_or_else(|| Error::Resource(format!("value {n} is too large for the oracle")))?;
        }
        self.steps = 0;
        self.last_count = None;
        let root = self.root;
        let value = self.node(root, &mut env)?;
        let witness_count = match &self.arena.nodes[root] {
            ONode::Count { .. } if value != Truth::Unstable => self.last_count.map(BigInt::from),
            _ => None,
        };
        Ok(OracleVerdict { value, witness_count })
    }

    /// Values enumerated by the last evaluation.
    pub fn last_steps(&self) -> u64 {
        self.steps
    }

    fn step(&mut self) -> Result<()> {
        self.steps += 1;
        if self.steps > self.config.max_steps {
            return Err(Error::Resource(format!("oracle enumerated more than {} values", self.config.max_steps)));
        }
        Ok(())
    }

    /// Candidate values for slot `x`, sorted by absolute value.
    fn candidates(&self, x: Slot, pin: &Pin, env: &[i64]) -> Result<Cands> {
        let mut r = eval_plan(&pin.plan, env);
        let mut core = None;
        if let Some(&(lo, hi)) = self.domains.get(&x) {
            r = intersect(&r, &vec![(lo as i128, hi as i128)]);
        } else if let (Some(tail), false) = (&pin.tail, is_finite(&r)) {
            let (mut lo, mut hi) = (0i128, -1i128);
            for (k, (a, rest)) in tail.less.iter().enumerate() {
                let (a, r) = (*a as i128, -rest.eval(env));
                let (f, c) = (Integer::div_floor(&r, &a), Integer::div_ceil(&r, &a));
                if k == 0 {
                    (lo, hi) = (f, c);
                } else {
                    (lo, hi) = (lo.min(f), hi.max(c));
                }
            }
            let p = tail.period as i128;
            r = intersect(&r, &vec![(lo - p, hi + p)]);
            core = Some((lo, hi));
        }
        let windowed = !is_finite(&r);
        if windowed {
            let w = 2 * self.config.bound as i128;
            r = intersect(&r, &vec![(-w, w)]);
        }
        if cardinality(&r) > self.config.max_steps as u128 {
            return Err(Error::Resource(format!("candidate set exceeds {} values", self.config.max_steps)));
        }
        let mut vals: Vec<i64> = r.iter().flat_map(|&(lo, hi)| (lo..=hi).map(|v| v as i64)).collect();
        vals.sort_by_key(|v| (v.unsigned_abs(), *v > 0));
        Ok(Cands { vals, windowed, core })
    }

    fn node(&mut self, i: usize, env: &mut Vec<i64>) -> Result<Truth> {
        match &self.arena.nodes[i] {
            ONode::Pos(lin) => Ok(Truth::from_bool(lin.eval(env) > 0)),
            ONode::Div(lin, k) => Ok(Truth::from_bool(lin.eval(env).rem_euclid(*k as i128) == 0)),
            ONode::Not(a) => {
                let a = *a;
                Ok(self.node(a, env)?.not())
            }
            ONode::And(a, b) => {
                let (a, b) = (*a, *b);
                let x = self.node(a, env)?;
                if x == Truth::False {
                    return Ok(Truth::False);
                }
                let y = self.node(b, env)?;
                Ok(match (x, y) {
                    (_, Truth::False) => Truth::False,
                    (Truth::True, Truth::True) => Truth::True,
                    _ => Truth::Unstable,
                })
            }
            ONode::Or(a, b) | ONode::Imp(a, b) => {
                let imp = matches!(self.arena.nodes[i], ONode::Imp(..));
                let (a, b) = (*a, *b);
                let mut x = self.node(a, env)?;
                if imp {
                    x = x.not();
                }
                if x == Truth::True {
                    return Ok(Truth::True);
                }
                let y = self.node(b, env)?;
                Ok(match (x, y) {
                    (_, Truth::True) => Truth::True,
                    (Truth::False, Truth::False) => Truth::False,
                    _ => Truth::Unstable,
                })
            }
            ONode::Iff(a, b) => {
                let (a, b) = (*a, *b);
                let x = self.node(a, env)?;
                let y = self.node(b, env)?;
                Ok(match (x.as_bool(), y.as_bool()) {
                    (Some(p), Some(q)) => Truth::from_bool(p == q),
                    _ => Truth::Unstable,
                })
            }
            ONode::Exists { key, .. } | ONode::Count { key, .. } => {
                let k: Vec<i64> = key.iter().map(|s| env[*s]).collect();
                if let Some(&t) = self.memo.get(&(i, k.clone())) {
                    self.last_count = None;
                    return Ok(t);
                }
                let t = self.quantifier(i, env)?;
                self.memo.insert((i, k), t);
                Ok(t)
            }
        }
    }

    fn quantifier(&mut self, i: usize, env: &mut Vec<i64>) -> Result<Truth> {
        match &self.arena.nodes[i] {
            ONode::Exists { var, body, pin, .. } => {
                let (var, body) = (*var, *body);
                let vals = self.candidates(var, pin, env)?.vals;
                let saved = env[var];
                let mut result = Truth::False;
                for v in vals {
                    self.step()?;
                    env[var] = v;
                    match self.node(body, env)? {
                        Truth::True => {
                            result = Truth::True;
                            break;
                        }
                        Truth::Unstable => result = Truth::Unstable,
                        Truth::False => {}
                    }
                }
                env[var] = saved;
                Ok(result)
            }
            ONode::Count { kind, residue, vars, body, .. } => {
                let kind = *kind;
                let residue = residue.as_ref().map(|r| r.eval(env));
                let vars = vars.clone();
                let body = *body;
                // the root reports its full count, inner thresholds stop early
                let stop = match kind {
                    CountKind::AtLeast(c) if i != self.root => Some(c),
                    _ => None,
                };
                let mut tally = Tally { w1: 0, w2: 0, unstable: false, windowed: false, infinite: false };
                let saved: Vec<i64> = vars.iter().map(|s| env[*s]).collect();
                self.count(i, 0, true, &vars, body, stop, env, &mut tally)?;
                for (s, v) in vars.iter().zip(saved) {
                    env[*s] = v;
                }
                let (w1, w2) = (tally.w1, tally.w2);
                let drifted = tally.windowed && w1 != w2;
                let t = match kind {
                    CountKind::AtLeast(_) if tally.infinite => Truth::True,
                    _ if tally.infinite => {
                        if self.config.decide_infinite {
                            Truth::False
                        } else {
                            Truth::Unstable
                        }
                    }
                    CountKind::AtLeast(c) => {
                        if w2 >= c {
                            Truth::True
                        } else if tally.unstable {
                            Truth::Unstable
                        } else {
                            Truth::False
                        }
                    }
                    CountKind::Exactly(c) => {
                        if tally.unstable || drifted {
                            Truth::Unstable
                        } else {
                            Truth::from_bool(w2 == c)
                        }
                    }
                    CountKind::Mod(p) => {
                        if tally.unstable || drifted {
                            Truth::Unstable
                        } else {
                            let q = residue.expect("modulo node has a residue").rem_euclid(p as i128);
                            Truth::from_bool((w2 as i128).rem_euclid(p as i128) == q)
                        }
                    }
                };
                self.last_count = if tally.unstable || drifted || tally.infinite { None } else { Some(w2) };
                Ok(t)
            }
            _ => unreachable!("not a quantifier"),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn count(
        &mut self,
        i: usize,
        depth: usize,
        in_w1: bool,
        vars: &[Slot],
        body: usize,
        stop: Option<u64>,
        env: &mut Vec<i64>,
        tally: &mut Tally,
    ) -> Result<bool> {
        if depth == vars.len() {
            self.step()?;
            match self.node(body, env)? {
                Truth::True => {
                    tally.w2 += 1;
                    if in_w1 {
                        tally.w1 += 1;
                    }
                }
                Truth::Unstable => tally.unstable = true,
                Truth::False => {}
            }
            return Ok(stop.is_some_and(|c| tally.w2 >= c));
        }
        let x = vars[depth];
        let cands = match &self.arena.nodes[i] {
            ONode::Count { pins, .. } => self.candidates(x, &pins[depth], env)?,
            _ => unreachable!(),
        };
        tally.windowed |= cands.windowed;
        let b = self.config.bound;
        for v in cands.vals {
            env[x] = v;
            let inner = in_w1 && (!cands.windowed || v.unsigned_abs() <= b);
            let before = tally.w2;
            if self.count(i, depth + 1, inner, vars, body, stop, env, tally)? {
                return Ok(true);
            }
            if tally.infinite {
                return Ok(true);
            }
            if let Some((lo, hi)) = cands.core {
                // a witness in the periodic tail repeats forever
                if tally.w2 > before && ((v as i128) < lo || (v as i128) > hi) {
                    tally.infinite = true;
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn closed(src: &str, bound: u64) -> OracleVerdict {
        eval_bounded(&parse(src).unwrap(), &Assignment::new(), bound).unwrap()
    }

    #[test]
    fn quantifier_free_values() {
        let (x, y) = (Var::named("ox"), Var::named("oy"));
        let a: Assignment = [(x, 3)].into_iter().collect();
        assert!(eval_qf(&parse("2*ox < 7").unwrap(), &a).unwrap());
        let a: Assignment = [(x, 5)].into_iter().collect();
        assert!(!eval_qf(&parse("ox == 0 (mod 2)").unwrap(), &a).unwrap());
        let a: Assignment = [(x, 1), (y, 1)].into_iter().collect();
        assert!(!eval_qf(&parse("57*ox == 2*oy + 27 (mod 13)").unwrap(), &a).unwrap());
        assert!(matches!(eval_qf(&parse("ox < oy").unwrap(), &Assignment::new()), Err(Error::Unbound(_))));
    }

    #[test]
    fn bounded_counting() {
        let v = closed("E[0 % 2] (ob) : 0 < ob && ob < 5", 16);
        assert_eq!(v.value, Truth::True);
        assert_eq!(v.witness_count, Some(BigInt::from(4)));
        assert_eq!(closed("E[0 % 2] (ob) : 0 < ob", 16).value, Truth::Unstable);
        assert_eq!(closed("E>=1 (ob) : ob < ob", 4).value, Truth::False);
        assert_eq!(closed("E>=5 (ob) : 0 < ob", 1).value, Truth::True);
    }

    #[test]
    fn infinite_counts_can_be_decided() {
        let f = parse("E[0 % 2] (oi) : oi == 0 (mod 3)").unwrap();
        let cfg = OracleConfig { decide_infinite: true, ..OracleConfig::default() };
        assert_eq!(Oracle::new(&f, cfg).unwrap().eval(&Assignment::new()).unwrap(), Truth::False);
        let f = parse("E[0 % 2] (oi) : 3 < oi && oi < 100").unwrap();
        let v = eval_bounded(&f, &Assignment::new(), 2).unwrap();
        assert_eq!(v, OracleVerdict { value: Truth::True, witness_count: Some(BigInt::from(96)) });
    }

    #[test]
    fn tuples_and_nesting() {
        assert_eq!(closed("E>=3 (o1,o2) : 0 < o1 && o1 < 3 && 0 < o2 && o2 < 3", 16).value, Truth::True);
        assert_eq!(closed("E=4 (o1,o2) : 0 < o1 && o1 < 3 && 0 < o2 && o2 < 3", 16).value, Truth::True);
        assert_eq!(closed("E ox : E oy : ox < oy && oy < ox", 8).value, Truth::False);
        assert_eq!(closed("!(E ox : !(E oy : ox < oy))", 8).value, Truth::True);
    }

    #[test]
    fn equality_pins_candidates() {
        // the witness 40 lies outside both windows but is pinned by the equality
        assert_eq!(closed("E ox : 3*ox = 120", 4).value, Truth::True);
        assert_eq!(closed("E ox : 2*ox = 7", 4).value, Truth::False);
    }

    #[test]
    fn domains_override_windows() {
        let x = Var::named("odx");
        let f = parse("E[1 % 2] (odx) : 0 < odx").unwrap();
        let mut cfg = OracleConfig::default();
        cfg.domains.insert(x, (-3, 3));
        let mut o = Oracle::new(&f, cfg).unwrap();
        assert_eq!(o.eval(&Assignment::new()).unwrap(), Truth::True);
    }
}
