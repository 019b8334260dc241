//! Quantifier elimination for `∃x` and `∃^{(q,p)}x` in front of
//! quantifier-free formulas, with certified growth of the metric sets.
//!
//! Every elimination step checks that the coefficients, constants and
//! moduli of its output stay inside the growth sets of its input, and
//! [`qe_full`] checks the end-to-end growth bound on `maxP` and
//! `maxConst` with exact integers.
//!
//! The two exponential disjunctions of the modulo-counting construction
//! (over residue tuples and over witness subsets) are built as shared
//! counting DAGs. Expanding such a DAG yields the literal disjunction, so
//! the atoms and hence all metric sets are unchanged while the number of
//! distinct nodes stays polynomial.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use itertools::Itertools;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::formula::{Atom, Formula, Node, Separated};
use crate::metrics::{metric_sets, qd, size, Sets};
use crate::term::Term;
use crate::var::Var;
use crate::{Error, Result};

/// Budgets for the constructions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QeOptions {
    /// Largest `|M|` in an interior piece.
    pub max_m: u64,
    /// Largest `|T|` for which linear orders are enumerated.
    pub max_order_terms: usize,
    /// Largest `a_i·a_{i+1}·p·N` in an interior piece.
    pub max_b_range: u64,
    /// Estimated number of new nodes one elimination may create.
    pub max_nodes: u64,
    /// Constant-fold the result of every step before the next one.
    pub fold: bool,
}

impl Default for QeOptions {
    fn default() -> QeOptions {
        QeOptions { max_m: 12, max_order_terms: 4, max_b_range: 256, max_nodes: 4_000_000, fold: true }
    }
}

/// The data a formula offers for eliminating `x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeparatedAtomSet {
    /// Pairs `(a, t)` from atoms `a·x < t` or `t < a·x` with `a > 0`, in
    /// canonical order; `{(1, 0)}` when there is no such atom.
    pub pairs: Vec<(BigInt, Term)>,
    /// Triples `(a, k, t)` from atoms `a·x ≡_k t`.
    pub mod_atoms: Vec<(BigInt, BigInt, Term)>,
    /// `lcm Mod(β)`.
    pub n: BigInt,
    /// Whether `pairs` is the fallback.
    pub fallback: bool,
}

/// A nonempty list of distinct pairs of `T`, ordered by `≺`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderedSubset {
    pub entries: Vec<(BigInt, Term)>,
}

/// Canonical key for terms that does not depend on interning order.
fn term_key(t: &Term) -> (Vec<(String, BigInt)>, BigInt) {
    let mut parts: Vec<(String, BigInt)> = t.coeffs().map(|(v, a)| (v.name(), a.clone())).collect();
    parts.sort();
    (parts, t.constant_part().clone())
}

impl SeparatedAtomSet {
    /// Collects the separated atoms of a quantifier-free `β` in `x`.
    pub fn of(x: Var, beta: &Formula) -> SeparatedAtomSet {
        let mut pairs = BTreeMap::new();
        let mut mods = BTreeMap::new();
        for atom in beta.atoms() {
            if atom.difference().coeff(x).is_zero() {
                continue;
            }
            match atom.separate(x) {
                Separated::Below { a, t } | Separated::Above { a, t } => {
                    pairs.insert((a.clone(), term_key(&t)), (a, t));
                }
                Separated::Cong { a, k, t } => {
                    mods.insert((a.clone(), k.clone(), term_key(&t)), (a, k, t));
                }
            }
        }
        let fallback = pairs.is_empty();
        let pairs = if fallback { vec![(BigInt::one(), Term::zero())] } else { pairs.into_values().collect() };
        let n = metric_sets(beta).modulus.iter().fold(BigInt::one(), |acc, m| acc.lcm(m));
        SeparatedAtomSet { pairs, mod_atoms: mods.into_values().collect(), n, fallback }
    }
}

/// `β_{a,t+c}`: each atom in `x` is rewritten under `a·x = t+c`; atoms
/// without `x` are kept.
pub fn substitute_solution(x: Var, beta: &Formula, a: &BigInt, t_plus_c: &Term) -> Result<Formula> {
    if !a.is_positive() {
        return Err(Error::Precondition(format!("coefficient {a} must be positive")));
    }
    if t_plus_c.mentions(x) {
        return Err(Error::Precondition(format!("term {t_plus_c} mentions {x}")));
    }
    if !beta.is_quantifier_free() {
        return Err(Error::Precondition("substitution needs a quantifier-free formula".into()));
    }
    let mut memo = HashMap::new();
    let has_x = mentions_map(x, beta);
    Ok(subst_rec(x, beta, a, t_plus_c, &has_x, &mut memo))
}

fn subst_atom(x: Var, atom: &Atom, a: &BigInt, tc: &Term) -> Formula {
    match atom.separate(x) {
        Separated::Below { a: a1, t: s } => Formula::less(tc.scale(&a1), s.scale(a)),
        Separated::Above { a: a1, t: s } => Formula::less(s.scale(a), tc.scale(&a1)),
        Separated::Cong { a: a1, k, t: s } => Formula::cong(tc.scale(&a1), a * &k, s.scale(a)),
    }
}

/// For every distinct node, whether `x` occurs in it.
fn mentions_map(x: Var, f: &Formula) -> HashMap<usize, bool> {
    fn go(x: Var, f: &Formula, memo: &mut HashMap<usize, bool>) -> bool {
        if let Some(&b) = memo.get(&f.id()) {
            return b;
        }
        let b = match f.node() {
            Node::Atomic(a) => !a.difference().coeff(x).is_zero(),
            _ => f.children().into_iter().fold(false, |acc, c| go(x, c, memo) || acc),
        };
        memo.insert(f.id(), b);
        b
    }
    let mut memo = HashMap::new();
    go(x, f, &mut memo);
    memo
}

fn subst_rec(
    x: Var,
    f: &Formula,
    a: &BigInt,
    tc: &Term,
    has_x: &HashMap<usize, bool>,
    memo: &mut HashMap<usize, Formula>,
) -> Formula {
    if !has_x.get(&f.id()).copied().unwrap_or(true) {
        return f.clone();
    }
    if let Some(r) = memo.get(&f.id()) {
        return r.clone();
    }
    let out = match f.node() {
        Node::Atomic(atom) => subst_atom(x, atom, a, tc),
        _ => {
            let kids = f.children().into_iter().map(|c| subst_rec(x, c, a, tc, has_x, memo)).collect();
            f.with_children(kids)
        }
    };
    memo.insert(f.id(), out.clone());
    out
}

/// Shared state of one elimination of `x` from `β`.
struct Eliminator<'a> {
    x: Var,
    beta: Formula,
    has_x: HashMap<usize, bool>,
    set: SeparatedAtomSet,
    mods: Vec<BigInt>,
    /// Nodes of `β` that a substitution rebuilds.
    x_nodes: u64,
    cache: HashMap<(BigInt, Term), Formula>,
    work: u64,
    opts: &'a QeOptions,
}

impl<'a> Eliminator<'a> {
    fn new(x: Var, beta: &Formula, opts: &'a QeOptions) -> Result<Eliminator<'a>> {
        if !beta.is_quantifier_free() {
            return Err(Error::Precondition("elimination needs a quantifier-free body".into()));
        }
        let has_x = mentions_map(x, beta);
        let x_nodes = has_x.values().filter(|b| **b).count() as u64;
        let mods = metric_sets(beta).modulus.into_iter().collect();
        Ok(Eliminator {
            x,
            beta: beta.clone(),
            has_x,
            set: SeparatedAtomSet::of(x, beta),
            mods,
            x_nodes,
            cache: HashMap::new(),
            work: 0,
            opts,
        })
    }

    fn charge(&mut self, nodes: u64, what: &str) -> Result<()> {
        self.work = self.work.saturating_add(nodes);
        if self.work > self.opts.max_nodes {
            return Err(Error::Resource(format!(
                "{what}: estimated {} new nodes exceed the budget of {}",
                self.work, self.opts.max_nodes
            )));
        }
        Ok(())
    }

    /// `β_{a,tc}`, cached.
    fn beta_at(&mut self, a: &BigInt, tc: &Term) -> Formula {
        let key = (a.clone(), tc.clone());
        if let Some(f) = self.cache.get(&key) {
            return f.clone();
        }
        let mut memo = HashMap::new();
        let f = subst_rec(self.x, &self.beta, a, tc, &self.has_x, &mut memo);
        self.cache.insert(key, f.clone());
        f
    }

    /// Substitution into a small auxiliary formula.
    fn aux_at(&self, aux: &Formula, a: &BigInt, tc: &Term) -> Formula {
        let has_x = mentions_map(self.x, aux);
        subst_rec(self.x, aux, a, tc, &has_x, &mut HashMap::new())
    }

    fn lb_count(&self) -> Result<u64> {
        let mut total = BigInt::zero();
        for (a, _) in &self.set.pairs {
            total += a * &self.set.n * 2 + 1;
        }
        total.to_u64().ok_or_else(|| Error::Resource(format!("{total} disjuncts in existential elimination")))
    }

    /// `⋁ (β'_{a,t+c} ∧ 0 ≡_a t+c)` over `(a,t) ∈ T` and `|c| ≤ aN`, where
    /// `β' = front ∧ β ∧ back` with the optional conjuncts present.
    fn lb(&mut self, front: Option<&Formula>, back: Option<&Formula>) -> Result<Formula> {
        let count = self.lb_count()?;
        self.charge(count.saturating_mul(self.x_nodes + 8), "existential elimination")?;
        let pairs = self.set.pairs.clone();
        let n = self.set.n.clone();
        let mut disjuncts = Vec::with_capacity(count as usize);
        for (a, t) in &pairs {
            let bound = a * &n;
            let mut c = -bound.clone();
            while c <= bound {
                let tc = t.plus_const(&c);
                let mut parts = Vec::with_capacity(4);
                if let Some(f) = front {
                    parts.push(self.aux_at(f, a, &tc));
                }
                parts.push(self.beta_at(a, &tc));
                if let Some(f) = back {
                    parts.push(self.aux_at(f, a, &tc));
                }
                let body = parts.into_iter().reduce(Formula::and).expect("nonempty");
                disjuncts.push(Formula::and(body, Formula::cong(Term::zero(), a.clone(), tc)));
                c += 1;
            }
        }
        Ok(Formula::disj(disjuncts))
    }

    fn eliminate_exists(&mut self) -> Result<Formula> {
        if self.set.fallback {
            let x = Term::var(self.x);
            let split = Formula::or(
                Formula::less(x.clone(), Term::zero()),
                Formula::not(Formula::less(x, Term::zero())),
            );
            self.lb(None, Some(&split))
        } else {
            self.lb(None, None)
        }
    }

    fn eliminate_modcount(&mut self, q: usize, p: &BigInt) -> Result<Formula> {
        let t = self.set.pairs.clone();
        if t.len() > self.opts.max_order_terms {
            return Err(Error::Resource(format!(
                "|T| = {} exceeds the order-enumeration budget {}",
                t.len(),
                self.opts.max_order_terms
            )));
        }
        let pu = p.to_usize().filter(|v| *v <= 64).ok_or_else(|| Error::Resource(format!("modulus {p} is too large")))?;
        let n = self.set.n.clone();
        for ((ai, _), (aj, _)) in t.iter().tuple_combinations().flat_map(|(u, v)| [(u, v), (v, u)]) {
            let range = ai * aj * p * &n;
            if range > BigInt::from(self.opts.max_b_range) {
                return Err(Error::Resource(format!(
                    "b-range {range} exceeds the budget {}",
                    self.opts.max_b_range
                )));
            }
            let m = (&range - 1u32) / aj;
            if m > BigInt::from(self.opts.max_m) {
                return Err(Error::Resource(format!("|M| = {m} exceeds the budget {}", self.opts.max_m)));
            }
        }
        let mut low: HashMap<usize, Formula> = HashMap::new();
        let mut high: HashMap<usize, Formula> = HashMap::new();
        let mut point: HashMap<usize, Formula> = HashMap::new();
        let mut interior: HashMap<(usize, usize), Vec<Formula>> = HashMap::new();
        let mut branches = Vec::new();
        for k in 1..=t.len() {
            for order in (0..t.len()).permutations(k) {
                let alpha = consistency_formula(&t, &order);
                let mut pieces: Vec<Vec<Formula>> = Vec::with_capacity(2 * k + 1);
                let first = order[0];
                if !low.contains_key(&first) {
                    let (a1, s1) = &t[first];
                    let below = Formula::less(Term::monomial(a1.clone(), self.x), s1.clone());
                    let g = Formula::not(self.lb(Some(&below), None)?);
                    low.insert(first, g);
                }
                pieces.push(boundary_piece(&low[&first], pu));
                for w in order.windows(2) {
                    let key = (w[0], w[1]);
                    if !interior.contains_key(&key) {
                        let piece = self.interior_piece(&t[w[0]], &t[w[1]], p, pu)?;
                        interior.insert(key, piece);
                    }
                    pieces.push(interior[&key].clone());
                }
                let last = order[k - 1];
                if !high.contains_key(&last) {
                    let (an, sn) = &t[last];
                    let above = Formula::less(sn.clone(), Term::monomial(an.clone(), self.x));
                    let g = Formula::not(self.lb(Some(&above), None)?);
                    high.insert(last, g);
                }
                pieces.push(boundary_piece(&high[&last], pu));
                for &j in &order {
                    if !point.contains_key(&j) {
                        let (aj, sj) = &t[j];
                        let eq = Formula::equal(Term::monomial(aj.clone(), self.x), sj.clone());
                        let g = self.lb(Some(&eq), None)?;
                        point.insert(j, g);
                    }
                    pieces.push(point_piece(&point[&j], pu));
                }
                self.charge((pieces.len() * pu * pu) as u64 + 8, "residue tuples")?;
                branches.push(Formula::and(alpha, residue_sum(&pieces, q, pu)));
            }
        }
        Ok(Formula::disj(branches))
    }

    /// `γ_{i,r}` for `r = 0..p` on the interval between consecutive entries.
    fn interior_piece(&mut self, lo: &(BigInt, Term), hi: &(BigInt, Term), p: &BigInt, pu: usize) -> Result<Vec<Formula>> {
        let (ai, si) = lo;
        let (aj, sj) = hi;
        let n = self.set.n.clone();
        let range = (ai * aj * p * &n).to_u64().expect("checked against the budget");
        let max_m = (range - 1) / aj.to_u64().expect("small coefficient");
        self.charge(max_m.saturating_mul(self.x_nodes + 4) + range * (self.mods.len() as u64 + 2 * pu as u64), "interior piece")?;
        let gap = &si.scale(aj) - &sj.scale(ai);
        let diff = -&gap;
        // cnt[j][r]: exactly r modulo p of X_1..X_j hold
        let mut cnt: Vec<Vec<Formula>> = vec![(0..pu).map(|r| if r == 0 { Formula::verum() } else { Formula::falsum() }).collect()];
        for d in 1..=max_m {
            let sd = si.plus_const(&BigInt::from(d));
            let xd = Formula::and(Formula::cong(sd.clone(), ai.clone(), Term::zero()), self.beta_at(ai, &sd));
            let prev = cnt.last().expect("nonempty").clone();
            let row = (0..pu)
                .map(|r| {
                    Formula::or(
                        Formula::and(xd.clone(), prev[(r + pu - 1) % pu].clone()),
                        Formula::and(Formula::not(xd.clone()), prev[r].clone()),
                    )
                })
                .collect();
            cnt.push(row);
        }
        let scale = ai * aj * p;
        let mut out = Vec::with_capacity(pu);
        let guards: Vec<Formula> = (1..=range)
            .map(|b| {
                Formula::conj(
                    self.mods.iter().map(|m| Formula::cong(Term::constant(b), &scale * m, diff.clone())),
                )
            })
            .collect();
        for r in 0..pu {
            let disjuncts = (1..=range).map(|b| {
                let m = ((b - 1) / aj.to_u64().expect("small coefficient")) as usize;
                Formula::and(guards[(b - 1) as usize].clone(), cnt[m][r].clone())
            });
            out.push(Formula::disj(disjuncts));
        }
        Ok(out)
    }
}

fn boundary_piece(zero: &Formula, p: usize) -> Vec<Formula> {
    (0..p).map(|r| if r == 0 { zero.clone() } else { Formula::falsum() }).collect()
}

fn point_piece(one: &Formula, p: usize) -> Vec<Formula> {
    (0..p)
        .map(|r| match r {
            0 => Formula::not(one.clone()),
            1 => one.clone(),
            _ => Formula::falsum(),
        })
        .collect()
}

/// Disjunction over residue tuples summing to `q` modulo `p` of the
/// conjunction of the chosen pieces, built as a prefix-sum DAG.
fn residue_sum(pieces: &[Vec<Formula>], q: usize, p: usize) -> Formula {
    let mut acc = pieces[0].clone();
    for piece in &pieces[1..] {
        acc = (0..p)
            .map(|s| Formula::disj((0..p).map(|r| Formula::and(piece[r].clone(), acc[(s + p - r) % p].clone()))))
            .collect();
    }
    acc.swap_remove(q)
}

/// `α^≺`: the entries of `S` are strictly increasing and every pair of
/// `T` coincides with one of them.
pub fn consistency_formula(t: &[(BigInt, Term)], order: &[usize]) -> Formula {
    let mut parts = Vec::new();
    for w in order.windows(2) {
        let (ai, si) = &t[w[0]];
        let (aj, sj) = &t[w[1]];
        parts.push(Formula::less(si.scale(aj), sj.scale(ai)));
    }
    for (a, tt) in t {
        let cover = order.iter().map(|&i| {
            let (ai, si) = &t[i];
            Formula::equal(tt.scale(ai), si.scale(a))
        });
        parts.push(Formula::disj(cover.collect::<Vec<_>>()));
    }
    Formula::conj(parts)
}

/// `γ` with `(∃x: β) ⟺ γ`; the triple `(β, γ, 1)` is checked against the
/// growth condition.
pub fn eliminate_exists(x: Var, beta: &Formula) -> Result<Formula> {
    eliminate_exists_with(x, beta, &QeOptions::default())
}

pub fn eliminate_exists_with(x: Var, beta: &Formula, opts: &QeOptions) -> Result<Formula> {
    let mut e = Eliminator::new(x, beta, opts)?;
    let gamma = e.eliminate_exists()?;
    check_step(x, beta, &gamma, &BigInt::one())?;
    Ok(gamma)
}

/// `γ` with `(∃^{(q,p)}x: β) ⟺ γ`; the triple `(β, γ, p)` is checked
/// against the growth condition.
pub fn eliminate_modcount_unary(x: Var, q: &BigInt, p: &BigInt, beta: &Formula) -> Result<Formula> {
    eliminate_modcount_unary_with(x, q, p, beta, &QeOptions::default())
}

pub fn eliminate_modcount_unary_with(x: Var, q: &BigInt, p: &BigInt, beta: &Formula, opts: &QeOptions) -> Result<Formula> {
    if *p < BigInt::from(2) || q.is_negative() || q >= p {
        return Err(Error::Precondition(format!("residue {q} modulo {p} needs 0 ≤ q < p and p ≥ 2")));
    }
    let mut e = Eliminator::new(x, beta, opts)?;
    let gamma = e.eliminate_modcount(q.to_usize().expect("q < p"), p)?;
    check_step(x, beta, &gamma, p)?;
    Ok(gamma)
}

fn check_step(x: Var, beta: &Formula, gamma: &Formula, p: &BigInt) -> Result<()> {
    if gamma.all_vars().contains(&x) {
        return Err(Error::Assertion(format!("elimination of {x} left {x} in its result")));
    }
    let index = GrowthIndex::new(&metric_sets(beta), p);
    index.check(&metric_sets(gamma))?;
    let mut source = metric_sets(beta);
    source.modulus.insert(p.clone());
    let (max_p, max_const) = (max_p_of(&source), max_abs(&source.konst));
    let out = metric_sets(gamma);
    let (out_p, out_const) = (max_p_of(&out), max_abs(&out.konst));
    if out_p > max_p.pow(4) {
        return Err(Error::Assertion(format!("maxP grew from {max_p} to {out_p} in one step")));
    }
    if !within_pow2_scaled(&out_const, &(&max_p * 4u32), &max_const) {
        return Err(Error::Assertion(format!("maxConst grew from {max_const} to {out_const} in one step")));
    }
    Ok(())
}

fn max_abs(s: &BTreeSet<BigInt>) -> BigInt {
    s.iter().map(|n| n.abs()).max().unwrap_or_else(BigInt::zero)
}

fn max_p_of(s: &Sets) -> BigInt {
    max_abs(&s.coeff).max(max_abs(&s.modulus))
}

/// Whether `value ≤ 2^e · base` for `e ≥ 0`, `base ≥ 1`, without building
/// `2^e` when it is evidently large enough.
fn within_pow2_scaled(value: &BigInt, e: &BigInt, base: &BigInt) -> bool {
    let vbits = BigInt::from(value.bits());
    let floor = e + BigInt::from(base.bits()) - 1;
    if vbits <= floor {
        return true;
    }
    let e = e.to_u64().expect("exponent below the bit length of a formula constant");
    *value <= (BigInt::one() << e) * base
}

/// Membership tests for the growth sets of one source formula.
struct GrowthIndex {
    products: HashSet<BigInt>,
    product_list: Vec<BigInt>,
    mod_factors: Vec<BigInt>,
    coeff_pos: Vec<BigInt>,
    scaled_consts: Vec<BigInt>,
    consts: Vec<BigInt>,
    const_set: HashSet<BigInt>,
    slack: BigInt,
}

impl GrowthIndex {
    fn new(s: &Sets, p: &BigInt) -> GrowthIndex {
        let coeff: Vec<&BigInt> = s.coeff.iter().collect();
        let products: HashSet<BigInt> = coeff.iter().flat_map(|a| coeff.iter().map(move |b| *a * *b)).collect();
        let mut product_list: Vec<BigInt> = products.iter().cloned().collect();
        product_list.sort();
        let ks: BTreeSet<&BigInt> = s.modulus.iter().chain(std::iter::once(p)).collect();
        let mod_factors: BTreeSet<BigInt> = ks.iter().flat_map(|a| ks.iter().map(move |b| *a * *b)).collect();
        let scaled: BTreeSet<BigInt> = coeff.iter().flat_map(|a| s.konst.iter().map(move |c| *a * c)).collect();
        let lcm = s.modulus.iter().fold(BigInt::one(), |acc, m| acc.lcm(m));
        GrowthIndex {
            products,
            product_list,
            mod_factors: mod_factors.into_iter().collect(),
            coeff_pos: s.coeff.iter().filter(|a| a.is_positive()).cloned().collect(),
            scaled_consts: scaled.into_iter().collect(),
            consts: s.konst.iter().cloned().collect(),
            const_set: s.konst.iter().cloned().collect(),
            slack: max_abs(&s.coeff) * p * lcm,
        }
    }

    fn coeff_ok(&self, b: &BigInt) -> bool {
        self.product_list.iter().any(|v| self.products.contains(&(b + v)))
    }

    fn mod_ok(&self, m: &BigInt) -> bool {
        self.mod_factors.iter().any(|k| !k.is_zero() && (m % k).is_zero() && self.products.contains(&(m / k)))
    }

    fn near_const(&self, q: &BigInt) -> bool {
        let i = self.consts.partition_point(|c| c < q);
        let close = |c: &BigInt| (q - c).abs() <= self.slack;
        self.consts.get(i).is_some_and(close) || (i > 0 && close(&self.consts[i - 1]))
    }

    fn const_ok(&self, d: &BigInt) -> bool {
        if self.const_set.contains(d) {
            return true;
        }
        self.scaled_consts.iter().any(|ac| {
            let e = ac - d;
            e.is_zero()
                || self.coeff_pos.iter().any(|a2| {
                    let (q, r) = e.div_rem(a2);
                    r.is_zero() && self.near_const(&q)
                })
        })
    }

    fn check(&self, g: &Sets) -> Result<()> {
        if let Some(b) = g.coeff.iter().find(|b| !self.coeff_ok(b)) {
            return Err(Error::Assertion(format!("coefficient {b} is outside the growth set")));
        }
        if let Some(d) = g.konst.iter().find(|d| !self.const_ok(d)) {
            return Err(Error::Assertion(format!("constant {d} is outside the growth set")));
        }
        if let Some(m) = g.modulus.iter().find(|m| !self.mod_ok(m)) {
            return Err(Error::Assertion(format!("modulus {m} is outside the growth set")));
        }
        Ok(())
    }
}

/// The growth sets of `β` for modulus `p`, materialized.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GrowthCondition {
    pub coeff_p: BTreeSet<BigInt>,
    pub const_p: BTreeSet<BigInt>,
    /// Raw products; may contain zero and negative values.
    pub mod_p: BTreeSet<BigInt>,
}

impl GrowthCondition {
    /// Whether the metric sets of `gamma` lie inside the growth sets.
    pub fn admits(&self, gamma: &Formula) -> bool {
        let s = metric_sets(gamma);
        s.coeff.is_subset(&self.coeff_p) && s.konst.is_subset(&self.const_p) && s.modulus.is_subset(&self.mod_p)
    }
}

/// Computes the growth sets of `β` exactly.
pub fn growth_condition(beta: &Formula, p: &BigInt) -> GrowthCondition {
    let s = metric_sets(beta);
    let coeff: Vec<&BigInt> = s.coeff.iter().collect();
    let products: BTreeSet<BigInt> = coeff.iter().flat_map(|a| coeff.iter().map(move |b| *a * *b)).collect();
    let coeff_p = products.iter().flat_map(|u| products.iter().map(move |v| u - v)).collect();
    let lcm = s.modulus.iter().fold(BigInt::one(), |acc, m| acc.lcm(m));
    let slack = max_abs(&s.coeff) * p * lcm;
    let mut shifted = BTreeSet::new();
    for c2 in &s.konst {
        let mut c = -slack.clone();
        while c <= slack {
            shifted.insert(c2 + &c);
            c += 1;
        }
    }
    let scaled: BTreeSet<BigInt> = coeff.iter().flat_map(|a| s.konst.iter().map(move |c| *a * c)).collect();
    let subtracted: BTreeSet<BigInt> = coeff.iter().flat_map(|a| shifted.iter().map(move |c| *a * c)).collect();
    let const_p = scaled.iter().flat_map(|u| subtracted.iter().map(move |v| u - v)).collect();
    let ks: BTreeSet<BigInt> = s.modulus.iter().cloned().chain(std::iter::once(p.clone())).collect();
    let kprod: BTreeSet<BigInt> = ks.iter().flat_map(|a| ks.iter().map(move |b| a * b)).collect();
    let mod_p = products.iter().flat_map(|u| kprod.iter().map(move |k| u * k)).collect();
    GrowthCondition { coeff_p, const_p, mod_p }
}

/// One-step growth bounds `(maxP^4, maxConst·16^maxP)` for `∃x: α` or
/// `∃^{(q,p)}x: α` with the given metrics.
pub fn growth_bound_step(m: &crate::MetricSummary) -> (BigInt, BigInt) {
    let max_p = m.max_p();
    let e = max_p.to_u32().expect("maxP fits in 32 bits");
    (max_p.pow(4), m.max_const() * BigInt::from(16).pow(e))
}

/// `lcm{1, …, n} ≤ 4^{n-1}` for `n ≥ 1`.
pub fn nair_holds(n: u32) -> bool {
    let l = (1..=n).fold(BigInt::one(), |acc, k| acc.lcm(&BigInt::from(k)));
    l <= BigInt::from(4).pow(n.saturating_sub(1))
}

/// Checks `maxP(γ) ≤ maxP(φ)^{4^d}` and
/// `maxConst(γ) ≤ 2^{maxP(φ)^{4^d}}·maxConst(φ)` with `d = qd(φ)`.
pub fn check_growth_bounds(phi: &Formula, gamma: &Formula) -> Result<()> {
    let d = qd(phi) as u32;
    let src = metric_sets(phi);
    let (max_p, max_const) = (max_p_of(&src), max_abs(&src.konst));
    let out = metric_sets(gamma);
    let (out_p, out_const) = (max_p_of(&out), max_abs(&out.konst));
    // maxP^{4^d} ≥ 2^{4^d·(bits(maxP)-1)}
    let lower_bits = (BigInt::one() << (2 * d as u64)) * (max_p.bits() - 1);
    let p_ok = BigInt::from(out_p.bits()) <= lower_bits || {
        let exp = 4u64.checked_pow(d).and_then(|v| u32::try_from(v).ok()).expect("small depth");
        out_p <= max_p.pow(exp)
    };
    if !p_ok {
        return Err(Error::Assertion(format!("maxP {out_p} exceeds maxP(φ)^(4^{d}) for maxP(φ) = {max_p}")));
    }
    let e = if BigInt::from(out_const.bits()) <= &lower_bits + BigInt::from(max_const.bits()) - 1 {
        lower_bits
    } else {
        let exp = 4u64.checked_pow(d).and_then(|v| u32::try_from(v).ok()).expect("small depth");
        max_p.pow(exp)
    };
    if !within_pow2_scaled(&out_const, &e, &max_const) {
        return Err(Error::Assertion(format!("maxConst {out_const} exceeds 2^(maxP^(4^{d}))·{max_const}")));
    }
    Ok(())
}

/// Record of one elimination step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QeStep {
    pub var: Var,
    /// `"exists"` or `"modcount(q,p)"`.
    pub quantifier: String,
    pub size_in: u64,
    pub size_out: u64,
}

/// A quantifier-free equivalent of `f`.
pub fn qe_full(f: &Formula) -> Result<Formula> {
    qe_full_with(f, &QeOptions::default()).map(|(g, _)| g)
}

/// [`qe_full`] with explicit budgets, also returning the steps taken.
pub fn qe_full_with(f: &Formula, opts: &QeOptions) -> Result<(Formula, Vec<QeStep>)> {
    let mut steps = Vec::new();
    let mut memo = HashMap::new();
    let out = qe_rec(f, opts, &mut steps, &mut memo)?;
    check_growth_bounds(f, &out)?;
    Ok((out, steps))
}

fn qe_rec(
    f: &Formula,
    opts: &QeOptions,
    steps: &mut Vec<QeStep>,
    memo: &mut HashMap<usize, Formula>,
) -> Result<Formula> {
    if let Some(r) = memo.get(&f.id()) {
        return Ok(r.clone());
    }
    let out = match f.node() {
        Node::Atomic(_) => f.clone(),
        Node::Exists(x, body) => {
            let alpha = qe_rec(body, opts, steps, memo)?;
            let gamma = eliminate_exists_with(*x, &alpha, opts)?;
            finish_step(*x, "exists".into(), &alpha, gamma, opts, steps)
        }
        Node::ModCount { residue, modulus, vars, body } => {
            if vars.len() != 1 || !residue.is_constant() {
                return Err(Error::Precondition(
                    "only unary modulo-counting quantifiers with constant residues can be eliminated directly".into(),
                ));
            }
            let q = residue.constant_part().mod_floor(modulus);
            let alpha = qe_rec(body, opts, steps, memo)?;
            let gamma = eliminate_modcount_unary_with(vars[0], &q, modulus, &alpha, opts)?;
            finish_step(vars[0], format!("modcount({q},{modulus})"), &alpha, gamma, opts, steps)
        }
        Node::AtLeast { .. } | Node::Exactly { .. } => {
            return Err(Error::Precondition("counting quantifiers must be eliminated before quantifier elimination".into()))
        }
        _ => {
            let kids = f.children().into_iter().map(|c| qe_rec(c, opts, steps, memo)).collect::<Result<Vec<_>>>()?;
            f.with_children(kids)
        }
    };
    memo.insert(f.id(), out.clone());
    Ok(out)
}

fn finish_step(x: Var, quantifier: String, alpha: &Formula, gamma: Formula, opts: &QeOptions, steps: &mut Vec<QeStep>) -> Formula {
    let gamma = if opts.fold { simplify(&gamma) } else { gamma };
    steps.push(QeStep { var: x, quantifier, size_in: size(alpha), size_out: size(&gamma) });
    gamma
}

/// Constant folding: ground atoms become `verum` or `falsum`, which are
/// then propagated through the connectives.
pub fn simplify(f: &Formula) -> Formula {
    fn go(f: &Formula, memo: &mut HashMap<usize, Option<bool>>, out: &mut HashMap<usize, Formula>) -> Option<bool> {
        if let Some(v) = memo.get(&f.id()) {
            return *v;
        }
        let v = match f.node() {
            Node::Atomic(a) => a.ground_value(),
            Node::Not(a) => go(a, memo, out).map(|b| !b),
            Node::And(a, b) => match (go(a, memo, out), go(b, memo, out)) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            },
            Node::Or(a, b) => match (go(a, memo, out), go(b, memo, out)) {
                (Some(true), _) | (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            },
            Node::Implies(a, b) => match (go(a, memo, out), go(b, memo, out)) {
                (Some(false), _) | (_, Some(true)) => Some(true),
                (Some(true), Some(false)) => Some(false),
                _ => None,
            },
            Node::Iff(a, b) => match (go(a, memo, out), go(b, memo, out)) {
                (Some(x), Some(y)) => Some(x == y),
                _ => None,
            },
            _ => {
                for c in f.children() {
                    go(c, memo, out);
                }
                None
            }
        };
        memo.insert(f.id(), v);
        v
    }
    fn rebuild(f: &Formula, memo: &HashMap<usize, Option<bool>>, out: &mut HashMap<usize, Formula>) -> Formula {
        match memo.get(&f.id()).copied().flatten() {
            Some(true) => return Formula::verum(),
            Some(false) => return Formula::falsum(),
            None => {}
        }
        if let Some(r) = out.get(&f.id()) {
            return r.clone();
        }
        let known = |g: &Formula| memo.get(&g.id()).copied().flatten();
        let r = match f.node() {
            Node::Atomic(_) => f.clone(),
            Node::And(a, b) if known(a) == Some(true) => rebuild(b, memo, out),
            Node::And(a, b) if known(b) == Some(true) => rebuild(a, memo, out),
            Node::Or(a, b) if known(a) == Some(false) => rebuild(b, memo, out),
            Node::Or(a, b) if known(b) == Some(false) => rebuild(a, memo, out),
            Node::Implies(a, b) if known(a) == Some(true) => rebuild(b, memo, out),
            Node::Implies(a, b) if known(b) == Some(false) => Formula::not(rebuild(a, memo, out)),
            Node::Iff(a, b) if known(a).is_some() || known(b).is_some() => {
                let (fixed, other) = if let Some(v) = known(a) { (v, b) } else { (known(b).expect("one side known"), a) };
                let o = rebuild(other, memo, out);
                if fixed { o } else { Formula::not(o) }
            }
            _ => {
                let kids = f.children().into_iter().map(|c| rebuild(c, memo, out)).collect();
                f.with_children(kids)
            }
        };
        out.insert(f.id(), r.clone());
        r
    }
    let mut memo = HashMap::new();
    let mut out = HashMap::new();
    go(f, &mut memo, &mut out);
    rebuild(f, &memo, &mut out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{eval_qf, Oracle, OracleConfig, Truth};
    use crate::{parse, Assignment};

    fn p(s: &str) -> Formula {
        parse(s).unwrap()
    }

    fn set(xs: &[i64]) -> BTreeSet<BigInt> {
        xs.iter().copied().map(BigInt::from).collect()
    }

    fn closed_value(f: &Formula) -> bool {
        eval_qf(f, &Assignment::new()).unwrap()
    }

    #[test]
    fn substitution_rows() {
        let x = Var::named("x");
        let y = Var::named("y");
        let g = substitute_solution(x, &p("3*x < y"), &2.into(), &Term::var(y).plus_const(&1.into())).unwrap();
        assert_eq!(g.node(), p("3*y + 3 < 2*y").node());
        let g = substitute_solution(x, &p("x == 0 (mod 2)"), &2.into(), &Term::var(y)).unwrap();
        assert_eq!(g.atoms(), vec![Atom::ModEq(Term::var(y), 4.into(), Term::zero())]);
        let g = substitute_solution(x, &p("0 < 5"), &2.into(), &Term::var(y)).unwrap();
        assert_eq!(g.node(), p("0 < 5").node());
    }

    #[test]
    fn exists_examples() {
        let x = Var::named("x");
        for (src, want) in [("2*x < 7 && 3 < 2*x", true), ("x < 0 && 0 < x", false), ("x == 1 (mod 2) && 0 < x && x < 2", true)] {
            let g = eliminate_exists(x, &p(src)).unwrap();
            assert!(!g.all_vars().contains(&x));
            assert_eq!(closed_value(&g), want, "{src}");
        }
    }

    #[test]
    fn fallback_without_order_atoms() {
        let x = Var::named("x");
        let g = eliminate_exists(x, &p("x == 1 (mod 3)")).unwrap();
        assert!(closed_value(&g));
    }

    #[test]
    fn modcount_examples() {
        let x = Var::named("x");
        let beta = p("0 < x && x < 5");
        let two = BigInt::from(2);
        assert!(closed_value(&eliminate_modcount_unary(x, &0.into(), &two, &beta).unwrap()));
        assert!(!closed_value(&eliminate_modcount_unary(x, &1.into(), &two, &beta).unwrap()));
        assert!(!closed_value(&eliminate_modcount_unary(x, &0.into(), &two, &p("0 < x")).unwrap()));
    }

    #[test]
    fn qe_full_examples() {
        let qf = p("x < y || y == 2 (mod 3)");
        assert_eq!(qe_full(&qf).unwrap(), qf);
        assert!(!closed_value(&qe_full(&p("E x : E y : x < y && y < x")).unwrap()));
        let g = qe_full(&p("E[0 % 2] (x) : 0 < x && x < 2*z")).unwrap();
        let z = Var::named("z");
        let a: Assignment = [(z, 3)].into_iter().collect();
        assert!(!eval_qf(&g, &a).unwrap());
        for v in -4..=6 {
            let a: Assignment = [(z, v)].into_iter().collect();
            let count = (1..2 * v).count();
            assert_eq!(eval_qf(&g, &a).unwrap(), count % 2 == 0, "z = {v}");
        }
    }

    #[test]
    fn modcount_agrees_with_oracle() {
        let x = Var::named("x");
        let y = Var::named("y");
        let z = Var::named("z");
        let cases = [
            "y < x && x < z",
            "y < 2*x && x < z && x == y (mod 2)",
            "y < x && 3*x < z + 1",
            "x == y + z (mod 3) && y < x && x < z",
            "x < y || z < x",
        ];
        for src in cases {
            let beta = p(src);
            for (q, m) in [(0, 2), (1, 2), (2, 3)] {
                let phi = Formula::mod_count(Term::constant(q), m.into(), vec![x], beta.clone()).unwrap();
                let gamma = eliminate_modcount_unary(x, &q.into(), &m.into(), &beta).unwrap();
                let mut oracle = Oracle::new(&phi, OracleConfig::default()).unwrap();
                for vy in -4..=4 {
                    for vz in -4..=4 {
                        let a: Assignment = [(y, vy), (z, vz)].into_iter().collect();
                        let want = oracle.eval(&a).unwrap();
                        if want != Truth::Unstable {
                            assert_eq!(Truth::from_bool(eval_qf(&gamma, &a).unwrap()), want, "{src} q={q} p={m} {a}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn growth_sets_of_base() {
        let g = growth_condition(&Formula::falsum(), &BigInt::one());
        assert_eq!(g.coeff_p, set(&[0, 1, -1, 2, -2, 3, -3, 4, -4, 5, -5, 6, -6, 8, -8]));
        assert_eq!(g.mod_p.iter().filter(|m| m.is_positive()).cloned().collect::<BTreeSet<_>>(), set(&[1, 2, 4]));
        let beta = p("x < 3 && x == 1 (mod 2)");
        let c2 = growth_condition(&beta, &2.into()).const_p;
        let c4 = growth_condition(&beta, &4.into()).const_p;
        assert!(c2.is_subset(&c4));
    }

    #[test]
    fn growth_index_matches_materialized_sets() {
        let beta = p("2*x < y + 3 && x == 1 (mod 3)");
        let pp = BigInt::from(2);
        let g = growth_condition(&beta, &pp);
        let idx = GrowthIndex::new(&metric_sets(&beta), &pp);
        for v in -200..=200 {
            let v = BigInt::from(v);
            assert_eq!(idx.coeff_ok(&v), g.coeff_p.contains(&v), "coeff {v}");
            assert_eq!(idx.const_ok(&v), g.const_p.contains(&v), "const {v}");
            if v.is_positive() {
                assert_eq!(idx.mod_ok(&v), g.mod_p.contains(&v), "mod {v}");
            }
        }
    }

    #[test]
    fn one_step_bounds() {
        let m = |mp: i64, mc: i64| crate::MetricSummary {
            coeff_set: set(&[mp]),
            const_set: set(&[mc]),
            mod_set: set(&[1]),
            p_set: set(&[mp]),
            qd: 1,
            size: 1,
        };
        assert_eq!(growth_bound_step(&m(2, 2)), (16.into(), 512.into()));
        assert_eq!(growth_bound_step(&m(3, 1)), (81.into(), 4096.into()));
        let l = (1..=6).fold(BigInt::one(), |acc, k| acc.lcm(&BigInt::from(k)));
        assert_eq!(l, BigInt::from(60));
        assert!((1..=40).all(nair_holds));
    }

    #[test]
    fn budgets_name_the_quantity() {
        let x = Var::named("x");
        let beta = p("x < a && x < b && x < c && x < d && x < e");
        let err = eliminate_modcount_unary(x, &0.into(), &2.into(), &beta).unwrap_err();
        assert!(err.to_string().contains("|T|"), "{err}");
        let beta = p("x < a && b < x && x == 0 (mod 2) && x == 0 (mod 3)");
        let err = eliminate_modcount_unary(x, &0.into(), &3.into(), &beta).unwrap_err();
        assert!(err.to_string().contains("|M|"), "{err}");
    }

    #[test]
    fn simplify_folds_constants() {
        let f = p("(0 < 1 && y < 3) || 2 < 1");
        assert_eq!(simplify(&f), p("y < 3"));
        assert_eq!(simplify(&p("0 < 1 -> 1 < 0")), Formula::falsum());
    }
}
