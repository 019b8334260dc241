//! Atoms and formulas.
//!
//! Formulas are immutable trees with shared (`Arc`) children, so large
//! constructions may reuse a subformula without copying it. Every traversal
//! that aggregates over a formula memoizes by node identity to stay linear
//! in the number of distinct nodes.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::term::Term;
use crate::var::Var;
use crate::{Error, Result};

/// An atomic formula.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Atom {
    /// `lhs < rhs`.
    Less(Term, Term),
    /// `lhs ≡_modulus rhs`, modulus ≥ 1.
    ModEq(Term, BigInt, Term),
}

/// An atom written relative to a distinguished variable `x`:
/// `a*x < t`, `t < a*x` or `a*x ≡_k t`, with `a ≥ 0` and `t` free of `x`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Separated {
    Below { a: BigInt, t: Term },
    Above { a: BigInt, t: Term },
    Cong { a: BigInt, k: BigInt, t: Term },
}

impl Separated {
    /// The coefficient of `x`.
    pub fn coeff(&self) -> &BigInt {
        match self {
            Separated::Below { a, .. } | Separated::Above { a, .. } | Separated::Cong { a, .. } => a,
        }
    }

    /// Back to an ordinary atom.
    pub fn to_atom(&self, x: Var) -> Atom {
        match self {
            Separated::Below { a, t } => Atom::Less(Term::monomial(a.clone(), x), t.clone()),
            Separated::Above { a, t } => Atom::Less(t.clone(), Term::monomial(a.clone(), x)),
            Separated::Cong { a, k, t } => Atom::ModEq(Term::monomial(a.clone(), x), k.clone(), t.clone()),
        }
    }
}

impl Atom {
    /// `lhs < rhs`.
    pub fn less(lhs: Term, rhs: Term) -> Atom {
        Atom::Less(lhs, rhs)
    }

    /// `lhs ≡_k rhs`; fails when `k < 1`.
    pub fn mod_eq(lhs: Term, k: BigInt, rhs: Term) -> Result<Atom> {
        if k < BigInt::one() {
            return Err(Error::Validation(format!("modulus {k} of a congruence must be at least 1")));
        }
        Ok(Atom::ModEq(lhs, k, rhs))
    }

    /// The normal form of `lhs - rhs`.
    pub fn difference(&self) -> Term {
        match self {
            Atom::Less(l, r) | Atom::ModEq(l, _, r) => l - r,
        }
    }

    /// Variables occurring in the atom.
    pub fn vars(&self) -> BTreeSet<Var> {
        self.difference().vars().collect()
    }

    /// Separated form with respect to `x`.
    pub fn separate(&self, x: Var) -> Separated {
        match self {
            Atom::Less(l, r) => {
                // l < r  iff  0 < d with d = r - l = a*x + rest
                let d = r - l;
                let a = d.coeff(x);
                let rest = d.without(x);
                if a.is_negative() {
                    Separated::Below { a: -a, t: rest }
                } else {
                    Separated::Above { a, t: -&rest }
                }
            }
            Atom::ModEq(l, k, r) => {
                // l ≡ r  iff  a*x + rest ≡ 0
                let d = l - r;
                let a = d.coeff(x);
                let rest = d.without(x);
                if a.is_negative() {
                    Separated::Cong { a: -a, k: k.clone(), t: rest }
                } else {
                    Separated::Cong { a, k: k.clone(), t: -&rest }
                }
            }
        }
    }

    /// Equivalent atom of the form `a*x < t`, `t < a*x` or `a*x ≡_k t`
    /// with `a ≥ 0` and `t` free of `x`.
    pub fn x_separate(&self, x: Var) -> Atom {
        self.separate(x).to_atom(x)
    }

    /// Equivalent atom with a pure constant on one side and a constant-free
    /// term on the other.
    pub fn constant_separate(&self) -> Atom {
        match self {
            Atom::Less(l, r) => {
                let d = r - l;
                let c = d.constant_part().clone();
                Atom::Less(Term::constant(-c), d.linear_part())
            }
            Atom::ModEq(l, k, r) => {
                let d = l - r;
                let c = d.constant_part().clone();
                Atom::ModEq(d.linear_part(), k.clone(), Term::constant(-c))
            }
        }
    }

    /// Truth value when the atom has no variables.
    pub fn ground_value(&self) -> Option<bool> {
        let d = self.difference();
        if !d.is_constant() {
            return None;
        }
        let c = d.constant_part();
        Some(match self {
            Atom::Less(..) => c.is_negative(),
            Atom::ModEq(_, k, _) => (c % k).is_zero(),
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Less(l, r) => write!(f, "{l} < {r}"),
            Atom::ModEq(l, k, r) => write!(f, "{l} == {r} (mod {k})"),
        }
    }
}

/// Formula node.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Node {
    Atomic(Atom),
    Not(Formula),
    And(Formula, Formula),
    Or(Formula, Formula),
    Implies(Formula, Formula),
    Iff(Formula, Formula),
    Exists(Var, Formula),
    /// `∃^{(residue, modulus)} vars: body`, modulus ≥ 2.
    ModCount { residue: Term, modulus: BigInt, vars: Vec<Var>, body: Formula },
    /// `∃^{≥threshold} vars: body`, threshold ≥ 1.
    AtLeast { threshold: BigInt, vars: Vec<Var>, body: Formula },
    /// `∃^{=count} vars: body`, count ≥ 1.
    Exactly { count: BigInt, vars: Vec<Var>, body: Formula },
}

/// A formula: a shared pointer to an immutable node.
#[derive(Clone)]
pub struct Formula(Arc<Node>);

impl PartialEq for Formula {
    fn eq(&self, other: &Formula) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl Eq for Formula {}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&*self.0, f)
    }
}

fn check_vars(vars: &[Var]) -> Result<()> {
    if vars.is_empty() {
        return Err(Error::Validation("quantified variable list is empty".into()));
    }
    let mut seen = HashSet::new();
    for v in vars {
        if !seen.insert(*v) {
            return Err(Error::Validation(format!("variable {v} is quantified twice in one list")));
        }
    }
    Ok(())
}

impl Formula {
    fn mk(node: Node) -> Formula {
        Formula(Arc::new(node))
    }

    /// The node at the root.
    pub fn node(&self) -> &Node {
        &self.0
    }

    /// Identity of the root node, stable while the formula is alive.
    pub fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    /// Whether this node is shared with another formula.
    pub fn is_shared(&self) -> bool {
        Arc::strong_count(&self.0) > 1
    }

    pub fn atom(a: Atom) -> Formula {
        Formula::mk(Node::Atomic(a))
    }

    pub fn less(lhs: Term, rhs: Term) -> Formula {
        Formula::atom(Atom::Less(lhs, rhs))
    }

    /// `lhs ≡_k rhs` for a modulus already known to be positive.
    pub fn cong(lhs: Term, k: BigInt, rhs: Term) -> Formula {
        debug_assert!(k >= BigInt::one());
        Formula::atom(Atom::ModEq(lhs, k, rhs))
    }

    /// The atom `0 < 0`.
    pub fn falsum() -> Formula {
        Formula::less(Term::zero(), Term::zero())
    }

    /// `¬(0 < 0)`.
    pub fn verum() -> Formula {
        Formula::not(Formula::falsum())
    }

    pub fn not(f: Formula) -> Formula {
        Formula::mk(Node::Not(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::mk(Node::And(a, b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::mk(Node::Or(a, b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::mk(Node::Implies(a, b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::mk(Node::Iff(a, b))
    }

    pub fn exists(x: Var, body: Formula) -> Formula {
        Formula::mk(Node::Exists(x, body))
    }

    /// `∃x_1 ... ∃x_n: body` (just `body` for an empty list).
    pub fn exists_all(xs: &[Var], body: Formula) -> Formula {
        xs.iter().rev().fold(body, |acc, x| Formula::exists(*x, acc))
    }

    /// `∀xs: body`, written `¬∃xs ¬body`.
    pub fn forall_all(xs: &[Var], body: Formula) -> Formula {
        Formula::not(Formula::exists_all(xs, Formula::not(body)))
    }

    /// `∀x: body`, written `¬∃x ¬body`.
    pub fn forall(x: Var, body: Formula) -> Formula {
        Formula::forall_all(&[x], body)
    }

    /// `s = t`, written `¬(s < t ∨ t < s)`.
    pub fn equal(s: Term, t: Term) -> Formula {
        Formula::not(Formula::or(Formula::less(s.clone(), t.clone()), Formula::less(t, s)))
    }

    /// `s ≤ t`, written `¬(t < s)`.
    pub fn less_eq(s: Term, t: Term) -> Formula {
        Formula::not(Formula::less(t, s))
    }

    /// Balanced conjunction; `¬(0 < 0)` when empty.
    pub fn conj<I: IntoIterator<Item = Formula>>(items: I) -> Formula {
        balanced(items.into_iter().collect(), Formula::and).unwrap_or_else(Formula::verum)
    }

    /// Balanced disjunction; `0 < 0` when empty.
    pub fn disj<I: IntoIterator<Item = Formula>>(items: I) -> Formula {
        balanced(items.into_iter().collect(), Formula::or).unwrap_or_else(Formula::falsum)
    }

    /// `∃^{(residue, modulus)} vars: body` with validation.
    pub fn mod_count(residue: Term, modulus: BigInt, vars: Vec<Var>, body: Formula) -> Result<Formula> {
        if modulus < BigInt::from(2) {
            return Err(Error::Validation(format!("modulus {modulus} of a counting quantifier must be at least 2")));
        }
        check_vars(&vars)?;
        Ok(Formula::mk(Node::ModCount { residue, modulus, vars, body }))
    }

    /// `∃^{≥threshold} vars: body` with validation.
    pub fn at_least(threshold: BigInt, vars: Vec<Var>, body: Formula) -> Result<Formula> {
        if threshold < BigInt::one() {
            return Err(Error::Validation(format!("threshold {threshold} must be at least 1")));
        }
        check_vars(&vars)?;
        Ok(Formula::mk(Node::AtLeast { threshold, vars, body }))
    }

    /// `∃^{=count} vars: body` with validation.
    pub fn exactly(count: BigInt, vars: Vec<Var>, body: Formula) -> Result<Formula> {
        if count < BigInt::one() {
            return Err(Error::Validation(format!("count {count} must be at least 1")));
        }
        check_vars(&vars)?;
        Ok(Formula::mk(Node::Exactly { count, vars, body }))
    }

    /// Direct children.
    pub fn children(&self) -> Vec<&Formula> {
        match self.node() {
            Node::Atomic(_) => vec![],
            Node::Not(a) | Node::Exists(_, a) => vec![a],
            Node::ModCount { body, .. } | Node::AtLeast { body, .. } | Node::Exactly { body, .. } => vec![body],
            Node::And(a, b) | Node::Or(a, b) | Node::Implies(a, b) | Node::Iff(a, b) => vec![a, b],
        }
    }

    /// Rebuilds a node with new children (same arity and order as `children`).
    pub fn with_children(&self, kids: Vec<Formula>) -> Formula {
        let mut it = kids.into_iter();
        let mut next = || it.next().expect("child count mismatch");
        let node = match self.node() {
            Node::Atomic(a) => Node::Atomic(a.clone()),
            Node::Not(_) => Node::Not(next()),
            Node::And(..) => Node::And(next(), next()),
            Node::Or(..) => Node::Or(next(), next()),
            Node::Implies(..) => Node::Implies(next(), next()),
            Node::Iff(..) => Node::Iff(next(), next()),
            Node::Exists(x, _) => Node::Exists(*x, next()),
            Node::ModCount { residue, modulus, vars, .. } => Node::ModCount {
                residue: residue.clone(),
                modulus: modulus.clone(),
                vars: vars.clone(),
                body: next(),
            },
            Node::AtLeast { threshold, vars, .. } => {
                Node::AtLeast { threshold: threshold.clone(), vars: vars.clone(), body: next() }
            }
            Node::Exactly { count, vars, .. } => {
                Node::Exactly { count: count.clone(), vars: vars.clone(), body: next() }
            }
        };
        Formula::mk(node)
    }

    /// Whether the node is a quantifier of any kind.
    pub fn is_quantifier(&self) -> bool {
        matches!(
            self.node(),
            Node::Exists(..) | Node::ModCount { .. } | Node::AtLeast { .. } | Node::Exactly { .. }
        )
    }

    /// Variables bound at this node (empty for non-quantifiers).
    pub fn bound_here(&self) -> Vec<Var> {
        match self.node() {
            Node::Exists(x, _) => vec![*x],
            Node::ModCount { vars, .. } | Node::AtLeast { vars, .. } | Node::Exactly { vars, .. } => vars.clone(),
            _ => vec![],
        }
    }

    /// Visits each distinct node once, parents before children.
    pub fn visit_unique(&self, mut f: impl FnMut(&Formula)) {
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(n) = stack.pop() {
            if !seen.insert(n.id()) {
                continue;
            }
            f(&n);
            for c in n.children().into_iter().rev() {
                stack.push(c.clone());
            }
        }
    }

    /// Whether any node satisfies the predicate.
    pub fn any_node(&self, mut pred: impl FnMut(&Node) -> bool) -> bool {
        let mut found = false;
        self.visit_unique(|n| {
            if !found && pred(n.node()) {
                found = true;
            }
        });
        found
    }

    /// Whether the formula contains no quantifier.
    pub fn is_quantifier_free(&self) -> bool {
        !self.any_node(|n| {
            matches!(n, Node::Exists(..) | Node::ModCount { .. } | Node::AtLeast { .. } | Node::Exactly { .. })
        })
    }

    /// Every variable occurring anywhere, bound or free.
    pub fn all_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.visit_unique(|n| match n.node() {
            Node::Atomic(a) => out.extend(a.vars()),
            Node::Exists(x, _) => {
                out.insert(*x);
            }
            Node::ModCount { residue, vars, .. } => {
                out.extend(residue.vars());
                out.extend(vars.iter().copied());
            }
            Node::AtLeast { vars, .. } | Node::Exactly { vars, .. } => out.extend(vars.iter().copied()),
            _ => {}
        });
        out
    }

    /// Free variables.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut memo = std::collections::HashMap::new();
        free_vars_memo(self, &mut memo)
    }

    /// Atoms in first-occurrence order (shared nodes visited once).
    pub fn atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        self.visit_unique(|n| {
            if let Node::Atomic(a) = n.node() {
                out.push(a.clone());
            }
        });
        out
    }

    /// Rewrites every atom, keeping the Boolean and quantifier structure.
    /// Shared subformulas are rewritten once.
    pub fn map_atoms(&self, f: &mut dyn FnMut(&Atom) -> Formula) -> Formula {
        let mut memo = std::collections::HashMap::new();
        map_atoms_memo(self, f, &mut memo)
    }
}

fn free_vars_memo(f: &Formula, memo: &mut std::collections::HashMap<usize, BTreeSet<Var>>) -> BTreeSet<Var> {
    if let Some(s) = memo.get(&f.id()) {
        return s.clone();
    }
    let out = match f.node() {
        Node::Atomic(a) => a.vars(),
        Node::Not(a) => free_vars_memo(a, memo),
        Node::And(a, b) | Node::Or(a, b) | Node::Implies(a, b) | Node::Iff(a, b) => {
            let mut s = free_vars_memo(a, memo);
            s.extend(free_vars_memo(b, memo));
            s
        }
        Node::Exists(x, body) => {
            let mut s = free_vars_memo(body, memo);
            s.remove(x);
            s
        }
        Node::ModCount { residue, vars, body, .. } => {
            let mut s = free_vars_memo(body, memo);
            for v in vars {
                s.remove(v);
            }
            s.extend(residue.vars());
            s
        }
        Node::AtLeast { vars, body, .. } | Node::Exactly { vars, body, .. } => {
            let mut s = free_vars_memo(body, memo);
            for v in vars {
                s.remove(v);
            }
            s
        }
    };
    memo.insert(f.id(), out.clone());
    out
}

fn map_atoms_memo(
    f: &Formula,
    g: &mut dyn FnMut(&Atom) -> Formula,
    memo: &mut std::collections::HashMap<usize, Formula>,
) -> Formula {
    if let Some(r) = memo.get(&f.id()) {
        return r.clone();
    }
    let out = match f.node() {
        Node::Atomic(a) => g(a),
        _ => {
            let kids = f.children().into_iter().map(|c| map_atoms_memo(c, g, memo)).collect();
            f.with_children(kids)
        }
    };
    memo.insert(f.id(), out.clone());
    out
}

/// Folds `items` into a tree of logarithmic depth, preserving order.
fn balanced(mut items: Vec<Formula>, op: fn(Formula, Formula) -> Formula) -> Option<Formula> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len() / 2 + 1);
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => op(a, b),
                None => a,
            });
        }
        items = next;
    }
    items.pop()
}

/// Bit length of `|n|` (zero for zero).
pub(crate) fn bit_len(n: &BigInt) -> u64 {
    if n.is_zero() {
        0
    } else {
        n.abs().bits()
    }
}
