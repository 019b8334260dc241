//! Metric sets, quantifier depth, size and block depth.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::formula::{bit_len, Atom, Formula, Node};
use crate::term::Term;
use crate::{Error, Result};

/// The coefficient, constant and modulus sets of a formula together with
/// its quantifier depth and size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MetricSummary {
    pub coeff_set: BTreeSet<BigInt>,
    pub const_set: BTreeSet<BigInt>,
    pub mod_set: BTreeSet<BigInt>,
    pub p_set: BTreeSet<BigInt>,
    pub qd: usize,
    pub size: u64,
}

fn base_set() -> BTreeSet<BigInt> {
    [-2, -1, 0, 1, 2].into_iter().map(BigInt::from).collect()
}

fn max_of(s: &BTreeSet<BigInt>) -> BigInt {
    s.iter().map(|n| n.abs()).max().unwrap_or_else(BigInt::zero)
}

impl MetricSummary {
    /// Largest element of `P`.
    pub fn max_p(&self) -> BigInt {
        max_of(&self.p_set)
    }

    /// Largest absolute constant.
    pub fn max_const(&self) -> BigInt {
        max_of(&self.const_set)
    }

    /// Largest absolute coefficient.
    pub fn max_coeff(&self) -> BigInt {
        max_of(&self.coeff_set)
    }

    /// Largest modulus.
    pub fn max_mod(&self) -> BigInt {
        max_of(&self.mod_set)
    }

    /// Least common multiple of the modulus set.
    pub fn lcm_mod(&self) -> BigInt {
        self.mod_set.iter().fold(BigInt::one(), |acc, m| acc.lcm(m))
    }

    /// Whether every set of `self` is contained in the matching set of `other`.
    pub fn sets_within(&self, other: &MetricSummary) -> bool {
        self.coeff_set.is_subset(&other.coeff_set)
            && self.const_set.is_subset(&other.const_set)
            && self.mod_set.is_subset(&other.mod_set)
    }
}

/// The three metric sets without depth and size.
pub(crate) struct Sets {
    pub coeff: BTreeSet<BigInt>,
    pub konst: BTreeSet<BigInt>,
    pub modulus: BTreeSet<BigInt>,
}

impl Sets {
    fn base() -> Sets {
        Sets { coeff: base_set(), konst: base_set(), modulus: [BigInt::one()].into_iter().collect() }
    }

    fn add_less(&mut self, d: &Term) {
        for (_, a) in d.coeffs() {
            self.coeff.insert(a.clone());
            self.coeff.insert(-a);
        }
        let c = d.constant_part();
        self.konst.insert(c.clone());
        self.konst.insert(-c);
    }

    pub(crate) fn add_atom(&mut self, a: &Atom) {
        match a {
            Atom::Less(..) => self.add_less(&a.difference()),
            Atom::ModEq(_, k, _) => {
                self.modulus.insert(k.clone());
            }
        }
    }
}

pub(crate) fn metric_sets(f: &Formula) -> Sets {
    let mut s = Sets::base();
    f.visit_unique(|n| match n.node() {
        Node::Atomic(a) => s.add_atom(a),
        Node::ModCount { modulus, .. } => {
            s.modulus.insert(modulus.clone());
        }
        _ => {}
    });
    s
}

/// Metric summary of a formula.
pub fn metrics(f: &Formula) -> MetricSummary {
    let s = metric_sets(f);
    let p_set = s.coeff.union(&s.modulus).cloned().collect();
    MetricSummary { coeff_set: s.coeff, const_set: s.konst, mod_set: s.modulus, p_set, qd: qd(f), size: size(f) }
}

/// Quantifier depth; a tuple quantifier over `ℓ` variables adds `ℓ`.
pub fn qd(f: &Formula) -> usize {
    fn go(f: &Formula, memo: &mut HashMap<usize, usize>) -> usize {
        if let Some(&d) = memo.get(&f.id()) {
            return d;
        }
        let d = match f.node() {
            Node::Atomic(_) => 0,
            Node::Exists(_, b) => 1 + go(b, memo),
            Node::ModCount { vars, body, .. } | Node::AtLeast { vars, body, .. } | Node::Exactly { vars, body, .. } => {
                vars.len() + go(body, memo)
            }
            _ => f.children().into_iter().map(|c| go(c, memo)).max().unwrap_or(0),
        };
        memo.insert(f.id(), d);
        d
    }
    go(f, &mut HashMap::new())
}

fn literal(n: &BigInt) -> u64 {
    1 + bit_len(n)
}

/// Size of a term: each variable occurrence counts one plus its coefficient
/// literal; the constant counts as a literal unless it is a zero summand
/// next to variables.
pub fn term_size(t: &Term) -> u64 {
    let mut s: u64 = t.coeffs().map(|(_, a)| 1 + literal(a)).sum();
    if !t.constant_part().is_zero() || t.is_constant() {
        s += literal(t.constant_part());
    }
    s
}

fn atom_size(a: &Atom) -> u64 {
    match a {
        Atom::Less(l, r) => 1 + term_size(l) + term_size(r),
        Atom::ModEq(l, k, r) => 1 + term_size(l) + literal(k) + term_size(r),
    }
}

/// Tree size: node count plus `1 + bit length` for every integer literal,
/// with each variable occurrence counted once. Shared subformulas count
/// once per occurrence.
pub fn size(f: &Formula) -> u64 {
    fn go(f: &Formula, memo: &mut HashMap<usize, u64>) -> u64 {
        if let Some(&s) = memo.get(&f.id()) {
            return s;
        }
        let own = match f.node() {
            Node::Atomic(a) => atom_size(a),
            Node::Exists(..) => 2,
            Node::ModCount { residue, modulus, vars, .. } => {
                1 + vars.len() as u64 + term_size(residue) + literal(modulus)
            }
            Node::AtLeast { threshold: c, vars, .. } | Node::Exactly { count: c, vars, .. } => {
                1 + vars.len() as u64 + literal(c)
            }
            _ => 1,
        };
        let s = f.children().into_iter().fold(own, |acc, c| acc.saturating_add(go(c, memo)));
        memo.insert(f.id(), s);
        s
    }
    go(f, &mut HashMap::new())
}

/// `⌈log₂ c⌉` for `c ≥ 1`.
pub fn ceil_log2(c: &BigInt) -> u64 {
    if *c <= BigInt::one() {
        0
    } else {
        (c - 1u32).bits()
    }
}

/// Block depth of a formula without modulo-counting quantifiers.
///
/// Atoms have depth 0. A Boolean combination, or a block of `∃` in front
/// of one, has depth one more than its deepest non-Boolean constituent.
/// `∃^{≥c}` and `∃^{=c}` add `2⌈log₂ c⌉ + 2` to the depth of their body.
pub fn block_depth(f: &Formula) -> Result<u64> {
    if f.any_node(|n| matches!(n, Node::ModCount { .. })) {
        return Err(Error::Precondition("block depth is undefined in the presence of modulo-counting quantifiers".into()));
    }
    let mut memo = HashMap::new();
    Ok(bd(f, &mut memo))
}

fn is_boolean(f: &Formula) -> bool {
    matches!(f.node(), Node::Not(_) | Node::And(..) | Node::Or(..) | Node::Implies(..) | Node::Iff(..))
}

/// Largest block depth among the maximal non-Boolean subformulas.
fn leaf_max(f: &Formula, memo: &mut HashMap<usize, u64>) -> u64 {
    if is_boolean(f) {
        f.children().into_iter().map(|c| leaf_max(c, memo)).max().unwrap_or(0)
    } else {
        bd(f, memo)
    }
}

fn bd(f: &Formula, memo: &mut HashMap<usize, u64>) -> u64 {
    if let Some(&d) = memo.get(&f.id()) {
        return d;
    }
    let d = match f.node() {
        Node::Atomic(_) => 0,
        Node::Exists(..) => {
            let mut body = f;
            while let Node::Exists(_, b) = body.node() {
                body = b;
            }
            1 + leaf_max(body, memo)
        }
        Node::AtLeast { threshold: c, body, .. } | Node::Exactly { count: c, body, .. } => {
            2 * ceil_log2(c) + 2 + leaf_max(body, memo)
        }
        Node::ModCount { .. } => unreachable!("rejected by block_depth"),
        _ => 1 + leaf_max(f, memo),
    };
    memo.insert(f.id(), d);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::var::Var;

    fn set(xs: &[i64]) -> BTreeSet<BigInt> {
        xs.iter().copied().map(BigInt::from).collect()
    }

    #[test]
    fn falsum_has_base_sets() {
        let m = metrics(&Formula::falsum());
        assert_eq!(m.coeff_set, set(&[0, 1, -1, 2, -2]));
        assert_eq!(m.const_set, set(&[0, 1, -1, 2, -2]));
        assert_eq!(m.mod_set, set(&[1]));
        assert_eq!(m.qd, 0);
    }

    #[test]
    fn tuple_quantifier_depth() {
        let (a, b) = (Var::named("mq_a"), Var::named("mq_b"));
        let f = Formula::mod_count(Term::zero(), 2.into(), vec![a, b], Formula::less(Term::zero(), Term::var(a)))
            .unwrap();
        assert_eq!(qd(&f), 2);
    }

    #[test]
    fn block_depths() {
        let x = Var::named("mb_x");
        let atom = Formula::less(Term::zero(), Term::var(x));
        assert_eq!(block_depth(&atom).unwrap(), 0);
        assert_eq!(block_depth(&Formula::exists(x, atom.clone())).unwrap(), 1);
        let c = Formula::at_least(2.into(), vec![x], atom.clone()).unwrap();
        assert_eq!(block_depth(&c).unwrap(), 4);
        let m = Formula::mod_count(Term::zero(), 2.into(), vec![x], atom).unwrap();
        assert!(block_depth(&m).is_err());
    }

    #[test]
    fn ceil_log2_values() {
        let got: Vec<u64> = (1..=9).map(|c| ceil_log2(&BigInt::from(c))).collect();
        assert_eq!(got, vec![0, 1, 2, 2, 3, 3, 3, 3, 4]);
    }
}
