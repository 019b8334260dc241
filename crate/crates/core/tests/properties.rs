use num_bigint::BigInt;
use proptest::prelude::*;

use presburger_core::counting::eliminate_counting_node;
use presburger_core::decide::{exists_bound, global_d_from, witness_bound_from};
use presburger_core::modcount::residue_tuples;
use presburger_core::oracle::{eval_qf, Oracle, OracleConfig, Truth};
use presburger_core::qe::{eliminate_exists, eliminate_modcount_unary, growth_condition, simplify, substitute_solution};
use presburger_core::{metrics, Error, parse, print, Assignment, Formula, Term, Var};

fn x() -> Var {
    Var::named("px")
}

fn y() -> Var {
    Var::named("py")
}

fn any_var() -> impl Strategy<Value = Var> {
    prop_oneof![Just("px"), Just("py"), Just("pz"), Just("pw")].prop_map(Var::named)
}

fn var_tuple() -> impl Strategy<Value = Vec<Var>> {
    prop::collection::btree_set(any_var(), 1..3).prop_map(|s| s.into_iter().collect())
}

fn any_term() -> impl Strategy<Value = Term> {
    (prop::collection::vec((any_var(), -9i64..=9), 0..3), -60i64..=60)
        .prop_map(|(parts, c)| Term::from_parts(parts.into_iter().map(|(v, a)| (v, BigInt::from(a))), c))
}

fn any_formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        (any_term(), any_term()).prop_map(|(a, b)| Formula::less(a, b)),
        (any_term(), 1u32..20, any_term()).prop_map(|(a, k, b)| Formula::cong(a, k.into(), b)),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::iff(a, b)),
            (any_var(), inner.clone()).prop_map(|(v, b)| Formula::exists(v, b)),
            (any_term(), 2u32..9, var_tuple(), inner.clone())
                .prop_map(|(t, p, vs, b)| Formula::mod_count(t, p.into(), vs, b).unwrap()),
            (1u32..40, var_tuple(), inner.clone()).prop_map(|(c, vs, b)| Formula::at_least(c.into(), vs, b).unwrap()),
            (1u32..40, var_tuple(), inner).prop_map(|(c, vs, b)| Formula::exactly(c.into(), vs, b).unwrap()),
        ]
    })
}

/// Quantifier-free formulas over `px` and `py` with small coefficients.
fn qf_xy() -> impl Strategy<Value = Formula> {
    let term = ((-3i64..=3), (-3i64..=3), (-6i64..=6))
        .prop_map(|(a, b, c)| Term::from_parts([(x(), BigInt::from(a)), (y(), BigInt::from(b))], c));
    let leaf = prop_oneof![
        3 => (term.clone(), term.clone()).prop_map(|(a, b)| Formula::less(a, b)),
        1 => (term.clone(), 2u32..4, term).prop_map(|(a, k, b)| Formula::cong(a, k.into(), b)),
    ];
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::or(a, b)),
        ]
    })
}

fn at(vals: &[(Var, i64)]) -> Assignment {
    let mut a = Assignment::new();
    for (v, n) in vals {
        a.set(*v, *n);
    }
    a
}

fn oracle(f: &Formula, a: &Assignment) -> Truth {
    Oracle::new(f, OracleConfig::default()).unwrap().eval(a).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_then_parse_is_identity(f in any_formula()) {
        let text = print(&f);
        prop_assert_eq!(parse(&text).unwrap(), f, "{}", text);
    }

    #[test]
    fn printing_is_deterministic(f in any_formula()) {
        prop_assert_eq!(print(&f), print(&f.clone()));
    }

    #[test]
    fn residue_tuples_hit_their_target(p in 2u64..=5, d in 0u64..5) {
        prop_assume!(d < p);
        let ts = residue_tuples(&p.into(), &d.into()).unwrap();
        prop_assert_eq!(ts.len() as u64, p.pow(p as u32 - 2));
        for t in &ts {
            prop_assert_eq!(t.weighted_sum(p), d);
            prop_assert!(t.entries.iter().all(|e| *e < p));
        }
    }

    #[test]
    fn exists_bound_grows_with_both_arguments(a in 6u32..9, b in 1u32..50) {
        let base = exists_bound(&a.into(), &b.into()).unwrap().log10();
        prop_assert!(exists_bound(&a.into(), &(b + 1).into()).unwrap().log10() > base);
        prop_assert!(exists_bound(&(a + 1).into(), &b.into()).unwrap().log10() > base);
    }

    #[test]
    fn witness_bounds_are_monotone(p in 2u32..6, c in 1u32..100, d in 1u32..3, n in 1u32..10, l in 0u64..4) {
        let k = BigInt::from(2);
        let at = |p: u32, c: u32, d: u32, n: u32| {
            witness_bound_from(&p.into(), &c.into(), d, &n.into(), l, &k).log10()
        };
        let base = at(p, c, d, n);
        prop_assert!(at(p + 1, c, d, n) > base);
        prop_assert!(at(p, c + 1, d, n) > base);
        prop_assert!(at(p, c, d + 1, n) > base);
        prop_assert!(at(p, c, d, n + 1) > base);
        let g = global_d_from(&p.into(), &c.into(), d, &k).log10();
        prop_assert!(global_d_from(&p.into(), &(c + 1).into(), d, &k).log10() > g);
    }

    #[test]
    fn substitution_agrees_with_division(beta in qf_xy(), a in 1i64..4, c in -4i64..=4, yv in -10i64..=10) {
        let t = Term::from_parts([(y(), BigInt::from(1))], c);
        let sub = substitute_solution(x(), &beta, &a.into(), &t).unwrap();
        prop_assert!(!sub.free_vars().contains(&x()));
        let num = yv + c;
        if num % a == 0 {
            let lhs = eval_qf(&sub, &at(&[(y(), yv)]));
            prop_assert!(lhs.is_ok(), "{} gave {} and {:?}", print(&beta), print(&sub), lhs);
            let lhs = lhs.unwrap();
            let rhs = eval_qf(&beta, &at(&[(x(), num / a), (y(), yv)])).unwrap();
            prop_assert_eq!(lhs, rhs, "{} vs {}", print(&beta), print(&sub));
        }
    }

    #[test]
    fn folding_preserves_truth(beta in qf_xy(), xv in -6i64..=6, yv in -6i64..=6) {
        let a = at(&[(x(), xv), (y(), yv)]);
        prop_assert_eq!(eval_qf(&simplify(&beta), &a).unwrap(), eval_qf(&beta, &a).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn existential_elimination_is_sound(beta in qf_xy(), yv in -6i64..=6) {
        let gamma = eliminate_exists(x(), &beta).unwrap();
        prop_assert!(!gamma.free_vars().contains(&x()));
        prop_assert!(growth_condition(&beta, &BigInt::from(1)).admits(&gamma));
        let a = at(&[(y(), yv)]);
        let want = oracle(&Formula::exists(x(), beta.clone()), &a);
        prop_assume!(want != Truth::Unstable);
        let got = eval_qf(&gamma, &a);
        prop_assert!(got.is_ok(), "{} gave {} and {:?}", print(&beta), print(&gamma), got);
        prop_assert_eq!(Truth::from_bool(got.unwrap()), want, "{}", print(&beta));
    }

    #[test]
    fn unary_modcount_elimination_is_sound(beta in qf_xy(), lo in -5i64..0, width in 1i64..8, q in 0u32..3, p in 2u32..4, yv in -5i64..=5) {
        prop_assume!(q < p);
        let guard = Formula::and(
            Formula::less(Term::constant(lo), Term::var(x())),
            Formula::less(Term::var(x()), Term::constant(lo + width)),
        );
        let body = Formula::and(guard, beta);
        let gamma = match eliminate_modcount_unary(x(), &q.into(), &p.into(), &body) {
            Err(Error::Resource(_)) => return Err(TestCaseError::reject("over budget")),
            r => r.unwrap(),
        };
        prop_assert!(!gamma.free_vars().contains(&x()));
        let a = at(&[(y(), yv)]);
        let f = Formula::mod_count(Term::constant(q), p.into(), vec![x()], body).unwrap();
        let want = oracle(&f, &a);
        prop_assume!(want != Truth::Unstable);
        prop_assert_eq!(Truth::from_bool(eval_qf(&gamma, &a).unwrap()), want);
    }

    #[test]
    fn counting_elimination_preserves_truth_and_sets(beta in qf_xy(), lo in -4i64..0, width in 1i64..7, c in 1u32..5, exact in any::<bool>(), yv in -4i64..=4) {
        let guard = Formula::and(
            Formula::less(Term::constant(lo), Term::var(x())),
            Formula::less(Term::var(x()), Term::constant(lo + width)),
        );
        let body = Formula::and(guard, beta);
        let f = if exact {
            Formula::exactly(c.into(), vec![x()], body).unwrap()
        } else {
            Formula::at_least(c.into(), vec![x()], body).unwrap()
        };
        let g = eliminate_counting_node(&f).unwrap();
        prop_assert!(metrics(&g).sets_within(&metrics(&f)));
        let a = at(&[(y(), yv)]);
        let want = oracle(&f, &a);
        prop_assume!(want != Truth::Unstable);
        let got = oracle(&g, &a);
        prop_assume!(got != Truth::Unstable);
        prop_assert_eq!(got, want);
    }
}
