//! Differential testing of every pass against the bounded oracle.
//!
//! Each instance is a random formula with free variables. The reference
//! verdict comes from the oracle on the formula itself; each stage output is
//! then evaluated under the same assignments:
//!
//! * `counting`: the counting pass output, with every fresh tuple
//!   relativized to the witness box of the quantifier it replaced;
//! * `modcount`: the modulo-counting pass output, with boxed variables
//!   restricted to their boxes;
//! * `qe`: the quantifier-free result of full elimination, evaluated exactly.
//!
//! Accounting is per evaluation (instance × assignment):
//! `agreements + violations + unchecked + (unstable_skipped + resource_skipped) · assignments_per_instance`
//! equals `instances · assignments_per_instance`.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::counting::{eliminate_all_counting_traced, relativized_domains, witness_box};
use crate::modcount::{eliminate_all_modcount_traced, ModcountOptions};
use crate::oracle::{eval_qf, Oracle, OracleConfig, Truth};
use crate::qe::{qe_full_with, QeOptions};
use crate::{print, Assignment, Error, Formula, Node, Result, Term, Var};

/// Generator ceilings and harness parameters.
#[derive(Clone, Debug, Serialize)]
pub struct DiffTestConfig {
    pub seed: u64,
    pub count: usize,
    /// Largest quantifier nesting depth.
    pub depth: usize,
    /// Largest absolute coefficient.
    pub coeff_max: u32,
    /// Largest congruence modulus.
    pub mod_max: u32,
    /// Assignments are drawn from `[-range, range]`.
    pub range: i64,
    pub assignments: usize,
    /// Largest modulus of a modulo-counting quantifier.
    pub p_max: u32,
    /// Largest counting threshold.
    pub c_max: u32,
    /// Largest tuple arity.
    pub arity_max: usize,
    /// Probability that a quantified body is guarded by interval constraints.
    pub guard_probability: f64,
    /// Window bound of the oracle.
    pub oracle_bound: u64,
    /// Oracle step cap per evaluation of a stage output.
    pub stage_max_steps: u64,
    /// Oracle step cap per stage across all assignments of one instance.
    pub stage_instance_steps: u64,
    pub qe: QeOptions,
}

impl DiffTestConfig {
    pub fn new(seed: u64, count: usize, depth: usize, coeff_max: u32, mod_max: u32, range: i64) -> DiffTestConfig {
        DiffTestConfig {
            seed,
            count,
            depth,
            coeff_max,
            mod_max,
            range,
            assignments: 20,
            p_max: 3,
            c_max: 5,
            arity_max: 2,
            guard_probability: 0.8,
            oracle_bound: 16,
            stage_max_steps: 1_000_000,
            stage_instance_steps: 3_000_000,
            qe: QeOptions { max_nodes: 200_000, ..QeOptions::default() },
        }
    }
}

/// A stage output that disagrees with the reference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub instance: usize,
    pub formula: String,
    pub assignment: String,
    pub stage: String,
    pub expected: String,
    pub got: String,
}

/// A stage that did not run on an instance, with the reason.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Skip {
    pub instance: usize,
    pub stage: String,
    pub reason: String,
}

/// A pass that raised an internal check instead of producing output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StageFailure {
    pub instance: usize,
    pub formula: String,
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DiffTestReport {
    pub seed: u64,
    pub instances: usize,
    pub assignments_per_instance: usize,
    pub agreements: u64,
    /// Instances whose reference verdict was unstable on some assignment.
    pub unstable_skipped: u64,
    /// Instances whose reference evaluation hit a resource cap.
    pub resource_skipped: u64,
    /// Evaluations where no stage produced a definite verdict.
    pub unchecked: u64,
    pub violations: Vec<Violation>,
    pub failures: Vec<StageFailure>,
    pub skipped: Vec<Skip>,
    /// Definite comparisons per stage.
    pub stage_checks: BTreeMap<String, u64>,
    /// Unstable stage verdicts per stage.
    pub stage_unstable: BTreeMap<String, u64>,
    /// Successful full eliminations, each with its growth bounds verified.
    pub qe_runs: u64,
    /// Elimination steps across all successful full eliminations.
    pub qe_steps: u64,
}

impl DiffTestReport {
    /// Fraction of instances skipped for an unstable reference.
    pub fn unstable_rate(&self) -> f64 {
        if self.instances == 0 {
            0.0
        } else {
            self.unstable_skipped as f64 / self.instances as f64
        }
    }

    /// Total evaluations accounted for.
    pub fn accounted(&self) -> u64 {
        self.agreements
            + self.violations.len() as u64
            + self.unchecked
            + (self.unstable_skipped + self.resource_skipped) * self.assignments_per_instance as u64
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.failures.is_empty()
    }
}

/// Runs the harness with default ceilings; fails when a parameter is 0
/// (except `count`, which may be 0 for an empty report).
pub fn run_difftest(seed: u64, count: usize, depth: usize, coeff_max: u32, mod_max: u32, range: i64) -> Result<DiffTestReport> {
    run_difftest_with(&DiffTestConfig::new(seed, count, depth, coeff_max, mod_max, range))
}

pub fn run_difftest_with(cfg: &DiffTestConfig) -> Result<DiffTestReport> {
    if cfg.depth == 0 || cfg.coeff_max == 0 || cfg.mod_max == 0 || cfg.range < 1 || cfg.assignments == 0 {
        return Err(Error::Precondition("difftest parameters must be at least 1".into()));
    }
    if cfg.p_max < 2 || cfg.c_max == 0 || cfg.arity_max == 0 {
        return Err(Error::Precondition("generator ceilings must admit at least one quantifier".into()));
    }
    let mut report = DiffTestReport {
        seed: cfg.seed,
        instances: cfg.count,
        assignments_per_instance: cfg.assignments,
        ..DiffTestReport::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for i in 0..cfg.count {
        let sub = rng.gen::<u64>();
        run_instance(i, sub, cfg, &mut report);
    }
    Ok(report)
}

/// The random formula of instance `sub`, with its free variables.
pub fn generate(sub: u64, cfg: &DiffTestConfig) -> (Formula, Vec<Var>) {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(sub), cfg, next: 0 };
    let nfree = g.rng.gen_range(1..=2);
    let free: Vec<Var> = ["u", "v"][..nfree].iter().map(|n| Var::named(n)).collect();
    let depth = g.rng.gen_range(1..=cfg.depth);
    let f = g.formula(depth, &free, true);
    let used = f.free_vars();
    (f, free.into_iter().filter(|v| used.contains(v)).collect())
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    cfg: &'a DiffTestConfig,
    next: usize,
}

impl Gen<'_> {
    fn fresh(&mut self) -> Var {
        self.next += 1;
        Var::named(&format!("y{}", self.next))
    }

    fn coeff(&mut self) -> i64 {
        let a = self.rng.gen_range(1..=self.cfg.coeff_max as i64);
        if self.rng.gen_bool(0.5) {
            a
        } else {
            -a
        }
    }

    /// An atom over `scope` mentioning `must` when given.
    fn atom(&mut self, scope: &[Var], must: Option<Var>) -> Formula {
        let first = must.unwrap_or_else(|| scope[self.rng.gen_range(0..scope.len())]);
        let others: Vec<Var> = scope.iter().copied().filter(|v| *v != first).collect();
        let second = if !others.is_empty() && self.rng.gen_bool(0.6) {
            Some(others[self.rng.gen_range(0..others.len())])
        } else {
            None
        };
        let c = self.rng.gen_range(-5..=5);
        let lhs = Term::monomial(self.coeff(), first);
        let rhs = match second {
            Some(w) => Term::from_parts([(w, BigInt::from(self.coeff()))], c),
            None => Term::constant(c),
        };
        if self.cfg.mod_max >= 2 && self.rng.gen_bool(0.35) {
            let k = self.rng.gen_range(2..=self.cfg.mod_max);
            Formula::cong(lhs, BigInt::from(k), rhs)
        } else if self.rng.gen_bool(0.5) {
            Formula::less(lhs, rhs)
        } else {
            Formula::less(rhs, lhs)
        }
    }

    /// A Boolean combination of one to three atoms.
    fn qf(&mut self, scope: &[Var], must: Option<Var>) -> Formula {
        let n = self.rng.gen_range(1..=3);
        let mut f = self.atom(scope, must);
        for _ in 1..n {
            let a = self.atom(scope, None);
            let a = if self.rng.gen_bool(0.25) { Formula::not(a) } else { a };
            f = if self.rng.gen_bool(0.6) { Formula::and(f, a) } else { Formula::or(f, a) };
        }
        f
    }

    fn formula(&mut self, depth: usize, scope: &[Var], top: bool) -> Formula {
        if depth == 0 {
            return self.qf(scope, None);
        }
        let q = self.quantified(depth, scope);
        if top || self.rng.gen_bool(0.5) {
            return q;
        }
        let side = self.qf(scope, None);
        match self.rng.gen_range(0..3) {
            0 => Formula::and(q, side),
            1 => Formula::or(side, q),
            _ => Formula::not(q),
        }
    }

    fn quantified(&mut self, depth: usize, scope: &[Var]) -> Formula {
        let roll = self.rng.gen_range(0..100);
        let arity = if roll < 70 && self.cfg.arity_max >= 2 && self.rng.gen_bool(0.3) { 2 } else { 1 };
        let vars: Vec<Var> = (0..arity).map(|_| self.fresh()).collect();
        let mut inner_scope = scope.to_vec();
        inner_scope.extend(&vars);
        let body = self.body(depth, &inner_scope, &vars);
        let p = BigInt::from(self.rng.gen_range(2..=self.cfg.p_max));
        let c = BigInt::from(self.rng.gen_range(1..=self.cfg.c_max));
        let built = match roll {
            0..=24 => Formula::at_least(c, vars, body),
            25..=44 => Formula::exactly(c, vars, body),
            45..=69 => {
                let residue = if self.rng.gen_bool(0.5) && !scope.is_empty() {
                    let w = scope[self.rng.gen_range(0..scope.len())];
                    Term::from_parts([(w, BigInt::from(1))], self.rng.gen_range(-2..=2))
                } else {
                    Term::constant(self.rng.gen_range(0..3))
                };
                Formula::mod_count(residue, p, vars, body)
            }
            70..=84 => Formula::mod_count(Term::constant(self.rng.gen_range(0..3)), p, vars, body),
            _ => Ok(Formula::exists(vars[0], body)),
        };
        built.expect("generated quantifiers are well formed")
    }

    fn body(&mut self, depth: usize, scope: &[Var], vars: &[Var]) -> Formula {
        let mut core = if depth > 1 && self.rng.gen_bool(0.6) {
            self.formula(depth - 1, scope, false)
        } else {
            self.qf(scope, Some(vars[0]))
        };
        for v in &vars[1..] {
            core = Formula::and(core, self.atom(scope, Some(*v)));
        }
        if !self.rng.gen_bool(self.cfg.guard_probability) {
            return core;
        }
        let guards = vars.iter().map(|v| {
            let lo = self.rng.gen_range(-6..=2);
            let hi = lo + self.rng.gen_range(2..=8);
            Formula::and(Formula::less(Term::constant(lo), Term::var(*v)), Formula::less(Term::var(*v), Term::constant(hi)))
        });
        Formula::conj(guards.collect::<Vec<_>>().into_iter().chain([core]))
    }
}

fn truth_text(t: Truth) -> &'static str {
    match t {
        Truth::True => "true",
        Truth::False => "false",
        Truth::Unstable => "unstable",
    }
}

fn assignment_text(a: &Assignment) -> String {
    let mut parts: Vec<String> = a.iter().map(|(v, n)| format!("{}={n}", v.name())).collect();
    parts.sort();
    parts.join(", ")
}

/// Witness boxes of every guarded quantifier in `f`, per bound variable.
fn boxed_domains(f: &Formula) -> HashMap<Var, (i64, i64)> {
    let mut out = HashMap::new();
    f.visit_unique(|g| {
        let (vars, body) = match g.node() {
            Node::Exists(x, body) => (vec![*x], body),
            Node::ModCount { vars, body, .. } | Node::AtLeast { vars, body, .. } | Node::Exactly { vars, body, .. } => {
                (vars.clone(), body)
            }
            _ => return,
        };
        if let Some(b) = witness_box(body, &vars) {
            for (v, (lo, hi)) in vars.iter().zip(b) {
                out.insert(*v, (lo, hi + 1));
            }
        }
    });
    out
}

enum Stage {
    Oracle(Box<Oracle>),
    Qf(Formula),
}

fn classify(instance: usize, formula: &str, stage: &str, e: Error, report: &mut DiffTestReport) {
    match e {
        Error::Resource(reason) => report.skipped.push(Skip { instance, stage: stage.into(), reason }),
        other => report.failures.push(StageFailure {
            instance,
            formula: formula.into(),
            stage: stage.into(),
            message: other.to_string(),
        }),
    }
}

fn run_instance(i: usize, sub: u64, cfg: &DiffTestConfig, report: &mut DiffTestReport) {
    let (f, free) = generate(sub, cfg);
    let text = print(&f);
    let mut rng = ChaCha8Rng::seed_from_u64(sub ^ 0x9e37_79b9_7f4a_7c15);
    let assignments: Vec<Assignment> = (0..cfg.assignments)
        .map(|_| {
            let mut a = Assignment::new();
            for v in &free {
                a.set(*v, rng.gen_range(-cfg.range..=cfg.range));
            }
            a
        })
        .collect();

    let base = OracleConfig { bound: cfg.oracle_bound, ..OracleConfig::default() };
    let mut reference = Vec::with_capacity(assignments.len());
    let mut oracle = match Oracle::new(&f, base.clone()) {
        Ok(o) => o,
        Err(e) => {
            report.resource_skipped += 1;
            classify(i, &text, "reference", e, report);
            return;
        }
    };
    for a in &assignments {
        match oracle.eval(a) {
            Ok(Truth::Unstable) => {
                report.unstable_skipped += 1;
                return;
            }
            Ok(t) => reference.push(t),
            Err(e) => {
                report.resource_skipped += 1;
                classify(i, &text, "reference", e, report);
                return;
            }
        }
    }

    let boxes = boxed_domains(&f);
    let base = OracleConfig { max_steps: cfg.stage_max_steps, ..base };
    let mut stages: Vec<(&'static str, Option<Stage>)> = Vec::new();

    let counted = match eliminate_all_counting_traced(&f) {
        Ok(r) => Some(r),
        Err(e) => {
            classify(i, &text, "counting", e, report);
            None
        }
    };
    let mut domains = boxes.clone();
    let mut all_boxed = true;
    if let Some((g, traces)) = &counted {
        for t in traces {
            let bounds: Option<Vec<(i64, i64)>> =
                t.vars.iter().map(|v| boxes.get(v).map(|(lo, hi)| (*lo, hi - 1))).collect();
            match bounds {
                Some(b) => domains.extend(relativized_domains(t, &b)),
                None => all_boxed = false,
            }
        }
        if !traces.is_empty() {
            if all_boxed {
                match Oracle::new(g, OracleConfig { domains: domains.clone(), ..base.clone() }) {
                    Ok(o) => stages.push(("counting", Some(Stage::Oracle(Box::new(o))))),
                    Err(e) => classify(i, &text, "counting", e, report),
                }
            } else {
                report.skipped.push(Skip { instance: i, stage: "counting".into(), reason: "no witness box".into() });
            }
        }
    }

    let modded = counted.as_ref().and_then(|(g, _)| {
        match eliminate_all_modcount_traced(g, &ModcountOptions::default()) {
            Ok((h, mtraces)) => {
                if !mtraces.is_empty() {
                    if all_boxed {
                        match Oracle::new(&h, OracleConfig { domains: domains.clone(), ..base.clone() }) {
                            Ok(o) => stages.push(("modcount", Some(Stage::Oracle(Box::new(o))))),
                            Err(e) => classify(i, &text, "modcount", e, report),
                        }
                    } else {
                        report.skipped.push(Skip {
                            instance: i,
                            stage: "modcount".into(),
                            reason: "no witness box".into(),
                        });
                    }
                }
                Some(h)
            }
            Err(e) => {
                classify(i, &text, "modcount", e, report);
                None
            }
        }
    });

    if let Some(h) = modded {
        match qe_full_with(&h, &cfg.qe) {
            Ok((q, steps)) => {
                report.qe_runs += 1;
                report.qe_steps += steps.len() as u64;
                stages.push(("qe", Some(Stage::Qf(q))));
            }
            Err(e) => classify(i, &text, "qe", e, report),
        }
    }

    let mut spent = vec![0u64; stages.len()];
    for (a, expected) in assignments.iter().zip(reference) {
        let mut checked = false;
        let mut violated = false;
        for ((name, slot), spent) in stages.iter_mut().zip(spent.iter_mut()) {
            let Some(stage) = slot else { continue };
            let got = match stage {
                Stage::Oracle(_) if *spent > cfg.stage_instance_steps => Err(Error::Resource(format!(
                    "oracle enumerated more than {} values across assignments",
                    cfg.stage_instance_steps
                ))),
                Stage::Oracle(o) => {
                    let r = o.eval(a);
                    *spent += o.last_steps();
                    r
                }
                Stage::Qf(q) => eval_qf(q, a).map(Truth::from_bool),
            };
            match got {
                Ok(Truth::Unstable) => *report.stage_unstable.entry((*name).into()).or_default() += 1,
                Ok(got) => {
                    checked = true;
                    *report.stage_checks.entry((*name).into()).or_default() += 1;
                    if got != expected && !violated {
                        violated = true;
                        report.violations.push(Violation {
                            instance: i,
                            formula: text.clone(),
                            assignment: assignment_text(a),
                            stage: (*name).into(),
                            expected: truth_text(expected).into(),
                            got: truth_text(got).into(),
                        });
                    }
                }
                Err(e) => {
                    // a stage that hit a cap once is dropped for the remaining assignments
                    *slot = None;
                    classify(i, &text, name, e, report);
                }
            }
        }
        if violated {
            continue;
        }
        if checked {
            report.agreements += 1;
        } else {
            report.unchecked += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_has_no_violations() {
        let r = run_difftest(1, 10, 1, 3, 3, 8).unwrap();
        assert!(r.violations.is_empty(), "{:#?}", r.violations);
        assert!(r.failures.is_empty(), "{:#?}", r.failures);
        assert_eq!(r.accounted(), 10 * 20);
    }

    #[test]
    fn empty_run() {
        let r = run_difftest(7, 0, 2, 3, 3, 8).unwrap();
        assert_eq!(r.instances, 0);
        assert_eq!(r.agreements, 0);
        assert!(r.violations.is_empty() && r.skipped.is_empty());
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let a = serde_json::to_string(&run_difftest(5, 8, 2, 3, 3, 8).unwrap()).unwrap();
        let b = serde_json::to_string(&run_difftest(5, 8, 2, 3, 3, 8).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_parameters_rejected() {
        assert!(run_difftest(1, 1, 0, 3, 3, 8).is_err());
        assert!(run_difftest(1, 1, 1, 3, 3, 0).is_err());
    }

    #[test]
    fn generator_respects_ceilings() {
        let cfg = DiffTestConfig::new(3, 0, 2, 3, 3, 8);
        for sub in 0..200u64 {
            let (f, _) = generate(sub, &cfg);
            let m = crate::metrics(&f);
            assert!(m.max_coeff() <= BigInt::from(3), "{}", print(&f));
            assert!(m.max_mod() <= BigInt::from(3), "{}", print(&f));
            f.visit_unique(|g| match g.node() {
                Node::AtLeast { threshold: c, vars, .. } | Node::Exactly { count: c, vars, .. } => {
                    assert!(*c <= BigInt::from(5) && vars.len() <= 2)
                }
                Node::ModCount { modulus, vars, .. } => assert!(*modulus <= BigInt::from(3) && vars.len() <= 2),
                _ => {}
            });
        }
    }
}
