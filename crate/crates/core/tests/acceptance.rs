//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_traits::{One, Pow, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use presburger_core::counting::{eliminate_all_counting_traced, eliminate_counting_node, size_allowance, SIZE_LAW_K};
use presburger_core::decide::{decide, exists_bound, global_d_from, Digits, Outcome, Strategy};
use presburger_core::difftest::{generate, run_difftest, DiffTestConfig, DiffTestReport};
use presburger_core::modcount::{eliminate_all_modcount_traced, residue_tuples, ModcountOptions};
use presburger_core::oracle::{eval_bounded, Truth};
use presburger_core::qe::{check_growth_bounds, qe_full_with};
use presburger_core::{metrics, parse, print, size, Assignment, Formula, Node, Term, Var};

type Verdict = Result<String, String>;

const DIFFTEST_SEED: u64 = 20_240_611;
const DIFFTEST_COUNT: usize = 500;

const EXAMPLE: &str = "E[17*x+25 % 23] (y1,y2) : 2*y1 < 3*y2 && 4*y2 < 56 && \
                       E>=343 (y) : -13*x+2 < 3*x+y-2 && 57*x == 2*y+27 (mod 13)";

/// Closed sentences with verdicts frozen from brute-force evaluation.
const CATALOG: &[(&str, bool)] = &[
    ("E x : 0 < x && x < 2", true),
    ("E x : 0 < x && x < 1", false),
    ("E x : 2*x = 7", false),
    ("E x : 3*x = 12", true),
    ("E x : x == 1 (mod 2) && x == 0 (mod 4)", false),
    ("E x : x == 1 (mod 2) && x == 2 (mod 3)", true),
    ("E[0 % 2] (x) : 0 < x && x < 5", true),
    ("E[1 % 2] (x) : 0 < x && x < 5", false),
    ("E[1 % 3] (x) : 0 <= x && x < 10 && x == 0 (mod 3)", true),
    ("E[0 % 2] (x) : 0 < x && x < 8 && x == 0 (mod 2)", false),
    ("E>=1 (x) : 0 < x && x < 2", true),
    ("E>=1 (x) : 2*x = 5", false),
    ("E>=1 (x) : E y : x < y && y < 0", true),
    ("E x : E y : x < y && y < x", false),
    ("E x : E y : 0 < x && x < y && y < 3", true),
    ("E x : x < 0 && 0 < x", false),
    ("!(E x : 2*x = 1)", true),
    ("E x : E y : 2*x + 3*y = 1 && 0 < x && x < 5 && 0 < y && y < 5", false),
    ("E[0 % 2] (x, y) : 0 < x && x < 3 && 0 < y && y < 3", true),
    ("E[1 % 2] (x) : x = 3", true),
    ("E x : 0 < x && x < 50 && x == 0 (mod 3) && x == 0 (mod 13)", true),
    ("E x : 0 < x && x < 70 && x == 0 (mod 7) && x == 0 (mod 11)", false),
    ("E[2 % 3] (x) : -3 < x && x < 3", true),
    ("E x : x < 4 && E[0 % 2] (y) : 0 < y && y < x", true),
    ("E x : E[0 % 2] (y) : x < y && y < x + 3", true),
    ("E>=1 (x) : E>=1 (y) : x < y && y < x + 1", false),
    ("E x : x = 5 && E[1 % 2] (y) : 0 < y && y <= x", true),
    ("E x : x == 3 (mod 5) && E[1 % 2] (y) : 0 < y && y <= x", true),
];

fn set(xs: &[i64]) -> BTreeSet<BigInt> {
    xs.iter().map(|x| BigInt::from(*x)).collect()
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let f = parse(EXAMPLE).map_err(|e| e.to_string())?;
    let m = metrics(&f);
    let coeff = set(&[0, 1, -1, 2, -2, 3, -3, 4, -4, 16, -16]);
    let konst = set(&[0, 1, -1, 2, -2, 56, -56, 4, -4]);
    let modulus = set(&[1, 13, 23]);
    let p: BTreeSet<BigInt> = coeff.union(&modulus).cloned().collect();
    let checks = [("Coeff", &m.coeff_set, &coeff), ("Const", &m.const_set, &konst), ("Mod", &m.mod_set, &modulus), ("P", &m.p_set, &p)];
    for (name, got, want) in checks {
        if got != want {
            return Err(format!("{name} = {got:?}, expected {want:?}"));
        }
    }
    if t.elapsed() > Duration::from_secs(1) {
        return Err(format!("took {:?}", t.elapsed()));
    }
    Ok("Coeff, Const, Mod and P match exactly".into())
}

fn criterion_2(r: &DiffTestReport, elapsed: Duration) -> Verdict {
    let mut msg = format!(
        "{} instances x {}, {} agreements, {} unchecked, unstable {:.1}%, {:?}",
        r.instances,
        r.assignments_per_instance,
        r.agreements,
        r.unchecked,
        100.0 * r.unstable_rate(),
        elapsed
    );
    if let Some(v) = r.violations.first() {
        let _ = write!(msg, "; first violation: {v:?}");
        return Err(format!("{} violations; {msg}", r.violations.len()));
    }
    if r.assignments_per_instance < 20 {
        return Err(format!("only {} assignments per instance", r.assignments_per_instance));
    }
    if r.accounted() != (r.instances * r.assignments_per_instance) as u64 {
        return Err(format!("accounting mismatch: {} evaluations recorded; {msg}", r.accounted()));
    }
    if r.unstable_rate() > 0.30 {
        return Err(format!("unstable rate too high; {msg}"));
    }
    if elapsed > Duration::from_secs(300) {
        return Err(format!("too slow; {msg}"));
    }
    Ok(msg)
}

/// Containment of the three metric sets across both counting passes,
/// rechecked outside the passes on every generated instance.
fn criterion_3(r: &DiffTestReport, cfg: &DiffTestConfig) -> Verdict {
    let internal: Vec<_> = r.failures.iter().filter(|f| f.stage != "qe").collect();
    if let Some(f) = internal.first() {
        return Err(format!("{} pass failures, first: {f:?}", internal.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checked = 0;
    for _ in 0..cfg.count {
        let (f, _) = generate(rng.gen(), cfg);
        let m0 = metrics(&f);
        let Ok((g, _)) = eliminate_all_counting_traced(&f) else { continue };
        let m1 = metrics(&g);
        if !m1.sets_within(&m0) {
            return Err(format!("counting pass enlarged a set on {}", print(&f)));
        }
        let Ok((h, _)) = eliminate_all_modcount_traced(&g, &ModcountOptions::default()) else { continue };
        if !metrics(&h).sets_within(&m1) {
            return Err(format!("modulo-counting pass enlarged a set on {}", print(&f)));
        }
        checked += 1;
    }
    Ok(format!("0 assertion failures; containment rechecked on {checked} instances"))
}

fn criterion_4(r: &DiffTestReport, cfg: &DiffTestConfig) -> Verdict {
    let qe_failures: Vec<_> = r.failures.iter().filter(|f| f.stage == "qe").collect();
    if let Some(f) = qe_failures.first() {
        return Err(format!("{} elimination failures, first: {f:?}", qe_failures.len()));
    }
    if r.qe_runs == 0 {
        return Err("no full elimination ran".into());
    }
    // recheck a sample independently of the in-pass assertion
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rechecked = 0;
    for _ in 0..cfg.count.min(150) {
        let (f, _) = generate(rng.gen(), cfg);
        let Ok((g, _)) = eliminate_all_counting_traced(&f) else { continue };
        let Ok((h, _)) = eliminate_all_modcount_traced(&g, &ModcountOptions::default()) else { continue };
        let Ok((q, _)) = qe_full_with(&h, &cfg.qe) else { continue };
        check_growth_bounds(&h, &q).map_err(|e| format!("{e} on {}", print(&f)))?;
        rechecked += 1;
    }
    Ok(format!("{} runs, {} steps, bounds verified; {rechecked} rechecked", r.qe_runs, r.qe_steps))
}

fn criterion_5(cfg: &DiffTestConfig) -> Verdict {
    let (y1, y2, y3, z) = (Var::named("ay1"), Var::named("ay2"), Var::named("ay3"), Var::named("az"));
    let bodies: Vec<(Vec<Var>, Formula)> = vec![
        (vec![y1], Formula::less(Term::var(y1), Term::var(z))),
        (vec![y1], parse("0 < ay1 && ay1 < az && ay1 == 1 (mod 3)").unwrap()),
        (vec![y1, y2], parse("ay1 < ay2 && 0 < ay1 && ay2 < az").unwrap()),
        (vec![y1, y2, y3], parse("ay1 < ay2 && ay2 < ay3 && 2*ay3 < 3*az + 7").unwrap()),
    ];
    let mut worst = 0f64;
    let mut nodes = 0;
    let mut check = |node: &Formula, arity: usize, c: &BigInt| -> Result<(), String> {
        let out = eliminate_counting_node(node).map_err(|e| e.to_string())?;
        let grown = size(&out).saturating_sub(size(node));
        let allowed = size_allowance(arity, c);
        if grown > allowed {
            return Err(format!("{} grew by {grown} > {allowed}", print(node)));
        }
        let log = (c.clone().max(BigInt::from(2))).to_f64().map_or(c.bits() as f64, f64::log2);
        worst = worst.max(grown as f64 / (arity as f64 * log));
        nodes += 1;
        Ok(())
    };
    let mut thresholds: Vec<BigInt> = (1..=40).map(BigInt::from).collect();
    thresholds.extend([64, 100, 255, 256, 1000, 4096].map(BigInt::from));
    thresholds.push(BigInt::from(2).pow(40u32) + 1);
    for (vars, body) in &bodies {
        for c in &thresholds {
            check(&Formula::at_least(c.clone(), vars.clone(), body.clone()).unwrap(), vars.len(), c)?;
            check(&Formula::exactly(c.clone(), vars.clone(), body.clone()).unwrap(), vars.len(), c)?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 5);
    for _ in 0..300 {
        let (f, _) = generate(rng.gen(), cfg);
        let mut innermost = Vec::new();
        f.visit_unique(|g| match g.node() {
            Node::AtLeast { threshold: c, vars, body } | Node::Exactly { count: c, vars, body }
                if !body.any_node(|n| matches!(n, Node::AtLeast { .. } | Node::Exactly { .. })) =>
            {
                innermost.push((g.clone(), vars.len(), c.clone()))
            }
            _ => {}
        });
        for (node, arity, c) in innermost {
            check(&node, arity, &c)?;
        }
    }
    Ok(format!("K = {SIZE_LAW_K} holds on {nodes} eliminations; largest observed growth per unit {worst:.1}"))
}

fn read_golden(p: u64) -> Result<Vec<(u64, Vec<u64>)>, String> {
    let path = format!("{}/tests/golden/residue_tuples_p{p}.txt", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let (d, rest) = l.split_once(':').ok_or_else(|| format!("bad line {l:?}"))?;
            let d = d.trim().parse().map_err(|_| format!("bad line {l:?}"))?;
            let t = rest.split_whitespace().map(|x| x.parse().map_err(|_| format!("bad line {l:?}"))).collect::<Result<_, _>>()?;
            Ok((d, t))
        })
        .collect()
}

fn criterion_6() -> Verdict {
    let mut counts = Vec::new();
    for p in 2..=5u64 {
        let golden = read_golden(p)?;
        let expected = p.pow(p as u32 - 2) as usize;
        for d in 0..p {
            let got = residue_tuples(&BigInt::from(p), &BigInt::from(d)).map_err(|e| e.to_string())?;
            let got: Vec<Vec<u64>> = got.into_iter().map(|t| t.entries).collect();
            let want: Vec<Vec<u64>> = golden.iter().filter(|(gd, _)| *gd == d).map(|(_, t)| t.clone()).collect();
            if got != want {
                return Err(format!("p = {p}, d = {d}: tuples differ from the golden file"));
            }
            if got.len() != expected {
                return Err(format!("p = {p}, d = {d}: {} tuples, expected {expected}", got.len()));
            }
        }
        counts.push(format!("p={p}: {expected}"));
    }
    Ok(format!("exact counts {}", counts.join(", ")))
}

fn criterion_7() -> Verdict {
    let t = Instant::now();
    for (src, verdict) in CATALOG {
        let f = parse(src).map_err(|e| format!("{src}: {e}"))?;
        let brute = eval_bounded(&f, &Assignment::new(), 16).map_err(|e| format!("{src}: {e}"))?.value;
        if brute != Truth::from_bool(*verdict) {
            return Err(format!("{src}: brute force gives {brute:?}"));
        }
        for strategy in [Strategy::Qe, Strategy::Bounded(64)] {
            match decide(&f, &strategy) {
                Ok(Outcome::Decided(b)) if b == *verdict => {}
                other => return Err(format!("{src}: {strategy:?} gave {other:?}, expected {verdict}")),
            }
        }
    }
    if t.elapsed() > Duration::from_secs(60) {
        return Err(format!("took {:?}", t.elapsed()));
    }
    Ok(format!("{} sentences agree under both strategies in {:?}", CATALOG.len(), t.elapsed()))
}

fn criterion_8() -> Verdict {
    let six = BigInt::from(6);
    let e = exists_bound(&six, &BigInt::one()).map_err(|e| e.to_string())?;
    let want = Pow::pow(&six, 7776u32);
    if e.exact.as_ref() != Some(&want) {
        return Err("exists_bound(6, 1) differs from 6^7776".into());
    }
    let g = global_d_from(&BigInt::from(2), &BigInt::from(2), 1, &BigInt::from(2));
    if g.exact.as_ref() != Some(&Pow::pow(&BigInt::from(2), 257u32)) {
        return Err("global_D(2, 2, 1, 2) differs from 2^257".into());
    }
    for (cert, digits) in [(&e, 6051u64), (&g, 78)] {
        let by_log = cert.log10().floor() as u64 + 1;
        let by_text = cert.exact.as_ref().unwrap().to_string().len() as u64;
        if cert.digits != Digits::Exact(digits) || by_log != digits || by_text != digits {
            return Err(format!("digits {:?}, by log10 {by_log}, by text {by_text}, expected {digits}", cert.digits));
        }
    }
    Ok("6^7776 has 6051 digits, 2^257 has 78 digits; log10 agrees".into())
}

/// Random ASTs over every node kind.
struct AstGen {
    rng: ChaCha8Rng,
}

impl AstGen {
    const NAMES: [&'static str; 6] = ["x", "y", "z", "w1", "w_2", "v"];

    fn var(&mut self) -> Var {
        Var::named(Self::NAMES[self.rng.gen_range(0..Self::NAMES.len())])
    }

    fn term(&mut self) -> Term {
        let n = self.rng.gen_range(0..=3);
        let parts: Vec<(Var, BigInt)> = (0..n).map(|_| (self.var(), BigInt::from(self.rng.gen_range(-40..=40)))).collect();
        Term::from_parts(parts, self.rng.gen_range(-1000..=1000))
    }

    fn vars(&mut self) -> Vec<Var> {
        let mut vs: Vec<Var> = Vec::new();
        for _ in 0..self.rng.gen_range(1..=3) {
            let v = self.var();
            if !vs.contains(&v) {
                vs.push(v);
            }
        }
        vs
    }

    fn formula(&mut self, depth: u32) -> Formula {
        let pick = if depth == 0 { self.rng.gen_range(0..2) } else { self.rng.gen_range(0..12) };
        let d = depth.saturating_sub(1);
        match pick {
            0 => Formula::less(self.term(), self.term()),
            1 => Formula::cong(self.term(), BigInt::from(self.rng.gen_range(1..=50)), self.term()),
            2 => Formula::not(self.formula(d)),
            3 => Formula::and(self.formula(d), self.formula(d)),
            4 => Formula::or(self.formula(d), self.formula(d)),
            5 => Formula::implies(self.formula(d), self.formula(d)),
            6 => Formula::iff(self.formula(d), self.formula(d)),
            7 => Formula::exists(self.var(), self.formula(d)),
            8 => {
                let (t, p, vs) = (self.term(), BigInt::from(self.rng.gen_range(2..=30)), self.vars());
                Formula::mod_count(t, p, vs, self.formula(d)).unwrap()
            }
            9 => {
                let (c, vs) = (BigInt::from(self.rng.gen_range(1..=500)), self.vars());
                Formula::at_least(c, vs, self.formula(d)).unwrap()
            }
            10 => {
                let (c, vs) = (BigInt::from(self.rng.gen_range(1..=500)), self.vars());
                Formula::exactly(c, vs, self.formula(d)).unwrap()
            }
            _ => Formula::and(Formula::not(self.formula(d)), Formula::or(self.formula(d), self.formula(d))),
        }
    }
}

fn criterion_9() -> Verdict {
    let mut g = AstGen { rng: ChaCha8Rng::seed_from_u64(9) };
    for i in 0..10_000 {
        let f = g.formula(1 + i % 5);
        let text = print(&f);
        let back = parse(&text).map_err(|e| format!("{text}: {e}"))?;
        if back != f {
            return Err(format!("round trip changed {text} into {}", print(&back)));
        }
    }
    let a = serde_json::to_string(&run_difftest(77, 40, 2, 3, 3, 8).map_err(|e| e.to_string())?).unwrap();
    let b = serde_json::to_string(&run_difftest(77, 40, 2, 3, 3, 8).map_err(|e| e.to_string())?).unwrap();
    if a != b {
        return Err("difftest reports differ for identical seeds".into());
    }
    Ok("10000 round trips; identical seeds give byte-identical reports".into())
}

fn main() {
    let cfg = DiffTestConfig::new(DIFFTEST_SEED, DIFFTEST_COUNT, 2, 3, 3, 8);
    let t = Instant::now();
    let report = run_difftest(cfg.seed, cfg.count, cfg.depth, cfg.coeff_max, cfg.mod_max, cfg.range);
    let elapsed = t.elapsed();
    let report = report.map_err(|e| e.to_string());

    let with_report = |f: &dyn Fn(&DiffTestReport) -> Verdict| match &report {
        Ok(r) => f(r),
        Err(e) => Err(format!("difftest did not run: {e}")),
    };
    let results: Vec<(u32, &str, Verdict)> = vec![
        (1, "golden metrics", criterion_1()),
        (2, "stage soundness", with_report(&|r| criterion_2(r, elapsed))),
        (3, "metric containment", with_report(&|r| criterion_3(r, &cfg))),
        (4, "growth certification", with_report(&|r| criterion_4(r, &cfg))),
        (5, "counting size law", criterion_5(&cfg)),
        (6, "residue tuples", criterion_6()),
        (7, "decision catalog", criterion_7()),
        (8, "certificates", criterion_8()),
        (9, "round trip and determinism", criterion_9()),
    ];
    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n} ({name}): PASS - {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL - {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
