//! `presburger`: command-line front end.
//!
//! Exit codes: 0 on success (a decided `false` included), 1 on an internal
//! check failure, 2 on parse or validation errors, 3 on resource limits or
//! certified infeasibility.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{self, Read};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde_json::json;

use presburger_core::counting::eliminate_all_counting_traced;
use presburger_core::decide::{decide_with, global_d, witness_bound, DecideOptions, Outcome, Strategy, DEFAULT_KAPPA};
use presburger_core::difftest::{run_difftest_with, DiffTestConfig};
use presburger_core::modcount::{eliminate_all_modcount_traced, ModcountOptions};
use presburger_core::oracle::{Oracle, OracleConfig, Truth};
use presburger_core::parser::to_json;
use presburger_core::qe::{qe_full_with, simplify, QeOptions};
use presburger_core::{block_depth, metrics, parse, print, Assignment, Error, Formula, Var};

#[derive(Parser, Debug)]
#[command(name = "presburger", version, about = "Presburger arithmetic with counting quantifiers")]
struct Cli {
    /// Output format of transformation results.
    #[arg(long, global = true, value_enum)]
    emit: Option<Emit>,
    /// Optional `key=value` file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Emit {
    Text,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Qe,
    Bounded,
    Paper,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum StageArg {
    Counting,
    Modcount,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide a closed sentence.
    Decide {
        input: String,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// Search bound of the bounded strategy.
        #[arg(long)]
        bound: Option<u64>,
        #[arg(long)]
        kappa: Option<u32>,
    },
    /// Eliminate every quantifier.
    Qe {
        input: String,
        /// Also print bound certificates.
        #[arg(long)]
        cert: bool,
        /// Constant-fold the final result.
        #[arg(long)]
        simplify: bool,
        #[arg(long)]
        kappa: Option<u32>,
    },
    /// Run one or both counting passes.
    Transform {
        input: String,
        #[arg(long, value_enum)]
        stage: Option<StageArg>,
    },
    /// Print metric sets, depth, size and block depth.
    Stats { input: String },
    /// Evaluate with the bounded oracle.
    Oracle {
        input: String,
        #[arg(long)]
        bound: Option<u64>,
        /// Free variable binding `name=value`; repeatable.
        #[arg(long = "set", value_name = "NAME=VALUE")]
        set: Vec<String>,
    },
    /// Differential test of every pass against the oracle.
    Difftest {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        range: Option<i64>,
        #[arg(long)]
        coeff_max: Option<u32>,
        #[arg(long)]
        mod_max: Option<u32>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let code = match e {
            Error::Parse { .. } | Error::Validation(_) | Error::Unbound(_) | Error::Precondition(_) => 2,
            Error::Resource(_) => 3,
            Error::Assertion(_) => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: 2, message }
}

/// Settings from the config file; flags take precedence.
struct Settings(HashMap<String, String>);

impl Settings {
    fn load(path: Option<&PathBuf>) -> Result<Settings, Failure> {
        let mut map = HashMap::new();
        let Some(path) = path else { return Ok(Settings(map)) };
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
            map.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(Settings(map))
    }

    fn get<T: std::str::FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Failure> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.0.get(key) {
            Some(s) => s.parse().map_err(|_| usage(format!("config: invalid value {s:?} for {key}"))),
            None => Ok(default),
        }
    }

    fn get_enum<T: ValueEnum>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Failure> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.0.get(key) {
            Some(s) => T::from_str(s, true).map_err(|_| usage(format!("config: invalid value {s:?} for {key}"))),
            None => Ok(default),
        }
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool, Failure> {
        Ok(flag || self.get(None, key, false)?)
    }
}

fn read_input(path: &str) -> Result<Formula, Failure> {
    let text = if path == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).map_err(|e| usage(format!("cannot read standard input: {e}")))?;
        s
    } else {
        fs::read_to_string(path).map_err(|e| usage(format!("cannot read {path}: {e}")))?
    };
    Ok(parse(&text)?)
}

fn emit_formula(f: &Formula, emit: Emit) -> String {
    match emit {
        Emit::Text => print(f),
        Emit::Json => to_json(f).to_string(),
    }
}

/// `{0, ±1, 13}`: symmetric pairs collapse to `±n`, ordered by magnitude.
fn set_text(s: &BTreeSet<BigInt>) -> String {
    let mut mags: Vec<BigInt> = s.iter().map(|n| n.abs()).collect();
    mags.sort();
    mags.dedup();
    let items: Vec<String> = mags
        .iter()
        .map(|m| match (s.contains(m), s.contains(&-m)) {
            (true, true) if !m.is_zero() => format!("±{m}"),
            (true, _) => m.to_string(),
            _ => (-m).to_string(),
        })
        .collect();
    format!("{{{}}}", items.join(", "))
}

fn run(cli: Cli) -> Result<String, Failure> {
    let settings = Settings::load(cli.config.as_ref())?;
    let emit = settings.get_enum(cli.emit, "emit", Emit::Text)?;
    match cli.command {
        Command::Decide { input, strategy, bound, kappa } => {
            let f = read_input(&input)?;
            let strategy = match settings.get_enum(strategy, "strategy", StrategyArg::Qe)? {
                StrategyArg::Qe => Strategy::Qe,
                StrategyArg::Bounded => Strategy::Bounded(settings.get(bound, "bound", 64)?),
                StrategyArg::Paper => Strategy::PaperBounded,
            };
            let opts = DecideOptions { kappa: settings.get(kappa, "kappa", DEFAULT_KAPPA)?.into(), ..DecideOptions::default() };
            match decide_with(&f, &strategy, &opts)? {
                Outcome::Decided(b) => Ok(match emit {
                    Emit::Text => b.to_string(),
                    Emit::Json => json!({ "verdict": b }).to_string(),
                }),
                Outcome::Infeasible(cert) => Err(Failure {
                    code: 3,
                    message: match emit {
                        Emit::Text => format!("infeasible: {cert}"),
                        Emit::Json => json!({ "infeasible": cert }).to_string(),
                    },
                }),
            }
        }
        Command::Qe { input, cert, simplify: fold, kappa } => {
            let f = read_input(&input)?;
            let (g, _) = eliminate_all_counting_traced(&f)?;
            let (h, _) = eliminate_all_modcount_traced(&g, &ModcountOptions::default())?;
            let (q, steps) = qe_full_with(&h, &QeOptions::default())?;
            let q = if settings.flag(fold, "simplify")? { simplify(&q) } else { q };
            let kappa = BigInt::from(settings.get(kappa, "kappa", DEFAULT_KAPPA)?);
            let certs = if settings.flag(cert, "cert")? {
                let mut certs = vec![global_d(&h, &kappa)?];
                if metrics(&h).qd > 0 {
                    certs.push(witness_bound(&h, &BigInt::from(1), h.free_vars().len() as u64, &kappa)?);
                }
                certs
            } else {
                Vec::new()
            };
            Ok(match emit {
                Emit::Text => {
                    let mut out = print(&q);
                    for c in &certs {
                        out.push_str(&format!("\n{c}"));
                    }
                    out
                }
                Emit::Json => json!({ "formula": to_json(&q), "steps": steps, "certificates": certs }).to_string(),
            })
        }
        Command::Transform { input, stage } => {
            let f = read_input(&input)?;
            let stage = settings.get_enum(stage, "stage", StageArg::All)?;
            let out = match stage {
                StageArg::Counting => eliminate_all_counting_traced(&f)?.0,
                StageArg::Modcount => eliminate_all_modcount_traced(&f, &ModcountOptions::default())?.0,
                StageArg::All => {
                    let (g, _) = eliminate_all_counting_traced(&f)?;
                    eliminate_all_modcount_traced(&g, &ModcountOptions::default())?.0
                }
            };
            Ok(emit_formula(&out, emit))
        }
        Command::Stats { input } => {
            let f = read_input(&input)?;
            let m = metrics(&f);
            let bd = block_depth(&f).ok();
            Ok(match emit {
                Emit::Text => {
                    let mut out = format!(
                        "Coeff = {}\nConst = {}\nMod = {}\nP = {}\nqd = {}\nsize = {}",
                        set_text(&m.coeff_set),
                        set_text(&m.const_set),
                        set_text(&m.mod_set),
                        set_text(&m.p_set),
                        m.qd,
                        m.size
                    );
                    if let Some(bd) = bd {
                        out.push_str(&format!("\nblock depth = {bd}"));
                    }
                    out
                }
                Emit::Json => json!({ "metrics": m, "block_depth": bd }).to_string(),
            })
        }
        Command::Oracle { input, bound, set } => {
            let f = read_input(&input)?;
            let mut a = Assignment::new();
            for s in &set {
                let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("expected NAME=VALUE, got {s:?}")))?;
                let v: BigInt = v.trim().parse().map_err(|_| usage(format!("invalid integer in {s:?}")))?;
                a.set(Var::named(k.trim()), v);
            }
            let bound = settings.get(bound, "bound", 16)?;
            if bound == 0 {
                return Err(usage("bound must be at least 1".into()));
            }
            let mut o = Oracle::new(&f, OracleConfig { bound, ..OracleConfig::default() })?;
            let v = o.eval_verdict(&a)?;
            let word = match v.value {
                Truth::True => "true",
                Truth::False => "false",
                Truth::Unstable => "unstable",
            };
            Ok(match emit {
                Emit::Text => match v.witness_count {
                    Some(n) => format!("{word} (witnesses: {n})"),
                    None => word.to_string(),
                },
                Emit::Json => json!({ "verdict": word, "witness_count": v.witness_count }).to_string(),
            })
        }
        Command::Difftest { seed, count, depth, range, coeff_max, mod_max } => {
            let cfg = DiffTestConfig::new(
                settings.get(seed, "seed", 1)?,
                settings.get(count, "count", 100)?,
                settings.get(depth, "depth", 2)?,
                settings.get(coeff_max, "coeff_max", 3)?,
                settings.get(mod_max, "mod_max", 3)?,
                settings.get(range, "range", 8)?,
            );
            let report = run_difftest_with(&cfg)?;
            let out = match emit {
                Emit::Json => serde_json::to_string_pretty(&report).expect("reports serialize"),
                Emit::Text => format!(
                    "seed {}: {} instances x {} assignments\nagreements {}\nviolations {}\nfailures {}\nunstable skipped {} ({:.1}%)\nresource skipped {}\nunchecked {}\nqe runs {}",
                    report.seed,
                    report.instances,
                    report.assignments_per_instance,
                    report.agreements,
                    report.violations.len(),
                    report.failures.len(),
                    report.unstable_skipped,
                    100.0 * report.unstable_rate(),
                    report.resource_skipped,
                    report.unchecked,
                    report.qe_runs
                ),
            };
            if report.passed() {
                Ok(out)
            } else {
                Err(Failure { code: 1, message: out })
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
