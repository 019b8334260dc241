//! Presburger arithmetic with threshold, exact and modulo-counting
//! quantifiers over tuples.
//!
//! The pipeline compiles a formula of the full logic in three verified
//! passes:
//!
//! 1. [`counting::eliminate_all_counting`] removes `∃^{≥c}` and `∃^{=c}`;
//! 2. [`modcount::eliminate_all_modcount`] reduces modulo-counting
//!    quantifiers over tuples to unary ones with constant residues;
//! 3. [`qe::qe_full`] eliminates the remaining `∃x` and `∃^{(q,p)}x`.
//!
//! [`oracle`] is the brute-force reference every pass is checked against,
//! and [`decide`] layers decision strategies and bound certificates on top.

use std::collections::BTreeMap;

use num_bigint::BigInt;

pub mod counting;
pub mod decide;
pub mod difftest;
pub mod formula;
pub mod metrics;
pub mod modcount;
pub mod oracle;
pub mod parser;
pub mod qe;
pub mod term;
pub mod var;

pub use formula::{Atom, Formula, Node, Separated};
pub use metrics::{block_depth, metrics, qd, size, MetricSummary};
pub use parser::{parse, print, SourceSpan};
pub use term::{normalize_term, RawTerm, Term};
pub use var::{FreshVars, Var};

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("parse error at {span}: {msg}")]
    Parse { msg: String, span: SourceSpan },
    #[error("invalid formula: {0}")]
    Validation(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("variable {0} is not bound by the assignment")]
    Unbound(Var),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("internal assertion failed: {0}")]
    Assertion(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// A finite map from variables to integers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    bindings: BTreeMap<Var, BigInt>,
}

impl Assignment {
    pub fn new() -> Assignment {
        Assignment::default()
    }

    pub fn get(&self, v: Var) -> Option<&BigInt> {
        self.bindings.get(&v)
    }

    pub fn set(&mut self, v: Var, value: impl Into<BigInt>) {
        self.bindings.insert(v, value.into());
    }

    /// Copy with one binding replaced.
    pub fn with(&self, v: Var, value: impl Into<BigInt>) -> Assignment {
        let mut a = self.clone();
        a.set(v, value);
        a
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &BigInt)> {
        self.bindings.iter().map(|(v, n)| (*v, n))
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }
}

impl<V: Into<BigInt>> FromIterator<(Var, V)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (Var, V)>>(iter: I) -> Assignment {
        Assignment { bindings: iter.into_iter().map(|(v, n)| (v, n.into())).collect() }
    }
}

impl std::fmt::Display for Assignment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("{")?;
        for (i, (v, n)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}: {n}")?;
        }
        f.write_str("}")
    }
}
