//! Interned variables.
//!
//! Variables are small integer handles into a process-wide name table.
//! The canonical order of variables inside a term is the order of their
//! handles, so interning order is part of the normal form.

use std::collections::HashMap;
use std::fmt;
use std::sync::{OnceLock, RwLock};

/// A variable handle. Ordering is by interning index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Var(pub(crate) u32);

#[derive(Default)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

fn table() -> &'static RwLock<Interner> {
    static TABLE: OnceLock<RwLock<Interner>> = OnceLock::new();
    TABLE.get_or_init(|| RwLock::new(Interner::default()))
}

impl Var {
    /// Returns the variable with the given name, interning it if needed.
    pub fn named(name: &str) -> Var {
        if let Some(&i) = table().read().expect("interner poisoned").index.get(name) {
            return Var(i);
        }
        let mut t = table().write().expect("interner poisoned");
        if let Some(&i) = t.index.get(name) {
            return Var(i);
        }
        let i = t.names.len() as u32;
        t.names.push(name.to_string());
        t.index.insert(name.to_string(), i);
        Var(i)
    }

    /// The surface name of the variable.
    pub fn name(self) -> String {
        table().read().expect("interner poisoned").names[self.0 as usize].clone()
    }

    /// Dense index, usable as a slot in environment vectors.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Number of variables interned so far.
    pub fn count() -> usize {
        table().read().expect("interner poisoned").names.len()
    }

    /// If the name has the fresh-variable shape `_f<n>`, returns `n`.
    pub fn fresh_index(self) -> Option<u64> {
        let name = self.name();
        let digits = name.strip_prefix(FRESH_PREFIX)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        digits.parse().ok()
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl serde::Serialize for Var {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> serde::Deserialize<'de> for Var {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Var, D::Error> {
        let name = String::deserialize(d)?;
        Ok(Var::named(&name))
    }
}

const FRESH_PREFIX: &str = "_f";

/// Deterministic source of fresh variables.
///
/// Fresh names are `_f<n>` with `n` strictly above every fresh index already
/// used by the formula the allocator was seeded from, so outputs only depend
/// on the input formula.
#[derive(Clone, Debug)]
pub struct FreshVars {
    next: u64,
}

impl FreshVars {
    /// Allocator whose names avoid every variable in `used`.
    pub fn avoiding<I: IntoIterator<Item = Var>>(used: I) -> FreshVars {
        let next = used
            .into_iter()
            .filter_map(Var::fresh_index)
            .max()
            .map_or(0, |m| m + 1);
        FreshVars { next }
    }

    /// A new variable not returned before by this allocator.
    pub fn var(&mut self) -> Var {
        let v = Var::named(&format!("{FRESH_PREFIX}{}", self.next));
        self.next += 1;
        v
    }

    /// A tuple of `len` new variables.
    pub fn tuple(&mut self, len: usize) -> Vec<Var> {
        (0..len).map(|_| self.var()).collect()
    }
}
