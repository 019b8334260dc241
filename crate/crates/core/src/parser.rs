//! Surface syntax: parser, printer and JSON form.
//!
//! ```text
//! formula := quant | iff
//! quant   := 'E' IDENT ':' formula
//!          | 'E' '[' term '%' INT ']' vars ':' formula
//!          | 'E' '>=' INT vars ':' formula
//!          | 'E' '=' INT vars ':' formula
//! iff     := imp ['<->' iff]
//! imp     := or ['->' imp]
//! or      := and {'||' and}
//! and     := unary {'&&' unary}
//! unary   := '!' unary | quant | '(' formula ')' | atom
//! atom    := term ('<' | '>' | '<=' | '>=' | '=') term
//!          | term '==' term '(' 'mod' INT ')'
//! term    := ['-'] mono {('+' | '-') mono}
//! mono    := INT ['*' IDENT] | IDENT ['*' INT]
//! vars    := '(' IDENT {',' IDENT} ')'
//! ```
//!
//! A quantifier body extends as far to the right as possible. `#` starts a
//! comment running to the end of the line.

use std::fmt;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::formula::{Atom, Formula, Node};
use crate::term::Term;
use crate::var::Var;
use crate::{Error, Result};

/// Byte range in the source text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Not,
    And,
    Or,
    Imp,
    Iff,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    EqEq,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Colon,
    Percent,
    Plus,
    Minus,
    Star,
    Exists,
    Mod,
    Int(BigInt),
    Ident(String),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Not => "'!'",
            Tok::And => "'&&'",
            Tok::Or => "'||'",
            Tok::Imp => "'->'",
            Tok::Iff => "'<->'",
            Tok::Lt => "'<'",
            Tok::Gt => "'>'",
            Tok::Le => "'<='",
            Tok::Ge => "'>='",
            Tok::Eq => "'='",
            Tok::EqEq => "'=='",
            Tok::LParen => "'('",
            Tok::RParen => "')'",
            Tok::LBrack => "'['",
            Tok::RBrack => "']'",
            Tok::Comma => "','",
            Tok::Colon => "':'",
            Tok::Percent => "'%'",
            Tok::Plus => "'+'",
            Tok::Minus => "'-'",
            Tok::Star => "'*'",
            Tok::Exists => "'E'",
            Tok::Mod => "'mod'",
            Tok::Int(n) => return write!(f, "integer {n}"),
            Tok::Ident(s) => return write!(f, "identifier '{s}'"),
            Tok::End => "end of input",
        };
        f.write_str(s)
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

/// Whether a name can be printed as an identifier and read back.
pub fn is_valid_name(name: &str) -> bool {
    let mut cs = name.chars();
    matches!(cs.next(), Some(c) if is_ident_start(c)) && cs.all(is_ident_char) && name != "E" && name != "mod"
}

fn lex(src: &str) -> Result<Vec<(Tok, SourceSpan)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |msg: String, start: usize, end: usize| Error::Parse { msg, span: SourceSpan { start, end } };
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let rest = &src[i..];
        let two = |s: &str| rest.starts_with(s);
        let (tok, len) = if two("<->") {
            (Tok::Iff, 3)
        } else if two("&&") {
            (Tok::And, 2)
        } else if two("||") {
            (Tok::Or, 2)
        } else if two("->") {
            (Tok::Imp, 2)
        } else if two("<=") {
            (Tok::Le, 2)
        } else if two(">=") {
            (Tok::Ge, 2)
        } else if two("==") {
            (Tok::EqEq, 2)
        } else {
            match c {
                '!' => (Tok::Not, 1),
                '<' => (Tok::Lt, 1),
                '>' => (Tok::Gt, 1),
                '=' => (Tok::Eq, 1),
                '(' => (Tok::LParen, 1),
                ')' => (Tok::RParen, 1),
                '[' => (Tok::LBrack, 1),
                ']' => (Tok::RBrack, 1),
                ',' => (Tok::Comma, 1),
                ':' => (Tok::Colon, 1),
                '%' => (Tok::Percent, 1),
                '+' => (Tok::Plus, 1),
                '-' => (Tok::Minus, 1),
                '*' => (Tok::Star, 1),
                d if d.is_ascii_digit() => {
                    let len = rest.bytes().take_while(u8::is_ascii_digit).count();
                    let n: BigInt = rest[..len].parse().expect("digits");
                    (Tok::Int(n), len)
                }
                a if is_ident_start(a) => {
                    let len = rest.chars().take_while(|&ch| is_ident_char(ch)).count();
                    let word = &rest[..len];
                    let tok = match word {
                        "E" => Tok::Exists,
                        "mod" => Tok::Mod,
                        _ => Tok::Ident(word.to_string()),
                    };
                    (tok, len)
                }
                other => {
                    let end = start + other.len_utf8();
                    return Err(err(format!("unexpected character '{other}'"), start, end));
                }
            }
        };
        i += len;
        out.push((tok, SourceSpan { start, end: i }));
    }
    out.push((Tok::End, SourceSpan { start: src.len(), end: src.len() }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, SourceSpan)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { msg: msg.into(), span: self.span() })
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {t}, found {}", self.peek()))
        }
    }

    fn int(&mut self) -> Result<BigInt> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            t => self.error(format!("expected integer, found {t}")),
        }
    }

    fn ident(&mut self) -> Result<Var> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(Var::named(&s))
            }
            t => self.error(format!("expected identifier, found {t}")),
        }
    }

    fn formula(&mut self) -> Result<Formula> {
        if *self.peek() == Tok::Exists {
            self.quant()
        } else {
            self.iff()
        }
    }

    fn var_list(&mut self) -> Result<Vec<Var>> {
        self.expect(Tok::LParen)?;
        let mut vars = vec![self.ident()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            vars.push(self.ident()?);
        }
        self.expect(Tok::RParen)?;
        Ok(vars)
    }

    fn quant(&mut self) -> Result<Formula> {
        let start = self.span();
        self.expect(Tok::Exists)?;
        let with_span = |r: Result<Formula>, end: SourceSpan| {
            r.map_err(|e| match e {
                Error::Validation(msg) => Error::Parse { msg, span: SourceSpan { start: start.start, end: end.end } },
                other => other,
            })
        };
        match self.peek().clone() {
            Tok::Ident(_) => {
                let x = self.ident()?;
                self.expect(Tok::Colon)?;
                let body = self.formula()?;
                Ok(Formula::exists(x, body))
            }
            Tok::LBrack => {
                self.bump();
                let residue = self.term()?;
                self.expect(Tok::Percent)?;
                let modulus = self.int()?;
                self.expect(Tok::RBrack)?;
                let vars = self.var_list()?;
                let end = self.span();
                self.expect(Tok::Colon)?;
                let body = self.formula()?;
                with_span(Formula::mod_count(residue, modulus, vars, body), end)
            }
            Tok::Ge | Tok::Eq => {
                let at_least = self.bump() == Tok::Ge;
                let c = self.int()?;
                let vars = self.var_list()?;
                let end = self.span();
                self.expect(Tok::Colon)?;
                let body = self.formula()?;
                let f = if at_least { Formula::at_least(c, vars, body) } else { Formula::exactly(c, vars, body) };
                with_span(f, end)
            }
            t => self.error(format!("expected a variable, '[', '>=' or '=' after 'E', found {t}")),
        }
    }

    fn iff(&mut self) -> Result<Formula> {
        let lhs = self.imp()?;
        if *self.peek() == Tok::Iff {
            self.bump();
            let rhs = self.iff_operand()?;
            return Ok(Formula::iff(lhs, rhs));
        }
        Ok(lhs)
    }

    /// Right operand of a binary connective: a quantifier extends to the end.
    fn iff_operand(&mut self) -> Result<Formula> {
        if *self.peek() == Tok::Exists {
            self.quant()
        } else {
            self.iff()
        }
    }

    fn imp(&mut self) -> Result<Formula> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Imp {
            self.bump();
            let rhs = if *self.peek() == Tok::Exists { self.quant()? } else { self.imp()? };
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Exists => self.quant(),
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Formula> {
        let lhs = self.term()?;
        let op = self.bump();
        let rhs = match op {
            Tok::Lt | Tok::Gt | Tok::Le | Tok::Ge | Tok::Eq | Tok::EqEq => self.term()?,
            t => {
                self.pos -= 1;
                return self.error(format!("expected a comparison, found {t}"));
            }
        };
        Ok(match op {
            Tok::Lt => Formula::less(lhs, rhs),
            Tok::Gt => Formula::less(rhs, lhs),
            Tok::Le => Formula::less_eq(lhs, rhs),
            Tok::Ge => Formula::less_eq(rhs, lhs),
            Tok::Eq => Formula::equal(lhs, rhs),
            _ => {
                self.expect(Tok::LParen)?;
                self.expect(Tok::Mod)?;
                let span = self.span();
                let k = self.int()?;
                self.expect(Tok::RParen)?;
                let a = Atom::mod_eq(lhs, k, rhs).map_err(|e| match e {
                    Error::Validation(msg) => Error::Parse { msg, span },
                    other => other,
                })?;
                Formula::atom(a)
            }
        })
    }

    fn mono(&mut self) -> Result<Term> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                if *self.peek() == Tok::Star {
                    self.bump();
                    let v = self.ident()?;
                    Ok(Term::monomial(n, v))
                } else {
                    Ok(Term::constant(n))
                }
            }
            Tok::Ident(_) => {
                let v = self.ident()?;
                if *self.peek() == Tok::Star {
                    self.bump();
                    let n = self.int()?;
                    Ok(Term::monomial(n, v))
                } else {
                    Ok(Term::var(v))
                }
            }
            t => self.error(format!("expected a term, found {t}")),
        }
    }

    fn term(&mut self) -> Result<Term> {
        let negate = *self.peek() == Tok::Minus;
        if negate {
            self.bump();
        }
        let first = self.mono()?;
        let mut acc = if negate { -&first } else { first };
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = &acc + &self.mono()?;
                }
                Tok::Minus => {
                    self.bump();
                    acc = &acc - &self.mono()?;
                }
                _ => return Ok(acc),
            }
        }
    }
}

/// Parses a formula; terms are normalized and derived operators expanded.
pub fn parse(text: &str) -> Result<Formula> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let f = p.formula()?;
    if *p.peek() != Tok::End {
        return p.error(format!("unexpected {} after formula", p.peek()));
    }
    Ok(f)
}

/// Parses a single term.
pub fn parse_term(text: &str) -> Result<Term> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let t = p.term()?;
    if *p.peek() != Tok::End {
        return p.error(format!("unexpected {} after term", p.peek()));
    }
    Ok(t)
}

const PREC_IFF: u8 = 1;
const PREC_IMP: u8 = 2;
const PREC_OR: u8 = 3;
const PREC_AND: u8 = 4;
const PREC_UNARY: u8 = 5;

fn var_list(vars: &[Var]) -> String {
    let names: Vec<String> = vars.iter().map(|v| v.name()).collect();
    format!("({})", names.join(","))
}

fn write_formula(out: &mut String, f: &Formula, ctx: u8) {
    let binary = |out: &mut String, a: &Formula, b: &Formula, op: &str, prec: u8, left: u8, right: u8| {
        let paren = ctx > prec;
        if paren {
            out.push('(');
        }
        write_formula(out, a, left);
        out.push_str(op);
        write_formula(out, b, right);
        if paren {
            out.push(')');
        }
    };
    match f.node() {
        Node::Atomic(a) => {
            if ctx > PREC_UNARY {
                out.push('(');
                out.push_str(&a.to_string());
                out.push(')');
            } else {
                out.push_str(&a.to_string());
            }
        }
        Node::Not(a) => {
            out.push('!');
            write_formula(out, a, PREC_UNARY + 1);
        }
        Node::And(a, b) => binary(out, a, b, " && ", PREC_AND, PREC_AND, PREC_UNARY),
        Node::Or(a, b) => binary(out, a, b, " || ", PREC_OR, PREC_OR, PREC_AND),
        Node::Implies(a, b) => binary(out, a, b, " -> ", PREC_IMP, PREC_OR, PREC_IMP),
        Node::Iff(a, b) => binary(out, a, b, " <-> ", PREC_IFF, PREC_IMP, PREC_IFF),
        _ => {
            let paren = ctx > 0;
            if paren {
                out.push('(');
            }
            match f.node() {
                Node::Exists(x, body) => {
                    out.push_str(&format!("E {x} : "));
                    write_formula(out, body, 0);
                }
                Node::ModCount { residue, modulus, vars, body } => {
                    out.push_str(&format!("E[{residue} % {modulus}] {} : ", var_list(vars)));
                    write_formula(out, body, 0);
                }
                Node::AtLeast { threshold, vars, body } => {
                    out.push_str(&format!("E>={threshold} {} : ", var_list(vars)));
                    write_formula(out, body, 0);
                }
                Node::Exactly { count, vars, body } => {
                    out.push_str(&format!("E={count} {} : ", var_list(vars)));
                    write_formula(out, body, 0);
                }
                _ => unreachable!(),
            }
            if paren {
                out.push(')');
            }
        }
    }
}

/// Canonical text form; `parse(&print(f)) == f`.
pub fn print(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(&mut out, f, 0);
    out
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print(self))
    }
}

fn term_json(t: &Term) -> Value {
    let coeffs: Vec<Value> = t.coeffs().map(|(v, a)| json!([v.name(), a.to_string()])).collect();
    json!({ "coeffs": coeffs, "constant": t.constant_part().to_string() })
}

fn vars_json(vars: &[Var]) -> Value {
    Value::Array(vars.iter().map(|v| Value::String(v.name())).collect())
}

/// JSON form: one object per node with a `kind` field.
pub fn to_json(f: &Formula) -> Value {
    match f.node() {
        Node::Atomic(Atom::Less(l, r)) => json!({ "kind": "less", "lhs": term_json(l), "rhs": term_json(r) }),
        Node::Atomic(Atom::ModEq(l, k, r)) => {
            json!({ "kind": "modeq", "lhs": term_json(l), "modulus": k.to_string(), "rhs": term_json(r) })
        }
        Node::Not(a) => json!({ "kind": "not", "arg": to_json(a) }),
        Node::And(a, b) => json!({ "kind": "and", "lhs": to_json(a), "rhs": to_json(b) }),
        Node::Or(a, b) => json!({ "kind": "or", "lhs": to_json(a), "rhs": to_json(b) }),
        Node::Implies(a, b) => json!({ "kind": "implies", "lhs": to_json(a), "rhs": to_json(b) }),
        Node::Iff(a, b) => json!({ "kind": "iff", "lhs": to_json(a), "rhs": to_json(b) }),
        Node::Exists(x, body) => json!({ "kind": "exists", "var": x.name(), "body": to_json(body) }),
        Node::ModCount { residue, modulus, vars, body } => json!({
            "kind": "modcount",
            "residue": term_json(residue),
            "modulus": modulus.to_string(),
            "vars": vars_json(vars),
            "body": to_json(body),
        }),
        Node::AtLeast { threshold, vars, body } => json!({
            "kind": "atleast",
            "threshold": threshold.to_string(),
            "vars": vars_json(vars),
            "body": to_json(body),
        }),
        Node::Exactly { count, vars, body } => json!({
            "kind": "exactly",
            "count": count.to_string(),
            "vars": vars_json(vars),
            "body": to_json(body),
        }),
    }
}

fn bad(msg: &str) -> Error {
    Error::Validation(format!("malformed JSON formula: {msg}"))
}

fn field<'a>(v: &'a Value, name: &str) -> Result<&'a Value> {
    v.get(name).ok_or_else(|| bad(&format!("missing field '{name}'")))
}

fn big_json(v: &Value, name: &str) -> Result<BigInt> {
    let raw = field(v, name)?;
    match raw {
        Value::String(s) => s.parse().map_err(|_| bad(&format!("field '{name}' is not an integer"))),
        Value::Number(n) => n.to_string().parse().map_err(|_| bad(&format!("field '{name}' is not an integer"))),
        _ => Err(bad(&format!("field '{name}' is not an integer"))),
    }
}

fn name_json(v: &Value) -> Result<Var> {
    match v.as_str() {
        Some(s) if is_valid_name(s) => Ok(Var::named(s)),
        _ => Err(bad("invalid variable name")),
    }
}

fn term_from_json(v: &Value) -> Result<Term> {
    let coeffs = field(v, "coeffs")?.as_array().ok_or_else(|| bad("'coeffs' is not an array"))?;
    let mut parts = Vec::new();
    for c in coeffs {
        let pair = c.as_array().filter(|p| p.len() == 2).ok_or_else(|| bad("coefficient entry is not a pair"))?;
        let var = name_json(&pair[0])?;
        let a: BigInt = match &pair[1] {
            Value::String(s) => s.parse().map_err(|_| bad("coefficient is not an integer"))?,
            Value::Number(n) => n.to_string().parse().map_err(|_| bad("coefficient is not an integer"))?,
            _ => return Err(bad("coefficient is not an integer")),
        };
        parts.push((var, a));
    }
    Ok(Term::from_parts(parts, big_json(v, "constant")?))
}

fn vars_from_json(v: &Value) -> Result<Vec<Var>> {
    field(v, "vars")?.as_array().ok_or_else(|| bad("'vars' is not an array"))?.iter().map(name_json).collect()
}

/// Inverse of [`to_json`].
pub fn from_json(v: &Value) -> Result<Formula> {
    let kind = field(v, "kind")?.as_str().ok_or_else(|| bad("'kind' is not a string"))?;
    let sub = |name: &str| from_json(field(v, name)?);
    Ok(match kind {
        "less" => Formula::less(term_from_json(field(v, "lhs")?)?, term_from_json(field(v, "rhs")?)?),
        "modeq" => Formula::atom(Atom::mod_eq(
            term_from_json(field(v, "lhs")?)?,
            big_json(v, "modulus")?,
            term_from_json(field(v, "rhs")?)?,
        )?),
        "not" => Formula::not(sub("arg")?),
        "and" => Formula::and(sub("lhs")?, sub("rhs")?),
        "or" => Formula::or(sub("lhs")?, sub("rhs")?),
        "implies" => Formula::implies(sub("lhs")?, sub("rhs")?),
        "iff" => Formula::iff(sub("lhs")?, sub("rhs")?),
        "exists" => Formula::exists(name_json(field(v, "var")?)?, sub("body")?),
        "modcount" => Formula::mod_count(
            term_from_json(field(v, "residue")?)?,
            big_json(v, "modulus")?,
            vars_from_json(v)?,
            sub("body")?,
        )?,
        "atleast" => Formula::at_least(big_json(v, "threshold")?, vars_from_json(v)?, sub("body")?)?,
        "exactly" => Formula::exactly(big_json(v, "count")?, vars_from_json(v)?, sub("body")?)?,
        other => return Err(bad(&format!("unknown kind '{other}'"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_exists() {
        let f = parse("E px : 2*px < 7").unwrap();
        let x = Var::named("px");
        assert_eq!(f, Formula::exists(x, Formula::less(Term::monomial(2, x), Term::constant(7))));
    }

    #[test]
    fn prints_canonical_forms() {
        assert_eq!(print(&Formula::falsum()), "0 < 0");
        let x = Var::named("x");
        let f = Formula::exists(x, Formula::less(Term::var(x), Term::constant(1)));
        assert_eq!(print(&f), "E x : 1*x < 1");
        let y = Var::named("y");
        let g = Formula::exactly(2.into(), vec![y], Formula::less(Term::zero(), Term::var(y))).unwrap();
        assert_eq!(print(&g), "E=2 (y) : 0 < 1*y");
    }

    #[test]
    fn precedence_and_associativity() {
        let f = parse("0 < a1 && 0 < a2 || 0 < a3 -> 0 < a4 -> 0 < a5 <-> 0 < a6").unwrap();
        assert_eq!(parse(&print(&f)).unwrap(), f);
        match f.node() {
            Node::Iff(lhs, _) => match lhs.node() {
                Node::Implies(l, r) => {
                    assert!(matches!(l.node(), Node::Or(..)));
                    assert!(matches!(r.node(), Node::Implies(..)));
                }
                other => panic!("unexpected {other:?}"),
            },
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quantifier_body_extends_right() {
        let f = parse("E qx : 0 < qx && qx < 3").unwrap();
        assert!(matches!(f.node(), Node::Exists(_, b) if matches!(b.node(), Node::And(..))));
        let g = parse("0 < 1 && E qx : 0 < qx || qx < 3").unwrap();
        assert!(matches!(g.node(), Node::And(_, b) if matches!(b.node(), Node::Exists(..))));
    }

    #[test]
    fn errors_carry_spans() {
        match parse("0 < < 1") {
            Err(Error::Parse { span, .. }) => assert_eq!(span.start, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("E[0 % 1] (u) : 0 < u"), Err(Error::Parse { .. })));
        assert!(matches!(parse("E>=2 (u,u) : 0 < u"), Err(Error::Parse { .. })));
        assert!(matches!(parse("x == 1 (mod 0)"), Err(Error::Parse { .. })));
    }

    #[test]
    fn derived_operators_expand() {
        let (s, t) = (Var::named("ds"), Var::named("dt"));
        assert_eq!(parse("ds = dt").unwrap(), Formula::equal(Term::var(s), Term::var(t)));
        assert_eq!(parse("ds <= dt").unwrap(), Formula::not(Formula::less(Term::var(t), Term::var(s))));
        assert_eq!(parse("ds >= dt").unwrap(), Formula::not(Formula::less(Term::var(s), Term::var(t))));
        assert_eq!(parse("ds > dt").unwrap(), Formula::less(Term::var(t), Term::var(s)));
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(parse("# header\n0 < 1 # trailing").unwrap(), Formula::less(Term::zero(), Term::constant(1)));
    }

    #[test]
    fn json_round_trip() {
        let f = parse("E[17*jx+25 % 23] (jy1,jy2) : 2*jy1 < 3*jy2 && !(jx == 1 (mod 3))").unwrap();
        assert_eq!(from_json(&to_json(&f)).unwrap(), f);
    }
}
