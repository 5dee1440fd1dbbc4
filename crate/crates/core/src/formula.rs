//! Parser for model formulas and constraint/hint formulas.
//!
//! ```text
//! formula  := ["~"] term ("+" term)*
//! term     := NAME ["(" [args] ")"] | "offset" "(" term ["," value] ")"
//! args     := arg ("," arg)*
//! arg      := [NAME "="] value
//! value    := NUMBER | STRING | BOOL | "diag" | NAME | "[" [value ("," value)*] "]"
//! ```
//!
//! Bare names in value position (and `~name`) are read as strings, so
//! `blocks(attr = sex, levels2 = diag)` and `blocks(attr = "sex", ...)` agree.

use std::fmt;

use crate::error::{ErgmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Str(String),
    Bool(bool),
    Diag,
    List(Vec<Value>),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Integer-valued number.
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Num(x) if x.fract() == 0.0 && x.is_finite() => Some(*x as i64),
            _ => None,
        }
    }

    /// A number or a list of numbers, flattened.
    pub fn as_f64_list(&self) -> Option<Vec<f64>> {
        match self {
            Value::Num(x) => Some(vec![*x]),
            Value::List(items) => items.iter().map(Value::as_f64).collect(),
            _ => None,
        }
    }

    pub fn as_int_list(&self) -> Option<Vec<i64>> {
        match self {
            Value::Num(_) => self.as_int().map(|i| vec![i]),
            Value::List(items) => items.iter().map(Value::as_int).collect(),
            _ => None,
        }
    }

    /// A string or a list of strings.
    pub fn as_str_list(&self) -> Option<Vec<String>> {
        match self {
            Value::Str(s) => Some(vec![s.clone()]),
            Value::List(items) => items.iter().map(|v| v.as_str().map(str::to_string)).collect(),
            _ => None,
        }
    }

    /// A list of equal-length numeric rows.
    pub fn as_matrix(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            Value::List(rows) => {
                let m: Option<Vec<Vec<f64>>> = rows
                    .iter()
                    .map(|r| match r {
                        Value::List(_) => r.as_f64_list(),
                        _ => None,
                    })
                    .collect();
                m.filter(|m| m.iter().all(|r| r.len() == m.len()))
            }
            _ => None,
        }
    }

    pub fn as_bool_matrix(&self) -> Option<Vec<Vec<bool>>> {
        match self {
            Value::List(rows) => {
                let m: Option<Vec<Vec<bool>>> = rows
                    .iter()
                    .map(|r| match r {
                        Value::List(items) => items
                            .iter()
                            .map(|v| match v {
                                Value::Bool(b) => Some(*b),
                                Value::Num(x) if *x == 0.0 || *x == 1.0 => Some(*x == 1.0),
                                _ => None,
                            })
                            .collect(),
                        _ => None,
                    })
                    .collect();
                m.filter(|m| m.iter().all(|r| r.len() == m.len()))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\"")
            }
            Value::Bool(b) => write!(f, "{b}"),
            Value::Diag => f.write_str("diag"),
            Value::List(items) => {
                f.write_str("[")?;
                for (k, v) in items.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arg {
    pub name: Option<String>,
    pub value: Value,
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(n) => write!(f, "{n}={}", self.value),
            None => write!(f, "{}", self.value),
        }
    }
}

/// Which statistics of a term are offsets.
#[derive(Debug, Clone, PartialEq)]
pub enum OffsetSpec {
    None,
    All,
    /// One flag per statistic of the term.
    Mask(Vec<bool>),
    /// 1-based statistic indices within the term.
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermSpec {
    pub name: String,
    pub args: Vec<Arg>,
    pub offset: OffsetSpec,
}

impl TermSpec {
    pub fn new(name: &str) -> Self {
        TermSpec { name: name.to_string(), args: Vec::new(), offset: OffsetSpec::None }
    }

    /// Looks up an argument by name, falling back to the `pos`-th positional one.
    pub fn arg(&self, name: &str, pos: usize) -> Option<&Value> {
        self.args
            .iter()
            .find(|a| a.name.as_deref() == Some(name))
            .or_else(|| self.args.iter().filter(|a| a.name.is_none()).nth(pos))
            .map(|a| &a.value)
    }

    pub fn has_args(&self) -> bool {
        !self.args.is_empty()
    }
}

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = if self.args.is_empty() {
            self.name.clone()
        } else {
            let args: Vec<String> = self.args.iter().map(|a| a.to_string()).collect();
            format!("{}({})", self.name, args.join(", "))
        };
        match &self.offset {
            OffsetSpec::None => f.write_str(&inner),
            OffsetSpec::All => write!(f, "offset({inner})"),
            OffsetSpec::Mask(m) => {
                let v = Value::List(m.iter().map(|&b| Value::Bool(b)).collect());
                write!(f, "offset({inner}, {v})")
            }
            OffsetSpec::Indices(ix) => {
                let v = Value::List(ix.iter().map(|&i| Value::Num(i as f64)).collect());
                write!(f, "offset({inner}, {v})")
            }
        }
    }
}

/// Parsed model formula: an ordered list of terms. Statistic dimension is
/// resolved when the model is bound to a network (some terms expand to one
/// statistic per attribute level).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub terms: Vec<TermSpec>,
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        f.write_str(&terms.join(" + "))
    }
}

impl std::str::FromStr for ModelSpec {
    type Err = ErgmError;
    fn from_str(s: &str) -> Result<Self> {
        parse_model_formula(s)
    }
}

/// Degree cap: one value, per vertex, or per attribute level.
#[derive(Debug, Clone, PartialEq)]
pub enum CapSpec {
    Scalar(u32),
    /// One cap per level of the `bd` attribute (sorted level order).
    PerLevel(Vec<u32>),
    /// One cap per vertex.
    PerVertex(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BdSpec {
    pub maxout: Option<CapSpec>,
    pub maxin: Option<CapSpec>,
    pub attr: Option<String>,
}

/// Forbidden level pairs for `blocks`.
#[derive(Debug, Clone, PartialEq)]
pub enum LevelPairs {
    /// Same-level dyads are fixed.
    Diag,
    /// `m[a][b]` is true when dyads between levels `a` and `b` are fixed.
    Matrix(Vec<Vec<bool>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlocksSpec {
    pub attr: String,
    pub levels2: LevelPairs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StratWeights {
    /// Equal weight on every level pair.
    Uniform,
    /// Proportional to the mixing observed in the starting network.
    Empirical,
    /// Explicit level-pair weight matrix.
    Pmat(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratSpec {
    /// Attributes whose cross-classification defines the strata.
    pub attrs: Vec<String>,
    pub weights: StratWeights,
}

/// Constraints (which restrict the sample space) and hints (which only tune
/// the proposal), parsed from one formula.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintSpec {
    pub bd: Option<BdSpec>,
    pub blocks: Option<BlocksSpec>,
    pub strat: Option<StratSpec>,
    pub sparse: bool,
}

impl ConstraintSpec {
    /// True when the sample space is restricted.
    pub fn has_constraints(&self) -> bool {
        self.bd.is_some() || self.blocks.is_some()
    }

    /// True when a proposal that handles constraints or strata natively is needed.
    pub fn wants_bdstrat(&self) -> bool {
        self.has_constraints() || self.strat.is_some()
    }
}

impl fmt::Display for ConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut atoms = Vec::new();
        if let Some(bd) = &self.bd {
            let mut args = Vec::new();
            let cap = |c: &CapSpec| match c {
                CapSpec::Scalar(x) => x.to_string(),
                CapSpec::PerLevel(v) | CapSpec::PerVertex(v) => Value::List(
                    v.iter().map(|&x| Value::Num(x as f64)).collect(),
                )
                .to_string(),
            };
            if let Some(a) = &bd.attr {
                args.push(format!("attr={}", Value::Str(a.clone())));
            }
            if let Some(c) = &bd.maxout {
                args.push(format!("maxout={}", cap(c)));
            }
            if let Some(c) = &bd.maxin {
                args.push(format!("maxin={}", cap(c)));
            }
            atoms.push(format!("bd({})", args.join(", ")));
        }
        if let Some(b) = &self.blocks {
            let lv = match &b.levels2 {
                LevelPairs::Diag => "diag".to_string(),
                LevelPairs::Matrix(m) => Value::List(
                    m.iter().map(|r| Value::List(r.iter().map(|&x| Value::Bool(x)).collect())).collect(),
                )
                .to_string(),
            };
            atoms.push(format!("blocks(attr={}, levels2={lv})", Value::Str(b.attr.clone())));
        }
        if let Some(s) = &self.strat {
            let attr = if s.attrs.len() == 1 {
                Value::Str(s.attrs[0].clone())
            } else {
                Value::List(s.attrs.iter().map(|a| Value::Str(a.clone())).collect())
            };
            let w = match &s.weights {
                StratWeights::Uniform => String::new(),
                StratWeights::Empirical => ", empirical=true".to_string(),
                StratWeights::Pmat(m) => format!(
                    ", pmat={}",
                    Value::List(
                        m.iter().map(|r| Value::List(r.iter().map(|&x| Value::Num(x)).collect())).collect()
                    )
                ),
            };
            atoms.push(format!("strat(attr={attr}{w})"));
        }
        if self.sparse {
            atoms.push("sparse".into());
        }
        if atoms.is_empty() {
            f.write_str("~.")
        } else {
            f.write_str(&atoms.join(" + "))
        }
    }
}

impl std::str::FromStr for ConstraintSpec {
    type Err = ErgmError;
    fn from_str(s: &str) -> Result<Self> {
        parse_constraint_formula(s)
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    Num(f64),
    Str(String),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Eq,
    Plus,
    Tilde,
    Dot,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut k = 0;
    let err = |pos: usize, msg: &str| ErgmError::Parse { pos: pos + 1, msg: msg.to_string() };
    while k < chars.len() {
        let (pos, c) = chars[k];
        match c {
            c if c.is_whitespace() => k += 1,
            '(' | ')' | '[' | ']' | ',' | '=' | '+' | '~' => {
                out.push((
                    pos,
                    match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        '[' => Tok::LBrack,
                        ']' => Tok::RBrack,
                        ',' => Tok::Comma,
                        '=' => Tok::Eq,
                        '+' => Tok::Plus,
                        _ => Tok::Tilde,
                    },
                ));
                k += 1;
            }
            '"' | '\'' => {
                let quote = c;
                let mut s = String::new();
                k += 1;
                loop {
                    match chars.get(k) {
                        None => return Err(err(pos, "unterminated string")),
                        Some(&(_, '\\')) => {
                            let (_, next) = *chars.get(k + 1).ok_or_else(|| err(pos, "unterminated string"))?;
                            s.push(next);
                            k += 2;
                        }
                        Some(&(_, ch)) if ch == quote => {
                            k += 1;
                            break;
                        }
                        Some(&(_, ch)) => {
                            s.push(ch);
                            k += 1;
                        }
                    }
                }
                out.push((pos, Tok::Str(s)));
            }
            c if c.is_ascii_digit() || c == '-' || (c == '.' && next_is_digit(&chars, k)) => {
                let start = k;
                k += 1;
                while k < chars.len() {
                    let ch = chars[k].1;
                    let prev = chars[k - 1].1;
                    if ch.is_ascii_alphanumeric() || ch == '.' || ((ch == '-' || ch == '+') && (prev == 'e' || prev == 'E')) {
                        k += 1;
                    } else {
                        break;
                    }
                }
                let end = chars.get(k).map(|c| c.0).unwrap_or(text.len());
                let lit = &text[pos..end];
                let num = parse_number(lit).ok_or_else(|| err(chars[start].0, &format!("bad number '{lit}'")))?;
                out.push((pos, Tok::Num(num)));
            }
            '.' => {
                out.push((pos, Tok::Dot));
                k += 1;
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = pos;
                while k < chars.len() && (chars[k].1.is_alphanumeric() || chars[k].1 == '_' || chars[k].1 == '.') {
                    k += 1;
                }
                let end = chars.get(k).map(|c| c.0).unwrap_or(text.len());
                out.push((start, Tok::Name(text[start..end].to_string())));
            }
            _ => return Err(err(pos, &format!("unexpected character '{c}'"))),
        }
    }
    Ok(out)
}

fn next_is_digit(chars: &[(usize, char)], k: usize) -> bool {
    chars.get(k + 1).is_some_and(|c| c.1.is_ascii_digit())
}

fn parse_number(lit: &str) -> Option<f64> {
    match lit.to_ascii_lowercase().as_str() {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        l if l.contains("inf") || l.contains("nan") => None,
        _ => lit.parse().ok(),
    }
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<(usize, Tok)>,
    k: usize,
    end: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Parser { toks: lex(text)?, k: 0, end: text.len() })
    }

    fn pos(&self) -> usize {
        self.toks.get(self.k).map(|t| t.0).unwrap_or(self.end) + 1
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(ErgmError::Parse { pos: self.pos(), msg: msg.into() })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.k).map(|t| &t.1)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.k += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            match self.peek() {
                None => self.err(format!("expected {what}, found end of input")),
                Some(found) => self.err(format!("expected {what}, found {found:?}")),
            }
        }
    }

    fn name(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Name(n)) => {
                let n = n.clone();
                self.k += 1;
                Ok(n)
            }
            _ => self.err("expected a term name"),
        }
    }

    fn formula(&mut self) -> Result<Vec<TermSpec>> {
        self.eat(&Tok::Tilde);
        let mut terms = vec![self.term()?];
        while self.eat(&Tok::Plus) {
            terms.push(self.term()?);
        }
        if self.peek().is_some() {
            return self.err("unexpected token after formula (unbalanced parentheses?)");
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<TermSpec> {
        let start = self.pos();
        let name = self.name()?;
        if name == "offset" {
            self.expect(&Tok::LParen, "'(' after offset")?;
            let mut inner = self.term()?;
            if inner.offset != OffsetSpec::None {
                return Err(ErgmError::Parse { pos: start, msg: "nested offset".into() });
            }
            inner.offset = OffsetSpec::All;
            if self.eat(&Tok::Comma) {
                let mask_pos = self.pos();
                let v = self.value()?;
                inner.offset = match &v {
                    Value::List(items) if items.iter().all(|x| matches!(x, Value::Bool(_))) => {
                        OffsetSpec::Mask(items.iter().map(|x| x.as_bool().unwrap()).collect())
                    }
                    Value::Bool(b) => OffsetSpec::Mask(vec![*b]),
                    _ => match v.as_int_list() {
                        Some(ix) if ix.iter().all(|&i| i >= 1) => {
                            OffsetSpec::Indices(ix.into_iter().map(|i| i as usize).collect())
                        }
                        _ => {
                            return Err(ErgmError::Parse {
                                pos: mask_pos,
                                msg: "offset mask must be a list of booleans or 1-based indices".into(),
                            })
                        }
                    },
                };
            }
            self.expect(&Tok::RParen, "')' closing offset")?;
            return Ok(inner);
        }
        let mut term = TermSpec::new(&name);
        if self.eat(&Tok::LParen) {
            if !self.eat(&Tok::RParen) {
                loop {
                    term.args.push(self.arg()?);
                    if self.eat(&Tok::Comma) {
                        continue;
                    }
                    self.expect(&Tok::RParen, "')' or ','")?;
                    break;
                }
            }
        }
        Ok(term)
    }

    fn arg(&mut self) -> Result<Arg> {
        if let (Some(Tok::Name(n)), Some((_, Tok::Eq))) = (self.peek(), self.toks.get(self.k + 1)) {
            let n = n.clone();
            self.k += 2;
            return Ok(Arg { name: Some(n), value: self.value()? });
        }
        Ok(Arg { name: None, value: self.value()? })
    }

    fn value(&mut self) -> Result<Value> {
        let tok = match self.peek() {
            Some(t) => t.clone(),
            None => return self.err("expected a value, found end of input"),
        };
        self.k += 1;
        match tok {
            Tok::Num(x) => Ok(Value::Num(x)),
            Tok::Str(s) => Ok(Value::Str(s)),
            Tok::Tilde => match self.peek() {
                Some(Tok::Name(n)) => {
                    let n = n.clone();
                    self.k += 1;
                    Ok(Value::Str(n))
                }
                _ => self.err("expected an attribute name after '~'"),
            },
            Tok::Name(n) => Ok(match n.as_str() {
                "true" | "TRUE" | "T" => Value::Bool(true),
                "false" | "FALSE" | "F" => Value::Bool(false),
                "diag" => Value::Diag,
                "Inf" | "inf" => Value::Num(f64::INFINITY),
                _ => Value::Str(n),
            }),
            Tok::LBrack => {
                let mut items = Vec::new();
                if !self.eat(&Tok::RBrack) {
                    loop {
                        items.push(self.value()?);
                        if self.eat(&Tok::Comma) {
                            continue;
                        }
                        self.expect(&Tok::RBrack, "']' or ','")?;
                        break;
                    }
                }
                Ok(Value::List(items))
            }
            _ => {
                self.k -= 1;
                self.err("expected a value")
            }
        }
    }
}

/// Parses a model formula such as `edges + nodematch("sex") + offset(concurrent)`.
/// Term names and argument types are validated against the term catalog.
pub fn parse_model_formula(text: &str) -> Result<ModelSpec> {
    if text.trim().is_empty() {
        return Err(ErgmError::Parse { pos: 1, msg: "empty formula".into() });
    }
    let mut p = Parser::new(text)?;
    let terms = p.formula()?;
    for t in &terms {
        crate::model::validate_term(t)?;
    }
    Ok(ModelSpec { terms })
}

/// Parses a constraint/hint formula, e.g.
/// `bd(maxout=1) + blocks(attr="sex", levels2=diag) + strat(attr="race", empirical=true) + sparse`.
/// The literal `~.` (or `.`) denotes no constraints.
pub fn parse_constraint_formula(text: &str) -> Result<ConstraintSpec> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ErgmError::Parse { pos: 1, msg: "empty constraint formula".into() });
    }
    if trimmed == "~." || trimmed == "." || trimmed == "~ ." {
        return Ok(ConstraintSpec::default());
    }
    let mut p = Parser::new(text)?;
    let terms = p.formula()?;
    let mut spec = ConstraintSpec::default();
    for t in terms {
        let dup = |what: &str| ErgmError::Parse { pos: 1, msg: format!("'{what}' given twice") };
        let bad = |msg: String| ErgmError::Parse { pos: 1, msg: format!("{}: {msg}", t.name) };
        if t.offset != OffsetSpec::None {
            return Err(bad("offset() is not allowed in constraints".into()));
        }
        for a in &t.args {
            let allowed: &[&str] = match t.name.as_str() {
                "bd" => &["maxout", "maxin", "attr", "attribs"],
                "blocks" => &["attr", "levels2"],
                "strat" => &["attr", "empirical", "pmat"],
                _ => &[],
            };
            if let Some(n) = &a.name {
                if !allowed.contains(&n.as_str()) {
                    return Err(bad(format!("unknown argument '{n}'")));
                }
            }
        }
        match t.name.as_str() {
            "sparse" => {
                if t.has_args() {
                    return Err(bad("takes no arguments".into()));
                }
                spec.sparse = true;
            }
            "bd" => {
                if spec.bd.is_some() {
                    return Err(dup("bd"));
                }
                let attr = match t.arg("attr", usize::MAX).or_else(|| t.arg("attribs", usize::MAX)) {
                    Some(v) => Some(v.as_str().ok_or_else(|| bad("attr must be a string".into()))?.to_string()),
                    None => None,
                };
                let cap = |v: Option<&Value>| -> Result<Option<CapSpec>> {
                    let Some(v) = v else { return Ok(None) };
                    let ints = v
                        .as_int_list()
                        .filter(|x| x.iter().all(|&c| c >= 0))
                        .ok_or_else(|| bad("degree caps must be non-negative integers".into()))?;
                    let ints: Vec<u32> = ints.into_iter().map(|c| c as u32).collect();
                    Ok(Some(match v {
                        Value::Num(_) => CapSpec::Scalar(ints[0]),
                        _ if attr.is_some() => CapSpec::PerLevel(ints),
                        _ => CapSpec::PerVertex(ints),
                    }))
                };
                let maxout = cap(t.arg("maxout", 0))?;
                let maxin = cap(t.arg("maxin", 1))?;
                if maxout.is_none() && maxin.is_none() {
                    return Err(bad("needs maxout and/or maxin".into()));
                }
                spec.bd = Some(BdSpec { maxout, maxin, attr });
            }
            "blocks" => {
                if spec.blocks.is_some() {
                    return Err(dup("blocks"));
                }
                let attr = t
                    .arg("attr", 0)
                    .and_then(Value::as_str)
                    .ok_or_else(|| bad("needs attr".into()))?
                    .to_string();
                let levels2 = match t.arg("levels2", 1) {
                    Some(Value::Diag) => LevelPairs::Diag,
                    Some(v) => LevelPairs::Matrix(
                        v.as_bool_matrix().ok_or_else(|| bad("levels2 must be diag or a square boolean matrix".into()))?,
                    ),
                    None => return Err(bad("needs levels2".into())),
                };
                spec.blocks = Some(BlocksSpec { attr, levels2 });
            }
            "strat" => {
                if spec.strat.is_some() {
                    return Err(dup("strat"));
                }
                let attrs = t
                    .arg("attr", 0)
                    .and_then(Value::as_str_list)
                    .filter(|a| !a.is_empty())
                    .ok_or_else(|| bad("needs attr (a name or a list of names)".into()))?;
                let empirical = match t.arg("empirical", usize::MAX) {
                    Some(v) => v.as_bool().ok_or_else(|| bad("empirical must be a boolean".into()))?,
                    None => false,
                };
                let pmat = match t.arg("pmat", usize::MAX) {
                    Some(v) => Some(v.as_matrix().ok_or_else(|| bad("pmat must be a square numeric matrix".into()))?),
                    None => None,
                };
                let weights = match (empirical, pmat) {
                    (true, Some(_)) => return Err(bad("give either empirical or pmat, not both".into())),
                    (true, None) => StratWeights::Empirical,
                    (false, Some(m)) => {
                        if m.iter().flatten().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                            return Err(bad("pmat entries must be finite and non-negative".into()));
                        }
                        if !m.iter().flatten().any(|&x| x > 0.0) {
                            return Err(bad("pmat needs at least one positive entry".into()));
                        }
                        StratWeights::Pmat(m)
                    }
                    (false, None) => StratWeights::Uniform,
                };
                spec.strat = Some(StratSpec { attrs, weights });
            }
            other => {
                return Err(ErgmError::Parse { pos: 1, msg: format!("unknown constraint or hint '{other}'") })
            }
        }
    }
    Ok(spec)
}
