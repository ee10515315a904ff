//! Theory front end: the `.thy` specification DSL and its validated data model.
//!
//! A theory is a finite signature of named, fixed-arity connectives together
//! with equational axioms over shared variables:
//!
//! ```text
//! theory Bool {
//!     op and: 2;
//!     op or: 2;
//!     op not: 1;
//!     axiom comm_and: and(x, y) = and(y, x);
//!     axiom de_morgan: not(and(x, y)) = or(not(x), not(y));
//! }
//! ```
//!
//! Variables are whatever identifiers are not declared connectives; the parser
//! resolves them to positional indices per axiom (order of first occurrence,
//! left side first), so the in-memory model is name-free and substitution is
//! deterministic. `//` starts a line comment. Arity-0 connectives (constants)
//! are allowed.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// A named logical connective with a fixed finite arity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Connective {
    pub name: String,
    pub arity: usize,
}

/// A syntax tree over a signature. Variables are positional indices into the
/// enclosing context.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(usize),
    App { connective: String, args: Vec<Term> },
}

impl Term {
    pub fn var(index: usize) -> Term {
        Term::Var(index)
    }

    pub fn app(connective: impl Into<String>, args: Vec<Term>) -> Term {
        Term::App {
            connective: connective.into(),
            args,
        }
    }

    /// Gate depth: variables are 0, an application is one more than its
    /// deepest argument (so constants have depth 1).
    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) => 0,
            Term::App { args, .. } => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
        }
    }

    /// Smallest context size the term is well-formed over.
    pub fn min_context(&self) -> usize {
        match self {
            Term::Var(i) => i + 1,
            Term::App { args, .. } => args.iter().map(Term::min_context).max().unwrap_or(0),
        }
    }

    /// Checks arities against the theory and variable indices against the
    /// context size.
    pub fn well_formed(&self, theory: &Theory, context_size: usize) -> bool {
        match self {
            Term::Var(i) => *i < context_size,
            Term::App { connective, args } => match theory.arity_of(connective) {
                Some(k) => {
                    k == args.len() && args.iter().all(|a| a.well_formed(theory, context_size))
                }
                None => false,
            },
        }
    }

    fn fmt_with(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(i) => write!(f, "x{i}"),
            Term::App { connective, args } => {
                write!(f, "{connective}")?;
                if !args.is_empty() {
                    write!(f, "(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        a.fmt_with(f)?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_with(f)
    }
}

/// Total order used to pick class representatives: by depth, then variables
/// before applications, then connective name, then arguments lexicographically.
impl Ord for Term {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match self.depth().cmp(&other.depth()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        match (self, other) {
            (Term::Var(a), Term::Var(b)) => a.cmp(b),
            (Term::Var(_), Term::App { .. }) => Ordering::Less,
            (Term::App { .. }, Term::Var(_)) => Ordering::Greater,
            (
                Term::App {
                    connective: ca,
                    args: aa,
                },
                Term::App {
                    connective: cb,
                    args: ab,
                },
            ) => ca.cmp(cb).then_with(|| aa.cmp(ab)),
        }
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// An equation between two terms over a shared variable context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axiom {
    pub name: String,
    pub context_size: usize,
    pub lhs: Term,
    pub rhs: Term,
}

/// A finitary logical theory: signature plus equational axioms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Theory {
    pub name: String,
    pub connectives: Vec<Connective>,
    pub axioms: Vec<Axiom>,
}

impl Theory {
    pub fn arity_of(&self, name: &str) -> Option<usize> {
        self.connectives
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.arity)
    }

    /// Renders the theory back into DSL syntax. Variables print as `x0, x1, …`
    /// in index order, so parsing the output reproduces the same structure.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("theory {} {{\n", self.name));
        for c in &self.connectives {
            out.push_str(&format!("    op {}: {};\n", c.name, c.arity));
        }
        for a in &self.axioms {
            out.push_str(&format!("    axiom {}: {} = {};\n", a.name, a.lhs, a.rhs));
        }
        out.push_str("}\n");
        out
    }
}

/// A validation finding; an empty diagnostic list means the theory is
/// well-formed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Axiom the finding is attached to, when applicable.
    pub axiom: Option<String>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.axiom {
            Some(a) => write!(f, "axiom {}: {}", a, self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

/// Checks every structural invariant of a [`Theory`] and returns one
/// diagnostic per violation. Parsed theories always pass; this exists for
/// programmatically constructed values.
pub fn validate_theory(theory: &Theory) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for c in &theory.connectives {
        if seen.insert(c.name.clone(), c.arity).is_some() {
            out.push(Diagnostic {
                axiom: None,
                message: format!("duplicate connective name `{}`", c.name),
            });
        }
    }
    let mut axiom_names = HashMap::new();
    for a in &theory.axioms {
        if axiom_names.insert(a.name.clone(), ()).is_some() {
            out.push(Diagnostic {
                axiom: Some(a.name.clone()),
                message: "duplicate axiom name".into(),
            });
        }
        for (side, term) in [("left", &a.lhs), ("right", &a.rhs)] {
            collect_term_diagnostics(term, theory, a, side, &mut out);
        }
    }
    out
}

fn collect_term_diagnostics(
    term: &Term,
    theory: &Theory,
    axiom: &Axiom,
    side: &str,
    out: &mut Vec<Diagnostic>,
) {
    match term {
        Term::Var(i) => {
            if *i >= axiom.context_size {
                out.push(Diagnostic {
                    axiom: Some(axiom.name.clone()),
                    message: format!(
                        "{side} side uses variable x{i} outside context of size {}",
                        axiom.context_size
                    ),
                });
            }
        }
        Term::App { connective, args } => {
            match theory.arity_of(connective) {
                None => out.push(Diagnostic {
                    axiom: Some(axiom.name.clone()),
                    message: format!("{side} side uses undeclared connective `{connective}`"),
                }),
                Some(k) if k != args.len() => out.push(Diagnostic {
                    axiom: Some(axiom.name.clone()),
                    message: format!(
                        "{side} side applies `{connective}` to {} arguments, arity is {k}",
                        args.len()
                    ),
                }),
                Some(_) => {}
            }
            for a in args {
                collect_term_diagnostics(a, theory, axiom, side, out);
            }
        }
    }
}

/// Parse failure with source position (1-based line and column).
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("{line}:{col}: `{connective}` applied to {found} arguments, declared arity is {expected}")]
    ArityMismatch {
        line: usize,
        col: usize,
        connective: String,
        expected: usize,
        found: usize,
    },
    #[error("{line}:{col}: undeclared connective `{name}`")]
    UndeclaredConnective { line: usize, col: usize, name: String },
    #[error("{line}:{col}: duplicate name `{name}`")]
    DuplicateName { line: usize, col: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Nat(usize),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Semi,
    Comma,
    Equals,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Nat(n) => write!(f, "`{n}`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Equals => write!(f, "`=`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

struct Lexer<'a> {
    src: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.src.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
        let mut out = Vec::new();
        loop {
            while let Some(&c) = self.src.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '/' {
                    // either a `//` comment or an error
                    let (line, col) = (self.line, self.col);
                    self.bump();
                    if self.src.peek() == Some(&'/') {
                        while let Some(&c) = self.src.peek() {
                            if c == '\n' {
                                break;
                            }
                            self.bump();
                        }
                    } else {
                        return Err(ParseError::Syntax {
                            line,
                            col,
                            expected: "`//` comment or token".into(),
                            found: "`/`".into(),
                        });
                    }
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(&c) = self.src.peek() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            let tok = match c {
                '{' => {
                    self.bump();
                    Tok::LBrace
                }
                '}' => {
                    self.bump();
                    Tok::RBrace
                }
                '(' => {
                    self.bump();
                    Tok::LParen
                }
                ')' => {
                    self.bump();
                    Tok::RParen
                }
                ':' => {
                    self.bump();
                    Tok::Colon
                }
                ';' => {
                    self.bump();
                    Tok::Semi
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '=' => {
                    self.bump();
                    Tok::Equals
                }
                c if c.is_ascii_digit() => {
                    let mut n = String::new();
                    while let Some(&c) = self.src.peek() {
                        if c.is_ascii_digit() {
                            n.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Nat(n.parse().map_err(|_| ParseError::Syntax {
                        line,
                        col,
                        expected: "natural number".into(),
                        found: format!("`{n}`"),
                    })?)
                }
                c if c.is_alphabetic() || c == '_' => {
                    let mut s = String::new();
                    while let Some(&c) = self.src.peek() {
                        if c.is_alphanumeric() || c == '_' {
                            s.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Ident(s)
                }
                other => {
                    return Err(ParseError::Syntax {
                        line,
                        col,
                        expected: "token".into(),
                        found: format!("`{other}`"),
                    })
                }
            };
            out.push((tok, line, col));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &(Tok, usize, usize) {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> (Tok, usize, usize) {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(usize, usize), ParseError> {
        let (tok, line, col) = self.next();
        if &tok == want {
            Ok((line, col))
        } else {
            Err(ParseError::Syntax {
                line,
                col,
                expected: what.into(),
                found: tok.to_string(),
            })
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, usize, usize), ParseError> {
        let (tok, line, col) = self.next();
        match tok {
            Tok::Ident(s) => Ok((s, line, col)),
            other => Err(ParseError::Syntax {
                line,
                col,
                expected: what.into(),
                found: other.to_string(),
            }),
        }
    }

    fn parse_theory(&mut self) -> Result<Theory, ParseError> {
        let (kw, line, col) = self.expect_ident("keyword `theory`")?;
        if kw != "theory" {
            return Err(ParseError::Syntax {
                line,
                col,
                expected: "keyword `theory`".into(),
                found: format!("`{kw}`"),
            });
        }
        let (name, ..) = self.expect_ident("theory name")?;
        self.expect(&Tok::LBrace, "`{`")?;

        let mut theory = Theory {
            name,
            connectives: Vec::new(),
            axioms: Vec::new(),
        };
        loop {
            let (tok, line, col) = self.next();
            match tok {
                Tok::RBrace => break,
                Tok::Ident(kw) if kw == "op" => {
                    let (name, nline, ncol) = self.expect_ident("connective name")?;
                    if theory.arity_of(&name).is_some() {
                        return Err(ParseError::DuplicateName {
                            line: nline,
                            col: ncol,
                            name,
                        });
                    }
                    self.expect(&Tok::Colon, "`:`")?;
                    let (tok, line, col) = self.next();
                    let arity = match tok {
                        Tok::Nat(n) => n,
                        other => {
                            return Err(ParseError::Syntax {
                                line,
                                col,
                                expected: "arity".into(),
                                found: other.to_string(),
                            })
                        }
                    };
                    self.expect(&Tok::Semi, "`;`")?;
                    theory.connectives.push(Connective { name, arity });
                }
                Tok::Ident(kw) if kw == "axiom" => {
                    let (name, nline, ncol) = self.expect_ident("axiom name")?;
                    if theory.axioms.iter().any(|a| a.name == name) {
                        return Err(ParseError::DuplicateName {
                            line: nline,
                            col: ncol,
                            name,
                        });
                    }
                    self.expect(&Tok::Colon, "`:`")?;
                    let mut vars = Vec::new();
                    let lhs = self.parse_term(&theory, &mut vars)?;
                    self.expect(&Tok::Equals, "`=`")?;
                    let rhs = self.parse_term(&theory, &mut vars)?;
                    self.expect(&Tok::Semi, "`;`")?;
                    theory.axioms.push(Axiom {
                        name,
                        context_size: vars.len(),
                        lhs,
                        rhs,
                    });
                }
                other => {
                    return Err(ParseError::Syntax {
                        line,
                        col,
                        expected: "`op`, `axiom` or `}`".into(),
                        found: other.to_string(),
                    })
                }
            }
        }
        let (tok, line, col) = self.next();
        if tok != Tok::Eof {
            return Err(ParseError::Syntax {
                line,
                col,
                expected: "end of input".into(),
                found: tok.to_string(),
            });
        }
        Ok(theory)
    }

    /// `vars` accumulates variable names in order of first occurrence; their
    /// position is the positional index.
    fn parse_term(&mut self, theory: &Theory, vars: &mut Vec<String>) -> Result<Term, ParseError> {
        let (name, line, col) = self.expect_ident("term")?;
        let has_args = self.peek().0 == Tok::LParen;
        let declared = theory.arity_of(&name);

        if has_args {
            let arity = declared.ok_or_else(|| ParseError::UndeclaredConnective {
                line,
                col,
                name: name.clone(),
            })?;
            self.expect(&Tok::LParen, "`(`")?;
            let mut args = vec![self.parse_term(theory, vars)?];
            while self.peek().0 == Tok::Comma {
                self.next();
                args.push(self.parse_term(theory, vars)?);
            }
            self.expect(&Tok::RParen, "`)`")?;
            if args.len() != arity {
                return Err(ParseError::ArityMismatch {
                    line,
                    col,
                    connective: name,
                    expected: arity,
                    found: args.len(),
                });
            }
            Ok(Term::app(name, args))
        } else if let Some(arity) = declared {
            // a bare connective is a zero-argument application
            if arity != 0 {
                return Err(ParseError::ArityMismatch {
                    line,
                    col,
                    connective: name,
                    expected: arity,
                    found: 0,
                });
            }
            Ok(Term::app(name, vec![]))
        } else {
            let index = match vars.iter().position(|v| v == &name) {
                Some(i) => i,
                None => {
                    vars.push(name);
                    vars.len() - 1
                }
            };
            Ok(Term::Var(index))
        }
    }
}

/// Parses a theory specification in the `.thy` DSL.
pub fn parse_theory(source: &str) -> Result<Theory, ParseError> {
    let toks = Lexer::new(source).tokens()?;
    Parser { toks, pos: 0 }.parse_theory()
}

/// Parses a standalone term over a theory's signature, e.g. a CLI `--expr`
/// argument. Free identifiers become variables indexed by first occurrence;
/// returns the term, its context size, and the variable names in index order.
pub fn parse_expression(
    theory: &Theory,
    source: &str,
) -> Result<(Term, usize, Vec<String>), ParseError> {
    let toks = Lexer::new(source).tokens()?;
    let mut parser = Parser { toks, pos: 0 };
    let mut vars = Vec::new();
    let term = parser.parse_term(theory, &mut vars)?;
    let (tok, line, col) = parser.next();
    if tok != Tok::Eof {
        return Err(ParseError::Syntax {
            line,
            col,
            expected: "end of input".into(),
            found: tok.to_string(),
        });
    }
    Ok((term, vars.len(), vars))
}

/// The two-connective-plus-negation boolean theory used throughout the test
/// suites: `and`, `or`, `not` with commutativity, De Morgan, distributivity
/// and double negation.
pub fn bool_theory() -> Theory {
    parse_theory(
        r#"
        theory Bool {
            op and: 2;
            op or: 2;
            op not: 1;
            axiom comm_and: and(x, y) = and(y, x);
            axiom comm_or: or(x, y) = or(y, x);
            axiom de_morgan: not(and(x, y)) = or(not(x), not(y));
            axiom distrib: and(x, or(y, z)) = or(and(x, y), and(x, z));
            axiom double_neg: not(not(x)) = x;
        }
        "#,
    )
    .expect("builtin theory parses")
}
