//! Command-line front end: an expression parser for trace operators and
//! subcommands dispatching the engine, with text/JSON/LaTeX emission.
//!
//! Exit codes make the binary scriptable as a checker: 0 success, 1 a
//! property the command verifies is violated, 2 usage or parse errors,
//! 3 a computation refused by a size or truncation guard.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num::{BigInt, BigRational, One, Zero};

use crate::brst_cyclic::{
    brst_differential, builtin, classical_limit_compare, cohomology_dimensions,
    enumerate_cochain_basis, hochschild_b, q_squared_check, verify_n4, BrstContext, BrstError,
    CyclicAlgebraSpec,
};
use crate::deligne_diagrams::{count_diagrams, Diagram, DiagramError, Word};
use crate::ope_engine::{
    grading_check, mode_product, planar_singular_ope, singular_ope, OPEResult,
};
use crate::operator_algebra::{
    multitrace_from_letters, operator_to_json, operator_to_latex, render_operator, Letter,
    OperatorSum, PairingTable,
};
use crate::scalars::GradedCoefficient;

/// Parse failure with a byte offset into the source string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub message: String,
    pub position: usize,
}

impl ParseError {
    fn new(message: impl Into<String>, position: usize) -> Self {
        ParseError {
            message: message.into(),
            position,
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Int(String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Int(s) => format!("integer `{}`", s),
            Tok::Ident(s) => format!("`{}`", s),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut toks = Vec::new();
    let mut it = src.char_indices().peekable();
    while let Some(&(i, ch)) = it.peek() {
        match ch {
            c if c.is_whitespace() => {
                it.next();
            }
            '+' => {
                it.next();
                toks.push((Tok::Plus, i));
            }
            '-' => {
                it.next();
                toks.push((Tok::Minus, i));
            }
            '*' => {
                it.next();
                toks.push((Tok::Star, i));
            }
            '/' => {
                it.next();
                toks.push((Tok::Slash, i));
            }
            '^' => {
                it.next();
                toks.push((Tok::Caret, i));
            }
            '(' => {
                it.next();
                toks.push((Tok::LParen, i));
            }
            ')' => {
                it.next();
                toks.push((Tok::RParen, i));
            }
            ',' => {
                it.next();
                toks.push((Tok::Comma, i));
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&(_, c)) = it.peek() {
                    if c.is_ascii_digit() {
                        s.push(c);
                        it.next();
                    } else {
                        break;
                    }
                }
                toks.push((Tok::Int(s), i));
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&(_, c)) = it.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        s.push(c);
                        it.next();
                    } else {
                        break;
                    }
                }
                toks.push((Tok::Ident(s), i));
            }
            c => {
                return Err(ParseError::new(format!("unexpected character {:?}", c), i));
            }
        }
    }
    Ok(toks)
}

struct ExprParser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    depth: usize,
    table: &'a PairingTable,
    parity: Vec<u8>,
}

const MAX_NESTING: usize = 200;

/// Parse the surface syntax into a canonical operator. Grammar:
///
///   expr   := ['-'] term (('+' | '-') term)*
///   term   := factor ('*' factor)*
///   factor := '-' factor | int ['/' int] | 'N' power | 'hbar' power
///           | 'lambda' power | 'd' half-power | 'Tr' '(' letters ')'
///           | '(' expr ')'
///   letters := letter ([','] letter)*          (commas optional)
///   letter  := ['d' '^' int] field-name
///
/// Field names resolve against the model; traces canonicalize on the way
/// in, so `Tr(Z2 Z1)` comes back as the canonical rotation `Tr(Z1, Z2)`.
pub fn parse_expression(src: &str, table: &PairingTable) -> Result<OperatorSum, ParseError> {
    let toks = tokenize(src)?;
    let mut p = ExprParser {
        toks,
        pos: 0,
        end: src.len(),
        depth: 0,
        parity: table.parities(),
        table,
    };
    let x = p.parse_expr()?;
    if let Some((t, at)) = p.toks.get(p.pos) {
        return Err(ParseError::new(
            format!("unexpected trailing {}", t.describe()),
            *at,
        ));
    }
    Ok(x)
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, i)| *i)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn neg_one() -> BigRational {
        -BigRational::one()
    }

    fn parse_expr(&mut self) -> Result<OperatorSum, ParseError> {
        let neg = self.eat(&Tok::Minus);
        let mut acc = self.parse_term()?;
        if neg {
            acc = acc.scale_rational(&Self::neg_one());
        }
        loop {
            if self.eat(&Tok::Plus) {
                acc = acc.add(&self.parse_term()?);
            } else if self.eat(&Tok::Minus) {
                acc = acc.add(&self.parse_term()?.scale_rational(&Self::neg_one()));
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn parse_term(&mut self) -> Result<OperatorSum, ParseError> {
        let mut acc = self.parse_factor()?;
        while self.eat(&Tok::Star) {
            acc = acc.normal_mul(&self.parse_factor()?, &self.parity);
        }
        Ok(acc)
    }

    fn parse_factor(&mut self) -> Result<OperatorSum, ParseError> {
        if self.depth >= MAX_NESTING {
            return Err(ParseError::new("expression too deeply nested", self.here()));
        }
        self.depth += 1;
        let r = self.parse_factor_inner();
        self.depth -= 1;
        r
    }

    fn parse_factor_inner(&mut self) -> Result<OperatorSum, ParseError> {
        let at = self.here();
        match self.bump() {
            Some(Tok::Minus) => Ok(self.parse_factor()?.scale_rational(&Self::neg_one())),
            Some(Tok::Int(s)) => {
                let mut r = BigRational::from_integer(big(&s, at)?);
                if self.eat(&Tok::Slash) {
                    let at2 = self.here();
                    let d = self.expect_int("denominator")?;
                    let d = big(&d, at2)?;
                    if d.is_zero() {
                        return Err(ParseError::new("division by zero", at2));
                    }
                    r /= BigRational::from_integer(d);
                }
                if self.peek() == Some(&Tok::Caret) {
                    return Err(ParseError::new(
                        "`^` is only valid after N, hbar, lambda or d",
                        self.here(),
                    ));
                }
                Ok(OperatorSum::unit().scale(&GradedCoefficient::from_rational(r)))
            }
            Some(Tok::LParen) => {
                let x = self.parse_expr()?;
                if !self.eat(&Tok::RParen) {
                    return Err(ParseError::new(
                        "unbalanced parentheses: expected `)`",
                        self.here(),
                    ));
                }
                Ok(x)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "Tr" => self.parse_trace(),
                "N" => self.scalar_power(2),
                "hbar" => self.scalar_power(1),
                "lambda" => self.scalar_power(3),
                "d" => self.parse_d_power(),
                other => {
                    if self.table.field_index(other).is_some() {
                        Err(ParseError::new(
                            format!("field `{}` must appear inside Tr(...)", other),
                            at,
                        ))
                    } else {
                        Err(ParseError::new(format!("unknown symbol `{}`", other), at))
                    }
                }
            },
            Some(t) => Err(ParseError::new(
                format!("expected a factor, found {}", t.describe()),
                at,
            )),
            None => Err(ParseError::new("expected a factor, found end of input", at)),
        }
    }

    fn expect_int(&mut self, what: &str) -> Result<String, ParseError> {
        let at = self.here();
        match self.bump() {
            Some(Tok::Int(s)) => Ok(s),
            Some(t) => Err(ParseError::new(
                format!("expected {}, found {}", what, t.describe()),
                at,
            )),
            None => Err(ParseError::new(
                format!("expected {}, found end of input", what),
                at,
            )),
        }
    }

    fn signed_exponent(&mut self) -> Result<i32, ParseError> {
        let neg = self.eat(&Tok::Minus);
        let at = self.here();
        let s = self.expect_int("an exponent")?;
        let k: i32 = s
            .parse()
            .map_err(|_| ParseError::new("exponent out of range", at))?;
        Ok(if neg { -k } else { k })
    }

    /// N / hbar / lambda with an optional integer power.
    fn scalar_power(&mut self, slot: usize) -> Result<OperatorSum, ParseError> {
        let k = if self.eat(&Tok::Caret) {
            self.signed_exponent()?
        } else {
            1
        };
        let mut exps = [0i32; 4];
        exps[slot] = k;
        Ok(OperatorSum::unit().scale(&GradedCoefficient::monomial(exps, BigRational::one())))
    }

    /// The Rees parameter carries half-integer powers, written `d^k` or
    /// `d^(k/2)`.
    fn parse_d_power(&mut self) -> Result<OperatorSum, ParseError> {
        let half_exp = if self.eat(&Tok::Caret) {
            if self.eat(&Tok::LParen) {
                let num = self.signed_exponent()?;
                let at = self.here();
                if !self.eat(&Tok::Slash) {
                    return Err(ParseError::new("expected `/` in half-integer power", at));
                }
                let at2 = self.here();
                let den = self.expect_int("a denominator")?;
                let scale = match den.as_str() {
                    "1" => 2,
                    "2" => 1,
                    _ => return Err(ParseError::new("denominator must be 1 or 2", at2)),
                };
                let at3 = self.here();
                if !self.eat(&Tok::RParen) {
                    return Err(ParseError::new(
                        "unbalanced parentheses: expected `)`",
                        at3,
                    ));
                }
                num * scale
            } else {
                2 * self.signed_exponent()?
            }
        } else {
            2
        };
        let exps = [half_exp, 0, 0, 0];
        Ok(OperatorSum::unit().scale(&GradedCoefficient::monomial(exps, BigRational::one())))
    }

    fn parse_trace(&mut self) -> Result<OperatorSum, ParseError> {
        let at = self.here();
        if !self.eat(&Tok::LParen) {
            return Err(ParseError::new("expected `(` after Tr", at));
        }
        let mut letters: Vec<Letter> = Vec::new();
        loop {
            while self.eat(&Tok::Comma) {}
            if self.eat(&Tok::RParen) {
                break;
            }
            let at = self.here();
            match self.bump() {
                Some(Tok::Ident(w)) if w == "d" => {
                    let at2 = self.here();
                    if !self.eat(&Tok::Caret) {
                        return Err(ParseError::new("expected `^` after d", at2));
                    }
                    let at3 = self.here();
                    let s = self.expect_int("a derivative order")?;
                    let k: u16 = s
                        .parse()
                        .map_err(|_| ParseError::new("derivative order out of range", at3))?;
                    let at4 = self.here();
                    match self.bump() {
                        Some(Tok::Ident(fname)) => {
                            letters.push(Letter {
                                field: self.field(&fname, at4)?,
                                deriv: k,
                            });
                        }
                        Some(t) => {
                            return Err(ParseError::new(
                                format!("expected a field after d^{}, found {}", k, t.describe()),
                                at4,
                            ));
                        }
                        None => {
                            return Err(ParseError::new(
                                "expected a field after the derivative marker",
                                at4,
                            ));
                        }
                    }
                }
                Some(Tok::Ident(fname)) => {
                    letters.push(Letter {
                        field: self.field(&fname, at)?,
                        deriv: 0,
                    });
                }
                Some(t) => {
                    return Err(ParseError::new(
                        format!("expected a field letter, found {}", t.describe()),
                        at,
                    ));
                }
                None => {
                    return Err(ParseError::new(
                        "unbalanced parentheses: trace is missing `)`",
                        at,
                    ));
                }
            }
        }
        if letters.is_empty() {
            return Err(ParseError::new("empty trace", at));
        }
        Ok(match multitrace_from_letters(&[letters], &self.parity) {
            None => OperatorSum::zero(),
            Some((sign, mt)) => OperatorSum::from_monomial(
                mt,
                GradedCoefficient::from_rational(BigRational::from_integer(sign.into())),
            ),
        })
    }

    fn field(&self, name: &str, at: usize) -> Result<u16, ParseError> {
        match self.table.field_index(name) {
            Some(i) => Ok(i as u16),
            None => Err(ParseError::new(format!("unknown field `{}`", name), at)),
        }
    }
}

fn big(s: &str, at: usize) -> Result<BigInt, ParseError> {
    s.parse()
        .map_err(|_| ParseError::new("bad integer literal", at))
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_REFUSAL: i32 = 3;

#[derive(Debug)]
struct CmdError {
    code: i32,
    message: String,
}

impl CmdError {
    fn usage(message: impl Into<String>) -> Self {
        CmdError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<BrstError> for CmdError {
    fn from(e: BrstError) -> Self {
        CmdError {
            code: if e.is_refusal() {
                EXIT_REFUSAL
            } else {
                EXIT_USAGE
            },
            message: e.to_string(),
        }
    }
}

impl From<DiagramError> for CmdError {
    fn from(e: DiagramError) -> Self {
        CmdError::usage(e.to_string())
    }
}

impl From<ParseError> for CmdError {
    fn from(e: ParseError) -> Self {
        CmdError::usage(format!("parse error {}", e))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum OutFormat {
    Text,
    Json,
    Latex,
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Builtin model (`eps2`, `dual-numbers-deg2`) or path to a .json/.toml spec.
    #[arg(long, default_value = "eps2")]
    model: String,
}

impl ModelArg {
    fn load(&self) -> Result<CyclicAlgebraSpec, CmdError> {
        if let Some(spec) = builtin(&self.model) {
            return Ok(spec);
        }
        let p = Path::new(&self.model);
        if !p.exists() {
            return Err(CmdError::usage(format!(
                "unknown model `{}` (not a builtin, and no such file)",
                self.model
            )));
        }
        Ok(CyclicAlgebraSpec::from_path(p)?)
    }

    fn context(&self) -> Result<BrstContext, CmdError> {
        Ok(BrstContext::new(self.load()?)?)
    }
}

fn parse_n(n: &Option<String>) -> Result<Option<BigRational>, CmdError> {
    match n {
        None => Ok(None),
        Some(s) => BigRational::from_str(s)
            .map(Some)
            .map_err(|_| CmdError::usage(format!("bad rational for --n: `{}`", s))),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "largen",
    version,
    about = "Exact large-N trace calculus: diagram composition, Wick OPEs, BRST differentials",
    after_help = "Exit codes: 0 success, 1 property violation, 2 usage/parse error, 3 refusal.\n\
                  Set LARGEN_DIAGRAM_ORACLE_MAX_LETTERS to widen the diagram-oracle size guard."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Singular OPE of two operators: all poles of a(z) b(w).
    #[command(name = "ope")]
    Ope {
        /// First operator, e.g. "Tr(b c c)".
        a: String,
        /// Second operator.
        b: String,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = OutFormat::Text)]
        format: OutFormat,
        /// Specialize N to a rational value in the output.
        #[arg(long)]
        n: Option<String>,
        /// Keep only planar Wick contractions.
        #[arg(long)]
        planar: bool,
    },
    /// Planar singular OPE (genus-zero contractions only).
    #[command(name = "planar-ope")]
    PlanarOpe {
        a: String,
        b: String,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = OutFormat::Text)]
        format: OutFormat,
        #[arg(long)]
        n: Option<String>,
    },
    /// Single mode product a_(n) b extracted from the OPE.
    #[command(name = "mode", allow_negative_numbers = true)]
    Mode {
        /// Mode index n (may be negative).
        n_mode: i64,
        a: String,
        b: String,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = OutFormat::Text)]
        format: OutFormat,
        #[arg(long)]
        n: Option<String>,
    },
    /// Apply the BRST differential Q to an operator.
    #[command(name = "brst")]
    Brst {
        a: String,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = OutFormat::Text)]
        format: OutFormat,
        #[arg(long)]
        n: Option<String>,
    },
    /// Check Q^2 = 0: the J(z)J(w) OPE plus a sweep over basis monomials.
    #[command(name = "q2")]
    Q2 {
        #[command(flatten)]
        model: ModelArg,
        /// Letters per monomial in the sweep box.
        #[arg(long, default_value_t = 4)]
        max_letters: usize,
        /// Derivative order per letter in the sweep box.
        #[arg(long, default_value_t = 1)]
        max_deriv: usize,
    },
    /// Cohomology dimensions of Q on the stable core of a truncation box.
    #[command(name = "cohomology")]
    Cohomology {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 4)]
        max_letters: usize,
        #[arg(long, default_value_t = 1)]
        max_deriv: usize,
        /// Rank at a specific rational N instead of generic N.
        #[arg(long)]
        n: Option<String>,
        #[arg(long, value_enum, default_value_t = OutFormat::Text)]
        format: OutFormat,
    },
    /// Compare the classical limit of Q against the Hochschild differential.
    #[command(name = "classical-compare")]
    ClassicalCompare {
        #[command(flatten)]
        model: ModelArg,
        /// Cochain arity bound for the sweep.
        #[arg(long, default_value_t = 3)]
        max_arity: usize,
        /// t-degree bound per slot.
        #[arg(long, default_value_t = 2)]
        max_t: usize,
    },
    /// Check the grading constraints on every pole of one OPE.
    #[command(name = "grading-check")]
    GradingCheck {
        a: String,
        b: String,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Verify the N=4 superconformal OPE table of the main example.
    #[command(name = "n4verify")]
    N4Verify {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Diagram-category operations.
    #[command(name = "diagram")]
    Diagram {
        #[command(subcommand)]
        cmd: DiagramCmd,
    },
}

#[derive(Subcommand, Debug)]
enum DiagramCmd {
    /// Compose two matchings: lower maps bottom->mid, upper maps mid->top.
    ///
    /// Words are strings of `b`/`w`; edges use the text format "t1-b2, t3-t4"
    /// with 1-based positions counted within each row.
    #[command(name = "compose")]
    Compose {
        bottom: String,
        mid: String,
        top: String,
        /// Edge list of the lower diagram.
        lower: String,
        /// Edge list of the upper diagram.
        upper: String,
        #[arg(long, value_enum, default_value_t = OutFormat::Text)]
        format: OutFormat,
    },
    /// Count perfect color-respecting matchings between two words.
    #[command(name = "count")]
    Count { from: String, to: String },
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32, CmdError> {
    match cmd {
        Cmd::Ope {
            a,
            b,
            model,
            format,
            n,
            planar,
        } => {
            let ctx = model.context()?;
            let x = parse_expression(&a, &ctx.table)?;
            let y = parse_expression(&b, &ctx.table)?;
            let r = if planar {
                planar_singular_ope(&x, &y, &ctx.table)
            } else {
                singular_ope(&x, &y, &ctx.table)
            };
            let r = specialize_ope(r, parse_n(&n)?.as_ref());
            println!("{}", format_ope(&r, &ctx.names(), format));
            Ok(EXIT_OK)
        }
        Cmd::PlanarOpe {
            a,
            b,
            model,
            format,
            n,
        } => {
            let ctx = model.context()?;
            let x = parse_expression(&a, &ctx.table)?;
            let y = parse_expression(&b, &ctx.table)?;
            let r = planar_singular_ope(&x, &y, &ctx.table);
            let r = specialize_ope(r, parse_n(&n)?.as_ref());
            println!("{}", format_ope(&r, &ctx.names(), format));
            Ok(EXIT_OK)
        }
        Cmd::Mode {
            n_mode,
            a,
            b,
            model,
            format,
            n,
        } => {
            let ctx = model.context()?;
            let x = parse_expression(&a, &ctx.table)?;
            let y = parse_expression(&b, &ctx.table)?;
            let mut z = mode_product(&x, n_mode, &y, &ctx.table);
            if let Some(r) = parse_n(&n)? {
                z = z.specialize_n(&r);
            }
            println!("{}", format_operator(&z, &ctx.names(), format));
            Ok(EXIT_OK)
        }
        Cmd::Brst {
            a,
            model,
            format,
            n,
        } => {
            let ctx = model.context()?;
            let x = parse_expression(&a, &ctx.table)?;
            let mut z = brst_differential(&ctx, &x);
            if let Some(r) = parse_n(&n)? {
                z = z.specialize_n(&r);
            }
            println!("{}", format_operator(&z, &ctx.names(), format));
            Ok(EXIT_OK)
        }
        Cmd::Q2 {
            model,
            max_letters,
            max_deriv,
        } => {
            let ctx = model.context()?;
            let report = q_squared_check(&ctx, max_letters, max_deriv);
            if report.ok() {
                println!("Q^2 = 0: PASS");
                println!(
                    "checked {} basis monomials (<= {} letters, deriv <= {})",
                    report.basis_checked, max_letters, max_deriv
                );
                Ok(EXIT_OK)
            } else {
                println!("Q^2 = 0: FAIL");
                if let Some(w) = &report.witness {
                    println!("{}", w);
                }
                Ok(EXIT_VIOLATION)
            }
        }
        Cmd::Cohomology {
            model,
            max_letters,
            max_deriv,
            n,
            format,
        } => {
            let ctx = model.context()?;
            let at_n = parse_n(&n)?;
            let rows = cohomology_dimensions(&ctx, max_letters, max_deriv, at_n.as_ref())?;
            match format {
                OutFormat::Json => {
                    let rows: Vec<serde_json::Value> = rows
                        .iter()
                        .map(|r| {
                            serde_json::json!({
                                "ghost": r.ghost,
                                "chains": r.dim_chains,
                                "cohomology": r.dim_cohomology,
                            })
                        })
                        .collect();
                    let v = serde_json::json!({
                        "max_letters": max_letters,
                        "max_deriv": max_deriv,
                        "n": at_n.map(|r| r.to_string()).unwrap_or_else(|| "generic".into()),
                        "rows": rows,
                    });
                    println!("{}", v);
                }
                _ => {
                    println!(
                        "stable core of the box (<= {} letters, deriv <= {}), {}",
                        max_letters,
                        max_deriv,
                        at_n
                            .map(|r| format!("N = {}", r))
                            .unwrap_or_else(|| "generic N".into())
                    );
                    println!("{:>6} {:>10} {:>12}", "ghost", "chains", "cohomology");
                    for r in rows {
                        println!(
                            "{:>6} {:>10} {:>12}",
                            r.ghost, r.dim_chains, r.dim_cohomology
                        );
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Cmd::ClassicalCompare {
            model,
            max_arity,
            max_t,
        } => {
            let ctx = model.context()?;
            let basis = enumerate_cochain_basis(&ctx, max_arity, max_t);
            let mut bad = 0usize;
            for f in &basis {
                if !classical_limit_compare(&ctx, f)? {
                    bad += 1;
                }
                let bf = hochschild_b(f, &ctx.spec)?;
                let bbf = hochschild_b(&bf, &ctx.spec)?;
                if !bbf.is_zero() {
                    bad += 1;
                }
            }
            println!(
                "classical limit vs Hochschild b on {} cochains (arity <= {}, t <= {}): {}",
                basis.len(),
                max_arity,
                max_t,
                if bad == 0 { "PASS" } else { "FAIL" }
            );
            Ok(if bad == 0 { EXIT_OK } else { EXIT_VIOLATION })
        }
        Cmd::GradingCheck { a, b, model } => {
            let ctx = model.context()?;
            let x = parse_expression(&a, &ctx.table)?;
            let y = parse_expression(&b, &ctx.table)?;
            let report = grading_check(&x, &y, &ctx.table);
            if report.ok() {
                println!("grading: PASS ({} singular terms checked)", report.checked_terms);
                Ok(EXIT_OK)
            } else {
                println!("grading: FAIL");
                for v in &report.violations {
                    println!("{}", v);
                }
                Ok(EXIT_VIOLATION)
            }
        }
        Cmd::N4Verify { model } => {
            let ctx = model.context()?;
            let report = verify_n4(&ctx)?;
            let mut failed = 0usize;
            for row in &report.rows {
                if !row.ok {
                    failed += 1;
                    println!("FAIL {}", row.label);
                    if let Some(d) = &row.detail {
                        println!("  {}", d);
                    }
                }
            }
            println!(
                "N=4 table: {} rows, {}",
                report.rows.len(),
                if failed == 0 {
                    "all PASS".to_string()
                } else {
                    format!("{} FAIL", failed)
                }
            );
            Ok(if failed == 0 { EXIT_OK } else { EXIT_VIOLATION })
        }
        Cmd::Diagram { cmd } => match cmd {
            DiagramCmd::Compose {
                bottom,
                mid,
                top,
                lower,
                upper,
                format,
            } => {
                let wb = Word::parse(&bottom)?;
                let wm = Word::parse(&mid)?;
                let wt = Word::parse(&top)?;
                let lo = Diagram::parse(&wb, &wm, &lower)?;
                let hi = Diagram::parse(&wm, &wt, &upper)?;
                let (loops, comp) = hi.compose(&lo)?;
                match format {
                    OutFormat::Json => {
                        let v = serde_json::json!({
                            "loops": loops,
                            "scalar": format!("N^{}", loops),
                            "composite": comp.to_json(),
                        });
                        println!("{}", v);
                    }
                    _ => {
                        println!("loops: {} (scalar N^{})", loops, loops);
                        println!("composite: {}", comp);
                    }
                }
                Ok(EXIT_OK)
            }
            DiagramCmd::Count { from, to } => {
                let a = Word::parse(&from)?;
                let b = Word::parse(&to)?;
                println!("{}", count_diagrams(&a, &b));
                Ok(EXIT_OK)
            }
        },
    }
}

fn specialize_ope(r: OPEResult, n: Option<&BigRational>) -> OPEResult {
    match n {
        None => r,
        Some(v) => r.map_operators(|x| x.specialize_n(v)),
    }
}

fn format_operator(x: &OperatorSum, names: &[&str], f: OutFormat) -> String {
    match f {
        OutFormat::Text => render_operator(x, names),
        OutFormat::Json => operator_to_json(x, names).to_string(),
        OutFormat::Latex => operator_to_latex(x, names),
    }
}

fn format_ope(r: &OPEResult, names: &[&str], f: OutFormat) -> String {
    match f {
        OutFormat::Text => {
            if r.is_zero() {
                return "0".to_string();
            }
            let mut lines = Vec::new();
            let mut poles: Vec<_> = r.poles().collect();
            poles.sort_by(|a, b| b.0.cmp(a.0));
            for (p, x) in poles {
                if !x.is_zero() {
                    lines.push(format!("pole {}: {}", p, render_operator(x, names)));
                }
            }
            lines.join("\n")
        }
        OutFormat::Json => {
            let mut poles = serde_json::Map::new();
            for (p, x) in r.poles() {
                if !x.is_zero() {
                    poles.insert(p.to_string(), operator_to_json(x, names));
                }
            }
            serde_json::Value::Object(
                [("poles".to_string(), serde_json::Value::Object(poles))]
                    .into_iter()
                    .collect(),
            )
            .to_string()
        }
        OutFormat::Latex => {
            if r.is_zero() {
                return "0".to_string();
            }
            let mut parts = Vec::new();
            let mut poles: Vec<_> = r.poles().collect();
            poles.sort_by(|a, b| b.0.cmp(a.0));
            for (p, x) in poles {
                if x.is_zero() {
                    continue;
                }
                let body = operator_to_latex(x, names);
                if *p == 1 {
                    parts.push(format!("\\frac{{{}}}{{z-w}}", body));
                } else {
                    parts.push(format!("\\frac{{{}}}{{(z-w)^{{{}}}}}", body, p));
                }
            }
            parts.join(" + ")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brst_cyclic::builtin_eps2;

    fn eps2_table() -> PairingTable {
        BrstContext::new(builtin_eps2()).unwrap().table
    }

    #[test]
    fn parses_traces_and_canonicalizes() {
        let t = eps2_table();
        let names = t.names();
        let x = parse_expression("Tr(b c c)", &t).unwrap();
        assert_eq!(x.n_terms(), 1);
        let y = parse_expression("Tr(Z2 Z1)", &t).unwrap();
        assert_eq!(render_operator(&y, &names), "Tr(Z1, Z2)");
        let z = parse_expression("Tr(Z1, d^2 Z2) * Tr(c)", &t).unwrap();
        assert_eq!(render_operator(&z, &names), "Tr(c)*Tr(Z1, d^2 Z2)");
    }

    #[test]
    fn parses_scalars_and_signs() {
        let t = eps2_table();
        let names = t.names();
        let x = parse_expression("N*Tr(d^1 c, c) - Tr(d^1 c)*Tr(c)", &t).unwrap();
        assert_eq!(
            render_operator(&x, &names),
            "Tr(c)*Tr(d^1 c) - N*Tr(c, d^1 c)"
        );
        let y = parse_expression("3/2*hbar^2*N^3 - 1", &t).unwrap();
        assert_eq!(render_operator(&y, &names), "-1 + 3/2*hbar^2*N^3");
        let z = parse_expression("-(N - 2)*Tr(b)", &t).unwrap();
        assert_eq!(render_operator(&z, &names), "(2 - N)*Tr(b)");
    }

    #[test]
    fn self_annihilating_trace_parses_to_zero() {
        let t = eps2_table();
        assert!(parse_expression("Tr(c c)", &t).unwrap().is_zero());
    }

    #[test]
    fn parse_errors_carry_positions() {
        let t = eps2_table();
        let e = parse_expression("Tr(b x)", &t).unwrap_err();
        assert_eq!(e.position, 5);
        assert!(e.message.contains("unknown field"));
        let e = parse_expression("Tr()", &t).unwrap_err();
        assert!(e.message.contains("empty trace"));
        let e = parse_expression("Tr(b c", &t).unwrap_err();
        assert!(e.message.contains("unbalanced"));
        let e = parse_expression("2 + ?", &t).unwrap_err();
        assert_eq!(e.position, 4);
        let e = parse_expression("Tr(b) Tr(c)", &t).unwrap_err();
        assert!(e.message.contains("trailing"));
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let t = eps2_table();
        let src = format!("{}1{}", "(".repeat(5000), ")".repeat(5000));
        let e = parse_expression(&src, &t).unwrap_err();
        assert!(e.message.contains("nested"));
    }

    #[test]
    fn print_then_parse_is_identity_on_random_sums() {
        use proptest::prelude::*;
        let t = eps2_table();
        let names = t.names();
        let parity = t.parities();
        let letter = (0u16..4, 0u16..3).prop_map(|(field, deriv)| Letter { field, deriv });
        let trace = proptest::collection::vec(letter, 1..4);
        let traces = proptest::collection::vec(trace, 1..3);
        let coeff = (-9i64..10, 1i64..4, -2i32..4, 0i32..3, -2i32..4).prop_map(
            |(num, den, n_pow, h_pow, d_half)| {
                GradedCoefficient::monomial(
                    [d_half, h_pow, n_pow, 0],
                    BigRational::new(num.into(), den.into()),
                )
            },
        );
        let term = (traces, coeff);
        let sum = proptest::collection::vec(term, 0..4);
        let mut runner = proptest::test_runner::TestRunner::default();
        runner
            .run(&sum, |terms| {
                let mut x = OperatorSum::zero();
                for (traces, c) in terms {
                    if let Some((sign, mt)) = multitrace_from_letters(&traces, &parity) {
                        x.add_term(
                            mt,
                            c.scale(&BigRational::from_integer(sign.into())),
                        );
                    }
                }
                let printed = render_operator(&x, &names);
                let y = parse_expression(&printed, &t)
                    .unwrap_or_else(|e| panic!("reparse of `{}` failed {}", printed, e));
                prop_assert_eq!(&x, &y, "printed form: {}", printed);
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn round_trips_rendered_operators() {
        let t = eps2_table();
        let names = t.names();
        for src in [
            "Tr(b, c, c)",
            "N*Tr(c, d^1 c) - Tr(c)*Tr(d^1 c)",
            "-3/2*N^2 + 2*Tr(b, d^1 c) + hbar*Tr(Z1, Z2)",
            "d^(1/2)*Tr(c) + d^-1*Tr(b)",
            "(N^2 - 2)*Tr(c, d^3 c)",
        ] {
            let x = parse_expression(src, &t).unwrap();
            let printed = render_operator(&x, &names);
            let y = parse_expression(&printed, &t).unwrap();
            assert_eq!(x, y, "round trip failed for {}", src);
            assert_eq!(printed, render_operator(&y, &names));
        }
    }
}
