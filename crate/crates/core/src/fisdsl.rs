//! The `.fis` text format.
//!
//! This is a line-oriented format of its own, unrelated to the binary-incompatible
//! `.fis` files of other toolboxes:
//!
//! ```text
//! # comments run to end of line
//! system heater kind=mamdani
//! config and=min implication=clip defuzz=centroid resolution=201
//! input temp range [0, 40]
//!   term cold trapeze(10, 0, 0)
//!   term hot sigmoid(0.5, 25)
//! output power range [0, 100]
//!   term low bell2(20, 2, 0)
//!   term high bell2(20, 2, 100)
//! rule: if temp is cold then power is high
//! rule: if temp is hot then power is singleton(5)
//! ```
//!
//! Sugeno systems declare an output range without terms and conclude
//! `ts(<constant>, <coeff>*<input>, ...)`. Omitted sigmoid/trapeze parameters
//! take their defaults; bell parameters are mandatory. Every precondition of
//! the membership and engine layers is checked at parse time, and the first
//! problem found is reported with its line and column.

use std::fmt::{self, Write as _};
use std::ops::Range;

use thiserror::Error;

use crate::defuzz::DefuzzMethod;
use crate::engine::{
    Affine, AndOp, Consequent, EngineError, Implication, InferenceConfig, LinguisticVariable,
    OutputVariable, Rule, RuleBase, SystemKind,
};
use crate::fmt_real;
use crate::membership::{Family, FamilyArityError, MembershipFunction, Universe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParseErrorKind {
    Syntax,
    /// Unresolved or duplicated names.
    UnknownName,
    BadParameter,
    KindMismatch,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Syntax => "syntax",
            ParseErrorKind::UnknownName => "unknown-name",
            ParseErrorKind::BadParameter => "bad-parameter",
            ParseErrorKind::KindMismatch => "kind-mismatch",
        })
    }
}

/// Positioned parse failure; `line` and `column` are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

fn err(kind: ParseErrorKind, at: Pos, message: impl Into<String>) -> ParseError {
    ParseError {
        line: at.line,
        column: at.column,
        message: message.into(),
        kind,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Equals,
    Star,
    Colon,
    Newline,
    Eof,
}

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Number(_) => "a number".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::LBracket => "`[`".into(),
            TokenKind::RBracket => "`]`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Equals => "`=`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Colon => "`:`".into(),
            TokenKind::Newline => "end of line".into(),
            TokenKind::Eof => "end of file".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Pos,
    /// Byte range in the source text.
    pub span: Range<usize>,
    pub text: String,
}

/// Splits `text` into tokens. Comments are dropped; each line break is a token.
pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut line = 1;
    let mut line_start = 0;
    let col_of = |start: usize, line_start: usize| text[line_start..start].chars().count() + 1;

    while let Some(&(start, ch)) = chars.peek() {
        let pos = Pos {
            line,
            column: col_of(start, line_start),
        };
        let single = |kind| Token {
            kind,
            pos,
            span: start..start + ch.len_utf8(),
            text: ch.to_string(),
        };
        match ch {
            '\n' => {
                out.push(single(TokenKind::Newline));
                chars.next();
                line += 1;
                line_start = start + 1;
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '#' => {
                while chars.peek().is_some_and(|&(_, c)| c != '\n') {
                    chars.next();
                }
            }
            '(' | ')' | '[' | ']' | ',' | '=' | '*' | ':' => {
                let kind = match ch {
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    '[' => TokenKind::LBracket,
                    ']' => TokenKind::RBracket,
                    ',' => TokenKind::Comma,
                    '=' => TokenKind::Equals,
                    '*' => TokenKind::Star,
                    _ => TokenKind::Colon,
                };
                out.push(single(kind));
                chars.next();
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = start;
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        end = i + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let s = &text[start..end];
                out.push(Token {
                    kind: TokenKind::Ident(s.to_owned()),
                    pos,
                    span: start..end,
                    text: s.to_owned(),
                });
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let end = scan_number(text, start);
                if end == start {
                    return Err(err(
                        ParseErrorKind::Syntax,
                        pos,
                        format!("unexpected `{c}`"),
                    ));
                }
                let s = &text[start..end];
                let v: f64 = s.parse().map_err(|_| {
                    err(
                        ParseErrorKind::Syntax,
                        pos,
                        format!("malformed number `{s}`"),
                    )
                })?;
                while chars.peek().is_some_and(|&(i, _)| i < end) {
                    chars.next();
                }
                out.push(Token {
                    kind: TokenKind::Number(v),
                    pos,
                    span: start..end,
                    text: s.to_owned(),
                });
            }
            c => {
                return Err(err(
                    ParseErrorKind::Syntax,
                    pos,
                    format!("unexpected character `{c}`"),
                ));
            }
        }
    }
    let end = text.len();
    out.push(Token {
        kind: TokenKind::Eof,
        pos: Pos {
            line,
            column: col_of(end, line_start),
        },
        span: end..end,
        text: String::new(),
    });
    Ok(out)
}

/// End of the number literal starting at `start` (`start` itself if there is none).
/// Grammar: `[+-]? digits ('.' digits*)? ([eE] [+-]? digits)?` or `[+-]? '.' digits ...`.
fn scan_number(text: &str, start: usize) -> usize {
    let b = text.as_bytes();
    let mut i = start;
    if i < b.len() && (b[i] == b'-' || b[i] == b'+') {
        i += 1;
    }
    let int_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    let mut digits = i > int_start;
    if i < b.len() && b[i] == b'.' {
        let frac_start = i + 1;
        let mut j = frac_start;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if digits || j > frac_start {
            digits = true;
            i = j;
        }
    }
    if !digits {
        return start;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'-' || b[j] == b'+') {
            j += 1;
        }
        let exp_start = j;
        while j < b.len() && b[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            i = j;
        }
    }
    i
}

const RESERVED: [&str; 6] = ["if", "is", "and", "then", "ts", "singleton"];

#[derive(Debug, Clone)]
struct Spanned<T> {
    value: T,
    pos: Pos,
}

#[derive(Debug)]
struct TermDecl {
    name: Spanned<String>,
    mf: MembershipFunction,
}

#[derive(Debug)]
struct VarDecl {
    keyword: Pos,
    name: Spanned<String>,
    lo: f64,
    hi: f64,
    terms: Vec<TermDecl>,
}

#[derive(Debug)]
enum ConsDecl {
    Term(Spanned<String>),
    Singleton(Spanned<f64>),
    Ts {
        constant: f64,
        coefficients: Vec<(f64, Spanned<String>)>,
    },
}

#[derive(Debug)]
struct RuleDecl {
    antecedents: Vec<(Spanned<String>, Spanned<String>)>,
    output: Spanned<String>,
    consequent: ConsDecl,
    consequent_pos: Pos,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if !matches!(t.kind, TokenKind::Eof) {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let t = self.peek();
        err(
            ParseErrorKind::Syntax,
            t.pos,
            format!("expected {expected}, found {}", t.kind.describe()),
        )
    }

    fn expect(&mut self, kind: TokenKind, expected: &str) -> Result<Pos, ParseError> {
        if self.peek().kind == kind {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Pos, ParseError> {
        match &self.peek().kind {
            TokenKind::Ident(s) if s == kw => Ok(self.bump().pos),
            _ => Err(self.unexpected(&format!("`{kw}`"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<Spanned<String>, ParseError> {
        match &self.peek().kind {
            TokenKind::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let t = self.bump();
                let TokenKind::Ident(value) = t.kind else {
                    unreachable!()
                };
                Ok(Spanned { value, pos: t.pos })
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn number(&mut self) -> Result<Spanned<f64>, ParseError> {
        match self.peek().kind {
            TokenKind::Number(v) => {
                let pos = self.bump().pos;
                Ok(Spanned { value: v, pos })
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn end_of_line(&mut self) -> Result<(), ParseError> {
        match self.peek().kind {
            TokenKind::Newline => {
                self.bump();
                Ok(())
            }
            TokenKind::Eof => Ok(()),
            _ => Err(self.unexpected("end of line")),
        }
    }

    fn skip_blank(&mut self) {
        while self.peek().kind == TokenKind::Newline {
            self.bump();
        }
    }

    fn at_ident(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(s) if s == kw)
    }
}

/// Parsed and validated inference system.
#[derive(Debug, Clone, PartialEq)]
pub struct FisModel {
    pub name: String,
    pub kind: SystemKind,
    pub rule_base: RuleBase,
}

impl FisModel {
    pub fn new(name: impl Into<String>, rule_base: RuleBase) -> Self {
        let kind = rule_base.kind();
        Self {
            name: name.into(),
            kind,
            rule_base,
        }
    }

    pub fn inputs(&self) -> &[LinguisticVariable] {
        self.rule_base.inputs()
    }

    pub fn output(&self) -> &OutputVariable {
        self.rule_base.output()
    }

    pub fn rules(&self) -> &[Rule] {
        self.rule_base.rules()
    }

    pub fn config(&self) -> &InferenceConfig {
        self.rule_base.config()
    }

    pub fn evaluate(&self, crisp: &[f64]) -> Result<f64, EngineError> {
        self.rule_base.evaluate(crisp)
    }
}

/// Parses a `.fis` document into a validated model.
pub fn parse(text: &str) -> Result<FisModel, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0 };
    p.skip_blank();

    // system <name> kind=<kind>
    p.keyword("system")?;
    let name = p.ident("a system name")?;
    p.keyword("kind")?;
    p.expect(TokenKind::Equals, "`=`")?;
    let kind_tok = p.peek().clone();
    let kind = match &kind_tok.kind {
        TokenKind::Ident(s) => SystemKind::from_keyword(s),
        _ => None,
    }
    .ok_or_else(|| p.unexpected("`mamdani` or `sugeno`"))?;
    p.bump();
    p.end_of_line()?;

    let mut config: Option<(Pos, InferenceConfig, Option<Pos>)> = None;
    let mut inputs: Vec<VarDecl> = Vec::new();
    let mut output: Option<VarDecl> = None;
    let mut rules: Vec<RuleDecl> = Vec::new();
    // Which block the next `term` line belongs to.
    #[derive(PartialEq)]
    enum Block {
        None,
        Input,
        Output,
    }
    let mut block = Block::None;

    loop {
        p.skip_blank();
        let t = p.peek().clone();
        let TokenKind::Ident(word) = &t.kind else {
            if t.kind == TokenKind::Eof {
                break;
            }
            return Err(p.unexpected("a statement"));
        };
        match word.as_str() {
            "config" => {
                if config.is_some() {
                    return Err(err(
                        ParseErrorKind::Syntax,
                        t.pos,
                        "duplicate `config` line",
                    ));
                }
                p.bump();
                config = Some(parse_config(&mut p, t.pos)?);
                block = Block::None;
            }
            "input" | "output" => {
                p.bump();
                let is_output = word == "output";
                if is_output {
                    if let Some(prev) = &output {
                        return Err(err(
                            ParseErrorKind::Syntax,
                            t.pos,
                            format!(
                                "second output declared (first at line {})",
                                prev.keyword.line
                            ),
                        ));
                    }
                }
                let decl = parse_var_header(&mut p, t.pos)?;
                let clash = inputs
                    .iter()
                    .chain(output.as_ref())
                    .any(|v| v.name.value == decl.name.value);
                if clash {
                    return Err(err(
                        ParseErrorKind::UnknownName,
                        decl.name.pos,
                        format!("variable `{}` is already defined", decl.name.value),
                    ));
                }
                if is_output {
                    output = Some(decl);
                    block = Block::Output;
                } else {
                    inputs.push(decl);
                    block = Block::Input;
                }
            }
            "term" => {
                p.bump();
                let owner = match block {
                    Block::Input => inputs.last_mut(),
                    Block::Output => output.as_mut(),
                    Block::None => None,
                };
                let Some(owner) = owner else {
                    return Err(err(
                        ParseErrorKind::Syntax,
                        t.pos,
                        "`term` must follow an `input` or `output` line",
                    ));
                };
                if block == Block::Output && kind == SystemKind::Sugeno {
                    return Err(err(
                        ParseErrorKind::KindMismatch,
                        t.pos,
                        "sugeno outputs take no terms",
                    ));
                }
                let term = parse_term(&mut p)?;
                if owner.terms.iter().any(|d| d.name.value == term.name.value) {
                    return Err(err(
                        ParseErrorKind::UnknownName,
                        term.name.pos,
                        format!(
                            "term `{}` is already defined for `{}`",
                            term.name.value, owner.name.value
                        ),
                    ));
                }
                owner.terms.push(term);
            }
            "rule" => {
                p.bump();
                let rule = parse_rule(&mut p)?;
                match (&rule.consequent, kind) {
                    (ConsDecl::Ts { .. }, SystemKind::Mamdani) => {
                        return Err(err(
                            ParseErrorKind::KindMismatch,
                            rule.consequent_pos,
                            "mamdani systems cannot use `ts` consequents",
                        ))
                    }
                    (ConsDecl::Term(_) | ConsDecl::Singleton(_), SystemKind::Sugeno) => {
                        return Err(err(
                            ParseErrorKind::KindMismatch,
                            rule.consequent_pos,
                            "sugeno systems need `ts(...)` consequents",
                        ))
                    }
                    _ => {}
                }
                rules.push(rule);
                block = Block::None;
            }
            _ => return Err(p.unexpected("`config`, `input`, `output`, `term` or `rule`")),
        }
    }

    let eof = p.peek().pos;
    let (config_pos, config, defuzz_pos) =
        config.unwrap_or((eof, InferenceConfig::default(), None));
    build(
        name, kind, config, config_pos, defuzz_pos, inputs, output, rules, eof,
    )
}

fn parse_config(
    p: &mut Parser,
    at: Pos,
) -> Result<(Pos, InferenceConfig, Option<Pos>), ParseError> {
    let mut config = InferenceConfig::default();
    let mut seen: Vec<String> = Vec::new();
    let mut defuzz_pos = None;
    while !matches!(p.peek().kind, TokenKind::Newline | TokenKind::Eof) {
        let key_tok = p.peek().clone();
        let key = match &key_tok.kind {
            TokenKind::Ident(k)
                if ["and", "implication", "defuzz", "resolution"].contains(&k.as_str()) =>
            {
                k.clone()
            }
            _ => return Err(p.unexpected("`and`, `implication`, `defuzz` or `resolution`")),
        };
        if seen.contains(&key) {
            return Err(err(
                ParseErrorKind::Syntax,
                key_tok.pos,
                format!("`{key}` given twice"),
            ));
        }
        p.bump();
        p.expect(TokenKind::Equals, "`=`")?;
        let v = p.peek().clone();
        let bad = |what: &str| {
            err(
                ParseErrorKind::Syntax,
                v.pos,
                format!("expected {what}, found {}", v.kind.describe()),
            )
        };
        match (key.as_str(), &v.kind) {
            ("and", TokenKind::Ident(s)) => {
                config.and_op = AndOp::from_keyword(s).ok_or_else(|| bad("`min` or `product`"))?
            }
            ("and", _) => return Err(bad("`min` or `product`")),
            ("implication", TokenKind::Ident(s)) => {
                config.implication =
                    Implication::from_keyword(s).ok_or_else(|| bad("`clip` or `scale`"))?
            }
            ("implication", _) => return Err(bad("`clip` or `scale`")),
            ("defuzz", TokenKind::Ident(s)) => {
                config.defuzz = s.parse::<DefuzzMethod>().map_err(|_| {
                    bad("a defuzzification method (centroid, bisector, mom, som, lom, wavg)")
                })?;
                defuzz_pos = Some(v.pos);
            }
            ("defuzz", _) => return Err(bad("a defuzzification method")),
            ("resolution", TokenKind::Number(_)) => {
                let n: usize = v.text.parse().map_err(|_| bad("a positive integer"))?;
                if n < 2 {
                    return Err(err(
                        ParseErrorKind::BadParameter,
                        v.pos,
                        format!("resolution must be at least 2 (got {n})"),
                    ));
                }
                config.resolution = n;
            }
            _ => return Err(bad("a positive integer")),
        }
        p.bump();
        seen.push(key);
    }
    p.end_of_line()?;
    Ok((at, config, defuzz_pos))
}

fn parse_var_header(p: &mut Parser, keyword: Pos) -> Result<VarDecl, ParseError> {
    let name = p.ident("a variable name")?;
    p.keyword("range")?;
    p.expect(TokenKind::LBracket, "`[`")?;
    let lo = p.number()?;
    p.expect(TokenKind::Comma, "`,`")?;
    let hi = p.number()?;
    p.expect(TokenKind::RBracket, "`]`")?;
    p.end_of_line()?;
    if lo.value >= hi.value {
        return Err(err(
            ParseErrorKind::BadParameter,
            lo.pos,
            format!(
                "range needs lo < hi (got [{}, {}])",
                fmt_real(lo.value),
                fmt_real(hi.value)
            ),
        ));
    }
    Ok(VarDecl {
        keyword,
        name,
        lo: lo.value,
        hi: hi.value,
        terms: Vec::new(),
    })
}

fn parse_term(p: &mut Parser) -> Result<TermDecl, ParseError> {
    let name = p.ident("a term name")?;
    let fam_tok = p.peek().clone();
    let family = match &fam_tok.kind {
        TokenKind::Ident(s) => Family::from_keyword(s),
        _ => None,
    }
    .ok_or_else(|| {
        p.unexpected("a membership family (bell1, bell2, sigmoid, trapeze, singleton)")
    })?;
    p.bump();
    let params = parse_number_list(p)?;
    p.end_of_line()?;
    let mf = MembershipFunction::from_params(family, &params).map_err(|e| {
        let msg = match e {
            FamilyArityError::Param(pe) => format!("{}: {pe}", family.keyword()),
            other => other.to_string(),
        };
        err(ParseErrorKind::BadParameter, fam_tok.pos, msg)
    })?;
    Ok(TermDecl { name, mf })
}

fn parse_number_list(p: &mut Parser) -> Result<Vec<f64>, ParseError> {
    p.expect(TokenKind::LParen, "`(`")?;
    let mut out = Vec::new();
    if p.peek().kind == TokenKind::RParen {
        p.bump();
        return Ok(out);
    }
    loop {
        out.push(p.number()?.value);
        match p.peek().kind {
            TokenKind::Comma => {
                p.bump();
            }
            TokenKind::RParen => {
                p.bump();
                return Ok(out);
            }
            _ => return Err(p.unexpected("`,` or `)`")),
        }
    }
}

fn parse_rule(p: &mut Parser) -> Result<RuleDecl, ParseError> {
    p.expect(TokenKind::Colon, "`:`")?;
    p.keyword("if")?;
    let mut antecedents = Vec::new();
    loop {
        let var = p.ident("an input variable")?;
        p.keyword("is")?;
        let term = p.ident("a term name")?;
        antecedents.push((var, term));
        if p.at_ident("and") {
            p.bump();
        } else if p.at_ident("then") {
            p.bump();
            break;
        } else {
            return Err(p.unexpected("`and` or `then`"));
        }
    }
    let output = p.ident("the output variable")?;
    p.keyword("is")?;
    let consequent_pos = p.peek().pos;
    let consequent = if p.at_ident("singleton") {
        p.bump();
        p.expect(TokenKind::LParen, "`(`")?;
        let c0 = p.number()?;
        p.expect(TokenKind::RParen, "`)`")?;
        ConsDecl::Singleton(c0)
    } else if p.at_ident("ts") {
        p.bump();
        p.expect(TokenKind::LParen, "`(`")?;
        let constant = p.number()?.value;
        let mut coefficients = Vec::new();
        loop {
            match p.peek().kind {
                TokenKind::Comma => {
                    p.bump();
                    let k = p.number()?.value;
                    p.expect(TokenKind::Star, "`*`")?;
                    let var = p.ident("an input variable")?;
                    coefficients.push((k, var));
                }
                TokenKind::RParen => {
                    p.bump();
                    break;
                }
                _ => return Err(p.unexpected("`,` or `)`")),
            }
        }
        ConsDecl::Ts {
            constant,
            coefficients,
        }
    } else {
        ConsDecl::Term(p.ident("an output term, `singleton(...)` or `ts(...)`")?)
    };
    p.end_of_line()?;
    Ok(RuleDecl {
        antecedents,
        output,
        consequent,
        consequent_pos,
    })
}

#[allow(clippy::too_many_arguments)]
fn build(
    name: Spanned<String>,
    kind: SystemKind,
    config: InferenceConfig,
    config_pos: Pos,
    defuzz_pos: Option<Pos>,
    inputs: Vec<VarDecl>,
    output: Option<VarDecl>,
    rules: Vec<RuleDecl>,
    eof: Pos,
) -> Result<FisModel, ParseError> {
    let syntax = |at: Pos, m: String| err(ParseErrorKind::Syntax, at, m);
    if inputs.is_empty() {
        return Err(syntax(eof, "model declares no `input`".into()));
    }
    let Some(output) = output else {
        return Err(syntax(eof, "model declares no `output`".into()));
    };
    if let Some(v) = inputs.iter().find(|v| v.terms.is_empty()) {
        return Err(syntax(
            v.keyword,
            format!("input `{}` has no terms", v.name.value),
        ));
    }
    if kind == SystemKind::Mamdani && output.terms.is_empty() {
        return Err(err(
            ParseErrorKind::KindMismatch,
            output.keyword,
            format!(
                "mamdani output `{}` needs at least one term",
                output.name.value
            ),
        ));
    }
    if rules.is_empty() {
        return Err(syntax(eof, "model declares no `rule`".into()));
    }

    let unknown = |at: Pos, m: String| err(ParseErrorKind::UnknownName, at, m);
    let find_input = |n: &Spanned<String>| {
        inputs
            .iter()
            .position(|v| v.name.value == n.value)
            .ok_or_else(|| unknown(n.pos, format!("unknown input variable `{}`", n.value)))
    };

    let mut engine_rules = Vec::with_capacity(rules.len());
    for r in &rules {
        let mut ante: Vec<(usize, String)> = Vec::new();
        for (var, term) in &r.antecedents {
            let vi = find_input(var)?;
            if ante.iter().any(|(w, _)| *w == vi) {
                return Err(syntax(
                    var.pos,
                    format!("`{}` appears twice in one antecedent", var.value),
                ));
            }
            if !inputs[vi].terms.iter().any(|t| t.name.value == term.value) {
                return Err(unknown(
                    term.pos,
                    format!("input `{}` has no term `{}`", var.value, term.value),
                ));
            }
            ante.push((vi, term.value.clone()));
        }
        ante.sort_by_key(|(vi, _)| *vi);
        if r.output.value != output.name.value {
            return Err(unknown(
                r.output.pos,
                format!(
                    "`{}` is not the output variable `{}`",
                    r.output.value, output.name.value
                ),
            ));
        }
        let consequent = match &r.consequent {
            ConsDecl::Term(t) => {
                if !output.terms.iter().any(|d| d.name.value == t.value) {
                    return Err(unknown(
                        t.pos,
                        format!("output `{}` has no term `{}`", output.name.value, t.value),
                    ));
                }
                Consequent::Term(t.value.clone())
            }
            ConsDecl::Singleton(c0) => {
                if !(output.lo..=output.hi).contains(&c0.value) {
                    return Err(err(
                        ParseErrorKind::BadParameter,
                        c0.pos,
                        format!(
                            "singleton {} lies outside the output range [{}, {}]",
                            fmt_real(c0.value),
                            fmt_real(output.lo),
                            fmt_real(output.hi)
                        ),
                    ));
                }
                Consequent::Singleton(c0.value)
            }
            ConsDecl::Ts {
                constant,
                coefficients,
            } => {
                let mut dense: Vec<Option<f64>> = vec![None; inputs.len()];
                for (k, var) in coefficients {
                    let vi = find_input(var)?;
                    if dense[vi].is_some() {
                        return Err(syntax(
                            var.pos,
                            format!("coefficient for `{}` given twice", var.value),
                        ));
                    }
                    dense[vi] = Some(*k);
                }
                Consequent::TakagiSugeno(Affine {
                    constant: *constant,
                    coefficients: dense
                        .into_iter()
                        .enumerate()
                        .filter_map(|(vi, k)| {
                            k.filter(|&k| k != 0.0)
                                .map(|k| (inputs[vi].name.value.clone(), k))
                        })
                        .collect(),
                })
            }
        };
        let ante_names = ante
            .into_iter()
            .map(|(vi, t)| (inputs[vi].name.value.clone(), t));
        let rule = Rule::new(ante_names, consequent).expect("antecedents checked above");
        engine_rules.push(rule);
    }

    if kind == SystemKind::Mamdani && config.defuzz == DefuzzMethod::WeightedAverage {
        let singleton_term = |t: &str| {
            output
                .terms
                .iter()
                .find(|d| d.name.value == t)
                .is_some_and(|d| d.mf.as_singleton().is_some())
        };
        if let Some(r) = rules.iter().find(|r| match &r.consequent {
            ConsDecl::Term(t) => !singleton_term(&t.value),
            _ => false,
        }) {
            return Err(err(
                ParseErrorKind::KindMismatch,
                r.consequent_pos,
                "defuzz=wavg needs singleton consequents in every rule",
            ));
        }
    }

    let universe = |v: &VarDecl| {
        Universe::new(v.lo, v.hi, config.resolution)
            .map_err(|e| err(ParseErrorKind::BadParameter, v.keyword, e.to_string()))
    };
    let to_var = |v: &VarDecl| -> Result<LinguisticVariable, ParseError> {
        LinguisticVariable::new(
            v.name.value.clone(),
            universe(v)?,
            v.terms.iter().map(|t| (t.name.value.clone(), t.mf)),
        )
        .map_err(|e| err(ParseErrorKind::BadParameter, v.keyword, e.to_string()))
    };
    let engine_inputs = inputs.iter().map(to_var).collect::<Result<Vec<_>, _>>()?;
    let engine_output = match kind {
        SystemKind::Mamdani => OutputVariable::Fuzzy(to_var(&output)?),
        SystemKind::Sugeno => OutputVariable::Crisp {
            name: output.name.value.clone(),
            lo: output.lo,
            hi: output.hi,
        },
    };
    let rb = RuleBase::new(engine_inputs, engine_output, engine_rules, config).map_err(|e| {
        let at = match e {
            EngineError::WeightedAverageNeedsSingletons => defuzz_pos.unwrap_or(config_pos),
            _ => name.pos,
        };
        err(ParseErrorKind::BadParameter, at, e.to_string())
    })?;
    Ok(FisModel {
        name: name.value,
        kind,
        rule_base: rb,
    })
}

/// Parses a standalone membership-function spec such as `bell1(-1, 3, 4)`.
pub fn parse_mf_spec(spec: &str) -> Result<MembershipFunction, ParseError> {
    let toks = tokenize(spec)?;
    let mut p = Parser { toks, pos: 0 };
    let fam_tok = p.peek().clone();
    let family = match &fam_tok.kind {
        TokenKind::Ident(s) => Family::from_keyword(s),
        _ => None,
    }
    .ok_or_else(|| {
        p.unexpected("a membership family (bell1, bell2, sigmoid, trapeze, singleton)")
    })?;
    p.bump();
    let params = parse_number_list(&mut p)?;
    if p.peek().kind != TokenKind::Eof {
        return Err(p.unexpected("end of input"));
    }
    MembershipFunction::from_params(family, &params)
        .map_err(|e| err(ParseErrorKind::BadParameter, fam_tok.pos, e.to_string()))
}

/// Canonical text for `model`: fixed key order, every config field stated,
/// shortest round-trip reals, one rule per line, LF line endings.
pub fn serialize(model: &FisModel) -> String {
    let mut s = String::new();
    let rb = &model.rule_base;
    let c = rb.config();
    // Writing to a String cannot fail.
    let _ = writeln!(s, "system {} kind={}", model.name, model.kind);
    let _ = writeln!(
        s,
        "config and={} implication={} defuzz={} resolution={}",
        c.and_op.keyword(),
        c.implication.keyword(),
        c.defuzz.keyword(),
        c.resolution
    );
    let write_var = |s: &mut String, kw: &str, v: &LinguisticVariable| {
        let u = v.universe();
        let _ = writeln!(
            s,
            "{kw} {} range [{}, {}]",
            v.name(),
            fmt_real(u.lo()),
            fmt_real(u.hi())
        );
        for (name, mf) in v.terms() {
            let _ = writeln!(s, "  term {name} {mf}");
        }
    };
    for v in rb.inputs() {
        write_var(&mut s, "input", v);
    }
    match rb.output() {
        OutputVariable::Fuzzy(v) => write_var(&mut s, "output", v),
        OutputVariable::Crisp { name, lo, hi } => {
            let _ = writeln!(
                s,
                "output {name} range [{}, {}]",
                fmt_real(*lo),
                fmt_real(*hi)
            );
        }
    }
    let order = |var: &str| rb.input_index(var).unwrap_or(usize::MAX);
    for rule in rb.rules() {
        let mut ante: Vec<&(String, String)> = rule.antecedents().iter().collect();
        ante.sort_by_key(|(v, _)| order(v));
        let lhs: Vec<String> = ante.iter().map(|(v, t)| format!("{v} is {t}")).collect();
        let rhs = match rule.consequent() {
            Consequent::Term(t) => t.clone(),
            Consequent::Singleton(c0) => format!("singleton({})", fmt_real(*c0)),
            Consequent::TakagiSugeno(f) => {
                let mut coeffs: Vec<&(String, f64)> =
                    f.coefficients.iter().filter(|(_, k)| *k != 0.0).collect();
                coeffs.sort_by_key(|(v, _)| order(v));
                let mut t = format!("ts({}", fmt_real(f.constant));
                for (v, k) in coeffs {
                    let _ = write!(t, ", {}*{v}", fmt_real(*k));
                }
                t.push(')');
                t
            }
        };
        let _ = writeln!(
            s,
            "rule: if {} then {} is {rhs}",
            lhs.join(" and "),
            rb.output().name()
        );
    }
    s
}
