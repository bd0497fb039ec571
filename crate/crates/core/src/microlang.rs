//! The micro-language the repo-debugging family runs on.
//!
//! A pure expression language over 64-bit integers: `fn name(a, b) = expr`
//! with `+ - * /` (truncating division), comparisons, and
//! `if cond then e1 else e2`. Test files hold `assert name(args...) == n`
//! lines. No function calls, no recursion, no state — evaluation always
//! terminates, so the whole suite is a deterministic function of the text.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MicrolangError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 1,
            BinOp::Add | BinOp::Sub => 2,
            BinOp::Mul | BinOp::Div => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Int(i64),
    Param(String),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    If {
        cond: Box<Expr>,
        then: Box<Expr>,
        otherwise: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub body: Expr,
}

/// Functions in definition order; names unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub functions: Vec<Function>,
}

impl Program {
    pub fn get(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }
}

/// One `assert name(args...) == expected` line. The test's name is its call
/// text, e.g. `add(2,3)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub function: String,
    pub args: Vec<i64>,
    pub expected: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFailure {
    pub name: String,
    pub expected: i64,
    /// The computed value, or a string describing the runtime error.
    pub got: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub total: u64,
    pub passed: u64,
    pub failed: u64,
    pub failures: Vec<TestFailure>,
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Int(i64),
    Ident(String),
    Sym(&'static str),
}

fn lex(line: &str, line_no: usize) -> Result<Vec<Token>, MicrolangError> {
    let err = |message: String| MicrolangError::Parse {
        line: line_no,
        message,
    };
    let mut tokens = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<i64>()
                .map_err(|_| err(format!("integer literal `{text}` out of range")))?;
            tokens.push(Token::Int(value));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push(Token::Ident(chars[start..i].iter().collect()));
        } else {
            let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let sym = match two.as_str() {
                "==" | "!=" | "<=" | ">=" => {
                    i += 2;
                    match two.as_str() {
                        "==" => "==",
                        "!=" => "!=",
                        "<=" => "<=",
                        _ => ">=",
                    }
                }
                _ => {
                    i += 1;
                    match c {
                        '(' => "(",
                        ')' => ")",
                        ',' => ",",
                        '=' => "=",
                        '+' => "+",
                        '-' => "-",
                        '*' => "*",
                        '/' => "/",
                        '<' => "<",
                        '>' => ">",
                        other => return Err(err(format!("unexpected character `{other}`"))),
                    }
                }
            };
            tokens.push(Token::Sym(sym));
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    line: usize,
}

impl Parser {
    fn err(&self, message: impl Into<String>) -> MicrolangError {
        MicrolangError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), MicrolangError> {
        match self.next() {
            Some(Token::Sym(s)) if s == sym => Ok(()),
            other => Err(self.err(format!("expected `{sym}`, found {other:?}"))),
        }
    }

    fn expect_ident(&mut self) -> Result<String, MicrolangError> {
        match self.next() {
            Some(Token::Ident(name)) => Ok(name),
            other => Err(self.err(format!("expected identifier, found {other:?}"))),
        }
    }

    fn at_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Token::Ident(w)) if w == word)
    }

    fn expr(&mut self) -> Result<Expr, MicrolangError> {
        if self.at_ident("if") {
            self.pos += 1;
            let cond = self.expr()?;
            if !self.at_ident("then") {
                return Err(self.err("expected `then`"));
            }
            self.pos += 1;
            let then = self.expr()?;
            if !self.at_ident("else") {
                return Err(self.err("expected `else`"));
            }
            self.pos += 1;
            let otherwise = self.expr()?;
            return Ok(Expr::If {
                cond: Box::new(cond),
                then: Box::new(then),
                otherwise: Box::new(otherwise),
            });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, MicrolangError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Token::Sym("==")) => Some(BinOp::Eq),
            Some(Token::Sym("!=")) => Some(BinOp::Ne),
            Some(Token::Sym("<")) => Some(BinOp::Lt),
            Some(Token::Sym("<=")) => Some(BinOp::Le),
            Some(Token::Sym(">")) => Some(BinOp::Gt),
            Some(Token::Sym(">=")) => Some(BinOp::Ge),
            _ => None,
        };
        match op {
            None => Ok(lhs),
            Some(op) => {
                self.pos += 1;
                let rhs = self.additive()?;
                Ok(Expr::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                })
            }
        }
    }

    fn additive(&mut self) -> Result<Expr, MicrolangError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Token::Sym("+")) => BinOp::Add,
                Some(Token::Sym("-")) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Expr, MicrolangError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Sym("*")) => BinOp::Mul,
                Some(Token::Sym("/")) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, MicrolangError> {
        if matches!(self.peek(), Some(Token::Sym("-"))) {
            self.pos += 1;
            let inner = self.unary()?;
            // Negation is 0 - e; keeps the AST to one binary form.
            return Ok(Expr::Binary {
                op: BinOp::Sub,
                lhs: Box::new(Expr::Int(0)),
                rhs: Box::new(inner),
            });
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, MicrolangError> {
        match self.next() {
            Some(Token::Int(v)) => Ok(Expr::Int(v)),
            Some(Token::Ident(name)) => {
                if name == "if" || name == "then" || name == "else" || name == "fn" {
                    Err(self.err(format!("keyword `{name}` in expression position")))
                } else {
                    Ok(Expr::Param(name))
                }
            }
            Some(Token::Sym("(")) => {
                let inner = self.expr()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            other => Err(self.err(format!("expected expression, found {other:?}"))),
        }
    }

    fn finished(&self) -> bool {
        self.pos == self.tokens.len()
    }
}

/// Parse a source file: one `fn` definition per non-empty line; `#` starts a
/// comment line.
pub fn parse_program(source: &str) -> Result<Program, MicrolangError> {
    let mut functions: Vec<Function> = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens = lex(line, line_no)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            line: line_no,
        };
        if !p.at_ident("fn") {
            return Err(p.err("expected `fn`"));
        }
        p.pos += 1;
        let name = p.expect_ident()?;
        p.expect_sym("(")?;
        let mut params = Vec::new();
        if !matches!(p.peek(), Some(Token::Sym(")"))) {
            loop {
                params.push(p.expect_ident()?);
                match p.next() {
                    Some(Token::Sym(",")) => continue,
                    Some(Token::Sym(")")) => break,
                    other => return Err(p.err(format!("expected `,` or `)`, found {other:?}"))),
                }
            }
        } else {
            p.pos += 1;
        }
        p.expect_sym("=")?;
        let body = p.expr()?;
        if !p.finished() {
            return Err(p.err("trailing tokens after function body"));
        }
        if functions.iter().any(|f| f.name == name) {
            return Err(p.err(format!("duplicate function `{name}`")));
        }
        functions.push(Function { name, params, body });
    }
    Ok(Program { functions })
}

/// Parse a test file: `assert name(args...) == literal` lines.
pub fn parse_tests(source: &str) -> Result<Vec<TestCase>, MicrolangError> {
    let mut tests = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens = lex(line, line_no)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            line: line_no,
        };
        if !p.at_ident("assert") {
            return Err(p.err("expected `assert`"));
        }
        p.pos += 1;
        let function = p.expect_ident()?;
        p.expect_sym("(")?;
        let mut args = Vec::new();
        if !matches!(p.peek(), Some(Token::Sym(")"))) {
            loop {
                args.push(p.int_literal()?);
                match p.next() {
                    Some(Token::Sym(",")) => continue,
                    Some(Token::Sym(")")) => break,
                    other => return Err(p.err(format!("expected `,` or `)`, found {other:?}"))),
                }
            }
        } else {
            p.pos += 1;
        }
        p.expect_sym("==")?;
        let expected = p.int_literal()?;
        if !p.finished() {
            return Err(p.err("trailing tokens after assertion"));
        }
        let rendered_args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
        tests.push(TestCase {
            name: format!("{function}({})", rendered_args.join(",")),
            function,
            args,
            expected,
        });
    }
    Ok(tests)
}

impl Parser {
    fn int_literal(&mut self) -> Result<i64, MicrolangError> {
        match self.next() {
            Some(Token::Int(v)) => Ok(v),
            Some(Token::Sym("-")) => match self.next() {
                Some(Token::Int(v)) => Ok(-v),
                other => Err(self.err(format!("expected integer, found {other:?}"))),
            },
            other => Err(self.err(format!("expected integer, found {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering (canonical formatting; parse(render(e)) == e)
// ---------------------------------------------------------------------------

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fn {}({}) = ", self.name, self.params.join(", "))?;
        write_expr(&self.body, 0, f)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, 0, f)
    }
}

fn write_expr(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Int(v) => write!(f, "{v}"),
        Expr::Param(name) => f.write_str(name),
        Expr::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            let parens = prec < min_prec;
            if parens {
                f.write_str("(")?;
            }
            write_expr(lhs, prec, f)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(rhs, prec + 1, f)?;
            if parens {
                f.write_str(")")?;
            }
            Ok(())
        }
        Expr::If {
            cond,
            then,
            otherwise,
        } => {
            let parens = min_prec > 0;
            if parens {
                f.write_str("(")?;
            }
            f.write_str("if ")?;
            write_expr(cond, 0, f)?;
            f.write_str(" then ")?;
            write_expr(then, 0, f)?;
            f.write_str(" else ")?;
            write_expr(otherwise, 0, f)?;
            if parens {
                f.write_str(")")?;
            }
            Ok(())
        }
    }
}

/// Render a program to its canonical source text (one definition per line,
/// trailing newline).
pub fn render_program(program: &Program) -> String {
    let mut out = String::new();
    for function in &program.functions {
        out.push_str(&function.to_string());
        out.push('\n');
    }
    out
}

/// Render a test suite to its canonical source text.
pub fn render_tests(tests: &[TestCase]) -> String {
    let mut out = String::new();
    for t in tests {
        let args: Vec<String> = t.args.iter().map(|a| a.to_string()).collect();
        out.push_str(&format!(
            "assert {}({}) == {}\n",
            t.function,
            args.join(", "),
            t.expected
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum Val {
    Int(i64),
    Bool(bool),
}

#[derive(Debug, Error, PartialEq)]
enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("type error: expected {0}")]
    Type(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

fn eval(expr: &Expr, env: &BTreeMap<&str, i64>) -> Result<Val, EvalError> {
    match expr {
        Expr::Int(v) => Ok(Val::Int(*v)),
        Expr::Param(name) => env
            .get(name.as_str())
            .map(|v| Val::Int(*v))
            .ok_or_else(|| EvalError::UnknownParam(name.clone())),
        Expr::Binary { op, lhs, rhs } => {
            let l = int_of(eval(lhs, env)?)?;
            let r = int_of(eval(rhs, env)?)?;
            match op {
                BinOp::Add => l.checked_add(r).map(Val::Int).ok_or(EvalError::Overflow),
                BinOp::Sub => l.checked_sub(r).map(Val::Int).ok_or(EvalError::Overflow),
                BinOp::Mul => l.checked_mul(r).map(Val::Int).ok_or(EvalError::Overflow),
                BinOp::Div => {
                    if r == 0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        l.checked_div(r).map(Val::Int).ok_or(EvalError::Overflow)
                    }
                }
                BinOp::Eq => Ok(Val::Bool(l == r)),
                BinOp::Ne => Ok(Val::Bool(l != r)),
                BinOp::Lt => Ok(Val::Bool(l < r)),
                BinOp::Le => Ok(Val::Bool(l <= r)),
                BinOp::Gt => Ok(Val::Bool(l > r)),
                BinOp::Ge => Ok(Val::Bool(l >= r)),
            }
        }
        Expr::If {
            cond,
            then,
            otherwise,
        } => match eval(cond, env)? {
            Val::Bool(true) => eval(then, env),
            Val::Bool(false) => eval(otherwise, env),
            Val::Int(_) => Err(EvalError::Type("boolean condition")),
        },
    }
}

fn int_of(v: Val) -> Result<i64, EvalError> {
    match v {
        Val::Int(i) => Ok(i),
        Val::Bool(_) => Err(EvalError::Type("integer operand")),
    }
}

/// Evaluate one call; the result is an integer or a runtime-error string.
pub fn call_function(program: &Program, name: &str, args: &[i64]) -> Result<i64, String> {
    let Some(function) = program.get(name) else {
        return Err(format!("unknown function `{name}`"));
    };
    if function.params.len() != args.len() {
        return Err(format!(
            "arity mismatch: `{name}` takes {} argument(s), got {}",
            function.params.len(),
            args.len()
        ));
    }
    let env: BTreeMap<&str, i64> = function
        .params
        .iter()
        .map(String::as_str)
        .zip(args.iter().copied())
        .collect();
    match eval(&function.body, &env) {
        Ok(Val::Int(v)) => Ok(v),
        Ok(Val::Bool(_)) => Err("type error: function returned a boolean".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Run every test; failures carry expected vs got, where got may be a
/// runtime-error string (e.g. division by zero).
pub fn run_suite(program: &Program, tests: &[TestCase]) -> TestReport {
    let mut failures = Vec::new();
    for t in tests {
        match call_function(program, &t.function, &t.args) {
            Ok(got) if got == t.expected => {}
            Ok(got) => failures.push(TestFailure {
                name: t.name.clone(),
                expected: t.expected,
                got: Value::from(got),
            }),
            Err(message) => failures.push(TestFailure {
                name: t.name.clone(),
                expected: t.expected,
                got: Value::String(message),
            }),
        }
    }
    TestReport {
        total: tests.len() as u64,
        passed: tests.len() as u64 - failures.len() as u64,
        failed: failures.len() as u64,
        failures,
    }
}
