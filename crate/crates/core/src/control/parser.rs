//! Recursive-descent parser for control programs.
//!
//! ```text
//! program   := { function } { stmt }
//! function  := "function" IDENT "(" ")" "{" { stmt } "}"
//! stmt      := "alap" "{" { stmt } "}"
//!            | "node" IDENT ";"
//!            | IDENT "(" [ arg { "," arg } ] ")" ";"
//!            | IDENT ";"
//! arg       := IDENT | "out" IDENT
//! ```
//!
//! `//` starts a comment running to the end of the line. A bare `IDENT;` or
//! `IDENT();` names a function if one is declared with that name, and a rule
//! otherwise.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::ast::{Arg, ControlProgram, Function, Statement};

const KEYWORDS: [&str; 4] = ["function", "alap", "node", "out"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Semi,
    Comma,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    let (mut line, mut col) = (1, 1);
    while let Some(&(i, c)) = chars.peek() {
        let pos = Pos { line, col };
        let mut advance = |chars: &mut std::iter::Peekable<std::str::CharIndices<'_>>| {
            let (_, c) = chars.next().expect("peeked");
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
        };
        match c {
            c if c.is_whitespace() => advance(&mut chars),
            '/' if text[i..].starts_with("//") => {
                while chars.peek().is_some_and(|(_, c)| *c != '\n') {
                    advance(&mut chars);
                }
            }
            '(' | ')' | '{' | '}' | ';' | ',' => {
                advance(&mut chars);
                out.push((
                    match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        ';' => Tok::Semi,
                        _ => Tok::Comma,
                    },
                    pos,
                ));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        ident.push(c);
                        advance(&mut chars);
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(ident), pos));
            }
            other => {
                return Err(ParseError { line, col, message: format!("unexpected character `{other}`") });
            }
        }
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

/// Statement before name resolution.
enum RawStmt {
    Call { name: String, args: Option<Vec<(Arg, Pos)>>, pos: Pos },
    Alap(Vec<RawStmt>),
    Node(String, Pos),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let p = self.pos();
        Err(ParseError { line: p.line, col: p.col, message: message.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Pos, ParseError> {
        if *self.peek() == tok {
            Ok(self.next().1)
        } else {
            self.err(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos), ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let p = self.next().1;
                Ok((s, p))
            }
            t => self.err(format!("expected {what}, found {}", describe(&t))),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn block(&mut self) -> Result<Vec<RawStmt>, ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut body = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return self.err("unterminated block, expected `}`");
            }
            body.push(self.stmt()?);
        }
        self.next();
        Ok(body)
    }

    fn stmt(&mut self) -> Result<RawStmt, ParseError> {
        if self.is_kw("alap") {
            self.next();
            return Ok(RawStmt::Alap(self.block()?));
        }
        if self.is_kw("node") {
            self.next();
            let (name, pos) = self.ident("variable name")?;
            self.expect(Tok::Semi, "`;`")?;
            return Ok(RawStmt::Node(name, pos));
        }
        if self.is_kw("function") {
            return self.err("functions must be declared before the main statements");
        }
        let (name, pos) = self.ident("statement")?;
        let args = if *self.peek() == Tok::LParen {
            self.next();
            let mut args = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    let out = self.is_kw("out");
                    if out {
                        self.next();
                    }
                    let (v, p) = self.ident("argument")?;
                    args.push((if out { Arg::Out(v) } else { Arg::Var(v) }, p));
                    if *self.peek() == Tok::Comma {
                        self.next();
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen, "`)` or `,`")?;
            Some(args)
        } else {
            None
        };
        self.expect(Tok::Semi, "`;`")?;
        Ok(RawStmt::Call { name, args, pos })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::LBrace => "`{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::Semi => "`;`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Eof => "end of input".into(),
    }
}

struct Resolver<'a> {
    functions: &'a BTreeSet<String>,
    calls: BTreeSet<String>,
}

impl Resolver<'_> {
    fn resolve(&mut self, raw: Vec<RawStmt>, scope: &mut BTreeSet<String>) -> Result<Vec<Statement>, ParseError> {
        let mut out = Vec::with_capacity(raw.len());
        for s in raw {
            out.push(match s {
                RawStmt::Alap(body) => Statement::Alap(self.resolve(body, scope)?),
                RawStmt::Node(name, pos) => {
                    if !scope.insert(name.clone()) {
                        return Err(at(pos, format!("variable `{name}` declared twice")));
                    }
                    Statement::NodeDecl(name)
                }
                RawStmt::Call { name, args, pos } => {
                    if self.functions.contains(&name) {
                        if args.as_ref().is_some_and(|a| !a.is_empty()) {
                            return Err(at(pos, format!("function `{name}` takes no arguments")));
                        }
                        self.calls.insert(name.clone());
                        Statement::FunctionCall(name)
                    } else {
                        let args = args.unwrap_or_default();
                        for (a, p) in &args {
                            if !scope.contains(a.var()) {
                                return Err(at(*p, format!("undeclared variable `{}`", a.var())));
                            }
                        }
                        Statement::RuleCall { name, args: args.into_iter().map(|(a, _)| a).collect() }
                    }
                }
            });
        }
        Ok(out)
    }
}

fn at(pos: Pos, message: String) -> ParseError {
    ParseError { line: pos.line, col: pos.col, message }
}

pub fn parse_program(text: &str) -> Result<ControlProgram, ParseError> {
    let mut p = Parser { toks: lex(text)?, at: 0 };
    let mut raw_fns = Vec::new();
    let mut names = BTreeSet::new();
    while p.is_kw("function") {
        p.next();
        let (name, pos) = p.ident("function name")?;
        p.expect(Tok::LParen, "`(`")?;
        p.expect(Tok::RParen, "`)`")?;
        let body = p.block()?;
        if !names.insert(name.clone()) {
            return Err(at(pos, format!("function `{name}` defined twice")));
        }
        raw_fns.push((name, pos, body));
    }
    let mut raw_main = Vec::new();
    while *p.peek() != Tok::Eof {
        raw_main.push(p.stmt()?);
    }

    let mut graph: BTreeMap<String, (Pos, BTreeSet<String>)> = BTreeMap::new();
    let mut functions = Vec::new();
    for (name, pos, body) in raw_fns {
        let mut r = Resolver { functions: &names, calls: BTreeSet::new() };
        let body = r.resolve(body, &mut BTreeSet::new())?;
        graph.insert(name.clone(), (pos, r.calls));
        functions.push(Function { name, body });
    }
    let main = Resolver { functions: &names, calls: BTreeSet::new() }.resolve(raw_main, &mut BTreeSet::new())?;

    // the call graph must be acyclic
    fn visit(
        f: &str,
        graph: &BTreeMap<String, (Pos, BTreeSet<String>)>,
        state: &mut BTreeMap<String, bool>,
    ) -> Result<(), ParseError> {
        match state.get(f) {
            Some(true) => return Ok(()),
            Some(false) => {
                let pos = graph[f].0;
                return Err(at(pos, format!("function `{f}` is recursive")));
            }
            None => {}
        }
        state.insert(f.to_owned(), false);
        for callee in &graph[f].1 {
            visit(callee, graph, state)?;
        }
        state.insert(f.to_owned(), true);
        Ok(())
    }
    let mut state = BTreeMap::new();
    for f in graph.keys() {
        visit(f, &graph, &mut state)?;
    }

    Ok(ControlProgram { functions, main })
}
