//! Text format for programs and JSON documents for states, traces and directives.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::interp::{Config, Directive, Memory, Observation, RegFile, SpecState};
use crate::ir::{BinOp, Block, Expr, Inst, Label, Pc, Program, Reg, Value};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Nat(BigUint),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Nat(n) => write!(f, "'{n}'"),
            Tok::Sym(s) => write!(f, "'{s}'"),
        }
    }
}

// longest first, so that "<-" wins over "<="'s prefix and "->" over "-"
const SYMBOLS: [&str; 14] = ["<-", "->", "<=", "&&", "&", "(", ")", "+", "-", "*", "=", "?", ":", ","];

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '\''
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    for (ln, line) in src.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let pos = Pos { line: ln + 1, col: i + 1 };
            if c == '#' {
                break;
            } else if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                out.push((Tok::Nat(digits.parse().expect("decimal digits")), pos));
            } else if is_ident_start(c) {
                let start = i;
                while i < chars.len() && is_ident_char(chars[i]) {
                    i += 1;
                }
                out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            } else {
                let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
                match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                    Some(s) => {
                        out.push((Tok::Sym(s), pos));
                        i += s.len();
                    }
                    None => {
                        return Err(ParseError {
                            line: pos.line,
                            col: pos.col,
                            message: format!("unexpected character '{c}'"),
                        })
                    }
                }
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
    end: Pos,
    /// Label references by first appearance; resolved after all blocks are known.
    refs: Vec<(String, Pos)>,
    ref_ids: HashMap<String, usize>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.0)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.i + 1).map(|t| &t.0)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.i).map_or(self.end, |t| t.1)
    }

    fn err<T>(&self, message: String) -> PResult<T> {
        let p = self.pos();
        Err(ParseError { line: p.line, col: p.col, message })
    }

    fn found(&self) -> String {
        self.peek().map_or("end of input".to_string(), |t| t.to_string())
    }

    fn expect_sym(&mut self, s: &'static str) -> PResult<()> {
        if self.peek() == Some(&Tok::Sym(s)) {
            self.i += 1;
            Ok(())
        } else {
            self.err(format!("expected '{s}', found {}", self.found()))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Pos)> {
        let pos = self.pos();
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.i += 1;
                Ok((s, pos))
            }
            _ => self.err(format!("expected {what}, found {}", self.found())),
        }
    }

    fn label_ref(&mut self) -> PResult<Label> {
        let (name, pos) = self.ident("label")?;
        let next = self.refs.len();
        let id = *self.ref_ids.entry(name.clone()).or_insert(next);
        if id == next {
            self.refs.push((name, pos));
        }
        Ok(id)
    }

    fn at_block_start(&self) -> bool {
        matches!(self.peek(), Some(Tok::Ident(k)) if k == "entry" || k == "block")
            && self.peek2() != Some(&Tok::Sym("<-"))
    }

    fn expr(&mut self) -> PResult<Expr> {
        match self.peek().cloned() {
            Some(Tok::Nat(n)) => {
                self.i += 1;
                Ok(Expr::Const(n))
            }
            Some(Tok::Ident(x)) => {
                self.i += 1;
                Ok(Expr::Reg(Reg::new(&x)))
            }
            Some(Tok::Sym("&")) => {
                self.i += 1;
                Ok(Expr::FpConst(self.label_ref()?))
            }
            Some(Tok::Sym("(")) => {
                self.i += 1;
                let lhs = self.expr()?;
                let op = match self.peek() {
                    Some(Tok::Sym("?")) => {
                        self.i += 1;
                        let t = self.expr()?;
                        self.expect_sym(":")?;
                        let e = self.expr()?;
                        self.expect_sym(")")?;
                        return Ok(Expr::cond(lhs, t, e));
                    }
                    Some(Tok::Sym(s)) => BinOp::ALL.into_iter().find(|op| op.symbol() == *s),
                    _ => None,
                };
                let Some(op) = op else {
                    return self.err(format!("expected operator, found {}", self.found()));
                };
                self.i += 1;
                let rhs = self.expr()?;
                self.expect_sym(")")?;
                Ok(Expr::bin(op, lhs, rhs))
            }
            _ => self.err(format!("expected expression, found {}", self.found())),
        }
    }

    fn inst(&mut self) -> PResult<Inst> {
        let kw = match self.peek() {
            Some(Tok::Ident(k)) => k.clone(),
            _ => return self.err(format!("expected instruction, found {}", self.found())),
        };
        if self.peek2() == Some(&Tok::Sym("<-")) {
            self.i += 2;
            return Ok(Inst::Asgn(Reg::new(&kw), self.expr()?));
        }
        let inst = match kw.as_str() {
            "skip" => Inst::Skip,
            "ctarget" => Inst::CTarget,
            "ret" => Inst::Ret,
            "branch" => {
                self.i += 1;
                let e = self.expr()?;
                return Ok(Inst::Branch(e, self.label_ref()?));
            }
            "jump" => {
                self.i += 1;
                return Ok(Inst::Jump(self.label_ref()?));
            }
            "load" => {
                self.i += 1;
                let (x, _) = self.ident("register")?;
                self.expect_sym(",")?;
                return Ok(Inst::Load(Reg::new(&x), self.expr()?));
            }
            "store" => {
                self.i += 1;
                let a = self.expr()?;
                self.expect_sym(",")?;
                return Ok(Inst::Store(a, self.expr()?));
            }
            "call" => {
                self.i += 1;
                return Ok(Inst::Call(self.expr()?));
            }
            _ => return self.err(format!("expected instruction, found {}", self.found())),
        };
        self.i += 1;
        Ok(inst)
    }
}

fn relabel(inst: &Inst, map: &[Label]) -> Inst {
    let fp = |l: Label| Expr::FpConst(map[l]);
    match inst {
        Inst::Branch(e, l) => Inst::Branch(e.map_fp(&fp), map[*l]),
        Inst::Jump(l) => Inst::Jump(map[*l]),
        Inst::Asgn(x, e) => Inst::Asgn(x.clone(), e.map_fp(&fp)),
        Inst::Load(x, e) => Inst::Load(x.clone(), e.map_fp(&fp)),
        Inst::Store(a, v) => Inst::Store(a.map_fp(&fp), v.map_fp(&fp)),
        Inst::Call(e) => Inst::Call(e.map_fp(&fp)),
        i => i.clone(),
    }
}

pub fn parse_program(src: &str) -> Result<Program, Vec<ParseError>> {
    let toks = lex(src).map_err(|e| vec![e])?;
    let end = Pos { line: src.lines().count().max(1), col: src.lines().last().map_or(1, |l| l.chars().count() + 1) };
    let mut p = Parser { toks, i: 0, end, refs: Vec::new(), ref_ids: HashMap::new() };
    let mut blocks = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut errors = Vec::new();
    let mut defined: HashMap<String, Label> = HashMap::new();

    let body = (|| -> PResult<()> {
        if p.peek().is_none() {
            return p.err("expected block definition, found end of input".into());
        }
        while p.peek().is_some() {
            let is_entry = match p.peek() {
                Some(Tok::Ident(k)) if k == "entry" => true,
                Some(Tok::Ident(k)) if k == "block" => false,
                _ => return p.err(format!("expected 'entry' or 'block', found {}", p.found())),
            };
            p.i += 1;
            let (name, pos) = p.ident("block label")?;
            p.expect_sym(":")?;
            if defined.contains_key(&name) {
                errors.push(ParseError { line: pos.line, col: pos.col, message: format!("duplicate label {name}") });
            } else {
                defined.insert(name.clone(), names.len());
            }
            let mut insts = vec![p.inst()?];
            while p.peek().is_some() && !p.at_block_start() {
                insts.push(p.inst()?);
            }
            blocks.push(Block::new(insts, is_entry));
            names.push(name);
        }
        Ok(())
    })();
    if let Err(e) = body {
        errors.push(e);
        return Err(errors);
    }

    let mut map = Vec::with_capacity(p.refs.len());
    for (name, pos) in &p.refs {
        match defined.get(name) {
            Some(&l) => map.push(l),
            None => {
                errors.push(ParseError { line: pos.line, col: pos.col, message: format!("unknown label {name}") });
                map.push(0);
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    for b in &mut blocks {
        b.insts = b.insts.iter().map(|i| relabel(i, &map)).collect();
    }
    Ok(Program::with_names(blocks, names))
}

fn label_name(p: &Program, l: Label) -> String {
    p.names.get(l).cloned().unwrap_or_else(|| format!("b{l}"))
}

pub fn print_expr(p: &Program, e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, p, e);
    s
}

fn write_expr(out: &mut String, p: &Program, e: &Expr) {
    match e {
        Expr::Const(n) => write!(out, "{n}").unwrap(),
        Expr::FpConst(l) => write!(out, "&{}", label_name(p, *l)).unwrap(),
        Expr::Reg(r) => out.push_str(r.as_str()),
        Expr::Bin(op, a, b) => {
            out.push('(');
            write_expr(out, p, a);
            write!(out, " {} ", op.symbol()).unwrap();
            write_expr(out, p, b);
            out.push(')');
        }
        Expr::Cond(c, t, f) => {
            out.push('(');
            write_expr(out, p, c);
            out.push_str(" ? ");
            write_expr(out, p, t);
            out.push_str(" : ");
            write_expr(out, p, f);
            out.push(')');
        }
    }
}

pub fn print_inst(p: &Program, inst: &Inst) -> String {
    let e = |e: &Expr| print_expr(p, e);
    match inst {
        Inst::Skip => "skip".into(),
        Inst::Asgn(x, v) => format!("{x} <- {}", e(v)),
        Inst::Branch(c, l) => format!("branch {} {}", e(c), label_name(p, *l)),
        Inst::Jump(l) => format!("jump {}", label_name(p, *l)),
        Inst::Load(x, a) => format!("load {x}, {}", e(a)),
        Inst::Store(a, v) => format!("store {}, {}", e(a), e(v)),
        Inst::Call(t) => format!("call {}", e(t)),
        Inst::CTarget => "ctarget".into(),
        Inst::Ret => "ret".into(),
    }
}

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (l, b) in p.blocks.iter().enumerate() {
        if l > 0 {
            out.push('\n');
        }
        writeln!(out, "{} {}:", if b.is_entry { "entry" } else { "block" }, label_name(p, l)).unwrap();
        for i in &b.insts {
            writeln!(out, "  {}", print_inst(p, i)).unwrap();
        }
    }
    out
}

// ---- JSON documents ----

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct DecodeError {
    /// JSON pointer to the offending element ("" for the document root).
    pub path: String,
    pub message: String,
}

fn decode<'a, T: Deserialize<'a>>(text: &'a str) -> Result<T, DecodeError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let r = serde_path_to_error::deserialize(&mut *de).map_err(|e| {
        let path = e.path().iter().map(|s| format!("/{}", pointer_segment(s))).collect::<String>();
        DecodeError { path, message: strip_position(&e.into_inner().to_string()) }
    })?;
    de.end().map_err(|e| DecodeError { path: String::new(), message: strip_position(&e.to_string()) })?;
    Ok(r)
}

fn pointer_segment(s: &serde_path_to_error::Segment) -> String {
    use serde_path_to_error::Segment;
    match s {
        Segment::Seq { index } => index.to_string(),
        Segment::Map { key } => key.replace('~', "~0").replace('/', "~1"),
        Segment::Enum { variant } => variant.clone(),
        Segment::Unknown => "?".into(),
    }
}

fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// Natural number: a JSON number when it fits in 64 bits, a decimal string otherwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NatDoc(pub BigUint);

impl Serialize for NatDoc {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0.to_u64() {
            Some(n) => s.serialize_u64(n),
            None => s.serialize_str(&self.0.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for NatDoc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = NatDoc;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a natural number or a string of decimal digits")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<NatDoc, E> {
                Ok(NatDoc(v.into()))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<NatDoc, E> {
                if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(E::invalid_value(de::Unexpected::Str(v), &self));
                }
                Ok(NatDoc(v.parse().map_err(E::custom)?))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueDoc {
    Uv,
    Fp(Label),
    Nat(NatDoc),
}

impl From<&Value> for ValueDoc {
    fn from(v: &Value) -> Self {
        match v {
            Value::Nat(n) => ValueDoc::Nat(NatDoc(n.clone())),
            Value::Fp(l) => ValueDoc::Fp(*l),
            Value::Uv => ValueDoc::Uv,
        }
    }
}

impl From<ValueDoc> for Value {
    fn from(v: ValueDoc) -> Self {
        match v {
            ValueDoc::Nat(n) => Value::Nat(n.0),
            ValueDoc::Fp(l) => Value::Fp(l),
            ValueDoc::Uv => Value::Uv,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ObsDoc {
    Load(usize),
    Store(usize),
    Branch(bool),
    Call(usize),
}

impl From<Observation> for ObsDoc {
    fn from(o: Observation) -> Self {
        match o {
            Observation::Load(a) => ObsDoc::Load(a),
            Observation::Store(a) => ObsDoc::Store(a),
            Observation::Branch(b) => ObsDoc::Branch(b),
            Observation::Call(l) => ObsDoc::Call(l),
        }
    }
}

impl From<ObsDoc> for Observation {
    fn from(o: ObsDoc) -> Self {
        match o {
            ObsDoc::Load(a) => Observation::Load(a),
            ObsDoc::Store(a) => Observation::Store(a),
            ObsDoc::Branch(b) => Observation::Branch(b),
            ObsDoc::Call(l) => Observation::Call(l),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct McTargetDoc {
    addr: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum CallDoc {
    Mir(Pc),
    Mc(McTargetDoc),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DirDoc {
    Branch(bool),
    Call(CallDoc),
}

impl From<Directive> for DirDoc {
    fn from(d: Directive) -> Self {
        match d {
            Directive::Branch(b) => DirDoc::Branch(b),
            Directive::CallMir(pc) => DirDoc::Call(CallDoc::Mir(pc)),
            Directive::CallMc(addr) => DirDoc::Call(CallDoc::Mc(McTargetDoc { addr })),
        }
    }
}

impl From<DirDoc> for Directive {
    fn from(d: DirDoc) -> Self {
        match d {
            DirDoc::Branch(b) => Directive::Branch(b),
            DirDoc::Call(CallDoc::Mir(pc)) => Directive::CallMir(pc),
            DirDoc::Call(CallDoc::Mc(t)) => Directive::CallMc(t.addr),
        }
    }
}

pub fn trace_to_json(t: &[Observation]) -> serde_json::Value {
    serde_json::to_value(t.iter().map(|o| ObsDoc::from(*o)).collect::<Vec<_>>()).expect("serializable")
}

pub fn encode_trace(t: &[Observation]) -> String {
    trace_to_json(t).to_string()
}

pub fn decode_trace(text: &str) -> Result<Vec<Observation>, DecodeError> {
    Ok(decode::<Vec<ObsDoc>>(text)?.into_iter().map(Into::into).collect())
}

pub fn directives_to_json(ds: &[Directive]) -> serde_json::Value {
    serde_json::to_value(ds.iter().map(|d| DirDoc::from(*d)).collect::<Vec<_>>()).expect("serializable")
}

pub fn encode_directives(ds: &[Directive]) -> String {
    directives_to_json(ds).to_string()
}

pub fn decode_directives(text: &str) -> Result<Vec<Directive>, DecodeError> {
    Ok(decode::<Vec<DirDoc>>(text)?.into_iter().map(Into::into).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    regs: BTreeMap<String, ValueDoc>,
    mem: Vec<ValueDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pc: Option<Pc>,
    #[serde(default)]
    stk: Vec<Pc>,
    #[serde(default)]
    ct: bool,
    #[serde(default)]
    ms: bool,
}

pub fn state_to_json(s: &SpecState) -> serde_json::Value {
    let doc = StateDoc {
        regs: s.cfg.regs.iter().map(|(r, v)| (r.to_string(), v.into())).collect(),
        mem: s.cfg.mem.cells().iter().map(Into::into).collect(),
        pc: Some(s.cfg.pc),
        stk: s.cfg.stk.clone(),
        ct: s.ct,
        ms: s.ms,
    };
    serde_json::to_value(doc).expect("serializable")
}

pub fn encode_state(s: &SpecState) -> String {
    state_to_json(s).to_string()
}

/// Decodes a MiniMIR state; `pc` defaults to the program entry and the flags to false.
pub fn decode_state(text: &str) -> Result<SpecState, DecodeError> {
    let doc: StateDoc = decode(text)?;
    if doc.mem.is_empty() {
        return Err(DecodeError { path: "/mem".into(), message: "memory must have at least one cell".into() });
    }
    let regs: RegFile = doc.regs.into_iter().map(|(k, v)| (Reg::new(&k), v.into())).collect();
    let mem = Memory::new(doc.mem.into_iter().map(Into::into).collect());
    Ok(SpecState { cfg: Config { pc: doc.pc.unwrap_or(Pc::ENTRY), regs, mem, stk: doc.stk }, ct: doc.ct, ms: doc.ms })
}

/// A pair of initial states, as used by relative-security checks.
pub fn decode_state_pair(text: &str) -> Result<(SpecState, SpecState), DecodeError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct PairDoc {
        s1: serde_json::Value,
        s2: serde_json::Value,
    }
    let doc: PairDoc = decode(text)?;
    let one = |v: serde_json::Value, key: &str| {
        decode_state(&v.to_string()).map_err(|e| DecodeError { path: format!("/{key}{}", e.path), message: e.message })
    };
    Ok((one(doc.s1, "s1")?, one(doc.s2, "s2")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_program() {
        let p = parse_program("entry main: ret").unwrap();
        assert_eq!(p.blocks, vec![Block::new(vec![Inst::Ret], true)]);
        assert_eq!(p.names, vec!["main"]);
    }

    #[test]
    fn unknown_label_is_reported() {
        let e = parse_program("block b: jump nowhere").unwrap_err();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].message, "unknown label nowhere");
        assert_eq!((e[0].line, e[0].col), (1, 15));
    }

    #[test]
    fn duplicate_label_is_reported() {
        let e = parse_program("entry a: ret\nblock a: ret").unwrap_err();
        assert_eq!(e[0].message, "duplicate label a");
        assert_eq!(e[0].line, 2);
    }

    #[test]
    fn syntax_error_position() {
        let e = parse_program("entry a:\n  x <- (1 + )\n  ret").unwrap_err();
        assert_eq!((e[0].line, e[0].col), (2, 13));
        assert!(e[0].message.starts_with("expected expression"), "{}", e[0].message);
    }

    #[test]
    fn forward_references_resolve_by_definition_order() {
        let src = "entry a:\n  x <- &f\n  branch (x = &f) b # comment\n  ret\nblock b:\n  jump b\nentry f:\n  ret\n";
        let p = parse_program(src).unwrap();
        assert_eq!(p.blocks[0].insts[0], Inst::Asgn(Reg::new("x"), Expr::FpConst(2)));
        assert!(matches!(p.blocks[0].insts[1], Inst::Branch(_, 1)));
        assert_eq!(p.blocks[1].insts[0], Inst::Jump(1));
    }

    #[test]
    fn keywords_usable_as_registers() {
        let p = parse_program("entry a:\n  ret <- 1\n  entry <- ret\n  call entry\n  ret").unwrap();
        assert_eq!(p.blocks.len(), 1);
        assert_eq!(p.blocks[0].insts[1], Inst::Asgn(Reg::new("entry"), Expr::reg("ret")));
    }

    #[test]
    fn lexer_prefers_two_char_operators() {
        let p = parse_program("entry a:\n  x <- (y<=z)\n  x <- (y->z)\n  x <- (y-z)\n  ret").unwrap();
        let ops: Vec<_> = p.blocks[0].insts[..3]
            .iter()
            .map(|i| match i {
                Inst::Asgn(_, Expr::Bin(op, _, _)) => *op,
                _ => panic!(),
            })
            .collect();
        assert_eq!(ops, vec![BinOp::Le, BinOp::Implies, BinOp::Sub]);
    }

    #[test]
    fn printer_format() {
        assert_eq!(print_program(&Program::new(vec![Block::new(vec![Inst::Ret], true)])), "entry b0:\n  ret\n");
        let p = Program::new(vec![
            Block::new(
                vec![
                    Inst::Load(Reg::new("x"), Expr::cond(Expr::reg("msf"), Expr::nat(0), Expr::reg("a"))),
                    Inst::Jump(1),
                ],
                true,
            ),
            Block::new(vec![Inst::Ret], false),
        ]);
        assert_eq!(print_program(&p), "entry b0:\n  load x, (msf ? 0 : a)\n  jump b1\n\nblock b1:\n  ret\n");
    }

    #[test]
    fn json_shapes() {
        assert_eq!(encode_trace(&[Observation::Load(5), Observation::Branch(true)]), r#"[{"load":5},{"branch":true}]"#);
        assert_eq!(encode_directives(&[Directive::CallMir(Pc::new(2, 0))]), r#"[{"call":{"label":2,"offset":0}}]"#);
        assert_eq!(encode_directives(&[Directive::CallMc(17)]), r#"[{"call":{"addr":17}}]"#);
        let v = |v: Value| serde_json::to_string(&ValueDoc::from(&v)).unwrap();
        assert_eq!(v(Value::Uv), r#""uv""#);
        assert_eq!(v(Value::Fp(3)), r#"{"fp":3}"#);
        assert_eq!(v(Value::nat(7)), r#"{"nat":7}"#);
        let big = BigUint::from(1u8) << 80usize;
        assert_eq!(v(Value::Nat(big.clone())), format!(r#"{{"nat":"{big}"}}"#));
    }

    #[test]
    fn decode_errors_carry_pointer() {
        let e = decode_trace(r#"[{"load":1},{"lode":2}]"#).unwrap_err();
        assert_eq!(e.path, "/1");
        let e = decode_state(r#"{"regs":{"x":{"nat":-1}},"mem":["uv"]}"#).unwrap_err();
        assert_eq!(e.path, "/regs/x/nat");
        let e = decode_state(r#"{"regs":{},"mem":[]}"#).unwrap_err();
        assert_eq!(e.path, "/mem");
        let e = decode_state_pair(r#"{"s1":{"regs":{},"mem":["uv"]},"s2":{"regs":{},"mem":[1]}}"#).unwrap_err();
        assert_eq!(e.path, "/s2/mem/0");
    }

    #[test]
    fn state_defaults() {
        let s = decode_state(r#"{"regs":{"a":{"fp":1}},"mem":[{"nat":"123456789012345678901234567890"}]}"#).unwrap();
        assert_eq!(s.cfg.pc, Pc::ENTRY);
        assert!(!s.ct && !s.ms && s.cfg.stk.is_empty());
        assert_eq!(s.cfg.regs.get(&Reg::new("a")), Value::Fp(1));
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            Just(Value::Uv),
            (0usize..20).prop_map(Value::Fp),
            any::<u64>().prop_map(Value::nat),
            any::<u128>().prop_map(|n| Value::Nat(n.into())),
        ]
    }

    fn arb_obs() -> impl Strategy<Value = Observation> {
        prop_oneof![
            any::<usize>().prop_map(Observation::Load),
            any::<usize>().prop_map(Observation::Store),
            any::<bool>().prop_map(Observation::Branch),
            any::<usize>().prop_map(Observation::Call),
        ]
    }

    fn arb_dir() -> impl Strategy<Value = Directive> {
        prop_oneof![
            any::<bool>().prop_map(Directive::Branch),
            (0usize..50, 0usize..50).prop_map(|(l, o)| Directive::CallMir(Pc::new(l, o))),
            any::<usize>().prop_map(Directive::CallMc),
        ]
    }

    fn arb_state() -> impl Strategy<Value = SpecState> {
        (
            prop::collection::btree_map("[a-z][a-z0-9_]{0,6}", arb_value(), 0..6),
            prop::collection::vec(arb_value(), 1..8),
            (0usize..9, 0usize..9),
            prop::collection::vec((0usize..9, 0usize..9), 0..3),
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(regs, mem, pc, stk, ct, ms)| SpecState {
                cfg: Config {
                    pc: Pc::new(pc.0, pc.1),
                    regs: regs.into_iter().map(|(k, v)| (Reg::new(&k), v)).collect(),
                    mem: Memory::new(mem),
                    stk: stk.into_iter().map(|(l, o)| Pc::new(l, o)).collect(),
                },
                ct,
                ms,
            })
    }

    proptest! {
        #[test]
        fn trace_round_trip(t in prop::collection::vec(arb_obs(), 0..20)) {
            prop_assert_eq!(decode_trace(&encode_trace(&t)).unwrap(), t);
        }

        #[test]
        fn directive_round_trip(d in prop::collection::vec(arb_dir(), 0..20)) {
            prop_assert_eq!(decode_directives(&encode_directives(&d)).unwrap(), d);
        }

        #[test]
        fn state_round_trip(s in arb_state()) {
            prop_assert_eq!(decode_state(&encode_state(&s)).unwrap(), s);
        }
    }
}
