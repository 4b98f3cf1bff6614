//! MiniMIR: values, expressions, instructions, blocks and programs.
//!
//! A program is a list of basic blocks addressed by dense label indices.
//! Blocks flagged as entries are function starts; offset 0 of an entry block
//! is the only legal landing site of an indirect call.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

/// Block label: index into [`Program::blocks`].
pub type Label = usize;

/// Register name. Cheap to clone; compared by content.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(Arc<str>);

impl Reg {
    pub fn new(name: &str) -> Self {
        Reg(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Reg {
    fn from(s: &str) -> Self {
        Reg::new(s)
    }
}

impl Serialize for Reg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Reg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Reg::new(&s))
    }
}

/// Runtime value: a natural number, a function pointer, or the undefined value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub enum Value {
    Nat(BigUint),
    Fp(Label),
    #[default]
    Uv,
}

impl Value {
    pub fn nat(n: u64) -> Self {
        Value::Nat(BigUint::from(n))
    }

    pub fn as_nat(&self) -> Option<&BigUint> {
        match self {
            Value::Nat(n) => Some(n),
            _ => None,
        }
    }

    pub fn is_uv(&self) -> bool {
        matches!(self, Value::Uv)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nat(n) => write!(f, "{n}"),
            Value::Fp(l) => write!(f, "&{l}"),
            Value::Uv => f.write_str("UV"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Le,
    And,
    Implies,
}

impl BinOp {
    pub const ALL: [BinOp; 7] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Eq, BinOp::Le, BinOp::And, BinOp::Implies];

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "=",
            BinOp::Le => "<=",
            BinOp::And => "&&",
            BinOp::Implies => "->",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(BigUint),
    FpConst(Label),
    Reg(Reg),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// Branchless conditional `(c ? t : e)`; never observable.
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn nat(n: u64) -> Self {
        Expr::Const(BigUint::from(n))
    }

    pub fn reg(name: &str) -> Self {
        Expr::Reg(Reg::new(name))
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn cond(c: Expr, t: Expr, e: Expr) -> Self {
        Expr::Cond(Box::new(c), Box::new(t), Box::new(e))
    }

    /// Visits every register mentioned in the expression.
    pub fn for_each_reg(&self, f: &mut impl FnMut(&Reg)) {
        match self {
            Expr::Const(_) | Expr::FpConst(_) => {}
            Expr::Reg(r) => f(r),
            Expr::Bin(_, a, b) => {
                a.for_each_reg(f);
                b.for_each_reg(f);
            }
            Expr::Cond(c, t, e) => {
                c.for_each_reg(f);
                t.for_each_reg(f);
                e.for_each_reg(f);
            }
        }
    }

    /// Visits every function-pointer literal in the expression.
    pub fn for_each_fp(&self, f: &mut impl FnMut(Label)) {
        match self {
            Expr::FpConst(l) => f(*l),
            Expr::Const(_) | Expr::Reg(_) => {}
            Expr::Bin(_, a, b) => {
                a.for_each_fp(f);
                b.for_each_fp(f);
            }
            Expr::Cond(c, t, e) => {
                c.for_each_fp(f);
                t.for_each_fp(f);
                e.for_each_fp(f);
            }
        }
    }

    /// Rewrites every function-pointer literal with `f`.
    pub fn map_fp(&self, f: &impl Fn(Label) -> Expr) -> Expr {
        match self {
            Expr::FpConst(l) => f(*l),
            Expr::Const(_) | Expr::Reg(_) => self.clone(),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.map_fp(f)), Box::new(b.map_fp(f))),
            Expr::Cond(c, t, e) => Expr::Cond(Box::new(c.map_fp(f)), Box::new(t.map_fp(f)), Box::new(e.map_fp(f))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Inst {
    Skip,
    Asgn(Reg, Expr),
    Branch(Expr, Label),
    Jump(Label),
    Load(Reg, Expr),
    Store(Expr, Expr),
    Call(Expr),
    CTarget,
    Ret,
}

impl Inst {
    pub fn is_terminator(&self) -> bool {
        matches!(self, Inst::Ret | Inst::Jump(_))
    }

    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            Inst::Skip | Inst::Jump(_) | Inst::CTarget | Inst::Ret => vec![],
            Inst::Asgn(_, e) | Inst::Branch(e, _) | Inst::Load(_, e) | Inst::Call(e) => vec![e],
            Inst::Store(a, v) => vec![a, v],
        }
    }

    /// Register written by the instruction, if any.
    pub fn def(&self) -> Option<&Reg> {
        match self {
            Inst::Asgn(r, _) | Inst::Load(r, _) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub insts: Vec<Inst>,
    pub is_entry: bool,
}

impl Block {
    pub fn new(insts: Vec<Inst>, is_entry: bool) -> Self {
        Block { insts, is_entry }
    }

    pub fn len(&self) -> usize {
        self.insts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insts.is_empty()
    }
}

/// A MiniMIR program. `names[l]` is the surface identifier of block `l`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub blocks: Vec<Block>,
    pub names: Vec<String>,
}

impl Program {
    /// Builds a program with default block names `b0`, `b1`, ...
    pub fn new(blocks: Vec<Block>) -> Self {
        let names = (0..blocks.len()).map(|i| format!("b{i}")).collect();
        Program { blocks, names }
    }

    pub fn with_names(blocks: Vec<Block>, names: Vec<String>) -> Self {
        assert_eq!(blocks.len(), names.len(), "one name per block");
        Program { blocks, names }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, l: Label) -> Option<&Block> {
        self.blocks.get(l)
    }

    pub fn name(&self, l: Label) -> &str {
        &self.names[l]
    }

    pub fn label_of(&self, name: &str) -> Option<Label> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_entry(&self, l: Label) -> bool {
        self.blocks.get(l).is_some_and(|b| b.is_entry)
    }

    pub fn entry_labels(&self) -> Vec<Label> {
        (0..self.len()).filter(|&l| self.blocks[l].is_entry).collect()
    }

    pub fn contains_ctarget(&self) -> bool {
        self.insts().any(|(_, i)| matches!(i, Inst::CTarget))
    }

    pub fn branch_count(&self) -> usize {
        self.insts().filter(|(_, i)| matches!(i, Inst::Branch(..))).count()
    }

    pub fn code_len(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    /// Iterates over every instruction together with its location.
    pub fn insts(&self) -> impl Iterator<Item = (Pc, &Inst)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(l, b)| b.insts.iter().enumerate().map(move |(o, i)| (Pc::new(l, o), i)))
    }
}

/// Program counter: block label and offset within the block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pc {
    pub label: Label,
    pub offset: usize,
}

impl Pc {
    pub const ENTRY: Pc = Pc { label: 0, offset: 0 };

    pub fn new(label: Label, offset: usize) -> Self {
        Pc { label, offset }
    }

    pub fn next(self) -> Self {
        Pc::new(self.label, self.offset + 1)
    }

    pub fn is_valid(self, p: &Program) -> bool {
        p.block(self.label).is_some_and(|b| self.offset < b.len())
    }
}

impl fmt::Display for Pc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.label, self.offset)
    }
}

pub fn fetch(p: &Program, pc: Pc) -> Option<&Inst> {
    p.blocks.get(pc.label)?.insts.get(pc.offset)
}

/// Which placement rules apply to `ctarget`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WfMode {
    /// Input to hardening: no `ctarget` anywhere.
    Source,
    /// Output of hardening: `ctarget` only at offset 0 of entry blocks.
    Hardened,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum WfViolation {
    #[error("program has no blocks")]
    EmptyProgram,
    #[error("block 0 is not an entry block")]
    FirstNotEntry,
    #[error("block {0} is empty")]
    EmptyBlock(Label),
    #[error("block {0} lacks terminator")]
    MissingTerminator(Label),
    #[error("{kind} target {target} at {at} is not a block")]
    UnknownTarget { kind: &'static str, at: Pc, target: Label },
    #[error("{kind} into entry block {target} at {at}")]
    IntoEntry { kind: &'static str, at: Pc, target: Label },
    #[error("function pointer &{target} at {at} does not name an entry block")]
    FpNotEntry { at: Pc, target: Label },
    #[error("ctarget in source program at {0}")]
    CTargetInSource(Pc),
    #[error("ctarget at {0} is not at the head of an entry block")]
    CTargetMisplaced(Pc),
}

/// Checks the structural side conditions of hardening; an empty result means well-formed.
pub fn wf_program(p: &Program, mode: WfMode) -> Vec<WfViolation> {
    let mut out = Vec::new();
    if p.is_empty() {
        out.push(WfViolation::EmptyProgram);
        return out;
    }
    if !p.blocks[0].is_entry {
        out.push(WfViolation::FirstNotEntry);
    }
    for (l, b) in p.blocks.iter().enumerate() {
        match b.insts.last() {
            None => out.push(WfViolation::EmptyBlock(l)),
            Some(last) if !last.is_terminator() => out.push(WfViolation::MissingTerminator(l)),
            Some(_) => {}
        }
    }
    for (at, inst) in p.insts() {
        let target = match inst {
            Inst::Branch(_, t) => Some(("branch", *t)),
            Inst::Jump(t) => Some(("jump", *t)),
            _ => None,
        };
        if let Some((kind, target)) = target {
            match p.block(target) {
                None => out.push(WfViolation::UnknownTarget { kind, at, target }),
                Some(b) if b.is_entry => out.push(WfViolation::IntoEntry { kind, at, target }),
                Some(_) => {}
            }
        }
        for e in inst.exprs() {
            e.for_each_fp(&mut |target| {
                if !p.is_entry(target) {
                    out.push(WfViolation::FpNotEntry { at, target });
                }
            });
        }
        if matches!(inst, Inst::CTarget) {
            match mode {
                WfMode::Source => out.push(WfViolation::CTargetInSource(at)),
                WfMode::Hardened => {
                    if at.offset != 0 || !p.blocks[at.label].is_entry {
                        out.push(WfViolation::CTargetMisplaced(at));
                    }
                }
            }
        }
    }
    out
}

/// Every register read or written anywhere in `p`.
pub fn used_registers(p: &Program) -> BTreeSet<Reg> {
    let mut regs = BTreeSet::new();
    for (_, inst) in p.insts() {
        if let Some(r) = inst.def() {
            regs.insert(r.clone());
        }
        for e in inst.exprs() {
            e.for_each_reg(&mut |r| {
                regs.insert(r.clone());
            });
        }
    }
    regs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ret_block(is_entry: bool) -> Block {
        Block::new(vec![Inst::Ret], is_entry)
    }

    #[test]
    fn fetch_out_of_range_is_absent() {
        let p = Program::new(vec![Block::new(vec![Inst::Skip, Inst::Ret], true)]);
        assert_eq!(fetch(&p, Pc::new(0, 0)), Some(&Inst::Skip));
        assert_eq!(fetch(&p, Pc::new(1, 0)), None);
        assert_eq!(fetch(&p, Pc::new(0, 2)), None);
    }

    #[test]
    fn missing_terminator_is_reported() {
        let p = Program::new(vec![ret_block(true), Block::new(vec![Inst::Skip], false)]);
        let report = wf_program(&p, WfMode::Source);
        assert_eq!(report, vec![WfViolation::MissingTerminator(1)]);
        assert_eq!(report[0].to_string(), "block 1 lacks terminator");
    }

    #[test]
    fn branch_into_entry_is_reported() {
        let p = Program::new(vec![Block::new(vec![Inst::Branch(Expr::nat(1), 1), Inst::Ret], true), ret_block(true)]);
        let report = wf_program(&p, WfMode::Source);
        assert_eq!(report.len(), 1);
        assert!(report[0].to_string().starts_with("branch into entry block"));
    }

    #[test]
    fn fp_constant_must_name_entry() {
        let p = Program::new(vec![Block::new(vec![Inst::Call(Expr::FpConst(1)), Inst::Ret], true), ret_block(false)]);
        assert!(matches!(wf_program(&p, WfMode::Source)[..], [WfViolation::FpNotEntry { target: 1, .. }]));
    }

    #[test]
    fn ctarget_rules_depend_on_mode() {
        let head = Program::new(vec![Block::new(vec![Inst::CTarget, Inst::Ret], true)]);
        assert!(wf_program(&head, WfMode::Hardened).is_empty());
        assert_eq!(wf_program(&head, WfMode::Source), vec![WfViolation::CTargetInSource(Pc::new(0, 0))]);
        let mid = Program::new(vec![Block::new(vec![Inst::Skip, Inst::CTarget, Inst::Ret], true)]);
        assert_eq!(wf_program(&mid, WfMode::Hardened), vec![WfViolation::CTargetMisplaced(Pc::new(0, 1))]);
    }

    #[test]
    fn first_block_must_be_entry() {
        let p = Program::new(vec![ret_block(false)]);
        assert_eq!(wf_program(&p, WfMode::Source), vec![WfViolation::FirstNotEntry]);
    }

    #[test]
    fn used_registers_collects_reads_and_writes() {
        let p = Program::new(vec![Block::new(vec![Inst::Skip, Inst::Ret], true)]);
        assert!(used_registers(&p).is_empty());
        let p = Program::new(vec![Block::new(
            vec![Inst::Asgn(Reg::new("msf"), Expr::nat(0)), Inst::Load(Reg::new("x"), Expr::reg("a")), Inst::Ret],
            true,
        )]);
        let regs: Vec<_> = used_registers(&p).into_iter().map(|r| r.to_string()).collect();
        assert_eq!(regs, vec!["a", "msf", "x"]);
    }
}
