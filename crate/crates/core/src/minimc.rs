//! MiniMC: the flat machine language obtained by linearizing MiniMIR.
//!
//! Memory is the data section followed by the code section. Code addresses are
//! absolute, so the instruction at address `a` is `code[a - data_len]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::interp::{
    eval_nat, pure_step, run, CetMode, Directive, Halt, Machine, Observation, Prediction, Run, Step, StepOutcome,
    StuckReason,
};
use crate::ir::{Expr, Inst, Label, Pc, Program, Reg};
use crate::textio::{print_expr, DecodeError, NatDoc};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayoutMap {
    pub data_len: usize,
    /// Code-relative offset of each block.
    pub starts: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl LayoutMap {
    pub fn addr(&self, l: Label) -> usize {
        self.data_len + self.starts[l]
    }

    pub fn pc_addr(&self, pc: Pc) -> usize {
        self.addr(pc.label) + pc.offset
    }

    pub fn code_len(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn in_code(&self, a: usize) -> bool {
        a >= self.data_len && a < self.data_len + self.code_len()
    }

    /// Inverse of [`pc_addr`](Self::pc_addr) on the code range.
    pub fn locate(&self, a: usize) -> Option<Pc> {
        if !self.in_code(a) {
            return None;
        }
        let rel = a - self.data_len;
        // last block starting at or before rel; empty blocks never contain an address
        let l = self.starts.partition_point(|&s| s <= rel) - 1;
        let l = (0..=l).rev().find(|&l| self.sizes[l] > 0 && rel < self.starts[l] + self.sizes[l])?;
        Some(Pc::new(l, rel - self.starts[l]))
    }

    /// Block whose start is exactly `a`.
    pub fn label_at(&self, a: usize) -> Option<Label> {
        self.locate(a).filter(|pc| pc.offset == 0).map(|pc| pc.label)
    }

    pub fn to_json(&self, p: &Program) -> serde_json::Value {
        #[derive(Serialize)]
        struct Doc {
            data_len: usize,
            starts: BTreeMap<String, usize>,
        }
        let starts = self.starts.iter().enumerate().map(|(l, s)| (p.name(l).to_string(), *s)).collect();
        serde_json::to_value(Doc { data_len: self.data_len, starts }).expect("serializable")
    }

    /// Reads a layout sidecar for `p`. Every block must be listed; sizes come from `p`.
    pub fn from_json(text: &str, p: &Program) -> Result<LayoutMap, DecodeError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            data_len: usize,
            starts: BTreeMap<String, usize>,
        }
        let doc: Doc =
            serde_json::from_str(text).map_err(|e| DecodeError { path: String::new(), message: e.to_string() })?;
        let mut starts = Vec::with_capacity(p.len());
        for l in 0..p.len() {
            let name = p.name(l);
            let s = doc.starts.get(name).ok_or_else(|| DecodeError {
                path: format!("/starts/{name}"),
                message: "block missing from layout".into(),
            })?;
            starts.push(*s);
        }
        if let Some(extra) = doc.starts.keys().find(|k| p.label_of(k).is_none()) {
            return Err(DecodeError { path: format!("/starts/{extra}"), message: "no such block".into() });
        }
        Ok(LayoutMap { data_len: doc.data_len, starts, sizes: p.blocks.iter().map(|b| b.len()).collect() })
    }
}

pub fn layout(p: &Program, data_len: usize) -> LayoutMap {
    let sizes: Vec<usize> = p.blocks.iter().map(|b| b.len()).collect();
    let starts = sizes
        .iter()
        .scan(0, |acc, &n| {
            let s = *acc;
            *acc += n;
            Some(s)
        })
        .collect();
    LayoutMap { data_len, starts, sizes }
}

/// Linearized program. Instructions keep their MiniMIR shape; branch, jump and
/// call targets and function-pointer literals are absolute addresses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct McProgram {
    pub code: Vec<Inst>,
    pub layout: LayoutMap,
}

impl McProgram {
    pub fn fetch(&self, a: usize) -> Option<&Inst> {
        a.checked_sub(self.layout.data_len).and_then(|i| self.code.get(i))
    }

    pub fn contains_ctarget(&self) -> bool {
        self.code.contains(&Inst::CTarget)
    }

    pub fn listing(&self) -> String {
        let empty = Program::new(vec![]);
        let e = |e: &Expr| print_expr(&empty, e);
        let mut out = String::new();
        for (k, i) in self.code.iter().enumerate() {
            let text = match i {
                Inst::Branch(c, a) => format!("branch {} {a}", e(c)),
                Inst::Jump(a) => format!("jump {a}"),
                other => crate::textio::print_inst(&empty, other),
            };
            writeln!(out, "{}: {text}", self.layout.data_len + k).unwrap();
        }
        out
    }
}

pub fn linearize(p: &Program, data_len: usize) -> McProgram {
    let lay = layout(p, data_len);
    let fp = |l: Label| Expr::Const(BigUint::from(lay.addr(l)));
    let code = p
        .blocks
        .iter()
        .flat_map(|b| b.insts.iter())
        .map(|i| match i {
            Inst::Branch(e, l) => Inst::Branch(e.map_fp(&fp), lay.addr(*l)),
            Inst::Jump(l) => Inst::Jump(lay.addr(*l)),
            Inst::Asgn(x, e) => Inst::Asgn(x.clone(), e.map_fp(&fp)),
            Inst::Load(x, e) => Inst::Load(x.clone(), e.map_fp(&fp)),
            Inst::Store(a, v) => Inst::Store(a.map_fp(&fp), v.map_fp(&fp)),
            Inst::Call(e) => Inst::Call(e.map_fp(&fp)),
            other => other.clone(),
        })
        .collect();
    McProgram { code, layout: lay }
}

/// Natural-valued register file; unset registers read as 0.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct McRegs(BTreeMap<Reg, BigUint>);

impl McRegs {
    pub fn get(&self, r: &Reg) -> BigUint {
        self.0.get(r).cloned().unwrap_or_default()
    }

    pub fn set(&mut self, r: Reg, v: BigUint) {
        self.0.insert(r, v);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Reg, &BigUint)> {
        self.0.iter()
    }
}

impl FromIterator<(Reg, BigUint)> for McRegs {
    fn from_iter<I: IntoIterator<Item = (Reg, BigUint)>>(iter: I) -> Self {
        McRegs(iter.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct McState {
    pub pc: usize,
    pub regs: McRegs,
    pub mem: Vec<BigUint>,
    pub stk: Vec<usize>,
    pub ct: bool,
    pub ms: bool,
}

impl McState {
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Doc {
            pc: usize,
            regs: BTreeMap<String, NatDoc>,
            mem: Vec<NatDoc>,
            stk: Vec<usize>,
            ct: bool,
            ms: bool,
        }
        serde_json::to_value(Doc {
            pc: self.pc,
            regs: self.regs.iter().map(|(r, v)| (r.to_string(), NatDoc(v.clone()))).collect(),
            mem: self.mem.iter().map(|v| NatDoc(v.clone())).collect(),
            stk: self.stk.clone(),
            ct: self.ct,
            ms: self.ms,
        })
        .expect("serializable")
    }
}

fn eval(e: &Expr, regs: &McRegs) -> Option<BigUint> {
    eval_nat(e, &|r| regs.get(r))
}

fn data_addr(v: Option<BigUint>, data_len: usize) -> Result<usize, StuckReason> {
    let v = v.ok_or(StuckReason::NonNumericAddress)?;
    match v.to_usize() {
        Some(a) if a < data_len => Ok(a),
        _ => Err(StuckReason::AddressOutOfBounds),
    }
}

fn stuck(r: StuckReason) -> Step {
    Step::Halt(Halt::Stuck(r), None)
}

fn step_in_place(mc: &McProgram, cet: CetMode, s: &mut McState, d: Option<&Directive>) -> Step {
    let Some(inst) = mc.fetch(s.pc) else {
        return stuck(StuckReason::PcOutOfRange);
    };
    if s.ct && cet == CetMode::Enforced && *inst != Inst::CTarget {
        return Step::Halt(Halt::Fault, None);
    }
    let data_len = mc.layout.data_len;
    match inst {
        Inst::Skip => {
            s.pc += 1;
            Step::Continue(None)
        }
        Inst::CTarget => {
            s.ct = false;
            s.pc += 1;
            Step::Continue(None)
        }
        Inst::Asgn(x, e) => match eval(e, &s.regs) {
            Some(v) => {
                s.regs.set(x.clone(), v);
                s.pc += 1;
                Step::Continue(None)
            }
            None => stuck(StuckReason::NonNumericAddress),
        },
        Inst::Branch(e, target) => {
            let forced = match d {
                Some(Directive::Branch(b)) => *b,
                Some(_) => return Step::Halt(Halt::DirectiveMismatch, None),
                None => return Step::Halt(Halt::OutOfDirectives, None),
            };
            let Some(c) = eval(e, &s.regs) else {
                return stuck(StuckReason::NonNumericBranch);
            };
            let b = !c.is_zero();
            s.ms |= b != forced;
            s.pc = if forced { *target } else { s.pc + 1 };
            Step::Continue(Some(Observation::Branch(b)))
        }
        Inst::Jump(a) => {
            s.pc = *a;
            Step::Continue(None)
        }
        Inst::Load(x, e) => match data_addr(eval(e, &s.regs), data_len) {
            Ok(a) => {
                let v = s.mem[a].clone();
                s.regs.set(x.clone(), v);
                s.pc += 1;
                Step::Continue(Some(Observation::Load(a)))
            }
            Err(r) => stuck(r),
        },
        Inst::Store(e, v) => {
            let a = match data_addr(eval(e, &s.regs), data_len) {
                Ok(a) => a,
                Err(r) => return stuck(r),
            };
            let Some(v) = eval(v, &s.regs) else {
                return stuck(StuckReason::NonNumericAddress);
            };
            s.mem[a] = v;
            s.pc += 1;
            Step::Continue(Some(Observation::Store(a)))
        }
        Inst::Call(e) => {
            let target = match d {
                Some(Directive::CallMc(a)) => *a,
                Some(_) => return Step::Halt(Halt::DirectiveMismatch, None),
                None => return Step::Halt(Halt::OutOfDirectives, None),
            };
            let v = match eval(e, &s.regs).and_then(|v| v.to_usize()) {
                Some(v) if mc.layout.in_code(v) => v,
                _ => return stuck(StuckReason::CallTargetOutOfCode),
            };
            s.stk.push(s.pc + 1);
            s.pc = target;
            s.ct = cet == CetMode::Enforced;
            s.ms |= target != v;
            Step::Continue(Some(Observation::Call(v)))
        }
        Inst::Ret => match s.stk.pop() {
            Some(a) => {
                s.pc = a;
                Step::Continue(None)
            }
            None => Step::Halt(Halt::Term, None),
        },
    }
}

pub fn step_mc(mc: &McProgram, cet: CetMode, s: &McState, d: Option<&Directive>) -> StepOutcome<McState> {
    pure_step(s, |s| step_in_place(mc, cet, s, d))
}

pub fn run_mc(mc: &McProgram, cet: CetMode, s: McState, ds: &[Directive], fuel: usize) -> Run<McState> {
    run(&McMachine { mc, cet }, s, ds, fuel)
}

pub fn wf_directives_mc(mc: &McProgram, ds: &[Directive]) -> bool {
    ds.iter().all(|d| match d {
        Directive::Branch(_) => true,
        Directive::CallMc(a) => mc.layout.in_code(*a),
        Directive::CallMir(_) => false,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct McMachine<'a> {
    pub mc: &'a McProgram,
    pub cet: CetMode,
}

impl<'a> McMachine<'a> {
    pub fn new(mc: &'a McProgram) -> Self {
        let cet = if mc.contains_ctarget() { CetMode::Enforced } else { CetMode::Disabled };
        McMachine { mc, cet }
    }
}

impl Machine for McMachine<'_> {
    type State = McState;

    fn prediction(&self, s: &McState) -> Option<Prediction> {
        if s.ct && self.cet == CetMode::Enforced {
            return None;
        }
        match self.mc.fetch(s.pc)? {
            Inst::Branch(e, _) => Some(Prediction::Branch { actual: eval(e, &s.regs).map(|c| !c.is_zero()) }),
            Inst::Call(e) => Some(Prediction::Call {
                correct: eval(e, &s.regs)
                    .and_then(|v| v.to_usize())
                    .filter(|v| self.mc.layout.in_code(*v))
                    .map(Directive::CallMc),
            }),
            _ => None,
        }
    }

    fn step(&self, s: &mut McState, d: Option<&Directive>) -> Step {
        step_in_place(self.mc, self.cet, s, d)
    }

    /// Block starts in block order, then the second instruction of every block
    /// longer than one.
    fn call_candidates(&self) -> Vec<Directive> {
        let lay = &self.mc.layout;
        let n = lay.starts.len();
        let starts = (0..n).map(|l| lay.addr(l));
        let mids = (0..n).filter(|&l| lay.sizes[l] > 1).map(|l| lay.addr(l) + 1);
        starts.chain(mids).map(Directive::CallMc).collect()
    }
}
