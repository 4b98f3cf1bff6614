//! Trace agreement, register agreement, and the value relation that connects
//! MiniMIR states to their linearized MiniMC counterparts.

use num_bigint::BigUint;

use crate::interp::{Directive, Observation, RegFile, SpecState};
use crate::ir::{Pc, Reg, Value};
use crate::minimc::{LayoutMap, McRegs, McState};
use crate::pass::ReservedRegs;

/// `a` is a prefix of `b` or `b` a prefix of `a`.
pub fn trace_cmp(a: &[Observation], b: &[Observation]) -> bool {
    a.iter().zip(b).all(|(x, y)| x == y)
}

/// Index of the first position where the traces disagree, if they do.
pub fn first_divergence(a: &[Observation], b: &[Observation]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| x != y)
}

/// Agreement on every register except the reserved ones.
pub fn regs_agree(a: &RegFile, b: &RegFile, reserved: &ReservedRegs) -> bool {
    let skip = |r: &Reg| *r == reserved.msf || *r == reserved.callee;
    let names = a.iter().map(|(r, _)| r).chain(b.iter().map(|(r, _)| r));
    names.filter(|r| !skip(r)).all(|r| a.get(r) == b.get(r))
}

pub fn value_rel(v: &Value, n: &BigUint, lay: &LayoutMap) -> bool {
    match v {
        Value::Nat(m) => m == n,
        Value::Fp(l) => *l < lay.starts.len() && BigUint::from(lay.addr(*l)) == *n,
        Value::Uv => true,
    }
}

/// The related natural of a value; `uv` picks one for undefined values.
pub fn lift_value(v: &Value, lay: &LayoutMap, uv: &mut impl FnMut() -> BigUint) -> BigUint {
    match v {
        Value::Nat(n) => n.clone(),
        Value::Fp(l) => BigUint::from(lay.addr(*l)),
        Value::Uv => uv(),
    }
}

pub fn lift_state(s: &SpecState, lay: &LayoutMap, uv: &mut impl FnMut() -> BigUint) -> McState {
    McState {
        pc: lay.pc_addr(s.cfg.pc),
        regs: s.cfg.regs.iter().map(|(r, v)| (r.clone(), lift_value(v, lay, uv))).collect::<McRegs>(),
        mem: s.cfg.mem.cells().iter().map(|v| lift_value(v, lay, uv)).collect(),
        stk: s.cfg.stk.iter().map(|pc| lay.pc_addr(*pc)).collect(),
        ct: s.ct,
        ms: s.ms,
    }
}

fn pc_rel(pc: Pc, a: usize, lay: &LayoutMap) -> bool {
    lay.locate(a) == Some(pc)
}

/// Pointwise relation of pc, registers, memory and stack, plus equal flags.
/// With `exclude`, the reserved registers are not compared.
pub fn state_rel(s: &SpecState, t: &McState, lay: &LayoutMap, exclude: Option<&ReservedRegs>) -> bool {
    let skip = |r: &Reg| exclude.is_some_and(|x| *r == x.msf || *r == x.callee);
    let regs_ok = s.cfg.regs.iter().filter(|(r, _)| !skip(r)).all(|(r, v)| value_rel(v, &t.regs.get(r), lay))
        && t.regs.iter().filter(|(r, _)| !skip(r)).all(|(r, n)| value_rel(&s.cfg.regs.get(r), n, lay));
    regs_ok
        && s.ct == t.ct
        && s.ms == t.ms
        && pc_rel(s.cfg.pc, t.pc, lay)
        && s.cfg.mem.len() == t.mem.len()
        && s.cfg.mem.cells().iter().zip(&t.mem).all(|(v, n)| value_rel(v, n, lay))
        && s.cfg.stk.len() == t.stk.len()
        && s.cfg.stk.iter().zip(&t.stk).all(|(pc, a)| pc_rel(*pc, *a, lay))
}

pub fn map_directive_mc_to_mir(d: &Directive, lay: &LayoutMap) -> Option<Directive> {
    match d {
        Directive::Branch(b) => Some(Directive::Branch(*b)),
        Directive::CallMc(a) => lay.locate(*a).map(Directive::CallMir),
        Directive::CallMir(_) => None,
    }
}

pub fn map_directive_mir_to_mc(d: &Directive, lay: &LayoutMap) -> Option<Directive> {
    match d {
        Directive::Branch(b) => Some(Directive::Branch(*b)),
        Directive::CallMir(pc) if pc.label < lay.sizes.len() && pc.offset < lay.sizes[pc.label] => {
            Some(Directive::CallMc(lay.pc_addr(*pc)))
        }
        _ => None,
    }
}

pub fn map_obs_mir_to_mc(o: &Observation, lay: &LayoutMap) -> Observation {
    match o {
        Observation::Call(l) => Observation::Call(lay.addr(*l)),
        other => *other,
    }
}
