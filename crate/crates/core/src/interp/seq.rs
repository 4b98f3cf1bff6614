use num_traits::{ToPrimitive, Zero};

use super::{
    entry_target, eval_expr, pure_step, run, Config, Directive, Halt, Machine, Memory, Prediction, Run, Step,
    StepOutcome, StuckReason,
};
use crate::interp::Observation;
use crate::ir::{fetch, Inst, Pc, Program, Reg, Value};

pub(super) fn stuck(r: StuckReason) -> Step {
    Step::Halt(Halt::Stuck(r), None)
}

pub(super) fn address(v: &Value, mem: &Memory) -> Result<usize, StuckReason> {
    let n = v.as_nat().ok_or(StuckReason::NonNumericAddress)?;
    match n.to_usize() {
        Some(a) if a < mem.len() => Ok(a),
        _ => Err(StuckReason::AddressOutOfBounds),
    }
}

pub(super) fn load(c: &mut Config, x: &Reg, addr: &Value) -> Step {
    match address(addr, &c.mem) {
        Ok(a) => {
            let v = c.mem.get(a).cloned().unwrap_or_default();
            c.regs.set(x.clone(), v);
            c.pc = c.pc.next();
            Step::Continue(Some(Observation::Load(a)))
        }
        Err(r) => stuck(r),
    }
}

pub(super) fn store(c: &mut Config, addr: &Value, v: Value) -> Step {
    match address(addr, &c.mem) {
        Ok(a) => {
            c.mem.set(a, v);
            c.pc = c.pc.next();
            Step::Continue(Some(Observation::Store(a)))
        }
        Err(r) => stuck(r),
    }
}

/// Executes `inst` (fetched at `c.pc`) under the sequential rules.
pub(super) fn exec(p: &Program, c: &mut Config, inst: &Inst) -> Step {
    match inst {
        Inst::Skip | Inst::CTarget => {
            c.pc = c.pc.next();
            Step::Continue(None)
        }
        Inst::Asgn(x, e) => {
            let v = eval_expr(e, &c.regs);
            c.regs.set(x.clone(), v);
            c.pc = c.pc.next();
            Step::Continue(None)
        }
        Inst::Branch(e, l) => match eval_expr(e, &c.regs) {
            Value::Nat(n) => {
                let b = !n.is_zero();
                c.pc = if b { Pc::new(*l, 0) } else { c.pc.next() };
                Step::Continue(Some(Observation::Branch(b)))
            }
            _ => stuck(StuckReason::NonNumericBranch),
        },
        Inst::Jump(l) => {
            c.pc = Pc::new(*l, 0);
            Step::Continue(None)
        }
        Inst::Load(x, e) => {
            let a = eval_expr(e, &c.regs);
            load(c, x, &a)
        }
        Inst::Store(e, v) => {
            let a = eval_expr(e, &c.regs);
            let v = eval_expr(v, &c.regs);
            store(c, &a, v)
        }
        Inst::Call(e) => match eval_expr(e, &c.regs) {
            Value::Fp(l) if entry_target(p, l) => {
                c.stk.push(c.pc.next());
                c.pc = Pc::new(l, 0);
                Step::Continue(Some(Observation::Call(l)))
            }
            Value::Fp(_) => stuck(StuckReason::NoSuchEntry),
            _ => stuck(StuckReason::NonFpCallTarget),
        },
        Inst::Ret => ret(c),
    }
}

pub(super) fn ret(c: &mut Config) -> Step {
    match c.stk.pop() {
        Some(pc) => {
            c.pc = pc;
            Step::Continue(None)
        }
        None => Step::Halt(Halt::Term, None),
    }
}

fn step_in_place(p: &Program, c: &mut Config) -> Step {
    match fetch(p, c.pc) {
        Some(inst) => exec(p, c, inst),
        None => stuck(StuckReason::PcOutOfRange),
    }
}

pub fn step_seq(p: &Program, c: &Config) -> StepOutcome<Config> {
    pure_step(c, |c| step_in_place(p, c))
}

pub fn run_seq(p: &Program, c: Config, fuel: usize) -> Run<Config> {
    run(&SeqMachine { prog: p }, c, &[], fuel)
}

#[derive(Clone, Copy, Debug)]
pub struct SeqMachine<'p> {
    pub prog: &'p Program,
}

impl Machine for SeqMachine<'_> {
    type State = Config;

    fn prediction(&self, _: &Config) -> Option<Prediction> {
        None
    }

    fn step(&self, c: &mut Config, _: Option<&Directive>) -> Step {
        step_in_place(self.prog, c)
    }

    fn call_candidates(&self) -> Vec<Directive> {
        Vec::new()
    }
}
