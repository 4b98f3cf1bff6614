use num_bigint::BigUint;
use num_traits::Zero;

use super::seq::{exec, load, store, stuck};
use super::spec::{branch_directive, call_directive};
use super::{
    entry_target, eval_expr, mir_call_candidates, pure_step, run, Config, Directive, Halt, Machine, Observation,
    Prediction, Run, Step, StepOutcome, StuckReason,
};
use crate::ir::{fetch, Expr, Inst, Pc, Program, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdealState {
    pub cfg: Config,
    pub ms: bool,
}

impl IdealState {
    pub fn new(cfg: Config) -> Self {
        IdealState { cfg, ms: false }
    }
}

fn masked(s: &IdealState, e: &Expr, mask: Value) -> Value {
    if s.ms {
        mask
    } else {
        eval_expr(e, &s.cfg.regs)
    }
}

fn zero() -> Value {
    Value::Nat(BigUint::zero())
}

fn step_in_place(p: &Program, s: &mut IdealState, d: Option<&Directive>) -> Step {
    let Some(inst) = fetch(p, s.cfg.pc) else {
        return stuck(StuckReason::PcOutOfRange);
    };
    match inst {
        Inst::Branch(e, l) => {
            let forced = match branch_directive(d) {
                Ok(b) => b,
                Err(h) => return Step::Halt(h, None),
            };
            let b = match masked(s, e, zero()) {
                Value::Nat(n) => !n.is_zero(),
                _ => return stuck(StuckReason::NonNumericBranch),
            };
            s.ms |= b != forced;
            s.cfg.pc = if forced { Pc::new(*l, 0) } else { s.cfg.pc.next() };
            Step::Continue(Some(Observation::Branch(b)))
        }
        Inst::Load(x, e) => {
            let a = masked(s, e, zero());
            load(&mut s.cfg, x, &a)
        }
        Inst::Store(e, v) => {
            let a = masked(s, e, zero());
            let v = eval_expr(v, &s.cfg.regs);
            store(&mut s.cfg, &a, v)
        }
        Inst::Call(e) => {
            let target = match call_directive(d) {
                Ok(pc) => pc,
                Err(h) => return Step::Halt(h, None),
            };
            let l = match masked(s, e, Value::Fp(0)) {
                Value::Fp(l) => l,
                _ => return stuck(StuckReason::NonFpCallTarget),
            };
            if target.offset != 0 || !entry_target(p, target.label) {
                return Step::Halt(Halt::Fault, Some(Observation::Call(l)));
            }
            s.cfg.stk.push(s.cfg.pc.next());
            s.cfg.pc = target;
            s.ms |= target.label != l;
            Step::Continue(Some(Observation::Call(l)))
        }
        _ => exec(p, &mut s.cfg, inst),
    }
}

pub fn step_ideal(p: &Program, s: &IdealState, d: Option<&Directive>) -> StepOutcome<IdealState> {
    pure_step(s, |s| step_in_place(p, s, d))
}

pub fn run_ideal(p: &Program, s: IdealState, ds: &[Directive], fuel: usize) -> Run<IdealState> {
    run(&IdealMachine { prog: p }, s, ds, fuel)
}

#[derive(Clone, Copy, Debug)]
pub struct IdealMachine<'p> {
    pub prog: &'p Program,
}

impl Machine for IdealMachine<'_> {
    type State = IdealState;

    fn prediction(&self, s: &IdealState) -> Option<Prediction> {
        match fetch(self.prog, s.cfg.pc)? {
            Inst::Branch(e, _) => {
                Some(Prediction::Branch { actual: masked(s, e, zero()).as_nat().map(|n| !n.is_zero()) })
            }
            Inst::Call(e) => Some(Prediction::Call {
                correct: match masked(s, e, Value::Fp(0)) {
                    Value::Fp(l) => Some(Directive::CallMir(Pc::new(l, 0))),
                    _ => None,
                },
            }),
            _ => None,
        }
    }

    fn step(&self, s: &mut IdealState, d: Option<&Directive>) -> Step {
        step_in_place(self.prog, s, d)
    }

    fn call_candidates(&self) -> Vec<Directive> {
        mir_call_candidates(self.prog)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{Memory, Outcome, RegFile};
    use crate::ir::{BinOp, Block, Reg};

    fn state(ms: bool) -> IdealState {
        let regs: RegFile = [("base", 1u64), ("arg1", 2)].iter().map(|(k, v)| (Reg::new(k), Value::nat(*v))).collect();
        let mem = Memory::new((0..4).map(|i| Value::nat(10 + i)).collect());
        IdealState { cfg: Config::new(regs, mem), ms }
    }

    #[test]
    fn masked_load_reads_address_zero() {
        let addr = Expr::bin(BinOp::Add, Expr::reg("base"), Expr::reg("arg1"));
        let p = Program::new(vec![Block::new(vec![Inst::Load(Reg::new("x"), addr), Inst::Ret], true)]);
        let StepOutcome::Next(n, o) = step_ideal(&p, &state(true), None) else { panic!() };
        assert_eq!(o, Some(Observation::Load(0)));
        assert_eq!(n.cfg.regs.get(&Reg::new("x")), Value::nat(10));
        let StepOutcome::Next(_, o) = step_ideal(&p, &state(false), None) else { panic!() };
        assert_eq!(o, Some(Observation::Load(3)));
    }

    #[test]
    fn masked_branch_observes_false() {
        let p = Program::new(vec![
            Block::new(vec![Inst::Branch(Expr::nat(1), 1), Inst::Ret], true),
            Block::new(vec![Inst::Ret], false),
        ]);
        for forced in [false, true] {
            let StepOutcome::Next(n, o) = step_ideal(&p, &state(true), Some(&Directive::Branch(forced))) else {
                panic!()
            };
            assert_eq!(o, Some(Observation::Branch(false)));
            assert!(n.ms);
        }
    }

    fn call_prog() -> Program {
        Program::new(vec![
            Block::new(vec![Inst::Call(Expr::FpConst(1)), Inst::Ret], true),
            Block::new(vec![Inst::Skip, Inst::Ret], true),
            Block::new(vec![Inst::Ret], true),
            Block::new(vec![Inst::Ret], false),
        ])
    }

    #[test]
    fn call_to_offset_faults_with_observation() {
        let p = call_prog();
        let d = Directive::CallMir(Pc::new(1, 1));
        assert_eq!(step_ideal(&p, &state(false), Some(&d)), StepOutcome::Fault(Some(Observation::Call(1))));
        let d = Directive::CallMir(Pc::new(3, 0));
        assert_eq!(step_ideal(&p, &state(false), Some(&d)), StepOutcome::Fault(Some(Observation::Call(1))));
    }

    #[test]
    fn call_to_other_entry_sets_ms() {
        let p = call_prog();
        let r = run_ideal(&p, state(false), &[Directive::CallMir(Pc::new(2, 0))], 10);
        assert_eq!(r.outcome, Outcome::Term);
        assert_eq!(r.trace, vec![Observation::Call(1)]);
        assert!(r.state.ms);
    }

    #[test]
    fn masked_call_observes_label_zero() {
        let p = call_prog();
        let StepOutcome::Next(n, o) = step_ideal(&p, &state(true), Some(&Directive::CallMir(Pc::new(0, 0)))) else {
            panic!()
        };
        assert_eq!(o, Some(Observation::Call(0)));
        assert_eq!(n.cfg.pc, Pc::new(0, 0));
    }
}
