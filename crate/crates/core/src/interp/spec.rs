use num_traits::Zero;

use super::seq::{exec, stuck};
use super::{
    eval_expr, mir_call_candidates, pure_step, run, Config, Directive, Halt, Machine, Observation, Prediction, Run,
    Step, StepOutcome, StuckReason,
};
use crate::ir::{fetch, Inst, Pc, Program, Value};

/// Whether indirect calls must land on a `ctarget`. Hardware without CET never
/// raises `ct`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CetMode {
    Enforced,
    Disabled,
}

impl CetMode {
    /// Enforced iff the program was compiled for CET, i.e. contains a `ctarget`.
    pub fn for_program(p: &Program) -> Self {
        if p.contains_ctarget() {
            CetMode::Enforced
        } else {
            CetMode::Disabled
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecState {
    pub cfg: Config,
    pub ct: bool,
    pub ms: bool,
}

impl SpecState {
    pub fn new(cfg: Config) -> Self {
        SpecState { cfg, ct: false, ms: false }
    }
}

pub(super) fn branch_directive(d: Option<&Directive>) -> Result<bool, Halt> {
    match d {
        Some(Directive::Branch(b)) => Ok(*b),
        Some(_) => Err(Halt::DirectiveMismatch),
        None => Err(Halt::OutOfDirectives),
    }
}

pub(super) fn call_directive(d: Option<&Directive>) -> Result<Pc, Halt> {
    match d {
        Some(Directive::CallMir(pc)) => Ok(*pc),
        Some(_) => Err(Halt::DirectiveMismatch),
        None => Err(Halt::OutOfDirectives),
    }
}

fn step_in_place(p: &Program, cet: CetMode, s: &mut SpecState, d: Option<&Directive>) -> Step {
    let Some(inst) = fetch(p, s.cfg.pc) else {
        return stuck(StuckReason::PcOutOfRange);
    };
    if s.ct && cet == CetMode::Enforced && *inst != Inst::CTarget {
        return Step::Halt(Halt::Fault, None);
    }
    match inst {
        Inst::CTarget => {
            s.ct = false;
            s.cfg.pc = s.cfg.pc.next();
            Step::Continue(None)
        }
        Inst::Branch(e, l) => {
            let forced = match branch_directive(d) {
                Ok(b) => b,
                Err(h) => return Step::Halt(h, None),
            };
            let b = match eval_expr(e, &s.cfg.regs) {
                Value::Nat(n) => !n.is_zero(),
                _ => return stuck(StuckReason::NonNumericBranch),
            };
            s.ms |= b != forced;
            s.cfg.pc = if forced { Pc::new(*l, 0) } else { s.cfg.pc.next() };
            Step::Continue(Some(Observation::Branch(b)))
        }
        Inst::Call(e) => {
            let target = match call_directive(d) {
                Ok(pc) => pc,
                Err(h) => return Step::Halt(h, None),
            };
            let l = match eval_expr(e, &s.cfg.regs) {
                Value::Fp(l) => l,
                _ => return stuck(StuckReason::NonFpCallTarget),
            };
            s.cfg.stk.push(s.cfg.pc.next());
            s.cfg.pc = target;
            s.ct = cet == CetMode::Enforced;
            s.ms |= target != Pc::new(l, 0);
            Step::Continue(Some(Observation::Call(l)))
        }
        _ => exec(p, &mut s.cfg, inst),
    }
}

pub fn step_spec(p: &Program, cet: CetMode, s: &SpecState, d: Option<&Directive>) -> StepOutcome<SpecState> {
    pure_step(s, |s| step_in_place(p, cet, s, d))
}

pub fn run_spec(p: &Program, cet: CetMode, s: SpecState, ds: &[Directive], fuel: usize) -> Run<SpecState> {
    run(&SpecMachine { prog: p, cet }, s, ds, fuel)
}

#[derive(Clone, Copy, Debug)]
pub struct SpecMachine<'p> {
    pub prog: &'p Program,
    pub cet: CetMode,
}

impl<'p> SpecMachine<'p> {
    pub fn new(prog: &'p Program) -> Self {
        SpecMachine { prog, cet: CetMode::for_program(prog) }
    }
}

impl Machine for SpecMachine<'_> {
    type State = SpecState;

    fn prediction(&self, s: &SpecState) -> Option<Prediction> {
        if s.ct && self.cet == CetMode::Enforced {
            return None;
        }
        match fetch(self.prog, s.cfg.pc)? {
            Inst::Branch(e, _) => {
                Some(Prediction::Branch { actual: eval_expr(e, &s.cfg.regs).as_nat().map(|n| !n.is_zero()) })
            }
            Inst::Call(e) => Some(Prediction::Call {
                correct: match eval_expr(e, &s.cfg.regs) {
                    Value::Fp(l) => Some(Directive::CallMir(Pc::new(l, 0))),
                    _ => None,
                },
            }),
            _ => None,
        }
    }

    fn step(&self, s: &mut SpecState, d: Option<&Directive>) -> Step {
        step_in_place(self.prog, self.cet, s, d)
    }

    fn call_candidates(&self) -> Vec<Directive> {
        mir_call_candidates(self.prog)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{Memory, Outcome, RegFile};
    use crate::ir::{BinOp, Block, Expr, Reg};

    fn state(regs: &[(&str, Value)]) -> SpecState {
        SpecState::new(Config::new(
            regs.iter().map(|(k, v)| (Reg::new(k), v.clone())).collect::<RegFile>(),
            Memory::new(vec![Value::nat(0); 4]),
        ))
    }

    #[test]
    fn forced_branch_sets_misspeculation() {
        let cond = Expr::bin(BinOp::Le, Expr::reg("x"), Expr::nat(4));
        let p = Program::new(vec![
            Block::new(vec![Inst::Branch(cond, 1), Inst::Ret], true),
            Block::new(vec![Inst::Ret], false),
        ]);
        let s = state(&[("x", Value::nat(7))]);
        match step_spec(&p, CetMode::Disabled, &s, Some(&Directive::Branch(true))) {
            StepOutcome::Next(n, o) => {
                assert_eq!(o, Some(Observation::Branch(false)));
                assert_eq!(n.cfg.pc, Pc::new(1, 0));
                assert!(n.ms);
            }
            o => panic!("{o:?}"),
        }
    }

    fn call_prog() -> Program {
        Program::new(vec![
            Block::new(vec![Inst::CTarget, Inst::Call(Expr::FpConst(1)), Inst::Ret], true),
            Block::new(vec![Inst::CTarget, Inst::Skip, Inst::Ret], true),
        ])
    }

    #[test]
    fn mid_block_landing_faults_next_step() {
        let p = call_prog();
        let mut s = state(&[]);
        s.cfg.pc = Pc::new(0, 1);
        let StepOutcome::Next(n, _) = step_spec(&p, CetMode::Enforced, &s, Some(&Directive::CallMir(Pc::new(1, 1))))
        else {
            panic!()
        };
        assert!(n.ct && n.ms);
        assert_eq!(step_spec(&p, CetMode::Enforced, &n, None), StepOutcome::Fault(None));
    }

    #[test]
    fn ctarget_clears_flag() {
        let p = call_prog();
        let mut s = state(&[]);
        s.ct = true;
        let StepOutcome::Next(n, None) = step_spec(&p, CetMode::Enforced, &s, None) else { panic!() };
        assert!(!n.ct);
        assert_eq!(n.cfg.pc, Pc::new(0, 1));
    }

    #[test]
    fn disabled_cet_lets_mid_block_landing_run() {
        let p = call_prog();
        let mut s = state(&[]);
        s.cfg.pc = Pc::new(0, 1);
        let r = run_spec(&p, CetMode::Disabled, s, &[Directive::CallMir(Pc::new(1, 1))], 100);
        assert_eq!(r.outcome, Outcome::Term);
        assert!(r.state.ms);
    }

    #[test]
    fn missing_directive_stops_run() {
        let p = call_prog();
        let r = run_spec(&p, CetMode::Enforced, state(&[]), &[], 100);
        assert_eq!(r.outcome, Outcome::OutOfDirectives);
        assert_eq!(r.state.cfg.pc, Pc::new(0, 1));
        assert!(r.trace.is_empty());
    }

    #[test]
    fn wrong_directive_kind_is_a_mismatch() {
        let p = call_prog();
        let mut s = state(&[]);
        s.cfg.pc = Pc::new(0, 1);
        assert_eq!(
            step_spec(&p, CetMode::Enforced, &s, Some(&Directive::Branch(true))),
            StepOutcome::DirectiveMismatch
        );
    }

    #[test]
    fn correct_call_keeps_ms_clear() {
        let p = call_prog();
        let r = run_spec(&p, CetMode::Enforced, state(&[]), &[Directive::CallMir(Pc::new(1, 0))], 100);
        assert_eq!(r.outcome, Outcome::Term);
        assert_eq!(r.trace, vec![Observation::Call(1)]);
        assert!(!r.state.ms);
    }
}
