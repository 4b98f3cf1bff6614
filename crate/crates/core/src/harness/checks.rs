//! The executable properties. Each explores directive sequences on the
//! transformed program and compares against a reference run.

use std::ops::ControlFlow;

use num_bigint::BigUint;
use rand::Rng;

use crate::interp::{
    run, run_ideal, run_seq, step_run, Directive, IdealState, Machine, Observation, Outcome, Run, SpecMachine,
    SpecState,
};
use crate::ir::Program;
use crate::minimc::{McMachine, McProgram, McState};
use crate::pass::{ReservedRegs, Variant};
use crate::relate::{lift_state, map_directive_mc_to_mir, map_obs_mir_to_mc, state_rel, trace_cmp};

use super::explore::{explore, ExploreBudget, ExploreStats};
use super::gen::rng_for;
use super::{
    require_safe, require_seq_equivalent, validate_state, Built, CheckKind, Counterexample, PassInfo, Pipeline,
    SideConditionError, Verdict, SEQ_FUEL, VALID_STATE,
};

/// How `UV` cells are given a natural value when a state is lifted to MiniMC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Concretize {
    #[default]
    Zero,
    Random(u64),
}

impl Concretize {
    pub(crate) fn source(self) -> impl FnMut() -> BigUint {
        let mut rng = match self {
            Concretize::Zero => None,
            Concretize::Random(seed) => Some(rng_for(seed, 0)),
        };
        move || match &mut rng {
            None => BigUint::default(),
            Some(r) => BigUint::from(r.gen_range(0u32..64)),
        }
    }
}

pub(crate) fn lift(built: &Built, s: &SpecState, c: Concretize) -> McState {
    let mc = built.mc.as_ref().expect("linearized pipeline");
    lift_state(&built.initial(s), &mc.layout, &mut c.source())
}

fn pass_info(st: &ExploreStats, skipped: usize) -> Verdict {
    Verdict::Pass(PassInfo { runs: st.sequences, distinct: st.distinct, complete: st.complete, skipped })
}

struct CexBuilder<'a> {
    check: CheckKind,
    pipeline: Pipeline,
    regs: &'a ReservedRegs,
    program: &'a Program,
    fuel: usize,
    concretize: Concretize,
}

impl CexBuilder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn make(
        &self,
        states: Vec<SpecState>,
        directives: Vec<Directive>,
        (trace1, outcome1): (Vec<Observation>, Outcome),
        (trace2, outcome2): (Vec<Observation>, Outcome),
        reason: String,
    ) -> Counterexample {
        Counterexample {
            check: self.check,
            pipeline: self.pipeline,
            regs: self.regs.clone(),
            program: self.program.clone(),
            states,
            directives,
            trace1,
            trace2,
            outcome1,
            outcome2,
            fuel: self.fuel,
            concretize: self.concretize,
            reason,
        }
    }
}

/// Hardened speculative run against ideal source run. Under fuel exhaustion the
/// hardened trace only has to be a prefix of the ideal one.
pub(crate) fn bcc_agrees(hardened: &Run<SpecState>, ideal: &Run<IdealState>) -> Result<(), String> {
    if hardened.outcome == Outcome::OutOfFuel {
        if ideal.trace.starts_with(&hardened.trace) {
            return Ok(());
        }
        return Err("hardened trace is not a prefix of the ideal trace".into());
    }
    if hardened.trace != ideal.trace {
        return Err(match crate::relate::first_divergence(&hardened.trace, &ideal.trace) {
            Some(i) => format!("traces differ at observation {i}"),
            None => format!("trace lengths differ: {} vs {}", hardened.trace.len(), ideal.trace.len()),
        });
    }
    if hardened.outcome != ideal.outcome {
        return Err(format!("outcomes differ: {} vs {}", hardened.outcome, ideal.outcome));
    }
    Ok(())
}

pub(crate) fn ideal_initial(s: &SpecState) -> IdealState {
    IdealState { cfg: s.cfg.clone(), ms: false }
}

/// Every speculative run of the hardened program matches the ideal run of the
/// source under the same directives.
pub fn check_bcc(
    p: &Program,
    s0: &SpecState,
    budget: &ExploreBudget,
    variant: Variant,
    regs: &ReservedRegs,
) -> Result<Verdict, SideConditionError> {
    validate_state(p, s0)?;
    let pipeline = Pipeline::hardened(variant);
    let built = Built::new(p, pipeline, regs, 0)?;
    let hm = SpecMachine::new(&built.mir);
    let t0 = built.initial(s0);
    let i0 = ideal_initial(s0);
    let mut found = None;
    let st = explore(&hm, &t0, budget, |ds, r| {
        let ri = run_ideal(p, i0.clone(), ds, budget.fuel);
        match bcc_agrees(r, &ri) {
            Ok(()) => ControlFlow::Continue(()),
            Err(reason) => {
                found = Some((ds.to_vec(), (r.trace.clone(), r.outcome), (ri.trace, ri.outcome), reason));
                ControlFlow::Break(())
            }
        }
    });
    let cb = CexBuilder {
        check: CheckKind::Bcc,
        pipeline,
        regs,
        program: p,
        fuel: budget.fuel,
        concretize: Concretize::Zero,
    };
    Ok(match found {
        Some((ds, a, b, reason)) => Verdict::Counterexample(Box::new(cb.make(vec![s0.clone()], ds, a, b, reason))),
        None => pass_info(&st, 0),
    })
}

/// A safe source input never drives the hardened program into a stuck state.
pub fn check_safety(
    p: &Program,
    s0: &SpecState,
    budget: &ExploreBudget,
    variant: Variant,
    regs: &ReservedRegs,
) -> Result<Verdict, SideConditionError> {
    validate_state(p, s0)?;
    let seq_trace = require_safe(p, s0, SEQ_FUEL.max(budget.fuel))?;
    let pipeline = Pipeline::hardened(variant);
    let built = Built::new(p, pipeline, regs, 0)?;
    let hm = SpecMachine::new(&built.mir);
    let mut found = None;
    let st = explore(&hm, &built.initial(s0), budget, |ds, r| {
        if r.outcome.is_stuck() {
            found = Some((ds.to_vec(), (r.trace.clone(), r.outcome)));
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    let cb = CexBuilder {
        check: CheckKind::Safety,
        pipeline,
        regs,
        program: p,
        fuel: budget.fuel,
        concretize: Concretize::Zero,
    };
    Ok(match found {
        Some((ds, a)) => {
            let reason = format!("hardened run is {}", a.1);
            Verdict::Counterexample(Box::new(cb.make(vec![s0.clone()], ds, a, (seq_trace, Outcome::Term), reason)))
        }
        None => pass_info(&st, 0),
    })
}

type Found<S> = (Vec<Directive>, Run<S>, Run<S>);

/// Explores from `a` replaying on `b`, then the other way round. Runs in a found
/// pair are ordered (from `a`, from `b`).
fn distinguish<M: Machine>(
    m: &M,
    a: &M::State,
    b: &M::State,
    budget: &ExploreBudget,
) -> (ExploreStats, Option<Found<M::State>>) {
    let mut found = None;
    let mut total = ExploreStats { complete: true, ..Default::default() };
    for flip in [false, true] {
        let (x, y) = if flip { (b, a) } else { (a, b) };
        let st = explore(m, x, budget, |ds, rx| {
            let ry = run(m, y.clone(), ds, budget.fuel);
            if trace_cmp(&rx.trace, &ry.trace) {
                return ControlFlow::Continue(());
            }
            found = Some(if flip { (ds.to_vec(), ry, rx.clone()) } else { (ds.to_vec(), rx.clone(), ry) });
            ControlFlow::Break(())
        });
        total.sequences += st.sequences;
        total.distinct += st.distinct;
        total.complete &= st.complete;
        total.stopped |= st.stopped;
        if found.is_some() {
            break;
        }
    }
    (total, found)
}

fn same_shape(s1: &SpecState, s2: &SpecState) -> Result<(), SideConditionError> {
    if s1.cfg.mem.len() != s2.cfg.mem.len() {
        return Err(SideConditionError::new(
            VALID_STATE,
            format!("memory sizes differ: {} vs {}", s1.cfg.mem.len(), s2.cfg.mem.len()),
        ));
    }
    Ok(())
}

fn search(
    p: &Program,
    s1: &SpecState,
    s2: &SpecState,
    budget: &ExploreBudget,
    pipeline: Pipeline,
    regs: &ReservedRegs,
    concretize: Concretize,
) -> Result<(ExploreStats, Option<Counterexample>), SideConditionError> {
    validate_state(p, s1)?;
    validate_state(p, s2)?;
    same_shape(s1, s2)?;
    let built = Built::new(p, pipeline, regs, s1.cfg.mem.len())?;
    let cb =
        CexBuilder { check: CheckKind::RelativeSecurity, pipeline, regs, program: p, fuel: budget.fuel, concretize };
    let states = vec![s1.clone(), s2.clone()];
    let reason = |t1: &[Observation], t2: &[Observation]| {
        let i = crate::relate::first_divergence(t1, t2).unwrap_or(0);
        format!("speculative traces differ at observation {i}: {} vs {}", t1[i], t2[i])
    };
    Ok(match &built.mc {
        None => {
            let m = SpecMachine::new(&built.mir);
            let (st, f) = distinguish(&m, &built.initial(s1), &built.initial(s2), budget);
            (
                st,
                f.map(|(ds, r1, r2)| {
                    let why = reason(&r1.trace, &r2.trace);
                    cb.make(states, ds, (r1.trace, r1.outcome), (r2.trace, r2.outcome), why)
                }),
            )
        }
        Some(mc) => {
            let m = McMachine::new(mc);
            let (st, f) = distinguish(&m, &lift(&built, s1, concretize), &lift(&built, s2, concretize), budget);
            (
                st,
                f.map(|(ds, r1, r2)| {
                    let why = reason(&r1.trace, &r2.trace);
                    cb.make(states, ds, (r1.trace, r1.outcome), (r2.trace, r2.outcome), why)
                }),
            )
        }
    })
}

/// Sequentially equivalent safe inputs stay indistinguishable after the pipeline
/// under every explored directive sequence.
pub fn check_relative_security(
    p: &Program,
    s1: &SpecState,
    s2: &SpecState,
    budget: &ExploreBudget,
    pipeline: Pipeline,
    regs: &ReservedRegs,
    concretize: Concretize,
) -> Result<Verdict, SideConditionError> {
    validate_state(p, s1)?;
    validate_state(p, s2)?;
    let fuel = SEQ_FUEL.max(budget.fuel);
    require_safe(p, s1, fuel)?;
    require_safe(p, s2, fuel)?;
    require_seq_equivalent(p, s1, s2, fuel)?;
    let (st, cex) = search(p, s1, s2, budget, pipeline, regs, concretize)?;
    Ok(match cex {
        Some(c) => Verdict::Counterexample(Box::new(c)),
        None => pass_info(&st, 0),
    })
}

/// Looks for directives that tell `s1` and `s2` apart after the pipeline. No
/// preconditions beyond well-formed states.
pub fn attack_search(
    p: &Program,
    s1: &SpecState,
    s2: &SpecState,
    budget: &ExploreBudget,
    pipeline: Pipeline,
    regs: &ReservedRegs,
) -> Result<(ExploreStats, Option<Counterexample>), SideConditionError> {
    search(p, s1, s2, budget, pipeline, regs, Concretize::Zero)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Lockstep {
    Agree,
    /// The MiniMIR run got stuck, so nothing is claimed.
    MirStuck,
    /// A directive has no MiniMIR counterpart.
    Unmappable,
    Diverge(String),
}

pub(crate) struct LockstepRun {
    pub mir: Run<SpecState>,
    pub mc: Run<McState>,
    pub result: Lockstep,
}

/// Runs MiniMIR and MiniMC side by side, checking the state relation before every
/// step and the mapped observations and outcomes after it.
pub(crate) fn lockstep(
    mir: &Program,
    mc: &McProgram,
    t0: &SpecState,
    m0: &McState,
    mc_ds: &[Directive],
    fuel: usize,
) -> LockstepRun {
    let lay = &mc.layout;
    let (sm, mm) = (SpecMachine::new(mir), McMachine::new(mc));
    let mut a = Run::new(t0.clone());
    let mut b = Run::new(m0.clone());
    let mir_ds: Option<Vec<Directive>> = mc_ds.iter().map(|d| map_directive_mc_to_mir(d, lay)).collect();
    let result = (|| {
        let Some(mir_ds) = mir_ds else {
            return Lockstep::Unmappable;
        };
        loop {
            if !state_rel(&a.state, &b.state, lay, None) {
                return Lockstep::Diverge(format!("states unrelated after {} steps", a.steps));
            }
            if a.steps >= fuel {
                return Lockstep::Agree;
            }
            let (na, nb) = (a.trace.len(), b.trace.len());
            let ca = step_run(&sm, &mut a, &mir_ds);
            if !ca && a.outcome.is_stuck() {
                return Lockstep::MirStuck;
            }
            let cb = step_run(&mm, &mut b, mc_ds);
            let mapped: Vec<Observation> = a.trace[na..].iter().map(|o| map_obs_mir_to_mc(o, lay)).collect();
            if mapped[..] != b.trace[nb..] {
                return Lockstep::Diverge(format!("observations differ at step {}", a.steps));
            }
            if ca != cb || (!ca && a.outcome != b.outcome) {
                let show = |c: bool, o: Outcome| if c { "running".to_string() } else { o.to_string() };
                return Lockstep::Diverge(format!(
                    "outcomes differ at step {}: {} vs {}",
                    a.steps,
                    show(ca, a.outcome),
                    show(cb, b.outcome)
                ));
            }
            if !ca {
                return Lockstep::Agree;
            }
        }
    })();
    LockstepRun { mir: a, mc: b, result }
}

/// Linearization preserves speculative behavior: every explored MiniMC run is
/// simulated step for step by the MiniMIR run under the mapped directives.
pub fn check_linearize(
    p: &Program,
    s0: &SpecState,
    budget: &ExploreBudget,
    harden: Option<Variant>,
    regs: &ReservedRegs,
    concretize: Concretize,
) -> Result<Verdict, SideConditionError> {
    validate_state(p, s0)?;
    let pipeline = Pipeline { harden, linearize: true };
    let built = Built::new(p, pipeline, regs, s0.cfg.mem.len())?;
    let mc = built.mc.as_ref().expect("linearized");
    let mm = McMachine::new(mc);
    let t0 = built.initial(s0);
    let m0 = lift(&built, s0, concretize);
    let mut skipped = 0;
    let mut found = None;
    let st = explore(&mm, &m0, budget, |ds, _| {
        let ls = lockstep(&built.mir, mc, &t0, &m0, ds, budget.fuel);
        match &ls.result {
            Lockstep::Agree => {}
            Lockstep::MirStuck | Lockstep::Unmappable => skipped += 1,
            Lockstep::Diverge(why) => {
                let why = why.clone();
                found = Some((ds.to_vec(), ls, why));
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    });
    let cb = CexBuilder { check: CheckKind::Linearize, pipeline, regs, program: p, fuel: budget.fuel, concretize };
    Ok(match found {
        Some((ds, ls, why)) => Verdict::Counterexample(Box::new(cb.make(
            vec![s0.clone()],
            ds,
            (ls.mir.trace, ls.mir.outcome),
            (ls.mc.trace, ls.mc.outcome),
            why,
        ))),
        None => pass_info(&st, skipped),
    })
}

/// Step bound for the hardened sequential run given `k` source steps.
pub(crate) fn transparency_fuel(k: usize) -> usize {
    4 * k + 2
}

/// Sequential behavior is unchanged by hardening: a source run that terminates in
/// `k` steps has a hardened counterpart with the same trace within `4k + 2` steps.
pub fn check_transparency(
    p: &Program,
    s0: &SpecState,
    fuel: usize,
    regs: &ReservedRegs,
) -> Result<Verdict, SideConditionError> {
    validate_state(p, s0)?;
    let src = run_seq(p, s0.cfg.clone(), fuel);
    if src.outcome != Outcome::Term {
        return Err(SideConditionError::new(super::SAFE_INPUT, format!("sequential run ended with {}", src.outcome)));
    }
    let built = Built::new(p, Pipeline::HARDENED, regs, 0)?;
    let hfuel = transparency_fuel(src.steps);
    let hr = run_seq(&built.mir, built.initial(s0).cfg, hfuel);
    if hr.outcome == Outcome::Term && hr.trace == src.trace {
        return Ok(Verdict::Pass(PassInfo { runs: 1, distinct: 1, complete: true, skipped: 0 }));
    }
    let cb = CexBuilder {
        check: CheckKind::Transparency,
        pipeline: Pipeline::HARDENED,
        regs,
        program: p,
        fuel,
        concretize: Concretize::Zero,
    };
    let reason = format!("hardened sequential run ended with {} after {} of {hfuel} steps", hr.outcome, hr.steps);
    Ok(Verdict::Counterexample(Box::new(cb.make(
        vec![s0.clone()],
        vec![],
        (hr.trace, hr.outcome),
        (src.trace, src.outcome),
        reason,
    ))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{Config, Memory, RegFile};
    use crate::ir::{Pc, Value};
    use crate::textio::parse_program;

    const LISTING: &str = "\
entry calln:
  branch (arg1 <= (len - 1)) l_top
  fun <- &fun_1
  jump l_cont
block l_top:
  fun <- &fun_2
  jump l_cont
block l_cont:
  call fun
  ret
entry fun_1:
  ret
entry fun_2:
  load x, (base + arg1)
  load y, x
  ret
";

    fn state(arg1: u64, secret: u64) -> SpecState {
        let regs: RegFile =
            [("base".into(), Value::nat(1)), ("len".into(), Value::nat(4)), ("arg1".into(), Value::nat(arg1))]
                .into_iter()
                .collect();
        let mem = [0, 3, 5, 1, 0, 0, secret, 0].map(Value::nat).to_vec();
        SpecState::new(Config::new(regs, Memory::new(mem)))
    }

    fn budget() -> ExploreBudget {
        ExploreBudget { depth: 4, fuel: 200, ..Default::default() }
    }

    #[test]
    fn hardened_listing_satisfies_everything() {
        let p = parse_program(LISTING).unwrap();
        let r = ReservedRegs::default();
        for s in [state(5, 2), state(2, 2)] {
            assert!(check_bcc(&p, &s, &budget(), Variant::Full, &r).unwrap().is_pass());
            assert!(check_safety(&p, &s, &budget(), Variant::Full, &r).unwrap().is_pass());
            assert!(check_linearize(&p, &s, &budget(), Some(Variant::Full), &r, Concretize::Zero).unwrap().is_pass());
            assert!(check_linearize(&p, &s, &budget(), None, &r, Concretize::Random(4)).unwrap().is_pass());
            assert!(check_transparency(&p, &s, 100, &r).unwrap().is_pass());
        }
        for pl in [Pipeline::HARDENED, Pipeline::END_TO_END] {
            let v =
                check_relative_security(&p, &state(5, 2), &state(5, 7), &budget(), pl, &r, Concretize::Zero).unwrap();
            assert!(v.is_pass(), "{pl}: {v:?}");
        }
    }

    #[test]
    fn source_and_weak_variants_leak() {
        let p = parse_program(LISTING).unwrap();
        let r = ReservedRegs::default();
        for pl in [Pipeline::SOURCE, Pipeline::hardened(Variant::UslhOnly)] {
            let v =
                check_relative_security(&p, &state(5, 2), &state(5, 7), &budget(), pl, &r, Concretize::Zero).unwrap();
            let c = v.counterexample().unwrap_or_else(|| panic!("{pl} should leak"));
            assert!(!trace_cmp(&c.trace1, &c.trace2));
        }
    }

    #[test]
    fn injected_call_to_block_without_ctarget_faults() {
        let p = parse_program(LISTING).unwrap();
        let r = ReservedRegs::default();
        let built = Built::new(&p, Pipeline::HARDENED, &r, 0).unwrap();
        let l_cont = built.mir.label_of("l_cont").unwrap();
        let ds = [Directive::Branch(false), Directive::CallMir(Pc::new(l_cont, 0))];
        let hr = run(&SpecMachine::new(&built.mir), built.initial(&state(5, 2)), &ds, 100);
        assert_eq!(hr.outcome, Outcome::Fault);
        let fun_1 = built.mir.label_of("fun_1").unwrap();
        assert_eq!(hr.trace, vec![Observation::Branch(false), Observation::Call(fun_1)]);
    }

    #[test]
    fn side_conditions_are_reported() {
        let p = parse_program(LISTING).unwrap();
        let r = ReservedRegs { msf: "fun".into(), callee: "callee".into() };
        let e = check_bcc(&p, &state(5, 2), &budget(), Variant::Full, &r).unwrap_err();
        assert_eq!(e.hypothesis, super::super::RESERVED_UNUSED);
        let e = check_relative_security(
            &p,
            &state(2, 2),
            &state(5, 2),
            &budget(),
            Pipeline::HARDENED,
            &ReservedRegs::default(),
            Concretize::Zero,
        )
        .unwrap_err();
        assert_eq!(e.hypothesis, super::super::SEQ_EQUIVALENT);
    }
}
