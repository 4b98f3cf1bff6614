//! One run of a program under a chosen semantics.

use crate::interp::{
    run, run_seq, CetMode, Directive, IdealMachine, IdealState, Observation, Outcome, SpecMachine, SpecState,
};
use crate::ir::Program;
use crate::minimc::{linearize, McMachine};
use crate::relate::lift_state;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Semantics {
    Seq,
    Spec,
    Ideal,
    /// Speculative MiniMC semantics of the program laid out after its data.
    Mc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Execution {
    pub trace: Vec<Observation>,
    pub outcome: Outcome,
    pub steps: usize,
}

/// Runs `p` from `s` as given: no defaults are applied to the state. `cet`
/// defaults to enforcement iff the program contains a ctarget. For MiniMC, UV
/// cells are lifted as 0.
pub fn execute(
    p: &Program,
    sem: Semantics,
    s: SpecState,
    ds: &[Directive],
    fuel: usize,
    cet: Option<CetMode>,
) -> Result<Execution, String> {
    let cet = cet.unwrap_or_else(|| CetMode::for_program(p));
    let (trace, outcome, steps) = match sem {
        Semantics::Seq => {
            if !ds.is_empty() {
                return Err("sequential runs take no directives".into());
            }
            let r = run_seq(p, s.cfg, fuel);
            (r.trace, r.outcome, r.steps)
        }
        Semantics::Spec => {
            let r = run(&SpecMachine { prog: p, cet }, s, ds, fuel);
            (r.trace, r.outcome, r.steps)
        }
        Semantics::Ideal => {
            let r = run(&IdealMachine { prog: p }, IdealState { cfg: s.cfg, ms: s.ms }, ds, fuel);
            (r.trace, r.outcome, r.steps)
        }
        Semantics::Mc => {
            let mc = linearize(p, s.cfg.mem.len());
            let m0 = lift_state(&s, &mc.layout, &mut Default::default);
            let r = run(&McMachine { mc: &mc, cet }, m0, ds, fuel);
            (r.trace, r.outcome, r.steps)
        }
    };
    Ok(Execution { trace, outcome, steps })
}
