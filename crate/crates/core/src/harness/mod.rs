//! Random generation, directive exploration, and the executable security and
//! correctness checks built on top of the semantics.

mod cex;
mod checks;
mod exec;
mod explore;
mod fuzz;
mod gen;
mod invariants;

use std::fmt;

use num_traits::Zero;

pub use cex::{replay, Replayed};
pub use checks::{
    attack_search, check_bcc, check_linearize, check_relative_security, check_safety, check_transparency, Concretize,
};
pub use exec::{execute, Execution, Semantics};
pub use explore::{explore, sample_run, ExploreBudget, ExploreStats, ForkPolicy};
pub use fuzz::{fuzz, FuzzConfig, FuzzKind, FuzzReport, MIN_SEQUENCES};
pub use gen::{gen_program, gen_safe_input, gen_seq_equiv_pair, gen_state, rng_for, GenConfig};
pub use invariants::{fuzz_ideal_invariants, IdealInvariantReport};

use crate::interp::{run_seq, CetMode, Observation, Outcome, SpecState};
use crate::ir::{used_registers, wf_program, Program, Value, WfMode};
use crate::minimc::{linearize, McProgram};
use crate::pass::{harden_variant, HardenError, ReservedRegs, Variant};

/// Default step budget for sequential precondition runs.
pub const SEQ_FUEL: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("side condition violated ({hypothesis}): {detail}")]
pub struct SideConditionError {
    pub hypothesis: &'static str,
    pub detail: String,
}

impl SideConditionError {
    pub fn new(hypothesis: &'static str, detail: impl Into<String>) -> Self {
        SideConditionError { hypothesis, detail: detail.into() }
    }
}

pub const WELL_FORMED: &str = "well-formed source program";
pub const RESERVED_UNUSED: &str = "reserved registers unused by the source";
pub const SAFE_INPUT: &str = "safe sequential input";
pub const SEQ_EQUIVALENT: &str = "sequentially observationally equivalent inputs";
pub const VALID_STATE: &str = "well-formed initial state";

/// Which compilation stages run before the program is executed speculatively.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pipeline {
    pub harden: Option<Variant>,
    pub linearize: bool,
}

impl Pipeline {
    pub const SOURCE: Pipeline = Pipeline { harden: None, linearize: false };
    pub const HARDENED: Pipeline = Pipeline { harden: Some(Variant::Full), linearize: false };
    pub const END_TO_END: Pipeline = Pipeline { harden: Some(Variant::Full), linearize: true };

    pub fn hardened(v: Variant) -> Self {
        Pipeline { harden: Some(v), linearize: false }
    }

    pub fn name(&self) -> String {
        let h = match self.harden {
            None => "source".to_string(),
            Some(Variant::Full) => "hardened".to_string(),
            Some(v) => v.name().to_string(),
        };
        if self.linearize {
            format!("{h}+mc")
        } else {
            h
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        let (h, linearize) = match s.strip_suffix("+mc") {
            Some(h) => (h, true),
            None => (s, false),
        };
        let harden = match h {
            "source" => None,
            "hardened" => Some(Variant::Full),
            other => Some(Variant::from_name(other)?),
        };
        Some(Pipeline { harden, linearize })
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// The program after the stages of a pipeline.
#[derive(Clone, Debug)]
pub struct Built {
    pub pipeline: Pipeline,
    pub regs: ReservedRegs,
    pub mir: Program,
    pub mc: Option<McProgram>,
}

impl Built {
    pub fn new(
        p: &Program,
        pipeline: Pipeline,
        regs: &ReservedRegs,
        data_len: usize,
    ) -> Result<Built, SideConditionError> {
        let mir = match pipeline.harden {
            None => {
                // already hardened input is accepted as is
                let mode = if p.contains_ctarget() { WfMode::Hardened } else { WfMode::Source };
                let v = wf_program(p, mode);
                if !v.is_empty() {
                    return Err(SideConditionError::new(WELL_FORMED, v[0].to_string()));
                }
                p.clone()
            }
            Some(variant) => harden_variant(p, regs, variant).map_err(harden_error)?.hardened,
        };
        let mc = pipeline.linearize.then(|| linearize(&mir, data_len));
        Ok(Built { pipeline, regs: regs.clone(), mir, mc })
    }

    pub fn cet(&self) -> CetMode {
        CetMode::for_program(&self.mir)
    }

    /// Initial speculative state for the built program. Hardened programs start
    /// with `msf = 0`, `callee = &0` and a pending ctarget check.
    pub fn initial(&self, s: &SpecState) -> SpecState {
        let mut t = s.clone();
        t.ms = false;
        if self.pipeline.harden.is_some() {
            t.cfg.regs.set(self.regs.msf.clone(), Value::Nat(Zero::zero()));
            t.cfg.regs.set(self.regs.callee.clone(), Value::Fp(0));
            t.ct = true;
        } else {
            t = hardened_defaults(&self.mir, &self.regs, t);
        }
        t
    }
}

/// Initial flags for a program given as is: `ct` is raised iff the program was
/// compiled for CET, and reserved registers the program reads but the state
/// leaves unset get their hardened initial values.
pub fn hardened_defaults(p: &Program, regs: &ReservedRegs, mut s: SpecState) -> SpecState {
    s.ct = p.contains_ctarget();
    let used = used_registers(p);
    for (r, v) in [(&regs.msf, Value::Nat(Zero::zero())), (&regs.callee, Value::Fp(0))] {
        if used.contains(r) && !s.cfg.regs.iter().any(|(x, _)| x == r) {
            s.cfg.regs.set(r.clone(), v);
        }
    }
    s
}

pub(crate) fn harden_error(e: HardenError) -> SideConditionError {
    match e {
        HardenError::NotWellFormed(v) => SideConditionError::new(WELL_FORMED, v[0].to_string()),
        HardenError::CTargetInSource => SideConditionError::new(WELL_FORMED, e.to_string()),
        HardenError::ReservedRegisterUsed(_) | HardenError::ReservedRegistersAlias => {
            SideConditionError::new(RESERVED_UNUSED, e.to_string())
        }
    }
}

/// Checks that every function pointer in the state names an entry block and every
/// code location is valid.
pub fn validate_state(p: &Program, s: &SpecState) -> Result<(), SideConditionError> {
    let err = |d: String| Err(SideConditionError::new(VALID_STATE, d));
    if s.cfg.mem.is_empty() {
        return err("memory is empty".into());
    }
    let fp_ok = |v: &Value| !matches!(v, Value::Fp(l) if !p.is_entry(*l));
    for (r, v) in s.cfg.regs.iter() {
        if !fp_ok(v) {
            return err(format!("register {r} holds {v}, which is not a function entry"));
        }
    }
    for (i, v) in s.cfg.mem.cells().iter().enumerate() {
        if !fp_ok(v) {
            return err(format!("memory cell {i} holds {v}, which is not a function entry"));
        }
    }
    for pc in std::iter::once(&s.cfg.pc).chain(&s.cfg.stk) {
        if !pc.is_valid(p) {
            return err(format!("code location {pc} is outside the program"));
        }
    }
    Ok(())
}

/// Sequential run that must terminate normally.
pub fn require_safe(p: &Program, s: &SpecState, fuel: usize) -> Result<Vec<Observation>, SideConditionError> {
    let r = run_seq(p, s.cfg.clone(), fuel);
    match r.outcome {
        Outcome::Term => Ok(r.trace),
        o => Err(SideConditionError::new(SAFE_INPUT, format!("sequential run ended with {o} after {} steps", r.steps))),
    }
}

pub fn require_seq_equivalent(
    p: &Program,
    s1: &SpecState,
    s2: &SpecState,
    fuel: usize,
) -> Result<(), SideConditionError> {
    let t1 = run_seq(p, s1.cfg.clone(), fuel).trace;
    let t2 = run_seq(p, s2.cfg.clone(), fuel).trace;
    match crate::relate::first_divergence(&t1, &t2) {
        None => Ok(()),
        Some(i) => Err(SideConditionError::new(
            SEQ_EQUIVALENT,
            format!("sequential traces differ at observation {i}: {} vs {}", t1[i], t2[i]),
        )),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckKind {
    Bcc,
    Safety,
    RelativeSecurity,
    Linearize,
    Transparency,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Bcc => "bcc",
            CheckKind::Safety => "safety",
            CheckKind::RelativeSecurity => "rs",
            CheckKind::Linearize => "linearize",
            CheckKind::Transparency => "transparency",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [CheckKind::Bcc, CheckKind::Safety, CheckKind::RelativeSecurity, CheckKind::Linearize, CheckKind::Transparency]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// A concrete input on which a check fails. Carries everything needed to replay it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub check: CheckKind,
    pub pipeline: Pipeline,
    pub regs: ReservedRegs,
    /// Source program, before any pipeline stage.
    pub program: Program,
    pub states: Vec<SpecState>,
    pub directives: Vec<crate::interp::Directive>,
    pub trace1: Vec<Observation>,
    pub trace2: Vec<Observation>,
    pub outcome1: Outcome,
    pub outcome2: Outcome,
    pub fuel: usize,
    pub concretize: Concretize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PassInfo {
    pub runs: usize,
    pub distinct: usize,
    /// The directive tree was enumerated completely within the budget.
    pub complete: bool,
    /// Runs whose own precondition failed and were not judged.
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass(PassInfo),
    Counterexample(Box<Counterexample>),
    Inconclusive(String),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass(_))
    }

    pub fn counterexample(&self) -> Option<&Counterexample> {
        match self {
            Verdict::Counterexample(c) => Some(c),
            _ => None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Pass(_) => 0,
            Verdict::Counterexample(_) => 2,
            Verdict::Inconclusive(_) => 3,
        }
    }
}
