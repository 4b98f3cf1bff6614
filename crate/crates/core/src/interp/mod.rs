//! Sequential, speculative and ideal semantics for MiniMIR.
//!
//! Every semantics is exposed as a [`Machine`]: a step function over a state plus a
//! description of the prediction point (if any) at the current instruction. The
//! generic [`run`] driver feeds directives to prediction points in order.

mod eval;
mod ideal;
mod seq;
mod spec;

use std::collections::BTreeMap;
use std::fmt;

pub use eval::{apply_binop, eval_expr, eval_nat, nat_binop};
pub use ideal::{run_ideal, step_ideal, IdealMachine, IdealState};
pub use seq::{run_seq, step_seq, SeqMachine};
pub use spec::{run_spec, step_spec, CetMode, SpecMachine, SpecState};

use crate::ir::{Label, Pc, Program, Reg, Value};

/// Total register map; unset registers read as `UV`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegFile(BTreeMap<Reg, Value>);

impl RegFile {
    pub fn get(&self, r: &Reg) -> Value {
        self.0.get(r).cloned().unwrap_or(Value::Uv)
    }

    pub fn set(&mut self, r: Reg, v: Value) {
        self.0.insert(r, v);
    }

    pub fn remove(&mut self, r: &Reg) {
        self.0.remove(r);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Reg, &Value)> {
        self.0.iter()
    }

    pub fn map_values(&self, f: impl Fn(&Value) -> Value) -> RegFile {
        RegFile(self.0.iter().map(|(k, v)| (k.clone(), f(v))).collect())
    }
}

impl FromIterator<(Reg, Value)> for RegFile {
    fn from_iter<I: IntoIterator<Item = (Reg, Value)>>(iter: I) -> Self {
        RegFile(iter.into_iter().collect())
    }
}

/// Fixed-length memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Memory(Vec<Value>);

impl Memory {
    pub fn new(cells: Vec<Value>) -> Self {
        Memory(cells)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Value> {
        self.0.get(i)
    }

    pub fn set(&mut self, i: usize, v: Value) -> bool {
        match self.0.get_mut(i) {
            Some(c) => {
                *c = v;
                true
            }
            None => false,
        }
    }

    pub fn cells(&self) -> &[Value] {
        &self.0
    }
}

/// Architectural part of a MiniMIR state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Config {
    pub pc: Pc,
    pub regs: RegFile,
    pub mem: Memory,
    pub stk: Vec<Pc>,
}

impl Config {
    pub fn new(regs: RegFile, mem: Memory) -> Self {
        Config { pc: Pc::ENTRY, regs, mem, stk: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observation {
    Load(usize),
    Store(usize),
    Branch(bool),
    /// Callee label in MiniMIR, callee address in MiniMC.
    Call(usize),
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observation::Load(a) => write!(f, "load {a}"),
            Observation::Store(a) => write!(f, "store {a}"),
            Observation::Branch(b) => write!(f, "branch {b}"),
            Observation::Call(l) => write!(f, "call {l}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Directive {
    Branch(bool),
    CallMir(Pc),
    CallMc(usize),
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::Branch(b) => write!(f, "branch {b}"),
            Directive::CallMir(pc) => write!(f, "call {pc}"),
            Directive::CallMc(a) => write!(f, "call @{a}"),
        }
    }
}

/// Undefined-behavior class of a stuck state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StuckReason {
    PcOutOfRange,
    NonNumericBranch,
    NonNumericAddress,
    AddressOutOfBounds,
    NonFpCallTarget,
    NoSuchEntry,
    CallTargetOutOfCode,
}

impl StuckReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StuckReason::PcOutOfRange => "pc-out-of-range",
            StuckReason::NonNumericBranch => "non-numeric-branch-condition",
            StuckReason::NonNumericAddress => "non-numeric-address",
            StuckReason::AddressOutOfBounds => "address-out-of-bounds",
            StuckReason::NonFpCallTarget => "non-fp-call-target",
            StuckReason::NoSuchEntry => "call-to-non-entry",
            StuckReason::CallTargetOutOfCode => "call-target-outside-code",
        }
    }
}

impl fmt::Display for StuckReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a single step did not produce a successor state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Halt {
    Term,
    Fault,
    Stuck(StuckReason),
    OutOfDirectives,
    DirectiveMismatch,
}

/// Result of an in-place step. On `Halt` the state is left untouched; `obs` is the
/// observation emitted by the halting step itself (only a faulting ideal call has one).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Continue(Option<Observation>),
    Halt(Halt, Option<Observation>),
}

/// Result of a pure step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome<S> {
    Next(S, Option<Observation>),
    Term,
    Fault(Option<Observation>),
    Stuck(StuckReason),
    OutOfDirectives,
    DirectiveMismatch,
}

pub(crate) fn pure_step<S: Clone>(s: &S, f: impl FnOnce(&mut S) -> Step) -> StepOutcome<S> {
    let mut next = s.clone();
    match f(&mut next) {
        Step::Continue(o) => StepOutcome::Next(next, o),
        Step::Halt(Halt::Term, _) => StepOutcome::Term,
        Step::Halt(Halt::Fault, o) => StepOutcome::Fault(o),
        Step::Halt(Halt::Stuck(r), _) => StepOutcome::Stuck(r),
        Step::Halt(Halt::OutOfDirectives, _) => StepOutcome::OutOfDirectives,
        Step::Halt(Halt::DirectiveMismatch, _) => StepOutcome::DirectiveMismatch,
    }
}

/// Final status of a multi-step run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Term,
    Fault,
    Stuck(StuckReason),
    OutOfDirectives,
    DirectiveMismatch,
    OutOfFuel,
}

impl Outcome {
    pub fn is_stuck(self) -> bool {
        matches!(self, Outcome::Stuck(_))
    }

    /// Term, Fault, Stuck and OutOfDirectives end a run for good; fuel exhaustion
    /// only cuts it short.
    pub fn is_final(self) -> bool {
        !matches!(self, Outcome::OutOfFuel)
    }
}

impl From<Halt> for Outcome {
    fn from(h: Halt) -> Self {
        match h {
            Halt::Term => Outcome::Term,
            Halt::Fault => Outcome::Fault,
            Halt::Stuck(r) => Outcome::Stuck(r),
            Halt::OutOfDirectives => Outcome::OutOfDirectives,
            Halt::DirectiveMismatch => Outcome::DirectiveMismatch,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Term => f.write_str("term"),
            Outcome::Fault => f.write_str("fault"),
            Outcome::Stuck(r) => write!(f, "stuck:{r}"),
            Outcome::OutOfDirectives => f.write_str("out-of-directives"),
            Outcome::DirectiveMismatch => f.write_str("directive-mismatch"),
            Outcome::OutOfFuel => f.write_str("fuel"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Run<S> {
    pub trace: Vec<Observation>,
    pub outcome: Outcome,
    /// Last reached state; for halting outcomes, the state in which the halting
    /// instruction was fetched.
    pub state: S,
    pub steps: usize,
    pub directives_used: usize,
}

/// What the attacker may choose at the current instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Prediction {
    /// `actual` is the architectural outcome, if the condition is numeric.
    Branch { actual: Option<bool> },
    /// `correct` is the directive that follows the architectural target, if defined.
    Call { correct: Option<Directive> },
}

impl Prediction {
    pub fn correct_directive(&self) -> Option<Directive> {
        match self {
            Prediction::Branch { actual } => actual.map(Directive::Branch),
            Prediction::Call { correct } => *correct,
        }
    }
}

pub trait Machine {
    type State: Clone;

    /// Prediction point at the current instruction, or `None` if the next step
    /// consumes no directive.
    fn prediction(&self, s: &Self::State) -> Option<Prediction>;

    fn step(&self, s: &mut Self::State, d: Option<&Directive>) -> Step;

    /// Call directives the attacker may inject, in exploration order.
    fn call_candidates(&self) -> Vec<Directive>;
}

impl<S> Run<S> {
    pub fn new(state: S) -> Self {
        Run { trace: Vec::new(), outcome: Outcome::OutOfFuel, state, steps: 0, directives_used: 0 }
    }
}

/// Runs `m` from `s` for at most `fuel` steps, consuming `directives` in order at
/// prediction points.
pub fn run<M: Machine>(m: &M, s: M::State, directives: &[Directive], fuel: usize) -> Run<M::State> {
    let mut r = Run::new(s);
    resume(m, &mut r, directives, fuel);
    r
}

/// Continues a run in place until it halts or has taken `fuel` steps in total.
pub fn resume<M: Machine>(m: &M, r: &mut Run<M::State>, directives: &[Directive], fuel: usize) {
    r.outcome = Outcome::OutOfFuel;
    while r.steps < fuel && step_run(m, r, directives) {}
}

/// One step, taking the next unused directive from `directives` if the current
/// instruction is a prediction point. Returns false once the run has halted.
pub fn step_run<M: Machine>(m: &M, r: &mut Run<M::State>, directives: &[Directive]) -> bool {
    let d = match m.prediction(&r.state) {
        Some(_) => match directives.get(r.directives_used) {
            Some(d) => Some(d),
            None => {
                r.outcome = Outcome::OutOfDirectives;
                return false;
            }
        },
        None => None,
    };
    step_run_with(m, r, d)
}

/// One step with an explicitly chosen directive, which counts as consumed.
pub fn step_run_with<M: Machine>(m: &M, r: &mut Run<M::State>, d: Option<&Directive>) -> bool {
    r.steps += 1;
    if d.is_some() {
        r.directives_used += 1;
    }
    match m.step(&mut r.state, d) {
        Step::Continue(o) => {
            r.trace.extend(o);
            true
        }
        Step::Halt(h, o) => {
            r.trace.extend(o);
            r.outcome = h.into();
            false
        }
    }
}

/// Directive list whose call targets are all valid MiniMIR locations.
pub fn wf_directives_mir(p: &Program, ds: &[Directive]) -> bool {
    ds.iter().all(|d| match d {
        Directive::Branch(_) => true,
        Directive::CallMir(pc) => pc.is_valid(p),
        Directive::CallMc(_) => false,
    })
}

/// Default call-injection candidates: every block start (entries first), then one
/// mid-block location for each block longer than one instruction.
pub fn mir_call_candidates(p: &Program) -> Vec<Directive> {
    let n = p.len();
    let entries = (0..n).filter(|&l| p.is_entry(l));
    let others = (0..n).filter(|&l| !p.is_entry(l));
    let mids = (0..n).filter(|&l| p.blocks[l].len() > 1).map(|l| Pc::new(l, 1));
    entries.chain(others).map(|l| Pc::new(l, 0)).chain(mids).map(Directive::CallMir).collect()
}

pub(crate) fn entry_target(p: &Program, l: Label) -> bool {
    p.block(l).is_some_and(|b| b.is_entry && !b.is_empty())
}
