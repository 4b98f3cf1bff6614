//! Counterexample files and their replay.

use serde_json::{json, Value as Json};

use crate::interp::{run, run_ideal, run_seq, Directive, Observation, Outcome, SpecMachine, StuckReason};
use crate::minimc::McMachine;
use crate::pass::ReservedRegs;
use crate::relate::trace_cmp;
use crate::textio::{
    decode_directives, decode_state, decode_trace, directives_to_json, parse_program, print_program, state_to_json,
    trace_to_json, DecodeError,
};

use super::checks::{bcc_agrees, ideal_initial, lift, lockstep, transparency_fuel, Concretize, Lockstep};
use super::{Built, CheckKind, Counterexample, Pipeline, SideConditionError};

const STUCK_REASONS: [StuckReason; 7] = [
    StuckReason::PcOutOfRange,
    StuckReason::NonNumericBranch,
    StuckReason::NonNumericAddress,
    StuckReason::AddressOutOfBounds,
    StuckReason::NonFpCallTarget,
    StuckReason::NoSuchEntry,
    StuckReason::CallTargetOutOfCode,
];

pub fn parse_outcome(s: &str) -> Option<Outcome> {
    Some(match s {
        "term" => Outcome::Term,
        "fault" => Outcome::Fault,
        "out-of-directives" => Outcome::OutOfDirectives,
        "directive-mismatch" => Outcome::DirectiveMismatch,
        "fuel" => Outcome::OutOfFuel,
        _ => {
            let r = s.strip_prefix("stuck:")?;
            Outcome::Stuck(STUCK_REASONS.into_iter().find(|x| x.as_str() == r)?)
        }
    })
}

impl Counterexample {
    pub fn to_json(&self) -> Json {
        json!({
            "check": self.check.name(),
            "pipeline": self.pipeline.name(),
            "regs": { "msf": self.regs.msf.as_str(), "callee": self.regs.callee.as_str() },
            "program": print_program(&self.program),
            "states": self.states.iter().map(state_to_json).collect::<Vec<_>>(),
            "directives": directives_to_json(&self.directives),
            "trace1": trace_to_json(&self.trace1),
            "trace2": trace_to_json(&self.trace2),
            "outcome1": self.outcome1.to_string(),
            "outcome2": self.outcome2.to_string(),
            "fuel": self.fuel,
            "concretize": match self.concretize {
                Concretize::Zero => json!("zero"),
                Concretize::Random(s) => json!({ "random": s }),
            },
            "reason": self.reason,
        })
    }

    pub fn from_json(text: &str) -> Result<Counterexample, DecodeError> {
        let v: Json = serde_json::from_str(text).map_err(|e| err("", e.to_string()))?;
        let field = |k: &str| v.get(k).ok_or_else(|| err(&format!("/{k}"), "missing field".into()));
        let string = |k: &str| -> Result<String, DecodeError> {
            field(k)?.as_str().map(str::to_string).ok_or_else(|| err(&format!("/{k}"), "expected a string".into()))
        };
        let check = CheckKind::from_name(&string("check")?).ok_or_else(|| err("/check", "unknown check".into()))?;
        let pipeline =
            Pipeline::from_name(&string("pipeline")?).ok_or_else(|| err("/pipeline", "unknown pipeline".into()))?;
        let regs = match v.get("regs") {
            None => ReservedRegs::default(),
            Some(r) => {
                let name = |k: &str| {
                    r.get(k)
                        .and_then(Json::as_str)
                        .ok_or_else(|| err(&format!("/regs/{k}"), "expected a string".into()))
                };
                ReservedRegs { msf: name("msf")?.into(), callee: name("callee")?.into() }
            }
        };
        let program = parse_program(&string("program")?).map_err(|es| err("/program", es[0].to_string()))?;
        let states = field("states")?
            .as_array()
            .ok_or_else(|| err("/states", "expected an array".into()))?
            .iter()
            .enumerate()
            .map(|(i, s)| {
                decode_state(&s.to_string()).map_err(|e| DecodeError { path: format!("/states/{i}{}", e.path), ..e })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let nested = |k: &str, e: DecodeError| DecodeError { path: format!("/{k}{}", e.path), ..e };
        let directives = decode_directives(&field("directives")?.to_string()).map_err(|e| nested("directives", e))?;
        let trace = |k: &str| decode_trace(&field(k)?.to_string()).map_err(|e| nested(k, e));
        let outcome = |k: &str| -> Result<Outcome, DecodeError> {
            parse_outcome(&string(k)?).ok_or_else(|| err(&format!("/{k}"), "unknown outcome".into()))
        };
        let fuel = field("fuel")?.as_u64().ok_or_else(|| err("/fuel", "expected a number".into()))? as usize;
        let concretize = match v.get("concretize") {
            None => Concretize::Zero,
            Some(Json::String(s)) if s == "zero" => Concretize::Zero,
            Some(c) => Concretize::Random(
                c.get("random")
                    .and_then(Json::as_u64)
                    .ok_or_else(|| err("/concretize", "expected \"zero\" or {\"random\": seed}".into()))?,
            ),
        };
        Ok(Counterexample {
            check,
            pipeline,
            regs,
            program,
            states,
            directives,
            trace1: trace("trace1")?,
            trace2: trace("trace2")?,
            outcome1: outcome("outcome1")?,
            outcome2: outcome("outcome2")?,
            fuel,
            concretize,
            reason: v.get("reason").and_then(Json::as_str).unwrap_or_default().to_string(),
        })
    }
}

fn err(path: &str, message: String) -> DecodeError {
    DecodeError { path: path.to_string(), message }
}

/// What re-executing a counterexample produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replayed {
    pub trace1: Vec<Observation>,
    pub trace2: Vec<Observation>,
    pub outcome1: Outcome,
    pub outcome2: Outcome,
    /// The property fails on this input.
    pub violated: bool,
    pub reason: String,
}

impl Replayed {
    /// Replay reproduced exactly what the counterexample recorded.
    pub fn matches(&self, c: &Counterexample) -> bool {
        self.violated
            && self.trace1 == c.trace1
            && self.trace2 == c.trace2
            && self.outcome1 == c.outcome1
            && self.outcome2 == c.outcome2
    }
}

fn state(c: &Counterexample, i: usize) -> Result<&crate::interp::SpecState, SideConditionError> {
    c.states
        .get(i)
        .ok_or_else(|| SideConditionError::new(super::VALID_STATE, format!("counterexample needs {} state(s)", i + 1)))
}

/// Re-executes the directive list of `c` without any exploration.
pub fn replay(c: &Counterexample) -> Result<Replayed, SideConditionError> {
    let ds: &[Directive] = &c.directives;
    let s0 = state(c, 0)?;
    let data_len = s0.cfg.mem.len();
    let built = Built::new(&c.program, c.pipeline, &c.regs, data_len)?;
    let r = match c.check {
        CheckKind::Bcc => {
            let hr = run(&SpecMachine::new(&built.mir), built.initial(s0), ds, c.fuel);
            let ir = run_ideal(&c.program, ideal_initial(s0), ds, c.fuel);
            let res = bcc_agrees(&hr, &ir);
            Replayed {
                violated: res.is_err(),
                reason: res.err().unwrap_or_default(),
                trace1: hr.trace,
                trace2: ir.trace,
                outcome1: hr.outcome,
                outcome2: ir.outcome,
            }
        }
        CheckKind::Safety => {
            let hr = run(&SpecMachine::new(&built.mir), built.initial(s0), ds, c.fuel);
            let sr = run_seq(&c.program, s0.cfg.clone(), super::SEQ_FUEL.max(c.fuel));
            Replayed {
                violated: hr.outcome.is_stuck() && sr.outcome == Outcome::Term,
                reason: format!("hardened run is {}", hr.outcome),
                trace1: hr.trace,
                trace2: sr.trace,
                outcome1: hr.outcome,
                outcome2: sr.outcome,
            }
        }
        CheckKind::RelativeSecurity => {
            let s1 = state(c, 1)?;
            let (a, b) = match &built.mc {
                None => {
                    let m = SpecMachine::new(&built.mir);
                    let a = run(&m, built.initial(s0), ds, c.fuel);
                    let b = run(&m, built.initial(s1), ds, c.fuel);
                    ((a.trace, a.outcome), (b.trace, b.outcome))
                }
                Some(mc) => {
                    let m = McMachine::new(mc);
                    let a = run(&m, lift(&built, s0, c.concretize), ds, c.fuel);
                    let b = run(&m, lift(&built, s1, c.concretize), ds, c.fuel);
                    ((a.trace, a.outcome), (b.trace, b.outcome))
                }
            };
            Replayed {
                violated: !trace_cmp(&a.0, &b.0),
                reason: match crate::relate::first_divergence(&a.0, &b.0) {
                    Some(i) => format!("speculative traces differ at observation {i}"),
                    None => String::new(),
                },
                trace1: a.0,
                trace2: b.0,
                outcome1: a.1,
                outcome2: b.1,
            }
        }
        CheckKind::Linearize => {
            let mc = built.mc.as_ref().ok_or_else(|| {
                SideConditionError::new(super::WELL_FORMED, "linearize counterexample without a linearized pipeline")
            })?;
            let ls = lockstep(&built.mir, mc, &built.initial(s0), &lift(&built, s0, c.concretize), ds, c.fuel);
            let (violated, reason) = match ls.result {
                Lockstep::Diverge(why) => (true, why),
                other => (false, format!("{other:?}")),
            };
            Replayed {
                violated,
                reason,
                trace1: ls.mir.trace,
                trace2: ls.mc.trace,
                outcome1: ls.mir.outcome,
                outcome2: ls.mc.outcome,
            }
        }
        CheckKind::Transparency => {
            let src = run_seq(&c.program, s0.cfg.clone(), c.fuel);
            let hr = run_seq(&built.mir, built.initial(s0).cfg, transparency_fuel(src.steps));
            Replayed {
                violated: src.outcome == Outcome::Term && (hr.outcome != Outcome::Term || hr.trace != src.trace),
                reason: format!("hardened sequential run ended with {}", hr.outcome),
                trace1: hr.trace,
                trace2: src.trace,
                outcome1: hr.outcome,
                outcome2: src.outcome,
            }
        }
    };
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcomes_round_trip_through_text() {
        let mut all = vec![
            Outcome::Term,
            Outcome::Fault,
            Outcome::OutOfDirectives,
            Outcome::DirectiveMismatch,
            Outcome::OutOfFuel,
        ];
        all.extend(STUCK_REASONS.map(Outcome::Stuck));
        for o in all {
            assert_eq!(parse_outcome(&o.to_string()), Some(o));
        }
        assert_eq!(parse_outcome("stuck:nope"), None);
    }
}
