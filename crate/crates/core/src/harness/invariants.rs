//! Randomized checks of structural invariants of the ideal and speculative
//! semantics: masking and unwinding under misspeculation, and monotonicity of
//! the misspeculation flag.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::interp::{step_run, IdealMachine, IdealState, Machine, Observation, Run, SpecMachine, SpecState};
use crate::ir::{Pc, Program};
use crate::pass::{harden, ReservedRegs};

use super::explore::{sample_run, ExploreBudget};
use super::gen::{gen_program, gen_state, rng_for, GenConfig};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdealInvariantReport {
    pub trials: usize,
    /// Runs under misspeculation that observed something other than a masked value.
    pub masking: usize,
    /// Pairs of misspeculating states with equal control state but different behavior.
    pub unwinding: usize,
    /// Steps that cleared the misspeculation flag.
    pub monotonicity: usize,
    pub first_failure: Option<String>,
}

fn masked_obs(o: &Observation) -> bool {
    matches!(o, Observation::Load(0) | Observation::Store(0) | Observation::Branch(false) | Observation::Call(0))
}

fn random_pc(p: &Program, rng: &mut impl Rng) -> Pc {
    let l = rng.gen_range(0..p.len());
    Pc::new(l, rng.gen_range(0..p.blocks[l].len()))
}

/// Replays `ds` step by step and counts steps where `ms` goes from set to clear.
fn ms_drops<M: Machine>(
    m: &M,
    s0: M::State,
    ds: &[crate::interp::Directive],
    fuel: usize,
    ms: impl Fn(&M::State) -> bool,
) -> usize {
    let mut r = Run::new(s0);
    let mut drops = 0;
    while r.steps < fuel {
        let before = ms(&r.state);
        if !step_run(m, &mut r, ds) {
            break;
        }
        drops += usize::from(before && !ms(&r.state));
    }
    drops
}

#[derive(Default)]
struct Trial {
    masking: bool,
    unwinding: bool,
    drops: usize,
    note: Option<String>,
}

fn trial(seed: u64, i: u64, cfg: &GenConfig, fuel: usize) -> Trial {
    let mut rng = rng_for(seed, i);
    let p = gen_program(cfg, &mut rng);
    let pc = random_pc(&p, &mut rng);
    let stk: Vec<Pc> = (0..rng.gen_range(0..3)).map(|_| random_pc(&p, &mut rng)).collect();
    let mk = |rng: &mut _| {
        let mut s = gen_state(&p, cfg, rng);
        s.cfg.pc = pc;
        s.cfg.stk = stk.clone();
        s
    };
    let (a, b) = (mk(&mut rng), mk(&mut rng));
    let im = IdealMachine { prog: &p };
    let budget = ExploreBudget { fuel, ..Default::default() };
    let mut t = Trial::default();

    let ia = IdealState { cfg: a.cfg.clone(), ms: true };
    let ib = IdealState { cfg: b.cfg.clone(), ms: true };
    let (ds, ra) = sample_run(&im, &ia, &budget, &mut rng);
    if let Some(o) = ra.trace.iter().find(|o| !masked_obs(o)) {
        t.masking = true;
        t.note.get_or_insert(format!("trial {i}: unmasked observation {o} under misspeculation"));
    }
    let rb = crate::interp::run(&im, ib, &ds, fuel);
    if ra.trace != rb.trace
        || ra.outcome != rb.outcome
        || ra.state.cfg.pc != rb.state.cfg.pc
        || ra.state.cfg.stk != rb.state.cfg.stk
    {
        t.unwinding = true;
        t.note.get_or_insert(format!("trial {i}: misspeculating states with equal control state diverge"));
    }

    // monotonicity, starting architecturally and with a random flag, on the
    // source under the ideal semantics and on the hardened program under the
    // speculative one
    let start = IdealState { cfg: a.cfg.clone(), ms: rng.gen() };
    let (ds, _) = sample_run(&im, &start, &budget, &mut rng);
    t.drops += ms_drops(&im, start, &ds, fuel, |s| s.ms);
    if let Ok(h) = harden(&p, &ReservedRegs::default()) {
        let sm = SpecMachine::new(&h.hardened);
        let mut s = SpecState::new(a.cfg.clone());
        s.ms = rng.gen();
        s.ct = *[false, true].choose(&mut rng).expect("nonempty");
        let (ds, _) = sample_run(&sm, &s, &budget, &mut rng);
        t.drops += ms_drops(&sm, s, &ds, fuel, |s| s.ms);
    }
    if t.drops > 0 {
        t.note.get_or_insert(format!("trial {i}: misspeculation flag cleared"));
    }
    t
}

pub fn fuzz_ideal_invariants(seed: u64, trials: usize, cfg: &GenConfig, fuel: usize) -> IdealInvariantReport {
    let results: Vec<Trial> = (0..trials as u64).into_par_iter().map(|i| trial(seed, i, cfg, fuel)).collect();
    let mut rep = IdealInvariantReport { trials, ..Default::default() };
    for t in results {
        rep.masking += usize::from(t.masking);
        rep.unwinding += usize::from(t.unwinding);
        rep.monotonicity += t.drops;
        if rep.first_failure.is_none() {
            rep.first_failure = t.note;
        }
    }
    rep
}
