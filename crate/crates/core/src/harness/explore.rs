//! Enumeration of directive sequences: a depth-bounded DFS over attacker choices,
//! followed by optional random sampling that is not depth bounded.

use std::collections::HashSet;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::interp::{step_run_with, Directive, Machine, Outcome, Prediction, Run};

use super::gen::rng_for;

/// Which prediction points the attacker controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ForkPolicy {
    /// Conditional branches only.
    Pht,
    /// Indirect calls only.
    Btb,
    All,
}

impl ForkPolicy {
    pub fn forks(self, p: &Prediction) -> bool {
        matches!(
            (self, p),
            (ForkPolicy::All, _)
                | (ForkPolicy::Pht, Prediction::Branch { .. })
                | (ForkPolicy::Btb, Prediction::Call { .. })
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ForkPolicy::Pht => "pht",
            ForkPolicy::Btb => "btb",
            ForkPolicy::All => "all",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [ForkPolicy::Pht, ForkPolicy::Btb, ForkPolicy::All].into_iter().find(|p| p.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExploreBudget {
    /// Controlled prediction points that fork in the DFS. Later ones follow the
    /// architectural prediction.
    pub depth: usize,
    /// The DFS is repeated with doubled depth, up to this one, while it has found
    /// fewer than `min_distinct` sequences and was cut short only by depth.
    pub max_depth: usize,
    pub min_distinct: usize,
    /// Cap on DFS leaves.
    pub max_sequences: usize,
    /// Random sequences drawn after the DFS.
    pub samples: usize,
    /// Step budget of each run.
    pub fuel: usize,
    pub seed: u64,
    pub policy: ForkPolicy,
    /// Overrides the machine's call candidates.
    pub call_targets: Option<Vec<Directive>>,
}

impl Default for ExploreBudget {
    fn default() -> Self {
        ExploreBudget {
            depth: 6,
            max_depth: 6,
            min_distinct: 0,
            max_sequences: 100_000,
            samples: 0,
            fuel: 2_000,
            seed: 0,
            policy: ForkPolicy::All,
            call_targets: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExploreStats {
    /// Runs handed to the visitor.
    pub sequences: usize,
    /// Distinct directive sequences among them.
    pub distinct: usize,
    /// Every controlled prediction point of every run was forked and the DFS was
    /// neither capped nor stopped.
    pub complete: bool,
    pub stopped: bool,
}

fn default_directive(p: &Prediction, candidates: &[Directive]) -> Directive {
    p.correct_directive().unwrap_or_else(|| match p {
        Prediction::Branch { .. } => Directive::Branch(false),
        Prediction::Call { .. } => candidates.first().copied().unwrap_or(Directive::CallMc(0)),
    })
}

struct Explorer<'a, M: Machine, F> {
    m: &'a M,
    budget: &'a ExploreBudget,
    candidates: Vec<Directive>,
    visit: F,
    seen: Option<HashSet<Vec<Directive>>>,
    stats: ExploreStats,
    truncated: bool,
    capped: bool,
    depth: usize,
}

impl<M, F> Explorer<'_, M, F>
where
    M: Machine,
    F: FnMut(&[Directive], &Run<M::State>) -> ControlFlow<()>,
{
    fn choices(&self, p: &Prediction) -> Vec<Directive> {
        match p {
            Prediction::Branch { .. } => vec![Directive::Branch(false), Directive::Branch(true)],
            Prediction::Call { correct } => {
                let mut v: Vec<Directive> = correct.iter().copied().collect();
                v.extend(self.candidates.iter().filter(|d| Some(**d) != *correct));
                v
            }
        }
    }

    /// Directive used where the attacker does not choose. Where the architectural
    /// outcome is undefined the step gets stuck whatever is supplied.
    fn default_directive(&self, p: &Prediction) -> Directive {
        default_directive(p, &self.candidates)
    }

    fn leaf(&mut self, ds: &[Directive], r: &Run<M::State>) {
        if let Some(seen) = &mut self.seen {
            if !seen.insert(ds.to_vec()) {
                return;
            }
        }
        self.stats.sequences += 1;
        self.stats.distinct += 1;
        if (self.visit)(ds, r).is_break() {
            self.stats.stopped = true;
        }
    }

    fn dfs(&mut self, mut r: Run<M::State>, mut ds: Vec<Directive>, forks: usize) {
        loop {
            if self.stats.stopped {
                return;
            }
            if r.steps >= self.budget.fuel {
                r.outcome = Outcome::OutOfFuel;
                return self.leaf(&ds, &r);
            }
            let d = match self.m.prediction(&r.state) {
                None => None,
                Some(p) if self.budget.policy.forks(&p) && forks < self.depth => {
                    for c in self.choices(&p) {
                        if self.stats.stopped {
                            return;
                        }
                        if self.stats.sequences >= self.budget.max_sequences {
                            self.capped = true;
                            return;
                        }
                        let mut r2 = r.clone();
                        let mut ds2 = ds.clone();
                        ds2.push(c);
                        if step_run_with(self.m, &mut r2, Some(&c)) {
                            self.dfs(r2, ds2, forks + 1);
                        } else {
                            self.leaf(&ds2, &r2);
                        }
                    }
                    return;
                }
                Some(p) => {
                    if self.budget.policy.forks(&p) {
                        self.truncated = true;
                    }
                    Some(self.default_directive(&p))
                }
            };
            ds.extend(d);
            if !step_run_with(self.m, &mut r, d.as_ref()) {
                return self.leaf(&ds, &r);
            }
        }
    }
}

/// Explores directive sequences from `s0`. The visitor sees each directive list
/// with the run it produces; `run(m, s0, ds, fuel)` reproduces that run.
pub fn explore<M, F>(m: &M, s0: &M::State, budget: &ExploreBudget, visit: F) -> ExploreStats
where
    M: Machine,
    F: FnMut(&[Directive], &Run<M::State>) -> ControlFlow<()>,
{
    let candidates = budget.call_targets.clone().unwrap_or_else(|| m.call_candidates());
    let deepen = budget.max_depth > budget.depth && budget.min_distinct > 0;
    let mut ex = Explorer {
        m,
        budget,
        candidates,
        visit,
        seen: (budget.samples > 0 || deepen).then(HashSet::new),
        stats: ExploreStats::default(),
        truncated: false,
        capped: false,
        depth: budget.depth,
    };
    loop {
        ex.truncated = false;
        ex.dfs(Run::new(s0.clone()), Vec::new(), 0);
        let more = ex.truncated && !ex.capped && !ex.stats.stopped && ex.stats.distinct < budget.min_distinct;
        if !more || ex.depth >= budget.max_depth {
            break;
        }
        ex.depth = (ex.depth * 2).clamp(ex.depth + 1, budget.max_depth);
    }
    let complete = !ex.truncated && !ex.capped && !ex.stats.stopped;
    let mut rng = rng_for(budget.seed, u64::MAX);
    for _ in 0..budget.samples {
        if ex.stats.stopped {
            break;
        }
        let (ds, r) = sample_with(m, s0, &ex.candidates, budget, &mut rng);
        ex.leaf(&ds, &r);
    }
    ExploreStats { complete, ..ex.stats }
}

fn sample_with<M: Machine>(
    m: &M,
    s0: &M::State,
    candidates: &[Directive],
    budget: &ExploreBudget,
    rng: &mut impl Rng,
) -> (Vec<Directive>, Run<M::State>) {
    let mut r = Run::new(s0.clone());
    let mut ds = Vec::new();
    while r.steps < budget.fuel {
        let d = m.prediction(&r.state).map(|p| {
            if !budget.policy.forks(&p) {
                return default_directive(&p, candidates);
            }
            match &p {
                Prediction::Branch { .. } => Directive::Branch(rng.gen()),
                // the architectural target stays as likely as a misprediction
                Prediction::Call { correct } => match correct {
                    Some(c) if rng.gen_bool(0.5) => *c,
                    _ => candidates.choose(rng).copied().unwrap_or_else(|| default_directive(&p, candidates)),
                },
            }
        });
        ds.extend(d);
        if !step_run_with(m, &mut r, d.as_ref()) {
            return (ds, r);
        }
    }
    r.outcome = Outcome::OutOfFuel;
    (ds, r)
}

/// One random directive sequence and its run.
pub fn sample_run<M: Machine>(
    m: &M,
    s0: &M::State,
    budget: &ExploreBudget,
    rng: &mut impl Rng,
) -> (Vec<Directive>, Run<M::State>) {
    let candidates = budget.call_targets.clone().unwrap_or_else(|| m.call_candidates());
    sample_with(m, s0, &candidates, budget, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{run, Config, Memory, RegFile, SpecMachine, SpecState};
    use crate::ir::Value;
    use crate::textio::parse_program;

    fn state() -> SpecState {
        let regs: RegFile = [("c".into(), Value::nat(0))].into_iter().collect();
        SpecState::new(Config::new(regs, Memory::new(vec![Value::nat(0); 4])))
    }

    fn collect(src: &str, budget: &ExploreBudget) -> (Vec<Vec<Directive>>, ExploreStats) {
        let p = parse_program(src).unwrap();
        let m = SpecMachine::new(&p);
        let mut out = Vec::new();
        let st = explore(&m, &state(), budget, |ds, r| {
            assert_eq!(run(&m, state(), ds, budget.fuel), *r);
            out.push(ds.to_vec());
            ControlFlow::Continue(())
        });
        (out, st)
    }

    const ONE_BRANCH: &str = "entry m:\n  branch c l\n  ret\nblock l:\n  load x, 1\n  ret\n";

    #[test]
    fn one_branch_two_sequences() {
        let (seqs, st) = collect(ONE_BRANCH, &ExploreBudget::default());
        assert_eq!(seqs, vec![vec![Directive::Branch(false)], vec![Directive::Branch(true)]]);
        assert!(st.complete);
        assert_eq!(st.distinct, 2);
    }

    #[test]
    fn depth_zero_is_the_architectural_run() {
        let b = ExploreBudget { depth: 0, ..Default::default() };
        let (seqs, st) = collect(ONE_BRANCH, &b);
        assert_eq!(seqs, vec![vec![Directive::Branch(false)]]);
        assert!(!st.complete);
    }

    #[test]
    fn policy_filters_forks() {
        let b = ExploreBudget { policy: ForkPolicy::Btb, ..Default::default() };
        let (seqs, _) = collect(ONE_BRANCH, &b);
        assert_eq!(seqs.len(), 1);
    }

    #[test]
    fn calls_try_the_architectural_target_first() {
        let src = "entry m:\n  call &f\n  ret\nentry f:\n  ret\nblock g:\n  ret\n";
        let (seqs, _) = collect(src, &ExploreBudget { depth: 1, ..Default::default() });
        assert_eq!(seqs[0], vec![Directive::CallMir(crate::ir::Pc::new(1, 0))]);
        // f, then m, g and the mid-block location of m
        assert_eq!(seqs.len(), 4);
    }

    #[test]
    fn cap_and_stop() {
        let src = "entry m:\n  branch c a\n  jump a\nblock a:\n  branch c b\n  jump b\nblock b:\n  branch c d\n  ret\nblock d:\n  ret\n";
        let (seqs, st) = collect(src, &ExploreBudget { max_sequences: 3, ..Default::default() });
        assert_eq!(seqs.len(), 3);
        assert!(!st.complete);
        let p = parse_program(src).unwrap();
        let m = SpecMachine::new(&p);
        let mut n = 0;
        let st = explore(&m, &state(), &ExploreBudget::default(), |_, _| {
            n += 1;
            ControlFlow::Break(())
        });
        assert_eq!(n, 1);
        assert!(st.stopped && !st.complete);
    }

    #[test]
    fn deepening_revisits_nothing() {
        let src = "entry m:\n  jump l\nblock l:\n  branch c l\n  jump l\n";
        let b = ExploreBudget { depth: 2, max_depth: 10, min_distinct: 30, fuel: 40, ..Default::default() };
        let (seqs, st) = collect(src, &b);
        // depths 2, 4, 8; a shallow leaf is the deep leaf that follows the
        // architectural predictions, so only the 256 leaves of depth 8 remain
        assert_eq!(st.distinct, 256);
        let unique: HashSet<_> = seqs.iter().collect();
        assert_eq!(unique.len(), seqs.len());
    }

    #[test]
    fn samples_are_deduplicated_and_seeded() {
        let b = ExploreBudget { depth: 0, samples: 50, seed: 7, ..Default::default() };
        let (seqs, st) = collect(ONE_BRANCH, &b);
        assert_eq!(seqs.len(), 2);
        assert_eq!(st.distinct, 2);
        let (again, _) = collect(ONE_BRANCH, &b);
        assert_eq!(seqs, again);
    }

    #[test]
    fn out_of_fuel_leaves() {
        let src = "entry m:\n  jump l\nblock l:\n  branch c l\n  jump l\n";
        let b = ExploreBudget { depth: 3, fuel: 20, ..Default::default() };
        let p = parse_program(src).unwrap();
        let m = SpecMachine::new(&p);
        let mut outcomes = Vec::new();
        explore(&m, &state(), &b, |_, r| {
            outcomes.push(r.outcome);
            ControlFlow::Continue(())
        });
        assert_eq!(outcomes.len(), 8);
        assert!(outcomes.iter().all(|o| *o == Outcome::OutOfFuel));
    }
}
