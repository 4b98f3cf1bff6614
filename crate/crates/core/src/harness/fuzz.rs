//! Batch drivers: generate many inputs from a seed and run one check on each.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::pass::{ReservedRegs, Variant};

use super::checks::{
    check_bcc, check_linearize, check_relative_security, check_safety, check_transparency, Concretize,
};
use super::explore::ExploreBudget;
use super::gen::{gen_safe_input, gen_seq_equiv_pair, rng_for, GenConfig};
use super::{Counterexample, Pipeline, SideConditionError, Verdict, SEQ_FUEL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FuzzKind {
    Bcc(Variant),
    Safety(Variant),
    RelativeSecurity(Pipeline),
    /// Linearization of the source, or of its hardening with the given variant.
    Linearize(Option<Variant>),
    Transparency,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuzzConfig {
    pub seed: u64,
    /// Number of judged inputs.
    pub runs: usize,
    pub gen: GenConfig,
    pub budget: ExploreBudget,
    /// Rejection-sampling attempts per input.
    pub attempts: usize,
    pub regs: ReservedRegs,
    pub concretize: Concretize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            seed: 0,
            runs: 100,
            gen: GenConfig::default(),
            budget: ExploreBudget {
                depth: 3,
                max_depth: 256,
                min_distinct: MIN_SEQUENCES,
                max_sequences: 2_000,
                samples: 100,
                fuel: 1_000,
                ..Default::default()
            },
            attempts: 200,
            regs: ReservedRegs::default(),
            concretize: Concretize::Zero,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FuzzReport {
    /// Inputs a verdict was reached on.
    pub programs: usize,
    /// Inputs for which no suitable program and state was generated.
    pub generation_failures: usize,
    pub sequences: usize,
    /// Fewest distinct directive sequences explored for one input.
    pub min_distinct: usize,
    /// Inputs with fewer than 100 distinct sequences whose tree was not exhausted.
    pub thin: usize,
    /// Inputs whose complete directive tree has fewer than 100 sequences.
    pub small_trees: usize,
    /// Inputs redrawn because their directive tree was too small.
    pub resampled: usize,
    /// Runs without a verdict because their own precondition failed.
    pub skipped: usize,
    pub counterexamples: usize,
    pub inconclusive: usize,
    /// Side-condition failures on generated inputs; generation should rule them out.
    pub side_condition_failures: usize,
    /// Lowest-index failing input.
    pub first: Option<(u64, Box<Counterexample>)>,
    pub first_side_condition: Option<SideConditionError>,
}

impl FuzzReport {
    pub fn exit_code(&self) -> i32 {
        if self.counterexamples > 0 {
            2
        } else if self.inconclusive > 0 || self.side_condition_failures > 0 || self.generation_failures > 0 {
            3
        } else {
            0
        }
    }
}

/// Distinct sequences an input must reach unless its tree was exhausted.
pub const MIN_SEQUENCES: usize = 100;

enum One {
    NoInput,
    Judged { verdict: Result<Verdict, SideConditionError>, resampled: usize },
}

/// The whole directive tree of the input was explored and is smaller than
/// `MIN_SEQUENCES`.
fn small_tree(v: &Result<Verdict, SideConditionError>) -> bool {
    matches!(v, Ok(Verdict::Pass(info)) if info.complete && info.distinct < MIN_SEQUENCES)
}

fn draw(
    kind: FuzzKind,
    cfg: &FuzzConfig,
    rng: &mut ChaCha8Rng,
    budget: &ExploreBudget,
) -> Option<Result<Verdict, SideConditionError>> {
    let fuel = SEQ_FUEL.min(cfg.budget.fuel.max(100));
    if let FuzzKind::RelativeSecurity(pl) = kind {
        let (p, s1, s2) = gen_seq_equiv_pair(&cfg.gen, rng, fuel, cfg.attempts)?;
        return Some(check_relative_security(&p, &s1, &s2, budget, pl, &cfg.regs, cfg.concretize));
    }
    let (p, s) = gen_safe_input(&cfg.gen, rng, fuel, cfg.attempts)?;
    Some(match kind {
        FuzzKind::Bcc(v) => check_bcc(&p, &s, budget, v, &cfg.regs),
        FuzzKind::Safety(v) => check_safety(&p, &s, budget, v, &cfg.regs),
        FuzzKind::Linearize(h) => check_linearize(&p, &s, budget, h, &cfg.regs, cfg.concretize),
        FuzzKind::Transparency => check_transparency(&p, &s, fuel, &cfg.regs),
        FuzzKind::RelativeSecurity(_) => unreachable!(),
    })
}

/// Judges input `i`. Inputs whose directive tree is too small to explore
/// `MIN_SEQUENCES` sequences are redrawn, up to `cfg.attempts` times.
fn one(kind: FuzzKind, cfg: &FuzzConfig, i: u64) -> One {
    let mut rng = rng_for(cfg.seed, i);
    let budget = ExploreBudget { seed: cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(i), ..cfg.budget.clone() };
    let resample = kind != FuzzKind::Transparency && cfg.budget.min_distinct >= MIN_SEQUENCES;
    let mut resampled = 0;
    loop {
        let Some(verdict) = draw(kind, cfg, &mut rng, &budget) else {
            return One::NoInput;
        };
        if resample && small_tree(&verdict) && resampled < cfg.attempts {
            resampled += 1;
            continue;
        }
        return One::Judged { verdict, resampled };
    }
}

/// Runs `kind` on `cfg.runs` generated inputs in parallel. The report does not
/// depend on scheduling.
pub fn fuzz(kind: FuzzKind, cfg: &FuzzConfig) -> FuzzReport {
    let results: Vec<One> = (0..cfg.runs as u64).into_par_iter().map(|i| one(kind, cfg, i)).collect();
    let mut rep = FuzzReport { min_distinct: usize::MAX, ..Default::default() };
    for (i, r) in results.into_iter().enumerate() {
        let One::Judged { verdict, resampled } = r else {
            rep.generation_failures += 1;
            continue;
        };
        rep.resampled += resampled;
        match verdict {
            Err(e) => {
                rep.side_condition_failures += 1;
                rep.first_side_condition.get_or_insert(e);
            }
            Ok(v) => {
                rep.programs += 1;
                match v {
                    Verdict::Pass(info) => {
                        rep.sequences += info.runs;
                        rep.skipped += info.skipped;
                        rep.min_distinct = rep.min_distinct.min(info.distinct);
                        if kind != FuzzKind::Transparency && info.distinct < MIN_SEQUENCES {
                            if info.complete {
                                rep.small_trees += 1;
                            } else {
                                rep.thin += 1;
                            }
                        }
                    }
                    Verdict::Counterexample(c) => {
                        rep.counterexamples += 1;
                        if rep.first.is_none() {
                            rep.first = Some((i as u64, c));
                        }
                    }
                    Verdict::Inconclusive(_) => rep.inconclusive += 1,
                }
            }
        }
    }
    if rep.min_distinct == usize::MAX {
        rep.min_distinct = 0;
    }
    rep
}
