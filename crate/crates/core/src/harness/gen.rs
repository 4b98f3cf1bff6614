//! Random well-formed programs and initial states.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::interp::{run_seq, Config, Memory, Observation, Outcome, RegFile, SpecState};
use crate::ir::{BinOp, Block, Expr, Inst, Label, Program, Reg, Value};

/// Independent stream `index` of the generator seeded with `seed`.
pub fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub blocks: RangeInclusive<usize>,
    /// Non-terminator instructions per block.
    pub insts: RangeInclusive<usize>,
    pub regs: usize,
    pub mem_len: usize,
    pub max_const: u64,
    pub expr_depth: usize,
    /// Probability that a block other than the first is a function entry.
    pub entry_fraction: f64,
    /// Probability that a jump or branch goes backwards.
    pub back_edge_prob: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            blocks: 3..=8,
            insts: 1..=5,
            regs: 4,
            mem_len: 8,
            max_const: 8,
            expr_depth: 2,
            entry_fraction: 0.3,
            back_edge_prob: 0.05,
        }
    }
}

impl GenConfig {
    pub fn reg(&self, i: usize) -> Reg {
        Reg::new(&format!("r{i}"))
    }
}

struct Shape {
    entry: Vec<bool>,
}

impl Shape {
    fn forward(&self, l: Label, entry: bool) -> Vec<Label> {
        (l + 1..self.entry.len()).filter(|&k| self.entry[k] == entry).collect()
    }

    fn non_entries(&self) -> Vec<Label> {
        (0..self.entry.len()).filter(|&k| !self.entry[k]).collect()
    }
}

struct Gen<'a, R> {
    cfg: &'a GenConfig,
    rng: &'a mut R,
}

impl<R: Rng> Gen<'_, R> {
    fn reg(&mut self) -> Reg {
        let i = self.rng.gen_range(0..self.cfg.regs.max(1));
        self.cfg.reg(i)
    }

    fn konst(&mut self) -> Expr {
        Expr::nat(self.rng.gen_range(0..=self.cfg.max_const))
    }

    fn expr(&mut self, depth: usize) -> Expr {
        if depth == 0 || self.rng.gen_bool(0.5) {
            return if self.rng.gen_bool(0.4) { self.konst() } else { Expr::Reg(self.reg()) };
        }
        match self.rng.gen_range(0..10) {
            0 => Expr::cond(self.cond(depth - 1), self.expr(depth - 1), self.expr(depth - 1)),
            1 => Expr::bin(BinOp::Mul, self.expr(depth - 1), Expr::nat(self.rng.gen_range(0..=3))),
            k => {
                let op =
                    [BinOp::Add, BinOp::Add, BinOp::Sub, BinOp::Sub, BinOp::Eq, BinOp::Le, BinOp::And, BinOp::Implies]
                        [k - 2];
                Expr::bin(op, self.expr(depth - 1), self.expr(depth - 1))
            }
        }
    }

    fn cond(&mut self, depth: usize) -> Expr {
        match self.rng.gen_range(0..4) {
            0 => Expr::Reg(self.reg()),
            1 => Expr::bin(BinOp::Eq, self.expr(depth), self.expr(depth)),
            _ => Expr::bin(BinOp::Le, self.expr(depth), self.expr(depth)),
        }
    }

    /// Addresses lean towards the valid range so that most inputs are safe.
    fn addr(&mut self) -> Expr {
        let n = self.cfg.mem_len.max(1) as u64;
        match self.rng.gen_range(0..10) {
            0..=3 => Expr::nat(self.rng.gen_range(0..n)),
            4..=6 => Expr::Reg(self.reg()),
            7 | 8 => Expr::bin(BinOp::Add, Expr::Reg(self.reg()), Expr::nat(self.rng.gen_range(0..=2))),
            _ => {
                let e = self.expr(self.cfg.expr_depth);
                Expr::cond(Expr::bin(BinOp::Le, e.clone(), Expr::nat(n - 1)), e, Expr::nat(0))
            }
        }
    }

    fn jump_target(&mut self, shape: &Shape, l: Label) -> Option<Label> {
        let back = shape.non_entries();
        if !back.is_empty() && self.rng.gen_bool(self.cfg.back_edge_prob) {
            return back.choose(self.rng).copied();
        }
        shape.forward(l, false).choose(self.rng).copied()
    }

    fn call(&mut self, shape: &Shape, l: Label, out: &mut Vec<Inst>) {
        let targets = shape.forward(l, true);
        let Some(&f) = targets.choose(self.rng) else {
            return;
        };
        match self.rng.gen_range(0..10) {
            0..=4 => out.push(Inst::Call(Expr::FpConst(f))),
            5..=7 => {
                let r = self.reg();
                out.push(Inst::Asgn(r.clone(), Expr::FpConst(f)));
                out.push(Inst::Call(Expr::Reg(r)));
            }
            _ => {
                let g = *targets.choose(self.rng).expect("nonempty");
                let c = self.cond(1);
                out.push(Inst::Call(Expr::cond(c, Expr::FpConst(f), Expr::FpConst(g))));
            }
        }
    }

    fn inst(&mut self, shape: &Shape, l: Label, out: &mut Vec<Inst>) {
        let d = self.cfg.expr_depth;
        match self.rng.gen_range(0..14) {
            0..=3 => {
                let (r, e) = (self.reg(), self.expr(d));
                out.push(Inst::Asgn(r, e));
            }
            4..=6 => {
                let (r, a) = (self.reg(), self.addr());
                out.push(Inst::Load(r, a));
            }
            7 | 8 => {
                let (a, v) = (self.addr(), self.expr(d));
                out.push(Inst::Store(a, v));
            }
            9 | 10 => {
                if let Some(t) = self.jump_target(shape, l) {
                    let c = self.cond(d);
                    out.push(Inst::Branch(c, t));
                }
            }
            11 | 12 => self.call(shape, l, out),
            _ => out.push(Inst::Skip),
        }
    }

    fn program(&mut self) -> Program {
        let n = self.rng.gen_range(self.cfg.blocks.clone()).max(1);
        let entry: Vec<bool> = (0..n).map(|l| l == 0 || self.rng.gen_bool(self.cfg.entry_fraction)).collect();
        let shape = Shape { entry };
        let mut blocks = Vec::with_capacity(n);
        for l in 0..n {
            let mut insts = Vec::new();
            for _ in 0..self.rng.gen_range(self.cfg.insts.clone()) {
                self.inst(&shape, l, &mut insts);
            }
            let jump = if self.rng.gen_bool(0.5) { self.jump_target(&shape, l) } else { None };
            insts.push(jump.map_or(Inst::Ret, Inst::Jump));
            blocks.push(Block::new(insts, shape.entry[l]));
        }
        let names = (0..n).map(|l| format!("{}{l}", if shape.entry[l] { "f" } else { "l" })).collect();
        Program::with_names(blocks, names)
    }

    fn value(&mut self, p: &Program, uv_prob: f64) -> Value {
        let x: f64 = self.rng.gen();
        if x < uv_prob {
            Value::Uv
        } else if x < uv_prob + 0.12 {
            Value::Fp(*p.entry_labels().choose(self.rng).expect("block 0 is an entry"))
        } else if x < 0.9 {
            Value::nat(self.rng.gen_range(0..self.cfg.mem_len.max(1) as u64))
        } else {
            Value::nat(self.rng.gen_range(0..=self.cfg.max_const * 4))
        }
    }

    fn state(&mut self, p: &Program) -> SpecState {
        let regs: RegFile = (0..self.cfg.regs).map(|i| (self.cfg.reg(i), self.value(p, 0.0))).collect();
        let mem = (0..self.cfg.mem_len.max(1)).map(|_| self.value(p, 0.08)).collect();
        SpecState::new(Config::new(regs, Memory::new(mem)))
    }
}

/// A source program that is well formed by construction.
pub fn gen_program(cfg: &GenConfig, rng: &mut impl Rng) -> Program {
    Gen { cfg, rng }.program()
}

/// Initial state at the entry of block 0. Function pointers name entry blocks;
/// `UV` only appears in memory.
pub fn gen_state(p: &Program, cfg: &GenConfig, rng: &mut impl Rng) -> SpecState {
    Gen { cfg, rng }.state(p)
}

/// Rejection-samples a program and state whose sequential run terminates within `fuel`.
pub fn gen_safe_input(
    cfg: &GenConfig,
    rng: &mut impl Rng,
    fuel: usize,
    attempts: usize,
) -> Option<(Program, SpecState)> {
    for _ in 0..attempts {
        let p = gen_program(cfg, rng);
        for _ in 0..4 {
            let s = gen_state(&p, cfg, rng);
            if run_seq(&p, s.cfg.clone(), fuel).outcome == Outcome::Term {
                return Some((p, s));
            }
        }
    }
    None
}

/// A safe input plus a second state that differs from it only in memory cells
/// the sequential run never touches, so both have the same sequential trace.
pub fn gen_seq_equiv_pair(
    cfg: &GenConfig,
    rng: &mut impl Rng,
    fuel: usize,
    attempts: usize,
) -> Option<(Program, SpecState, SpecState)> {
    for _ in 0..attempts {
        let (p, s1) = gen_safe_input(cfg, rng, fuel, attempts)?;
        let r1 = run_seq(&p, s1.cfg.clone(), fuel);
        let touched: Vec<usize> = r1
            .trace
            .iter()
            .filter_map(|o| match o {
                Observation::Load(a) | Observation::Store(a) => Some(*a),
                _ => None,
            })
            .collect();
        let secret: Vec<usize> = (0..s1.cfg.mem.len()).filter(|a| !touched.contains(a)).collect();
        if secret.is_empty() {
            continue;
        }
        let mut s2 = s1.clone();
        let mut g = Gen { cfg, rng };
        for &a in &secret {
            let v = g.value(&p, 0.08);
            s2.cfg.mem.set(a, v);
        }
        if s2 == s1 {
            continue;
        }
        let r2 = run_seq(&p, s2.cfg.clone(), fuel);
        if r2.outcome == Outcome::Term && r2.trace == r1.trace {
            return Some((p, s1, s2));
        }
    }
    None
}
