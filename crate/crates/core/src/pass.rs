//! The SpecIBT hardening pass.
//!
//! Every load and store address is masked with `msf`, every conditional branch
//! gets a misspeculation-tracking update on both edges (the taken edge through a
//! fresh edge-split block), every indirect call records its intended target in
//! `callee`, and every function entry checks that it was reached as intended.

use std::collections::HashSet;

use crate::ir::{used_registers, wf_program, BinOp, Block, Expr, Inst, Label, Program, Reg, WfMode, WfViolation};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReservedRegs {
    pub msf: Reg,
    pub callee: Reg,
}

impl Default for ReservedRegs {
    fn default() -> Self {
        ReservedRegs { msf: Reg::new("msf"), callee: Reg::new("callee") }
    }
}

/// Which parts of the transformation to apply. Everything but `Full` is a
/// deliberately weakened pass, used to check that the harness notices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Variant {
    #[default]
    Full,
    /// Branch and memory hardening only: no ctarget, no callee tracking.
    UslhOnly,
    /// Taken edges update nothing.
    NoEdgeSplit,
    /// Entry preludes keep the ctarget but drop the callee comparison.
    NoCalleeCheck,
    /// Call targets are not masked under misspeculation.
    NoCallMask,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Full, Variant::UslhOnly, Variant::NoEdgeSplit, Variant::NoCalleeCheck, Variant::NoCallMask];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::UslhOnly => "uslh-only",
            Variant::NoEdgeSplit => "no-edge-split",
            Variant::NoCalleeCheck => "no-callee-check",
            Variant::NoCallMask => "no-call-mask",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum HardenError {
    #[error("source program is not well-formed: {}", join(.0))]
    NotWellFormed(Vec<WfViolation>),
    #[error("reserved register {0} is used by the source program")]
    ReservedRegisterUsed(Reg),
    #[error("msf and callee must be distinct registers")]
    ReservedRegistersAlias,
    #[error("ctarget in source program")]
    CTargetInSource,
}

fn join(v: &[WfViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformResult {
    pub hardened: Program,
    pub added_block_count: usize,
    /// `origin[l]` is the label a hardened block came from; fresh edge-split
    /// blocks map to the target of the branch they split.
    pub origin: Vec<Label>,
}

fn masked(regs: &ReservedRegs, e: Expr, mask: Expr) -> Expr {
    Expr::cond(Expr::Reg(regs.msf.clone()), mask, e)
}

/// Edge-split blocks created while translating, with their labels.
pub type SplitBlocks = Vec<(Block, Label)>;

/// Translates one instruction. `fresh` is the label the next edge-split block will get.
pub fn tr_inst(
    i: &Inst,
    fresh: Label,
    regs: &ReservedRegs,
    variant: Variant,
) -> Result<(Vec<Inst>, SplitBlocks, Label), HardenError> {
    let msf = || Expr::Reg(regs.msf.clone());
    Ok(match i {
        Inst::CTarget => return Err(HardenError::CTargetInSource),
        Inst::Load(x, e) => (vec![Inst::Load(x.clone(), masked(regs, e.clone(), Expr::nat(0)))], vec![], fresh),
        Inst::Store(a, v) => (vec![Inst::Store(masked(regs, a.clone(), Expr::nat(0)), v.clone())], vec![], fresh),
        Inst::Branch(e, l) => {
            let c = masked(regs, e.clone(), Expr::nat(0));
            let fall = Inst::Asgn(regs.msf.clone(), Expr::cond(c.clone(), Expr::nat(1), msf()));
            if variant == Variant::NoEdgeSplit {
                (vec![Inst::Branch(c, *l), fall], vec![], fresh)
            } else {
                let split = Block::new(
                    vec![Inst::Asgn(regs.msf.clone(), Expr::cond(c.clone(), msf(), Expr::nat(1))), Inst::Jump(*l)],
                    false,
                );
                (vec![Inst::Branch(c, fresh), fall], vec![(split, *l)], fresh + 1)
            }
        }
        Inst::Call(e) => {
            let t = if variant == Variant::NoCallMask { e.clone() } else { masked(regs, e.clone(), Expr::FpConst(0)) };
            let mut out = Vec::new();
            if variant != Variant::UslhOnly {
                out.push(Inst::Asgn(regs.callee.clone(), t.clone()));
            }
            out.push(Inst::Call(t));
            (out, vec![], fresh)
        }
        Inst::Skip | Inst::Asgn(..) | Inst::Jump(_) | Inst::Ret => (vec![i.clone()], vec![], fresh),
    })
}

fn prelude(l: Label, regs: &ReservedRegs, variant: Variant) -> Vec<Inst> {
    let msf = Expr::Reg(regs.msf.clone());
    let check = Expr::bin(BinOp::Eq, Expr::Reg(regs.callee.clone()), Expr::FpConst(l));
    match variant {
        Variant::UslhOnly => vec![],
        Variant::NoCalleeCheck => vec![Inst::CTarget],
        _ => vec![Inst::CTarget, Inst::Asgn(regs.msf.clone(), Expr::cond(check, msf, Expr::nat(1)))],
    }
}

/// Translates block `l`, returning the new block and any edge-split blocks with
/// the labels they jump to.
pub fn tr_block(
    l: Label,
    b: &Block,
    fresh: Label,
    regs: &ReservedRegs,
    variant: Variant,
) -> Result<(Block, SplitBlocks, Label), HardenError> {
    let mut insts = if b.is_entry { prelude(l, regs, variant) } else { vec![] };
    let mut extra = Vec::new();
    let mut fresh = fresh;
    for i in &b.insts {
        let (is, bs, f) = tr_inst(i, fresh, regs, variant)?;
        insts.extend(is);
        extra.extend(bs);
        fresh = f;
    }
    Ok((Block::new(insts, b.is_entry), extra, fresh))
}

fn check_source(p: &Program, regs: &ReservedRegs) -> Result<(), HardenError> {
    let v = wf_program(p, WfMode::Source);
    if !v.is_empty() {
        return Err(HardenError::NotWellFormed(v));
    }
    if regs.msf == regs.callee {
        return Err(HardenError::ReservedRegistersAlias);
    }
    let used = used_registers(p);
    for r in [&regs.msf, &regs.callee] {
        if used.contains(r) {
            return Err(HardenError::ReservedRegisterUsed(r.clone()));
        }
    }
    Ok(())
}

fn fresh_name(taken: &mut HashSet<String>, target: &str) -> String {
    let base = format!("{target}_split");
    let mut name = base.clone();
    let mut k = 2;
    while taken.contains(&name) {
        name = format!("{base}{k}");
        k += 1;
    }
    taken.insert(name.clone());
    name
}

pub fn harden(p: &Program, regs: &ReservedRegs) -> Result<TransformResult, HardenError> {
    harden_variant(p, regs, Variant::Full)
}

pub fn harden_variant(p: &Program, regs: &ReservedRegs, variant: Variant) -> Result<TransformResult, HardenError> {
    check_source(p, regs)?;
    let mut blocks = Vec::with_capacity(p.len());
    let mut extra = Vec::new();
    let mut fresh = p.len();
    for (l, b) in p.blocks.iter().enumerate() {
        let (nb, bs, f) = tr_block(l, b, fresh, regs, variant)?;
        blocks.push(nb);
        extra.extend(bs);
        fresh = f;
    }
    let mut names = p.names.clone();
    let mut taken: HashSet<String> = names.iter().cloned().collect();
    let mut origin: Vec<Label> = (0..p.len()).collect();
    let added_block_count = extra.len();
    for (b, target) in extra {
        names.push(fresh_name(&mut taken, p.name(target)));
        origin.push(target);
        blocks.push(b);
    }
    Ok(TransformResult { hardened: Program::with_names(blocks, names), added_block_count, origin })
}
