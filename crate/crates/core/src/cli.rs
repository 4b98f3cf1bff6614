//! Command-line front end.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use crate::harness::{
    self, attack_search, check_bcc, check_linearize, check_relative_security, check_safety, check_transparency,
    execute, fuzz, fuzz_ideal_invariants, hardened_defaults, replay, Concretize, Counterexample, Execution,
    ExploreBudget, ForkPolicy, FuzzConfig, FuzzKind, FuzzReport, GenConfig, Pipeline, Semantics, SideConditionError,
    Verdict,
};
use crate::interp::{CetMode, Directive, Outcome, SpecState};
use crate::ir::{used_registers, wf_program, Program, WfMode};
use crate::minimc::{layout, linearize, LayoutMap};
use crate::pass::{harden_variant, ReservedRegs, Variant};
use crate::relate::first_divergence;
use crate::textio::{
    decode_directives, decode_state, decode_state_pair, decode_trace, directives_to_json, encode_directives,
    parse_program, print_program, trace_to_json, DecodeError,
};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (semantics ", env!("SPECIBT_SEMANTICS_HASH"), ")");

#[derive(Parser, Debug)]
#[command(name = "specibt", version = VERSION, about = "Speculative semantics, SpecIBT hardening and their checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Check well-formedness of a program.
    Check(CheckArgs),
    /// Run a program under one semantics and print its trace.
    Run(RunArgs),
    /// Apply the hardening pass and print the result.
    Harden(HardenArgs),
    /// Lay out a program in memory and print the flat listing.
    Linearize(LinearizeArgs),
    /// Search for directives that distinguish two states.
    Attack(AttackArgs),
    /// Hardened speculative runs against ideal source runs.
    FuzzBcc(FuzzArgs),
    /// Hardened speculative runs of safe inputs never get stuck.
    FuzzSafety(FuzzArgs),
    /// Equivalent inputs stay indistinguishable after a pipeline.
    FuzzRs(FuzzRsArgs),
    /// MiniMC runs are simulated step for step by MiniMIR runs.
    FuzzLinearize(FuzzArgs),
    /// Hardening does not change sequential behavior.
    FuzzTransparency(FuzzArgs),
    /// Masking, unwinding and monotonicity of the ideal semantics.
    FuzzIdeal(FuzzIdealArgs),
    /// Compare two traces.
    Diff { a: PathBuf, b: PathBuf },
    /// Re-execute a counterexample file.
    Replay { cex: PathBuf },
}

#[derive(Args, Debug, Clone)]
struct RegArgs {
    #[arg(long, default_value = "msf")]
    msf_reg: String,
    #[arg(long, default_value = "callee")]
    callee_reg: String,
}

impl RegArgs {
    fn regs(&self) -> ReservedRegs {
        ReservedRegs { msf: self.msf_reg.as_str().into(), callee: self.callee_reg.as_str().into() }
    }
}

#[derive(Args, Debug)]
struct CheckArgs {
    program: PathBuf,
    /// Apply the placement rules of hardened output.
    #[arg(long)]
    hardened: bool,
    #[command(flatten)]
    regs: RegArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Sem {
    Seq,
    Spec,
    Ideal,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Cet {
    Auto,
    On,
    Off,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(required_unless_present = "cex")]
    program: Option<PathBuf>,
    #[arg(required_unless_present = "cex")]
    state: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "spec")]
    sem: Sem,
    /// Directive list (JSON).
    #[arg(long = "dir")]
    directives: Option<PathBuf>,
    #[arg(long, default_value_t = harness::SEQ_FUEL)]
    fuel: usize,
    /// Initial ctarget flag; defaults to whether the program contains a ctarget.
    #[arg(long)]
    ct: Option<bool>,
    #[arg(long)]
    ms: Option<bool>,
    #[arg(long, value_enum, default_value = "auto")]
    cet: Cet,
    /// Layout sidecar, required by the MiniMC semantics.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Replay a counterexample file instead.
    #[arg(long, conflicts_with_all = ["program", "state", "directives"])]
    cex: Option<PathBuf>,
    #[command(flatten)]
    regs: RegArgs,
}

#[derive(Args, Debug)]
struct HardenArgs {
    program: PathBuf,
    #[arg(long, default_value = "full", value_parser = parse_variant)]
    variant: Variant,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    regs: RegArgs,
}

#[derive(Args, Debug)]
struct LinearizeArgs {
    program: PathBuf,
    #[arg(long, required_unless_present = "state")]
    data_len: Option<usize>,
    /// Take the data length from this state's memory.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Write the layout sidecar here.
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Target {
    Pht,
    Btb,
    All,
}

#[derive(Args, Debug)]
struct AttackArgs {
    program: PathBuf,
    /// {"s1": state, "s2": state}
    pair: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    target: Target,
    /// Harden with this variant first.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Attack the linearized program.
    #[arg(long)]
    linearize: bool,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 1_000_000)]
    max_sequences: usize,
    #[arg(long, default_value_t = 2_000)]
    fuel: usize,
    /// Restrict injected call targets to this directive list (JSON).
    #[arg(long)]
    call_targets: Option<PathBuf>,
    /// Write the full counterexample here.
    #[arg(long)]
    cex_out: Option<PathBuf>,
    #[command(flatten)]
    regs: RegArgs,
}

#[derive(Args, Debug, Clone)]
struct FuzzArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Deepen up to this depth while an input has fewer than --min-sequences.
    #[arg(long, default_value_t = 256)]
    max_depth: usize,
    #[arg(long, default_value_t = harness::MIN_SEQUENCES)]
    min_sequences: usize,
    #[arg(long, default_value_t = 2_000)]
    max_sequences: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value_t = 1_000)]
    fuel: usize,
    /// Check the programs of a corpus directory instead of generated ones.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Pass variant; for fuzz-linearize, harden with it before linearizing.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Give UV cells random values, seeded, when lifting to MiniMC.
    #[arg(long)]
    uv_seed: Option<u64>,
    #[arg(long)]
    cex_out: Option<PathBuf>,
    #[command(flatten)]
    regs: RegArgs,
}

#[derive(Args, Debug)]
struct FuzzRsArgs {
    #[command(flatten)]
    common: FuzzArgs,
    /// source, hardened, a variant name, each optionally with "+mc".
    #[arg(long, default_value = "hardened", value_parser = parse_pipeline)]
    pipeline: Pipeline,
}

#[derive(Args, Debug)]
struct FuzzIdealArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[arg(long, default_value_t = 1000)]
    fuel: usize,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
        format!("unknown variant; expected one of {}", names.join(", "))
    })
}

fn parse_pipeline(s: &str) -> Result<Pipeline, String> {
    Pipeline::from_name(s)
        .ok_or_else(|| "expected source, hardened or a variant name, optionally followed by +mc".into())
}

/// Error carrying its exit status.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<SideConditionError> for Failure {
    fn from(e: SideConditionError) -> Self {
        Failure { code: 5, message: e.to_string() }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

type CmdResult = Result<i32, Failure>;

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn out(&mut self, s: impl fmt::Display) {
        let _ = writeln!(self.out, "{s}");
    }

    fn err(&mut self, s: impl fmt::Display) {
        let _ = writeln!(self.err, "{s}");
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_program(path: &Path) -> Result<Program, Failure> {
    parse_program(&read(path)?).map_err(|es| {
        let lines: Vec<String> = es.iter().map(|e| format!("{}:{e}", path.display())).collect();
        input_error(lines.join("\n"))
    })
}

fn decoded<T>(path: &Path, r: Result<T, DecodeError>) -> Result<T, Failure> {
    r.map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_state(path: &Path) -> Result<SpecState, Failure> {
    decoded(path, decode_state(&read(path)?))
}

fn load_directives(path: &Path) -> Result<Vec<Directive>, Failure> {
    decoded(path, decode_directives(&read(path)?))
}

/// Runs the CLI on `args` (including the program name) and returns the exit status.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(io.out, "{text}");
            } else {
                let _ = write!(io.err, "{text}");
            }
            return code;
        }
    };
    let r = match cli.cmd {
        Cmd::Check(a) => cmd_check(a, &mut io),
        Cmd::Run(a) => cmd_run(a, &mut io),
        Cmd::Harden(a) => cmd_harden(a, &mut io),
        Cmd::Linearize(a) => cmd_linearize(a, &mut io),
        Cmd::Attack(a) => cmd_attack(a, &mut io),
        Cmd::FuzzBcc(a) => {
            let v = a.variant.unwrap_or_default();
            cmd_fuzz(FuzzKind::Bcc(v), a, &mut io)
        }
        Cmd::FuzzSafety(a) => {
            let v = a.variant.unwrap_or_default();
            cmd_fuzz(FuzzKind::Safety(v), a, &mut io)
        }
        Cmd::FuzzRs(a) => cmd_fuzz(FuzzKind::RelativeSecurity(a.pipeline), a.common, &mut io),
        Cmd::FuzzLinearize(a) => cmd_fuzz(FuzzKind::Linearize(a.variant), a, &mut io),
        Cmd::FuzzTransparency(a) => cmd_fuzz(FuzzKind::Transparency, a, &mut io),
        Cmd::FuzzIdeal(a) => cmd_fuzz_ideal(a, &mut io),
        Cmd::Diff { a, b } => cmd_diff(&a, &b, &mut io),
        Cmd::Replay { cex } => cmd_replay(&cex, &mut io),
    };
    match r {
        Ok(code) => code,
        Err(f) => {
            io.err(format!("error: {f}"));
            f.code
        }
    }
}

fn cmd_check(a: CheckArgs, io: &mut Io) -> CmdResult {
    let p = load_program(&a.program)?;
    let mode = if a.hardened || p.contains_ctarget() { WfMode::Hardened } else { WfMode::Source };
    let mut problems: Vec<String> = wf_program(&p, mode).iter().map(|v| v.to_string()).collect();
    if mode == WfMode::Source {
        let used = used_registers(&p);
        let regs = a.regs.regs();
        for r in [&regs.msf, &regs.callee] {
            if used.contains(r) {
                problems.push(format!("reserved register {r} is used"));
            }
        }
    }
    if problems.is_empty() {
        let entries = p.entry_labels().len();
        io.out(format_args!(
            "ok: {} blocks, {} instructions, {entries} entries, {} branches",
            p.len(),
            p.code_len(),
            p.branch_count()
        ));
        return Ok(0);
    }
    for m in &problems {
        io.out(m);
    }
    let hypothesis = if mode == WfMode::Source { harness::WELL_FORMED } else { "well-formed hardened program" };
    Err(SideConditionError::new(hypothesis, format!("{} violation(s)", problems.len())).into())
}

fn run_json(trace: &[crate::interp::Observation], outcome: Outcome, steps: usize) -> Json {
    json!({ "outcome": outcome.to_string(), "steps": steps, "trace": trace_to_json(trace) })
}

fn outcome_code(o: Outcome) -> i32 {
    if o.is_stuck() {
        4
    } else {
        0
    }
}

fn cmd_run(a: RunArgs, io: &mut Io) -> CmdResult {
    if let Some(c) = &a.cex {
        return cmd_replay(c, io);
    }
    let (ppath, spath) = (a.program.as_deref().expect("required"), a.state.as_deref().expect("required"));
    let p = load_program(ppath)?;
    let s = load_state(spath)?;
    let ds = match &a.directives {
        Some(d) => load_directives(d)?,
        None => Vec::new(),
    };
    let regs = a.regs.regs();
    let mut s = hardened_defaults(&p, &regs, s.clone());
    s.ct = a.ct.unwrap_or(s.ct);
    s.ms = a.ms.unwrap_or(s.ms);
    let cet = match a.cet {
        Cet::Auto => None,
        Cet::On => Some(CetMode::Enforced),
        Cet::Off => Some(CetMode::Disabled),
    };
    let sem = match a.sem {
        Sem::Seq => Semantics::Seq,
        Sem::Spec => Semantics::Spec,
        Sem::Ideal => Semantics::Ideal,
        Sem::Mc => {
            let lpath = a.layout.as_deref().ok_or_else(|| input_error("the mc semantics requires --layout"))?;
            let given = decoded(lpath, LayoutMap::from_json(&read(lpath)?, &p))?;
            if given != layout(&p, s.cfg.mem.len()) {
                return Err(input_error(format!(
                    "{}: layout does not match the program laid out after {} data cells",
                    lpath.display(),
                    s.cfg.mem.len()
                )));
            }
            Semantics::Mc
        }
    };
    let Execution { trace, outcome, steps } = execute(&p, sem, s, &ds, a.fuel, cet).map_err(input_error)?;
    io.out(run_json(&trace, outcome, steps));
    Ok(outcome_code(outcome))
}

fn cmd_harden(a: HardenArgs, io: &mut Io) -> CmdResult {
    let p = load_program(&a.program)?;
    let h = harden_variant(&p, &a.regs.regs(), a.variant).map_err(harness::harden_error)?;
    let text = print_program(&h.hardened);
    match &a.output {
        Some(o) => write_file(o, &text)?,
        None => {
            let _ = write!(io.out, "{text}");
        }
    }
    Ok(0)
}

fn cmd_linearize(a: LinearizeArgs, io: &mut Io) -> CmdResult {
    let p = load_program(&a.program)?;
    let mode = if p.contains_ctarget() { WfMode::Hardened } else { WfMode::Source };
    if let Some(v) = wf_program(&p, mode).first() {
        return Err(SideConditionError::new(harness::WELL_FORMED, v.to_string()).into());
    }
    let data_len = match (a.data_len, &a.state) {
        (Some(n), _) => n,
        (None, Some(s)) => load_state(s)?.cfg.mem.len(),
        (None, None) => unreachable!("clap requires one"),
    };
    let mc = linearize(&p, data_len);
    let listing = mc.listing();
    match &a.output {
        Some(o) => write_file(o, &listing)?,
        None => {
            let _ = write!(io.out, "{listing}");
        }
    }
    if let Some(l) = &a.layout {
        write_file(l, &format!("{}\n", mc.layout.to_json(&p)))?;
    }
    Ok(0)
}

fn cex_summary(c: &Counterexample) -> String {
    format!("{} (outcomes {} and {})", c.reason, c.outcome1, c.outcome2)
}

fn cmd_attack(a: AttackArgs, io: &mut Io) -> CmdResult {
    let p = load_program(&a.program)?;
    let (s1, s2) = decoded(&a.pair, decode_state_pair(&read(&a.pair)?))?;
    let policy = match a.target {
        Target::Pht => ForkPolicy::Pht,
        Target::Btb => ForkPolicy::Btb,
        Target::All => ForkPolicy::All,
    };
    let call_targets = a.call_targets.as_deref().map(load_directives).transpose()?;
    let budget = ExploreBudget {
        depth: a.depth,
        max_depth: a.depth,
        max_sequences: a.max_sequences,
        fuel: a.fuel,
        policy,
        call_targets,
        ..Default::default()
    };
    let pipeline = Pipeline { harden: a.variant, linearize: a.linearize };
    let (st, found) = attack_search(&p, &s1, &s2, &budget, pipeline, &a.regs.regs())?;
    match found {
        Some(c) => {
            io.out(encode_directives(&c.directives));
            io.err(format!("found after {} sequences: {}", st.sequences, cex_summary(&c)));
            if let Some(path) = &a.cex_out {
                write_file(path, &format!("{}\n", c.to_json()))?;
            }
            Ok(0)
        }
        None => {
            io.out(format_args!("no distinguishing directives within budget ({} sequences explored)", st.sequences));
            Ok(1)
        }
    }
}

struct CorpusEntry {
    name: String,
    program: Program,
    states: Vec<SpecState>,
    pair: Option<(SpecState, SpecState)>,
}

/// `NAME.mir` files with `NAME.state.json` and/or `NAME.pair.json` beside them.
fn load_corpus(dir: &Path) -> Result<Vec<CorpusEntry>, Failure> {
    let rd = std::fs::read_dir(dir).map_err(|e| input_error(format!("{}: {e}", dir.display())))?;
    let mut mirs: Vec<PathBuf> =
        rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "mir")).collect();
    mirs.sort();
    let mut out = Vec::new();
    for m in mirs {
        let stem = m.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let sp = dir.join(format!("{stem}.state.json"));
        let pp = dir.join(format!("{stem}.pair.json"));
        let mut states = Vec::new();
        if sp.exists() {
            states.push(load_state(&sp)?);
        }
        let pair = if pp.exists() { Some(decoded(&pp, decode_state_pair(&read(&pp)?))?) } else { None };
        if let Some((a, b)) = &pair {
            states.push(a.clone());
            states.push(b.clone());
        }
        if states.is_empty() {
            continue;
        }
        out.push(CorpusEntry { name: stem, program: load_program(&m)?, states, pair });
    }
    Ok(out)
}

fn kind_name(k: FuzzKind) -> (&'static str, String) {
    match k {
        FuzzKind::Bcc(v) => ("bcc", Pipeline::hardened(v).name()),
        FuzzKind::Safety(v) => ("safety", Pipeline::hardened(v).name()),
        FuzzKind::RelativeSecurity(p) => ("rs", p.name()),
        FuzzKind::Linearize(h) => ("linearize", Pipeline { harden: h, linearize: true }.name()),
        FuzzKind::Transparency => ("transparency", Pipeline::HARDENED.name()),
    }
}

fn verdict_name(code: i32) -> &'static str {
    match code {
        0 => "pass",
        2 => "counterexample",
        _ => "inconclusive",
    }
}

fn cmd_fuzz(kind: FuzzKind, a: FuzzArgs, io: &mut Io) -> CmdResult {
    let budget = ExploreBudget {
        depth: a.depth,
        max_depth: a.max_depth.max(a.depth),
        min_distinct: a.min_sequences,
        max_sequences: a.max_sequences,
        samples: a.samples,
        fuel: a.fuel,
        seed: a.seed,
        ..Default::default()
    };
    let concretize = a.uv_seed.map_or(Concretize::Zero, Concretize::Random);
    let regs = a.regs.regs();
    let (check, pipeline) = kind_name(kind);
    if let Some(dir) = &a.corpus {
        return fuzz_corpus(kind, dir, &budget, &regs, concretize, &a, io);
    }
    let default_runs = if kind == FuzzKind::Transparency { 500 } else { 300 };
    let cfg = FuzzConfig {
        seed: a.seed,
        runs: a.runs.unwrap_or(default_runs),
        gen: GenConfig::default(),
        budget,
        regs,
        concretize,
        ..Default::default()
    };
    let rep = fuzz(kind, &cfg);
    let code = rep.exit_code();
    let mut doc = report_json(&rep);
    doc["verdict"] = json!(verdict_name(code));
    doc["check"] = json!(check);
    doc["pipeline"] = json!(pipeline);
    doc["seed"] = json!(a.seed);
    if let (Some((_, c)), Some(path)) = (&rep.first, &a.cex_out) {
        write_file(path, &format!("{}\n", c.to_json()))?;
    }
    io.out(doc);
    Ok(code)
}

fn report_json(r: &FuzzReport) -> Json {
    json!({
        "programs": r.programs,
        "generation_failures": r.generation_failures,
        "sequences": r.sequences,
        "min_distinct": r.min_distinct,
        "thin": r.thin,
        "small_trees": r.small_trees,
        "resampled": r.resampled,
        "skipped": r.skipped,
        "counterexamples": r.counterexamples,
        "inconclusive": r.inconclusive,
        "side_condition_failures": r.side_condition_failures,
        "first_index": r.first.as_ref().map(|(i, _)| *i),
        "counterexample": r.first.as_ref().map(|(_, c)| c.to_json()),
        "side_condition": r.first_side_condition.as_ref().map(|e| e.to_string()),
    })
}

fn fuzz_corpus(
    kind: FuzzKind,
    dir: &Path,
    budget: &ExploreBudget,
    regs: &ReservedRegs,
    concretize: Concretize,
    a: &FuzzArgs,
    io: &mut Io,
) -> CmdResult {
    let (check, pipeline) = kind_name(kind);
    let mut results = Vec::new();
    let mut first: Option<Counterexample> = None;
    let mut worst = 0;
    let hardens = match kind {
        FuzzKind::Bcc(_) | FuzzKind::Safety(_) | FuzzKind::Transparency => true,
        FuzzKind::Linearize(h) => h.is_some(),
        FuzzKind::RelativeSecurity(pl) => pl.harden.is_some(),
    };
    for e in load_corpus(dir)? {
        if hardens && e.program.contains_ctarget() {
            results.push(
                json!({ "input": e.name, "verdict": "skipped", "code": 0, "detail": { "reason": "already hardened" } }),
            );
            continue;
        }
        let verdicts: Vec<Result<Verdict, SideConditionError>> = match kind {
            FuzzKind::RelativeSecurity(pl) => match &e.pair {
                Some((s1, s2)) => vec![check_relative_security(&e.program, s1, s2, budget, pl, regs, concretize)],
                None => continue,
            },
            _ => e
                .states
                .iter()
                .map(|s| match kind {
                    FuzzKind::Bcc(v) => check_bcc(&e.program, s, budget, v, regs),
                    FuzzKind::Safety(v) => check_safety(&e.program, s, budget, v, regs),
                    FuzzKind::Linearize(h) => check_linearize(&e.program, s, budget, h, regs, concretize),
                    FuzzKind::Transparency => check_transparency(&e.program, s, a.fuel, regs),
                    FuzzKind::RelativeSecurity(_) => unreachable!(),
                })
                .collect(),
        };
        for (i, v) in verdicts.into_iter().enumerate() {
            let (code, detail) = match v {
                Ok(Verdict::Pass(info)) => {
                    (0, json!({ "runs": info.runs, "distinct": info.distinct, "complete": info.complete }))
                }
                Ok(Verdict::Counterexample(c)) => {
                    let d = json!({ "reason": c.reason });
                    first.get_or_insert(*c);
                    (2, d)
                }
                Ok(Verdict::Inconclusive(why)) => (3, json!({ "reason": why })),
                Err(e) => (5, json!({ "side_condition": e.to_string() })),
            };
            worst = worst.max(code);
            results.push(json!({ "input": format!("{}#{i}", e.name), "verdict": verdict_name(code.min(3)), "code": code, "detail": detail }));
        }
    }
    if let (Some(c), Some(path)) = (&first, &a.cex_out) {
        write_file(path, &format!("{}\n", c.to_json()))?;
    }
    let doc = json!({
        "check": check,
        "pipeline": pipeline,
        "verdict": if worst == 5 { "side-condition" } else { verdict_name(worst) },
        "inputs": results,
        "counterexample": first.as_ref().map(Counterexample::to_json),
    });
    io.out(doc);
    Ok(worst)
}

fn cmd_fuzz_ideal(a: FuzzIdealArgs, io: &mut Io) -> CmdResult {
    let rep = fuzz_ideal_invariants(a.seed, a.runs, &GenConfig::default(), a.fuel);
    let failed = rep.masking + rep.unwinding + rep.monotonicity > 0;
    io.out(json!({
        "verdict": if failed { "counterexample" } else { "pass" },
        "seed": a.seed,
        "trials": rep.trials,
        "masking_violations": rep.masking,
        "unwinding_violations": rep.unwinding,
        "monotonicity_violations": rep.monotonicity,
        "first_failure": rep.first_failure,
    }));
    Ok(if failed { 2 } else { 0 })
}

fn cmd_diff(a: &Path, b: &Path, io: &mut Io) -> CmdResult {
    let ta = decoded(a, decode_trace(&read(a)?))?;
    let tb = decoded(b, decode_trace(&read(b)?))?;
    match first_divergence(&ta, &tb) {
        Some(i) => {
            io.out(format_args!("diverge at {i}: {} vs {}", ta[i], tb[i]));
            Ok(2)
        }
        None if ta.len() == tb.len() => {
            io.out("equal");
            Ok(0)
        }
        None => {
            io.out(format_args!("prefix: {} vs {} observations", ta.len(), tb.len()));
            Ok(0)
        }
    }
}

fn cmd_replay(path: &Path, io: &mut Io) -> CmdResult {
    let c = decoded(path, Counterexample::from_json(&read(path)?))?;
    let r = replay(&c)?;
    let reproduced = r.matches(&c);
    io.out(json!({
        "check": c.check.name(),
        "pipeline": c.pipeline.name(),
        "violated": r.violated,
        "reproduced": reproduced,
        "reason": r.reason,
        "directives": directives_to_json(&c.directives),
        "trace1": trace_to_json(&r.trace1),
        "trace2": trace_to_json(&r.trace2),
        "outcome1": r.outcome1.to_string(),
        "outcome2": r.outcome2.to_string(),
    }));
    Ok(match (r.violated, reproduced) {
        (true, true) => 2,
        (false, _) => 0,
        (true, false) => 3,
    })
}

/// Process entry point used by the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    main_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = main_with(std::iter::once("specibt").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn version_names_the_semantics_hash() {
        let (code, out, _) = cli(&["--version"]);
        assert_eq!(code, 0);
        assert!(out.contains("semantics "), "{out}");
    }

    #[test]
    fn usage_errors_exit_1() {
        let (code, _, err) = cli(&["run", "--sem", "quantum", "a", "b"]);
        assert_eq!(code, 1);
        assert!(err.contains("quantum"));
    }

    #[test]
    fn missing_files_exit_1() {
        let (code, _, err) = cli(&["check", "/nonexistent/x.mir"]);
        assert_eq!(code, 1);
        assert!(err.contains("/nonexistent/x.mir"));
    }
}
