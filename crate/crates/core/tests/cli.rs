use std::path::PathBuf;

use serde_json::Value as Json;
use specibt::cli::main_with;
use specibt::textio::{decode_directives, parse_program};

fn corpus(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "corpus", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = main_with(std::iter::once("specibt").chain(args.iter().copied()), &mut o, &mut e);
    (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
}

fn json(s: &str) -> Json {
    serde_json::from_str(s.trim()).unwrap_or_else(|e| panic!("{e}: {s}"))
}

fn temp(name: &str, text: &str) -> (tempfile::TempDir, String) {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join(name);
    std::fs::write(&p, text).unwrap();
    (d, p.to_string_lossy().into_owned())
}

#[test]
fn harden_matches_golden_byte_for_byte() {
    let (code, out, _) = cli(&["harden", &corpus("listing1.mir")]);
    assert_eq!(code, 0);
    assert_eq!(out, std::fs::read_to_string(corpus("listing1.hardened.mir")).unwrap());
    let (_, uslh, _) = cli(&["harden", "--variant", "uslh-only", &corpus("listing1.mir")]);
    assert_eq!(uslh, std::fs::read_to_string(corpus("listing1.uslh.mir")).unwrap());
}

#[test]
fn harden_with_renamed_reserved_registers() {
    let (code, out, _) = cli(&["harden", "--msf-reg", "m", "--callee-reg", "c", &corpus("listing1.mir")]);
    assert_eq!(code, 0);
    assert!(out.contains("m <- ((c = &calln) ? m : 1)"), "{out}");
}

#[test]
fn harden_rejects_reserved_register_use() {
    let (_d, p) = temp("p.mir", "entry main:\n  msf <- 1\n  ret\n");
    let (code, _, err) = cli(&["harden", &p]);
    assert_eq!(code, 5);
    assert!(err.contains("reserved registers unused by the source"), "{err}");
}

#[test]
fn check_reports_violations_with_exit_5() {
    let (code, out, _) = cli(&["check", &corpus("listing1.mir")]);
    assert_eq!(code, 0, "{out}");
    let (code, out, _) = cli(&["check", &corpus("listing1.uslh.mir")]);
    assert_eq!(code, 5);
    assert!(out.contains("reserved register msf is used"), "{out}");
    let (_d, p) = temp("p.mir", "entry main:\n  jump b\nblock b:\n  skip\n");
    let (code, out, err) = cli(&["check", &p]);
    assert_eq!(code, 5);
    assert!(out.contains("lacks terminator"), "{out}");
    assert!(err.contains("well-formed source program"));
}

#[test]
fn parse_errors_are_positioned() {
    let (_d, p) = temp("p.mir", "entry main:\n  jump nowhere\n");
    let (code, _, err) = cli(&["check", &p]);
    assert_eq!(code, 1);
    assert!(err.contains("p.mir:2:"), "{err}");
    assert!(err.contains("unknown label nowhere"), "{err}");
}

#[test]
fn run_prints_trace_and_outcome() {
    let (code, out, _) = cli(&["run", "--sem", "seq", &corpus("listing1.mir"), &corpus("listing1.inbounds.json")]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["outcome"], "term");
    assert_eq!(v["trace"], json(r#"[{"branch":true},{"call":4},{"load":3},{"load":1}]"#));
}

#[test]
fn seq_runs_take_no_directives() {
    let (code, _, err) = cli(&[
        "run",
        "--sem",
        "seq",
        &corpus("listing6.mir"),
        &corpus("listing6.state.json"),
        "--dir",
        &corpus("listing6.directives.json"),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("no directives"), "{err}");
}

#[test]
fn stuck_runs_exit_4() {
    let (_d, p) = temp("p.mir", "entry main:\n  load x, 9\n  ret\n");
    let (_e, s) = temp("s.json", r#"{"regs":{},"mem":[{"nat":0}]}"#);
    let (code, out, _) = cli(&["run", "--sem", "seq", &p, &s]);
    assert_eq!(code, 4);
    assert!(json(&out)["outcome"].as_str().unwrap().starts_with("stuck:"));
}

#[test]
fn injected_mid_block_call_faults() {
    let args = |sem: &'static str, dir: String| {
        let mut a = vec!["run".to_string(), "--sem".into(), sem.into()];
        a.extend([corpus("listing1.hardened.mir"), corpus("listing1.inbounds.json"), "--dir".into(), dir]);
        a
    };
    let run = |a: Vec<String>| {
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        cli(&a)
    };
    let (code, out, _) = run(args("spec", corpus("listing1.hardened.inject.json")));
    assert_eq!(code, 0);
    assert_eq!(json(&out)["outcome"], "fault");
    let (_d, d) = temp("d.json", r#"[{"branch":true},{"call":{"addr":15}}]"#);
    let mut a = args("mc", d);
    a.extend(["--layout".into(), corpus("listing1.hardened.layout.json")]);
    let (_, out, _) = run(a);
    assert_eq!(json(&out)["outcome"], "fault");
}

#[test]
fn listing6_masking_does_not_get_stuck() {
    let (code, out, _) = cli(&[
        "run",
        &corpus("listing6.hardened.mir"),
        &corpus("listing6.state.json"),
        "--dir",
        &corpus("listing6.directives.json"),
    ]);
    assert_eq!(code, 0);
    let v = json(&out);
    assert_eq!(v["outcome"], "term");
    assert_eq!(v["trace"], json(r#"[{"branch":false},{"store":0},{"load":0},{"branch":false}]"#));
}

#[test]
fn linearize_matches_golden_listing_and_layout() {
    let d = tempfile::tempdir().unwrap();
    let lay = d.path().join("layout.json");
    let lay = lay.to_str().unwrap();
    let (code, out, _) = cli(&["linearize", &corpus("listing1.hardened.mir"), "--data-len", "8", "--layout", lay]);
    assert_eq!(code, 0);
    assert_eq!(out, std::fs::read_to_string(corpus("listing1.hardened.mc")).unwrap());
    assert_eq!(
        std::fs::read_to_string(lay).unwrap(),
        std::fs::read_to_string(corpus("listing1.hardened.layout.json")).unwrap()
    );
}

#[test]
fn mc_runs_need_the_matching_layout() {
    let base = ["run", "--sem", "mc"];
    let (p, s) = (corpus("listing1.hardened.mir"), corpus("listing1.inbounds.json"));
    let (code, _, err) = cli(&[&base[..], &[p.as_str(), s.as_str()]].concat());
    assert_eq!(code, 1);
    assert!(err.contains("--layout"));
    let (_d, bad) = temp(
        "l.json",
        r#"{"data_len":8,"starts":{"calln":0,"fun_1":11,"fun_2":14,"l_cont":8,"l_top":7,"l_top_split":19}}"#,
    );
    let (code, _, err) = cli(&[&base[..], &[p.as_str(), s.as_str(), "--layout", bad.as_str()]].concat());
    assert_eq!(code, 1, "{err}");
    let good = corpus("listing1.hardened.layout.json");
    let (code, out, _) = cli(&[&base[..], &[p.as_str(), s.as_str(), "--layout", good.as_str()]].concat());
    assert_eq!(code, 0);
    assert_eq!(json(&out)["outcome"], "out-of-directives");
}

#[test]
fn attack_finds_the_branch_gadget() {
    let (code, out, _) = cli(&["attack", "--target", "pht", &corpus("listing1.mir"), &corpus("listing1.pair.json")]);
    assert_eq!(code, 0);
    let ds = decode_directives(out.trim()).unwrap();
    assert!(!ds.is_empty());
}

#[test]
fn attack_finds_the_call_gadget_in_uslh_only() {
    let (code, out, _) = cli(&[
        "attack",
        "--target",
        "btb",
        "--call-targets",
        &corpus("listing1.btb_targets.json"),
        &corpus("listing1.uslh.mir"),
        &corpus("listing1.pair.json"),
    ]);
    assert_eq!(code, 0);
    assert!(out.contains(r#"{"call":{"label":5,"offset":1}}"#), "{out}");
}

#[test]
fn attack_on_hardened_entry_fails() {
    let (code, out, _) = cli(&["attack", &corpus("listing1.hardened.mir"), &corpus("listing1.pair.json")]);
    assert_eq!(code, 1);
    assert!(out.contains("no distinguishing directives within budget"));
}

#[test]
fn fuzz_is_deterministic_and_passes_on_the_full_pass() {
    let args = ["fuzz-bcc", "--seed", "7", "--runs", "20", "--max-sequences", "300"];
    let (c1, o1, _) = cli(&args);
    let (c2, o2, _) = cli(&args);
    assert_eq!((c1, c2), (0, 0), "{o1}");
    assert_eq!(o1, o2);
    let v = json(&o1);
    assert_eq!(v["verdict"], "pass");
    assert_eq!(v["programs"], 20);
}

#[test]
fn fuzz_counterexamples_replay_through_run() {
    let d = tempfile::tempdir().unwrap();
    let cex = d.path().join("cex.json");
    let cex = cex.to_str().unwrap();
    let (code, out, _) = cli(&["fuzz-rs", "--pipeline", "source", "--runs", "60", "--cex-out", cex]);
    assert_eq!(code, 2, "{out}");
    assert_eq!(json(&out)["verdict"], "counterexample");
    let (code, out, _) = cli(&["run", "--cex", cex]);
    assert_eq!(code, 2);
    let v = json(&out);
    assert_eq!(v["reproduced"], true);
    assert_eq!(v["violated"], true);
    let (code, _, _) = cli(&["replay", cex]);
    assert_eq!(code, 2);
}

#[test]
fn corpus_mode_checks_each_entry() {
    let dir = corpus("");
    let (code, out, _) = cli(&["fuzz-rs", "--corpus", &dir, "--pipeline", "source"]);
    assert_eq!(code, 2);
    let v = json(&out);
    let leaking: Vec<&str> = v["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|i| i["verdict"] == "counterexample")
        .map(|i| i["input"].as_str().unwrap())
        .collect();
    assert_eq!(leaking, ["listing1#0"]);
    for cmd in ["fuzz-bcc", "fuzz-safety", "fuzz-linearize", "fuzz-transparency"] {
        let (code, out, _) = cli(&[cmd, "--corpus", &dir]);
        assert_eq!(code, 0, "{cmd}: {out}");
    }
    let (code, _, _) = cli(&["fuzz-rs", "--corpus", &dir, "--pipeline", "hardened+mc"]);
    assert_eq!(code, 0);
}

#[test]
fn diff_compares_traces() {
    let (_a, a) = temp("a.json", r#"[{"load":1},{"branch":true}]"#);
    let (_b, b) = temp("b.json", r#"[{"load":1}]"#);
    let (_c, c) = temp("c.json", r#"[{"load":2}]"#);
    assert_eq!(cli(&["diff", &a, &a]).0, 0);
    assert_eq!(cli(&["diff", &a, &b]).0, 0);
    let (code, out, _) = cli(&["diff", &a, &c]);
    assert_eq!(code, 2);
    assert!(out.starts_with("diverge at 0"));
}

#[test]
fn corpus_programs_parse_and_check() {
    for f in ["listing1.mir", "listing6.mir", "listing1.hardened.mir", "listing1.uslh.mir", "listing6.hardened.mir"] {
        let text = std::fs::read_to_string(corpus(f)).unwrap();
        assert!(parse_program(&text).is_ok(), "{f}");
        assert_eq!(cli(&["check", "--hardened", &corpus(f)]).0, 0, "{f}");
    }
}
