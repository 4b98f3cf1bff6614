use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use specibt_ffi::*;

const LISTING1: &str = include_str!("../../../corpus/listing1.mir");
const HARDENED: &str = include_str!("../../../corpus/listing1.hardened.mir");
const STATE: &str = include_str!("../../../corpus/listing1.inbounds.json");

fn take(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { specibt_string_free(s) };
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(specibt_last_error()) }.to_str().unwrap().to_string()
}

fn parse(text: &str) -> *mut SpecibtProgram {
    let c = CString::new(text).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { specibt_program_parse(c.as_ptr(), &mut p) }, SpecibtStatus::Ok);
    p
}

#[test]
fn parse_print_harden_round_trip() {
    let p = parse(LISTING1);
    let mut h = ptr::null_mut();
    let status = unsafe { specibt_harden(p, ptr::null(), ptr::null(), ptr::null(), &mut h) };
    assert_eq!(status, SpecibtStatus::Ok);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { specibt_program_print(h, &mut out) }, SpecibtStatus::Ok);
    assert_eq!(take(out), HARDENED);
    unsafe {
        specibt_program_free(h);
        specibt_program_free(p);
    }
}

#[test]
fn errors_set_status_and_message() {
    let bad = CString::new("entry main:\n  jump nowhere\n").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { specibt_program_parse(bad.as_ptr(), &mut p) }, SpecibtStatus::ParseError);
    assert!(p.is_null());
    assert!(last_error().contains("unknown label nowhere"));
    assert_eq!(unsafe { specibt_program_parse(ptr::null(), &mut p) }, SpecibtStatus::NullArgument);

    let h = parse(HARDENED);
    let mut hh = ptr::null_mut();
    let status = unsafe { specibt_harden(h, ptr::null(), ptr::null(), ptr::null(), &mut hh) };
    assert_eq!(status, SpecibtStatus::SideCondition);
    let v = CString::new("bogus").unwrap();
    let status = unsafe { specibt_harden(h, v.as_ptr(), ptr::null(), ptr::null(), &mut hh) };
    assert_eq!(status, SpecibtStatus::InvalidArgument);
    unsafe { specibt_program_free(h) };
}

#[test]
fn check_reports_violations() {
    let p = parse("entry main:\n  jump b\nblock b:\n  skip\n");
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { specibt_program_check(p, false, &mut out) }, SpecibtStatus::Ok);
    let v: Vec<String> = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v.len(), 1);
    unsafe { specibt_program_free(p) };
}

#[test]
fn run_and_linearize() {
    let p = parse(HARDENED);
    let state = CString::new(STATE).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { specibt_run(p, SpecibtSemantics::Seq, state.as_ptr(), ptr::null(), 1000, &mut out) };
    assert_eq!(status, SpecibtStatus::Ok, "{}", last_error());
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["outcome"], "term");

    let ds = CString::new(r#"[{"branch":false},{"call":{"label":1,"offset":1}}]"#).unwrap();
    let status = unsafe { specibt_run(p, SpecibtSemantics::Spec, state.as_ptr(), ds.as_ptr(), 1000, &mut out) };
    assert_eq!(status, SpecibtStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert_eq!(v["outcome"], "fault");

    let (mut listing, mut layout) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { specibt_linearize(p, 8, &mut listing, &mut layout) }, SpecibtStatus::Ok);
    assert_eq!(take(listing), include_str!("../../../corpus/listing1.hardened.mc"));
    assert_eq!(take(layout) + "\n", include_str!("../../../corpus/listing1.hardened.layout.json"));
    unsafe { specibt_program_free(p) };
}

#[test]
fn trace_cmp_and_version() {
    let a = CString::new(r#"[{"load":1},{"branch":true}]"#).unwrap();
    let b = CString::new(r#"[{"load":1}]"#).unwrap();
    let c = CString::new(r#"[{"load":2}]"#).unwrap();
    let mut related = false;
    assert_eq!(unsafe { specibt_trace_cmp(a.as_ptr(), b.as_ptr(), &mut related) }, SpecibtStatus::Ok);
    assert!(related);
    assert_eq!(unsafe { specibt_trace_cmp(a.as_ptr(), c.as_ptr(), &mut related) }, SpecibtStatus::Ok);
    assert!(!related);
    let bad = CString::new("[{\"lode\":1}]").unwrap();
    assert_eq!(unsafe { specibt_trace_cmp(a.as_ptr(), bad.as_ptr(), &mut related) }, SpecibtStatus::DecodeError);
    let v = unsafe { CStr::from_ptr(specibt_version()) }.to_str().unwrap();
    assert!(v.contains("semantics "));
}

/// The generated header compiles as C and as C++.
#[test]
fn header_compiles() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let src = dir.join("tests").join("smoke.c");
    for (cc, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(st) = std::process::Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(dir.join("include"))
            .arg(&src)
            .status()
        else {
            eprintln!("{cc} not available");
            continue;
        };
        assert!(st.success(), "{cc} rejected the header");
    }
}

/// Links the C smoke program against the static library and runs it.
#[test]
fn c_program_links_and_runs() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libspecibt_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let out = tempfile_path("specibt_smoke");
    let Ok(st) = std::process::Command::new("cc")
        .arg(dir.join("tests").join("smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
    else {
        eprintln!("cc not available");
        return;
    };
    assert!(st.success(), "link failed");
    assert!(std::process::Command::new(&out).status().unwrap().success());
    let _ = std::fs::remove_file(out);
}

fn tempfile_path(stem: &str) -> PathBuf {
    std::env::temp_dir().join(format!("{stem}_{}", std::process::id()))
}
