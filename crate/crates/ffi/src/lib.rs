//! C ABI over the specibt library.
//!
//! Strings crossing the boundary are NUL-terminated UTF-8. Strings returned
//! through `char **` out-parameters are owned by the caller and must be
//! released with `specibt_string_free`. After a call fails,
//! `specibt_last_error` describes the failure on the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use specibt::harness::{execute, hardened_defaults, Semantics};
use specibt::ir::{wf_program, Program, WfMode};
use specibt::minimc::linearize;
use specibt::pass::{harden_variant, ReservedRegs, Variant};
use specibt::relate::trace_cmp;
use specibt::textio::{decode_directives, decode_state, decode_trace, parse_program, print_program, trace_to_json};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecibtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    DecodeError = 4,
    /// A hypothesis of the requested operation does not hold, e.g. the program
    /// is not well formed or uses a reserved register.
    SideCondition = 5,
    InvalidArgument = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecibtSemantics {
    Seq = 0,
    Spec = 1,
    Ideal = 2,
    Mc = 3,
}

/// Opaque parsed program.
pub struct SpecibtProgram {
    inner: Program,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Fail(SpecibtStatus, String);

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SpecibtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SpecibtStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SpecibtStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(SpecibtStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(SpecibtStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn prog_arg<'a>(p: *const SpecibtProgram) -> Result<&'a Program, Fail> {
    p.as_ref().map(|p| &p.inner).ok_or_else(|| Fail(SpecibtStatus::NullArgument, "program is null".into()))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(SpecibtStatus::NullArgument, format!("{what} is null")))
}

fn owned(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("NUL removed").into_raw()
}

fn regs(msf: Option<&str>, callee: Option<&str>) -> ReservedRegs {
    let d = ReservedRegs::default();
    ReservedRegs { msf: msf.map_or(d.msf, Into::into), callee: callee.map_or(d.callee, Into::into) }
}

/// Parses program text into `*out`.
///
/// `text` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn specibt_program_parse(text: *const c_char, out: *mut *mut SpecibtProgram) -> SpecibtStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        let p = parse_program(text).map_err(|es| {
            let lines: Vec<String> = es.iter().map(ToString::to_string).collect();
            Fail(SpecibtStatus::ParseError, lines.join("\n"))
        })?;
        *out = Box::into_raw(Box::new(SpecibtProgram { inner: p }));
        Ok(())
    })
}

/// `p` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn specibt_program_free(p: *mut SpecibtProgram) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Canonical text of the program.
///
/// `p` must be a live program and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn specibt_program_print(p: *const SpecibtProgram, out: *mut *mut c_char) -> SpecibtStatus {
    guard(|| {
        let p = prog_arg(p)?;
        *out_arg(out, "out")? = owned(print_program(p));
        Ok(())
    })
}

/// Well-formedness violations as a JSON array of strings; empty when well formed.
/// `hardened` selects the rules for hardened output.
///
/// `p` must be a live program and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn specibt_program_check(
    p: *const SpecibtProgram,
    hardened: bool,
    out: *mut *mut c_char,
) -> SpecibtStatus {
    guard(|| {
        let p = prog_arg(p)?;
        let mode = if hardened { WfMode::Hardened } else { WfMode::Source };
        let v: Vec<String> = wf_program(p, mode).iter().map(ToString::to_string).collect();
        *out_arg(out, "out")? = owned(serde_json::to_string(&v).expect("strings serialize"));
        Ok(())
    })
}

/// Hardens `p` into a new program. `variant`, `msf_reg` and `callee_reg` may be
/// null for the full pass and the default register names.
///
/// `p` must be a live program, the strings valid or null, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn specibt_harden(
    p: *const SpecibtProgram,
    variant: *const c_char,
    msf_reg: *const c_char,
    callee_reg: *const c_char,
    out: *mut *mut SpecibtProgram,
) -> SpecibtStatus {
    guard(|| {
        let p = prog_arg(p)?;
        let v = match opt_str_arg(variant, "variant")? {
            None => Variant::Full,
            Some(name) => Variant::from_name(name)
                .ok_or_else(|| Fail(SpecibtStatus::InvalidArgument, format!("unknown variant {name}")))?,
        };
        let r = regs(opt_str_arg(msf_reg, "msf_reg")?, opt_str_arg(callee_reg, "callee_reg")?);
        let out = out_arg(out, "out")?;
        let h = harden_variant(p, &r, v).map_err(|e| Fail(SpecibtStatus::SideCondition, e.to_string()))?;
        *out = Box::into_raw(Box::new(SpecibtProgram { inner: h.hardened }));
        Ok(())
    })
}

/// Flat MiniMC listing of `p` after `data_len` data cells, and its layout
/// sidecar JSON. `layout_out` may be null.
///
/// `p` must be a live program; `listing_out` valid, `layout_out` valid or null.
#[no_mangle]
pub unsafe extern "C" fn specibt_linearize(
    p: *const SpecibtProgram,
    data_len: usize,
    listing_out: *mut *mut c_char,
    layout_out: *mut *mut c_char,
) -> SpecibtStatus {
    guard(|| {
        let p = prog_arg(p)?;
        let listing_out = out_arg(listing_out, "listing_out")?;
        let mode = if p.contains_ctarget() { WfMode::Hardened } else { WfMode::Source };
        if let Some(v) = wf_program(p, mode).first() {
            return Err(Fail(SpecibtStatus::SideCondition, v.to_string()));
        }
        let mc = linearize(p, data_len);
        *listing_out = owned(mc.listing());
        if let Some(l) = layout_out.as_mut() {
            *l = owned(mc.layout.to_json(p).to_string());
        }
        Ok(())
    })
}

/// Runs `p` from the JSON state under `sem` and writes
/// `{"outcome":..,"steps":..,"trace":[..]}`. `directives_json` may be null for
/// none. The initial flags and reserved registers get the defaults used by the
/// command-line tool.
///
/// `p` must be a live program, the strings valid (or null where allowed) and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn specibt_run(
    p: *const SpecibtProgram,
    sem: SpecibtSemantics,
    state_json: *const c_char,
    directives_json: *const c_char,
    fuel: usize,
    out: *mut *mut c_char,
) -> SpecibtStatus {
    guard(|| {
        let p = prog_arg(p)?;
        let decode = |e: specibt::textio::DecodeError| Fail(SpecibtStatus::DecodeError, e.to_string());
        let s = decode_state(str_arg(state_json, "state_json")?).map_err(decode)?;
        let ds = match opt_str_arg(directives_json, "directives_json")? {
            Some(t) => decode_directives(t).map_err(decode)?,
            None => Vec::new(),
        };
        let out = out_arg(out, "out")?;
        let sem = match sem {
            SpecibtSemantics::Seq => Semantics::Seq,
            SpecibtSemantics::Spec => Semantics::Spec,
            SpecibtSemantics::Ideal => Semantics::Ideal,
            SpecibtSemantics::Mc => Semantics::Mc,
        };
        let s = hardened_defaults(p, &ReservedRegs::default(), s);
        let r = execute(p, sem, s, &ds, fuel, None).map_err(|e| Fail(SpecibtStatus::InvalidArgument, e))?;
        let doc = serde_json::json!({
            "outcome": r.outcome.to_string(),
            "steps": r.steps,
            "trace": trace_to_json(&r.trace),
        });
        *out = owned(doc.to_string());
        Ok(())
    })
}

/// Sets `*related` to whether one JSON trace is a prefix of the other.
///
/// The strings must be valid and `related` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn specibt_trace_cmp(a: *const c_char, b: *const c_char, related: *mut bool) -> SpecibtStatus {
    guard(|| {
        let decode = |e: specibt::textio::DecodeError| Fail(SpecibtStatus::DecodeError, e.to_string());
        let ta = decode_trace(str_arg(a, "a")?).map_err(decode)?;
        let tb = decode_trace(str_arg(b, "b")?).map_err(decode)?;
        *out_arg(related, "related")? = trace_cmp(&ta, &tb);
        Ok(())
    })
}

/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn specibt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn specibt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version with the semantics hash. Static storage.
#[no_mangle]
pub extern "C" fn specibt_version() -> *const c_char {
    static V: OnceLock<CString> = OnceLock::new();
    V.get_or_init(|| CString::new(specibt::cli::VERSION).expect("no NUL")).as_ptr()
}
