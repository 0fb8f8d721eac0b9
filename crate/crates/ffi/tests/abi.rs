use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use xgc_ffi::*;

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn compile(name: &str, s: XgcStrategy) -> *mut XgcCompilation {
    let mut h = ptr::null_mut();
    let st = unsafe { xgc_compile_builtin(cs(name).as_ptr(), cs("zu2").as_ptr(), s, &mut h) };
    assert_eq!(st, XgcStatus::Ok);
    h
}

#[test]
fn compile_emit_verify_roundtrip() {
    let h = compile("inception", XgcStrategy::Optimal);
    unsafe {
        let mut len = 0usize;
        assert_eq!(xgc_emit_binary(h, ptr::null_mut(), 0, &mut len), XgcStatus::BufferTooSmall);
        let mut buf = vec![0u8; len];
        assert_eq!(xgc_emit_binary(h, buf.as_mut_ptr(), buf.len(), &mut len), XgcStatus::Ok);
        let mut n = 0usize;
        assert_eq!(xgc_instruction_count(h, &mut n), XgcStatus::Ok);
        assert_eq!(xgc::isa::decode_binary(&buf).unwrap().len(), n);

        let mut cycles = 0u64;
        assert_eq!(xgc_simulate(buf.as_ptr(), buf.len(), cs("zu2").as_ptr(), &mut cycles), XgcStatus::Ok);
        assert!(cycles > 0);

        let (mut pc, mut groups, mut fused) = (0u64, 0usize, 0usize);
        assert_eq!(xgc_strategy_summary(h, &mut pc, &mut groups, &mut fused), XgcStatus::Ok);
        assert!(fused > 0 && groups > fused);

        let (mut passed, mut off) = (0i32, 0usize);
        assert_eq!(xgc_verify(h, &mut passed, &mut off), XgcStatus::Ok);
        assert_eq!(passed, 1);

        let mut tlen = 0usize;
        xgc_emit_text(h, ptr::null_mut(), 0, &mut tlen);
        let mut text = vec![0u8; tlen];
        assert_eq!(xgc_emit_text(h, text.as_mut_ptr(), tlen, &mut tlen), XgcStatus::Ok);
        assert!(String::from_utf8(text).unwrap().starts_with("00000 MISC"));
        xgc_compilation_free(h);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut h = ptr::null_mut();
        let st = xgc_compile_builtin(cs("missing").as_ptr(), cs("zu2").as_ptr(), XgcStrategy::None, &mut h);
        assert_eq!(st, XgcStatus::Schema);
        assert!(h.is_null());
        let mut msg = [0 as std::ffi::c_char; 128];
        let n = xgc_last_error(msg.as_mut_ptr(), msg.len());
        assert!(n > 0);
        assert!(CStr::from_ptr(msg.as_ptr()).to_str().unwrap().contains("missing"));

        assert_eq!(xgc_compile_builtin(ptr::null(), cs("zu2").as_ptr(), XgcStrategy::None, &mut h), XgcStatus::NullArgument);
        let mut cycles = 0;
        let junk = [0xffu8, 3, 1, 2];
        assert_eq!(xgc_simulate(junk.as_ptr(), junk.len(), cs("zu2").as_ptr(), &mut cycles), XgcStatus::Decode);
        xgc_compilation_free(ptr::null_mut());
        assert!(!CStr::from_ptr(xgc_version()).to_str().unwrap().is_empty());
    }
}

#[test]
fn files_entry_point_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let g = xgc::zoo::residual().unwrap();
    std::fs::create_dir_all(dir.path().join("p")).unwrap();
    std::fs::write(dir.path().join("m.json"), serde_json_string(&g)).unwrap();
    xgc::ir::save_blob_store(&dir.path().join("p"), &g.params).unwrap();
    let mut h = ptr::null_mut();
    let m = cs(dir.path().join("m.json").to_str().unwrap());
    let p = cs(dir.path().join("p").to_str().unwrap());
    let st = unsafe { xgc_compile_files(m.as_ptr(), p.as_ptr(), cs("zu2").as_ptr(), XgcStrategy::Greedy, &mut h) };
    assert_eq!(st, XgcStatus::Ok);
    let b = compile("residual", XgcStrategy::Greedy);
    let (mut l1, mut l2) = (0, 0);
    unsafe {
        xgc_instruction_count(h, &mut l1);
        xgc_instruction_count(b, &mut l2);
        xgc_compilation_free(h);
        xgc_compilation_free(b);
    }
    assert_eq!(l1, l2);
}

fn serde_json_string(g: &xgc::ir::XGraph) -> String {
    let m = xgc::ir::to_manifest(g);
    format!("{}", serde_json::to_value(m).unwrap())
}

/// Builds and runs the C smoke program against the static library and the
/// generated header.
#[test]
fn c_program_links_against_header() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let target = exe.parent().unwrap().parent().unwrap();
    let lib = target.join("libxgc_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: static library or C compiler unavailable");
        return;
    }
    let out = tempfile::tempdir().unwrap().keep().join("smoke");
    let st = Command::new("cc")
        .arg(crate_dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
