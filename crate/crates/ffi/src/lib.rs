//! C ABI over the compiler. Every function returns an [`XgcStatus`];
//! results are written through out-pointers. Handles are opaque and must be
//! released with [`xgc_compilation_free`]. The message of the most recent
//! failure on the calling thread is available from [`xgc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::path::Path;
use std::ptr;

use xgc::compile::{compile, verify, CompileOptions, Compilation, StrategyKind, Verification};
use xgc::ir::import_files;
use xgc::isa::{decode_any, encode_binary, encode_text};
use xgc::sim::{simulate, EngineModel};
use xgc::tiling::HwConfig;
use xgc::{zoo, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XgcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    Infeasible = 4,
    Codegen = 5,
    Decode = 6,
    Io = 7,
    BufferTooSmall = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XgcStrategy {
    None = 0,
    Greedy = 1,
    Optimal = 2,
}

/// Opaque compiled model.
pub struct XgcCompilation {
    inner: Compilation,
    hw: HwConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: XgcStatus, msg: impl Into<String>) -> XgcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    status
}

fn classify(e: &Error) -> XgcStatus {
    match e {
        Error::Phase { source, .. } => classify(source),
        Error::Schema(_)
        | Error::ShapeMismatch { .. }
        | Error::DanglingRef(_)
        | Error::Cycle(_)
        | Error::UnfoldableVertex { .. }
        | Error::UnsupportedTransform { .. }
        | Error::UnsupportedOp { .. }
        | Error::Json(_) => XgcStatus::Schema,
        Error::Infeasible(_) | Error::BufferOverflow { .. } => XgcStatus::Infeasible,
        Error::PlanMiss(_) | Error::OutOfBounds(_) | Error::Deadlock(_) => XgcStatus::Codegen,
        Error::Decode { .. } | Error::Parse { .. } => XgcStatus::Decode,
        Error::Io(_) => XgcStatus::Io,
    }
}

fn from_error(e: Error) -> XgcStatus {
    fail(classify(&e), e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, XgcStatus> {
    if p.is_null() {
        return Err(fail(XgcStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(XgcStatus::InvalidUtf8, "argument is not UTF-8"))
}

fn strategy_kind(s: XgcStrategy) -> StrategyKind {
    match s {
        XgcStrategy::None => StrategyKind::None,
        XgcStrategy::Greedy => StrategyKind::Greedy,
        XgcStrategy::Optimal => StrategyKind::Optimal,
    }
}

fn finish(graph: xgc::Result<xgc::ir::XGraph>, hw: &str, strategy: XgcStrategy, out: *mut *mut XgcCompilation) -> XgcStatus {
    let run = || -> xgc::Result<XgcCompilation> {
        let hw = HwConfig::resolve(hw)?;
        let inner = compile(&graph?, &CompileOptions::new(hw.clone(), strategy_kind(strategy)))?;
        Ok(XgcCompilation { inner, hw })
    };
    match run() {
        Ok(c) => {
            unsafe { *out = Box::into_raw(Box::new(c)) };
            XgcStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Compiles a built-in corpus model such as `"residual"`. `hw` is a preset
/// name or the path of a JSON hardware description.
///
/// # Safety
/// `name` and `hw` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xgc_compile_builtin(
    name: *const c_char,
    hw: *const c_char,
    strategy: XgcStrategy,
    out: *mut *mut XgcCompilation,
) -> XgcStatus {
    if out.is_null() {
        return fail(XgcStatus::NullArgument, "null output handle");
    }
    let (name, hw) = match (str_arg(name), str_arg(hw)) {
        (Ok(n), Ok(h)) => (n, h),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    finish(zoo::by_name(name), hw, strategy, out)
}

/// Compiles a model manifest with its directory of parameter blobs.
///
/// # Safety
/// All strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xgc_compile_files(
    manifest: *const c_char,
    params_dir: *const c_char,
    hw: *const c_char,
    strategy: XgcStrategy,
    out: *mut *mut XgcCompilation,
) -> XgcStatus {
    if out.is_null() {
        return fail(XgcStatus::NullArgument, "null output handle");
    }
    let (m, p, hw) = match (str_arg(manifest), str_arg(params_dir), str_arg(hw)) {
        (Ok(m), Ok(p), Ok(h)) => (m, p, h),
        (Err(s), _, _) | (_, Err(s), _) | (_, _, Err(s)) => return s,
    };
    finish(import_files(Path::new(m), Path::new(p)), hw, strategy, out)
}

/// Releases a compilation. Null is ignored.
///
/// # Safety
/// `c` must come from a compile call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn xgc_compilation_free(c: *mut XgcCompilation) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

unsafe fn handle<'a>(c: *const XgcCompilation) -> Result<&'a XgcCompilation, XgcStatus> {
    c.as_ref().ok_or_else(|| fail(XgcStatus::NullArgument, "null compilation handle"))
}

/// Predicted cycles of the selected strategy and the number of groups.
///
/// # Safety
/// `c` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn xgc_strategy_summary(c: *const XgcCompilation, cycles: *mut u64, groups: *mut usize, fused: *mut usize) -> XgcStatus {
    let c = match handle(c) {
        Ok(c) => c,
        Err(s) => return s,
    };
    if cycles.is_null() || groups.is_null() || fused.is_null() {
        return fail(XgcStatus::NullArgument, "null output pointer");
    }
    let s = &c.inner.strategy;
    *cycles = s.total_cycles;
    *groups = s.groups.len();
    *fused = s.fused_groups().count();
    XgcStatus::Ok
}

/// Number of instructions in the compiled stream.
///
/// # Safety
/// `c` must be a live handle; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xgc_instruction_count(c: *const XgcCompilation, count: *mut usize) -> XgcStatus {
    match (handle(c), count.is_null()) {
        (Ok(c), false) => {
            *count = c.inner.program.stream.len();
            XgcStatus::Ok
        }
        (Err(s), _) => s,
        (_, true) => fail(XgcStatus::NullArgument, "null output pointer"),
    }
}

unsafe fn copy_out(bytes: &[u8], buf: *mut u8, cap: usize, len: *mut usize) -> XgcStatus {
    if len.is_null() {
        return fail(XgcStatus::NullArgument, "null length pointer");
    }
    *len = bytes.len();
    if buf.is_null() || cap < bytes.len() {
        return fail(XgcStatus::BufferTooSmall, format!("need {} bytes", bytes.len()));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
    XgcStatus::Ok
}

/// Writes the binary instruction stream. With a null or short buffer the
/// required size is stored in `len` and `XGC_STATUS_BUFFER_TOO_SMALL` is
/// returned.
///
/// # Safety
/// `buf` must have room for `cap` bytes; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xgc_emit_binary(c: *const XgcCompilation, buf: *mut u8, cap: usize, len: *mut usize) -> XgcStatus {
    let c = match handle(c) {
        Ok(c) => c,
        Err(s) => return s,
    };
    match encode_binary(&c.inner.program.stream) {
        Ok(bytes) => copy_out(&bytes, buf, cap, len),
        Err(e) => from_error(e),
    }
}

/// Writes the text assembly, without a trailing NUL, using the same size
/// protocol as [`xgc_emit_binary`].
///
/// # Safety
/// As for [`xgc_emit_binary`].
#[no_mangle]
pub unsafe extern "C" fn xgc_emit_text(c: *const XgcCompilation, buf: *mut u8, cap: usize, len: *mut usize) -> XgcStatus {
    match handle(c) {
        Ok(c) => copy_out(encode_text(&c.inner.program.stream).as_bytes(), buf, cap, len),
        Err(s) => s,
    }
}

/// Runs the stream executor against the graph interpreter. `passed` is set
/// to 1 on a byte-exact match; otherwise 0 with the first differing offset.
///
/// # Safety
/// `c` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn xgc_verify(c: *const XgcCompilation, passed: *mut i32, offset: *mut usize) -> XgcStatus {
    let c = match handle(c) {
        Ok(c) => c,
        Err(s) => return s,
    };
    if passed.is_null() || offset.is_null() {
        return fail(XgcStatus::NullArgument, "null output pointer");
    }
    match verify(&c.inner.graph, &c.inner.program, &c.inner.qm, &c.hw) {
        Ok(Verification::Pass) => {
            *passed = 1;
            *offset = 0;
            XgcStatus::Ok
        }
        Ok(Verification::Mismatch { offset: o, .. }) => {
            *passed = 0;
            *offset = o;
            XgcStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Decodes an instruction artifact (binary or text) and simulates it.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `hw` must be NUL-terminated;
/// `cycles` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xgc_simulate(bytes: *const u8, len: usize, hw: *const c_char, cycles: *mut u64) -> XgcStatus {
    if bytes.is_null() || cycles.is_null() {
        return fail(XgcStatus::NullArgument, "null argument");
    }
    let hw = match str_arg(hw) {
        Ok(h) => h,
        Err(s) => return s,
    };
    let data = std::slice::from_raw_parts(bytes, len);
    let run = || -> xgc::Result<u64> {
        let hw = HwConfig::resolve(hw)?;
        let stream = decode_any(data)?;
        Ok(simulate(&stream, &EngineModel::from_hw(&hw))?.total_cycles)
    };
    match run() {
        Ok(c) => {
            *cycles = c;
            XgcStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Copies the last error message of this thread, NUL-terminated and
/// truncated to `cap` bytes. Returns the full message length.
///
/// # Safety
/// `buf` must have room for `cap` bytes, or be null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn xgc_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xgc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
