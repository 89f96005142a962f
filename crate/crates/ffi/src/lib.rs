//! C ABI over the `xmlprompt` library.
//!
//! Every function returns an [`XpStatus`]. On anything other than
//! `XP_STATUS_OK` or `XP_STATUS_REJECTED` a message is stored for the calling
//! thread and can be read with [`xp_last_error_message`].
//!
//! Objects are opaque handles created by `*_new`/`*_parse`/`*_compile`
//! functions and released with the matching `*_free`. Strings returned
//! through `char **` out-parameters are owned by the caller and must be
//! released with [`xp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use xmlprompt::grammar::{compile_ebnf, token_mask, Grammar, Vocabulary};
use xmlprompt::invariant::{check, parse_invariants, Invariant};
use xmlprompt::metric::{distance, MetricConfig};
use xmlprompt::protocol::spec::{load, Execution, Overrides};
use xmlprompt::protocol::transcript::{
    failure_report, iteration_report, run_report, write_snapshots,
};
use xmlprompt::protocol::RunStatus;
use xmlprompt::tree::{join, meet, parse_document, refines, serialize_partial, XmlTree};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XpStatus {
    Ok = 0,
    /// The call worked and the answer is "no": a document the grammar
    /// rejects, a failing invariant, a run without an answer.
    Rejected = 1,
    NullPointer = 2,
    InvalidUtf8 = 3,
    /// A grammar, vocabulary, document, formula or spec failed to parse.
    ParseError = 4,
    InvalidArgument = 5,
    Io = 6,
    Panic = 7,
}

/// A compiled grammar.
pub struct XpGrammar {
    inner: Arc<Grammar>,
}

/// An ordered token vocabulary.
pub struct XpVocabulary {
    inner: Vocabulary,
}

/// A prompt tree.
pub struct XpTree {
    inner: XmlTree,
}

/// A list of named invariants.
pub struct XpInvariants {
    inner: Vec<Invariant>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(XpStatus);

fn fail(status: XpStatus, msg: impl Into<String>) -> Fail {
    set_error(msg);
    Fail(status)
}

/// Runs `f`, turning failures and panics into status codes.
fn guard(f: impl FnOnce() -> Result<XpStatus, Fail>) -> XpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail(s))) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            XpStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(XpStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(XpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| fail(XpStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| fail(XpStatus::NullPointer, format!("{what} is null")))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn xp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn xp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn xp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Compiles EBNF grammar source.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xp_grammar_compile(
    source: *const c_char,
    out_grammar: *mut *mut XpGrammar,
) -> XpStatus {
    guard(|| {
        let slot = out(out_grammar, "out_grammar")?;
        *slot = ptr::null_mut();
        let g = compile_ebnf(text(source, "source")?)
            .map_err(|e| fail(XpStatus::ParseError, e.to_string()))?;
        *slot = boxed(XpGrammar { inner: g });
        Ok(XpStatus::Ok)
    })
}

/// Same grammar with another start rule.
///
/// # Safety
/// `grammar` must be a live handle, `rule` a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xp_grammar_with_start(
    grammar: *const XpGrammar,
    rule: *const c_char,
    out_grammar: *mut *mut XpGrammar,
) -> XpStatus {
    guard(|| {
        let slot = out(out_grammar, "out_grammar")?;
        *slot = ptr::null_mut();
        let g = obj(grammar, "grammar")?;
        let inner = g
            .inner
            .with_start(text(rule, "rule")?)
            .map_err(|e| fail(XpStatus::InvalidArgument, e.to_string()))?;
        *slot = boxed(XpGrammar { inner });
        Ok(XpStatus::Ok)
    })
}

/// # Safety
/// `grammar` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn xp_grammar_free(grammar: *mut XpGrammar) {
    free(grammar)
}

/// `XP_STATUS_OK` if the grammar accepts `document`, `XP_STATUS_REJECTED`
/// otherwise. `out_dead_offset`, when not NULL, receives the byte offset of
/// the first character that leaves the viable prefixes, or -1.
///
/// # Safety
/// `grammar` must be a live handle and `document` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn xp_grammar_validate(
    grammar: *const XpGrammar,
    document: *const c_char,
    out_dead_offset: *mut i64,
) -> XpStatus {
    guard(|| {
        let g = &obj(grammar, "grammar")?.inner;
        let doc = text(document, "document")?;
        let accepted = g.accepts(doc);
        if let Some(slot) = out_dead_offset.as_mut() {
            *slot = g.first_dead_offset(doc).map_or(-1, |o| o as i64);
        }
        Ok(if accepted {
            XpStatus::Ok
        } else {
            XpStatus::Rejected
        })
    })
}

/// Parses a vocabulary file: one token per line, `\n`, `\t`, `\\` escapes.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xp_vocabulary_parse(
    source: *const c_char,
    out_vocab: *mut *mut XpVocabulary,
) -> XpStatus {
    guard(|| {
        let slot = out(out_vocab, "out_vocab")?;
        *slot = ptr::null_mut();
        let v = Vocabulary::parse(text(source, "source")?)
            .map_err(|e| fail(XpStatus::ParseError, e.to_string()))?;
        *slot = boxed(XpVocabulary { inner: v });
        Ok(XpStatus::Ok)
    })
}

/// # Safety
/// `vocab` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn xp_vocabulary_len(vocab: *const XpVocabulary) -> usize {
    vocab.as_ref().map_or(0, |v| v.inner.len())
}

/// # Safety
/// `vocab` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn xp_vocabulary_free(vocab: *mut XpVocabulary) {
    free(vocab)
}

/// Writes the token mask after `prefix` into `out_allowed`, one byte per
/// token (1 allowed, 0 masked). `len` must equal the vocabulary size.
/// Returns `XP_STATUS_REJECTED` when the prefix is not viable.
///
/// # Safety
/// Handles must be live, `prefix` NUL-terminated and `out_allowed` writable
/// for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn xp_token_mask(
    grammar: *const XpGrammar,
    vocab: *const XpVocabulary,
    prefix: *const c_char,
    out_allowed: *mut u8,
    len: usize,
) -> XpStatus {
    guard(|| {
        let g = &obj(grammar, "grammar")?.inner;
        let v = &obj(vocab, "vocab")?.inner;
        let prefix = text(prefix, "prefix")?;
        if len != v.len() {
            return Err(fail(
                XpStatus::InvalidArgument,
                format!("buffer holds {len} entries, vocabulary has {}", v.len()),
            ));
        }
        if len > 0 && out_allowed.is_null() {
            return Err(fail(XpStatus::NullPointer, "out_allowed is null"));
        }
        let state = g
            .initial_state()
            .map_err(|e| fail(XpStatus::InvalidArgument, e.to_string()))?
            .advance(prefix);
        if !state.is_viable() {
            set_error("non-viable prefix");
            return Ok(XpStatus::Rejected);
        }
        let m =
            token_mask(&state, v).map_err(|e| fail(XpStatus::InvalidArgument, e.to_string()))?;
        if len > 0 {
            let buf = std::slice::from_raw_parts_mut(out_allowed, len);
            for (i, b) in buf.iter_mut().enumerate() {
                *b = u8::from(m.is_allowed(i));
            }
        }
        Ok(XpStatus::Ok)
    })
}

/// Parses an XML document into a tree.
///
/// # Safety
/// `xml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xp_tree_parse(xml: *const c_char, out_tree: *mut *mut XpTree) -> XpStatus {
    guard(|| {
        let slot = out(out_tree, "out_tree")?;
        *slot = ptr::null_mut();
        let t = parse_document(text(xml, "xml")?)
            .map_err(|e| fail(XpStatus::ParseError, e.to_string()))?;
        *slot = boxed(XpTree { inner: t });
        Ok(XpStatus::Ok)
    })
}

/// # Safety
/// `tree` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn xp_tree_free(tree: *mut XpTree) {
    free(tree)
}

/// Number of nodes.
///
/// # Safety
/// `tree` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn xp_tree_len(tree: *const XpTree) -> usize {
    tree.as_ref().map_or(0, |t| t.inner.len())
}

/// Serializes a tree; holes and patterns use the placeholder syntax.
///
/// # Safety
/// `tree` must be a live handle; `out_xml` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xp_tree_serialize(
    tree: *const XpTree,
    out_xml: *mut *mut c_char,
) -> XpStatus {
    guard(|| {
        let slot = out(out_xml, "out_xml")?;
        *slot = ptr::null_mut();
        let s = serialize_partial(&obj(tree, "tree")?.inner)
            .map_err(|e| fail(XpStatus::InvalidArgument, e.to_string()))?;
        *slot = c_string(s);
        Ok(XpStatus::Ok)
    })
}

/// `XP_STATUS_OK` if `a` refines into `b`, `XP_STATUS_REJECTED` otherwise.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn xp_tree_refines(a: *const XpTree, b: *const XpTree) -> XpStatus {
    guard(|| {
        let holds = refines(&obj(a, "a")?.inner, &obj(b, "b")?.inner);
        Ok(if holds {
            XpStatus::Ok
        } else {
            XpStatus::Rejected
        })
    })
}

/// Greatest lower bound of two trees.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xp_tree_meet(
    a: *const XpTree,
    b: *const XpTree,
    out_tree: *mut *mut XpTree,
) -> XpStatus {
    binary(a, b, out_tree, meet)
}

/// Least upper bound of two trees.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xp_tree_join(
    a: *const XpTree,
    b: *const XpTree,
    out_tree: *mut *mut XpTree,
) -> XpStatus {
    binary(a, b, out_tree, join)
}

unsafe fn binary(
    a: *const XpTree,
    b: *const XpTree,
    out_tree: *mut *mut XpTree,
    op: fn(&[XmlTree]) -> XmlTree,
) -> XpStatus {
    guard(|| {
        let slot = out(out_tree, "out_tree")?;
        *slot = ptr::null_mut();
        let pair = [obj(a, "a")?.inner.clone(), obj(b, "b")?.inner.clone()];
        *slot = boxed(XpTree { inner: op(&pair) });
        Ok(XpStatus::Ok)
    })
}

/// Distance under the default metric.
///
/// # Safety
/// Both handles must be live; `out_distance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xp_tree_distance(
    a: *const XpTree,
    b: *const XpTree,
    out_distance: *mut f64,
) -> XpStatus {
    guard(|| {
        let slot = out(out_distance, "out_distance")?;
        let d = distance(
            &obj(a, "a")?.inner,
            &obj(b, "b")?.inner,
            &MetricConfig::default(),
        )
        .map_err(|e| fail(XpStatus::InvalidArgument, e.to_string()))?;
        *slot = d;
        Ok(XpStatus::Ok)
    })
}

/// Parses an invariant file (named `[stanzas]` of formulas).
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xp_invariants_parse(
    source: *const c_char,
    out_set: *mut *mut XpInvariants,
) -> XpStatus {
    guard(|| {
        let slot = out(out_set, "out_set")?;
        *slot = ptr::null_mut();
        let inv = parse_invariants(text(source, "source")?)
            .map_err(|e| fail(XpStatus::ParseError, e.to_string()))?;
        *slot = boxed(XpInvariants { inner: inv });
        Ok(XpStatus::Ok)
    })
}

/// # Safety
/// `set` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn xp_invariants_free(set: *mut XpInvariants) {
    free(set)
}

/// Checks every invariant. `out_report`, when not NULL, receives
/// `invariant=NAME holds=BOOL [violation=PATH]` lines.
///
/// # Safety
/// Handles must be live; `out_report` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn xp_invariants_check(
    set: *const XpInvariants,
    tree: *const XpTree,
    out_report: *mut *mut c_char,
) -> XpStatus {
    guard(|| {
        let set = &obj(set, "set")?.inner;
        let t = &obj(tree, "tree")?.inner;
        let mut report = String::new();
        let mut ok = true;
        for inv in set {
            let r = check(inv, t);
            ok &= r.holds;
            report.push_str(&format!("invariant={} holds={}", inv.name, r.holds));
            if let Some(p) = r.violation {
                report.push_str(&format!(" violation={p}"));
            }
            report.push('\n');
        }
        if let Some(slot) = out_report.as_mut() {
            *slot = c_string(report);
        }
        Ok(if ok { XpStatus::Ok } else { XpStatus::Rejected })
    })
}

/// Runs a protocol or hole-filler spec file. When `out_dir` is not NULL
/// the snapshots and `report.txt` are written there. `out_report`, when
/// not NULL, receives the run report.
///
/// # Safety
/// `spec_path` must be NUL-terminated; `out_dir` NULL or NUL-terminated;
/// `out_report` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn xp_run_spec(
    spec_path: *const c_char,
    out_dir: *const c_char,
    out_report: *mut *mut c_char,
) -> XpStatus {
    guard(|| {
        let path = text(spec_path, "spec_path")?;
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(text(out_dir, "out_dir")?)
        };
        let mut runnable = load(Path::new(path), &Overrides::default())
            .map_err(|e| fail(XpStatus::ParseError, e.to_string()))?;
        let kind = runnable.kind_name();
        let (report, snapshots, ok) = match runnable.execute() {
            Execution::Protocol(Ok(run)) => (
                run_report(kind, &run),
                run.snapshots().to_vec(),
                run.status == RunStatus::Answered,
            ),
            Execution::Protocol(Err(f)) => {
                set_error(f.error.to_string());
                (failure_report(kind, &f), f.snapshots, false)
            }
            Execution::Iteration(Ok(r)) => {
                let ok = r.fixed_point.is_some();
                (iteration_report(kind, &r), r.iterates, ok)
            }
            Execution::Iteration(Err(e)) => {
                set_error(e.to_string());
                (
                    format!("kind={kind}\nstatus=error\nerror={e}\n# summary\nresult=error\n"),
                    Vec::new(),
                    false,
                )
            }
        };
        if let Some(d) = dir {
            let d = Path::new(d);
            write_snapshots(d, &snapshots).map_err(|e| fail(XpStatus::Io, e.to_string()))?;
            std::fs::write(d.join("report.txt"), &report)
                .map_err(|e| fail(XpStatus::Io, e.to_string()))?;
        }
        if let Some(slot) = out_report.as_mut() {
            *slot = c_string(report);
        }
        Ok(if ok { XpStatus::Ok } else { XpStatus::Rejected })
    })
}
