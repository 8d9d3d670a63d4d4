//! C ABI for mqttprobe.
//!
//! Every fallible function returns an [`MqttprobeStatus`]; on failure
//! [`mqttprobe_last_error`] describes what went wrong on the calling thread.
//! Handles are opaque and must be released with their `_free` function.
//! Strings and byte buffers handed out by the library are released with
//! [`mqttprobe_string_free`] and [`mqttprobe_bytes_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use mqttprobe::codec::{decode_packet, encode_packet, DecodeMode, Packet};
use mqttprobe::experiment::{builtin_corpus, parse_experiment, render_experiment, Experiment};
use mqttprobe::oracle::{diff_profiles, documented_profile, evaluate_trace, AnomalyCode, ScenarioOutcome, Severity};
use mqttprobe::refbroker::Broker;
use mqttprobe::runner::{run_experiment, Endpoint, Outcome, Trace};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqttprobeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    NotFound = 4,
    Io = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqttprobeOutcome {
    Completed = 0,
    AbortedByPeer = 1,
    RunnerError = 2,
}

/// `None` stands for "no anomalies".
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqttprobeSeverity {
    None = -1,
    Info = 0,
    Warning = 1,
    Dos = 2,
    Critical = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqttprobeAnomaly {
    LostMessage = 0,
    DuplicateDelivery = 1,
    ReorderedDelivery = 2,
    AckBeforePrerequisite = 3,
    LateCompletion = 4,
    TopicTruncation = 5,
    UnexpectedDisconnect = 6,
    ProtocolViolationTolerated = 7,
    OrphanPubrelRejected = 8,
    BrokerCrash = 9,
    IdReuseMishandled = 10,
}

impl From<AnomalyCode> for MqttprobeAnomaly {
    fn from(c: AnomalyCode) -> Self {
        use MqttprobeAnomaly as A;
        match c {
            AnomalyCode::LostMessage => A::LostMessage,
            AnomalyCode::DuplicateDelivery => A::DuplicateDelivery,
            AnomalyCode::ReorderedDelivery => A::ReorderedDelivery,
            AnomalyCode::AckBeforePrerequisite => A::AckBeforePrerequisite,
            AnomalyCode::LateCompletion => A::LateCompletion,
            AnomalyCode::TopicTruncation => A::TopicTruncation,
            AnomalyCode::UnexpectedDisconnect => A::UnexpectedDisconnect,
            AnomalyCode::ProtocolViolationTolerated => A::ProtocolViolationTolerated,
            AnomalyCode::OrphanPubrelRejected => A::OrphanPubrelRejected,
            AnomalyCode::BrokerCrash => A::BrokerCrash,
            AnomalyCode::IdReuseMishandled => A::IdReuseMishandled,
        }
    }
}

impl From<Option<Severity>> for MqttprobeSeverity {
    fn from(s: Option<Severity>) -> Self {
        match s {
            None => MqttprobeSeverity::None,
            Some(Severity::Info) => MqttprobeSeverity::Info,
            Some(Severity::Warning) => MqttprobeSeverity::Warning,
            Some(Severity::DoS) => MqttprobeSeverity::Dos,
            Some(Severity::Critical) => MqttprobeSeverity::Critical,
        }
    }
}

/// A parsed experiment.
pub struct MqttprobeExperiment {
    inner: Experiment,
    name: CString,
}

/// A running reference broker.
pub struct MqttprobeBroker {
    inner: Broker,
}

/// The recorded trace of one experiment run.
pub struct MqttprobeTrace {
    inner: Trace,
}

/// Oracle verdict on one trace.
pub struct MqttprobeEvaluation {
    inner: ScenarioOutcome,
}

struct Failure(MqttprobeStatus, String);

type FfiResult<T> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> MqttprobeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MqttprobeStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            MqttprobeStatus::Internal
        }
    }
}

fn fail<T>(status: MqttprobeStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(MqttprobeStatus::NullArgument, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(MqttprobeStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .map_or_else(|| fail(MqttprobeStatus::NullArgument, format!("{what} is null")), Ok)
}

fn out_arg<T>(p: *mut T, what: &str) -> FfiResult<*mut T> {
    if p.is_null() {
        fail(MqttprobeStatus::NullArgument, format!("{what} is null"))
    } else {
        Ok(p)
    }
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', "\\0")).unwrap_or_default().into_raw()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn mqttprobe_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn mqttprobe_version() -> *const c_char {
    static V: OnceLock<CString> = OnceLock::new();
    V.get_or_init(|| CString::new(env!("CARGO_PKG_VERSION")).unwrap()).as_ptr()
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `p`/`len` must be NULL/0 or a buffer returned by this library.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_bytes_free(p: *mut u8, len: usize) {
    if !p.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(p, len)));
    }
}

// ---- experiments

/// Number of builtin experiments.
#[no_mangle]
pub extern "C" fn mqttprobe_corpus_len() -> usize {
    mqttprobe::experiment::CORPUS_NAMES.len()
}

/// Name of builtin experiment `index`, a static string, or NULL when out of range.
#[no_mangle]
pub extern "C" fn mqttprobe_corpus_name(index: usize) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        mqttprobe::experiment::CORPUS_NAMES
            .iter()
            .map(|n| CString::new(*n).unwrap())
            .collect()
    });
    names.get(index).map_or(ptr::null(), |c| c.as_ptr())
}

fn experiment_handle(inner: Experiment) -> *mut MqttprobeExperiment {
    let name = CString::new(inner.name.replace('\0', "\\0")).unwrap_or_default();
    Box::into_raw(Box::new(MqttprobeExperiment { inner, name }))
}

/// Parse an experiment from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_experiment_parse(
    json: *const c_char,
    out: *mut *mut MqttprobeExperiment,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(json, "json")?;
        let e = parse_experiment(text).or_else(|e| fail(MqttprobeStatus::InvalidInput, e.to_string()))?;
        *out = experiment_handle(e);
        Ok(())
    })
}

/// Look up a builtin experiment by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_experiment_builtin(
    name: *const c_char,
    out: *mut *mut MqttprobeExperiment,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let name = str_arg(name, "name")?;
        let e = builtin_corpus()
            .into_iter()
            .find(|e| e.name == name)
            .map_or_else(|| fail(MqttprobeStatus::NotFound, format!("no builtin experiment {name:?}")), Ok)?;
        *out = experiment_handle(e);
        Ok(())
    })
}

/// The experiment's name, owned by the handle.
///
/// # Safety
/// `experiment` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_experiment_name(experiment: *const MqttprobeExperiment) -> *const c_char {
    experiment.as_ref().map_or(ptr::null(), |e| e.name.as_ptr())
}

/// Override the settle window.
///
/// # Safety
/// `experiment` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_experiment_set_settle_ms(
    experiment: *mut MqttprobeExperiment,
    settle_ms: u64,
) -> MqttprobeStatus {
    guard(|| {
        let e = experiment
            .as_mut()
            .map_or_else(|| fail(MqttprobeStatus::NullArgument, "experiment is null"), Ok)?;
        e.inner.settle_ms = settle_ms;
        Ok(())
    })
}

/// Canonical JSON for the experiment; free with `mqttprobe_string_free`.
///
/// # Safety
/// `experiment` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_experiment_to_json(
    experiment: *const MqttprobeExperiment,
    out: *mut *mut c_char,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let e = ref_arg(experiment, "experiment")?;
        *out = owned_string(render_experiment(&e.inner));
        Ok(())
    })
}

/// # Safety
/// `experiment` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_experiment_free(experiment: *mut MqttprobeExperiment) {
    if !experiment.is_null() {
        drop(Box::from_raw(experiment));
    }
}

// ---- broker

/// Start the reference broker. Port 0 picks a free port; `loopback_only`
/// nonzero binds 127.0.0.1 instead of all interfaces.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_broker_start(
    port: u16,
    loopback_only: i32,
    out: *mut *mut MqttprobeBroker,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ip = if loopback_only != 0 { [127, 0, 0, 1] } else { [0, 0, 0, 0] };
        let broker =
            Broker::start(SocketAddr::from((ip, port))).or_else(|e| fail(MqttprobeStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(MqttprobeBroker { inner: broker }));
        Ok(())
    })
}

/// Port the broker listens on, 0 for NULL.
///
/// # Safety
/// `broker` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_broker_port(broker: *const MqttprobeBroker) -> u16 {
    broker.as_ref().map_or(0, |b| b.inner.port())
}

/// Stop the broker and release the handle.
///
/// # Safety
/// `broker` must be NULL or a handle not yet stopped.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_broker_stop(broker: *mut MqttprobeBroker) {
    if !broker.is_null() {
        let b = Box::from_raw(broker);
        let _ = catch_unwind(AssertUnwindSafe(|| b.inner.stop()));
    }
}

// ---- runner

/// Run `experiment` against `target` (`host[:port]`). A run that could not
/// reach the broker still yields a trace, with outcome `RUNNER_ERROR`.
///
/// # Safety
/// `experiment` must be a live handle, `target` a NUL-terminated string,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_run(
    experiment: *const MqttprobeExperiment,
    target: *const c_char,
    out: *mut *mut MqttprobeTrace,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let e = ref_arg(experiment, "experiment")?;
        let target = str_arg(target, "target")?;
        let ep = Endpoint::parse(target).or_else(|e| fail(MqttprobeStatus::InvalidInput, e.to_string()))?;
        let trace = run_experiment(&e.inner, &ep);
        *out = Box::into_raw(Box::new(MqttprobeTrace { inner: trace }));
        Ok(())
    })
}

/// Read a trace from its JSONL form.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_trace_parse(jsonl: *const c_char, out: *mut *mut MqttprobeTrace) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(jsonl, "jsonl")?;
        let trace = Trace::from_jsonl(text).or_else(|e| fail(MqttprobeStatus::InvalidInput, e.to_string()))?;
        *out = Box::into_raw(Box::new(MqttprobeTrace { inner: trace }));
        Ok(())
    })
}

/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_trace_outcome(trace: *const MqttprobeTrace) -> MqttprobeOutcome {
    match trace.as_ref().map(|t| &t.inner.outcome) {
        Some(Outcome::Completed) => MqttprobeOutcome::Completed,
        Some(Outcome::AbortedByPeer) => MqttprobeOutcome::AbortedByPeer,
        Some(Outcome::RunnerError { .. }) | None => MqttprobeOutcome::RunnerError,
    }
}

/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_trace_event_count(trace: *const MqttprobeTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.events.len())
}

/// JSONL form of the trace; free with `mqttprobe_string_free`.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_trace_to_jsonl(trace: *const MqttprobeTrace, out: *mut *mut c_char) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let t = ref_arg(trace, "trace")?;
        *out = owned_string(t.inner.to_jsonl());
        Ok(())
    })
}

/// # Safety
/// `trace` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_trace_free(trace: *mut MqttprobeTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

// ---- oracle

/// Evaluate a trace of `experiment`.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_evaluate(
    experiment: *const MqttprobeExperiment,
    trace: *const MqttprobeTrace,
    out: *mut *mut MqttprobeEvaluation,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let e = ref_arg(experiment, "experiment")?;
        let t = ref_arg(trace, "trace")?;
        let outcome =
            evaluate_trace(&e.inner, &t.inner).or_else(|e| fail(MqttprobeStatus::InvalidInput, e.to_string()))?;
        *out = Box::into_raw(Box::new(MqttprobeEvaluation { inner: outcome }));
        Ok(())
    })
}

/// # Safety
/// `evaluation` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_evaluation_anomaly_count(evaluation: *const MqttprobeEvaluation) -> usize {
    evaluation.as_ref().map_or(0, |e| e.inner.anomalies.len())
}

/// # Safety
/// `evaluation` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_evaluation_anomaly(
    evaluation: *const MqttprobeEvaluation,
    index: usize,
    out: *mut MqttprobeAnomaly,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let e = ref_arg(evaluation, "evaluation")?;
        let a = e.inner.anomalies.get(index).map_or_else(
            || fail(MqttprobeStatus::NotFound, format!("no anomaly at index {index}")),
            Ok,
        )?;
        *out = a.code.into();
        Ok(())
    })
}

/// Highest severity found, `MQTTPROBE_SEVERITY_NONE` when clean.
///
/// # Safety
/// `evaluation` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_evaluation_max_severity(evaluation: *const MqttprobeEvaluation) -> MqttprobeSeverity {
    evaluation.as_ref().map_or(MqttprobeSeverity::None, |e| e.inner.max_severity().into())
}

/// Number of messages delivered to subscribers during the run.
///
/// # Safety
/// `evaluation` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_evaluation_delivered(evaluation: *const MqttprobeEvaluation) -> usize {
    evaluation.as_ref().map_or(0, |e| e.inner.delivered.len())
}

/// Full verdict as JSON; free with `mqttprobe_string_free`.
///
/// # Safety
/// `evaluation` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_evaluation_to_json(
    evaluation: *const MqttprobeEvaluation,
    out: *mut *mut c_char,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let e = ref_arg(evaluation, "evaluation")?;
        let json = serde_json::to_string(&e.inner).or_else(|e| fail(MqttprobeStatus::Internal, e.to_string()))?;
        *out = owned_string(json);
        Ok(())
    })
}

/// # Safety
/// `evaluation` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_evaluation_free(evaluation: *mut MqttprobeEvaluation) {
    if !evaluation.is_null() {
        drop(Box::from_raw(evaluation));
    }
}

/// Divergences between two documented broker profiles as a JSON array.
///
/// # Safety
/// `a` and `b` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_diff_documented(
    a: *const c_char,
    b: *const c_char,
    out: *mut *mut c_char,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let lookup = |label: &str| {
            documented_profile(label)
                .map_or_else(|| fail(MqttprobeStatus::NotFound, format!("no documented profile {label:?}")), Ok)
        };
        let pa = lookup(str_arg(a, "a")?)?;
        let pb = lookup(str_arg(b, "b")?)?;
        let d = diff_profiles(&pa, &pb).or_else(|e| fail(MqttprobeStatus::InvalidInput, e.to_string()))?;
        let json = serde_json::to_string(&d).or_else(|e| fail(MqttprobeStatus::Internal, e.to_string()))?;
        *out = owned_string(json);
        Ok(())
    })
}

// ---- codec

/// Decode the frame at the start of `buf` to packet JSON. `strict` nonzero
/// rejects protocol violations. `consumed` receives the frame length.
///
/// # Safety
/// `buf` must point to `len` readable bytes; `consumed` and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_decode(
    buf: *const u8,
    len: usize,
    strict: i32,
    consumed: *mut usize,
    out: *mut *mut c_char,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let consumed = out_arg(consumed, "consumed")?;
        if buf.is_null() && len > 0 {
            return fail(MqttprobeStatus::NullArgument, "buf is null");
        }
        let bytes = if len == 0 { &[][..] } else { std::slice::from_raw_parts(buf, len) };
        let mode = if strict != 0 { DecodeMode::Strict } else { DecodeMode::Permissive };
        let d = decode_packet(bytes, mode).or_else(|e| fail(MqttprobeStatus::InvalidInput, e.to_string()))?;
        let annotations: Vec<String> = d.annotations.iter().map(|v| v.to_string()).collect();
        let json = serde_json::json!({ "packet": d.packet, "annotations": annotations });
        *consumed = d.consumed;
        *out = owned_string(json.to_string());
        Ok(())
    })
}

/// Encode packet JSON (as produced by `mqttprobe_decode`'s `packet` field) to
/// wire bytes; free with `mqttprobe_bytes_free`.
///
/// # Safety
/// `packet_json` must be a NUL-terminated string; `out` and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mqttprobe_encode(
    packet_json: *const c_char,
    out: *mut *mut u8,
    out_len: *mut usize,
) -> MqttprobeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let out_len = out_arg(out_len, "out_len")?;
        let text = str_arg(packet_json, "packet_json")?;
        let packet: Packet =
            serde_json::from_str(text).or_else(|e| fail(MqttprobeStatus::InvalidInput, e.to_string()))?;
        let bytes = encode_packet(&packet).or_else(|e| fail(MqttprobeStatus::InvalidInput, e.to_string()))?;
        let boxed = bytes.into_boxed_slice();
        *out_len = boxed.len();
        *out = Box::into_raw(boxed).cast::<u8>();
        Ok(())
    })
}
