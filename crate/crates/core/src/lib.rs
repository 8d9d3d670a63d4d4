//! Differential conformance fuzzing for MQTT 3.1.1 brokers.
//!
//! Experiments are scripted, possibly protocol-violating packet sequences
//! ([`experiment`]). The [`runner`] plays them against a TCP endpoint and
//! records a totally ordered [`runner::Trace`], which the [`oracle`] turns
//! into classified anomalies and a comparable behaviour fingerprint. A small
//! standard-conformant broker ([`refbroker`]) serves as a local target and as
//! the baseline.

pub mod codec;
pub mod topics;
pub mod experiment;
pub mod runner;
pub mod refbroker;
pub mod oracle;
pub mod report;
pub mod cli;

mod hexser;
