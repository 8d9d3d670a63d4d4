//! Run reports in JSON and Markdown.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiment::{render_experiment, Experiment};
use crate::oracle::{profile_of, Anomaly, AnomalyCode, BehaviorProfile, Divergence, EvaluatedRun, Severity};
use crate::runner::{CorpusResult, CorpusRun, Liveness, Outcome};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// sha256 over the rendered experiments, so reports name exactly what ran.
pub fn corpus_hash(experiments: &[Experiment]) -> String {
    let mut hasher = Sha256::new();
    for e in experiments {
        hasher.update(render_experiment(e).as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    /// `completed`, `aborted_by_peer`, `runner_error` or `skipped`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liveness: Option<Liveness>,
    pub delivered: Vec<String>,
    pub anomalies: Vec<Anomaly>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub anomalies: usize,
    pub max_severity: Option<Severity>,
    pub threshold: Severity,
    pub runner_errors: usize,
    pub exit_code: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub tool_version: String,
    pub corpus_sha256: String,
    pub target: String,
    pub broker_label: String,
    pub broker_version: Option<String>,
    pub experiments: Vec<ExperimentReport>,
    pub fingerprint: BehaviorProfile,
    pub summary: Summary,
}

pub const EXIT_CLEAN: u8 = 0;
pub const EXIT_LOCAL_ERROR: u8 = 1;
pub const EXIT_ANOMALIES: u8 = 2;

impl RunReport {
    pub fn build(
        target: &str,
        broker_label: &str,
        broker_version: Option<&str>,
        results: &[CorpusResult],
        runs: &[EvaluatedRun],
        threshold: Severity,
    ) -> RunReport {
        let experiments: Vec<Experiment> = results.iter().map(|r| r.experiment.clone()).collect();
        let mut reports = Vec::new();
        for (r, run) in results.iter().zip(runs) {
            let anomalies = run.outcome.as_ref().map(|o| o.anomalies.clone()).unwrap_or_default();
            let delivered = run
                .outcome
                .as_ref()
                .map(|o| o.delivered.iter().map(|d| d.label.clone()).collect())
                .unwrap_or_default();
            let (status, detail, liveness) = match &r.run {
                CorpusRun::Skipped { reason } => ("skipped".to_string(), Some(reason.clone()), None),
                CorpusRun::Ran { trace, liveness } => {
                    let (s, d) = match &trace.outcome {
                        Outcome::Completed => ("completed", None),
                        Outcome::AbortedByPeer => ("aborted_by_peer", None),
                        Outcome::RunnerError { detail } => ("runner_error", Some(detail.clone())),
                    };
                    (s.to_string(), d, Some(liveness.clone()))
                }
            };
            reports.push(ExperimentReport {
                name: r.experiment.name.clone(),
                status,
                detail,
                liveness,
                delivered: compress(delivered),
                anomalies,
            });
        }
        let anomaly_count = reports.iter().map(|r| r.anomalies.len()).sum();
        let max_severity = reports.iter().flat_map(|r| &r.anomalies).map(|a| a.severity).max();
        let runner_errors = reports.iter().filter(|r| r.status == "runner_error").count();
        let exit_code = if runner_errors > 0 {
            EXIT_LOCAL_ERROR
        } else if max_severity.is_some_and(|s| s >= threshold) {
            EXIT_ANOMALIES
        } else {
            EXIT_CLEAN
        };
        let mut fingerprint = profile_of(broker_label, runs);
        fingerprint.version = broker_version.map(str::to_string);
        RunReport {
            tool: "mqttprobe".into(),
            tool_version: TOOL_VERSION.into(),
            corpus_sha256: corpus_hash(&experiments),
            target: target.to_string(),
            broker_label: broker_label.to_string(),
            broker_version: broker_version.map(str::to_string),
            experiments: reports,
            fingerprint,
            summary: Summary {
                anomalies: anomaly_count,
                max_severity,
                threshold,
                runner_errors,
                exit_code,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    pub fn to_markdown(&self) -> String {
        let codes: BTreeSet<AnomalyCode> = self
            .experiments
            .iter()
            .flat_map(|e| e.anomalies.iter().map(|a| a.code))
            .collect();
        let problems: BTreeSet<Severity> = codes
            .iter()
            .map(|c| c.severity())
            .filter(|s| *s >= Severity::Warning)
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "# mqttprobe {} report\n", self.tool_version);
        let _ = writeln!(out, "Target: `{}`  ", self.target);
        let _ = writeln!(out, "Corpus sha256: `{}`\n", self.corpus_sha256);
        let _ = writeln!(out, "| Broker | Anomalies found | Security problems | Version |");
        let _ = writeln!(out, "|---|---|---|---|");
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            cell(&self.broker_label),
            join(codes.iter()),
            join(problems.iter().rev().map(|s| s.label())),
            cell(self.broker_version.as_deref().unwrap_or("unknown")),
        );
        let _ = writeln!(out, "\n| Experiment | Status | Delivered | Anomalies |");
        let _ = writeln!(out, "|---|---|---|---|");
        for e in &self.experiments {
            let anomalies: Vec<String> = e
                .anomalies
                .iter()
                .map(|a| format!("{} ({}): {}", a.code, a.severity, a.explanation))
                .collect();
            let status = match &e.detail {
                Some(d) => format!("{}: {d}", e.status),
                None => e.status.clone(),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                cell(&e.name),
                cell(&status),
                cell(&e.delivered.join(" ")),
                cell(&anomalies.join("; "))
            );
        }
        let _ = writeln!(
            out,
            "\n{} anomalies; threshold {}; exit code {}",
            self.summary.anomalies, self.summary.threshold, self.summary.exit_code
        );
        out
    }
}

fn compress(labels: Vec<String>) -> Vec<String> {
    let mut out: Vec<(String, usize)> = Vec::new();
    for l in labels {
        match out.last_mut() {
            Some((prev, n)) if *prev == l => *n += 1,
            _ => out.push((l, 1)),
        }
    }
    out.into_iter()
        .map(|(l, n)| if n == 1 { l } else { format!("{l}*{n}") })
        .collect()
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}

/// Divergence listing for `diff`.
pub fn divergences_markdown(a: &str, b: &str, divergences: &[Divergence]) -> String {
    let mut out = format!("# {a} vs {b}\n\n");
    if divergences.is_empty() {
        out.push_str("no divergences\n");
        return out;
    }
    out.push_str("| Experiment | Divergence |\n|---|---|\n");
    for d in divergences {
        let _ = writeln!(out, "| {} | {} |", cell(&d.experiment), cell(&d.description));
    }
    out
}
