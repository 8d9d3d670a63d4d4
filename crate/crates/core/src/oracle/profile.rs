use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{evaluate_trace, Anomaly, AnomalyCode, OracleError, ScenarioOutcome};
use crate::runner::{CorpusResult, CorpusRun, Liveness};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ran,
    Skipped,
}

/// Canonical per-experiment summary; equal behaviour gives equal summaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub status: RunStatus,
    /// Delivery labels in arrival order, runs collapsed as `m1*3`.
    pub delivered: Vec<String>,
    pub anomalies: BTreeSet<AnomalyCode>,
}

impl OutcomeSummary {
    pub fn ran(delivered: &[&str], anomalies: &[AnomalyCode]) -> Self {
        OutcomeSummary {
            status: RunStatus::Ran,
            delivered: delivered.iter().map(|s| s.to_string()).collect(),
            anomalies: anomalies.iter().copied().collect(),
        }
    }

    pub fn skipped() -> Self {
        OutcomeSummary {
            status: RunStatus::Skipped,
            delivered: Vec::new(),
            anomalies: BTreeSet::new(),
        }
    }

    fn from_outcome(outcome: &ScenarioOutcome) -> Self {
        let labels: Vec<&str> = outcome.delivered.iter().map(|d| d.label.as_str()).collect();
        OutcomeSummary {
            status: RunStatus::Ran,
            delivered: run_length(&labels),
            anomalies: outcome.codes(),
        }
    }

    fn expanded(&self) -> Vec<String> {
        let mut out = Vec::new();
        for item in &self.delivered {
            match item.rsplit_once('*').and_then(|(l, n)| Some((l, n.parse::<usize>().ok()?))) {
                Some((label, n)) => out.extend(std::iter::repeat_n(label.to_string(), n)),
                None => out.push(item.clone()),
            }
        }
        out
    }
}

fn run_length(labels: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let mut j = i + 1;
        while j < labels.len() && labels[j] == labels[i] {
            j += 1;
        }
        out.push(if j - i == 1 {
            labels[i].to_string()
        } else {
            format!("{}*{}", labels[i], j - i)
        });
        i = j;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub broker_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub outcomes: BTreeMap<String, OutcomeSummary>,
}

impl BehaviorProfile {
    pub fn codes(&self) -> BTreeSet<AnomalyCode> {
        self.outcomes.values().flat_map(|o| o.anomalies.iter().copied()).collect()
    }
}

/// One corpus entry after evaluation; `None` when the experiment was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluatedRun {
    pub experiment_name: String,
    pub outcome: Option<ScenarioOutcome>,
}

/// Evaluate every run. A broker that stopped answering after an experiment
/// gets a `BrokerCrash` there.
pub fn evaluate_results(results: &[CorpusResult]) -> Result<Vec<EvaluatedRun>, OracleError> {
    results
        .iter()
        .map(|r| {
            let outcome = match &r.run {
                CorpusRun::Skipped { .. } => None,
                CorpusRun::Ran { trace, liveness } => {
                    let mut outcome = evaluate_trace(&r.experiment, trace)?;
                    if let Liveness::Dead { detail } = liveness {
                        outcome.anomalies.push(Anomaly::new(
                            AnomalyCode::BrokerCrash,
                            Vec::new(),
                            format!("broker unreachable after {}: {detail}", r.experiment.name),
                        ));
                    }
                    Some(outcome)
                }
            };
            Ok(EvaluatedRun {
                experiment_name: r.experiment.name.clone(),
                outcome,
            })
        })
        .collect()
}

/// Canonical profile of already evaluated runs.
pub fn profile_of(broker_label: &str, runs: &[EvaluatedRun]) -> BehaviorProfile {
    BehaviorProfile {
        broker_label: broker_label.to_string(),
        version: None,
        outcomes: runs
            .iter()
            .map(|r| {
                let summary = match &r.outcome {
                    Some(o) => OutcomeSummary::from_outcome(o),
                    None => OutcomeSummary::skipped(),
                };
                (r.experiment_name.clone(), summary)
            })
            .collect(),
    }
}

pub fn fingerprint(broker_label: &str, results: &[CorpusResult]) -> Result<BehaviorProfile, OracleError> {
    Ok(profile_of(broker_label, &evaluate_results(results)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub experiment: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("profiles {a:?} and {b:?} share no experiments")]
    NoOverlap { a: String, b: String },
}

fn set_text<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    let parts: Vec<String> = items.into_iter().map(|i| i.to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

/// Compare two profiles on the experiments they have in common.
pub fn diff_profiles(a: &BehaviorProfile, b: &BehaviorProfile) -> Result<Vec<Divergence>, DiffError> {
    let shared: Vec<&String> = a.outcomes.keys().filter(|k| b.outcomes.contains_key(*k)).collect();
    if shared.is_empty() && !(a.outcomes.is_empty() && b.outcomes.is_empty()) {
        return Err(DiffError::NoOverlap {
            a: a.broker_label.clone(),
            b: b.broker_label.clone(),
        });
    }
    let mut out = Vec::new();
    for name in shared {
        let (x, y) = (&a.outcomes[name], &b.outcomes[name]);
        let mut push = |description: String| {
            out.push(Divergence {
                experiment: name.clone(),
                description,
            })
        };
        if x.status != y.status {
            push(format!("status {:?} vs {:?}", x.status, y.status).to_lowercase());
        }
        if x.delivered != y.delivered {
            let (ex, ey) = (x.expanded(), y.expanded());
            let sx: BTreeSet<&String> = ex.iter().collect();
            let sy: BTreeSet<&String> = ey.iter().collect();
            if sx != sy {
                push(format!("delivered {} vs {}", set_text(sx), set_text(sy)));
            } else if ex.len() != ey.len() {
                push(format!("delivery count {} vs {}", ex.len(), ey.len()));
            } else {
                push(format!(
                    "delivery order [{}] vs [{}]",
                    x.delivered.join(","),
                    y.delivered.join(",")
                ));
            }
        }
        if x.anomalies != y.anomalies {
            push(format!(
                "anomalies {} vs {}",
                set_text(&x.anomalies),
                set_text(&y.anomalies)
            ));
        }
    }
    Ok(out)
}
