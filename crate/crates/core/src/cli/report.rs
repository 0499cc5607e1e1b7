//! JSON run report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checker::VerificationReport;
use crate::error::{Error, Result};
use crate::repair::RepairResult;
use crate::sensitivity::SensitivityRanking;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProb {
    pub group: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacEntry {
    pub mu_eps: f64,
    pub mu_delta: f64,
    pub eps: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub target: String,
    pub sensitivity: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairEntry {
    /// Checker value for the original network.
    pub before: f64,
    /// Checker value for the repaired network, from a fresh learner run.
    pub after: f64,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub iterations: usize,
    pub verdict: String,
    pub group_probs: Vec<GroupProb>,
    pub traces_used: u64,
    pub non_pac_flag: bool,
    pub eval_prob_diff_before: f64,
    pub eval_prob_diff_after: f64,
    pub fairness_achieved: bool,
    pub targets: Vec<String>,
    pub coordinates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub verdict: String,
    pub label: String,
    pub group_probs: Vec<GroupProb>,
    pub max_diff: f64,
    pub xi: f64,
    pub pac: PacEntry,
    pub traces_used: u64,
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<Vec<SensitivityRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair: Option<RepairEntry>,
    pub non_pac_flag: bool,
    pub starved_states: Vec<String>,
}

fn group_probs(report: &VerificationReport) -> Vec<GroupProb> {
    report
        .group_probs
        .iter()
        .map(|(group, prob)| GroupProb {
            group: group.clone(),
            prob: *prob,
        })
        .collect()
}

impl Report {
    pub fn new(
        report: &VerificationReport,
        ranking: Option<&SensitivityRanking>,
        repair: Option<(&RepairResult, &VerificationReport)>,
    ) -> Self {
        Report {
            verdict: report.verdict.to_string(),
            label: report.label.clone(),
            group_probs: group_probs(report),
            max_diff: report.max_diff,
            xi: report.xi,
            pac: PacEntry {
                mu_eps: report.pac.mu_eps,
                mu_delta: report.pac.mu_delta,
                eps: report.pac.eps,
                delta: report.pac.delta,
            },
            traces_used: report.traces_used,
            states: report.states.clone(),
            sensitivity: ranking.map(|r| {
                r.entries
                    .iter()
                    .zip(r.normalized())
                    .map(|(e, normalized)| SensitivityRow {
                        target: e.id.clone(),
                        sensitivity: e.sensitivity,
                        normalized,
                    })
                    .collect()
            }),
            repair: repair.map(|(result, after)| RepairEntry {
                before: report.max_diff,
                after: after.max_diff,
                accuracy_before: result.accuracy_before,
                accuracy_after: result.accuracy_after,
                iterations: result.iterations,
                verdict: after.verdict.to_string(),
                group_probs: group_probs(after),
                traces_used: after.traces_used,
                non_pac_flag: after.non_pac,
                eval_prob_diff_before: result.prob_diff_before,
                eval_prob_diff_after: result.prob_diff_after,
                fairness_achieved: result.fairness_achieved,
                targets: result.targets.clone(),
                coordinates: result.coordinates,
            }),
            non_pac_flag: report.non_pac,
            starved_states: report.starved_states.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

pub fn write_report(
    report: &VerificationReport,
    ranking: Option<&SensitivityRanking>,
    repair: Option<(&RepairResult, &VerificationReport)>,
    path: &Path,
) -> Result<Report> {
    let out = Report::new(report, ranking, repair);
    std::fs::write(path, out.to_json()).map_err(|e| Error::io(path, e))?;
    Ok(out)
}
