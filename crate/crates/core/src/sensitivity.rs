//! Ranking features and neurons by how much they carry group differences to
//! the outcome.
//!
//! For a target `I` with abstract states `I_i`:
//!
//! `sensitivity(I) = sum_i reach(Start, I_i) * reach(I_i, l) * range_f reach(f, I_i)`
//!
//! where `range_f` is the spread (max minus min) of the reach probability over
//! protected-value states `f`.

use crate::abstraction::{StateSpace, Target};
use crate::checker::reach_all;
use crate::error::{Error, Result};
use crate::learner::{Dtmc, TransitionMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityEntry {
    pub target: Target,
    pub id: String,
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityRanking {
    /// Sorted by descending sensitivity, ties by target order.
    pub entries: Vec<SensitivityEntry>,
    pub label: usize,
}

impl SensitivityRanking {
    /// Sorts by descending sensitivity, ties by target order.
    pub fn from_entries(mut entries: Vec<SensitivityEntry>, label: usize) -> Self {
        entries.sort_by(|a, b| {
            b.sensitivity
                .total_cmp(&a.sensitivity)
                .then_with(|| a.target.cmp(&b.target))
        });
        SensitivityRanking { entries, label }
    }

    /// Sensitivities divided by the largest one (all zero when the max is 0).
    pub fn normalized(&self) -> Vec<f64> {
        let max = self.entries.first().map_or(0.0, |e| e.sensitivity);
        self.entries
            .iter()
            .map(|e| if max > 0.0 { e.sensitivity / max } else { 0.0 })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,sensitivity,normalized\n");
        for (e, n) in self.entries.iter().zip(self.normalized()) {
            out.push_str(&format!("{},{},{}\n", e.id, e.sensitivity, n));
        }
        out
    }
}

/// Core formula over explicit state sets, usable on any chain.
pub fn sensitivity_of_states(
    matrix: &TransitionMatrix,
    start: usize,
    protected: &[usize],
    target_states: &[usize],
    outcome: usize,
) -> Result<f64> {
    if protected.len() < 2 {
        return Ok(0.0);
    }
    let to_outcome = reach_all(matrix, outcome)?;
    let mut total = 0.0;
    for &state in target_states {
        let to_state = reach_all(matrix, state)?;
        let (lo, hi) = protected
            .iter()
            .map(|&f| to_state[f])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        total += to_state[start] * to_outcome[state] * (hi - lo);
    }
    Ok(total)
}

fn target_index(space: &StateSpace, target: Target) -> Result<usize> {
    space
        .target_index(target)
        .ok_or_else(|| Error::UnknownTarget(target.to_string()))
}

pub fn state_sensitivity(dtmc: &Dtmc, target: Target, label: usize) -> Result<f64> {
    let space = &dtmc.space;
    let t = target_index(space, target)?;
    if label >= space.labels().len() {
        return Err(Error::UnknownState(format!("label {label}")));
    }
    let protected: Vec<usize> = space.protected_states().collect();
    let states: Vec<usize> = space.target_states(t).collect();
    sensitivity_of_states(
        &dtmc.matrix,
        space.start(),
        &protected,
        &states,
        space.outcome_state(label),
    )
}

/// Ranks `targets` (all abstracted targets when empty) by sensitivity.
pub fn rank_targets(dtmc: &Dtmc, targets: &[Target], label: usize) -> Result<SensitivityRanking> {
    let space = &dtmc.space;
    let chosen: Vec<Target> = if targets.is_empty() {
        space.targets().iter().map(|d| d.target).collect()
    } else {
        targets.to_vec()
    };
    let entries = chosen
        .into_iter()
        .map(|target| {
            let t = target_index(space, target)?;
            Ok(SensitivityEntry {
                target,
                id: space.target_id(t).to_string(),
                sensitivity: state_sensitivity(dtmc, target, label)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityRanking::from_entries(entries, label))
}
