//! Probabilistic reachability on a learned chain and the group-fairness verdict.

use std::fmt;

use crate::error::{Error, Result};
use crate::learner::{Dtmc, TransitionMatrix};

const PIVOT_TOLERANCE: f64 = 1e-12;
const ITERATIVE_TOLERANCE: f64 = 1e-12;
const ITERATIVE_MAX_SWEEPS: usize = 1_000_000;
const DAMPING: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReachQuery {
    pub source: usize,
    pub target: usize,
}

/// States from which `target` is reachable along positive-probability edges.
fn can_reach(matrix: &TransitionMatrix, target: usize) -> Vec<bool> {
    let m = matrix.m();
    let mut seen = vec![false; m];
    seen[target] = true;
    let mut stack = vec![target];
    while let Some(q) = stack.pop() {
        for (p, s) in seen.iter_mut().enumerate() {
            if !*s && matrix.get(p, q) > 0.0 {
                *s = true;
                stack.push(p);
            }
        }
    }
    seen
}

/// Gaussian elimination with partial pivoting on a dense system. Returns
/// `None` when a pivot falls below tolerance.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < PIVOT_TOLERANCE {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (i, row) in lower.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                for (r, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *r -= f * p;
                }
                b[col + 1 + i] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Damped Jacobi iteration for `x = A x + b`; the fallback for systems that
/// elimination rejects as singular.
fn solve_iterative(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..ITERATIVE_MAX_SWEEPS {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let v: f64 = a[i].iter().zip(&x).map(|(aij, xj)| aij * xj).sum::<f64>() + b[i];
                DAMPING * v + (1.0 - DAMPING) * x[i]
            })
            .collect();
        residual = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = next;
        if residual < ITERATIVE_TOLERANCE {
            return Ok(x);
        }
    }
    Err(Error::NonConvergence { residual })
}

/// Probability of eventually reaching `target` from every state.
pub fn reach_all(matrix: &TransitionMatrix, target: usize) -> Result<Vec<f64>> {
    let m = matrix.m();
    if target >= m {
        return Err(Error::UnknownState(target.to_string()));
    }
    let reachable = can_reach(matrix, target);
    let unknown: Vec<usize> = (0..m).filter(|&p| p != target && reachable[p]).collect();
    let mut slot = vec![usize::MAX; m];
    for (i, &p) in unknown.iter().enumerate() {
        slot[p] = i;
    }
    let n = unknown.len();
    // x_p - sum_{q unknown} A(p,q) x_q = A(p, target)
    let mut a = vec![vec![0.0; n]; n];
    let mut transfer = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (i, &p) in unknown.iter().enumerate() {
        a[i][i] = 1.0;
        for (j, &q) in unknown.iter().enumerate() {
            let w = matrix.get(p, q);
            a[i][j] -= w;
            transfer[i][j] = w;
        }
        b[i] = matrix.get(p, target);
    }
    let solution = match solve_dense(a, b.clone()) {
        Some(x) => x,
        None => solve_iterative(&transfer, &b)?,
    };
    let mut out = vec![0.0; m];
    out[target] = 1.0;
    for (p, &s) in slot.iter().enumerate() {
        if s != usize::MAX {
            out[p] = solution[s].clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

pub fn reach_prob_matrix(matrix: &TransitionMatrix, query: ReachQuery) -> Result<f64> {
    if query.source >= matrix.m() {
        return Err(Error::UnknownState(query.source.to_string()));
    }
    Ok(reach_all(matrix, query.target)?[query.source])
}

pub fn reach_prob(dtmc: &Dtmc, query: ReachQuery) -> Result<f64> {
    reach_prob_matrix(&dtmc.matrix, query)
}

/// `P(Y = label | F = f)` for every protected value `f`, as reachability from
/// the protected-value state to the outcome state. Ordered by value index.
pub fn group_outcome_probs(dtmc: &Dtmc, label: usize) -> Result<Vec<(String, f64)>> {
    let space = &dtmc.space;
    if label >= space.labels().len() {
        return Err(Error::UnknownState(format!("label {label}")));
    }
    let reach = reach_all(&dtmc.matrix, space.outcome_state(label))?;
    Ok(space
        .protected_states()
        .map(|s| (space.id(s).to_string(), reach[s]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessVerdict {
    pub max_diff: f64,
    pub verdict: Verdict,
}

/// Largest absolute difference over all ordered pairs of group probabilities.
pub fn max_pairwise_diff(probs: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in probs.iter().enumerate() {
        for b in &probs[i + 1..] {
            best = best.max((a - b).abs());
        }
    }
    best
}

/// PASS iff the largest pairwise gap is at most `xi`.
pub fn fairness_verdict(group_probs: &[(String, f64)], xi: f64) -> Result<FairnessVerdict> {
    if group_probs.len() < 2 {
        return Err(Error::InvalidArgument(
            "fairness needs at least two groups".into(),
        ));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "xi must lie in (0,1), got {xi}"
        )));
    }
    let probs: Vec<f64> = group_probs.iter().map(|(_, p)| *p).collect();
    let max_diff = max_pairwise_diff(&probs);
    Ok(FairnessVerdict {
        max_diff,
        verdict: if max_diff <= xi {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacSummary {
    pub mu_eps: f64,
    pub mu_delta: f64,
    pub eps: f64,
    pub delta: f64,
}

/// Outcome of checking one learned chain against a fairness threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub label: String,
    pub group_probs: Vec<(String, f64)>,
    pub max_diff: f64,
    pub xi: f64,
    pub verdict: Verdict,
    pub pac: PacSummary,
    pub traces_used: u64,
    pub states: Vec<String>,
    pub non_pac: bool,
    pub starved_states: Vec<String>,
}

pub fn verify(
    dtmc: &Dtmc,
    label: usize,
    xi: f64,
    mu_eps: f64,
    mu_delta: f64,
) -> Result<VerificationReport> {
    let group_probs = group_outcome_probs(dtmc, label)?;
    let v = fairness_verdict(&group_probs, xi)?;
    let space = &dtmc.space;
    Ok(VerificationReport {
        label: space.labels()[label].clone(),
        group_probs,
        max_diff: v.max_diff,
        xi,
        verdict: v.verdict,
        pac: PacSummary {
            mu_eps,
            mu_delta,
            eps: dtmc.pac.epsilon,
            delta: dtmc.pac.delta,
        },
        traces_used: dtmc.traces_used(),
        states: space.states().iter().map(|s| s.id.clone()).collect(),
        non_pac: !dtmc.pac_satisfied,
        starved_states: dtmc
            .starved
            .iter()
            .map(|&s| space.id(s).to_string())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> TransitionMatrix {
        TransitionMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn direct_edge() {
        let a = matrix(vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
        assert_eq!(
            reach_prob_matrix(
                &a,
                ReachQuery {
                    source: 0,
                    target: 1
                }
            )
            .unwrap(),
            1.0
        );
    }

    #[test]
    fn single_branch() {
        // s -> t 0.3, s -> u 0.7
        let a = matrix(vec![
            vec![0.0, 0.3, 0.7],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let p = reach_prob_matrix(
            &a,
            ReachQuery {
                source: 0,
                target: 1,
            },
        )
        .unwrap();
        assert!((p - 0.3).abs() < 1e-15);
    }

    #[test]
    fn cyclic_hand_case() {
        // states s, a, b, t
        let a = matrix(vec![
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.4, 0.0, 0.0, 0.6],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        let p = reach_prob_matrix(
            &a,
            ReachQuery {
                source: 0,
                target: 3,
            },
        )
        .unwrap();
        assert!((p - 0.375).abs() < 1e-12);
    }

    #[test]
    fn target_reaches_itself_and_unreachable_is_zero() {
        let a = matrix(vec![vec![1.0, 0.0], vec![0.5, 0.5]]);
        assert_eq!(
            reach_prob_matrix(
                &a,
                ReachQuery {
                    source: 1,
                    target: 1
                }
            )
            .unwrap(),
            1.0
        );
        assert_eq!(
            reach_prob_matrix(
                &a,
                ReachQuery {
                    source: 0,
                    target: 1
                }
            )
            .unwrap(),
            0.0
        );
        assert!(reach_prob_matrix(
            &a,
            ReachQuery {
                source: 0,
                target: 7
            }
        )
        .is_err());
    }

    #[test]
    fn iterative_fallback_agrees() {
        let a = vec![vec![0.0, 0.5], vec![0.4, 0.0]];
        let b = vec![0.0, 0.6];
        let x = solve_iterative(&a, &b).unwrap();
        assert!((x[0] - 0.375).abs() < 1e-10);
    }

    #[test]
    fn singular_elimination_is_detected() {
        assert!(solve_dense(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 1.0]).is_none());
    }

    fn groups(v: &[f64]) -> Vec<(String, f64)> {
        v.iter()
            .enumerate()
            .map(|(i, p)| (format!("g{i}"), *p))
            .collect()
    }

    #[test]
    fn running_example_verdicts() {
        let probs = vec![("M".to_string(), 0.8796), ("F".to_string(), 0.8483)];
        let v = fairness_verdict(&probs, 0.1).unwrap();
        assert!((v.max_diff - 0.0313).abs() < 1e-12);
        assert_eq!(v.verdict, Verdict::Pass);
        assert_eq!(
            fairness_verdict(&probs, 0.02).unwrap().verdict,
            Verdict::Fail
        );
    }

    #[test]
    fn equal_groups_always_pass() {
        let v = fairness_verdict(&groups(&[0.4, 0.4, 0.4]), 1e-6).unwrap();
        assert_eq!(v.max_diff, 0.0);
        assert_eq!(v.verdict, Verdict::Pass);
    }

    #[test]
    fn verdict_errors() {
        assert!(fairness_verdict(&groups(&[0.4]), 0.1).is_err());
        assert!(fairness_verdict(&groups(&[0.4, 0.5]), 0.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn verdict_is_monotone_and_order_free(
            probs in proptest::collection::vec(0.0f64..1.0, 2..6),
            xi in 0.001f64..0.9,
            bump in 0.0f64..0.09,
        ) {
            let g = groups(&probs);
            let v = fairness_verdict(&g, xi).unwrap();
            if v.verdict == Verdict::Pass {
                proptest::prop_assert_eq!(fairness_verdict(&g, xi + bump).unwrap().verdict, Verdict::Pass);
            }
            let mut rev = g.clone();
            rev.reverse();
            proptest::prop_assert_eq!(fairness_verdict(&rev, xi).unwrap().max_diff, v.max_diff);
        }
    }
}
