//! Learning a DTMC from sampled traces by frequency estimation, sampling until
//! every state has enough outgoing observations for the PAC bound.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::abstraction::{abstract_trace, Method, StateKind, StateSpace, Target};
use crate::error::{Error, Result};
use crate::model::{FeatureKind, Network};
use crate::sampler::{sample_at, InputDistribution};

pub const DEFAULT_BATCH_SIZE: usize = 100;
pub const DEFAULT_MAX_TRACES: u64 = 5_000_000;

/// Transition counts accumulated from traces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    m: usize,
    pairs: Vec<u64>,
    rows: Vec<u64>,
    traces: u64,
}

impl CountMatrix {
    pub fn new(m: usize) -> Self {
        CountMatrix {
            m,
            pairs: vec![0; m * m],
            rows: vec![0; m],
            traces: 0,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_pq(&self, p: usize, q: usize) -> u64 {
        self.pairs[p * self.m + q]
    }

    pub fn n_p(&self, p: usize) -> u64 {
        self.rows[p]
    }

    pub fn row(&self, p: usize) -> &[u64] {
        &self.pairs[p * self.m..(p + 1) * self.m]
    }

    pub fn trace_count(&self) -> u64 {
        self.traces
    }

    pub fn update(&mut self, trace: &[usize]) {
        if trace.is_empty() {
            return;
        }
        for w in trace.windows(2) {
            self.pairs[w[0] * self.m + w[1]] += 1;
            self.rows[w[0]] += 1;
        }
        self.traces += 1;
    }
}

pub fn update_counts(counts: &mut CountMatrix, trace: &[usize]) {
    counts.update(trace);
}

/// Dense row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    m: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds a matrix from rows, requiring entries in `[0,1]` and row sums
    /// within 1e-9 of one.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidArgument("empty transition matrix".into()));
        }
        let mut data = Vec::with_capacity(m * m);
        for (p, row) in rows.into_iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "row {p} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument(format!(
                    "row {p} has an entry outside [0,1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("row {p} sums to {sum}")));
            }
            data.extend(row);
        }
        Ok(TransitionMatrix { m, data })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.data[p * self.m + q]
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.m..(p + 1) * self.m]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacParams {
    pub epsilon: f64,
    pub delta: f64,
}

/// A learned chain together with the evidence it was learned from.
#[derive(Debug, Clone)]
pub struct Dtmc {
    pub space: StateSpace,
    pub initial: Vec<f64>,
    pub matrix: TransitionMatrix,
    pub counts: CountMatrix,
    pub pac: PacParams,
    /// Whether every non-exempt state met its sample bound.
    pub pac_satisfied: bool,
    /// States still below their bound when sampling stopped.
    pub starved: Vec<usize>,
}

impl Dtmc {
    pub fn traces_used(&self) -> u64 {
        self.counts.trace_count()
    }

    pub fn labeled(&self) -> LabeledChain {
        LabeledChain {
            states: self
                .space
                .states()
                .iter()
                .map(|s| (s.id.clone(), StateTag::from(s.kind)))
                .collect(),
            matrix: self.matrix.clone(),
            counts: (0..self.space.m())
                .flat_map(|p| (0..self.space.m()).map(move |q| (p, q)))
                .map(|(p, q)| self.counts.n_pq(p, q))
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = self.labeled().to_text();
        // metadata goes last as comments so the plain format stays intact
        let _ = writeln!(
            out,
            "# epsilon {} delta {} traces {} pac {}",
            self.pac.epsilon,
            self.pac.delta,
            self.traces_used(),
            self.pac_satisfied
        );
        out
    }
}

/// Role of a state in a serialized chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateTag {
    Start,
    Protected,
    Cluster,
    Outcome,
}

impl StateTag {
    fn as_str(self) -> &'static str {
        match self {
            StateTag::Start => "start",
            StateTag::Protected => "protected",
            StateTag::Cluster => "cluster",
            StateTag::Outcome => "outcome",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "start" => StateTag::Start,
            "protected" => StateTag::Protected,
            "cluster" => StateTag::Cluster,
            "outcome" => StateTag::Outcome,
            _ => return None,
        })
    }
}

impl From<StateKind> for StateTag {
    fn from(kind: StateKind) -> Self {
        match kind {
            StateKind::Start => StateTag::Start,
            StateKind::Protected { .. } => StateTag::Protected,
            StateKind::Cluster { .. } => StateTag::Cluster,
            StateKind::Outcome { .. } => StateTag::Outcome,
        }
    }
}

/// Chain with named states, as stored in the text format:
///
/// ```text
/// <m>
/// <index> <start|protected|cluster|outcome> <state id>   (m lines)
/// <p> <q> <probability> <count>                           (one per non-zero entry)
/// ```
///
/// Lines starting with `#` are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledChain {
    pub states: Vec<(String, StateTag)>,
    pub matrix: TransitionMatrix,
    /// Row-major transition counts.
    pub counts: Vec<u64>,
}

impl LabeledChain {
    pub fn to_text(&self) -> String {
        let m = self.states.len();
        let mut out = String::new();
        let _ = writeln!(out, "{m}");
        for (i, (id, tag)) in self.states.iter().enumerate() {
            let _ = writeln!(out, "{i} {} {id}", tag.as_str());
        }
        for p in 0..m {
            for q in 0..m {
                let prob = self.matrix.get(p, q);
                if prob > 0.0 {
                    let _ = writeln!(out, "{p} {q} {prob} {}", self.counts[p * m + q]);
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let bad = |line: usize, what: &str| Error::Parse(format!("dtmc line {line}: {what}"));
        let (ln, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("dtmc: empty file".into()))?;
        let m: usize = header
            .parse()
            .map_err(|_| bad(ln, "expected state count"))?;
        if m == 0 {
            return Err(bad(ln, "state count must be positive"));
        }
        let mut states = Vec::with_capacity(m);
        for i in 0..m {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| Error::Parse("dtmc: truncated state table".into()))?;
            let mut parts = line.splitn(3, ' ');
            let idx: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(ln, "expected state index"))?;
            if idx != i {
                return Err(bad(ln, "state indices must be consecutive from 0"));
            }
            let tag = parts
                .next()
                .and_then(StateTag::parse)
                .ok_or_else(|| bad(ln, "unknown state kind"))?;
            let id = parts
                .next()
                .ok_or_else(|| bad(ln, "missing state id"))?
                .to_string();
            states.push((id, tag));
        }
        let mut rows = vec![vec![0.0; m]; m];
        let mut counts = vec![0u64; m * m];
        for (ln, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(bad(ln, "expected `p q prob count`"));
            }
            let p: usize = parts[0].parse().map_err(|_| bad(ln, "bad source index"))?;
            let q: usize = parts[1].parse().map_err(|_| bad(ln, "bad target index"))?;
            let prob: f64 = parts[2].parse().map_err(|_| bad(ln, "bad probability"))?;
            let count: u64 = parts[3].parse().map_err(|_| bad(ln, "bad count"))?;
            if p >= m || q >= m {
                return Err(bad(ln, "state index out of range"));
            }
            rows[p][q] = prob;
            counts[p * m + q] = count;
        }
        let matrix = TransitionMatrix::from_rows(rows)?;
        Ok(LabeledChain {
            states,
            matrix,
            counts,
        })
    }
}

/// Splits a fairness-level `(accuracy, confidence)` into the per-probability
/// parameters handed to the learner: `(mu_eps / 2, 1 - sqrt(1 - mu_delta))`.
pub fn derive_eps_delta(mu_eps: f64, mu_delta: f64) -> Result<(f64, f64)> {
    if !(mu_eps > 0.0 && mu_eps < 1.0) || !(mu_delta > 0.0 && mu_delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "accuracy and confidence must lie in (0,1), got ({mu_eps}, {mu_delta})"
        )));
    }
    Ok((mu_eps / 2.0, 1.0 - (1.0 - mu_delta).sqrt()))
}

/// Required visit count for a state with outgoing counts `row`:
///
/// `(2/eps^2) ln(2/delta') [1/4 - (max_q |1/2 - n_pq/n_p| - 2 eps/3)^2]`
///
/// The max runs over observed successors; an unvisited row uses offset 0.
pub fn compute_hn(epsilon: f64, delta_prime: f64, row: &[u64]) -> f64 {
    let n_p: u64 = row.iter().sum();
    let offset = if n_p == 0 {
        0.0
    } else {
        row.iter()
            .filter(|&&c| c > 0)
            .map(|&c| (0.5 - c as f64 / n_p as f64).abs())
            .fold(0.0, f64::max)
    };
    let dev = offset - 2.0 * epsilon / 3.0;
    2.0 / (epsilon * epsilon) * (2.0 / delta_prime).ln() * (0.25 - dev * dev)
}

/// Frequency estimate: visited rows get `n_pq / n_p`, unvisited rows `1/m`,
/// and `absorbing` states a self-loop of probability one.
pub fn estimate_matrix(counts: &CountMatrix, absorbing: &[usize]) -> TransitionMatrix {
    let m = counts.m();
    let mut data = vec![0.0; m * m];
    for p in 0..m {
        let row = &mut data[p * m..(p + 1) * m];
        if absorbing.contains(&p) {
            row[p] = 1.0;
        } else if counts.n_p(p) == 0 {
            row.fill(1.0 / m as f64);
        } else {
            let n_p = counts.n_p(p) as f64;
            for (q, slot) in row.iter_mut().enumerate() {
                *slot = counts.n_pq(p, q) as f64 / n_p;
            }
        }
    }
    TransitionMatrix { m, data }
}

/// Produces abstract traces on demand; trace `i` must be a pure function of `i`.
pub trait TraceSource: Sync {
    fn trace(&self, index: u64) -> Result<Vec<usize>>;

    /// States that can never be visited under the sampling distribution; they
    /// are exempt from the sample bound.
    fn unreachable_states(&self) -> Vec<usize> {
        Vec::new()
    }
}

/// Traces obtained by sampling inputs and abstracting the network's activations.
pub struct NetworkTraceSource<'a> {
    pub net: &'a Network,
    pub dist: &'a InputDistribution,
    pub space: &'a StateSpace,
}

impl<'a> NetworkTraceSource<'a> {
    pub fn new(
        net: &'a Network,
        dist: &'a InputDistribution,
        space: &'a StateSpace,
    ) -> Result<Self> {
        dist.validate(&net.features)?;
        Ok(NetworkTraceSource { net, dist, space })
    }
}

impl TraceSource for NetworkTraceSource<'_> {
    fn trace(&self, index: u64) -> Result<Vec<usize>> {
        let x = sample_at(self.dist, &self.net.features, index);
        let trace = self.net.forward_trace(&x)?;
        abstract_trace(&trace, self.space)
    }

    fn unreachable_states(&self) -> Vec<usize> {
        let features = &self.net.features;
        let pf = &features[self.space.protected_feature()];
        let mut out: Vec<usize> = self
            .space
            .protected_states()
            .enumerate()
            .filter(|(v, _)| self.dist.value_probability(pf, *v) == 0.0)
            .map(|(_, s)| s)
            .collect();
        for (t, d) in self.space.targets().iter().enumerate() {
            let (Target::Feature(i), Method::Bins(bins)) = (d.target, &d.method) else {
                continue;
            };
            let FeatureKind::Categorical { cardinality } = features[i].kind else {
                continue;
            };
            let mut mass = vec![0.0; d.k()];
            for v in 0..cardinality {
                mass[bins.assign(v as f64)] += self.dist.value_probability(&features[i], v);
            }
            out.extend(
                self.space
                    .target_states(t)
                    .zip(mass)
                    .filter(|(_, w)| *w == 0.0)
                    .map(|(s, _)| s),
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub batch_size: usize,
    pub max_traces: u64,
}

impl LearnConfig {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        LearnConfig {
            epsilon,
            delta,
            batch_size: DEFAULT_BATCH_SIZE,
            max_traces: DEFAULT_MAX_TRACES,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon and delta must lie in (0,1), got ({}, {})",
                self.epsilon, self.delta
            )));
        }
        if self.batch_size == 0 || self.max_traces == 0 {
            return Err(Error::InvalidArgument(
                "batch size and trace budget must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// States below their bound, ignoring exempt ones.
fn starved_states(counts: &CountMatrix, config: &LearnConfig, exempt: &[bool]) -> Vec<usize> {
    let m = counts.m();
    let delta_prime = config.delta / m as f64;
    (0..m)
        .filter(|&p| !exempt[p])
        .filter(|&p| {
            (counts.n_p(p) as f64) < compute_hn(config.epsilon, delta_prime, counts.row(p))
        })
        .collect()
}

/// Samples traces in batches until every state that can be visited has at
/// least `H(n)` outgoing observations (with `delta' = delta / m`), or the
/// trace budget runs out. Outcome states are absorbing and exempt.
pub fn learn(source: &dyn TraceSource, space: &StateSpace, config: &LearnConfig) -> Result<Dtmc> {
    config.validate()?;
    let m = space.m();
    let mut exempt = vec![false; m];
    for s in space.outcome_states().chain(source.unreachable_states()) {
        exempt[s] = true;
    }
    let mut counts = CountMatrix::new(m);
    let mut starved = (0..m).filter(|&p| !exempt[p]).collect::<Vec<_>>();
    let mut next: u64 = 0;
    while !starved.is_empty() && next < config.max_traces {
        let n = (config.batch_size as u64).min(config.max_traces - next);
        let batch = (next..next + n)
            .into_par_iter()
            .map(|i| source.trace(i))
            .collect::<Result<Vec<_>>>()?;
        for trace in &batch {
            if let Some(&s) = trace.iter().find(|&&s| s >= m) {
                return Err(Error::UnknownState(s.to_string()));
            }
            counts.update(trace);
        }
        next += n;
        starved = starved_states(&counts, config, &exempt);
    }
    let absorbing: Vec<usize> = space.outcome_states().collect();
    let matrix = estimate_matrix(&counts, &absorbing);
    let mut initial = vec![0.0; m];
    initial[space.start()] = 1.0;
    Ok(Dtmc {
        space: space.clone(),
        initial,
        matrix,
        counts,
        pac: PacParams {
            epsilon: config.epsilon,
            delta: config.delta,
        },
        pac_satisfied: starved.is_empty(),
        starved,
    })
}

pub fn learn_dtmc(
    net: &Network,
    dist: &InputDistribution,
    space: &StateSpace,
    config: &LearnConfig,
) -> Result<Dtmc> {
    let source = NetworkTraceSource::new(net, dist, space)?;
    learn(&source, space, config)
}
