//! Abstract state space: which features and neurons become DTMC states, how
//! their values are discretized, and how a concrete activation trace maps to
//! a sequence of abstract states.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ActivationTrace, FeatureKind, FeatureSpec, Network, NetworkKind};

const KMEANS_MAX_ITERATIONS: usize = 100;

/// Something whose value is discretized into abstract states: an input
/// feature, one hidden neuron, or a whole hidden layer (vector clustering).
/// For recurrent networks the cell is layer 0 and is sampled at every timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Feature(usize),
    Neuron { layer: usize, neuron: usize },
    Layer(usize),
}

impl Target {
    fn order_key(&self) -> (u8, usize, usize) {
        match *self {
            Target::Feature(i) => (0, i, 0),
            Target::Neuron { layer, neuron } => (1, layer, neuron),
            Target::Layer(layer) => (1, layer, usize::MAX),
        }
    }

    pub fn is_feature(&self) -> bool {
        matches!(self, Target::Feature(_))
    }

    /// Human-readable id: the feature name, `n<layer>.<neuron>` or `layer<layer>`.
    pub fn id(&self, features: &[FeatureSpec]) -> String {
        match *self {
            Target::Feature(i) => features
                .get(i)
                .map(|f| f.name.clone())
                .unwrap_or_else(|| format!("f{i}")),
            _ => self.to_string(),
        }
    }

    /// Parses `feature:<name>`, `neuron:<layer>:<neuron>` or `layer:<layer>`.
    pub fn parse(text: &str, features: &[FeatureSpec]) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("cannot parse target `{text}`"));
        let mut parts = text.split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let rest: Vec<&str> = parts.collect();
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
        match (kind.trim(), rest.as_slice()) {
            ("feature", [name]) => features
                .iter()
                .find(|f| f.name == *name)
                .map(|f| Target::Feature(f.index))
                .ok_or_else(|| Error::UnknownTarget(text.to_string())),
            ("neuron", [layer, neuron]) => Ok(Target::Neuron {
                layer: num(layer)?,
                neuron: num(neuron)?,
            }),
            ("layer", [layer]) => Ok(Target::Layer(num(layer)?)),
            _ => Err(bad()),
        }
    }
}

impl Ord for Target {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

impl PartialOrd for Target {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Target::Feature(i) => write!(f, "f{i}"),
            Target::Neuron { layer, neuron } => write!(f, "n{layer}.{neuron}"),
            Target::Layer(layer) => write!(f, "layer{layer}"),
        }
    }
}

/// Equal-width bins; `edges` are the k-1 interior boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    pub edges: Vec<f64>,
}

impl Bins {
    pub fn k(&self) -> usize {
        self.edges.len() + 1
    }

    /// Values outside the fitted range clamp to the nearest end bin.
    pub fn assign(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e <= value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Nearest centroid, ties to the lowest index.
    pub fn assign(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Bins(Bins),
    KMeans(KMeans),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretizer {
    pub target: Target,
    pub method: Method,
}

impl Discretizer {
    pub fn new(target: Target, method: Method) -> Self {
        Discretizer { target, method }
    }

    pub fn k(&self) -> usize {
        match &self.method {
            Method::Bins(b) => b.k(),
            Method::KMeans(km) => km.k(),
        }
    }

    pub fn assign(&self, value: &[f64]) -> Result<usize> {
        let cluster = match &self.method {
            Method::Bins(b) if value.len() == 1 && !value[0].is_nan() => b.assign(value[0]),
            Method::KMeans(km)
                if km.centroids[0].len() == value.len() && value.iter().all(|v| !v.is_nan()) =>
            {
                km.assign(value)
            }
            _ => {
                return Err(Error::UnmappedValue {
                    target: self.target.to_string(),
                    value: value.first().copied().unwrap_or(f64::NAN),
                })
            }
        };
        Ok(cluster)
    }
}

pub fn bin_fit(values: &[f64], k: usize) -> Result<Bins> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "bin count must be at least 1".into(),
        ));
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit bins on no values".into(),
        ));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if k == 1 {
        return Ok(Bins { edges: Vec::new() });
    }
    if lo == hi {
        return Err(Error::DegenerateRange {
            value: lo,
            count: values.len(),
            k,
        });
    }
    let width = (hi - lo) / k as f64;
    Ok(Bins {
        edges: (1..k).map(|i| lo + width * i as f64).collect(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, sq_dist(&centroids[0], p));
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn distinct_points(points: &[Vec<f64>]) -> usize {
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| lex_cmp(a, b));
    sorted.dedup_by(|a, b| lex_cmp(a, b).is_eq());
    sorted.len()
}

/// Lloyd iteration from the given centroids. Returns the final centroids and
/// the distortion after each assignment step.
pub(crate) fn lloyd(
    points: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
    max_iter: usize,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dim = points[0].len();
    let mut assignment: Vec<usize> = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let mut changed = false;
        let mut distortion = 0.0;
        for (p, slot) in points.iter().zip(assignment.iter_mut()) {
            let (c, d) = nearest(&centroids, p);
            distortion += d;
            if *slot != c {
                *slot = c;
                changed = true;
            }
        }
        history.push(distortion);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, (sum, n)) in sums.into_iter().zip(&counts).enumerate() {
            if *n > 0 {
                centroids[c] = sum.into_iter().map(|s| s / *n as f64).collect();
            }
        }
        // empty clusters jump to the point currently worst served
        for c in 0..centroids.len() {
            if counts[c] == 0 {
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, nearest(&centroids, p).1))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
                    .expect("non-empty points");
                centroids[c] = points[far].clone();
                assignment[far] = usize::MAX;
            }
        }
    }
    (centroids, history)
}

fn kmeans_pp_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let mut pick = rng.gen::<f64>() * total;
        let mut chosen = None;
        for (i, &d) in dist.iter().enumerate() {
            if d > 0.0 {
                chosen = Some(i);
                if pick < d {
                    break;
                }
                pick -= d;
            }
        }
        let c = points[chosen.expect("k <= distinct points")].clone();
        for (slot, p) in dist.iter_mut().zip(points) {
            *slot = slot.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iteration (fixed point or 100 rounds).
/// Centroids come back sorted lexicographically, first coordinate leading.
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "cluster count must be at least 1".into(),
        ));
    }
    if points.is_empty() {
        return Err(Error::TooFewPoints { k, distinct: 0 });
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidArgument(
            "k-means points must share a non-zero dimension".into(),
        ));
    }
    let distinct = distinct_points(points);
    if k > distinct {
        return Err(Error::TooFewPoints { k, distinct });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_pp_init(points, k, &mut rng);
    let (mut centroids, _) = lloyd(points, init, KMEANS_MAX_ITERATIONS);
    centroids.sort_by(|a, b| lex_cmp(a, b));
    Ok(KMeans { centroids })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    Start,
    Protected {
        value: usize,
    },
    /// Cluster `cluster` of the `target`-th selected target.
    Cluster {
        target: usize,
        cluster: usize,
    },
    Outcome {
        label: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub id: String,
    pub kind: StateKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    states: Vec<State>,
    kind: NetworkKind,
    protected_feature: usize,
    protected_count: usize,
    /// Selected targets in trace order with their discretizers.
    targets: Vec<Discretizer>,
    target_ids: Vec<String>,
    target_offsets: Vec<usize>,
    labels: Vec<String>,
}

impl StateSpace {
    /// Assembles the state set: Start, protected values, one state per cluster
    /// of each target (features by index, then neurons by layer), then labels.
    pub fn new(
        features: &[FeatureSpec],
        protected: usize,
        mut discretizers: Vec<Discretizer>,
        labels: &[String],
        kind: NetworkKind,
    ) -> Result<Self> {
        let pf = features
            .get(protected)
            .ok_or_else(|| Error::InvalidConfig(format!("no feature at index {protected}")))?;
        let protected_count = match pf.kind {
            FeatureKind::Categorical { cardinality } => cardinality,
            FeatureKind::Continuous { .. } => {
                return Err(Error::InvalidConfig(format!(
                    "protected feature {} must be categorical",
                    pf.name
                )))
            }
        };
        if labels.len() < 2 {
            return Err(Error::InvalidConfig(
                "at least two outcome labels required".into(),
            ));
        }
        discretizers.sort_by_key(|d| d.target);
        for pair in discretizers.windows(2) {
            if pair[0].target == pair[1].target {
                return Err(Error::InvalidConfig(format!(
                    "target {} selected twice",
                    pair[0].target
                )));
            }
        }
        for d in &discretizers {
            match d.target {
                Target::Feature(i) if i == protected => {
                    return Err(Error::InvalidConfig(
                        "the protected feature cannot also be an abstraction target".into(),
                    ))
                }
                Target::Feature(i) if i >= features.len() => {
                    return Err(Error::UnknownTarget(d.target.to_string()))
                }
                _ => {}
            }
        }

        let mut states = vec![State {
            id: "Start".into(),
            kind: StateKind::Start,
        }];
        for v in 0..protected_count {
            states.push(State {
                id: pf.value_name(v),
                kind: StateKind::Protected { value: v },
            });
        }
        let mut target_offsets = Vec::with_capacity(discretizers.len());
        let mut target_ids = Vec::with_capacity(discretizers.len());
        for (t, d) in discretizers.iter().enumerate() {
            let tid = d.target.id(features);
            target_offsets.push(states.len());
            for c in 0..d.k() {
                states.push(State {
                    id: format!("{tid}#{c}"),
                    kind: StateKind::Cluster {
                        target: t,
                        cluster: c,
                    },
                });
            }
            target_ids.push(tid);
        }
        for (l, label) in labels.iter().enumerate() {
            states.push(State {
                id: label.clone(),
                kind: StateKind::Outcome { label: l },
            });
        }
        let mut seen = HashSet::new();
        for s in &states {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate state id `{}`",
                    s.id
                )));
            }
        }
        Ok(StateSpace {
            states,
            kind,
            protected_feature: protected,
            protected_count,
            targets: discretizers,
            target_ids,
            target_offsets,
            labels: labels.to_vec(),
        })
    }

    pub fn m(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, s: usize) -> &State {
        &self.states[s]
    }

    pub fn id(&self, s: usize) -> &str {
        &self.states[s].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.states.iter().position(|s| s.id == id)
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn protected_feature(&self) -> usize {
        self.protected_feature
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn protected_state(&self, value: usize) -> usize {
        1 + value
    }

    pub fn protected_states(&self) -> std::ops::Range<usize> {
        1..1 + self.protected_count
    }

    pub fn outcome_state(&self, label: usize) -> usize {
        self.m() - self.labels.len() + label
    }

    pub fn outcome_states(&self) -> std::ops::Range<usize> {
        self.m() - self.labels.len()..self.m()
    }

    pub fn is_outcome(&self, s: usize) -> bool {
        matches!(self.states[s].kind, StateKind::Outcome { .. })
    }

    pub fn targets(&self) -> &[Discretizer] {
        &self.targets
    }

    pub fn target_id(&self, t: usize) -> &str {
        &self.target_ids[t]
    }

    pub fn target_index(&self, target: Target) -> Option<usize> {
        self.targets.iter().position(|d| d.target == target)
    }

    pub fn target_states(&self, t: usize) -> std::ops::Range<usize> {
        let start = self.target_offsets[t];
        start..start + self.targets[t].k()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Position of a state in the fixed feed-forward trace order:
    /// Start 0, protected 1, target t at 2 + t, outcomes last.
    pub fn tier(&self, s: usize) -> usize {
        match self.states[s].kind {
            StateKind::Start => 0,
            StateKind::Protected { .. } => 1,
            StateKind::Cluster { target, .. } => 2 + target,
            StateKind::Outcome { .. } => 2 + self.targets.len(),
        }
    }
}

/// Builds the state space for `net`, checking that every selected target
/// exists in the network and has exactly one discretizer.
pub fn build_state_space(
    net: &Network,
    protected: usize,
    targets: &[Target],
    discretizers: Vec<Discretizer>,
) -> Result<StateSpace> {
    for t in targets {
        if !discretizers.iter().any(|d| d.target == *t) {
            return Err(Error::MissingDiscretizer(t.id(&net.features)));
        }
    }
    for d in &discretizers {
        if !targets.contains(&d.target) {
            return Err(Error::InvalidConfig(format!(
                "discretizer for unselected target {}",
                d.target
            )));
        }
        check_target(net, d.target)?;
    }
    StateSpace::new(
        &net.features,
        protected,
        discretizers,
        &net.labels,
        net.kind(),
    )
}

fn check_target(net: &Network, target: Target) -> Result<()> {
    let ok = match target {
        Target::Feature(i) => i < net.input_width(),
        Target::Neuron { layer, neuron } => match net.kind() {
            NetworkKind::FeedForward => net.step_width(layer).is_some_and(|w| neuron < w),
            NetworkKind::Recurrent => layer == 0 && net.step_width(0).is_some_and(|w| neuron < w),
        },
        Target::Layer(layer) => match net.kind() {
            NetworkKind::FeedForward => net.step_width(layer).is_some(),
            NetworkKind::Recurrent => layer == 0,
        },
    };
    if ok {
        Ok(())
    } else {
        Err(Error::UnknownTarget(target.id(&net.features)))
    }
}

fn hidden_value(step: &[f64], target: Target) -> Vec<f64> {
    match target {
        Target::Neuron { neuron, .. } => vec![step[neuron]],
        Target::Layer(_) => step.to_vec(),
        Target::Feature(_) => unreachable!("feature targets read the input"),
    }
}

/// Maps an activation trace to its abstract state sequence.
///
/// Feed-forward: Start, protected value, feature targets, neuron targets,
/// outcome. Recurrent: Start, protected value, feature targets, then the cell
/// targets at every timestep, outcome.
pub fn abstract_trace(trace: &ActivationTrace, space: &StateSpace) -> Result<Vec<usize>> {
    let raw = trace.input[space.protected_feature];
    let value = raw as usize;
    if raw < 0.0 || raw.fract() != 0.0 || value >= space.protected_count {
        return Err(Error::UnmappedValue {
            target: "protected".into(),
            value: raw,
        });
    }
    let mut out = Vec::with_capacity(3 + space.targets.len() * trace.steps.len().max(1));
    out.push(space.start());
    out.push(space.protected_state(value));
    let emit = |out: &mut Vec<usize>, t: usize, v: &[f64]| -> Result<()> {
        let c = space.targets[t].assign(v)?;
        out.push(space.target_offsets[t] + c);
        Ok(())
    };
    for (t, d) in space.targets.iter().enumerate() {
        if let Target::Feature(i) = d.target {
            emit(&mut out, t, &[trace.input[i]])?;
        }
    }
    let hidden: Vec<(usize, Target)> = space
        .targets
        .iter()
        .enumerate()
        .filter(|(_, d)| !d.target.is_feature())
        .map(|(t, d)| (t, d.target))
        .collect();
    match space.kind {
        NetworkKind::FeedForward => {
            for &(t, target) in &hidden {
                let layer = match target {
                    Target::Neuron { layer, .. } | Target::Layer(layer) => layer,
                    Target::Feature(_) => unreachable!(),
                };
                let step = trace
                    .steps
                    .get(layer)
                    .ok_or_else(|| Error::UnknownTarget(target.to_string()))?;
                emit(&mut out, t, &hidden_value(step, target))?;
            }
        }
        NetworkKind::Recurrent => {
            for step in &trace.steps {
                for &(t, target) in &hidden {
                    emit(&mut out, t, &hidden_value(step, target))?;
                }
            }
        }
    }
    out.push(space.outcome_state(trace.label));
    Ok(out)
}

/// How a selected target should be discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodKind {
    Bins,
    KMeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetSpec {
    pub target: Target,
    pub method: MethodKind,
    pub k: usize,
}

/// Fits one discretizer per target. Feature bins use the declared feature
/// range; everything else is fitted on the observed `traces`.
pub fn fit_discretizers(
    net: &Network,
    specs: &[TargetSpec],
    traces: &[ActivationTrace],
    seed: u64,
) -> Result<Vec<Discretizer>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            check_target(net, spec.target)?;
            let points: Vec<Vec<f64>> = match spec.target {
                Target::Feature(f) => {
                    if let (MethodKind::Bins, Some(feature)) = (spec.method, net.features.get(f)) {
                        let range = match feature.kind {
                            FeatureKind::Continuous { lo, hi } => vec![lo, hi],
                            FeatureKind::Categorical { cardinality } => {
                                vec![0.0, (cardinality - 1) as f64]
                            }
                        };
                        let bins = bin_fit(&range, spec.k)?;
                        return Ok(Discretizer::new(spec.target, Method::Bins(bins)));
                    }
                    traces.iter().map(|t| vec![t.input[f]]).collect()
                }
                Target::Neuron { layer, .. } | Target::Layer(layer) => match net.kind() {
                    NetworkKind::FeedForward => traces
                        .iter()
                        .map(|t| hidden_value(&t.steps[layer], spec.target))
                        .collect(),
                    NetworkKind::Recurrent => traces
                        .iter()
                        .flat_map(|t| t.steps.iter().map(|s| hidden_value(s, spec.target)))
                        .collect(),
                },
            };
            let method = match spec.method {
                MethodKind::Bins => {
                    if points.first().is_some_and(|p| p.len() != 1) {
                        return Err(Error::InvalidConfig(format!(
                            "target {}: binning needs a scalar target; use kmeans",
                            spec.target
                        )));
                    }
                    let values: Vec<f64> = points.iter().map(|p| p[0]).collect();
                    Method::Bins(bin_fit(&values, spec.k)?)
                }
                MethodKind::KMeans => {
                    Method::KMeans(kmeans_fit(&points, spec.k, seed.wrapping_add(i as u64))?)
                }
            };
            Ok(Discretizer::new(spec.target, method))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Architecture, Layer};

    #[test]
    fn equal_width_bins() {
        let bins = bin_fit(&[0.0, 37.0, 100.0], 4).unwrap();
        assert_eq!(bins.edges, vec![25.0, 50.0, 75.0]);
        assert_eq!(bins.assign(30.0), 1);
        assert_eq!(bins.assign(100.0), 3);
        assert_eq!(bins.assign(250.0), 3);
        assert_eq!(bins.assign(-4.0), 0);
        assert_eq!(bins.assign(25.0), 1);
    }

    #[test]
    fn single_bin_takes_everything() {
        let bins = bin_fit(&[3.0, 3.0], 1).unwrap();
        assert_eq!(bins.k(), 1);
        assert_eq!(bins.assign(-1e9), 0);
        assert_eq!(bins.assign(1e9), 0);
    }

    #[test]
    fn degenerate_range() {
        assert!(matches!(
            bin_fit(&[2.0, 2.0, 2.0], 3),
            Err(Error::DegenerateRange { .. })
        ));
        assert!(bin_fit(&[], 2).is_err());
    }

    #[test]
    fn categorical_bins_are_exact() {
        for card in 2..9usize {
            let bins = bin_fit(&[0.0, (card - 1) as f64], card).unwrap();
            for v in 0..card {
                assert_eq!(bins.assign(v as f64), v);
            }
        }
    }

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|x| vec![*x]).collect()
    }

    /// Best 2-partition of a sorted 1-D set by exhaustive split search.
    fn brute_force_two_means(values: &[f64]) -> (f64, f64) {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let sse = |s: &[f64]| {
            let m = mean(s);
            s.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
        };
        (1..sorted.len())
            .map(|i| {
                (
                    sse(&sorted[..i]) + sse(&sorted[i..]),
                    mean(&sorted[..i]),
                    mean(&sorted[i..]),
                )
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, a, b)| (a, b))
            .unwrap()
    }

    #[test]
    fn kmeans_two_clusters_match_brute_force() {
        let values = [0.0, 0.0, 10.0, 10.0];
        let (a, b) = brute_force_two_means(&values);
        let km = kmeans_fit(&pts(&values), 2, 3).unwrap();
        assert_eq!(km.centroids, vec![vec![a], vec![b]]);
        assert_eq!(km.centroids, vec![vec![0.0], vec![10.0]]);
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let values = [1.0, 2.0, 6.0];
        let km = kmeans_fit(&pts(&values), 1, 0).unwrap();
        assert!((km.centroids[0][0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_k_equals_distinct_points() {
        let values = [4.0, -1.0, 4.0, 9.0, 2.5];
        let km = kmeans_fit(&pts(&values), 4, 11).unwrap();
        assert_eq!(km.centroids, pts(&[-1.0, 2.5, 4.0, 9.0]));
        let distortion: f64 = values.iter().map(|v| nearest(&km.centroids, &[*v]).1).sum();
        assert_eq!(distortion, 0.0);
    }

    #[test]
    fn kmeans_too_many_clusters() {
        assert!(matches!(
            kmeans_fit(&pts(&[1.0, 1.0, 2.0]), 3, 0),
            Err(Error::TooFewPoints { k: 3, distinct: 2 })
        ));
    }

    #[test]
    fn kmeans_ties_go_to_lowest_index() {
        let km = KMeans {
            centroids: pts(&[0.0, 2.0]),
        };
        assert_eq!(km.assign(&[1.0]), 0);
    }

    proptest::proptest! {
        #[test]
        fn lloyd_distortion_never_increases(
            raw in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 6..60),
            k in 1usize..5,
            seed in 0u64..1000,
        ) {
            let points: Vec<Vec<f64>> = raw.iter().map(|(a, b)| vec![*a, *b]).collect();
            proptest::prop_assume!(distinct_points(&points) >= k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = kmeans_pp_init(&points, k, &mut rng);
            let (_, history) = lloyd(&points, init, 100);
            for w in history.windows(2) {
                proptest::prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
        }
    }

    fn census_like() -> Network {
        let features = vec![
            FeatureSpec::categorical("gender", 0, 2)
                .protected()
                .with_values(&["M", "F"]),
            FeatureSpec::continuous("age", 1, 0.0, 100.0),
            FeatureSpec::continuous("hours", 2, 0.0, 80.0),
        ];
        let l0 = Layer::new(
            vec![vec![0.0, 0.02, 0.0], vec![0.0, 0.0, 0.05]],
            vec![0.0, -1.0],
            Activation::Relu,
        )
        .unwrap();
        let l1 = Layer::new(vec![vec![1.0, 1.0]], vec![-1.0], Activation::Sigmoid).unwrap();
        Network::new(
            Architecture::FeedForward(vec![l0, l1]),
            features,
            vec!["<=50K".into(), ">50K".into()],
        )
        .unwrap()
    }

    #[test]
    fn state_count_protected_and_labels_only() {
        let net = census_like();
        let space = build_state_space(&net, 0, &[], vec![]).unwrap();
        assert_eq!(space.m(), 5);
        assert_eq!(space.id(1), "M");
        assert_eq!(space.id(4), ">50K");
    }

    #[test]
    fn adding_a_neuron_adds_its_clusters() {
        let net = census_like();
        let t = Target::Neuron {
            layer: 0,
            neuron: 1,
        };
        let d = Discretizer::new(t, Method::Bins(bin_fit(&[0.0, 4.0], 2).unwrap()));
        let space = build_state_space(&net, 0, &[t], vec![d]).unwrap();
        assert_eq!(space.m(), 7);
    }

    #[test]
    fn recurrent_figure_shape_has_eight_states() {
        let features: Vec<FeatureSpec> = vec![
            FeatureSpec::categorical("race", 0, 3)
                .protected()
                .with_values(&["W", "B", "O"]),
            FeatureSpec::continuous("tok", 1, -1.0, 1.0),
        ];
        let cell_target = Target::Neuron {
            layer: 0,
            neuron: 0,
        };
        let d = Discretizer::new(
            cell_target,
            Method::KMeans(KMeans {
                centroids: pts(&[-0.5, 0.5]),
            }),
        );
        let labels = vec!["NT".to_string(), "T".to_string()];
        let space =
            StateSpace::new(&features, 0, vec![d], &labels, NetworkKind::Recurrent).unwrap();
        assert_eq!(space.m(), 8);
    }

    #[test]
    fn build_errors() {
        let net = census_like();
        let t = Target::Feature(1);
        assert!(matches!(
            build_state_space(&net, 0, &[t], vec![]),
            Err(Error::MissingDiscretizer(_))
        ));
        let d = Discretizer::new(t, Method::Bins(bin_fit(&[0.0, 100.0], 2).unwrap()));
        assert!(matches!(
            build_state_space(&net, 1, &[t], vec![d]),
            Err(Error::InvalidConfig(_))
        ));
        let bogus = Target::Neuron {
            layer: 0,
            neuron: 9,
        };
        let d = Discretizer::new(bogus, Method::Bins(bin_fit(&[0.0, 1.0], 2).unwrap()));
        assert!(matches!(
            build_state_space(&net, 0, &[bogus], vec![d]),
            Err(Error::UnknownTarget(_))
        ));
    }

    #[test]
    fn running_example_trace() {
        let net = census_like();
        let space = build_state_space(&net, 0, &[], vec![]).unwrap();
        let trace = net.forward_trace(&[0.0, 90.0, 60.0]).unwrap();
        assert_eq!(trace.label, 1);
        let ids: Vec<&str> = abstract_trace(&trace, &space)
            .unwrap()
            .into_iter()
            .map(|s| space.id(s))
            .collect();
        assert_eq!(ids, ["Start", "M", ">50K"]);
    }

    #[test]
    fn unselected_coordinates_are_ignored() {
        let net = census_like();
        let t = Target::Feature(1);
        let d = Discretizer::new(t, Method::Bins(bin_fit(&[0.0, 100.0], 4).unwrap()));
        let space = build_state_space(&net, 0, &[t], vec![d]).unwrap();
        let a = abstract_trace(&net.forward_trace(&[1.0, 30.0, 10.0]).unwrap(), &space).unwrap();
        let b = abstract_trace(&net.forward_trace(&[1.0, 30.0, 11.0]).unwrap(), &space).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(space.id(a[2]), "age#1");
    }

    #[test]
    fn recurrent_trace_emits_per_timestep() {
        use crate::model::RecurrentCell;
        let cell = RecurrentCell {
            input_weights: vec![vec![0.0, 0.0]],
            hidden_weights: vec![vec![0.0]],
            bias: vec![0.8],
            activation: Activation::Tanh,
            readout: Layer::new(vec![vec![-10.0]], vec![0.0], Activation::Sigmoid).unwrap(),
        };
        let features = vec![
            FeatureSpec::categorical("race", 0, 3)
                .protected()
                .with_values(&["W", "B", "O"]),
            FeatureSpec::continuous("a", 1, 0.0, 1.0),
            FeatureSpec::continuous("b", 2, 0.0, 1.0),
            FeatureSpec::continuous("c", 3, 0.0, 1.0),
            FeatureSpec::continuous("d", 4, 0.0, 1.0),
            FeatureSpec::continuous("e", 5, 0.0, 1.0),
        ];
        let net = Network::new(
            Architecture::Recurrent(cell),
            features,
            vec!["NT".into(), "T".into()],
        )
        .unwrap();
        let t = Target::Neuron {
            layer: 0,
            neuron: 0,
        };
        let d = Discretizer::new(
            t,
            Method::KMeans(KMeans {
                centroids: pts(&[-0.5, 0.5]),
            }),
        );
        let space = build_state_space(&net, 0, &[t], vec![d]).unwrap();
        let trace = net.forward_trace(&[0.0, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let ids: Vec<&str> = abstract_trace(&trace, &space)
            .unwrap()
            .into_iter()
            .map(|s| space.id(s))
            .collect();
        assert_eq!(ids, ["Start", "W", "n0.0#1", "n0.0#1", "n0.0#1", "NT"]);
    }

    #[test]
    fn target_parsing() {
        let net = census_like();
        assert_eq!(
            Target::parse("feature:age", &net.features).unwrap(),
            Target::Feature(1)
        );
        assert_eq!(
            Target::parse("neuron:0:1", &net.features).unwrap(),
            Target::Neuron {
                layer: 0,
                neuron: 1
            }
        );
        assert_eq!(
            Target::parse("layer:0", &net.features).unwrap(),
            Target::Layer(0)
        );
        assert!(Target::parse("feature:nope", &net.features).is_err());
        assert!(Target::parse("neuron:x", &net.features).is_err());
    }
}
