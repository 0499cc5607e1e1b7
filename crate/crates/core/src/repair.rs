//! Fairness repair by particle swarm optimization over the weights feeding
//! the most sensitive neurons and features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::abstraction::Target;
use crate::checker::max_pairwise_diff;
use crate::error::{Error, Result};
use crate::model::{eval_accuracy, Architecture, Network, ParamAddr};
use crate::sampler::{sample_range, InputDistribution};
use crate::sensitivity::SensitivityRanking;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_N_EVAL: usize = 5000;
pub const DEFAULT_SWARM_SIZE: usize = 20;
pub const DEFAULT_OMEGA: f64 = 0.729;
pub const DEFAULT_C: f64 = 1.49445;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;
pub const DEFAULT_STALL_LIMIT: usize = 10;

/// Below this magnitude a weight gets an additive search interval.
const NEAR_ZERO: f64 = 1e-6;
const NEAR_ZERO_HALF_WIDTH: f64 = 0.1;
/// Non-first particles start within this fraction of each bound interval.
const INIT_SPREAD: f64 = 0.1;

/// `prob_diff + alpha * (1 - accuracy)`.
pub fn fitness(prob_diff: f64, accuracy: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&prob_diff) || !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::InvalidArgument(format!(
            "prob_diff {prob_diff} and accuracy {accuracy} must lie in [0,1]"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok(prob_diff + alpha * (1.0 - accuracy))
}

/// Fixed sample of inputs, grouped by protected value, used to score every
/// candidate network during one repair run.
#[derive(Debug, Clone)]
pub struct EvalSet {
    inputs: Vec<Vec<f64>>,
    groups: Vec<usize>,
    group_names: Vec<String>,
}

impl EvalSet {
    pub fn sample(
        net: &Network,
        dist: &InputDistribution,
        protected: usize,
        n_eval: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_eval == 0 {
            return Err(Error::InvalidArgument("n_eval must be at least 1".into()));
        }
        let pf = net
            .features
            .get(protected)
            .ok_or_else(|| Error::InvalidConfig(format!("no feature at index {protected}")))?;
        let cardinality = pf.cardinality().ok_or_else(|| {
            Error::InvalidConfig(format!("protected feature {} must be categorical", pf.name))
        })?;
        let inputs = sample_range(&dist.reseeded(seed), &net.features, 0, n_eval as u64)?;
        let groups = inputs.iter().map(|x| x[protected] as usize).collect();
        Ok(EvalSet {
            inputs,
            groups,
            group_names: (0..cardinality).map(|v| pf.value_name(v)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Empirical `P(Y = label | F = f)` per protected value.
    pub fn group_rates(&self, net: &Network, label: usize) -> Result<Vec<f64>> {
        let k = self.group_names.len();
        let mut hits = vec![0usize; k];
        let mut totals = vec![0usize; k];
        for (x, &g) in self.inputs.iter().zip(&self.groups) {
            totals[g] += 1;
            if net.predict(x)? == label {
                hits[g] += 1;
            }
        }
        if let Some(g) = totals.iter().position(|&n| n == 0) {
            return Err(Error::EmptyGroup {
                group: self.group_names[g].clone(),
            });
        }
        Ok(hits
            .iter()
            .zip(&totals)
            .map(|(h, n)| *h as f64 / *n as f64)
            .collect())
    }

    pub fn prob_diff(&self, net: &Network, label: usize) -> Result<f64> {
        Ok(max_pairwise_diff(&self.group_rates(net, label)?))
    }
}

/// Samples `n_eval` inputs and returns the largest pairwise gap in the
/// empirical rate of `label` across protected groups.
pub fn estimate_prob_diff(
    net: &Network,
    dist: &InputDistribution,
    protected: usize,
    label: usize,
    n_eval: usize,
    seed: u64,
) -> Result<f64> {
    EvalSet::sample(net, dist, protected, n_eval, seed)?.prob_diff(net, label)
}

/// Search interval for a weight: `[0, 2w]` for positive weights, `[2w, 0]`
/// for negative ones and `[-0.1, 0.1]` around zero.
pub fn weight_bounds(w: f64) -> (f64, f64) {
    if w.abs() < NEAR_ZERO {
        (-NEAR_ZERO_HALF_WIDTH, NEAR_ZERO_HALF_WIDTH)
    } else if w > 0.0 {
        (0.0, 2.0 * w)
    } else {
        (2.0 * w, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchVector {
    pub coords: Vec<ParamAddr>,
    pub originals: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

fn target_params(net: &Network, target: Target) -> Result<Vec<ParamAddr>> {
    let unknown = || Error::UnknownTarget(target.id(&net.features));
    let params = match (&net.arch, target) {
        (Architecture::FeedForward(layers), Target::Neuron { layer, neuron }) => {
            let l = layers
                .get(layer)
                .filter(|l| neuron < l.output_width())
                .ok_or_else(unknown)?;
            neuron_row(layer, neuron, l.input_width())
        }
        (Architecture::FeedForward(layers), Target::Layer(layer)) => {
            let l = layers.get(layer).ok_or_else(unknown)?;
            (0..l.output_width())
                .flat_map(|j| neuron_row(layer, j, l.input_width()))
                .collect()
        }
        (Architecture::FeedForward(layers), Target::Feature(i)) => {
            if i >= layers[0].input_width() {
                return Err(unknown());
            }
            (0..layers[0].output_width())
                .map(|row| ParamAddr::Weight {
                    layer: 0,
                    row,
                    col: i,
                })
                .collect()
        }
        (Architecture::Recurrent(cell), Target::Neuron { layer: 0, neuron }) => {
            if neuron >= cell.hidden_width() {
                return Err(unknown());
            }
            cell_row(neuron, cell.step_width(), cell.hidden_width())
        }
        (Architecture::Recurrent(cell), Target::Layer(0)) => (0..cell.hidden_width())
            .flat_map(|j| cell_row(j, cell.step_width(), cell.hidden_width()))
            .collect(),
        (Architecture::Recurrent(cell), Target::Feature(i)) => {
            if i >= net.input_width() {
                return Err(unknown());
            }
            let col = i % cell.step_width();
            (0..cell.hidden_width())
                .map(|row| ParamAddr::CellInput { row, col })
                .collect()
        }
        _ => return Err(unknown()),
    };
    Ok(params)
}

fn neuron_row(layer: usize, row: usize, inputs: usize) -> Vec<ParamAddr> {
    (0..inputs)
        .map(|col| ParamAddr::Weight { layer, row, col })
        .chain(std::iter::once(ParamAddr::Bias { layer, row }))
        .collect()
}

fn cell_row(row: usize, step_width: usize, hidden: usize) -> Vec<ParamAddr> {
    (0..step_width)
        .map(|col| ParamAddr::CellInput { row, col })
        .chain((0..hidden).map(|col| ParamAddr::CellHidden { row, col }))
        .chain(std::iter::once(ParamAddr::CellBias { row }))
        .collect()
}

impl SearchVector {
    /// Incoming weights and bias of each hidden neuron, or the outgoing
    /// first-layer weights of each input feature.
    pub fn from_targets(net: &Network, targets: &[Target]) -> Result<Self> {
        let mut coords: Vec<ParamAddr> = Vec::new();
        for &t in targets {
            for addr in target_params(net, t)? {
                if !coords.contains(&addr) {
                    coords.push(addr);
                }
            }
        }
        let originals: Vec<f64> = coords
            .iter()
            .map(|&a| net.param(a).expect("address derived from network"))
            .collect();
        let bounds = originals.iter().map(|&w| weight_bounds(w)).collect();
        Ok(SearchVector {
            coords,
            originals,
            bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn install(&self, net: &Network, location: &[f64]) -> Network {
        let mut out = net.clone();
        for (&addr, &w) in self.coords.iter().zip(location) {
            out.set_param(addr, w)
                .expect("address derived from network");
        }
        out
    }

    pub fn contains(&self, location: &[f64]) -> bool {
        location
            .iter()
            .zip(&self.bounds)
            .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub prob_diff: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub best: Vec<f64>,
    pub best_fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub g_best: Vec<f64>,
    pub g_best_eval: Evaluation,
    pub omega: f64,
    pub c1: f64,
    pub c2: f64,
    pub iteration: usize,
    pub stall_count: usize,
}

pub type FitnessFn<'a> = dyn Fn(&[f64]) -> Result<Evaluation> + Sync + 'a;

/// One coordinate of `v <- omega v + r1 (p - x) + r2 (g - x)`.
#[inline]
pub fn velocity_update(
    omega: f64,
    v: f64,
    x: f64,
    p_best: f64,
    g_best: f64,
    r1: f64,
    r2: f64,
) -> f64 {
    omega * v + r1 * (p_best - x) + r2 * (g_best - x)
}

fn clamp_to(bounds: &[(f64, f64)], x: &mut [f64]) {
    for (xi, (lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(*lo, *hi);
    }
}

impl Swarm {
    /// Particle 0 sits at the original weights; the rest start within
    /// `INIT_SPREAD` of each bound interval around them. All velocities are zero.
    pub fn new<R: Rng>(
        search: &SearchVector,
        size: usize,
        (omega, c1, c2): (f64, f64, f64),
        fitness_fn: &FitnessFn<'_>,
        rng: &mut R,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument(
                "swarm size must be at least 1".into(),
            ));
        }
        let dim = search.len();
        let mut locations = vec![search.originals.clone()];
        for _ in 1..size {
            let mut x: Vec<f64> = search
                .originals
                .iter()
                .zip(&search.bounds)
                .map(|(w, (lo, hi))| w + rng.gen_range(-INIT_SPREAD..=INIT_SPREAD) * (hi - lo))
                .collect();
            clamp_to(&search.bounds, &mut x);
            locations.push(x);
        }
        let evals = locations
            .par_iter()
            .map(|x| fitness_fn(x))
            .collect::<Result<Vec<_>>>()?;
        let best = (0..size)
            .min_by(|&a, &b| {
                evals[a]
                    .fitness
                    .total_cmp(&evals[b].fitness)
                    .then(a.cmp(&b))
            })
            .expect("non-empty swarm");
        let particles = locations
            .into_iter()
            .zip(&evals)
            .map(|(x, e)| Particle {
                v: vec![0.0; dim],
                best: x.clone(),
                best_fitness: e.fitness,
                x,
            })
            .collect::<Vec<_>>();
        Ok(Swarm {
            g_best: particles[best].x.clone(),
            g_best_eval: evals[best],
            particles,
            omega,
            c1,
            c2,
            iteration: 0,
            stall_count: 0,
        })
    }
}

/// Moves every particle once, clamps to bounds, evaluates the new locations
/// (in parallel), and updates personal and global bests on strict improvement.
pub fn pso_step<R: Rng>(
    swarm: &mut Swarm,
    bounds: &[(f64, f64)],
    fitness_fn: &FitnessFn<'_>,
    rng: &mut R,
) -> Result<()> {
    let (omega, c1, c2) = (swarm.omega, swarm.c1, swarm.c2);
    let g_best = swarm.g_best.clone();
    for p in &mut swarm.particles {
        for (d, g) in g_best.iter().enumerate() {
            let r1 = rng.gen_range(0.0..=c1);
            let r2 = rng.gen_range(0.0..=c2);
            p.v[d] = velocity_update(omega, p.v[d], p.x[d], p.best[d], *g, r1, r2);
            p.x[d] += p.v[d];
        }
        clamp_to(bounds, &mut p.x);
    }
    let evals = swarm
        .particles
        .par_iter()
        .map(|p| fitness_fn(&p.x))
        .collect::<Result<Vec<_>>>()?;
    let mut improved = false;
    for (p, e) in swarm.particles.iter_mut().zip(evals) {
        if e.fitness < p.best_fitness {
            p.best = p.x.clone();
            p.best_fitness = e.fitness;
        }
        if e.fitness < swarm.g_best_eval.fitness {
            swarm.g_best = p.x.clone();
            swarm.g_best_eval = e;
            improved = true;
        }
    }
    swarm.iteration += 1;
    swarm.stall_count = if improved { 0 } else { swarm.stall_count + 1 };
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsoSettings {
    pub swarm_size: usize,
    pub omega: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_iterations: usize,
    pub stall_limit: usize,
    /// The search counts as fair once the evaluation-set gap is at most
    /// `xi - stop_margin`.
    pub stop_margin: f64,
    pub seed: u64,
}

impl Default for PsoSettings {
    fn default() -> Self {
        PsoSettings {
            swarm_size: DEFAULT_SWARM_SIZE,
            omega: DEFAULT_OMEGA,
            c1: DEFAULT_C,
            c2: DEFAULT_C,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            stall_limit: DEFAULT_STALL_LIMIT,
            stop_margin: 0.0,
            seed: 0,
        }
    }
}

pub struct RepairTask<'a> {
    /// Number of top-ranked targets whose weights are searched.
    pub k: usize,
    pub xi: f64,
    pub alpha: f64,
    pub label: usize,
    pub dataset: &'a [(Vec<f64>, usize)],
    pub eval: &'a EvalSet,
    pub settings: PsoSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairResult {
    pub prob_diff_before: f64,
    pub prob_diff_after: f64,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub iterations: usize,
    pub fairness_achieved: bool,
    pub targets: Vec<String>,
    pub coordinates: usize,
    /// Global best fitness after initialization and after every iteration.
    pub history: Vec<f64>,
}

pub fn repair_network(
    net: &Network,
    ranking: &SensitivityRanking,
    task: &RepairTask<'_>,
) -> Result<(Network, RepairResult)> {
    repair_network_observed(net, ranking, task, &mut |_, _| {})
}

/// As [`repair_network`], calling `observer` after initialization and after
/// every PSO iteration.
pub fn repair_network_observed(
    net: &Network,
    ranking: &SensitivityRanking,
    task: &RepairTask<'_>,
    observer: &mut dyn FnMut(&Swarm, &SearchVector),
) -> Result<(Network, RepairResult)> {
    if ranking.entries.is_empty() {
        return Err(Error::InvalidArgument(
            "sensitivity ranking is empty".into(),
        ));
    }
    if task.k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if task.dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let settings = &task.settings;
    let target = task.xi - settings.stop_margin;
    let evaluate = |candidate: &Network| -> Result<Evaluation> {
        let prob_diff = task.eval.prob_diff(candidate, task.label)?;
        let accuracy = eval_accuracy(candidate, task.dataset)?;
        Ok(Evaluation {
            fitness: fitness(prob_diff, accuracy, task.alpha)?,
            prob_diff,
            accuracy,
        })
    };
    let before = evaluate(net)?;
    let chosen: Vec<&crate::sensitivity::SensitivityEntry> =
        ranking.entries.iter().take(task.k).collect();
    let targets: Vec<Target> = chosen.iter().map(|e| e.target).collect();
    let target_ids: Vec<String> = chosen.iter().map(|e| e.id.clone()).collect();
    let search = SearchVector::from_targets(net, &targets)?;

    let unchanged = |iterations, history| RepairResult {
        prob_diff_before: before.prob_diff,
        prob_diff_after: before.prob_diff,
        accuracy_before: before.accuracy,
        accuracy_after: before.accuracy,
        iterations,
        fairness_achieved: before.prob_diff <= target,
        targets: target_ids.clone(),
        coordinates: search.len(),
        history,
    };
    if before.prob_diff <= target || search.is_empty() {
        return Ok((net.clone(), unchanged(0, vec![before.fitness])));
    }

    let fitness_fn = |x: &[f64]| evaluate(&search.install(net, x));
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut swarm = Swarm::new(
        &search,
        settings.swarm_size,
        (settings.omega, settings.c1, settings.c2),
        &fitness_fn,
        &mut rng,
    )?;
    let mut history = vec![swarm.g_best_eval.fitness];
    observer(&swarm, &search);
    while swarm.g_best_eval.prob_diff > target
        && swarm.iteration < settings.max_iterations
        && swarm.stall_count < settings.stall_limit
    {
        pso_step(&mut swarm, &search.bounds, &fitness_fn, &mut rng)?;
        history.push(swarm.g_best_eval.fitness);
        observer(&swarm, &search);
    }
    // the original weights are particle 0, so g_best is never worse than them
    let repaired = search.install(net, &swarm.g_best);
    let after = swarm.g_best_eval;
    Ok((
        repaired,
        RepairResult {
            prob_diff_before: before.prob_diff,
            prob_diff_after: after.prob_diff,
            accuracy_before: before.accuracy,
            accuracy_after: after.accuracy,
            iterations: swarm.iteration,
            fairness_achieved: after.prob_diff <= target,
            targets: target_ids,
            coordinates: search.len(),
            history,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitness_values() {
        assert_eq!(fitness(0.1683, 1.0, 0.1).unwrap(), 0.1683);
        assert_eq!(fitness(0.0, 1.0, 0.1).unwrap(), 0.0);
        assert!((fitness(0.2, 0.9, 0.1).unwrap() - 0.21).abs() < 1e-15);
        assert!(fitness(1.2, 0.9, 0.1).is_err());
        assert!(fitness(0.2, 0.9, 0.0).is_err());
    }

    #[test]
    fn fitness_tends_to_prob_diff_as_alpha_vanishes() {
        let f = fitness(0.37, 0.2, 1e-12).unwrap();
        assert!((f - 0.37).abs() < 1e-11);
    }

    #[test]
    fn velocity_fixed_point() {
        assert_eq!(velocity_update(0.729, 0.0, 0.4, 0.4, 0.4, 1.2, 0.3), 0.0);
    }

    #[test]
    fn velocity_hand_arithmetic() {
        let v = velocity_update(0.5, 0.2, 1.0, 1.2, 0.8, 1.0, 0.5);
        assert!((v - 0.2).abs() < 1e-15);
        assert!((1.0 + v - 1.2).abs() < 1e-15);
    }

    #[test]
    fn bounds_rules() {
        assert_eq!(weight_bounds(0.5), (0.0, 1.0));
        assert_eq!(weight_bounds(-0.5), (-1.0, 0.0));
        assert_eq!(weight_bounds(1e-9), (-0.1, 0.1));
    }

    #[test]
    fn clamping() {
        let mut x = vec![-3.0, 0.5, 9.0];
        clamp_to(&[(0.0, 1.0), (0.0, 1.0), (0.0, 2.0)], &mut x);
        assert_eq!(x, vec![0.0, 0.5, 2.0]);
    }

    /// 1-D quadratic: the swarm must never report a worse global best.
    #[test]
    fn global_best_never_worsens() {
        let search = SearchVector {
            coords: vec![ParamAddr::Bias { layer: 0, row: 0 }],
            originals: vec![1.0],
            bounds: vec![(0.0, 2.0)],
        };
        let f = |x: &[f64]| {
            let v = (x[0] - 0.3).powi(2);
            Ok(Evaluation {
                fitness: v,
                prob_diff: v,
                accuracy: 1.0,
            })
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut swarm = Swarm::new(
            &search,
            8,
            (DEFAULT_OMEGA, DEFAULT_C, DEFAULT_C),
            &f,
            &mut rng,
        )
        .unwrap();
        assert_eq!(swarm.particles[0].x, vec![1.0]);
        assert!(swarm.particles.iter().all(|p| p.v == vec![0.0]));
        let mut last = swarm.g_best_eval.fitness;
        for _ in 0..40 {
            pso_step(&mut swarm, &search.bounds, &f, &mut rng).unwrap();
            assert!(swarm.g_best_eval.fitness <= last);
            assert!(swarm.particles.iter().all(|p| search.contains(&p.x)));
            last = swarm.g_best_eval.fitness;
        }
        assert!((swarm.g_best[0] - 0.3).abs() < 1e-3);
    }

    #[test]
    fn stall_counter_counts_non_improving_steps() {
        let search = SearchVector {
            coords: vec![ParamAddr::Bias { layer: 0, row: 0 }],
            originals: vec![1.0],
            bounds: vec![(0.0, 2.0)],
        };
        let flat = |_: &[f64]| {
            Ok(Evaluation {
                fitness: 0.5,
                prob_diff: 0.5,
                accuracy: 1.0,
            })
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut swarm = Swarm::new(
            &search,
            4,
            (DEFAULT_OMEGA, DEFAULT_C, DEFAULT_C),
            &flat,
            &mut rng,
        )
        .unwrap();
        for i in 1..=10 {
            pso_step(&mut swarm, &search.bounds, &flat, &mut rng).unwrap();
            assert_eq!(swarm.stall_count, i);
        }
    }
}
