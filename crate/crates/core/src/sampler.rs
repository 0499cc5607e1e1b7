//! IID input generation. Sample `i` of a run is drawn from its own ChaCha
//! stream, so any partition of the index range across workers reproduces the
//! serial sequence exactly.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FeatureKind, FeatureSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureDistribution {
    Uniform,
    /// Explicit probabilities over the values of a categorical feature.
    Weights(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputDistribution {
    pub per_feature: Vec<FeatureDistribution>,
    pub seed: u64,
}

impl InputDistribution {
    pub fn uniform(features: usize, seed: u64) -> Self {
        InputDistribution {
            per_feature: vec![FeatureDistribution::Uniform; features],
            seed,
        }
    }

    pub fn with_weights(mut self, feature: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "feature {feature}: weights must be finite and non-negative"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "feature {feature}: weights sum to {total}, expected 1"
            )));
        }
        let slot = self
            .per_feature
            .get_mut(feature)
            .ok_or_else(|| Error::DistributionMismatch(format!("no feature at index {feature}")))?;
        *slot = FeatureDistribution::Weights(weights);
        Ok(self)
    }

    pub fn reseeded(&self, seed: u64) -> Self {
        InputDistribution {
            per_feature: self.per_feature.clone(),
            seed,
        }
    }

    pub fn validate(&self, spec: &[FeatureSpec]) -> Result<()> {
        if self.per_feature.len() != spec.len() {
            return Err(Error::DistributionMismatch(format!(
                "{} feature distributions for {} features",
                self.per_feature.len(),
                spec.len()
            )));
        }
        for (d, f) in self.per_feature.iter().zip(spec) {
            if let FeatureDistribution::Weights(w) = d {
                match f.kind {
                    FeatureKind::Categorical { cardinality } if cardinality == w.len() => {}
                    FeatureKind::Categorical { cardinality } => {
                        return Err(Error::DistributionMismatch(format!(
                            "feature {}: {} weights for cardinality {cardinality}",
                            f.name,
                            w.len()
                        )))
                    }
                    FeatureKind::Continuous { .. } => {
                        return Err(Error::DistributionMismatch(format!(
                            "feature {}: weights given for a continuous feature",
                            f.name
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Probability that categorical `feature` takes `value`.
    pub fn value_probability(&self, spec: &FeatureSpec, value: usize) -> f64 {
        match (&self.per_feature[spec.index], spec.kind) {
            (FeatureDistribution::Weights(w), _) => w.get(value).copied().unwrap_or(0.0),
            (FeatureDistribution::Uniform, FeatureKind::Categorical { cardinality }) => {
                if value < cardinality {
                    1.0 / cardinality as f64
                } else {
                    0.0
                }
            }
            (FeatureDistribution::Uniform, FeatureKind::Continuous { .. }) => 0.0,
        }
    }
}

/// SplitMix64 finalizer over `(master, index)`; used for per-worker and
/// per-phase seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws one input vector. Categorical coordinates are integers in
/// `0..cardinality`; continuous ones lie in `[lo, hi]`.
pub fn sample_input<R: Rng + ?Sized>(
    dist: &InputDistribution,
    spec: &[FeatureSpec],
    rng: &mut R,
) -> Result<Vec<f64>> {
    dist.validate(spec)?;
    Ok(draw(dist, spec, rng))
}

fn draw<R: Rng + ?Sized>(dist: &InputDistribution, spec: &[FeatureSpec], rng: &mut R) -> Vec<f64> {
    spec.iter()
        .zip(&dist.per_feature)
        .map(|(f, d)| match (d, f.kind) {
            (FeatureDistribution::Weights(w), _) => WeightedIndex::new(w)
                .expect("validated weights")
                .sample(rng) as f64,
            (FeatureDistribution::Uniform, FeatureKind::Categorical { cardinality }) => {
                rng.gen_range(0..cardinality) as f64
            }
            (FeatureDistribution::Uniform, FeatureKind::Continuous { lo, hi }) => {
                rng.gen_range(lo..=hi)
            }
        })
        .collect()
}

/// The `index`-th sample of the run seeded by `dist.seed`.
pub fn sample_at(dist: &InputDistribution, spec: &[FeatureSpec], index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(dist.seed);
    rng.set_stream(index);
    draw(dist, spec, &mut rng)
}

/// Samples with indices `start..start + n`, generated in parallel.
pub fn sample_range(
    dist: &InputDistribution,
    spec: &[FeatureSpec],
    start: u64,
    n: u64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    dist.validate(spec)?;
    Ok((start..start + n)
        .into_par_iter()
        .map(|i| sample_at(dist, spec, i))
        .collect())
}

pub fn sample_batch(
    dist: &InputDistribution,
    spec: &[FeatureSpec],
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    sample_range(dist, spec, 0, n as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> Vec<FeatureSpec> {
        vec![
            FeatureSpec::categorical("c", 0, 4).protected(),
            FeatureSpec::continuous("x", 1, -2.0, 3.0),
        ]
    }

    #[test]
    fn categorical_and_continuous_ranges() {
        let dist = InputDistribution::uniform(2, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = sample_input(&dist, &spec(), &mut rng).unwrap();
            assert!([0.0, 1.0, 2.0, 3.0].contains(&x[0]));
            assert!((-2.0..=3.0).contains(&x[1]));
        }
    }

    #[test]
    fn degenerate_weights_always_pick_the_mass() {
        let dist = InputDistribution::uniform(2, 7)
            .with_weights(0, vec![0.0, 0.0, 1.0, 0.0])
            .unwrap();
        let batch = sample_batch(&dist, &spec(), 200).unwrap();
        assert!(batch.iter().all(|x| x[0] == 2.0));
    }

    #[test]
    fn same_seed_same_stream() {
        let dist = InputDistribution::uniform(2, 42);
        assert_eq!(
            sample_batch(&dist, &spec(), 100).unwrap(),
            sample_batch(&dist, &spec(), 100).unwrap()
        );
        let other = dist.reseeded(43);
        assert_ne!(
            sample_batch(&dist, &spec(), 100).unwrap(),
            sample_batch(&other, &spec(), 100).unwrap()
        );
    }

    #[test]
    fn batch_errors() {
        let dist = InputDistribution::uniform(2, 0);
        assert_eq!(sample_batch(&dist, &spec(), 100).unwrap().len(), 100);
        assert!(sample_batch(&dist, &spec(), 0).is_err());
        let short = InputDistribution::uniform(1, 0);
        assert!(matches!(
            sample_batch(&short, &spec(), 3),
            Err(Error::DistributionMismatch(_))
        ));
    }

    #[test]
    fn bad_weights_rejected() {
        let d = InputDistribution::uniform(2, 0);
        assert!(d.clone().with_weights(0, vec![0.5, 0.6, 0.0, 0.0]).is_err());
        assert!(d
            .clone()
            .with_weights(0, vec![-0.5, 1.5, 0.0, 0.0])
            .is_err());
        let wrong_len = d.clone().with_weights(0, vec![0.5, 0.5]).unwrap();
        assert!(wrong_len.validate(&spec()).is_err());
        let on_continuous = d.with_weights(1, vec![1.0]).unwrap();
        assert!(on_continuous.validate(&spec()).is_err());
    }

    #[test]
    fn partitioned_workers_match_serial() {
        let dist = InputDistribution::uniform(2, 99);
        let serial = sample_batch(&dist, &spec(), 1000).unwrap();
        let parts: Vec<Vec<Vec<f64>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..4u64)
                .map(|w| {
                    let d = &dist;
                    s.spawn(move || sample_range(d, &spec(), w * 250, 250).unwrap())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut merged: Vec<Vec<f64>> = parts.into_iter().flatten().collect();
        let mut serial_sorted = serial.clone();
        let key = |a: &Vec<f64>, b: &Vec<f64>| a.partial_cmp(b).unwrap();
        merged.sort_by(key);
        serial_sorted.sort_by(key);
        assert_eq!(merged, serial_sorted);
    }

    #[test]
    fn uniform_categorical_frequencies_converge() {
        let dist = InputDistribution::uniform(2, 2024);
        let batch = sample_batch(&dist, &spec(), 100_000).unwrap();
        let mut counts = [0usize; 4];
        for x in &batch {
            counts[x[0] as usize] += 1;
        }
        for c in counts {
            let f = c as f64 / 100_000.0;
            assert!((0.24..=0.26).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..64).map(|i| derive_seed(5, i)).collect();
        assert_eq!(seeds.len(), 64);
    }
}
