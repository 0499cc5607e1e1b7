//! Networks and helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use fairmc::model::{save_network, Activation, Architecture, FeatureSpec, Layer, Network};
use fairmc::sampler::{sample_range, InputDistribution};

pub fn layer(weights: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Layer {
    Layer::new(weights, bias, activation).unwrap()
}

fn labels() -> Vec<String> {
    vec!["no".into(), "yes".into()]
}

/// x0 is a protected binary attribute, x1 is noise on [0,1]. The network
/// predicts `yes` exactly when x0 = 1.
pub fn echo_net() -> Network {
    let features = vec![
        FeatureSpec::categorical("group", 0, 2)
            .protected()
            .with_values(&["A", "B"]),
        FeatureSpec::continuous("noise", 1, 0.0, 1.0),
    ];
    let hidden = layer(
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![0.0, 0.0],
        Activation::Relu,
    );
    let out = layer(vec![vec![20.0, 0.0]], vec![-10.0], Activation::Sigmoid);
    Network::new(
        Architecture::FeedForward(vec![hidden, out]),
        features,
        labels(),
    )
    .unwrap()
}

/// Same inputs as [`echo_net`], always predicts `yes`.
pub fn constant_net() -> Network {
    let mut net = echo_net();
    if let Architecture::FeedForward(layers) = &mut net.arch {
        layers[1] = layer(vec![vec![0.0, 0.0]], vec![5.0], Activation::Sigmoid);
    }
    net
}

/// Three layers. The true rule is `x1 + x2 > 1`; group x0 = 1 also gets
/// `yes` whenever `x1 + x2 > 0.55`, which opens a gap of 0.34875 between the
/// groups and costs 0.174 accuracy.
pub fn biased_net() -> Network {
    let features = vec![
        FeatureSpec::categorical("group", 0, 2)
            .protected()
            .with_values(&["A", "B"]),
        FeatureSpec::continuous("x1", 1, 0.0, 1.0),
        FeatureSpec::continuous("x2", 2, 0.0, 1.0),
        FeatureSpec::categorical("region", 3, 3),
    ];
    let l0 = layer(
        vec![
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, -1.0, -1.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.5],
        ],
        vec![-1.0, 1.0, 0.0, 0.0],
        Activation::Relu,
    );
    let l1 = layer(
        vec![
            vec![1.0, 0.0, 0.45, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.1],
        ],
        vec![0.0; 3],
        Activation::Relu,
    );
    let l2 = layer(vec![vec![20.0, -20.0, 0.0]], vec![0.0], Activation::Sigmoid);
    Network::new(
        Architecture::FeedForward(vec![l0, l1, l2]),
        features,
        labels(),
    )
    .unwrap()
}

/// Inputs drawn uniformly, labelled by the unbiased rule `x1 + x2 > 1`.
pub fn biased_dataset(n: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
    let net = biased_net();
    let dist = InputDistribution::uniform(net.features.len(), seed);
    sample_range(&dist, &net.features, 0, n as u64)
        .unwrap()
        .into_iter()
        .map(|x| {
            let y = usize::from(x[1] + x[2] > 1.0);
            (x, y)
        })
        .collect()
}

pub fn write_dataset(path: &Path, rows: &[(Vec<f64>, usize)]) {
    let mut text = String::new();
    for (x, y) in rows {
        let cells: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("{},{y}\n", cells.join(",")));
    }
    std::fs::write(path, text).unwrap();
}

pub fn write_model(path: &Path, net: &Network) {
    save_network(net, path).unwrap();
}
