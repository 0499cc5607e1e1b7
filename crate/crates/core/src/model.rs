//! Neural network under verification: feed-forward stacks of affine layers and
//! Elman-style recurrent cells, plus the JSON model format and CSV datasets.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn parse(layer: usize, name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::UnknownActivation {
                layer,
                name: other.to_string(),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Affine map followed by an element-wise activation. `weights` is row-major,
/// one row per output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let layer = Layer {
            weights,
            bias,
            activation,
        };
        layer.validate(0)?;
        Ok(layer)
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::DimensionMismatch {
                layer: index,
                detail: "weight matrix has no rows".into(),
            });
        }
        let cols = self.weights[0].len();
        if cols == 0 {
            return Err(Error::DimensionMismatch {
                layer: index,
                detail: "weight matrix has no columns".into(),
            });
        }
        if let Some((r, row)) = self
            .weights
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != cols)
        {
            return Err(Error::DimensionMismatch {
                layer: index,
                detail: format!("row {r} has {} columns, expected {cols}", row.len()),
            });
        }
        if self.bias.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                layer: index,
                detail: format!(
                    "bias length {} does not match {} output rows",
                    self.bias.len(),
                    self.weights.len()
                ),
            });
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.weights[0].len()
    }

    pub fn output_width(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| {
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
                self.activation.apply(z)
            })
            .collect()
    }
}

/// `h_{t+1} = act(W x_t + U h_t + b)`, starting from `h_0 = 0`; the readout
/// layer maps the final hidden state to the output.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentCell {
    pub input_weights: Vec<Vec<f64>>,
    pub hidden_weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub readout: Layer,
}

impl RecurrentCell {
    pub fn hidden_width(&self) -> usize {
        self.hidden_weights.len()
    }

    pub fn step_width(&self) -> usize {
        self.input_weights.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden_weights.len();
        let err = |detail: String| Error::DimensionMismatch { layer: 0, detail };
        if h == 0 {
            return Err(err("recurrent cell has no hidden units".into()));
        }
        if let Some(row) = self.hidden_weights.iter().find(|r| r.len() != h) {
            return Err(err(format!(
                "hidden weights must be square ({h}x{h}), found a row of length {}",
                row.len()
            )));
        }
        if self.input_weights.len() != h {
            return Err(err(format!(
                "input weights have {} rows, expected {h}",
                self.input_weights.len()
            )));
        }
        let d = self.step_width();
        if d == 0 || self.input_weights.iter().any(|r| r.len() != d) {
            return Err(err("input weights rows must share a non-zero width".into()));
        }
        if self.bias.len() != h {
            return Err(err(format!("bias length {} expected {h}", self.bias.len())));
        }
        self.readout.validate(1)?;
        if self.readout.input_width() != h {
            return Err(Error::DimensionMismatch {
                layer: 1,
                detail: format!(
                    "readout input width {} does not match hidden width {h}",
                    self.readout.input_width()
                ),
            });
        }
        Ok(())
    }

    fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        (0..self.hidden_width())
            .map(|j| {
                let zx: f64 = self.input_weights[j]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum();
                let zh: f64 = self.hidden_weights[j]
                    .iter()
                    .zip(h)
                    .map(|(w, v)| w * v)
                    .sum();
                self.activation.apply(zx + zh + self.bias[j])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    FeedForward(Vec<Layer>),
    Recurrent(RecurrentCell),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkKind {
    FeedForward,
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind {
    Categorical { cardinality: usize },
    Continuous { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub index: usize,
    pub kind: FeatureKind,
    pub protected: bool,
    /// Optional display names for categorical values.
    pub values: Vec<String>,
}

impl FeatureSpec {
    pub fn categorical(name: &str, index: usize, cardinality: usize) -> Self {
        FeatureSpec {
            name: name.to_string(),
            index,
            kind: FeatureKind::Categorical { cardinality },
            protected: false,
            values: Vec::new(),
        }
    }

    pub fn continuous(name: &str, index: usize, lo: f64, hi: f64) -> Self {
        FeatureSpec {
            name: name.to_string(),
            index,
            kind: FeatureKind::Continuous { lo, hi },
            protected: false,
            values: Vec::new(),
        }
    }

    pub fn protected(mut self) -> Self {
        self.protected = true;
        self
    }

    pub fn with_values(mut self, values: &[&str]) -> Self {
        self.values = values.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn cardinality(&self) -> Option<usize> {
        match self.kind {
            FeatureKind::Categorical { cardinality } => Some(cardinality),
            FeatureKind::Continuous { .. } => None,
        }
    }

    /// Display name of categorical value `v`.
    pub fn value_name(&self, v: usize) -> String {
        self.values
            .get(v)
            .cloned()
            .unwrap_or_else(|| format!("{}={v}", self.name))
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            FeatureKind::Categorical { cardinality } if cardinality < 2 => {
                Err(Error::InvalidModel(format!(
                    "feature {}: cardinality must be at least 2",
                    self.name
                )))
            }
            FeatureKind::Continuous { lo, hi } if lo.is_nan() || hi.is_nan() || lo >= hi => {
                Err(Error::InvalidModel(format!(
                    "feature {}: continuous range requires lo < hi",
                    self.name
                )))
            }
            FeatureKind::Categorical { cardinality }
                if !self.values.is_empty() && self.values.len() != cardinality =>
            {
                Err(Error::InvalidModel(format!(
                    "feature {}: {} value names for cardinality {cardinality}",
                    self.name,
                    self.values.len()
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Recorded activations for one input. `steps[i]` holds hidden layer `i`
/// (feed-forward) or the hidden state after timestep `i` (recurrent).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub input: Vec<f64>,
    pub steps: Vec<Vec<f64>>,
    pub output: Vec<f64>,
    pub label: usize,
}

/// Address of a single trainable scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamAddr {
    Weight {
        layer: usize,
        row: usize,
        col: usize,
    },
    Bias {
        layer: usize,
        row: usize,
    },
    CellInput {
        row: usize,
        col: usize,
    },
    CellHidden {
        row: usize,
        col: usize,
    },
    CellBias {
        row: usize,
    },
}

impl fmt::Display for ParamAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ParamAddr::Weight { layer, row, col } => write!(f, "W{layer}[{row},{col}]"),
            ParamAddr::Bias { layer, row } => write!(f, "b{layer}[{row}]"),
            ParamAddr::CellInput { row, col } => write!(f, "Wx[{row},{col}]"),
            ParamAddr::CellHidden { row, col } => write!(f, "Wh[{row},{col}]"),
            ParamAddr::CellBias { row } => write!(f, "bh[{row}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub arch: Architecture,
    pub features: Vec<FeatureSpec>,
    pub labels: Vec<String>,
}

impl Network {
    pub fn new(
        arch: Architecture,
        mut features: Vec<FeatureSpec>,
        labels: Vec<String>,
    ) -> Result<Self> {
        features.sort_by_key(|f| f.index);
        let net = Network {
            arch,
            features,
            labels,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        match &self.arch {
            Architecture::FeedForward(layers) => {
                if layers.is_empty() {
                    return Err(Error::InvalidModel("network has no layers".into()));
                }
                for (i, layer) in layers.iter().enumerate() {
                    layer.validate(i)?;
                }
                for (i, pair) in layers.windows(2).enumerate() {
                    if pair[0].output_width() != pair[1].input_width() {
                        return Err(Error::DimensionMismatch {
                            layer: i + 1,
                            detail: format!(
                                "layer {i} outputs {} values but layer {} expects {}",
                                pair[0].output_width(),
                                i + 1,
                                pair[1].input_width()
                            ),
                        });
                    }
                }
                if layers[0].input_width() != self.features.len() {
                    return Err(Error::DimensionMismatch {
                        layer: 0,
                        detail: format!(
                            "input width {} but {} features declared",
                            layers[0].input_width(),
                            self.features.len()
                        ),
                    });
                }
            }
            Architecture::Recurrent(cell) => {
                cell.validate()?;
                let d = cell.step_width();
                if self.features.is_empty() || !self.features.len().is_multiple_of(d) {
                    return Err(Error::DimensionMismatch {
                        layer: 0,
                        detail: format!(
                            "{} features cannot be split into steps of width {d}",
                            self.features.len()
                        ),
                    });
                }
            }
        }
        for (i, f) in self.features.iter().enumerate() {
            if f.index != i {
                return Err(Error::InvalidModel(format!(
                    "feature indices must be 0..{} without gaps; found {} at position {i}",
                    self.features.len(),
                    f.index
                )));
            }
            f.validate()?;
        }
        let out = self.output_layer().output_width();
        if self.labels.len() < 2 {
            return Err(Error::InvalidModel("at least two labels required".into()));
        }
        if out != self.labels.len() && !(out == 1 && self.labels.len() == 2) {
            return Err(Error::InvalidModel(format!(
                "output width {out} does not match {} labels",
                self.labels.len()
            )));
        }
        Ok(())
    }

    pub fn kind(&self) -> NetworkKind {
        match self.arch {
            Architecture::FeedForward(_) => NetworkKind::FeedForward,
            Architecture::Recurrent(_) => NetworkKind::Recurrent,
        }
    }

    pub fn input_width(&self) -> usize {
        self.features.len()
    }

    fn output_layer(&self) -> &Layer {
        match &self.arch {
            Architecture::FeedForward(layers) => layers.last().expect("validated non-empty"),
            Architecture::Recurrent(cell) => &cell.readout,
        }
    }

    /// Number of entries `forward_trace` records: hidden layers, or timesteps.
    pub fn step_count(&self) -> usize {
        match &self.arch {
            Architecture::FeedForward(layers) => layers.len() - 1,
            Architecture::Recurrent(cell) => self.features.len() / cell.step_width(),
        }
    }

    /// Width of the activation vector recorded at `step`, if it exists.
    pub fn step_width(&self, step: usize) -> Option<usize> {
        match &self.arch {
            Architecture::FeedForward(layers) if step + 1 < layers.len() => {
                Some(layers[step].output_width())
            }
            Architecture::FeedForward(_) => None,
            // every timestep shares the same cell; step 0 names the cell
            Architecture::Recurrent(cell) => Some(cell.hidden_width()),
        }
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn label_index(&self, id: &str) -> Option<usize> {
        self.labels
            .iter()
            .position(|l| l == id)
            .or_else(|| id.parse::<usize>().ok().filter(|&i| i < self.labels.len()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::InputLength {
                expected: self.input_width(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(match &self.arch {
            Architecture::FeedForward(layers) => {
                let mut a = layers[0].apply(x);
                for layer in &layers[1..] {
                    a = layer.apply(&a);
                }
                a
            }
            Architecture::Recurrent(cell) => {
                let mut h = vec![0.0; cell.hidden_width()];
                for xt in x.chunks(cell.step_width()) {
                    h = cell.step(xt, &h);
                }
                cell.readout.apply(&h)
            }
        })
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ActivationTrace> {
        self.check_input(x)?;
        let (steps, output) = match &self.arch {
            Architecture::FeedForward(layers) => {
                let mut steps = Vec::with_capacity(layers.len() - 1);
                let mut a = layers[0].apply(x);
                for layer in &layers[1..] {
                    let next = layer.apply(&a);
                    steps.push(a);
                    a = next;
                }
                (steps, a)
            }
            Architecture::Recurrent(cell) => {
                let mut steps = Vec::with_capacity(self.step_count());
                let mut h = vec![0.0; cell.hidden_width()];
                for xt in x.chunks(cell.step_width()) {
                    h = cell.step(xt, &h);
                    steps.push(h.clone());
                }
                (steps, cell.readout.apply(&h))
            }
        };
        let label = self.predict_label(&output)?;
        Ok(ActivationTrace {
            input: x.to_vec(),
            steps,
            output,
            label,
        })
    }

    /// Argmax with ties to the lowest index; a single output is thresholded at 0.5.
    pub fn predict_label(&self, output: &[f64]) -> Result<usize> {
        if output.len() == 1 && self.labels.len() == 2 {
            return Ok(usize::from(output[0] >= 0.5));
        }
        if output.len() != self.labels.len() {
            return Err(Error::InvalidArgument(format!(
                "output width {} does not match {} labels",
                output.len(),
                self.labels.len()
            )));
        }
        let mut best = 0;
        for (i, &v) in output.iter().enumerate().skip(1) {
            if v > output[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let out = self.forward(x)?;
        self.predict_label(&out)
    }

    pub fn param(&self, addr: ParamAddr) -> Option<f64> {
        match (&self.arch, addr) {
            (Architecture::FeedForward(layers), ParamAddr::Weight { layer, row, col }) => {
                layers.get(layer)?.weights.get(row)?.get(col).copied()
            }
            (Architecture::FeedForward(layers), ParamAddr::Bias { layer, row }) => {
                layers.get(layer)?.bias.get(row).copied()
            }
            (Architecture::Recurrent(cell), ParamAddr::Weight { layer: 0, row, col }) => {
                cell.readout.weights.get(row)?.get(col).copied()
            }
            (Architecture::Recurrent(cell), ParamAddr::Bias { layer: 0, row }) => {
                cell.readout.bias.get(row).copied()
            }
            (Architecture::Recurrent(cell), ParamAddr::CellInput { row, col }) => {
                cell.input_weights.get(row)?.get(col).copied()
            }
            (Architecture::Recurrent(cell), ParamAddr::CellHidden { row, col }) => {
                cell.hidden_weights.get(row)?.get(col).copied()
            }
            (Architecture::Recurrent(cell), ParamAddr::CellBias { row }) => {
                cell.bias.get(row).copied()
            }
            _ => None,
        }
    }

    pub fn set_param(&mut self, addr: ParamAddr, value: f64) -> Result<()> {
        let slot = match (&mut self.arch, addr) {
            (Architecture::FeedForward(layers), ParamAddr::Weight { layer, row, col }) => layers
                .get_mut(layer)
                .and_then(|l| l.weights.get_mut(row))
                .and_then(|r| r.get_mut(col)),
            (Architecture::FeedForward(layers), ParamAddr::Bias { layer, row }) => {
                layers.get_mut(layer).and_then(|l| l.bias.get_mut(row))
            }
            (Architecture::Recurrent(cell), ParamAddr::Weight { layer: 0, row, col }) => cell
                .readout
                .weights
                .get_mut(row)
                .and_then(|r| r.get_mut(col)),
            (Architecture::Recurrent(cell), ParamAddr::Bias { layer: 0, row }) => {
                cell.readout.bias.get_mut(row)
            }
            (Architecture::Recurrent(cell), ParamAddr::CellInput { row, col }) => {
                cell.input_weights.get_mut(row).and_then(|r| r.get_mut(col))
            }
            (Architecture::Recurrent(cell), ParamAddr::CellHidden { row, col }) => cell
                .hidden_weights
                .get_mut(row)
                .and_then(|r| r.get_mut(col)),
            (Architecture::Recurrent(cell), ParamAddr::CellBias { row }) => cell.bias.get_mut(row),
            _ => None,
        };
        match slot {
            Some(w) => {
                *w = value;
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!("no parameter at {addr}"))),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
        file.into_network()
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Network::from_json(&text)
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, net.to_json()).map_err(|e| Error::io(path, e))
}

/// Fraction of rows whose predicted label matches the recorded one.
pub fn eval_accuracy(net: &Network, dataset: &[(Vec<f64>, usize)]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for (x, y) in dataset {
        if net.predict(x)? == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Reads a CSV dataset; the last column is the label (index or label name).
/// A leading row that does not parse as numbers is treated as a header.
pub fn load_dataset(path: impl AsRef<Path>, net: &Network) -> Result<Vec<(Vec<f64>, usize)>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if record.len() < 2 {
            return Err(Error::Parse(format!(
                "{}:{}: too few columns",
                path.display(),
                line + 1
            )));
        }
        let n = record.len() - 1;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().take(n).map(str::parse::<f64>).collect();
        let x = match parsed {
            Ok(x) => x,
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::Parse(format!(
                    "{}:{}: {e}",
                    path.display(),
                    line + 1
                )));
            }
        };
        if x.len() != net.input_width() {
            return Err(Error::InputLength {
                expected: net.input_width(),
                actual: x.len(),
            });
        }
        let raw = &record[n];
        let y = net.label_index(raw).ok_or_else(|| {
            Error::Parse(format!(
                "{}:{}: unknown label `{raw}`",
                path.display(),
                line + 1
            ))
        })?;
        rows.push((x, y));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(rows)
}

// On-disk representation.

#[derive(Debug, Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CellFile {
    input_weights: Vec<Vec<f64>>,
    hidden_weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: String,
    readout: LayerFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureFile {
    name: String,
    index: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cardinality: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(default)]
    protected: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    values: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    kind: NetworkKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    layers: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cell: Option<CellFile>,
    features: Vec<FeatureFile>,
    labels: Vec<Value>,
}

impl LayerFile {
    fn into_layer(self, index: usize) -> Result<Layer> {
        let activation = Activation::parse(index, &self.activation)?;
        let layer = Layer {
            weights: self.weights,
            bias: self.bias,
            activation,
        };
        layer.validate(index)?;
        Ok(layer)
    }

    fn from_layer(layer: &Layer) -> Self {
        LayerFile {
            weights: layer.weights.clone(),
            bias: layer.bias.clone(),
            activation: layer.activation.name().to_string(),
        }
    }
}

impl FeatureFile {
    fn into_spec(self) -> Result<FeatureSpec> {
        let kind = match self.kind.as_str() {
            "categorical" => FeatureKind::Categorical {
                cardinality: self.cardinality.ok_or_else(|| {
                    Error::InvalidModel(format!("feature {}: missing cardinality", self.name))
                })?,
            },
            "continuous" => match (self.lo, self.hi) {
                (Some(lo), Some(hi)) => FeatureKind::Continuous { lo, hi },
                _ => {
                    return Err(Error::InvalidModel(format!(
                        "feature {}: continuous features need lo and hi",
                        self.name
                    )))
                }
            },
            other => {
                return Err(Error::InvalidModel(format!(
                    "feature {}: unknown kind `{other}`",
                    self.name
                )))
            }
        };
        Ok(FeatureSpec {
            name: self.name,
            index: self.index,
            kind,
            protected: self.protected,
            values: self.values,
        })
    }

    fn from_spec(f: &FeatureSpec) -> Self {
        let (kind, cardinality, lo, hi) = match f.kind {
            FeatureKind::Categorical { cardinality } => {
                ("categorical", Some(cardinality), None, None)
            }
            FeatureKind::Continuous { lo, hi } => ("continuous", None, Some(lo), Some(hi)),
        };
        FeatureFile {
            name: f.name.clone(),
            index: f.index,
            kind: kind.to_string(),
            cardinality,
            lo,
            hi,
            protected: f.protected,
            values: f.values.clone(),
        }
    }
}

impl ModelFile {
    fn into_network(self) -> Result<Network> {
        let arch = match self.kind {
            NetworkKind::FeedForward => {
                if self.cell.is_some() {
                    return Err(Error::InvalidModel(
                        "feed-forward model must not have a `cell`".into(),
                    ));
                }
                let layers = self
                    .layers
                    .into_iter()
                    .enumerate()
                    .map(|(i, l)| l.into_layer(i))
                    .collect::<Result<Vec<_>>>()?;
                Architecture::FeedForward(layers)
            }
            NetworkKind::Recurrent => {
                let cell = self.cell.ok_or_else(|| {
                    Error::InvalidModel("recurrent model requires a `cell`".into())
                })?;
                let activation = Activation::parse(0, &cell.activation)?;
                Architecture::Recurrent(RecurrentCell {
                    input_weights: cell.input_weights,
                    hidden_weights: cell.hidden_weights,
                    bias: cell.bias,
                    activation,
                    readout: cell.readout.into_layer(1)?,
                })
            }
        };
        let features = self
            .features
            .into_iter()
            .map(FeatureFile::into_spec)
            .collect::<Result<Vec<_>>>()?;
        let labels = self
            .labels
            .into_iter()
            .map(|v| match v {
                Value::String(s) => s,
                other => other.to_string(),
            })
            .collect();
        Network::new(arch, features, labels)
    }
}

impl From<&Network> for ModelFile {
    fn from(net: &Network) -> Self {
        let (layers, cell) = match &net.arch {
            Architecture::FeedForward(layers) => {
                (layers.iter().map(LayerFile::from_layer).collect(), None)
            }
            Architecture::Recurrent(c) => (
                Vec::new(),
                Some(CellFile {
                    input_weights: c.input_weights.clone(),
                    hidden_weights: c.hidden_weights.clone(),
                    bias: c.bias.clone(),
                    activation: c.activation.name().to_string(),
                    readout: LayerFile::from_layer(&c.readout),
                }),
            ),
        };
        ModelFile {
            kind: net.kind(),
            layers,
            cell,
            features: net.features.iter().map(FeatureFile::from_spec).collect(),
            labels: net.labels.iter().cloned().map(Value::String).collect(),
        }
    }
}
