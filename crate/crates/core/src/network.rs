//! Feedforward network model, input regions, and on-disk formats.
//!
//! A [`Network`] is a sequence of affine and elementwise-ReLU layers ending in
//! an affine layer whose outputs are class scores. Two formats are supported:
//! a small JSON schema and the text `.nnet` format used for ACAS-Xu style
//! controllers (normalization folded into the weights at load time).

pub mod nnet;

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One layer of a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `y = W x + b`, with `weights[i]` the row producing output `i`.
    Affine {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    /// `y_i = max(x_i, 0)` elementwise.
    Relu,
}

impl Layer {
    /// Output width given the incoming width, or None if shapes do not fit.
    fn out_width(&self, in_width: usize) -> Option<usize> {
        match self {
            Layer::Affine { weights, bias } => {
                if weights.is_empty()
                    || weights.len() != bias.len()
                    || weights.iter().any(|row| row.len() != in_width)
                {
                    None
                } else {
                    Some(weights.len())
                }
            }
            Layer::Relu => Some(in_width),
        }
    }

    fn values_finite(&self) -> bool {
        match self {
            Layer::Affine { weights, bias } => {
                weights.iter().flatten().all(|w| w.is_finite()) && bias.iter().all(|b| b.is_finite())
            }
            Layer::Relu => true,
        }
    }
}

/// A validated feedforward ReLU network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

impl Network {
    /// Builds a network, checking that consecutive layer dimensions match,
    /// the first and last layers are affine, and all entries are finite.
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Shape("input dimension must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        if !matches!(layers.first(), Some(Layer::Affine { .. })) {
            return Err(Error::Shape("first layer must be affine".into()));
        }
        if !matches!(layers.last(), Some(Layer::Affine { .. })) {
            return Err(Error::Shape("final layer must be affine".into()));
        }
        let mut width = input_dim;
        for (k, layer) in layers.iter().enumerate() {
            if !layer.values_finite() {
                return Err(Error::Shape(format!("layer {k} contains NaN or infinite values")));
            }
            width = layer.out_width(width).ok_or_else(|| {
                Error::Shape(format!("layer {k} does not accept width {width}"))
            })?;
        }
        Ok(Network {
            layers,
            input_dim,
            output_dim: width,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Number of ReLU neurons over all layers.
    pub fn relu_count(&self) -> usize {
        let mut width = self.input_dim;
        let mut count = 0;
        for layer in &self.layers {
            match layer {
                Layer::Affine { weights, .. } => width = weights.len(),
                Layer::Relu => count += width,
            }
        }
        count
    }

    /// Evaluates the network on a single input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut cur = x.to_vec();
        for layer in &self.layers {
            match layer {
                Layer::Affine { weights, bias } => {
                    let mut next = Vec::with_capacity(weights.len());
                    for (row, b) in weights.iter().zip(bias) {
                        let mut acc = *b;
                        for (w, v) in row.iter().zip(&cur) {
                            acc += w * v;
                        }
                        next.push(acc);
                    }
                    cur = next;
                }
                Layer::Relu => {
                    for v in &mut cur {
                        *v = v.max(0.0);
                    }
                }
            }
        }
        Ok(cur)
    }

    /// Predicted label: index of the maximal score, ties to the lowest index.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        let scores = self.forward(x)?;
        let mut best = 0;
        for (i, s) in scores.iter().enumerate().skip(1) {
            if *s > scores[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Parses the JSON network schema:
    /// `{"layers": [{"weights": [[...]], "bias": [...]}, {"relu": true}, ...]}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: NetworkSpec =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("network json: {e}")))?;
        spec.into_network()
    }

    /// Serializes to the JSON network schema. Weights survive a round trip
    /// bit-exactly.
    pub fn to_json_string(&self) -> String {
        let spec = NetworkSpec::from_network(self);
        // Serialization of these plain vectors cannot fail.
        serde_json::to_string_pretty(&spec).expect("network serialization")
    }
}

/// On-disk format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetFormat {
    Json,
    Nnet,
}

impl NetFormat {
    /// Infers the format from a file extension; `.nnet` is text ACAS-Xu,
    /// anything else is treated as JSON.
    pub fn from_path(path: &Path) -> NetFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("nnet") => NetFormat::Nnet,
            _ => NetFormat::Json,
        }
    }
}

impl fmt::Display for NetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetFormat::Json => write!(f, "json"),
            NetFormat::Nnet => write!(f, "nnet"),
        }
    }
}

/// Loads a network from disk in the given format.
pub fn load_network(path: &Path, format: NetFormat) -> Result<Network> {
    let text = fs::read_to_string(path)?;
    match format {
        NetFormat::Json => Network::from_json_str(&text),
        NetFormat::Nnet => nnet::from_str(&text),
    }
}

/// Saves a network to disk in the given format.
pub fn save_network(net: &Network, path: &Path, format: NetFormat) -> Result<()> {
    let text = match format {
        NetFormat::Json => net.to_json_string(),
        NetFormat::Nnet => nnet::to_string(net)?,
    };
    fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LayerSpec {
    Affine { weights: Vec<Vec<f64>>, bias: Vec<f64> },
    Relu { relu: bool },
}

impl NetworkSpec {
    fn from_network(net: &Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Affine { weights, bias } => LayerSpec::Affine {
                    weights: weights.clone(),
                    bias: bias.clone(),
                },
                Layer::Relu => LayerSpec::Relu { relu: true },
            })
            .collect();
        NetworkSpec { layers }
    }

    fn into_network(self) -> Result<Network> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, spec) in self.layers.into_iter().enumerate() {
            layers.push(match spec {
                LayerSpec::Affine { weights, bias } => Layer::Affine { weights, bias },
                LayerSpec::Relu { relu } => {
                    if !relu {
                        return Err(Error::Parse(format!("layer {k}: \"relu\" must be true")));
                    }
                    Layer::Relu
                }
            });
        }
        let input_dim = match layers.first() {
            Some(Layer::Affine { weights, .. }) if !weights.is_empty() => weights[0].len(),
            _ => return Err(Error::Parse("first layer must be affine".into())),
        };
        Network::new(input_dim, layers)
    }
}

/// An axis-aligned box of inputs, `lower[i] <= x_i <= upper[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Shape("box bounds must be non-empty and equal length".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(Error::Shape(format!("box dimension {i}: bad interval [{l}, {u}]")));
            }
        }
        Ok(InputBox { lower, upper })
    }

    /// The L-infinity ball of radius `r` around `center`.
    pub fn linf_ball(center: &[f64], r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Shape(format!("radius must be positive and finite, got {r}")));
        }
        InputBox::new(
            center.iter().map(|c| c - r).collect(),
            center.iter().map(|c| c + r).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, x: &[f64], eps: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - eps && *v <= u + eps)
    }

    /// Uniform sample from the box.
    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + rng.gen::<f64>() * (u - l))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_json() -> &'static str {
        r#"{
            "layers": [
                {"weights": [[1.0, -1.0], [1.0, 1.0]], "bias": [0.0, 2.5]},
                {"relu": true},
                {"weights": [[1.0, 0.0], [0.0, 1.0]], "bias": [0.0, 0.0]}
            ]
        }"#
    }

    #[test]
    fn json_load_one_hidden_layer() {
        let net = Network::from_json_str(demo_json()).unwrap();
        assert_eq!(net.input_dim(), 2);
        assert_eq!(net.output_dim(), 2);
        assert_eq!(net.layers().len(), 3);
        assert_eq!(net.relu_count(), 2);
    }

    #[test]
    fn json_identity_network_no_hidden_layers() {
        let text = r#"{"layers": [{"weights": [[1.0, 0.0], [0.0, 1.0]], "bias": [0.0, 0.0]}]}"#;
        let net = Network::from_json_str(text).unwrap();
        let y = net.forward(&[3.5, -2.0]).unwrap();
        assert_eq!(y, vec![3.5, -2.0]);
    }

    #[test]
    fn json_shape_mismatch_rejected() {
        // Second affine layer expects width 3, but the hidden layer has width 2.
        let text = r#"{
            "layers": [
                {"weights": [[1.0], [2.0]], "bias": [0.0, 0.0]},
                {"relu": true},
                {"weights": [[1.0, 0.0, 0.0]], "bias": [0.0]}
            ]
        }"#;
        match Network::from_json_str(text) {
            Err(Error::Shape(_)) => {}
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn final_relu_rejected() {
        let layers = vec![
            Layer::Affine { weights: vec![vec![1.0]], bias: vec![0.0] },
            Layer::Relu,
        ];
        assert!(Network::new(1, layers).is_err());
    }

    #[test]
    fn nan_weight_rejected() {
        let layers = vec![Layer::Affine { weights: vec![vec![f64::NAN]], bias: vec![0.0] }];
        assert!(Network::new(1, layers).is_err());
    }

    #[test]
    fn forward_demo_point() {
        let net = Network::from_json_str(demo_json()).unwrap();
        let y = net.forward(&[1.0, -1.0]).unwrap();
        assert_eq!(y, vec![2.0, 2.5]);
    }

    #[test]
    fn classify_tie_breaks_to_lowest_index() {
        let text = r#"{"layers": [{"weights": [[1.0, 0.0], [0.0, 1.0]], "bias": [0.0, 0.0]}]}"#;
        let net = Network::from_json_str(text).unwrap();
        assert_eq!(net.classify(&[2.0, 2.0]).unwrap(), 0);
        assert_eq!(net.classify(&[1.0, 3.0]).unwrap(), 1);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let net = Network::from_json_str(demo_json()).unwrap();
        let text = net.to_json_string();
        let back = Network::from_json_str(&text).unwrap();
        assert_eq!(net, back);
        // Awkward decimals survive as well.
        let layers = vec![Layer::Affine {
            weights: vec![vec![0.1, -1.0 / 3.0], [2e-17, 123456.789e12].to_vec()],
            bias: vec![f64::MIN_POSITIVE, -0.3],
        }];
        let tricky = Network::new(2, layers).unwrap();
        let back = Network::from_json_str(&tricky.to_json_string()).unwrap();
        assert_eq!(tricky, back);
    }

    #[test]
    fn ball_and_box_basics() {
        let b = InputBox::linf_ball(&[0.5, -0.5], 0.25).unwrap();
        assert_eq!(b.lower, vec![0.25, -0.75]);
        assert_eq!(b.upper, vec![0.75, -0.25]);
        assert!(b.contains(&[0.5, -0.5], 0.0));
        assert!(!b.contains(&[1.0, -0.5], 0.0));
        assert!(InputBox::linf_ball(&[0.0], 0.0).is_err());
        assert!(InputBox::new(vec![1.0], vec![0.0]).is_err());
    }
}
