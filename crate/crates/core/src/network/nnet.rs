//! Text `.nnet` reader and writer.
//!
//! The format stores comma-separated header lines (layer counts and sizes,
//! input min/max, normalization means and ranges) followed by row-major
//! weight matrices and biases, one weight row or bias entry per line. Every
//! layer except the last is followed by a ReLU. Input normalization
//! `(x - mean) / range` and output denormalization `y * range + mean` are
//! folded into the first and last affine layers, so the returned [`Network`]
//! consumes raw inputs. The symmetry flag and the input min/max lines are
//! parsed but ignored.

use super::{Layer, Network};
use crate::{Error, Result};

/// Parses `.nnet` text into a network with normalization folded in.
pub fn from_str(text: &str) -> Result<Network> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("//"));
    let mut next_numbers = |what: &str| -> Result<Vec<f64>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("nnet: missing {what} line")))?;
        parse_numbers(line, what)
    };

    let header = next_numbers("header")?;
    if header.len() < 4 {
        return Err(Error::Parse("nnet: header needs 4 fields".into()));
    }
    let num_layers = header[0] as usize;
    let input_size = header[1] as usize;
    let output_size = header[2] as usize;
    if num_layers == 0 || input_size == 0 || output_size == 0 {
        return Err(Error::Parse("nnet: zero-sized header field".into()));
    }

    let sizes: Vec<usize> = next_numbers("layer sizes")?.iter().map(|v| *v as usize).collect();
    if sizes.len() != num_layers + 1 {
        return Err(Error::Parse(format!(
            "nnet: expected {} layer sizes, got {}",
            num_layers + 1,
            sizes.len()
        )));
    }
    if sizes[0] != input_size || sizes[num_layers] != output_size {
        return Err(Error::Parse("nnet: layer sizes disagree with header".into()));
    }

    next_numbers("symmetry flag")?; // ignored
    next_numbers("input minimums")?; // ignored
    next_numbers("input maximums")?; // ignored
    let means = next_numbers("means")?;
    let ranges = next_numbers("ranges")?;
    if means.len() != input_size + 1 || ranges.len() != input_size + 1 {
        return Err(Error::Parse("nnet: means/ranges need inputSize + 1 entries".into()));
    }
    if ranges.iter().any(|r| *r == 0.0) {
        return Err(Error::Parse("nnet: zero normalization range".into()));
    }

    let mut layers = Vec::new();
    for k in 0..num_layers {
        let rows = sizes[k + 1];
        let cols = sizes[k];
        let mut weights = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = next_numbers(&format!("layer {k} weight row {r}"))?;
            if row.len() != cols {
                return Err(Error::Parse(format!(
                    "nnet: layer {k} row {r} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            weights.push(row);
        }
        let mut bias = Vec::with_capacity(rows);
        for r in 0..rows {
            let b = next_numbers(&format!("layer {k} bias {r}"))?;
            if b.len() != 1 {
                return Err(Error::Parse(format!("nnet: layer {k} bias {r} must be one value")));
            }
            bias.push(b[0]);
        }
        if k == 0 {
            // x_norm_j = (x_j - mean_j) / range_j folded into the first layer.
            for row in weights.iter_mut() {
                for (w, r) in row.iter_mut().zip(&ranges) {
                    *w /= r;
                }
            }
            for (b, row) in bias.iter_mut().zip(&weights) {
                for (w, m) in row.iter().zip(&means) {
                    *b -= w * m;
                }
            }
        }
        if k == num_layers - 1 {
            // y = y_net * range_out + mean_out folded into the last layer.
            let r_out = ranges[input_size];
            let m_out = means[input_size];
            for row in weights.iter_mut() {
                for w in row.iter_mut() {
                    *w *= r_out;
                }
            }
            for b in bias.iter_mut() {
                *b = *b * r_out + m_out;
            }
        }
        layers.push(Layer::Affine { weights, bias });
        if k + 1 < num_layers {
            layers.push(Layer::Relu);
        }
    }
    Network::new(input_size, layers)
}

/// Serializes a network as `.nnet` text with identity normalization, so the
/// written weights equal the in-memory weights bit-exactly.
///
/// The network must have the alternating `affine (relu affine)*` layout the
/// format can express.
pub fn to_string(net: &Network) -> Result<String> {
    let mut affines: Vec<(&Vec<Vec<f64>>, &Vec<f64>)> = Vec::new();
    for (k, layer) in net.layers().iter().enumerate() {
        match layer {
            Layer::Affine { weights, bias } => {
                if k % 2 != 0 {
                    return Err(Error::Shape("nnet layout needs alternating affine/relu layers".into()));
                }
                affines.push((weights, bias));
            }
            Layer::Relu => {
                if k % 2 != 1 {
                    return Err(Error::Shape("nnet layout needs alternating affine/relu layers".into()));
                }
            }
        }
    }
    if net.layers().len() != 2 * affines.len() - 1 {
        return Err(Error::Shape("nnet layout needs a ReLU between all affine layers".into()));
    }

    let num_layers = affines.len();
    let input_size = net.input_dim();
    let output_size = net.output_dim();
    let mut sizes = vec![input_size];
    sizes.extend(affines.iter().map(|(w, _)| w.len()));
    let max_size = *sizes.iter().max().expect("nonempty sizes");

    let join = |vals: &[f64]| vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    out.push_str("// relucheck network export\n");
    out.push_str(&format!("{num_layers},{input_size},{output_size},{max_size}\n"));
    out.push_str(&join(&sizes.iter().map(|s| *s as f64).collect::<Vec<_>>()));
    out.push('\n');
    out.push_str("0\n");
    out.push_str(&join(&vec![-1e30; input_size]));
    out.push('\n');
    out.push_str(&join(&vec![1e30; input_size]));
    out.push('\n');
    out.push_str(&join(&vec![0.0; input_size + 1]));
    out.push('\n');
    out.push_str(&join(&vec![1.0; input_size + 1]));
    out.push('\n');
    for (weights, bias) in affines {
        for row in weights {
            out.push_str(&join(row));
            out.push('\n');
        }
        for b in bias {
            out.push_str(&b.to_string());
            out.push('\n');
        }
    }
    Ok(out)
}

fn parse_numbers(line: &str, what: &str) -> Result<Vec<f64>> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|tok| !tok.is_empty())
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::Parse(format!("nnet: bad number {tok:?} in {what}")))
        })
        .collect()
}
