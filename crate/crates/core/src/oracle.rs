//! Independent ground-truth engines for testing the verifier.
//!
//! [`exact_verify`] decides local robustness exactly (up to floating point)
//! on small networks by enumerating ReLU activation patterns: under a fixed
//! pattern the network is affine, so each competitor label yields one LP
//! whose feasible points are genuine counterexample candidates. A cheap
//! interval pass first pins every ReLU whose sign cannot change on the box,
//! so only genuinely ambiguous neurons are enumerated. [`mc_violation_rate`]
//! estimates the misclassified volume fraction by seeded uniform sampling.
//!
//! Everything here deliberately avoids the symbolic analysis machinery: the
//! constraints are rebuilt straight from the network layers, so agreement
//! between the verifier and this module is meaningful evidence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lp::{LinearProgram, LpOutcome, Relation, Sense};
use crate::network::{InputBox, Layer, Network};
use crate::{Error, Result};

/// Upper limit on total ReLU count for [`exact_verify`]; enumeration is
/// exponential in the number of sign-ambiguous neurons.
pub const EXACT_RELU_CAP: usize = 20;

/// Exact robustness answer for one box and anchor label.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleVerdict {
    pub robust: bool,
    /// A concrete input in the box that `classify` maps to a different label;
    /// present exactly when `robust` is false.
    pub counterexample: Option<Vec<f64>>,
}

/// The network flattened to one variable per neuron: inputs first, then each
/// layer's neurons in order.
struct FlatNet {
    len: usize,
    input_dim: usize,
    /// `(neuron, row over earlier neurons, bias)` per affine neuron.
    affine: Vec<(usize, Vec<(usize, f64)>, f64)>,
    /// `(pre, post)` per ReLU neuron.
    relus: Vec<(usize, usize)>,
    outputs: Vec<usize>,
}

fn flatten(net: &Network) -> FlatNet {
    let m = net.input_dim();
    let mut prev: Vec<usize> = (0..m).collect();
    let mut next_id = m;
    let mut flat = FlatNet {
        len: m,
        input_dim: m,
        affine: Vec::new(),
        relus: Vec::new(),
        outputs: Vec::new(),
    };
    for layer in net.layers() {
        let mut ids = Vec::new();
        match layer {
            Layer::Affine { weights, bias } => {
                for (row, b) in weights.iter().zip(bias) {
                    let coeffs = prev.iter().copied().zip(row.iter().copied()).collect();
                    flat.affine.push((next_id, coeffs, *b));
                    ids.push(next_id);
                    next_id += 1;
                }
            }
            Layer::Relu => {
                for &pre in &prev {
                    flat.relus.push((pre, next_id));
                    ids.push(next_id);
                    next_id += 1;
                }
            }
        }
        prev = ids;
    }
    flat.len = next_id;
    flat.outputs = prev;
    flat
}

/// Plain interval arithmetic over the flat network.
fn interval_pass(flat: &FlatNet, box_: &InputBox) -> Vec<(f64, f64)> {
    let mut iv = vec![(0.0, 0.0); flat.len];
    for i in 0..flat.input_dim {
        iv[i] = (box_.lower[i], box_.upper[i]);
    }
    let mut affine = flat.affine.iter().peekable();
    let mut relus = flat.relus.iter().peekable();
    // Ids were assigned in evaluation order, so a single ascending sweep
    // visits every neuron after its dependencies.
    for id in flat.input_dim..flat.len {
        if affine.peek().is_some_and(|(a, _, _)| *a == id) {
            let (_, coeffs, b) = affine.next().unwrap();
            let (mut lo, mut hi) = (*b, *b);
            for &(j, w) in coeffs {
                let (jl, jh) = iv[j];
                if w >= 0.0 {
                    lo += w * jl;
                    hi += w * jh;
                } else {
                    lo += w * jh;
                    hi += w * jl;
                }
            }
            iv[id] = (lo, hi);
        } else {
            let (pre, _) = relus.next().unwrap();
            let (jl, jh) = iv[*pre];
            iv[id] = (jl.max(0.0), jh.max(0.0));
        }
    }
    iv
}

/// LP rows shared by every pattern: box bounds and affine equalities.
fn base_lp(flat: &FlatNet, box_: &InputBox) -> LinearProgram {
    let mut lp = LinearProgram::new(flat.len);
    for i in 0..flat.input_dim {
        lp.set_bounds(i, box_.lower[i], box_.upper[i]);
    }
    for (id, coeffs, b) in &flat.affine {
        let mut row = vec![(*id, 1.0)];
        row.extend(coeffs.iter().map(|&(j, w)| (j, -w)));
        lp.add_constraint(row, Relation::Eq, *b);
    }
    lp
}

fn add_relu_rows(lp: &mut LinearProgram, pre: usize, post: usize, active: bool) {
    if active {
        lp.add_constraint(vec![(post, 1.0), (pre, -1.0)], Relation::Eq, 0.0);
        lp.add_constraint(vec![(pre, 1.0)], Relation::Ge, 0.0);
    } else {
        lp.add_constraint(vec![(post, 1.0)], Relation::Eq, 0.0);
        lp.add_constraint(vec![(pre, 1.0)], Relation::Le, 0.0);
    }
}

/// Decides robustness exactly by activation-pattern enumeration.
///
/// For every sign assignment of the ambiguous ReLUs and every competitor
/// label `t`, minimizes `y_anchor - y_t` over the affine region the pattern
/// carves out of the box. Any optimum at or below zero yields a candidate
/// point, which counts only if `classify` actually prefers another label
/// there — ties broken toward the anchor are not violations.
pub fn exact_verify(net: &Network, box_: &InputBox, anchor: usize) -> Result<OracleVerdict> {
    let relus = net.relu_count();
    if relus > EXACT_RELU_CAP {
        return Err(Error::TooLarge { relus, cap: EXACT_RELU_CAP });
    }
    if box_.dim() != net.input_dim() {
        return Err(Error::Shape(format!(
            "box dimension {} does not match input dimension {}",
            box_.dim(),
            net.input_dim()
        )));
    }
    if anchor >= net.output_dim() {
        return Err(Error::Shape(format!(
            "anchor label {anchor} out of range for {} outputs",
            net.output_dim()
        )));
    }

    let flat = flatten(net);
    let iv = interval_pass(&flat, box_);
    let mut fixed: Vec<(usize, usize, bool)> = Vec::new();
    let mut ambiguous: Vec<(usize, usize)> = Vec::new();
    for &(pre, post) in &flat.relus {
        let (l, u) = iv[pre];
        if l >= 0.0 {
            fixed.push((pre, post, true));
        } else if u <= 0.0 {
            fixed.push((pre, post, false));
        } else {
            ambiguous.push((pre, post));
        }
    }

    let mut shared = base_lp(&flat, box_);
    for &(pre, post, active) in &fixed {
        add_relu_rows(&mut shared, pre, post, active);
    }

    for pattern in 0u64..(1u64 << ambiguous.len()) {
        let mut pattern_lp = shared.clone();
        for (k, &(pre, post)) in ambiguous.iter().enumerate() {
            add_relu_rows(&mut pattern_lp, pre, post, pattern >> k & 1 == 1);
        }
        for t in 0..net.output_dim() {
            if t == anchor {
                continue;
            }
            let mut lp = pattern_lp.clone();
            let gap = vec![(flat.outputs[anchor], 1.0), (flat.outputs[t], -1.0)];
            lp.add_constraint(gap.clone(), Relation::Le, 0.0);
            lp.set_objective(gap, Sense::Minimize);
            match lp.solve() {
                LpOutcome::Infeasible => {}
                LpOutcome::Optimal { point, .. } => {
                    let x: Vec<f64> = point[..flat.input_dim]
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v.clamp(box_.lower[i], box_.upper[i]))
                        .collect();
                    if net.classify(&x)? != anchor {
                        return Ok(OracleVerdict { robust: false, counterexample: Some(x) });
                    }
                }
                LpOutcome::Unbounded | LpOutcome::NumericalFailure => {
                    return Err(Error::Numerical(format!(
                        "pattern {pattern:b} vs label {t}: LP gave no usable answer"
                    )));
                }
            }
        }
    }
    Ok(OracleVerdict { robust: true, counterexample: None })
}

/// Fraction of `samples` uniform draws from the box that `classify` maps away
/// from `anchor`. Deterministic for a given seed.
pub fn mc_violation_rate(
    net: &Network,
    box_: &InputBox,
    anchor: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Shape("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    for _ in 0..samples {
        let x = box_.sample_uniform(&mut rng);
        if net.classify(&x)? != anchor {
            violations += 1;
        }
    }
    Ok(violations as f64 / samples as f64)
}
