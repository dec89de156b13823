//! Polyhedral bound propagation (the DeepPoly abstract domain).
//!
//! Every neuron gets a symbolic linear lower and upper bound over strictly
//! earlier neurons plus a concrete interval `[l, u]`. Affine neurons copy
//! their defining expression into both bounds; ReLU neurons use the exact
//! identity/zero transformer when their input sign is known and a triangle
//! relaxation otherwise. Concrete intervals come from substituting the
//! symbolic bounds all the way back to the input layer and evaluating on the
//! input box.
//!
//! The analysis optionally consumes [`ForcedFacts`]: externally justified
//! interval and activation constraints (produced by LP tightening) that are
//! intersected with freshly computed bounds and override ReLU states. With
//! facts present the element describes the network restricted to the forced
//! set, not the whole box, so its concretization is the symbolic set
//! intersected with the concrete intervals.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::Serialize;

use crate::network::{InputBox, Layer, Network};
use crate::{Error, Result};

/// Tolerance for invariant checks on concrete values.
pub const EPS_NUM: f64 = 1e-7;

/// Sparse linear expression `constant + sum coeff_i * x_i` over neuron ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearForm {
    /// `(neuron id, coefficient)` pairs, sorted by id, ids unique.
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinearForm {
    pub fn constant(c: f64) -> Self {
        LinearForm { coeffs: Vec::new(), constant: c }
    }

    pub fn var(id: usize) -> Self {
        LinearForm { coeffs: vec![(id, 1.0)], constant: 0.0 }
    }

    pub fn scaled_var(id: usize, coeff: f64, constant: f64) -> Self {
        if coeff == 0.0 {
            LinearForm::constant(constant)
        } else {
            LinearForm { coeffs: vec![(id, coeff)], constant }
        }
    }

    /// Builds a form from parallel id/weight slices, dropping zero weights.
    pub fn from_weights(ids: &[usize], weights: &[f64], constant: f64) -> Self {
        debug_assert_eq!(ids.len(), weights.len());
        let mut coeffs: Vec<(usize, f64)> = ids
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (*i, *w))
            .collect();
        coeffs.sort_by_key(|(i, _)| *i);
        LinearForm { coeffs, constant }
    }

    /// Evaluates the form on a full assignment of neuron values.
    pub fn eval(&self, values: &[f64]) -> f64 {
        let mut acc = self.constant;
        for (id, w) in &self.coeffs {
            acc += w * values[*id];
        }
        acc
    }
}

/// Sign information for a ReLU input interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReluState {
    Activated,
    Deactivated,
    Uncertain,
}

/// Which symbolic lower bound an uncertain ReLU uses (the relaxation's
/// lambda), or `Exact` when no relaxation was needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReluMode {
    LambdaZero,
    LambdaOne,
    Exact,
}

/// Slope/intercept bounds for `y = max(x, 0)` on `x in [l, u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluRelaxation {
    /// `(slope, intercept)` of the symbolic lower bound.
    pub lower: (f64, f64),
    /// `(slope, intercept)` of the symbolic upper bound.
    pub upper: (f64, f64),
    pub state: ReluState,
    pub mode: ReluMode,
}

/// Abstract ReLU transformer on an input interval.
///
/// `u <= 0` gives the zero map and `l >= 0` the identity, both exact. In the
/// uncertain case the upper bound is the chord `u (x - l) / (u - l)` and the
/// lower bound is `lambda * x` with `lambda` in `{0, 1}` chosen to minimize
/// the relaxation area: 1 when `u > |l|`, otherwise 0 (ties take 0).
pub fn relu_transformer(l: f64, u: f64) -> ReluRelaxation {
    debug_assert!(l <= u, "relu_transformer needs l <= u, got [{l}, {u}]");
    if u <= 0.0 {
        ReluRelaxation {
            lower: (0.0, 0.0),
            upper: (0.0, 0.0),
            state: ReluState::Deactivated,
            mode: ReluMode::Exact,
        }
    } else if l >= 0.0 {
        ReluRelaxation {
            lower: (1.0, 0.0),
            upper: (1.0, 0.0),
            state: ReluState::Activated,
            mode: ReluMode::Exact,
        }
    } else {
        let slope = u / (u - l);
        let intercept = -u * l / (u - l);
        let lambda_one = u > -l;
        ReluRelaxation {
            lower: (if lambda_one { 1.0 } else { 0.0 }, 0.0),
            upper: (slope, intercept),
            state: ReluState::Uncertain,
            mode: if lambda_one { ReluMode::LambdaOne } else { ReluMode::LambdaZero },
        }
    }
}

/// What computes each neuron in topological order: the network's inputs
/// first, then every layer's neurons in layer order.
#[derive(Debug, Clone)]
pub enum NeuronKind {
    Input,
    /// Affine neuron with its defining expression over the previous layer.
    Affine { form: LinearForm },
    /// ReLU neuron reading pre-activation neuron `src`.
    Relu { src: usize },
}

/// A ReLU neuron's pre- and post-activation ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReluPair {
    pub pre: usize,
    pub post: usize,
}

/// Flattened per-neuron view of a network.
#[derive(Debug)]
pub struct NeuronGraph {
    kinds: Vec<NeuronKind>,
    input_dim: usize,
    output_ids: Vec<usize>,
    relus: Vec<ReluPair>,
}

impl NeuronGraph {
    pub fn from_network(net: &Network) -> Self {
        let input_dim = net.input_dim();
        let mut kinds: Vec<NeuronKind> = (0..input_dim).map(|_| NeuronKind::Input).collect();
        let mut prev: Vec<usize> = (0..input_dim).collect();
        let mut relus = Vec::new();
        for layer in net.layers() {
            match layer {
                Layer::Affine { weights, bias } => {
                    let mut cur = Vec::with_capacity(weights.len());
                    for (row, b) in weights.iter().zip(bias) {
                        let id = kinds.len();
                        kinds.push(NeuronKind::Affine {
                            form: LinearForm::from_weights(&prev, row, *b),
                        });
                        cur.push(id);
                    }
                    prev = cur;
                }
                Layer::Relu => {
                    let mut cur = Vec::with_capacity(prev.len());
                    for src in &prev {
                        let id = kinds.len();
                        kinds.push(NeuronKind::Relu { src: *src });
                        relus.push(ReluPair { pre: *src, post: id });
                        cur.push(id);
                    }
                    prev = cur;
                }
            }
        }
        NeuronGraph { kinds, input_dim, output_ids: prev, relus }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn kind(&self, id: usize) -> &NeuronKind {
        &self.kinds[id]
    }

    pub fn output_ids(&self) -> &[usize] {
        &self.output_ids
    }

    pub fn relus(&self) -> &[ReluPair] {
        &self.relus
    }

    /// Concrete value of every neuron on one input.
    pub fn eval_trace(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "trace input has dimension {}, graph expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut vals = Vec::with_capacity(self.len());
        for kind in &self.kinds {
            let v = match kind {
                NeuronKind::Input => x[vals.len()],
                NeuronKind::Affine { form } => form.eval(&vals),
                NeuronKind::Relu { src } => vals[*src].max(0.0),
            };
            vals.push(v);
        }
        Ok(vals)
    }
}

/// Externally justified constraints carried between refinement iterations.
///
/// `bounds` forces concrete intervals on neurons (they are intersected with
/// freshly computed bounds, so they can only tighten the analysis).
/// `activated` / `deactivated` force the ReLU reading the given
/// pre-activation neuron to the identity / zero transformer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForcedFacts {
    pub bounds: BTreeMap<usize, (f64, f64)>,
    pub activated: BTreeSet<usize>,
    pub deactivated: BTreeSet<usize>,
}

impl ForcedFacts {
    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty() && self.activated.is_empty() && self.deactivated.is_empty()
    }

    /// Intersects a forced interval into the accumulated facts, keeping the
    /// tighter of old and new on each side.
    pub fn force_bound(&mut self, id: usize, l: f64, u: f64) {
        let entry = self.bounds.entry(id).or_insert((f64::NEG_INFINITY, f64::INFINITY));
        entry.0 = entry.0.max(l);
        entry.1 = entry.1.min(u);
    }

    fn validate(&self, neuron_count: usize) -> Result<()> {
        if let Some(id) = self.activated.intersection(&self.deactivated).next() {
            return Err(Error::InvalidFacts(format!(
                "neuron {id} forced both activated and deactivated"
            )));
        }
        for id in self.activated.iter().chain(&self.deactivated) {
            if *id >= neuron_count {
                return Err(Error::InvalidFacts(format!("forced state on unknown neuron {id}")));
            }
        }
        for (id, (l, u)) in &self.bounds {
            if *id >= neuron_count {
                return Err(Error::InvalidFacts(format!("forced bound on unknown neuron {id}")));
            }
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::InvalidFacts(format!(
                    "forced bound on neuron {id} is not an interval: [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }
}

/// Symbolic and concrete bounds of one neuron.
#[derive(Debug, Clone, Serialize)]
pub struct NeuronBounds {
    pub lower: LinearForm,
    pub upper: LinearForm,
    pub l: f64,
    pub u: f64,
}

/// Resolved behavior of one ReLU neuron in an element.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReluInfo {
    pub pre: usize,
    pub post: usize,
    pub state: ReluState,
    pub mode: ReluMode,
}

/// Result of one analysis run: per-neuron bounds plus per-ReLU states.
#[derive(Debug, Clone)]
pub struct AbstractElement {
    graph: Arc<NeuronGraph>,
    neurons: Vec<NeuronBounds>,
    relus: Vec<ReluInfo>,
    empty: bool,
}

/// Which side of an expression a bound query asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundDirection {
    Lower,
    Upper,
}

impl AbstractElement {
    pub fn graph(&self) -> &Arc<NeuronGraph> {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty_element(&self) -> bool {
        self.neurons.is_empty()
    }

    /// True when some forced intersection crossed: the restricted set the
    /// element describes is provably empty.
    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn neuron(&self, id: usize) -> &NeuronBounds {
        &self.neurons[id]
    }

    pub fn neurons(&self) -> &[NeuronBounds] {
        &self.neurons
    }

    /// Concrete interval of a neuron.
    pub fn bounds(&self, id: usize) -> (f64, f64) {
        (self.neurons[id].l, self.neurons[id].u)
    }

    pub fn relus(&self) -> &[ReluInfo] {
        &self.relus
    }

    /// Pre-activation ids of ReLUs left uncertain by this run.
    pub fn uncertain_pre_ids(&self) -> Vec<usize> {
        self.relus
            .iter()
            .filter(|r| r.state == ReluState::Uncertain)
            .map(|r| r.pre)
            .collect()
    }

    /// The (possibly tightened) concrete input region of this element.
    pub fn input_box(&self) -> InputBox {
        let m = self.graph.input_dim();
        InputBox {
            lower: self.neurons[..m].iter().map(|n| n.l).collect(),
            upper: self.neurons[..m].iter().map(|n| n.u).collect(),
        }
    }

    /// Membership in the symbolic concretization: every neuron value must sit
    /// between its symbolic lower and upper bound evaluated on the trace.
    pub fn gamma_contains(&self, values: &[f64], eps: f64) -> bool {
        debug_assert_eq!(values.len(), self.neurons.len());
        self.neurons.iter().enumerate().all(|(id, n)| {
            let v = values[id];
            n.lower.eval(values) - eps <= v && v <= n.upper.eval(values) + eps
        })
    }

    /// Membership in the restricted concretization used under forced facts:
    /// the symbolic set intersected with every concrete interval.
    pub fn gamma_restricted_contains(&self, values: &[f64], eps: f64) -> bool {
        self.gamma_contains(values, eps)
            && self
                .neurons
                .iter()
                .enumerate()
                .all(|(id, n)| values[id] >= n.l - eps && values[id] <= n.u + eps)
    }
}

/// Tightest concrete bound of `form` obtainable by substituting symbolic
/// bounds until only input neurons remain, then evaluating on the input box.
///
/// Variables are eliminated from the highest id down; at each step the
/// accumulated coefficient decides which side gets substituted (positive
/// coefficients take the same side as the query, negative the opposite).
pub fn back_substitute(form: &LinearForm, elem: &AbstractElement, dir: BoundDirection) -> f64 {
    back_substitute_partial(form, &elem.neurons, elem.graph.input_dim(), dir)
}

fn back_substitute_partial(
    form: &LinearForm,
    neurons: &[NeuronBounds],
    input_dim: usize,
    dir: BoundDirection,
) -> f64 {
    let mut acc = vec![0.0; neurons.len()];
    let mut constant = form.constant;
    for (id, w) in &form.coeffs {
        debug_assert!(*id < neurons.len(), "form references unresolved neuron {id}");
        acc[*id] += w;
    }
    for id in (input_dim..neurons.len()).rev() {
        let w = acc[id];
        if w == 0.0 {
            continue;
        }
        acc[id] = 0.0;
        let take_lower = (dir == BoundDirection::Lower) == (w > 0.0);
        let sub = if take_lower { &neurons[id].lower } else { &neurons[id].upper };
        constant += w * sub.constant;
        for (j, c) in &sub.coeffs {
            debug_assert!(*j < id, "symbolic bound of {id} references later neuron {j}");
            acc[*j] += w * c;
        }
    }
    let mut result = constant;
    for (i, w) in acc.iter().take(input_dim).enumerate() {
        if *w == 0.0 {
            continue;
        }
        let take_lower = (dir == BoundDirection::Lower) == (*w > 0.0);
        result += w * if take_lower { neurons[i].l } else { neurons[i].u };
    }
    result
}

/// Concrete bound of a linear functional `sum c_i * y_i` of the outputs.
pub fn output_objective_bound(
    elem: &AbstractElement,
    c: &[f64],
    dir: BoundDirection,
) -> Result<f64> {
    let outputs = elem.graph.output_ids();
    if c.len() != outputs.len() {
        return Err(Error::Shape(format!(
            "objective has {} coefficients for {} outputs",
            c.len(),
            outputs.len()
        )));
    }
    let form = LinearForm::from_weights(outputs, c, 0.0);
    Ok(back_substitute(&form, elem, dir))
}

/// Runs bound propagation over `net` on `box_`, honoring `facts`.
pub fn analyze(net: &Network, box_: &InputBox, facts: &ForcedFacts) -> Result<AbstractElement> {
    analyze_graph(Arc::new(NeuronGraph::from_network(net)), box_, facts)
}

/// [`analyze`] against a prebuilt graph (the refinement loop reuses one).
pub fn analyze_graph(
    graph: Arc<NeuronGraph>,
    box_: &InputBox,
    facts: &ForcedFacts,
) -> Result<AbstractElement> {
    if box_.dim() != graph.input_dim() {
        return Err(Error::Shape(format!(
            "box has dimension {}, network expects {}",
            box_.dim(),
            graph.input_dim()
        )));
    }
    facts.validate(graph.len())?;

    let mut neurons: Vec<NeuronBounds> = Vec::with_capacity(graph.len());
    let mut relus = Vec::new();
    let mut empty = false;

    for id in 0..graph.len() {
        let nb = match graph.kind(id) {
            NeuronKind::Input => {
                let (l, u) = intersect_forced(box_.lower[id], box_.upper[id], id, facts, &mut empty);
                NeuronBounds {
                    lower: LinearForm::constant(l),
                    upper: LinearForm::constant(u),
                    l,
                    u,
                }
            }
            NeuronKind::Affine { form } => {
                let l = back_substitute_partial(form, &neurons, graph.input_dim(), BoundDirection::Lower);
                let u = back_substitute_partial(form, &neurons, graph.input_dim(), BoundDirection::Upper);
                let (l, u) = intersect_forced(l, u, id, facts, &mut empty);
                NeuronBounds { lower: form.clone(), upper: form.clone(), l, u }
            }
            NeuronKind::Relu { src } => {
                let src = *src;
                let (ls, us) = (neurons[src].l, neurons[src].u);
                let (info, lower, upper, l, u) = if facts.deactivated.contains(&src) {
                    (
                        ReluInfo { pre: src, post: id, state: ReluState::Deactivated, mode: ReluMode::Exact },
                        LinearForm::constant(0.0),
                        LinearForm::constant(0.0),
                        0.0,
                        0.0,
                    )
                } else if facts.activated.contains(&src) {
                    // Forced identity; the output is still a ReLU, so 0 stays
                    // a valid concrete floor even if the forced input bound
                    // dips below it.
                    (
                        ReluInfo { pre: src, post: id, state: ReluState::Activated, mode: ReluMode::Exact },
                        LinearForm::var(src),
                        LinearForm::var(src),
                        ls.max(0.0),
                        us,
                    )
                } else {
                    let rel = relu_transformer(ls, us);
                    let (l, u) = match rel.state {
                        ReluState::Deactivated => (0.0, 0.0),
                        ReluState::Activated => (ls.max(0.0), us),
                        ReluState::Uncertain => (rel.lower.0 * ls, us),
                    };
                    (
                        ReluInfo { pre: src, post: id, state: rel.state, mode: rel.mode },
                        LinearForm::scaled_var(src, rel.lower.0, rel.lower.1),
                        LinearForm::scaled_var(src, rel.upper.0, rel.upper.1),
                        l,
                        u,
                    )
                };
                let (l, u) = intersect_forced(l, u, id, facts, &mut empty);
                relus.push(info);
                NeuronBounds { lower, upper, l, u }
            }
        };
        neurons.push(nb);
    }

    Ok(AbstractElement { graph, neurons, relus, empty })
}

/// Intersects computed bounds with a forced interval. A crossing beyond
/// `EPS_NUM` proves the restricted set empty; either way the interval is
/// collapsed to its midpoint so downstream transformers stay well-defined
/// (any interval soundly over-approximates an empty set).
fn intersect_forced(l: f64, u: f64, id: usize, facts: &ForcedFacts, empty: &mut bool) -> (f64, f64) {
    let (mut l, mut u) = (l, u);
    if let Some((fl, fu)) = facts.bounds.get(&id) {
        l = l.max(*fl);
        u = u.min(*fu);
    }
    if l > u {
        if l - u > EPS_NUM {
            *empty = true;
        }
        let mid = 0.5 * (l + u);
        l = mid;
        u = mid;
    }
    (l, u)
}
