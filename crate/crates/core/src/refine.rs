//! Spurious-region-guided refinement of robustness queries.
//!
//! A robustness query fails when the initial analysis cannot show the anchor
//! label dominating every competitor. Each surviving competitor defines a
//! *spurious region*: the output-space set where that competitor wins, carved
//! out of the current abstraction. [`refine_region`] attacks one such region
//! with a bounded loop: encode the region as an LP over the triangle
//! relaxation, rule it out if the LP is infeasible, otherwise tighten the
//! input variables and the uncertain pre-activations, force the tightened
//! intervals (and any activation states they decide) into the next analysis
//! run, and re-check dominance. [`verify`] drives the loop over all candidate
//! labels, feeding every ruled-out label back into later regions as an extra
//! dominance constraint.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::deeppoly::{
    analyze_graph, output_objective_bound, AbstractElement, BoundDirection, ForcedFacts,
    NeuronGraph,
};
use crate::lp::{encode, tighten, LinearProgram, LpOutcome, Relation, TightenOutcome};
use crate::network::{InputBox, Network};
use crate::{Error, Result};

/// Environment variable naming a directory that receives LP debug dumps.
pub const LP_DUMP_ENV: &str = "RELUCHECK_LP_DUMP";

/// The output-space region where `target` scores at least as high as the
/// anchor label, conjoined with dominance rows for labels already ruled out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpuriousRegion {
    pub anchor: usize,
    pub target: usize,
    /// Restrict the region to the decision boundary `y_anchor = y_target`
    /// instead of the half-space. Any half-space counterexample connects to
    /// the anchor's own region through the boundary, so ruling out the
    /// boundary rules out the half-space; the equality usually tightens far
    /// better. Bounds derived this way only cover the boundary slice, which
    /// is why quantitative runs must keep this off.
    pub boundary_mode: bool,
    /// Labels already proven dominated; each contributes a row
    /// `y_anchor - y_t >= 0`.
    pub ruled_out: Vec<usize>,
}

impl SpuriousRegion {
    pub fn new(
        anchor: usize,
        target: usize,
        boundary_mode: bool,
        ruled_out: Vec<usize>,
    ) -> Result<Self> {
        let region = SpuriousRegion { anchor, target, boundary_mode, ruled_out };
        region.check_structure()?;
        Ok(region)
    }

    fn check_structure(&self) -> Result<()> {
        if self.target == self.anchor {
            return Err(Error::InvalidFacts(format!(
                "spurious region target equals anchor label {}",
                self.anchor
            )));
        }
        let mut seen = BTreeSet::new();
        for &t in &self.ruled_out {
            if t == self.target {
                return Err(Error::InvalidFacts(format!(
                    "label {t} is both the target and ruled out"
                )));
            }
            if t == self.anchor {
                return Err(Error::InvalidFacts(format!("anchor label {t} cannot be ruled out")));
            }
            if !seen.insert(t) {
                return Err(Error::InvalidFacts(format!("label {t} ruled out twice")));
            }
        }
        Ok(())
    }

    /// Re-checks the structure and that every label addresses a real output.
    pub fn validate(&self, n_outputs: usize) -> Result<()> {
        self.check_structure()?;
        for &t in self.ruled_out.iter().chain([&self.anchor, &self.target]) {
            if t >= n_outputs {
                return Err(Error::Shape(format!(
                    "label {t} out of range for {n_outputs} outputs"
                )));
            }
        }
        Ok(())
    }

    /// Constraint rows over output slots, with implicit right-hand side 0:
    /// one dominance row per ruled-out label, then the defining target row.
    pub fn output_rows(&self) -> Vec<(Vec<f64>, Relation)> {
        let width = 1 + self
            .anchor
            .max(self.target)
            .max(self.ruled_out.iter().copied().max().unwrap_or(0));
        let row = |other: usize| {
            let mut r = vec![0.0; width];
            r[self.anchor] = 1.0;
            r[other] = -1.0;
            r
        };
        let mut rows: Vec<(Vec<f64>, Relation)> =
            self.ruled_out.iter().map(|&t| (row(t), Relation::Ge)).collect();
        let rel = if self.boundary_mode { Relation::Eq } else { Relation::Le };
        rows.push((row(self.target), rel));
        rows
    }
}

/// Knobs of the refinement engine.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Refinement iteration budget per spurious region.
    pub max_iterations: usize,
    /// Encode each region as the decision boundary (equality) rather than the
    /// half-space. See [`SpuriousRegion::boundary_mode`].
    pub boundary_spurious_region: bool,
    /// Process candidate labels in decreasing order of their score-gap lower
    /// bound (the likely smallest regions first) instead of label order.
    pub order_small_regions_first: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            max_iterations: 5,
            boundary_spurious_region: true,
            order_small_regions_first: true,
        }
    }
}

/// Overall answer of a robustness query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Robust: every competitor label is dominated over the whole box.
    #[serde(rename = "YES")]
    Yes,
    /// Not proven; says nothing about an actual counterexample.
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Yes => "YES",
            Verdict::Unknown => "UNKNOWN",
        })
    }
}

/// Fate of one spurious region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegionVerdict {
    RuledOut,
    Unresolved,
}

/// What one refinement iteration did.
#[derive(Debug, Clone, Serialize)]
pub struct IterationSnapshot {
    /// Whether the region LP was still feasible at iteration entry.
    pub lp_feasible: bool,
    /// Bounds forced by this iteration, one `(neuron, l, u)` per tightened
    /// variable, in ascending neuron order.
    pub tightened: Vec<(usize, f64, f64)>,
    /// Pre-activation neurons newly forced active / inactive.
    pub newly_activated: Vec<usize>,
    pub newly_deactivated: Vec<usize>,
    /// Lower bound of `y_anchor - y_target` after re-analysis; absent when
    /// the iteration ended before the dominance check.
    pub objective_lower_bound: Option<f64>,
}

/// Full record of one region's refinement.
#[derive(Debug, Clone, Serialize)]
pub struct RegionTrace {
    pub label: usize,
    pub verdict: RegionVerdict,
    pub iterations_used: usize,
    /// Sizes of the final forced activation / deactivation sets.
    pub renewed_activated: usize,
    pub renewed_deactivated: usize,
    /// Input bounds after the last completed tightening; the original box
    /// when no iteration tightened anything.
    pub final_input_box: InputBox,
    pub iterations: Vec<IterationSnapshot>,
}

/// Result of [`verify`] / [`verify_box`].
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub verdict: Verdict,
    pub anchor_label: usize,
    /// Candidate labels in processing order.
    pub candidate_labels: Vec<usize>,
    pub traces: Vec<RegionTrace>,
    /// Wall-clock time of the query. Excluded from serialization so that
    /// identical runs produce identical report bytes.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Element and accumulated facts right after one iteration's re-analysis.
#[derive(Debug, Clone)]
pub struct RefinementStep {
    pub element: AbstractElement,
    pub facts: ForcedFacts,
}

/// Sound lower bound of `y_anchor - y_target` over the element.
pub fn score_gap_lower_bound(
    elem: &AbstractElement,
    anchor: usize,
    target: usize,
) -> Result<f64> {
    let n = elem.graph().output_ids().len();
    if anchor >= n || target >= n {
        return Err(Error::Shape(format!(
            "labels {anchor}/{target} out of range for {n} outputs"
        )));
    }
    let mut c = vec![0.0; n];
    c[anchor] += 1.0;
    c[target] -= 1.0;
    output_objective_bound(elem, &c, BoundDirection::Lower)
}

fn ranked_candidates(elem: &AbstractElement, anchor: usize) -> Result<Vec<(usize, f64)>> {
    let n = elem.graph().output_ids().len();
    if anchor >= n {
        return Err(Error::Shape(format!("anchor label {anchor} out of range for {n} outputs")));
    }
    let mut cands = Vec::new();
    for t in 0..n {
        if t == anchor {
            continue;
        }
        let lb = score_gap_lower_bound(elem, anchor, t)?;
        if lb <= 0.0 {
            cands.push((t, lb));
        }
    }
    // Largest lower bound first: those regions are closest to being ruled
    // out, so they tend to be the cheapest wins.
    cands.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0))
    });
    Ok(cands)
}

/// Competitor labels the element fails to dominate, ordered by decreasing
/// score-gap lower bound (ties by label index).
pub fn find_candidates(elem: &AbstractElement, anchor: usize) -> Result<Vec<usize>> {
    Ok(ranked_candidates(elem, anchor)?.into_iter().map(|(t, _)| t).collect())
}

fn dump_lp(lp: &LinearProgram, region: &SpuriousRegion, iteration: usize) {
    let Ok(dir) = std::env::var(LP_DUMP_ENV) else { return };
    if dir.is_empty() {
        return;
    }
    let dir = Path::new(&dir);
    let file = dir.join(format!(
        "region_a{}_t{}_iter{}.lp",
        region.anchor, region.target, iteration
    ));
    let write = || -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(&file)?;
        lp.write_lp_format(&mut f)
    };
    if let Err(e) = write() {
        eprintln!("warning: could not dump LP to {}: {e}", file.display());
    }
}

/// Refines one spurious region for up to `max_iterations` rounds.
///
/// Each round: check LP feasibility of the region under the current element
/// (infeasible proves it empty); tighten the inputs and uncertain
/// pre-activations against that same LP snapshot; force the results — and any
/// activation states they decide — into the accumulated facts; re-analyze;
/// rule the region out if the re-analysis is empty or the anchor now
/// dominates the target. Facts only ever shrink intervals and grow the forced
/// state sets, so every iteration builds on the last.
pub fn refine_region(
    net: &Network,
    box_: &InputBox,
    region: &SpuriousRegion,
    max_iterations: usize,
) -> Result<RegionTrace> {
    let graph = Arc::new(NeuronGraph::from_network(net));
    refine_on_graph(&graph, box_, region, max_iterations, None)
}

/// [`refine_region`] plus the element and facts after every iteration, for
/// callers that audit the intermediate abstractions.
pub fn refine_region_detailed(
    net: &Network,
    box_: &InputBox,
    region: &SpuriousRegion,
    max_iterations: usize,
) -> Result<(RegionTrace, Vec<RefinementStep>)> {
    let graph = Arc::new(NeuronGraph::from_network(net));
    let mut steps = Vec::new();
    let trace = refine_on_graph(&graph, box_, region, max_iterations, Some(&mut steps))?;
    Ok((trace, steps))
}

fn refine_on_graph(
    graph: &Arc<NeuronGraph>,
    box_: &InputBox,
    region: &SpuriousRegion,
    max_iterations: usize,
    mut steps: Option<&mut Vec<RefinementStep>>,
) -> Result<RegionTrace> {
    region.validate(graph.output_ids().len())?;
    let mut facts = ForcedFacts::default();
    let mut elem = analyze_graph(Arc::clone(graph), box_, &facts)?;

    let mut trace = RegionTrace {
        label: region.target,
        verdict: RegionVerdict::Unresolved,
        iterations_used: 0,
        renewed_activated: 0,
        renewed_deactivated: 0,
        final_input_box: elem.input_box(),
        iterations: Vec::new(),
    };

    let verdict = 'run: {
        // A region the initial analysis already dominates needs no LP work.
        if score_gap_lower_bound(&elem, region.anchor, region.target)? > 0.0 {
            break 'run RegionVerdict::RuledOut;
        }

        for iteration in 1..=max_iterations {
            trace.iterations_used = iteration;
            let mut snap = IterationSnapshot {
                lp_feasible: true,
                tightened: Vec::new(),
                newly_activated: Vec::new(),
                newly_deactivated: Vec::new(),
                objective_lower_bound: None,
            };

            let lp = encode(&elem, region)?;
            dump_lp(&lp, region, iteration);

            // An infeasible conjunction proves the region empty. A numerical
            // failure must be treated as "maybe feasible".
            if matches!(lp.feasibility(), LpOutcome::Infeasible) {
                snap.lp_feasible = false;
                trace.iterations.push(snap);
                break 'run RegionVerdict::RuledOut;
            }

            // Tightening targets: inputs plus uncertain pre-activations. All
            // queries run against the same LP snapshot, so they are
            // independent; results are applied in ascending variable order.
            let mut targets: Vec<usize> = (0..graph.input_dim()).collect();
            let uncertain: Vec<usize> = elem.uncertain_pre_ids();
            targets.extend(uncertain.iter().copied());
            let outcomes: Vec<(usize, TightenOutcome)> =
                targets.par_iter().map(|&v| (v, tighten(&lp, v))).collect();

            let mut emptied = false;
            for (v, outcome) in outcomes {
                match outcome {
                    TightenOutcome::Bounds { lower, upper } => {
                        if lower > upper {
                            // An empty projection proves the region empty.
                            emptied = true;
                            break;
                        }
                        facts.force_bound(v, lower, upper);
                        snap.tightened.push((v, lower, upper));
                    }
                    TightenOutcome::Infeasible => {
                        emptied = true;
                        break;
                    }
                    // No usable answer for this variable: keep its bounds.
                    TightenOutcome::Failed => {}
                }
            }
            if emptied {
                trace.iterations.push(snap);
                break 'run RegionVerdict::RuledOut;
            }

            // A tightened pre-activation that no longer crosses zero pins its
            // ReLU's state from here on.
            let uncertain: BTreeSet<usize> = uncertain.into_iter().collect();
            for &(v, _, _) in &snap.tightened {
                if !uncertain.contains(&v) {
                    continue;
                }
                let (l, u) = facts.bounds[&v];
                if u <= 0.0 {
                    if facts.deactivated.insert(v) {
                        snap.newly_deactivated.push(v);
                    }
                } else if l >= 0.0 && facts.activated.insert(v) {
                    snap.newly_activated.push(v);
                }
            }

            elem = analyze_graph(Arc::clone(graph), box_, &facts)?;
            if let Some(list) = steps.as_deref_mut() {
                list.push(RefinementStep { element: elem.clone(), facts: facts.clone() });
            }
            trace.final_input_box = elem.input_box();

            if elem.is_empty() {
                trace.iterations.push(snap);
                break 'run RegionVerdict::RuledOut;
            }

            let lb = score_gap_lower_bound(&elem, region.anchor, region.target)?;
            snap.objective_lower_bound = Some(lb);
            trace.iterations.push(snap);
            if lb > 0.0 {
                break 'run RegionVerdict::RuledOut;
            }
        }
        RegionVerdict::Unresolved
    };

    trace.verdict = verdict;
    trace.renewed_activated = facts.activated.len();
    trace.renewed_deactivated = facts.deactivated.len();
    Ok(trace)
}

/// Local robustness of `net` at `x` under an L-infinity ball of radius `r`.
///
/// The anchor label is the network's own classification of `x`. Returns
/// [`Verdict::Yes`] only when every competitor label is dominated, either by
/// the initial analysis or after its spurious region is refined away.
pub fn verify(net: &Network, x: &[f64], r: f64, opts: &VerifyOptions) -> Result<VerificationReport> {
    let anchor = net.classify(x)?;
    let box_ = InputBox::linf_ball(x, r)?;
    verify_box(net, &box_, anchor, opts)
}

/// [`verify`] over an explicit box and anchor label. Stops at the first
/// unresolved region: the overall answer is already decided at that point.
pub fn verify_box(
    net: &Network,
    box_: &InputBox,
    anchor: usize,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    run_verify(net, box_, anchor, opts, true)
}

/// [`verify_box`] that keeps processing regions after an unresolved one, so
/// every region gets a trace. Quantitative verification needs the tightened
/// input box of *each* unresolved region, not just the first.
pub fn verify_box_exhaustive(
    net: &Network,
    box_: &InputBox,
    anchor: usize,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    run_verify(net, box_, anchor, opts, false)
}

/// Bracket tolerance of [`max_verifiable_radius`].
pub const RADIUS_TOLERANCE: f64 = 1e-3;
/// Probe budget of [`max_verifiable_radius`].
pub const MAX_RADIUS_PROBES: usize = 20;

/// Result of [`max_verifiable_radius`].
#[derive(Debug, Clone)]
pub struct RadiusSearch {
    /// Largest radius that verified; 0 when every probe failed.
    pub max_radius: f64,
    /// Radii probed, in order, with their verdicts.
    pub probes: Vec<(f64, Verdict)>,
}

/// Binary-searches the largest radius in `(0, r_max]` at which [`verify`]
/// answers yes, within [`RADIUS_TOLERANCE`] and [`MAX_RADIUS_PROBES`] probes;
/// radius 0 is assumed verifiable. The bracket endpoint is probed first, so a
/// fully-verifiable range needs a single query. The answer is meaningful when
/// verifiability is monotone in the radius, which holds for the engine's
/// sound verdicts.
pub fn max_verifiable_radius(
    net: &Network,
    x: &[f64],
    r_max: f64,
    opts: &VerifyOptions,
) -> Result<RadiusSearch> {
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::Shape(format!(
            "radius bracket must be positive and finite, got {r_max}"
        )));
    }
    let verdict_at = |r: f64| -> Result<Verdict> { Ok(verify(net, x, r, opts)?.verdict) };
    let mut probes = Vec::new();
    let v = verdict_at(r_max)?;
    probes.push((r_max, v));
    if v == Verdict::Yes {
        return Ok(RadiusSearch { max_radius: r_max, probes });
    }
    let (mut lo, mut hi) = (0.0f64, r_max);
    while probes.len() < MAX_RADIUS_PROBES && hi - lo > RADIUS_TOLERANCE {
        let mid = (lo + hi) / 2.0;
        let v = verdict_at(mid)?;
        probes.push((mid, v));
        if v == Verdict::Yes {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RadiusSearch { max_radius: lo, probes })
}

fn run_verify(
    net: &Network,
    box_: &InputBox,
    anchor: usize,
    opts: &VerifyOptions,
    stop_at_first_unresolved: bool,
) -> Result<VerificationReport> {
    let start = Instant::now();
    let graph = Arc::new(NeuronGraph::from_network(net));
    let elem = analyze_graph(Arc::clone(&graph), box_, &ForcedFacts::default())?;

    let mut ranked = ranked_candidates(&elem, anchor)?;
    if !opts.order_small_regions_first {
        ranked.sort_by_key(|&(t, _)| t);
    }
    let candidate_labels: Vec<usize> = ranked.iter().map(|&(t, _)| t).collect();

    let mut traces = Vec::new();
    let mut ruled_out: Vec<usize> = Vec::new();
    let mut all_ruled_out = true;
    for &(t, _) in &ranked {
        let region =
            SpuriousRegion::new(anchor, t, opts.boundary_spurious_region, ruled_out.clone())?;
        let trace = refine_on_graph(&graph, box_, &region, opts.max_iterations, None)?;
        let verdict = trace.verdict;
        traces.push(trace);
        match verdict {
            RegionVerdict::RuledOut => ruled_out.push(t),
            RegionVerdict::Unresolved => {
                all_ruled_out = false;
                if stop_at_first_unresolved {
                    break;
                }
            }
        }
    }

    Ok(VerificationReport {
        verdict: if all_ruled_out { Verdict::Yes } else { Verdict::Unknown },
        anchor_label: anchor,
        candidate_labels,
        traces,
        wall_time: start.elapsed(),
    })
}
