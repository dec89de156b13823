//! Quantitative robustness: a sound lower bound on the classified-correctly
//! fraction of a perturbation box.
//!
//! The box is partitioned into equal-volume sub-boxes (repeated bisection of
//! each part's widest dimension). Every sub-box runs the full refinement
//! pipeline; a sub-box that verifies contributes nothing to the violation
//! bound, while each unresolved spurious region contributes the volume of its
//! final LP-tightened input box. Summing those fractions — capped at the
//! sub-box's own share — over-approximates the measure of misclassified
//! inputs, so `1 - total` soundly under-approximates the robust fraction η.
//!
//! The boundary-restricted region encoding is forced off here: a boundary
//! slice has no volume to account for, so its tightened box would understate
//! the violating set.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::network::{InputBox, Network};
use crate::refine::{verify_box_exhaustive, RegionVerdict, Verdict, VerifyOptions};
use crate::{Error, Result};

/// Knobs of the quantitative engine.
#[derive(Debug, Clone)]
pub struct QuantOptions {
    /// Number of equal-volume sub-boxes; must be a power of two.
    pub splits: usize,
    /// Refinement iteration budget per spurious region.
    pub max_iterations: usize,
    /// Candidate ordering, as in [`VerifyOptions`].
    pub order_small_regions_first: bool,
    /// Target robust fraction. When set, splits run sequentially and the run
    /// stops as soon as the verdict against the target is certain either way;
    /// unprocessed splits count as fully violated, keeping the bound sound.
    pub eta_target: Option<f64>,
}

impl Default for QuantOptions {
    fn default() -> Self {
        QuantOptions {
            splits: 32,
            max_iterations: 5,
            order_small_regions_first: true,
            eta_target: None,
        }
    }
}

/// How far one sub-box got.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SplitVerdict {
    /// Every competitor label ruled out on this sub-box.
    Verified,
    /// At least one spurious region survived; its boxes are accounted.
    Unresolved,
    /// Not analyzed (early exit); counted as fully violated.
    Skipped,
}

/// One unresolved spurious region of one sub-box.
#[derive(Debug, Clone, Serialize)]
pub struct UnresolvedBox {
    /// Competitor label of the surviving region.
    pub label: usize,
    /// Final tightened input box of that region.
    pub input_box: InputBox,
    /// Its volume as a fraction of the whole perturbation box.
    pub volume_fraction: f64,
}

/// Outcome of one sub-box.
#[derive(Debug, Clone, Serialize)]
pub struct SplitReport {
    pub index: usize,
    pub sub_box: InputBox,
    pub verdict: SplitVerdict,
    /// True when the initial analysis alone verified the sub-box (the
    /// candidate list was empty, so no LP ran).
    pub verified_without_refinement: bool,
    pub unresolved: Vec<UnresolvedBox>,
    /// Contribution to the violation bound, capped at the sub-box's share.
    pub violation_contribution: f64,
}

/// Result of [`quantify`].
#[derive(Debug, Clone, Serialize)]
pub struct QuantReport {
    pub anchor_label: usize,
    /// Sound lower bound on the fraction classified like the anchor.
    pub eta_lower_bound: f64,
    /// `1 - eta_lower_bound`.
    pub violation_upper_bound: f64,
    /// Baseline using the initial analysis only: an unrefined split counts as
    /// fully violated.
    pub deeppoly_eta_lower_bound: f64,
    pub deeppoly_violation_upper_bound: f64,
    pub splits_total: usize,
    pub splits_verified: usize,
    pub splits_verified_without_refinement: usize,
    pub splits: Vec<SplitReport>,
    /// Wall-clock time; excluded from serialization so identical runs produce
    /// identical report bytes.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Partitions `box_` into `k` equal-volume sub-boxes by repeatedly bisecting
/// every part along its widest dimension (ties to the lowest dimension).
pub fn split_box(box_: &InputBox, k: usize) -> Result<Vec<InputBox>> {
    if k == 0 || !k.is_power_of_two() {
        return Err(Error::InvalidK(k));
    }
    let mut parts = vec![box_.clone()];
    while parts.len() < k {
        parts = parts
            .iter()
            .flat_map(|p| {
                let dim = (0..p.dim())
                    .max_by(|&a, &b| {
                        p.width(a).partial_cmp(&p.width(b)).unwrap().then(b.cmp(&a))
                    })
                    .expect("boxes are non-empty");
                let mid = p.lower[dim] + p.width(dim) / 2.0;
                let mut low = p.clone();
                low.upper[dim] = mid;
                let mut high = p.clone();
                high.lower[dim] = mid;
                [low, high]
            })
            .collect();
    }
    Ok(parts)
}

/// Volume of `sub` as a fraction of `whole`, computed in log-space so very
/// high-dimensional boxes stay finite.
pub fn box_volume_fraction(sub: &InputBox, whole: &InputBox) -> Result<f64> {
    if sub.dim() != whole.dim() {
        return Err(Error::Shape(format!(
            "box dimensions differ: {} vs {}",
            sub.dim(),
            whole.dim()
        )));
    }
    let mut log_ratio = 0.0f64;
    for i in 0..whole.dim() {
        let ww = whole.width(i);
        if ww <= 0.0 {
            return Err(Error::DegenerateBox(format!(
                "dimension {i} of the reference box has zero width"
            )));
        }
        log_ratio += sub.width(i).ln() - ww.ln();
    }
    Ok(log_ratio.exp())
}

/// Quantitative robustness of `net` at `x` under an L-infinity ball of
/// radius `r`.
pub fn quantify(net: &Network, x: &[f64], r: f64, opts: &QuantOptions) -> Result<QuantReport> {
    let anchor = net.classify(x)?;
    let whole = InputBox::linf_ball(x, r)?;
    quantify_box(net, &whole, anchor, opts)
}

/// [`quantify`] over an explicit box and anchor label.
pub fn quantify_box(
    net: &Network,
    whole: &InputBox,
    anchor: usize,
    opts: &QuantOptions,
) -> Result<QuantReport> {
    let start = Instant::now();
    if let Some(target) = opts.eta_target {
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::Shape(format!("eta target must lie in [0, 1], got {target}")));
        }
    }
    let subs = split_box(whole, opts.splits)?;
    let vopts = VerifyOptions {
        max_iterations: opts.max_iterations,
        boundary_spurious_region: false,
        order_small_regions_first: opts.order_small_regions_first,
    };

    let analyze_split = |(index, sub): (usize, &InputBox)| -> Result<SplitReport> {
        let fraction = box_volume_fraction(sub, whole)?;
        let report = verify_box_exhaustive(net, sub, anchor, &vopts)?;
        let verified = report.verdict == Verdict::Yes;
        let mut unresolved = Vec::new();
        let mut contribution = 0.0;
        if !verified {
            for trace in &report.traces {
                if trace.verdict != RegionVerdict::Unresolved {
                    continue;
                }
                let vf = box_volume_fraction(&trace.final_input_box, whole)?;
                contribution += vf;
                unresolved.push(UnresolvedBox {
                    label: trace.label,
                    input_box: trace.final_input_box.clone(),
                    volume_fraction: vf,
                });
            }
            contribution = contribution.min(fraction);
        }
        Ok(SplitReport {
            index,
            sub_box: sub.clone(),
            verdict: if verified { SplitVerdict::Verified } else { SplitVerdict::Unresolved },
            verified_without_refinement: verified && report.candidate_labels.is_empty(),
            unresolved,
            violation_contribution: contribution,
        })
    };

    let skipped_split = |(index, sub): (usize, &InputBox)| -> Result<SplitReport> {
        let fraction = box_volume_fraction(sub, whole)?;
        Ok(SplitReport {
            index,
            sub_box: sub.clone(),
            verdict: SplitVerdict::Skipped,
            verified_without_refinement: false,
            unresolved: Vec::new(),
            violation_contribution: fraction,
        })
    };

    let split_reports: Vec<SplitReport> = match opts.eta_target {
        // No target: all splits are needed, so run them in parallel. The
        // collected order matches the input order, keeping reports identical
        // regardless of thread count.
        None => subs
            .iter()
            .enumerate()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(analyze_split)
            .collect::<Result<_>>()?,
        Some(target) => {
            let budget = 1.0 - target;
            let fractions: Vec<f64> =
                subs.iter().map(|s| box_volume_fraction(s, whole)).collect::<Result<_>>()?;
            let mut remaining: f64 = fractions.iter().sum();
            let mut total = 0.0f64;
            let mut reports = Vec::with_capacity(subs.len());
            let mut decided = false;
            for (index, sub) in subs.iter().enumerate() {
                if decided {
                    reports.push(skipped_split((index, sub))?);
                    continue;
                }
                let report = analyze_split((index, sub))?;
                remaining -= fractions[index];
                total += report.violation_contribution;
                reports.push(report);
                // Certain failure (bound already too big) or certain success
                // (even fully-violated remaining splits fit the budget).
                decided = total > budget || total + remaining <= budget;
            }
            reports
        }
    };

    let mut violation = 0.0f64;
    let mut baseline_violation = 0.0f64;
    let mut verified = 0usize;
    let mut plain = 0usize;
    for (sr, sub) in split_reports.iter().zip(&subs) {
        violation += sr.violation_contribution;
        if sr.verified_without_refinement {
            plain += 1;
        } else {
            baseline_violation += box_volume_fraction(sub, whole)?;
        }
        if sr.verdict == SplitVerdict::Verified {
            verified += 1;
        }
    }
    let violation = violation.clamp(0.0, 1.0);
    let baseline_violation = baseline_violation.clamp(0.0, 1.0);

    Ok(QuantReport {
        anchor_label: anchor,
        eta_lower_bound: 1.0 - violation,
        violation_upper_bound: violation,
        deeppoly_eta_lower_bound: 1.0 - baseline_violation,
        deeppoly_violation_upper_bound: baseline_violation,
        splits_total: split_reports.len(),
        splits_verified: verified,
        splits_verified_without_refinement: plain,
        splits: split_reports,
        wall_time: start.elapsed(),
    })
}
