//! Linear programs over network neurons and a self-contained simplex.
//!
//! [`encode`] turns an abstract element into the standard relaxation: affine
//! neurons become equality rows, resolved ReLUs become identity/zero rows,
//! uncertain ReLUs get the triangle rows `y <= chord(x)`, `y >= x`, `y >= 0`,
//! and every neuron's concrete interval becomes a variable bound. The
//! spurious output region under scrutiny contributes its defining rows.
//!
//! [`tighten`] asks the same LP for the exact min and max of one variable;
//! the refinement loop forces those answers back into the next analysis run.

mod simplex;

use std::io::{self, Write};

use crate::deeppoly::{relu_transformer, AbstractElement, NeuronKind, ReluState};
use crate::refine::SpuriousRegion;
use crate::Result;

/// Pivot tolerance of the simplex.
pub const EPS_LP: f64 = 1e-9;
/// Phase-1 optimum above this margin is required to declare infeasibility;
/// borderline programs count as feasible (the safe direction for soundness).
pub const INFEASIBILITY_MARGIN: f64 = 1e-6;
/// Pivot budget before giving up with [`LpOutcome::NumericalFailure`].
pub const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// One row `sum coeff_i x_i (<=|>=|=) rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Relation,
    pub rhs: f64,
}

/// A bounded-variable linear program.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    pub constraints: Vec<Constraint>,
    /// Per-variable `[lo, hi]`; infinities mark missing bounds.
    pub bounds: Vec<(f64, f64)>,
    pub objective: Vec<(usize, f64)>,
    pub sense: Sense,
}

/// Solver verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: Vec<f64> },
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted or numbers went bad; callers must treat this as
    /// "no information", never as infeasibility.
    NumericalFailure,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); num_vars],
            objective: Vec::new(),
            sense: Sense::Minimize,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) {
        assert!(var < self.num_vars, "variable {var} out of range");
        assert!(!lo.is_nan() && !hi.is_nan(), "NaN bound on variable {var}");
        self.bounds[var] = (lo, hi);
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, rel: Relation, rhs: f64) {
        assert!(
            coeffs.iter().all(|(i, w)| *i < self.num_vars && w.is_finite()),
            "bad constraint coefficients"
        );
        assert!(rhs.is_finite(), "constraint rhs must be finite");
        self.constraints.push(Constraint { coeffs, rel, rhs });
    }

    pub fn set_objective(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense) {
        assert!(
            coeffs.iter().all(|(i, w)| *i < self.num_vars && w.is_finite()),
            "bad objective coefficients"
        );
        self.objective = coeffs;
        self.sense = sense;
    }

    /// Solves with the stored objective.
    pub fn solve(&self) -> LpOutcome {
        simplex::solve(self)
    }

    /// Pure feasibility check (ignores the objective).
    pub fn feasibility(&self) -> LpOutcome {
        let mut probe = self.clone();
        probe.objective = Vec::new();
        probe.sense = Sense::Minimize;
        probe.solve()
    }

    /// Writes the program in the fixed-layout LP text interchange format.
    pub fn write_lp_format(&self, w: &mut dyn Write) -> io::Result<()> {
        let term = |coeffs: &[(usize, f64)]| -> String {
            if coeffs.is_empty() {
                return "0 x0".to_string();
            }
            let mut s = String::new();
            for (i, (var, c)) in coeffs.iter().enumerate() {
                if i == 0 {
                    s.push_str(&format!("{c} x{var}"));
                } else if *c < 0.0 {
                    s.push_str(&format!(" - {} x{var}", -c));
                } else {
                    s.push_str(&format!(" + {c} x{var}"));
                }
            }
            s
        };
        match self.sense {
            Sense::Minimize => writeln!(w, "Minimize")?,
            Sense::Maximize => writeln!(w, "Maximize")?,
        }
        writeln!(w, " obj: {}", term(&self.objective))?;
        writeln!(w, "Subject To")?;
        for (k, c) in self.constraints.iter().enumerate() {
            let rel = match c.rel {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            writeln!(w, " c{k}: {} {rel} {}", term(&c.coeffs), c.rhs)?;
        }
        writeln!(w, "Bounds")?;
        for (var, (lo, hi)) in self.bounds.iter().enumerate() {
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) if lo == hi => writeln!(w, " x{var} = {lo}")?,
                (true, true) => writeln!(w, " {lo} <= x{var} <= {hi}")?,
                (true, false) => writeln!(w, " x{var} >= {lo}")?,
                (false, true) => writeln!(w, " x{var} <= {hi}")?,
                (false, false) => writeln!(w, " x{var} free")?,
            }
        }
        writeln!(w, "End")
    }
}

/// Result of tightening one variable against an LP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TightenOutcome {
    /// New bounds, already clamped into the variable's prior bounds. The
    /// interval may be empty (`lower > upper`) when the LP proves the prior
    /// interval unreachable; callers treat that as region infeasibility.
    Bounds { lower: f64, upper: f64 },
    /// The LP itself is infeasible.
    Infeasible,
    /// No usable answer; callers keep the old bounds.
    Failed,
}

/// Minimizes and maximizes `var` subject to `lp`, clamping marginally looser
/// simplex answers into the variable's prior bounds so bounds never widen.
pub fn tighten(lp: &LinearProgram, var: usize) -> TightenOutcome {
    assert!(var < self_num_vars(lp), "variable {var} out of range");
    let (prior_lo, prior_hi) = lp.bounds[var];
    let solve_dir = |sense: Sense| -> LpOutcome {
        let mut probe = lp.clone();
        probe.set_objective(vec![(var, 1.0)], sense);
        probe.solve()
    };
    let lo = match solve_dir(Sense::Minimize) {
        LpOutcome::Optimal { value, .. } => value.max(prior_lo),
        LpOutcome::Unbounded => prior_lo,
        LpOutcome::Infeasible => return TightenOutcome::Infeasible,
        LpOutcome::NumericalFailure => return TightenOutcome::Failed,
    };
    let hi = match solve_dir(Sense::Maximize) {
        LpOutcome::Optimal { value, .. } => value.min(prior_hi),
        LpOutcome::Unbounded => prior_hi,
        LpOutcome::Infeasible => return TightenOutcome::Infeasible,
        LpOutcome::NumericalFailure => return TightenOutcome::Failed,
    };
    TightenOutcome::Bounds { lower: lo, upper: hi }
}

fn self_num_vars(lp: &LinearProgram) -> usize {
    lp.num_vars
}

/// Encodes an abstract element plus a spurious output region as an LP over
/// one variable per neuron. No objective is set.
pub fn encode(elem: &AbstractElement, spu: &SpuriousRegion) -> Result<LinearProgram> {
    let graph = elem.graph();
    let outputs = graph.output_ids();
    spu.validate(outputs.len())?;

    let mut lp = LinearProgram::new(elem.len());
    for id in 0..elem.len() {
        let (l, u) = elem.bounds(id);
        lp.set_bounds(id, l, u);
    }
    for id in 0..elem.len() {
        if let NeuronKind::Affine { form } = graph.kind(id) {
            let mut coeffs = vec![(id, 1.0)];
            coeffs.extend(form.coeffs.iter().map(|(j, w)| (*j, -w)));
            lp.add_constraint(coeffs, Relation::Eq, form.constant);
        }
    }
    for info in elem.relus() {
        let (pre, post) = (info.pre, info.post);
        match info.state {
            ReluState::Activated => {
                lp.add_constraint(vec![(post, 1.0), (pre, -1.0)], Relation::Eq, 0.0);
            }
            ReluState::Deactivated => {
                lp.add_constraint(vec![(post, 1.0)], Relation::Eq, 0.0);
            }
            ReluState::Uncertain => {
                let (l, u) = elem.bounds(pre);
                let rel = relu_transformer(l, u);
                let (slope, icpt) = rel.upper;
                lp.add_constraint(vec![(post, 1.0), (pre, -slope)], Relation::Le, icpt);
                lp.add_constraint(vec![(post, 1.0), (pre, -1.0)], Relation::Ge, 0.0);
                lp.add_constraint(vec![(post, 1.0)], Relation::Ge, 0.0);
            }
        }
    }
    for (coeffs, rel) in spu.output_rows() {
        let row = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| (outputs[k], *c))
            .collect();
        lp.add_constraint(row, rel, 0.0);
    }
    Ok(lp)
}
