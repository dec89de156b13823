//! Dense two-phase simplex over bounded variables.
//!
//! Every constraint row gets one slack column (`<=` keeps it nonnegative,
//! `>=` nonpositive, `=` fixes it to zero) and one artificial column; phase 1
//! minimizes the artificial sum from the all-artificial basis, phase 2
//! optimizes the caller's objective with the artificials fixed at zero.
//! Entering and leaving variables follow Bland's rule (smallest eligible
//! index, smallest basic variable among ratio ties) so the iteration cannot
//! cycle; a pivot budget turns numerical stalls into an explicit failure.
//! Nonbasic variables may sit at either finite bound, and a variable whose
//! ratio test is won by its own opposite bound simply flips without a basis
//! change.

use super::{LinearProgram, LpOutcome, Relation, Sense, EPS_LP, INFEASIBILITY_MARGIN, MAX_PIVOTS};

const INF: f64 = f64::INFINITY;
/// Slop used only to group near-equal ratios before the Bland tie-break.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    Free,
}

enum RunResult {
    Optimal,
    Unbounded,
    PivotLimit,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols`, kept equal to B^-1 A throughout.
    a: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    status: Vec<VarStatus>,
    /// Basic variable of each row.
    basic: Vec<usize>,
    /// Current value of each row's basic variable.
    xb: Vec<f64>,
    /// Reduced costs of the phase currently running.
    d: Vec<f64>,
    pivots: usize,
}

pub(super) fn solve(lp: &LinearProgram) -> LpOutcome {
    let n0 = lp.num_vars();
    let m = lp.constraints.len();

    let values_ok = lp.bounds.iter().all(|(l, h)| !l.is_nan() && !h.is_nan())
        && lp.constraints.iter().all(|c| {
            c.rhs.is_finite() && c.coeffs.iter().all(|(i, w)| *i < n0 && w.is_finite())
        })
        && lp.objective.iter().all(|(i, w)| *i < n0 && w.is_finite());
    if !values_ok {
        return LpOutcome::NumericalFailure;
    }
    if lp.bounds.iter().any(|(l, h)| l > h) {
        return LpOutcome::Infeasible;
    }

    let cols = n0 + 2 * m;
    let art0 = n0 + m;
    let mut t = Tableau {
        rows: m,
        cols,
        a: vec![0.0; m * cols],
        lo: vec![0.0; cols],
        hi: vec![0.0; cols],
        status: vec![VarStatus::AtLower; cols],
        basic: vec![0; m],
        xb: vec![0.0; m],
        d: vec![0.0; cols],
        pivots: 0,
    };
    for j in 0..n0 {
        t.lo[j] = lp.bounds[j].0;
        t.hi[j] = lp.bounds[j].1;
    }
    for (i, c) in lp.constraints.iter().enumerate() {
        let (slo, shi) = match c.rel {
            Relation::Le => (0.0, INF),
            Relation::Ge => (-INF, 0.0),
            Relation::Eq => (0.0, 0.0),
        };
        t.lo[n0 + i] = slo;
        t.hi[n0 + i] = shi;
        t.lo[art0 + i] = 0.0;
        t.hi[art0 + i] = INF;
    }
    for j in 0..art0 {
        t.status[j] = if t.lo[j].is_finite() {
            VarStatus::AtLower
        } else if t.hi[j].is_finite() {
            VarStatus::AtUpper
        } else {
            VarStatus::Free
        };
    }

    // Fill rows, then make residuals nonnegative by negating rows so the
    // artificial basis starts feasible with coefficient +1.
    for (i, c) in lp.constraints.iter().enumerate() {
        for (j, w) in &c.coeffs {
            t.a[i * cols + j] += w;
        }
        t.a[i * cols + n0 + i] = 1.0;
        let mut residual = c.rhs;
        for j in 0..art0 {
            let w = t.a[i * cols + j];
            if w != 0.0 {
                residual -= w * t.nonbasic_value(j);
            }
        }
        if residual < 0.0 {
            for j in 0..art0 {
                t.a[i * cols + j] = -t.a[i * cols + j];
            }
            residual = -residual;
        }
        t.a[i * cols + art0 + i] = 1.0;
        t.basic[i] = art0 + i;
        t.status[art0 + i] = VarStatus::Basic;
        t.xb[i] = residual;
    }

    // Phase 1: drive the artificials out.
    let mut c1 = vec![0.0; cols];
    for j in art0..cols {
        c1[j] = 1.0;
    }
    t.reduced_costs(&c1);
    match t.run() {
        RunResult::Optimal => {}
        // Phase 1 is bounded below by zero, so "unbounded" means the
        // numbers broke down.
        RunResult::Unbounded | RunResult::PivotLimit => return LpOutcome::NumericalFailure,
    }
    let infeasibility: f64 = (0..m)
        .filter(|i| t.basic[*i] >= art0)
        .map(|i| t.xb[i].max(0.0))
        .sum();
    if infeasibility > INFEASIBILITY_MARGIN {
        return LpOutcome::Infeasible;
    }

    // Phase 2: fix artificials at zero and optimize the real objective.
    for j in art0..cols {
        t.lo[j] = 0.0;
        t.hi[j] = 0.0;
    }
    let mut c2 = vec![0.0; cols];
    for (j, w) in &lp.objective {
        c2[*j] += match lp.sense {
            Sense::Minimize => *w,
            Sense::Maximize => -*w,
        };
    }
    t.reduced_costs(&c2);
    match t.run() {
        RunResult::Optimal => {}
        RunResult::Unbounded => return LpOutcome::Unbounded,
        RunResult::PivotLimit => return LpOutcome::NumericalFailure,
    }

    let mut point = vec![0.0; cols];
    for j in 0..cols {
        if t.status[j] != VarStatus::Basic {
            point[j] = t.nonbasic_value(j);
        }
    }
    for i in 0..m {
        point[t.basic[i]] = t.xb[i];
    }
    point.truncate(n0);
    let value: f64 = lp.objective.iter().map(|(j, w)| w * point[*j]).sum();
    LpOutcome::Optimal { value, point }
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::AtLower => self.lo[j],
            VarStatus::AtUpper => self.hi[j],
            VarStatus::Free => 0.0,
            VarStatus::Basic => unreachable!("basic variable has no bound value"),
        }
    }

    fn reduced_costs(&mut self, c: &[f64]) {
        for j in 0..self.cols {
            let mut d = c[j];
            for i in 0..self.rows {
                let cb = c[self.basic[i]];
                if cb != 0.0 {
                    d -= cb * self.at(i, j);
                }
            }
            self.d[j] = d;
        }
    }

    /// Bland: the smallest-index nonbasic variable with an improving
    /// direction. Returns the direction the variable will move in.
    fn entering(&self) -> Option<(usize, f64)> {
        for j in 0..self.cols {
            if self.status[j] == VarStatus::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            match self.status[j] {
                VarStatus::AtLower if self.d[j] < -EPS_LP => return Some((j, 1.0)),
                VarStatus::AtUpper if self.d[j] > EPS_LP => return Some((j, -1.0)),
                VarStatus::Free if self.d[j] < -EPS_LP => return Some((j, 1.0)),
                VarStatus::Free if self.d[j] > EPS_LP => return Some((j, -1.0)),
                _ => {}
            }
        }
        None
    }

    fn run(&mut self) -> RunResult {
        loop {
            let Some((q, dir)) = self.entering() else {
                return RunResult::Optimal;
            };

            // How far q can travel before it reaches its own opposite bound.
            let theta_flip = if self.lo[q].is_finite() && self.hi[q].is_finite() {
                self.hi[q] - self.lo[q]
            } else {
                INF
            };

            // Ratio test: first the exact minimum, then the Bland tie-break.
            let mut theta_min = INF;
            for i in 0..self.rows {
                if let Some((ti, _)) = self.ratio(i, q, dir) {
                    if ti < theta_min {
                        theta_min = ti;
                    }
                }
            }
            if theta_min == INF && theta_flip == INF {
                return RunResult::Unbounded;
            }

            if theta_flip <= theta_min {
                // Bound flip: no basis change.
                for i in 0..self.rows {
                    let aiq = self.at(i, q);
                    if aiq != 0.0 {
                        self.xb[i] -= dir * theta_flip * aiq;
                    }
                }
                self.status[q] = match self.status[q] {
                    VarStatus::AtLower => VarStatus::AtUpper,
                    VarStatus::AtUpper => VarStatus::AtLower,
                    s => unreachable!("flip of {s:?}"),
                };
            } else {
                let mut leave: Option<(usize, VarStatus)> = None;
                for i in 0..self.rows {
                    if let Some((ti, to)) = self.ratio(i, q, dir) {
                        if ti <= theta_min + TIE_EPS {
                            let better = match leave {
                                None => true,
                                Some((r, _)) => self.basic[i] < self.basic[r],
                            };
                            if better {
                                leave = Some((i, to));
                            }
                        }
                    }
                }
                let (r, leave_to) = leave.expect("finite ratio must name a row");
                self.pivot(r, q, dir, theta_min, leave_to);
            }

            self.pivots += 1;
            if self.pivots > MAX_PIVOTS {
                return RunResult::PivotLimit;
            }
        }
    }

    /// Step limit imposed by row `i` when `q` moves in `dir`, and the bound
    /// the row's basic variable would land on.
    fn ratio(&self, i: usize, q: usize, dir: f64) -> Option<(f64, VarStatus)> {
        let alpha = self.at(i, q);
        if alpha.abs() <= EPS_LP {
            return None;
        }
        let p = self.basic[i];
        let delta = -dir * alpha; // movement of x_p per unit step of x_q
        if delta > 0.0 {
            if self.hi[p] == INF {
                return None;
            }
            Some((((self.hi[p] - self.xb[i]) / delta).max(0.0), VarStatus::AtUpper))
        } else {
            if self.lo[p] == -INF {
                return None;
            }
            Some((((self.xb[i] - self.lo[p]) / -delta).max(0.0), VarStatus::AtLower))
        }
    }

    fn pivot(&mut self, r: usize, q: usize, dir: f64, theta: f64, leave_to: VarStatus) {
        let new_q = self.nonbasic_value(q) + dir * theta;
        for i in 0..self.rows {
            if i != r {
                let aiq = self.at(i, q);
                if aiq != 0.0 {
                    self.xb[i] -= dir * theta * aiq;
                }
            }
        }
        self.status[self.basic[r]] = leave_to;

        let piv = self.at(r, q);
        let inv = 1.0 / piv;
        for j in 0..self.cols {
            self.a[r * self.cols + j] *= inv;
        }
        self.a[r * self.cols + q] = 1.0;
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.at(i, q);
            if f != 0.0 {
                for j in 0..self.cols {
                    let v = self.at(r, j);
                    if v != 0.0 {
                        self.a[i * self.cols + j] -= f * v;
                    }
                }
                self.a[i * self.cols + q] = 0.0;
            }
        }
        let dq = self.d[q];
        if dq != 0.0 {
            for j in 0..self.cols {
                let v = self.at(r, j);
                if v != 0.0 {
                    self.d[j] -= dq * v;
                }
            }
            self.d[q] = 0.0;
        }

        self.basic[r] = q;
        self.status[q] = VarStatus::Basic;
        self.xb[r] = new_q;
    }
}
