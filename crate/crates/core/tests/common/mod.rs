//! Shared fixtures for the integration suites: the worked 2-2-2 example,
//! seeded random networks and instances, and a brute-force LP oracle that
//! enumerates candidate vertices instead of pivoting.

#![allow(dead_code)] // each integration target uses a subset of the helpers

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relucheck::lp::{LinearProgram, Relation, Sense};
use relucheck::{Layer, Network};

/// 2-2-2 network: hidden pre-activations `x0 - x1` and `x0 + x1 + 2.5`,
/// outputs copy the two ReLU values. Around the origin the anchor label is 1
/// and the robustness radius is 1.25.
pub fn demo_net() -> Network {
    Network::new(
        2,
        vec![
            Layer::Affine {
                weights: vec![vec![1.0, -1.0], vec![1.0, 1.0]],
                bias: vec![0.0, 2.5],
            },
            Layer::Relu,
            Layer::Affine {
                weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                bias: vec![0.0, 0.0],
            },
        ],
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_affine(rng: &mut ChaCha8Rng, in_width: usize, out_width: usize) -> Layer {
    let weights = (0..out_width)
        .map(|_| (0..in_width).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let bias = (0..out_width).map(|_| rng.gen_range(-0.5..=0.5)).collect();
    Layer::Affine { weights, bias }
}

/// Fully-connected ReLU network with the given hidden widths and uniform
/// random weights.
pub fn random_net(
    rng: &mut ChaCha8Rng,
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
) -> Network {
    let mut layers = Vec::new();
    let mut prev = input_dim;
    for &w in hidden {
        layers.push(random_affine(rng, prev, w));
        layers.push(Layer::Relu);
        prev = w;
    }
    layers.push(random_affine(rng, prev, output_dim));
    Network::new(input_dim, layers).unwrap()
}

/// A network plus a centre point and perturbation radius.
pub struct TinyInstance {
    pub net: Network,
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Small instance (at most 12 ReLU neurons) suitable for the exact
/// pattern-enumeration oracle.
pub fn random_tiny_instance(rng: &mut ChaCha8Rng) -> TinyInstance {
    let input_dim = rng.gen_range(2..=3);
    let hidden: Vec<usize> = match rng.gen_range(0..3) {
        0 => vec![rng.gen_range(3..=6)],
        1 => vec![3, 3],
        _ => vec![4, 3],
    };
    let output_dim = rng.gen_range(2..=3);
    let net = random_net(rng, input_dim, &hidden, output_dim);
    assert!(net.relu_count() <= 12);
    let center = (0..input_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let radius = rng.gen_range(0.05..=0.4);
    TinyInstance { net, center, radius }
}

/// Dense mirror of a [`LinearProgram`], kept separately so the brute-force
/// oracle never reads solver internals.
#[derive(Debug, Clone)]
pub struct DenseLp {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// `(coefficients, relation, rhs)` rows.
    pub rows: Vec<(Vec<f64>, Relation, f64)>,
    pub objective: Vec<f64>,
    pub sense: Sense,
}

impl DenseLp {
    pub fn num_vars(&self) -> usize {
        self.lo.len()
    }

    pub fn to_lp(&self) -> LinearProgram {
        let n = self.num_vars();
        let mut lp = LinearProgram::new(n);
        for i in 0..n {
            lp.set_bounds(i, self.lo[i], self.hi[i]);
        }
        for (coeffs, rel, rhs) in &self.rows {
            let sparse: Vec<(usize, f64)> = coeffs
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i, *w))
                .collect();
            lp.add_constraint(sparse, *rel, *rhs);
        }
        let obj: Vec<(usize, f64)> = self
            .objective
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i, *w))
            .collect();
        lp.set_objective(obj, self.sense);
        lp
    }

    pub fn point_feasible(&self, x: &[f64], tol: f64) -> bool {
        let n = self.num_vars();
        for i in 0..n {
            if x[i] < self.lo[i] - tol || x[i] > self.hi[i] + tol {
                return false;
            }
        }
        for (coeffs, rel, rhs) in &self.rows {
            let v: f64 = coeffs.iter().zip(x).map(|(c, xi)| c * xi).sum();
            let ok = match rel {
                Relation::Le => v <= rhs + tol,
                Relation::Ge => v >= rhs - tol,
                Relation::Eq => (v - rhs).abs() <= tol,
            };
            if !ok {
                return false;
            }
        }
        true
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, xi)| c * xi).sum()
    }

    /// Brute-force optimum over candidate vertices: every nonsingular choice
    /// of `n` constraints treated as equalities. For a program whose
    /// variables all have finite bounds the feasible set is a polytope, so
    /// it is nonempty iff some candidate vertex is feasible, and any optimum
    /// is attained at one; `None` therefore means infeasible.
    pub fn vertex_optimum(&self) -> Option<f64> {
        let n = self.num_vars();
        assert!(
            self.lo.iter().chain(&self.hi).all(|b| b.is_finite()),
            "vertex enumeration needs finite variable bounds"
        );
        let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
        for (coeffs, _, rhs) in &self.rows {
            planes.push((coeffs.clone(), *rhs));
        }
        for i in 0..n {
            let mut unit = vec![0.0; n];
            unit[i] = 1.0;
            planes.push((unit.clone(), self.lo[i]));
            planes.push((unit, self.hi[i]));
        }

        let mut best: Option<f64> = None;
        for combo in combinations(planes.len(), n) {
            let a: Vec<Vec<f64>> = combo.iter().map(|&k| planes[k].0.clone()).collect();
            let b: Vec<f64> = combo.iter().map(|&k| planes[k].1).collect();
            let Some(x) = gaussian_solve(a, b) else { continue };
            if !self.point_feasible(&x, 1e-7) {
                continue;
            }
            let v = self.objective_at(&x);
            best = Some(match (best, self.sense) {
                (None, _) => v,
                (Some(b), Sense::Minimize) => b.min(v),
                (Some(b), Sense::Maximize) => b.max(v),
            });
        }
        best
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting; `None`
/// for (near-)singular systems.
pub fn gaussian_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

/// All `k`-element index subsets of `0..n`, in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        let needed = k - cur.len();
        for i in start..=n.saturating_sub(needed) {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Random box-bounded LP that is feasible by construction: every row is
/// satisfied with slack at a random interior point.
pub fn random_feasible_lp(rng: &mut ChaCha8Rng) -> DenseLp {
    let n = rng.gen_range(2..=6);
    let m = rng.gen_range(2..=6);
    // Dyadic entries keep the instances well conditioned.
    let grid = |rng: &mut ChaCha8Rng, scale: i32| rng.gen_range(-scale..=scale) as f64 / 8.0;

    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let mut x0 = Vec::with_capacity(n);
    for _ in 0..n {
        let a = grid(rng, 16);
        let w = rng.gen_range(4..=24) as f64 / 8.0;
        let frac = rng.gen_range(1..=7) as f64 / 8.0;
        lo.push(a);
        hi.push(a + w);
        // Witness point strictly inside the box.
        x0.push(a + frac * w);
    }

    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let mut coeffs: Vec<f64> = (0..n).map(|_| grid(rng, 8)).collect();
        if coeffs.iter().all(|c| *c == 0.0) {
            coeffs[rng.gen_range(0..n)] = 1.0;
        }
        let at_x0: f64 = coeffs.iter().zip(&x0).map(|(c, x)| c * x).sum();
        let slack = rng.gen_range(1..=12) as f64 / 8.0;
        let (rel, rhs) = match rng.gen_range(0..3) {
            0 => (Relation::Le, at_x0 + slack),
            1 => (Relation::Ge, at_x0 - slack),
            _ => (Relation::Eq, at_x0),
        };
        rows.push((coeffs, rel, rhs));
    }

    let objective: Vec<f64> = (0..n).map(|_| grid(rng, 8)).collect();
    let sense = if rng.gen_bool(0.5) { Sense::Minimize } else { Sense::Maximize };
    DenseLp { lo, hi, rows, objective, sense }
}
