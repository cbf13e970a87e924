//! Local cost functions and their closed-form updates.
//!
//! Only quadratics ship: `f(x) = 1/2 x^T Q x + b^T x + c` with `Q` symmetric
//! positive-semidefinite. The scalar convention `f(x) = a x^2 + b x + c` maps
//! to `Q = 2a` — the factor of two is easy to drop silently, so
//! [`QuadraticCost::scalar`] is the only place that conversion happens.
//!
//! [`LocalCost`] is an open interface: anything that can answer the
//! per-node update `argmin_x { f(x) - s^T x + (rho d / 2) ||x||^2 }` can be
//! plugged into the consensus algorithms.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, mat_vec};
use crate::rng::SplitMix64;
use crate::splitting::ProxFunction;

/// Quadratic cost `1/2 x^T Q x + b^T x + c` with symmetric PSD `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    n: usize,
    /// Row-major `n x n`, symmetric.
    q: Vec<f64>,
    b: Vec<f64>,
    /// Offset; stored for value reporting, never used by any update.
    c: f64,
}

impl QuadraticCost {
    /// General matrix form. `q` is row-major `n x n` and must be symmetric
    /// and finite; positive-semidefiniteness is the caller's contract (it is
    /// what makes every `Q + rho d I` system solvable).
    pub fn new(q: Vec<f64>, b: Vec<f64>, c: f64) -> Result<Self> {
        let n = b.len();
        if q.len() != n * n {
            return Err(Error::dim(format!("Q has {} entries, expected {n} x {n}", q.len())));
        }
        if !q.iter().chain(b.iter()).all(|v| v.is_finite()) || !c.is_finite() {
            return Err(Error::non_finite("quadratic cost coefficients"));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, bt) = (q[i * n + j], q[j * n + i]);
                if (a - bt).abs() > 1e-12 * (1.0 + a.abs().max(bt.abs())) {
                    return Err(Error::param("q", format!("not symmetric at ({i}, {j}): {a} vs {bt}")));
                }
            }
        }
        Ok(QuadraticCost { n, q, b, c })
    }

    /// Scalar convention `f(x) = a x^2 + b x + c`, i.e. `Q = 2a` (the second
    /// derivative), requiring `a >= 0`.
    pub fn scalar(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::param("a", format!("must be finite and >= 0, got {a}")));
        }
        QuadraticCost::new(vec![2.0 * a], vec![b], c)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let qx = mat_vec(&self.q, self.n, x);
        let quad: f64 = x.iter().zip(&qx).map(|(xi, qi)| xi * qi).sum();
        let lin: f64 = x.iter().zip(&self.b).map(|(xi, bi)| xi * bi).sum();
        0.5 * quad + lin + self.c
    }
}

/// Interface the consensus algorithms require of a local cost.
pub trait LocalCost {
    fn dim(&self) -> usize;

    /// `argmin_x { f(x) - s^T x + (rho d / 2) ||x||^2 }`, equivalently
    /// `prox_{f / (rho d)}(s / (rho d))`.
    fn x_update(&self, s: &[f64], rho: f64, degree: usize) -> Result<Vec<f64>>;

    fn value(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

impl LocalCost for QuadraticCost {
    fn dim(&self) -> usize {
        self.n
    }

    /// Solves `(Q + rho d I) x = s - b`. In the scalar convention this is the
    /// closed form `x = (s - b) / (2a + rho d)`.
    fn x_update(&self, s: &[f64], rho: f64, degree: usize) -> Result<Vec<f64>> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::param("rho", format!("must be finite and > 0, got {rho}")));
        }
        if degree == 0 {
            return Err(Error::param("degree", "must be at least 1"));
        }
        if s.len() != self.n {
            return Err(Error::dim(format!("s has length {}, cost dimension is {}", s.len(), self.n)));
        }
        let shift = rho * degree as f64;
        if self.n == 1 {
            return Ok(vec![(s[0] - self.b[0]) / (self.q[0] + shift)]);
        }
        let mut a = self.q.clone();
        for i in 0..self.n {
            a[i * self.n + i] += shift;
        }
        let rhs: Vec<f64> = s.iter().zip(&self.b).map(|(si, bi)| si - bi).collect();
        cholesky_solve(&a, self.n, &rhs, "x_update system Q + rho d I")
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        Some(self.eval(x))
    }
}

impl ProxFunction for QuadraticCost {
    fn dim(&self) -> usize {
        self.n
    }

    /// Closed-form prox: `(lambda Q + I) x = v - lambda b`.
    fn prox(&self, lambda: f64, v: &[f64]) -> Result<Vec<f64>> {
        if self.n == 1 {
            return Ok(vec![(v[0] - lambda * self.b[0]) / (lambda * self.q[0] + 1.0)]);
        }
        let mut a: Vec<f64> = self.q.iter().map(|qv| lambda * qv).collect();
        for i in 0..self.n {
            a[i * self.n + i] += 1.0;
        }
        let rhs: Vec<f64> = v.iter().zip(&self.b).map(|(vi, bi)| vi - lambda * bi).collect();
        cholesky_solve(&a, self.n, &rhs, "prox system lambda Q + I")
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        Some(self.eval(x))
    }
}

/// Minimizer of the aggregate cost: `argmin_x sum_i f_i(x) = -(sum Q_i)^{-1} (sum b_i)`,
/// which in the scalar convention is `x* = -sum(b_i) / (2 sum(a_i))`.
///
/// Fails with "optimum not unique" when the aggregate `Q` is singular.
pub fn centralized_optimum(costs: &[QuadraticCost]) -> Result<Vec<f64>> {
    let first = costs
        .first()
        .ok_or_else(|| Error::param("costs", "need at least one cost"))?;
    let n = first.dim();
    let mut q_sum = vec![0.0; n * n];
    let mut b_sum = vec![0.0; n];
    for cost in costs {
        if cost.dim() != n {
            return Err(Error::dim("costs with mixed dimensions".to_string()));
        }
        for (acc, v) in q_sum.iter_mut().zip(cost.q()) {
            *acc += v;
        }
        for (acc, v) in b_sum.iter_mut().zip(cost.b()) {
            *acc += v;
        }
    }
    let neg_b: Vec<f64> = b_sum.iter().map(|v| -v).collect();
    cholesky_solve(&q_sum, n, &neg_b, "aggregate Q; optimum not unique")
}

/// Coefficient ranges for [`make_random_quadratics`] (scalar convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostRanges {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub c: (f64, f64),
}

impl CostRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("a", self.a), ("b", self.b), ("c", self.c)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::param(name, format!("range [{lo}, {hi}] is not a finite interval")));
            }
        }
        if self.a.0 <= 0.0 {
            return Err(Error::param("a", format!("lower bound must be > 0 for strict convexity, got {}", self.a.0)));
        }
        Ok(())
    }
}

impl Default for CostRanges {
    /// Artifact defaults (uniform draws): `a in [0.5, 2]`, `b in [-5, 5]`, `c = 0`.
    fn default() -> Self {
        CostRanges { a: (0.5, 2.0), b: (-5.0, 5.0), c: (0.0, 0.0) }
    }
}

/// Draw reproducible per-node scalar quadratics, coefficients uniform in the
/// given ranges (drawn in the fixed order `a, b, c` per node).
pub fn make_random_quadratics(n_agents: usize, seed: u64, ranges: &CostRanges) -> Result<Vec<QuadraticCost>> {
    if n_agents == 0 {
        return Err(Error::param("n_agents", "must be at least 1"));
    }
    ranges.validate()?;
    let mut rng = SplitMix64::new(seed);
    (0..n_agents)
        .map(|_| {
            let a = rng.uniform(ranges.a.0, ranges.a.1);
            let b = rng.uniform(ranges.b.0, ranges.b.1);
            let c = rng.uniform(ranges.c.0, ranges.c.1);
            QuadraticCost::scalar(a, b, c)
        })
        .collect()
}
