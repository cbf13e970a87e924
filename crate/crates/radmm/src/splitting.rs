//! Centralized operator-splitting primitives.
//!
//! The pieces assembled here — proximal and reflective operators, the
//! α-averaged Krasnosel'skii-Mann step, and the relaxed Peaceman-Rachford
//! solver for `min f + g` — are both a standalone solver and the ground truth
//! the distributed algorithms in [`crate::consensus`] are verified against.
//!
//! A note on floating point: every averaged update in this crate is computed
//! in *increment form*, `base + alpha * (target - base)`, never as the
//! algebraically equal `(1 - alpha) * base + alpha * target`. The increment
//! form maps exact fixed points to themselves exactly (`target == base` makes
//! the increment a true zero), which the averaged form does not, and several
//! exact-identity guarantees in the test suite rely on that.

use crate::error::{Error, Result};

/// A closed proper convex function exposed through its proximal map.
///
/// `prox(lambda, v)` must return `argmin_x { f(x) + 1/(2*lambda) * ||x - v||^2 }`.
/// Implementations ship closed-form maps (see [`crate::costs::QuadraticCost`]);
/// no inner iterative minimization happens anywhere in the solver path.
pub trait ProxFunction {
    /// Ambient dimension of the function's domain.
    fn dim(&self) -> usize;

    /// The proximal map at penalty `lambda > 0`.
    fn prox(&self, lambda: f64, v: &[f64]) -> Result<Vec<f64>>;

    /// Optional function-value evaluation (used only for reporting).
    fn value(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// The zero function; its prox is the identity for every penalty.
#[derive(Debug, Clone)]
pub struct ZeroFunction {
    pub dim: usize,
}

impl ProxFunction for ZeroFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn prox(&self, _lambda: f64, v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.to_vec())
    }

    fn value(&self, _x: &[f64]) -> Option<f64> {
        Some(0.0)
    }
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::non_finite(format!("argument `{name}`")))
    }
}

/// Evaluate `prox_{lambda f}(v)` with domain checks.
pub fn prox(f: &dyn ProxFunction, lambda: f64, v: &[f64]) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", format!("must be finite and > 0, got {lambda}")));
    }
    check_finite("v", v)?;
    if v.len() != f.dim() {
        return Err(Error::dim(format!("prox input has length {}, function dimension is {}", v.len(), f.dim())));
    }
    f.prox(lambda, v)
}

/// Evaluate the reflective operator `refl_{lambda f}(v) = 2 prox_{lambda f}(v) - v`.
pub fn reflect(f: &dyn ProxFunction, lambda: f64, v: &[f64]) -> Result<Vec<f64>> {
    let p = prox(f, lambda, v)?;
    Ok(p.iter().zip(v).map(|(pi, vi)| 2.0 * pi - vi).collect())
}

/// One Krasnosel'skii-Mann step `x <- x + alpha * (T(x) - x)` for an operator `T`.
///
/// The map has the same fixed points as `T` for every `alpha` in `(0, 1]`, and
/// the increment form preserves them exactly in floating point.
pub fn km_step<T>(t: T, alpha: f64, x: &[f64]) -> Result<Vec<f64>>
where
    T: Fn(&[f64]) -> Vec<f64>,
{
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    let tx = t(x);
    if tx.len() != x.len() {
        return Err(Error::dim(format!("operator returned length {}, expected {}", tx.len(), x.len())));
    }
    Ok(x.iter().zip(&tx).map(|(xi, ti)| xi + alpha * (ti - xi)).collect())
}

/// Parameters of the relaxed Peaceman-Rachford iteration.
#[derive(Debug, Clone, Copy)]
pub struct SplittingParams {
    /// Averaging coefficient; `1/2` is Douglas-Rachford (classical ADMM after
    /// dualization), `1` is pure Peaceman-Rachford.
    pub alpha: f64,
    /// Penalty / augmented-Lagrangian coefficient, strictly positive.
    pub rho: f64,
    /// Iteration budget.
    pub max_iters: usize,
    /// Stopping tolerance on the max-norm of the z-step.
    pub tol: f64,
}

impl SplittingParams {
    pub fn new(alpha: f64, rho: f64, max_iters: usize, tol: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1], got {alpha}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::param("rho", format!("must be finite and > 0, got {rho}")));
        }
        if max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::param("tol", format!("must be finite and > 0, got {tol}")));
        }
        Ok(SplittingParams { alpha, rho, max_iters, tol })
    }

    /// Convergence is guaranteed for `alpha < 1`; `alpha = 1` is accepted but
    /// flagged so callers can surface it in run metadata.
    pub fn guaranteed_region(&self) -> bool {
        self.alpha < 1.0
    }
}

/// Iterate snapshot of the relaxed Peaceman-Rachford recursion.
#[derive(Debug, Clone)]
pub struct RprsState {
    /// Auxiliary iterate `z` (the convergent object of the iteration).
    pub z: Vec<f64>,
    /// First half-step `psi = prox_{rho g}(z)`.
    pub psi: Vec<f64>,
    /// Second half-step `xi = prox_{rho f}(2 psi - z)`.
    pub xi: Vec<f64>,
    /// Primal readout `x = prox_{rho g}(z)`.
    pub x: Vec<f64>,
}

/// Termination status of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveOutcome {
    /// The stopping rule fired after the recorded number of iterations.
    Converged { iters: usize },
    /// The iteration budget ran out before the stopping rule fired.
    Inconclusive,
}

/// Result of [`rprs_solve`].
#[derive(Debug, Clone)]
pub struct RprsResult {
    /// Primal solution readout `prox_{rho g}(z_final)`.
    pub x: Vec<f64>,
    /// Final iterate snapshot.
    pub state: RprsState,
    pub outcome: SolveOutcome,
    /// Full z-iterate history, `z(0)` through the final iterate.
    pub z_trace: Vec<Vec<f64>>,
    /// False when the run used `alpha = 1` (outside the guaranteed region).
    pub guaranteed_region: bool,
}

/// Solve `min_x f(x) + g(x)` by the relaxed Peaceman-Rachford recursion
///
/// ```text
///   psi(k)  = prox_{rho g}(z(k))
///   xi(k)   = prox_{rho f}(2 psi(k) - z(k))
///   z(k+1)  = z(k) + 2 alpha (xi(k) - psi(k))
/// ```
///
/// stopping when `||z(k+1) - z(k)||_inf < tol`, with primal readout
/// `x = prox_{rho g}(z)`.
pub fn rprs_solve(
    f: &dyn ProxFunction,
    g: &dyn ProxFunction,
    params: &SplittingParams,
    z0: &[f64],
) -> Result<RprsResult> {
    SplittingParams::new(params.alpha, params.rho, params.max_iters, params.tol)?;
    check_finite("z0", z0)?;
    if f.dim() != g.dim() || z0.len() != f.dim() {
        return Err(Error::dim(format!(
            "f dim {}, g dim {}, z0 length {} must agree",
            f.dim(),
            g.dim(),
            z0.len()
        )));
    }
    let two_alpha = 2.0 * params.alpha;
    let mut z = z0.to_vec();
    let mut z_trace = vec![z.clone()];
    let mut outcome = SolveOutcome::Inconclusive;
    for k in 0..params.max_iters {
        let psi = prox(g, params.rho, &z)?;
        let mid: Vec<f64> = psi.iter().zip(&z).map(|(p, zi)| 2.0 * p - zi).collect();
        let xi = prox(f, params.rho, &mid)?;
        let mut dz_inf = 0.0_f64;
        for i in 0..z.len() {
            let dz = two_alpha * (xi[i] - psi[i]);
            z[i] += dz;
            dz_inf = dz_inf.max(dz.abs());
        }
        z_trace.push(z.clone());
        if dz_inf < params.tol {
            outcome = SolveOutcome::Converged { iters: k + 1 };
            break;
        }
    }
    let psi = prox(g, params.rho, &z)?;
    let mid: Vec<f64> = psi.iter().zip(&z).map(|(p, zi)| 2.0 * p - zi).collect();
    let xi = prox(f, params.rho, &mid)?;
    Ok(RprsResult {
        x: psi.clone(),
        state: RprsState { z, psi: psi.clone(), xi, x: psi },
        outcome,
        z_trace,
        guaranteed_region: params.guaranteed_region(),
    })
}
