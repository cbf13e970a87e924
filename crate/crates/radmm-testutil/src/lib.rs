//! Independent numerical oracles for cross-checking the `radmm` library.
//!
//! Everything here is deliberately implemented from scratch with *different*
//! algorithms than the library under test (derivative-free search and
//! finite-difference descent instead of closed-form solves, Gauss-Jordan
//! elimination instead of Cholesky), so agreement between the two is a
//! meaningful check rather than the same code evaluated twice.
//!
//! This crate must not depend on `radmm`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
///
/// With 200 iterations the bracket shrinks by a factor of about 1e-42, far
/// below f64 resolution, so the result is limited only by the flatness of `f`
/// near its minimum (about square-root of machine epsilon for smooth strictly
/// convex functions).
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    assert!(lo < hi, "golden_section needs a non-empty bracket");
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..iters {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Polish an approximate minimizer of a smooth `f` by one step of parabolic
/// interpolation through `x0 - delta`, `x0`, `x0 + delta`.
///
/// Near a strict minimum the golden-section result is only accurate to about
/// sqrt(machine epsilon) because the objective is flat there; fitting the
/// local parabola recovers the vertex to roughly `delta * eps / (c delta^2)`
/// instead, which for `delta ~ 1e-3` is well below 1e-10. Exact (up to
/// rounding) for quadratics.
pub fn refine_parabolic<F: Fn(f64) -> f64>(f: F, x0: f64, delta: f64) -> f64 {
    let (fm, f0, fp) = (f(x0 - delta), f(x0), f(x0 + delta));
    let denom = fp - 2.0 * f0 + fm;
    if denom <= 0.0 {
        return x0; // not locally convex at this scale; keep the input
    }
    x0 - 0.5 * delta * (fp - fm) / denom
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Minimize a smooth convex `f` by gradient descent with finite-difference
/// gradients and Armijo backtracking. Good to roughly 1e-9 in argument for
/// well-conditioned problems; intended as an oracle, not a production solver.
pub fn minimize_fd<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], max_iters: usize) -> Vec<f64> {
    let h = 1e-6;
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    for _ in 0..max_iters {
        let g = fd_gradient(&f, &x, h);
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < 1e-11 {
            break;
        }
        let mut t = 1.0;
        loop {
            let xt: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - t * gi).collect();
            let ft = f(&xt);
            if ft <= fx - 0.5 * t * gnorm2 || t < 1e-18 {
                x = xt;
                fx = ft;
                break;
            }
            t *= 0.5;
        }
    }
    x
}

/// Solve `a x = rhs` (row-major `n x n`) by Gauss-Jordan elimination with
/// partial pivoting. Returns `None` if the matrix is numerically singular.
pub fn gauss_solve(a: &[f64], n: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(rhs.len(), n);
    let mut m = a.to_vec();
    let mut x = rhs.to_vec();
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&r1, &r2| {
            m[r1 * n + col]
                .abs()
                .total_cmp(&m[r2 * n + col].abs())
        })?;
        if m[pivot_row * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            x.swap(col, pivot_row);
        }
        let pivot = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= pivot;
        }
        x[col] /= pivot;
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = m[row * n + col];
            if factor == 0.0 {
                continue;
            }
            for k in 0..n {
                m[row * n + k] -= factor * m[col * n + k];
            }
            x[row] -= factor * x[col];
        }
    }
    Some(x)
}

/// Deterministic RNG for test-instance generation, unrelated to the
/// generator family used inside the library under test.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in `[lo, hi)` from a test RNG.
pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_quadratic_minimum() {
        // min of (x - 3)^2 + 1; the bare search is flat-bottom limited to
        // about sqrt(machine epsilon).
        let m = golden_section(|x| (x - 3.0) * (x - 3.0) + 1.0, -100.0, 100.0, 200);
        assert!((m - 3.0).abs() < 1e-6, "got {m}");
    }

    #[test]
    fn golden_section_handles_asymmetric_bracket() {
        let m = golden_section(|x| x * x + 2.0 * x, -50.0, 3.0, 200);
        assert!((m + 1.0).abs() < 1e-6, "got {m}");
    }

    #[test]
    fn parabolic_refinement_sharpens_a_quadratic_minimum() {
        let f = |x: f64| 1.5 * (x - 0.7).powi(2) + 2.0;
        let coarse = golden_section(f, -100.0, 100.0, 200);
        let fine = refine_parabolic(f, coarse, 1e-3);
        assert!((fine - 0.7).abs() < 1e-11, "got {fine}");
        // A refinement from a deliberately bad start still lands on the
        // vertex because the fit is exact for quadratics.
        let from_far = refine_parabolic(f, 0.5, 1e-3);
        assert!((from_far - 0.7).abs() < 1e-9, "got {from_far}");
    }

    #[test]
    fn minimize_fd_recovers_separable_quadratic() {
        // min of (x0 - 1)^2 + 2 (x1 + 2)^2
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 2.0).powi(2);
        let x = minimize_fd(f, &[10.0, -7.0], 20_000);
        assert!((x[0] - 1.0).abs() < 1e-6, "got {x:?}");
        assert!((x[1] + 2.0).abs() < 1e-6, "got {x:?}");
    }

    #[test]
    fn minimize_fd_recovers_coupled_quadratic() {
        // 1/2 x^T Q x + b^T x with Q = [[2,1],[1,3]], b = (1, -1); solution of Q x = -b.
        let f = |x: &[f64]| {
            0.5 * (2.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 3.0 * x[1] * x[1]) + x[0] - x[1]
        };
        let x = minimize_fd(f, &[0.0, 0.0], 20_000);
        let expect = gauss_solve(&[2.0, 1.0, 1.0, 3.0], 2, &[-1.0, 1.0]).unwrap();
        assert!((x[0] - expect[0]).abs() < 1e-6, "got {x:?} want {expect:?}");
        assert!((x[1] - expect[1]).abs() < 1e-6, "got {x:?} want {expect:?}");
    }

    #[test]
    fn gauss_solve_round_trips_random_systems() {
        let mut rng = seeded_rng(7);
        for _ in 0..50 {
            let n = 1 + (rng.gen::<u64>() % 4) as usize;
            let mut a = vec![0.0; n * n];
            for v in a.iter_mut() {
                *v = uniform(&mut rng, -2.0, 2.0);
            }
            // Diagonal dominance keeps the instance comfortably nonsingular.
            for i in 0..n {
                a[i * n + i] += 4.0;
            }
            let xs: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -3.0, 3.0)).collect();
            let rhs: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| a[i * n + j] * xs[j]).sum())
                .collect();
            let sol = gauss_solve(&a, n, &rhs).expect("nonsingular");
            for (got, want) in sol.iter().zip(&xs) {
                assert!((got - want).abs() < 1e-9, "got {got} want {want}");
            }
        }
    }

    #[test]
    fn gauss_solve_rejects_singular() {
        assert!(gauss_solve(&[1.0, 2.0, 2.0, 4.0], 2, &[1.0, 2.0]).is_none());
    }

    #[test]
    fn seeded_rng_is_deterministic() {
        let a: Vec<u64> = {
            let mut r = seeded_rng(99);
            (0..5).map(|_| r.gen()).collect()
        };
        let b: Vec<u64> = {
            let mut r = seeded_rng(99);
            (0..5).map(|_| r.gen()).collect()
        };
        assert_eq!(a, b);
    }
}
