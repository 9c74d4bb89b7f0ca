//! Pointwise cost, its proximal map, and the dual ball projection.

use crate::discretize::ConstraintSystem;

/// `|a|^p / b^(p-1)` with the extended-value cases: `0` at `a = b = 0`,
/// `+inf` for `b < 0` or for `b = 0, a != 0`.
pub fn helper_h(a: f64, b: f64, p: f64) -> f64 {
    if b > 0.0 {
        a.abs().powf(p) / b.powf(p - 1.0)
    } else if b == 0.0 && a == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ProxError {
    #[error("prox scale must be positive")]
    NonPositiveScale,
    #[error("exponent must be at least 1")]
    BadExponent,
}

/// Minimizer of `½(ρ-ρ̃)² + ½(m-m̃)² + κ h(m, ρ, p)`.
pub fn prox_kinetic(rho: f64, m: f64, kappa: f64, p: f64) -> Result<(f64, f64), ProxError> {
    if !(kappa > 0.0) {
        return Err(ProxError::NonPositiveScale);
    }
    if !(p >= 1.0) {
        return Err(ProxError::BadExponent);
    }
    Ok(if p == 2.0 {
        prox_quadratic(rho, m, kappa)
    } else {
        prox_general(rho, m, kappa, p)
    })
}

/// The `p = 2` case without argument checks.
#[inline]
pub(crate) fn prox_quadratic(rho: f64, m: f64, kappa: f64) -> (f64, f64) {
    // with y = ρ + 2κ the stationarity condition is y³ - c y² - q = 0
    let c = rho + 2.0 * kappa;
    let q = kappa * m * m;
    let y = largest_root(c, q);
    let r = y - 2.0 * kappa;
    if r <= 0.0 {
        (0.0, 0.0)
    } else {
        (r, m * r / y)
    }
}

/// Largest real root of `y³ - c y² - q` for `q ≥ 0`.
fn largest_root(c: f64, q: f64) -> f64 {
    if q == 0.0 {
        return c.max(0.0);
    }
    let shift = c / 3.0;
    // depressed cubic z³ + P z + Q with y = z + c/3
    let pp = -c * c / 3.0;
    let qq = -2.0 * c * c * c / 27.0 - q;
    let disc = (qq / 2.0).powi(2) + (pp / 3.0).powi(3);
    let z = if disc >= 0.0 {
        let sq = disc.sqrt();
        // pick the larger-magnitude combination to avoid cancellation
        let u = (-qq / 2.0 + if qq <= 0.0 { sq } else { -sq }).cbrt();
        if u == 0.0 {
            0.0
        } else {
            u - pp / (3.0 * u)
        }
    } else {
        let r = (-pp / 3.0).sqrt();
        let arg = (3.0 * qq / (2.0 * pp) / r).clamp(-1.0, 1.0);
        2.0 * r * (arg.acos() / 3.0).cos()
    };
    let y = z + shift;
    let f = |y: f64| y * y * (y - c) - q;
    let df = 3.0 * y * y - 2.0 * c * y;
    if df > 0.0 {
        let polished = y - f(y) / df;
        if f(polished).abs() <= f(y).abs() {
            return polished;
        }
    }
    y
}

const BISECT_STEPS: usize = 200;

fn bisect(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..BISECT_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Nested bisection for `p != 2`. Experimental.
fn prox_general(rho: f64, m: f64, kappa: f64, p: f64) -> (f64, f64) {
    let b = m.abs();
    if p == 1.0 {
        let r = rho.max(0.0);
        return if r > 0.0 {
            (r, m.signum() * (b - kappa).max(0.0))
        } else {
            (0.0, 0.0)
        };
    }
    // optimal |m| for fixed ρ: |m| - b + κ p |m|^(p-1) / ρ^(p-1) = 0
    let inner = |r: f64| -> f64 {
        if b == 0.0 {
            return 0.0;
        }
        let s = kappa * p / r.powf(p - 1.0);
        bisect(0.0, b, |x| x - b + s * x.powf(p - 1.0))
    };
    // derivative of the reduced convex function of ρ
    let g = |r: f64| -> f64 {
        let x = inner(r);
        r - rho - kappa * (p - 1.0) * (x / r).powf(p)
    };
    let limit = -rho - kappa * (p - 1.0) * (b / (kappa * p)).powf(p / (p - 1.0));
    if limit >= 0.0 {
        return (0.0, 0.0);
    }
    let mut hi = rho.max(0.0) + kappa.powf(1.0 / p) * b + 1.0;
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    let r = bisect(0.0, hi, g);
    (r, m.signum() * inner(r))
}

/// `b + (y - b) min(1, δ / ‖y - b‖)`, in place.
pub fn project_ball(y: &mut [f64], center: &[f64], radius: f64) {
    let dist = y
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dist <= radius {
        return;
    }
    let scale = radius / dist;
    for (a, b) in y.iter_mut().zip(center) {
        *a = b + (*a - b) * scale;
    }
}

/// `φ - σ Π(φ / σ)`, blockwise over the constraint balls, in place.
pub fn prox_dual(phi: &mut [f64], sigma: f64, system: &ConstraintSystem) {
    let b = system.rhs();
    let mut scratch = Vec::new();
    for block in system.blocks() {
        let r = block.rows.clone();
        scratch.clear();
        scratch.extend(phi[r.clone()].iter().map(|v| v / sigma));
        project_ball(&mut scratch, &b[r.clone()], block.delta);
        for (v, s) in phi[r].iter_mut().zip(&scratch) {
            *v -= sigma * s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
        (a.0 - b.0).abs() < tol && (a.1 - b.1).abs() < tol
    }

    #[test]
    fn helper_cases() {
        assert_eq!(helper_h(0.0, 0.0, 2.0), 0.0);
        assert_eq!(helper_h(1.0, 1.0, 2.0), 1.0);
        assert_eq!(helper_h(2.0, 1.0, 3.0), 8.0);
        assert_eq!(helper_h(1.0, 0.0, 2.0), f64::INFINITY);
        assert_eq!(helper_h(1.0, -0.5, 2.0), f64::INFINITY);
        assert_eq!(helper_h(0.0, -0.5, 2.0), f64::INFINITY);
    }

    #[test]
    fn prox_examples() {
        for kappa in [0.01, 0.5, 3.0] {
            assert!(close(prox_kinetic(1.0, 0.0, kappa, 2.0).unwrap(), (1.0, 0.0), 1e-14));
        }
        assert_eq!(prox_kinetic(-1.0, 0.0, 0.5, 2.0).unwrap(), (0.0, 0.0));
        let (r, m) = prox_kinetic(1.0, 1.0, 0.5, 2.0).unwrap();
        assert!(((r - 1.0) * (r + 1.0).powi(2) - 0.5).abs() < 1e-13);
        assert!((m - r / (r + 1.0)).abs() < 1e-14);
        assert!((r - 1.112).abs() < 1e-3 && (m - 0.527).abs() < 1e-3);
        assert_eq!(prox_kinetic(1.0, 1.0, 0.0, 2.0), Err(ProxError::NonPositiveScale));
    }

    #[test]
    fn general_path_agrees_at_two() {
        for &(a, b, k) in &[(1.0, 1.0, 0.5), (0.3, -2.0, 0.1), (-0.2, 0.4, 0.05), (2.0, 5.0, 1.5)] {
            let exact = prox_quadratic(a, b, k);
            let general = prox_general(a, b, k, 2.0);
            assert!(close(exact, general, 1e-9), "{exact:?} {general:?}");
        }
    }

    #[test]
    fn project_ball_examples() {
        let mut y = [3.0, 4.0];
        project_ball(&mut y, &[0.0, 0.0], 1.0);
        assert!((y[0] - 0.6).abs() < 1e-15 && (y[1] - 0.8).abs() < 1e-15);
        let mut y = [1.0, 2.0];
        project_ball(&mut y, &[1.0, 2.0], 0.0);
        assert_eq!(y, [1.0, 2.0]);
        let mut y = [2.0, 0.0];
        project_ball(&mut y, &[0.0, 0.0], 1.0);
        assert_eq!(y, [1.0, 0.0]);
    }
}
