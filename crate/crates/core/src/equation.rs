//! The radial reduced-mass equation, its steady version, the nonlocal profile
//! equation, and the explicit solutions used as oracles.

use crate::error::Result;
use crate::radial::{cumulative_integral, RadialProfile};
use crate::steady::Dimension;

/// Φ'' from the reduced-mass equation
/// Φ'' + (d+1)/r Φ' − Φ − rΦ'/2 + 2dΦ² + 2rΦΦ' = 0.
/// With `drift = false` the −Φ − rΦ'/2 terms are dropped (steady equation).
#[inline]
pub fn phi_second(d: f64, r: f64, phi: f64, dphi: f64, drift: bool) -> f64 {
    let mut s = -(d + 1.0) / r * dphi - 2.0 * d * phi * phi - 2.0 * r * phi * dphi;
    if drift {
        s += phi + 0.5 * r * dphi;
    }
    s
}

/// Φ''' from differentiating the reduced-mass equation once.
#[inline]
pub fn phi_third(d: f64, r: f64, phi: f64, dphi: f64, ddphi: f64, drift: bool) -> f64 {
    let mut s = (d + 1.0) / (r * r) * dphi - (d + 1.0) / r * ddphi - 4.0 * d * phi * dphi
        - 2.0 * phi * dphi
        - 2.0 * r * dphi * dphi
        - 2.0 * r * phi * ddphi;
    if drift {
        s += 1.5 * dphi + 0.5 * r * ddphi;
    }
    s
}

/// Residual of the reduced-mass equation and the sum of its term magnitudes.
pub fn phi_residual(d: f64, r: f64, phi: f64, dphi: f64, ddphi: f64, drift: bool) -> (f64, f64) {
    let mut terms = vec![
        ddphi,
        (d + 1.0) / r * dphi,
        2.0 * d * phi * phi,
        2.0 * r * phi * dphi,
    ];
    if drift {
        terms.push(-phi);
        terms.push(-0.5 * r * dphi);
    }
    let res: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    (res, scale)
}

/// Residual of U'' + (d−1)/r U' − U − rU'/2 + U² + U'·M/r^{d−1} = 0 where
/// M(r) = ∫₀ʳ U s^{d−1} ds, with the sum of term magnitudes.
pub fn nonlocal_residual(d: f64, r: f64, u: f64, du: f64, ddu: f64, mass: f64) -> (f64, f64) {
    let terms = [
        ddu,
        (d - 1.0) / r * du,
        -u,
        -0.5 * r * du,
        u * u,
        du * mass / r.powf(d - 1.0),
    ];
    let res: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum();
    (res, scale)
}

/// Scaled residual |res| / Σ|terms| with a floor guarding identically zero inputs.
#[inline]
pub fn scaled(res: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        res.abs()
    } else {
        res.abs() / scale
    }
}

/// Max scaled nonlocal residual of U over its grid, with the mass computed by
/// quadrature.
pub fn max_nonlocal_residual(dim: Dimension, u: &RadialProfile, lo: f64, hi: f64) -> Result<f64> {
    let d = dim.d() as f64;
    let mass = cumulative_integral(u, dim.d() as i32 - 1)?;
    let mut worst: f64 = 0.0;
    for (i, &r) in u.nodes().iter().enumerate() {
        if r < lo || r > hi {
            continue;
        }
        let (res, sc) = nonlocal_residual(d, r, u.values[i], u.derivs[i], u.second_at(i), mass.values[i]);
        worst = worst.max(scaled(res, sc));
    }
    Ok(worst)
}

/// Max scaled reduced-mass residual of Φ over nodes in [lo, hi].
pub fn max_phi_residual(dim: Dimension, phi: &RadialProfile, lo: f64, hi: f64, drift: bool) -> f64 {
    let d = dim.d() as f64;
    let mut worst: f64 = 0.0;
    for (i, &r) in phi.nodes().iter().enumerate() {
        if r < lo || r > hi {
            continue;
        }
        let (res, sc) = phi_residual(d, r, phi.values[i], phi.derivs[i], phi.second_at(i), drift);
        worst = worst.max(scaled(res, sc));
    }
    worst
}

/// U = 2dΦ + 2rΦ' and its first two derivatives from Φ and three derivatives.
#[inline]
pub fn u_from_phi(d: f64, r: f64, p: [f64; 4]) -> (f64, f64, f64) {
    let u = 2.0 * d * p[0] + 2.0 * r * p[1];
    let du = (2.0 * d + 2.0) * p[1] + 2.0 * r * p[2];
    let ddu = (2.0 * d + 4.0) * p[2] + 2.0 * r * p[3];
    (u, du, ddu)
}

/// Explicit reduced-mass solutions, each returning (Φ, Φ', Φ'', Φ''').
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Explicit {
    /// Φ̄₀ = 0
    Zero,
    /// Φ̄₁ = 1/(2d), U ≡ 1
    Constant,
    /// Φ̄₂ = Φ* = 1/r², U = 2(d−2)/r²
    Singular,
    /// Φ̄₃ = 2/(2(d−2) + r²)
    Smooth,
}

impl Explicit {
    pub const ALL: [Explicit; 4] = [Explicit::Zero, Explicit::Constant, Explicit::Singular, Explicit::Smooth];

    pub fn phi(self, d: f64, r: f64) -> [f64; 4] {
        match self {
            Explicit::Zero => [0.0; 4],
            Explicit::Constant => [1.0 / (2.0 * d), 0.0, 0.0, 0.0],
            Explicit::Singular => phi_star(r),
            Explicit::Smooth => {
                let q = 2.0 * (d - 2.0) + r * r;
                [
                    2.0 / q,
                    -4.0 * r / (q * q),
                    -4.0 / (q * q) + 16.0 * r * r / q.powi(3),
                    48.0 * r / q.powi(3) - 96.0 * r.powi(3) / q.powi(4),
                ]
            }
        }
    }

    pub fn u(self, d: f64, r: f64) -> (f64, f64, f64) {
        u_from_phi(d, r, self.phi(d, r))
    }

    pub fn name(self) -> &'static str {
        match self {
            Explicit::Zero => "phi0",
            Explicit::Constant => "phi1",
            Explicit::Singular => "phi2",
            Explicit::Smooth => "phi3",
        }
    }
}

/// Φ* = 1/r² with three derivatives.
#[inline]
pub fn phi_star(r: f64) -> [f64; 4] {
    let r2 = r * r;
    [1.0 / r2, -2.0 / (r2 * r), 6.0 / (r2 * r2), -24.0 / (r2 * r2 * r)]
}

/// Coefficients A₁..A_K of the decaying exterior series Φ = Σ A_k r^{−2k}
/// with A₁ = 1 + ε.
pub fn exterior_series(d: f64, epsilon: f64, terms: usize) -> Vec<f64> {
    let mut a = vec![1.0 + epsilon];
    for k in 1..terms {
        let b: f64 = (0..k).map(|i| a[i] * a[k - 1 - i]).sum();
        let kf = k as f64;
        let next = -(2.0 * kf * (2.0 * kf - d) * a[k - 1] + (2.0 * d - 2.0 * kf - 2.0) * b) / kf;
        a.push(next);
    }
    a
}

/// Coefficients B_k = A_k − δ_{k1} of the same series written as a deviation
/// from Φ*, computed without forming 1 + ε.
pub fn exterior_deviation_series(d: f64, epsilon: f64, terms: usize) -> Vec<f64> {
    let mut b = vec![epsilon];
    for k in 1..terms {
        let quad: f64 = 2.0 * b[k - 1] + (0..k).map(|i| b[i] * b[k - 1 - i]).sum::<f64>();
        let kf = k as f64;
        b.push(-(2.0 * kf * (2.0 * kf - d) * b[k - 1] + (2.0 * d - 2.0 * kf - 2.0) * quad) / kf);
    }
    b
}

/// w'' for the deviation w = Φ − 1/r² of a reduced-mass solution.
#[inline]
pub fn deviation_second(d: f64, r: f64, w: f64, dw: f64) -> f64 {
    -(d + 3.0) / r * dw + 0.5 * r * dw + w - (4.0 * d - 4.0) / (r * r) * w - 2.0 * d * w * w - 2.0 * r * w * dw
}

/// Coefficients c₁..c_K of the linear exterior mode u₁ = Σ c_k r^{−2k}, c₁ = 1.
pub fn u1_series(d: f64, terms: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for k in 1..terms {
        let kf = k as f64;
        let prev = c[k - 1];
        c.push(-prev * (4.0 * kf * kf - 2.0 * kf * d + 4.0 * d - 4.0 * kf - 4.0) / kf);
    }
    c
}

/// Evaluate Σ c_k r^{−2k} and its derivative.
pub fn eval_inverse_even_series(c: &[f64], r: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut dv = 0.0;
    for (j, &ck) in c.iter().enumerate() {
        let k = (j + 1) as f64;
        let p = r.powf(-2.0 * k);
        v += ck * p;
        dv += -2.0 * k * ck * p / r;
    }
    (v, dv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviation_series_matches_full_series() {
        for d in 3..=9 {
            let (d, eps) = (d as f64, 0.37);
            let full = exterior_series(d, eps, 6);
            let dev = exterior_deviation_series(d, eps, 6);
            assert!((full[0] - 1.0 - dev[0]).abs() < 1e-15);
            for k in 1..6 {
                assert!((full[k] - dev[k]).abs() <= 1e-12 * full[k].abs().max(1.0), "d = {d}, k = {k}");
            }
        }
    }

    #[test]
    fn deviation_equation_consistent() {
        // w = Φ̄₃ − Φ* must satisfy the deviation equation
        let d = 5.0;
        for &r in &[0.3, 1.0, 4.0] {
            let p = Explicit::Smooth.phi(d, r);
            let s = phi_star(r);
            let (w, dw, ddw) = (p[0] - s[0], p[1] - s[1], p[2] - s[2]);
            assert!((deviation_second(d, r, w, dw) - ddw).abs() < 1e-10 * ddw.abs().max(1.0));
        }
    }

    #[test]
    fn exterior_series_reproduces_closed_forms() {
        // Φ̄₃ = 2/(2 + r²) = 2r⁻² − 4r⁻⁴ + 8r⁻⁶ − ... for d = 3
        let a = exterior_series(3.0, 1.0, 4);
        assert_eq!(a[..3], [2.0, -4.0, 8.0]);
        // Φ* has no corrections
        let a = exterior_series(3.0, 0.0, 5);
        assert!(a[1..].iter().all(|x| *x == 0.0));
        for d in 3..=9 {
            let d = d as f64;
            let a = exterior_series(d, 1.0, 6);
            let c = 2.0 * (d - 2.0);
            // 2/(c + r²) = Σ 2 (−c)^{k−1} r^{−2k}
            for (k, ak) in a.iter().enumerate() {
                let want = 2.0 * (-c).powi(k as i32);
                assert!((ak - want).abs() < 1e-9 * want.abs());
            }
        }
    }

    #[test]
    fn u1_series_leading_terms() {
        let c = u1_series(3.0, 3);
        assert_eq!(c, vec![1.0, -2.0, 4.0]);
        let c = u1_series(5.0, 2);
        assert_eq!(c[1], -6.0);
    }

    #[test]
    fn explicit_phi_residuals_vanish() {
        for d in 3..=9 {
            let d = d as f64;
            for e in Explicit::ALL {
                for r in [0.01, 0.3, 1.0, 4.0, 25.0] {
                    let p = e.phi(d, r);
                    let (res, sc) = phi_residual(d, r, p[0], p[1], p[2], true);
                    assert!(scaled(res, sc) < 1e-13, "{e:?} d={d} r={r}");
                }
            }
        }
    }
}
