//! Interior solutions on [0, r₀]: regular shooting from the central value a,
//! the correction Q₁ with Φ = λ^{-2}(Q̄ + λ⁴Q₁)(r/λ), and the fixed point
//! Q₁ = S(J[Q̄, λ]Q₁).

use serde::Serialize;

use crate::equation::{phi_residual, phi_second, scaled};
use crate::error::{Error, Result};
use crate::linear_ops::{node_exact_pair, resolvent_s, weighted_norm, InteriorBasis, NormSpec};
use crate::radial::{integrate_ivp, IvpSpec, RadialGrid, RadialProfile, Trajectory};
use crate::steady::{solve_steady_on, Dimension, SteadyPair, STEADY_R_MIN};

const SHOOT_TOL: f64 = 1e-12;
pub const INTERIOR_PER_DECADE: f64 = 100.0;

#[derive(Debug, Clone, Serialize)]
pub struct InteriorSolution {
    pub a: f64,
    pub lambda: f64,
    pub r0: f64,
    pub dim: Dimension,
    pub profile: RadialProfile,
    pub boundary: (f64, f64),
    pub q1_norm: Option<f64>,
}

/// Start radius 1e-6·min(1, 1/√a).
pub fn interior_r_min(a: f64) -> f64 {
    1e-6 * 1f64.min(1.0 / a.sqrt())
}

/// Leading-order scale λ = 1/√(2da).
pub fn lambda_of_a(dim: Dimension, a: f64) -> f64 {
    1.0 / (2.0 * dim.df() * a).sqrt()
}

pub fn a_of_lambda(dim: Dimension, lambda: f64) -> f64 {
    1.0 / (2.0 * dim.df() * lambda * lambda)
}

/// Central value matching the ansatz at the origin, a = λ^{-2}(Q̄(0) + λ⁴Q₁(0)).
pub fn a_of_lambda_corrected(dim: Dimension, lambda: f64, q1_origin: f64) -> f64 {
    (dim.a0() + lambda.powi(4) * q1_origin) / (lambda * lambda)
}

/// Second-order coefficient b = a(1 − 2da)/(2(d+2)) of Φ = a + br² + ...
pub fn series_b(dim: Dimension, a: f64) -> f64 {
    let d = dim.df();
    a * (1.0 - 2.0 * d * a) / (2.0 * (d + 2.0))
}

fn check(a: f64, r0: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Parameter(format!("central value a = {a} must be positive")));
    }
    if !(r0 > 0.0 && r0 < 1.0) {
        return Err(Error::Parameter(format!("matching radius r0 = {r0} must lie in (0, 1)")));
    }
    Ok(())
}

fn shoot(dim: Dimension, a: f64, r0: f64, stops: &[f64]) -> Result<Trajectory<2>> {
    let d = dim.df();
    let rm = interior_r_min(a);
    let b = series_b(dim, a);
    let rhs = move |r: f64, y: &[f64; 2]| [y[1], phi_second(d, r, y[0], y[1], true)];
    let mut spec = IvpSpec::new(&rhs, rm, [a + b * rm * rm, 2.0 * b * rm], r0, SHOOT_TOL);
    spec.atol = a * 1e-20;
    spec.stops = stops;
    integrate_ivp(&spec)
}

/// (Φ_int(r₀), Φ_int'(r₀)) without storing a profile.
pub fn interior_boundary(dim: Dimension, a: f64, r0: f64) -> Result<(f64, f64)> {
    check(a, r0)?;
    let (_, y) = shoot(dim, a, r0, &[])?.last();
    Ok((y[0], y[1]))
}

pub fn interior_grid(a: f64, r0: f64) -> Result<RadialGrid> {
    RadialGrid::per_decade(interior_r_min(a), r0, INTERIOR_PER_DECADE)
}

/// Forward integration from r_min with series data; profile on `interior_grid`.
pub fn shoot_interior(a: f64, r0: f64, dim: Dimension) -> Result<InteriorSolution> {
    check(a, r0)?;
    let grid = interior_grid(a, r0)?;
    let traj = shoot(dim, a, r0, &grid.nodes)?;
    let profile = traj.profile(&grid, 0, 1)?;
    let boundary = (*profile.values.last().unwrap(), *profile.derivs.last().unwrap());
    Ok(InteriorSolution { a, lambda: lambda_of_a(dim, a), r0, dim, profile, boundary, q1_norm: None })
}

/// max |Σ terms| / Σ|terms| of the reduced-mass equation on the profile.
pub fn interior_residual(sol: &InteriorSolution) -> f64 {
    let d = sol.dim.df();
    let p = &sol.profile;
    p.nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let (res, sc) = phi_residual(d, r, p.values[i], p.derivs[i], p.second_at(i), true);
            scaled(res, sc)
        })
        .fold(0.0, f64::max)
}

/// Q₁(z) = (λ²Φ(λz) − Q̄(z))/λ⁴ on z ∈ [10 r_min/λ, r₀/λ] with its Y_{r₀/λ} norm.
/// Q̄ is re-solved on the extraction nodes.
pub fn extract_q1(sol: &InteriorSolution, steady: &SteadyPair) -> Result<(RadialProfile, f64)> {
    extract_q1_at(sol, steady, sol.lambda)
}

/// As `extract_q1` with an explicitly chosen scale λ.
pub fn extract_q1_at(sol: &InteriorSolution, steady: &SteadyPair, lam: f64) -> Result<(RadialProfile, f64)> {
    if steady.dim != sol.dim {
        return Err(Error::Parameter("steady pair and interior solution differ in dimension".into()));
    }
    let l4 = lam.powi(4);
    if l4 < 1e-14 {
        return Err(Error::Precision(format!("lambda^4 = {l4:e} is below 1e-14; Q1 is dominated by cancellation")));
    }
    let z_min = 10.0 * interior_r_min(sol.a) / lam;
    let idx: Vec<usize> = (0..sol.profile.grid.len()).filter(|&i| sol.profile.grid.nodes[i] / lam >= z_min * (1.0 - 1e-12)).collect();
    let z: Vec<f64> = idx.iter().map(|&i| sol.profile.grid.nodes[i] / lam).collect();
    if z[0] < STEADY_R_MIN {
        return Err(Error::Domain(format!("Q1 extraction starts at z = {:e} below the steady start", z[0])));
    }
    let zg = RadialGrid::from_nodes(z.clone())?;
    let pair = if z[0] > STEADY_R_MIN * (1.0 + 1e-12) {
        node_exact_pair(steady, &zg, 1e-12)?
    } else {
        solve_steady_on(steady.dim, &zg, 1e-12)?
    };
    let mut v = Vec::with_capacity(z.len());
    let mut dv = Vec::with_capacity(z.len());
    for (k, &i) in idx.iter().enumerate() {
        v.push((lam * lam * sol.profile.values[i] - pair.qbar.values[k]) / l4);
        dv.push((lam.powi(3) * sol.profile.derivs[i] - pair.qbar.derivs[k]) / l4);
    }
    let q1 = RadialProfile::new(zg, v, dv)?;
    let y = weighted_norm(NormSpec::Y { r1: sol.r0 / lam }, sol.dim, &q1)?;
    Ok((q1, y))
}

#[derive(Debug, Clone, Serialize)]
pub struct InteriorPicardReport {
    pub increments: Vec<f64>,
    pub ratios: Vec<f64>,
    pub y_norm: f64,
    pub iterations: usize,
}

pub const INTERIOR_PICARD_PER_DECADE: f64 = 300.0;

/// Grid [1e-6, r₀/λ] for the fixed point.
pub fn picard_grid(lambda: f64, r0: f64) -> Result<RadialGrid> {
    RadialGrid::per_decade(STEADY_R_MIN, r0 / lambda, INTERIOR_PICARD_PER_DECADE)
}

/// J[Q̄, λ]Q₁ = −ΛQ̄/(2λ²) − (λ²/2)ΛQ₁ + λ⁴(2dQ₁² + z(Q₁²)'), with `lambda4`
/// scaling the quadratic terms (1 for the full operator, 0 to drop them).
fn source(basis: &InteriorBasis, lam: f64, q1: &RadialProfile, lambda4: f64) -> Result<RadialProfile> {
    let d = basis.dim.df();
    let x = q1.nodes();
    let (l2, l4) = (lam * lam, lam.powi(4) * lambda4);
    let n = x.len();
    let mut v = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    for i in 0..n {
        let z = x[i];
        let (q, dq, ddq) = (q1.values[i], q1.derivs[i], q1.second_at(i));
        let (lq, dlq) = (basis.lq.values[i], basis.lq.derivs[i]);
        let lam_q = 2.0 * q + z * dq;
        let dlam_q = 3.0 * dq + z * ddq;
        let nl = 2.0 * d * q * q + 2.0 * z * q * dq;
        let dnl = 4.0 * d * q * dq + 2.0 * q * dq + 2.0 * z * (dq * dq + q * ddq);
        v.push(-lq / (2.0 * l2) - 0.5 * l2 * lam_q + l4 * nl);
        dv.push(-dlq / (2.0 * l2) - 0.5 * l2 * dlam_q + l4 * dnl);
    }
    RadialProfile::new(q1.grid.clone(), v, dv)
}

pub fn picard_interior(lambda: f64, r0: f64, steady: &SteadyPair) -> Result<(RadialProfile, InteriorPicardReport)> {
    let grid = picard_grid(lambda, r0)?;
    let basis = InteriorBasis::new(steady, &grid, 1e-12)?;
    picard_interior_with(lambda, r0, &basis, 1.0)
}

/// As `picard_interior` on a prepared basis; `nonlinear` multiplies the λ⁴ terms.
pub fn picard_interior_with(
    lambda: f64,
    r0: f64,
    basis: &InteriorBasis,
    nonlinear: f64,
) -> Result<(RadialProfile, InteriorPicardReport)> {
    if !(lambda > 0.0) || r0 >= 1.0 {
        return Err(Error::Parameter(format!("need lambda > 0 and r0 < 1 (got {lambda}, {r0})")));
    }
    let r1 = r0 / lambda;
    let norm = |w: &RadialProfile| weighted_norm(NormSpec::Y { r1 }, basis.dim, w);
    let mut q = RadialProfile::zeros(basis.grid());
    let mut increments = Vec::new();
    let mut ratios = Vec::new();
    let mut bad = 0;
    for _ in 0..crate::exterior::PICARD_MAX_ITER {
        let next = resolvent_s(basis, &source(basis, lambda, &q, nonlinear)?)?;
        let diff = RadialProfile::new(
            next.grid.clone(),
            next.values.iter().zip(&q.values).map(|(a, b)| a - b).collect(),
            next.derivs.iter().zip(&q.derivs).map(|(a, b)| a - b).collect(),
        )?;
        let inc = norm(&diff)?;
        if let Some(&prev) = increments.last() {
            let ratio: f64 = if prev > 0.0 { inc / prev } else { 0.0 };
            ratios.push(ratio);
            bad = if ratio >= 1.0 { bad + 1 } else { 0 };
            if bad >= 3 {
                return Err(Error::Convergence(format!("interior fixed point not contracting (ratio {ratio:.3})")));
            }
        }
        increments.push(inc);
        q = next;
        if inc < crate::exterior::PICARD_TOL * norm(&q)?.max(1.0) {
            let y_norm = norm(&q)?;
            let iterations = increments.len();
            return Ok((q, InteriorPicardReport { increments, ratios, y_norm, iterations }));
        }
    }
    Err(Error::Convergence("interior fixed point did not converge in 50 iterations".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady::solve_steady;

    fn d3() -> Dimension {
        Dimension::new(3).unwrap()
    }

    #[test]
    fn series_coefficient() {
        assert!((series_b(d3(), 1.0) + 0.5).abs() < 1e-15);
        let sol = shoot_interior(2.0, 0.05, d3()).unwrap();
        let rm = sol.profile.r_lo();
        assert!((sol.profile.derivs[0] / rm / (2.0 * series_b(d3(), 2.0)) - 1.0).abs() < 1e-2);
        assert!(interior_residual(&sol) < 1e-7);
    }

    #[test]
    fn unit_scale_tracks_steady_state() {
        let dim = d3();
        let pair = solve_steady(dim, 100.0, 1e-12).unwrap();
        let sol = shoot_interior(dim.a0(), 0.05, dim).unwrap();
        assert!((sol.lambda - 1.0).abs() < 1e-15);
        let q = pair.qbar_at(0.05).unwrap()[0];
        assert!((sol.boundary.0 - q).abs() < 1e-2 * q);
    }

    #[test]
    fn large_central_value_is_rescaled_steady() {
        let dim = d3();
        let pair = solve_steady(dim, 100.0, 1e-12).unwrap();
        let sol = shoot_interior(1e4, 0.05, dim).unwrap();
        let lam = sol.lambda;
        for &z in &[0.1, 1.0, 2.0, 5.0] {
            let v = sol.profile.value(lam * z).unwrap() * lam * lam;
            let q = pair.qbar_at(z).unwrap()[0];
            assert!((v - q).abs() < 0.02 * q.abs(), "z = {z}: {v} vs {q}");
        }
        let (q1, y) = extract_q1(&sol, &pair).unwrap();
        assert!(y.is_finite() && q1.grid.len() > 10);
    }

    #[test]
    fn tiny_lambda_is_precision_error() {
        let dim = d3();
        let pair = solve_steady(dim, 100.0, 1e-12).unwrap();
        let sol = shoot_interior(1e7, 0.05, dim).unwrap();
        assert!(matches!(extract_q1(&sol, &pair), Err(Error::Precision(_))));
    }
}
