//! Exterior solutions Φ = Φ* + εu₁ + εw on [r₀, ∞): nonlinear backward
//! shooting from the decaying series, and the fixed point w = ετ(G) as a
//! second construction.

use serde::Serialize;

use crate::equation::{deviation_second, eval_inverse_even_series, exterior_deviation_series, exterior_series, phi_residual, phi_star, scaled};
use crate::error::{Error, Result};
use crate::linear_ops::{resolvent_tau, tau_grid, weighted_norm, ExteriorBasis, NormSpec};
use crate::radial::{integrate_ivp, integrate_on_steps, IvpSpec, RadialGrid, RadialProfile};
use crate::steady::Dimension;

pub const EXTERIOR_R: f64 = 30.0;
const SERIES_TERMS: usize = 5;
const SHOOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct PicardReport {
    pub increments: Vec<f64>,
    pub ratios: Vec<f64>,
    pub w_norm: f64,
    /// ‖w‖_X / (|ε| r₀^{-1/2})
    pub constant: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExteriorSolution {
    pub epsilon: f64,
    pub r0: f64,
    pub dim: Dimension,
    pub profile: RadialProfile,
    pub boundary: (f64, f64),
    pub picard_report: Option<PicardReport>,
}

fn check_args(eps: f64, r0: f64, r_max: f64) -> Result<()> {
    if !(r0 > 0.0 && r0 < 1.0) {
        return Err(Error::Parameter(format!("matching radius r0 = {r0} must lie in (0, 1)")));
    }
    if r_max < 30.0 {
        return Err(Error::Parameter(format!("exterior seed radius {r_max} must be at least 30")));
    }
    if !eps.is_finite() {
        return Err(Error::Parameter("epsilon must be finite".into()));
    }
    Ok(())
}

/// Seed (Φ, Φ') at R from the decaying series with A₁ = 1 + ε.
pub fn exterior_seed(dim: Dimension, eps: f64, r_max: f64) -> [f64; 2] {
    let c = exterior_series(dim.df(), eps, SERIES_TERMS);
    let (v, dv) = eval_inverse_even_series(&c, r_max);
    [v, dv]
}

/// Seed (w, w') of the deviation w = Φ − Φ* at R.
pub fn deviation_seed(dim: Dimension, eps: f64, r_max: f64) -> [f64; 2] {
    let c = exterior_deviation_series(dim.df(), eps, SERIES_TERMS);
    let (v, dv) = eval_inverse_even_series(&c, r_max);
    [v, dv]
}

fn deviation_rhs(dim: Dimension) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + Sync {
    let d = dim.df();
    move |r: f64, y: &[f64; 2]| [y[1], deviation_second(d, r, y[0], y[1])]
}

/// The shot integrates w = Φ − Φ* rather than Φ: the decaying mode grows like
/// r^{-(d+2)/2} towards r₀, so round-off on Φ* itself would be amplified by
/// (R/r₀)^{(d-2)/2} relative to Φ*.
fn shoot(dim: Dimension, eps: f64, r0: f64, r_max: f64, stops: &[f64]) -> Result<crate::radial::Trajectory<2>> {
    let rhs = deviation_rhs(dim);
    let mut spec = IvpSpec::new(&rhs, r_max, deviation_seed(dim, eps, r_max), r0, SHOOT_TOL);
    spec.atol = 1e-300;
    spec.stops = stops;
    integrate_ivp(&spec)
}

fn add_star(r: f64, w: [f64; 2]) -> (f64, f64) {
    let s = phi_star(r);
    (s[0] + w[0], s[1] + w[1])
}

/// (Φ_ext(r₀), Φ_ext'(r₀)) without storing a profile.
pub fn exterior_boundary(dim: Dimension, eps: f64, r0: f64, r_max: f64) -> Result<(f64, f64)> {
    check_args(eps, r0, r_max)?;
    let (_, y) = shoot(dim, eps, r0, r_max, &[])?.last();
    Ok(add_star(r0, y))
}

/// Radii of the accepted adaptive steps from R down to r₀ for amplitude ε.
pub fn exterior_steps(dim: Dimension, eps: f64, r0: f64, r_max: f64) -> Result<Vec<f64>> {
    check_args(eps, r0, r_max)?;
    Ok(shoot(dim, eps, r0, r_max, &[])?.r)
}

/// (Φ_ext(r₀), Φ_ext'(r₀)) along a frozen step sequence from `exterior_steps`.
pub fn exterior_boundary_on_steps(dim: Dimension, eps: f64, steps: &[f64]) -> Result<(f64, f64)> {
    let (r_max, r0) = (steps[0], *steps.last().unwrap());
    check_args(eps, r0, r_max)?;
    let y = integrate_on_steps(&deviation_rhs(dim), steps, deviation_seed(dim, eps, r_max))?;
    Ok(add_star(r0, y))
}

/// Backward integration of the reduced-mass equation from R to r₀; the
/// profile lives on the τ grid over [r₀, R].
pub fn shoot_exterior(eps: f64, r0: f64, dim: Dimension, r_max: f64) -> Result<ExteriorSolution> {
    check_args(eps, r0, r_max)?;
    let grid = tau_grid(r0, r_max)?;
    shoot_exterior_on(eps, dim, &grid)
}

pub fn shoot_exterior_on(eps: f64, dim: Dimension, grid: &RadialGrid) -> Result<ExteriorSolution> {
    let (r0, r_max) = (grid.nodes[0], grid.r_max);
    check_args(eps, r0, r_max)?;
    let traj = shoot(dim, eps, r0, r_max, &grid.nodes)?;
    let w = traj.profile(grid, 0, 1)?;
    let star: Vec<[f64; 4]> = grid.nodes.iter().map(|&r| phi_star(r)).collect();
    let values = w.values.iter().zip(&star).map(|(v, s)| v + s[0]).collect();
    let derivs = w.derivs.iter().zip(&star).map(|(v, s)| v + s[1]).collect();
    let second = (0..grid.len()).map(|i| w.second_at(i) + star[i][2]).collect();
    let profile = RadialProfile::new(grid.clone(), values, derivs)?.with_second(second)?;
    let boundary = (profile.values[0], profile.derivs[0]);
    Ok(ExteriorSolution { epsilon: eps, r0, dim, profile, boundary, picard_report: None })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExteriorResiduals {
    /// max |Σ terms| / Σ|terms| over the profile
    pub scaled: f64,
    /// max r⁴|residual| on [max(r₀, 1), R]
    pub outer: f64,
    /// max r^{7/2}|residual| on [r₀, 1]
    pub inner: f64,
}

/// Residuals of the reduced-mass equation using the stored second derivative.
pub fn exterior_residuals(sol: &ExteriorSolution) -> ExteriorResiduals {
    let d = sol.dim.df();
    let p = &sol.profile;
    let mut out = ExteriorResiduals { scaled: 0.0, outer: 0.0, inner: 0.0 };
    for (i, &r) in p.nodes().iter().enumerate() {
        let (res, sc) = phi_residual(d, r, p.values[i], p.derivs[i], p.second_at(i), true);
        out.scaled = out.scaled.max(scaled(res, sc));
        if r >= 1.0 {
            out.outer = out.outer.max(r.powi(4) * res.abs());
        } else {
            out.inner = out.inner.max(r.powf(3.5) * res.abs());
        }
    }
    out
}

/// sup (1 + r²)|Φ − Φ*| over the profile.
pub fn deviation_from_singular(sol: &ExteriorSolution) -> f64 {
    sol.profile
        .nodes()
        .iter()
        .zip(&sol.profile.values)
        .map(|(&r, &v)| (1.0 + r * r) * (v - phi_star(r)[0]).abs())
        .fold(0.0, f64::max)
}

/// G[u₁]w = r((u₁ + w)²)' + 2d(u₁ + w)².
fn source(dim: Dimension, u1: &RadialProfile, w: &RadialProfile) -> Result<RadialProfile> {
    let d = dim.df();
    let x = u1.nodes();
    let n = x.len();
    let mut v = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    for i in 0..n {
        let (s, ds) = (u1.values[i] + w.values[i], u1.derivs[i] + w.derivs[i]);
        let dds = u1.second_at(i) + w.second_at(i);
        let r = x[i];
        v.push(2.0 * r * s * ds + 2.0 * d * s * s);
        dv.push(2.0 * s * ds + 2.0 * r * (ds * ds + s * dds) + 4.0 * d * s * ds);
    }
    RadialProfile::new(u1.grid.clone(), v, dv)
}

pub const PICARD_MAX_ITER: usize = 50;
pub const PICARD_TOL: f64 = 1e-9;

/// Fixed point w = ετ(G[u₁]w) from w⁰ = 0 on the τ grid over [r₀, R].
pub fn picard_exterior(eps: f64, r0: f64, dim: Dimension) -> Result<(RadialProfile, PicardReport)> {
    check_args(eps, r0, EXTERIOR_R)?;
    if eps.abs() * r0.powf(-0.5) >= 0.1 {
        return Err(Error::Parameter(format!(
            "epsilon r0^(-1/2) = {} is not small enough for the fixed point",
            eps.abs() * r0.powf(-0.5)
        )));
    }
    let grid = tau_grid(r0, EXTERIOR_R)?;
    let basis = ExteriorBasis::new(dim, &grid, 1e-12)?;
    picard_exterior_with(eps, r0, &basis)
}

pub fn picard_exterior_with(eps: f64, r0: f64, basis: &ExteriorBasis) -> Result<(RadialProfile, PicardReport)> {
    let dim = basis.dim;
    let norm = |w: &RadialProfile| weighted_norm(NormSpec::X { r0 }, dim, w);
    let mut w = RadialProfile::zeros(basis.grid());
    let mut increments = Vec::new();
    let mut ratios = Vec::new();
    let mut bad = 0;
    for _ in 0..PICARD_MAX_ITER {
        let g = source(dim, &basis.u1, &w)?;
        let mut next = resolvent_tau(basis, &g)?;
        next.values.iter_mut().for_each(|v| *v *= eps);
        next.derivs.iter_mut().for_each(|v| *v *= eps);
        let diff = RadialProfile::new(
            next.grid.clone(),
            next.values.iter().zip(&w.values).map(|(a, b)| a - b).collect(),
            next.derivs.iter().zip(&w.derivs).map(|(a, b)| a - b).collect(),
        )?;
        let inc = norm(&diff)?;
        if let Some(&prev) = increments.last() {
            let ratio: f64 = if prev > 0.0 { inc / prev } else { 0.0 };
            ratios.push(ratio);
            bad = if ratio >= 1.0 { bad + 1 } else { 0 };
            if bad >= 3 {
                return Err(Error::Convergence(format!("exterior fixed point not contracting (ratio {ratio:.3})")));
            }
        }
        increments.push(inc);
        w = next;
        if inc < PICARD_TOL {
            let w_norm = norm(&w)?;
            let constant = if eps == 0.0 { 0.0 } else { w_norm / (eps.abs() * r0.powf(-0.5)) };
            let iterations = increments.len();
            return Ok((w, PicardReport { increments, ratios, w_norm, constant, iterations }));
        }
    }
    Err(Error::Convergence(format!("exterior fixed point did not reach {PICARD_TOL:e} in {PICARD_MAX_ITER} iterations")))
}

/// Φ* + εu₁ + εw on the basis grid.
pub fn picard_phi(eps: f64, basis: &ExteriorBasis, w: &RadialProfile) -> Result<RadialProfile> {
    let x = basis.grid().nodes.clone();
    let v = (0..x.len()).map(|i| phi_star(x[i])[0] + eps * (basis.u1.values[i] + w.values[i])).collect();
    let d = (0..x.len()).map(|i| phi_star(x[i])[1] + eps * (basis.u1.derivs[i] + w.derivs[i])).collect();
    RadialProfile::new(basis.grid().clone(), v, d)
}
