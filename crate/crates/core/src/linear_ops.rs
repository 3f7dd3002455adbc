//! The three linearized operators (L about Φ* with the self-similar drift,
//! H∞ about Φ* without it, H about Q̄), their fundamental solutions,
//! weighted Wronskians, integral resolvents τ, ψ, S and the X / Y norms.

use serde::Serialize;

use crate::equation::u1_series;
use crate::error::{Error, Result};
use crate::radial::{cumulative_integral, integrate_ivp, IvpSpec, RadialGrid, RadialProfile};
use crate::steady::{fit_oscillation, solve_steady_on, Dimension, OscillationFit, Reference, SteadyPair, STEADY_R_MIN};

#[derive(Debug, Clone, Copy)]
pub enum OperatorKind<'a> {
    L(Dimension),
    Hinf(Dimension),
    H(&'a SteadyPair),
}

impl OperatorKind<'_> {
    pub fn dim(&self) -> Dimension {
        match self {
            OperatorKind::L(d) | OperatorKind::Hinf(d) => *d,
            OperatorKind::H(p) => p.dim,
        }
    }

    /// Coefficients (A, B) with op(u) = −u'' + A u' + B u.
    pub fn coefficients(&self, r: f64) -> Result<(f64, f64)> {
        let d = self.dim().df();
        Ok(match self {
            OperatorKind::L(_) => (-(d + 3.0) / r + 0.5 * r, 1.0 - (4.0 * d - 4.0) / (r * r)),
            OperatorKind::Hinf(_) => (-(d + 3.0) / r, -(4.0 * d - 4.0) / (r * r)),
            OperatorKind::H(pair) => {
                let q = pair.qbar_at(r)?;
                (-(d + 1.0) / r - 2.0 * r * q[0], -(4.0 * d * q[0] + 2.0 * r * q[1]))
            }
        })
    }
}

/// Pointwise op(u) on u's grid. The derivative column of the result is a
/// three-point finite difference.
pub fn apply_operator(kind: OperatorKind<'_>, u: &RadialProfile) -> Result<RadialProfile> {
    let x = u.nodes();
    let mut vals = Vec::with_capacity(x.len());
    for (i, &r) in x.iter().enumerate() {
        let (a, b) = kind.coefficients(r)?;
        vals.push(-u.second_at(i) + a * u.derivs[i] + b * u.values[i]);
    }
    let derivs = finite_difference(x, &vals);
    RadialProfile::new(u.grid.clone(), vals, derivs)
}

fn finite_difference(x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            if n < 3 {
                return (v[1] - v[0]) / (x[1] - x[0]);
            }
            let (a, b, c) = if i == 0 {
                (0, 1, 2)
            } else if i == n - 1 {
                (n - 3, n - 2, n - 1)
            } else {
                (i - 1, i, i + 1)
            };
            // derivative of the quadratic through a, b, c at x[i]
            let (xa, xb, xc, t) = (x[a], x[b], x[c], x[i]);
            v[a] * ((t - xb) + (t - xc)) / ((xa - xb) * (xa - xc))
                + v[b] * ((t - xa) + (t - xc)) / ((xb - xa) * (xb - xc))
                + v[c] * ((t - xa) + (t - xb)) / ((xc - xa) * (xc - xb))
        })
        .collect()
}

/// Lower end of the window on which L∘τ and H∞∘ψ are checked. Closer to the
/// origin the outputs are dominated by the homogeneous r^{-(d+2)/2} modes and
/// the numerical second derivative loses the digits.
pub const IDENTITY_WINDOW_LO: f64 = 0.5;

/// sup |op(u) − f| / sup |f| over nodes in [lo, hi].
pub fn identity_error(kind: OperatorKind<'_>, u: &RadialProfile, f: &RadialProfile, lo: f64, hi: f64) -> Result<f64> {
    let lu = apply_operator(kind, u)?;
    let (mut num, mut den): (f64, f64) = (0.0, 0.0);
    for (i, &r) in u.nodes().iter().enumerate() {
        if r < lo || r > hi {
            continue;
        }
        num = num.max((lu.values[i] - f.values[i]).abs());
        den = den.max(f.values[i].abs());
    }
    Ok(if den > 0.0 { num / den } else { num })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FundamentalKind {
    U1,
    U2Factored,
    Phi1,
    Phi2,
    LambdaQbar,
    Rho,
}

/// A kernel element of one of the operators. For `U2Factored` the profile
/// holds v₂ with u₂ = e^{r²/4} v₂.
#[derive(Debug, Clone, Serialize)]
pub struct FundamentalSolution {
    pub kind: FundamentalKind,
    pub dim: Dimension,
    pub profile: RadialProfile,
}

pub const U1_SEED_RADIUS: f64 = 30.0;

/// u₁ ~ r^{-2}(1 + c₂r^{-2} + ...) integrated backward from `seed_r` onto `grid`.
pub fn fundamental_u1(dim: Dimension, grid: &RadialGrid, seed_r: f64, tol: f64) -> Result<FundamentalSolution> {
    if seed_r < 30.0 {
        return Err(Error::Parameter(format!("u1 seed radius {seed_r} must be at least 30")));
    }
    if grid.r_max > seed_r * (1.0 + 1e-12) {
        return Err(Error::Parameter("u1 grid extends past the seed radius".into()));
    }
    let d = dim.df();
    let c = u1_series(d, 5);
    let (v, dv) = crate::equation::eval_inverse_even_series(&c, seed_r);
    let op = OperatorKind::L(dim);
    let rhs = move |r: f64, y: &[f64; 2]| {
        let (a, b) = op.coefficients(r).unwrap();
        [y[1], a * y[1] + b * y[0]]
    };
    let mut spec = IvpSpec::new(&rhs, seed_r, [v, dv], grid.nodes[0], tol);
    spec.atol = 1e-300;
    spec.stops = &grid.nodes;
    let traj = integrate_ivp(&spec)?;
    let profile = traj.profile(grid, 0, 1)?;
    Ok(FundamentalSolution { kind: FundamentalKind::U1, dim, profile })
}

/// v₂ = e^{−r²/4} u₂ integrated forward over `grid` from the seed r^{-(d+2)},
/// rescaled so that r^{d+3} e^{−r²/4} (u₁'u₂ − u₂'u₁) = 1.
pub fn fundamental_u2(dim: Dimension, grid: &RadialGrid, u1: &FundamentalSolution, tol: f64) -> Result<FundamentalSolution> {
    let d = dim.df();
    let rhs = move |r: f64, y: &[f64; 2]| {
        let a = -(d + 3.0) / r - 0.5 * r;
        let b = -(d + 2.0) / 2.0 + (4.0 - 4.0 * d) / (r * r);
        [y[1], a * y[1] + b * y[0]]
    };
    let r0 = grid.nodes[0];
    let seed = [r0.powf(-(d + 2.0)), -(d + 2.0) * r0.powf(-(d + 3.0))];
    let mut spec = IvpSpec::new(&rhs, r0, seed, grid.r_max, tol);
    spec.atol = 1e-300;
    spec.stops = &grid.nodes;
    let traj = integrate_ivp(&spec)?;
    let mut profile = traj.profile(grid, 0, 1)?;
    let mid = grid.nodes[grid.len() / 2];
    let w = u1u2_weighted(d, mid, &u1.profile, &profile)?;
    for v in profile.values.iter_mut().chain(profile.derivs.iter_mut()) {
        *v /= w;
    }
    if let Some(s) = profile.second.as_mut() {
        s.iter_mut().for_each(|v| *v /= w);
    }
    Ok(FundamentalSolution { kind: FundamentalKind::U2Factored, dim, profile })
}

fn u1u2_weighted(d: f64, r: f64, u1: &RadialProfile, v2: &RadialProfile) -> Result<f64> {
    let (u, du) = u1.eval(r)?;
    let (v, dv) = v2.eval(r)?;
    Ok(r.powf(d + 3.0) * (du * v - (dv + 0.5 * r * v) * u))
}

/// φ₁ = sin(ω log r)/r^k, φ₂ = cos(ω log r)/r^k with (f, f', f'').
pub fn phi_closed(dim: Dimension, which: FundamentalKind, r: f64) -> (f64, f64, f64) {
    let (k, w) = (dim.decay(), dim.omega());
    let th = w * r.ln();
    let (s, c) = th.sin_cos();
    let (f, fp, fpp) = match which {
        FundamentalKind::Phi1 => (s, c, -s),
        _ => (c, -s, -c),
    };
    let rk = r.powf(-k);
    (
        rk * f,
        rk / r * (-k * f + w * fp),
        rk / (r * r) * (k * (k + 1.0) * f - (2.0 * k + 1.0) * w * fp + w * w * fpp),
    )
}

pub fn fundamental_phi(dim: Dimension, which: FundamentalKind, grid: &RadialGrid) -> Result<FundamentalSolution> {
    if !matches!(which, FundamentalKind::Phi1 | FundamentalKind::Phi2) {
        return Err(Error::Parameter("phi kind must be Phi1 or Phi2".into()));
    }
    Ok(FundamentalSolution {
        kind: which,
        dim,
        profile: RadialProfile::from_fn(grid, |r| phi_closed(dim, which, r)),
    })
}

pub fn fundamental_lambda_qbar(pair: &SteadyPair, grid: &RadialGrid) -> Result<FundamentalSolution> {
    let mut vals = Vec::with_capacity(grid.len());
    for &r in &grid.nodes {
        vals.push(pair.lambda_qbar_at(r)?);
    }
    let profile = RadialProfile::new(grid.clone(), vals.iter().map(|v| v.0).collect(), vals.iter().map(|v| v.1).collect())?
        .with_second(vals.iter().map(|v| v.2).collect())?;
    Ok(FundamentalSolution { kind: FundamentalKind::LambdaQbar, dim: pair.dim, profile })
}

/// E(r) = exp(∫₀ʳ 2sQ̄ ds) with E' and E''.
pub fn steady_weight(pair: &SteadyPair, grid: &RadialGrid) -> Result<RadialProfile> {
    let mut qs = Vec::with_capacity(grid.len());
    for &r in &grid.nodes {
        qs.push(pair.qbar_at(r)?);
    }
    let qprof = RadialProfile::new(grid.clone(), qs.iter().map(|q| q[0]).collect(), qs.iter().map(|q| q[1]).collect())?;
    let i = cumulative_integral(&qprof, 1)?;
    let n = grid.len();
    let (mut v, mut d1, mut d2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let r = grid.nodes[k];
        let e = (2.0 * i.values[k]).exp();
        let ep = 2.0 * r * qs[k][0] * e;
        v.push(e);
        d1.push(ep);
        d2.push((2.0 * qs[k][0] + 2.0 * r * qs[k][1]) * e + 2.0 * r * qs[k][0] * ep);
    }
    RadialProfile::new(grid.clone(), v, d1)?.with_second(d2)
}

/// Second kernel element of H, ρ ~ r^{-d}(1 + r²/(2(d−2))) at the origin,
/// normalized so that r^{d+1} E (ΛQ̄'ρ − ΛQ̄ρ') = 1.
pub fn fundamental_rho(pair: &SteadyPair, grid: &RadialGrid, tol: f64) -> Result<FundamentalSolution> {
    let dim = pair.dim;
    let d = dim.df();
    let op = OperatorKind::H(pair);
    let rhs = move |r: f64, y: &[f64; 2]| {
        let (a, b) = op.coefficients(r).unwrap_or((f64::NAN, f64::NAN));
        [y[1], a * y[1] + b * y[0]]
    };
    let r0 = grid.nodes[0];
    let e = d * dim.a0() / (d - 2.0);
    let seed = [r0.powf(-d) * (1.0 + e * r0 * r0), -d * r0.powf(-d - 1.0) + (2.0 - d) * e * r0.powf(1.0 - d)];
    let mut spec = IvpSpec::new(&rhs, r0, seed, grid.r_max, tol);
    spec.atol = 1e-300;
    spec.stops = &grid.nodes;
    let traj = integrate_ivp(&spec)?;
    let mut profile = traj.profile(grid, 0, 1)?;
    let rn = grid.nodes[grid.locate(0.01f64.max(r0 * 10.0).min(grid.r_max))];
    let (l, lp, _) = pair.lambda_qbar_at(rn)?;
    let ew = steady_weight(pair, grid)?;
    let idx = grid.locate(rn);
    let w = rn.powf(d + 1.0) * ew.values[idx] * (lp * profile.values[idx] - l * profile.derivs[idx]);
    for v in profile.values.iter_mut().chain(profile.derivs.iter_mut()) {
        *v /= w;
    }
    if let Some(s) = profile.second.as_mut() {
        s.iter_mut().for_each(|v| *v /= w);
    }
    Ok(FundamentalSolution { kind: FundamentalKind::Rho, dim, profile })
}

/// ρ on [r_lo, r_hi] by reduction of order, ρ = ΛQ̄ ∫_r^{r_hi} ds / (ΛQ̄² E s^{d+1}),
/// valid while ΛQ̄ stays away from zero. Differs from `fundamental_rho` by a
/// multiple of ΛQ̄.
pub fn rho_reduction_of_order(pair: &SteadyPair, grid: &RadialGrid, tol: f64) -> Result<RadialProfile> {
    let pair = &node_exact_pair(pair, grid, tol)?;
    let d = pair.dim.df();
    let ew = steady_weight(pair, grid)?;
    let n = grid.len();
    let mut g = Vec::with_capacity(n);
    let mut gp = Vec::with_capacity(n);
    let mut lq = Vec::with_capacity(n);
    for k in 0..n {
        let r = grid.nodes[k];
        let (l, lp, _) = pair.lambda_qbar_at(r)?;
        if l.abs() < 1e-3 {
            return Err(Error::Domain(format!("Lambda Qbar vanishes near r = {r:e}")));
        }
        let den = l * l * ew.values[k] * r.powf(d + 1.0);
        let dden = 2.0 * l * lp * ew.values[k] * r.powf(d + 1.0)
            + l * l * ew.derivs[k] * r.powf(d + 1.0)
            + l * l * ew.values[k] * (d + 1.0) * r.powf(d);
        g.push(1.0 / den);
        gp.push(-dden / (den * den));
        lq.push((l, lp));
    }
    // backward running integral ∫_r^{r_hi}
    let mut acc = vec![0.0; n];
    for k in (0..n - 1).rev() {
        let h = grid.nodes[k + 1] - grid.nodes[k];
        acc[k] = acc[k + 1] + 0.5 * h * (g[k] + g[k + 1]) + h * h / 12.0 * (gp[k] - gp[k + 1]);
    }
    let vals: Vec<f64> = (0..n).map(|k| lq[k].0 * acc[k]).collect();
    let ders: Vec<f64> = (0..n).map(|k| lq[k].1 * acc[k] - lq[k].0 * g[k]).collect();
    RadialProfile::new(grid.clone(), vals, ders)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WronskianReport {
    pub reference: f64,
    pub max_rel_deviation: f64,
    pub r_lo: f64,
    pub r_hi: f64,
}

pub enum WronskianPair<'a> {
    /// u₁ with v₂; weight r^{d+3} e^{−r²/4}
    U1U2 { u1: &'a RadialProfile, v2: &'a RadialProfile },
    /// weight r^{d+3}
    Phi12 { phi1: &'a RadialProfile, phi2: &'a RadialProfile },
    /// weight r^{d+1} E
    LambdaRho { lq: &'a RadialProfile, rho: &'a RadialProfile, weight: &'a RadialProfile },
}

/// Max relative deviation of the weighted Wronskian (first'·second − second'·first)
/// from its value at the window midpoint, over grid nodes in [lo, hi].
pub fn wronskian_check(pair: &WronskianPair<'_>, dim: Dimension, lo: f64, hi: f64) -> Result<WronskianReport> {
    let d = dim.df();
    let (grid, vals): (&RadialGrid, Vec<(f64, f64)>) = match pair {
        WronskianPair::U1U2 { u1, v2 } => {
            let mut out = Vec::new();
            for &r in u1.nodes() {
                if r >= lo && r <= hi {
                    out.push((r, u1u2_weighted(d, r, u1, v2)?));
                }
            }
            (&u1.grid, out)
        }
        WronskianPair::Phi12 { phi1, phi2 } => {
            let mut out = Vec::new();
            for (i, &r) in phi1.nodes().iter().enumerate() {
                if r >= lo && r <= hi {
                    let (b, db) = phi2.eval(r)?;
                    out.push((r, r.powf(d + 3.0) * (phi1.derivs[i] * b - db * phi1.values[i])));
                }
            }
            (&phi1.grid, out)
        }
        WronskianPair::LambdaRho { lq, rho, weight } => {
            let mut out = Vec::new();
            for (i, &r) in lq.nodes().iter().enumerate() {
                if r >= lo && r <= hi {
                    let (b, db) = rho.eval(r)?;
                    let e = weight.value(r)?;
                    out.push((r, r.powf(d + 1.0) * e * (lq.derivs[i] * b - db * lq.values[i])));
                }
            }
            (&lq.grid, out)
        }
    };
    let _ = grid;
    if vals.is_empty() {
        return Err(Error::Domain("no grid nodes inside the Wronskian window".into()));
    }
    let reference = vals[vals.len() / 2].1;
    let dev = vals.iter().map(|(_, w)| ((w - reference) / reference).abs()).fold(0.0, f64::max);
    Ok(WronskianReport { reference, max_rel_deviation: dev, r_lo: vals[0].0, r_hi: vals.last().unwrap().0 })
}

/// u₁ and v₂ on a common grid for τ.
#[derive(Debug, Clone)]
pub struct ExteriorBasis {
    pub dim: Dimension,
    pub u1: RadialProfile,
    pub v2: RadialProfile,
}

/// Grid for τ: 400 nodes per decade on [r_lo, 1], 200 per decade beyond,
/// refined to spacing ≤ 0.08/r where the Gaussian weight varies faster.
pub fn tau_grid(r_lo: f64, r_hi: f64) -> Result<RadialGrid> {
    let mut nodes = vec![r_lo];
    let mut r = r_lo;
    let inner = 10f64.ln() / 800.0;
    let outer = 10f64.ln() / 400.0;
    while r < r_hi {
        let h = if r < 1.0 { r * inner } else { (r * outer).min(0.08 / r) };
        r = (r + h).min(r_hi);
        if r_hi - r < 0.25 * h {
            r = r_hi;
        }
        nodes.push(r);
    }
    let mut g = RadialGrid::from_nodes(nodes)?;
    g.grading = crate::radial::Grading::Custom;
    Ok(g)
}

impl ExteriorBasis {
    pub fn new(dim: Dimension, grid: &RadialGrid, tol: f64) -> Result<Self> {
        let seed = grid.r_max.max(U1_SEED_RADIUS);
        let u1 = fundamental_u1(dim, grid, seed, tol)?;
        let v2 = fundamental_u2(dim, grid, &u1, tol)?;
        Ok(ExteriorBasis { dim, u1: u1.profile, v2: v2.profile })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.u1.grid
    }
}

fn same_grid(a: &RadialGrid, b: &RadialGrid) -> Result<()> {
    if a.nodes.len() != b.nodes.len() || a.nodes.first() != b.nodes.first() || a.nodes.last() != b.nodes.last() {
        return Err(Error::Parameter("resolvent input must live on the basis grid".into()));
    }
    Ok(())
}

/// Two-point power-law tail ∫_R^∞ of an integrand known at the last two nodes.
fn power_tail(r1: f64, g1: f64, r2: f64, g2: f64) -> Result<f64> {
    if g2 == 0.0 {
        return Ok(0.0);
    }
    if g1 == 0.0 || g1.signum() != g2.signum() {
        return Ok(0.0);
    }
    let p = (g2 / g1).ln() / (r2 / r1).ln();
    if p >= -1.0 {
        return Err(Error::DivergentTail(p));
    }
    Ok(-g2 * r2 / (p + 1.0))
}

/// τ(f) = u₁ ∫_r^∞ f v₂ s^{d+3} ds − v₂ ∫_r^∞ f u₁ s^{d+3} e^{(r²−s²)/4} ds,
/// solving L τ(f) = f with decay at infinity.
pub fn resolvent_tau(basis: &ExteriorBasis, f: &RadialProfile) -> Result<RadialProfile> {
    same_grid(basis.grid(), &f.grid)?;
    let d = basis.dim.df();
    let x = f.nodes();
    let n = x.len();
    let (u, v) = (&basis.u1, &basis.v2);
    let w = |r: f64| r.powf(d + 3.0);
    let dw = |r: f64| (d + 3.0) * r.powf(d + 2.0);
    let ga: Vec<f64> = (0..n).map(|i| f.values[i] * v.values[i] * w(x[i])).collect();
    let gap: Vec<f64> = (0..n)
        .map(|i| (f.derivs[i] * v.values[i] + f.values[i] * v.derivs[i]) * w(x[i]) + f.values[i] * v.values[i] * dw(x[i]))
        .collect();
    let gk: Vec<f64> = (0..n).map(|i| f.values[i] * u.values[i] * w(x[i])).collect();
    let gkp: Vec<f64> = (0..n)
        .map(|i| (f.derivs[i] * u.values[i] + f.values[i] * u.derivs[i]) * w(x[i]) + f.values[i] * u.values[i] * dw(x[i]))
        .collect();

    let mut a = vec![0.0; n];
    let mut k = vec![0.0; n];
    a[n - 1] = power_tail(x[n - 2], ga[n - 2], x[n - 1], ga[n - 1])?;
    k[n - 1] = 2.0 * gk[n - 1] / x[n - 1];
    for i in (0..n - 1).rev() {
        let h = x[i + 1] - x[i];
        a[i] = a[i + 1] + 0.5 * h * (ga[i] + ga[i + 1]) + h * h / 12.0 * (gap[i] - gap[i + 1]);
        let damp = ((x[i] * x[i] - x[i + 1] * x[i + 1]) / 4.0).exp();
        // integrand g(s) e^{(r_i² − s²)/4} and its slope at both ends
        let (h0, h1) = (gk[i], gk[i + 1] * damp);
        let (d0, d1) = (gkp[i] - 0.5 * x[i] * gk[i], (gkp[i + 1] - 0.5 * x[i + 1] * gk[i + 1]) * damp);
        k[i] = damp * k[i + 1] + 0.5 * h * (h0 + h1) + h * h / 12.0 * (d0 - d1);
    }
    let vals: Vec<f64> = (0..n).map(|i| a[i] * u.values[i] - v.values[i] * k[i]).collect();
    let ders: Vec<f64> = (0..n)
        .map(|i| a[i] * u.derivs[i] - k[i] * (v.derivs[i] + 0.5 * x[i] * v.values[i]))
        .collect();
    RadialProfile::new(f.grid.clone(), vals, ders)
}

/// ψ(f) = (φ₁ ∫_r^∞ f φ₂ s^{d+3} − φ₂ ∫_r^∞ f φ₁ s^{d+3}) / ω, solving H∞ ψ = f.
/// Beyond the grid f is extended by a two-point power law and the oscillatory
/// tail integrals are taken in closed form.
pub fn resolvent_psi(dim: Dimension, f: &RadialProfile) -> Result<RadialProfile> {
    let d = dim.df();
    let (k, om) = (dim.decay(), dim.omega());
    let x = f.nodes();
    let n = x.len();
    let phis: Vec<[(f64, f64, f64); 2]> = x
        .iter()
        .map(|&r| [phi_closed(dim, FundamentalKind::Phi1, r), phi_closed(dim, FundamentalKind::Phi2, r)])
        .collect();
    let w = |r: f64| r.powf(d + 3.0);
    let dw = |r: f64| (d + 3.0) * r.powf(d + 2.0);
    let mut ints = [vec![0.0; n], vec![0.0; n]];
    // tail: f ≈ C r^q beyond R
    let (r1, r2) = (x[n - 2], x[n - 1]);
    let (f1, f2) = (f.values[n - 2], f.values[n - 1]);
    let tails = if f2 == 0.0 || f1 == 0.0 || f1.signum() != f2.signum() {
        [0.0, 0.0]
    } else {
        let q = (f2 / f1).ln() / (r2 / r1).ln();
        let alpha = q + d + 3.0 - k + 1.0;
        if alpha >= 0.0 {
            return Err(Error::DivergentTail(q));
        }
        let c = f2 / r2.powf(q);
        let t = r2.ln();
        let e = (alpha * t).exp() * c;
        let den = alpha * alpha + om * om;
        let (s, co) = (om * t).sin_cos();
        [-e * (alpha * co + om * s) / den, -e * (alpha * s - om * co) / den]
    };
    // ints[0] = ∫ f φ₂ w, ints[1] = ∫ f φ₁ w
    for (j, which) in [(0usize, 1usize), (1, 0)] {
        let g: Vec<f64> = (0..n).map(|i| f.values[i] * phis[i][which].0 * w(x[i])).collect();
        let gp: Vec<f64> = (0..n)
            .map(|i| {
                (f.derivs[i] * phis[i][which].0 + f.values[i] * phis[i][which].1) * w(x[i])
                    + f.values[i] * phis[i][which].0 * dw(x[i])
            })
            .collect();
        ints[j][n - 1] = tails[j];
        for i in (0..n - 1).rev() {
            let h = x[i + 1] - x[i];
            ints[j][i] = ints[j][i + 1] + 0.5 * h * (g[i] + g[i + 1]) + h * h / 12.0 * (gp[i] - gp[i + 1]);
        }
    }
    let vals: Vec<f64> = (0..n).map(|i| (phis[i][0].0 * ints[0][i] - phis[i][1].0 * ints[1][i]) / om).collect();
    let ders: Vec<f64> = (0..n).map(|i| (phis[i][0].1 * ints[0][i] - phis[i][1].1 * ints[1][i]) / om).collect();
    RadialProfile::new(f.grid.clone(), vals, ders)
}

/// The steady pair re-solved with `grid` as its node set. ΛQ̄ is a small
/// difference of 2Q̄ and rQ̄', so interpolating it between coarser steady
/// nodes leaves errors that the cancellations in S and ρ amplify.
pub fn node_exact_pair(pair: &SteadyPair, grid: &RadialGrid, tol: f64) -> Result<SteadyPair> {
    if grid.nodes[0] < STEADY_R_MIN * (1.0 - 1e-12) {
        return Err(Error::Domain(format!("grid starts below the steady start {STEADY_R_MIN:e}")));
    }
    if grid.nodes[0] <= STEADY_R_MIN * (1.0 + 1e-12) {
        return solve_steady_on(pair.dim, grid, tol);
    }
    let full = grid.merged(&[STEADY_R_MIN])?;
    let p = solve_steady_on(pair.dim, &full, tol)?;
    Ok(SteadyPair {
        qbar: p.qbar.window(grid.nodes[0], grid.r_max)?,
        q: p.q.window(grid.nodes[0], grid.r_max)?,
        dim: p.dim,
        qbar_third: p.qbar_third[full.len() - grid.len()..].to_vec(),
    })
}

/// ΛQ̄, ρ and E on a common grid starting near the origin, for S.
#[derive(Debug, Clone)]
pub struct InteriorBasis {
    pub dim: Dimension,
    pub lq: RadialProfile,
    pub rho: RadialProfile,
    pub weight: RadialProfile,
}

impl InteriorBasis {
    pub fn new(pair: &SteadyPair, grid: &RadialGrid, tol: f64) -> Result<Self> {
        if grid.r_max > pair.qbar.r_hi() {
            return Err(Error::Domain("interior basis grid exceeds the steady solution".into()));
        }
        let local = node_exact_pair(pair, grid, tol)?;
        let lq = fundamental_lambda_qbar(&local, grid)?.profile;
        let rho = fundamental_rho(&local, grid, tol)?.profile;
        let weight = steady_weight(&local, grid)?;
        Ok(InteriorBasis { dim: pair.dim, lq, rho, weight })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.lq.grid
    }
}

/// S(f) = ρ ∫₀ʳ f ΛQ̄ E s^{d+1} − ΛQ̄ ∫₀ʳ f ρ E s^{d+1}, solving H S(f) = f
/// with S(f)(0) = 0.
pub fn resolvent_s(basis: &InteriorBasis, f: &RadialProfile) -> Result<RadialProfile> {
    same_grid(basis.grid(), &f.grid)?;
    let d = basis.dim.d() as i32;
    let n = f.grid.len();
    let e = &basis.weight;
    let prod = |k: &RadialProfile| -> Result<RadialProfile> {
        let v: Vec<f64> = (0..n).map(|i| f.values[i] * k.values[i] * e.values[i]).collect();
        let dv: Vec<f64> = (0..n)
            .map(|i| {
                f.derivs[i] * k.values[i] * e.values[i]
                    + f.values[i] * k.derivs[i] * e.values[i]
                    + f.values[i] * k.values[i] * e.derivs[i]
            })
            .collect();
        RadialProfile::new(f.grid.clone(), v, dv)
    };
    let i1 = cumulative_integral(&prod(&basis.lq)?, d + 1)?;
    let i2 = cumulative_integral(&prod(&basis.rho)?, d + 1)?;
    let vals: Vec<f64> = (0..n).map(|i| basis.rho.values[i] * i1.values[i] - basis.lq.values[i] * i2.values[i]).collect();
    let ders: Vec<f64> = (0..n).map(|i| basis.rho.derivs[i] * i1.values[i] - basis.lq.derivs[i] * i2.values[i]).collect();
    RadialProfile::new(f.grid.clone(), vals, ders)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NormSpec {
    /// sup_{r₀≤r≤1}(r^k|w| + r^{k+1}|w'|) + sup_{r≥1}(r⁴|w| + r⁵|w'|), k = (d+2)/2
    X { r0: f64 },
    /// sup_{0≤r≤r₁}(1+r)^{−1/2}(|w| + |r w'|)
    Y { r1: f64 },
}

pub fn weighted_norm(spec: NormSpec, dim: Dimension, w: &RadialProfile) -> Result<f64> {
    let x = w.nodes();
    match spec {
        NormSpec::X { r0 } => {
            if w.r_lo() > r0 * (1.0 + 1e-12) || w.r_hi() < 1.0 {
                return Err(Error::Domain(format!("X norm needs coverage of [{r0}, 1] and beyond")));
            }
            let k = dim.decay();
            let (mut inner, mut outer): (f64, f64) = (0.0, 0.0);
            for (i, &r) in x.iter().enumerate() {
                if r < r0 * (1.0 - 1e-12) {
                    continue;
                }
                if r <= 1.0 {
                    inner = inner.max(r.powf(k) * w.values[i].abs() + r.powf(k + 1.0) * w.derivs[i].abs());
                }
                if r >= 1.0 {
                    outer = outer.max(r.powi(4) * w.values[i].abs() + r.powi(5) * w.derivs[i].abs());
                }
            }
            Ok(inner + outer)
        }
        NormSpec::Y { r1 } => {
            if w.r_lo() > 1e-3 || w.r_hi() < r1 * (1.0 - 1e-12) {
                return Err(Error::Domain(format!("Y norm needs coverage of [0, {r1}]")));
            }
            let mut s: f64 = 0.0;
            for (i, &r) in x.iter().enumerate() {
                if r <= r1 * (1.0 + 1e-12) {
                    s = s.max((w.values[i].abs() + (r * w.derivs[i]).abs()) / (1.0 + r).sqrt());
                }
            }
            Ok(s)
        }
    }
}

/// c₁ sin(ω log r + c₂)/r^k fitted to u₁ near the origin.
pub fn u1_origin_fit(dim: Dimension, tol: f64) -> Result<(OscillationFit, RadialProfile)> {
    let (lo, hi) = (1e-9, 1e-2);
    let grid = RadialGrid::per_decade(lo, 1.0, 200.0)?.merged(&crate::radial::log_space(1.0, 30.0, 300))?;
    let u1 = fundamental_u1(dim, &grid, 30.0, tol)?.profile;
    let fit = fit_oscillation(&u1, Reference::Zero, dim.decay(), (lo, hi), dim.omega())?;
    Ok((fit, u1))
}
