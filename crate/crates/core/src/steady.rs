//! The steady core Q̄ (reduced mass) and Q (density), the mass transform and
//! its inverse, and oscillatory tail fits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::radial::{cumulative_integral, integrate_ivp, make_graded_grid, log_space, IvpSpec, RadialGrid, RadialProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Dimension(u32);

impl Dimension {
    pub fn new(d: u32) -> Result<Self> {
        if (3..=9).contains(&d) {
            Ok(Dimension(d))
        } else {
            Err(Error::Parameter(format!("dimension {d} outside 3..=9")))
        }
    }

    pub fn d(self) -> u32 {
        self.0
    }

    pub fn df(self) -> f64 {
        self.0 as f64
    }

    /// Imaginary part of the roots of x² + (d+2)x + 4(d−1) = 0.
    pub fn omega(self) -> f64 {
        let d = self.df();
        ((d - 2.0) * (10.0 - d)).sqrt() / 2.0
    }

    /// Decay exponent (d+2)/2 of the oscillatory modes.
    pub fn decay(self) -> f64 {
        (self.df() + 2.0) / 2.0
    }

    /// Central value Q̄(0) = 1/(2d).
    pub fn a0(self) -> f64 {
        1.0 / (2.0 * self.df())
    }
}

/// Q̄ and Q = 2dQ̄ + 2rQ̄' on a common grid. Both carry exact second derivatives.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyPair {
    pub qbar: RadialProfile,
    pub q: RadialProfile,
    pub dim: Dimension,
    /// Q̄''' at the nodes (from differentiating the ODE).
    pub qbar_third: Vec<f64>,
}

pub const STEADY_R_MIN: f64 = 1e-6;

impl SteadyPair {
    /// Q̄ and its first three derivatives at r, using the series below the grid.
    pub fn qbar_at(&self, r: f64) -> Result<[f64; 4]> {
        let d = self.dim.df();
        if r < self.qbar.r_lo() {
            let a = self.dim.a0();
            let b = -d * a * a / (d + 2.0);
            return Ok([a + b * r * r, 2.0 * b * r, 2.0 * b, 0.0]);
        }
        let (v, dv) = self.qbar.eval(r)?;
        let dd = steady_second(d, r, v, dv);
        let ddd = steady_third(d, r, v, dv, dd);
        Ok([v, dv, dd, ddd])
    }

    /// ΛQ̄ = 2Q̄ + rQ̄' with two derivatives at r.
    pub fn lambda_qbar_at(&self, r: f64) -> Result<(f64, f64, f64)> {
        let p = self.qbar_at(r)?;
        Ok((2.0 * p[0] + r * p[1], 3.0 * p[1] + r * p[2], 4.0 * p[2] + r * p[3]))
    }
}

#[inline]
fn steady_second(d: f64, r: f64, p: f64, dp: f64) -> f64 {
    -(d + 1.0) / r * dp - 2.0 * d * p * p - 2.0 * r * p * dp
}

#[inline]
fn steady_third(d: f64, r: f64, p: f64, dp: f64, ddp: f64) -> f64 {
    (d + 1.0) / (r * r) * dp - (d + 1.0) / r * ddp - 4.0 * d * p * dp - 2.0 * p * dp - 2.0 * r * (dp * dp + p * ddp)
}

/// Integrate the steady reduced-mass equation from r = 1e-6 on the given grid.
pub fn solve_steady_on(dim: Dimension, grid: &RadialGrid, tol: f64) -> Result<SteadyPair> {
    let d = dim.df();
    let r0 = grid.nodes[0];
    let a = dim.a0();
    let b = -d * a * a / (d + 2.0);
    let rhs = move |r: f64, y: &[f64; 2]| [y[1], steady_second(d, r, y[0], y[1])];
    let mut spec = IvpSpec::new(&rhs, r0, [a + b * r0 * r0, 2.0 * b * r0], *grid.nodes.last().unwrap(), tol);
    spec.atol = tol * 1e-6;
    spec.stops = &grid.nodes;
    let traj = integrate_ivp(&spec)?;
    let qbar = traj.profile(grid, 0, 1)?;
    let n = grid.len();
    let mut third = Vec::with_capacity(n);
    let (mut qv, mut qd, mut qs) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let r = grid.nodes[i];
        let (p, dp) = (qbar.values[i], qbar.derivs[i]);
        let ddp = qbar.second_at(i);
        let dddp = steady_third(d, r, p, dp, ddp);
        third.push(dddp);
        qv.push(2.0 * d * p + 2.0 * r * dp);
        qd.push((2.0 * d + 2.0) * dp + 2.0 * r * ddp);
        qs.push((2.0 * d + 4.0) * ddp + 2.0 * r * dddp);
    }
    let q = RadialProfile::new(grid.clone(), qv, qd)?.with_second(qs)?;
    Ok(SteadyPair { qbar, q, dim, qbar_third: third })
}

/// Steady pair on the default graded grid [1e-6, r_max].
pub fn solve_steady(dim: Dimension, r_max: f64, tol: f64) -> Result<SteadyPair> {
    if r_max < 30.0 {
        return Err(Error::Parameter(format!("steady r_max = {r_max} must be at least 30")));
    }
    if !(tol > 0.0 && tol <= 1e-9) {
        return Err(Error::Parameter(format!("steady tolerance {tol:e} must lie in (0, 1e-9]")));
    }
    let grid = make_graded_grid(STEADY_R_MIN, r_max, 601, (r_max.log10() * 150.0).ceil() as usize + 1)?;
    solve_steady_on(dim, &grid, tol)
}

/// Φ = (1/2r^d) ∫₀ʳ U s^{d−1} ds with Φ' = U/(2r) − dΦ/r.
pub fn mass_transform(u: &RadialProfile, dim: Dimension) -> Result<RadialProfile> {
    let d = dim.df();
    let m = cumulative_integral(u, dim.d() as i32 - 1)?;
    let n = u.grid.len();
    let (mut v, mut dv, mut s) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let r = u.grid.nodes[i];
        let phi = m.values[i] / (2.0 * r.powf(d));
        let dphi = u.values[i] / (2.0 * r) - d * phi / r;
        let ddphi = u.derivs[i] / (2.0 * r) - u.values[i] / (2.0 * r * r) - d * dphi / r + d * phi / (r * r);
        v.push(phi);
        dv.push(dphi);
        s.push(ddphi);
    }
    RadialProfile::new(u.grid.clone(), v, dv)?.with_second(s)
}

/// U = 2dΦ + 2rΦ' pointwise.
pub fn mass_transform_inverse(phi: &RadialProfile, dim: Dimension) -> RadialProfile {
    let d = dim.df();
    let n = phi.grid.len();
    let (mut v, mut dv) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let r = phi.grid.nodes[i];
        v.push(2.0 * d * phi.values[i] + 2.0 * r * phi.derivs[i]);
        dv.push((2.0 * d + 2.0) * phi.derivs[i] + 2.0 * r * phi.second_at(i));
    }
    RadialProfile { grid: phi.grid.clone(), values: v, derivs: dv, second: None }
}

/// What to subtract from a profile before fitting its oscillation.
pub enum Reference<'a> {
    Zero,
    Profile(&'a RadialProfile),
    Closed(&'a dyn Fn(f64) -> f64),
}

impl Reference<'_> {
    fn at(&self, r: f64) -> Result<f64> {
        match self {
            Reference::Zero => Ok(0.0),
            Reference::Profile(p) => p.value(r),
            Reference::Closed(f) => Ok(f(r)),
        }
    }
}

/// c·sin(ω log r + φ)/r^p fitted on a window.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OscillationFit {
    pub amplitude: f64,
    pub phase: f64,
    pub omega: f64,
    pub p: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    pub rms: f64,
    /// Number of periods covered by the window in log r.
    pub periods: f64,
}

impl OscillationFit {
    pub fn eval(&self, r: f64) -> f64 {
        self.amplitude * (self.omega * r.ln() + self.phase).sin() / r.powf(self.p)
    }
}

const FIT_SAMPLES: usize = 600;

struct Samples {
    logs: Vec<f64>,
    raw: Vec<f64>,
}

fn sample(profile: &RadialProfile, reference: &Reference<'_>, lo: f64, hi: f64) -> Result<Samples> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Parameter(format!("fit window [{lo}, {hi}]")));
    }
    let rs = log_space(lo, hi, FIT_SAMPLES);
    let mut raw = Vec::with_capacity(rs.len());
    for &r in &rs {
        raw.push(profile.value(r)? - reference.at(r)?);
    }
    Ok(Samples { logs: rs.iter().map(|r| r.ln()).collect(), raw })
}

/// Least squares of y against {sin ωt, cos ωt}: (A, B, rms).
fn linear_fit(t: &[f64], y: &[f64], omega: f64) -> (f64, f64, f64) {
    let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        let (s, c) = (omega * ti).sin_cos();
        ss += s * s;
        sc += s * c;
        cc += c * c;
        ys += yi * s;
        yc += yi * c;
    }
    let det = ss * cc - sc * sc;
    let (a, b) = if det.abs() < 1e-300 { (0.0, 0.0) } else { ((ys * cc - yc * sc) / det, (yc * ss - ys * sc) / det) };
    let mut e = 0.0;
    for (&ti, &yi) in t.iter().zip(y) {
        let (s, c) = (omega * ti).sin_cos();
        e += (yi - a * s - b * c).powi(2);
    }
    (a, b, (e / t.len() as f64).sqrt())
}

/// Golden-section minimum of f on [a, b].
pub fn golden_min(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (a.abs() + b.abs()).max(1e-300) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Best ω in [0.8, 1.2]·omega_center by coarse scan plus golden refinement.
fn best_omega(t: &[f64], y: &[f64], omega_center: f64) -> f64 {
    let (lo, hi) = (0.8 * omega_center, 1.2 * omega_center);
    let n = 200;
    let step = (hi - lo) / n as f64;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=n {
        let w = lo + step * k as f64;
        let e = linear_fit(t, y, w).2;
        if e < best.0 {
            best = (e, w);
        }
    }
    let a = (best.1 - step).max(lo);
    let b = (best.1 + step).min(hi);
    golden_min(a, b, 1e-13, |w| linear_fit(t, y, w).2)
}

fn finish(t: &[f64], y: &[f64], omega: f64, p: f64, lo: f64, hi: f64) -> Result<OscillationFit> {
    let (a, b, rms) = linear_fit(t, y, omega);
    let amplitude = a.hypot(b);
    if !(amplitude >= 1e-12) {
        return Err(Error::DegenerateSignal(amplitude));
    }
    let phase = b.atan2(a).rem_euclid(2.0 * std::f64::consts::PI);
    if rms > 0.05 * amplitude {
        return Err(Error::FitQuality { rms, amplitude });
    }
    Ok(OscillationFit {
        amplitude,
        phase,
        omega,
        p,
        r_lo: lo,
        r_hi: hi,
        rms,
        periods: (hi / lo).ln() * omega / (2.0 * std::f64::consts::PI),
    })
}

/// Fit r^p·(profile − reference) ≈ c·sin(ω log r + φ) on [lo, hi] with ω free
/// in [0.8, 1.2]·omega_center.
pub fn fit_oscillation(
    profile: &RadialProfile,
    reference: Reference<'_>,
    p: f64,
    window: (f64, f64),
    omega_center: f64,
) -> Result<OscillationFit> {
    let (lo, hi) = window;
    let s = sample(profile, &reference, lo, hi)?;
    let y: Vec<f64> = s.logs.iter().zip(&s.raw).map(|(t, v)| v * (p * t).exp()).collect();
    if y.iter().all(|v| v.abs() < 1e-300) {
        return Err(Error::DegenerateSignal(0.0));
    }
    let w = best_omega(&s.logs, &y, omega_center);
    finish(&s.logs, &y, w, p, lo, hi)
}

/// As `fit_oscillation` with the decay exponent also free, searched in
/// [p_center − 1, p_center + 1] by minimizing the relative rms.
pub fn fit_oscillation_free_decay(
    profile: &RadialProfile,
    reference: Reference<'_>,
    p_center: f64,
    window: (f64, f64),
    omega_center: f64,
) -> Result<OscillationFit> {
    let (lo, hi) = window;
    let s = sample(profile, &reference, lo, hi)?;
    let weighted = |p: f64| -> Vec<f64> { s.logs.iter().zip(&s.raw).map(|(t, v)| v * (p * t).exp()).collect() };
    let rel = |p: f64| -> f64 {
        let y = weighted(p);
        let w = best_omega(&s.logs, &y, omega_center);
        let (a, b, rms) = linear_fit(&s.logs, &y, w);
        rms / a.hypot(b).max(1e-300)
    };
    let p = golden_min(p_center - 1.0, p_center + 1.0, 1e-10, rel);
    let y = weighted(p);
    let w = best_omega(&s.logs, &y, omega_center);
    finish(&s.logs, &y, w, p, lo, hi)
}

/// Steady tail fits reported by the pipeline: Q̄ − Φ* and Q − 2(d−2)/r², both
/// with the decay exponent fixed at (d+2)/2.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyTailFits {
    pub qbar: OscillationFit,
    pub q: OscillationFit,
}

pub fn steady_tail_fits(pair: &SteadyPair, window: (f64, f64)) -> Result<SteadyTailFits> {
    let dim = pair.dim;
    let star = |r: f64| 1.0 / (r * r);
    let qstar = |r: f64| 2.0 * (dim.df() - 2.0) / (r * r);
    Ok(SteadyTailFits {
        qbar: fit_oscillation(&pair.qbar, Reference::Closed(&star), dim.decay(), window, dim.omega())?,
        q: fit_oscillation(&pair.q, Reference::Closed(&qstar), dim.decay(), window, dim.omega())?,
    })
}
