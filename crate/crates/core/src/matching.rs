//! Matching interior and exterior solutions at r₀, locating the discrete
//! scales μ_n and assembling the profiles U_n.
//!
//! For a central value a the interior shot Φ_int[a] is fixed; the exterior
//! amplitude ε(a) is chosen so that values agree at r₀, and the remaining
//! derivative mismatch 𝓕(a) = Φ_ext'(r₀) − Φ_int'(r₀) is the scalar whose
//! zeros give the profiles.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::equation::{max_nonlocal_residual, max_phi_residual, phi_third, u_from_phi, Explicit};
use crate::error::{Error, Result};
use crate::exterior::{exterior_boundary_on_steps, exterior_steps, shoot_exterior, EXTERIOR_R};
use crate::interior::{a_of_lambda, interior_boundary, lambda_of_a, shoot_interior};
use crate::linear_ops::{fundamental_u1, node_exact_pair, tau_grid, u1_origin_fit};
use crate::radial::{RadialGrid, RadialProfile};
use crate::steady::{
    fit_oscillation, mass_transform, mass_transform_inverse, solve_steady, Dimension, OscillationFit, Reference,
    SteadyPair,
};

pub const DEFAULT_R0: f64 = 0.05;
pub const SAMPLES_PER_PERIOD: f64 = 40.0;
/// Radii used by the r₀-stability diagnostic.
pub const R0_SET: [f64; 3] = [0.03, 0.05, 0.08];

const SECANT_MAX: usize = 60;
const MAX_EPS_STEP: f64 = 0.25;
const C1_GAP_MAX: f64 = 1e-8;
const REFINED_MISMATCH: f64 = 1e-8;
const TAIL_WINDOW: (f64, f64) = (100.0, 5000.0);

/// Tolerances of a matching run: `ode` for the steady state and fundamental
/// solutions, `matching` for the ε-solve residual (relative to Φ*(r₀)) and the
/// relative λ-width of refined brackets.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MatchTolerances {
    pub ode: f64,
    pub matching: f64,
}

impl Default for MatchTolerances {
    fn default() -> Self {
        MatchTolerances { ode: 1e-12, matching: 1e-12 }
    }
}

/// Closed-form leading behaviour of the derivative mismatch,
/// 𝓕 ≈ c₁c₇ω λ^{k−2} sin(−ω log λ + c₈ − c₂) / (u₁(r₀) r₀^{2k+1}), k = (d+2)/2.
#[derive(Debug, Clone, Serialize)]
pub struct Predictor {
    pub c1: f64,
    pub c2: f64,
    /// Tail constants of Q̄ − Φ* (named c₇, c₈ in the mismatch expansion and
    /// c₅, c₆ in the steady tail lemma).
    pub c7: f64,
    pub c8: f64,
    /// Tail fit of ΛQ̄, kept separately because it shares the (c₇, c₈) names.
    pub lambda_qbar_fit: OscillationFit,
    pub omega: f64,
    pub k: f64,
    pub u1_r0: f64,
    pub r0: f64,
}

impl Predictor {
    pub fn amplitude(&self, lambda: f64) -> f64 {
        (self.c1 * self.c7 * self.omega * lambda.powf(self.k - 2.0) / (self.u1_r0 * self.r0.powf(2.0 * self.k + 1.0))).abs()
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let pre = self.c1 * self.c7 * self.omega * lambda.powf(self.k - 2.0) / (self.u1_r0 * self.r0.powf(2.0 * self.k + 1.0));
        pre * (-self.omega * lambda.ln() + self.c8 - self.c2).sin()
    }

    /// Predicted zeros in (lam_lo, lam_hi), decreasing.
    pub fn zeros(&self, lam_lo: f64, lam_hi: f64) -> Vec<f64> {
        // −ω log λ + c₈ − c₂ = jπ
        let t = |lam: f64| (-self.omega * lam.ln() + self.c8 - self.c2) / PI;
        let (j0, j1) = (t(lam_hi).ceil() as i64, t(lam_lo).floor() as i64);
        (j0..=j1).map(|j| ((self.c8 - self.c2 - j as f64 * PI) / self.omega).exp()).collect()
    }
}

/// Fixed data for matching at one radius: dimension, r₀, u₁(r₀), and the
/// predictor constants.
#[derive(Debug, Clone, Serialize)]
pub struct MatchContext {
    pub dim: Dimension,
    pub r0: f64,
    pub u1_r0: f64,
    pub predictor: Predictor,
    pub tol: MatchTolerances,
    #[serde(skip)]
    pub steady: SteadyPair,
}

impl MatchContext {
    pub fn new(dim: Dimension, r0: f64) -> Result<Self> {
        Self::with_tolerances(dim, r0, MatchTolerances::default())
    }

    pub fn with_tolerances(dim: Dimension, r0: f64, tol: MatchTolerances) -> Result<Self> {
        if !(r0 > 0.0 && r0 < 1.0) {
            return Err(Error::Parameter(format!("matching radius r0 = {r0} must lie in (0, 1)")));
        }
        if !(tol.ode > 0.0 && tol.matching > 0.0) {
            return Err(Error::Parameter("tolerances must be positive".into()));
        }

        let u1 = fundamental_u1(dim, &tau_grid(r0, EXTERIOR_R)?, EXTERIOR_R, tol.ode)?;
        let u1_r0 = u1.profile.values[0];
        let (origin, _) = u1_origin_fit(dim, tol.ode)?;
        let steady = solve_steady(dim, 1e4, tol.ode)?;
        let star = |r: f64| 1.0 / (r * r);
        let tail = fit_oscillation(&steady.qbar, Reference::Closed(&star), dim.decay(), TAIL_WINDOW, dim.omega())?;
        let lq = lambda_qbar_profile(&steady)?;
        let lambda_qbar_fit = fit_oscillation(&lq, Reference::Zero, dim.decay(), TAIL_WINDOW, dim.omega())?;
        let predictor = Predictor {
            c1: origin.amplitude,
            c2: origin.phase,
            c7: tail.amplitude,
            c8: tail.phase,
            lambda_qbar_fit,
            omega: dim.omega(),
            k: dim.decay(),
            u1_r0,
            r0,
        };
        Ok(Self { dim, r0, u1_r0, predictor, tol, steady })
    }
}

fn lambda_qbar_profile(pair: &SteadyPair) -> Result<RadialProfile> {
    let n = pair.qbar.grid.len();
    let (mut v, mut dv) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let (a, b, _) = pair.lambda_qbar_at(pair.qbar.grid.nodes[i])?;
        v.push(a);
        dv.push(b);
    }
    RadialProfile::new(pair.qbar.grid.clone(), v, dv)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MatchPoint {
    pub a: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub value_gap: f64,
    /// 𝓕 = Φ_ext'(r₀) − Φ_int'(r₀)
    pub deriv_mismatch: f64,
    pub secant_iterations: usize,
}

/// Solves Φ_ext[ε](r₀) = Φ_int[a](r₀) for ε by secant iteration from the
/// leading-order guess (Φ_int(r₀) − Φ*(r₀))/u₁(r₀).
pub fn solve_eps(ctx: &MatchContext, a: f64) -> Result<MatchPoint> {
    let (pi, dpi) = interior_boundary(ctx.dim, a, ctx.r0)?;
    solve_eps_against(ctx, a, pi, dpi)
}

/// ε-solve against given interior boundary data. All exterior shots reuse the
/// step sequence of the first one, so the residual is smooth in ε.
pub fn solve_eps_against(ctx: &MatchContext, a: f64, pi: f64, dpi: f64) -> Result<MatchPoint> {
    let (dim, r0) = (ctx.dim, ctx.r0);
    let star = 1.0 / (r0 * r0);
    let fail = |reason: String| Error::Matching { a, reason };
    let mut e0 = (pi - star) / ctx.u1_r0;
    let steps = exterior_steps(dim, e0, r0, EXTERIOR_R)
        .map_err(|err| fail(format!("exterior shoot at the initial guess: {err}")))?;
    let ext = |e: f64| exterior_boundary_on_steps(dim, e, &steps);
    let b0 = ext(e0).map_err(|err| fail(err.to_string()))?;
    let mut f0 = b0.0 - pi;
    if f0.abs() < ctx.tol.matching * star {
        return Ok(point(a, dim, e0, b0, pi, dpi, 0));
    }
    let mut e1 = e0 + (1e-3 * e0.abs()).max(1e-6 * star / ctx.u1_r0.abs());
    let mut b1 = ext(e1).map_err(|err| fail(err.to_string()))?;
    let mut f1 = b1.0 - pi;
    for it in 1..=SECANT_MAX {
        if f1.abs() < ctx.tol.matching * star {
            return Ok(point(a, dim, e1, b1, pi, dpi, it));
        }
        let slope = (f1 - f0) / (e1 - e0);
        if !(slope.is_finite() && slope != 0.0) {
            return Err(fail("secant slope vanished".into()));
        }
        let mut step = (-f1 / slope).clamp(-MAX_EPS_STEP, MAX_EPS_STEP);
        let mut next = None;
        for _ in 0..12 {
            if let Ok(b) = ext(e1 + step) {
                next = Some(b);
                break;
            }
            step *= 0.5;
        }
        let b2 = next.ok_or_else(|| fail(format!("exterior shoot fails near eps = {e1:e}")))?;
        (e0, f0) = (e1, f1);
        e1 += step;
        b1 = b2;
        f1 = b1.0 - pi;
    }
    Err(fail(format!("secant did not converge; residual {:e}", f1.abs() / star)))
}

fn point(a: f64, dim: Dimension, eps: f64, ext: (f64, f64), pi: f64, dpi: f64, it: usize) -> MatchPoint {
    MatchPoint {
        a,
        lambda: lambda_of_a(dim, a),
        epsilon: eps,
        value_gap: (ext.0 - pi).abs(),
        deriv_mismatch: ext.1 - dpi,
        secant_iterations: it,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bracket {
    /// Larger-λ end.
    pub upper: MatchPoint,
    /// Smaller-λ end.
    pub lower: MatchPoint,
    /// Fraction of samples within half a period on each side of the bracket
    /// whose sign agrees with the predictor (minimum over the two sides).
    pub agreement: f64,
    pub validated: bool,
}

impl Bracket {
    pub fn log_lambda(&self) -> f64 {
        0.5 * (self.upper.lambda.ln() + self.lower.lambda.ln())
    }

    /// +1 when 𝓕 goes from negative to positive as λ decreases.
    pub fn direction(&self) -> i8 {
        if self.lower.deriv_mismatch > 0.0 { 1 } else { -1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchScan {
    pub r0: f64,
    pub d: u32,
    pub points: Vec<MatchPoint>,
    /// Predictor value at each sample.
    pub predicted: Vec<f64>,
    /// Central values where the ε-solve failed.
    pub failed: Vec<f64>,
    pub brackets: Vec<Bracket>,
    /// 2π/ω in log λ.
    pub period: f64,
    pub predicted_zeros: Vec<f64>,
}

impl MatchScan {
    /// Validated brackets with λ below λ₀ = r₀, in decreasing λ; index n = 1 first.
    pub fn indexed(&self) -> Vec<Bracket> {
        self.brackets.iter().filter(|b| b.validated && b.upper.lambda <= self.r0).copied().collect()
    }

    /// Distances in log λ between consecutive sign changes.
    pub fn consecutive_spacings(&self) -> Vec<f64> {
        self.brackets.windows(2).map(|w| w[0].log_lambda() - w[1].log_lambda()).collect()
    }

    /// Distances in log λ between sign changes of the same direction.
    pub fn period_spacings(&self) -> Vec<f64> {
        self.brackets.windows(3).map(|w| w[0].log_lambda() - w[2].log_lambda()).collect()
    }

    pub fn alternates(&self) -> bool {
        self.brackets.windows(2).all(|w| w[0].direction() != w[1].direction())
    }

    /// max over the samples of |𝓕|/λ^{k−2}.
    pub fn scaled_amplitude(&self, dim: Dimension) -> f64 {
        let e = dim.decay() - 2.0;
        self.points.iter().map(|p| p.deriv_mismatch.abs() / p.lambda.powf(e)).fold(0.0, f64::max)
    }
}

/// Samples 𝓕 on a log-uniform grid of `n_samples` central values in
/// [a_lo, a_hi], detects sign changes and validates them against the predictor.
pub fn scan_mismatch(ctx: &MatchContext, a_range: (f64, f64), n_samples: usize) -> Result<MatchScan> {
    let (a_lo, a_hi) = a_range;
    let period = 2.0 * PI / ctx.dim.omega();
    if !(a_lo > 0.0 && a_hi > a_lo) {
        return Err(Error::Parameter(format!("invalid central-value range [{a_lo:e}, {a_hi:e}]")));
    }
    if (a_hi / a_lo).ln() < 2.0 * period * 2.0 {
        return Err(Error::Parameter(format!(
            "central-value range spans {:.2} periods; at least 2 are required",
            0.5 * (a_hi / a_lo).ln() / period
        )));
    }
    if n_samples < 2 {
        return Err(Error::Parameter("at least two samples are required".into()));
    }
    let step = (a_hi / a_lo).ln() / (n_samples - 1) as f64;
    let a_values: Vec<f64> = (0..n_samples).map(|i| a_lo * (i as f64 * step).exp()).collect();
    let results: Vec<(f64, Option<MatchPoint>)> = a_values.par_iter().map(|&a| (a, solve_eps(ctx, a).ok())).collect();
    let mut points = Vec::new();
    let mut segment = Vec::new();
    let mut failed = Vec::new();
    let mut seg = 0usize;
    for (a, p) in results {
        match p {
            Some(p) => {
                points.push(p);
                segment.push(seg);
            }
            None => {
                failed.push(a);
                seg += 1;
            }
        }
    }
    // Increasing a means decreasing λ.
    let predicted: Vec<f64> = points.iter().map(|p| ctx.predictor.eval(p.lambda)).collect();
    let mut brackets = Vec::new();
    for i in 1..points.len() {
        let (u, l) = (points[i - 1], points[i]);
        if segment[i - 1] == segment[i] && u.deriv_mismatch * l.deriv_mismatch < 0.0 {
            let agreement = lobe_agreement(&points, &predicted, &segment, i, 0.5 * period);
            brackets.push(Bracket { upper: u, lower: l, agreement, validated: agreement >= 2.0 / 3.0 });
        }
    }
    let lam_hi = lambda_of_a(ctx.dim, a_lo);
    let lam_lo = lambda_of_a(ctx.dim, a_hi);
    let predicted_zeros = ctx.predictor.zeros(lam_lo, lam_hi);
    if brackets.is_empty() {
        return Err(Error::ScanRange { expected: predicted_zeros.iter().map(|z| z.ln()).collect() });
    }
    Ok(MatchScan { r0: ctx.r0, d: ctx.dim.d(), points, predicted, failed, brackets, period, predicted_zeros })
}

/// Sign agreement between samples and predictor within half a period above
/// and below the bracket ending at sample `i`, restricted to the run of
/// successful ε-solves containing the bracket.
fn lobe_agreement(points: &[MatchPoint], predicted: &[f64], segment: &[usize], i: usize, half: f64) -> f64 {
    let (up, low) = (points[i - 1].lambda.ln(), points[i].lambda.ln());
    let mid = 0.5 * (up + low);
    let side = |range: &mut dyn Iterator<Item = usize>| -> f64 {
        let (mut n, mut ok) = (0usize, 0usize);
        for j in range {
            if segment[j] != segment[i] || (points[j].lambda.ln() - mid).abs() > half {
                break;
            }
            n += 1;
            if points[j].deriv_mismatch.signum() == predicted[j].signum() {
                ok += 1;
            }
        }
        if n == 0 { 0.0 } else { ok as f64 / n as f64 }
    };
    let above = side(&mut (0..i).rev());
    let below = side(&mut (i..points.len()));
    above.min(below)
}

/// Bisection in log a until the relative λ-width of the bracket is below the
/// matching tolerance.
pub fn refine_mu(ctx: &MatchContext, bracket: &Bracket) -> Result<MatchPoint> {
    let (mut hi, mut lo) = (bracket.upper, bracket.lower);
    if hi.deriv_mismatch * lo.deriv_mismatch >= 0.0 {
        return Err(Error::Refinement(hi.lambda));
    }
    // λ ∝ a^{-1/2}, so the λ-width is half the log-a width.
    while 0.5 * (lo.a / hi.a).ln() > ctx.tol.matching {
        let am = (hi.a * lo.a).sqrt();
        let m = solve_eps(ctx, am).map_err(|_| Error::Refinement(lambda_of_a(ctx.dim, am)))?;
        if m.deriv_mismatch == 0.0 {
            return Ok(m);
        }
        if m.deriv_mismatch * hi.deriv_mismatch < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let best = if hi.deriv_mismatch.abs() <= lo.deriv_mismatch.abs() { hi } else { lo };
    // a jump between ε-branches also flips the sign but never closes; the
    // floor is the round-off level of Φ'(r₀)
    let floor = REFINED_MISMATCH * ctx.predictor.amplitude(best.lambda) + 1e-13 * 2.0 / ctx.r0.powi(3);
    if best.deriv_mismatch.abs() > floor {
        return Err(Error::Refinement(best.lambda));
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct AssemblyReport {
    /// |Φ_int(r₀) − Φ_ext(r₀)| / |Φ_ext(r₀)|
    pub value_gap: f64,
    /// |Φ_int'(r₀) − Φ_ext'(r₀)| / |Φ_ext'(r₀)|
    pub deriv_gap: f64,
    /// Scaled nonlocal residual of U on [r_min, R].
    pub nonlocal_residual: f64,
    /// Scaled reduced-mass residual of Φ on [r_min, R].
    pub phi_residual: f64,
    /// max |mass_transform(U) − Φ| / |Φ|.
    pub transform_gap: f64,
    /// sup_{r≤r₀} |U_n − μ_n^{-2} Q(r/μ_n)|
    pub interior_metric: f64,
    /// sup_{r≥r₀} (1+r²)|U_n − 2(d−2)/r²| on [r₀, R]
    pub exterior_metric: f64,
    /// |𝓕| / (λ^{k−2}-scaled predictor amplitude)
    pub scaled_mismatch: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfSimilarProfile {
    pub n: usize,
    pub mu: f64,
    pub a: f64,
    pub eps: f64,
    pub r0: f64,
    pub dim: Dimension,
    pub phi: RadialProfile,
    pub u: RadialProfile,
    pub report: AssemblyReport,
}

impl SelfSimilarProfile {
    pub fn r_max(&self) -> f64 {
        self.u.r_hi()
    }
}

/// Stitches Φ_int on [r_min, r₀] and Φ_ext on [r₀, R] and verifies the result.
pub fn assemble_profile(ctx: &MatchContext, n: usize, m: &MatchPoint) -> Result<SelfSimilarProfile> {
    let (dim, r0) = (ctx.dim, ctx.r0);
    let int = shoot_interior(m.a, r0, dim)?;
    let ext = shoot_exterior(m.epsilon, r0, dim, EXTERIOR_R)?;
    let (pi, dpi) = int.boundary;
    let (pe, dpe) = ext.boundary;
    let value_gap = (pi - pe).abs() / pe.abs();
    let deriv_gap = (dpi - dpe).abs() / dpe.abs();
    if value_gap.max(deriv_gap) > C1_GAP_MAX {
        return Err(Error::Assembly(value_gap.max(deriv_gap)));
    }
    let ip = &int.profile;
    let ep = &ext.profile;
    let mut nodes = ip.grid.nodes.clone();
    let mut values = ip.values.clone();
    let mut derivs = ip.derivs.clone();
    let mut second: Vec<f64> = (0..ip.grid.len()).map(|i| ip.second_at(i)).collect();
    for i in 1..ep.grid.len() {
        nodes.push(ep.grid.nodes[i]);
        values.push(ep.values[i]);
        derivs.push(ep.derivs[i]);
        second.push(ep.second_at(i));
    }
    let grid = RadialGrid::from_nodes(nodes)?;
    let phi = RadialProfile::new(grid.clone(), values, derivs)?.with_second(second)?;
    let u = u_profile(&phi, dim)?;
    let (lo, hi) = (phi.r_lo(), phi.r_hi());
    let nonlocal_residual = max_nonlocal_residual(dim, &u, lo, hi)?;
    let phi_residual = max_phi_residual(dim, &phi, lo, hi, true);
    let back = mass_transform(&u, dim)?;
    let transform_gap = back
        .values
        .iter()
        .zip(&phi.values)
        .map(|(b, p)| (b - p).abs() / p.abs().max(1e-300))
        .fold(0.0, f64::max);

    let mu = m.lambda;
    let ni = ip.grid.len();
    let z = RadialGrid::from_nodes(ip.grid.nodes.iter().map(|r| r / mu).collect())?;
    let q = node_exact_pair(&ctx.steady, &z, ctx.tol.ode)?.q;
    let mut interior_metric: f64 = 0.0;
    for i in 0..ni {
        interior_metric = interior_metric.max((u.values[i] - q.values[i] / (mu * mu)).abs());
    }
    let qs = 2.0 * (dim.df() - 2.0);
    let mut exterior_metric: f64 = 0.0;
    for (i, &r) in grid.nodes.iter().enumerate().skip(ni - 1) {
        exterior_metric = exterior_metric.max((1.0 + r * r) * (u.values[i] - qs / (r * r)).abs());
    }
    let report = AssemblyReport {
        value_gap,
        deriv_gap,
        nonlocal_residual,
        phi_residual,
        transform_gap,
        interior_metric,
        exterior_metric,
        scaled_mismatch: m.deriv_mismatch.abs() / ctx.predictor.amplitude(mu),
    };
    Ok(SelfSimilarProfile { n, mu, a: m.a, eps: m.epsilon, r0, dim, phi, u, report })
}

/// U = 2dΦ + 2rΦ' with U'' from Φ''' of the reduced-mass equation. Near the
/// origin U'' sits far below the accuracy of U itself, so it is not
/// reconstructed numerically.
fn u_profile(phi: &RadialProfile, dim: Dimension) -> Result<RadialProfile> {
    let d = dim.df();
    let base = mass_transform_inverse(phi, dim);
    let second = (0..phi.grid.len())
        .map(|i| {
            let r = phi.grid.nodes[i];
            let (p, dp, ddp) = (phi.values[i], phi.derivs[i], phi.second_at(i));
            u_from_phi(d, r, [p, dp, ddp, phi_third(d, r, p, dp, ddp, true)]).2
        })
        .collect();
    base.with_second(second)
}

/// Central-value range from λ₀·e^{π/ω} down to half a period below the
/// `count`-th predicted zero under λ₀ = r₀, spanning at least two periods.
pub fn default_a_range(ctx: &MatchContext, count: usize) -> (f64, f64) {
    let half = PI / ctx.dim.omega();
    let lam_hi = ctx.r0 * half.exp();
    let mut lam_lo = ctx.r0 * (-half * (count as f64 + 1.0)).exp();
    let zeros = ctx.predictor.zeros(1e-300, ctx.r0);
    if zeros.len() >= count && count > 0 {
        lam_lo = lam_lo.min(zeros[count - 1] * (-half).exp());
    }
    lam_lo = lam_lo.min(lam_hi * (-4.0 * half).exp() * 0.999);
    (a_of_lambda(ctx.dim, lam_hi), a_of_lambda(ctx.dim, lam_lo))
}

pub fn default_samples(ctx: &MatchContext, a_range: (f64, f64)) -> usize {
    let period = 2.0 * PI / ctx.dim.omega();
    let span = 0.5 * (a_range.1 / a_range.0).ln();
    (SAMPLES_PER_PERIOD * span / period).ceil() as usize + 1
}

/// Smallest scale the scan extends to.
pub const LAMBDA_FLOOR: f64 = 1e-8;

/// Scans from the default range and extends it by one period at a time until
/// `count` validated roots lie below λ₀ or λ reaches `LAMBDA_FLOOR`.
pub fn scan_for_roots(ctx: &MatchContext, count: usize) -> Result<MatchScan> {
    let mut range = default_a_range(ctx, count);
    let stretch = (4.0 * PI / ctx.dim.omega()).exp();
    loop {
        let scan = scan_mismatch(ctx, range, default_samples(ctx, range));
        let enough = matches!(&scan, Ok(s) if s.indexed().len() >= count);
        let next = range.1 * stretch;
        if enough || lambda_of_a(ctx.dim, next) < LAMBDA_FLOOR {
            let scan = scan?;
            if scan.indexed().len() < count {
                return Err(Error::ScanRange { expected: scan.predicted_zeros.iter().map(|z| z.ln()).collect() });
            }
            return Ok(scan);
        }
        range.1 = next;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSet {
    pub context: MatchContext,
    pub scan: MatchScan,
    pub roots: Vec<MatchPoint>,
    pub profiles: Vec<SelfSimilarProfile>,
}

/// Scan, index, refine and assemble the first `count` profiles.
pub fn find_profiles(dim: Dimension, r0: f64, count: usize) -> Result<ProfileSet> {
    find_profiles_in(MatchContext::new(dim, r0)?, count, None)
}

/// Central-value range covering `periods` oscillation periods of 𝓕 below
/// λ = r₀e^{π/ω}.
pub fn period_a_range(ctx: &MatchContext, periods: f64) -> (f64, f64) {
    let w = ctx.dim.omega();
    let lam_hi = ctx.r0 * (PI / w).exp();
    let lam_lo = lam_hi * (-2.0 * PI * periods / w).exp();
    (a_of_lambda(ctx.dim, lam_hi), a_of_lambda(ctx.dim, lam_lo))
}

/// As `find_profiles` with a prepared context. A fixed scan length in periods
/// replaces the automatic extension of `scan_for_roots`.
pub fn find_profiles_in(ctx: MatchContext, count: usize, periods: Option<f64>) -> Result<ProfileSet> {
    if count == 0 {
        return Err(Error::Parameter("at least one profile must be requested".into()));
    }
    let scan = match periods {
        Some(p) => {
            let range = period_a_range(&ctx, p);
            let scan = scan_mismatch(&ctx, range, default_samples(&ctx, range))?;
            if scan.indexed().len() < count {
                return Err(Error::ScanRange { expected: scan.predicted_zeros.iter().map(|z| z.ln()).collect() });
            }
            scan
        }
        None => scan_for_roots(&ctx, count)?,
    };
    let indexed = scan.indexed();
    let roots: Vec<MatchPoint> = indexed[..count].par_iter().map(|b| refine_mu(&ctx, b)).collect::<Result<_>>()?;
    let profiles = roots
        .par_iter()
        .enumerate()
        .map(|(i, m)| assemble_profile(&ctx, i + 1, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProfileSet { context: ctx, scan, roots, profiles })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub r0: Vec<f64>,
    /// mu[j][n−1] for radius r0[j].
    pub mu: Vec<Vec<f64>>,
    /// max over n and radius pairs of |μ_n(r₀) − μ_n(r₀')| / μ_n.
    pub max_rel_spread: f64,
}

/// Re-runs matching at each radius and compares μ_n index by index.
pub fn r0_stability(dim: Dimension, radii: &[f64], count: usize) -> Result<StabilityReport> {
    let mu: Vec<Vec<f64>> = radii
        .iter()
        .map(|&r0| {
            let ctx = MatchContext::new(dim, r0)?;
            scan_for_roots(&ctx, count)?.indexed()[..count].par_iter().map(|b| refine_mu(&ctx, b).map(|m| m.lambda)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut spread: f64 = 0.0;
    for n in 0..count {
        let vals: Vec<f64> = mu.iter().map(|v| v[n]).collect();
        let (mn, mx) = vals.iter().fold((f64::INFINITY, 0f64), |(a, b), &v| (a.min(v), b.max(v)));
        spread = spread.max((mx - mn) / mn);
    }
    Ok(StabilityReport { r0: radii.to_vec(), mu, max_rel_spread: spread })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplicitEntry {
    pub name: &'static str,
    /// Scaled nonlocal residual of Ū.
    pub nonlocal: f64,
    /// Scaled reduced-mass residual of Φ̄.
    pub phi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplicitReport {
    pub d: u32,
    pub entries: Vec<ExplicitEntry>,
}

impl ExplicitReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.nonlocal.max(e.phi)).fold(0.0, f64::max)
    }
}

/// Residuals of the four explicit solutions on [0.01, 30] at 200 nodes per decade.
pub fn verify_explicit(dim: Dimension) -> Result<ExplicitReport> {
    let d = dim.df();
    let grid = RadialGrid::per_decade(0.01, 30.0, 200.0)?;
    let mut entries = Vec::new();
    for e in Explicit::ALL {
        let phi = RadialProfile::from_fn(&grid, |r| {
            let p = e.phi(d, r);
            (p[0], p[1], p[2])
        });
        let u = RadialProfile::from_fn(&grid, |r| e.u(d, r));
        let nonlocal = max_nonlocal_residual(dim, &u, 0.01, 30.0)?;
        let phi_res = max_phi_residual(dim, &phi, 0.01, 30.0, true);
        entries.push(ExplicitEntry { name: e.name(), nonlocal, phi: phi_res });
    }
    Ok(ExplicitReport { d: dim.d(), entries })
}
