//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
//! Exits non-zero when any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ks_selfsim::evolution::{lp_distance, track, BlowupSolution, SIM_BETA, SIM_CELLS, SIM_R};
use ks_selfsim::exterior::{picard_exterior_with, picard_phi, shoot_exterior_on, EXTERIOR_R};
use ks_selfsim::kummer::u1_via_kummer;
use ks_selfsim::linear_ops::{
    fundamental_phi, fundamental_u1, identity_error, resolvent_psi, resolvent_s, resolvent_tau, tau_grid,
    u1_origin_fit, wronskian_check, ExteriorBasis, FundamentalKind, InteriorBasis, OperatorKind, WronskianPair,
    IDENTITY_WINDOW_LO,
};
use ks_selfsim::matching::{find_profiles, r0_stability, verify_explicit, ProfileSet, R0_SET};
use ks_selfsim::radial::{log_space, RadialGrid, RadialProfile};
use ks_selfsim::steady::{fit_oscillation, fit_oscillation_free_decay, solve_steady, Reference};
use ks_selfsim::{Dimension, Result};

// criterion 1
const EXPLICIT_RESIDUAL: f64 = 1e-8;
const EXPLICIT_SECS: u64 = 5;
// criterion 2
const TAIL_WINDOW: (f64, f64) = (5.0, 25.0);
const TAIL_OMEGA_REL: f64 = 0.01;
const TAIL_DECAY_REL: f64 = 0.03;
const TAIL_SECS: u64 = 10;
// criterion 3
const IDENTITY_REL: f64 = 1e-6;
const WRONSKIAN_REL: f64 = 1e-6;
const LINEAR_SECS: u64 = 30;
// criterion 4
const KUMMER_REL: f64 = 1e-5;
const ORIGIN_OMEGA_REL: f64 = 0.01;
// criterion 5
const R0: f64 = 0.05;
const RATIO_REL: f64 = 0.15;
const R0_SPREAD: f64 = 0.01;
const MATCH_SECS: u64 = 600;
// criterion 6
const C1_GAP: f64 = 1e-8;
const NONLOCAL_RESIDUAL: f64 = 1e-6;
// criterion 7
const PICARD_RATIO: f64 = 0.5;
const PICARD_SMALLNESS: f64 = 0.05;
const PICARD_MATCH_REL: f64 = 1e-5;
const PICARD_SWEEP: usize = 10;
const PICARD_CONSTANT_SPREAD: f64 = 10.0;
// criterion 8
const TYPE_ONE_REL: f64 = 1e-12;
const TRACKING_REL: f64 = 0.02;
const T_TRACK: f64 = 0.5;
const REFINEMENT_GAIN: f64 = 3.0;
const EVOLUTION_SECS: u64 = 300;
// criterion 9
const SPACING_REL: f64 = 0.1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(limit: Option<u64>, f: impl FnOnce() -> Result<Outcome>) -> Outcome {
    let t = Instant::now();
    let res = f();
    let el = t.elapsed();
    match res {
        Ok(o) => {
            let in_time = limit.is_none_or(|l| el <= Duration::from_secs(l));
            let lim = limit.map_or(String::new(), |l| format!(" (limit {l}s)"));
            outcome(o.pass && in_time, format!("{}; runtime {:.2}s{lim}", o.detail, el.as_secs_f64()))
        }
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn dim(d: u32) -> Dimension {
    Dimension::new(d).unwrap()
}

fn criterion_1() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for d in 3..=9 {
        let rep = verify_explicit(dim(d))?;
        for e in &rep.entries {
            // Ū₁ and Ū₃ in nonlocal form, Φ̄₂ and Φ̄₃ in reduced-mass form
            match e.name {
                "phi1" => worst = worst.max(e.nonlocal),
                "phi2" => worst = worst.max(e.phi),
                "phi3" => worst = worst.max(e.nonlocal).max(e.phi),
                _ => {}
            }
        }
    }
    Ok(outcome(worst < EXPLICIT_RESIDUAL, format!("max scaled residual {worst:.2e} over d = 3..9 (< {EXPLICIT_RESIDUAL:e})")))
}

fn criterion_2() -> Result<Outcome> {
    let d3 = dim(3);
    let pair = solve_steady(d3, 100.0, 1e-12)?;
    let star = |r: f64| 1.0 / (r * r);
    let fit = fit_oscillation(&pair.qbar, Reference::Closed(&star), d3.decay(), TAIL_WINDOW, d3.omega())?;
    let free = fit_oscillation_free_decay(&pair.qbar, Reference::Closed(&star), d3.decay(), TAIL_WINDOW, d3.omega())?;
    let w_err = (fit.omega / d3.omega() - 1.0).abs();
    let p_err = (free.p / 2.5 - 1.0).abs();
    Ok(outcome(
        w_err < TAIL_OMEGA_REL && p_err < TAIL_DECAY_REL,
        format!(
            "omega {:.5} vs {:.5} (rel {:.2e}, < {TAIL_OMEGA_REL}); decay {:.4} vs 2.5 (rel {:.2e}, < {TAIL_DECAY_REL})",
            fit.omega,
            d3.omega(),
            w_err,
            free.p,
            p_err
        ),
    ))
}

type Triple = (f64, f64, f64);

fn profile_of(grid: &RadialGrid, f: impl Fn(f64) -> Triple) -> RadialProfile {
    RadialProfile::from_fn(grid, f)
}

/// c(r)·r^{-k} with the smooth cutoff c = 1 − e^{−r⁸}.
fn cutoff_power(k: f64) -> impl Fn(f64) -> Triple {
    move |r: f64| {
        let e = (-r.powi(8)).exp();
        let (c, c1, c2) = (1.0 - e, 8.0 * r.powi(7) * e, (56.0 * r.powi(6) - 64.0 * r.powi(14)) * e);
        let p = r.powf(-k);
        (c * p, c1 * p - k * c * p / r, c2 * p - 2.0 * k * c1 * p / r + k * (k + 1.0) * c * p / (r * r))
    }
}

fn gauss(a: f64, c: f64) -> impl Fn(f64) -> Triple {
    // e^{−a(r−c)²}
    move |r: f64| {
        let x = r - c;
        let e = (-a * x * x).exp();
        (e, -2.0 * a * x * e, (4.0 * a * a * x * x - 2.0 * a) * e)
    }
}

fn r2_gauss(r: f64) -> Triple {
    let e = (-r * r).exp();
    (r * r * e, (2.0 * r - 2.0 * r.powi(3)) * e, (2.0 - 10.0 * r * r + 4.0 * r.powi(4)) * e)
}

fn rational(k: i32) -> impl Fn(f64) -> Triple {
    // (1 + r²)^{−k}
    move |r: f64| {
        let q = 1.0 + r * r;
        let kf = k as f64;
        (q.powi(-k), -2.0 * kf * r * q.powi(-k - 1), -2.0 * kf * q.powi(-k - 1) + 4.0 * kf * (kf + 1.0) * r * r * q.powi(-k - 2))
    }
}

fn shifted_cube(r: f64) -> Triple {
    let x = 1.0 + r;
    (x.powi(-3), -3.0 * x.powi(-4), 12.0 * x.powi(-5))
}

fn r_exp(r: f64) -> Triple {
    let e = (-r).exp();
    (r * e, (1.0 - r) * e, (r - 2.0) * e)
}

fn criterion_3() -> Result<Outcome> {
    let d3 = dim(3);
    let mut worst_id: f64 = 0.0;

    let tg = tau_grid(R0, EXTERIOR_R)?;
    let ext = ExteriorBasis::new(d3, &tg, 1e-12)?;
    let tau_tests: Vec<Box<dyn Fn(f64) -> Triple>> =
        vec![Box::new(gauss(1.0, 0.0)), Box::new(r2_gauss), Box::new(gauss(1.0, 2.0)), Box::new(rational(4)), Box::new(r_exp)];
    for f in &tau_tests {
        let f = profile_of(&tg, f);
        let t = resolvent_tau(&ext, &f)?;
        worst_id = worst_id.max(identity_error(OperatorKind::L(d3), &t, &f, IDENTITY_WINDOW_LO, EXTERIOR_R)?);
    }

    let pg = RadialGrid::per_decade(R0, 200.0, 800.0)?;
    let psi_tests: Vec<Box<dyn Fn(f64) -> Triple>> = vec![
        Box::new(cutoff_power(6.0)),
        Box::new(cutoff_power(7.0)),
        Box::new(cutoff_power(8.0)),
        Box::new(gauss(1.0, 1.0)),
        Box::new(rational(4)),
    ];
    for f in &psi_tests {
        let f = profile_of(&pg, f);
        let p = resolvent_psi(d3, &f)?;
        worst_id = worst_id.max(identity_error(OperatorKind::Hinf(d3), &p, &f, IDENTITY_WINDOW_LO, 200.0)?);
    }

    let pair = solve_steady(d3, 100.0, 1e-12)?;
    let sg = RadialGrid::per_decade(1e-6, 20.0, 400.0)?;
    let int = InteriorBasis::new(&pair, &sg, 1e-12)?;
    let s_tests: Vec<Box<dyn Fn(f64) -> Triple>> =
        vec![Box::new(shifted_cube), Box::new(gauss(1.0, 0.0)), Box::new(rational(1)), Box::new(r2_gauss), Box::new(r_exp)];
    for f in &s_tests {
        let f = profile_of(&sg, f);
        let s = resolvent_s(&int, &f)?;
        worst_id = worst_id.max(identity_error(OperatorKind::H(&pair), &s, &f, 1e-5, 20.0)?);
    }

    let phig = RadialGrid::per_decade(1e-3, 1e3, 100.0)?;
    let phi1 = fundamental_phi(d3, FundamentalKind::Phi1, &phig)?.profile;
    let phi2 = fundamental_phi(d3, FundamentalKind::Phi2, &phig)?.profile;
    let wr = [
        wronskian_check(&WronskianPair::U1U2 { u1: &ext.u1, v2: &ext.v2 }, d3, 2.0, 20.0)?,
        wronskian_check(&WronskianPair::Phi12 { phi1: &phi1, phi2: &phi2 }, d3, 1e-3, 1e3)?,
        wronskian_check(&WronskianPair::LambdaRho { lq: &int.lq, rho: &int.rho, weight: &int.weight }, d3, 0.01, 5.0)?,
    ];
    let worst_w = wr.iter().map(|w| w.max_rel_deviation).fold(0.0, f64::max);
    Ok(outcome(
        worst_id < IDENTITY_REL && worst_w < WRONSKIAN_REL,
        format!("resolvent identities max rel {worst_id:.2e} (< {IDENTITY_REL:e}); Wronskians max rel {worst_w:.2e} (< {WRONSKIAN_REL:e})"),
    ))
}

fn criterion_4() -> Result<Outcome> {
    let d3 = dim(3);
    let grid = RadialGrid::per_decade(2.0, 30.0, 400.0)?;
    let ode = fundamental_u1(d3, &grid, 30.0, 1e-12)?.profile;
    let mut worst: f64 = 0.0;
    for (i, &r) in grid.nodes.iter().enumerate().filter(|(_, &r)| r <= 10.0) {
        let k = u1_via_kummer(r)?;
        worst = worst.max((ode.values[i] - k.value).abs() / k.value.abs());
    }
    let (fit, _) = u1_origin_fit(d3, 1e-12)?;
    let w_err = (fit.omega / d3.omega() - 1.0).abs();
    Ok(outcome(
        worst < KUMMER_REL && w_err < ORIGIN_OMEGA_REL,
        format!("u1 ODE vs Kummer max rel {worst:.2e} on [2, 10] (< {KUMMER_REL:e}); origin frequency rel {w_err:.2e} (< {ORIGIN_OMEGA_REL})"),
    ))
}

fn criterion_5(set: &ProfileSet) -> Result<Outcome> {
    let target = (-2.0 * PI / 7f64.sqrt()).exp();
    let mu: Vec<f64> = set.roots.iter().map(|m| m.lambda).collect();
    let enough = mu.len() >= 3 && mu.windows(2).all(|w| w[1] < w[0]);
    let ratios: Vec<f64> = mu.windows(2).map(|w| w[1] / w[0]).collect();
    let ratio_ok = ratios.iter().all(|r| (r / target - 1.0).abs() < RATIO_REL);
    let stab = r0_stability(set.context.dim, &R0_SET, 3)?;
    Ok(outcome(
        enough && ratio_ok && stab.max_rel_spread < R0_SPREAD,
        format!(
            "mu = {:.6e}; ratios {:.4?} vs {target:.4} (within {RATIO_REL}); r0 spread {:.2e} (< {R0_SPREAD})",
            MuList(&mu),
            ratios,
            stab.max_rel_spread
        ),
    ))
}

struct MuList<'a>(&'a [f64]);

impl std::fmt::LowerExp for MuList<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:.6e}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Criterion-6 checks on an assembled set; also used by criterion 9.
fn profile_checks(set: &ProfileSet) -> (bool, String) {
    let gap = set.profiles.iter().map(|p| p.report.value_gap.max(p.report.deriv_gap)).fold(0.0, f64::max);
    let res = set.profiles.iter().map(|p| p.report.nonlocal_residual).fold(0.0, f64::max);
    let int: Vec<f64> = set.profiles.iter().map(|p| p.report.interior_metric).collect();
    let ext: Vec<f64> = set.profiles.iter().map(|p| p.report.exterior_metric).collect();
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let pass = gap < C1_GAP && res < NONLOCAL_RESIDUAL && dec(&int) && dec(&ext);
    (
        pass,
        format!(
            "C1 gap {gap:.2e} (< {C1_GAP:e}); nonlocal residual {res:.2e} (< {NONLOCAL_RESIDUAL:e}); \
             interior metric {int:.6?} decreasing: {}; exterior metric {ext:.4?} decreasing: {}",
            dec(&int),
            dec(&ext)
        ),
    )
}

fn criterion_6(set: &ProfileSet) -> Result<Outcome> {
    let (pass, detail) = profile_checks(set);
    Ok(outcome(pass, detail))
}

fn criterion_7() -> Result<Outcome> {
    let d3 = dim(3);
    let grid = tau_grid(R0, EXTERIOR_R)?;
    let basis = ExteriorBasis::new(d3, &grid, 1e-12)?;
    let eps_max = PICARD_SMALLNESS * R0.sqrt();
    let (mut worst_ratio, mut worst_match): (f64, f64) = (0.0, 0.0);
    let mut constants = Vec::new();
    for eps in log_space(eps_max / 100.0, eps_max, PICARD_SWEEP) {
        let (w, rep) = picard_exterior_with(eps, R0, &basis)?;
        worst_ratio = rep.ratios.iter().copied().fold(worst_ratio, f64::max);
        constants.push(rep.constant);
        let phi = picard_phi(eps, &basis, &w)?;
        let shot = shoot_exterior_on(eps, d3, &grid)?;
        for (i, &r) in grid.nodes.iter().enumerate().filter(|(_, &r)| r <= 5.0) {
            let _ = r;
            worst_match = worst_match.max(((phi.values[i] - shot.profile.values[i]) / shot.profile.values[i]).abs());
        }
    }
    let (lo, hi) = constants.iter().fold((f64::INFINITY, 0f64), |(a, b), &c| (a.min(c), b.max(c)));
    Ok(outcome(
        worst_ratio < PICARD_RATIO && worst_match < PICARD_MATCH_REL && hi / lo < PICARD_CONSTANT_SPREAD,
        format!(
            "eps r0^(-1/2) up to {PICARD_SMALLNESS}: increment ratio max {worst_ratio:.3} (< {PICARD_RATIO}); \
             Picard vs shooting {worst_match:.2e} (< {PICARD_MATCH_REL:e}); constant C in [{lo:.4}, {hi:.4}]"
        ),
    ))
}

fn criterion_8(set: &ProfileSet) -> Result<Outcome> {
    let sol = BlowupSolution::new(set.profiles[0].clone(), 1.0)?;
    let sup0 = sol.sup(0.0)?;
    let mut type_one: f64 = 0.0;
    for f in [0.5, 0.9] {
        type_one = type_one.max(((1.0 - f) * sol.sup(f)? / sup0 - 1.0).abs());
    }
    let l1: Vec<f64> = [0.9, 0.99, 0.999].iter().map(|&t| lp_distance(&sol, t, 1.0)).collect::<Result<_>>()?;
    let l1_dec = l1.windows(2).all(|w| w[1] < w[0]);
    let (fine, coarse) = rayon::join(
        || track(&sol, SIM_R, SIM_CELLS, SIM_BETA, T_TRACK, 100),
        || track(&sol, SIM_R, SIM_CELLS / 2, SIM_BETA, T_TRACK, 100),
    );
    let ((fine, _), (coarse, _)) = (fine?, coarse?);
    let reached = fine.completed(T_TRACK) && coarse.completed(T_TRACK);
    let tracking_ok = reached && fine.error < TRACKING_REL;
    let gain = coarse.error / fine.error;
    let gain_ok = reached && gain >= REFINEMENT_GAIN;
    Ok(outcome(
        type_one < TYPE_ONE_REL && l1_dec && tracking_ok && gain_ok,
        format!(
            "type-I spread {type_one:.1e} (< {TYPE_ONE_REL:e}); L1 {l1:?} decreasing: {l1_dec}; \
             MOL {} cells reached t = {:.3}T (target {T_TRACK}T), error there {:.2e} (< {TRACKING_REL}); \
             {} cells reached t = {:.3}T; refinement gain at {T_TRACK}T: {} (>= {REFINEMENT_GAIN})",
            fine.cells,
            fine.t_reached,
            fine.error,
            coarse.cells,
            coarse.t_reached,
            if reached { format!("{gain:.2}") } else { "n/a".into() }
        ),
    ))
}

fn criterion_9() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for d in [4, 9] {
        let dm = dim(d);
        let set = find_profiles(dm, R0, 3)?;
        let (p6, detail) = profile_checks(&set);
        let period = 2.0 * PI / dm.omega();
        let sp = set.scan.period_spacings();
        let sp_ok = !sp.is_empty() && sp.iter().all(|s| (s / period - 1.0).abs() < SPACING_REL);
        pass &= p6 && sp_ok;
        parts.push(format!(
            "d = {d}: mu = {:.4e}; bracket spacing {sp:.4?} vs 2pi/omega = {period:.4} (within {SPACING_REL}): {sp_ok}; {detail}",
            MuList(&set.roots.iter().map(|m| m.lambda).collect::<Vec<_>>())
        ));
    }
    Ok(outcome(pass, parts.join(" | ")))
}

fn main() {
    let set = std::cell::OnceCell::new();
    let d3_set = || -> Result<&ProfileSet> {
        if set.get().is_none() {
            let _ = set.set(find_profiles(dim(3), R0, 3)?);
        }
        Ok(set.get().unwrap())
    };
    let results: Vec<(u32, Outcome)> = vec![
        (1, timed(Some(EXPLICIT_SECS), criterion_1)),
        (2, timed(Some(TAIL_SECS), criterion_2)),
        (3, timed(Some(LINEAR_SECS), criterion_3)),
        (4, timed(None, criterion_4)),
        (5, timed(Some(MATCH_SECS), || criterion_5(d3_set()?))),
        (6, timed(None, || criterion_6(d3_set()?))),
        (7, timed(None, criterion_7)),
        (8, timed(Some(EVOLUTION_SECS), || criterion_8(d3_set()?))),
        (9, timed(None, criterion_9)),
    ];
    let mut failed = 0;
    for (n, o) in &results {
        println!("criterion {n}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
