//! One function per subcommand. Each fills a `Sink` with artifacts and checks.

use serde::Serialize;

use ks_selfsim::evolution::{exact_solution, lp_distance, track, BlowupSolution, SIM_BETA, SIM_R};
use ks_selfsim::exterior::{exterior_residuals, shoot_exterior};
use ks_selfsim::interior::{a_of_lambda, interior_residual, shoot_interior};
use ks_selfsim::kummer::u1_via_kummer;
use ks_selfsim::linear_ops::{
    fundamental_phi, fundamental_u1, tau_grid, u1_origin_fit, wronskian_check, ExteriorBasis, FundamentalKind,
    InteriorBasis, WronskianPair,
};
use ks_selfsim::matching::{find_profiles_in, verify_explicit, MatchContext, ProfileSet};
use ks_selfsim::radial::RadialGrid;
use ks_selfsim::steady::{solve_steady, steady_tail_fits};
use ks_selfsim::{Dimension, Result};

use crate::config::RunConfig;
use crate::output::{json, profile_csv, table_csv, Check, Sink};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Common header of every JSON report.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    tolerances: Tolerances,
    checks: &'a [Check],
    result: T,
}

#[derive(Serialize)]
struct Tolerances {
    ode: f64,
    matching: f64,
    picard: f64,
}

fn report<T: Serialize>(sink: &Sink, command: &str, cfg: &RunConfig, result: T) -> String {
    json(&Report {
        command,
        version: VERSION,
        config: cfg,
        tolerances: Tolerances { ode: cfg.tol_ode, matching: cfg.tol_match, picard: cfg.tol_picard },
        checks: &sink.checks,
        result,
    })
}

pub fn steady(cfg: &RunConfig, dim: Dimension, sink: &mut Sink) -> Result<()> {
    let pair = solve_steady(dim, cfg.r_max, cfg.tol_ode)?;
    let q0 = pair.qbar.values[0];
    sink.check(Check::below("qbar_origin_rel_error", (q0 * 2.0 * dim.df() - 1.0).abs(), 1e-6));
    let window = (5.0, 25.0f64.min(cfg.r_max));
    let fits = steady_tail_fits(&pair, window)?;
    sink.check(Check::below("tail_omega_rel_error", (fits.qbar.omega / dim.omega() - 1.0).abs(), 0.01));
    sink.add_primary("qbar.csv", profile_csv(&pair.qbar));
    sink.add("q.csv", profile_csv(&pair.q));
    #[derive(Serialize)]
    struct Out<T> {
        qbar_origin: f64,
        omega_exact: f64,
        tail_window: (f64, f64),
        fits: T,
    }
    let text = report(sink, "steady", cfg, Out { qbar_origin: q0, omega_exact: dim.omega(), tail_window: window, fits });
    sink.add("steady.json", text);
    Ok(())
}

pub fn fundamental(cfg: &RunConfig, dim: Dimension, sink: &mut Sink) -> Result<()> {
    let ext = ExteriorBasis::new(dim, &tau_grid(cfg.r0, 30.0)?, cfg.tol_ode)?;
    let pg = RadialGrid::per_decade(1e-3, 1e3, 100.0)?;
    let phi1 = fundamental_phi(dim, FundamentalKind::Phi1, &pg)?.profile;
    let phi2 = fundamental_phi(dim, FundamentalKind::Phi2, &pg)?.profile;
    let pair = solve_steady(dim, 100.0, cfg.tol_ode)?;
    let int = InteriorBasis::new(&pair, &RadialGrid::per_decade(1e-6, 20.0, 400.0)?, cfg.tol_ode)?;
    let w_ext = wronskian_check(&WronskianPair::U1U2 { u1: &ext.u1, v2: &ext.v2 }, dim, 2.0, 20.0)?;
    let w_phi = wronskian_check(&WronskianPair::Phi12 { phi1: &phi1, phi2: &phi2 }, dim, 1e-3, 1e3)?;
    let w_int =
        wronskian_check(&WronskianPair::LambdaRho { lq: &int.lq, rho: &int.rho, weight: &int.weight }, dim, 0.01, 5.0)?;
    sink.check(Check::below("wronskian_u1_u2", w_ext.max_rel_deviation, 1e-6));
    sink.check(Check::below("wronskian_phi1_phi2", w_phi.max_rel_deviation, 1e-6));
    sink.check(Check::below("wronskian_lambda_qbar_rho", w_int.max_rel_deviation, 1e-6));
    sink.add_primary("u1.csv", profile_csv(&ext.u1));
    sink.add("v2.csv", profile_csv(&ext.v2));
    sink.add("phi1.csv", profile_csv(&phi1));
    sink.add("phi2.csv", profile_csv(&phi2));
    sink.add("lambda_qbar.csv", profile_csv(&int.lq));
    sink.add("rho.csv", profile_csv(&int.rho));
    #[derive(Serialize)]
    struct Out<W> {
        wronskian_u1_u2: W,
        wronskian_phi1_phi2: W,
        wronskian_lambda_qbar_rho: W,
    }
    let text = report(
        sink,
        "fundamental",
        cfg,
        Out { wronskian_u1_u2: w_ext, wronskian_phi1_phi2: w_phi, wronskian_lambda_qbar_rho: w_int },
    );
    sink.add("fundamental.json", text);
    Ok(())
}

pub fn kummer_check(cfg: &RunConfig, dim: Dimension, sink: &mut Sink) -> Result<()> {
    if dim.d() != 3 {
        return Err(ks_selfsim::Error::Parameter("kummer-check is defined for d = 3 only".into()));
    }
    let grid = RadialGrid::per_decade(2.0, 30.0, 400.0)?;
    let ode = fundamental_u1(dim, &grid, 30.0, cfg.tol_ode)?.profile;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, &r) in grid.nodes.iter().enumerate() {
        if r > 10.0 {
            break;
        }
        let k = u1_via_kummer(r)?;
        let rel = (ode.values[i] - k.value).abs() / k.value.abs();
        worst = worst.max(rel);
        rows.push(vec![r, ode.values[i], k.value, rel]);
    }
    let (fit, _) = u1_origin_fit(dim, cfg.tol_ode)?;
    sink.check(Check::below("kummer_max_rel_diff", worst, 1e-5));
    sink.check(Check::below("origin_omega_rel_error", (fit.omega / dim.omega() - 1.0).abs(), 0.01));
    #[derive(Serialize)]
    struct Out<F> {
        kummer_max_rel_diff: f64,
        window: (f64, f64),
        origin_fit: F,
    }
    let text = report(sink, "kummer-check", cfg, Out { kummer_max_rel_diff: worst, window: (2.0, 10.0), origin_fit: fit });
    sink.add_primary("kummer.json", text);
    sink.add("kummer.csv", table_csv(&["r", "ode", "kummer", "rel_diff"], rows));
    Ok(())
}

pub fn shoot_ext(cfg: &RunConfig, dim: Dimension, eps: f64, sink: &mut Sink) -> Result<()> {
    let sol = shoot_exterior(eps, cfg.r0, dim, cfg.r_max)?;
    let res = exterior_residuals(&sol);
    sink.check(Check::below("phi_residual_scaled", res.scaled, 1e-6));
    sink.add_primary("exterior.csv", profile_csv(&sol.profile));
    #[derive(Serialize)]
    struct Out {
        epsilon: f64,
        boundary_value: f64,
        boundary_deriv: f64,
        phi_residual_scaled: f64,
    }
    let text = report(
        sink,
        "shoot-ext",
        cfg,
        Out { epsilon: eps, boundary_value: sol.boundary.0, boundary_deriv: sol.boundary.1, phi_residual_scaled: res.scaled },
    );
    sink.add("exterior.json", text);
    Ok(())
}

pub fn shoot_int(cfg: &RunConfig, dim: Dimension, lambda: f64, sink: &mut Sink) -> Result<()> {
    let a = a_of_lambda(dim, lambda);
    let sol = shoot_interior(a, cfg.r0, dim)?;
    let res = interior_residual(&sol);
    sink.check(Check::below("phi_residual_scaled", res, 1e-6));
    sink.add_primary("interior.csv", profile_csv(&sol.profile));
    #[derive(Serialize)]
    struct Out {
        a: f64,
        lambda: f64,
        boundary_value: f64,
        boundary_deriv: f64,
        phi_residual_scaled: f64,
    }
    let text = report(
        sink,
        "shoot-int",
        cfg,
        Out { a, lambda, boundary_value: sol.boundary.0, boundary_deriv: sol.boundary.1, phi_residual_scaled: res },
    );
    sink.add("interior.json", text);
    Ok(())
}

fn profiles(cfg: &RunConfig, dim: Dimension) -> Result<ProfileSet> {
    let ctx = MatchContext::with_tolerances(dim, cfg.r0, cfg.match_tolerances())?;
    find_profiles_in(ctx, cfg.n, cfg.scan_periods)
}

fn mu_table(set: &ProfileSet) -> String {
    let rows = set.roots.iter().enumerate().map(|(i, m)| {
        let ratio = if i == 0 { f64::NAN } else { m.lambda / set.roots[i - 1].lambda };
        vec![(i + 1) as f64, m.lambda, m.epsilon, ratio, m.value_gap, m.deriv_mismatch]
    });
    table_csv(&["n", "mu_n", "eps_n", "ratio", "value_gap", "deriv_mismatch"], rows)
}

fn scan_csv(set: &ProfileSet) -> String {
    let pred = &set.context.predictor;
    let rows = set
        .scan
        .points
        .iter()
        .map(|p| vec![p.a, p.lambda, p.epsilon, p.deriv_mismatch, pred.eval(p.lambda)]);
    table_csv(&["a", "lambda", "epsilon", "deriv_mismatch", "predicted"], rows)
}

/// Matching checks shared by `match` and `profile`.
fn match_checks(set: &ProfileSet, sink: &mut Sink) {
    // consecutive roots are π/ω apart in log μ
    let target = (-std::f64::consts::PI / set.context.dim.omega()).exp();
    for w in set.roots.windows(2).enumerate() {
        let ratio = w.1[1].lambda / w.1[0].lambda;
        sink.check(Check::below(format!("ratio_{}_rel_error", w.0 + 2), (ratio / target - 1.0).abs(), 0.15));
    }
    sink.check(Check::holds("mu_decreasing", set.roots.windows(2).all(|w| w[1].lambda < w[0].lambda)));
}

#[derive(Serialize)]
struct MatchOut<'a> {
    roots: &'a [ks_selfsim::matching::MatchPoint],
    brackets: Vec<ks_selfsim::matching::Bracket>,
    predictor: &'a ks_selfsim::matching::Predictor,
    consecutive_spacings: Vec<f64>,
    period_spacings: Vec<f64>,
    spacing_exact: f64,
    failed_samples: usize,
}

fn match_out(set: &ProfileSet) -> MatchOut<'_> {
    MatchOut {
        roots: &set.roots,
        brackets: set.scan.indexed(),
        predictor: &set.context.predictor,
        consecutive_spacings: set.scan.consecutive_spacings(),
        period_spacings: set.scan.period_spacings(),
        spacing_exact: 2.0 * std::f64::consts::PI / set.context.dim.omega(),
        failed_samples: set.scan.failed.len(),
    }
}

pub fn matching(cfg: &RunConfig, dim: Dimension, sink: &mut Sink) -> Result<ProfileSet> {
    let set = profiles(cfg, dim)?;
    match_checks(&set, sink);
    sink.add_primary("mu.csv", mu_table(&set));
    sink.add("scan.csv", scan_csv(&set));
    let text = report(sink, "match", cfg, match_out(&set));
    sink.add("match.json", text);
    Ok(set)
}

pub fn profile(cfg: &RunConfig, dim: Dimension, sink: &mut Sink) -> Result<ProfileSet> {
    let set = profiles(cfg, dim)?;
    emit_profiles(cfg, &set, sink);
    Ok(set)
}

fn emit_profiles(cfg: &RunConfig, set: &ProfileSet, sink: &mut Sink) {
    match_checks(set, sink);
    for p in &set.profiles {
        let r = &p.report;
        sink.check(Check::below(format!("u{}_c1_gap", p.n), r.value_gap.max(r.deriv_gap), 1e-8));
        sink.check(Check::below(format!("u{}_nonlocal_residual", p.n), r.nonlocal_residual, 1e-6));
    }
    for (name, f) in [("interior_metric", 0usize), ("exterior_metric", 1)] {
        let m: Vec<f64> = set
            .profiles
            .iter()
            .map(|p| if f == 0 { p.report.interior_metric } else { p.report.exterior_metric })
            .collect();
        sink.check(Check::holds(format!("{name}_decreasing"), m.windows(2).all(|w| w[1] < w[0])));
    }
    sink.add_primary("mu.csv", mu_table(set));
    for p in &set.profiles {
        sink.add(format!("profile_{}.csv", p.n), profile_csv(&p.u));
    }
    #[derive(Serialize)]
    struct Out<'a> {
        matching: MatchOut<'a>,
        profiles: Vec<ProfileEntry<'a>>,
    }
    #[derive(Serialize)]
    struct ProfileEntry<'a> {
        n: usize,
        mu: f64,
        epsilon: f64,
        r_max: f64,
        report: &'a ks_selfsim::matching::AssemblyReport,
    }
    let profiles = set
        .profiles
        .iter()
        .map(|p| ProfileEntry { n: p.n, mu: p.mu, epsilon: p.eps, r_max: p.r_max(), report: &p.report })
        .collect();
    let text = report(sink, "profile", cfg, Out { matching: match_out(set), profiles });
    sink.add("profile.json", text);
}

pub fn explicit(cfg: &RunConfig, dim: Dimension, sink: &mut Sink) -> Result<()> {
    let rep = verify_explicit(dim)?;
    sink.check(Check::below("max_residual", rep.max_residual(), 1e-8));
    let text = report(sink, "verify-explicit", cfg, &rep);
    sink.add_primary("explicit.json", text);
    Ok(())
}

pub const EVOLVE_TIMES: [f64; 6] = [0.0, 0.5, 0.9, 0.99, 0.999, 0.9999];

pub fn evolve(cfg: &RunConfig, dim: Dimension, t_blowup: f64, set: Option<&ProfileSet>, sink: &mut Sink) -> Result<()> {
    let owned;
    let set = match set {
        Some(s) => s,
        None => {
            owned = profiles(cfg, dim)?;
            &owned
        }
    };
    let ps: Vec<f64> = [1.0, 1.25, 1.5, 2.0, 3.0, 4.0].into_iter().filter(|&p| p < dim.df() / 2.0).collect();
    let xs = ks_selfsim::radial::log_space(1e-2, 1e2, 81);
    let (mut table, mut lp_rows) = (Vec::new(), Vec::new());
    #[derive(Serialize)]
    struct Entry {
        n: usize,
        type_one: Vec<(f64, f64)>,
        sup_profile: f64,
        locality: Vec<(f64, f64)>,
        limit_at_one: f64,
        u_at_one: Vec<(f64, f64)>,
    }
    let mut entries = Vec::new();
    for p in &set.profiles {
        let sol = BlowupSolution::new(p.clone(), t_blowup)?;
        let sup0 = sol.sup(0.0)?;
        let mut type_one = Vec::new();
        let mut u_at_one = Vec::new();
        for &f in &EVOLVE_TIMES {
            let t = f * t_blowup;
            type_one.push((f, (t_blowup - t) * sol.sup(t)?));
            u_at_one.push((f, exact_solution(&sol, 1.0, t)?));
            for &x in &xs {
                table.push(vec![p.n as f64, f, x, exact_solution(&sol, x, t)?, sol.limit_profile(x)]);
            }
            if f > 0.0 {
                for &pp in &ps {
                    lp_rows.push(vec![p.n as f64, f, pp, lp_distance(&sol, t, pp)?]);
                }
            }
        }
        let spread = type_one.iter().map(|v| (v.1 / sup0 - 1.0).abs()).fold(0.0, f64::max);
        sink.check(Check::below(format!("u{}_type_one_spread", p.n), spread, 1e-12));
        let l1: Vec<f64> = lp_rows.iter().filter(|r| r[0] == p.n as f64 && r[2] == 1.0).map(|r| r[3]).collect();
        sink.check(Check::holds(format!("u{}_l1_decreasing", p.n), l1.windows(2).all(|w| w[1] < w[0])));
        let mut locality = Vec::new();
        for delta in [0.1, 0.5, 1.0] {
            let worst = EVOLVE_TIMES
                .iter()
                .map(|f| sol.sup_outside(f * t_blowup, delta).map(|s| s * delta * delta))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            locality.push((delta, worst));
        }
        entries.push(Entry { n: p.n, type_one, sup_profile: sup0, locality, limit_at_one: sol.limit_profile(1.0), u_at_one });
    }
    sink.add_primary("evolve.csv", table_csv(&["n", "t_over_T", "x", "u", "u_star"], table));
    sink.add("lp.csv", table_csv(&["n", "t_over_T", "p", "distance"], lp_rows));
    #[derive(Serialize)]
    struct Out {
        t_blowup: f64,
        profiles: Vec<Entry>,
    }
    let text = report(sink, "evolve", cfg, Out { t_blowup, profiles: entries });
    sink.add("evolve.json", text);
    Ok(())
}

/// Simulation parameters of the `sim` command.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimParams {
    pub cells: usize,
    pub t_end: f64,
    pub r_max: f64,
    pub beta: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { cells: ks_selfsim::evolution::SIM_CELLS, t_end: 0.5, r_max: SIM_R, beta: SIM_BETA }
    }
}

pub fn sim(cfg: &RunConfig, dim: Dimension, params: SimParams, set: Option<&ProfileSet>, sink: &mut Sink) -> Result<()> {
    let owned;
    let set = match set {
        Some(s) => s,
        None => {
            let one = RunConfig { n: 1, ..cfg.clone() };
            owned = profiles(&one, dim)?;
            &owned
        }
    };
    let sol = BlowupSolution::new(set.profiles[0].clone(), 1.0)?;
    let (fine, coarse) = rayon::join(
        || track(&sol, params.r_max, params.cells, params.beta, params.t_end, 10),
        || track(&sol, params.r_max, params.cells / 2, params.beta, params.t_end, 10),
    );
    let ((fine, traj), (coarse, _)) = (fine?, coarse?);
    let mut rows = Vec::new();
    for st in &traj.snapshots {
        for (i, &r) in st.grid.centers.iter().enumerate() {
            rows.push(vec![st.t, r, st.u[i], exact_solution(&sol, r, st.t)?]);
        }
    }
    sink.add("trajectory.csv", table_csv(&["t", "r", "u", "u_exact"], rows));
    sink.check(Check::holds("reached_t_end", fine.completed(params.t_end)));
    sink.check(Check::below("tracking_error", if fine.completed(params.t_end) { fine.error } else { f64::NAN }, 0.02));
    let gain = if fine.completed(params.t_end) && coarse.completed(params.t_end) { coarse.error / fine.error } else { f64::NAN };
    sink.check(Check::holds("refinement_gain_at_least_3", gain >= 3.0));
    sink.check(Check::below("mass_drift", fine.mass_drift, 1e-6));
    sink.check(Check::below("type_one_spread", fine.type_one_spread, 0.05));
    sink.check(Check::holds("sup_lower_bound", fine.type_one_lower >= 1.0 - 1e-6));
    #[derive(Serialize)]
    struct Out {
        params: SimParams,
        fine: ks_selfsim::evolution::TrackingRun,
        coarse: ks_selfsim::evolution::TrackingRun,
        refinement_gain: f64,
    }
    let text = report(sink, "sim", cfg, Out { params, fine, coarse, refinement_gain: gain });
    sink.add_primary("sim.json", text);
    Ok(())
}

pub fn all(cfg: &RunConfig, dim: Dimension, sink: &mut Sink) -> Result<()> {
    steady(cfg, dim, sink)?;
    fundamental(cfg, dim, sink)?;
    if dim.d() == 3 {
        kummer_check(cfg, dim, sink)?;
    }
    explicit(cfg, dim, sink)?;
    let set = profiles(cfg, dim)?;
    emit_profiles(cfg, &set, sink);
    evolve(cfg, dim, 1.0, Some(&set), sink)?;
    sim(cfg, dim, SimParams::default(), Some(&set), sink)?;
    sink.set_primary("mu.csv");
    Ok(())
}
