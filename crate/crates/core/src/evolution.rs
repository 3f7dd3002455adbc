//! Self-similar blow-up solutions u(x,t) = U_n(|x|/√(T−t))/(T−t) of the
//! radial parabolic-elliptic system, their L^p distance to the limit profile
//! u*, and a finite-volume method-of-lines solver for short-time tracking.

use serde::Serialize;

use crate::equation::exterior_series;
use crate::error::{Error, Result};
use crate::matching::SelfSimilarProfile;
use crate::radial::RadialProfile;
use crate::steady::Dimension;

const TAIL_TERMS: usize = 5;

/// Surface measure |S^{d−1}| = 2π^{d/2}/Γ(d/2).
pub fn sphere_area(d: u32) -> f64 {
    // Γ(d/2) by recursion from Γ(1) = 1 or Γ(1/2) = √π
    let mut g = if d % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut x = if d % 2 == 0 { 1.0 } else { 0.5 };
    while x < d as f64 / 2.0 - 1e-12 {
        g *= x;
        x += 1.0;
    }
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / g
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupSolution {
    pub profile: SelfSimilarProfile,
    /// Blow-up time T.
    pub t_blowup: f64,
    /// Coefficients A_k of the exterior series Φ = Σ A_k y^{-2k}, A₁ = 1 + ε_n.
    tail: Vec<f64>,
}

impl BlowupSolution {
    pub fn new(profile: SelfSimilarProfile, t_blowup: f64) -> Result<Self> {
        if !(t_blowup > 0.0 && t_blowup.is_finite()) {
            return Err(Error::Parameter(format!("blow-up time T = {t_blowup} must be positive")));
        }
        let tail = exterior_series(profile.dim.df(), profile.eps, TAIL_TERMS);
        Ok(Self { profile, t_blowup, tail })
    }

    pub fn dim(&self) -> Dimension {
        self.profile.dim
    }

    fn u(&self) -> &RadialProfile {
        &self.profile.u
    }

    /// U_n(y): the stored profile on its grid, its first value below the grid
    /// (U is flat at the origin), and the exterior series beyond.
    pub fn profile_value(&self, y: f64) -> f64 {
        let u = self.u();
        if y <= u.r_lo() {
            u.values[0]
        } else if y >= u.r_hi() {
            self.tail_value(y)
        } else {
            u.value(y).unwrap_or(f64::NAN)
        }
    }

    /// Σ A_k (2d − 4k) y^{-2k}
    pub fn tail_value(&self, y: f64) -> f64 {
        let d = self.dim().df();
        self.tail
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let k = (j + 1) as f64;
                a * (2.0 * d - 4.0 * k) * y.powf(-2.0 * k)
            })
            .sum()
    }

    fn scale(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t < self.t_blowup) {
            return Err(Error::Domain(format!("time t = {t} must lie in [0, T = {})", self.t_blowup)));
        }
        Ok((self.t_blowup - t).sqrt())
    }

    /// u*(x) = lim_{t→T} u(x, t) = 2(d−2)(1 + ε_n)/x².
    pub fn limit_profile(&self, x: f64) -> f64 {
        let d = self.dim().df();
        self.tail[0] * (2.0 * d - 4.0) / (x * x)
    }

    /// sup_x u(·, t), attained on the profile nodes.
    pub fn sup(&self, t: f64) -> Result<f64> {
        let s = self.scale(t)?;
        Ok(self.u().values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / (s * s))))
    }

    /// sup_{|x|≥δ} u(x, t)
    pub fn sup_outside(&self, t: f64, delta: f64) -> Result<f64> {
        let s = self.scale(t)?;
        let y0 = delta / s;
        let u = self.u();
        let mut m = self.profile_value(y0);
        for (i, &y) in u.grid.nodes.iter().enumerate() {
            if y >= y0 {
                m = m.max(u.values[i]);
            }
        }
        Ok(m / (s * s))
    }
}

/// u(x, t) = U_n(x/√(T−t))/(T−t).
pub fn exact_solution(sol: &BlowupSolution, x: f64, t: f64) -> Result<f64> {
    let s = sol.scale(t)?;
    if x < 0.0 {
        return Err(Error::Domain(format!("radius x = {x} must be non-negative")));
    }
    Ok(sol.profile_value(x / s) / (s * s))
}

/// ‖u(·,t) − u*‖_{L^p(ℝ^d)} for 1 ≤ p < d/2.
///
/// With y = x/√(T−t) the integral is (T−t)^{(d−2p)/2}·I_p where
/// I_p = ∫₀^∞ |U_n(y) − 2(d−2)(1+ε_n)/y²|^p y^{d−1} dy does not depend on t.
/// The node range of U_n is integrated by the trapezoid rule in log y on a
/// refined grid; below it the u* singularity is integrated in closed form and
/// above it the exterior series is integrated numerically to y = 1e4 with the
/// y^{-4p} remainder added analytically.
pub fn lp_distance(sol: &BlowupSolution, t: f64, p: f64) -> Result<f64> {
    let d = sol.dim().df();
    if !(p >= 1.0 && p < d / 2.0) {
        return Err(Error::Parameter(format!("exponent p = {p} must satisfy 1 <= p < d/2 = {}", d / 2.0)));
    }
    let s = sol.scale(t)?;
    let ip = lp_integral(sol, p);
    Ok((sphere_area(sol.dim().d()) * s.powf(d - 2.0 * p) * ip).powf(1.0 / p))
}

/// I_p of `lp_distance`.
pub fn lp_integral(sol: &BlowupSolution, p: f64) -> f64 {
    let d = sol.dim().df();
    let c = sol.tail[0] * (2.0 * d - 4.0);
    let diff = |y: f64| (sol.profile_value(y) - c / (y * y)).abs().powf(p) * y.powf(d);
    let (y_lo, y_hi) = (sol.u().r_lo(), sol.u().r_hi());
    // |U(0) − c/y²|^p ≈ c^p y^{-2p}(1 − p U(0) y²/c) on [0, y_lo]
    let u0 = sol.u().values[0];
    let head = c.powf(p) * y_lo.powf(d - 2.0 * p) / (d - 2.0 * p)
        - p * u0 * c.powf(p - 1.0) * y_lo.powf(d - 2.0 * p + 2.0) / (d - 2.0 * p + 2.0);
    let y_far = 1e4f64.max(y_hi);
    let body = log_trapezoid(&diff, y_lo, y_hi, 4000) + log_trapezoid(&diff, y_hi, y_far, 4000);
    // beyond y_far: |A₂(2d−8)|^p y^{-4p}
    let a2 = (sol.tail[1] * (2.0 * d - 8.0)).abs();
    let rest = if a2 > 0.0 { a2.powf(p) * y_far.powf(d - 4.0 * p) / (4.0 * p - d) } else { 0.0 };
    head + body + rest
}

/// ∫ f(y)/y dy over [a, b] by the composite Simpson rule in log y.
fn log_trapezoid(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = n + n % 2;
    let (la, lb) = (a.ln(), b.ln());
    let h = (lb - la) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f((la + i as f64 * h).exp());
    }
    s * h / 3.0
}

/// Radial finite-volume grid: faces 0 = f₀ < … < f_N = R graded by
/// f_j = R sinh(βj/N)/sinh(β), cell values at face midpoints.
#[derive(Debug, Clone, Serialize)]
pub struct FvGrid {
    pub faces: Vec<f64>,
    pub centers: Vec<f64>,
    /// ∫_{cell} s^{d−1} ds
    pub volumes: Vec<f64>,
    pub d: u32,
}

impl FvGrid {
    pub fn sinh_graded(dim: Dimension, r_max: f64, cells: usize, beta: f64) -> Result<Self> {
        if cells < 4 || !(r_max > 0.0) || !(beta > 0.0) {
            return Err(Error::Parameter("grid needs at least 4 cells, R > 0 and beta > 0".into()));
        }
        let faces: Vec<f64> =
            (0..=cells).map(|j| r_max * (beta * j as f64 / cells as f64).sinh() / beta.sinh()).collect();
        Ok(Self::from_faces(dim, faces))
    }

    fn from_faces(dim: Dimension, faces: Vec<f64>) -> Self {
        let d = dim.d() as i32;
        let centers = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let volumes = faces.windows(2).map(|w| (w[1].powi(d) - w[0].powi(d)) / d as f64).collect();
        FvGrid { faces, centers, volumes, d: dim.d() }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.faces.last().unwrap()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeState {
    pub grid: FvGrid,
    pub u: Vec<f64>,
    pub t: f64,
}

impl PdeState {
    pub fn new(grid: FvGrid, u: Vec<f64>, t: f64) -> Result<Self> {
        if u.len() != grid.len() {
            return Err(Error::Parameter(format!("{} values for {} cells", u.len(), grid.len())));
        }
        if u.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter("initial data must be finite and non-negative".into()));
        }
        Ok(Self { grid, u, t })
    }

    /// ∫₀^R u s^{d−1} ds (radial measure; multiply by |S^{d−1}| for ∫u dx).
    pub fn mass(&self) -> f64 {
        self.u.iter().zip(&self.grid.volumes).map(|(u, v)| u * v).sum()
    }

    pub fn sup(&self) -> f64 {
        self.u.iter().fold(0.0, |m, &v| m.max(v))
    }
}

/// Initial data u(·, t₀) of an exact self-similar solution at the cell centres.
pub fn exact_state(sol: &BlowupSolution, grid: FvGrid, t: f64) -> Result<PdeState> {
    let u = grid.centers.iter().map(|&r| exact_solution(sol, r, t)).collect::<Result<Vec<_>>>()?;
    PdeState::new(grid, u, t)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimOptions {
    /// dt = cfl · min_i h_i²/(2 + h_i|v_i|), v the drift velocity.
    pub cfl: f64,
    pub dt_min: f64,
    pub max_steps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { cfl: 0.4, dt_min: 1e-14, max_steps: 50_000_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimTrajectory {
    pub snapshots: Vec<PdeState>,
    /// Mass at the snapshot times.
    pub mass: Vec<f64>,
    /// Mass that left through r = R up to each snapshot (positive outward).
    pub boundary_outflow: Vec<f64>,
    pub steps: usize,
    /// Set when dt fell below `dt_min` before the end time.
    pub stopped_early: bool,
}

impl SimTrajectory {
    /// max_k |M(t_k) − M(0) + outflow(t_k)| / M(0)
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        self.mass
            .iter()
            .zip(&self.boundary_outflow)
            .map(|(m, q)| (m - m0 + q).abs() / m0.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> &PdeState {
        self.snapshots.last().unwrap()
    }
}

/// Fluxes J_j = r^{d−1}u' + uM at every face (J₀ = 0 by symmetry; at R the
/// slope follows d log u/d log r = −2) and the drift velocity at the cells.
fn fluxes(grid: &FvGrid, u: &[f64], flux: &mut [f64], speed: &mut [f64]) {
    let n = grid.len();
    let dm1 = grid.d as i32 - 1;
    flux[0] = 0.0;
    let mut mass = 0.0;
    for j in 1..n {
        mass += u[j - 1] * grid.volumes[j - 1];
        let r = grid.faces[j];
        let du = (u[j] - u[j - 1]) / (grid.centers[j] - grid.centers[j - 1]);
        let uf = 0.5 * (u[j] + u[j - 1]);
        let rd = r.powi(dm1);
        flux[j] = rd * du + uf * mass;
        speed[j - 1] = mass / rd;
    }
    mass += u[n - 1] * grid.volumes[n - 1];
    let r = grid.r_max();
    let ub = u[n - 1] * (grid.centers[n - 1] / r).powi(2);
    flux[n] = r.powi(dm1) * (-2.0 * ub / r) + ub * mass;
    speed[n - 1] = mass / r.powi(dm1);
}

/// SSP-RK3 method of lines for ∂_t u = r^{1−d}(r^{d−1}∂_r u + uM)_r on the
/// state's grid, recording a snapshot at each requested time.
pub fn mol_simulate(u0: &PdeState, times: &[f64], opts: SimOptions) -> Result<SimTrajectory> {
    if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|&t| t <= u0.t) {
        return Err(Error::Parameter("snapshot times must increase and follow the initial time".into()));
    }
    let grid = &u0.grid;
    let n = grid.len();
    let mut u = u0.u.clone();
    let mut t = u0.t;
    let mut outflow = 0.0;
    let mut out = SimTrajectory {
        snapshots: vec![u0.clone()],
        mass: vec![u0.mass()],
        boundary_outflow: vec![0.0],
        steps: 0,
        stopped_early: false,
    };
    let h: Vec<f64> = grid.faces.windows(2).map(|w| w[1] - w[0]).collect();
    let (mut flux, mut speed) = (vec![0.0; n + 1], vec![0.0; n]);
    let rate = |u: &[f64], flux: &mut [f64], speed: &mut [f64], du: &mut [f64]| -> f64 {
        fluxes(grid, u, flux, speed);
        for i in 0..n {
            du[i] = (flux[i + 1] - flux[i]) / grid.volumes[i];
        }
        flux[n]
    };
    let (mut k, mut u1, mut u2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for &t_snap in times {
        while t < t_snap {
            if out.steps >= opts.max_steps {
                return Err(Error::Convergence(format!("method of lines exceeded {} steps", opts.max_steps)));
            }
            let q0 = rate(&u, &mut flux, &mut speed, &mut k);
            let mut dt = f64::INFINITY;
            for i in 0..n {
                dt = dt.min(h[i] * h[i] / (2.0 + h[i] * speed[i].abs()));
            }
            dt *= opts.cfl;
            if dt < opts.dt_min {
                out.stopped_early = true;
                return Ok(out);
            }
            dt = dt.min(t_snap - t);
            for i in 0..n {
                u1[i] = u[i] + dt * k[i];
            }
            let q1 = rate(&u1, &mut flux, &mut speed, &mut k);
            for i in 0..n {
                u2[i] = 0.75 * u[i] + 0.25 * (u1[i] + dt * k[i]);
            }
            let q2 = rate(&u2, &mut flux, &mut speed, &mut k);
            for i in 0..n {
                u[i] = (u[i] + 2.0 * (u2[i] + dt * k[i])) / 3.0;
                if u[i] < 0.0 && u[i] > -1e-14 * (1.0 + u[i].abs()) {
                    u[i] = 0.0;
                }
            }
            // the same stage weights applied to the boundary flux keep the
            // mass balance exact
            outflow -= dt * (q0 + q1 + 4.0 * q2) / 6.0;
            t += dt;
            out.steps += 1;
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration {
                    kind: crate::error::IntegrationFailure::NonFinite,
                    r: t,
                    steps: out.steps,
                });
            }
        }
        t = t_snap;
        let state = PdeState { grid: grid.clone(), u: u.clone(), t };
        out.mass.push(state.mass());
        out.boundary_outflow.push(outflow);
        out.snapshots.push(state);
    }
    Ok(out)
}

/// Relative sup error ‖u − u_exact‖_∞/‖u_exact‖_∞ over cell centres in [lo, hi].
pub fn tracking_error(state: &PdeState, sol: &BlowupSolution, lo: f64, hi: f64) -> Result<f64> {
    let (mut e, mut m): (f64, f64) = (0.0, 0.0);
    for (i, &r) in state.grid.centers.iter().enumerate() {
        if r >= lo && r <= hi {
            let ex = exact_solution(sol, r, state.t)?;
            e = e.max((state.u[i] - ex).abs());
            m = m.max(ex.abs());
        }
    }
    Ok(e / m)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackingRun {
    pub cells: usize,
    pub steps: usize,
    /// Last snapshot time reached (below `t_end` when dt underflowed).
    pub t_reached: f64,
    /// Relative sup error on [0.1, 5] at `t_reached`.
    pub error: f64,
    pub mass_drift: f64,
    /// min over snapshots of (T − t)·sup u
    pub type_one_lower: f64,
    /// max over snapshots of |(T − t)·sup u / sup U − 1|
    pub type_one_spread: f64,
}

impl TrackingRun {
    pub fn completed(&self, t_end: f64) -> bool {
        self.t_reached >= t_end
    }
}

/// Runs the method of lines from the exact data at t = 0 towards `t_end`,
/// with `snapshots` equally spaced outputs, and compares the last one reached
/// with the exact solution on [0.1, 5]. Returns the trajectory as well.
pub fn track(
    sol: &BlowupSolution,
    r_max: f64,
    cells: usize,
    beta: f64,
    t_end: f64,
    snapshots: usize,
) -> Result<(TrackingRun, SimTrajectory)> {
    let grid = FvGrid::sinh_graded(sol.dim(), r_max, cells, beta)?;
    let init = exact_state(sol, grid, 0.0)?;
    let times: Vec<f64> = (1..=snapshots.max(1)).map(|k| t_end * k as f64 / snapshots.max(1) as f64).collect();
    let traj = mol_simulate(&init, &times, SimOptions::default())?;
    let sup0 = sol.sup(0.0)?;
    let scaled: Vec<f64> = traj.snapshots.iter().map(|s| (sol.t_blowup - s.t) * s.sup()).collect();
    let last = traj.last();
    let run = TrackingRun {
        cells,
        steps: traj.steps,
        t_reached: last.t,
        error: tracking_error(last, sol, 0.1, 5.0)?,
        mass_drift: traj.mass_drift(),
        type_one_lower: scaled.iter().copied().fold(f64::INFINITY, f64::min),
        type_one_spread: scaled.iter().map(|v| (v / sup0 - 1.0).abs()).fold(0.0, f64::max),
    };
    Ok((run, traj))
}

/// Default simulation domain and grading.
pub const SIM_R: f64 = 15.0;
pub const SIM_BETA: f64 = 4.4;
pub const SIM_CELLS: usize = 800;
