//! Radial grids, profiles with C¹ dense evaluation, an adaptive Dormand-Prince
//! integrator and weighted cumulative quadrature.

use serde::Serialize;

use crate::error::{Error, IntegrationFailure, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Grading {
    /// Log-uniform on [r_min, 1] and on [1, r_max], sharing the node 1.
    LogTwoSided { n_inner: usize, n_outer: usize },
    LogUniform { n: usize },
    /// Log-uniform up to `r_lo`, uniform on [r_lo, r_hi], log-uniform beyond.
    Banded { r_lo: f64, r_hi: f64 },
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    pub nodes: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub grading: Grading,
}

impl RadialGrid {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Parameter("grid needs at least 2 nodes".into()));
        }
        if nodes.iter().any(|r| !r.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("grid nodes must be finite and strictly increasing".into()));
        }
        Ok(RadialGrid {
            r_min: nodes[0],
            r_max: *nodes.last().unwrap(),
            nodes,
            grading: Grading::Custom,
        })
    }

    pub fn log_uniform(r_lo: f64, r_hi: f64, n: usize) -> Result<Self> {
        if !(r_lo > 0.0 && r_hi > r_lo) || n < 2 {
            return Err(Error::Parameter(format!("log grid [{r_lo}, {r_hi}] with {n} nodes")));
        }
        let mut g = Self::from_nodes(log_space(r_lo, r_hi, n))?;
        g.grading = Grading::LogUniform { n };
        Ok(g)
    }

    /// Log grid with a given density per decade, ends included exactly.
    pub fn per_decade(r_lo: f64, r_hi: f64, per_decade: f64) -> Result<Self> {
        let n = ((r_hi / r_lo).log10() * per_decade).ceil().max(1.0) as usize + 1;
        Self::log_uniform(r_lo, r_hi, n)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index i with nodes[i] <= r <= nodes[i+1], clamped to the valid range.
    pub fn locate(&self, r: f64) -> usize {
        let k = self.nodes.partition_point(|&x| x <= r);
        k.saturating_sub(1).min(self.nodes.len() - 2)
    }

    /// Merge another node set in, dropping near-duplicates.
    pub fn merged(&self, extra: &[f64]) -> Result<Self> {
        let mut all: Vec<f64> = self.nodes.iter().chain(extra.iter()).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * b.abs().max(1e-300));
        Self::from_nodes(all)
    }
}

pub fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    let mut v: Vec<f64> = (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect();
    v[0] = a;
    v[n - 1] = b;
    v
}

/// Log-uniform on [r_min, 1] with `n_inner` nodes and on [1, r_max] with
/// `n_outer` nodes; node 1 is shared.
pub fn make_graded_grid(r_min: f64, r_max: f64, n_inner: usize, n_outer: usize) -> Result<RadialGrid> {
    if !(r_min > 0.0 && r_min < 1.0 && r_max > 1.0) {
        return Err(Error::Parameter(format!(
            "need 0 < r_min < 1 < r_max, got r_min = {r_min}, r_max = {r_max}"
        )));
    }
    if n_inner < 2 || n_outer < 2 {
        return Err(Error::Parameter("node counts must be at least 2".into()));
    }
    let mut nodes = log_space(r_min, 1.0, n_inner);
    nodes.extend(log_space(1.0, r_max, n_outer).into_iter().skip(1));
    Ok(RadialGrid {
        nodes,
        r_min,
        r_max,
        grading: Grading::LogTwoSided { n_inner, n_outer },
    })
}

/// Values and first derivatives on a grid, optionally with exact second
/// derivatives. Dense evaluation is cubic Hermite.
#[derive(Debug, Clone, Serialize)]
pub struct RadialProfile {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub second: Option<Vec<f64>>,
}

impl RadialProfile {
    pub fn new(grid: RadialGrid, values: Vec<f64>, derivs: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() || derivs.len() != grid.len() {
            return Err(Error::Parameter("profile length does not match grid".into()));
        }
        Ok(RadialProfile { grid, values, derivs, second: None })
    }

    pub fn with_second(mut self, second: Vec<f64>) -> Result<Self> {
        if second.len() != self.grid.len() {
            return Err(Error::Parameter("second-derivative length does not match grid".into()));
        }
        self.second = Some(second);
        Ok(self)
    }

    /// Sample a closed form given as r -> (f, f', f'').
    pub fn from_fn(grid: &RadialGrid, f: impl Fn(f64) -> (f64, f64, f64)) -> Self {
        let n = grid.len();
        let (mut v, mut d, mut s) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for &r in &grid.nodes {
            let (a, b, c) = f(r);
            v.push(a);
            d.push(b);
            s.push(c);
        }
        RadialProfile { grid: grid.clone(), values: v, derivs: d, second: Some(s) }
    }

    pub fn zeros(grid: &RadialGrid) -> Self {
        Self::from_fn(grid, |_| (0.0, 0.0, 0.0))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.grid.nodes
    }

    pub fn r_lo(&self) -> f64 {
        self.grid.nodes[0]
    }

    pub fn r_hi(&self) -> f64 {
        *self.grid.nodes.last().unwrap()
    }

    pub fn contains(&self, r: f64) -> bool {
        let slack = 1e-12 * r.abs();
        r >= self.r_lo() - slack && r <= self.r_hi() + slack
    }

    /// Value and derivative at r: quintic Hermite when second derivatives
    /// are stored, cubic Hermite otherwise.
    pub fn eval(&self, r: f64) -> Result<(f64, f64)> {
        if !self.contains(r) {
            return Err(Error::Domain(format!(
                "r = {r:e} outside profile support [{:e}, {:e}]",
                self.r_lo(),
                self.r_hi()
            )));
        }
        let i = self.grid.locate(r);
        if let Some(s) = &self.second {
            return Ok(hermite5(
                [self.grid.nodes[i], self.grid.nodes[i + 1]],
                [self.values[i], self.derivs[i], s[i]],
                [self.values[i + 1], self.derivs[i + 1], s[i + 1]],
                r,
            ));
        }
        Ok(hermite(
            self.grid.nodes[i],
            self.grid.nodes[i + 1],
            self.values[i],
            self.values[i + 1],
            self.derivs[i],
            self.derivs[i + 1],
            r,
        ))
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        self.eval(r).map(|x| x.0)
    }

    /// Second derivative at node i: exact if supplied, else from the quintic
    /// Hermite interpolant through node i and its two neighbours.
    pub fn second_at(&self, i: usize) -> f64 {
        if let Some(s) = &self.second {
            return s[i];
        }
        let n = self.grid.len();
        if n < 3 {
            let x = &self.grid.nodes;
            return (self.derivs[1] - self.derivs[0]) / (x[1] - x[0]);
        }
        let (a, b) = if i == 0 {
            (1, 2)
        } else if i == n - 1 {
            (n - 3, n - 2)
        } else {
            (i - 1, i + 1)
        };
        let x = &self.grid.nodes;
        quintic_second(
            x[i],
            self.values[i],
            self.derivs[i],
            [(x[a], self.values[a], self.derivs[a]), (x[b], self.values[b], self.derivs[b])],
        )
    }

    pub fn seconds(&self) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.second_at(i)).collect()
    }

    /// Restrict to nodes within [lo, hi].
    pub fn window(&self, lo: f64, hi: f64) -> Result<Self> {
        let idx: Vec<usize> = (0..self.grid.len())
            .filter(|&i| self.grid.nodes[i] >= lo && self.grid.nodes[i] <= hi)
            .collect();
        let grid = RadialGrid::from_nodes(idx.iter().map(|&i| self.grid.nodes[i]).collect())?;
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(RadialProfile {
            grid,
            values: pick(&self.values),
            derivs: pick(&self.derivs),
            second: self.second.as_ref().map(|s| pick(s)),
        })
    }

    /// Resample on another grid inside the support (second derivatives dropped).
    pub fn resample(&self, grid: &RadialGrid) -> Result<Self> {
        let mut v = Vec::with_capacity(grid.len());
        let mut d = Vec::with_capacity(grid.len());
        for &r in &grid.nodes {
            let (a, b) = self.eval(r)?;
            v.push(a);
            d.push(b);
        }
        RadialProfile::new(grid.clone(), v, d)
    }
}

/// Cubic Hermite on [x0, x1] returning (value, derivative).
pub fn hermite(x0: f64, x1: f64, f0: f64, f1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1;
    let dh00 = 6.0 * t2 - 6.0 * t;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = -6.0 * t2 + 6.0 * t;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let dv = (dh00 * f0 + dh01 * f1) / h + dh10 * d0 + dh11 * d1;
    (v, dv)
}

/// Quintic Hermite on [x0, x1] from (f, f', f'') at both ends, returning
/// (value, derivative).
pub fn hermite5(x: [f64; 2], left: [f64; 3], right: [f64; 3], at: f64) -> (f64, f64) {
    let h = x[1] - x[0];
    let t = (at - x[0]) / h;
    let (t2, t3) = (t * t, t * t * t);
    let (t4, t5) = (t3 * t, t3 * t2);
    let b = [
        1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
        t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
        0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5),
        10.0 * t3 - 15.0 * t4 + 6.0 * t5,
        -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
        0.5 * (t3 - 2.0 * t4 + t5),
    ];
    let db = [
        -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
        1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
        0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4),
        30.0 * t2 - 60.0 * t3 + 30.0 * t4,
        -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
        0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4),
    ];
    let c = [left[0], h * left[1], h * h * left[2], right[0], h * right[1], h * h * right[2]];
    let v = (0..6).map(|k| b[k] * c[k]).sum();
    let dv = (0..6).map(|k| db[k] * c[k]).sum::<f64>() / h;
    (v, dv)
}

/// f''(x0) of the quintic matching value and slope at x0 and two other nodes.
fn quintic_second(x0: f64, f0: f64, g0: f64, others: [(f64, f64, f64); 2]) -> f64 {
    let h = others.iter().map(|o| (o.0 - x0).abs()).fold(0.0, f64::max);
    // unknowns c2..c5 of p(t) = f0 + h g0 t + c2 t^2 + ... + c5 t^5, t = (x - x0)/h
    let mut m = [[0.0f64; 5]; 4];
    for (k, &(x, f, g)) in others.iter().enumerate() {
        let t = (x - x0) / h;
        m[2 * k] = [t * t, t.powi(3), t.powi(4), t.powi(5), f - f0 - h * g0 * t];
        m[2 * k + 1] = [2.0 * t, 3.0 * t * t, 4.0 * t.powi(3), 5.0 * t.powi(4), h * (g - g0)];
    }
    let c = solve4(m);
    2.0 * c[0] / (h * h)
}

fn solve4(mut m: [[f64; 5]; 4]) -> [f64; 4] {
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        for row in col + 1..4 {
            let fac = m[row][col] / m[col][col];
            for k in col..5 {
                m[row][k] -= fac * m[col][k];
            }
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut s = m[row][4];
        for k in row + 1..4 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// First-order system y' = f(r, y) posed from `r_start` towards `r_end`.
pub struct IvpSpec<'a, const N: usize> {
    pub rhs: &'a (dyn Fn(f64, &[f64; N]) -> [f64; N] + Sync),
    pub r_start: f64,
    pub y_start: [f64; N],
    pub r_end: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Radii the integrator must land on exactly (any order).
    pub stops: &'a [f64],
    /// Abort when any component exceeds this magnitude.
    pub blowup: f64,
    pub h_init: Option<f64>,
}

impl<'a, const N: usize> IvpSpec<'a, N> {
    pub fn new(
        rhs: &'a (dyn Fn(f64, &[f64; N]) -> [f64; N] + Sync),
        r_start: f64,
        y_start: [f64; N],
        r_end: f64,
        tol: f64,
    ) -> Self {
        IvpSpec {
            rhs,
            r_start,
            y_start,
            r_end,
            rtol: tol,
            atol: tol * 1e-3,
            max_steps: 2_000_000,
            stops: &[],
            blowup: 1e150,
            h_init: None,
        }
    }

    pub fn direction(&self) -> Direction {
        if self.r_end >= self.r_start {
            Direction::Forward
        } else {
            Direction::Backward
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IvpDiagnostics {
    pub steps: usize,
    pub rejected: usize,
    pub h_min: f64,
    pub h_max: f64,
}

/// Accepted points in integration order with states and slopes.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub r: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub f: Vec<[f64; N]>,
    pub diagnostics: IvpDiagnostics,
}

impl<const N: usize> Trajectory<N> {
    pub fn last(&self) -> (f64, [f64; N]) {
        (*self.r.last().unwrap(), *self.y.last().unwrap())
    }

    /// Dense state at r via componentwise cubic Hermite.
    pub fn eval(&self, r: f64) -> Result<[f64; N]> {
        let fwd = self.r.last() >= self.r.first();
        let key = |x: f64| if fwd { x } else { -x };
        let (lo, hi) = (key(self.r[0]), key(*self.r.last().unwrap()));
        let kr = key(r);
        let slack = 1e-12 * r.abs();
        if kr < lo - slack || kr > hi + slack {
            return Err(Error::Domain(format!("r = {r:e} outside trajectory")));
        }
        if self.r.len() == 1 {
            return Ok(self.y[0]);
        }
        let k = self.r.partition_point(|&x| key(x) <= kr);
        let i = k.saturating_sub(1).min(self.r.len() - 2);
        let mut out = [0.0; N];
        for c in 0..N {
            out[c] = hermite(
                self.r[i],
                self.r[i + 1],
                self.y[i][c],
                self.y[i + 1][c],
                self.f[i][c],
                self.f[i + 1][c],
                r,
            )
            .0;
        }
        Ok(out)
    }

    /// State and slope at a radius the integrator landed on exactly.
    pub fn at_node(&self, r: f64) -> Option<([f64; N], [f64; N])> {
        let fwd = self.r.last() >= self.r.first();
        let k = if fwd {
            self.r.partition_point(|&x| x < r)
        } else {
            self.r.partition_point(|&x| x > r)
        };
        for j in [k.saturating_sub(1), k, k + 1] {
            if j < self.r.len() && (self.r[j] - r).abs() <= 1e-14 * r.abs().max(1e-300) {
                return Some((self.y[j], self.f[j]));
            }
        }
        None
    }

    /// Profile of component `v` with derivative component `dv` on `grid`.
    /// Grid nodes that were stops are exact; `second` comes from the slope of `dv`.
    pub fn profile(&self, grid: &RadialGrid, v: usize, dv: usize) -> Result<RadialProfile> {
        let n = grid.len();
        let (mut a, mut b, mut c) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for &r in &grid.nodes {
            match self.at_node(r) {
                Some((y, f)) => {
                    a.push(y[v]);
                    b.push(y[dv]);
                    c.push(f[dv]);
                }
                None => return Err(Error::Domain(format!("grid node {r:e} was not an integration stop"))),
            }
        }
        RadialProfile::new(grid.clone(), a, b)?.with_second(c)
    }
}

// Dormand-Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Adaptive Dormand-Prince 5(4) with PI step control. Lands exactly on every
/// stop and on `r_end`.
pub fn integrate_ivp<const N: usize>(spec: &IvpSpec<'_, N>) -> Result<Trajectory<N>> {
    if !(spec.rtol > 0.0 && spec.atol > 0.0) {
        return Err(Error::Parameter("tolerances must be positive".into()));
    }
    let sgn = if spec.direction() == Direction::Forward { 1.0 } else { -1.0 };
    let span = (spec.r_end - spec.r_start).abs();
    let f = spec.rhs;

    let mut stops: Vec<f64> = spec
        .stops
        .iter()
        .copied()
        .filter(|&s| sgn * (s - spec.r_start) > 0.0 && sgn * (spec.r_end - s) > 0.0)
        .collect();
    stops.sort_by(|a, b| (sgn * a).partial_cmp(&(sgn * b)).unwrap());
    stops.dedup();
    stops.push(spec.r_end);
    let mut next_stop = 0;

    let mut r = spec.r_start;
    let mut y = spec.y_start;
    let mut k1 = f(r, &y);
    let mut traj = Trajectory {
        r: vec![r],
        y: vec![y],
        f: vec![k1],
        diagnostics: IvpDiagnostics { steps: 0, rejected: 0, h_min: f64::INFINITY, h_max: 0.0 },
    };
    if span == 0.0 {
        traj.diagnostics.h_min = 0.0;
        return Ok(traj);
    }
    if y.iter().chain(k1.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Integration { kind: IntegrationFailure::NonFinite, r, steps: 0 });
    }

    let err_norm = |y0: &[f64; N], y1: &[f64; N], e: &[f64; N]| -> f64 {
        let mut s = 0.0;
        for i in 0..N {
            let sc = spec.atol + spec.rtol * y0[i].abs().max(y1[i].abs());
            s += (e[i] / sc).powi(2);
        }
        (s / N as f64).sqrt()
    };

    let mut h = match spec.h_init {
        Some(h0) => h0.abs(),
        None => {
            // Hairer's starting-step heuristic
            let mut d0 = 0.0;
            let mut d1 = 0.0;
            for i in 0..N {
                let sc = spec.atol + spec.rtol * y[i].abs();
                d0 += (y[i] / sc).powi(2);
                d1 += (k1[i] / sc).powi(2);
            }
            let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = h0.min(span).max(1e-12 * span);
            let y1 = axpy(&y, sgn * h0, &[(1.0, &k1)]);
            let f1 = f(r + sgn * h0, &y1);
            let mut d2 = 0.0;
            for i in 0..N {
                let sc = spec.atol + spec.rtol * y[i].abs();
                d2 += ((f1[i] - k1[i]) / sc).powi(2);
            }
            let d2 = (d2 / N as f64).sqrt() / h0;
            let h1 = if d1.max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.max(d2)).powf(0.2)
            };
            (100.0 * h0).min(h1).min(span)
        }
    };
    if !h.is_finite() || h <= 0.0 {
        h = 1e-6 * span;
    }

    let mut err_prev: f64 = 1e-4;
    let mut rejected_last = false;
    loop {
        if traj.diagnostics.steps >= spec.max_steps {
            return Err(Error::Integration { kind: IntegrationFailure::MaxSteps, r, steps: traj.diagnostics.steps });
        }
        let target = stops[next_stop];
        let dist = sgn * (target - r);
        let mut hit = false;
        let mut hs = h;
        if hs >= dist * (1.0 - 1e-12) {
            hs = dist;
            hit = true;
        } else if hs > 0.5 * dist && hs < dist {
            // avoid a sliver step before the stop
            hs = 0.5 * dist;
        }
        if hs <= 1e-14 * r.abs().max(span * 1e-3) {
            return Err(Error::Integration { kind: IntegrationFailure::StepUnderflow, r, steps: traj.diagnostics.steps });
        }
        let sh = sgn * hs;
        let k2 = f(r + C2 * sh, &axpy(&y, sh, &[(A21, &k1)]));
        let k3 = f(r + C3 * sh, &axpy(&y, sh, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(r + C4 * sh, &axpy(&y, sh, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(r + C5 * sh, &axpy(&y, sh, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(r + sh, &axpy(&y, sh, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = axpy(&y, sh, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let r_new = if hit { target } else { r + sh };
        let k7 = f(r_new, &y_new);
        let mut e = [0.0; N];
        for i in 0..N {
            e[i] = sh * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let finite = y_new.iter().chain(k7.iter()).all(|v| v.is_finite());
        let err = if finite { err_norm(&y, &y_new, &e) } else { f64::INFINITY };

        if err <= 1.0 {
            r = r_new;
            y = y_new;
            k1 = k7;
            traj.r.push(r);
            traj.y.push(y);
            traj.f.push(k1);
            let d = &mut traj.diagnostics;
            d.steps += 1;
            d.h_min = d.h_min.min(hs);
            d.h_max = d.h_max.max(hs);
            if y.iter().any(|v| v.abs() > spec.blowup) {
                return Err(Error::Integration { kind: IntegrationFailure::BlowUp, r, steps: d.steps });
            }
            let err_c = err.max(1e-10);
            let mut fac = 0.9 * err_c.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            fac = fac.clamp(0.2, 5.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            err_prev = err_c;
            rejected_last = false;
            if !hit || hs >= h * 0.5 {
                h = hs * fac;
            }
            if hit {
                if next_stop + 1 == stops.len() {
                    return Ok(traj);
                }
                next_stop += 1;
            }
        } else {
            traj.diagnostics.rejected += 1;
            rejected_last = true;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h = hs * fac;
            if !finite && h <= 1e-14 * r.abs().max(span * 1e-3) {
                return Err(Error::Integration { kind: IntegrationFailure::NonFinite, r, steps: traj.diagnostics.steps });
            }
        }
    }
}

/// Dormand-Prince steps along a fixed radius sequence (typically the accepted
/// steps of an earlier adaptive run). The end state is then a smooth function
/// of the initial data, which matters for root finding in a shooting parameter.
pub fn integrate_on_steps<const N: usize>(
    rhs: &(dyn Fn(f64, &[f64; N]) -> [f64; N] + Sync),
    radii: &[f64],
    y0: [f64; N],
) -> Result<[f64; N]> {
    if radii.len() < 2 {
        return Err(Error::Parameter("a step sequence needs at least two radii".into()));
    }
    let mut y = y0;
    let mut k1 = rhs(radii[0], &y);
    for (i, w) in radii.windows(2).enumerate() {
        let (r, sh) = (w[0], w[1] - w[0]);
        let k2 = rhs(r + C2 * sh, &axpy(&y, sh, &[(A21, &k1)]));
        let k3 = rhs(r + C3 * sh, &axpy(&y, sh, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(r + C4 * sh, &axpy(&y, sh, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = rhs(r + C5 * sh, &axpy(&y, sh, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = rhs(r + sh, &axpy(&y, sh, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        y = axpy(&y, sh, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Integration { kind: IntegrationFailure::NonFinite, r: w[1], steps: i + 1 });
        }
        k1 = rhs(w[1], &y);
    }
    Ok(y)
}

/// Running integral I(r) = ∫₀ʳ f(s) sᵐ ds on the profile grid. Between nodes
/// a derivative-corrected trapezoid on g = f·sᵐ is used (sixth order when the
/// profile stores f''); the gap [0, r_lo] is closed with a two-point power-law
/// fit of f.
pub fn cumulative_integral(profile: &RadialProfile, m: i32) -> Result<RadialProfile> {
    let x = &profile.grid.nodes;
    let n = x.len();
    if x[0] < 0.0 {
        return Err(Error::Domain("profile must live on r >= 0".into()));
    }
    let mf = m as f64;
    let g: Vec<f64> = (0..n).map(|i| profile.values[i] * x[i].powi(m)).collect();
    let gp: Vec<f64> = (0..n)
        .map(|i| {
            let r = x[i];
            let dterm = if m == 0 { 0.0 } else { mf * profile.values[i] * r.powi(m - 1) };
            profile.derivs[i] * r.powi(m) + dterm
        })
        .collect();

    let head = if x[0] == 0.0 {
        0.0
    } else {
        let (f0, f1) = (profile.values[0], profile.values[1]);
        if f0 == 0.0 && f1 == 0.0 {
            0.0
        } else {
            let p = if f0 != 0.0 && f1 != 0.0 && f0.signum() == f1.signum() {
                (f1 / f0).ln() / (x[1] / x[0]).ln()
            } else {
                0.0
            };
            if p <= -(mf + 1.0) {
                return Err(Error::Domain(format!(
                    "non-integrable singularity at 0: local exponent {p:.3} with weight s^{m}"
                )));
            }
            f0 * x[0].powi(m + 1) / (p + mf + 1.0)
        }
    };

    // with stored second derivatives the segment rule is the exact integral
    // of the quintic Hermite interpolant of g
    let gpp: Option<Vec<f64>> = profile.second.as_ref().map(|s| {
        (0..n)
            .map(|i| {
                let r = x[i];
                let mut v = s[i] * r.powi(m);
                if m != 0 {
                    v += 2.0 * mf * profile.derivs[i] * r.powi(m - 1);
                }
                if m != 0 && m != 1 {
                    v += mf * (mf - 1.0) * profile.values[i] * r.powi(m - 2);
                }
                v
            })
            .collect()
    });
    let mut acc = Vec::with_capacity(n);
    acc.push(head);
    for i in 0..n - 1 {
        let h = x[i + 1] - x[i];
        let seg = match &gpp {
            Some(q) => {
                0.5 * h * (g[i] + g[i + 1]) + h * h / 10.0 * (gp[i] - gp[i + 1]) + h * h * h / 120.0 * (q[i] + q[i + 1])
            }
            None => 0.5 * h * (g[i] + g[i + 1]) + h * h / 12.0 * (gp[i] - gp[i + 1]),
        };
        acc.push(acc[i] + seg);
    }
    let second = gp.clone();
    RadialProfile::new(profile.grid.clone(), acc, g)?.with_second(second)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_grid_examples() {
        let g = make_graded_grid(0.01, 100.0, 3, 3).unwrap();
        let want = [0.01, 0.1, 1.0, 10.0, 100.0];
        assert_eq!(g.len(), 5);
        for (a, b) in g.nodes.iter().zip(want) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
        assert_eq!(make_graded_grid(0.5, 2.0, 2, 2).unwrap().nodes, vec![0.5, 1.0, 2.0]);
        let g = make_graded_grid(1e-6, 30.0, 200, 200).unwrap();
        assert_eq!(g.len(), 399);
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
        assert!(make_graded_grid(2.0, 30.0, 10, 10).is_err());
        assert!(make_graded_grid(0.1, 0.5, 10, 10).is_err());
    }

    #[test]
    fn exponential_growth() {
        let rhs = |_: f64, y: &[f64; 1]| [y[0]];
        let spec = IvpSpec::new(&rhs, 0.0, [1.0], 1.0, 1e-10);
        let t = integrate_ivp(&spec).unwrap();
        assert!((t.last().1[0] - std::f64::consts::E).abs() < 1e-9);
    }

    #[test]
    fn constant_solution_is_exact() {
        let rhs = |_: f64, _: &[f64; 1]| [0.0];
        let spec = IvpSpec::new(&rhs, 0.0, [3.25], 5.0, 1e-8);
        let t = integrate_ivp(&spec).unwrap();
        assert!(t.y.iter().all(|y| y[0] == 3.25));
    }

    #[test]
    fn harmonic_oscillator_and_stops() {
        let rhs = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let stops = [0.5, 1.0, 2.0];
        let mut spec = IvpSpec::new(&rhs, 0.0, [0.0, 1.0], std::f64::consts::PI, 1e-11);
        spec.stops = &stops;
        let t = integrate_ivp(&spec).unwrap();
        assert!(t.last().1[0].abs() < 1e-8);
        for s in stops {
            let (y, _) = t.at_node(s).unwrap();
            assert!((y[0] - s.sin()).abs() < 1e-9);
        }
        let mid = t.eval(1.7).unwrap();
        assert!((mid[0] - 1.7f64.sin()).abs() < 1e-7);
    }

    #[test]
    fn backward_integration() {
        let rhs = |_: f64, y: &[f64; 1]| [-y[0]];
        let spec = IvpSpec::new(&rhs, 2.0, [1.0], 0.0, 1e-11);
        assert_eq!(spec.direction(), Direction::Backward);
        let t = integrate_ivp(&spec).unwrap();
        assert!((t.last().1[0] - 2f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn underflow_reports_radius() {
        // y' = y^2 blows up at r = 1
        let rhs = |_: f64, y: &[f64; 1]| [y[0] * y[0]];
        let spec = IvpSpec::new(&rhs, 0.0, [1.0], 2.0, 1e-10);
        match integrate_ivp(&spec) {
            Err(Error::Integration { r, .. }) => assert!(r > 0.99 && r <= 1.0),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn max_steps_enforced() {
        let rhs = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let mut spec = IvpSpec::new(&rhs, 0.0, [0.0, 1.0], 100.0, 1e-10);
        spec.max_steps = 10;
        assert!(matches!(
            integrate_ivp(&spec),
            Err(Error::Integration { kind: IntegrationFailure::MaxSteps, .. })
        ));
    }

    fn grid() -> RadialGrid {
        make_graded_grid(1e-4, 10.0, 400, 200).unwrap()
    }

    #[test]
    fn cumulative_polynomials() {
        let g = grid();
        let one = RadialProfile::from_fn(&g, |_| (1.0, 0.0, 0.0));
        let i = cumulative_integral(&one, 2).unwrap();
        for (k, &r) in g.nodes.iter().enumerate() {
            assert!((i.values[k] - r.powi(3) / 3.0).abs() < 1e-10 * r.powi(3).max(1e-12));
        }
        let lin = RadialProfile::from_fn(&g, |r| (r, 1.0, 0.0));
        let i = cumulative_integral(&lin, 2).unwrap();
        for (k, &r) in g.nodes.iter().enumerate() {
            assert!((i.values[k] - r.powi(4) / 4.0).abs() <= 1e-10 * r.powi(4));
        }
    }

    #[test]
    fn cumulative_inverse_square() {
        let g = grid();
        let f = RadialProfile::from_fn(&g, |r| (2.0 / (r * r), -4.0 / r.powi(3), 12.0 / r.powi(4)));
        let i = cumulative_integral(&f, 2).unwrap();
        for (k, &r) in g.nodes.iter().enumerate() {
            assert!((i.values[k] - 2.0 * r).abs() < 1e-12 * r);
        }
        assert!(matches!(cumulative_integral(&f, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn quintic_second_derivative() {
        let g = RadialGrid::per_decade(0.1, 10.0, 100.0).unwrap();
        let p = RadialProfile::new(
            g.clone(),
            g.nodes.iter().map(|r| r.sin()).collect(),
            g.nodes.iter().map(|r| r.cos()).collect(),
        )
        .unwrap();
        for (i, &r) in g.nodes.iter().enumerate() {
            let h = 0.0231 * r;
            assert!((p.second_at(i) + r.sin()).abs() < 0.01 * h.powi(4) + 1e-15 / (h * h), "r = {r} err {}", (p.second_at(i) + r.sin()).abs());
        }
    }

    #[test]
    fn quintic_hermite_exact_for_quintics() {
        let p = |x: f64| [x.powi(5) - 2.0 * x * x + 1.0, 5.0 * x.powi(4) - 4.0 * x, 20.0 * x.powi(3) - 4.0];
        let (v, dv) = hermite5([0.3, 1.1], p(0.3), p(1.1), 0.77);
        assert!((v - p(0.77)[0]).abs() < 1e-13 && (dv - p(0.77)[1]).abs() < 1e-12);
    }

    #[test]
    fn hermite_is_continuous_and_exact_for_cubics() {
        let g = RadialGrid::log_uniform(0.5, 4.0, 7).unwrap();
        let f = |r: f64| (r.powi(3) - 2.0 * r, 3.0 * r * r - 2.0, 6.0 * r);
        let p = RadialProfile::from_fn(&g, f);
        for r in [0.5, 0.77, 1.3, 2.999, 4.0] {
            let (v, d) = p.eval(r).unwrap();
            assert!((v - f(r).0).abs() < 1e-12);
            assert!((d - f(r).1).abs() < 1e-11);
        }
        assert!(p.eval(4.5).is_err());
    }
}
