use std::sync::OnceLock;

use num_complex::Complex64 as C;
use proptest::prelude::*;

use ks_selfsim::evolution::{exact_solution, lp_distance, mol_simulate, BlowupSolution, FvGrid, PdeState, SimOptions};
use ks_selfsim::kummer::gamma_complex;
use ks_selfsim::matching::{find_profiles, MatchContext};
use ks_selfsim::radial::{cumulative_integral, hermite, RadialGrid, RadialProfile};
use ks_selfsim::steady::{mass_transform, mass_transform_inverse};
use ks_selfsim::Dimension;

fn sol() -> &'static BlowupSolution {
    static S: OnceLock<BlowupSolution> = OnceLock::new();
    S.get_or_init(|| {
        let set = find_profiles(Dimension::new(3).unwrap(), 0.05, 1).unwrap();
        BlowupSolution::new(set.profiles[0].clone(), 1.0).unwrap()
    })
}

fn gaussian(grid: &RadialGrid, amp: f64, w: f64) -> RadialProfile {
    RadialProfile::from_fn(grid, |r| {
        let e = amp * (-r * r / w).exp();
        (e, -2.0 * r / w * e, (4.0 * r * r / (w * w) - 2.0 / w) * e)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_solution_is_self_similar(t in 0.0f64..0.99, x in 1e-3f64..20.0) {
        let s = sol();
        let tau = 1.0 - t;
        let y = x / tau.sqrt();
        let u = exact_solution(s, x, t).unwrap();
        prop_assert!((u * tau - s.profile_value(y)).abs() <= 1e-12 * s.profile_value(y).abs());
        prop_assert!(u > 0.0);
    }

    #[test]
    fn lp_rejects_supercritical_exponents(extra in 0.0f64..3.0) {
        let p = 1.5 + extra;
        prop_assert!(lp_distance(sol(), 0.5, p).is_err());
    }

    #[test]
    fn transform_round_trip_on_gaussians(amp in 0.1f64..10.0, w in 0.2f64..5.0, d in 3u32..=9) {
        let dim = Dimension::new(d).unwrap();
        let grid = RadialGrid::per_decade(1e-4, 30.0, 200.0).unwrap();
        let u = gaussian(&grid, amp, w);
        let back = mass_transform_inverse(&mass_transform(&u, dim).unwrap(), dim);
        for (i, &r) in grid.nodes.iter().enumerate() {
            if r < 10.0 {
                prop_assert!((back.values[i] - u.values[i]).abs() < 1e-6 * amp, "r = {}", r);
            }
        }
    }

    #[test]
    fn cumulative_integral_is_linear_and_monotone(a in -5.0f64..5.0, b in -5.0f64..5.0, m in 0i32..=8) {
        let grid = RadialGrid::per_decade(1e-3, 10.0, 100.0).unwrap();
        let f = gaussian(&grid, 1.0, 1.0);
        let g = RadialProfile::from_fn(&grid, |r| (1.0 / (1.0 + r), -1.0 / (1.0 + r).powi(2), 2.0 / (1.0 + r).powi(3)));
        let mix = RadialProfile::from_fn(&grid, |r| {
            let (e, x) = ((-r * r).exp(), 1.0 + r);
            (a * e + b / x, a * -2.0 * r * e - b / (x * x), a * (4.0 * r * r - 2.0) * e + 2.0 * b / x.powi(3))
        });
        let (fi, gi, mi) = (
            cumulative_integral(&f, m).unwrap(),
            cumulative_integral(&g, m).unwrap(),
            cumulative_integral(&mix, m).unwrap(),
        );
        // the segment sums are linear; the power-law head on [0, r_min] is not,
        // and is arbitrary when the mix nearly cancels at r_min
        let inc = |p: &RadialProfile, i: usize| p.values[i] - p.values[0];
        let head = grid.nodes[0].powi(m + 1) * (a.abs() + b.abs());
        let cancels = mix.values[0].abs() < 0.01 * (a.abs() + b.abs());
        for i in 0..grid.len() {
            let scale = 1.0 + fi.values[i].abs() + gi.values[i].abs();
            let lin = a * inc(&fi, i) + b * inc(&gi, i);
            prop_assert!((inc(&mi, i) - lin).abs() <= 1e-12 * scale);
            let full = a * fi.values[i] + b * gi.values[i];
            prop_assert!(cancels || (mi.values[i] - full).abs() <= 2.0 * head + 1e-12 * scale);
        }
        prop_assert!(fi.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn hermite_reproduces_cubics(c in prop::array::uniform4(-3.0f64..3.0), x0 in 0.0f64..1.0, h in 0.01f64..2.0, s in 0.0f64..1.0) {
        let p = |x: f64| c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
        let dp = |x: f64| c[1] + 2.0 * c[2] * x + 3.0 * c[3] * x * x;
        let x1 = x0 + h;
        let x = x0 + s * h;
        let (v, d) = hermite(x0, x1, p(x0), p(x1), dp(x0), dp(x1), x);
        prop_assert!((v - p(x)).abs() < 1e-10 * (1.0 + p(x).abs()));
        prop_assert!((d - dp(x)).abs() < 1e-8 * (1.0 + dp(x).abs()));
    }

    #[test]
    fn gamma_recurrence(re in 0.1f64..6.0, im in -6.0f64..6.0) {
        let z = C::new(re, im);
        let g1 = gamma_complex(z + 1.0).unwrap();
        let g0 = gamma_complex(z).unwrap();
        prop_assert!((g1 - z * g0).norm() <= 1e-10 * g1.norm());
    }

    #[test]
    fn oscillation_frequency_solves_indicial_equation(d in 3u32..=9) {
        let dim = Dimension::new(d).unwrap();
        let df = d as f64;
        let x = C::new(-(df + 2.0) / 2.0, dim.omega());
        let res = x * x + (df + 2.0) * x + 4.0 * (df - 1.0);
        prop_assert!(res.norm() < 1e-12);
        prop_assert!(dim.omega() > 0.0);
    }

    #[test]
    fn mol_keeps_sign_and_balances_mass(amp in 0.1f64..20.0, w in 0.3f64..3.0, d in 3u32..=9) {
        let dim = Dimension::new(d).unwrap();
        let grid = FvGrid::sinh_graded(dim, 6.0, 60, 2.0).unwrap();
        let u: Vec<f64> = grid.centers.iter().map(|r| amp * (-r * r / w).exp()).collect();
        let st = PdeState::new(grid, u, 0.0).unwrap();
        let traj = mol_simulate(&st, &[0.01, 0.02], SimOptions::default()).unwrap();
        for snap in &traj.snapshots {
            prop_assert!(snap.u.iter().all(|&v| v >= 0.0));
        }
        prop_assert!(traj.mass_drift() < 1e-10 || traj.stopped_early);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn predicted_zeros_are_half_periods_apart(r0 in 0.03f64..0.08) {
        let dim = Dimension::new(3).unwrap();
        let ctx = MatchContext::new(dim, r0).unwrap();
        let z = ctx.predictor.zeros(1e-8, r0);
        prop_assert!(z.len() > 3);
        for w in z.windows(2) {
            prop_assert!(((w[0] / w[1]).ln() - std::f64::consts::PI / dim.omega()).abs() < 1e-9);
        }
    }
}
