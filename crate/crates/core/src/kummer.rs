//! Closed-form check of the exterior mode u₁ for d = 3 through Kummer's
//! equation ξν'' + (b − ξ)ν' − aν = 0 with complex parameters.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::radial::{RadialGrid, RadialProfile};

type C = Complex64;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(z) by the Lanczos approximation, reflected for Re z < 1/2.
pub fn gamma_complex(z: C) -> Result<C> {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        return Err(Error::Pole(format!("Gamma has a pole at {}", z.re)));
    }
    if z.re < 0.5 {
        let s = (std::f64::consts::PI * z).sin();
        if s.norm() == 0.0 {
            return Err(Error::Pole(format!("Gamma has a pole at {z}")));
        }
        return Ok(std::f64::consts::PI / (s * gamma_complex(1.0 - z)?));
    }
    let z = z - 1.0;
    let mut x = C::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    Ok((2.0 * std::f64::consts::PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x)
}

/// Rising factorial (a)ₙ by recursion.
pub fn pochhammer(a: C, n: usize) -> C {
    (0..n).fold(C::new(1.0, 0.0), |acc, k| acc * (a + k as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KummerMode {
    Series,
    Asymptotic,
}

/// Kummer's M(a, b, ξ). The series is valid for ξ ≤ 30, the large-ξ
/// expansion Γ(b)/Γ(a) ξ^{a−b} e^ξ Σ (b−a)ₙ(1−a)ₙ/n! ξ^{−n} for ξ ≥ 20.
pub fn kummer_m(a: C, b: C, xi: f64, mode: KummerMode) -> Result<C> {
    if b.im == 0.0 && b.re <= 0.0 && b.re == b.re.round() {
        return Err(Error::Parameter(format!("b = {b} is a non-positive integer")));
    }
    match mode {
        KummerMode::Series => {
            if xi > 30.0 {
                return Err(Error::Domain(format!("series mode used at xi = {xi} > 30")));
            }
            let mut term = C::new(1.0, 0.0);
            let mut sum = term;
            for n in 0..10_000 {
                let nf = n as f64;
                term *= (a + nf) / (b + nf) * xi / (nf + 1.0);
                sum += term;
                if term.norm() < 1e-16 * sum.norm() {
                    return Ok(sum);
                }
            }
            Err(Error::Precision(format!("M series did not converge at xi = {xi}")))
        }
        KummerMode::Asymptotic => {
            if xi < 20.0 {
                return Err(Error::Domain(format!("asymptotic mode used at xi = {xi} < 20")));
            }
            let pre = gamma_complex(b)? / gamma_complex(a)? * C::new(xi, 0.0).powc(a - b) * xi.exp();
            Ok(pre * smallest_term_sum(b - a, 1.0 - a, xi, 1.0))
        }
    }
}

/// Σ (p)ₙ(q)ₙ/n! (s/ξ)ⁿ truncated before the smallest term.
fn smallest_term_sum(p: C, q: C, xi: f64, s: f64) -> C {
    let mut term = C::new(1.0, 0.0);
    let mut sum = term;
    let mut last = f64::INFINITY;
    for n in 0..200 {
        let nf = n as f64;
        let next = term * (p + nf) * (q + nf) / (nf + 1.0) * (s / xi);
        if next.norm() >= last || next.norm() < 1e-17 * sum.norm() {
            break;
        }
        last = next.norm();
        term = next;
        sum += term;
    }
    sum
}

/// Tricomi's U(a, b, ξ): two-M connection formula for ξ < 20, large-ξ
/// expansion ξ^{−a} Σ (a)ₙ(a−b+1)ₙ/n! (−ξ)^{−n} otherwise.
pub fn tricomi_u(a: C, b: C, xi: f64) -> Result<C> {
    if xi <= 0.0 {
        return Err(Error::Domain(format!("Tricomi U needs xi > 0, got {xi}")));
    }
    if xi >= 20.0 {
        return Ok(C::new(xi, 0.0).powc(-a) * smallest_term_sum(a, a - b + 1.0, xi, -1.0));
    }
    let m1 = kummer_m(a, b, xi, KummerMode::Series)?;
    let m2 = kummer_m(a - b + 1.0, 2.0 - b, xi, KummerMode::Series)?;
    let c1 = gamma_complex(1.0 - b)? / gamma_complex(a - b + 1.0)?;
    let c2 = gamma_complex(b - 1.0)? / gamma_complex(a)?;
    Ok(c1 * m1 + c2 * C::new(xi, 0.0).powc(1.0 - b) * m2)
}

/// Indicial root γ = 5/2 ± i√7/2 (d = 3) and the Kummer parameters a = 1 − γ/2, b = 7/2 − γ.
pub fn kummer_parameters(plus: bool) -> (C, C, C) {
    let s = if plus { 1.0 } else { -1.0 };
    let gamma = C::new(2.5, s * 7f64.sqrt() / 2.0);
    (gamma, 1.0 - gamma / 2.0, 3.5 - gamma)
}

/// 4^{γ/2−1} r^{−γ} U(a, b, r²/4) and its r-derivative for one root γ;
/// the factor makes r²u → 1.
fn u1_branch(r: f64, plus: bool) -> Result<(C, C)> {
    let (g, a, b) = kummer_parameters(plus);
    let xi = r * r / 4.0;
    let four = C::new(4.0, 0.0).powc(g / 2.0 - 1.0);
    let rg = C::new(r, 0.0).powc(-g);
    let u = tricomi_u(a, b, xi)?;
    let du = -a * tricomi_u(a + 1.0, b + 1.0, xi)?;
    Ok((four * rg * u, four * rg * (-g / r * u + du * (r / 2.0))))
}

pub const KUMMER_R_MIN: f64 = 2.0;

#[derive(Debug, Clone, Copy)]
pub struct KummerU1 {
    pub value: f64,
    pub deriv: f64,
    /// Imaginary part of the averaged γ₊ / γ₋ combination.
    pub imag: f64,
}

/// Decaying d = 3 exterior mode from the Tricomi branch, normalized r²u₁ → 1.
pub fn u1_via_kummer(r: f64) -> Result<KummerU1> {
    if r < KUMMER_R_MIN {
        return Err(Error::Domain(format!("Kummer route for u1 needs r >= {KUMMER_R_MIN}, got {r}")));
    }
    let (up, dp) = u1_branch(r, true)?;
    let (um, dm) = u1_branch(r, false)?;
    let v = (up + um) / 2.0;
    let d = (dp + dm) / 2.0;
    Ok(KummerU1 { value: v.re, deriv: d.re, imag: v.im })
}

pub fn u1_via_kummer_profile(grid: &RadialGrid) -> Result<RadialProfile> {
    let mut v = Vec::with_capacity(grid.len());
    let mut d = Vec::with_capacity(grid.len());
    for &r in &grid.nodes {
        let k = u1_via_kummer(r)?;
        v.push(k.value);
        d.push(k.deriv);
    }
    RadialProfile::new(grid.clone(), v, d)
}

/// Re(r^{−γ₊} M(a₊, b₊, r²/4)), the solution behaving like r^{−5/2} cos(√7/2 log r)
/// at the origin, with its derivative.
pub fn origin_solution(r: f64) -> Result<(f64, f64)> {
    let (g, a, b) = kummer_parameters(true);
    let xi = r * r / 4.0;
    let rg = C::new(r, 0.0).powc(-g);
    let m = kummer_m(a, b, xi, KummerMode::Series)?;
    let dm = a / b * kummer_m(a + 1.0, b + 1.0, xi, KummerMode::Series)?;
    let v = rg * m;
    let d = rg * (-g / r * m + dm * (r / 2.0));
    Ok((v.re, d.re))
}

pub fn origin_solution_profile(grid: &RadialGrid) -> Result<RadialProfile> {
    let mut v = Vec::with_capacity(grid.len());
    let mut d = Vec::with_capacity(grid.len());
    for &r in &grid.nodes {
        let (a, b) = origin_solution(r)?;
        v.push(a);
        d.push(b);
    }
    RadialProfile::new(grid.clone(), v, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        let g5 = gamma_complex(C::new(5.0, 0.0)).unwrap();
        assert!((g5.re - 24.0).abs() < 1e-10 && g5.im.abs() < 1e-12);
        let gh = gamma_complex(C::new(0.5, 0.0)).unwrap();
        assert!((gh.re - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        assert!(matches!(gamma_complex(C::new(-2.0, 0.0)), Err(Error::Pole(_))));
        assert!(matches!(gamma_complex(C::new(0.0, 0.0)), Err(Error::Pole(_))));
        // Γ(1+i) = iΓ(i)
        let i = C::new(0.0, 1.0);
        let lhs = gamma_complex(1.0 + i).unwrap();
        let rhs = i * gamma_complex(i).unwrap();
        assert!((lhs - rhs).norm() / lhs.norm() < 1e-12);
        // |Γ(iy)|² = π / (y sinh πy)
        let y: f64 = 1.7;
        let g = gamma_complex(C::new(0.0, y)).unwrap();
        let want = std::f64::consts::PI / (y * (std::f64::consts::PI * y).sinh());
        assert!((g.norm_sqr() - want).abs() / want < 1e-12);
    }

    #[test]
    fn kummer_identities() {
        let (_, a, b) = kummer_parameters(true);
        assert_eq!(kummer_m(a, b, 0.0, KummerMode::Series).unwrap(), C::new(1.0, 0.0));
        let one = C::new(1.0, 0.0);
        let m = kummer_m(one, one, 5.0, KummerMode::Series).unwrap();
        assert!((m.re - 5f64.exp()).abs() / 5f64.exp() < 1e-12);
        let s = kummer_m(a, b, 25.0, KummerMode::Series).unwrap();
        let l = kummer_m(a, b, 25.0, KummerMode::Asymptotic).unwrap();
        assert!((s - l).norm() / s.norm() < 1e-6, "{}", (s - l).norm() / s.norm());
        assert!(kummer_m(a, b, 31.0, KummerMode::Series).is_err());
        assert!(kummer_m(a, C::new(-1.0, 0.0), 1.0, KummerMode::Series).is_err());
    }

    #[test]
    fn tricomi_branches_overlap() {
        // connection formula vs large-ξ expansion just below the switch
        let (_, a, b) = kummer_parameters(true);
        let xi = 19.5;
        let m1 = kummer_m(a, b, xi, KummerMode::Series).unwrap();
        let m2 = kummer_m(a - b + 1.0, 2.0 - b, xi, KummerMode::Series).unwrap();
        let conn = gamma_complex(1.0 - b).unwrap() / gamma_complex(a - b + 1.0).unwrap() * m1
            + gamma_complex(b - 1.0).unwrap() / gamma_complex(a).unwrap() * C::new(xi, 0.0).powc(1.0 - b) * m2;
        let asy = C::new(xi, 0.0).powc(-a) * smallest_term_sum(a, a - b + 1.0, xi, -1.0);
        assert!((conn - asy).norm() / asy.norm() < 1e-7);
    }

    #[test]
    fn u1_kummer_normalization_and_symmetry() {
        let k = u1_via_kummer(30.0).unwrap();
        assert!((900.0 * k.value - 1.0).abs() < 2.3e-3, "r²u₁(30) = {}", 900.0 * k.value);
        assert!((900.0 * k.value - (1.0 - 2.0 / 900.0)).abs() < 1e-4);
        // series oracle r^{-2}(1 − 2r^{-2} + 4r^{-4})
        let want = (1.0 - 2.0 / 900.0 + 4.0 / 810000.0) / 900.0;
        assert!((k.value - want).abs() / want < 1e-7);
        assert!(u1_via_kummer(5.0).unwrap().imag.abs() < 1e-10);
        assert!(u1_via_kummer(1.0).is_err());
    }

    #[test]
    fn pochhammer_matches_gamma_ratio() {
        let (_, a, b) = kummer_parameters(false);
        for z in [a, b, C::new(0.3, 2.0)] {
            for n in [0usize, 1, 7, 20, 50] {
                let direct = gamma_complex(z + n as f64).unwrap() / gamma_complex(z).unwrap();
                let rec = pochhammer(z, n);
                assert!((direct - rec).norm() / rec.norm() < 1e-10, "z = {z}, n = {n}");
            }
        }
    }
}
