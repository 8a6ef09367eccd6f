//! Complex digamma, trigonometric helpers and the Matsubara-series engine.
//!
//! Every thermal series in the library has the form
//!
//! ```text
//! PS[φ] = cot(πa)·φ(a)/2 + (1/π) Σ_{l≥1} l·φ(l)/(l² − a²),   a = Λ/2πT
//! ```
//!
//! The first piece comes from the cutoff pole, the sum from the Matsubara
//! poles. When `a` sits close to an integer `l*` the `l*` term and the cot
//! term are both huge with opposite signs, so [`pair_sum`] combines them
//! analytically using the divided difference of φ supplied by the caller.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{QbmError, Result};
use crate::quad::{self, QuadTol};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Truncation and resonance control for Matsubara series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatsubaraConfig {
    pub rel_tol: f64,
    pub max_terms: usize,
    pub resonance_guard: f64,
}

impl Default for MatsubaraConfig {
    fn default() -> Self {
        MatsubaraConfig {
            rel_tol: 1e-12,
            max_terms: 10_000_000,
            resonance_guard: 1e-3,
        }
    }
}

/// Ψ(z) for complex z away from the non-positive integers.
pub fn digamma(z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round() {
        return Err(QbmError::Pole {
            op: "specialfn::digamma",
            re: z.re,
            im: z.im,
        });
    }
    if z.re < 0.5 {
        // Ψ(z) = Ψ(1 − z) − π cot(πz)
        let refl = digamma_right(Complex64::new(1.0, 0.0) - z);
        return Ok(refl - cot_c(z * PI) * PI);
    }
    Ok(digamma_right(z))
}

fn digamma_right(mut z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    while z.norm() < 12.0 {
        acc -= z.inv();
        z += 1.0;
    }
    let zi = z.inv();
    let zi2 = zi * zi;
    // Bernoulli asymptotic series
    const C: [f64; 7] = [
        -1.0 / 12.0,
        1.0 / 120.0,
        -1.0 / 252.0,
        1.0 / 240.0,
        -1.0 / 132.0,
        691.0 / 32760.0,
        -1.0 / 12.0,
    ];
    let mut series = Complex64::new(0.0, 0.0);
    for c in C.iter().rev() {
        series = (series + *c) * zi2;
    }
    acc + z.ln() - zi * 0.5 + series
}

/// Real-argument convenience wrapper.
pub fn digamma_real(x: f64) -> Result<f64> {
    digamma(Complex64::new(x, 0.0)).map(|z| z.re)
}

/// −(Euler's constant), the value Ψ(1).
pub fn digamma_at_one() -> f64 {
    -EULER_GAMMA
}

/// cot(z) for complex z, stable for large |Im z|.
pub fn cot_c(z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    if z.im >= 0.0 {
        let e = (i * z * 2.0).exp();
        i * (e + 1.0) / (e - 1.0)
    } else {
        let e = (-i * z * 2.0).exp();
        i * (1.0 + e) / (1.0 - e)
    }
}

/// coth(z) for complex z, via coth(z) = i·cot(iz).
pub fn coth_c(z: Complex64) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    i * cot_c(i * z)
}

pub fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

/// cot(x) − 1/x, accurate near 0.
pub fn cot_minus_inv(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        -x * (1.0 / 3.0 + x2 * (1.0 / 45.0 + x2 * (2.0 / 945.0 + x2 / 4725.0)))
    } else {
        1.0 / x.tan() - 1.0 / x
    }
}

/// A function sampled by the Matsubara engine.
pub trait SeriesTerm {
    fn value(&self, x: f64) -> Complex64;

    /// (φ(x) − φ(y))/(x − y); override when cancellation matters.
    fn divided_difference(&self, x: f64, y: f64) -> Complex64 {
        (self.value(x) - self.value(y)) / (x - y)
    }
}

/// Result of a Matsubara series: value plus a certified bound on the
/// truncation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: Complex64,
    pub error: f64,
    pub terms: usize,
}

/// Index of the integer within `guard` of `a`, if any (l ≥ 1).
pub fn resonant_index(a: f64, guard: f64) -> Option<u64> {
    let l = a.round();
    if l >= 1.0 && (a - l).abs() < guard {
        Some(l as u64)
    } else {
        None
    }
}

/// Evaluates PS[φ] (see the module docs) with resonance pairing.
pub fn pair_sum<P: SeriesTerm>(phi: &P, a: f64, cfg: &MatsubaraConfig) -> Result<SeriesValue> {
    let res = resonant_index(a, cfg.resonance_guard);
    let head = match res {
        None => phi.value(a) * ((PI * a).tan().recip() * 0.5),
        Some(ls) => {
            let l = ls as f64;
            let eps = a - l;
            let fa = phi.value(a);
            let fl = phi.value(l);
            let dd = if eps == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                phi.divided_difference(a, l)
            };
            // the limit of the pair is finite even at eps = 0 thanks to dd
            let dd = if eps == 0.0 {
                derivative_estimate(phi, l)
            } else {
                dd
            };
            fa * (0.5 * cot_minus_inv(PI * eps))
                + dd / (2.0 * PI)
                + fl / (2.0 * PI * (2.0 * l + eps))
        }
    };
    let (tail, terms) = matsubara_tail(phi, a, res, cfg)?;
    Ok(SeriesValue {
        value: head + tail.value,
        error: tail.error,
        terms,
    })
}

fn derivative_estimate<P: SeriesTerm>(phi: &P, x: f64) -> Complex64 {
    let h = 1e-5 * x.max(1.0);
    phi.divided_difference(x + h, x - h)
}

/// Evaluates (1/π) Σ_{l≥1, l≠skip} l·φ(l)/(l² − a²) with an integral tail.
pub fn matsubara_tail<P: SeriesTerm>(
    phi: &P,
    a: f64,
    skip: Option<u64>,
    cfg: &MatsubaraConfig,
) -> Result<(SeriesValue, usize)> {
    let lmax = (1000.0f64).max((4.0 * a).ceil()) as usize;
    if lmax > cfg.max_terms {
        return Err(QbmError::NonConvergence {
            op: "specialfn::pair_sum",
            max_terms: cfg.max_terms,
        });
    }
    let a2 = a * a;
    let term = |x: f64| phi.value(x) * (x / (x * x - a2));
    let mut sum = Complex64::new(0.0, 0.0);
    let mut comp = Complex64::new(0.0, 0.0);
    for l in 1..=lmax {
        if Some(l as u64) == skip {
            continue;
        }
        // Kahan summation
        let y = term(l as f64) - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    // Euler-Maclaurin tail: midpoint ∫_{L+1/2}^∞ plus its g′/24 correction.
    // The plain trapezoid estimate ∫_L^∞ − g(L)/2 gives an error bound.
    let big_l = lmax as f64;
    let x0 = big_l + 0.5;
    let slope = (term(x0 + 0.25) - term(x0 - 0.25)) * 2.0;
    let tail_mid = tail_integral(&term, x0)? + slope / 24.0;
    let tail_trap = tail_integral(&term, big_l)? - term(big_l) * 0.5;
    let total = (sum + tail_mid) / PI;
    let err = ((tail_mid - tail_trap).norm() + 1e-16 * sum.norm() * (lmax as f64).sqrt()) / PI;
    Ok((
        SeriesValue {
            value: total,
            error: err,
            terms: lmax,
        },
        lmax,
    ))
}

fn tail_integral<F: Fn(f64) -> Complex64>(g: &F, x0: f64) -> Result<Complex64> {
    // x = x0/u, dx = x0/u² du
    let tol = QuadTol::rel(1e-10).with_abs(1e-300);
    let re = quad::integrate(
        |u: f64| {
            if u <= 0.0 {
                0.0
            } else {
                g(x0 / u).re * x0 / (u * u)
            }
        },
        0.0,
        1.0,
        tol,
    )?;
    let im = quad::integrate(
        |u: f64| {
            if u <= 0.0 {
                0.0
            } else {
                g(x0 / u).im * x0 / (u * u)
            }
        },
        0.0,
        1.0,
        tol,
    )?;
    Ok(Complex64::new(re.value, im.value))
}

/// D̂(x) = (x² + b²)² − x²c² with b = Ω_R/2πT, c = γ/2πT.
#[derive(Debug, Clone, Copy)]
pub struct InvDhat {
    pub b: f64,
    pub c: f64,
}

impl InvDhat {
    pub fn dhat(&self, x: f64) -> f64 {
        let s = x * x + self.b * self.b;
        s * s - x * x * self.c * self.c
    }
}

impl SeriesTerm for InvDhat {
    fn value(&self, x: f64) -> Complex64 {
        Complex64::new(1.0 / self.dhat(x), 0.0)
    }
    fn divided_difference(&self, x: f64, y: f64) -> Complex64 {
        // D̂(x) − D̂(y) = (x − y)(x + y)(x² + y² + 2b² − c²)
        let num = -(x + y) * (x * x + y * y + 2.0 * self.b * self.b - self.c * self.c);
        Complex64::new(num / (self.dhat(x) * self.dhat(y)), 0.0)
    }
}

/// x²/D̂(x).
#[derive(Debug, Clone, Copy)]
pub struct X2OverDhat(pub InvDhat);

impl SeriesTerm for X2OverDhat {
    fn value(&self, x: f64) -> Complex64 {
        Complex64::new(x * x / self.0.dhat(x), 0.0)
    }
    fn divided_difference(&self, x: f64, y: f64) -> Complex64 {
        // x²D̂(y) − y²D̂(x) = (x − y)(x + y)(b⁴ − x²y²)
        let b4 = self.0.b.powi(4);
        let num = (x + y) * (b4 - x * x * y * y);
        Complex64::new(num / (self.0.dhat(x) * self.0.dhat(y)), 0.0)
    }
}

/// F(Λ/T, Ω_R/T, γ/T) = a²/(4π³) Σ_{l≥1} l/((l² − a²)D̂(l)).
///
/// This is the bare Matsubara series; it diverges at integer a, so a
/// Resonance error is returned inside the guard band. Callers that need the
/// finite physical combination use [`pair_sum`] with the cot term.
pub fn matsubara_f(
    lambda: f64,
    omega_r: f64,
    gamma: f64,
    temperature: f64,
    cfg: &MatsubaraConfig,
) -> Result<f64> {
    const OP: &str = "specialfn::matsubara_F";
    check_thermal(OP, lambda, temperature)?;
    let tp = 2.0 * PI * temperature;
    let a = lambda / tp;
    if let Some(l) = resonant_index(a, cfg.resonance_guard) {
        return Err(QbmError::Resonance { op: OP, l, a });
    }
    let phi = InvDhat {
        b: omega_r / tp,
        c: gamma / tp,
    };
    let (s, _) = matsubara_tail(&phi, a, None, cfg)?;
    certify(OP, s, cfg)?;
    // (1/π)Σ is already in s; F = a²/(4π²)·s
    Ok(a * a / (4.0 * PI * PI) * s.value.re)
}

/// I(Λ/T, Ω_R/T, γ/T) including the cutoff-pole term, so that γ·I is the
/// full thermal correction to ⟨p²⟩ beyond the resonant-pole bracket:
/// I = −a²·PS[x²/D̂]. For Λ ≫ Ω_R, γ the cutoff piece reduces to
/// −cot(Λ/2T)/2. Resonances are handled by pairing.
pub fn matsubara_i(
    lambda: f64,
    omega_r: f64,
    gamma: f64,
    temperature: f64,
    cfg: &MatsubaraConfig,
) -> Result<f64> {
    const OP: &str = "specialfn::matsubara_I";
    check_thermal(OP, lambda, temperature)?;
    let tp = 2.0 * PI * temperature;
    let a = lambda / tp;
    let phi = X2OverDhat(InvDhat {
        b: omega_r / tp,
        c: gamma / tp,
    });
    let s = pair_sum(&phi, a, cfg)?;
    certify(OP, s, cfg)?;
    Ok(-a * a * s.value.re)
}

/// The Matsubara-pole part of I alone, −(a²/π) Σ l³/((l² − a²)D̂(l)),
/// without the cutoff-pole term. Bare series, so resonances are errors.
pub fn matsubara_i_series(
    lambda: f64,
    omega_r: f64,
    gamma: f64,
    temperature: f64,
    cfg: &MatsubaraConfig,
) -> Result<f64> {
    const OP: &str = "specialfn::matsubara_I";
    check_thermal(OP, lambda, temperature)?;
    let tp = 2.0 * PI * temperature;
    let a = lambda / tp;
    if let Some(l) = resonant_index(a, cfg.resonance_guard) {
        return Err(QbmError::Resonance { op: OP, l, a });
    }
    let phi = X2OverDhat(InvDhat {
        b: omega_r / tp,
        c: gamma / tp,
    });
    let (s, _) = matsubara_tail(&phi, a, None, cfg)?;
    certify(OP, s, cfg)?;
    Ok(-a * a * s.value.re)
}

fn check_thermal(op: &'static str, lambda: f64, temperature: f64) -> Result<()> {
    if !(temperature > 0.0) {
        return Err(QbmError::domain(op, "requires T > 0"));
    }
    if !(lambda > 0.0) {
        return Err(QbmError::domain(op, "requires lambda > 0"));
    }
    Ok(())
}

fn certify(op: &'static str, s: SeriesValue, cfg: &MatsubaraConfig) -> Result<()> {
    if s.error > cfg.rel_tol.max(1e-15) * s.value.norm().max(1e-300) && s.error > 1e-300 {
        // the tail bound is conservative; only fail when it is far off
        if s.error > 1e3 * cfg.rel_tol * s.value.norm() {
            return Err(QbmError::NonConvergence {
                op,
                max_terms: s.terms,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn digamma_at_one_is_minus_euler() {
        let v = digamma(c(1.0, 0.0)).unwrap();
        assert!((v.re + 0.577_215_664_901_532_9).abs() < 1e-14);
        assert_eq!(v.im, 0.0);
    }

    #[test]
    fn digamma_small_argument_limit() {
        let z = 1e-7;
        let v = digamma_real(z).unwrap() + 1.0 / z;
        assert!((v + 0.577_215_664_901_532_9).abs() < 1e-6);
    }

    #[test]
    fn digamma_large_argument() {
        let v = digamma_real(1e6).unwrap();
        assert!((v - 1e6f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn digamma_poles() {
        assert!(digamma(c(0.0, 0.0)).is_err());
        assert!(digamma(c(-3.0, 0.0)).is_err());
        assert!(digamma(c(-3.0, 1e-9)).is_ok());
    }

    #[test]
    fn digamma_known_values() {
        // Ψ(1/2) = −γ − 2 ln 2, Im Ψ(i) = (π coth π)/2 − ... use Im Ψ(1+iy) = −1/(2y) + (π/2)coth(πy)
        let v = digamma_real(0.5).unwrap();
        assert!((v - (-0.577_215_664_901_532_9 - 2.0 * 2f64.ln())).abs() < 1e-14);
        for y in [0.3f64, 1.0, 7.5] {
            let z = digamma(c(1.0, y)).unwrap();
            let exp = -0.5 / y + 0.5 * PI / (PI * y).tanh();
            assert!((z.im - exp).abs() < 1e-13 * exp.abs().max(1.0));
        }
    }

    #[test]
    fn i_coth_ix_is_cot_x() {
        for x in [0.3f64, 1.7, 12.9] {
            let lhs = c(0.0, 1.0) * coth_c(c(0.0, x));
            assert!((lhs.re - 1.0 / x.tan()).abs() < 1e-13 * (1.0 / x.tan()).abs().max(1.0));
            assert!(lhs.im.abs() < 1e-13);
        }
    }

    #[test]
    fn cot_minus_inv_matches_direct() {
        for x in [1e-3f64, 9.9e-3, 1.1e-2, 0.4] {
            let d = 1.0 / x.tan() - 1.0 / x;
            assert!((cot_minus_inv(x) - d).abs() < 1e-11);
        }
    }

    struct Expo(f64);
    impl SeriesTerm for Expo {
        fn value(&self, x: f64) -> Complex64 {
            c((-self.0 * x).exp(), 0.0)
        }
    }

    #[test]
    fn pair_sum_is_continuous_through_resonance() {
        let cfg = MatsubaraConfig::default();
        let phi = InvDhat { b: 0.2, c: 0.01 };
        let below = pair_sum(&phi, 3.0 - 1.5e-3, &cfg).unwrap().value.re;
        let inside = pair_sum(&phi, 3.0 - 0.5e-3, &cfg).unwrap().value.re;
        let centre = pair_sum(&phi, 3.0, &cfg).unwrap().value.re;
        let above = pair_sum(&phi, 3.0 + 1.5e-3, &cfg).unwrap().value.re;
        // smooth: second difference small
        let lin = below + (above - below) * (1.0 / 3.0);
        assert!((inside - lin).abs() < 1e-6 * centre.abs());
        assert!((centre - 0.5 * (below + above)).abs() < 1e-6 * centre.abs());
    }

    #[test]
    fn pair_sum_of_exponential_matches_closed_form() {
        // Σ_{l≥1} l e^{-sl}/(l²−a²) + (π/2)cot(πa)e^{-sa} has no simple form, so
        // check against brute force with many terms.
        let cfg = MatsubaraConfig::default();
        let s = 0.01;
        let a = 2.3;
        let v = pair_sum(&Expo(s), a, &cfg).unwrap().value.re;
        let mut brute = 0.5 * (-s * a).exp() / (PI * a).tan();
        for l in 1..200_000 {
            let l = l as f64;
            brute += l * (-s * l).exp() / (l * l - a * a) / PI;
        }
        assert!((v - brute).abs() < 1e-11);
    }

    #[test]
    fn tail_bound_dominates_doubling_change() {
        // x²/D̂ terms decay as 1/l²; compare L with 2L truncation
        let phi = X2OverDhat(InvDhat { b: 0.15, c: 1e-3 });
        let a = 50.0 + 0.37;
        let cfg = MatsubaraConfig::default();
        let (s, n) = matsubara_tail(&phi, a, None, &cfg).unwrap();
        let mut raw_n = 0.0;
        let mut raw_2n = 0.0;
        for l in 1..=2 * n {
            let x = l as f64;
            let t = phi.value(x).re * x / (x * x - a * a) / PI;
            if l <= n {
                raw_n += t;
            }
            raw_2n += t;
        }
        let change = (raw_2n - raw_n).abs();
        let bound_raw = (s.value.re - raw_n).abs();
        assert!(
            bound_raw >= change,
            "tail {bound_raw} vs doubling change {change}"
        );
        assert!(s.error < 1e-9 * s.value.norm());
    }

    #[test]
    fn matsubara_f_resonance_and_limits() {
        let cfg = MatsubaraConfig::default();
        let t = 10.0 / (2.0 * PI * 3.0);
        assert!(matches!(
            matsubara_f(10.0, 1.0, 0.001, t, &cfg),
            Err(QbmError::Resonance { .. })
        ));
        let hi = matsubara_f(100.0, 1.0, 0.005, 1e6, &cfg).unwrap();
        assert!(hi.abs() < 1e-8);
    }

    #[test]
    fn matsubara_i_logarithm() {
        let cfg = MatsubaraConfig::default();
        let i = matsubara_i(1e4, 1.0, 1e-3, 1.0, &cfg).unwrap();
        let lead = (1e4 / (2.0 * PI)).ln() / PI;
        assert!((i - lead).abs() < 0.2 * lead, "I = {i}, lead = {lead}");
    }

    #[test]
    fn matsubara_i_high_temperature_small() {
        let cfg = MatsubaraConfig::default();
        let (l, t, g) = (10.0, 1000.0, 0.005);
        let i = matsubara_i_series(l, 1.0, g, t, &cfg).unwrap();
        assert!(i < 0.0);
        assert!((g * i).abs() < g * (l / t).powi(2), "gI = {}", g * i);
        // the full I is dominated by the cutoff pole, −cot(Λ/2T)/2 ≈ −T/Λ,
        // up to O(Ω_R²/Λ²) from the exact cutoff-pole residue
        let full = matsubara_i(l, 1.0, g, t, &cfg).unwrap();
        let cot = -0.5 / (l / (2.0 * t)).tan();
        assert!((full - cot).abs() < 3.0 / (l * l) * cot.abs());
    }
}
