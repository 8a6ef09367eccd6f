//! Born-Markov moment dynamics.
//!
//! The coefficients α(t), β(t) and drives f(t), h(t) are kept at finite t.
//! All interaction-picture phases use the bare frequency Ω.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{QbmError, Result};
use crate::exact::{check_grid, InitialState, Method, MomentTrajectory, StationaryMoments};
use crate::ode::{self, OdeTol};
use crate::params::ModelParams;
use crate::specialfn::{digamma, pair_sum, MatsubaraConfig, SeriesTerm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkovCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub f: f64,
    pub h: f64,
}

/// φ_t(x) = ∫₀ᵗ e^{−(λ − iΩ)τ} dτ with λ = 2πT x; t = ∞ gives 1/(λ − iΩ).
struct DriveTerm {
    tp: f64,
    omega: f64,
    t: f64,
}

impl SeriesTerm for DriveTerm {
    fn value(&self, x: f64) -> Complex64 {
        let z = Complex64::new(self.tp * x, -self.omega);
        if self.t.is_infinite() {
            return z.inv();
        }
        let e = (-z * self.t).exp();
        (Complex64::new(1.0, 0.0) - e) / z
    }
}

/// J(t) = ∫₀ᵗ [g^>(τ) + g^<(τ)] e^{iΩτ} dτ, with h = Re J and f = Im J/Ω.
pub fn drive_integral(p: &ModelParams, t: f64, cfg: &MatsubaraConfig) -> Result<Complex64> {
    if !(p.temperature > 0.0) {
        return Err(QbmError::domain(
            "qme_markov::markov_coefficients",
            "requires T > 0",
        ));
    }
    if t <= 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let tp = 2.0 * PI * p.temperature;
    let term = DriveTerm {
        tp,
        omega: p.omega(),
        t,
    };
    let s = pair_sum(&term, p.lambda / tp, cfg)?;
    Ok(s.value * (2.0 * p.gamma * p.lambda * p.lambda))
}

fn alpha_beta(p: &ModelParams, t: f64) -> (f64, f64) {
    let om = p.omega();
    let z = Complex64::new(p.lambda, -om);
    let num = if t.is_infinite() {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::new(1.0, 0.0) - Complex64::from_polar((-p.lambda * t).exp(), om * t)
    };
    let k = num / z * (p.gamma * p.lambda * p.lambda);
    (k.re, k.im / om)
}

pub fn markov_coefficients(p: &ModelParams, t: f64) -> Result<MarkovCoefficients> {
    if t < 0.0 {
        return Err(QbmError::domain(
            "qme_markov::markov_coefficients",
            "t must be >= 0",
        ));
    }
    let (alpha, beta) = alpha_beta(p, t);
    let j = drive_integral(p, t, &MatsubaraConfig::default())?;
    Ok(MarkovCoefficients {
        alpha,
        beta,
        f: j.im / p.omega(),
        h: j.re,
    })
}

/// t → ∞ limits with their exact finite-Λ factors:
/// α∞ = γΛ·Λ²/(Λ² + Ω²), β∞ = γΛ²/(Λ² + Ω²), h∞ = γΩcoth(Ω/2T)·Λ²/(Λ² + Ω²),
/// f∞ = 2γΛ²/(Λ² + Ω²)·{−T/Λ − (1/π)Re[Ψ(Λ/2πT) − Ψ(iΩ/2πT)]}.
pub fn asymptotic_coefficients(p: &ModelParams) -> Result<MarkovCoefficients> {
    let om = p.omega();
    let (l, g, t) = (p.lambda, p.gamma, p.temperature);
    let shape = l * l / (l * l + om * om);
    let (alpha, beta) = (g * l * shape, g * shape);
    let (f, h) = if t > 0.0 {
        let tp = 2.0 * PI * t;
        let psi = digamma(Complex64::new(l / tp, 0.0))? - digamma(Complex64::new(0.0, om / tp))?;
        (
            2.0 * g * shape * (-t / l - psi.re / PI),
            g * om / (om / (2.0 * t)).tanh() * shape,
        )
    } else {
        // T → 0: Re Ψ(iy) → ln y, so f∞ → −(2γ/π)·shape·ln(Λ/Ω)
        (-2.0 * g * shape * (l / om).ln() / PI, g * om * shape)
    };
    Ok(MarkovCoefficients { alpha, beta, f, h })
}

/// (Ω/2)coth(Ω/2T) in the bare frequency, which equals h∞/2β∞.
pub(crate) fn equipartition_p2(p: &ModelParams) -> f64 {
    let om = p.omega();
    if p.temperature > 0.0 {
        0.5 * om / (om / (2.0 * p.temperature)).tanh()
    } else {
        0.5 * om
    }
}

/// Fixed point of the Markov moment equations with asymptotic coefficients:
/// ⟨p²⟩ = h∞/2β∞ = (Ω/2)coth(Ω/2T), ⟨q²⟩ = (2⟨p²⟩ + f∞)/(2(Ω² − α∞)).
pub fn stationary_markov(p: &ModelParams) -> Result<StationaryMoments> {
    let c = asymptotic_coefficients(p)?;
    let p2 = equipartition_p2(p);
    let q2 = (2.0 * p2 + c.f) / (2.0 * (p.omega_sq - c.alpha));
    Ok(StationaryMoments {
        q2,
        p2,
        pq_sym: 0.0,
        method: Method::BornMarkov,
    })
}

/// Residuals of the three second-moment equations at a given state.
pub fn markov_residuals(
    p: &ModelParams,
    c: &MarkovCoefficients,
    m: &StationaryMoments,
) -> [f64; 3] {
    let k = p.omega_sq - c.alpha;
    [
        m.pq_sym,
        2.0 * m.p2 - 2.0 * k * m.q2 - c.beta * m.pq_sym + c.f,
        -k * m.pq_sym - 2.0 * c.beta * m.p2 + c.h,
    ]
}

/// Time after which J(t) equals J(∞) to double precision.
pub(crate) fn drive_saturation_time(p: &ModelParams) -> f64 {
    40.0 / p.lambda.min(2.0 * PI * p.temperature)
}

/// Cached drive evaluation shared by the Markov and non-Markov solvers.
pub(crate) struct DriveCache {
    p: ModelParams,
    cfg: MatsubaraConfig,
    t_sat: f64,
    j_inf: Complex64,
}

impl DriveCache {
    pub(crate) fn new(p: &ModelParams) -> Result<Self> {
        let cfg = MatsubaraConfig::default();
        // the closed form avoids the cancellation inside the series at large Λ/2πT
        let c = asymptotic_coefficients(p)?;
        let j_inf = Complex64::new(c.h, c.f * p.omega());
        Ok(DriveCache {
            p: *p,
            cfg,
            t_sat: drive_saturation_time(p),
            j_inf,
        })
    }

    /// (f(t), h(t))
    pub(crate) fn fh(&self, t: f64) -> (f64, f64) {
        let j = if t >= self.t_sat {
            self.j_inf
        } else {
            drive_integral(&self.p, t, &self.cfg).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
        };
        (j.im / self.p.omega(), j.re)
    }
}

pub(crate) fn max_step_schedule(p: &ModelParams) -> impl Fn(f64) -> f64 {
    let fast = 1.0 / (10.0 * p.lambda);
    let slow = 1.0 / (10.0 * p.omega());
    let edge = 20.0 / p.lambda;
    move |t: f64| if t < edge { fast } else { slow }
}

/// Integrates the Markov first- and second-moment equations.
pub fn integrate_markov(
    p: &ModelParams,
    init: &InitialState,
    t_grid: &[f64],
) -> Result<MomentTrajectory> {
    const OP: &str = "qme_markov::integrate_markov";
    init.validate(OP)?;
    check_grid(OP, t_grid)?;
    if !(p.temperature > 0.0) {
        return Err(QbmError::domain(OP, "requires T > 0"));
    }
    let drive = DriveCache::new(p)?;
    let om2 = p.omega_sq;
    let rhs = |t: f64, y: &[f64], d: &mut [f64]| {
        let (a, b) = alpha_beta(p, t);
        let (f, h) = drive.fh(t);
        let k = om2 - a;
        d[0] = y[1];
        d[1] = -k * y[0] - b * y[1];
        d[2] = y[3];
        d[3] = 2.0 * y[4] - 2.0 * k * y[2] - b * y[3] + f;
        d[4] = -k * y[3] - 2.0 * b * y[4] + h;
    };
    let mut grid = Vec::with_capacity(t_grid.len() + 1);
    if t_grid[0] > 0.0 {
        grid.push(0.0);
    }
    grid.extend_from_slice(t_grid);
    let y0 = [init.q, init.p, init.q2, init.pq_sym, init.p2];
    let sol = ode::integrate(
        rhs,
        &y0,
        &grid,
        max_step_schedule(p),
        OdeTol {
            rtol: 1e-10,
            atol: 1e-13,
        },
    )
    .map_err(|e| match e {
        QbmError::StepFailure { t, .. } => QbmError::StepFailure { op: OP, t },
        other => other,
    })?;
    let offset = grid.len() - t_grid.len();
    let mut traj = MomentTrajectory::with_capacity(t_grid.len(), Method::BornMarkov);
    for (i, &t) in t_grid.iter().enumerate() {
        let y = &sol[i + offset];
        if y.iter().any(|v| !v.is_finite()) {
            return Err(QbmError::StepFailure { op: OP, t });
        }
        traj.push(t, y[0], y[1], y[2], y[4], y[3]);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_params;

    #[test]
    fn coefficients_vanish_at_zero() {
        let p = derive_params(1.0, 0.05, 20.0, 1.0).unwrap();
        let c = markov_coefficients(&p, 0.0).unwrap();
        assert_eq!((c.alpha, c.beta, c.f, c.h), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn alpha_beta_saturate() {
        let p = derive_params(1.0, 1e-3, 1e3, 1.0).unwrap();
        let c = markov_coefficients(&p, 50.0 / p.lambda).unwrap();
        assert!((c.alpha / (p.gamma * p.lambda) - 1.0).abs() < 1e-5);
        assert!((c.beta / p.gamma - 1.0).abs() < 1e-5);
    }

    #[test]
    fn asymptotic_drives_match_series() {
        for &(g, l, t) in &[
            (0.005, 1e3, 2.0),
            (0.05, 20.0, 5.0),
            (0.005, 10.0, 100.0),
            (1e-3, 1e4, 0.2),
        ] {
            let p = derive_params(1.0, g, l, t).unwrap();
            let a = asymptotic_coefficients(&p).unwrap();
            let j = drive_integral(&p, f64::INFINITY, &MatsubaraConfig::default()).unwrap();
            let (f, h) = (j.im / p.omega(), j.re);
            // at Λ/2πT ~ 10⁴ the series cancels by ~10⁴ over ~10⁴ terms
            assert!(
                (f - a.f).abs() < 1e-7 * a.f.abs().max(a.h),
                "f {f} vs {}",
                a.f
            );
            assert!((h - a.h).abs() < 1e-7 * a.h, "h {h} vs {}", a.h);
        }
    }

    #[test]
    fn p2_fixed_point_is_quantum_equipartition_in_bare_frequency() {
        for &t in &[0.3, 1.0, 5.0] {
            let p = derive_params(1.0, 0.05, 20.0, t).unwrap();
            let m = stationary_markov(&p).unwrap();
            let om = p.omega();
            let exp = 0.5 * om / (om / (2.0 * t)).tanh();
            assert!((m.p2 - exp).abs() < 1e-12 * exp);
        }
    }

    #[test]
    fn fixed_point_residuals() {
        let p = derive_params(1.0, 0.005, 100.0, 1.0).unwrap();
        let c = asymptotic_coefficients(&p).unwrap();
        let m = stationary_markov(&p).unwrap();
        for r in markov_residuals(&p, &c, &m) {
            assert!(r.abs() < 1e-8);
        }
    }
}
