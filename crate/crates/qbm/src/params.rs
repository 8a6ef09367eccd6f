//! Model parameters, bath spectral densities and the bath self-energy.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{QbmError, Result};
use crate::quad::{self, QuadTol};

/// System and bath parameters in the canonical (Ω_R, γ, Λ, T) form.
///
/// `omega_sq` is the bare frequency squared and `w` the damped oscillation
/// frequency of the large-cutoff Green's function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gamma: f64,
    pub lambda: f64,
    pub temperature: f64,
    pub omega_r: f64,
    pub omega_sq: f64,
    pub w: f64,
}

impl ModelParams {
    /// Bare frequency Ω.
    pub fn omega(&self) -> f64 {
        self.omega_sq.sqrt()
    }

    /// The Born ratio γΛ/Ω², always below one for stable parameters.
    pub fn stability_ratio(&self) -> f64 {
        self.gamma * self.lambda / self.omega_sq
    }

    pub fn drude(&self) -> BathSpectrum {
        BathSpectrum::drude(self.gamma, self.lambda)
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<ModelParams> {
        derive_params(self.omega_r, self.gamma, self.lambda, temperature)
    }
}

/// Builds parameters from the renormalized frequency.
pub fn derive_params(
    omega_r: f64,
    gamma: f64,
    lambda: f64,
    temperature: f64,
) -> Result<ModelParams> {
    const OP: &str = "params_spectral::derive_params";
    check_common(OP, gamma, lambda, temperature)?;
    if !(omega_r > 0.0) || !omega_r.is_finite() {
        return Err(QbmError::domain(
            OP,
            format!("omega_r must be positive, got {omega_r}"),
        ));
    }
    if omega_r <= gamma / 2.0 {
        return Err(QbmError::Overdamped {
            op: OP,
            omega_r,
            half_gamma: gamma / 2.0,
        });
    }
    Ok(ModelParams {
        gamma,
        lambda,
        temperature,
        omega_r,
        omega_sq: omega_r * omega_r + gamma * lambda,
        w: (omega_r * omega_r - 0.25 * gamma * gamma).sqrt(),
    })
}

/// Builds parameters from the bare frequency Ω; fails when γΛ ≥ Ω².
pub fn derive_params_from_bare(
    omega_bare: f64,
    gamma: f64,
    lambda: f64,
    temperature: f64,
) -> Result<ModelParams> {
    const OP: &str = "params_spectral::derive_params_from_bare";
    check_common(OP, gamma, lambda, temperature)?;
    if !(omega_bare > 0.0) || !omega_bare.is_finite() {
        return Err(QbmError::domain(
            OP,
            format!("omega must be positive, got {omega_bare}"),
        ));
    }
    let omega_sq = omega_bare * omega_bare;
    let gl = gamma * lambda;
    if gl >= omega_sq {
        return Err(QbmError::Instability {
            op: OP,
            gamma_lambda: gl,
            omega_sq,
        });
    }
    let omega_r = (omega_sq - gl).sqrt();
    let mut p = derive_params(omega_r, gamma, lambda, temperature)?;
    // keep the bare value exactly as given
    p.omega_sq = omega_sq;
    Ok(p)
}

fn check_common(op: &'static str, gamma: f64, lambda: f64, temperature: f64) -> Result<()> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(QbmError::domain(
            op,
            format!("gamma must be non-negative, got {gamma}"),
        ));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(QbmError::domain(
            op,
            format!("lambda must be positive, got {lambda}"),
        ));
    }
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(QbmError::domain(
            op,
            format!("temperature must be >= 0, got {temperature}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathKind {
    DrudeOhmic,
    ExponentialOhmic,
    PowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffShape {
    Drude,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpectrum {
    pub kind: BathKind,
    pub gamma: f64,
    pub lambda: f64,
    /// Reference frequency ω₀ (power law only).
    pub omega0: f64,
    /// Spectral exponent k > −1 (power law only).
    pub k_exponent: f64,
    pub cutoff_shape: CutoffShape,
}

impl BathSpectrum {
    pub fn drude(gamma: f64, lambda: f64) -> Self {
        BathSpectrum {
            kind: BathKind::DrudeOhmic,
            gamma,
            lambda,
            omega0: 1.0,
            k_exponent: 1.0,
            cutoff_shape: CutoffShape::Drude,
        }
    }

    pub fn exponential(gamma: f64, lambda: f64) -> Self {
        BathSpectrum {
            kind: BathKind::ExponentialOhmic,
            cutoff_shape: CutoffShape::Exponential,
            ..Self::drude(gamma, lambda)
        }
    }

    pub fn power_law(
        gamma: f64,
        lambda: f64,
        omega0: f64,
        k_exponent: f64,
        cutoff_shape: CutoffShape,
    ) -> Result<Self> {
        if !(k_exponent > -1.0) {
            return Err(QbmError::domain(
                "params_spectral::power_law",
                format!("spectral exponent must exceed -1, got {k_exponent}"),
            ));
        }
        if !(omega0 > 0.0) {
            return Err(QbmError::domain(
                "params_spectral::power_law",
                "omega0 must be positive",
            ));
        }
        Ok(BathSpectrum {
            kind: BathKind::PowerLaw,
            gamma,
            lambda,
            omega0,
            k_exponent,
            cutoff_shape,
        })
    }

    /// Sub-Ohmic exponents in (−1, 0) are accepted but not covered by validation.
    pub fn is_experimental(&self) -> bool {
        self.kind == BathKind::PowerLaw && self.k_exponent < 0.0
    }

    /// σ(ω), odd in ω.
    pub fn density(&self, omega: f64) -> f64 {
        spectral_density(self, omega)
    }
}

/// σ(ω) for every bath family. Computed from |ω| and given the sign of ω so
/// that σ(−ω) = −σ(ω) holds bit-for-bit.
pub fn spectral_density(spec: &BathSpectrum, omega: f64) -> f64 {
    let x = omega.abs();
    let v = match spec.kind {
        BathKind::DrudeOhmic => {
            let l2 = spec.lambda * spec.lambda;
            spec.gamma * x * l2 / (l2 + x * x)
        }
        BathKind::ExponentialOhmic => spec.gamma * x * (-x / spec.lambda).exp(),
        BathKind::PowerLaw => {
            if x == 0.0 {
                0.0
            } else {
                let r = x / spec.lambda;
                let cut = match spec.cutoff_shape {
                    CutoffShape::Drude => 1.0 / (1.0 + r * r),
                    CutoffShape::Exponential => (-r).exp(),
                };
                spec.gamma * x * (x / spec.omega0).powf(spec.k_exponent - 1.0) * cut
            }
        }
    };
    if omega < 0.0 {
        -v
    } else {
        v
    }
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Break points that keep the adaptive rules away from the cutoff shoulder.
fn spectral_breaks(spec: &BathSpectrum) -> Vec<f64> {
    let l = spec.lambda;
    let mut v = vec![0.0, 0.1 * l, l, 4.0 * l];
    if spec.kind == BathKind::PowerLaw {
        v.push(spec.omega0.min(l));
    }
    v
}

/// Self-energy kernel Σ(τ) = −(2/π)∫₀^∞ σ(ω) sin(ωτ) dω.
///
/// Closed form for the Drude bath; quadrature with relative tolerance 1e-10
/// for the other families.
pub fn self_energy_time(spec: &BathSpectrum, tau: f64) -> Result<f64> {
    if spec.kind == BathKind::DrudeOhmic {
        let l = spec.lambda;
        return Ok(-spec.gamma * l * l * (-l * tau.abs()).exp() * sign0(tau));
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    let t = tau.abs();
    let f = |w: f64| spectral_density(spec, w) * (w * t).sin();
    // Resolve oscillations: pieces no longer than a quarter period up to the
    // point where the cutoff has killed the integrand.
    let upper = 60.0 * spec.lambda;
    let period = 2.0 * PI / t;
    let n_pieces = ((upper / period) * 4.0).ceil().clamp(4.0, 20000.0) as usize;
    let mut pts: Vec<f64> = (0..=n_pieces)
        .map(|i| upper * i as f64 / n_pieces as f64)
        .collect();
    pts.extend(spectral_breaks(spec));
    let r =
        quad::integrate_breaks_to_inf(f, &pts, spec.lambda, QuadTol::rel(1e-11).with_abs(1e-300))
            .map_err(|e| relabel(e, "params_spectral::self_energy_time"))?;
    Ok(-(2.0 / PI) * r.value * sign0(tau))
}

/// Laplace transform Σ̃(s) = −(2/π)∫₀^∞ σ(ω) ω/(ω² + s²) dω.
pub fn self_energy_laplace(spec: &BathSpectrum, s: Complex64) -> Result<Complex64> {
    const OP: &str = "params_spectral::self_energy_laplace";
    if spec.kind == BathKind::DrudeOhmic {
        let l = spec.lambda;
        if (s + l).norm() == 0.0 {
            return Err(QbmError::domain(OP, "s = -lambda is a pole"));
        }
        return Ok(Complex64::new(-spec.gamma * l * l, 0.0) / (s + l));
    }
    if s.re < 0.0 || (s.re == 0.0 && s.im != 0.0) {
        return Err(QbmError::domain(
            OP,
            format!("s = {s} lies on or left of the spectral support"),
        ));
    }
    let s2 = s * s;
    let tol = QuadTol::rel(1e-11).with_abs(1e-300);
    let mut pts = spectral_breaks(spec);
    if s.norm() > 0.0 {
        pts.push(s.norm());
    }
    let re = quad::integrate_breaks_to_inf(
        |w| spectral_density(spec, w) * w * (1.0 / (w * w + s2)).re,
        &pts,
        spec.lambda,
        tol,
    )
    .map_err(|e| relabel(e, OP))?;
    let im = if s.im == 0.0 {
        0.0
    } else {
        quad::integrate_breaks_to_inf(
            |w| spectral_density(spec, w) * w * (1.0 / (w * w + s2)).im,
            &pts,
            spec.lambda,
            tol,
        )
        .map_err(|e| relabel(e, OP))?
        .value
    };
    Ok(Complex64::new(re.value, im) * (-2.0 / PI))
}

fn relabel(e: QbmError, op: &'static str) -> QbmError {
    match e {
        QbmError::QuadratureFailure {
            estimate, error, ..
        } => QbmError::QuadratureFailure {
            op,
            estimate,
            error,
        },
        other => other,
    }
}

/// Scaling estimates for a power-law bath.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonOhmicReport {
    /// (Ω_R² − Ω²)/Ω²
    pub renorm_ratio: f64,
    /// Coefficient γ/(k−1)·(Λ/ω₀)^{k−1} of the cutoff-divergent part of ⟨p²⟩.
    pub p2_divergence_scale: f64,
    /// (γΛ/Ω²)(Λ/ω₀)^{k−1}; the Born approximation needs this ≪ 1.
    pub born_condition_value: f64,
}

/// `omega` is the oscillator frequency used as the reference scale Ω.
/// At k = 1 the divergence is logarithmic and a DomainError is returned.
pub fn nonohmic_report(spec: &BathSpectrum, omega: f64, gamma: f64) -> Result<NonOhmicReport> {
    const OP: &str = "params_spectral::nonohmic_report";
    if spec.kind != BathKind::PowerLaw {
        return Err(QbmError::domain(OP, "requires a power-law spectrum"));
    }
    if !(spec.k_exponent > -1.0) {
        return Err(QbmError::domain(OP, "spectral exponent must exceed -1"));
    }
    let km1 = spec.k_exponent - 1.0;
    if km1 == 0.0 {
        return Err(QbmError::domain(
            OP,
            "k = 1 gives a logarithmic divergence; use the Ohmic closed form",
        ));
    }
    let enhancement = (spec.lambda / spec.omega0).powf(km1);
    let born = gamma * spec.lambda / (omega * omega) * enhancement;
    Ok(NonOhmicReport {
        renorm_ratio: -born,
        p2_divergence_scale: gamma / km1 * enhancement,
        born_condition_value: born,
    })
}

/// The renormalization ratio alone, valid for every k including the Ohmic case.
pub fn renorm_ratio(spec: &BathSpectrum, omega: f64, gamma: f64) -> f64 {
    let km1 = spec.k_exponent - 1.0;
    -gamma * spec.lambda / (omega * omega) * (spec.lambda / spec.omega0).powf(km1)
}
