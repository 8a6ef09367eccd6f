//! System-bath correlation ⟨H_SB(∞)⟩ = −⟨q B⟩ and the energy bookkeeping of
//! the closed system + bath.
//!
//! The numerical route takes the t → ∞ limit of the nested time integrals
//! for ⟨q_ξ(t) B_ξ(t)⟩ analytically: with u = t − t', a = t − t₁ and
//! b = t₁ − t₂ every integral becomes a one-sided transform, and the
//! symmetric noise kernel's cosine representation turns the triple integral
//! into a single frequency integral
//!
//!   ⟨qB⟩ = (1/π) ∫₀^∞ σ(ω) coth(ω/2T) [Re ĝ(ω) − |ĝ(ω)|² Re Σ̂(ω)] dω,
//!
//! with ĝ the transform of the large-cutoff G(t) and Σ̂ that of the Drude
//! self-energy kernel.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{QbmError, Result};
use crate::exact::stationary_closed;
use crate::params::{spectral_density, ModelParams};
use crate::quad::{integrate_breaks_to_inf, QuadTol};
use crate::specialfn::coth_c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    /// The large-cutoff leading form.
    LeadingClosed,
    /// The frequency-integral evaluation of the nested time integrals.
    Numerical,
}

/// Accuracy controls for the numerical mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericalOptions {
    /// relative tolerance of the frequency quadrature
    pub rel_tol: f64,
    /// largest accepted relative change when the quadrature tolerance is
    /// tightened tenfold
    pub convergence_tol: f64,
}

impl Default for NumericalOptions {
    fn default() -> Self {
        NumericalOptions {
            rel_tol: 1e-8,
            convergence_tol: 1e-6,
        }
    }
}

pub fn interaction_energy_stationary(p: &ModelParams, mode: InteractionMode) -> Result<f64> {
    match mode {
        InteractionMode::LeadingClosed => interaction_energy_leading(p),
        InteractionMode::Numerical => interaction_energy_numerical(p, &NumericalOptions::default()),
    }
}

/// −γ{(Λ/2W)[coth((W + iγ/2)/2T) + coth((W − iγ/2)/2T)] − (1/π)ln(Λ/2πT)}.
/// When Λ < 2πT the logarithm is ln(Λ/W) instead.
pub fn interaction_energy_leading(p: &ModelParams) -> Result<f64> {
    const OP: &str = "sysbath::interaction_energy_stationary";
    if !(p.temperature > 0.0) {
        return Err(QbmError::domain(OP, "the leading form needs T > 0"));
    }
    if p.gamma == 0.0 {
        return Ok(0.0);
    }
    let z = Complex64::new(p.w, 0.5 * p.gamma) / (2.0 * p.temperature);
    // the two coth terms are complex conjugates
    let bracket = 2.0 * coth_c(z).re;
    let tp = 2.0 * PI * p.temperature;
    let log = if p.lambda >= tp {
        (p.lambda / tp).ln()
    } else {
        (p.lambda / p.w).ln()
    };
    Ok(-p.gamma * (p.lambda / (2.0 * p.w) * bracket - log / PI))
}

/// The per-frequency integrand Re ĝ − |ĝ|² Re Σ̂, where Re ĝ = |ĝ|²(Ω_R² − ω²)
/// for the large-cutoff G and Re Σ̂ = −γΛ³/(Λ² + ω²).
fn bracket(p: &ModelParams, omega: f64) -> f64 {
    let or2 = p.omega_r * p.omega_r;
    let g_inv = Complex64::new(or2 - omega * omega, -p.gamma * omega);
    let g = g_inv.inv();
    let l = p.lambda;
    let re_sigma = -p.gamma * l * l * l / (l * l + omega * omega);
    g.re - g.norm_sqr() * re_sigma
}

fn qb_integral(p: &ModelParams, rel_tol: f64) -> Result<(f64, f64)> {
    let spec = p.drude();
    let t = p.temperature;
    let f = |x: f64| {
        if x == 0.0 {
            // σ coth → 2γT as ω → 0
            return if t > 0.0 {
                2.0 * p.gamma * t * bracket(p, 0.0)
            } else {
                0.0
            };
        }
        let th = if t > 0.0 {
            1.0 / (x / (2.0 * t)).tanh()
        } else {
            1.0
        };
        spectral_density(&spec, x) * th * bracket(p, x)
    };
    let w = p.w;
    let hw = 50.0 * p.gamma;
    let mut pts = vec![
        0.0,
        w - hw,
        w - p.gamma,
        w,
        w + p.gamma,
        w + hw,
        p.lambda,
        10.0 * p.lambda,
    ];
    if t > 0.0 {
        pts.push(2.0 * PI * t);
    }
    pts.retain(|x| *x >= 0.0);
    let r = integrate_breaks_to_inf(
        f,
        &pts,
        10.0 * p.lambda,
        QuadTol::rel(rel_tol).with_abs(1e-300),
    )?;
    Ok((r.value / PI, r.error / PI))
}

pub fn interaction_energy_numerical(p: &ModelParams, opts: &NumericalOptions) -> Result<f64> {
    const OP: &str = "sysbath::interaction_energy_stationary";
    if p.gamma == 0.0 {
        return Ok(0.0);
    }
    let (coarse, _) = qb_integral(p, opts.rel_tol)?;
    let (fine, _) = qb_integral(p, opts.rel_tol * 0.1)?;
    let change = ((fine - coarse) / fine).abs();
    if !(change <= opts.convergence_tol) {
        return Err(QbmError::Convergence {
            op: OP,
            change,
            tol: opts.convergence_tol,
        });
    }
    Ok(-fine)
}

/// Energy changes between the initial product state (system in its ground
/// state, bath thermal) and the stationary state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyFlow {
    pub delta_e_system: f64,
    pub delta_e_interaction: f64,
    pub delta_e_bath: f64,
}

impl EnergyFlow {
    pub fn total(&self) -> f64 {
        self.delta_e_system + self.delta_e_interaction + self.delta_e_bath
    }
}

/// ΔE_S from the exact stationary moments with the bare Hamiltonian,
/// ΔE_SB = ⟨H_SB(∞)⟩ from the numerical mode, and ΔE_B from conservation.
/// Without coupling nothing evolves and all three vanish.
pub fn energy_flow(p: &ModelParams) -> Result<EnergyFlow> {
    if p.gamma == 0.0 {
        return Ok(EnergyFlow {
            delta_e_system: 0.0,
            delta_e_interaction: 0.0,
            delta_e_bath: 0.0,
        });
    }
    let st = stationary_closed(p)?;
    let ds = 0.5 * st.p2 + 0.5 * p.omega_sq * st.q2 - 0.5 * p.omega();
    let dsb = interaction_energy_numerical(p, &NumericalOptions::default())?;
    Ok(EnergyFlow {
        delta_e_system: ds,
        delta_e_interaction: dsb,
        delta_e_bath: -(ds + dsb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_params;

    #[test]
    fn vanishes_without_coupling() {
        let p = derive_params(1.0, 0.0, 50.0, 2.0).unwrap();
        for mode in [InteractionMode::LeadingClosed, InteractionMode::Numerical] {
            assert_eq!(interaction_energy_stationary(&p, mode).unwrap(), 0.0);
        }
        assert_eq!(energy_flow(&p).unwrap().total(), 0.0);
    }

    #[test]
    fn bracket_matches_general_form() {
        // Re ĝ − |ĝ|² Re Σ̂ with ĝ built from the time-domain exponentials
        let p = derive_params(1.3, 0.02, 40.0, 1.0).unwrap();
        for om in [0.1, 1.29, 7.0] {
            let cp = Complex64::new(-0.5 * p.gamma, om + p.w);
            let cm = Complex64::new(-0.5 * p.gamma, om - p.w);
            let g = (-cp.inv() + cm.inv()) / Complex64::new(0.0, 2.0 * p.w);
            let sig = -p.gamma * p.lambda * p.lambda / Complex64::new(p.lambda, -om);
            let direct = g.re - g.norm_sqr() * sig.re;
            assert!((bracket(&p, om) - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn leading_form_needs_temperature() {
        let p = derive_params(1.0, 0.01, 50.0, 0.0).unwrap();
        assert!(interaction_energy_leading(&p).is_err());
        assert!(interaction_energy_numerical(&p, &NumericalOptions::default()).unwrap() < 0.0);
    }
}
