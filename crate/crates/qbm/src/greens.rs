//! Retarded Green's function G(t) of the damped oscillator.
//!
//! With a Drude bath g(s) = (s + Λ)/P(s), P(s) = (s² + Ω²)(s + Λ) − γΛ²,
//! a cubic with one fast real root near −Λ + γ and a complex pair close to
//! −γ/2 ± iW. For Λ ≫ Ω_R, γ the fast branch is dropped and
//! G(t) = e^{−γt/2} sin(Wt)/W.

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QbmError, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GreenMode {
    Full,
    #[default]
    LargeLambda,
}

/// Roots of P(s). `s1` is the slow root with positive imaginary part, `s2`
/// its conjugate, `s3` the fast real root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenPoles {
    pub s1: Complex64,
    pub s2: Complex64,
    pub s3: Complex64,
}

impl GreenPoles {
    pub fn roots(&self) -> [Complex64; 3] {
        [self.s1, self.s2, self.s3]
    }
}

fn cubic(p: &ModelParams) -> [f64; 3] {
    // s³ + c2 s² + c1 s + c0
    let l = p.lambda;
    let or2 = p.omega_r * p.omega_r;
    [l * or2, or2 + p.gamma * l, l]
}

fn eval(c: &[f64; 3], s: Complex64) -> (Complex64, Complex64) {
    let v = ((s + c[2]) * s + c[1]) * s + c[0];
    let d = (s * 3.0 + 2.0 * c[2]) * s + c[1];
    (v, d)
}

fn newton(c: &[f64; 3], mut s: Complex64, iters: usize) -> Complex64 {
    for _ in 0..iters {
        let (v, d) = eval(c, s);
        if d.norm() == 0.0 {
            break;
        }
        let step = v / d;
        s -= step;
        if step.norm() <= 1e-17 * s.norm() {
            break;
        }
    }
    s
}

/// Poles of the full Drude g(s): companion-matrix eigenvalues, then Newton
/// polishing; the complex pair is taken from the deflated quadratic so the
/// root-sum identities hold to rounding.
pub fn poles_full(p: &ModelParams) -> Result<GreenPoles> {
    const OP: &str = "greensfn::poles_full";
    let c = cubic(p);
    let comp = Matrix3::new(0.0, 0.0, -c[0], 1.0, 0.0, -c[1], 0.0, 1.0, -c[2]);
    let eig = comp.complex_eigenvalues();
    // the real root is the one with the most negative real part
    let mut real_guess = eig[0];
    for e in eig.iter() {
        if e.re < real_guess.re {
            real_guess = *e;
        }
    }
    let s3 = newton(&c, Complex64::new(real_guess.re, 0.0), 50).re;
    let bsum = p.lambda + s3;
    let prod = -c[0] / s3;
    let disc = bsum * bsum - 4.0 * prod;
    let s1 = if disc < 0.0 {
        Complex64::new(-0.5 * bsum, 0.5 * (-disc).sqrt())
    } else {
        return Err(QbmError::Overdamped {
            op: OP,
            omega_r: p.omega_r,
            half_gamma: p.gamma / 2.0,
        });
    };
    let s1 = newton(&c, s1, 3);
    let s2 = s1.conj();
    let scale = p.lambda.max(1.0).powi(3);
    for s in [s1, s2, Complex64::new(s3, 0.0)] {
        let (v, _) = eval(&c, s);
        let tol = 1e-10 * scale.max(c[0].abs()).max(c[1].abs() * s.norm());
        if !(v.norm() <= tol) || s.re >= 0.0 && p.gamma > 0.0 {
            return Err(QbmError::RootFindingFailure {
                op: OP,
                residual: v.norm(),
            });
        }
    }
    Ok(GreenPoles {
        s1,
        s2,
        s3: Complex64::new(s3, 0.0),
    })
}

/// Residues A_i = (s_i + Λ)/P′(s_i) of g(s).
fn residues(p: &ModelParams, poles: &GreenPoles) -> [Complex64; 3] {
    let r = poles.roots();
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for i in 0..3 {
        let mut d = Complex64::new(1.0, 0.0);
        for j in 0..3 {
            if i != j {
                d *= r[i] - r[j];
            }
        }
        out[i] = (r[i] + p.lambda) / d;
    }
    out
}

/// Precomputed evaluator for G and Ġ in either mode.
#[derive(Debug, Clone, Copy)]
pub struct Green {
    mode: GreenMode,
    gamma: f64,
    w: f64,
    poles: Option<(GreenPoles, [Complex64; 3])>,
}

impl Green {
    pub fn new(p: &ModelParams, mode: GreenMode) -> Result<Self> {
        let poles = match mode {
            GreenMode::Full => {
                let poles = poles_full(p)?;
                Some((poles, residues(p, &poles)))
            }
            GreenMode::LargeLambda => None,
        };
        Ok(Green {
            mode,
            gamma: p.gamma,
            w: p.w,
            poles,
        })
    }

    pub fn mode(&self) -> GreenMode {
        self.mode
    }

    /// (G(t), Ġ(t)).
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match &self.poles {
            None => {
                let e = (-0.5 * self.gamma * t).exp();
                let (s, c) = (self.w * t).sin_cos();
                (e * s / self.w, e * (c - 0.5 * self.gamma / self.w * s))
            }
            Some((poles, res)) => {
                let e1 = res[0] * (poles.s1 * t).exp();
                let e3 = res[2].re * (poles.s3.re * t).exp();
                let g = 2.0 * e1.re + e3;
                let gd = 2.0 * (e1 * poles.s1).re + e3 * poles.s3.re;
                (g, gd)
            }
        }
    }

    /// (G(t), Ġ(t), G̈(t)).
    pub fn eval2(&self, t: f64) -> (f64, f64, f64) {
        match &self.poles {
            None => {
                let (g, gd) = self.eval(t);
                let or2 = self.w * self.w + 0.25 * self.gamma * self.gamma;
                (g, gd, -self.gamma * gd - or2 * g)
            }
            Some((poles, res)) => {
                let e1 = res[0] * (poles.s1 * t).exp();
                let r3 = poles.s3.re;
                let e3 = res[2].re * (r3 * t).exp();
                (
                    2.0 * e1.re + e3,
                    2.0 * (e1 * poles.s1).re + e3 * r3,
                    2.0 * (e1 * poles.s1 * poles.s1).re + e3 * r3 * r3,
                )
            }
        }
    }

    pub fn g(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    pub fn g_dot(&self, t: f64) -> f64 {
        self.eval(t).1
    }
}

/// G(t) in the requested mode.
pub fn green_time(p: &ModelParams, t: f64, mode: GreenMode) -> Result<f64> {
    if t < 0.0 {
        return Err(QbmError::domain("greensfn::green_time", "t must be >= 0"));
    }
    Ok(Green::new(p, mode)?.g(t))
}

/// Bound on |G_full(t) − G_large(t)|. The fast branch contributes
/// (γ/Λ²)e^{−Λt}; the slow pole is shifted by ≈ γΩ_R/(2Λ) in frequency and
/// its residue by a relative O(γ/Λ), so the difference grows linearly in t
/// under the common e^{−γt/2} envelope.
pub fn large_lambda_remainder_bound(p: &ModelParams, t: f64) -> f64 {
    let (g, l) = (p.gamma, p.lambda);
    g / (l * l) * (-(l - g) * t).exp()
        + (g / l) * (1.0 + p.omega_r * t) * (-0.5 * g * t).exp() / p.w
}
