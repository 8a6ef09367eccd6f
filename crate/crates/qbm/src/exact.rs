//! Exact Heisenberg-Langevin correlators of the oscillator.
//!
//! Stationary moments are available both in closed form (residues plus
//! Matsubara series) and by direct frequency quadrature; the two are
//! independent and serve as each other's oracle. Transients from a
//! factorized initial state are built from G(t) and the symmetrized noise
//! kernel N(τ) = γΛ²·PS[e^{−2πT x τ}].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{QbmError, Result};
use crate::greens::{Green, GreenMode};
use crate::ode::{self, OdeTol};
use crate::params::{spectral_density, BathSpectrum, ModelParams};
use crate::quad::{self, QuadTol};
use crate::specialfn::{coth_c, pair_sum, InvDhat, MatsubaraConfig, SeriesTerm, X2OverDhat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ExactClosed,
    ExactQuadrature,
    BornMarkov,
    BornNonMarkov,
    DiscreteOracle,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::ExactClosed => "exact_closed",
            Method::ExactQuadrature => "exact_quadrature",
            Method::BornMarkov => "born_markov",
            Method::BornNonMarkov => "born_nonmarkov",
            Method::DiscreteOracle => "discrete_oracle",
        }
    }
}

/// Equal-time second moments ⟨q²⟩, ⟨p²⟩, ⟨pq + qp⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryMoments {
    pub q2: f64,
    pub p2: f64,
    pub pq_sym: f64,
    pub method: Method,
}

impl StationaryMoments {
    pub fn uncertainty_product(&self) -> f64 {
        self.q2 * self.p2 - 0.25 * self.pq_sym * self.pq_sym
    }
}

/// Factorized initial system data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub q2: f64,
    pub p2: f64,
    pub pq_sym: f64,
    pub q: f64,
    pub p: f64,
}

impl InitialState {
    /// Thermal state of a free oscillator of frequency `omega` at temperature `t`.
    pub fn thermal(omega: f64, t: f64) -> Self {
        let c = if t > 0.0 {
            1.0 / (omega / (2.0 * t)).tanh()
        } else {
            1.0
        };
        InitialState {
            q2: c / (2.0 * omega),
            p2: omega * c / 2.0,
            pq_sym: 0.0,
            q: 0.0,
            p: 0.0,
        }
    }

    /// Checks the Robertson-Schrödinger bound on the covariance.
    pub fn validate(&self, op: &'static str) -> Result<()> {
        let vq = self.q2 - self.q * self.q;
        let vp = self.p2 - self.p * self.p;
        let cqp = 0.5 * self.pq_sym - self.q * self.p;
        let product = vq * vp - cqp * cqp;
        if !(product >= 0.25 * (1.0 - 1e-12)) || !(vq > 0.0) || !(vp > 0.0) {
            return Err(QbmError::UnphysicalInit { op, product });
        }
        Ok(())
    }
}

/// Moments along a time grid for one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    pub t: Vec<f64>,
    pub mean_q: Vec<f64>,
    pub mean_p: Vec<f64>,
    pub q2: Vec<f64>,
    pub p2: Vec<f64>,
    pub pq_sym: Vec<f64>,
    pub method: Method,
}

impl MomentTrajectory {
    pub fn with_capacity(n: usize, method: Method) -> Self {
        MomentTrajectory {
            t: Vec::with_capacity(n),
            mean_q: Vec::with_capacity(n),
            mean_p: Vec::with_capacity(n),
            q2: Vec::with_capacity(n),
            p2: Vec::with_capacity(n),
            pq_sym: Vec::with_capacity(n),
            method,
        }
    }

    pub fn push(&mut self, t: f64, mean_q: f64, mean_p: f64, q2: f64, p2: f64, pq_sym: f64) {
        self.t.push(t);
        self.mean_q.push(mean_q);
        self.mean_p.push(mean_p);
        self.q2.push(q2);
        self.p2.push(p2);
        self.pq_sym.push(pq_sym);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last_moments(&self) -> Option<StationaryMoments> {
        let n = self.len();
        (n > 0).then(|| StationaryMoments {
            q2: self.q2[n - 1],
            p2: self.p2[n - 1],
            pq_sym: self.pq_sym[n - 1],
            method: self.method,
        })
    }
}

pub(crate) fn check_grid(op: &'static str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(QbmError::domain(op, "empty time grid"));
    }
    if grid[0] < 0.0 {
        return Err(QbmError::domain(op, "time grid must start at t >= 0"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(QbmError::domain(
            op,
            "time grid must be strictly increasing",
        ));
    }
    Ok(())
}

fn thermal_scales(p: &ModelParams) -> (f64, f64, f64, f64) {
    let tp = 2.0 * PI * p.temperature;
    (tp, p.lambda / tp, p.omega_r / tp, p.gamma / tp)
}

/// Contributions of the complex resonant poles ω = ±W + iγ/2 to ⟨q²⟩ and
/// ⟨p²⟩, including the exact cutoff factor Λ²/(Λ² + ω₊²).
pub fn resonant_pole_terms(p: &ModelParams) -> (f64, f64) {
    let wp = Complex64::new(p.w, 0.5 * p.gamma);
    let l2 = p.lambda * p.lambda;
    let ct = if p.temperature > 0.0 {
        coth_c(wp / (2.0 * p.temperature))
    } else {
        Complex64::new(1.0, 0.0)
    };
    let base = ct * (l2 / (l2 + wp * wp)) / (2.0 * p.w);
    (base.re, (base * wp * wp).re)
}

/// The free oscillator's thermal state. The frequency integrals cannot be
/// used at γ = 0: σ vanishes identically, while the γ → 0⁺ limit keeps the
/// cutoff factor Λ²/(Λ² + Ω_R²) on the resonance.
fn decoupled(omega_r: f64, temperature: f64, method: Method) -> StationaryMoments {
    let s = InitialState::thermal(omega_r, temperature);
    StationaryMoments {
        q2: s.q2,
        p2: s.p2,
        pq_sym: 0.0,
        method,
    }
}

/// The closed-form stationary moments.
pub fn stationary_closed(p: &ModelParams) -> Result<StationaryMoments> {
    stationary_closed_with(p, &MatsubaraConfig::default())
}

pub fn stationary_closed_with(p: &ModelParams, cfg: &MatsubaraConfig) -> Result<StationaryMoments> {
    if !(p.temperature > 0.0) {
        return Err(QbmError::domain(
            "exact_hl::stationary_closed",
            "closed forms need T > 0; use stationary_quadrature at T = 0",
        ));
    }
    if p.gamma == 0.0 {
        return Ok(decoupled(p.omega_r, p.temperature, Method::ExactClosed));
    }
    let (tp, a, b, c) = thermal_scales(p);
    let (pole_q, pole_p) = resonant_pole_terms(p);
    let inv = InvDhat { b, c };
    let sq = pair_sum(&inv, a, cfg)?;
    let sp = pair_sum(&X2OverDhat(inv), a, cfg)?;
    Ok(StationaryMoments {
        q2: pole_q + p.gamma * a * a / (tp * tp) * sq.value.re,
        p2: pole_p - p.gamma * a * a * sp.value.re,
        pq_sym: 0.0,
        method: Method::ExactClosed,
    })
}

/// Quadrature result with its error estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureMoments {
    pub moments: StationaryMoments,
    pub err_q: f64,
    pub err_p: f64,
    /// Set when the ⟨p²⟩ integrand decays slower than ω⁻² at large ω.
    pub slow_tail: bool,
}

/// Stationary moments by adaptive quadrature of
/// ⟨q²⟩ = (1/π)∫₀^∞ σ(ω)coth(ω/2T)/D(ω) dω, ⟨p²⟩ the same with ω²,
/// D = (ω² − Ω_R²)² + γ²ω². At T = 0, coth → 1.
pub fn stationary_quadrature(p: &ModelParams, rel_tol: f64) -> Result<QuadratureMoments> {
    stationary_quadrature_spectrum(&p.drude(), p.omega_r, p.temperature, rel_tol)
}

/// Generic-spectrum variant; γ of the resonance denominator is `spec.gamma`.
pub fn stationary_quadrature_spectrum(
    spec: &BathSpectrum,
    omega_r: f64,
    temperature: f64,
    rel_tol: f64,
) -> Result<QuadratureMoments> {
    const OP: &str = "exact_hl::stationary_quadrature";
    let g = spec.gamma;
    let w = (omega_r * omega_r - 0.25 * g * g).sqrt();
    if !w.is_finite() || w <= 0.0 {
        return Err(QbmError::Overdamped {
            op: OP,
            omega_r,
            half_gamma: g / 2.0,
        });
    }
    if g == 0.0 {
        return Ok(QuadratureMoments {
            moments: decoupled(omega_r, temperature, Method::ExactQuadrature),
            err_q: 0.0,
            err_p: 0.0,
            slow_tail: false,
        });
    }
    let or2 = omega_r * omega_r;
    let thermal = |x: f64| -> f64 {
        if temperature > 0.0 {
            let y = x / (2.0 * temperature);
            if y < 1e-8 {
                // σ coth stays finite; avoid 0/0 at the origin
                1.0 / y.max(1e-300)
            } else {
                1.0 / y.tanh()
            }
        } else {
            1.0
        }
    };
    let fq = |x: f64| {
        if x == 0.0 {
            return 0.0;
        }
        let d = (x * x - or2).powi(2) + g * g * x * x;
        spectral_density(spec, x) * thermal(x) / d
    };
    let fp = |x: f64| x * x * fq(x);
    let l = spec.lambda;
    let hw = 50.0 * g;
    let mut pts = vec![0.0, w - hw, w - g, w, w + g, w + hw, l, 10.0 * l];
    if temperature > 0.0 {
        pts.push(2.0 * PI * temperature);
    }
    pts.retain(|x| *x >= 0.0);
    let tol = QuadTol::rel(rel_tol * 0.1).with_abs(1e-300);
    let relabel = |e: QbmError| match e {
        QbmError::QuadratureFailure {
            estimate, error, ..
        } => QbmError::QuadratureFailure {
            op: OP,
            estimate,
            error,
        },
        other => other,
    };
    let q = quad::integrate_breaks_to_inf(fq, &pts, 10.0 * l, tol).map_err(relabel)?;
    let pr = quad::integrate_breaks_to_inf(fp, &pts, 10.0 * l, tol).map_err(relabel)?;
    let x1 = 100.0 * l;
    let x2 = 1000.0 * l;
    let slow_tail = fp(x2) * x2 * x2 > 0.5 * fp(x1) * x1 * x1 && fp(x1) > 0.0;
    Ok(QuadratureMoments {
        moments: StationaryMoments {
            q2: q.value / PI,
            p2: pr.value / PI,
            pq_sym: 0.0,
            method: Method::ExactQuadrature,
        },
        err_q: q.error / PI,
        err_p: pr.error / PI,
        slow_tail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrKind {
    Qq,
    Pp,
}

/// Stationary unequal-time correlator samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTrace {
    pub tau_grid: Vec<f64>,
    pub values: Vec<Complex64>,
    pub kind: CorrKind,
}

/// Largest |τ| accepted by [`correlation_trace`] for the given parameters.
pub fn correlation_horizon(p: &ModelParams) -> f64 {
    20_000.0 * PI / trace_cutoff(p)
}

fn trace_cutoff(p: &ModelParams) -> f64 {
    (200.0 * p.lambda).max(200.0 * p.omega_r)
}

/// ⟨x(t + τ)x(t)⟩ = (1/π)∫₀^∞ w(ω)σ(ω)/D(ω) [coth(ω/2T)cos ωτ − i sin ωτ] dω
/// with w = 1 (qq) or ω² (pp).
pub fn correlation_trace(
    p: &ModelParams,
    tau_grid: &[f64],
    kind: CorrKind,
) -> Result<CorrelationTrace> {
    const OP: &str = "exact_hl::correlation_trace";
    let horizon = correlation_horizon(p);
    let spec = p.drude();
    let or2 = p.omega_r * p.omega_r;
    let g = p.gamma;
    let temp = p.temperature;
    let base = move |x: f64| -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let d = (x * x - or2).powi(2) + g * g * x * x;
        let wgt = match kind {
            CorrKind::Qq => 1.0,
            CorrKind::Pp => x * x,
        };
        wgt * spectral_density(&spec, x) / d
    };
    let thermal = move |x: f64| {
        if temp > 0.0 {
            let y = x / (2.0 * temp);
            if y < 1e-8 {
                1.0 / y.max(1e-300)
            } else {
                1.0 / y.tanh()
            }
        } else {
            1.0
        }
    };
    let cutoff = trace_cutoff(p);
    let mut values = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        if tau.abs() > horizon {
            return Err(QbmError::QuadratureFailure {
                op: OP,
                estimate: f64::NAN,
                error: f64::INFINITY,
            });
        }
        let hw = 50.0 * g;
        let mut pts = vec![
            0.0,
            p.w - hw,
            p.w - g,
            p.w,
            p.w + g,
            p.w + hw,
            p.lambda,
            10.0 * p.lambda,
            cutoff,
        ];
        if tau != 0.0 {
            let half = PI / tau.abs();
            let n = (cutoff / half).floor() as usize;
            pts.extend((1..=n).map(|k| k as f64 * half));
        }
        pts.retain(|x| *x >= 0.0 && *x <= cutoff);
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup();
        let tol = QuadTol::rel(1e-9).with_abs(1e-15);
        let mut re = 0.0;
        let mut im = 0.0;
        for wdw in pts.windows(2) {
            re += quad::integrate(
                |x| base(x) * thermal(x) * (x * tau).cos(),
                wdw[0],
                wdw[1],
                tol,
            )?
            .value;
            if tau != 0.0 {
                im -= quad::integrate(|x| base(x) * (x * tau).sin(), wdw[0], wdw[1], tol)?.value;
            }
        }
        // beyond the cutoff the integrand is smooth and small: σ/D ~ γΛ²/ω⁵
        let tail_tol = QuadTol::rel(1e-6).with_abs(1e-14);
        if tau == 0.0 {
            re += quad::integrate_to_inf(|x| base(x) * thermal(x), cutoff, cutoff, tail_tol)?.value;
        } else {
            // average over the oscillation: leading asymptotic ∫ f cos ≈ −f(c)sin(cτ)/τ
            re += -base(cutoff) * thermal(cutoff) * (cutoff * tau).sin() / tau;
            im -= base(cutoff) * (cutoff * tau).cos() / tau;
        }
        values.push(Complex64::new(re / PI, im / PI));
    }
    Ok(CorrelationTrace {
        tau_grid: tau_grid.to_vec(),
        values,
        kind,
    })
}

/// φ(x) = a²e^{−Xx}/x² with X = 2πTτ: the Matsubara remainder after the
/// logarithmic part of the noise kernel has been summed in closed form.
struct NoiseRemainder {
    a2: f64,
    x_tau: f64,
}

impl SeriesTerm for NoiseRemainder {
    fn value(&self, x: f64) -> Complex64 {
        Complex64::new(self.a2 * (-self.x_tau * x).exp() / (x * x), 0.0)
    }
}

/// Symmetrized noise correlator ½⟨{ξ(t₁), ξ(t₂)}⟩ as a function of τ = t₁ − t₂.
#[derive(Debug, Clone, Copy)]
pub struct NoiseKernel {
    pub params: ModelParams,
    pub cfg: MatsubaraConfig,
}

impl NoiseKernel {
    pub fn new(params: ModelParams) -> Self {
        NoiseKernel {
            params,
            cfg: MatsubaraConfig::default(),
        }
    }

    /// N(τ) = γΛ²[½cot(πa)e^{−Λ|τ|} + (1/π)Σ l e^{−2πlT|τ|}/(l² − a²)];
    /// the Σ e^{−lX}/l piece is summed as −ln(1 − e^{−X}).
    pub fn eval(&self, tau: f64) -> Result<f64> {
        const OP: &str = "exact_hl::noise_kernel_sym";
        let p = &self.params;
        if !(p.temperature > 0.0) {
            return Err(QbmError::domain(OP, "requires T > 0"));
        }
        let tau = tau.abs();
        if tau == 0.0 || !tau.is_finite() {
            return Err(QbmError::domain(
                OP,
                "the kernel diverges logarithmically at tau = 0",
            ));
        }
        let (tp, a, _, _) = thermal_scales(p);
        let x_tau = tp * tau;
        let rem = pair_sum(&NoiseRemainder { a2: a * a, x_tau }, a, &self.cfg)?;
        let log_part = -(-(-x_tau).exp_m1()).ln() / PI;
        Ok(p.gamma * p.lambda * p.lambda * (rem.value.re + log_part))
    }
}

pub fn noise_kernel_sym(p: &ModelParams, tau: f64) -> Result<f64> {
    NoiseKernel::new(*p).eval(tau)
}

/// φ_t(x) = ∫₀ᵗ (G(u) + iĠ(u)) e^{−2πT x u} du for the large-Λ G, packed as
/// a complex number so one Matsubara pass yields both components.
struct NoiseDriveTerm {
    s: Complex64,
    w: f64,
    tp: f64,
    t: f64,
}

impl NoiseDriveTerm {
    fn parts(&self, x: f64) -> (f64, f64) {
        let z = self.s - self.tp * x;
        // ∫₀ᵗ e^{zu}du, written with expm1 for accuracy at small |z t|
        let zt = z * self.t;
        let integral = if zt.norm() < 1e-8 {
            Complex64::new(self.t, 0.0) * (Complex64::new(1.0, 0.0) + zt * 0.5)
        } else {
            expm1_c(zt) / z
        };
        let gx = integral.im / self.w;
        let gdx = (self.s * integral).im / self.w;
        (gx, gdx)
    }
}

fn expm1_c(z: Complex64) -> Complex64 {
    // e^{x+iy} − 1 = (e^x − 1)cos y + (cos y − 1) + i e^x sin y
    let em1 = z.re.exp_m1();
    let (s, c) = z.im.sin_cos();
    let cm1 = -2.0 * (0.5 * z.im).sin().powi(2);
    Complex64::new(em1 * c + cm1, (em1 + 1.0) * s)
}

impl SeriesTerm for NoiseDriveTerm {
    fn value(&self, x: f64) -> Complex64 {
        let (a, b) = self.parts(x);
        Complex64::new(a, b)
    }
}

/// v(t) = ∫₀ᵗ (G(u), Ġ(u)) N(u) du for the large-Λ Green's function.
pub fn noise_drive(p: &ModelParams, t: f64, cfg: &MatsubaraConfig) -> Result<(f64, f64)> {
    if t <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let (tp, a, _, _) = thermal_scales(p);
    let term = NoiseDriveTerm {
        s: Complex64::new(-0.5 * p.gamma, p.w),
        w: p.w,
        tp,
        t,
    };
    let v = pair_sum(&term, a, cfg)?.value * (p.gamma * p.lambda * p.lambda);
    Ok((v.re, v.im))
}

/// Second moments and means from a factorized initial state.
///
/// Initial data propagate through q(t) = Ġq₀ + Gp₀, p(t) = G̈q₀ + Ġp₀ with
/// the full-pole G, whose G̈(0) = 0 keeps p continuous at t = 0 (the
/// large-cutoff G would add an initial slip −γq₀ to p). The noise part obeys Ṗ = AP + PAᵀ + v eᵀ + e vᵀ with A = [[0,1],[−Ω_R²,−γ]],
/// which is the time derivative of the double convolution of G with N.
pub fn transient_moments(
    p: &ModelParams,
    init: &InitialState,
    t_grid: &[f64],
) -> Result<MomentTrajectory> {
    const OP: &str = "exact_hl::transient_moments";
    init.validate(OP)?;
    check_grid(OP, t_grid)?;
    if !(p.temperature > 0.0) {
        return Err(QbmError::domain(OP, "requires T > 0"));
    }
    let green = Green::new(p, GreenMode::Full)?;
    let cfg = MatsubaraConfig::default();
    let or2 = p.omega_r * p.omega_r;
    let g = p.gamma;
    // the drive saturates once N(u) has decayed
    let t_sat = 40.0 / p.lambda.min(2.0 * PI * p.temperature);
    let v_sat = noise_drive(p, t_sat, &cfg)?;
    let drive = |t: f64| -> (f64, f64) {
        if t >= t_sat {
            v_sat
        } else {
            noise_drive(p, t, &cfg).unwrap_or((f64::NAN, f64::NAN))
        }
    };
    let rhs = |t: f64, y: &[f64], d: &mut [f64]| {
        let (x, yv) = drive(t);
        let (q2, c, p2) = (y[0], y[1], y[2]);
        d[0] = 2.0 * c;
        d[1] = p2 - or2 * q2 - g * c + x;
        d[2] = -2.0 * or2 * c - 2.0 * g * p2 + 2.0 * yv;
    };
    let mut grid = Vec::with_capacity(t_grid.len() + 1);
    if t_grid[0] > 0.0 {
        grid.push(0.0);
    }
    grid.extend_from_slice(t_grid);
    let fast = 1.0 / (10.0 * p.lambda.max(2.0 * PI * p.temperature));
    let slow = 1.0 / (10.0 * p.omega_r);
    let max_step = |t: f64| {
        if t < t_sat {
            fast.max(t * 0.05).min(slow)
        } else {
            slow
        }
    };
    let sol = ode::integrate(
        rhs,
        &[0.0, 0.0, 0.0],
        &grid,
        max_step,
        OdeTol {
            rtol: 1e-9,
            atol: 1e-12,
        },
    )
    .map_err(|e| match e {
        QbmError::StepFailure { t, .. } => QbmError::StepFailure { op: OP, t },
        other => other,
    })?;
    if sol.iter().any(|y| y.iter().any(|v| !v.is_finite())) {
        return Err(QbmError::StepFailure {
            op: OP,
            t: f64::NAN,
        });
    }
    let offset = grid.len() - t_grid.len();
    let mut traj = MomentTrajectory::with_capacity(t_grid.len(), Method::ExactClosed);
    let c0 = 0.5 * init.pq_sym;
    for (i, &t) in t_grid.iter().enumerate() {
        let (gt, gd, gdd) = green.eval2(t);
        let y = &sol[i + offset];
        // Φ = [[Ġ, G], [G̈, Ġ]] applied to the initial covariance
        let q2 = gd * gd * init.q2 + gt * gt * init.p2 + 2.0 * gd * gt * c0 + y[0];
        let p2 = gdd * gdd * init.q2 + gd * gd * init.p2 + 2.0 * gdd * gd * c0 + y[2];
        let c = gd * gdd * init.q2 + gt * gd * init.p2 + (gd * gd + gt * gdd) * c0 + y[1];
        traj.push(
            t,
            gd * init.q + gt * init.p,
            gdd * init.q + gd * init.p,
            q2,
            p2,
            2.0 * c,
        );
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_params;

    #[test]
    fn closed_matches_quadrature_benchmark() {
        let p = derive_params(1.0, 0.005, 100.0, 1.0).unwrap();
        let c = stationary_closed(&p).unwrap();
        let q = stationary_quadrature(&p, 1e-10).unwrap().moments;
        assert!((c.q2 - q.q2).abs() < 1e-6 * q.q2, "{} {}", c.q2, q.q2);
        assert!((c.p2 - q.p2).abs() < 1e-6 * q.p2, "{} {}", c.p2, q.p2);
    }

    #[test]
    fn weak_coupling_limit_is_free_oscillator() {
        let p = derive_params(1.0, 1e-8, 1e4, 0.7).unwrap();
        let c = stationary_closed(&p).unwrap();
        let free = 1.0 / (1.0 / 1.4f64).tanh();
        assert!((c.q2 - free / 2.0).abs() < 1e-4 * free);
        assert!((c.p2 - free / 2.0).abs() < 1e-4 * free);
        let q = stationary_quadrature(&p, 1e-8).unwrap().moments;
        assert!((q.q2 - free / 2.0).abs() < 1e-4 * free);
    }

    #[test]
    fn zero_temperature_is_quadrature_only() {
        let p = derive_params(1.0, 0.005, 50.0, 0.0).unwrap();
        assert!(stationary_closed(&p).is_err());
        let q = stationary_quadrature(&p, 1e-8).unwrap().moments;
        assert!(q.q2 * q.p2 >= 0.25);
    }

    #[test]
    fn init_validation() {
        let bad = InitialState {
            q2: 0.1,
            p2: 0.1,
            pq_sym: 0.0,
            q: 0.0,
            p: 0.0,
        };
        assert!(matches!(
            bad.validate("t"),
            Err(QbmError::UnphysicalInit { .. })
        ));
        assert!(InitialState::thermal(1.0, 0.0).validate("t").is_ok());
    }

    #[test]
    fn noise_kernel_classical_limit() {
        let p = derive_params(1.0, 0.05, 10.0, 1000.0).unwrap();
        let v = noise_kernel_sym(&p, 0.2).unwrap();
        let cl = 0.05 * 1000.0 * 10.0 * (-2.0f64).exp();
        assert!((v - cl).abs() < 1e-3 * cl, "{v} vs {cl}");
        assert_eq!(
            noise_kernel_sym(&p, 0.3).unwrap(),
            noise_kernel_sym(&p, -0.3).unwrap()
        );
    }

    #[test]
    fn noise_drive_saturates_at_laplace_value() {
        let p = derive_params(1.0, 0.05, 20.0, 5.0).unwrap();
        let cfg = MatsubaraConfig::default();
        let (x1, y1) = noise_drive(&p, 10.0, &cfg).unwrap();
        let (x2, y2) = noise_drive(&p, 12.0, &cfg).unwrap();
        assert!((x1 - x2).abs() < 1e-9 * x1.abs().max(1.0));
        assert!((y1 - y2).abs() < 1e-9 * y1.abs().max(1.0));
    }
}
