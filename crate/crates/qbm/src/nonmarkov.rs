//! Born approximation without the Markov step: the moment hierarchy keeps
//! its memory integrals, solved here as a Volterra integro-differential system.

use nalgebra::{Matrix5, Vector5};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QbmError, Result};
use crate::exact::{check_grid, InitialState, Method, MomentTrajectory, StationaryMoments};
use crate::markov::{
    asymptotic_coefficients, drive_saturation_time, DriveCache, MarkovCoefficients,
};
use crate::params::ModelParams;

/// Memory kernels C(τ) = γΛ²e^{−Λτ}cos Ωτ and S(τ) = γΛ²e^{−Λτ}sin(Ωτ)/Ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemoryKernels {
    pub c: f64,
    pub s: f64,
}

/// Iterated kernels K_n(t;t) of the derivative expansion, n = 1, 2, 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeKernels {
    pub k1: Complex64,
    pub k2: Complex64,
    pub k3: Complex64,
}

impl DerivativeKernels {
    /// (C_n, S_n) = (Re K_n, Im K_n / Ω)
    pub fn split(&self, omega: f64) -> [(f64, f64); 3] {
        [self.k1, self.k2, self.k3].map(|k| (k.re, k.im / omega))
    }
}

fn kernel_rate(p: &ModelParams) -> Complex64 {
    Complex64::new(p.lambda, -p.omega())
}

pub fn memory_kernels(p: &ModelParams, tau: f64) -> Result<MemoryKernels> {
    if !(tau >= 0.0) {
        return Err(QbmError::domain(
            "qme_nonmarkov::memory_kernels",
            "tau must be >= 0",
        ));
    }
    let om = p.omega();
    let env = p.gamma * p.lambda * p.lambda * (-p.lambda * tau).exp();
    let (s, c) = (om * tau).sin_cos();
    Ok(MemoryKernels {
        c: env * c,
        s: env * s / om,
    })
}

/// K_n(t;t) = ∫₀ᵗ (t−s)^{n−1}/(n−1)! K₀(t;s) ds = (γΛ²/zⁿ)[1 − e^{−zt} Σ_{k<n} (zt)^k/k!]
/// with z = Λ − iΩ. For small |zt| the bracket is summed as its own power
/// series to avoid cancellation.
pub fn derivative_kernels(p: &ModelParams, t: f64) -> Result<DerivativeKernels> {
    if !(t >= 0.0) {
        return Err(QbmError::domain(
            "qme_nonmarkov::derivative_kernels",
            "t must be >= 0",
        ));
    }
    let z = kernel_rate(p);
    let zt = z * t;
    let pre = p.gamma * p.lambda * p.lambda;
    let bracket = |n: u32| -> Complex64 {
        if zt.norm() < 0.5 {
            // 1 − e^{−x}Σ_{k<n} x^k/k! = e^{−x} Σ_{k≥n} x^k/k!
            let mut term = Complex64::new(1.0, 0.0);
            for k in 1..=n {
                term *= zt / k as f64;
            }
            let mut sum = term;
            for k in (n + 1)..60 {
                term *= zt / k as f64;
                sum += term;
                if term.norm() < 1e-18 * sum.norm() {
                    break;
                }
            }
            sum * (-zt).exp()
        } else {
            let mut partial = Complex64::new(0.0, 0.0);
            let mut term = Complex64::new(1.0, 0.0);
            for k in 0..n {
                if k > 0 {
                    term *= zt / k as f64;
                }
                partial += term;
            }
            Complex64::new(1.0, 0.0) - (-zt).exp() * partial
        }
    };
    Ok(DerivativeKernels {
        k1: bracket(1) * pre / z,
        k2: bracket(2) * pre / (z * z),
        k3: bracket(3) * pre / (z * z * z),
    })
}

/// Stationary point of the hierarchy: every derivative term of the
/// expansion vanishes, leaving ⟨q²⟩ = h∞/(2Ω²β∞) = coth(Ω/2T)/2Ω and
/// ⟨p²⟩ = (Ω² − α∞)⟨q²⟩ − f∞/2.
pub fn stationary_nonmarkov(p: &ModelParams) -> Result<StationaryMoments> {
    let c = asymptotic_coefficients(p)?;
    // h∞/β∞ = Ω·coth(Ω/2T) exactly; evaluating it directly keeps γ = 0 finite
    let q2 = crate::markov::equipartition_p2(p) / p.omega_sq;
    let p2 = (p.omega_sq - c.alpha) * q2 - 0.5 * c.f;
    Ok(StationaryMoments {
        q2,
        p2,
        pq_sym: 0.0,
        method: Method::BornNonMarkov,
    })
}

/// Residuals of the hierarchy truncated after K₁ (a time-local system with
/// C₁ = α, S₁ = β). Compared with the Markov equations the ⟨pq+qp⟩ self
/// coupling enters with +β instead of −β, and ⟨p²⟩ is damped through
/// −2Ω²β⟨q²⟩ rather than −2β⟨p²⟩: inside the memory integrals q and p trade
/// places.
pub fn nonmarkov_local_residuals(
    p: &ModelParams,
    c: &MarkovCoefficients,
    m: &StationaryMoments,
) -> [f64; 3] {
    let k = p.omega_sq - c.alpha;
    [
        m.pq_sym,
        2.0 * m.p2 - 2.0 * k * m.q2 + c.beta * m.pq_sym + c.f,
        -k * m.pq_sym - 2.0 * p.omega_sq * c.beta * m.q2 + c.h,
    ]
}

/// Solver settings for [`integrate_nonmarkov_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonMarkovOptions {
    /// Memory truncation; the default 40/Λ leaves e^{−40} of the kernel mass.
    pub memory_window: f64,
    /// Step of the coarse grid; `None` picks min(1/20Λ, 1/20Ω).
    pub step: Option<f64>,
    /// Combine steps h and h/2 to cancel the O(h²) error.
    pub richardson: bool,
}

impl NonMarkovOptions {
    pub fn for_params(p: &ModelParams) -> Self {
        NonMarkovOptions {
            memory_window: 40.0 / p.lambda,
            step: None,
            richardson: true,
        }
    }
}

const MASS_TOL: f64 = 1e-8;

pub fn integrate_nonmarkov(
    p: &ModelParams,
    init: &InitialState,
    t_grid: &[f64],
    memory_window: f64,
) -> Result<MomentTrajectory> {
    let opts = NonMarkovOptions {
        memory_window,
        ..NonMarkovOptions::for_params(p)
    };
    integrate_nonmarkov_with(p, init, t_grid, &opts)
}

pub fn integrate_nonmarkov_with(
    p: &ModelParams,
    init: &InitialState,
    t_grid: &[f64],
    opts: &NonMarkovOptions,
) -> Result<MomentTrajectory> {
    const OP: &str = "qme_nonmarkov::integrate_nonmarkov";
    init.validate(OP)?;
    check_grid(OP, t_grid)?;
    if !(p.temperature > 0.0) {
        return Err(QbmError::domain(OP, "requires T > 0"));
    }
    // |K(τ)| = γΛ²e^{−Λτ}: the mass beyond the window is e^{−ΛW}
    let required = -MASS_TOL.ln() / p.lambda;
    if !(opts.memory_window >= required) {
        return Err(QbmError::MemoryWindowTooShort {
            op: OP,
            window: opts.memory_window,
            required,
        });
    }
    let h = opts
        .step
        .unwrap_or_else(|| (1.0 / (20.0 * p.lambda)).min(1.0 / (20.0 * p.omega())));
    if !(h > 0.0) {
        return Err(QbmError::domain(OP, "step must be positive"));
    }
    let y0 = Vector5::new(init.q, init.p, init.q2, init.pq_sym, init.p2);
    let t_end = *t_grid.last().unwrap();
    let drive = DriveCache::new(p)?;
    let fine_h = if opts.richardson { 0.5 * h } else { h };
    let drives = drive_table(&drive, p, fine_h, t_end);

    let outputs: Vec<Result<Vec<Vector5<f64>>>> = if opts.richardson {
        [(h, 2usize), (0.5 * h, 1usize)]
            .par_iter()
            .map(|&(hh, stride)| {
                solve(
                    p,
                    &y0,
                    t_grid,
                    hh,
                    opts.memory_window,
                    &drives,
                    stride,
                    &drive,
                )
            })
            .collect()
    } else {
        vec![solve(
            p,
            &y0,
            t_grid,
            h,
            opts.memory_window,
            &drives,
            1,
            &drive,
        )]
    };
    let mut outputs = outputs.into_iter().collect::<Result<Vec<_>>>()?;
    let ys = if opts.richardson {
        let fine = outputs.pop().unwrap();
        let coarse = outputs.pop().unwrap();
        coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| (f * 4.0 - c) / 3.0)
            .collect()
    } else {
        outputs.pop().unwrap()
    };
    let mut traj = MomentTrajectory::with_capacity(t_grid.len(), Method::BornNonMarkov);
    for (&t, y) in t_grid.iter().zip(&ys) {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(QbmError::StepFailure { op: OP, t });
        }
        traj.push(t, y[0], y[1], y[2], y[4], y[3]);
    }
    Ok(traj)
}

/// (f, h) on the fine grid up to the drive saturation time.
fn drive_table(drive: &DriveCache, p: &ModelParams, h: f64, t_end: f64) -> Vec<(f64, f64)> {
    let n = ((drive_saturation_time(p).min(t_end) / h).ceil() as usize) + 2;
    (0..n)
        .into_par_iter()
        .map(|i| drive.fh(i as f64 * h))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn solve(
    p: &ModelParams,
    y0: &Vector5<f64>,
    t_grid: &[f64],
    h: f64,
    window: f64,
    drives: &[(f64, f64)],
    stride: usize,
    drive: &DriveCache,
) -> Result<Vec<Vector5<f64>>> {
    let om = p.omega();
    let om2 = p.omega_sq;
    let g = p.gamma * p.lambda * p.lambda;
    let z = kernel_rate(p);

    // instantaneous part of y' = A y + memory + drive
    #[rustfmt::skip]
    let a = Matrix5::new(
        0.0, 1.0, 0.0, 0.0, 0.0,
        -om2, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, -2.0 * om2, 0.0, 2.0,
        0.0, 0.0, 0.0, -om2, 0.0,
    );
    // product trapezoid: the kernel is integrated exactly against the
    // piecewise-linear interpolant of the history, so node j at lag k gets
    // e^{−zkh}·a + e^{−z(k−1)h}·b with
    // a = ∫₀ʰ e^{−zu}(1 − u/h) du, b = ∫₀ʰ e^{−zu}(u/h) du
    let lin_weights = |z: Complex64| -> (Complex64, Complex64) {
        let zh = z * h;
        if zh.norm() < 1e-3 {
            // series to O((zh)³)
            let a = (Complex64::new(0.5, 0.0) - zh / 6.0 + zh * zh / 24.0) * h;
            let b = (Complex64::new(0.5, 0.0) - zh / 3.0 + zh * zh / 8.0) * h;
            return (a, b);
        }
        let e = (-zh).exp();
        let one_minus = Complex64::new(1.0, 0.0) - e;
        let a = z.inv() - one_minus / (z * zh);
        let b = one_minus / (z * zh) - e / z;
        (a, b)
    };
    let zm = Complex64::new(p.lambda, 0.0);
    let (am, bm) = lin_weights(zm);
    let (ac, bc) = lin_weights(z);
    let lags = ((window / h).ceil() as usize).max(1);
    let mut mem_q = WindowedMemory::new(zm, h, g, am, bm, lags);
    let mut mem_q2 = WindowedMemory::new(z, h, g, ac, bc, lags);
    let mut mem_pq = WindowedMemory::new(z, h, g, ac, bc, lags);
    // the newest node enters with weight g·a
    let (gm, gc) = (g * am.re, ac * g);
    let mut a_new = a;
    a_new[(1, 0)] += gm;
    a_new[(3, 2)] += 2.0 * gc.re;
    a_new[(3, 3)] += gc.im / om;
    a_new[(4, 3)] += gc.re;
    a_new[(4, 2)] -= 2.0 * om * gc.im;
    let lhs = Matrix5::identity() - a_new * (0.5 * h);
    let lhs_inv = lhs.try_inverse().ok_or(QbmError::StepFailure {
        op: "qme_nonmarkov::integrate_nonmarkov",
        t: 0.0,
    })?;

    let n_steps = (t_grid.last().unwrap() / h).ceil() as usize;
    let mut hq = Vec::with_capacity(n_steps + 1);
    let mut hq2 = Vec::with_capacity(n_steps + 1);
    let mut hpq = Vec::with_capacity(n_steps + 1);
    hq.push(y0[0]);
    hq2.push(y0[2]);
    hpq.push(y0[3]);

    let fh_at = |n: usize| -> (f64, f64) {
        let i = n * stride;
        if i < drives.len() {
            drives[i]
        } else {
            drive.fh(n as f64 * h)
        }
    };
    let mut y = *y0;
    let mut f_cur = a * y;
    let mut out = Vec::with_capacity(t_grid.len());
    let mut next_out = 0usize;
    while next_out < t_grid.len() && t_grid[next_out] <= 0.0 {
        out.push(y);
        next_out += 1;
    }
    let mut n = 0usize;
    while next_out < t_grid.len() {
        let m = n + 1;
        // history part of the memory at t_m, nodes 0..m−1 inside the window
        let back = |hist: &Vec<f64>| {
            if n >= lags {
                Some(hist[n - lags])
            } else {
                None
            }
        };
        mem_q.advance(hq[n], back(&hq));
        mem_q2.advance(hq2[n], back(&hq2));
        mem_pq.advance(hpq[n], back(&hpq));
        let sq = mem_q.history(m, y0[0]).re;
        let sq2 = mem_q2.history(m, y0[2]);
        let spq = mem_pq.history(m, y0[3]);
        let (fd, hd) = fh_at(m);
        let mut b = Vector5::zeros();
        b[1] = sq;
        b[3] = 2.0 * sq2.re + spq.im / om + fd;
        b[4] = spq.re - 2.0 * om * sq2.im + hd;
        let rhs = y + (f_cur + b) * (0.5 * h);
        let y_new = lhs_inv * rhs;
        let f_new = a_new * y_new + b;
        hq.push(y_new[0]);
        hq2.push(y_new[2]);
        hpq.push(y_new[3]);
        let (t0, t1) = (n as f64 * h, m as f64 * h);
        while next_out < t_grid.len() && t_grid[next_out] <= t1 {
            out.push(hermite(
                t0,
                t1,
                &y,
                &y_new,
                &f_cur,
                &f_new,
                t_grid[next_out],
            ));
            next_out += 1;
        }
        y = y_new;
        f_cur = f_new;
        n = m;
    }
    Ok(out)
}

/// Windowed product-trapezoid sum Σ_{k=1}^{min(m,L)} w_k y_{m−k} for the
/// kernel gE^{τ/h} with E = e^{−zh}. Interior weights are geometric in the lag,
/// w_k = E^{k−1}·g(Ea + b), so the sum is updated in O(1) per step; the
/// t = 0 node has weight E^{m−1}·gb and is corrected for separately.
struct WindowedMemory {
    e: Complex64,
    c: Complex64,
    ga: Complex64,
    e_lags: Complex64,
    e_m: Complex64,
    lags: usize,
    r: Complex64,
}

impl WindowedMemory {
    fn new(z: Complex64, h: f64, g: f64, a: Complex64, b: Complex64, lags: usize) -> Self {
        let e = (-z * h).exp();
        WindowedMemory {
            e,
            c: (e * a + b) * g,
            ga: a * g,
            e_lags: (-z * (h * lags as f64)).exp(),
            e_m: Complex64::new(1.0, 0.0),
            lags,
            r: Complex64::new(0.0, 0.0),
        }
    }

    /// Moves from R_{m−1} to R_m given y_{m−1} and, once the window is full,
    /// the node y_{m−1−L} that drops out.
    fn advance(&mut self, newest: f64, leaving: Option<f64>) {
        self.r = self.e * self.r + newest;
        if let Some(old) = leaving {
            self.r -= self.e_lags * old;
        }
        self.e_m *= self.e;
    }

    fn history(&self, m: usize, y_start: f64) -> Complex64 {
        let mut h = self.c * self.r;
        if m <= self.lags {
            h -= self.e_m * self.ga * y_start;
        }
        h
    }
}

fn hermite(
    t0: f64,
    t1: f64,
    y0: &Vector5<f64>,
    y1: &Vector5<f64>,
    d0: &Vector5<f64>,
    d1: &Vector5<f64>,
    t: f64,
) -> Vector5<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    y0 * h00 + d0 * (h10 * h) + y1 * h01 + d1 * (h11 * h)
}
