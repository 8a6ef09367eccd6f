//! Brute-force reference model: the oscillator coupled to N explicit bath
//! oscillators, propagated exactly through the normal modes of the closed
//! (N + 1)-oscillator system.
//!
//! In mass-weighted coordinates x = (q, Q₁..Q_N) the Hamiltonian is
//! ½pᵀp + ½xᵀKx with the arrowhead stiffness
//!
//!   K = [[Ω_d², −Cᵀ], [−C, diag(W²)]].
//!
//! Its eigenvalues interlace the W_k², so each one sits in a known bracket
//! and the secular equation is solved root by root. The eigenvectors are
//! built from couplings recomputed out of the computed eigenvalues, which
//! keeps them orthogonal to working precision even for tightly clustered
//! bath frequencies. With K = U diag(ν²) Uᵀ the propagator is
//!
//!   x(t) = U cos(νt) Uᵀ x₀ + U [sin(νt)/ν] Uᵀ p₀,
//!
//! and for the factorized Gaussian initial state only a handful of
//! matrix-vector products per time are needed to obtain the system moments
//! and ⟨qB⟩.

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{QbmError, Result};
use crate::exact::{InitialState, Method, StationaryMoments};
use crate::params::{spectral_density, BathSpectrum, ModelParams};
use crate::sysbath::EnergyFlow;

const MIN_MODES: usize = 100;

/// An explicit bath sampled on Gauss-Legendre nodes of [0, ω_max].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteBath {
    pub spectrum: BathSpectrum,
    pub n_modes: usize,
    pub omega_max: f64,
    /// ascending, all distinct and positive
    pub frequencies: Vec<f64>,
    pub couplings: Vec<f64>,
    pub weights: Vec<f64>,
    /// 2π over the smallest gap between neighbouring frequencies
    pub recurrence_time: f64,
}

impl DiscreteBath {
    /// Σ_k C_k²/W_k², the static frequency shift the discrete bath imposes.
    pub fn static_shift(&self) -> f64 {
        self.couplings
            .iter()
            .zip(&self.frequencies)
            .map(|(c, w)| c * c / (w * w))
            .sum()
    }

    /// Spectral density recovered from the modes, each line πC_k²/2W_k
    /// broadened by a unit-area Gaussian of the given width.
    pub fn smeared_density(&self, omega: f64, width: f64) -> f64 {
        let norm = 1.0 / (width * (2.0 * PI).sqrt());
        self.couplings
            .iter()
            .zip(&self.frequencies)
            .map(|(c, w)| {
                let z = (omega - w) / width;
                PI * c * c / (2.0 * w) * norm * (-0.5 * z * z).exp()
            })
            .sum()
    }

    /// −Σ_k (C_k²/W_k) sin(W_k τ).
    pub fn self_energy(&self, tau: f64) -> f64 {
        -self
            .couplings
            .iter()
            .zip(&self.frequencies)
            .map(|(c, w)| c * c / w * (w * tau).sin())
            .sum::<f64>()
    }

    fn check_horizon(&self, op: &'static str, horizon: f64) -> Result<()> {
        if !(horizon <= 0.5 * self.recurrence_time) {
            return Err(QbmError::Resolution {
                op,
                horizon,
                t_rec: self.recurrence_time,
            });
        }
        Ok(())
    }
}

pub fn build_bath(
    spec: &BathSpectrum,
    n_modes: usize,
    omega_max: f64,
    horizon_hint: Option<f64>,
) -> Result<DiscreteBath> {
    const OP: &str = "oracle::build_bath";
    if n_modes < MIN_MODES {
        return Err(QbmError::domain(
            OP,
            format!("n_modes = {n_modes} < {MIN_MODES}"),
        ));
    }
    if !(spec.gamma >= 0.0) || !(spec.lambda > 0.0) {
        return Err(QbmError::domain(OP, "needs gamma >= 0 and lambda > 0"));
    }
    if !(omega_max >= 10.0 * spec.lambda) || !omega_max.is_finite() {
        return Err(QbmError::domain(
            OP,
            format!("omega_max = {omega_max} < 10 lambda"),
        ));
    }
    let rule = GaussLegendre::new(n_modes).map_err(|e| QbmError::domain(OP, e.to_string()))?;
    let mut nodes = rule.into_node_weight_pairs();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = 0.5 * omega_max;
    let frequencies: Vec<f64> = nodes.iter().map(|(x, _)| half * (x + 1.0)).collect();
    let weights: Vec<f64> = nodes.iter().map(|(_, w)| half * w).collect();
    let couplings = frequencies
        .iter()
        .zip(&weights)
        .map(|(&w, &wt)| (2.0 / PI * spectral_density(spec, w) * w * wt).sqrt())
        .collect();
    let min_gap = frequencies
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(f64::INFINITY, f64::min);
    if !(min_gap > 0.0) || !(frequencies[0] > 0.0) {
        return Err(QbmError::domain(
            OP,
            "bath frequencies are not distinct and positive",
        ));
    }
    let bath = DiscreteBath {
        spectrum: *spec,
        n_modes,
        omega_max,
        frequencies,
        couplings,
        weights,
        recurrence_time: 2.0 * PI / min_gap,
    };
    if let Some(h) = horizon_hint {
        bath.check_horizon(OP, h)?;
    }
    Ok(bath)
}

/// Eigen-decomposition K = U diag(ν²) Uᵀ of the closed-system stiffness.
#[derive(Debug, Clone)]
pub struct NormalModes {
    /// Ω_d², the bare system stiffness of the discrete model
    pub omega_sq_bare: f64,
    pub nu: Vec<f64>,
    /// columns are the normal modes, row 0 is the system coordinate
    pub u: DMatrix<f64>,
}

/// Dense stiffness matrix, for checks at small N.
pub fn stiffness_matrix(bath: &DiscreteBath, omega_sq_bare: f64) -> DMatrix<f64> {
    let n = bath.n_modes + 1;
    let mut k = DMatrix::zeros(n, n);
    k[(0, 0)] = omega_sq_bare;
    for (i, (c, w)) in bath.couplings.iter().zip(&bath.frequencies).enumerate() {
        k[(0, i + 1)] = -c;
        k[(i + 1, 0)] = -c;
        k[(i + 1, i + 1)] = w * w;
    }
    k
}

/// Eigenvalue written as pole + offset so that roots close to a pole keep
/// their relative accuracy.
#[derive(Debug, Clone, Copy)]
struct Root {
    origin: f64,
    mu: f64,
}

impl Root {
    fn value(&self) -> f64 {
        self.origin + self.mu
    }
    /// d − λ evaluated without cancellation against the origin.
    fn gap_from(&self, d: f64) -> f64 {
        (d - self.origin) - self.mu
    }
}

/// f(σ + μ) and f' for f(λ) = a − λ − Σ c²/(d − λ).
fn secular(a: f64, d: &[f64], c2: &[f64], origin: f64, mu: f64) -> (f64, f64) {
    let mut g = (a - origin) - mu;
    let mut dg = -1.0;
    for (&dk, &ck) in d.iter().zip(c2) {
        let r = 1.0 / ((dk - origin) - mu);
        g -= ck * r;
        dg -= ck * r * r;
    }
    (g, dg)
}

/// Safeguarded Newton on the decreasing secular function inside (lo, hi).
fn solve_root(a: f64, d: &[f64], c2: &[f64], origin: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..400 {
        let (g, dg) = secular(a, d, c2, origin, mu);
        if g == 0.0 {
            return mu;
        }
        if g > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let mut next = mu - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let scale = next.abs().max(f64::MIN_POSITIVE);
        if (next - mu).abs() <= 4.0 * f64::EPSILON * scale
            || hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs())
        {
            return next;
        }
        mu = next;
    }
    mu
}

fn arrowhead_roots(a: f64, d: &[f64], c2: &[f64]) -> Vec<Root> {
    let n = d.len();
    let csum: f64 = c2.iter().map(|v| v.sqrt()).sum();
    let lower = (a - csum).min(d[0]) - 1.0;
    let upper = (a + csum).max(d[n - 1]) + 1.0;
    (0..=n)
        .into_par_iter()
        .map(|j| {
            if j == 0 {
                let origin = d[0];
                Root {
                    origin,
                    mu: solve_root(a, d, c2, origin, lower - origin, 0.0),
                }
            } else if j == n {
                let origin = d[n - 1];
                Root {
                    origin,
                    mu: solve_root(a, d, c2, origin, 0.0, upper - origin),
                }
            } else {
                let (left, right) = (d[j - 1], d[j]);
                let half = 0.5 * (right - left);
                let (g, _) = secular(a, d, c2, left, half);
                if g >= 0.0 {
                    Root {
                        origin: right,
                        mu: solve_root(a, d, c2, right, -half, 0.0),
                    }
                } else {
                    Root {
                        origin: left,
                        mu: solve_root(a, d, c2, left, 0.0, half),
                    }
                }
            }
        })
        .collect()
}

/// Normal modes of the arrowhead matrix [[a, −cᵀ], [−c, diag(d)]] with
/// strictly increasing d and nonzero c.
fn arrowhead_modes(
    op: &'static str,
    a: f64,
    d: &[f64],
    c: &[f64],
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = d.len();
    let c2: Vec<f64> = c.iter().map(|v| v * v).collect();
    let roots = arrowhead_roots(a, d, &c2);
    let lambda: Vec<f64> = roots.iter().map(Root::value).collect();
    if let Some(bad) = lambda.iter().find(|l| !(**l > 0.0)) {
        return Err(QbmError::DiagonalizationFailure {
            op,
            msg: format!(
                "non-positive normal-mode eigenvalue {bad}: the closed system is unstable"
            ),
        });
    }
    // couplings for which the computed eigenvalues are exact (Löwner)
    let chat: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let dk = d[k];
            let mut log = 0.0;
            for r in &roots {
                let v = r.gap_from(dk);
                log += v.abs().ln();
            }
            for (i, &di) in d.iter().enumerate() {
                if i != k {
                    let v = dk - di;
                    log -= v.abs().ln();
                }
            }
            // −∏(d_k − λ_j)/∏(d_k − d_i) is positive for interlaced roots
            (0.5 * log).exp() * c[k].signum()
        })
        .collect();
    let dim = n + 1;
    let mut data = vec![0.0; dim * dim];
    data.par_chunks_mut(dim)
        .zip(roots.par_iter())
        .for_each(|(col, r)| {
            col[0] = 1.0;
            for k in 0..n {
                col[k + 1] = chat[k] / r.gap_from(d[k]);
            }
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            col.iter_mut().for_each(|v| *v /= norm);
        });
    let u = DMatrix::from_vec(dim, dim, data);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(QbmError::DiagonalizationFailure {
            op,
            msg: "non-finite eigenvector entries".into(),
        });
    }
    Ok((lambda, u))
}

/// Diagonalizes the closed system whose renormalized frequency is Ω_R: the
/// bare stiffness is Ω_R² plus the static shift of this particular bath.
pub fn normal_modes(bath: &DiscreteBath, omega_r: f64) -> Result<NormalModes> {
    const OP: &str = "oracle::evolve";
    let omega_sq_bare = omega_r * omega_r + bath.static_shift();
    let d: Vec<f64> = bath.frequencies.iter().map(|w| w * w).collect();
    let n = bath.n_modes;
    if bath.couplings.iter().all(|c| *c == 0.0) {
        let mut nu = vec![omega_sq_bare.sqrt()];
        nu.extend_from_slice(&bath.frequencies);
        return Ok(NormalModes {
            omega_sq_bare,
            nu,
            u: DMatrix::identity(n + 1, n + 1),
        });
    }
    if bath.couplings.contains(&0.0) {
        return Err(QbmError::DiagonalizationFailure {
            op: OP,
            msg: "partially decoupled bath modes are not supported".into(),
        });
    }
    let (lambda, u) = arrowhead_modes(OP, omega_sq_bare, &d, &bath.couplings)?;
    Ok(NormalModes {
        omega_sq_bare,
        nu: lambda.iter().map(|l| l.sqrt()).collect(),
        u,
    })
}

/// System moments and the system-bath correlation at one time. The full
/// covariance is available from [`full_covariance`] for small baths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceState {
    pub time: f64,
    pub q: f64,
    pub p: f64,
    pub q2: f64,
    pub p2: f64,
    /// ⟨qp + pq⟩
    pub pq_sym: f64,
    /// ⟨qB⟩ with B = Σ_k C_k Q_k
    pub qb: f64,
}

/// Expectation values of the three parts of the Hamiltonian, evaluated from
/// the covariance in the original coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheckpoint {
    pub time: f64,
    pub system: f64,
    pub interaction: f64,
    pub bath: f64,
}

impl EnergyCheckpoint {
    pub fn total(&self) -> f64 {
        self.system + self.interaction + self.bath
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    pub omega_r: f64,
    pub temperature: f64,
    pub omega_sq_bare: f64,
    pub states: Vec<CovarianceState>,
    pub initial_energy: EnergyCheckpoint,
    pub energy: Vec<EnergyCheckpoint>,
}

impl OracleRun {
    /// Largest |⟨H⟩(t) − ⟨H⟩(0)|/|⟨H⟩(0)| over the checkpoints.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.initial_energy.total();
        self.energy
            .iter()
            .map(|e| ((e.total() - e0) / e0).abs())
            .fold(0.0, f64::max)
    }
}

/// Diagonal initial second moments: system coordinate first, then the bath
/// in its thermal state.
struct InitialMoments {
    sx: Vec<f64>,
    sp: Vec<f64>,
    /// ½⟨qp + pq⟩ of the system
    cross: f64,
}

fn initial_moments(bath: &DiscreteBath, init: &InitialState, temperature: f64) -> InitialMoments {
    let mut sx = Vec::with_capacity(bath.n_modes + 1);
    let mut sp = Vec::with_capacity(bath.n_modes + 1);
    sx.push(init.q2);
    sp.push(init.p2);
    for &w in &bath.frequencies {
        let th = InitialState::thermal(w, temperature);
        sx.push(th.q2);
        sp.push(th.p2);
    }
    InitialMoments {
        sx,
        sp,
        cross: 0.5 * init.pq_sym,
    }
}

/// Bath couplings with a leading zero for the system slot.
fn padded_couplings(bath: &DiscreteBath) -> DVector<f64> {
    let mut c = DVector::zeros(bath.n_modes + 1);
    c.rows_mut(1, bath.n_modes).copy_from_slice(&bath.couplings);
    c
}

pub fn evolve(
    bath: &DiscreteBath,
    params: &ModelParams,
    init: &InitialState,
    t_grid: &[f64],
) -> Result<OracleRun> {
    let end = t_grid.iter().copied().fold(0.0, f64::max);
    evolve_with_checkpoints(bath, params, init, t_grid, &[end])
}

/// As [`evolve`], with the energy evaluated in the original coordinates at
/// each of `checkpoints`. Each checkpoint costs a few (N + 1)³ products.
pub fn evolve_with_checkpoints(
    bath: &DiscreteBath,
    params: &ModelParams,
    init: &InitialState,
    t_grid: &[f64],
    checkpoints: &[f64],
) -> Result<OracleRun> {
    const OP: &str = "oracle::evolve";
    if params.gamma != bath.spectrum.gamma || params.lambda != bath.spectrum.lambda {
        return Err(QbmError::domain(
            OP,
            "model parameters do not match the bath spectrum",
        ));
    }
    init.validate(OP)?;
    if t_grid.iter().chain(checkpoints).any(|t| !(*t >= 0.0)) {
        return Err(QbmError::domain(
            OP,
            "times must be finite and non-negative",
        ));
    }
    let horizon = t_grid
        .iter()
        .chain(checkpoints)
        .copied()
        .fold(0.0, f64::max);
    bath.check_horizon(OP, horizon)?;

    let modes = normal_modes(bath, params.omega_r)?;
    let m0 = initial_moments(bath, init, params.temperature);
    let c = padded_couplings(bath);
    let u = &modes.u;
    let u0: DVector<f64> = u.row(0).transpose();
    let wc: DVector<f64> = u.tr_mul(&c);

    const PER_CHUNK: usize = 48;
    let chunks: Vec<&[f64]> = t_grid.chunks(PER_CHUNK).collect();
    let blocks: Vec<Vec<CovarianceState>> = chunks
        .par_iter()
        .map(|ts| evolve_chunk(&modes, &u0, &wc, &m0, init, ts))
        .collect();
    let states = blocks.into_iter().flatten().collect();

    let initial_energy = energy_at(&modes, bath, &m0, 0.0, &c);
    let energy = checkpoints
        .iter()
        .map(|&t| energy_at(&modes, bath, &m0, t, &c))
        .collect();
    Ok(OracleRun {
        omega_r: params.omega_r,
        temperature: params.temperature,
        omega_sq_bare: modes.omega_sq_bare,
        states,
        initial_energy,
        energy,
    })
}

/// For each time five vectors in the original basis: row 0 of cos(νt),
/// sin(νt)/ν and −ν sin(νt) rotated back, and the two propagators applied
/// to the coupling vector.
fn evolve_chunk(
    modes: &NormalModes,
    u0: &DVector<f64>,
    wc: &DVector<f64>,
    m0: &InitialMoments,
    init: &InitialState,
    ts: &[f64],
) -> Vec<CovarianceState> {
    let dim = u0.len();
    let mut r = DMatrix::zeros(dim, 5 * ts.len());
    for (j, &t) in ts.iter().enumerate() {
        for i in 0..dim {
            let nu = modes.nu[i];
            let (s, co) = (nu * t).sin_cos();
            let sn = if nu > 0.0 { s / nu } else { t };
            r[(i, 5 * j)] = u0[i] * co;
            r[(i, 5 * j + 1)] = u0[i] * sn;
            r[(i, 5 * j + 2)] = -u0[i] * nu * s;
            r[(i, 5 * j + 3)] = wc[i] * co;
            r[(i, 5 * j + 4)] = wc[i] * sn;
        }
    }
    let v = &modes.u * r;
    let (sx, sp, cr) = (&m0.sx, &m0.sp, m0.cross);
    ts.iter()
        .enumerate()
        .map(|(j, &t)| {
            // x₀(t) = Σ_i a_i x_i(0) + b_i p_i(0), p₀(t) = Σ_i ȧ_i x_i(0) + a_i p_i(0),
            // B(t) = Σ_i α_i x_i(0) + β_i p_i(0)
            let a = v.column(5 * j);
            let b = v.column(5 * j + 1);
            let ad = v.column(5 * j + 2);
            let al = v.column(5 * j + 3);
            let be = v.column(5 * j + 4);
            let mut q2 = 0.0;
            let mut p2 = 0.0;
            let mut qp = 0.0;
            let mut qb = 0.0;
            for i in 0..dim {
                q2 += a[i] * a[i] * sx[i] + b[i] * b[i] * sp[i];
                p2 += ad[i] * ad[i] * sx[i] + a[i] * a[i] * sp[i];
                qp += a[i] * ad[i] * sx[i] + b[i] * a[i] * sp[i];
                qb += a[i] * al[i] * sx[i] + b[i] * be[i] * sp[i];
            }
            // the only off-diagonal initial moment is the system's ⟨qp⟩_sym
            q2 += 2.0 * a[0] * b[0] * cr;
            p2 += 2.0 * ad[0] * a[0] * cr;
            qp += (a[0] * a[0] + b[0] * ad[0]) * cr;
            qb += (a[0] * be[0] + b[0] * al[0]) * cr;
            CovarianceState {
                time: t,
                q: a[0] * init.q + b[0] * init.p,
                p: ad[0] * init.q + a[0] * init.p,
                q2,
                p2,
                pq_sym: 2.0 * qp,
                qb,
            }
        })
        .collect()
}

/// Energies from the diagonal of the full covariance and the system-bath
/// row, built column block by column block from M(t) = U f(νt) Uᵀ.
fn energy_at(
    modes: &NormalModes,
    bath: &DiscreteBath,
    m0: &InitialMoments,
    t: f64,
    c: &DVector<f64>,
) -> EnergyCheckpoint {
    let dim = bath.n_modes + 1;
    let u = &modes.u;
    // xx_k = Σ_i Mc_ki² sx_i + Ms_ki² sp_i, pp_k = Σ_i Md_ki² sx_i + Mc_ki² sp_i,
    // and ⟨x₀ B⟩ = Σ_i (cᵀMc_i) Mc_0i sx_i + (cᵀMs_i) Ms_0i sp_i
    let mut xx = vec![0.0; dim];
    let mut pp = vec![0.0; dim];
    let mut x0b = 0.0;
    let mut col0 = [
        DVector::zeros(dim),
        DVector::zeros(dim),
        DVector::zeros(dim),
    ];
    let kinds: [fn(f64, f64) -> f64; 3] = [
        |nu, t| (nu * t).cos(),
        |nu, t| if nu > 0.0 { (nu * t).sin() / nu } else { t },
        |nu, t| -nu * (nu * t).sin(),
    ];
    const BLOCK: usize = 256;
    // per-coordinate x and p sums, the q·B cross term, column 0 of the first block
    type BlockPart = (Vec<f64>, Vec<f64>, f64, Option<DVector<f64>>);
    for (kind, f) in kinds.iter().enumerate() {
        let scale: Vec<f64> = modes.nu.iter().map(|&nu| f(nu, t)).collect();
        let mut y = u.clone();
        for (j, s) in scale.iter().enumerate() {
            y.column_mut(j).scale_mut(*s);
        }
        let starts: Vec<usize> = (0..dim).step_by(BLOCK).collect();
        let parts: Vec<BlockPart> = starts
            .par_iter()
            .map(|&s| {
                let len = BLOCK.min(dim - s);
                let m = &y * u.rows(s, len).transpose();
                let mut xx = vec![0.0; dim];
                let mut pp = vec![0.0; dim];
                let mut x0b = 0.0;
                for jj in 0..len {
                    let i = s + jj;
                    let col = m.column(jj);
                    let (wx, wp) = match kind {
                        0 => (m0.sx[i], m0.sp[i]),
                        1 => (m0.sp[i], 0.0),
                        _ => (0.0, m0.sx[i]),
                    };
                    for k in 0..dim {
                        let v2 = col[k] * col[k];
                        xx[k] += v2 * wx;
                        pp[k] += v2 * wp;
                    }
                    let w0 = match kind {
                        0 => m0.sx[i],
                        1 => m0.sp[i],
                        _ => 0.0,
                    };
                    if w0 != 0.0 {
                        x0b += c.dot(&col) * col[0] * w0;
                    }
                }
                let first = (s == 0).then(|| m.column(0).into_owned());
                (xx, pp, x0b, first)
            })
            .collect();
        for (pxx, ppp, px0b, first) in parts {
            xx.iter_mut().zip(&pxx).for_each(|(a, b)| *a += b);
            pp.iter_mut().zip(&ppp).for_each(|(a, b)| *a += b);
            x0b += px0b;
            if let Some(f) = first {
                col0[kind] = f;
            }
        }
    }
    let [mc, ms, md] = &col0;
    let cr = m0.cross;
    for k in 0..dim {
        xx[k] += 2.0 * mc[k] * ms[k] * cr;
        pp[k] += 2.0 * md[k] * mc[k] * cr;
    }
    x0b += (mc[0] * c.dot(ms) + ms[0] * c.dot(mc)) * cr;
    let system = 0.5 * pp[0] + 0.5 * modes.omega_sq_bare * xx[0];
    let bath_e = (1..dim)
        .map(|k| {
            let w = bath.frequencies[k - 1];
            0.5 * pp[k] + 0.5 * w * w * xx[k]
        })
        .sum();
    EnergyCheckpoint {
        time: t,
        system,
        interaction: -x0b,
        bath: bath_e,
    }
}

/// Full second-moment matrix of (x, p) at time t, ordered (q, Q₁..Q_N, p,
/// P₁..P_N). O(N³) memory-bound work; intended for small baths.
pub fn full_covariance(
    bath: &DiscreteBath,
    params: &ModelParams,
    init: &InitialState,
    t: f64,
) -> Result<DMatrix<f64>> {
    let modes = normal_modes(bath, params.omega_r)?;
    let m0 = initial_moments(bath, init, params.temperature);
    let dim = bath.n_modes + 1;
    let u = &modes.u;
    let rot = |f: &dyn Fn(f64) -> f64| {
        let mut y = u.clone();
        for (j, &nu) in modes.nu.iter().enumerate() {
            y.column_mut(j).scale_mut(f(nu));
        }
        &y * u.transpose()
    };
    let mc = rot(&|nu| (nu * t).cos());
    let ms = rot(&|nu| if nu > 0.0 { (nu * t).sin() / nu } else { t });
    let md = rot(&|nu| -nu * (nu * t).sin());
    // phase-space propagator S = [[Mc, Ms], [Md, Mc]] applied to the initial
    // block-diagonal moments
    let mut s = DMatrix::zeros(2 * dim, 2 * dim);
    s.view_mut((0, 0), (dim, dim)).copy_from(&mc);
    s.view_mut((0, dim), (dim, dim)).copy_from(&ms);
    s.view_mut((dim, 0), (dim, dim)).copy_from(&md);
    s.view_mut((dim, dim), (dim, dim)).copy_from(&mc);
    let mut c0 = DMatrix::zeros(2 * dim, 2 * dim);
    for i in 0..dim {
        c0[(i, i)] = m0.sx[i];
        c0[(dim + i, dim + i)] = m0.sp[i];
    }
    c0[(0, dim)] = m0.cross;
    c0[(dim, 0)] = m0.cross;
    Ok(&s * c0 * s.transpose())
}

/// Window-averaged record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMeasurement {
    pub window: (f64, f64),
    pub samples: usize,
    pub moments: StationaryMoments,
    /// time average of ⟨H_SB⟩ = −⟨qB⟩
    pub interaction_energy: f64,
    /// energy changes between t = 0 and the last checkpoint
    pub energy_flow: EnergyFlow,
    pub energy_drift: f64,
}

/// Trapezoidal time averages over the samples inside `window`. The window
/// must lie inside the simulated times and start after at least two
/// relaxation times 1/γ.
pub fn measure(run: &OracleRun, gamma: f64, window: (f64, f64)) -> Result<OracleMeasurement> {
    const OP: &str = "oracle::measure";
    let (start, end) = window;
    let werr = |msg: &str| QbmError::Window {
        op: OP,
        start,
        end,
        msg: msg.into(),
    };
    if !(start < end) {
        return Err(werr("start must precede end"));
    }
    let last = run
        .states
        .iter()
        .map(|s| s.time)
        .fold(f64::NEG_INFINITY, f64::max);
    let first = run
        .states
        .iter()
        .map(|s| s.time)
        .fold(f64::INFINITY, f64::min);
    if !(end <= last) || !(start >= first) {
        return Err(werr("window extends beyond the simulated times"));
    }
    if gamma > 0.0 && start * gamma < 2.0 {
        return Err(werr(
            "window starts before the transient has decayed (start < 2/gamma)",
        ));
    }
    let mut sel: Vec<&CovarianceState> = run
        .states
        .iter()
        .filter(|s| s.time >= start && s.time <= end)
        .collect();
    sel.sort_by(|a, b| a.time.total_cmp(&b.time));
    if sel.len() < 2 {
        return Err(werr("fewer than two samples inside the window"));
    }
    let span = sel[sel.len() - 1].time - sel[0].time;
    let avg = |f: &dyn Fn(&CovarianceState) -> f64| {
        sel.windows(2)
            .map(|p| 0.5 * (f(p[0]) + f(p[1])) * (p[1].time - p[0].time))
            .sum::<f64>()
            / span
    };
    let moments = StationaryMoments {
        q2: avg(&|s| s.q2),
        p2: avg(&|s| s.p2),
        pq_sym: avg(&|s| s.pq_sym),
        method: Method::DiscreteOracle,
    };
    let e0 = run.initial_energy;
    let energy_flow = match run.energy.iter().max_by(|a, b| a.time.total_cmp(&b.time)) {
        Some(e) => EnergyFlow {
            delta_e_system: e.system - e0.system,
            delta_e_interaction: e.interaction - e0.interaction,
            delta_e_bath: e.bath - e0.bath,
        },
        None => EnergyFlow {
            delta_e_system: 0.0,
            delta_e_interaction: 0.0,
            delta_e_bath: 0.0,
        },
    };
    Ok(OracleMeasurement {
        window,
        samples: sel.len(),
        moments,
        interaction_energy: -avg(&|s| s.qb),
        energy_flow,
        energy_drift: run.energy_drift(),
    })
}
