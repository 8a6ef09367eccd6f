//! Cross-scheme comparisons: stationary differences between the exact,
//! Markov and non-Markov results, Born-validity reports and the Λ × T
//! ratio sweeps used for the stationary-ratio figures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exact::{stationary_closed, StationaryMoments};
use crate::markov::stationary_markov;
use crate::nonmarkov::stationary_nonmarkov;
use crate::params::{derive_params, ModelParams};

/// A (⟨q²⟩, ⟨p²⟩) pair of differences or predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub q2: f64,
    pub p2: f64,
}

impl MomentPair {
    fn diff(a: &StationaryMoments, b: &StationaryMoments) -> Self {
        MomentPair {
            q2: a.q2 - b.q2,
            p2: a.p2 - b.p2,
        }
    }
}

/// Stationary differences between the three schemes, each computed as
/// first-named minus second-named, plus the high-temperature leading-order
/// predictions ∓T(γΛ/Ω²) for ⟨p²⟩ and ∓(T/Ω_R²)(γΛ/Ω²) for ⟨q²⟩.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodDifferences {
    pub nm_minus_m: MomentPair,
    pub e_minus_nm: MomentPair,
    pub e_minus_m: MomentPair,
    pub predicted_nm_minus_m: MomentPair,
    pub predicted_e_minus_nm: MomentPair,
}

pub fn method_differences(p: &ModelParams) -> Result<MethodDifferences> {
    let e = stationary_closed(p)?;
    let m = stationary_markov(p)?;
    let nm = stationary_nonmarkov(p)?;
    let born = p.stability_ratio();
    let lead = MomentPair {
        q2: p.temperature / (p.omega_r * p.omega_r) * born,
        p2: p.temperature * born,
    };
    Ok(MethodDifferences {
        nm_minus_m: MomentPair::diff(&nm, &m),
        e_minus_nm: MomentPair::diff(&e, &nm),
        e_minus_m: MomentPair::diff(&e, &m),
        predicted_nm_minus_m: MomentPair {
            q2: -lead.q2,
            p2: -lead.p2,
        },
        predicted_e_minus_nm: lead,
    })
}

/// Numeric stand-ins for the "≪ 1" conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// weak coupling holds when γ/Ω is below this
    pub weak_coupling: f64,
    /// the Born condition holds when γΛ/Ω² is below this
    pub born: f64,
    /// "1 ≪ Λ/Ω" holds when Λ/Ω is above this
    pub coarse_grain_min: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            weak_coupling: 0.01,
            born: 0.1,
            coarse_grain_min: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub value: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    /// Q = Ω/γ with the bare frequency
    pub q_factor: f64,
    pub ratio_lambda_omega: f64,
    /// γ/Ω
    pub weak_coupling: Condition,
    /// γΛ/Ω², which equals (Λ/Ω)/Q
    pub born: Condition,
    /// stability requires Λ/Ω < Q; stored so reports state the budget
    pub stable: bool,
    /// 1 ≪ Λ/Ω ≪ Q, with both ends judged by the thresholds
    pub coarse_grain_ok: bool,
    pub thresholds: Thresholds,
}

pub fn validity_report(p: &ModelParams, th: &Thresholds) -> ValidityReport {
    let om = p.omega();
    let wc = p.gamma / om;
    let born = p.stability_ratio();
    let ratio = p.lambda / om;
    ValidityReport {
        q_factor: om / p.gamma,
        ratio_lambda_omega: ratio,
        weak_coupling: Condition {
            value: wc,
            ok: wc < th.weak_coupling,
        },
        born: Condition {
            value: born,
            ok: born < th.born,
        },
        stable: born < 1.0,
        coarse_grain_ok: ratio > th.coarse_grain_min && born < th.born,
        thresholds: *th,
    }
}

/// An experimental oscillator characterised only by its frequency and
/// quality factor; the bath cutoff is not known, so the output is a budget
/// on Λ/Ω rather than a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    /// angular frequency in s⁻¹
    pub omega: f64,
    pub q_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetReport {
    pub preset: Preset,
    pub weak_coupling: Condition,
    /// stability: Λ/Ω < Q
    pub stability_budget: f64,
    /// Born validity: Λ/Ω ≪ Q, read as Λ/Ω < threshold · Q
    pub born_budget: f64,
    /// the stability budget expressed as Λ < Q·Ω, in units of 10⁶ s⁻¹
    pub lambda_max_mhz: f64,
    /// the coarse-grained window 1 ≪ Λ/Ω ≪ Q is non-empty
    pub window_open: bool,
    pub inequalities: Vec<String>,
    pub thresholds: Thresholds,
}

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

pub fn presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "groex".into(),
            description: "thermally driven micromechanical resonator".into(),
            omega: TWO_PI * 914e3,
            q_factor: 215.0,
        },
        Preset {
            name: "teufel".into(),
            description: "micromechanical oscillator read out by a microwave cavity".into(),
            omega: TWO_PI * 15.9e6,
            q_factor: 1e5,
        },
        Preset {
            name: "norte".into(),
            description: "on-chip high-Q resonator".into(),
            omega: 1e6,
            q_factor: 1e8,
        },
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets()
        .into_iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
}

impl Preset {
    pub fn report(&self, th: &Thresholds) -> PresetReport {
        let q = self.q_factor;
        let wc = 1.0 / q;
        let born_budget = th.born * q;
        let lambda_max_mhz = q * self.omega / 1e6;
        PresetReport {
            preset: self.clone(),
            weak_coupling: Condition {
                value: wc,
                ok: wc < th.weak_coupling,
            },
            stability_budget: q,
            born_budget,
            lambda_max_mhz,
            window_open: th.coarse_grain_min < born_budget,
            inequalities: vec![
                format!("Lambda/Omega < {q:e}"),
                format!("Lambda/Omega << {q:e}"),
                format!("Lambda << {lambda_max_mhz:.3e} MHz"),
            ],
            thresholds: *th,
        }
    }

    /// Dimensionless parameters (Ω = 1) for this oscillator at a chosen Λ/Ω.
    pub fn params_at(&self, lambda_over_omega: f64, temperature: f64) -> Result<ModelParams> {
        crate::params::derive_params_from_bare(
            1.0,
            1.0 / self.q_factor,
            lambda_over_omega,
            temperature,
        )
    }
}

/// Default sweep axes: Λ log-spaced over [10, 10⁴] and four temperatures,
/// all in units of Ω_R.
pub fn default_lambda_grid(n: usize) -> Vec<f64> {
    logspace(10.0, 1e4, n)
}

pub const DEFAULT_TEMPERATURES: [f64; 4] = [0.2, 1.0, 5.0, 20.0];

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    // decade exponents keep powers of ten exact on the default grids
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// One grid point of a sweep. Ratios are `None` when the point was flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub temperature: f64,
    pub born: f64,
    pub q2_m_over_e: Option<f64>,
    pub p2_m_over_e: Option<f64>,
    pub q2_nm_over_e: Option<f64>,
    pub p2_nm_over_e: Option<f64>,
    pub flag: Option<String>,
}

impl SweepPoint {
    pub fn ratios(&self) -> Option<[f64; 4]> {
        Some([
            self.q2_m_over_e?,
            self.p2_m_over_e?,
            self.q2_nm_over_e?,
            self.p2_nm_over_e?,
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub gamma: f64,
    pub omega_r: f64,
    pub lambda_grid: Vec<f64>,
    pub temperature_grid: Vec<f64>,
    /// temperature-major: all Λ values at the first temperature come first
    pub points: Vec<SweepPoint>,
}

pub const SWEEP_CSV_COLUMNS: [&str; 8] = [
    "lambda",
    "temperature",
    "born_ratio",
    "Qm/Qe",
    "Pm/Pe",
    "Qnm/Qe",
    "Pnm/Pe",
    "flag",
];

impl SweepResult {
    pub fn flagged(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.flag.is_some())
    }

    /// Points at a single temperature, in Λ order.
    pub fn at_temperature(&self, t: f64) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(move |p| p.temperature == t)
    }

    /// CSV body rows (no header) with 17 significant digits; flagged points
    /// leave the ratio columns empty.
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        let num = |x: f64| format!("{x:.16e}");
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        self.points
            .iter()
            .map(|p| {
                vec![
                    num(p.lambda),
                    num(p.temperature),
                    num(p.born),
                    opt(p.q2_m_over_e),
                    opt(p.p2_m_over_e),
                    opt(p.q2_nm_over_e),
                    opt(p.p2_nm_over_e),
                    p.flag.clone().unwrap_or_default(),
                ]
            })
            .collect()
    }

    /// A file stem that encodes γ and a hash of both grids, so sweeps with
    /// different axes never overwrite each other.
    pub fn file_stem(&self) -> String {
        // FNV-1a over the raw bits keeps the name stable across builds
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in self
            .lambda_grid
            .iter()
            .chain(&self.temperature_grid)
            .chain([&self.omega_r])
        {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("sweep_g{}_{:016x}", self.gamma, h)
    }
}

fn sweep_point(omega_r: f64, gamma: f64, lambda: f64, t: f64) -> SweepPoint {
    let mut pt = SweepPoint {
        lambda,
        temperature: t,
        born: f64::NAN,
        q2_m_over_e: None,
        p2_m_over_e: None,
        q2_nm_over_e: None,
        p2_nm_over_e: None,
        flag: None,
    };
    let run = || -> Result<(f64, [f64; 4])> {
        let p = derive_params(omega_r, gamma, lambda, t)?;
        let e = stationary_closed(&p)?;
        let m = stationary_markov(&p)?;
        let nm = stationary_nonmarkov(&p)?;
        Ok((
            p.stability_ratio(),
            [m.q2 / e.q2, m.p2 / e.p2, nm.q2 / e.q2, nm.p2 / e.p2],
        ))
    };
    match run() {
        Ok((born, r)) if born < 1.0 && r.iter().all(|x| x.is_finite() && *x > 0.0) => {
            pt.born = born;
            pt.q2_m_over_e = Some(r[0]);
            pt.p2_m_over_e = Some(r[1]);
            pt.q2_nm_over_e = Some(r[2]);
            pt.p2_nm_over_e = Some(r[3]);
        }
        Ok((born, r)) => {
            pt.born = born;
            pt.flag = Some(format!("unusable ratios {r:?} at born ratio {born}"));
        }
        Err(e) => pt.flag = Some(e.to_string()),
    }
    pt
}

/// Evaluates the four stationary ratios over the Λ × T grid at fixed (γ, Ω_R).
/// Points that fail (unstable, resonant, non-finite) are kept and flagged.
pub fn ratio_sweep(
    gamma: f64,
    omega_r: f64,
    lambda_grid: &[f64],
    temperature_grid: &[f64],
) -> SweepResult {
    let grid: Vec<(f64, f64)> = temperature_grid
        .iter()
        .flat_map(|&t| lambda_grid.iter().map(move |&l| (l, t)))
        .collect();
    let points = grid
        .par_iter()
        .map(|&(l, t)| sweep_point(omega_r, gamma, l, t))
        .collect();
    SweepResult {
        gamma,
        omega_r,
        lambda_grid: lambda_grid.to_vec(),
        temperature_grid: temperature_grid.to_vec(),
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_schemes_coincide() {
        let p = derive_params(1.0, 0.0, 30.0, 2.0).unwrap();
        let d = method_differences(&p).unwrap();
        for pair in [d.nm_minus_m, d.e_minus_nm, d.e_minus_m] {
            assert!(pair.q2.abs() < 1e-13 && pair.p2.abs() < 1e-13, "{pair:?}");
        }
    }

    #[test]
    fn differences_are_consistent() {
        let p = derive_params(1.0, 0.005, 10.0, 3.0).unwrap();
        let d = method_differences(&p).unwrap();
        assert!((d.e_minus_m.p2 - d.e_minus_nm.p2 - d.nm_minus_m.p2).abs() < 1e-12);
        assert!((d.e_minus_m.q2 - d.e_minus_nm.q2 - d.nm_minus_m.q2).abs() < 1e-12);
    }

    #[test]
    fn born_flag_follows_threshold() {
        // γΛ/Ω² = 0.5 with Ω² = 1
        let p = crate::params::derive_params_from_bare(1.0, 0.01, 50.0, 1.0).unwrap();
        let r = validity_report(&p, &Thresholds::default());
        assert!((r.born.value - 0.5).abs() < 1e-15);
        assert!(!r.born.ok && r.stable && !r.coarse_grain_ok);
        assert!(r.weak_coupling.value == 0.01 && !r.weak_coupling.ok);
    }

    #[test]
    fn born_value_is_below_one_when_stable() {
        for (g, l) in [(0.5, 1e3), (1e-3, 10.0), (0.1, 0.1)] {
            let p = derive_params(1.0, g, l, 1.0).unwrap();
            let r = validity_report(&p, &Thresholds::default());
            assert!(r.born.value < 1.0 && r.stable);
            assert!((r.born.value - r.ratio_lambda_omega / r.q_factor).abs() < 1e-14);
        }
    }

    #[test]
    fn logspace_endpoints() {
        let g = default_lambda_grid(7);
        assert_eq!(g.len(), 7);
        assert!((g[0] - 10.0).abs() < 1e-12 && (g[6] - 1e4).abs() < 1e-9);
        assert!((g[1] / g[0] - g[6] / g[5]).abs() < 1e-12);
    }
}
