//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite and
//! semi-infinite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{QbmError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration: the value and an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

impl std::ops::Add for QuadResult {
    type Output = QuadResult;
    fn add(self, o: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + o.value,
            error: self.error + o.error,
        }
    }
}

/// Tolerances: converged when error <= max(abs_tol, rel_tol * |value|).
#[derive(Debug, Clone, Copy)]
pub struct QuadTol {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl QuadTol {
    pub fn rel(rel_tol: f64) -> Self {
        QuadTol {
            abs_tol: 0.0,
            rel_tol,
            max_intervals: 4000,
        }
    }

    pub fn with_abs(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }
}

/// One 15-point Kronrod panel with the embedded 7-point Gauss estimate.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> QuadResult {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    QuadResult {
        value: rk * h,
        error: ((rk - rg) * h).abs(),
    }
}

struct Panel {
    a: f64,
    b: f64,
    r: QuadResult,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.r.error == o.r.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.r.error.total_cmp(&o.r.error)
    }
}

/// Adaptive integration over the finite interval [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: QuadTol) -> Result<QuadResult> {
    integrate_ref(&f, a, b, tol)
}

fn integrate_ref<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: QuadTol) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
        });
    }
    let first = gk15(f, a, b);
    let mut total = first;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, r: first });
    loop {
        let target = tol.abs_tol.max(tol.rel_tol * total.value.abs());
        if total.error <= target || !total.error.is_finite() {
            break;
        }
        if heap.len() >= tol.max_intervals {
            return Err(QbmError::QuadratureFailure {
                op: "quad::integrate",
                estimate: total.value,
                error: total.error,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a.min(worst.b) || m >= worst.a.max(worst.b) {
            // interval can no longer be split in floating point
            heap.push(worst);
            return Err(QbmError::QuadratureFailure {
                op: "quad::integrate",
                estimate: total.value,
                error: total.error,
            });
        }
        let l = gk15(f, worst.a, m);
        let r = gk15(f, m, worst.b);
        total.value += l.value + r.value - worst.r.value;
        total.error += l.error + r.error - worst.r.error;
        heap.push(Panel {
            a: worst.a,
            b: m,
            r: l,
        });
        heap.push(Panel {
            a: m,
            b: worst.b,
            r,
        });
    }
    if !total.value.is_finite() {
        return Err(QbmError::QuadratureFailure {
            op: "quad::integrate",
            estimate: total.value,
            error: total.error,
        });
    }
    // Re-sum to avoid drift from the incremental updates.
    let mut value = 0.0;
    let mut error = 0.0;
    for p in heap {
        value += p.r.value;
        error += p.r.error;
    }
    Ok(QuadResult { value, error })
}

/// Adaptive integration over [a, ∞) using the map x = a + s·u/(1−u), u ∈ [0, 1).
/// `scale` should be of the order of the width of the integrand's bulk.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    tol: QuadTol,
) -> Result<QuadResult> {
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let om = 1.0 - u;
        let x = a + scale * u / om;
        let v = f(x) * scale / (om * om);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate_ref(&g, 0.0, 1.0, tol)
}

/// Integrates over [points[0], ∞) split at the given increasing break points;
/// the last segment is semi-infinite. Each piece gets the full relative
/// tolerance with an absolute floor relative to the running magnitude.
pub fn integrate_breaks_to_inf<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    tail_scale: f64,
    tol: QuadTol,
) -> Result<QuadResult> {
    let mut pts: Vec<f64> = points.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
    let mut acc = QuadResult {
        value: 0.0,
        error: 0.0,
    };
    for w in pts.windows(2) {
        acc = acc + integrate_ref(&f, w[0], w[1], tol.with_abs(tol.abs_tol))?;
    }
    let last = *pts.last().expect("at least one break point");
    acc = acc + integrate_to_inf(&f, last, tail_scale, tol)?;
    Ok(acc)
}

/// Composite trapezoid weights helper used by the time-domain oracles.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}
