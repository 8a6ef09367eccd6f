//! Adaptive Dormand-Prince 5(4) integrator with a caller-supplied step cap.

use crate::error::{QbmError, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeTol {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OdeTol {
    fn default() -> Self {
        OdeTol {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// error coefficients b − b*
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates y' = f(t, y) and returns the state at every point of `grid`
/// (which must start at the initial time and increase strictly).
/// `max_step(t)` caps the step size.
pub fn integrate<F, M>(
    f: F,
    y0: &[f64],
    grid: &[f64],
    max_step: M,
    tol: OdeTol,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64]),
    M: Fn(f64) -> f64,
{
    let n = y0.len();
    let mut out = Vec::with_capacity(grid.len());
    if grid.is_empty() {
        return Ok(out);
    }
    let mut t = grid[0];
    let mut y = y0.to_vec();
    out.push(y.clone());
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    f(t, &y, &mut k[0]);
    let mut h = max_step(t).min(1e-3);
    for &target in &grid[1..] {
        if target < t {
            return Err(QbmError::domain(
                "ode::integrate",
                "time grid must be increasing",
            ));
        }
        let mut steps = 0usize;
        while t < target {
            steps += 1;
            if steps > 50_000_000 {
                return Err(QbmError::StepFailure {
                    op: "ode::integrate",
                    t,
                });
            }
            h = h.min(max_step(t));
            let last = t + h >= target;
            if last {
                h = target - t;
            }
            let stage = |k: &Vec<Vec<f64>>, coef: &[f64], tmp: &mut [f64]| {
                for i in 0..n {
                    let mut s = 0.0;
                    for (j, c) in coef.iter().enumerate() {
                        s += c * k[j][i];
                    }
                    tmp[i] = y[i] + h * s;
                }
            };
            stage(&k, &[A21], &mut tmp);
            f(t + C2 * h, &tmp, &mut k[1]);
            stage(&k, &[A31, A32], &mut tmp);
            f(t + C3 * h, &tmp, &mut k[2]);
            stage(&k, &[A41, A42, A43], &mut tmp);
            f(t + C4 * h, &tmp, &mut k[3]);
            stage(&k, &[A51, A52, A53, A54], &mut tmp);
            f(t + C5 * h, &tmp, &mut k[4]);
            stage(&k, &[A61, A62, A63, A64, A65], &mut tmp);
            f(t + h, &tmp, &mut k[5]);
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (B1 * k[0][i]
                        + B3 * k[2][i]
                        + B4 * k[3][i]
                        + B5 * k[4][i]
                        + B6 * k[5][i]);
            }
            f(t + h, &ynew, &mut k[6]);
            let mut err = 0.0f64;
            for i in 0..n {
                let e = h
                    * (E1 * k[0][i]
                        + E3 * k[2][i]
                        + E4 * k[3][i]
                        + E5 * k[4][i]
                        + E6 * k[5][i]
                        + E7 * k[6][i]);
                let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                return Err(QbmError::StepFailure {
                    op: "ode::integrate",
                    t,
                });
            }
            if err <= 1.0 {
                t = if last { target } else { t + h };
                std::mem::swap(&mut y, &mut ynew);
                let (first, rest) = k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last {
                    h *= fac;
                } else {
                    // restore a sensible step after a shortened final step
                    h = (h * fac).max(h);
                }
            } else {
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(QbmError::StepFailure {
                        op: "ode::integrate",
                        t,
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_is_accurate() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.5).collect();
        let sol = integrate(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            &[1.0, 0.0],
            &grid,
            |_| 0.2,
            OdeTol::default(),
        )
        .unwrap();
        for (t, y) in grid.iter().zip(&sol) {
            assert!((y[0] - t.cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn decaying_exponential_with_time_dependence() {
        let grid = [0.0, 1.0, 2.0];
        let sol = integrate(
            |t, y, d| d[0] = -2.0 * t * y[0],
            &[1.0],
            &grid,
            |_| 1.0,
            OdeTol::default(),
        )
        .unwrap();
        assert!((sol[2][0] - (-4.0f64).exp()).abs() < 1e-10);
    }
}
