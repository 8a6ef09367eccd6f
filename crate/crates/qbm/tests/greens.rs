use num_complex::Complex64;
use qbm::greens::{green_time, large_lambda_remainder_bound, poles_full, Green, GreenMode};
use qbm::params::{derive_params, self_energy_time, ModelParams};
use qbm::quad::{integrate, QuadTol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Log-uniform draws of stable, underdamped parameters with Λ/Ω_R ≥ `min_ratio`.
fn draws(n: usize, min_ratio: f64, seed: u64) -> Vec<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log_uniform = |lo: f64, hi: f64| (rng.gen_range(lo.ln()..hi.ln())).exp();
    (0..n)
        .map(|_| {
            let or = log_uniform(0.1, 10.0);
            let g = or * log_uniform(1e-4, 0.5);
            let l = or * log_uniform(min_ratio, 1e4);
            derive_params(or, g, l, 1.0).unwrap()
        })
        .collect()
}

#[test]
fn pole_sum_rules_hold_for_random_draws() {
    let mut worst = [0.0f64; 3];
    for p in draws(1000, 0.5, 7) {
        let r = poles_full(&p).unwrap();
        let (s1, s2, s3) = (r.s1, r.s2, r.s3);
        let or2 = p.omega_r * p.omega_r;
        let e1 = (s1 + s2 + s3 + p.lambda).norm() / p.lambda;
        let c2 = or2 + p.gamma * p.lambda;
        let e2 = (s1 * s2 + s3 * (s1 + s2) - c2).norm() / c2;
        let c3 = p.lambda * or2;
        let e3 = (s1 * s2 * s3 + c3).norm() / c3;
        for (w, e) in worst.iter_mut().zip([e1, e2, e3]) {
            *w = w.max(e);
        }
        for s in r.roots() {
            assert!(s.re < 0.0, "{p:?}");
        }
        assert!(s1.im > 0.0 && s2 == s1.conj() && s3.im == 0.0);
    }
    assert!(
        worst.iter().all(|w| *w < 1e-12),
        "worst sum-rule residuals {worst:?}"
    );
}

#[test]
fn full_mode_within_large_lambda_remainder() {
    for p in draws(1000, 20.0, 11) {
        let full = Green::new(&p, GreenMode::Full).unwrap();
        let large = Green::new(&p, GreenMode::LargeLambda).unwrap();
        let horizon = 10.0 / p.gamma;
        for k in 0..=40 {
            let t = horizon * k as f64 / 40.0;
            let d = (full.g(t) - large.g(t)).abs();
            let bound = large_lambda_remainder_bound(&p, t);
            assert!(d <= bound, "{p:?} t={t}: {d} > {bound}");
        }
    }
}

#[test]
fn full_mode_solves_equation_of_motion() {
    // G̈ + Ω²G + ∫₀ᵗ Σ(t − t′) G(t′) dt′ = 0
    let p = derive_params(1.0, 0.05, 20.0, 1.0).unwrap();
    let spec = p.drude();
    let g = Green::new(&p, GreenMode::Full).unwrap();
    let horizon = 10.0 / p.gamma;
    let mut max_acc = 0.0f64;
    let mut worst = 0.0f64;
    for k in 1..=50 {
        let t = horizon * k as f64 / 50.0;
        let (gv, _, gdd) = g.eval2(t);
        // integrate the memory term piecewise so each panel spans a few periods
        let panels = (t / 2.0).ceil() as usize;
        let mut mem = 0.0;
        for j in 0..panels {
            let (a, b) = (
                t * j as f64 / panels as f64,
                t * (j + 1) as f64 / panels as f64,
            );
            mem += integrate(
                |s| self_energy_time(&spec, t - s).unwrap() * g.g(s),
                a,
                b,
                QuadTol::rel(1e-12).with_abs(1e-14),
            )
            .unwrap()
            .value;
        }
        max_acc = max_acc.max(gdd.abs());
        worst = worst.max((gdd + p.omega_sq * gv + mem).abs());
    }
    assert!(
        worst < 1e-6 * max_acc,
        "residual {worst} vs max |G''| {max_acc}"
    );
}

#[test]
fn damping_envelope() {
    // the full slow pole decays at (γ/2)Λ²/(Λ² + Ω_R²), a little slower than
    // γ/2, so the full-mode envelope uses that rate; the large-Λ form obeys
    // the e^{−γt/2}/W envelope exactly
    for p in draws(200, 0.5, 3) {
        let full = Green::new(&p, GreenMode::Full).unwrap();
        let large = Green::new(&p, GreenMode::LargeLambda).unwrap();
        let (l2, or2) = (p.lambda * p.lambda, p.omega_r * p.omega_r);
        let rate = 0.5 * p.gamma * l2 / (l2 + or2);
        for k in 0..=60 {
            let t = 12.0 / p.gamma * k as f64 / 60.0;
            let fast = p.gamma / l2 * (-(p.lambda - p.gamma) * t).exp();
            assert!(large.g(t).abs() <= (-0.5 * p.gamma * t).exp() / p.w * (1.0 + 1e-12));
            // the slow residue differs from 1/2iW by O(γ/Λ) and O(Ω_R²/Λ²)
            let margin = 1.0 + 4.0 * p.gamma / p.lambda + 2.0 * or2 / l2;
            let env = (-rate * t).exp() / p.w * margin + fast;
            assert!(full.g(t).abs() <= env, "{p:?} t={t}");
        }
    }
}

#[test]
fn laplace_transform_of_full_mode() {
    let p = derive_params(1.0, 0.05, 20.0, 1.0).unwrap();
    let g = Green::new(&p, GreenMode::Full).unwrap();
    for s in [
        Complex64::new(0.1, 0.0),
        Complex64::new(1.0, 1.0),
        Complex64::new(3.0, 0.0),
    ] {
        let tmax = 45.0 / (s.re + 0.5 * p.gamma);
        let panels = (tmax / 2.0).ceil() as usize;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..panels {
            let (a, b) = (
                tmax * j as f64 / panels as f64,
                tmax * (j + 1) as f64 / panels as f64,
            );
            let tol = QuadTol::rel(1e-12).with_abs(1e-15);
            let re = integrate(|t| ((-s * t).exp() * g.g(t)).re, a, b, tol)
                .unwrap()
                .value;
            let im = integrate(|t| ((-s * t).exp() * g.g(t)).im, a, b, tol)
                .unwrap()
                .value;
            acc += Complex64::new(re, im);
        }
        let l = p.lambda;
        let exact = (s + l) / ((s * s + p.omega_sq) * (s + l) - p.gamma * l * l);
        assert!(
            (acc - exact).norm() < 1e-7 * exact.norm().max(1.0),
            "s={s}: {acc} vs {exact}"
        );
    }
}

#[test]
fn negative_time_is_rejected() {
    let p = derive_params(1.0, 0.05, 20.0, 1.0).unwrap();
    assert!(green_time(&p, -1.0, GreenMode::Full).is_err());
}
