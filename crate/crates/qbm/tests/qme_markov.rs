use qbm::exact::{noise_kernel_sym, InitialState, StationaryMoments};
use qbm::greens::{Green, GreenMode};
use qbm::markov::{
    asymptotic_coefficients, integrate_markov, markov_coefficients, markov_residuals,
    stationary_markov,
};
use qbm::params::{derive_params, derive_params_from_bare};
use qbm::quad::{integrate, QuadTol};
use std::f64::consts::PI;

fn skewed_init() -> InitialState {
    InitialState {
        q2: 2.0,
        p2: 0.7,
        pq_sym: 0.3,
        q: 1.0,
        p: 0.5,
    }
}

#[test]
fn converges_to_fixed_point_by_thirty_damping_times() {
    for &t in &[1.0, 5.0] {
        let p = derive_params(1.0, 0.05, 20.0, t).unwrap();
        let st = stationary_markov(&p).unwrap();
        let tr = integrate_markov(&p, &skewed_init(), &[0.0, 30.0 / p.gamma]).unwrap();
        assert!((tr.q2[1] / st.q2 - 1.0).abs() < 1e-3, "T={t}");
        assert!((tr.p2[1] / st.p2 - 1.0).abs() < 1e-3, "T={t}");
        assert!(tr.pq_sym[1].abs() < 1e-3 * st.q2);
        let om = p.omega();
        assert!((st.p2 - 0.5 * om / (om / (2.0 * t)).tanh()).abs() < 1e-8);
    }
}

#[test]
fn fixed_point_is_revisited_after_boundary_layer_kick() {
    // α, β, f, h all vanish at t = 0, so a start at the asymptotic fixed point
    // is displaced by O(γ/Ω) during the first 1/Λ and then relaxes back
    let p = derive_params(1.0, 0.05, 20.0, 1.0).unwrap();
    let st = stationary_markov(&p).unwrap();
    let init = InitialState {
        q2: st.q2,
        p2: st.p2,
        pq_sym: 0.0,
        q: 0.0,
        p: 0.0,
    };
    let grid: Vec<f64> = (0..=600).map(|i| 2.5 + i as f64).collect();
    let tr = integrate_markov(&p, &init, &grid).unwrap();
    let drift = (0..grid.len())
        .map(|i| {
            (tr.q2[i] / st.q2 - 1.0)
                .abs()
                .max((tr.p2[i] / st.p2 - 1.0).abs())
        })
        .fold(0.0, f64::max);
    assert!(drift < 2.0 * p.gamma / p.omega_r, "drift {drift}");
    let n = grid.len() - 1;
    assert!((tr.q2[n] / st.q2 - 1.0).abs() < 1e-6);
    assert!(tr.mean_q.iter().all(|&q| q == 0.0));
}

#[test]
fn mean_follows_exact_envelope() {
    // after the boundary layer the Markov mean is a damped oscillator at
    // Ω² − α∞ = Ω_R² + γΩ²Λ/(Λ² + Ω²), an O(γ/Λ + γ²) offset from the pole
    let (g, l) = (0.05, 2000.0);
    let p = derive_params(1.0, g, l, 1.0).unwrap();
    let exact = Green::new(&p, GreenMode::Full).unwrap();
    let grid: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.1).collect();
    let tr = integrate_markov(&p, &skewed_init(), &grid).unwrap();
    let or2 = p.omega_r * p.omega_r;
    let mut worst: f64 = 0.0;
    for (i, &t) in grid.iter().enumerate() {
        if t < 50.0 / l {
            continue;
        }
        let (gg, gd, gdd) = exact.eval2(t);
        let (qe, pe) = (gd + 0.5 * gg, gdd + 0.5 * gd);
        let env_e = (qe * qe + pe * pe / or2).sqrt();
        let env_m = (tr.mean_q[i].powi(2) + tr.mean_p[i].powi(2) / or2).sqrt();
        worst = worst.max((env_m - env_e).abs() / env_e);
    }
    assert!(worst < 2.0 * (g / l + g * g), "envelope deviation {worst}");
}

#[test]
fn drives_match_time_domain_quadrature() {
    let p = derive_params(1.0, 0.05, 20.0, 1.0).unwrap();
    let om = p.omega();
    let tol = QuadTol::rel(1e-9);
    for &t in &[0.1, 1.0, 10.0] {
        let c = markov_coefficients(&p, t).unwrap();
        let h = integrate(
            |u| 2.0 * noise_kernel_sym(&p, u).unwrap() * (om * u).cos(),
            0.0,
            t,
            tol,
        )
        .unwrap();
        let f = integrate(
            |u| 2.0 * noise_kernel_sym(&p, u).unwrap() * (om * u).sin() / om,
            0.0,
            t,
            tol,
        )
        .unwrap();
        assert!(
            (c.h - h.value).abs() < 1e-6 * h.value.abs(),
            "t={t} h {} vs {}",
            c.h,
            h.value
        );
        assert!(
            (c.f - f.value).abs() < 1e-6 * f.value.abs(),
            "t={t} f {} vs {}",
            c.f,
            f.value
        );
        // α, β against their defining integrals of the self-energy kernel
        let k = |u: f64| p.gamma * p.lambda * p.lambda * (-p.lambda * u).exp();
        let a = integrate(|u| k(u) * (om * u).cos(), 0.0, t, tol)
            .unwrap()
            .value;
        let b = integrate(|u| k(u) * (om * u).sin() / om, 0.0, t, tol)
            .unwrap()
            .value;
        assert!((c.alpha - a).abs() < 1e-8 * a && (c.beta - b).abs() < 1e-8 * b);
    }
}

#[test]
fn momentum_drive_saturates_at_equipartition_rate() {
    // a bare Ω = 1.2 with γΛ = 5 would be unstable, so 1.2 is taken as Ω_R
    let p = derive_params(1.2, 0.005, 1e3, 2.0).unwrap();
    let om = p.omega();
    assert!(derive_params_from_bare(1.2, 0.005, 1e3, 2.0).is_err());
    let c = markov_coefficients(&p, 1.0).unwrap();
    let target = p.gamma * om / (om / 4.0).tanh();
    assert!((c.h - target).abs() < 1e-6, "{} vs {target}", c.h);
}

#[test]
fn stationary_limits() {
    // T → 0
    let p = derive_params(1.0, 1e-3, 100.0, 1e-3).unwrap();
    let st = stationary_markov(&p).unwrap();
    assert!((st.p2 - 0.5 * p.omega()).abs() < 1e-12);
    // classical: T ≫ Λ ≫ Ω
    let (g, l, t) = (1e-3, 100.0, 1e5);
    let p = derive_params(1.0, g, l, t).unwrap();
    let st = stationary_markov(&p).unwrap();
    assert!((st.p2 / t - 1.0).abs() < 1e-3, "{}", st.p2 / t - 1.0);
    // f∞ ≈ 2γT/Λ supplies the +γ/Λ; the finite-Λ α∞ puts Ω_R² + γΩ²/Λ in the
    // denominator, which cancels it and leaves T(1 − γ²)
    assert!(
        (st.q2 / t - (1.0 - g * g)).abs() < 1e-8,
        "{}",
        st.q2 / t - 1.0
    );
    let f_inf = asymptotic_coefficients(&p).unwrap().f;
    assert!((f_inf / (2.0 * g * t / l) - 1.0).abs() < 1e-3);
    // Λ ≫ T ≫ Ω: the logarithm sits in ⟨q²⟩
    let (g, l, t) = (1e-5, 1e5, 20.0);
    let p = derive_params(1.0, g, l, t).unwrap();
    let st = stationary_markov(&p).unwrap();
    // Re Ψ(iΩ/2πT) → −γ_E adds Euler's constant to the logarithm
    let euler = 0.577_215_664_901_532_9;
    let lead = t * (1.0 - g / (PI * t) * ((l / (2.0 * PI * t)).ln() + euler));
    // remaining offsets are the bare-frequency and quantum corrections to ⟨p²⟩
    let rest = st.p2 - t;
    assert!(
        (st.q2 - rest - lead).abs() < 0.01 * (t - lead),
        "{} vs {}",
        st.q2 - rest,
        lead
    );
}

#[test]
fn fixed_point_residuals_vanish() {
    for &(g, l, t) in &[(0.05, 20.0, 1.0), (1e-3, 1e4, 0.2), (5e-3, 10.0, 100.0)] {
        let p = derive_params(1.0, g, l, t).unwrap();
        let c = asymptotic_coefficients(&p).unwrap();
        let m = stationary_markov(&p).unwrap();
        for r in markov_residuals(&p, &c, &m) {
            assert!(r.abs() < 1e-8, "{r}");
        }
    }
}

#[test]
fn logarithm_sits_in_position_not_momentum() {
    // ⟨p²⟩ = (Ω/2)coth(Ω/2T) carries no ln Λ; Ω_R²⟨q²⟩ − ⟨p²⟩ ≈ f∞/2 carries −(γ/π)ln Λ
    let (g, t) = (1e-3, 1.0);
    let pts: Vec<(f64, StationaryMoments, f64)> = [1e2, 1e3, 1e4]
        .iter()
        .map(|&l| {
            let p = derive_params(1.0, g, l, t).unwrap();
            let om = p.omega();
            (
                l,
                stationary_markov(&p).unwrap(),
                0.5 * om / (om / (2.0 * t)).tanh(),
            )
        })
        .collect();
    for w in pts.windows(2) {
        let dl = (w[1].0 / w[0].0).ln();
        let mom = ((w[1].1.p2 - w[1].2) - (w[0].1.p2 - w[0].2)) / dl;
        assert!(mom.abs() < 1e-12);
        let pos = ((w[1].1.q2 - w[1].1.p2) - (w[0].1.q2 - w[0].1.p2)) / dl;
        assert!((pos / (-g / PI) - 1.0).abs() < 0.1, "slope {pos}");
    }
}
