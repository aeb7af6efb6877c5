mod common;

use common::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::f64::consts::PI;
use wavekin::continuum::*;
use wavekin::initial_data::*;
use wavekin::quad::QuadOpts;

fn opts() -> QuadOpts {
    QuadOpts::new(1e-10, 1e-8)
}

fn bump(radius: f64) -> Profile {
    Profile::Bump { radius, center: [0.0, 0.0] }
}

proptest! {
    #[test]
    fn chart_stays_on_its_level(k in prop::array::uniform2(-2.0f64..2.0), xi in -3.0f64..3.0,
                                r in 0.01f64..3.0, theta in 0.0f64..6.3, nu in -3.0f64..3.0) {
        let (k1, k2, k3) = chart_point(k, xi, r, theta, nu);
        let a = [k1[0] - k[0], k1[1] - k[1]];
        let b = [k3[0] - k[0], k3[1] - k[1]];
        prop_assert!((2.0 * (a[0] * b[0] + a[1] * b[1]) - xi).abs() <= 1e-12 * (1.0 + xi.abs()));
        prop_assert!(((a[0] * a[0] + a[1] * a[1]).sqrt() - r).abs() <= 1e-12 * (1.0 + r));
        // momentum bookkeeping K = K1 - K2 + K3
        for j in 0..2 {
            prop_assert!((k1[j] - k2[j] + k3[j] - k[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn equilibrium_spectrum_annihilates_the_bracket(k in prop::array::uniform2(-2.0f64..2.0), r in 0.01f64..3.0,
                                                    theta in 0.0f64..6.3, nu in -3.0f64..3.0, mu in 0.1f64..3.0) {
        // n = 1/(mu + |k|^2) is the only family for which the bracket vanishes on the resonant set
        let n = |p: [f64; 2]| 1.0 / (mu + p[0] * p[0] + p[1] * p[1]);
        let (k1, k2, k3) = chart_point(k, 0.0, r, theta, nu);
        let (n0, n1, n2, n3) = (n(k), n(k1), n(k2), n(k3));
        let bracket = n1 * n2 * n3 - n0 * n2 * n3 + n0 * n1 * n3 - n0 * n1 * n2;
        prop_assert!(bracket.abs() <= 1e-12 * n0 * n1 * n2 * n3 * (1.0 / n0 + 1.0 / n1 + 1.0 / n2 + 1.0 / n3));
    }
}

#[test]
fn zero_and_distant_profiles_vanish() {
    let zero = Profile::Constant { radius: 1.0, value: 0.0 };
    assert_eq!(cr_operator(&zero, &zero, &zero, [0.0, 0.0], opts()).unwrap(), C64::new(0.0, 0.0));
    let b = bump(1.0);
    assert_eq!(cr_operator(&b, &b, &b, [3.5, 0.0], opts()).unwrap(), C64::new(0.0, 0.0));
    let far = khat_profile(&b, [0.0, 0.0], &[-2.5, 1.5], false, opts()).unwrap();
    assert!(far.values.iter().all(|v| v.norm() == 0.0));
}

/// `T_k` in the form `(1/2) int dlambda int da u(k+a) conj(v(k+a+lambda a_perp)) w(k+lambda a_perp)`
/// with a fixed Gauss-Legendre rule in polar `a` and in `lambda`.
fn lambda_form(prof: &Profile, k: [f64; 2]) -> f64 {
    let b = prof.radius();
    let kn = (k[0] * k[0] + k[1] * k[1]).sqrt();
    let rmax = b + kn;
    let thetas = composite(0.0, 2.0 * PI, 32, 8);
    let radii = composite(0.0, rmax, 16, 8);
    let mut acc = 0.0;
    for &(th, wt) in &thetas {
        let (s, c) = th.sin_cos();
        for &(r, wr) in &radii {
            let a = [r * c, r * s];
            let ap = [r * s, -r * c];
            let lam_max = (b + kn) / r;
            let mut inner = 0.0;
            for (lam, wl) in composite(-lam_max, lam_max, 32, 8) {
                let k1 = [k[0] + a[0], k[1] + a[1]];
                let k3 = [k[0] + lam * ap[0], k[1] + lam * ap[1]];
                let k2 = [k1[0] + lam * ap[0], k1[1] + lam * ap[1]];
                inner += wl * (prof.eval(k1) * prof.eval(k2).conj() * prof.eval(k3)).re;
            }
            acc += wt * wr * r * inner;
        }
    }
    0.5 * acc
}

#[test]
fn two_parametrizations_agree_at_level_zero() {
    let prof = bump(1.0);
    for k in [[0.0, 0.0], [0.2, 0.1]] {
        let chart = cr_operator(&prof, &prof, &prof, k, QuadOpts::new(1e-12, 1e-10)).unwrap();
        let oracle = lambda_form(&prof, k);
        assert!(rel_err(chart, C64::new(oracle, 0.0)) <= 1e-6, "k = {k:?}: {chart} vs {oracle}");
        let kp = khat_profile(&prof, k, &[0.0], false, QuadOpts::new(1e-12, 1e-10)).unwrap();
        assert!(rel_err(kp.values[0], chart) <= 1e-4);
    }
}

#[test]
fn real_profile_gives_real_level_sums() {
    let prof = bump(1.0);
    let grid = [-1.0, -0.3, 0.2, 0.7];
    let kp = khat_profile(&prof, [0.3, 0.0], &grid, false, opts()).unwrap();
    for v in &kp.values {
        assert!(v.im.abs() <= 1e-8 * (1.0 + v.re.abs()));
    }
    let kp2 = khat_profile(&prof, [0.3, 0.0], &grid, true, opts()).unwrap();
    for (a, b) in kp.values.iter().zip(&kp2.values) {
        assert!(rel_err(*b, *a * (2.0 * PI)) <= 1e-12);
    }
}

#[test]
fn level_profile_is_holder_continuous() {
    let prof = bump(1.0);
    let mut pts = Vec::new();
    for d in [0.08, 0.04, 0.02] {
        let grid: Vec<f64> = (-5..=5).map(|i| i as f64 * d).collect();
        let kp = khat_profile(&prof, [0.0, 0.0], &grid, false, opts()).unwrap();
        let jump = kp.values.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max);
        pts.push((d, jump));
    }
    let alpha = wavekin::duhamel::loglog_slope(&pts);
    assert!(alpha >= 0.6, "fitted exponent {alpha}, {pts:?}");
}

#[test]
fn pv_of_flat_profile() {
    let a = 1.0;
    let grid: Vec<f64> = (-300..=300).map(|i| i as f64 * 0.01).collect();
    let values: Vec<C64> = grid.iter().map(|&x| C64::new(if x.abs() <= a + 1e-12 { 2.0 } else { 0.0 }, 0.0)).collect();
    let p = KineticProfile { xi: grid, values, times_2pi: false };
    let r = pv_limit(&p, 0.0).unwrap();
    assert_eq!(r.finite_t, C64::new(0.0, 0.0));
    assert!((r.limit - C64::new(2.0 * PI, 0.0)).norm() <= 1e-9);
    // 2 Si(t a) approaches pi at rate 1/t
    let r = pv_limit(&p, 1000.0).unwrap();
    assert!((r.finite_t - C64::new(2.0 * PI, 0.0)).norm() <= 2.0 * 2.0 / 1000.0 + 1e-3);
}

#[test]
fn flat_spectrum_has_no_collisions() {
    let flat = Profile::Constant { radius: 50.0, value: 0.3 };
    let v = wk_operator_in_box(&flat, [0.1, 0.4], 2.0, QuadOpts::new(1e-12, 1e-10)).unwrap();
    assert!(v.abs() <= 1e-12);
}

#[test]
fn quasi_resonant_integral_is_odd_in_time() {
    let prof = Profile::Square { half_width: 1.0 };
    let k = [0.1, -0.2];
    let plus = quasi_resonant_integral(&prof, k, 1.5, 0, opts()).unwrap();
    let minus = quasi_resonant_integral(&prof, k, -1.5, 0, opts()).unwrap();
    assert!((plus + minus.conj()).norm() <= 1e-12 * plus.norm());
    assert_eq!(quasi_resonant_integral(&prof, k, 0.0, 0, opts()).unwrap(), C64::new(0.0, 0.0));
}
