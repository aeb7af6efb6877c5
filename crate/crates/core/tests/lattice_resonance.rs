mod common;

use common::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use std::collections::BTreeMap;
use wavekin::duhamel::time_kernel;
use wavekin::initial_data::*;
use wavekin::lattice::*;

fn twisted(radius: f64, slope: [f64; 2]) -> Profile {
    Profile::Twisted { base: Box::new(Profile::Bump { radius, center: [0.1, -0.2] }), slope }
}

/// Independent level decomposition straight from the definition of the defect.
fn naive_levels(lat: &Lattice, prof: &Profile, k: [i64; 2]) -> BTreeMap<i64, (u64, C64)> {
    let sq = |v: [f64; 2]| v[0] * v[0] + v[1] * v[1];
    let kk = lat.point(k);
    let mut out: BTreeMap<i64, (u64, C64)> = BTreeMap::new();
    for n1 in lat.sites() {
        for n3 in lat.sites() {
            let n2 = [n1[0] + n3[0] - k[0], n1[1] + n3[1] - k[1]];
            let (k1, k2, k3) = (lat.point(n1), lat.point(n2), lat.point(n3));
            let defect = sq(kk) - sq(k1) + sq(k2) - sq(k3);
            let level = (defect * lat.l * lat.l / 2.0).round() as i64;
            let e = out.entry(level).or_default();
            e.0 += 1;
            e.1 += prof.eval(k1) * prof.eval(k2).conj() * prof.eval(k3);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn defect_is_twice_the_integer_dot(l in 1.0f64..6.0, radius in 0.5f64..2.0, kx in -3i64..3, ky in -3i64..3) {
        let lat = Lattice::new(l.round(), radius);
        let k = [kx, ky];
        let sq = |v: [f64; 2]| v[0] * v[0] + v[1] * v[1];
        for t in enumerate_triples(&lat, k) {
            let a = [t.k1[0] - k[0], t.k1[1] - k[1]];
            let b = [t.k3[0] - k[0], t.k3[1] - k[1]];
            prop_assert_eq!(t.dot, a[0] * b[0] + a[1] * b[1]);
            prop_assert_eq!(t.k2, [t.k1[0] + t.k3[0] - k[0], t.k1[1] + t.k3[1] - k[1]]);
            let direct = sq(lat.point(k)) - sq(lat.point(t.k1)) + sq(lat.point(t.k2)) - sq(lat.point(t.k3));
            prop_assert!((t.defect(lat.l) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn fast_resonant_path_matches_levels(l in 1u32..7, radius in 0.4f64..1.6, kx in -4i64..4, ky in -4i64..4,
                                         s0 in -2.0f64..2.0, s1 in -2.0f64..2.0) {
        let lat = Lattice::new(l as f64, radius);
        let prof = twisted(radius, [s0, s1]);
        let k = [kx, ky];
        let legs = Legs::from_profile(&lat, &prof);
        let fast = resonant_fast(k, &legs);
        let table = level_table(k, &legs);
        let naive = naive_levels(&lat, &prof, k);
        let zero = table.level(0).map(|s| (s.count, s.value)).unwrap_or((0, C64::new(0.0, 0.0)));
        let (nc, nv) = naive.get(&0).copied().unwrap_or((0, C64::new(0.0, 0.0)));
        prop_assert_eq!(fast.count, nc);
        prop_assert_eq!(zero.0, nc);
        prop_assert!((fast.value - nv).norm() <= 1e-10 * (1.0 + nv.norm()));
        prop_assert!((zero.1 - nv).norm() <= 1e-10 * (1.0 + nv.norm()));
        prop_assert_eq!(table.total_count(), enumerate_triples(&lat, k).count() as u64);
        for (lvl, (c, v)) in &naive {
            let got = table.level(*lvl).unwrap();
            prop_assert_eq!(got.count, *c);
            prop_assert!((got.value - v).norm() <= 1e-10 * (1.0 + v.norm()));
        }
    }

    #[test]
    fn conjugate_profile_conjugates_the_sum(l in 1u32..6, s0 in -2.0f64..2.0, s1 in -2.0f64..2.0, kx in -2i64..2) {
        let lat = Lattice::new(l as f64, 1.2);
        let a = resonant_sum(&lat, &twisted(1.2, [s0, s1]), [kx, 0]);
        let b = resonant_sum(&lat, &twisted(1.2, [-s0, -s1]), [kx, 0]);
        prop_assert!((a.conj() - b).norm() <= 1e-12 * (1.0 + a.norm()));
    }

    #[test]
    fn level_values_are_bounded_by_counts(l in 1u32..6, kx in -2i64..2, ky in -2i64..2) {
        let lat = Lattice::new(l as f64, 1.0);
        let prof = twisted(1.0, [0.7, -0.3]);
        let sup = prof.sup_norm();
        for s in level_set_profile(&lat, &prof, [kx, ky]) {
            prop_assert!(s.value.norm() <= sup.powi(3) * s.count as f64 * (1.0 + 1e-12));
        }
    }
}

#[test]
fn unit_lattice_example() {
    let lat = Lattice::new(1.0, 1.5);
    // eta = 1 on the window and at every K2 the window can reach
    let prof = Profile::Constant { radius: 10.0, value: 1.0 };
    assert_eq!(enumerate_triples(&lat, [0, 0]).count(), 81);
    assert_eq!(enumerate_triples(&lat, [0, 0]).filter(|t| t.dot == 0).count(), 33);
    // the brute oracle counts over the disc |n|^2 <= 2, i.e. the 3x3 block
    assert_eq!(brute_resonant_count(2, [0, 0]), 33);
    let s = resonant_sum(&lat, &prof, [0, 0]);
    assert_eq!(s, C64::new(33.0, 0.0));
}

#[test]
fn nonnegative_profile_gives_nonnegative_sum() {
    for l in [2.0, 5.0, 9.0] {
        let lat = Lattice::new(l, 1.0);
        let s = resonant_sum(&lat, &Profile::Bump { radius: 1.0, center: [0.0, 0.0] }, [1, 0]);
        assert!(s.re >= 0.0 && s.im == 0.0);
    }
}

#[test]
fn kernel_sum_consistency() {
    let lat = Lattice::new(4.0, 1.0);
    let prof = twisted(1.0, [0.5, 0.5]);
    let k = [1, -1];
    let total: C64 = naive_levels(&lat, &prof, k).values().map(|x| x.1).sum();
    let one = kernel_sum(&lat, &prof, k, |_| C64::new(1.0, 0.0), C64::new(1.0, 0.0));
    assert!((one - total).norm() <= 1e-10 * total.norm());
    let zero = kernel_sum(&lat, &prof, k, |d| time_kernel(0.0, d), C64::new(0.0, 0.0));
    assert_eq!(zero, C64::new(0.0, 0.0));
}

#[test]
fn level_range_is_bounded_by_support() {
    let (l, b) = (8.0, 1.0);
    let lat = Lattice::new(l, b);
    for k in [[0, 0], [3, 2]] {
        let kn = lat.point(k);
        let kn = (kn[0] * kn[0] + kn[1] * kn[1]).sqrt();
        let prof = Profile::Constant { radius: b, value: 1.0 };
        let profile = level_set_profile(&lat, &prof, k);
        let bound = 2.0 * (kn + b) * (kn + b);
        assert!(profile.iter().all(|s| s.xi().abs() <= bound + 1e-12));
        let total: u64 = profile.iter().map(|s| s.count).sum();
        assert_eq!(total, enumerate_triples(&lat, k).count() as u64);
    }
}

#[test]
fn resonant_count_grows_like_l2_log_l() {
    // count(2L) / count(L) against the law L^2 log L
    let prof = Profile::Constant { radius: 1.0, value: 1.0 };
    let counts: Vec<(f64, f64)> = [8.0, 16.0, 32.0]
        .iter()
        .map(|&l| {
            let lat = Lattice::new(l, 1.0);
            (l, resonant_fast([0, 0], &Legs::from_profile(&lat, &prof)).count as f64)
        })
        .collect();
    for w in counts.windows(2) {
        let ratio = w[1].1 / w[0].1;
        let law = 4.0 * w[1].0.ln() / w[0].0.ln();
        assert!((3.2..=4.8 * law / 4.0).contains(&ratio), "ratio {ratio}, law {law}");
    }
}
