//! Oracles shared by the integration tests. Deliberately independent of the
//! library's quadrature: fixed composite Gauss-Legendre rules built here.
#![allow(dead_code)]

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavekin::gaussian::ComplexGaussian;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite rule on [a, b]: `panels` copies of an `order`-point rule.
pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for &(x, w) in &gl {
            out.push((c + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

/// Tensor-product quadrature over a rectangle.
pub fn quad2<F: Fn([f64; 2]) -> C64>(f: F, x: [f64; 2], y: [f64; 2], panels: usize, order: usize) -> C64 {
    let nx = composite(x[0], x[1], panels, order);
    let ny = composite(y[0], y[1], panels, order);
    let mut acc = C64::new(0.0, 0.0);
    for &(a, wa) in &nx {
        let mut row = C64::new(0.0, 0.0);
        for &(b, wb) in &ny {
            row += f([a, b]) * wb;
        }
        acc += row * wa;
    }
    acc
}

pub fn quad1<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> C64 {
    composite(a, b, panels, order).into_iter().map(|(x, w)| f(x) * w).sum()
}

/// Box `[c - R, c + R]` per axis outside which the Gaussian is below e^-50
/// of its peak.
pub fn gaussian_box(g: &ComplexGaussian) -> ([f64; 2], [f64; 2]) {
    let a = g.z.re;
    let c = [g.xi[0].re / (2.0 * a), g.xi[1].re / (2.0 * a)];
    let r = (50.0 / a).sqrt();
    ([c[0] - r, c[0] + r], [c[1] - r, c[1] + r])
}

/// A random Gaussian with Re z in [0.5, 1.5], |Im z| <= 0.5 and moderate
/// linear coefficients.
pub fn random_gaussian(rng: &mut ChaCha8Rng) -> ComplexGaussian {
    let z = C64::new(rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5));
    let xi = [
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
    ];
    let c = C64::from_polar(rng.gen_range(0.2..2.0), rng.gen_range(-3.0..3.0));
    ComplexGaussian::new(c, z, xi)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm()
}

/// Brute-force resonant count around `k` with `K1, K3` in the disc of
/// integer-squared radius `r2` (no lookup tables).
pub fn brute_resonant_count(r2: i64, k: [i64; 2]) -> u64 {
    let r = (r2 as f64).sqrt() as i64 + 1;
    let mut n = 0;
    for a0 in -r..=r {
        for a1 in -r..=r {
            if a0 * a0 + a1 * a1 > r2 {
                continue;
            }
            for b0 in -r..=r {
                for b1 in -r..=r {
                    if b0 * b0 + b1 * b1 > r2 {
                        continue;
                    }
                    let k1 = [a0, a1];
                    let k3 = [b0, b1];
                    let k2 = [k1[0] + k3[0] - k[0], k1[1] + k3[1] - k[1]];
                    let sq = |v: [i64; 2]| v[0] * v[0] + v[1] * v[1];
                    if sq(k) - sq(k1) + sq(k2) - sq(k3) == 0 {
                        n += 1;
                    }
                }
            }
        }
    }
    n
}
