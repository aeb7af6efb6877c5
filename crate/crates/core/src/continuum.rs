//! Continuous resonant objects: the resonant trilinear operator, the level-set
//! profile of the defect `2 a.b`, its principal-value limit, and the kinetic
//! collision operator.
//!
//! Legs follow the lattice convention: `k1 = k + a`, `k3 = k + b`,
//! `k2 = k + a + b` (conjugated), so the defect `|k|^2 - |k1|^2 + |k2|^2 - |k3|^2`
//! is `2 a.b`. On the level set `2 a.b = xi`, with `a = r e`,
//! `b = (xi / 2r) e + nu e_perp`, the co-area measure is `(1/2) dr dtheta dnu`.

use crate::error::{Error, Result};
use crate::initial_data::Profile;
use crate::quad::{integrate, integrate_panels, integrate_with_breaks, QuadOpts};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::f64::consts::PI;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Point of the chart at level `xi`: `(k1, k2, k3)`.
pub fn chart_point(k: [f64; 2], xi: f64, r: f64, theta: f64, nu: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
    let (s, c) = theta.sin_cos();
    let e = [c, s];
    let ep = [s, -c];
    let bpar = xi / (2.0 * r);
    let a = [r * e[0], r * e[1]];
    let b = [bpar * e[0] + nu * ep[0], bpar * e[1] + nu * ep[1]];
    let k1 = [k[0] + a[0], k[1] + a[1]];
    let k3 = [k[0] + b[0], k[1] + b[1]];
    let k2 = [k1[0] + b[0], k1[1] + b[1]];
    (k1, k2, k3)
}

/// `(lo, hi)` with `lo > hi` meaning empty.
fn r_interval(k: [f64; 2], e: [f64; 2], xi: f64, radii: [Option<f64>; 3]) -> Result<(f64, f64)> {
    let ke = k[0] * e[0] + k[1] * e[1];
    let kk = k[0] * k[0] + k[1] * k[1];
    let knorm = kk.sqrt();
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    if let Some(r1) = radii[0] {
        // r^2 + 2 r ke + |k|^2 - r1^2 <= 0
        let disc = ke * ke - (kk - r1 * r1);
        if disc < 0.0 {
            return Ok((1.0, 0.0));
        }
        let s = disc.sqrt();
        lo = lo.max(-ke - s);
        hi = hi.min(-ke + s);
    }
    if let Some(r2) = radii[1] {
        if xi == 0.0 {
            lo = lo.max(-ke - r2);
            hi = hi.min(-ke + r2);
        } else {
            let c = r2 - ke;
            let d = c * c - 2.0 * xi;
            if d < 0.0 || c + d.sqrt() <= 0.0 {
                return Ok((1.0, 0.0));
            }
            hi = hi.min(0.5 * (c + d.sqrt()));
        }
    }
    if xi != 0.0 {
        if let Some(r3) = radii[2] {
            lo = lo.max(xi.abs() / (2.0 * (knorm + r3)));
        }
    }
    if !hi.is_finite() {
        return Err(Error::Domain("chart integral over an unbounded radial range".into()));
    }
    Ok((lo, hi))
}

/// `(1/2) int dtheta int dr int dnu f(k1, k2, k3)` over the level set
/// `2 a.b = xi`. `radii[i]` bounds the support of leg `i+1` about the origin
/// (`None`: unbounded), used to clip the integration box.
pub fn chart_integral<F>(k: [f64; 2], xi: f64, radii: [Option<f64>; 3], f: F, opts: QuadOpts) -> Result<C64>
where
    F: Fn([f64; 2], [f64; 2], [f64; 2]) -> C64,
{
    let fail: RefCell<Option<Error>> = RefCell::new(None);
    let inner = QuadOpts { abs_tol: opts.abs_tol * 1e-2, rel_tol: opts.rel_tol * 1e-2, ..opts };
    let mid = QuadOpts { abs_tol: opts.abs_tol * 1e-1, rel_tol: opts.rel_tol * 1e-1, ..opts };
    let record = |e: Error| {
        fail.borrow_mut().get_or_insert(e);
        ZERO
    };
    let theta_fn = |theta: f64| -> C64 {
        let (s, c) = theta.sin_cos();
        let e = [c, s];
        let (lo, hi) = match r_interval(k, e, xi, radii) {
            Ok(v) => v,
            Err(err) => return record(err),
        };
        if lo >= hi {
            return ZERO;
        }
        let ke = k[0] * e[0] + k[1] * e[1];
        let kp = k[0] * s - k[1] * c;
        let r_fn = |r: f64| -> C64 {
            let bpar = xi / (2.0 * r);
            let mut half = f64::INFINITY;
            if let Some(r3) = radii[2] {
                let d = r3 * r3 - (ke + bpar).powi(2);
                if d <= 0.0 {
                    return ZERO;
                }
                half = half.min(d.sqrt());
            }
            if let Some(r2) = radii[1] {
                let d = r2 * r2 - (ke + r + bpar).powi(2);
                if d <= 0.0 {
                    return ZERO;
                }
                half = half.min(d.sqrt());
            }
            if !half.is_finite() {
                return record(Error::Domain("chart integral over an unbounded transverse range".into()));
            }
            let nu_fn = |nu: f64| {
                let (k1, k2, k3) = chart_point(k, xi, r, theta, nu);
                f(k1, k2, k3)
            };
            match integrate(nu_fn, -kp - half, -kp + half, inner) {
                Ok(q) => q.value,
                Err(err) => record(err),
            }
        };
        match integrate(r_fn, lo, hi, mid) {
            Ok(q) => q.value,
            Err(err) => record(err),
        }
    };
    let out = integrate_panels(theta_fn, 0.0, 2.0 * PI, 8, opts)?;
    if let Some(e) = fail.into_inner() {
        return Err(e);
    }
    Ok(out.value * 0.5)
}

/// Continuous resonant operator `T_k(u, v, w)`: the `xi = 0` chart integral
/// of `u(k1) conj(v(k2)) w(k3)`.
pub fn cr_operator(u: &Profile, v: &Profile, w: &Profile, k: [f64; 2], opts: QuadOpts) -> Result<C64> {
    let radii = [Some(u.radius()), Some(v.radius()), Some(w.radius())];
    chart_integral(k, 0.0, radii, |k1, k2, k3| u.eval(k1) * v.eval(k2).conj() * w.eval(k3), opts)
}

/// Samples of the level-set profile of `eta(k1) conj(eta(k2)) eta(k3)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticProfile {
    pub xi: Vec<f64>,
    pub values: Vec<C64>,
    /// Whether values carry the extra `2 pi` of the co-area identity.
    pub times_2pi: bool,
}

impl KineticProfile {
    /// Profile of the reversed level `xi -> -xi`.
    pub fn reflect(&self) -> Self {
        Self {
            xi: self.xi.iter().rev().map(|x| -x).collect(),
            values: self.values.iter().rev().copied().collect(),
            times_2pi: self.times_2pi,
        }
    }

    /// `int e^{i t xi} Rhat(xi) d xi` with trapezoid weights on the grid.
    pub fn time_signal(&self, t: f64) -> C64 {
        let n = self.xi.len();
        let mut acc = ZERO;
        for j in 0..n.saturating_sub(1) {
            let (x0, x1) = (self.xi[j], self.xi[j + 1]);
            let d = x1 - x0;
            let f0 = self.values[j];
            let f1 = self.values[j + 1];
            // exact for piecewise-linear Rhat
            let ph = C64::from_polar(1.0, t * x0);
            let y = t * d;
            acc += ph * d * (f0 * moment_exp(0, y) + (f1 - f0) * moment_exp(1, y));
        }
        acc
    }
}

/// Level-set profile `Rhat_K(xi)` on the grid.
pub fn khat_profile(prof: &Profile, k: [f64; 2], xi_grid: &[f64], times_2pi: bool, opts: QuadOpts) -> Result<KineticProfile> {
    let b = prof.radius();
    let kn = k[0].hypot(k[1]);
    // xi = |a+b|^2 - |a|^2 - |b|^2 with |a|, |b|, |a+b| <= |k| + B
    let reach = (kn + b) * (kn + b);
    let radii = [Some(b), Some(b), Some(b)];
    let values: Vec<Result<C64>> = xi_grid
        .par_iter()
        .map(|&xi| {
            if xi > reach || xi < -2.0 * reach {
                return Ok(ZERO);
            }
            let v = chart_integral(k, xi, radii, |k1, k2, k3| prof.eval(k1) * prof.eval(k2).conj() * prof.eval(k3), opts)?;
            Ok(if times_2pi { v * (2.0 * PI) } else { v })
        })
        .collect();
    Ok(KineticProfile { xi: xi_grid.to_vec(), values: values.into_iter().collect::<Result<_>>()?, times_2pi })
}

/// `int_0^1 s^n e^{i y s} ds`.
pub fn moment_exp(n: u32, y: f64) -> C64 {
    if y.abs() <= 1.0 {
        let mut term = C64::new(1.0, 0.0);
        let mut acc = C64::new(1.0 / (n as f64 + 1.0), 0.0);
        for j in 1..40 {
            term = term * C64::new(0.0, y) / j as f64;
            let add = term / (n as f64 + j as f64 + 1.0);
            acc += add;
            if add.norm() < 1e-18 {
                break;
            }
        }
        return acc;
    }
    let e = C64::from_polar(1.0, y);
    let iy = C64::new(0.0, y);
    let mut m = (e - 1.0) / iy;
    for j in 1..=n {
        m = (e - m * j as f64) / iy;
    }
    m
}

/// Sine integral `Si(x)`.
pub fn sine_integral(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let sinc = |u: f64| if u == 0.0 { 1.0 } else { u.sin() / u };
    let panels = ((x.abs() / PI).ceil() as usize).max(1);
    let r = integrate_panels(|u| C64::new(sinc(u), 0.0), 0.0, x.abs(), panels, QuadOpts::new(1e-15, 1e-14))
        .expect("smooth integrand");
    r.value.re * x.signum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PvResult {
    /// `int (1 - e^{-it xi}) / (i xi) Rhat(xi) d xi`.
    pub finite_t: C64,
    /// `pi Rhat(0) + int (Rhat(xi) - Rhat(0)) / (i xi) d xi`.
    pub limit: C64,
}

/// Finite-time quasi-resonant integral and its large-time limit. The grid must
/// be uniform, symmetric, contain 0, and the profile must vanish at its ends.
/// At 0, `q` takes the central difference, so a symmetric kink cancels.
/// `Rhat = Rhat(0) + xi q(xi)` with `q` piecewise linear; the `q` part is
/// integrated exactly against `e^{-it xi}`.
pub fn pv_limit(p: &KineticProfile, t: f64) -> Result<PvResult> {
    let n = p.xi.len();
    if n < 5 || n % 2 == 0 {
        return Err(Error::Domain("pv grid needs an odd number (>= 5) of nodes".into()));
    }
    let mid = n / 2;
    let d = p.xi[1] - p.xi[0];
    let a = p.xi[n - 1];
    if p.xi[mid].abs() > 1e-12 * d || (p.xi[0] + a).abs() > 1e-9 * d {
        return Err(Error::Domain("pv grid must be symmetric about 0".into()));
    }
    let r0 = p.values[mid];
    // the profile may have a |xi| kink at 0; only require that one cell
    // resolves it
    let step = (p.values[mid + 1] - r0).norm().max((p.values[mid - 1] - r0).norm());
    let scale = p.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if step > 0.1 * scale {
        return Err(Error::Tolerance(format!("grid too coarse near 0: first difference {step:.3e} of scale {scale:.3e}")));
    }
    let q: Vec<C64> = (0..n)
        .map(|j| {
            if j == mid {
                (p.values[mid + 1] - p.values[mid - 1]) / (2.0 * d)
            } else {
                (p.values[j] - r0) / p.xi[j]
            }
        })
        .collect();
    let mut int_q = ZERO;
    let mut osc = ZERO;
    for j in 0..n - 1 {
        int_q += (q[j] + q[j + 1]) * (0.5 * d);
        let ph = C64::from_polar(1.0, -t * p.xi[j]);
        let y = -t * d;
        osc += ph * d * (q[j] * moment_exp(0, y) + (q[j + 1] - q[j]) * moment_exp(1, y));
    }
    let i = C64::i();
    let finite_t = r0 * (2.0 * sine_integral(t * a)) - i * int_q + i * osc;
    let limit = r0 * PI - i * int_q;
    Ok(PvResult { finite_t, limit })
}

/// `int int u(k+a) conj(u(k+a+b)) u(k+b) int_0^t e^{2 i s a.b} ds da db`, the
/// continuum counterpart of the leading first iterate. The square indicator
/// factorizes per coordinate and its `b` integral is done in closed form;
/// other profiles go through the level-set profile on `levels` nodes.
pub fn quasi_resonant_integral(prof: &Profile, k: [f64; 2], t: f64, levels: usize, opts: QuadOpts) -> Result<C64> {
    if let Profile::Square { half_width } = prof {
        let w = *half_width;
        let factor = |c: f64, s: f64| -> Result<C64> {
            let f = |a: f64| {
                let (lo, hi) = if a >= 0.0 { (-w - c, w - c - a) } else { (-w - c - a, w - c) };
                let len = hi - lo;
                if len <= 0.0 {
                    return ZERO;
                }
                C64::from_polar(len, 2.0 * s * a * lo) * moment_exp(0, 2.0 * s * a * len)
            };
            let (lo, hi) = (-w - c, w - c);
            Ok(integrate_with_breaks(f, &[lo, 0.0f64.clamp(lo, hi), hi], opts)?.value)
        };
        let err = RefCell::new(None);
        let g = |s: f64| match (factor(k[0], s), factor(k[1], s)) {
            (Ok(x), Ok(y)) => x * y,
            (Err(e), _) | (_, Err(e)) => {
                err.borrow_mut().get_or_insert(e);
                ZERO
            }
        };
        let span = 4.0 * w * w * t.abs();
        let panels = ((span / PI).ceil() as usize).max(1);
        let v = integrate_panels(g, 0.0, t.abs(), panels, opts)?.value;
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        return Ok(if t < 0.0 { -v.conj() } else { v });
    }
    let reach = {
        let kn = k[0].hypot(k[1]);
        let b = prof.radius();
        2.0 * (kn + b) * (kn + b)
    };
    let n = levels | 1;
    let grid: Vec<f64> = (0..n).map(|j| -reach + 2.0 * reach * j as f64 / (n - 1) as f64).collect();
    let p = khat_profile(prof, k, &grid, false, opts)?;
    Ok(pv_limit(&p.reflect(), t)?.finite_t)
}

/// Kinetic collision operator at `k`: the `xi = 0` chart integral of
/// `n1 n2 n3 - n n2 n3 + n n1 n3 - n n1 n2` with `n = |eta|^2`, each product
/// integrated on its own support.
pub fn wk_operator(prof: &Profile, k: [f64; 2], opts: QuadOpts) -> Result<f64> {
    let b = Some(prof.radius());
    let n = |x: [f64; 2]| C64::new(prof.spectrum(x), 0.0);
    let nk = prof.spectrum(k);
    let t1 = chart_integral(k, 0.0, [b, b, b], |k1, k2, k3| n(k1) * n(k2) * n(k3), opts)?;
    if nk == 0.0 {
        return Ok(t1.re);
    }
    let t2 = chart_integral(k, 0.0, [None, b, b], |_, k2, k3| n(k2) * n(k3), opts)?;
    let t3 = chart_integral(k, 0.0, [b, None, b], |k1, _, k3| n(k1) * n(k3), opts)?;
    let t4 = chart_integral(k, 0.0, [b, b, None], |k1, k2, _| n(k1) * n(k2), opts)?;
    Ok((t1 - (t2 - t3 + t4) * nk).re)
}

/// Pointwise collision bracket integrated over the resonant chart restricted
/// to legs inside the disc of radius `box_radius`.
pub fn wk_operator_in_box(prof: &Profile, k: [f64; 2], box_radius: f64, opts: QuadOpts) -> Result<f64> {
    let r = Some(box_radius);
    let nk = prof.spectrum(k);
    let v = chart_integral(
        k,
        0.0,
        [r, r, r],
        |k1, k2, k3| {
            let (n1, n2, n3) = (prof.spectrum(k1), prof.spectrum(k2), prof.spectrum(k3));
            C64::new(n1 * n2 * n3 - nk * n2 * n3 + nk * n1 * n3 - nk * n1 * n2, 0.0)
        },
        opts,
    )?;
    Ok(v.re)
}
