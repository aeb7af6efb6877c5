//! First and second Duhamel iterates of the coarse-grained observable, both
//! exactly (time quadrature of Gaussian-product kernels) and in their
//! leading-order lattice form, plus the trilinear decay signal.
//!
//! Expansion of the interaction-picture solution with data `eps * phi`:
//! `<v> = eps <phi> - i eps^3 <V1> - eps^5 <V2> + O(eps^7)` where
//! `V1(t) = int_0^t e^{-is Lap} N(phi_s) ds`, `phi_s = e^{is Lap} phi`,
//! `N(u) = |u|^2 u`, and
//! `V2(t) = int_0^t e^{-is Lap} [2 |phi_s|^2 W_s - phi_s^2 conj(W_s)] ds`
//! with `W_s = e^{is Lap} V1(s)`.

use crate::continuum::moment_exp;
use crate::error::{Error, Result};
use crate::gaussian::{ComplexGaussian, WavePacketSum};
use crate::initial_data::{Lattice, Profile};
use crate::lattice::{level_table, LegField, Legs};
use crate::quad::{integrate, integrate_2d, integrate_panels, QuadOpts};
use crate::sum::CNeumaier;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Power of `2 pi` multiplying the leading-order `V1` sum.
pub const V1_LEADING_2PI_POWER: i32 = -4;
/// Power of `2 pi` multiplying the leading-order `V2` sum.
pub const V2_LEADING_2PI_POWER: i32 = -8;
/// Power of `2 pi` in the coarse-graining prefactor `(2pi)^3 sigma^2`.
pub const COARSE_2PI_POWER: i32 = 3;

pub fn two_pi_pow(n: i32) -> f64 {
    (2.0 * PI).powi(n)
}

/// `int_0^t e^{i s d} ds`, equal to `t` at `d = 0`.
pub fn time_kernel(t: f64, d: f64) -> C64 {
    moment_exp(0, t * d) * t
}

/// `|sin(t d / 2) / (d / 2)|^2`, equal to `t^2` at `d = 0`.
pub fn sinc2_kernel(t: f64, d: f64) -> f64 {
    let x = 0.5 * t * d;
    if x.abs() < 1e-8 {
        t * t * (1.0 - x * x / 3.0)
    } else {
        (t * x.sin() / x).powi(2)
    }
}

/// `int_0^1 u e^{i u alpha} int_0^1 e^{-i u v beta} dv du` by series in `beta`.
fn double_series(alpha: f64, beta: f64) -> C64 {
    let mut acc = ZERO;
    let mut c = C64::new(1.0, 0.0);
    for m in 0..20u32 {
        if m > 0 {
            c = c * C64::new(0.0, -beta) / (m as f64 + 1.0);
        } else {
            c = C64::new(1.0, 0.0);
        }
        let add = c * moment_exp(m + 1, alpha);
        acc += add;
        if add.norm() < 1e-18 {
            break;
        }
    }
    acc
}

/// `int_0^t int_0^s e^{i s a} e^{-i s' b} ds' ds`, the closed form
/// `(1/b) ((e^{it(a-b)} - 1)/(a-b) - (e^{ita} - 1)/a)` with its removable
/// singularities filled in (`t^2 / 2` at `a = b = 0`).
pub fn double_time(a: f64, b: f64, t: f64) -> C64 {
    let (al, be) = (a * t, b * t);
    let j = if be.abs() < 1e-2 {
        double_series(al, be)
    } else {
        let i = C64::i();
        let f = |x: f64| i * moment_exp(0, x);
        (f(al - be) - f(al)) / be
    };
    j * (t * t)
}

/// Amplitudes `zeta_n` on integer sites, plus the scales of the problem.
#[derive(Clone, Debug)]
pub struct Setup {
    pub lat: Lattice,
    pub h: f64,
    pub sigma: f64,
    pub amps: Vec<([i64; 2], C64)>,
    /// Allow times beyond `1 / (sigma^2 L^2)`.
    pub guard_override: bool,
    pub opts: QuadOpts,
    pub budget: usize,
}

impl Setup {
    pub fn new(lat: Lattice, prof: &Profile, h: f64, sigma: f64, phases: Option<&[f64]>) -> Self {
        let sites = lat.sites();
        let amps = sites
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let e = prof.eval(lat.point(n));
                (n, phases.map_or(e, |p| e * C64::from_polar(1.0, p[i])))
            })
            .filter(|(_, z)| z.norm() > 0.0)
            .collect();
        Self {
            lat,
            h,
            sigma,
            amps,
            guard_override: false,
            opts: QuadOpts { abs_tol: 1e-15, rel_tol: 1e-10, max_intervals: 4000 },
            budget: 50_000_000,
        }
    }

    pub fn with_amps(&self, amps: Vec<([i64; 2], C64)>) -> Self {
        Self { amps, ..self.clone() }
    }

    pub fn point(&self, n: [i64; 2]) -> [f64; 2] {
        self.lat.point(n)
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let lim = 1.0 / (self.sigma * self.sigma * self.lat.l * self.lat.l);
        if t.abs() > lim && !self.guard_override {
            return Err(Error::Guard(format!("t <= 1/(sigma^2 L^2) violated: |t| = {t} > {lim:.6e}")));
        }
        Ok(())
    }

    fn sq(&self, n: [i64; 2]) -> f64 {
        let k = self.point(n);
        k[0] * k[0] + k[1] * k[1]
    }

    fn lookup(&self) -> HashMap<[i64; 2], usize> {
        self.amps.iter().enumerate().map(|(i, (n, _))| (*n, i)).collect()
    }

    fn legs(&self) -> Legs {
        let m = self.amps.iter().map(|(n, _)| n[0].abs().max(n[1].abs())).max().unwrap_or(0);
        let map = self.lookup();
        let l = self.lat.l;
        let amps = &self.amps;
        let f = LegField::from_fn(l, m, |k| {
            let n = [(k[0] * l).round() as i64, (k[1] * l).round() as i64];
            map.get(&n).map_or(ZERO, |&i| amps[i].1)
        });
        let f2 = LegField::from_fn(l, 3 * m + 1, |k| {
            let n = [(k[0] * l).round() as i64, (k[1] * l).round() as i64];
            map.get(&n).map_or(ZERO, |&i| amps[i].1)
        });
        Legs { f1: f.clone(), f2, f3: f }
    }
}

/// Leading-order first iterate
/// `(2pi)^{-4} sum zeta_1 conj(zeta_2) zeta_3 int_0^t e^{i s d} ds`.
pub fn v1_leading(setup: &Setup, k: [i64; 2], t: f64) -> Result<C64> {
    setup.check_time(t)?;
    let tab = level_table(k, &setup.legs());
    Ok(tab.apply_kernel(|d| time_kernel(t, d), C64::new(t, 0.0)) * two_pi_pow(V1_LEADING_2PI_POWER))
}

/// `(2pi)^3 sigma^2 int conj(G_{K,sigma}(s)) G_1(s) conj(G_2(s)) G_3(s) dx`
/// for unit amplitudes, with `G_{K,eps}(s) = e^{is Lap} g_{K,eps}`.
pub fn triple_kernel(sites: [[f64; 2]; 4], h: f64, sigma: f64, s: f64) -> Result<C64> {
    let w = ComplexGaussian::building_block(sites[0], sigma).propagate(s).conj();
    let g1 = ComplexGaussian::building_block(sites[1], h).propagate(s);
    let g2 = ComplexGaussian::building_block(sites[2], h).propagate(s).conj();
    let g3 = ComplexGaussian::building_block(sites[3], h).propagate(s);
    let v = w.mul(&g1).mul(&g2).mul(&g3).integrate_plane()?;
    Ok(v * (two_pi_pow(COARSE_2PI_POWER) * sigma * sigma))
}

/// Exact first iterate: all `(K1, K2, K3)` (no momentum restriction), time
/// integral of the summed closed-form kernel.
pub fn v1_exact(setup: &Setup, k: [i64; 2], t: f64) -> Result<C64> {
    setup.check_time(t)?;
    let m = setup.amps.len();
    let needed = m.saturating_mul(m).saturating_mul(m);
    if needed > setup.budget {
        return Err(Error::Budget { needed, cap: setup.budget });
    }
    if t == 0.0 {
        return Ok(ZERO);
    }
    let kp = setup.point(k);
    let pref = two_pi_pow(COARSE_2PI_POWER) * setup.sigma * setup.sigma;
    let integrand = |s: f64| -> Result<C64> {
        let w = ComplexGaussian::building_block(kp, setup.sigma).propagate(s).conj();
        let g: Vec<ComplexGaussian> = setup
            .amps
            .iter()
            .map(|(n, z)| ComplexGaussian::building_block(setup.point(*n), setup.h).propagate(s).scale(*z))
            .collect();
        let gc: Vec<ComplexGaussian> = g.iter().map(|x| x.conj()).collect();
        let rows: Vec<Result<CNeumaier>> = (0..m)
            .into_par_iter()
            .map(|i1| {
                let mut acc = CNeumaier::new();
                let a = w.mul(&g[i1]);
                for gc2 in &gc {
                    let b = a.mul(gc2);
                    for g3 in &g {
                        acc.add(b.mul(g3).integrate_plane()?);
                    }
                }
                Ok(acc)
            })
            .collect();
        let mut tot = CNeumaier::new();
        for r in rows {
            tot.merge(&r?);
        }
        Ok(tot.value() * pref)
    };
    let rmax = setup.amps.iter().map(|(n, _)| setup.sq(*n)).fold(setup.sq(k), f64::max).sqrt();
    let panels = ((t.abs() * 8.0 * rmax * rmax / PI).ceil() as usize).clamp(1, 2000);
    let mut err = None;
    let r = integrate_panels(
        |s| match integrand(s) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                ZERO
            }
        },
        0.0,
        t,
        panels,
        setup.opts,
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(r.value)
}

/// Precomputed leading-order `V1` at one site: entries
/// `(i1, i2, i3, kernel)` so that `V1 = sum z_i1 conj(z_i2) z_i3 kernel`.
#[derive(Clone, Debug)]
pub struct V1Plan {
    pub entries: Vec<(u32, u32, u32, C64)>,
}

impl V1Plan {
    pub fn new(setup: &Setup, k: [i64; 2], t: f64) -> Self {
        let map = setup.lookup();
        let mut entries = Vec::new();
        let c = two_pi_pow(V1_LEADING_2PI_POWER);
        for (i1, (n1, _)) in setup.amps.iter().enumerate() {
            for (i3, (n3, _)) in setup.amps.iter().enumerate() {
                let n2 = [n1[0] + n3[0] - k[0], n1[1] + n3[1] - k[1]];
                if let Some(&i2) = map.get(&n2) {
                    let d = exact_defect(&setup.lat, k, *n1, n2, *n3);
                    entries.push((i1 as u32, i2 as u32, i3 as u32, time_kernel(t, d) * c));
                }
            }
        }
        Self { entries }
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        let mut acc = CNeumaier::new();
        for &(a, b, c, kv) in &self.entries {
            acc.add(z[a as usize] * z[b as usize].conj() * z[c as usize] * kv);
        }
        acc.value()
    }
}

/// Defect from integer arithmetic, so resonant strata are exactly zero.
fn exact_defect(lat: &Lattice, k: [i64; 2], n1: [i64; 2], n2: [i64; 2], n3: [i64; 2]) -> f64 {
    let sq = |n: [i64; 2]| n[0] * n[0] + n[1] * n[1];
    let num = sq(k) - sq(n1) + sq(n2) - sq(n3);
    num as f64 / (lat.l * lat.l)
}

/// Precomputed leading-order `V2` at one site.
#[derive(Clone, Debug)]
pub struct V2Plan {
    /// `2 z4 conj(z5) z6 conj(z2) z3 D(d, -d1)` entries: `[i2, i3, i4, i5, i6]`.
    pub linked1: Vec<([u32; 5], C64)>,
    /// `- z1 conj(z4) z5 conj(z6) z3 D(d, d2)` entries: `[i1, i3, i4, i5, i6]`.
    pub linked2: Vec<([u32; 5], C64)>,
}

impl V2Plan {
    pub fn new(setup: &Setup, k: [i64; 2], t: f64) -> Result<Self> {
        let map = setup.lookup();
        let m = setup.amps.len();
        let needed = 2 * m.pow(4);
        if needed > setup.budget {
            return Err(Error::Budget { needed, cap: setup.budget });
        }
        let c2 = two_pi_pow(V2_LEADING_2PI_POWER);
        let lat = &setup.lat;
        let def = |a: [i64; 2], b: [i64; 2], c: [i64; 2], d: [i64; 2]| exact_defect(lat, a, b, c, d);
        let outer: Vec<(usize, usize, usize, [i64; 2], [i64; 2], [i64; 2])> = (0..m)
            .flat_map(|i1| (0..m).map(move |i3| (i1, i3)))
            .filter_map(|(i1, i3)| {
                let n1 = setup.amps[i1].0;
                let n3 = setup.amps[i3].0;
                let n2 = [n1[0] + n3[0] - k[0], n1[1] + n3[1] - k[1]];
                map.get(&n2).map(|&i2| (i1, i2, i3, n1, n2, n3))
            })
            .collect();
        let parts: Vec<(Vec<([u32; 5], C64)>, Vec<([u32; 5], C64)>)> = outer
            .par_iter()
            .map(|&(i1, i2, i3, n1, n2, n3)| {
                let d = def(k, n1, n2, n3);
                let mut l1 = Vec::new();
                let mut l2 = Vec::new();
                for (i4, (n4, _)) in setup.amps.iter().enumerate() {
                    for (i6, (n6, _)) in setup.amps.iter().enumerate() {
                        let n5 = [n4[0] + n6[0] - n1[0], n4[1] + n6[1] - n1[1]];
                        if let Some(&i5) = map.get(&n5) {
                            let d1 = def(n1, *n4, n5, *n6);
                            let v = double_time(d, -d1, t) * (2.0 * c2);
                            l1.push(([i2 as u32, i3 as u32, i4 as u32, i5 as u32, i6 as u32], v));
                        }
                        let n5 = [n4[0] + n6[0] - n2[0], n4[1] + n6[1] - n2[1]];
                        if let Some(&i5) = map.get(&n5) {
                            let d2 = def(n2, *n4, n5, *n6);
                            let v = -double_time(d, d2, t) * c2;
                            l2.push(([i1 as u32, i3 as u32, i4 as u32, i5 as u32, i6 as u32], v));
                        }
                    }
                }
                (l1, l2)
            })
            .collect();
        let mut linked1 = Vec::new();
        let mut linked2 = Vec::new();
        for (a, b) in parts {
            linked1.extend(a);
            linked2.extend(b);
        }
        Ok(Self { linked1, linked2 })
    }

    pub fn eval(&self, z: &[C64]) -> C64 {
        let mut acc = CNeumaier::new();
        for &(ix, v) in &self.linked1 {
            let [i2, i3, i4, i5, i6] = ix.map(|i| z[i as usize]);
            acc.add(i4 * i5.conj() * i6 * i2.conj() * i3 * v);
        }
        for &(ix, v) in &self.linked2 {
            let [i1, i3, i4, i5, i6] = ix.map(|i| z[i as usize]);
            acc.add(i1 * (i4 * i5.conj() * i6).conj() * i3 * v);
        }
        acc.value()
    }
}

pub fn v2_leading(setup: &Setup, k: [i64; 2], t: f64) -> Result<C64> {
    setup.check_time(t)?;
    let z: Vec<C64> = setup.amps.iter().map(|a| a.1).collect();
    Ok(V2Plan::new(setup, k, t)?.eval(&z))
}

/// Exact second iterate by double time quadrature of closed-form Gaussian
/// products; term count per time node is `2 M^5`.
pub fn v2_exact(setup: &Setup, k: [i64; 2], t: f64) -> Result<C64> {
    setup.check_time(t)?;
    let m = setup.amps.len();
    let needed = 2 * m.pow(5);
    let cap = setup.budget.min(200_000);
    if needed > cap {
        return Err(Error::Budget { needed, cap });
    }
    if t == 0.0 {
        return Ok(ZERO);
    }
    let kp = setup.point(k);
    let pref = two_pi_pow(COARSE_2PI_POWER) * setup.sigma * setup.sigma;
    let phi = WavePacketSum::new(
        setup
            .amps
            .iter()
            .map(|(n, z)| ComplexGaussian::building_block(setup.point(*n), setup.h).scale(*z))
            .collect(),
    );
    let err = std::cell::RefCell::new(None);
    let integrand = |s: f64, sp: f64| -> C64 {
        let go = || -> Result<C64> {
            let ps = phi.propagate(s);
            let psp = phi.propagate(sp);
            let n = psp.product(&psp.conj())?.product(&psp)?;
            let w = n.propagate(s - sp);
            let win = WavePacketSum::new(vec![ComplexGaussian::building_block(kp, setup.sigma).propagate(s).conj()]);
            let a = win.product(&ps)?.product(&ps.conj())?.product(&w)?.integrate_plane()?;
            let b = win.product(&ps)?.product(&ps)?.product(&w.conj())?.integrate_plane()?;
            Ok((a * 2.0 - b) * pref)
        };
        match go() {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                ZERO
            }
        }
    };
    let o = setup.opts;
    let r = integrate_2d(integrand, 0.0, t, |s| (0.0, s), o, QuadOpts { abs_tol: o.abs_tol * 0.1, ..o })?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(r.value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub k: [i64; 2],
    pub t: f64,
    pub order: u32,
    pub exact: Option<C64>,
    pub leading: C64,
    pub remainder_abs: Option<f64>,
    /// Size scale `t L^2 log L + L^4` of the leading sums.
    pub budget_scale: f64,
    pub budget_used: usize,
    pub two_pi_power: i32,
}

/// Trilinear signal `R_k(t) = int int e^{2it a.b} u(k+a) conj(v(k+a+b)) w(k+b) da db`
/// for Gaussian packets in frequency space, by two nested plane integrals.
pub fn trilinear_gaussian(u: &ComplexGaussian, v: &ComplexGaussian, w: &ComplexGaussian, k: [f64; 2], t: f64) -> Result<C64> {
    let kc = crate::gaussian::real_vec(k);
    let uu = u.shifted(kc);
    let vv = v.conj().shifted(kc);
    let ww = w.shifted(kc);
    let zb = vv.z + ww.z;
    if !(zb.re > 0.0) {
        return Err(Error::Domain("inner quadratic form not positive".into()));
    }
    let mu = C64::new(0.0, 2.0 * t) - vv.z * 2.0;
    let p = [vv.xi[0] + ww.xi[0], vv.xi[1] + ww.xi[1]];
    let four_zb = zb * 4.0;
    let outer = ComplexGaussian::from_log(
        uu.ln_amp + vv.ln_amp + ww.ln_amp + C64::new(PI, 0.0).ln() - zb.ln() + crate::gaussian::dot(p, p) / four_zb,
        uu.z + vv.z - mu * mu / four_zb,
        [uu.xi[0] + vv.xi[0] + mu * p[0] / (zb * 2.0), uu.xi[1] + vv.xi[1] + mu * p[1] / (zb * 2.0)],
    );
    outer.integrate_plane()
}

/// `R_k(t)` summed over term triples of three packets.
pub fn trilinear(u: &WavePacketSum, v: &WavePacketSum, w: &WavePacketSum, k: [f64; 2], t: f64) -> Result<C64> {
    let mut acc = CNeumaier::new();
    for a in &u.terms {
        for b in &v.terms {
            for c in &w.terms {
                acc.add(trilinear_gaussian(a, b, c, k, t)?);
            }
        }
    }
    Ok(acc.value())
}

/// `|R_k(t)|` on the given times.
pub fn decay_profile(u: &WavePacketSum, v: &WavePacketSum, w: &WavePacketSum, k: [f64; 2], times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times.iter().map(|&t| Ok((t, trilinear(u, v, w, k, t)?.norm()))).collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in pts {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Time integral of a kernel over `[0, t]` (used by oracles and reports).
pub fn time_integral<F: FnMut(f64) -> C64>(f: F, t: f64, opts: QuadOpts) -> Result<C64> {
    Ok(integrate(f, 0.0, t, opts)?.value)
}
