//! Gaussian-truncated periodic initial data, coarse-grained spectral
//! observables and the asymptotic-regime check.

use crate::error::{Error, Result};
use crate::gaussian::{ComplexGaussian, WavePacketSum, DEFAULT_TERM_CAP};
use crate::sum::CNeumaier;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Sites `n / L` of the rescaled lattice with `|n / L| <= radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub l: f64,
    pub radius: f64,
}

impl Lattice {
    pub fn new(l: f64, radius: f64) -> Self {
        Self { l, radius }
    }

    /// Largest integer coordinate that can appear.
    pub fn int_radius(&self) -> i64 {
        (self.radius * self.l + 1e-9).floor() as i64
    }

    pub fn contains(&self, n: [i64; 2]) -> bool {
        let r = self.radius * self.l;
        ((n[0] * n[0] + n[1] * n[1]) as f64) <= r * r * (1.0 + 1e-12)
    }

    /// Integer coordinates in row-major order.
    pub fn sites(&self) -> Vec<[i64; 2]> {
        let m = self.int_radius();
        let mut out = Vec::new();
        for a in -m..=m {
            for b in -m..=m {
                if self.contains([a, b]) {
                    out.push([a, b]);
                }
            }
        }
        out
    }

    pub fn point(&self, n: [i64; 2]) -> [f64; 2] {
        [n[0] as f64 / self.l, n[1] as f64 / self.l]
    }
}

fn smooth_step(s: f64) -> f64 {
    // C-infinity transition from 1 (s <= 0) to 0 (s >= 1)
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / (1.0 - s)).exp();
    let b = (-1.0 / s).exp();
    a / (a + b)
}

/// Spectral envelope `eta`, compactly supported in `|k| <= radius()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `exp(1 - 1/(1 - |k-c|^2/R^2))`, equal to 1 at the centre.
    Bump {
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// `exp(-|k|^2 / (2 w^2))` cut off at `radius`.
    TruncatedGaussian { width: f64, radius: f64 },
    /// 1 inside `radius - soft`, smooth decay to 0 at `radius`.
    Disc { radius: f64, soft: f64 },
    /// Constant value on the closed disc.
    Constant {
        radius: f64,
        #[serde(default = "one")]
        value: f64,
    },
    /// Indicator of the closed square `|k_1|, |k_2| <= half_width`.
    Square { half_width: f64 },
    /// A single lattice point carrying amplitude 1.
    Single { site: [f64; 2] },
    /// `base(k) * exp(i slope.k)`.
    Twisted { base: Box<Profile>, slope: [f64; 2] },
}

fn one() -> f64 {
    1.0
}

impl Profile {
    pub fn eval(&self, k: [f64; 2]) -> C64 {
        let r2 = k[0] * k[0] + k[1] * k[1];
        match self {
            Profile::Bump { radius, center } => {
                let d2 = ((k[0] - center[0]).powi(2) + (k[1] - center[1]).powi(2)) / (radius * radius);
                if d2 >= 1.0 {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new((1.0 - 1.0 / (1.0 - d2)).exp(), 0.0)
                }
            }
            Profile::TruncatedGaussian { width, radius } => {
                if r2 > radius * radius {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new((-r2 / (2.0 * width * width)).exp(), 0.0)
                }
            }
            Profile::Disc { radius, soft } => {
                let r = r2.sqrt();
                C64::new(smooth_step((r - (radius - soft)) / soft), 0.0)
            }
            Profile::Constant { radius, value } => {
                if r2 <= radius * radius * (1.0 + 1e-12) {
                    C64::new(*value, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            Profile::Square { half_width } => {
                let w = half_width * (1.0 + 1e-12);
                C64::new(if k[0].abs() <= w && k[1].abs() <= w { 1.0 } else { 0.0 }, 0.0)
            }
            Profile::Single { site } => {
                if (k[0] - site[0]).abs() < 1e-9 && (k[1] - site[1]).abs() < 1e-9 {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            Profile::Twisted { base, slope } => base.eval(k) * C64::from_polar(1.0, slope[0] * k[0] + slope[1] * k[1]),
        }
    }

    /// Spectrum `n = |eta|^2`.
    pub fn spectrum(&self, k: [f64; 2]) -> f64 {
        self.eval(k).norm_sqr()
    }

    /// Radius of a disc about the origin containing the support.
    pub fn radius(&self) -> f64 {
        match self {
            Profile::Bump { radius, center } => radius + center[0].hypot(center[1]),
            Profile::TruncatedGaussian { radius, .. } | Profile::Disc { radius, .. } | Profile::Constant { radius, .. } => {
                *radius
            }
            Profile::Square { half_width } => half_width * std::f64::consts::SQRT_2,
            Profile::Single { site } => site[0].hypot(site[1]),
            Profile::Twisted { base, .. } => base.radius(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            Profile::Constant { value, .. } => value.abs(),
            Profile::Twisted { base, .. } => base.sup_norm(),
            _ => 1.0,
        }
    }
}

/// Phase streams: realization `r` uses ChaCha8 seeded by `seed` on stream `r`,
/// drawing one uniform phase per site in the order given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseEnsemble {
    pub seed: u64,
    pub count: u64,
}

impl PhaseEnsemble {
    pub fn new(seed: u64, count: u64) -> Self {
        Self { seed, count }
    }

    pub fn phases(&self, realization: u64, n_sites: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(realization);
        (0..n_sites).map(|_| rng.gen::<f64>() * 2.0 * PI).collect()
    }
}

/// Nonzero site amplitudes `(n, eta_n)` in lattice order.
pub fn site_amplitudes(lat: &Lattice, prof: &Profile) -> Vec<([i64; 2], C64)> {
    lat.sites()
        .into_iter()
        .map(|n| (n, prof.eval(lat.point(n))))
        .filter(|(_, e)| e.norm() > 0.0)
        .collect()
}

/// `phi = sum_K eta_K e^{i theta_K} g_{K,h}`; `phases` is indexed like
/// [`Lattice::sites`].
pub fn build_phi(lat: &Lattice, prof: &Profile, h: f64, phases: Option<&[f64]>) -> Result<WavePacketSum> {
    build_phi_capped(lat, prof, h, phases, DEFAULT_TERM_CAP)
}

pub fn build_phi_capped(lat: &Lattice, prof: &Profile, h: f64, phases: Option<&[f64]>, cap: usize) -> Result<WavePacketSum> {
    if !(h > 0.0) {
        return Err(Error::Domain("h must be positive".into()));
    }
    let sites = lat.sites();
    if let Some(p) = phases {
        if p.len() != sites.len() {
            return Err(Error::Domain(format!("{} phases for {} sites", p.len(), sites.len())));
        }
    }
    let mut terms = Vec::new();
    for (i, n) in sites.iter().enumerate() {
        let k = lat.point(*n);
        let eta = prof.eval(k);
        if eta.norm() == 0.0 {
            continue;
        }
        let zeta = match phases {
            Some(p) => eta * C64::from_polar(1.0, p[i]),
            None => eta,
        };
        terms.push(ComplexGaussian::building_block(k, h).scale(zeta));
        if terms.len() > cap {
            return Err(Error::Budget { needed: terms.len(), cap });
        }
    }
    WavePacketSum::with_cap(terms, cap)
}

/// `int exp(-|k-K|^2/(2 sigma^2)) v^(k) dk`, evaluated as
/// `(2pi)^3 sigma^2 int conj(g_{K,sigma}) v dx` term by term.
pub fn coarse_grain(v: &WavePacketSum, k: [f64; 2], sigma: f64) -> Result<C64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain("sigma must be positive".into()));
    }
    let window = ComplexGaussian::building_block(k, sigma).conj();
    let pref = (2.0 * PI).powi(3) * sigma * sigma;
    let mut acc = CNeumaier::new();
    for t in &v.terms {
        acc.add(window.mul(t).integrate_plane()?);
    }
    Ok(acc.value() * pref)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingParams {
    pub h: f64,
    pub l: f64,
    pub sigma: f64,
    pub eps: f64,
    pub delta0: f64,
    #[serde(default = "default_strictness")]
    pub ar_strictness: f64,
}

fn default_strictness() -> f64 {
    0.1
}

impl ScalingParams {
    /// `h = L^{-(4+alpha)}`, `sigma = L^{beta-3-alpha}`.
    pub fn remark_point(l: f64, alpha: f64, beta: f64, eps: f64, delta0: f64) -> Self {
        Self {
            h: l.powf(-(4.0 + alpha)),
            l,
            sigma: l.powf(beta - 3.0 - alpha),
            eps,
            delta0,
            ar_strictness: default_strictness(),
        }
    }

    /// Upper end of the validity window of the kernel estimates.
    pub fn time_guard(&self) -> f64 {
        1.0 / (self.sigma * self.sigma * self.l * self.l)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// `h L^{4+delta0}`, must be `<= 1`.
    pub size_margin: f64,
    /// `h L / sigma`, must be `<= strictness`.
    pub lower_margin: f64,
    /// `sigma / h^{3/4}`, must be `<= 1`.
    pub upper_margin: f64,
    /// `eps L / h^2`, must be `<= strictness`.
    pub eps_margin: f64,
    pub delta: f64,
    pub window1: [f64; 2],
    pub window2: [f64; 2],
    pub time_guard: f64,
    pub pass: bool,
    pub violations: Vec<String>,
}

pub fn validate_regime(p: &ScalingParams) -> RegimeReport {
    validate_regime_with_delta(p, 0.5 * p.delta0)
}

pub fn validate_regime_with_delta(p: &ScalingParams, delta: f64) -> RegimeReport {
    let size_margin = p.h * p.l.powf(4.0 + p.delta0);
    let lower_margin = p.h * p.l / p.sigma;
    let upper_margin = p.sigma / p.h.powf(0.75);
    let eps_margin = p.eps * p.l / (p.h * p.h);
    let mut violations = Vec::new();
    if !(p.h > 0.0 && p.l > 0.0 && p.sigma > 0.0 && p.eps > 0.0 && p.delta0 > 0.0) {
        violations.push("all parameters must be positive".to_string());
    }
    if size_margin > 1.0 {
        violations.push(format!("h L^(4+delta0) <= 1 violated: {size_margin:.3e}"));
    }
    if lower_margin > p.ar_strictness {
        violations.push(format!("h L << sigma violated: h L / sigma = {lower_margin:.3e} > {}", p.ar_strictness));
    }
    if upper_margin > 1.0 {
        violations.push(format!("sigma <= h^(3/4) violated: sigma / h^(3/4) = {upper_margin:.3e}"));
    }
    if eps_margin > p.ar_strictness {
        violations.push(format!("eps << h^2 / L violated: eps L / h^2 = {eps_margin:.3e} > {}", p.ar_strictness));
    }
    RegimeReport {
        size_margin,
        lower_margin,
        upper_margin,
        eps_margin,
        delta,
        window1: [p.l.powf(delta), p.l.powf(1.0 - delta)],
        window2: [p.l.powf(2.0 + delta), 1.0 / (p.h * p.l.powf(delta))],
        time_guard: p.time_guard(),
        pass: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_phi_is_building_block() {
        let lat = Lattice::new(4.0, 1.0);
        let prof = Profile::Single { site: [0.25, 0.5] };
        let phi = build_phi(&lat, &prof, 0.1, None).unwrap();
        assert_eq!(phi.len(), 1);
        let g = ComplexGaussian::building_block([0.25, 0.5], 0.1);
        for x in [[0.0, 0.0], [1.0, -2.0], [3.5, 0.7]] {
            assert!((phi.eval(x) - g.eval(x)).norm() < 1e-15);
        }
    }

    #[test]
    fn disc_site_count() {
        let lat = Lattice::new(4.0, 1.0);
        let prof = Profile::Constant { radius: 1.0, value: 1.0 };
        assert_eq!(build_phi(&lat, &prof, 0.01, None).unwrap().len(), 49);
    }

    #[test]
    fn phases_reproducible() {
        let ens = PhaseEnsemble::new(42, 10);
        assert_eq!(ens.phases(3, 20), ens.phases(3, 20));
        assert_ne!(ens.phases(3, 20), ens.phases(4, 20));
        let lat = Lattice::new(4.0, 1.0);
        let prof = Profile::Bump { radius: 1.0, center: [0.0, 0.0] };
        let p = ens.phases(0, lat.sites().len());
        assert_eq!(build_phi(&lat, &prof, 0.1, Some(&p)).unwrap(), build_phi(&lat, &prof, 0.1, Some(&p)).unwrap());
    }

    #[test]
    fn single_mode_coarse_grain() {
        let (h, sigma) = (0.03, 0.07);
        let v = WavePacketSum::new(vec![ComplexGaussian::building_block([0.5, -0.25], h)]);
        let got = coarse_grain(&v, [0.5, -0.25], sigma).unwrap();
        let want = sigma * sigma / (sigma * sigma + h * h);
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn remark_point_passes_at_unit_strictness() {
        let mut p = ScalingParams::remark_point(10.0, 0.4, 0.05, 1e-12, 0.2);
        p.ar_strictness = 1.0;
        let r = validate_regime(&p);
        assert!(r.pass, "{:?}", r.violations);
        assert!(r.window1[0] < r.window1[1] && r.window2[0] < r.window2[1]);
    }

    #[test]
    fn sigma_equal_h_fails_lower_constraint() {
        let h = 1e-5;
        let p = ScalingParams { h, l: 10.0, sigma: h, eps: 1e-14, delta0: 0.2, ar_strictness: 0.1 };
        let r = validate_regime(&p);
        assert!(!r.pass);
        assert!(r.violations.iter().any(|v| v.contains("h L << sigma")));
    }

    #[test]
    fn eps_at_threshold_fails() {
        let mut p = ScalingParams::remark_point(10.0, 0.4, 0.05, 0.0, 0.2);
        p.ar_strictness = 1.0;
        p.eps = p.h * p.h / p.l;
        p.ar_strictness = 0.1;
        let r = validate_regime(&p);
        assert!(r.violations.iter().any(|v| v.contains("eps << h^2 / L")));
    }
}
