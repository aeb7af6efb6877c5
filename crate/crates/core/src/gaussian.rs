//! Exact calculus on complex Gaussians `c * exp(-z|x|^2 + xi.x)` in two
//! dimensions.
//!
//! Fourier convention: `f^(k) = int f(x) e^{-ik.x} dx`, so
//! `int |f|^2 = (2pi)^{-2} int |f^|^2`. Free propagation is `e^{it Lap}`,
//! acting on `e^{ik.x}` as `e^{-it|k|^2}`.
//!
//! Amplitudes are kept as complex logarithms so that prefactors like `h^{-2}`
//! for very small `h` never overflow before they meet their exponentials.

use crate::error::{Error, Result};
use crate::sum::{CNeumaier, Neumaier};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::f64::consts::PI;

pub type CVec2 = [C64; 2];

pub const DEFAULT_TERM_CAP: usize = 1_000_000;

#[inline]
pub fn dot(a: CVec2, b: CVec2) -> C64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn real_vec(v: [f64; 2]) -> CVec2 {
    [C64::new(v[0], 0.0), C64::new(v[1], 0.0)]
}

#[inline]
pub fn imag_vec(v: [f64; 2]) -> CVec2 {
    [C64::new(0.0, v[0]), C64::new(0.0, v[1])]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexGaussian {
    /// log of the amplitude; `exp(ln_amp)` is the prefactor `c`.
    pub ln_amp: C64,
    pub z: C64,
    pub xi: CVec2,
}

impl ComplexGaussian {
    pub fn new(c: C64, z: C64, xi: CVec2) -> Self {
        Self { ln_amp: c.ln(), z, xi }
    }

    pub fn from_log(ln_amp: C64, z: C64, xi: CVec2) -> Self {
        Self { ln_amp, z, xi }
    }

    /// `(2pi)^{-2} e^{iK.x} e^{-eps^2|x|^2/2}`.
    pub fn building_block(site: [f64; 2], eps: f64) -> Self {
        Self {
            ln_amp: C64::new(-2.0 * (2.0 * PI).ln(), 0.0),
            z: C64::new(0.5 * eps * eps, 0.0),
            xi: imag_vec(site),
        }
    }

    pub fn amplitude(&self) -> C64 {
        self.ln_amp.exp()
    }

    fn check(&self) -> Result<()> {
        if !(self.z.re > 0.0) {
            return Err(Error::Domain(format!("non-integrable Gaussian: Re(z) = {}", self.z.re)));
        }
        Ok(())
    }

    pub fn eval(&self, x: [f64; 2]) -> C64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        (self.ln_amp - self.z * r2 + dot(self.xi, real_vec(x))).exp()
    }

    pub fn conj(&self) -> Self {
        Self { ln_amp: self.ln_amp.conj(), z: self.z.conj(), xi: [self.xi[0].conj(), self.xi[1].conj()] }
    }

    pub fn scale(&self, alpha: C64) -> Self {
        Self { ln_amp: self.ln_amp + alpha.ln(), ..*self }
    }

    /// `x -> f(x0 + x)`.
    pub fn shifted(&self, x0: CVec2) -> Self {
        let two_z = self.z * 2.0;
        Self {
            ln_amp: self.ln_amp - self.z * dot(x0, x0) + dot(self.xi, x0),
            z: self.z,
            xi: [self.xi[0] - two_z * x0[0], self.xi[1] - two_z * x0[1]],
        }
    }

    /// `log` of `int f dx`.
    pub fn ln_integral(&self) -> Result<C64> {
        self.check()?;
        Ok(self.ln_amp + C64::new(PI, 0.0).ln() - self.z.ln() + dot(self.xi, self.xi) / (self.z * 4.0))
    }

    pub fn integrate_plane(&self) -> Result<C64> {
        Ok(self.ln_integral()?.exp())
    }

    pub fn fourier_transform(&self) -> Result<Self> {
        self.check()?;
        let four_z = self.z * 4.0;
        let two_z = self.z * 2.0;
        let i = C64::i();
        Ok(Self {
            ln_amp: self.ln_amp + C64::new(PI, 0.0).ln() - self.z.ln() + dot(self.xi, self.xi) / four_z,
            z: four_z.inv(),
            xi: [-i * self.xi[0] / two_z, -i * self.xi[1] / two_z],
        })
    }

    /// Inverse of [`fourier_transform`](Self::fourier_transform):
    /// `f(x) = (2pi)^{-2} int f^(k) e^{ik.x} dk`.
    pub fn inverse_fourier_transform(&self) -> Result<Self> {
        self.check()?;
        let four_z = self.z * 4.0;
        let two_z = self.z * 2.0;
        let i = C64::i();
        Ok(Self {
            ln_amp: self.ln_amp + C64::new(PI, 0.0).ln() - self.z.ln() + dot(self.xi, self.xi) / four_z
                - 2.0 * (2.0 * PI).ln(),
            z: four_z.inv(),
            xi: [i * self.xi[0] / two_z, i * self.xi[1] / two_z],
        })
    }

    /// `e^{it Lap} f`; the real part of the new quadratic coefficient is
    /// `Re z / |1 + 4izt|^2`, positive for every real `t`.
    pub fn propagate(&self, t: f64) -> Self {
        let d = C64::new(1.0, 0.0) + C64::i() * self.z * (4.0 * t);
        let it = C64::new(0.0, t);
        Self {
            ln_amp: self.ln_amp - d.ln() + it * dot(self.xi, self.xi) / d,
            z: self.z / d,
            xi: [self.xi[0] / d, self.xi[1] / d],
        }
    }

    /// Pointwise product with per-factor conjugation.
    pub fn product(fs: &[ComplexGaussian], conjugate: &[bool]) -> Result<Self> {
        if fs.is_empty() || fs.len() != conjugate.len() {
            return Err(Error::Domain("product needs a nonempty list and a matching mask".into()));
        }
        let mut acc = Self { ln_amp: C64::new(0.0, 0.0), z: C64::new(0.0, 0.0), xi: [C64::new(0.0, 0.0); 2] };
        for (f, &c) in fs.iter().zip(conjugate) {
            let g = if c { f.conj() } else { *f };
            acc.ln_amp += g.ln_amp;
            acc.z += g.z;
            acc.xi[0] += g.xi[0];
            acc.xi[1] += g.xi[1];
        }
        acc.check()?;
        Ok(acc)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            ln_amp: self.ln_amp + other.ln_amp,
            z: self.z + other.z,
            xi: [self.xi[0] + other.xi[0], self.xi[1] + other.xi[1]],
        }
    }
}

/// Moments of `g(x) = C exp(-Z|x|^2 + X.x)`: returns
/// `(int g, int x g, int |x|^2 g)`.
fn moments(g: &ComplexGaussian) -> Result<(C64, CVec2, C64)> {
    let i0 = g.integrate_plane()?;
    let two_z = g.z * 2.0;
    let m1 = [i0 * g.xi[0] / two_z, i0 * g.xi[1] / two_z];
    let m2 = i0 * (dot(g.xi, g.xi) / (two_z * two_z) + g.z.inv());
    Ok((i0, m1, m2))
}

/// Finite sum of complex Gaussians. The empty sum is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct WavePacketSum {
    pub terms: Vec<ComplexGaussian>,
    pub cap: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub grad: f64,
    pub moment: f64,
    /// `sqrt(l2^2 + grad^2 + moment^2)`.
    pub sigma: f64,
}

impl WavePacketSum {
    pub fn new(terms: Vec<ComplexGaussian>) -> Self {
        Self { terms, cap: DEFAULT_TERM_CAP }
    }

    pub fn with_cap(terms: Vec<ComplexGaussian>, cap: usize) -> Result<Self> {
        if terms.len() > cap {
            return Err(Error::Budget { needed: terms.len(), cap });
        }
        Ok(Self { terms, cap })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: [f64; 2]) -> C64 {
        let mut acc = CNeumaier::new();
        for t in &self.terms {
            acc.add(t.eval(x));
        }
        acc.value()
    }

    pub fn conj(&self) -> Self {
        Self { terms: self.terms.iter().map(|t| t.conj()).collect(), cap: self.cap }
    }

    pub fn scale(&self, alpha: C64) -> Self {
        if alpha == C64::new(0.0, 0.0) {
            return Self { terms: vec![], cap: self.cap };
        }
        Self { terms: self.terms.iter().map(|t| t.scale(alpha)).collect(), cap: self.cap }
    }

    pub fn propagate(&self, t: f64) -> Self {
        Self { terms: self.terms.iter().map(|g| g.propagate(t)).collect(), cap: self.cap }
    }

    pub fn fourier_transform(&self) -> Result<Self> {
        Ok(Self { terms: self.terms.iter().map(|g| g.fourier_transform()).collect::<Result<_>>()?, cap: self.cap })
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self::with_cap(terms, self.cap.min(other.cap))
    }

    /// Pointwise product; `m` and `n` terms give `m*n` terms.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let cap = self.cap.min(other.cap);
        let needed = self.len().saturating_mul(other.len());
        if needed > cap {
            return Err(Error::Budget { needed, cap });
        }
        let mut terms = Vec::with_capacity(needed);
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.mul(b));
            }
        }
        Ok(Self { terms, cap })
    }

    pub fn integrate_plane(&self) -> Result<C64> {
        let mut acc = CNeumaier::new();
        for t in &self.terms {
            acc.add(t.integrate_plane()?);
        }
        Ok(acc.value())
    }

    /// Exact `L^2`, gradient and first-moment norms from closed-form Gaussian
    /// moment integrals over all term pairs.
    pub fn norms(&self) -> Result<Norms> {
        let n = self.terms.len();
        let rows: Vec<Result<[Neumaier; 3]>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let fi = &self.terms[i];
                let mut acc = [Neumaier::new(); 3];
                for j in 0..=i {
                    let fj = &self.terms[j];
                    let g = fi.mul(&fj.conj());
                    let (i0, m1, m2) = moments(&g)?;
                    let zi = fi.z;
                    let zj = fj.z.conj();
                    let xi = fi.xi;
                    let xj = [fj.xi[0].conj(), fj.xi[1].conj()];
                    // grad f_i . conj(grad f_j) with grad f = (-2 z x + xi) f
                    let grad = zi * zj * 4.0 * m2 - zi * 2.0 * dot(xj, m1) - zj * 2.0 * dot(xi, m1) + dot(xi, xj) * i0;
                    let w = if i == j { 1.0 } else { 2.0 };
                    acc[0].add(w * i0.re);
                    acc[1].add(w * grad.re);
                    acc[2].add(w * m2.re);
                }
                Ok(acc)
            })
            .collect();
        let mut tot = [Neumaier::new(); 3];
        for r in rows {
            let r = r?;
            for k in 0..3 {
                tot[k].merge(&r[k]);
            }
        }
        let [a, b, c] = tot.map(|x| x.value().max(0.0));
        Ok(Norms { l2: a.sqrt(), grad: b.sqrt(), moment: c.sqrt(), sigma: (a + b + c).sqrt() })
    }
}
