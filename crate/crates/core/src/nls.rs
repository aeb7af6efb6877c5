//! Split-step Fourier solver for `i u_t = -Lap u + lambda |u|^2 u` on a
//! periodic `N x N` box of side `S`, used as ground truth for the expansion.
//!
//! Strang splitting: half kinetic step (exact in frequency), full nonlinear
//! phase rotation `u -> u exp(-i lambda dt |u|^2)`, half kinetic step.

use crate::error::{Error, Result};
use crate::gaussian::{ComplexGaussian, WavePacketSum};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

const MAGIC: &[u8; 4] = b"WKCK";
const VERSION: u32 = 1;

/// Spatial grid `x_j = -S/2 + j S/N`.
#[derive(Clone)]
pub struct Grid {
    pub n: usize,
    pub side: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("side", &self.side).finish()
    }
}

impl Grid {
    pub fn new(n: usize, side: f64) -> Self {
        let mut p = FftPlanner::new();
        Self { n, side, fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }

    pub fn dx(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.side + j as f64 * self.dx()
    }

    /// Angular frequency of FFT bin `j`.
    pub fn k(&self, j: usize) -> f64 {
        let n = self.n as i64;
        let m = if (j as i64) < (n + 1) / 2 { j as i64 } else { j as i64 - n };
        2.0 * PI * m as f64 / self.side
    }

    fn fft2(&self, data: &mut [C64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        data.par_chunks_mut(n).for_each(|row| plan.process(row));
        let mut t = transpose(data, n);
        t.par_chunks_mut(n).for_each(|row| plan.process(row));
        let back = transpose(&t, n);
        data.copy_from_slice(&back);
        if inverse {
            let s = 1.0 / (n * n) as f64;
            data.par_iter_mut().for_each(|v| *v *= s);
        }
    }

    /// Multiply the Fourier coefficients by `exp(-i tau |k|^2)`.
    fn free_flow(&self, data: &mut [C64], tau: f64) {
        if tau == 0.0 {
            return;
        }
        self.fft2(data, false);
        let n = self.n;
        let ks: Vec<f64> = (0..n).map(|j| self.k(j)).collect();
        data.par_chunks_mut(n).enumerate().for_each(|(a, row)| {
            for (b, v) in row.iter_mut().enumerate() {
                let k2 = ks[a] * ks[a] + ks[b] * ks[b];
                *v *= C64::from_polar(1.0, -tau * k2);
            }
        });
        self.fft2(data, true);
    }
}

fn transpose(d: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = d[j * n + i];
        }
    });
    out
}

#[derive(Clone, Debug)]
pub struct GridState {
    pub grid: Grid,
    /// Row-major, index `a * N + b` at `(x_a, x_b)`.
    pub u: Vec<C64>,
    pub time: f64,
    pub dt: f64,
    /// Sign of the cubic term: `+1` as printed (defocusing), `-1` focusing.
    pub lambda: f64,
    /// Largest boundary-to-peak amplitude ratio allowed.
    pub leak_tol: f64,
}

impl GridState {
    /// Samples `packet` on the grid.
    pub fn from_packet(grid: Grid, packet: &WavePacketSum, dt: f64, lambda: f64) -> Self {
        let n = grid.n;
        let xs: Vec<f64> = (0..n).map(|j| grid.x(j)).collect();
        let mut u = vec![C64::new(0.0, 0.0); n * n];
        u.par_chunks_mut(n).enumerate().for_each(|(a, row)| {
            for (b, v) in row.iter_mut().enumerate() {
                *v = packet.eval([xs[a], xs[b]]);
            }
        });
        Self { grid, u, time: 0.0, dt, lambda, leak_tol: 1e-10 }
    }

    pub fn mass(&self) -> f64 {
        let dx = self.grid.dx();
        crate::sum::sum_f64(self.u.iter().map(|v| v.norm_sqr())) * dx * dx
    }

    /// `int conj(u) (-i grad) u dx`, from Fourier coefficients.
    pub fn momentum(&self) -> [f64; 2] {
        let mut f = self.u.clone();
        self.grid.fft2(&mut f, false);
        let n = self.grid.n;
        let (mut p0, mut p1) = (0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                let w = f[a * n + b].norm_sqr();
                p0 += w * self.grid.k(a);
                p1 += w * self.grid.k(b);
            }
        }
        let dx = self.grid.dx();
        let s = dx * dx / (n * n) as f64;
        [p0 * s, p1 * s]
    }

    /// Ratio of the largest boundary amplitude to the peak amplitude.
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.grid.n;
        let peak = self.u.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut edge: f64 = 0.0;
        for j in 0..n {
            for idx in [j, (n - 1) * n + j, j * n, j * n + n - 1] {
                edge = edge.max(self.u[idx].norm());
            }
        }
        if peak == 0.0 {
            0.0
        } else {
            edge / peak
        }
    }

    fn nonlinear(&mut self, tau: f64) {
        let c = -self.lambda * tau;
        self.u.par_iter_mut().for_each(|v| *v *= C64::from_polar(1.0, c * v.norm_sqr()));
    }

    /// Advance by `t_total` with Strang steps of size `dt` (`t_total / dt`
    /// must be an integer up to rounding).
    pub fn evolve(&mut self, t_total: f64) -> Result<()> {
        let steps = (t_total / self.dt).round() as usize;
        if ((steps as f64) * self.dt - t_total).abs() > 1e-9 * t_total.abs().max(1.0) {
            return Err(Error::Guard(format!("T / dt must be an integer: T = {t_total}, dt = {}", self.dt)));
        }
        let peak2 = self.u.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        if self.dt * peak2 > 0.1 {
            return Err(Error::Guard(format!("dt max|u|^2 << 1 violated: {:.3e}", self.dt * peak2)));
        }
        if steps == 0 {
            return Ok(());
        }
        let dt = self.dt;
        let grid = self.grid.clone();
        grid.free_flow(&mut self.u, 0.5 * dt);
        for s in 0..steps {
            self.nonlinear(dt);
            let tau = if s + 1 == steps { 0.5 * dt } else { dt };
            grid.free_flow(&mut self.u, tau);
        }
        self.time += steps as f64 * dt;
        let leak = self.boundary_ratio();
        if leak > self.leak_tol {
            return Err(Error::Guard(format!("boundary amplitude ratio {leak:.3e} exceeds {:.1e}", self.leak_tol)));
        }
        Ok(())
    }

    /// Interaction-picture field `v = e^{-it Lap} u` on the grid.
    pub fn interaction_field(&self) -> Vec<C64> {
        let mut v = self.u.clone();
        self.grid.free_flow(&mut v, -self.time);
        v
    }

    /// `(2pi)^3 sigma^2 sum conj(g_{K,sigma}) v dx^2` for each site.
    pub fn observe(&self, sites: &[[f64; 2]], sigma: f64) -> Result<Vec<C64>> {
        let bins = sigma * self.grid.side / (2.0 * PI);
        if bins < 4.0 {
            return Err(Error::Guard(format!("sigma S / (2 pi) >= 4 frequency bins violated: {bins:.3}")));
        }
        let v = self.interaction_field();
        let n = self.grid.n;
        let xs: Vec<f64> = (0..n).map(|j| self.grid.x(j)).collect();
        let dx = self.grid.dx();
        let pref = (2.0 * PI).powi(3) * sigma * sigma * dx * dx;
        Ok(sites
            .iter()
            .map(|&k| {
                let g = ComplexGaussian::building_block(k, sigma).conj();
                let rows: Vec<crate::sum::CNeumaier> = (0..n)
                    .into_par_iter()
                    .map(|a| {
                        let mut acc = crate::sum::CNeumaier::new();
                        for b in 0..n {
                            acc.add(g.eval([xs[a], xs[b]]) * v[a * n + b]);
                        }
                        acc
                    })
                    .collect();
                let mut tot = crate::sum::CNeumaier::new();
                for r in &rows {
                    tot.merge(r);
                }
                tot.value() * pref
            })
            .collect())
    }

    /// Checkpoint: magic `WKCK`, u32 version, u64 N, f64 S, f64 t, f64 dt,
    /// f64 lambda, 32-byte parameter hash, then `N*N` pairs of f64 (re, im),
    /// all little-endian, row-major.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W, params_hash: &[u8; 32]) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.n as u64).to_le_bytes())?;
        for x in [self.grid.side, self.time, self.dt, self.lambda] {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(params_hash)?;
        for v in &self.u {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(Self, [u8; 32])> {
        let bad = |m: &str| Error::Domain(format!("checkpoint: {m}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != VERSION {
            return Err(bad("unsupported version"));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut f = [0.0; 4];
        for x in f.iter_mut() {
            r.read_exact(&mut b8)?;
            *x = f64::from_le_bytes(b8);
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let mut u = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            u.push(C64::new(re, f64::from_le_bytes(b8)));
        }
        let grid = Grid::new(n, f[0]);
        Ok((Self { grid, u, time: f[1], dt: f[2], lambda: f[3], leak_tol: 1e-10 }, hash))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet() -> WavePacketSum {
        WavePacketSum::new(vec![
            ComplexGaussian::building_block([0.5, 0.0], 0.5),
            ComplexGaussian::building_block([0.0, -0.75], 0.5).scale(C64::new(0.3, 0.4)),
        ])
    }

    #[test]
    fn linear_flow_matches_closed_form() {
        let grid = Grid::new(128, 40.0);
        let p = packet();
        let mut st = GridState::from_packet(grid.clone(), &p.scale(C64::new(1.0, 0.0)), 0.05, 0.0);
        st.evolve(1.0).unwrap();
        let exact = p.propagate(1.0);
        let mut num = 0.0;
        let mut den = 0.0;
        for a in 0..128 {
            for b in 0..128 {
                let e = exact.eval([grid.x(a), grid.x(b)]);
                num += (st.u[a * 128 + b] - e).norm_sqr();
                den += e.norm_sqr();
            }
        }
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn mass_conserved_nonlinear() {
        let grid = Grid::new(128, 40.0);
        let mut st = GridState::from_packet(grid, &packet().scale(C64::new(20.0, 0.0)), 0.01, 1.0);
        let m0 = st.mass();
        st.evolve(1.0).unwrap();
        assert!((st.mass() - m0).abs() / m0 < 1e-10);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let grid = Grid::new(16, 40.0);
        let st = GridState::from_packet(grid, &packet(), 0.01, 1.0);
        let mut buf = Vec::new();
        st.write_checkpoint(&mut buf, &[7u8; 32]).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 8 + 32 + 32 + 16 * 16 * 16);
        let (back, h) = GridState::read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(h, [7u8; 32]);
        assert_eq!(back.u, st.u);
        assert_eq!(back.grid.side, 40.0);
    }
}
