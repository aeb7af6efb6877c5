//! Random-phase ensembles: second moments and cross-covariances of the
//! coarse-grained observable through the expansion
//! `<v> = eps A0 + eps^3 A1 + eps^5 A2`, `A0 = <phi_theta>`, `A1 = -i V1`,
//! `A2 = -V2` (leading-order lattice kernels), the lattice kinetic sum, and
//! the odd-in-time part of the fourth-order coefficient.

use crate::duhamel::{sinc2_kernel, Setup, V1Plan, V2Plan};
use crate::error::{Error, Result};
use crate::initial_data::{validate_regime, Lattice, PhaseEnsemble, Profile, ScalingParams};
use crate::lattice::{level_table, LegField, Legs};
use crate::sum::CNeumaier;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CHUNK: u64 = 256;

/// `E[prod zeta_u prod conj(zeta_c)]` for unit moduli: 1 iff the two site
/// multisets coincide.
pub fn pairing_expectation(unconj: &[[i64; 2]], conj: &[[i64; 2]]) -> u8 {
    let mut a = unconj.to_vec();
    let mut b = conj.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    u8::from(a == b)
}

/// Same with amplitudes: `eta`-product times the phase pairing.
pub fn pairing_expectation_weighted<F: Fn([i64; 2]) -> C64>(unconj: &[[i64; 2]], conj: &[[i64; 2]], eta: F) -> C64 {
    if pairing_expectation(unconj, conj) == 0 {
        return C64::new(0.0, 0.0);
    }
    let mut p = C64::new(1.0, 0.0);
    for &n in unconj {
        p *= eta(n);
    }
    for &n in conj {
        p *= eta(n).conj();
    }
    p
}

/// Running mean and standard error of a real sample (Welford, with the
/// pairwise merge rule).
#[derive(Clone, Copy, Debug, Default)]
pub struct Stat {
    mean: f64,
    m2: f64,
    n: u64,
}

impl Stat {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Stat) {
        if o.n == 0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        let (na, nb) = (self.n as f64, o.n as f64);
        self.mean += d * nb / n as f64;
        self.m2 += o.m2 + d * d * na * nb / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stderr(&self) -> f64 {
        let n = self.n as f64;
        (self.m2 / (n - 1.0) / n).max(0.0).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate { mean: self.mean(), stderr: self.stderr() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `|mean - target| <= k stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub k: [i64; 2],
    pub mean_re: Estimate,
    pub mean_im: Estimate,
    /// `E |<v>|^2` at the nominal `eps`.
    pub second_moment: Estimate,
    pub n_samples: u64,
    /// Per-realization polynomial coefficients of `|<v>|^2` at
    /// `eps^2, eps^4, eps^6`.
    pub order_coefficients: [Estimate; 3],
    /// Coefficients fitted from `E|<v>|^2` on the geometric `eps` ladder.
    pub ladder_fit: [f64; 3],
    /// `E |V1|^2`.
    pub v1_second_moment: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossEstimate {
    pub k: [i64; 2],
    pub k_other: [i64; 2],
    pub re: Estimate,
    pub im: Estimate,
    /// Cross term at `eps^4`: `A0 conj(A1') + A1 conj(A0')`.
    pub order4_re: Estimate,
    pub order4_im: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub seed: u64,
    pub n_samples: u64,
    pub t: f64,
    pub eps: f64,
    pub eps_ladder: [f64; 3],
    pub moments: Vec<MomentEstimate>,
    pub cross: Vec<CrossEstimate>,
}

/// Problem description for ensemble runs.
#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub lat: Lattice,
    pub prof: Profile,
    pub params: ScalingParams,
    pub t: f64,
    pub sites: Vec<[i64; 2]>,
    pub include_v2: bool,
    /// Skip the regime check.
    pub regime_override: bool,
}

struct Prepared {
    setup: Setup,
    eta: Vec<C64>,
    /// Index into `lat.sites()` of each amplitude.
    site_index: Vec<usize>,
    n_sites: usize,
    a0: Vec<Vec<f64>>,
    v1: Vec<V1Plan>,
    v2: Vec<Option<V2Plan>>,
}

fn prepare(spec: &EnsembleSpec, t: f64) -> Result<Prepared> {
    let p = &spec.params;
    if !spec.regime_override {
        let rep = validate_regime(p);
        if !rep.pass {
            return Err(Error::Guard(rep.violations.join("; ")));
        }
    }
    let mut setup = Setup::new(spec.lat, &spec.prof, p.h, p.sigma, None);
    setup.guard_override = spec.regime_override;
    let all = spec.lat.sites();
    let site_index: Vec<usize> = setup
        .amps
        .iter()
        .map(|(n, _)| all.iter().position(|m| m == n).expect("site"))
        .collect();
    let eta: Vec<C64> = setup.amps.iter().map(|a| a.1).collect();
    let s2 = p.sigma * p.sigma + p.h * p.h;
    let ratio = p.sigma * p.sigma / s2;
    let a0 = spec
        .sites
        .iter()
        .map(|&k| {
            let kp = spec.lat.point(k);
            setup
                .amps
                .iter()
                .map(|(n, _)| {
                    let q = spec.lat.point(*n);
                    let d2 = (kp[0] - q[0]).powi(2) + (kp[1] - q[1]).powi(2);
                    ratio * (-d2 / (2.0 * s2)).exp()
                })
                .collect()
        })
        .collect();
    let v1 = spec.sites.iter().map(|&k| V1Plan::new(&setup, k, t)).collect();
    let v2 = spec
        .sites
        .iter()
        .map(|&k| if spec.include_v2 { V2Plan::new(&setup, k, t).map(Some) } else { Ok(None) })
        .collect::<Result<_>>()?;
    setup.check_time(t)?;
    Ok(Prepared { setup, eta, site_index, n_sites: all.len(), a0, v1, v2 })
}

impl Prepared {
    fn zeta(&self, ens: &PhaseEnsemble, r: u64) -> Vec<C64> {
        let ph = ens.phases(r, self.n_sites);
        self.eta.iter().zip(&self.site_index).map(|(e, &i)| e * C64::from_polar(1.0, ph[i])).collect()
    }

    /// `(A0, A1, A2, V1)` per site.
    fn orders(&self, z: &[C64]) -> Vec<(C64, C64, C64, C64)> {
        (0..self.a0.len())
            .map(|s| {
                let a0: C64 = self.a0[s].iter().zip(z).map(|(w, zz)| zz * *w).sum();
                let v1 = self.v1[s].eval(z);
                let v2 = self.v2[s].as_ref().map_or(C64::new(0.0, 0.0), |p| p.eval(z));
                (a0, -C64::i() * v1, -v2, v1)
            })
            .collect()
    }
}

fn observable(o: &(C64, C64, C64, C64), eps: f64) -> C64 {
    o.0 * eps + o.1 * eps.powi(3) + o.2 * eps.powi(5)
}

/// Monte-Carlo moments at each site plus pairwise cross-covariances.
/// Realization streams come from `(seed, index)`; chunks are merged in index
/// order, so results do not depend on the thread count.
pub fn variance_mc(spec: &EnsembleSpec, n_samples: u64, seed: u64) -> Result<EnsembleReport> {
    if n_samples < 100 {
        return Err(Error::Guard(format!("n_samples >= 100 required, got {n_samples}")));
    }
    let prep = prepare(spec, spec.t)?;
    let ens = PhaseEnsemble::new(seed, n_samples);
    let ns = spec.sites.len();
    let eps = spec.params.eps;
    let ladder = [eps, eps / 2f64.sqrt(), eps / 2.0];
    let n_pairs = ns * ns.saturating_sub(1) / 2;
    #[derive(Clone, Default)]
    struct Acc {
        mre: Vec<Stat>,
        mim: Vec<Stat>,
        m2: Vec<Stat>,
        coef: Vec<[Stat; 3]>,
        lad: Vec<[Stat; 3]>,
        v1: Vec<Stat>,
        cre: Vec<Stat>,
        cim: Vec<Stat>,
        c4re: Vec<Stat>,
        c4im: Vec<Stat>,
    }
    let new_acc = || Acc {
        mre: vec![Stat::default(); ns],
        mim: vec![Stat::default(); ns],
        m2: vec![Stat::default(); ns],
        coef: vec![[Stat::default(); 3]; ns],
        lad: vec![[Stat::default(); 3]; ns],
        v1: vec![Stat::default(); ns],
        cre: vec![Stat::default(); n_pairs],
        cim: vec![Stat::default(); n_pairs],
        c4re: vec![Stat::default(); n_pairs],
        c4im: vec![Stat::default(); n_pairs],
    };
    let chunks: Vec<u64> = (0..n_samples.div_ceil(CHUNK)).collect();
    let parts: Vec<Acc> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = new_acc();
            for r in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                let z = prep.zeta(&ens, r);
                let ord = prep.orders(&z);
                let obs: Vec<C64> = ord.iter().map(|o| observable(o, eps)).collect();
                for s in 0..ns {
                    let (a0, a1, a2, v1) = ord[s];
                    acc.mre[s].push(obs[s].re);
                    acc.mim[s].push(obs[s].im);
                    acc.m2[s].push(obs[s].norm_sqr());
                    acc.coef[s][0].push(a0.norm_sqr());
                    acc.coef[s][1].push(2.0 * (a0 * a1.conj()).re);
                    acc.coef[s][2].push(a1.norm_sqr() + 2.0 * (a0 * a2.conj()).re);
                    for (j, &e) in ladder.iter().enumerate() {
                        acc.lad[s][j].push(observable(&ord[s], e).norm_sqr());
                    }
                    acc.v1[s].push(v1.norm_sqr());
                }
                let mut q = 0;
                for s in 0..ns {
                    for s2 in s + 1..ns {
                        let c = obs[s] * obs[s2].conj();
                        acc.cre[q].push(c.re);
                        acc.cim[q].push(c.im);
                        let c4 = ord[s].0 * ord[s2].1.conj() + ord[s].1 * ord[s2].0.conj();
                        acc.c4re[q].push(c4.re);
                        acc.c4im[q].push(c4.im);
                        q += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut tot = new_acc();
    for p in &parts {
        for s in 0..ns {
            tot.mre[s].merge(&p.mre[s]);
            tot.mim[s].merge(&p.mim[s]);
            tot.m2[s].merge(&p.m2[s]);
            tot.v1[s].merge(&p.v1[s]);
            for j in 0..3 {
                tot.coef[s][j].merge(&p.coef[s][j]);
                tot.lad[s][j].merge(&p.lad[s][j]);
            }
        }
        for q in 0..n_pairs {
            tot.cre[q].merge(&p.cre[q]);
            tot.cim[q].merge(&p.cim[q]);
            tot.c4re[q].merge(&p.c4re[q]);
            tot.c4im[q].merge(&p.c4im[q]);
        }
    }
    let moments = (0..ns)
        .map(|s| MomentEstimate {
            k: spec.sites[s],
            mean_re: tot.mre[s].estimate(),
            mean_im: tot.mim[s].estimate(),
            second_moment: tot.m2[s].estimate(),
            n_samples,
            order_coefficients: [0, 1, 2].map(|j| tot.coef[s][j].estimate()),
            ladder_fit: ladder_fit(ladder, [0, 1, 2].map(|j| tot.lad[s][j].mean())),
            v1_second_moment: tot.v1[s].estimate(),
        })
        .collect();
    let mut cross = Vec::new();
    let mut q = 0;
    for s in 0..ns {
        for s2 in s + 1..ns {
            cross.push(CrossEstimate {
                k: spec.sites[s],
                k_other: spec.sites[s2],
                re: tot.cre[q].estimate(),
                im: tot.cim[q].estimate(),
                order4_re: tot.c4re[q].estimate(),
                order4_im: tot.c4im[q].estimate(),
            });
            q += 1;
        }
    }
    Ok(EnsembleReport { seed, n_samples, t: spec.t, eps, eps_ladder: ladder, moments, cross })
}

/// Solve `m(e) = c2 e^2 + c4 e^4 + c6 e^6` through three ladder points.
pub fn ladder_fit(eps: [f64; 3], m: [f64; 3]) -> [f64; 3] {
    // unknowns scaled by eps0 powers for conditioning
    let e0 = eps[0];
    let x: Vec<f64> = eps.iter().map(|e| (e / e0).powi(2)).collect();
    let mut a = [[0.0; 4]; 3];
    for i in 0..3 {
        a[i] = [x[i], x[i] * x[i], x[i] * x[i] * x[i], m[i]];
    }
    for c in 0..3 {
        let piv = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).expect("rows");
        a.swap(c, piv);
        for r in 0..3 {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..4 {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    [a[0][3] / a[0][0] / e0.powi(2), a[1][3] / a[1][1] / e0.powi(4), a[2][3] / a[2][2] / e0.powi(6)]
}

/// Exact `E |V1|^2` at one site by pairing all triple pairs.
pub fn v1_pairing_moment(spec: &EnsembleSpec, k: [i64; 2]) -> Result<f64> {
    let prep = prepare(&EnsembleSpec { sites: vec![k], include_v2: false, ..spec.clone() }, spec.t)?;
    let plan = &prep.v1[0];
    let amps = &prep.setup.amps;
    let rows: Vec<CNeumaier> = plan
        .entries
        .par_iter()
        .map(|&(a, b, c, ka)| {
            let mut acc = CNeumaier::new();
            for &(d, e, f, kb) in &plan.entries {
                // zeta_a conj(zeta_b) zeta_c conj(zeta_d zeta_e* zeta_f)
                let un = [amps[a as usize].0, amps[c as usize].0, amps[e as usize].0];
                let co = [amps[b as usize].0, amps[d as usize].0, amps[f as usize].0];
                if pairing_expectation(&un, &co) == 1 {
                    let w = prep.eta[a as usize] * prep.eta[b as usize].conj() * prep.eta[c as usize]
                        * (prep.eta[d as usize] * prep.eta[e as usize].conj() * prep.eta[f as usize]).conj();
                    acc.add(w * ka * kb.conj());
                }
            }
            acc
        })
        .collect();
    let mut tot = CNeumaier::new();
    for r in &rows {
        tot.merge(r);
    }
    Ok(tot.value().re)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntisymmetryReport {
    pub k: [i64; 2],
    pub t: f64,
    /// `E1(t) + E1(-t)` from common phases.
    pub sum: Estimate,
    pub e1_forward: Estimate,
    pub e1_backward: Estimate,
    pub within_3_stderr: bool,
}

/// Fourth-order coefficient `E1 = E[2 Re(A0 conj(A1))]` at `t` and `-t` with
/// shared phases.
pub fn e1_antisymmetry(spec: &EnsembleSpec, k: [i64; 2], n_samples: u64, seed: u64) -> Result<AntisymmetryReport> {
    let one = EnsembleSpec { sites: vec![k], include_v2: false, ..spec.clone() };
    let fwd = prepare(&one, spec.t)?;
    let bwd = prepare(&one, -spec.t)?;
    let ens = PhaseEnsemble::new(seed, n_samples);
    let parts: Vec<[Stat; 3]> = (0..n_samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = [Stat::default(); 3];
            for r in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                let z = fwd.zeta(&ens, r);
                let f = fwd.orders(&z)[0];
                let b = bwd.orders(&z)[0];
                let ef = 2.0 * (f.0 * f.1.conj()).re;
                let eb = 2.0 * (b.0 * b.1.conj()).re;
                acc[0].push(ef + eb);
                acc[1].push(ef);
                acc[2].push(eb);
            }
            acc
        })
        .collect();
    let mut tot = [Stat::default(); 3];
    for p in &parts {
        for j in 0..3 {
            tot[j].merge(&p[j]);
        }
    }
    let sum = tot[0].estimate();
    Ok(AntisymmetryReport {
        k,
        t: spec.t,
        sum,
        e1_forward: tot[1].estimate(),
        e1_backward: tot[2].estimate(),
        within_3_stderr: if spec.t == 0.0 { sum.mean == 0.0 } else { sum.within(0.0, 3.0) },
    })
}

/// Lattice kinetic sum at `k`: the collision bracket
/// `n1 n2 n3 - n n2 n3 + n n1 n3 - n n1 n2` against the `sinc^2` kernel, with
/// `K1, K3` over the disc of integer radius `window` and unit legs equal to 1
/// there.
pub fn kinetic_sum_window(l: f64, prof: &Profile, k: [i64; 2], t: f64, window: f64) -> f64 {
    let r = window.floor() as i64;
    let n = |q: [f64; 2]| C64::new(prof.spectrum(q), 0.0);
    let nf = LegField::from_window(l, r, window, n);
    let one = LegField::from_window(l, r, window, |_| C64::new(1.0, 0.0));
    let r2 = 3 * r + 1;
    let n2 = LegField::from_window(l, r2, 2.0 * window + (k[0].abs() + k[1].abs()) as f64, n);
    let one2 = LegField::from_window(l, r2, 2.0 * window + (k[0].abs() + k[1].abs()) as f64, |_| C64::new(1.0, 0.0));
    let nk = prof.spectrum([k[0] as f64 / l, k[1] as f64 / l]);
    let ker = |legs: Legs| level_table(k, &legs).apply_kernel(|d| C64::new(sinc2_kernel(t, d), 0.0), C64::new(t * t, 0.0)).re;
    let t1 = ker(Legs { f1: nf.clone(), f2: n2.clone(), f3: nf.clone() });
    if nk == 0.0 {
        return t1;
    }
    let t2 = ker(Legs { f1: one.clone(), f2: n2.clone(), f3: nf.clone() });
    let t3 = ker(Legs { f1: nf.clone(), f2: one2, f3: nf.clone() });
    let t4 = ker(Legs { f1: nf.clone(), f2: n2, f3: one });
    t1 - nk * (t2 - t3 + t4)
}

/// Kinetic sum with the window wide enough for every product to be complete
/// (`2 B + |K|` in lattice units).
pub fn kinetic_sum(lat: &Lattice, prof: &Profile, k: [i64; 2], t: f64) -> f64 {
    let b = prof.radius() * lat.l;
    let kn = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
    kinetic_sum_window(lat.l, prof, k, t, 2.0 * b + kn + 1e-9)
}
