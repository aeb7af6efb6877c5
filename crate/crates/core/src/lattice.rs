//! Frequency triples on the rescaled lattice `Z^2 / L`.
//!
//! A triple around the output site `K` is written `K1 = K + A`, `K3 = K + B`,
//! `K2 = K + A + B` (so `K = K1 - K2 + K3`), with integer `A, B`. Its defect
//! `|K|^2 - |K1|^2 + |K2|^2 - |K3|^2` equals `2 A.B / L^2`, so resonance is
//! the integer test `A.B = 0`.

use crate::initial_data::{Lattice, Profile};
use crate::sum::CNeumaier;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const CHUNKS: usize = 64;

/// Complex values on a window of integer sites inside the box `|n_i| <= r`,
/// zero elsewhere.
#[derive(Clone, Debug)]
pub struct LegField {
    pub l: f64,
    pub r: i64,
    width: usize,
    data: Vec<C64>,
    inside: Vec<bool>,
}

impl LegField {
    pub fn from_fn<F: Fn([f64; 2]) -> C64>(l: f64, r: i64, f: F) -> Self {
        let width = (2 * r + 1) as usize;
        let mut data = vec![C64::new(0.0, 0.0); width * width];
        let mut inside = vec![false; width * width];
        for a in -r..=r {
            for b in -r..=r {
                let i = ((a + r) as usize) * width + (b + r) as usize;
                inside[i] = true;
                data[i] = f([a as f64 / l, b as f64 / l]);
            }
        }
        Self { l, r, width, data, inside }
    }

    /// Window of the lattice, values from the profile.
    pub fn from_profile(lat: &Lattice, prof: &Profile) -> Self {
        Self::from_window(lat.l, lat.int_radius(), lat.radius * lat.l, |k| prof.eval(k))
    }

    /// Sites with `|n| <= radius_int` (real radius, integer box `r`).
    pub fn from_window<F: Fn([f64; 2]) -> C64>(l: f64, r: i64, radius_int: f64, f: F) -> Self {
        let mut s = Self::from_fn(l, r, f);
        let lim = radius_int * radius_int * (1.0 + 1e-12);
        for a in -r..=r {
            for b in -r..=r {
                let i = ((a + r) as usize) * s.width + (b + r) as usize;
                if ((a * a + b * b) as f64) > lim {
                    s.inside[i] = false;
                    s.data[i] = C64::new(0.0, 0.0);
                }
            }
        }
        s
    }

    pub fn map<F: Fn(C64) -> C64>(&self, f: F) -> Self {
        let mut s = self.clone();
        for (d, &ins) in s.data.iter_mut().zip(&self.inside) {
            if ins {
                *d = f(*d);
            }
        }
        s
    }

    #[inline]
    fn index(&self, n: [i64; 2]) -> Option<usize> {
        if n[0].abs() > self.r || n[1].abs() > self.r {
            return None;
        }
        let i = ((n[0] + self.r) as usize) * self.width + (n[1] + self.r) as usize;
        if self.inside[i] {
            Some(i)
        } else {
            None
        }
    }

    #[inline]
    pub fn get(&self, n: [i64; 2]) -> C64 {
        self.index(n).map_or(C64::new(0.0, 0.0), |i| self.data[i])
    }

    pub fn in_window(&self, n: [i64; 2]) -> bool {
        self.index(n).is_some()
    }

    pub fn window_sites(&self) -> Vec<[i64; 2]> {
        let mut out = Vec::new();
        for a in -self.r..=self.r {
            for b in -self.r..=self.r {
                if self.in_window([a, b]) {
                    out.push([a, b]);
                }
            }
        }
        out
    }
}

/// The three legs of a triple sum: `f1(K1) conj(f2(K2)) f3(K3)`. `K1` and
/// `K3` run over the windows of `f1` and `f3`; `f2` is only looked up.
#[derive(Clone, Debug)]
pub struct Legs {
    pub f1: LegField,
    pub f2: LegField,
    pub f3: LegField,
}

impl Legs {
    pub fn same(f: LegField) -> Self {
        Self { f1: f.clone(), f2: f.clone(), f3: f }
    }

    /// `eta` on the lattice window for `K1, K3`; `K2` looked up on a window
    /// wide enough to contain every `K1 + K3 - K`.
    pub fn from_profile(lat: &Lattice, prof: &Profile) -> Self {
        let f = LegField::from_profile(lat, prof);
        let r2 = 3 * lat.int_radius() + 1;
        let f2 = LegField::from_fn(lat.l, r2, |k| prof.eval(k));
        Self { f1: f.clone(), f2, f3: f }
    }

    fn weight(&self, k: [i64; 2], a: [i64; 2], b: [i64; 2]) -> C64 {
        let k1 = [k[0] + a[0], k[1] + a[1]];
        let k3 = [k[0] + b[0], k[1] + b[1]];
        let k2 = [k1[0] + b[0], k1[1] + b[1]];
        self.f1.get(k1) * self.f2.get(k2).conj() * self.f3.get(k3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResonantTriple {
    pub k1: [i64; 2],
    pub k2: [i64; 2],
    pub k3: [i64; 2],
    /// `A.B`; the defect is `2 * dot / L^2`.
    pub dot: i64,
}

impl ResonantTriple {
    pub fn defect(&self, l: f64) -> f64 {
        2.0 * self.dot as f64 / (l * l)
    }
}

/// All triples around integer site `k` with `K1, K3` in the lattice window.
pub fn enumerate_triples(lat: &Lattice, k: [i64; 2]) -> impl Iterator<Item = ResonantTriple> {
    let sites = lat.sites();
    let s2 = sites.clone();
    sites.into_iter().flat_map(move |k1| {
        let a = [k1[0] - k[0], k1[1] - k[1]];
        s2.clone().into_iter().map(move |k3| {
            let b = [k3[0] - k[0], k3[1] - k[1]];
            ResonantTriple { k1, k2: [k1[0] + b[0], k1[1] + b[1]], k3, dot: a[0] * b[0] + a[1] * b[1] }
        })
    })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LevelAcc {
    pub sum: CNeumaier,
    pub count: u64,
}

/// Triple sums grouped by the exact level `A.B` (defect `2 A.B / L^2`).
#[derive(Clone, Debug, Default)]
pub struct LevelTable {
    pub l: f64,
    pub levels: BTreeMap<i64, LevelAcc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetSum {
    /// Defect numerator over `xi_den`: `xi = 2 A.B / L^2`.
    pub xi_num: i64,
    pub xi_den: f64,
    pub count: u64,
    pub value: C64,
}

impl LevelSetSum {
    pub fn xi(&self) -> f64 {
        self.xi_num as f64 / self.xi_den
    }
}

impl LevelTable {
    pub fn total_count(&self) -> u64 {
        self.levels.values().map(|a| a.count).sum()
    }

    pub fn level(&self, dot: i64) -> Option<LevelSetSum> {
        self.levels.get(&dot).map(|a| LevelSetSum {
            xi_num: 2 * dot,
            xi_den: self.l * self.l,
            count: a.count,
            value: a.sum.value(),
        })
    }

    pub fn profile(&self) -> Vec<LevelSetSum> {
        self.levels.keys().map(|&p| self.level(p).expect("present")).collect()
    }

    /// `sum_levels kernel(xi) * S(xi)`, levels taken in order of increasing
    /// `|xi|` (ties: negative first). `at_zero` replaces `kernel(0)`.
    pub fn apply_kernel<F: Fn(f64) -> C64>(&self, kernel: F, at_zero: C64) -> C64 {
        let mut keys: Vec<i64> = self.levels.keys().copied().collect();
        keys.sort_by_key(|p| (p.abs(), *p));
        let mut acc = CNeumaier::new();
        let den = self.l * self.l;
        for p in keys {
            let s = self.levels[&p].sum.value();
            let kv = if p == 0 { at_zero } else { kernel(2.0 * p as f64 / den) };
            acc.add(kv * s);
        }
        acc.value()
    }
}

/// Brute-force `O(M^2)` level decomposition around integer site `k`.
/// Parallel over fixed chunks of `K1`, merged in chunk order.
pub fn level_table(k: [i64; 2], legs: &Legs) -> LevelTable {
    let s1 = legs.f1.window_sites();
    let s3 = legs.f3.window_sites();
    let chunk = s1.len().div_ceil(CHUNKS).max(1);
    let parts: Vec<Vec<(i64, LevelAcc)>> = s1
        .par_chunks(chunk)
        .map(|c1| {
            let amax = c1.iter().map(|n| (n[0] - k[0]).abs() + (n[1] - k[1]).abs()).max().unwrap_or(0);
            let bmax = s3.iter().map(|n| (n[0] - k[0]).abs() + (n[1] - k[1]).abs()).max().unwrap_or(0);
            let pmax = amax * bmax;
            let mut dense = vec![LevelAcc::default(); (2 * pmax + 1) as usize];
            for &k1 in c1 {
                let a = [k1[0] - k[0], k1[1] - k[1]];
                let v1 = legs.f1.get(k1);
                for &k3 in &s3 {
                    let b = [k3[0] - k[0], k3[1] - k[1]];
                    let p = a[0] * b[0] + a[1] * b[1];
                    let slot = &mut dense[(p + pmax) as usize];
                    slot.count += 1;
                    if v1.re != 0.0 || v1.im != 0.0 {
                        let v3 = legs.f3.get(k3);
                        let v2 = legs.f2.get([k1[0] + b[0], k1[1] + b[1]]);
                        slot.sum.add(v1 * v2.conj() * v3);
                    }
                }
            }
            dense
                .into_iter()
                .enumerate()
                .filter(|(_, a)| a.count > 0)
                .map(|(i, a)| (i as i64 - pmax, a))
                .collect()
        })
        .collect();
    let mut levels: BTreeMap<i64, LevelAcc> = BTreeMap::new();
    for part in parts {
        for (p, a) in part {
            let e = levels.entry(p).or_default();
            e.count += a.count;
            e.sum.merge(&a.sum);
        }
    }
    LevelTable { l: legs.f1.l, levels }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResonantStratum {
    pub count: u64,
    pub value: C64,
}

/// Resonant (`A.B = 0`) stratum through primitive directions: `A = m d`,
/// `B = j d_perp`, plus the axes `A = 0` and `B = 0`. Cost is proportional
/// to the number of resonant pairs.
pub fn resonant_fast(k: [i64; 2], legs: &Legs) -> ResonantStratum {
    let s1 = legs.f1.window_sites();
    let s3 = legs.f3.window_sites();
    let mut acc = CNeumaier::new();
    let mut count = 0u64;
    // A = 0
    for &k3 in &s3 {
        if legs.f1.in_window(k) {
            count += 1;
            acc.add(legs.weight(k, [0, 0], [k3[0] - k[0], k3[1] - k[1]]));
        }
    }
    // B = 0, A != 0
    if legs.f3.in_window(k) {
        for &k1 in &s1 {
            if k1 != k {
                count += 1;
                acc.add(legs.weight(k, [k1[0] - k[0], k1[1] - k[1]], [0, 0]));
            }
        }
    }
    let reach = |f: &LegField| -> i64 { 2 * f.r + k[0].abs() + k[1].abs() + 1 };
    let da = reach(&legs.f1);
    let db = reach(&legs.f3);
    let dmax = da.max(db);
    let mut dirs = Vec::new();
    for d0 in 0..=dmax {
        for d1 in -dmax..=dmax {
            if (d0 == 0 && d1 <= 0) || gcd(d0, d1) != 1 {
                continue;
            }
            dirs.push([d0, d1]);
        }
    }
    let parts: Vec<(u64, CNeumaier)> = dirs
        .par_chunks(dirs.len().div_ceil(CHUNKS).max(1))
        .map(|ds| {
            let mut acc = CNeumaier::new();
            let mut count = 0u64;
            let mut ms = Vec::new();
            let mut js = Vec::new();
            for d in ds {
                let dp = [-d[1], d[0]];
                ms.clear();
                js.clear();
                for sgn in [1i64, -1] {
                    let mut m = sgn;
                    loop {
                        if (m * d[0]).abs().max((m * d[1]).abs()) > da {
                            break;
                        }
                        let k1 = [k[0] + m * d[0], k[1] + m * d[1]];
                        if legs.f1.in_window(k1) {
                            ms.push(m);
                        }
                        m += sgn;
                    }
                    let mut j = sgn;
                    loop {
                        if (j * dp[0]).abs().max((j * dp[1]).abs()) > db {
                            break;
                        }
                        let k3 = [k[0] + j * dp[0], k[1] + j * dp[1]];
                        if legs.f3.in_window(k3) {
                            js.push(j);
                        }
                        j += sgn;
                    }
                }
                for &m in &ms {
                    let a = [m * d[0], m * d[1]];
                    for &j in &js {
                        count += 1;
                        acc.add(legs.weight(k, a, [j * dp[0], j * dp[1]]));
                    }
                }
            }
            (count, acc)
        })
        .collect();
    for (c, a) in parts {
        count += c;
        acc.merge(&a);
    }
    ResonantStratum { count, value: acc.value() }
}

/// `sum_{Delta omega = 0} eta_{K1} conj(eta_{K2}) eta_{K3}` via the fast path.
pub fn resonant_sum(lat: &Lattice, prof: &Profile, k: [i64; 2]) -> C64 {
    resonant_fast(k, &Legs::from_profile(lat, prof)).value
}

/// Level-set decomposition of the `eta` triple sum around `k`.
pub fn level_set_profile(lat: &Lattice, prof: &Profile, k: [i64; 2]) -> Vec<LevelSetSum> {
    level_table(k, &Legs::from_profile(lat, prof)).profile()
}

/// `sum_triples eta eta* eta * kernel(defect)`, with `at_zero` used on the
/// resonant stratum.
pub fn kernel_sum<F: Fn(f64) -> C64>(lat: &Lattice, prof: &Profile, k: [i64; 2], kernel: F, at_zero: C64) -> C64 {
    level_table(k, &Legs::from_profile(lat, prof)).apply_kernel(kernel, at_zero)
}

/// Riemann zeta(2).
pub const ZETA2: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0;

/// `zeta(2) S / (2 L^2 log L)`, the normalization under which the resonant
/// sum approaches the continuous resonant operator.
pub fn normalized_resonant(s: C64, l: f64) -> C64 {
    s * (ZETA2 / (2.0 * l * l * l.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_legs(l: f64, b: f64, wide: f64) -> Legs {
        let lat = Lattice::new(l, b);
        Legs::from_profile(&lat, &Profile::Constant { radius: wide, value: 1.0 })
    }

    #[test]
    fn unit_lattice_counts() {
        let lat = Lattice::new(1.0, 1.5);
        assert_eq!(enumerate_triples(&lat, [0, 0]).count(), 81);
        let res = enumerate_triples(&lat, [0, 0]).filter(|t| t.dot == 0).count();
        assert_eq!(res, 33);
        let legs = unit_legs(1.0, 1.5, 3.0);
        let fast = resonant_fast([0, 0], &legs);
        assert_eq!(fast.count, 33);
        assert!((fast.value - C64::new(33.0, 0.0)).norm() < 1e-12);
        assert_eq!(level_table([0, 0], &legs).level(0).unwrap().count, 33);
    }

    #[test]
    fn defect_identity() {
        let lat = Lattice::new(3.0, 1.0);
        let k = [1, -1];
        for t in enumerate_triples(&lat, k) {
            let sq = |n: [i64; 2]| n[0] * n[0] + n[1] * n[1];
            assert_eq!(sq(k) - sq(t.k1) + sq(t.k2) - sq(t.k3), 2 * t.dot);
            assert_eq!([t.k1[0] - t.k2[0] + t.k3[0], t.k1[1] - t.k2[1] + t.k3[1]], k);
        }
    }

    #[test]
    fn kernel_one_is_total() {
        let lat = Lattice::new(4.0, 1.0);
        let prof = Profile::Bump { radius: 1.0, center: [0.1, 0.0] };
        let legs = Legs::from_profile(&lat, &prof);
        let tab = level_table([0, 0], &legs);
        let total: C64 = enumerate_triples(&lat, [0, 0]).map(|t| legs.weight([0, 0], [t.k1[0], t.k1[1]], [t.k3[0], t.k3[1]])).sum();
        let ks = tab.apply_kernel(|_| C64::new(1.0, 0.0), C64::new(1.0, 0.0));
        assert!((ks - total).norm() < 1e-12 * total.norm());
        assert_eq!(tab.total_count(), (lat.sites().len() * lat.sites().len()) as u64);
    }
}
