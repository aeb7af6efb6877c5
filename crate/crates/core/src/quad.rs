//! Adaptive Gauss-Kronrod (7/15) quadrature for complex-valued integrands,
//! with nested helpers for 2-D and 3-D boxes.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOpts {
    fn default() -> Self {
        Self { abs_tol: 1e-8, rel_tol: 1e-6, max_intervals: 2000 }
    }
}

impl QuadOpts {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol, rel_tol, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub evals: usize,
}

/// One 15-point Kronrod panel: (kronrod value, |kronrod - gauss|).
pub fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += s * WGK[j];
        if j % 2 == 1 {
            rg += s * WG[j / 2];
        }
    }
    (rk * h, ((rk - rg) * h).norm())
}

struct Panel {
    a: f64,
    b: f64,
    val: Complex64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive integration over `[a, b]`, starting from the given
/// breakpoints (which must be sorted and inside `[a, b]`).
pub fn integrate_with_breaks<F: FnMut(f64) -> Complex64>(
    mut f: F,
    breaks: &[f64],
    opts: QuadOpts,
) -> Result<QuadResult> {
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (val, err) = gk15(&mut f, w[0], w[1]);
            evals += 15;
            heap.push(Panel { a: w[0], b: w[1], val, err });
        }
    }
    loop {
        let total: Complex64 = heap.iter().map(|p| p.val).sum();
        let err: f64 = heap.iter().map(|p| p.err).sum();
        let tol = opts.abs_tol.max(opts.rel_tol * total.norm());
        if err <= tol {
            return Ok(QuadResult { value: total, error: err, evals });
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature { achieved: err, requested: tol });
        }
        let worst = heap.pop().expect("nonempty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            return Err(Error::Quadrature { achieved: err, requested: tol });
        }
        let (v1, e1) = gk15(&mut f, worst.a, m);
        let (v2, e2) = gk15(&mut f, m, worst.b);
        evals += 30;
        heap.push(Panel { a: worst.a, b: m, val: v1, err: e1 });
        heap.push(Panel { a: m, b: worst.b, val: v2, err: e2 });
    }
}

pub fn integrate<F: FnMut(f64) -> Complex64>(f: F, a: f64, b: f64, opts: QuadOpts) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: Complex64::new(0.0, 0.0), error: 0.0, evals: 0 });
    }
    if b < a {
        let r = integrate(f, b, a, opts)?;
        return Ok(QuadResult { value: -r.value, ..r });
    }
    integrate_with_breaks(f, &[a, b], opts)
}

/// Split `[a, b]` into `n` equal initial panels.
pub fn integrate_panels<F: FnMut(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    n: usize,
    opts: QuadOpts,
) -> Result<QuadResult> {
    let n = n.max(1);
    let breaks: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let opts = QuadOpts { max_intervals: opts.max_intervals.max(4 * n), ..opts };
    integrate_with_breaks(f, &breaks, opts)
}

/// Nested 2-D integral: outer variable on `[ax, bx]`, inner on `ylim(x)`.
pub fn integrate_2d<F, Y>(f: F, ax: f64, bx: f64, ylim: Y, outer: QuadOpts, inner: QuadOpts) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> Complex64,
    Y: Fn(f64) -> (f64, f64),
{
    let failure: Cell<Option<Error>> = Cell::new(None);
    let evals = Cell::new(0usize);
    let r = integrate(
        |x| {
            let (ay, by) = ylim(x);
            match integrate(|y| f(x, y), ay, by, inner) {
                Ok(q) => {
                    evals.set(evals.get() + q.evals);
                    q.value
                }
                Err(e) => {
                    failure.set(Some(e));
                    Complex64::new(0.0, 0.0)
                }
            }
        },
        ax,
        bx,
        outer,
    )?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(QuadResult { evals: evals.get(), ..r })
}

/// Fixed composite Gauss-Kronrod rule on a uniform grid of `n` panels.
/// Nodes and weights are returned for building tensor-product oracles.
pub fn composite_nodes(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(15 * n);
    let w = (b - a) / n as f64;
    for p in 0..n {
        let lo = a + p as f64 * w;
        let c = lo + 0.5 * w;
        let h = 0.5 * w;
        out.push((c, WGK[7] * h));
        for j in 0..7 {
            out.push((c - h * XGK[j], WGK[j] * h));
            out.push((c + h * XGK[j], WGK[j] * h));
        }
    }
    out
}
