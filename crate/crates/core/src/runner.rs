//! Scenario execution: one experiment per run, CSV/JSON artifacts plus a
//! manifest holding the resolved configuration and artifact hashes.

use crate::config::{Experiment, ScenarioConfig};
use crate::continuum::{cr_operator, khat_profile, wk_operator};
use crate::duhamel::{
    decay_profile, loglog_slope, v1_exact, v1_leading, v2_exact, v2_leading, ExpansionResult, Setup, V1Plan, V2Plan,
    COARSE_2PI_POWER, V1_LEADING_2PI_POWER, V2_LEADING_2PI_POWER,
};
use crate::ensemble::{e1_antisymmetry, v1_pairing_moment, variance_mc, EnsembleSpec};
use crate::error::{Error, Result};
use crate::gaussian::{ComplexGaussian, WavePacketSum};
use crate::initial_data::{build_phi, coarse_grain, validate_regime};
use crate::lattice::{level_set_profile, LevelSetSum};
use crate::nls::{Grid, GridState};
use num_complex::Complex64 as C64;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

/// What a run produced. `failures` are tolerance checks that did not hold;
/// `violations` are regime guards reported by `validate`.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<String>,
    pub violations: Vec<String>,
}

impl Outcome {
    /// 0 success, 2 guard violation, 3 tolerance failure.
    pub fn exit_code(&self) -> i32 {
        if !self.violations.is_empty() {
            2
        } else if !self.failures.is_empty() {
            3
        } else {
            0
        }
    }
}

/// Exit code for an error that aborted a run.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Guard(_) | Error::Config { .. } | Error::Domain(_) | Error::Budget { .. } => 2,
        Error::Tolerance(_) | Error::Quadrature { .. } => 3,
        Error::Io(_) => 1,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn config_hash(cfg: &ScenarioConfig) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update(cfg.canonical_json().as_bytes());
    h.finalize().into()
}

struct Out {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Out {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.artifacts.push(Artifact { file: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        self.write(name, &bytes)
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

fn f(x: f64) -> String {
    format!("{x:e}")
}

fn site_tag(k: [i64; 2]) -> String {
    format!("{}_{}", k[0], k[1])
}

fn setup(cfg: &ScenarioConfig) -> Setup {
    let mut s = Setup::new(cfg.lattice(), &cfg.profile, cfg.params.h, cfg.params.sigma, None);
    s.guard_override = cfg.guard_override;
    s
}

fn times_or(cfg: &ScenarioConfig, default: &[f64]) -> Vec<f64> {
    if cfg.times.is_empty() {
        default.to_vec()
    } else {
        cfg.times.clone()
    }
}

/// Run the configured experiment into `out_dir` and write the manifest.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(out_dir)?;
    let mut out = Out { dir: out_dir.to_path_buf(), artifacts: Vec::new() };
    let mut outcome = Outcome::default();
    match cfg.experiment {
        Experiment::Validate => {
            let rep = validate_regime(&cfg.params);
            outcome.violations = rep.violations.clone();
            out.json("validate.json", &rep)?;
        }
        Experiment::Propagate => propagate(cfg, &mut out)?,
        Experiment::Resonances => resonances(cfg, &mut out)?,
        Experiment::CrOp => cr_op(cfg, &mut out)?,
        Experiment::WkOp => {
            let rows = cfg
                .sites
                .iter()
                .map(|&k| {
                    let v = wk_operator(&cfg.profile, cfg.lattice().point(k), cfg.quad())?;
                    Ok(vec![k[0].to_string(), k[1].to_string(), f(v)])
                })
                .collect::<Result<Vec<_>>>()?;
            out.csv("wk_op.csv", &["k1", "k2", "value"], &rows)?;
        }
        Experiment::Expansion => expansion(cfg, &mut out)?,
        Experiment::Mc => mc(cfg, &mut out)?,
        Experiment::OracleCompare => oracle(cfg, &mut out, &mut outcome)?,
        Experiment::Decay => decay(cfg, &mut out, &mut outcome)?,
    }
    outcome.artifacts = out.artifacts.clone();
    let manifest = json!({
        "manifest_version": MANIFEST_VERSION,
        "tool": "wavekin",
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": hex::encode(config_hash(cfg)),
        "config": cfg,
        "artifacts": out.artifacts,
        "exit_code": outcome.exit_code(),
        "failures": outcome.failures,
        "violations": outcome.violations,
    });
    let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    s.push('\n');
    std::fs::write(out_dir.join(MANIFEST_FILE), s)?;
    Ok(outcome)
}

fn propagate(cfg: &ScenarioConfig, out: &mut Out) -> Result<()> {
    let phi = build_phi(&cfg.lattice(), &cfg.profile, cfg.params.h, None)?;
    let lat = cfg.lattice();
    let mut rows = Vec::new();
    for t in times_or(cfg, &[0.0, 1.0]) {
        let u = phi.propagate(t);
        let n = u.norms()?;
        for &k in &cfg.sites {
            let c = coarse_grain(&u, lat.point(k), cfg.params.sigma)?;
            rows.push(vec![f(t), k[0].to_string(), k[1].to_string(), f(c.re), f(c.im), f(n.l2), f(n.grad), f(n.moment)]);
        }
    }
    out.csv("propagate.csv", &["t", "k1", "k2", "re", "im", "l2", "grad", "moment"], &rows)
}

fn level_rows(levels: &[LevelSetSum]) -> Vec<Vec<String>> {
    levels
        .iter()
        .map(|s| vec![s.xi_num.to_string(), f(s.xi_den), s.count.to_string(), f(s.value.re), f(s.value.im)])
        .collect()
}

const LEVEL_HEADER: [&str; 5] = ["xi_num", "xi_den", "count", "re", "im"];

/// Level-set profile, memoized under `WAVEKIN_CACHE` when set.
fn cached_levels(cfg: &ScenarioConfig, k: [i64; 2]) -> Result<Vec<u8>> {
    let key = sha256_hex(
        json!({"v": env!("CARGO_PKG_VERSION"), "l": cfg.params.l, "radius": cfg.lattice.radius, "profile": cfg.profile, "k": k})
            .to_string()
            .as_bytes(),
    );
    let cache = std::env::var_os("WAVEKIN_CACHE").map(PathBuf::from);
    if let Some(dir) = &cache {
        if let Ok(bytes) = std::fs::read(dir.join(format!("levels_{key}.csv"))) {
            return Ok(bytes);
        }
    }
    let levels = level_set_profile(&cfg.lattice(), &cfg.profile, k);
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(LEVEL_HEADER).map_err(io)?;
    for r in level_rows(&levels) {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    if let Some(dir) = &cache {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("levels_{key}.csv")), &bytes)?;
    }
    Ok(bytes)
}

fn resonances(cfg: &ScenarioConfig, out: &mut Out) -> Result<()> {
    for &k in &cfg.sites {
        let bytes = cached_levels(cfg, k)?;
        out.write(&format!("resonances_{}.csv", site_tag(k)), &bytes)?;
    }
    Ok(())
}

fn cr_op(cfg: &ScenarioConfig, out: &mut Out) -> Result<()> {
    let lat = cfg.lattice();
    let p = &cfg.profile;
    let mut rows = Vec::new();
    for &k in &cfg.sites {
        let v = cr_operator(p, p, p, lat.point(k), cfg.quad())?;
        rows.push(vec![k[0].to_string(), k[1].to_string(), f(v.re), f(v.im)]);
        let c = &cfg.continuum;
        if c.xi_nodes > 1 {
            let grid: Vec<f64> =
                (0..c.xi_nodes).map(|j| -c.xi_max + 2.0 * c.xi_max * j as f64 / (c.xi_nodes - 1) as f64).collect();
            let prof = khat_profile(p, lat.point(k), &grid, false, cfg.quad())?;
            let r: Vec<Vec<String>> =
                prof.xi.iter().zip(&prof.values).map(|(x, v)| vec![f(*x), f(v.re), f(v.im)]).collect();
            out.csv(&format!("khat_{}.csv", site_tag(k)), &["xi", "re", "im"], &r)?;
        }
    }
    out.csv("cr_op.csv", &["k1", "k2", "re", "im"], &rows)
}

fn expansion(cfg: &ScenarioConfig, out: &mut Out) -> Result<()> {
    let st = setup(cfg);
    let lat = cfg.lattice();
    let phi = build_phi(&lat, &cfg.profile, cfg.params.h, None)?;
    let l = cfg.params.l;
    let m = st.amps.len();
    let mut results = Vec::new();
    for t in times_or(cfg, &[1.0]) {
        let scale = t * l * l * l.ln().max(1.0) + l.powi(4);
        for &k in &cfg.sites {
            let c0 = coarse_grain(&phi, lat.point(k), cfg.params.sigma)?;
            results.push(ExpansionResult {
                k,
                t,
                order: 0,
                exact: Some(c0),
                leading: c0,
                remainder_abs: Some(0.0),
                budget_scale: scale,
                budget_used: m,
                two_pi_power: COARSE_2PI_POWER,
            });
            let lead = v1_leading(&st, k, t)?;
            let exact = if cfg.expansion.exact { Some(v1_exact(&st, k, t)?) } else { None };
            results.push(ExpansionResult {
                k,
                t,
                order: 1,
                exact,
                leading: lead,
                remainder_abs: exact.map(|e| (e - lead).norm()),
                budget_scale: scale,
                budget_used: V1Plan::new(&st, k, t).entries.len(),
                two_pi_power: V1_LEADING_2PI_POWER,
            });
            if cfg.expansion.second_order {
                let lead = v2_leading(&st, k, t)?;
                let plan = V2Plan::new(&st, k, t)?;
                let exact = if cfg.expansion.exact { Some(v2_exact(&st, k, t)?) } else { None };
                results.push(ExpansionResult {
                    k,
                    t,
                    order: 2,
                    exact,
                    leading: lead,
                    remainder_abs: exact.map(|e| (e - lead).norm()),
                    budget_scale: scale,
                    budget_used: plan.linked1.len() + plan.linked2.len(),
                    two_pi_power: V2_LEADING_2PI_POWER,
                });
            }
        }
    }
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.k[0].to_string(),
                r.k[1].to_string(),
                f(r.t),
                r.order.to_string(),
                f(r.leading.re),
                f(r.leading.im),
                r.remainder_abs.map(f).unwrap_or_default(),
                r.budget_used.to_string(),
            ]
        })
        .collect();
    out.csv("expansion.csv", &["k1", "k2", "t", "order", "re", "im", "remainder_abs", "budget_used"], &rows)?;
    out.json("expansion.json", &results)
}

fn mc(cfg: &ScenarioConfig, out: &mut Out) -> Result<()> {
    let spec = EnsembleSpec {
        lat: cfg.lattice(),
        prof: cfg.profile.clone(),
        params: cfg.params,
        t: times_or(cfg, &[1.0])[0],
        sites: cfg.sites.clone(),
        include_v2: cfg.mc.include_v2,
        regime_override: cfg.guard_override,
    };
    let report = variance_mc(&spec, cfg.mc.samples, cfg.seed)?;
    let mut pairing = Vec::new();
    let mut anti = Vec::new();
    for &k in &cfg.sites {
        pairing.push(json!({"k": k, "v1_second_moment": v1_pairing_moment(&spec, k)?}));
        if cfg.mc.antisymmetry {
            anti.push(e1_antisymmetry(&spec, k, cfg.mc.samples, cfg.seed)?);
        }
    }
    out.json("ensemble.json", &json!({"report": report, "pairing": pairing, "antisymmetry": anti}))
}

fn oracle(cfg: &ScenarioConfig, out: &mut Out, outcome: &mut Outcome) -> Result<()> {
    let o = &cfg.oracle;
    let p = &cfg.params;
    let lat = cfg.lattice();
    let st = setup(cfg);
    let t = times_or(cfg, &[1.0])[0];
    let phi = build_phi(&lat, &cfg.profile, p.h, None)?;
    let grid = Grid::new(o.n, o.side.unwrap_or(16.0 / p.h));
    let pts: Vec<[f64; 2]> = cfg.sites.iter().map(|&k| lat.point(k)).collect();
    let mut base = Vec::new();
    for (&k, &kp) in cfg.sites.iter().zip(&pts) {
        base.push((coarse_grain(&phi, kp, p.sigma)?, v1_exact(&st, k, t)?));
    }
    let hash = config_hash(cfg);
    let mut rows = Vec::new();
    let mut resid: Vec<Vec<(f64, f64)>> = vec![Vec::new(); pts.len()];
    for (j, &eps) in o.eps_ladder.iter().enumerate() {
        let mut gs = GridState::from_packet(grid.clone(), &phi.scale(C64::new(eps, 0.0)), o.dt, o.lambda);
        gs.evolve(t)?;
        let obs = gs.observe(&pts, p.sigma)?;
        for (s, &k) in cfg.sites.iter().enumerate() {
            let (c0, v1) = base[s];
            let r = obs[s] - c0 * eps + C64::i() * v1 * (o.lambda * eps.powi(3));
            resid[s].push((eps, r.norm()));
            rows.push(vec![f(eps), k[0].to_string(), k[1].to_string(), f(obs[s].re), f(obs[s].im), f(r.norm())]);
        }
        if o.checkpoint {
            let mut buf = Vec::new();
            gs.write_checkpoint(&mut buf, &hash)?;
            out.write(&format!("state_{j}.wkck"), &buf)?;
        }
    }
    out.csv("oracle.csv", &["eps", "k1", "k2", "obs_re", "obs_im", "residual"], &rows)?;
    let mut summary = Vec::new();
    for (s, &k) in cfg.sites.iter().enumerate() {
        let slope = if resid[s].len() >= 2 { loglog_slope(&resid[s]) } else { f64::NAN };
        if let Some([lo, hi]) = o.slope_range {
            if !(lo..=hi).contains(&slope) {
                outcome.failures.push(format!("residual slope {slope:.4} at site {k:?} outside [{lo}, {hi}]"));
            }
        }
        summary.push(json!({"k": k, "coarse": base[s].0, "v1_exact": base[s].1, "slope": slope}));
    }
    out.json("oracle.json", &summary)
}

fn decay(cfg: &ScenarioConfig, out: &mut Out, outcome: &mut Outcome) -> Result<()> {
    let d = &cfg.decay;
    let g = ComplexGaussian::new(C64::new(1.0, 0.0), C64::new(d.width, 0.0), d.shift.map(|x| C64::new(x, 0.0)));
    let w = WavePacketSum::new(vec![g]);
    let default: Vec<f64> = (0..=8).map(|i| 10f64.powf(1.0 + 2.0 * i as f64 / 8.0)).collect();
    let times = times_or(cfg, &default);
    let pts = decay_profile(&w, &w, &w, d.k, &times)?;
    let slope = loglog_slope(&pts);
    if let Some([lo, hi]) = d.slope_range {
        if !(lo..=hi).contains(&slope) {
            outcome.failures.push(format!("decay slope {slope:.4} outside [{lo}, {hi}]"));
        }
    }
    let rows: Vec<Vec<String>> = pts.iter().map(|(t, a)| vec![f(*t), f(*a)]).collect();
    out.csv("decay.csv", &["t", "abs"], &rows)?;
    out.json("decay.json", &json!({"k": d.k, "slope": slope}))
}
