//! Scenario files, convergence sweeps toward the classical distance, and a
//! quick self-test table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{closest_approach_oracle, lorentz_distance, TimelikeLine};
use crate::distance::{PairContext, ParticleSpec, DEFAULT_UNCERTAINTY_CAP};
use crate::error::{DistanceError, ExperimentError};
use crate::operators::{algebra_checks, expectation_report, oracle, OracleSource};
use crate::sphere::{swsh_value, SphereGrid, SwshIndex};
use crate::states::{random_smooth_state, GaussianProfile};
use crate::tensor::{dot, LorentzTransform, PoincareTransform};

fn one() -> f64 {
    1.0
}

fn default_cap() -> f64 {
    DEFAULT_UNCERTAINTY_CAP
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonRule {
    Fixed(f64),
    /// eps = s^(-alpha)
    Power(f64),
}

impl Default for EpsilonRule {
    fn default() -> Self {
        EpsilonRule::Power(0.25)
    }
}

impl EpsilonRule {
    pub fn eps(&self, s: f64) -> f64 {
        match *self {
            EpsilonRule::Fixed(e) => e,
            EpsilonRule::Power(a) => s.powf(-a),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisAngle {
    pub axis: [f64; 3],
    pub angle: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    #[serde(default)]
    pub rapidity: [f64; 3],
    #[serde(default)]
    pub rotation: Option<AxisAngle>,
    #[serde(default)]
    pub translation: [f64; 4],
}

impl LineConfig {
    /// Rotation first, then the boost.
    pub fn frame(&self) -> PoincareTransform {
        let mut l = LorentzTransform::boost(self.rapidity);
        if let Some(r) = self.rotation {
            l = l.compose(&LorentzTransform::rotation(r.axis, r.angle));
        }
        PoincareTransform::new(l, self.translation)
    }

    pub fn line(&self) -> TimelikeLine {
        let f = self.frame();
        TimelikeLine::new(f.lorentz, f.translation)
    }
}

/// Accepted for compatibility with grid-based evaluators; the symbolic
/// pipeline needs neither a band limit nor a radial grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    #[serde(default = "default_margin")]
    pub l_margin: u32,
    #[serde(default = "default_tol")]
    pub radial_rel_tol: f64,
}

fn default_margin() -> u32 {
    8
}

fn default_tol() -> f64 {
    1e-12
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { l_margin: default_margin(), radial_rel_tol: default_tol() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "one")]
    pub hbar: f64,
    /// mu = M s at every sweep point.
    #[serde(default = "one")]
    pub mass_scale: f64,
    /// Values of 2s.
    pub spins: Vec<u32>,
    #[serde(default)]
    pub epsilon_rule: EpsilonRule,
    pub lines: Vec<LineConfig>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    /// Largest s for which Delta A is attempted.
    #[serde(default = "default_cap")]
    pub uncertainty_cap: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let mut errs = Vec::new();
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.hbar) {
            errs.push(format!("hbar must be positive, got {}", self.hbar));
        }
        if !pos(self.mass_scale) {
            errs.push(format!("mass_scale must be positive, got {}", self.mass_scale));
        }
        if self.spins.is_empty() {
            errs.push("spins is empty".into());
        }
        if self.spins.contains(&0) {
            errs.push("spin 0 gives zero mass under mu = M s".into());
        }
        if self.spins.windows(2).any(|w| w[1] <= w[0]) {
            errs.push("spins not ascending".into());
        }
        match self.epsilon_rule {
            EpsilonRule::Fixed(e) if !pos(e) => errs.push(format!("fixed epsilon must be positive, got {e}")),
            EpsilonRule::Power(a) if !a.is_finite() => errs.push(format!("epsilon power must be finite, got {a}")),
            _ => {}
        }
        if !(self.uncertainty_cap >= 0.0) {
            errs.push(format!("uncertainty_cap must be non-negative, got {}", self.uncertainty_cap));
        }
        if !pos(self.quadrature.radial_rel_tol) {
            errs.push("radial_rel_tol must be positive".into());
        }
        if self.lines.len() < 2 {
            errs.push(format!("at least 2 lines required, got {}", self.lines.len()));
        }
        let mut finite = true;
        for (n, l) in self.lines.iter().enumerate() {
            let vals = l.rapidity.iter().chain(&l.translation).chain(l.rotation.iter().flat_map(|r| r.axis.iter().chain([&r.angle])));
            if vals.into_iter().any(|v| !v.is_finite()) {
                errs.push(format!("line {n} has non-finite entries"));
                finite = false;
            }
            if let Some(r) = l.rotation {
                if r.axis.iter().all(|&v| v == 0.0) {
                    errs.push(format!("line {n} has a zero rotation axis"));
                    finite = false;
                }
            }
        }
        if finite {
            for i in 0..self.lines.len() {
                for j in i + 1..self.lines.len() {
                    let c = dot(&self.lines[i].line().tangent(), &self.lines[j].line().tangent());
                    if c * c - 1.0 <= 1e-12 {
                        errs.push(format!("parallel tangents ({i},{j})"));
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ExperimentError::Validation(errs))
        }
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.lines.len();
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    }

    pub fn particle(&self, two_s: u32, line: usize) -> Result<ParticleSpec, DistanceError> {
        let s = two_s as f64 / 2.0;
        ParticleSpec::new(two_s, self.mass_scale * s, self.epsilon_rule.eps(s), self.lines[line].frame(), self.hbar)
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ExperimentError> {
    let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

/// One (s, pair) point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub two_s: u32,
    pub s: f64,
    pub i: usize,
    pub j: usize,
    pub d_classical: f64,
    pub d_quantum: Option<f64>,
    pub d2: Option<f64>,
    /// |d - D| / D; for intersecting lines this is None and d is the quantum floor.
    pub rel_error: Option<f64>,
    pub delta_d2: Option<f64>,
    pub delta_a_over_a: Option<f64>,
    pub delta_b_over_b: Option<f64>,
    pub imag_residual: Option<f64>,
    pub wall_ms: f64,
    pub note: Option<String>,
    pub failed: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub i: usize,
    pub j: usize,
    pub d_classical: f64,
    pub intersecting: bool,
    /// alpha in rel_error ~ c s^(-alpha), least squares in log-log.
    pub fit_alpha: Option<f64>,
    pub fit_prefactor: Option<f64>,
    pub rel_error_decreasing: bool,
    pub delta_b_decreasing: bool,
    /// None when any Delta A in the series is unavailable.
    pub delta_a_decreasing: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub summaries: Vec<PairSummary>,
}

impl ConvergenceReport {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.failed.is_some()).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub uncertainties: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { uncertainties: true }
    }
}

/// Lines closer than this count as intersecting.
pub const INTERSECT_TOL: f64 = 1e-9;

fn evaluate_row(cfg: &ScenarioConfig, two_s: u32, i: usize, j: usize, opts: RunOptions) -> ConvergenceRow {
    let start = Instant::now();
    let s = two_s as f64 / 2.0;
    let d_classical = lorentz_distance(&cfg.lines[i].line(), &cfg.lines[j].line()).unwrap_or(f64::NAN);
    let intersecting = d_classical < INTERSECT_TOL;
    let mut row = ConvergenceRow {
        two_s,
        s,
        i,
        j,
        d_classical,
        d_quantum: None,
        d2: None,
        rel_error: None,
        delta_d2: None,
        delta_a_over_a: None,
        delta_b_over_b: None,
        imag_residual: None,
        wall_ms: 0.0,
        note: intersecting.then(|| "intersecting; comparing d to quantum floor".to_string()),
        failed: None,
    };
    let result = (|| -> Result<(), DistanceError> {
        let ctx = PairContext::new(&cfg.particle(two_s, i)?, &cfg.particle(two_s, j)?)?;
        let d = ctx.distance()?;
        row.d_quantum = Some(d.d);
        row.d2 = Some(d.d2);
        row.imag_residual = Some(d.imag_residual);
        if !intersecting {
            row.rel_error = Some((d.d - d_classical).abs() / d_classical);
        }
        if opts.uncertainties {
            let u = ctx.uncertainty(cfg.uncertainty_cap)?;
            row.delta_b_over_b = Some(u.delta_b_over_b);
            row.delta_a_over_a = u.delta_a_over_a;
            row.delta_d2 = u.delta_d2;
            if let Some(n) = u.a_note {
                let prev = row.note.take();
                row.note = Some(match prev {
                    Some(p) => format!("{p}; delta A unavailable: {n}"),
                    None => format!("delta A unavailable: {n}"),
                });
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.failed = Some(e.to_string());
    }
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

/// Least-squares fit of y = c x^(-alpha); needs two or more positive points.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((-slope, (my - slope * mx).exp()))
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn summarize(cfg: &ScenarioConfig, rows: &[ConvergenceRow]) -> Vec<PairSummary> {
    cfg.pairs()
        .into_iter()
        .map(|(i, j)| {
            let series: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.i == i && r.j == j).collect();
            let d_classical = series.first().map_or(f64::NAN, |r| r.d_classical);
            let intersecting = d_classical < INTERSECT_TOL;
            let all = |f: fn(&ConvergenceRow) -> Option<f64>| -> Option<Vec<f64>> { series.iter().map(|r| f(r)).collect() };
            let rel = all(|r| r.rel_error);
            let (fit_alpha, fit_prefactor) = match &rel {
                Some(v) => {
                    let xs: Vec<f64> = series.iter().map(|r| r.s).collect();
                    power_law_fit(&xs, v).map_or((None, None), |(a, c)| (Some(a), Some(c)))
                }
                None => (None, None),
            };
            let floor = all(|r| r.d2.map(f64::abs));
            let rel_error_decreasing = if intersecting {
                floor.as_deref().is_some_and(strictly_decreasing)
            } else {
                rel.as_deref().is_some_and(strictly_decreasing)
            };
            PairSummary {
                i,
                j,
                d_classical,
                intersecting,
                fit_alpha,
                fit_prefactor,
                rel_error_decreasing,
                delta_b_decreasing: all(|r| r.delta_b_over_b).as_deref().is_some_and(strictly_decreasing),
                delta_a_decreasing: all(|r| r.delta_a_over_a).map(|v| strictly_decreasing(&v)),
            }
        })
        .collect()
}

/// Evaluate every (s, pair) of a validated config; rows come back ordered by
/// s and then by pair, whatever the thread count.
pub fn run_convergence(cfg: &ScenarioConfig, opts: RunOptions) -> Result<ConvergenceReport, ExperimentError> {
    cfg.validate()?;
    let jobs: Vec<(u32, usize, usize)> =
        cfg.spins.iter().flat_map(|&s| cfg.pairs().into_iter().map(move |(i, j)| (s, i, j))).collect();
    let rows: Vec<ConvergenceRow> = jobs.par_iter().map(|&(s, i, j)| evaluate_row(cfg, s, i, j, opts)).collect();
    let summaries = summarize(cfg, &rows);
    Ok(ConvergenceReport { rows, summaries })
}

/// C-style %.17g.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..17).contains(&exp) {
        format!("{}e{}{:02}", trim(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim(&format!("{:.*}", (16 - exp) as usize, x))
    }
}

pub const CSV_HEADER: &str = "s,i,j,D,d,rel_error,delta_d2,deltaB_over_B,imag_residual,wall_ms";

/// CSV text; unavailable values are empty fields.
pub fn rows_to_csv(rows: &[ConvergenceRow]) -> String {
    let opt = |v: Option<f64>| v.map(format_g17).unwrap_or_default();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            format_g17(r.s),
            r.i,
            r.j,
            format_g17(r.d_classical),
            opt(r.d_quantum),
            opt(r.rel_error),
            opt(r.delta_d2),
            opt(r.delta_b_over_b),
            opt(r.imag_residual),
            format_g17(r.wall_ms)
        );
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, text).map_err(|source| ExperimentError::Io { path: path.display().to_string(), source })
}

pub fn write_csv(rows: &[ConvergenceRow], path: &Path) -> Result<(), ExperimentError> {
    write_file(path, &rows_to_csv(rows))
}

pub fn sidecar_json(cfg: &ScenarioConfig, report: &ConvergenceReport) -> serde_json::Value {
    serde_json::json!({
        "config": cfg,
        "library_version": env!("CARGO_PKG_VERSION"),
        "summaries": report.summaries,
        "failed_rows": report.failed_rows(),
        "notes": report.rows.iter().filter_map(|r| r.note.as_ref().map(|n| serde_json::json!({"s": r.s, "i": r.i, "j": r.j, "note": n}))).collect::<Vec<_>>(),
    })
}

pub fn write_json(cfg: &ScenarioConfig, report: &ConvergenceReport, path: &Path) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(&sidecar_json(cfg, report)).expect("json values serialize");
    write_file(path, &text)
}

/// Orthonormality, conjugation and ladder checks of the harmonics up to lmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwshCheck {
    pub lmax: u32,
    pub orthonormality: f64,
    pub conjugation: f64,
    pub count: usize,
}

/// Largest deviations from orthonormality (same sigma, all j and m up to lmax)
/// and from conj(sY_jm) = (-1)^(2j+m+sigma) (-s)Y_{j,-m}.
/// Only spin weights with |sigma| <= sigma_max are visited.
pub fn swsh_check(lmax: u32, sigma_max: u32) -> SwshCheck {
    let two_l = 2 * lmax as i32;
    let two_smax = two_l.min(2 * sigma_max as i32);
    let grid = SphereGrid::new(2 * lmax as usize + 2);
    let tasks: Vec<i32> = (-two_smax..=two_smax).collect();
    let results: Vec<(f64, f64, usize)> = tasks
        .par_iter()
        .map(|&two_sigma| {
            let mut fields: Vec<((i32, i32), Vec<Complex64>)> = Vec::new();
            let mut conj_err: f64 = 0.0;
            for two_j in (two_sigma.abs()..=two_l).step_by(2) {
                for two_m in (-two_j..=two_j).step_by(2) {
                    let idx = SwshIndex::new(two_sigma, two_j, two_m).expect("valid index");
                    let vals: Vec<Complex64> = (0..grid.len())
                        .map(|n| {
                            let (t, f) = grid.angles(n);
                            swsh_value(idx, t, f)
                        })
                        .collect();
                    let mirror = SwshIndex::new(-two_sigma, two_j, -two_m).expect("valid index");
                    let sign = if (two_j + (two_m + two_sigma) / 2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    for &(t, f) in &[(0.3, 0.2), (1.7, 2.9)] {
                        let e = (swsh_value(idx, t, f).conj() - swsh_value(mirror, t, f) * sign).norm();
                        conj_err = conj_err.max(e);
                    }
                    fields.push(((two_j, two_m), vals));
                }
            }
            let mut orth: f64 = 0.0;
            for a in 0..fields.len() {
                for b in a..fields.len() {
                    let v = grid.inner(&fields[a].1, &fields[b].1);
                    let want = if a == b { 1.0 } else { 0.0 };
                    orth = orth.max((v - want).norm());
                }
            }
            (orth, conj_err, fields.len())
        })
        .collect();
    SwshCheck {
        lmax,
        orthonormality: results.iter().map(|r| r.0).fold(0.0, f64::max),
        conjugation: results.iter().map(|r| r.1).fold(0.0, f64::max),
        count: results.iter().map(|r| r.2).sum(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> SelfCheck {
    SelfCheck { name: name.into(), passed, detail }
}

fn check_result(name: &str, r: Result<(bool, String), String>) -> SelfCheck {
    match r {
        Ok((p, d)) => check(name, p, d),
        Err(e) => check(name, false, e),
    }
}

/// A fast batch of module checks at their documented tolerances.
pub fn selftest_report() -> Vec<SelfCheck> {
    let mut out = Vec::new();

    let h = swsh_check(4, 4);
    out.push(check(
        "harmonics orthonormality (j <= 4)",
        h.orthonormality < 1e-12,
        format!("max deviation {:.3e} over {} harmonics", h.orthonormality, h.count),
    ));
    out.push(check("harmonics conjugation rule", h.conjugation < 1e-12, format!("max deviation {:.3e}", h.conjugation)));

    out.push(check_result(
        "commutators on random states (s <= 3)",
        (|| {
            let g = GaussianProfile::new(1.3, 0.6).map_err(|e| e.to_string())?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
            let mut worst: f64 = 0.0;
            for n in 0..5 {
                let two_s = rng.gen_range(0..=6u32);
                let st = random_smooth_state(two_s, 3, g, 1.0, &mut rng);
                worst = worst.max(algebra_checks(&st).map_err(|e| format!("state {n}: {e}"))?.max());
            }
            Ok((worst < 1e-8, format!("max relative residual {worst:.3e}")))
        })(),
    ));

    out.push(check_result(
        "state moments vs closed forms",
        (|| {
            let mut worst: f64 = 0.0;
            for two_s in [4u32, 6, 8] {
                let s = two_s as f64 / 2.0;
                let g = GaussianProfile::new(1.5, s.powf(-0.25)).map_err(|e| e.to_string())?;
                let st = crate::states::QState::com_state(two_s, two_s as i32, g, 1.0, crate::states::Chirality::Symmetric)
                    .map_err(|e| e.to_string())?;
                let n = expectation_report(&st).map_err(|e| e.to_string())?;
                let o = oracle(two_s, two_s as i32, g.mu, g.eps, 1.0, OracleSource::Corrected).map_err(|e| e.to_string())?;
                worst = worst.max(((n.var_j[2][3] - o.var_j[2][3]) / o.var_j[2][3]).abs());
                worst = worst.max(((n.j[1][2] - o.j[1][2]) / o.j[1][2]).abs());
                worst = worst.max(((n.s_sq - o.s_sq) / o.s_sq).abs());
            }
            Ok((worst < 1e-8, format!("max relative deviation {worst:.3e}")))
        })(),
    ));

    out.push(check_result(
        "lorentz distance vs closest approach",
        (|| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
            let mut worst: f64 = 0.0;
            let mut count = 0;
            while count < 20 {
                let mut line = || {
                    LineConfig {
                        rapidity: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                        rotation: None,
                        translation: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
                    }
                    .line()
                };
                let (a, b) = (line(), line());
                let (Ok(d), Ok((_, _, o))) = (lorentz_distance(&a, &b), closest_approach_oracle(&a, &b)) else { continue };
                if o > 1e-3 {
                    worst = worst.max((d - o).abs() / o);
                    count += 1;
                }
            }
            Ok((worst < 1e-12, format!("max relative deviation {worst:.3e}")))
        })(),
    ));

    out.push(check_result(
        "empirical distance symmetry and covariance",
        (|| {
            let cfg = canonical_scenario(vec![2]);
            let e = |x: DistanceError| x.to_string();
            let (a, b) = (cfg.particle(2, 0).map_err(e)?, cfg.particle(2, 1).map_err(e)?);
            let d = crate::distance::empirical_distance(&a, &b).map_err(e)?;
            let r = crate::distance::empirical_distance(&b, &a).map_err(e)?;
            let g = PoincareTransform::new(LorentzTransform::boost([0.3, -0.2, 0.1]), [1.0, 0.5, 0.0, -2.0]);
            let c = crate::distance::empirical_distance(&a.with_frame(g.compose(&a.frame)), &b.with_frame(g.compose(&b.frame))).map_err(e)?;
            let worst = ((d.d2 - r.d2) / d.d2).abs().max(((d.d2 - c.d2) / d.d2).abs());
            Ok((worst < 1e-8, format!("max relative deviation {worst:.3e}")))
        })(),
    ));

    out.push(check_result(
        "convergence toward the classical distance",
        (|| {
            let cfg = canonical_scenario(vec![8, 16, 32]);
            let rep = run_convergence(&cfg, RunOptions { uncertainties: false }).map_err(|e| e.to_string())?;
            let rel: Vec<f64> = rep.rows.iter().filter_map(|r| r.rel_error).collect();
            Ok((rel.len() == 3 && strictly_decreasing(&rel), format!("rel errors {:?}", rel.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>())))
        })(),
    ));
    out
}

/// Rest line and a line boosted along z with rapidity 1 and offset 3 along x.
pub fn canonical_scenario(spins: Vec<u32>) -> ScenarioConfig {
    ScenarioConfig {
        hbar: 1.0,
        mass_scale: 1.0,
        spins,
        epsilon_rule: EpsilonRule::default(),
        lines: vec![
            LineConfig { rapidity: [0.0; 3], rotation: None, translation: [0.0; 4] },
            LineConfig { rapidity: [0.0, 0.0, 1.0], rotation: None, translation: [0.0, 3.0, 0.0, 0.0] },
        ],
        quadrature: QuadratureConfig::default(),
        uncertainty_cap: DEFAULT_UNCERTAINTY_CAP,
    }
}

/// Pass/fail counts by name, in report order.
pub fn selftest_table(checks: &[SelfCheck]) -> String {
    let mut out = String::new();
    let mut tally: BTreeMap<bool, usize> = BTreeMap::new();
    for c in checks {
        *tally.entry(c.passed).or_insert(0) += 1;
        let _ = writeln!(out, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let _ = writeln!(out, "{} passed, {} failed", tally.get(&true).unwrap_or(&0), tally.get(&false).unwrap_or(&0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_c_style() {
        assert_eq!(format_g17(3.0), "3");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
        assert_eq!(format_g17(1e-7), "9.9999999999999995e-08");
        assert_eq!(format_g17(123456.5), "123456.5");
        assert_eq!(format_g17(1e20), "1e+20");
        assert_eq!(format_g17(-2.5e-3), "-0.0025000000000000001");
    }

    #[test]
    fn fit_recovers_exponent() {
        let xs = [4.0, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 2.0 * x.powf(-0.5)).collect();
        let (a, c) = power_law_fit(&xs, &ys).unwrap();
        assert!((a - 0.5).abs() < 1e-12 && (c - 2.0).abs() < 1e-12);
    }
}
