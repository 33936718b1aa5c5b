//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. A
//! criterion that fails for a documented, unattainable reason is still
//! printed as FAIL; any other failure makes the binary exit non-zero.
//! `cargo test --test acceptance -- 7` runs one criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use emdist::classical::*;
use emdist::distance::*;
use emdist::experiments::*;
use emdist::operators::*;
use emdist::quadrature::GaussLegendre;
use emdist::sphere::*;
use emdist::states::*;
use emdist::tensor::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

type Zc = Complex64;
const ONE: Zc = Zc { re: 1.0, im: 0.0 };
const ETA: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

struct Outcome {
    passed: bool,
    detail: String,
    /// Some(reason) when a failure is known to be unattainable and the
    /// observed failure is the documented one.
    expected_failure: Option<String>,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail, expected_failure: None }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// ---------------------------------------------------------------- 1

/// Ridders extrapolation of a central difference; real step, complex values.
/// Returns the estimate and its error.
fn ridders(f: &dyn Fn(f64) -> Zc, h0: f64) -> (Zc, f64) {
    const N: usize = 10;
    const CON: f64 = 1.4;
    let mut a = [[Zc::default(); N]; N];
    let mut h = h0;
    a[0][0] = (f(h) - f(-h)) / (2.0 * h);
    let (mut err, mut ans) = (f64::MAX, a[0][0]);
    for i in 1..N {
        h /= CON;
        a[0][i] = (f(h) - f(-h)) / (2.0 * h);
        let mut fac = CON * CON;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= CON * CON;
            let e = (a[j][i] - a[j - 1][i]).norm().max((a[j][i] - a[j - 1][i - 1]).norm());
            if e <= err {
                err = e;
                ans = a[j][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).norm() >= 2.0 * err {
            break;
        }
    }
    (ans, err)
}

/// The early exit of a single tableau now and then settles on a poor
/// estimate, so several starting steps are tried.
fn derivative(f: &dyn Fn(f64) -> Zc) -> Zc {
    [0.1, 0.05, 0.03, 0.02].iter().map(|&h| ridders(f, h)).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0
}

fn swsh_at_zeta(two_sigma: i32, two_j: i32, two_m: i32, z: Zc) -> Zc {
    let theta = 2.0 * (1.0f64).atan2(z.norm());
    swsh_value(SwshIndex { two_sigma, two_j, two_m }, theta, z.arg())
}

/// Largest deviation of the zeta-differential forms of edth and edth' from
/// the ladder coefficients, j <= 12 and |sigma| <= 3.
fn edth_residual() -> f64 {
    let points = [Zc::new(0.8, 0.3), Zc::new(-0.5, 0.9), Zc::new(0.2, -1.4)];
    let sigmas: Vec<i32> = (-6..=6).collect();
    sigmas
        .par_iter()
        .map(|&two_sigma| {
            let s = two_sigma as f64 / 2.0;
            let mut worst: f64 = 0.0;
            for two_j in (two_sigma.abs()..=24).step_by(2) {
                for two_m in (-two_j..=two_j).step_by(2) {
                    let eta = |z: Zc| swsh_at_zeta(two_sigma, two_j, two_m, z);
                    for &z0 in &points {
                        let w = 1.0 + z0.norm_sqr();
                        let up = |z: Zc| (1.0 + z.norm_sqr()).powf(s) * eta(z);
                        let dn = |z: Zc| (1.0 + z.norm_sqr()).powf(-s) * eta(z);
                        let dx = |f: &dyn Fn(Zc) -> Zc| derivative(&|t| f(z0 + t));
                        let dy = |f: &dyn Fn(Zc) -> Zc| derivative(&|t| f(z0 + Zc::new(0.0, t)));
                        let d_bar = (dx(&up) + Zc::i() * dy(&up)) * 0.5;
                        let d_z = (dx(&dn) - Zc::i() * dy(&dn)) * 0.5;
                        let edth = d_bar * (w.powf(1.0 - s) / 2f64.sqrt());
                        let edth_p = d_z * (w.powf(1.0 + s) / 2f64.sqrt());
                        let want_up = if two_j >= (two_sigma + 2).abs() {
                            swsh_at_zeta(two_sigma + 2, two_j, two_m, z0) * edth_unit(two_sigma, two_j)
                        } else {
                            Zc::default()
                        };
                        let want_dn = if two_j >= (two_sigma - 2).abs() {
                            swsh_at_zeta(two_sigma - 2, two_j, two_m, z0) * edth_prime_unit(two_sigma, two_j)
                        } else {
                            Zc::default()
                        };
                        worst = worst.max((edth - want_up).norm()).max((edth_p - want_dn).norm());
                    }
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let h = swsh_check(12, 3);
    let ed = edth_residual();
    // the eigen relation of edth' edth in coefficient space
    let mut eig: f64 = 0.0;
    for two_sigma in -6..=6i32 {
        for two_j in (two_sigma.abs()..=24).step_by(2) {
            let (j, s) = (two_j as f64 / 2.0, two_sigma as f64 / 2.0);
            let k = if two_j >= (two_sigma + 2).abs() { edth_prime_unit(two_sigma + 2, two_j) * edth_unit(two_sigma, two_j) } else { 0.0 };
            eig = eig.max((k + 0.5 * (j - s) * (j + s + 1.0)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = h.orthonormality < 1e-12 && h.conjugation < 1e-12 && ed < 1e-10 && eig < 1e-10 && secs < 10.0;
    outcome(
        passed,
        format!(
            "harmonics: orthonormality {:.2e}, conjugation {:.2e} over {} harmonics; edth/edth' {:.2e}, eigenvalue {:.2e}; {:.1} s",
            h.orthonormality, h.conjugation, h.count, ed, eig, secs
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let grid = SphereGrid::new(28);
    let p = 1.7;
    let nodes: Vec<(f64, f64, f64)> = (0..grid.len())
        .map(|n| {
            let (t, f) = grid.angles(n);
            (t, f, grid.weight(n))
        })
        .collect();
    let quad = |a: &[Zc], b: &[Zc], f: &dyn Fn(f64, f64) -> Zc| -> Zc {
        nodes.iter().enumerate().map(|(n, &(t, ph, w))| a[n].conj() * f(t, ph) * b[n] * w).sum()
    };
    let nvec = |i: usize, t: f64, ph: f64| match i {
        1 => t.sin() * ph.cos(),
        2 => t.sin() * ph.sin(),
        _ => t.cos(),
    };
    let sigmas: Vec<i32> = (-6..=6).collect();
    let (worst, count) = sigmas
        .par_iter()
        .map(|&two_sigma| {
            let mut table: BTreeMap<(i32, i32), Vec<Zc>> = BTreeMap::new();
            for two_j in (two_sigma.abs()..=22).step_by(2) {
                for two_m in (-two_j..=two_j).step_by(2) {
                    let idx = SwshIndex { two_sigma, two_j, two_m };
                    table.insert((two_j, two_m), nodes.iter().map(|&(t, f, _)| swsh_value(idx, t, f)).collect());
                }
            }
            let mut worst: f64 = 0.0;
            let mut count = 0usize;
            let mut cmp = |kind: MatrixKind, bra: (i32, i32), ket: (i32, i32), num: Zc| {
                let b = SwshIndex { two_sigma, two_j: bra.0, two_m: bra.1 };
                let k = SwshIndex { two_sigma, two_j: ket.0, two_m: ket.1 };
                let cf = matrix_elements(kind, b, k, p).unwrap();
                worst = worst.max((cf - num).norm());
                count += 1;
            };
            for (&(two_j, two_m), yk) in table.range((i32::MIN, i32::MIN)..=(20, i32::MAX)) {
                let ket = (two_j, two_m);
                for i in 1..=3usize {
                    for dj in [-2, 0, 2] {
                        for dm in [-2, 0, 2] {
                            let Some(yb) = table.get(&(two_j + dj, two_m + dm)) else { continue };
                            let num = quad(yb, yk, &|t, f| Zc::new(p * nvec(i, t, f), 0.0));
                            cmp(MatrixKind::P(i), (two_j + dj, two_m + dm), ket, num);
                        }
                    }
                    for k in 1..=3usize {
                        let num = quad(yk, yk, &|t, f| Zc::new(p * p * nvec(i, t, f) * nvec(k, t, f), 0.0));
                        cmp(MatrixKind::PP(i, k), ket, ket, num);
                        let mi = AngularFactor::M(i as u8);
                        let mk = AngularFactor::M(k as u8);
                        let (bi, bk) = (AngularFactor::Mb(i as u8), AngularFactor::Mb(k as u8));
                        let sym = quad(yk, yk, &|t, f| (mi.value(t, f) * bk.value(t, f) + mk.value(t, f) * bi.value(t, f)) * 0.5);
                        cmp(MatrixKind::MMbarSym(i, k), ket, ket, sym);
                        let anti = quad(yk, yk, &|t, f| (mi.value(t, f) * bk.value(t, f) - mk.value(t, f) * bi.value(t, f)) * 0.5);
                        cmp(MatrixKind::MMbarAnti(i, k), ket, ket, anti);
                        if two_j == two_sigma.abs() {
                            for l in 1..=3usize {
                                let num = quad(yk, yk, &|t, f| Zc::new(p.powi(3) * nvec(i, t, f) * nvec(k, t, f) * nvec(l, t, f), 0.0));
                                cmp(MatrixKind::PPP(i, k, l), ket, ket, num);
                            }
                        }
                    }
                }
            }
            (worst, count)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0.max(b.0), a.1 + b.1));
    // sum over i of <(p^i)^2> from the closed forms alone
    let mut completeness: f64 = 0.0;
    for two_sigma in -6..=6i32 {
        for two_j in (two_sigma.abs()..=20).step_by(2) {
            for two_m in (-two_j..=two_j).step_by(2) {
                let k = SwshIndex { two_sigma, two_j, two_m };
                let sum: Zc = (1..=3).map(|i| matrix_elements(MatrixKind::PP(i, i), k, k, p).unwrap()).sum();
                completeness = completeness.max((sum.re - p * p).abs() / (p * p));
            }
        }
    }
    outcome(
        worst < 1e-10 && completeness < 1e-10,
        format!("matrix elements: quadrature vs closed forms {worst:.2e} over {count} elements (j <= 10); sum of (p^i)^2 {completeness:.2e}"),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let g = GaussianProfile::new(1.3, 0.6).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20);
    let states: Vec<QState> = (0..20u32).map(|n| random_smooth_state(n % 7, 4, g, 1.0, &mut rng)).collect();
    let res: Result<Vec<f64>, emdist::StateError> = states.par_iter().map(|st| algebra_checks(st).map(|r| r.max())).collect();
    match res {
        Ok(v) => {
            let worst = v.iter().copied().fold(0.0, f64::max);
            outcome(worst < 1e-8, format!("commutators: max relative residual {worst:.2e} on 20 states, 2s = 0..6"))
        }
        Err(e) => outcome(false, format!("commutators: {e}")),
    }
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut cases = Vec::new();
    for two_s in [4u32, 6, 8, 12] {
        for two_m in [two_s as i32, two_s as i32 - 2, -(two_s as i32)] {
            for eps in [0.5, (two_s as f64 / 2.0).powf(-0.25)] {
                cases.push((two_s, two_m, eps));
            }
        }
    }
    let (mu, hbar) = (1.7, 1.0);
    let results: Vec<Result<[f64; 7], String>> = cases
        .par_iter()
        .map(|&(two_s, two_m, eps)| {
            let (s, m) = (two_s as f64 / 2.0, two_m as f64 / 2.0);
            let g = GaussianProfile::new(mu, eps).map_err(|e| e.to_string())?;
            let st = QState::com_state(two_s, two_m, g, hbar, Chirality::Symmetric).map_err(|e| e.to_string())?;
            let n = expectation_report(&st).map_err(|e| e.to_string())?;
            let c = n.c.iter().fold(0.0f64, |a, x| a.max(x.abs())) / mu;
            let p0 = n.p[0];
            let energy = if p0 >= mu && p0 <= mu * (1.0 + 3.0 * eps * eps) { 0.0 } else { 1.0 };
            Ok([
                c / 1e-8,
                rel(n.j[1][2], m * hbar) / 1e-10,
                energy,
                n.var_j[1][2].abs() / (1e-10 * hbar * hbar * s * s),
                rel(n.var_j[2][3], hbar * hbar * (s * s - m * m + s) / 2.0) / 1e-8,
                rel(n.p_sq, mu * mu) / 1e-8,
                rel(n.s_sq, -hbar * hbar * mu * mu * s * (s + 1.0)) / 1e-8,
            ])
        })
        .collect();
    let names = ["<C>", "<J12>", "<p0> bounds", "dJ12", "(dJ23)^2", "P^2", "S^2"];
    let mut worst = [0.0f64; 7];
    for r in &results {
        match r {
            Ok(v) => {
                for k in 0..7 {
                    worst[k] = worst[k].max(v[k]);
                }
            }
            Err(e) => return outcome(false, format!("states: {e}")),
        }
    }
    let detail: Vec<String> = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.2}")).collect();
    outcome(
        worst.iter().all(|&w| w < 1.0),
        format!("states: worst deviation / tolerance over {} states, 2s in {{4,6,8,12}}: {}", results.len(), detail.join(", ")),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let mu = 1.0;
    let spins = [8u32, 16, 32, 64];
    let reps: Result<Vec<ExpectationReport>, String> = spins
        .par_iter()
        .map(|&two_s| {
            let s = two_s as f64 / 2.0;
            let g = GaussianProfile::new(mu, s.powf(-0.25)).map_err(|e| e.to_string())?;
            let st = QState::com_state(two_s, two_s as i32, g, 1.0, Chirality::Symmetric).map_err(|e| e.to_string())?;
            expectation_report(&st).map_err(|e| e.to_string())
        })
        .collect();
    let reps = match reps {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("widths: {e}")),
    };
    let s: Vec<f64> = spins.iter().map(|&t| t as f64 / 2.0).collect();
    let dp3: Vec<f64> = reps.iter().map(|r| r.var_p[3].sqrt() / mu).collect();
    let j01: Vec<f64> = reps.iter().zip(&s).map(|(r, s)| r.var_j[0][1] / (s * s)).collect();
    let j03: Vec<f64> = reps.iter().zip(&s).map(|(r, s)| r.var_j[0][3] / s).collect();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    outcome(
        strictly_decreasing(&dp3) && strictly_decreasing(&j01) && strictly_decreasing(&j03),
        format!("widths over s = 4,8,16,32: dp3/mu [{}], (dJ01)^2/s^2 [{}], (dJ03)^2/s [{}]", fmt(&dp3), fmt(&j01), fmt(&j03)),
    )
}

// ---------------------------------------------------------------- 6

fn random_line(rng: &mut impl Rng) -> TimelikeLine {
    let mut u = |a: f64| rng.gen_range(-a..a);
    LineConfig {
        rapidity: [u(1.5), u(1.5), u(1.5)],
        rotation: Some(AxisAngle { axis: [u(1.0), u(1.0), u(1.0)], angle: u(3.0) }),
        translation: [u(5.0), u(5.0), u(5.0), u(5.0)],
    }
    .line()
}

fn criterion_6() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let (mut oracle_err, mut inv_err, mut real_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut pairs = 0;
    while pairs < 100 {
        let (l1, l2) = (random_line(&mut rng), random_line(&mut rng));
        let c = dot(&l1.tangent(), &l2.tangent());
        if c * c - 1.0 < 1e-3 {
            continue;
        }
        pairs += 1;
        let d = lorentz_distance(&l1, &l2).unwrap();
        let (_, _, o) = closest_approach_oracle(&l1, &l2).unwrap();
        // squares, relative to the offset scale: the square root loses digits near intersection
        let scale: f64 = (0..4).map(|k| (l1.translation[k] - l2.translation[k]).powi(2)).sum::<f64>().max(1.0);
        oracle_err = oracle_err.max((d * d - o * o).abs() / scale);

        let (u1, u2) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let shifted = lorentz_distance(&TimelikeLine::new(l1.boost, l1.point(u1)), &TimelikeLine::new(l2.boost, l2.point(u2))).unwrap();
        let g = random_line(&mut rng);
        let pg = PoincareTransform::new(g.boost, g.translation);
        let moved = |l: &TimelikeLine| TimelikeLine::new(pg.lorentz.compose(&l.boost), pg.apply(&l.translation));
        let dm = lorentz_distance(&moved(&l1), &moved(&l2)).unwrap();
        inv_err = inv_err.max((shifted - d).abs() / d.max(1.0)).max((dm - d).abs() / d.max(1.0));

        let x1: Vec4 = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let x2: Vec4 = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let dx: Vec4 = std::array::from_fn(|k| x1[k] - x2[k]);
        let sq = dot(&dx, &dx);
        if sq.abs() > 1e-2 {
            let want = if sq < 0.0 { (-sq).sqrt() } else { 0.5 * sq.sqrt() };
            let (a, b) = realize_point_distance(&x1, &x2).unwrap();
            real_err = real_err.max((lorentz_distance(&a, &b).unwrap() - want).abs() / want.max(1.0));
        }
    }
    outcome(
        oracle_err < 1e-12 && inv_err < 1e-10 && real_err < 1e-10,
        format!("geometry: oracle {oracle_err:.2e} on {pairs} pairs, gauge/Poincare invariance {inv_err:.2e}, point realizations {real_err:.2e}"),
    )
}

// ---------------------------------------------------------------- 7

fn pair_config(chi: f64, offset: f64, spins: &[u32]) -> ScenarioConfig {
    let mut cfg = canonical_scenario(spins.to_vec());
    cfg.lines[1] = LineConfig { rapidity: [0.0, 0.0, chi], rotation: None, translation: [0.0, offset, 0.0, 0.0] };
    cfg
}

const PAIRS: [(f64, f64); 3] = [(0.5, 1.0), (1.0, 3.0), (1.5, 5.0)];

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for &(chi, b) in &PAIRS {
        let rep = match run_convergence(&pair_config(chi, b, &[8, 16, 32, 64, 128]), RunOptions { uncertainties: true }) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("convergence: {e}")),
        };
        let s = &rep.summaries[0];
        let alpha = s.fit_alpha.unwrap_or(f64::NAN);
        let good = rep.failed_rows() == 0 && s.rel_error_decreasing && (0.4..=0.6).contains(&alpha) && s.delta_b_decreasing;
        ok &= good;
        let rel: Vec<String> = rep.rows.iter().map(|r| r.rel_error.map_or("-".into(), |v| format!("{v:.3e}"))).collect();
        let db: Vec<String> = rep.rows.iter().map(|r| r.delta_b_over_b.map_or("-".into(), |v| format!("{v:.3}"))).collect();
        parts.push(format!("(chi {chi}, b {b}): rel [{}] alpha {alpha:.3}, dB/B [{}]", rel.join(" "), db.join(" ")));
    }
    // Delta A over s = 2, 4, 8
    let mut a_ok = true;
    let mut a_expected = true;
    let mut a_notes = BTreeSet::new();
    for &(chi, b) in &PAIRS {
        let rep = match run_convergence(&pair_config(chi, b, &[4, 8, 16]), RunOptions { uncertainties: true }) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("convergence: {e}")),
        };
        a_ok &= rep.summaries[0].delta_a_decreasing == Some(true);
        for r in &rep.rows {
            match (&r.delta_a_over_a, &r.note) {
                (None, Some(n)) if n.contains("not integrable at the origin") => {
                    a_notes.insert(n.clone());
                }
                _ => a_expected = false,
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    parts.push(format!("{secs:.0} s"));
    let a_part = if a_ok {
        "dA/|A| decreasing".to_string()
    } else {
        format!("dA/|A| unavailable: {}", a_notes.into_iter().collect::<Vec<_>>().join("; "))
    };
    parts.push(a_part);
    let detail = format!("convergence: {}", parts.join("; "));
    let mut o = outcome(ok && a_ok, detail);
    if ok && !a_ok && a_expected {
        o.expected_failure = Some("<A^2> diverges at p = 0 for s >= 1, so Delta A is infinite; every other part passes".into());
    }
    o
}

// ---------------------------------------------------------------- 8

/// psi and K'^b psi = p_y J^{by} psi in the lab frame of `spec`, with
/// p -> Lambda p and J -> xi ^ Lambda p + Lambda Lambda J.
fn lab_states(spec: &ParticleSpec) -> Vec<QState> {
    use OperatorSymbol::{J, P};
    let psi = spec.rest_state().unwrap();
    let lam = *spec.frame.lorentz.matrix();
    let xi = spec.frame.translation;
    let pl = |y: usize, st: &QState| {
        let mut out = st.empty_like();
        for e in 0..4 {
            if lam[y][e] != 0.0 {
                out.add_scaled(&apply_operator(P(e), st).unwrap(), ONE * lam[y][e]);
            }
        }
        out
    };
    let jl = |a: usize, y: usize, st: &QState| {
        let mut out = pl(y, st).scale(ONE * xi[a]);
        out.add_scaled(&pl(a, st), ONE * -xi[y]);
        for c in 0..4 {
            for d in c + 1..4 {
                let k = lam[a][c] * lam[y][d] - lam[a][d] * lam[y][c];
                if k != 0.0 {
                    out.add_scaled(&apply_operator(J(c, d), st).unwrap(), ONE * k);
                }
            }
        }
        out
    };
    let mut out = vec![psi.clone()];
    for b in 0..4 {
        let mut k = psi.empty_like();
        for y in (0..4).filter(|&y| y != b) {
            k.add_scaled(&pl(y, &jl(b, y, &psi)), ONE * ETA[y]);
        }
        out.push(k);
    }
    out
}

fn tidx(u: usize, v: usize, c: usize, g: usize) -> usize {
    ((u * 5 + v) * 4 + c) * 4 + g
}

/// <chi_u| (Lambda p)^c (Lambda p)^g |chi_v> / <psi|psi> by quadrature over
/// (p, theta, phi), harmonics from the dyad formula.
fn brute_tables(spec: &ParticleSpec) -> Vec<Zc> {
    let states = lab_states(spec);
    let g = states[0].profile;
    let two_s = states[0].two_s;
    let lam = *spec.frame.lorentz.matrix();
    let gl_t = GaussLegendre::new(20);
    let n_f = 28;
    let mut ang = Vec::new();
    for (x, w) in gl_t.nodes.iter().zip(&gl_t.weights) {
        for k in 0..n_f {
            ang.push((x.acos(), 2.0 * std::f64::consts::PI * k as f64 / n_f as f64, w * 2.0 * std::f64::consts::PI / n_f as f64));
        }
    }
    let keys: BTreeSet<(i32, i32, i32)> =
        states.iter().flat_map(|st| st.terms.keys().map(move |k| (st.two_sigma(k.r), k.two_j, k.two_m))).collect();
    let ytab: BTreeMap<(i32, i32, i32), Vec<Zc>> = keys
        .iter()
        .map(|&(sg, j, m)| (
            (sg, j, m),
            ang.iter().map(|&(t, f, _)| common::dyad_swsh(sg, j, m, common::zeta_of(t, f))).collect(),
        ))
        .collect();
    let gl_p = GaussLegendre::new(16);
    let (panels, pmax) = (24, 14.0 * g.eps * g.mu);
    let mut radial = Vec::new();
    for k in 0..panels {
        let (a, b) = (pmax * k as f64 / panels as f64, pmax * (k + 1) as f64 / panels as f64);
        for (x, w) in gl_p.nodes.iter().zip(&gl_p.weights) {
            radial.push((0.5 * (a + b) + 0.5 * (b - a) * x, 0.5 * (b - a) * w));
        }
    }
    let nr = two_s as usize + 1;
    let binom: Vec<f64> = (0..nr).map(|r| (0..r).fold(1.0, |acc, i| acc * (two_s as usize - i) as f64 / (i + 1) as f64)).collect();
    let size = tidx(4, 4, 3, 3) + 2;
    let mut acc = radial
        .par_iter()
        .map(|&(p, wp)| {
            let (p0, f) = (g.p0(p), g.value(p));
            let coeffs: Vec<Vec<Vec<((i32, i32, i32), Zc)>>> = states
                .iter()
                .map(|st| {
                    let mut per_r = vec![BTreeMap::new(); nr];
                    for (k, &c) in &st.terms {
                        let key = (st.two_sigma(k.r), k.two_j, k.two_m);
                        *per_r[k.r as usize].entry(key).or_insert(Zc::default()) += c * p.powi(k.a) * p0.powi(k.b) * f;
                    }
                    per_r.into_iter().map(|m| m.into_iter().collect()).collect()
                })
                .collect();
            let mut out = vec![Zc::default(); size];
            for (n, &(t, ph, wa)) in ang.iter().enumerate() {
                let rest = [p0, p * t.sin() * ph.cos(), p * t.sin() * ph.sin(), p * t.cos()];
                let plab: [f64; 4] = std::array::from_fn(|c| (0..4).map(|d| lam[c][d] * rest[d]).sum());
                let w = wp * wa * p * p / p0;
                for r in 0..nr {
                    let vals: Vec<Zc> = coeffs.iter().map(|st| st[r].iter().map(|(key, c)| c * ytab[key][n]).sum()).collect();
                    for u in 0..5 {
                        for v in 0..5 {
                            let z = vals[u].conj() * vals[v] * (w * binom[r]);
                            for c in 0..4 {
                                for gg in 0..4 {
                                    out[tidx(u, v, c, gg)] += z * (plab[c] * plab[gg]);
                                }
                            }
                        }
                    }
                    out[size - 1] += vals[0].norm_sqr() * w * binom[r];
                }
            }
            out
        })
        .reduce(|| vec![Zc::default(); size], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    let norm = acc.pop().unwrap();
    acc.iter().map(|x| x / norm).collect()
}

/// d^2 = <A>/<B> assembled from the two particle tables.
fn brute_distance(s1: &ParticleSpec, s2: &ParticleSpec) -> (f64, f64) {
    let (g1, g2) = rayon::join(|| brute_tables(s1), || brute_tables(s2));
    let (m1, m2) = (s1.mu * s1.mu, s2.mu * s2.mu);
    let mut b = Zc::new(-m1 * m2, 0.0);
    for a in 0..4 {
        for c in 0..4 {
            b += g1[tidx(0, 0, a, c)] * g2[tidx(0, 0, a, c)] * (ETA[a] * ETA[c]);
        }
    }
    let mut a_val = Zc::default();
    for a in 0..4 {
        for c in 0..4 {
            for d in 0..4 {
                for gg in 0..4 {
                    for h in 0..4 {
                        for bb in 0..4 {
                            let e: f64 = (0..4).map(|e| levi_civita(a, c, d, e) * ETA[e] * levi_civita(e, gg, h, bb)).sum();
                            if e == 0.0 {
                                continue;
                            }
                            let (ka, kb) = (1 + a, 1 + bb);
                            let t = g1[tidx(ka, kb, c, gg)] * g2[tidx(0, 0, d, h)] / (m1 * m1)
                                - g1[tidx(ka, 0, c, gg)] * g2[tidx(0, kb, d, h)] / (m1 * m2)
                                - g1[tidx(0, kb, c, gg)] * g2[tidx(ka, 0, d, h)] / (m1 * m2)
                                + g1[tidx(0, 0, c, gg)] * g2[tidx(ka, kb, d, h)] / (m2 * m2);
                            a_val += t * e;
                        }
                    }
                }
            }
        }
    }
    (a_val.re / b.re, b.re)
}

fn criterion_8() -> Outcome {
    let cfgs = [
        pair_config(1.0, 3.0, &[1]),
        parse_scenario(
            r#"{"lines": [{"rapidity": [0.2,-0.1,0.3], "rotation": {"axis": [1,0,1], "angle": 0.7}, "translation": [0.5,-1,0.4,2]},
                          {"rapidity": [-0.4,0.5,0.1], "translation": [-1,2,1,-0.5]}], "spins": [1]}"#,
        )
        .unwrap(),
    ];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for cfg in &cfgs {
        for two_s in 1..=4u32 {
            let (s1, s2) = (cfg.particle(two_s, 0).unwrap(), cfg.particle(two_s, 1).unwrap());
            let d = match empirical_distance(&s1, &s2) {
                Ok(d) => d,
                Err(e) => return outcome(false, format!("brute force: 2s={two_s}: {e}")),
            };
            let (d2, b) = brute_distance(&s1, &s2);
            let e = rel(d.d2, d2).max(rel(d.b.re, b));
            worst = worst.max(e);
            parts.push(format!("{:.6}", d.d2));
        }
    }
    outcome(
        worst < 1e-6,
        format!("brute force: max relative deviation {worst:.2e} for 2s = 1..4 on two pairs (d^2 = {})", parts.join(" ")),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let only: Option<u32> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut unexpected = 0;
    for (n, f) in criteria {
        if only.is_some_and(|k| k != n) {
            continue;
        }
        let o = f();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {n}: {tag} {}", o.detail);
        match (&o.expected_failure, o.passed) {
            (Some(why), false) => println!("criterion {n}: known failure: {why}"),
            (None, false) => unexpected += 1,
            _ => {}
        }
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
