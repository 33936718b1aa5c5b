//! Mass-shell angular geometry: spin-weighted spherical harmonics, the
//! Newman-Penrose tetrad and spinor dyad, edth calculus, a band-limit exact
//! sphere grid, and closed-form momentum matrix elements.
//!
//! Half-integers are stored doubled (`two_j`, `two_m`, `two_sigma`).
//! Spherical polar angles follow `zeta = exp(i phi) cot(theta / 2)`, so
//! `p^3 = p cos(theta)` and `theta = pi` is `zeta = 0`.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex64;

use crate::error::SphereError;
use crate::quadrature::GaussLegendre;
use crate::tensor::levi_civita;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SwshIndex {
    pub two_sigma: i32,
    pub two_j: i32,
    pub two_m: i32,
}

impl SwshIndex {
    pub fn new(two_sigma: i32, two_j: i32, two_m: i32) -> Result<Self, SphereError> {
        let idx = Self { two_sigma, two_j, two_m };
        if idx.is_valid() {
            Ok(idx)
        } else {
            Err(SphereError::InvalidIndex { two_sigma, two_j, two_m })
        }
    }

    pub fn is_valid(&self) -> bool {
        self.two_j >= self.two_sigma.abs()
            && self.two_j >= self.two_m.abs()
            && (self.two_j - self.two_sigma) % 2 == 0
            && (self.two_j - self.two_m) % 2 == 0
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }
    pub fn m(&self) -> f64 {
        self.two_m as f64 / 2.0
    }
    pub fn sigma(&self) -> f64 {
        self.two_sigma as f64 / 2.0
    }

    /// Azimuthal frequency m + sigma, always an integer.
    pub fn frequency(&self) -> i32 {
        (self.two_m + self.two_sigma) / 2
    }
}

fn ln_factorial(n: i32) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut v = vec![0.0; 4097];
        for k in 1..v.len() {
            v[k] = v[k - 1] + (k as f64).ln();
        }
        v
    });
    debug_assert!(n >= 0);
    t[n as usize]
}

/// Wigner small-d d^j_{m'm}(beta) from the finite sum; only accurate for
/// modest j, used for seeds and cross-checks.
pub fn wigner_d_direct(two_j: i32, two_mp: i32, two_m: i32, beta: f64) -> f64 {
    let jpm = (two_j + two_mp) / 2;
    let jmm_p = (two_j - two_mp) / 2;
    let jm = (two_j + two_m) / 2;
    let jmm = (two_j - two_m) / 2;
    let dm = (two_m - two_mp) / 2;
    let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
    let pref = 0.5 * (ln_factorial(jpm) + ln_factorial(jmm_p) + ln_factorial(jm) + ln_factorial(jmm));
    let kmin = dm.max(0);
    let kmax = jm.min(jmm_p);
    let mut sum = 0.0;
    for k in kmin..=kmax {
        let ln_den = ln_factorial(jm - k) + ln_factorial(k) + ln_factorial(jmm_p - k) + ln_factorial(k - dm);
        let sign = if (k - dm) % 2 == 0 { 1.0 } else { -1.0 };
        let ce = two_j - 2 * k + dm;
        let se = 2 * k - dm;
        sum += sign * (pref - ln_den).exp() * c.powi(ce) * s.powi(se);
    }
    sum
}

/// d^j_{m'm}(beta) for all j from max(|m|,|m'|) up to `two_jmax / 2`,
/// returned in steps of one. Three-term recursion in j.
pub fn wigner_d_column(two_mp: i32, two_m: i32, beta: f64, two_jmax: i32) -> Vec<f64> {
    let two_j0 = two_mp.abs().max(two_m.abs());
    if two_jmax < two_j0 {
        return Vec::new();
    }
    let n = ((two_jmax - two_j0) / 2 + 1) as usize;
    let mut out = Vec::with_capacity(n);
    out.push(wigner_d_direct(two_j0, two_mp, two_m, beta));
    let m = two_m as f64 / 2.0;
    let mp = two_mp as f64 / 2.0;
    let cb = beta.cos();
    for step in 1..n {
        let j = (two_j0 as f64) / 2.0 + (step - 1) as f64;
        let jp = j + 1.0;
        let lead = jp * (2.0 * j + 1.0) / (((jp * jp - m * m) * (jp * jp - mp * mp)).sqrt());
        let mix = if two_m == 0 || two_mp == 0 { 0.0 } else { m * mp / (j * jp) };
        let mut val = (cb - mix) * out[step - 1];
        if step >= 2 {
            let back = ((j * j - m * m) * (j * j - mp * mp)).sqrt() / (j * (2.0 * j + 1.0));
            val -= back * out[step - 2];
        }
        out.push(lead * val);
    }
    out
}

/// Polar part of the harmonic: sY_{j,m} = theta_part * exp(i (m + sigma) phi).
pub fn swsh_theta(idx: SwshIndex, theta: f64) -> Complex64 {
    let d = wigner_d_column(idx.two_m, idx.two_sigma, theta, idx.two_j);
    swsh_prefactor(idx) * *d.last().unwrap_or(&0.0)
}

fn swsh_prefactor(idx: SwshIndex) -> Complex64 {
    let jps = (idx.two_j + idx.two_sigma) / 2;
    let sign = if jps % 2 == 0 { 1.0 } else { -1.0 };
    let norm = ((idx.two_j as f64 + 1.0) / (4.0 * PI)).sqrt();
    I.powi(idx.two_j) * (sign * norm)
}

/// Polar parts for all degrees j = j0 .. two_jmax/2 at fixed (sigma, m).
pub fn swsh_theta_column(two_sigma: i32, two_m: i32, theta: f64, two_jmax: i32) -> Vec<(i32, Complex64)> {
    let d = wigner_d_column(two_m, two_sigma, theta, two_jmax);
    let two_j0 = two_m.abs().max(two_sigma.abs());
    d.into_iter()
        .enumerate()
        .map(|(k, v)| {
            let two_j = two_j0 + 2 * k as i32;
            (two_j, swsh_prefactor(SwshIndex { two_sigma, two_j, two_m }) * v)
        })
        .collect()
}

pub fn swsh_value(idx: SwshIndex, theta: f64, phi: f64) -> Complex64 {
    swsh_theta(idx, theta) * Complex64::from_polar(1.0, idx.frequency() as f64 * phi)
}

/// Gauss-Legendre in cos(theta) times a uniform phi grid.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    pub lmax: usize,
    pub thetas: Vec<f64>,
    pub theta_weights: Vec<f64>,
    pub phis: Vec<f64>,
    pub zetas: Vec<Complex64>,
}

impl SphereGrid {
    pub fn new(lmax: usize) -> Self {
        let gl = GaussLegendre::new(lmax + 2);
        // x = cos(theta) ascending means theta descending; keep node order.
        let thetas: Vec<f64> = gl.nodes.iter().map(|x| x.acos()).collect();
        let n_phi = 4 * lmax + 3;
        let phis: Vec<f64> = (0..n_phi).map(|k| 2.0 * PI * k as f64 / n_phi as f64).collect();
        let mut zetas = Vec::with_capacity(thetas.len() * n_phi);
        for &t in &thetas {
            for &f in &phis {
                zetas.push(Complex64::from_polar(1.0 / (t / 2.0).tan(), f));
            }
        }
        Self { lmax, thetas, theta_weights: gl.weights.clone(), phis, zetas }
    }

    pub fn n_theta(&self) -> usize {
        self.thetas.len()
    }
    pub fn n_phi(&self) -> usize {
        self.phis.len()
    }
    pub fn len(&self) -> usize {
        self.thetas.len() * self.phis.len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self, node: usize) -> f64 {
        self.theta_weights[node / self.n_phi()] * 2.0 * PI / self.n_phi() as f64
    }

    pub fn angles(&self, node: usize) -> (f64, f64) {
        (self.thetas[node / self.n_phi()], self.phis[node % self.n_phi()])
    }

    /// Unit-sphere L2 product of two sampled fields.
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for n in 0..self.len() {
            acc += a[n].conj() * b[n] * self.weight(n);
        }
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldData {
    Grid(Vec<Complex64>),
    /// (2j, 2m) -> coefficient.
    Coeffs(BTreeMap<(i32, i32), Complex64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngularField {
    pub two_sigma: i32,
    pub lmax: usize,
    pub data: FieldData,
}

impl AngularField {
    pub fn from_coeffs(two_sigma: i32, lmax: usize, coeffs: BTreeMap<(i32, i32), Complex64>) -> Result<Self, SphereError> {
        for &(two_j, two_m) in coeffs.keys() {
            SwshIndex::new(two_sigma, two_j, two_m)?;
            if two_j > 2 * lmax as i32 {
                return Err(SphereError::BandLimit { two_j, lmax });
            }
        }
        Ok(Self { two_sigma, lmax, data: FieldData::Coeffs(coeffs) })
    }

    pub fn coeffs(&self) -> Option<&BTreeMap<(i32, i32), Complex64>> {
        match &self.data {
            FieldData::Coeffs(c) => Some(c),
            FieldData::Grid(_) => None,
        }
    }
}

/// Samples of sY_{j,m} on the grid.
pub fn eval_swsh(idx: SwshIndex, grid: &SphereGrid) -> Result<AngularField, SphereError> {
    if !idx.is_valid() {
        return Err(SphereError::InvalidIndex { two_sigma: idx.two_sigma, two_j: idx.two_j, two_m: idx.two_m });
    }
    if idx.two_j > 2 * grid.lmax as i32 {
        return Err(SphereError::BandLimit { two_j: idx.two_j, lmax: grid.lmax });
    }
    let mut vals = Vec::with_capacity(grid.len());
    for &t in &grid.thetas {
        let th = swsh_theta(idx, t);
        for &f in &grid.phis {
            vals.push(th * Complex64::from_polar(1.0, idx.frequency() as f64 * f));
        }
    }
    Ok(AngularField { two_sigma: idx.two_sigma, lmax: grid.lmax, data: FieldData::Grid(vals) })
}

/// Quadrature projection onto the harmonic basis of the field's spin weight.
pub fn analyze(field: &AngularField, grid: &SphereGrid) -> Result<BTreeMap<(i32, i32), Complex64>, SphereError> {
    let vals = match &field.data {
        FieldData::Coeffs(c) => return Ok(c.clone()),
        FieldData::Grid(v) => v,
    };
    let two_sigma = field.two_sigma;
    let two_lmax = 2 * grid.lmax as i32;
    let nphi = grid.n_phi();
    let mut out = BTreeMap::new();
    // Parity of 2m follows 2sigma.
    let mut two_m = -two_lmax + ((two_lmax + two_sigma).rem_euclid(2));
    while two_m <= two_lmax {
        let k = (two_m + two_sigma) / 2;
        for (it, &t) in grid.thetas.iter().enumerate() {
            let mut fk = ZERO;
            for ip in 0..nphi {
                fk += vals[it * nphi + ip] * Complex64::from_polar(1.0, -(k as f64) * grid.phis[ip]);
            }
            fk *= 2.0 * PI / nphi as f64 * grid.theta_weights[it];
            for (two_j, y) in swsh_theta_column(two_sigma, two_m, t, two_lmax) {
                *out.entry((two_j, two_m)).or_insert(ZERO) += y.conj() * fk;
            }
        }
        two_m += 2;
    }
    Ok(out)
}

pub fn synthesize(two_sigma: i32, coeffs: &BTreeMap<(i32, i32), Complex64>, grid: &SphereGrid) -> Result<AngularField, SphereError> {
    let mut vals = vec![ZERO; grid.len()];
    for (&(two_j, two_m), &c) in coeffs {
        let idx = SwshIndex::new(two_sigma, two_j, two_m)?;
        let f = eval_swsh(idx, grid)?;
        if let FieldData::Grid(v) = f.data {
            for n in 0..vals.len() {
                vals[n] += c * v[n];
            }
        }
    }
    Ok(AngularField { two_sigma, lmax: grid.lmax, data: FieldData::Grid(vals) })
}

/// Coefficient of sY_{j,m} in the edth image on the unit sphere, i.e. without
/// the 1/p factor.
pub fn edth_unit(two_sigma: i32, two_j: i32) -> f64 {
    let j = two_j as f64 / 2.0;
    let s = two_sigma as f64 / 2.0;
    -(((j + s + 1.0) * (j - s)) / 2.0).max(0.0).sqrt()
}

pub fn edth_prime_unit(two_sigma: i32, two_j: i32) -> f64 {
    let j = two_j as f64 / 2.0;
    let s = two_sigma as f64 / 2.0;
    (((j - s + 1.0) * (j + s)) / 2.0).max(0.0).sqrt()
}

fn edth_generic(f: &AngularField, p: f64, raise: bool) -> Result<AngularField, SphereError> {
    let coeffs = f.coeffs().ok_or(SphereError::UntabulatedFamily)?;
    let new_sigma = f.two_sigma + if raise { 2 } else { -2 };
    let mut out = BTreeMap::new();
    for (&(two_j, two_m), &c) in coeffs {
        let k = if raise { edth_unit(f.two_sigma, two_j) } else { edth_prime_unit(f.two_sigma, two_j) };
        if k != 0.0 {
            out.insert((two_j, two_m), c * (k / p));
        }
    }
    AngularField::from_coeffs(new_sigma, f.lmax, out)
}

/// edth on a sphere of radius p, in coefficient space.
pub fn edth(f: &AngularField, p: f64) -> Result<AngularField, SphereError> {
    edth_generic(f, p, true)
}

pub fn edth_prime(f: &AngularField, p: f64) -> Result<AngularField, SphereError> {
    edth_generic(f, p, false)
}

/// Cartesian spatial components of the unit normal n = p_vec/p and of m, mbar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AngularFactor {
    N(u8),
    M(u8),
    Mb(u8),
}

impl AngularFactor {
    /// Spin weight in doubled units.
    pub fn two_weight(self) -> i32 {
        match self {
            AngularFactor::N(_) => 0,
            AngularFactor::M(_) => 2,
            AngularFactor::Mb(_) => -2,
        }
    }

    /// Fourier decomposition: list of (k, g_k(theta)) with factor = sum e^{ik phi} g_k.
    pub fn fourier(self, theta: f64) -> Vec<(i32, Complex64)> {
        let (s2, c2) = ((theta / 2.0).sin().powi(2), (theta / 2.0).cos().powi(2));
        let st = theta.sin();
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let re = |x: f64| Complex64::new(x, 0.0);
        match self {
            AngularFactor::N(1) => vec![(1, re(st / 2.0)), (-1, re(st / 2.0))],
            AngularFactor::N(2) => vec![(1, -I * (st / 2.0)), (-1, I * (st / 2.0))],
            AngularFactor::N(_) => vec![(0, re(theta.cos()))],
            AngularFactor::M(1) => vec![(0, re(s2 * r2)), (2, re(-c2 * r2))],
            AngularFactor::M(2) => vec![(0, I * (s2 * r2)), (2, I * (c2 * r2))],
            AngularFactor::M(_) => vec![(1, re(st * r2))],
            AngularFactor::Mb(1) => vec![(0, re(s2 * r2)), (-2, re(-c2 * r2))],
            AngularFactor::Mb(2) => vec![(0, -I * (s2 * r2)), (-2, -I * (c2 * r2))],
            AngularFactor::Mb(_) => vec![(-1, re(st * r2))],
        }
    }

    pub fn value(self, theta: f64, phi: f64) -> Complex64 {
        self.fourier(theta).into_iter().map(|(k, g)| g * Complex64::from_polar(1.0, k as f64 * phi)).sum()
    }
}

type CouplingKey = (AngularFactor, i32, i32, i32);
pub type Coupling = Arc<Vec<(i32, i32, Complex64)>>;

/// Expansion of factor * sY_{j,m} in harmonics of weight sigma + w, as
/// (2j', 2m', coefficient). Exact up to round-off; cached process-wide.
pub fn coupling(factor: AngularFactor, two_sigma: i32, two_j: i32, two_m: i32) -> Coupling {
    static CACHE: OnceLock<RwLock<HashMap<CouplingKey, Coupling>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (factor, two_sigma, two_j, two_m);
    if let Some(c) = cache.read().unwrap().get(&key) {
        return c.clone();
    }
    let c = Arc::new(compute_coupling(factor, two_sigma, two_j, two_m));
    cache.write().unwrap().entry(key).or_insert(c).clone()
}

fn compute_coupling(factor: AngularFactor, two_sigma: i32, two_j: i32, two_m: i32) -> Vec<(i32, i32, Complex64)> {
    let w = factor.two_weight();
    let two_sp = two_sigma + w;
    let n = (two_j as usize) / 2 + 4;
    let gl = GaussLegendre::cached(n);
    let input = SwshIndex { two_sigma, two_j, two_m };
    let ks: Vec<i32> = factor.fourier(1.0).into_iter().map(|(k, _)| k).collect();
    let mut out = Vec::new();
    for (ki, &k) in ks.iter().enumerate() {
        let two_mp = two_m + 2 * k - w;
        let mut acc: BTreeMap<i32, Complex64> = BTreeMap::new();
        for (x, wt) in gl.nodes.iter().zip(&gl.weights) {
            let theta = x.acos();
            let g = factor.fourier(theta)[ki].1;
            let y = swsh_theta(input, theta);
            for (two_jp, yp) in swsh_theta_column(two_sp, two_mp, theta, two_j + 2) {
                if two_jp < two_j - 2 {
                    continue;
                }
                *acc.entry(two_jp).or_insert(ZERO) += yp.conj() * g * y * (*wt * 2.0 * PI);
            }
        }
        for (two_jp, c) in acc {
            if c.norm() > 1e-15 {
                out.push((two_jp, two_mp, c));
            }
        }
    }
    out
}

/// Multiply a coefficient map of spin weight sigma by an angular factor.
pub fn multiply_coeffs(
    factor: AngularFactor,
    two_sigma: i32,
    coeffs: &BTreeMap<(i32, i32), Complex64>,
) -> BTreeMap<(i32, i32), Complex64> {
    let mut out = BTreeMap::new();
    for (&(two_j, two_m), &c) in coeffs {
        for &(two_jp, two_mp, k) in coupling(factor, two_sigma, two_j, two_m).iter() {
            *out.entry((two_jp, two_mp)).or_insert(ZERO) += c * k;
        }
    }
    out
}

/// Which closed-form family of matrix elements to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    /// <k,n| p^i |j,m>, i in 0..=3.
    P(usize),
    /// Diagonal <j,m| p^i p^k |j,m>.
    PP(usize, usize),
    /// Diagonal <s,m| p^i p^k p^l |s,m> at sigma = +-s, j = s.
    PPP(usize, usize, usize),
    /// Leading term of the diagonal quartic moment at sigma = +-s, j = m = s.
    PPPP([usize; 4]),
    /// <j,m| (m^i mbar^k + m^k mbar^i)/2 |j,m>.
    MMbarSym(usize, usize),
    /// <j,m| (m^i mbar^k - m^k mbar^i)/2 |j,m>.
    MMbarAnti(usize, usize),
}

fn quad_diag(i: usize, k: usize, s: f64, j: f64, m: f64, p: f64) -> f64 {
    if i != k {
        return 0.0;
    }
    if j <= 0.5 {
        return p * p / 3.0;
    }
    let jj = j * (j + 1.0);
    let den = jj * (2.0 * j - 1.0) * (2.0 * j + 3.0);
    let (s2, m2) = (s * s, m * m);
    let num = if i == 3 {
        6.0 * s2 * m2 - 2.0 * jj * (s2 + m2) + jj * (2.0 * j * j + 2.0 * j - 1.0)
    } else {
        -3.0 * s2 * m2 + jj * (s2 + m2) + jj * (j * j + j - 1.0)
    };
    p * p * num / den
}

/// Closed-form unit-sphere matrix element <sigma Y_{k,n}| kind |sigma Y_{j,m}>_1
/// with radial value p.
pub fn matrix_elements(kind: MatrixKind, bra: SwshIndex, ket: SwshIndex, p: f64) -> Result<Complex64, SphereError> {
    if !bra.is_valid() || !ket.is_valid() {
        return Err(SphereError::InvalidIndex { two_sigma: ket.two_sigma, two_j: ket.two_j, two_m: ket.two_m });
    }
    if bra.two_sigma != ket.two_sigma {
        return Err(SphereError::WeightMismatch(bra.two_sigma, ket.two_sigma));
    }
    let (s, j, m) = (ket.sigma(), ket.j(), ket.m());
    let n = bra.m();
    let diag = bra == ket;
    let re = |x: f64| Complex64::new(x, 0.0);
    let dn = |x: f64| if (n - x).abs() < 1e-9 { 1.0 } else { 0.0 };
    match kind {
        MatrixKind::P(0) => {
            let p0 = p; // caller passes p^0 for the time component
            Ok(re(if diag { p0 } else { 0.0 }))
        }
        MatrixKind::P(c) if c <= 3 => {
            let dj = bra.two_j - ket.two_j;
            let v = match (c, dj) {
                (1, 2) => {
                    p / (2.0 * (j + 1.0)) * (((j + s + 1.0) * (j - s + 1.0)) / ((2.0 * j + 1.0) * (2.0 * j + 3.0))).sqrt()
                        * (((j - m + 1.0) * (j - m + 2.0)).sqrt() * dn(m - 1.0) - ((j + m + 1.0) * (j + m + 2.0)).sqrt() * dn(m + 1.0))
                }
                (1, 0) if j > 0.0 => {
                    p * s / (2.0 * j * (j + 1.0))
                        * (((j + m) * (j - m + 1.0)).sqrt() * dn(m - 1.0) + ((j - m) * (j + m + 1.0)).sqrt() * dn(m + 1.0))
                }
                (1, -2) => {
                    p / (2.0 * j) * (((j + s) * (j - s)) / ((2.0 * j - 1.0) * (2.0 * j + 1.0))).sqrt()
                        * (((j - m) * (j - m - 1.0)).max(0.0).sqrt() * dn(m + 1.0) - ((j + m) * (j + m - 1.0)).max(0.0).sqrt() * dn(m - 1.0))
                }
                (2, 2) => {
                    return Ok(I * (p / (2.0 * (j + 1.0))
                        * (((j + s + 1.0) * (j - s + 1.0)) / ((2.0 * j + 1.0) * (2.0 * j + 3.0))).sqrt()
                        * (((j + m + 1.0) * (j + m + 2.0)).sqrt() * dn(m + 1.0) + ((j - m + 1.0) * (j - m + 2.0)).sqrt() * dn(m - 1.0))))
                }
                (2, 0) if j > 0.0 => {
                    return Ok(I * (p * s / (2.0 * j * (j + 1.0))
                        * (((j + m) * (j - m + 1.0)).sqrt() * dn(m - 1.0) - ((j - m) * (j + m + 1.0)).sqrt() * dn(m + 1.0))))
                }
                (2, -2) => {
                    return Ok(-I * (p / (2.0 * j)
                        * (((j + s) * (j - s)) / ((2.0 * j - 1.0) * (2.0 * j + 1.0))).sqrt()
                        * (((j + m) * (j + m - 1.0)).max(0.0).sqrt() * dn(m - 1.0) + ((j - m) * (j - m - 1.0)).max(0.0).sqrt() * dn(m + 1.0))))
                }
                (3, 2) => {
                    p / (j + 1.0)
                        * (((j + s + 1.0) * (j - s + 1.0) * (j + m + 1.0) * (j - m + 1.0)) / ((2.0 * j + 1.0) * (2.0 * j + 3.0))).sqrt()
                        * dn(m)
                }
                (3, 0) if j > 0.0 => p * m * s / (j * (j + 1.0)) * dn(m),
                (3, -2) => {
                    p / j * (((j + s) * (j - s) * (j + m) * (j - m)) / ((2.0 * j - 1.0) * (2.0 * j + 1.0))).sqrt() * dn(m)
                }
                _ => 0.0,
            };
            Ok(re(v))
        }
        MatrixKind::P(_) => Err(SphereError::UntabulatedFamily),
        MatrixKind::PP(a, b) => {
            if !diag || a == 0 || b == 0 || a > 3 || b > 3 {
                return Err(SphereError::UntabulatedFamily);
            }
            Ok(re(quad_diag(a, b, s, j, m, p)))
        }
        MatrixKind::PPP(a, b, c) => {
            if !diag || (ket.two_j != ket.two_sigma.abs()) || [a, b, c].iter().any(|&x| x == 0 || x > 3) {
                return Err(SphereError::UntabulatedFamily);
            }
            let sg = if ket.two_sigma >= 0 { 1.0 } else { -1.0 };
            let mut idx = [a, b, c];
            idx.sort();
            let pref = sg * p.powi(3) * m / ((j + 1.0) * (j + 2.0) * (2.0 * j + 3.0));
            let v = match idx {
                [1, 1, 3] | [2, 2, 3] => pref * ((j + 1.0).powi(2) - m * m),
                [3, 3, 3] => pref * (3.0 * j + 4.0 + 2.0 * m * m),
                _ => 0.0,
            };
            Ok(re(v))
        }
        MatrixKind::PPPP(idx) => {
            if !diag || ket.two_j != ket.two_sigma.abs() || ket.two_m != ket.two_j {
                return Err(SphereError::UntabulatedFamily);
            }
            let v = if idx.iter().all(|&x| x == 3) { (p * j / (j + 1.0)).powi(4) } else { 0.0 };
            Ok(re(v))
        }
        MatrixKind::MMbarSym(a, b) => {
            if !diag || a == 0 || b == 0 || a > 3 || b > 3 {
                return Err(SphereError::UntabulatedFamily);
            }
            let d = if a == b { 0.5 } else { 0.0 };
            Ok(re(d - 0.5 * quad_diag(a, b, s, j, m, 1.0)))
        }
        MatrixKind::MMbarAnti(a, b) => {
            if !diag || a == 0 || b == 0 || a > 3 || b > 3 {
                return Err(SphereError::UntabulatedFamily);
            }
            let eps = levi_civita(0, a, b, 3);
            let r = if j > 0.0 { s * m / (j * (j + 1.0)) } else { 0.0 };
            Ok(I * (0.5 * eps * r))
        }
    }
}

/// NP tetrad and spinor dyad at one point of the mass shell.
#[derive(Clone, Debug, PartialEq)]
pub struct TetradPoint {
    pub p: [f64; 4],
    pub v: [f64; 4],
    pub m: [Complex64; 4],
    pub mbar: [Complex64; 4],
    pub o: [Complex64; 2],
    pub iota: [Complex64; 2],
    pub o_tilde: [Complex64; 2],
    pub iota_tilde: [Complex64; 2],
}

impl TetradPoint {
    /// Tetrad and dyad at stereographic coordinate zeta and radius p.
    pub fn at_zeta(zeta: Complex64, mu: f64, p: f64) -> Self {
        let zz = zeta.norm_sqr();
        let d = 1.0 + zz;
        let p0 = (mu * mu + p * p).sqrt();
        let nvec = [(zeta.conj() + zeta).re / d, (I * (zeta.conj() - zeta)).re / d, (zz - 1.0) / d];
        let pv = [p0, p * nvec[0], p * nvec[1], p * nvec[2]];
        let vv = [p / mu, p0 / mu * nvec[0], p0 / mu * nvec[1], p0 / mu * nvec[2]];
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let z2 = zeta * zeta;
        let m = [ZERO, (1.0 - z2) / d * r2, I * (1.0 + z2) / d * r2, zeta * (2.0 / d) * r2];
        let mbar = [ZERO, m[1].conj(), m[2].conj(), m[3].conj()];
        let sq = 1.0 / d.sqrt();
        let o_tilde = [-I * sq * zeta, -I * sq];
        let iota_tilde = [-I * sq, I * sq * zeta.conj()];
        let bp = ((p0 + p) / mu).sqrt();
        let bm = ((p0 - p) / mu).sqrt();
        Self {
            p: pv,
            v: vv,
            m,
            mbar,
            o: [o_tilde[0] * bp, o_tilde[1] * bp],
            iota: [iota_tilde[0] * bm, iota_tilde[1] * bm],
            o_tilde,
            iota_tilde,
        }
    }

    pub fn at_angles(theta: f64, phi: f64, mu: f64, p: f64) -> Self {
        Self::at_zeta(Complex64::from_polar(1.0 / (theta / 2.0).tan(), phi), mu, p)
    }

    /// o_A iota^A with o_A = o^B eps_{BA}, eps_{01} = 1.
    pub fn symplectic(&self) -> Complex64 {
        self.o[0] * self.iota[1] - self.o[1] * self.iota[0]
    }
}

pub struct NPTetrad {
    pub points: Vec<TetradPoint>,
}

pub struct SpinorDyad {
    pub o: Vec<[Complex64; 2]>,
    pub iota: Vec<[Complex64; 2]>,
    pub o_tilde: Vec<[Complex64; 2]>,
    pub iota_tilde: Vec<[Complex64; 2]>,
}

pub fn tetrad_and_dyad(grid: &SphereGrid, mu: f64, p: f64) -> (NPTetrad, SpinorDyad) {
    let points: Vec<TetradPoint> = grid.zetas.iter().map(|&z| TetradPoint::at_zeta(z, mu, p)).collect();
    let dyad = SpinorDyad {
        o: points.iter().map(|t| t.o).collect(),
        iota: points.iter().map(|t| t.iota).collect(),
        o_tilde: points.iter().map(|t| t.o_tilde).collect(),
        iota_tilde: points.iter().map(|t| t.iota_tilde).collect(),
    };
    (NPTetrad { points }, dyad)
}
