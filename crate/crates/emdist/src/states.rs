//! States of the massive representation: component scalars phi_r built from
//! symbolic radial monomials times the Gaussian profile, times spin-weighted
//! harmonics.

use std::collections::{BTreeMap, HashMap};
use std::sync::{OnceLock, RwLock};

use num_complex::Complex64;

use crate::error::StateError;
use crate::quadrature::integrate;
use crate::sphere::{AngularFactor, AngularField, SwshIndex, coupling, swsh_value};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// The square root of the hyperboloidal Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianProfile {
    pub mu: f64,
    pub eps: f64,
}

impl GaussianProfile {
    pub fn new(mu: f64, eps: f64) -> Result<Self, StateError> {
        if !(mu > 0.0 && mu.is_finite()) || !(eps > 0.0 && eps.is_finite()) {
            return Err(StateError::InvalidParameters(format!("mu = {mu}, eps = {eps}")));
        }
        Ok(Self { mu, eps })
    }

    pub fn p0(&self, p: f64) -> f64 {
        (self.mu * self.mu + p * p).sqrt()
    }

    pub fn value(&self, p: f64) -> f64 {
        let (mu, eps) = (self.mu, self.eps);
        (2.0 / std::f64::consts::PI).powf(0.25) * (self.p0(p) / (eps * mu).powi(3)).sqrt()
            * (-p * p / (4.0 * eps * eps * mu * mu)).exp()
    }

    pub fn derivative(&self, p: f64) -> f64 {
        let p0 = self.p0(p);
        0.5 * p * (1.0 / (p0 * p0) - 1.0 / (self.eps * self.eps * self.mu * self.mu)) * self.value(p)
    }

    /// int f^2 p^2 / p0 dp, which should be 1.
    pub fn normalization(&self) -> f64 {
        moment(0, 0, self).unwrap_or(f64::NAN)
    }
}

/// Sum of c p^a (p0)^b, all multiplying the profile f.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RadialExpr {
    pub terms: BTreeMap<(i32, i32), Complex64>,
}

impl RadialExpr {
    pub fn monomial(c: Complex64, a: i32, b: i32) -> Self {
        let mut r = Self::default();
        r.add_term(c, a, b);
        r
    }

    pub fn one() -> Self {
        Self::monomial(Complex64::new(1.0, 0.0), 0, 0)
    }

    pub fn add_term(&mut self, c: Complex64, a: i32, b: i32) {
        if c == ZERO {
            return;
        }
        let e = self.terms.entry((a, b)).or_insert(ZERO);
        *e += c;
        if *e == ZERO {
            self.terms.remove(&(a, b));
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut r = self.clone();
        for (&(a, b), &c) in &other.terms {
            r.add_term(c, a, b);
        }
        r
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut r = Self::default();
        for (&(a, b), &v) in &self.terms {
            r.add_term(v * c, a, b);
        }
        r
    }

    pub fn mul_monomial(&self, c: Complex64, da: i32, db: i32) -> Self {
        let mut r = Self::default();
        for (&(a, b), &v) in &self.terms {
            r.add_term(v * c, a + da, b + db);
        }
        r
    }

    /// Product of two expressions; the result carries f^2, so it is only
    /// meaningful as an argument of [`radial_integral`].
    pub fn product(&self, other: &Self) -> Self {
        let mut r = Self::default();
        for (&(a1, b1), &c1) in &self.terms {
            for (&(a2, b2), &c2) in &other.terms {
                r.add_term(c1 * c2, a1 + a2, b1 + b2);
            }
        }
        r
    }

    pub fn conj(&self) -> Self {
        let mut r = self.clone();
        r.terms.values_mut().for_each(|c| *c = c.conj());
        r
    }

    /// d/dp, with dp0/dp = p/p0 and df/dp = p (p0^-2 - (eps mu)^-2) f / 2.
    pub fn derivative(&self, profile: &GaussianProfile) -> Self {
        let k = 1.0 / (profile.eps * profile.mu).powi(2);
        let mut r = Self::default();
        for (&(a, b), &c) in &self.terms {
            if a != 0 {
                r.add_term(c * a as f64, a - 1, b);
            }
            r.add_term(c * (b as f64 + 0.5), a + 1, b - 2);
            r.add_term(c * (-0.5 * k), a + 1, b);
        }
        r.canonical(profile.mu)
    }

    /// Unique normal form, see [`normal_form`].
    pub fn canonical(&self, mu: f64) -> Self {
        let mut r = Self::default();
        for (&(a, b), &c) in &self.terms {
            normal_form(a, b, c, mu, &mut |a, b, c| r.add_term(c, a, b));
        }
        r
    }

    /// Value including the profile.
    pub fn eval(&self, profile: &GaussianProfile, p: f64) -> Complex64 {
        let p0 = profile.p0(p);
        let s: Complex64 = self.terms.iter().map(|(&(a, b), &c)| c * p.powi(a) * p0.powi(b)).sum();
        s * profile.value(p)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Reduce c p^a p0^b with p0^2 = mu^2 + p^2 to monomials with b in {0, 1}
/// (any a) or b < 0 with a in {0, 1}. The representation is then unique,
/// so cancellations happen in the coefficients rather than in quadrature.
pub fn normal_form(a: i32, b: i32, c: Complex64, mu: f64, emit: &mut impl FnMut(i32, i32, Complex64)) {
    let mu2 = mu * mu;
    if b >= 2 {
        normal_form(a, b - 2, c * mu2, mu, emit);
        normal_form(a + 2, b - 2, c, mu, emit);
    } else if b < 0 && a >= 2 {
        normal_form(a - 2, b + 2, c, mu, emit);
        normal_form(a - 2, b, -c * mu2, mu, emit);
    } else if b < 0 && a < 0 {
        normal_form(a, b + 2, c / mu2, mu, emit);
        normal_form(a + 2, b, -c / mu2, mu, emit);
    } else {
        emit(a, b, c);
    }
}

fn binom_real(x: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (x - i as f64) / (i as f64 + 1.0))
}

/// Taylor coefficients in x^2 of (1 + 2 eps^2 x^2)^{b/2} exp(-x^2).
fn taylor_x(b: i32, eps: f64, n: usize) -> Vec<f64> {
    let q = 2.0 * eps * eps;
    let mut out = vec![0.0; n];
    let mut fact = vec![1.0; n];
    for l in 1..n {
        fact[l] = fact[l - 1] * l as f64;
    }
    for (k, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for kk in 0..=k {
            let l = k - kk;
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            s += binom_real(b as f64 / 2.0, kk) * q.powi(kk as i32) * sign / fact[l];
        }
        *o = s;
    }
    out
}

/// Prefactor turning the x-integral into int p^a p0^b f^2 p^2/p0 dp.
fn moment_scale(a: i32, b: i32, g: &GaussianProfile) -> f64 {
    let (mu, eps) = (g.mu, g.eps);
    (2.0 / std::f64::consts::PI).sqrt() * (std::f64::consts::SQRT_2 * eps * mu).powi(a + 3) * mu.powi(b)
        / (eps * mu).powi(3)
}

/// Coefficients of the singular powers p^t, t <= -1, of p^a p0^b f^2 p^2/p0,
/// in the x variable (the common scale cancels in sums).
fn singular_part(a: i32, b: i32, g: &GaussianProfile) -> Vec<(i32, f64)> {
    let n0 = a + 2;
    if n0 >= 0 {
        return Vec::new();
    }
    let kmax = ((-1 - n0) / 2) as usize + 1;
    let h = taylor_x(b, g.eps, kmax);
    let s = moment_scale(a, b, g) / (std::f64::consts::SQRT_2 * g.eps * g.mu).powi(a + 3);
    (0..kmax).map(|k| (n0 + 2 * k as i32, s * h[k])).collect()
}

/// int_0^inf p^a p0^b f^2 p^2/p0 dp, as a Hadamard finite part when the
/// integrand is singular at the origin. Cached process-wide.
pub fn moment(a: i32, b: i32, g: &GaussianProfile) -> Result<f64, StateError> {
    type Key = (u64, u64, i32, i32);
    static CACHE: OnceLock<RwLock<HashMap<Key, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (g.mu.to_bits(), g.eps.to_bits(), a, b);
    if let Some(v) = cache.read().unwrap().get(&key) {
        return Ok(*v);
    }
    let v = moment_x(a + 2, b, g.eps) * moment_scale(a, b, g);
    if !v.is_finite() {
        return Err(StateError::NonIntegrable(a + 2));
    }
    cache.write().unwrap().insert(key, v);
    Ok(v)
}

/// Finite part of int_0^U x^n (1 + 2 eps^2 x^2)^{b/2} e^{-x^2} dx.
fn moment_x(n: i32, b: i32, eps: f64) -> f64 {
    let q = 2.0 * eps * eps;
    let h = |x: f64| (1.0 + q * x * x).powf(b as f64 / 2.0) * (-x * x).exp();
    let upper = 9.0 + (n.max(0) as f64 + b.max(0) as f64).sqrt();
    let tol = 1e-13;
    if n >= 0 {
        return integrate(|x| x.powi(n) * h(x), 0.0, upper, tol);
    }
    // Subtract the singular Taylor terms on [0, 1].
    let ks = ((-1 - n) / 2) as usize + 1;
    let nterms = ks + 80;
    let t = taylor_x(b, eps, nterms);
    let mut sum = 0.0;
    for (k, &c) in t.iter().enumerate().take(ks) {
        let e = n + 2 * k as i32;
        if e != -1 {
            sum += c / (e as f64 + 1.0);
        }
    }
    let series_ok = q * 0.25 < 0.5;
    let rem = |x: f64| {
        if x < 0.5 && series_ok {
            let mut s = 0.0;
            for (k, &c) in t.iter().enumerate().skip(ks) {
                s += c * x.powi(n + 2 * k as i32);
            }
            s
        } else {
            let mut p = h(x);
            for (k, &c) in t.iter().enumerate().take(ks) {
                p -= c * x.powi(2 * k as i32);
            }
            p * x.powi(n)
        }
    };
    sum += integrate(rem, 0.0, 1.0, tol);
    sum + integrate(|x| x.powi(n) * h(x), 1.0, upper, tol)
}

/// int_0^inf expr(p) f^2 p^2/p0 dp for an expression already standing for
/// a product conj(phi) psi (one factor f^2).
pub fn radial_integral(expr: &RadialExpr, g: &GaussianProfile) -> Result<Complex64, StateError> {
    check_singular(expr.terms.iter().map(|(&(a, b), &c)| (a, b, c)), g)?;
    let mut acc = ZERO;
    for (&(a, b), &c) in &expr.terms {
        acc += c * moment(a, b, g)?;
    }
    Ok(acc)
}

/// Singular coefficients must cancel across terms for the integral to exist.
fn check_singular(terms: impl Iterator<Item = (i32, i32, Complex64)>, g: &GaussianProfile) -> Result<(), StateError> {
    let mut tot: BTreeMap<i32, (Complex64, f64)> = BTreeMap::new();
    for (a, b, c) in terms {
        for (t, v) in singular_part(a, b, g) {
            let e = tot.entry(t).or_insert((ZERO, 0.0));
            e.0 += c * v;
            e.1 += c.norm() * v.abs();
        }
    }
    for (t, (sum, scale)) in tot {
        if sum.norm() > 1e-8 * scale {
            return Err(StateError::NonIntegrable(t));
        }
    }
    Ok(())
}

/// One basis term: p^a (p0)^b f times sY_{j,m} with sigma = s - r, sitting in
/// component r. Field order groups terms by component and harmonic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermKey {
    pub r: u16,
    pub two_j: i32,
    pub two_m: i32,
    pub a: i32,
    pub b: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chirality {
    Plus,
    Minus,
    Symmetric,
}

/// A state of spin s (component scalars phi_0..phi_2s).
#[derive(Clone, Debug, PartialEq)]
pub struct QState {
    pub two_s: u32,
    pub profile: GaussianProfile,
    pub hbar: f64,
    pub terms: BTreeMap<TermKey, Complex64>,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl QState {
    pub fn zero(two_s: u32, profile: GaussianProfile, hbar: f64) -> Self {
        Self { two_s, profile, hbar, terms: BTreeMap::new() }
    }

    pub fn empty_like(&self) -> Self {
        Self::zero(self.two_s, self.profile, self.hbar)
    }

    pub fn s(&self) -> f64 {
        self.two_s as f64 / 2.0
    }

    pub fn mu(&self) -> f64 {
        self.profile.mu
    }

    /// Doubled spin weight of component r.
    pub fn two_sigma(&self, r: u16) -> i32 {
        self.two_s as i32 - 2 * r as i32
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, key: TermKey, c: Complex64) {
        if c == ZERO {
            return;
        }
        let e = self.terms.entry(key).or_insert(ZERO);
        *e += c;
        if *e == ZERO {
            self.terms.remove(&key);
        }
    }

    /// Add a term after reducing it to normal form.
    pub fn add_canonical(&mut self, key: TermKey, c: Complex64) {
        let mu = self.profile.mu;
        normal_form(key.a, key.b, c, mu, &mut |a, b, c| self.add_term(TermKey { a, b, ..key }, c));
    }

    /// Add radial(p) * angular(zeta) to component r.
    pub fn push_product(&mut self, r: usize, radial: &RadialExpr, angular: &AngularField) -> Result<(), StateError> {
        if r > self.two_s as usize {
            return Err(StateError::ComponentRange(r));
        }
        let r = r as u16;
        if angular.two_sigma != self.two_sigma(r) {
            return Err(crate::error::SphereError::WeightMismatch(angular.two_sigma, self.two_sigma(r)).into());
        }
        let coeffs = angular.coeffs().ok_or(crate::error::SphereError::UntabulatedFamily)?;
        for (&(two_j, two_m), &ca) in coeffs {
            for (&(a, b), &cr) in &radial.terms {
                self.add_canonical(TermKey { r, two_j, two_m, a, b }, ca * cr);
            }
        }
        Ok(())
    }

    pub fn com_state(two_s: u32, two_m: i32, profile: GaussianProfile, hbar: f64, chirality: Chirality) -> Result<Self, StateError> {
        if two_m.abs() > two_s as i32 || (two_s as i32 - two_m) % 2 != 0 {
            return Err(StateError::InvalidParameters(format!("m = {}/2 for s = {}/2", two_m, two_s)));
        }
        if !(hbar > 0.0) {
            return Err(StateError::InvalidParameters(format!("hbar = {hbar}")));
        }
        let mut st = Self::zero(two_s, profile, hbar);
        let one = Complex64::new(1.0, 0.0);
        // The spinor term (-1)^{2s} sY iota...iota has component phi_0 = +sY,
        // since iota_A o^A = -1 contributes another (-1)^{2s}.
        let plus = TermKey { r: two_s as u16, two_j: two_s as i32, two_m, a: 0, b: 0 };
        let minus = TermKey { r: 0, two_j: two_s as i32, two_m, a: 0, b: 0 };
        match chirality {
            Chirality::Plus => st.add_term(plus, one),
            Chirality::Minus => st.add_term(minus, one),
            Chirality::Symmetric => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                st.add_term(plus, one * h);
                st.add_term(minus, one * h);
            }
        }
        Ok(st)
    }

    pub fn check_compatible(&self, other: &Self) -> Result<(), StateError> {
        if self.two_s != other.two_s || self.profile != other.profile || self.hbar != other.hbar {
            return Err(StateError::Mismatch);
        }
        Ok(())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.empty_like();
        for (&k, &v) in &self.terms {
            out.add_term(k, v * c);
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Self, c: Complex64) {
        for (&k, &v) in &other.terms {
            self.add_term(k, v * c);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, Complex64::new(1.0, 0.0));
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, Complex64::new(-1.0, 0.0));
        out
    }

    /// Multiply every term by c p^da (p0)^db.
    pub fn mul_radial(&self, c: Complex64, da: i32, db: i32) -> Self {
        let mut out = self.empty_like();
        for (&k, &v) in &self.terms {
            out.add_canonical(TermKey { a: k.a + da, b: k.b + db, ..k }, v * c);
        }
        out
    }

    /// Multiply by an angular factor (n^i, m^i or mbar^i), moving to
    /// component r + dr so that the spin weight matches.
    pub fn mul_angular(&self, factor: AngularFactor, dr: i32, c: Complex64) -> Self {
        let mut out = self.empty_like();
        for (&k, &v) in &self.terms {
            let r_new = k.r as i32 + dr;
            if r_new < 0 || r_new > self.two_s as i32 {
                continue;
            }
            debug_assert_eq!(self.two_sigma(k.r) + factor.two_weight(), self.two_sigma(r_new as u16));
            for &(two_jp, two_mp, cc) in coupling(factor, self.two_sigma(k.r), k.two_j, k.two_m).iter() {
                out.add_term(TermKey { r: r_new as u16, two_j: two_jp, two_m: two_mp, ..k }, v * c * cc);
            }
        }
        out
    }

    /// d/dp acting on the radial factors (f included).
    pub fn d_dp(&self) -> Self {
        let mut out = self.empty_like();
        let g = self.profile;
        let mut groups: BTreeMap<(u16, i32, i32), RadialExpr> = BTreeMap::new();
        for (&k, &v) in &self.terms {
            groups.entry((k.r, k.two_j, k.two_m)).or_default().add_term(v, k.a, k.b);
        }
        for ((r, two_j, two_m), rad) in groups {
            for (&(a, b), &c) in &rad.derivative(&g).terms {
                out.add_term(TermKey { r, two_j, two_m, a, b }, c);
            }
        }
        out
    }

    /// Largest 2j present.
    pub fn max_two_j(&self) -> i32 {
        self.terms.keys().map(|k| k.two_j).max().unwrap_or(0)
    }

    /// Pointwise value of phi_r.
    pub fn eval(&self, r: usize, p: f64, theta: f64, phi: f64) -> Complex64 {
        let p0 = self.profile.p0(p);
        let f = self.profile.value(p);
        let mut acc = ZERO;
        for (k, &v) in self.terms.range(
            TermKey { r: r as u16, two_j: i32::MIN, two_m: i32::MIN, a: i32::MIN, b: i32::MIN }
                ..=TermKey { r: r as u16, two_j: i32::MAX, two_m: i32::MAX, a: i32::MAX, b: i32::MAX },
        ) {
            let idx = SwshIndex { two_sigma: self.two_sigma(k.r), two_j: k.two_j, two_m: k.two_m };
            acc += v * p.powi(k.a) * p0.powi(k.b) * f * swsh_value(idx, theta, phi);
        }
        acc
    }

    /// Radial integrand of <self|other>: sum over r of C(2s,r) conj(phi_r) psi_r
    /// integrated over the sphere, as a radial expression.
    pub fn inner_density(&self, other: &Self) -> Result<RadialExpr, StateError> {
        self.check_compatible(other)?;
        let mut out = RadialExpr::default();
        let group = |s: &Self| {
            let mut g: BTreeMap<(u16, i32, i32), Vec<(i32, i32, Complex64)>> = BTreeMap::new();
            for (k, &v) in &s.terms {
                g.entry((k.r, k.two_j, k.two_m)).or_default().push((k.a, k.b, v));
            }
            g
        };
        let (g1, g2) = (group(self), group(other));
        for (key, t1) in &g1 {
            let Some(t2) = g2.get(key) else { continue };
            let w = binomial(self.two_s, key.0 as u32);
            for &(a1, b1, c1) in t1 {
                for &(a2, b2, c2) in t2 {
                    out.add_term(c1.conj() * c2 * w, a1 + a2, b1 + b2);
                }
            }
        }
        Ok(out.canonical(self.profile.mu))
    }

    /// The L2 scalar product on the mass shell.
    pub fn inner(&self, other: &Self) -> Result<Complex64, StateError> {
        radial_integral(&self.inner_density(other)?, &self.profile)
    }

    pub fn norm_sqr(&self) -> Result<f64, StateError> {
        Ok(self.inner(self)?.re)
    }
}

/// Free function form of the scalar product.
pub fn state_inner(phi: &QState, psi: &QState) -> Result<Complex64, StateError> {
    phi.inner(psi)
}

/// A random state that is smooth at p = 0: every term carries at least
/// p^{j+2}, so up to two derivatives stay square integrable.
pub fn random_smooth_state(two_s: u32, n_terms: usize, profile: GaussianProfile, hbar: f64, rng: &mut impl rand::Rng) -> QState {
    let mut st = QState::zero(two_s, profile, hbar);
    for _ in 0..n_terms {
        let r = rng.gen_range(0..=two_s) as u16;
        let two_sigma = st.two_sigma(r);
        let two_j = two_sigma.abs() + 2 * rng.gen_range(0..=3);
        let two_m = -two_j + 2 * rng.gen_range(0..=two_j);
        let a = (two_j + 1) / 2 + 2 + rng.gen_range(0..=1);
        let b = rng.gen_range(0..=1);
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        st.add_term(TermKey { r, two_j, two_m, a, b }, c);
    }
    st
}
