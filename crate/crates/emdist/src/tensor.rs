//! Dense 4-dimensional tensors, the Minkowski metric, the Levi-Civita symbol
//! and proper orthochronous Lorentz / Poincare transformations.
//!
//! Signature is (+,-,-,-). Index positions are never implicit: a tensor is a
//! bag of numbers and the caller raises or lowers slots by contracting with
//! [`Tensor4::metric`].

use num_complex::Complex64;

use crate::error::TensorError;

pub const MAX_RANK: usize = 8;
pub const ETA: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

pub type Vec4 = [f64; 4];
pub type Mat4 = [[f64; 4]; 4];

/// Minkowski product of two real 4-vectors.
pub fn dot(a: &Vec4, b: &Vec4) -> f64 {
    a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
}

pub fn lower(v: &Vec4) -> Vec4 {
    [v[0], -v[1], -v[2], -v[3]]
}

/// Sign of the permutation (a,b,c,d) of (0,1,2,3), or 0 on a repeated index.
pub fn levi_civita(a: usize, b: usize, c: usize, d: usize) -> f64 {
    let idx = [a, b, c, d];
    for i in 0..4 {
        for j in (i + 1)..4 {
            if idx[i] == idx[j] {
                return 0.0;
            }
        }
    }
    let mut sign = 1.0;
    let mut p = idx;
    for i in 0..4 {
        while p[i] != i {
            let t = p[i];
            p.swap(i, t);
            sign = -sign;
        }
    }
    sign
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    rank: usize,
    data: Vec<Complex64>,
}

fn flat_index(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * 4 + i)
}

fn unflatten(mut n: usize, rank: usize, out: &mut [usize]) {
    for k in (0..rank).rev() {
        out[k] = n % 4;
        n /= 4;
    }
}

impl Tensor4 {
    pub fn zeros(rank: usize) -> Result<Self, TensorError> {
        if rank > MAX_RANK {
            return Err(TensorError::RankOverflow(rank));
        }
        Ok(Self { rank, data: vec![Complex64::new(0.0, 0.0); 1 << (2 * rank)] })
    }

    pub fn from_fn(rank: usize, f: impl Fn(&[usize]) -> Complex64) -> Result<Self, TensorError> {
        let mut t = Self::zeros(rank)?;
        let mut idx = vec![0usize; rank];
        for n in 0..t.data.len() {
            unflatten(n, rank, &mut idx);
            t.data[n] = f(&idx);
        }
        Ok(t)
    }

    pub fn scalar(c: Complex64) -> Self {
        Self { rank: 0, data: vec![c] }
    }

    pub fn vector(v: &Vec4) -> Self {
        Self { rank: 1, data: v.iter().map(|&x| Complex64::new(x, 0.0)).collect() }
    }

    pub fn matrix(m: &Mat4) -> Self {
        let data = m.iter().flat_map(|row| row.iter().map(|&x| Complex64::new(x, 0.0))).collect();
        Self { rank: 2, data }
    }

    /// eta_{ab}; numerically identical to eta^{ab}.
    pub fn metric() -> Self {
        let mut m = [[0.0; 4]; 4];
        for a in 0..4 {
            m[a][a] = ETA[a];
        }
        Self::matrix(&m)
    }

    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for a in 0..4 {
            m[a][a] = 1.0;
        }
        Self::matrix(&m)
    }

    /// epsilon_{abcd} with all indices down and epsilon_{0123} = +1.
    pub fn epsilon() -> Self {
        Self::from_fn(4, |i| Complex64::new(levi_civita(i[0], i[1], i[2], i[3]), 0.0))
            .expect("rank 4 is allowed")
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> Complex64 {
        debug_assert_eq!(idx.len(), self.rank);
        self.data[flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: Complex64) {
        debug_assert_eq!(idx.len(), self.rank);
        let n = flat_index(idx);
        self.data[n] = v;
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { rank: self.rank, data: self.data.iter().map(|x| x * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        if self.rank != other.rank {
            return Err(TensorError::RankMismatch(self.rank, other.rank));
        }
        Ok(Self {
            rank: self.rank,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Contract `slot` with the metric, i.e. raise or lower that index.
    pub fn flip_slot(&self, slot: usize) -> Result<Self, TensorError> {
        if slot >= self.rank {
            return Err(TensorError::SlotOutOfRange { slot, rank: self.rank });
        }
        let mut out = self.clone();
        let mut idx = vec![0usize; self.rank];
        for n in 0..out.data.len() {
            unflatten(n, self.rank, &mut idx);
            out.data[n] *= ETA[idx[slot]];
        }
        Ok(out)
    }
}

/// Sum over the listed (slot of t1, slot of t2) pairs. The result carries the
/// free slots of t1 followed by the free slots of t2, each in original order.
pub fn contract(t1: &Tensor4, t2: &Tensor4, pairs: &[(usize, usize)]) -> Result<Tensor4, TensorError> {
    for &(a, b) in pairs {
        if a >= t1.rank {
            return Err(TensorError::SlotOutOfRange { slot: a, rank: t1.rank });
        }
        if b >= t2.rank {
            return Err(TensorError::SlotOutOfRange { slot: b, rank: t2.rank });
        }
    }
    for (i, &(a, b)) in pairs.iter().enumerate() {
        if pairs[..i].iter().any(|&(x, y)| x == a || y == b) {
            return Err(TensorError::RepeatedSlot);
        }
    }
    let k = pairs.len();
    let rank = t1.rank + t2.rank - 2 * k;
    if rank > MAX_RANK {
        return Err(TensorError::RankOverflow(rank));
    }
    let free1: Vec<usize> = (0..t1.rank).filter(|s| !pairs.iter().any(|p| p.0 == *s)).collect();
    let free2: Vec<usize> = (0..t2.rank).filter(|s| !pairs.iter().any(|p| p.1 == *s)).collect();

    let mut out = Tensor4::zeros(rank)?;
    let mut oidx = vec![0usize; rank];
    let mut cidx = vec![0usize; k];
    let mut i1 = vec![0usize; t1.rank];
    let mut i2 = vec![0usize; t2.rank];
    for n in 0..out.data.len() {
        unflatten(n, rank, &mut oidx);
        for (pos, &s) in free1.iter().enumerate() {
            i1[s] = oidx[pos];
        }
        for (pos, &s) in free2.iter().enumerate() {
            i2[s] = oidx[free1.len() + pos];
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for c in 0..(1usize << (2 * k)) {
            unflatten(c, k, &mut cidx);
            for (q, &(a, b)) in pairs.iter().enumerate() {
                i1[a] = cidx[q];
                i2[b] = cidx[q];
            }
            acc += t1.data[flat_index(&i1)] * t2.data[flat_index(&i2)];
        }
        out.data[n] = acc;
    }
    Ok(out)
}

/// Proper orthochronous Lorentz matrix Lambda^a_b.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LorentzTransform {
    m: Mat4,
}

pub const LORENTZ_TOL: f64 = 1e-12;

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            c[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn det4(m: &Mat4) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in (col + 1)..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det
}

impl LorentzTransform {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for a in 0..4 {
            m[a][a] = 1.0;
        }
        Self { m }
    }

    /// Validates the Lorentz conditions before accepting the matrix.
    pub fn new(m: Mat4) -> Result<Self, TensorError> {
        let t = Self { m };
        let defect = t.metric_defect();
        if !(defect <= LORENTZ_TOL * t.scale()) {
            return Err(TensorError::NotLorentz(defect));
        }
        let det = det4(&m);
        if (det - 1.0).abs() > LORENTZ_TOL * t.scale().powi(2) {
            return Err(TensorError::NotProper(det));
        }
        if m[0][0] < 1.0 - LORENTZ_TOL {
            return Err(TensorError::NotOrthochronous(m[0][0]));
        }
        Ok(t)
    }

    /// Pure boost with rapidity vector chi; Lambda^0_0 = cosh|chi|.
    pub fn boost(chi: [f64; 3]) -> Self {
        let r = (chi[0] * chi[0] + chi[1] * chi[1] + chi[2] * chi[2]).sqrt();
        if r == 0.0 {
            return Self::identity();
        }
        let n = [chi[0] / r, chi[1] / r, chi[2] / r];
        let (ch, sh) = (r.cosh(), r.sinh());
        let mut m = [[0.0; 4]; 4];
        m[0][0] = ch;
        for i in 0..3 {
            m[0][i + 1] = sh * n[i];
            m[i + 1][0] = sh * n[i];
            for j in 0..3 {
                m[i + 1][j + 1] = if i == j { 1.0 } else { 0.0 } + (ch - 1.0) * n[i] * n[j];
            }
        }
        Self { m }
    }

    /// Spatial rotation about `axis` by `angle` (right-handed).
    pub fn rotation(axis: [f64; 3], angle: f64) -> Self {
        let r = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if r == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let k = [axis[0] / r, axis[1] / r, axis[2] / r];
        let (c, s) = (angle.cos(), angle.sin());
        let mut m = [[0.0; 4]; 4];
        m[0][0] = 1.0;
        let cross = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                m[i + 1][j + 1] = c * id + s * cross[i][j] + (1.0 - c) * k[i] * k[j];
            }
        }
        Self { m }
    }

    /// Pure boost sending (1,0,0,0) to the future unit timelike vector `u`.
    pub fn boost_to(u: &Vec4) -> Self {
        let v = (u[1] * u[1] + u[2] * u[2] + u[3] * u[3]).sqrt();
        if v == 0.0 {
            return Self::identity();
        }
        let chi = v.asinh();
        Self::boost([chi * u[1] / v, chi * u[2] / v, chi * u[3] / v])
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.m
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.m[a][b]
    }

    /// self * other, i.e. apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self { m: mat_mul(&self.m, &other.m) }
    }

    /// eta Lambda^T eta.
    pub fn inverse(&self) -> Self {
        let mut m = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] = ETA[a] * self.m[b][a] * ETA[b];
            }
        }
        Self { m }
    }

    pub fn apply(&self, v: &Vec4) -> Vec4 {
        let mut out = [0.0; 4];
        for a in 0..4 {
            out[a] = (0..4).map(|b| self.m[a][b] * v[b]).sum();
        }
        out
    }

    pub fn column(&self, b: usize) -> Vec4 {
        [self.m[0][b], self.m[1][b], self.m[2][b], self.m[3][b]]
    }

    /// Largest entry of |Lambda^T eta Lambda - eta|.
    pub fn metric_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let g: f64 = (0..4).map(|c| self.m[c][a] * ETA[c] * self.m[c][b]).sum();
                let target = if a == b { ETA[a] } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> f64 {
        det4(&self.m)
    }

    fn scale(&self) -> f64 {
        self.m[0][0].max(1.0).powi(2)
    }

    pub fn as_tensor(&self) -> Tensor4 {
        Tensor4::matrix(&self.m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoincareTransform {
    pub lorentz: LorentzTransform,
    pub translation: Vec4,
}

impl PoincareTransform {
    pub fn new(lorentz: LorentzTransform, translation: Vec4) -> Self {
        Self { lorentz, translation }
    }

    pub fn identity() -> Self {
        Self { lorentz: LorentzTransform::identity(), translation: [0.0; 4] }
    }

    pub fn apply(&self, x: &Vec4) -> Vec4 {
        let y = self.lorentz.apply(x);
        [y[0] + self.translation[0], y[1] + self.translation[1], y[2] + self.translation[2], y[3] + self.translation[3]]
    }

    /// self after other: x -> self(other(x)).
    pub fn compose(&self, other: &Self) -> Self {
        let t = self.apply(&other.translation);
        Self { lorentz: self.lorentz.compose(&other.lorentz), translation: t }
    }

    pub fn inverse(&self) -> Self {
        let inv = self.lorentz.inverse();
        let t = inv.apply(&self.translation);
        Self { lorentz: inv, translation: [-t[0], -t[1], -t[2], -t[3]] }
    }
}
