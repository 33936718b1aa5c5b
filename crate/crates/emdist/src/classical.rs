//! Classical elementary systems (p^a, J^{ab}), their centre-of-mass lines,
//! and the Lorentzian distance between two such lines.
//!
//! All returned 4-vectors carry an upper index. `J` is stored as J^{ab}.

use crate::error::GeometryError;
use crate::tensor::{dot, levi_civita, lower, LorentzTransform, Mat4, Vec4, ETA};

/// Relative threshold on P^4 - mu1^2 mu2^2 below which momenta count as parallel.
pub const PARALLEL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalSystem {
    pub p: Vec4,
    pub j: Mat4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimelikeLine {
    pub boost: LorentzTransform,
    pub translation: Vec4,
}

impl TimelikeLine {
    pub fn new(boost: LorentzTransform, translation: Vec4) -> Self {
        Self { boost, translation }
    }

    /// u^a = Lambda^a_0.
    pub fn tangent(&self) -> Vec4 {
        self.boost.column(0)
    }

    pub fn point(&self, u: f64) -> Vec4 {
        let t = self.tangent();
        let x = self.translation;
        [x[0] + u * t[0], x[1] + u * t[1], x[2] + u * t[2], x[3] + u * t[3]]
    }
}

fn sub(a: &Vec4, b: &Vec4) -> Vec4 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

fn scale(a: &Vec4, s: f64) -> Vec4 {
    [a[0] * s, a[1] * s, a[2] * s, a[3] * s]
}

/// eps^a_{bcd} x^b y^c z^d with the first index raised.
fn eps_up(x: &Vec4, y: &Vec4, z: &Vec4) -> Vec4 {
    let mut out = [0.0; 4];
    for a in 0..4 {
        let mut acc = 0.0;
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let e = levi_civita(a, b, c, d);
                    if e != 0.0 {
                        acc += e * x[b] * y[c] * z[d];
                    }
                }
            }
        }
        out[a] = ETA[a] * acc;
    }
    out
}

impl ClassicalSystem {
    pub fn new(p: Vec4, j: Mat4) -> Result<Self, GeometryError> {
        let pp = dot(&p, &p);
        if !(pp > 0.0 && p[0] > 0.0) {
            return Err(GeometryError::NotTimelike(pp));
        }
        let scale = j.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        for a in 0..4 {
            for b in 0..4 {
                if (j[a][b] + j[b][a]).abs() > 1e-12 * scale {
                    return Err(GeometryError::NotAntisymmetric);
                }
            }
        }
        Ok(Self { p, j })
    }

    pub fn mu(&self) -> f64 {
        dot(&self.p, &self.p).sqrt()
    }

    /// J_{ab} with both indices lowered.
    pub fn j_lower(&self) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                out[a][b] = ETA[a] * ETA[b] * self.j[a][b];
            }
        }
        out
    }

    /// (S^a, M^a, residual of the spin/orbit decomposition).
    pub fn spin_and_moment(&self) -> (Vec4, Vec4, f64) {
        let jl = self.j_lower();
        let p = self.p;
        let pl = lower(&p);
        let mut s_low = [0.0; 4];
        let mut m_low = [0.0; 4];
        for a in 0..4 {
            let mut acc = 0.0;
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        acc += 0.5 * levi_civita(a, b, c, d) * self.j[b][c] * p[d];
                    }
                }
            }
            s_low[a] = acc;
            m_low[a] = (0..4).map(|b| jl[a][b] * p[b]).sum();
        }
        let s_up = lower(&s_low);
        let mu2 = dot(&p, &p);
        let mut residual: f64 = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let mut eps_term = 0.0;
                for c in 0..4 {
                    for d in 0..4 {
                        eps_term += levi_civita(a, b, c, d) * s_up[c] * p[d];
                    }
                }
                let r = mu2 * jl[a][b] + eps_term - m_low[a] * pl[b] + m_low[b] * pl[a];
                residual = residual.max(r.abs());
            }
        }
        (s_up, lower(&m_low), residual)
    }
}

/// Pure boost to u = p / mu, passing through M / mu^2.
pub fn line_from_system(sys: &ClassicalSystem) -> TimelikeLine {
    let mu = sys.mu();
    let u = scale(&sys.p, 1.0 / mu);
    let (_, m, _) = sys.spin_and_moment();
    TimelikeLine::new(LorentzTransform::boost_to(&u), scale(&m, 1.0 / (mu * mu)))
}

/// p = mu Lambda delta_0, rest-frame J^{12} = s0 (so S^a = mu s0 Lambda^a_3),
/// and M = mu^2 times the part of xi orthogonal to the tangent.
pub fn system_from_line(line: &TimelikeLine, mu: f64, s0: f64) -> Result<ClassicalSystem, GeometryError> {
    if !(mu > 0.0) {
        return Err(GeometryError::InvalidParameter(format!("mass {mu} must be positive")));
    }
    if !(s0 >= 0.0) {
        return Err(GeometryError::InvalidParameter(format!("spin {s0} must be non-negative")));
    }
    let u = line.tangent();
    let uu = dot(&u, &u);
    if !(uu > 0.0 && u[0] > 0.0) {
        return Err(GeometryError::NotTimelike(uu));
    }
    let p = scale(&u, mu);
    let xi = line.translation;
    let xi_perp = sub(&xi, &scale(&u, dot(&xi, &u)));
    let mut j = [[0.0; 4]; 4];
    let l = line.boost.matrix();
    for a in 0..4 {
        for b in 0..4 {
            // Lambda^a_1 Lambda^b_2 - Lambda^a_2 Lambda^b_1 carries the rest-frame J^{12}.
            let spin = s0 * (l[a][1] * l[b][2] - l[a][2] * l[b][1]);
            j[a][b] = spin + xi_perp[a] * p[b] - xi_perp[b] * p[a];
        }
    }
    ClassicalSystem::new(p, j)
}

/// Pair invariants (P^2_12, S^a_12, Pi^a_b).
pub fn pair_invariants(s1: &ClassicalSystem, s2: &ClassicalSystem) -> Result<(f64, Vec4, Mat4), GeometryError> {
    let p1 = s1.p;
    let p2 = s2.p;
    let pp = dot(&p1, &p2);
    let mu1s = dot(&p1, &p1);
    let mu2s = dot(&p2, &p2);
    let den = pp * pp - mu1s * mu2s;
    if den <= PARALLEL_TOL * mu1s * mu2s {
        return Err(GeometryError::ParallelMomenta);
    }
    let mut s12 = [0.0; 4];
    for a in 0..4 {
        let mut acc = 0.0;
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let e = levi_civita(a, b, c, d);
                    if e != 0.0 {
                        acc += 0.5 * e * (s1.j[b][c] * p2[d] + s2.j[b][c] * p1[d]);
                    }
                }
            }
        }
        s12[a] = ETA[a] * acc;
    }
    Ok((pp, s12, projector(&p1, &p2)?))
}

/// Pi^a_b onto the spacelike 2-plane orthogonal to the two timelike vectors.
pub fn projector(p1: &Vec4, p2: &Vec4) -> Result<Mat4, GeometryError> {
    let pp = dot(p1, p2);
    let m1 = dot(p1, p1);
    let m2 = dot(p2, p2);
    let den = pp * pp - m1 * m2;
    if den <= PARALLEL_TOL * m1 * m2 {
        return Err(GeometryError::ParallelMomenta);
    }
    let l1 = lower(p1);
    let l2 = lower(p2);
    let mut pi = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let d = if a == b { 1.0 } else { 0.0 };
            pi[a][b] = d + (m2 * p1[a] * l1[b] + m1 * p2[a] * l2[b] - pp * (p1[a] * l2[b] + p2[a] * l1[b])) / den;
        }
    }
    Ok(pi)
}

/// (d^a_12, d_12) from the pair observables.
pub fn relative_position(s1: &ClassicalSystem, s2: &ClassicalSystem) -> Result<(Vec4, f64), GeometryError> {
    let (pp, s12, _) = pair_invariants(s1, s2)?;
    let (sv1, _, _) = s1.spin_and_moment();
    let (sv2, _, _) = s2.spin_and_moment();
    let m1 = s1.mu().powi(2);
    let m2 = s2.mu().powi(2);
    let den = pp * pp - m1 * m2;
    let w = [0, 1, 2, 3].map(|d| s12[d] - pp * (sv1[d] / m1 + sv2[d] / m2));
    let e = eps_up(&s1.p, &s2.p, &w);
    let d = scale(&e, -1.0 / den);
    let len = (-dot(&d, &d)).max(0.0).sqrt();
    Ok((d, len))
}

/// D_12 = sqrt(-Pi_ab dxi^a dxi^b).
pub fn lorentz_distance(l1: &TimelikeLine, l2: &TimelikeLine) -> Result<f64, GeometryError> {
    let pi = projector(&l1.tangent(), &l2.tangent()).map_err(|_| GeometryError::ParallelTangents)?;
    let dx = sub(&l1.translation, &l2.translation);
    let mut q = 0.0;
    for a in 0..4 {
        let pdx: f64 = (0..4).map(|b| pi[a][b] * dx[b]).sum();
        q += ETA[a] * dx[a] * pdx;
    }
    Ok((-q).max(0.0).sqrt())
}

/// Common perpendicular found by solving for the two line parameters.
pub fn closest_approach_oracle(l1: &TimelikeLine, l2: &TimelikeLine) -> Result<(Vec4, Vec4, f64), GeometryError> {
    let t1 = l1.tangent();
    let t2 = l2.tangent();
    let c = dot(&t1, &t2);
    let det = c * c - 1.0;
    if det <= PARALLEL_TOL {
        return Err(GeometryError::ParallelTangents);
    }
    let dx = sub(&l1.translation, &l2.translation);
    let (r1, r2) = (-dot(&dx, &t1), -dot(&dx, &t2));
    // [1 -c; c -1][u1; u2] = [r1; r2]
    let u1 = (-r1 + c * r2) / det;
    let u2 = (r2 - c * r1) / det;
    let nu12 = l1.point(u1);
    let nu21 = l2.point(u2);
    let sep = sub(&nu12, &nu21);
    Ok((nu12, nu21, (-dot(&sep, &sep)).max(0.0).sqrt()))
}

/// Unit spacelike vector orthogonal to the given (mutually orthogonal) vectors.
fn complete(basis: &[Vec4]) -> Vec4 {
    for cand in [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 0.0]] {
        let mut w: Vec4 = cand;
        for b in basis {
            let bb = dot(b, b);
            w = sub(&w, &scale(b, dot(&w, b) / bb));
        }
        let n = dot(&w, &w);
        if n < -1e-6 {
            return scale(&w, 1.0 / (-n).sqrt());
        }
    }
    unreachable!("a spacelike completion always exists in four dimensions")
}

/// Line through x with unit timelike tangent t.
fn line_through(x: &Vec4, t: &Vec4) -> TimelikeLine {
    TimelikeLine::new(LorentzTransform::boost_to(t), *x)
}

/// Two non-parallel lines whose distance realizes the separation of x1, x2:
/// the Lorentzian distance for spacelike separation, T/2 for timelike.
pub fn realize_point_distance(x1: &Vec4, x2: &Vec4) -> Result<(TimelikeLine, TimelikeLine), GeometryError> {
    let dx = sub(x1, x2);
    let q = dot(&dx, &dx);
    let scale_ref = dx.iter().map(|v| v * v).sum::<f64>();
    if scale_ref == 0.0 {
        return Err(GeometryError::CoincidentPoints);
    }
    if q.abs() <= 1e-12 * scale_ref {
        return Err(GeometryError::NullSeparation);
    }
    let tilt = 0.5f64;
    if q < 0.0 {
        let n = scale(&dx, 1.0 / (-q).sqrt());
        let e0 = [1.0, 0.0, 0.0, 0.0];
        let t = sub(&e0, &scale(&n, -dot(&e0, &n)));
        let t = scale(&t, 1.0 / dot(&t, &t).sqrt());
        let w = complete(&[t, n]);
        let t2 = [0, 1, 2, 3].map(|a| tilt.cosh() * t[a] + tilt.sinh() * w[a]);
        Ok((line_through(x1, &t), line_through(x2, &t2)))
    } else {
        let tt = q.sqrt();
        let u = scale(&dx, if dx[0] > 0.0 { 1.0 / tt } else { -1.0 / tt });
        let mid = [0, 1, 2, 3].map(|a| 0.5 * (x1[a] + x2[a]));
        let n = complete(&[u]);
        let w = complete(&[u, n]);
        let xt = [0, 1, 2, 3].map(|a| mid[a] + 0.5 * tt * n[a]);
        let t2 = [0, 1, 2, 3].map(|a| tilt.cosh() * u[a] + tilt.sinh() * w[a]);
        Ok((line_through(&mid, &u), line_through(&xt, &t2)))
    }
}
