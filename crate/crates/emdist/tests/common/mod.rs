//! Reference evaluations used as independent oracles by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn fact(n: i32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binom(n: i32, k: i32) -> f64 {
    if k < 0 || k > n {
        0.0
    } else {
        fact(n) / (fact(k) * fact(n - k))
    }
}

/// sY_{j,m} from the symmetrized contraction of the Cartesian spin frame
/// {O, I} with the un-boosted dyad, evaluated directly in zeta.
pub fn dyad_swsh(two_sigma: i32, two_j: i32, two_m: i32, zeta: Complex64) -> Complex64 {
    let a = (two_j - two_m) / 2; // number of O's
    let b = (two_j + two_m) / 2;
    let c = (two_j + two_sigma) / 2; // number of o-tilde
    let d = (two_j - two_sigma) / 2;
    let sq = 1.0 / (1.0 + zeta.norm_sqr()).sqrt();
    // O_A x^A = x^1, I_A x^A = -x^0
    let o_t = [-I * sq * zeta, -I * sq];
    let i_t = [-I * sq, I * sq * zeta.conj()];
    let (oo, io) = (o_t[1], -o_t[0]);
    let (oi, ii) = (i_t[1], -i_t[0]);
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..=a.min(c) {
        if a - k > d {
            continue;
        }
        let term = oo.powi(k) * oi.powi(a - k) * io.powi(c - k) * ii.powi(d - a + k);
        sum += term * (binom(c, k) * binom(d, a - k));
    }
    sum /= binom(two_j, a);
    let sign = if ((two_j + two_m) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let n = sign * ((two_j as f64 + 1.0) / (4.0 * std::f64::consts::PI)).sqrt() * fact(two_j)
        / (fact(a) * fact(b) * fact(c) * fact(d)).sqrt();
    sum * n
}

pub fn zeta_of(theta: f64, phi: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (theta / 2.0).tan(), phi)
}
