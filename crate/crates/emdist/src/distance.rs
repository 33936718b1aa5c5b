//! Two-particle operators as index polynomials in p and J, their
//! transformation by the frames of the two states, and the empirical
//! distance built from their expectation values.
//!
//! A polynomial term is a coefficient, a list of bound numerical tensors and
//! one word per particle. Every label occurs exactly twice in a term (summed)
//! unless it is one of the polynomial's free labels. Letters carry upper
//! indices; a lowered slot means eta is applied to that index.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::TimelikeLine;
use crate::error::{DistanceError, StateError, TensorError};
use crate::operators::{OperatorSymbol, apply_operator};
use crate::states::{Chirality, GaussianProfile, QState};
use crate::tensor::{ETA, MAX_RANK, Mat4, PoincareTransform, Tensor4, Vec4, contract};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Longest word allowed on one particle; the square of A needs 12.
pub const MAX_WORD: usize = 12;
/// <B> at or below this multiple of mu1^2 mu2^2 is treated as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-10;
/// Largest accepted |Im<A>| / |<A>|.
pub const IMAG_TOL: f64 = 1e-8;
/// Default largest spin for which the A variance is attempted.
pub const DEFAULT_UNCERTAINTY_CAP: f64 = 8.0;

pub type Label = u8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub label: Label,
    pub lower: bool,
}

impl Slot {
    pub fn up(label: Label) -> Self {
        Slot { label, lower: false }
    }

    pub fn down(label: Label) -> Self {
        Slot { label, lower: true }
    }
}

/// p^a or J^{ab} of one particle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    P(Slot),
    J(Slot, Slot),
}

impl Letter {
    pub fn slots(&self) -> Vec<Slot> {
        match *self {
            Letter::P(a) => vec![a],
            Letter::J(a, b) => vec![a, b],
        }
    }

    pub fn is_j(&self) -> bool {
        matches!(self, Letter::J(..))
    }

    fn relabel(&self, f: impl Fn(Label) -> Label) -> Letter {
        let g = |s: Slot| Slot { label: f(s.label), lower: s.lower };
        match *self {
            Letter::P(a) => Letter::P(g(a)),
            Letter::J(a, b) => Letter::J(g(a), g(b)),
        }
    }
}

/// What a bound tensor is; the numbers live in [`Constant::tensor`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConstKind {
    /// eta_{ab}
    Eta,
    /// epsilon_{abcd} with epsilon_{0123} = 1
    Eps,
    /// Lambda^a_b of one particle's frame, eta on the first slot if lowered
    Lorentz { particle: usize, lowered: bool },
    /// xi^a Lambda^b_c - xi^b Lambda^a_c of one particle's frame
    Wedge { particle: usize, lower_a: bool, lower_b: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constant {
    pub kind: ConstKind,
    pub labels: Vec<Label>,
    pub tensor: Tensor4,
}

impl Constant {
    pub fn eta(a: Label, b: Label) -> Self {
        Constant { kind: ConstKind::Eta, labels: vec![a, b], tensor: Tensor4::metric() }
    }

    pub fn eps(a: Label, b: Label, c: Label, d: Label) -> Self {
        Constant { kind: ConstKind::Eps, labels: vec![a, b, c, d], tensor: Tensor4::epsilon() }
    }

    fn lorentz(particle: usize, lowered: bool, m: &Mat4, out: Label, inn: Label) -> Self {
        let mut t = Tensor4::zeros(2).expect("rank 2");
        for a in 0..4 {
            let s = if lowered { ETA[a] } else { 1.0 };
            for b in 0..4 {
                t.set(&[a, b], ONE * (s * m[a][b]));
            }
        }
        Constant { kind: ConstKind::Lorentz { particle, lowered }, labels: vec![out, inn], tensor: t }
    }

    fn wedge(particle: usize, la: bool, lb: bool, m: &Mat4, xi: &Vec4, labels: [Label; 3]) -> Self {
        let mut t = Tensor4::zeros(3).expect("rank 3");
        for a in 0..4 {
            for b in 0..4 {
                let s = if la { ETA[a] } else { 1.0 } * if lb { ETA[b] } else { 1.0 };
                for c in 0..4 {
                    t.set(&[a, b, c], ONE * (s * (xi[a] * m[b][c] - xi[b] * m[a][c])));
                }
            }
        }
        Constant { kind: ConstKind::Wedge { particle, lower_a: la, lower_b: lb }, labels: labels.to_vec(), tensor: t }
    }

    fn particle(&self) -> Option<usize> {
        match self.kind {
            ConstKind::Lorentz { particle, .. } | ConstKind::Wedge { particle, .. } => Some(particle),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyTerm {
    pub coeff: Complex64,
    pub constants: Vec<Constant>,
    pub words: [Vec<Letter>; 2],
}

impl PolyTerm {
    fn label_counts(&self) -> BTreeMap<Label, usize> {
        let mut m = BTreeMap::new();
        for c in &self.constants {
            for &l in &c.labels {
                *m.entry(l).or_insert(0) += 1;
            }
        }
        for w in &self.words {
            for l in w {
                for s in l.slots() {
                    *m.entry(s.label).or_insert(0) += 1;
                }
            }
        }
        m
    }

    fn max_label(&self) -> Option<Label> {
        self.label_counts().keys().next_back().copied()
    }

    fn shifted(&self, k: Label) -> Self {
        PolyTerm {
            coeff: self.coeff,
            constants: self
                .constants
                .iter()
                .map(|c| Constant { labels: c.labels.iter().map(|l| l + k).collect(), ..c.clone() })
                .collect(),
            words: [
                self.words[0].iter().map(|l| l.relabel(|x| x + k)).collect(),
                self.words[1].iter().map(|l| l.relabel(|x| x + k)).collect(),
            ],
        }
    }

    /// Number of J letters over both particles.
    pub fn j_count(&self) -> usize {
        self.words.iter().flatten().filter(|l| l.is_j()).count()
    }
}

/// Sum of terms sharing a list of free labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OperatorPolynomial {
    pub free: Vec<Label>,
    pub terms: Vec<PolyTerm>,
}

impl OperatorPolynomial {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn validate(&self) -> Result<(), DistanceError> {
        for (n, t) in self.terms.iter().enumerate() {
            for (i, w) in t.words.iter().enumerate() {
                if w.len() > MAX_WORD {
                    return Err(DistanceError::Malformed(format!("term {n}: word of particle {} has {} letters", i + 1, w.len())));
                }
            }
            for (l, c) in t.label_counts() {
                let want = if self.free.contains(&l) { 1 } else { 2 };
                if c != want {
                    return Err(DistanceError::Malformed(format!("term {n}: label {l} occurs {c} times")));
                }
            }
            for &f in &self.free {
                if !t.label_counts().contains_key(&f) {
                    return Err(DistanceError::Malformed(format!("term {n}: free label {f} missing")));
                }
            }
        }
        Ok(())
    }

    fn max_label(&self) -> Option<Label> {
        self.terms.iter().filter_map(|t| t.max_label()).chain(self.free.iter().copied()).max()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coeff *= c;
        }
        out
    }

    /// Operator product self * other; the labels of `other` are shifted
    /// past those of `self`, and the free labels are concatenated.
    pub fn product(&self, other: &Self) -> Result<Self, DistanceError> {
        let k = self.max_label().map_or(0, |m| m as usize + 1);
        if k + other.max_label().map_or(0, |m| m as usize) > Label::MAX as usize {
            return Err(DistanceError::Malformed("too many index labels".into()));
        }
        let k = k as Label;
        let mut terms = Vec::with_capacity(self.len() * other.len());
        for a in &self.terms {
            for b in &other.terms {
                let b = b.shifted(k);
                let mut constants = a.constants.clone();
                constants.extend(b.constants);
                let [w1, w2] = &a.words;
                let [v1, v2] = b.words;
                terms.push(PolyTerm {
                    coeff: a.coeff * b.coeff,
                    constants,
                    words: [w1.iter().copied().chain(v1).collect(), w2.iter().copied().chain(v2).collect()],
                });
            }
        }
        let mut free = self.free.clone();
        free.extend(other.free.iter().map(|l| l + k));
        Ok(OperatorPolynomial { free, terms })
    }
}

/// The two-particle operators of interest.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoBodyOperators {
    /// Sigma^a = C_1^a / mu_1^2 - C_2^a / mu_2^2, free label 0
    pub sigma: OperatorPolynomial,
    pub a: OperatorPolynomial,
    pub b: OperatorPolynomial,
    /// eta_ab p_1^a p_2^b
    pub p12sq: OperatorPolynomial,
    /// S_12^a, free label 0
    pub s12: OperatorPolynomial,
}

fn term(coeff: Complex64, constants: Vec<Constant>, w1: Vec<Letter>, w2: Vec<Letter>) -> PolyTerm {
    PolyTerm { coeff, constants, words: [w1, w2] }
}

/// Build Sigma, A, B, P_12^2 and S_12. C is written as
/// C^a = J^a_b p^b - (3/2) i hbar p^a; inside A the p^a part drops out
/// against the epsilon contraction, leaving J.p words only.
pub fn build_operators(mu1: f64, mu2: f64, hbar: f64) -> Result<TwoBodyOperators, DistanceError> {
    if !(mu1 > 0.0 && mu2 > 0.0 && hbar > 0.0) || !(mu1.is_finite() && mu2.is_finite() && hbar.is_finite()) {
        return Err(DistanceError::Malformed(format!("masses and hbar must be positive: {mu1}, {mu2}, {hbar}")));
    }
    use Letter::{J, P};
    let up = Slot::up;
    let dn = Slot::down;
    let (m1, m2) = (mu1 * mu1, mu2 * mu2);

    let sigma = OperatorPolynomial {
        free: vec![0],
        terms: vec![
            term(ONE / m1, vec![], vec![J(up(0), dn(1)), P(up(1))], vec![]),
            term(-I * (1.5 * hbar / m1), vec![], vec![P(up(0))], vec![]),
            term(-ONE / m2, vec![], vec![], vec![J(up(0), dn(1)), P(up(1))]),
            term(I * (1.5 * hbar / m2), vec![], vec![], vec![P(up(0))]),
        ],
    };

    // a c d e g h b e' a1 b1
    let (a, c, d, e, g, h, b, e2, x, y) = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9);
    let epsilons = || vec![Constant::eps(a, c, d, e), Constant::eta(e, e2), Constant::eps(e2, g, h, b)];
    let k = || vec![J(up(a), dn(x)), P(up(x))];
    let kb = || vec![P(up(y)), J(up(b), dn(y))];
    let cat = |parts: &[Vec<Letter>]| parts.concat();
    let pp1 = || vec![P(up(c)), P(up(g))];
    let pp2 = || vec![P(up(d)), P(up(h))];
    let a_op = OperatorPolynomial {
        free: vec![],
        terms: vec![
            term(ONE / (m1 * m1), epsilons(), cat(&[k(), pp1(), kb()]), pp2()),
            term(-ONE / (m1 * m2), epsilons(), cat(&[k(), pp1()]), cat(&[pp2(), kb()])),
            term(-ONE / (m1 * m2), epsilons(), cat(&[pp1(), kb()]), cat(&[k(), pp2()])),
            term(ONE / (m2 * m2), epsilons(), pp1(), cat(&[k(), pp2(), kb()])),
        ],
    };

    let b_op = OperatorPolynomial {
        free: vec![],
        terms: vec![
            term(ONE, vec![Constant::eta(0, 2), Constant::eta(1, 3)], vec![P(up(0)), P(up(1))], vec![P(up(2)), P(up(3))]),
            term(-ONE * (m1 * m2), vec![], vec![], vec![]),
        ],
    };

    let p12sq = OperatorPolynomial {
        free: vec![],
        terms: vec![term(ONE, vec![Constant::eta(0, 1)], vec![P(up(0))], vec![P(up(1))])],
    };

    let s12 = OperatorPolynomial {
        free: vec![0],
        terms: vec![
            term(ONE * 0.5, vec![Constant::eta(0, 4), Constant::eps(4, 1, 2, 3)], vec![J(up(1), up(2))], vec![P(up(3))]),
            term(ONE * 0.5, vec![Constant::eta(0, 4), Constant::eps(4, 1, 2, 3)], vec![P(up(3))], vec![J(up(1), up(2))]),
        ],
    };

    Ok(TwoBodyOperators { sigma, a: a_op, b: b_op, p12sq, s12 })
}

fn is_identity(m: &Mat4) -> bool {
    (0..4).all(|a| (0..4).all(|b| m[a][b] == if a == b { 1.0 } else { 0.0 }))
}

/// Rewrite a polynomial in the states phi_i = exp(i p.xi_i/hbar) U_i psi_i as
/// one over the rest-frame states psi_i:
/// p -> Lambda p and J^{ab} -> (xi^a delta^b_c - xi^b delta^a_c) Lambda^c_d p^d
/// + Lambda^a_c Lambda^b_d J^{cd}. Each J yields two terms (one if xi = 0).
pub fn transform_polynomial(
    poly: &OperatorPolynomial,
    frame1: &PoincareTransform,
    frame2: &PoincareTransform,
) -> Result<OperatorPolynomial, DistanceError> {
    let frames = [frame1, frame2];
    let first = poly.max_label().map_or(0usize, |m| m as usize + 1);
    let mut terms = Vec::new();
    for t in &poly.terms {
        // fresh labels only need to be unique within a term
        let mut next = first;
        // alternatives per particle: list of (constants, word)
        let mut per_particle: Vec<Vec<(Vec<Constant>, Vec<Letter>)>> = Vec::new();
        for (i, word) in t.words.iter().enumerate() {
            let m = *frames[i].lorentz.matrix();
            let xi = frames[i].translation;
            let ident = is_identity(&m);
            let no_shift = xi.iter().all(|&v| v == 0.0);
            let mut alts: Vec<(Vec<Constant>, Vec<Letter>)> = vec![(vec![], vec![])];
            for letter in word {
                let mut fresh = || -> Result<Label, DistanceError> {
                    let l = next;
                    next += 1;
                    Label::try_from(l).map_err(|_| DistanceError::Malformed("too many index labels".into()))
                };
                let mut options: Vec<(Vec<Constant>, Letter)> = Vec::new();
                match *letter {
                    Letter::P(s) => {
                        if ident {
                            options.push((vec![], *letter));
                        } else {
                            let n = fresh()?;
                            options.push((vec![Constant::lorentz(i, s.lower, &m, s.label, n)], Letter::P(Slot::up(n))));
                        }
                    }
                    Letter::J(sa, sb) => {
                        if !no_shift {
                            let n = fresh()?;
                            let w = Constant::wedge(i, sa.lower, sb.lower, &m, &xi, [sa.label, sb.label, n]);
                            options.push((vec![w], Letter::P(Slot::up(n))));
                        }
                        if ident {
                            options.push((vec![], *letter));
                        } else {
                            let (n1, n2) = (fresh()?, fresh()?);
                            options.push((
                                vec![
                                    Constant::lorentz(i, sa.lower, &m, sa.label, n1),
                                    Constant::lorentz(i, sb.lower, &m, sb.label, n2),
                                ],
                                Letter::J(Slot::up(n1), Slot::up(n2)),
                            ));
                        }
                    }
                }
                let mut grown = Vec::with_capacity(alts.len() * options.len());
                for (cs, w) in &alts {
                    for (oc, ol) in &options {
                        let mut cs = cs.clone();
                        cs.extend(oc.iter().cloned());
                        let mut w = w.clone();
                        w.push(*ol);
                        grown.push((cs, w));
                    }
                }
                alts = grown;
            }
            per_particle.push(alts);
        }
        for (c1, w1) in &per_particle[0] {
            for (c2, w2) in &per_particle[1] {
                let mut constants = t.constants.clone();
                constants.extend(c1.iter().cloned());
                constants.extend(c2.iter().cloned());
                terms.push(PolyTerm { coeff: t.coeff, constants, words: [w1.clone(), w2.clone()] });
            }
        }
    }
    Ok(OperatorPolynomial { free: poly.free.clone(), terms })
}

/// A letter with the frame constants of its particle folded in: each slot
/// value is a fixed linear combination of rest-frame components.
#[derive(Clone, Debug)]
enum Dressed {
    P { label: Label, m: Mat4 },
    J { labels: [Label; 2], m: [Mat4; 2] },
    /// sum_c W[a][b][c] p^c
    Wp { labels: [Label; 2], w: Vec<f64> },
}

impl Dressed {
    fn labels(&self) -> Vec<Label> {
        match self {
            Dressed::P { label, .. } => vec![*label],
            Dressed::J { labels, .. } | Dressed::Wp { labels, .. } => labels.to_vec(),
        }
    }

    fn is_j(&self) -> bool {
        matches!(self, Dressed::J { .. })
    }

    fn relabel(&self, f: &impl Fn(Label) -> Label) -> Dressed {
        match self {
            Dressed::P { label, m } => Dressed::P { label: f(*label), m: *m },
            Dressed::J { labels, m } => Dressed::J { labels: [f(labels[0]), f(labels[1])], m: *m },
            Dressed::Wp { labels, w } => Dressed::Wp { labels: [f(labels[0]), f(labels[1])], w: w.clone() },
        }
    }

    fn key(&self, out: &mut Vec<u64>) {
        let push_m = |out: &mut Vec<u64>, m: &Mat4| out.extend(m.iter().flatten().map(|v| v.to_bits()));
        match self {
            Dressed::P { label, m } => {
                out.extend([0, *label as u64]);
                push_m(out, m);
            }
            Dressed::J { labels, m } => {
                out.extend([1, labels[0] as u64, labels[1] as u64]);
                push_m(out, &m[0]);
                push_m(out, &m[1]);
            }
            Dressed::Wp { labels, w } => {
                out.extend([2, labels[0] as u64, labels[1] as u64]);
                out.extend(w.iter().map(|v| v.to_bits()));
            }
        }
    }

    /// Rest-frame symbols and weights making up this letter at the given slot values.
    fn expand(&self, vals: &[usize]) -> Vec<(f64, OperatorSymbol)> {
        let mut out = Vec::new();
        match self {
            Dressed::P { m, .. } => {
                for n in 0..4 {
                    let c = m[vals[0]][n];
                    if c != 0.0 {
                        out.push((c, OperatorSymbol::P(n)));
                    }
                }
            }
            Dressed::J { m, .. } => {
                for c in 0..4 {
                    for d in c + 1..4 {
                        let w = m[0][vals[0]][c] * m[1][vals[1]][d] - m[0][vals[0]][d] * m[1][vals[1]][c];
                        if w != 0.0 {
                            out.push((w, OperatorSymbol::J(c, d)));
                        }
                    }
                }
            }
            Dressed::Wp { w, .. } => {
                for c in 0..4 {
                    let v = w[16 * vals[0] + 4 * vals[1] + c];
                    if v != 0.0 {
                        out.push((v, OperatorSymbol::P(c)));
                    }
                }
            }
        }
        out
    }
}

fn slot_matrix(s: Slot) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for a in 0..4 {
        m[a][a] = if s.lower { ETA[a] } else { 1.0 };
    }
    m
}

fn matrix_of(c: &Constant) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            m[a][b] = c.tensor.get(&[a, b]).re;
        }
    }
    m
}

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

/// Fold the frame constants of particle `i` into its word. Returns the
/// dressed word and the constants that stay in the network.
fn dress(word: &[Letter], constants: &[Constant], i: usize) -> (Vec<Dressed>, Vec<usize>) {
    // label of a letter slot -> index of the frame constant feeding it
    let mut feeds: HashMap<Label, usize> = HashMap::new();
    for (n, c) in constants.iter().enumerate() {
        if c.particle() == Some(i) {
            let inner = *c.labels.last().expect("frame constants have labels");
            feeds.insert(inner, n);
        }
    }
    let mut used = Vec::new();
    let mut out = Vec::with_capacity(word.len());
    let absorb = |s: Slot, used: &mut Vec<usize>| -> (Label, Mat4) {
        match feeds.get(&s.label) {
            Some(&n) if matches!(constants[n].kind, ConstKind::Lorentz { .. }) => {
                used.push(n);
                (constants[n].labels[0], mat_mul(&matrix_of(&constants[n]), &slot_matrix(s)))
            }
            _ => (s.label, slot_matrix(s)),
        }
    };
    for l in word {
        match *l {
            Letter::P(s) => {
                if let Some(&n) = feeds.get(&s.label) {
                    if let ConstKind::Wedge { .. } = constants[n].kind {
                        let c = &constants[n];
                        let sg = if s.lower { ETA } else { [1.0; 4] };
                        let w: Vec<f64> = (0..64).map(|k| c.tensor.entries()[k].re * sg[k % 4]).collect();
                        out.push(Dressed::Wp { labels: [c.labels[0], c.labels[1]], w });
                        used.push(n);
                        continue;
                    }
                }
                let (label, m) = absorb(s, &mut used);
                out.push(Dressed::P { label, m });
            }
            Letter::J(a, b) => {
                let (la, ma) = absorb(a, &mut used);
                let (lb, mb) = absorb(b, &mut used);
                out.push(Dressed::J { labels: [la, lb], m: [ma, mb] });
            }
        }
    }
    (out, used)
}

/// Rest-frame state of one particle together with a cache of word tensors.
pub struct WordMoments {
    psi: QState,
    norm: f64,
    cache: Mutex<HashMap<Vec<u64>, Arc<Tensor4>>>,
}

type KetMap = BTreeMap<Vec<usize>, QState>;

impl WordMoments {
    pub fn new(psi: QState) -> Result<Self, DistanceError> {
        let norm = psi.norm_sqr()?;
        if !(norm > 0.0) {
            return Err(DistanceError::State(StateError::InvalidParameters("zero state".into())));
        }
        Ok(WordMoments { psi, norm, cache: Mutex::new(HashMap::new()) })
    }

    pub fn state(&self) -> &QState {
        &self.psi
    }

    /// Normalized expectation tensor of a dressed word over its once-occurring
    /// labels, returned with those labels in tensor-slot order.
    fn word_tensor(&self, word: &[Dressed]) -> Result<(Vec<Label>, Arc<Tensor4>), DistanceError> {
        // canonical relabeling by first appearance
        let mut order: Vec<Label> = Vec::new();
        for d in word {
            for l in d.labels() {
                if !order.contains(&l) {
                    order.push(l);
                }
            }
        }
        let canon = |l: Label| order.iter().position(|&x| x == l).expect("label present") as Label;
        let cw: Vec<Dressed> = word.iter().map(|d| d.relabel(&canon)).collect();
        let mut key = Vec::new();
        for d in &cw {
            d.key(&mut key);
        }
        let mut count: BTreeMap<Label, usize> = BTreeMap::new();
        for d in &cw {
            for l in d.labels() {
                *count.entry(l).or_insert(0) += 1;
            }
        }
        let ext_c: Vec<Label> = count.iter().filter(|e| *e.1 == 1).map(|e| *e.0).collect();
        let ext: Vec<Label> = ext_c.iter().map(|&c| order[c as usize]).collect();
        if let Some(t) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok((ext, t.clone()));
        }
        let t = Arc::new(self.compute(&cw, &ext_c, &count)?);
        self.cache.lock().expect("cache lock").insert(key, t.clone());
        Ok((ext, t))
    }

    fn compute(&self, word: &[Dressed], ext: &[Label], count: &BTreeMap<Label, usize>) -> Result<Tensor4, DistanceError> {
        if ext.len() > MAX_RANK {
            return Err(DistanceError::Tensor(TensorError::RankOverflow(ext.len())));
        }
        let n = word.len();
        let labels_in = |r: std::ops::Range<usize>| -> BTreeMap<Label, usize> {
            let mut m = BTreeMap::new();
            for d in &word[r] {
                for l in d.labels() {
                    *m.entry(l).or_insert(0) += 1;
                }
            }
            m
        };
        // split point: balance J letters, then few crossing labels, then the middle
        let h = (0..=n)
            .min_by_key(|&h| {
                let jl = word[..h].iter().filter(|d| d.is_j()).count();
                let jr = word[h..].iter().filter(|d| d.is_j()).count();
                let left = labels_in(0..h);
                let cross = left.iter().filter(|(l, c)| **c == 1 && count[*l] == 2).count();
                (jl.max(jr), cross, (2 * h).abs_diff(n))
            })
            .unwrap_or(0);
        let left_labels = labels_in(0..h);
        let right_labels = labels_in(h..n);
        let cross: Vec<Label> = left_labels.keys().filter(|l| right_labels.contains_key(l) && !ext.contains(l)).copied().collect();
        let keep_l: Vec<Label> = left_labels.keys().filter(|l| ext.contains(l) || cross.contains(l)).copied().collect();
        let keep_r: Vec<Label> = right_labels.keys().filter(|l| ext.contains(l) || cross.contains(l)).copied().collect();
        // <psi| L R |psi> = <L^dagger psi | R psi>; L^dagger applies L's letters left to right
        let left_order: Vec<&Dressed> = word[..h].iter().collect();
        let right_order: Vec<&Dressed> = word[h..].iter().rev().collect();
        let (lk, rk) = rayon::join(
            || build_kets(&self.psi, &left_order, &keep_l),
            || build_kets(&self.psi, &right_order, &keep_r),
        );
        let (lk, rk) = (lk?, rk?);

        let rank = ext.len();
        let mut out = Tensor4::zeros(rank)?;
        let n_cross = cross.len();
        let mut idx = vec![0usize; rank];
        let mut cidx = vec![0usize; n_cross];
        let value_of = |l: Label, idx: &[usize], cidx: &[usize]| -> usize {
            match ext.iter().position(|&x| x == l) {
                Some(p) => idx[p],
                None => cidx[cross.iter().position(|&x| x == l).expect("cross label")],
            }
        };
        for flat in 0..4usize.pow(rank as u32) {
            let mut x = flat;
            for s in idx.iter_mut().rev() {
                *s = x % 4;
                x /= 4;
            }
            let mut acc = ZERO;
            for cf in 0..4usize.pow(n_cross as u32) {
                let mut y = cf;
                for s in cidx.iter_mut().rev() {
                    *s = y % 4;
                    y /= 4;
                }
                let kl: Vec<usize> = keep_l.iter().map(|&l| value_of(l, &idx, &cidx)).collect();
                let kr: Vec<usize> = keep_r.iter().map(|&l| value_of(l, &idx, &cidx)).collect();
                if let (Some(a), Some(b)) = (lk.get(&kl), rk.get(&kr)) {
                    acc += a.inner(b)?;
                }
            }
            out.set(&idx, acc / self.norm);
        }
        Ok(out)
    }
}

/// Apply dressed letters in order to psi, keeping the listed labels open and
/// summing every other label as soon as both of its slots have been applied.
fn build_kets(psi: &QState, letters: &[&Dressed], keep: &[Label]) -> Result<KetMap, DistanceError> {
    let mut total: BTreeMap<Label, usize> = BTreeMap::new();
    for d in letters {
        for l in d.labels() {
            *total.entry(l).or_insert(0) += 1;
        }
    }
    let mut seen: BTreeMap<Label, usize> = BTreeMap::new();
    let mut open: Vec<Label> = Vec::new();
    let mut map: KetMap = BTreeMap::new();
    map.insert(vec![], psi.clone());
    for d in letters {
        let labels = d.labels();
        let fresh: Vec<Label> = {
            let mut f: Vec<Label> = Vec::new();
            for &l in &labels {
                if !open.contains(&l) && !f.contains(&l) {
                    f.push(l);
                }
            }
            f
        };
        let mut next: KetMap = BTreeMap::new();
        for (key, st) in &map {
            let mut memo: HashMap<OperatorSymbol, QState> = HashMap::new();
            for nf in 0..4usize.pow(fresh.len() as u32) {
                let mut fv = vec![0usize; fresh.len()];
                let mut x = nf;
                for s in fv.iter_mut().rev() {
                    *s = x % 4;
                    x /= 4;
                }
                let vals: Vec<usize> = labels
                    .iter()
                    .map(|l| match open.iter().position(|x| x == l) {
                        Some(p) => key[p],
                        None => fv[fresh.iter().position(|x| x == l).expect("fresh label")],
                    })
                    .collect();
                let parts = d.expand(&vals);
                if parts.is_empty() {
                    continue;
                }
                let mut res = st.empty_like();
                for (c, sym) in parts {
                    if !memo.contains_key(&sym) {
                        memo.insert(sym, apply_operator(sym, st)?);
                    }
                    res.add_scaled(&memo[&sym], ONE * c);
                }
                if res.is_empty() {
                    continue;
                }
                let mut k = key.clone();
                k.extend(&fv);
                match next.get_mut(&k) {
                    Some(e) => e.add_scaled(&res, ONE),
                    None => {
                        next.insert(k, res);
                    }
                }
            }
        }
        open.extend(&fresh);
        for &l in &labels {
            *seen.entry(l).or_insert(0) += 1;
        }
        // close labels whose slots have all been applied
        let closing: Vec<usize> =
            (0..open.len()).filter(|&p| seen[&open[p]] == total[&open[p]] && !keep.contains(&open[p])).collect();
        if !closing.is_empty() {
            let mut merged: KetMap = BTreeMap::new();
            for (k, st) in next {
                let kk: Vec<usize> = k.iter().enumerate().filter(|(p, _)| !closing.contains(p)).map(|(_, v)| *v).collect();
                match merged.get_mut(&kk) {
                    Some(e) => e.add_scaled(&st, ONE),
                    None => {
                        merged.insert(kk, st);
                    }
                }
            }
            open = open.iter().enumerate().filter(|(p, _)| !closing.contains(p)).map(|(_, l)| *l).collect();
            next = merged;
        }
        map = next;
    }
    // reorder keys to the order of `keep`
    let perm: Vec<usize> = keep.iter().map(|l| open.iter().position(|x| x == l).expect("kept label open")).collect();
    Ok(map.into_iter().map(|(k, v)| (perm.iter().map(|&p| k[p]).collect(), v)).collect())
}

/// Contract a network of labelled tensors, greedily picking the pair with
/// the smallest result. The result carries `free` in order.
fn contract_network(mut factors: Vec<(Vec<Label>, Tensor4)>, free: &[Label]) -> Result<Tensor4, DistanceError> {
    if factors.is_empty() {
        return Ok(Tensor4::scalar(ONE));
    }
    while factors.len() > 1 {
        let mut best: Option<(usize, usize, usize, usize)> = None;
        for i in 0..factors.len() {
            for j in i + 1..factors.len() {
                let shared = factors[i].0.iter().filter(|l| factors[j].0.contains(l)).count();
                let rank = factors[i].0.len() + factors[j].0.len() - 2 * shared;
                let cand = (i, j, rank, shared);
                let better = match best {
                    None => true,
                    Some((_, _, r, s)) => (shared > 0 && s == 0) || ((shared > 0) == (s > 0) && rank < r),
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        let (i, j, _, _) = best.expect("at least two factors");
        let (lj, tj) = factors.remove(j);
        let (li, ti) = factors.remove(i);
        let pairs: Vec<(usize, usize)> =
            li.iter().enumerate().filter_map(|(p, l)| lj.iter().position(|x| x == l).map(|q| (p, q))).collect();
        let t = contract(&ti, &tj, &pairs)?;
        let mut labels: Vec<Label> = li.iter().enumerate().filter(|(p, _)| !pairs.iter().any(|x| x.0 == *p)).map(|(_, l)| *l).collect();
        labels.extend(lj.iter().enumerate().filter(|(q, _)| !pairs.iter().any(|x| x.1 == *q)).map(|(_, l)| *l));
        factors.push((labels, t));
    }
    let (labels, t) = factors.pop().expect("one factor");
    if labels.len() != free.len() || free.iter().any(|f| !labels.contains(f)) {
        return Err(DistanceError::Malformed(format!("open labels {labels:?} do not match free {free:?}")));
    }
    let perm: Vec<usize> = free.iter().map(|f| labels.iter().position(|l| l == f).expect("free label")).collect();
    let mut src = vec![0usize; labels.len()];
    Ok(Tensor4::from_fn(free.len(), |idx| {
        let mut s = src.clone();
        for (k, &p) in perm.iter().enumerate() {
            s[p] = idx[k];
        }
        t.get(&s)
    })
    .map(|x| {
        src.clear();
        x
    })?)
}

/// Expectation tensor of a polynomial whose frame constants (if any) are
/// already bound, in the product of the two rest-frame states.
pub fn expect_rest(poly: &OperatorPolynomial, m1: &WordMoments, m2: &WordMoments) -> Result<Tensor4, DistanceError> {
    poly.validate()?;
    let engines = [m1, m2];
    let parts: Vec<Tensor4> = poly
        .terms
        .par_iter()
        .map(|t| -> Result<Tensor4, DistanceError> {
            let mut used = Vec::new();
            let mut factors: Vec<(Vec<Label>, Tensor4)> = Vec::new();
            for i in 0..2 {
                let (dw, u) = dress(&t.words[i], &t.constants, i);
                used.extend(u);
                if dw.is_empty() {
                    continue;
                }
                let (labels, tensor) = engines[i].word_tensor(&dw)?;
                factors.push((labels, (*tensor).clone()));
            }
            for (n, c) in t.constants.iter().enumerate() {
                if !used.contains(&n) {
                    factors.push((c.labels.clone(), c.tensor.clone()));
                }
            }
            if factors.iter().any(|f| f.1.max_abs() == 0.0) {
                return Ok(Tensor4::zeros(poly.free.len())?);
            }
            Ok(contract_network(factors, &poly.free)?.scale(t.coeff))
        })
        .collect::<Result<_, _>>()?;
    let mut total = Tensor4::zeros(poly.free.len())?;
    for p in parts {
        total = total.add(&p)?;
    }
    Ok(total)
}

/// One particle: spin, mass, width and the Poincare frame of its state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleSpec {
    pub two_s: u32,
    pub mu: f64,
    pub eps: f64,
    pub frame: PoincareTransform,
    pub hbar: f64,
}

impl ParticleSpec {
    pub fn new(two_s: u32, mu: f64, eps: f64, frame: PoincareTransform, hbar: f64) -> Result<Self, DistanceError> {
        GaussianProfile::new(mu, eps)?;
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(DistanceError::State(StateError::InvalidParameters(format!("hbar = {hbar}"))));
        }
        if frame.translation.iter().any(|v| !v.is_finite()) {
            return Err(DistanceError::Malformed("non-finite translation".into()));
        }
        Ok(ParticleSpec { two_s, mu, eps, frame, hbar })
    }

    pub fn s(&self) -> f64 {
        self.two_s as f64 / 2.0
    }

    /// psi_{s,s}
    pub fn rest_state(&self) -> Result<QState, DistanceError> {
        let g = GaussianProfile::new(self.mu, self.eps)?;
        let chir = if self.two_s == 0 { Chirality::Plus } else { Chirality::Symmetric };
        Ok(QState::com_state(self.two_s, self.two_s as i32, g, self.hbar, chir)?)
    }

    /// The classical world line this state is centred on.
    pub fn line(&self) -> TimelikeLine {
        TimelikeLine::new(self.frame.lorentz, self.frame.translation)
    }

    pub fn with_frame(&self, frame: PoincareTransform) -> Self {
        ParticleSpec { frame, ..*self }
    }
}

/// Transformed expectation of a scalar polynomial in phi_1 (x) phi_2.
pub fn expect_polynomial(poly: &OperatorPolynomial, spec1: &ParticleSpec, spec2: &ParticleSpec) -> Result<Complex64, DistanceError> {
    PairContext::new(spec1, spec2)?.expect(poly)
}

/// Shared rest-frame data for repeated evaluations on one pair of states.
pub struct PairContext {
    pub specs: [ParticleSpec; 2],
    pub ops: TwoBodyOperators,
    moments: [WordMoments; 2],
}

impl PairContext {
    pub fn new(spec1: &ParticleSpec, spec2: &ParticleSpec) -> Result<Self, DistanceError> {
        if spec1.hbar != spec2.hbar {
            return Err(DistanceError::Malformed("the two particles use different hbar".into()));
        }
        let ops = build_operators(spec1.mu, spec2.mu, spec1.hbar)?;
        let (a, b) = rayon::join(|| spec1.rest_state(), || spec2.rest_state());
        Ok(PairContext { specs: [*spec1, *spec2], ops, moments: [WordMoments::new(a?)?, WordMoments::new(b?)?] })
    }

    pub fn expect_tensor(&self, poly: &OperatorPolynomial) -> Result<Tensor4, DistanceError> {
        let t = transform_polynomial(poly, &self.specs[0].frame, &self.specs[1].frame)?;
        expect_rest(&t, &self.moments[0], &self.moments[1])
    }

    pub fn expect(&self, poly: &OperatorPolynomial) -> Result<Complex64, DistanceError> {
        if !poly.free.is_empty() {
            return Err(DistanceError::Malformed(format!("polynomial has free labels {:?}", poly.free)));
        }
        Ok(self.expect_tensor(poly)?.get(&[]))
    }

    pub fn distance(&self) -> Result<DistanceResult, DistanceError> {
        let (a, b) = rayon::join(|| self.expect(&self.ops.a), || self.expect(&self.ops.b));
        let (a, b) = (a?, b?);
        let scale = (self.specs[0].mu * self.specs[1].mu).powi(2);
        if !(b.re > DEGENERATE_TOL * scale) {
            return Err(DistanceError::DegenerateDenominator(b.re));
        }
        let imag_residual = if a.norm() > 0.0 { a.im.abs() / a.norm() } else { 0.0 };
        if imag_residual > IMAG_TOL {
            return Err(DistanceError::ComplexResidual(imag_residual));
        }
        let d2 = a.re / b.re;
        Ok(DistanceResult { d2, d: d2.max(0.0).sqrt(), a, b, imag_residual })
    }

    /// Delta B / <B> from fourth-order momentum moments.
    pub fn delta_b(&self) -> Result<(f64, Complex64, Complex64), DistanceError> {
        let b = self.expect(&self.ops.b)?;
        let b2 = self.expect(&self.ops.b.product(&self.ops.b)?)?;
        let var = (b2.re - b.re * b.re).max(0.0);
        Ok((var.sqrt() / b.re, b, b2))
    }

    /// Delta A / |<A>| from the polynomial square of A.
    pub fn delta_a(&self) -> Result<f64, DistanceError> {
        let a = self.expect(&self.ops.a)?;
        let a2 = self.expect(&self.ops.a.product(&self.ops.a)?)?;
        let var = (a2.re - a.re * a.re).max(0.0);
        Ok(var.sqrt() / a.re.abs())
    }

    pub fn uncertainty(&self, cap: f64) -> Result<UncertaintyReport, DistanceError> {
        let d = self.distance()?;
        let (rel_b, _, _) = self.delta_b()?;
        let over = self.specs.iter().map(|s| s.s()).fold(0.0, f64::max);
        let (rel_a, note) = if over > cap {
            (None, Some(DistanceError::CapExceeded(over).to_string()))
        } else {
            match self.delta_a() {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        Ok(UncertaintyReport {
            delta_b_over_b: rel_b,
            delta_a_over_a: rel_a,
            delta_d2: rel_a.map(|ra| (ra + rel_b) * d.d2),
            a_note: note,
        })
    }
}

/// d_12^2 = <A>/<B> and its square root (clamped at zero).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub d2: f64,
    pub d: f64,
    pub a: Complex64,
    pub b: Complex64,
    pub imag_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub delta_b_over_b: f64,
    /// None when the A variance is unavailable; see `a_note`.
    pub delta_a_over_a: Option<f64>,
    /// (Delta A/|<A>| + Delta B/<B>) d^2 when Delta A is known.
    pub delta_d2: Option<f64>,
    pub a_note: Option<String>,
}

pub fn empirical_distance(spec1: &ParticleSpec, spec2: &ParticleSpec) -> Result<DistanceResult, DistanceError> {
    PairContext::new(spec1, spec2)?.distance()
}

pub fn uncertainty(spec1: &ParticleSpec, spec2: &ParticleSpec, cap: f64) -> Result<UncertaintyReport, DistanceError> {
    PairContext::new(spec1, spec2)?.uncertainty(cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LorentzTransform;

    fn spec(two_s: u32, frame: PoincareTransform) -> ParticleSpec {
        let s = two_s as f64 / 2.0;
        ParticleSpec::new(two_s, 2.0 * s.max(0.5), s.max(0.5).powf(-0.25), frame, 1.0).unwrap()
    }

    #[test]
    fn operator_shapes() {
        let ops = build_operators(1.0, 2.0, 1.0).unwrap();
        assert_eq!(ops.a.len(), 4);
        ops.a.validate().unwrap();
        ops.b.validate().unwrap();
        ops.sigma.validate().unwrap();
        ops.s12.validate().unwrap();
        let sq = ops.a.product(&ops.a).unwrap();
        sq.validate().unwrap();
        assert_eq!(sq.len(), 16);
    }

    #[test]
    fn label_errors_are_caught() {
        let mut p = build_operators(1.0, 1.0, 1.0).unwrap().b;
        p.terms[0].constants.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn network_contracts_metric_trace() {
        // eta_ab eta_ab summed = 4
        let t = contract_network(vec![(vec![0, 1], Tensor4::metric()), (vec![0, 1], Tensor4::metric())], &[]).unwrap();
        assert!((t.get(&[]) - ONE * 4.0).norm() < 1e-15);
    }

    #[test]
    fn rest_frame_p12_is_energy_product() {
        let id = PoincareTransform::identity();
        let ctx = PairContext::new(&spec(2, id), &spec(4, id)).unwrap();
        let v = ctx.expect(&ctx.ops.p12sq).unwrap();
        let e1 = crate::operators::energy_integral(ctx.specs[0].mu, ctx.specs[0].eps).unwrap();
        let e2 = crate::operators::energy_integral(ctx.specs[1].mu, ctx.specs[1].eps).unwrap();
        assert!((v.re - e1 * e2).abs() < 1e-10 * e1 * e2, "{v} vs {}", e1 * e2);
    }

    #[test]
    fn boost_changes_only_frame_constants() {
        let f = PoincareTransform::new(LorentzTransform::boost([0.0, 0.0, 0.7]), [0.0, 1.0, 0.0, 0.0]);
        let ops = build_operators(1.0, 1.0, 1.0).unwrap();
        let t = transform_polynomial(&ops.a, &PoincareTransform::identity(), &f).unwrap();
        t.validate().unwrap();
        // J count of particle 2 per term: 0, 1, 1, 2 -> 1 + 2 + 2 + 4
        assert_eq!(t.len(), 9);
    }
}
