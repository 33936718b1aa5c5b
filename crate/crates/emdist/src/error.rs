use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("slot {slot} out of range for rank {rank}")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("slot used twice in one contraction")]
    RepeatedSlot,
    #[error("rank {0} exceeds the maximum of 8")]
    RankOverflow(usize),
    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),
    #[error("matrix is not a Lorentz transformation (defect {0:e})")]
    NotLorentz(f64),
    #[error("determinant {0} is not +1")]
    NotProper(f64),
    #[error("Lambda^0_0 = {0} is below 1")]
    NotOrthochronous(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("momentum must be future timelike (p.p = {0})")]
    NotTimelike(f64),
    #[error("angular momentum is not antisymmetric")]
    NotAntisymmetric,
    #[error("momenta are parallel; the projector is undefined")]
    ParallelMomenta,
    #[error("tangents are parallel")]
    ParallelTangents,
    #[error("points are null separated")]
    NullSeparation,
    #[error("points coincide")]
    CoincidentPoints,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SphereError {
    #[error("invalid harmonic index (2sigma={two_sigma}, 2j={two_j}, 2m={two_m})")]
    InvalidIndex { two_sigma: i32, two_j: i32, two_m: i32 },
    #[error("degree {two_j}/2 exceeds band limit {lmax}")]
    BandLimit { two_j: i32, lmax: usize },
    #[error("spin weight mismatch: {0}/2 vs {1}/2")]
    WeightMismatch(i32, i32),
    #[error("no tabulated matrix element for this index family")]
    UntabulatedFamily,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("invalid state parameters: {0}")]
    InvalidParameters(String),
    #[error("states belong to different representations")]
    Mismatch,
    #[error("radial integrand p^{0} is not integrable at the origin")]
    NonIntegrable(i32),
    #[error("component index {0} out of range")]
    ComponentRange(usize),
    #[error(transparent)]
    Sphere(#[from] SphereError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("denominator <B> = {0:e} is not positive")]
    DegenerateDenominator(f64),
    #[error("imaginary residual {0:e} of <A> exceeds tolerance")]
    ComplexResidual(f64),
    #[error("spin {0} exceeds the uncertainty cap")]
    CapExceeded(f64),
    #[error("malformed polynomial: {0}")]
    Malformed(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}
