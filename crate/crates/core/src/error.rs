use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid support: {0}")]
    InvalidSupport(String),
    #[error("measure not normalized: total mass {0}")]
    NotNormalized(f64),

    #[error("point {0} outside the natural domain of the transform")]
    OutOfDomain(Complex64),
    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),
    #[error("extrapolation did not converge: {0}")]
    NonConvergent(String),

    #[error("no Stolz anchor found after {0} doublings")]
    AnchorNotFound(usize),
    #[error("branch lost while continuing to {0}")]
    BranchLost(Complex64),
    #[error("division by zero: {0}")]
    ZeroDivision(String),
    #[error("winding number {0:.6} is not 1")]
    WindingMismatch(f64),
    #[error("contour quadrature stalled at {0} nodes per edge")]
    QuadratureStall(usize),

    #[error("no boundary crossing at parameter {0}")]
    NoCrossing(f64),
    #[error("abscissae not strictly increasing at index {0}")]
    NonMonotoneAbscissae(usize),
    #[error("window [{0}, {1}] not covered by the density curve")]
    WindowNotCovered(f64, f64),

    #[error("measure has zero first moment")]
    ZeroMeanMeasure,
    #[error("direction {0} is an atom direction (R = 1)")]
    AtomDirection(f64),

    #[error("t = {t} lies below the boundary f(s) = {f}")]
    NotInRegion { t: f64, f: f64 },
    #[error("{0} outside the support of the law")]
    OutOfSupport(f64),
    #[error("pole at representation atom {0}")]
    PoleAtAtom(Complex64),

    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
