//! Cauchy transform `G`, its reciprocal `F = 1/G` (line), the moment
//! generating transform `ψ` and `η = ψ/(1+ψ)` (half-line and circle), their
//! first two derivatives, and extrapolated Stieltjes inversion.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{Measure, SupportDomain};
use crate::numeric::richardson_halving;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    G,
    F,
    Psi,
    Eta,
}

/// Value and first two derivatives of an analytic function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: Complex64,
    pub d1: Complex64,
    pub d2: Complex64,
}

impl Jet {
    /// Jet of `1/f`.
    fn reciprocal(self) -> Jet {
        let g = self.value;
        Jet {
            value: 1.0 / g,
            d1: -self.d1 / (g * g),
            d2: -self.d2 / (g * g) + 2.0 * self.d1 * self.d1 / (g * g * g),
        }
    }

    /// Jet of `f/(1+f)`.
    fn eta_of_psi(self) -> Jet {
        let q = 1.0 + self.value;
        Jet {
            value: self.value / q,
            d1: self.d1 / (q * q),
            d2: self.d2 / (q * q) - 2.0 * self.d1 * self.d1 / (q * q * q),
        }
    }
}

fn check_domain(m: &Measure, kind: TransformKind, z: Complex64) -> Result<()> {
    let domain = m.domain();
    match (kind, domain) {
        (TransformKind::G | TransformKind::F, SupportDomain::Line) => {
            if !(z.im != 0.0 && z.is_finite()) {
                return Err(Error::OutOfDomain(z));
            }
        }
        (TransformKind::Psi | TransformKind::Eta, SupportDomain::HalfLine) => {
            if !z.is_finite() || (z.im == 0.0 && z.re > 0.0) {
                return Err(Error::OutOfDomain(z));
            }
            if let Measure::Atomic(a) = m {
                if a.atoms.len() == 1 && a.atoms[0].position == 0.0 {
                    return Err(Error::DegenerateMeasure("point mass at the origin".into()));
                }
            }
        }
        (TransformKind::Psi | TransformKind::Eta, SupportDomain::Circle) => {
            if !(z.norm() < 1.0) {
                return Err(Error::OutOfDomain(z));
            }
        }
        _ => {
            return Err(Error::InvalidSupport(format!(
                "{kind:?} is not defined for measures on {domain:?}"
            )))
        }
    }
    Ok(())
}

/// `(G, G', G'')` on the line, `(ψ, ψ', ψ'')` on the half-line and circle.
fn kernel_jet(m: &Measure, z: Complex64) -> Jet {
    match m.domain() {
        SupportDomain::Line => {
            let term = |t: Complex64| {
                let r = 1.0 / (z - t);
                [r, -r * r, 2.0 * r * r * r]
            };
            sum_jet(m, z, term)
        }
        SupportDomain::HalfLine | SupportDomain::Circle => {
            let term = |t: Complex64| {
                let r = 1.0 / (1.0 - z * t);
                [z * t * r, t * r * r, 2.0 * t * t * r * r * r]
            };
            sum_jet(m, z, term)
        }
    }
}

fn sum_jet<T: Fn(Complex64) -> [Complex64; 3]>(m: &Measure, z: Complex64, term: T) -> Jet {
    let zero = Complex64::new(0.0, 0.0);
    let mut acc = [zero; 3];
    match m {
        Measure::Atomic(a) => {
            for (p, w) in a.points() {
                let t = term(p);
                for k in 0..3 {
                    acc[k] += t[k] * w;
                }
            }
        }
        Measure::Grid(g) => {
            let domain = g.domain;
            let to_point = |x: f64| match domain {
                SupportDomain::Circle => Complex64::from_polar(1.0, x),
                _ => Complex64::new(x, 0.0),
            };
            // position of the kernel singularity in the panel variable's plane
            let pole = match domain {
                SupportDomain::Line => z,
                _ => 1.0 / z,
            };
            let near = |a: f64, b: f64| {
                let len = b - a;
                match domain {
                    SupportDomain::Circle => {
                        (Complex64::from_polar(1.0, 0.5 * (a + b)) - pole).norm() < len
                    }
                    _ => {
                        let x = pole.re.clamp(a, b);
                        (Complex64::new(x, 0.0) - pole).norm() < len
                    }
                }
            };
            for k in 0..3 {
                acc[k] = g.integrate(|x| term(to_point(x))[k], near);
            }
        }
    }
    Jet {
        value: acc[0],
        d1: acc[1],
        d2: acc[2],
    }
}

/// Value, first and second derivative of the requested transform at `z`.
pub fn jet(m: &Measure, kind: TransformKind, z: Complex64) -> Result<Jet> {
    check_domain(m, kind, z)?;
    let base = kernel_jet(m, z);
    let j = match kind {
        TransformKind::G | TransformKind::Psi => base,
        TransformKind::F => base.reciprocal(),
        TransformKind::Eta => base.eta_of_psi(),
    };
    Ok(j)
}

pub fn eval(m: &Measure, kind: TransformKind, z: Complex64) -> Result<Complex64> {
    Ok(jet(m, kind, z)?.value)
}

pub fn eval_derivative(m: &Measure, kind: TransformKind, z: Complex64, order: u8) -> Result<Complex64> {
    let j = jet(m, kind, z)?;
    match order {
        1 => Ok(j.d1),
        2 => Ok(j.d2),
        _ => Err(Error::Config(format!("derivative order {order} not supported"))),
    }
}

/// Imaginary offsets `ε_k = ε_0 2^{-k}` used for boundary extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub eps0: f64,
    pub levels: usize,
    pub order: usize,
}

impl Default for Ladder {
    fn default() -> Self {
        Self {
            eps0: 1e-2,
            levels: 9,
            order: 4,
        }
    }
}

impl Ladder {
    pub fn eps(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.levels).map(|k| self.eps0 / f64::powi(2.0, k as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StieltjesEstimate {
    pub density: f64,
    pub error: f64,
}

const EXTRAPOLATION_TOL: f64 = 1e-4;
const NEGATIVE_CLAMP: f64 = -1e-10;

/// Boundary value of `-(1/π) Im(1/F(x + iε))` as `ε → 0`, by Richardson
/// extrapolation over the ladder.
pub fn stieltjes_density<F>(mut f_eval: F, x: f64, ladder: &Ladder) -> Result<StieltjesEstimate>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    let samples = ladder
        .eps()
        .map(|e| f_eval(Complex64::new(x, e)).map(|f| -(1.0 / f).im / PI))
        .collect::<Result<Vec<f64>>>()?;
    let (est, err) = richardson_halving(&samples, ladder.order);
    if !(err <= EXTRAPOLATION_TOL) {
        return Err(Error::NonConvergent(format!(
            "successive extrapolants differ by {err:e} at x = {x}"
        )));
    }
    if est < NEGATIVE_CLAMP {
        return Err(Error::NonConvergent(format!("negative density {est:e} at x = {x}")));
    }
    Ok(StieltjesEstimate {
        density: est.max(0.0),
        error: err,
    })
}
