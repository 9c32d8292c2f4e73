//! Infinitely divisible limit laws given by finitely many atoms of their
//! representing measures, and closed-form reference densities.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::additive::boundary_f;
use crate::error::{Error, Result};
use crate::inversion::Cursor;
use crate::measures::SupportDomain;
use crate::rows::{AdditiveProvider, SigmaProvider};

const SAMPLE_POINTS: usize = 200;

/// `φ(z) = c + Σ_j w_j (1 + z x_j)/(z - x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NevanlinnaData {
    pub c: f64,
    /// `(x_j, w_j)`
    pub atoms: Vec<(f64, f64)>,
}

impl NevanlinnaData {
    pub fn new(c: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        let d = Self { c, atoms };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.c.is_finite() {
            return Err(Error::Config("c must be finite".into()));
        }
        for &(x, w) in &self.atoms {
            if !(x.is_finite() && w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidWeights(format!("atom ({x}, {w})")));
            }
        }
        for z in upper_sample() {
            if self.phi(z)?.im > 1e-12 * (1.0 + self.total_weight()) {
                return Err(Error::Config(format!("Im φ > 0 at {z}")));
            }
        }
        Ok(())
    }

    /// Semicircle of variance one: `φ(z) = 1/z`.
    pub fn semicircle() -> Self {
        Self {
            c: 0.0,
            atoms: vec![(0.0, 1.0)],
        }
    }

    /// Free Poisson law of rate `λ`: `φ(z) = λz/(z - 1)`.
    pub fn marchenko_pastur(lambda: f64) -> Self {
        Self {
            c: 0.5 * lambda,
            atoms: vec![(1.0, 0.5 * lambda)],
        }
    }

    pub fn point_mass(a: f64) -> Self {
        Self {
            c: a,
            atoms: Vec::new(),
        }
    }

    fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn phi(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.phi_jet(z)?.0)
    }

    fn phi_jet(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        if !(z.im > 0.0) {
            return Err(Error::OutOfDomain(z));
        }
        let mut v = Complex64::new(self.c, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for &(x, w) in &self.atoms {
            let u = z - x;
            v += w * (1.0 + z * x) / u;
            d -= w * (1.0 + x * x) / (u * u);
        }
        Ok((v, d))
    }

    /// `(H, H')` with `H = z + φ`.
    pub fn h(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        let (v, d) = self.phi_jet(z)?;
        Ok((z + v, 1.0 + d))
    }
}

impl AdditiveProvider for NevanlinnaData {
    fn h_jet(&self, z: Complex64, _cursor: &mut Cursor) -> Result<(Complex64, Complex64)> {
        self.h(z)
    }

    fn mean(&self) -> f64 {
        self.c + self.atoms.iter().map(|&(x, w)| w * x).sum::<f64>()
    }
}

pub fn phi_id(data: &NevanlinnaData, z: Complex64) -> Result<Complex64> {
    data.phi(z)
}

pub fn h_id(data: &NevanlinnaData, z: Complex64) -> Result<Complex64> {
    Ok(data.h(z)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub re_h_prime: f64,
    pub im_h: f64,
    pub on_boundary: bool,
}

impl LemmaCheck {
    pub fn holds(&self) -> bool {
        self.re_h_prime > 0.0
    }
}

/// `Re H'(s + it)` and `Im H(s + it)` for `t ≥ f(s)`.
pub fn lemma_derivative_check(data: &NevanlinnaData, s: f64, t: f64) -> Result<LemmaCheck> {
    let b = boundary_f(data, s, None, &mut Cursor::new())?;
    if t < b.f * (1.0 - 1e-12) {
        return Err(Error::NotInRegion { t, f: b.f });
    }
    let (h, hp) = data.h(Complex64::new(s, t))?;
    Ok(LemmaCheck {
        re_h_prime: hp.re,
        im_h: h.im,
        on_boundary: (t - b.f).abs() <= 1e-10 * b.f,
    })
}

/// `Σ(z) = γ exp(Σ_j w_j (1 + t_j z)/(z - t_j) - w_∞ z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpSigmaDataHalfline {
    pub gamma: f64,
    /// `(t_j, w_j)` with finite `t_j ≥ 0`
    pub atoms: Vec<(f64, f64)>,
    /// Weight of the atom at `t = ∞`.
    #[serde(default)]
    pub weight_at_infinity: f64,
}

impl ExpSigmaDataHalfline {
    pub fn new(gamma: f64, atoms: Vec<(f64, f64)>, weight_at_infinity: f64) -> Result<Self> {
        let d = Self {
            gamma,
            atoms,
            weight_at_infinity,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config("γ must be positive".into()));
        }
        if !(self.weight_at_infinity >= 0.0 && self.weight_at_infinity.is_finite()) {
            return Err(Error::InvalidWeights("weight at infinity".into()));
        }
        for &(t, w) in &self.atoms {
            if !(t >= 0.0 && t.is_finite() && w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidWeights(format!("atom ({t}, {w})")));
            }
        }
        for k in 1..SAMPLE_POINTS {
            let z = Complex64::new(-(k as f64) / SAMPLE_POINTS as f64, 0.0);
            let s = self.sigma(z)?;
            if !(s.re > 0.0 && s.im.abs() <= 1e-12 * s.re) {
                return Err(Error::Config(format!("Σ not positive at {}", z.re)));
            }
        }
        Ok(())
    }

    pub fn sigma(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.jet(z)?.0)
    }

    fn jet(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        if z.im == 0.0 && z.re > 0.0 && self.atoms.iter().all(|a| a.0 != z.re) {
            return Err(Error::OutOfDomain(z));
        }
        let mut e = -self.weight_at_infinity * z;
        let mut de = Complex64::new(-self.weight_at_infinity, 0.0);
        for &(t, w) in &self.atoms {
            let u = z - t;
            if u.norm() == 0.0 {
                return Err(Error::PoleAtAtom(z));
            }
            e += w * (1.0 + t * z) / u;
            de -= w * (1.0 + t * t) / (u * u);
        }
        let s = self.gamma * e.exp();
        Ok((s, s * de))
    }
}

impl SigmaProvider for ExpSigmaDataHalfline {
    fn domain(&self) -> SupportDomain {
        SupportDomain::HalfLine
    }

    fn sigma_jet(&self, z: Complex64, _cursor: &mut Cursor) -> Result<(Complex64, Complex64)> {
        self.jet(z)
    }

    fn first_moment(&self) -> Result<Complex64> {
        Ok(1.0 / self.sigma(Complex64::new(0.0, 0.0))?)
    }
}

/// `Σ(z) = γ exp(Σ_j w_j (ζ_j + z)/(ζ_j - z))`, `γ = e^{i·gamma_angle}`,
/// `ζ_j = e^{i·angle_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerglotzSigmaDataCircle {
    pub gamma_angle: f64,
    /// `(angle_j, w_j)`
    pub atoms: Vec<(f64, f64)>,
}

impl HerglotzSigmaDataCircle {
    pub fn new(gamma_angle: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        let d = Self { gamma_angle, atoms };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma_angle.is_finite() {
            return Err(Error::Config("γ angle must be finite".into()));
        }
        for &(a, w) in &self.atoms {
            if !(a.is_finite() && w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidWeights(format!("atom ({a}, {w})")));
            }
        }
        for z in disk_sample() {
            if self.exponent(z)?.0.re < -1e-12 {
                return Err(Error::Config(format!("Re exponent < 0 at {z}")));
            }
        }
        let m = self.first_moment()?.norm();
        if m > 1.0 + 1e-12 {
            return Err(Error::Config(format!("|m₁| = {m} > 1")));
        }
        Ok(())
    }

    fn exponent(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        let mut e = Complex64::new(0.0, 0.0);
        let mut de = Complex64::new(0.0, 0.0);
        for &(a, w) in &self.atoms {
            let zeta = Complex64::from_polar(1.0, a);
            let u = zeta - z;
            if u.norm() == 0.0 {
                return Err(Error::PoleAtAtom(z));
            }
            e += w * (zeta + z) / u;
            de += w * 2.0 * zeta / (u * u);
        }
        Ok((e, de))
    }

    pub fn sigma(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.jet(z)?.0)
    }

    fn jet(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        if !(z.norm() < 1.0) {
            return Err(Error::OutOfDomain(z));
        }
        let (e, de) = self.exponent(z)?;
        let s = Complex64::from_polar(1.0, self.gamma_angle) * e.exp();
        Ok((s, s * de))
    }
}

impl SigmaProvider for HerglotzSigmaDataCircle {
    fn domain(&self) -> SupportDomain {
        SupportDomain::Circle
    }

    fn sigma_jet(&self, z: Complex64, _cursor: &mut Cursor) -> Result<(Complex64, Complex64)> {
        self.jet(z)
    }

    fn first_moment(&self) -> Result<Complex64> {
        Ok(1.0 / self.sigma(Complex64::new(0.0, 0.0))?)
    }
}

/// Either family of multiplicative ID data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case")]
pub enum SigmaData {
    HalfLine(ExpSigmaDataHalfline),
    Circle(HerglotzSigmaDataCircle),
}

pub fn sigma_id(data: &SigmaData, z: Complex64) -> Result<Complex64> {
    match data {
        SigmaData::HalfLine(d) => d.sigma(z),
        SigmaData::Circle(d) => d.sigma(z),
    }
}

/// Closed-form densities used as references.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Oracle {
    Semicircle,
    MarchenkoPastur { lambda: f64 },
    /// Sum of `d` free symmetric Bernoulli variables, scaled to variance one.
    Kesten { d: u32 },
    /// Arcsine law on `(-2, 2)`.
    Arcsine,
}

impl Oracle {
    /// Open support interval.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Oracle::Semicircle | Oracle::Arcsine => (-2.0, 2.0),
            Oracle::MarchenkoPastur { lambda: l } => ((1.0 - l.sqrt()).powi(2), (1.0 + l.sqrt()).powi(2)),
            Oracle::Kesten { d } => {
                let d = d as f64;
                let e = 2.0 * (d - 1.0).sqrt() / d.sqrt();
                (-e, e)
            }
        }
    }
}

pub fn oracle_density(kind: Oracle, x: f64) -> Result<f64> {
    let (a, b) = kind.support();
    if !(x > a && x < b) {
        return Err(Error::OutOfSupport(x));
    }
    Ok(match kind {
        Oracle::Semicircle => (4.0 - x * x).sqrt() / TAU,
        Oracle::MarchenkoPastur { .. } => ((b - x) * (x - a)).sqrt() / (TAU * x),
        Oracle::Kesten { d } => {
            let d = d as f64;
            let y = d.sqrt() * x;
            d.sqrt() * d * (4.0 * (d - 1.0) - y * y).sqrt() / (TAU * (d * d - y * y))
        }
        Oracle::Arcsine => 1.0 / (PI * (4.0 - x * x).sqrt()),
    })
}

fn upper_sample() -> impl Iterator<Item = Complex64> {
    (0..SAMPLE_POINTS).map(|k| {
        let u = k as f64 / SAMPLE_POINTS as f64;
        Complex64::new(8.0 * (u - 0.5) * (1.0 + 3.0 * u), 1e-3 + 10.0 * u * u)
    })
}

fn disk_sample() -> impl Iterator<Item = Complex64> {
    (0..SAMPLE_POINTS).map(|k| {
        let u = k as f64 / SAMPLE_POINTS as f64;
        Complex64::from_polar(0.995 * u.sqrt(), 37.0 * TAU * u)
    })
}
