//! Evaluators for `H` (line) and `Σ` (half-line, circle) of a whole row,
//! shared by the convolution pipelines and implemented both by finite rows
//! and by closed-form limit data.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::inversion::{CircleInverter, Cursor, HalflineInverter, LineInverter};
use crate::measures::{ArrayRow, Measure, SupportDomain};
use crate::numeric;

/// Something with an inverse reciprocal Cauchy transform `H` on (part of)
/// the upper half-plane.
pub trait AdditiveProvider: Sync {
    /// `(H(z), H'(z))`. `cursor` carries warm starts between calls made
    /// along one vertical line.
    fn h_jet(&self, z: Complex64, cursor: &mut Cursor) -> Result<(Complex64, Complex64)>;

    /// A height above `Re z = s` from which `H` can be reached.
    fn anchor_height(&self, s: f64) -> f64 {
        1.0 + s.abs()
    }

    /// First moment of the measure (limit of `H(z) - z` at infinity).
    fn mean(&self) -> f64;
}

/// Something with a `Σ` transform on the half-line slit plane or on a disk.
pub trait SigmaProvider: Sync {
    fn domain(&self) -> SupportDomain;

    /// `(Σ(z), Σ'(z))`.
    fn sigma_jet(&self, z: Complex64, cursor: &mut Cursor) -> Result<(Complex64, Complex64)>;

    /// `m₁ = 1/Σ(0)`.
    fn first_moment(&self) -> Result<Complex64>;

    /// Radius of the disk on which `Σ` may be evaluated (circle only).
    fn disk_radius(&self) -> f64 {
        1.0
    }

    /// `(Φ(z), Φ'(z))` with `Φ(z) = z Σ(z)`.
    fn phi_jet(&self, z: Complex64, cursor: &mut Cursor) -> Result<(Complex64, Complex64)> {
        let (s, ds) = self.sigma_jet(z, cursor)?;
        Ok((z * s, s + z * ds))
    }
}

fn group<T, F>(row: &ArrayRow, build: F) -> Result<Vec<(T, f64)>>
where
    F: Fn(&Measure) -> Result<T>,
{
    let mut seen: Vec<(&Measure, usize)> = Vec::new();
    for m in &row.measures {
        match seen.iter_mut().find(|(k, _)| *k == m) {
            Some((_, n)) => *n += 1,
            None => seen.push((m, 1)),
        }
    }
    seen.into_iter()
        .map(|(m, n)| Ok((build(m)?, n as f64)))
        .collect()
}

/// `H` of the free additive convolution of a row, `H = z + Σ_i φ_i`.
#[derive(Debug, Clone)]
pub struct LineRow {
    groups: Vec<(LineInverter, f64)>,
    mean: f64,
}

impl LineRow {
    pub fn new(row: &ArrayRow) -> Result<Self> {
        Self::with_alpha(row, 1.0)
    }

    pub fn with_alpha(row: &ArrayRow, alpha: f64) -> Result<Self> {
        if row.domain() != SupportDomain::Line {
            return Err(Error::InvalidSupport("additive rows live on the line".into()));
        }
        let groups = group(row, |m| LineInverter::new(m.clone(), alpha))?;
        let mean = row.measures.iter().map(|m| m.mean().re).sum();
        Ok(Self { groups, mean })
    }

    /// Distinct measures with their multiplicities.
    pub fn groups(&self) -> &[(LineInverter, f64)] {
        &self.groups
    }

    /// `Σ_i φ_{μ_i}(z)`.
    pub fn phi_sum(&self, z: Complex64, cursor: &mut Cursor) -> Result<Complex64> {
        Ok(self.h_jet(z, cursor)?.0 - z)
    }
}

impl AdditiveProvider for LineRow {
    fn h_jet(&self, z: Complex64, cursor: &mut Cursor) -> Result<(Complex64, Complex64)> {
        let mut h = z;
        let mut hp = Complex64::new(1.0, 0.0);
        for (i, (inv, k)) in self.groups.iter().enumerate() {
            let (hi, hpi) = inv.invert_tracked(z, cursor.slot(i))?;
            h += *k * (hi - z);
            hp += *k * (hpi - 1.0);
        }
        Ok((h, hp))
    }

    fn anchor_height(&self, s: f64) -> f64 {
        self.groups
            .iter()
            .map(|(inv, _)| inv.angle().floor_at(s))
            .fold(1.0, f64::max)
    }

    fn mean(&self) -> f64 {
        self.mean
    }
}

#[derive(Debug, Clone)]
enum EtaInverter {
    Half(HalflineInverter),
    Circle(CircleInverter),
}

/// `Σ` of the free multiplicative convolution of a row, `Σ = Π_i Σ_i`.
#[derive(Debug, Clone)]
pub struct SigmaRow {
    domain: SupportDomain,
    groups: Vec<(EtaInverter, f64)>,
    moments: Vec<Complex64>,
}

impl SigmaRow {
    pub fn new(row: &ArrayRow) -> Result<Self> {
        let domain = row.domain();
        let groups = match domain {
            SupportDomain::HalfLine => group(row, |m| HalflineInverter::new(m.clone()).map(EtaInverter::Half))?,
            SupportDomain::Circle => group(row, |m| CircleInverter::new(m.clone()).map(EtaInverter::Circle))?,
            SupportDomain::Line => {
                return Err(Error::InvalidSupport("Σ is not defined on the line".into()))
            }
        };
        let moments = groups
            .iter()
            .map(|(g, _)| match g {
                EtaInverter::Half(h) => h.measure().mean(),
                EtaInverter::Circle(c) => c.mean(),
            })
            .collect();
        Ok(Self {
            domain,
            groups,
            moments,
        })
    }

    /// Smallest `ρ_μ` over the row (circle only; `1` on the half-line).
    pub fn rho(&self) -> f64 {
        self.groups
            .iter()
            .map(|(g, _)| match g {
                EtaInverter::Half(_) => 1.0,
                EtaInverter::Circle(c) => c.disk().rho_mu,
            })
            .fold(1.0, f64::min)
    }

    /// `Π_i Σ_{μ_i}(z)`.
    pub fn sigma_product(&self, z: Complex64, cursor: &mut Cursor) -> Result<Complex64> {
        if z.norm() == 0.0 {
            return Ok(1.0 / self.first_moment()?);
        }
        Ok(self.sigma_jet(z, cursor)?.0)
    }

    fn sigma_at_zero(&self) -> Complex64 {
        self.groups
            .iter()
            .zip(&self.moments)
            .map(|((_, k), m)| (1.0 / m).powi(*k as i32))
            .product()
    }
}

impl SigmaProvider for SigmaRow {
    fn domain(&self) -> SupportDomain {
        self.domain
    }

    fn sigma_jet(&self, z: Complex64, cursor: &mut Cursor) -> Result<(Complex64, Complex64)> {
        if z.norm() == 0.0 {
            let d = numeric::complex_derivative(
                |w| {
                    let mut c = Cursor::new();
                    self.sigma_jet(w, &mut c).map(|j| j.0)
                },
                z,
            )?;
            return Ok((self.sigma_at_zero(), d));
        }
        let mut value = Complex64::new(1.0, 0.0);
        let mut log_d = Complex64::new(0.0, 0.0);
        for (i, (g, k)) in self.groups.iter().enumerate() {
            let (v, vp) = match g {
                EtaInverter::Half(h) => h.invert_tracked(z, cursor.slot(i))?,
                EtaInverter::Circle(c) => c.invert_tracked(z, cursor.slot(i))?,
            };
            let s = v / z;
            value *= s.powi(*k as i32);
            log_d += *k * (vp / v - 1.0 / z);
        }
        Ok((value, value * log_d))
    }

    fn first_moment(&self) -> Result<Complex64> {
        Ok(1.0 / self.sigma_at_zero())
    }

    fn disk_radius(&self) -> f64 {
        self.rho()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn point_mass_rows_have_constant_phi() {
        let row = ArrayRow::new(
            0,
            [0.5, -1.5, 2.0]
                .iter()
                .map(|&a| Measure::point_mass(SupportDomain::Line, a).unwrap())
                .collect(),
        )
        .unwrap();
        let lr = LineRow::new(&row).unwrap();
        let mut cur = Cursor::new();
        for z in [c(0.0, 3.0), c(-2.0, 5.0), c(4.0, 9.0)] {
            assert!((lr.phi_sum(z, &mut cur).unwrap() - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn two_bernoulli_copies_at_3i() {
        let b = Measure::atomic(SupportDomain::Line, vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let row = ArrayRow::new(0, vec![b.clone(), b]).unwrap();
        let lr = LineRow::new(&row).unwrap();
        assert_eq!(lr.groups().len(), 1);
        let p = lr.phi_sum(c(0.0, 3.0), &mut Cursor::new()).unwrap();
        assert!((p - c(0.0, 5f64.sqrt() - 3.0)).norm() < 1e-10);
        assert!((p - c(0.0, -0.763932)).norm() < 1e-6);
    }

    #[test]
    fn three_kesten_copies_at_3i() {
        let a = 1.0 / 3f64.sqrt();
        let b = Measure::atomic(SupportDomain::Line, vec![(-a, 0.5), (a, 0.5)]).unwrap();
        let row = ArrayRow::new(0, vec![b.clone(), b.clone(), b]).unwrap();
        let p = LineRow::new(&row).unwrap().phi_sum(c(0.0, 3.0), &mut Cursor::new()).unwrap();
        assert!((p - c(0.0, -0.346688)).norm() < 1e-6);
    }

    #[test]
    fn tracked_and_cold_evaluations_agree() {
        let row = ArrayRow::new(
            0,
            vec![
                Measure::atomic(SupportDomain::Line, vec![(-0.4, 0.5), (0.3, 0.5)]).unwrap(),
                Measure::atomic(SupportDomain::Line, vec![(-0.2, 0.3), (0.5, 0.7)]).unwrap(),
            ],
        )
        .unwrap();
        let lr = LineRow::new(&row).unwrap();
        let mut warm = Cursor::new();
        for t in [2.0, 1.5, 1.1, 0.9, 1.3] {
            let z = c(0.2, t);
            let a = lr.h_jet(z, &mut warm).unwrap();
            let b = lr.h_jet(z, &mut Cursor::new()).unwrap();
            assert!((a.0 - b.0).norm() < 1e-10 && (a.1 - b.1).norm() < 1e-8);
        }
    }

    #[test]
    fn sigma_products() {
        let row = ArrayRow::new(
            0,
            vec![
                Measure::point_mass(SupportDomain::HalfLine, 2.0).unwrap(),
                Measure::point_mass(SupportDomain::HalfLine, 3.0).unwrap(),
            ],
        )
        .unwrap();
        let sr = SigmaRow::new(&row).unwrap();
        let mut cur = Cursor::new();
        for z in [c(-0.3, 0.2), c(0.1, 0.5), c(-2.0, 0.0)] {
            assert!((sr.sigma_product(z, &mut cur).unwrap() - 1.0 / 6.0).norm() < 1e-12);
        }
        let mu = Measure::atomic(SupportDomain::HalfLine, vec![(0.5, 0.5), (1.5, 0.5)]).unwrap();
        let sq = SigmaRow::new(&ArrayRow::new(0, vec![mu.clone(), mu.clone()]).unwrap()).unwrap();
        let v = sq.sigma_product(c(-0.875, 0.0), &mut Cursor::new()).unwrap();
        assert!((v - (8.0f64 / 7.0).powi(2)).norm() < 1e-10);
        let with_one = ArrayRow::new(0, vec![mu.clone(), mu, Measure::point_mass(SupportDomain::HalfLine, 1.0).unwrap()]).unwrap();
        let w = SigmaRow::new(&with_one).unwrap().sigma_product(c(-0.875, 0.0), &mut Cursor::new()).unwrap();
        assert!((w - v).norm() < 1e-12);
    }

    #[test]
    fn circle_point_masses_multiply_phases() {
        let (a, b) = (0.4, 5.1);
        let row = ArrayRow::new(
            0,
            vec![
                Measure::point_mass(SupportDomain::Circle, a).unwrap(),
                Measure::point_mass(SupportDomain::Circle, b).unwrap(),
            ],
        )
        .unwrap();
        let sr = SigmaRow::new(&row).unwrap();
        let expect = Complex64::from_polar(1.0, -(a + b));
        let mut cur = Cursor::new();
        for z in [c(0.0, 0.0), c(0.3, -0.2), c(-0.6, 0.1)] {
            assert!((sr.sigma_product(z, &mut cur).unwrap() - expect).norm() < 1e-12);
        }
        let haar = crate::measures::haar_grid(32).unwrap();
        let bad = ArrayRow::new(0, vec![Measure::point_mass(SupportDomain::Circle, 0.0).unwrap(), haar]).unwrap();
        assert!(matches!(SigmaRow::new(&bad), Err(Error::ZeroMeanMeasure)));
    }

    #[test]
    fn sigma_derivative_matches_difference_quotient() {
        let mu = Measure::atomic(SupportDomain::HalfLine, vec![(0.5, 0.3), (1.5, 0.7)]).unwrap();
        let nu = Measure::atomic(SupportDomain::HalfLine, vec![(0.8, 0.6), (2.0, 0.4)]).unwrap();
        let sr = SigmaRow::new(&ArrayRow::new(0, vec![mu, nu]).unwrap()).unwrap();
        let z = c(-0.4, 0.3);
        let (_, d) = sr.sigma_jet(z, &mut Cursor::new()).unwrap();
        let fd = numeric::complex_derivative(|w| sr.sigma_jet(w, &mut Cursor::new()).map(|j| j.0), z).unwrap();
        assert!((d - fd).norm() < 1e-7);
    }
}
