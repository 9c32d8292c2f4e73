//! Probability measures on the line, the half-line and the unit circle.
//!
//! Two concrete forms are supported: finitely many atoms, and a density
//! sampled on a grid of nodes (piecewise linear between nodes, zero outside
//! the node range on the line and half-line, periodic on the circle). Circle
//! positions are stored as angles in `[0, 2π)`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

const ATOMIC_MASS_TOL: f64 = 1e-12;
const GRID_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportDomain {
    Line,
    HalfLine,
    Circle,
}

impl SupportDomain {
    fn admits(self, position: f64) -> bool {
        match self {
            SupportDomain::Line => position.is_finite(),
            SupportDomain::HalfLine => position.is_finite() && position >= 0.0,
            SupportDomain::Circle => (0.0..TAU).contains(&position),
        }
    }
}

/// Wrap an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub domain: SupportDomain,
    pub atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(domain: SupportDomain, atoms: Vec<(f64, f64)>) -> Result<Self> {
        let m = Self {
            domain,
            atoms: atoms
                .into_iter()
                .map(|(position, weight)| Atom { position, weight })
                .collect(),
        };
        m.check()?;
        Ok(m)
    }

    pub fn point_mass(domain: SupportDomain, position: f64) -> Result<Self> {
        Self::new(domain, vec![(position, 1.0)])
    }

    fn check(&self) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::InvalidWeights("no atoms".into()));
        }
        for a in &self.atoms {
            if !(a.weight.is_finite() && a.weight > 0.0) {
                return Err(Error::InvalidWeights(format!(
                    "weight {} at {} is not strictly positive",
                    a.weight, a.position
                )));
            }
            if !self.domain.admits(a.position) {
                return Err(Error::InvalidSupport(format!(
                    "position {} not admissible on {:?}",
                    a.position, self.domain
                )));
            }
        }
        let mut pos: Vec<f64> = self.atoms.iter().map(|a| a.position).collect();
        pos.sort_by(f64::total_cmp);
        if pos.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSupport("repeated atom position".into()));
        }
        let total: f64 = self.atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > ATOMIC_MASS_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(())
    }

    /// Atom locations as complex numbers (`e^{iθ}` on the circle).
    pub fn points(&self) -> impl Iterator<Item = (Complex64, f64)> + '_ {
        let circle = self.domain == SupportDomain::Circle;
        self.atoms.iter().map(move |a| {
            let p = if circle {
                Complex64::from_polar(1.0, a.position)
            } else {
                Complex64::new(a.position, 0.0)
            };
            (p, a.weight)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    pub domain: SupportDomain,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridMeasure {
    pub fn new(domain: SupportDomain, nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let m = Self {
            domain,
            nodes,
            values,
        };
        m.check()?;
        Ok(m)
    }

    /// Samples `density` at `nodes` and rescales so that the trapezoid mass
    /// is exactly one.
    pub fn from_density<F: Fn(f64) -> f64>(
        domain: SupportDomain,
        nodes: Vec<f64>,
        density: F,
    ) -> Result<Self> {
        let values: Vec<f64> = nodes.iter().map(|&x| density(x).max(0.0)).collect();
        let raw = Self {
            domain,
            nodes,
            values,
        };
        let mass = raw.trapezoid_mass();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::NotNormalized(mass));
        }
        let values = raw.values.iter().map(|v| v / mass).collect();
        Self::new(raw.domain, raw.nodes, values)
    }

    fn check(&self) -> Result<()> {
        if self.nodes.len() < 2 || self.nodes.len() != self.values.len() {
            return Err(Error::InvalidSupport(
                "grid needs at least two nodes and one value per node".into(),
            ));
        }
        if self.nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSupport("nodes not strictly increasing".into()));
        }
        if let Some(x) = self.nodes.iter().find(|&&x| !self.domain.admits(x)) {
            return Err(Error::InvalidSupport(format!(
                "node {x} not admissible on {:?}",
                self.domain
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidWeights(format!("negative or non-finite density {v}")));
        }
        let mass = self.trapezoid_mass();
        if (mass - 1.0).abs() > GRID_MASS_TOL {
            return Err(Error::NotNormalized(mass));
        }
        Ok(())
    }

    /// Panels `(left, right, value_left, value_right)` of the piecewise
    /// linear model; on the circle the wrap-around panel is included.
    pub fn panels(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut out: Vec<_> = self
            .nodes
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| (x[0], x[1], v[0], v[1]))
            .collect();
        if self.domain == SupportDomain::Circle {
            let n = self.nodes.len();
            out.push((
                self.nodes[n - 1],
                self.nodes[0] + TAU,
                self.values[n - 1],
                self.values[0],
            ));
        }
        out
    }

    /// Trapezoid mass; on the circle relative to `dθ / 2π`.
    pub fn trapezoid_mass(&self) -> f64 {
        let s: f64 = self
            .panels()
            .iter()
            .map(|&(a, b, va, vb)| 0.5 * (b - a) * (va + vb))
            .sum();
        if self.domain == SupportDomain::Circle {
            s / TAU
        } else {
            s
        }
    }

    /// Normalising factor from the panel variable to the measure
    /// (`1/2π` on the circle).
    pub fn scale(&self) -> f64 {
        if self.domain == SupportDomain::Circle {
            1.0 / TAU
        } else {
            1.0
        }
    }

    /// `∫ kernel(t) dμ(t)` over the piecewise linear model, where the
    /// kernel receives the panel variable (an angle on the circle). Panels
    /// are split adaptively while `near(a, b)` reports a nearby singularity.
    pub fn integrate<K, N>(&self, kernel: K, near: N) -> Complex64
    where
        K: Fn(f64) -> Complex64,
        N: Fn(f64, f64) -> bool,
    {
        let gl = quadrature::rule(32);
        let mut total = Complex64::new(0.0, 0.0);
        let mut stack: Vec<(f64, f64, f64, f64, u32)> = Vec::new();
        for (a, b, va, vb) in self.panels() {
            stack.push((a, b, va, vb, 0));
            while let Some((a, b, va, vb, depth)) = stack.pop() {
                if depth < 24 && near(a, b) {
                    let m = 0.5 * (a + b);
                    let vm = 0.5 * (va + vb);
                    stack.push((a, m, va, vm, depth + 1));
                    stack.push((m, b, vm, vb, depth + 1));
                    continue;
                }
                let slope = (vb - va) / (b - a);
                for (x, w) in gl.mapped(a, b) {
                    let dens = va + slope * (x - a);
                    if dens != 0.0 {
                        total += kernel(x) * (w * dens);
                    }
                }
            }
        }
        total * self.scale()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Measure {
    Atomic(AtomicMeasure),
    Grid(GridMeasure),
}

impl From<AtomicMeasure> for Measure {
    fn from(m: AtomicMeasure) -> Self {
        Measure::Atomic(m)
    }
}

impl From<GridMeasure> for Measure {
    fn from(m: GridMeasure) -> Self {
        Measure::Grid(m)
    }
}

impl Measure {
    pub fn atomic(domain: SupportDomain, atoms: Vec<(f64, f64)>) -> Result<Self> {
        AtomicMeasure::new(domain, atoms).map(Measure::Atomic)
    }

    pub fn point_mass(domain: SupportDomain, position: f64) -> Result<Self> {
        AtomicMeasure::point_mass(domain, position).map(Measure::Atomic)
    }

    pub fn domain(&self) -> SupportDomain {
        match self {
            Measure::Atomic(m) => m.domain,
            Measure::Grid(m) => m.domain,
        }
    }

    /// Returns the measure unchanged if every invariant holds.
    pub fn validate(self) -> Result<Self> {
        match &self {
            Measure::Atomic(m) => m.check()?,
            Measure::Grid(m) => m.check()?,
        }
        Ok(self)
    }

    /// Raw moment `∫ t^k dμ` (`∫ ζ^k dμ` on the circle), `k ≤ 4`.
    pub fn moment(&self, k: u32) -> Complex64 {
        assert!(k <= 4, "moments are supported up to order 4");
        match self {
            Measure::Atomic(m) => m.points().map(|(p, w)| p.powu(k) * w).sum(),
            Measure::Grid(g) => {
                let circle = g.domain == SupportDomain::Circle;
                g.integrate(
                    |t| {
                        if circle {
                            Complex64::from_polar(1.0, k as f64 * t)
                        } else {
                            Complex64::new(t.powi(k as i32), 0.0)
                        }
                    },
                    |_, _| false,
                )
            }
        }
    }

    pub fn mean(&self) -> Complex64 {
        self.moment(1)
    }

    /// Variance about the mean (line and half-line).
    pub fn variance(&self) -> f64 {
        let m1 = self.moment(1).re;
        self.moment(2).re - m1 * m1
    }

    /// Mass of the ball of radius `eps` around the unit of the domain:
    /// `(-ε, ε)` on the line, `(1-ε, 1+ε)` on the half-line and
    /// `{|ζ - 1| < ε}` on the circle.
    pub fn central_mass(&self, eps: f64) -> f64 {
        match self {
            Measure::Atomic(m) => m
                .points()
                .filter(|(p, _)| match m.domain {
                    SupportDomain::Line => p.re.abs() < eps,
                    SupportDomain::HalfLine | SupportDomain::Circle => (p - 1.0).norm() < eps,
                })
                .map(|(_, w)| w)
                .sum(),
            Measure::Grid(g) => {
                let (lo, hi) = match g.domain {
                    SupportDomain::Line => (-eps, eps),
                    SupportDomain::HalfLine => (1.0 - eps, 1.0 + eps),
                    SupportDomain::Circle => {
                        if eps >= 2.0 {
                            return 1.0;
                        }
                        let half = 2.0 * (eps / 2.0).asin();
                        (-half, half)
                    }
                };
                let mut mass = 0.0;
                let shifts: &[f64] = if g.domain == SupportDomain::Circle {
                    &[-TAU, 0.0, TAU]
                } else {
                    &[0.0]
                };
                for (a, b, va, vb) in g.panels() {
                    for &sh in shifts {
                        let (a2, b2) = ((a + sh).max(lo), (b + sh).min(hi));
                        if b2 > a2 {
                            let lin = |x: f64| va + (vb - va) * (x - sh - a) / (b - a);
                            mass += 0.5 * (b2 - a2) * (lin(a2) + lin(b2));
                        }
                    }
                }
                (mass * g.scale()).min(1.0)
            }
        }
    }

    /// Pushforward by `t ↦ c t` (line and half-line; `c > 0` on the half-line).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        match self {
            Measure::Atomic(m) => Measure::atomic(
                m.domain,
                m.atoms.iter().map(|a| (c * a.position, a.weight)).collect(),
            ),
            Measure::Grid(g) => {
                if g.domain == SupportDomain::Circle || c <= 0.0 {
                    return Err(Error::InvalidSupport("grid scaling needs c > 0 off the circle".into()));
                }
                Ok(Measure::Grid(GridMeasure::new(
                    g.domain,
                    g.nodes.iter().map(|x| c * x).collect(),
                    g.values.iter().map(|v| v / c).collect(),
                )?))
            }
        }
    }

    /// Rotation by `e^{iα}` on the circle.
    pub fn rotated(&self, alpha: f64) -> Result<Self> {
        match self {
            Measure::Atomic(m) if m.domain == SupportDomain::Circle => Measure::atomic(
                m.domain,
                m.atoms
                    .iter()
                    .map(|a| (wrap_angle(a.position + alpha), a.weight))
                    .collect(),
            ),
            _ => Err(Error::InvalidSupport("rotation is defined for atomic circle measures".into())),
        }
    }
}

/// Semicircle law of variance one sampled on `n` Chebyshev-clustered nodes.
pub fn semicircle_grid(n: usize) -> Result<Measure> {
    let nodes: Vec<f64> = (0..n)
        .map(|j| -2.0 * (PI * j as f64 / (n - 1) as f64).cos())
        .collect();
    GridMeasure::from_density(SupportDomain::Line, nodes, |x| {
        (4.0 - x * x).max(0.0).sqrt() / (2.0 * PI)
    })
    .map(Measure::Grid)
}

/// Haar measure on the circle sampled on `n` uniform angles.
pub fn haar_grid(n: usize) -> Result<Measure> {
    let nodes: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
    GridMeasure::new(SupportDomain::Circle, nodes, vec![1.0; n]).map(Measure::Grid)
}

/// One row of a triangular array: measures sharing a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayRow {
    pub index: usize,
    pub measures: Vec<Measure>,
}

impl ArrayRow {
    pub fn new(index: usize, measures: Vec<Measure>) -> Result<Self> {
        let first = measures
            .first()
            .ok_or_else(|| Error::InvalidSupport("row must be nonempty".into()))?
            .domain();
        if measures.iter().any(|m| m.domain() != first) {
            return Err(Error::InvalidSupport("row mixes support domains".into()));
        }
        Ok(Self { index, measures })
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn domain(&self) -> SupportDomain {
        self.measures[0].domain()
    }

    /// `1 - min_i μ_i(B_ε)`.
    pub fn infinitesimality_deficit(&self, eps: f64) -> f64 {
        let min = self
            .measures
            .iter()
            .map(|m| m.central_mass(eps))
            .fold(f64::INFINITY, f64::min);
        (1.0 - min).clamp(0.0, 1.0)
    }

    pub fn with_appended(&self, m: Measure) -> Result<Self> {
        let mut measures = self.measures.clone();
        measures.push(m);
        Self::new(self.index, measures)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_point_mass_is_valid() {
        let m = Measure::point_mass(SupportDomain::Line, 0.0).unwrap();
        assert_eq!(m.clone().validate().unwrap(), m);
    }

    #[test]
    fn unnormalized_weights_rejected() {
        let e = Measure::atomic(SupportDomain::Line, vec![(0.0, 0.5), (1.0, 0.6)]).unwrap_err();
        assert!(matches!(e, Error::NotNormalized(_)));
    }

    #[test]
    fn nonpositive_weight_and_bad_support_rejected() {
        let e = Measure::atomic(SupportDomain::Line, vec![(0.0, 1.5), (1.0, -0.5)]).unwrap_err();
        assert!(matches!(e, Error::InvalidWeights(_)));
        let e = Measure::atomic(SupportDomain::HalfLine, vec![(-1.0, 1.0)]).unwrap_err();
        assert!(matches!(e, Error::InvalidSupport(_)));
        let e = Measure::atomic(SupportDomain::Circle, vec![(7.0, 1.0)]).unwrap_err();
        assert!(matches!(e, Error::InvalidSupport(_)));
        let e = Measure::atomic(SupportDomain::Line, vec![(1.0, 0.5), (1.0, 0.5)]).unwrap_err();
        assert!(matches!(e, Error::InvalidSupport(_)));
    }

    #[test]
    fn grid_with_deficient_mass_rejected() {
        let nodes = vec![0.0, 1.0];
        let e = GridMeasure::new(SupportDomain::Line, nodes, vec![0.99, 0.99]).unwrap_err();
        assert!(matches!(e, Error::NotNormalized(m) if (m - 0.99).abs() < 1e-12));
    }

    #[test]
    fn moments_of_simple_measures() {
        let d = Measure::point_mass(SupportDomain::Line, 1.7).unwrap();
        assert_eq!(d.mean().re, 1.7);
        assert_eq!(d.variance(), 0.0);
        for k in 0..=4 {
            assert_eq!(d.moment(k).re, 1.7f64.powi(k as i32));
        }
        let b = Measure::atomic(SupportDomain::Line, vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(b.mean().re, 0.0);
        assert_eq!(b.variance(), 1.0);
        let c = Measure::atomic(SupportDomain::Circle, vec![(0.0, 0.9), (PI / 2.0, 0.1)]).unwrap();
        let m1 = c.mean();
        assert!((m1 - Complex64::new(0.9, 0.1)).norm() < 1e-15);
    }

    #[test]
    fn grid_moments_use_quadrature() {
        let s = semicircle_grid(2001).unwrap();
        assert!(s.mean().norm() < 1e-12);
        assert!((s.variance() - 1.0).abs() < 1e-5);
        let h = haar_grid(256).unwrap();
        assert!(h.mean().norm() < 1e-12);
    }

    #[test]
    fn deficit_examples() {
        let row = ArrayRow::new(
            1,
            vec![Measure::point_mass(SupportDomain::Line, 0.0).unwrap(); 3],
        )
        .unwrap();
        assert_eq!(row.infinitesimality_deficit(1e-3), 0.0);
        let b = Measure::atomic(SupportDomain::Line, vec![(-0.5, 0.5), (0.5, 0.5)]).unwrap();
        let row = ArrayRow::new(1, vec![b]).unwrap();
        assert_eq!(row.infinitesimality_deficit(0.4), 1.0);
        assert_eq!(row.infinitesimality_deficit(0.6), 0.0);
    }

    #[test]
    fn grid_central_mass() {
        let h = haar_grid(360).unwrap();
        // arc |ζ-1| < 2 sin(π/4) has angular half-width π/2
        let m = h.central_mass(2.0 * (PI / 4.0).sin());
        assert!((m - 0.5).abs() < 1e-9, "{m}");
    }

    #[test]
    fn mixed_row_rejected() {
        let a = Measure::point_mass(SupportDomain::Line, 0.0).unwrap();
        let b = Measure::point_mass(SupportDomain::HalfLine, 1.0).unwrap();
        assert!(ArrayRow::new(0, vec![a, b]).is_err());
        assert!(ArrayRow::new(0, vec![]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn atomic_line() -> impl Strategy<Value = Measure> {
            prop::collection::vec((-5.0f64..5.0, 0.05f64..1.0), 1..6).prop_filter_map(
                "distinct positions",
                |mut v| {
                    v.sort_by(|a, b| a.0.total_cmp(&b.0));
                    v.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-9);
                    let total: f64 = v.iter().map(|a| a.1).sum();
                    let atoms = v.into_iter().map(|(p, w)| (p, w / total)).collect();
                    Measure::atomic(SupportDomain::Line, atoms).ok()
                },
            )
        }

        proptest! {
            #[test]
            fn validate_is_idempotent(m in atomic_line()) {
                let once = m.clone().validate().unwrap();
                let twice = once.clone().validate().unwrap();
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn deficit_nonincreasing_in_radius(m in atomic_line(), e1 in 0.01f64..3.0, de in 0.0f64..3.0) {
                let row = ArrayRow::new(0, vec![m]).unwrap();
                prop_assert!(row.infinitesimality_deficit(e1 + de) <= row.infinitesimality_deficit(e1));
            }
        }
    }
}
