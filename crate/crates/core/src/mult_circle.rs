//! Free multiplicative convolution on the circle: the radial boundary
//! `R(ζ)` where `|Φ(rζ)|` reaches one, and the Poisson-kernel density at
//! `e^{iξ} = conj Φ(R(ζ)ζ)`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::additive::{support_edge, warm_start, DensityCurve};
use crate::error::{Error, Result};
use crate::inversion::{newton_solve, Cursor};
use crate::measures::SupportDomain;
use crate::numeric::{self, richardson_halving};
use crate::quadrature;
use crate::rows::SigmaProvider;
use crate::transforms::{Ladder, StieltjesEstimate};

pub const DEFAULT_ANGLES: usize = 721;
const ROOT_TOL: f64 = 1e-13;
const UNIT_TOL: f64 = 1e-9;
const SCAN_POINTS: usize = 32;
const TAIL_STEPS: i32 = 40;
/// `R` this close to the edge of the disk counts as no crossing: on arcs
/// outside the support `|Φ|` tends to one at the circle itself.
const EDGE_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialPoint {
    /// Direction `ζ = e^{i·angle}`.
    pub angle: f64,
    pub r: f64,
    pub r_lo: f64,
    pub r_hi: f64,
}

impl RadialPoint {
    pub fn w(&self) -> Complex64 {
        Complex64::from_polar(self.r, self.angle)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RadialBoundaryCurve {
    pub points: Vec<RadialPoint>,
}

fn check_domain<P: SigmaProvider + ?Sized>(p: &P) -> Result<()> {
    if p.domain() != SupportDomain::Circle {
        return Err(Error::InvalidSupport("expected a circle provider".into()));
    }
    Ok(())
}

/// `Π_i Σ_{μ_i}(z)` on the disk `|z| < ρ`.
pub fn sigma_product_circle<P: SigmaProvider + ?Sized>(p: &P, z: Complex64, cursor: &mut Cursor) -> Result<Complex64> {
    check_domain(p)?;
    if !(z.norm() < p.disk_radius()) {
        return Err(Error::OutOfDomain(z));
    }
    if z.norm() == 0.0 {
        return Ok(1.0 / p.first_moment()?);
    }
    Ok(p.sigma_jet(z, cursor)?.0)
}

/// Root in `r` of `log|Φ(rζ)|`, `ζ = e^{i·angle}`.
pub fn radial_boundary<P: SigmaProvider + ?Sized>(
    p: &P,
    angle: f64,
    seed: Option<f64>,
    cursor: &mut Cursor,
) -> Result<RadialPoint> {
    check_domain(p)?;
    let zeta = Complex64::from_polar(1.0, angle);
    let r_max = p.disk_radius() * (1.0 - EDGE_GAP);
    let mut log_abs = |r: f64| p.phi_jet(zeta * r, cursor).map(|j| j.0.norm().ln());

    let mut bracket = None;
    if let Some(r0) = seed.filter(|&r0| r0 > 0.0 && r0 < r_max) {
        let lo = 0.98 * r0;
        if log_abs(lo)? < 0.0 {
            for frac in [0.05, 0.3] {
                let hi = r0 + frac * (r_max - r0);
                if log_abs(hi)? > 0.0 {
                    bracket = Some((lo, hi));
                    break;
                }
            }
        }
    }
    let (lo, hi) = match bracket {
        Some(b) => b,
        None => {
            let mut scan = (1..SCAN_POINTS).map(|k| r_max * k as f64 / SCAN_POINTS as f64).collect::<Vec<_>>();
            scan.extend((6..=TAIL_STEPS).map(|j| r_max * (1.0 - 0.5f64.powi(j))));
            scan.push(r_max);
            let mut lo = 0.0;
            let mut hi = None;
            for r in scan {
                if log_abs(r)? > 0.0 {
                    hi = Some(r);
                    break;
                }
                lo = r;
            }
            let hi = hi.ok_or(Error::NoCrossing(angle))?;
            if lo == 0.0 {
                lo = hi;
                while log_abs(lo)? >= 0.0 {
                    lo *= 0.5;
                    if lo < 1e-300 {
                        return Err(Error::NonConvergent(format!("|Φ| ≥ 1 near 0 along {angle}")));
                    }
                }
            }
            (lo, hi)
        }
    };
    let r = numeric::bisect(lo, hi, ROOT_TOL, &mut log_abs)?;
    let (phi, dphi) = p.phi_jet(zeta * r, cursor)?;
    if (phi.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::NonConvergent(format!("|Φ| = {} at the crossing along {angle}", phi.norm())));
    }
    if !((zeta * r * dphi / phi).re > 0.0) {
        return Err(Error::NonConvergent(format!("log|Φ| not increasing along {angle}")));
    }
    Ok(RadialPoint {
        angle,
        r,
        r_lo: lo,
        r_hi: hi,
    })
}

/// `(ξ, p, dξ/dangle)` at a boundary point: `e^{iξ} = conj Φ(w)` and
/// `p = (1 - |w|²)/|1 - w|²` against normalized arclength.
pub fn density_circle<P: SigmaProvider + ?Sized>(
    p: &P,
    pt: &RadialPoint,
    cursor: &mut Cursor,
) -> Result<(f64, f64, f64)> {
    if pt.r >= p.disk_radius() * (1.0 - EDGE_GAP) {
        return Err(Error::AtomDirection(pt.angle));
    }
    let w = pt.w();
    let (phi, dphi) = p.phi_jet(w, cursor)?;
    let xi = (-phi.arg()).rem_euclid(TAU);
    let dens = (1.0 - w.norm_sqr()) / (1.0 - w).norm_sqr();
    let q = w * dphi / phi;
    Ok((xi, dens, -q.norm_sqr() / q.re))
}

/// Boundary and density over a grid of directions. The density abscissae
/// are the angles `ξ` unwrapped along the grid, starting after the largest
/// gap between accepted directions, then shifted by a multiple of `2π` so
/// that their midpoint lies in `(-π, π]`.
pub fn density_curve<P: SigmaProvider + ?Sized>(p: &P, angles: &[f64]) -> Result<(RadialBoundaryCurve, DensityCurve)> {
    check_domain(p)?;
    let solve = |a: f64, seed: Option<f64>| -> Result<(RadialPoint, f64, f64)> {
        let mut cur = Cursor::new();
        let pt = radial_boundary(p, a, seed, &mut cur)?;
        let (xi, d, _) = density_circle(p, &pt, &mut cur)?;
        Ok((pt, xi, d))
    };
    let seeds = warm_start(angles, |a, seed| solve(a, seed).map(|v| v.0.r));
    let results: Vec<_> = angles.par_iter().enumerate().map(|(i, &a)| solve(a, seeds[i])).collect();

    let mut ok = Vec::new();
    let mut excluded = 0;
    let mut first_err = None;
    for res in results {
        match res {
            Ok(v) => ok.push(v),
            Err(e @ (Error::NoCrossing(_) | Error::BranchLost(_) | Error::AtomDirection(_))) => {
                excluded += 1;
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if ok.is_empty() {
        return Err(first_err.unwrap_or(Error::NoCrossing(f64::NAN)));
    }

    // cut the cyclic sequence of directions at its widest gap
    let n = ok.len();
    let gap = |i: usize| (ok[(i + 1) % n].0.angle - ok[i].0.angle).rem_euclid(TAU);
    let cut = (0..n).max_by(|&i, &j| gap(i).total_cmp(&gap(j))).map_or(0, |i| (i + 1) % n);
    ok.rotate_left(cut);

    let mut boundary = RadialBoundaryCurve::default();
    let mut samples = Vec::with_capacity(n);
    let mut prev: Option<f64> = None;
    for (pt, xi, d) in ok {
        let x = match prev {
            Some(q) => q + (xi - q + PI).rem_euclid(TAU) - PI,
            None => xi,
        };
        prev = Some(x);
        boundary.points.push(pt);
        samples.push((x, d, pt.angle, pt.r));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s.0), h.max(s.0)));
    let shift = TAU * ((0.5 * (lo + hi) + PI) / TAU).ceil() - TAU;
    for s in &mut samples {
        s.0 -= shift;
    }
    Ok((boundary, DensityCurve::from_samples(samples, excluded)?))
}

/// `n` uniformly spaced directions in `[0, 2π)`.
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

const EDGE_TOL: f64 = 1e-13;
const PROBE_RAYS: usize = 64;
const MOMENT_NODES: usize = 256;
const PERIODIC_NODES: usize = 1024;

fn crosses<P: SigmaProvider + ?Sized>(p: &P, a: f64) -> bool {
    let mut cur = Cursor::new();
    radial_boundary(p, a, None, &mut cur)
        .and_then(|pt| density_circle(p, &pt, &mut cur))
        .is_ok()
}

/// Arc of directions around `angle0` on which a crossing exists, or `None`
/// when every probed direction has one.
pub fn angle_support<P: SigmaProvider + ?Sized>(p: &P, angle0: f64) -> Result<Option<(f64, f64)>> {
    if !crosses(p, angle0) {
        return Err(Error::NoCrossing(angle0));
    }
    let step = TAU / PROBE_RAYS as f64;
    let probes: Vec<bool> = (1..PROBE_RAYS)
        .into_par_iter()
        .map(|k| crosses(p, angle0 + step * k as f64))
        .collect();
    if probes.iter().all(|&c| c) {
        return Ok(None);
    }
    let right = probes.iter().position(|&c| !c).unwrap() + 1;
    let left = probes.iter().rposition(|&c| !c).unwrap() + 1;
    let crossing = |a: f64| crosses(p, a);
    let hi = support_edge(angle0 + step * (right - 1) as f64, angle0 + step * right as f64, EDGE_TOL, crossing);
    let lo = support_edge(
        angle0 - step * (PROBE_RAYS - left - 1) as f64,
        angle0 - step * (PROBE_RAYS - left) as f64,
        EDGE_TOL,
        crossing,
    );
    Ok(Some((lo, hi)))
}

/// `∮ g(ξ) p(ξ) dm(ξ)` over the arc of the density containing the image
/// of `angle0` (the whole circle when every direction crosses).
pub fn integrate_density<P, G>(p: &P, angle0: f64, g: G) -> Result<Complex64>
where
    P: SigmaProvider + ?Sized,
    G: Fn(f64) -> Complex64 + Sync,
{
    check_domain(p)?;
    let term = |a: f64| -> Result<Complex64> {
        let mut cur = Cursor::new();
        let pt = match radial_boundary(p, a, None, &mut cur) {
            Ok(pt) => pt,
            Err(Error::NoCrossing(_)) => return Ok(Complex64::new(0.0, 0.0)),
            Err(e) => return Err(e),
        };
        let (xi, dens, jac) = match density_circle(p, &pt, &mut cur) {
            Ok(v) => v,
            Err(Error::AtomDirection(_)) => return Ok(Complex64::new(0.0, 0.0)),
            Err(e) => return Err(e),
        };
        Ok(g(xi) * dens * jac.abs() / TAU)
    };
    let terms: Vec<Complex64> = match angle_support(p, angle0)? {
        None => angle_grid(PERIODIC_NODES)
            .par_iter()
            .map(|&a| term(a).map(|t| t * (TAU / PERIODIC_NODES as f64)))
            .collect::<Result<_>>()?,
        Some((lo, hi)) => {
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo);
            let nodes: Vec<(f64, f64)> = quadrature::rule(MOMENT_NODES).mapped(0.0, PI).collect();
            nodes
                .par_iter()
                .map(|&(th, w)| term(mid - half * th.cos()).map(|t| t * (w * half * th.sin())))
                .collect::<Result<_>>()?
        }
    };
    Ok(terms.iter().sum())
}

/// Density at the image of `pt` as the radial limit of
/// `Re((1 + η(z))/(1 - η(z)))`, `z = (1 - ε)e^{-iξ}`, with `η = Φ^{-1}`
/// solved by Newton from the boundary point and extrapolated in `ε`.
pub fn radial_limit_check<P: SigmaProvider + ?Sized>(p: &P, pt: &RadialPoint, ladder: &Ladder) -> Result<StieltjesEstimate> {
    let w0 = pt.w();
    let r_max = p.disk_radius();
    let forward = |v: Complex64| p.phi_jet(v, &mut Cursor::new());
    let u = forward(w0)?.0;
    let samples = ladder
        .eps()
        .map(|e| {
            let target = u * (1.0 - e);
            let (v, _) = newton_solve(&forward, target, w0, &|v: Complex64| v.norm() < r_max)
                .ok_or(Error::BranchLost(target))?;
            Ok(((1.0 + v) / (1.0 - v)).re)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (density, error) = richardson_halving(&samples, ladder.order);
    if !(error <= 1e-4) {
        return Err(Error::NonConvergent(format!("radial limit differs by {error:e} along {}", pt.angle)));
    }
    Ok(StieltjesEstimate { density, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::HerglotzSigmaDataCircle;
    use crate::measures::{haar_grid, ArrayRow, Measure};
    use crate::rows::SigmaRow;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn half_unit(gamma_angle: f64) -> HerglotzSigmaDataCircle {
        HerglotzSigmaDataCircle::new(gamma_angle, vec![(0.0, 0.5)]).unwrap()
    }

    /// `ln r + 0.5 (1 + r)/(1 - r) = 0` by bisection.
    fn r_oracle() -> f64 {
        let r: Result<f64> = numeric::bisect(1e-6, 1.0 - 1e-9, 1e-15, |r| Ok(r.ln() + 0.5 * (1.0 + r) / (1.0 - r)));
        r.unwrap()
    }

    /// Weights `q_i ∝ 1 + i/(2n)` summing to 1.5, so the row has no atom at 1.
    fn two_point_row(n: usize, alpha: f64) -> ArrayRow {
        let total: f64 = (0..n).map(|i| 1.0 + i as f64 / (2.0 * n as f64)).sum();
        let ms = (0..n)
            .map(|i| {
                let q = 1.5 * (1.0 + i as f64 / (2.0 * n as f64)) / total;
                Measure::atomic(SupportDomain::Circle, vec![(0.0, 1.0 - q), (alpha, q)]).unwrap()
            })
            .collect();
        ArrayRow::new(n, ms).unwrap()
    }

    #[test]
    fn sigma_product_examples() {
        let row = ArrayRow::new(
            0,
            vec![
                Measure::point_mass(SupportDomain::Circle, 0.4).unwrap(),
                Measure::point_mass(SupportDomain::Circle, 1.1).unwrap(),
            ],
        )
        .unwrap();
        let sr = SigmaRow::new(&row).unwrap();
        let mut cur = Cursor::new();
        for z in [c(0.1, 0.2), c(-0.3, 0.0), c(0.0, 0.0)] {
            let s = sigma_product_circle(&sr, z, &mut cur).unwrap();
            assert!((s - Complex64::from_polar(1.0, -1.5)).norm() < 1e-10, "{z} {s}");
        }
        let skew = Measure::atomic(SupportDomain::Circle, vec![(0.0, 0.9), (0.5 * PI, 0.1)]).unwrap();
        let sr = SigmaRow::new(&ArrayRow::new(0, vec![skew]).unwrap()).unwrap();
        let s0 = sigma_product_circle(&sr, c(0.0, 0.0), &mut cur).unwrap();
        assert!((s0 - c(1.097561, -0.121951)).norm() < 1e-6);
        let haar = ArrayRow::new(0, vec![haar_grid(64).unwrap()]).unwrap();
        assert_eq!(SigmaRow::new(&haar).unwrap_err(), Error::ZeroMeanMeasure);
    }

    #[test]
    fn point_mass_has_no_crossing() {
        let row = ArrayRow::new(0, vec![Measure::point_mass(SupportDomain::Circle, 0.7).unwrap()]).unwrap();
        let sr = SigmaRow::new(&row).unwrap();
        for a in [0.0, 1.0, 3.0] {
            assert!(matches!(radial_boundary(&sr, a, None, &mut Cursor::new()), Err(Error::NoCrossing(_))));
        }
    }

    #[test]
    fn radial_boundary_matches_oracle() {
        let p = half_unit(0.0);
        let pt = radial_boundary(&p, 0.0, None, &mut Cursor::new()).unwrap();
        let r = r_oracle();
        assert!((r - 0.352).abs() < 1e-3);
        assert!((pt.r - r).abs() < 1e-10, "{} {r}", pt.r);
        let (xi, dens, _) = density_circle(&p, &pt, &mut Cursor::new()).unwrap();
        assert!(xi.abs() < 1e-12 || (xi - TAU).abs() < 1e-12);
        assert!((dens - (1.0 + r) / (1.0 - r)).abs() < 1e-9);
        let at_oracle = RadialPoint {
            angle: 0.0,
            r: 0.352,
            r_lo: 0.0,
            r_hi: 0.0,
        };
        let (_, d, _) = density_circle(&p, &at_oracle, &mut Cursor::new()).unwrap();
        assert!((d - 0.876096 / 0.419904).abs() < 1e-12 && (d - 2.0863).abs() < 2e-4, "{d}");
        // opposite direction reaches the unit circle without crossing
        assert!(radial_boundary(&p, PI, None, &mut Cursor::new()).is_err());
    }

    #[test]
    fn normalization_and_first_moment() {
        let p = half_unit(0.0);
        let mass = integrate_density(&p, 0.0, |_| c(1.0, 0.0)).unwrap();
        assert!((mass - 1.0).norm() < 1e-6, "{mass}");
        let m1 = integrate_density(&p, 0.0, |xi| Complex64::from_polar(1.0, xi)).unwrap();
        assert!((m1 - (-0.5f64).exp()).norm() < 1e-5, "{m1}");
        assert!((m1 - p.first_moment().unwrap()).norm() < 1e-5);
    }

    #[test]
    fn rotation_reindexes_the_curve() {
        let alpha = 0.7;
        let grid = angle_grid(181);
        let (b0, c0) = density_curve(&half_unit(0.0), &grid).unwrap();
        let (b1, c1) = density_curve(&half_unit(-alpha), &grid).unwrap();
        assert_eq!(c0.len(), c1.len());
        for (a, b) in b0.points.iter().zip(&b1.points) {
            assert!((a.r - b.r).abs() < 1e-9 && a.angle == b.angle);
        }
        for i in 0..c0.len() {
            let dx = (c1.x[i] - c0.x[i] - alpha + PI).rem_euclid(TAU) - PI;
            assert!(dx.abs() < 1e-9 && (c1.p[i] - c0.p[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn row_rotation_by_point_mass() {
        let alpha = 0.4;
        let row = two_point_row(6, 1.0);
        let rotated = row
            .with_appended(Measure::point_mass(SupportDomain::Circle, alpha).unwrap())
            .unwrap();
        let (s0, s1) = (SigmaRow::new(&row).unwrap(), SigmaRow::new(&rotated).unwrap());
        for a in [5.2, 5.5, 5.8] {
            let p0 = radial_boundary(&s0, a, None, &mut Cursor::new()).unwrap();
            let p1 = radial_boundary(&s1, a, None, &mut Cursor::new()).unwrap();
            assert!((p0.r - p1.r).abs() < 1e-9);
            let x0 = density_circle(&s0, &p0, &mut Cursor::new()).unwrap().0;
            let x1 = density_circle(&s1, &p1, &mut Cursor::new()).unwrap().0;
            assert!(((x1 - x0 - alpha + PI).rem_euclid(TAU) - PI).abs() < 1e-9);
        }
    }

    #[test]
    fn curve_is_unwrapped_and_positive() {
        let (bc, curve) = density_curve(&half_unit(0.0), &angle_grid(DEFAULT_ANGLES)).unwrap();
        assert!(curve.excluded > 0);
        assert!(curve.p.iter().all(|&p| p > 0.0));
        let (lo, hi) = curve.range().unwrap();
        assert!(lo < 0.0 && hi > 0.0 && hi - lo < TAU);
        for pt in &bc.points {
            let (phi, _) = half_unit(0.0).phi_jet(pt.w(), &mut Cursor::new()).unwrap();
            assert!((phi.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn radial_limit_matches_poisson_kernel() {
        let p = half_unit(0.0);
        let (bc, curve) = density_curve(&p, &angle_grid(DEFAULT_ANGLES)).unwrap();
        let m = bc.points.len();
        for k in 0..11 {
            let j = m / 24 + k * (m - m / 12) / 10;
            let pt = bc.points[j];
            let est = radial_limit_check(&p, &pt, &Ladder::default()).unwrap();
            let (_, dens, _) = density_circle(&p, &pt, &mut Cursor::new()).unwrap();
            assert!((est.density - dens).abs() < 1e-6, "{} {} {}", pt.angle, est.density, dens);
            assert!(curve.p.contains(&dens));
        }
    }

    #[test]
    fn row_density_is_normalized() {
        let sr = SigmaRow::new(&two_point_row(16, 1.0)).unwrap();
        let mass = integrate_density(&sr, 5.5, |_| c(1.0, 0.0)).unwrap();
        assert!((mass - 1.0).norm() < 1e-6, "{mass}");
        let m1 = integrate_density(&sr, 5.5, |xi| Complex64::from_polar(1.0, xi)).unwrap();
        assert!((m1 - sr.first_moment().unwrap()).norm() < 1e-5, "{m1}");
    }
}
