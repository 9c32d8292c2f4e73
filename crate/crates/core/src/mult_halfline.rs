//! Free multiplicative convolution on the half-line: the polar boundary
//! `θ = h(r)` where `Φ(re^{iθ})` turns real and positive, and the density at
//! `x = 1/Φ(re^{ih})`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::additive::{support_edge, warm_start, window_search, DensityCurve, WindowSpan};
use crate::error::{Error, Result};
use crate::inversion::{newton_solve, Cursor};
use crate::measures::SupportDomain;
use crate::numeric;
use crate::quadrature;
use crate::rows::SigmaProvider;
use crate::transforms::{stieltjes_density, Ladder, StieltjesEstimate};

pub const THETA_MIN: f64 = 1e-9;
const ROOT_TOL: f64 = 1e-12;
const DESCENT: f64 = 0.7;
const MAX_HALVINGS: usize = 60;
const ON_AXIS_TOL: f64 = 1e-9;
const PHI_PRIME_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub r: f64,
    pub h: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolarBoundaryCurve {
    pub points: Vec<PolarPoint>,
}

fn check_domain<P: SigmaProvider + ?Sized>(p: &P) -> Result<()> {
    if p.domain() != SupportDomain::HalfLine {
        return Err(Error::InvalidSupport("expected a half-line provider".into()));
    }
    Ok(())
}

/// `Π_i Σ_{μ_i}(z)` (for limit data, `Σ(z)` itself).
pub fn sigma_product<P: SigmaProvider + ?Sized>(p: &P, z: Complex64, cursor: &mut Cursor) -> Result<Complex64> {
    if z.norm() == 0.0 {
        return Ok(1.0 / p.first_moment()?);
    }
    Ok(p.sigma_jet(z, cursor)?.0)
}

/// `Φ(z) = z Σ(z)`.
pub fn phi_map<P: SigmaProvider + ?Sized>(p: &P, z: Complex64, cursor: &mut Cursor) -> Result<Complex64> {
    Ok(p.phi_jet(z, cursor)?.0)
}

/// Root `h(r) ∈ (0, π)` of `θ ↦ Im Φ(re^{iθ})` at which `Φ` is positive.
pub fn polar_boundary<P: SigmaProvider + ?Sized>(
    p: &P,
    r: f64,
    seed: Option<f64>,
    cursor: &mut Cursor,
) -> Result<PolarPoint> {
    check_domain(p)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::OutOfDomain(Complex64::new(r, 0.0)));
    }
    let mut phi = |th: f64| p.phi_jet(Complex64::from_polar(r, th), cursor).map(|j| j.0);

    let mut th_hi = match seed {
        Some(h) if h > THETA_MIN => (1.25 * h).min(0.5 * (h + PI)),
        _ => 0.5 * PI,
    };
    let mut moves = 0;
    loop {
        match phi(th_hi) {
            Ok(v) if v.im > 0.0 => break,
            Ok(_) | Err(Error::BranchLost(_)) => {}
            Err(e) => return Err(e),
        }
        th_hi = 0.5 * (th_hi + PI);
        moves += 1;
        if moves > 60 {
            return Err(Error::NonConvergent(format!("Im Φ never positive on |z| = {r}")));
        }
    }

    let mut good = th_hi;
    let mut th = match seed {
        Some(h) if h > THETA_MIN && 0.97 * h < th_hi => 0.97 * h,
        _ => DESCENT * th_hi,
    };
    let mut halvings = 0;
    let th_lo = loop {
        if th < THETA_MIN {
            return Err(Error::NoCrossing(r));
        }
        match phi(th) {
            Ok(v) if v.im < 0.0 => {
                if v.re <= 0.0 {
                    return Err(Error::NonConvergent(format!("Φ crosses the negative axis on |z| = {r}")));
                }
                break th;
            }
            Ok(_) => {
                good = th;
                th *= DESCENT;
            }
            Err(Error::BranchLost(z)) => {
                halvings += 1;
                if halvings > MAX_HALVINGS || (good - th) <= ROOT_TOL * good {
                    return Err(Error::BranchLost(z));
                }
                th = 0.5 * (th + good);
            }
            Err(e) => return Err(e),
        }
    };
    let th_hi = good;
    let h = numeric::bisect(th_lo, th_hi, ROOT_TOL, |t| phi(t).map(|v| v.im))?;

    let v = phi(h)?;
    if !(v.re > 0.0 && v.im.abs() <= ON_AXIS_TOL * v.norm()) {
        return Err(Error::NonConvergent(format!("Φ = {v} is not positive at the crossing")));
    }
    let delta = 1e-6 * h.min(PI - h);
    let slope = (phi(h + delta)?.arg() - phi(h - delta)?.arg()) / (2.0 * delta);
    if !(slope > 0.0) {
        return Err(Error::NonConvergent(format!("arg Φ not increasing at the crossing on |z| = {r}")));
    }
    Ok(PolarPoint {
        r,
        h,
        theta_lo: th_lo,
        theta_hi: th_hi,
    })
}

/// `(x, p, dx/d ln r)` at an accepted boundary point.
pub fn density_halfline<P: SigmaProvider + ?Sized>(
    p: &P,
    pt: &PolarPoint,
    cursor: &mut Cursor,
) -> Result<(f64, f64, f64)> {
    let z = Complex64::from_polar(pt.r, pt.h);
    let (phi, dphi) = p.phi_jet(z, cursor)?;
    if dphi.norm() <= PHI_PRIME_FLOOR {
        return Err(Error::NonConvergent(format!("Φ' vanishes at {z}")));
    }
    let x = 1.0 / phi.re;
    let denom = (1.0 - z.conj()).norm_sqr();
    let dens = pt.r * pt.h.sin() / (PI * x * denom);
    let q = z * dphi / phi;
    Ok((x, dens, -x * q.norm_sqr() / q.re))
}

/// Boundary and density over a grid of radii (points without a crossing
/// are excluded and counted).
pub fn density_curve<P: SigmaProvider + ?Sized>(p: &P, r_grid: &[f64]) -> Result<(PolarBoundaryCurve, DensityCurve)> {
    check_domain(p)?;
    let solve = |r: f64, seed: Option<f64>| -> Result<(PolarPoint, f64, f64)> {
        let mut cur = Cursor::new();
        let pt = polar_boundary(p, r, seed, &mut cur)?;
        let (x, d, _) = density_halfline(p, &pt, &mut cur)?;
        Ok((pt, x, d))
    };
    let seeds = warm_start(r_grid, |r, seed| solve(r, seed).map(|v| v.0.h));
    let results: Vec<_> = r_grid
        .par_iter()
        .enumerate()
        .map(|(i, &r)| solve(r, seeds[i]))
        .collect();
    let mut boundary = PolarBoundaryCurve::default();
    let mut samples = Vec::new();
    let mut excluded = 0;
    let mut first_err = None;
    for res in results {
        match res {
            Ok((pt, x, d)) => {
                boundary.points.push(pt);
                samples.push((x, d, pt.r, pt.h));
            }
            Err(e @ (Error::NoCrossing(_) | Error::BranchLost(_))) => {
                excluded += 1;
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if samples.is_empty() {
        return Err(first_err.unwrap_or(Error::NoCrossing(f64::NAN)));
    }
    Ok((boundary, DensityCurve::from_samples(samples, excluded)?))
}

fn abscissa<P: SigmaProvider + ?Sized>(p: &P, r: f64) -> Option<f64> {
    let mut cur = Cursor::new();
    let pt = polar_boundary(p, r, None, &mut cur).ok()?;
    density_halfline(p, &pt, &mut cur).ok().map(|v| v.0)
}

/// Radii `r_lo < r_hi` whose densities cover `[a, b]` or reach the support
/// edges inside it (`x` decreases in `r`; `edges` refers to the ends of
/// `[a, b]`).
pub fn r_window<P: SigmaProvider + ?Sized>(p: &P, a: f64, b: f64) -> Result<WindowSpan> {
    check_domain(p)?;
    if !(a > 0.0 && b > a) {
        return Err(Error::Config(format!("half-line window needs 0 < a < b (got {a}, {b})")));
    }
    let m1 = p.first_moment()?.re;
    // in v = -ln r the abscissa increases, with x ≈ m₁ e^{v} for small r
    let center = (a * b).sqrt().ln() - m1.ln();
    let half = (0.5 * (b / a).ln()).max(0.5);
    let span = window_search(|v| abscissa(p, (-v).exp()), center, half, a, b)?;
    Ok(WindowSpan {
        lo: (-span.hi).exp(),
        hi: (-span.lo).exp(),
        edges: span.edges,
    })
}

/// Density on `points` log-uniform radii covering `[a, b]`.
pub fn density_on_window<P: SigmaProvider + ?Sized>(
    p: &P,
    a: f64,
    b: f64,
    points: usize,
) -> Result<(PolarBoundaryCurve, DensityCurve)> {
    let span = r_window(p, a, b)?;
    let grid: Vec<f64> = numeric::linspace(span.lo.ln(), span.hi.ln(), points)
        .into_iter()
        .map(f64::exp)
        .collect();
    let (bc, mut curve) = density_curve(p, &grid)?;
    curve.zero_beyond = span.edges;
    Ok((bc, curve))
}

const EDGE_TOL: f64 = 1e-13;
const MOMENT_NODES: usize = 256;

/// Interval of `ln r` around `ln r0` on which a crossing exists.
pub fn log_r_support<P: SigmaProvider + ?Sized>(p: &P, r0: f64) -> Result<(f64, f64)> {
    let crosses = |u: f64| polar_boundary(p, u.exp(), None, &mut Cursor::new()).is_ok();
    let u0 = r0.ln();
    if !crosses(u0) {
        return Err(Error::NoCrossing(r0));
    }
    let mut ends = [0.0; 2];
    for (k, dir) in [-1.0, 1.0].into_iter().enumerate() {
        let mut step = 0.25;
        while crosses(u0 + dir * step) {
            step *= 2.0;
            if step > 700.0 {
                return Err(Error::NonConvergent("unbounded support".into()));
            }
        }
        ends[k] = support_edge(u0, u0 + dir * step, EDGE_TOL, crosses);
    }
    Ok((ends[0], ends[1]))
}

/// `∫ g(x) p(x) dx` over the piece of the density whose radii contain `r0`.
pub fn integrate_density<P, G>(p: &P, r0: f64, g: G) -> Result<f64>
where
    P: SigmaProvider + ?Sized,
    G: Fn(f64) -> f64 + Sync,
{
    let (lo, hi) = log_r_support(p, r0)?;
    let gl = quadrature::rule(MOMENT_NODES);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let nodes: Vec<(f64, f64)> = gl.mapped(0.0, PI).collect();
    let terms: Vec<f64> = nodes
        .par_iter()
        .map(|&(th, w)| -> Result<f64> {
            let u = mid - half * th.cos();
            let mut cur = Cursor::new();
            let pt = match polar_boundary(p, u.exp(), None, &mut cur) {
                Ok(pt) => pt,
                Err(Error::NoCrossing(_)) => return Ok(0.0),
                Err(e) => return Err(e),
            };
            let (x, dens, jac) = density_halfline(p, &pt, &mut cur)?;
            Ok(w * half * th.sin() * g(x) * dens * jac.abs())
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// Density at the abscissa of `pt` by Stieltjes inversion of
/// `G(z) = 1/(z(1 - η(1/z)))`, with `η = Φ^{-1}` solved by Newton from the
/// boundary point.
pub fn stieltjes_check<P: SigmaProvider + ?Sized>(p: &P, pt: &PolarPoint, ladder: &Ladder) -> Result<StieltjesEstimate> {
    let w0 = Complex64::from_polar(pt.r, pt.h);
    let forward = |v: Complex64| p.phi_jet(v, &mut Cursor::new());
    let x = 1.0 / forward(w0)?.0.re;
    let inv_g = |z: Complex64| -> Result<Complex64> {
        let target = (1.0 / z).conj();
        let (v, _) = newton_solve(&forward, target, w0, &|v: Complex64| v.im > 0.0)
            .ok_or(Error::BranchLost(target))?;
        Ok(z * (1.0 - v.conj()))
    };
    stieltjes_density(inv_g, x, ladder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::ExpSigmaDataHalfline;
    use crate::measures::{ArrayRow, Measure};
    use crate::rows::SigmaRow;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn id_quarter() -> ExpSigmaDataHalfline {
        ExpSigmaDataHalfline::new(1.0, vec![(1.0, 0.25)], 0.0).unwrap()
    }

    fn two_point_row(scale: f64) -> ArrayRow {
        let ms = [0.3, 0.25, 0.2, 0.15]
            .iter()
            .enumerate()
            .map(|(i, &a): (usize, &f64)| {
                let c = if i == 0 { scale } else { 1.0 };
                Measure::atomic(SupportDomain::HalfLine, vec![(c * (-a).exp(), 0.5), (c * a.exp(), 0.5)]).unwrap()
            })
            .collect();
        ArrayRow::new(0, ms).unwrap()
    }

    /// `θ = w cot(θ/2)` by bisection: the polar boundary of `σ = wδ₁` at `r = 1`.
    fn unit_circle_oracle(w: f64) -> f64 {
        let r: Result<f64> = numeric::bisect(1e-6, PI - 1e-6, 1e-15, |t| Ok(t - w / (0.5 * t).tan()));
        r.unwrap()
    }

    #[test]
    fn phi_examples() {
        let d = Measure::point_mass(SupportDomain::HalfLine, 2.5).unwrap();
        let row = SigmaRow::new(&ArrayRow::new(0, vec![d]).unwrap()).unwrap();
        let z = c(-0.3, 0.4);
        assert!((phi_map(&row, z, &mut Cursor::new()).unwrap() - z / 2.5).norm() < 1e-12);
        assert!((phi_map(&id_quarter(), c(-1.0, 0.0), &mut Cursor::new()).unwrap() + 1.0).norm() < 1e-15);
        let m = id_quarter().first_moment().unwrap();
        assert!((m.re - 1.284025).abs() < 1e-6);
    }

    #[test]
    fn point_mass_has_no_crossing() {
        let d = Measure::point_mass(SupportDomain::HalfLine, 2.0).unwrap();
        let row = SigmaRow::new(&ArrayRow::new(0, vec![d]).unwrap()).unwrap();
        for r in [0.3, 1.0, 4.0] {
            assert!(matches!(polar_boundary(&row, r, None, &mut Cursor::new()), Err(Error::NoCrossing(_))));
        }
    }

    #[test]
    fn id_boundary_on_unit_circle() {
        let pt = polar_boundary(&id_quarter(), 1.0, None, &mut Cursor::new()).unwrap();
        assert!((pt.h - unit_circle_oracle(0.25)).abs() < 1e-10, "{}", pt.h);
        // brute-force 1e-3 scan for the sign change of Im Φ, refined linearly
        let p = id_quarter();
        let im = |t: f64| phi_map(&p, Complex64::from_polar(1.0, t), &mut Cursor::new()).unwrap().im;
        // scan down from π: near θ = 0 the sign of Im Φ oscillates
        let mut t = PI - 1e-3;
        while im(t) > 0.0 {
            t -= 1e-3;
        }
        let (a, b) = (im(t), im(t + 1e-3));
        let scan = t - 1e-3 * a / (b - a);
        assert!((pt.h - scan).abs() < 1e-6);
    }

    #[test]
    fn appended_unit_mass_and_scaling() {
        let row = two_point_row(1.0);
        let base = SigmaRow::new(&row).unwrap();
        let plus = SigmaRow::new(&row.with_appended(Measure::point_mass(SupportDomain::HalfLine, 1.0).unwrap()).unwrap()).unwrap();
        let scaled = SigmaRow::new(&two_point_row(2.0)).unwrap();
        let grid: Vec<f64> = numeric::linspace(-0.3, 0.3, 13).into_iter().map(f64::exp).collect();
        let (b0, c0) = density_curve(&base, &grid).unwrap();
        let (_, c1) = density_curve(&plus, &grid).unwrap();
        let (b2, c2) = density_curve(&scaled, &grid).unwrap();
        assert_eq!(c0.len(), c1.len());
        for i in 0..c0.len() {
            assert!((c0.x[i] - c1.x[i]).abs() < 1e-10 && (c0.p[i] - c1.p[i]).abs() < 1e-10);
            assert!((2.0 * c0.x[i] - c2.x[i]).abs() < 1e-8 && (0.5 * c0.p[i] - c2.p[i]).abs() < 1e-8);
        }
        for (a, b) in b0.points.iter().zip(&b2.points) {
            assert!((a.h - b.h).abs() < 1e-11);
        }
    }

    #[test]
    fn id_moments() {
        let p = id_quarter();
        let (lo, hi) = log_r_support(&p, 1.0).unwrap();
        assert!((lo.exp() - 0.5).abs() < 1e-3 && (hi.exp() - 2.0).abs() < 1e-3, "{} {}", lo.exp(), hi.exp());
        let mass = integrate_density(&p, 1.0, |_| 1.0).unwrap();
        let mean = integrate_density(&p, 1.0, |x| x).unwrap();
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
        assert!((mean - 0.25f64.exp()).abs() < 1e-5, "{mean}");
    }

    #[test]
    fn stieltjes_agrees_with_boundary_formula() {
        let p = id_quarter();
        let (_, curve) = density_on_window(&p, 0.5, 3.0, 201).unwrap();
        for k in 0..11 {
            let j = 10 + 18 * k;
            let pt = PolarPoint {
                r: curve.param[j],
                h: curve.boundary[j],
                theta_lo: 0.0,
                theta_hi: 0.0,
            };
            let est = stieltjes_check(&p, &pt, &Ladder::default()).unwrap();
            assert!((est.density - curve.p[j]).abs() < 1e-6, "x={} {} {}", curve.x[j], est.density, curve.p[j]);
        }
    }

    #[test]
    fn row_curve_is_positive_and_monotone() {
        let row = SigmaRow::new(&two_point_row(1.0)).unwrap();
        let (bc, curve) = density_on_window(&row, 0.7, 1.4, 101).unwrap();
        assert!(curve.covers(0.7, 1.4));
        assert!(curve.p.iter().all(|&p| p > 0.0));
        let mut cur = Cursor::new();
        for pt in &bc.points {
            let (_, d) = row.phi_jet(Complex64::from_polar(pt.r, pt.h), &mut cur).unwrap();
            assert!(d.norm() > PHI_PRIME_FLOOR);
        }
    }
}
