//! Free additive convolution: the boundary `t = f(s)` of the region where
//! `Im H > 0`, and the density along `x = H(s + i f(s))`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inversion::Cursor;
use crate::numeric::{self, CubicSpline};
use crate::quadrature;
use crate::rows::AdditiveProvider;

/// Below this height the boundary is taken to have reached the real axis.
pub const T_MIN: f64 = 1e-9;
const ROOT_TOL: f64 = 1e-12;
const DESCENT: f64 = 0.7;
const MAX_HALVINGS: usize = 60;
const ON_CURVE_TOL: f64 = 1e-9;

/// One accepted root of `t ↦ Im H(s + it)` with its final bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub s: f64,
    pub f: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub points: Vec<BoundaryPoint>,
}

impl BoundaryCurve {
    pub fn s(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.s).collect()
    }

    pub fn f(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f).collect()
    }
}

/// Sampled density `{(x_j, p_j)}` with strictly increasing abscissae.
/// `param` and `boundary` hold the curve parameter and boundary value each
/// sample came from (`s, f` on the line, `r, h` on the half-line, `ζ, R` on
/// the circle); `excluded` counts grid points without a crossing.
/// `zero_beyond` marks ends of the curve that sit on a support edge, past
/// which the density vanishes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub param: Vec<f64>,
    pub boundary: Vec<f64>,
    pub excluded: usize,
    #[serde(default)]
    pub zero_beyond: (bool, bool),
}

impl DensityCurve {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        Some((*self.x.first()?, *self.x.last()?))
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        matches!(self.range(), Some((lo, hi))
            if (lo <= a || self.zero_beyond.0) && (hi >= b || self.zero_beyond.1) && lo < b && hi > a)
    }

    /// Spline of the density, extended by zero past flagged support edges.
    pub fn evaluator(&self) -> Result<impl Fn(f64) -> f64> {
        let spline = self.interpolant()?;
        let (lo, hi) = self.range().unwrap_or_default();
        let zero = self.zero_beyond;
        Ok(move |x: f64| {
            if (zero.0 && x < lo) || (zero.1 && x > hi) {
                0.0
            } else {
                spline.eval(x)
            }
        })
    }

    /// Checks strict monotonicity of `x`; returns the first offending index.
    pub fn check_monotone(&self) -> Result<()> {
        match self.x.windows(2).position(|w| !(w[1] > w[0])) {
            Some(i) => Err(Error::NonMonotoneAbscissae(i + 1)),
            None => Ok(()),
        }
    }

    pub fn interpolant(&self) -> Result<CubicSpline> {
        if self.len() < 2 {
            return Err(Error::WindowNotCovered(f64::NAN, f64::NAN));
        }
        self.check_monotone()?;
        Ok(CubicSpline::new(&self.x, &self.p))
    }

    /// Builds a curve from `(x, p, param, boundary)` samples given in
    /// parameter order; a decreasing run is reversed, and anything else that
    /// is not strictly monotone is rejected.
    pub(crate) fn from_samples(mut samples: Vec<(f64, f64, f64, f64)>, excluded: usize) -> Result<Self> {
        if samples.len() > 1 && samples[0].0 > samples[samples.len() - 1].0 {
            samples.reverse();
        }
        let mut c = DensityCurve {
            excluded,
            ..Default::default()
        };
        for (x, p, param, boundary) in samples {
            c.x.push(x);
            c.p.push(p);
            c.param.push(param);
            c.boundary.push(boundary);
        }
        c.check_monotone()?;
        Ok(c)
    }
}

/// `Σ_i φ_{μ_i}(z)` for a provider (for a row, the sum over its measures).
pub fn phi_sum<P: AdditiveProvider + ?Sized>(p: &P, z: Complex64, cursor: &mut Cursor) -> Result<Complex64> {
    Ok(p.h_jet(z, cursor)?.0 - z)
}

/// Root `f(s) > 0` of `t ↦ Im H(s + it)`, starting the bracket from `seed`
/// (a nearby boundary value) when one is known.
pub fn boundary_f<P: AdditiveProvider + ?Sized>(
    p: &P,
    s: f64,
    seed: Option<f64>,
    cursor: &mut Cursor,
) -> Result<BoundaryPoint> {
    let mut im_h = |t: f64| p.h_jet(Complex64::new(s, t), cursor).map(|(h, _)| h.im);

    let mut t_hi = match seed {
        Some(f) if f > T_MIN => 1.25 * f,
        _ => p.anchor_height(s),
    };
    let mut doublings = 0;
    loop {
        match im_h(t_hi) {
            Ok(v) if v > 0.0 => break,
            Ok(_) | Err(Error::BranchLost(_)) => {}
            Err(e) => return Err(e),
        }
        t_hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::NonConvergent(format!("Im H never positive above s = {s}")));
        }
    }

    let mut good = t_hi;
    let mut t = match seed {
        Some(f) if f > T_MIN && 0.97 * f < t_hi => 0.97 * f,
        _ => DESCENT * t_hi,
    };
    let mut halvings = 0;
    let t_lo = loop {
        if t < T_MIN {
            return Err(Error::NoCrossing(s));
        }
        match im_h(t) {
            Ok(v) if v < 0.0 => break t,
            Ok(_) => {
                good = t;
                t *= DESCENT;
            }
            Err(Error::BranchLost(z)) => {
                halvings += 1;
                if halvings > MAX_HALVINGS || (good - t) <= ROOT_TOL * good {
                    return Err(Error::BranchLost(z));
                }
                t = 0.5 * (t + good);
            }
            Err(e) => return Err(e),
        }
    };
    let t_hi = good;
    let f = numeric::bisect(t_lo, t_hi, ROOT_TOL, &mut im_h)?;

    let delta = 1e-6 * f;
    let slope = (im_h(f + delta)? - im_h(f - delta)?) / (2.0 * delta);
    if !(slope > 0.0) {
        return Err(Error::NonConvergent(format!(
            "Im H not increasing through the crossing at s = {s}"
        )));
    }
    Ok(BoundaryPoint { s, f, t_lo, t_hi })
}

/// `(x, p, dx/ds)` at an accepted boundary point.
pub fn density_point<P: AdditiveProvider + ?Sized>(
    p: &P,
    b: &BoundaryPoint,
    cursor: &mut Cursor,
) -> Result<(f64, f64, f64)> {
    let (h, hp) = p.h_jet(Complex64::new(b.s, b.f), cursor)?;
    if h.im.abs() > ON_CURVE_TOL * (1.0 + h.norm()) {
        return Err(Error::NonConvergent(format!("Im H = {:e} on the boundary", h.im)));
    }
    let dens = b.f / (PI * (b.s * b.s + b.f * b.f));
    Ok((h.re, dens, hp.norm_sqr() / hp.re))
}

const WARM_STRIDE: usize = 16;

/// Boundary and density on a grid of `s` values. Points without a crossing
/// (or where the continuation is lost) are excluded and counted.
pub fn density_curve<P: AdditiveProvider + ?Sized>(p: &P, s_grid: &[f64]) -> Result<(BoundaryCurve, DensityCurve)> {
    let solve = |s: f64, seed: Option<f64>| -> Result<(BoundaryPoint, f64, f64)> {
        let mut cur = Cursor::new();
        let b = boundary_f(p, s, seed, &mut cur)?;
        let (x, d, _) = density_point(p, &b, &mut cur)?;
        Ok((b, x, d))
    };
    let seeds = warm_start(s_grid, |s, seed| solve(s, seed).map(|r| r.0.f));
    let results: Vec<Result<(BoundaryPoint, f64, f64)>> = s_grid
        .par_iter()
        .enumerate()
        .map(|(i, &s)| solve(s, seeds[i]))
        .collect();
    collect_curve(results)
}

/// Sequential pass over every `WARM_STRIDE`-th point, each seeded from the
/// previous success; returns the seed to use at every grid index.
pub(crate) fn warm_start<F>(grid: &[f64], mut solve: F) -> Vec<Option<f64>>
where
    F: FnMut(f64, Option<f64>) -> Result<f64>,
{
    let mut coarse: Vec<(usize, f64)> = Vec::new();
    let mut last = None;
    for i in (0..grid.len()).step_by(WARM_STRIDE) {
        if let Ok(v) = solve(grid[i], last) {
            coarse.push((i, v));
            last = Some(v);
        } else {
            last = None;
        }
    }
    (0..grid.len())
        .map(|i| {
            coarse
                .iter()
                .min_by_key(|(j, _)| j.abs_diff(i))
                .filter(|(j, _)| j.abs_diff(i) <= WARM_STRIDE)
                .map(|&(_, v)| v)
        })
        .collect()
}

fn collect_curve(results: Vec<Result<(BoundaryPoint, f64, f64)>>) -> Result<(BoundaryCurve, DensityCurve)> {
    let mut boundary = BoundaryCurve::default();
    let mut samples = Vec::new();
    let mut excluded = 0;
    let mut first_err = None;
    for r in results {
        match r {
            Ok((b, x, d)) => {
                boundary.points.push(b);
                samples.push((b.s, x, d, b.f));
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
    let samples = samples.into_iter().map(|(s, x, d, f)| (x, d, s, f)).collect();
    let curve = DensityCurve::from_samples(samples, excluded)?;
    Ok((boundary, curve))
}

const SCAN_POINTS: usize = 33;
const SCAN_DOUBLINGS: usize = 12;
const WINDOW_TOL: f64 = 1e-10;

fn abscissa<P: AdditiveProvider + ?Sized>(p: &P, s: f64) -> Option<f64> {
    let mut cur = Cursor::new();
    let b = boundary_f(p, s, None, &mut cur).ok()?;
    density_point(p, &b, &mut cur).ok().map(|r| r.0)
}

/// Parameter interval `[lo, hi]` for a window `[a, b]`. `edges` flags the
/// ends of the window (low, high abscissa) that lie past a support edge,
/// in which case the matching parameter end is that edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpan {
    pub lo: f64,
    pub hi: f64,
    pub edges: (bool, bool),
}

/// An `s` interval whose image under `s ↦ Re H(s + i f(s))` covers `[a, b]`
/// or reaches the support edges inside it.
pub fn s_window<P: AdditiveProvider + ?Sized>(p: &P, a: f64, b: f64) -> Result<WindowSpan> {
    let center = 0.5 * (a + b) - p.mean();
    window_search(|s| abscissa(p, s), center, (0.5 * (b - a)).max(0.5), a, b)
}

/// Parameter interval whose image under an increasing `abscissa` (`None`
/// off the support) covers `[a, b]`. A coarse scan around `center` locates
/// the support, widening until it does; each end is then read off the scan
/// or found by bisection between the support edge and the nearest sample.
/// An edge short of the window ends the span there, provided the scan saw
/// no further support beyond it.
pub(crate) fn window_search<X>(abscissa: X, center: f64, half: f64, a: f64, b: f64) -> Result<WindowSpan>
where
    X: Fn(f64) -> Option<f64> + Sync,
{
    let mut half = half;
    let mut hits: Vec<(f64, f64)> = Vec::new();
    for _ in 0..SCAN_DOUBLINGS {
        let grid = numeric::linspace(center - half, center + half, SCAN_POINTS);
        hits = grid
            .par_iter()
            .filter_map(|&s| abscissa(s).map(|x| (s, x)))
            .collect();
        if !hits.is_empty() {
            break;
        }
        half *= 2.0;
    }
    let (first, last) = match (hits.first(), hits.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::WindowNotCovered(a, b)),
    };
    let uncovered = Error::WindowNotCovered(a, b);
    let (lo, lo_edge) = match hits.iter().rfind(|h| h.1 <= a) {
        Some(h) => (h.0, false),
        None => window_end(&abscissa, first, a, -1.0).ok_or(uncovered.clone())?,
    };
    let (hi, hi_edge) = match hits.iter().find(|h| h.1 >= b) {
        Some(h) => (h.0, false),
        None => window_end(&abscissa, last, b, 1.0).ok_or(uncovered.clone())?,
    };
    // support past an edge would be a second piece the span cannot reach
    let split = hits.iter().any(|h| (lo_edge && h.0 < lo) || (hi_edge && h.0 > hi));
    let reach = |s: f64| abscissa(s).unwrap_or(f64::NAN);
    if split || !(lo < hi) || (lo_edge && !(reach(lo) < b)) || (hi_edge && !(reach(hi) > a)) {
        return Err(uncovered);
    }
    Ok(WindowSpan {
        lo,
        hi,
        edges: (lo_edge, hi_edge),
    })
}

/// Walks from `start = (s, x(s))` in direction `dir` and returns a parameter
/// whose abscissa is at or beyond `target` (flag `false`), or the support
/// edge if its abscissa falls short (flag `true`).
fn window_end<X>(abscissa: &X, start: (f64, f64), target: f64, dir: f64) -> Option<(f64, bool)>
where
    X: Fn(f64) -> Option<f64>,
{
    let beyond = |x: f64| if dir < 0.0 { x <= target } else { x >= target };
    let mut step = 0.125;
    let mut inside = start.0;
    let outside = loop {
        let s = start.0 + dir * step;
        match abscissa(s) {
            Some(x) if beyond(x) => return Some((s, false)),
            Some(_) => inside = s,
            None => break s,
        }
        step *= 2.0;
        if step > 1e8 {
            return None;
        }
    };
    let edge = support_edge(inside, outside, WINDOW_TOL, |s| abscissa(s).is_some());
    if !beyond(abscissa(edge)?) {
        return Some((edge, true));
    }
    // the abscissa is monotone: bisect for the crossing of the target
    let (mut good, mut bad) = (edge, inside);
    while (good - bad).abs() > WINDOW_TOL {
        let mid = 0.5 * (good + bad);
        match abscissa(mid) {
            Some(x) if beyond(x) => good = mid,
            _ => bad = mid,
        }
    }
    Some((good, false))
}

/// Density curve whose abscissae cover `[a, b]`, on `points` uniform `s`
/// values.
pub fn density_on_window<P: AdditiveProvider + ?Sized>(
    p: &P,
    a: f64,
    b: f64,
    points: usize,
) -> Result<(BoundaryCurve, DensityCurve)> {
    let span = s_window(p, a, b)?;
    let (bc, mut curve) = density_curve(p, &numeric::linspace(span.lo, span.hi, points))?;
    curve.zero_beyond = span.edges;
    Ok((bc, curve))
}

/// Reference density for metric comparisons.
pub enum Reference<'a> {
    Curve(&'a DensityCurve),
    Density(&'a (dyn Fn(f64) -> Result<f64> + Sync)),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sup_err: f64,
    pub d1_err: f64,
    pub d2_err: f64,
}

pub const RESAMPLE_POINTS: usize = 401;

/// Sup-norm distance of densities and of their first two derivatives over
/// `[a, b]`, after cubic resampling onto a uniform 401-point grid.
pub fn superconv_metrics(curve: &DensityCurve, limit: Reference<'_>, a: f64, b: f64) -> Result<Metrics> {
    if !curve.covers(a, b) {
        return Err(Error::WindowNotCovered(a, b));
    }
    let xs = numeric::linspace(a, b, RESAMPLE_POINTS);
    let sn = curve.evaluator()?;
    let reference: Vec<f64> = match limit {
        Reference::Curve(c) => {
            if !c.covers(a, b) {
                return Err(Error::WindowNotCovered(a, b));
            }
            let sl = c.evaluator()?;
            xs.iter().map(|&x| sl(x)).collect()
        }
        Reference::Density(f) => xs.iter().map(|&x| f(x)).collect::<Result<_>>()?,
    };
    let diff: Vec<f64> = xs.iter().zip(&reference).map(|(&x, r)| sn(x) - r).collect();
    let h = (b - a) / (RESAMPLE_POINTS - 1) as f64;
    let (d1, d2) = numeric::uniform_derivatives(&diff, h);
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(Metrics {
        sup_err: sup(&diff),
        d1_err: sup(&d1),
        d2_err: sup(&d2),
    })
}

/// Edge of the parameter interval on which a crossing exists, between
/// `inside` (crossing) and `outside` (none), by bisection.
pub(crate) fn support_edge<F>(mut inside: f64, mut outside: f64, tol: f64, mut has_crossing: F) -> f64
where
    F: FnMut(f64) -> bool,
{
    while (outside - inside).abs() > tol {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if has_crossing(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

const EDGE_TOL: f64 = 1e-13;
const MOMENT_NODES: usize = 256;

/// Support interval (in `s`) of the connected piece of the density that
/// contains `s0`.
pub fn s_support<P: AdditiveProvider + ?Sized>(p: &P, s0: f64) -> Result<(f64, f64)> {
    let crosses = |s: f64| boundary_f(p, s, None, &mut Cursor::new()).is_ok();
    if !crosses(s0) {
        return Err(Error::NoCrossing(s0));
    }
    let mut step = 1.0;
    let mut left = s0 - step;
    while crosses(left) {
        step *= 2.0;
        left = s0 - step;
        if step > 1e8 {
            return Err(Error::NonConvergent("unbounded support".into()));
        }
    }
    step = 1.0;
    let mut right = s0 + step;
    while crosses(right) {
        step *= 2.0;
        right = s0 + step;
        if step > 1e8 {
            return Err(Error::NonConvergent("unbounded support".into()));
        }
    }
    Ok((
        support_edge(s0, left, EDGE_TOL, crosses),
        support_edge(s0, right, EDGE_TOL, crosses),
    ))
}

/// `∫ g(x) p(x) dx` over the piece of the density containing `s0`, in the
/// parameter `s` with a cosine substitution that absorbs square-root edges.
pub fn integrate_density<P, G>(p: &P, s0: f64, g: G) -> Result<f64>
where
    P: AdditiveProvider + ?Sized,
    G: Fn(f64) -> f64 + Sync,
{
    let (lo, hi) = s_support(p, s0)?;
    let gl = quadrature::rule(MOMENT_NODES);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let terms: Vec<f64> = gl
        .mapped(0.0, PI)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(th, w)| -> Result<f64> {
            let s = mid - half * th.cos();
            let mut cur = Cursor::new();
            let b = match boundary_f(p, s, None, &mut cur) {
                Ok(b) => b,
                Err(Error::NoCrossing(_)) => return Ok(0.0),
                Err(e) => return Err(e),
            };
            let (x, dens, jac) = density_point(p, &b, &mut cur)?;
            Ok(w * half * th.sin() * g(x) * dens * jac)
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}
