//! Branch-tracked inversion of `F` (line) and `η` (half-line, circle).
//!
//! Inverses are computed by damped Newton iteration continued along a path
//! from an anchor where the principal branch is unambiguous: high up in a
//! Stolz angle for `F`, on the negative half-axis for half-line `η`, and near
//! the origin for circle `η`. Each continuation step uses an Euler predictor
//! and is accepted only when the Newton correction is small next to the
//! step, which keeps the iteration from jumping to another preimage.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{Measure, SupportDomain};
use crate::quadrature;
use crate::transforms::{self, TransformKind};

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_HALVINGS: usize = 6;
const NEWTON_TOL: f64 = 1e-13;
const ACCEPT_TOL: f64 = 1e-10;
const MIN_STEP: f64 = 1e-6;
const PREDICTOR_RATIO: f64 = 0.25;

/// `Γ_{α,β} = {x + iy : y ≥ max(β, α|x|)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StolzAngle {
    pub alpha: f64,
    pub beta: f64,
}

impl StolzAngle {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Config(format!("Stolz angle needs α, β > 0 (got {alpha}, {beta})")));
        }
        Ok(Self { alpha, beta })
    }

    /// Lowest point of the angle above `x`.
    pub fn floor_at(&self, x: f64) -> f64 {
        self.beta.max(self.alpha * x.abs())
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.im >= self.floor_at(z.re)
    }
}

/// `Ω_{ρ,θ} = {r e^{it} : ρ < r < 1/ρ, t ∈ (θ, 2π - θ)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularDomain {
    pub rho: f64,
    pub theta: f64,
}

impl AngularDomain {
    pub fn new(rho: f64, theta: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0 && theta > 0.0 && theta < PI) {
            return Err(Error::Config("angular domain needs ρ ∈ (0,1), θ ∈ (0,π)".into()));
        }
        Ok(Self { rho, theta })
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let r = z.norm();
        let t = z.arg().rem_euclid(TAU);
        r > self.rho && r < 1.0 / self.rho && t > self.theta && t < TAU - self.theta
    }
}

/// Disk of radius `ρ_μ` on which the circle `Σ` is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskDomain {
    pub rho_mu: f64,
}

impl DiskDomain {
    pub fn contains(&self, z: Complex64) -> bool {
        z.norm() < self.rho_mu
    }
}

/// Waypoints from an anchor to a query point and the inverse values solved
/// at each of them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContinuationPath {
    pub waypoints: Vec<Complex64>,
    pub solved: Vec<Complex64>,
}

impl ContinuationPath {
    pub fn through(waypoints: Vec<Complex64>) -> Self {
        Self {
            waypoints,
            solved: Vec::new(),
        }
    }

    pub fn query(&self) -> Option<Complex64> {
        self.waypoints.last().copied()
    }

    pub fn result(&self) -> Option<Complex64> {
        if self.solved.len() == self.waypoints.len() {
            self.solved.last().copied()
        } else {
            None
        }
    }
}

/// A solved point `v = inverse(w)` kept for warm starts; `fp` is the
/// derivative of the forward map at `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tracked {
    pub w: Complex64,
    pub v: Complex64,
    pub fp: Complex64,
}

impl Tracked {
    pub fn inverse_derivative(&self) -> Complex64 {
        1.0 / self.fp
    }
}

/// Per-measure warm-start slots owned by one caller.
#[derive(Debug, Clone, Default)]
pub struct Cursor {
    slots: Vec<Option<Tracked>>,
}

impl Cursor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn slot(&mut self, i: usize) -> &mut Option<Tracked> {
        if i >= self.slots.len() {
            self.slots.resize(i + 1, None);
        }
        &mut self.slots[i]
    }

    pub fn clear(&mut self) {
        self.slots.clear();
    }
}

/// Rectangle `[s_lo, s_hi] × [t_lo, t_hi]` used as an integration contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourRect {
    pub s_lo: f64,
    pub s_hi: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl ContourRect {
    pub fn new(s_lo: f64, s_hi: f64, t_lo: f64, t_hi: f64) -> Result<Self> {
        if !(s_hi > s_lo && t_hi > t_lo) {
            return Err(Error::Config("degenerate contour rectangle".into()));
        }
        Ok(Self {
            s_lo,
            s_hi,
            t_lo,
            t_hi,
        })
    }

    pub fn centered(center: Complex64, half_s: f64, half_t: f64) -> Result<Self> {
        Self::new(
            center.re - half_s,
            center.re + half_s,
            center.im - half_t,
            center.im + half_t,
        )
    }

    /// Counterclockwise edges as (start, end).
    fn edges(&self) -> [(Complex64, Complex64); 4] {
        let c = Complex64::new;
        [
            (c(self.s_lo, self.t_lo), c(self.s_hi, self.t_lo)),
            (c(self.s_hi, self.t_lo), c(self.s_hi, self.t_hi)),
            (c(self.s_hi, self.t_hi), c(self.s_lo, self.t_hi)),
            (c(self.s_lo, self.t_hi), c(self.s_lo, self.t_lo)),
        ]
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re > self.s_lo && z.re < self.s_hi && z.im > self.t_lo && z.im < self.t_hi
    }
}

// ---------------------------------------------------------------------------
// generic Newton machinery

/// Damped Newton for `forward(v) = target`. Returns the root and the forward
/// derivative there, or `None` when the iteration fails.
pub(crate) fn newton_solve<M, A>(
    forward: &M,
    target: Complex64,
    guess: Complex64,
    admissible: &A,
) -> Option<(Complex64, Complex64)>
where
    M: Fn(Complex64) -> Result<(Complex64, Complex64)>,
    A: Fn(Complex64) -> bool,
{
    if !admissible(guess) {
        return None;
    }
    let scale = 1.0 + target.norm();
    let mut v = guess;
    let (mut f, mut fp) = forward(v).ok()?;
    let mut res = (f - target).norm();
    for _ in 0..NEWTON_MAX_ITER {
        if res <= NEWTON_TOL * scale {
            return Some((v, fp));
        }
        if fp.norm() == 0.0 || !fp.is_finite() {
            return None;
        }
        let step = (f - target) / fp;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=NEWTON_HALVINGS {
            let cand = v - step * lambda;
            if admissible(cand) {
                if let Ok((fc, fpc)) = forward(cand) {
                    let rc = (fc - target).norm();
                    if rc.is_finite() && rc < res {
                        v = cand;
                        f = fc;
                        fp = fpc;
                        res = rc;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        if (step * lambda).norm() <= 1e-16 * (1.0 + v.norm()) {
            break;
        }
    }
    (res <= ACCEPT_TOL * scale).then_some((v, fp))
}

/// Continue a solved pair `(w0, v0)` along the segment to `w1`.
/// On failure returns the last target reached.
fn march<M, A>(
    forward: &M,
    admissible: &A,
    w0: Complex64,
    v0: Complex64,
    fp0: Complex64,
    w1: Complex64,
) -> std::result::Result<(Complex64, Complex64), Complex64>
where
    M: Fn(Complex64) -> Result<(Complex64, Complex64)>,
    A: Fn(Complex64) -> bool,
{
    let total = w1 - w0;
    let length = total.norm();
    if length == 0.0 {
        return Ok((v0, fp0));
    }
    let dir = total / length;
    let (mut pos, mut w, mut v, mut fp) = (0.0f64, w0, v0, fp0);
    let mut step = length;
    while pos < length {
        let h = step.min(length - pos);
        let w_next = if pos + h >= length { w1 } else { w0 + dir * (pos + h) };
        let dw = w_next - w;
        let pred = v + dw / fp;
        let ok = newton_solve(forward, w_next, pred, admissible).filter(|(vn, _)| {
            (vn - pred).norm() <= PREDICTOR_RATIO * (dw / fp).norm() + 1e-12 * (1.0 + vn.norm())
        });
        match ok {
            Some((vn, fpn)) => {
                pos += h;
                w = w_next;
                v = vn;
                fp = fpn;
                step = (2.0 * h).min(length);
            }
            None => {
                step = 0.5 * h;
                if step < MIN_STEP * (1.0 + w.norm()) {
                    return Err(w);
                }
            }
        }
    }
    Ok((v, fp))
}

fn continue_along<M, A>(
    forward: &M,
    admissible: &A,
    start: (Complex64, Complex64, Complex64),
    waypoints: &[Complex64],
    solved: &mut Vec<Complex64>,
) -> Result<(Complex64, Complex64)>
where
    M: Fn(Complex64) -> Result<(Complex64, Complex64)>,
    A: Fn(Complex64) -> bool,
{
    let (mut w, mut v, mut fp) = start;
    for &target in waypoints {
        let (vn, fpn) =
            march(forward, admissible, w, v, fp, target).map_err(|_| Error::BranchLost(target))?;
        solved.push(vn);
        w = target;
        v = vn;
        fp = fpn;
    }
    Ok((v, fp))
}

/// Solve `h(ζ) = z` by damped Newton from `guess`; returns `ζ`.
pub fn newton_invert<H>(h: H, z: Complex64, guess: Complex64) -> Result<Complex64>
where
    H: Fn(Complex64) -> Result<(Complex64, Complex64)>,
{
    newton_solve(&h, z, guess, &|_| true)
        .map(|(v, _)| v)
        .ok_or(Error::BranchLost(z))
}

// ---------------------------------------------------------------------------
// line: H = F^{-1}

fn f_forward(m: &Measure) -> impl Fn(Complex64) -> Result<(Complex64, Complex64)> + '_ {
    move |v| {
        let j = transforms::jet(m, TransformKind::F, v)?;
        Ok((j.value, j.d1))
    }
}

fn upper(v: Complex64) -> bool {
    v.im > 0.0 && v.is_finite()
}

const ANCHOR_FLOOR: f64 = 1.0;
const ANCHOR_PROBES: usize = 64;
const ANCHOR_DOUBLINGS: usize = 60;

/// Smallest `β = 2^k` (from a floor of 1) such that on a 64-point probe of
/// `∂Γ_{α,β}` the shift `|F(z) - z|` is at most `Im z / 2` and Newton for
/// `F(H) = z` started at `z` converges inside `ℍ`.
pub fn stolz_anchor(m: &Measure, alpha: f64) -> Result<StolzAngle> {
    if m.domain() != SupportDomain::Line {
        return Err(Error::InvalidSupport("Stolz anchors are defined on the line".into()));
    }
    let forward = f_forward(m);
    let mut beta = ANCHOR_FLOOR;
    for _ in 0..=ANCHOR_DOUBLINGS {
        let angle = StolzAngle::new(alpha, beta)?;
        let reach = 4.0 * beta / alpha;
        let ok = (0..ANCHOR_PROBES).all(|k| {
            let x = -reach + 2.0 * reach * k as f64 / (ANCHOR_PROBES - 1) as f64;
            let z = Complex64::new(x, angle.floor_at(x));
            match forward(z) {
                Ok((f, _)) if (f - z).norm() <= 0.5 * z.im => {
                    newton_solve(&forward, z, z, &upper).is_some()
                }
                _ => false,
            }
        });
        if ok {
            return Ok(angle);
        }
        beta *= 2.0;
    }
    Err(Error::AnchorNotFound(ANCHOR_DOUBLINGS))
}

/// Inverse of `F_μ` for one measure on the line.
#[derive(Debug, Clone)]
pub struct LineInverter {
    measure: Measure,
    angle: StolzAngle,
}

impl LineInverter {
    pub fn new(measure: Measure, alpha: f64) -> Result<Self> {
        let angle = stolz_anchor(&measure, alpha)?;
        Ok(Self { measure, angle })
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn angle(&self) -> StolzAngle {
        self.angle
    }

    /// Anchor above `z`: the lowest point of the Stolz angle over `Re z`,
    /// or `z` itself when it already lies higher.
    pub fn anchor_for(&self, z: Complex64) -> Complex64 {
        Complex64::new(z.re, z.im.max(self.angle.floor_at(z.re)))
    }

    /// Vertical descent path from the anchor to `z`.
    pub fn vertical_path(&self, z: Complex64) -> ContinuationPath {
        ContinuationPath::through(vec![self.anchor_for(z), z])
    }

    /// Solves along `path`, whose first waypoint must lie in the Stolz angle.
    /// Returns `(H, H')` at the last waypoint.
    pub fn invert_along(&self, path: &mut ContinuationPath) -> Result<(Complex64, Complex64)> {
        let first = *path
            .waypoints
            .first()
            .ok_or_else(|| Error::Config("empty continuation path".into()))?;
        if !self.angle.contains(first) {
            return Err(Error::Config(format!("path anchor {first} outside the Stolz angle")));
        }
        let forward = f_forward(&self.measure);
        let (v0, fp0) =
            newton_solve(&forward, first, first, &upper).ok_or(Error::BranchLost(first))?;
        path.solved.clear();
        path.solved.push(v0);
        let rest = path.waypoints[1..].to_vec();
        let (v, fp) = continue_along(&forward, &upper, (first, v0, fp0), &rest, &mut path.solved)?;
        Ok((v, 1.0 / fp))
    }

    /// `(H(z), H'(z))` along the vertical path.
    pub fn invert(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        if !(z.im > 0.0) {
            return Err(Error::OutOfDomain(z));
        }
        self.invert_along(&mut self.vertical_path(z))
    }

    /// `(H(z), H'(z))`, continued from `cache` when it sits on the same
    /// vertical line, else from the anchor. Updates `cache` on success.
    pub fn invert_tracked(&self, z: Complex64, cache: &mut Option<Tracked>) -> Result<(Complex64, Complex64)> {
        if !(z.im > 0.0) {
            return Err(Error::OutOfDomain(z));
        }
        let (v, fp) = match *cache {
            Some(t) if t.w.re == z.re => {
                let forward = f_forward(&self.measure);
                march(&forward, &upper, t.w, t.v, t.fp, z).map_err(|_| Error::BranchLost(z))?
            }
            _ => {
                let (v, d) = self.invert(z)?;
                (v, 1.0 / d)
            }
        };
        *cache = Some(Tracked { w: z, v, fp });
        Ok((v, 1.0 / fp))
    }

    /// Voiculescu transform `φ(z) = H(z) - z`.
    pub fn phi(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.invert(z)?.0 - z)
    }
}

/// `H_μ(z)` for a single measure with `α = 1`.
pub fn invert_f(m: &Measure, z: Complex64, path: Option<&mut ContinuationPath>) -> Result<Complex64> {
    let inv = LineInverter::new(m.clone(), 1.0)?;
    match path {
        Some(p) => Ok(inv.invert_along(p)?.0),
        None => Ok(inv.invert(z)?.0),
    }
}

pub fn phi(m: &Measure, z: Complex64, path: Option<&mut ContinuationPath>) -> Result<Complex64> {
    Ok(invert_f(m, z, path)? - z)
}

// ---------------------------------------------------------------------------
// half-line and circle: η^{-1}

fn eta_forward(m: &Measure) -> impl Fn(Complex64) -> Result<(Complex64, Complex64)> + '_ {
    move |v| {
        let j = transforms::jet(m, TransformKind::Eta, v)?;
        Ok((j.value, j.d1))
    }
}

/// Inverse of `η_μ` for a measure on the half-line, continued from the
/// negative half-axis along a circular arc.
#[derive(Debug, Clone)]
pub struct HalflineInverter {
    measure: Measure,
    mean: f64,
}

impl HalflineInverter {
    pub fn new(measure: Measure) -> Result<Self> {
        if measure.domain() != SupportDomain::HalfLine {
            return Err(Error::InvalidSupport("half-line inverter needs a half-line measure".into()));
        }
        // rejects δ_0
        transforms::eval(&measure, TransformKind::Eta, Complex64::new(-1.0, 0.0))?;
        let mean = measure.mean().re;
        Ok(Self { measure, mean })
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    /// Real solution of `η(v) = target` for `target < 0`.
    fn solve_negative_axis(&self, target: f64) -> Result<(Complex64, Complex64)> {
        let forward = eta_forward(&self.measure);
        let eta_re = |v: f64| forward(Complex64::new(v, 0.0)).map(|(e, _)| e.re);
        let mut lo = -1.0;
        let mut n = 0;
        while eta_re(lo)? > target {
            lo *= 2.0;
            n += 1;
            if n > 400 || !lo.is_finite() {
                return Err(Error::BranchLost(Complex64::new(target, 0.0)));
            }
        }
        let mut hi = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if eta_re(mid)? > target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let guess = Complex64::new(0.5 * (lo + hi), 0.0);
        let real_axis = |v: Complex64| v.re < 0.0 && v.is_finite();
        match newton_solve(&forward, Complex64::new(target, 0.0), guess, &real_axis) {
            Some((v, fp)) => Ok((Complex64::new(v.re, 0.0), fp)),
            None => {
                let (_, fp) = forward(guess)?;
                Ok((guess, fp))
            }
        }
    }

    /// Arc path: `-|w|` on the negative axis, then along `|w| e^{it}` to `w`.
    pub fn arc_path(w: Complex64) -> ContinuationPath {
        let r = w.norm();
        let target = w.arg();
        let start = if target >= 0.0 { PI } else { -PI };
        let pieces = 8;
        let waypoints = (0..=pieces)
            .map(|k| {
                let t = start + (target - start) * k as f64 / pieces as f64;
                if k == pieces {
                    w
                } else if k == 0 {
                    Complex64::new(-r, 0.0)
                } else {
                    Complex64::from_polar(r, t)
                }
            })
            .collect();
        ContinuationPath::through(waypoints)
    }

    /// Solves along `path`, whose first waypoint must be a negative real.
    pub fn invert_along(&self, path: &mut ContinuationPath) -> Result<(Complex64, Complex64)> {
        let first = *path
            .waypoints
            .first()
            .ok_or_else(|| Error::Config("empty continuation path".into()))?;
        if !(first.im == 0.0 && first.re < 0.0) {
            return Err(Error::Config("half-line paths start on the negative axis".into()));
        }
        let (v0, fp0) = self.solve_negative_axis(first.re)?;
        path.solved.clear();
        path.solved.push(v0);
        let forward = eta_forward(&self.measure);
        let rest = path.waypoints[1..].to_vec();
        let (v, fp) = continue_along(&forward, &slit_plane, (first, v0, fp0), &rest, &mut path.solved)?;
        Ok((v, 1.0 / fp))
    }

    /// `(η^{-1}(w), (η^{-1})'(w))`.
    pub fn invert(&self, w: Complex64) -> Result<(Complex64, Complex64)> {
        if !w.is_finite() || w.norm() == 0.0 || (w.im == 0.0 && w.re > 0.0) {
            return Err(Error::OutOfDomain(w));
        }
        self.invert_along(&mut Self::arc_path(w))
    }

    /// `(η^{-1}(w), (η^{-1})'(w))`, continued along the circle `|w| = r`
    /// from `cache` when it lies on the same circle.
    pub fn invert_tracked(&self, w: Complex64, cache: &mut Option<Tracked>) -> Result<(Complex64, Complex64)> {
        if !w.is_finite() || w.norm() == 0.0 || (w.im == 0.0 && w.re > 0.0) {
            return Err(Error::OutOfDomain(w));
        }
        let r = w.norm();
        let (v, fp) = match *cache {
            Some(t) if (t.w.norm() - r).abs() <= 1e-13 * r && t.w.im * w.im > 0.0 => {
                let (a0, a1) = (t.w.arg(), w.arg());
                let pieces = ((a1 - a0).abs() / 0.1).ceil().max(1.0) as usize;
                let waypoints: Vec<Complex64> = (1..=pieces)
                    .map(|k| {
                        if k == pieces {
                            w
                        } else {
                            Complex64::from_polar(r, a0 + (a1 - a0) * k as f64 / pieces as f64)
                        }
                    })
                    .collect();
                let forward = eta_forward(&self.measure);
                let mut solved = Vec::with_capacity(pieces);
                continue_along(&forward, &slit_plane, (t.w, t.v, t.fp), &waypoints, &mut solved)?
            }
            _ => {
                let (v, d) = self.invert(w)?;
                (v, 1.0 / d)
            }
        };
        *cache = Some(Tracked { w, v, fp });
        Ok((v, 1.0 / fp))
    }

    /// `Σ(w) = η^{-1}(w)/w`, with `Σ(0) = 1/η'(0) = 1/m₁`.
    pub fn sigma(&self, w: Complex64) -> Result<Complex64> {
        if w.norm() == 0.0 {
            return Ok(Complex64::new(1.0 / self.mean, 0.0));
        }
        Ok(self.invert(w)?.0 / w)
    }
}

const RHO_RAYS: usize = 64;
const RHO_SAFETY: f64 = 0.95;
const CIRCLE_START: f64 = 1e-3;

/// Inverse of `η_μ` for a measure on the circle with nonzero first moment,
/// continued radially from a neighbourhood of the origin.
#[derive(Debug, Clone)]
pub struct CircleInverter {
    measure: Measure,
    mean: Complex64,
    disk: DiskDomain,
}

impl CircleInverter {
    pub fn new(measure: Measure) -> Result<Self> {
        if measure.domain() != SupportDomain::Circle {
            return Err(Error::InvalidSupport("circle inverter needs a circle measure".into()));
        }
        let mean = measure.mean();
        if mean.norm() < 1e-14 {
            return Err(Error::ZeroMeanMeasure);
        }
        let mut inv = Self {
            measure,
            mean,
            disk: DiskDomain { rho_mu: 1.0 },
        };
        inv.disk = DiskDomain {
            rho_mu: inv.estimate_rho(),
        };
        Ok(inv)
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn disk(&self) -> DiskDomain {
        self.disk
    }

    pub fn mean(&self) -> Complex64 {
        self.mean
    }

    fn start(&self, w: Complex64) -> Result<(Complex64, Complex64, Complex64)> {
        let forward = eta_forward(&self.measure);
        let r = w.norm();
        let w0 = if r > CIRCLE_START { w * (CIRCLE_START / r) } else { w };
        let guess = w0 / self.mean;
        let (v0, fp0) =
            newton_solve(&forward, w0, guess, &in_disk).ok_or(Error::BranchLost(w0))?;
        Ok((w0, v0, fp0))
    }

    /// Radius reached along 64 rays before the continuation fails, times
    /// 0.95; the whole disk when no ray fails.
    fn estimate_rho(&self) -> f64 {
        let forward = eta_forward(&self.measure);
        let mut reach = 1.0f64;
        for k in 0..RHO_RAYS {
            let dir = Complex64::from_polar(1.0, TAU * k as f64 / RHO_RAYS as f64);
            let Ok((w0, v0, fp0)) = self.start(dir) else {
                return CIRCLE_START;
            };
            let far = dir * (1.0 - 1e-9);
            let r = match march(&forward, &in_disk, w0, v0, fp0, far) {
                Ok(_) => 1.0,
                Err(last) => last.norm(),
            };
            reach = reach.min(r);
        }
        if reach == 1.0 {
            return 1.0;
        }
        RHO_SAFETY * reach
    }

    pub fn radial_path(w: Complex64) -> ContinuationPath {
        ContinuationPath::through(vec![w])
    }

    pub fn invert_along(&self, path: &mut ContinuationPath) -> Result<(Complex64, Complex64)> {
        let first = *path
            .waypoints
            .first()
            .ok_or_else(|| Error::Config("empty continuation path".into()))?;
        let (w0, v0, fp0) = self.start(first)?;
        let forward = eta_forward(&self.measure);
        path.solved.clear();
        let (v, fp) = continue_along(&forward, &in_disk, (w0, v0, fp0), &path.waypoints, &mut path.solved)?;
        Ok((v, 1.0 / fp))
    }

    /// `(η^{-1}(w), (η^{-1})'(w))` for `|w| < ρ_μ`.
    pub fn invert(&self, w: Complex64) -> Result<(Complex64, Complex64)> {
        if !self.disk.contains(w) {
            return Err(Error::OutOfDomain(w));
        }
        if w.norm() == 0.0 {
            return Ok((w, 1.0 / self.mean));
        }
        self.invert_along(&mut Self::radial_path(w))
    }

    /// `(η^{-1}(w), (η^{-1})'(w))`, continued along the segment from `cache`
    /// when present (the disk is convex).
    pub fn invert_tracked(&self, w: Complex64, cache: &mut Option<Tracked>) -> Result<(Complex64, Complex64)> {
        if !self.disk.contains(w) {
            return Err(Error::OutOfDomain(w));
        }
        let (v, fp) = match *cache {
            Some(t) => {
                let forward = eta_forward(&self.measure);
                march(&forward, &in_disk, t.w, t.v, t.fp, w).map_err(|_| Error::BranchLost(w))?
            }
            None => {
                let (v, d) = self.invert(w)?;
                (v, 1.0 / d)
            }
        };
        *cache = Some(Tracked { w, v, fp });
        Ok((v, 1.0 / fp))
    }

    pub fn sigma(&self, w: Complex64) -> Result<Complex64> {
        if w.norm() == 0.0 {
            return Ok(1.0 / self.mean);
        }
        Ok(self.invert(w)?.0 / w)
    }
}

fn slit_plane(v: Complex64) -> bool {
    v.is_finite() && !(v.im.abs() < 1e-300 && v.re > 0.0)
}

fn in_disk(v: Complex64) -> bool {
    v.norm() < 1.0
}

/// `η_μ^{-1}(w)` for a half-line or circle measure.
pub fn invert_eta(m: &Measure, w: Complex64, path: Option<&mut ContinuationPath>) -> Result<Complex64> {
    match m.domain() {
        SupportDomain::HalfLine => {
            let inv = HalflineInverter::new(m.clone())?;
            match path {
                Some(p) => Ok(inv.invert_along(p)?.0),
                None => Ok(inv.invert(w)?.0),
            }
        }
        SupportDomain::Circle => {
            let inv = CircleInverter::new(m.clone())?;
            match path {
                Some(p) => Ok(inv.invert_along(p)?.0),
                None => Ok(inv.invert(w)?.0),
            }
        }
        SupportDomain::Line => Err(Error::InvalidSupport("η is not defined on the line".into())),
    }
}

/// `Σ_μ(w) = η_μ^{-1}(w)/w`; at `w = 0` the limit `1/η'(0)` is returned.
pub fn sigma(m: &Measure, w: Complex64) -> Result<Complex64> {
    match m.domain() {
        SupportDomain::HalfLine => HalflineInverter::new(m.clone())?.sigma(w),
        SupportDomain::Circle => CircleInverter::new(m.clone())?.sigma(w),
        SupportDomain::Line => Err(Error::InvalidSupport("Σ is not defined on the line".into())),
    }
}

// ---------------------------------------------------------------------------
// contour inverse

const CONTOUR_START_NODES: usize = 64;
const CONTOUR_MAX_NODES: usize = 4096;
const CONTOUR_TOL: f64 = 1e-11;
const WINDING_TOL: f64 = 1e-6;
const CONTOUR_POST_TOL: f64 = 1e-9;

/// `(1/2πi) ∮_{∂Q} ζ H'(ζ)/(H(ζ) - z) dζ`, the preimage of `z` under an
/// analytic `H` injective near `Q`. The integral with numerator `H'` alone
/// (the winding number of `H∘∂Q` about `z`) must equal one.
pub fn contour_inverse<H>(h: H, q: &ContourRect, z: Complex64) -> Result<Complex64>
where
    H: Fn(Complex64) -> Result<(Complex64, Complex64)>,
{
    let mut nodes = CONTOUR_START_NODES;
    let mut prev: Option<Complex64> = None;
    let two_pi_i = Complex64::new(0.0, TAU);
    loop {
        let gl = quadrature::rule(nodes);
        let mut i0 = Complex64::new(0.0, 0.0);
        let mut i1 = Complex64::new(0.0, 0.0);
        for (a, b) in q.edges() {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
                let zeta = mid + half * x;
                let (hv, hp) = h(zeta)?;
                let kernel = hp / (hv - z) * half * w;
                i0 += kernel;
                i1 += zeta * kernel;
            }
        }
        let winding = i0 / two_pi_i;
        let value = i1 / two_pi_i;
        if let Some(p) = prev {
            if (value - p).norm() < CONTOUR_TOL {
                if (winding - 1.0).norm() > WINDING_TOL {
                    return Err(Error::WindingMismatch(winding.re));
                }
                let (hv, _) = h(value)?;
                if (hv - z).norm() > CONTOUR_POST_TOL {
                    return Err(Error::QuadratureStall(nodes));
                }
                return Ok(value);
            }
        }
        if nodes >= CONTOUR_MAX_NODES {
            if (winding - 1.0).norm() > 0.5 {
                return Err(Error::WindingMismatch(winding.re));
            }
            return Err(Error::QuadratureStall(nodes));
        }
        prev = Some(value);
        nodes *= 2;
    }
}

/// Pairs an evaluator without a derivative with a five-point central
/// difference for `H'`.
pub fn with_fd_derivative<H>(h: H) -> impl Fn(Complex64) -> Result<(Complex64, Complex64)>
where
    H: Fn(Complex64) -> Result<Complex64>,
{
    move |z| {
        let v = h(z)?;
        let d = crate::numeric::complex_derivative(&h, z)?;
        Ok((v, d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::semicircle_grid;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_point(a: f64) -> Measure {
        Measure::atomic(SupportDomain::Line, vec![(-a, 0.5), (a, 0.5)]).unwrap()
    }

    #[test]
    fn anchor_examples() {
        let d5 = Measure::point_mass(SupportDomain::Line, 5.0).unwrap();
        let a = stolz_anchor(&d5, 1.0).unwrap();
        assert!(a.beta <= 16.0 && a.beta >= 10.0, "{a:?}");
        let d0 = Measure::point_mass(SupportDomain::Line, 0.0).unwrap();
        assert_eq!(stolz_anchor(&d0, 1.0).unwrap().beta, ANCHOR_FLOOR);
        let b = stolz_anchor(&two_point(1.0), 1.0).unwrap();
        assert!(b.beta <= 4.0, "{b:?}");
    }

    #[test]
    fn invert_f_examples() {
        let z = c(0.3, 0.7);
        let d = Measure::point_mass(SupportDomain::Line, -1.25).unwrap();
        assert!((invert_f(&d, z, None).unwrap() - (z - 1.25)).norm() < 1e-12);
        let h = invert_f(&two_point(1.0), c(0.0, 3.0), None).unwrap();
        assert!((h - c(0.0, (3.0 + 5f64.sqrt()) / 2.0)).norm() < 1e-10);
        let s = semicircle_grid(2001).unwrap();
        let h = invert_f(&s, c(0.0, 3.0), None).unwrap();
        assert!((h - c(0.0, 3.0 - 1.0 / 3.0)).norm() < 1e-6, "{h}");
    }

    #[test]
    fn phi_examples() {
        let d = Measure::point_mass(SupportDomain::Line, 2.0).unwrap();
        assert!((phi(&d, c(-1.0, 5.0), None).unwrap() - 2.0).norm() < 1e-12);
        let p = phi(&two_point(1.0), c(0.0, 3.0), None).unwrap();
        assert!((p - c(0.0, (5f64.sqrt() - 3.0) / 2.0)).norm() < 1e-10);
        let a = 1.0 / 3f64.sqrt();
        let p = phi(&two_point(a), c(0.0, 3.0), None).unwrap();
        // φ = (√(z² + 4a²) - z)/2
        let z = c(0.0, 3.0);
        let exact = ((z * z + 4.0 * a * a).sqrt() - z) / 2.0;
        assert!((p - exact).norm() < 1e-10);
        assert!((p - c(0.0, -0.115563)).norm() < 1e-6);
    }

    #[test]
    fn path_independence() {
        let m = Measure::atomic(SupportDomain::Line, vec![(-1.0, 0.3), (0.5, 0.5), (2.0, 0.2)]).unwrap();
        let inv = LineInverter::new(m, 1.0).unwrap();
        let z = c(0.4, 1.3);
        let direct = inv.invert(z).unwrap().0;
        let top = inv.angle().floor_at(3.0);
        let mut path = ContinuationPath::through(vec![c(-3.0, top), c(0.4, top), z]);
        let other = inv.invert_along(&mut path).unwrap().0;
        assert!((direct - other).norm() < 1e-9);
        assert_eq!(path.result(), Some(other));
    }

    #[test]
    fn branch_lost_below_branch_point() {
        // φ of ½(δ_{±1}) has a branch point at 2i; the vertical line through it
        // cannot be continued past the singularity
        let inv = LineInverter::new(two_point(1.0), 1.0).unwrap();
        assert!(matches!(inv.invert(c(0.0, 1.0)), Err(Error::BranchLost(_))));
    }

    #[test]
    fn halfline_eta_inverse_examples() {
        let d = Measure::point_mass(SupportDomain::HalfLine, 2.0).unwrap();
        let w = c(-0.4, 0.9);
        assert!((invert_eta(&d, w, None).unwrap() - w / 2.0).norm() < 1e-12);
        assert!((sigma(&d, w).unwrap() - 0.5).norm() < 1e-12);
        let m = Measure::atomic(SupportDomain::HalfLine, vec![(0.5, 0.5), (1.5, 0.5)]).unwrap();
        let v = invert_eta(&m, c(-0.875, 0.0), None).unwrap();
        assert!((v - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((sigma(&m, c(-0.875, 0.0)).unwrap() - 8.0 / 7.0).norm() < 1e-12);
        assert!((sigma(&m, c(0.0, 0.0)).unwrap() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn circle_eta_inverse_examples() {
        let alpha = 0.7;
        let d = Measure::point_mass(SupportDomain::Circle, alpha).unwrap();
        for w in [c(0.2, 0.1), c(-0.5, 0.3), c(0.0, -0.8)] {
            let s = sigma(&d, w).unwrap();
            assert!((s - Complex64::from_polar(1.0, -alpha)).norm() < 1e-12);
        }
        let m = Measure::atomic(SupportDomain::Circle, vec![(0.0, 0.9), (PI / 2.0, 0.1)]).unwrap();
        let s0 = sigma(&m, c(0.0, 0.0)).unwrap();
        assert!((s0 - 1.0 / c(0.9, 0.1)).norm() < 1e-15);
        assert!((s0 - c(1.097561, -0.121951)).norm() < 1e-6);
        let haar = crate::measures::haar_grid(64).unwrap();
        assert!(matches!(CircleInverter::new(haar), Err(Error::ZeroMeanMeasure)));
    }

    #[test]
    fn circle_rho_gates_the_disk() {
        let m = Measure::atomic(SupportDomain::Circle, vec![(0.0, 0.8), (1.0, 0.2)]).unwrap();
        let inv = CircleInverter::new(m.clone()).unwrap();
        let rho = inv.disk().rho_mu;
        assert!(rho == 1.0 || (rho > 0.05 && rho <= RHO_SAFETY), "{rho}");
        let w = c(0.5 * rho, 0.1 * rho);
        let (v, _) = inv.invert(w).unwrap();
        let back = transforms::eval(&m, TransformKind::Eta, v).unwrap();
        assert!((back - w).norm() < 1e-10);
    }

    #[test]
    fn contour_examples() {
        let a = c(0.7, -0.2);
        let shift = |zeta: Complex64| Ok((zeta + a, c(1.0, 0.0)));
        let z = c(0.1, 2.0);
        let q = ContourRect::centered(z - a, 0.5, 0.5).unwrap();
        let w = contour_inverse(shift, &q, z).unwrap();
        assert!((w - (z - a)).norm() < 1e-12);

        let sc = |zeta: Complex64| Ok((zeta + 1.0 / zeta, 1.0 - 1.0 / (zeta * zeta)));
        let q = ContourRect::new(-0.5, 0.5, 2.0, 3.0).unwrap();
        let w = contour_inverse(sc, &q, c(0.0, 2.0)).unwrap();
        assert!((w - c(0.0, 1.0 + 2f64.sqrt())).norm() < 1e-10, "{w}");
        assert!((w - c(0.0, 2.414214)).norm() < 1e-6);
    }

    #[test]
    fn contour_detects_wrong_winding() {
        let sc = |zeta: Complex64| Ok((zeta + 1.0 / zeta, 1.0 - 1.0 / (zeta * zeta)));
        let q = ContourRect::new(1.0, 2.0, 2.0, 3.0).unwrap();
        assert!(matches!(
            contour_inverse(sc, &q, c(0.0, 2.0)),
            Err(Error::WindingMismatch(_))
        ));
    }

    #[test]
    fn fd_derivative_adapter() {
        let h = with_fd_derivative(|z: Complex64| Ok(z + 1.0 / z));
        let z = c(0.3, 2.0);
        let (_, d) = h(z).unwrap();
        assert!((d - (1.0 - 1.0 / (z * z))).norm() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn line_measure() -> impl Strategy<Value = Measure> {
            prop::collection::vec((-2.0f64..2.0, 0.05f64..1.0), 1..5).prop_filter_map(
                "distinct",
                |mut v| {
                    v.sort_by(|a, b| a.0.total_cmp(&b.0));
                    v.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-6);
                    let t: f64 = v.iter().map(|a| a.1).sum();
                    Measure::atomic(SupportDomain::Line, v.into_iter().map(|(p, w)| (p, w / t)).collect()).ok()
                },
            )
        }

        fn halfline_measure() -> impl Strategy<Value = Measure> {
            prop::collection::vec((0.1f64..3.0, 0.05f64..1.0), 1..5).prop_filter_map(
                "distinct",
                |mut v| {
                    v.sort_by(|a, b| a.0.total_cmp(&b.0));
                    v.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-6);
                    let t: f64 = v.iter().map(|a| a.1).sum();
                    Measure::atomic(SupportDomain::HalfLine, v.into_iter().map(|(p, w)| (p, w / t)).collect()).ok()
                },
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn f_round_trip_in_stolz_angle(m in line_measure(), x in -1.0f64..1.0, lift in 0.0f64..3.0) {
                let inv = LineInverter::new(m.clone(), 1.0).unwrap();
                let z = c(x * inv.angle().beta, inv.angle().floor_at(x * inv.angle().beta) + lift);
                let (h, _) = inv.invert(z).unwrap();
                let f = transforms::eval(&m, TransformKind::F, h).unwrap();
                prop_assert!((f - z).norm() <= 1e-10 * (1.0 + z.norm()));
                prop_assert!((h - z).im <= 1e-10);
            }

            #[test]
            fn eta_round_trip_on_slit_plane(m in halfline_measure(), r in 0.05f64..0.9, th in 1.8f64..3.1) {
                let w = Complex64::from_polar(r, th);
                let v = invert_eta(&m, w, None).unwrap();
                let back = transforms::eval(&m, TransformKind::Eta, v).unwrap();
                prop_assert!((back - w).norm() <= 1e-10 * (1.0 + w.norm()));
            }
        }
    }
}
