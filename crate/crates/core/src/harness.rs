//! Triangular-array generators, the superconvergence experiment runner and
//! its report writers.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::additive::{self, DensityCurve, Reference};
use crate::error::{Error, Result};
use crate::inversion::{self, newton_invert, ContourRect, Cursor};
use crate::limits::{oracle_density, ExpSigmaDataHalfline, HerglotzSigmaDataCircle, NevanlinnaData, Oracle};
use crate::measures::{ArrayRow, Measure, SupportDomain};
use crate::mult_circle;
use crate::mult_halfline;
use crate::numeric;
use crate::rows::{AdditiveProvider, LineRow, SigmaProvider, SigmaRow};
use crate::transforms::{self, TransformKind};

/// Per-index weights `v_i > 0` of a row, renormalized by the generator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Uniform,
    /// `v_i = 1 + slope·i/n`.
    Linear { slope: f64 },
    /// `v_i` uniform on `[0.5, 1.5]`, drawn from the generator seed and `n`.
    Random,
}

impl Profile {
    pub fn weights(&self, n: usize, seed: u64) -> Vec<f64> {
        match *self {
            Profile::Uniform => vec![1.0; n],
            Profile::Linear { slope } => (0..n).map(|i| 1.0 + slope * i as f64 / n as f64).collect(),
            Profile::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                (0..n).map(|_| rng.gen_range(0.5..1.5)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `½(δ_{-a_i} + δ_{a_i})` with `Σ a_i² = 1`.
    BernoulliVariances,
    /// `(1 - p_i)δ_0 + p_i δ_1` with `Σ p_i = λ`.
    PoissonBernoulli { lambda: f64 },
    /// `½(δ_{e^{-a_i}} + δ_{e^{a_i}})` with `Σ a_i² = τ`.
    HalflineTwoPoint { tau: f64 },
    /// `(1 - q_i)δ_1 + q_i δ_{e^{iα}}` with `Σ q_i = λ`.
    CircleTwoPoint { lambda: f64, alpha: f64 },
    /// Every measure `δ_x` (no density at any `n`).
    PointMasses { position: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGenerator {
    pub kind: GeneratorKind,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default)]
    pub seed: u64,
}

impl ArrayGenerator {
    pub fn domain(&self) -> SupportDomain {
        match self.kind {
            GeneratorKind::BernoulliVariances | GeneratorKind::PoissonBernoulli { .. } | GeneratorKind::PointMasses { .. } => {
                SupportDomain::Line
            }
            GeneratorKind::HalflineTwoPoint { .. } => SupportDomain::HalfLine,
            GeneratorKind::CircleTwoPoint { .. } => SupportDomain::Circle,
        }
    }

    /// Closed-form limit of the rows, where one is known.
    pub fn limit(&self) -> Option<Limit> {
        Some(match self.kind {
            GeneratorKind::BernoulliVariances => Limit::Oracle { law: Oracle::Semicircle },
            GeneratorKind::PoissonBernoulli { lambda } => Limit::Oracle {
                law: Oracle::MarchenkoPastur { lambda },
            },
            GeneratorKind::HalflineTwoPoint { tau } => Limit::Halfline {
                data: ExpSigmaDataHalfline {
                    gamma: 1.0,
                    atoms: vec![(1.0, 0.5 * tau)],
                    weight_at_infinity: 0.0,
                },
            },
            GeneratorKind::CircleTwoPoint { lambda, alpha } => Limit::Circle {
                data: HerglotzSigmaDataCircle {
                    gamma_angle: -lambda * alpha.sin(),
                    atoms: vec![((-alpha).rem_euclid(TAU), lambda * (1.0 - alpha.cos()))],
                },
            },
            GeneratorKind::PointMasses { .. } => return None,
        })
    }
}

/// Row `n` of the array.
pub fn generate_row(gen: &ArrayGenerator, n: usize) -> Result<ArrayRow> {
    if n == 0 {
        return Err(Error::Config("rows need n ≥ 1".into()));
    }
    let v = gen.profile.weights(n, gen.seed);
    if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Config("profile weights must be positive".into()));
    }
    let total: f64 = v.iter().sum();
    let share = |i: usize| v[i] / total;
    let measures = (0..n)
        .map(|i| match gen.kind {
            GeneratorKind::BernoulliVariances => {
                let a = share(i).sqrt();
                Measure::atomic(SupportDomain::Line, vec![(-a, 0.5), (a, 0.5)])
            }
            GeneratorKind::PoissonBernoulli { lambda } => {
                let p = lambda * share(i);
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Config(format!("p = {p} outside (0, 1) at n = {n}")));
                }
                Measure::atomic(SupportDomain::Line, vec![(0.0, 1.0 - p), (1.0, p)])
            }
            GeneratorKind::HalflineTwoPoint { tau } => {
                let a = (tau * share(i)).sqrt();
                Measure::atomic(SupportDomain::HalfLine, vec![((-a).exp(), 0.5), (a.exp(), 0.5)])
            }
            GeneratorKind::CircleTwoPoint { lambda, alpha } => {
                let q = lambda * share(i);
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::Config(format!("q = {q} outside (0, 1) at n = {n}")));
                }
                Measure::atomic(
                    SupportDomain::Circle,
                    vec![(0.0, 1.0 - q), (alpha.rem_euclid(TAU), q)],
                )
            }
            GeneratorKind::PointMasses { position } => Measure::point_mass(SupportDomain::Line, position),
        })
        .collect::<Result<Vec<_>>>()?;
    ArrayRow::new(n, measures)
}

/// Largest `|F₁(z) - F₂(z)|` over the probe points.
pub fn f_distance<A, B>(f1: A, f2: B, probe: &[Complex64]) -> Result<f64>
where
    A: Fn(Complex64) -> Result<Complex64>,
    B: Fn(Complex64) -> Result<Complex64>,
{
    probe
        .iter()
        .try_fold(0.0f64, |m, &z| Ok(m.max((f1(z)? - f2(z)?).norm())))
}

/// `{s + it : s ∈ {-2, …, 2}, t ∈ {1, 2}}`.
pub fn default_probe() -> Vec<Complex64> {
    let mut v = Vec::new();
    for t in [1.0, 2.0] {
        for s in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            v.push(Complex64::new(s, t));
        }
    }
    v
}

/// `F = H^{-1}` of an additive provider, by Newton from `z` itself.
pub fn f_of<P: AdditiveProvider + ?Sized>(p: &P, z: Complex64) -> Result<Complex64> {
    newton_invert(|w| p.h_jet(w, &mut Cursor::new()), z, z)
}

/// What the rows are measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Limit {
    Oracle { law: Oracle },
    Nevanlinna { data: NevanlinnaData },
    Halfline { data: ExpSigmaDataHalfline },
    Circle { data: HerglotzSigmaDataCircle },
    /// Row `n` of the same array, for laws without a usable closed form.
    ReferenceRow { n: usize },
}

impl Limit {
    pub fn label(&self) -> String {
        match self {
            Limit::Oracle { law } => match law {
                Oracle::Semicircle => "semicircle".into(),
                Oracle::MarchenkoPastur { lambda } => format!("marchenko_pastur({lambda})"),
                Oracle::Kesten { d } => format!("kesten({d})"),
                Oracle::Arcsine => "arcsine".into(),
            },
            Limit::Nevanlinna { .. } => "nevanlinna_id".into(),
            Limit::Halfline { .. } => "halfline_id".into(),
            Limit::Circle { .. } => "circle_id".into(),
            Limit::ReferenceRow { n } => format!("reference_row({n})"),
        }
    }

    fn domain(&self) -> Option<SupportDomain> {
        match self {
            Limit::Oracle { .. } | Limit::Nevanlinna { .. } => Some(SupportDomain::Line),
            Limit::Halfline { .. } => Some(SupportDomain::HalfLine),
            Limit::Circle { .. } => Some(SupportDomain::Circle),
            Limit::ReferenceRow { .. } => None,
        }
    }
}

/// Interval (line, half-line) or arc of angles (circle) on which the
/// densities are compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub a: f64,
    pub b: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_floor() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grids {
    /// Samples per density curve on the line and half-line.
    pub points: usize,
    /// Directions on the circle.
    pub angles: usize,
    /// Samples of a limit curve computed from ID data.
    pub reference_points: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            points: 401,
            angles: mult_circle::DEFAULT_ANGLES,
            reference_points: 801,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Bound on the last `sup_err` of the schedule, flagged in the report.
    pub final_sup_err: Option<f64>,
    pub deficit_eps: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            final_sup_err: None,
            deficit_eps: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    pub fn extension(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Outputs {
    pub formats: Vec<Format>,
    pub stem: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            formats: vec![Format::Csv, Format::Json],
            stem: "report".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: ArrayGenerator,
    pub limit: Limit,
    pub window: Window,
    pub schedule: Vec<usize>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Run seed; replaces the generator's seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() || self.schedule.contains(&0) {
            return Err(Error::Config("schedule needs at least one n ≥ 1".into()));
        }
        if !(self.window.b > self.window.a) {
            return Err(Error::Config("window needs a < b".into()));
        }
        if let Some(d) = self.limit.domain() {
            if d != self.generator.domain() {
                return Err(Error::Config(format!("limit {} does not live on the generator's domain", self.limit.label())));
            }
        }
        if self.grids.points < 8 || self.grids.angles < 8 || self.grids.reference_points < 8 {
            return Err(Error::Config("grids need at least 8 points".into()));
        }
        Ok(())
    }

    fn generator(&self) -> ArrayGenerator {
        ArrayGenerator {
            seed: self.seed,
            ..self.generator
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NEntry {
    pub n: usize,
    pub sup_err: Option<f64>,
    pub d1_err: Option<f64>,
    pub d2_err: Option<f64>,
    pub deficit: f64,
    pub excluded: Option<usize>,
    pub f_dist: Option<f64>,
    pub error: Option<String>,
}

/// A density resampled on the window, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub label: String,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperconvReport {
    pub schedule: Vec<usize>,
    pub entries: Vec<NEntry>,
    pub limit: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub sup_err_decreasing: bool,
    pub d1_err_decreasing: bool,
    pub final_within_tolerance: Option<bool>,
    pub curves: Vec<CurveSample>,
}

impl SuperconvReport {
    pub fn sup_errs(&self) -> Vec<Option<f64>> {
        self.entries.iter().map(|e| e.sup_err).collect()
    }

    pub fn all_failed(&self) -> bool {
        self.entries.iter().all(|e| e.error.is_some())
    }
}

fn strictly_decreasing(v: &[Option<f64>]) -> bool {
    v.iter().all(Option::is_some) && v.windows(2).all(|w| w[1] < w[0])
}

enum LimitCurve {
    Density(Oracle),
    Curve(DensityCurve),
}

impl LimitCurve {
    fn eval(&self, x: f64) -> Result<f64> {
        match self {
            LimitCurve::Density(o) => oracle_density(*o, x),
            LimitCurve::Curve(c) => Ok(c.evaluator()?(x)),
        }
    }
}

/// Density of a provider over the window, by domain.
fn line_curve<P: AdditiveProvider + ?Sized>(p: &P, w: &Window, points: usize) -> Result<DensityCurve> {
    additive::density_on_window(p, w.a, w.b, points).map(|r| r.1)
}

fn halfline_curve<P: SigmaProvider + ?Sized>(p: &P, w: &Window, points: usize) -> Result<DensityCurve> {
    mult_halfline::density_on_window(p, w.a, w.b, points).map(|r| r.1)
}

fn circle_curve<P: SigmaProvider + ?Sized>(p: &P, angles: usize) -> Result<DensityCurve> {
    mult_circle::density_curve(p, &mult_circle::angle_grid(angles)).map(|r| r.1)
}

/// Density curve of one row over the window.
pub fn row_density(row: &ArrayRow, window: &Window, grids: &Grids) -> Result<DensityCurve> {
    match row.domain() {
        SupportDomain::Line => line_curve(&LineRow::new(row)?, window, grids.points),
        SupportDomain::HalfLine => halfline_curve(&SigmaRow::new(row)?, window, grids.points),
        SupportDomain::Circle => circle_curve(&SigmaRow::new(row)?, grids.angles),
    }
}

fn limit_curve(config: &ExperimentConfig) -> Result<LimitCurve> {
    let w = &config.window;
    let g = &config.grids;
    Ok(match &config.limit {
        Limit::Oracle { law } => LimitCurve::Density(*law),
        Limit::Nevanlinna { data } => LimitCurve::Curve(line_curve(data, w, g.reference_points)?),
        Limit::Halfline { data } => LimitCurve::Curve(halfline_curve(data, w, g.reference_points)?),
        Limit::Circle { data } => LimitCurve::Curve(circle_curve(data, g.angles)?),
        Limit::ReferenceRow { n } => LimitCurve::Curve(row_density(&generate_row(&config.generator(), *n)?, w, g)?),
    })
}

/// `F` of the limit, where one is available on the line.
fn limit_f(config: &ExperimentConfig) -> Option<Box<dyn Fn(Complex64) -> Result<Complex64> + Sync>> {
    let data = match &config.limit {
        Limit::Oracle { law: Oracle::Semicircle } => NevanlinnaData::semicircle(),
        Limit::Oracle {
            law: Oracle::MarchenkoPastur { lambda },
        } => NevanlinnaData::marchenko_pastur(*lambda),
        Limit::Nevanlinna { data } => data.clone(),
        Limit::ReferenceRow { n } if config.generator.domain() == SupportDomain::Line => {
            let row = LineRow::new(&generate_row(&config.generator(), *n).ok()?).ok()?;
            return Some(Box::new(move |z| f_of(&row, z)));
        }
        _ => return None,
    };
    Some(Box::new(move |z| f_of(&data, z)))
}

const PLOT_POINTS: usize = 201;
const FLOOR_CHECKS: usize = 21;

fn resample(label: String, c: &dyn Fn(f64) -> Result<f64>, w: &Window) -> Result<CurveSample> {
    let x = numeric::linspace(w.a, w.b, PLOT_POINTS);
    let p = x.iter().map(|&x| c(x)).collect::<Result<_>>()?;
    Ok(CurveSample { label, x, p })
}

fn run_one(
    config: &ExperimentConfig,
    reference: &LimitCurve,
    f_limit: Option<&(dyn Fn(Complex64) -> Result<Complex64> + Sync)>,
    n: usize,
) -> (NEntry, Option<CurveSample>) {
    let mut entry = NEntry {
        n,
        sup_err: None,
        d1_err: None,
        d2_err: None,
        deficit: f64::NAN,
        excluded: None,
        f_dist: None,
        error: None,
    };
    let row = match generate_row(&config.generator(), n) {
        Ok(r) => r,
        Err(e) => {
            entry.error = Some(e.to_string());
            return (entry, None);
        }
    };
    entry.deficit = row.infinitesimality_deficit(config.tolerances.deficit_eps);
    if let (Some(fl), SupportDomain::Line) = (f_limit, row.domain()) {
        entry.f_dist = LineRow::new(&row)
            .and_then(|lr| f_distance(|z| f_of(&lr, z), fl, &default_probe()))
            .ok();
    }
    let w = &config.window;
    let curve = match row_density(&row, w, &config.grids) {
        Ok(c) => c,
        Err(e) => {
            if matches!(e, Error::NoCrossing(_) | Error::WindowNotCovered(..)) {
                entry.excluded = Some(config.grids.points);
            }
            entry.error = Some(e.to_string());
            return (entry, None);
        }
    };
    entry.excluded = Some(curve.excluded);
    let limit_ref: Box<dyn Fn(f64) -> Result<f64> + Sync>;
    let r = match reference {
        LimitCurve::Curve(c) => Reference::Curve(c),
        LimitCurve::Density(o) => {
            let o = *o;
            limit_ref = Box::new(move |x| oracle_density(o, x));
            Reference::Density(limit_ref.as_ref())
        }
    };
    match additive::superconv_metrics(&curve, r, w.a, w.b) {
        Ok(m) => {
            entry.sup_err = Some(m.sup_err);
            entry.d1_err = Some(m.d1_err);
            entry.d2_err = Some(m.d2_err);
        }
        Err(e) => entry.error = Some(e.to_string()),
    }
    let sample = curve
        .evaluator()
        .ok()
        .filter(|_| curve.covers(w.a, w.b))
        .and_then(|s| resample(format!("n={n}"), &|x| Ok(s(x)), w).ok());
    (entry, sample)
}

/// Runs every `n` of the schedule; failures of single rows are recorded in
/// their entries. Errors only for a bad configuration or limit.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SuperconvReport> {
    config.validate()?;
    let reference = limit_curve(config)?;
    let w = &config.window;
    for x in numeric::linspace(w.a, w.b, FLOOR_CHECKS) {
        let p = reference.eval(x)?;
        if !(p >= w.floor) {
            return Err(Error::Config(format!("limit density {p} below the floor {} at {x}", w.floor)));
        }
    }
    let f_limit = limit_f(config);
    let results: Vec<(NEntry, Option<CurveSample>)> = config
        .schedule
        .par_iter()
        .map(|&n| run_one(config, &reference, f_limit.as_deref(), n))
        .collect();

    let mut curves = vec![resample(config.limit.label(), &|x| reference.eval(x), w)?];
    let mut entries = Vec::with_capacity(results.len());
    for (e, c) in results {
        entries.push(e);
        curves.extend(c);
    }
    let sups: Vec<Option<f64>> = entries.iter().map(|e| e.sup_err).collect();
    let d1s: Vec<Option<f64>> = entries.iter().map(|e| e.d1_err).collect();
    let final_within_tolerance = config
        .tolerances
        .final_sup_err
        .map(|t| sups.last().copied().flatten().is_some_and(|s| s < t));
    Ok(SuperconvReport {
        schedule: config.schedule.clone(),
        limit: config.limit.label(),
        config: config.clone(),
        seed: config.seed,
        sup_err_decreasing: strictly_decreasing(&sups),
        d1_err_decreasing: strictly_decreasing(&d1s),
        final_within_tolerance,
        entries,
        curves,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_csv(report: &SuperconvReport) -> String {
    let mut s = String::from("n,sup_err,d1_err,d2_err,deficit,excluded\n");
    for e in &report.entries {
        let excluded = e.excluded.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.n,
            opt(e.sup_err),
            opt(e.d1_err),
            opt(e.d2_err),
            e.deficit,
            excluded
        );
    }
    s
}

pub fn density_csv(curve: &DensityCurve) -> String {
    let mut s = String::from("x,p\n");
    for (x, p) in curve.x.iter().zip(&curve.p) {
        let _ = writeln!(s, "{x},{p}");
    }
    s
}

const SVG_W: f64 = 800.0;
const SVG_H: f64 = 500.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 6] = ["#000000", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// One polyline per curve, on shared axes.
pub fn curves_svg(curves: &[CurveSample]) -> String {
    let (mut x0, mut x1, mut p1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for c in curves {
        for (&x, &p) in c.x.iter().zip(&c.p) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            if p.is_finite() {
                p1 = p1.max(p);
            }
        }
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(p1 > 0.0) {
        p1 = 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let sy = |p: f64| SVG_H - MARGIN - p / p1 * (SVG_H - 2.0 * MARGIN);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        SVG_W, SVG_H, SVG_W, SVG_H
    );
    let _ = writeln!(s, "<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>");
    for (k, c) in curves.iter().enumerate() {
        let pts: Vec<String> = c
            .x
            .iter()
            .zip(&c.p)
            .filter(|(_, p)| p.is_finite())
            .map(|(&x, &p)| format!("{:.2},{:.2}", sx(x), sy(p)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"><title>{}</title></polyline>",
            PALETTE[k % PALETTE.len()],
            pts.join(" "),
            c.label
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes the report in the given format.
pub fn emit(report: &SuperconvReport, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Csv => report_csv(report),
        Format::Json => serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))? + "\n",
        Format::Svg => curves_svg(&report.curves),
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// One row's density over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub generator: ArrayGenerator,
    pub n: usize,
    pub window: Window,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub seed: u64,
}

impl DensityConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !(c.window.b > c.window.a) {
            return Err(Error::Config("window needs a < b".into()));
        }
        Ok(c)
    }

    pub fn run(&self) -> Result<DensityCurve> {
        let gen = ArrayGenerator {
            seed: self.seed,
            ..self.generator
        };
        row_density(&generate_row(&gen, self.n)?, &self.window, &self.grids)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformName {
    G,
    F,
    Psi,
    Eta,
    Phi,
    Sigma,
}

/// Point evaluations of one transform of one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    pub measure: Measure,
    pub transform: TransformName,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformValue {
    pub z: [f64; 2],
    pub value: Option<[f64; 2]>,
    pub error: Option<String>,
}

impl TransformConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.measure.clone().validate()?;
        Ok(c)
    }

    pub fn eval_at(&self, z: Complex64) -> Result<Complex64> {
        let m = &self.measure;
        match self.transform {
            TransformName::G => transforms::eval(m, TransformKind::G, z),
            TransformName::F => transforms::eval(m, TransformKind::F, z),
            TransformName::Psi => transforms::eval(m, TransformKind::Psi, z),
            TransformName::Eta => transforms::eval(m, TransformKind::Eta, z),
            TransformName::Phi => inversion::phi(m, z, None),
            TransformName::Sigma => inversion::sigma(m, z),
        }
    }

    pub fn run(&self) -> Vec<TransformValue> {
        self.points
            .iter()
            .map(|&[re, im]| match self.eval_at(Complex64::new(re, im)) {
                Ok(v) => TransformValue {
                    z: [re, im],
                    value: Some([v.re, v.im]),
                    error: None,
                },
                Err(e) => TransformValue {
                    z: [re, im],
                    value: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    }
}

pub fn transform_csv(values: &[TransformValue]) -> String {
    let mut s = String::from("re,im,value_re,value_im\n");
    for v in values {
        let (a, b) = v.value.map_or((String::new(), String::new()), |[a, b]| (a.to_string(), b.to_string()));
        let _ = writeln!(s, "{},{},{a},{b}", v.z[0], v.z[1]);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, got: Result<f64>, want: f64, tol: f64) -> Check {
    match got {
        Ok(v) => Check {
            name: name.into(),
            passed: (v - want).abs() <= tol,
            detail: format!("got {v}, want {want} ± {tol:e}"),
        },
        Err(e) => Check {
            name: name.into(),
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// A quick invariant suite over all pipelines.
pub fn selftest() -> Vec<Check> {
    let mut out = Vec::new();

    let a = 1.0 / 3f64.sqrt();
    let kesten = Measure::atomic(SupportDomain::Line, vec![(-a, 0.5), (a, 0.5)]).and_then(|m| {
        LineRow::new(&ArrayRow::new(3, vec![m.clone(), m.clone(), m])?)
    });
    let kesten_p0 = kesten.as_ref().map_err(Clone::clone).and_then(|row| {
        let mut cur = Cursor::new();
        let b = additive::boundary_f(row, 0.0, None, &mut cur)?;
        additive::density_point(row, &b, &mut cur).map(|r| r.1)
    });
    out.push(check("kesten-3 density at 0", kesten_p0, 6f64.sqrt() / (3.0 * PI), 1e-9));

    let sc = NevanlinnaData::semicircle();
    let f06 = additive::boundary_f(&sc, 0.6, None, &mut Cursor::new()).map(|b| b.f);
    out.push(check("semicircle boundary at s = 0.6", f06, 0.8, 1e-10));

    let bern = Measure::atomic(SupportDomain::Line, vec![(-1.0, 0.5), (1.0, 0.5)]);
    let z = Complex64::new(0.3, 2.5);
    let lin = bern.and_then(|m| Ok((2.0 * inversion::phi(&m, z, None)? - ((z * z + 4.0).sqrt() - z)).norm()));
    out.push(check("linearization of two Bernoulli laws", lin, 0.0, 1e-10));

    let z = Complex64::new(0.4, 1.5);
    let contour = ContourRect::centered(Complex64::new(0.3, 2.0), 0.5, 0.5).and_then(|q| {
        let c = inversion::contour_inverse(|w| sc.h(w), &q, z)?;
        let n = f_of(&sc, z)?;
        Ok((c - n).norm())
    });
    out.push(check("contour inverse against Newton", contour, 0.0, 1e-9));

    out.push(check(
        "marchenko-pastur(1) at 1",
        oracle_density(Oracle::MarchenkoPastur { lambda: 1.0 }, 1.0),
        3f64.sqrt() / TAU,
        1e-12,
    ));

    let half = ExpSigmaDataHalfline::new(1.0, vec![(1.0, 0.25)], 0.0);
    let theta: Result<f64> = numeric::bisect(1e-6, PI - 1e-6, 1e-15, |t| Ok(t - 0.25 / (0.5 * t).tan()));
    let h1 = half
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|d| mult_halfline::polar_boundary(d, 1.0, None, &mut Cursor::new()).map(|p| p.h));
    out.push(check("half-line boundary on the unit circle", h1, theta.unwrap_or(f64::NAN), 1e-9));
    let mean = half
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|d| mult_halfline::integrate_density(d, 1.0, |x| x));
    out.push(check("half-line mean", mean, 0.25f64.exp(), 1e-5));

    let circ = HerglotzSigmaDataCircle::new(0.0, vec![(0.0, 0.5)]);
    let r_star: Result<f64> = numeric::bisect(1e-6, 1.0 - 1e-9, 1e-15, |r| Ok(r.ln() + 0.5 * (1.0 + r) / (1.0 - r)));
    let r1 = circ
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|d| mult_circle::radial_boundary(d, 0.0, None, &mut Cursor::new()).map(|p| p.r));
    out.push(check("circle radial boundary at 1", r1, r_star.unwrap_or(f64::NAN), 1e-9));
    let mass = circ
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|d| mult_circle::integrate_density(d, 0.0, |_| Complex64::new(1.0, 0.0)).map(|m| m.re));
    out.push(check("circle density mass", mass, 1.0, 1e-6));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernoulli(profile: Profile) -> ArrayGenerator {
        ArrayGenerator {
            kind: GeneratorKind::BernoulliVariances,
            profile,
            seed: 0,
        }
    }

    #[test]
    fn generator_examples() {
        let row = generate_row(&bernoulli(Profile::Uniform), 4).unwrap();
        let half = Measure::atomic(SupportDomain::Line, vec![(-0.5, 0.5), (0.5, 0.5)]).unwrap();
        assert!(row.measures.iter().all(|m| *m == half));

        let row = generate_row(&bernoulli(Profile::Linear { slope: 0.5 }), 4).unwrap();
        let var: f64 = row.measures.iter().map(|m| m.variance()).sum();
        assert!((var - 1.0).abs() < 1e-14);
        for i in 1..4 {
            assert_ne!(row.measures[i], row.measures[i - 1]);
        }

        for n in [5, 40, 300] {
            let gen = ArrayGenerator {
                kind: GeneratorKind::PoissonBernoulli { lambda: 1.0 },
                profile: Profile::Uniform,
                seed: 0,
            };
            let row = generate_row(&gen, n).unwrap();
            assert!((row.infinitesimality_deficit(0.5) - 1.0 / n as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn random_profile_is_seeded() {
        let g = |seed| ArrayGenerator {
            kind: GeneratorKind::CircleTwoPoint { lambda: 1.5, alpha: 1.0 },
            profile: Profile::Random,
            seed,
        };
        assert_eq!(generate_row(&g(3), 20).unwrap(), generate_row(&g(3), 20).unwrap());
        assert_ne!(generate_row(&g(3), 20).unwrap(), generate_row(&g(4), 20).unwrap());
    }

    #[test]
    fn deficits_vanish() {
        let kinds = [
            (GeneratorKind::PoissonBernoulli { lambda: 1.0 }, true),
            (GeneratorKind::CircleTwoPoint { lambda: 1.5, alpha: 1.0 }, true),
            (GeneratorKind::BernoulliVariances, false),
            (GeneratorKind::HalflineTwoPoint { tau: 0.5 }, false),
        ];
        for (kind, strict) in kinds {
            let gen = ArrayGenerator {
                kind,
                profile: Profile::Linear { slope: 0.5 },
                seed: 0,
            };
            let d: Vec<f64> = [8, 64, 512]
                .iter()
                .map(|&n| generate_row(&gen, n).unwrap().infinitesimality_deficit(0.1))
                .collect();
            assert!(d[2] < 1e-2, "{kind:?} {d:?}");
            if strict {
                assert!(d[0] > d[1] && d[1] > d[2], "{kind:?} {d:?}");
            } else {
                assert!(d[0] >= d[1] && d[1] >= d[2], "{kind:?} {d:?}");
            }
        }
    }

    #[test]
    fn f_distance_examples() {
        let p = default_probe();
        let sc = NevanlinnaData::semicircle();
        assert_eq!(f_distance(|z| f_of(&sc, z), |z| f_of(&sc, z), &p).unwrap(), 0.0);
        let (a, b) = (NevanlinnaData::point_mass(0.3), NevanlinnaData::point_mass(-1.2));
        let d = f_distance(|z| f_of(&a, z), |z| f_of(&b, z), &p).unwrap();
        assert!((d - 1.5).abs() < 1e-12);
    }

    #[test]
    fn f_distance_decreases_for_bernoulli_rows() {
        let sc = NevanlinnaData::semicircle();
        let gen = bernoulli(Profile::Linear { slope: 0.5 });
        let d: Vec<f64> = [8, 32, 128]
            .iter()
            .map(|&n| {
                let row = LineRow::new(&generate_row(&gen, n).unwrap()).unwrap();
                f_distance(|z| f_of(&row, z), |z| f_of(&sc, z), &default_probe()).unwrap()
            })
            .collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            generator: bernoulli(Profile::Linear { slope: 0.5 }),
            limit: Limit::Oracle { law: Oracle::Semicircle },
            window: Window {
                a: -1.0,
                b: 1.0,
                floor: 0.01,
            },
            schedule: vec![4, 8, 16],
            grids: Grids {
                points: 101,
                ..Grids::default()
            },
            tolerances: Tolerances::default(),
            seed: 0,
            outputs: Outputs::default(),
        }
    }

    #[test]
    fn report_outputs() {
        let report = run_experiment(&small_config()).unwrap();
        assert!(report.sup_err_decreasing, "{:?}", report.sup_errs());
        let csv = report_csv(&report);
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().next().unwrap(), "n,sup_err,d1_err,d2_err,deficit,excluded");
        let json = serde_json::to_string(&report).unwrap();
        let back: SuperconvReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        let svg = curves_svg(&report.curves);
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains("width=\"800\"") && svg.contains("height=\"500\""));
    }

    #[test]
    fn point_masses_have_no_density() {
        let mut cfg = small_config();
        cfg.generator.kind = GeneratorKind::PointMasses { position: 0.0 };
        let report = run_experiment(&cfg).unwrap();
        assert!(report.all_failed());
        for e in &report.entries {
            assert_eq!(e.excluded, Some(cfg.grids.points));
        }
    }

    #[test]
    fn config_errors() {
        let mut cfg = small_config();
        cfg.limit = Limit::Circle {
            data: HerglotzSigmaDataCircle::new(0.0, vec![(0.0, 0.5)]).unwrap(),
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = small_config();
        cfg.window = Window {
            a: -2.5,
            b: 1.0,
            floor: 0.01,
        };
        assert!(run_experiment(&cfg).is_err());
        assert!(ExperimentConfig::from_json("{\"generator\": 3}").is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = small_config();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn transform_evaluations() {
        let cfg = TransformConfig {
            measure: Measure::atomic(SupportDomain::Line, vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap(),
            transform: TransformName::G,
            points: vec![[0.0, 1.0], [0.0, -0.0]],
        };
        let v = cfg.run();
        let g = v[0].value.unwrap();
        assert!((g[0]).abs() < 1e-15 && (g[1] + 0.5).abs() < 1e-15);
        assert!(v[1].error.is_some());
        assert_eq!(transform_csv(&v).lines().count(), 3);
    }

    #[test]
    fn selftest_passes() {
        for c in selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
