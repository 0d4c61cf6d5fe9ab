//! Analytic curves into `R^{n-1}` and their differential bookkeeping.
//!
//! Components are finite sums of a polynomial and sinusoidal terms
//! `a cos(omega s + theta)`; evaluation and differentiation are exact. The
//! sinusoidal part matters because no nonconstant polynomial curve can lie
//! on a sphere (the leading coefficients of a sum of squares cannot cancel),
//! while sphere-contained test curves are needed throughout.
//!
//! On top of plain evaluation this module provides:
//!
//! - arclength ([`unit_speed_reparam`]) with a cubic-Hermite interpolant;
//! - continuously propagated rotating frames `z(s)` with
//!   `z(s) phi'(s) = |phi'| e_1` ([`FrameContext`]);
//! - polar data `phi(s) = r(s) k(s) e_1` ([`PolarContext`]);
//! - subsphere/hyperplane detection through the null-cone lift
//!   `s -> (1, phi(s), |phi(s)|^2/2)` ([`subsphere_detect`]): the curve lies
//!   in a sphere or affine hyperplane exactly when these lifted samples are
//!   linearly degenerate;
//! - the ratio test `<phi(s), v> / r(s)^2 = const` together with the frame
//!   identity `k E k^{-1} phi' = phi' - 2 r' phi / r` ([`sphere_ode_check`]).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::Polynomial;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("interval must satisfy a < b, got [{0}, {1}]")]
    EmptyInterval(f64, f64),
    #[error("curve has {got} components, expected {expected}")]
    WrongDimension { expected: usize, got: usize },
    #[error("curve is degenerate: speed {0:.3e} below threshold at s = {1}")]
    Degenerate(f64, f64),
    #[error("curve passes through the origin near s = {0} (|phi| = {1:.3e})")]
    OriginCrossing(f64, f64),
    #[error("frame propagation hit antipodal tangents between consecutive nodes")]
    AntipodalFrame,
    #[error("one-dimensional frames exist only for positive first coordinate")]
    NoLineFrame,
    #[error("need at least {expected} samples, got {got}")]
    TooFewSamples { expected: usize, got: usize },
    #[error("wave term references component {0}, but the curve has {1}")]
    BadWaveIndex(usize, usize),
    #[error("curve file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sinusoidal term `amplitude * cos(frequency * s + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Wave {
    fn eval(&self, s: f64) -> f64 {
        self.amplitude * (self.frequency * s + self.phase).cos()
    }

    fn deriv(&self, s: f64) -> f64 {
        -self.amplitude * self.frequency * (self.frequency * s + self.phase).sin()
    }
}

/// One coordinate function: polynomial plus sinusoidal terms.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveComponent {
    pub poly: Polynomial<f64>,
    pub waves: Vec<Wave>,
}

impl CurveComponent {
    pub fn eval(&self, s: f64) -> f64 {
        self.poly.eval(&s) + self.waves.iter().map(|w| w.eval(s)).sum::<f64>()
    }

    pub fn deriv(&self, s: f64) -> f64 {
        self.poly.derivative().eval(&s) + self.waves.iter().map(|w| w.deriv(s)).sum::<f64>()
    }

    pub fn is_polynomial(&self) -> bool {
        self.waves.is_empty()
    }
}

/// Anything that evaluates like a smooth curve on a compact interval.
pub trait CurveEval {
    /// Dimension of the target space (`n - 1`).
    fn ambient_dim(&self) -> usize;

    fn interval(&self) -> (f64, f64);

    fn eval(&self, s: f64) -> DVector<f64>;

    fn velocity(&self, s: f64) -> DVector<f64>;
}

/// A curve with exact polynomial-plus-sinusoid components on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticCurve {
    components: Vec<CurveComponent>,
    interval: (f64, f64),
}

impl AnalyticCurve {
    pub fn new(components: Vec<CurveComponent>, interval: (f64, f64)) -> Result<Self, CurveError> {
        if !interval.0.is_finite() || !interval.1.is_finite() || interval.0 >= interval.1 {
            return Err(CurveError::EmptyInterval(interval.0, interval.1));
        }
        if components.is_empty() {
            return Err(CurveError::WrongDimension { expected: 1, got: 0 });
        }
        Ok(AnalyticCurve {
            components,
            interval,
        })
    }

    /// Purely polynomial curve from ascending coefficient vectors.
    pub fn from_polynomials(coeffs: Vec<Vec<f64>>, interval: (f64, f64)) -> Result<Self, CurveError> {
        let components = coeffs
            .into_iter()
            .map(|c| CurveComponent {
                poly: Polynomial::new(c),
                waves: vec![],
            })
            .collect();
        Self::new(components, interval)
    }

    /// Adds a sinusoidal term to one component.
    pub fn with_wave(mut self, component: usize, wave: Wave) -> Result<Self, CurveError> {
        let dim = self.components.len();
        self.components
            .get_mut(component)
            .ok_or(CurveError::BadWaveIndex(component, dim))?
            .waves
            .push(wave);
        Ok(self)
    }

    /// The circle of given center/radius traversed at unit angular speed.
    pub fn circle(center: [f64; 2], radius: f64, interval: (f64, f64)) -> Result<Self, CurveError> {
        AnalyticCurve::from_polynomials(vec![vec![center[0]], vec![center[1]]], interval)?
            .with_wave(
                0,
                Wave {
                    amplitude: radius,
                    frequency: 1.0,
                    phase: 0.0,
                },
            )?
            .with_wave(
                1,
                Wave {
                    amplitude: radius,
                    frequency: 1.0,
                    phase: -std::f64::consts::FRAC_PI_2,
                },
            )
    }

    pub fn components(&self) -> &[CurveComponent] {
        &self.components
    }

    pub fn is_polynomial(&self) -> bool {
        self.components.iter().all(|c| c.is_polynomial())
    }

    /// Minimum speed over a dense sample; the nondegeneracy flag is
    /// `min_speed > 1e-6`.
    pub fn min_speed(&self, samples: usize) -> (f64, f64) {
        let (a, b) = self.interval;
        let mut worst = (f64::INFINITY, a);
        for j in 0..samples {
            let s = a + (b - a) * j as f64 / (samples - 1) as f64;
            let v = self.velocity(s).norm();
            if v < worst.0 {
                worst = (v, s);
            }
        }
        worst
    }
}

impl CurveEval for AnalyticCurve {
    fn ambient_dim(&self) -> usize {
        self.components.len()
    }

    fn interval(&self) -> (f64, f64) {
        self.interval
    }

    fn eval(&self, s: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.components.len(),
            self.components.iter().map(|c| c.eval(s)),
        )
    }

    fn velocity(&self, s: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.components.len(),
            self.components.iter().map(|c| c.deriv(s)),
        )
    }
}

// ---------------------------------------------------------------------------
// Curve spec files
// ---------------------------------------------------------------------------

/// On-disk description of a curve. `components` holds ascending-degree
/// polynomial coefficients per coordinate; optional `waves` entries attach
/// sinusoidal terms (the only way a curve can lie on a sphere).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    /// Hyperbolic dimension; the curve maps into `R^{n-1}`.
    pub n: usize,
    pub interval: [f64; 2],
    pub components: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub waves: Vec<WaveSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSpec {
    pub component: usize,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl CurveSpec {
    pub fn to_curve(&self) -> Result<AnalyticCurve, CurveError> {
        if self.n < 2 || self.components.len() != self.n - 1 {
            return Err(CurveError::WrongDimension {
                expected: self.n.max(2) - 1,
                got: self.components.len(),
            });
        }
        let mut curve = AnalyticCurve::from_polynomials(
            self.components.clone(),
            (self.interval[0], self.interval[1]),
        )?;
        for w in &self.waves {
            curve = curve.with_wave(
                w.component,
                Wave {
                    amplitude: w.amplitude,
                    frequency: w.frequency,
                    phase: w.phase,
                },
            )?;
        }
        Ok(curve)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("curve specs are always serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self, CurveError> {
        toml::from_str(text).map_err(|e| CurveError::Format(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CurveError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), CurveError> {
        Ok(std::fs::write(path, self.to_toml())?)
    }
}

// ---------------------------------------------------------------------------
// Unit-speed reparametrization
// ---------------------------------------------------------------------------

/// Piecewise cubic-Hermite interpolant of a reparametrized curve, tabulated
/// at equal arclength steps with exact node positions and unit tangents.
#[derive(Debug, Clone)]
pub struct UnitSpeedCurve {
    /// Node positions, `(grid+1) x dim`.
    positions: DMatrix<f64>,
    /// Node derivatives with respect to arclength (unit tangents).
    tangents: DMatrix<f64>,
    /// Total length; the interval is `[0, length]`.
    length: f64,
}

impl UnitSpeedCurve {
    fn cell(&self, t: f64) -> (usize, f64, f64) {
        let cells = self.positions.nrows() - 1;
        let h = self.length / cells as f64;
        let j = ((t / h).floor() as usize).min(cells - 1);
        (j, (t - j as f64 * h) / h, h)
    }
}

impl CurveEval for UnitSpeedCurve {
    fn ambient_dim(&self) -> usize {
        self.positions.ncols()
    }

    fn interval(&self) -> (f64, f64) {
        (0.0, self.length)
    }

    fn eval(&self, t: f64) -> DVector<f64> {
        let (j, u, h) = self.cell(t);
        let (p0, p1) = (self.positions.row(j), self.positions.row(j + 1));
        let (m0, m1) = (self.tangents.row(j), self.tangents.row(j + 1));
        let (u2, u3) = (u * u, u * u * u);
        let out = p0 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + m0 * (h * (u3 - 2.0 * u2 + u))
            + p1 * (-2.0 * u3 + 3.0 * u2)
            + m1 * (h * (u3 - u2));
        out.transpose()
    }

    fn velocity(&self, t: f64) -> DVector<f64> {
        let (j, u, h) = self.cell(t);
        let (p0, p1) = (self.positions.row(j), self.positions.row(j + 1));
        let (m0, m1) = (self.tangents.row(j), self.tangents.row(j + 1));
        let u2 = u * u;
        let out = (p0 * (6.0 * u2 - 6.0 * u) + p1 * (6.0 * u - 6.0 * u2)) / h
            + m0 * (3.0 * u2 - 4.0 * u + 1.0)
            + m1 * (3.0 * u2 - 2.0 * u);
        out.transpose()
    }
}

/// 7-point Gauss-Legendre nodes/weights on [-1, 1].
const GL_NODES: [f64; 7] = [
    -0.9491079123427585,
    -0.7415311855993945,
    -0.4058451513773972,
    0.0,
    0.4058451513773972,
    0.7415311855993945,
    0.9491079123427585,
];
const GL_WEIGHTS: [f64; 7] = [
    0.1294849661688697,
    0.2797053914892766,
    0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892766,
    0.1294849661688697,
];

fn speed<C: CurveEval + ?Sized>(curve: &C, s: f64) -> f64 {
    curve.velocity(s).norm()
}

/// Reparametrizes by arclength onto `[0, L]`, tabulating `grid` Hermite
/// cells. Requires the nondegeneracy flag (speed bounded away from zero).
pub fn unit_speed_reparam(
    curve: &AnalyticCurve,
    grid: usize,
) -> Result<UnitSpeedCurve, CurveError> {
    let grid = grid.max(16);
    let (a, b) = curve.interval();
    let (min_speed, at) = curve.min_speed(4 * grid + 1);
    if min_speed <= 1e-6 {
        return Err(CurveError::Degenerate(min_speed, at));
    }
    // Cumulative arclength over fine panels, Gauss-Legendre per panel.
    let panels = (8 * grid).max(1024);
    let dt = (b - a) / panels as f64;
    let mut cumulative = Vec::with_capacity(panels + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for p in 0..panels {
        let left = a + p as f64 * dt;
        let mid = left + dt / 2.0;
        let half = dt / 2.0;
        let mut panel = 0.0;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            panel += w * speed(curve, mid + half * x);
        }
        acc += panel * half;
        cumulative.push(acc);
    }
    let length = acc;
    // Invert arclength at equally spaced targets with Newton + bisection.
    let dim = curve.ambient_dim();
    let mut positions = DMatrix::zeros(grid + 1, dim);
    let mut tangents = DMatrix::zeros(grid + 1, dim);
    for k in 0..=grid {
        let target = length * k as f64 / grid as f64;
        let idx = cumulative.partition_point(|&c| c < target).min(panels);
        let (mut lo, mut hi) = ((idx.max(1) - 1) as f64, idx as f64);
        let mut s = a + dt * (lo + hi) / 2.0;
        let arc_at = |s: f64| -> f64 {
            // cumulative up to the containing panel plus a partial panel.
            let p = (((s - a) / dt).floor() as usize).min(panels - 1);
            let left = a + p as f64 * dt;
            let half = (s - left) / 2.0;
            let mid = left + half;
            let mut partial = 0.0;
            for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
                partial += w * speed(curve, mid + half * x);
            }
            cumulative[p] + partial * half
        };
        for _ in 0..60 {
            let err = arc_at(s) - target;
            if err.abs() < 1e-13 * length.max(1.0) {
                break;
            }
            if err > 0.0 {
                hi = (s - a) / dt;
            } else {
                lo = (s - a) / dt;
            }
            let newton = s - err / speed(curve, s);
            s = if newton > a + lo * dt && newton < a + hi * dt {
                newton
            } else {
                a + dt * (lo + hi) / 2.0
            };
        }
        let s = s.clamp(a, b);
        let vel = curve.velocity(s);
        let sp = vel.norm();
        positions.row_mut(k).copy_from(&curve.eval(s).transpose());
        tangents.row_mut(k).copy_from(&(vel / sp).transpose());
    }
    Ok(UnitSpeedCurve {
        positions,
        tangents,
        length,
    })
}

// ---------------------------------------------------------------------------
// Rotating frames and polar data
// ---------------------------------------------------------------------------

/// Rotation with `R a = b` for unit vectors `a, b`, acting in their common
/// plane and fixing its orthocomplement.
pub fn rotation_between(a: &DVector<f64>, b: &DVector<f64>) -> Result<DMatrix<f64>, CurveError> {
    let m = a.len();
    let c = a.dot(b);
    let v = b - c * a;
    let s = v.norm();
    if s < 1e-13 {
        if c > 0.0 {
            return Ok(DMatrix::identity(m, m));
        }
        return Err(CurveError::AntipodalFrame);
    }
    let vh = v / s;
    Ok(DMatrix::identity(m, m) + (c - 1.0) * (a * a.transpose() + &vh * vh.transpose())
        + s * (&vh * a.transpose() - a * vh.transpose()))
}

fn initial_frame(target: &DVector<f64>) -> Result<DMatrix<f64>, CurveError> {
    let m = target.len();
    if m == 1 {
        if target[0] > 0.0 {
            return Ok(DMatrix::identity(1, 1));
        }
        return Err(CurveError::NoLineFrame);
    }
    crate::lingroup::rotation_taking_e1(target.as_slice()).ok_or(CurveError::NoLineFrame)
}

/// Continuous frame `z(s)` with `z(s) phi'(s)/|phi'(s)| = e_1`, propagated
/// between evaluations by the minimal rotation taking the previous unit
/// tangent to the current one. One context serves one sweep through the
/// parameter; contexts are not shared between concurrent consumers.
#[derive(Debug, Default)]
pub struct FrameContext {
    prev: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl FrameContext {
    pub fn new() -> Self {
        FrameContext { prev: None }
    }

    pub fn frame_z<C: CurveEval + ?Sized>(
        &mut self,
        curve: &C,
        s: f64,
    ) -> Result<DMatrix<f64>, CurveError> {
        let vel = curve.velocity(s);
        let sp = vel.norm();
        if sp <= 1e-9 {
            return Err(CurveError::Degenerate(sp, s));
        }
        let unit = vel / sp;
        let z = match &self.prev {
            None => {
                let k = initial_frame(&unit)?;
                // k e_1 = unit, so z = k^T sends unit to e_1.
                k.transpose()
            }
            Some((prev_unit, prev_z)) => {
                let rot = rotation_between(prev_unit, &unit)?;
                prev_z * rot.transpose()
            }
        };
        self.prev = Some((unit, z.clone()));
        Ok(z)
    }
}

/// Polar data `phi(s) = r(s) k(s) e_1` with a continuously propagated
/// rotation `k(s)`; same sweep discipline as [`FrameContext`].
#[derive(Debug, Default)]
pub struct PolarContext {
    prev: Option<(DVector<f64>, DMatrix<f64>)>,
}

/// One evaluation of the polar decomposition.
#[derive(Debug, Clone)]
pub struct PolarData {
    pub r: f64,
    pub k: DMatrix<f64>,
}

impl PolarContext {
    pub fn new() -> Self {
        PolarContext { prev: None }
    }

    pub fn polar<C: CurveEval + ?Sized>(
        &mut self,
        curve: &C,
        s: f64,
    ) -> Result<PolarData, CurveError> {
        let pos = curve.eval(s);
        let r = pos.norm();
        if r <= 1e-6 {
            return Err(CurveError::OriginCrossing(s, r));
        }
        let unit = pos / r;
        let k = match &self.prev {
            None => initial_frame(&unit)?,
            Some((prev_unit, prev_k)) => {
                let rot = rotation_between(prev_unit, &unit)?;
                rot * prev_k
            }
        };
        self.prev = Some((unit, k.clone()));
        Ok(PolarData { r, k })
    }
}

// ---------------------------------------------------------------------------
// Subsphere detection and the constancy test
// ---------------------------------------------------------------------------

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SubsphereReport {
    pub contained: bool,
    /// Unit null direction of the lifted sample matrix, sign-normalized,
    /// present when `contained`.
    pub witness: Option<DVector<f64>>,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
}

/// Decoded geometric meaning of a subsphere witness `(alpha, b, c)`,
/// representing the relation `alpha + <b, x> + c |x|^2 / 2 = 0`.
#[derive(Debug, Clone)]
pub enum WitnessShape {
    /// `<normal, x> = offset` with a unit normal.
    Hyperplane { normal: DVector<f64>, offset: f64 },
    /// `|x - center| = radius`.
    Sphere { center: DVector<f64>, radius: f64 },
}

pub fn decode_witness(witness: &DVector<f64>) -> WitnessShape {
    let dim = witness.len() - 2;
    let alpha = witness[0];
    let b = witness.rows(1, dim).clone_owned();
    let c = witness[witness.len() - 1];
    if c.abs() <= RANK_TOL * witness.amax() {
        let scale = b.norm();
        WitnessShape::Hyperplane {
            normal: &b / scale,
            offset: -alpha / scale,
        }
    } else {
        let center = -&b / c;
        let radius_sq = center.norm_squared() - 2.0 * alpha / c;
        WitnessShape::Sphere {
            center,
            radius: radius_sq.max(0.0).sqrt(),
        }
    }
}

/// Lifts uniform samples to the null cone and tests for a linear relation
/// among `1, x, |x|^2/2`: rank deficiency is exactly containment in a
/// sphere or affine hyperplane.
pub fn subsphere_detect<C: CurveEval + ?Sized>(
    curve: &C,
    samples: usize,
) -> Result<SubsphereReport, CurveError> {
    let dim = curve.ambient_dim();
    let lift_dim = dim + 2;
    if samples < dim + 3 {
        return Err(CurveError::TooFewSamples {
            expected: dim + 3,
            got: samples,
        });
    }
    let (a, b) = curve.interval();
    let mut mat = DMatrix::zeros(samples, lift_dim);
    for j in 0..samples {
        let s = a + (b - a) * j as f64 / (samples - 1) as f64;
        let x = curve.eval(s);
        mat[(j, 0)] = 1.0;
        for i in 0..dim {
            mat[(j, i + 1)] = x[i];
        }
        mat[(j, lift_dim - 1)] = x.norm_squared() / 2.0;
    }
    let svd = mat.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let sigma = &svd.singular_values;
    let (mut smin, mut arg) = (f64::INFINITY, 0usize);
    let mut smax = 0.0f64;
    for (i, &s) in sigma.iter().enumerate() {
        if s < smin {
            smin = s;
            arg = i;
        }
        smax = smax.max(s);
    }
    let contained = smin <= RANK_TOL * smax;
    let witness = contained.then(|| {
        let mut w = v_t.row(arg).transpose();
        let pivot = w
            .iter()
            .find(|v| v.abs() > 1e-10)
            .copied()
            .unwrap_or(1.0);
        if pivot < 0.0 {
            w = -w;
        }
        w
    });
    Ok(SubsphereReport {
        contained,
        witness,
        min_singular_value: smin,
        max_singular_value: smax,
    })
}

#[derive(Debug, Clone)]
pub struct SphereOdeReport {
    pub is_constant: bool,
    /// Mean of `<phi, v>/r^2` over the samples.
    pub c: f64,
    /// Spread `max - min` of the ratio.
    pub max_deviation: f64,
    /// `max_s |<phi'(s) - 2 r'(s) phi(s)/r(s), v>|`, only when constant.
    pub derivative_residual: Option<f64>,
    /// `max_s |k E k^{-1} phi' - (phi' - 2 r' phi / r)|` over the samples.
    pub frame_identity_residual: f64,
}

/// Tests constancy of `<phi(s), v> / r(s)^2` and the rotating-frame
/// identity `k(s) E k(s)^{-1} phi'(s) = phi'(s) - 2 r'(s) phi(s) / r(s)`,
/// `E = diag(-1, 1, ..., 1)`.
pub fn sphere_ode_check<C: CurveEval + ?Sized>(
    curve: &C,
    v: &DVector<f64>,
    samples: usize,
) -> Result<SphereOdeReport, CurveError> {
    let dim = curve.ambient_dim();
    assert_eq!(v.len(), dim);
    let (a, b) = curve.interval();
    let mut polar = PolarContext::new();
    let mut e = DMatrix::identity(dim, dim);
    e[(0, 0)] = -1.0;
    let mut ratios = Vec::with_capacity(samples);
    let mut frame_residual = 0.0f64;
    let mut lhs_terms = Vec::with_capacity(samples);
    for j in 0..samples {
        let s = a + (b - a) * j as f64 / (samples - 1) as f64;
        let data = polar.polar(curve, s)?;
        let pos = curve.eval(s);
        let vel = curve.velocity(s);
        let r_dot = pos.dot(&vel) / data.r;
        let rhs = &vel - (2.0 * r_dot / data.r) * &pos;
        let lhs = &data.k * &e * data.k.transpose() * &vel;
        frame_residual = frame_residual.max((lhs - &rhs).amax());
        ratios.push(pos.dot(v) / (data.r * data.r));
        lhs_terms.push(rhs.dot(v).abs());
    }
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &x in &ratios {
        lo = lo.min(x);
        hi = hi.max(x);
        sum += x;
    }
    let mean = sum / ratios.len() as f64;
    let is_constant = (hi - lo) <= 1e-8 * (1.0 + mean.abs());
    let derivative_residual =
        is_constant.then(|| lhs_terms.iter().fold(0.0f64, |acc, &x| acc.max(x)));
    Ok(SphereOdeReport {
        is_constant,
        c: mean,
        max_deviation: hi - lo,
        derivative_residual,
        frame_identity_residual: frame_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn line_2s() -> AnalyticCurve {
        AnalyticCurve::from_polynomials(vec![vec![0.0, 2.0]], (0.0, 1.0)).unwrap()
    }

    #[test]
    fn eval_and_velocity_are_exact() {
        let c = AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]], (0.0, 1.0))
            .unwrap();
        let p = c.eval(0.5);
        assert_eq!(p.as_slice(), &[0.5, 0.25]);
        let v = c.velocity(0.5);
        assert_eq!(v.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn circle_builder_parametrizes_the_circle() {
        let c = AnalyticCurve::circle([0.3, -0.2], 2.0, (0.0, TAU)).unwrap();
        for j in 0..10 {
            let s = TAU * j as f64 / 10.0;
            let p = c.eval(s);
            let d = ((p[0] - 0.3).powi(2) + (p[1] + 0.2).powi(2)).sqrt();
            assert!((d - 2.0).abs() < 1e-12);
        }
        // velocity matches (-(2 sin s), 2 cos s)
        let v = c.velocity(0.7);
        assert!((v[0] + 2.0 * 0.7f64.sin()).abs() < 1e-12);
        assert!((v[1] - 2.0 * 0.7f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn unit_speed_constant_speed_line() {
        let psi = unit_speed_reparam(&line_2s(), 64).unwrap();
        assert!((psi.interval().1 - 2.0).abs() < 1e-10);
        for j in 0..=20 {
            let t = 2.0 * j as f64 / 20.0;
            assert!((psi.eval(t)[0] - t).abs() < 1e-9);
            assert!((psi.velocity(t)[0] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn unit_speed_circle_halves_the_angle() {
        let c = AnalyticCurve::circle([0.0, 0.0], 2.0, (0.0, 1.0)).unwrap();
        let psi = unit_speed_reparam(&c, 256).unwrap();
        assert!((psi.interval().1 - 2.0).abs() < 1e-9);
        for j in 0..=10 {
            let t = 2.0 * j as f64 / 10.0;
            let p = psi.eval(t);
            assert!((p[0] - 2.0 * (t / 2.0).cos()).abs() < 1e-7);
            assert!((p[1] - 2.0 * (t / 2.0).sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn unit_speed_parabola_has_unit_tangents() {
        let c =
            AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]], (0.0, 1.0))
                .unwrap();
        let psi = unit_speed_reparam(&c, 400).unwrap();
        let (a, b) = psi.interval();
        for j in 0..1000 {
            let t = a + (b - a) * j as f64 / 999.0;
            let sp = psi.velocity(t).norm();
            assert!((sp - 1.0).abs() < 1e-6, "speed {} at {}", sp, t);
        }
        // Length preserved: exact arclength of (s, s^2) on [0,1].
        let exact = 0.5 * 5.0f64.sqrt() + 0.25 * (2.0 + 5.0f64.sqrt()).ln();
        assert!((b - exact).abs() < 1e-8 * exact);
    }

    #[test]
    fn degenerate_curve_is_rejected() {
        // phi(s) = (s^2, 0) has zero velocity at 0.
        let c =
            AnalyticCurve::from_polynomials(vec![vec![0.0, 0.0, 1.0], vec![0.0]], (0.0, 1.0))
                .unwrap();
        assert!(matches!(
            unit_speed_reparam(&c, 64),
            Err(CurveError::Degenerate(_, _))
        ));
    }

    #[test]
    fn frame_z_identity_for_axis_motion() {
        let c = AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0], vec![0.5]], (0.0, 1.0)).unwrap();
        let mut ctx = FrameContext::new();
        let z = ctx.frame_z(&c, 0.3).unwrap();
        assert!((z - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn frame_z_rotates_by_minus_theta() {
        // phi'(s) = (cos s, sin s) after unit-speed circle parametrization.
        let c = AnalyticCurve::circle([0.0, 0.0], 1.0, (0.0, TAU)).unwrap();
        let mut ctx = FrameContext::new();
        // At s, tangent = (-sin s, cos s) = angle s + pi/2.
        let mut max_err = 0.0f64;
        for j in 0..=100 {
            let s = 2.0 * j as f64 / 100.0;
            let z = ctx.frame_z(&c, s).unwrap();
            let theta = s + FRAC_PI_2;
            // z must rotate by -theta.
            let expect =
                DMatrix::from_row_slice(2, 2, &[theta.cos(), theta.sin(), -theta.sin(), theta.cos()]);
            max_err = max_err.max((z - expect).amax());
        }
        assert!(max_err < 1e-8, "frame drift {max_err}");
    }

    #[test]
    fn frame_z_maps_tangent_to_e1_and_stays_continuous() {
        let c = AnalyticCurve::from_polynomials(
            vec![vec![0.0, 1.0, 0.4], vec![0.0, 0.5, 0.0, 0.3]],
            (0.0, 1.0),
        )
        .unwrap();
        let mut ctx = FrameContext::new();
        let mut prev: Option<DMatrix<f64>> = None;
        let h = 1e-4;
        for j in 0..=2000 {
            let s = j as f64 * h * 5.0;
            if s > 1.0 {
                break;
            }
            let z = ctx.frame_z(&c, s).unwrap();
            let vel = c.velocity(s);
            let mapped = &z * &vel / vel.norm();
            assert!((mapped[0] - 1.0).abs() < 1e-8);
            assert!(mapped[1].abs() < 1e-8);
            if let Some(p) = prev {
                assert!((&z - &p).amax() <= 10.0 * 5.0 * h, "continuity violated");
            }
            prev = Some(z);
        }
    }

    #[test]
    fn polar_examples() {
        let c = AnalyticCurve::from_polynomials(vec![vec![1.0], vec![0.0]], (0.0, 1.0)).unwrap();
        let mut ctx = PolarContext::new();
        let d = ctx.polar(&c, 0.5).unwrap();
        assert!((d.r - 1.0).abs() < 1e-12);
        assert!((d.k - DMatrix::identity(2, 2)).amax() < 1e-12);

        let circle = AnalyticCurve::circle([0.0, 0.0], 2.0, (0.0, TAU)).unwrap();
        let mut ctx = PolarContext::new();
        for j in 0..=50 {
            let s = TAU * j as f64 / 50.0 * 0.9;
            let d = ctx.polar(&circle, s).unwrap();
            assert!((d.r - 2.0).abs() < 1e-10);
            let expect = DMatrix::from_row_slice(2, 2, &[s.cos(), -s.sin(), s.sin(), s.cos()]);
            assert!((d.k - expect).amax() < 1e-8);
        }
    }

    #[test]
    fn polar_reconstructs_random_cubic() {
        let c = AnalyticCurve::from_polynomials(
            vec![vec![2.0, 0.3, -0.2, 0.1], vec![1.0, -0.4, 0.25, 0.05]],
            (0.0, 1.0),
        )
        .unwrap();
        let mut ctx = PolarContext::new();
        for j in 0..1000 {
            let s = j as f64 / 999.0;
            let d = ctx.polar(&c, s).unwrap();
            let e1 = DVector::from_column_slice(&[1.0, 0.0]);
            let rebuilt = d.r * &d.k * e1;
            assert!((rebuilt - c.eval(s)).amax() < 1e-9);
        }
    }

    #[test]
    fn polar_rejects_origin_crossing() {
        let c = AnalyticCurve::from_polynomials(vec![vec![-0.5, 1.0], vec![0.0]], (0.0, 1.0)).unwrap();
        let mut ctx = PolarContext::new();
        assert!(matches!(
            ctx.polar(&c, 0.5),
            Err(CurveError::OriginCrossing(_, _))
        ));
    }

    #[test]
    fn subsphere_detects_the_unit_circle() {
        let c = AnalyticCurve::circle([0.0, 0.0], 1.0, (0.0, TAU)).unwrap();
        let rep = subsphere_detect(&c, 200).unwrap();
        assert!(rep.contained);
        match decode_witness(rep.witness.as_ref().unwrap()) {
            WitnessShape::Sphere { center, radius } => {
                assert!(center.amax() < 1e-8);
                assert!((radius - 1.0).abs() < 1e-8);
            }
            WitnessShape::Hyperplane { .. } => panic!("expected a sphere"),
        }
    }

    #[test]
    fn subsphere_detects_a_coordinate_line() {
        let c = AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0], vec![0.0]], (0.0, 1.0)).unwrap();
        let rep = subsphere_detect(&c, 50).unwrap();
        assert!(rep.contained);
        match decode_witness(rep.witness.as_ref().unwrap()) {
            WitnessShape::Hyperplane { normal, offset } => {
                assert!((normal[1].abs() - 1.0).abs() < 1e-9);
                assert!(normal[0].abs() < 1e-9);
                assert!(offset.abs() < 1e-9);
            }
            WitnessShape::Sphere { .. } => panic!("expected a hyperplane"),
        }
    }

    #[test]
    fn subsphere_passes_generic_parabola() {
        let c =
            AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]], (0.0, 1.0))
                .unwrap();
        let rep = subsphere_detect(&c, 200).unwrap();
        assert!(!rep.contained);
        assert!(rep.min_singular_value > 1e-5 * rep.max_singular_value);
    }

    #[test]
    fn subsphere_sample_guard() {
        let c = line_2s();
        assert!(matches!(
            subsphere_detect(&c, 2),
            Err(CurveError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn ratio_test_on_circle_through_origin() {
        // Circle of center (1, 0), radius 1, avoiding the origin-touching arc.
        let c = AnalyticCurve::circle([1.0, 0.0], 1.0, (PI + 0.4, PI + TAU - 0.4)).unwrap();
        let v = DVector::from_column_slice(&[1.0, 0.0]);
        let rep = sphere_ode_check(&c, &v, 400).unwrap();
        assert!(rep.is_constant);
        assert!((rep.c - 0.5).abs() < 1e-8);
        assert!(rep.derivative_residual.unwrap() < 1e-8);
        assert!(rep.frame_identity_residual < 1e-8);
    }

    #[test]
    fn ratio_test_zero_vector_and_nonconstant_case() {
        let para =
            AnalyticCurve::from_polynomials(vec![vec![0.2, 1.0], vec![0.1, 0.0, 1.0]], (0.0, 1.0))
                .unwrap();
        let zero = DVector::from_column_slice(&[0.0, 0.0]);
        let rep = sphere_ode_check(&para, &zero, 100).unwrap();
        assert!(rep.is_constant);
        assert!(rep.c.abs() < 1e-15);

        let v = DVector::from_column_slice(&[1.0, 0.0]);
        let rep = sphere_ode_check(&para, &v, 100).unwrap();
        assert!(!rep.is_constant);
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn spec_round_trip_is_bit_exact() {
        let spec = CurveSpec {
            n: 3,
            interval: [0.0, 1.0 + 1e-13],
            components: vec![vec![0.1, -0.333333333333333314, 2.5e-17], vec![7.0]],
            waves: vec![WaveSpec {
                component: 1,
                amplitude: 0.30000000000000004,
                frequency: 1.0,
                phase: -FRAC_PI_2,
            }],
        };
        let text = spec.to_toml();
        let back = CurveSpec::from_toml(&text).unwrap();
        assert_eq!(spec, back);
        // And a second serialization is byte-identical.
        assert_eq!(text, back.to_toml());
    }

    #[test]
    fn spec_rejects_unknown_fields_and_bad_shape() {
        assert!(CurveSpec::from_toml("n = 2\ninterval = [0.0, 1.0]\ncomponents = [[0.0]]\nbogus = 1\n").is_err());
        let bad = CurveSpec {
            n: 3,
            interval: [0.0, 1.0],
            components: vec![vec![0.0]],
            waves: vec![],
        };
        assert!(bad.to_curve().is_err());
        let empty = CurveSpec {
            n: 2,
            interval: [1.0, 1.0],
            components: vec![vec![0.0]],
            waves: vec![],
        };
        assert!(empty.to_curve().is_err());
    }
}
