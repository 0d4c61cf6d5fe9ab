//! Desk-scale Monte Carlo experiments on the modular surface
//! `SL(2,R)/SL(2,Z)` and the Picard orbifold `SL(2,C)/SL(2,Z[i])`.
//!
//! The rank-one groups are handled natively as 2x2 matrices; the dictionary
//! to the `SO(n,1)` model is `u(x) = [[1,x],[0,1]]` (reading vectors in
//! `R^2` as complex numbers for `n = 3`), `a_t = diag(e^{t/2}, e^{-t/2})`,
//! and rotations `m = diag(e^{i psi/2}, e^{-i psi/2})`.
//!
//! A coset `M Gamma` is realized on the symmetric-space quotient through
//! `M Gamma -> Gamma \ (M^{-1} o)` with basepoint `o = i` (resp. `(0, 1)`):
//! inverting the word is what makes the value independent of the lattice
//! representative, and it is also why left translation by `a_t` lands the
//! expanding horocycle at height `e^{-t}` where it equidistributes. All test
//! functions depend on the model coordinates only, so they are insensitive
//! to the compact factor lost by this projection.
//!
//! Sampling is batched and seeded; estimates are bit-reproducible for a
//! fixed seed regardless of thread count (see [`crate::exec`]).

use nalgebra::{Complex, Matrix2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curves::{rotation_between, CurveError, CurveEval};
use crate::exec::{self, BatchStats, BATCH_SIZE};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex<f64>;
pub type Mat2 = Matrix2<C64>;

/// Slack for fundamental-domain membership tests.
pub const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum HomsimError {
    #[error("matrix is not unimodular: |det - 1| = {0:.3e}")]
    NotUnimodular(f64),
    #[error("half-plane model requires real matrices (imaginary part {0:.3e})")]
    ComplexInRealModel(f64),
    #[error("Mobius denominator underflow: |cz+d| = {0:.3e}")]
    DenominatorUnderflow(f64),
    #[error("reduction did not terminate within {0} steps")]
    ReductionCap(usize),
    #[error("point/model mismatch")]
    ModelMismatch,
    #[error("test function support must lie inside the fundamental domain interior")]
    BadSupport,
    #[error("flow parameter |t| = {0} exceeds the guard 60")]
    FlowOverflow(f64),
    #[error("need at least {expected} samples, got {got}")]
    TooFewSamples { expected: u64, got: u64 },
    #[error("quadrature did not converge: relative change {0:.3e} on grid doubling")]
    QuadratureNotConverged(f64),
    #[error("curve has {got} components but the model needs {expected}")]
    CurveDimension { expected: usize, got: usize },
    #[error("parameter out of range: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// Which rank-one quotient an experiment runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    /// Upper half-plane mod `SL(2,Z)`.
    Sl2R,
    /// Upper half-space mod `SL(2,Z[i])`.
    Sl2C,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Sl2R => "sl2r",
            Model::Sl2C => "sl2c",
        }
    }

    pub fn parse(s: &str) -> Result<Self, HomsimError> {
        match s {
            "sl2r" => Ok(Model::Sl2R),
            "sl2c" => Ok(Model::Sl2C),
            other => Err(HomsimError::BadParameter(format!("unknown model {other}"))),
        }
    }

    /// Dimension of curves feeding the unipotent (`n - 1`).
    pub fn curve_dim(self) -> usize {
        match self {
            Model::Sl2R => 1,
            Model::Sl2C => 2,
        }
    }

    /// Number of model coordinates test functions see.
    pub fn coord_dim(self) -> usize {
        match self {
            Model::Sl2R => 2,
            Model::Sl2C => 3,
        }
    }

    pub fn basepoint(self) -> ModelPoint {
        match self {
            Model::Sl2R => ModelPoint::HalfPlane {
                z: C64::new(0.0, 1.0),
                reduced: true,
            },
            Model::Sl2C => ModelPoint::HalfSpace {
                z: C64::new(0.0, 0.0),
                h: 1.0,
                reduced: true,
            },
        }
    }
}

/// A point of the symmetric space, carrying whether it has been reduced
/// into the fundamental domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelPoint {
    HalfPlane { z: C64, reduced: bool },
    HalfSpace { z: C64, h: f64, reduced: bool },
}

impl ModelPoint {
    pub fn model(&self) -> Model {
        match self {
            ModelPoint::HalfPlane { .. } => Model::Sl2R,
            ModelPoint::HalfSpace { .. } => Model::Sl2C,
        }
    }

    /// Height coordinate (`Im z` resp. `h`).
    pub fn height(&self) -> f64 {
        match self {
            ModelPoint::HalfPlane { z, .. } => z.im,
            ModelPoint::HalfSpace { h, .. } => *h,
        }
    }

    /// Coordinates seen by test functions: `(x, y)` resp. `(x, y, h)`.
    pub fn coords(&self) -> [f64; 3] {
        match self {
            ModelPoint::HalfPlane { z, .. } => [z.re, z.im, 0.0],
            ModelPoint::HalfSpace { z, h, .. } => [z.re, z.im, *h],
        }
    }

    pub fn is_reduced(&self) -> bool {
        match self {
            ModelPoint::HalfPlane { reduced, .. } | ModelPoint::HalfSpace { reduced, .. } => {
                *reduced
            }
        }
    }

    /// Membership in the fundamental domain, up to `DOMAIN_TOL` slack.
    pub fn in_domain(&self) -> bool {
        match self {
            ModelPoint::HalfPlane { z, .. } => {
                z.re.abs() <= 0.5 + DOMAIN_TOL && z.norm_sqr() >= 1.0 - DOMAIN_TOL
            }
            ModelPoint::HalfSpace { z, h, .. } => {
                z.re.abs() <= 0.5 + DOMAIN_TOL
                    && z.im >= -DOMAIN_TOL
                    && z.im <= 0.5 + DOMAIN_TOL
                    && z.norm_sqr() + h * h >= 1.0 - DOMAIN_TOL
            }
        }
    }

    pub fn max_diff(&self, other: &ModelPoint) -> f64 {
        let a = self.coords();
        let b = other.coords();
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

fn det2(m: &Mat2) -> C64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Exact inverse of a unimodular 2x2 matrix (the adjugate).
pub fn inv2(m: &Mat2) -> Mat2 {
    Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)])
}

pub fn mat2_real(a: f64, b: f64, c: f64, d: f64) -> Mat2 {
    Mat2::new(
        C64::new(a, 0.0),
        C64::new(b, 0.0),
        C64::new(c, 0.0),
        C64::new(d, 0.0),
    )
}

fn check_unimodular(g: &Mat2) -> Result<(), HomsimError> {
    let err = (det2(g) - C64::new(1.0, 0.0)).norm();
    if err > 1e-9 {
        return Err(HomsimError::NotUnimodular(err));
    }
    Ok(())
}

/// Left action of a unimodular matrix on a model point: fractional-linear
/// on the half-plane, quaternionic on the half-space.
pub fn mobius_apply(g: &Mat2, p: &ModelPoint) -> Result<ModelPoint, HomsimError> {
    check_unimodular(g)?;
    let (a, b, c, d) = (g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]);
    match *p {
        ModelPoint::HalfPlane { z, .. } => {
            let im_max = [a, b, c, d].iter().map(|w| w.im.abs()).fold(0.0, f64::max);
            if im_max > 1e-9 {
                return Err(HomsimError::ComplexInRealModel(im_max));
            }
            let den = c * z + d;
            if den.norm_sqr() < 1e-280 {
                return Err(HomsimError::DenominatorUnderflow(den.norm()));
            }
            Ok(ModelPoint::HalfPlane {
                z: (a * z + b) / den,
                reduced: false,
            })
        }
        ModelPoint::HalfSpace { z, h, .. } => {
            let cz_d = c * z + d;
            let den = cz_d.norm_sqr() + c.norm_sqr() * h * h;
            if den < 1e-280 {
                return Err(HomsimError::DenominatorUnderflow(den.sqrt()));
            }
            let z_new = ((a * z + b) * cz_d.conj() + a * c.conj() * h * h) / den;
            Ok(ModelPoint::HalfSpace {
                z: z_new,
                h: h / den,
                reduced: false,
            })
        }
    }
}

const REDUCE_CAP: usize = 10_000;

/// Reduces a point into the fundamental domain by translation rounding,
/// unit normalization (`n = 3`), and inversion. Returns the reduced point
/// and the number of elementary moves applied.
pub fn reduce(p: &ModelPoint) -> Result<(ModelPoint, u32), HomsimError> {
    let mut word = 0u32;
    match *p {
        ModelPoint::HalfPlane { z, .. } => {
            let mut z = z;
            for _ in 0..REDUCE_CAP {
                let shift = z.re.round();
                if shift != 0.0 {
                    z.re -= shift;
                    word += 1;
                }
                if z.norm_sqr() >= 1.0 - DOMAIN_TOL {
                    return Ok((ModelPoint::HalfPlane { z, reduced: true }, word));
                }
                // inversion z -> -1/z
                z = -z.conj() / z.norm_sqr();
                word += 1;
            }
            Err(HomsimError::ReductionCap(REDUCE_CAP))
        }
        ModelPoint::HalfSpace { z, h, .. } => {
            let mut z = z;
            let mut h = h;
            for _ in 0..REDUCE_CAP {
                let (sr, si) = (z.re.round(), z.im.round());
                if sr != 0.0 || si != 0.0 {
                    z -= C64::new(sr, si);
                    word += 1;
                }
                if z.im < -DOMAIN_TOL {
                    // unit move diag(i, -i): z -> -z
                    z = -z;
                    word += 1;
                    continue;
                }
                if z.norm_sqr() + h * h >= 1.0 - DOMAIN_TOL {
                    return Ok((ModelPoint::HalfSpace { z, h, reduced: true }, word));
                }
                // inversion by [[0,-1],[1,0]]: z -> -conj(z)/D, h -> h/D
                let den = z.norm_sqr() + h * h;
                z = -z.conj() / den;
                h /= den;
                word += 1;
            }
            Err(HomsimError::ReductionCap(REDUCE_CAP))
        }
    }
}

/// The point of the symmetric-space quotient attached to the coset of a
/// group word: `M -> M^{-1} . o`, unreduced.
pub fn orbit_point(model: Model, word: &Mat2) -> Result<ModelPoint, HomsimError> {
    check_unimodular(word)?;
    mobius_apply(&inv2(word), &model.basepoint())
}

/// Flow matrix `a_t u(phi(s)) g`.
pub fn flow_matrix<C: CurveEval + ?Sized>(
    model: Model,
    curve: &C,
    s: f64,
    t: f64,
    base: &Mat2,
) -> Result<Mat2, HomsimError> {
    if t.abs() > 60.0 {
        return Err(HomsimError::FlowOverflow(t.abs()));
    }
    if curve.ambient_dim() != model.curve_dim() {
        return Err(HomsimError::CurveDimension {
            expected: model.curve_dim(),
            got: curve.ambient_dim(),
        });
    }
    let x = curve.eval(s);
    let w = match model {
        Model::Sl2R => C64::new(x[0], 0.0),
        Model::Sl2C => C64::new(x[0], x[1]),
    };
    let half = (t / 2.0).exp();
    let a_t = Mat2::new(
        C64::new(half, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(1.0 / half, 0.0),
    );
    let u = Mat2::new(
        C64::new(1.0, 0.0),
        w,
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
    );
    Ok(a_t * u * base)
}

/// Reduced orbit point of `a_t u(phi(s)) g`.
pub fn flow_point<C: CurveEval + ?Sized>(
    model: Model,
    curve: &C,
    s: f64,
    t: f64,
    base: &Mat2,
) -> Result<ModelPoint, HomsimError> {
    let m = flow_matrix(model, curve, s, t, base)?;
    let (p, _) = reduce(&orbit_point(model, &m)?)?;
    Ok(p)
}

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

/// Compactly supported test function on the fundamental domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    /// Tensor product of `exp(1 - 1/(1-u^2))` bumps in each coordinate.
    Bump {
        id: String,
        center: Vec<f64>,
        widths: Vec<f64>,
    },
    /// Constant function; integrates to its value. Testing convenience.
    Constant { id: String, value: f64 },
}

fn bump1(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

impl TestFunction {
    pub fn id(&self) -> &str {
        match self {
            TestFunction::Bump { id, .. } | TestFunction::Constant { id, .. } => id,
        }
    }

    pub fn eval(&self, p: &ModelPoint) -> f64 {
        match self {
            TestFunction::Constant { value, .. } => *value,
            TestFunction::Bump { center, widths, .. } => {
                let coords = p.coords();
                let mut acc = 1.0;
                for i in 0..center.len() {
                    acc *= bump1((coords[i] - center[i]) / widths[i]);
                    if acc == 0.0 {
                        return 0.0;
                    }
                }
                acc
            }
        }
    }

    /// Checks the support box sits strictly inside the fundamental domain.
    pub fn validate_support(&self, model: Model) -> Result<(), HomsimError> {
        let (center, widths) = match self {
            TestFunction::Constant { .. } => return Ok(()),
            TestFunction::Bump { center, widths, .. } => (center, widths),
        };
        if center.len() != model.coord_dim() || widths.len() != model.coord_dim() {
            return Err(HomsimError::BadSupport);
        }
        if widths.iter().any(|&w| w <= 0.0) {
            return Err(HomsimError::BadSupport);
        }
        let lo: Vec<f64> = center.iter().zip(widths).map(|(c, w)| c - w).collect();
        let hi: Vec<f64> = center.iter().zip(widths).map(|(c, w)| c + w).collect();
        let min_abs = |lo: f64, hi: f64| -> f64 {
            if lo <= 0.0 && hi >= 0.0 {
                0.0
            } else {
                lo.abs().min(hi.abs())
            }
        };
        match model {
            Model::Sl2R => {
                let x_ok = lo[0] > -0.5 && hi[0] < 0.5;
                let y_ok = lo[1] > 0.0;
                let mx = min_abs(lo[0], hi[0]);
                let corner = mx * mx + lo[1] * lo[1];
                if x_ok && y_ok && corner > 1.0 {
                    Ok(())
                } else {
                    Err(HomsimError::BadSupport)
                }
            }
            Model::Sl2C => {
                let x_ok = lo[0] > -0.5 && hi[0] < 0.5;
                let y_ok = lo[1] > 0.0 && hi[1] < 0.5;
                let h_ok = lo[2] > 0.0;
                let mx = min_abs(lo[0], hi[0]);
                let my = min_abs(lo[1], hi[1]);
                let corner = mx * mx + my * my + lo[2] * lo[2];
                if x_ok && y_ok && h_ok && corner > 1.0 {
                    Ok(())
                } else {
                    Err(HomsimError::BadSupport)
                }
            }
        }
    }
}

/// The five-bump suite used by the acceptance experiments.
pub fn standard_bumps(model: Model) -> Vec<TestFunction> {
    let mk = |id: &str, center: &[f64], widths: &[f64]| TestFunction::Bump {
        id: id.to_string(),
        center: center.to_vec(),
        widths: widths.to_vec(),
    };
    let suite = match model {
        Model::Sl2R => vec![
            mk("b1", &[0.0, 1.5], &[0.25, 0.35]),
            mk("b2", &[-0.25, 1.35], &[0.18, 0.25]),
            mk("b3", &[0.3, 1.30], &[0.15, 0.22]),
            mk("b4", &[0.05, 2.2], &[0.3, 0.6]),
            mk("b5", &[-0.05, 1.18], &[0.2, 0.12]),
        ],
        Model::Sl2C => vec![
            mk("b1", &[0.0, 0.25, 1.4], &[0.25, 0.2, 0.3]),
            mk("b2", &[-0.2, 0.2, 1.25], &[0.18, 0.15, 0.2]),
            mk("b3", &[0.22, 0.3, 1.3], &[0.16, 0.15, 0.25]),
            mk("b4", &[0.0, 0.22, 1.8], &[0.3, 0.18, 0.5]),
            mk("b5", &[-0.1, 0.15, 1.15], &[0.2, 0.12, 0.1]),
        ],
    };
    for f in &suite {
        f.validate_support(model).expect("standard suite is inside the domain");
    }
    suite
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

/// A Birkhoff-type Monte Carlo average with its run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_error: f64,
    pub t: f64,
    pub samples: u64,
    pub seed: u64,
    pub curve_id: String,
    pub test_fn_id: String,
}

/// Runs one seeded Monte Carlo sweep evaluating every test function on the
/// same flow points (one reduction per sample serves the whole suite).
#[allow(clippy::too_many_arguments)]
pub fn birkhoff_suite<C: CurveEval + Sync + ?Sized>(
    model: Model,
    curve: &C,
    curve_id: &str,
    t: f64,
    base: &Mat2,
    fns: &[TestFunction],
    samples: u64,
    seed: u64,
) -> Result<Vec<MeasureEstimate>, HomsimError> {
    if samples < 1_000 {
        return Err(HomsimError::TooFewSamples {
            expected: 1_000,
            got: samples,
        });
    }
    for f in fns {
        f.validate_support(model)?;
    }
    // Fail fast on bad parameters before entering the parallel region.
    let (a, b) = curve.interval();
    flow_point(model, curve, a, t, base)?;
    let batches = samples.div_ceil(BATCH_SIZE);
    let per_batch = exec::map_batches(batches, |bi| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(bi);
        let len = exec::batch_len(bi, samples);
        let mut stats = vec![BatchStats::default(); fns.len()];
        for _ in 0..len {
            let s = rng.gen_range(a..b);
            let p = flow_point(model, curve, s, t, base).expect("parameters validated above");
            for (f, st) in fns.iter().zip(stats.iter_mut()) {
                st.push(f.eval(&p));
            }
        }
        stats
    });
    Ok((0..fns.len())
        .map(|i| {
            let parts: Vec<BatchStats> = per_batch.iter().map(|b| b[i]).collect();
            let merged = BatchStats::merge_all(&parts);
            MeasureEstimate {
                value: merged.mean(),
                std_error: merged.std_error(),
                t,
                samples,
                seed,
                curve_id: curve_id.to_string(),
                test_fn_id: fns[i].id().to_string(),
            }
        })
        .collect())
}

/// Monte Carlo estimate of the normalized parameter integral of `f` along
/// the flowed curve.
#[allow(clippy::too_many_arguments)]
pub fn birkhoff_average<C: CurveEval + Sync + ?Sized>(
    model: Model,
    curve: &C,
    curve_id: &str,
    t: f64,
    base: &Mat2,
    f: &TestFunction,
    samples: u64,
    seed: u64,
) -> Result<MeasureEstimate, HomsimError> {
    Ok(
        birkhoff_suite(model, curve, curve_id, t, base, std::slice::from_ref(f), samples, seed)?
            .pop()
            .expect("one function in, one estimate out"),
    )
}

/// Fraction of samples whose reduced height stays at or below `y_cutoff`.
pub fn nondivergence_fraction<C: CurveEval + Sync + ?Sized>(
    model: Model,
    curve: &C,
    t: f64,
    base: &Mat2,
    y_cutoff: f64,
    samples: u64,
    seed: u64,
) -> Result<f64, HomsimError> {
    if y_cutoff <= 1.0 {
        return Err(HomsimError::BadParameter(format!(
            "height cutoff must exceed 1, got {y_cutoff}"
        )));
    }
    let (a, b) = curve.interval();
    flow_point(model, curve, a, t, base)?;
    let batches = samples.div_ceil(BATCH_SIZE);
    let counts = exec::map_batches(batches, |bi| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(bi);
        let len = exec::batch_len(bi, samples);
        let mut below = 0u64;
        for _ in 0..len {
            let s = rng.gen_range(a..b);
            let p = flow_point(model, curve, s, t, base).expect("validated");
            if p.height() <= y_cutoff {
                below += 1;
            }
        }
        below
    });
    Ok(counts.iter().sum::<u64>() as f64 / samples as f64)
}

/// Precomputed rotating frames along the curve, usable at arbitrary
/// parameters: nearest tabulated frame plus one minimal rotation.
pub struct FrameTable {
    s_nodes: Vec<f64>,
    tangents: Vec<nalgebra::DVector<f64>>,
    frames: Vec<nalgebra::DMatrix<f64>>,
}

impl FrameTable {
    pub fn build<C: CurveEval + ?Sized>(curve: &C, nodes: usize) -> Result<Self, CurveError> {
        let (a, b) = curve.interval();
        let mut ctx = crate::curves::FrameContext::new();
        let mut s_nodes = Vec::with_capacity(nodes);
        let mut tangents = Vec::with_capacity(nodes);
        let mut frames = Vec::with_capacity(nodes);
        for k in 0..nodes {
            let s = a + (b - a) * k as f64 / (nodes - 1) as f64;
            let z = ctx.frame_z(curve, s)?;
            let vel = curve.velocity(s);
            s_nodes.push(s);
            tangents.push(vel.clone() / vel.norm());
            frames.push(z);
        }
        Ok(FrameTable {
            s_nodes,
            tangents,
            frames,
        })
    }

    pub fn frame_at<C: CurveEval + ?Sized>(
        &self,
        curve: &C,
        s: f64,
    ) -> Result<nalgebra::DMatrix<f64>, CurveError> {
        let (a, b) = (self.s_nodes[0], *self.s_nodes.last().unwrap());
        let h = (b - a) / (self.s_nodes.len() - 1) as f64;
        let k = (((s - a) / h).round() as usize).min(self.s_nodes.len() - 1);
        let vel = curve.velocity(s);
        let unit = vel.clone() / vel.norm();
        let rot = rotation_between(&self.tangents[k], &unit)?;
        Ok(&self.frames[k] * rot.transpose())
    }
}

/// Paired diagnostic for invariance of the framed average under the fixed
/// horocycle direction `u(r e_1)`.
#[derive(Debug, Clone)]
pub struct WInvarianceReport {
    /// `|avg f(u(r e_1) z(s) a_t u(phi(s)) g) - avg f(z(s) a_t u(phi(s)) g)|`.
    pub delta: f64,
    /// Standard error of the paired difference.
    pub std_error: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn w_invariance_diagnostic<C: CurveEval + Sync + ?Sized>(
    model: Model,
    curve: &C,
    t: f64,
    base: &Mat2,
    f: &TestFunction,
    r: f64,
    samples: u64,
    seed: u64,
) -> Result<WInvarianceReport, HomsimError> {
    if r.abs() > 1.0 {
        return Err(HomsimError::BadParameter(format!(
            "|r| must not exceed 1, got {r}"
        )));
    }
    f.validate_support(model)?;
    let (a, b) = curve.interval();
    let u_r = mat2_real(1.0, r, 0.0, 1.0);
    // Frames: identity for the half-plane; tabulated rotations otherwise.
    let table = match model {
        Model::Sl2R => None,
        Model::Sl2C => Some(FrameTable::build(curve, 4096)?),
    };
    let z_matrix = |s: f64| -> Result<Mat2, HomsimError> {
        match (&table, model) {
            (None, _) => Ok(Mat2::identity()),
            (Some(tab), Model::Sl2C) => {
                let zrot = tab.frame_at(curve, s)?;
                let psi = zrot[(1, 0)].atan2(zrot[(0, 0)]);
                let e = C64::new(0.0, psi / 2.0).exp();
                Ok(Mat2::new(
                    e,
                    C64::new(0.0, 0.0),
                    C64::new(0.0, 0.0),
                    e.conj(),
                ))
            }
            _ => unreachable!(),
        }
    };
    // Validate once at the left endpoint.
    let _ = flow_matrix(model, curve, a, t, base)?;
    z_matrix(a)?;
    let batches = samples.div_ceil(BATCH_SIZE);
    let per_batch = exec::map_batches(batches, |bi| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(bi);
        let len = exec::batch_len(bi, samples);
        let mut stats = BatchStats::default();
        for _ in 0..len {
            let s = rng.gen_range(a..b);
            let m = flow_matrix(model, curve, s, t, base).expect("validated");
            let z = z_matrix(s).expect("validated");
            let framed = z * m;
            let translated = u_r * framed;
            let p1 = reduce(&orbit_point(model, &translated).expect("unimodular"))
                .expect("reduction terminates")
                .0;
            let p2 = reduce(&orbit_point(model, &framed).expect("unimodular"))
                .expect("reduction terminates")
                .0;
            stats.push(f.eval(&p1) - f.eval(&p2));
        }
        stats
    });
    let merged = BatchStats::merge_all(&per_batch);
    Ok(WInvarianceReport {
        delta: merged.mean().abs(),
        std_error: merged.std_error(),
    })
}

// ---------------------------------------------------------------------------
// Haar reference integrals
// ---------------------------------------------------------------------------

/// 7-point Gauss-Legendre quadrature of `f` over `[a, b]` split into panels.
fn gl_integrate(a: f64, b: f64, panels: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    const NODES: [f64; 7] = [
        -0.9491079123427585,
        -0.7415311855993945,
        -0.4058451513773972,
        0.0,
        0.4058451513773972,
        0.7415311855993945,
        0.9491079123427585,
    ];
    const WEIGHTS: [f64; 7] = [
        0.1294849661688697,
        0.2797053914892766,
        0.3818300505051189,
        0.4179591836734694,
        0.3818300505051189,
        0.2797053914892766,
        0.1294849661688697,
    ];
    let dt = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * dt;
        let half = dt / 2.0;
        for (x, w) in NODES.iter().zip(WEIGHTS.iter()) {
            acc += w * half * f(mid + half * x);
        }
    }
    acc
}

fn haar_raw(model: Model, f: &dyn Fn(&ModelPoint) -> f64, grid: usize) -> f64 {
    match model {
        // integral over the modular domain of f dx dy / y^2; substitute
        // v = 1/y so the unbounded y-range becomes v in (0, 1/y_low].
        Model::Sl2R => gl_integrate(-0.5, 0.5, grid, |x| {
            let y_low = (1.0 - x * x).sqrt();
            gl_integrate(0.0, 1.0 / y_low, grid, |v| {
                f(&ModelPoint::HalfPlane {
                    z: C64::new(x, 1.0 / v),
                    reduced: true,
                })
            })
        }),
        // f dx dy dh / h^3 with v = 1/h contributing a factor v.
        Model::Sl2C => gl_integrate(-0.5, 0.5, grid, |x| {
            gl_integrate(0.0, 0.5, grid, |y| {
                let h_low = (1.0 - x * x - y * y).sqrt();
                gl_integrate(0.0, 1.0 / h_low, grid, |v| {
                    v * f(&ModelPoint::HalfSpace {
                        z: C64::new(x, y),
                        h: 1.0 / v,
                        reduced: true,
                    })
                })
            })
        }),
    }
}

/// Integral of `f` against the normalized invariant measure, by tensor
/// quadrature in substituted coordinates. The normalizing volume is
/// computed by the same quadrature, and the grid is validated by doubling;
/// a failing comparison escalates the grid twice before giving up.
pub fn haar_integral(model: Model, f: &TestFunction, grid: usize) -> Result<f64, HomsimError> {
    f.validate_support(model)?;
    let mut grid = grid.max(8);
    let eval = |g: usize| -> f64 {
        let num = haar_raw(model, &|p| f.eval(p), g);
        let den = haar_raw(model, &|_| 1.0, g);
        num / den
    };
    let mut coarse = eval(grid);
    let mut rel = f64::INFINITY;
    for _ in 0..3 {
        let fine = eval(2 * grid);
        rel = (fine - coarse).abs() / fine.abs().max(1e-12);
        if rel <= 1e-4 {
            return Ok(fine);
        }
        grid *= 2;
        coarse = fine;
    }
    Err(HomsimError::QuadratureNotConverged(rel))
}

/// Unnormalized volume of the fundamental domain (for cross-checks).
pub fn domain_volume(model: Model, grid: usize) -> f64 {
    haar_raw(model, &|_| 1.0, grid)
}

// ---------------------------------------------------------------------------
// Structured result records
// ---------------------------------------------------------------------------

/// One self-contained result line: a measure estimate next to its Haar
/// reference. Serialized as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub model: String,
    pub curve: String,
    pub t: f64,
    pub samples: u64,
    pub seed: u64,
    pub test_fn: String,
    pub value: f64,
    pub std_error: f64,
    pub haar_value: f64,
}

impl Record {
    pub fn from_estimate(model: Model, est: &MeasureEstimate, haar_value: f64) -> Record {
        Record {
            model: model.name().to_string(),
            curve: est.curve_id.clone(),
            t: est.t,
            samples: est.samples,
            seed: est.seed,
            test_fn: est.test_fn_id.clone(),
            value: est.value,
            std_error: est.std_error,
            haar_value,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Record, HomsimError> {
        serde_json::from_str(line).map_err(|e| HomsimError::BadParameter(e.to_string()))
    }
}

/// Writes sweep plot data: one `t value std_error haar_value` row per line.
pub fn write_plot_data(
    path: &std::path::Path,
    rows: &[(f64, f64, f64, f64)],
) -> std::io::Result<()> {
    use std::io::Write;
    let mut out = String::from("# t value std_error haar_value\n");
    for (t, v, se, haar) in rows {
        out.push_str(&format!("{t:.17e} {v:.17e} {se:.17e} {haar:.17e}\n"));
        let _ = &mut out;
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())
}
