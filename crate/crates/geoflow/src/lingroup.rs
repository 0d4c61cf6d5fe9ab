//! Explicit matrix model of `H = SO(n,1)`.
//!
//! `H` is realized as the group of unimodular `(n+1) x (n+1)` real matrices
//! preserving the quadratic form
//!
//! ```text
//! Q(x_0, ..., x_n) = 2 x_0 x_n - (x_1^2 + ... + x_{n-1}^2).
//! ```
//!
//! The subgroups used throughout the crate:
//!
//! - `A = { a_t = diag(e^t, 1, ..., 1, e^{-t}) }`, the diagonal flow;
//! - `N = { u(x) }`, upper unipotents parametrized by `x` in `R^{n-1}`,
//!   expanded by conjugation under `a_t` with `t > 0`;
//! - `N^- = { u^-(x) }`, the transposed pattern, contracted by `a_t`;
//! - `M`, rotations of the middle block, `k(m)` in `SO(n-1)`.
//!
//! The visual map sends a group element to the boundary class of the first
//! row, which is invariant under the flow acting by left multiplication, and
//! the horospherical decomposition factors generic elements as
//! `u^-(y) * (m a_t) * u(x)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Tolerance for group identities (form preservation, recomposition).
pub const FORM_TOL: f64 = 1e-9;
/// Tolerance below which a boundary-cell denominator counts as degenerate.
pub const CELL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinGroupError {
    #[error("flow parameter t = {0} exceeds the overflow guard |t| <= 300")]
    FlowOverflow(f64),
    #[error("matrix does not preserve the quadratic form (residual {0:.3e})")]
    NotFormPreserving(f64),
    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(f64),
    #[error("middle-block matrix is not special orthogonal (residual {0:.3e})")]
    NotRotation(f64),
    #[error("element lies on the boundary cell: leading visual coordinate {0:.3e}")]
    BoundaryCell(f64),
    #[error("direction vector must be unit length (|x| = {0})")]
    NotUnit(f64),
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("boundary representative is numerically zero")]
    ZeroVector,
}

/// The quadratic space `(R^{n+1}, Q)` with its Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpace {
    n: usize,
    gram: DMatrix<f64>,
}

impl QuadraticSpace {
    /// Hyperbolic dimension `n >= 2`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "hyperbolic dimension must be at least 2");
        let mut gram = DMatrix::zeros(n + 1, n + 1);
        gram[(0, n)] = 1.0;
        gram[(n, 0)] = 1.0;
        for i in 1..n {
            gram[(i, i)] = -1.0;
        }
        QuadraticSpace { n, gram }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Evaluates `Q(v) = v^T B v`.
    pub fn form(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.gram * v)[(0, 0)]
    }
}

/// An element of `SO(n,1)`: preserves the form and has determinant one.
#[derive(Debug, Clone)]
pub struct GroupElement {
    space: QuadraticSpace,
    mat: DMatrix<f64>,
}

impl GroupElement {
    /// Validating constructor used by all public builders.
    pub fn new(space: QuadraticSpace, mat: DMatrix<f64>) -> Result<Self, LinGroupError> {
        let residual = form_residual(&space, &mat);
        if residual > FORM_TOL {
            return Err(LinGroupError::NotFormPreserving(residual));
        }
        let det = mat.determinant();
        if (det - 1.0).abs() > FORM_TOL {
            return Err(LinGroupError::NotUnimodular(det));
        }
        Ok(GroupElement { space, mat })
    }

    pub fn identity(space: QuadraticSpace) -> Self {
        let d = space.dim();
        GroupElement {
            space,
            mat: DMatrix::identity(d, d),
        }
    }

    pub fn space(&self) -> &QuadraticSpace {
        &self.space
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Residual of the form-preservation identity, `max |g^T B g - B|`.
    pub fn form_residual(&self) -> f64 {
        form_residual(&self.space, &self.mat)
    }

    pub fn mul(&self, rhs: &GroupElement) -> GroupElement {
        assert_eq!(self.space.n, rhs.space.n, "mixed quadratic spaces");
        GroupElement {
            space: self.space.clone(),
            mat: &self.mat * &rhs.mat,
        }
    }

    /// Inverse via the form: `g^{-1} = B^{-1} g^T B`, exact for exact input.
    pub fn inverse(&self) -> GroupElement {
        let b = &self.space.gram;
        // B is an involution for this normalization: B^{-1} = B.
        GroupElement {
            space: self.space.clone(),
            mat: b * self.mat.transpose() * b,
        }
    }

    pub fn max_diff(&self, rhs: &GroupElement) -> f64 {
        (&self.mat - &rhs.mat).amax()
    }
}

fn form_residual(space: &QuadraticSpace, mat: &DMatrix<f64>) -> f64 {
    (mat.transpose() * &space.gram * mat - &space.gram).amax()
}

/// `a_t = diag(e^t, 1, ..., 1, e^{-t})`; the weight character is `e^{t/2}`.
pub fn make_a(space: &QuadraticSpace, t: f64) -> Result<GroupElement, LinGroupError> {
    if !t.is_finite() || t.abs() > 300.0 {
        return Err(LinGroupError::FlowOverflow(t));
    }
    let d = space.dim();
    let mut mat = DMatrix::identity(d, d);
    mat[(0, 0)] = t.exp();
    mat[(d - 1, d - 1)] = (-t).exp();
    Ok(GroupElement {
        space: space.clone(),
        mat,
    })
}

/// Upper unipotent `u(x)`: first row `(1, x, |x|^2/2)`, last column mirrored.
pub fn make_u(space: &QuadraticSpace, x: &[f64]) -> GroupElement {
    let n = space.n;
    assert_eq!(x.len(), n - 1, "u(x) takes a vector of length n-1");
    let d = space.dim();
    let mut mat = DMatrix::identity(d, d);
    let half_norm = 0.5 * x.iter().map(|v| v * v).sum::<f64>();
    for (i, &xi) in x.iter().enumerate() {
        mat[(0, i + 1)] = xi;
        mat[(i + 1, d - 1)] = xi;
    }
    mat[(0, d - 1)] = half_norm;
    GroupElement {
        space: space.clone(),
        mat,
    }
}

/// Lower unipotent `u^-(x)`, the transposed pattern of `u(x)`.
pub fn make_u_minus(space: &QuadraticSpace, x: &[f64]) -> GroupElement {
    let u = make_u(space, x);
    GroupElement {
        space: u.space,
        mat: u.mat.transpose(),
    }
}

/// Embeds `k` in `SO(n-1)` as the middle block, ones at the corners.
pub fn make_m(space: &QuadraticSpace, k: &DMatrix<f64>) -> Result<GroupElement, LinGroupError> {
    let n = space.n;
    if k.nrows() != n - 1 || k.ncols() != n - 1 {
        return Err(LinGroupError::DimensionMismatch {
            expected: n - 1,
            got: k.nrows(),
        });
    }
    let ortho_residual = (k.transpose() * k - DMatrix::identity(n - 1, n - 1)).amax();
    let det = k.determinant();
    if ortho_residual > FORM_TOL || (det - 1.0).abs() > FORM_TOL {
        return Err(LinGroupError::NotRotation(ortho_residual.max((det - 1.0).abs())));
    }
    let d = space.dim();
    let mut mat = DMatrix::identity(d, d);
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            mat[(i + 1, j + 1)] = k[(i, j)];
        }
    }
    Ok(GroupElement {
        space: space.clone(),
        mat,
    })
}

/// A point of the ideal boundary: a null line, normalized so that the first
/// coordinate above the degeneracy threshold equals `+1`.
#[derive(Debug, Clone)]
pub struct BoundaryPoint {
    rep: DVector<f64>,
}

impl BoundaryPoint {
    pub fn new(space: &QuadraticSpace, rep: DVector<f64>) -> Result<Self, LinGroupError> {
        let scale = rep.amax();
        if scale == 0.0 {
            return Err(LinGroupError::ZeroVector);
        }
        let q = space.form(&rep).abs() / (scale * scale);
        if q > FORM_TOL {
            return Err(LinGroupError::NotFormPreserving(q));
        }
        let pivot = rep
            .iter()
            .find(|v| v.abs() > 1e-10 * scale)
            .copied()
            .ok_or(LinGroupError::ZeroVector)?;
        Ok(BoundaryPoint { rep: rep / pivot })
    }

    pub fn rep(&self) -> &DVector<f64> {
        &self.rep
    }

    pub fn max_diff(&self, other: &BoundaryPoint) -> f64 {
        (&self.rep - &other.rep).amax()
    }
}

/// The flow-invariant boundary datum of `h`: the projective class of the
/// first row `h^T e_0`, i.e. the forward ideal point of the tangent vector
/// represented by `h`.
pub fn visual_map(h: &GroupElement) -> BoundaryPoint {
    let rep = h.mat.row(0).transpose();
    BoundaryPoint::new(&h.space, rep).expect("row of an invertible isometry is a nonzero null vector")
}

/// Result of the horospherical decomposition `h = u^-(y) * (m a) * u(x)`.
#[derive(Debug, Clone)]
pub struct Horospherical {
    pub nminus: GroupElement,
    pub am: GroupElement,
    pub u: GroupElement,
    /// Parameter of the `u`-factor; equals the dehomogenized visual datum.
    pub x: Vec<f64>,
    /// Parameter of the `u^-`-factor.
    pub y: Vec<f64>,
    /// Flow part: `am = m a_t`.
    pub t: f64,
}

/// Factors `h` through the open cell `N^- (MA) N`. Fails on the cell
/// boundary, where the leading visual coordinate vanishes.
pub fn horospherical_decompose(h: &GroupElement) -> Result<Horospherical, LinGroupError> {
    let d = h.space.dim();
    let n = h.space.n;
    let scale = h.mat.amax();
    let c = h.mat[(0, 0)];
    if c.abs() <= CELL_TOL * scale {
        return Err(LinGroupError::BoundaryCell(c));
    }
    // Row 0 of h is c * (1, x, |x|^2/2): the visual datum dehomogenized.
    let x: Vec<f64> = (1..n).map(|j| h.mat[(0, j)] / c).collect();
    let h1 = h.mul(&make_u(&h.space, &x.iter().map(|v| -v).collect::<Vec<_>>()));
    // Column 0 of h1 is c * (1, y, |y|^2/2).
    let y: Vec<f64> = (1..n).map(|i| h1.mat[(i, 0)] / c).collect();
    let am = make_u_minus(&h.space, &y.iter().map(|v| -v).collect::<Vec<_>>()).mul(&h1);
    if c < 0.0 {
        // Negative leading coefficient puts h outside the identity
        // component's cell; the M A factorization with SO(n-1) block and
        // positive flow part does not exist there.
        return Err(LinGroupError::BoundaryCell(c));
    }
    // am should now be block diagonal: diag(e^t, k, e^{-t}).
    let t = c.ln();
    let mut off = 0.0f64;
    for j in 1..d {
        off = off.max(am.mat[(0, j)].abs()).max(am.mat[(j, 0)].abs());
    }
    for i in 1..n {
        off = off.max(am.mat[(i, d - 1)].abs()).max(am.mat[(d - 1, i)].abs());
    }
    off = off.max((am.mat[(d - 1, d - 1)] - (-t).exp()).abs());
    if off > FORM_TOL * scale.max(1.0) {
        return Err(LinGroupError::NotFormPreserving(off));
    }
    Ok(Horospherical {
        nminus: make_u_minus(&h.space, &y),
        am,
        u: make_u(&h.space, &x),
        x,
        y,
        t,
    })
}

/// Homomorphic image of `SL(2,R)` attached to a unit direction `x`: the
/// upper unipotents map to `u(t x)` and `diag(e^{t/2}, e^{-t/2})` maps to
/// `a_t`. These two normalizations pin the bracket, which forces
/// `[[1,0],[t,1]]` to land on `u^-(2 t x)`.
#[derive(Debug, Clone)]
pub struct Sl2Embedding {
    space: QuadraticSpace,
    /// Unit direction in `R^{n-1}`.
    x: Vec<f64>,
    /// Sign twist used when `n = 2` and `x = -1`, where no rotation of the
    /// middle block can move `e_1` to `x`.
    flip: bool,
}

impl Sl2Embedding {
    pub fn direction(&self) -> &[f64] {
        &self.x
    }

    /// Applies the embedding to `g = [[a,b],[c,d]]` with `det g = 1`.
    pub fn apply(&self, g: &[[f64; 2]; 2]) -> Result<GroupElement, LinGroupError> {
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        if (det - 1.0).abs() > FORM_TOL {
            return Err(LinGroupError::NotUnimodular(det));
        }
        let (a, mut b, mut c, d) = (g[0][0], g[0][1], g[1][0], g[1][1]);
        if self.flip {
            b = -b;
            c = -c;
        }
        let n = self.space.n;
        let dim = self.space.dim();
        let mut mat = DMatrix::identity(dim, dim);
        let x = DVector::from_column_slice(&self.x);
        mat[(0, 0)] = a * a;
        mat[(0, dim - 1)] = b * b / 2.0;
        mat[(dim - 1, 0)] = 2.0 * c * c;
        mat[(dim - 1, dim - 1)] = d * d;
        for i in 0..n - 1 {
            mat[(0, i + 1)] = a * b * x[i];
            mat[(i + 1, 0)] = 2.0 * a * c * x[i];
            mat[(i + 1, dim - 1)] = b * d * x[i];
            mat[(dim - 1, i + 1)] = 2.0 * c * d * x[i];
            for j in 0..n - 1 {
                mat[(i + 1, j + 1)] = if i == j { 1.0 } else { 0.0 } + (a * d + b * c - 1.0) * x[i] * x[j];
            }
        }
        GroupElement::new(self.space.clone(), mat)
    }
}

/// Builds the `SL(2,R)` embedding along a unit direction.
///
/// For `n >= 3` this is literally conjugation of the `x = e_1` embedding by
/// any rotation taking `e_1` to `x` (the closed form below is that product,
/// independent of the rotation chosen). For `n = 2`, `x = -1` is handled by
/// the sign automorphism of `SL(2,R)` instead, since `SO(1)` is trivial.
pub fn sl2_embed(space: &QuadraticSpace, x: &[f64]) -> Result<Sl2Embedding, LinGroupError> {
    let n = space.n;
    if x.len() != n - 1 {
        return Err(LinGroupError::DimensionMismatch {
            expected: n - 1,
            got: x.len(),
        });
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > FORM_TOL {
        return Err(LinGroupError::NotUnit(norm));
    }
    if n == 2 && x[0] < 0.0 {
        return Ok(Sl2Embedding {
            space: space.clone(),
            x: vec![1.0],
            flip: true,
        });
    }
    Ok(Sl2Embedding {
        space: space.clone(),
        x: x.to_vec(),
        flip: false,
    })
}

/// A rotation in `SO(m)` taking `e_1` to the given unit vector, built from a
/// Householder pair. `None` when `m = 1` and the target is `-1`.
pub fn rotation_taking_e1(target: &[f64]) -> Option<DMatrix<f64>> {
    let m = target.len();
    let t = DVector::from_column_slice(target);
    let e1 = DVector::from_fn(m, |i, _| if i == 0 { 1.0 } else { 0.0 });
    if (&t - &e1).amax() < 1e-14 {
        return Some(DMatrix::identity(m, m));
    }
    if m == 1 {
        return None;
    }
    // First reflection sends e_1 to the target.
    let v = &t - &e1;
    let h1 = DMatrix::identity(m, m) - 2.0 / v.norm_squared() * &v * v.transpose();
    // Second reflection fixes the target and restores the determinant.
    let mut w = DVector::zeros(m);
    let k = (0..m)
        .min_by(|&i, &j| t[i].abs().partial_cmp(&t[j].abs()).unwrap())
        .unwrap();
    w[k] = 1.0;
    let w = &w - t.dot(&w) * &t;
    let h2 = DMatrix::identity(m, m) - 2.0 / w.norm_squared() * &w * w.transpose();
    Some(h2 * h1)
}
