//! Adjoint and exterior-power representations of `so(n,1)` with explicit
//! weight gradings.
//!
//! The Lie algebra basis, chosen so all structure constants are integers:
//!
//! ```text
//! H       = E_00 - E_nn                      weight  0   (flow direction)
//! X_i     = E_{0i} + E_{in},  1 <= i <= n-1  weight +1   (raising)
//! Y_i     = E_{i0} + E_{ni}                  weight -1   (lowering)
//! M_{ij}  = E_{ij} - E_{ji},  1 <= i < j     weight  0   (rotations)
//! ```
//!
//! where the weight is the exponent of `e^t` under conjugation by
//! `a_t = diag(e^t, 1, ..., 1, e^{-t})`. Exterior powers carry the wedge
//! basis over index subsets; a wedge vector's weight is the sum of its
//! factors' weights, and derivations act by the Leibniz rule.
//!
//! The curve-facing operator is `upsilon(s)`, the representation matrix of
//! `u(phi(s))`, computed as the exponential of the nilpotent raising
//! derivation — a finite sum, so entries are exact polynomials in the curve
//! data. Two diagnostics build on it: a sublevel-set check for the
//! `(C, alpha)`-good property of its coordinate functions, and an SVD solver
//! for vectors whose orbit under `upsilon(s)` never leaves the
//! non-expanding part.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::curves::CurveEval;
use crate::lingroup::QuadraticSpace;
use crate::poly::Polynomial;

#[derive(Debug, Error)]
pub enum ExtAdjError {
    #[error("adjoint construction is desk-scale only: n = {0} exceeds 4")]
    DimensionGuard(usize),
    #[error("exterior degree {0} out of range 1..={1}")]
    BadDegree(usize, usize),
    #[error("wedge dimension {0} exceeds the 10^4 size guard")]
    SizeGuard(usize),
    #[error("function is identically zero on the interval")]
    ZeroFunction,
    #[error("parameters C and alpha must be positive")]
    BadGoodFnParams,
    #[error("need at least {expected} curve samples, got {got}")]
    TooFewSamples { expected: usize, got: usize },
    #[error("curve has {got} components, expected {expected}")]
    CurveDimension { expected: usize, got: usize },
    #[error("operation requires a polynomial curve (no wave terms)")]
    NotPolynomial,
}

/// A representation of `so(n,1)` with a diagonalized flow direction.
#[derive(Debug, Clone)]
pub struct GradedRep {
    n: usize,
    /// Human-readable basis labels (wedge index sets).
    pub labels: Vec<String>,
    /// Weight of each basis vector under the flow direction.
    pub weights: Vec<i64>,
    /// Derivation of the flow direction (diagonal on this basis).
    pub gen_h: DMatrix<f64>,
    /// Derivations of the `n-1` raising directions.
    pub gen_raise: Vec<DMatrix<f64>>,
    /// Derivations of the `n-1` lowering directions.
    pub gen_lower: Vec<DMatrix<f64>>,
    /// Derivations of a generating set of the rotation part.
    pub gen_rot: Vec<DMatrix<f64>>,
}

impl GradedRep {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// All generator derivations in a fixed order.
    pub fn generators(&self) -> Vec<&DMatrix<f64>> {
        let mut gens = vec![&self.gen_h];
        gens.extend(self.gen_raise.iter());
        gens.extend(self.gen_lower.iter());
        gens.extend(self.gen_rot.iter());
        gens
    }

    /// Block direct sum of two representations of the same `so(n,1)`.
    pub fn direct_sum(&self, other: &GradedRep) -> GradedRep {
        assert_eq!(self.n, other.n, "mixed ambient dimensions");
        let cat = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> DMatrix<f64> {
            let (da, db) = (a.nrows(), b.nrows());
            let mut out = DMatrix::zeros(da + db, da + db);
            out.view_mut((0, 0), (da, da)).copy_from(a);
            out.view_mut((da, da), (db, db)).copy_from(b);
            out
        };
        GradedRep {
            n: self.n,
            labels: self
                .labels
                .iter()
                .cloned()
                .chain(other.labels.iter().cloned())
                .collect(),
            weights: self
                .weights
                .iter()
                .copied()
                .chain(other.weights.iter().copied())
                .collect(),
            gen_h: cat(&self.gen_h, &other.gen_h),
            gen_raise: self
                .gen_raise
                .iter()
                .zip(other.gen_raise.iter())
                .map(|(a, b)| cat(a, b))
                .collect(),
            gen_lower: self
                .gen_lower
                .iter()
                .zip(other.gen_lower.iter())
                .map(|(a, b)| cat(a, b))
                .collect(),
            gen_rot: self
                .gen_rot
                .iter()
                .zip(other.gen_rot.iter())
                .map(|(a, b)| cat(a, b))
                .collect(),
        }
    }
}

/// Matrix basis of `so(n,1)` in the order `H, X_1.., Y_1.., M_{ij}..`.
fn algebra_basis(n: usize) -> Vec<DMatrix<f64>> {
    let d = n + 1;
    let mut basis = Vec::new();
    let mut h = DMatrix::zeros(d, d);
    h[(0, 0)] = 1.0;
    h[(d - 1, d - 1)] = -1.0;
    basis.push(h);
    for i in 1..n {
        let mut x = DMatrix::zeros(d, d);
        x[(0, i)] = 1.0;
        x[(i, d - 1)] = 1.0;
        basis.push(x);
    }
    for i in 1..n {
        let mut y = DMatrix::zeros(d, d);
        y[(i, 0)] = 1.0;
        y[(d - 1, i)] = 1.0;
        basis.push(y);
    }
    for i in 1..n {
        for j in i + 1..n {
            let mut m = DMatrix::zeros(d, d);
            m[(i, j)] = 1.0;
            m[(j, i)] = -1.0;
            basis.push(m);
        }
    }
    basis
}

/// Coordinates of `mat` (assumed in `so(n,1)`) over [`algebra_basis`]. The
/// basis entries occupy disjoint matrix positions, so this is a direct read.
fn algebra_coords(n: usize, mat: &DMatrix<f64>) -> DVector<f64> {
    let d = n + 1;
    let dim = n * (n + 1) / 2;
    let mut out = DVector::zeros(dim);
    let mut idx = 0;
    out[idx] = mat[(0, 0)];
    idx += 1;
    for i in 1..n {
        out[idx] = mat[(0, i)];
        idx += 1;
    }
    for i in 1..n {
        out[idx] = mat[(i, 0)];
        idx += 1;
    }
    for i in 1..n {
        for j in i + 1..n {
            out[idx] = mat[(i, j)];
            idx += 1;
        }
    }
    debug_assert_eq!(idx, dim);
    debug_assert!(
        {
            // The mirrored entries must agree with the read ones.
            let mut ok = (mat[(d - 1, d - 1)] + mat[(0, 0)]).abs() < 1e-9;
            for i in 1..n {
                ok &= (mat[(i, d - 1)] - mat[(0, i)]).abs() < 1e-9;
                ok &= (mat[(d - 1, i)] - mat[(i, 0)]).abs() < 1e-9;
            }
            ok
        },
        "matrix is not in so(n,1)"
    );
    out
}

/// Adjoint representation of `so(n,1)` for `n <= 4`, with integer structure
/// constants and the `{+1, 0, -1}` weight grading.
pub fn build_adjoint(space: &QuadraticSpace) -> Result<GradedRep, ExtAdjError> {
    let n = space.n();
    if n > 4 {
        return Err(ExtAdjError::DimensionGuard(n));
    }
    let basis = algebra_basis(n);
    let dim = basis.len();
    let ad = |z: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(dim, dim);
        for (col, e) in basis.iter().enumerate() {
            let bracket = z * e - e * z;
            out.set_column(col, &algebra_coords(n, &bracket));
        }
        out
    };
    let mut labels = vec!["h".to_string()];
    for i in 1..n {
        labels.push(format!("x{i}"));
    }
    for i in 1..n {
        labels.push(format!("y{i}"));
    }
    for i in 1..n {
        for j in i + 1..n {
            labels.push(format!("m{i}{j}"));
        }
    }
    let mut weights = vec![0i64];
    weights.extend(std::iter::repeat_n(1, n - 1));
    weights.extend(std::iter::repeat_n(-1, n - 1));
    weights.extend(std::iter::repeat_n(0, (n - 1) * (n - 2) / 2));
    Ok(GradedRep {
        n,
        labels,
        weights,
        gen_h: ad(&basis[0]),
        gen_raise: (1..n).map(|i| ad(&basis[i])).collect(),
        gen_lower: (1..n).map(|i| ad(&basis[n - 1 + i])).collect(),
        gen_rot: (2 * n - 1..dim).map(|i| ad(&basis[i])).collect(),
    })
}

/// Sorted `d`-subsets of `0..dim` in lexicographic order.
fn subsets(dim: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..d).collect();
    loop {
        out.push(cur.clone());
        // advance the lexicographically next combination
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + dim - d {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..d {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Leibniz action of a derivation on the wedge basis.
fn wedge_derivation(gen: &DMatrix<f64>, sets: &[Vec<usize>], index: &dyn Fn(&[usize]) -> Option<usize>) -> DMatrix<f64> {
    let wdim = sets.len();
    let mut out = DMatrix::zeros(wdim, wdim);
    for (col, set) in sets.iter().enumerate() {
        for (slot, &elem) in set.iter().enumerate() {
            for row in 0..gen.nrows() {
                let coeff = gen[(row, elem)];
                if coeff == 0.0 {
                    continue;
                }
                // replace `elem` by `row`, then sort with sign
                if set.contains(&row) && row != elem {
                    continue;
                }
                let mut replaced = set.clone();
                replaced[slot] = row;
                let mut sign = 1.0;
                // insertion sort tracking transpositions
                let mut k = slot;
                while k > 0 && replaced[k - 1] > replaced[k] {
                    replaced.swap(k - 1, k);
                    sign = -sign;
                    k -= 1;
                }
                while k + 1 < replaced.len() && replaced[k] > replaced[k + 1] {
                    replaced.swap(k, k + 1);
                    sign = -sign;
                    k += 1;
                }
                if let Some(target) = index(&replaced) {
                    out[(target, col)] += sign * coeff;
                }
            }
        }
    }
    out
}

/// `d`-th exterior power with the induced grading and Leibniz derivations.
pub fn build_exterior(rep: &GradedRep, d: usize) -> Result<GradedRep, ExtAdjError> {
    let dim = rep.dim();
    if d == 0 || d > dim {
        return Err(ExtAdjError::BadDegree(d, dim));
    }
    if d == 1 {
        return Ok(rep.clone());
    }
    let sets = subsets(dim, d);
    if sets.len() > 10_000 {
        return Err(ExtAdjError::SizeGuard(sets.len()));
    }
    let lookup: std::collections::HashMap<Vec<usize>, usize> = sets
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    let index = |s: &[usize]| lookup.get(s).copied();
    let weights: Vec<i64> = sets
        .iter()
        .map(|s| s.iter().map(|&i| rep.weights[i]).sum())
        .collect();
    let labels: Vec<String> = sets
        .iter()
        .map(|s| {
            s.iter()
                .map(|&i| rep.labels[i].clone())
                .collect::<Vec<_>>()
                .join("^")
        })
        .collect();
    Ok(GradedRep {
        n: rep.n,
        labels,
        weights,
        gen_h: wedge_derivation(&rep.gen_h, &sets, &index),
        gen_raise: rep
            .gen_raise
            .iter()
            .map(|g| wedge_derivation(g, &sets, &index))
            .collect(),
        gen_lower: rep
            .gen_lower
            .iter()
            .map(|g| wedge_derivation(g, &sets, &index))
            .collect(),
        gen_rot: rep
            .gen_rot
            .iter()
            .map(|g| wedge_derivation(g, &sets, &index))
            .collect(),
    })
}

/// Representation matrix of the unipotent `u(x)`: the exponential of the
/// nilpotent raising derivation, summed until it terminates.
pub fn rep_unipotent(rep: &GradedRep, x: &[f64]) -> DMatrix<f64> {
    let dim = rep.dim();
    assert_eq!(x.len(), rep.gen_raise.len());
    let mut nilpotent = DMatrix::zeros(dim, dim);
    for (xi, g) in x.iter().zip(rep.gen_raise.iter()) {
        nilpotent += *xi * g;
    }
    let mut acc = DMatrix::identity(dim, dim);
    let mut term = DMatrix::identity(dim, dim);
    for k in 1..=(dim + 1) {
        term = (&term * &nilpotent) / k as f64;
        if term.amax() == 0.0 {
            break;
        }
        acc += &term;
    }
    acc
}

/// The curve-evaluated operator: representation matrix of `u(phi(s))`.
pub fn upsilon<C: CurveEval + ?Sized>(rep: &GradedRep, curve: &C, s: f64) -> Result<DMatrix<f64>, ExtAdjError> {
    if curve.ambient_dim() != rep.n - 1 {
        return Err(ExtAdjError::CurveDimension {
            expected: rep.n - 1,
            got: curve.ambient_dim(),
        });
    }
    let x = curve.eval(s);
    Ok(rep_unipotent(rep, x.as_slice()))
}

/// Entry `(i, j)` of `upsilon(s)` as an exact polynomial in `s`. Requires a
/// polynomial curve; these entries span the function class whose
/// `(C, alpha)`-good property the diagnostics test.
pub fn upsilon_entry_poly<C>(
    rep: &GradedRep,
    curve: &C,
    i: usize,
    j: usize,
) -> Result<Polynomial<f64>, ExtAdjError>
where
    C: AsPolynomialCurve,
{
    let comps = curve.polynomial_components().ok_or(ExtAdjError::NotPolynomial)?;
    if comps.len() != rep.n - 1 {
        return Err(ExtAdjError::CurveDimension {
            expected: rep.n - 1,
            got: comps.len(),
        });
    }
    let dim = rep.dim();
    // Nilpotent matrix with polynomial entries: sum_i phi_i(s) gen_raise[i].
    let zero = Polynomial::<f64>::zero();
    let mut nil: Vec<Vec<Polynomial<f64>>> = vec![vec![zero.clone(); dim]; dim];
    for (phi, g) in comps.iter().zip(rep.gen_raise.iter()) {
        for r in 0..dim {
            for c in 0..dim {
                if g[(r, c)] != 0.0 {
                    nil[r][c] = nil[r][c].add(&phi.scale(&g[(r, c)]));
                }
            }
        }
    }
    let id = |r: usize, c: usize| {
        if r == c {
            Polynomial::constant(1.0)
        } else {
            zero.clone()
        }
    };
    let mut acc: Vec<Vec<Polynomial<f64>>> = (0..dim).map(|r| (0..dim).map(|c| id(r, c)).collect()).collect();
    let mut term = acc.clone();
    for k in 1..=(dim + 1) {
        // term = term * nil / k
        let mut next: Vec<Vec<Polynomial<f64>>> = vec![vec![zero.clone(); dim]; dim];
        let mut any = false;
        for r in 0..dim {
            for c in 0..dim {
                let mut cell = Polynomial::<f64>::zero();
                for m in 0..dim {
                    if !term[r][m].is_zero() && !nil[m][c].is_zero() {
                        cell = cell.add(&term[r][m].mul(&nil[m][c]));
                    }
                }
                if !cell.is_zero() {
                    any = true;
                }
                next[r][c] = cell.scale(&(1.0 / k as f64));
            }
        }
        term = next;
        if !any {
            break;
        }
        for r in 0..dim {
            for c in 0..dim {
                acc[r][c] = acc[r][c].add(&term[r][c]);
            }
        }
    }
    Ok(acc[i][j].clone())
}

/// Access to exact polynomial components, for the polynomial-only paths.
pub trait AsPolynomialCurve: CurveEval {
    fn polynomial_components(&self) -> Option<Vec<Polynomial<f64>>>;
}

impl AsPolynomialCurve for crate::curves::AnalyticCurve {
    fn polynomial_components(&self) -> Option<Vec<Polynomial<f64>>> {
        if !self.is_polynomial() {
            return None;
        }
        Some(self.components().iter().map(|c| c.poly.clone()).collect())
    }
}

/// Report of the sublevel-set diagnostic.
#[derive(Debug, Clone)]
pub struct GoodFnReport {
    pub c: f64,
    pub alpha: f64,
    /// Largest observed ratio of sublevel measure to the bound
    /// `C (r / sup_J |xi|)^alpha |J|`; at most one certifies the sampled pairs.
    pub worst_ratio: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Samples random subintervals `J` and thresholds `r`, measuring
/// `|{s in J : |xi(s)| < r}|` by dense sampling against the
/// `(C, alpha)`-good bound. Certifies nothing beyond the sampled pairs.
pub fn good_function_check(
    xi: &Polynomial<f64>,
    interval: (f64, f64),
    c: f64,
    alpha: f64,
    trials: u64,
    seed: u64,
) -> Result<GoodFnReport, ExtAdjError> {
    if !(c > 0.0 && alpha > 0.0) {
        return Err(ExtAdjError::BadGoodFnParams);
    }
    let (a, b) = interval;
    let coarse_sup = (0..2048)
        .map(|j| xi.eval(&(a + (b - a) * j as f64 / 2047.0)).abs())
        .fold(0.0f64, f64::max);
    if coarse_sup == 0.0 {
        return Err(ExtAdjError::ZeroFunction);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    const DENSE: usize = 10_000;
    for _ in 0..trials {
        // Random subinterval of length at least 1e-3 of the domain.
        let (mut lo, mut hi);
        loop {
            lo = rng.gen_range(a..b);
            hi = rng.gen_range(a..b);
            if hi < lo {
                std::mem::swap(&mut lo, &mut hi);
            }
            if hi - lo >= 1e-3 * (b - a) {
                break;
            }
        }
        // Supremum over J: dense max plus golden-section polish nearby.
        let mut sup = 0.0f64;
        let mut argmax = lo;
        for j in 0..DENSE {
            let s = lo + (hi - lo) * j as f64 / (DENSE - 1) as f64;
            let v = xi.eval(&s).abs();
            if v > sup {
                sup = v;
                argmax = s;
            }
        }
        let cell = (hi - lo) / (DENSE - 1) as f64;
        let (mut gl, mut gr) = ((argmax - cell).max(lo), (argmax + cell).min(hi));
        for _ in 0..40 {
            let m1 = gl + 0.382 * (gr - gl);
            let m2 = gl + 0.618 * (gr - gl);
            if xi.eval(&m1).abs() > xi.eval(&m2).abs() {
                gr = m2;
            } else {
                gl = m1;
            }
        }
        sup = sup.max(xi.eval(&(0.5 * (gl + gr))).abs());
        if sup == 0.0 {
            continue;
        }
        // Threshold r as a random fraction of the supremum (log-uniform).
        let theta = 10f64.powf(rng.gen_range(-4.0..0.0));
        let r = theta * sup;
        let below = (0..DENSE)
            .filter(|&j| {
                let s = lo + (hi - lo) * j as f64 / (DENSE - 1) as f64;
                xi.eval(&s).abs() < r
            })
            .count();
        let measure = below as f64 / DENSE as f64 * (hi - lo);
        let bound = c * theta.powf(alpha) * (hi - lo);
        worst = worst.max(measure / bound);
    }
    Ok(GoodFnReport {
        c,
        alpha,
        worst_ratio: worst,
        trials,
        seed,
    })
}

/// Output of [`invariant_vector_solver`].
#[derive(Debug, Clone)]
pub struct InvariantReport {
    /// Basis of `{ v : q^+(upsilon(s_j) v) = 0 for all samples }`.
    pub nullspace: Vec<DVector<f64>>,
    /// Basis of the joint kernel of every generator derivation.
    pub global_invariants: Vec<DVector<f64>>,
    /// `nullspace.len() - global_invariants.len()`, never negative.
    pub excess_dim: usize,
    /// Singular values of the stacked sample system, descending.
    pub singular_values: Vec<f64>,
    /// Ratio of the smallest kept to the largest discarded singular value;
    /// infinite when nothing was discarded.
    pub gap: f64,
}

/// Finds all vectors whose images under `upsilon(s_j)` have no expanding
/// component, across `sample_count` parameters spread over the interval,
/// and compares against the globally invariant vectors.
pub fn invariant_vector_solver<C: CurveEval + ?Sized>(
    rep: &GradedRep,
    curve: &C,
    sample_count: usize,
) -> Result<InvariantReport, ExtAdjError> {
    let dim = rep.dim();
    if sample_count < dim + 1 {
        return Err(ExtAdjError::TooFewSamples {
            expected: dim + 1,
            got: sample_count,
        });
    }
    let (a, b) = curve.interval();
    if b - a <= 0.0 || (b - a).is_nan() {
        return Err(ExtAdjError::TooFewSamples {
            expected: dim + 1,
            got: 0,
        });
    }
    let plus_rows: Vec<usize> = (0..dim).filter(|&i| rep.weights[i] > 0).collect();
    let mut stacked = DMatrix::zeros(plus_rows.len() * sample_count, dim);
    for j in 0..sample_count {
        let s = a + (b - a) * j as f64 / (sample_count - 1) as f64;
        let ups = upsilon(rep, curve, s)?;
        for (r, &row) in plus_rows.iter().enumerate() {
            stacked
                .row_mut(j * plus_rows.len() + r)
                .copy_from(&ups.row(row));
        }
    }
    let (nullspace, singular_values, gap) = svd_nullspace(&stacked);
    // Global invariants: joint kernel of all generators.
    let gens = rep.generators();
    let mut all = DMatrix::zeros(dim * gens.len(), dim);
    for (gi, g) in gens.iter().enumerate() {
        all.view_mut((gi * dim, 0), (dim, dim)).copy_from(*g);
    }
    let (global_invariants, _, _) = svd_nullspace(&all);
    assert!(
        nullspace.len() >= global_invariants.len(),
        "global invariants must satisfy the sampled conditions"
    );
    Ok(InvariantReport {
        excess_dim: nullspace.len() - global_invariants.len(),
        nullspace,
        global_invariants,
        singular_values,
        gap,
    })
}

fn svd_nullspace(mat: &DMatrix<f64>) -> (Vec<DVector<f64>>, Vec<f64>, f64) {
    let svd = mat.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| {
        svd.singular_values[y]
            .partial_cmp(&svd.singular_values[x])
            .unwrap()
    });
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);
    // Columns of V beyond the numerical rank span the kernel. nalgebra's SVD
    // is thin; when rows < cols the remaining kernel directions are missing,
    // so the solver always stacks at least dim rows.
    let mut null = Vec::new();
    let mut largest_discarded = 0.0f64;
    let mut smallest_kept = f64::INFINITY;
    for &i in &order {
        let s = svd.singular_values[i];
        if s <= crate::curves::RANK_TOL * smax {
            largest_discarded = largest_discarded.max(s);
            null.push(v_t.row(i).transpose());
        } else {
            smallest_kept = smallest_kept.min(s);
        }
    }
    let gap = if largest_discarded > 0.0 {
        smallest_kept / largest_discarded
    } else {
        f64::INFINITY
    };
    (null, sigma, gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::AnalyticCurve;
    use crate::lingroup::{make_u, QuadraticSpace};

    fn adjoint(n: usize) -> GradedRep {
        build_adjoint(&QuadraticSpace::new(n)).unwrap()
    }

    #[test]
    fn adjoint_dimensions_and_weights() {
        let rep2 = adjoint(2);
        assert_eq!(rep2.dim(), 3);
        let mut w = rep2.weights.clone();
        w.sort();
        assert_eq!(w, vec![-1, 0, 1]);

        let rep3 = adjoint(3);
        assert_eq!(rep3.dim(), 6);
        assert_eq!(rep3.weights.iter().filter(|&&w| w == 0).count(), 2);

        assert!(build_adjoint(&QuadraticSpace::new(5)).is_err());
    }

    #[test]
    fn weight_grading_diagonalizes_the_flow_generator() {
        for n in [2usize, 3, 4] {
            let rep = adjoint(n);
            for i in 0..rep.dim() {
                for j in 0..rep.dim() {
                    let expect = if i == j { rep.weights[i] as f64 } else { 0.0 };
                    assert_eq!(rep.gen_h[(i, j)], expect, "n={n} entry ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn bracket_closure_is_exact() {
        // [ad A, ad B] = ad [A, B] holds with integer arithmetic; check that
        // commutators of generator matrices always expand in the basis with
        // zero residual.
        for n in [2usize, 3, 4] {
            let rep = adjoint(n);
            let gens = rep.generators();
            for a in &gens {
                for b in &gens {
                    let comm = *a * *b - *b * *a;
                    // Solve comm = sum c_k ad_k by least squares and verify
                    // an exact match.
                    let dim = rep.dim();
                    let mut sys = DMatrix::zeros(dim * dim, gens.len());
                    for (k, g) in gens.iter().enumerate() {
                        for r in 0..dim {
                            for cidx in 0..dim {
                                sys[(r * dim + cidx, k)] = g[(r, cidx)];
                            }
                        }
                    }
                    let rhs = DVector::from_fn(dim * dim, |i, _| comm[(i / dim, i % dim)]);
                    let sol = sys.clone().svd(true, true).solve(&rhs, 1e-12).unwrap();
                    let residual = (&sys * sol - rhs).amax();
                    assert!(residual < 1e-9, "closure residual {residual}");
                }
            }
        }
    }

    #[test]
    fn exterior_dimensions_and_weights() {
        let rep2 = adjoint(2);
        let top = build_exterior(&rep2, 3).unwrap();
        assert_eq!(top.dim(), 1);
        assert_eq!(top.weights, vec![0]);
        // Top power of the adjoint: the action of any derivation is the
        // trace of ad, which vanishes; det of the group action is one.
        assert_eq!(top.gen_h[(0, 0)], 0.0);

        let w2 = build_exterior(&rep2, 2).unwrap();
        assert_eq!(w2.dim(), 3);
        let mut w = w2.weights.clone();
        w.sort();
        assert_eq!(w, vec![-1, 0, 1]);

        let same = build_exterior(&rep2, 1).unwrap();
        assert_eq!(same.weights, rep2.weights);

        assert!(build_exterior(&rep2, 4).is_err());

        // Combinatorial size guard: C(21, 6) > 10^4.
        let rep3 = adjoint(3);
        let big = rep3.direct_sum(&build_exterior(&rep3, 2).unwrap());
        assert!(matches!(
            build_exterior(&big, 6),
            Err(ExtAdjError::SizeGuard(_))
        ));
    }

    #[test]
    fn wedge_weights_are_sums_of_factor_weights() {
        let rep3 = adjoint(3);
        for d in [2usize, 3] {
            let wedge = build_exterior(&rep3, d).unwrap();
            let sets = subsets(rep3.dim(), d);
            for (i, set) in sets.iter().enumerate() {
                let expect: i64 = set.iter().map(|&k| rep3.weights[k]).sum();
                assert_eq!(wedge.weights[i], expect);
            }
        }
    }

    #[test]
    fn rep_unipotent_matches_conjugation_on_the_adjoint() {
        // The exponential of the raising derivation must equal the matrix of
        // Ad(u(x)) computed by honest conjugation.
        for n in [2usize, 3] {
            let sp = QuadraticSpace::new(n);
            let rep = adjoint(n);
            let x: Vec<f64> = (0..n - 1).map(|i| 0.3 + 0.4 * i as f64).collect();
            let u = make_u(&sp, &x);
            let u_inv = u.inverse();
            let basis = algebra_basis(n);
            let dim = rep.dim();
            let mut conj = DMatrix::zeros(dim, dim);
            for (col, e) in basis.iter().enumerate() {
                let image = u.mat() * e * u_inv.mat();
                conj.set_column(col, &algebra_coords(n, &image));
            }
            let exp = rep_unipotent(&rep, &x);
            assert!((exp - conj).amax() < 1e-12);
        }
    }

    #[test]
    fn wedge_group_action_is_the_compound_matrix() {
        let rep = adjoint(3);
        let wedge = build_exterior(&rep, 2).unwrap();
        let x = [0.7, -0.2];
        let small = rep_unipotent(&rep, &x);
        let big = rep_unipotent(&wedge, &x);
        let sets = subsets(rep.dim(), 2);
        for (row, rs) in sets.iter().enumerate() {
            for (col, cs) in sets.iter().enumerate() {
                let minor = small[(rs[0], cs[0])] * small[(rs[1], cs[1])]
                    - small[(rs[0], cs[1])] * small[(rs[1], cs[0])];
                assert!((big[(row, col)] - minor).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn upsilon_examples() {
        let rep = adjoint(2);
        let still = AnalyticCurve::from_polynomials(vec![vec![0.0]], (0.0, 1.0)).unwrap();
        let u = upsilon(&rep, &still, 0.5).unwrap();
        assert!((u - DMatrix::identity(3, 3)).amax() < 1e-15);

        let line = AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0]], (0.0, 2.0)).unwrap();
        for j in 0..100 {
            let s = 2.0 * j as f64 / 99.0;
            let ups = upsilon(&rep, &line, s).unwrap();
            assert!((ups.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn upsilon_matches_weight_basis_block() {
        // adjoint of so(2,1) is the highest-weight-2 block under
        // X -> -2 w0, H -> 2 w1, Y -> w2.
        let rep = adjoint(2);
        let line = AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0]], (0.0, 2.0)).unwrap();
        let p = DMatrix::from_row_slice(
            3,
            3,
            // columns: images of (h, x1, y1) in (w0, w1, w2) coordinates
            &[0.0, -2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        );
        let p_inv = p.clone().try_inverse().unwrap();
        for s in [0.5, 1.0, 2.0] {
            let ups = upsilon(&rep, &line, s).unwrap();
            let (_, w_mat) = crate::sl2rep::unipotent_matrix(&[2], s);
            let transported = &p * ups * &p_inv;
            assert!((transported - w_mat).amax() < 1e-12, "s = {s}");
        }
    }

    #[test]
    fn upsilon_entry_polynomials_evaluate_correctly() {
        let rep = adjoint(3);
        let curve =
            AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]], (0.0, 1.0))
                .unwrap();
        for (i, j) in [(0, 0), (0, 3), (1, 4), (2, 2), (5, 1)] {
            let poly = upsilon_entry_poly(&rep, &curve, i, j).unwrap();
            for s in [0.0, 0.3, 0.9] {
                let direct = upsilon(&rep, &curve, s).unwrap()[(i, j)];
                assert!((poly.eval(&s) - direct).abs() < 1e-10);
            }
        }
        let wavy = AnalyticCurve::circle([0.0, 0.0], 1.0, (0.0, 1.0)).unwrap();
        assert!(matches!(
            upsilon_entry_poly(&rep, &wavy, 0, 0),
            Err(ExtAdjError::NotPolynomial)
        ));
    }

    #[test]
    fn upsilon_products_compose_parameters() {
        // The unipotent family is abelian, so the operator at phi(s) times
        // the operator at phi(t) is the operator at phi(s) + phi(t).
        let rep = adjoint(3);
        let wedge = build_exterior(&rep, 2).unwrap();
        let curve = AnalyticCurve::from_polynomials(
            vec![vec![0.5, 2.0], vec![-0.25, 1.0]],
            (0.0, 1.0),
        )
        .unwrap();
        for r in [&rep, &wedge] {
            for (s, t) in [(0.1, 0.7), (0.3, 0.3)] {
                let prod = upsilon(r, &curve, s).unwrap() * upsilon(r, &curve, t).unwrap();
                let sum_arg: Vec<f64> = {
                    let a = curve.eval(s);
                    let b = curve.eval(t);
                    (0..2).map(|i| a[i] + b[i]).collect()
                };
                let direct = rep_unipotent(r, &sum_arg);
                assert!((prod - direct).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn q_plus_of_diagonal_flow_expands_by_block_weight() {
        let rep = adjoint(3);
        let wedge = build_exterior(&rep, 2).unwrap();
        // exp(t gen_h) scales each basis vector by e^{t w}.
        let t = 0.7f64;
        for (i, &w) in wedge.weights.iter().enumerate() {
            let mut v = DVector::zeros(wedge.dim());
            v[i] = 1.0;
            // exponential of a diagonal generator
            let scaled = (wedge.gen_h[(i, i)] * t).exp();
            assert!((scaled - (t * w as f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn good_function_linear_and_sqrt_cases() {
        // xi(s) = s on [0,1] is (1,1)-good.
        let xi = Polynomial::new(vec![0.0, 1.0]);
        let rep = good_function_check(&xi, (0.0, 1.0), 1.0, 1.0, 200, 5).unwrap();
        assert!(rep.worst_ratio <= 1.0 + 0.02, "ratio {}", rep.worst_ratio);

        // xi(s) = s^2 is (1, 1/2)-good but not (1, 1)-good.
        let xi2 = Polynomial::new(vec![0.0, 0.0, 1.0]);
        let rep = good_function_check(&xi2, (0.0, 1.0), 1.0, 0.5, 200, 5).unwrap();
        assert!(rep.worst_ratio <= 1.0 + 0.02, "ratio {}", rep.worst_ratio);
        let rep = good_function_check(&xi2, (0.0, 1.0), 1.0, 1.0, 200, 5).unwrap();
        assert!(rep.worst_ratio > 1.0, "violation must be detected");

        assert!(good_function_check(&Polynomial::zero(), (0.0, 1.0), 1.0, 1.0, 10, 1).is_err());
        assert!(good_function_check(&xi, (0.0, 1.0), 0.0, 1.0, 10, 1).is_err());
    }

    #[test]
    fn invariant_solver_trivial_cases() {
        let rep = adjoint(2);
        let line = AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0]], (0.0, 1.0)).unwrap();
        let report = invariant_vector_solver(&rep, &line, 16).unwrap();
        // so(2,1) adjoint: no global invariants; the line keeps only them.
        assert_eq!(report.global_invariants.len(), 0);
        assert_eq!(report.excess_dim, report.nullspace.len());
        assert!(matches!(
            invariant_vector_solver(&rep, &line, 2),
            Err(ExtAdjError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn invariant_solver_monotone_in_samples() {
        let rep = adjoint(3).direct_sum(&build_exterior(&adjoint(3), 2).unwrap());
        let curve =
            AnalyticCurve::from_polynomials(vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]], (0.0, 1.0))
                .unwrap();
        let mut prev = usize::MAX;
        for samples in [22usize, 40, 80] {
            let rep_out = invariant_vector_solver(&rep, &curve, samples).unwrap();
            assert!(rep_out.nullspace.len() <= prev);
            prev = rep_out.nullspace.len();
        }
    }
}
