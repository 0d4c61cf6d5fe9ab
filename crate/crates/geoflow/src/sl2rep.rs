//! Finite-dimensional representations of `SL(2,R)` in the weight basis.
//!
//! An irreducible of highest weight `l` is spanned by `w_0, ..., w_l` with
//!
//! ```text
//! h . w_k = (l - 2k) w_k          n . w_k = k w_{k-1}
//! u_r w_k = sum_{j<=k} C(k,j) r^{k-j} w_j
//! J  w_k = (-1)^k w_{l-k}
//! ```
//!
//! where `h, n` are the standard diagonal/raising generators, `u_r` the
//! upper unipotent, and `J` the quarter turn. The diagonal subgroup splits
//! any representation into expanded (`V^+`), fixed (`V^0`) and contracted
//! (`V^-`) parts; for a single block these are the spans of `w_k` with
//! `k < l/2`, `k = l/2`, `k > l/2`.
//!
//! Two items here carry most of the mathematical weight of the crate:
//!
//! - [`verify_key_lemma`] checks, in exact rational arithmetic, that every
//!   `v` in `V^{0-}` whose unipotent image stays in `V^{0-}` satisfies
//!   `q^0(u_r v) = J q^0(v)`, and that no nonzero `v` in `V^-` keeps its
//!   image inside `V^{0-}`.
//! - [`polynomial_oracle`] re-derives the same facts through the polynomial
//!   route: the generating polynomial `f` of the middle coefficient has
//!   `p`-th antiderivative `C x^p (x-1)^p`, which pins `f(1) = (-1)^p c_p`.
//!
//! The two routes are independent and are cross-checked in the acceptance
//! suite.

use nalgebra::DMatrix;
use num::BigRational;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exec::{self, BATCH_SIZE};
use crate::poly::Polynomial;
use crate::scalar::{binomial, Coeff};

/// Exact-coefficient polynomials used by the integration oracle.
pub type RationalPolynomial = Polynomial<BigRational>;

#[derive(Debug, Error)]
pub enum RepError {
    #[error("highest weight must be even for the lemma machinery, got l = {0}")]
    OddHighestWeight(usize),
    #[error("unipotent parameter r must be nonzero")]
    ZeroParameter,
    #[error("diagonal parameter overflow: |t·l/2| = {0} exceeds 300")]
    DiagOverflow(f64),
    #[error("coefficient vector has wrong length: expected {expected}, got {got}")]
    BadLength { expected: usize, got: usize },
}

/// A vector in the irreducible of highest weight `l` (dimension `l+1`),
/// stored as coefficients over `w_0, ..., w_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrrepBlock<T: Coeff> {
    pub l: usize,
    pub coeffs: Vec<T>,
}

impl<T: Coeff> IrrepBlock<T> {
    pub fn zero(l: usize) -> Self {
        IrrepBlock {
            l,
            coeffs: vec![T::zero(); l + 1],
        }
    }

    pub fn basis(l: usize, k: usize) -> Self {
        let mut b = Self::zero(l);
        b.coeffs[k] = T::one();
        b
    }

    pub fn new(l: usize, coeffs: Vec<T>) -> Result<Self, RepError> {
        if coeffs.len() != l + 1 {
            return Err(RepError::BadLength {
                expected: l + 1,
                got: coeffs.len(),
            });
        }
        Ok(IrrepBlock { l, coeffs })
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// Weight of `w_k` under the diagonal direction `h`.
    pub fn weight_of(l: usize, k: usize) -> i64 {
        l as i64 - 2 * k as i64
    }
}

/// `h . v`: scales `w_k` by `l - 2k`.
pub fn act_h<T: Coeff>(v: &IrrepBlock<T>) -> IrrepBlock<T> {
    let coeffs = v
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c.clone() * T::from_int(IrrepBlock::<T>::weight_of(v.l, k)))
        .collect();
    IrrepBlock { l: v.l, coeffs }
}

/// `n . v`: sends `w_k` to `k w_{k-1}`.
pub fn act_n<T: Coeff>(v: &IrrepBlock<T>) -> IrrepBlock<T> {
    let mut coeffs = vec![T::zero(); v.l + 1];
    for (k, c) in v.coeffs.iter().enumerate().skip(1) {
        coeffs[k - 1] = c.clone() * T::from_int(k as i64);
    }
    IrrepBlock { l: v.l, coeffs }
}

/// `u_r v` through the binomial formula, exact over exact scalars.
pub fn act_unipotent<T: Coeff>(v: &IrrepBlock<T>, r: &T) -> IrrepBlock<T> {
    let l = v.l;
    let mut coeffs = vec![T::zero(); l + 1];
    for (k, c) in v.coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let mut r_pow = T::one();
        // j runs downward so the power of r grows as k - j.
        for j in (0..=k).rev() {
            let term = binomial::<T>(k as u32, j as u32) * r_pow.clone() * c.clone();
            coeffs[j] = coeffs[j].clone() + term;
            r_pow = r_pow * r.clone();
        }
    }
    IrrepBlock { l, coeffs }
}

/// Diagonal action `a_t`: scales `w_k` by `e^{t(l-2k)/2}` (the `t/2`
/// normalization of `diag(e^{t/2}, e^{-t/2})`).
pub fn act_diag(v: &IrrepBlock<f64>, t: f64) -> Result<IrrepBlock<f64>, RepError> {
    let worst = (t * v.l as f64 / 2.0).abs();
    if worst > 300.0 {
        return Err(RepError::DiagOverflow(worst));
    }
    let coeffs = v
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c * (t * IrrepBlock::<f64>::weight_of(v.l, k) as f64 / 2.0).exp())
        .collect();
    Ok(IrrepBlock { l: v.l, coeffs })
}

/// Quarter-turn `J`: signed reversal `w_k -> (-1)^k w_{l-k}`.
pub fn act_j<T: Coeff>(v: &IrrepBlock<T>) -> IrrepBlock<T> {
    let l = v.l;
    let mut coeffs = vec![T::zero(); l + 1];
    for (k, c) in v.coeffs.iter().enumerate() {
        let sign = if k % 2 == 0 { T::one() } else { -T::one() };
        coeffs[l - k] = sign * c.clone();
    }
    IrrepBlock { l, coeffs }
}

/// Weight-sign parts of a representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Plus,
    Zero,
    Minus,
    PlusZero,
    ZeroMinus,
}

impl Part {
    pub fn keeps(self, weight: i64) -> bool {
        match self {
            Part::Plus => weight > 0,
            Part::Zero => weight == 0,
            Part::Minus => weight < 0,
            Part::PlusZero => weight >= 0,
            Part::ZeroMinus => weight <= 0,
        }
    }
}

/// Projects onto the span of basis vectors whose weight sign matches.
pub fn project_block<T: Coeff>(v: &IrrepBlock<T>, part: Part) -> IrrepBlock<T> {
    let coeffs = v
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            if part.keeps(IrrepBlock::<T>::weight_of(v.l, k)) {
                c.clone()
            } else {
                T::zero()
            }
        })
        .collect();
    IrrepBlock { l: v.l, coeffs }
}

/// A direct sum of irreducible blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RepVector<T: Coeff> {
    pub blocks: Vec<IrrepBlock<T>>,
}

impl<T: Coeff> RepVector<T> {
    pub fn new(blocks: Vec<IrrepBlock<T>>) -> Self {
        RepVector { blocks }
    }

    pub fn map_blocks(&self, f: impl Fn(&IrrepBlock<T>) -> IrrepBlock<T>) -> Self {
        RepVector {
            blocks: self.blocks.iter().map(f).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.l + 1).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.is_zero())
    }
}

/// Blockwise projection; commutes with every blockwise action.
pub fn project<T: Coeff>(v: &RepVector<T>, part: Part) -> RepVector<T> {
    v.map_blocks(|b| project_block(b, part))
}

/// Basis of the lemma space `{ v in V^{0-} : u_r v in V^{0-} }` inside the
/// irreducible of even highest weight `l = 2p`, expressed by coefficients
/// `(c_p, ..., c_{2p})`. Solves the `p x (p+1)` system whose `j`-th row
/// (`j = 0..p-1`) reads `sum_k C(k,j) r^{k-j} c_k = 0`.
pub fn solve_lemma_space<T: Coeff>(l: usize, r: &T) -> Result<Vec<IrrepBlock<T>>, RepError> {
    if !l.is_multiple_of(2) || l == 0 {
        return Err(RepError::OddHighestWeight(l));
    }
    if r.is_zero() {
        return Err(RepError::ZeroParameter);
    }
    let p = l / 2;
    // rows: j = 0..p-1; cols: c_{p+i}, i = 0..p.
    let mut rows = Vec::with_capacity(p);
    for j in 0..p {
        let row: Vec<T> = (0..=p)
            .map(|i| {
                let k = p + i;
                binomial::<T>(k as u32, j as u32) * pow(r, k - j)
            })
            .collect();
        rows.push(row);
    }
    let null = nullspace(rows, p + 1);
    Ok(null
        .into_iter()
        .map(|tail| {
            let mut coeffs = vec![T::zero(); l + 1];
            coeffs[p..=2 * p].clone_from_slice(&tail);
            IrrepBlock { l, coeffs }
        })
        .collect())
}

/// Report of [`verify_key_lemma`].
#[derive(Debug, Clone)]
pub struct LemmaReport {
    /// `q^0(u_r v) = J q^0(v)` on the whole lemma space.
    pub identity_ok: bool,
    /// The system restricted to `V^-` has only the zero solution.
    pub minus_claim_ok: bool,
    /// Largest identity residual (exactly zero over rationals).
    pub max_residual: f64,
    /// Dimension of the lemma space (expected: one).
    pub space_dim: usize,
}

/// Verifies the two claims of the key identity for the irreducible of even
/// highest weight `l` and unipotent parameter `r`.
pub fn verify_key_lemma<T: Coeff>(l: usize, r: &T) -> Result<LemmaReport, RepError> {
    let basis = solve_lemma_space(l, r)?;
    let p = l / 2;
    let mut identity_ok = true;
    let mut max_residual = 0.0f64;
    for v in &basis {
        let lhs = project_block(&act_unipotent(v, r), Part::Zero);
        let rhs = act_j(&project_block(v, Part::Zero));
        let scale: f64 = v.coeffs.iter().map(|c| c.magnitude()).fold(0.0, f64::max);
        for k in 0..=l {
            let diff = lhs.coeffs[k].clone() - rhs.coeffs[k].clone();
            if T::EXACT {
                if !diff.is_zero() {
                    identity_ok = false;
                    max_residual = max_residual.max(diff.magnitude());
                }
            } else {
                let rel = diff.magnitude() / scale.max(1.0);
                max_residual = max_residual.max(rel);
                if rel > 1e-9 {
                    identity_ok = false;
                }
            }
        }
    }
    // V^- restriction: unknowns c_{p+1..2p}, same row functionals.
    let mut rows = Vec::with_capacity(p);
    for j in 0..p {
        let row: Vec<T> = (1..=p)
            .map(|i| {
                let k = p + i;
                binomial::<T>(k as u32, j as u32) * pow(r, k - j)
            })
            .collect();
        rows.push(row);
    }
    let minus_kernel = nullspace(rows, p);
    Ok(LemmaReport {
        identity_ok,
        minus_claim_ok: minus_kernel.is_empty(),
        max_residual,
        space_dim: basis.len(),
    })
}

/// Report of [`polynomial_oracle`].
#[derive(Debug, Clone)]
pub struct OracleReport {
    /// All antiderivative constraints `F_i(1) = 0`, `i = 1..p`, hold.
    pub constraints_hold: bool,
    /// `F_p` equals `C x^p (x-1)^p` exactly.
    pub f_p_factored: bool,
    /// The factored constant `C`.
    pub c: BigRational,
    /// `f(1)`, the middle-weight coefficient of `u_r v`.
    pub f1: BigRational,
}

/// Exact polynomial route to the key identity. Builds
/// `f(x) = sum_k C(k,p) r^{k-p} c_k x^{k-p}` from the tail coefficients
/// `(c_p, ..., c_{2p})`, integrates it `p` times from zero, and reports the
/// structure of the result.
pub fn polynomial_oracle(
    p: usize,
    tail: &[BigRational],
    r: &BigRational,
) -> Result<OracleReport, RepError> {
    use num::Zero;
    if r.is_zero() {
        return Err(RepError::ZeroParameter);
    }
    if tail.len() != p + 1 {
        return Err(RepError::BadLength {
            expected: p + 1,
            got: tail.len(),
        });
    }
    let f = RationalPolynomial::new(
        (0..=p)
            .map(|i| {
                let k = p + i;
                binomial::<BigRational>(k as u32, p as u32) * pow(r, i) * tail[i].clone()
            })
            .collect(),
    );
    let one: BigRational = Coeff::from_int(1);
    let f1 = f.eval(&one);
    let mut constraints_hold = true;
    let mut fi = f.clone();
    for _ in 1..=p {
        fi = fi.integral();
        if !fi.eval(&one).is_zero() {
            constraints_hold = false;
        }
    }
    // fi is now F_p, of degree <= 2p; compare to C x^p (x-1)^p with C read
    // off the top coefficient.
    let c = fi.coeff(2 * p);
    let x_minus_1 = Polynomial::new(vec![-one.clone(), one.clone()]);
    let mut model = Polynomial::constant(c.clone());
    for _ in 0..p {
        model = model.mul(&x_minus_1);
    }
    let mut shifted = vec![BigRational::zero(); p];
    shifted.extend(model.coeffs.clone());
    let model = Polynomial::new(shifted);
    let f_p_factored = (0..=2 * p).all(|d| fi.coeff(d) == model.coeff(d));
    Ok(OracleReport {
        constraints_hold,
        f_p_factored,
        c,
        f1,
    })
}

/// Whether a tail vector `(c_p, ..., c_{2p})` lies in the span of the lemma
/// space returned by [`solve_lemma_space`]. Used to cross-check the oracle.
pub fn in_lemma_span(l: usize, r: &BigRational, tail: &[BigRational]) -> Result<bool, RepError> {
    use num::Zero;
    let basis = solve_lemma_space::<BigRational>(l, r)?;
    let p = l / 2;
    if tail.len() != p + 1 {
        return Err(RepError::BadLength {
            expected: p + 1,
            got: tail.len(),
        });
    }
    let mut residual: Vec<BigRational> = tail.to_vec();
    for b in &basis {
        let btail = &b.coeffs[p..=2 * p];
        let pivot = btail.iter().position(|c| !c.is_zero());
        if let Some(j) = pivot {
            let factor = residual[j].clone() / btail[j].clone();
            for (res, bc) in residual.iter_mut().zip(btail.iter()) {
                *res = res.clone() - factor.clone() * bc.clone();
            }
        }
    }
    Ok(residual.iter().all(|c| c.is_zero()))
}

fn pow<T: Coeff>(r: &T, e: usize) -> T {
    let mut acc = T::one();
    for _ in 0..e {
        acc = acc * r.clone();
    }
    acc
}

/// Nullspace basis of a row-major system by Gauss-Jordan elimination. Over
/// rationals the elimination is exact; over floats a relative pivot
/// threshold decides rank.
#[allow(clippy::needless_range_loop)]
fn nullspace<T: Coeff>(mut rows: Vec<Vec<T>>, cols: usize) -> Vec<Vec<T>> {
    let scale = rows
        .iter()
        .flatten()
        .map(|c| c.magnitude())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut pivot_cols = Vec::new();
    let mut rank = 0usize;
    for col in 0..cols {
        let pivot = (rank..rows.len()).max_by(|&a, &b| {
            rows[a][col]
                .magnitude()
                .partial_cmp(&rows[b][col].magnitude())
                .unwrap()
        });
        let Some(pr) = pivot else { break };
        let mag = rows[pr][col].magnitude();
        let negligible = if T::EXACT {
            rows[pr][col].is_zero()
        } else {
            mag <= 1e-12 * scale
        };
        if negligible {
            continue;
        }
        rows.swap(rank, pr);
        let inv_lead = T::one() / rows[rank][col].clone();
        for c in col..cols {
            rows[rank][c] = rows[rank][c].clone() * inv_lead.clone();
        }
        for r in 0..rows.len() {
            if r != rank && !rows[r][col].is_zero() {
                let factor = rows[r][col].clone();
                for c in col..cols {
                    let delta = factor.clone() * rows[rank][c].clone();
                    rows[r][c] = rows[r][c].clone() - delta;
                }
            }
        }
        pivot_cols.push(col);
        rank += 1;
    }
    let free_cols: Vec<usize> = (0..cols).filter(|c| !pivot_cols.contains(c)).collect();
    free_cols
        .into_iter()
        .map(|fc| {
            let mut v = vec![T::zero(); cols];
            v[fc] = T::one();
            for (ri, &pc) in pivot_cols.iter().enumerate() {
                v[pc] = -rows[ri][fc].clone();
            }
            v
        })
        .collect()
}

/// Result of the two-sided expansion estimate.
#[derive(Debug, Clone)]
pub struct KappaEstimate {
    /// Smallest sampled (and locally refined) value of
    /// `max(|v^+|, |(u v)^{+0}|)` over unit vectors.
    pub kappa_hat: f64,
    /// Unit vector attaining the minimum.
    pub argmin: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
}

/// Stochastic lower-bound estimator for the constant `kappa` in
/// `max(|v^+|, |(u v)^{+0}|) >= kappa |v|`.
///
/// `weights` give the diagonal grading of the basis and `unipotent` is the
/// matrix of the fixed unipotent in that basis. Sampling is uniform on the
/// unit sphere with one RNG stream per batch, followed by a deterministic
/// coordinate-descent refinement from the best sample; the reported value is
/// an estimate, not a certified minimum.
pub fn kappa_estimate(
    weights: &[i64],
    unipotent: &DMatrix<f64>,
    trials: u64,
    seed: u64,
) -> Result<KappaEstimate, RepError> {
    let dim = weights.len();
    assert_eq!(unipotent.nrows(), dim);
    assert_eq!(unipotent.ncols(), dim);
    if (unipotent - DMatrix::identity(dim, dim)).amax() < 1e-14 {
        // u = e makes the inequality fail on V^-; reject as degenerate.
        return Err(RepError::ZeroParameter);
    }
    let batches = trials.div_ceil(BATCH_SIZE);
    let objective = |v: &[f64]| -> f64 { kappa_objective(weights, unipotent, v) };
    let best_per_batch = exec::map_batches(batches, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b);
        let len = exec::batch_len(b, trials);
        let mut best = (f64::INFINITY, vec![0.0; dim]);
        for _ in 0..len {
            let v = random_unit(&mut rng, dim);
            let m = objective(&v);
            if m < best.0 {
                best = (m, v);
            }
        }
        best
    });
    let mut best = (f64::INFINITY, vec![0.0; dim]);
    for cand in best_per_batch {
        if cand.0 < best.0 {
            best = cand;
        }
    }
    // Coordinate descent on the sphere around the best sample.
    let mut step = 0.25f64;
    let (mut val, mut v) = best;
    while step > 1e-6 {
        let mut improved = false;
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut cand = v.clone();
                cand[i] += sign * step;
                normalize(&mut cand);
                let m = objective(&cand);
                if m < val {
                    val = m;
                    v = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    assert!(val > 0.0, "kappa estimate collapsed to zero");
    Ok(KappaEstimate {
        kappa_hat: val,
        argmin: v,
        trials,
        seed,
    })
}

/// Counts violations of `max(|v^+|, |(u v)^{+0}|) >= kappa |v|` over fresh
/// seeded unit vectors.
pub fn kappa_violations(
    weights: &[i64],
    unipotent: &DMatrix<f64>,
    kappa: f64,
    samples: u64,
    seed: u64,
) -> u64 {
    let dim = weights.len();
    let batches = samples.div_ceil(BATCH_SIZE);
    let counts = exec::map_batches(batches, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b);
        let len = exec::batch_len(b, samples);
        let mut bad = 0u64;
        for _ in 0..len {
            let v = random_unit(&mut rng, dim);
            if kappa_objective(weights, unipotent, &v) < kappa {
                bad += 1;
            }
        }
        bad
    });
    counts.iter().sum()
}

fn kappa_objective(weights: &[i64], unipotent: &DMatrix<f64>, v: &[f64]) -> f64 {
    let dim = weights.len();
    let mut plus_sq = 0.0f64;
    for i in 0..dim {
        if weights[i] > 0 {
            plus_sq += v[i] * v[i];
        }
    }
    let mut uplus0_sq = 0.0f64;
    for i in 0..dim {
        if weights[i] >= 0 {
            let mut row = 0.0;
            for j in 0..dim {
                row += unipotent[(i, j)] * v[j];
            }
            uplus0_sq += row * row;
        }
    }
    plus_sq.sqrt().max(uplus0_sq.sqrt())
}

/// Matrix of `u_r` on a direct sum of blocks given by their highest weights,
/// for feeding the kappa estimator.
pub fn unipotent_matrix(shape: &[usize], r: f64) -> (Vec<i64>, DMatrix<f64>) {
    let dim: usize = shape.iter().map(|l| l + 1).sum();
    let mut weights = Vec::with_capacity(dim);
    let mut mat = DMatrix::zeros(dim, dim);
    let mut offset = 0;
    for &l in shape {
        for k in 0..=l {
            weights.push(IrrepBlock::<f64>::weight_of(l, k));
        }
        for k in 0..=l {
            let image = act_unipotent(&IrrepBlock::<f64>::basis(l, k), &r);
            for j in 0..=l {
                mat[(offset + j, offset + k)] = image.coeffs[j];
            }
        }
        offset += l + 1;
    }
    (weights, mat)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        // Gaussian components keep the sphere distribution uniform.
        let mut v: Vec<f64> = (0..dim)
            .map(|_| {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                (-2.0 * u1.ln()).sqrt() * u2.cos()
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}
