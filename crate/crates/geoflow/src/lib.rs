//! Numerical laboratory for the dynamics of expanding curve translates on
//! hyperbolic homogeneous spaces.
//!
//! The crate is organized around five subsystems:
//!
//! - [`lingroup`] — an explicit matrix model of `SO(n,1)`: the quadratic form,
//!   the diagonal/unipotent/rotation subgroups, the horospherical
//!   decomposition, the visual (boundary) map, and per-direction `SL(2,R)`
//!   embeddings.
//! - [`sl2rep`] — irreducible `SL(2,R)` representations in the weight basis,
//!   weight-space projections, an exact-rational verifier for the key
//!   coefficient identity satisfied by unipotent images of lowest-weight
//!   vectors, and a seeded estimator for the two-sided expansion constant.
//! - [`extadj`] — adjoint and exterior-power representations of `so(n,1)`
//!   with explicit weight gradings, curve-evaluated unipotent operators,
//!   sublevel-set diagnostics, and an SVD solver for vectors that stay in the
//!   non-expanding part along a curve.
//! - [`curves`] — analytic curves into `R^{n-1}` (polynomial plus sinusoidal
//!   components), unit-speed reparametrization, rotating frames, polar data,
//!   and subsphere/hyperplane detection via the null-cone lift.
//! - [`homsim`] — desk-scale Monte Carlo verification of equidistribution,
//!   nondivergence, and translation-invariance on the modular surface
//!   (`SL(2,R)/SL(2,Z)`) and the Picard orbifold (`SL(2,C)/SL(2,Z[i])`).
//!
//! Sampling loops are data-parallel via rayon when the `parallel` feature
//! (default) is enabled; results are bit-identical to the sequential
//! fallback because every batch draws from its own seeded RNG stream and
//! partial results are combined in a fixed order.

pub mod curves;
pub mod exec;
pub mod extadj;
pub mod homsim;
pub mod lingroup;
pub mod poly;
pub mod scalar;
pub mod sl2rep;
