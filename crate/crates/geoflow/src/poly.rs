//! Dense univariate polynomials over a [`Coeff`] scalar.
//!
//! Coefficients are stored in ascending degree. Over `BigRational` the
//! antiderivative operator is exact, which is what the coefficient-identity
//! oracle in [`crate::sl2rep`] relies on.

use crate::scalar::Coeff;

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<T: Coeff> {
    /// Ascending-degree coefficients; no trailing-zero normalization is
    /// enforced on construction.
    pub coeffs: Vec<T>,
}

impl<T: Coeff> Polynomial<T> {
    pub fn new(coeffs: Vec<T>) -> Self {
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: vec![] }
    }

    pub fn constant(c: T) -> Self {
        Polynomial { coeffs: vec![c] }
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| !c.is_zero())
    }

    pub fn is_zero(&self) -> bool {
        self.degree().is_none()
    }

    pub fn eval(&self, x: &T) -> T {
        let mut acc = T::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x.clone() + c.clone();
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(d, c)| c.clone() * T::from_int(d as i64))
            .collect();
        Polynomial { coeffs }
    }

    /// Antiderivative vanishing at 0: maps `a_d x^d` to `a_d/(d+1) x^{d+1}`.
    pub fn integral(&self) -> Self {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(T::zero());
        for (d, c) in self.coeffs.iter().enumerate() {
            coeffs.push(c.clone() / T::from_int(d as i64 + 1));
        }
        Polynomial { coeffs }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let coeffs = (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).cloned().unwrap_or_else(T::zero);
                let b = other.coeffs.get(i).cloned().unwrap_or_else(T::zero);
                a + b
            })
            .collect();
        Polynomial { coeffs }
    }

    pub fn scale(&self, k: &T) -> Self {
        Polynomial {
            coeffs: self.coeffs.iter().map(|c| c.clone() * k.clone()).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Polynomial::zero();
        }
        let mut coeffs = vec![T::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] = coeffs[i + j].clone() + a.clone() * b.clone();
            }
        }
        Polynomial { coeffs }
    }

    pub fn coeff(&self, d: usize) -> T {
        self.coeffs.get(d).cloned().unwrap_or_else(T::zero)
    }
}
