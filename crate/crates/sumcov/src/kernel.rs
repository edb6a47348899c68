//! The spectral kernel `O(z, p, mu)` and the self-maps whose fixed points
//! characterize the limiting spectral distribution.
//!
//! For a measure `mu` on `R_+^K`, a point `z` in the open upper half-plane and
//! a coefficient vector `p`, the kernel is the exact finite sum
//!
//! ```text
//! O_r(z, p, mu) = sum_j  w_j lambda_j[r] / ( -z (1 + lambda_j . p) )
//! ```
//!
//! Both self-maps are built from two nested kernel evaluations:
//! `P_z(h) = O(z, O(z, c h, G), H)` and `Q_z(g) = O(z, c O(z, g, H), G)`.
//! They map `C_+^K` strictly into itself, which is what makes damped Picard
//! iteration on them viable.

use num_complex::Complex64;
use thiserror::Error;

use crate::accum::KahanComplex;
use crate::measure::{DiscreteMeasureK, ModelSpec};

pub type C64 = Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("coefficient vector has length {got}, measure dimension is {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("kernel denominator vanished at atom {atom}")]
    SingularDenominator { atom: usize },
    #[error("component {index} does not lie in the open upper half-plane (im = {im})")]
    NotUpperHalfPlane { index: usize, im: f64 },
}

/// A point of the open upper half-plane `C_+`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlanePoint(C64);

impl HalfPlanePoint {
    pub fn new(z: C64) -> Result<Self, KernelError> {
        if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
            return Err(KernelError::NotUpperHalfPlane { index: 0, im: z.im });
        }
        Ok(Self(z))
    }

    pub fn from_parts(re: f64, im: f64) -> Result<Self, KernelError> {
        Self::new(C64::new(re, im))
    }

    pub fn get(self) -> C64 {
        self.0
    }

    pub fn im(self) -> f64 {
        self.0.im
    }

    pub fn re(self) -> f64 {
        self.0.re
    }
}

/// A vector in `C_+^K`: every component has strictly positive imaginary part.
/// Houses solver iterates and the solved transform vectors h(z), g(z).
#[derive(Debug, Clone, PartialEq)]
pub struct UpperVectorK(Vec<C64>);

impl UpperVectorK {
    pub fn new(values: Vec<C64>) -> Result<Self, KernelError> {
        for (index, v) in values.iter().enumerate() {
            if !(v.im > 0.0) || !v.re.is_finite() || !v.im.is_finite() {
                return Err(KernelError::NotUpperHalfPlane { index, im: v.im });
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[C64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Constant vector `i t` with `t > 0`, the canonical solver start.
    pub fn constant_imaginary(dim: usize, t: f64) -> Result<Self, KernelError> {
        Self::new(vec![C64::new(0.0, t); dim])
    }
}

impl std::ops::Index<usize> for UpperVectorK {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

/// Sup-norm distance between two complex vectors.
pub(crate) fn sup_distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Evaluate the kernel at arbitrary complex coefficients `p`.
///
/// `p` is allowed on the closed half-plane (e.g. the zero vector) so that
/// boundary probes are expressible; strict positivity is enforced only on
/// [`UpperVectorK`]. Atoms are accumulated in input order with compensated
/// summation, so results are bitwise reproducible.
pub fn kernel_o(
    z: HalfPlanePoint,
    p: &[C64],
    mu: &DiscreteMeasureK,
) -> Result<Vec<C64>, KernelError> {
    let k = mu.dim();
    if p.len() != k {
        return Err(KernelError::DimensionMismatch {
            got: p.len(),
            expected: k,
        });
    }
    let z = z.get();
    let mut acc = vec![KahanComplex::default(); k];
    for (j, (atom, w)) in mu.iter().enumerate() {
        let mut dot = C64::new(0.0, 0.0);
        for (lam, pr) in atom.iter().zip(p) {
            dot += pr * *lam;
        }
        let denom = -z * (C64::new(1.0, 0.0) + dot);
        if denom.norm_sqr() == 0.0 {
            return Err(KernelError::SingularDenominator { atom: j });
        }
        let factor = w / denom;
        for (a, lam) in acc.iter_mut().zip(atom) {
            a.add(factor * lam);
        }
    }
    Ok(acc.into_iter().map(|a| a.value()).collect())
}

fn scaled(h: &[C64], c: f64) -> Vec<C64> {
    h.iter().map(|v| v * c).collect()
}

/// One application of the h-side self-map `P_z`.
pub fn map_p(
    h: &UpperVectorK,
    z: HalfPlanePoint,
    spec: &ModelSpec,
) -> Result<UpperVectorK, KernelError> {
    let g = kernel_o(z, &scaled(h.values(), spec.c), &spec.col_law)?;
    UpperVectorK::new(kernel_o(z, &g, &spec.row_law)?)
}

/// One application of the g-side self-map `Q_z`.
pub fn map_q(
    g: &UpperVectorK,
    z: HalfPlanePoint,
    spec: &ModelSpec,
) -> Result<UpperVectorK, KernelError> {
    let h = kernel_o(z, g.values(), &spec.row_law)?;
    UpperVectorK::new(kernel_o(z, &scaled(&h, spec.c), &spec.col_law)?)
}
