//! Exact special-case solutions used as oracles elsewhere in the crate:
//! the Marchenko-Pastur-type law for proportional-to-identity scalings, and
//! the reduction of scale-multiple models to an equivalent scalar system.

use thiserror::Error;

use crate::kernel::{HalfPlanePoint, C64};
use crate::measure::{DiscreteMeasureK, MeasureError, ModelSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ClosedFormError {
    #[error("scale vectors must have strictly positive entries")]
    NonpositiveScale,
    #[error("scale vectors must have equal nonzero length")]
    LengthMismatch,
    #[error("reduction requires one-dimensional input laws")]
    NotOneDimensional,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Parameters of the Marchenko-Pastur-type law with effective scale
/// `gamma = alpha . beta`; the support edges are `gamma (1 +- sqrt(c))^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpParams {
    pub gamma: f64,
    pub c: f64,
    pub lower_edge: f64,
    pub upper_edge: f64,
}

/// Build [`MpParams`] for row scalings `alpha_r I` and column scalings `beta_r I`.
pub fn mp_params(alpha: &[f64], beta: &[f64], c: f64) -> Result<MpParams, ClosedFormError> {
    if alpha.is_empty() || alpha.len() != beta.len() {
        return Err(ClosedFormError::LengthMismatch);
    }
    if alpha.iter().chain(beta).any(|&x| !(x > 0.0)) || !(c > 0.0) {
        return Err(ClosedFormError::NonpositiveScale);
    }
    let gamma: f64 = alpha.iter().zip(beta).map(|(a, b)| a * b).sum();
    let sq = c.sqrt();
    Ok(MpParams {
        gamma,
        c,
        lower_edge: gamma * (1.0 - sq) * (1.0 - sq),
        upper_edge: gamma * (1.0 + sq) * (1.0 + sq),
    })
}

/// Stieltjes transform of the MP-type law on the upper half-plane.
///
/// Both square-root branches are evaluated and the one mapping into `C_+` is
/// kept; for `Im z > 0` exactly one of them does, so there is no tie to break.
pub fn mp_stieltjes(z: HalfPlanePoint, params: &MpParams) -> C64 {
    let z = z.get();
    let (gamma, c) = (params.gamma, params.c);
    let denom = 2.0 * c * gamma * z;
    let base = (gamma * (1.0 - c) - z) / denom;
    let root = ((z - params.upper_edge) * (z - params.lower_edge)).sqrt() / denom;
    let s = base + root;
    if s.im > 0.0 {
        s
    } else {
        base - root
    }
}

/// Density of the MP-type law at `x > 0`; zero off the support.
///
/// At `c = 1` the density has an integrable `1/sqrt(x)` singularity at the
/// origin; values there are correct but large, and callers sampling near zero
/// should use a grid refined toward the lower edge.
pub fn mp_density(x: f64, params: &MpParams) -> f64 {
    if x <= params.lower_edge || x >= params.upper_edge || x <= 0.0 {
        return 0.0;
    }
    ((params.upper_edge - x) * (x - params.lower_edge)).sqrt()
        / (2.0 * std::f64::consts::PI * params.c * params.gamma * x)
}

/// The dual-side transform paired with [`mp_stieltjes`] in oracle checks:
/// `s_dual = c s + (c - 1)/z`.
pub fn mp_dual_stieltjes(z: HalfPlanePoint, params: &MpParams) -> C64 {
    let s = mp_stieltjes(z, params);
    params.c * s + (params.c - 1.0) / z.get()
}

/// Outcome of reducing a scale-multiple model to a scalar fixed-point problem.
///
/// The scalar model couples the pushforward of `H1` under `x -> coupling * x`
/// with `G1` unchanged, at the same aspect ratio. Solutions lift back by
/// `h_r = a_r * h_scalar / coupling` and `g_r = b_r * g_scalar`.
#[derive(Debug, Clone)]
pub struct ScaleReduction {
    pub scalar: ModelSpec,
    pub coupling: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ScaleReduction {
    pub fn lift_h(&self, h_scalar: C64) -> Vec<C64> {
        self.a.iter().map(|&ar| h_scalar * (ar / self.coupling)).collect()
    }

    pub fn lift_g(&self, g_scalar: C64) -> Vec<C64> {
        self.b.iter().map(|&br| g_scalar * br).collect()
    }

    /// The K-dimensional model this reduction was built from.
    pub fn full_model(&self, c: f64) -> Result<ModelSpec, ClosedFormError> {
        let lift = |m: &DiscreteMeasureK, scales: &[f64]| -> Result<DiscreteMeasureK, ClosedFormError> {
            let atoms: Vec<Vec<f64>> = m
                .iter()
                .map(|(atom, _)| scales.iter().map(|&s| s * atom[0]).collect())
                .collect();
            let weights: Vec<f64> = m.iter().map(|(_, w)| w).collect();
            Ok(DiscreteMeasureK::new(atoms, weights)?)
        };
        // undo the coupling fold on the H side
        let h1_atoms: Vec<Vec<f64>> = self
            .scalar
            .row_law
            .iter()
            .map(|(atom, _)| vec![atom[0] / self.coupling])
            .collect();
        let h1_weights: Vec<f64> = self.scalar.row_law.iter().map(|(_, w)| w).collect();
        let h1 = DiscreteMeasureK::new(h1_atoms, h1_weights)?;
        Ok(ModelSpec::new(
            c,
            lift(&h1, &self.a)?,
            lift(&self.scalar.col_law, &self.b)?,
        ))
    }
}

/// Reduce a model whose marginal laws are scale multiples of common
/// one-dimensional laws `H1`, `G1` to an equivalent scalar system.
pub fn scale_multiple_reduce(
    a: &[f64],
    b: &[f64],
    h1: &DiscreteMeasureK,
    g1: &DiscreteMeasureK,
    c: f64,
) -> Result<ScaleReduction, ClosedFormError> {
    if a.is_empty() || a.len() != b.len() {
        return Err(ClosedFormError::LengthMismatch);
    }
    if a.iter().chain(b).any(|&x| !(x > 0.0)) || !(c > 0.0) {
        return Err(ClosedFormError::NonpositiveScale);
    }
    if h1.dim() != 1 || g1.dim() != 1 {
        return Err(ClosedFormError::NotOneDimensional);
    }
    let coupling: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let scaled_atoms: Vec<Vec<f64>> = h1.iter().map(|(atom, _)| vec![coupling * atom[0]]).collect();
    let scaled_weights: Vec<f64> = h1.iter().map(|(_, w)| w).collect();
    let row = DiscreteMeasureK::new(scaled_atoms, scaled_weights)?;
    Ok(ScaleReduction {
        scalar: ModelSpec::new(c, row, g1.clone()),
        coupling,
        a: a.to_vec(),
        b: b.to_vec(),
    })
}
