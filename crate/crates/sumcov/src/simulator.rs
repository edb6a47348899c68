//! Finite-size realizations of the sample covariance ensemble.
//!
//! Scaling matrices are drawn factored: one shared eigenbasis per side and one
//! eigenvalue diagonal per component, so commutativity within each side holds
//! exactly by construction. The assembled data matrix is
//! `X = sum_r A_r^{1/2} Z_r B_r^{1/2}` and the sample covariance `S = X X*/n`.
//!
//! When the innovations are standard complex Gaussian the basis sandwich
//! `P* Z Q` has the law of `Z` itself, so the default path drops the bases and
//! works with scaled entries directly; the materialized path is kept for
//! non-invariant entry laws and for statistical cross-checks.
//!
//! Randomness comes from counter-derived ChaCha streams keyed by
//! `(seed, role, component)`, so every matrix is reproducible on its own and
//! generation order never matters.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lsd::CdfTable;
use crate::measure::{DiscreteMeasureK, MeasureError, ModelSpec};

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigensolve failed to converge")]
    EigensolveFailure,
    #[error("explicit eigenvalue list for component {component} has length {got}, expected {expected}")]
    BadExplicitList { component: usize, got: usize, expected: usize },
    #[error("truncation exponent a = {a} outside (1/(4+eta0), 1/4) for eta0 = {eta0}")]
    BadTruncationExponent { a: f64, eta0: f64 },
    #[error("eigenvalue law needs a positive scale, got {0}")]
    NonpositiveScale(f64),
    #[error("ensemble needs p, n >= 2, got p={p} n={n}")]
    TooSmall { p: usize, n: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Per-component eigenvalue generator for one side of the ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigLaw {
    Constant(f64),
    Exponential { scale: f64 },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMode {
    Identity,
    Haar,
    /// Single Householder reflector; kept for fidelity experiments against
    /// the ambiguous "one reflector vs full Haar" reading of the protocol.
    Reflector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Complex,
    Real,
}

/// Specification of the commuting scaling ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingEnsembleSpec {
    pub k: usize,
    pub p: usize,
    pub n: usize,
    pub eig_law_a: Vec<EigLaw>,
    pub eig_law_b: Vec<EigLaw>,
    pub basis_mode: BasisMode,
    pub field: FieldKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryLaw {
    ComplexGaussian,
    RealGaussian,
    /// Complex Gaussian with entries zeroed beyond `n^a`.
    TruncatedComplexGaussian { a: f64, eta0: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InnovationSpec {
    pub entry_law: EntryLaw,
    pub seed: u64,
}

impl InnovationSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if let EntryLaw::TruncatedComplexGaussian { a, eta0 } = self.entry_law {
            if !(eta0 > 0.0) || a <= 1.0 / (4.0 + eta0) || a >= 0.25 {
                return Err(SimError::BadTruncationExponent { a, eta0 });
            }
        }
        Ok(())
    }
}

/// Generation metadata carried with every sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub p: usize,
    pub n: usize,
    pub c_n: f64,
    pub ensemble_hash: String,
    pub innovation_hash: String,
    /// Max entrywise deviation of the assembled Gram matrix from Hermitian,
    /// measured before symmetrization and the eigensolve.
    pub hermiticity_defect: f64,
}

/// Sorted eigenvalues of one simulated sample covariance matrix.
#[derive(Debug, Clone)]
pub struct SpectralSample {
    /// Ascending, nonnegative; exactly `p` values with `p - n` structural
    /// zeros when `p > n`.
    pub eigenvalues: Vec<f64>,
    pub meta: SampleMeta,
}

/// Factored scaling matrices: a shared basis per side plus one diagonal per
/// component. Matrices are only materialized on request.
#[derive(Debug, Clone)]
pub struct ScalingSet {
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    basis_p: Option<CMatrix>,
    basis_q: Option<CMatrix>,
    diag_a: Vec<Vec<f64>>,
    diag_b: Vec<Vec<f64>>,
    hash: u64,
}

const ROLE_A_EIGS: u64 = 1;
const ROLE_B_EIGS: u64 = 2;
const ROLE_BASIS_P: u64 = 3;
const ROLE_BASIS_Q: u64 = 4;
const ROLE_INNOVATION: u64 = 5;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Independent ChaCha stream for one (seed, role, component) triple.
fn stream_rng(seed: u64, role: u64, component: u64) -> ChaCha8Rng {
    let mut state = splitmix(seed) ^ splitmix(role.wrapping_mul(0xA5A5_A5A5_A5A5_A5A5))
        ^ splitmix(component.wrapping_add(0x1234_5678_9ABC_DEF0));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Standard complex Gaussian entry: independent N(0, 1/2) real and imaginary
/// parts, so `E|z|^2 = 1`.
fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample::<f64, _>(StandardNormal) / std::f64::consts::SQRT_2;
    let im: f64 = rng.sample::<f64, _>(StandardNormal) / std::f64::consts::SQRT_2;
    Complex64::new(re, im)
}

/// Haar-distributed unitary: QR of a Ginibre matrix with the triangular
/// factor's diagonal phases folded back into Q.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { d / d.norm() };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Haar-distributed real orthogonal matrix, embedded as complex.
pub fn haar_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q.map(|x| Complex64::new(x, 0.0))
}

/// Single Householder reflector `I - 2 v v* / (v* v)` with a Gaussian vector.
pub fn reflector_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let v: Vec<Complex64> = (0..dim).map(|_| complex_gaussian(rng)).collect();
    let norm_sqr: f64 = v.iter().map(|x| x.norm_sqr()).sum();
    let mut u = CMatrix::identity(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            u[(i, j)] -= 2.0 * v[i] * v[j].conj() / norm_sqr;
        }
    }
    u
}

fn draw_diag(law: &EigLaw, len: usize, component: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, SimError> {
    match law {
        EigLaw::Constant(v) => {
            if !(*v >= 0.0) {
                return Err(SimError::NonpositiveScale(*v));
            }
            Ok(vec![*v; len])
        }
        EigLaw::Exponential { scale } => {
            if !(*scale > 0.0) {
                return Err(SimError::NonpositiveScale(*scale));
            }
            let exp = Exp::new(1.0 / scale).expect("positive rate");
            Ok((0..len).map(|_| exp.sample(rng)).collect())
        }
        EigLaw::Explicit(values) => {
            if values.len() != len {
                return Err(SimError::BadExplicitList {
                    component,
                    got: values.len(),
                    expected: len,
                });
            }
            if let Some(bad) = values.iter().find(|v| !(**v >= 0.0)) {
                return Err(SimError::NonpositiveScale(*bad));
            }
            Ok(values.clone())
        }
    }
}

fn fnv1a_f64s(seed: u64, values: impl Iterator<Item = f64>) -> u64 {
    let mut hash = seed ^ 0xcbf29ce484222325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}

impl ScalingSet {
    pub fn k(&self) -> usize {
        self.diag_a.len()
    }

    pub fn diag_a(&self, r: usize) -> &[f64] {
        &self.diag_a[r]
    }

    pub fn diag_b(&self, r: usize) -> &[f64] {
        &self.diag_b[r]
    }

    pub fn has_bases(&self) -> bool {
        self.basis_p.is_some()
    }

    /// Materialize the r-th row-side scaling matrix `P D_r P*`.
    pub fn materialize_row(&self, r: usize) -> CMatrix {
        materialize(self.basis_p.as_ref(), &self.diag_a[r])
    }

    /// Materialize the r-th column-side scaling matrix `Q E_r Q*`.
    pub fn materialize_col(&self, r: usize) -> CMatrix {
        materialize(self.basis_q.as_ref(), &self.diag_b[r])
    }

    /// Empirical JESD of the row-side eigenvalue tuples (weight 1/p each).
    pub fn row_jesd(&self) -> Result<DiscreteMeasureK, MeasureError> {
        let tuples: Vec<Vec<f64>> = (0..self.p)
            .map(|j| self.diag_a.iter().map(|d| d[j]).collect())
            .collect();
        DiscreteMeasureK::from_eigenvalue_tuples(tuples)
    }

    /// Empirical JESD of the column-side eigenvalue tuples (weight 1/n each).
    pub fn col_jesd(&self) -> Result<DiscreteMeasureK, MeasureError> {
        let tuples: Vec<Vec<f64>> = (0..self.n)
            .map(|j| self.diag_b.iter().map(|d| d[j]).collect())
            .collect();
        DiscreteMeasureK::from_eigenvalue_tuples(tuples)
    }

    pub fn content_hash(&self) -> u64 {
        self.hash
    }
}

fn materialize(basis: Option<&CMatrix>, diag: &[f64]) -> CMatrix {
    let dim = diag.len();
    match basis {
        None => CMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
        Some(u) => {
            let mut scaled = u.clone();
            for j in 0..dim {
                for i in 0..dim {
                    scaled[(i, j)] *= diag[j];
                }
            }
            &scaled * u.adjoint()
        }
    }
}

/// Draw the factored scaling matrices for one ensemble realization.
pub fn sample_scalings(spec: &ScalingEnsembleSpec, seed: u64) -> Result<ScalingSet, SimError> {
    if spec.p < 2 || spec.n < 2 {
        return Err(SimError::TooSmall { p: spec.p, n: spec.n });
    }
    if spec.eig_law_a.len() != spec.k || spec.eig_law_b.len() != spec.k {
        return Err(SimError::DimensionMismatch(format!(
            "need {} eigenvalue laws per side, got {} (A) and {} (B)",
            spec.k,
            spec.eig_law_a.len(),
            spec.eig_law_b.len()
        )));
    }
    let mut diag_a = Vec::with_capacity(spec.k);
    let mut diag_b = Vec::with_capacity(spec.k);
    for r in 0..spec.k {
        let mut rng_a = stream_rng(seed, ROLE_A_EIGS, r as u64);
        diag_a.push(draw_diag(&spec.eig_law_a[r], spec.p, r, &mut rng_a)?);
        let mut rng_b = stream_rng(seed, ROLE_B_EIGS, r as u64);
        diag_b.push(draw_diag(&spec.eig_law_b[r], spec.n, r, &mut rng_b)?);
    }
    let (basis_p, basis_q) = match spec.basis_mode {
        BasisMode::Identity => (None, None),
        BasisMode::Haar => {
            let mut rng_p = stream_rng(seed, ROLE_BASIS_P, 0);
            let mut rng_q = stream_rng(seed, ROLE_BASIS_Q, 0);
            match spec.field {
                FieldKind::Complex => (
                    Some(haar_unitary(spec.p, &mut rng_p)),
                    Some(haar_unitary(spec.n, &mut rng_q)),
                ),
                FieldKind::Real => (
                    Some(haar_orthogonal(spec.p, &mut rng_p)),
                    Some(haar_orthogonal(spec.n, &mut rng_q)),
                ),
            }
        }
        BasisMode::Reflector => {
            let mut rng_p = stream_rng(seed, ROLE_BASIS_P, 0);
            let mut rng_q = stream_rng(seed, ROLE_BASIS_Q, 0);
            (
                Some(reflector_unitary(spec.p, &mut rng_p)),
                Some(reflector_unitary(spec.n, &mut rng_q)),
            )
        }
    };
    let mut hash = fnv1a_f64s(seed, diag_a.iter().flatten().copied());
    hash = fnv1a_f64s(hash, diag_b.iter().flatten().copied());
    Ok(ScalingSet {
        p: spec.p,
        n: spec.n,
        seed,
        basis_p,
        basis_q,
        diag_a,
        diag_b,
        hash,
    })
}

/// Fill one innovation matrix from its dedicated stream (column-major order).
pub fn innovation_matrix(
    law: EntryLaw,
    p: usize,
    n: usize,
    seed: u64,
    component: usize,
) -> Result<CMatrix, SimError> {
    InnovationSpec { entry_law: law, seed }.validate()?;
    let mut rng = stream_rng(seed, ROLE_INNOVATION, component as u64);
    let m = match law {
        EntryLaw::ComplexGaussian => CMatrix::from_fn(p, n, |_, _| complex_gaussian(&mut rng)),
        EntryLaw::RealGaussian => CMatrix::from_fn(p, n, |_, _| {
            Complex64::new(rng.sample(StandardNormal), 0.0)
        }),
        EntryLaw::TruncatedComplexGaussian { a, .. } => {
            let cap = (n as f64).powf(a);
            CMatrix::from_fn(p, n, |_, _| {
                let z = complex_gaussian(&mut rng);
                if z.norm() <= cap {
                    z
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
        }
    };
    Ok(m)
}

fn rotation_invariant(law: EntryLaw) -> bool {
    matches!(law, EntryLaw::ComplexGaussian)
}

/// Assemble `X = sum_r A_r^{1/2} Z_r B_r^{1/2}` with materialized bases.
fn assemble_data_direct(scalings: &ScalingSet, innov: &InnovationSpec) -> Result<CMatrix, SimError> {
    let (p, n) = (scalings.p, scalings.n);
    let mut x = CMatrix::zeros(p, n);
    for r in 0..scalings.k() {
        let z = innovation_matrix(innov.entry_law, p, n, innov.seed, r)?;
        let a_half = materialize(
            scalings.basis_p.as_ref(),
            &scalings.diag_a[r].iter().map(|d| d.sqrt()).collect::<Vec<_>>(),
        );
        let b_half = materialize(
            scalings.basis_q.as_ref(),
            &scalings.diag_b[r].iter().map(|d| d.sqrt()).collect::<Vec<_>>(),
        );
        x += a_half * z * b_half;
    }
    Ok(x)
}

/// Assemble the equal-in-law data matrix with the bases dropped: entrywise
/// `sqrt(d_r[i]) z_r[i,j] sqrt(e_r[j])`, summed over components.
fn assemble_data_scaled(scalings: &ScalingSet, innov: &InnovationSpec) -> Result<CMatrix, SimError> {
    let (p, n) = (scalings.p, scalings.n);
    let mut x = CMatrix::zeros(p, n);
    for r in 0..scalings.k() {
        let z = innovation_matrix(innov.entry_law, p, n, innov.seed, r)?;
        let sd: Vec<f64> = scalings.diag_a[r].iter().map(|d| d.sqrt()).collect();
        let se: Vec<f64> = scalings.diag_b[r].iter().map(|d| d.sqrt()).collect();
        for j in 0..n {
            for i in 0..p {
                x[(i, j)] += sd[i] * z[(i, j)] * se[j];
            }
        }
    }
    Ok(x)
}

fn eigenvalues_of_gram(x: &CMatrix, p: usize, n: usize) -> Result<(Vec<f64>, f64), SimError> {
    // eigensolve the smaller Gram side; the other side adds structural zeros
    let small = if p <= n { x * x.adjoint() } else { x.adjoint() * x };
    let mut s = small / Complex64::new(n as f64, 0.0);
    let dim = s.nrows();
    let mut defect: f64 = 0.0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            defect = defect.max((s[(i, j)] - s[(j, i)].conj()).norm());
        }
        defect = defect.max(s[(i, i)].im.abs());
    }
    let st = s.adjoint();
    s = (s + st) / Complex64::new(2.0, 0.0);
    let eig = nalgebra::linalg::SymmetricEigen::try_new(s, f64::EPSILON, 0)
        .ok_or(SimError::EigensolveFailure)?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scale = values.last().map(|v| v.abs()).unwrap_or(1.0).max(1.0);
    for v in &mut values {
        if *v < 0.0 && *v > -1e-10 * scale {
            *v = 0.0;
        }
    }
    let mut eigenvalues = Vec::with_capacity(p);
    if p > n {
        eigenvalues.extend(std::iter::repeat_n(0.0, p - n));
    }
    eigenvalues.extend(values);
    Ok((eigenvalues, defect))
}

/// Eigenvalues of one realization of the sample covariance matrix.
///
/// With complex Gaussian innovations the basis sandwich is dropped (equal in
/// law); any other entry law materializes the bases.
pub fn sample_covariance(
    scalings: &ScalingSet,
    innov: &InnovationSpec,
) -> Result<SpectralSample, SimError> {
    innov.validate()?;
    let x = if !scalings.has_bases() || rotation_invariant(innov.entry_law) {
        assemble_data_scaled(scalings, innov)?
    } else {
        assemble_data_direct(scalings, innov)?
    };
    finish_sample(scalings, innov, &x)
}

/// Same ensemble, but always sandwiching through the materialized bases.
/// Statistically indistinguishable from [`sample_covariance`] for invariant
/// entry laws; used to cross-check the scaled-entry shortcut.
pub fn sample_covariance_direct(
    scalings: &ScalingSet,
    innov: &InnovationSpec,
) -> Result<SpectralSample, SimError> {
    innov.validate()?;
    let x = if scalings.has_bases() {
        assemble_data_direct(scalings, innov)?
    } else {
        assemble_data_scaled(scalings, innov)?
    };
    finish_sample(scalings, innov, &x)
}

fn finish_sample(
    scalings: &ScalingSet,
    innov: &InnovationSpec,
    x: &CMatrix,
) -> Result<SpectralSample, SimError> {
    let (p, n) = (scalings.p, scalings.n);
    let (eigenvalues, defect) = eigenvalues_of_gram(x, p, n)?;
    let innovation_hash = {
        let mut h = splitmix(innov.seed);
        h ^= match innov.entry_law {
            EntryLaw::ComplexGaussian => 0x11,
            EntryLaw::RealGaussian => 0x22,
            EntryLaw::TruncatedComplexGaussian { a, .. } => 0x33 ^ a.to_bits(),
        };
        h
    };
    Ok(SpectralSample {
        eigenvalues,
        meta: SampleMeta {
            seed: innov.seed,
            p,
            n,
            c_n: p as f64 / n as f64,
            ensemble_hash: format!("{:016x}", scalings.content_hash()),
            innovation_hash: format!("{innovation_hash:016x}"),
            hermiticity_defect: defect,
        },
    })
}

/// Empirical spectral distribution of a sample: step CDF with 1/p jumps.
pub fn esd(sample: &SpectralSample) -> CdfTable {
    CdfTable::empirical(&sample.eigenvalues)
}

/// One full replication drawn per the simulation protocol, together with the
/// model built from the same draw's empirical JESDs.
#[derive(Debug, Clone)]
pub struct ProtocolStudy {
    pub sample: SpectralSample,
    /// Model with `c = p/n` and the realized JESDs as input laws, so the
    /// prediction refers to exactly this draw.
    pub model: ModelSpec,
    pub n: usize,
}

/// Protocol study: `n = round(p/c)` (half away from zero), component `r`
/// drawing row eigenvalues from Exp(scale r) and column eigenvalues from
/// Exp(scale 2r), shared Haar bases, standard complex Gaussian innovations.
pub fn protocol_study(c: f64, k: usize, p: usize, seed: u64) -> Result<ProtocolStudy, SimError> {
    if !(c > 0.0) {
        return Err(SimError::NonpositiveScale(c));
    }
    let n = (p as f64 / c).round() as usize;
    let spec = ScalingEnsembleSpec {
        k,
        p,
        n,
        eig_law_a: (1..=k).map(|r| EigLaw::Exponential { scale: r as f64 }).collect(),
        eig_law_b: (1..=k).map(|r| EigLaw::Exponential { scale: 2.0 * r as f64 }).collect(),
        basis_mode: BasisMode::Haar,
        field: FieldKind::Complex,
    };
    let scalings = sample_scalings(&spec, seed)?;
    let innov = InnovationSpec { entry_law: EntryLaw::ComplexGaussian, seed };
    let sample = sample_covariance(&scalings, &innov)?;
    let model = ModelSpec::new(p as f64 / n as f64, scalings.row_jesd()?, scalings.col_jesd()?);
    Ok(ProtocolStudy { sample, model, n })
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV rendering: JSON metadata header, then one eigenvalue per row.
pub fn eigenvalue_csv(sample: &SpectralSample) -> String {
    let meta = serde_json::to_string(&sample.meta).expect("meta serializes");
    let mut out = format!("# {meta}\neigenvalue\n");
    for v in &sample.eigenvalues {
        out.push_str(&fmt17(*v));
        out.push('\n');
    }
    out
}
