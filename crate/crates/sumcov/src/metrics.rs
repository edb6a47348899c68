//! Agreement metrics between empirical and predicted spectral distributions.

use serde::Serialize;

use crate::kernel::HalfPlanePoint;
use crate::lsd::{CdfTable, DensityGrid};
use crate::measure::{DiscreteMeasureK, ModelSpec};
use crate::solver::{solve_hg, SolverConfig, SolverError};

/// Quantified agreement between two distribution functions.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub kolmogorov: f64,
    /// Certified upper bound on the Levy distance (equals the sup-norm value).
    pub levy_upper_bound: f64,
    /// Total mass of the predicted grid minus one; zero when no grid given.
    pub mass_defect: f64,
    pub n_points_compared: usize,
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Sup-norm distance over the union of breakpoints, probing both the value
/// and the left limit at every breakpoint so jump mismatches are not missed.
pub fn kolmogorov_distance(f: &CdfTable, g: &CdfTable) -> f64 {
    let mut sup: f64 = 0.0;
    for x in f.xs.iter().chain(g.xs.iter()) {
        sup = sup.max((f.value_at(*x) - g.value_at(*x)).abs());
        sup = sup.max((f.left_limit(*x) - g.left_limit(*x)).abs());
    }
    // tail mismatch beyond the last breakpoint of either table
    sup = sup.max((f.final_value() - g.final_value()).abs());
    sup
}

/// Upper bound on the Levy distance via the uniform distance.
pub fn levy_bound(f: &CdfTable, g: &CdfTable) -> f64 {
    kolmogorov_distance(f, g)
}

/// Normalization defect of an inverted grid.
pub fn mass_check(grid: &DensityGrid) -> f64 {
    grid.total_mass - 1.0
}

/// Build a full comparison report between an empirical CDF and a prediction.
pub fn compare(
    empirical: &CdfTable,
    predicted: &CdfTable,
    grid: Option<&DensityGrid>,
) -> ComparisonReport {
    let kolmogorov = kolmogorov_distance(empirical, predicted);
    let mut warnings = Vec::new();
    let mass_defect = grid.map(mass_check).unwrap_or(0.0);
    if mass_defect.abs() > 0.01 {
        warnings.push(format!(
            "predicted grid mass defect {mass_defect:.3e}; support range may be truncated"
        ));
    }
    if let (Some(fe), Some(fp)) = (empirical.xs.last(), predicted.xs.last()) {
        if (fe - fp).abs() > 0.25 * fe.abs().max(*fp) {
            warnings.push(format!("support mismatch: empirical max {fe}, predicted max {fp}"));
        }
    }
    if let Some(g) = grid {
        if !g.nonconverged.is_empty() {
            warnings.push(format!("{} grid points did not converge", g.nonconverged.len()));
        }
    }
    ComparisonReport {
        kolmogorov,
        levy_upper_bound: kolmogorov,
        mass_defect,
        n_points_compared: empirical.xs.len() + predicted.xs.len(),
        warnings,
    }
}

/// Sensitivity report for coordinate perturbations of the row law.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub deltas: Vec<f64>,
    /// `||h - h_delta||_1` per delta, in input order.
    pub distances: Vec<f64>,
    /// Distances are nonincreasing along a descending delta schedule.
    pub monotone: bool,
    pub all_converged: bool,
}

/// Perturb every coordinate of every H-atom by `+delta`, re-solve, and report
/// solution distances. Distances shrinking with the perturbation witnesses
/// continuity of the solved transforms in the input law.
pub fn continuity_probe(
    spec: &ModelSpec,
    delta_schedule: &[f64],
    z: HalfPlanePoint,
    config: &SolverConfig,
) -> Result<ContinuityReport, SolverError> {
    let base = solve_hg(spec, z, config, None)?;
    let mut distances = Vec::with_capacity(delta_schedule.len());
    let mut all_converged = base.converged;
    for &delta in delta_schedule {
        let atoms: Vec<Vec<f64>> = spec
            .row_law
            .iter()
            .map(|(a, _)| a.iter().map(|&x| x + delta).collect())
            .collect();
        let weights: Vec<f64> = spec.row_law.iter().map(|(_, w)| w).collect();
        let bumped_law = DiscreteMeasureK::new(atoms, weights).expect("shifted atoms stay valid");
        let bumped = ModelSpec::new(spec.c, bumped_law, spec.col_law.clone());
        let sol = solve_hg(&bumped, z, config, None)?;
        all_converged &= sol.converged;
        let dist: f64 = base
            .h
            .values()
            .iter()
            .zip(sol.h.values())
            .map(|(a, b)| (a - b).norm())
            .sum();
        distances.push(dist);
    }
    let monotone = distances.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    Ok(ContinuityReport {
        deltas: delta_schedule.to_vec(),
        distances,
        monotone,
        all_converged,
    })
}
