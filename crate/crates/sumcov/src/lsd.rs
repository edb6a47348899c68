//! Assembly and inversion of the limiting spectral distribution.
//!
//! Given a solved fixed point at `z`, the Stieltjes transform of the LSD has
//! three algebraically equivalent characterizations which are kept as separate
//! routines and cross-checked in tests: the H-side integral, the inner-product
//! shortcut `-1/z - h.g`, and the G-side integral with the dual correction.
//!
//! The density is recovered by vertical-limit inversion: solve along
//! `z = x + i eps` for a short decreasing epsilon schedule and extrapolate
//! `Im s / pi` linearly to `eps = 0`. The known atom of the LSD at the origin
//! is removed analytically before extrapolating; its Poisson kernel decays
//! only like `eps / x^2` and would otherwise leak mass into small-`x` bins.

use serde::Serialize;
use thiserror::Error;

use crate::accum::KahanComplex;
use crate::kernel::{kernel_o, HalfPlanePoint, UpperVectorK, C64};
use crate::measure::ModelSpec;
use crate::parallel::maybe_par_map;
use crate::solver::{solve_hg, FixedPointSolution, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum LsdError {
    #[error("solution has not converged; refusing to assemble the transform")]
    UnconvergedSolution,
    #[error("measure is degenerate: origin mass one on H or G")]
    DegenerateMeasure,
    #[error("x grid must be nonempty, strictly ascending and positive")]
    BadGrid,
    #[error("epsilon schedule needs >= 2 strictly descending positive entries")]
    BadEpsSchedule,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Inverted LSD on a grid: per-unit-x densities plus the analytic atom at 0.
#[derive(Debug, Clone, Serialize)]
pub struct DensityGrid {
    pub xs: Vec<f64>,
    pub densities: Vec<f64>,
    pub point_mass_zero: f64,
    /// Im-offset schedule the inversion used (the two smallest entries feed
    /// the extrapolation).
    pub epsilons: Vec<f64>,
    /// `point_mass_zero` plus the trapezoid mass of `densities`.
    pub total_mass: f64,
    /// Indices where a negative extrapolation overshoot was clipped to zero.
    pub clipped: Vec<usize>,
    /// Indices where some chain level exhausted the iteration budget.
    pub nonconverged: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CdfKind {
    /// Right-continuous empirical step function.
    Step,
    /// Piecewise-linear table (integrated density); may jump at its first point.
    Linear,
}

/// A one-dimensional CDF, either an empirical step function or an integrated
/// density table.
#[derive(Debug, Clone, Serialize)]
pub struct CdfTable {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: CdfKind,
}

impl CdfTable {
    /// Empirical CDF with jumps `1/len` at each sample (duplicates merge).
    pub fn empirical(samples: &[f64]) -> Self {
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let mut xs = Vec::new();
        let mut values = Vec::new();
        let mut seen = 0usize;
        let mut i = 0usize;
        while i < n {
            let x = sorted[i];
            let mut j = i;
            while j < n && sorted[j] == x {
                j += 1;
            }
            seen += j - i;
            xs.push(x);
            values.push(seen as f64 / n as f64);
            i = j;
        }
        Self { xs, values, kind: CdfKind::Step }
    }

    pub fn value_at(&self, x: f64) -> f64 {
        if self.xs.is_empty() || x < self.xs[0] {
            return 0.0;
        }
        let last = *self.xs.last().unwrap();
        if x >= last {
            return *self.values.last().unwrap();
        }
        // index of the last breakpoint <= x
        let idx = match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        match self.kind {
            CdfKind::Step => self.values[idx],
            CdfKind::Linear => {
                let (x0, x1) = (self.xs[idx], self.xs[idx + 1]);
                let (f0, f1) = (self.values[idx], self.values[idx + 1]);
                f0 + (f1 - f0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Left limit `F(x-)`; differs from `value_at` only across jumps.
    pub fn left_limit(&self, x: f64) -> f64 {
        if self.xs.is_empty() || x <= self.xs[0] {
            return 0.0;
        }
        match self.kind {
            CdfKind::Step => {
                let idx = match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
                    Ok(i) => i.wrapping_sub(1),
                    Err(i) => i - 1,
                };
                if idx == usize::MAX {
                    0.0
                } else {
                    self.values[idx]
                }
            }
            CdfKind::Linear => self.value_at(x),
        }
    }

    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

fn scaled(values: &[C64], c: f64) -> Vec<C64> {
    values.iter().map(|v| v * c).collect()
}

/// H-side assembly used by both the public characterization and the inverter.
fn primary_from_h(spec: &ModelSpec, z: HalfPlanePoint, h: &[C64]) -> C64 {
    let g = kernel_o(z, &scaled(h, spec.c), &spec.col_law).expect("dimensions fixed by spec");
    let zc = z.get();
    let mut acc = KahanComplex::default();
    for (atom, w) in spec.row_law.iter() {
        let dot: C64 = atom.iter().zip(&g).map(|(l, gr)| gr * *l).sum();
        acc.add(w / (-zc * (C64::new(1.0, 0.0) + dot)));
    }
    acc.value()
}

/// Stieltjes transform of the LSD through the H-side integral.
pub fn stieltjes_primary(spec: &ModelSpec, sol: &FixedPointSolution) -> Result<C64, LsdError> {
    if !sol.converged {
        return Err(LsdError::UnconvergedSolution);
    }
    Ok(primary_from_h(spec, sol.z, sol.h.values()))
}

/// The inner-product shortcut `-1/z - h . g`.
pub fn stieltjes_alt1(sol: &FixedPointSolution) -> C64 {
    let z = sol.z.get();
    let mut acc = KahanComplex::default();
    for (hr, gr) in sol.h.values().iter().zip(sol.g.values()) {
        acc.add(hr * gr);
    }
    -1.0 / z - acc.value()
}

/// The G-side integral with the dual correction `(1/c - 1)/z`.
pub fn stieltjes_alt2(spec: &ModelSpec, sol: &FixedPointSolution) -> C64 {
    let z = sol.z.get();
    let c = spec.c;
    let h_of_g =
        kernel_o(sol.z, sol.g.values(), &spec.row_law).expect("dimensions fixed by spec");
    let mut acc = KahanComplex::default();
    for (atom, w) in spec.col_law.iter() {
        let dot: C64 = atom.iter().zip(&h_of_g).map(|(t, hr)| hr * (c * t)).sum();
        acc.add(w / (-z * (C64::new(1.0, 0.0) + dot)));
    }
    acc.value() / c + (1.0 / c - 1.0) / z
}

/// Transform of the dual (n x n side) distribution: `c s + (c - 1)/z`.
pub fn dual_stieltjes(spec: &ModelSpec, s: C64, z: HalfPlanePoint) -> C64 {
    spec.c * s + (spec.c - 1.0) / z.get()
}

/// Atom of the LSD at zero: `max(1 - alpha, 1 - beta/c)` where `1 - alpha`
/// and `1 - beta` are the origin masses of H and G. Reduces to
/// `max(0, 1 - 1/c)` for origin-free laws.
pub fn point_mass_zero(spec: &ModelSpec) -> Result<f64, LsdError> {
    let alpha = 1.0 - spec.row_law.mass_at_origin();
    let beta = 1.0 - spec.col_law.mass_at_origin();
    if alpha <= 0.0 || beta <= 0.0 {
        return Err(LsdError::DegenerateMeasure);
    }
    Ok((1.0 - alpha).max(1.0 - beta / spec.c).max(0.0))
}

/// Conservative upper bound on the support of the LSD, from the operator-norm
/// bound `||S|| <~ 2 K tau_H tau_G (1 + sqrt(c))^2` with 20% headroom.
pub fn support_upper_bound(spec: &ModelSpec) -> f64 {
    let k = spec.dim() as f64;
    let tau = spec.row_law.max_coordinate() * spec.col_law.max_coordinate();
    let sq = spec.c.sqrt();
    1.2 * 2.0 * k * tau * (1.0 + sq) * (1.0 + sq)
}

/// Inversion grid up to `upper`: geometric refinement toward zero (integrable
/// edge singularities live there) and a linear sweep over the bulk.
pub fn capped_grid(upper: f64, n: usize) -> Vec<f64> {
    let n = n.max(16);
    let lo = upper * 1e-5;
    let knee = upper * 0.05;
    let n_geo = n / 5;
    let n_lin = n - n_geo;
    let mut xs = Vec::with_capacity(n);
    for i in 0..n_geo {
        xs.push(lo * (knee / lo).powf(i as f64 / n_geo as f64));
    }
    for j in 0..n_lin {
        xs.push(knee + (upper - knee) * j as f64 / (n_lin - 1) as f64);
    }
    xs
}

/// Default inversion grid spanning the operator-norm support bound.
pub fn default_grid(spec: &ModelSpec, n: usize) -> Vec<f64> {
    capped_grid(support_upper_bound(spec), n)
}

/// Default Im-offset schedule, scaled by the model's coupling scale so that
/// offsets are small relative to the spectral support.
pub fn default_eps_schedule(spec: &ModelSpec) -> Vec<f64> {
    let s0 = spec.coupling_scale();
    [1e-2, 3e-3, 1e-3, 3e-4].iter().map(|e| e * s0).collect()
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

struct PointResult {
    density: f64,
    clipped: bool,
    converged: bool,
}

/// Invert the LSD to a density on `xs` (strictly positive, ascending).
///
/// Each x runs its own vertical continuation: two warm-up levels above the
/// schedule, then the schedule itself, warm-starting downwards. The density
/// is the linear eps-to-zero extrapolation of `Im s / pi` from the two
/// smallest offsets, after removing the analytic atom at zero. Points are
/// independent, so the x-loop parallelizes without changing results.
pub fn invert_density(
    spec: &ModelSpec,
    xs: &[f64],
    config: &SolverConfig,
    eps_schedule: &[f64],
) -> Result<DensityGrid, LsdError> {
    if xs.is_empty() || xs[0] <= 0.0 || xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LsdError::BadGrid);
    }
    if eps_schedule.len() < 2
        || eps_schedule.iter().any(|&e| !(e > 0.0))
        || eps_schedule.windows(2).any(|w| w[0] <= w[1])
    {
        return Err(LsdError::BadEpsSchedule);
    }
    let report = spec.validate();
    if !report.passed() {
        return Err(SolverError::InvalidModel(report.violations).into());
    }
    let pm0 = point_mass_zero(spec)?;

    let warm = [10.0 * eps_schedule[0], 3.0 * eps_schedule[0]];
    let eps_a = eps_schedule[eps_schedule.len() - 2];
    let eps_b = eps_schedule[eps_schedule.len() - 1];

    let results: Vec<PointResult> = maybe_par_map(xs, |&x| {
        let mut prev: Option<(UpperVectorK, UpperVectorK)> = None;
        let mut converged = true;
        let mut im_a = 0.0;
        let mut im_b = 0.0;
        for (idx, &eps) in warm.iter().chain(eps_schedule.iter()).enumerate() {
            let z = HalfPlanePoint::from_parts(x, eps).expect("eps > 0");
            let sol = match solve_hg(spec, z, config, prev.as_ref().map(|(h, g)| (h, g))) {
                Ok(s) => s,
                Err(_) => {
                    converged = false;
                    break;
                }
            };
            if !sol.converged {
                converged = false;
            }
            let in_schedule = idx >= warm.len();
            if in_schedule {
                let s = primary_from_h(spec, z, sol.h.values());
                // remove the known atom at the origin before extrapolating
                let s_cont = s + pm0 / z.get();
                let sched_idx = idx - warm.len();
                if sched_idx == eps_schedule.len() - 2 {
                    im_a = s_cont.im;
                } else if sched_idx == eps_schedule.len() - 1 {
                    im_b = s_cont.im;
                }
            }
            prev = Some((sol.h, sol.g));
        }
        let extrapolated = (im_b * eps_a - im_a * eps_b) / (eps_a - eps_b);
        let density = extrapolated / std::f64::consts::PI;
        PointResult {
            density: density.max(0.0),
            clipped: density < 0.0,
            converged,
        }
    });

    let densities: Vec<f64> = results.iter().map(|r| r.density).collect();
    let clipped = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.clipped.then_some(i))
        .collect();
    let nonconverged = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| (!r.converged).then_some(i))
        .collect();
    let total_mass = pm0 + trapezoid(xs, &densities);
    Ok(DensityGrid {
        xs: xs.to_vec(),
        densities,
        point_mass_zero: pm0,
        epsilons: eps_schedule.to_vec(),
        total_mass,
        clipped,
        nonconverged,
    })
}

/// Cumulative trapezoid of the density, offset by the atom at zero.
pub fn cdf_from_density(grid: &DensityGrid) -> CdfTable {
    let mut xs = Vec::with_capacity(grid.xs.len() + 1);
    let mut values = Vec::with_capacity(grid.xs.len() + 1);
    xs.push(0.0);
    values.push(grid.point_mass_zero);
    // no density mass accrues between 0 and the first grid point
    let mut acc = grid.point_mass_zero;
    for i in 0..grid.xs.len() {
        if i > 0 {
            acc += 0.5
                * (grid.xs[i] - grid.xs[i - 1])
                * (grid.densities[i] + grid.densities[i - 1]);
        }
        xs.push(grid.xs[i]);
        values.push(acc.min(1.0 + 1e-6));
    }
    CdfTable { xs, values, kind: CdfKind::Linear }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV rendering with a provenance header line; 17 significant digits so
/// doubles round-trip exactly.
pub fn density_csv(grid: &DensityGrid, model_hash: u64) -> String {
    let eps: Vec<String> = grid.epsilons.iter().map(|e| fmt17(*e)).collect();
    let mut out = format!(
        "# point_mass_zero={} eps_schedule=[{}] model_hash={:016x} clipped={} nonconverged={}\n",
        fmt17(grid.point_mass_zero),
        eps.join(";"),
        model_hash,
        grid.clipped.len(),
        grid.nonconverged.len(),
    );
    out.push_str("x,density\n");
    for (x, d) in grid.xs.iter().zip(&grid.densities) {
        out.push_str(&fmt17(*x));
        out.push(',');
        out.push_str(&fmt17(*d));
        out.push('\n');
    }
    out
}

pub fn cdf_csv(table: &CdfTable, model_hash: u64) -> String {
    let mut out = format!(
        "# kind={:?} model_hash={:016x}\nx,F\n",
        table.kind, model_hash
    );
    for (x, f) in table.xs.iter().zip(&table.values) {
        out.push_str(&fmt17(*x));
        out.push(',');
        out.push_str(&fmt17(*f));
        out.push('\n');
    }
    out
}
