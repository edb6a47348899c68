//! Damped Picard solver for the coupled fixed-point system at a point `z`.
//!
//! The iteration keeps only the h-vector as state: each step recomputes
//! `g = O(z, c h, G)` and then damps toward `P_z(h) = O(z, g, H)`. Every
//! iterate stays in `C_+^K` because the self-map does, so the iteration can
//! never leave the domain where the system is well posed.
//!
//! Convergence near the real axis slows down; grids sorted by decreasing
//! `Im z` can be solved with warm starts (homotopy), which follows the
//! solution along verticals where it is analytic.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kernel::{kernel_o, sup_distance, HalfPlanePoint, KernelError, UpperVectorK, C64};
use crate::measure::ModelSpec;
use crate::parallel::maybe_par_map;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("model failed validation: {0:?}")]
    InvalidModel(Vec<String>),
    #[error("uniqueness probe needs at least 2 restarts, got {0}")]
    InsufficientRestarts(u32),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Knobs for the damped Picard iteration.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Sup-norm target for the full four-defect residual.
    pub tol: f64,
    pub max_iters: u32,
    /// Picard damping factor in (0, 1]; 1 is the undamped map.
    pub damping: f64,
    /// Restart count used by the uniqueness probe.
    pub n_restarts: u32,
    /// Warm-start grid solves from the previous point.
    pub homotopy: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 50_000,
            damping: 0.5,
            n_restarts: 10,
            homotopy: true,
        }
    }
}

/// Solved (or best-effort) system state at one `z`.
#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub z: HalfPlanePoint,
    pub h: UpperVectorK,
    pub g: UpperVectorK,
    pub residual: f64,
    pub iterations: u32,
    pub converged: bool,
}

fn scaled(values: &[C64], c: f64) -> Vec<C64> {
    values.iter().map(|v| v * c).collect()
}

/// Max over the four sup-norm defects of the coupled system.
pub fn residual(spec: &ModelSpec, z: HalfPlanePoint, h: &UpperVectorK, g: &UpperVectorK) -> f64 {
    let g_of_h = kernel_o(z, &scaled(h.values(), spec.c), &spec.col_law);
    let h_of_g = kernel_o(z, g.values(), &spec.row_law);
    let (g_of_h, h_of_g) = match (g_of_h, h_of_g) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return f64::INFINITY,
    };
    let p_of_h = kernel_o(z, &g_of_h, &spec.row_law);
    let q_of_g = kernel_o(z, &scaled(&h_of_g, spec.c), &spec.col_law);
    let (p_of_h, q_of_g) = match (p_of_h, q_of_g) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return f64::INFINITY,
    };
    let d1 = sup_distance(h.values(), &p_of_h);
    let d2 = sup_distance(g.values(), &q_of_g);
    let d3 = sup_distance(g.values(), &g_of_h);
    let d4 = sup_distance(h.values(), &h_of_g);
    d1.max(d2).max(d3).max(d4)
}

/// Canonical start `h0_r = i min(C_0 / Im z, 1)`, which respects the a-priori
/// modulus bound from the first step.
fn default_start(spec: &ModelSpec, z: HalfPlanePoint) -> UpperVectorK {
    let c0 = spec.first_moment_bound();
    let t = (c0 / z.im()).clamp(1e-300, 1.0);
    UpperVectorK::constant_imaginary(spec.dim(), t).expect("positive start")
}

/// Solve the coupled system at `z`.
///
/// Non-convergence is reported through `converged = false` with the best
/// iterate, never as an error, so grid sweeps always complete.
pub fn solve_hg(
    spec: &ModelSpec,
    z: HalfPlanePoint,
    config: &SolverConfig,
    initial: Option<(&UpperVectorK, &UpperVectorK)>,
) -> Result<FixedPointSolution, SolverError> {
    let report = spec.validate();
    if !report.passed() {
        return Err(SolverError::InvalidModel(report.violations));
    }
    let omega = config.damping;
    let mut h: Vec<C64> = match initial {
        Some((h0, _)) => h0.values().to_vec(),
        None => default_start(spec, z).values().to_vec(),
    };

    // Inner loop tracks the cheap h-defect; the full residual is only
    // evaluated at convergence candidates and its ratio to the defect is
    // used to tighten the inner target when the g-side defect dominates.
    let mut inner_target = 0.5 * config.tol;
    let mut iterations = 0u32;
    let mut best: Option<(f64, Vec<C64>, Vec<C64>)> = None;

    while iterations < config.max_iters {
        let g = kernel_o(z, &scaled(&h, spec.c), &spec.col_law)?;
        let ph = kernel_o(z, &g, &spec.row_law)?;
        iterations += 1;
        let defect = sup_distance(&h, &ph);

        #[cfg(debug_assertions)]
        for v in &ph {
            debug_assert!(v.im > 0.0, "iterate left the upper half-plane");
        }

        if defect <= inner_target {
            let h_v = UpperVectorK::new(h.clone())?;
            let g_v = UpperVectorK::new(g.clone())?;
            let full = residual(spec, z, &h_v, &g_v);
            if full <= config.tol {
                return Ok(FixedPointSolution {
                    z,
                    h: h_v,
                    g: g_v,
                    residual: full,
                    iterations,
                    converged: true,
                });
            }
            if best.as_ref().is_none_or(|(b, _, _)| full < *b) {
                best = Some((full, h.clone(), g.clone()));
            }
            // the full residual exceeded the target: dominated by the
            // g-side defects, so demand proportionally more of the h-defect
            inner_target = (0.5 * config.tol * defect / full).min(inner_target * 0.25);
            if inner_target < f64::MIN_POSITIVE {
                break;
            }
        }

        for (hr, pr) in h.iter_mut().zip(&ph) {
            *hr = (1.0 - omega) * *hr + omega * pr;
        }
    }

    // best effort: report the last (or best seen) iterate with its residual
    let (res, h, g) = match best {
        Some(b) => b,
        None => {
            let g = kernel_o(z, &scaled(&h, spec.c), &spec.col_law)?;
            let h_v = UpperVectorK::new(h.clone())?;
            let g_v = UpperVectorK::new(g.clone())?;
            let r = residual(spec, z, &h_v, &g_v);
            (r, h, g)
        }
    };
    Ok(FixedPointSolution {
        z,
        h: UpperVectorK::new(h)?,
        g: UpperVectorK::new(g)?,
        residual: res,
        iterations,
        converged: false,
    })
}

/// Outcome of the multi-start uniqueness probe.
#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub n_restarts: u32,
    pub n_converged: u32,
    /// Max sup-norm distance between any two converged (h, g) pairs;
    /// zero when fewer than two restarts converged.
    pub max_pairwise_distance: f64,
}

/// Re-solve from `n_restarts` random starts in a box of `C_+^K` and measure
/// how far apart the converged solutions are. The restart sample is drawn
/// from `seed`, so reports are reproducible.
pub fn uniqueness_probe(
    spec: &ModelSpec,
    z: HalfPlanePoint,
    config: &SolverConfig,
    seed: u64,
) -> Result<UniquenessReport, SolverError> {
    if config.n_restarts < 2 {
        return Err(SolverError::InsufficientRestarts(config.n_restarts));
    }
    let report = spec.validate();
    if !report.passed() {
        return Err(SolverError::InvalidModel(report.violations));
    }
    let k = spec.dim();
    let bound = (spec.first_moment_bound() / z.im()).clamp(1e-3, 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<UpperVectorK> = (0..config.n_restarts)
        .map(|_| {
            let values: Vec<C64> = (0..k)
                .map(|_| {
                    Complex64::new(
                        rng.gen_range(-bound..bound),
                        rng.gen_range(1e-3 * bound..bound),
                    )
                })
                .collect();
            UpperVectorK::new(values).expect("positive imaginary by construction")
        })
        .collect();

    let solutions = maybe_par_map(&starts, |h0| solve_hg(spec, z, config, Some((h0, h0))));
    let mut converged: Vec<FixedPointSolution> = Vec::new();
    for s in solutions {
        let s = s?;
        if s.converged {
            converged.push(s);
        }
    }
    let mut max_d: f64 = 0.0;
    for i in 0..converged.len() {
        for j in (i + 1)..converged.len() {
            let dh = sup_distance(converged[i].h.values(), converged[j].h.values());
            let dg = sup_distance(converged[i].g.values(), converged[j].g.values());
            max_d = max_d.max(dh.max(dg));
        }
    }
    Ok(UniquenessReport {
        n_restarts: config.n_restarts,
        n_converged: converged.len() as u32,
        max_pairwise_distance: max_d,
    })
}

/// Solve at every grid point, in input order.
///
/// With homotopy enabled the grid is treated as one warm-start chain (points
/// should then be sorted by decreasing `Im z`); with it disabled every point
/// is solved independently, in parallel when the `parallel` feature is on.
/// Per-point results depend only on (spec, z, config, warm start), so the
/// output is bitwise independent of the execution schedule.
pub fn solve_grid(
    spec: &ModelSpec,
    zs: &[HalfPlanePoint],
    config: &SolverConfig,
) -> Result<Vec<FixedPointSolution>, SolverError> {
    let report = spec.validate();
    if !report.passed() {
        return Err(SolverError::InvalidModel(report.violations));
    }
    if config.homotopy {
        let mut out = Vec::with_capacity(zs.len());
        let mut prev: Option<(UpperVectorK, UpperVectorK)> = None;
        for &z in zs {
            let sol = solve_hg(spec, z, config, prev.as_ref().map(|(h, g)| (h, g)))?;
            if sol.converged {
                prev = Some((sol.h.clone(), sol.g.clone()));
            }
            out.push(sol);
        }
        Ok(out)
    } else {
        maybe_par_map(zs, |&z| solve_hg(spec, z, config, None))
            .into_iter()
            .collect()
    }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // frozen oracle values keep all digits
mod tests {
    use super::*;
    use crate::closedform::{mp_dual_stieltjes, mp_params, mp_stieltjes};
    use crate::measure::DiscreteMeasureK;
    use approx::assert_relative_eq;

    fn zp(re: f64, im: f64) -> HalfPlanePoint {
        HalfPlanePoint::from_parts(re, im).unwrap()
    }

    fn mp_model(c: f64) -> ModelSpec {
        ModelSpec::new(
            c,
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
        )
    }

    #[test]
    fn solves_mp_model_to_closed_form() {
        let spec = mp_model(0.5);
        let z = zp(1.0, 1.0);
        let sol = solve_hg(&spec, z, &SolverConfig::default(), None).unwrap();
        assert!(sol.converged);
        assert!(sol.residual <= 1e-12);

        let params = mp_params(&[1.0], &[1.0], 0.5).unwrap();
        let s = mp_stieltjes(z, &params);
        let g = mp_dual_stieltjes(z, &params);
        assert!((sol.h[0] - s).norm() <= 1e-10, "h defect {}", (sol.h[0] - s).norm());
        assert!((sol.g[0] - g).norm() <= 1e-10, "g defect {}", (sol.g[0] - g).norm());
    }

    #[test]
    fn matches_frozen_two_atom_cross_solve() {
        // Frozen 40-digit Picard solve of a K=2 model at z=2i, c=1:
        // H: atoms (1,2),(3,1) weights (0.5,0.5); G: atoms (0.5,1),(2,0.3) weights (0.4,0.6)
        let spec = ModelSpec::new(
            1.0,
            DiscreteMeasureK::new(vec![vec![1.0, 2.0], vec![3.0, 1.0]], vec![0.5, 0.5]).unwrap(),
            DiscreteMeasureK::new(vec![vec![0.5, 1.0], vec![2.0, 0.3]], vec![0.4, 0.6]).unwrap(),
        );
        let sol = solve_hg(&spec, zp(0.0, 2.0), &SolverConfig::default(), None).unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.h[0].re, 0.27959756709397632154, epsilon = 1e-11);
        assert_relative_eq!(sol.h[0].im, 0.45799796576209433782, epsilon = 1e-11);
        assert_relative_eq!(sol.h[1].re, 0.21181085888347650192, epsilon = 1e-11);
        assert_relative_eq!(sol.h[1].im, 0.40279267263740706946, epsilon = 1e-11);
        assert_relative_eq!(sol.g[0].re, 0.19614094711576400723, epsilon = 1e-11);
        assert_relative_eq!(sol.g[0].im, 0.32327645345564217185, epsilon = 1e-11);
        assert_relative_eq!(sol.g[1].re, 0.081928314945006030218, epsilon = 1e-11);
        assert_relative_eq!(sol.g[1].im, 0.16082153844313774406, epsilon = 1e-11);
    }

    #[test]
    fn respects_large_im_bound() {
        let spec = mp_model(0.5);
        let sol = solve_hg(&spec, zp(0.0, 1e6), &SolverConfig::default(), None).unwrap();
        assert!(sol.converged);
        let c0 = spec.first_moment_bound();
        assert!(sol.h[0].norm() <= c0 * 1e-6 * (1.0 + 1e-9));
        assert!(sol.g[0].norm() <= c0 * 1e-6 * (1.0 + 1e-9));
    }

    #[test]
    fn residual_detects_perturbations() {
        let spec = mp_model(0.5);
        let z = zp(1.0, 1.0);
        let sol = solve_hg(&spec, z, &SolverConfig::default(), None).unwrap();
        assert!(residual(&spec, z, &sol.h, &sol.g) <= 1e-12);

        let bumped = UpperVectorK::new(vec![sol.h[0] + Complex64::new(0.0, 0.1)]).unwrap();
        assert!(residual(&spec, z, &bumped, &sol.g) > 1e-3);

        let random = UpperVectorK::new(vec![Complex64::new(0.3, 0.9)]).unwrap();
        assert!(residual(&spec, z, &random, &sol.g) > 0.0);
    }

    #[test]
    fn rejects_invalid_model() {
        let bad = ModelSpec::new(
            0.5,
            DiscreteMeasureK::dirac(vec![0.0]).unwrap(),
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
        );
        assert!(matches!(
            solve_hg(&bad, zp(0.0, 1.0), &SolverConfig::default(), None),
            Err(SolverError::InvalidModel(_))
        ));
    }

    #[test]
    fn uniqueness_probe_contract() {
        let spec = mp_model(0.5);
        let cfg = SolverConfig::default();
        let report = uniqueness_probe(&spec, zp(1.0, 1.0), &cfg, 42).unwrap();
        assert_eq!(report.n_converged, 10);
        assert!(report.max_pairwise_distance <= 1e-8);

        let few = SolverConfig { n_restarts: 1, ..cfg };
        assert!(matches!(
            uniqueness_probe(&spec, zp(1.0, 1.0), &few, 42),
            Err(SolverError::InsufficientRestarts(1))
        ));

        // near the real axis the report must still be well-formed
        let hard = SolverConfig { max_iters: 50, ..cfg };
        let report = uniqueness_probe(&spec, zp(0.5, 0.001), &hard, 42).unwrap();
        assert!(report.n_converged <= report.n_restarts);
    }

    #[test]
    fn two_atom_model_unique_across_initializations() {
        let spec = ModelSpec::new(
            1.0,
            DiscreteMeasureK::new(vec![vec![1.0, 2.0], vec![3.0, 1.0]], vec![0.5, 0.5]).unwrap(),
            DiscreteMeasureK::new(vec![vec![0.5, 1.0], vec![2.0, 0.3]], vec![0.4, 0.6]).unwrap(),
        );
        let report =
            uniqueness_probe(&spec, zp(0.0, 2.0), &SolverConfig::default(), 7).unwrap();
        assert_eq!(report.n_converged, 10);
        assert!(report.max_pairwise_distance <= 1e-8);
    }

    #[test]
    fn degenerate_grid_equals_single_solve() {
        let spec = mp_model(1.1);
        let z = zp(0.7, 0.4);
        let cfg = SolverConfig::default();
        let grid = solve_grid(&spec, &[z], &cfg).unwrap();
        let single = solve_hg(&spec, z, &cfg, None).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!(grid[0].h, single.h);
        assert_eq!(grid[0].residual, single.residual);
    }

    #[test]
    fn grid_matches_closed_form_near_axis() {
        let spec = mp_model(0.5);
        let params = mp_params(&[1.0], &[1.0], 0.5).unwrap();
        let eps = 0.05;
        let zs: Vec<HalfPlanePoint> = (0..200)
            .map(|i| zp(0.05 + 3.0 * i as f64 / 199.0, eps))
            .collect();
        let cfg = SolverConfig { homotopy: false, ..SolverConfig::default() };
        let sols = solve_grid(&spec, &zs, &cfg).unwrap();
        for sol in &sols {
            assert!(sol.converged, "failed at z = {:?}", sol.z);
            let s = mp_stieltjes(sol.z, &params);
            assert!((sol.h[0] - s).norm() <= 1e-8);
        }
    }

    #[test]
    fn homotopy_chain_matches_cold_solves_with_fewer_iterations() {
        let spec = mp_model(1.1);
        // descend toward the real axis at fixed re, warm-starting downward
        let zs: Vec<HalfPlanePoint> = (0..30)
            .map(|i| zp(1.5, 1.0 * (0.02f64 / 1.0).powf(i as f64 / 29.0)))
            .collect();
        let warm_cfg = SolverConfig::default();
        let cold_cfg = SolverConfig { homotopy: false, ..warm_cfg };
        let warm = solve_grid(&spec, &zs, &warm_cfg).unwrap();
        let cold = solve_grid(&spec, &zs, &cold_cfg).unwrap();
        let mut warm_iters = 0u64;
        let mut cold_iters = 0u64;
        for (a, b) in warm.iter().zip(&cold) {
            assert!(a.converged && b.converged);
            assert!(sup_distance(a.h.values(), b.h.values()) <= 1e-9);
            warm_iters += a.iterations as u64;
            cold_iters += b.iterations as u64;
        }
        assert!(
            warm_iters < cold_iters,
            "warm {warm_iters} vs cold {cold_iters} iterations"
        );
    }

    #[test]
    fn parallel_and_serial_grids_are_bitwise_identical() {
        let spec = ModelSpec::new(
            0.8,
            DiscreteMeasureK::new(vec![vec![0.5, 1.0], vec![2.0, 0.7]], vec![0.3, 0.7]).unwrap(),
            DiscreteMeasureK::new(vec![vec![1.0, 0.4], vec![0.6, 1.5]], vec![0.5, 0.5]).unwrap(),
        );
        let zs: Vec<HalfPlanePoint> = (0..24).map(|i| zp(0.2 + 0.1 * i as f64, 0.3)).collect();
        let cfg = SolverConfig { homotopy: false, ..SolverConfig::default() };

        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| solve_grid(&spec, &zs, &cfg).unwrap());
        let parallel = solve_grid(&spec, &zs, &cfg).unwrap();
        for (a, b) in serial.iter().zip(&parallel) {
            assert_eq!(a.h, b.h);
            assert_eq!(a.g, b.g);
            assert!(a.residual == b.residual);
            assert_eq!(a.iterations, b.iterations);
        }
    }

    #[test]
    fn empirical_contraction_stabilizes() {
        // residual trend check on random models: after 10 extra iterations the
        // defect should not grow at Im z >= 1 with damping 1/2; violations are
        // logged as findings, not asserted
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        let mut violations = 0usize;
        let mut windows = 0usize;
        for _ in 0..25 {
            let k = rng.gen_range(1..=3usize);
            let law = |rng: &mut ChaCha8Rng| {
                let m = rng.gen_range(1..=5usize);
                DiscreteMeasureK::new(
                    (0..m)
                        .map(|_| (0..k).map(|_| rng.gen_range(0.2..2.5)).collect())
                        .collect(),
                    (0..m).map(|_| rng.gen_range(0.2..1.0)).collect(),
                )
                .unwrap()
            };
            let h_law = law(&mut rng);
            let g_law = law(&mut rng);
            let spec = ModelSpec::new(rng.gen_range(0.3..2.5), h_law, g_law);
            let z = zp(rng.gen_range(-1.0..3.0), rng.gen_range(1.0..4.0));
            let mut h = vec![Complex64::new(0.0, 1.0); k];
            let mut defects = Vec::new();
            for _ in 0..60 {
                let ch: Vec<C64> = h.iter().map(|v| v * spec.c).collect();
                let g = kernel_o(z, &ch, &spec.col_law).unwrap();
                let ph = kernel_o(z, &g, &spec.row_law).unwrap();
                defects.push(sup_distance(&h, &ph));
                for (hr, pr) in h.iter_mut().zip(&ph) {
                    *hr = 0.5 * *hr + 0.5 * pr;
                }
            }
            for j in 0..defects.len() - 10 {
                windows += 1;
                if defects[j + 10] > defects[j] {
                    violations += 1;
                }
            }
        }
        if violations > 0 {
            eprintln!("finding: {violations}/{windows} non-monotone residual windows");
        }
    }
}
