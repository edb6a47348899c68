//! Command implementations. Every command is deterministic given its config
//! and seed, and CSV output is rendered with 17 significant digits so doubles
//! round-trip exactly.

use std::path::PathBuf;

use num_complex::Complex64;
use serde::Serialize;
use sumcov::closedform::{mp_density, mp_params, mp_stieltjes};
use sumcov::kernel::HalfPlanePoint;
use sumcov::lsd;
use sumcov::metrics;
use sumcov::simulator;
use sumcov::solver::{solve_grid, SolverConfig};
use sumcov::{DiscreteMeasureK, ModelSpec};

use crate::config::{
    linspace, ClosedFormConfig, CompareConfig, DensityConfig, SimulateConfig, SolveConfig,
    StudySpec,
};
use crate::CliError;

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_out(path: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn validated(spec: &ModelSpec) -> Result<(), CliError> {
    let report = spec.validate();
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "model validation failed: {}",
            report.violations.join("; ")
        )))
    }
}

fn solver_header(cfg: &SolverConfig) -> String {
    format!(
        "tol={} max_iters={} damping={} homotopy={}",
        fmt17(cfg.tol),
        cfg.max_iters,
        fmt17(cfg.damping),
        cfg.homotopy
    )
}

pub fn cmd_solve(config: SolveConfig) -> Result<(), CliError> {
    let spec = config.model.load()?;
    validated(&spec)?;
    let solver_cfg = config.solver.apply(SolverConfig::default());
    let zs: Vec<HalfPlanePoint> = config
        .z_grid
        .realize()?
        .into_iter()
        .map(|(re, im)| {
            HalfPlanePoint::from_parts(re, im)
                .map_err(|e| CliError::Config(format!("z = {re} + {im}i: {e}")))
        })
        .collect::<Result<_, _>>()?;

    let solutions = solve_grid(&spec, &zs, &solver_cfg)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let k = spec.dim();
    let mut out = format!(
        "# command=solve model_hash={:016x} {}\n",
        spec.stable_hash(),
        solver_header(&solver_cfg)
    );
    out.push_str("re_z,im_z");
    for r in 1..=k {
        out.push_str(&format!(",re_h_{r},im_h_{r}"));
    }
    for r in 1..=k {
        out.push_str(&format!(",re_g_{r},im_g_{r}"));
    }
    out.push_str(",residual,iterations,converged\n");
    let mut any_failed = false;
    for sol in &solutions {
        any_failed |= !sol.converged;
        out.push_str(&fmt17(sol.z.re()));
        out.push(',');
        out.push_str(&fmt17(sol.z.im()));
        for v in sol.h.values().iter().chain(sol.g.values()) {
            out.push(',');
            out.push_str(&fmt17(v.re));
            out.push(',');
            out.push_str(&fmt17(v.im));
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            fmt17(sol.residual),
            sol.iterations,
            sol.converged
        ));
    }
    write_out(&config.output, &out)?;
    if config.strict && any_failed {
        return Err(CliError::Numeric("some grid points did not converge".into()));
    }
    Ok(())
}

pub fn cmd_density(config: DensityConfig) -> Result<(), CliError> {
    let spec = config.model.load()?;
    validated(&spec)?;
    let solver_cfg = config.solver.apply(SolverConfig::default());
    let xs = config.x_grid.realize(&spec)?;
    let eps = config
        .eps_schedule
        .clone()
        .unwrap_or_else(|| lsd::default_eps_schedule(&spec));
    let grid = lsd::invert_density(&spec, &xs, &solver_cfg, &eps)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut csv = lsd::density_csv(&grid, spec.stable_hash());
    csv.insert_str(
        0,
        &format!("# command=density {}\n", solver_header(&solver_cfg)),
    );
    write_out(&config.output, &csv)?;

    let clipped_fraction = grid.clipped.len() as f64 / grid.xs.len() as f64;
    eprintln!("point_mass_zero = {}", fmt17(grid.point_mass_zero));
    eprintln!("mass_defect = {}", fmt17(metrics::mass_check(&grid)));
    eprintln!("clipped_fraction = {}", fmt17(clipped_fraction));
    eprintln!("nonconverged_points = {}", grid.nonconverged.len());
    if config.strict && !grid.nonconverged.is_empty() {
        return Err(CliError::Numeric(format!(
            "{} density points did not converge",
            grid.nonconverged.len()
        )));
    }
    Ok(())
}

fn run_study(study: &StudySpec) -> Result<simulator::ProtocolStudy, CliError> {
    simulator::protocol_study(study.c, study.k, study.p, study.seed)
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn cmd_simulate(config: SimulateConfig) -> Result<(), CliError> {
    let study = run_study(&config.study)?;
    let csv = simulator::eigenvalue_csv(&study.sample);
    write_out(&config.output, &csv)?;
    if let Some(path) = &config.model_output {
        let json = serde_json::to_string_pretty(&study.model)
            .map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, json)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareOutput {
    study: StudySpec,
    n: usize,
    point_mass_zero: f64,
    #[serde(flatten)]
    report: metrics::ComparisonReport,
}

/// Comparison grid capped slightly above the largest sample eigenvalue. The
/// operator-norm support bound is far too loose for heavy-tailed empirical
/// JESDs and would starve the bulk of points.
pub fn comparison_grid(study: &simulator::ProtocolStudy, n_points: usize) -> Vec<f64> {
    let lambda_max = study
        .sample
        .eigenvalues
        .last()
        .copied()
        .unwrap_or(1.0)
        .max(1e-6);
    lsd::capped_grid(1.15 * lambda_max, n_points)
}

pub fn cmd_compare(config: CompareConfig) -> Result<(), CliError> {
    let study = run_study(&config.study)?;
    let solver_cfg = config.solver.apply(SolverConfig {
        tol: 1e-10,
        ..SolverConfig::default()
    });
    let xs = comparison_grid(&study, config.grid_points);
    let eps = lsd::default_eps_schedule(&study.model);
    let grid = lsd::invert_density(&study.model, &xs, &solver_cfg, &eps)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let predicted = lsd::cdf_from_density(&grid);
    let empirical = simulator::esd(&study.sample);
    let report = metrics::compare(&empirical, &predicted, Some(&grid));
    let out = CompareOutput {
        study: config.study,
        n: study.n,
        point_mass_zero: grid.point_mass_zero,
        report,
    };
    let json = serde_json::to_string_pretty(&out).map_err(|e| CliError::Config(e.to_string()))?;
    write_out(&config.output, &format!("{json}\n"))?;
    Ok(())
}

pub fn cmd_closedform(config: ClosedFormConfig) -> Result<(), CliError> {
    let params = mp_params(&config.alpha, &config.beta, config.c)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = format!(
        "# command=closedform gamma={} c={} lower_edge={} upper_edge={}\n",
        fmt17(params.gamma),
        fmt17(params.c),
        fmt17(params.lower_edge),
        fmt17(params.upper_edge)
    );
    let mut wrote_section = false;
    if let Some(zg) = &config.z_grid {
        out.push_str("re_z,im_z,re_s,im_s\n");
        for (re, im) in zg.realize()? {
            let z = HalfPlanePoint::from_parts(re, im)
                .map_err(|e| CliError::Config(format!("z = {re} + {im}i: {e}")))?;
            let s = mp_stieltjes(z, &params);
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(re),
                fmt17(im),
                fmt17(s.re),
                fmt17(s.im)
            ));
        }
        wrote_section = true;
    }
    if let Some(xg) = &config.x_grid {
        let xs = xg.realize()?;
        if params.c == 1.0 && xs.iter().any(|&x| x < 0.01 * params.gamma) {
            eprintln!(
                "note: at c = 1 the density grows like 1/sqrt(x) toward the origin; \
                 values there are exact but large"
            );
        }
        out.push_str("x,density\n");
        for x in xs {
            // in-support rows only
            if x > params.lower_edge && x < params.upper_edge {
                out.push_str(&format!("{},{}\n", fmt17(x), fmt17(mp_density(x, &params))));
            }
        }
        wrote_section = true;
    }
    if !wrote_section {
        return Err(CliError::Config(
            "closedform needs at least one of z_grid, x_grid".into(),
        ));
    }
    write_out(&config.output, &out)
}

pub fn cmd_selfcheck() -> Result<(), CliError> {
    let mut failures = 0;
    let mut check = |name: &str, ok: bool, detail: String| {
        if ok {
            println!("PASS {name} ({detail})");
        } else {
            println!("FAIL {name} ({detail})");
            failures += 1;
        }
    };

    // solver vs closed form on the MP model
    {
        let spec = ModelSpec::new(
            0.5,
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
        );
        let params = mp_params(&[1.0], &[1.0], 0.5).unwrap();
        let cfg = SolverConfig::default();
        let zs: Vec<HalfPlanePoint> = linspace(-1.0, 4.0, 10)
            .map(|re| HalfPlanePoint::from_parts(re, 0.3).unwrap())
            .collect();
        let sols = solve_grid(&spec, &zs, &cfg).unwrap();
        let mut worst: f64 = 0.0;
        for sol in &sols {
            let s = lsd::stieltjes_primary(&spec, sol).unwrap();
            worst = worst.max((s - mp_stieltjes(sol.z, &params)).norm());
        }
        check(
            "closed-form agreement",
            worst <= 1e-8,
            format!("max |s - s_mp| = {worst:.3e}"),
        );
    }

    // triple characterization agreement on a two-component model
    {
        let spec = ModelSpec::new(
            1.3,
            DiscreteMeasureK::new(vec![vec![0.6, 1.2], vec![2.0, 0.4]], vec![0.35, 0.65]).unwrap(),
            DiscreteMeasureK::new(vec![vec![1.1, 0.5], vec![0.3, 1.8]], vec![0.55, 0.45]).unwrap(),
        );
        let cfg = SolverConfig::default();
        let mut worst: f64 = 0.0;
        for re in [-0.5, 0.8, 2.5] {
            let z = HalfPlanePoint::from_parts(re, 0.2).unwrap();
            let sol = sumcov::solver::solve_hg(&spec, z, &cfg, None).unwrap();
            let s0 = lsd::stieltjes_primary(&spec, &sol).unwrap();
            let s1 = lsd::stieltjes_alt1(&sol);
            let s2 = lsd::stieltjes_alt2(&spec, &sol);
            worst = worst.max((s0 - s1).norm()).max((s0 - s2).norm());
        }
        check(
            "characterization consistency",
            worst <= 1e-8,
            format!("max pairwise = {worst:.3e}"),
        );
    }

    // point-mass formulas
    {
        let spec = ModelSpec::new(
            2.5,
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
        );
        let pm = lsd::point_mass_zero(&spec).unwrap();
        check("point mass at zero", pm == 0.6, format!("pm0 = {pm}"));
    }

    // inversion mass conservation on the MP model
    {
        let spec = ModelSpec::new(
            0.5,
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
        );
        let xs = lsd::default_grid(&spec, 300);
        let grid = lsd::invert_density(
            &spec,
            &xs,
            &SolverConfig::default(),
            &lsd::default_eps_schedule(&spec),
        )
        .unwrap();
        let defect = metrics::mass_check(&grid).abs();
        check(
            "inversion mass conservation",
            defect <= 5e-3,
            format!("|mass - 1| = {defect:.3e}"),
        );
    }

    // asymptotic normalization at a large height
    {
        let spec = ModelSpec::new(
            0.5,
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
            DiscreteMeasureK::dirac(vec![1.0]).unwrap(),
        );
        let z = HalfPlanePoint::from_parts(0.0, 1e6).unwrap();
        let sol = sumcov::solver::solve_hg(&spec, z, &SolverConfig::default(), None).unwrap();
        let s = lsd::stieltjes_primary(&spec, &sol).unwrap();
        let defect = (Complex64::new(0.0, 1e6) * s + 1.0).norm();
        check(
            "asymptotic normalization",
            defect <= 1e-4,
            format!("|iys + 1| = {defect:.3e}"),
        );
    }

    if failures > 0 {
        Err(CliError::Numeric(format!("{failures} selfcheck(s) failed")))
    } else {
        Ok(())
    }
}
