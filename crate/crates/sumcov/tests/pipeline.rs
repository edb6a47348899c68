//! Cross-module integration: closed forms against the solver, the dual mass
//! bookkeeping, asymptotic normalization trends, and Monte Carlo convergence.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sumcov::closedform::{
    mp_density, mp_dual_stieltjes, mp_params, mp_stieltjes, scale_multiple_reduce,
};
use sumcov::kernel::{map_p, map_q, HalfPlanePoint, UpperVectorK};
use sumcov::lsd::{
    cdf_from_density, default_eps_schedule, default_grid, invert_density, stieltjes_primary,
    CdfKind, CdfTable,
};
use sumcov::measure::DiscreteMeasureK;
use sumcov::metrics::kolmogorov_distance;
use sumcov::simulator::{
    esd, sample_covariance, sample_scalings, BasisMode, EigLaw, EntryLaw, FieldKind,
    InnovationSpec, ScalingEnsembleSpec,
};
use sumcov::solver::{residual, solve_hg, SolverConfig};
use sumcov::ModelSpec;

fn zp(re: f64, im: f64) -> HalfPlanePoint {
    HalfPlanePoint::from_parts(re, im).unwrap()
}

fn random_model(rng: &mut ChaCha8Rng) -> ModelSpec {
    let k = rng.gen_range(1..=3usize);
    let c = rng.gen_range(0.35..2.2);
    let law = |rng: &mut ChaCha8Rng| {
        let m = rng.gen_range(2..=6usize);
        DiscreteMeasureK::new(
            (0..m)
                .map(|_| (0..k).map(|_| rng.gen_range(0.25..2.5)).collect())
                .collect(),
            (0..m).map(|_| rng.gen_range(0.2..1.0)).collect(),
        )
        .unwrap()
    };
    let h = law(rng);
    let g = law(rng);
    ModelSpec::new(c, h, g)
}

#[test]
fn closed_form_vectors_are_fixed_points_of_the_self_maps() {
    // identity scalings: h_r = alpha_r s, g_r = beta_r (c s + (c-1)/z)
    let alpha = [1.0, 2.0];
    let beta = [1.0, 0.5];
    for &c in &[0.5, 1.0, 2.5] {
        let spec = ModelSpec::new(
            c,
            DiscreteMeasureK::dirac(alpha.to_vec()).unwrap(),
            DiscreteMeasureK::dirac(beta.to_vec()).unwrap(),
        );
        let params = mp_params(&alpha, &beta, c).unwrap();
        for &(re, im) in &[(1.0, 1.0), (-0.3, 0.4), (2.5, 0.08)] {
            let z = zp(re, im);
            let s = mp_stieltjes(z, &params);
            let dual = mp_dual_stieltjes(z, &params);
            let h = UpperVectorK::new(alpha.iter().map(|&a| a * s).collect()).unwrap();
            let g = UpperVectorK::new(beta.iter().map(|&b| b * dual).collect()).unwrap();

            let ph = map_p(&h, z, &spec).unwrap();
            let qg = map_q(&g, z, &spec).unwrap();
            for r in 0..2 {
                assert!(
                    (ph[r] - h[r]).norm() <= 1e-12,
                    "c={c} z={re}+{im}i: P fixed-point defect {}",
                    (ph[r] - h[r]).norm()
                );
                assert!(
                    (qg[r] - g[r]).norm() <= 1e-12,
                    "c={c} z={re}+{im}i: Q fixed-point defect {}",
                    (qg[r] - g[r]).norm()
                );
            }
            assert!(residual(&spec, z, &h, &g) <= 1e-12);
        }
    }
}

#[test]
fn scale_multiple_reduction_validates_against_full_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let k = 3;
    let a: Vec<f64> = (0..k).map(|_| rng.gen_range(0.3..2.0)).collect();
    let b: Vec<f64> = (0..k).map(|_| rng.gen_range(0.3..2.0)).collect();
    let law1 = |rng: &mut ChaCha8Rng| {
        DiscreteMeasureK::new(
            (0..5).map(|_| vec![rng.gen_range(0.2..2.5)]).collect(),
            (0..5).map(|_| rng.gen_range(0.2..1.0)).collect(),
        )
        .unwrap()
    };
    let h1 = law1(&mut rng);
    let g1 = law1(&mut rng);
    let c = 0.8;

    let red = scale_multiple_reduce(&a, &b, &h1, &g1, c).unwrap();
    let full = red.full_model(c).unwrap();
    assert!(full.validate().passed());

    let cfg = SolverConfig::default();
    for &(re, im) in &[(0.9, 0.35), (2.2, 0.1), (-0.4, 1.0)] {
        let z = zp(re, im);
        let scalar = solve_hg(&red.scalar, z, &cfg, None).unwrap();
        assert!(scalar.converged);
        let h_full = UpperVectorK::new(red.lift_h(scalar.h[0])).unwrap();
        let g_full = UpperVectorK::new(red.lift_g(scalar.g[0])).unwrap();
        let defect = residual(&full, z, &h_full, &g_full);
        assert!(
            defect <= 1e-9,
            "lifted solution residual {defect} at z = {re}+{im}i"
        );
    }
}

#[test]
fn scale_multiple_delta_laws_recover_identity_closed_form() {
    let d1 = DiscreteMeasureK::dirac(vec![1.0]).unwrap();
    let a = [1.0, 2.0, 0.4];
    let b = [3.0, 0.5, 1.1];
    let c = 0.6;
    let red = scale_multiple_reduce(&a, &b, &d1, &d1, c).unwrap();
    let gamma: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let params = mp_params(&[gamma], &[1.0], c).unwrap();
    let cfg = SolverConfig::default();
    let z = zp(1.4, 0.3);
    let sol = solve_hg(&red.scalar, z, &cfg, None).unwrap();
    let s = stieltjes_primary(&red.scalar, &sol).unwrap();
    assert!((s - mp_stieltjes(z, &params)).norm() <= 1e-9);
}

#[test]
fn dual_mass_bookkeeping_between_primal_and_swapped_model() {
    // F(t) = (1 - 1/c) + (1/c) Fbar(t) for t >= 0, where Fbar is the law of
    // the dual Gram matrix; the swapped model gives Fbar after rescaling by c.
    let d1 = DiscreteMeasureK::dirac(vec![1.0]).unwrap();
    let cfg = SolverConfig { tol: 1e-10, ..SolverConfig::default() };
    for &c in &[0.5, 2.0] {
        let primal = ModelSpec::new(c, d1.clone(), d1.clone());
        let swapped = ModelSpec::new(1.0 / c, d1.clone(), d1.clone());

        let grid_p = invert_density(
            &primal,
            &default_grid(&primal, 500),
            &cfg,
            &default_eps_schedule(&primal),
        )
        .unwrap();
        let grid_s = invert_density(
            &swapped,
            &default_grid(&swapped, 500),
            &cfg,
            &default_eps_schedule(&swapped),
        )
        .unwrap();
        let f = cdf_from_density(&grid_p);
        let f_hat = cdf_from_density(&grid_s);

        let upper = (1.0 + c.sqrt()).powi(2);
        for i in 1..=8 {
            let t = upper * i as f64 / 9.0;
            let lhs = f.value_at(t);
            // Fbar(t) = Fhat(t / c): the dual is the swapped Gram scaled by c
            let rhs = (1.0 - 1.0 / c) + f_hat.value_at(t / c) / c;
            assert!(
                (lhs - rhs).abs() <= 5e-3,
                "c={c} t={t}: F={lhs} vs bookkeeping {rhs}"
            );
        }
    }
}

#[test]
fn normalization_limit_improves_with_height() {
    // |iys(iy) + 1| ~ m1/y: the normalization defect shrinks as the contour
    // rises. (The y-weighted defect tends to m1 from below instead, since
    // m2^2 <= m1 m3 by Cauchy-Schwarz, so it is the unweighted defect that
    // decreases.)
    let mut rng = ChaCha8Rng::seed_from_u64(97);
    let cfg = SolverConfig::default();
    for _ in 0..10 {
        let spec = random_model(&mut rng);
        let f = |y: f64| {
            let sol = solve_hg(&spec, zp(0.0, y), &cfg, None).unwrap();
            let s = stieltjes_primary(&spec, &sol).unwrap();
            (Complex64::new(0.0, y) * s + 1.0).norm()
        };
        let (f2, f4, f6) = (f(1e2), f(1e4), f(1e6));
        assert!(f4 < f2, "f(1e4) = {f4} >= f(1e2) = {f2}");
        assert!(f6 < f4, "f(1e6) = {f6} >= f(1e4) = {f4}");
    }
}

#[test]
fn inverted_cdf_reaches_one_at_the_upper_edge() {
    let d1 = DiscreteMeasureK::dirac(vec![1.0]).unwrap();
    let spec = ModelSpec::new(0.5, d1.clone(), d1);
    let grid = invert_density(
        &spec,
        &default_grid(&spec, 500),
        &SolverConfig::default(),
        &default_eps_schedule(&spec),
    )
    .unwrap();
    let cdf = cdf_from_density(&grid);
    let upper = (1.0 + 0.5f64.sqrt()).powi(2);
    assert!(
        (cdf.value_at(upper * 1.05) - 1.0).abs() <= 5e-3,
        "F(edge+) = {}",
        cdf.value_at(upper * 1.05)
    );
}

/// Closed-form MP CDF on a fine grid, used as the Monte Carlo reference.
fn mp_cdf(gamma: f64, c: f64) -> CdfTable {
    let params = mp_params(&[gamma], &[1.0], c).unwrap();
    let n = 4000;
    let mut xs = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    xs.push(0.0);
    values.push((1.0f64 - 1.0 / c).max(0.0));
    let mut acc = values[0];
    let hstep = params.upper_edge * 1.01 / n as f64;
    let mut prev_x = 0.0;
    let mut prev_f = 0.0;
    for i in 1..=n {
        let x = i as f64 * hstep;
        let fx = mp_density(x, &params);
        acc += 0.5 * (x - prev_x) * (fx + prev_f);
        xs.push(x);
        values.push(acc.min(1.0));
        prev_x = x;
        prev_f = fx;
    }
    CdfTable { xs, values, kind: CdfKind::Linear }
}

#[test]
fn esd_distance_to_limit_shrinks_with_dimension() {
    let reference = mp_cdf(1.0, 0.5);
    let mut averages = Vec::new();
    for &p in &[100usize, 250, 500] {
        let spec = ScalingEnsembleSpec {
            k: 1,
            p,
            n: 2 * p,
            eig_law_a: vec![EigLaw::Constant(1.0)],
            eig_law_b: vec![EigLaw::Constant(1.0)],
            basis_mode: BasisMode::Identity,
            field: FieldKind::Complex,
        };
        let mut total = 0.0;
        for seed in 0..10u64 {
            let scalings = sample_scalings(&spec, seed).unwrap();
            let innov = InnovationSpec { entry_law: EntryLaw::ComplexGaussian, seed };
            let sample = sample_covariance(&scalings, &innov).unwrap();
            total += kolmogorov_distance(&esd(&sample), &reference);
        }
        averages.push(total / 10.0);
    }
    assert!(
        averages[0] > averages[1] && averages[1] > averages[2],
        "averages not decreasing: {averages:?}"
    );
    // the p = 500 runs should already sit close to the limit
    assert!(averages[2] <= 0.05, "avg KS at p=500: {}", averages[2]);
}
