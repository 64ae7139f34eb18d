mod common;

use common::*;
use ldp_core::rng::pairwise_sum;
use ldp_core::sim::{
    dyadic_freeze_error, sample_wiener, sample_wiener_stream, solve_original_rescaled_coupling, solve_rescaled,
    solve_tilted, SolverConfig, Trajectory,
};
use ldp_core::skeleton::{solve_skeleton, ControlPath};
use ldp_core::verify::sample_paths;
use ldp_core::{
    DiffusionForm, DriftForm, Equation, HVec, ModelSpec, NoiseSpace, ScalarMap, SpectralBasis, TimeGrid, TimeWeight,
    UVec,
};
use nalgebra::DMatrix;
use rand::Rng;

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let var = pairwise_sum(&values.iter().map(|v| (v - mean).powi(2)).collect::<Vec<_>>()) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn nonlinear_equation(eigenvalues: Vec<f64>) -> Equation {
    let d = eigenvalues.len();
    let model = ModelSpec::new(
        d,
        2,
        DriftForm::Affine {
            offset: HVec::from_element(d, 0.3),
            matrix: DMatrix::identity(d, d) * -0.5,
        },
        TimeWeight::tabulate(|t| 1.0 + t, 8).unwrap(),
        DiffusionForm::Diagonal {
            sigma: vec![0.9, 0.6],
            map: ScalarMap::Tanh,
        },
    )
    .unwrap();
    Equation::new(SpectralBasis::new(eigenvalues).unwrap(), NoiseSpace::harmonic(2).unwrap(), model).unwrap()
}

#[test]
fn wiener_increments_have_the_right_law() {
    let noise = NoiseSpace::harmonic(10).unwrap();
    let w = sample_wiener(TimeGrid::new(10_000).unwrap(), &noise, 3);
    let (mean, se) = mean_and_stderr(w.as_slice());
    assert!(mean.abs() <= 4.0 * se, "mean {mean} stderr {se}");

    let w = sample_wiener(TimeGrid::new(100).unwrap(), &noise, 4);
    let many: Vec<f64> = (0..100u64)
        .flat_map(|s| sample_wiener_stream(TimeGrid::new(100).unwrap(), 10, 4, s).as_slice().to_vec())
        .collect();
    let squares: Vec<f64> = many.iter().map(|v| v * v).collect();
    let (var, se) = mean_and_stderr(&squares);
    assert!((var - 0.01).abs() <= 4.0 * se, "variance {var} stderr {se}");
    assert_eq!(w, sample_wiener(TimeGrid::new(100).unwrap(), &noise, 4));
}

#[test]
fn refinement_splits_each_parent_increment() {
    let w = sample_wiener_stream(TimeGrid::new(16).unwrap(), 3, 8, 2);
    let fine = w.refined(9);
    assert_eq!(fine.grid().steps(), 32);
    for j in 0..16 {
        for k in 0..3 {
            let sum = fine.increment(2 * j)[k] + fine.increment(2 * j + 1)[k];
            assert!((sum - w.increment(j)[k]).abs() < 1e-15);
        }
    }
    let (coarse_end, fine_end) = (w.cumulative(), fine.cumulative());
    for j in 0..=16 {
        assert!((&coarse_end[j] - &fine_end[2 * j]).norm() < 1e-14);
    }
}

#[test]
fn additive_scalar_model_is_exact_at_nodes() {
    let sigma = 0.7;
    let eq = Equation::new(
        SpectralBasis::new(vec![0.0]).unwrap(),
        NoiseSpace::new(vec![1.0]).unwrap(),
        ModelSpec::additive(DMatrix::from_element(1, 1, sigma)).unwrap(),
    )
    .unwrap();
    let cfg = SolverConfig::new(0.3, 128, 1).unwrap();
    let w = sample_wiener_stream(cfg.grid(), 1, 1, 0);
    let x = HVec::from_element(1, 0.4);
    let traj = solve_rescaled(&x, &eq, &cfg, &w).unwrap();
    for (j, wj) in w.cumulative().iter().enumerate() {
        let exact = 0.4 + 0.3f64.sqrt() * sigma * wj[0];
        assert!((traj.values()[j][0] - exact).abs() < 1e-13);
    }

    let c = solve_original_rescaled_coupling(&x, &eq, 0.3, 128, 5).unwrap();
    assert!(c.sup_distance < 1e-14);
}

#[test]
fn zero_coefficients_follow_the_semigroup() {
    let basis = SpectralBasis::new(vec![-2.0, 0.5, -0.1]).unwrap();
    let eq = Equation::new(basis.clone(), NoiseSpace::harmonic(2).unwrap(), ModelSpec::zero(3, 2).unwrap()).unwrap();
    let cfg = SolverConfig::new(0.5, 64, 2).unwrap();
    let w = sample_wiener(cfg.grid(), &eq.noise, 2);
    let x = HVec::from_vec(vec![1.0, -1.0, 0.5]);
    let traj = solve_rescaled(&x, &eq, &cfg, &w).unwrap();
    for (j, v) in traj.values().iter().enumerate() {
        let exact = basis.semigroup_apply(0.5 * cfg.grid().node(j), &x).unwrap();
        assert!((v - exact).norm() < 1e-13);
    }
    let c = solve_original_rescaled_coupling(&x, &eq, 0.5, 64, 2).unwrap();
    for (j, v) in c.original.values().iter().enumerate() {
        assert!((v - basis.semigroup_apply(0.5 * cfg.grid().node(j), &x).unwrap()).norm() < 1e-13);
    }
    assert!(dyadic_freeze_error(&traj, &basis, 0.5, 3).unwrap() < 1e-13);
}

#[test]
fn unit_epsilon_without_semigroup_is_euler_maruyama() {
    let eq = nonlinear_equation(vec![0.0, 0.0, 0.0]);
    let cfg = SolverConfig::new(1.0, 200, 6).unwrap();
    let w = sample_wiener(cfg.grid(), &eq.noise, 6);
    let x = HVec::from_vec(vec![0.2, -0.4, 1.0]);
    let traj = solve_rescaled(&x, &eq, &cfg, &w).unwrap();
    let dt = cfg.grid().dt();
    let mut reference = x.clone();
    for j in 0..200 {
        let drift = eq.model.eval_drift(cfg.grid().node(j), &reference).unwrap();
        let g = eq.model.eval_diffusion(&reference).unwrap();
        reference = &reference + drift * dt + g * UVec::from_column_slice(w.increment(j));
        assert!((&traj.values()[j + 1] - &reference).norm() < 1e-14, "step {j}");
    }
}

#[test]
fn tilt_reduces_to_the_untilted_scheme() {
    let eq = nonlinear_equation(vec![-1.0, -3.0, 0.2]);
    let cfg = SolverConfig::new(0.2, 64, 3).unwrap();
    let w = sample_wiener(cfg.grid(), &eq.noise, 3);
    let x = HVec::from_vec(vec![0.1, 0.2, 0.3]);
    let zero = ControlPath::zero(2, cfg.grid());
    assert_eq!(
        solve_tilted(&x, &eq, &zero, &cfg, &w).unwrap(),
        solve_rescaled(&x, &eq, &cfg, &w).unwrap()
    );

    let silent = Equation::new(eq.basis.clone(), eq.noise.clone(), ModelSpec::zero(3, 2).unwrap()).unwrap();
    let phi = ControlPath::constant(UVec::from_vec(vec![1.0, -2.0]), cfg.grid()).unwrap();
    assert_eq!(
        solve_tilted(&x, &silent, &phi, &cfg, &w).unwrap(),
        solve_rescaled(&x, &silent, &cfg, &w).unwrap()
    );
}

#[test]
fn tilted_path_approaches_the_skeleton_as_noise_vanishes() {
    let eq = scalar_brownian();
    let eps = 1e-6;
    let cfg = SolverConfig::new(eps, 256, 4).unwrap();
    let phi = ControlPath::from_fn(cfg.grid(), |t| UVec::from_element(1, (5.0 * t).cos())).unwrap();
    let x = HVec::from_element(1, 0.3);
    let z = solve_skeleton(&x, &phi, &eq.model).unwrap();
    for seed in 0..10 {
        let w = sample_wiener_stream(cfg.grid(), 1, seed, 0);
        let tilted = solve_tilted(&x, &eq, &phi, &cfg, &w).unwrap();
        let gap = tilted.sup_distance(&z).unwrap();
        assert!(gap <= 5.0 * (eps.sqrt() + cfg.grid().dt()), "gap {gap}");
    }
}

#[test]
fn second_moment_obeys_the_gronwall_bound() {
    let eq = nonlinear_equation(vec![-0.5, 0.3, -2.0]);
    let eps = 0.5;
    let x = HVec::from_vec(vec![0.5, -0.5, 1.0]);
    let paths = sample_paths(&x, &eq, eps, 128, 1000, 17).unwrap();
    let m = eq.basis.semigroup_bound();
    let lambda = eq.model.lambda_lip();
    let nu_sq = eq.model.nu().l2_norm_sq();
    // (1 + E|X(t)|^2) <= (1 + 3 M^2 |x|^2) exp(6 eps M^2 (||nu||^2 + Lambda^2)).
    let bound = (1.0 + 3.0 * m * m * x.norm_squared()) * (6.0 * eps * m * m * (nu_sq + lambda * lambda)).exp() - 1.0;
    let mut sup_moment = 0.0f64;
    for j in 0..=128 {
        let sq: Vec<f64> = paths.iter().map(|p| p.values()[j].norm_squared()).collect();
        sup_moment = sup_moment.max(pairwise_sum(&sq) / sq.len() as f64);
    }
    assert!(sup_moment.is_finite() && sup_moment <= bound, "moment {sup_moment} bound {bound}");
}

#[test]
fn independent_streams_give_the_same_law() {
    let eq = nonlinear_equation(vec![-1.0, -0.5, 0.0]);
    let x = HVec::from_vec(vec![0.3, 0.0, -0.3]);
    let a = sample_paths(&x, &eq, 0.3, 64, 10_000, 100).unwrap();
    let b = sample_paths(&x, &eq, 0.3, 64, 10_000, 200).unwrap();
    for coord in 0..3 {
        let ta: Vec<f64> = a.iter().map(|p| p.terminal()[coord]).collect();
        let tb: Vec<f64> = b.iter().map(|p| p.terminal()[coord]).collect();
        let (ma, sa) = mean_and_stderr(&ta);
        let (mb, sb) = mean_and_stderr(&tb);
        assert!((ma - mb).abs() <= 4.0 * (sa * sa + sb * sb).sqrt());
        let va: Vec<f64> = ta.iter().map(|v| (v - ma).powi(2)).collect();
        let vb: Vec<f64> = tb.iter().map(|v| (v - mb).powi(2)).collect();
        let (xa, ea) = mean_and_stderr(&va);
        let (xb, eb) = mean_and_stderr(&vb);
        assert!((xa - xb).abs() <= 4.0 * (ea * ea + eb * eb).sqrt(), "variances {xa} {xb}");
    }
}

#[test]
fn truncation_leaves_paths_untouched_inside_the_ball() {
    let mut rng = rng(55);
    for trial in 0..10 {
        let eq = random_equation(&mut rng, 2);
        let radius = rng.random_range(0.5..2.0);
        let truncated = eq.truncated(radius).unwrap();
        let cfg = SolverConfig::new(1.0, 128, trial).unwrap();
        let w = sample_wiener(cfg.grid(), &eq.noise, trial);
        let x = random_point(&mut rng, eq.dim_h(), 0.4);
        let base = solve_rescaled(&x, &eq, &cfg, &w).unwrap();
        let trunc = solve_rescaled(&x, &truncated, &cfg, &w).unwrap();
        let last = base.first_exit_index(radius).unwrap_or(128);
        for j in 0..=last {
            assert_eq!(base.values()[j], trunc.values()[j]);
        }
    }
}

#[test]
fn dyadic_freeze_at_full_resolution_is_one_step() {
    let eq = nonlinear_equation(vec![-1.0, -2.0, 0.1]);
    let cfg = SolverConfig::new(0.4, 64, 9).unwrap();
    let w = sample_wiener(cfg.grid(), &eq.noise, 9);
    let traj = solve_rescaled(&HVec::from_element(3, 0.2), &eq, &cfg, &w).unwrap();
    let one_step = (1..=64)
        .map(|j| {
            let frozen = eq.basis.semigroup_apply(0.4 * cfg.grid().dt(), &traj.values()[j - 1]).unwrap();
            (&traj.values()[j] - frozen).norm()
        })
        .fold(0.0, f64::max);
    assert_eq!(dyadic_freeze_error(&traj, &eq.basis, 0.4, 6).unwrap(), one_step);
    assert!(dyadic_freeze_error(&traj, &eq.basis, 0.4, 7).is_err());

    let flat = Trajectory::new(vec![HVec::from_element(1, 2.0); 17], TimeGrid::new(16).unwrap()).unwrap();
    let idle = SpectralBasis::new(vec![0.0]).unwrap();
    assert_eq!(dyadic_freeze_error(&flat, &idle, 0.3, 2).unwrap(), 0.0);
}

#[test]
fn trajectory_csv_round_trip() {
    let eq = nonlinear_equation(vec![-1.0, -2.0, 0.1]);
    let cfg = SolverConfig::new(0.4, 32, 1).unwrap();
    let w = sample_wiener(cfg.grid(), &eq.noise, 1);
    let traj = solve_rescaled(&HVec::from_element(3, 0.2), &eq, &cfg, &w).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    traj.write_csv(&path).unwrap();
    assert_eq!(Trajectory::read_csv(&path).unwrap(), traj);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("t,x_1,x_2,x_3\n"));
}
