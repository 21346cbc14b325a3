//! Cross-checks between the solvers, the geometry and the classifier.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use optilik::fr_solver::{objective, solve, FrProblem, StepMode};
use optilik::kl_solver::solve_kl;
use optilik::mean_solver::{fr_mean_distance, kl_mean_divergence, solve_mean};
use optilik::{
    fr_distance, kl_divergence, optimistic_loglik_fr, optimistic_loglik_kl, optimistic_loglik_mean,
    FrBall, FrSolverOptions, KlProblem, MeanProblem, MeanRadius, SpdMatrix,
};

fn random_spd(r: &mut impl Rng, n: usize) -> SpdMatrix {
    let b = DMatrix::<f64>::from_fn(n, n, |_, _| r.sample(StandardNormal));
    SpdMatrix::new(&b * b.transpose() + DMatrix::identity(n, n) * 0.5).unwrap()
}

fn samples(r: &mut impl Rng, n: usize, m: usize) -> Vec<DVector<f64>> {
    (0..m)
        .map(|_| DVector::from_fn(n, |_, _| r.sample(StandardNormal)))
        .collect()
}

fn tight() -> FrSolverOptions {
    FrSolverOptions {
        max_iterations: 3000,
        step_mode: StepMode::ArmijoBacktracking,
        relative_improvement_tol: 1e-12,
        ..Default::default()
    }
}

#[test]
fn optimizers_stay_in_their_balls() {
    let mut r = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let n = r.random_range(2..=6);
        let nominal = random_spd(&mut r, n);
        let count = r.random_range(1..=10);
        let obs = samples(&mut r, n, count);
        let mean = DVector::zeros(n);
        let rho = r.random_range(0.05..1.0);
        let (_, fr_opt) = optimistic_loglik_fr(&obs, &mean, &nominal, rho, &tight()).unwrap();
        assert!(fr_distance(&fr_opt, &nominal).unwrap() <= rho * (1.0 + 1e-9));
        let (_, kl_opt) = optimistic_loglik_kl(&obs, &mean, &nominal, rho).unwrap();
        assert!(kl_divergence(&nominal, &kl_opt).unwrap() <= rho + 1e-8);
        for radius in [MeanRadius::Fr(rho), MeanRadius::Kl(rho)] {
            let (_, mu) = optimistic_loglik_mean(&obs, &mean, &nominal, radius).unwrap();
            let d = match radius {
                MeanRadius::Fr(_) => fr_mean_distance(&mu, &mean, &nominal).unwrap(),
                MeanRadius::Kl(_) => kl_mean_divergence(&mu, &mean, &nominal).unwrap(),
            };
            assert!(d <= rho + 1e-8, "{radius:?}: {d}");
        }
    }
}

#[test]
fn kl_optimum_beats_random_feasible_points() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let n = 3;
        let nominal = random_spd(&mut r, n);
        let obs = samples(&mut r, n, 4);
        let rho = 0.4;
        let p =
            KlProblem::from_observations(&obs, &DVector::zeros(n), nominal.clone(), rho).unwrap();
        let sol = solve_kl(&p).unwrap();
        let s = p.scatter_matrix();
        let ball = FrBall::new(nominal.clone(), 1.0).unwrap();
        let fr = FrProblem::new(ball, s).unwrap();
        for _ in 0..200 {
            // Random point on the segment between the nominal and a random matrix.
            let other = random_spd(&mut r, n);
            let t: f64 = r.random();
            let cand =
                SpdMatrix::new(nominal.as_matrix() * (1.0 - t) + other.as_matrix() * t).unwrap();
            if kl_divergence(&nominal, &cand).unwrap() <= rho {
                assert!(objective(&fr, &cand).unwrap() >= sol.optimal_value - 1e-9);
            }
        }
    }
}

#[test]
fn mean_solution_matches_projected_sample_mean_when_isotropic() {
    // With identity covariance the optimal mean is the sample mean pulled
    // back onto the ball along the straight line.
    let obs = vec![
        DVector::from_vec(vec![3.0, 4.0]),
        DVector::from_vec(vec![3.0, 4.0]),
    ];
    let p = MeanProblem::new(
        &obs,
        DVector::zeros(2),
        SpdMatrix::identity(2),
        MeanRadius::Fr(1.0),
    )
    .unwrap();
    let sol = solve_mean(&p).unwrap();
    assert!((sol.mu_star[0] - 0.6).abs() < 1e-9 && (sol.mu_star[1] - 0.8).abs() < 1e-9);
    assert!((sol.optimal_value - 16.0).abs() < 1e-8);
}

#[test]
fn constant_step_never_leaves_the_ball() {
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let n = 5;
    let p = FrProblem::from_observations(
        &samples(&mut r, n, 1),
        &DVector::zeros(n),
        random_spd(&mut r, n),
        0.5,
    )
    .unwrap();
    let report = solve(&p, &FrSolverOptions::default()).unwrap();
    assert_eq!(report.final_ball_residual, 0.0);
    assert!(report.optimum_objective <= report.objective_trace[0]);
}
