use cnmpc::optimizer::{
    inner_solve, project_box, BoxSet, FnObjective, InnerSolverConfig, ResidualNorm,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random dense SPD matrix `M^T M + mu I` with its linear term.
fn random_qp(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut h = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            h[i][j] = (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>() / n as f64;
        }
        h[i][i] += 0.5;
    }
    let q = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    (h, q)
}

fn qp_grad(h: &[Vec<f64>], q: &[f64], z: &[f64], g: &mut [f64]) -> f64 {
    let mut f = 0.0;
    for i in 0..z.len() {
        g[i] = h[i].iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + q[i];
        f += z[i] * (0.5 * (g[i] - q[i]) + q[i]);
    }
    f
}

/// `|z - proj(z - grad f(z))|_inf`, zero exactly at the KKT point.
fn kkt_residual(h: &[Vec<f64>], q: &[f64], z: &[f64], bx: &BoxSet) -> f64 {
    let mut g = vec![0.0; z.len()];
    qp_grad(h, q, z, &mut g);
    let step: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - b).collect();
    let p = project_box(&step, bx).unwrap();
    z.iter()
        .zip(&p)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[test]
fn lbfgs_and_projected_gradient_agree_on_dense_qps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut no_more_iterations = 0;
    let trials = 20;
    for _ in 0..trials {
        let n = rng.random_range(5..=40);
        let (h, q) = random_qp(&mut rng, n);
        let bx = BoxSet::replicated(&[-1.0], &[1.0], n).unwrap();
        let z0 = vec![0.0; n];
        let solve = |memory: usize| {
            let cfg = InnerSolverConfig {
                lbfgs_memory: memory,
                max_iterations: 20_000,
                ..Default::default()
            };
            let mut obj = FnObjective::new(|z: &[f64], g: &mut [f64]| qp_grad(&h, &q, z, g));
            inner_solve(&mut obj, &bx, &z0, &cfg).unwrap()
        };
        let plain = solve(0);
        let accel = solve(10);
        assert!(plain.converged && accel.converged);
        let tol = InnerSolverConfig::default().tolerance;
        let gap = plain
            .solution
            .iter()
            .zip(&accel.solution)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 10.0 * tol, "solutions differ by {gap}");
        assert!(kkt_residual(&h, &q, &accel.solution, &bx) <= 10.0 * tol);
        if accel.iterations <= plain.iterations {
            no_more_iterations += 1;
        }
    }
    assert!(
        no_more_iterations * 5 >= trials * 4,
        "acceleration helped on only {no_more_iterations}/{trials}"
    );
}

#[test]
fn gradient_residual_bounds_the_error() {
    // f = 50 (z - 3)^2 is 100-strongly convex, so a gradient-norm residual of
    // 1e-2 puts z within 1e-4 of the minimizer. The step-scaled residual is
    // gamma times smaller and reports a smaller number at any point.
    let bx = BoxSet::new(vec![-10.0], vec![10.0]).unwrap();
    let run = |norm| {
        let cfg = InnerSolverConfig {
            residual_norm: norm,
            lbfgs_memory: 0,
            tolerance: 1e-2,
            ..Default::default()
        };
        let mut obj = FnObjective::new(|z: &[f64], g: &mut [f64]| {
            g[0] = 100.0 * (z[0] - 3.0);
            50.0 * (z[0] - 3.0).powi(2)
        });
        inner_solve(&mut obj, &bx, &[0.0], &cfg).unwrap()
    };
    let grad = run(ResidualNorm::Gradient);
    let scaled = run(ResidualNorm::StepScaled);
    assert!(grad.converged && scaled.converged);
    assert!((grad.solution[0] - 3.0).abs() <= 1e-2 / 100.0 + 1e-12);
    assert!(scaled.iterations <= grad.iterations);
}

proptest! {
    #[test]
    fn solutions_stay_in_the_box(
        seed in 0u64..1000,
        n in 1usize..12,
        lo in -2.0f64..0.0,
        width in 0.1f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, q) = random_qp(&mut rng, n);
        let bx = BoxSet::replicated(&[lo], &[lo + width], n).unwrap();
        let z0: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let cfg = InnerSolverConfig::default();
        let mut obj = FnObjective::new(|z: &[f64], g: &mut [f64]| qp_grad(&h, &q, z, g));
        let res = inner_solve(&mut obj, &bx, &z0, &cfg).unwrap();
        prop_assert!(bx.contains(&res.solution));
        if res.converged {
            prop_assert!(res.residual <= cfg.tolerance);
        }
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive(
        a in proptest::collection::vec(-5.0f64..5.0, 6),
        b in proptest::collection::vec(-5.0f64..5.0, 6),
    ) {
        let bx = BoxSet::replicated(&[-1.0, 0.0, -2.0], &[1.0, 0.5, 2.0], 2).unwrap();
        let pa = project_box(&a, &bx).unwrap();
        let pb = project_box(&b, &bx).unwrap();
        prop_assert_eq!(project_box(&pa, &bx).unwrap(), pa.clone());
        let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
        prop_assert!(d(&pa, &pb) <= d(&a, &b) + 1e-12);
    }
}
