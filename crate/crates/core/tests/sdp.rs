use harmsynth::sdp::{ConicSolver, InteriorPoint, SolveOptions, Status};
use harmsynth::tblmi::{ConicProblem, Equality, PsdBlock, Sense, Triplet, VarTriplets};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn upper(m: &DMatrix<f64>) -> Vec<Triplet> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..=j {
            if m[(i, j)] != 0.0 {
                out.push(Triplet { i, j, v: m[(i, j)] });
            }
        }
    }
    out
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize, density: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            if rng.gen::<f64>() < density {
                let v = rng.gen_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    m
}

fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(n, n) * 0.5
}

/// Strictly feasible primal (`x0`, `S0 > 0`) and dual (`Z0 > 0`) points by construction.
fn random_problem(seed: u64) -> (ConicProblem, Vec<Vec<DMatrix<f64>>>, Vec<DMatrix<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nvars = rng.gen_range(2..=40);
    let nblocks = rng.gen_range(1..=3);
    let dims: Vec<usize> = (0..nblocks).map(|_| rng.gen_range(1..=25)).collect();
    let x0: Vec<f64> = (0..nvars).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut p = ConicProblem::new(nvars, Sense::Minimize);
    let mut coefs = Vec::new();
    let mut consts = Vec::new();
    let mut c = vec![0.0; nvars];
    for (b, &d) in dims.iter().enumerate() {
        let a: Vec<DMatrix<f64>> = (0..nvars).map(|_| random_sym(&mut rng, d, 0.4)).collect();
        let s0 = random_pd(&mut rng, d);
        let z0 = random_pd(&mut rng, d);
        let mut cm = s0.clone();
        for (ai, xi) in a.iter().zip(&x0) {
            cm -= ai * *xi;
        }
        for (i, ai) in a.iter().enumerate() {
            c[i] += ai.dot(&z0);
        }
        p.psd_blocks.push(PsdBlock {
            name: format!("b{b}"),
            dim: d,
            constant: upper(&cm),
            coefficients: a
                .iter()
                .enumerate()
                .map(|(i, ai)| VarTriplets { var: i, entries: upper(ai) })
                .collect(),
        });
        coefs.push(a);
        consts.push(cm);
    }
    if seed % 3 == 0 {
        // one equality through x0; the dual slack absorbs it through y = 0
        let row: Vec<(usize, f64)> = (0..nvars.min(3)).map(|i| (i, 1.0)).collect();
        let rhs = row.iter().map(|&(i, v)| v * x0[i]).sum();
        p.equalities.push(Equality { coeffs: row, rhs });
    }
    p.objective = c;
    (p, coefs, consts)
}

#[test]
fn random_feasible_sdps_satisfy_kkt() {
    let opts = SolveOptions::default();
    for seed in 0..30 {
        let (p, _, _) = random_problem(seed);
        let sol = InteriorPoint::default().solve(&p, &opts).unwrap();
        assert_eq!(sol.status, Status::Optimal, "seed {seed}: {}", sol.message);
        let rel = (sol.objective - sol.dual_objective).abs() / (1.0 + sol.objective.abs());
        assert!(rel <= 1e-6, "seed {seed}: primal {} dual {}", sol.objective, sol.dual_objective);
        assert!(sol.gap <= opts.tol);
        assert!(sol.primal_residual <= 10.0 * opts.tol);
        assert!(sol.dual_residual <= 10.0 * opts.tol);
        for &e in &sol.min_slack_eigenvalues {
            assert!(e >= -10.0 * opts.tol, "seed {seed}: slack eigenvalue {e}");
        }
        for eq in &p.equalities {
            let v: f64 = eq.coeffs.iter().map(|&(i, c)| c * sol.x[i]).sum();
            assert!((v - eq.rhs).abs() <= 10.0 * opts.tol * (1.0 + eq.rhs.abs()));
        }
    }
}

#[test]
fn solves_are_deterministic() {
    let (p, _, _) = random_problem(7);
    let a = InteriorPoint::default().solve(&p, &SolveOptions::default()).unwrap();
    let b = InteriorPoint::default().solve(&p, &SolveOptions::default()).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.x, b.x);
}

#[test]
fn iteration_limit_reports_numerical_failure() {
    let (p, _, _) = random_problem(4);
    let opts = SolveOptions { tol: 1e-7, max_iter: 2 };
    let sol = InteriorPoint::default().solve(&p, &opts).unwrap();
    assert_eq!(sol.status, Status::NumericalFailure);
    assert!(sol.require_optimal().is_err());
}

#[test]
fn malformed_problem_is_rejected() {
    let mut p = ConicProblem::new(1, Sense::Minimize);
    p.objective = vec![1.0];
    p.psd_blocks.push(PsdBlock {
        name: "bad".into(),
        dim: 2,
        constant: vec![Triplet { i: 1, j: 0, v: 1.0 }],
        coefficients: vec![],
    });
    assert!(InteriorPoint::default().solve(&p, &SolveOptions::default()).is_err());
}
