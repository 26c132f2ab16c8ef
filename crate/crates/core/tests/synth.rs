use std::f64::consts::{PI, SQRT_2};

use harmsynth::hmodel::LTPModel;
use harmsynth::sdp::{ConicSolver, InteriorPoint, SolveOptions, Status};
use harmsynth::sim::default_dt;
use harmsynth::synth::*;
use harmsynth::system::{default_q, default_r, example_model};
use harmsynth::tbalg::TBOperator;
use harmsynth::tblmi::assemble_lyapunov;
use harmsynth::{Error, C64};
use nalgebra::DMatrix;

const W: f64 = 2.0 * PI;

fn c(v: f64) -> TBOperator {
    TBOperator::from_constant(W, &DMatrix::from_element(1, 1, v))
}

fn cm(rows: usize, cols: usize, v: &[f64]) -> TBOperator {
    TBOperator::from_constant(W, &DMatrix::from_row_slice(rows, cols, v))
}

fn example_weights() -> LqrWeights {
    LqrWeights::new(default_q(), default_r())
}

/// Stabilizing periodic Riccati solution by backward RK4 from `P = 0`,
/// returned as the period-average of `P` and the phasors of `K = B' P`.
struct RiccatiOracle {
    p0: DMatrix<f64>,
    k: Vec<(i64, Vec<C64>)>,
}

fn riccati_oracle(m: &LTPModel, q: &DMatrix<f64>, periods: usize, kmax: i64) -> RiccatiOracle {
    let dt = default_dt(m) / 2.0;
    let per = (m.period() / dt).round() as usize;
    let h = m.period() / per as f64;
    let rhs = |t: f64, p: &DMatrix<f64>| -> DMatrix<f64> {
        let a = m.a.eval_real(t);
        let b = m.b.eval_real(t);
        // P' = -(A'P + PA - P B B' P + Q)
        -(a.transpose() * p + p * &a - p * &b * b.transpose() * p + q)
    };
    let n = m.n();
    let mut p = DMatrix::zeros(n, n);
    let mut t = (periods * per) as f64 * h;
    let mut p0 = DMatrix::zeros(n, n);
    let mut k: Vec<(i64, Vec<C64>)> = (-kmax..=kmax).map(|kk| (kk, vec![C64::new(0.0, 0.0); m.m() * n])).collect();
    for step in 0..periods * per {
        if step >= (periods - 1) * per {
            // last period, t in (0, T]
            p0 += &p / per as f64;
            let kt = m.b.eval_real(t).transpose() * &p;
            for (kk, acc) in k.iter_mut() {
                let e = C64::from_polar(1.0 / per as f64, -m.omega * *kk as f64 * t);
                for (slot, v) in acc.iter_mut().zip(kt.iter()) {
                    *slot += e * v;
                }
            }
        }
        let k1 = rhs(t, &p);
        let k2 = rhs(t - h / 2.0, &(&p - &k1 * (h / 2.0)));
        let k3 = rhs(t - h / 2.0, &(&p - &k2 * (h / 2.0)));
        let k4 = rhs(t - h, &(&p - &k3 * h));
        p -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t -= h;
    }
    RiccatiOracle { p0, k }
}

#[test]
fn scalar_synthesis_recovers_the_riccati_gain() {
    // x' = -x + u + w, z = (x, u): P = K = sqrt(2) - 1
    let m = LTPModel::new(c(-1.0), c(1.0), c(1.0), cm(2, 1, &[1.0, 0.0]), cm(2, 1, &[0.0, 1.0]), cm(2, 1, &[0.0, 0.0]))
        .unwrap();
    let w = LqrWeights::new(c(1.0), c(1.0));
    for method in [Method::LqrPrimal, Method::LqrDual, Method::H2] {
        let g = synthesize(&m, method, &w, Orders::new(0, method.default_q(3), 3), &SynthOptions::default()).unwrap();
        assert!((g.k.coeff(0, 0, 0).re - (SQRT_2 - 1.0)).abs() < 1e-4, "{method}: {}", g.k.coeff(0, 0, 0));
        assert!(g.k.prune(1e-6).degree() == 0, "{method}");
        assert!(g.spectrum.iter().all(|z| (z.re + SQRT_2).abs() < 1e-4), "{method}: {:?}", g.spectrum);
        assert!(g.diagnostics.pdlmi_residual < 0.0);
    }
}

#[test]
fn lqr_gains_match_the_periodic_riccati_solution() {
    let m = example_model(30);
    let oracle = riccati_oracle(&m, &default_q().coeff_matrix(0).map(|z| z.re), 8, 3);
    let cost = oracle.p0.trace();
    let w = example_weights();
    let opts = SynthOptions::default();
    let primal = synthesize(&m, Method::LqrPrimal, &w, Orders::defaults(Method::LqrPrimal, 15), &opts).unwrap();
    let dual = synthesize(&m, Method::LqrDual, &w, Orders::defaults(Method::LqrDual, 15), &opts).unwrap();

    assert!((primal.value - cost).abs() <= 5e-3 * cost, "{} vs {cost}", primal.value);
    // strong duality up to truncation
    assert!((primal.value - dual.value).abs() <= 2e-2 * primal.value, "{} vs {}", primal.value, dual.value);

    let scale = oracle.k.iter().find(|(k, _)| *k == 0).unwrap().1.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for (k, want) in &oracle.k {
        for (j, w) in want.iter().enumerate() {
            let got = primal.k.coeff(0, j, *k);
            assert!((got - w).norm() <= 3e-2 * scale, "K_{k}[{j}]: {got} vs {w}");
        }
    }
    for g in [&primal, &dual] {
        assert!(g.k.is_real_valued());
        assert!(g.spectrum.iter().all(|z| z.re < 0.0), "{}: {:?}", g.method, g.spectrum);
    }
}

#[test]
fn closed_loop_admits_a_lyapunov_certificate() {
    let m = example_model(3);
    let g = synthesize(&m, Method::LqrDual, &example_weights(), Orders::defaults(Method::LqrDual, 6), &SynthOptions::default())
        .unwrap();
    let cl = m.close_loop(&g.k).unwrap();
    let solve = |m: &LTPModel| {
        let prob = assemble_lyapunov(m, 10, m.degree(), 5, None).unwrap();
        InteriorPoint::default().solve(&prob, &SolveOptions::default()).unwrap().status
    };
    assert_eq!(solve(&cl), Status::Optimal);
    assert_eq!(solve(&m), Status::Infeasible);
}

#[test]
fn sweep_values_are_monotone_and_gains_converge() {
    let m = example_model(3);
    let orders: Vec<Orders> = [4, 6, 8, 10].iter().map(|&r| Orders::new(3, 2 * r, r)).collect();
    let report = consistency_sweep(&m, Method::LqrPrimal, &example_weights(), &orders, &SynthOptions::default(), 1e-6).unwrap();
    assert!(report.monotone);
    assert!(report.distances_decreasing, "{:?}", report.rows);
    assert!(report.rows.windows(2).all(|w| w[1].value <= w[0].value * (1.0 + 1e-6)));

    // a constant system is captured exactly at every order
    let scalar = LTPModel::from_ab(c(-1.0), c(1.0)).unwrap();
    let w = LqrWeights::new(c(1.0), c(1.0));
    let orders: Vec<Orders> = [2, 3, 4].iter().map(|&r| Orders::new(0, r, r)).collect();
    let tight = SynthOptions { solve: SolveOptions { tol: 1e-11, ..SolveOptions::default() }, ..SynthOptions::default() };
    let report = consistency_sweep(&scalar, Method::LqrDual, &w, &orders, &tight, 1e-6).unwrap();
    let v0 = report.rows[0].value;
    assert!(report.rows.iter().all(|row| (row.value - v0).abs() <= 1e-8 * v0.abs().max(1.0)));
    assert!(report.rows.iter().all(|row| row.gain_distance <= 1e-6));
}

#[test]
fn sweep_rejects_bad_orders() {
    let m = LTPModel::from_ab(c(-1.0), c(1.0)).unwrap();
    let w = LqrWeights::new(c(1.0), c(1.0));
    let two = [Orders::new(0, 2, 2), Orders::new(0, 3, 3)];
    assert!(matches!(consistency_sweep(&m, Method::LqrDual, &w, &two, &SynthOptions::default(), 0.0), Err(Error::InvalidArgument(_))));
    let unordered = [Orders::new(0, 3, 3), Orders::new(0, 2, 2), Orders::new(0, 4, 4)];
    assert!(consistency_sweep(&m, Method::LqrDual, &w, &unordered, &SynthOptions::default(), 0.0).is_err());
}

#[test]
fn gain_result_roundtrips_through_json() {
    let m = example_model(2);
    let g = synthesize(&m, Method::LqrDual, &example_weights(), Orders::defaults(Method::LqrDual, 4), &SynthOptions::default())
        .unwrap();
    let back: GainResult = serde_json::from_str(&g.to_json().unwrap()).unwrap();
    assert_eq!(back.k, g.k);
    assert_eq!(back.method, Method::LqrDual);
    assert_eq!(back.orders, g.orders);
    assert_eq!(back.value, g.value);
    assert!(back.certificate.is_none());

    let mut csv = Vec::new();
    write_gain_moduli(&g.k, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 2 * g.k.degree() + 2);
}

#[test]
fn indefinite_h2_certificate_is_explained() {
    let m = example_model(6);
    match synthesize(&m, Method::H2, &example_weights(), Orders::defaults(Method::H2, 5), &SynthOptions::default()) {
        Err(e) => assert!(e.to_string().contains("not positive definite"), "{e}"),
        Ok(g) => assert!(g.diagnostics.inverse_error.unwrap() <= 1e-6),
    }
}

#[test]
fn method_names_parse() {
    for m in Method::ALL {
        assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
    }
    assert!("lqg".parse::<Method>().is_err());
    assert_eq!(Orders::defaults(Method::LqrPrimal, 7), Orders::new(14, 14, 7));
    assert_eq!(Orders::defaults(Method::Hinf, 7), Orders::new(14, 7, 7));
}
