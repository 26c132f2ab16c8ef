use harmsynth::hmodel::{h2_norm, harmonic_state_matrix, hinf_norm, spectrum, LTPModel};
use harmsynth::phasor::{sliding_fourier, PhasorSeries};
use harmsynth::sim::{default_dt, h2_impulse, integrate, monodromy, Drive, ImpulseOptions};
use harmsynth::system::{example_model, random_stable_model};
use harmsynth::tbalg::TBOperator;
use harmsynth::C64;
use nalgebra::{DMatrix, DVector};

#[test]
fn example_spectrum_matches_floquet_oracle() {
    let m = example_model(20);
    let spec = spectrum(&m, 25, 20).unwrap();
    let fl = monodromy(&m, default_dt(&m)).unwrap();
    assert_eq!(spec.core.len(), 2);
    for z in &spec.core {
        let d = fl.exponents.iter().map(|e| (e - z).norm()).fold(f64::INFINITY, f64::min);
        assert!(d < 1e-3, "{z} vs {:?}", fl.exponents);
        assert!((z.re - 1.0).abs() < 1e-3);
        assert!((z.im.abs() - 1.5861).abs() < 1e-3);
    }
}

#[test]
fn raw_spectrum_contains_shifted_copies() {
    let m = example_model(9);
    let r = 20;
    let spec = spectrum(&m, r, 9).unwrap();
    // central copies lambda + j w k, |k| well inside the truncation, are resolved
    for z in &spec.core {
        for k in -3i64..=3 {
            let target = z + C64::new(0.0, m.omega * k as f64);
            let d = spec.raw.iter().map(|e| (e - target).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-6, "k = {k}: {d}");
        }
    }
}

/// Integrates `X' = H X + B U` with RK4 in phasor space.
fn harmonic_response(h: &DMatrix<C64>, bu: &DVector<C64>, x0: DVector<C64>, t: f64, steps: usize) -> DVector<C64> {
    let dt = C64::new(t / steps as f64, 0.0);
    let f = |x: &DVector<C64>| h * x + bu;
    let mut x = x0;
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt * 0.5)));
        let k3 = f(&(&x + &k2 * (dt * 0.5)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (dt / 6.0);
    }
    x
}

#[test]
fn harmonic_and_time_domain_trajectories_agree() {
    let m = random_stable_model(4, 2, 2);
    let period = m.period();
    let u = PhasorSeries::from_trig(m.omega, 0.5, &[(1, 1.0, 0.0), (2, 0.0, -0.7)]);
    let dt = period / 4000.0;
    let drive = |t: f64| {
        let mut d = Drive::zero(&m);
        d.u_ref[0] = u.eval_real(t);
        d
    };
    let t1 = 3.37 * period;
    let traj = integrate(&m, None, &DVector::from_vec(vec![0.4, -0.2]), (0.0, t1), dt, &drive).unwrap();

    let r = 12;
    let kmax = r;
    let per = (period / traj.step).round() as usize;
    let phasors_at = |end: usize| -> DVector<C64> {
        let mut out = DVector::zeros(2 * (2 * r + 1));
        for i in 0..2 {
            let samples: Vec<f64> = traj.states[end - per..=end].iter().map(|x| x[i]).collect();
            let x = sliding_fourier(&samples, period, kmax, traj.times[end]).unwrap();
            for (j, v) in x.into_iter().enumerate() {
                out[i * (2 * r + 1) + j] = v;
            }
        }
        out
    };
    // start after one period so the window only sees the periodic input
    let start = per;
    let x_start = phasors_at(start);
    let x_end = phasors_at(traj.len() - 1);

    let h = harmonic_state_matrix(&m, r, m.degree()).data;
    let b = m.b.truncate(r).data;
    let uop = TBOperator::from_blocks(m.omega, 1, 1, vec![u.clone()]).unwrap();
    let uvec = uop.truncate(r).data.column(r).into_owned();
    let bu = &b * uvec;
    let span = traj.times[traj.len() - 1] - traj.times[start];
    let predicted = harmonic_response(&h, &bu, x_start, span, 4000);
    let err = (&predicted - &x_end).norm() / x_end.norm();
    assert!(err < 1e-3, "relative sliding-norm difference {err:.2e}");
}

#[test]
fn h2_norm_matches_impulse_response_oracle() {
    for seed in [1, 2] {
        let m = random_stable_model(seed, 2, 2);
        let h2 = h2_norm(&m, 15, m.degree()).unwrap();
        let oracle = h2_impulse(&m, ImpulseOptions::default()).unwrap();
        assert!((h2 - oracle).abs() <= 2e-2 * oracle, "seed {seed}: {h2} vs {oracle}");
    }
}

#[test]
fn hinf_norm_dominates_h2_channel_gains() {
    let m = random_stable_model(8, 2, 1);
    let hinf = hinf_norm(&m, 12, m.degree(), 200).unwrap();
    // the peak is at least the gain at the sampled frequencies and is stable under refinement
    let coarse = hinf_norm(&m, 12, m.degree(), 21).unwrap();
    assert!(hinf.value >= coarse.value * (1.0 - 1e-6));
    assert!((hinf.value - coarse.value).abs() <= 1e-3 * hinf.value);
    assert!(hinf.peak_frequency.abs() <= m.omega / 2.0 + 1e-12);
}

#[test]
fn json_roundtrip_preserves_the_model() {
    let m = example_model(5);
    let back = LTPModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(m, back);
}
