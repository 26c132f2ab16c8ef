//! Benchmark systems: the unstable periodic two-state example with square,
//! triangular and sawtooth entries, its default weights, and random stable models.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hmodel::LTPModel;
use crate::phasor::{PhasorSeries, Waveform};
use crate::tbalg::TBOperator;

pub const EXAMPLE_OMEGA: f64 = 2.0 * PI;

fn op(rows: usize, cols: usize, entries: Vec<PhasorSeries>) -> TBOperator {
    TBOperator::from_blocks(EXAMPLE_OMEGA, rows, cols, entries).expect("consistent block grid")
}

/// State matrix of the example, each infinite series banded at `p`.
pub fn example_a(p: usize) -> TBOperator {
    let w = EXAMPLE_OMEGA;
    let a22 = PhasorSeries::from_trig(w, 1.0, &[(1, -2.0, 0.0), (3, -2.0, 2.0), (5, 0.0, 2.0)]);
    op(
        2,
        2,
        vec![
            PhasorSeries::waveform(Waveform::Square, p, w),
            PhasorSeries::waveform(Waveform::Triangle, p, w),
            PhasorSeries::waveform(Waveform::Sawtooth, p, w),
            a22.band(p),
        ],
    )
}

/// Input matrix `B = [1 + 2cos(2wt) + 4sin(3wt); 0]`.
pub fn example_b(p: usize) -> TBOperator {
    let w = EXAMPLE_OMEGA;
    let b11 = PhasorSeries::from_trig(w, 1.0, &[(2, 0.0, 2.0), (3, 4.0, 0.0)]);
    op(2, 1, vec![b11.band(p), PhasorSeries::zero(w)])
}

/// Default state weight `Q = diag(1, 1e4)`.
pub fn default_q() -> TBOperator {
    TBOperator::from_constant(EXAMPLE_OMEGA, &DMatrix::from_diagonal(&nalgebra::dvector![1.0, 1e4]))
}

/// Default input weight `R = 1`.
pub fn default_r() -> TBOperator {
    TBOperator::identity(EXAMPLE_OMEGA, 1)
}

/// Performance output `z = (x1, 100 x2, u)`, which realizes the LQR cost
/// with the default weights.
fn performance_output() -> (TBOperator, TBOperator) {
    let cz = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 100.0, 0.0, 0.0]);
    let dzu = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
    (
        TBOperator::from_constant(EXAMPLE_OMEGA, &cz),
        TBOperator::from_constant(EXAMPLE_OMEGA, &dzu),
    )
}

/// Example model with the LQR-equivalent H2 channel (`Bw = I`).
pub fn example_model(p: usize) -> LTPModel {
    let (cz, dzu) = performance_output();
    LTPModel::new(
        example_a(p),
        example_b(p),
        TBOperator::identity(EXAMPLE_OMEGA, 2),
        cz,
        dzu,
        TBOperator::zeros(EXAMPLE_OMEGA, 3, 2),
    )
    .expect("example model is consistent")
}

/// Example model configured for H-infinity synthesis (`Bw = B`).
pub fn hinf_model(p: usize) -> LTPModel {
    let (cz, dzu) = performance_output();
    LTPModel::new(
        example_a(p),
        example_b(p),
        example_b(p),
        cz,
        dzu,
        TBOperator::zeros(EXAMPLE_OMEGA, 3, 1),
    )
    .expect("example model is consistent")
}

fn random_real_op(rng: &mut ChaCha8Rng, rows: usize, cols: usize, degree: usize, amp: f64) -> TBOperator {
    let mut out = TBOperator::zeros(EXAMPLE_OMEGA, rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            out.set_coeff(i, j, 0, Complex64::new(amp * rng.gen_range(-1.0..1.0), 0.0));
            for k in 1..=degree as i64 {
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (amp / (1 + k) as f64);
                out.set_coeff(i, j, k, c);
                out.set_coeff(i, j, -k, c.conj());
            }
        }
    }
    out
}

/// Random stable LTP model with `n` states, one input, one disturbance and
/// one output. `A(t) + A(t)'` is made uniformly negative definite, which
/// guarantees exponential stability.
pub fn random_stable_model(seed: u64, n: usize, degree: usize) -> LTPModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = EXAMPLE_OMEGA;
    let raw = random_real_op(&mut rng, n, n, degree, 1.0);
    let shift = raw.operator_norm_grid(1024) + 0.5;
    let a = raw.sub(&TBOperator::identity(w, n).scale(shift)).expect("square");
    let b = random_real_op(&mut rng, n, 1, degree, 1.0);
    let bw = random_real_op(&mut rng, n, 1, degree, 1.0);
    let cz = random_real_op(&mut rng, 1, n, degree, 1.0);
    LTPModel::new(
        a,
        b,
        bw,
        cz,
        TBOperator::zeros(w, 1, 1),
        TBOperator::zeros(w, 1, 1),
    )
    .expect("consistent random model")
}
