//! Band-limited T-periodic scalar signals stored as phasor sequences.
//!
//! A signal `x(t) = sum_k c_k exp(j*omega*k*t)` is kept as the finite map
//! `k -> c_k`. Trigonometric series are converted once into this exponential
//! form (`a*sin(k w t)` gives `c_{+-k} = -+ j a/2`, `b*cos(k w t)` gives
//! `c_{+-k} = b/2`), so all downstream algebra works on a single
//! representation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const REAL_TOL: f64 = 1e-12;

/// One serialized phasor `{k, re, im}`. Omitted harmonics are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasorRecord {
    pub k: i64,
    pub re: f64,
    pub im: f64,
}

/// Phasor sequence of one scalar T-periodic signal with finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasorSeries {
    omega: f64,
    coeffs: BTreeMap<i64, Complex64>,
    real: bool,
}

/// Standard waveforms with the offsets used by the periodic benchmark system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    /// `1 + (4/pi) sum_{k>=0} sin((2k+1) w t)/(2k+1)`
    Square,
    /// `2 + (16/pi^2) sum_{k>=0} cos((2k+1) w t)/(2k+1)^2`
    Triangle,
    /// `-1 + (2/pi) sum_{k>=1} (-1)^k/k sin(k w t + pi/4)`
    Sawtooth,
}

impl PhasorSeries {
    /// The zero signal.
    pub fn zero(omega: f64) -> Self {
        Self {
            omega,
            coeffs: BTreeMap::new(),
            real: true,
        }
    }

    pub fn constant(omega: f64, value: f64) -> Self {
        let mut s = Self::zero(omega);
        s.set(0, Complex64::new(value, 0.0));
        s
    }

    /// Builds a series from `(k, c_k)` pairs. Repeated harmonics accumulate.
    /// The real-valued flag is set when the coefficients are conjugate symmetric.
    pub fn from_coeffs<I>(omega: f64, coeffs: I) -> Self
    where
        I: IntoIterator<Item = (i64, Complex64)>,
    {
        let mut s = Self::zero(omega);
        for (k, c) in coeffs {
            let v = s.coeff(k) + c;
            s.set(k, v);
        }
        s.real = s.check_conjugate_symmetry();
        s
    }

    /// Builds a real signal `offset + sum a_k sin(k w t) + b_k cos(k w t)` from
    /// `(k, a_k, b_k)` triples with `k >= 1`.
    pub fn from_trig(omega: f64, offset: f64, terms: &[(i64, f64, f64)]) -> Self {
        let mut pairs = vec![(0, Complex64::new(offset, 0.0))];
        for &(k, a, b) in terms {
            assert!(k >= 1, "trigonometric harmonic must be positive");
            pairs.push((k, Complex64::new(b / 2.0, -a / 2.0)));
            pairs.push((-k, Complex64::new(b / 2.0, a / 2.0)));
        }
        Self::from_coeffs(omega, pairs)
    }

    pub fn from_records(omega: f64, records: &[PhasorRecord]) -> Self {
        Self::from_coeffs(
            omega,
            records.iter().map(|r| (r.k, Complex64::new(r.re, r.im))),
        )
    }

    pub fn to_records(&self) -> Vec<PhasorRecord> {
        self.coeffs
            .iter()
            .map(|(&k, c)| PhasorRecord {
                k,
                re: c.re,
                im: c.im,
            })
            .collect()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        self.coeffs.get(&k).copied().unwrap_or_default()
    }

    /// Sets `c_k`; exact zeros are removed from the support.
    pub fn set(&mut self, k: i64, c: Complex64) {
        if c == Complex64::new(0.0, 0.0) {
            self.coeffs.remove(&k);
        } else {
            self.coeffs.insert(k, c);
        }
        self.real = self.check_conjugate_symmetry();
    }

    /// Nonzero coefficients in increasing harmonic order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.coeffs.iter().map(|(&k, &c)| (k, c))
    }

    /// Largest `|k|` with a nonvanishing coefficient (0 for the zero signal).
    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(k, _)| k.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    fn check_conjugate_symmetry(&self) -> bool {
        let scale = self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max);
        self.coeffs
            .iter()
            .all(|(&k, &c)| (c - self.coeff(-k).conj()).norm() <= REAL_TOL * scale.max(1.0))
    }

    /// Value at time `t`. For real-valued series the (round-off) imaginary
    /// part is dropped.
    pub fn eval(&self, t: f64) -> Complex64 {
        let v: Complex64 = self
            .coeffs
            .iter()
            .map(|(&k, &c)| c * Complex64::from_polar(1.0, self.omega * k as f64 * t))
            .sum();
        if self.real {
            debug_assert!(v.im.abs() <= 1e-9 * (1.0 + v.norm()));
            Complex64::new(v.re, 0.0)
        } else {
            v
        }
    }

    pub fn eval_real(&self, t: f64) -> f64 {
        self.eval(t).re
    }

    /// Time derivative of the signal, as a series.
    pub fn derivative(&self) -> Self {
        let omega = self.omega;
        Self::from_coeffs(
            omega,
            self.iter()
                .map(|(k, c)| (k, c * Complex64::new(0.0, omega * k as f64))),
        )
    }

    /// Series of `t -> s(t - delta)`.
    pub fn shift(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for (&k, c) in out.coeffs.iter_mut() {
            *c *= Complex64::from_polar(1.0, -self.omega * k as f64 * delta);
        }
        out
    }

    /// Removes all harmonics with `|k| > p`.
    pub fn band(&self, p: usize) -> Self {
        let mut out = self.clone();
        out.coeffs.retain(|k, _| k.unsigned_abs() as usize <= p);
        out.real = out.check_conjugate_symmetry();
        out
    }

    /// Drops coefficients with modulus below `tol`.
    pub fn prune(&self, tol: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.retain(|_, c| c.norm() > tol);
        out.real = out.check_conjugate_symmetry();
        out
    }

    pub fn scale(&self, a: Complex64) -> Self {
        Self::from_coeffs(self.omega, self.iter().map(|(k, c)| (k, c * a)))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_coeffs(self.omega, self.iter().chain(other.iter()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_coeffs(
            self.omega,
            self.iter().chain(other.iter().map(|(k, c)| (k, -c))),
        )
    }

    /// Product of two signals: convolution of the coefficient sequences.
    pub fn mul(&self, other: &Self) -> Self {
        let mut acc: BTreeMap<i64, Complex64> = BTreeMap::new();
        for (ka, ca) in self.iter() {
            for (kb, cb) in other.iter() {
                *acc.entry(ka + kb).or_default() += ca * cb;
            }
        }
        Self::from_coeffs(self.omega, acc)
    }

    /// Series of `conj(s(t))`: `c'_k = conj(c_{-k})`.
    pub fn conj(&self) -> Self {
        Self::from_coeffs(self.omega, self.iter().map(|(k, c)| (-k, c.conj())))
    }

    /// Band-limited truncation (`|k| <= p`) of a standard waveform.
    pub fn waveform(kind: Waveform, p: usize, omega: f64) -> Self {
        let p = p as i64;
        let mut terms = Vec::new();
        let offset = match kind {
            Waveform::Square => {
                for k in (1..=p).step_by(2) {
                    terms.push((k, 4.0 / (PI * k as f64), 0.0));
                }
                1.0
            }
            Waveform::Triangle => {
                for k in (1..=p).step_by(2) {
                    terms.push((k, 0.0, 16.0 / (PI * PI * (k * k) as f64)));
                }
                2.0
            }
            Waveform::Sawtooth => {
                // sin(k w t + pi/4) = (sin(k w t) + cos(k w t)) / sqrt(2)
                for k in 1..=p {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    let amp = sign * 2.0 / (PI * k as f64) * std::f64::consts::FRAC_1_SQRT_2;
                    terms.push((k, amp, amp));
                }
                -1.0
            }
        };
        Self::from_trig(omega, offset, &terms)
    }
}

/// Sliding Fourier decomposition of a sampled scalar signal over the window
/// `[t_end - window, t_end]`.
///
/// `samples` must be uniformly spaced and include both window endpoints.
/// Returns `X_k(t_end)` for `k = -kmax..=kmax` (index `k + kmax`), computed by
/// the composite trapezoid rule.
pub fn sliding_fourier(
    samples: &[f64],
    window: f64,
    kmax: usize,
    t_end: f64,
) -> Result<Vec<Complex64>> {
    let complex: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    sliding_fourier_complex(&complex, window, kmax, t_end)
}

pub fn sliding_fourier_complex(
    samples: &[Complex64],
    window: f64,
    kmax: usize,
    t_end: f64,
) -> Result<Vec<Complex64>> {
    let need = 8 * (2 * kmax + 1);
    if samples.len() < need {
        return Err(Error::InsufficientSampling {
            got: samples.len(),
            need,
        });
    }
    if !(window > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "window length must be positive, got {window}"
        )));
    }
    let omega = 2.0 * PI / window;
    let intervals = samples.len() - 1;
    let h = window / intervals as f64;
    let t0 = t_end - window;
    let k = kmax as i64;
    Ok((-k..=k)
        .map(|kk| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &x) in samples.iter().enumerate() {
                let w = if i == 0 || i == intervals { 0.5 } else { 1.0 };
                let tau = t0 + i as f64 * h;
                acc += x * w * Complex64::from_polar(1.0, -omega * kk as f64 * tau);
            }
            acc * h / window
        })
        .collect())
}

/// Samples `f` on `n_intervals + 1` uniform points covering `[t_end - window, t_end]`.
pub fn sample_window<F: Fn(f64) -> f64>(
    f: F,
    window: f64,
    t_end: f64,
    n_intervals: usize,
) -> Vec<f64> {
    let h = window / n_intervals as f64;
    (0..=n_intervals)
        .map(|i| f(t_end - window + i as f64 * h))
        .collect()
}

/// Mean of `|x|^2` over the window by the trapezoid rule (sliding L2 norm squared).
pub fn window_energy(samples: &[f64], window: f64) -> f64 {
    let n = samples.len() - 1;
    let h = window / n as f64;
    let s: f64 = samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * x * x
        })
        .sum();
    s * h / window
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const W: f64 = 2.0 * PI;

    #[test]
    fn constant_eval() {
        let s = PhasorSeries::constant(W, 1.0);
        assert_eq!(s.eval(0.37), Complex64::new(1.0, 0.0));
        assert_eq!(s.degree(), 0);
    }

    #[test]
    fn sine_at_quarter_period() {
        let s = PhasorSeries::from_coeffs(
            W,
            [(1, Complex64::new(0.0, -0.5)), (-1, Complex64::new(0.0, 0.5))],
        );
        assert!(s.is_real());
        assert_abs_diff_eq!(s.eval_real(0.25), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn a22_at_zero() {
        let a22 = PhasorSeries::from_trig(
            W,
            1.0,
            &[(1, -2.0, 0.0), (3, -2.0, 2.0), (5, 0.0, 2.0)],
        );
        assert_abs_diff_eq!(a22.eval_real(0.0), 5.0, epsilon = 1e-13);
        assert_eq!(a22.degree(), 5);
    }

    #[test]
    fn square_wave_coefficients() {
        let s = PhasorSeries::waveform(Waveform::Square, 3, W);
        assert_abs_diff_eq!(s.coeff(0).re, 1.0);
        assert_abs_diff_eq!(s.coeff(1).im, -2.0 / PI, epsilon = 1e-15);
        assert_abs_diff_eq!(s.coeff(-1).im, 2.0 / PI, epsilon = 1e-15);
        assert_abs_diff_eq!(s.coeff(3).im, -2.0 / (3.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(s.coeff(-3).im, 2.0 / (3.0 * PI), epsilon = 1e-15);
        assert_eq!(s.coeff(2), Complex64::default());
        assert_eq!(s.coeff(1).re, 0.0);
    }

    #[test]
    fn triangle_and_sawtooth_offsets() {
        let t = PhasorSeries::waveform(Waveform::Triangle, 1, W);
        assert_abs_diff_eq!(t.coeff(0).re, 2.0);
        assert_abs_diff_eq!(t.coeff(1).re, 8.0 / (PI * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(t.coeff(-1).re, 8.0 / (PI * PI), epsilon = 1e-15);
        let s = PhasorSeries::waveform(Waveform::Sawtooth, 0, W);
        assert_eq!(s.degree(), 0);
        assert_abs_diff_eq!(s.coeff(0).re, -1.0);
    }

    #[test]
    fn sawtooth_matches_trig_series() {
        let s = PhasorSeries::waveform(Waveform::Sawtooth, 7, W);
        for &t in &[0.0, 0.13, 0.5, 0.77] {
            let direct: f64 = -1.0
                + (1..=7)
                    .map(|k| {
                        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                        2.0 / PI * sign / k as f64 * (W * k as f64 * t + PI / 4.0).sin()
                    })
                    .sum::<f64>();
            assert_abs_diff_eq!(s.eval_real(t), direct, epsilon = 1e-13);
        }
    }

    #[test]
    fn shift_examples() {
        let s = PhasorSeries::waveform(Waveform::Square, 5, W);
        assert_eq!(s.shift(0.0), s);
        let e = PhasorSeries::from_coeffs(W, [(1, Complex64::new(1.0, 0.0))]);
        let sh = e.shift(0.5);
        assert_abs_diff_eq!(sh.coeff(1).re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sh.coeff(1).im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn shift_matches_delayed_evaluation() {
        let s = PhasorSeries::waveform(Waveform::Square, 5, W);
        let sh = s.shift(0.3);
        for i in 0..100 {
            let t = (i as f64 * 0.6180339887) % 3.0 - 1.0;
            assert_abs_diff_eq!(sh.eval_real(t), s.eval_real(t - 0.3), epsilon = 1e-12);
        }
    }

    #[test]
    fn sliding_fourier_constant_and_cosine() {
        let x = sample_window(|_| 3.0, 1.0, 1.0, 64);
        let c = sliding_fourier(&x, 1.0, 2, 1.0).unwrap();
        assert_abs_diff_eq!(c[2].re, 3.0, epsilon = 1e-14);
        for i in [0, 1, 3, 4] {
            assert!(c[i].norm() < 1e-14);
        }
        let x = sample_window(|t| (2.0 * PI * t).cos(), 1.0, 0.4, 4096);
        let c = sliding_fourier(&x, 1.0, 3, 0.4).unwrap();
        assert_abs_diff_eq!(c[2].re, 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(c[4].re, 0.5, epsilon = 1e-8);
        for i in [0, 1, 3, 5, 6] {
            assert!(c[i].norm() < 1e-8);
        }
    }

    #[test]
    fn sliding_fourier_recovers_square_coefficients() {
        // Oracle: analytic coefficients of 1 + (4/pi) sum sin((2k+1) w t)/(2k+1), 2k+1 <= 9.
        let truncated = |t: f64| {
            1.0 + (0..5)
                .map(|k| {
                    let m = (2 * k + 1) as f64;
                    4.0 / PI * (W * m * t).sin() / m
                })
                .sum::<f64>()
        };
        let x = sample_window(truncated, 1.0, 1.0, 2048);
        let c = sliding_fourier(&x, 1.0, 9, 1.0).unwrap();
        for k in -9i64..=9 {
            let expect = if k == 0 {
                Complex64::new(1.0, 0.0)
            } else if k % 2 != 0 {
                Complex64::new(0.0, -2.0 / (PI * k as f64))
            } else {
                Complex64::default()
            };
            assert!((c[(k + 9) as usize] - expect).norm() < 1e-6, "k={k}");
        }
    }

    #[test]
    fn sliding_fourier_rejects_sparse_samples() {
        let x = vec![0.0; 30];
        assert!(matches!(
            sliding_fourier(&x, 1.0, 2, 1.0),
            Err(Error::InsufficientSampling { got: 30, need: 40 })
        ));
    }

    #[test]
    fn records_roundtrip() {
        let s = PhasorSeries::waveform(Waveform::Triangle, 5, W);
        let back = PhasorSeries::from_records(W, &s.to_records());
        assert_eq!(back, s);
    }

    #[test]
    fn product_of_exponentials() {
        let a = PhasorSeries::from_coeffs(W, [(1, Complex64::new(1.0, 0.0))]);
        let b = PhasorSeries::from_coeffs(W, [(-1, Complex64::new(1.0, 0.0))]);
        let p = a.mul(&b);
        assert_eq!(p.degree(), 0);
        assert_eq!(p.coeff(0), Complex64::new(1.0, 0.0));
    }
}
