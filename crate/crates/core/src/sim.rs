//! Time-domain oracles: fixed-step RK4 integration of LTP systems, the
//! monodromy matrix, impulse-response H2 norms, harmonic equilibria and the
//! three-phase closed-loop tracking experiment.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmodel::{fold, harmonic_state_matrix, LTPModel};
use crate::linalg::condition_number;
use crate::phasor::{PhasorRecord, PhasorSeries};
use crate::tbalg::{TBOperator, TruncatedMatrix};

/// Default step `T / 2000`.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 2000;
/// Coarsest allowed step `T / 200`.
pub const MIN_STEPS_PER_PERIOD: usize = 200;
const BLOW_UP: f64 = 1e12;

/// `T / 2000`, refined so that `dt * sup_t ||A(t)|| <= 0.5` for stiff models
/// such as closed loops with large gains.
pub fn default_dt(model: &LTPModel) -> f64 {
    let period = model.period();
    let stiff = (period * model.a.operator_norm_grid(256) / 0.5).ceil();
    let steps = if stiff.is_finite() { stiff.max(DEFAULT_STEPS_PER_PERIOD as f64) } else { DEFAULT_STEPS_PER_PERIOD as f64 };
    period / steps
}

fn check_dt(model: &LTPModel, dt: f64) -> Result<()> {
    let max = model.period() / MIN_STEPS_PER_PERIOD as f64;
    if !(dt > 0.0) || dt > max * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "step {dt} rejected: must lie in (0, T/{MIN_STEPS_PER_PERIOD}] = (0, {max:.6e}]"
        )));
    }
    Ok(())
}

/// Exogenous signals at one instant: `u = u_ref + K (x_ref - x)`, plus disturbance `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub u_ref: DVector<f64>,
    pub x_ref: DVector<f64>,
    pub w: DVector<f64>,
}

impl Drive {
    pub fn zero(model: &LTPModel) -> Self {
        Self {
            u_ref: DVector::zeros(model.m()),
            x_ref: DVector::zeros(model.n()),
            w: DVector::zeros(model.nw()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub x_ref: Vec<DVector<f64>>,
    /// Performance output `z = Cz x + Dzu u + Dzw w`.
    pub outputs: Vec<DVector<f64>>,
    pub method: String,
    pub step: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Columns `t, x1.., u1.., xref1..`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.states.first().map_or(0, |x| x.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        header.extend((1..=n).map(|i| format!("xref{i}")));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![format!("{:.9}", self.times[i])];
            rec.extend(self.states[i].iter().map(|v| format!("{v:.12e}")));
            rec.extend(self.inputs[i].iter().map(|v| format!("{v:.12e}")));
            rec.extend(self.x_ref[i].iter().map(|v| format!("{v:.12e}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Eval {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    bw: DMatrix<f64>,
    k: Option<DMatrix<f64>>,
}

fn eval_at(model: &LTPModel, gain: Option<&TBOperator>, t: f64) -> Eval {
    Eval {
        a: model.a.eval_real(t),
        b: model.b.eval_real(t),
        bw: model.bw.eval_real(t),
        k: gain.map(|k| k.eval_real(t)),
    }
}

fn control(e: &Eval, x: &DVector<f64>, d: &Drive) -> DVector<f64> {
    match &e.k {
        Some(k) => &d.u_ref + k * (&d.x_ref - x),
        None => d.u_ref.clone(),
    }
}

fn rhs(e: &Eval, x: &DVector<f64>, d: &Drive) -> DVector<f64> {
    let u = control(e, x, d);
    let mut dx = &e.a * x + &e.b * u;
    if d.w.len() > 0 {
        dx += &e.bw * &d.w;
    }
    dx
}

/// Fixed-step RK4 integration of `x' = A x + B u + Bw w` over `t_span`, with
/// `u = u_ref + K (x_ref - x)` when a gain is given and `u = u_ref` otherwise.
/// The step is shrunk to `dt' <= dt` so that the grid ends exactly at `t_span.1`.
pub fn integrate(
    model: &LTPModel,
    gain: Option<&TBOperator>,
    x0: &DVector<f64>,
    t_span: (f64, f64),
    dt: f64,
    drive: &dyn Fn(f64) -> Drive,
) -> Result<Trajectory> {
    check_dt(model, dt)?;
    let n = model.n();
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 has length {}, state dimension is {n}", x0.len())));
    }
    if let Some(k) = gain {
        if k.rows() != model.m() || k.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "gain is {}x{}, expected {}x{n}",
                k.rows(),
                k.cols(),
                model.m()
            )));
        }
    }
    let (t0, t1) = t_span;
    if !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!("empty time span [{t0}, {t1}]")));
    }
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { 0.0 } else { (t1 - t0) / steps as f64 };

    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        x_ref: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        method: "rk4".into(),
        step: h,
    };
    let cz_dzu_dzw = |t: f64| (model.cz.eval_real(t), model.dzu.eval_real(t), model.dzw.eval_real(t));
    let mut record = |t: f64, x: &DVector<f64>, e: &Eval, d: &Drive| {
        let u = control(e, x, d);
        let (cz, dzu, dzw) = cz_dzu_dzw(t);
        let mut z = &cz * x + &dzu * &u;
        if d.w.len() > 0 {
            z += &dzw * &d.w;
        }
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.inputs.push(u);
        traj.x_ref.push(d.x_ref.clone());
        traj.outputs.push(z);
    };

    let mut x = x0.clone();
    let mut e0 = eval_at(model, gain, t0);
    let mut d0 = drive(t0);
    record(t0, &x, &e0, &d0);
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        let tm = t + 0.5 * h;
        let tn = t0 + (s + 1) as f64 * h;
        let em = eval_at(model, gain, tm);
        let dm = drive(tm);
        let en = eval_at(model, gain, tn);
        let dn = drive(tn);
        let k1 = rhs(&e0, &x, &d0);
        let k2 = rhs(&em, &(&x + &k1 * (0.5 * h)), &dm);
        let k3 = rhs(&em, &(&x + &k2 * (0.5 * h)), &dm);
        let k4 = rhs(&en, &(&x + &k3 * h), &dn);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let norm = x.norm();
        if !norm.is_finite() || norm > BLOW_UP {
            return Err(Error::Integration(format!("state norm {norm:.3e} at t = {tn:.6}")));
        }
        record(tn, &x, &en, &dn);
        e0 = en;
        d0 = dn;
    }
    Ok(traj)
}

/// Integrates the fundamental matrix `X' = A(t) X` from `X(t0) = X0`.
fn propagate(model: &LTPModel, x0: &DMatrix<f64>, t0: f64, steps: usize, h: f64) -> Result<DMatrix<f64>> {
    let mut x = x0.clone();
    let mut a0 = model.a.eval_real(t0);
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        let am = model.a.eval_real(t + 0.5 * h);
        let an = model.a.eval_real(t0 + (s + 1) as f64 * h);
        let k1 = &a0 * &x;
        let k2 = &am * (&x + &k1 * (0.5 * h));
        let k3 = &am * (&x + &k2 * (0.5 * h));
        let k4 = &an * (&x + &k3 * h);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let norm = x.norm();
        if !norm.is_finite() || norm > BLOW_UP {
            return Err(Error::Integration(format!("fundamental matrix norm {norm:.3e}")));
        }
        a0 = an;
    }
    Ok(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct Monodromy {
    pub phi: DMatrix<f64>,
    pub multipliers: Vec<Complex64>,
    /// `log(mu) / T`, imaginary parts folded into `(-omega/2, omega/2]`.
    pub exponents: Vec<Complex64>,
}

impl Monodromy {
    pub fn is_stable(&self) -> bool {
        self.multipliers.iter().all(|m| m.norm() < 1.0)
    }

    pub fn max_real_exponent(&self) -> f64 {
        self.exponents.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `Phi(T, 0)` of `x' = A(t) x` and the Floquet exponents.
pub fn monodromy(model: &LTPModel, dt: f64) -> Result<Monodromy> {
    check_dt(model, dt)?;
    let period = model.period();
    let steps = (period / dt - 1e-9).ceil() as usize;
    let n = model.n();
    let phi = propagate(model, &DMatrix::identity(n, n), 0.0, steps, period / steps as f64)?;
    let multipliers: Vec<Complex64> = phi.complex_eigenvalues().iter().copied().collect();
    let mut exponents: Vec<Complex64> = multipliers
        .iter()
        .map(|mu| fold(mu.ln() / period, model.omega).0)
        .collect();
    exponents.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    Ok(Monodromy {
        phi,
        multipliers,
        exponents,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ImpulseOptions {
    /// Quadrature nodes for the impulse time over one period.
    pub tau_samples: usize,
    pub dt: Option<f64>,
    /// Integration stops once the response has decayed by this factor.
    pub decay: f64,
    pub max_periods: usize,
}

impl Default for ImpulseOptions {
    fn default() -> Self {
        Self {
            tau_samples: 32,
            dt: None,
            decay: 1e-9,
            max_periods: 500,
        }
    }
}

/// H2 norm from impulse responses:
/// `(1/T) int_0^T int_0^inf ||Cz(tau+t) Phi(tau+t, tau) Bw(tau)||_F^2 dt dtau`,
/// square-rooted. Requires `Dzw = 0`.
pub fn h2_impulse(model: &LTPModel, opts: ImpulseOptions) -> Result<f64> {
    if !model.dzw.is_zero() {
        return Err(Error::FeedthroughNonzero);
    }
    let dt = opts.dt.unwrap_or_else(|| default_dt(model));
    check_dt(model, dt)?;
    let period = model.period();
    let per = (period / dt - 1e-9).ceil() as usize;
    let h = period / per as f64;
    let m = opts.tau_samples.max(2);
    let mut total = 0.0;
    for i in 0..m {
        let tau = period * i as f64 / m as f64;
        let mut x = model.bw.eval_real(tau);
        let scale = x.norm().max(f64::MIN_POSITIVE);
        let energy = |t: f64, x: &DMatrix<f64>| (model.cz.eval_real(t) * x).norm_squared();
        let mut acc = 0.0;
        let mut prev = energy(tau, &x);
        let mut t = tau;
        let mut decayed = false;
        for _ in 0..opts.max_periods {
            for _ in 0..per {
                x = propagate(model, &x, t, 1, h)?;
                t += h;
                let e = energy(t, &x);
                acc += 0.5 * h * (prev + e);
                prev = e;
            }
            if x.norm() <= opts.decay * scale {
                decayed = true;
                break;
            }
        }
        if !decayed {
            return Err(Error::Unstable(format!(
                "impulse response from tau = {tau:.4} has not decayed after {} periods",
                opts.max_periods
            )));
        }
        total += acc;
    }
    Ok((total / m as f64).sqrt())
}

/// A periodic steady state `(X_ref, U_ref)` of `0 = (A - N) X + B U`, as
/// `n x 1` and `m x 1` TB vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarmonicEquilibrium {
    pub x_ref: TBOperator,
    pub u_ref: TBOperator,
    /// `||(A - N)_r X + B_r U||`.
    pub residual: f64,
    pub q: usize,
    pub r: usize,
}

/// Phasor vector of an `n x 1` TB vector, harmonics `|k| <= r`.
fn to_vector(v: &TBOperator, r: usize) -> DVector<Complex64> {
    let w = 2 * r + 1;
    DVector::from_fn(v.rows() * w, |idx, _| v.coeff(idx / w, 0, (idx % w) as i64 - r as i64))
}

fn from_vector(omega: f64, n: usize, r: usize, x: &DVector<Complex64>, real: bool) -> TBOperator {
    let mut out = TBOperator::zeros(omega, n, 1);
    for i in 0..n {
        for a in -(r as i64)..=r as i64 {
            let c = x[TruncatedMatrix::index(r, i, a)];
            let c = if real {
                (c + x[TruncatedMatrix::index(r, i, -a)].conj()) * 0.5
            } else {
                c
            };
            out.set_coeff(i, 0, a, c);
        }
    }
    out.prune(0.0)
}

fn require_vector(v: &TBOperator, rows: usize, what: &str) -> Result<()> {
    if v.rows() != rows || v.cols() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be a {rows}x1 phasor vector, got {}x{}",
            v.rows(),
            v.cols()
        )));
    }
    Ok(())
}

/// Harmonics `|k| <= q` of every block of a truncation of order `r`.
fn band_columns(blocks: usize, r: usize, q: usize) -> Vec<usize> {
    (0..blocks)
        .flat_map(|i| (-(q as i64)..=q as i64).map(move |a| TruncatedMatrix::index(r, i, a)))
        .collect()
}

/// Equilibrium closest to `xd`: minimizes `||X_d - X||` subject to
/// `(A - N)_r X + B_r U = 0`, with `X` and `U` banded at `q <= r`.
/// Solved on the null space of the constraint; when `U` is not unique the
/// minimum-norm input is returned.
pub fn harmonic_equilibrium(model: &LTPModel, xd: &TBOperator, q: usize, r: usize) -> Result<HarmonicEquilibrium> {
    let (n, m) = (model.n(), model.m());
    require_vector(xd, n, "desired state")?;
    if q > r {
        return Err(Error::InvalidArgument(format!("band q = {q} exceeds truncation r = {r}")));
    }
    let h = harmonic_state_matrix(model, r, model.degree()).data;
    let b = model.b.truncate(r).data;
    let xc = band_columns(n, r, q);
    let uc = band_columns(m, r, q);
    let (nx, nu) = (xc.len(), uc.len());
    let rows = h.nrows();
    let mut mat = DMatrix::<Complex64>::zeros(rows, nx + nu);
    for (c, &j) in xc.iter().enumerate() {
        mat.set_column(c, &h.column(j));
    }
    for (c, &j) in uc.iter().enumerate() {
        mat.set_column(nx + c, &b.column(j));
    }
    let sv = mat.clone().singular_values();
    let tol = 1e-10 * sv.max().max(1.0);
    if sv.iter().filter(|&&v| v > tol).count() < rows {
        let mut values: Vec<f64> = sv.iter().copied().collect();
        values.sort_by(|a, b| b.total_cmp(a));
        return Err(Error::RankDeficient { singular_values: values });
    }
    // null(M) is the orthogonal complement of range(M^*)
    let range = mat.adjoint().qr().q();
    let mut proj = DMatrix::<Complex64>::identity(nx + nu, nx + nu);
    proj -= &range * range.adjoint();
    let null = {
        let svd = proj.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > 0.5)
            .collect();
        DMatrix::from_fn(nx + nu, keep.len(), |i, j| u[(i, keep[j])])
    };
    let d = null.ncols();
    let xd_full = to_vector(xd, r);
    let target = DVector::from_fn(nx, |i, _| xd_full[xc[i]]);
    let sx = null.rows(0, nx).into_owned();
    // minimum-norm least squares min ||Sx y - Xd|| over the null-space coordinates
    let y = if d == 0 {
        DVector::zeros(0)
    } else {
        let svd = sx.svd(true, true);
        let cut = 1e-10 * svd.singular_values.max().max(f64::MIN_POSITIVE);
        svd.solve(&target, cut).map_err(|e| Error::Solver(e.to_string()))?
    };
    let z = &null * y;
    let mut xv = DVector::zeros(h.ncols());
    for (c, &j) in xc.iter().enumerate() {
        xv[j] = z[c];
    }
    let mut uv = DVector::zeros(b.ncols());
    for (c, &j) in uc.iter().enumerate() {
        uv[j] = z[nx + c];
    }
    let residual = (&h * &xv + &b * &uv).norm();
    let real = model.is_real_valued() && xd.is_real_valued();
    Ok(HarmonicEquilibrium {
        x_ref: from_vector(model.omega, n, r, &xv, real),
        u_ref: from_vector(model.omega, m, r, &uv, real),
        residual,
        q,
        r,
    })
}

/// State equilibrium `X = -(A - N)_r^{-1} B_r U` for a given periodic input.
pub fn input_equilibrium(model: &LTPModel, u_ref: &TBOperator, r: usize) -> Result<HarmonicEquilibrium> {
    let (n, m) = (model.n(), model.m());
    require_vector(u_ref, m, "reference input")?;
    let h = harmonic_state_matrix(model, r, model.degree()).data;
    let cond = condition_number(&h);
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::NearSingular {
            condition: cond,
            context: "harmonic state matrix has an eigenvalue on the harmonic grid".into(),
        });
    }
    let u = to_vector(u_ref, r);
    let rhs = -(model.b.truncate(r).data * &u);
    let x = h.clone().lu().solve(&rhs).ok_or_else(|| Error::NearSingular {
        condition: cond,
        context: "harmonic equilibrium".into(),
    })?;
    let residual = (&h * &x - &rhs).norm();
    let real = model.is_real_valued() && u_ref.is_real_valued();
    Ok(HarmonicEquilibrium {
        x_ref: from_vector(model.omega, n, r, &x, real),
        u_ref: from_vector(model.omega, m, r, &u, real),
        residual,
        q: r,
        r,
    })
}

/// Reference of one scenario phase; phasor lists give one entry per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reference {
    /// Regulation to the origin.
    Zero,
    /// Given periodic input with its equilibrium state.
    Input { u_ref: Vec<Vec<PhasorRecord>> },
    /// Equilibrium nearest to a desired periodic state.
    NearestEquilibrium { x_d: Vec<Vec<PhasorRecord>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub t_start: f64,
    pub reference: Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub x0: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Truncation order of the equilibrium computations.
    #[serde(default = "default_equilibrium_r")]
    pub equilibrium_r: usize,
    pub phases: Vec<Phase>,
}

fn default_equilibrium_r() -> usize {
    40
}

fn records_to_vector(omega: f64, lists: &[Vec<PhasorRecord>], rows: usize, what: &str) -> Result<TBOperator> {
    if lists.len() != rows {
        return Err(Error::DimensionMismatch(format!("{what} lists {} channels, expected {rows}", lists.len())));
    }
    TBOperator::from_blocks(
        omega,
        rows,
        1,
        lists.iter().map(|l| PhasorSeries::from_records(omega, l)).collect(),
    )
}

impl Scenario {
    /// Regulation from `x0 = (1, 0)` for `t < 2`, `u_ref = 4 cos(2 pi t)` for
    /// `2 <= t < 4`, then the equilibrium nearest to `x_d = (cos(2 pi t) / 4, 0)`.
    pub fn three_phase() -> Self {
        let half = |v: f64| vec![PhasorRecord { k: -1, re: v, im: 0.0 }, PhasorRecord { k: 1, re: v, im: 0.0 }];
        Self {
            name: "three-phase".into(),
            x0: vec![1.0, 0.0],
            t_end: 6.0,
            dt: None,
            equilibrium_r: default_equilibrium_r(),
            phases: vec![
                Phase { t_start: 0.0, reference: Reference::Zero },
                Phase {
                    t_start: 2.0,
                    reference: Reference::Input { u_ref: vec![half(2.0)] },
                },
                Phase {
                    t_start: 4.0,
                    reference: Reference::NearestEquilibrium { x_d: vec![half(0.125), vec![]] },
                },
            ],
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "three-phase" => Some(Self::three_phase()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Malformed("scenario has no phases".into()));
        }
        if self.phases.windows(2).any(|w| w[1].t_start <= w[0].t_start) {
            return Err(Error::Malformed("phase start times must increase".into()));
        }
        if !(self.t_end > self.phases[self.phases.len() - 1].t_start) {
            return Err(Error::Malformed("t_end must follow the last phase start".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseMetric {
    pub t_start: f64,
    pub t_end: f64,
    /// RMS of `||x - x_ref||` over the last period of the phase.
    pub rms_error: f64,
    /// RMS of `||x_ref||` over the same window.
    pub ref_rms: f64,
    pub equilibrium_residual: f64,
}

#[derive(Debug, Clone)]
pub struct TrackingResult {
    pub trajectory: Trajectory,
    pub phases: Vec<PhaseMetric>,
    pub references: Vec<HarmonicEquilibrium>,
}

fn resolve(model: &LTPModel, reference: &Reference, r: usize) -> Result<HarmonicEquilibrium> {
    let (n, m) = (model.n(), model.m());
    let w = model.omega;
    match reference {
        Reference::Zero => Ok(HarmonicEquilibrium {
            x_ref: TBOperator::zeros(w, n, 1),
            u_ref: TBOperator::zeros(w, m, 1),
            residual: 0.0,
            q: 0,
            r,
        }),
        Reference::Input { u_ref } => input_equilibrium(model, &records_to_vector(w, u_ref, m, "u_ref")?, r),
        Reference::NearestEquilibrium { x_d } => {
            harmonic_equilibrium(model, &records_to_vector(w, x_d, n, "x_d")?, r, r)
        }
    }
}

/// Runs a scenario under `u = u_ref - K (x - x_ref)`, or open loop when no
/// gain is given, and reports the tracking error over the last period of
/// each phase.
pub fn tracking_experiment(model: &LTPModel, gain: Option<&TBOperator>, scenario: &Scenario) -> Result<TrackingResult> {
    scenario.validate()?;
    let n = model.n();
    if scenario.x0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "scenario x0 has length {}, state dimension is {n}",
            scenario.x0.len()
        )));
    }
    let references = scenario
        .phases
        .iter()
        .map(|p| resolve(model, &p.reference, scenario.equilibrium_r))
        .collect::<Result<Vec<_>>>()?;
    let starts: Vec<f64> = scenario.phases.iter().map(|p| p.t_start).collect();
    let phase_at = |t: f64| starts.iter().rposition(|&s| t >= s - 1e-12).unwrap_or(0);
    let drive = |t: f64| {
        let eq = &references[phase_at(t)];
        Drive {
            u_ref: eq.u_ref.eval_real(t).column(0).into_owned(),
            x_ref: eq.x_ref.eval_real(t).column(0).into_owned(),
            w: DVector::zeros(model.nw()),
        }
    };
    let dt = match (scenario.dt, gain) {
        (Some(dt), _) => dt,
        (None, Some(k)) => default_dt(&model.close_loop(k)?),
        (None, None) => default_dt(model),
    };
    let t0 = starts[0];
    let traj = integrate(model, gain, &DVector::from_column_slice(&scenario.x0), (t0, scenario.t_end), dt, &drive)?;

    let period = model.period();
    let mut phases = Vec::with_capacity(starts.len());
    for (i, eq) in references.iter().enumerate() {
        let t_end = starts.get(i + 1).copied().unwrap_or(scenario.t_end);
        let from = (t_end - period).max(starts[i]);
        let (mut se, mut sr, mut cnt) = (0.0, 0.0, 0usize);
        for (j, &t) in traj.times.iter().enumerate() {
            // samples in [from, t_end), so a phase switch at t_end is excluded
            if t >= from - 1e-12 && t < t_end - 1e-12 {
                se += (&traj.states[j] - &traj.x_ref[j]).norm_squared();
                sr += traj.x_ref[j].norm_squared();
                cnt += 1;
            }
        }
        let cnt = cnt.max(1) as f64;
        phases.push(PhaseMetric {
            t_start: starts[i],
            t_end,
            rms_error: (se / cnt).sqrt(),
            ref_rms: (sr / cnt).sqrt(),
            equilibrium_residual: eq.residual,
        });
    }
    Ok(TrackingResult {
        trajectory: traj,
        phases,
        references,
    })
}
