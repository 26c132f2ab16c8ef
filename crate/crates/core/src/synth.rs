//! Gain synthesis: assemble the truncated program, solve it, extract the
//! periodic gain `K`, and verify the closed loop.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmodel::{spectrum, LTPModel};
use crate::sim::{default_dt, monodromy};
use crate::sdp::{default_solver, ConicSolver, SolveOptions, Status};
use crate::tbalg::{max_singular_value, TBOperator, TruncatedMatrix};
use crate::tblmi::{
    build_h2, build_hinf, build_lqr_dual, build_lqr_primal, pdlmi_residual, PdlmiForm, TbLmiProgram,
};

pub use crate::tblmi::LqrWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LqrPrimal,
    LqrDual,
    H2,
    Hinf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LqrPrimal, Method::LqrDual, Method::H2, Method::Hinf];

    /// Default phasor band of the unknowns: `2r` for the primal LQR program, `r` otherwise.
    pub fn default_q(self, r: usize) -> usize {
        match self {
            Method::LqrPrimal => 2 * r,
            _ => r,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LqrPrimal => "lqr-primal",
            Method::LqrDual => "lqr-dual",
            Method::H2 => "h2",
            Method::Hinf => "hinf",
        }
    }

    /// Whether the program maximizes its objective.
    pub fn maximizes(self) -> bool {
        self == Method::LqrPrimal
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}' (expected lqr-primal, lqr-dual, h2 or hinf)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orders {
    pub p: usize,
    pub q: usize,
    pub r: usize,
}

impl Orders {
    pub fn new(p: usize, q: usize, r: usize) -> Self {
        Self { p, q, r }
    }

    /// `p = 2r` and `q` per [`Method::default_q`].
    pub fn defaults(method: Method, r: usize) -> Self {
        Self::new(2 * r, method.default_q(r), r)
    }
}

impl fmt::Display for Orders {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(p={}, q={}, r={})", self.p, self.q, self.r)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub eps: Option<f64>,
    pub solve: SolveOptions,
    /// Extra harmonics used when inverting a truncated TB unknown; doubled
    /// up to `max_inverse_margin` until the inverse validates.
    pub inverse_margin: usize,
    pub max_inverse_margin: usize,
    pub inverse_tol: f64,
    pub pdlmi_samples: usize,
    /// Reject gains whose certificate fails the sampled periodic inequality.
    /// Off by default: the truncated certificate is band-limited, and its
    /// derivative tail can break the pointwise inequality even when the gain
    /// is accurate. The residual is always reported in the diagnostics.
    pub require_pdlmi: bool,
    /// Truncation order of the closed-loop harmonic spectrum; defaults to `max(2r, 20)`.
    pub spectrum_r: Option<usize>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            eps: None,
            solve: SolveOptions::default(),
            inverse_margin: 10,
            max_inverse_margin: 160,
            inverse_tol: 1e-6,
            pdlmi_samples: 1000,
            require_pdlmi: false,
            spectrum_r: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub status: Status,
    pub iterations: usize,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub eps: f64,
    pub nvars: usize,
    /// `||Pi(P) Pi(P^-1) - I||` on the exact central block, when an inverse was needed.
    pub inverse_error: Option<f64>,
    pub pdlmi_residual: f64,
    pub spectrum_r: usize,
    pub spectrum_source: SpectrumSource,
    #[serde(skip)]
    pub wall_time: f64,
}

/// Where the closed-loop spectrum came from. The harmonic ladder vote can
/// fail for gains with many slowly decaying phasors; the monodromy matrix is
/// used then.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumSource {
    Harmonic,
    Floquet,
}

/// A synthesized periodic gain, used as `u = -K(t) x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainResult {
    pub method: Method,
    pub orders: Orders,
    pub value: f64,
    #[serde(rename = "K")]
    pub k: TBOperator,
    /// Closed-loop core eigenvalues.
    pub spectrum: Vec<Complex64>,
    pub diagnostics: Diagnostics,
    /// Lyapunov certificate checked against [`GainResult::form`].
    #[serde(skip)]
    pub certificate: Option<TBOperator>,
    #[serde(skip)]
    pub form: Option<PdlmiForm>,
}

impl GainResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Inverse of a TB operator by padded finite section: `Pi_{r+margin}(P)` is
/// inverted and the phasors `|k| <= band` are read off its central row.
/// Also returns `||Pi_r(P) Pi_r(X) - I||` over the harmonics `|a| <= r - deg(P)`,
/// where `X` holds every phasor of the central row. On that block the product
/// of sections is exact, so the error measures how far the finite-section
/// inverse is from converged, independently of the final band.
pub fn tb_inverse(p: &TBOperator, r: usize, band: usize, margin: usize) -> Result<(TBOperator, f64)> {
    let n = p.rows();
    if p.cols() != n {
        return Err(Error::NotSquare { rows: n, cols: p.cols() });
    }
    let ri = r + margin;
    let big = p.truncate(ri).data;
    let sv = big.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 1e-8 * smax) {
        return Err(Error::Inversion(format!(
            "truncation of order {ri} is nearly singular (sigma_min {smin:.3e}, sigma_max {smax:.3e})"
        )));
    }
    let inv = big.try_inverse().ok_or_else(|| Error::Inversion(format!("truncation of order {ri} is singular")))?;
    let real = p.is_real_valued();
    let mut full = TBOperator::zeros(p.omega(), n, n);
    let b = ri as i64;
    for i in 0..n {
        for j in 0..n {
            for k in -b..=b {
                let c = inv[(TruncatedMatrix::index(ri, i, 0), TruncatedMatrix::index(ri, j, -k))];
                let c = if real {
                    let mirror = inv[(TruncatedMatrix::index(ri, i, 0), TruncatedMatrix::index(ri, j, k))];
                    (c + mirror.conj()) * 0.5
                } else {
                    c
                };
                full.set_coeff(i, j, k, c);
            }
        }
    }
    let full = full.prune(0.0);

    let rc = r.max(p.degree());
    let prod = p.truncate(rc).data * full.truncate(rc).data;
    let keep = rc - p.degree();
    let idx: Vec<usize> = (0..n)
        .flat_map(|i| (-(keep as i64)..=keep as i64).map(move |a| TruncatedMatrix::index(rc, i, a)))
        .collect();
    let d = idx.len();
    let block = DMatrix::from_fn(d, d, |a, b| {
        let e = prod[(idx[a], idx[b])];
        if a == b {
            e - Complex64::new(1.0, 0.0)
        } else {
            e
        }
    });
    Ok((full.band(band), max_singular_value(&block)))
}

/// [`tb_inverse`] with the margin doubled until the validation error is at
/// most `tol` or the margin exceeds `max_margin`. Returns the margin used.
pub fn tb_inverse_validated(
    p: &TBOperator,
    r: usize,
    band: usize,
    margin: usize,
    max_margin: usize,
    tol: f64,
) -> Result<(TBOperator, f64, usize)> {
    let mut margin = margin.max(1);
    loop {
        let (inv, err) = tb_inverse(p, r, band, margin)?;
        if err <= tol {
            return Ok((inv, err, margin));
        }
        if margin * 2 > max_margin {
            let mut msg = format!("finite-section inverse not converged: error {err:.3e} > {tol:.1e} at margin {margin}");
            if p.is_hermitian(1e-9) {
                // positivity of the truncation does not imply positivity of P(t)
                let (t, e) = pointwise_min_eigenvalue(p, 1000);
                if e <= 0.0 {
                    msg += &format!("; P(t) is not positive definite (eigenvalue {e:.3e} at t = {t:.4}), try a larger r");
                }
            }
            return Err(Error::Inversion(msg));
        }
        margin *= 2;
    }
}

/// Smallest eigenvalue of a Hermitian TB operator's time-domain matrix over
/// a uniform grid of one period, with the time where it occurs.
pub fn pointwise_min_eigenvalue(p: &TBOperator, samples: usize) -> (f64, f64) {
    let period = 2.0 * std::f64::consts::PI / p.omega();
    (0..samples.max(1))
        .map(|s| {
            let t = period * s as f64 / samples.max(1) as f64;
            (t, crate::linalg::hermitian_min_eigenvalue(&p.eval(t)))
        })
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
}

fn build(model: &LTPModel, method: Method, weights: &LqrWeights, o: Orders, eps: Option<f64>) -> Result<TbLmiProgram> {
    match method {
        Method::LqrPrimal => build_lqr_primal(model, weights, o.r, o.p, o.q, eps),
        Method::LqrDual => build_lqr_dual(model, weights, o.r, o.p, o.q, eps),
        Method::H2 => build_h2(model, o.r, o.p, o.q, eps),
        Method::Hinf => build_hinf(model, o.r, o.p, o.q, eps),
    }
}

pub fn synthesize(
    model: &LTPModel,
    method: Method,
    weights: &LqrWeights,
    orders: Orders,
    opts: &SynthOptions,
) -> Result<GainResult> {
    synthesize_with(default_solver().as_ref(), model, method, weights, orders, opts)
}

pub fn synthesize_with(
    solver: &dyn ConicSolver,
    model: &LTPModel,
    method: Method,
    weights: &LqrWeights,
    orders: Orders,
    opts: &SynthOptions,
) -> Result<GainResult> {
    let start = Instant::now();
    let prog = build(model, method, weights, orders, opts.eps)?;
    let sol = solver.solve(&prog.to_conic(), &opts.solve)?.require_optimal()?;
    let x = &sol.x;
    let plant = model.band(orders.p);
    let Orders { r, q, .. } = orders;
    let invert = |op: &TBOperator| {
        tb_inverse_validated(op, r, q, opts.inverse_margin, opts.max_inverse_margin, opts.inverse_tol)
            .map(|(inv, err, _)| (inv, err))
    };

    let (k, certificate, form, inverse_error) = match method {
        Method::LqrPrimal => {
            let p = prog.vars.decode_named("P", x)?;
            let (rinv, _) = invert(&weights.r.band(orders.p))?;
            let k = rinv.mul(&plant.b.adjoint())?.mul(&p)?.band(q);
            (k, p, PdlmiForm::Observability, None)
        }
        Method::LqrDual => {
            let s = prog.vars.decode_named("S", x)?;
            let y = prog.vars.decode_named("Y", x)?;
            let (sinv, err) = invert(&s)?;
            (y.mul(&sinv)?.band(q), s, PdlmiForm::Controllability, Some(err))
        }
        Method::H2 | Method::Hinf => {
            let p = prog.vars.decode_named("P", x)?;
            let s = prog.vars.decode_named("S", x)?;
            let (pinv, err) = invert(&p)?;
            (s.mul(&pinv)?.band(q).scale(-1.0), p, PdlmiForm::Controllability, Some(err))
        }
    };
    let k = if k.is_real_valued() { k } else { realify(&k) };

    let closed = plant.close_loop(&k)?;
    let spectrum_r = opts.spectrum_r.unwrap_or((2 * r).max(20));
    let floquet = monodromy(&closed, default_dt(&closed))?;
    let (core, source) = match spectrum(&closed, spectrum_r, closed.degree()) {
        Ok(spec) => (spec.core, SpectrumSource::Harmonic),
        Err(Error::OrderTooLow { .. }) => (floquet.exponents.clone(), SpectrumSource::Floquet),
        Err(e) => return Err(e),
    };
    let worst = core.iter().map(|z| z.re).fold(floquet.max_real_exponent(), f64::max);
    if !(worst < 0.0) || !floquet.is_stable() {
        return Err(Error::UnstableClosedLoop(worst));
    }
    let residual = pdlmi_residual(&closed, &certificate, form, opts.pdlmi_samples)?;
    if !(residual < 0.0) {
        log::warn!("sampled periodic Lyapunov inequality fails, max eigenvalue {residual:.3e}");
    }
    if opts.require_pdlmi && !(residual < 0.0) {
        return Err(Error::Consistency(format!(
            "sampled periodic Lyapunov inequality fails, max eigenvalue {residual:.3e}"
        )));
    }
    Ok(GainResult {
        method,
        orders,
        value: sol.objective,
        k,
        spectrum: core,
        diagnostics: Diagnostics {
            status: sol.status,
            iterations: sol.iterations,
            gap: sol.gap,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            eps: prog.eps,
            nvars: prog.nvars(),
            inverse_error,
            pdlmi_residual: residual,
            spectrum_r,
            spectrum_source: source,
            wall_time: start.elapsed().as_secs_f64(),
        },
        certificate: Some(certificate),
        form: Some(form),
    })
}

/// Projects onto real-valued functions: `c_k <- (c_k + conj(c_-k)) / 2`.
fn realify(k: &TBOperator) -> TBOperator {
    let mut out = k.clone();
    for i in 0..k.rows() {
        for j in 0..k.cols() {
            for (h, c) in k.block(i, j).iter() {
                out.set_coeff(i, j, h, (c + k.coeff(i, j, -h).conj()) * 0.5);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub orders: Orders,
    pub value: f64,
    /// Operator norm of `K - K_last`.
    pub gain_distance: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub method: Method,
    pub rows: Vec<SweepRow>,
    pub monotone: bool,
    /// Gain distances to the last entry strictly decrease.
    pub distances_decreasing: bool,
    #[serde(skip)]
    pub gains: Vec<GainResult>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["p", "q", "r", "value", "gain_distance", "iterations"])?;
        for row in &self.rows {
            out.write_record([
                row.orders.p.to_string(),
                row.orders.q.to_string(),
                row.orders.r.to_string(),
                format!("{:.12e}", row.value),
                format!("{:.6e}", row.gain_distance),
                row.iterations.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Synthesizes at each order triple (concurrently) and checks that the
/// optimal values move monotonically with `r`: up for minimization, down for
/// the primal LQR maximization. `slack` is a relative tolerance.
pub fn consistency_sweep(
    model: &LTPModel,
    method: Method,
    weights: &LqrWeights,
    orders: &[Orders],
    opts: &SynthOptions,
    slack: f64,
) -> Result<SweepReport> {
    if orders.len() < 3 {
        return Err(Error::InvalidArgument("a sweep needs at least three order triples".into()));
    }
    if orders.windows(2).any(|w| w[1].r <= w[0].r) {
        return Err(Error::InvalidArgument("sweep orders must have increasing r".into()));
    }
    let results: Vec<Result<GainResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = orders
            .iter()
            .map(|&o| s.spawn(move || synthesize(model, method, weights, o, opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Solver("synthesis thread panicked".into()))))
            .collect()
    });
    let gains = results.into_iter().collect::<Result<Vec<_>>>()?;
    let last = &gains[gains.len() - 1].k;
    let mut rows = Vec::with_capacity(gains.len());
    for g in &gains {
        rows.push(SweepRow {
            orders: g.orders,
            value: g.value,
            gain_distance: g.k.sub(last)?.operator_norm(),
            iterations: g.diagnostics.iterations,
        });
    }
    let mut violation = None;
    for w in rows.windows(2) {
        let (a, b) = (w[0].value, w[1].value);
        let step = if method.maximizes() { a - b } else { b - a };
        if step < -slack * (1.0 + a.abs().max(b.abs())) {
            violation = Some(format!("objective moves from {a:.10e} at {} to {b:.10e} at {}", w[0].orders, w[1].orders));
            break;
        }
    }
    let distances_decreasing = rows[..rows.len() - 1].windows(2).all(|w| w[1].gain_distance < w[0].gain_distance);
    if let Some(msg) = violation {
        return Err(Error::Consistency(msg));
    }
    Ok(SweepReport {
        method,
        rows,
        monotone: true,
        distances_decreasing,
        gains,
    })
}

/// CSV table of gain phasor moduli: one row per harmonic `k`, one column per
/// gain entry `K_ij`.
pub fn write_gain_moduli<W: Write>(k: &TBOperator, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["k".to_string()];
    for i in 0..k.rows() {
        for j in 0..k.cols() {
            header.push(format!("K{}{}", i + 1, j + 1));
        }
    }
    out.write_record(&header)?;
    let d = k.degree() as i64;
    for h in -d..=d {
        let mut rec = vec![h.to_string()];
        for i in 0..k.rows() {
            for j in 0..k.cols() {
                rec.push(format!("{:.12e}", k.coeff(i, j, h).norm()));
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// CSV of `K(t)` sampled at `samples` uniform times over one period.
pub fn write_gain_samples<W: Write>(k: &TBOperator, samples: usize, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    for i in 0..k.rows() {
        for j in 0..k.cols() {
            header.push(format!("K{}{}", i + 1, j + 1));
        }
    }
    out.write_record(&header)?;
    let period = 2.0 * std::f64::consts::PI / k.omega();
    for s in 0..samples {
        let t = period * s as f64 / samples as f64;
        let v = k.eval_real(t);
        let mut rec = vec![format!("{t:.9}")];
        for i in 0..k.rows() {
            for j in 0..k.cols() {
                rec.push(format!("{:.12e}", v[(i, j)]));
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasor::PhasorSeries;

    const W: f64 = 2.0 * std::f64::consts::PI;

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("lqr".parse::<Method>().is_err());
    }

    #[test]
    fn inverse_of_constant_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let (inv, err) = tb_inverse(&TBOperator::from_constant(W, &a), 3, 3, 10).unwrap();
        let expect = a.try_inverse().unwrap();
        assert!((inv.coeff_matrix(0).map(|z| z.re) - expect).norm() < 1e-12);
        assert_eq!(inv.degree(), 0);
        assert!(err < 1e-12);
    }

    #[test]
    fn inverse_of_periodic_scalar() {
        // 1 / (2 + cos wt) has phasors (-(2 - sqrt 3))^|k| / sqrt 3
        let p = TBOperator::from_blocks(W, 1, 1, vec![PhasorSeries::from_trig(W, 2.0, &[(1, 0.0, 1.0)])]).unwrap();
        let (inv, err) = tb_inverse(&p, 20, 12, 10).unwrap();
        let rho = -(2.0 - 3f64.sqrt());
        for k in -12i64..=12 {
            let exact = rho.powi(k.abs() as i32) / 3f64.sqrt();
            assert!((inv.coeff(0, 0, k).re - exact).abs() < 1e-12, "k = {k}");
        }
        assert!(err < 1e-6);
    }

    #[test]
    fn singular_section_is_rejected() {
        let p = TBOperator::from_constant(W, &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(matches!(tb_inverse(&p, 2, 2, 1), Err(Error::Inversion(_))));
    }

    #[test]
    fn moduli_table_has_one_row_per_harmonic() {
        let k = TBOperator::from_blocks(W, 1, 2, vec![
            PhasorSeries::from_trig(W, 1.0, &[(2, 0.0, 1.0)]),
            PhasorSeries::constant(W, -2.0),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_gain_moduli(&k, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,K11,K12");
        assert_eq!(lines.len(), 1 + 5);
        assert!(lines[3].starts_with("0,1.0"));
    }
}
