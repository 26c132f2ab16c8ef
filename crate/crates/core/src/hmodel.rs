//! Harmonic LTI representation of an LTP model: truncated state matrix,
//! spectrum, harmonic transfer function and harmonic H2 / H-infinity norms.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tbalg::{max_singular_value, truncated_product, NOperator, TBOperator, TruncatedMatrix};

/// Periodic state-space model
/// `x' = A x + B u + Bw w`, `z = Cz x + Dzu u + Dzw w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LTPModel {
    pub omega: f64,
    pub a: TBOperator,
    pub b: TBOperator,
    pub bw: TBOperator,
    pub cz: TBOperator,
    pub dzu: TBOperator,
    pub dzw: TBOperator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    omega: f64,
    #[serde(rename = "A")]
    a: TBOperator,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    b: Option<TBOperator>,
    #[serde(rename = "Bw", default, skip_serializing_if = "Option::is_none")]
    bw: Option<TBOperator>,
    #[serde(rename = "Cz", default, skip_serializing_if = "Option::is_none")]
    cz: Option<TBOperator>,
    #[serde(rename = "Dzu", default, skip_serializing_if = "Option::is_none")]
    dzu: Option<TBOperator>,
    #[serde(rename = "Dzw", default, skip_serializing_if = "Option::is_none")]
    dzw: Option<TBOperator>,
}

/// Input/output pair selected for transfer-function evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// `u -> z` through `B`, `Dzu`
    Control,
    /// `w -> z` through `Bw`, `Dzw`
    Disturbance,
}

impl LTPModel {
    /// Checks dimensions and the shared fundamental frequency.
    pub fn new(
        a: TBOperator,
        b: TBOperator,
        bw: TBOperator,
        cz: TBOperator,
        dzu: TBOperator,
        dzw: TBOperator,
    ) -> Result<Self> {
        let omega = a.omega();
        let model = Self {
            omega,
            a,
            b,
            bw,
            cz,
            dzu,
            dzw,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model with only `A` and `B`; the performance channel is empty.
    pub fn from_ab(a: TBOperator, b: TBOperator) -> Result<Self> {
        let w = a.omega();
        let n = a.rows();
        let m = b.cols();
        Self::new(
            a,
            b,
            TBOperator::zeros(w, n, 0),
            TBOperator::zeros(w, 0, n),
            TBOperator::zeros(w, 0, m),
            TBOperator::zeros(w, 0, 0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.rows();
        if self.a.cols() != n {
            return Err(Error::NotSquare {
                rows: n,
                cols: self.a.cols(),
            });
        }
        let (m, nw, nz) = (self.b.cols(), self.bw.cols(), self.cz.rows());
        let checks = [
            ("B", &self.b, n, m),
            ("Bw", &self.bw, n, nw),
            ("Cz", &self.cz, nz, n),
            ("Dzu", &self.dzu, nz, m),
            ("Dzw", &self.dzw, nz, nw),
        ];
        for (name, op, rows, cols) in checks {
            if op.rows() != rows || op.cols() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    op.rows(),
                    op.cols()
                )));
            }
            if (op.omega() - self.omega).abs() > 1e-12 * self.omega {
                return Err(Error::OmegaMismatch(self.omega, op.omega()));
            }
        }
        if !(self.omega > 0.0) {
            return Err(Error::Malformed("omega must be positive".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    pub fn nw(&self) -> usize {
        self.bw.cols()
    }

    pub fn nz(&self) -> usize {
        self.cz.rows()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Largest phasor order over all data matrices.
    pub fn degree(&self) -> usize {
        [&self.a, &self.b, &self.bw, &self.cz, &self.dzu, &self.dzw]
            .iter()
            .map(|op| op.degree())
            .max()
            .unwrap_or(0)
    }

    pub fn is_real_valued(&self) -> bool {
        [&self.a, &self.b, &self.bw, &self.cz, &self.dzu, &self.dzw]
            .iter()
            .all(|op| op.is_real_valued())
    }

    /// Every data matrix banded at `p`.
    pub fn band(&self, p: usize) -> Self {
        Self {
            omega: self.omega,
            a: self.a.band(p),
            b: self.b.band(p),
            bw: self.bw.band(p),
            cz: self.cz.band(p),
            dzu: self.dzu.band(p),
            dzw: self.dzw.band(p),
        }
    }

    /// Closed loop under `u = -K x`: `A - B K` and `Cz - Dzu K`.
    pub fn close_loop(&self, k: &TBOperator) -> Result<Self> {
        let a = self.a.sub(&self.b.mul(k)?)?;
        let cz = self.cz.sub(&self.dzu.mul(k)?)?;
        Self::new(
            a,
            TBOperator::zeros(self.omega, self.n(), 0),
            self.bw.clone(),
            cz,
            TBOperator::zeros(self.omega, self.nz(), 0),
            self.dzw.clone(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: ModelRecord = serde_json::from_str(text)?;
        let w = rec.omega;
        if (rec.a.omega() - w).abs() > 1e-12 * w.abs().max(1.0) {
            return Err(Error::OmegaMismatch(w, rec.a.omega()));
        }
        let n = rec.a.rows();
        let m = rec
            .b
            .as_ref()
            .map(|b| b.cols())
            .or(rec.dzu.as_ref().map(|d| d.cols()))
            .unwrap_or(0);
        let nw = rec
            .bw
            .as_ref()
            .map(|b| b.cols())
            .or(rec.dzw.as_ref().map(|d| d.cols()))
            .unwrap_or(0);
        let nz = rec
            .cz
            .as_ref()
            .map(|c| c.rows())
            .or(rec.dzu.as_ref().map(|d| d.rows()))
            .or(rec.dzw.as_ref().map(|d| d.rows()))
            .unwrap_or(0);
        Self::new(
            rec.a,
            rec.b.unwrap_or_else(|| TBOperator::zeros(w, n, m)),
            rec.bw.unwrap_or_else(|| TBOperator::zeros(w, n, nw)),
            rec.cz.unwrap_or_else(|| TBOperator::zeros(w, nz, n)),
            rec.dzu.unwrap_or_else(|| TBOperator::zeros(w, nz, m)),
            rec.dzw.unwrap_or_else(|| TBOperator::zeros(w, nz, nw)),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = ModelRecord {
            omega: self.omega,
            a: self.a.clone(),
            b: Some(self.b.clone()),
            bw: Some(self.bw.clone()),
            cz: Some(self.cz.clone()),
            dzu: Some(self.dzu.clone()),
            dzw: Some(self.dzw.clone()),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// `Pi_r(band(A, p)) - N_r`.
pub fn harmonic_state_matrix(model: &LTPModel, r: usize, p: usize) -> TruncatedMatrix {
    let mut t = model.a.band(p).truncate(r);
    let d = NOperator::new(model.omega, model.n()).diagonal(r);
    for (i, v) in d.into_iter().enumerate() {
        t.data[(i, i)] -= v;
    }
    t
}

/// Folds the imaginary part into `(-omega/2, omega/2]`; returns the folded
/// value and the shift index `k` with `lambda = folded + j omega k`.
pub fn fold(lambda: Complex64, omega: f64) -> (Complex64, i64) {
    let k = (lambda.im / omega + 0.5).ceil() as i64 - 1;
    let mut k = k;
    let mut im = lambda.im - omega * k as f64;
    if im <= -omega / 2.0 {
        im += omega;
        k -= 1;
    } else if im > omega / 2.0 {
        im -= omega;
        k += 1;
    }
    (Complex64::new(lambda.re, im), k)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    /// `n` eigenvalues with imaginary part folded into `(-omega/2, omega/2]`.
    pub core: Vec<Complex64>,
    /// All eigenvalues of the truncated state matrix.
    pub raw: Vec<Complex64>,
    pub r: usize,
    /// Largest distance between a retained ladder member and its core value.
    pub residual: f64,
    /// Number of ladder members supporting each core value.
    pub support: Vec<usize>,
}

impl SpectrumResult {
    pub fn max_real_part(&self) -> f64 {
        self.core.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_real_part() < 0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SpectrumOptions {
    /// Relative clustering tolerance for folded eigenvalues.
    pub tol: f64,
    /// Minimal number of translates for a ladder to count as core.
    pub min_votes: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            min_votes: 3,
        }
    }
}

pub fn spectrum(model: &LTPModel, r: usize, p: usize) -> Result<SpectrumResult> {
    spectrum_with(model, r, p, SpectrumOptions::default())
}

/// Spectrum by recurrence vote: eigenvalues whose folded copies recur at least
/// `min_votes` times form ladders, and the `n` best supported ladders give the core.
pub fn spectrum_with(model: &LTPModel, r: usize, p: usize, opts: SpectrumOptions) -> Result<SpectrumResult> {
    let n = model.n();
    let h = harmonic_state_matrix(model, r, p);
    let raw: Vec<Complex64> = h
        .data
        .clone()
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::Solver("Schur decomposition failed to converge".into()))?
        .iter()
        .copied()
        .collect();
    let folded: Vec<(Complex64, i64)> = raw.iter().map(|&l| fold(l, model.omega)).collect();

    // single-linkage clustering of folded values
    let len = folded.len();
    let mut parent: Vec<usize> = (0..len).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let close = |a: Complex64, b: Complex64| {
        let scale = 1.0 + a.norm().max(b.norm());
        let mut d = (a - b).norm();
        // values near the strip edge fold to opposite sides
        d = d.min((a - b + Complex64::new(0.0, model.omega)).norm());
        d = d.min((a - b - Complex64::new(0.0, model.omega)).norm());
        d <= opts.tol * scale
    };
    for i in 0..len {
        for j in i + 1..len {
            if close(folded[i].0, folded[j].0) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..len {
        let root = find(&mut parent, i);
        clusters.entry(root).or_default().push(i);
    }
    let mut ladders: Vec<Vec<usize>> = clusters
        .into_values()
        .filter(|c| c.len() >= opts.min_votes)
        .collect();
    // best supported first; ties broken by smallest mean shift (mid spectrum)
    ladders.sort_by(|a, b| {
        b.len().cmp(&a.len()).then_with(|| {
            let ma = a.iter().map(|&i| folded[i].1.abs()).min().unwrap_or(0);
            let mb = b.iter().map(|&i| folded[i].1.abs()).min().unwrap_or(0);
            ma.cmp(&mb)
        })
    });

    let width = 2 * r + 1;
    let mut core = Vec::with_capacity(n);
    let mut support = Vec::with_capacity(n);
    let mut residual: f64 = 0.0;
    for ladder in &ladders {
        if core.len() >= n {
            break;
        }
        // representative: the member with the smallest shift
        let rep_idx = *ladder
            .iter()
            .min_by_key(|&&i| folded[i].1.abs())
            .expect("nonempty ladder");
        let rep = folded[rep_idx].0;
        let mult = ((ladder.len() as f64 / width as f64).round() as usize).max(1);
        for &i in ladder {
            let d = folded[i].0 - rep;
            let d = d
                .norm()
                .min((d + Complex64::new(0.0, model.omega)).norm())
                .min((d - Complex64::new(0.0, model.omega)).norm());
            residual = residual.max(d);
        }
        for _ in 0..mult.min(n - core.len()) {
            core.push(rep);
            support.push(ladder.len());
        }
    }
    if core.len() < n {
        return Err(Error::OrderTooLow {
            found: core.len(),
            need: n,
        });
    }
    let mut pairs: Vec<(Complex64, usize)> = core.into_iter().zip(support).collect();
    pairs.sort_by(|a, b| b.0.im.total_cmp(&a.0.im).then(b.0.re.total_cmp(&a.0.re)));
    let (core, support): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(SpectrumResult {
        core,
        raw,
        r,
        residual,
        support,
    })
}

/// Truncated harmonic transfer function `Cz (sI - (A-N))^{-1} B + D` for the
/// chosen channel.
pub fn htf_eval(
    model: &LTPModel,
    s: Complex64,
    r: usize,
    p: usize,
    channel: Channel,
) -> Result<DMatrix<Complex64>> {
    let banded = model.band(p);
    let (b, d) = match channel {
        Channel::Control => (&banded.b, &banded.dzu),
        Channel::Disturbance => (&banded.bw, &banded.dzw),
    };
    let h = harmonic_state_matrix(&banded, r, p);
    let dim = h.data.nrows();
    let mut res = -h.data;
    for i in 0..dim {
        res[(i, i)] += s;
    }
    let cond = linalg::condition_number(&res);
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::NearSingular {
            condition: cond,
            context: format!("resolvent at s = {s}"),
        });
    }
    let rhs = b.truncate(r).data;
    let x = res
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NearSingular {
            condition: cond,
            context: format!("resolvent at s = {s}"),
        })?;
    Ok(banded.cz.truncate(r).data * x + d.truncate(r).data)
}

fn require_stable(model: &LTPModel, r: usize, p: usize) -> Result<SpectrumResult> {
    let spec = spectrum(model, r, p)?;
    if !spec.is_stable() {
        return Err(Error::Unstable(format!(
            "core spectrum has real part {:.4e}",
            spec.max_real_part()
        )));
    }
    Ok(spec)
}

/// Harmonic H2 norm of `w -> z` from the truncated Lyapunov equation
/// `(A-N)_r P + P (A-N)_r^* + Pi_r(Bw Bw^*) = 0`.
pub fn h2_norm(model: &LTPModel, r: usize, p: usize) -> Result<f64> {
    if !model.dzw.is_zero() {
        return Err(Error::FeedthroughNonzero);
    }
    let banded = model.band(p);
    require_stable(&banded, r, p)?;
    let h = harmonic_state_matrix(&banded, r, p);
    let bb = truncated_product(&banded.bw, &banded.bw.adjoint(), r)?;
    let gram = linalg::lyapunov(&h.data, &bb.data)?;
    let cz = banded.cz.truncate(r).data;
    let out = &cz * gram * cz.adjoint();
    let w = 2 * r + 1;
    let s: f64 = (0..model.nz()).map(|i| out[(i * w + r, i * w + r)].re).sum();
    Ok(s.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HinfResult {
    pub value: f64,
    /// Frequency offset within `[-omega/2, omega/2]` where the peak was found.
    pub peak_frequency: f64,
    pub grid: usize,
    pub refinement_steps: usize,
}

/// Harmonic H-infinity norm of `w -> z`: peak of the largest singular value of
/// the truncated HTF over one fundamental strip, grid search plus golden section.
pub fn hinf_norm(model: &LTPModel, r: usize, p: usize, grid: usize) -> Result<HinfResult> {
    let banded = model.band(p);
    require_stable(&banded, r, p)?;
    let grid = grid.max(3);
    let half = model.omega / 2.0;
    let gain = |w0: f64| -> Result<f64> {
        let g = htf_eval(&banded, Complex64::new(0.0, w0), r, p, Channel::Disturbance)?;
        Ok(max_singular_value(&g))
    };
    let freqs: Vec<f64> = (0..grid)
        .map(|i| -half + 2.0 * half * i as f64 / (grid - 1) as f64)
        .collect();
    let mut vals = Vec::with_capacity(grid);
    for &f in &freqs {
        vals.push(gain(f)?);
    }
    let (imax, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut lo = freqs[imax.saturating_sub(1)];
    let mut hi = freqs[(imax + 1).min(grid - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = gain(x1)?;
    let mut f2 = gain(x2)?;
    let mut steps = 0;
    while hi - lo > 1e-9 * model.omega && steps < 100 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = gain(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = gain(x2)?;
        }
        steps += 1;
    }
    let (mut best, mut at) = (vals[imax], freqs[imax]);
    for (v, f) in [(f1, x1), (f2, x2)] {
        if v > best {
            best = v;
            at = f;
        }
    }
    Ok(HinfResult {
        value: best,
        peak_frequency: at,
        grid,
        refinement_steps: steps,
    })
}
