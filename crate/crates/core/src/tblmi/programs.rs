//! The five synthesis and analysis programs, and the sampled time-domain check.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    ConicProblem, ComplexLmi, Equality, Factor, LmiSpec, Sense, TBVariable, TbLmiProgram, Term,
    VarMap,
};
use crate::error::{Error, Result};
use crate::hmodel::LTPModel;
use crate::tbalg::TBOperator;

/// Quadratic LQR weights `Q` (state) and `R` (input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrWeights {
    pub q: TBOperator,
    pub r: TBOperator,
}

impl LqrWeights {
    pub fn new(q: TBOperator, r: TBOperator) -> Self {
        Self { q, r }
    }

    fn check(&self, model: &LTPModel) -> Result<()> {
        let (n, m) = (model.n(), model.m());
        if self.q.rows() != n || self.q.cols() != n || self.r.rows() != m || self.r.cols() != m {
            return Err(Error::DimensionMismatch(format!(
                "weights Q {}x{}, R {}x{} for n = {n}, m = {m}",
                self.q.rows(),
                self.q.cols(),
                self.r.rows(),
                self.r.cols()
            )));
        }
        if !self.q.is_hermitian(1e-12) || !self.r.is_hermitian(1e-12) {
            return Err(Error::InvalidArgument("weights must be Hermitian".into()));
        }
        Ok(())
    }
}

/// Which periodic differential LMI a TB unknown is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdlmiForm {
    /// `dP/dt + A'P + PA`, satisfied by Lyapunov and primal LQR unknowns.
    Observability,
    /// `-dP/dt + AP + PA'`, satisfied by the `P` or `S` of the dual programs.
    Controllability,
}

/// Default strictness margin `1e-6 (1 + ||A||)`.
pub fn default_eps(model: &LTPModel) -> f64 {
    1e-6 * (1.0 + model.a.operator_norm())
}

fn eps_or_default(model: &LTPModel, eps: Option<f64>) -> Result<f64> {
    let e = eps.unwrap_or_else(|| default_eps(model));
    if !(e >= 0.0) || !e.is_finite() {
        return Err(Error::InvalidArgument(format!("margin must be nonnegative, got {e}")));
    }
    Ok(e)
}

fn positivity(name: &str, p: usize, n: usize, eps: f64) -> LmiSpec {
    let mut s = LmiSpec::new(name, vec![n], eps);
    s.add(0, 0, Term::var(p, 1.0));
    s
}

/// `(A - N)* P + P (A - N)` times `sign` into block `(0, 0)`.
fn observability_terms(spec: &mut LmiSpec, p: usize, a: &TBOperator, sign: f64) {
    spec.add(0, 0, Term::left(p, Factor::Tb(a.adjoint()), sign));
    spec.add(0, 0, Term::right(p, Factor::Tb(a.clone()), sign));
    spec.add(0, 0, Term::left(p, Factor::N, sign));
    spec.add(0, 0, Term::right(p, Factor::N, -sign));
}

/// `(A - N) P + P (A - N)* + B S + S* B*` times `sign` into block `(0, 0)`.
fn controllability_terms(spec: &mut LmiSpec, p: usize, s: Option<usize>, a: &TBOperator, b: &TBOperator, sign: f64) {
    spec.add(0, 0, Term::left(p, Factor::Tb(a.clone()), sign));
    spec.add(0, 0, Term::right(p, Factor::Tb(a.adjoint()), sign));
    spec.add(0, 0, Term::left(p, Factor::N, -sign));
    spec.add(0, 0, Term::right(p, Factor::N, sign));
    if let Some(s) = s {
        spec.add(0, 0, Term::left(s, Factor::Tb(b.clone()), sign));
        spec.add(0, 0, Term::adjoint_right(s, Factor::Tb(b.adjoint()), sign));
    }
}

fn finish(
    name: &str,
    sense: Sense,
    vars: VarMap,
    objective: Vec<(usize, f64)>,
    specs: Vec<LmiSpec>,
    equalities: Vec<Equality>,
    (r, p, q, eps): (usize, usize, usize, f64),
) -> Result<TbLmiProgram> {
    let mut obj = vec![0.0; vars.nvars()];
    for (i, c) in objective {
        obj[i] += c;
    }
    let lmis = specs
        .iter()
        .map(|s| s.truncate(&vars, r))
        .collect::<Result<Vec<ComplexLmi>>>()?;
    Ok(TbLmiProgram {
        name: name.into(),
        sense,
        vars,
        objective: obj,
        lmis,
        equalities,
        r,
        p,
        q,
        eps,
    })
}

/// `Pi_r(P) >= eps I` and `Pi_r((A - N)* P + P (A - N)) <= -eps I`, with `tr0(P) = 1`.
pub fn build_lyapunov(model: &LTPModel, r: usize, p: usize, q: usize, eps: Option<f64>) -> Result<TbLmiProgram> {
    let m = model.band(p);
    let eps = eps_or_default(&m, eps)?;
    let n = m.n();
    let mut vars = VarMap::new(m.omega);
    let pv = vars.add(TBVariable::symmetric("P", n, q));
    let mut lyap = LmiSpec::new("lyapunov", vec![n], eps);
    observability_terms(&mut lyap, pv, &m.a, -1.0);
    let eq = Equality {
        coeffs: vars.tr0_form(pv),
        rhs: 1.0,
    };
    finish(
        "lyapunov",
        Sense::Minimize,
        vars,
        vec![],
        vec![positivity("P", pv, n, eps), lyap],
        vec![eq],
        (r, p, q, eps),
    )
}

pub fn assemble_lyapunov(model: &LTPModel, r: usize, p: usize, q: usize, eps: Option<f64>) -> Result<ConicProblem> {
    Ok(build_lyapunov(model, r, p, q, eps)?.to_conic())
}

/// Maximize `tr0(P)` subject to `[[(A-N)*P + P(A-N) + Q, PB], [B*P, R]] >= 0`.
pub fn build_lqr_primal(
    model: &LTPModel,
    weights: &LqrWeights,
    r: usize,
    p: usize,
    q: usize,
    eps: Option<f64>,
) -> Result<TbLmiProgram> {
    weights.check(model)?;
    let m = model.band(p);
    let eps = eps_or_default(&m, eps)?;
    let (n, nu) = (m.n(), m.m());
    let mut vars = VarMap::new(m.omega);
    let pv = vars.add(TBVariable::symmetric("P", n, q));
    let mut ric = LmiSpec::new("riccati", vec![n, nu], 0.0);
    observability_terms(&mut ric, pv, &m.a, 1.0);
    ric.add(0, 0, Term::Const(weights.q.band(p)));
    ric.add(0, 1, Term::right(pv, Factor::Tb(m.b.clone()), 1.0));
    ric.add(1, 1, Term::Const(weights.r.band(p)));
    let obj = vars.tr0_form(pv);
    finish(
        "lqr-primal",
        Sense::Maximize,
        vars,
        obj,
        vec![positivity("P", pv, n, eps), ric],
        vec![],
        (r, p, q, eps),
    )
}

pub fn assemble_lqr_primal(
    model: &LTPModel,
    weights: &LqrWeights,
    r: usize,
    p: usize,
    q: usize,
    eps: Option<f64>,
) -> Result<ConicProblem> {
    Ok(build_lqr_primal(model, weights, r, p, q, eps)?.to_conic())
}

/// Symmetric square root of a constant PSD weight.
fn constant_sqrt(w: &TBOperator, what: &str) -> Result<TBOperator> {
    if w.degree() != 0 {
        return Err(Error::InvalidArgument(format!(
            "{what} must be constant for the dual LQR program"
        )));
    }
    let m = w.coeff_matrix(0).map(|z| z.re);
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < -1e-12 * (1.0 + m.norm())) {
        return Err(Error::InvalidArgument(format!("{what} is not positive semidefinite")));
    }
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    Ok(TBOperator::from_constant(w.omega(), &root))
}

/// Diagonal state scaling `t_i = sqrt(Q_ii / mean diag R)` that turns the
/// state weight into a multiple of the identity.
fn weight_balancing(q0: &DMatrix<f64>, r0: &DMatrix<f64>) -> Vec<f64> {
    let m = r0.nrows().max(1) as f64;
    let rs = (r0.trace() / m).abs().max(f64::MIN_POSITIVE);
    (0..q0.nrows())
        .map(|i| {
            let v = q0[(i, i)] / rs;
            if v > 0.0 && v.is_finite() {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// Minimize `tr0(W)` subject to the Schur-complemented closed-loop Riccati
/// inequality in `S = P^{-1}`, `Y = K S`, and `[[W, I], [I, S]] >= 0`.
///
/// Assembled in balanced state coordinates `T x` with `T` from
/// [`weight_balancing`], then mapped back so that the decoded `S`, `Y`, `W`
/// refer to the original state. Without the balancing, large weight ratios
/// such as `diag(1, 1e4)` leave the interior-point iteration badly conditioned.
pub fn build_lqr_dual(
    model: &LTPModel,
    weights: &LqrWeights,
    r: usize,
    p: usize,
    q: usize,
    eps: Option<f64>,
) -> Result<TbLmiProgram> {
    weights.check(model)?;
    let m = model.band(p);
    let eps = eps_or_default(&m, eps)?;
    let (n, nu) = (m.n(), m.m());
    if weights.q.degree() != 0 || weights.r.degree() != 0 {
        return Err(Error::InvalidArgument(
            "Q and R must be constant for the dual LQR program".into(),
        ));
    }
    let q0 = weights.q.coeff_matrix(0).map(|z| z.re);
    let r0 = weights.r.coeff_matrix(0).map(|z| z.re);
    let t = weight_balancing(&q0, &r0);
    let tm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(t.clone()));
    let tinv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, t.iter().map(|v| 1.0 / v)));
    let tt = TBOperator::from_constant(m.omega, &tm);
    let tti = TBOperator::from_constant(m.omega, &tinv);
    let a = tt.mul(&m.a)?.mul(&tti)?;
    let b = tt.mul(&m.b)?;
    let q_half = constant_sqrt(&TBOperator::from_constant(m.omega, &(&tinv * &q0 * &tinv)), "Q")?;
    let r_half = constant_sqrt(&weights.r, "R")?;

    let mut vars = VarMap::new(m.omega);
    let sv = vars.add(TBVariable::symmetric("S", n, q));
    let yv = vars.add(TBVariable::general("Y", nu, n, q));
    let wv = vars.add(TBVariable::symmetric("W", n, q));

    // -[[(A-N)S + S(A-N)* - BY - Y*B*, Y*R^1/2, S Q^1/2], [., -I, 0], [., 0, -I]]
    let mut ric = LmiSpec::new("riccati", vec![n, nu, n], eps);
    controllability_terms(&mut ric, sv, None, &a, &b, -1.0);
    ric.add(0, 0, Term::left(yv, Factor::Tb(b.clone()), 1.0));
    ric.add(0, 0, Term::adjoint_right(yv, Factor::Tb(b.adjoint()), 1.0));
    ric.add(0, 1, Term::adjoint_right(yv, Factor::Tb(r_half), -1.0));
    ric.add(0, 2, Term::right(sv, Factor::Tb(q_half), -1.0));
    ric.add(1, 1, Term::Const(TBOperator::identity(m.omega, nu)));
    ric.add(2, 2, Term::Const(TBOperator::identity(m.omega, n)));

    let mut inv = LmiSpec::new("inverse-bound", vec![n, n], eps);
    inv.add(0, 0, Term::var(wv, 1.0));
    inv.add(0, 1, Term::Const(TBOperator::identity(m.omega, n)));
    inv.add(1, 1, Term::var(sv, 1.0));

    // tr0(W) = tr0(T W~ T)
    let obj: Vec<(usize, f64)> = {
        let diag: std::collections::BTreeSet<usize> = vars.tr0_form(wv).into_iter().map(|(i, _)| i).collect();
        vars.coordinates(wv)
            .into_iter()
            .filter(|(idx, _, _)| diag.contains(idx))
            .map(|(idx, i, _)| (idx, t[i] * t[i]))
            .collect()
    };
    // S = T^-1 S~ T^-1, Y = Y~ T^-1, W = T W~ T
    let mut d = vec![1.0; vars.nvars()];
    for (idx, i, j) in vars.coordinates(sv) {
        d[idx] = 1.0 / (t[i] * t[j]);
    }
    for (idx, _, j) in vars.coordinates(yv) {
        d[idx] = 1.0 / t[j];
    }
    for (idx, i, j) in vars.coordinates(wv) {
        d[idx] = t[i] * t[j];
    }
    let mut prog = finish(
        "lqr-dual",
        Sense::Minimize,
        vars,
        obj,
        vec![ric, inv],
        vec![],
        (r, p, q, eps),
    )?;
    prog.rescale_variables(&d);
    Ok(prog)
}

pub fn assemble_lqr_dual(
    model: &LTPModel,
    weights: &LqrWeights,
    r: usize,
    p: usize,
    q: usize,
    eps: Option<f64>,
) -> Result<ConicProblem> {
    Ok(build_lqr_dual(model, weights, r, p, q, eps)?.to_conic())
}

/// Minimize `tr0(Z)` with `[[Z, Cz P + Dzu S], [., P]] >= 0` and
/// `(A-N)P + P(A-N)* + BS + S*B* + Bw Bw* <= -eps I`; `S = -K P`.
pub fn build_h2(model: &LTPModel, r: usize, p: usize, q: usize, eps: Option<f64>) -> Result<TbLmiProgram> {
    if !model.dzw.is_zero() {
        return Err(Error::FeedthroughNonzero);
    }
    let m = model.band(p);
    let eps = eps_or_default(&m, eps)?;
    let (n, nu, nz) = (m.n(), m.m(), m.nz());
    let mut vars = VarMap::new(m.omega);
    let pv = vars.add(TBVariable::symmetric("P", n, q));
    let sv = vars.add(TBVariable::general("S", nu, n, q));
    let zv = vars.add(TBVariable::symmetric("Z", nz, q));

    let mut lyap = LmiSpec::new("lyapunov", vec![n], eps);
    controllability_terms(&mut lyap, pv, Some(sv), &m.a, &m.b, -1.0);
    lyap.add(0, 0, Term::Const(m.bw.mul(&m.bw.adjoint())?.scale(-1.0)));

    let mut out = LmiSpec::new("output", vec![nz, n], 0.0);
    out.add(0, 0, Term::var(zv, 1.0));
    out.add(0, 1, Term::left(pv, Factor::Tb(m.cz.clone()), 1.0));
    out.add(0, 1, Term::left(sv, Factor::Tb(m.dzu.clone()), 1.0));
    out.add(1, 1, Term::var(pv, 1.0));

    let obj = vars.tr0_form(zv);
    finish(
        "h2",
        Sense::Minimize,
        vars,
        obj,
        vec![positivity("P", pv, n, eps), out, lyap],
        vec![],
        (r, p, q, eps),
    )
}

pub fn assemble_h2(model: &LTPModel, r: usize, p: usize, q: usize, eps: Option<f64>) -> Result<ConicProblem> {
    Ok(build_h2(model, r, p, q, eps)?.to_conic())
}

/// Minimize `gamma` subject to the bounded-real inequality in `P`, `S = -K P`.
pub fn build_hinf(model: &LTPModel, r: usize, p: usize, q: usize, eps: Option<f64>) -> Result<TbLmiProgram> {
    let m = model.band(p);
    let eps = eps_or_default(&m, eps)?;
    let (n, nu, nw, nz) = (m.n(), m.m(), m.nw(), m.nz());
    let mut vars = VarMap::new(m.omega);
    let pv = vars.add(TBVariable::symmetric("P", n, q));
    let sv = vars.add(TBVariable::general("S", nu, n, q));
    let gv = vars.add(TBVariable::scalar("gamma"));

    let mut brl = LmiSpec::new("bounded-real", vec![n, nw, nz], eps);
    controllability_terms(&mut brl, pv, Some(sv), &m.a, &m.b, -1.0);
    brl.add(0, 1, Term::Const(m.bw.scale(-1.0)));
    brl.add(0, 2, Term::right(pv, Factor::Tb(m.cz.adjoint()), -1.0));
    brl.add(0, 2, Term::adjoint_right(sv, Factor::Tb(m.dzu.adjoint()), -1.0));
    brl.add(1, 1, Term::ScalarId { var: gv, scale: 1.0 });
    brl.add(1, 2, Term::Const(m.dzw.adjoint().scale(-1.0)));
    brl.add(2, 2, Term::ScalarId { var: gv, scale: 1.0 });

    let obj = vec![(vars.entries[gv].offset, 1.0)];
    finish(
        "hinf",
        Sense::Minimize,
        vars,
        obj,
        vec![positivity("P", pv, n, eps), brl],
        vec![],
        (r, p, q, eps),
    )
}

pub fn assemble_hinf(model: &LTPModel, r: usize, p: usize, q: usize, eps: Option<f64>) -> Result<ConicProblem> {
    Ok(build_hinf(model, r, p, q, eps)?.to_conic())
}

/// Pointwise derivative of a TB unknown: phasor `k` scaled by `j omega k`.
pub fn tb_derivative(p: &TBOperator) -> TBOperator {
    let mut d = TBOperator::zeros(p.omega(), p.rows(), p.cols());
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            d.set_block(i, j, p.block(i, j).derivative());
        }
    }
    d
}

/// Largest eigenvalue of the periodic differential LMI over `samples`
/// uniform times in one period. Negative means the sampled check passed.
pub fn pdlmi_residual(model: &LTPModel, p: &TBOperator, form: PdlmiForm, samples: usize) -> Result<f64> {
    let n = model.n();
    if p.rows() != n || p.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "P is {}x{}, state dimension is {n}",
            p.rows(),
            p.cols()
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let pd = tb_derivative(p);
    let period = model.period();
    let mut worst = f64::NEG_INFINITY;
    for s in 0..samples {
        let t = period * s as f64 / samples as f64;
        let a = model.a.eval(t);
        let pt = p.eval(t);
        let dt = pd.eval(t);
        let l = match form {
            PdlmiForm::Observability => &dt + a.adjoint() * &pt + &pt * &a,
            PdlmiForm::Controllability => -&dt + &a * &pt + &pt * a.adjoint(),
        };
        let h = (&l + l.adjoint()) * num_complex::Complex64::new(0.5, 0.0);
        worst = worst.max(crate::linalg::hermitian_max_eigenvalue(&h));
    }
    Ok(worst)
}
