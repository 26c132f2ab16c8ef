//! Infeasible-start primal-dual path-following method with Nesterov-Todd
//! scaling and Mehrotra predictor-corrector steps.
//!
//! Internal form: minimize `c.x` subject to `S_b = C_b + sum_i x_i A_{b,i}`
//! PSD and `E x = f`. The dual is maximize `-sum_b <C_b, Z_b> + f.y` subject
//! to `sum_b <A_{b,i}, Z_b> + (E'y)_i = c_i`, `Z_b` PSD.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{ConicSolution, ConicSolver, SolveOptions, Status};
use crate::error::Result;
use crate::tblmi::{ConicProblem, Sense};

#[derive(Debug, Clone, Copy)]
pub struct InteriorPoint {
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_factor: f64,
    /// Threshold on normalized certificate residuals.
    pub infeasibility_tol: f64,
}

impl Default for InteriorPoint {
    fn default() -> Self {
        Self {
            step_factor: 0.95,
            infeasibility_tol: 1e-8,
        }
    }
}

impl ConicSolver for InteriorPoint {
    fn solve(&self, problem: &ConicProblem, opts: &SolveOptions) -> Result<ConicSolution> {
        problem.validate()?;
        let started = Instant::now();
        let data = Data::new(problem);
        let mut sol = self.run(&data, opts);
        sol.wall_time = started.elapsed().as_secs_f64();
        let sign = match problem.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        sol.objective = problem.objective_value(&sol.x);
        sol.dual_objective = sign * sol.dual_objective + problem.objective_constant;
        sol.min_slack_eigenvalues = (0..problem.psd_blocks.len())
            .map(|b| {
                let m = problem.block_value(b, &sol.x);
                if m.nrows() == 0 {
                    0.0
                } else {
                    m.symmetric_eigenvalues().min()
                }
            })
            .collect();
        Ok(sol)
    }
}

/// One coefficient matrix in full symmetric triplet form.
struct SpMat {
    entries: Vec<(usize, usize, f64)>,
    rows: Vec<usize>,
    norm: f64,
}

impl SpMat {
    fn dot(&self, m: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(i, j, v)| v * m[(i, j)]).sum()
    }

    fn add_to(&self, m: &mut DMatrix<f64>, s: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += s * v;
        }
    }
}

struct Block {
    dim: usize,
    c: DMatrix<f64>,
    c_norm: f64,
    /// Coefficient matrices sorted by variable index.
    vars: Vec<(usize, SpMat)>,
}

struct Data {
    n: usize,
    c: DVector<f64>,
    blocks: Vec<Block>,
    e: DMatrix<f64>,
    f: DVector<f64>,
    /// Column equilibration: the solver works in `x^_i = scale_i x_i`.
    scale: DVector<f64>,
}

fn expand(entries: &[crate::tblmi::Triplet]) -> SpMat {
    let mut map: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for t in entries {
        *map.entry((t.i, t.j)).or_default() += t.v;
        if t.i != t.j {
            *map.entry((t.j, t.i)).or_default() += t.v;
        }
    }
    let entries: Vec<(usize, usize, f64)> = map
        .into_iter()
        .filter(|&(_, v)| v != 0.0)
        .map(|((i, j), v)| (i, j, v))
        .collect();
    let mut rows: Vec<usize> = entries.iter().map(|e| e.0).collect();
    rows.sort_unstable();
    rows.dedup();
    let norm = entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt();
    SpMat {
        entries,
        rows,
        norm,
    }
}

impl Data {
    fn new(p: &ConicProblem) -> Self {
        let sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let c = DVector::from_iterator(p.nvars, p.objective.iter().map(|v| sign * v));
        let blocks = p
            .psd_blocks
            .iter()
            .filter(|b| b.dim > 0)
            .map(|b| {
                let mut cm = DMatrix::zeros(b.dim, b.dim);
                expand(&b.constant).add_to(&mut cm, 1.0);
                let mut per_var: std::collections::BTreeMap<usize, Vec<crate::tblmi::Triplet>> =
                    Default::default();
                for vt in &b.coefficients {
                    per_var.entry(vt.var).or_default().extend(vt.entries.iter().copied());
                }
                let vars = per_var
                    .into_iter()
                    .map(|(v, t)| (v, expand(&t)))
                    .filter(|(_, s)| !s.entries.is_empty())
                    .collect();
                Block {
                    dim: b.dim,
                    c_norm: cm.norm(),
                    c: cm,
                    vars,
                }
            })
            .collect();
        let neq = p.equalities.len();
        let mut e = DMatrix::zeros(neq, p.nvars);
        let mut f = DVector::zeros(neq);
        for (r, eq) in p.equalities.iter().enumerate() {
            for &(v, coef) in &eq.coeffs {
                e[(r, v)] += coef;
            }
            f[r] = eq.rhs;
        }
        let mut data = Self {
            n: p.nvars,
            c,
            blocks,
            e,
            f,
            scale: DVector::from_element(p.nvars, 1.0),
        };
        data.equilibrate();
        data
    }

    /// Normalizes every variable's coefficient column to unit norm.
    fn equilibrate(&mut self) {
        let mut sq = vec![0.0; self.n];
        for b in &self.blocks {
            for (v, a) in &b.vars {
                sq[*v] += a.norm * a.norm;
            }
        }
        for i in 0..self.n {
            sq[i] += self.e.column(i).norm_squared();
            let s = sq[i].sqrt();
            self.scale[i] = if s > 0.0 && s.is_finite() { s } else { 1.0 };
        }
        for b in &mut self.blocks {
            for (v, a) in &mut b.vars {
                let s = self.scale[*v];
                for e in &mut a.entries {
                    e.2 /= s;
                }
                a.norm /= s;
            }
        }
        for i in 0..self.n {
            let s = self.scale[i];
            self.c[i] /= s;
            self.e.column_mut(i).scale_mut(1.0 / s);
        }
    }

    fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    /// `C_b + sum x_i A_{b,i}`.
    fn primal_map(&self, x: &DVector<f64>, with_constant: bool) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                let mut m = if with_constant {
                    b.c.clone()
                } else {
                    DMatrix::zeros(b.dim, b.dim)
                };
                for (v, a) in &b.vars {
                    if x[*v] != 0.0 {
                        a.add_to(&mut m, x[*v]);
                    }
                }
                m
            })
            .collect()
    }

    /// `(sum_b <A_{b,i}, Z_b>)_i`.
    fn adjoint(&self, z: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (b, zb) in self.blocks.iter().zip(z) {
            for (v, a) in &b.vars {
                out[*v] += a.dot(zb);
            }
        }
        out
    }
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn fro(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Nesterov-Todd scaling of one block: `G' S G = D = G^{-1} Z G^{-T}`.
struct Scaling {
    g: DMatrix<f64>,
    w: DMatrix<f64>,
    d: DVector<f64>,
}

fn nt_scaling(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let ls = s.clone().cholesky()?.l();
    let lz = z.clone().cholesky()?.l();
    let svd = (ls.transpose() * &lz).svd(false, true);
    let vt = svd.v_t?;
    let d = svd.singular_values;
    if d.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    // G = L_Z V D^{-1/2}
    let mut g = &lz * vt.transpose();
    for (j, x) in d.iter().enumerate() {
        g.column_mut(j).scale_mut(1.0 / x.sqrt());
    }
    let mut w = &g * g.transpose();
    symmetrize(&mut w);
    Some(Scaling { g, w, d })
}

/// Largest step in `(0, inf]` keeping `D + a*dX` PSD, for diagonal positive `D`.
fn max_step(d: &DVector<f64>, dx: &DMatrix<f64>) -> f64 {
    let n = d.len();
    let mut m = dx.clone();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] /= (d[i] * d[j]).sqrt();
        }
    }
    symmetrize(&mut m);
    let lmin = m.symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Newton {
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    /// `E M^{-1} E'` factor when equalities exist.
    schur_eq: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl Newton {
    fn solve_m(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        if let Some(c) = &self.chol {
            Some(c.solve(rhs))
        } else {
            self.lu.as_ref()?.solve(rhs)
        }
    }

    fn solve_m_mat(&self, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        if let Some(c) = &self.chol {
            Some(c.solve(rhs))
        } else {
            self.lu.as_ref()?.solve(rhs)
        }
    }

    /// Solves `[[M, -E'], [E, 0]] [dx; dy] = [h; re]`.
    fn solve(&self, e: &DMatrix<f64>, h: &DVector<f64>, re: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let mh = self.solve_m(h)?;
        if e.nrows() == 0 {
            return Some((mh, DVector::zeros(0)));
        }
        let rhs = re - e * &mh;
        let dy = self.schur_eq.as_ref()?.solve(&rhs)?;
        let dx = self.solve_m(&(h + e.transpose() * &dy))?;
        Some((dx, dy))
    }
}

fn factor(m: &DMatrix<f64>, e: &DMatrix<f64>) -> Option<Newton> {
    let n = m.nrows();
    let maxdiag = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut chol = None;
    let mut reg = 0.0;
    for attempt in 0..6 {
        let mut mm = m.clone();
        if attempt > 0 {
            reg = maxdiag * 1e-15 * 100f64.powi(attempt);
            for i in 0..n {
                mm[(i, i)] += reg;
            }
        }
        if let Some(c) = mm.cholesky() {
            chol = Some(c);
            break;
        }
    }
    if reg > 0.0 {
        log::debug!("Schur complement regularized by {reg:.3e}");
    }
    let lu = if chol.is_none() { Some(m.clone().lu()) } else { None };
    let mut nw = Newton {
        chol,
        lu,
        schur_eq: None,
    };
    if e.nrows() > 0 {
        let minv_et = nw.solve_m_mat(&e.transpose())?;
        nw.schur_eq = Some((e * minv_et).lu());
    }
    Some(nw)
}

impl InteriorPoint {
    fn run(&self, data: &Data, opts: &SolveOptions) -> ConicSolution {
        let n = data.n;
        let nb = data.blocks.len();
        let total = data.total_dim().max(1) as f64;
        let c_norm = data.c.norm();
        let cc_norm = data.blocks.iter().map(|b| b.c_norm * b.c_norm).sum::<f64>().sqrt();
        let f_norm = data.f.norm();

        let mut x = DVector::zeros(n);
        let mut y = DVector::zeros(data.e.nrows());
        let mut s: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        let mut z: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
        for b in &data.blocks {
            let dim = b.dim as f64;
            let amax = b.vars.iter().map(|(_, a)| a.norm).fold(0.0, f64::max);
            let eta = 10f64.max(dim.sqrt()).max(amax).max(b.c_norm);
            let ratio = b
                .vars
                .iter()
                .map(|(v, a)| (1.0 + data.c[*v].abs()) / (1.0 + a.norm))
                .fold(0.0, f64::max);
            let zeta = 10f64.max(dim.sqrt()).max(dim * ratio);
            s.push(DMatrix::identity(b.dim, b.dim) * eta);
            z.push(DMatrix::identity(b.dim, b.dim) * zeta);
        }

        let mut status = Status::NumericalFailure;
        let mut message = String::from("iteration limit reached");
        let mut iterations = 0;
        let mut gap = f64::INFINITY;
        let mut pres = f64::INFINITY;
        let mut dres = f64::INFINITY;
        let mut dobj = 0.0;
        let mut stalls = 0;

        for iter in 0..=opts.max_iter {
            iterations = iter;
            let ax = data.primal_map(&x, true);
            let rp: Vec<DMatrix<f64>> = ax.iter().zip(&s).map(|(a, sb)| a - sb).collect();
            let rd = &data.c - data.adjoint(&z) - data.e.transpose() * &y;
            let re = &data.f - &data.e * &x;
            let sz = inner(&s, &z);
            let mu = sz / total;
            let pobj = data.c.dot(&x);
            dobj = -data
                .blocks
                .iter()
                .zip(&z)
                .map(|(b, zb)| b.c.dot(zb))
                .sum::<f64>()
                + data.f.dot(&y);
            gap = sz.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());
            pres = (fro(&rp) / (1.0 + cc_norm)).max(re.norm() / (1.0 + f_norm));
            dres = rd.norm() / (1.0 + c_norm);
            log::trace!(
                "ipm {iter:3} pobj {pobj:+.8e} dobj {dobj:+.8e} gap {gap:.2e} pres {pres:.2e} dres {dres:.2e} mu {mu:.2e}"
            );
            if !(pobj.is_finite() && dobj.is_finite() && mu.is_finite()) {
                message = "non-finite iterate".into();
                break;
            }
            if gap <= opts.tol && pres <= opts.tol && dres <= opts.tol {
                status = Status::Optimal;
                message = "converged".into();
                break;
            }
            // dual improving ray: A*(Z) + E'y ~ 0 with positive dual objective
            if dobj > 0.0 {
                let ray = (&data.c - &rd).norm() / dobj;
                if ray <= self.infeasibility_tol {
                    status = Status::Infeasible;
                    message = format!("dual improving ray, normalized residual {ray:.2e}");
                    break;
                }
            }
            // primal improving ray: sum x_i A_i PSD, E x ~ 0 with negative cost
            if pobj < 0.0 {
                let ray = (cc_norm + fro(&rp) + (&data.e * &x).norm()) / -pobj;
                if ray <= self.infeasibility_tol {
                    status = Status::Unbounded;
                    message = format!("primal improving ray, normalized residual {ray:.2e}");
                    break;
                }
            }
            if iter == opts.max_iter {
                break;
            }

            let mut scal = Vec::with_capacity(nb);
            for (sb, zb) in s.iter().zip(&z) {
                match nt_scaling(sb, zb) {
                    Some(sc) => scal.push(sc),
                    None => break,
                }
            }
            if scal.len() != nb {
                message = "lost positive definiteness of an iterate".into();
                break;
            }

            let m = self.schur_complement(data, &scal);
            let newton = match factor(&m, &data.e) {
                Some(f) => f,
                None => {
                    message = "singular Newton system".into();
                    break;
                }
            };

            // predictor
            let rc_hat: Vec<DMatrix<f64>> = scal
                .iter()
                .map(|sc| DMatrix::from_diagonal(&(-&sc.d)))
                .collect();
            let pred = match self.direction(data, &scal, &newton, &rp, &rd, &re, &rc_hat) {
                Some(d) => d,
                None => {
                    message = "failed to solve Newton system".into();
                    break;
                }
            };
            let (ap, ad) = self.step_lengths(&scal, &pred.ds_hat, &pred.dz_hat, 1.0);
            let mut mu_aff = 0.0;
            for (k, sc) in scal.iter().enumerate() {
                let dmat = DMatrix::from_diagonal(&sc.d);
                let sa = &dmat + &pred.ds_hat[k] * ap;
                let za = &dmat + &pred.dz_hat[k] * ad;
                mu_aff += sa.dot(&za);
            }
            mu_aff /= total;
            let ratio = (mu_aff / mu).clamp(0.0, 1.0);
            let expon = if ap.min(ad) > 0.3 { 3.0 } else { 2.0 };
            let sigma = ratio.powf(expon).clamp(0.0, 1.0);

            // corrector
            let rc_hat: Vec<DMatrix<f64>> = scal
                .iter()
                .enumerate()
                .map(|(k, sc)| {
                    let dim = sc.d.len();
                    let prod = &pred.ds_hat[k] * &pred.dz_hat[k];
                    let mut r = DMatrix::zeros(dim, dim);
                    for j in 0..dim {
                        for i in 0..dim {
                            let mut v = -(prod[(i, j)] + prod[(j, i)]);
                            if i == j {
                                v += 2.0 * (sigma * mu - sc.d[i] * sc.d[i]);
                            }
                            r[(i, j)] = v / (sc.d[i] + sc.d[j]);
                        }
                    }
                    r
                })
                .collect();
            let corr = match self.direction(data, &scal, &newton, &rp, &rd, &re, &rc_hat) {
                Some(d) => d,
                None => {
                    message = "failed to solve Newton system".into();
                    break;
                }
            };
            let (ap, ad) = self.step_lengths(&scal, &corr.ds_hat, &corr.dz_hat, self.step_factor);
            if ap < 1e-10 && ad < 1e-10 {
                stalls += 1;
                if stalls >= 3 {
                    message = "step length collapsed".into();
                    break;
                }
            } else {
                stalls = 0;
            }
            x += &corr.dx * ap;
            y += &corr.dy * ad;
            for k in 0..nb {
                s[k] += &corr.ds[k] * ap;
                symmetrize(&mut s[k]);
                z[k] += &corr.dz[k] * ad;
            }
        }

        ConicSolution {
            status,
            x: x.iter().zip(data.scale.iter()).map(|(v, s)| v / s).collect(),
            objective: 0.0,
            dual_objective: dobj,
            gap,
            primal_residual: pres,
            dual_residual: dres,
            min_slack_eigenvalues: Vec::new(),
            iterations,
            wall_time: 0.0,
            message,
        }
    }

    /// `M_ij = sum_b <A_{b,i}, W_b A_{b,j} W_b>`.
    fn schur_complement(&self, data: &Data, scal: &[Scaling]) -> DMatrix<f64> {
        let n = data.n;
        let mut m = DMatrix::zeros(n, n);
        for (b, sc) in data.blocks.iter().zip(scal) {
            let dim = b.dim;
            let w = &sc.w;
            let mut bj = DMatrix::zeros(dim, dim);
            for (jpos, (vj, aj)) in b.vars.iter().enumerate() {
                // rows of A_j W are supported on the rows of A_j
                let rows = &aj.rows;
                let mut pos = vec![usize::MAX; dim];
                for (k, &r) in rows.iter().enumerate() {
                    pos[r] = k;
                }
                let mut t = DMatrix::zeros(rows.len(), dim);
                for &(r, c, v) in &aj.entries {
                    let k = pos[r];
                    for col in 0..dim {
                        t[(k, col)] += v * w[(c, col)];
                    }
                }
                let w_r = w.select_columns(rows.iter());
                bj.gemm(1.0, &w_r, &t, 0.0);
                for (vi, ai) in &b.vars[..=jpos] {
                    let val = ai.dot(&bj);
                    m[(*vi, *vj)] += val;
                    if vi != vj {
                        m[(*vj, *vi)] += val;
                    }
                }
            }
        }
        m
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        data: &Data,
        scal: &[Scaling],
        newton: &Newton,
        rp: &[DMatrix<f64>],
        rd: &DVector<f64>,
        re: &DVector<f64>,
        rc_hat: &[DMatrix<f64>],
    ) -> Option<Direction> {
        // h_i = <A_i, Rc - W Rp W> - rd_i with Rc = G Rc_hat G'
        let mut tmats = Vec::with_capacity(scal.len());
        for (k, sc) in scal.iter().enumerate() {
            let rc = &sc.g * &rc_hat[k] * sc.g.transpose();
            let wrw = &sc.w * &rp[k] * &sc.w;
            tmats.push(rc - wrw);
        }
        let h = data.adjoint(&tmats) - rd;
        let (mut dx, mut dy) = newton.solve(&data.e, &h, re)?;
        let mut best: Option<(f64, Direction)> = None;
        // iterative refinement against the operator form of the dual equation
        for _ in 0..4 {
            if dx.iter().chain(dy.iter()).any(|v| !v.is_finite()) {
                break;
            }
            let d = self.complete(data, scal, rp, rc_hat, dx.clone(), dy.clone());
            let rho_d = data.adjoint(&d.dz) + data.e.transpose() * &d.dy - rd;
            let rho_e = &data.e * &d.dx - re;
            let err = rho_d.norm() + rho_e.norm();
            let improved = best.as_ref().map_or(true, |(e, _)| err < 0.5 * *e);
            if !improved {
                break;
            }
            best = Some((err, d));
            if err <= 1e-14 * (1.0 + rd.norm() + h.norm()) {
                break;
            }
            let (cx, cy) = newton.solve(&data.e, &rho_d, &(-rho_e))?;
            dx += cx;
            dy += cy;
        }
        best.map(|(_, d)| d)
    }

    fn complete(
        &self,
        data: &Data,
        scal: &[Scaling],
        rp: &[DMatrix<f64>],
        rc_hat: &[DMatrix<f64>],
        dx: DVector<f64>,
        dy: DVector<f64>,
    ) -> Direction {
        let mut ds = data.primal_map(&dx, false);
        let mut ds_hat = Vec::with_capacity(scal.len());
        let mut dz_hat = Vec::with_capacity(scal.len());
        let mut dz = Vec::with_capacity(scal.len());
        for (k, sc) in scal.iter().enumerate() {
            ds[k] += &rp[k];
            let mut dsh = sc.g.transpose() * &ds[k] * &sc.g;
            symmetrize(&mut dsh);
            let mut dzh = &rc_hat[k] - &dsh;
            symmetrize(&mut dzh);
            let mut z = &sc.g * &dzh * sc.g.transpose();
            symmetrize(&mut z);
            ds_hat.push(dsh);
            dz_hat.push(dzh);
            dz.push(z);
        }
        Direction {
            dx,
            dy,
            ds,
            ds_hat,
            dz_hat,
            dz,
        }
    }

    fn step_lengths(&self, scal: &[Scaling], ds_hat: &[DMatrix<f64>], dz_hat: &[DMatrix<f64>], factor: f64) -> (f64, f64) {
        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for (k, sc) in scal.iter().enumerate() {
            ap = ap.min(max_step(&sc.d, &ds_hat[k]));
            ad = ad.min(max_step(&sc.d, &dz_hat[k]));
        }
        ((factor * ap).min(1.0), (factor * ad).min(1.0))
    }
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    ds: Vec<DMatrix<f64>>,
    ds_hat: Vec<DMatrix<f64>>,
    dz_hat: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tblmi::{Equality, PsdBlock, Triplet, VarTriplets};

    fn t(i: usize, j: usize, v: f64) -> Triplet {
        Triplet { i, j, v }
    }

    #[test]
    fn one_variable() {
        let mut p = ConicProblem::new(1, Sense::Minimize);
        p.objective = vec![1.0];
        p.psd_blocks.push(PsdBlock {
            name: "x".into(),
            dim: 1,
            constant: vec![],
            coefficients: vec![VarTriplets {
                var: 0,
                entries: vec![t(0, 0, 1.0)],
            }],
        });
        let sol = InteriorPoint::default().solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!(sol.x[0].abs() < 1e-6);
    }

    #[test]
    fn trace_with_fixed_diagonal() {
        // X = [[x0, x1], [x1, x2]], min x0 + x2, x0 = 1, x2 = 2
        let mut p = ConicProblem::new(3, Sense::Minimize);
        p.objective = vec![1.0, 0.0, 1.0];
        p.psd_blocks.push(PsdBlock {
            name: "X".into(),
            dim: 2,
            constant: vec![],
            coefficients: vec![
                VarTriplets { var: 0, entries: vec![t(0, 0, 1.0)] },
                VarTriplets { var: 1, entries: vec![t(0, 1, 1.0)] },
                VarTriplets { var: 2, entries: vec![t(1, 1, 1.0)] },
            ],
        });
        p.equalities.push(Equality { coeffs: vec![(0, 1.0)], rhs: 1.0 });
        p.equalities.push(Equality { coeffs: vec![(2, 1.0)], rhs: 2.0 });
        let sol = InteriorPoint::default().solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded() {
        // x <= -1 and x >= 0
        let mut p = ConicProblem::new(1, Sense::Minimize);
        p.objective = vec![0.0];
        p.psd_blocks.push(PsdBlock {
            name: "a".into(),
            dim: 1,
            constant: vec![t(0, 0, -1.0)],
            coefficients: vec![VarTriplets { var: 0, entries: vec![t(0, 0, -1.0)] }],
        });
        p.psd_blocks.push(PsdBlock {
            name: "b".into(),
            dim: 1,
            constant: vec![],
            coefficients: vec![VarTriplets { var: 0, entries: vec![t(0, 0, 1.0)] }],
        });
        let sol = InteriorPoint::default().solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Infeasible);

        let mut q = ConicProblem::new(1, Sense::Minimize);
        q.objective = vec![1.0];
        q.psd_blocks.push(PsdBlock {
            name: "a".into(),
            dim: 1,
            constant: vec![t(0, 0, 1.0)],
            coefficients: vec![VarTriplets { var: 0, entries: vec![t(0, 0, -1.0)] }],
        });
        let sol = InteriorPoint::default().solve(&q, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Unbounded);
    }

    #[test]
    fn maximize_sense() {
        // max x s.t. [[1, x], [x, 1]] PSD -> 1
        let mut p = ConicProblem::new(1, Sense::Maximize);
        p.objective = vec![1.0];
        p.psd_blocks.push(PsdBlock {
            name: "m".into(),
            dim: 2,
            constant: vec![t(0, 0, 1.0), t(1, 1, 1.0)],
            coefficients: vec![VarTriplets { var: 0, entries: vec![t(0, 1, 1.0)] }],
        });
        let sol = InteriorPoint::default().solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-6);
        assert!((sol.dual_objective - 1.0).abs() < 1e-6);
    }
}
