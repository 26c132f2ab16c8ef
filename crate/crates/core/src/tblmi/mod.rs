//! Truncated Toeplitz-block LMIs and their reduction to finite real SDPs.
//!
//! Unknown TB operators are band-limited at `q` and parametrized by the real
//! and imaginary parts of their phasors. Every constraint is a grid of
//! sub-blocks, each a sum of terms `scale * L V R` (or `L V* R`) with `L`, `R`
//! data operators or the derivative operator `N`. Coefficients are obtained
//! per basis element as the exact TB product followed by `Pi_r`, which is what
//! the Hankel-corrected truncated product computes.

mod conic;
mod programs;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tbalg::TBOperator;

pub use conic::*;
pub use programs::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// `P_k = P_k^T`, `P_{-k} = conj(P_k)`.
    RealSymmetric,
    /// `Y_{-k} = conj(Y_k)`.
    RealGeneral,
    /// A real number multiplying identity blocks.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TBVariable {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub structure: Structure,
    pub q: usize,
}

impl TBVariable {
    pub fn symmetric(name: &str, n: usize, q: usize) -> Self {
        Self {
            name: name.into(),
            rows: n,
            cols: n,
            structure: Structure::RealSymmetric,
            q,
        }
    }

    pub fn general(name: &str, rows: usize, cols: usize, q: usize) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            structure: Structure::RealGeneral,
            q,
        }
    }

    pub fn scalar(name: &str) -> Self {
        Self {
            name: name.into(),
            rows: 1,
            cols: 1,
            structure: Structure::Scalar,
            q: 0,
        }
    }

    /// Matrix entries carrying independent parameters.
    fn entries(&self) -> Vec<(usize, usize)> {
        match self.structure {
            Structure::RealSymmetric => (0..self.rows)
                .flat_map(|i| (i..self.rows).map(move |j| (i, j)))
                .collect(),
            Structure::RealGeneral => (0..self.rows)
                .flat_map(|i| (0..self.cols).map(move |j| (i, j)))
                .collect(),
            Structure::Scalar => vec![(0, 0)],
        }
    }

    /// Number of real parameters.
    pub fn count(&self) -> usize {
        match self.structure {
            Structure::Scalar => 1,
            _ => self.entries().len() * (2 * self.q + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarEntry {
    #[serde(flatten)]
    pub var: TBVariable,
    pub offset: usize,
}

/// Named slices of the decision vector.
///
/// Parameters of a TB unknown are ordered by harmonic `k = 0..=q`, then by
/// entry; for `k > 0` each entry has a real and an imaginary coordinate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VarMap {
    pub omega: f64,
    pub entries: Vec<VarEntry>,
}

pub type VarId = usize;

impl VarMap {
    pub fn new(omega: f64) -> Self {
        Self {
            omega,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, var: TBVariable) -> VarId {
        let offset = self.nvars();
        self.entries.push(VarEntry { var, offset });
        self.entries.len() - 1
    }

    pub fn nvars(&self) -> usize {
        self.entries.iter().map(|e| e.var.count()).sum()
    }

    pub fn id(&self, name: &str) -> Result<VarId> {
        self.entries
            .iter()
            .position(|e| e.var.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no variable named {name}")))
    }

    pub fn var(&self, id: VarId) -> &TBVariable {
        &self.entries[id].var
    }

    /// `(parameter index, basis operator)` pairs spanning the unknown.
    pub fn basis(&self, id: VarId) -> Vec<(usize, TBOperator)> {
        let e = &self.entries[id];
        let v = &e.var;
        let one = Complex64::new(1.0, 0.0);
        let jay = Complex64::new(0.0, 1.0);
        let mut out = Vec::with_capacity(v.count());
        let mut idx = e.offset;
        let put = |op: &mut TBOperator, i: usize, j: usize, k: i64, c: Complex64| {
            op.set_coeff(i, j, k, c);
            if v.structure == Structure::RealSymmetric && i != j {
                op.set_coeff(j, i, k, c);
            }
        };
        for k in 0..=v.q as i64 {
            for &(i, j) in &v.entries() {
                let mut re = TBOperator::zeros(self.omega, v.rows, v.cols);
                put(&mut re, i, j, k, one);
                if k == 0 {
                    out.push((idx, re));
                    idx += 1;
                    continue;
                }
                put(&mut re, i, j, -k, one);
                let mut im = TBOperator::zeros(self.omega, v.rows, v.cols);
                put(&mut im, i, j, k, jay);
                put(&mut im, i, j, -k, -jay);
                out.push((idx, re));
                out.push((idx + 1, im));
                idx += 2;
            }
        }
        out
    }

    /// Reconstructs the TB unknown from the decision vector.
    pub fn decode(&self, id: VarId, x: &[f64]) -> TBOperator {
        let e = &self.entries[id];
        let v = &e.var;
        let mut op = TBOperator::zeros(self.omega, v.rows, v.cols);
        let mut idx = e.offset;
        for k in 0..=v.q as i64 {
            for &(i, j) in &v.entries() {
                let c = if k == 0 {
                    idx += 1;
                    Complex64::new(x[idx - 1], 0.0)
                } else {
                    idx += 2;
                    Complex64::new(x[idx - 2], x[idx - 1])
                };
                let mut set = |a: usize, b: usize| {
                    op.set_coeff(a, b, k, c);
                    if k != 0 {
                        op.set_coeff(a, b, -k, c.conj());
                    }
                };
                set(i, j);
                if v.structure == Structure::RealSymmetric && i != j {
                    set(j, i);
                }
            }
        }
        op
    }

    pub fn decode_named(&self, name: &str, x: &[f64]) -> Result<TBOperator> {
        Ok(self.decode(self.id(name)?, x))
    }

    pub fn scalar(&self, id: VarId, x: &[f64]) -> f64 {
        x[self.entries[id].offset]
    }

    /// `(parameter index, row, col)` of every coordinate of the unknown.
    pub fn coordinates(&self, id: VarId) -> Vec<(usize, usize, usize)> {
        let e = &self.entries[id];
        let v = &e.var;
        let mut out = Vec::with_capacity(v.count());
        let mut idx = e.offset;
        for k in 0..=v.q {
            for &(i, j) in &v.entries() {
                let reps = if k == 0 { 1 } else { 2 };
                for _ in 0..reps {
                    out.push((idx, i, j));
                    idx += 1;
                }
            }
        }
        out
    }

    /// Linear form `tr0(V)` as `(parameter, coefficient)` pairs.
    pub fn tr0_form(&self, id: VarId) -> Vec<(usize, f64)> {
        let e = &self.entries[id];
        e.var
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, (i, j))| i == j)
            .map(|(pos, _)| (e.offset + pos, 1.0))
            .collect()
    }
}

/// Left or right factor of an unknown inside a term.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Id,
    Tb(TBOperator),
    /// The derivative operator `N = diag(j omega k)`.
    N,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Const(TBOperator),
    /// `scale * left * V * right`, with `V*` in place of `V` when `adjoint`.
    Var {
        var: VarId,
        left: Factor,
        right: Factor,
        adjoint: bool,
        scale: f64,
    },
    /// `scale * v * I` for a scalar unknown `v`.
    ScalarId { var: VarId, scale: f64 },
}

impl Term {
    pub fn var(var: VarId, scale: f64) -> Self {
        Term::Var {
            var,
            left: Factor::Id,
            right: Factor::Id,
            adjoint: false,
            scale,
        }
    }

    pub fn left(var: VarId, left: Factor, scale: f64) -> Self {
        Term::Var {
            var,
            left,
            right: Factor::Id,
            adjoint: false,
            scale,
        }
    }

    pub fn right(var: VarId, right: Factor, scale: f64) -> Self {
        Term::Var {
            var,
            left: Factor::Id,
            right,
            adjoint: false,
            scale,
        }
    }

    pub fn adjoint_right(var: VarId, right: Factor, scale: f64) -> Self {
        Term::Var {
            var,
            left: Factor::Id,
            right,
            adjoint: true,
            scale,
        }
    }
}

/// Sparse complex matrix keyed by `(row, col)`.
pub type SparseC = BTreeMap<(usize, usize), Complex64>;

/// Block-structured TBLMI `sum_terms >= margin * I`, before truncation.
#[derive(Debug, Clone)]
pub struct LmiSpec {
    pub name: String,
    /// Block sizes (in TB rows) of the grid.
    pub dims: Vec<usize>,
    pub margin: f64,
    pub terms: Vec<(usize, usize, Term)>,
}

impl LmiSpec {
    pub fn new(name: &str, dims: Vec<usize>, margin: f64) -> Self {
        Self {
            name: name.into(),
            dims,
            margin,
            terms: Vec::new(),
        }
    }

    /// Adds a term to sub-block `(u, v)`, `u <= v`. The mirrored block is implied.
    pub fn add(&mut self, u: usize, v: usize, term: Term) -> &mut Self {
        assert!(u <= v, "terms are stored in the upper block triangle");
        self.terms.push((u, v, term));
        self
    }

    /// Truncates at order `r`.
    pub fn truncate(&self, vars: &VarMap, r: usize) -> Result<ComplexLmi> {
        let w = 2 * r + 1;
        let mut offs = Vec::with_capacity(self.dims.len());
        let mut dim = 0;
        for &d in &self.dims {
            offs.push(dim);
            dim += d * w;
        }
        let mut constant = SparseC::new();
        let mut coeffs: BTreeMap<VarId, SparseC> = BTreeMap::new();
        let omega = vars.omega;
        for (u, v, term) in &self.terms {
            let (u, v) = (*u, *v);
            let (ro, co) = (offs[u], offs[v]);
            let (nu, nv) = (self.dims[u], self.dims[v]);
            let put = |target: &mut SparseC, a: usize, b: usize, z: Complex64| {
                if z == Complex64::new(0.0, 0.0) {
                    return;
                }
                *target.entry((ro + a, co + b)).or_default() += z;
                if u != v {
                    *target.entry((co + b, ro + a)).or_default() += z.conj();
                }
            };
            match term {
                Term::Const(op) => {
                    check_shape(&self.name, op, nu, nv)?;
                    for (a, b, z) in sparse_truncate(op, r) {
                        put(&mut constant, a, b, z);
                    }
                }
                Term::ScalarId { var, scale } => {
                    if u != v {
                        return Err(Error::InvalidArgument(format!(
                            "{}: scalar identity term off the block diagonal",
                            self.name
                        )));
                    }
                    let target = coeffs.entry(vars.entries[*var].offset).or_default();
                    for a in 0..nu * w {
                        put(target, a, a, Complex64::new(*scale, 0.0));
                    }
                }
                Term::Var {
                    var,
                    left,
                    right,
                    adjoint,
                    scale,
                } => {
                    for (idx, basis) in vars.basis(*var) {
                        let mut x = if *adjoint { basis.adjoint() } else { basis };
                        if let Factor::Tb(l) = left {
                            x = l.mul(&x)?;
                        }
                        if let Factor::Tb(rt) = right {
                            x = x.mul(rt)?;
                        }
                        check_shape(&self.name, &x, nu, nv)?;
                        let target = coeffs.entry(idx).or_default();
                        for (a, b, mut z) in sparse_truncate(&x, r) {
                            if *left == Factor::N {
                                z *= Complex64::new(0.0, omega * harmonic(a, r) as f64);
                            }
                            if *right == Factor::N {
                                z *= Complex64::new(0.0, omega * harmonic(b, r) as f64);
                            }
                            put(target, a, b, z * *scale);
                        }
                    }
                }
            }
        }
        if self.margin != 0.0 {
            for a in 0..dim {
                *constant.entry((a, a)).or_default() -= self.margin;
            }
        }
        let lmi = ComplexLmi {
            name: self.name.clone(),
            r,
            dims: self.dims.clone(),
            dim,
            constant,
            coeffs,
        };
        lmi.check_hermitian()?;
        Ok(lmi)
    }
}

fn check_shape(name: &str, op: &TBOperator, rows: usize, cols: usize) -> Result<()> {
    if op.rows() != rows || op.cols() != cols {
        return Err(Error::DimensionMismatch(format!(
            "{name}: term is {}x{}, block is {rows}x{cols}",
            op.rows(),
            op.cols()
        )));
    }
    Ok(())
}

fn harmonic(local: usize, r: usize) -> i64 {
    (local % (2 * r + 1)) as i64 - r as i64
}

/// Nonzero entries of `Pi_r(op)` in the block-of-Toeplitz layout.
fn sparse_truncate(op: &TBOperator, r: usize) -> Vec<(usize, usize, Complex64)> {
    let w = 2 * r + 1;
    let ri = r as i64;
    let mut out = Vec::new();
    for i in 0..op.rows() {
        for j in 0..op.cols() {
            for (k, c) in op.block(i, j).iter() {
                if k.abs() > 2 * ri {
                    continue;
                }
                for a in (-ri).max(k - ri)..=ri.min(ri + k) {
                    let b = a - k;
                    out.push((i * w + (a + ri) as usize, j * w + (b + ri) as usize, c));
                }
            }
        }
    }
    out
}

/// A truncated TBLMI `M(x) = M_0 + sum_i x_i M_i >= 0` with complex Hermitian data.
#[derive(Debug, Clone)]
pub struct ComplexLmi {
    pub name: String,
    pub r: usize,
    pub dims: Vec<usize>,
    pub dim: usize,
    pub constant: SparseC,
    /// Keyed by decision-vector index.
    pub coeffs: BTreeMap<usize, SparseC>,
}

fn hermitian_defect(m: &SparseC) -> (f64, f64) {
    let mut scale: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for (&(a, b), z) in m {
        scale = scale.max(z.norm());
        let t = m.get(&(b, a)).copied().unwrap_or_default();
        defect = defect.max((z - t.conj()).norm());
    }
    (defect, scale)
}

impl ComplexLmi {
    fn check_hermitian(&self) -> Result<()> {
        for m in std::iter::once(&self.constant).chain(self.coeffs.values()) {
            let (d, s) = hermitian_defect(m);
            if d > 1e-12 * (1.0 + s) {
                return Err(Error::Consistency(format!(
                    "{}: assembled block is not Hermitian (defect {d:.3e})",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (&(a, b), z) in &self.constant {
            m[(a, b)] += z;
        }
        for (&i, c) in &self.coeffs {
            let s = x[i];
            if s != 0.0 {
                for (&(a, b), z) in c {
                    m[(a, b)] += z * s;
                }
            }
        }
        m
    }

    fn flip_index(&self, c: usize) -> usize {
        let w = 2 * self.r + 1;
        (c / w) * w + (w - 1 - c % w)
    }

    /// True when every data matrix satisfies `J conj(M) J = M`, which holds
    /// for real-valued signals and real parametrizations.
    pub fn is_centro(&self, tol: f64) -> bool {
        std::iter::once(&self.constant).chain(self.coeffs.values()).all(|m| {
            m.iter().all(|(&(a, b), z)| {
                let t = m
                    .get(&(self.flip_index(a), self.flip_index(b)))
                    .copied()
                    .unwrap_or_default();
                (z - t.conj()).norm() <= tol * (1.0 + z.norm())
            })
        })
    }

    fn realify(&self, m: &SparseC, mode: Realification) -> Vec<Triplet> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut add = |a: usize, b: usize, v: f64| {
            if a <= b && v != 0.0 {
                *acc.entry((a, b)).or_default() += v;
            }
        };
        match mode {
            Realification::Centro => {
                for (&(c, d), z) in m {
                    let (jc, jd) = (self.flip_index(c), self.flip_index(d));
                    add(c, d, 0.5 * z.re);
                    add(c, jd, 0.5 * z.im);
                    add(jc, d, -0.5 * z.im);
                    add(jc, jd, 0.5 * z.re);
                }
            }
            Realification::Embedding => {
                let n = self.dim;
                for (&(c, d), z) in m {
                    add(c, d, z.re);
                    add(c + n, d + n, z.re);
                    add(c, d + n, -z.im);
                    add(c + n, d, z.im);
                }
            }
            Realification::None => {
                for (&(c, d), z) in m {
                    add(c, d, z.re);
                }
            }
        }
        acc.into_iter()
            .filter(|&(_, v)| v.abs() > 1e-300)
            .map(|((i, j), v)| Triplet { i, j, v })
            .collect()
    }

    fn to_block(&self, mode: Realification) -> PsdBlock {
        let dim = match mode {
            Realification::Embedding => 2 * self.dim,
            _ => self.dim,
        };
        PsdBlock {
            name: self.name.clone(),
            dim,
            constant: self.realify(&self.constant, mode),
            coefficients: self
                .coeffs
                .iter()
                .map(|(&var, m)| VarTriplets {
                    var,
                    entries: self.realify(m, mode),
                })
                .filter(|vt| !vt.entries.is_empty())
                .collect(),
        }
    }
}

/// An assembled TBLMI program at fixed truncation order.
#[derive(Debug, Clone)]
pub struct TbLmiProgram {
    pub name: String,
    pub sense: Sense,
    pub vars: VarMap,
    pub objective: Vec<f64>,
    pub lmis: Vec<ComplexLmi>,
    pub equalities: Vec<Equality>,
    pub r: usize,
    pub p: usize,
    pub q: usize,
    pub eps: f64,
}

impl TbLmiProgram {
    pub fn nvars(&self) -> usize {
        self.vars.nvars()
    }

    /// Hermitian block values at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Vec<DMatrix<Complex64>> {
        self.lmis.iter().map(|l| l.evaluate(x)).collect()
    }

    /// Smallest eigenvalue over all blocks at `x`.
    pub fn min_eigenvalue(&self, x: &[f64]) -> f64 {
        self.evaluate(x)
            .iter()
            .map(crate::linalg::hermitian_min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Rewrites the program in the variables `x_i = d_i x~_i`, where the
    /// program was assembled in `x~`.
    pub fn rescale_variables(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.nvars());
        for (c, s) in self.objective.iter_mut().zip(d) {
            *c /= s;
        }
        for lmi in &mut self.lmis {
            for (&i, m) in lmi.coeffs.iter_mut() {
                for z in m.values_mut() {
                    *z /= d[i];
                }
            }
        }
        for eq in &mut self.equalities {
            for (i, c) in eq.coeffs.iter_mut() {
                *c /= d[*i];
            }
        }
    }

    /// Real symmetric SDP. Uses the size-preserving unitary reduction when
    /// every block admits it and the real embedding otherwise.
    pub fn to_conic(&self) -> ConicProblem {
        let mode = if self.lmis.iter().all(|l| l.is_centro(1e-12)) {
            Realification::Centro
        } else {
            Realification::Embedding
        };
        self.to_conic_with(mode)
    }

    pub fn to_conic_with(&self, mode: Realification) -> ConicProblem {
        let mut p = ConicProblem::new(self.nvars(), self.sense);
        p.objective = self.objective.clone();
        p.psd_blocks = self.lmis.iter().map(|l| l.to_block(mode)).collect();
        p.equalities = self.equalities.clone();
        p.var_map = self.vars.clone();
        p.realification = mode;
        p
    }
}
