//! Toeplitz-block operators built from periodic matrix functions.
//!
//! An operator is an `n x m` grid of phasor series; block `(i, j)` stands for
//! the infinite Toeplitz matrix of the entry `a_ij(t)`. Truncations use the
//! block-of-Toeplitz layout: within block `(i, j)` the entry at row `a` and
//! column `b` (both in `-r..=r`) is `c^{ij}_{a-b}`, stored at dense index
//! `(i*(2r+1) + a + r, j*(2r+1) + b + r)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phasor::{PhasorRecord, PhasorSeries};

pub const DEFAULT_NORM_GRID: usize = 4096;

fn omega_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TbRecord", into = "TbRecord")]
pub struct TBOperator {
    omega: f64,
    n: usize,
    m: usize,
    blocks: Vec<PhasorSeries>,
}

/// Serialized form `{omega, n, m, blocks: [[phasor-list]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TbRecord {
    pub omega: f64,
    pub n: usize,
    pub m: usize,
    pub blocks: Vec<Vec<Vec<PhasorRecord>>>,
}

impl TryFrom<TbRecord> for TBOperator {
    type Error = Error;

    fn try_from(rec: TbRecord) -> Result<Self> {
        if !(rec.omega > 0.0) {
            return Err(Error::Malformed(format!(
                "omega must be positive, got {}",
                rec.omega
            )));
        }
        if rec.blocks.len() != rec.n || rec.blocks.iter().any(|row| row.len() != rec.m) {
            return Err(Error::DimensionMismatch(format!(
                "blocks grid does not match declared {}x{}",
                rec.n, rec.m
            )));
        }
        let blocks = rec
            .blocks
            .iter()
            .flat_map(|row| row.iter())
            .map(|list| PhasorSeries::from_records(rec.omega, list))
            .collect();
        Ok(Self {
            omega: rec.omega,
            n: rec.n,
            m: rec.m,
            blocks,
        })
    }
}

impl From<TBOperator> for TbRecord {
    fn from(op: TBOperator) -> Self {
        let blocks = (0..op.n)
            .map(|i| (0..op.m).map(|j| op.block(i, j).to_records()).collect())
            .collect();
        TbRecord {
            omega: op.omega,
            n: op.n,
            m: op.m,
            blocks,
        }
    }
}

impl TBOperator {
    pub fn zeros(omega: f64, n: usize, m: usize) -> Self {
        Self {
            omega,
            n,
            m,
            blocks: vec![PhasorSeries::zero(omega); n * m],
        }
    }

    pub fn identity(omega: f64, n: usize) -> Self {
        let mut op = Self::zeros(omega, n, n);
        for i in 0..n {
            op.set_coeff(i, i, 0, Complex64::new(1.0, 0.0));
        }
        op
    }

    /// Operator of a constant real matrix.
    pub fn from_constant(omega: f64, a: &DMatrix<f64>) -> Self {
        let mut op = Self::zeros(omega, a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                op.set_coeff(i, j, 0, Complex64::new(a[(i, j)], 0.0));
            }
        }
        op
    }

    /// Builds an operator from a row-major list of blocks.
    pub fn from_blocks(omega: f64, n: usize, m: usize, blocks: Vec<PhasorSeries>) -> Result<Self> {
        if blocks.len() != n * m {
            return Err(Error::DimensionMismatch(format!(
                "expected {} blocks, got {}",
                n * m,
                blocks.len()
            )));
        }
        for b in &blocks {
            if !omega_close(b.omega(), omega) && !b.is_zero() {
                return Err(Error::OmegaMismatch(omega, b.omega()));
            }
        }
        let blocks = blocks
            .into_iter()
            .map(|b| PhasorSeries::from_coeffs(omega, b.iter()))
            .collect();
        Ok(Self { omega, n, m, blocks })
    }

    /// Builds an operator from its phasor matrices `k -> A_k`.
    pub fn from_coeff_matrices(
        omega: f64,
        n: usize,
        m: usize,
        coeffs: &BTreeMap<i64, DMatrix<Complex64>>,
    ) -> Self {
        let mut op = Self::zeros(omega, n, m);
        for (&k, mat) in coeffs {
            assert_eq!(mat.shape(), (n, m), "phasor matrix shape");
            for i in 0..n {
                for j in 0..m {
                    op.set_coeff(i, j, k, mat[(i, j)]);
                }
            }
        }
        op
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn block(&self, i: usize, j: usize) -> &PhasorSeries {
        &self.blocks[i * self.m + j]
    }

    pub fn set_block(&mut self, i: usize, j: usize, s: PhasorSeries) {
        self.blocks[i * self.m + j] = PhasorSeries::from_coeffs(self.omega, s.iter());
    }

    pub fn coeff(&self, i: usize, j: usize, k: i64) -> Complex64 {
        self.block(i, j).coeff(k)
    }

    pub fn set_coeff(&mut self, i: usize, j: usize, k: i64, c: Complex64) {
        self.blocks[i * self.m + j].set(k, c);
    }

    /// Phasor matrix `A_k`.
    pub fn coeff_matrix(&self, k: i64) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.m, |i, j| self.coeff(i, j, k))
    }

    pub fn degree(&self) -> usize {
        self.blocks.iter().map(|b| b.degree()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.is_zero())
    }

    /// True when every entry is a real-valued signal.
    pub fn is_real_valued(&self) -> bool {
        self.blocks.iter().all(|b| b.is_real())
    }

    /// Hermitian check: `c^{ji}_{-k} = conj(c^{ij}_k)` for all blocks.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        if self.n != self.m {
            return false;
        }
        let d = self.degree() as i64;
        for i in 0..self.n {
            for j in 0..self.n {
                for k in -d..=d {
                    if (self.coeff(j, i, -k) - self.coeff(i, j, k).conj()).norm() > tol {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if !omega_close(self.omega, other.omega) {
            return Err(Error::OmegaMismatch(self.omega, other.omega));
        }
        if self.n != other.n || self.m != other.m {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.n, self.m, other.n, other.m
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(Self {
            blocks,
            ..self.clone()
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.sub(b))
            .collect();
        Ok(Self {
            blocks,
            ..self.clone()
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.scale(Complex64::new(s, 0.0)))
            .collect();
        Self {
            blocks,
            ..self.clone()
        }
    }

    /// Exact product: blockwise convolution of phasor sequences.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if !omega_close(self.omega, other.omega) {
            return Err(Error::OmegaMismatch(self.omega, other.omega));
        }
        if self.m != other.n {
            return Err(Error::DimensionMismatch(format!(
                "product of {}x{} and {}x{}",
                self.n, self.m, other.n, other.m
            )));
        }
        let mut out = Self::zeros(self.omega, self.n, other.m);
        for i in 0..self.n {
            for j in 0..other.m {
                let mut acc: BTreeMap<i64, Complex64> = BTreeMap::new();
                for l in 0..self.m {
                    for (ka, ca) in self.block(i, l).iter() {
                        for (kb, cb) in other.block(l, j).iter() {
                            *acc.entry(ka + kb).or_default() += ca * cb;
                        }
                    }
                }
                out.blocks[i * other.m + j] = PhasorSeries::from_coeffs(self.omega, acc);
            }
        }
        Ok(out)
    }

    /// Adjoint: block `(i, j)` becomes `k -> conj(c^{ji}_{-k})`.
    pub fn adjoint(&self) -> Self {
        let mut blocks = Vec::with_capacity(self.n * self.m);
        for i in 0..self.m {
            for j in 0..self.n {
                blocks.push(self.block(j, i).conj());
            }
        }
        Self {
            omega: self.omega,
            n: self.m,
            m: self.n,
            blocks,
        }
    }

    /// Removes phasors of order above `p` in every block.
    pub fn band(&self, p: usize) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b.band(p)).collect(),
            ..self.clone()
        }
    }

    /// Drops phasors of modulus at most `tol`.
    pub fn prune(&self, tol: f64) -> Self {
        Self {
            blocks: self.blocks.iter().map(|b| b.prune(tol)).collect(),
            ..self.clone()
        }
    }

    /// Sub-operator made of the given block rows and columns.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut blocks = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                blocks.push(self.block(i, j).clone());
            }
        }
        Self {
            omega: self.omega,
            n: rows.len(),
            m: cols.len(),
            blocks,
        }
    }

    /// Block concatenation of a grid of operators (row-major, rows of equal height).
    pub fn stack(grid: &[Vec<&TBOperator>]) -> Result<Self> {
        let first = grid
            .first()
            .and_then(|row| row.first())
            .ok_or_else(|| Error::InvalidArgument("empty operator grid".into()))?;
        let omega = first.omega;
        let col_dims: Vec<usize> = grid[0].iter().map(|op| op.m).collect();
        let n: usize = grid.iter().map(|row| row[0].n).sum();
        let m: usize = col_dims.iter().sum();
        let mut out = Self::zeros(omega, n, m);
        let mut r0 = 0;
        for row in grid {
            if row.len() != col_dims.len() {
                return Err(Error::DimensionMismatch("ragged operator grid".into()));
            }
            let h = row[0].n;
            let mut c0 = 0;
            for (op, &w) in row.iter().zip(&col_dims) {
                if op.n != h || op.m != w {
                    return Err(Error::DimensionMismatch(
                        "inconsistent block sizes in operator grid".into(),
                    ));
                }
                if !omega_close(op.omega, omega) {
                    return Err(Error::OmegaMismatch(omega, op.omega));
                }
                for i in 0..h {
                    for j in 0..w {
                        out.blocks[(r0 + i) * m + c0 + j] = op.block(i, j).clone();
                    }
                }
                c0 += w;
            }
            r0 += h;
        }
        Ok(out)
    }

    /// Average trace: sum of the zero-order phasors of the diagonal blocks.
    pub fn tr0(&self) -> Result<f64> {
        if self.n != self.m {
            return Err(Error::NotSquare {
                rows: self.n,
                cols: self.m,
            });
        }
        let s: Complex64 = (0..self.n).map(|i| self.coeff(i, i, 0)).sum();
        if s.im.abs() > 1e-10 * (1.0 + s.re.abs()) {
            log::debug!("tr0 discarded imaginary part {}", s.im);
        }
        Ok(s.re)
    }

    /// Value `A(t)` of the underlying periodic matrix function.
    pub fn eval(&self, t: f64) -> DMatrix<Complex64> {
        let d = self.degree() as i64;
        let phases: Vec<Complex64> = (-d..=d)
            .map(|k| Complex64::from_polar(1.0, self.omega * k as f64 * t))
            .collect();
        DMatrix::from_fn(self.n, self.m, |i, j| {
            let b = self.block(i, j);
            let v: Complex64 = b.iter().map(|(k, c)| c * phases[(k + d) as usize]).sum();
            if b.is_real() {
                Complex64::new(v.re, 0.0)
            } else {
                v
            }
        })
    }

    /// Real part of `A(t)`, for real-valued operators.
    pub fn eval_real(&self, t: f64) -> DMatrix<f64> {
        self.eval(t).map(|c| c.re)
    }

    /// Grid approximation of `ess sup_t sigma_max(A(t))`, which equals the
    /// induced operator norm on l2.
    pub fn operator_norm(&self) -> f64 {
        self.operator_norm_grid(DEFAULT_NORM_GRID)
    }

    pub fn operator_norm_grid(&self, grid: usize) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let period = 2.0 * std::f64::consts::PI / self.omega;
        let samples = if self.degree() == 0 { 1 } else { grid.max(1) };
        (0..samples)
            .map(|i| {
                let t = period * i as f64 / samples as f64;
                max_singular_value(&self.eval(t))
            })
            .fold(0.0, f64::max)
    }

    /// Finite section `Pi_r(A)`.
    pub fn truncate(&self, r: usize) -> TruncatedMatrix {
        let w = 2 * r + 1;
        let ri = r as i64;
        let mut data = DMatrix::zeros(self.n * w, self.m * w);
        for i in 0..self.n {
            for j in 0..self.m {
                for (k, c) in self.block(i, j).iter() {
                    if k.abs() > 2 * ri {
                        continue;
                    }
                    for a in -ri..=ri {
                        let b = a - k;
                        if b.abs() <= ri {
                            data[(i * w + (a + ri) as usize, j * w + (b + ri) as usize)] = c;
                        }
                    }
                }
            }
        }
        TruncatedMatrix {
            r,
            n: self.n,
            m: self.m,
            data,
        }
    }

    /// Hankel block `H_(r1,r2)(A+)` or `H_(r1,r2)(A-)`: block `(i, j)` entry
    /// `(a, b)` is `c^{ij}_{+-(a+b+1)}`.
    pub fn hankel(&self, sign: HankelSign, r1: usize, r2: usize) -> HankelBlock {
        let (w1, w2) = (2 * r1 + 1, 2 * r2 + 1);
        let s: i64 = match sign {
            HankelSign::Plus => 1,
            HankelSign::Minus => -1,
        };
        let mut data = DMatrix::zeros(self.n * w1, self.m * w2);
        for i in 0..self.n {
            for j in 0..self.m {
                let blk = self.block(i, j);
                if blk.is_zero() {
                    continue;
                }
                for a in 0..w1 {
                    for b in 0..w2 {
                        data[(i * w1 + a, j * w2 + b)] = blk.coeff(s * (a + b + 1) as i64);
                    }
                }
            }
        }
        HankelBlock {
            sign,
            r1,
            r2,
            n: self.n,
            m: self.m,
            data,
        }
    }
}

pub fn max_singular_value(a: &DMatrix<Complex64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.nrows() == 1 || a.ncols() == 1 {
        return a.norm();
    }
    a.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Dense finite section of a TB operator with its block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMatrix {
    pub r: usize,
    pub n: usize,
    pub m: usize,
    pub data: DMatrix<Complex64>,
}

impl TruncatedMatrix {
    pub fn width(&self) -> usize {
        2 * self.r + 1
    }

    /// Dense index of block `i`, harmonic `a` (in `-r..=r`).
    pub fn index(r: usize, i: usize, a: i64) -> usize {
        i * (2 * r + 1) + (a + r as i64) as usize
    }

    /// Principal submatrix keeping harmonics `|a| <= r_new` in every block.
    pub fn restrict(&self, r_new: usize) -> TruncatedMatrix {
        assert!(r_new <= self.r);
        let rows = central_indices(self.n, self.r, r_new);
        let cols = central_indices(self.m, self.r, r_new);
        let data = DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.data[(rows[a], cols[b])]);
        TruncatedMatrix {
            r: r_new,
            n: self.n,
            m: self.m,
            data,
        }
    }

    pub fn adjoint(&self) -> TruncatedMatrix {
        TruncatedMatrix {
            r: self.r,
            n: self.m,
            m: self.n,
            data: self.data.adjoint(),
        }
    }
}

/// Dense indices of harmonics `|a| <= r_new` inside a truncation of order `r`
/// with `n` blocks.
pub fn central_indices(n: usize, r: usize, r_new: usize) -> Vec<usize> {
    let off = r - r_new;
    (0..n)
        .flat_map(|i| (0..2 * r_new + 1).map(move |a| i * (2 * r + 1) + off + a))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HankelSign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HankelBlock {
    pub sign: HankelSign,
    pub r1: usize,
    pub r2: usize,
    pub n: usize,
    pub m: usize,
    pub data: DMatrix<Complex64>,
}

/// The derivative operator `N = I_n (x) diag(j*omega*k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NOperator {
    pub omega: f64,
    pub n: usize,
}

impl NOperator {
    pub fn new(omega: f64, n: usize) -> Self {
        Self { omega, n }
    }

    /// Diagonal entries of `N_r` in the truncation layout.
    pub fn diagonal(&self, r: usize) -> Vec<Complex64> {
        let ri = r as i64;
        (0..self.n)
            .flat_map(|_| (-ri..=ri).map(|k| Complex64::new(0.0, self.omega * k as f64)))
            .collect()
    }

    pub fn truncate(&self, r: usize) -> TruncatedMatrix {
        let d = self.diagonal(r);
        TruncatedMatrix {
            r,
            n: self.n,
            m: self.n,
            data: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)),
        }
    }
}

/// Block flip `J_{n,r} = I_n (x) J_{2r+1}` with `J` the anti-identity.
pub fn flip(n: usize, r: usize) -> DMatrix<Complex64> {
    let w = 2 * r + 1;
    let mut j = DMatrix::zeros(n * w, n * w);
    for i in 0..n {
        for a in 0..w {
            j[(i * w + a, i * w + w - 1 - a)] = Complex64::new(1.0, 0.0);
        }
    }
    j
}

/// Reverses the harmonic order inside each block of rows (left `J`) or
/// columns (right `J`) without forming the flip matrix.
fn flip_rows_cols(m: &DMatrix<Complex64>, n: usize, mcols: usize, r: usize) -> DMatrix<Complex64> {
    let w = 2 * r + 1;
    let fr = |a: usize| (a / w) * w + (w - 1 - a % w);
    debug_assert_eq!(m.nrows(), n * w);
    debug_assert_eq!(m.ncols(), mcols * w);
    DMatrix::from_fn(m.nrows(), m.ncols(), |a, b| m[(fr(a), fr(b))])
}

/// Smallest nonnegative integer `eta >= (min(dA, dB) - 1) / 2`.
pub fn hankel_order(da: usize, db: usize) -> usize {
    let d = da.min(db);
    if d == 0 {
        0
    } else {
        d / 2
    }
}

/// `Pi_r(AB)` from the truncations of the factors plus the two Hankel corrections
/// `H(A+)H(B-) + J H(A-)H(B+) J`.
pub fn truncated_product(a: &TBOperator, b: &TBOperator, r: usize) -> Result<TruncatedMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "product of {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if !omega_close(a.omega(), b.omega()) {
        return Err(Error::OmegaMismatch(a.omega(), b.omega()));
    }
    let ta = a.truncate(r);
    let tb = b.truncate(r);
    let mut data = &ta.data * &tb.data;
    if a.degree().min(b.degree()) > 0 {
        let eta = hankel_order(a.degree(), b.degree());
        let ap = a.hankel(HankelSign::Plus, r, eta);
        let am = a.hankel(HankelSign::Minus, r, eta);
        let bp = b.hankel(HankelSign::Plus, eta, r);
        let bm = b.hankel(HankelSign::Minus, eta, r);
        data += &ap.data * &bm.data;
        let e = &am.data * &bp.data;
        data += flip_rows_cols(&e, a.rows(), b.cols(), r);
    }
    Ok(TruncatedMatrix {
        r,
        n: a.rows(),
        m: b.cols(),
        data,
    })
}
