//! Finite real SDP in sparse-triplet form, the exchange format between the
//! LMI assembler and any conic solver.
//!
//! ```text
//! minimize (or maximize)  objective . x + objective_constant
//! subject to              C_b + sum_i x_i A_{b,i}  PSD   for each block b
//!                         sum_i e_i x_i = rhs              for each equality
//! ```
//!
//! Block matrices are real symmetric; only entries with `i <= j` are stored.

use serde::{Deserialize, Serialize};

use super::VarMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarTriplets {
    pub var: usize,
    pub entries: Vec<Triplet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdBlock {
    pub name: String,
    pub dim: usize,
    pub constant: Vec<Triplet>,
    pub coefficients: Vec<VarTriplets>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// How complex Hermitian blocks were mapped to real symmetric ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Realification {
    /// Already real.
    None,
    /// `[[Re, -Im], [Im, Re]]`, doubling the size.
    Embedding,
    /// Unitary similarity `(I - jJ)/sqrt(2)` for matrices with `J conj(M) J = M`.
    Centro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub nvars: usize,
    pub sense: Sense,
    pub objective: Vec<f64>,
    #[serde(default)]
    pub objective_constant: f64,
    pub psd_blocks: Vec<PsdBlock>,
    #[serde(default)]
    pub equalities: Vec<Equality>,
    #[serde(default)]
    pub var_map: VarMap,
    #[serde(default = "default_realification")]
    pub realification: Realification,
}

fn default_realification() -> Realification {
    Realification::None
}

impl ConicProblem {
    pub fn new(nvars: usize, sense: Sense) -> Self {
        Self {
            nvars,
            sense,
            objective: vec![0.0; nvars],
            objective_constant: 0.0,
            psd_blocks: Vec::new(),
            equalities: Vec::new(),
            var_map: VarMap::default(),
            realification: Realification::None,
        }
    }

    /// Structural checks: indices in range, upper-triangle storage, finite data.
    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.nvars {
            return Err(Error::Malformed(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.nvars
            )));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed("non-finite objective coefficient".into()));
        }
        let check = |t: &Triplet, dim: usize, name: &str| -> Result<()> {
            if t.i > t.j || t.j >= dim || !t.v.is_finite() {
                return Err(Error::Malformed(format!(
                    "block {name}: bad triplet ({}, {}, {})",
                    t.i, t.j, t.v
                )));
            }
            Ok(())
        };
        for b in &self.psd_blocks {
            for t in &b.constant {
                check(t, b.dim, &b.name)?;
            }
            for vt in &b.coefficients {
                if vt.var >= self.nvars {
                    return Err(Error::Malformed(format!(
                        "block {}: variable {} out of range",
                        b.name, vt.var
                    )));
                }
                for t in &vt.entries {
                    check(t, b.dim, &b.name)?;
                }
            }
        }
        for e in &self.equalities {
            if e.coeffs.iter().any(|&(v, c)| v >= self.nvars || !c.is_finite()) || !e.rhs.is_finite() {
                return Err(Error::Malformed("bad equality row".into()));
            }
        }
        Ok(())
    }

    /// Value of the objective at `x`, in the problem's own sense.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_constant
    }

    /// Dense value of block `b` at `x`.
    pub fn block_value(&self, b: usize, x: &[f64]) -> nalgebra::DMatrix<f64> {
        let blk = &self.psd_blocks[b];
        let mut m = nalgebra::DMatrix::zeros(blk.dim, blk.dim);
        let mut put = |t: &Triplet, s: f64| {
            m[(t.i, t.j)] += s * t.v;
            if t.i != t.j {
                m[(t.j, t.i)] += s * t.v;
            }
        };
        for t in &blk.constant {
            put(t, 1.0);
        }
        for vt in &blk.coefficients {
            let s = x[vt.var];
            if s != 0.0 {
                for t in &vt.entries {
                    put(t, s);
                }
            }
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}
