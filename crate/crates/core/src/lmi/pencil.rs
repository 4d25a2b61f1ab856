use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign constraint on a scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Free,
    Nonneg,
    Positive,
}

impl Sign {
    pub fn name(self) -> &'static str {
        match self {
            Sign::Free => "free",
            Sign::Nonneg => "nonneg",
            Sign::Positive => "positive",
        }
    }

    pub fn parse(s: &str) -> Option<Sign> {
        match s {
            "free" => Some(Sign::Free),
            "nonneg" => Some(Sign::Nonneg),
            "positive" => Some(Sign::Positive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub sign: Sign,
}

/// One coefficient entry `F_var[row, col] = F_var[col, row] = value`,
/// stored with `row <= col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub var: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// A symmetric block `F₀ + Σ zᵢ Fᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilBlock {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    /// Sorted by `(var, row, col)`.
    pub terms: Vec<Term>,
}

impl PencilBlock {
    pub fn evaluate(&self, z: &[f64]) -> DMatrix<f64> {
        let mut f = self.constant.clone();
        for t in &self.terms {
            let v = z[t.var] * t.value;
            f[(t.row, t.col)] += v;
            if t.row != t.col {
                f[(t.col, t.row)] += v;
            }
        }
        f
    }

    /// Dense `Fᵢ` for variable `var`.
    pub fn coefficient(&self, var: usize) -> DMatrix<f64> {
        let mut f = DMatrix::zeros(self.dim, self.dim);
        for t in self.terms.iter().filter(|t| t.var == var) {
            f[(t.row, t.col)] += t.value;
            if t.row != t.col {
                f[(t.col, t.row)] += t.value;
            }
        }
        f
    }

    /// Accumulate `⟨Fᵢ, W⟩` into `grad[i]` for a symmetric `W`.
    pub fn add_inner_products(&self, w: &DMatrix<f64>, weight: f64, grad: &mut [f64]) {
        for t in &self.terms {
            let g = if t.row == t.col {
                w[(t.row, t.col)]
            } else {
                w[(t.row, t.col)] + w[(t.col, t.row)]
            };
            grad[t.var] += weight * t.value * g;
        }
    }
}

/// `F(z) = F₀ + Σ zᵢ Fᵢ`, one or more symmetric blocks, with a registry of
/// named scalar decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePencil {
    pub vars: Vec<Variable>,
    pub blocks: Vec<PencilBlock>,
}

impl AffinePencil {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn evaluate(&self, z: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.check_len(z)?;
        Ok(self.blocks.iter().map(|b| b.evaluate(z)).collect())
    }

    pub fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.num_vars() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, pencil has {} variables",
                z.len(),
                self.num_vars()
            )));
        }
        Ok(())
    }

    /// Whether `z` respects every sign constraint (positive means `> 0`).
    pub fn signs_satisfied(&self, z: &[f64]) -> bool {
        z.len() == self.num_vars()
            && self.vars.iter().zip(z).all(|(v, &x)| match v.sign {
                Sign::Free => x.is_finite(),
                Sign::Nonneg => x >= 0.0,
                Sign::Positive => x > 0.0,
            })
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Check the structural invariants: term indices in range and registry
    /// names unique.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for v in &self.vars {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate variable {:?}", v.name)));
            }
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            if blk.constant.shape() != (blk.dim, blk.dim) {
                return Err(Error::Dimension(format!("block {b} constant has wrong shape")));
            }
            crate::eigen::check_symmetric(&blk.constant)?;
            for t in &blk.terms {
                if t.var >= self.num_vars() || t.row > t.col || t.col >= blk.dim {
                    return Err(Error::InvalidArgument(format!("block {b} has a malformed term {t:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Dimension, constant and `(var, row, col) -> value` terms of one block.
type BlockDraft = (usize, DMatrix<f64>, BTreeMap<(usize, usize, usize), f64>);

/// Incremental construction of an [`AffinePencil`]. Repeated entries add up.
#[derive(Debug, Default)]
pub struct PencilBuilder {
    vars: Vec<Variable>,
    blocks: Vec<BlockDraft>,
}

impl PencilBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, sign: Sign) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            sign,
        });
        self.vars.len() - 1
    }

    pub fn add_block(&mut self, dim: usize) -> usize {
        self.blocks.push((dim, DMatrix::zeros(dim, dim), BTreeMap::new()));
        self.blocks.len() - 1
    }

    /// Add `value` to `F₀[r,c]` and `F₀[c,r]` (once on the diagonal).
    pub fn add_constant(&mut self, block: usize, r: usize, c: usize, value: f64) {
        let m = &mut self.blocks[block].1;
        m[(r, c)] += value;
        if r != c {
            m[(c, r)] += value;
        }
    }

    pub fn add_constant_dense(&mut self, block: usize, m: &DMatrix<f64>) {
        let dst = &mut self.blocks[block].1;
        assert_eq!(dst.shape(), m.shape(), "constant block shape");
        *dst += m;
    }

    /// Add `value` to `F_var[r,c]` and `F_var[c,r]`.
    pub fn add_term(&mut self, block: usize, var: usize, r: usize, c: usize, value: f64) {
        if value == 0.0 {
            return;
        }
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        *self.blocks[block].2.entry((var, r, c)).or_insert(0.0) += value;
    }

    /// Add a dense symmetric coefficient matrix for `var`.
    pub fn add_term_dense(&mut self, block: usize, var: usize, m: &DMatrix<f64>) {
        let n = m.nrows();
        for r in 0..n {
            for c in r..n {
                let v = if r == c {
                    m[(r, c)]
                } else {
                    0.5 * (m[(r, c)] + m[(c, r)])
                };
                self.add_term(block, var, r, c, v);
            }
        }
    }

    pub fn build(self) -> AffinePencil {
        let blocks = self
            .blocks
            .into_iter()
            .map(|(dim, constant, terms)| PencilBlock {
                dim,
                constant,
                terms: terms
                    .into_iter()
                    .filter(|(_, v)| *v != 0.0)
                    .map(|((var, row, col), value)| Term { var, row, col, value })
                    .collect(),
            })
            .collect();
        AffinePencil {
            vars: self.vars,
            blocks,
        }
    }
}

/// Convenience for tests and reports: `z` as a dense vector.
pub fn point(z: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_accumulates_and_symmetrizes() {
        let mut b = PencilBuilder::new();
        let x = b.add_var("x", Sign::Free);
        let blk = b.add_block(2);
        b.add_term(blk, x, 1, 0, 1.5);
        b.add_term(blk, x, 0, 1, 0.5);
        b.add_constant(blk, 0, 0, 3.0);
        let p = b.build();
        p.validate().unwrap();
        assert_eq!(p.blocks[0].terms.len(), 1);
        let f = p.blocks[0].evaluate(&[2.0]);
        assert_eq!(f, DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 4.0, 0.0]));
    }

    #[test]
    fn sign_checks() {
        let mut b = PencilBuilder::new();
        b.add_var("a", Sign::Nonneg);
        b.add_var("q", Sign::Positive);
        b.add_block(1);
        let p = b.build();
        assert!(p.signs_satisfied(&[0.0, 1e-12]));
        assert!(!p.signs_satisfied(&[0.0, 0.0]));
        assert!(!p.signs_satisfied(&[-1e-300, 1.0]));
        assert!(p.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn duplicate_names_invalid() {
        let mut b = PencilBuilder::new();
        b.add_var("a", Sign::Free);
        b.add_var("a", Sign::Free);
        assert!(b.build().validate().is_err());
    }
}
