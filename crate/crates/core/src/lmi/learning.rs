//! Convex learning condition for a single hidden layer.
//!
//! Each specification pair contributes one PSD block over the coordinates
//! `[x | x̃ | 1 | v | y]` (sizes `nx, n1, 1, n1, ny`):
//!
//! ```text
//! ⎡ λAᵀA     0       λAᵀb            Ñ_vxᵀ   Ñ_ΨxᵀCᵀ   ⎤
//! ⎢ 0        Q₁      0               L₁ᵀ     L₂ᵀCᵀ     ⎥
//! ⎢ λbᵀA     0       λ(bᵀb-1)+1      b̃⁰ᵀ     b̃¹ᵀCᵀ+dᵀ  ⎥  ⪰ 0
//! ⎢ Ñ_vx     L₁      b̃⁰              Q₁      0         ⎥
//! ⎣ CÑ_Ψx    CL₂     Cb̃¹+d           0       I         ⎦
//! ```
//!
//! with `Q₁ = M⁻¹` diagonal, `L₂ = Ñ_Ψx¹Q₁`. `L₁` is pinned to zero (a
//! single hidden layer has `Ñ_vx¹ = 0`), and `Ñ_Ψx` is only a variable in
//! residual mode. `Q₁` and the network variables are shared by all pairs;
//! each pair has its own `λ`.

use nalgebra::{DMatrix, DVector};

use super::pencil::{AffinePencil, PencilBuilder, Sign};
use crate::eigen::sym_eigen_unchecked;
use crate::error::{Error, Result};
use crate::linalg::congruence;
use crate::loop_transform::{RecoveryMode, TransformedForm};
use crate::sets::{SectorBounds, SpecPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LayerShape {
    pub nx: usize,
    pub n1: usize,
    pub ny: usize,
}

impl LayerShape {
    /// Size of one learning block.
    pub fn block_dim(&self) -> usize {
        self.nx + 2 * self.n1 + 1 + self.ny
    }
}

/// Where each group of learning variables lives in the pencil registry.
/// Matrices are stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearningLayout {
    pub shape: LayerShape,
    pub mode: RecoveryMode,
    pub q: usize,
    pub lambda: usize,
    pub pairs: usize,
    pub l2: usize,
    pub n_vx: usize,
    pub n_psix: Option<usize>,
    pub b0: usize,
    pub b1: usize,
}

/// Named views into a learning solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningVariables {
    pub q: DVector<f64>,
    pub lambda: DVector<f64>,
    pub l2: DMatrix<f64>,
    pub n_vx: DMatrix<f64>,
    pub n_psix: Option<DMatrix<f64>>,
    pub b0: DVector<f64>,
    pub b1: DVector<f64>,
}

impl LearningLayout {
    pub fn extract(&self, z: &[f64]) -> LearningVariables {
        let LayerShape { nx, n1, ny } = self.shape;
        let mat = |start: usize, r: usize, c: usize| DMatrix::from_row_slice(r, c, &z[start..start + r * c]);
        let vec = |start: usize, n: usize| DVector::from_column_slice(&z[start..start + n]);
        LearningVariables {
            q: vec(self.q, n1),
            lambda: vec(self.lambda, self.pairs),
            l2: mat(self.l2, ny, n1),
            n_vx: mat(self.n_vx, n1, nx),
            n_psix: self.n_psix.map(|s| mat(s, ny, nx)),
            b0: vec(self.b0, n1),
            b1: vec(self.b1, ny),
        }
    }
}

impl LearningVariables {
    fn check_q(&self) -> Result<()> {
        if let Some((i, q)) = self.q.iter().enumerate().find(|(_, q)| !(**q > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "Q1 must be positive definite, q[{i}] = {q:e}"
            )));
        }
        Ok(())
    }

    /// `Ñ_Ψx¹ = L₂ Q₁⁻¹`.
    pub fn n_psix1(&self) -> Result<DMatrix<f64>> {
        self.check_q()?;
        let mut m = self.l2.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col /= self.q[j];
        }
        Ok(m)
    }

    /// The transformed weights described by this solution.
    pub fn to_transformed(&self, sector: &SectorBounds) -> Result<TransformedForm> {
        let n1 = self.q.len();
        let ny = self.b1.len();
        let nx = self.n_vx.ncols();
        Ok(TransformedForm {
            n_vx: self.n_vx.clone(),
            n_vx1: DMatrix::zeros(n1, n1),
            n_psix: self.n_psix.clone().unwrap_or_else(|| DMatrix::zeros(ny, nx)),
            n_psix1: self.n_psix1()?,
            b0: self.b0.clone(),
            b1: self.b1.clone(),
            sector: sector.clone(),
            hidden: vec![n1],
        })
    }
}

/// Assemble the learning pencil, one block per pair.
pub fn build_learning(
    shape: LayerShape,
    pairs: &[SpecPair],
    sec: &SectorBounds,
    mode: RecoveryMode,
) -> Result<(AffinePencil, LearningLayout)> {
    let LayerShape { nx, n1, ny } = shape;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one specification pair is required".into(),
        ));
    }
    if nx == 0 || n1 == 0 || ny == 0 {
        return Err(Error::InvalidArgument("layer sizes must be positive".into()));
    }
    if sec.len() != n1 {
        return Err(Error::Dimension(format!(
            "sector has {} entries, expected {n1}",
            sec.len()
        )));
    }
    if mode == RecoveryMode::Strict && !sec.is_symmetric() {
        return Err(Error::InvalidArgument("strict mode needs a symmetric sector".into()));
    }
    for (j, p) in pairs.iter().enumerate() {
        if p.input.dim() != nx || p.output.dim() != ny {
            return Err(Error::Dimension(format!(
                "pair {j} is R^{} -> R^{}, expected R^{nx} -> R^{ny}",
                p.input.dim(),
                p.output.dim()
            )));
        }
        // positive definiteness of the input shape
        p.input
            .bounding_box()
            .map_err(|e| Error::InvalidArgument(format!("pair {j}: input shape must be positive definite ({e})")))?;
    }

    let mut b = PencilBuilder::new();
    let q = (0..n1)
        .map(|i| b.add_var(format!("q[{i}]"), Sign::Positive))
        .collect::<Vec<_>>()[0];
    let lambda = (0..pairs.len())
        .map(|j| b.add_var(format!("lambda[{j}]"), Sign::Nonneg))
        .collect::<Vec<_>>()[0];
    let l2 = add_matrix_vars(&mut b, "L2", ny, n1);
    let n_vx = add_matrix_vars(&mut b, "Nvx", n1, nx);
    let n_psix = (mode == RecoveryMode::Residual).then(|| add_matrix_vars(&mut b, "Npsix", ny, nx));
    let b0 = (0..n1)
        .map(|i| b.add_var(format!("b0[{i}]"), Sign::Free))
        .collect::<Vec<_>>()[0];
    let b1 = (0..ny)
        .map(|i| b.add_var(format!("b1[{i}]"), Sign::Free))
        .collect::<Vec<_>>()[0];

    let layout = LearningLayout {
        shape,
        mode,
        q,
        lambda,
        pairs: pairs.len(),
        l2,
        n_vx,
        n_psix,
        b0,
        b1,
    };

    // coordinate offsets inside a block
    let ox = 0;
    let ot = nx;
    let oo = nx + n1;
    let ov = oo + 1;
    let oy = ov + n1;

    for (j, pair) in pairs.iter().enumerate() {
        let blk = b.add_block(shape.block_dim());
        let lam = lambda + j;
        let a = pair.input.shape();
        let bb = pair.input.offset();
        let c = pair.output.shape();
        let d = pair.output.offset();
        let ata = a.transpose() * a;
        let atb = a.transpose() * bb;

        for r in 0..nx {
            for s in r..nx {
                b.add_term(blk, lam, ox + r, ox + s, ata[(r, s)]);
            }
            b.add_term(blk, lam, ox + r, oo, atb[r]);
        }
        b.add_constant(blk, oo, oo, 1.0);
        b.add_term(blk, lam, oo, oo, bb.dot(bb) - 1.0);

        for i in 0..n1 {
            b.add_term(blk, q + i, ot + i, ot + i, 1.0);
            b.add_term(blk, q + i, ov + i, ov + i, 1.0);
            b.add_term(blk, b0 + i, oo, ov + i, 1.0);
            for col in 0..nx {
                b.add_term(blk, n_vx + i * nx + col, ox + col, ov + i, 1.0);
            }
        }

        for r in 0..ny {
            b.add_constant(blk, oy + r, oy + r, 1.0);
            b.add_constant(blk, oo, oy + r, d[r]);
            for k in 0..ny {
                let ck = c[(r, k)];
                // (C b̃¹)_r
                b.add_term(blk, b1 + k, oo, oy + r, ck);
                // (C L₂)[r, t] = Σ_k C[r,k] L₂[k,t]
                for t in 0..n1 {
                    b.add_term(blk, l2 + k * n1 + t, ot + t, oy + r, ck);
                }
                if let Some(np) = n_psix {
                    for col in 0..nx {
                        b.add_term(blk, np + k * nx + col, ox + col, oy + r, ck);
                    }
                }
            }
        }
    }
    Ok((b.build(), layout))
}

fn add_matrix_vars(b: &mut PencilBuilder, name: &str, rows: usize, cols: usize) -> usize {
    let mut first = None;
    for r in 0..rows {
        for c in 0..cols {
            let idx = b.add_var(format!("{name}[{r},{c}]"), Sign::Free);
            first.get_or_insert(idx);
        }
    }
    first.expect("non-empty matrix")
}

/// The pre-Schur matrix `M̃_X + M̃_Ψ + M̃_Y` over `[x; x̃; 1]` for pair
/// `j`, rebuilt from the solution with `M = Q₁⁻¹` and `Ñ_Ψx¹ = L₂Q₁⁻¹`.
pub fn pre_schur_matrix(vars: &LearningVariables, pair: &SpecPair, j: usize) -> Result<DMatrix<f64>> {
    vars.check_q()?;
    let n1 = vars.q.len();
    let nx = vars.n_vx.ncols();
    let ny = vars.b1.len();
    if j >= vars.lambda.len() {
        return Err(Error::InvalidArgument(format!("no multiplier for pair {j}")));
    }
    if pair.input.dim() != nx || pair.output.dim() != ny {
        return Err(Error::Dimension("pair does not match the learned shape".into()));
    }
    let lambda = vars.lambda[j].max(0.0);
    let dim = nx + n1 + 1;

    // M̃_X
    let mut ex = DMatrix::zeros(nx + 1, dim);
    ex.view_mut((0, 0), (nx, nx)).fill_with_identity();
    ex[(nx, dim - 1)] = 1.0;
    let mut total = congruence(&ex, &pair.input.input_qc(lambda)?);

    // M̃_Ψ with Q = diag(M, -M, 0) over [v; x̃; 1]
    let mut t_psi = DMatrix::zeros(2 * n1 + 1, dim);
    t_psi.view_mut((0, 0), (n1, nx)).copy_from(&vars.n_vx);
    t_psi.view_mut((0, dim - 1), (n1, 1)).copy_from(&vars.b0);
    t_psi.view_mut((n1, nx), (n1, n1)).fill_with_identity();
    t_psi[(2 * n1, dim - 1)] = 1.0;
    let mut q = DMatrix::zeros(2 * n1 + 1, 2 * n1 + 1);
    for i in 0..n1 {
        let m = 1.0 / vars.q[i];
        q[(i, i)] = m;
        q[(n1 + i, n1 + i)] = -m;
    }
    total += congruence(&t_psi, &q);

    // M̃_Y
    let n_psix = vars.n_psix.clone().unwrap_or_else(|| DMatrix::zeros(ny, nx));
    let mut t_y = DMatrix::zeros(nx + ny + 1, dim);
    t_y.view_mut((0, 0), (nx, nx)).fill_with_identity();
    t_y.view_mut((nx, 0), (ny, nx)).copy_from(&n_psix);
    t_y.view_mut((nx, nx), (ny, n1)).copy_from(&vars.n_psix1()?);
    t_y.view_mut((nx, dim - 1), (ny, 1)).copy_from(&vars.b1);
    t_y[(nx + ny, dim - 1)] = 1.0;
    total += congruence(&t_y, &pair.output.output_spec(nx)?);
    Ok(total)
}

/// Largest eigenvalue of [`pre_schur_matrix`]; nonpositive means the
/// learned weights satisfy the fixed-network condition for pair `j`.
pub fn schur_check(vars: &LearningVariables, pair: &SpecPair, j: usize) -> Result<f64> {
    let m = pre_schur_matrix(vars, pair, j)?;
    let eig = sym_eigen_unchecked(&m);
    Ok(eig.values[eig.values.len() - 1])
}
