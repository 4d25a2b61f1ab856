//! Loop transformation.
//!
//! Given the isolated form `(N, b)` and a sector `[Aφ, Bφ]`, substitute
//!
//! ```text
//! x_φ = (Bφ - Aφ)/2 · x̃ + (Bφ + Aφ)/2 · v_φ
//! ```
//!
//! so the new nonlinearity `x̃ = φ̃(v_φ)` lies in the sector `[-1, 1]`. The
//! weights seen by the LMI are then `(Ñ, b̃)`. For a single hidden layer the
//! map is exactly invertible, which is how learned weights are recovered.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::checked_inverse;
use crate::model::{prefix_offsets, Activation, IsolatedForm, Layer, Network};
use crate::sets::SectorBounds;

/// Entries this small are treated as structural zeros when checking
/// block patterns of computed matrices.
const STRUCTURAL_ZERO: f64 = 1e-12;

/// How learned transformed weights are mapped back to a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoveryMode {
    /// Symmetric sector, `Ñ_Ψx = 0`: recovers a pure two-layer network.
    #[default]
    Strict,
    /// General sector, free `Ñ_Ψx`: recovers a two-layer network plus an
    /// affine bypass `D x`.
    Residual,
}

impl std::str::FromStr for RecoveryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(RecoveryMode::Strict),
            "residual" => Ok(RecoveryMode::Residual),
            other => Err(Error::Parse(format!("unknown mode {other:?} (strict|residual)"))),
        }
    }
}

impl std::fmt::Display for RecoveryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecoveryMode::Strict => "strict",
            RecoveryMode::Residual => "residual",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformedForm {
    pub n_vx: DMatrix<f64>,
    pub n_vx1: DMatrix<f64>,
    pub n_psix: DMatrix<f64>,
    pub n_psix1: DMatrix<f64>,
    pub b0: DVector<f64>,
    pub b1: DVector<f64>,
    pub sector: SectorBounds,
    pub hidden: Vec<usize>,
}

impl TransformedForm {
    pub fn input_dim(&self) -> usize {
        self.n_vx.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.n_psix.nrows()
    }

    pub fn hidden_neurons(&self) -> usize {
        self.n_vx.nrows()
    }
}

struct SectorParts {
    half_diff: DVector<f64>,
    half_sum: DVector<f64>,
}

fn sector_parts(sec: &SectorBounds) -> SectorParts {
    SectorParts {
        half_diff: (&sec.beta - &sec.alpha) * 0.5,
        half_sum: (&sec.beta + &sec.alpha) * 0.5,
    }
}

fn scale_columns(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

/// Apply the loop transformation to `(N, b)` under sector `sec`.
pub fn transform(iso: &IsolatedForm, sec: &SectorBounds) -> Result<TransformedForm> {
    let n = iso.hidden_neurons();
    if sec.len() != n {
        return Err(Error::Dimension(format!(
            "sector has {} entries, network has {n} hidden neurons",
            sec.len()
        )));
    }
    let parts = sector_parts(sec);
    let c1 = scale_columns(&iso.n_vx1, &parts.half_diff);
    let c2 = scale_columns(&iso.n_vx1, &parts.half_sum);
    let c3 = scale_columns(&iso.n_psix1, &parts.half_diff);
    let c4 = scale_columns(&iso.n_psix1, &parts.half_sum);

    let inv = checked_inverse(&(DMatrix::identity(n, n) - c2), "I - C2")?;
    let inv_nvx = &inv * &iso.n_vx;
    let inv_c1 = &inv * &c1;
    let inv_b = &inv * &iso.b_phi;

    Ok(TransformedForm {
        n_psix: &iso.n_psix + &c4 * &inv_nvx,
        n_psix1: &c3 + &c4 * &inv_c1,
        // C4 multiplies b⁰ here, following the substitution of v⁰ into Ψ.
        b1: &c4 * &inv_b + &iso.b_out,
        n_vx: inv_nvx,
        n_vx1: inv_c1,
        b0: inv_b,
        sector: sec.clone(),
        hidden: iso.hidden.clone(),
    })
}

/// Normalized nonlinearity `φ̃(v) = 2(Bφ - Aφ)⁻¹(φ(v) - (Aφ + Bφ)/2 · v)`,
/// coordinate `i`. Degenerate sectors (α = β) contribute nothing.
pub fn normalized_activation(act: Activation, sec: &SectorBounds, i: usize, v: f64) -> f64 {
    let (a, b) = (sec.alpha[i], sec.beta[i]);
    let width = b - a;
    if width <= 0.0 {
        return 0.0;
    }
    2.0 * (act.apply(v) - 0.5 * (a + b) * v) / width
}

/// Evaluate the transformed representation. `Ñ_vx¹` must be strictly block
/// lower triangular (always true for the transform of a feed-forward net),
/// so the implicit loop unrolls layer by layer.
pub fn eval_transformed(tf: &TransformedForm, act: Activation, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != tf.input_dim() {
        return Err(Error::Dimension(format!(
            "input has length {}, expected {}",
            x.len(),
            tf.input_dim()
        )));
    }
    let n = tf.hidden_neurons();
    let offsets = prefix_offsets(&tf.hidden);
    let scale = tf.n_vx1.amax().max(1.0);
    for (k, &size) in tf.hidden.iter().enumerate() {
        for i in offsets[k]..offsets[k] + size {
            for j in offsets[k]..n {
                if tf.n_vx1[(i, j)].abs() > STRUCTURAL_ZERO * scale {
                    return Err(Error::Unsupported(format!(
                        "implicit loop: Ñ_vx¹[{i},{j}] = {:e} is not strictly block lower triangular",
                        tf.n_vx1[(i, j)]
                    )));
                }
            }
        }
    }

    let base = &tf.n_vx * x + &tf.b0;
    let mut xt = DVector::zeros(n);
    for (k, &size) in tf.hidden.iter().enumerate() {
        let start = offsets[k];
        for i in start..start + size {
            let mut v = base[i];
            for j in 0..start {
                v += tf.n_vx1[(i, j)] * xt[j];
            }
            xt[i] = normalized_activation(act, &tf.sector, i, v);
        }
    }
    Ok(&tf.n_psix * x + &tf.n_psix1 * xt + &tf.b1)
}

/// Recover network weights from a single-hidden-layer transformed form.
pub fn inverse_two_layer(
    tf: &TransformedForm,
    sec: &SectorBounds,
    mode: RecoveryMode,
    act: Activation,
) -> Result<Network> {
    if tf.hidden.len() != 1 {
        return Err(Error::Unsupported(format!(
            "exact recovery needs one hidden layer, got {}",
            tf.hidden.len()
        )));
    }
    if sec.len() != tf.hidden_neurons() {
        return Err(Error::Dimension("sector length does not match hidden width".into()));
    }
    let nvx1_norm = tf.n_vx1.norm();
    if nvx1_norm > STRUCTURAL_ZERO {
        return Err(Error::Precondition(format!(
            "Ñ_vx¹ must vanish, ‖Ñ_vx¹‖ = {nvx1_norm:e}"
        )));
    }
    let parts = sector_parts(sec);
    let w0 = tf.n_vx.clone();
    let b0 = tf.b0.clone();

    match mode {
        RecoveryMode::Strict => {
            if !sec.is_symmetric() {
                return Err(Error::Precondition("strict recovery needs a symmetric sector".into()));
            }
            let npsix_norm = tf.n_psix.norm();
            if npsix_norm > STRUCTURAL_ZERO {
                return Err(Error::Precondition(format!(
                    "strict recovery needs Ñ_Ψx = 0, ‖Ñ_Ψx‖ = {npsix_norm:e}"
                )));
            }
            let beta_inv = invert_diagonal(&sec.beta, "B_phi")?;
            let w1 = scale_columns(&tf.n_psix1, &beta_inv);
            Network::two_layer(w0, b0, w1, tf.b1.clone(), act)
        }
        RecoveryMode::Residual => {
            let diff = &sec.beta - &sec.alpha;
            let diff_inv = invert_diagonal(&diff, "B_phi - A_phi")?;
            let w1 = scale_columns(&tf.n_psix1, &diff_inv) * 2.0;
            // K = Ñ_Ψx¹ (Bφ - Aφ)⁻¹ (Bφ + Aφ)
            let k_scale = DVector::from_fn(diff.len(), |i, _| diff_inv[i] * 2.0 * parts.half_sum[i]);
            let k = scale_columns(&tf.n_psix1, &k_scale);
            let skip = &tf.n_psix - &k * &tf.n_vx;
            let b1 = &tf.b1 - &k * &tf.b0;
            let skip = if skip.iter().all(|&v| v == 0.0) {
                None
            } else {
                Some(skip)
            };
            Network::with_skip(vec![Layer::new(w0, b0)?, Layer::new(w1, b1)?], act, skip)
        }
    }
}

fn invert_diagonal(d: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let max = d.amax().max(f64::MIN_POSITIVE);
    for (i, &v) in d.iter().enumerate() {
        if v.abs() <= 1e-12 * max || v == 0.0 {
            return Err(Error::Singular(format!("{what} has a zero entry at {i}")));
        }
    }
    Ok(d.map(|v| 1.0 / v))
}
