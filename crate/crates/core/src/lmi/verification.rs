//! Verification pencils for fixed networks.
//!
//! Both constructions encode "`M_X + M_Y + M_Ψ ⪯ 0`" as `F(λ, μ) ⪰ 0` with
//! `F = -(M_X + M_Y + M_Ψ)`, so a positive minimum eigenvalue is a
//! certificate.

use nalgebra::{DMatrix, DVector};

use super::pencil::{AffinePencil, PencilBuilder, Sign};
use crate::error::{Error, Result};
use crate::linalg::congruence;
use crate::loop_transform::{transform, TransformedForm};
use crate::model::Network;
use crate::sets::{ibp, local_sector, Ellipsoid, SectorBounds, SpecPair};

/// Stacked local sectors of every hidden neuron over the bounding box of
/// the input ellipsoid.
pub fn local_sectors(net: &Network, input: &Ellipsoid) -> Result<SectorBounds> {
    let boxed = input.bounding_box()?;
    let bounds = ibp(net, &boxed)?;
    let parts = bounds
        .iter()
        .map(|b| local_sector(net.activation(), b))
        .collect::<Result<Vec<_>>>()?;
    Ok(SectorBounds::stack(&parts))
}

fn check_pair_dims(net: &Network, pair: &SpecPair) -> Result<()> {
    if pair.input.dim() != net.input_dim() || pair.output.dim() != net.output_dim() {
        return Err(Error::Dimension(format!(
            "network maps R^{} -> R^{} but the pair is R^{} -> R^{}",
            net.input_dim(),
            net.output_dim(),
            pair.input.dim(),
            pair.output.dim()
        )));
    }
    Ok(())
}

/// Selector `[x; 1]` out of `[x; hidden; 1]`.
fn input_selector(nx: usize, dim: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(nx + 1, dim);
    e.view_mut((0, 0), (nx, nx)).fill_with_identity();
    e[(nx, dim - 1)] = 1.0;
    e
}

/// `[x; y; 1]` as a linear map of `[x; hidden; 1]`, with
/// `y = out_x·x + out_h·hidden + out_b`.
fn output_map(out_x: &DMatrix<f64>, out_h: &DMatrix<f64>, out_b: &DVector<f64>) -> DMatrix<f64> {
    let nx = out_x.ncols();
    let n = out_h.ncols();
    let ny = out_x.nrows();
    let dim = nx + n + 1;
    let mut t = DMatrix::zeros(nx + ny + 1, dim);
    t.view_mut((0, 0), (nx, nx)).fill_with_identity();
    t.view_mut((nx, 0), (ny, nx)).copy_from(out_x);
    t.view_mut((nx, nx), (ny, n)).copy_from(out_h);
    t.view_mut((nx, dim - 1), (ny, 1)).copy_from(out_b);
    t[(nx + ny, dim - 1)] = 1.0;
    t
}

fn add_input_and_output(
    b: &mut PencilBuilder,
    block: usize,
    lambda: usize,
    pair: &SpecPair,
    out_map: &DMatrix<f64>,
    dim: usize,
) -> Result<()> {
    let nx = pair.input.dim();
    let ex = input_selector(nx, dim);
    let p = pair.input.input_qc(1.0)?;
    b.add_term_dense(block, lambda, &-congruence(&ex, &p));
    let s = pair.output.output_spec(nx)?;
    b.add_constant_dense(block, &-congruence(out_map, &s));
    Ok(())
}

/// Fixed-network condition for one hidden layer over `[x; x¹; 1]`, with
/// the activation abstracted by the sector `sec`. Variables: `lambda`
/// (input multiplier) then `mu[i]` per hidden neuron, all nonnegative.
pub fn build_verification(net: &Network, pair: &SpecPair, sec: &SectorBounds) -> Result<AffinePencil> {
    check_pair_dims(net, pair)?;
    if net.hidden_layers() != 1 {
        return Err(Error::Unsupported(format!(
            "single-hidden-layer construction used on a network with {} hidden layers",
            net.hidden_layers()
        )));
    }
    let nx = net.input_dim();
    let n1 = net.hidden_neurons();
    if sec.len() != n1 {
        return Err(Error::Dimension(format!(
            "sector has {} entries, expected {n1}",
            sec.len()
        )));
    }
    let dim = nx + n1 + 1;
    let (first, last) = (&net.layers()[0], &net.layers()[1]);

    let mut b = PencilBuilder::new();
    let lambda = b.add_var("lambda", Sign::Nonneg);
    let mu: Vec<usize> = (0..n1).map(|i| b.add_var(format!("mu[{i}]"), Sign::Nonneg)).collect();
    let block = b.add_block(dim);

    let skip = net
        .skip()
        .cloned()
        .unwrap_or_else(|| DMatrix::zeros(net.output_dim(), nx));
    let out_map = output_map(&skip, &last.weight, &last.bias);
    add_input_and_output(&mut b, block, lambda, pair, &out_map, dim)?;

    // [v; x¹; 1] = T_Ψ [x; x¹; 1]
    let mut t_psi = DMatrix::zeros(2 * n1, dim);
    t_psi.view_mut((0, 0), (n1, nx)).copy_from(&first.weight);
    t_psi.view_mut((0, dim - 1), (n1, 1)).copy_from(&first.bias);
    t_psi.view_mut((n1, nx), (n1, n1)).fill_with_identity();
    for (i, &var) in mu.iter().enumerate() {
        let mut unit = DVector::zeros(n1);
        unit[i] = 1.0;
        let q = sec.qc(&unit)?;
        b.add_term_dense(block, var, &-congruence(&t_psi, &q));
    }
    Ok(b.build())
}

/// Multi-layer condition over `[x; x̃; 1]` after loop-transforming every
/// hidden layer with `sectors` (stacked, one entry per hidden neuron). The
/// normalized nonlinearity satisfies `μᵢ(vᵢ² - x̃ᵢ²) ≥ 0`, i.e.
/// `Q = diag(M, -M, 0)` over `[v; x̃; 1]`. Variables as in
/// [`build_verification`].
pub fn build_verification_multilayer(
    net: &Network,
    pair: &SpecPair,
    sectors: &SectorBounds,
) -> Result<(AffinePencil, TransformedForm)> {
    check_pair_dims(net, pair)?;
    let iso = net.without_skip().isolate()?;
    let tf = transform(&iso, sectors)?;
    let nx = net.input_dim();
    let n = iso.hidden_neurons();
    let dim = nx + n + 1;

    let mut b = PencilBuilder::new();
    let lambda = b.add_var("lambda", Sign::Nonneg);
    let mu: Vec<usize> = (0..n).map(|i| b.add_var(format!("mu[{i}]"), Sign::Nonneg)).collect();
    let block = b.add_block(dim);

    let mut out_x = tf.n_psix.clone();
    if let Some(d) = net.skip() {
        out_x += d;
    }
    let out_map = output_map(&out_x, &tf.n_psix1, &tf.b1);
    add_input_and_output(&mut b, block, lambda, pair, &out_map, dim)?;

    for (i, &var) in mu.iter().enumerate() {
        // -(aᵢ aᵢᵀ - e e ᵀ) with aᵢ the i-th row of [Ñ_vx, Ñ_vx¹, b̃⁰]
        let mut a = DVector::zeros(dim);
        a.rows_mut(0, nx).copy_from(&tf.n_vx.row(i).transpose());
        a.rows_mut(nx, n).copy_from(&tf.n_vx1.row(i).transpose());
        a[dim - 1] = tf.b0[i];
        let mut coeff = -(&a * a.transpose());
        coeff[(nx + i, nx + i)] += 1.0;
        b.add_term_dense(block, var, &coeff);
    }
    Ok((b.build(), tf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Activation;
    use crate::sets::Role;

    fn ball(c: &[f64], r: f64, role: Role) -> Ellipsoid {
        Ellipsoid::ball(c, r, role).unwrap()
    }

    #[test]
    fn evaluation_at_zero_is_the_constant_block() {
        let net = Network::two_layer(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]),
            DVector::from_vec(vec![0.1, 0.2]),
            DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.3]),
            DVector::from_vec(vec![0.0, 0.1]),
            Activation::Tanh,
        )
        .unwrap();
        let pair = SpecPair::new(
            ball(&[0.0, 0.0], 1.0, Role::Input),
            ball(&[0.0, 0.0], 1.0, Role::Output),
        )
        .unwrap();
        let sec = local_sectors(&net, &pair.input).unwrap();
        let p = build_verification(&net, &pair, &sec).unwrap();
        p.validate().unwrap();
        assert_eq!(p.num_vars(), 3);
        let f0 = p.evaluate(&[0.0; 3]).unwrap().remove(0);
        assert_eq!(f0, p.blocks[0].constant);
        // -M_Y only: the corner is -(dᵀd - 1 + ‖b¹‖² terms) and the x block is zero.
        assert_eq!(f0.view((0, 0), (2, 2)).amax(), 0.0);
    }

    #[test]
    fn multilayer_rejects_mismatched_pair() {
        let net = Network::two_layer(
            DMatrix::zeros(3, 2),
            DVector::zeros(3),
            DMatrix::zeros(1, 3),
            DVector::zeros(1),
            Activation::Tanh,
        )
        .unwrap();
        let pair = SpecPair::new(
            ball(&[0.0, 0.0], 1.0, Role::Input),
            ball(&[0.0, 0.0], 1.0, Role::Output),
        )
        .unwrap();
        let sec = SectorBounds::uniform(3, 0.0, 1.0).unwrap();
        assert!(matches!(
            build_verification_multilayer(&net, &pair, &sec),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            build_verification(&net, &pair, &sec),
            Err(Error::Dimension(_))
        ));
    }
}
