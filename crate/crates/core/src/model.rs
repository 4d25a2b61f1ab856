//! Feed-forward networks and the block matrices the LMI constructions use.
//!
//! A network with `l` hidden layers computes
//!
//! ```text
//! x⁰ = x,   xᵏ⁺¹ = φ(Wᵏ xᵏ + bᵏ)  (k < l),   Ψ(x) = Wˡ xˡ + bˡ (+ D x)
//! ```
//!
//! where `D` is an optional affine bypass produced by residual-mode recovery.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matrix_from_rows, matrix_to_rows, vector_to_vec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    #[serde(rename = "relu")]
    ReLU,
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::ReLU => v.max(0.0),
            Activation::Identity => v,
        }
    }

    /// Slope at the origin; used for the sector ratio ψ(v)/v at v = 0.
    pub fn slope_at_zero(self) -> f64 {
        match self {
            Activation::Tanh | Activation::Identity => 1.0,
            // ReLU has no derivative at 0; both one-sided slopes lie in [0, 1].
            Activation::ReLU => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::ReLU => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::ReLU),
            "identity" | "linear" => Ok(Activation::Identity),
            "sigmoid" => Err(Error::Unsupported(
                "sigmoid is not sector bounded through the origin".into(),
            )),
            other => Err(Error::Parse(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::Dimension(format!(
                "layer weight has {} rows but bias has length {}",
                weight.nrows(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// Feed-forward network; the last layer is affine, every earlier layer is
/// followed by the activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    activation: Activation,
    skip: Option<DMatrix<f64>>,
}

impl Network {
    pub fn new(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        Self::with_skip(layers, activation, None)
    }

    pub fn with_skip(layers: Vec<Layer>, activation: Activation, skip: Option<DMatrix<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].inputs() != pair[0].outputs() {
                return Err(Error::Dimension(format!(
                    "layer {} expects {} inputs but layer {} produces {}",
                    k + 1,
                    pair[1].inputs(),
                    k,
                    pair[0].outputs()
                )));
            }
        }
        let nx = layers[0].inputs();
        let ny = layers[layers.len() - 1].outputs();
        if let Some(d) = &skip {
            if d.shape() != (ny, nx) {
                return Err(Error::Dimension(format!(
                    "skip matrix is {}x{}, expected {ny}x{nx}",
                    d.nrows(),
                    d.ncols()
                )));
            }
        }
        Ok(Self {
            layers,
            activation,
            skip,
        })
    }

    /// Two-layer network `W¹ φ(W⁰x + b⁰) + b¹`.
    pub fn two_layer(
        w0: DMatrix<f64>,
        b0: DVector<f64>,
        w1: DMatrix<f64>,
        b1: DVector<f64>,
        activation: Activation,
    ) -> Result<Self> {
        Self::new(vec![Layer::new(w0, b0)?, Layer::new(w1, b1)?], activation)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn skip(&self) -> Option<&DMatrix<f64>> {
        self.skip.as_ref()
    }

    /// Number of hidden (activated) layers `l`.
    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Sizes n₁..n_l of the hidden layers.
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::outputs)
            .collect()
    }

    pub fn hidden_neurons(&self) -> usize {
        self.hidden_sizes().iter().sum()
    }

    /// The same network with the bypass dropped.
    pub fn without_skip(&self) -> Network {
        Network {
            layers: self.layers.clone(),
            activation: self.activation,
            skip: None,
        }
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        let (last, hidden) = self.layers.split_last().expect("non-empty");
        let mut h = x.clone();
        for layer in hidden {
            let mut v = &layer.weight * &h + &layer.bias;
            v.apply(|t| *t = self.activation.apply(*t));
            h = v;
        }
        let mut y = &last.weight * h + &last.bias;
        if let Some(d) = &self.skip {
            y += d * x;
        }
        y
    }

    /// Pre-activation vectors v⁰..v^{l-1} along the trajectory of `x`.
    pub fn pre_activations(&self, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut out = Vec::with_capacity(self.hidden_layers());
        let mut h = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            let v = &layer.weight * &h + &layer.bias;
            h = v.map(|t| self.activation.apply(t));
            out.push(v);
        }
        Ok(out)
    }

    /// Decompose into the implicit form `[v_φ; Ψ] = N [x; x_φ] + [b_φ; bˡ]`,
    /// `x_φ = φ(v_φ)`.
    pub fn isolate(&self) -> Result<IsolatedForm> {
        if self.skip.is_some() {
            return Err(Error::Unsupported(
                "isolation is defined for pure feed-forward networks (skip present)".into(),
            ));
        }
        if self.hidden_layers() == 0 {
            return Err(Error::Unsupported("network has no hidden layer".into()));
        }
        let nx = self.input_dim();
        let ny = self.output_dim();
        let hidden = self.hidden_sizes();
        let n: usize = hidden.iter().sum();
        let offsets = prefix_offsets(&hidden);
        let l = self.hidden_layers();

        let mut n_vx = DMatrix::zeros(n, nx);
        let mut n_vx1 = DMatrix::zeros(n, n);
        let n_psix = DMatrix::zeros(ny, nx);
        let mut n_psix1 = DMatrix::zeros(ny, n);
        let mut b_phi = DVector::zeros(n);

        n_vx.view_mut((0, 0), (hidden[0], nx)).copy_from(&self.layers[0].weight);
        for k in 1..l {
            // v^k = W^k x^k + b^k, with x^k the (k-1)-th block of x_φ.
            n_vx1
                .view_mut((offsets[k], offsets[k - 1]), (hidden[k], hidden[k - 1]))
                .copy_from(&self.layers[k].weight);
        }
        n_psix1
            .view_mut((0, offsets[l - 1]), (ny, hidden[l - 1]))
            .copy_from(&self.layers[l].weight);
        for k in 0..l {
            b_phi.rows_mut(offsets[k], hidden[k]).copy_from(&self.layers[k].bias);
        }

        Ok(IsolatedForm {
            n_vx,
            n_vx1,
            n_psix,
            n_psix1,
            b_phi,
            b_out: self.layers[l].bias.clone(),
            input_dim: nx,
            hidden,
            output_dim: ny,
        })
    }

    /// Stacked matrices for the state `[x⁰; …; xˡ]`.
    pub fn multilayer_blocks(&self) -> Result<MultiLayerBlocks> {
        if self.skip.is_some() {
            return Err(Error::Unsupported(
                "multi-layer blocks are defined for pure feed-forward networks".into(),
            ));
        }
        let l = self.hidden_layers();
        if l == 0 {
            return Err(Error::Unsupported("network has no hidden layer".into()));
        }
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.hidden_sizes());
        let offsets = prefix_offsets(&sizes);
        let total: usize = sizes.iter().sum();
        let n = total - sizes[0];

        let mut a = DMatrix::zeros(n, total);
        let mut b = DMatrix::zeros(n, total);
        let mut bias = DVector::zeros(n);
        for k in 0..l {
            let row = offsets[k + 1] - sizes[0];
            a.view_mut((row, offsets[k]), (sizes[k + 1], sizes[k]))
                .copy_from(&self.layers[k].weight);
            b.view_mut((row, offsets[k + 1]), (sizes[k + 1], sizes[k + 1]))
                .fill_with_identity();
            bias.rows_mut(row, sizes[k + 1]).copy_from(&self.layers[k].bias);
        }
        let selectors = (0..=l)
            .map(|k| {
                let mut e = DMatrix::zeros(sizes[k], total);
                e.view_mut((0, offsets[k]), (sizes[k], sizes[k])).fill_with_identity();
                e
            })
            .collect();
        Ok(MultiLayerBlocks { a, b, bias, selectors })
    }

    pub fn to_file_format(&self) -> WeightsFile {
        WeightsFile {
            activation: self.activation,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: matrix_to_rows(&l.weight),
                    b: vector_to_vec(&l.bias),
                })
                .collect(),
            skip: self.skip.as_ref().map(matrix_to_rows),
        }
    }

    pub fn from_file_format(file: &WeightsFile) -> Result<Self> {
        let layers = file
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let w = matrix_from_rows(&l.w, &format!("layers[{k}].W"))?;
                Layer::new(w, DVector::from_vec(l.b.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let skip = file.skip.as_ref().map(|d| matrix_from_rows(d, "skip")).transpose()?;
        Self::with_skip(layers, file.activation, skip)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_format()).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: WeightsFile = serde_json::from_str(s)?;
        Self::from_file_format(&file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json();
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// On-disk weights layout; field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub activation: Activation,
    pub layers: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// `N = [[N_vx, N_vx¹], [N_Ψx, N_Ψx¹]]` together with the stacked biases.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolatedForm {
    pub n_vx: DMatrix<f64>,
    pub n_vx1: DMatrix<f64>,
    pub n_psix: DMatrix<f64>,
    pub n_psix1: DMatrix<f64>,
    pub b_phi: DVector<f64>,
    pub b_out: DVector<f64>,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl IsolatedForm {
    pub fn hidden_neurons(&self) -> usize {
        self.hidden.iter().sum()
    }

    /// The full `N` matrix.
    pub fn n_matrix(&self) -> DMatrix<f64> {
        let n = self.hidden_neurons();
        let (nx, ny) = (self.input_dim, self.output_dim);
        let mut m = DMatrix::zeros(n + ny, nx + n);
        m.view_mut((0, 0), (n, nx)).copy_from(&self.n_vx);
        m.view_mut((0, nx), (n, n)).copy_from(&self.n_vx1);
        m.view_mut((n, 0), (ny, nx)).copy_from(&self.n_psix);
        m.view_mut((n, nx), (ny, n)).copy_from(&self.n_psix1);
        m
    }

    /// Solve the implicit equations layer by layer. `N_vx¹` is strictly
    /// block lower triangular, so each layer only needs earlier ones.
    pub fn evaluate(&self, activation: Activation, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "input has length {}, expected {}",
                x.len(),
                self.input_dim
            )));
        }
        let n = self.hidden_neurons();
        let offsets = prefix_offsets(&self.hidden);
        let base = &self.n_vx * x + &self.b_phi;
        let mut x_phi = DVector::zeros(n);
        for (k, &size) in self.hidden.iter().enumerate() {
            let start = offsets[k];
            for i in start..start + size {
                let mut v = base[i];
                for j in 0..start {
                    v += self.n_vx1[(i, j)] * x_phi[j];
                }
                x_phi[i] = activation.apply(v);
            }
        }
        Ok(&self.n_psix * x + &self.n_psix1 * x_phi + &self.b_out)
    }
}

/// Stacked matrices `A`, `B`, `b` and entry selectors `Eᵏ` for the state
/// `[x⁰; …; xˡ]`: the stacked pre-activations are `A·x + b` and `B·x`
/// selects `[x¹; …; xˡ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLayerBlocks {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub selectors: Vec<DMatrix<f64>>,
}

pub(crate) fn prefix_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(sizes.len() + 1);
    let mut acc = 0;
    for &s in sizes {
        offsets.push(acc);
        acc += s;
    }
    offsets.push(acc);
    offsets
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net_2_3_3_2() -> Network {
        let w0 = DMatrix::from_row_slice(3, 2, &[0.5, -0.2, 0.1, 0.3, -0.4, 0.7]);
        let w1 = DMatrix::from_row_slice(3, 3, &[0.2, 0.1, -0.3, 0.6, -0.5, 0.2, 0.1, 0.1, 0.1]);
        let w2 = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.5, 0.3, 0.2, -0.7]);
        Network::new(
            vec![
                Layer::new(w0, DVector::from_vec(vec![0.1, -0.2, 0.3])).unwrap(),
                Layer::new(w1, DVector::from_vec(vec![0.0, 0.05, -0.1])).unwrap(),
                Layer::new(w2, DVector::from_vec(vec![0.2, -0.4])).unwrap(),
            ],
            Activation::Tanh,
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_give_output_bias() {
        let net = Network::two_layer(
            DMatrix::zeros(4, 3),
            DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
            DMatrix::zeros(2, 4),
            DVector::from_vec(vec![0.25, -7.0]),
            Activation::Tanh,
        )
        .unwrap();
        let y = net.forward(&DVector::from_vec(vec![3.0, -1.0, 9.0])).unwrap();
        assert_eq!(y, DVector::from_vec(vec![0.25, -7.0]));
    }

    #[test]
    fn identity_tanh_at_origin() {
        let net = Network::two_layer(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            Activation::Tanh,
        )
        .unwrap();
        assert_eq!(net.forward(&DVector::zeros(2)).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let net = net_2_3_3_2();
        assert!(matches!(net.forward(&DVector::zeros(3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn mismatched_layers_rejected() {
        let r = Network::two_layer(
            DMatrix::zeros(4, 3),
            DVector::zeros(4),
            DMatrix::zeros(2, 5),
            DVector::zeros(2),
            Activation::Tanh,
        );
        assert!(r.is_err());
        let r = Network::with_skip(
            vec![
                Layer::new(DMatrix::zeros(4, 3), DVector::zeros(4)).unwrap(),
                Layer::new(DMatrix::zeros(2, 4), DVector::zeros(2)).unwrap(),
            ],
            Activation::Tanh,
            Some(DMatrix::zeros(3, 2)),
        );
        assert!(r.is_err());
    }

    #[test]
    fn isolate_single_hidden_layer_is_block_diagonal() {
        let w0 = DMatrix::from_fn(10, 2, |i, j| (i as f64 + 1.0) * 0.1 - j as f64 * 0.3);
        let w1 = DMatrix::from_fn(2, 10, |i, j| (j as f64 - 4.5) * 0.05 + i as f64 * 0.2);
        let net = Network::two_layer(
            w0.clone(),
            DVector::zeros(10),
            w1.clone(),
            DVector::zeros(2),
            Activation::Tanh,
        )
        .unwrap();
        let iso = net.isolate().unwrap();
        assert_eq!(iso.n_vx, w0);
        assert_eq!(iso.n_psix1, w1);
        assert!(iso.n_vx1.iter().all(|&v| v == 0.0));
        assert!(iso.n_psix.iter().all(|&v| v == 0.0));
        let n = iso.n_matrix();
        assert_eq!(n.shape(), (12, 12));
    }

    #[test]
    fn isolate_identity_net_reproduces_forward() {
        let net = Network::two_layer(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            Activation::Identity,
        )
        .unwrap();
        let iso = net.isolate().unwrap();
        assert_eq!(iso.n_vx, DMatrix::identity(2, 2));
        assert_eq!(iso.n_psix1, DMatrix::identity(2, 2));
        let x = DVector::from_vec(vec![0.3, -1.7]);
        assert_eq!(iso.evaluate(Activation::Identity, &x).unwrap(), x);
    }

    #[test]
    fn isolate_rejects_skip() {
        let net = Network::with_skip(
            vec![
                Layer::new(DMatrix::zeros(3, 2), DVector::zeros(3)).unwrap(),
                Layer::new(DMatrix::zeros(2, 3), DVector::zeros(2)).unwrap(),
            ],
            Activation::Tanh,
            Some(DMatrix::identity(2, 2)),
        )
        .unwrap();
        assert!(matches!(net.isolate(), Err(Error::Unsupported(_))));
    }

    #[test]
    fn isolate_two_hidden_layers_places_w1_subdiagonal() {
        let net = net_2_3_3_2();
        let iso = net.isolate().unwrap();
        let w1 = &net.layers()[1].weight;
        assert_eq!(iso.n_vx1.view((3, 0), (3, 3)).into_owned(), *w1);
        // strictly block lower triangular
        assert!(iso.n_vx1.view((0, 0), (3, 6)).iter().all(|&v| v == 0.0));
        assert!(iso.n_vx1.view((3, 3), (3, 3)).iter().all(|&v| v == 0.0));
        for x in [[0.3, -0.9], [1.5, 2.0], [-0.1, 0.0]] {
            let x = DVector::from_vec(x.to_vec());
            let d = iso.evaluate(Activation::Tanh, &x).unwrap() - net.forward(&x).unwrap();
            assert!(d.amax() <= 1e-12);
        }
    }

    #[test]
    fn multilayer_blocks_single_hidden() {
        let net = Network::two_layer(
            DMatrix::from_element(10, 2, 0.5),
            DVector::zeros(10),
            DMatrix::from_element(2, 10, 0.1),
            DVector::zeros(2),
            Activation::Tanh,
        )
        .unwrap();
        let blk = net.multilayer_blocks().unwrap();
        assert_eq!(blk.a.shape(), (10, 12));
        assert!(blk.a.view((0, 0), (10, 2)).iter().all(|&v| v == 0.5));
        assert!(blk.a.view((0, 2), (10, 10)).iter().all(|&v| v == 0.0));
        let mut expected_b = DMatrix::zeros(10, 12);
        expected_b.view_mut((0, 2), (10, 10)).fill_with_identity();
        assert_eq!(blk.b, expected_b);
    }

    #[test]
    fn multilayer_blocks_two_hidden_layout() {
        let net = net_2_3_3_2();
        let blk = net.multilayer_blocks().unwrap();
        assert_eq!(blk.a.shape(), (6, 8));
        assert_eq!(blk.a.view((0, 0), (3, 2)).into_owned(), net.layers()[0].weight);
        assert_eq!(blk.a.view((3, 2), (3, 3)).into_owned(), net.layers()[1].weight);
        let stacked = DVector::from_fn(8, |i, _| i as f64 * 1.5 - 2.0);
        assert_eq!(&blk.selectors[0] * &stacked, stacked.rows(0, 2).into_owned());
        assert_eq!(&blk.b * &stacked, stacked.rows(2, 6).into_owned());
    }

    #[test]
    fn weights_json_roundtrip_and_field_order() {
        let net = net_2_3_3_2();
        let s = net.to_json();
        let a = s.find("\"activation\"").unwrap();
        let l = s.find("\"layers\"").unwrap();
        assert!(a < l);
        assert!(!s.contains("skip"));
        assert_eq!(Network::from_json(&s).unwrap(), net);
    }

    #[test]
    fn sigmoid_rejected() {
        assert!(matches!("sigmoid".parse::<Activation>(), Err(Error::Unsupported(_))));
        let s = r#"{"activation":"sigmoid","layers":[]}"#;
        assert!(Network::from_json(s).is_err());
    }
}
