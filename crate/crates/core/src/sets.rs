//! Ellipsoids, their quadratic constraints, interval bounds and sector
//! abstractions of the activation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::eigen::check_symmetric;
use crate::error::{Error, Result};
use crate::linalg::{checked_inverse, matrix_from_rows, matrix_to_rows, vector_to_vec};
use crate::model::{Activation, Network};

/// Points with `‖shape·p + offset‖ ≤ 1 + MEMBERSHIP_TOL` count as members.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Outward slack added to computed local sectors.
pub const SECTOR_RELAXATION: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Input,
    Output,
}

/// `{p : ‖shape·p + offset‖₂ ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    shape: DMatrix<f64>,
    offset: DVector<f64>,
    role: Role,
}

impl Ellipsoid {
    pub fn new(shape: DMatrix<f64>, offset: DVector<f64>, role: Role) -> Result<Self> {
        check_symmetric(&shape)?;
        if shape.nrows() != offset.len() {
            return Err(Error::Dimension(format!(
                "ellipsoid shape is {}x{} but offset has length {}",
                shape.nrows(),
                shape.ncols(),
                offset.len()
            )));
        }
        Ok(Self { shape, offset, role })
    }

    pub fn input(shape: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        Self::new(shape, offset, Role::Input)
    }

    pub fn output(shape: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        Self::new(shape, offset, Role::Output)
    }

    /// Ball of radius `radius` around `center`: shape `I/r`, offset `-c/r`.
    pub fn ball(center: &[f64], radius: f64, role: Role) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        let n = center.len();
        let shape = DMatrix::identity(n, n) / radius;
        let offset = -DVector::from_column_slice(center) / radius;
        Self::new(shape, offset, role)
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// `‖shape·p + offset‖₂`.
    pub fn level(&self, p: &DVector<f64>) -> f64 {
        (&self.shape * p + &self.offset).norm()
    }

    pub fn contains(&self, p: &DVector<f64>) -> Result<bool> {
        if p.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has length {}, ellipsoid lives in R^{}",
                p.len(),
                self.dim()
            )));
        }
        Ok(self.level(p) <= 1.0 + MEMBERSHIP_TOL)
    }

    /// Center `-shape⁻¹·offset`.
    pub fn center(&self) -> Result<DVector<f64>> {
        let inv = self.shape_inverse()?;
        Ok(-(inv * &self.offset))
    }

    fn shape_inverse(&self) -> Result<DMatrix<f64>> {
        checked_inverse(&self.shape, "ellipsoid shape matrix")
    }

    /// Input QC matrix `λ·[[-AᵀA, -Aᵀb], [-bᵀA, 1 - bᵀb]]`, whose quadratic
    /// form in `[x; 1]` is `λ(1 - ‖Ax + b‖²)`.
    pub fn input_qc(&self, lambda: f64) -> Result<DMatrix<f64>> {
        if self.role != Role::Input {
            return Err(Error::InvalidArgument("input_qc needs an input ellipsoid".into()));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "multiplier must be nonnegative, got {lambda}"
            )));
        }
        let n = self.dim();
        let a = &self.shape;
        let b = &self.offset;
        let ata = a.transpose() * a;
        let atb = a.transpose() * b;
        let mut p = DMatrix::zeros(n + 1, n + 1);
        p.view_mut((0, 0), (n, n)).copy_from(&(-&ata * lambda));
        for i in 0..n {
            p[(i, n)] = -lambda * atb[i];
            p[(n, i)] = -lambda * atb[i];
        }
        p[(n, n)] = lambda * (1.0 - b.dot(b));
        Ok(p)
    }

    /// Output specification matrix `S` over `[x; y; 1]`:
    /// `[[0,0,0],[0,CᵀC,Cᵀd],[0,dᵀC,dᵀd-1]]`, so the form is `‖Cy+d‖² - 1`.
    pub fn output_spec(&self, input_dim: usize) -> Result<DMatrix<f64>> {
        if self.role != Role::Output {
            return Err(Error::InvalidArgument("output_spec needs an output ellipsoid".into()));
        }
        let ny = self.dim();
        let c = &self.shape;
        let d = &self.offset;
        let ctc = c.transpose() * c;
        let ctd = c.transpose() * d;
        let dim = input_dim + ny + 1;
        let mut s = DMatrix::zeros(dim, dim);
        s.view_mut((input_dim, input_dim), (ny, ny)).copy_from(&ctc);
        for i in 0..ny {
            s[(input_dim + i, dim - 1)] = ctd[i];
            s[(dim - 1, input_dim + i)] = ctd[i];
        }
        s[(dim - 1, dim - 1)] = d.dot(d) - 1.0;
        Ok(s)
    }

    /// One uniform sample from the ellipsoid, `x = A⁻¹(u - b)` with `u`
    /// uniform in the unit ball.
    pub fn sample(&self, seed: u64) -> Result<DVector<f64>> {
        let mut sampler = self.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(sampler.draw(&mut rng))
    }

    /// Reusable sampler (inverts the shape once).
    pub fn sampler(&self) -> Result<EllipsoidSampler> {
        Ok(EllipsoidSampler {
            inv: self.shape_inverse()?,
            offset: self.offset.clone(),
        })
    }

    /// Tight axis-aligned box: center `-A⁻¹b`, half widths `‖row i of A⁻¹‖`.
    pub fn bounding_box(&self) -> Result<IntervalBounds> {
        let inv = self.shape_inverse()?;
        let c = -(&inv * &self.offset);
        let r = DVector::from_fn(self.dim(), |i, _| inv.row(i).norm());
        IntervalBounds::new(&c - &r, &c + &r)
    }

    /// Boundary points (for plotting), `count` points counter-clockwise.
    /// Only meaningful in two dimensions.
    pub fn boundary_2d(&self, count: usize) -> Result<Vec<(f64, f64)>> {
        if self.dim() != 2 {
            return Err(Error::Dimension("boundary_2d needs a planar ellipsoid".into()));
        }
        let inv = self.shape_inverse()?;
        Ok((0..count)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / count as f64;
                let u = DVector::from_vec(vec![t.cos(), t.sin()]);
                let p = &inv * (u - &self.offset);
                (p[0], p[1])
            })
            .collect())
    }

    pub fn to_file_input(&self) -> InputEllipsoidFile {
        InputEllipsoidFile {
            a: matrix_to_rows(&self.shape),
            b: vector_to_vec(&self.offset),
        }
    }

    pub fn to_file_output(&self) -> OutputEllipsoidFile {
        OutputEllipsoidFile {
            c: matrix_to_rows(&self.shape),
            d: vector_to_vec(&self.offset),
        }
    }
}

/// One input-output requirement: every `x` in `input` must map into `output`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecPair {
    pub input: Ellipsoid,
    pub output: Ellipsoid,
}

impl SpecPair {
    pub fn new(input: Ellipsoid, output: Ellipsoid) -> Result<Self> {
        if input.role() != Role::Input || output.role() != Role::Output {
            return Err(Error::InvalidArgument(
                "pair needs an input and an output ellipsoid".into(),
            ));
        }
        Ok(Self { input, output })
    }
}

#[derive(Debug, Clone)]
pub struct EllipsoidSampler {
    inv: DMatrix<f64>,
    offset: DVector<f64>,
}

impl EllipsoidSampler {
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> DVector<f64> {
        let u = unit_ball_sample(self.offset.len(), rng);
        &self.inv * (u - &self.offset)
    }
}

/// Uniform point in the unit ball: Gaussian direction, radius `U^(1/n)`.
pub fn unit_ball_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            let r: f64 = rng.gen::<f64>().powf(1.0 / n as f64);
            return g * (r / norm);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEllipsoidFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEllipsoidFile {
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

impl InputEllipsoidFile {
    pub fn to_ellipsoid(&self) -> Result<Ellipsoid> {
        Ellipsoid::input(matrix_from_rows(&self.a, "A")?, DVector::from_vec(self.b.clone()))
    }
}

impl OutputEllipsoidFile {
    pub fn to_ellipsoid(&self) -> Result<Ellipsoid> {
        Ellipsoid::output(matrix_from_rows(&self.c, "C")?, DVector::from_vec(self.d.clone()))
    }
}

/// Elementwise box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBounds {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl IntervalBounds {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension("interval bounds of different lengths".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("interval with lo > hi (or NaN)".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn contains(&self, p: &DVector<f64>) -> bool {
        p.len() == self.len()
            && p.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn is_finite(&self) -> bool {
        self.lo.iter().chain(self.hi.iter()).all(|v| v.is_finite())
    }

    /// Concatenate several boxes.
    pub fn stack(parts: &[IntervalBounds]) -> IntervalBounds {
        let lo: Vec<f64> = parts.iter().flat_map(|p| p.lo.iter().copied()).collect();
        let hi: Vec<f64> = parts.iter().flat_map(|p| p.hi.iter().copied()).collect();
        IntervalBounds {
            lo: DVector::from_vec(lo),
            hi: DVector::from_vec(hi),
        }
    }
}

/// Interval bound propagation. Returns the pre-activation bounds on
/// `v⁰ … v^{l-1}`, one box per hidden layer.
pub fn ibp(net: &Network, input: &IntervalBounds) -> Result<Vec<IntervalBounds>> {
    if input.len() != net.input_dim() {
        return Err(Error::Dimension(format!(
            "input box has length {}, network expects {}",
            input.len(),
            net.input_dim()
        )));
    }
    if !input.is_finite() {
        return Err(Error::InvalidArgument("input box must be finite".into()));
    }
    let act = net.activation();
    let mut lo = input.lo.clone();
    let mut hi = input.hi.clone();
    let mut out = Vec::with_capacity(net.hidden_layers());
    for layer in &net.layers()[..net.hidden_layers()] {
        let w = &layer.weight;
        let pos = w.map(|v| v.max(0.0));
        let neg = w.map(|v| v.min(0.0));
        let vlo = &pos * &lo + &neg * &hi + &layer.bias;
        let vhi = &pos * &hi + &neg * &lo + &layer.bias;
        // activations are monotone nondecreasing
        lo = vlo.map(|v| act.apply(v));
        hi = vhi.map(|v| act.apply(v));
        out.push(IntervalBounds { lo: vlo, hi: vhi });
    }
    Ok(out)
}

/// Per-neuron sector `[α, β]`: `(ψ(v) - αv)(βv - ψ(v)) ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorBounds {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
}

impl SectorBounds {
    pub fn new(alpha: DVector<f64>, beta: DVector<f64>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::Dimension("sector vectors of different lengths".into()));
        }
        if alpha.iter().zip(beta.iter()).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument("sector requires alpha <= beta".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub fn uniform(n: usize, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, alpha), DVector::from_element(n, beta))
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.alpha
            .iter()
            .zip(self.beta.iter())
            .all(|(a, b)| (a + b).abs() <= 1e-15 * b.abs().max(1.0))
    }

    pub fn stack(parts: &[SectorBounds]) -> SectorBounds {
        let alpha: Vec<f64> = parts.iter().flat_map(|p| p.alpha.iter().copied()).collect();
        let beta: Vec<f64> = parts.iter().flat_map(|p| p.beta.iter().copied()).collect();
        SectorBounds {
            alpha: DVector::from_vec(alpha),
            beta: DVector::from_vec(beta),
        }
    }

    /// Lemma-style QC matrix of size `2n` over `[v; φ(v)]`:
    /// `[[-2AφBφM, (Aφ+Bφ)M], [(Aφ+Bφ)M, -2M]]`, `M = diag(μ)`.
    pub fn qc(&self, mu: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.len();
        if mu.len() != n {
            return Err(Error::Dimension(format!(
                "multiplier has length {}, sector has {n}",
                mu.len()
            )));
        }
        if mu.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidArgument("sector multipliers must be nonnegative".into()));
        }
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            let (a, b, m) = (self.alpha[i], self.beta[i], mu[i]);
            q[(i, i)] = -2.0 * a * b * m;
            q[(i, n + i)] = (a + b) * m;
            q[(n + i, i)] = (a + b) * m;
            q[(n + i, n + i)] = -2.0 * m;
        }
        Ok(q)
    }
}

/// Global sectors used for learning: `[-1, 1]` (symmetric, strict mode) or
/// `[0, 1]` (residual mode). Both hold for tanh, ReLU and the identity.
pub fn global_sector(n: usize, symmetric: bool) -> SectorBounds {
    let alpha = if symmetric { -1.0 } else { 0.0 };
    SectorBounds::uniform(n, alpha, 1.0).expect("alpha <= beta")
}

/// Tightest sector of `act` over each interval, relaxed outward by
/// [`SECTOR_RELAXATION`] and clipped to the activation's global sector.
pub fn local_sector(act: Activation, bounds: &IntervalBounds) -> Result<SectorBounds> {
    if !bounds.is_finite() {
        return Err(Error::InvalidArgument("local sectors need finite bounds".into()));
    }
    let n = bounds.len();
    let mut alpha = DVector::zeros(n);
    let mut beta = DVector::zeros(n);
    for i in 0..n {
        let (a, b) = interval_sector(act, bounds.lo[i], bounds.hi[i]);
        let (ga, gb) = match act {
            Activation::Tanh | Activation::ReLU => (0.0, 1.0),
            Activation::Identity => (f64::NEG_INFINITY, f64::INFINITY),
        };
        alpha[i] = (a - SECTOR_RELAXATION).max(ga);
        beta[i] = (b + SECTOR_RELAXATION).min(gb);
    }
    SectorBounds::new(alpha, beta)
}

/// `(inf, sup)` of ψ(v)/v over `[lo, hi]`, with ψ'(0) at v = 0.
fn interval_sector(act: Activation, lo: f64, hi: f64) -> (f64, f64) {
    match act {
        Activation::Identity => (1.0, 1.0),
        Activation::ReLU => {
            let has_pos = hi > 0.0;
            let has_neg = lo < 0.0;
            match (has_neg, has_pos) {
                (true, true) => (0.0, 1.0),
                (false, true) => (1.0, 1.0),
                (true, false) => (0.0, 0.0),
                // the interval is {0}; ReLU slopes there span [0, 1]
                (false, false) => (0.0, 1.0),
            }
        }
        Activation::Tanh => {
            // tanh(v)/v is even and strictly decreasing in |v|.
            let ratio = |v: f64| if v == 0.0 { 1.0 } else { v.tanh() / v };
            let (near, far) = if lo <= 0.0 && hi >= 0.0 {
                (0.0, lo.abs().max(hi.abs()))
            } else if lo > 0.0 {
                (lo, hi)
            } else {
                (hi.abs(), lo.abs())
            };
            (ratio(far), ratio(near))
        }
    }
}
