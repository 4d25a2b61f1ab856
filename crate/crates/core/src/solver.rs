//! Feasibility solver for affine symmetric pencils.
//!
//! Maximizes the margin `g(z) = min_b λ_min(F_b(z))` over the sign-feasible
//! set intersected with the ball `‖z‖ ≤ R`. The nonsmooth `g` is replaced by
//! the entropic soft-min of all block eigenvalues,
//! `f_s(z) = -s log Σ exp(-λ_k(z)/s) ≤ g(z)`, which is concave and smooth.
//! Accelerated projected gradient ascent with backtracking runs on `f_s`
//! and `s` is halved whenever progress stalls.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::{min_eig, sym_eigen};
use crate::error::{Error, Result};
use crate::lmi::pencil::{AffinePencil, Sign};

fn default_margin_target() -> f64 {
    1e-6
}
fn default_radius() -> f64 {
    1e3
}
fn default_max_iters() -> usize {
    20_000
}
fn default_time_budget() -> f64 {
    60.0
}
fn default_tol_eig() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Stop as soon as the margin reaches this value.
    #[serde(default = "default_margin_target")]
    pub margin_target: f64,
    /// Bound on the Euclidean norm of the decision vector.
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Wall-clock budget in seconds.
    #[serde(default = "default_time_budget")]
    pub time_budget: f64,
    /// Eigenvalue tolerance used when checking a certificate.
    #[serde(default = "default_tol_eig")]
    pub tol_eig: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            margin_target: default_margin_target(),
            radius: default_radius(),
            max_iters: default_max_iters(),
            time_budget: default_time_budget(),
            tol_eig: default_tol_eig(),
            seed: 0,
        }
    }
}

impl SolveOptions {
    fn check(&self) -> Result<()> {
        if !self.margin_target.is_finite() {
            return Err(Error::InvalidArgument("margin target must be finite".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        if !(self.time_budget > 0.0) {
            return Err(Error::InvalidArgument("time budget must be positive".into()));
        }
        if !(self.tol_eig >= 0.0) {
            return Err(Error::InvalidArgument(
                "eigenvalue tolerance must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Feasible,
    BudgetExhausted,
}

/// One line of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// Margin at the current iterate.
    pub margin: f64,
    /// Best margin seen so far.
    pub best: f64,
    pub step: f64,
    pub smoothing: f64,
    /// Block attaining the minimum eigenvalue.
    pub active_block: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub z: Vec<f64>,
    /// `min_b λ_min(F_b(z))`, recomputed from scratch at `z`.
    pub margin: f64,
    pub iterations: usize,
    pub verdict: Verdict,
    #[serde(skip)]
    pub log: Vec<IterRecord>,
}

impl Certificate {
    /// The iteration log as JSON lines.
    pub fn log_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.log {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Minimum eigenvalue over all blocks at `z` and the block attaining it.
/// An empty pencil has margin `+∞`.
pub fn margin(pencil: &AffinePencil, z: &[f64]) -> Result<(f64, usize)> {
    let mut best = (f64::INFINITY, 0);
    for (b, f) in pencil.evaluate(z)?.iter().enumerate() {
        if f.nrows() == 0 {
            continue;
        }
        let (l, _) = min_eig(f)?;
        if l < best.0 {
            best = (l, b);
        }
    }
    Ok(best)
}

/// Independent check: signs hold and the recomputed margin is at least
/// `-tol`. Returns the recomputed margin.
pub fn check_certificate(pencil: &AffinePencil, z: &[f64], tol: f64) -> Result<f64> {
    if !pencil.signs_satisfied(z) {
        return Err(Error::Precondition("certificate violates a sign constraint".into()));
    }
    let (m, _) = margin(pencil, z)?;
    if m < -tol {
        return Err(Error::Precondition(format!(
            "certificate margin {m:e} is below -{tol:e}"
        )));
    }
    Ok(m)
}

struct Eval {
    /// Hard margin.
    g: f64,
    active: usize,
    /// Smoothed margin.
    f: f64,
    grad: Vec<f64>,
}

struct Problem<'a> {
    pencil: &'a AffinePencil,
    radius: f64,
}

impl Problem<'_> {
    fn evaluate(&self, z: &[f64], s: f64) -> Result<Eval> {
        let mats: Vec<DMatrix<f64>> = self.pencil.evaluate(z)?;
        let eigs = mats
            .iter()
            .map(|m| {
                if m.nrows() == 0 {
                    Ok(None)
                } else {
                    sym_eigen(m).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g = f64::INFINITY;
        let mut active = 0;
        for (b, e) in eigs.iter().enumerate() {
            if let Some(e) = e {
                if e.values[0] < g {
                    g = e.values[0];
                    active = b;
                }
            }
        }
        let mut grad = vec![0.0; self.pencil.num_vars()];
        if !g.is_finite() {
            return Ok(Eval { g, active, f: g, grad });
        }
        // Shifted by g for stability: Σ exp(-(λ_k - g)/s) ≥ 1.
        let mut total = 0.0;
        for e in eigs.iter().flatten() {
            total += e.values.iter().map(|&l| (-(l - g) / s).exp()).sum::<f64>();
        }
        let f = g - s * total.ln();
        for (blk, e) in self.pencil.blocks.iter().zip(&eigs) {
            let Some(e) = e else { continue };
            let mut w = DMatrix::zeros(blk.dim, blk.dim);
            for (k, &l) in e.values.iter().enumerate() {
                let wk = (-(l - g) / s).exp() / total;
                if wk < 1e-300 {
                    continue;
                }
                let v = e.vectors.column(k);
                w.ger(wk, &v, &v, 1.0);
            }
            blk.add_inner_products(&w, 1.0, &mut grad);
        }
        Ok(Eval { g, active, f, grad })
    }

    fn project(&self, z: &mut [f64]) {
        for (x, v) in z.iter_mut().zip(&self.pencil.vars) {
            if !x.is_finite() {
                *x = 0.0;
            }
            if v.sign != Sign::Free && *x < 0.0 {
                *x = 0.0;
            }
        }
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > self.radius {
            let k = self.radius / norm;
            z.iter_mut().for_each(|x| *x *= k);
        }
        let floor = 1e-9 * norm.min(self.radius).max(1.0);
        for (x, v) in z.iter_mut().zip(&self.pencil.vars) {
            if v.sign == Sign::Positive && *x < floor {
                *x = floor;
            }
        }
    }
}

fn initial_point(pencil: &AffinePencil, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pencil
        .vars
        .iter()
        .map(|v| {
            let jitter: f64 = rng.gen_range(-1e-2..1e-2);
            match v.sign {
                Sign::Free => jitter,
                Sign::Nonneg | Sign::Positive => 1.0 + jitter,
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Search for `z` with `min_b λ_min(F_b(z)) ≥ margin_target`.
///
/// Deterministic for a fixed seed, apart from the wall-clock budget. On
/// budget exhaustion the best point found is returned.
pub fn solve(pencil: &AffinePencil, opts: &SolveOptions) -> Result<Certificate> {
    opts.check()?;
    pencil.validate()?;
    let start = Instant::now();
    let prob = Problem {
        pencil,
        radius: opts.radius,
    };
    let mut x = initial_point(pencil, opts.seed);
    prob.project(&mut x);
    let cur0 = prob.evaluate(&x, 1.0)?;
    let mut s = 0.1 * cur0.g.abs().max(1.0);
    let s_min = 1e-9_f64.max(opts.margin_target.abs() * 1e-3);
    let mut cur = prob.evaluate(&x, s)?;
    let mut best_z = x.clone();
    let mut best_g = cur.g;
    let mut log = Vec::new();

    let mut y = x.clone();
    let mut y_eval = prob.evaluate(&y, s)?;
    let mut t = 1.0_f64;
    let mut step = 1.0_f64;
    let mut stall = 0usize;
    let mut stall_ref = cur.f;
    let mut iterations = 0;

    while iterations < opts.max_iters && best_g < opts.margin_target {
        if start.elapsed().as_secs_f64() > opts.time_budget {
            break;
        }
        iterations += 1;

        // Backtracking on the quadratic lower model around y.
        let (x_new, new_eval) = loop {
            let mut cand: Vec<f64> = y.iter().zip(&y_eval.grad).map(|(a, g)| a + step * g).collect();
            prob.project(&mut cand);
            let e = prob.evaluate(&cand, s)?;
            let d: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = y_eval.f + dot(&y_eval.grad, &d) - dot(&d, &d) / (2.0 * step);
            if e.f >= model - 1e-12 * y_eval.f.abs().max(1.0) || step < 1e-14 {
                break (cand, e);
            }
            step *= 0.5;
        };

        if new_eval.g > best_g {
            best_g = new_eval.g;
            best_z.clone_from(&x_new);
        }
        log.push(IterRecord {
            iter: iterations,
            margin: new_eval.g,
            best: best_g,
            step,
            smoothing: s,
            active_block: new_eval.active,
        });

        let restart = new_eval.f < cur.f;
        let t_new = if restart {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
        };
        let beta = if restart { 0.0 } else { (t - 1.0) / t_new };
        y = x_new.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        prob.project(&mut y);
        x = x_new;
        cur = new_eval;
        t = t_new;
        step *= 1.5;

        // Halve the smoothing once f_s stops improving.
        if cur.f > stall_ref + 1e-3 * s {
            stall_ref = cur.f;
            stall = 0;
        } else {
            stall += 1;
        }
        if stall >= 20 {
            if s <= s_min {
                break;
            }
            s = (0.5 * s).max(s_min);
            cur = prob.evaluate(&x, s)?;
            stall_ref = cur.f;
            stall = 0;
            t = 1.0;
            y.clone_from(&x);
        }
        y_eval = prob.evaluate(&y, s)?;
    }

    prob.project(&mut best_z);
    let (m, _) = margin(pencil, &best_z)?;
    let verdict = if m >= opts.margin_target && pencil.signs_satisfied(&best_z) {
        Verdict::Feasible
    } else {
        Verdict::BudgetExhausted
    };
    Ok(Certificate {
        z: best_z,
        margin: m,
        iterations,
        verdict,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::pencil::PencilBuilder;

    fn interval_pencil() -> AffinePencil {
        // diag(z, 1 - z)
        let mut b = PencilBuilder::new();
        let z = b.add_var("z", Sign::Free);
        let blk = b.add_block(2);
        b.add_term(blk, z, 0, 0, 1.0);
        b.add_term(blk, z, 1, 1, -1.0);
        b.add_constant(blk, 1, 1, 1.0);
        b.build()
    }

    #[test]
    fn maximizes_interval_margin() {
        let opts = SolveOptions {
            margin_target: 1.0,
            max_iters: 2000,
            ..Default::default()
        };
        let cert = solve(&interval_pencil(), &opts).unwrap();
        assert_eq!(cert.verdict, Verdict::BudgetExhausted);
        assert!((cert.margin - 0.5).abs() < 1e-4, "{}", cert.margin);
    }

    #[test]
    fn stops_at_target() {
        let cert = solve(&interval_pencil(), &SolveOptions::default()).unwrap();
        assert_eq!(cert.verdict, Verdict::Feasible);
        assert!(cert.margin >= 1e-6);
        assert!(check_certificate(&interval_pencil(), &cert.z, 0.0).is_ok());
    }

    #[test]
    fn constant_negative_block_is_infeasible() {
        let mut b = PencilBuilder::new();
        let z = b.add_var("z", Sign::Nonneg);
        let blk = b.add_block(1);
        b.add_constant(blk, 0, 0, -1.0);
        let other = b.add_block(1);
        b.add_term(other, z, 0, 0, 1.0);
        let p = b.build();
        let cert = solve(
            &p,
            &SolveOptions {
                max_iters: 500,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(cert.verdict, Verdict::BudgetExhausted);
        assert!(cert.margin <= -1.0 + 1e-9);
    }

    #[test]
    fn deterministic() {
        let opts = SolveOptions {
            margin_target: 1.0,
            max_iters: 100,
            seed: 7,
            ..Default::default()
        };
        let a = solve(&interval_pencil(), &opts).unwrap();
        let b = solve(&interval_pencil(), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_lines_parse() {
        let opts = SolveOptions {
            margin_target: 1.0,
            max_iters: 5,
            ..Default::default()
        };
        let cert = solve(&interval_pencil(), &opts).unwrap();
        let text = cert.log_json_lines().unwrap();
        for line in text.lines() {
            let _: IterRecord = serde_json::from_str(line).unwrap();
        }
        assert_eq!(text.lines().count(), cert.iterations);
    }
}
