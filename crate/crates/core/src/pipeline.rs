//! End-to-end runs: learn a certified network from a problem file, or
//! verify a given network against one.

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::learning::{build_learning, schur_check, LayerShape};
use crate::lmi::verification::{build_verification, build_verification_multilayer, local_sectors};
use crate::loop_transform::{inverse_two_layer, RecoveryMode};
use crate::model::{Activation, Network, WeightsFile};
use crate::sets::{global_sector, InputEllipsoidFile, OutputEllipsoidFile, SpecPair, MEMBERSHIP_TOL};
use crate::solver::{check_certificate, solve, SolveOptions, Verdict};

/// Largest acceptable maximum eigenvalue of the reconstructed pre-Schur
/// matrix on a feasible learning solution.
pub const SCHUR_TOL: f64 = 1e-8;

const MC_CHUNK: usize = 1024;

fn default_mc_samples() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFile {
    pub input: InputEllipsoidFile,
    pub output: OutputEllipsoidFile,
}

/// Problem JSON as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub shape: LayerShape,
    pub activation: Activation,
    pub pairs: Vec<PairFile>,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<RecoveryMode>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

/// A validated learning problem. `seed` drives both the solver's initial
/// point and the Monte-Carlo check.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub shape: LayerShape,
    pub activation: Activation,
    pub pairs: Vec<SpecPair>,
    pub mode: RecoveryMode,
    pub solver: SolveOptions,
    pub mc_samples: usize,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn new(shape: LayerShape, activation: Activation, pairs: Vec<SpecPair>) -> Result<Self> {
        let spec = Self {
            shape,
            activation,
            pairs,
            mode: RecoveryMode::default(),
            solver: SolveOptions::default(),
            mc_samples: default_mc_samples(),
            seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::InvalidArgument("problem has no specification pairs".into()));
        }
        let LayerShape { nx, n1, ny } = self.shape;
        if nx == 0 || n1 == 0 || ny == 0 {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        for (j, p) in self.pairs.iter().enumerate() {
            if p.input.dim() != nx || p.output.dim() != ny {
                return Err(Error::Dimension(format!(
                    "pair {j} is R^{} -> R^{}, shape says R^{nx} -> R^{ny}",
                    p.input.dim(),
                    p.output.dim()
                )));
            }
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidArgument("mc_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_file(file: &ProblemFile) -> Result<Self> {
        let pairs = file
            .pairs
            .iter()
            .map(|p| SpecPair::new(p.input.to_ellipsoid()?, p.output.to_ellipsoid()?))
            .collect::<Result<Vec<_>>>()?;
        let spec = Self {
            shape: file.shape,
            activation: file.activation,
            pairs,
            mode: file.mode.unwrap_or_default(),
            solver: file.solver.clone(),
            mc_samples: file.mc_samples,
            seed: file.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_file(&self) -> ProblemFile {
        ProblemFile {
            note: None,
            shape: self.shape,
            activation: self.activation,
            pairs: self
                .pairs
                .iter()
                .map(|p| PairFile {
                    input: p.input.to_file_input(),
                    output: p.output.to_file_output(),
                })
                .collect(),
            solver: self.solver.clone(),
            mode: Some(self.mode),
            mc_samples: self.mc_samples,
            seed: self.seed,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn solver_options(&self) -> SolveOptions {
        SolveOptions {
            seed: self.seed,
            ..self.solver.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Learning found a certified network.
    Feasible,
    /// Learning ran out of budget; no network.
    BudgetExhausted,
    Certified,
    /// Verification found no certificate. Not a proof of violation.
    Unknown,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        matches!(self, Outcome::Feasible | Outcome::Certified)
    }

    /// CLI exit code: 0 on success, 2 otherwise.
    pub fn exit_code(self) -> i32 {
        if self.is_success() {
            0
        } else {
            2
        }
    }
}

/// Result of verifying one pair with local sectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub outcome: Outcome,
    pub margin: f64,
    pub iterations: usize,
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schur_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check: Option<PairCheck>,
}

/// Wall time per stage, in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub build: f64,
    pub solve: f64,
    pub recover: f64,
    pub verify: f64,
    pub monte_carlo: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub outcome: Outcome,
    /// Learning margin, or the smallest per-pair verification margin.
    pub margin: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<RecoveryMode>,
    /// Learning certificate (decision vector).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<WeightsFile>,
    pub mc_samples: usize,
    pub membership_tol: f64,
    pub pairs: Vec<PairReport>,
    pub timings: Timings,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn network(&self) -> Result<Option<Network>> {
        self.network.as_ref().map(Network::from_file_format).transpose()
    }

    pub fn total_violations(&self) -> usize {
        self.pairs.iter().map(|p| p.violations).sum()
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Learn a single-hidden-layer network satisfying every pair, then check
/// the result three ways: pre-Schur residual, an independent verification
/// with local sectors, and Monte-Carlo sampling.
pub fn learn(spec: &ProblemSpec) -> Result<RunReport> {
    learn_with_log(spec).map(|(r, _)| r)
}

/// [`learn`], also returning the solver iteration log as JSON lines.
pub fn learn_with_log(spec: &ProblemSpec) -> Result<(RunReport, String)> {
    spec.validate()?;
    let start = Instant::now();
    let mut timings = Timings::default();
    let sec = global_sector(spec.shape.n1, spec.mode == RecoveryMode::Strict);
    let opts = spec.solver_options();

    let t = Instant::now();
    let (pencil, layout) =
        build_learning(spec.shape, &spec.pairs, &sec, spec.mode).map_err(Error::at("build_learning"))?;
    timings.build = secs(t);

    let t = Instant::now();
    let cert = solve(&pencil, &opts).map_err(Error::at("solve"))?;
    timings.solve = secs(t);
    let log = cert.log_json_lines()?;

    let mut report = RunReport {
        outcome: Outcome::BudgetExhausted,
        margin: cert.margin,
        iterations: cert.iterations,
        mode: Some(spec.mode),
        certificate: Some(cert.z.clone()),
        network: None,
        mc_samples: spec.mc_samples,
        membership_tol: MEMBERSHIP_TOL,
        pairs: vec![],
        timings,
    };
    if cert.verdict != Verdict::Feasible {
        report.timings.total = secs(start);
        return Ok((report, log));
    }
    check_certificate(&pencil, &cert.z, opts.tol_eig).map_err(Error::at("check_certificate"))?;

    let t = Instant::now();
    let vars = layout.extract(&cert.z);
    let tf = vars.to_transformed(&sec).map_err(Error::at("inverse_two_layer"))?;
    let net = inverse_two_layer(&tf, &sec, spec.mode, spec.activation).map_err(Error::at("inverse_two_layer"))?;
    let schur = (0..spec.pairs.len())
        .map(|j| schur_check(&vars, &spec.pairs[j], j))
        .collect::<Result<Vec<_>>>()
        .map_err(Error::at("schur_check"))?;
    report.timings.recover = secs(t);

    let t = Instant::now();
    let checks = spec
        .pairs
        .iter()
        .map(|p| verify_pair(&net, p, &opts))
        .collect::<Result<Vec<_>>>()
        .map_err(Error::at("verify"))?;
    report.timings.verify = secs(t);

    let t = Instant::now();
    let violations = monte_carlo(&net, &spec.pairs, spec.mc_samples, spec.seed).map_err(Error::at("monte_carlo"))?;
    report.timings.monte_carlo = secs(t);

    if let Some(j) = violations.iter().position(|&v| v > 0) {
        return Err(Error::SoundnessBug(format!(
            "learning reported feasible with margin {:e}, but {} of {} samples of pair {j} leave the output set",
            cert.margin, violations[j], spec.mc_samples
        )));
    }

    report.outcome = Outcome::Feasible;
    report.network = Some(net.to_file_format());
    report.pairs = violations
        .into_iter()
        .zip(schur)
        .zip(checks)
        .map(|((violations, s), c)| PairReport {
            violations,
            schur_residual: Some(s),
            check: Some(c),
        })
        .collect();
    report.timings.total = secs(start);
    Ok((report, log))
}

/// Verify one pair: interval bounds, local sectors, then the
/// single-layer or multi-layer pencil.
pub fn verify_pair(net: &Network, pair: &SpecPair, opts: &SolveOptions) -> Result<PairCheck> {
    let sectors = local_sectors(net, &pair.input)?;
    let pencil = if net.hidden_layers() == 1 {
        build_verification(net, pair, &sectors)?
    } else {
        build_verification_multilayer(net, pair, &sectors)?.0
    };
    let cert = solve(&pencil, opts)?;
    let certified = cert.verdict == Verdict::Feasible && check_certificate(&pencil, &cert.z, opts.tol_eig).is_ok();
    Ok(PairCheck {
        outcome: if certified {
            Outcome::Certified
        } else {
            Outcome::Unknown
        },
        margin: cert.margin,
        iterations: cert.iterations,
        multipliers: cert.z,
    })
}

/// Verify a fixed network against every pair. Monte-Carlo counts are
/// reported alongside and do not affect the outcome.
pub fn verify(
    net: &Network,
    pairs: &[SpecPair],
    opts: &SolveOptions,
    mc_samples: usize,
    seed: u64,
) -> Result<RunReport> {
    let start = Instant::now();
    let mut timings = Timings::default();
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no specification pairs".into()));
    }
    let t = Instant::now();
    let checks = pairs
        .iter()
        .map(|p| verify_pair(net, p, opts))
        .collect::<Result<Vec<_>>>()
        .map_err(Error::at("verify"))?;
    timings.verify = secs(t);
    let t = Instant::now();
    let violations = monte_carlo(net, pairs, mc_samples, seed).map_err(Error::at("monte_carlo"))?;
    timings.monte_carlo = secs(t);

    let certified = checks.iter().all(|c| c.outcome == Outcome::Certified);
    let margin = checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let iterations = checks.iter().map(|c| c.iterations).sum();
    timings.total = secs(start);
    Ok(RunReport {
        outcome: if certified {
            Outcome::Certified
        } else {
            Outcome::Unknown
        },
        margin,
        iterations,
        mode: None,
        certificate: None,
        network: Some(net.to_file_format()),
        mc_samples,
        membership_tol: MEMBERSHIP_TOL,
        pairs: violations
            .into_iter()
            .zip(checks)
            .map(|(violations, c)| PairReport {
                violations,
                schur_residual: None,
                check: Some(c),
            })
            .collect(),
        timings,
    })
}

/// Per-pair count of sampled inputs whose image leaves the output set.
///
/// Samples are drawn in chunks, each from its own ChaCha stream keyed by
/// `(pair, chunk)`, so the counts depend only on `seed` and `n`.
pub fn monte_carlo(net: &Network, pairs: &[SpecPair], n: usize, seed: u64) -> Result<Vec<usize>> {
    for (j, p) in pairs.iter().enumerate() {
        if p.input.dim() != net.input_dim() || p.output.dim() != net.output_dim() {
            return Err(Error::Dimension(format!("pair {j} does not match the network")));
        }
    }
    let samplers = pairs.iter().map(|p| p.input.sampler()).collect::<Result<Vec<_>>>()?;
    let chunks = n.div_ceil(MC_CHUNK);
    let jobs: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|j| (0..chunks).map(move |c| (j, c)))
        .collect();
    let counts: Vec<(usize, usize)> = jobs
        .par_iter()
        .map(|&(j, c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((j as u64) << 32) | c as u64);
            let mut sampler = samplers[j].clone();
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            let bad = (0..len)
                .filter(|_| {
                    let x = sampler.draw(&mut rng);
                    !contained(net, &pairs[j], &x)
                })
                .count();
            (j, bad)
        })
        .collect();
    let mut out = vec![0; pairs.len()];
    for (j, bad) in counts {
        out[j] += bad;
    }
    Ok(out)
}

fn contained(net: &Network, pair: &SpecPair, x: &DVector<f64>) -> bool {
    let y = net.forward_unchecked(x);
    pair.output.level(&y) <= 1.0 + MEMBERSHIP_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::{Ellipsoid, Role};
    use nalgebra::DMatrix;

    fn pair(ci: &[f64], ri: f64, co: &[f64], ro: f64) -> SpecPair {
        SpecPair::new(
            Ellipsoid::ball(ci, ri, Role::Input).unwrap(),
            Ellipsoid::ball(co, ro, Role::Output).unwrap(),
        )
        .unwrap()
    }

    fn scaling_net(k: f64) -> Network {
        Network::two_layer(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::identity(2, 2) * k,
            DVector::zeros(2),
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn monte_carlo_zero_samples() {
        let counts = monte_carlo(&scaling_net(10.0), &[pair(&[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0)], 0, 1).unwrap();
        assert_eq!(counts, vec![0]);
    }

    #[test]
    fn monte_carlo_finds_scaling_violations() {
        let pairs = [pair(&[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0)];
        let counts = monte_carlo(&scaling_net(10.0), &pairs, 3000, 1).unwrap();
        // ‖10x‖ ≤ 1 only for ‖x‖ ≤ 0.1, i.e. 1% of the disk.
        assert!(counts[0] > 2800, "{counts:?}");
        assert_eq!(counts, monte_carlo(&scaling_net(10.0), &pairs, 3000, 1).unwrap());
    }

    #[test]
    fn verify_scaling_net_unknown() {
        let pairs = [pair(&[0.0, 0.0], 1.0, &[0.0, 0.0], 1.0)];
        let opts = SolveOptions {
            max_iters: 300,
            ..Default::default()
        };
        let r = verify(&scaling_net(10.0), &pairs, &opts, 200, 0).unwrap();
        assert_eq!(r.outcome, Outcome::Unknown);
        assert!(r.pairs[0].violations > 0);
        assert_eq!(r.outcome.exit_code(), 2);
    }

    #[test]
    fn verify_zero_net_certified() {
        let net = Network::two_layer(
            DMatrix::zeros(3, 2),
            DVector::zeros(3),
            DMatrix::zeros(2, 3),
            DVector::from_vec(vec![0.5, 0.0]),
            Activation::Tanh,
        )
        .unwrap();
        let pairs = [pair(&[3.0, 0.0], 1.0, &[0.0, 0.0], 1.0)];
        let r = verify(&net, &pairs, &SolveOptions::default(), 100, 0).unwrap();
        assert_eq!(r.outcome, Outcome::Certified);
    }

    #[test]
    fn slack_instance_learns_small_weights() {
        let spec = ProblemSpec::new(
            LayerShape { nx: 2, n1: 3, ny: 2 },
            Activation::Tanh,
            vec![pair(&[0.0, 0.0], 1.0, &[0.0, 0.0], 100.0)],
        )
        .unwrap();
        let r = learn(&spec).unwrap();
        assert_eq!(r.outcome, Outcome::Feasible);
        assert_eq!(r.total_violations(), 0);
        assert!(r.pairs[0].schur_residual.unwrap() <= SCHUR_TOL);
    }

    #[test]
    fn problem_file_defaults() {
        let json = r#"{"shape":{"nx":1,"n1":2,"ny":1},"activation":"tanh",
            "pairs":[{"input":{"A":[[1.0]],"b":[0.0]},"output":{"C":[[0.5]],"d":[0.0]}}]}"#;
        let spec = ProblemSpec::from_json(json).unwrap();
        assert_eq!(spec.mc_samples, 500);
        assert_eq!(spec.mode, RecoveryMode::Strict);
        assert_eq!(spec.solver, SolveOptions::default());
        let bad = json.replace("\"n1\":2,\"ny\":1", "\"n1\":2,\"ny\":3");
        assert!(matches!(ProblemSpec::from_json(&bad), Err(Error::Dimension(_))));
    }
}
