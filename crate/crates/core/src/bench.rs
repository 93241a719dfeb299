//! Soundness benchmark: instances with planted counterexamples inside the
//! epsilon-ball, dual-objective training (cross-entropy plus a hinge on the
//! planted points), and verifier evaluation. A sound verifier must falsify
//! every planted instance; clean instances may go either way.

use crate::pnn::{Architecture, NetworkParams, PnnError};
use crate::verifier::{certify, Verdict, VerifierConfig, VerifyError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::Instant;

#[derive(Debug)]
pub enum BenchError {
    /// Post-training sanity unmet after all retries; carries the final loss
    /// of each attempt.
    TrainingFailed { attempts: usize, final_losses: Vec<f64> },
    /// An unverifiable instance was verified: the verifier is unsound.
    Soundness { instance: usize, margin: f64, epsilon: f64 },
    Verify { instance: usize, source: VerifyError },
    Pnn(PnnError),
    Io(std::io::Error),
    Parse(String),
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchError::TrainingFailed { attempts, final_losses } => {
                write!(f, "training sanity unmet after {attempts} attempts; losses {final_losses:?}")
            }
            BenchError::Soundness { instance, margin, epsilon } => write!(
                f,
                "soundness violation: planted instance {instance} verified (margin {margin} >= eps {epsilon})"
            ),
            BenchError::Verify { instance, source } => {
                write!(f, "verifier error on instance {instance}: {source}")
            }
            BenchError::Pnn(e) => write!(f, "{e}"),
            BenchError::Io(e) => write!(f, "io error: {e}"),
            BenchError::Parse(m) => write!(f, "suite parse error: {m}"),
        }
    }
}

impl std::error::Error for BenchError {}

impl From<PnnError> for BenchError {
    fn from(e: PnnError) -> Self {
        BenchError::Pnn(e)
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: usize,
    pub degree: u32,
    pub epsilon: f64,
    pub n_unverifiable: usize,
    pub n_clean: usize,
    /// Counterexamples land in the shell `[shell_ratio * eps, eps]`.
    pub shell_ratio: f64,
    /// Hinge margin of the counterexample loss.
    pub margin: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl BenchConfig {
    /// Full-size profile: 10 + 10 instances, 5000 epochs.
    pub fn paper(hidden: usize, degree: u32, epsilon: f64, seed: u64) -> Self {
        BenchConfig {
            input_dim: 8,
            output_dim: 2,
            hidden,
            degree,
            epsilon,
            n_unverifiable: 10,
            n_clean: 10,
            shell_ratio: 0.98,
            margin: 0.01,
            lr: 0.001,
            epochs: 5000,
            seed,
        }
    }

    /// Reduced desk-scale profile: 5 + 5 instances, 2000 epochs.
    pub fn desk(hidden: usize, degree: u32, epsilon: f64, seed: u64) -> Self {
        BenchConfig {
            n_unverifiable: 5,
            n_clean: 5,
            epochs: 2000,
            ..Self::paper(hidden, degree, epsilon, seed)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Planted {
    pub delta: Vec<f64>,
    pub target_label: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchInstance {
    pub x0: Vec<f64>,
    pub label: usize,
    pub planted: Option<Planted>,
}

impl BenchInstance {
    pub fn counterexample(&self) -> Option<Vec<f64>> {
        self.planted
            .as_ref()
            .map(|p| self.x0.iter().zip(&p.delta).map(|(x, d)| x + d).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkSuite {
    pub config: BenchConfig,
    pub instances: Vec<BenchInstance>,
}

impl BenchmarkSuite {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("suite serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        serde_json::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))
    }
}

/// Samples the benchmark suite: uniform inputs on `[-1, 1]^n`, uniform
/// labels, and for unverifiable instances a planted perturbation of norm in
/// `[shell_ratio * eps, eps]` toward the flipped label.
pub fn generate(config: &BenchConfig) -> BenchmarkSuite {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.input_dim;
    let mut instances = Vec::with_capacity(config.n_unverifiable + config.n_clean);
    for i in 0..config.n_unverifiable + config.n_clean {
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = usize::from(rng.random::<bool>());
        let planted = if i < config.n_unverifiable {
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let magnitude =
                rng.random_range(config.shell_ratio * config.epsilon..config.epsilon);
            Some(Planted {
                delta: z.iter().map(|v| magnitude * v / znorm).collect(),
                target_label: 1 - label,
            })
        } else {
            None
        };
        instances.push(BenchInstance { x0, label, planted });
    }
    BenchmarkSuite { config: config.clone(), instances }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// Cyclic schedule: linear ramp to the base rate at T/2, linear decay after.
fn cyclic_lr(base: f64, t: usize, epochs: usize) -> f64 {
    let half = epochs as f64 / 2.0;
    if (t as f64) < half {
        base * t as f64 / half
    } else {
        base * (epochs - t) as f64 / half
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn init_params(arch: &Architecture, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..arch.num_layers() {
        let (rows, cols) = (arch.dims[l + 1], arch.dims[l]);
        let bound = 1.0 / (cols as f64).sqrt();
        weights.push(
            (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(-bound..bound)).collect())
                .collect(),
        );
        biases.push((0..rows).map(|_| rng.random_range(-bound..bound)).collect());
    }
    NetworkParams::new(arch.clone(), weights, biases).expect("init shapes are consistent")
}

fn sanity_ok(net: &NetworkParams, suite: &BenchmarkSuite) -> Result<bool, BenchError> {
    for inst in &suite.instances {
        let logits = net.forward(&inst.x0)?;
        let pred = if logits[1] > logits[0] { 1 } else { 0 };
        if pred != inst.label {
            return Ok(false);
        }
        if let Some(planted) = &inst.planted {
            let cex = inst.counterexample().unwrap();
            let logits = net.forward(&cex)?;
            let pred = if logits[1] > logits[0] { 1 } else { 0 };
            if pred != planted.target_label {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Full-batch Adam with the cyclic schedule on `L_CE + L_margin`. Training
/// succeeds when every base point classifies to its label and every planted
/// counterexample to the flipped label; otherwise retries with a fresh
/// parameter seed up to 5 times.
pub fn train(suite: &BenchmarkSuite, config: &BenchConfig) -> Result<NetworkParams, BenchError> {
    let arch = Architecture::new(
        vec![config.input_dim, config.hidden, config.output_dim],
        config.degree,
    )?;
    let n_cex = suite.instances.iter().filter(|i| i.planted.is_some()).count().max(1);
    let n_all = suite.instances.len().max(1);
    let mut final_losses = Vec::new();

    for attempt in 0..5u64 {
        let init_seed = config
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(attempt + 1);
        let net = init_params(&arch, init_seed);
        let mut flat = net.flatten();
        let mut adam = Adam::new(flat.len());
        let mut last_loss = f64::INFINITY;

        for epoch in 0..config.epochs {
            let net = NetworkParams::from_flat(&arch, &flat)?;
            let mut batch: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
            let mut loss = 0.0;
            for inst in &suite.instances {
                // Cross-entropy on every base point.
                let logits = net.forward(&inst.x0)?;
                let p = softmax(&logits);
                loss += -p[inst.label].max(1e-300).ln() / n_all as f64;
                let mut ct: Vec<f64> = p.clone();
                ct[inst.label] -= 1.0;
                for c in &mut ct {
                    *c /= n_all as f64;
                }
                batch.push((inst.x0.clone(), ct));

                // Hinge on the planted counterexample.
                if let Some(planted) = &inst.planted {
                    let cex = inst.counterexample().unwrap();
                    let logits = net.forward(&cex)?;
                    let h = logits[inst.label] - logits[planted.target_label] + config.margin;
                    if h > 0.0 {
                        loss += h / n_cex as f64;
                        let mut ct = vec![0.0; logits.len()];
                        ct[inst.label] = 1.0 / n_cex as f64;
                        ct[planted.target_label] = -1.0 / n_cex as f64;
                        batch.push((cex, ct));
                    }
                }
            }
            let grad = net.parameter_gradients(&batch)?;
            adam.step(&mut flat, &grad.flatten(), cyclic_lr(config.lr, epoch, config.epochs));
            last_loss = loss;
        }

        let trained = NetworkParams::from_flat(&arch, &flat)?;
        if sanity_ok(&trained, suite)? {
            return Ok(trained);
        }
        final_losses.push(last_loss);
    }
    Err(BenchError::TrainingFailed { attempts: 5, final_losses })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Unverifiable,
    Clean,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceRow {
    pub id: usize,
    pub kind: InstanceKind,
    pub verdict: Verdict,
    pub margin: Option<f64>,
    pub witness_distance: Option<f64>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<InstanceRow>,
    pub falsified_unverifiable: f64,
    pub falsified_clean: f64,
    pub mean_runtime_s: f64,
    pub std_runtime_s: f64,
}

impl BenchReport {
    /// Deterministic per-instance results (no timing columns).
    pub fn instances_csv(&self) -> String {
        let mut out = String::from("id,kind,verdict,margin,witness_distance\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.id,
                match r.kind {
                    InstanceKind::Unverifiable => "unverifiable",
                    InstanceKind::Clean => "clean",
                },
                match r.verdict {
                    Verdict::Verified => "verified",
                    Verdict::Falsified => "falsified",
                },
                r.margin.map_or("inf".into(), |m| format!("{m}")),
                r.witness_distance.map_or(String::new(), |d| format!("{d}")),
            ));
        }
        out
    }

    /// Wall-clock seconds per instance; hardware-bound and excluded from the
    /// byte-determinism guarantee.
    pub fn timings_csv(&self) -> String {
        let mut out = String::from("id,seconds\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.6}\n", r.id, r.runtime_s));
        }
        out
    }

    /// One summary row with the layout of the evaluation table:
    /// h, d, epsilon, falsified rates, mean and std runtime.
    pub fn summary_csv_row(&self, config: &BenchConfig) -> String {
        format!(
            "{},{},{},{:.0}%,{:.0}%,{:.4},{:.4}\n",
            config.hidden,
            config.degree,
            config.epsilon,
            100.0 * self.falsified_unverifiable,
            100.0 * self.falsified_clean,
            self.mean_runtime_s,
            self.std_runtime_s
        )
    }

    pub const SUMMARY_HEADER: &'static str =
        "h,d,epsilon,falsified_unverifiable,falsified_clean,time_mean_s,time_std_s\n";
}

/// Certifies every instance at `(x0, epsilon)`. Any `verified` verdict on a
/// planted instance is a soundness error and fails the run.
pub fn run(
    suite: &BenchmarkSuite,
    params: &NetworkParams,
    epsilon: f64,
    vcfg: &VerifierConfig,
) -> Result<BenchReport, BenchError> {
    let outcomes: Vec<Result<InstanceRow, BenchError>> = suite
        .instances
        .par_iter()
        .enumerate()
        .map(|(id, inst)| {
            let started = Instant::now();
            let result = certify(params, &inst.x0, epsilon, vcfg)
                .map_err(|source| BenchError::Verify { instance: id, source })?;
            let runtime_s = started.elapsed().as_secs_f64();
            Ok(InstanceRow {
                id,
                kind: if inst.planted.is_some() {
                    InstanceKind::Unverifiable
                } else {
                    InstanceKind::Clean
                },
                verdict: result.verdict,
                margin: result.margin,
                witness_distance: result.witness.map(|w| w.distance),
                runtime_s,
            })
        })
        .collect();
    let rows: Vec<InstanceRow> = outcomes.into_iter().collect::<Result<_, _>>()?;

    for row in &rows {
        if row.kind == InstanceKind::Unverifiable && row.verdict == Verdict::Verified {
            return Err(BenchError::Soundness {
                instance: row.id,
                margin: row.margin.unwrap_or(f64::INFINITY),
                epsilon,
            });
        }
    }

    let rate = |kind: InstanceKind| {
        let of_kind: Vec<&InstanceRow> = rows.iter().filter(|r| r.kind == kind).collect();
        if of_kind.is_empty() {
            return 0.0;
        }
        of_kind.iter().filter(|r| r.verdict == Verdict::Falsified).count() as f64
            / of_kind.len() as f64
    };
    let times: Vec<f64> = rows.iter().map(|r| r.runtime_s).collect();
    let mean = times.iter().sum::<f64>() / times.len().max(1) as f64;
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
        / times.len().max(1) as f64;
    Ok(BenchReport {
        falsified_unverifiable: rate(InstanceKind::Unverifiable),
        falsified_clean: rate(InstanceKind::Clean),
        mean_runtime_s: mean,
        std_runtime_s: var.sqrt(),
        rows,
    })
}
