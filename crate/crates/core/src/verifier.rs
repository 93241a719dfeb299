//! End-to-end robustness certification: per-pair boundary margins via
//! homotopy-solved critical systems, overall margin, verdicts, and witnesses.

use crate::critsys::{
    build_full, build_relaxed, is_feasible, solve_critical_with_budget, CritError,
};
use crate::homotopy::{TrackerConfig, DEFAULT_PATH_BUDGET};
use crate::pnn::{NetworkParams, PnnError};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;

/// Relative tolerance on the top-logit gap below which the prediction
/// counts as a tie and certification is refused.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug)]
pub enum VerifyError {
    /// The argmax at the test point is not unique.
    AmbiguousPrediction { best: usize, runner_up: usize },
    /// Every path of a pair's system failed; the margin cannot be trusted.
    AllPathsFailed { pair: usize },
    Pnn(PnnError),
    Critical(CritError),
}

impl fmt::Display for VerifyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyError::AmbiguousPrediction { best, runner_up } => write!(
                f,
                "not certifiable at tie: classes {best} and {runner_up} share the max logit"
            ),
            VerifyError::AllPathsFailed { pair } => {
                write!(f, "all homotopy paths failed for class pair against {pair}")
            }
            VerifyError::Pnn(e) => write!(f, "{e}"),
            VerifyError::Critical(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for VerifyError {}

impl From<PnnError> for VerifyError {
    fn from(e: PnnError) -> Self {
        VerifyError::Pnn(e)
    }
}

impl From<CritError> for VerifyError {
    fn from(e: CritError) -> Self {
        VerifyError::Critical(e)
    }
}

#[derive(Debug, Clone)]
pub struct VerifierConfig {
    pub tracker: TrackerConfig,
    pub seed: u64,
    pub path_budget: usize,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            tracker: TrackerConfig::default(),
            seed: 0,
            path_budget: DEFAULT_PATH_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Verified,
    Falsified,
}

/// Nearest boundary projection backing the margin.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub point: Vec<f64>,
    /// The class whose boundary the witness lies on.
    pub pair: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub paths: usize,
    pub converged: usize,
    pub diverged: usize,
    pub stalled: usize,
    pub singular_discarded: usize,
    /// Pairs whose zero set produced no reachable real critical point; such
    /// pairs contribute an infinite margin and are never silently dropped.
    pub pairs_without_real: Vec<usize>,
}

/// Margin report for one test point. `margin = None` encodes an infinite
/// margin (no pair has a reachable real boundary point).
#[derive(Debug, Clone, Serialize)]
pub struct MarginReport {
    pub predicted_class: usize,
    pub margin: Option<f64>,
    pub witness: Option<Witness>,
    /// Per-pair relaxed margins; `None` is an infinite pair margin.
    pub per_pair: BTreeMap<usize, Option<f64>>,
    pub diagnostics: Diagnostics,
    pub seed: u64,
}

impl MarginReport {
    pub fn margin_value(&self) -> f64 {
        self.margin.unwrap_or(f64::INFINITY)
    }
}

/// Certification record: margin report plus the epsilon verdict.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationResult {
    pub epsilon: f64,
    pub verdict: Verdict,
    pub margin: Option<f64>,
    pub witness: Option<Witness>,
    pub per_pair: BTreeMap<usize, Option<f64>>,
    pub diagnostics: Diagnostics,
    pub seed: u64,
}

fn predicted_class(logits: &[f64]) -> Result<usize, VerifyError> {
    let mut best = 0;
    for i in 1..logits.len() {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    let scale = 1.0 + logits.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    for i in 0..logits.len() {
        if i != best && logits[best] - logits[i] <= TIE_TOL * scale {
            return Err(VerifyError::AmbiguousPrediction { best, runner_up: i });
        }
    }
    Ok(best)
}

/// Relaxed margin: for each class pair, project onto the full zero set of
/// the logit difference and keep the closest real critical point; the
/// overall margin is the minimum over pairs (Prop.-style relaxation, exact
/// under a unique argmax).
pub fn compute_margin(
    params: &NetworkParams,
    xi: &[f64],
    cfg: &VerifierConfig,
) -> Result<MarginReport, VerifyError> {
    let logits = params.forward(xi)?;
    let c = predicted_class(&logits)?;
    let k = logits.len();
    let pairs: Vec<usize> = (0..k).filter(|&i| i != c).collect();

    let results: Vec<Result<(usize, PairOutcome), VerifyError>> = pairs
        .par_iter()
        .map(|&cp| pair_margin(params, xi, c, cp, cfg).map(|o| (cp, o)))
        .collect();

    let mut per_pair = BTreeMap::new();
    let mut diagnostics = Diagnostics::default();
    let mut best: Option<Witness> = None;
    for r in results {
        let (cp, outcome) = r?;
        diagnostics.paths += outcome.stats.paths;
        diagnostics.converged += outcome.stats.converged;
        diagnostics.diverged += outcome.stats.diverged;
        diagnostics.stalled += outcome.stats.stalled;
        diagnostics.singular_discarded += outcome.singular_discarded;
        match outcome.nearest {
            Some(w) => {
                per_pair.insert(cp, Some(w.distance));
                if best.as_ref().map_or(true, |b| w.distance < b.distance) {
                    best = Some(w);
                }
            }
            None => {
                per_pair.insert(cp, None);
                diagnostics.pairs_without_real.push(cp);
            }
        }
    }
    Ok(MarginReport {
        predicted_class: c,
        margin: best.as_ref().map(|w| w.distance),
        witness: best,
        per_pair,
        diagnostics,
        seed: cfg.seed,
    })
}

struct PairOutcome {
    nearest: Option<Witness>,
    stats: crate::homotopy::SolveStats,
    singular_discarded: usize,
}

fn pair_margin(
    params: &NetworkParams,
    xi: &[f64],
    c: usize,
    cp: usize,
    cfg: &VerifierConfig,
) -> Result<PairOutcome, VerifyError> {
    let boundary = params.boundary_polynomial(c, cp)?;
    if boundary.is_zero() {
        // Identical logits: the pair never separates; treat as unreachable.
        return Ok(PairOutcome {
            nearest: None,
            stats: crate::homotopy::SolveStats::default(),
            singular_discarded: 0,
        });
    }
    let cs = build_relaxed(&boundary, xi)?;
    let solved = solve_critical_with_budget(&cs, &cfg.tracker, cfg.seed ^ (cp as u64), cfg.path_budget)?;
    if solved.stats.paths > 0 && solved.stats.converged == 0 && solved.stats.stalled == 0 {
        return Err(VerifyError::AllPathsFailed { pair: cp });
    }
    let nearest = solved
        .real_points(xi)
        .into_iter()
        .min_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap())
        .map(|p| Witness { point: p.x, pair: cp, distance: p.distance });
    Ok(PairOutcome {
        nearest,
        stats: solved.stats,
        singular_discarded: solved.singular_discarded(),
    })
}

/// Verifies the epsilon-ball: `margin >= epsilon` certifies (ties verify,
/// matching the open-ball semantics); otherwise the witness is a concrete
/// boundary point at distance `margin < epsilon`.
pub fn certify(
    params: &NetworkParams,
    xi: &[f64],
    epsilon: f64,
    cfg: &VerifierConfig,
) -> Result<VerificationResult, VerifyError> {
    let report = compute_margin(params, xi, cfg)?;
    let verdict = if report.margin_value() >= epsilon {
        Verdict::Verified
    } else {
        Verdict::Falsified
    };
    Ok(VerificationResult {
        epsilon,
        verdict,
        margin: report.margin,
        witness: report.witness,
        per_pair: report.per_pair,
        diagnostics: report.diagnostics,
        seed: report.seed,
    })
}

/// Margin through the full KKT systems with post-solve feasibility
/// filtering; the cross-check oracle for the relaxation equivalence.
pub fn margin_full_kkt(
    params: &NetworkParams,
    xi: &[f64],
    cfg: &VerifierConfig,
) -> Result<f64, VerifyError> {
    let logits_at_xi = params.forward(xi)?;
    let c = predicted_class(&logits_at_xi)?;
    let k = logits_at_xi.len();
    let logit_polys = params.logit_polynomials()?;

    let pairs: Vec<usize> = (0..k).filter(|&i| i != c).collect();
    let mut margin = f64::INFINITY;
    for cp in pairs {
        let cs = build_full(&logit_polys, xi, c, cp)?;
        let solved =
            solve_critical_with_budget(&cs, &cfg.tracker, cfg.seed ^ (cp as u64), cfg.path_budget)?;
        for p in solved.real_points(xi) {
            if is_feasible(&cs, &p) {
                margin = margin.min(p.distance);
            }
        }
    }
    Ok(margin)
}
