//! Homotopy continuation for square polynomial systems: total-degree start
//! systems, the gamma trick, Euler-predictor / Newton-corrector path tracking
//! with adaptive steps, and endpoint classification.
//!
//! The deformation is `H(z, t; gamma) = gamma (1 - t) G(z) + t F(z)` tracked
//! from the roots-of-unity solutions of `G_i = z_i^{d_i} - 1` at `t = 0` to
//! the target solutions at `t = 1`. Tracking is affine with a norm cap:
//! paths escaping to infinity are counted as diverged, never reported as
//! solutions.

use crate::poly::{PolyError, PolySystem, Polynomial};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;

/// Refuse total-degree starts whose Bezout count exceeds this many paths.
pub const DEFAULT_PATH_BUDGET: usize = 100_000;

#[derive(Debug)]
pub enum HomotopyError {
    NotSquare { equations: usize, nvars: usize },
    /// Zero or constant equation: no total-degree start system exists.
    DegenerateEquation { index: usize },
    DegreeMismatch { index: usize, start: u32, target: u32 },
    PathBudget { bezout: u128, budget: usize },
    ZeroGamma,
    BadConfig(String),
    Poly(PolyError),
}

impl fmt::Display for HomotopyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HomotopyError::NotSquare { equations, nvars } => {
                write!(f, "system is not square: {equations} equations in {nvars} variables")
            }
            HomotopyError::DegenerateEquation { index } => {
                write!(f, "equation {index} is zero or constant")
            }
            HomotopyError::DegreeMismatch { index, start, target } => write!(
                f,
                "equation {index}: start degree {start} != target degree {target}"
            ),
            HomotopyError::PathBudget { bezout, budget } => {
                write!(f, "Bezout count {bezout} exceeds path budget {budget}")
            }
            HomotopyError::ZeroGamma => write!(f, "gamma must be nonzero"),
            HomotopyError::BadConfig(m) => write!(f, "bad tracker config: {m}"),
            HomotopyError::Poly(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for HomotopyError {}

impl From<PolyError> for HomotopyError {
    fn from(e: PolyError) -> Self {
        HomotopyError::Poly(e)
    }
}

/// Adaptive step-size and corrector controls.
#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Step multiplier after `grow_after` consecutive corrector successes.
    pub step_grow: f64,
    pub grow_after: u32,
    /// Step multiplier on corrector failure.
    pub step_shrink: f64,
    /// Residual tolerance; accepted when `res <= newton_tol * (1 + |z|)`.
    pub newton_tol: f64,
    pub newton_max_iters: u32,
    /// Declare divergence-to-infinity past this norm.
    pub path_norm_cap: f64,
    pub t_end: f64,
    /// From this `t` on, steps are clamped to `endgame_max_step`.
    pub endgame_t: f64,
    pub endgame_max_step: f64,
    /// Paths beyond this norm in the endgame are treated as escaping to
    /// infinity: the step halves the remaining interval instead of landing
    /// on `t_end`, so escapers run into the norm cap rather than being
    /// Newton-polished onto a finite root they do not belong to.
    pub endgame_escape_norm: f64,
    /// Safety cap on accepted steps per path.
    pub max_steps: usize,
    pub record_trace: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            initial_step: 0.05,
            min_step: 1e-7,
            max_step: 0.2,
            step_grow: 1.5,
            grow_after: 4,
            step_shrink: 0.5,
            newton_tol: 1e-10,
            newton_max_iters: 6,
            path_norm_cap: 1e8,
            t_end: 1.0,
            endgame_t: 0.95,
            endgame_max_step: 1e-3,
            endgame_escape_norm: 1e3,
            max_steps: 10_000,
            record_trace: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), HomotopyError> {
        if !(0.0 < self.min_step && self.min_step < self.initial_step && self.initial_step < 1.0) {
            return Err(HomotopyError::BadConfig(
                "require 0 < min_step < initial_step < 1".into(),
            ));
        }
        if self.newton_tol <= 0.0 || self.path_norm_cap <= 0.0 {
            return Err(HomotopyError::BadConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    Converged,
    Diverged,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct TracePoint {
    pub t: f64,
    pub step: f64,
    pub residual: f64,
    /// Accepted point, recorded for path diagnostics.
    pub z: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub endpoint: Vec<Complex64>,
    pub status: PathStatus,
    pub steps_taken: usize,
    pub final_residual: f64,
    pub trace: Vec<TracePoint>,
}

/// Term list with per-variable exponents, flattened for fast evaluation.
struct CompiledPoly {
    terms: Vec<(Complex64, Vec<(usize, u32)>)>,
}

impl CompiledPoly {
    fn compile(p: &Polynomial) -> Self {
        let terms = p
            .terms()
            .map(|(m, c)| {
                let factors: Vec<(usize, u32)> = m
                    .exponents()
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| (i, e))
                    .collect();
                (*c, factors)
            })
            .collect();
        CompiledPoly { terms }
    }

    fn eval(&self, powers: &[Vec<Complex64>]) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for (c, factors) in &self.terms {
            let mut t = *c;
            for &(var, exp) in factors {
                t *= powers[var][exp as usize];
            }
            acc += t;
        }
        acc
    }
}

/// A square system compiled together with its Jacobian.
pub(crate) struct CompiledSystem {
    eqs: Vec<CompiledPoly>,
    /// Row-major `nvars x nvars` Jacobian entries.
    jac: Vec<CompiledPoly>,
    max_exp: Vec<u32>,
}

impl CompiledSystem {
    pub(crate) fn compile(sys: &PolySystem) -> Self {
        let nvars = sys.nvars();
        let eqs: Vec<CompiledPoly> = sys.equations().iter().map(CompiledPoly::compile).collect();
        let mut jac = Vec::with_capacity(nvars * nvars);
        for eq in sys.equations() {
            for j in 0..nvars {
                jac.push(CompiledPoly::compile(&eq.partial(j)));
            }
        }
        let mut max_exp = vec![0u32; nvars];
        for eq in sys.equations() {
            for (m, _) in eq.terms() {
                for (i, &e) in m.exponents().iter().enumerate() {
                    max_exp[i] = max_exp[i].max(e);
                }
            }
        }
        CompiledSystem { eqs, jac, max_exp }
    }

    fn fill_powers(&self, z: &[Complex64], powers: &mut Vec<Vec<Complex64>>) {
        fill_power_tables(&self.max_exp, z, powers);
    }

    fn eval_into(&self, powers: &[Vec<Complex64>], out: &mut [Complex64]) {
        for (o, eq) in out.iter_mut().zip(&self.eqs) {
            *o = eq.eval(powers);
        }
    }

    fn jac_into(&self, powers: &[Vec<Complex64>], out: &mut [Complex64]) {
        for (o, entry) in out.iter_mut().zip(&self.jac) {
            *o = entry.eval(powers);
        }
    }
}

/// Per-variable tables `powers[i][e] = z_i^e`, sized to cover `max_exp`.
fn fill_power_tables(max_exp: &[u32], z: &[Complex64], powers: &mut Vec<Vec<Complex64>>) {
    if powers.len() != max_exp.len() {
        *powers = max_exp.iter().map(|&e| vec![Complex64::ONE; e as usize + 1]).collect();
    }
    for (i, &zi) in z.iter().enumerate() {
        let row = &mut powers[i];
        row[0] = Complex64::ONE;
        for e in 1..row.len() {
            row[e] = row[e - 1] * zi;
        }
    }
}

/// The deformation `gamma (1 - t) G + t F` between systems of equal shape.
pub struct Homotopy {
    target: PolySystem,
    start: PolySystem,
    gamma: Complex64,
    compiled_target: CompiledSystem,
    compiled_start: CompiledSystem,
    /// Elementwise max exponent over both systems; sizes the shared tables.
    max_exp: Vec<u32>,
}

struct Scratch {
    powers: Vec<Vec<Complex64>>,
    f_vals: Vec<Complex64>,
    g_vals: Vec<Complex64>,
    f_jac: Vec<Complex64>,
    g_jac: Vec<Complex64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            powers: Vec::new(),
            f_vals: vec![Complex64::ZERO; n],
            g_vals: vec![Complex64::ZERO; n],
            f_jac: vec![Complex64::ZERO; n * n],
            g_jac: vec![Complex64::ZERO; n * n],
        }
    }
}

fn norm2(z: &[Complex64]) -> f64 {
    z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn inf_norm(z: &[Complex64]) -> f64 {
    z.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

impl Homotopy {
    pub fn new(
        target: PolySystem,
        start: PolySystem,
        gamma: Complex64,
    ) -> Result<Self, HomotopyError> {
        if !target.is_square() {
            return Err(HomotopyError::NotSquare {
                equations: target.equations().len(),
                nvars: target.nvars(),
            });
        }
        if start.nvars() != target.nvars() || start.equations().len() != target.equations().len() {
            return Err(HomotopyError::NotSquare {
                equations: start.equations().len(),
                nvars: start.nvars(),
            });
        }
        for (i, (gs, fs)) in start.equations().iter().zip(target.equations()).enumerate() {
            if gs.degree() != fs.degree() {
                return Err(HomotopyError::DegreeMismatch {
                    index: i,
                    start: gs.degree(),
                    target: fs.degree(),
                });
            }
        }
        if gamma == Complex64::ZERO {
            return Err(HomotopyError::ZeroGamma);
        }
        let compiled_target = CompiledSystem::compile(&target);
        let compiled_start = CompiledSystem::compile(&start);
        let max_exp = compiled_target
            .max_exp
            .iter()
            .zip(&compiled_start.max_exp)
            .map(|(a, b)| *a.max(b))
            .collect();
        Ok(Homotopy { target, start, gamma, compiled_target, compiled_start, max_exp })
    }

    pub fn target(&self) -> &PolySystem {
        &self.target
    }

    pub fn start(&self) -> &PolySystem {
        &self.start
    }

    pub fn gamma(&self) -> Complex64 {
        self.gamma
    }

    fn nvars(&self) -> usize {
        self.target.nvars()
    }

    /// Evaluates `H(z, t)` into `h`, reusing power tables in `s`.
    fn eval_h(&self, z: &[Complex64], t: f64, s: &mut Scratch, h: &mut [Complex64]) {
        fill_power_tables(&self.max_exp, z, &mut s.powers);
        self.compiled_target.eval_into(&s.powers, &mut s.f_vals);
        self.compiled_start.eval_into(&s.powers, &mut s.g_vals);
        let gq = self.gamma * (1.0 - t);
        for i in 0..h.len() {
            h[i] = gq * s.g_vals[i] + t * s.f_vals[i];
        }
    }

    /// Evaluates the z-Jacobian of `H` at `(z, t)` into `jh` (row-major).
    fn eval_jac(&self, z: &[Complex64], t: f64, s: &mut Scratch, jh: &mut [Complex64]) {
        fill_power_tables(&self.max_exp, z, &mut s.powers);
        self.compiled_target.jac_into(&s.powers, &mut s.f_jac);
        self.compiled_start.jac_into(&s.powers, &mut s.g_jac);
        let gq = self.gamma * (1.0 - t);
        for i in 0..jh.len() {
            jh[i] = gq * s.g_jac[i] + t * s.f_jac[i];
        }
    }

    /// `dH/dt = F(z) - gamma G(z)`, assuming `eval_h` ran at the same `z`.
    fn eval_dt(&self, s: &Scratch, out: &mut [Complex64]) {
        for i in 0..out.len() {
            out[i] = s.f_vals[i] - self.gamma * s.g_vals[i];
        }
    }

    /// Newton iteration on `H(., t)` from `z`; max-norm residual acceptance
    /// at `tol * (1 + |z|)`.
    fn newton_at(
        &self,
        t: f64,
        z: &mut Vec<Complex64>,
        tol: f64,
        max_iters: u32,
        s: &mut Scratch,
    ) -> (bool, f64) {
        let n = self.nvars();
        let mut h = vec![Complex64::ZERO; n];
        let mut jh = vec![Complex64::ZERO; n * n];
        for _ in 0..max_iters {
            self.eval_h(z, t, s, &mut h);
            let res = inf_norm(&h);
            if res <= tol * (1.0 + norm2(z)) {
                return (true, res);
            }
            self.eval_jac(z, t, s, &mut jh);
            let jm = DMatrix::from_row_slice(n, n, &jh);
            let rhs = DVector::from_column_slice(&h);
            match jm.lu().solve(&rhs) {
                Some(delta) => {
                    for i in 0..n {
                        z[i] -= delta[i];
                    }
                }
                None => return (false, res),
            }
            if inf_norm(z) > 1e13 {
                return (false, res);
            }
        }
        self.eval_h(z, t, s, &mut h);
        let res = inf_norm(&h);
        (res <= tol * (1.0 + norm2(z)), res)
    }

    /// Endpoint polish at `t = t_end` with an extended iteration budget.
    /// Multiplicity > 1 endpoints converge only linearly, so the in-path
    /// iteration cap would reject them; iteration continues past the first
    /// acceptance until the residual stagnates, and the best iterate wins.
    /// That squeezes collided endpoints to near machine accuracy, close
    /// enough for the dedup clustering to recognize the multiplicity.
    fn polish_endpoint(
        &self,
        t: f64,
        z: &mut Vec<Complex64>,
        tol: f64,
        s: &mut Scratch,
    ) -> (bool, f64) {
        let n = self.nvars();
        let mut h = vec![Complex64::ZERO; n];
        let mut jh = vec![Complex64::ZERO; n * n];
        let mut best = z.clone();
        let mut best_res = f64::INFINITY;
        let mut stagnant = 0;
        for _ in 0..80 {
            self.eval_h(z, t, s, &mut h);
            let res = inf_norm(&h);
            if res < best_res {
                // Multiplicity-m convergence still shrinks the residual by
                // ((m-1)/m)^m < 1/2 per step; only machine-level noise stalls.
                if res > 0.5 * best_res {
                    stagnant += 1;
                } else {
                    stagnant = 0;
                }
                best_res = res;
                best.copy_from_slice(z);
            } else {
                stagnant += 1;
            }
            if stagnant >= 8 || best_res == 0.0 {
                break;
            }
            self.eval_jac(z, t, s, &mut jh);
            let jm = DMatrix::from_row_slice(n, n, &jh);
            let rhs = DVector::from_column_slice(&h);
            match jm.lu().solve(&rhs) {
                Some(delta) => {
                    for i in 0..n {
                        z[i] -= delta[i];
                    }
                }
                None => break,
            }
        }
        z.copy_from_slice(&best);
        (best_res <= tol * (1.0 + norm2(z)), best_res)
    }
}

/// Tracks one path of `h` from the start solution `z0` at `t = 0`.
pub fn track_path(h: &Homotopy, z0: &[Complex64], cfg: &TrackerConfig) -> PathResult {
    let n = h.nvars();
    let mut s = Scratch::new(n);
    let mut z = z0.to_vec();
    let mut trace = Vec::new();

    // Establish the start-point precondition; exact roots pass untouched.
    let (ok, res0) = h.newton_at(0.0, &mut z, 1e-8, cfg.newton_max_iters, &mut s);
    if !ok {
        return PathResult {
            endpoint: z,
            status: PathStatus::Stalled,
            steps_taken: 0,
            final_residual: res0,
            trace,
        };
    }

    let mut t = 0.0_f64;
    let mut step = cfg.initial_step;
    let mut streak = 0u32;
    let mut steps_taken = 0usize;
    let mut hbuf = vec![Complex64::ZERO; n];
    let mut jbuf = vec![Complex64::ZERO; n * n];
    let mut dtbuf = vec![Complex64::ZERO; n];

    while t < cfg.t_end - 1e-14 {
        if inf_norm(&z) > cfg.path_norm_cap {
            return PathResult {
                endpoint: z,
                status: PathStatus::Diverged,
                steps_taken,
                final_residual: f64::INFINITY,
                trace,
            };
        }
        if steps_taken >= cfg.max_steps {
            return PathResult {
                endpoint: z,
                status: PathStatus::Stalled,
                steps_taken,
                final_residual: f64::NAN,
                trace,
            };
        }
        let mut dt = step.min(cfg.t_end - t);
        if t >= cfg.endgame_t {
            if inf_norm(&z) > cfg.endgame_escape_norm {
                // Escaping path: never land on t_end; halve the remaining
                // interval so the norm cap decides.
                dt = dt.min(0.5 * (cfg.t_end - t));
                if dt < cfg.min_step {
                    return PathResult {
                        endpoint: z,
                        status: PathStatus::Stalled,
                        steps_taken,
                        final_residual: f64::NAN,
                        trace,
                    };
                }
            } else {
                dt = dt.min(cfg.endgame_max_step);
            }
        }

        // Euler tangent predictor: dz/dt = -J^{-1} dH/dt.
        h.eval_h(&z, t, &mut s, &mut hbuf);
        h.eval_dt(&s, &mut dtbuf);
        h.eval_jac(&z, t, &mut s, &mut jbuf);
        let jm = DMatrix::from_row_slice(n, n, &jbuf);
        let rhs = DVector::from_column_slice(&dtbuf);
        let predicted = match jm.lu().solve(&rhs) {
            Some(dzdt) => {
                // Trust-region on the spatial motion: fast-turning regions
                // force small dt so neighboring paths stay resolved.
                let speed = dzdt.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                let max_dz = 0.1 * (1.0 + norm2(&z));
                if speed * dt > max_dz && t < cfg.endgame_t {
                    dt = (max_dz / speed).max(cfg.min_step);
                }
                let mut p = z.clone();
                for i in 0..n {
                    p[i] -= dt * dzdt[i];
                }
                p
            }
            None => {
                step *= cfg.step_shrink;
                streak = 0;
                if step < cfg.min_step {
                    return PathResult {
                        endpoint: z,
                        status: PathStatus::Stalled,
                        steps_taken,
                        final_residual: f64::NAN,
                        trace,
                    };
                }
                continue;
            }
        };

        let predictor_move = dist(&predicted, &z);
        let mut zc = predicted.clone();
        let (ok, res) = h.newton_at(t + dt, &mut zc, cfg.newton_tol, cfg.newton_max_iters, &mut s);
        // Corrector displacement guard: a correction far beyond the
        // predicted motion signals a jump onto a neighboring path. Paths
        // turn sharply approaching multiple endpoints, so the endgame runs
        // with a loose envelope (its clamped steps guard it instead).
        let contained = if t < cfg.endgame_t {
            dist(&zc, &predicted) <= 0.5 * predictor_move + 1e-8 * (1.0 + norm2(&z))
        } else {
            dist(&zc, &predicted) <= 4.0 * predictor_move + 1e-3 * (1.0 + norm2(&z))
        };
        if ok && contained {
            z = zc;
            t += dt;
            steps_taken += 1;
            streak += 1;
            // Adapt the nominal step to what actually worked (dt may have
            // been capped below it), then grow on a success streak.
            step = dt.max(cfg.min_step);
            if cfg.record_trace {
                trace.push(TracePoint { t, step: dt, residual: res, z: z.clone() });
            }
            if streak >= cfg.grow_after {
                step = (step * cfg.step_grow).min(cfg.max_step);
                streak = 0;
            }
        } else {
            step = dt * cfg.step_shrink;
            streak = 0;
            if step < cfg.min_step {
                return PathResult {
                    endpoint: z,
                    status: PathStatus::Stalled,
                    steps_taken,
                    final_residual: res,
                    trace,
                };
            }
        }
    }

    let tracked = z.clone();
    let (ok, res) = h.polish_endpoint(cfg.t_end, &mut z, cfg.newton_tol, &mut s);
    // A polish that moved far from the tracked point has jumped away from
    // this path's endpoint; refuse it.
    let jumped = dist(&z, &tracked) > 0.1 * (1.0 + norm2(&tracked));
    let status = if !ok || jumped {
        PathStatus::Stalled
    } else if inf_norm(&z) > cfg.path_norm_cap {
        PathStatus::Diverged
    } else {
        PathStatus::Converged
    };
    PathResult { endpoint: z, status, steps_taken, final_residual: res, trace }
}

/// Builds the total-degree start system `G_i = z_i^{d_i} - 1` and its full
/// grid of roots-of-unity start solutions (the Bezout count).
pub fn total_degree_start(
    f: &PolySystem,
    budget: usize,
) -> Result<(PolySystem, Vec<Vec<Complex64>>), HomotopyError> {
    if !f.is_square() {
        return Err(HomotopyError::NotSquare {
            equations: f.equations().len(),
            nvars: f.nvars(),
        });
    }
    let n = f.nvars();
    let degrees = f.degrees();
    for (i, (&d, eq)) in degrees.iter().zip(f.equations()).enumerate() {
        if d == 0 || eq.is_zero() {
            return Err(HomotopyError::DegenerateEquation { index: i });
        }
    }
    let bezout: u128 = degrees.iter().map(|&d| d as u128).product();
    if bezout > budget as u128 {
        return Err(HomotopyError::PathBudget { bezout, budget });
    }

    let mut equations = Vec::with_capacity(n);
    for (i, &d) in degrees.iter().enumerate() {
        let mut exps = vec![0u32; n];
        exps[i] = d;
        equations.push(Polynomial::from_real_terms(n, &[(exps, 1.0), (vec![0; n], -1.0)]));
    }
    let start = PolySystem::new(n, equations)?;

    // Roots of unity per coordinate, then the full product grid.
    let roots: Vec<Vec<Complex64>> = degrees
        .iter()
        .map(|&d| {
            (0..d)
                .map(|k| {
                    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / d as f64)
                })
                .collect()
        })
        .collect();
    let total = bezout as usize;
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        points.push(idx.iter().enumerate().map(|(i, &k)| roots[i][k]).collect());
        for i in (0..n).rev() {
            idx[i] += 1;
            if idx[i] < roots[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok((start, points))
}

/// Random unit-modulus gamma, deterministic in the seed.
pub fn gamma_from_seed(seed: u64) -> Complex64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    Complex64::from_polar(1.0, phi)
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub z: Vec<Complex64>,
    pub converged: bool,
    pub residual: f64,
    pub iterations: u32,
}

/// Newton's method on a square system at a fixed point in parameter space.
/// Declared converged when `|F(z)|_inf <= tol * (1 + |z|)` within
/// `max_iters` corrections; multiple roots fail this quadratic criterion.
pub fn newton_correct(
    system: &PolySystem,
    z0: &[Complex64],
    tol: f64,
    max_iters: u32,
) -> NewtonOutcome {
    let n = system.nvars();
    let compiled = CompiledSystem::compile(system);
    let mut powers: Vec<Vec<Complex64>> = Vec::new();
    let mut vals = vec![Complex64::ZERO; n];
    let mut jac = vec![Complex64::ZERO; n * n];
    let mut z = z0.to_vec();
    let mut iterations = 0;
    loop {
        compiled.fill_powers(&z, &mut powers);
        compiled.eval_into(&powers, &mut vals);
        let res = inf_norm(&vals);
        if res <= tol * (1.0 + norm2(&z)) {
            return NewtonOutcome { z, converged: true, residual: res, iterations };
        }
        if iterations >= max_iters {
            return NewtonOutcome { z, converged: false, residual: res, iterations };
        }
        compiled.jac_into(&powers, &mut jac);
        let jm = DMatrix::from_row_slice(n, n, &jac);
        let rhs = DVector::from_column_slice(&vals);
        match jm.lu().solve(&rhs) {
            Some(delta) => {
                for i in 0..n {
                    z[i] -= delta[i];
                }
            }
            None => {
                return NewtonOutcome { z, converged: false, residual: res, iterations };
            }
        }
        iterations += 1;
    }
}

/// Relative endpoint-clustering tolerance.
pub const DEDUP_TOL: f64 = 1e-6;
/// Imaginary-part threshold for declaring a solution real.
pub const REAL_TOL: f64 = 1e-6;
/// Jacobian regularity threshold relative to the largest singular value.
pub const SING_TOL: f64 = 1e-8;

/// One deduplicated solution: the cluster representative plus flags.
#[derive(Debug, Clone)]
pub struct Solution {
    pub point: Vec<Complex64>,
    pub is_real: bool,
    /// Smallest singular value of the system Jacobian exceeds
    /// `SING_TOL * sigma_max` at the representative.
    pub is_regular: bool,
    pub cluster_id: usize,
    /// Number of converged endpoints merged into this representative; a
    /// cluster of size > 1 is the numeric signature of multiplicity.
    pub cluster_size: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SolutionSet {
    pub solutions: Vec<Solution>,
}

impl SolutionSet {
    pub fn real(&self) -> impl Iterator<Item = &Solution> {
        self.solutions.iter().filter(|s| s.is_real)
    }
}

/// Clusters converged endpoints at [`DEDUP_TOL`] (relative), takes cluster
/// means as representatives, and flags realness and Jacobian regularity.
pub fn classify_solutions(endpoints: &[Vec<Complex64>], target: &PolySystem) -> SolutionSet {
    let m = endpoints.len();
    let mut cluster = (0..m).collect::<Vec<usize>>();
    fn find(cluster: &mut Vec<usize>, mut i: usize) -> usize {
        while cluster[i] != i {
            cluster[i] = cluster[cluster[i]];
            i = cluster[i];
        }
        i
    }
    for i in 0..m {
        for j in (i + 1)..m {
            let scale = 1.0 + norm2(&endpoints[i]).max(norm2(&endpoints[j]));
            let dist = endpoints[i]
                .iter()
                .zip(&endpoints[j])
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if dist <= DEDUP_TOL * scale {
                let (ri, rj) = (find(&mut cluster, i), find(&mut cluster, j));
                if ri != rj {
                    cluster[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }

    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..m {
        let root = find(&mut cluster, i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, members)) => members.push(i),
            None => groups.push((root, vec![i])),
        }
    }

    let jac = target.jacobian();
    let n = target.nvars();
    let mut solutions = Vec::with_capacity(groups.len());
    for (cluster_id, (_, members)) in groups.iter().enumerate() {
        let mut rep = vec![Complex64::ZERO; endpoints[members[0]].len()];
        for &i in members {
            for (r, v) in rep.iter_mut().zip(&endpoints[i]) {
                *r += v;
            }
        }
        for r in &mut rep {
            *r /= members.len() as f64;
        }
        let is_real = rep.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
            < REAL_TOL * (1.0 + norm2(&rep));
        let mut jvals = Vec::with_capacity(n * n);
        for row in &jac {
            for entry in row {
                jvals.push(entry.evaluate(&rep).unwrap_or(Complex64::ZERO));
            }
        }
        let jm = DMatrix::from_row_slice(n, n, &jvals);
        let svals = jm.singular_values();
        let smax = svals.iter().cloned().fold(0.0, f64::max);
        let smin = svals.iter().cloned().fold(f64::INFINITY, f64::min);
        let is_regular = smax > 0.0 && smin > SING_TOL * smax;
        solutions.push(Solution {
            point: rep,
            is_real,
            is_regular,
            cluster_id,
            cluster_size: members.len(),
        });
    }
    SolutionSet { solutions }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub paths: usize,
    pub converged: usize,
    pub diverged: usize,
    pub stalled: usize,
}

#[derive(Debug)]
pub struct SolveOutput {
    pub solutions: SolutionSet,
    pub stats: SolveStats,
    pub paths: Vec<PathResult>,
}

/// Complete solve of a square system: total-degree start, gamma trick,
/// parallel path tracking (merged in start-point order), classification.
pub fn solve_total_degree(
    f: &PolySystem,
    cfg: &TrackerConfig,
    seed: u64,
) -> Result<SolveOutput, HomotopyError> {
    solve_total_degree_with_budget(f, cfg, seed, DEFAULT_PATH_BUDGET)
}

pub fn solve_total_degree_with_budget(
    f: &PolySystem,
    cfg: &TrackerConfig,
    seed: u64,
    budget: usize,
) -> Result<SolveOutput, HomotopyError> {
    cfg.validate()?;
    let (start, points) = total_degree_start(f, budget)?;
    let gamma = gamma_from_seed(seed);
    let h = Homotopy::new(f.clone(), start, gamma)?;
    let results: Vec<PathResult> =
        points.par_iter().map(|z0| track_path(&h, z0, cfg)).collect();
    let mut stats = SolveStats { paths: results.len(), ..Default::default() };
    let mut endpoints = Vec::new();
    for r in &results {
        match r.status {
            PathStatus::Converged => {
                stats.converged += 1;
                endpoints.push(r.endpoint.clone());
            }
            PathStatus::Diverged => stats.diverged += 1,
            PathStatus::Stalled => stats.stalled += 1,
        }
    }
    let solutions = classify_solutions(&endpoints, f);
    Ok(SolveOutput { solutions, stats, paths: results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn univariate(coeffs: &[f64]) -> PolySystem {
        // coeffs ascending: c0 + c1 x + ..
        let terms: Vec<(Vec<u32>, f64)> =
            coeffs.iter().enumerate().map(|(i, &v)| (vec![i as u32], v)).collect();
        PolySystem::new(1, vec![Polynomial::from_real_terms(1, &terms)]).unwrap()
    }

    #[test]
    fn cubic_start_system_roots() {
        let f = univariate(&[-8.0, 8.0, -4.0, 1.0]);
        let (g, pts) = total_degree_start(&f, 100).unwrap();
        assert_eq!(g.degrees(), vec![3]);
        assert_eq!(pts.len(), 3);
        // All three cube roots of unity, starting at 1.
        assert!((pts[0][0] - c(1.0, 0.0)).norm() < 1e-15);
        let half = 0.5;
        let s3 = 3.0_f64.sqrt() / 2.0;
        assert!((pts[1][0] - c(-half, s3)).norm() < 1e-12);
        assert!((pts[2][0] - c(-half, -s3)).norm() < 1e-12);
    }

    #[test]
    fn bezout_grid_size_and_budget() {
        let p = Polynomial::from_real_terms(4, &[(vec![3, 0, 0, 0], 1.0), (vec![0, 0, 0, 0], -1.0)]);
        let q = Polynomial::from_real_terms(4, &[(vec![0, 3, 0, 0], 1.0), (vec![0, 1, 0, 0], -1.0)]);
        let r = Polynomial::from_real_terms(4, &[(vec![0, 0, 3, 0], 1.0), (vec![0, 0, 1, 0], 2.0)]);
        let s = Polynomial::from_real_terms(4, &[(vec![0, 0, 0, 3], 1.0), (vec![1, 0, 0, 0], 1.0)]);
        let f = PolySystem::new(4, vec![p, q, r, s]).unwrap();
        let (_, pts) = total_degree_start(&f, 100).unwrap();
        assert_eq!(pts.len(), 81);
        assert!(matches!(
            total_degree_start(&f, 80),
            Err(HomotopyError::PathBudget { bezout: 81, .. })
        ));
    }

    #[test]
    fn degenerate_equation_refused() {
        let f = PolySystem::new(1, vec![Polynomial::constant_re(1, 3.0)]).unwrap();
        assert!(matches!(
            total_degree_start(&f, 10),
            Err(HomotopyError::DegenerateEquation { index: 0 })
        ));
    }

    #[test]
    fn fig2_cubic_fixture() {
        // x^3 - 4x^2 + 8x - 8 from x^3 - 1: roots {2, 1 +/- sqrt(3) i}.
        let f = univariate(&[-8.0, 8.0, -4.0, 1.0]);
        let out = solve_total_degree(&f, &TrackerConfig::default(), 7).unwrap();
        assert_eq!(out.stats.converged, 3);
        let mut found: Vec<Complex64> = out.solutions.solutions.iter().map(|s| s.point[0]).collect();
        found.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        let s3 = 3.0_f64.sqrt();
        assert!((found[0] - c(1.0, -s3)).norm() < 1e-8);
        assert!((found[1] - c(2.0, 0.0)).norm() < 1e-8);
        assert!((found[2] - c(1.0, s3)).norm() < 1e-8);
    }

    #[test]
    fn identity_homotopy_keeps_start_points() {
        let f = univariate(&[-1.0, 0.0, 0.0, 1.0]);
        let (g, pts) = total_degree_start(&f, 10).unwrap();
        let h = Homotopy::new(g.clone(), g, c(0.3, 0.8)).unwrap();
        for p in &pts {
            let r = track_path(&h, p, &TrackerConfig::default());
            assert_eq!(r.status, PathStatus::Converged);
            assert!((r.endpoint[0] - p[0]).norm() < 1e-9);
        }
    }

    #[test]
    fn quadratic_endpoints() {
        // x^2 - 2x from x^2 - 1: endpoints {0, 2}.
        let f = univariate(&[0.0, -2.0, 1.0]);
        let out = solve_total_degree(&f, &TrackerConfig::default(), 3).unwrap();
        let mut roots: Vec<f64> = out.solutions.solutions.iter().map(|s| s.point[0].re).collect();
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((roots[0] - 0.0).abs() < 1e-9);
        assert!((roots[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn newton_exact_root_unchanged() {
        let f = univariate(&[-2.0, 0.0, 1.0]);
        let root = 2.0_f64.sqrt();
        let out = newton_correct(&f, &[c(root, 0.0)], 1e-10, 6);
        assert!(out.converged);
        assert!((out.z[0] - c(root, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn newton_sqrt2_from_seed() {
        let f = univariate(&[-2.0, 0.0, 1.0]);
        let out = newton_correct(&f, &[c(1.4, 0.0)], 1e-12, 8);
        assert!(out.converged);
        assert!((out.z[0].re - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn newton_multiple_root_fails_quadratic_criterion() {
        // x^2 at 0.1: linear-only convergence cannot meet 1e-10 in 6 steps.
        let f = univariate(&[0.0, 0.0, 1.0]);
        let out = newton_correct(&f, &[c(0.1, 0.0)], 1e-10, 6);
        assert!(!out.converged);
    }

    #[test]
    fn path_accounting_is_exact() {
        let f = univariate(&[-8.0, 8.0, -4.0, 1.0]);
        let out = solve_total_degree(&f, &TrackerConfig::default(), 11).unwrap();
        assert_eq!(
            out.stats.converged + out.stats.diverged + out.stats.stalled,
            out.stats.paths
        );
    }

    #[test]
    fn conjugate_pair_not_real_distinct_reals_cluster_singly() {
        let f = univariate(&[2.0, 0.0, 1.0]); // x^2 + 2: pure imaginary roots
        let out = solve_total_degree(&f, &TrackerConfig::default(), 5).unwrap();
        assert_eq!(out.solutions.solutions.len(), 2);
        assert!(out.solutions.solutions.iter().all(|s| !s.is_real));

        let g = univariate(&[-1.0, 0.0, 1.0]); // x^2 - 1: two real roots
        let out = solve_total_degree(&g, &TrackerConfig::default(), 5).unwrap();
        assert_eq!(out.solutions.solutions.len(), 2);
        assert!(out.solutions.solutions.iter().all(|s| s.is_real));
        assert!(out.solutions.solutions.iter().all(|s| s.cluster_size == 1));
    }

    #[test]
    fn gamma_invariance_of_finite_endpoints() {
        // Fixed generic bivariate system; endpoint multiset must not depend
        // on the random gamma.
        let p = Polynomial::from_real_terms(
            2,
            &[(vec![2, 0], 1.0), (vec![0, 2], 1.0), (vec![0, 0], -4.0)],
        );
        let q = Polynomial::from_real_terms(
            2,
            &[(vec![1, 1], 1.0), (vec![1, 0], -1.0), (vec![0, 0], -1.0)],
        );
        let f = PolySystem::new(2, vec![p, q]).unwrap();
        let reference = solve_total_degree(&f, &TrackerConfig::default(), 0).unwrap();
        let mut ref_pts: Vec<Vec<Complex64>> =
            reference.solutions.solutions.iter().map(|s| s.point.clone()).collect();
        sort_points(&mut ref_pts);
        for seed in 1..=10 {
            let out = solve_total_degree(&f, &TrackerConfig::default(), seed).unwrap();
            let mut pts: Vec<Vec<Complex64>> =
                out.solutions.solutions.iter().map(|s| s.point.clone()).collect();
            sort_points(&mut pts);
            assert_eq!(pts.len(), ref_pts.len(), "seed {seed}");
            for (a, b) in pts.iter().zip(&ref_pts) {
                let dist: f64 =
                    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
                assert!(dist < 1e-7, "seed {seed}: endpoint mismatch {dist}");
            }
        }
    }

    fn sort_points(pts: &mut [Vec<Complex64>]) {
        // Round to an 1e-8 grid so ties between numerically equal
        // coordinates cannot flip the order between runs.
        let key = |p: &Vec<Complex64>| -> Vec<(i64, i64)> {
            p.iter()
                .map(|z| ((z.re * 1e8).round() as i64, (z.im * 1e8).round() as i64))
                .collect()
        };
        pts.sort_by_key(key);
    }
}
