//! Critical-point systems of the metric projection problem: the relaxed
//! KKT system on the full zero set and the full KKT system with
//! complementary slackness, plus the solve-and-filter pipeline shared by the
//! verifier and the ED-degree analysis.
//!
//! Sign convention: lambda satisfies `x - u + lambda grad B = 0`; inequality
//! feasibility (`mu >= 0`, `f_i - f_c <= 0`) is not encoded as equations but
//! filtered after solving.

use crate::homotopy::{
    solve_total_degree_with_budget, SolveStats, TrackerConfig, DEFAULT_PATH_BUDGET, REAL_TOL,
};
use crate::poly::{PolyError, PolySystem, Polynomial};
use num_complex::Complex64;
use std::fmt;

/// Relative threshold on `|grad B|` below which a solution counts as lying
/// on the singular locus and is excluded from critical-point counts.
pub const SINGULAR_LOCUS_TOL: f64 = 1e-6;

/// Strictness tolerance for the post-solve feasibility filter.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug)]
pub enum CritError {
    ZeroBoundary,
    DimensionMismatch { expected: usize, got: usize },
    BadClassPair { c: usize, cp: usize, k: usize },
    Poly(PolyError),
    Homotopy(crate::homotopy::HomotopyError),
}

impl fmt::Display for CritError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CritError::ZeroBoundary => write!(f, "boundary polynomial is identically zero"),
            CritError::DimensionMismatch { expected, got } => {
                write!(f, "datapoint length {got} != {expected} variables")
            }
            CritError::BadClassPair { c, cp, k } => {
                write!(f, "invalid class pair ({c}, {cp}) for {k} classes")
            }
            CritError::Poly(e) => write!(f, "{e}"),
            CritError::Homotopy(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CritError {}

impl From<PolyError> for CritError {
    fn from(e: PolyError) -> Self {
        CritError::Poly(e)
    }
}

impl From<crate::homotopy::HomotopyError> for CritError {
    fn from(e: crate::homotopy::HomotopyError) -> Self {
        CritError::Homotopy(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    Relaxed,
    Full,
}

/// A square polynomial system whose solutions are the KKT critical points
/// of the projection of `datapoint` onto the decision boundary.
#[derive(Debug, Clone)]
pub struct CriticalSystem {
    /// Unknown order: `x_1 .. x_n, lambda, mu_(sorted by class)`.
    pub system: PolySystem,
    pub kind: SystemKind,
    pub datapoint: Vec<f64>,
    pub class_pair: (usize, usize),
    pub input_dim: usize,
    /// Classes carrying a multiplier, ascending; empty for the relaxed system.
    pub mu_classes: Vec<usize>,
    /// Inequality polynomials `f_i - f_c` (in the x variables only), parallel
    /// to `mu_classes`; filter predicates, not equations.
    pub feasibility: Vec<Polynomial>,
    /// `B = f_c - f_c'` in the x variables, kept for singular-locus tests.
    pub boundary: Polynomial,
}

/// The relaxed KKT system: `B(x) = 0` and `x_i - u_i + lambda dB/dx_i = 0`.
pub fn build_relaxed(boundary: &Polynomial, u: &[f64]) -> Result<CriticalSystem, CritError> {
    if boundary.is_zero() {
        return Err(CritError::ZeroBoundary);
    }
    let n = boundary.nvars();
    if u.len() != n {
        return Err(CritError::DimensionMismatch { expected: n, got: u.len() });
    }
    let nv = n + 1;
    let lambda = Polynomial::variable(nv, n);
    let mut equations = Vec::with_capacity(nv);
    equations.push(boundary.extend_vars(nv));
    for i in 0..n {
        let stationarity = Polynomial::variable(nv, i)
            .sub(&Polynomial::constant_re(nv, u[i]))?
            .add(&lambda.mul(&boundary.partial(i).extend_vars(nv))?)?;
        equations.push(stationarity);
    }
    Ok(CriticalSystem {
        system: PolySystem::new(nv, equations)?,
        kind: SystemKind::Relaxed,
        datapoint: u.to_vec(),
        class_pair: (0, 1),
        input_dim: n,
        mu_classes: Vec::new(),
        feasibility: Vec::new(),
        boundary: boundary.clone(),
    })
}

/// The full KKT system of the constrained projection: stationarity,
/// the equality constraint, and complementary slackness. With `k = 2` this
/// degenerates to the relaxed system (no multipliers).
pub fn build_full(
    logits: &[Polynomial],
    xi: &[f64],
    c: usize,
    cp: usize,
) -> Result<CriticalSystem, CritError> {
    let k = logits.len();
    if k < 2 || c == cp || c >= k || cp >= k {
        return Err(CritError::BadClassPair { c, cp, k });
    }
    let n = logits[0].nvars();
    if xi.len() != n {
        return Err(CritError::DimensionMismatch { expected: n, got: xi.len() });
    }
    let boundary = logits[c].sub(&logits[cp])?;
    if boundary.is_zero() {
        return Err(CritError::ZeroBoundary);
    }
    if k == 2 {
        let mut cs = build_relaxed(&boundary, xi)?;
        cs.class_pair = (c, cp);
        return Ok(cs);
    }

    let mu_classes: Vec<usize> = (0..k).filter(|&i| i != c && i != cp).collect();
    let nv = n + 1 + mu_classes.len();
    let lambda = Polynomial::variable(nv, n);

    let mut equations = Vec::with_capacity(nv);
    equations.push(boundary.extend_vars(nv));
    for j in 0..n {
        let mut stationarity = Polynomial::variable(nv, j)
            .sub(&Polynomial::constant_re(nv, xi[j]))?
            .add(&lambda.mul(&boundary.partial(j).extend_vars(nv))?)?;
        for (m, &i) in mu_classes.iter().enumerate() {
            let mu = Polynomial::variable(nv, n + 1 + m);
            let gdiff = logits[i].partial(j).sub(&logits[c].partial(j))?.extend_vars(nv);
            stationarity = stationarity.add(&mu.mul(&gdiff)?)?;
        }
        equations.push(stationarity);
    }
    let mut feasibility = Vec::with_capacity(mu_classes.len());
    for (m, &i) in mu_classes.iter().enumerate() {
        let constraint = logits[i].sub(&logits[c])?;
        let mu = Polynomial::variable(nv, n + 1 + m);
        equations.push(mu.mul(&constraint.extend_vars(nv))?);
        feasibility.push(constraint);
    }
    Ok(CriticalSystem {
        system: PolySystem::new(nv, equations)?,
        kind: SystemKind::Full,
        datapoint: xi.to_vec(),
        class_pair: (c, cp),
        input_dim: n,
        mu_classes,
        feasibility,
        boundary,
    })
}

/// Max-norm residual of the system at a candidate solution.
pub fn residual(cs: &CriticalSystem, candidate: &[Complex64]) -> Result<f64, CritError> {
    Ok(cs.system.residual(candidate)?)
}

pub fn residual_real(cs: &CriticalSystem, candidate: &[f64]) -> Result<f64, CritError> {
    let z: Vec<Complex64> = candidate.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    residual(cs, &z)
}

/// A cluster of solver endpoints merged on their x-parts: one critical point
/// of the distance function, possibly of multiplicity > 1.
#[derive(Debug, Clone)]
pub struct CritCluster {
    pub x: Vec<Complex64>,
    pub lambda: Complex64,
    pub mu: Vec<Complex64>,
    /// Total number of converged endpoints merged here.
    pub size: usize,
    /// The x-part is real (lambda and mu follow for regular points).
    pub is_real: bool,
    /// `|grad B(x)|` fell below [`SINGULAR_LOCUS_TOL`] relative to its
    /// magnitude bound: the point sits on the singular locus of the variety.
    pub on_singular_locus: bool,
    /// The critical system's Jacobian is nonsingular at the representative.
    pub regular: bool,
}

impl CritCluster {
    /// Multiplicity inferred from endpoint clustering. A true multiple
    /// solution forces a singular Jacobian, so extra endpoints landing on a
    /// regular point are a tracking artifact and count once.
    pub fn multiplicity(&self) -> usize {
        if self.regular {
            1
        } else {
            self.size
        }
    }
}

/// A real critical point with its distance to the datapoint.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub mu: Vec<f64>,
    pub distance: f64,
    pub cluster_size: usize,
}

#[derive(Debug)]
pub struct SolvedCritical {
    pub clusters: Vec<CritCluster>,
    pub stats: SolveStats,
}

impl SolvedCritical {
    /// Distinct finite critical points off the singular locus; a multiple
    /// cluster counts once. This is the numeric ED-degree count for the
    /// given datapoint.
    pub fn distinct_count(&self) -> usize {
        self.clusters.iter().filter(|c| !c.on_singular_locus).count()
    }

    pub fn singular_discarded(&self) -> usize {
        self.clusters.iter().filter(|c| c.on_singular_locus).count()
    }

    /// Real critical points retained for distance queries: regular points of
    /// the variety, plus collision clusters wherever they sit.
    pub fn real_points(&self, u: &[f64]) -> Vec<CriticalPoint> {
        self.clusters
            .iter()
            .filter(|c| c.is_real && (!c.on_singular_locus || c.multiplicity() >= 2))
            .map(|c| {
                let x: Vec<f64> = c.x.iter().map(|v| v.re).collect();
                let distance =
                    x.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                CriticalPoint {
                    x,
                    lambda: c.lambda.re,
                    mu: c.mu.iter().map(|v| v.re).collect(),
                    distance,
                    cluster_size: c.multiplicity(),
                }
            })
            .collect()
    }
}

/// Solves the critical system by homotopy continuation and merges endpoints
/// into x-part clusters.
pub fn solve_critical(
    cs: &CriticalSystem,
    cfg: &TrackerConfig,
    seed: u64,
) -> Result<SolvedCritical, CritError> {
    solve_critical_with_budget(cs, cfg, seed, DEFAULT_PATH_BUDGET)
}

pub fn solve_critical_with_budget(
    cs: &CriticalSystem,
    cfg: &TrackerConfig,
    seed: u64,
    budget: usize,
) -> Result<SolvedCritical, CritError> {
    let out = solve_total_degree_with_budget(&cs.system, cfg, seed, budget)?;
    let n = cs.input_dim;
    let grad = cs.boundary.gradient();

    // Merge full-space solution clusters that share the same x-part: lambda
    // (and mu) are determined by x at regular points, so this only fuses
    // genuinely coincident critical points.
    struct Merged {
        x: Vec<Complex64>,
        lambda: Complex64,
        mu: Vec<Complex64>,
        size: usize,
        regular: bool,
    }
    let mut merged: Vec<Merged> = Vec::new();
    for sol in &out.solutions.solutions {
        let x = sol.point[..n].to_vec();
        let mut fused = false;
        for m in merged.iter_mut() {
            let scale = 1.0 + x_norm(&x).max(x_norm(&m.x));
            if x_dist(&x, &m.x) <= 1e-6 * scale {
                if sol.cluster_size > m.size {
                    m.x = x.clone();
                }
                m.size += sol.cluster_size;
                m.regular &= sol.is_regular;
                fused = true;
                break;
            }
        }
        if !fused {
            merged.push(Merged {
                x,
                lambda: sol.point[n],
                mu: sol.point[n + 1..].to_vec(),
                size: sol.cluster_size,
                regular: sol.is_regular,
            });
        }
    }

    let clusters = merged
        .into_iter()
        .map(|m| {
            let is_real = m.x.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
                < REAL_TOL * (1.0 + x_norm(&m.x));
            let gnorm: f64 = grad
                .iter()
                .map(|g| g.evaluate(&m.x).map(|v| v.norm_sqr()).unwrap_or(0.0))
                .sum::<f64>()
                .sqrt();
            let gbound: f64 = grad.iter().map(|g| g.magnitude_bound(&m.x)).sum();
            let on_singular_locus = gnorm <= SINGULAR_LOCUS_TOL * (1.0 + gbound);
            CritCluster {
                x: m.x,
                lambda: m.lambda,
                mu: m.mu,
                size: m.size,
                is_real,
                on_singular_locus,
                regular: m.regular,
            }
        })
        .collect();

    Ok(SolvedCritical { clusters, stats: out.stats })
}

/// Post-solve feasibility filter for the full KKT system: `mu >= 0` and
/// `f_i - f_c <= 0`, both within [`FEASIBILITY_TOL`].
pub fn is_feasible(cs: &CriticalSystem, point: &CriticalPoint) -> bool {
    for &mu in &point.mu {
        if mu < -FEASIBILITY_TOL {
            return false;
        }
    }
    for constraint in &cs.feasibility {
        let v = constraint.evaluate_real(&point.x).unwrap_or(f64::INFINITY);
        let scale = {
            let z: Vec<Complex64> = point.x.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            1.0 + constraint.magnitude_bound(&z)
        };
        if v > FEASIBILITY_TOL * scale {
            return false;
        }
    }
    true
}

fn x_norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn x_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;

    fn example2_boundary() -> Polynomial {
        Polynomial::from_real_terms(
            2,
            &[
                (vec![2, 0], -8.0),
                (vec![1, 1], -2.0),
                (vec![0, 2], 3.0),
                (vec![1, 0], -10.0),
                (vec![0, 0], -3.0),
            ],
        )
    }

    fn example1_boundary() -> Polynomial {
        Polynomial::from_real_terms(
            2,
            &[
                (vec![2, 0], -8.0),
                (vec![1, 1], -2.0),
                (vec![0, 2], 3.0),
                (vec![1, 0], -6.0),
                (vec![0, 1], -2.0),
            ],
        )
    }

    #[test]
    fn relaxed_system_shape_and_degrees() {
        let b = example1_boundary();
        let cs = build_relaxed(&b, &[0.0, 0.0]).unwrap();
        assert!(cs.system.is_square());
        assert_eq!(cs.system.nvars(), 3);
        assert_eq!(cs.system.degrees(), vec![2, 2, 2]);
    }

    #[test]
    fn zero_boundary_refused() {
        assert!(matches!(
            build_relaxed(&Polynomial::zero(2), &[0.0, 0.0]),
            Err(CritError::ZeroBoundary)
        ));
    }

    #[test]
    fn hyperplane_projection_is_unique_solution() {
        // B = 3x1 + 4x2 - 10: projection of origin is (6/5, 8/5), distance 2.
        let b = Polynomial::from_real_terms(
            2,
            &[(vec![1, 0], 3.0), (vec![0, 1], 4.0), (vec![0, 0], -10.0)],
        );
        let cs = build_relaxed(&b, &[0.0, 0.0]).unwrap();
        let solved = solve_critical(&cs, &TrackerConfig::default(), 1).unwrap();
        assert_eq!(solved.stats.paths, 1);
        let pts = solved.real_points(&cs.datapoint);
        assert_eq!(pts.len(), 1);
        assert!((pts[0].x[0] - 1.2).abs() < 1e-9);
        assert!((pts[0].x[1] - 1.6).abs() < 1e-9);
        assert!((pts[0].distance - 2.0).abs() < 1e-9);
    }

    #[test]
    fn example2_projections_from_origin() {
        let cs = build_relaxed(&example2_boundary(), &[0.0, 0.0]).unwrap();
        let solved = solve_critical(&cs, &TrackerConfig::default(), 3).unwrap();
        let mut pts = solved.real_points(&cs.datapoint);
        assert_eq!(pts.len(), 2);
        assert_eq!(solved.distinct_count(), 2);
        pts.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap());
        // Projections onto the two factor lines.
        assert!((pts[0].x[0] + 0.4).abs() < 1e-8 && (pts[0].x[1] - 0.2).abs() < 1e-8);
        assert!((pts[1].x[0] + 0.48).abs() < 1e-8 && (pts[1].x[1] + 0.36).abs() < 1e-8);
    }

    #[test]
    fn example1_generic_u_has_four_solutions() {
        let cs = build_relaxed(&example1_boundary(), &[0.37, -0.81]).unwrap();
        let solved = solve_critical(&cs, &TrackerConfig::default(), 5).unwrap();
        assert_eq!(solved.distinct_count(), 4);
    }

    #[test]
    fn residual_behaviour() {
        let cs = build_relaxed(&example2_boundary(), &[0.0, 0.0]).unwrap();
        // Exact symbolic solution (-2/5, 1/5) with lambda from the
        // stationarity equation: x - u + lambda grad B = 0.
        let x = [-0.4, 0.2];
        let g: Vec<f64> = (0..2)
            .map(|i| cs.boundary.partial(i).evaluate_real(&x).unwrap())
            .collect();
        let lambda = -(x[0]) / g[0];
        let cand = [x[0], x[1], lambda];
        assert!(residual_real(&cs, &cand).unwrap() <= 1e-12);

        // Perturbing by 1e-3 leaves a visible residual.
        let pert = [x[0] + 1e-3, x[1], lambda];
        assert!(residual_real(&cs, &pert).unwrap() > 1e-6);

        // Random points evaluate without error.
        assert!(residual_real(&cs, &[3.3, -7.1, 0.5]).unwrap().is_finite());
    }

    #[test]
    fn full_system_k2_equals_relaxed() {
        let l0 = Polynomial::from_real_terms(2, &[(vec![2, 0], 1.0), (vec![0, 0], 1.0)]);
        let l1 = Polynomial::from_real_terms(2, &[(vec![0, 2], 1.0)]);
        let full = build_full(&[l0.clone(), l1.clone()], &[0.5, 0.5], 0, 1).unwrap();
        let relaxed = build_relaxed(&l0.sub(&l1).unwrap(), &[0.5, 0.5]).unwrap();
        assert_eq!(full.kind, SystemKind::Relaxed);
        assert_eq!(full.system, relaxed.system);
    }

    #[test]
    fn full_system_three_classes_shape() {
        // Quadratic logits in 2 vars, k = 3: square system of n + k - 1 = 4.
        let l0 = Polynomial::from_real_terms(2, &[(vec![2, 0], 1.0), (vec![0, 1], 0.5)]);
        let l1 = Polynomial::from_real_terms(2, &[(vec![0, 2], 1.0), (vec![1, 0], -0.5)]);
        let l2 = Polynomial::from_real_terms(2, &[(vec![1, 1], 1.0), (vec![0, 0], -0.3)]);
        let cs = build_full(&[l0, l1, l2], &[0.1, 0.2], 0, 1).unwrap();
        assert_eq!(cs.kind, SystemKind::Full);
        assert!(cs.system.is_square());
        assert_eq!(cs.system.nvars(), 4);
        assert_eq!(cs.mu_classes, vec![2]);
        assert_eq!(cs.feasibility.len(), 1);
    }

    #[test]
    fn orthogonality_of_relaxed_solutions() {
        // x - u must be parallel to grad B at every returned solution.
        let b = example1_boundary();
        let u = [1.3, 0.4];
        let cs = build_relaxed(&b, &u).unwrap();
        let solved = solve_critical(&cs, &TrackerConfig::default(), 9).unwrap();
        let grad = b.gradient();
        for p in solved.real_points(&u) {
            let g: Vec<f64> = grad.iter().map(|gp| gp.evaluate_real(&p.x).unwrap()).collect();
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            let d = [p.x[0] - u[0], p.x[1] - u[1]];
            let dn = (d[0] * d[0] + d[1] * d[1]).sqrt();
            // Orthogonal component of (x - u) relative to grad B.
            let dot = d[0] * g[0] + d[1] * g[1];
            let orth = ((d[0] - dot * g[0] / (gn * gn)).powi(2)
                + (d[1] - dot * g[1] / (gn * gn)).powi(2))
            .sqrt();
            assert!(orth <= 1e-6 * dn.max(1.0), "orth component {orth}");
        }
    }
}
