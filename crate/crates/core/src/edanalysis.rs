//! ED-degree measurement and closed forms, plus ED-discriminant region
//! probing by real-critical-point counting.
//!
//! The numeric ED degree of a boundary is the number of distinct regular
//! finite critical points of the squared distance from a generic Gaussian
//! data point, solved by homotopy continuation; solutions on the singular
//! locus are discarded (the numeric stand-in for ideal saturation).

use crate::critsys::{build_relaxed, solve_critical_with_budget, CritError};
use crate::homotopy::{SolveStats, TrackerConfig, DEFAULT_PATH_BUDGET};
use crate::poly::Polynomial;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct EdConfig {
    pub tracker: TrackerConfig,
    pub path_budget: usize,
}

impl Default for EdConfig {
    fn default() -> Self {
        EdConfig { tracker: TrackerConfig::default(), path_budget: DEFAULT_PATH_BUDGET }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub u: Vec<f64>,
    /// Distinct regular finite complex critical points for this datapoint.
    pub count: usize,
    pub real_count: usize,
    pub paths: usize,
    pub diverged: usize,
    pub stalled: usize,
}

/// Numeric ED-degree report: modal count across Gaussian datapoint trials.
#[derive(Debug, Clone, Serialize)]
pub struct EdReport {
    pub numeric_count: usize,
    pub real_count: usize,
    pub trials: Vec<TrialOutcome>,
    pub formula_value: Option<u64>,
    /// True when all trials agree (and match the formula when present);
    /// disagreeing trials are reported, never averaged.
    pub agreement: bool,
    pub seed: u64,
}

/// Estimates the ED degree of the boundary `B` by counting distinct regular
/// finite critical points over `trials` standard-Gaussian datapoints and
/// taking the modal count (ties resolve to the larger count, since
/// degenerate samples can only undershoot the generic value).
pub fn ed_degree_numeric(
    b: &Polynomial,
    trials: usize,
    seed: u64,
    cfg: &EdConfig,
) -> Result<EdReport, CritError> {
    ed_degree_numeric_vs_formula(b, trials, seed, cfg, None)
}

pub fn ed_degree_numeric_vs_formula(
    b: &Polynomial,
    trials: usize,
    seed: u64,
    cfg: &EdConfig,
    formula_value: Option<u64>,
) -> Result<EdReport, CritError> {
    let n = b.nvars();
    let us: Vec<Vec<f64>> = (0..trials)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64 + 1);
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect();
    let outcomes: Vec<Result<TrialOutcome, CritError>> = us
        .par_iter()
        .enumerate()
        .map(|(t, u)| {
            let cs = build_relaxed(b, u)?;
            let solved = solve_critical_with_budget(
                &cs,
                &cfg.tracker,
                seed.wrapping_add(t as u64),
                cfg.path_budget,
            )?;
            let count = solved.distinct_count();
            let real_count = solved
                .clusters
                .iter()
                .filter(|c| c.is_real && !c.on_singular_locus)
                .count();
            Ok(TrialOutcome {
                u: u.clone(),
                count,
                real_count,
                paths: solved.stats.paths,
                diverged: solved.stats.diverged,
                stalled: solved.stats.stalled,
            })
        })
        .collect();
    let trials_out: Vec<TrialOutcome> = outcomes.into_iter().collect::<Result<_, _>>()?;

    let mut counts: Vec<usize> = trials_out.iter().map(|t| t.count).collect();
    counts.sort_unstable();
    let mut modal = counts[0];
    let mut best_freq = 0;
    let mut i = 0;
    while i < counts.len() {
        let j = counts[i..].iter().take_while(|&&c| c == counts[i]).count();
        if j >= best_freq {
            best_freq = j;
            modal = counts[i];
        }
        i += j;
    }
    let real_count = trials_out
        .iter()
        .find(|t| t.count == modal)
        .map(|t| t.real_count)
        .unwrap_or(0);
    let all_agree = counts.iter().all(|&c| c == modal);
    let agreement = all_agree && formula_value.map_or(true, |f| f == modal as u64);
    Ok(EdReport {
        numeric_count: modal,
        real_count,
        trials: trials_out,
        formula_value,
        agreement,
        seed,
    })
}

/// Shallow-network closed form `d * sum_{i<m} (d-1)^i` with `m = min(n, h)`.
pub fn ed_degree_shallow(n: usize, h: usize, d: u32) -> u64 {
    let m = n.min(h);
    closed_form_sum(d as u128, d as u128, m)
}

/// Width-one bottleneck closed form `d^s * sum_{i<n} (d-1)^i`.
pub fn ed_degree_bottleneck(n: usize, s: u32, d: u32) -> u64 {
    let dd = (d as u128).pow(s);
    closed_form_sum(dd, d as u128, n)
}

/// Wide deep-network closed form `D * sum_{i<n} (D-1)^i` with `D = d^s`.
pub fn ed_degree_deep_generic(n: usize, s: u32, d: u32) -> u64 {
    let dd = (d as u128).pow(s);
    closed_form_sum(dd, dd, n)
}

fn closed_form_sum(lead: u128, base: u128, m: usize) -> u64 {
    let mut sum: u128 = 0;
    let mut pow: u128 = 1;
    for _ in 0..m {
        sum += pow;
        pow *= base - 1;
    }
    u64::try_from(lead * sum).expect("ED-degree closed form overflows u64")
}

/// Real-critical-point profile at a fixed datapoint: the number of distinct
/// real critical points (regular points, plus collision clusters) and the
/// largest endpoint-cluster size as a multiplicity proxy.
pub fn real_critical_profile(
    b: &Polynomial,
    u: &[f64],
    seed: u64,
    cfg: &EdConfig,
) -> Result<(usize, usize), CritError> {
    let cs = build_relaxed(b, u)?;
    let solved = solve_critical_with_budget(&cs, &cfg.tracker, seed, cfg.path_budget)?;
    let mut distinct_real = 0;
    let mut max_cluster = 1;
    for c in &solved.clusters {
        if c.is_real && (!c.on_singular_locus || c.multiplicity() >= 2) {
            distinct_real += 1;
            max_cluster = max_cluster.max(c.multiplicity());
        }
    }
    Ok((distinct_real, max_cluster))
}

/// The degree-6 ED discriminant of the worked hyperbola example, embedded
/// as exact integer data; positive sign marks the four-real-critical-point
/// region.
pub fn discriminant_fixture_eval(u1: f64, u2: f64) -> f64 {
    const TERMS: [(i32, i32, f64); 27] = [
        (6, 0, 27.0),
        (5, 1, 54.0),
        (4, 2, -180.0),
        (3, 3, -280.0),
        (2, 4, 480.0),
        (1, 5, 384.0),
        (0, 6, -512.0),
        (5, 0, 54.0),
        (4, 1, 180.0),
        (3, 2, -120.0),
        (2, 3, -720.0),
        (0, 5, 768.0),
        (4, 0, -126.0),
        (3, 1, 582.0),
        (2, 2, -2409.0),
        (1, 3, -402.0),
        (0, 4, -1371.0),
        (3, 0, -334.0),
        (2, 1, 1566.0),
        (1, 2, -1878.0),
        (0, 3, 808.0),
        (2, 0, -132.0),
        (1, 1, 1152.0),
        (0, 2, -1218.0),
        (1, 0, -12.0),
        (0, 1, 516.0),
        (0, 0, -152.0),
    ];
    let mut acc = 0.0;
    for &(e1, e2, c) in &TERMS {
        acc += c * u1.powi(e1) * u2.powi(e2);
    }
    acc
}

/// One cell of the discriminant probe grid.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeRow {
    pub u1: f64,
    pub u2: f64,
    /// Sign of the embedded discriminant fixture at (u1, u2).
    pub sign: i8,
    pub real_count: usize,
    pub max_cluster: usize,
}

/// Samples real-critical-point counts of `B` on a uniform grid over
/// `[-range, range]^2`, tagging each cell with the fixture discriminant
/// sign. Rows stream in row-major order for CSV plotting.
pub fn discriminant_probe_grid(
    b: &Polynomial,
    grid: usize,
    range: f64,
    seed: u64,
    cfg: &EdConfig,
) -> Result<Vec<ProbeRow>, CritError> {
    let coords: Vec<f64> = (0..grid)
        .map(|i| -range + 2.0 * range * (i as f64 + 0.5) / grid as f64)
        .collect();
    let cells: Vec<(f64, f64)> = coords
        .iter()
        .flat_map(|&u1| coords.iter().map(move |&u2| (u1, u2)))
        .collect();
    cells
        .par_iter()
        .map(|&(u1, u2)| {
            let (real_count, max_cluster) = real_critical_profile(b, &[u1, u2], seed, cfg)?;
            let d = discriminant_fixture_eval(u1, u2);
            let sign = if d > 0.0 {
                1
            } else if d < 0.0 {
                -1
            } else {
                0
            };
            Ok(ProbeRow { u1, u2, sign, real_count, max_cluster })
        })
        .collect()
}

/// Aggregate statistics of one solve, re-exported for CLI reports.
pub fn stats_line(stats: &SolveStats) -> String {
    format!(
        "paths={} converged={} diverged={} stalled={}",
        stats.paths, stats.converged, stats.diverged, stats.stalled
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;

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

    #[test]
    fn closed_forms_match_worked_values() {
        assert_eq!(ed_degree_shallow(3, 2, 3), 9);
        assert_eq!(ed_degree_shallow(3, 3, 3), 21);
        assert_eq!(ed_degree_shallow(4, 4, 3), 45);
        // d = 2 collapses to 2m; d = 1 is the hyperplane projection.
        for (n, h) in [(2, 5), (4, 3), (6, 6)] {
            assert_eq!(ed_degree_shallow(n, h, 2), 2 * n.min(h) as u64);
            assert_eq!(ed_degree_shallow(n, h, 1), 1);
        }
    }

    #[test]
    fn bottleneck_and_deep_forms() {
        assert_eq!(ed_degree_bottleneck(2, 3, 2), 16);
        assert_eq!(ed_degree_bottleneck(3, 2, 2), 12);
        // s = 1 reduces to the shallow formula with h >= n.
        assert_eq!(ed_degree_bottleneck(3, 1, 3), ed_degree_shallow(3, 3, 3));
        assert_eq!(ed_degree_deep_generic(2, 2, 2), 16);
        assert_eq!(ed_degree_deep_generic(3, 2, 2), 52);
        assert_eq!(ed_degree_deep_generic(3, 1, 3), ed_degree_shallow(3, 5, 3));
    }

    #[test]
    fn numeric_ed_degree_of_worked_boundaries() {
        let cfg = EdConfig::default();
        let r1 = ed_degree_numeric(&example1_boundary(), 3, 17, &cfg).unwrap();
        assert_eq!(r1.numeric_count, 4);
        let r2 = ed_degree_numeric(&example2_boundary(), 3, 17, &cfg).unwrap();
        assert_eq!(r2.numeric_count, 2);
        let circle = Polynomial::from_real_terms(
            2,
            &[(vec![2, 0], 1.0), (vec![0, 2], 1.0), (vec![0, 0], -1.0)],
        );
        let rc = ed_degree_numeric(&circle, 3, 17, &cfg).unwrap();
        assert_eq!(rc.numeric_count, 2);
    }

    #[test]
    fn real_profiles_across_the_discriminant() {
        let cfg = EdConfig::default();
        let b = example1_boundary();
        assert_eq!(real_critical_profile(&b, &[0.0, 0.0], 2, &cfg).unwrap(), (2, 1));
        assert_eq!(real_critical_profile(&b, &[10.0, 0.0], 2, &cfg).unwrap(), (4, 1));
        assert_eq!(real_critical_profile(&b, &[-10.0, 0.0], 2, &cfg).unwrap(), (4, 1));
        let (distinct, mult) = real_critical_profile(&b, &[-2.0, 0.0], 2, &cfg).unwrap();
        assert_eq!((distinct, mult), (3, 2));
    }

    #[test]
    fn discriminant_fixture_values() {
        assert_eq!(discriminant_fixture_eval(0.0, 0.0), -152.0);
        assert_eq!(discriminant_fixture_eval(-2.0, 0.0), 0.0);
        assert!(discriminant_fixture_eval(10.0, 0.0) > 0.0);
    }

    #[test]
    fn reducible_quadric_collision_only_at_line_intersection() {
        // Two non-parallel lines: critical points collide only when the
        // datapoint is (near) the intersection.
        let l1 = Polynomial::from_real_terms(
            2,
            &[(vec![1, 0], 1.0), (vec![0, 1], 2.0), (vec![0, 0], -1.0)],
        );
        let l2 = Polynomial::from_real_terms(
            2,
            &[(vec![1, 0], 3.0), (vec![0, 1], -1.0), (vec![0, 0], 2.0)],
        );
        let b = l1.mul(&l2).unwrap();
        let cfg = EdConfig::default();
        // Intersection of the lines: solve the 2x2 linear system.
        // x + 2y = 1; 3x - y = -2  =>  x = -3/7, y = 5/7.
        let p = [-3.0 / 7.0, 5.0 / 7.0];
        let (_, mult) = real_critical_profile(&b, &p, 4, &cfg).unwrap();
        assert!(mult >= 2, "expected a collision cluster at the intersection");
        let (count, mult) = real_critical_profile(&b, &[1.0, 1.0], 4, &cfg).unwrap();
        assert_eq!((count, mult), (2, 1));
    }
}
