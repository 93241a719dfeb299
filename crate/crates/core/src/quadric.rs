//! Exact ED-degree and discriminant stratification for degree-2 boundaries:
//! rank-case dispatch, the parameter discriminant and its components, the
//! plane-conic taxonomy, and the coefficient map of the (2, 2, 2) network.

use crate::pnn::NetworkParams;
use crate::poly::Polynomial;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use std::fmt;

#[derive(Debug)]
pub enum QuadricError {
    NotDegreeTwo { degree: u32 },
    NonRealCoefficients,
    NotPlane { n: usize },
    Asymmetric,
    WrongArchitecture(String),
    /// Numerically outside the three rank relations; carries the thresholded
    /// ranks so the caller can see how the dispatch failed.
    RankCaseAmbiguous { rank_a: usize, rank_m: usize },
}

impl fmt::Display for QuadricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadricError::NotDegreeTwo { degree } => {
                write!(f, "expected a degree-2 polynomial, got degree {degree}")
            }
            QuadricError::NonRealCoefficients => write!(f, "quadric coefficients must be real"),
            QuadricError::NotPlane { n } => write!(f, "conic taxonomy needs n = 2, got n = {n}"),
            QuadricError::Asymmetric => write!(f, "matrix A must be symmetric"),
            QuadricError::WrongArchitecture(m) => write!(f, "wrong architecture: {m}"),
            QuadricError::RankCaseAmbiguous { rank_a, rank_m } => write!(
                f,
                "rank(M) = {rank_m} vs rank(A) = {rank_a}: outside the three rank cases"
            ),
        }
    }
}

impl std::error::Error for QuadricError {}

/// `B(x) = x^T A x + b^T x + c` with symmetric `A`.
#[derive(Debug, Clone)]
pub struct QuadricForm {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl QuadricForm {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self, QuadricError> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n {
            return Err(QuadricError::Asymmetric);
        }
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * (1.0 + scale) {
                    return Err(QuadricError::Asymmetric);
                }
            }
        }
        Ok(QuadricForm { a, b, c })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Augmented matrix `[[A, b/2], [b^T/2, c]]`.
    pub fn m_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&self.a);
        for i in 0..n {
            m[(i, n)] = self.b[i] / 2.0;
            m[(n, i)] = self.b[i] / 2.0;
        }
        m[(n, n)] = self.c;
        m
    }

    pub fn to_polynomial(&self) -> Polynomial {
        let n = self.n();
        let mut raw: Vec<(Vec<u32>, f64)> = Vec::new();
        for i in 0..n {
            for j in i..n {
                let coeff = if i == j { self.a[(i, i)] } else { 2.0 * self.a[(i, j)] };
                if coeff != 0.0 {
                    let mut e = vec![0u32; n];
                    e[i] += 1;
                    e[j] += 1;
                    raw.push((e, coeff));
                }
            }
        }
        for i in 0..n {
            if self.b[i] != 0.0 {
                let mut e = vec![0u32; n];
                e[i] = 1;
                raw.push((e, self.b[i]));
            }
        }
        if self.c != 0.0 {
            raw.push((vec![0u32; n], self.c));
        }
        Polynomial::from_real_terms(n, &raw)
    }
}

/// Reads `(A, b, c)` off a degree-2 polynomial; the reassembled polynomial
/// equals the input exactly for dyadic coefficients.
pub fn extract_quadric(b: &Polynomial) -> Result<QuadricForm, QuadricError> {
    if b.degree() != 2 {
        return Err(QuadricError::NotDegreeTwo { degree: b.degree() });
    }
    let n = b.nvars();
    let mut a = DMatrix::zeros(n, n);
    let mut bv = DVector::zeros(n);
    let mut c = 0.0;
    for (m, coeff) in b.terms() {
        if coeff.im != 0.0 {
            return Err(QuadricError::NonRealCoefficients);
        }
        let exps = m.exponents();
        match m.total_degree() {
            0 => c = coeff.re,
            1 => {
                let i = exps.iter().position(|&e| e == 1).unwrap();
                bv[i] = coeff.re;
            }
            2 => {
                let vars: Vec<usize> =
                    exps.iter().enumerate().filter(|(_, &e)| e > 0).map(|(i, _)| i).collect();
                if vars.len() == 1 {
                    a[(vars[0], vars[0])] = coeff.re;
                } else {
                    a[(vars[0], vars[1])] = coeff.re / 2.0;
                    a[(vars[1], vars[0])] = coeff.re / 2.0;
                }
            }
            _ => unreachable!("degree() == 2 bounds total degrees"),
        }
    }
    QuadricForm::new(a, bv, c)
}

/// Thresholds for rank and eigenvalue-distinctness decisions; both are
/// surfaced in the report because the discriminant strata are measure-zero.
#[derive(Debug, Clone, Copy)]
pub struct QuadricTol {
    /// Rank threshold relative to the largest singular value.
    pub rank_tol: f64,
    /// Eigenvalue clustering threshold relative to the spectral norm of A.
    pub eig_tol: f64,
}

impl Default for QuadricTol {
    fn default() -> Self {
        QuadricTol { rank_tol: 1e-9, eig_tol: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RankCase {
    /// rank(M) = rank(A) + 1: ED degree 2r.
    Affine,
    /// rank(M) = rank(A) + 2: ED degree 2r + 1.
    Parabolic,
    /// rank(M) = rank(A): ED degree 2r - 2.
    Conical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConicClass {
    Circle,
    Ellipse,
    Hyperbola,
    Parabola,
    Degenerate,
}

/// The three components of the parameter discriminant
/// `Delta = det(A) * det(M) * Disc_lambda(charpoly(A))`.
#[derive(Debug, Clone, Serialize)]
pub struct DiscComponents {
    pub det_a: f64,
    pub det_m: f64,
    /// `prod_{i<j} (lambda_i - lambda_j)^2` from the numeric spectrum.
    pub eigen_disc: f64,
    pub delta: f64,
    /// For n = 2 the classical conic components (det M, ac - b^2/4,
    /// (a-c)^2 + b^2).
    pub conic: Option<ConicComponents>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConicComponents {
    pub sing: f64,
    pub par: f64,
    pub circ: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadricReport {
    pub rank_a: usize,
    pub rank_m: usize,
    /// Number of distinct nonzero eigenvalues of A.
    pub r: usize,
    pub case: RankCase,
    pub ed_degree: u64,
    pub conic_class: Option<ConicClass>,
    pub components: DiscComponents,
    pub rank_tol: f64,
    pub eig_tol: f64,
    /// Smallest pairwise eigenvalue gap and smallest retained |eigenvalue|,
    /// i.e. the distances to the two thresholds the report depends on.
    pub min_eig_gap: f64,
    pub min_kept_eig: f64,
}

fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

fn thresholded_rank(eigs: &[f64], tol: f64) -> usize {
    let max = eigs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    eigs.iter().filter(|v| v.abs() > tol * max).count()
}

/// Distinct nonzero eigenvalue count: cluster the sorted spectrum at
/// `eig_tol * |A|`, then count clusters whose mean is nonzero at
/// `rank_tol * |A|`.
fn distinct_nonzero(eigs: &[f64], tol: &QuadricTol) -> (usize, f64, f64) {
    let norm = eigs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cluster_gap = tol.eig_tol * norm.max(f64::MIN_POSITIVE);
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for &e in eigs {
        match clusters.last_mut() {
            Some(last) if (e - last[last.len() - 1]).abs() <= cluster_gap => last.push(e),
            _ => clusters.push(vec![e]),
        }
    }
    let mut r = 0;
    let mut min_kept = f64::INFINITY;
    for cl in &clusters {
        let mean = cl.iter().sum::<f64>() / cl.len() as f64;
        if mean.abs() > tol.rank_tol * norm {
            r += 1;
            min_kept = min_kept.min(mean.abs());
        }
    }
    let mut min_gap = f64::INFINITY;
    for w in eigs.windows(2) {
        min_gap = min_gap.min(w[1] - w[0]);
    }
    (r, min_gap, min_kept)
}

/// Rank-case dispatch and the resulting exact ED degree of a quadric
/// hypersurface.
pub fn quadric_ed_degree(q: &QuadricForm, tol: &QuadricTol) -> Result<QuadricReport, QuadricError> {
    let eig_a = sym_eigenvalues(&q.a);
    let eig_m = sym_eigenvalues(&q.m_matrix());
    let rank_a = thresholded_rank(&eig_a, tol.rank_tol);
    let rank_m = thresholded_rank(&eig_m, tol.rank_tol);
    let (r, min_eig_gap, min_kept_eig) = distinct_nonzero(&eig_a, tol);

    let (case, ed_degree) = if rank_m == rank_a + 1 {
        (RankCase::Affine, 2 * r as u64)
    } else if rank_m == rank_a + 2 {
        (RankCase::Parabolic, 2 * r as u64 + 1)
    } else if rank_m == rank_a {
        (RankCase::Conical, (2 * r).saturating_sub(2) as u64)
    } else {
        return Err(QuadricError::RankCaseAmbiguous { rank_a, rank_m });
    };

    let components = parameter_discriminant(q);
    let conic_class = if q.n() == 2 { Some(classify_conic(q)?) } else { None };
    Ok(QuadricReport {
        rank_a,
        rank_m,
        r,
        case,
        ed_degree,
        conic_class,
        components,
        rank_tol: tol.rank_tol,
        eig_tol: tol.eig_tol,
        min_eig_gap,
        min_kept_eig,
    })
}

/// Plane-conic taxonomy. Circle and degeneracy are tested first (they are
/// the thin strata); the sign of det A then separates ellipse, hyperbola,
/// and parabola.
pub fn classify_conic(q: &QuadricForm) -> Result<ConicClass, QuadricError> {
    if q.n() != 2 {
        return Err(QuadricError::NotPlane { n: q.n() });
    }
    let (a, b2, c) = (q.a[(0, 0)], q.a[(0, 1)], q.a[(1, 1)]);
    let b = 2.0 * b2;
    let norm = a.abs().max(b.abs()).max(c.abs());
    let circ = (a - c) * (a - c) + b * b;
    if circ <= 2.0 * (1e-7 * norm) * (1e-7 * norm) {
        return Ok(ConicClass::Circle);
    }
    let m = q.m_matrix();
    let det_m = m.determinant();
    let m_norm = sym_eigenvalues(&m).iter().fold(0.0_f64, |mx, v| mx.max(v.abs()));
    if det_m.abs() <= 1e-9 * m_norm.powi(3) {
        return Ok(ConicClass::Degenerate);
    }
    let det_a = a * c - b * b / 4.0;
    if det_a.abs() <= 1e-9 * norm * norm {
        Ok(ConicClass::Parabola)
    } else if det_a > 0.0 {
        Ok(ConicClass::Ellipse)
    } else {
        Ok(ConicClass::Hyperbola)
    }
}

/// The parameter discriminant `Delta = det(A) det(M) Disc(charpoly A)` and
/// its components; for n = 2 also the conic-form components.
pub fn parameter_discriminant(q: &QuadricForm) -> DiscComponents {
    let det_a = q.a.determinant();
    let m = q.m_matrix();
    let det_m = m.determinant();
    let eigs = sym_eigenvalues(&q.a);
    let mut eigen_disc = 1.0;
    for i in 0..eigs.len() {
        for j in (i + 1)..eigs.len() {
            eigen_disc *= (eigs[i] - eigs[j]) * (eigs[i] - eigs[j]);
        }
    }
    let conic = if q.n() == 2 {
        let (a, b2, c) = (q.a[(0, 0)], q.a[(0, 1)], q.a[(1, 1)]);
        let b = 2.0 * b2;
        Some(ConicComponents {
            sing: det_m,
            par: a * c - b * b / 4.0,
            circ: (a - c) * (a - c) + b * b,
        })
    } else {
        None
    };
    DiscComponents { det_a, det_m, eigen_disc, delta: det_a * det_m * eigen_disc, conic }
}

/// The six conic coefficients `(a, b, c, d, e, f)` of a (2, 2, 2) quadratic
/// network as explicit polynomials in the parameters, evaluated at `theta`.
/// Matches `extract_quadric(boundary_polynomial(theta))` coefficient for
/// coefficient.
pub fn phi_map_222(params: &NetworkParams) -> Result<[f64; 6], QuadricError> {
    let arch = params.architecture();
    if arch.dims != vec![2, 2, 2] || arch.activation_degree != 2 {
        return Err(QuadricError::WrongArchitecture(format!(
            "phi map needs dims [2, 2, 2] with degree 2, got {:?} degree {}",
            arch.dims, arch.activation_degree
        )));
    }
    let w1 = &params.weights()[0];
    let w2 = &params.weights()[1];
    let b1 = &params.biases()[0];
    let b2 = &params.biases()[1];
    let (w11, w12, w21, w22) = (w1[0][0], w1[0][1], w1[1][0], w1[1][1]);
    let (h1, h2) = (b1[0], b1[1]);
    let alpha1 = w2[0][0] - w2[1][0];
    let alpha2 = w2[0][1] - w2[1][1];
    let beta = b2[0] - b2[1];
    Ok([
        w11 * w11 * alpha1 + w21 * w21 * alpha2,
        2.0 * w11 * w12 * alpha1 + 2.0 * w21 * w22 * alpha2,
        w12 * w12 * alpha1 + w22 * w22 * alpha2,
        2.0 * w11 * h1 * alpha1 + 2.0 * w21 * h2 * alpha2,
        2.0 * w12 * h1 * alpha1 + 2.0 * w22 * h2 * alpha2,
        h1 * h1 * alpha1 + h2 * h2 * alpha2 + beta,
    ])
}

/// Draws a quadric engineered to lie in a prescribed rank case: distinct
/// well-separated nonzero eigenvalues, the kernel/Schur structure the case
/// demands, then a random rotation and translation.
pub fn sample_quadric_in_case<R: Rng>(case: RankCase, n: usize, rng: &mut R) -> QuadricForm {
    let rank_a = match case {
        RankCase::Parabolic => {
            assert!(n >= 2, "parabolic case needs a kernel direction");
            rng.random_range(1..n)
        }
        _ => rng.random_range(1..=n),
    };
    // Distinct nonzero eigenvalues with gaps >= 0.5 and magnitude >= 0.7.
    let mut eigs = vec![0.0; n];
    for (k, e) in eigs.iter_mut().take(rank_a).enumerate() {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        *e = sign * (0.7 + 0.6 * k as f64 + rng.random_range(0.0..0.1));
    }

    let mut b = vec![0.0; n];
    for bi in b.iter_mut().take(rank_a) {
        *bi = rng.random_range(-1.0..1.0);
    }
    let schur: f64 = b
        .iter()
        .take(rank_a)
        .zip(&eigs)
        .map(|(bi, &li)| bi * bi / (4.0 * li))
        .sum();
    let c = match case {
        RankCase::Affine => {
            // S != 0 forces rank(M) = rank(A) + 1.
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random_range(0.5..1.5);
            s + schur
        }
        RankCase::Parabolic => {
            // A nonzero kernel component of b forces rank(M) = rank(A) + 2.
            for bi in b.iter_mut().skip(rank_a) {
                *bi = if rng.random::<bool>() { 1.0 } else { -1.0 } * rng.random_range(0.5..1.5);
            }
            rng.random_range(-1.0..1.0)
        }
        // S = 0 and zero kernel components force rank(M) = rank(A).
        RankCase::Conical => schur,
    };

    // Random orthogonal conjugation and a translation; both preserve the
    // rank case and the spectrum of A.
    let g = DMatrix::from_fn(n, n, |_, _| {
        let u: f64 = rng.random_range(-1.0..1.0);
        u
    });
    let qmat = g.qr().q();
    let a_rot = &qmat * DMatrix::from_diagonal(&DVector::from_vec(eigs)) * qmat.transpose();
    let b_rot = &qmat * DVector::from_vec(b);
    let q0 = QuadricForm::new(a_rot, b_rot, c).expect("engineered quadric is symmetric");

    let shift = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let b_shifted = &q0.b + 2.0 * &q0.a * &shift;
    let c_shifted = (shift.transpose() * &q0.a * &shift)[(0, 0)]
        + q0.b.dot(&shift)
        + q0.c;
    QuadricForm::new(q0.a.clone(), b_shifted, c_shifted).expect("translation keeps symmetry")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edanalysis::{ed_degree_numeric, EdConfig};
    use crate::pnn::NetworkParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::path::Path;

    fn fixture(name: &str) -> NetworkParams {
        let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
        NetworkParams::load(Path::new(&path)).unwrap()
    }

    fn example1_quadric() -> QuadricForm {
        extract_quadric(&fixture("example1.json").boundary_polynomial(0, 1).unwrap()).unwrap()
    }

    fn example2_quadric() -> QuadricForm {
        extract_quadric(&fixture("example2.json").boundary_polynomial(0, 1).unwrap()).unwrap()
    }

    #[test]
    fn extraction_of_worked_examples() {
        let q1 = example1_quadric();
        assert_eq!(q1.a[(0, 0)], -8.0);
        assert_eq!(q1.a[(0, 1)], -1.0);
        assert_eq!(q1.a[(1, 1)], 3.0);
        assert_eq!((q1.b[0], q1.b[1]), (-6.0, -2.0));
        assert_eq!(q1.c, 0.0);
        assert!((q1.a.determinant() + 25.0).abs() < 1e-12);

        let q2 = example2_quadric();
        assert_eq!((q2.b[0], q2.b[1]), (-10.0, 0.0));
        assert_eq!(q2.c, -3.0);
        assert!(q2.m_matrix().determinant().abs() < 1e-9);

        let circle = Polynomial::from_real_terms(
            2,
            &[(vec![2, 0], 1.0), (vec![0, 2], 1.0), (vec![0, 0], -1.0)],
        );
        let qc = extract_quadric(&circle).unwrap();
        assert_eq!(qc.a, DMatrix::identity(2, 2));
        assert_eq!(qc.c, -1.0);

        // Reassembly is exact.
        assert_eq!(q1.to_polynomial(), fixture("example1.json").boundary_polynomial(0, 1).unwrap());
    }

    #[test]
    fn extraction_rejects_wrong_degree() {
        let cubic = Polynomial::from_real_terms(1, &[(vec![3], 1.0)]);
        assert!(matches!(
            extract_quadric(&cubic),
            Err(QuadricError::NotDegreeTwo { degree: 3 })
        ));
    }

    #[test]
    fn rank_cases_of_worked_examples() {
        let tol = QuadricTol::default();
        let r1 = quadric_ed_degree(&example1_quadric(), &tol).unwrap();
        assert_eq!(r1.case, RankCase::Affine);
        assert_eq!(r1.r, 2);
        assert_eq!(r1.ed_degree, 4);
        assert_eq!(r1.conic_class, Some(ConicClass::Hyperbola));

        let r2 = quadric_ed_degree(&example2_quadric(), &tol).unwrap();
        assert_eq!(r2.case, RankCase::Conical);
        assert_eq!(r2.ed_degree, 2);
        assert_eq!(r2.conic_class, Some(ConicClass::Degenerate));

        // Parabola y - x^2.
        let parab = Polynomial::from_real_terms(2, &[(vec![2, 0], -1.0), (vec![0, 1], 1.0)]);
        let rp = quadric_ed_degree(&extract_quadric(&parab).unwrap(), &tol).unwrap();
        assert_eq!(rp.case, RankCase::Parabolic);
        assert_eq!(rp.ed_degree, 3);
        assert_eq!(rp.conic_class, Some(ConicClass::Parabola));
    }

    #[test]
    fn conic_taxonomy() {
        let circle = Polynomial::from_real_terms(
            2,
            &[(vec![2, 0], 1.0), (vec![0, 2], 1.0), (vec![0, 0], -1.0)],
        );
        assert_eq!(classify_conic(&extract_quadric(&circle).unwrap()).unwrap(), ConicClass::Circle);
        let ellipse = Polynomial::from_real_terms(
            2,
            &[(vec![2, 0], 2.0), (vec![0, 2], 3.0), (vec![0, 0], -1.0)],
        );
        assert_eq!(
            classify_conic(&extract_quadric(&ellipse).unwrap()).unwrap(),
            ConicClass::Ellipse
        );
        assert_eq!(classify_conic(&example1_quadric()).unwrap(), ConicClass::Hyperbola);
        assert_eq!(classify_conic(&example2_quadric()).unwrap(), ConicClass::Degenerate);
    }

    #[test]
    fn parameter_discriminant_components() {
        // 2x^2 + 3y^2 - 1: det A = 6, det M = -6, eigen-disc = 1.
        let ellipse = Polynomial::from_real_terms(
            2,
            &[(vec![2, 0], 2.0), (vec![0, 2], 3.0), (vec![0, 0], -1.0)],
        );
        let comps = parameter_discriminant(&extract_quadric(&ellipse).unwrap());
        assert!((comps.det_a - 6.0).abs() < 1e-12);
        assert!((comps.det_m + 6.0).abs() < 1e-12);
        assert!((comps.eigen_disc - 1.0).abs() < 1e-12);
        assert!(comps.delta.abs() > 1e-9);

        // A circle has both the circle component and the eigen-discriminant
        // at zero.
        let circle = Polynomial::from_real_terms(
            2,
            &[(vec![2, 0], 1.0), (vec![0, 2], 1.0), (vec![0, 0], -1.0)],
        );
        let comps = parameter_discriminant(&extract_quadric(&circle).unwrap());
        assert_eq!(comps.conic.unwrap().circ, 0.0);
        assert!(comps.eigen_disc.abs() < 1e-12);

        // The example-2 quadric vanishes through det M.
        let comps = parameter_discriminant(&example2_quadric());
        assert!(comps.det_m.abs() < 1e-9);
        assert!(comps.delta.abs() < 1e-6);
    }

    #[test]
    fn phi_map_matches_expansion() {
        let net = fixture("example1.json");
        let phi = phi_map_222(&net).unwrap();
        assert_eq!(phi, [-8.0, -2.0, 3.0, -6.0, -2.0, 0.0]);

        // Zero output-weight difference and equal biases: all six vanish.
        let arch = crate::pnn::Architecture::new(vec![2, 2, 2], 2).unwrap();
        let flat = NetworkParams::new(
            arch,
            vec![
                vec![vec![1.0, 2.0], vec![3.0, 1.0]],
                vec![vec![2.0, 1.0], vec![2.0, 1.0]],
            ],
            vec![vec![0.0, 1.0], vec![5.0, 5.0]],
        )
        .unwrap();
        assert_eq!(phi_map_222(&flat).unwrap(), [0.0; 6]);
    }

    #[test]
    fn phi_map_agrees_with_extraction_on_random_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let arch = crate::pnn::Architecture::new(vec![2, 2, 2], 2).unwrap();
        for _ in 0..100 {
            let rnd = |rng: &mut ChaCha8Rng| rng.random_range(-2.0..2.0);
            let net = NetworkParams::new(
                arch.clone(),
                vec![
                    vec![vec![rnd(&mut rng), rnd(&mut rng)], vec![rnd(&mut rng), rnd(&mut rng)]],
                    vec![vec![rnd(&mut rng), rnd(&mut rng)], vec![rnd(&mut rng), rnd(&mut rng)]],
                ],
                vec![
                    vec![rnd(&mut rng), rnd(&mut rng)],
                    vec![rnd(&mut rng), rnd(&mut rng)],
                ],
            )
            .unwrap();
            let b = net.boundary_polynomial(0, 1).unwrap();
            if b.degree() != 2 {
                continue;
            }
            let q = extract_quadric(&b).unwrap();
            let phi = phi_map_222(&net).unwrap();
            let got = [
                q.a[(0, 0)],
                2.0 * q.a[(0, 1)],
                q.a[(1, 1)],
                q.b[0],
                q.b[1],
                q.c,
            ];
            for (p, g) in phi.iter().zip(&got) {
                assert!((p - g).abs() <= 1e-12 * (1.0 + g.abs()), "phi {p} vs {g}");
            }
        }
    }

    #[test]
    fn engineered_cases_have_predicted_numeric_degrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tol = QuadricTol::default();
        let cfg = EdConfig::default();
        for case in [RankCase::Affine, RankCase::Parabolic, RankCase::Conical] {
            for n in [2, 3] {
                let q = sample_quadric_in_case(case, n, &mut rng);
                let report = quadric_ed_degree(&q, &tol).unwrap();
                assert_eq!(report.case, case);
                let numeric = ed_degree_numeric(&q.to_polynomial(), 3, 42, &cfg).unwrap();
                assert_eq!(
                    numeric.numeric_count as u64, report.ed_degree,
                    "case {case:?} n {n}: numeric {} vs formula {}",
                    numeric.numeric_count, report.ed_degree
                );
            }
        }
    }

    #[test]
    fn circle_perturbation_restores_generic_degree() {
        // Generic noise pushes a circle off all three strata and the ED
        // degree jumps back to 4.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0 + rng.random_range(0.01..0.05),
                rng.random_range(0.01..0.05),
                0.0,
                1.0 - rng.random_range(0.01..0.05),
            ],
        );
        let mut a = a;
        a[(1, 0)] = a[(0, 1)];
        let q = QuadricForm::new(a, DVector::from_vec(vec![0.1, -0.2]), -1.0).unwrap();
        let report = quadric_ed_degree(&q, &QuadricTol::default()).unwrap();
        assert_eq!(report.ed_degree, 4);
        let comps = &report.components;
        assert!(comps.det_a.abs() > 1e-9);
        assert!(comps.det_m.abs() > 1e-9);
        assert!(comps.eigen_disc.abs() > 1e-9);
    }

    #[test]
    fn cor9_ed_degree_2n_iff_generic() {
        let tol = QuadricTol::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in [2, 3, 4] {
            for case in [RankCase::Affine, RankCase::Parabolic, RankCase::Conical] {
                for _ in 0..10 {
                    let q = sample_quadric_in_case(case, n, &mut rng);
                    let rep = quadric_ed_degree(&q, &tol).unwrap();
                    let generic =
                        rep.rank_a == n && rep.rank_m == n + 1 && rep.r == n;
                    assert_eq!(
                        rep.ed_degree == 2 * n as u64,
                        generic,
                        "n {n} case {case:?}: ed {} ranks ({}, {}) r {}",
                        rep.ed_degree,
                        rep.rank_a,
                        rep.rank_m,
                        rep.r
                    );
                }
            }
        }
    }
}
