//! NNGP kernel of shallow polynomial networks, the n = 1 Kac-Rice closed
//! forms for the expected number of real critical points, and Monte-Carlo
//! validation with finite-width networks.

use crate::poly::Polynomial;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;

/// Factorial-formula guard: coefficients stay exact in u128 up to here.
pub const MAX_DEGREE: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum KacRiceError {
    CoeffOutOfRange { s: u32, d: u32 },
    DegreeTooLarge { d: u32 },
    DimensionMismatch { expected: usize, got: usize },
    NotUnivariate { nvars: usize },
    ZeroPolynomial,
    /// Leading coefficient underflows relative to the rest; the degree is
    /// numerically undefined.
    DegenerateLeading,
}

impl fmt::Display for KacRiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KacRiceError::CoeffOutOfRange { s, d } => {
                write!(f, "kernel coefficient needs 0 <= 2s <= d, got s = {s}, d = {d}")
            }
            KacRiceError::DegreeTooLarge { d } => {
                write!(f, "degree {d} exceeds the exact-factorial guard {MAX_DEGREE}")
            }
            KacRiceError::DimensionMismatch { expected, got } => {
                write!(f, "point length {got} != kernel dimension {expected}")
            }
            KacRiceError::NotUnivariate { nvars } => {
                write!(f, "real-root counting needs a univariate polynomial, got {nvars} vars")
            }
            KacRiceError::ZeroPolynomial => write!(f, "polynomial is identically zero"),
            KacRiceError::DegenerateLeading => {
                write!(f, "leading coefficient underflows; degree is numerically undefined")
            }
        }
    }
}

impl std::error::Error for KacRiceError {}

/// Odd double factorial `k!!` with the empty-product convention for k <= 0.
pub fn odd_double_factorial(k: i64) -> u128 {
    let mut acc: u128 = 1;
    let mut i = k;
    while i >= 2 {
        acc *= i as u128;
        i -= 2;
    }
    acc
}

fn factorial(k: u32) -> u128 {
    (1..=k as u128).product()
}

/// Exact kernel coefficient `c(s, d) = (d!)^2 / (2^{2s} (s!)^2 (d - 2s)!)`.
pub fn kernel_coeff_exact(s: u32, d: u32) -> Result<u128, KacRiceError> {
    if 2 * s > d {
        return Err(KacRiceError::CoeffOutOfRange { s, d });
    }
    if d > MAX_DEGREE {
        return Err(KacRiceError::DegreeTooLarge { d });
    }
    let num = factorial(d) * factorial(d);
    let den = (1u128 << (2 * s)) * factorial(s) * factorial(s) * factorial(d - 2 * s);
    debug_assert_eq!(num % den, 0, "c(s, d) is a pairing count, always integral");
    Ok(num / den)
}

pub fn kernel_coeff(s: u32, d: u32) -> Result<f64, KacRiceError> {
    Ok(kernel_coeff_exact(s, d)? as f64)
}

/// NNGP kernel of an infinite-width two-layer network with activation `z^d`
/// and inputs in dimension `n`.
#[derive(Debug, Clone, Copy)]
pub struct NNGPKernel {
    pub n: usize,
    pub d: u32,
}

impl NNGPKernel {
    pub fn new(n: usize, d: u32) -> Result<Self, KacRiceError> {
        if d < 1 || d > MAX_DEGREE {
            return Err(KacRiceError::DegreeTooLarge { d });
        }
        Ok(NNGPKernel { n, d })
    }

    /// `K(x, x') = sum_s c(s, d) (|x|^2/n + 1)^s (|x'|^2/n + 1)^s
    /// (x.x'/n + 1)^{d - 2s}`.
    pub fn eval(&self, x: &[f64], xp: &[f64]) -> Result<f64, KacRiceError> {
        if x.len() != self.n || xp.len() != self.n {
            return Err(KacRiceError::DimensionMismatch {
                expected: self.n,
                got: if x.len() != self.n { x.len() } else { xp.len() },
            });
        }
        let nf = self.n as f64;
        let sx = x.iter().map(|v| v * v).sum::<f64>() / nf + 1.0;
        let sxp = xp.iter().map(|v| v * v).sum::<f64>() / nf + 1.0;
        let dot = x.iter().zip(xp).map(|(a, b)| a * b).sum::<f64>() / nf + 1.0;
        let mut acc = 0.0;
        for s in 0..=(self.d / 2) {
            let c = kernel_coeff(s, self.d)?;
            acc += c
                * sx.powi(s as i32)
                * sxp.powi(s as i32)
                * dot.powi((self.d - 2 * s) as i32);
        }
        Ok(acc)
    }
}

/// First and second kernel derivatives at coinciding arguments for n = 1:
/// `(dK/dx, d^2K/dx dx')` evaluated at `x' = x`.
pub fn kernel_derivatives_n1(d: u32, x: f64) -> (f64, f64) {
    let df1 = odd_double_factorial(2 * d as i64 - 1) as f64;
    let df3 = odd_double_factorial(2 * d as i64 - 3) as f64;
    let df = d as f64;
    let base = x * x + 1.0;
    let first = df * df1 * x * base.powi(d as i32 - 1);
    let second = if d >= 2 {
        2.0 * df * df * (df - 1.0) * df3 * x * x * base.powi(d as i32 - 2)
            + df * df * df3 * base.powi(d as i32 - 1)
    } else {
        df * df * df3 * base.powi(d as i32 - 1)
    };
    (first, second)
}

/// Closed-form Kac-Rice density `d / sqrt(2d - 1) * 1 / (pi (x^2 + 1))`.
pub fn kac_rice_density(d: u32, x: f64) -> f64 {
    expected_real_ed(d) / (std::f64::consts::PI * (x * x + 1.0))
}

/// Density assembled from the kernel blocks, `sqrt(det K_F) / (pi K(x,x))`;
/// equals the closed form and is the quantity integrated by the quadrature
/// checks.
pub fn assembled_density(d: u32, x: f64) -> f64 {
    let k = NNGPKernel { n: 1, d }.eval(&[x], &[x]).expect("n = 1 eval");
    let (dk, ddk) = kernel_derivatives_n1(d, x);
    let det = k * ddk - dk * dk;
    det.max(0.0).sqrt() / (std::f64::consts::PI * k)
}

/// Expected real ED degree of the n = 1 NNGP: `d / sqrt(2d - 1)`.
pub fn expected_real_ed(d: u32) -> f64 {
    let df = d as f64;
    df / (2.0 * df - 1.0).sqrt()
}

pub mod sturm {
    //! Distinct-real-root counting by Sturm sequences with a square-free
    //! pre-step; coefficient arithmetic in f64 with scale normalization.

    use super::KacRiceError;

    const TRIM_EPS: f64 = 1e-300;
    const REMAINDER_EPS: f64 = 1e-12;

    fn trim(mut p: Vec<f64>) -> Vec<f64> {
        while p.len() > 1 && p.last().map_or(false, |c| c.abs() <= TRIM_EPS) {
            p.pop();
        }
        p
    }

    fn normalize(mut p: Vec<f64>) -> Vec<f64> {
        let max = p.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if max > 0.0 {
            for c in &mut p {
                *c /= max;
            }
        }
        p
    }

    fn degree(p: &[f64]) -> usize {
        p.len() - 1
    }

    fn derivative(p: &[f64]) -> Vec<f64> {
        if p.len() <= 1 {
            return vec![0.0];
        }
        p.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect()
    }

    /// Remainder of `a / b` by synthetic division; `b` must be normalized.
    fn remainder(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = a.to_vec();
        let db = degree(b);
        let lead = b[db];
        while r.len() > db && r.len() > 1 {
            let dr = r.len() - 1;
            let q = r[dr] / lead;
            for i in 0..=db {
                r[dr - db + i] -= q * b[i];
            }
            r.pop();
            while r.len() > db.max(1) && r.last().map_or(false, |c| c.abs() <= REMAINDER_EPS) {
                r.pop();
            }
        }
        trim(r)
    }

    fn is_negligible(p: &[f64]) -> bool {
        p.iter().all(|c| c.abs() <= REMAINDER_EPS)
    }

    /// Sturm chain of `p`; the last entry is (a scalar multiple of)
    /// `gcd(p, p')`.
    fn chain(p: Vec<f64>) -> Vec<Vec<f64>> {
        let mut out = vec![normalize(trim(p))];
        let d1 = normalize(trim(derivative(&out[0])));
        if degree(&out[0]) == 0 || is_negligible(&d1) {
            return out;
        }
        out.push(d1);
        loop {
            let k = out.len();
            let rem = remainder(&out[k - 2], &out[k - 1]);
            if is_negligible(&rem) {
                return out;
            }
            let neg: Vec<f64> = rem.iter().map(|c| -c).collect();
            out.push(normalize(neg));
            if degree(out.last().unwrap()) == 0 {
                return out;
            }
        }
    }

    fn sign_variations(signs: &[f64]) -> usize {
        let mut count = 0;
        let mut prev = 0.0;
        for &s in signs {
            if s == 0.0 {
                continue;
            }
            if prev != 0.0 && s * prev < 0.0 {
                count += 1;
            }
            prev = s;
        }
        count
    }

    /// Number of distinct real roots over the whole line.
    pub fn count_distinct_real_roots(coeffs: &[f64]) -> Result<usize, KacRiceError> {
        let p = trim(coeffs.to_vec());
        let max = p.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if max == 0.0 {
            return Err(KacRiceError::ZeroPolynomial);
        }
        if p.last().unwrap().abs() < 1e-280 * max {
            return Err(KacRiceError::DegenerateLeading);
        }
        if degree(&p) == 0 {
            return Ok(0);
        }

        // Square-free pre-step: divide by gcd(p, p') when it has degree >= 1.
        let mut work = normalize(p);
        let ch = chain(work.clone());
        let gcd = ch.last().unwrap().clone();
        if degree(&gcd) >= 1 {
            work = normalize(quotient(&work, &gcd));
        }
        let ch = chain(work);

        let at_plus: Vec<f64> = ch.iter().map(|q| *q.last().unwrap()).collect();
        let at_minus: Vec<f64> = ch
            .iter()
            .map(|q| {
                let lc = *q.last().unwrap();
                if degree(q) % 2 == 0 {
                    lc
                } else {
                    -lc
                }
            })
            .collect();
        Ok(sign_variations(&at_minus).saturating_sub(sign_variations(&at_plus)))
    }

    fn quotient(a: &[f64], b: &[f64]) -> Vec<f64> {
        let db = degree(b);
        let lead = b[db];
        let mut r = a.to_vec();
        let mut q = vec![0.0; a.len().saturating_sub(db)];
        while r.len() > db && r.len() > 1 {
            let dr = r.len() - 1;
            let c = r[dr] / lead;
            q[dr - db] = c;
            for i in 0..=db {
                r[dr - db + i] -= c * b[i];
            }
            r.pop();
        }
        trim(q)
    }

    /// Sign-variation count of the chain at a finite point; isolation support
    /// for callers that bisect.
    pub fn variations_at(coeffs: &[f64], x: f64) -> usize {
        let ch = chain(normalize(trim(coeffs.to_vec())));
        let vals: Vec<f64> = ch.iter().map(|q| horner(q, x)).collect();
        sign_variations(&vals)
    }

    fn horner(p: &[f64], x: f64) -> f64 {
        p.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Distinct real roots of a univariate polynomial.
pub fn count_real_roots(p: &Polynomial) -> Result<usize, KacRiceError> {
    if p.nvars() != 1 {
        return Err(KacRiceError::NotUnivariate { nvars: p.nvars() });
    }
    if p.is_zero() {
        return Err(KacRiceError::ZeroPolynomial);
    }
    let mut coeffs = vec![0.0; p.degree() as usize + 1];
    for (m, c) in p.terms() {
        coeffs[m.exponents()[0] as usize] = c.re;
    }
    sturm::count_distinct_real_roots(&coeffs)
}

/// One Monte-Carlo run: per-sample distinct-real-root counts of finite-width
/// random networks against the infinite-width expectation.
#[derive(Debug, Clone, Serialize)]
pub struct KacRiceEstimate {
    pub d: u32,
    pub width: usize,
    pub samples: usize,
    pub seed: u64,
    pub counts: Vec<usize>,
    pub empirical_mean: f64,
    pub theoretical: f64,
}

/// Draws `samples` networks `f(x) = m^{-1/2} sum a_i (w_i x + b_i)^d` with
/// `a, b, w ~ N(0, 1)` (n = 1), expands each to a degree-d polynomial, and
/// counts distinct real roots. Per-sample RNG streams split deterministically
/// from the seed, so the result is independent of thread count.
pub fn mc_simulate(
    d: u32,
    width: usize,
    samples: usize,
    seed: u64,
) -> Result<KacRiceEstimate, KacRiceError> {
    if d < 1 || d > MAX_DEGREE {
        return Err(KacRiceError::DegreeTooLarge { d });
    }
    let binom: Vec<f64> = (0..=d)
        .map(|j| (factorial(d) / (factorial(j) * factorial(d - j))) as f64)
        .collect();
    let counts: Vec<Result<usize, KacRiceError>> = (0..samples)
        .into_par_iter()
        .map(|sample| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(sample as u64 + 1);
            let mut coeffs = vec![0.0_f64; d as usize + 1];
            for _ in 0..width {
                let a: f64 = StandardNormal.sample(&mut rng);
                let w: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                // (w x + b)^d expanded by the binomial theorem.
                let mut wj = 1.0;
                for j in 0..=d as usize {
                    let bk = b.powi((d as usize - j) as i32);
                    coeffs[j] += a * binom[j] * wj * bk;
                    wj *= w;
                }
            }
            let scale = 1.0 / (width as f64).sqrt();
            for c in &mut coeffs {
                *c *= scale;
            }
            sturm::count_distinct_real_roots(&coeffs)
        })
        .collect();
    let counts: Vec<usize> = counts.into_iter().collect::<Result<_, _>>()?;
    let empirical_mean = counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64;
    Ok(KacRiceEstimate {
        d,
        width,
        samples,
        seed,
        counts,
        empirical_mean,
        theoretical: expected_real_ed(d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coefficient_values_and_identities() {
        assert_eq!(kernel_coeff_exact(0, 2).unwrap(), 2);
        assert_eq!(kernel_coeff_exact(1, 2).unwrap(), 1);
        assert!(kernel_coeff_exact(2, 2).is_err());
        assert!(kernel_coeff_exact(0, 21).is_err());

        for d in 1..=12u32 {
            let sum: u128 = (0..=d / 2).map(|s| kernel_coeff_exact(s, d).unwrap()).sum();
            assert_eq!(sum, odd_double_factorial(2 * d as i64 - 1), "sum identity d = {d}");
            let weighted: u128 =
                (0..=d / 2).map(|s| kernel_coeff_exact(s, d).unwrap() * s as u128).sum();
            let expect = (d as u128) * (d as u128 - 1) * odd_double_factorial(2 * d as i64 - 3) / 2;
            assert_eq!(weighted, expect, "weighted identity d = {d}");
        }
    }

    #[test]
    fn kernel_values_n1() {
        let k = NNGPKernel::new(1, 2).unwrap();
        assert_eq!(k.eval(&[0.0], &[0.0]).unwrap(), 3.0);
        assert_eq!(k.eval(&[1.0], &[0.0]).unwrap(), 4.0);
        let k1 = NNGPKernel::new(3, 1).unwrap();
        let x = [0.5, -1.0, 2.0];
        let xp = [1.0, 0.0, -0.5];
        let dot = x.iter().zip(&xp).map(|(a, b)| a * b).sum::<f64>() / 3.0 + 1.0;
        assert!((k1.eval(&x, &xp).unwrap() - dot).abs() < 1e-15);
    }

    #[test]
    fn kernel_diagonal_closed_form() {
        for d in 1..=6u32 {
            let k = NNGPKernel::new(2, d).unwrap();
            for x in [[0.0, 0.0], [0.3, -1.2], [2.0, 1.0]] {
                let diag = k.eval(&x, &x).unwrap();
                let s = x.iter().map(|v| v * v).sum::<f64>() / 2.0 + 1.0;
                let expect = odd_double_factorial(2 * d as i64 - 1) as f64 * s.powi(d as i32);
                assert!((diag - expect).abs() <= 1e-12 * expect.abs());
            }
        }
    }

    #[test]
    fn kernel_gram_matrices_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..10 {
            let d = 1 + (trial % 4) as u32;
            let n = 1 + trial % 3;
            let k = NNGPKernel::new(n, d).unwrap();
            let pts: Vec<Vec<f64>> =
                (0..6).map(|_| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
            let gram = DMatrix::from_fn(6, 6, |i, j| k.eval(&pts[i], &pts[j]).unwrap());
            let eigs = gram.clone().symmetric_eigen().eigenvalues;
            let trace: f64 = (0..6).map(|i| gram[(i, i)]).sum();
            assert!(
                eigs.iter().all(|&e| e >= -1e-10 * trace),
                "trial {trial}: min eig {}",
                eigs.iter().fold(f64::INFINITY, |a, &b| a.min(b))
            );
        }
    }

    #[test]
    fn derivative_formulas_n1() {
        let (dk, ddk) = kernel_derivatives_n1(2, 0.0);
        assert_eq!(dk, 0.0);
        assert_eq!(ddk, 4.0);
        // dK is odd in x.
        for d in 1..=5u32 {
            for x in [0.3, 1.7] {
                let (p, _) = kernel_derivatives_n1(d, x);
                let (m, _) = kernel_derivatives_n1(d, -x);
                assert_eq!(p, -m);
            }
        }
        // det K_F matches the displayed closed form.
        for d in 2..=6u32 {
            for x in [-2.0, -0.4, 0.0, 0.9, 3.1] {
                let k = NNGPKernel::new(1, d).unwrap().eval(&[x], &[x]).unwrap();
                let (dk, ddk) = kernel_derivatives_n1(d, x);
                let det = k * ddk - dk * dk;
                let df3 = odd_double_factorial(2 * d as i64 - 3) as f64;
                let expect = (d as f64).powi(2)
                    * (2.0 * d as f64 - 1.0)
                    * df3
                    * df3
                    * (x * x + 1.0).powi(2 * d as i32 - 2);
                assert!((det - expect).abs() <= 1e-10 * expect.abs());
            }
        }
    }

    #[test]
    fn density_closed_form_and_assembly_agree() {
        assert!((kac_rice_density(1, 0.0) - 1.0 / std::f64::consts::PI).abs() < 1e-15);
        let v = kac_rice_density(2, 0.0);
        assert!((v - 2.0 / 3.0_f64.sqrt() / std::f64::consts::PI).abs() < 1e-12);
        for d in 2..=6u32 {
            for i in 0..50 {
                let x = -5.0 + 0.2 * i as f64;
                let a = assembled_density(d, x);
                let c = kac_rice_density(d, x);
                assert!((a - c).abs() <= 1e-12 * (1.0 + c), "d = {d}, x = {x}");
            }
        }
    }

    #[test]
    fn expected_values() {
        assert_eq!(expected_real_ed(1), 1.0);
        assert!((expected_real_ed(2) - 1.154700538).abs() < 1e-9);
        assert!((expected_real_ed(3) - 1.341640786).abs() < 1e-9);
    }

    #[test]
    fn sturm_known_counts() {
        // x^3 - x: three distinct real roots.
        assert_eq!(sturm::count_distinct_real_roots(&[0.0, -1.0, 0.0, 1.0]).unwrap(), 3);
        // x^2 + 1: none.
        assert_eq!(sturm::count_distinct_real_roots(&[1.0, 0.0, 1.0]).unwrap(), 0);
        // x^3 - 4x^2 + 8x - 8: one.
        assert_eq!(sturm::count_distinct_real_roots(&[-8.0, 8.0, -4.0, 1.0]).unwrap(), 1);
        // (x - 1)^2 (x + 2): two distinct despite the double root.
        assert_eq!(sturm::count_distinct_real_roots(&[2.0, -3.0, 0.0, 1.0]).unwrap(), 2);
        // Constants have no roots; the zero polynomial errors.
        assert_eq!(sturm::count_distinct_real_roots(&[5.0]).unwrap(), 0);
        assert!(sturm::count_distinct_real_roots(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn count_real_roots_on_polynomials() {
        let p = Polynomial::from_real_terms(1, &[(vec![3], 1.0), (vec![1], -1.0)]);
        assert_eq!(count_real_roots(&p).unwrap(), 3);
        let q = Polynomial::from_real_terms(2, &[(vec![1, 0], 1.0)]);
        assert!(matches!(count_real_roots(&q), Err(KacRiceError::NotUnivariate { nvars: 2 })));
    }

    #[test]
    fn mc_linear_networks_always_have_one_root() {
        let est = mc_simulate(1, 50, 200, 7).unwrap();
        assert!(est.counts.iter().all(|&c| c == 1));
        assert_eq!(est.empirical_mean, 1.0);
    }

    #[test]
    fn mc_counts_bounded_by_degree_and_deterministic() {
        let a = mc_simulate(3, 100, 50, 123).unwrap();
        assert!(a.counts.iter().all(|&c| c <= 3));
        let b = mc_simulate(3, 100, 50, 123).unwrap();
        assert_eq!(a.counts, b.counts);
    }
}
