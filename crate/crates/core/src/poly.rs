//! Sparse multivariate polynomials over complex double-precision scalars.
//!
//! Coefficients are always `Complex64`; real polynomials carry zero imaginary
//! parts so that symbolic expansion and path tracking share one evaluation
//! path. Polynomials are immutable after construction and kept in canonical
//! form: no duplicate monomials, no stored zero coefficients, terms ordered
//! graded-lexicographically.

use num_complex::Complex64;
use std::collections::BTreeMap;
use std::fmt;

/// Hard cap on stored terms; expansions beyond this refuse rather than thrash.
pub const TERM_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum PolyError {
    /// Two operands (or a polynomial and a point) disagree on variable count.
    DimensionMismatch { expected: usize, got: usize },
    /// An expansion would exceed [`TERM_BUDGET`] stored terms.
    TermBudget { terms: usize },
    /// Text parse failure with line number and reason.
    Parse { line: usize, reason: String },
}

impl fmt::Display for PolyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolyError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected} variables, got {got}")
            }
            PolyError::TermBudget { terms } => {
                write!(f, "term budget exceeded: {terms} terms (cap {TERM_BUDGET})")
            }
            PolyError::Parse { line, reason } => write!(f, "parse error at line {line}: {reason}"),
        }
    }
}

impl std::error::Error for PolyError {}

/// Exponent vector of a single term. Length always equals the owning
/// polynomial's variable count; ordering is graded lexicographic.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Vec<u32>,
}

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial { exps }
    }

    /// Constant monomial (all exponents zero).
    pub fn one(nvars: usize) -> Self {
        Monomial { exps: vec![0; nvars] }
    }

    /// Monomial `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index {i} out of range {nvars}");
        let mut exps = vec![0; nvars];
        exps[i] = 1;
        Monomial { exps }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn total_degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial {
            exps: self
                .exps
                .iter()
                .zip(&other.exps)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.exps.cmp(&other.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse multivariate polynomial in canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, Complex64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: Complex64) -> Self {
        let mut terms = BTreeMap::new();
        if c != Complex64::ZERO {
            terms.insert(Monomial::one(nvars), c);
        }
        Polynomial { nvars, terms }
    }

    pub fn constant_re(nvars: usize, c: f64) -> Self {
        Self::constant(nvars, Complex64::new(c, 0.0))
    }

    /// The polynomial `x_i`.
    pub fn variable(nvars: usize, i: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Monomial::var(nvars, i), Complex64::ONE);
        Polynomial { nvars, terms }
    }

    /// Builds a canonical polynomial from raw (exponents, coefficient) pairs;
    /// duplicates are summed, zeros dropped.
    pub fn from_terms(nvars: usize, raw: &[(Vec<u32>, Complex64)]) -> Self {
        let mut terms: BTreeMap<Monomial, Complex64> = BTreeMap::new();
        for (exps, c) in raw {
            assert_eq!(exps.len(), nvars, "exponent vector length mismatch");
            let entry = terms.entry(Monomial::new(exps.clone())).or_insert(Complex64::ZERO);
            *entry += c;
        }
        terms.retain(|_, c| *c != Complex64::ZERO);
        Polynomial { nvars, terms }
    }

    /// Real-coefficient convenience for tests and fixtures.
    pub fn from_real_terms(nvars: usize, raw: &[(Vec<u32>, f64)]) -> Self {
        let raw: Vec<(Vec<u32>, Complex64)> = raw
            .iter()
            .map(|(e, c)| (e.clone(), Complex64::new(*c, 0.0)))
            .collect();
        Self::from_terms(nvars, &raw)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Max total degree over terms; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::total_degree).max().unwrap_or(0)
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Complex64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, exps: &[u32]) -> Complex64 {
        assert_eq!(exps.len(), self.nvars);
        self.terms
            .get(&Monomial::new(exps.to_vec()))
            .copied()
            .unwrap_or(Complex64::ZERO)
    }

    /// Sum of coefficient magnitudes; scale reference for tolerances.
    pub fn coeff_norm_l1(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    /// Evaluates at a complex point. Summation follows the canonical term
    /// order, so results are bit-reproducible.
    pub fn evaluate(&self, point: &[Complex64]) -> Result<Complex64, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, got: point.len() });
        }
        let mut acc = Complex64::ZERO;
        for (m, c) in &self.terms {
            let mut t = *c;
            for (z, &e) in point.iter().zip(m.exponents()) {
                if e > 0 {
                    t *= z.powu(e);
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Evaluates at a real point, returning the real part. Intended for
    /// real-coefficient polynomials, where the imaginary part is exactly zero.
    pub fn evaluate_real(&self, point: &[f64]) -> Result<f64, PolyError> {
        let z: Vec<Complex64> = point.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Ok(self.evaluate(&z)?.re)
    }

    /// Upper bound `sum |c| * prod |x_i|^e` on the attainable magnitude at
    /// `|point|`; used to scale residual and singularity tolerances.
    pub fn magnitude_bound(&self, point: &[Complex64]) -> f64 {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut t = c.norm();
            for (z, &e) in point.iter().zip(m.exponents()) {
                if e > 0 {
                    t *= z.norm().powi(e as i32);
                }
            }
            acc += t;
        }
        acc
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.combine(other, false)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.combine(other, true)
    }

    fn combine(&self, other: &Polynomial, negate: bool) -> Result<Polynomial, PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, got: other.nvars });
        }
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            let c = if negate { -c } else { *c };
            let entry = terms.entry(m.clone()).or_insert(Complex64::ZERO);
            *entry += c;
            if *entry == Complex64::ZERO {
                terms.remove(m);
            }
        }
        Ok(Polynomial { nvars: self.nvars, terms })
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, got: other.nvars });
        }
        let mut terms: BTreeMap<Monomial, Complex64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m = ma.mul(mb);
                let entry = terms.entry(m).or_insert(Complex64::ZERO);
                *entry += ca * cb;
            }
            if terms.len() > TERM_BUDGET {
                return Err(PolyError::TermBudget { terms: terms.len() });
            }
        }
        terms.retain(|_, c| *c != Complex64::ZERO);
        Ok(Polynomial { nvars: self.nvars, terms })
    }

    pub fn scale(&self, s: Complex64) -> Polynomial {
        if s == Complex64::ZERO {
            return Polynomial::zero(self.nvars);
        }
        let terms = self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect();
        Polynomial { nvars: self.nvars, terms }
    }

    pub fn neg(&self) -> Polynomial {
        self.scale(-Complex64::ONE)
    }

    /// `self^d` by binary exponentiation.
    pub fn pow(&self, d: u32) -> Result<Polynomial, PolyError> {
        let mut acc = Polynomial::constant(self.nvars, Complex64::ONE);
        let mut base = self.clone();
        let mut e = d;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(acc)
    }

    /// Partial derivative with respect to variable `i`.
    pub fn partial(&self, i: usize) -> Polynomial {
        assert!(i < self.nvars);
        let mut terms = BTreeMap::new();
        for (m, c) in &self.terms {
            let e = m.exponents()[i];
            if e == 0 {
                continue;
            }
            let mut exps = m.exponents().to_vec();
            exps[i] = e - 1;
            terms.insert(Monomial::new(exps), c * (e as f64));
        }
        Polynomial { nvars: self.nvars, terms }
    }

    pub fn gradient(&self) -> Vec<Polynomial> {
        (0..self.nvars).map(|i| self.partial(i)).collect()
    }

    /// Symmetric matrix of second partials.
    pub fn hessian(&self) -> Vec<Vec<Polynomial>> {
        let grad = self.gradient();
        (0..self.nvars)
            .map(|i| (0..self.nvars).map(|j| grad[i].partial(j)).collect())
            .collect()
    }

    /// Reinterprets this polynomial in a larger variable set; the original
    /// variables keep their indices and the new trailing ones do not occur.
    pub fn extend_vars(&self, nvars: usize) -> Polynomial {
        assert!(nvars >= self.nvars);
        let pad = nvars - self.nvars;
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| {
                let mut exps = m.exponents().to_vec();
                exps.extend(std::iter::repeat(0).take(pad));
                (Monomial::new(exps), *c)
            })
            .collect();
        Polynomial { nvars, terms }
    }

    /// Fully expanded `(w . x + b)^d`.
    pub fn expand_affine_power(w: &[f64], b: f64, d: u32) -> Result<Polynomial, PolyError> {
        assert!(d >= 1, "affine power requires d >= 1");
        let nvars = w.len();
        let mut raw: Vec<(Vec<u32>, Complex64)> = Vec::with_capacity(nvars + 1);
        for (i, &wi) in w.iter().enumerate() {
            if wi != 0.0 {
                let mut e = vec![0; nvars];
                e[i] = 1;
                raw.push((e, Complex64::new(wi, 0.0)));
            }
        }
        if b != 0.0 {
            raw.push((vec![0; nvars], Complex64::new(b, 0.0)));
        }
        Polynomial::from_terms(nvars, &raw).pow(d)
    }

    /// Canonical text form: one term per line, `coeff_re coeff_im e1 .. en`,
    /// leading (graded-lex greatest) term first.
    pub fn to_canonical_text(&self) -> String {
        let mut out = String::new();
        for (m, c) in self.terms.iter().rev() {
            out.push_str(&format!("{} {}", c.re, c.im));
            for e in m.exponents() {
                out.push_str(&format!(" {e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the canonical text form. `nvars` is inferred from the first
    /// line; an empty string is the zero polynomial in `nvars_hint` variables.
    pub fn from_canonical_text(text: &str, nvars_hint: usize) -> Result<Polynomial, PolyError> {
        let mut raw = Vec::new();
        let mut nvars = nvars_hint;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 3 {
                return Err(PolyError::Parse {
                    line: idx + 1,
                    reason: "expected `coeff_re coeff_im e1 .. en`".into(),
                });
            }
            let parse_f = |s: &str| -> Result<f64, PolyError> {
                s.parse().map_err(|_| PolyError::Parse {
                    line: idx + 1,
                    reason: format!("bad float `{s}`"),
                })
            };
            let re = parse_f(fields[0])?;
            let im = parse_f(fields[1])?;
            let exps: Result<Vec<u32>, PolyError> = fields[2..]
                .iter()
                .map(|s| {
                    s.parse().map_err(|_| PolyError::Parse {
                        line: idx + 1,
                        reason: format!("bad exponent `{s}`"),
                    })
                })
                .collect();
            let exps = exps?;
            if raw.is_empty() && nvars_hint == 0 {
                nvars = exps.len();
            }
            if exps.len() != nvars {
                return Err(PolyError::Parse {
                    line: idx + 1,
                    reason: format!("expected {nvars} exponents, got {}", exps.len()),
                });
            }
            raw.push((exps, Complex64::new(re, im)));
        }
        Ok(Polynomial::from_terms(nvars, &raw))
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if c.im == 0.0 {
                write!(f, "{}", c.re)?;
            } else {
                write!(f, "({}+{}i)", c.re, c.im)?;
            }
            for (i, &e) in m.exponents().iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, e)?,
                }
            }
        }
        Ok(())
    }
}

/// Ordered list of polynomials sharing one variable set.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem {
    nvars: usize,
    equations: Vec<Polynomial>,
}

impl PolySystem {
    pub fn new(nvars: usize, equations: Vec<Polynomial>) -> Result<Self, PolyError> {
        for eq in &equations {
            if eq.nvars() != nvars {
                return Err(PolyError::DimensionMismatch { expected: nvars, got: eq.nvars() });
            }
        }
        Ok(PolySystem { nvars, equations })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn equations(&self) -> &[Polynomial] {
        &self.equations
    }

    pub fn is_square(&self) -> bool {
        self.equations.len() == self.nvars
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.equations.iter().map(Polynomial::degree).collect()
    }

    pub fn evaluate(&self, point: &[Complex64]) -> Result<Vec<Complex64>, PolyError> {
        self.equations.iter().map(|p| p.evaluate(point)).collect()
    }

    /// Max-norm residual at a point.
    pub fn residual(&self, point: &[Complex64]) -> Result<f64, PolyError> {
        Ok(self
            .evaluate(point)?
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max))
    }

    /// Row-major Jacobian: entry `(i, j)` is d eq_i / d x_j.
    pub fn jacobian(&self) -> Vec<Vec<Polynomial>> {
        self.equations.iter().map(|eq| eq.gradient()).collect()
    }
}
