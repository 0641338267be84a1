//! Chebyshev interpolation on Chebyshev–Gauss–Lobatto nodes.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterpolationError {
    #[error("expected {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },
    #[error("evaluation point {0} outside [-1, 1]")]
    OutOfDomain(f64),
    #[error("basis index {k} exceeds degree {degree}")]
    BasisIndex { k: usize, degree: usize },
    #[error("non-finite sample at node {0}")]
    NonFinite(usize),
    #[error("invalid bound parameters: {0}")]
    InvalidBound(String),
}

/// Nodes `cos(kπ/N)`, `k = 0..=N`, in decreasing order. `N = 0` gives `[1]`.
pub fn cgl_points(degree: usize) -> Vec<f64> {
    if degree == 0 {
        return vec![1.0];
    }
    (0..=degree)
        .map(|k| {
            // Evaluate as a sine around the midpoint for exact symmetry.
            let n = degree as f64;
            (PI * (n - 2.0 * k as f64) / (2.0 * n)).sin()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevInterpolant {
    coefficients: Vec<f64>,
}

impl ChebyshevInterpolant {
    pub fn new(coefficients: Vec<f64>) -> Self {
        assert!(!coefficients.is_empty(), "at least one coefficient");
        Self { coefficients }
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, x: f64) -> Result<f64, InterpolationError> {
        clenshaw_eval(&self.coefficients, x)
    }

    /// Interpolant of `f` at the degree-`N` CGL nodes.
    pub fn interpolate(f: impl Fn(f64) -> f64, degree: usize) -> Result<Self, InterpolationError> {
        let samples: Vec<f64> = cgl_points(degree).into_iter().map(f).collect();
        Ok(Self::new(chebyshev_coefficients(&samples)?))
    }
}

/// Chebyshev coefficients of the interpolant through samples at
/// `cgl_points(N)` (type-I discrete cosine transform).
pub fn chebyshev_coefficients(samples: &[f64]) -> Result<Vec<f64>, InterpolationError> {
    if samples.is_empty() {
        return Err(InterpolationError::SampleCount { expected: 1, got: 0 });
    }
    if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
        return Err(InterpolationError::NonFinite(j));
    }
    let n = samples.len() - 1;
    if n == 0 {
        return Ok(vec![samples[0]]);
    }
    let nf = n as f64;
    let coefficients = (0..=n)
        .map(|k| {
            let mut sum = 0.0;
            for (j, &f) in samples.iter().enumerate() {
                let weight = if j == 0 || j == n { 0.5 } else { 1.0 };
                // kj mod 2N keeps the cosine argument small.
                let phase = ((k * j) % (2 * n)) as f64;
                sum += weight * f * (PI * phase / nf).cos();
            }
            let alpha = if k == 0 || k == n { 2.0 } else { 1.0 };
            2.0 * sum / (alpha * nf)
        })
        .collect();
    Ok(coefficients)
}

/// `Σ c_k T_k(x)` by the Clenshaw recurrence.
pub fn clenshaw_eval(c: &[f64], x: f64) -> Result<f64, InterpolationError> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(InterpolationError::OutOfDomain(x));
    }
    Ok(clenshaw_unchecked(c, x))
}

pub(crate) fn clenshaw_unchecked(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    x * b1 - b2 + c.first().copied().unwrap_or(0.0)
}

/// `T_k(x)` for `|x| ≤ 1` by the three-term recurrence.
pub fn chebyshev_t(k: usize, x: f64) -> f64 {
    let (mut t0, mut t1) = (1.0, x);
    if k == 0 {
        return 1.0;
    }
    for _ in 1..k {
        let t2 = 2.0 * x * t1 - t0;
        t0 = t1;
        t1 = t2;
    }
    t1
}

/// Cardinal polynomials on the CGL nodes, evaluated in barycentric form.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeBasis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(degree: usize) -> Self {
        let nodes = cgl_points(degree);
        let weights = (0..=degree)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                if k == 0 || k == degree {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        Self { nodes, weights }
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `L_k(x)`.
    pub fn eval(&self, k: usize, x: f64) -> Result<f64, InterpolationError> {
        if k > self.degree() {
            return Err(InterpolationError::BasisIndex { k, degree: self.degree() });
        }
        if !(-1.0..=1.0).contains(&x) {
            return Err(InterpolationError::OutOfDomain(x));
        }
        Ok(self.eval_unchecked(k, x))
    }

    pub(crate) fn eval_unchecked(&self, k: usize, x: f64) -> f64 {
        if self.nodes.len() == 1 {
            return 1.0;
        }
        let mut denominator = 0.0;
        for (j, (&xj, &wj)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let d = x - xj;
            if d == 0.0 {
                return if j == k { 1.0 } else { 0.0 };
            }
            denominator += wj / d;
        }
        self.weights[k] / (x - self.nodes[k]) / denominator
    }

    /// `Σ f_j L_j(x)` for samples at the nodes.
    pub fn interpolate(&self, samples: &[f64], x: f64) -> Result<f64, InterpolationError> {
        if samples.len() != self.nodes.len() {
            return Err(InterpolationError::SampleCount { expected: self.nodes.len(), got: samples.len() });
        }
        if !(-1.0..=1.0).contains(&x) {
            return Err(InterpolationError::OutOfDomain(x));
        }
        if self.nodes.len() == 1 {
            return Ok(samples[0]);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for ((&xj, &wj), &fj) in self.nodes.iter().zip(&self.weights).zip(samples) {
            let d = x - xj;
            if d == 0.0 {
                return Ok(fj);
            }
            num += wj * fj / d;
            den += wj / d;
        }
        Ok(num / den)
    }
}

pub fn lagrange_eval(basis: &LagrangeBasis, k: usize, x: f64) -> Result<f64, InterpolationError> {
    basis.eval(k, x)
}

/// Sup-norm interpolation error bound `4 M0 ρ^{−N} / (ρ − 1)` for `f`
/// analytic and bounded by `M0` inside the Bernstein ellipse `E_ρ`.
pub fn bernstein_bound(m0: f64, rho: f64, degree: usize) -> Result<f64, InterpolationError> {
    if !(rho > 1.0) || !rho.is_finite() {
        return Err(InterpolationError::InvalidBound(format!("rho = {rho} must exceed 1")));
    }
    if !(m0 > 0.0) || !m0.is_finite() {
        return Err(InterpolationError::InvalidBound(format!("M0 = {m0} must be positive")));
    }
    Ok(4.0 * m0 * rho.powi(-(degree as i32)) / (rho - 1.0))
}

/// Error bound of the integrated interpolant, twice the sup-norm bound.
pub fn quadrature_error_bound(m0: f64, rho: f64, degree: usize) -> Result<f64, InterpolationError> {
    Ok(2.0 * bernstein_bound(m0, rho, degree)?)
}

/// Smallest `N` with `bernstein_bound(M0, e, N) ≤ eps`, i.e.
/// `N ≥ ln(4 M0 / (e − 1)) + ln(1/ε)`.
pub fn degree_for_tolerance(m0: f64, eps: f64) -> Result<usize, InterpolationError> {
    if !(eps > 0.0) || !(m0 > 0.0) {
        return Err(InterpolationError::InvalidBound(format!("M0 = {m0}, eps = {eps}")));
    }
    let e = std::f64::consts::E;
    let n = (4.0 * m0 / (e - 1.0)).ln() + (1.0 / eps).ln();
    Ok(n.max(0.0).ceil() as usize)
}

/// Constant of the rank bound for prototype vectors, `sinh(1)/2`.
pub const RANK_BOUND_CONSTANT: f64 = 0.587_600_596_821_900_7;

/// Upper bound on the TT rank of a prototype vector over a frequency band
/// of width `span` at accuracy `eps`:
/// `1 + ln(8/(e−1)) + C·span + ln(1/ε)`.
pub fn prototype_rank_bound(span: f64, eps: f64) -> f64 {
    let e = std::f64::consts::E;
    1.0 + (8.0 / (e - 1.0)).ln() + RANK_BOUND_CONSTANT * span + (1.0 / eps).ln()
}
