//! Query-time evaluation of oscillatory integrals from precomputed tables.

use num_complex::Complex64;
use thiserror::Error;

use crate::interpolation::{cgl_points, chebyshev_coefficients, quadrature_error_bound, InterpolationError};
use crate::oracle_quadrature::Part;
use crate::oscillators::OscillatorKind;
use crate::prototype_pipeline::{BasisSpec, EntryData, FrequencyGrid, PrototypeTable};
use crate::tensor_train::TtError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("frequency outside precomputed grid: {omega} not in [{min}, {max}]")]
    OutOfGrid { omega: f64, min: f64, max: f64 },
    #[error("table basis mismatch: {0}")]
    Basis(String),
    #[error("table oscillator mismatch: {0}")]
    Oscillator(String),
    #[error("table has no usable data for entry {index:?}/{part}: {reason}")]
    MissingEntry { index: Vec<usize>, part: &'static str, reason: String },
    #[error("smooth factor is not finite ({value}) at {x:?}")]
    NonFinite { x: Vec<f64>, value: f64 },
    #[error("invalid Fourier interval [{a}, {b}]")]
    Interval { a: f64, b: f64 },
    #[error(transparent)]
    Interpolation(#[from] InterpolationError),
    #[error(transparent)]
    Tensor(#[from] TtError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegralResult {
    pub value: Complex64,
    /// Requested frequency.
    pub omega: f64,
    /// Grid frequency actually used.
    pub omega_rounded: f64,
    pub grid_index: u64,
    /// `2(e^{|ω̃ − ω|} − 1)`.
    pub rounding_bound: f64,
    pub interpolation_bound: Option<f64>,
    /// Tensors contracted for this query.
    pub tensor_evaluations: usize,
    pub flags: Vec<String>,
}

impl IntegralResult {
    pub fn flagged(&self) -> bool {
        !self.flags.is_empty()
    }

    /// Attaches the interpolation estimate `8 M₀ ρ^{−N}/(ρ − 1)` for a smooth
    /// factor bounded by `m0` on the Bernstein ellipse `E_ρ`.
    pub fn with_interpolation_bound(mut self, m0: f64, rho: f64, degree: usize) -> Result<Self, IntegratorError> {
        self.interpolation_bound = Some(quadrature_error_bound(m0, rho, degree)?);
        Ok(self)
    }
}

/// Worst-case rounding error on a grid with spacing `h`: `2(e^{h/2} − 1)`.
pub fn rounding_error_bound(h: f64) -> f64 {
    2.0 * (h / 2.0).exp_m1()
}

/// Rounding error of a frequency moved by `distance`: `2(e^{|Δ|} − 1)`.
pub fn rounding_bound_for_distance(distance: f64) -> f64 {
    2.0 * distance.abs().exp_m1()
}

/// Nearest grid point to `omega`; ties round away from zero (towards the
/// larger index).
pub fn round_to_grid(omega: f64, grid: &FrequencyGrid) -> Result<(u64, f64), IntegratorError> {
    let out = || IntegratorError::OutOfGrid { omega, min: grid.omega_min(), max: grid.omega_max() };
    if !omega.is_finite() || omega < grid.omega_min() || omega > grid.omega_max() {
        return Err(out());
    }
    let t = ((omega - grid.omega_min()) / grid.step()).round();
    let index = (t.max(0.0) as u64).min(grid.points() - 1);
    Ok((index, grid.omega_at(index)))
}

fn entry_value(
    table: &PrototypeTable,
    index: &[usize],
    part: Part,
    grid_index: u64,
) -> Result<Option<(f64, bool)>, IntegratorError> {
    let entry = table.entry(index, part).ok_or_else(|| IntegratorError::MissingEntry {
        index: index.to_vec(),
        part: part.name(),
        reason: "not stored".into(),
    })?;
    match &entry.data {
        EntryData::Zero => Ok(None),
        EntryData::Tensor(t) => Ok(Some((t.evaluate_flat(grid_index)?, entry.flagged()))),
        EntryData::Failed(msg) => {
            Err(IntegratorError::MissingEntry { index: index.to_vec(), part: part.name(), reason: msg.clone() })
        }
    }
}

/// `Σ_k a_k (Q_k^R + i Q_k^I)` over the given basis indices.
fn combine(
    table: &PrototypeTable,
    weights: &[(Vec<usize>, f64)],
    omega: f64,
) -> Result<IntegralResult, IntegratorError> {
    let (grid_index, omega_rounded) = round_to_grid(omega, &table.grid)?;
    let parts: &[Part] = match table.oscillator.kind {
        OscillatorKind::Phase => &[Part::Real, Part::Imag],
        OscillatorKind::Kernel => &[Part::Real],
    };
    let mut value = Complex64::new(0.0, 0.0);
    let mut evaluations = 0;
    let mut flags = Vec::new();
    for (index, a) in weights {
        for &part in parts {
            if let Some((q, flagged)) = entry_value(table, index, part, grid_index)? {
                evaluations += 1;
                if flagged {
                    flags.push(format!("entry {index:?}/{} did not converge", part.name()));
                }
                match part {
                    Part::Real => value.re += a * q,
                    Part::Imag => value.im += a * q,
                }
            }
        }
    }
    Ok(IntegralResult {
        value,
        omega,
        omega_rounded,
        grid_index,
        rounding_bound: rounding_bound_for_distance(omega_rounded - omega),
        interpolation_bound: None,
        tensor_evaluations: evaluations,
        flags,
    })
}

fn sample(f: &dyn Fn(f64) -> f64, x: f64) -> Result<f64, IntegratorError> {
    let v = f(x);
    if !v.is_finite() {
        return Err(IntegratorError::NonFinite { x: vec![x], value: v });
    }
    Ok(v)
}

/// Expansion weights of `f` in the table's 1-D basis using degree
/// `degree ≤ N` (Chebyshev) or exactly `N` (Lagrange).
pub fn smooth_weights(
    table: &PrototypeTable,
    f: &dyn Fn(f64) -> f64,
    degree: usize,
) -> Result<Vec<f64>, IntegratorError> {
    let samples = cgl_points(degree).into_iter().map(|x| sample(f, x)).collect::<Result<Vec<_>, _>>()?;
    match table.basis {
        BasisSpec::Chebyshev { degree: n } if degree <= n => Ok(chebyshev_coefficients(&samples)?),
        BasisSpec::Lagrange { degree: n } if degree == n => Ok(samples),
        b => Err(IntegratorError::Basis(format!(
            "cannot use degree {degree} with a {} basis of degree {}",
            b.name(),
            b.degree()
        ))),
    }
}

/// Combines precomputed prototypes with caller-supplied weights: Chebyshev
/// coefficients or Lagrange node samples.
pub fn integrate_weights(
    table: &PrototypeTable,
    weights: &[f64],
    omega: f64,
) -> Result<IntegralResult, IntegratorError> {
    if table.basis.dimension() != 1 || weights.len() > table.basis.degree() + 1 {
        return Err(IntegratorError::Basis(format!(
            "{} weights for a {} basis of degree {}",
            weights.len(),
            table.basis.name(),
            table.basis.degree()
        )));
    }
    let w: Vec<(Vec<usize>, f64)> = weights.iter().enumerate().map(|(k, &a)| (vec![k], a)).collect();
    combine(table, &w, omega)
}

/// `∫_{-1}^{1} f(x) e^{iω g(x)} dx` from a phase table.
pub fn integrate_1d(
    table: &PrototypeTable,
    f: &dyn Fn(f64) -> f64,
    omega: f64,
) -> Result<IntegralResult, IntegratorError> {
    integrate_1d_with_degree(table, f, omega, table.basis.degree())
}

/// As [`integrate_1d`], interpolating `f` with a lower degree.
pub fn integrate_1d_with_degree(
    table: &PrototypeTable,
    f: &dyn Fn(f64) -> f64,
    omega: f64,
    degree: usize,
) -> Result<IntegralResult, IntegratorError> {
    if table.oscillator.kind != OscillatorKind::Phase {
        return Err(IntegratorError::Oscillator("table holds a general kernel; use integrate_general".into()));
    }
    round_to_grid(omega, &table.grid)?;
    let weights = smooth_weights(table, f, degree)?;
    integrate_weights(table, &weights, omega)
}

/// `∫_{-1}^{1} f(x) h_ω(x) dx` from a kernel table.
pub fn integrate_general(
    table: &PrototypeTable,
    f: &dyn Fn(f64) -> f64,
    omega: f64,
) -> Result<IntegralResult, IntegratorError> {
    if table.oscillator.kind != OscillatorKind::Kernel {
        return Err(IntegratorError::Oscillator("table holds a phase; use integrate_1d".into()));
    }
    round_to_grid(omega, &table.grid)?;
    let weights = smooth_weights(table, f, table.basis.degree())?;
    integrate_weights(table, &weights, omega)
}

/// `∫_{[-1,1]^d} f(y) e^{iω g(y)} dy` from a multi-index Lagrange table.
pub fn integrate_multi(
    table: &PrototypeTable,
    f: &dyn Fn(&[f64]) -> f64,
    omega: f64,
) -> Result<IntegralResult, IntegratorError> {
    let BasisSpec::LagrangeMulti { degree, dimension } = table.basis else {
        return Err(IntegratorError::Basis(format!("expected a lagr-multi table, found {}", table.basis.name())));
    };
    round_to_grid(omega, &table.grid)?;
    let nodes = cgl_points(degree);
    let mut weights = Vec::with_capacity(table.basis.count());
    let mut point = vec![0.0; dimension];
    for idx in table.basis.indices() {
        for (p, &j) in point.iter_mut().zip(&idx) {
            *p = nodes[j];
        }
        let v = f(&point);
        if !v.is_finite() {
            return Err(IntegratorError::NonFinite { x: point.clone(), value: v });
        }
        weights.push((idx, v));
    }
    combine(table, &weights, omega)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierResult {
    /// `∫_a^b f(t) e^{−iωt} dt` at the frequency `omega_used`.
    pub value: Complex64,
    pub omega: f64,
    /// Frequency whose transform `value` is: `2ω̃_r/(b − a)` for the rounded
    /// scaled frequency `ω̃_r`.
    pub omega_used: f64,
    pub inner: IntegralResult,
}

/// `f̂(ω) = ∫_a^b f(t) e^{−iωt} dt` from a table with `g(x) = −x`, via
/// `f̂(ω) = (b−a)/2 · e^{−i(b+a)ω/2} ∫_{-1}^{1} f(χ(x)) e^{−ixω̃} dx`,
/// `ω̃ = (b−a)ω/2`. The prefactor is taken at the rounded frequency so that
/// the result is the transform at [`FourierResult::omega_used`].
pub fn fourier_transform(
    table: &PrototypeTable,
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    omega: f64,
) -> Result<FourierResult, IntegratorError> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(IntegratorError::Interval { a, b });
    }
    let is_minus_x = table.oscillator.kind == OscillatorKind::Phase
        && table.oscillator.dimension == 1
        && [-1.0, -0.3, 0.25, 0.9].iter().all(|&x| table.oscillator.phase_at(&[x]).is_ok_and(|g| g == -x));
    if !is_minus_x {
        return Err(IntegratorError::Oscillator(format!(
            "Fourier transforms need a table for g(x) = -x, found {}",
            table.oscillator.text()
        )));
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let scaled = half * omega;
    let g = |x: f64| f(half * x + mid);
    let inner = integrate_1d(table, &g, scaled)?;
    let omega_used = inner.omega_rounded / half;
    let prefactor = Complex64::from_polar(half, -mid * omega_used);
    Ok(FourierResult { value: prefactor * inner.value, omega, omega_used, inner })
}
