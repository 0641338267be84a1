//! Reference quadrature: Gauss–Legendre rules, composite and tensorized
//! integration, and the oscillatory entries consumed by cross approximation.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::oscillators::{Bindings, Expr, OscError, OscillatorKind, OscillatorSpec};

pub const MAX_GAUSS_POINTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("Gauss-Legendre order {0} outside 1..=64")]
    InvalidOrder(usize),
    #[error("invalid integration interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("number of subintervals must be at least 1")]
    NoSubintervals,
    #[error("integrand is not finite ({value}) at {x:?}")]
    NonFinite { x: Vec<f64>, value: f64 },
    #[error("integrand evaluation failed at {x:?}: {source}")]
    Oscillator { x: Vec<f64>, source: OscError },
    #[error(
        "tensorized rule needs {needed} nodes, above the budget of {budget}; \
         lower the frequency range or the subinterval count"
    )]
    Budget { needed: u128, budget: u64 },
    #[error("invalid quadrature configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension {0} not supported (expected 1..=3)")]
    Dimension(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]`, nodes ascending and exactly
/// antisymmetric.
pub fn gauss_legendre(n: usize) -> Result<GaussRule, QuadratureError> {
    if !(1..=MAX_GAUSS_POINTS).contains(&n) {
        return Err(QuadratureError::InvalidOrder(n));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                let (_, d) = legendre_and_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(GaussRule { nodes, weights })
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// Nodes and weights of the composite rule with `m` equal subintervals.
/// On `[-1, 1]` the nodes are exactly antisymmetric.
pub fn composite_rule(a: f64, b: f64, m: usize, rule: &GaussRule) -> (Vec<f64>, Vec<f64>) {
    let n = rule.nodes.len();
    let mut xs = Vec::with_capacity(m * n);
    let mut ws = Vec::with_capacity(m * n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mf = m as f64;
    for j in 0..m {
        // Integer numerator keeps centres exactly antisymmetric.
        let centre = ((2 * j + 1) as f64 - mf) / mf;
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            xs.push(mid + half * (centre + t / mf));
            ws.push(half * w / mf);
        }
    }
    (xs, ws)
}

fn check_interval(a: f64, b: f64, m: usize) -> Result<(), QuadratureError> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(QuadratureError::InvalidInterval { a, b });
    }
    if m == 0 {
        return Err(QuadratureError::NoSubintervals);
    }
    Ok(())
}

/// Composite `n`-point Gauss–Legendre approximation of `∫_a^b φ`.
pub fn composite_integrate(
    mut phi: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    m: usize,
    n: usize,
) -> Result<f64, QuadratureError> {
    check_interval(a, b, m)?;
    let rule = gauss_legendre(n)?;
    let (xs, ws) = composite_rule(a, b, m, &rule);
    let mut sum = 0.0;
    for (&x, &w) in xs.iter().zip(&ws) {
        let v = phi(x);
        if !v.is_finite() {
            return Err(QuadratureError::NonFinite { x: vec![x], value: v });
        }
        sum += w * v;
    }
    Ok(sum)
}

/// Full tensor-product composite rule over `[-1, 1]^d` with `m`
/// subintervals and `n` points per axis; at most `budget` nodes.
pub fn tensorized_integrate(
    mut phi: impl FnMut(&[f64]) -> f64,
    d: usize,
    m: usize,
    n: usize,
    budget: u64,
) -> Result<f64, QuadratureError> {
    if !(1..=3).contains(&d) {
        return Err(QuadratureError::Dimension(d));
    }
    check_interval(-1.0, 1.0, m)?;
    let rule = gauss_legendre(n)?;
    let per_axis = (m * n) as u128;
    let needed = per_axis.pow(d as u32);
    if needed > budget as u128 {
        return Err(QuadratureError::Budget { needed, budget });
    }
    let (xs, ws) = composite_rule(-1.0, 1.0, m, &rule);
    let p = xs.len();
    let mut point = vec![0.0; d];
    let mut idx = vec![0usize; d];
    let mut sum = 0.0;
    loop {
        let mut w = 1.0;
        for (axis, &i) in idx.iter().enumerate() {
            point[axis] = xs[i];
            w *= ws[i];
        }
        let v = phi(&point);
        if !v.is_finite() {
            return Err(QuadratureError::NonFinite { x: point.clone(), value: v });
        }
        sum += w * v;
        let mut axis = 0;
        loop {
            idx[axis] += 1;
            if idx[axis] < p {
                break;
            }
            idx[axis] = 0;
            axis += 1;
            if axis == d {
                return Ok(sum);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Part {
    Real,
    Imag,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::Real => "R",
            Part::Imag => "I",
        }
    }
}

/// How many subintervals of `[-1, 1]` (per axis) a query at `ω` uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubintervalRule {
    /// `⌈scale·(|ω|·s + k)⌉`, at least `minimum`, where `s` bounds the phase
    /// slope `|∂g|` (taken as [`KERNEL_SLOPE`] for kernels) and `k` is the
    /// basis degree: each subinterval then sees about one radian of
    /// oscillation. Rounded up to a geometric ladder so that prepared rules
    /// are shared by nearby frequencies.
    Resolved { scale: f64, minimum: usize },
    /// `max(⌈scale·|ω|⌉, minimum)`, ladder-rounded.
    Proportional { scale: f64, minimum: usize },
    /// The same count for every frequency.
    Fixed(usize),
}

/// Slope assumed for kernels `h_ω(x)`, whose variation is not a phase.
pub const KERNEL_SLOPE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub points_per_subinterval: usize,
    pub subintervals: SubintervalRule,
    /// Self-validation recomputes with this many times more subintervals.
    pub refinement_factor: usize,
    /// Coarse/refined disagreement above this value flags the entry.
    pub validation_tolerance: f64,
    /// Largest node count of a non-separable tensorized rule.
    pub budget: u64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            points_per_subinterval: 8,
            subintervals: SubintervalRule::Resolved { scale: 1.0, minimum: 1 },
            refinement_factor: 2,
            validation_tolerance: 1e-9,
            budget: 1 << 24,
        }
    }
}

/// Ladder steps: every integer up to 16, then ratio 1.125.
fn ladder_ceil(m: usize) -> usize {
    if m <= 16 {
        return m.max(1);
    }
    let mut v = 16usize;
    while v < m {
        v = (v + 1).max((v as f64 * 1.125).ceil() as usize);
    }
    v
}

impl QuadratureConfig {
    /// Fixed subdivision into `⌈ω_max⌉` subintervals with 8 points each.
    pub fn fixed(omega_max: f64) -> Self {
        Self { subintervals: SubintervalRule::Fixed((omega_max.abs().ceil() as usize).max(1)), ..Self::default() }
    }

    pub fn with_scale(scale: f64) -> Self {
        Self { subintervals: SubintervalRule::Resolved { scale, minimum: 1 }, ..Self::default() }
    }

    /// `max(⌈|ω|⌉, 1)` subintervals, ignoring slope and degree.
    pub fn proportional() -> Self {
        Self { subintervals: SubintervalRule::Proportional { scale: 1.0, minimum: 1 }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), QuadratureError> {
        if !(2..=MAX_GAUSS_POINTS).contains(&self.points_per_subinterval) {
            return Err(QuadratureError::InvalidConfig(format!(
                "points_per_subinterval {} not in 2..=64",
                self.points_per_subinterval
            )));
        }
        if self.refinement_factor < 2 {
            return Err(QuadratureError::InvalidConfig("refinement_factor must be ≥ 2".into()));
        }
        match self.subintervals {
            SubintervalRule::Resolved { scale, .. } | SubintervalRule::Proportional { scale, .. }
                if !(scale > 0.0) || !scale.is_finite() =>
            {
                Err(QuadratureError::InvalidConfig(format!("subinterval scale {scale}")))
            }
            SubintervalRule::Fixed(0) => Err(QuadratureError::NoSubintervals),
            _ => Ok(()),
        }
    }

    /// Subintervals per axis at `ω` for a basis of degree `degree` and an
    /// oscillator with slope bound `slope`.
    pub fn subintervals_for(&self, omega: f64, degree: usize, slope: f64) -> usize {
        match self.subintervals {
            SubintervalRule::Resolved { scale, minimum } => {
                let m = (scale * (omega.abs() * slope + degree as f64)).ceil() as usize;
                ladder_ceil(m.max(minimum).max(1))
            }
            SubintervalRule::Proportional { scale, minimum } => {
                ladder_ceil(((scale * omega.abs()).ceil() as usize).max(minimum).max(1))
            }
            SubintervalRule::Fixed(m) => m.max(1),
        }
    }

    fn refined(&self, m: usize) -> usize {
        match self.subintervals {
            SubintervalRule::Fixed(_) => m * self.refinement_factor,
            _ => ladder_ceil(m * self.refinement_factor),
        }
    }
}

/// A self-validated oscillatory integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryValue {
    /// Value from the refined rule.
    pub value: f64,
    /// Value from the base rule.
    pub coarse: f64,
    pub disagreement: f64,
    pub flagged: bool,
    pub subintervals: usize,
}

/// One factor of a (product) basis function: `B(x) = Π_i B_i(x_i)`.
pub type BasisFactor = Box<dyn Fn(f64) -> f64 + Send + Sync>;

enum Prepared {
    /// Weighted basis values and the phase or nothing (kernel) per axis.
    Separable {
        weighted: Vec<Vec<f64>>,
        phase: Vec<Vec<f64>>,
    },
    Grid {
        weighted: Vec<Vec<f64>>,
        nodes: Vec<f64>,
        phase: Option<Vec<f64>>,
    },
}

/// `∫_{[-1,1]^d} B(x) cos(ω g(x)) dx` (or `sin`, or a kernel `h_ω(x)` in
/// place of the trigonometric factor) with cached composite rules.
pub struct EntryIntegrand {
    osc: OscillatorSpec,
    parts: Option<Vec<Expr>>,
    basis: Vec<BasisFactor>,
    degree: usize,
    slope: f64,
    part: Part,
    cfg: QuadratureConfig,
    rule: GaussRule,
    cache: HashMap<usize, Prepared>,
}

impl EntryIntegrand {
    /// `basis` holds one factor per dimension of the oscillator; `degree` is
    /// the largest polynomial degree among them.
    pub fn new(
        osc: &OscillatorSpec,
        basis: Vec<BasisFactor>,
        degree: usize,
        part: Part,
        cfg: QuadratureConfig,
    ) -> Result<Self, QuadratureError> {
        cfg.validate()?;
        if basis.len() != osc.dimension {
            return Err(QuadratureError::InvalidConfig(format!(
                "{} basis factors for a {}-dimensional oscillator",
                basis.len(),
                osc.dimension
            )));
        }
        if osc.kind == OscillatorKind::Kernel && part == Part::Imag {
            return Err(QuadratureError::InvalidConfig("kernel oscillators have a single real part".into()));
        }
        let parts = match osc.kind {
            OscillatorKind::Phase if osc.dimension > 1 => osc.expr.additive_split(osc.dimension),
            OscillatorKind::Phase => Some(vec![osc.expr.clone()]),
            OscillatorKind::Kernel => None,
        };
        let slope = match (&parts, osc.kind) {
            (_, OscillatorKind::Kernel) => KERNEL_SLOPE,
            (Some(parts), _) => {
                let mut s = 0.0f64;
                for (axis, g) in parts.iter().enumerate() {
                    s = s.max(axis_slope(|x| {
                        let mut coords = [0.0; 3];
                        coords[axis] = x;
                        g.eval(&Bindings { x: coords, dimension: osc.dimension, omega: None })
                    })?);
                }
                s
            }
            (None, _) => grid_slope(osc)?,
        };
        Ok(Self {
            osc: osc.clone(),
            parts,
            basis,
            degree,
            slope,
            part,
            cfg,
            rule: gauss_legendre(cfg.points_per_subinterval)?,
            cache: HashMap::new(),
        })
    }

    fn prepare(&mut self, m: usize) -> Result<(), QuadratureError> {
        if self.cache.contains_key(&m) {
            return Ok(());
        }
        let (xs, ws) = composite_rule(-1.0, 1.0, m, &self.rule);
        let d = self.osc.dimension;
        let weighted: Vec<Vec<f64>> =
            self.basis.iter().map(|b| xs.iter().zip(&ws).map(|(&x, &w)| w * b(x)).collect()).collect();
        let prepared = match &self.parts {
            Some(parts) => {
                let mut phase = Vec::with_capacity(d);
                for (axis, g) in parts.iter().enumerate() {
                    let mut values = Vec::with_capacity(xs.len());
                    for &x in &xs {
                        let mut coords = [0.0; 3];
                        coords[axis] = x;
                        let v = g
                            .eval(&Bindings { x: coords, dimension: d, omega: None })
                            .map_err(|source| QuadratureError::Oscillator { x: vec![x], source })?;
                        values.push(v);
                    }
                    phase.push(values);
                }
                Prepared::Separable { weighted, phase }
            }
            None => {
                let needed = (xs.len() as u128).pow(d as u32);
                if needed > self.cfg.budget as u128 {
                    return Err(QuadratureError::Budget { needed, budget: self.cfg.budget });
                }
                let phase = if self.osc.kind == OscillatorKind::Phase {
                    let mut values = Vec::with_capacity(needed as usize);
                    for_each_point(&xs, d, |p| {
                        values.push(
                            self.osc
                                .phase_at(p)
                                .map_err(|source| QuadratureError::Oscillator { x: p.to_vec(), source })?,
                        );
                        Ok(())
                    })?;
                    Some(values)
                } else {
                    None
                };
                Prepared::Grid { weighted, nodes: xs, phase }
            }
        };
        self.cache.insert(m, prepared);
        Ok(())
    }

    fn integrate_at(&mut self, omega: f64, m: usize) -> Result<f64, QuadratureError> {
        self.prepare(m)?;
        let part = self.part;
        let prepared = &self.cache[&m];
        let value = match prepared {
            Prepared::Separable { weighted, phase } => {
                if weighted.len() == 1 {
                    let (wb, g) = (&weighted[0], &phase[0]);
                    match part {
                        Part::Real => wb.iter().zip(g).map(|(w, g)| w * (omega * g).cos()).sum(),
                        Part::Imag => wb.iter().zip(g).map(|(w, g)| w * (omega * g).sin()).sum(),
                    }
                } else {
                    let mut acc = Complex64::new(1.0, 0.0);
                    for (wb, g) in weighted.iter().zip(phase) {
                        let mut s = Complex64::new(0.0, 0.0);
                        for (w, g) in wb.iter().zip(g) {
                            let (sn, cs) = (omega * g).sin_cos();
                            s += Complex64::new(w * cs, w * sn);
                        }
                        acc *= s;
                    }
                    match part {
                        Part::Real => acc.re,
                        Part::Imag => acc.im,
                    }
                }
            }
            Prepared::Grid { weighted, nodes, phase } => {
                let d = weighted.len();
                let p = nodes.len();
                let mut sum = 0.0;
                let mut flat = 0usize;
                let mut err = None;
                let osc = &self.osc;
                for_each_index(p, d, |idx| {
                    if err.is_some() {
                        return;
                    }
                    let mut w = 1.0;
                    for (axis, &i) in idx.iter().enumerate() {
                        w *= weighted[axis][i];
                    }
                    let factor = match phase {
                        Some(g) => match part {
                            Part::Real => (omega * g[flat]).cos(),
                            Part::Imag => (omega * g[flat]).sin(),
                        },
                        None => {
                            let mut coords = [0.0; 3];
                            for (axis, &i) in idx.iter().enumerate() {
                                coords[axis] = nodes[i];
                            }
                            match osc.kernel_at(&coords[..d], omega) {
                                Ok(v) => v,
                                Err(source) => {
                                    err = Some(QuadratureError::Oscillator { x: coords[..d].to_vec(), source });
                                    0.0
                                }
                            }
                        }
                    };
                    sum += w * factor;
                    flat += 1;
                });
                if let Some(e) = err {
                    return Err(e);
                }
                sum
            }
        };
        if !value.is_finite() {
            return Err(QuadratureError::NonFinite { x: vec![omega], value });
        }
        Ok(value)
    }

    /// Self-validated value at `ω`.
    pub fn eval(&mut self, omega: f64) -> Result<EntryValue, QuadratureError> {
        let m = self.cfg.subintervals_for(omega, self.degree, self.slope);
        let coarse = self.integrate_at(omega, m)?;
        let fine_m = self.cfg.refined(m);
        let value = self.integrate_at(omega, fine_m)?;
        let disagreement = (value - coarse).abs();
        Ok(EntryValue {
            value,
            coarse,
            disagreement,
            flagged: disagreement > self.cfg.validation_tolerance,
            subintervals: m,
        })
    }

    /// Unvalidated value with an explicit subinterval count per axis.
    pub fn eval_with(&mut self, omega: f64, m: usize) -> Result<f64, QuadratureError> {
        if m == 0 {
            return Err(QuadratureError::NoSubintervals);
        }
        self.integrate_at(omega, m)
    }
}

/// Samples per axis for slope estimates.
const SLOPE_SAMPLES: usize = 2048;

/// Largest difference quotient of `g` on a fine uniform grid, with 10%
/// headroom.
fn axis_slope(g: impl Fn(f64) -> Result<f64, OscError>) -> Result<f64, QuadratureError> {
    let h = 2.0 / SLOPE_SAMPLES as f64;
    let eval = |x: f64| g(x).map_err(|source| QuadratureError::Oscillator { x: vec![x], source });
    let mut prev = eval(-1.0)?;
    let mut s = 0.0f64;
    for i in 1..=SLOPE_SAMPLES {
        let x = -1.0 + h * i as f64;
        let v = eval(x)?;
        s = s.max((v - prev).abs() / h);
        prev = v;
    }
    Ok(1.1 * s)
}

/// Slope bound of a non-separable phase: largest axis-wise difference
/// quotient over a coarse grid of lines.
fn grid_slope(osc: &OscillatorSpec) -> Result<f64, QuadratureError> {
    let d = osc.dimension;
    let lines: usize = 17;
    let mut s = 0.0f64;
    for axis in 0..d {
        let others = lines.pow(d as u32 - 1);
        for line in 0..others {
            let mut rest = line;
            let mut base = [0.0; 3];
            for (other, slot) in base.iter_mut().enumerate().take(d) {
                if other != axis {
                    *slot = -1.0 + 2.0 * (rest % lines) as f64 / (lines - 1) as f64;
                    rest /= lines;
                }
            }
            s = s.max(axis_slope(|x| {
                let mut p = base;
                p[axis] = x;
                osc.phase_at(&p[..d])
            })?);
        }
    }
    Ok(s)
}

fn for_each_index(p: usize, d: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; d];
    loop {
        f(&idx);
        let mut axis = d;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < p {
                break;
            }
            idx[axis] = 0;
        }
    }
}

fn for_each_point(
    xs: &[f64],
    d: usize,
    mut f: impl FnMut(&[f64]) -> Result<(), QuadratureError>,
) -> Result<(), QuadratureError> {
    let mut result = Ok(());
    let mut point = vec![0.0; d];
    for_each_index(xs.len(), d, |idx| {
        if result.is_err() {
            return;
        }
        for (axis, &i) in idx.iter().enumerate() {
            point[axis] = xs[i];
        }
        result = f(&point);
    });
    result
}

/// Self-validated `∫_{-1}^{1} B(x)·cos(ω g(x)) dx` (real part), with `sin`
/// (imaginary part), or `∫ B(x) h_ω(x) dx` for a kernel oscillator.
pub fn oscillatory_entry(
    basis_fn: impl Fn(f64) -> f64 + Send + Sync + 'static,
    degree: usize,
    osc: &OscillatorSpec,
    omega: f64,
    part: Part,
    cfg: &QuadratureConfig,
) -> Result<EntryValue, QuadratureError> {
    if !omega.is_finite() {
        return Err(QuadratureError::NonFinite { x: vec![], value: omega });
    }
    EntryIntegrand::new(osc, vec![Box::new(basis_fn)], degree, part, *cfg)?.eval(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolation::chebyshev_t;

    #[test]
    fn gauss_examples() {
        let r = gauss_legendre(1).unwrap();
        assert_eq!(r.nodes, vec![0.0]);
        assert!((r.weights[0] - 2.0).abs() < 1e-15);
        let r = gauss_legendre(2).unwrap();
        assert!((r.nodes[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.nodes[0], -r.nodes[1]);
        assert!((r.weights[0] - 1.0).abs() < 1e-15 && (r.weights[1] - 1.0).abs() < 1e-15);
        let v = composite_integrate(|x| x.powi(14), -1.0, 1.0, 1, 8).unwrap();
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
        assert!(gauss_legendre(0).is_err() && gauss_legendre(65).is_err());
    }

    #[test]
    fn composite_examples() {
        assert!((composite_integrate(|_| 1.0, 0.5, 3.0, 7, 3).unwrap() - 2.5).abs() < 1e-15);
        let v = composite_integrate(|x| (100.0 * x).cos(), -1.0, 1.0, 100, 8).unwrap();
        assert!((v - 2.0 * 100f64.sin() / 100.0).abs() < 1e-12);
        assert!((composite_integrate(|x| x, 0.0, 1.0, 1, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(composite_integrate(|x| 1.0 / x, -1.0, 1.0, 1, 1), Err(QuadratureError::NonFinite { .. })));
        assert!(composite_integrate(|x| x, 1.0, 0.0, 1, 2).is_err());
    }

    #[test]
    fn composite_nodes_are_antisymmetric() {
        let rule = gauss_legendre(8).unwrap();
        for m in [1, 2, 7, 100, 117] {
            let (xs, _) = composite_rule(-1.0, 1.0, m, &rule);
            let p = xs.len();
            for i in 0..p {
                assert_eq!(xs[i], -xs[p - 1 - i]);
            }
        }
    }

    #[test]
    fn entry_examples() {
        let cfg = QuadratureConfig::default();
        let g = OscillatorSpec::phase("x").unwrap();
        let v = oscillatory_entry(|_| 1.0, 0, &g, 0.0, Part::Real, &cfg).unwrap();
        assert!((v.value - 2.0).abs() < 1e-14);
        for w in [0.0, 3.3, 77.0, 1000.0] {
            let v = oscillatory_entry(|_| 1.0, 0, &g, w, Part::Imag, &cfg).unwrap();
            assert!(v.value.abs() < 1e-12);
        }
        let g = OscillatorSpec::phase("x^2").unwrap();
        let v = oscillatory_entry(|_| 1.0, 0, &g, 10.0, Part::Real, &cfg).unwrap();
        assert!(!v.flagged && v.disagreement < 1e-12);
        let reference = composite_integrate(|x| (10.0 * x * x).cos(), -1.0, 1.0, 400, 16).unwrap();
        assert!((v.value - reference).abs() < 1e-13);
    }

    #[test]
    fn tensorized_examples() {
        let budget = 1 << 24;
        assert!((tensorized_integrate(|_| 1.0, 2, 3, 4, budget).unwrap() - 4.0).abs() < 1e-14);
        let v = tensorized_integrate(|y| (5.0 * (y[0] + y[1])).cos(), 2, 10, 8, budget).unwrap();
        let s = 2.0 * 5f64.sin() / 5.0;
        assert!((v - s * s).abs() < 1e-13);
        assert!((v - 0.147_126).abs() < 1e-6);
        assert!(tensorized_integrate(|y| y[0] * y[1], 2, 4, 4, budget).unwrap().abs() < 1e-15);
        assert!(matches!(tensorized_integrate(|_| 1.0, 3, 100, 8, budget), Err(QuadratureError::Budget { .. })));
    }

    #[test]
    fn separable_and_grid_paths_agree() {
        let cfg = QuadratureConfig::default();
        let sep = OscillatorSpec::phase("x1 + 0.5*x2^2").unwrap();
        let mut fast = EntryIntegrand::new(
            &sep,
            vec![Box::new(|x| chebyshev_t(2, x)), Box::new(|x| chebyshev_t(3, x))],
            3,
            Part::Imag,
            cfg,
        )
        .unwrap();
        let reference = tensorized_integrate(
            |y| chebyshev_t(2, y[0]) * chebyshev_t(3, y[1]) * (7.0 * (y[0] + 0.5 * y[1] * y[1])).sin(),
            2,
            20,
            8,
            1 << 24,
        )
        .unwrap();
        assert!((fast.eval(7.0).unwrap().value - reference).abs() < 1e-13);

        let kernel = OscillatorSpec::new(OscillatorKind::Kernel, "cos(w*(x1 + 0.5*x2^2))", Some(2)).unwrap();
        let mut slow = EntryIntegrand::new(
            &kernel,
            vec![Box::new(|x| chebyshev_t(2, x)), Box::new(|x| chebyshev_t(3, x))],
            3,
            Part::Real,
            cfg,
        )
        .unwrap();
        let mut fast = EntryIntegrand::new(
            &sep,
            vec![Box::new(|x| chebyshev_t(2, x)), Box::new(|x| chebyshev_t(3, x))],
            3,
            Part::Real,
            cfg,
        )
        .unwrap();
        assert!((fast.eval(7.0).unwrap().value - slow.eval(7.0).unwrap().value).abs() < 1e-13);
    }

    #[test]
    fn subinterval_rules() {
        let cfg = QuadratureConfig::default();
        assert_eq!(cfg.subintervals_for(0.0, 0, 1.0), 1);
        assert_eq!(cfg.subintervals_for(12.2, 0, 1.0), 13);
        assert!(cfg.subintervals_for(1000.0, 0, 1.0) >= 1000);
        assert_eq!(cfg.subintervals_for(5.0, 3, 2.0), 13);
        assert_eq!(cfg.subintervals_for(0.0, 20, 2.0), 21);
        let p = QuadratureConfig::proportional();
        assert_eq!(p.subintervals_for(12.2, 20, 2.0), 13);
        assert_eq!(p.subintervals_for(0.0, 20, 2.0), 1);
        assert_eq!(QuadratureConfig::fixed(100.0).subintervals_for(3.0, 2, 1.0), 100);
        let mut last = 0;
        for m in 1..5000 {
            let v = ladder_ceil(m);
            assert!(v >= m && v >= last);
            assert!(v as f64 <= (m as f64 * 1.125).ceil() + 1.0);
            last = v;
        }
    }
}
