//! TT-cross approximation of black-box functional vectors.
//!
//! Alternating left/right sweeps of one-site cross interpolation: every core
//! is recovered from a fiber `A(I_{ν−1}, j_ν, J_ν)` of the target, reduced by
//! a truncated SVD and re-anchored on a maximal-volume row set. Each sweep
//! appends `rank_increment` random columns to every fiber so the ranks can
//! grow until the fibers stop revealing new directions. Accuracy is tracked
//! on a held-out set of random entries.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{thin_svd, Svd};
use crate::tensor_train::{fold_index, num_entries, DigitIndex, TtCore, TtError, TtVector};

/// Swap threshold of [`maxvol`] is `1 + MAXVOL_DELTA`.
pub const MAXVOL_DELTA: f64 = 0.01;
pub const MAXVOL_MAX_SWAPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrossError {
    #[error("invalid cross configuration: {0}")]
    InvalidConfig(String),
    #[error("matrix is rank deficient: numerical rank {rank} < {requested}")]
    RankDeficient { rank: usize, requested: usize },
    #[error("maxvol needs at least as many rows as columns ({rows} < {cols})")]
    TooFewRows { rows: usize, cols: usize },
    #[error("oracle returned non-finite value {value} at index {index:?}")]
    NonFinite { index: Vec<usize>, value: f64 },
    #[error("oracle failed at index {index:?}: {message}")]
    Oracle { index: Vec<usize>, message: String },
    #[error(transparent)]
    Tensor(#[from] TtError),
}

type EvalFn<'a> = dyn FnMut(&DigitIndex) -> Result<f64, String> + 'a;

/// Entry access to a tensor of shape `q^L`, counting every evaluation.
pub struct EntryOracle<'a> {
    length: usize,
    mode: usize,
    eval: Box<EvalFn<'a>>,
    calls: u64,
}

impl<'a> EntryOracle<'a> {
    pub fn new(length: usize, mode: usize, eval: impl FnMut(&DigitIndex) -> Result<f64, String> + 'a) -> Self {
        Self { length, mode, eval: Box::new(eval), calls: 0 }
    }

    /// Oracle over an infallible entry function.
    pub fn from_fn(length: usize, mode: usize, f: impl Fn(&DigitIndex) -> f64 + 'a) -> Self {
        Self::new(length, mode, move |d| Ok(f(d)))
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn mode_size(&self) -> usize {
        self.mode
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn call(&mut self, index: &DigitIndex) -> Result<f64, CrossError> {
        self.calls += 1;
        let value =
            (self.eval)(index).map_err(|message| CrossError::Oracle { index: index.digits().to_vec(), message })?;
        if !value.is_finite() {
            return Err(CrossError::NonFinite { index: index.digits().to_vec(), value });
        }
        Ok(value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossConfig {
    /// Target relative max-norm error on the validation set.
    pub tolerance: f64,
    pub max_rank: usize,
    /// Full (left + right) sweeps.
    pub max_sweeps: usize,
    pub validation_samples: usize,
    /// Lower bound on the scale the validation error is relative to, so
    /// that identically zero tensors (sampled as round-off) can converge.
    pub value_floor: f64,
    pub rank_increment: usize,
    pub seed: u64,
}

impl Default for CrossConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-11,
            max_rank: 48,
            max_sweeps: 12,
            validation_samples: 200,
            value_floor: 0.0,
            rank_increment: 2,
            seed: 0x5eed,
        }
    }
}

impl CrossConfig {
    pub fn validate(&self) -> Result<(), CrossError> {
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(CrossError::InvalidConfig(format!("tolerance {}", self.tolerance)));
        }
        if self.max_rank == 0 {
            return Err(CrossError::InvalidConfig("max_rank must be ≥ 1".into()));
        }
        if self.validation_samples == 0 {
            return Err(CrossError::InvalidConfig("validation_samples must be ≥ 1".into()));
        }
        if self.max_sweeps == 0 {
            return Err(CrossError::InvalidConfig("max_sweeps must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Relative singular-value cutoff applied to each fiber.
    fn fiber_cutoff(&self, length: usize) -> f64 {
        self.tolerance / (10.0 * (length as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossReport {
    pub final_ranks: Vec<usize>,
    pub effective_rank: f64,
    /// Distinct oracle evaluations, validation included.
    pub oracle_calls: u64,
    pub validation_error: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Best-so-far validation error after every half sweep.
    pub history: Vec<f64>,
    /// `oracle_calls / (sweeps · L · q · max_rank²)`.
    pub call_constant: f64,
}

#[derive(Debug, Clone)]
pub struct CrossResult {
    pub tensor: TtVector,
    pub report: CrossReport,
}

impl CrossResult {
    pub fn converged(&self) -> bool {
        self.report.converged
    }
}

pub fn cross_report(result: &CrossResult) -> CrossReport {
    result.report.clone()
}

/// Row indices of a (locally) maximal-volume `r × r` submatrix of the
/// `n × r` matrix `a`.
///
/// The columns are first orthonormalized by a column-pivoted QR, which also
/// detects rank deficiency. Rows are seeded by partial-pivot elimination and
/// improved by single-row swaps while some coefficient of `A · A[rows]⁻¹`
/// exceeds `1 + MAXVOL_DELTA`.
pub fn maxvol(a: &DMatrix<f64>) -> Result<Vec<usize>, CrossError> {
    let (n, r) = a.shape();
    if r == 0 {
        return Ok(Vec::new());
    }
    if n < r {
        return Err(CrossError::TooFewRows { rows: n, cols: r });
    }
    let qr = a.clone().col_piv_qr();
    let rdiag = qr.r().diagonal();
    let top = rdiag[0].abs();
    let rank = rdiag.iter().take_while(|d| d.abs() > 1e-13 * top && top > 0.0).count();
    if rank < r {
        return Err(CrossError::RankDeficient { rank, requested: r });
    }
    let q = qr.q();

    // Seed rows by Gaussian elimination with partial pivoting.
    let mut work = q.clone();
    let mut rows = Vec::with_capacity(r);
    let mut used = vec![false; n];
    for col in 0..r {
        let (mut best, mut best_abs) = (usize::MAX, -1.0);
        for i in 0..n {
            if !used[i] && work[(i, col)].abs() > best_abs {
                best = i;
                best_abs = work[(i, col)].abs();
            }
        }
        if best_abs <= 1e-14 {
            return Err(CrossError::RankDeficient { rank: col, requested: r });
        }
        used[best] = true;
        rows.push(best);
        let pivot_row = work.row(best).into_owned();
        for i in 0..n {
            if !used[i] {
                let factor = work[(i, col)] / pivot_row[col];
                for c in col..r {
                    work[(i, c)] -= factor * pivot_row[c];
                }
            }
        }
    }

    let sub = DMatrix::from_fn(r, r, |i, j| q[(rows[i], j)]);
    let inv = sub.try_inverse().ok_or(CrossError::RankDeficient { rank: r - 1, requested: r })?;
    let mut b = &q * inv;
    for _ in 0..MAXVOL_MAX_SWAPS {
        let (mut bi, mut bj, mut big) = (0, 0, 0.0);
        for j in 0..r {
            for i in 0..n {
                let v = b[(i, j)].abs();
                if v > big {
                    big = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if big <= 1.0 + MAXVOL_DELTA {
            break;
        }
        rows[bj] = bi;
        let col = b.column(bj).into_owned();
        let mut row = b.row(bi).into_owned();
        row[bj] -= 1.0;
        let pivot = b[(bi, bj)];
        b -= (col * row) / pivot;
    }
    Ok(rows)
}

/// Memoized entry access keyed by flat index.
struct Sampler<'o, 'a> {
    oracle: &'o mut EntryOracle<'a>,
    cache: HashMap<u64, f64>,
}

impl Sampler<'_, '_> {
    fn get(&mut self, flat: u64) -> Result<f64, CrossError> {
        if let Some(&v) = self.cache.get(&flat) {
            return Ok(v);
        }
        let index = fold_index(flat, self.oracle.length, self.oracle.mode)?;
        let v = self.oracle.call(&index)?;
        self.cache.insert(flat, v);
        Ok(v)
    }
}

/// `count` values from `0..bound` not present in `taken`.
fn sample_fresh(rng: &mut ChaCha8Rng, bound: u64, taken: &[u64], count: usize) -> Vec<u64> {
    let free = bound.saturating_sub(taken.len() as u64);
    let count = count.min(free as usize);
    if count == 0 {
        return Vec::new();
    }
    let mut seen: HashSet<u64> = taken.iter().copied().collect();
    let mut out = Vec::with_capacity(count);
    if free <= 4 * count as u64 {
        let mut pool: Vec<u64> = (0..bound).filter(|v| !seen.contains(v)).collect();
        for k in 0..count {
            let pick = rng.gen_range(k..pool.len());
            pool.swap(k, pick);
            out.push(pool[k]);
        }
        return out;
    }
    while out.len() < count {
        let v = rng.gen_range(0..bound);
        if seen.insert(v) {
            out.push(v);
        }
    }
    out
}

/// Truncated left singular basis of a fiber: `U_k` with
/// `σ_i > cutoff·max(σ_1, floor)`, `k ≤ cap`. An all-zero fiber yields its
/// first column of `U`.
fn fiber_basis(fiber: DMatrix<f64>, cutoff: f64, floor: f64, cap: usize) -> DMatrix<f64> {
    let Svd { u, s, .. } = thin_svd(&fiber);
    let top = s[0];
    let k = if top > 0.0 { s.iter().take_while(|&&v| v > cutoff * top.max(floor)).count() } else { 1 };
    u.columns(0, k.clamp(1, cap)).into_owned()
}

/// Interpolation core `U · U[rows]⁻¹` and the selected rows.
fn interpolate(basis: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<usize>), CrossError> {
    let mut basis = basis.clone();
    loop {
        match maxvol(&basis) {
            Ok(rows) => {
                let r = basis.ncols();
                let sub = DMatrix::from_fn(r, r, |i, j| basis[(rows[i], j)]);
                let inv = sub.try_inverse().ok_or(CrossError::RankDeficient { rank: r - 1, requested: r })?;
                return Ok((&basis * inv, rows));
            }
            Err(CrossError::RankDeficient { rank, .. }) if rank >= 1 => {
                basis = basis.columns(0, rank).into_owned();
            }
            Err(e) => return Err(e),
        }
    }
}

struct CrossState {
    length: usize,
    mode: usize,
    /// `left[ν]`: flat values of digits `0..ν`.
    left: Vec<Vec<u64>>,
    /// `right[ν]`: flat values of digits `ν..L`, shifted down by `q^ν`.
    right: Vec<Vec<u64>>,
    cores: Vec<Option<TtCore>>,
    powers: Vec<u64>,
}

impl CrossState {
    fn tensor(&self) -> Result<TtVector, CrossError> {
        let cores = self.cores.iter().map(|c| c.clone().expect("assembled")).collect();
        Ok(TtVector::new(self.mode, cores)?)
    }

    fn sweep_right(
        &mut self,
        sampler: &mut Sampler,
        rng: &mut ChaCha8Rng,
        cfg: &CrossConfig,
        cutoff: f64,
    ) -> Result<(), CrossError> {
        let (l, q) = (self.length, self.mode);
        for c in 0..l - 1 {
            let rl = self.left[c].len();
            let bound = self.powers[l - c - 1];
            let mut cols = self.right[c + 1].clone();
            cols.extend(sample_fresh(rng, bound, &cols, cfg.rank_increment));
            let rows = rl * q;
            let mut fiber = DMatrix::zeros(rows, cols.len());
            for (b, &rv) in cols.iter().enumerate() {
                for j in 0..q {
                    for (a, &lv) in self.left[c].iter().enumerate() {
                        let flat = lv + j as u64 * self.powers[c] + rv * self.powers[c + 1];
                        fiber[(a + rl * j, b)] = sampler.get(flat)?;
                    }
                }
            }
            let basis = fiber_basis(fiber, cutoff, cfg.value_floor, cfg.max_rank);
            let (core, piv) = interpolate(&basis)?;
            self.left[c + 1] = piv.iter().map(|&p| self.left[c][p % rl] + (p / rl) as u64 * self.powers[c]).collect();
            self.cores[c] = Some(TtCore::new(rl, q, core.ncols(), core.as_slice().to_vec())?);
        }
        let c = l - 1;
        let rl = self.left[c].len();
        let mut data = vec![0.0; rl * q];
        for j in 0..q {
            for (a, &lv) in self.left[c].iter().enumerate() {
                data[a + rl * j] = sampler.get(lv + j as u64 * self.powers[c])?;
            }
        }
        self.cores[c] = Some(TtCore::new(rl, q, 1, data)?);
        Ok(())
    }

    fn sweep_left(
        &mut self,
        sampler: &mut Sampler,
        rng: &mut ChaCha8Rng,
        cfg: &CrossConfig,
        cutoff: f64,
    ) -> Result<(), CrossError> {
        let (l, q) = (self.length, self.mode);
        for c in (1..l).rev() {
            let rr = self.right[c + 1].len();
            let bound = self.powers[c];
            let mut cols = self.left[c].clone();
            cols.extend(sample_fresh(rng, bound, &cols, cfg.rank_increment));
            let rows = q * rr;
            let mut fiber = DMatrix::zeros(rows, cols.len());
            for (a, &lv) in cols.iter().enumerate() {
                for (beta, &rv) in self.right[c + 1].iter().enumerate() {
                    for j in 0..q {
                        let flat = lv + self.powers[c] * (j as u64 + q as u64 * rv);
                        fiber[(j + q * beta, a)] = sampler.get(flat)?;
                    }
                }
            }
            let basis = fiber_basis(fiber, cutoff, cfg.value_floor, cfg.max_rank);
            let (core, piv) = interpolate(&basis)?;
            self.right[c] = piv.iter().map(|&p| (p % q) as u64 + q as u64 * self.right[c + 1][p / q]).collect();
            let k = core.ncols();
            let t = core.transpose();
            self.cores[c] = Some(TtCore::new(k, q, rr, t.as_slice().to_vec())?);
        }
        let rr = self.right[1].len();
        let mut data = vec![0.0; q * rr];
        for (beta, &rv) in self.right[1].iter().enumerate() {
            for j in 0..q {
                data[j + q * beta] = sampler.get(j as u64 + q as u64 * rv)?;
            }
        }
        self.cores[0] = Some(TtCore::new(1, q, rr, data)?);
        Ok(())
    }
}

/// Relative max-norm deviation on the validation entries; absolute when all
/// reference values vanish.
fn validation_error(t: &TtVector, indices: &[u64], values: &[f64], floor: f64) -> Result<f64, CrossError> {
    let scale = values.iter().fold(floor, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for (&i, &v) in indices.iter().zip(values) {
        worst = worst.max((t.evaluate_flat(i)? - v).abs());
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// Builds a QTT approximation of the oracle's tensor from adaptively chosen
/// entries. A run that misses the tolerance still returns its best tensor,
/// with `report.converged == false`.
pub fn tt_cross(oracle: &mut EntryOracle, cfg: &CrossConfig) -> Result<CrossResult, CrossError> {
    cfg.validate()?;
    let (l, q) = (oracle.length, oracle.mode);
    if l == 0 || q < 2 {
        return Err(CrossError::InvalidConfig(format!("tensor shape {q}^{l}")));
    }
    let total = num_entries(q, l).ok_or_else(|| CrossError::InvalidConfig(format!("{q}^{l} overflows u64")))?;
    let powers: Vec<u64> = (0..=l).map(|k| num_entries(q, k).expect("≤ total")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let cutoff = cfg.fiber_cutoff(l);
    let start_calls = oracle.calls();
    let mut sampler = Sampler { oracle, cache: HashMap::new() };

    let validation: Vec<u64> = (0..cfg.validation_samples).map(|_| rng.gen_range(0..total)).collect();
    let values = validation.iter().map(|&i| sampler.get(i)).collect::<Result<Vec<_>, _>>()?;

    let mut state = CrossState {
        length: l,
        mode: q,
        left: vec![Vec::new(); l + 1],
        right: vec![Vec::new(); l + 1],
        cores: vec![None; l],
        powers,
    };
    state.left[0] = vec![0];
    state.right[l] = vec![0];
    let initial_rank = 2.min(cfg.max_rank);
    for nu in 1..l {
        let bound = state.powers[l - nu];
        state.right[nu] = sample_fresh(&mut rng, bound, &[], initial_rank);
    }

    let mut best: Option<(TtVector, f64)> = None;
    let mut history = Vec::new();
    let mut half_sweeps = 0usize;
    let mut converged = false;
    for _ in 0..cfg.max_sweeps {
        for direction in [true, false] {
            if direction {
                state.sweep_right(&mut sampler, &mut rng, cfg, cutoff)?;
            } else {
                state.sweep_left(&mut sampler, &mut rng, cfg, cutoff)?;
            }
            half_sweeps += 1;
            let t = state.tensor()?;
            let err = validation_error(&t, &validation, &values, cfg.value_floor)?;
            if best.as_ref().is_none_or(|(_, e)| err < *e) {
                best = Some((t, err));
            }
            history.push(best.as_ref().expect("set").1);
            if err <= cfg.tolerance {
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
    }

    let (mut tensor, mut error) = best.expect("at least one half sweep");
    if converged {
        let rounded = tensor.round(cfg.tolerance * 0.1);
        let rounded_error = validation_error(&rounded, &validation, &values, cfg.value_floor)?;
        if rounded_error <= cfg.tolerance && rounded.parameter_count() < tensor.parameter_count() {
            tensor = rounded;
            error = rounded_error;
        }
    }

    let oracle_calls = sampler.oracle.calls() - start_calls;
    let sweeps = half_sweeps.div_ceil(2);
    let budget = (sweeps * l * q * cfg.max_rank * cfg.max_rank) as f64;
    let report = CrossReport {
        final_ranks: tensor.ranks(),
        effective_rank: tensor.effective_rank(),
        oracle_calls,
        validation_error: error,
        sweeps,
        converged,
        history,
        call_constant: oracle_calls as f64 / budget,
    };
    Ok(CrossResult { tensor, report })
}
