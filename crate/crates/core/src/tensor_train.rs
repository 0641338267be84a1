//! Tensor-train vectors over quantized (q-adic) index spaces.
//!
//! A vector of length `q^L` is folded into an `L`-way `q × … × q` array and
//! stored as a chain of 3-way cores `G_ν` of shape `r_{ν-1} × q × r_ν` with
//! `r_0 = r_L = 1`. An entry is the product of the selected matrix slices
//! `G_1[j_1] G_2[j_2] ⋯ G_L[j_L]`.
//!
//! Digits are least-significant first: flat index `i = Σ (j_ν − 1) q^{ν−1}`.

use crate::linalg::{thin_svd, Svd};
use nalgebra::DMatrix;
use thiserror::Error;

/// Largest vector that [`TtVector::to_full`] will materialize.
pub const MATERIALIZATION_CAP: u64 = 1 << 26;

/// Default relative tolerance of [`tt_from_full`].
pub const FULL_SVD_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TtError {
    #[error("index {index} out of range for {mode}^{length} entries")]
    IndexOutOfRange { index: u64, mode: usize, length: usize },
    #[error("digit {digit} at position {position} is outside 1..={mode}")]
    DigitOutOfRange { digit: usize, position: usize, mode: usize },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector length {0} is not a power of the mode size")]
    NotAPower(usize),
    #[error("vector of {0} entries exceeds the materialization cap")]
    TooLarge(u128),
    #[error("invalid tensor train: {0}")]
    Invalid(String),
}

/// Multi-index in a quantized tensor space. Digits are 1-based, least
/// significant first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DigitIndex {
    digits: Vec<usize>,
}

impl DigitIndex {
    pub fn new(digits: Vec<usize>, mode: usize) -> Result<Self, TtError> {
        for (position, &digit) in digits.iter().enumerate() {
            if digit == 0 || digit > mode {
                return Err(TtError::DigitOutOfRange { digit, position, mode });
            }
        }
        Ok(Self { digits })
    }

    pub fn digits(&self) -> &[usize] {
        &self.digits
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }
}

/// `q^L` as `u64`, or `None` on overflow.
pub fn num_entries(mode: usize, length: usize) -> Option<u64> {
    (mode as u64).checked_pow(u32::try_from(length).ok()?)
}

pub fn fold_index(index: u64, length: usize, mode: usize) -> Result<DigitIndex, TtError> {
    let out_of_range = TtError::IndexOutOfRange { index, mode, length };
    if mode < 2 {
        return Err(TtError::Invalid(format!("mode size {mode} < 2")));
    }
    if let Some(total) = num_entries(mode, length) {
        if index >= total {
            return Err(out_of_range);
        }
    }
    let q = mode as u64;
    let mut rest = index;
    let mut digits = Vec::with_capacity(length);
    for _ in 0..length {
        digits.push((rest % q) as usize + 1);
        rest /= q;
    }
    if rest != 0 {
        return Err(out_of_range);
    }
    Ok(DigitIndex { digits })
}

pub fn unfold_index(index: &DigitIndex, mode: usize) -> Result<u64, TtError> {
    let q = mode as u64;
    let mut flat: u64 = 0;
    for (position, &digit) in index.digits.iter().enumerate().rev() {
        if digit == 0 || digit > mode {
            return Err(TtError::DigitOutOfRange { digit, position, mode });
        }
        flat = flat
            .checked_mul(q)
            .and_then(|v| v.checked_add(digit as u64 - 1))
            .ok_or(TtError::Invalid("index overflows u64".into()))?;
    }
    Ok(flat)
}

/// One 3-way core, stored column-major as `(left, mode, right)`: element
/// `(a, j, b)` lives at `a + left * (j + mode * b)`. Read as a matrix, the
/// buffer is both the `(left·mode) × right` and the `left × (mode·right)`
/// unfolding.
#[derive(Debug, Clone, PartialEq)]
pub struct TtCore {
    left: usize,
    mode: usize,
    right: usize,
    data: Vec<f64>,
}

impl TtCore {
    pub fn new(left: usize, mode: usize, right: usize, data: Vec<f64>) -> Result<Self, TtError> {
        if data.len() != left * mode * right {
            return Err(TtError::DimensionMismatch { expected: left * mode * right, found: data.len() });
        }
        Ok(Self { left, mode, right, data })
    }

    pub fn left_rank(&self) -> usize {
        self.left
    }

    pub fn mode_size(&self) -> usize {
        self.mode
    }

    pub fn right_rank(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, a: usize, j: usize, b: usize) -> f64 {
        self.data[a + self.left * (j + self.mode * b)]
    }

    fn as_left_unfolding(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.left * self.mode, self.right, &self.data)
    }

    fn as_right_unfolding(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.left, self.mode * self.right, &self.data)
    }

    fn from_left_unfolding(m: &DMatrix<f64>, left: usize, mode: usize) -> Self {
        Self { left, mode, right: m.ncols(), data: m.as_slice().to_vec() }
    }

    fn from_right_unfolding(m: &DMatrix<f64>, mode: usize, right: usize) -> Self {
        Self { left: m.nrows(), mode, right, data: m.as_slice().to_vec() }
    }
}

/// Tensor-train representation of a functional vector of length `q^L`.
///
/// Immutable after construction; all constructors check the rank chain and
/// finiteness of every entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TtVector {
    mode: usize,
    cores: Vec<TtCore>,
}

impl TtVector {
    pub fn new(mode: usize, cores: Vec<TtCore>) -> Result<Self, TtError> {
        if mode < 2 {
            return Err(TtError::Invalid(format!("mode size {mode} < 2")));
        }
        if cores.is_empty() {
            return Err(TtError::Invalid("no cores".into()));
        }
        if num_entries(mode, cores.len()).is_none() {
            return Err(TtError::Invalid(format!("{mode}^{} entries overflow a 64-bit index", cores.len())));
        }
        let mut prev = 1;
        for (nu, core) in cores.iter().enumerate() {
            if core.mode != mode {
                return Err(TtError::Invalid(format!("core {nu} has mode {}", core.mode)));
            }
            if core.left != prev {
                return Err(TtError::Invalid(format!("core {nu} left rank {} does not match {prev}", core.left)));
            }
            if core.data.iter().any(|v| !v.is_finite()) {
                return Err(TtError::Invalid(format!("core {nu} has non-finite entries")));
            }
            prev = core.right;
        }
        if prev != 1 {
            return Err(TtError::Invalid(format!("last right rank is {prev}, expected 1")));
        }
        Ok(Self { mode, cores })
    }

    /// Rank-1 tensor with every entry equal to `value`.
    pub fn constant(value: f64, length: usize, mode: usize) -> Result<Self, TtError> {
        let mut cores = Vec::with_capacity(length);
        for nu in 0..length {
            let v = if nu == 0 { value } else { 1.0 };
            cores.push(TtCore::new(1, mode, 1, vec![v; mode])?);
        }
        Self::new(mode, cores)
    }

    pub fn mode_size(&self) -> usize {
        self.mode
    }

    /// Number of cores `L`.
    pub fn len(&self) -> usize {
        self.cores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    pub fn num_entries(&self) -> u64 {
        num_entries(self.mode, self.cores.len()).expect("checked at construction")
    }

    pub fn cores(&self) -> &[TtCore] {
        &self.cores
    }

    /// `(r_0, …, r_L)`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = Vec::with_capacity(self.cores.len() + 1);
        r.push(1);
        r.extend(self.cores.iter().map(|c| c.right));
        r
    }

    pub fn max_rank(&self) -> usize {
        self.cores.iter().map(|c| c.right.max(c.left)).max().unwrap_or(1)
    }

    /// Number of stored reals, `Σ r_{ν−1} q r_ν`.
    pub fn parameter_count(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    /// Positive root `r` of `q(L−2)r² + 2qr = S`, `S` the parameter count;
    /// reproduces `r` for uniform internal rank.
    pub fn effective_rank(&self) -> f64 {
        let l = self.cores.len() as f64;
        let q = self.mode as f64;
        let s = self.parameter_count() as f64;
        match self.cores.len() {
            1 => 1.0,
            2 => s / (2.0 * q),
            _ => {
                let a = q * (l - 2.0);
                let b = 2.0 * q;
                (-b + (b * b + 4.0 * a * s).sqrt()) / (2.0 * a)
            }
        }
    }

    pub fn evaluate(&self, index: &DigitIndex) -> Result<f64, TtError> {
        if index.len() != self.cores.len() {
            return Err(TtError::DimensionMismatch { expected: self.cores.len(), found: index.len() });
        }
        for (position, &digit) in index.digits.iter().enumerate() {
            if digit == 0 || digit > self.mode {
                return Err(TtError::DigitOutOfRange { digit, position, mode: self.mode });
            }
        }
        Ok(self.contract(index.digits.iter().map(|&d| d - 1)))
    }

    /// Entry at a flat index, without building a [`DigitIndex`].
    pub fn evaluate_flat(&self, index: u64) -> Result<f64, TtError> {
        let total = self.num_entries();
        if index >= total {
            return Err(TtError::IndexOutOfRange { index, mode: self.mode, length: self.cores.len() });
        }
        let q = self.mode as u64;
        let mut rest = index;
        Ok(self.contract((0..self.cores.len()).map(|_| {
            let d = (rest % q) as usize;
            rest /= q;
            d
        })))
    }

    fn contract(&self, digits: impl Iterator<Item = usize>) -> f64 {
        let max = self.max_rank();
        let mut cur = vec![0.0; max];
        let mut next = vec![0.0; max];
        cur[0] = 1.0;
        let mut width = 1;
        for (core, j) in self.cores.iter().zip(digits) {
            let base = core.left * j;
            let stride = core.left * core.mode;
            for (b, out) in next.iter_mut().enumerate().take(core.right) {
                let slice = &core.data[base + stride * b..base + stride * b + core.left];
                *out = cur[..width].iter().zip(slice).map(|(x, y)| x * y).sum();
            }
            width = core.right;
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Materializes the full vector (test oracle; capped at
    /// [`MATERIALIZATION_CAP`] entries).
    pub fn to_full(&self) -> Result<Vec<f64>, TtError> {
        let total = self.num_entries();
        if total > MATERIALIZATION_CAP {
            return Err(TtError::TooLarge(total as u128));
        }
        // Left-to-right contraction keeps the column-major layout:
        // acc is (prefix entries) × r.
        let mut acc = vec![1.0];
        let mut prefix = 1usize;
        let mut width = 1usize;
        for core in &self.cores {
            let q = core.mode;
            let mut next = vec![0.0; prefix * q * core.right];
            for b in 0..core.right {
                for j in 0..q {
                    for a in 0..width {
                        let g = core.get(a, j, b);
                        if g == 0.0 {
                            continue;
                        }
                        let src = &acc[a * prefix..(a + 1) * prefix];
                        let dst = &mut next[b * prefix * q + j * prefix..b * prefix * q + (j + 1) * prefix];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += g * s;
                        }
                    }
                }
            }
            acc = next;
            prefix *= q;
            width = core.right;
        }
        Ok(acc)
    }

    /// SVD-based truncation to relative Euclidean accuracy `eps`, split as
    /// `eps/√(L−1)` per bond.
    pub fn round(&self, eps: f64) -> TtVector {
        let l = self.cores.len();
        if l == 1 {
            return self.clone();
        }
        let q = self.mode;
        let mut cores = self.cores.clone();

        for nu in (1..l).rev() {
            let g = cores[nu].as_right_unfolding();
            let right = cores[nu].right;
            let qr = g.transpose().qr();
            let (qm, rm) = (qr.q(), qr.r());
            cores[nu] = TtCore::from_right_unfolding(&qm.transpose(), q, right);
            let prev = cores[nu - 1].as_left_unfolding() * rm.transpose();
            let left = cores[nu - 1].left;
            cores[nu - 1] = TtCore::from_left_unfolding(&prev, left, q);
        }

        let norm = cores[0].data.iter().map(|v| v * v).sum::<f64>().sqrt();
        let delta = eps.max(0.0) / ((l - 1) as f64).sqrt() * norm;

        for nu in 0..l - 1 {
            let left = cores[nu].left;
            let Svd { u, s, vt } = thin_svd(&cores[nu].as_left_unfolding());
            let k = truncation_rank(&s, delta);
            let uk = u.columns(0, k).into_owned();
            let mut svt = vt.rows(0, k).into_owned();
            for (i, mut row) in svt.row_iter_mut().enumerate() {
                row *= s[i];
            }
            cores[nu] = TtCore::from_left_unfolding(&uk, left, q);
            let next_right = cores[nu + 1].right;
            let next = svt * cores[nu + 1].as_right_unfolding();
            cores[nu + 1] = TtCore::from_right_unfolding(&next, q, next_right);
        }
        TtVector { mode: q, cores }
    }
}

/// Smallest `k ≥ 1` whose discarded tail satisfies `√(Σ_{i≥k} σ_i²) ≤ delta`.
pub(crate) fn truncation_rank(sigma: &[f64], delta: f64) -> usize {
    let mut tail = 0.0;
    let mut k = sigma.len();
    while k > 1 {
        let s = sigma[k - 1];
        if tail + s * s > delta * delta || (delta == 0.0 && s > 0.0) {
            break;
        }
        tail += s * s;
        k -= 1;
    }
    k.max(1)
}

/// TT-SVD of a full vector of length `q^L` at the default tolerance.
pub fn tt_from_full(v: &[f64], mode: usize) -> Result<TtVector, TtError> {
    tt_from_full_with_tolerance(v, mode, FULL_SVD_TOLERANCE)
}

pub fn tt_from_full_with_tolerance(v: &[f64], mode: usize, eps: f64) -> Result<TtVector, TtError> {
    if mode < 2 {
        return Err(TtError::Invalid(format!("mode size {mode} < 2")));
    }
    let mut length = 0;
    let mut n = v.len();
    while n > 1 && n.is_multiple_of(mode) {
        n /= mode;
        length += 1;
    }
    if n != 1 || length == 0 {
        return Err(TtError::NotAPower(v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(TtError::Invalid("non-finite input".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let delta = if length > 1 { eps / ((length - 1) as f64).sqrt() * norm } else { 0.0 };

    let mut cores = Vec::with_capacity(length);
    let mut rest = v.to_vec();
    let mut rank = 1;
    for _ in 0..length - 1 {
        let rows = rank * mode;
        let cols = rest.len() / rows;
        let m = DMatrix::from_column_slice(rows, cols, &rest);
        let Svd { u, s, vt } = thin_svd(&m);
        let k = truncation_rank(&s, delta);
        cores.push(TtCore::from_left_unfolding(&u.columns(0, k).into_owned(), rank, mode));
        let mut svt = vt.rows(0, k).into_owned();
        for (i, mut row) in svt.row_iter_mut().enumerate() {
            row *= s[i];
        }
        rest = svt.as_slice().to_vec();
        rank = k;
    }
    cores.push(TtCore::new(rank, mode, 1, rest)?);
    TtVector::new(mode, cores)
}

pub fn tt_to_full(t: &TtVector) -> Result<Vec<f64>, TtError> {
    t.to_full()
}

pub fn tt_round(t: &TtVector, eps: f64) -> TtVector {
    t.round(eps)
}

/// Analytic rank-≤2 QTT pair `({cos(ω h n)}, {sin(ω h n)})`, `n < 2^L`.
pub fn exp_qtt(omega: f64, step: f64, length: usize) -> Result<(TtVector, TtVector), TtError> {
    exp_qtt_with_mode(omega, step, length, 2)
}

/// Same as [`exp_qtt`] for general mode size `q`: the phase `ω h n` splits
/// into per-digit angles `ω h (j_ν − 1) q^{ν−1}` and the running
/// `(cos, sin)` pair is carried through 2×2 rotation blocks.
pub fn exp_qtt_with_mode(omega: f64, step: f64, length: usize, mode: usize) -> Result<(TtVector, TtVector), TtError> {
    if length == 0 {
        return Err(TtError::Invalid("length must be at least 1".into()));
    }
    let theta = omega * step;
    if theta == 0.0 {
        return Ok((TtVector::constant(1.0, length, mode)?, TtVector::constant(0.0, length, mode)?));
    }
    let angle = |nu: usize, j: usize| theta * (j as f64 * (mode as f64).powi(nu as i32));
    if length == 1 {
        let c = (0..mode).map(|j| angle(0, j).cos()).collect();
        let s = (0..mode).map(|j| angle(0, j).sin()).collect();
        return Ok((
            TtVector::new(mode, vec![TtCore::new(1, mode, 1, c)?])?,
            TtVector::new(mode, vec![TtCore::new(1, mode, 1, s)?])?,
        ));
    }

    let mut shared = Vec::with_capacity(length - 1);
    // First core: row vector (cos φ, sin φ).
    let mut first = vec![0.0; 2 * mode];
    for j in 0..mode {
        let (s, c) = angle(0, j).sin_cos();
        first[j] = c;
        first[j + mode] = s;
    }
    shared.push(TtCore::new(1, mode, 2, first)?);
    // Middle cores: [cos a, sin a] · [[cos b, sin b], [−sin b, cos b]].
    for nu in 1..length - 1 {
        let mut data = vec![0.0; 4 * mode];
        for j in 0..mode {
            let (s, c) = angle(nu, j).sin_cos();
            let at = |a: usize, b: usize| a + 2 * (j + mode * b);
            data[at(0, 0)] = c;
            data[at(0, 1)] = s;
            data[at(1, 0)] = -s;
            data[at(1, 1)] = c;
        }
        shared.push(TtCore::new(2, mode, 2, data)?);
    }
    let last = length - 1;
    let mut cos_last = vec![0.0; 2 * mode];
    let mut sin_last = vec![0.0; 2 * mode];
    for j in 0..mode {
        let (s, c) = angle(last, j).sin_cos();
        cos_last[2 * j] = c;
        cos_last[1 + 2 * j] = -s;
        sin_last[2 * j] = s;
        sin_last[1 + 2 * j] = c;
    }
    let mut cos_cores = shared.clone();
    cos_cores.push(TtCore::new(2, mode, 1, cos_last)?);
    let mut sin_cores = shared;
    sin_cores.push(TtCore::new(2, mode, 1, sin_last)?);
    Ok((TtVector::new(mode, cos_cores)?, TtVector::new(mode, sin_cores)?))
}
