//! Precomputation of prototype integrals as QTT tensors over a frequency
//! grid, and their binary persistence.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::cross::{tt_cross, CrossConfig, CrossError, EntryOracle};
use crate::interpolation::{chebyshev_t, LagrangeBasis};
use crate::oracle_quadrature::{BasisFactor, EntryIntegrand, Part, QuadratureConfig, QuadratureError};
use crate::oscillators::{OscError, OscillatorKind, OscillatorSpec, Parity};
use crate::tensor_train::{unfold_index, TtCore, TtError, TtVector};

/// Environment variable naming the default directory for table files.
pub const TABLE_DIR_ENV: &str = "QTTOSC_TABLE_DIR";
pub const FORMAT_MAGIC: &[u8; 4] = b"QTTP";
pub const FORMAT_VERSION: u16 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MAX_GRID_LENGTH: usize = 63;
/// Cross validation and fiber truncation for prototypes are relative to at
/// least this magnitude. Prototypes are bounded by `∫|B|`, so this turns
/// the tolerance into an absolute one for tiny or identically zero entries.
pub const PROTOTYPE_VALUE_FLOOR: f64 = 0.1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid frequency grid: {0}")]
    Grid(String),
    #[error("grid spacing {step:e} too coarse for rounding target {target:e} (need h < {limit:e})")]
    RoundingBudget { step: f64, target: f64, limit: f64 },
    #[error("invalid basis: {0}")]
    Basis(String),
    #[error(transparent)]
    Oscillator(#[from] OscError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Cross(#[from] CrossError),
    #[error(transparent)]
    Tensor(#[from] TtError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a prototype table (bad magic)")]
    BadMagic,
    #[error("unsupported table format version {0}")]
    Version(u16),
    #[error("checksum mismatch in {0}")]
    Checksum(String),
    #[error("table file is truncated")]
    Truncated,
    #[error("malformed table file: {0}")]
    Format(String),
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
}

/// `M = 2^L` equispaced frequencies over `[ω_min, ω_max]`, both endpoints
/// included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    omega_min: f64,
    omega_max: f64,
    length: usize,
    rounding_target: Option<f64>,
}

/// Largest spacing whose rounding error stays below `target`:
/// `2 ln(target/2 + 1)`.
pub fn max_step_for_rounding(target: f64) -> f64 {
    2.0 * (target / 2.0).ln_1p()
}

impl FrequencyGrid {
    pub fn new(omega_min: f64, omega_max: f64, length: usize) -> Result<Self, PipelineError> {
        if !omega_min.is_finite() || !omega_max.is_finite() || !(omega_min < omega_max) {
            return Err(PipelineError::Grid(format!("need ω_min < ω_max, got [{omega_min}, {omega_max}]")));
        }
        if !(1..=MAX_GRID_LENGTH).contains(&length) {
            return Err(PipelineError::Grid(format!("L = {length} not in 1..={MAX_GRID_LENGTH}")));
        }
        Ok(Self { omega_min, omega_max, length, rounding_target: None })
    }

    /// Grid that must keep the rounding error below `target`.
    pub fn with_rounding_target(
        omega_min: f64,
        omega_max: f64,
        length: usize,
        target: f64,
    ) -> Result<Self, PipelineError> {
        let mut grid = Self::new(omega_min, omega_max, length)?;
        if !(target > 0.0) || !target.is_finite() {
            return Err(PipelineError::Grid(format!("rounding target {target} must be positive")));
        }
        let limit = max_step_for_rounding(target);
        let step = grid.step();
        if !(step < limit) {
            return Err(PipelineError::RoundingBudget { step, target, limit });
        }
        grid.rounding_target = Some(target);
        Ok(grid)
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    /// `L`.
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn rounding_target(&self) -> Option<f64> {
        self.rounding_target
    }

    /// `M = 2^L`.
    pub fn points(&self) -> u64 {
        1u64 << self.length
    }

    /// `h = (ω_max − ω_min)/(M − 1)`.
    pub fn step(&self) -> f64 {
        (self.omega_max - self.omega_min) / (self.points() - 1) as f64
    }

    pub fn span(&self) -> f64 {
        self.omega_max - self.omega_min
    }

    /// Frequency of grid point `index`; the last point is exactly `ω_max`.
    pub fn omega_at(&self, index: u64) -> f64 {
        if index == self.points() - 1 {
            self.omega_max
        } else {
            self.omega_min + self.step() * index as f64
        }
    }
}

/// Basis of the smooth factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisSpec {
    Chebyshev { degree: usize },
    Lagrange { degree: usize },
    LagrangeMulti { degree: usize, dimension: usize },
}

impl BasisSpec {
    pub fn degree(&self) -> usize {
        match *self {
            BasisSpec::Chebyshev { degree }
            | BasisSpec::Lagrange { degree }
            | BasisSpec::LagrangeMulti { degree, .. } => degree,
        }
    }

    pub fn dimension(&self) -> usize {
        match *self {
            BasisSpec::LagrangeMulti { dimension, .. } => dimension,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BasisSpec::Chebyshev { .. } => "cheb",
            BasisSpec::Lagrange { .. } => "lagr",
            BasisSpec::LagrangeMulti { .. } => "lagr-multi",
        }
    }

    /// Number of basis functions, `(N+1)^d`.
    pub fn count(&self) -> usize {
        (self.degree() + 1).pow(self.dimension() as u32)
    }

    /// All basis multi-indices in lexicographic order (last axis fastest).
    pub fn indices(&self) -> Vec<Vec<usize>> {
        let n = self.degree() + 1;
        let d = self.dimension();
        (0..self.count())
            .map(|mut flat| {
                let mut idx = vec![0; d];
                for slot in idx.iter_mut().rev() {
                    *slot = flat % n;
                    flat /= n;
                }
                idx
            })
            .collect()
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if self.degree() > 512 {
            return Err(PipelineError::Basis(format!("degree {} above 512", self.degree())));
        }
        match *self {
            BasisSpec::LagrangeMulti { dimension, .. } if !(2..=3).contains(&dimension) => {
                Err(PipelineError::Basis(format!("multi-index basis needs d in 2..=3, got {dimension}")))
            }
            _ => Ok(()),
        }
    }

    fn check_index(&self, index: &[usize]) -> Result<(), PipelineError> {
        if index.len() != self.dimension() || index.iter().any(|&k| k > self.degree()) {
            return Err(PipelineError::Basis(format!(
                "index {index:?} outside a degree-{} basis in {} dimension(s)",
                self.degree(),
                self.dimension()
            )));
        }
        Ok(())
    }

    fn factors(&self, index: &[usize]) -> Vec<BasisFactor> {
        match *self {
            BasisSpec::Chebyshev { .. } => {
                let k = index[0];
                vec![Box::new(move |x| chebyshev_t(k, x))]
            }
            BasisSpec::Lagrange { degree } | BasisSpec::LagrangeMulti { degree, .. } => {
                let basis = Arc::new(LagrangeBasis::new(degree));
                index
                    .iter()
                    .map(|&k| {
                        let basis = Arc::clone(&basis);
                        Box::new(move |x| basis.eval_unchecked(k, x)) as BasisFactor
                    })
                    .collect()
            }
        }
    }
}

/// Parts stored for an oscillator: both for phases, one for kernels.
pub fn parts_for(osc: &OscillatorSpec) -> &'static [Part] {
    match osc.kind {
        OscillatorKind::Phase => &[Part::Real, Part::Imag],
        OscillatorKind::Kernel => &[Part::Real],
    }
}

/// True when the prototype vanishes identically because the integrand is
/// odd on `[-1, 1]`: only Chebyshev polynomials have a parity.
pub fn is_parity_zero(osc: &OscillatorSpec, basis: &BasisSpec, index: &[usize], part: Part) -> bool {
    let BasisSpec::Chebyshev { .. } = basis else {
        return false;
    };
    let k_odd = index[0] % 2 == 1;
    match (osc.kind, osc.parity(), part) {
        (_, Parity::None, _) => false,
        (OscillatorKind::Phase, _, Part::Real) => k_odd,
        (OscillatorKind::Phase, Parity::Even, Part::Imag) => k_odd,
        (OscillatorKind::Phase, Parity::Odd, Part::Imag) => !k_odd,
        (OscillatorKind::Kernel, Parity::Even, _) => k_odd,
        (OscillatorKind::Kernel, Parity::Odd, _) => !k_odd,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EntryData {
    Tensor(TtVector),
    Zero,
    /// Precomputation aborted; the message says why.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryStats {
    pub effective_rank: f64,
    pub oracle_calls: u64,
    pub validation_error: f64,
    pub sweeps: u32,
    pub seconds: f64,
    /// Largest coarse/refined quadrature disagreement seen by the oracle.
    pub max_disagreement: f64,
    pub converged: bool,
}

impl EntryStats {
    fn empty(seconds: f64) -> Self {
        Self {
            effective_rank: 0.0,
            oracle_calls: 0,
            validation_error: 0.0,
            sweeps: 0,
            seconds,
            max_disagreement: 0.0,
            converged: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub index: Vec<usize>,
    pub part: Part,
    pub data: EntryData,
    pub stats: EntryStats,
}

impl TableEntry {
    /// Non-converged cross or aborted precomputation.
    pub fn flagged(&self) -> bool {
        matches!(self.data, EntryData::Failed(_)) || !self.stats.converged
    }

    pub fn tensor(&self) -> Option<&TtVector> {
        match &self.data {
            EntryData::Tensor(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data == EntryData::Zero
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.tensor().map(TtVector::ranks).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableMetadata {
    pub eps_cross: f64,
    pub max_rank: u32,
    pub seed: u64,
    /// Human-readable description of the quadrature oracle.
    pub quadrature: String,
    pub tool_version: String,
    pub build_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeTable {
    pub grid: FrequencyGrid,
    pub oscillator: OscillatorSpec,
    pub basis: BasisSpec,
    /// Ordered by basis index, then part.
    pub entries: Vec<TableEntry>,
    pub metadata: TableMetadata,
}

impl PrototypeTable {
    pub fn entry(&self, index: &[usize], part: Part) -> Option<&TableEntry> {
        self.entries.iter().find(|e| e.index == index && e.part == part)
    }

    pub fn flagged(&self) -> Vec<&TableEntry> {
        self.entries.iter().filter(|e| e.flagged()).collect()
    }

    pub fn is_flagged(&self) -> bool {
        self.entries.iter().any(TableEntry::flagged)
    }

    pub fn zero_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_zero()).count()
    }

    /// Human-readable list of failed or non-converged entries.
    pub fn failure_summary(&self) -> Vec<String> {
        self.flagged()
            .into_iter()
            .map(|e| match &e.data {
                EntryData::Failed(msg) => format!("{:?}/{}: {msg}", e.index, e.part.name()),
                _ => format!(
                    "{:?}/{}: cross did not converge (validation error {:e})",
                    e.index,
                    e.part.name(),
                    e.stats.validation_error
                ),
            })
            .collect()
    }
}

/// Describes a quadrature configuration for table metadata.
pub fn describe_quadrature(cfg: &QuadratureConfig) -> String {
    use crate::oracle_quadrature::SubintervalRule;
    let rule = match cfg.subintervals {
        SubintervalRule::Resolved { scale, minimum } => {
            format!("resolved(scale={scale},min={minimum})")
        }
        SubintervalRule::Proportional { scale, minimum } => {
            format!("proportional(scale={scale},min={minimum})")
        }
        SubintervalRule::Fixed(m) => format!("fixed({m})"),
    };
    format!(
        "gauss-legendre n={} m={} refine={} tol={:e}",
        cfg.points_per_subinterval, rule, cfg.refinement_factor, cfg.validation_tolerance
    )
}

/// One prototype `ω ↦ ∫ B(x)·cos/sin(ωg(x)) dx` (or `∫ B h_ω`) on the grid.
pub fn precompute_prototype(
    osc: &OscillatorSpec,
    basis: &BasisSpec,
    index: &[usize],
    part: Part,
    grid: &FrequencyGrid,
    cross_cfg: &CrossConfig,
    quad_cfg: &QuadratureConfig,
) -> Result<TableEntry, PipelineError> {
    basis.validate()?;
    basis.check_index(index)?;
    cross_cfg.validate()?;
    quad_cfg.validate()?;
    if basis.dimension() != osc.dimension {
        return Err(PipelineError::Basis(format!(
            "{}-dimensional basis for a {}-dimensional oscillator",
            basis.dimension(),
            osc.dimension
        )));
    }
    if !parts_for(osc).contains(&part) {
        return Err(PipelineError::Basis("kernel oscillators have only a real part".into()));
    }
    let cross_cfg = &CrossConfig { value_floor: cross_cfg.value_floor.max(PROTOTYPE_VALUE_FLOOR), ..cross_cfg.clone() };
    let start = Instant::now();
    if is_parity_zero(osc, basis, index, part) {
        return Ok(TableEntry {
            index: index.to_vec(),
            part,
            data: EntryData::Zero,
            stats: EntryStats::empty(start.elapsed().as_secs_f64()),
        });
    }
    let mut integrand = EntryIntegrand::new(osc, basis.factors(index), basis.degree(), part, *quad_cfg)?;
    let mut max_disagreement = 0.0f64;
    let outcome = {
        let mut oracle = EntryOracle::new(grid.length(), 2, |digits| {
            let flat = unfold_index(digits, 2).map_err(|e| e.to_string())?;
            let omega = grid.omega_at(flat);
            let v = integrand.eval(omega).map_err(|e| e.to_string())?;
            max_disagreement = max_disagreement.max(v.disagreement);
            if v.flagged {
                return Err(format!(
                    "quadrature self-validation failed at ω = {omega}: refinement changed the value by {:e}",
                    v.disagreement
                ));
            }
            Ok(v.value)
        });
        let result = tt_cross(&mut oracle, cross_cfg);
        (result, oracle.calls())
    };
    let seconds = start.elapsed().as_secs_f64();
    let (data, stats) = match outcome {
        (Ok(res), _) => {
            let stats = EntryStats {
                effective_rank: res.report.effective_rank,
                oracle_calls: res.report.oracle_calls,
                validation_error: res.report.validation_error,
                sweeps: res.report.sweeps as u32,
                seconds,
                max_disagreement,
                converged: res.report.converged,
            };
            (EntryData::Tensor(res.tensor), stats)
        }
        (Err(e @ (CrossError::Oracle { .. } | CrossError::NonFinite { .. })), calls) => {
            let mut stats = EntryStats::empty(seconds);
            stats.oracle_calls = calls;
            stats.max_disagreement = max_disagreement;
            stats.converged = false;
            (EntryData::Failed(e.to_string()), stats)
        }
        (Err(e), _) => return Err(e.into()),
    };
    Ok(TableEntry { index: index.to_vec(), part, data, stats })
}

/// All prototypes of a basis, computed on up to `jobs` threads. The result
/// does not depend on `jobs`.
pub fn precompute_table(
    osc: &OscillatorSpec,
    basis: &BasisSpec,
    grid: &FrequencyGrid,
    cross_cfg: &CrossConfig,
    quad_cfg: &QuadratureConfig,
    jobs: usize,
) -> Result<PrototypeTable, PipelineError> {
    basis.validate()?;
    let start = Instant::now();
    let tasks: Vec<(Vec<usize>, Part)> =
        basis.indices().into_iter().flat_map(|idx| parts_for(osc).iter().map(move |&p| (idx.clone(), p))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    let entries: Vec<Result<TableEntry, PipelineError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(idx, part)| precompute_prototype(osc, basis, idx, *part, grid, cross_cfg, quad_cfg))
            .collect()
    });
    let entries = entries.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(PrototypeTable {
        grid: *grid,
        oscillator: osc.clone(),
        basis: *basis,
        entries,
        metadata: TableMetadata {
            eps_cross: cross_cfg.tolerance,
            max_rank: cross_cfg.max_rank as u32,
            seed: cross_cfg.seed,
            quadrature: describe_quadrature(quad_cfg),
            tool_version: TOOL_VERSION.to_string(),
            build_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// Default directory for table files: `$QTTOSC_TABLE_DIR`, else the
/// current directory.
pub fn default_table_dir() -> PathBuf {
    std::env::var_os(TABLE_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

/// Relative paths are resolved against [`default_table_dir`] when the
/// environment variable is set.
pub fn resolve_table_path(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Some(dir) = std::env::var_os(TABLE_DIR_ENV) {
            return PathBuf::from(dir).join(path);
        }
    }
    path.to_path_buf()
}

// ---------------------------------------------------------------- format

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn crc_from(&mut self, start: usize) {
        let crc = crc32fast::hash(&self.buf[start..]);
        self.u32(crc);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PipelineError> {
        let end = self.pos.checked_add(n).ok_or(PipelineError::Truncated)?;
        if end > self.buf.len() {
            return Err(PipelineError::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, PipelineError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, PipelineError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, PipelineError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, PipelineError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, PipelineError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn str(&mut self) -> Result<String, PipelineError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| PipelineError::Format("invalid UTF-8 string".into()))
    }
    fn check_crc(&mut self, start: usize, what: impl Fn() -> String) -> Result<(), PipelineError> {
        let computed = crc32fast::hash(&self.buf[start..self.pos]);
        if self.u32()? != computed {
            return Err(PipelineError::Checksum(what()));
        }
        Ok(())
    }
}

fn parity_code(p: Option<Parity>) -> u8 {
    match p {
        None => 0,
        Some(Parity::Even) => 1,
        Some(Parity::Odd) => 2,
        Some(Parity::None) => 3,
    }
}

/// Serializes a table in the versioned binary format.
pub fn encode_table(t: &PrototypeTable) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(FORMAT_MAGIC);
    w.u16(FORMAT_VERSION);
    w.f64(t.grid.omega_min);
    w.f64(t.grid.omega_max);
    w.u8(t.grid.length as u8);
    match t.grid.rounding_target {
        Some(r) => {
            w.u8(1);
            w.f64(r);
        }
        None => {
            w.u8(0);
            w.f64(0.0);
        }
    }
    let (code, dim) = match t.basis {
        BasisSpec::Chebyshev { .. } => (0, 1),
        BasisSpec::Lagrange { .. } => (1, 1),
        BasisSpec::LagrangeMulti { dimension, .. } => (2, dimension),
    };
    w.u8(code);
    w.u32(t.basis.degree() as u32);
    w.u8(dim as u8);
    w.u8(match t.oscillator.kind {
        OscillatorKind::Phase => 0,
        OscillatorKind::Kernel => 1,
    });
    w.u8(t.oscillator.dimension as u8);
    w.u8(parity_code(t.oscillator.declared_parity));
    w.str(&t.oscillator.text());
    let m = &t.metadata;
    w.f64(m.eps_cross);
    w.u32(m.max_rank);
    w.u64(m.seed);
    w.str(&m.quadrature);
    w.str(&m.tool_version);
    w.f64(m.build_seconds);
    w.u32(t.entries.len() as u32);
    w.crc_from(0);

    for e in &t.entries {
        let start = w.buf.len();
        w.u8(e.index.len() as u8);
        for &k in &e.index {
            w.u32(k as u32);
        }
        w.u8(match e.part {
            Part::Real => 0,
            Part::Imag => 1,
        });
        let s = &e.stats;
        w.u8(u8::from(s.converged));
        w.f64(s.effective_rank);
        w.u64(s.oracle_calls);
        w.f64(s.validation_error);
        w.u32(s.sweeps);
        w.f64(s.seconds);
        w.f64(s.max_disagreement);
        match &e.data {
            EntryData::Tensor(tt) => {
                w.u8(0);
                w.u8(tt.mode_size() as u8);
                w.u32(tt.len() as u32);
                for r in tt.ranks() {
                    w.u32(r as u32);
                }
                for core in tt.cores() {
                    for &v in core.data() {
                        w.f64(v);
                    }
                }
            }
            EntryData::Zero => w.u8(1),
            EntryData::Failed(msg) => {
                w.u8(2);
                w.str(msg);
            }
        }
        w.crc_from(start);
    }
    w.buf
}

/// Parses bytes produced by [`encode_table`].
pub fn decode_table(bytes: &[u8]) -> Result<PrototypeTable, PipelineError> {
    if bytes.len() < 4 || &bytes[..4] != FORMAT_MAGIC {
        return Err(PipelineError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(PipelineError::Version(version));
    }
    let omega_min = r.f64()?;
    let omega_max = r.f64()?;
    let length = r.u8()? as usize;
    let has_target = r.u8()?;
    let target = r.f64()?;
    let basis_code = r.u8()?;
    let degree = r.u32()? as usize;
    let basis_dim = r.u8()? as usize;
    let kind = match r.u8()? {
        0 => OscillatorKind::Phase,
        1 => OscillatorKind::Kernel,
        k => return Err(PipelineError::Format(format!("unknown oscillator kind {k}"))),
    };
    let osc_dim = r.u8()? as usize;
    let parity = r.u8()?;
    let text = r.str()?;
    let eps_cross = r.f64()?;
    let max_rank = r.u32()?;
    let seed = r.u64()?;
    let quadrature = r.str()?;
    let tool_version = r.str()?;
    let build_seconds = r.f64()?;
    let count = r.u32()? as usize;
    r.check_crc(0, || "header".into())?;

    let mut grid = FrequencyGrid::new(omega_min, omega_max, length)?;
    if has_target == 1 {
        grid.rounding_target = Some(target);
    }
    let basis = match basis_code {
        0 => BasisSpec::Chebyshev { degree },
        1 => BasisSpec::Lagrange { degree },
        2 => BasisSpec::LagrangeMulti { degree, dimension: basis_dim },
        c => return Err(PipelineError::Format(format!("unknown basis code {c}"))),
    };
    let mut oscillator = OscillatorSpec::new(kind, &text, Some(osc_dim))?;
    oscillator.declared_parity = match parity {
        0 => None,
        1 => Some(Parity::Even),
        2 => Some(Parity::Odd),
        3 => Some(Parity::None),
        p => return Err(PipelineError::Format(format!("unknown parity code {p}"))),
    };

    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for n in 0..count {
        let start = r.pos;
        let d = r.u8()? as usize;
        let index = (0..d).map(|_| r.u32().map(|k| k as usize)).collect::<Result<Vec<_>, _>>()?;
        let part = match r.u8()? {
            0 => Part::Real,
            1 => Part::Imag,
            p => return Err(PipelineError::Format(format!("unknown part code {p}"))),
        };
        let converged = r.u8()? == 1;
        let stats = EntryStats {
            converged,
            effective_rank: r.f64()?,
            oracle_calls: r.u64()?,
            validation_error: r.f64()?,
            sweeps: r.u32()?,
            seconds: r.f64()?,
            max_disagreement: r.f64()?,
        };
        let data = match r.u8()? {
            0 => {
                let mode = r.u8()? as usize;
                let cores = r.u32()? as usize;
                if cores != length {
                    return Err(PipelineError::Format(format!("entry {n} has {cores} cores, grid has L = {length}")));
                }
                let ranks = (0..=cores).map(|_| r.u32().map(|k| k as usize)).collect::<Result<Vec<_>, _>>()?;
                let mut out = Vec::with_capacity(cores);
                for c in 0..cores {
                    let size = ranks[c]
                        .checked_mul(mode)
                        .and_then(|v| v.checked_mul(ranks[c + 1]))
                        .ok_or_else(|| PipelineError::Format("core size overflow".into()))?;
                    let raw = r.take(size.checked_mul(8).ok_or(PipelineError::Truncated)?)?;
                    let data = raw
                        .chunks_exact(8)
                        .map(|b| f64::from_bits(u64::from_le_bytes(b.try_into().unwrap())))
                        .collect();
                    out.push(TtCore::new(ranks[c], mode, ranks[c + 1], data)?);
                }
                EntryData::Tensor(TtVector::new(mode, out)?)
            }
            1 => EntryData::Zero,
            2 => EntryData::Failed(r.str()?),
            s => return Err(PipelineError::Format(format!("unknown entry status {s}"))),
        };
        r.check_crc(start, || format!("entry {n}"))?;
        entries.push(TableEntry { index, part, data, stats });
    }
    if r.pos != bytes.len() {
        return Err(PipelineError::Format("trailing bytes after last entry".into()));
    }
    Ok(PrototypeTable {
        grid,
        oscillator,
        basis,
        entries,
        metadata: TableMetadata { eps_cross, max_rank, seed, quadrature, tool_version, build_seconds },
    })
}

pub fn save_table(t: &PrototypeTable, path: &Path) -> Result<(), PipelineError> {
    let bytes = encode_table(t);
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<PrototypeTable, PipelineError> {
    decode_table(&fs::read(path)?)
}
