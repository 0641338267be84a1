use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use qttosc::cross::CrossConfig;
use qttosc::integrator::{
    fourier_transform, integrate_1d_with_degree, integrate_general, integrate_multi, round_to_grid,
};
use qttosc::oracle_quadrature::{oscillatory_entry, Part, QuadratureConfig, QuadratureError, SubintervalRule};
use qttosc::oscillators::{parse, Bindings, Expr, OscillatorKind, OscillatorSpec};
use qttosc::prototype_pipeline::{
    decode_table, encode_table, load_table, precompute_prototype, precompute_table, resolve_table_path, save_table,
    BasisSpec, EntryData, FrequencyGrid, PipelineError, PrototypeTable, TableEntry, TOOL_VERSION,
};

use crate::manifest::{default_manifest_path, RunManifest, CSV_SCHEMA, MANIFEST_SCHEMA};
use crate::{
    BasisArg, Cli, Command, ConvergenceArgs, IntegrateArgs, KindArg, PrecomputeArgs, RanksArgs, ReplayArgs, Status,
};

/// Marks an error as a numerical failure (exit code 1) rather than a usage
/// or domain error (exit code 2).
#[derive(Debug)]
struct NumericalFailure(String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<NumericalFailure>().is_some() {
            return 1;
        }
        match cause.downcast_ref::<PipelineError>() {
            Some(PipelineError::Cross(_)) | Some(PipelineError::Quadrature(QuadratureError::NonFinite { .. })) => {
                return 1
            }
            _ => {}
        }
    }
    2
}

pub fn run(command: Command, argv: &[String]) -> Result<Status> {
    let start = Instant::now();
    let (name, params, seeds) = describe(&command)?;
    let (status, outputs, manifest_path) = match command {
        Command::Precompute(a) => precompute(&a)?,
        Command::Integrate(a) => integrate(&a)?,
        Command::Convergence(a) => convergence(&a)?,
        Command::Ranks(a) => ranks(&a)?,
        Command::Replay(a) => return replay(&a),
    };
    if let Some(path) = manifest_path {
        RunManifest {
            schema: MANIFEST_SCHEMA,
            csv_schema: CSV_SCHEMA,
            command: name.to_string(),
            args: argv.to_vec(),
            parameters: params,
            seeds,
            tool_version: TOOL_VERSION.to_string(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            working_directory: std::env::current_dir().ok(),
            outputs: outputs.iter().map(std::path::absolute).collect::<io::Result<_>>()?,
        }
        .write(&path)?;
    }
    Ok(status)
}

fn describe(command: &Command) -> Result<(&'static str, serde_json::Value, Vec<u64>)> {
    Ok(match command {
        Command::Precompute(a) => ("precompute", serde_json::to_value(a)?, vec![a.seed]),
        Command::Integrate(a) => ("integrate", serde_json::to_value(a)?, vec![]),
        Command::Convergence(a) => ("convergence", serde_json::to_value(a)?, vec![a.seed]),
        Command::Ranks(a) => ("ranks", serde_json::to_value(a)?, vec![a.seed]),
        Command::Replay(a) => ("replay", serde_json::to_value(a)?, vec![]),
    })
}

type Ran = (Status, Vec<PathBuf>, Option<PathBuf>);

fn kind(k: KindArg) -> OscillatorKind {
    match k {
        KindArg::Phase => OscillatorKind::Phase,
        KindArg::Kernel => OscillatorKind::Kernel,
    }
}

fn oscillator(text: &str, k: KindArg, dimension: Option<usize>) -> Result<OscillatorSpec> {
    OscillatorSpec::new(kind(k), text, dimension).with_context(|| format!("invalid oscillator {text:?}"))
}

fn cross_config(eps: f64, max_rank: usize, seed: u64) -> CrossConfig {
    CrossConfig { tolerance: eps, max_rank, seed, ..CrossConfig::default() }
}

fn quad_config(fixed: bool, wmax: f64) -> QuadratureConfig {
    if fixed {
        QuadratureConfig::fixed(wmax)
    } else {
        QuadratureConfig::default()
    }
}

/// A sink that is either a file or stdout.
fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            Box::new(io::BufWriter::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn manifest_for(explicit: &Option<PathBuf>, output: Option<&Path>) -> Option<PathBuf> {
    explicit.clone().or_else(|| output.map(default_manifest_path))
}

fn index_label(index: &[usize]) -> String {
    index.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";")
}

fn status_label(e: &TableEntry) -> String {
    match &e.data {
        EntryData::Zero => "zero".into(),
        EntryData::Failed(m) => format!("failed: {m}"),
        EntryData::Tensor(_) if !e.stats.converged => "not-converged".into(),
        EntryData::Tensor(_) => "ok".into(),
    }
}

fn precompute(a: &PrecomputeArgs) -> Result<Ran> {
    let basis = match a.basis {
        BasisArg::Cheb => BasisSpec::Chebyshev { degree: a.n },
        BasisArg::Lagr => BasisSpec::Lagrange { degree: a.n },
        BasisArg::LagrMulti => BasisSpec::LagrangeMulti { degree: a.n, dimension: a.d.unwrap_or(2) },
    };
    if a.d.is_some_and(|d| d != basis.dimension()) {
        bail!("--d applies to the lagr-multi basis only");
    }
    let osc = oscillator(&a.osc, a.kind, Some(basis.dimension()))?;
    let grid = match a.rounding_target {
        Some(t) => FrequencyGrid::with_rounding_target(a.wmin, a.wmax, a.l, t)?,
        None => FrequencyGrid::new(a.wmin, a.wmax, a.l)?,
    };
    let table = precompute_table(
        &osc,
        &basis,
        &grid,
        &cross_config(a.eps_cross, a.max_rank, a.seed),
        &quad_config(a.paper_quad, a.wmax),
        a.jobs,
    )?;
    let out = resolve_table_path(&a.out);
    save_table(&table, &out).with_context(|| format!("writing {}", out.display()))?;

    let mut w = csv::Writer::from_writer(sink(&a.report)?);
    w.write_record([
        "index",
        "part",
        "status",
        "max_rank",
        "effective_rank",
        "oracle_calls",
        "validation_error",
        "seconds",
    ])?;
    for e in &table.entries {
        let t = e.tensor();
        w.write_record([
            index_label(&e.index),
            e.part.name().to_string(),
            status_label(e),
            t.map(|t| t.max_rank().to_string()).unwrap_or_default(),
            t.map(|t| format!("{:.4}", t.effective_rank())).unwrap_or_default(),
            e.stats.oracle_calls.to_string(),
            format!("{:e}", e.stats.validation_error),
            format!("{:.3}", e.stats.seconds),
        ])?;
    }
    w.flush()?;
    let failures = table.failure_summary();
    for f in &failures {
        eprintln!("flagged: {f}");
    }
    eprintln!(
        "wrote {} ({} entries, {} zero, {} flagged) in {:.1}s",
        out.display(),
        table.entries.len(),
        table.zero_count(),
        failures.len(),
        table.metadata.build_seconds
    );
    let mut outputs = vec![out.clone()];
    outputs.extend(a.report.clone());
    let status = if failures.is_empty() { Status::Ok } else { Status::Flagged };
    Ok((status, outputs, manifest_for(&a.manifest, Some(&out))))
}

/// A smooth factor `f` given as an expression in `x` or `x1..xd`.
struct Smooth {
    expr: Expr,
    dimension: usize,
}

impl Smooth {
    fn parse(text: &str, dimension: usize) -> Result<Self> {
        let expr = parse(text).with_context(|| format!("invalid smooth factor {text:?}"))?;
        if expr.uses_omega() {
            bail!("the smooth factor must not depend on the frequency");
        }
        if expr.spatial_dimension() > dimension {
            bail!("f uses x{} but the table is {dimension}-dimensional", expr.spatial_dimension());
        }
        Ok(Self { expr, dimension })
    }

    fn at(&self, x: f64) -> f64 {
        self.at_point(&[x])
    }

    fn at_point(&self, p: &[f64]) -> f64 {
        let mut coords = [0.0; 3];
        coords[..p.len()].copy_from_slice(p);
        self.expr.eval(&Bindings { x: coords, dimension: self.dimension, omega: None }).unwrap_or(f64::NAN)
    }
}

fn read_omegas(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#') && *l != "omega")
        .map(|l| l.parse::<f64>().with_context(|| format!("bad frequency {l:?} in {}", path.display())))
        .collect()
}

fn integrate(a: &IntegrateArgs) -> Result<Ran> {
    let path = resolve_table_path(&a.table);
    let table = load_table(&path).with_context(|| format!("loading table {}", path.display()))?;
    let omegas = match (&a.omega_list, a.omega) {
        (Some(p), _) => read_omegas(p)?,
        (None, Some(w)) => vec![w],
        (None, None) => bail!("give --omega or --omega-list"),
    };
    let f = Smooth::parse(&a.f, table.basis.dimension())?;
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    let fourier = match a.fourier.as_deref() {
        Some(&[lo, hi]) => Some((lo, hi)),
        Some(_) => bail!("--fourier takes two values"),
        None => None,
    };
    w.write_record(["omega", "omega_rounded", "re", "im", "rounding_bound", "flagged"])?;
    let mut flagged = false;
    for omega in omegas {
        let (used, value, bound, flags) = match fourier {
            Some((lo, hi)) => {
                let r = fourier_transform(&table, &|x| f.at(x), lo, hi, omega)?;
                (r.omega_used, r.value, r.inner.rounding_bound, r.inner.flagged())
            }
            None => {
                let r = match (table.basis, table.oscillator.kind) {
                    (BasisSpec::LagrangeMulti { .. }, _) => integrate_multi(&table, &|p| f.at_point(p), omega)?,
                    (_, OscillatorKind::Kernel) => integrate_general(&table, &|x| f.at(x), omega)?,
                    _ => {
                        let n = a.degree.unwrap_or(table.basis.degree());
                        integrate_1d_with_degree(&table, &|x| f.at(x), omega, n)?
                    }
                };
                (r.omega_rounded, r.value, r.rounding_bound, r.flagged())
            }
        };
        flagged |= flags;
        w.write_record([
            format!("{omega:?}"),
            format!("{used:?}"),
            format!("{:?}", value.re),
            format!("{:?}", value.im),
            format!("{bound:e}"),
            flags.to_string(),
        ])?;
    }
    w.flush()?;
    let outputs = a.out.clone().into_iter().collect();
    let status = if flagged { Status::Flagged } else { Status::Ok };
    Ok((status, outputs, manifest_for(&a.manifest, a.out.as_deref())))
}

/// Self-validated quadrature of the full integrand, used as reference.
fn reference(osc: &OscillatorSpec, f: &Smooth, omega: f64) -> Result<(Complex64, bool)> {
    let cfg = QuadratureConfig {
        points_per_subinterval: 12,
        subintervals: SubintervalRule::Resolved { scale: 2.0, minimum: 4 },
        validation_tolerance: 1e-12,
        ..QuadratureConfig::default()
    };
    let expr = f.expr.clone();
    let fx = move |x: f64| expr.eval(&Bindings::x(x)).unwrap_or(f64::NAN);
    let re = oscillatory_entry(fx.clone(), 32, osc, omega, Part::Real, &cfg)?;
    let (im, im_flag) = match osc.kind {
        OscillatorKind::Phase => {
            let v = oscillatory_entry(fx, 32, osc, omega, Part::Imag, &cfg)?;
            (v.value, v.flagged)
        }
        OscillatorKind::Kernel => (0.0, false),
    };
    Ok((Complex64::new(re.value, im), re.flagged || im_flag))
}

fn convergence(a: &ConvergenceArgs) -> Result<Ran> {
    anyhow::ensure!(a.nmin <= a.nmax, "--Nmin must not exceed --Nmax");
    let osc = oscillator(&a.osc, a.kind, Some(1))?;
    let f = Smooth::parse(&a.f, 1)?;
    let lo = a.omegas.iter().cloned().fold(0.0f64, f64::min);
    let mut hi = a.omegas.iter().cloned().fold(f64::MIN, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let grid = FrequencyGrid::new(lo, hi, a.l)?;
    let table = precompute_table(
        &osc,
        &BasisSpec::Chebyshev { degree: a.nmax },
        &grid,
        &cross_config(a.eps_cross, a.max_rank, a.seed),
        &QuadratureConfig::default(),
        a.jobs,
    )?;
    if table.is_flagged() {
        return Err(anyhow!(NumericalFailure(format!(
            "precomputation flagged: {}",
            table.failure_summary().join("; ")
        ))));
    }
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    w.write_record(["omega", "omega_rounded", "N", "error", "relative", "flagged"])?;
    let mut flagged = false;
    for &omega in &a.omegas {
        let (_, rounded) = round_to_grid(omega, &table.grid)?;
        let (exact, ref_flag) = reference(&osc, &f, rounded)?;
        let relative = exact.norm() >= 1e-14;
        for n in a.nmin..=a.nmax {
            let r = match osc.kind {
                OscillatorKind::Phase => integrate_1d_with_degree(&table, &|x| f.at(x), omega, n)?,
                OscillatorKind::Kernel => {
                    let weights = qttosc::integrator::smooth_weights(&table, &|x| f.at(x), n)?;
                    qttosc::integrator::integrate_weights(&table, &weights, omega)?
                }
            };
            let diff = (r.value - exact).norm();
            let err = if relative { diff / exact.norm() } else { diff };
            let row_flag = !relative || ref_flag || r.flagged();
            flagged |= row_flag;
            w.write_record([
                format!("{omega:?}"),
                format!("{rounded:?}"),
                n.to_string(),
                format!("{err:e}"),
                relative.to_string(),
                row_flag.to_string(),
            ])?;
        }
    }
    w.flush()?;
    let outputs = a.out.clone().into_iter().collect();
    let status = if flagged { Status::Flagged } else { Status::Ok };
    Ok((status, outputs, manifest_for(&a.manifest, a.out.as_deref())))
}

#[derive(Debug, Deserialize)]
struct RankRow {
    osc: String,
    #[serde(default)]
    kind: Option<String>,
    k: usize,
    #[serde(default)]
    part: Option<String>,
    wmin: f64,
    wmax: f64,
    #[serde(rename = "L")]
    l: usize,
    #[serde(default)]
    eps_cross: Option<f64>,
}

#[derive(Debug, Serialize)]
struct RankResult {
    osc: String,
    kind: String,
    k: usize,
    part: String,
    wmin: f64,
    wmax: f64,
    #[serde(rename = "L")]
    l: usize,
    eps_cross: f64,
    effective_rank: Option<f64>,
    max_rank: Option<usize>,
    oracle_calls: u64,
    seconds: f64,
    status: String,
}

fn rank_row(row: &RankRow, a: &RanksArgs) -> Result<(f64, TableEntry)> {
    let k = match row.kind.as_deref().map(str::trim) {
        None | Some("") | Some("phase") => KindArg::Phase,
        Some("kernel") => KindArg::Kernel,
        Some(other) => bail!("unknown kind {other:?}"),
    };
    let part = match row.part.as_deref().map(str::trim) {
        None | Some("") | Some("R") | Some("real") => Part::Real,
        Some("I") | Some("imag") => Part::Imag,
        Some(other) => bail!("unknown part {other:?}"),
    };
    let eps = row.eps_cross.unwrap_or(1e-11);
    let osc = oscillator(&row.osc, k, Some(1))?;
    let grid = FrequencyGrid::new(row.wmin, row.wmax, row.l)?;
    let e = precompute_prototype(
        &osc,
        &BasisSpec::Chebyshev { degree: row.k },
        &[row.k],
        part,
        &grid,
        &cross_config(eps, a.max_rank, a.seed),
        &quad_config(a.paper_quad, row.wmax),
    )?;
    Ok((eps, e))
}

fn ranks(a: &RanksArgs) -> Result<Ran> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))?;
    let rows: Vec<RankRow> =
        reader.deserialize().collect::<Result<_, _>>().with_context(|| format!("parsing {}", a.config.display()))?;
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    let mut flagged = false;
    for row in &rows {
        let mut result = RankResult {
            osc: row.osc.clone(),
            kind: row.kind.clone().filter(|s| !s.is_empty()).unwrap_or_else(|| "phase".into()),
            k: row.k,
            part: row.part.clone().filter(|s| !s.is_empty()).unwrap_or_else(|| "R".into()),
            wmin: row.wmin,
            wmax: row.wmax,
            l: row.l,
            eps_cross: row.eps_cross.unwrap_or(1e-11),
            effective_rank: None,
            max_rank: None,
            oracle_calls: 0,
            seconds: 0.0,
            status: String::new(),
        };
        match rank_row(row, a) {
            Ok((eps, e)) => {
                result.eps_cross = eps;
                result.effective_rank = e.tensor().map(|t| (t.effective_rank() * 1e4).round() / 1e4);
                result.max_rank = e.tensor().map(|t| t.max_rank());
                result.oracle_calls = e.stats.oracle_calls;
                result.seconds = (e.stats.seconds * 1e3).round() / 1e3;
                result.status = status_label(&e);
                flagged |= e.flagged();
            }
            Err(err) => {
                result.status = format!("error: {err:#}");
                flagged = true;
            }
        }
        w.serialize(&result)?;
        w.flush()?;
    }
    let outputs = a.out.clone().into_iter().collect();
    let status = if flagged { Status::Flagged } else { Status::Ok };
    Ok((status, outputs, manifest_for(&a.manifest, a.out.as_deref())))
}

const OUTPUT_FLAGS: [&str; 3] = ["--out", "--report", "--manifest"];

/// Rewrites output paths of a recorded command into `dir`.
fn redirect_outputs(args: &[String], dir: &Path) -> Result<Vec<String>> {
    let rename = |p: &str| -> Result<String> {
        let name = Path::new(p).file_name().ok_or_else(|| anyhow!("output path {p:?} has no file name"))?;
        Ok(dir.join(name).to_string_lossy().into_owned())
    };
    let mut out = Vec::with_capacity(args.len());
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        if let Some((flag, value)) = arg.split_once('=').filter(|(f, _)| OUTPUT_FLAGS.contains(f)) {
            out.push(format!("{flag}={}", rename(value)?));
        } else if OUTPUT_FLAGS.contains(&arg.as_str()) && i + 1 < args.len() {
            out.push(arg.clone());
            out.push(rename(&args[i + 1])?);
            i += 1;
        } else {
            out.push(arg.clone());
        }
        i += 1;
    }
    Ok(out)
}

/// Table bytes with timing fields zeroed.
fn normalized_table(t: &PrototypeTable) -> Vec<u8> {
    let mut t = t.clone();
    t.metadata.build_seconds = 0.0;
    for e in &mut t.entries {
        e.stats.seconds = 0.0;
    }
    encode_table(&t)
}

/// CSV records with any `seconds` column removed.
fn normalized_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    let mut skip = None;
    for record in r.records() {
        let record = record?;
        if skip.is_none() {
            skip = Some(record.iter().position(|h| h == "seconds"));
        }
        rows.push(
            record.iter().enumerate().filter(|(i, _)| Some(*i) != skip.flatten()).map(|(_, v)| v.to_string()).collect(),
        );
    }
    Ok(rows)
}

fn same_output(old: &Path, new: &Path) -> Result<bool> {
    let ext = old.extension().and_then(|e| e.to_str()).unwrap_or("");
    Ok(match ext {
        "csv" => normalized_csv(old)? == normalized_csv(new)?,
        _ => {
            let (a, b) = (fs::read(old)?, fs::read(new)?);
            match (decode_table(&a), decode_table(&b)) {
                (Ok(x), Ok(y)) => normalized_table(&x) == normalized_table(&y),
                _ => a == b,
            }
        }
    })
}

fn replay(a: &ReplayArgs) -> Result<Status> {
    let m = RunManifest::read(&a.manifest)?;
    anyhow::ensure!(m.command != "replay", "cannot replay a replay");
    fs::create_dir_all(&a.into).with_context(|| format!("creating {}", a.into.display()))?;
    let into = fs::canonicalize(&a.into)?;
    let manifest_dir = fs::canonicalize(&a.manifest)?.parent().map(Path::to_path_buf);
    if let Some(dir) = m.working_directory.as_ref().filter(|d| d.is_dir()).or(manifest_dir.as_ref()) {
        std::env::set_current_dir(dir).with_context(|| format!("entering {}", dir.display()))?;
    }
    let args = redirect_outputs(&m.args, &into)?;
    let cli = Cli::try_parse_from(std::iter::once("qttosc".to_string()).chain(args.iter().cloned()))
        .map_err(|e| anyhow!("manifest arguments no longer parse: {e}"))?;
    let status = run(cli.command, &args)?;
    let mut differ = Vec::new();
    for old in &m.outputs {
        let name = old.file_name().ok_or_else(|| anyhow!("output {} has no file name", old.display()))?;
        let new = into.join(name);
        let same =
            same_output(old, &new).with_context(|| format!("comparing {} with {}", old.display(), new.display()))?;
        eprintln!("{}: {}", if same { "identical" } else { "differs" }, old.display());
        if !same {
            differ.push(old.display().to_string());
        }
    }
    if !differ.is_empty() {
        return Err(anyhow!(NumericalFailure(format!("replay outputs differ: {}", differ.join(", ")))));
    }
    Ok(status)
}
