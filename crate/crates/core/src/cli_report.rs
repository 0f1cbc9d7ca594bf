//! Batch driver behind the `gammabarnes` binary: the case-file parser, the
//! `verify`, `sweep` and `selftest` commands, and the JSONL and text
//! renderers. The case-file grammar is described in `docs/config.md`.
//!
//! Commands return their rendered output and an exit code instead of doing
//! I/O, so the binary stays a thin shell and the tests can inspect bytes.

use crate::error::{Error, Result};
use crate::gamma_core::{bgamma_with, nonpositive_integer, sign_pow, FieldPoint, GammaKernel, GammaValue, Index};
use crate::identity_suite::{
    self as suite, IdentityCase, IdentityKind, IdentityTag, Params, ParityVariant, Strategy, VerificationReport,
};
use crate::mb_quadrature::{MeasureSector, MeasureSpec, ValueWithError};
use crate::plane_integrals::{
    self as plane, ClassicalCase, ClassicalKind, ClassicalParams, PlaneMethod, QuasiIdentity,
};
use crate::propagators::{d_prop, s_prop, s_prop_field, PlanePoint};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

type C = Complex64;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// ------------------------------------------------------------------ JSON

/// Minimal ordered JSON tree. Reals are written with 17 significant digits
/// so that every binary64 value round-trips; non-finite reals become null.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    fn obj(fields: Vec<(&str, Json)>) -> Json {
        Json::Obj(fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    fn complex(z: C) -> Json {
        Json::Arr(vec![Json::Real(z.re), Json::Real(z.im)])
    }

    fn strs(items: &[String]) -> Json {
        Json::Arr(items.iter().map(|s| Json::Str(s.clone())).collect())
    }

    pub fn write(&self, out: &mut String) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Json::Real(x) if x.is_finite() => {
                let _ = write!(out, "{x:.16e}");
            }
            Json::Real(_) => out.push_str("null"),
            Json::Str(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
            Json::Arr(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    v.write(out);
                }
                out.push(']');
            }
            Json::Obj(fields) => {
                out.push('{');
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                    out.push(':');
                    v.write(out);
                }
                out.push('}');
            }
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = String::new();
        self.write(&mut s);
        s
    }
}

fn vwe_json(v: &ValueWithError) -> Json {
    Json::obj(vec![
        ("value", Json::complex(v.value)),
        ("tail_bound", Json::Real(v.tail_bound)),
        ("quad_error", Json::Real(v.quad_error)),
    ])
}

fn field_point_json(p: &FieldPoint) -> Json {
    Json::obj(vec![("twice_n", Json::Int(p.twice_n)), ("nu", Json::complex(p.nu))])
}

fn index_json(a: &Index) -> Json {
    Json::obj(vec![("twice_m", Json::Int(a.twice_m)), ("sigma", Json::complex(a.sigma))])
}

fn sector_str(s: MeasureSector) -> &'static str {
    match s {
        MeasureSector::Integer => "INTEGER",
        MeasureSector::HalfInteger => "HALF_INTEGER",
    }
}

fn strategy_str(s: Strategy) -> &'static str {
    match s {
        Strategy::Quadrature => "QUADRATURE",
        Strategy::Determinant => "DETERMINANT",
        Strategy::Both => "BOTH",
    }
}

fn method_str(m: PlaneMethod) -> &'static str {
    match m {
        PlaneMethod::PolarGrid => "POLAR_GRID",
        PlaneMethod::Qmc => "QMC",
    }
}

fn spec_json(s: &MeasureSpec) -> Json {
    Json::obj(vec![
        ("sector", Json::Str(sector_str(s.sector).into())),
        ("n_max", Json::Int(s.n_max as i64)),
        ("t_max", Json::Real(s.t_max)),
        ("panels", Json::Int(s.panels as i64)),
        ("nodes_per_panel", Json::Int(s.nodes_per_panel as i64)),
        ("rel_tol", Json::Real(s.rel_tol)),
    ])
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Jsonl,
    Text,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsonl" => Ok(OutputFormat::Jsonl),
            "text" => Ok(OutputFormat::Text),
            _ => Err(Error::Config(format!("unknown format '{s}' (expected jsonl or text)"))),
        }
    }
}

/// One case of a suite, with the line its block starts on.
#[derive(Debug, Clone, PartialEq)]
pub enum CaseSpec {
    Field {
        case: IdentityCase,
        /// Seed handed to the sampler, when the parameters were sampled.
        sample_seed: Option<u64>,
        line: usize,
    },
    Plane {
        case: ClassicalCase,
        line: usize,
    },
}

impl CaseSpec {
    fn line(&self) -> usize {
        match self {
            CaseSpec::Field { line, .. } | CaseSpec::Plane { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub cases: Vec<CaseSpec>,
    pub global_seed: u64,
    /// None means the available parallelism.
    pub worker_count: Option<usize>,
    /// None or "-" means standard output.
    pub output_path: Option<String>,
    pub format: OutputFormat,
}

/// A block of `key = value` lines.
#[derive(Debug, Clone)]
struct Block {
    kind: String,
    line: usize,
    entries: Vec<(String, String, usize)>,
}

impl Block {
    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries.iter().find(|(k, _, _)| k == key).map(|(_, v, l)| (v.as_str(), *l))
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: field '{key}': {e}"))),
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _, line) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Config(format!("line {line}: unknown field '{k}' in {} block", self.kind)));
            }
        }
        Ok(())
    }
}

/// Splits the text into top-level entries and blocks.
fn tokenize(text: &str) -> Result<(Vec<(String, String, usize)>, Vec<Block>)> {
    let mut top = Vec::new();
    let mut blocks = Vec::new();
    let mut current: Option<Block> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content == "}" {
            match current.take() {
                Some(b) => blocks.push(b),
                None => return Err(Error::Config(format!("line {line}: '}}' without an open block"))),
            }
            continue;
        }
        if let Some(head) = content.strip_suffix('{') {
            let kind = head.trim();
            if current.is_some() {
                return Err(Error::Config(format!("line {line}: blocks cannot nest")));
            }
            if kind != "case" && kind != "plane" {
                return Err(Error::Config(format!("line {line}: unknown block '{kind}' (expected case or plane)")));
            }
            current = Some(Block {
                kind: kind.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(Error::Config(format!("line {line}: expected 'key = value'")));
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(Error::Config(format!("line {line}: empty key")));
        }
        let target = match current.as_mut() {
            Some(b) => &mut b.entries,
            None => &mut top,
        };
        if target.iter().any(|(key, _, _)| *key == k) {
            return Err(Error::Config(format!("line {line}: field '{k}' given twice")));
        }
        target.push((k, v, line));
    }
    if let Some(b) = current {
        return Err(Error::Config(format!("line {}: {} block is never closed", b.line, b.kind)));
    }
    Ok((top, blocks))
}

/// Parses `a`, `bi`, `a+bi` or `a-bi` (also `i`, `-i`).
pub fn parse_complex(s: &str) -> Result<C> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::Config(format!("'{s}' is not a complex number"));
    if t.is_empty() {
        return Err(bad());
    }
    let real = |x: &str| x.parse::<f64>().map_err(|_| bad());
    let imag = |x: &str| -> Result<f64> {
        match x {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => real(x),
        }
    };
    let Some(body) = t.strip_suffix('i') else {
        return Ok(C::new(real(&t)?, 0.0));
    };
    // split at the last sign that is not leading and not an exponent sign
    let bytes = body.as_bytes();
    let mut cut = None;
    for k in (1..bytes.len()).rev() {
        if (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E') {
            cut = Some(k);
            break;
        }
    }
    match cut {
        Some(k) => Ok(C::new(real(&body[..k])?, imag(&body[k..])?)),
        None => Ok(C::new(0.0, imag(body)?)),
    }
}

fn split_list(v: &str) -> Vec<&str> {
    v.split(';').map(str::trim).filter(|x| !x.is_empty()).collect()
}

/// `(k, c)` with an integer k and a complex c.
fn parse_pair(s: &str) -> Result<(i64, C)> {
    let bad = || Error::Config(format!("'{s}' is not a pair (twice-integer, complex)"));
    let inner = s.trim().strip_prefix('(').and_then(|x| x.strip_suffix(')')).ok_or_else(bad)?;
    let (a, b) = inner.split_once(',').ok_or_else(bad)?;
    let k = a.trim().parse::<i64>().map_err(|_| bad())?;
    Ok((k, parse_complex(b)?))
}

fn parse_field_points(block: &Block, key: &str) -> Result<Vec<FieldPoint>> {
    let Some((v, line)) = block.get(key) else {
        return Ok(Vec::new());
    };
    split_list(v)
        .into_iter()
        .map(|x| parse_pair(x).map(|(k, c)| FieldPoint::new(k, c)))
        .collect::<Result<_>>()
        .map_err(|e| Error::Config(format!("line {line}: field '{key}': {e}")))
}

fn parse_indices(block: &Block, key: &str) -> Result<Vec<Index>> {
    let Some((v, line)) = block.get(key) else {
        return Ok(Vec::new());
    };
    split_list(v)
        .into_iter()
        .map(|x| parse_pair(x).map(|(k, c)| Index::new(k, c)))
        .collect::<Result<_>>()
        .map_err(|e| Error::Config(format!("line {line}: field '{key}': {e}")))
}

fn parse_plane_points(block: &Block, key: &str) -> Result<Vec<PlanePoint>> {
    let Some((v, line)) = block.get(key) else {
        return Ok(Vec::new());
    };
    split_list(v)
        .into_iter()
        .map(|x| parse_complex(x).map(PlanePoint::from_complex))
        .collect::<Result<_>>()
        .map_err(|e| Error::Config(format!("line {line}: field '{key}': {e}")))
}

fn parse_sector(s: &str) -> Result<MeasureSector> {
    match s.trim().to_ascii_uppercase().as_str() {
        "INTEGER" => Ok(MeasureSector::Integer),
        "HALF_INTEGER" => Ok(MeasureSector::HalfInteger),
        _ => Err(Error::Config(format!("unknown sector '{s}' (expected INTEGER or HALF_INTEGER)"))),
    }
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    match s.trim().to_ascii_uppercase().as_str() {
        "QUADRATURE" => Ok(Strategy::Quadrature),
        "DETERMINANT" => Ok(Strategy::Determinant),
        "BOTH" => Ok(Strategy::Both),
        _ => Err(Error::Config(format!("unknown strategy '{s}'"))),
    }
}

fn with_line<T>(line: usize, what: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Config(format!("line {line}: {what}: {}: {e}", e.name())))
}

/// Seed handed to the sampler for the k-th case drawn from `sample = s`.
pub fn sample_seed(global_seed: u64, sample: u64, k: u64) -> u64 {
    global_seed.wrapping_mul(1_000_003).wrapping_add(sample).wrapping_add(k)
}

const CASE_KEYS: [&str; 18] = [
    "identity",
    "n",
    "sector",
    "variant",
    "strategy",
    "tolerance",
    "z",
    "w",
    "alpha",
    "m",
    "sample",
    "count",
    "n_max",
    "t_max",
    "panels",
    "nodes_per_panel",
    "rel_tol",
    "label",
];

fn field_cases(b: &Block, global_seed: u64) -> Result<Vec<CaseSpec>> {
    b.check_keys(&CASE_KEYS)?;
    let (tag_s, tag_line) = b
        .get("identity")
        .ok_or_else(|| Error::Config(format!("line {}: case block needs 'identity'", b.line)))?;
    let tag = with_line(tag_line, "field 'identity'", IdentityTag::from_str(tag_s))?;
    let variant = match b.get("variant") {
        Some((v, l)) => Some(with_line(l, "field 'variant'", ParityVariant::from_str(v))?),
        None => None,
    };
    let sector = match (b.get("sector"), variant) {
        (Some((v, l)), _) => with_line(l, "field 'sector'", parse_sector(v))?,
        (None, Some(v)) => v.sector(),
        (None, None) => MeasureSector::Integer,
    };
    // reduced integrals are (N−1)-fold, so N = 1 would leave nothing to integrate
    let default_n = match tag {
        IdentityTag::StarTriangleD
        | IdentityTag::ReducedI
        | IdentityTag::ReducedIGamma
        | IdentityTag::ReducedII
        | IdentityTag::ReducedIIGamma => 2,
        _ => 1,
    };
    let n: usize = b.parse("n")?.unwrap_or(default_n);
    let kind = IdentityKind {
        tag,
        n,
        sector,
        parity_variant: variant,
    };
    with_line(b.line, "case kind", kind.validate())?;
    let strategy = match b.get("strategy") {
        Some((v, l)) => with_line(l, "field 'strategy'", parse_strategy(v))?,
        None => Strategy::Quadrature,
    };
    let m: usize = b.parse("m")?.unwrap_or(0);
    let sample: Option<u64> = b.parse("sample")?;
    let count: u64 = b.parse("count")?.unwrap_or(1);
    let explicit = ["z", "w", "alpha"].iter().any(|k| b.get(k).is_some());
    if sample.is_some() && explicit {
        return Err(Error::Config(format!("line {}: give either 'sample' or explicit z/w/alpha, not both", b.line)));
    }
    if count == 0 {
        return Err(Error::Config(format!("line {}: field 'count' must be positive", b.line)));
    }
    if sample.is_none() && b.get("count").is_some() {
        return Err(Error::Config(format!("line {}: field 'count' needs 'sample'", b.line)));
    }
    let mut drafts: Vec<(Params, Option<u64>)> = Vec::new();
    match sample {
        Some(s) => {
            for k in 0..count {
                let seed = sample_seed(global_seed, s, k);
                let p = with_line(b.line, "sampling", suite::sample_params_with_m(&kind, m, seed))?;
                drafts.push((p, Some(seed)));
            }
        }
        None => {
            let params = Params {
                z: parse_field_points(b, "z")?,
                w: parse_field_points(b, "w")?,
                alpha: parse_indices(b, "alpha")?,
                m,
            };
            drafts.push((params, None));
        }
    }
    let mut out = Vec::new();
    for (params, sample_seed) in drafts {
        with_line(b.line, "case parameters", suite::check_constraints(&kind, &params))?;
        let mut case = IdentityCase::new(kind, params, strategy);
        if let Some(t) = b.parse::<f64>("tolerance")? {
            if !(t > 0.0) {
                return Err(Error::Config(format!("line {}: field 'tolerance' must be positive", b.line)));
            }
            case.tolerance = t;
        }
        if let Some(v) = b.parse("n_max")? {
            case.spec.n_max = v;
        }
        if let Some(v) = b.parse("t_max")? {
            case.spec.t_max = v;
        }
        if let Some(v) = b.parse("panels")? {
            case.spec.panels = v;
        }
        if let Some(v) = b.parse("nodes_per_panel")? {
            case.spec.nodes_per_panel = v;
        }
        if let Some(v) = b.parse("rel_tol")? {
            case.spec.rel_tol = v;
        }
        with_line(b.line, "measure spec", case.spec.validate())?;
        out.push(CaseSpec::Field {
            case,
            sample_seed,
            line: b.line,
        });
    }
    Ok(out)
}

const PLANE_KEYS: [&str; 12] = [
    "identity", "n", "m", "z", "alpha", "method", "cells", "samples", "seed", "tolerance", "r_max", "label",
];

fn plane_case(b: &Block, global_seed: u64) -> Result<CaseSpec> {
    b.check_keys(&PLANE_KEYS)?;
    let (tag_s, tag_line) = b
        .get("identity")
        .ok_or_else(|| Error::Config(format!("line {}: plane block needs 'identity'", b.line)))?;
    let kind = with_line(tag_line, "field 'identity'", ClassicalKind::from_str(tag_s))?;
    let params = ClassicalParams {
        z: parse_plane_points(b, "z")?,
        alpha: parse_indices(b, "alpha")?,
        n: b.parse("n")?.unwrap_or(1),
        m: b.parse("m")?.unwrap_or(0),
    };
    with_line(b.line, "plane parameters", plane::check_classical(kind, &params))?;
    let mut case = ClassicalCase::new(kind, params);
    if let Some((v, l)) = b.get("method") {
        case.scheme.method = with_line(l, "field 'method'", PlaneMethod::from_str(v))?;
        if case.scheme.method == PlaneMethod::Qmc {
            case.scheme.cells_or_samples = plane::PlaneScheme::DEFAULT_SAMPLES;
        }
    }
    let cells: Option<u64> = b.parse("cells")?;
    let samples: Option<u64> = b.parse("samples")?;
    match (case.scheme.method, cells, samples) {
        (PlaneMethod::PolarGrid, _, Some(_)) => {
            return Err(Error::Config(format!("line {}: 'samples' applies to QMC; use 'cells'", b.line)))
        }
        (PlaneMethod::Qmc, Some(_), _) => {
            return Err(Error::Config(format!("line {}: 'cells' applies to POLAR_GRID; use 'samples'", b.line)))
        }
        (_, Some(c), _) | (_, _, Some(c)) => case.scheme.cells_or_samples = c,
        _ => {}
    }
    case.scheme.seed = b.parse("seed")?.unwrap_or(global_seed);
    if let Some(r) = b.parse("r_max")? {
        case.scheme.r_max = r;
    }
    if let Some(t) = b.parse::<f64>("tolerance")? {
        case.tolerance = t;
    }
    if case.scheme.cells_or_samples == 0 || !(case.tolerance > 0.0) {
        return Err(Error::Config(format!("line {}: cells/samples and tolerance must be positive", b.line)));
    }
    Ok(CaseSpec::Plane { case, line: b.line })
}

/// Parses a case file.
pub fn parse_config(text: &str) -> Result<SuiteConfig> {
    let (top, blocks) = tokenize(text)?;
    let mut global_seed = 0u64;
    let mut worker_count = None;
    let mut output_path = None;
    let mut format = OutputFormat::Jsonl;
    for (k, v, line) in &top {
        let bad = |e: String| Error::Config(format!("line {line}: field '{k}': {e}"));
        match k.as_str() {
            "seed" => global_seed = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "workers" => {
                let w: usize = v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
                if w == 0 {
                    return Err(bad("must be positive".into()));
                }
                worker_count = Some(w);
            }
            "output" => output_path = Some(v.clone()),
            "format" => format = v.parse().map_err(|e: Error| bad(e.to_string()))?,
            _ => return Err(Error::Config(format!("line {line}: unknown top-level field '{k}'"))),
        }
    }
    let mut cases = Vec::new();
    for b in &blocks {
        match b.kind.as_str() {
            "case" => cases.extend(field_cases(b, global_seed)?),
            _ => cases.push(plane_case(b, global_seed)?),
        }
    }
    if cases.is_empty() {
        return Err(Error::Config("the case list is empty".into()));
    }
    Ok(SuiteConfig {
        cases,
        global_seed,
        worker_count,
        output_path,
        format,
    })
}

// ---------------------------------------------------------------- verify

/// Outcome of one case: the report, or the error that stopped it.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub index: usize,
    pub report: std::result::Result<VerificationReport, Error>,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        matches!(&self.report, Ok(r) if r.passed)
    }
}

fn run_case(spec: &CaseSpec) -> std::result::Result<VerificationReport, Error> {
    match spec {
        CaseSpec::Field { case, .. } => suite::verify(case),
        CaseSpec::Plane { case, .. } => plane::eval_classical(case),
    }
}

/// Runs `f` on a pool of the requested size; None uses the global pool.
fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        None => f(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
    }
}

/// Evaluates every case; the result order is the case order.
pub fn run_suite(config: &SuiteConfig) -> Vec<CaseOutcome> {
    with_workers(config.worker_count, || {
        config
            .cases
            .par_iter()
            .enumerate()
            .map(|(index, spec)| CaseOutcome {
                index,
                report: run_case(spec),
            })
            .collect()
    })
}

fn identity_name(spec: &CaseSpec) -> String {
    match spec {
        CaseSpec::Field { case, .. } => case.kind.tag.to_string(),
        CaseSpec::Plane { case, .. } => case.kind.to_string(),
    }
}

fn case_fields(spec: &CaseSpec) -> Vec<(&'static str, Json)> {
    match spec {
        CaseSpec::Field {
            case, sample_seed, ..
        } => {
            let p = &case.params;
            vec![
                ("identity", Json::Str(case.kind.tag.to_string())),
                ("n", Json::Int(case.kind.n as i64)),
                ("sector", Json::Str(sector_str(case.kind.sector).into())),
                (
                    "parity_variant",
                    case.kind.parity_variant.map_or(Json::Null, |v| Json::Str(v.as_str().into())),
                ),
                ("strategy", Json::Str(strategy_str(case.strategy).into())),
                ("tolerance", Json::Real(case.tolerance)),
                ("sample_seed", sample_seed.map_or(Json::Null, |s| Json::Int(s as i64))),
                (
                    "params",
                    Json::obj(vec![
                        ("z", Json::Arr(p.z.iter().map(field_point_json).collect())),
                        ("w", Json::Arr(p.w.iter().map(field_point_json).collect())),
                        ("alpha", Json::Arr(p.alpha.iter().map(index_json).collect())),
                        ("m", Json::Int(p.m as i64)),
                    ]),
                ),
                ("spec", spec_json(&case.spec)),
            ]
        }
        CaseSpec::Plane { case, .. } => {
            let p = &case.params;
            vec![
                ("identity", Json::Str(case.kind.to_string())),
                ("n", Json::Int(p.n as i64)),
                ("m", Json::Int(p.m as i64)),
                ("tolerance", Json::Real(case.tolerance)),
                (
                    "params",
                    Json::obj(vec![
                        ("z", Json::Arr(p.z.iter().map(|x| Json::complex(x.z)).collect())),
                        ("alpha", Json::Arr(p.alpha.iter().map(index_json).collect())),
                    ]),
                ),
                (
                    "scheme",
                    Json::obj(vec![
                        ("method", Json::Str(method_str(case.scheme.method).into())),
                        ("r_max", Json::Real(case.scheme.r_max)),
                        ("cells_or_samples", Json::Int(case.scheme.cells_or_samples as i64)),
                        ("seed", Json::Int(case.scheme.seed as i64)),
                    ]),
                ),
            ]
        }
    }
}

/// The JSONL record of one case. `wall_time` is null unless `timing`.
pub fn case_record(config: &SuiteConfig, outcome: &CaseOutcome, timing: bool) -> Json {
    let spec = &config.cases[outcome.index];
    let mut fields = vec![
        ("record", Json::Str("case".into())),
        ("index", Json::Int(outcome.index as i64)),
        ("seed", Json::Int(config.global_seed as i64)),
    ];
    fields.extend(case_fields(spec));
    match &outcome.report {
        Ok(r) => {
            fields.extend([
                ("lhs", vwe_json(&r.lhs)),
                ("rhs", vwe_json(&r.rhs)),
                ("residual", Json::Real(r.residual)),
                ("passed", Json::Bool(r.passed)),
                (
                    "alternates",
                    Json::Arr(
                        r.alternates
                            .iter()
                            .map(|(name, v)| Json::obj(vec![("name", Json::Str(name.clone())), ("value", vwe_json(v))]))
                            .collect(),
                    ),
                ),
                ("flags", Json::strs(&r.flags)),
                ("notes", Json::strs(&r.notes)),
                ("case_digest", Json::Str(r.case_digest.clone())),
                ("error", Json::Null),
                ("wall_time", if timing { Json::Real(r.wall_time) } else { Json::Null }),
            ]);
        }
        Err(e) => {
            fields.extend([
                ("lhs", Json::Null),
                ("rhs", Json::Null),
                ("residual", Json::Null),
                ("passed", Json::Bool(false)),
                ("alternates", Json::Arr(vec![])),
                ("flags", Json::Arr(vec![])),
                ("notes", Json::Arr(vec![])),
                ("case_digest", Json::Null),
                ("error", Json::Str(format!("{}: {e}", e.name()))),
                ("wall_time", Json::Null),
            ]);
        }
    }
    fields.push(("version", Json::Str(VERSION.into())));
    Json::obj(fields)
}

pub fn render_text(config: &SuiteConfig, outcomes: &[CaseOutcome], timing: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:<18} {:>4}  {:<13} {:>10}  {:>9}  {:<6}{}",
        "#",
        "identity",
        "line",
        "sector",
        "residual",
        "tolerance",
        "status",
        if timing { "  time/s" } else { "" }
    );
    for o in outcomes {
        let spec = &config.cases[o.index];
        let (sector, tol) = match spec {
            CaseSpec::Field { case, .. } => (sector_str(case.kind.sector), case.tolerance),
            CaseSpec::Plane { case, .. } => ("-", case.tolerance),
        };
        match &o.report {
            Ok(r) => {
                let _ = write!(
                    out,
                    "{:>4}  {:<18} {:>4}  {:<13} {:>10.3e}  {:>9.1e}  {:<6}",
                    o.index,
                    identity_name(spec),
                    spec.line(),
                    sector,
                    r.residual,
                    tol,
                    if r.passed { "pass" } else { "FAIL" }
                );
                if timing {
                    let _ = write!(out, "  {:.2}", r.wall_time);
                }
                out.push('\n');
                for f in &r.flags {
                    let _ = writeln!(out, "      flag: {f}");
                }
            }
            Err(e) => {
                let _ = writeln!(
                    out,
                    "{:>4}  {:<18} {:>4}  {:<13} {:>10}  {:>9.1e}  ERROR  {}: {e}",
                    o.index,
                    identity_name(spec),
                    spec.line(),
                    sector,
                    "-",
                    tol,
                    e.name()
                );
            }
        }
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    let _ = writeln!(out, "{passed}/{} passed (seed {})", outcomes.len(), config.global_seed);
    out
}

/// Options shared by the commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workers: Option<usize>,
    pub format: Option<OutputFormat>,
    pub timing: bool,
}

/// Rendered output and exit code of a command.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl CommandOutput {
    fn config_error(e: &Error) -> Self {
        CommandOutput {
            stdout: String::new(),
            stderr: format!("error[{}]: {e}\n", e.name()),
            code: EXIT_CONFIG,
        }
    }
}

/// `verify`: parses and runs a case file.
pub fn cmd_verify(config_text: &str, opts: &RunOptions) -> (CommandOutput, Option<SuiteConfig>) {
    let mut config = match parse_config(config_text) {
        Ok(c) => c,
        Err(e) => return (CommandOutput::config_error(&e), None),
    };
    if opts.workers.is_some() {
        config.worker_count = opts.workers;
    }
    if let Some(f) = opts.format {
        config.format = f;
    }
    let outcomes = run_suite(&config);
    let stdout = match config.format {
        OutputFormat::Jsonl => outcomes
            .iter()
            .map(|o| case_record(&config, o, opts.timing).to_line() + "\n")
            .collect(),
        OutputFormat::Text => render_text(&config, &outcomes, opts.timing),
    };
    let mut stderr = String::new();
    for o in &outcomes {
        if let Err(e) = &o.report {
            let _ = writeln!(stderr, "case {} (line {}): {}: {e}", o.index, config.cases[o.index].line(), e.name());
        }
    }
    let code = if outcomes.iter().all(CaseOutcome::passed) { EXIT_OK } else { EXIT_FAILED };
    (CommandOutput { stdout, stderr, code }, Some(config))
}

// ----------------------------------------------------------------- sweep

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Geometric,
}

impl FromStr for Spacing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Spacing::Linear),
            "geometric" => Ok(Spacing::Geometric),
            _ => Err(Error::Config(format!("unknown spacing '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRequest {
    pub identity: String,
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    pub spacing: Spacing,
    /// Optional case file whose first block supplies the base case.
    pub config_text: Option<String>,
    pub seed: u64,
}

/// The sweep grid. Geometric spacing for ζ acts on |ζ − 1|.
pub fn sweep_values(param: &str, from: f64, to: f64, steps: usize, spacing: Spacing) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Config("steps must be positive".into()));
    }
    if !from.is_finite() || !to.is_finite() {
        return Err(Error::Config("range ends must be finite".into()));
    }
    let zeta = param == "zeta";
    let (a, b) = if zeta { (from - 1.0, to - 1.0) } else { (from, to) };
    if spacing == Spacing::Geometric && !(a * b > 0.0) {
        return Err(Error::Config("geometric spacing needs a range of one sign (away from ζ = 1 for zeta)".into()));
    }
    let vals: Vec<f64> = (0..steps)
        .map(|k| {
            let t = if steps == 1 { 0.0 } else { k as f64 / (steps - 1) as f64 };
            match spacing {
                Spacing::Linear => a + (b - a) * t,
                Spacing::Geometric => a * (b / a).powf(t),
            }
        })
        .collect();
    // powf leaves 63.99999999999999 where the user meant 64; L must land
    // on exact integers for the plane-to-field map
    let snap = |x: f64| if (x - x.round()).abs() <= 1e-12 * x.abs().max(1.0) { x.round() } else { x };
    Ok(if zeta { vals.iter().map(|e| 1.0 + e).collect() } else { vals.into_iter().map(snap).collect() })
}

fn default_quasi_case(identity: QuasiIdentity) -> (Vec<PlanePoint>, Vec<Index>) {
    match identity {
        QuasiIdentity::Chain => (
            vec![PlanePoint::new(0.5, 0.25), PlanePoint::new(-0.5, -0.25)],
            vec![Index::real(0, 0.7), Index::int(2, C::new(0.6, 0.1))],
        ),
        QuasiIdentity::StarTriangle => (
            vec![PlanePoint::new(0.5, 0.25), PlanePoint::new(-0.5, 0.0), PlanePoint::new(0.0, -0.75)],
            vec![
                Index::int(2, C::new(0.7, 0.1)),
                Index::int(-2, C::new(0.6, -0.3)),
                Index::int(0, C::new(0.7, 0.2)),
            ],
        ),
    }
}

fn sweep_point(identity: &str, param: &str, value: f64, seed: u64, extra: Vec<(&str, Json)>) -> Json {
    let mut fields = vec![
        ("record", Json::Str("sweep_point".into())),
        ("identity", Json::Str(identity.into())),
        ("param", Json::Str(param.into())),
        ("value", Json::Real(value)),
        ("seed", Json::Int(seed as i64)),
    ];
    fields.extend(extra);
    fields.push(("version", Json::Str(VERSION.into())));
    Json::obj(fields)
}

fn sweep_summary(identity: &str, param: &str, seed: u64, passed: bool, extra: Vec<(&str, Json)>) -> Json {
    let mut fields = vec![
        ("record", Json::Str("sweep_summary".into())),
        ("identity", Json::Str(identity.into())),
        ("param", Json::Str(param.into())),
        ("seed", Json::Int(seed as i64)),
        ("passed", Json::Bool(passed)),
    ];
    fields.extend(extra);
    fields.push(("version", Json::Str(VERSION.into())));
    Json::obj(fields)
}

/// Rows of a sweep: JSONL records plus a text table.
struct SweepRows {
    records: Vec<Json>,
    table: String,
    passed: bool,
}

fn zeta_sweep(req: &SweepRequest, values: &[f64], base: Option<CaseSpec>) -> Result<SweepRows> {
    if values.len() < 3 {
        return Err(Error::Config("a zeta sweep needs at least 3 steps".into()));
    }
    if values.iter().any(|z| (z - 1.0).abs() >= 1.0) {
        return Err(Error::Config("zeta values must lie within 1 of the pole at zeta = 1".into()));
    }
    let case = match base {
        Some(CaseSpec::Field { case, .. }) => IdentityCase {
            kind: IdentityKind {
                tag: IdentityTag::ZetaPole,
                ..case.kind
            },
            ..case
        },
        Some(CaseSpec::Plane { line, .. }) => {
            return Err(Error::Config(format!("line {line}: a zeta sweep needs a case block, not a plane block")))
        }
        None => IdentityCase::sampled(IdentityKind::new(IdentityTag::ZetaPole, 1, MeasureSector::Integer), req.seed, Strategy::Quadrature)?,
    };
    let eps: Vec<f64> = values.iter().map(|z| (z - 1.0).abs()).collect();
    let rep = suite::zeta_pole_check(&case, &eps)?;
    let mut records = Vec::new();
    let mut table = format!("{:>10}  {:>10}  {:>26}  {:>9}\n", "zeta", "eps", "|zeta-1|*I", "error");
    for (k, z) in values.iter().enumerate() {
        let scaled = rep.integrals[k].value * eps[k];
        let err = rep.integrals[k].total_error() * eps[k];
        records.push(sweep_point(
            &req.identity,
            &req.param,
            *z,
            req.seed,
            vec![
                ("eps", Json::Real(eps[k])),
                ("integral", vwe_json(&rep.integrals[k])),
                ("scaled", Json::complex(scaled)),
                ("scaled_error", Json::Real(err)),
                ("scaled_q", Json::complex(rep.scaled_q[k])),
            ],
        ));
        let _ = writeln!(table, "{z:>10.5}  {:>10.5}  {:>12.6e}{:>+12.6e}i  {err:>9.2e}", eps[k], scaled.re, scaled.im);
    }
    let passed = rep.residue_residual <= case.tolerance;
    records.push(sweep_summary(
        &req.identity,
        &req.param,
        req.seed,
        passed,
        vec![
            ("residue", Json::complex(rep.residue)),
            ("residue_error", Json::Real(rep.residue_error)),
            ("product", Json::complex(rep.product)),
            ("residue_residual", Json::Real(rep.residue_residual)),
            ("q_limit", Json::complex(rep.q_limit)),
            ("q_residual", Json::Real(rep.q_residual)),
            ("r_squared", Json::Real(rep.r_squared)),
        ],
    ));
    let _ = writeln!(
        table,
        "residue {:.6e}{:+.6e}i vs product {:.6e}{:+.6e}i: residual {:.2e} ({})",
        rep.residue.re,
        rep.residue.im,
        rep.product.re,
        rep.product.im,
        rep.residue_residual,
        if passed { "pass" } else { "FAIL" }
    );
    Ok(SweepRows { records, table, passed })
}

fn quasi_sweep(req: &SweepRequest, identity: QuasiIdentity, values: &[f64], base: Option<CaseSpec>) -> Result<SweepRows> {
    let (z, alpha) = match base {
        Some(CaseSpec::Plane { case, .. }) => (case.params.z, case.params.alpha),
        Some(CaseSpec::Field { line, .. }) => {
            return Err(Error::Config(format!("line {line}: an L sweep takes its points from a plane block")))
        }
        None => default_quasi_case(identity),
    };
    let rep = plane::quasiclassical_check(identity, &z, &alpha, values, &MeasureSpec::default())?;
    let mut records = Vec::new();
    let mut table = format!("{:>8}  {:>12}  {:>9}\n", "L", "deviation", "error");
    for p in &rep.points {
        let rel_err = p.field_lhs.total_error() / p.field_lhs.value.norm();
        records.push(sweep_point(
            &req.identity,
            &req.param,
            p.l,
            req.seed,
            vec![
                ("field_lhs", vwe_json(&p.field_lhs)),
                ("rescaled", Json::complex(p.rescaled)),
                ("deviation", Json::Real(p.deviation)),
            ],
        ));
        let _ = writeln!(table, "{:>8}  {:>12.4e}  {rel_err:>9.2e}", p.l, p.deviation);
    }
    let passed = rep.monotone && rep.exponent <= -0.8;
    records.push(sweep_summary(
        &req.identity,
        &req.param,
        req.seed,
        passed,
        vec![
            ("plane_rhs", Json::complex(rep.plane_rhs)),
            ("exponent", Json::Real(rep.exponent)),
            ("monotone", Json::Bool(rep.monotone)),
        ],
    ));
    let _ = writeln!(
        table,
        "fitted exponent {:.3}, monotone {} ({})",
        rep.exponent,
        rep.monotone,
        if passed { "pass" } else { "FAIL" }
    );
    Ok(SweepRows { records, table, passed })
}

/// `sweep`: residual or deviation against one parameter. Supported are
/// `zeta` for GUSTAFSON_I / ZETA_POLE and `L` for CHAIN / STAR_TRIANGLE.
pub fn cmd_sweep(req: &SweepRequest, opts: &RunOptions) -> CommandOutput {
    let prepared = (|| -> Result<(Vec<f64>, Option<CaseSpec>)> {
        let values = sweep_values(&req.param, req.from, req.to, req.steps, req.spacing)?;
        let base = match &req.config_text {
            Some(text) => Some(parse_config(text)?.cases.remove(0)),
            None => None,
        };
        Ok((values, base))
    })();
    let (values, base) = match prepared {
        Ok(v) => v,
        Err(e) => return CommandOutput::config_error(&e),
    };
    let tag = req.identity.trim().to_ascii_uppercase();
    let run = match (tag.as_str(), req.param.as_str()) {
        ("GUSTAFSON_I" | "ZETA_POLE", "zeta") => with_workers(opts.workers, || zeta_sweep(req, &values, base)),
        (_, "L") => match QuasiIdentity::from_str(&tag) {
            Ok(id) => with_workers(opts.workers, || quasi_sweep(req, id, &values, base)),
            Err(_) => {
                return CommandOutput::config_error(&Error::Config(format!(
                    "parameter 'L' is not sweepable for {tag}"
                )))
            }
        },
        _ => {
            return CommandOutput::config_error(&Error::Config(format!(
                "parameter '{}' is not sweepable for {tag} (zeta: GUSTAFSON_I, ZETA_POLE; L: CHAIN, STAR_TRIANGLE)",
                req.param
            )))
        }
    };
    match run {
        Ok(rows) => CommandOutput {
            stdout: match opts.format.unwrap_or(OutputFormat::Jsonl) {
                OutputFormat::Jsonl => rows.records.iter().map(|r| r.to_line() + "\n").collect(),
                OutputFormat::Text => rows.table,
            },
            stderr: String::new(),
            code: if rows.passed { EXIT_OK } else { EXIT_FAILED },
        },
        Err(e @ (Error::Config(_) | Error::Constraint(_) | Error::Sector(_) | Error::SectorMismatch(_))) => {
            CommandOutput::config_error(&e)
        }
        Err(e) => CommandOutput {
            stdout: String::new(),
            stderr: format!("error[{}]: {e}\n", e.name()),
            code: EXIT_FAILED,
        },
    }
}

// -------------------------------------------------------------- selftest

/// One invariant of the self-test battery.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantResult {
    pub name: &'static str,
    pub checks: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub failure: Option<String>,
}

fn rel_err(a: C, b: C) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Random even-[u] field point with |ν| ≤ 5 and a moderate **Γ** value.
fn battery_point(rng: &mut ChaCha8Rng) -> FieldPoint {
    let twice_n = 2 * rng.gen_range(-4i64..=4);
    FieldPoint::new(twice_n, C::new(rng.gen_range(-3.0..3.0), rng.gen_range(-4.0..4.0)))
}

fn finite_moderate(v: &GammaValue) -> Option<C> {
    v.get().ok().filter(|x| x.norm() > 1e-8 && x.norm() < 1e8)
}

/// **Γ**(u) through the recurrence-lifted kernel path, away from poles and
/// zeros.
fn lifted_bgamma(kernel: &GammaKernel, u: FieldPoint) -> Option<C> {
    let a = u.u();
    let b = C::new(1.0, 0.0) - u.ubar();
    if nonpositive_integer(a).is_some() || nonpositive_integer(b).is_some() {
        return None;
    }
    let v = (kernel.ln_gamma_lifted(a) - kernel.ln_gamma_lifted(b)).exp();
    (v.norm() > 1e-8 && v.norm() < 1e8).then_some(v)
}

struct Tracker {
    name: &'static str,
    tolerance: f64,
    checks: usize,
    worst: f64,
    failure: Option<String>,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Tracker {
            name,
            tolerance,
            checks: 0,
            worst: 0.0,
            failure: None,
        }
    }

    fn record(&mut self, err: f64, what: impl FnOnce() -> String) {
        self.checks += 1;
        if err > self.worst || err.is_nan() {
            self.worst = if err.is_nan() { f64::INFINITY } else { err };
        }
        if !(err <= self.tolerance) && self.failure.is_none() {
            self.failure = Some(format!("{} (error {err:.3e})", what()));
        }
    }

    fn exact(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.record(if ok { 0.0 } else { f64::INFINITY }, what);
    }

    fn done(self) -> InvariantResult {
        InvariantResult {
            name: self.name,
            checks: self.checks,
            worst: self.worst,
            tolerance: self.tolerance,
            failure: self.failure,
        }
    }
}

fn rational(rng: &mut ChaCha8Rng) -> BigRational {
    BigRational::new(BigInt::from(rng.gen_range(-40i64..=40)), BigInt::from(rng.gen_range(1i64..=12)))
}

/// `n` distinct nonzero random rationals.
pub fn random_distinct_rationals(rng: &mut ChaCha8Rng, n: usize) -> Vec<BigRational> {
    let mut out: Vec<BigRational> = Vec::with_capacity(n);
    while out.len() < n {
        let t = rational(rng);
        if t != BigRational::from_integer(BigInt::from(0)) && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// The fast invariant battery, in a fixed order and with fixed seeds.
pub fn selftest_battery(kernel: &GammaKernel) -> Vec<InvariantResult> {
    let mut results = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f_7e57);
    let one = FieldPoint::scalar(1.0);

    let mut t = Tracker::new("gamma.reflection", 1e-11);
    for _ in 0..400 {
        let u = battery_point(&mut rng);
        let (Some(a), Some(b)) = (lifted_bgamma(kernel, u), lifted_bgamma(kernel, one - u)) else {
            continue;
        };
        let expected = C::new(sign_pow(u.twice_n / 2), 0.0);
        t.record(rel_err(a * b, expected), || format!("Γ(u)Γ(1−u) ≠ (−1)^[u] at u = {u}"));
    }
    results.push(t.done());

    let mut t = Tracker::new("gamma.recurrence", 1e-11);
    for _ in 0..400 {
        let u = battery_point(&mut rng);
        let (Some(a), Some(b)) = (finite_moderate(&bgamma_with(kernel, u + one)), finite_moderate(&bgamma_with(kernel, u))) else {
            continue;
        };
        t.record(rel_err(a, -u.u() * u.ubar() * b), || format!("Γ(u+1) ≠ −uū Γ(u) at u = {u}"));
    }
    results.push(t.done());

    let mut t = Tracker::new("propagator.s_parity", 1e-13);
    for _ in 0..200 {
        let z = PlanePoint::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let a = Index::int(rng.gen_range(-3i64..=3), C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let (Ok(p), Ok(m)) = (s_prop(z, a), s_prop(PlanePoint::from_complex(-z.z), a)) else {
            continue;
        };
        let sign = sign_pow(a.twice_m / 2);
        t.record(rel_err(m, p * sign), || format!("s_α(−z) ≠ (−1)^[α] s_α(z) at z = {}, α = {a}", z.z));
    }
    results.push(t.done());

    let mut t = Tracker::new("propagator.S_parity", 1e-11);
    for _ in 0..200 {
        let u = FieldPoint::new(rng.gen_range(-6i64..=6), C::new(0.0, rng.gen_range(-3.0..3.0)));
        let twice_m = 2 * rng.gen_range(-2i64..=2);
        let a = Index::new(twice_m, C::new(rng.gen_range(0.1..0.9), rng.gen_range(-0.5..0.5)));
        let (Ok(p), Ok(m)) = (s_prop_field(u, a), s_prop_field(-u, a)) else {
            continue;
        };
        let (Some(p), Some(m)) = (finite_moderate(&p), finite_moderate(&m)) else {
            continue;
        };
        let sign = sign_pow(a.twice_m / 2);
        t.record(rel_err(m, p * sign), || format!("S_α(−u) ≠ (−1)^[α] S_α(u) at u = {u}, α = {a}"));
    }
    results.push(t.done());

    let mut t = Tracker::new("propagator.D_symmetry", 0.0);
    for _ in 0..200 {
        let z1 = FieldPoint::new(2 * rng.gen_range(-3i64..=3), C::new(0.0, rng.gen_range(-3.0..3.0)));
        let z2 = FieldPoint::new(2 * rng.gen_range(-3i64..=3), C::new(0.0, rng.gen_range(-3.0..3.0)));
        let a = Index::int(2 * rng.gen_range(-1i64..=1), C::new(rng.gen_range(0.1..0.9), 0.0));
        let Ok(d) = d_prop(z1, z2, a) else {
            continue;
        };
        let same = d_prop(z2, z1, a).ok() == Some(d) && d_prop(-z1, z2, a).ok() == Some(d);
        t.exact(same, || format!("D_α(z1, z2) not symmetric at z1 = {z1}, z2 = {z2}, α = {a}"));
    }
    results.push(t.done());

    let mut t = Tracker::new("milne.partial_fraction", 0.0);
    for k in 0..100 {
        let n = 1 + k % 5;
        let tt = random_distinct_rationals(&mut rng, n);
        let b: Vec<BigRational> = (0..n).map(|_| rational(&mut rng)).collect();
        match plane::milne_partial_fraction_check(&tt, &b) {
            Ok((l, r)) => t.exact(l == r, || format!("lhs {l} ≠ rhs {r} for t = {tt:?}")),
            Err(e) => t.exact(false, || e.to_string()),
        }
    }
    results.push(t.done());

    let mut t = Tracker::new("duality.linear_system", 0.0);
    for k in 0..100 {
        let total = 1 + k % 5;
        let m = k % total;
        let tt = random_distinct_rationals(&mut rng, total);
        let u: Vec<BigRational> = (0..m).map(|_| rational(&mut rng)).collect();
        match plane::df_linear_system_check(&tt, &u) {
            Ok(r) => t.exact(r == BigRational::from_integer(BigInt::from(0)), || format!("residual {r} for t = {tt:?}")),
            Err(e) => t.exact(false, || e.to_string()),
        }
    }
    results.push(t.done());
    results
}

/// `selftest`: exit 0 iff the battery is clean; names the first failure.
pub fn cmd_selftest(kernel: &GammaKernel) -> CommandOutput {
    let start = Instant::now();
    let results = selftest_battery(kernel);
    let mut stdout = String::new();
    let mut first_failure = None;
    for r in &results {
        let status = if r.failure.is_none() { "ok" } else { "FAIL" };
        let _ = writeln!(stdout, "{status:<4} {:<24} {:>4} checks  worst {:.1e}  tol {:.0e}", r.name, r.checks, r.worst, r.tolerance);
        if let (Some(f), None) = (&r.failure, &first_failure) {
            first_failure = Some(format!("{}: {f}", r.name));
        }
    }
    let _ = start;
    match first_failure {
        None => CommandOutput {
            stdout,
            stderr: String::new(),
            code: EXIT_OK,
        },
        Some(f) => CommandOutput {
            stdout,
            stderr: format!("selftest failed: invariant {f}\n"),
            code: EXIT_FAILED,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = "
seed = 3
workers = 1
case {
  identity = CHAIN_S
  z = (0, i) ; (0, 0)
  alpha = (0, 0.7) ; (0, 0.7)
}
";

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("0.3").unwrap(), C::new(0.3, 0.0));
        assert_eq!(parse_complex("-2i").unwrap(), C::new(0.0, -2.0));
        assert_eq!(parse_complex("i").unwrap(), C::new(0.0, 1.0));
        assert_eq!(parse_complex("1e-3-2.5i").unwrap(), C::new(1e-3, -2.5));
        assert_eq!(parse_complex("-1.5e+2 + 1e-2i").unwrap(), C::new(-150.0, 0.01));
        assert_eq!(parse_complex("0.2-i").unwrap(), C::new(0.2, -1.0));
        assert!(parse_complex("abc").is_err());
        assert!(parse_complex("").is_err());
    }

    #[test]
    fn parses_case_blocks() {
        let c = parse_config(CHAIN).unwrap();
        assert_eq!(c.global_seed, 3);
        assert_eq!(c.worker_count, Some(1));
        let CaseSpec::Field { case, line, .. } = &c.cases[0] else { panic!() };
        assert_eq!(*line, 4);
        assert_eq!(case.kind.tag, IdentityTag::ChainS);
        assert_eq!(case.params.z[0], FieldPoint::new(0, C::new(0.0, 1.0)));
        assert_eq!(case.params.alpha[0], Index::new(0, C::new(0.7, 0.0)));
    }

    #[test]
    fn sampled_blocks_expand() {
        let text = "seed = 9\ncase {\n identity = GUSTAFSON_I\n sample = 4\n count = 3\n}\n";
        let a = parse_config(text).unwrap();
        let b = parse_config(text).unwrap();
        assert_eq!(a.cases.len(), 3);
        assert_eq!(a, b);
        let seeds: Vec<_> = a
            .cases
            .iter()
            .map(|c| match c {
                CaseSpec::Field { sample_seed, .. } => sample_seed.unwrap(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(seeds, vec![sample_seed(9, 4, 0), sample_seed(9, 4, 1), sample_seed(9, 4, 2)]);
    }

    #[test]
    fn config_errors_name_the_field() {
        let star = "case {\n identity = STAR_TRIANGLE_S\n z = (0, 0) ; (0, 0.5i) ; (0, -0.5i)\n alpha = (0, 0.7) ; (0, 0.7) ; (0, 0.7)\n}\n";
        let err = parse_config(star).unwrap_err().to_string();
        assert!(err.contains("ConstraintError") && err.contains("alpha"), "{err}");
        assert!(parse_config("seed = 1\n").unwrap_err().to_string().contains("empty"));
        let err = parse_config("case {\n identity = CHAIN_S\n zz = 1\n}\n").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("zz"), "{err}");
        let err = parse_config("case {\n identity = CHAIN_S\n z = (0, x)\n}\n").unwrap_err().to_string();
        assert!(err.contains("field 'z'"), "{err}");
        assert!(parse_config("case {\n identity = NOPE\n}\n").unwrap_err().to_string().contains("identity"));
        assert!(parse_config("case {\n identity = CHAIN_S\n").is_err());
    }

    #[test]
    fn verify_chain_case() {
        let (out, _) = cmd_verify(CHAIN, &RunOptions::default());
        assert_eq!(out.code, EXIT_OK, "{}{}", out.stdout, out.stderr);
        let lines: Vec<&str> = out.stdout.lines().collect();
        assert_eq!(lines.len(), 1);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["passed"], serde_json::Value::Bool(true));
        assert_eq!(v["identity"], "CHAIN_S");
        assert_eq!(v["seed"], 3);
        assert!(v["wall_time"].is_null());
        assert_eq!(v["version"], VERSION);
        let (again, _) = cmd_verify(CHAIN, &RunOptions::default());
        assert_eq!(out.stdout, again.stdout);
    }

    #[test]
    fn pinched_case_reports_error() {
        let text = CHAIN.replace("(0, i) ; (0, 0)", "(0, 0.1i) ; (0, -0.2+0.3i)");
        let (out, _) = cmd_verify(&text, &RunOptions::default());
        assert_eq!(out.code, EXIT_FAILED);
        assert!(out.stderr.contains("PinchedContourError"), "{}", out.stderr);
    }

    #[test]
    fn reals_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = Json::Real(x).to_line();
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(Json::Real(f64::NAN).to_line(), "null");
    }

    #[test]
    fn sweep_grids() {
        let z = sweep_values("zeta", 1.2, 1.025, 4, Spacing::Geometric).unwrap();
        for (a, b) in z.iter().zip([1.2, 1.1, 1.05, 1.025]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in sweep_values("L", 16.0, 128.0, 4, Spacing::Geometric).unwrap().iter().zip([16.0, 32.0, 64.0, 128.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(sweep_values("L", 16.0, 128.0, 0, Spacing::Geometric).is_err());
        let req = SweepRequest {
            identity: "CHAIN".into(),
            param: "L".into(),
            from: 16.0,
            to: 128.0,
            steps: 0,
            spacing: Spacing::Geometric,
            config_text: None,
            seed: 0,
        };
        assert_eq!(cmd_sweep(&req, &RunOptions::default()).code, EXIT_CONFIG);
        let req = SweepRequest {
            param: "alpha".into(),
            steps: 4,
            ..req
        };
        assert_eq!(cmd_sweep(&req, &RunOptions::default()).code, EXIT_CONFIG);
    }

    #[test]
    fn selftest_is_clean_and_detects_perturbation() {
        let a = cmd_selftest(GammaKernel::standard());
        assert_eq!(a.code, EXIT_OK, "{}{}", a.stdout, a.stderr);
        assert_eq!(a, cmd_selftest(GammaKernel::standard()));
        let b = cmd_selftest(&GammaKernel::perturbed(1e-6));
        assert_eq!(b.code, EXIT_FAILED);
        assert!(b.stderr.contains("gamma.reflection"), "{}", b.stderr);
    }
}
