//! Command-line front end. Reports go to stdout, logs to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use log::info;
use num_complex::Complex64;
use rug::Complex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::arithmetic::RotationNumber;
use crate::classify::{classify_pair, HolonomyPair, VerdictPolicy};
use crate::error::{HolonomyError, Result};
use crate::germ::{validate_truncation, DEFAULT_TRUNCATION};
use crate::invariant_set::{self, AdmissibleDisk, DEFAULT_MAX_ITER};
use crate::map::{Coeff, CompiledMap, MapExpr};
use crate::orbits::{self, CycleSearch, Polynomial};
use crate::scalar::{Field, DEFAULT_FLOAT_BITS};
use crate::suspension::{classify_model, CatalogFile};

pub const PRECISION_ENV: &str = "HOLONOMY_PRECISION";
/// Default working precision of the cycle and orbit experiments.
const ORBIT_BITS: u32 = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Classify,
    Linearize,
    Hedgehog,
    Cycles,
    Orbit,
    Catalog,
}

/// Every field is optional; flags override the `--config` file, which
/// overrides built-in defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Parser)]
#[serde(default, deny_unknown_fields)]
#[command(name = "holonomy", version, about = "Holomorphic germ dynamics and holonomy-pair classification")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub subcommand: Option<Subcommand>,

    /// JSON file with a RunConfig.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Catalog model name (classify).
    #[arg(long)]
    pub catalog: Option<String>,
    /// Model or catalog JSON file (classify, catalog).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Holonomy of the first generator, or the germ to linearize.
    #[arg(long = "f")]
    pub f: Option<String>,
    /// Holonomy of the second generator.
    #[arg(long = "g")]
    pub g: Option<String>,
    /// Map for hedgehog and orbit.
    #[arg(long)]
    pub map: Option<String>,
    /// Rotation number for cycles.
    #[arg(long)]
    pub theta: Option<String>,

    /// Truncation order T.
    #[arg(long, alias = "order")]
    pub truncation: Option<usize>,
    /// Float precision in bits (also HOLONOMY_PRECISION).
    #[arg(long)]
    pub precision: Option<u32>,
    /// `exact` or `float<bits>`.
    #[arg(long)]
    pub field: Option<String>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Grid resolution N.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Iteration bound for hedgehog.
    #[arg(long = "iters")]
    pub max_iter: Option<u64>,
    /// Allowed offset in cells for the invariance check.
    #[arg(long)]
    pub tol_cells: Option<u64>,
    /// Polynomial degree d in λz + z^d (cycles).
    #[arg(long)]
    pub degree: Option<u32>,
    /// Periods: integers or `qN` for continued-fraction denominators.
    #[arg(long)]
    pub periods: Option<String>,
    #[arg(long)]
    pub rings: Option<usize>,
    #[arg(long)]
    pub angles: Option<usize>,
    /// Shuffle seed for the cycle-search start mesh; 0 keeps the fixed order.
    #[arg(long)]
    pub mesh_seed: Option<u64>,
    /// Orbit seed (complex literal).
    #[arg(long)]
    pub seed: Option<String>,
    /// Orbit length.
    #[arg(long)]
    pub n: Option<usize>,
    /// First-return distance.
    #[arg(long)]
    pub delta: Option<f64>,

    /// Primary artifact path (report JSON, PGM, …).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV export (hedgehog cells, orbit samples).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Worker threads; output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

macro_rules! merge {
    ($a:ident, $b:ident, $($f:ident),*) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f.clone(); } )*
    };
}

impl RunConfig {
    fn merge_file(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)?;
        let file: RunConfig = serde_json::from_str(&text)
            .map_err(|e| HolonomyError::Config(format!("{}: {e}", path.display())))?;
        merge!(
            self, file, subcommand, catalog, model, f, g, map, theta, truncation, precision, field, radius, grid,
            max_iter, tol_cells, degree, periods, rings, angles, mesh_seed, seed, n, delta, out, csv, workers
        );
        Ok(self)
    }

    fn bits(&self, default: u32) -> Result<u32> {
        if let Some(b) = self.precision {
            return Ok(b);
        }
        match std::env::var(PRECISION_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| HolonomyError::Config(format!("{PRECISION_ENV} must be an integer, got `{v}`"))),
            Err(_) => Ok(default),
        }
    }

    fn field(&self) -> Result<Field> {
        match self.field.as_deref() {
            Some(name) if self.precision.is_none() => Field::parse(name),
            Some("exact") => Ok(Field::ExactGaussianRational),
            _ => Field::float(self.bits(DEFAULT_FLOAT_BITS)?),
        }
    }

    fn truncation(&self) -> Result<usize> {
        validate_truncation(self.truncation.unwrap_or(DEFAULT_TRUNCATION))
    }

    fn required<'a>(v: &'a Option<String>, flag: &str) -> Result<&'a str> {
        v.as_deref().ok_or_else(|| HolonomyError::Config(format!("missing --{flag}")))
    }
}

/// Exit code for an error: 2 usage/parse, 3 inconclusive, 4 inconsistent, 5 inadmissible.
pub fn exit_code(e: &HolonomyError) -> i32 {
    match e {
        HolonomyError::NonCommuting { .. } => 4,
        HolonomyError::Inadmissible(_) => 5,
        HolonomyError::PrecisionExhausted { .. }
        | HolonomyError::ResonanceObstruction { .. }
        | HolonomyError::DefinedOnlyForIrrational
        | HolonomyError::InsufficientConvergents { .. }
        | HolonomyError::DegenerateTorsion { .. }
        | HolonomyError::UnclassifiedCase(_)
        | HolonomyError::OutOfTableScope(_)
        | HolonomyError::NotCaseII => 3,
        _ => 2,
    }
}

/// Output of one run: the report for stdout and the exit code.
pub struct Outcome {
    pub report: serde_json::Value,
    pub code: i32,
}

/// Parses `args` (including the program name), runs, and writes the report to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cfg) {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out.report).expect("serializable");
            let _ = writeln!(stdout, "{text}");
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cfg: RunConfig) -> Result<Outcome> {
    let cfg = cfg.merge_file()?;
    let Some(cmd) = cfg.subcommand else {
        return Err(HolonomyError::Config(
            "no subcommand (classify, linearize, hedgehog, cycles, orbit, catalog)".into(),
        ));
    };
    let workers = cfg.workers;
    invariant_set::with_workers(workers, move || match cmd {
        Subcommand::Classify => cmd_classify(&cfg),
        Subcommand::Linearize => cmd_linearize(&cfg),
        Subcommand::Hedgehog => cmd_hedgehog(&cfg),
        Subcommand::Cycles => cmd_cycles(&cfg),
        Subcommand::Orbit => cmd_orbit(&cfg),
        Subcommand::Catalog => cmd_catalog(&cfg),
    })?
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_report(cfg: &RunConfig, report: &serde_json::Value) -> Result<()> {
    if let Some(out) = &cfg.out {
        let text = serde_json::to_string_pretty(report)? + "\n";
        write_file(out, text.as_bytes())?;
    }
    Ok(())
}

fn load_catalog(cfg: &RunConfig) -> Result<CatalogFile> {
    match &cfg.model {
        Some(p) => CatalogFile::load(p),
        None => Ok(CatalogFile::shipped()),
    }
}

fn cmd_classify(cfg: &RunConfig) -> Result<Outcome> {
    let truncation = cfg.truncation()?;
    let field = cfg.field()?;
    let policy = VerdictPolicy::default();
    let report = if cfg.catalog.is_some() || cfg.model.is_some() {
        let file = load_catalog(cfg)?;
        let spec = match &cfg.catalog {
            Some(name) => file
                .find(name)
                .ok_or_else(|| HolonomyError::Config(format!("no catalog model named `{name}`")))?,
            None if file.models.len() == 1 => &file.models[0],
            None => return Err(HolonomyError::Config("model file holds several models; pass --catalog".into())),
        };
        info!("classifying catalog model {}", spec.name);
        let model = spec.build(truncation, field)?;
        classify_model(&model, &policy)?.report
    } else {
        let bits = field.bits().max(DEFAULT_FLOAT_BITS);
        let f = MapExpr::parse(RunConfig::required(&cfg.f, "f")?, bits)?;
        let g = MapExpr::parse(RunConfig::required(&cfg.g, "g")?, bits)?;
        let pair = HolonomyPair::from_exprs(&f, &g, truncation, field)?;
        classify_pair(&pair, &policy)?
    };
    let code = report.exit_code();
    let value = serde_json::to_value(&report)?;
    write_report(cfg, &value)?;
    Ok(Outcome { report: value, code })
}

fn cmd_linearize(cfg: &RunConfig) -> Result<Outcome> {
    let field = cfg.field()?;
    let bits = field.bits().max(DEFAULT_FLOAT_BITS);
    let f = MapExpr::parse(RunConfig::required(&cfg.f, "f")?, bits)?.to_germ(cfg.truncation()?, field)?;
    let lin = f.formal_linearize()?;
    let defect = f.linearization_defect(&lin.h)?;
    let value = json!({
        "truncation": f.truncation(),
        "field": field.name(),
        "multiplier": f.multiplier().to_strings(),
        "h": lin.h.to_json(),
        "defect": defect,
        "min_divisor": lin.min_divisor,
        "min_divisor_order": lin.min_divisor_order,
        "max_coeff": lin.max_coeff,
        "growth_rate": lin.growth_rate(),
        "free_orders": lin.free_orders,
    });
    write_report(cfg, &value)?;
    Ok(Outcome { report: value, code: 0 })
}

fn cmd_hedgehog(cfg: &RunConfig) -> Result<Outcome> {
    let text = RunConfig::required(&cfg.map, "map")?;
    let expr = MapExpr::parse(text, 64)?;
    let f: CompiledMap<Complex64> = expr.compile(53)?;
    let radius = cfg.radius.unwrap_or(1.0);
    let resolution = cfg.grid.unwrap_or(256);
    let max_iter = cfg.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    let disk = AdmissibleDisk::check(&f, radius)?;
    info!("hedgehog {expr} r = {radius} N = {resolution} max_iter = {max_iter}");
    let grid = invariant_set::hedgehog(&f, &disk, resolution, max_iter)?;
    let meta = grid.metadata(&expr.to_string());
    let invariance = invariant_set::verify_complete_invariance(&grid, &f, cfg.tol_cells.unwrap_or(2));
    let lambda = f.eval_with_derivative(&Complex64::new(0.0, 0.0)).map(|(_, d)| d.norm());
    let indifferent = lambda.map(|m| (m - 1.0).abs() < 1e-12).unwrap_or(false);
    if let Some(out) = &cfg.out {
        write_file(out, &grid.to_pgm())?;
        let sidecar = out.with_extension("json");
        write_file(&sidecar, (serde_json::to_string_pretty(&meta)? + "\n").as_bytes())?;
    }
    if let Some(csv) = &cfg.csv {
        write_file(csv, grid.to_csv().as_bytes())?;
    }
    let value = json!({
        "metadata": meta,
        "zero_position": grid.zero_boundary_position(),
        "boundary_contact": grid.boundary_contact(),
        "invariance": invariance,
        "indifferent_fixed_point": indifferent,
    });
    Ok(Outcome { report: value, code: 0 })
}

/// Periods from `"1,10"` or `"q1,q2"` (continued-fraction denominators of `theta`).
fn parse_periods(spec: &str, theta: &RotationNumber) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if let Some(idx) = tok.strip_prefix('q') {
            let k: usize = idx
                .parse()
                .map_err(|_| HolonomyError::Parse(format!("bad period `{tok}`")))?;
            let cf = theta.continued_fraction(k + 1).or_else(|e| match e {
                HolonomyError::PrecisionExhausted { certified } if certified > k => theta.continued_fraction(k),
                e => Err(e),
            })?;
            let q = cf
                .convergents
                .get(k)
                .and_then(|(_, q)| q.exact().and_then(|q| q.to_u64()))
                .ok_or_else(|| HolonomyError::Config(format!("q{k} is unavailable or too large for a cycle search")))?;
            out.push(q);
        } else {
            out.push(tok.parse().map_err(|_| HolonomyError::Parse(format!("bad period `{tok}`")))?);
        }
    }
    if out.is_empty() {
        return Err(HolonomyError::Config("no periods given".into()));
    }
    Ok(out)
}

fn cmd_cycles(cfg: &RunConfig) -> Result<Outcome> {
    let bits = cfg.bits(ORBIT_BITS)?;
    let theta = RotationNumber::parse(RunConfig::required(&cfg.theta, "theta")?, bits)?;
    let degree = cfg.degree.unwrap_or(2);
    if degree < 2 {
        return Err(HolonomyError::Config("--degree must be at least 2".into()));
    }
    let mut coeffs = vec![Coeff::Unit(theta.clone())];
    coeffs.resize(degree as usize - 1, Coeff::int(0));
    coeffs.push(Coeff::int(1));
    let p = Polynomial::new(&coeffs, bits)?;
    let periods = parse_periods(cfg.periods.as_deref().unwrap_or("q1"), &theta)?;
    let mut search = CycleSearch::default();
    search.rings = cfg.rings.unwrap_or(search.rings);
    search.angles = cfg.angles.unwrap_or(search.angles);
    search.mesh_seed = cfg.mesh_seed.unwrap_or(0);
    let radius = cfg.radius.unwrap_or(0.5);
    info!("cycles of {theta} degree {degree} periods {periods:?} at {bits} bits");
    let found = orbits::find_small_cycles(&p, &periods, radius, &search);
    let any = found.iter().any(|(_, c)| !c.is_empty());
    let value = json!({
        "theta": theta.to_string(),
        "degree": degree,
        "precision_bits": bits,
        "search_radius": radius,
        "results": found.iter().map(|(q, cs)| json!({
            "period": q,
            "cycles": cs.iter().map(|c| c.to_json()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    write_report(cfg, &value)?;
    Ok(Outcome {
        report: value,
        code: if any { 0 } else { 3 },
    })
}

fn cmd_orbit(cfg: &RunConfig) -> Result<Outcome> {
    let bits = cfg.bits(ORBIT_BITS)?;
    let expr = MapExpr::parse(RunConfig::required(&cfg.map, "map")?, bits)?;
    let f: CompiledMap<Complex> = expr.compile(bits)?;
    let seed = Coeff::parse(cfg.seed.as_deref().unwrap_or("0.5"), bits)?.to_complex(bits);
    let trace = orbits::orbit_probe(&f, &seed, cfg.n.unwrap_or(1000), cfg.delta)?;
    if let Some(csv) = &cfg.csv {
        write_file(csv, trace.to_csv().as_bytes())?;
    }
    let value = json!({
        "map": expr.to_string(),
        "seed": trace.seed,
        "n": trace.samples.len().saturating_sub(1),
        "min_modulus": trace.min_modulus,
        "min_at": trace.min_at,
        "first_return": trace.first_return,
        "truncated": trace.truncated,
        "precision_bits": trace.precision_bits,
        "checksum": trace.checksum,
    });
    write_report(cfg, &value)?;
    Ok(Outcome {
        code: if trace.truncated { 3 } else { 0 },
        report: value,
    })
}

fn cmd_catalog(cfg: &RunConfig) -> Result<Outcome> {
    let file = load_catalog(cfg)?;
    let value = serde_json::to_value(&file)?;
    write_report(cfg, &value)?;
    Ok(Outcome { report: value, code: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, serde_json::Value) {
        let mut out = Vec::new();
        let mut full = vec!["holonomy"];
        full.extend_from_slice(args);
        let code = run(full, &mut out);
        let v = if out.is_empty() {
            serde_json::Value::Null
        } else {
            serde_json::from_slice(&out).unwrap()
        };
        (code, v)
    }

    #[test]
    fn serre_from_the_catalog() {
        let (code, v) = run_str(&["classify", "--catalog", "serre"]);
        assert_eq!(code, 0);
        assert_eq!(v["case"], "II");
        assert_eq!(v["ueda_type"], json!({"kind": "alpha", "index": 1}));
    }

    #[test]
    fn inline_rotation_and_non_commuting_pair() {
        let (code, v) = run_str(&["classify", "--f", "id", "--g", "rot(golden)"]);
        assert_eq!(code, 0);
        assert_eq!(v["case"], "III");
        assert_eq!(v["ueda_type"], json!({"kind": "beta"}));
        let (code, _) = run_str(&["classify", "--f", "poly(1,1)", "--g", "poly(1,0,1)"]);
        assert_eq!(code, 4);
    }

    #[test]
    fn parse_errors_exit_two() {
        assert_eq!(run_str(&["classify", "--f", "poly(", "--g", "id"]).0, 2);
        assert_eq!(run_str(&["nonsense"]).0, 2);
        assert_eq!(run_str(&["classify", "--grid", "x"]).0, 2);
    }

    #[test]
    fn linearize_cycles_and_orbit() {
        let (code, v) = run_str(&["linearize", "--f", "poly(2,1)", "--order", "32"]);
        assert_eq!(code, 0);
        assert!(v["defect"].as_f64().unwrap() < 1e-8);

        let (code, v) = run_str(&["cycles", "--theta", "cf:[0;10,100]", "--degree", "2", "--periods", "q1"]);
        assert_eq!(code, 0);
        assert_eq!(v["results"][0]["period"], 10);
        assert_eq!(v["results"][0]["cycles"].as_array().unwrap().len(), 1);

        let (code, v) = run_str(&["orbit", "--map", "rot(cf:[0;1,1,1,...])", "--seed", "0.5", "--n", "1000"]);
        assert_eq!(code, 0);
        assert_eq!(v["min_modulus"], 0.5);
    }

    #[test]
    fn inadmissible_disk_exits_five() {
        assert_eq!(run_str(&["hedgehog", "--map", "mobius(1,0,-1,1)", "--radius", "1", "--grid", "16"]).0, 5);
    }

    #[test]
    fn config_file_supplies_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"subcommand":"classify","catalog":"trivial"}"#).unwrap();
        let (code, v) = run_str(&["--config", path.to_str().unwrap()]);
        assert_eq!(code, 0);
        assert_eq!(v["case"], "I");
        std::fs::write(&path, r#"{"catalgo":"trivial"}"#).unwrap();
        assert_eq!(run_str(&["classify", "--config", path.to_str().unwrap()]).0, 2);
    }
}
