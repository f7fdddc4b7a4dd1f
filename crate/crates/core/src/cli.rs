//! Command-line front end.
//!
//! A run is described by a [`RunConfig`]: a flat `key = value` file, with
//! `key=value` overrides on the command line. Complex numbers are written as
//! `a+bi`, regions as `;`-separated `x_min,x_max,y_min,y_max` quadruples and
//! region lists with `|` between regions. Outputs are written atomically
//! (temporary file, then rename).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use crate::drivers::{
    replicate, simulate_brownian_driver, simulate_extended, simulate_sle_rho_boundary,
    simulate_sle_rho_interior, DriverConfig, OutcomeCounts, RunOutcome,
};
use crate::error::{Error, Result};
use crate::loewner::{trace_curve, Region, TraceOptions};
use crate::observables::{
    capacity_green_mc, estimate_c_kappa1, green_interior, integrate_green, CKappaConfig, EstimateReport,
    SwallowSampler,
};
use crate::pathspace::{read_archive, write_archive, ArchivedPath, Lifetime};
use crate::verify::{c_kappa1_quick, run_test, TestReport, VerifyOptions, TEST_NAMES};

/// Formats `z` as `a+bi`.
pub fn format_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", z.re, sign, z.im.abs())
}

/// Parses `a+bi`, `a-bi`, `bi`, `i` or a plain real number.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let bad = || Error::Config(format!("bad complex number {s:?}"));
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    // split at the last sign that is neither leading nor an exponent sign
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |p: &str| -> Result<f64> {
        match p {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => p.parse().map_err(|_| bad()),
        }
    };
    match split {
        Some(k) => Ok(Complex64::new(body[..k].parse().map_err(|_| bad())?, imag(&body[k..])?)),
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

fn format_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Config(format!("bad number {p:?} in list"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimKind {
    #[default]
    Brownian,
    SleRho,
    Boundary,
    Extended,
}

impl SimKind {
    pub const NAMES: [&'static str; 4] = ["brownian", "sle-rho", "boundary", "extended"];
}

impl fmt::Display for SimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimKind::Brownian => "brownian",
            SimKind::SleRho => "sle-rho",
            SimKind::Boundary => "boundary",
            SimKind::Extended => "extended",
        })
    }
}

impl FromStr for SimKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brownian" => Ok(SimKind::Brownian),
            "sle-rho" => Ok(SimKind::SleRho),
            "boundary" => Ok(SimKind::Boundary),
            "extended" => Ok(SimKind::Extended),
            _ => Err(Error::Config(format!(
                "unknown simulation kind {s:?}; expected one of {}",
                SimKind::NAMES.join(", ")
            ))),
        }
    }
}

/// Everything a run needs. Optional fields fall back to per-command defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: SimKind,
    pub kappa: Option<f64>,
    pub rho: f64,
    pub z0: Complex64,
    pub x0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub swallow_eps: f64,
    pub n: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
    pub regions: Vec<Region>,
    pub r: f64,
    pub pitch: f64,
    pub t: f64,
    pub t_list: Vec<f64>,
    pub b_list: Vec<f64>,
    pub z: Complex64,
    pub estimator: String,
    pub test: String,
    pub archive: Option<PathBuf>,
    pub stride: usize,
    pub quick: bool,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kind: SimKind::Brownian,
            kappa: None,
            rho: 0.0,
            z0: Complex64::new(0.0, 1.0),
            x0: 1.0,
            dt: 1e-3,
            horizon: 1.0,
            swallow_eps: 1e-3,
            n: None,
            seed: 0,
            out: PathBuf::from("out"),
            regions: vec![Region::rect(-1.0, 1.0, 0.25, 1.25).expect("valid rectangle")],
            r: 0.02,
            pitch: 0.01,
            t: 1.0,
            t_list: vec![0.5, 1.0, 2.0],
            b_list: vec![1.0, 2.0, 3.0],
            z: Complex64::new(0.0, 1.0),
            estimator: "c-kappa1".into(),
            test: "all".into(),
            archive: None,
            stride: 1,
            quick: false,
            threads: 0,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let key = match key.trim() {
            "κ" => "kappa",
            "ρ" => "rho",
            "z₀" => "z0",
            "x₀" => "x0",
            "N" => "n",
            k => k,
        };
        match key {
            "kind" => self.kind = v.parse()?,
            "kappa" => self.kappa = Some(parse_num(key, v)?),
            "rho" => self.rho = parse_num(key, v)?,
            "z0" => self.z0 = parse_complex(v)?,
            "x0" => self.x0 = parse_num(key, v)?,
            "dt" => self.dt = parse_num(key, v)?,
            "horizon" => self.horizon = parse_num(key, v)?,
            "swallow_eps" => self.swallow_eps = parse_num(key, v)?,
            "n" => self.n = Some(parse_num(key, v)?),
            "seed" => self.seed = parse_num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "regions" => {
                self.regions = v
                    .split('|')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "r" => self.r = parse_num(key, v)?,
            "pitch" => self.pitch = parse_num(key, v)?,
            "t" => self.t = parse_num(key, v)?,
            "t_list" => self.t_list = parse_list(v)?,
            "b_list" => self.b_list = parse_list(v)?,
            "z" => self.z = parse_complex(v)?,
            "estimator" => self.estimator = v.to_string(),
            "test" => self.test = v.to_string(),
            "archive" => self.archive = Some(PathBuf::from(v)),
            "stride" => self.stride = parse_num(key, v)?,
            "quick" => self.quick = parse_num(key, v)?,
            "threads" => self.threads = parse_num(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply(text)?;
        Ok(c)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn emit(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Key-value echo, as used in metadata files.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("kind", self.kind.to_string());
        if let Some(k) = self.kappa {
            m.insert("kappa", k.to_string());
        }
        m.insert("rho", self.rho.to_string());
        m.insert("z0", format_complex(self.z0));
        m.insert("x0", self.x0.to_string());
        m.insert("dt", self.dt.to_string());
        m.insert("horizon", self.horizon.to_string());
        m.insert("swallow_eps", self.swallow_eps.to_string());
        if let Some(n) = self.n {
            m.insert("n", n.to_string());
        }
        m.insert("seed", self.seed.to_string());
        m.insert("out", self.out.display().to_string());
        m.insert(
            "regions",
            self.regions.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(" | "),
        );
        m.insert("r", self.r.to_string());
        m.insert("pitch", self.pitch.to_string());
        m.insert("t", self.t.to_string());
        m.insert("t_list", format_list(&self.t_list));
        m.insert("b_list", format_list(&self.b_list));
        m.insert("z", format_complex(self.z));
        m.insert("estimator", self.estimator.clone());
        m.insert("test", self.test.clone());
        if let Some(a) = &self.archive {
            m.insert("archive", a.display().to_string());
        }
        m.insert("stride", self.stride.to_string());
        m.insert("quick", self.quick.to_string());
        m.insert("threads", self.threads.to_string());
        m
    }

    fn kappa(&self) -> Result<f64> {
        self.kappa.ok_or_else(|| Error::Config("kappa is required".into()))
    }

    fn n_or(&self, default: usize) -> usize {
        self.n.unwrap_or(default)
    }

    /// Driver configuration for `simulate`, validated for its kind.
    pub fn driver_config(&self) -> Result<DriverConfig> {
        let kappa = self.kappa()?;
        let mut cfg = match self.kind {
            SimKind::Brownian => DriverConfig::brownian(kappa, self.dt, self.horizon),
            SimKind::SleRho | SimKind::Extended => DriverConfig::interior(kappa, self.rho, self.z0, self.dt, self.horizon),
            SimKind::Boundary => DriverConfig::boundary(kappa, self.rho, self.x0, self.dt, self.horizon),
        };
        cfg.swallow_eps = self.swallow_eps;
        cfg.seed = self.seed;
        match self.kind {
            SimKind::Extended => cfg.validate_extendable()?,
            _ => cfg.validate()?,
        }
        Ok(cfg)
    }

    /// Checks the fields shared by all commands.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("horizon", self.horizon),
            ("swallow_eps", self.swallow_eps),
            ("r", self.r),
            ("pitch", self.pitch),
            ("t", self.t),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive and finite, got {v}")));
            }
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("kappa must be positive, got {k}")));
            }
        }
        if self.n == Some(0) {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.t_list.iter().chain(&self.b_list).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("t_list and b_list entries must be positive".into()));
        }
        if self.regions.is_empty() {
            return Err(Error::Config("at least one region is required".into()));
        }
        Ok(())
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

#[derive(Debug, Serialize)]
pub struct SimulateMetadata {
    pub config: BTreeMap<&'static str, String>,
    pub paths: usize,
    pub outcomes: Option<OutcomeCounts>,
    /// Junction times of extended drivers.
    pub junctions: Vec<f64>,
    pub archive: String,
}

/// Simulates `n` drivers and writes `paths.slep` and `simulate.json`.
pub fn cmd_simulate(c: &RunConfig) -> Result<SimulateMetadata> {
    c.validate()?;
    let cfg = c.driver_config()?;
    let n = c.n_or(1);
    let kind = c.kind;
    let runs = replicate(c.seed, n, |rng| -> Result<(ArchivedPath, Option<RunOutcome>, Option<f64>)> {
        Ok(match kind {
            SimKind::Brownian => (simulate_brownian_driver(&cfg, rng)?.into(), None, None),
            SimKind::SleRho => {
                let r = simulate_sle_rho_interior(&cfg, rng)?;
                (r.driver.into(), Some(r.outcome), None)
            }
            SimKind::Boundary => {
                let r = simulate_sle_rho_boundary(&cfg, rng)?;
                (r.driver.into(), Some(r.outcome), None)
            }
            SimKind::Extended => {
                let (p, j) = simulate_extended(&cfg, rng)?;
                (p.into(), None, Some(j))
            }
        })
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    let outcomes: Vec<RunOutcome> = runs.iter().filter_map(|r| r.1).collect();
    let paths: Vec<ArchivedPath> = runs.iter().map(|r| r.0.clone()).collect();
    let mut buf = Vec::new();
    write_archive(&mut buf, &paths)?;
    let archive = c.out.join("paths.slep");
    write_atomic(&archive, &buf)?;
    let meta = SimulateMetadata {
        config: c.entries(),
        paths: n,
        outcomes: (!outcomes.is_empty()).then(|| OutcomeCounts::tally(&outcomes)),
        junctions: runs.iter().filter_map(|r| r.2).collect(),
        archive: archive.display().to_string(),
    };
    write_atomic(&c.out.join("simulate.json"), &json_bytes(&meta)?)?;
    Ok(meta)
}

fn archive_path(c: &RunConfig) -> PathBuf {
    c.archive.clone().unwrap_or_else(|| c.out.join("paths.slep"))
}

fn load_archive(path: &Path) -> Result<Vec<ArchivedPath>> {
    let bytes = fs::read(path)?;
    read_archive(&mut bytes.as_slice())
}

/// Traces every real path of the archive into `curve_<i>.csv`; returns the
/// files written. An empty archive writes nothing and warns.
pub fn cmd_trace(c: &RunConfig) -> Result<Vec<PathBuf>> {
    c.validate()?;
    let paths = load_archive(&archive_path(c))?;
    if paths.is_empty() {
        eprintln!("warning: archive contains no paths; nothing traced");
        return Ok(Vec::new());
    }
    let opts = TraceOptions {
        stride: c.stride,
        ..Default::default()
    };
    let mut written = Vec::new();
    for (i, p) in paths.iter().enumerate() {
        let Some(driver) = p.as_real() else {
            eprintln!("warning: path {i} is complex-valued and cannot drive the Loewner flow; skipped");
            continue;
        };
        let curve = trace_curve(driver, &opts)?;
        let file = c.out.join(format!("curve_{i}.csv"));
        write_atomic(&file, curve.to_csv().as_bytes())?;
        written.push(file);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum EstimateOutput {
    Single(EstimateReport),
    CKappa(crate::observables::CKappaEstimate),
}

pub const ESTIMATORS: [&str; 3] = ["c-kappa1", "capacity-green", "psi0"];

/// Dispatches to an estimator and writes `estimate.json`.
pub fn cmd_estimate(c: &RunConfig) -> Result<EstimateOutput> {
    c.validate()?;
    let kappa = c.kappa()?;
    let out = match c.estimator.as_str() {
        "c-kappa1" => {
            let mut k = if c.quick { c_kappa1_quick(kappa, c.seed) } else { CKappaConfig::new(kappa, c.seed) };
            k.region = c.regions[0].clone();
            k.dt = c.dt;
            k.t_list = c.t_list.clone();
            k.quadrature_pitch = c.pitch;
            if let Some(n) = c.n {
                k.curves = n;
            }
            EstimateOutput::CKappa(estimate_c_kappa1(&k)?)
        }
        "capacity-green" => {
            let sampler = SwallowSampler::Direct {
                dt: c.dt,
                swallow_eps: c.swallow_eps,
            };
            EstimateOutput::Single(capacity_green_mc(kappa, c.z, c.t, c.n_or(1000), &sampler, c.seed)?)
        }
        "psi0" => {
            let rho = c.rho;
            let q = integrate_green(&c.regions[0], c.pitch, |z| green_interior(kappa, rho, z))?;
            let mut rep = EstimateReport {
                name: "psi0".into(),
                kappa,
                rho: Some(rho),
                value: q.value,
                stderr: (q.value - q.coarse).abs(),
                ci95: [q.value.min(q.coarse), q.value.max(q.coarse)],
                n: 0,
                seed: c.seed,
                flags: Vec::new(),
            };
            if q.too_coarse {
                rep.flags.push("quadrature-too-coarse".into());
            }
            EstimateOutput::Single(rep)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown estimator {other:?}; expected one of {}",
                ESTIMATORS.join(", ")
            )))
        }
    };
    write_atomic(&c.out.join("estimate.json"), &json_bytes(&out)?)?;
    Ok(out)
}

/// Runs the selected tests (comma-separated names or `all`) and writes
/// `verify.jsonl`, one report per line. `sink` sees each report as soon as
/// its test finishes.
pub fn cmd_verify(c: &RunConfig, mut sink: impl FnMut(&TestReport) -> Result<()>) -> Result<Vec<TestReport>> {
    c.validate()?;
    let names: Vec<&str> = if c.test == "all" {
        TEST_NAMES.to_vec()
    } else {
        c.test.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
    };
    if let Some(bad) = names.iter().find(|n| !TEST_NAMES.contains(n)) {
        return Err(Error::Config(format!(
            "unknown test {bad:?}; known tests: {}",
            TEST_NAMES.join(", ")
        )));
    }
    let opts = VerifyOptions {
        seed: c.seed,
        quick: c.quick,
        kappa: c.kappa,
        n: c.n,
    };
    let mut reports = Vec::new();
    let mut lines = Vec::new();
    for name in names {
        let r = run_test(name, &opts)?;
        sink(&r)?;
        lines.extend(serde_json::to_vec(&r)?);
        lines.push(b'\n');
        reports.push(r);
    }
    write_atomic(&c.out.join("verify.jsonl"), &lines)?;
    Ok(reports)
}

#[derive(Debug, Serialize, PartialEq)]
pub struct PathInfo {
    pub dt: f64,
    pub samples: usize,
    pub complex: bool,
    /// `"finite"` or `"truncated"`.
    pub lifetime_kind: &'static str,
    pub lifetime: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct ArchiveInfo {
    pub paths: usize,
    pub entries: Vec<PathInfo>,
}

pub fn cmd_archive_info(path: &Path) -> Result<ArchiveInfo> {
    let paths = load_archive(path)?;
    Ok(ArchiveInfo {
        paths: paths.len(),
        entries: paths
            .iter()
            .map(|p| {
                let (kind, value) = match p.lifetime() {
                    Lifetime::Finite(t) => ("finite", t),
                    Lifetime::Truncated { horizon } => ("truncated", horizon),
                };
                PathInfo {
                    dt: p.dt(),
                    samples: p.len(),
                    complex: p.is_complex(),
                    lifetime_kind: kind,
                    lifetime: value,
                }
            })
            .collect(),
    })
}

#[derive(Debug, Parser)]
#[command(name = "sledecomp", version, about = "Simulate and verify SLE decompositions")]
pub struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Reduced sample sizes.
    #[arg(long, global = true)]
    pub quick: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate drivers: brownian, sle-rho, boundary or extended.
    Simulate {
        kind: Option<String>,
        /// key=value overrides.
        overrides: Vec<String>,
    },
    /// Trace the curves of an archive to CSV.
    Trace {
        archive: Option<String>,
        overrides: Vec<String>,
    },
    /// Run an estimator: c-kappa1, capacity-green or psi0.
    Estimate {
        estimator: Option<String>,
        overrides: Vec<String>,
    },
    /// Run verification tests by name, or `all`.
    Verify {
        test: Option<String>,
        overrides: Vec<String>,
    },
    /// Summarise a path archive.
    ArchiveInfo { archive: PathBuf },
}

fn apply_overrides(c: &mut RunConfig, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {o:?}")))?;
        c.set(k, v)?;
    }
    Ok(())
}

/// Splits an optional leading positional from the overrides; a `key=value`
/// token in that slot is an override.
fn leading<'a>(first: &'a Option<String>, rest: &'a [String]) -> (Option<&'a str>, Vec<String>) {
    match first {
        Some(f) if f.contains('=') => (None, std::iter::once(f.clone()).chain(rest.iter().cloned()).collect()),
        Some(f) => (Some(f.as_str()), rest.to_vec()),
        None => (None, rest.to_vec()),
    }
}

/// Builds the effective config: file, then positional and `key=value`
/// arguments, then global flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::parse(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    let (first, overrides) = match &cli.command {
        Command::Simulate { kind, overrides } => leading(kind, overrides),
        Command::Trace { archive, overrides } => leading(archive, overrides),
        Command::Estimate { estimator, overrides } => leading(estimator, overrides),
        Command::Verify { test, overrides } => leading(test, overrides),
        Command::ArchiveInfo { archive } => {
            c.archive = Some(archive.clone());
            (None, Vec::new())
        }
    };
    if let Some(f) = first {
        match &cli.command {
            Command::Simulate { .. } => c.kind = f.parse()?,
            Command::Trace { .. } => c.archive = Some(PathBuf::from(f)),
            Command::Estimate { .. } => c.estimator = f.to_string(),
            Command::Verify { .. } => c.test = f.to_string(),
            Command::ArchiveInfo { .. } => {}
        }
    }
    apply_overrides(&mut c, &overrides)?;
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.out = o.clone();
    }
    if let Some(t) = cli.threads {
        c.threads = t;
    }
    c.quick |= cli.quick;
    Ok(c)
}

/// Writes one line to stdout; a closed pipe is not an error.
fn say(line: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn execute(cli: &Cli, c: &RunConfig) -> Result<bool> {
    match &cli.command {
        Command::Simulate { .. } => {
            say(&serde_json::to_string(&cmd_simulate(c)?)?)?;
            Ok(true)
        }
        Command::Trace { .. } => {
            for f in cmd_trace(c)? {
                say(&f.display().to_string())?;
            }
            Ok(true)
        }
        Command::Estimate { .. } => {
            say(&serde_json::to_string_pretty(&cmd_estimate(c)?)?)?;
            Ok(true)
        }
        Command::Verify { .. } => {
            let reports = cmd_verify(c, |r| say(&serde_json::to_string(r)?))?;
            Ok(reports.iter().all(|r| r.passed))
        }
        Command::ArchiveInfo { .. } => {
            let path = c.archive.clone().unwrap_or_default();
            say(&serde_json::to_string_pretty(&cmd_archive_info(&path)?)?)?;
            Ok(true)
        }
    }
}

/// Entry point of the binary. Exit codes: 0 success, 1 a test failed,
/// 2 usage, config or runtime error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let run = || -> Result<bool> {
        let c = resolve_config(&cli)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(c.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| execute(&cli, &c))
    };
    match run() {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn complex_text_forms() {
        assert_eq!(parse_complex("1+1i").unwrap(), Complex64::new(1.0, 1.0));
        assert_eq!(parse_complex("3i").unwrap(), Complex64::new(0.0, 3.0));
        assert_eq!(parse_complex("-i").unwrap(), Complex64::new(0.0, -1.0));
        assert_eq!(parse_complex("2.5").unwrap(), Complex64::new(2.5, 0.0));
        assert_eq!(parse_complex("1e-3-2e+2i").unwrap(), Complex64::new(1e-3, -200.0));
        assert_eq!(parse_complex(" -0.5 + 0.25i ").unwrap(), Complex64::new(-0.5, 0.25));
        assert!(parse_complex("1+xi").is_err());
        assert_eq!(format_complex(Complex64::new(1.0, -2.0)), "1-2i");
    }

    #[test]
    fn config_file_with_comments() {
        let c = RunConfig::parse("# a run\nkappa = 6\nrho=-8 # force\nz0 = 1+1i\nregions = -1,1,0.25,0.75 | -1,1,0.75,1.25\n").unwrap();
        assert_eq!(c.kappa, Some(6.0));
        assert_eq!(c.rho, -8.0);
        assert_eq!(c.regions.len(), 2);
        assert!(RunConfig::parse("kappa 6").is_err());
        assert!(RunConfig::parse("colour = blue").is_err());
    }

    #[test]
    fn extended_rejects_large_rho() {
        let mut c = RunConfig::default();
        for (k, v) in [("kind", "extended"), ("kappa", "6"), ("rho", "0")] {
            c.set(k, v).unwrap();
        }
        let msg = c.driver_config().unwrap_err().to_string();
        assert!(msg.contains("rho <= kappa/2 - 4"), "{msg}");
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6f64..1e6, 1e-9f64..1e-3, Just(0.0)]
    }

    fn positive() -> impl Strategy<Value = f64> {
        prop_oneof![1e-6f64..1e3, Just(0.25)]
    }

    fn region() -> impl Strategy<Value = Region> {
        prop::collection::vec((-5.0f64..5.0, 1e-3f64..3.0, 0.0f64..3.0, 1e-3f64..3.0), 1..3).prop_map(|v| {
            Region::new(
                v.into_iter()
                    .map(|(x, w, y, h)| crate::loewner::Rect::new(x, x + w, y, y + h).unwrap())
                    .collect(),
            )
            .unwrap()
        })
    }

    prop_compose! {
        fn config()(
            kind in 0usize..4,
            kappa in prop::option::of(positive()),
            rho in finite(),
            z0 in (finite(), finite()),
            x0 in finite(),
            dt in positive(),
            horizon in positive(),
            n in prop::option::of(1usize..100_000),
            seed in any::<u64>(),
            regions in prop::collection::vec(region(), 1..3),
            r in positive(),
            t_list in prop::collection::vec(positive(), 0..4),
            z in (finite(), finite()),
            test in "[a-z-]{1,12}",
            archive in prop::option::of("[a-z_/]{1,12}"),
            stride in 1usize..50,
            quick in any::<bool>(),
            threads in 0usize..16,
        ) -> RunConfig {
            RunConfig {
                kind: SimKind::NAMES[kind].parse().unwrap(),
                kappa, rho, z0: Complex64::new(z0.0, z0.1), x0, dt, horizon, n, seed, regions, r,
                t_list, z: Complex64::new(z.0, z.1), test, archive: archive.map(PathBuf::from),
                stride, quick, threads,
                ..RunConfig::default()
            }
        }
    }

    proptest! {
        #[test]
        fn parse_emit_round_trip(c in config()) {
            let text = c.emit();
            let back = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
