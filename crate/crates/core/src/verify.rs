//! Seeded statistical experiments, one per decomposition identity.
//!
//! Every test takes a parameter struct (with a full-size `Default` and a
//! reduced `quick()` variant) plus a seed, and returns a [`TestReport`]
//! whose verdict is decided only by the checks recorded in it. The
//! significance level of every hypothesis test is [`SIGNIFICANCE`].

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::drivers::{
    brownian_path, replicate, run_force_point, DriverConfig, EndState, OutcomeCounts, RadialOptions,
    RunOutcome, simulate_radial_diffusion,
};
use crate::error::{Error, Result};
use crate::loewner::{
    evolve_points, first_approach_pieces, neighborhood_raster, trace_near, CurveTracer, Rect, Region,
    TraceMethod, DEFAULT_MAX_CELLS,
};
use crate::observables::{
    capacity_green_mc, estimate_c_kappa1, green_boundary, green_capacity_shape, green_interior,
    green_sle_shape, integrate_green, m_boundary, m_interior, psi0_boundary_exact, psi_u,
    sample_region_hits, sle_dimension, truncation_fraction, CKappaConfig, QuadratureGrid, SwallowSampler,
};
use crate::pathspace::{concat, kill, sample_killed, KillSpec, SampledPath, WeightProcess};
use crate::rng::{derive_seed_str, substream};
use crate::stats::{
    chi_squared_gof, kish_ess, ks_permutation_test, mean_se, proportion, ratio_of_means, weighted_ks_test,
    TwoSampleResult, Z95,
};

/// Per-test significance level.
pub const SIGNIFICANCE: f64 = 0.01;

/// Two-sided 99% normal quantile.
const Z99: f64 = 2.575_829_303_548_901;

/// Smallest Kish effective sample size accepted by the weighted tests.
pub const MIN_ESS: f64 = 100.0;

/// Names accepted by [`run_test`], in suite order.
pub const TEST_NAMES: &[&str] = &[
    "girsanov-reweighting",
    "tail-bound",
    "cross-simulator",
    "capacity-green",
    "c-kappa1",
    "occupation-identity",
    "capacity-decomposition",
    "natural-decomposition",
    "psi-decay",
    "brownian-bound",
    "path-algebra",
    "bm-disk",
    "boundary-martingale",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    /// `value > threshold`
    Above,
    /// `value ≥ threshold`
    AtLeast,
    /// `value ≤ threshold`
    AtMost,
}

/// One pre-registered pass/fail criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub kind: Comparison,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, kind: Comparison, threshold: f64) -> Self {
        // NaN compares false everywhere and therefore fails
        let passed = match kind {
            Comparison::Above => value > threshold,
            Comparison::AtLeast => value >= threshold,
            Comparison::AtMost => value <= threshold,
        };
        Check {
            name: name.into(),
            value,
            threshold,
            kind,
            passed,
        }
    }
}

/// Machine-readable outcome of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub hypothesis: String,
    pub seed: u64,
    pub significance: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub statistics: BTreeMap<String, f64>,
    pub sample_sizes: BTreeMap<String, usize>,
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn new(name: &str, hypothesis: &str, seed: u64) -> Self {
        TestReport {
            name: name.into(),
            hypothesis: hypothesis.into(),
            seed,
            significance: SIGNIFICANCE,
            passed: false,
            checks: Vec::new(),
            statistics: BTreeMap::new(),
            sample_sizes: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, value: f64, kind: Comparison, threshold: f64) {
        self.checks.push(Check::new(name, value, kind, threshold));
    }

    /// Records a KS result and registers `p > SIGNIFICANCE`.
    pub fn ks_check(&mut self, name: &str, r: &TwoSampleResult) {
        self.stat(&format!("{name}: D"), r.statistic);
        if let Some((ea, eb)) = r.effective_sizes {
            self.stat(&format!("{name}: ess a"), ea);
            self.stat(&format!("{name}: ess b"), eb);
        }
        self.check(format!("{name}: p-value ({})", r.method), r.p_value, Comparison::Above, SIGNIFICANCE);
    }

    pub fn stat(&mut self, name: &str, v: f64) {
        self.statistics.insert(name.into(), v);
    }

    pub fn size(&mut self, name: &str, n: usize) {
        self.sample_sizes.insert(name.into(), n);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn finish(mut self) -> Self {
        self.passed = !self.checks.is_empty() && self.checks.iter().all(|c| c.passed);
        self
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn joint_z(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let s = (se_a * se_a + se_b * se_b).sqrt();
    if s == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b).abs() / s
    }
}

fn require_ess(w: &[f64], what: &str) -> Result<f64> {
    let ess = kish_ess(w);
    if !(ess >= MIN_ESS) {
        return Err(Error::Numerical(format!(
            "effective sample size of the {what} weights is {ess:.1}, below {MIN_ESS}"
        )));
    }
    Ok(ess)
}

fn check_unresolved(counts: &OutcomeCounts, what: &str) -> Result<()> {
    if counts.unresolved_fraction() > 0.01 {
        return Err(Error::Numerical(format!(
            "{} of {} {what} runs unresolved (more than 1%)",
            counts.unresolved,
            counts.total()
        )));
    }
    Ok(())
}

fn collect<T>(v: Vec<Result<T>>) -> Result<Vec<T>> {
    v.into_iter().collect()
}

fn uniform_in<R: Rng + ?Sized>(r: &Rect, rng: &mut R) -> Complex64 {
    Complex64::new(rng.random_range(r.x_min..r.x_max), rng.random_range(r.y_min..r.y_max))
}

/// Rejection sampler for a density `∝ 1_U f` with `f ≤ bound` on `U`.
fn sample_density<R: Rng + ?Sized>(
    region: &Region,
    bound: f64,
    f: impl Fn(Complex64) -> f64,
    rng: &mut R,
) -> Result<Complex64> {
    let bbox = region.bounding_box();
    for _ in 0..10_000_000 {
        let z = uniform_in(&bbox, rng);
        if region.contains(z) && z.im > 0.0 && rng.random::<f64>() * bound < f(z) {
            return Ok(z);
        }
    }
    Err(Error::Numerical("rejection sampler made no progress".into()))
}

/// 2×2 partition of the bounding box, each cell intersected with `region`.
fn quadrant_masses(region: &Region, pitch: f64, f: impl Fn(Complex64) -> f64 + Sync) -> Result<(Vec<Rect>, Vec<f64>)> {
    let b = region.bounding_box();
    let (xm, ym) = (0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max));
    let cells = vec![
        Rect::new(b.x_min, xm, b.y_min, ym)?,
        Rect::new(xm, b.x_max, b.y_min, ym)?,
        Rect::new(b.x_min, xm, ym, b.y_max)?,
        Rect::new(xm, b.x_max, ym, b.y_max)?,
    ];
    let mut masses = Vec::new();
    for c in &cells {
        let grid = QuadratureGrid::new(&Region::new(vec![*c])?, pitch)?;
        masses.push(grid.integrate(|z| if region.contains(z) && z.im > 0.0 { f(z) } else { 0.0 }));
    }
    let total: f64 = masses.iter().sum();
    Ok((cells, masses.iter().map(|m| m / total).collect()))
}

fn quadrant_counts(cells: &[Rect], points: &[Complex64]) -> Vec<usize> {
    let mut counts = vec![0; cells.len()];
    for z in points {
        if let Some(i) = cells.iter().position(|c| c.contains(*z)) {
            counts[i] += 1;
        }
    }
    counts
}

// ---------------------------------------------------------------------------
// Girsanov reweighting, interior force point

#[derive(Debug, Clone, PartialEq)]
pub struct GirsanovParams {
    pub kappa: f64,
    pub rho: f64,
    pub z0: Complex64,
    pub t: f64,
    pub n: usize,
    pub dt: f64,
    pub swallow_eps: f64,
    pub permutations: usize,
}

impl Default for GirsanovParams {
    fn default() -> Self {
        GirsanovParams {
            kappa: 8.0 / 3.0,
            rho: 8.0 / 3.0 - 8.0,
            z0: Complex64::new(0.0, 1.0),
            t: 0.25,
            n: 10_000,
            dt: 1e-4,
            swallow_eps: 1e-3,
            permutations: 999,
        }
    }
}

impl GirsanovParams {
    pub fn quick() -> Self {
        GirsanovParams {
            n: 2000,
            dt: 1e-3,
            ..Default::default()
        }
    }
}

struct Reweighting {
    weighted: Vec<(EndState, f64)>,
    direct_alive: Vec<EndState>,
    brownian_counts: OutcomeCounts,
    direct_counts: OutcomeCounts,
}

fn reweighting_samples(
    base: DriverConfig,
    rho: f64,
    n: usize,
    seed: u64,
    weight: impl Fn(&EndState) -> f64 + Sync,
) -> Result<Reweighting> {
    let brown_cfg = DriverConfig { rho: 0.0, ..base.clone() };
    let direct_cfg = DriverConfig { rho, ..base };
    brown_cfg.validate()?;
    direct_cfg.validate()?;
    let brown = collect(replicate(derive_seed_str(seed, "brownian"), n, |rng| run_force_point(&brown_cfg, rng)))?;
    let direct = collect(replicate(derive_seed_str(seed, "direct"), n, |rng| run_force_point(&direct_cfg, rng)))?;
    let brownian_counts = OutcomeCounts::tally(brown.iter().map(|r| &r.0));
    let direct_counts = OutcomeCounts::tally(direct.iter().map(|r| &r.0));
    check_unresolved(&brownian_counts, "Brownian")?;
    check_unresolved(&direct_counts, "direct")?;
    let weighted = brown
        .iter()
        .filter_map(|(o, e)| match o {
            RunOutcome::Horizon => Some((*e, weight(e))),
            RunOutcome::Swallowed { .. } => Some((*e, 0.0)),
            RunOutcome::Unresolved => None,
        })
        .collect();
    let direct_alive = direct
        .iter()
        .filter(|(o, _)| matches!(o, RunOutcome::Horizon))
        .map(|(_, e)| *e)
        .collect();
    Ok(Reweighting {
        weighted,
        direct_alive,
        brownian_counts,
        direct_counts,
    })
}

fn reweighting_checks(
    rep: &mut TestReport,
    s: &Reweighting,
    functionals: &[(&str, fn(&EndState) -> f64)],
    permutations: usize,
    seed: u64,
) -> Result<()> {
    let w: Vec<f64> = s.weighted.iter().map(|p| p.1).collect();
    let ess = require_ess(&w, "Girsanov")?;
    rep.stat("weight ess", ess);
    rep.size("brownian runs", s.brownian_counts.total());
    rep.size("direct runs", s.direct_counts.total());
    rep.size("direct alive", s.direct_alive.len());
    rep.size("brownian unresolved", s.brownian_counts.unresolved);
    rep.size("direct unresolved", s.direct_counts.unresolved);
    if s.direct_alive.is_empty() {
        return Err(Error::Numerical("no direct path survived to t".into()));
    }
    let ones = vec![1.0; s.direct_alive.len()];
    for (i, (name, f)) in functionals.iter().enumerate() {
        let a: Vec<f64> = s.weighted.iter().map(|p| f(&p.0)).collect();
        let b: Vec<f64> = s.direct_alive.iter().map(f).collect();
        let mut rng = substream(derive_seed_str(seed, "permutation"), i as u64);
        let r = weighted_ks_test(&a, &w, &b, &ones, permutations, &mut rng)?;
        rep.ks_check(&format!("ks {name}"), &r);
    }
    // E[M_t/G] = P[T > t]
    let (mw, se_w) = mean_se(&w);
    let resolved = s.direct_counts.total() - s.direct_counts.unresolved;
    let p = proportion(s.direct_alive.len(), resolved);
    rep.stat("mean weight", mw);
    rep.stat("mean weight se", se_w);
    rep.stat("direct survival", p.estimate);
    rep.stat("direct survival se", p.se);
    rep.check("mean weight vs survival (joint se)", joint_z(mw, se_w, p.estimate, p.se), Comparison::AtMost, 3.0);
    Ok(())
}

/// Brownian paths weighted by `M_t(z₀)/G(z₀)` against direct SLE_κ(ρ) paths
/// alive at `t`, on `λ_t` and `Im(g_t(z₀) − λ_t)`.
pub fn test_girsanov_reweighting(p: &GirsanovParams, seed: u64) -> Result<TestReport> {
    if !(p.t > 0.0) {
        return Err(Error::invalid("t must be positive"));
    }
    let mut rep = TestReport::new(
        "girsanov-reweighting",
        "on {T > t}, SLE_kappa(rho) with interior force point has density M_t(z0)/G(z0) against SLE_kappa",
        seed,
    );
    let g0 = green_interior(p.kappa, p.rho, p.z0)?;
    let mut base = DriverConfig::interior(p.kappa, 0.0, p.z0, p.dt, p.t);
    base.swallow_eps = p.swallow_eps;
    let (kappa, rho) = (p.kappa, p.rho);
    let s = reweighting_samples(base, rho, p.n, seed, |e| m_interior(kappa, rho, e.z, e.log_d) / g0)?;
    reweighting_checks(
        &mut rep,
        &s,
        &[("lambda_t", |e| e.lambda), ("Im Z_t", |e| e.z.im)],
        p.permutations,
        seed,
    )?;
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Swallowing-time tail bound

#[derive(Debug, Clone, PartialEq)]
pub struct TailBoundParams {
    pub kappas: Vec<f64>,
    pub rho: f64,
    pub z0: Complex64,
    pub b_list: Vec<f64>,
    pub n: usize,
    pub dt: f64,
}

impl Default for TailBoundParams {
    fn default() -> Self {
        TailBoundParams {
            kappas: vec![2.0, 6.0],
            rho: -8.0,
            z0: Complex64::new(0.0, 1.0),
            b_list: vec![1.0, 2.0, 3.0],
            n: 1000,
            dt: 1e-3,
        }
    }
}

impl TailBoundParams {
    pub fn quick() -> Self {
        TailBoundParams {
            n: 200,
            ..Default::default()
        }
    }
}

/// `P[T ≤ 2|z₀|²e^{2b}] ≥ 1 − 2e^{−2b/κ}` for each `(κ, b)`, and `T ≥ y₀²/4`
/// for every sample.
pub fn test_tail_bound(p: &TailBoundParams, seed: u64) -> Result<TestReport> {
    if p.b_list.iter().any(|b| !(*b > 0.0)) || p.b_list.is_empty() {
        return Err(Error::invalid("b values must be positive"));
    }
    let mut rep = TestReport::new(
        "tail-bound",
        "P[T_z0 <= 2|z0|^2 e^(2b)] >= 1 - 2 exp(-2b/kappa) for rho <= kappa/2 - 4, and T_z0 >= y0^2/4",
        seed,
    );
    let r2 = p.z0.norm_sqr();
    let bmax = p.b_list.iter().cloned().fold(0.0, f64::max);
    // a run still alive at the horizon counts as T > horizon: conservative
    let horizon = 2.0 * r2 * (2.0 * bmax).exp();
    for &kappa in &p.kappas {
        let cfg = DriverConfig::interior(kappa, p.rho, p.z0, p.dt, horizon);
        cfg.validate_extendable()?;
        let runs = collect(replicate(derive_seed_str(seed, &format!("kappa={kappa}")), p.n, |rng| {
            run_force_point(&cfg, rng)
        }))?;
        let counts = OutcomeCounts::tally(runs.iter().map(|r| &r.0));
        let times: Vec<f64> = runs.iter().filter_map(|r| r.0.swallow_time()).collect();
        rep.size(&format!("kappa={kappa}: runs"), p.n);
        rep.size(&format!("kappa={kappa}: unresolved"), counts.unresolved);
        rep.size(&format!("kappa={kappa}: alive at horizon"), counts.horizon);
        for &b in &p.b_list {
            let level = 2.0 * r2 * (2.0 * b).exp();
            let hits = times.iter().filter(|t| **t <= level).count();
            let q = proportion(hits, p.n);
            let bound = 1.0 - 2.0 * (-2.0 * b / kappa).exp();
            rep.stat(&format!("kappa={kappa}, b={b}: bound"), bound);
            if bound <= 0.0 {
                rep.note(format!("kappa={kappa}, b={b}: bound is vacuous"));
            }
            rep.check(
                format!("kappa={kappa}, b={b}: frequency + 3 se"),
                q.estimate + 3.0 * q.se,
                Comparison::AtLeast,
                bound,
            );
        }
        let tmin = times.iter().cloned().fold(f64::INFINITY, f64::min);
        rep.stat(&format!("kappa={kappa}: min T"), tmin);
        let below = times.iter().filter(|t| **t < p.z0.im * p.z0.im / 4.0).count();
        rep.check(format!("kappa={kappa}: samples with T < y0^2/4"), below as f64, Comparison::AtMost, 0.0);
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Direct SDE vs radial diffusion

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSimulatorParams {
    pub kappa: f64,
    pub rho: f64,
    pub z0: Complex64,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    pub swallow_eps: f64,
    pub radial: RadialOptions,
    pub permutations: usize,
}

impl Default for CrossSimulatorParams {
    fn default() -> Self {
        CrossSimulatorParams {
            kappa: 6.0,
            rho: -8.0,
            z0: Complex64::new(0.0, 1.0),
            n: 1000,
            dt: 1e-3,
            horizon: 50.0,
            swallow_eps: 1e-3,
            radial: RadialOptions::default(),
            permutations: 999,
        }
    }
}

impl CrossSimulatorParams {
    pub fn quick() -> Self {
        CrossSimulatorParams {
            n: 300,
            ..Default::default()
        }
    }
}

/// Swallowing-time laws from the two simulators, compared as `T ∧ horizon`.
pub fn test_cross_simulator(p: &CrossSimulatorParams, seed: u64) -> Result<TestReport> {
    let mut rep = TestReport::new(
        "cross-simulator",
        "the direct SDE and the radial diffusion with its time change give the same law of T_z0",
        seed,
    );
    let mut cfg = DriverConfig::interior(p.kappa, p.rho, p.z0, p.dt, p.horizon);
    cfg.swallow_eps = p.swallow_eps;
    cfg.validate_extendable()?;
    let direct = collect(replicate(derive_seed_str(seed, "direct"), p.n, |rng| run_force_point(&cfg, rng)))?;
    let counts = OutcomeCounts::tally(direct.iter().map(|r| &r.0));
    check_unresolved(&counts, "direct")?;
    let a: Vec<f64> = direct
        .iter()
        .filter(|r| !r.0.is_unresolved())
        .map(|r| r.0.swallow_time().unwrap_or(p.horizon).min(p.horizon))
        .collect();
    let radial = collect(replicate(derive_seed_str(seed, "radial"), p.n, |rng| {
        simulate_radial_diffusion(&cfg, &p.radial, rng)
    }))?;
    let flagged = radial.iter().filter(|s| s.flagged).count();
    let b: Vec<f64> = radial.iter().map(|s| s.swallow_time.min(p.horizon)).collect();
    rep.size("direct", a.len());
    rep.size("radial", b.len());
    rep.size("direct alive at horizon", counts.horizon);
    rep.size("radial tail flagged", flagged);
    let r = ks_permutation_test(&a, &b, p.permutations, &mut substream(derive_seed_str(seed, "permutation"), 0))?;
    rep.ks_check("ks T", &r);
    rep.stat("direct mean T", mean_se(&a).0);
    rep.stat("radial mean T", mean_se(&b).0);
    // swallow threshold sensitivity
    let m = (p.n / 4).max(10);
    for factor in [1.0, 10.0] {
        let mut c = cfg.clone();
        c.swallow_eps = p.swallow_eps * factor;
        let runs = collect(replicate(derive_seed_str(seed, "eps-sensitivity"), m, |rng| run_force_point(&c, rng)))?;
        let t: Vec<f64> = runs.iter().filter_map(|r| r.0.swallow_time()).map(|t| t.min(p.horizon)).collect();
        rep.stat(&format!("mean T at swallow_eps={}", c.swallow_eps), mean_se(&t).0);
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Capacity Green's function

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityGreenParams {
    pub kappa: f64,
    pub n: usize,
    pub scales: Vec<f64>,
    pub sampler: SwallowSampler,
}

impl Default for CapacityGreenParams {
    fn default() -> Self {
        CapacityGreenParams {
            kappa: 6.0,
            n: 1000,
            scales: vec![0.5, 1.0],
            sampler: SwallowSampler::default(),
        }
    }
}

impl CapacityGreenParams {
    pub fn quick() -> Self {
        CapacityGreenParams {
            n: 300,
            ..Default::default()
        }
    }
}

/// `G_1(3i) = 0` and `G_{4}(2ic) = G_1(ic)`.
pub fn test_capacity_green(p: &CapacityGreenParams, seed: u64) -> Result<TestReport> {
    let mut rep = TestReport::new(
        "capacity-green",
        "G_t(z) = 0 when Im z > 2 sqrt(t), and G_(a^2 t)(a z) = G_t(z)",
        seed,
    );
    let i = Complex64::new(0.0, 1.0);
    let zero = capacity_green_mc(p.kappa, 3.0 * i, 1.0, p.n, &p.sampler, derive_seed_str(seed, "zero"))?;
    rep.check("G_1(3i)", zero.value, Comparison::AtMost, 0.0);
    rep.size("G_1(3i)", zero.n);
    for &c in &p.scales {
        let big = capacity_green_mc(p.kappa, 2.0 * c * i, 4.0, p.n, &p.sampler, derive_seed_str(seed, &format!("big/{c}")))?;
        let small = capacity_green_mc(p.kappa, c * i, 1.0, p.n, &p.sampler, derive_seed_str(seed, &format!("small/{c}")))?;
        rep.stat(&format!("c={c}: G_4(2ic)"), big.value);
        rep.stat(&format!("c={c}: G_1(ic)"), small.value);
        rep.size(&format!("c={c}"), big.n.min(small.n));
        rep.check(
            format!("c={c}: |G_4(2ic) - G_1(ic)| / joint se"),
            joint_z(big.value, big.stderr, small.value, small.stderr),
            Comparison::AtMost,
            Z95,
        );
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// C_{κ,1} from two routes

pub fn c_kappa1_quick(kappa: f64, seed: u64) -> CKappaConfig {
    CKappaConfig {
        curves: 600,
        lattice_points: 4000,
        ..CKappaConfig::new(kappa, seed)
    }
}

/// Occupation route against the lattice integral of `G_1`.
pub fn test_c_kappa1(cfg: &CKappaConfig) -> Result<TestReport> {
    let mut rep = TestReport::new(
        "c-kappa1",
        "int_U G dA / E[occupation(U)] equals int_H G_1 dA (both estimate C_(kappa,1))",
        cfg.seed,
    );
    let est = estimate_c_kappa1(cfg)?;
    let (a, b) = (&est.route_a, &est.route_b);
    rep.stat("route A", a.value);
    rep.stat("route A se", a.stderr);
    rep.stat("route B", b.value);
    rep.stat("route B se", b.stderr);
    rep.stat("ratio A/B", est.ratio);
    rep.stat("ratio se", est.ratio_se);
    for (t, r) in &est.per_t {
        rep.stat(&format!("C_t/t at t={t}"), r.value);
        rep.stat(&format!("C_t/t at t={t}: se"), r.stderr);
    }
    for f in a.flags.iter().chain(&b.flags) {
        rep.note(f.clone());
    }
    rep.size("curves", a.n);
    rep.size("lattice points", b.n);
    rep.check("|A - B| / joint se", joint_z(a.value, a.stderr, b.value, b.stderr), Comparison::AtMost, Z95);
    rep.check(
        "relative difference",
        (a.value - b.value).abs() / (0.5 * (a.value + b.value)),
        Comparison::AtMost,
        0.10,
    );
    rep.check("route A ci lower end", a.ci95[0], Comparison::Above, 0.0);
    rep.check("route B ci lower end", b.ci95[0], Comparison::Above, 0.0);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Occupation ratio

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationParams {
    pub kappa: f64,
    pub u1: Region,
    pub u2: Region,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    pub pitch: f64,
}

impl Default for OccupationParams {
    fn default() -> Self {
        OccupationParams {
            kappa: 6.0,
            u1: Region::rect(-1.0, 1.0, 0.25, 0.75).expect("valid rectangle"),
            u2: Region::rect(-1.0, 1.0, 0.75, 1.25).expect("valid rectangle"),
            n: 1000,
            dt: 1e-3,
            horizon: 10.0,
            pitch: 0.01,
        }
    }
}

impl OccupationParams {
    pub fn quick() -> Self {
        OccupationParams {
            n: 300,
            ..Default::default()
        }
    }
}

/// `E[occ(U₁)]/E[occ(U₂)] = ∫_{U₁} G / ∫_{U₂} G` with `G = (Im z/|z|)^{8/κ}`.
pub fn test_occupation_identity(p: &OccupationParams, seed: u64) -> Result<TestReport> {
    let mut rep = TestReport::new(
        "occupation-identity",
        "E[occupation time of U] is proportional to the integral of (Im z/|z|)^(8/kappa) over U",
        seed,
    );
    let kappa = p.kappa;
    let q1 = integrate_green(&p.u1, p.pitch, |z| green_capacity_shape(kappa, z))?;
    let q2 = integrate_green(&p.u2, p.pitch, |z| green_capacity_shape(kappa, z))?;
    let mut rects = p.u1.rects().to_vec();
    rects.extend_from_slice(p.u2.rects());
    let union = Region::new(rects)?;
    let hits = sample_region_hits(kappa, p.dt, p.horizon, &union, p.n, derive_seed_str(seed, "curves"))?;
    let o1: Vec<f64> = hits.iter().map(|h| h.occupation(&p.u1)).collect();
    let o2: Vec<f64> = hits.iter().map(|h| h.occupation(&p.u2)).collect();
    for (o, name) in [(&o1, "U1"), (&o2, "U2")] {
        let (m, se) = mean_se(o);
        rep.stat(&format!("mean occupation {name}"), m);
        if !(m - Z95 * se > 0.0) {
            return Err(Error::Numerical(format!("occupation CI of {name} contains 0")));
        }
    }
    let (r, se) = ratio_of_means(&o1, &o2);
    let q = q1.value / q2.value;
    rep.stat("empirical ratio", r);
    rep.stat("empirical ratio se", se);
    rep.stat("quadrature ratio", q);
    rep.size("curves", p.n);
    let trunc = truncation_fraction(kappa, &union, p.horizon, 2000, &RadialOptions::default(), derive_seed_str(seed, "truncation"))?;
    rep.stat("truncation fraction", trunc);
    rep.check("|ratio - quadrature| / se", joint_z(r, se, q, 0.0), Comparison::AtMost, Z95);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Capacity decomposition: marked points

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityDecompositionParams {
    pub kappa: f64,
    pub region: Region,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    pub pitch: f64,
}

impl Default for CapacityDecompositionParams {
    fn default() -> Self {
        CapacityDecompositionParams {
            kappa: 6.0,
            region: Region::rect(-1.0, 1.0, 0.25, 1.25).expect("valid rectangle"),
            n: 1000,
            dt: 1e-3,
            horizon: 10.0,
            pitch: 0.01,
        }
    }
}

impl CapacityDecompositionParams {
    pub fn quick() -> Self {
        CapacityDecompositionParams {
            n: 300,
            ..Default::default()
        }
    }
}

/// Method (i): `z ∝ 1_U G`, first arm of SLE_κ(−8) to `T_z`. Method (ii):
/// chordal curves weighted by occupation of `U`, a uniformly chosen visit.
/// Both are restricted to marked times below the horizon.
pub fn test_capacity_decomposition(p: &CapacityDecompositionParams, seed: u64) -> Result<TestReport> {
    let mut rep = TestReport::new(
        "capacity-decomposition",
        "SLE_kappa(-8) to a point z ~ 1_U G dA continued by SLE_kappa equals SLE_kappa marked by capacity time in U",
        seed,
    );
    let kappa = p.kappa;
    let g = |z: Complex64| green_capacity_shape(kappa, z).unwrap_or(0.0);
    let mass = integrate_green(&p.region, p.pitch, |z| green_capacity_shape(kappa, z))?;
    rep.stat("integral of G over U", mass.value);

    let region = &p.region;
    let first = collect(replicate(derive_seed_str(seed, "method-i"), p.n, |rng| -> Result<(Complex64, RunOutcome)> {
        let z = sample_density(region, 1.0, g, rng)?;
        let cfg = DriverConfig::interior(kappa, -8.0, z, p.dt, p.horizon);
        Ok((z, run_force_point(&cfg, rng)?.0))
    }))?;
    let counts = OutcomeCounts::tally(first.iter().map(|r| &r.1));
    check_unresolved(&counts, "first-arm")?;
    let late = counts.horizon as f64 / (counts.total() - counts.unresolved) as f64;
    rep.stat("truncation fraction", late);
    if late > 0.05 {
        return Err(Error::Numerical(format!(
            "horizon {} loses {:.1}% of the occupation weight",
            p.horizon,
            100.0 * late
        )));
    }
    let points: Vec<Complex64> = first.iter().map(|r| r.0).collect();
    let (cells, probs) = quadrant_masses(region, p.pitch, g)?;
    let (chi2, chi_p) = chi_squared_gof(&quadrant_counts(&cells, &points), &probs)?;
    rep.stat("marked point chi2", chi2);
    rep.check("marked point density chi2 p-value", chi_p, Comparison::Above, SIGNIFICANCE);

    let a: Vec<[f64; 3]> = first
        .iter()
        .filter_map(|(z, o)| o.swallow_time().filter(|t| *t <= p.horizon).map(|t| [t, z.re, z.im]))
        .collect();

    let hits = sample_region_hits(kappa, p.dt, p.horizon, region, p.n, derive_seed_str(seed, "method-ii"))?;
    let pick_seed = derive_seed_str(seed, "pick");
    let mut b = Vec::new();
    let mut wb = Vec::new();
    for (i, h) in hits.iter().enumerate() {
        if h.hits.is_empty() {
            continue;
        }
        let mut rng = substream(pick_seed, i as u64);
        let (k, z) = h.hits[rng.random_range(0..h.hits.len())];
        b.push([k as f64 * h.dt, z.re, z.im]);
        wb.push(h.dt * h.hits.len() as f64);
    }
    rep.size("method i", a.len());
    rep.size("method ii curves", p.n);
    rep.size("method ii visiting curves", b.len());
    require_ess(&wb, "occupation")?;
    let wa = vec![1.0; a.len()];
    for (c, name) in ["junction time", "Re z", "Im z"].iter().enumerate() {
        let xa: Vec<f64> = a.iter().map(|v| v[c]).collect();
        let xb: Vec<f64> = b.iter().map(|v| v[c]).collect();
        let mut rng = substream(derive_seed_str(seed, "permutation"), c as u64);
        let r = weighted_ks_test(&xa, &wa, &xb, &wb, 999, &mut rng)?;
        rep.ks_check(&format!("ks {name}"), &r);
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Natural decomposition at fixed r

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalDecompositionParams {
    pub kappa: f64,
    /// Lower and upper halves of the test box.
    pub lower: Rect,
    pub upper: Rect,
    pub n: usize,
    pub r: f64,
    pub dt: f64,
    pub horizon: f64,
    pub pitch: f64,
}

impl Default for NaturalDecompositionParams {
    fn default() -> Self {
        NaturalDecompositionParams {
            kappa: 8.0 / 3.0,
            lower: Rect::new(-0.5, 0.5, 0.5, 0.75).expect("valid rectangle"),
            upper: Rect::new(-0.5, 0.5, 0.75, 1.0).expect("valid rectangle"),
            n: 1000,
            r: 0.02,
            dt: 1e-4,
            horizon: 4.0,
            pitch: 0.02 / 8.0,
        }
    }
}

impl NaturalDecompositionParams {
    pub fn quick() -> Self {
        NaturalDecompositionParams {
            n: 250,
            dt: 2.5e-4,
            ..Default::default()
        }
    }
}

/// Method (i): `z ∝ 1_U G`, SLE_κ(κ−8) to `T_z`, recording `(T_z, λ(T_z−))`.
/// Method (ii): chordal curves weighted by the fixed-`r` Minkowski content
/// of `γ ∩ U`, a marked point drawn from the `r`-neighbourhood, recording
/// the first time the curve comes within `r` of it and the driver there.
pub fn test_natural_decomposition(p: &NaturalDecompositionParams, seed: u64) -> Result<TestReport> {
    let kappa = p.kappa;
    if !(kappa > 0.0 && kappa < 8.0) {
        return Err(Error::precondition(format!("natural decomposition needs kappa in (0, 8), got {kappa}")));
    }
    let region = Region::new(vec![p.lower, p.upper])?;
    if region.bounding_box().y_min <= 0.0 {
        return Err(Error::precondition("region must be pre-compact in H"));
    }
    let mut rep = TestReport::new(
        "natural-decomposition",
        "SLE_kappa(kappa-8) to z ~ 1_U G dA continued by SLE_kappa equals SLE_kappa marked by its Minkowski content in U",
        seed,
    );
    rep.note(format!(
        "Minkowski content at fixed r = {}; the marked time is the first approach within r, a biased surrogate of the hitting time",
        p.r
    ));
    let g = |z: Complex64| green_sle_shape(kappa, z).unwrap_or(0.0);
    let bound = region.min_modulus().powf(sle_dimension(kappa) - 2.0);
    let lower = Region::new(vec![p.lower])?;
    let upper = Region::new(vec![p.upper])?;
    let m_lo = integrate_green(&lower, 0.01, |z| green_sle_shape(kappa, z))?.value;
    let m_up = integrate_green(&upper, 0.01, |z| green_sle_shape(kappa, z))?.value;

    let first = collect(replicate(derive_seed_str(seed, "method-i"), p.n, |rng| -> Result<(Complex64, RunOutcome, EndState)> {
        let z = sample_density(&region, bound, g, rng)?;
        let cfg = DriverConfig::interior(kappa, kappa - 8.0, z, p.dt, p.horizon);
        let (o, e) = run_force_point(&cfg, rng)?;
        Ok((z, o, e))
    }))?;
    let counts = OutcomeCounts::tally(first.iter().map(|r| &r.1));
    check_unresolved(&counts, "first-arm")?;
    rep.stat("method i alive at horizon", counts.horizon as f64 / p.n as f64);
    let points: Vec<Complex64> = first.iter().map(|r| r.0).collect();
    let (cells, probs) = quadrant_masses(&region, 0.01, g)?;
    let (_, chi_p) = chi_squared_gof(&quadrant_counts(&cells, &points), &probs)?;
    rep.check("marked point density chi2 p-value", chi_p, Comparison::Above, SIGNIFICANCE);
    let a: Vec<[f64; 2]> = first
        .iter()
        .filter_map(|(_, o, e)| o.swallow_time().filter(|t| *t <= p.horizon).map(|t| [t, e.lambda]))
        .collect();

    let scale = p.r.powf(sle_dimension(kappa) - 2.0);
    let bbox = region.bounding_box();
    let pick_seed = derive_seed_str(seed, "pick");
    let second = collect(replicate(derive_seed_str(seed, "method-ii"), p.n, |rng| -> Result<Option<(f64, f64, f64, f64)>> {
        let driver = brownian_path(kappa, p.dt, p.horizon, rng);
        let tracer = CurveTracer::new(&driver, TraceMethod::default())?;
        let pieces = trace_near(&tracer, &bbox, p.r + 0.05, 16);
        let lines: Vec<&[Complex64]> = pieces.iter().map(|q| q.points.as_slice()).collect();
        let lo = neighborhood_raster(&lines, &lower, p.r, p.pitch, DEFAULT_MAX_CELLS)?;
        let up = neighborhood_raster(&lines, &upper, p.r, p.pitch, DEFAULT_MAX_CELLS)?;
        let (c_lo, c_up) = (scale * lo.area(), scale * up.area());
        let mut cells = lo.marked_cells();
        cells.extend(up.marked_cells());
        if cells.is_empty() {
            return Ok(Some((0.0, 0.0, f64::NAN, f64::NAN)));
        }
        let mut pick = substream(pick_seed, rng.random::<u64>());
        let z = cells[pick.random_range(0..cells.len())];
        Ok(first_approach_pieces(&pieces, z, p.r).map(|k| (c_lo, c_up, k as f64 * p.dt, driver.values()[k])))
    }))?;
    let missed = second.iter().filter(|s| s.is_none()).count();
    let second: Vec<(f64, f64, f64, f64)> = second.into_iter().flatten().collect();
    let (lo_c, up_c): (Vec<f64>, Vec<f64>) = second.iter().map(|s| (s.0, s.1)).unzip();
    let marked: Vec<&(f64, f64, f64, f64)> = second.iter().filter(|s| s.0 + s.1 > 0.0).collect();
    let wb: Vec<f64> = marked.iter().map(|s| s.0 + s.1).collect();
    rep.size("method i", a.len());
    rep.size("method ii curves", p.n);
    rep.size("method ii marked", marked.len());
    rep.size("marked cell without approach", missed);
    let ess = require_ess(&wb, "content")?;
    rep.stat("content weight ess", ess);
    let wa = vec![1.0; a.len()];
    for (c, name) in ["marked time", "driver at marked time"].iter().enumerate() {
        let xa: Vec<f64> = a.iter().map(|v| v[c]).collect();
        let xb: Vec<f64> = marked.iter().map(|s| if c == 0 { s.2 } else { s.3 }).collect();
        let mut rng = substream(derive_seed_str(seed, "permutation"), c as u64);
        let r = weighted_ks_test(&xa, &wa, &xb, &wb, 999, &mut rng)?;
        rep.ks_check(&format!("ks {name}"), &r);
    }
    let (ratio, ratio_se) = ratio_of_means(&lo_c, &up_c);
    let q = m_lo / m_up;
    rep.stat("content ratio lower/upper", ratio);
    rep.stat("content ratio se", ratio_se);
    rep.stat("quadrature ratio", q);
    rep.check("content ratio relative error", (ratio / q - 1.0).abs(), Comparison::AtMost, 0.15);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Ψ decay

#[derive(Debug, Clone, PartialEq)]
pub struct PsiDecayParams {
    pub kappa: f64,
    pub rho: f64,
    pub region: Region,
    pub pitch: f64,
    pub paths: usize,
    pub dt: f64,
    pub times: Vec<f64>,
}

impl Default for PsiDecayParams {
    fn default() -> Self {
        PsiDecayParams {
            kappa: 8.0 / 3.0,
            rho: 8.0 / 3.0 - 8.0,
            region: Region::rect(-0.5, 0.5, 0.25, 1.0).expect("valid rectangle"),
            pitch: 0.05,
            paths: 200,
            dt: 4e-3,
            times: vec![1.0, 4.0, 16.0],
        }
    }
}

impl PsiDecayParams {
    pub fn quick() -> Self {
        PsiDecayParams {
            paths: 50,
            ..Default::default()
        }
    }
}

/// `E[Ψ_t(U)] ≤ π 2^{1/κ} R^{2+(ρ+2)/κ+ρ²/(8κ)} t^{−1/κ}` with `R = max |z|` on `U`.
pub fn psi_decay_bound(kappa: f64, rho: f64, r: f64, t: f64) -> f64 {
    std::f64::consts::PI
        * 2f64.powf(1.0 / kappa)
        * r.powf(2.0 + (rho + 2.0) / kappa + rho * rho / (8.0 * kappa))
        * t.powf(-1.0 / kappa)
}

pub fn test_psi_decay(p: &PsiDecayParams, seed: u64) -> Result<TestReport> {
    let mut rep = TestReport::new(
        "psi-decay",
        "E[Psi_t(U)] <= pi 2^(1/kappa) R^(2+(rho+2)/kappa+rho^2/(8 kappa)) t^(-1/kappa)",
        seed,
    );
    if p.times.iter().any(|t| !(*t > 0.0)) || p.times.is_empty() {
        return Err(Error::invalid("times must be positive"));
    }
    let grid = QuadratureGrid::new(&p.region, p.pitch)?;
    let tmax = p.times.iter().cloned().fold(0.0, f64::max);
    let every = (1.0 / p.dt).round().max(1.0) as usize;
    let eps = 1e-3 * p.region.min_modulus();
    let (kappa, rho) = (p.kappa, p.rho);
    let psis = collect(replicate(derive_seed_str(seed, "paths"), p.paths, |rng| -> Result<Vec<(f64, f64)>> {
        let driver = brownian_path(kappa, p.dt, tmax, rng);
        let states = evolve_points(&driver, &grid.nodes, every, eps)?;
        let vals = psi_u(&states, &grid, kappa, rho)?;
        Ok(states.iter().map(|s| s.t).zip(vals).collect())
    }))?;
    rep.size("paths", p.paths);
    rep.size("nodes", grid.nodes.len());
    let r = p.region.max_modulus();
    let psi0: f64 = grid.nodes.iter().zip(&grid.weights).map(|(z, w)| w * green_interior(kappa, rho, *z).unwrap_or(0.0)).sum();
    rep.stat("Psi_0", psi0);
    for &t in &p.times {
        let at: Vec<f64> = psis
            .iter()
            .map(|v| {
                v.iter()
                    .find(|(s, _)| (s - t).abs() < 0.5 * p.dt)
                    .map(|x| x.1)
                    .ok_or_else(|| Error::Numerical(format!("no flow snapshot at t = {t}")))
            })
            .collect::<Result<_>>()?;
        let (m, se) = mean_se(&at);
        let bound = psi_decay_bound(kappa, rho, r, t);
        rep.stat(&format!("t={t}: mean Psi"), m);
        rep.stat(&format!("t={t}: se"), se);
        rep.check(format!("t={t}: mean - 3 se"), m - 3.0 * se, Comparison::AtMost, bound);
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Brownian corridor bound

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianBoundParams {
    pub kappas: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl Default for BrownianBoundParams {
    fn default() -> Self {
        BrownianBoundParams {
            kappas: vec![1.0, 2.0, 4.0],
            a: 1.0,
            b: 1.0,
            n: 10_000,
            dt: 1e-2,
            horizon: 20.0,
        }
    }
}

impl BrownianBoundParams {
    pub fn quick() -> Self {
        BrownianBoundParams {
            n: 2000,
            ..Default::default()
        }
    }
}

/// Whether `√κ B` stays in `|x| ≤ a t + b` up to the horizon. Crossings
/// between grid points are detected with the Brownian-bridge probability
/// `exp(−2 d₁ d₂ / (κ dt))`, which is exact for a linear barrier.
fn stays_in_corridor<R: Rng + ?Sized>(kappa: f64, a: f64, b: f64, dt: f64, horizon: f64, rng: &mut R) -> bool {
    let n = crate::pathspace::grid_len(horizon, dt);
    let sd = (kappa * dt).sqrt();
    let mut x = 0.0f64;
    for k in 0..n {
        let t0 = k as f64 * dt;
        let nx = x + sd * rng.sample::<f64, _>(StandardNormal);
        let (u0, u1) = (a * t0 + b, a * (t0 + dt) + b);
        let (d1, d2) = (u0 - x, u1 - nx);
        let (e1, e2) = (u0 + x, u1 + nx);
        if d2 <= 0.0 || e2 <= 0.0 {
            return false;
        }
        let cross = (-2.0 * d1 * d2 / (kappa * dt)).exp() + (-2.0 * e1 * e2 / (kappa * dt)).exp();
        if rng.random::<f64>() < cross {
            return false;
        }
        x = nx;
    }
    true
}

pub fn test_brownian_bound(p: &BrownianBoundParams, seed: u64) -> Result<TestReport> {
    if !(p.a > 0.0 && p.b > 0.0) {
        return Err(Error::invalid("a and b must be positive"));
    }
    let mut rep = TestReport::new(
        "brownian-bound",
        "P[|sqrt(kappa) B_t| <= a t + b for all t] >= 1 - 2 exp(-2ab/kappa)",
        seed,
    );
    // stopping at the horizon can only raise the frequency: the bound is one-sided
    let mut freqs = Vec::new();
    for &kappa in &p.kappas {
        let stays = replicate(derive_seed_str(seed, &format!("kappa={kappa}")), p.n, |rng| {
            stays_in_corridor(kappa, p.a, p.b, p.dt, p.horizon, rng)
        });
        let q = proportion(stays.iter().filter(|s| **s).count(), p.n);
        let bound = 1.0 - 2.0 * (-2.0 * p.a * p.b / kappa).exp();
        rep.stat(&format!("kappa={kappa}: frequency"), q.estimate);
        rep.stat(&format!("kappa={kappa}: bound"), bound);
        rep.check(format!("kappa={kappa}: frequency + 3 se"), q.estimate + 3.0 * q.se, Comparison::AtLeast, bound);
        freqs.push(q);
    }
    for w in freqs.windows(2) {
        rep.check(
            "frequency decreases in kappa (slack 3 joint se)",
            w[1].estimate - w[0].estimate,
            Comparison::AtMost,
            3.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt(),
        );
    }
    rep.size("paths per kappa", p.n);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Path algebra: killing and continuation

#[derive(Debug, Clone, PartialEq)]
pub struct PathAlgebraParams {
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    pub level: f64,
    pub permutations: usize,
}

impl Default for PathAlgebraParams {
    fn default() -> Self {
        PathAlgebraParams {
            n: 10_000,
            dt: 1e-3,
            horizon: 2.0,
            level: 0.5,
            permutations: 999,
        }
    }
}

impl PathAlgebraParams {
    pub fn quick() -> Self {
        PathAlgebraParams {
            n: 2000,
            ..Default::default()
        }
    }
}

/// Killing a Brownian path and continuing it with a fresh one reproduces
/// Brownian motion (strong Markov), and a `θ_t = t∧2`-killed concatenation
/// has the law of a path marked from `dθ`.
pub fn test_path_algebra(p: &PathAlgebraParams, seed: u64) -> Result<TestReport> {
    let mut rep = TestReport::new(
        "path-algebra",
        "K_tau(P) + P = P at stopping times; K_(d theta)(P) + P = P (x) d theta",
        seed,
    );
    let (dt, h) = (p.dt, p.horizon);
    let reference = replicate(derive_seed_str(seed, "reference"), p.n, |rng| brownian_path(1.0, dt, h, rng).value_at(1.0));
    let reference: Vec<f64> = reference.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();

    let joined_at = |name: &str, tau: &(dyn Fn(&SampledPath<f64>) -> Option<f64> + Sync)| -> Result<Vec<f64>> {
        collect(replicate(derive_seed_str(seed, name), p.n, |rng| -> Result<f64> {
            let f = brownian_path(1.0, dt, h, rng);
            let g = brownian_path(1.0, dt, h, rng);
            let joined = match tau(&f) {
                Some(t) => concat(&kill(&f, t)?, &g)?,
                None => f,
            };
            joined.value_at(1.0).ok_or_else(|| Error::Numerical("joined path too short".into()))
        }))
    };
    let level = p.level;
    let hitting = joined_at("hitting", &|f| {
        f.values().iter().position(|x| *x >= level).filter(|k| *k > 0).map(|k| k as f64 * dt)
    })?;
    let fixed = joined_at("fixed", &|_| Some(0.5))?;
    let perm = derive_seed_str(seed, "permutation");
    let r = ks_permutation_test(&hitting, &reference, p.permutations, &mut substream(perm, 0))?;
    rep.ks_check("ks hitting-level concat B_1", &r);
    let r = ks_permutation_test(&fixed, &reference, p.permutations, &mut substream(perm, 1))?;
    rep.ks_check("ks fixed-time concat B_1", &r);

    // θ_t = t ∧ 2
    let theta = move |f: &SampledPath<f64>| {
        let cells = crate::pathspace::grid_len(2.0f64.min(f.lifetime().covered()), dt);
        WeightProcess::from_increments(dt, vec![dt; cells])
    };
    let killed = collect(replicate(derive_seed_str(seed, "weighted"), p.n, |rng| -> Result<(f64, f64, f64)> {
        let (f, w) = sample_killed(|r| brownian_path(1.0, dt, h, r), &KillSpec::Weighted(&theta), rng)?;
        let junction = f.lifetime().value();
        let g = brownian_path(1.0, dt, h, rng);
        let joined = concat(&f, &g)?;
        let x = joined.value_at(1.0).ok_or_else(|| Error::Numerical("joined path too short".into()))?;
        Ok((x, junction, w))
    }))?;
    let marked = replicate(derive_seed_str(seed, "marked"), p.n, |rng| {
        let f = brownian_path(1.0, dt, h, rng);
        let th = theta(&f);
        let s = th.quantile(rng.random::<f64>());
        (f.value_at(1.0).unwrap_or(f64::NAN), s, th.total())
    });
    let wa: Vec<f64> = killed.iter().map(|k| k.2).collect();
    let wb: Vec<f64> = marked.iter().map(|k| k.2).collect();
    for (c, name) in ["B_1", "junction time"].iter().enumerate() {
        let xa: Vec<f64> = killed.iter().map(|k| if c == 0 { k.0 } else { k.1 }).collect();
        let xb: Vec<f64> = marked.iter().map(|k| if c == 0 { k.0 } else { k.1 }).collect();
        let r = weighted_ks_test(&xa, &wa, &xb, &wb, p.permutations, &mut substream(perm, 2 + c as u64))?;
        rep.ks_check(&format!("ks weighted concat {name}"), &r);
    }
    rep.size("paths per sample", p.n);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Planar Brownian motion in the unit disk

#[derive(Debug, Clone, PartialEq)]
pub struct BmDiskParams {
    pub n: usize,
    pub dt: f64,
    pub target: Complex64,
    pub target_radius: f64,
    pub s: f64,
    pub t: f64,
}

impl Default for BmDiskParams {
    fn default() -> Self {
        BmDiskParams {
            n: 10_000,
            dt: 1e-4,
            target: Complex64::new(0.5, 0.0),
            target_radius: 0.05,
            s: 0.05,
            t: 0.1,
        }
    }
}

impl BmDiskParams {
    pub fn quick() -> Self {
        BmDiskParams {
            n: 2000,
            dt: 4e-4,
            ..Default::default()
        }
    }
}

/// `f(w) = (1 − |w|²)/4`, the solution of `Δf = −1` in the disk with zero
/// boundary values.
pub fn disk_f(w: Complex64) -> f64 {
    (1.0 - w.norm_sqr()) / 4.0
}

struct DiskPath {
    tau: f64,
    /// `B` at `s ∧ τ` and `t ∧ τ`.
    at_s: Complex64,
    at_t: Complex64,
}

/// Planar BM from `w0` until exit from the unit disk. Exits between grid
/// points are detected with the bridge probability for the tangent line.
fn disk_exit<R: Rng + ?Sized>(w0: Complex64, dt: f64, s: f64, t: f64, rng: &mut R) -> DiskPath {
    let sd = dt.sqrt();
    let mut w = w0;
    let mut k = 0usize;
    let (ks, kt) = ((s / dt).round() as usize, (t / dt).round() as usize);
    let (mut at_s, mut at_t) = (w0, w0);
    loop {
        if k == ks {
            at_s = w;
        }
        if k == kt {
            at_t = w;
        }
        let nw = w + Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * sd;
        let (d1, d2) = (1.0 - w.norm(), 1.0 - nw.norm());
        let out = d2 <= 0.0 || rng.random::<f64>() < (-2.0 * d1 * d2 / dt).exp();
        if out {
            let tau = (k as f64 + 0.5) * dt;
            let exit = (w + nw) / 2.0;
            let exit = exit / exit.norm();
            if k < ks {
                at_s = exit;
            }
            if k < kt {
                at_t = exit;
            }
            return DiskPath { tau, at_s, at_t };
        }
        w = nw;
        k += 1;
    }
}

/// Brownian motion conditioned to hit `z0`: Euler steps of
/// `dZ = dB + ∇h/h dt` with `h(w) = ln|1 − z̄₀w| − ln|w − z₀|`. Returns
/// whether the target ball was reached, and whether the step floor was hit.
fn h_transform_hits<R: Rng + ?Sized>(z0: Complex64, radius: f64, dt: f64, rng: &mut R) -> (bool, bool) {
    let mut w = Complex64::new(0.0, 0.0);
    let mut elapsed = 0.0;
    let mut floored = false;
    let one = Complex64::new(1.0, 0.0);
    while elapsed < 100.0 {
        if (w - z0).norm() < radius {
            return (true, floored);
        }
        let h = (one - z0.conj() * w).norm().ln() - (w - z0).norm().ln();
        let fp = -z0.conj() / (one - z0.conj() * w) - one / (w - z0);
        let drift = fp.conj() / h;
        let edge = 1.0 - w.norm();
        let mut step = dt.min(0.01 * edge * edge).min(0.01 / drift.norm_sqr().max(1e-300));
        if step < 1e-9 * dt {
            step = 1e-9 * dt;
            floored = true;
        }
        let noise = Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
        w += drift * step + noise * step.sqrt();
        elapsed += step;
        if w.norm() >= 1.0 {
            return (false, floored);
        }
    }
    (false, floored)
}

pub fn test_bm_disk(p: &BmDiskParams, seed: u64) -> Result<TestReport> {
    let mut rep = TestReport::new(
        "bm-disk",
        "E[tau_D/2] = f(w0) with f = (1-|w|^2)/4; f(B_(t^tau)) + (t^tau)/2 is a martingale; the h-transform reaches z0",
        seed,
    );
    rep.stat("Psi_0 = f(0)", disk_f(Complex64::new(0.0, 0.0)));
    let mut from_origin = Vec::new();
    for (label, w0) in [("origin", Complex64::new(0.0, 0.0)), ("|w|=0.8", Complex64::new(0.8, 0.0))] {
        let paths = replicate(derive_seed_str(seed, label), p.n, |rng| disk_exit(w0, p.dt, p.s, p.t, rng));
        let half: Vec<f64> = paths.iter().map(|q| q.tau / 2.0).collect();
        let (m, se) = mean_se(&half);
        rep.stat(&format!("{label}: mean tau/2"), m);
        rep.stat(&format!("{label}: se"), se);
        rep.check(format!("{label}: |mean tau/2 - f(w0)| / se"), joint_z(m, se, disk_f(w0), 0.0), Comparison::AtMost, 3.0);
        if from_origin.is_empty() {
            from_origin = paths;
        }
    }
    // martingale increments are uncorrelated with the past
    let m_at = |q: &DiskPath, u: f64, w: Complex64| disk_f(w) + q.tau.min(u) / 2.0;
    let inc: Vec<f64> = from_origin.iter().map(|q| m_at(q, p.t, q.at_t) - m_at(q, p.s, q.at_s)).collect();
    let past: [(&str, fn(&DiskPath) -> f64); 2] = [
        ("sign Re B_s", |q| q.at_s.re.signum()),
        ("|B_s|^2", |q| q.at_s.norm_sqr()),
    ];
    for (name, phi) in past {
        let x: Vec<f64> = from_origin.iter().map(phi).collect();
        let (mx, _) = mean_se(&x);
        let (mi, _) = mean_se(&inc);
        let prod: Vec<f64> = inc.iter().zip(&x).map(|(i, v)| (i - mi) * (v - mx)).collect();
        let (cov, se) = mean_se(&prod);
        rep.stat(&format!("cov(dM, {name})"), cov);
        rep.check(format!("|cov(dM, {name})| / se"), joint_z(cov, se, 0.0, 0.0), Comparison::AtMost, Z99);
    }
    let hits = replicate(derive_seed_str(seed, "h-transform"), p.n, |rng| h_transform_hits(p.target, p.target_radius, p.dt, rng));
    let reached = hits.iter().filter(|h| h.0).count();
    let floored = hits.iter().filter(|h| h.1).count();
    rep.size("paths", p.n);
    rep.size("h-transform paths at step floor", floored);
    rep.check("h-transform hit fraction", reached as f64 / p.n as f64, Comparison::AtLeast, 0.99);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Boundary force point

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryParams {
    pub kappa: f64,
    pub rho: f64,
    pub x0: f64,
    pub t: f64,
    pub n: usize,
    pub dt: f64,
    pub interval: (f64, f64),
    pub points: usize,
    pub trend_paths: usize,
    pub trend_times: Vec<f64>,
    pub permutations: usize,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        BoundaryParams {
            kappa: 6.0,
            rho: -2.0,
            x0: 1.0,
            t: 0.25,
            n: 10_000,
            dt: 1e-4,
            interval: (1.0, 3.0),
            points: 100,
            trend_paths: 200,
            trend_times: vec![0.25, 0.5, 1.0],
            permutations: 999,
        }
    }
}

impl BoundaryParams {
    pub fn quick() -> Self {
        BoundaryParams {
            n: 2000,
            dt: 1e-3,
            trend_paths: 100,
            ..Default::default()
        }
    }
}

pub fn test_boundary_martingale(p: &BoundaryParams, seed: u64) -> Result<TestReport> {
    let (kappa, rho) = (p.kappa, p.rho);
    if !(kappa > 4.0 && kappa < 8.0) {
        return Err(Error::precondition(format!("boundary decomposition needs kappa in (4, 8), got {kappa}")));
    }
    if (rho - (kappa - 8.0)).abs() > 1e-12 {
        return Err(Error::precondition(format!("boundary decomposition needs rho = kappa - 8, got {rho}")));
    }
    let (a, b) = p.interval;
    if !(b > a) || (a <= 0.0 && b >= 0.0) {
        return Err(Error::precondition("interval must be bounded and away from 0"));
    }
    let mut rep = TestReport::new(
        "boundary-martingale",
        "on {T > t}, SLE_kappa(rho) with boundary force point has density M_t(x0)/G(x0); E[Psi_t(I)] is nonincreasing",
        seed,
    );
    let g0 = green_boundary(kappa, rho, p.x0)?;
    let base = DriverConfig::boundary(kappa, 0.0, p.x0, p.dt, p.t);
    let s = reweighting_samples(base, rho, p.n, seed, |e| m_boundary(kappa, rho, e.z.re, e.log_d) / g0)?;
    reweighting_checks(&mut rep, &s, &[("lambda_t", |e| e.lambda), ("X_t", |e| e.z.re)], p.permutations, seed)?;

    // Ψ_t(I) = ∫_I M_t(x) dx by the midpoint rule
    let h = (b - a) / p.points as f64;
    let nodes: Vec<Complex64> = (0..p.points).map(|i| Complex64::new(a + (i as f64 + 0.5) * h, 0.0)).collect();
    let psi0: f64 = nodes.iter().map(|x| h * green_boundary(kappa, rho, x.re).unwrap_or(0.0)).sum();
    let exact = psi0_boundary_exact(kappa, rho, p.interval)?;
    rep.stat("Psi_0 quadrature", psi0);
    rep.stat("Psi_0 closed form", exact);
    rep.check("Psi_0 relative quadrature error", (psi0 / exact - 1.0).abs(), Comparison::AtMost, 1e-4);
    let tmax = p.trend_times.iter().cloned().fold(0.0, f64::max);
    let every = 1;
    let series = collect(replicate(derive_seed_str(seed, "trend"), p.trend_paths, |rng| -> Result<Vec<f64>> {
        let driver = brownian_path(kappa, p.dt, tmax, rng);
        let states = evolve_points(&driver, &nodes, every, 1e-9)?;
        p.trend_times
            .iter()
            .map(|&t| {
                let s = states
                    .iter()
                    .find(|s| (s.t - t).abs() < 0.5 * p.dt)
                    .ok_or_else(|| Error::Numerical(format!("no flow snapshot at t = {t}")))?;
                Ok(s.points
                    .iter()
                    .filter(|q| q.alive)
                    .map(|q| h * m_boundary(kappa, rho, q.g.re - s.lambda, q.gprime.re.ln()))
                    .sum())
            })
            .collect()
    }))?;
    let mut prev: Vec<f64> = vec![psi0; p.trend_paths];
    let mut prev_t = 0.0;
    for (j, &t) in p.trend_times.iter().enumerate() {
        let cur: Vec<f64> = series.iter().map(|v| v[j]).collect();
        let diff: Vec<f64> = cur.iter().zip(&prev).map(|(c, q)| c - q).collect();
        let (m, se) = mean_se(&diff);
        rep.stat(&format!("t={t}: mean Psi"), mean_se(&cur).0);
        rep.check(format!("E[Psi_{t}] - E[Psi_{prev_t}] - 3 se"), m - 3.0 * se, Comparison::AtMost, 0.0);
        prev = cur;
        prev_t = t;
    }
    rep.size("trend paths", p.trend_paths);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------

/// Suite-level overrides applied on top of a test's defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub quick: bool,
    pub kappa: Option<f64>,
    pub n: Option<usize>,
}

/// Runs the named test with default (or quick) parameters.
pub fn run_test(name: &str, o: &VerifyOptions) -> Result<TestReport> {
    macro_rules! params {
        ($t:ty) => {{
            let mut p = if o.quick { <$t>::quick() } else { <$t>::default() };
            if let Some(n) = o.n {
                p.n = n;
            }
            p
        }};
    }
    let seed = derive_seed_str(o.seed, name);
    match name {
        "girsanov-reweighting" => {
            let mut p = params!(GirsanovParams);
            if let Some(k) = o.kappa {
                p.kappa = k;
                p.rho = k - 8.0;
            }
            test_girsanov_reweighting(&p, seed)
        }
        "tail-bound" => {
            let mut p = params!(TailBoundParams);
            if let Some(k) = o.kappa {
                p.kappas = vec![k];
            }
            test_tail_bound(&p, seed)
        }
        "cross-simulator" => {
            let mut p = params!(CrossSimulatorParams);
            if let Some(k) = o.kappa {
                p.kappa = k;
            }
            test_cross_simulator(&p, seed)
        }
        "capacity-green" => {
            let mut p = params!(CapacityGreenParams);
            if let Some(k) = o.kappa {
                p.kappa = k;
            }
            test_capacity_green(&p, seed)
        }
        "c-kappa1" => {
            let kappa = o.kappa.unwrap_or(6.0);
            let mut c = if o.quick { c_kappa1_quick(kappa, seed) } else { CKappaConfig::new(kappa, seed) };
            if let Some(n) = o.n {
                c.curves = n;
            }
            test_c_kappa1(&c)
        }
        "occupation-identity" => {
            let mut p = params!(OccupationParams);
            if let Some(k) = o.kappa {
                p.kappa = k;
            }
            test_occupation_identity(&p, seed)
        }
        "capacity-decomposition" => {
            let mut p = params!(CapacityDecompositionParams);
            if let Some(k) = o.kappa {
                p.kappa = k;
            }
            test_capacity_decomposition(&p, seed)
        }
        "natural-decomposition" => {
            let mut p = params!(NaturalDecompositionParams);
            if let Some(k) = o.kappa {
                p.kappa = k;
            }
            test_natural_decomposition(&p, seed)
        }
        "psi-decay" => {
            let mut p = if o.quick { PsiDecayParams::quick() } else { PsiDecayParams::default() };
            if let Some(n) = o.n {
                p.paths = n;
            }
            if let Some(k) = o.kappa {
                p.kappa = k;
                p.rho = k - 8.0;
            }
            test_psi_decay(&p, seed)
        }
        "brownian-bound" => {
            let mut p = params!(BrownianBoundParams);
            if let Some(k) = o.kappa {
                p.kappas = vec![k];
            }
            test_brownian_bound(&p, seed)
        }
        "path-algebra" => test_path_algebra(&params!(PathAlgebraParams), seed),
        "bm-disk" => test_bm_disk(&params!(BmDiskParams), seed),
        "boundary-martingale" => {
            let mut p = params!(BoundaryParams);
            if let Some(k) = o.kappa {
                p.kappa = k;
                p.rho = k - 8.0;
            }
            test_boundary_martingale(&p, seed)
        }
        other => Err(Error::invalid(format!(
            "unknown test '{other}'; known tests: {}",
            TEST_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_comparisons() {
        assert!(Check::new("a", 0.5, Comparison::Above, 0.01).passed);
        assert!(!Check::new("a", 0.01, Comparison::Above, 0.01).passed);
        assert!(Check::new("a", 1.0, Comparison::AtLeast, 1.0).passed);
        assert!(!Check::new("a", f64::NAN, Comparison::AtMost, 1.0).passed);
    }

    #[test]
    fn report_passes_only_with_all_checks() {
        let mut r = TestReport::new("x", "h", 1);
        assert!(!r.clone().finish().passed);
        r.check("ok", 1.0, Comparison::AtMost, 2.0);
        assert!(r.clone().finish().passed);
        r.check("bad", 3.0, Comparison::AtMost, 2.0);
        let r = r.finish();
        assert!(!r.passed);
        assert_eq!(r.failed_checks().count(), 1);
    }

    #[test]
    fn corridor_bridge_correction_matches_closed_form() {
        // P[sup_{t≤T} B_t < b] for a flat barrier: 1 − 2Φ̄(b/√T)
        let stays = replicate(5, 4000, |rng| stays_in_corridor(1.0, 0.0, 1.0, 0.05, 1.0, rng));
        let f = stays.iter().filter(|s| **s).count() as f64 / 4000.0;
        // two-sided corridor |B| < 1 up to T = 1: 0.3708 (series)
        assert!((f - 0.3708).abs() < 0.03, "{f}");
    }

    #[test]
    fn natural_decomposition_rejects_kappa_9() {
        let p = NaturalDecompositionParams {
            kappa: 9.0,
            ..NaturalDecompositionParams::quick()
        };
        assert!(matches!(test_natural_decomposition(&p, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn boundary_rejects_small_kappa() {
        let p = BoundaryParams {
            kappa: 4.0,
            rho: -4.0,
            ..BoundaryParams::quick()
        };
        assert!(matches!(test_boundary_martingale(&p, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn capacity_decomposition_rejects_null_region() {
        let p = CapacityDecompositionParams {
            region: "-1,1,0,1e-300".parse().unwrap(),
            n: 10,
            ..Default::default()
        };
        assert!(test_capacity_decomposition(&p, 1).is_err());
    }

    #[test]
    fn degenerate_girsanov_has_unit_weights() {
        let p = GirsanovParams {
            rho: 0.0,
            n: 300,
            dt: 1e-3,
            ..Default::default()
        };
        let r = test_girsanov_reweighting(&p, 3).unwrap();
        assert!((r.statistics["mean weight"] - 1.0).abs() < 1e-12);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn unknown_test_is_rejected() {
        assert!(run_test("nope", &VerifyOptions::default()).is_err());
    }

    #[test]
    fn psi_bound_formula() {
        let b = psi_decay_bound(8.0 / 3.0, -16.0 / 3.0, 1.0, 1.0);
        assert!((b - std::f64::consts::PI * 2f64.powf(3.0 / 8.0)).abs() < 1e-12);
    }
}
