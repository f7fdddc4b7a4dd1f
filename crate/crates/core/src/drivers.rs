//! Driving processes.
//!
//! Scaled Brownian motion for SLE_κ, SLE_κ(ρ) with an interior or boundary
//! force point, extended drivers (first arm to the force point followed by a
//! fresh Brownian arm) and the radial-coordinate diffusion `V_s` whose time
//! change gives the swallowing time `T_{z₀}`.
//!
//! The force point is co-integrated with the driver. Over a substep of length
//! `h` the driver is frozen at its new value and `Z = g(z₀) - λ` is pushed
//! through the exact vertical-slit map, `Z ← √((Z - Δλ)² + 4h)`, so that the
//! flow part is exact for piecewise-constant driving and `Y² + 4t` is
//! nondecreasing. Substeps are shrunk as `|Z|` gets small so that neither the
//! drift nor the noise can move `Z` by more than a fraction of its size.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loewner::upper_sqrt;
use crate::pathspace::{concat_marked, grid_len, SampledPath};
use crate::rng::{substream, SimRng};

/// Hard cap on substeps per path before it is declared unresolved.
pub const MAX_SUBSTEPS: u64 = 50_000_000;

/// Smallest substep, relative to `dt`.
const MIN_SUBSTEP: f64 = 1e-12;

/// Force point of an SLE_κ(ρ) process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ForcePoint {
    Interior(Complex64),
    Boundary(f64),
}

impl ForcePoint {
    pub fn modulus(&self) -> f64 {
        match *self {
            ForcePoint::Interior(z) => z.norm(),
            ForcePoint::Boundary(x) => x.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub kappa: f64,
    pub rho: f64,
    pub force_point: Option<ForcePoint>,
    pub dt: f64,
    pub horizon: f64,
    /// Swallow threshold in units of `|z₀|`.
    pub swallow_eps: f64,
    pub seed: u64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            kappa: 2.0,
            rho: 0.0,
            force_point: None,
            dt: 1e-3,
            horizon: 1.0,
            swallow_eps: 1e-3,
            seed: 0,
        }
    }
}

impl DriverConfig {
    pub fn brownian(kappa: f64, dt: f64, horizon: f64) -> Self {
        DriverConfig {
            kappa,
            dt,
            horizon,
            ..Default::default()
        }
    }

    pub fn interior(kappa: f64, rho: f64, z0: Complex64, dt: f64, horizon: f64) -> Self {
        DriverConfig {
            kappa,
            rho,
            force_point: Some(ForcePoint::Interior(z0)),
            dt,
            horizon,
            ..Default::default()
        }
    }

    pub fn boundary(kappa: f64, rho: f64, x0: f64, dt: f64, horizon: f64) -> Self {
        DriverConfig {
            kappa,
            rho,
            force_point: Some(ForcePoint::Boundary(x0)),
            dt,
            horizon,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive(self.kappa, "kappa")?;
        positive(self.dt, "dt")?;
        positive(self.horizon, "horizon")?;
        positive(self.swallow_eps, "swallow_eps")?;
        if !self.rho.is_finite() {
            return Err(Error::invalid(format!("rho must be finite, got {}", self.rho)));
        }
        match self.force_point {
            Some(ForcePoint::Interior(z)) if !(z.im > 0.0 && z.re.is_finite() && z.im.is_finite()) => {
                Err(Error::invalid(format!("interior force point must lie in the upper half-plane, got {z}")))
            }
            Some(ForcePoint::Boundary(x)) if !(x != 0.0 && x.is_finite()) => {
                Err(Error::invalid(format!("boundary force point must be a nonzero real, got {x}")))
            }
            _ => Ok(()),
        }
    }

    /// Checks `ρ ≤ κ/2 − 4`, needed for the force point to be reached.
    pub fn validate_extendable(&self) -> Result<()> {
        self.validate()?;
        if self.force_point.is_none() {
            return Err(Error::invalid("extended driver needs a force point"));
        }
        let bound = self.kappa / 2.0 - 4.0;
        if self.rho > bound + 1e-12 {
            return Err(Error::invalid(format!(
                "extended simulation requires rho <= kappa/2 - 4 = {bound}, got rho = {}",
                self.rho
            )));
        }
        Ok(())
    }

    fn eps_abs(&self) -> f64 {
        self.swallow_eps * self.force_point.map(|f| f.modulus()).unwrap_or(1.0)
    }
}

/// How a driver run ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RunOutcome {
    /// Force point swallowed at the given time estimate.
    Swallowed { time: f64 },
    /// Horizon reached with the force point alive.
    Horizon,
    /// Substep floor or cap hit; the path is excluded from estimators.
    Unresolved,
}

impl RunOutcome {
    pub fn swallow_time(&self) -> Option<f64> {
        match *self {
            RunOutcome::Swallowed { time } => Some(time),
            _ => None,
        }
    }

    pub fn is_unresolved(&self) -> bool {
        matches!(self, RunOutcome::Unresolved)
    }
}

/// State of the force point when the run stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndState {
    pub t: f64,
    pub lambda: f64,
    /// `g_t(z₀) − λ_t` (real part only in the boundary case).
    pub z: Complex64,
    /// `ln |g_t′(z₀)|`.
    pub log_d: f64,
}

/// The co-evolved `(Z, X, Y, D)` on the driver grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcePointTrack {
    pub dt: f64,
    pub boundary: bool,
    pub z: Vec<Complex64>,
    pub log_d: Vec<f64>,
    pub swallow_time: Option<f64>,
}

impl ForcePointTrack {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn x(&self, k: usize) -> f64 {
        self.z[k].re
    }

    pub fn y(&self, k: usize) -> f64 {
        self.z[k].im
    }

    pub fn d(&self, k: usize) -> f64 {
        self.log_d[k].exp()
    }
}

/// Result of one SLE_κ(ρ) run.
#[derive(Debug, Clone)]
pub struct DriverRun {
    pub driver: SampledPath<f64>,
    pub track: ForcePointTrack,
    pub outcome: RunOutcome,
    pub end: EndState,
    pub substeps: u64,
}

/// Counts of run outcomes, reported with every batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub swallowed: usize,
    pub horizon: usize,
    pub unresolved: usize,
}

impl OutcomeCounts {
    pub fn tally<'a>(outcomes: impl IntoIterator<Item = &'a RunOutcome>) -> Self {
        let mut c = OutcomeCounts::default();
        for o in outcomes {
            match o {
                RunOutcome::Swallowed { .. } => c.swallowed += 1,
                RunOutcome::Horizon => c.horizon += 1,
                RunOutcome::Unresolved => c.unresolved += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.swallowed + self.horizon + self.unresolved
    }

    pub fn unresolved_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.unresolved as f64 / self.total() as f64
        }
    }
}

/// Runs `f` on replicas `0..n`, each with its own substream of `seed`.
/// Output order is the replica order regardless of scheduling.
pub fn replicate<T: Send>(seed: u64, n: usize, f: impl Fn(&mut SimRng) -> T + Sync) -> Vec<T> {
    (0..n)
        .into_par_iter()
        .map(|i| f(&mut substream(seed, i as u64)))
        .collect()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `√κ B` on the grid `0, dt, …, N·dt` with `N·dt ≥ horizon`.
pub fn simulate_brownian_driver<R: Rng + ?Sized>(cfg: &DriverConfig, rng: &mut R) -> Result<SampledPath<f64>> {
    cfg.validate()?;
    if cfg.force_point.is_some() {
        return Err(Error::invalid("Brownian driver takes no force point"));
    }
    Ok(brownian_path(cfg.kappa, cfg.dt, cfg.horizon, rng))
}

pub(crate) fn brownian_path<R: Rng + ?Sized>(kappa: f64, dt: f64, horizon: f64, rng: &mut R) -> SampledPath<f64> {
    let n = grid_len(horizon, dt);
    let sd = (kappa * dt).sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut x = 0.0;
    values.push(x);
    for _ in 0..n {
        x += sd * normal(rng);
        values.push(x);
    }
    SampledPath::truncated(dt, values).expect("grid is consistent by construction")
}

trait ForceState: Copy {
    fn modulus(&self) -> f64;
    /// `Re ρ/(λ − g_t(z₀))`.
    fn drift(&self, rho: f64) -> f64;
    /// Applies one slit substep; returns `false` if the point was crossed.
    fn advance(&mut self, dlambda: f64, h: f64) -> bool;
    fn as_complex(&self) -> Complex64;
    fn log_d(&self) -> f64;
}

#[derive(Clone, Copy)]
struct Interior {
    z: Complex64,
    log_d: f64,
}

impl ForceState for Interior {
    fn modulus(&self) -> f64 {
        self.z.norm()
    }

    fn drift(&self, rho: f64) -> f64 {
        -rho * self.z.re / self.z.norm_sqr()
    }

    fn advance(&mut self, dlambda: f64, h: f64) -> bool {
        let w = self.z - dlambda;
        let z = upper_sqrt(w * w + 4.0 * h, 1.0);
        self.log_d += (w.norm() / z.norm()).ln();
        self.z = z;
        z.im > 0.0
    }

    fn as_complex(&self) -> Complex64 {
        self.z
    }

    fn log_d(&self) -> f64 {
        self.log_d
    }
}

#[derive(Clone, Copy)]
struct Boundary {
    x: f64,
    log_d: f64,
}

impl ForceState for Boundary {
    fn modulus(&self) -> f64 {
        self.x.abs()
    }

    fn drift(&self, rho: f64) -> f64 {
        -rho / self.x
    }

    fn advance(&mut self, dlambda: f64, h: f64) -> bool {
        let w = self.x - dlambda;
        if w == 0.0 || w.signum() != self.x.signum() {
            return false;
        }
        let x = w.signum() * (w * w + 4.0 * h).sqrt();
        self.log_d += (w / x).ln();
        self.x = x;
        true
    }

    fn as_complex(&self) -> Complex64 {
        Complex64::new(self.x, 0.0)
    }

    fn log_d(&self) -> f64 {
        self.log_d
    }
}

struct RawRun {
    outcome: RunOutcome,
    end: EndState,
    substeps: u64,
}

/// Euler–Maruyama for `dλ = √κ dB + drift dt` co-integrated with the force
/// point. `on_grid(k, λ, Z, ln D)` is called at every grid time reached
/// with the point alive.
fn integrate<S: ForceState, R: Rng + ?Sized>(
    cfg: &DriverConfig,
    mut state: S,
    rng: &mut R,
    mut on_grid: impl FnMut(usize, f64, &S),
) -> RawRun {
    let (kappa, rho, dt) = (cfg.kappa, cfg.rho, cfg.dt);
    let eps = cfg.eps_abs();
    let n = grid_len(cfg.horizon, dt);
    let rate = (10.0 * (2.0 + rho.abs())).max(25.0 * kappa);
    let mut lambda = 0.0;
    let mut t = 0.0;
    let mut substeps = 0u64;
    let end = |t: f64, lambda: f64, s: &S| EndState {
        t,
        lambda,
        z: s.as_complex(),
        log_d: s.log_d(),
    };
    for k in 0..n {
        on_grid(k, lambda, &state);
        let mut remaining = dt;
        while remaining > 0.0 {
            let m = state.modulus();
            let mut h = remaining.min(m * m / rate);
            if h < MIN_SUBSTEP * dt || substeps >= MAX_SUBSTEPS {
                return RawRun {
                    outcome: RunOutcome::Unresolved,
                    end: end(t, lambda, &state),
                    substeps,
                };
            }
            if remaining - h < 1e-9 * dt {
                h = remaining;
            }
            let dl = state.drift(rho) * h + (kappa * h).sqrt() * normal(rng);
            let intact = state.advance(dl, h);
            substeps += 1;
            remaining -= h;
            t = if remaining == 0.0 { (k + 1) as f64 * dt } else { t + h };
            lambda += dl;
            if !intact {
                return RawRun {
                    outcome: RunOutcome::Swallowed { time: t },
                    end: end(t, lambda, &state),
                    substeps,
                };
            }
            let m = state.modulus();
            if m < eps {
                // Y² + 4t never decreases, so t + |Z|²/4 ≥ y₀²/4.
                return RawRun {
                    outcome: RunOutcome::Swallowed { time: t + m * m / 4.0 },
                    end: end(t, lambda, &state),
                    substeps,
                };
            }
        }
    }
    on_grid(n, lambda, &state);
    RawRun {
        outcome: RunOutcome::Horizon,
        end: end(n as f64 * dt, lambda, &state),
        substeps,
    }
}

fn run_recorded<S: ForceState, R: Rng + ?Sized>(
    cfg: &DriverConfig,
    state: S,
    boundary: bool,
    rng: &mut R,
) -> Result<DriverRun> {
    let mut lambdas = Vec::new();
    let mut zs = Vec::new();
    let mut log_ds = Vec::new();
    let raw = integrate(cfg, state, rng, |_, l, s| {
        lambdas.push(l);
        zs.push(s.as_complex());
        log_ds.push(s.log_d());
    });
    let driver = match raw.outcome {
        RunOutcome::Swallowed { time } => {
            let need = grid_len(time, cfg.dt);
            // the swallow estimate may spill into one more grid cell
            while lambdas.len() < need {
                lambdas.push(raw.end.lambda);
            }
            lambdas.truncate(need.max(1));
            SampledPath::finite(cfg.dt, lambdas, time, Some(raw.end.lambda))?
        }
        RunOutcome::Horizon => SampledPath::truncated(cfg.dt, lambdas)?,
        RunOutcome::Unresolved => {
            let covered = lambdas.len() as f64 * cfg.dt;
            SampledPath::finite(cfg.dt, lambdas, covered, None)?
        }
    };
    Ok(DriverRun {
        driver,
        track: ForcePointTrack {
            dt: cfg.dt,
            boundary,
            z: zs,
            log_d: log_ds,
            swallow_time: raw.outcome.swallow_time(),
        },
        outcome: raw.outcome,
        end: raw.end,
        substeps: raw.substeps,
    })
}

fn interior_point(cfg: &DriverConfig) -> Result<Complex64> {
    cfg.validate()?;
    match cfg.force_point {
        Some(ForcePoint::Interior(z)) => Ok(z),
        _ => Err(Error::invalid("an interior force point is required")),
    }
}

fn boundary_point(cfg: &DriverConfig) -> Result<f64> {
    cfg.validate()?;
    match cfg.force_point {
        Some(ForcePoint::Boundary(x)) => Ok(x),
        _ => Err(Error::invalid("a boundary force point is required")),
    }
}

/// SLE_κ(ρ) driver with interior force point `z₀`, run to the horizon or to
/// swallowing of `z₀`.
pub fn simulate_sle_rho_interior<R: Rng + ?Sized>(cfg: &DriverConfig, rng: &mut R) -> Result<DriverRun> {
    let z0 = interior_point(cfg)?;
    run_recorded(cfg, Interior { z: z0, log_d: 0.0 }, false, rng)
}

/// SLE_κ(ρ) driver with boundary force point `x₀`.
pub fn simulate_sle_rho_boundary<R: Rng + ?Sized>(cfg: &DriverConfig, rng: &mut R) -> Result<DriverRun> {
    let x0 = boundary_point(cfg)?;
    run_recorded(cfg, Boundary { x: x0, log_d: 0.0 }, true, rng)
}

/// Like the `simulate_sle_rho_*` functions but keeps only the end state,
/// for large batches.
pub fn run_force_point<R: Rng + ?Sized>(cfg: &DriverConfig, rng: &mut R) -> Result<(RunOutcome, EndState)> {
    cfg.validate()?;
    let raw = match cfg.force_point {
        Some(ForcePoint::Interior(z)) => integrate(cfg, Interior { z, log_d: 0.0 }, rng, |_, _, _| {}),
        Some(ForcePoint::Boundary(x)) => integrate(cfg, Boundary { x, log_d: 0.0 }, rng, |_, _, _| {}),
        None => return Err(Error::invalid("a force point is required")),
    };
    Ok((raw.outcome, raw.end))
}

/// Extended SLE_κ(ρ) driver: the first arm up to swallowing of the force
/// point, continued by an independent `√κ B` up to the horizon. Returns the
/// joined driver and the junction time.
pub fn simulate_extended<R: Rng + ?Sized>(cfg: &DriverConfig, rng: &mut R) -> Result<(SampledPath<f64>, f64)> {
    cfg.validate_extendable()?;
    let run = match cfg.force_point {
        Some(ForcePoint::Interior(_)) => simulate_sle_rho_interior(cfg, rng)?,
        _ => simulate_sle_rho_boundary(cfg, rng)?,
    };
    let junction = match run.outcome {
        RunOutcome::Swallowed { time } => time,
        RunOutcome::Horizon => {
            return Err(Error::ResourceLimit(format!(
                "first arm did not reach the force point before the horizon {}",
                cfg.horizon
            )))
        }
        RunOutcome::Unresolved => return Err(Error::Numerical("first arm unresolved".into())),
    };
    let rest = (cfg.horizon - junction).max(cfg.dt);
    let second = brownian_path(cfg.kappa, cfg.dt, rest, rng);
    concat_marked(&run.driver, &second)
}

/// Discretisation of the radial diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialOptions {
    pub ds: f64,
    pub s_max: f64,
    /// Relative tolerance on the truncation remainder.
    pub tail_tol: f64,
    pub record_path: bool,
}

impl Default for RadialOptions {
    fn default() -> Self {
        RadialOptions {
            ds: 1e-3,
            s_max: 10.0,
            tail_tol: 1e-6,
            record_path: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialDiffusionSample {
    /// `V` on the grid `k·ds` (empty unless recorded).
    pub v: Vec<f64>,
    pub ds: f64,
    /// Swallowing time `y₀² ∫ e^{−4s} cosh²(V_s) ds`.
    pub swallow_time: f64,
    /// Estimated remainder beyond `s_max`, from the running maximum of `|V|`.
    pub tail_bound: f64,
    /// Set when the remainder exceeds the tolerance.
    pub flagged: bool,
}

fn radial_setup(cfg: &DriverConfig, opts: &RadialOptions) -> Result<(f64, f64, f64)> {
    let z0 = interior_point(cfg)?;
    if !(opts.ds > 0.0 && opts.s_max > opts.ds) {
        return Err(Error::invalid("radial diffusion needs 0 < ds < s_max"));
    }
    let drift = cfg.rho + 4.0 - cfg.kappa / 2.0;
    Ok(((z0.re / z0.im).asinh(), z0.im * z0.im, drift))
}

/// Samples `V_s` by Euler–Maruyama and evaluates the time change to `T_{z₀}`.
///
/// The trapezoid rule overestimates `∫ e^{−4s}` on each cell, and the lower
/// remainder `e^{−4 s_max}/4` is added, so `T ≥ y₀²/4` holds sample by sample.
pub fn simulate_radial_diffusion<R: Rng + ?Sized>(
    cfg: &DriverConfig,
    opts: &RadialOptions,
    rng: &mut R,
) -> Result<RadialDiffusionSample> {
    let (v0, y2, drift) = radial_setup(cfg, opts)?;
    let ds = opts.ds;
    let n = grid_len(opts.s_max, ds);
    let sd = (cfg.kappa * ds).sqrt();
    let decay = (-4.0 * ds).exp();
    let mut v = v0;
    let mut vmax = v0.abs();
    let mut path = Vec::new();
    if opts.record_path {
        path.reserve(n + 1);
        path.push(v);
    }
    let mut weight = 1.0;
    let mut prev = v.cosh().powi(2);
    let mut integral = 0.0;
    for _ in 0..n {
        v += drift * v.tanh() * ds + sd * normal(rng);
        vmax = vmax.max(v.abs());
        let next_weight = weight * decay;
        let cur = v.cosh().powi(2);
        integral += 0.5 * ds * (weight * prev + next_weight * cur);
        weight = next_weight;
        prev = cur;
        if opts.record_path {
            path.push(v);
        }
    }
    let s_end = n as f64 * ds;
    let lower_tail = (-4.0 * s_end).exp() / 4.0;
    let tail_bound = y2 * (2.0 * vmax - 4.0 * s_end).exp() / 2.0;
    let swallow_time = y2 * (integral + lower_tail);
    Ok(RadialDiffusionSample {
        v: path,
        ds,
        swallow_time,
        tail_bound,
        flagged: tail_bound > opts.tail_tol * swallow_time,
    })
}

/// Decides `T_{z₀} ≤ t` with the radial diffusion, stopping as soon as the
/// answer is settled.
pub fn radial_swallowed_before<R: Rng + ?Sized>(
    cfg: &DriverConfig,
    opts: &RadialOptions,
    t: f64,
    rng: &mut R,
) -> Result<bool> {
    let (v0, y2, drift) = radial_setup(cfg, opts)?;
    // T ≥ y₀²/4 always
    if t < y2 / 4.0 {
        return Ok(false);
    }
    let ds = opts.ds;
    let n = grid_len(opts.s_max, ds);
    let sd = (cfg.kappa * ds).sqrt();
    let decay = (-4.0 * ds).exp();
    let mut v = v0;
    let mut weight = 1.0;
    let mut prev = v.cosh().powi(2);
    let mut integral = 0.0;
    for k in 0..n {
        v += drift * v.tanh() * ds + sd * normal(rng);
        let next_weight = weight * decay;
        let cur = v.cosh().powi(2);
        integral += 0.5 * ds * (weight * prev + next_weight * cur);
        weight = next_weight;
        prev = cur;
        let s = (k + 1) as f64 * ds;
        let lower = y2 * (integral + (-4.0 * s).exp() / 4.0);
        if lower > t {
            return Ok(false);
        }
        // remaining mass if |V| stays within a few units of its current size
        let upper_rest = y2 * (2.0 * (v.abs() + 3.0) - 4.0 * s).exp() / 4.0;
        if lower + upper_rest <= t {
            return Ok(true);
        }
    }
    Ok(y2 * (integral + (-4.0 * n as f64 * ds).exp() / 4.0) <= t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn brownian_moments() {
        let cfg = DriverConfig::brownian(2.0, 0.01, 1.0);
        let ends = replicate(11, 10_000, |rng| {
            *simulate_brownian_driver(&cfg, rng).unwrap().values().last().unwrap()
        });
        let n = ends.len() as f64;
        let mean = ends.iter().sum::<f64>() / n;
        let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 3.0 * (2.0 / n).sqrt(), "mean {mean}");
        assert!((var / 2.0 - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cfg = DriverConfig::interior(6.0, -8.0, Complex64::new(1.0, 1.0), 1e-3, 0.5);
        let a = simulate_sle_rho_interior(&cfg, &mut substream(3, 0)).unwrap();
        let b = simulate_sle_rho_interior(&cfg, &mut substream(3, 0)).unwrap();
        assert_eq!(a.driver, b.driver);
        assert_eq!(a.track, b.track);
    }

    #[test]
    fn initial_drifts() {
        let s = Interior { z: Complex64::new(0.0, 1.0), log_d: 0.0 };
        assert_eq!(s.drift(-3.0), 0.0);
        let s = Interior { z: Complex64::new(1.0, 1.0), log_d: 0.0 };
        assert!((s.drift(-3.0) - 1.5).abs() < 1e-15);
        assert!((Boundary { x: 1.0, log_d: 0.0 }.drift(-2.0) - 2.0).abs() < 1e-15);
        assert!((Boundary { x: -1.0, log_d: 0.0 }.drift(-2.0) + 2.0).abs() < 1e-15);
    }

    #[test]
    fn interior_track_decreases_and_satisfies_flow_odes() {
        let cfg = DriverConfig::interior(8.0 / 3.0, -16.0 / 3.0, Complex64::new(0.5, 1.0), 1e-4, 0.2);
        let run = simulate_sle_rho_interior(&cfg, &mut substream(5, 0)).unwrap();
        let tr = &run.track;
        for k in 1..tr.len() {
            assert!(tr.y(k) < tr.y(k - 1));
        }
        // re-integrate dY/Y = −2/|Z|² dt and d ln D = Re(−2/Z²) dt along Z
        let mut log_y = tr.y(0).ln();
        let mut log_d = 0.0;
        for k in 0..tr.len() - 1 {
            let zm = 0.5 * (tr.z[k] + tr.z[k + 1]);
            log_y += -2.0 / zm.norm_sqr() * cfg.dt;
            log_d += (-2.0 / (zm * zm)).re * cfg.dt;
        }
        let k = tr.len() - 1;
        assert!((log_y - tr.y(k).ln()).abs() < 1e-2, "{log_y} vs {}", tr.y(k).ln());
        assert!((log_d - tr.log_d[k]).abs() < 1e-2, "{log_d} vs {}", tr.log_d[k]);
    }

    #[test]
    fn boundary_derivative_matches_ode() {
        let cfg = DriverConfig::boundary(6.0, -2.0, 1.0, 1e-4, 0.05);
        let runs = replicate(17, 200, |rng| simulate_sle_rho_boundary(&cfg, rng).unwrap());
        let (mut flow, mut ode) = (0.0, 0.0);
        for run in &runs {
            let tr = &run.track;
            let mut log_d = 0.0;
            for k in 0..tr.len() - 1 {
                let zm = 0.5 * (tr.x(k) + tr.x(k + 1));
                log_d += -2.0 / (zm * zm) * cfg.dt;
            }
            let k = tr.len() - 1;
            flow += tr.d(k);
            ode += log_d.exp();
        }
        assert!((flow / ode - 1.0).abs() < 0.01, "{flow} vs {ode}");
    }

    #[test]
    fn swallow_time_respects_lower_bound() {
        let cfg = DriverConfig::interior(2.0, -6.0, Complex64::new(0.0, 1.0), 1e-3, 30.0);
        for i in 0..20 {
            let (path, junction) = simulate_extended(&cfg, &mut substream(9, i)).unwrap();
            assert!(junction >= 0.25 - 1e-12, "{junction}");
            assert_eq!(path.lifetime().value(), f64::INFINITY);
        }
    }

    #[test]
    fn extended_second_arm_is_brownian() {
        let cfg = DriverConfig::interior(2.0, -6.0, Complex64::new(0.0, 1.0), 1e-3, 5.0);
        let incs: Vec<f64> = replicate(4, 400, |rng| {
            let (path, junction) = simulate_extended(&cfg, rng).unwrap();
            let k = grid_len(junction, cfg.dt) + 1;
            let v = path.values();
            v[k + 100] - v[k]
        });
        let n = incs.len() as f64;
        let var = incs.iter().map(|x| x * x).sum::<f64>() / n;
        let expected = 2.0 * 0.1;
        assert!((var / expected - 1.0).abs() < 0.15, "{var}");
    }

    #[test]
    fn extension_range_is_checked() {
        let cfg = DriverConfig::interior(6.0, 0.0, Complex64::new(0.0, 1.0), 1e-3, 1.0);
        let e = simulate_extended(&cfg, &mut substream(0, 0)).unwrap_err();
        assert!(e.to_string().contains("kappa/2 - 4"));
    }

    #[test]
    fn radial_sample_bounds() {
        let cfg = DriverConfig::interior(6.0, -8.0, Complex64::new(0.0, 2.0), 1e-3, 1.0);
        assert_eq!(radial_setup(&cfg, &RadialOptions::default()).unwrap().0, 0.0);
        for i in 0..50 {
            let s = simulate_radial_diffusion(&cfg, &RadialOptions::default(), &mut substream(2, i)).unwrap();
            assert!(s.swallow_time >= 1.0 - 1e-12);
            assert!(!s.flagged);
        }
    }

    #[test]
    fn radial_early_exit_agrees_with_full_quadrature() {
        let cfg = DriverConfig::interior(6.0, -8.0, Complex64::new(0.3, 0.8), 1e-3, 1.0);
        let opts = RadialOptions::default();
        for i in 0..100 {
            let full = simulate_radial_diffusion(&cfg, &opts, &mut substream(8, i)).unwrap();
            let quick = radial_swallowed_before(&cfg, &opts, 0.3, &mut substream(8, i)).unwrap();
            assert_eq!(quick, full.swallow_time <= 0.3, "sample {i}");
        }
    }

    #[test]
    fn counts_sum_to_total() {
        let cfg = DriverConfig::interior(6.0, -8.0, Complex64::new(1.0, 1.0), 1e-3, 0.5);
        let outs = replicate(1, 30, |rng| run_force_point(&cfg, rng).unwrap().0);
        let c = OutcomeCounts::tally(&outs);
        assert_eq!(c.total(), 30);
    }
}
