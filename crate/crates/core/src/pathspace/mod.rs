//! Paths with random lifetime.
//!
//! A [`SampledPath`] is a real or complex path on a uniform time grid that
//! lives on `[0, T_f)`. Infinite lifetimes cannot be stored, so such paths are
//! truncated at a horizon and flagged ([`Lifetime::Truncated`]). Off-grid
//! evaluation is linear interpolation between grid samples, and towards the
//! terminal limit `f(T_f-)` on the last partial cell.
//!
//! The operations mirror the path algebra used throughout the crate:
//! killing at a time ([`kill`]), continuation ([`concat`], [`concat_marked`]),
//! restarting at a time ([`shift_restart`]) and sampling-based killing
//! by a weight process ([`sample_killed`]).

mod archive;

pub use archive::{read_archive, write_archive, ArchivedPath, ARCHIVE_MAGIC, ARCHIVE_VERSION};

use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Slack used when counting grid cells, so that `T/dt` landing a few ulps
/// above an integer does not add a spurious sample.
const GRID_SLACK: f64 = 1e-9;

/// Tolerance for the `g(0) = 0` precondition of continuation.
const ORIGIN_TOL: f64 = 1e-12;

/// Number of grid samples `k·dt` lying in `[0, t)`.
pub fn grid_len(t: f64, dt: f64) -> usize {
    let cells = t / dt - GRID_SLACK;
    if cells <= 0.0 {
        0
    } else {
        cells.ceil() as usize
    }
}

/// Scalar type a path can carry.
pub trait PathValue:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + 'static
{
    const IS_COMPLEX: bool;
    fn zero() -> Self;
    fn norm(self) -> f64;
    fn is_finite_value(self) -> bool;
}

impl PathValue for f64 {
    const IS_COMPLEX: bool = false;
    fn zero() -> Self {
        0.0
    }
    fn norm(self) -> f64 {
        self.abs()
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
}

impl PathValue for Complex64 {
    const IS_COMPLEX: bool = true;
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn norm(self) -> f64 {
        Complex64::norm(self)
    }
    fn is_finite_value(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Lifetime of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lifetime {
    /// `T_f < ∞`.
    Finite(f64),
    /// `T_f = ∞`; samples stop at `horizon`.
    Truncated { horizon: f64 },
}

impl Lifetime {
    /// `T_f`, with `f64::INFINITY` for truncated paths.
    pub fn value(&self) -> f64 {
        match *self {
            Lifetime::Finite(t) => t,
            Lifetime::Truncated { .. } => f64::INFINITY,
        }
    }

    /// End of the stored time range.
    pub fn covered(&self) -> f64 {
        match *self {
            Lifetime::Finite(t) => t,
            Lifetime::Truncated { horizon } => horizon,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Lifetime::Finite(_))
    }
}

/// A path on the grid `{k·dt}` with explicit lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath<T: PathValue> {
    dt: f64,
    values: Vec<T>,
    lifetime: Lifetime,
    terminal_limit: Option<T>,
}

impl<T: PathValue> SampledPath<T> {
    /// Checked constructor enforcing the sample-count and lifetime invariants.
    pub fn new(
        dt: f64,
        values: Vec<T>,
        lifetime: Lifetime,
        terminal_limit: Option<T>,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let covered = lifetime.covered();
        if !(covered > 0.0 && covered.is_finite()) {
            return Err(Error::invalid(format!(
                "lifetime/horizon must be positive and finite, got {covered}"
            )));
        }
        if terminal_limit.is_some() && !lifetime.is_finite() {
            return Err(Error::invalid(
                "terminal limit given for a path with infinite lifetime",
            ));
        }
        let expected = grid_len(covered, dt);
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} samples for lifetime {covered} at dt {dt}, got {}",
                values.len()
            )));
        }
        Ok(SampledPath {
            dt,
            values,
            lifetime,
            terminal_limit,
        })
    }

    /// Path with infinite lifetime truncated after the given samples.
    pub fn truncated(dt: f64, values: Vec<T>) -> Result<Self> {
        let horizon = values.len() as f64 * dt;
        Self::new(dt, values, Lifetime::Truncated { horizon }, None)
    }

    /// Finite-lifetime path; `terminal_limit` is `f(T_f-)` when it exists.
    pub fn finite(dt: f64, values: Vec<T>, lifetime: f64, terminal_limit: Option<T>) -> Result<Self> {
        Self::new(dt, values, Lifetime::Finite(lifetime), terminal_limit)
    }

    /// Samples `f(k·dt)` on the grid covering the lifetime.
    pub fn from_fn(
        dt: f64,
        lifetime: Lifetime,
        terminal_limit: Option<T>,
        f: impl Fn(f64) -> T,
    ) -> Result<Self> {
        let n = grid_len(lifetime.covered(), dt);
        let values = (0..n).map(|k| f(k as f64 * dt)).collect();
        Self::new(dt, values, lifetime, terminal_limit)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lifetime(&self) -> Lifetime {
        self.lifetime
    }

    pub fn terminal_limit(&self) -> Option<T> {
        self.terminal_limit
    }

    pub fn is_truncated(&self) -> bool {
        !self.lifetime.is_finite()
    }

    /// Value at time `t` by linear interpolation; `None` outside the stored
    /// range, or on the last partial cell when no terminal limit exists.
    pub fn value_at(&self, t: f64) -> Option<T> {
        if !(t >= 0.0) || self.values.is_empty() {
            return None;
        }
        let n = self.values.len();
        let last_t = (n - 1) as f64 * self.dt;
        if t < last_t {
            let x = t / self.dt;
            let k = (x.floor() as usize).min(n - 2);
            let frac = x - k as f64;
            let a = self.values[k];
            return Some(a + (self.values[k + 1] - a) * frac);
        }
        if t == last_t {
            return Some(self.values[n - 1]);
        }
        let covered = self.lifetime.covered();
        if t > covered {
            return None;
        }
        match self.terminal_limit {
            Some(lim) => {
                let frac = ((t - last_t) / (covered - last_t)).clamp(0.0, 1.0);
                Some(self.values[n - 1] + (lim - self.values[n - 1]) * frac)
            }
            None if self.is_truncated() && t < covered => Some(self.values[n - 1]),
            None => None,
        }
    }

    /// `f(T_f-)` if present, otherwise the last stored sample.
    pub fn end_value(&self) -> Option<T> {
        self.terminal_limit.or_else(|| self.values.last().copied())
    }
}

/// Killing at a deterministic time: lifetime becomes `τ ∧ T_f`.
///
/// For a truncated path and `τ` beyond its horizon the path is returned
/// unchanged: its lifetime still exceeds everything that is stored.
pub fn kill<T: PathValue>(f: &SampledPath<T>, tau: f64) -> Result<SampledPath<T>> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("kill time must be positive, got {tau}")));
    }
    if tau >= f.lifetime.value() || (f.is_truncated() && tau >= f.lifetime.covered()) {
        return Ok(f.clone());
    }
    let n = grid_len(tau, f.dt);
    let limit = f
        .value_at(tau)
        .ok_or_else(|| Error::Numerical(format!("cannot interpolate path at {tau}")))?;
    SampledPath::finite(f.dt, f.values[..n].to_vec(), tau, Some(limit))
}

fn check_dt_match(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
        return Err(Error::precondition(format!("mismatched dt: {a} vs {b}")));
    }
    Ok(())
}

/// Continuation `f ⊕ g`: follow `f` on `[0, T_f)`, then `f(T_f-) + g(t - T_f)`.
pub fn concat<T: PathValue>(f: &SampledPath<T>, g: &SampledPath<T>) -> Result<SampledPath<T>> {
    let tf = match f.lifetime {
        Lifetime::Finite(t) => t,
        Lifetime::Truncated { .. } => {
            return Err(Error::precondition("continuation needs a finite first lifetime"))
        }
    };
    let base = f
        .terminal_limit
        .ok_or_else(|| Error::precondition("continuation needs the terminal limit f(T_f-)"))?;
    let g0 = g
        .values
        .first()
        .copied()
        .ok_or_else(|| Error::precondition("second path is empty"))?;
    if g0.norm() > ORIGIN_TOL {
        return Err(Error::precondition(format!("second path must start at 0, got {g0:?}")));
    }
    check_dt_match(f.dt, g.dt)?;
    let dt = f.dt;
    let lifetime = match g.lifetime {
        Lifetime::Finite(tg) => Lifetime::Finite(tf + tg),
        Lifetime::Truncated { horizon } => Lifetime::Truncated { horizon: tf + horizon },
    };
    let n = grid_len(lifetime.covered(), dt);
    let nf = f.values.len();
    let mut values = Vec::with_capacity(n);
    values.extend_from_slice(&f.values);
    for k in nf..n {
        let s = k as f64 * dt - tf;
        let gv = g.value_at(s.max(0.0)).or_else(|| g.end_value()).unwrap_or(T::zero());
        values.push(base + gv);
    }
    let terminal_limit = g.terminal_limit.map(|l| base + l);
    SampledPath::new(dt, values, lifetime, terminal_limit)
}

/// Marked continuation: `f ⊕ g` together with the junction time `T_f`.
pub fn concat_marked<T: PathValue>(
    f: &SampledPath<T>,
    g: &SampledPath<T>,
) -> Result<(SampledPath<T>, f64)> {
    let joined = concat(f, g)?;
    Ok((joined, f.lifetime.value()))
}

/// Inverse of [`concat_marked`]: splits at the junction into `(f, g)`.
pub fn split_at_junction<T: PathValue>(
    h: &SampledPath<T>,
    junction: f64,
) -> Result<(SampledPath<T>, SampledPath<T>)> {
    let f = kill(h, junction)?;
    let g = shift_restart(h, junction)?;
    Ok((f, g))
}

/// Restart at `r`: `g(t) = f(r + t) - f(r)` on `[0, T_f - r)`.
pub fn shift_restart<T: PathValue>(f: &SampledPath<T>, r: f64) -> Result<SampledPath<T>> {
    if !(r >= 0.0) || r >= f.lifetime.value() || r >= f.lifetime.covered() {
        return Err(Error::invalid(format!(
            "restart time {r} must lie in [0, {})",
            f.lifetime.value()
        )));
    }
    let fr = f
        .value_at(r)
        .ok_or_else(|| Error::Numerical(format!("cannot interpolate path at {r}")))?;
    let lifetime = match f.lifetime {
        Lifetime::Finite(t) => Lifetime::Finite(t - r),
        Lifetime::Truncated { horizon } => Lifetime::Truncated { horizon: horizon - r },
    };
    let n = grid_len(lifetime.covered(), f.dt);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let t = r + k as f64 * f.dt;
        let v = f.value_at(t).or_else(|| f.end_value()).unwrap_or(fr);
        values.push(v - fr);
    }
    let terminal_limit = f.terminal_limit.map(|l| l - fr);
    SampledPath::new(f.dt, values, lifetime, terminal_limit)
}

/// A right-continuous increasing process `θ` along one path, `θ_{0-} = 0`.
///
/// The absolutely continuous part is stored as per-cell increments
/// (`increments[k]` is the mass on `[k·dt, (k+1)·dt)`, spread uniformly);
/// point masses are listed separately.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightProcess {
    pub dt: f64,
    pub increments: Vec<f64>,
    pub atoms: Vec<(f64, f64)>,
}

impl WeightProcess {
    /// Absolutely continuous weight from per-cell increments.
    pub fn from_increments(dt: f64, increments: Vec<f64>) -> Self {
        WeightProcess {
            dt,
            increments,
            atoms: Vec::new(),
        }
    }

    /// `θ_t = mass · 1{t ≥ at}`.
    pub fn dirac(dt: f64, at: f64, mass: f64) -> Self {
        WeightProcess {
            dt,
            increments: Vec::new(),
            atoms: vec![(at, mass)],
        }
    }

    /// `θ_∞` (within the stored range).
    pub fn total(&self) -> f64 {
        self.increments.iter().sum::<f64>() + self.atoms.iter().map(|a| a.1).sum::<f64>()
    }

    fn validate(&self) -> Result<()> {
        if self.increments.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::invalid("weight increments must be finite and non-negative"));
        }
        if self.atoms.iter().any(|&(t, m)| t < 0.0 || m < 0.0 || !m.is_finite()) {
            return Err(Error::invalid("weight atoms must be non-negative"));
        }
        Ok(())
    }

    /// Inverse-CDF draw from `dθ/θ_∞` with `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let total = self.total();
        let mut target = u * total;
        let ac: f64 = self.increments.iter().sum();
        if target < ac {
            for (k, &inc) in self.increments.iter().enumerate() {
                if target < inc {
                    let frac = if inc > 0.0 { target / inc } else { 0.0 };
                    return (k as f64 + frac) * self.dt;
                }
                target -= inc;
            }
            // rounding fell through: last cell with mass
            let k = self.increments.iter().rposition(|&x| x > 0.0).unwrap_or(0);
            return (k + 1) as f64 * self.dt;
        }
        target -= ac;
        for &(t, m) in &self.atoms {
            if target < m {
                return t;
            }
            target -= m;
        }
        self.atoms.last().map(|a| a.0).unwrap_or(0.0)
    }
}

/// How to kill a sampled path.
pub enum KillSpec<'a, T: PathValue> {
    /// Deterministic time `τ ∈ (0, ∞]`.
    At(f64),
    /// Random time drawn from `dθ` along the sampled path, weight `θ_∞`.
    Weighted(&'a (dyn Fn(&SampledPath<T>) -> WeightProcess + Sync)),
}

/// Draws a path from `path_sampler` and kills it according to `kill_spec`.
///
/// Returns the killed path and its importance weight. The weighted empirical
/// law of the output realises the killed measure `K_{dθ}(μ)`; a path with
/// `θ_∞ = 0` is returned unkilled with weight 0.
pub fn sample_killed<T: PathValue, R: Rng + ?Sized>(
    path_sampler: impl FnOnce(&mut R) -> SampledPath<T>,
    kill_spec: &KillSpec<'_, T>,
    rng: &mut R,
) -> Result<(SampledPath<T>, f64)> {
    let path = path_sampler(rng);
    match kill_spec {
        KillSpec::At(tau) => {
            if tau.is_infinite() {
                return Ok((path, 1.0));
            }
            Ok((kill(&path, *tau)?, 1.0))
        }
        KillSpec::Weighted(theta_of) => {
            let theta = theta_of(&path);
            theta.validate()?;
            let total = theta.total();
            if !total.is_finite() {
                return Err(Error::Numerical("weight process has infinite total mass".into()));
            }
            if total == 0.0 {
                return Ok((path, 0.0));
            }
            let u: f64 = rng.random();
            let tau = theta.quantile(u);
            if tau <= 0.0 {
                // a kill at time 0 leaves nothing to store; keep the first sample
                let tiny = path.dt() * 1e-6;
                return Ok((kill(&path, tiny)?, total));
            }
            Ok((kill(&path, tau)?, total))
        }
    }
}
