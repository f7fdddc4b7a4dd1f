//! Closed-form observables and Monte Carlo estimators.
//!
//! Green's functions are returned as shape functions; the unknown constants
//! `C_κ` and `C_{κ,1}` only appear inside [`EstimateReport`]s.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drivers::{
    brownian_path, radial_swallowed_before, replicate, run_force_point, DriverConfig, ForcePointTrack,
    OutcomeCounts, RadialOptions, RunOutcome,
};
use crate::error::{Error, Result};
use crate::loewner::{
    neighborhood_raster, trace_near, CurvePiece, CurveTracer, LoewnerFlowState, Rect, Region, TraceMethod,
    TracedCurve, TrackedPoint, DEFAULT_MAX_CELLS,
};
use crate::rng::{derive_seed_str, substream};
use crate::stats::{mean_se, proportion, Z95};

/// `d = 1 + κ/8`, the dimension of the SLE_κ curve.
pub fn sle_dimension(kappa: f64) -> f64 {
    1.0 + kappa / 8.0
}

/// `d′ = 2 − 8/κ`, the dimension of the curve's intersection with ℝ.
pub fn boundary_dimension(kappa: f64) -> f64 {
    2.0 - 8.0 / kappa
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("kappa must be positive, got {kappa}")))
    }
}

/// `G^{κ,ρ}(z) = |z|^{ρ/κ} (Im z)^{ρ²/(8κ)}`.
pub fn green_interior(kappa: f64, rho: f64, z: Complex64) -> Result<f64> {
    check_kappa(kappa)?;
    if !(z.im > 0.0) {
        return Err(Error::invalid(format!("interior Green's function needs Im z > 0, got {z}")));
    }
    Ok(z.norm().powf(rho / kappa) * z.im.powf(rho * rho / (8.0 * kappa)))
}

/// `|z|^{d−2} sin^{κ/8+8/κ−2}(arg z)` for κ ∈ (0, 8).
pub fn green_sle_shape(kappa: f64, z: Complex64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 8.0) {
        return Err(Error::invalid(format!("SLE Green's function needs kappa in (0, 8), got {kappa}")));
    }
    if !(z.im > 0.0) {
        return Err(Error::invalid(format!("SLE Green's function needs Im z > 0, got {z}")));
    }
    let r = z.norm();
    let sin = z.im / r;
    Ok(r.powf(sle_dimension(kappa) - 2.0) * sin.powf(kappa / 8.0 + 8.0 / kappa - 2.0))
}

/// `(Im z / |z|)^{8/κ}` on the closed upper half-plane minus 0.
pub fn green_capacity_shape(kappa: f64, z: Complex64) -> Result<f64> {
    check_kappa(kappa)?;
    if z == Complex64::new(0.0, 0.0) || z.im < 0.0 {
        return Err(Error::invalid(format!("capacity Green's function needs z in closed H minus 0, got {z}")));
    }
    Ok((z.im / z.norm()).powf(8.0 / kappa))
}

/// `|x|^{ρ/κ}` for real `x ≠ 0`.
pub fn green_boundary(kappa: f64, rho: f64, x: f64) -> Result<f64> {
    check_kappa(kappa)?;
    if x == 0.0 || !x.is_finite() {
        return Err(Error::invalid("boundary Green's function needs a nonzero real point"));
    }
    Ok(x.abs().powf(rho / kappa))
}

/// `M_t = |Z|^{ρ/κ} Y^{ρ²/(8κ)} D^{(ρ/κ)(1−κ/4+ρ/8)}` from `Z` and `ln D`.
pub fn m_interior(kappa: f64, rho: f64, z: Complex64, log_d: f64) -> f64 {
    let a = rho / kappa;
    (a * z.norm().ln() + rho * rho / (8.0 * kappa) * z.im.ln() + a * (1.0 - kappa / 4.0 + rho / 8.0) * log_d)
        .exp()
}

/// `M_t = |Z|^{ρ/κ} D^{(ρ/κ)(1−κ/4+ρ/4)}` for a boundary force point.
pub fn m_boundary(kappa: f64, rho: f64, x: f64, log_d: f64) -> f64 {
    let a = rho / kappa;
    (a * x.abs().ln() + a * (1.0 - kappa / 4.0 + rho / 4.0) * log_d).exp()
}

fn martingale_along(track: &ForcePointTrack, steps: usize, value: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    if steps > track.len() && track.swallow_time.is_none() {
        return Err(Error::invalid(format!(
            "track has {} steps and no swallow time; cannot extend to {steps}",
            track.len()
        )));
    }
    Ok((0..steps).map(|k| if k < track.len() { value(k) } else { 0.0 }).collect())
}

/// `M_{t_k}^{κ,ρ}(z₀)` for `k < steps`, zero from the swallowing time on.
pub fn martingale_m_interior(track: &ForcePointTrack, kappa: f64, rho: f64, steps: usize) -> Result<Vec<f64>> {
    if track.boundary {
        return Err(Error::invalid("interior martingale needs an interior track"));
    }
    martingale_along(track, steps, |k| m_interior(kappa, rho, track.z[k], track.log_d[k]))
}

/// Boundary analogue of [`martingale_m_interior`].
pub fn martingale_m_boundary(track: &ForcePointTrack, kappa: f64, rho: f64, steps: usize) -> Result<Vec<f64>> {
    if !track.boundary {
        return Err(Error::invalid("boundary martingale needs a boundary track"));
    }
    martingale_along(track, steps, |k| m_boundary(kappa, rho, track.z[k].re, track.log_d[k]))
}

/// `M_t(z)` for a point flowed by [`crate::loewner::evolve_points`].
pub fn m_of_tracked(p: &TrackedPoint, lambda: f64, kappa: f64, rho: f64) -> f64 {
    if !p.alive {
        return 0.0;
    }
    m_interior(kappa, rho, p.offset(lambda), p.gprime.norm().ln())
}

/// Midpoint-rule nodes over a union of rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub region: Region,
    pub pitch: f64,
    pub nodes: Vec<Complex64>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Cells of side at most `pitch`; a cell covered by an earlier rectangle
    /// of the union is dropped.
    pub fn new(region: &Region, pitch: f64) -> Result<Self> {
        if !(pitch > 0.0) {
            return Err(Error::invalid("quadrature pitch must be positive"));
        }
        if !region.is_bounded() {
            return Err(Error::invalid("quadrature needs a bounded region"));
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (i, r) in region.rects().iter().enumerate() {
            let nx = ((r.x_max - r.x_min) / pitch).ceil().max(1.0) as usize;
            let ny = ((r.y_max - r.y_min) / pitch).ceil().max(1.0) as usize;
            let hx = (r.x_max - r.x_min) / nx as f64;
            let hy = (r.y_max - r.y_min) / ny as f64;
            for iy in 0..ny {
                for ix in 0..nx {
                    let z = Complex64::new(r.x_min + (ix as f64 + 0.5) * hx, r.y_min + (iy as f64 + 0.5) * hy);
                    if region.locate(z) == Some(i) {
                        nodes.push(z);
                        weights.push(hx * hy);
                    }
                }
            }
        }
        Ok(QuadratureGrid {
            region: region.clone(),
            pitch,
            nodes,
            weights,
        })
    }

    pub fn integrate(&self, f: impl Fn(Complex64) -> f64 + Sync) -> f64 {
        self.nodes
            .par_iter()
            .zip(self.weights.par_iter())
            .map(|(z, w)| w * f(*z))
            .collect::<Vec<f64>>()
            .iter()
            .sum()
    }
}

/// A grid integral at pitch `h/2` with the pitch-`h` value for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub coarse: f64,
    pub rel_diff: f64,
    /// Set when the two pitches disagree by more than 5%.
    pub too_coarse: bool,
}

/// `∫_U f dA` by the midpoint rule at pitches `h` and `h/2`.
pub fn integrate_region(region: &Region, pitch: f64, f: impl Fn(Complex64) -> f64 + Sync) -> Result<QuadratureResult> {
    let coarse = QuadratureGrid::new(region, pitch)?.integrate(&f);
    let value = QuadratureGrid::new(region, pitch / 2.0)?.integrate(&f);
    let rel_diff = if value == 0.0 { 0.0 } else { ((value - coarse) / value).abs() };
    Ok(QuadratureResult {
        value,
        coarse,
        rel_diff,
        too_coarse: rel_diff > 0.05,
    })
}

/// `∫_U G^{κ,ρ} dA`; errors when the integral is zero or not finite.
pub fn integrate_green(region: &Region, pitch: f64, g: impl Fn(Complex64) -> Result<f64> + Sync) -> Result<QuadratureResult> {
    let q = integrate_region(region, pitch, |z| if z.im > 0.0 { g(z).unwrap_or(f64::NAN) } else { 0.0 })?;
    if !(q.value.is_finite() && q.value > 0.0) {
        return Err(Error::precondition(format!(
            "integral of the Green's function over {region} is {}, need a finite positive value",
            q.value
        )));
    }
    Ok(q)
}

/// `Ψ_t(U) = Σ_i w_i M_t(z_i)` for each recorded flow state, where the flow
/// tracked exactly the nodes of `grid`.
pub fn psi_u(states: &[LoewnerFlowState], grid: &QuadratureGrid, kappa: f64, rho: f64) -> Result<Vec<f64>> {
    states
        .iter()
        .map(|s| {
            if s.points.len() != grid.nodes.len() {
                return Err(Error::invalid("flow state does not match the quadrature grid"));
            }
            Ok(s.points
                .iter()
                .zip(&grid.weights)
                .map(|(p, w)| w * m_of_tracked(p, s.lambda, kappa, rho))
                .sum())
        })
        .collect()
}

/// Monte Carlo estimate with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub kappa: f64,
    pub rho: Option<f64>,
    pub value: f64,
    pub stderr: f64,
    pub ci95: [f64; 2],
    pub n: usize,
    pub seed: u64,
    pub flags: Vec<String>,
}

impl EstimateReport {
    fn normal(name: &str, kappa: f64, rho: Option<f64>, value: f64, stderr: f64, n: usize, seed: u64) -> Self {
        EstimateReport {
            name: name.into(),
            kappa,
            rho,
            value,
            stderr,
            ci95: [value - Z95 * stderr, value + Z95 * stderr],
            n,
            seed,
            flags: Vec::new(),
        }
    }

    pub fn ci_excludes_zero(&self) -> bool {
        self.ci95[0] > 0.0 || self.ci95[1] < 0.0
    }

    pub fn relative_ci_width(&self) -> f64 {
        (self.ci95[1] - self.ci95[0]) / self.value.abs()
    }
}

/// Simulator used to decide `T_z ≤ t` under SLE_κ(−8).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SwallowSampler {
    /// Direct SDE integration of the first arm.
    Direct { dt: f64, swallow_eps: f64 },
    /// The radial-coordinate diffusion and its time change.
    Radial(RadialOptions),
}

impl Default for SwallowSampler {
    fn default() -> Self {
        SwallowSampler::Direct {
            dt: 1e-3,
            swallow_eps: 1e-3,
        }
    }
}

/// Draws `1{T_z ≤ t}` for SLE_κ(−8) started with force point `z`.
/// `None` marks an unresolved direct run.
pub fn swallowed_before<R: Rng + ?Sized>(
    kappa: f64,
    z: Complex64,
    t: f64,
    sampler: &SwallowSampler,
    rng: &mut R,
) -> Result<Option<bool>> {
    match *sampler {
        SwallowSampler::Direct { dt, swallow_eps } => {
            let mut cfg = DriverConfig::interior(kappa, -8.0, z, dt, t);
            cfg.swallow_eps = swallow_eps;
            let (outcome, _) = run_force_point(&cfg, rng)?;
            Ok(match outcome {
                RunOutcome::Swallowed { time } => Some(time <= t),
                RunOutcome::Horizon => Some(false),
                RunOutcome::Unresolved => None,
            })
        }
        SwallowSampler::Radial(opts) => {
            let cfg = DriverConfig::interior(kappa, -8.0, z, 1e-3, t.max(1e-3));
            Ok(Some(radial_swallowed_before(&cfg, &opts, t, rng)?))
        }
    }
}

/// `G_t(z) = G(z) · P_z^{κ,−8}[T_z ≤ t]` from `n` first arms.
pub fn capacity_green_mc(
    kappa: f64,
    z: Complex64,
    t: f64,
    n: usize,
    sampler: &SwallowSampler,
    seed: u64,
) -> Result<EstimateReport> {
    if !(z.im > 0.0) {
        return Err(Error::invalid(format!("capacity Green's function estimate needs z in H, got {z}")));
    }
    if !(t > 0.0) || n == 0 {
        return Err(Error::invalid("need t > 0 and n > 0"));
    }
    let g = green_capacity_shape(kappa, z)?;
    let draws = replicate(seed, n, |rng| swallowed_before(kappa, z, t, sampler, rng));
    let draws: Vec<Option<bool>> = draws.into_iter().collect::<Result<_>>()?;
    let unresolved = draws.iter().filter(|d| d.is_none()).count();
    if unresolved as f64 > 0.01 * n as f64 {
        return Err(Error::Numerical(format!("{unresolved} of {n} first arms unresolved (more than 1%)")));
    }
    let resolved = n - unresolved;
    let hits = draws.iter().filter(|d| **d == Some(true)).count();
    let p = proportion(hits, resolved);
    let mut rep = EstimateReport {
        name: "capacity-green".into(),
        kappa,
        rho: Some(-8.0),
        value: g * p.estimate,
        stderr: g * p.se,
        ci95: [g * p.ci95.0, g * p.ci95.1],
        n: resolved,
        seed,
        flags: Vec::new(),
    };
    if unresolved > 0 {
        rep.flags.push(format!("unresolved={unresolved}"));
    }
    Ok(rep)
}

/// Samples of a chordal SLE_κ curve that fall in a target region.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveHits {
    pub dt: f64,
    /// `(k, γ(t_k))` with `t_k < horizon` and `γ(t_k)` in the region.
    pub hits: Vec<(usize, Complex64)>,
}

impl CurveHits {
    /// Occupation time of the sub-region `u`.
    pub fn occupation(&self, u: &Region) -> f64 {
        self.dt * self.hits.iter().filter(|(_, z)| u.contains(*z)).count() as f64
    }
}

/// Traces `n` chordal SLE_κ curves and keeps their samples inside `region`.
pub fn sample_region_hits(kappa: f64, dt: f64, horizon: f64, region: &Region, n: usize, seed: u64) -> Result<Vec<CurveHits>> {
    check_kappa(kappa)?;
    if !region.is_bounded() {
        return Err(Error::invalid("occupation sampling needs a bounded region"));
    }
    let bbox = region.bounding_box();
    let results = replicate(seed, n, |rng| -> Result<CurveHits> {
        let driver = brownian_path(kappa, dt, horizon, rng);
        let tracer = CurveTracer::new(&driver, TraceMethod::default())?;
        let last = driver.len() - 1;
        let pieces = trace_near(&tracer, &bbox, 0.05 * bbox.max_modulus(), 16);
        let mut hits: Vec<(usize, Complex64)> = pieces
            .iter()
            .flat_map(|p| p.indexed())
            .filter(|(k, z)| *k < last && region.contains(*z))
            .collect();
        hits.dedup_by_key(|h| h.0);
        Ok(CurveHits { dt, hits })
    });
    results.into_iter().collect()
}

/// Weighted fraction of `∫_U G^{κ,−8}` whose points are swallowed after
/// `horizon`, i.e. the occupation mass lost to truncating curves there.
pub fn truncation_fraction(
    kappa: f64,
    region: &Region,
    horizon: f64,
    n_points: usize,
    radial: &RadialOptions,
    seed: u64,
) -> Result<f64> {
    let bbox = region.bounding_box();
    let samples = replicate(seed, n_points, |rng| -> Result<(f64, f64)> {
        let z = Complex64::new(
            rng.random_range(bbox.x_min..bbox.x_max),
            rng.random_range(bbox.y_min..bbox.y_max),
        );
        if !region.contains(z) || z.im <= 0.0 {
            return Ok((0.0, 0.0));
        }
        let g = green_capacity_shape(kappa, z)?;
        let cfg = DriverConfig::interior(kappa, -8.0, z, 1e-3, horizon);
        let late = !radial_swallowed_before(&cfg, radial, horizon, rng)?;
        Ok((g, if late { g } else { 0.0 }))
    });
    let (mut total, mut late) = (0.0, 0.0);
    for s in samples {
        let (g, l) = s?;
        total += g;
        late += l;
    }
    Ok(if total > 0.0 { late / total } else { 0.0 })
}

/// Configuration of the two `C_{κ,1}` estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct CKappaConfig {
    pub kappa: f64,
    /// Route A: occupation region, curve count and discretisation.
    pub region: Region,
    pub curves: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Route B: jittered lattice over `[0, x_max√t] × (0, 2√t]`.
    pub lattice_points: usize,
    pub x_max: f64,
    pub radial: RadialOptions,
    pub t_list: Vec<f64>,
    pub quadrature_pitch: f64,
    pub seed: u64,
}

impl CKappaConfig {
    pub fn new(kappa: f64, seed: u64) -> Self {
        CKappaConfig {
            kappa,
            region: Region::rect(-1.0, 1.0, 0.25, 1.25).expect("valid rectangle"),
            curves: 4000,
            dt: 1e-3,
            horizon: 10.0,
            lattice_points: 20_000,
            x_max: 8.0,
            radial: RadialOptions::default(),
            t_list: vec![0.5, 1.0, 2.0],
            quadrature_pitch: 0.01,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CKappaEstimate {
    pub route_a: EstimateReport,
    pub route_b: EstimateReport,
    /// Route A over route B with its delta-method standard error.
    pub ratio: f64,
    pub ratio_se: f64,
    /// `C_{κ,t}/t` for each configured `t`.
    pub per_t: Vec<(f64, EstimateReport)>,
}

/// Route A: `C_{κ,1} = ∫_U G dA / E[𝔪(γ⁻¹(U))]` from per-curve occupations.
pub fn c_kappa1_route_a(kappa: f64, region: &Region, occupations: &[f64], pitch: f64, seed: u64) -> Result<EstimateReport> {
    let integral = integrate_green(region, pitch, |z| green_capacity_shape(kappa, z))?;
    let (m, se) = mean_se(occupations);
    if !(m > 0.0) {
        return Err(Error::Numerical("no curve visited the region".into()));
    }
    let c = integral.value / m;
    let mut rep = EstimateReport::normal("c-kappa1/route-a", kappa, Some(-8.0), c, c * se / m, occupations.len(), seed);
    if integral.too_coarse {
        rep.flags.push("quadrature-too-coarse".into());
    }
    Ok(rep)
}

/// `C_{κ,t} = ∫_H G_t dA` on a jittered lattice, using the mirror symmetry
/// `G_t(−z̄) = G_t(z)`.
pub fn capacity_integral(kappa: f64, t: f64, points: usize, x_max: f64, radial: &RadialOptions, seed: u64) -> Result<EstimateReport> {
    if points == 0 || !(t > 0.0) || !(x_max > 0.0) {
        return Err(Error::invalid("need points > 0, t > 0 and x_max > 0"));
    }
    let (w, h) = (x_max * t.sqrt(), 2.0 * t.sqrt());
    let ny = ((points as f64 * h / w).sqrt().round() as usize).max(1);
    let nx = (points / ny).max(1);
    let (cw, ch) = (w / nx as f64, h / ny as f64);
    let area = 2.0 * w * h;
    let sampler = SwallowSampler::Radial(*radial);
    let vals: Vec<Result<f64>> = (0..nx * ny)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let (ix, iy) = (i % nx, i / nx);
            let x = (ix as f64 + rng.random::<f64>()) * cw;
            let y = (iy as f64 + 1.0 - rng.random::<f64>()) * ch;
            let z = Complex64::new(x, y);
            let g = green_capacity_shape(kappa, z)?;
            let hit = swallowed_before(kappa, z, t, &sampler, &mut rng)?.unwrap_or(false);
            Ok(if hit { area * g } else { 0.0 })
        })
        .collect();
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    let (m, se) = mean_se(&vals);
    let mut rep = EstimateReport::normal("c-kappa-t/route-b", kappa, Some(-8.0), m, se, vals.len(), seed);
    // mass in the outer tenth of the window hints at a too small x_max
    let outer: f64 = vals
        .iter()
        .enumerate()
        .filter(|(i, _)| (i % nx) as f64 >= 0.9 * nx as f64)
        .map(|(_, v)| v)
        .sum::<f64>()
        / vals.len() as f64;
    if outer > 0.01 * m {
        rep.flags.push(format!("window-edge-mass={:.3e}", outer / m));
    }
    Ok(rep)
}

/// Both `C_{κ,1}` routes and the `C_{κ,t}/t` scaling series.
pub fn estimate_c_kappa1(cfg: &CKappaConfig) -> Result<CKappaEstimate> {
    let seed_a = derive_seed_str(cfg.seed, "route-a");
    let hits = sample_region_hits(cfg.kappa, cfg.dt, cfg.horizon, &cfg.region, cfg.curves, seed_a)?;
    let occ: Vec<f64> = hits.iter().map(|h| h.occupation(&cfg.region)).collect();
    let mut route_a = c_kappa1_route_a(cfg.kappa, &cfg.region, &occ, cfg.quadrature_pitch, seed_a)?;
    let trunc = truncation_fraction(
        cfg.kappa,
        &cfg.region,
        cfg.horizon,
        2000,
        &cfg.radial,
        derive_seed_str(cfg.seed, "truncation"),
    )?;
    if trunc > 0.05 {
        return Err(Error::Numerical(format!(
            "horizon {} loses {:.1}% of the occupation weight",
            cfg.horizon,
            100.0 * trunc
        )));
    }
    route_a.flags.push(format!("truncation-fraction={trunc:.2e}"));
    let mut per_t = Vec::new();
    for &t in &cfg.t_list {
        let seed_t = derive_seed_str(cfg.seed, &format!("route-b/{t}"));
        let mut r = capacity_integral(cfg.kappa, t, cfg.lattice_points, cfg.x_max, &cfg.radial, seed_t)?;
        r.name = format!("c-kappa-t/t at t={t}");
        r.value /= t;
        r.stderr /= t;
        r.ci95 = [r.ci95[0] / t, r.ci95[1] / t];
        per_t.push((t, r));
    }
    let route_b = match per_t.iter().find(|(t, _)| *t == 1.0) {
        Some((_, r)) => r.clone(),
        None => capacity_integral(cfg.kappa, 1.0, cfg.lattice_points, cfg.x_max, &cfg.radial, derive_seed_str(cfg.seed, "route-b/1"))?,
    };
    let mut route_b = route_b;
    route_b.name = "c-kappa1/route-b".into();
    for r in [&mut route_a, &mut route_b] {
        if r.relative_ci_width() > 0.25 {
            r.flags.push("under-sampled".into());
        }
    }
    let ratio = route_a.value / route_b.value;
    let ratio_se = ratio * ((route_a.stderr / route_a.value).powi(2) + (route_b.stderr / route_b.value).powi(2)).sqrt();
    Ok(CKappaEstimate {
        route_a,
        route_b,
        ratio,
        ratio_se,
        per_t,
    })
}

/// `r^{d−2} · |{z ∈ U : dist(z, γ) < r}|` with `d = 1 + κ/8`.
pub fn minkowski_content(curve: &TracedCurve, region: &Region, kappa: f64, r: f64) -> Result<f64> {
    minkowski_content_polylines(&[&curve.points], region, kappa, r, r / 4.0)
}

/// [`minkowski_content`] over curve pieces, on a raster of the given pitch.
pub fn minkowski_content_pieces(pieces: &[CurvePiece], region: &Region, kappa: f64, r: f64, pitch: f64) -> Result<f64> {
    let lines: Vec<&[Complex64]> = pieces.iter().map(|p| p.points.as_slice()).collect();
    minkowski_content_polylines(&lines, region, kappa, r, pitch)
}

fn minkowski_content_polylines(lines: &[&[Complex64]], region: &Region, kappa: f64, r: f64, pitch: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 8.0) {
        return Err(Error::invalid(format!("Minkowski content needs kappa in (0, 8), got {kappa}")));
    }
    let area = neighborhood_raster(lines, region, r, pitch.min(r / 4.0), DEFAULT_MAX_CELLS)?.area();
    Ok(r.powf(sle_dimension(kappa) - 2.0) * area)
}

/// Boundary content at fixed scale: `r^{d′−1}` times the length of
/// `{x ∈ I : dist(x, γ) < r}`, for an interval `I ⊂ ℝ`.
pub fn boundary_content(curve: &TracedCurve, interval: (f64, f64), kappa: f64, r: f64) -> Result<f64> {
    let (a, b) = interval;
    if !(b > a) || !(r > 0.0) {
        return Err(Error::invalid("boundary content needs a < b and r > 0"));
    }
    if !(kappa > 4.0 && kappa < 8.0) {
        return Err(Error::invalid(format!("boundary content needs kappa in (4, 8), got {kappa}")));
    }
    let cells = ((b - a) / (r / 8.0)).ceil() as usize;
    let h = (b - a) / cells as f64;
    let near: Vec<bool> = (0..cells)
        .map(|i| {
            let x = Complex64::new(a + (i as f64 + 0.5) * h, 0.0);
            curve.points.windows(2).any(|s| {
                let ab = s[1] - s[0];
                let len2 = ab.norm_sqr();
                let u = if len2 == 0.0 { 0.0 } else { (((x - s[0]) * ab.conj()).re / len2).clamp(0.0, 1.0) };
                (x - (s[0] + ab * u)).norm() < r
            })
        })
        .collect();
    let len = near.iter().filter(|n| **n).count() as f64 * h;
    Ok(r.powf(boundary_dimension(kappa) - 1.0) * len)
}

/// `Ψ_0(I) = ∫_I |x|^{ρ/κ} dx` in closed form for `I` not containing 0.
pub fn psi0_boundary_exact(kappa: f64, rho: f64, interval: (f64, f64)) -> Result<f64> {
    let (a, b) = interval;
    if !(b > a) || (a <= 0.0 && b >= 0.0) {
        return Err(Error::invalid("interval must be nonempty and avoid 0"));
    }
    let p = rho / kappa + 1.0;
    let prim = |x: f64| if p == 0.0 { x.abs().ln() } else { x.abs().powf(p) / p };
    Ok((prim(b) - prim(a)).abs())
}

/// `Ψ_0(I)` by the midpoint rule, for cross-checking the closed form.
pub fn psi0_boundary_quadrature(kappa: f64, rho: f64, interval: (f64, f64), cells: usize) -> Result<f64> {
    let (a, b) = interval;
    let h = (b - a) / cells as f64;
    (0..cells)
        .map(|i| green_boundary(kappa, rho, a + (i as f64 + 0.5) * h).map(|g| g * h))
        .sum()
}

/// Tallies of a batch of force-point runs.
pub fn tally(outcomes: &[RunOutcome]) -> OutcomeCounts {
    OutcomeCounts::tally(outcomes)
}

/// Convenience: a single rectangle region.
pub fn rect_region(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Region> {
    Region::new(vec![Rect::new(x_min, x_max, y_min, y_max)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::simulate_sle_rho_interior;
    use crate::loewner::evolve_points;
    use crate::pathspace::{grid_len, SampledPath};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn green_function_values() {
        let i = Complex64::new(0.0, 1.0);
        assert_eq!(green_interior(3.0, -1.7, i).unwrap(), 1.0);
        assert!(close(green_interior(4.0, -4.0, 2.0 * i).unwrap(), 0.5f64.sqrt(), 1e-14));
        let v = green_interior(8.0 / 3.0, -16.0 / 3.0, Complex64::new(1.0, 1.0)).unwrap();
        assert!(close(v, 0.5, 1e-14));
        assert!(green_interior(2.0, -1.0, Complex64::new(1.0, 0.0)).is_err());
        assert!(close(green_sle_shape(8.0 / 3.0, i).unwrap(), 1.0, 1e-15));
        assert!(close(green_sle_shape(8.0 / 3.0, 2.0 * i).unwrap(), 2f64.powf(-2.0 / 3.0), 1e-14));
        assert!(green_sle_shape(8.0, i).is_err());
        assert_eq!(green_capacity_shape(6.0, 3.0 * i).unwrap(), 1.0);
        assert!(close(green_capacity_shape(8.0, Complex64::new(1.0, 1.0)).unwrap(), 0.5f64.sqrt(), 1e-14));
        assert_eq!(green_capacity_shape(6.0, Complex64::new(-2.0, 0.0)).unwrap(), 0.0);
        assert!(green_capacity_shape(6.0, Complex64::new(0.0, 0.0)).is_err());
        assert_eq!(green_boundary(6.0, -2.0, 1.0).unwrap(), 1.0);
        assert!(close(green_boundary(6.0, -2.0, 4.0).unwrap(), 4f64.powf(-1.0 / 3.0), 1e-14));
        assert_eq!(green_boundary(6.0, -2.0, -4.0).unwrap(), green_boundary(6.0, -2.0, 4.0).unwrap());
    }

    #[test]
    fn sle_shape_is_the_kappa_minus_8_green_function() {
        for kappa in [1.0, 8.0 / 3.0, 4.0, 6.0, 7.5] {
            let mut worst = 0.0f64;
            for i in 0..10 {
                for j in 0..10 {
                    let z = Complex64::new(-2.0 + 0.4 * i as f64, 0.05 + 0.3 * j as f64);
                    let a = green_sle_shape(kappa, z).unwrap();
                    let b = green_interior(kappa, kappa - 8.0, z).unwrap();
                    worst = worst.max((a - b).abs() / b);
                }
            }
            assert!(worst < 1e-12, "kappa {kappa}: {worst}");
        }
    }

    #[test]
    fn homogeneity() {
        let (kappa, rho) = (3.0, -2.5);
        let z = Complex64::new(0.3, 0.7);
        for a in [0.5, 2.0, 7.0] {
            let lhs = green_interior(kappa, rho, a * z).unwrap();
            let rhs = a.powf(rho / kappa + rho * rho / (8.0 * kappa)) * green_interior(kappa, rho, z).unwrap();
            assert!((lhs / rhs - 1.0).abs() < 1e-12);
            assert!(close(green_capacity_shape(kappa, a * z).unwrap(), green_capacity_shape(kappa, z).unwrap(), 1e-14));
        }
    }

    #[test]
    fn martingale_starts_at_green_and_vanishes_after_swallow() {
        let (kappa, rho) = (6.0, -8.0);
        let z0 = Complex64::new(0.5, 1.0);
        let cfg = DriverConfig::interior(kappa, rho, z0, 1e-3, 20.0);
        let run = simulate_sle_rho_interior(&cfg, &mut substream(1, 0)).unwrap();
        assert!(run.outcome.swallow_time().is_some());
        let m = martingale_m_interior(&run.track, kappa, rho, run.track.len() + 5).unwrap();
        assert!((m[0] - green_interior(kappa, rho, z0).unwrap()).abs() < 1e-12);
        assert!(m[run.track.len()..].iter().all(|v| *v == 0.0));
        let short = DriverConfig::interior(kappa, rho, z0, 1e-3, 0.01);
        let run = simulate_sle_rho_interior(&short, &mut substream(1, 0)).unwrap();
        assert!(martingale_m_interior(&run.track, kappa, rho, run.track.len() + 1).is_err());
    }

    #[test]
    fn martingale_from_closed_form_flow() {
        // λ ≡ 0: g_t(z) = √(z² + 4t), g_t'(z) = z / g_t(z)
        let (kappa, rho) = (8.0 / 3.0, -16.0 / 3.0);
        let z0 = Complex64::new(0.0, 1.0);
        let t = 0.1;
        let g = (z0 * z0 + 4.0 * t).sqrt();
        let exact = m_interior(kappa, rho, g, (z0 / g).norm().ln());
        let dt = 1e-4;
        let d = SampledPath::truncated(dt, vec![0.0; grid_len(t, dt) + 1]).unwrap();
        let states = evolve_points(&d, &[z0], 100, 1e-9).unwrap();
        let last = states.last().unwrap();
        assert!((last.t - t).abs() < 1e-12);
        let flowed = m_of_tracked(&last.points[0], last.lambda, kappa, rho);
        assert!((flowed - exact).abs() < 1e-6, "{flowed} vs {exact}");
    }

    #[test]
    fn boundary_martingale_closed_form() {
        let (kappa, rho, x0, t): (f64, f64, f64, f64) = (6.0, -2.0, 3.0, 1.0);
        let g = (x0 * x0 + 4.0 * t).sqrt();
        let exact = g.powf(rho / kappa) * (x0 / g).powf((rho / kappa) * (1.0 - kappa / 4.0 + rho / 4.0));
        let dt = 1e-4;
        let d = SampledPath::truncated(dt, vec![0.0; grid_len(t, dt) + 1]).unwrap();
        let states = evolve_points(&d, &[Complex64::new(x0, 0.0)], 10_000, 1e-9).unwrap();
        let p = &states.last().unwrap().points[0];
        let flowed = m_boundary(kappa, rho, p.g.re, p.gprime.re.ln());
        assert!((flowed - exact).abs() < 1e-6);
        assert!((m_boundary(kappa, rho, x0, 0.0) - green_boundary(kappa, rho, x0).unwrap()).abs() < 1e-14);
    }

    /// Adaptive Simpson in one variable.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
    }

    fn oracle_2d(f: &(dyn Fn(f64, f64) -> f64 + Sync), r: &Rect) -> f64 {
        simpson(&|y| simpson(&|x| f(x, y), r.x_min, r.x_max, 1e-11), r.y_min, r.y_max, 1e-10)
    }

    #[test]
    fn psi_zero_matches_adaptive_quadrature() {
        let (kappa, rho) = (4.0, -4.0);
        let rect = Rect::new(-1.0, 1.0, 0.1, 1.1).unwrap();
        let u = Region::new(vec![rect]).unwrap();
        let oracle = oracle_2d(&|x, y| (x * x + y * y).sqrt().recip() * y.sqrt(), &rect);
        let grid = QuadratureGrid::new(&u, 0.005).unwrap();
        let states = vec![LoewnerFlowState {
            t: 0.0,
            lambda: 0.0,
            points: grid
                .nodes
                .iter()
                .map(|&z| TrackedPoint {
                    z0: z,
                    g: z,
                    gprime: Complex64::new(1.0, 0.0),
                    alive: true,
                    swallow_time: None,
                })
                .collect(),
        }];
        let psi = psi_u(&states, &grid, kappa, rho).unwrap()[0];
        assert!((psi / oracle - 1.0).abs() < 1e-4, "{psi} vs {oracle}");
        let q = integrate_green(&u, 0.01, |z| green_interior(kappa, rho, z)).unwrap();
        assert!(!q.too_coarse);
        assert!((q.value / oracle - 1.0).abs() < 1e-4);
    }

    #[test]
    fn quadrature_is_additive_over_disjoint_regions() {
        let f = |z: Complex64| green_capacity_shape(6.0, z).unwrap();
        let u1: Region = "-1,1,0.25,0.75".parse().unwrap();
        let u2: Region = "-1,1,0.75,1.25".parse().unwrap();
        let both: Region = "-1,1,0.25,0.75;-1,1,0.75,1.25".parse().unwrap();
        let a = QuadratureGrid::new(&u1, 0.01).unwrap().integrate(f);
        let b = QuadratureGrid::new(&u2, 0.01).unwrap().integrate(f);
        let c = QuadratureGrid::new(&both, 0.01).unwrap().integrate(f);
        assert!((a + b - c).abs() < 1e-12);
    }

    #[test]
    fn green_on_the_real_line_has_no_mass() {
        let u: Region = "1,2,0,1e-300".parse().unwrap();
        assert!(integrate_green(&u, 0.01, |z| green_capacity_shape(6.0, z)).is_err());
    }

    #[test]
    fn capacity_green_is_zero_above_height_two() {
        let r = capacity_green_mc(6.0, Complex64::new(0.0, 3.0), 1.0, 200, &SwallowSampler::default(), 1).unwrap();
        assert_eq!(r.value, 0.0);
        let r = capacity_green_mc(
            6.0,
            Complex64::new(0.0, 3.0),
            1.0,
            200,
            &SwallowSampler::Radial(RadialOptions::default()),
            1,
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn capacity_green_tends_to_shape_for_large_t() {
        let z = Complex64::new(0.5, 0.5);
        let r = capacity_green_mc(6.0, z, 50.0, 400, &SwallowSampler::Radial(RadialOptions::default()), 3).unwrap();
        let g = green_capacity_shape(6.0, z).unwrap();
        assert!((r.value - g).abs() < 3.0 * r.stderr.max(1e-3), "{} vs {g}", r.value);
    }

    #[test]
    fn boundary_power_integral() {
        let exact = psi0_boundary_exact(6.0, -2.0, (1.0, 3.0)).unwrap();
        let quad = psi0_boundary_quadrature(6.0, -2.0, (1.0, 3.0), 10_000).unwrap();
        assert!((exact - 1.5 * (3f64.powf(2.0 / 3.0) - 1.0)).abs() < 1e-12);
        assert!((exact - quad).abs() < 1e-8);
        let neg = psi0_boundary_exact(6.0, -2.0, (-3.0, -1.0)).unwrap();
        assert!((neg - exact).abs() < 1e-12);
        assert!(psi0_boundary_exact(6.0, -2.0, (-1.0, 1.0)).is_err());
    }

    #[test]
    fn minkowski_of_a_segment() {
        let (kappa, r, l) = (8.0 / 3.0, 0.02, 0.5);
        let c = TracedCurve {
            dt: 1.0,
            points: vec![Complex64::new(0.0, 0.5), Complex64::new(0.0, 0.5 + l)],
            driver: vec![0.0; 2],
            failures: vec![],
        };
        let u = rect_region(-1.0, 1.0, 0.1, 2.0).unwrap();
        let v = minkowski_content(&c, &u, kappa, r).unwrap();
        let tube = r.powf(sle_dimension(kappa) - 2.0) * (2.0 * r * l + std::f64::consts::PI * r * r);
        assert!((v / tube - 1.0).abs() < 0.05);
        let far = rect_region(3.0, 4.0, 0.1, 2.0).unwrap();
        assert_eq!(minkowski_content(&c, &far, kappa, r).unwrap(), 0.0);
    }
}
