//! Curve tracing by backward composition of inverse slit maps (zipper).
//!
//! With the driver frozen at `λ_j` on the `j`-th step, the curve point at the
//! `k`-th grid time is `γ(t_k) = f_1 ∘ … ∘ f_k(λ_k)` where `f_j` is the inverse
//! slit map of step `j`. Evaluating this exactly costs `O(k)` per point and
//! `O(n²)` per curve.
//!
//! [`TraceMethod::Blocked`] reduces this to roughly `O(n log n)`. Steps are
//! grouped into dyadic blocks; a block of total time `τ` whose driver values
//! have mean `c` is replaced by a single slit map of time `τ` based at `c`
//! whenever the running point is far from the block's hull
//! (`|w - c| > tolerance · R`, `R = 2√τ + 2·osc`). The replacement matches the
//! first two coefficients of the hydrodynamic expansion of the composed map,
//! so its error decays like `(R/|w-c|)³`.

use num_complex::Complex64;
use rayon::prelude::*;

use super::slit::slit_inverse;
use crate::error::{Error, Result};
use super::region::Rect;
use crate::pathspace::SampledPath;

/// How curve points are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceMethod {
    /// Full right-to-left composition, `O(k)` per point.
    Exact,
    /// Dyadic block approximation; larger `tolerance` is more accurate.
    Blocked { tolerance: f64 },
}

impl Default for TraceMethod {
    fn default() -> Self {
        TraceMethod::Blocked { tolerance: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Curve grid spacing in driver steps.
    pub stride: usize,
    pub method: TraceMethod,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            stride: 1,
            method: TraceMethod::default(),
        }
    }
}

/// Sampled curve `γ(t_k)`, `t_k = k·dt`, with the driver at the same times.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedCurve {
    pub dt: f64,
    pub points: Vec<Complex64>,
    pub driver: Vec<f64>,
    /// Indices whose evaluation produced a non-finite value.
    pub failures: Vec<usize>,
}

impl TracedCurve {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points.len()).map(move |k| k as f64 * self.dt)
    }

    /// CSV with header `t,re,im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,re,im\n");
        for (k, p) in self.points.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", k as f64 * self.dt, p.re, p.im));
        }
        s
    }
}

struct BlockLevel {
    center: Vec<f64>,
    radius: Vec<f64>,
}

/// Dyadic block summaries over maps `1..=n` (map `j` uses `λ_j`).
struct BlockTable {
    levels: Vec<BlockLevel>,
    dt: f64,
}

impl BlockTable {
    fn build(lam: &[f64], dt: f64) -> Self {
        let maps = &lam[1..];
        let mut levels = Vec::new();
        let mut sum: Vec<f64> = maps.to_vec();
        let mut lo: Vec<f64> = maps.to_vec();
        let mut hi: Vec<f64> = maps.to_vec();
        let mut size = 1usize;
        levels.push(BlockLevel {
            center: maps.to_vec(),
            radius: vec![2.0 * dt.sqrt(); maps.len()],
        });
        while sum.len() >= 2 {
            let m = sum.len() / 2;
            let nsum: Vec<f64> = (0..m).map(|i| sum[2 * i] + sum[2 * i + 1]).collect();
            let nlo: Vec<f64> = (0..m).map(|i| lo[2 * i].min(lo[2 * i + 1])).collect();
            let nhi: Vec<f64> = (0..m).map(|i| hi[2 * i].max(hi[2 * i + 1])).collect();
            size *= 2;
            let tau = size as f64 * dt;
            let center: Vec<f64> = nsum.iter().map(|s| s / size as f64).collect();
            let radius = (0..m)
                .map(|i| {
                    let osc = (nhi[i] - center[i]).max(center[i] - nlo[i]);
                    2.0 * tau.sqrt() + 2.0 * osc
                })
                .collect();
            levels.push(BlockLevel { center, radius });
            sum = nsum;
            lo = nlo;
            hi = nhi;
        }
        BlockTable { levels, dt }
    }

    /// Applies `f_1 ∘ … ∘ f_j` to `w`.
    fn pull_back(&self, mut w: Complex64, mut j: usize, tolerance: f64) -> Complex64 {
        while j > 0 {
            let mut level = (j.trailing_zeros() as usize).min(self.levels.len() - 1);
            loop {
                if level == 0 {
                    break;
                }
                let block = (j >> level) - 1;
                let lv = &self.levels[level];
                let c = lv.center[block];
                let reach = tolerance * lv.radius[block];
                if (w - c).norm_sqr() > reach * reach {
                    break;
                }
                level -= 1;
            }
            let size = 1usize << level;
            let block = (j >> level) - 1;
            let c = self.levels[level].center[block];
            w = slit_inverse(w, c, size as f64 * self.dt);
            j -= size;
        }
        w
    }
}

/// Point evaluator `k ↦ γ(t_k)` sharing one block table across calls.
pub struct CurveTracer<'a> {
    lam: &'a [f64],
    dt: f64,
    table: Option<(BlockTable, f64)>,
}

impl<'a> CurveTracer<'a> {
    pub fn new(driver: &'a SampledPath<f64>, method: TraceMethod) -> Result<Self> {
        let lam = driver.values();
        let dt = driver.dt();
        let table = match method {
            TraceMethod::Blocked { tolerance } => {
                if !(tolerance > 1.0) {
                    return Err(Error::invalid("blocked tracing tolerance must exceed 1"));
                }
                Some((BlockTable::build(lam, dt), tolerance))
            }
            TraceMethod::Exact => None,
        };
        Ok(CurveTracer { lam, dt, table })
    }

    pub fn len(&self) -> usize {
        self.lam.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lam.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn driver(&self) -> &[f64] {
        self.lam
    }

    /// `γ(t_k) = f_1 ∘ … ∘ f_k(λ_k)`.
    pub fn point(&self, k: usize) -> Complex64 {
        let w = Complex64::new(self.lam[k], 0.0);
        match &self.table {
            Some((tab, tol)) => tab.pull_back(w, k, *tol),
            None => {
                let mut w = w;
                for j in (1..=k).rev() {
                    w = slit_inverse(w, self.lam[j], self.dt);
                }
                w
            }
        }
    }
}

/// A contiguous run of curve samples `γ(t_k)`, `k = start, start+1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePiece {
    pub start: usize,
    pub points: Vec<Complex64>,
}

impl CurvePiece {
    pub fn indexed(&self) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.points.iter().enumerate().map(move |(i, p)| (self.start + i, *p))
    }
}

/// Traces the curve on every `coarse`-th sample and fills in all samples of
/// the coarse cells that come within `margin` of `target`. A cell's reach is
/// widened by four times its chord length, so excursions between coarse samples
/// are caught.
pub fn trace_near(tracer: &CurveTracer<'_>, target: &Rect, margin: f64, coarse: usize) -> Vec<CurvePiece> {
    let n = tracer.len();
    if n == 0 {
        return Vec::new();
    }
    let coarse = coarse.max(1);
    let knots: Vec<usize> = (0..n).step_by(coarse).chain((!(n - 1).is_multiple_of(coarse)).then_some(n - 1)).collect();
    let pts: Vec<Complex64> = knots.iter().map(|&k| tracer.point(k)).collect();
    let mut pieces: Vec<CurvePiece> = Vec::new();
    for c in 0..knots.len().saturating_sub(1) {
        let (a, b) = (pts[c], pts[c + 1]);
        let reach = margin + 4.0 * (b - a).norm();
        if target.distance(a) > reach && target.distance(b) > reach {
            continue;
        }
        let (k0, k1) = (knots[c], knots[c + 1]);
        let extend = pieces.last().is_some_and(|p| p.start + p.points.len() - 1 == k0);
        if !extend {
            pieces.push(CurvePiece { start: k0, points: vec![a] });
        }
        let piece = pieces.last_mut().expect("pushed above");
        piece.points.extend((k0 + 1..k1).map(|k| tracer.point(k)));
        piece.points.push(b);
    }
    if knots.len() == 1 && target.distance(pts[0]) <= margin {
        pieces.push(CurvePiece { start: 0, points: vec![pts[0]] });
    }
    pieces
}

/// Traces the curve generated by `driver`.
pub fn trace_curve(driver: &SampledPath<f64>, opts: &TraceOptions) -> Result<TracedCurve> {
    if opts.stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    let tracer = CurveTracer::new(driver, opts.method)?;
    let lam = driver.values();
    let indices: Vec<usize> = (0..lam.len()).step_by(opts.stride).collect();
    let points: Vec<Complex64> = indices.par_iter().map(|&k| tracer.point(k)).collect();
    let failures = points
        .iter()
        .enumerate()
        .filter(|(_, p)| !(p.re.is_finite() && p.im.is_finite()))
        .map(|(i, _)| i)
        .collect();
    Ok(TracedCurve {
        dt: driver.dt() * opts.stride as f64,
        driver: indices.iter().map(|&k| lam[k]).collect(),
        points,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::grid_len;
    use crate::rng::substream;
    use rand_distr::{Distribution, StandardNormal};

    fn constant_driver(c: f64, dt: f64, horizon: f64) -> SampledPath<f64> {
        SampledPath::truncated(dt, vec![c; grid_len(horizon, dt) + 1]).unwrap()
    }

    fn brownian(kappa: f64, dt: f64, n: usize, seed: u64) -> SampledPath<f64> {
        let mut rng = substream(seed, 0);
        let mut x = 0.0;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(x);
            let z: f64 = StandardNormal.sample(&mut rng);
            x += (kappa * dt).sqrt() * z;
        }
        SampledPath::truncated(dt, v).unwrap()
    }

    #[test]
    fn vertical_slit() {
        for method in [TraceMethod::Exact, TraceMethod::default()] {
            let d = constant_driver(0.0, 1e-4, 1.0);
            let c = trace_curve(&d, &TraceOptions { stride: 100, method }).unwrap();
            let last = *c.points.last().unwrap();
            assert!((c.dt * (c.points.len() - 1) as f64 - 1.0).abs() < 1e-9);
            assert!((last - Complex64::new(0.0, 2.0)).norm() < 1e-3, "{last}");
            assert_eq!(c.points[0], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn translation() {
        let d = constant_driver(0.7, 1e-3, 1.0);
        let c = trace_curve(&d, &TraceOptions::default()).unwrap();
        for (k, p) in c.points.iter().enumerate().skip(1) {
            let t = k as f64 * c.dt;
            assert!((p - Complex64::new(0.7, 2.0 * t.sqrt())).norm() < 1e-6);
        }
    }

    #[test]
    fn blocked_matches_exact_on_brownian_driver() {
        let d = brownian(6.0, 1e-3, 3000, 5);
        let exact = trace_curve(&d, &TraceOptions { stride: 10, method: TraceMethod::Exact }).unwrap();
        let fast = trace_curve(&d, &TraceOptions { stride: 10, method: TraceMethod::default() }).unwrap();
        let scale = exact.points.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let worst = exact
            .points
            .iter()
            .zip(&fast.points)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst < 5e-3 * scale, "worst {worst} scale {scale}");
    }

    #[test]
    fn refinement_near_a_box_finds_every_sample_inside() {
        let target = Rect::new(-1.0, 1.0, 0.25, 1.25).unwrap();
        for seed in 0..16 {
            let d = brownian(6.0, 1e-3, 6000, seed);
            let full = trace_curve(&d, &TraceOptions::default()).unwrap();
            let tracer = CurveTracer::new(&d, TraceMethod::default()).unwrap();
            let pieces = trace_near(&tracer, &target, 0.05, 16);
            let inside: Vec<usize> = (0..full.points.len()).filter(|&k| target.contains(full.points[k])).collect();
            let mut found: Vec<usize> = pieces
                .iter()
                .flat_map(|p| p.indexed())
                .filter(|(_, z)| target.contains(*z))
                .map(|(k, _)| k)
                .collect();
            found.dedup();
            assert_eq!(inside, found, "seed {seed}");
            for p in &pieces {
                for (k, z) in p.indexed() {
                    assert_eq!(z, full.points[k]);
                }
            }
        }
    }

    #[test]
    fn curve_stays_in_closed_upper_half_plane() {
        let d = brownian(8.0 / 3.0, 1e-3, 2000, 9);
        let c = trace_curve(&d, &TraceOptions::default()).unwrap();
        assert!(c.failures.is_empty());
        assert!(c.points.iter().all(|p| p.im >= 0.0));
        assert_eq!(c.points[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn scaling_of_the_trace() {
        // tracing t ↦ aλ(t/a²) gives a·γ(t/a²)
        let a = 2.0;
        let dt = 1e-3;
        let d = brownian(4.0, dt, 1001, 13);
        let scaled_vals: Vec<f64> = d.values().iter().map(|v| a * v).collect();
        let scaled = SampledPath::truncated(dt * a * a, scaled_vals).unwrap();
        let opts = TraceOptions { stride: 50, method: TraceMethod::Exact };
        let c1 = trace_curve(&d, &opts).unwrap();
        let c2 = trace_curve(&scaled, &opts).unwrap();
        for (p, q) in c1.points.iter().zip(&c2.points) {
            assert!((a * p - q).norm() < 1e-9);
        }
    }
}
