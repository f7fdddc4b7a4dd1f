//! Numerical chordal Loewner machinery.

mod flow;
mod region;
mod slit;
mod trace;

pub use flow::{evolve_points, restart_driver, LoewnerFlowState, TrackedPoint};
pub use region::{Rect, Region};
pub use slit::{
    slit_forward, slit_forward_real, slit_forward_with_derivative, slit_inverse, upper_sqrt,
};
pub use trace::{trace_curve, trace_near, CurvePiece, CurveTracer, TraceMethod, TraceOptions, TracedCurve};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default cap on raster cells for [`neighborhood_area`].
pub const DEFAULT_MAX_CELLS: usize = 50_000_000;

/// Left Riemann sum for the Lebesgue measure of `{t < upto : γ(t) ∈ U}`.
pub fn occupation_time(curve: &TracedCurve, region: &Region, upto: f64) -> f64 {
    let kmax = ((upto / curve.dt) + 1e-9).floor() as usize;
    let hits = curve
        .points
        .iter()
        .take(kmax)
        .filter(|p| region.contains(**p))
        .count();
    hits as f64 * curve.dt
}

/// Grid indices `k` with `t_k < upto` at which the curve is in `U`.
pub fn occupation_indices(curve: &TracedCurve, region: &Region, upto: f64) -> Vec<usize> {
    let kmax = ((upto / curve.dt) + 1e-9).floor() as usize;
    curve
        .points
        .iter()
        .take(kmax)
        .enumerate()
        .filter(|(_, p)| region.contains(**p))
        .map(|(k, _)| k)
        .collect()
}

#[inline]
fn segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * ab.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + ab * t)).norm()
}

struct RectRaster {
    x0: f64,
    y0: f64,
    px: f64,
    py: f64,
    nx: usize,
    ny: usize,
    marked: Vec<bool>,
    /// cells already covered by an earlier rectangle of the union
    shadowed: Vec<bool>,
}

/// Rasterised `r`-neighbourhood of a polygonal curve inside a region.
pub struct NeighborhoodRaster {
    rasters: Vec<RectRaster>,
    pub radius: f64,
}

impl NeighborhoodRaster {
    /// Area of `{z ∈ U : dist(z, γ) < r}`.
    pub fn area(&self) -> f64 {
        self.rasters
            .iter()
            .map(|r| {
                let n = r
                    .marked
                    .iter()
                    .zip(&r.shadowed)
                    .filter(|(m, s)| **m && !**s)
                    .count();
                n as f64 * r.px * r.py
            })
            .sum()
    }

    /// Centres of the marked cells.
    pub fn marked_cells(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        for r in &self.rasters {
            for iy in 0..r.ny {
                for ix in 0..r.nx {
                    let c = iy * r.nx + ix;
                    if r.marked[c] && !r.shadowed[c] {
                        out.push(Complex64::new(
                            r.x0 + (ix as f64 + 0.5) * r.px,
                            r.y0 + (iy as f64 + 0.5) * r.py,
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Rasterises the `r`-neighbourhood of the polygonal curves in `polylines`
/// within `region`, on cells of pitch at most `pitch`.
pub fn neighborhood_raster(
    polylines: &[&[Complex64]],
    region: &Region,
    r: f64,
    pitch: f64,
    max_cells: usize,
) -> Result<NeighborhoodRaster> {
    if !(r > 0.0) {
        return Err(Error::invalid("neighbourhood radius must be positive"));
    }
    if !(pitch > 0.0) {
        return Err(Error::invalid("raster pitch must be positive"));
    }
    if !region.is_bounded() {
        return Err(Error::invalid("neighbourhood area needs a bounded region"));
    }
    let mut total = 0usize;
    let mut rasters = Vec::new();
    for (ri, rect) in region.rects().iter().enumerate() {
        let w = rect.x_max - rect.x_min;
        let h = rect.y_max - rect.y_min;
        let nx = ((w / pitch).ceil() as usize).max(1);
        let ny = ((h / pitch).ceil() as usize).max(1);
        total = total.saturating_add(nx.saturating_mul(ny));
        if total > max_cells {
            return Err(Error::ResourceLimit(format!(
                "raster needs more than {max_cells} cells"
            )));
        }
        let px = w / nx as f64;
        let py = h / ny as f64;
        let mut shadowed = vec![false; nx * ny];
        if ri > 0 {
            for iy in 0..ny {
                for ix in 0..nx {
                    let c = Complex64::new(
                        rect.x_min + (ix as f64 + 0.5) * px,
                        rect.y_min + (iy as f64 + 0.5) * py,
                    );
                    shadowed[iy * nx + ix] = region.rects()[..ri].iter().any(|q| q.contains(c));
                }
            }
        }
        rasters.push(RectRaster {
            x0: rect.x_min,
            y0: rect.y_min,
            px,
            py,
            nx,
            ny,
            marked: vec![false; nx * ny],
            shadowed,
        });
    }
    let valid = |p: &Complex64| p.re.is_finite() && p.im.is_finite();
    for seg in polylines.iter().flat_map(|p| p.windows(2)) {
        let (a, b) = (seg[0], seg[1]);
        if !valid(&a) || !valid(&b) {
            continue;
        }
        let (sx0, sx1) = (a.re.min(b.re) - r, a.re.max(b.re) + r);
        let (sy0, sy1) = (a.im.min(b.im) - r, a.im.max(b.im) + r);
        for ras in rasters.iter_mut() {
            let rx1 = ras.x0 + ras.nx as f64 * ras.px;
            let ry1 = ras.y0 + ras.ny as f64 * ras.py;
            if sx1 < ras.x0 || sx0 > rx1 || sy1 < ras.y0 || sy0 > ry1 {
                continue;
            }
            let ix0 = (((sx0 - ras.x0) / ras.px).floor().max(0.0)) as usize;
            let ix1 = (((sx1 - ras.x0) / ras.px).ceil() as usize).min(ras.nx);
            let iy0 = (((sy0 - ras.y0) / ras.py).floor().max(0.0)) as usize;
            let iy1 = (((sy1 - ras.y0) / ras.py).ceil() as usize).min(ras.ny);
            for iy in iy0..iy1 {
                let cy = ras.y0 + (iy as f64 + 0.5) * ras.py;
                for ix in ix0..ix1 {
                    let c = iy * ras.nx + ix;
                    if ras.marked[c] {
                        continue;
                    }
                    let cx = ras.x0 + (ix as f64 + 0.5) * ras.px;
                    if segment_distance(Complex64::new(cx, cy), a, b) < r {
                        ras.marked[c] = true;
                    }
                }
            }
        }
    }
    Ok(NeighborhoodRaster {
        rasters,
        radius: r,
    })
}

/// Area of `{z ∈ U : dist(z, γ) < r}` on a grid of pitch `r/4`.
pub fn neighborhood_area(curve: &TracedCurve, region: &Region, r: f64) -> Result<f64> {
    neighborhood_area_with_pitch(curve, region, r, r / 4.0)
}

/// [`neighborhood_area`] with an explicit pitch (clamped to at most `r/4`).
pub fn neighborhood_area_with_pitch(
    curve: &TracedCurve,
    region: &Region,
    r: f64,
    pitch: f64,
) -> Result<f64> {
    let pitch = pitch.min(r / 4.0);
    Ok(neighborhood_raster(&[&curve.points], region, r, pitch, DEFAULT_MAX_CELLS)?.area())
}

/// First global index `k` such that the segment `[γ(t_k), γ(t_{k+1})]` of
/// one of the pieces comes within `r` of `z`.
pub fn first_approach_pieces(pieces: &[CurvePiece], z: Complex64, r: f64) -> Option<usize> {
    pieces
        .iter()
        .find_map(|p| first_approach(&p.points, z, r).map(|i| p.start + i))
}

/// First curve index whose segment `[γ(t_k), γ(t_{k+1})]` comes within `r`
/// of `z`.
pub fn first_approach(points: &[Complex64], z: Complex64, r: f64) -> Option<usize> {
    if points.len() == 1 {
        return ((points[0] - z).norm() < r).then_some(0);
    }
    points
        .windows(2)
        .position(|s| segment_distance(z, s[0], s[1]) < r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertical_curve(dt: f64, tmax: f64) -> TracedCurve {
        let n = (tmax / dt).round() as usize + 1;
        TracedCurve {
            dt,
            points: (0..n)
                .map(|k| Complex64::new(0.0, 2.0 * (k as f64 * dt).sqrt()))
                .collect(),
            driver: vec![0.0; n],
            failures: vec![],
        }
    }

    #[test]
    fn occupation_of_vertical_slit() {
        let c = vertical_curve(1e-3, 2.0);
        let u = Region::rect(-10.0, 10.0, 1.0, f64::INFINITY).unwrap();
        assert!((occupation_time(&c, &u, 1.0) - 0.75).abs() < 1e-9);
        let far = Region::rect(5.0, 6.0, 0.0, 1.0).unwrap();
        assert_eq!(occupation_time(&c, &far, 1.0), 0.0);
        let small = Region::rect(-1.0, 1.0, 1.0, 1.5).unwrap();
        let big = Region::rect(-1.0, 1.0, 0.5, 1.5).unwrap();
        assert!(occupation_time(&c, &small, 2.0) <= occupation_time(&c, &big, 2.0));
    }

    #[test]
    fn segment_tube_area() {
        let (a, l, r) = (0.5, 1.0, 0.02);
        let c = TracedCurve {
            dt: 1.0,
            points: vec![Complex64::new(0.0, a), Complex64::new(0.0, a + l)],
            driver: vec![0.0; 2],
            failures: vec![],
        };
        let u = Region::rect(-1.0, 1.0, 0.0, 2.0).unwrap();
        let area = neighborhood_area_with_pitch(&c, &u, r, r / 8.0).unwrap();
        let exact = 2.0 * r * l + std::f64::consts::PI * r * r;
        assert!((area / exact - 1.0).abs() < 0.05, "{area} vs {exact}");
    }

    #[test]
    fn large_radius_fills_region() {
        let c = vertical_curve(1e-2, 1.0);
        let u = Region::rect(0.0, 0.2, 0.0, 0.2).unwrap();
        let area = neighborhood_area(&c, &u, 1.0).unwrap();
        assert!((area - 0.04).abs() < 1e-12);
    }

    #[test]
    fn disjoint_region_has_zero_area() {
        let c = vertical_curve(1e-2, 1.0);
        let u = Region::rect(3.0, 4.0, 0.5, 1.0).unwrap();
        assert_eq!(neighborhood_area(&c, &u, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn grid_refinement_changes_little() {
        let c = vertical_curve(1e-3, 1.0);
        let u = Region::rect(-0.3, 0.3, 0.3, 1.7).unwrap();
        let coarse = neighborhood_area_with_pitch(&c, &u, 0.05, 0.05 / 4.0).unwrap();
        let fine = neighborhood_area_with_pitch(&c, &u, 0.05, 0.05 / 8.0).unwrap();
        assert!((coarse / fine - 1.0).abs() < 0.02, "{coarse} vs {fine}");
    }

    #[test]
    fn memory_cap_is_enforced() {
        let c = vertical_curve(1e-2, 1.0);
        let u = Region::rect(-1.0, 1.0, 0.0, 1.0).unwrap();
        let e = neighborhood_raster(&[&c.points], &u, 1e-3, 1e-4, 1000);
        assert!(matches!(e, Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn overlapping_rectangles_count_once() {
        let c = vertical_curve(1e-3, 1.0);
        let one = Region::rect(-0.5, 0.5, 0.5, 1.5).unwrap();
        let two: Region = "-0.5,0.5,0.5,1.5;-0.5,0.5,0.5,1.0".parse().unwrap();
        let a = neighborhood_area(&c, &one, 0.05).unwrap();
        let b = neighborhood_area(&c, &two, 0.05).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
