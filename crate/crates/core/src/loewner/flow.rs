//! Forward Loewner flow of tracked points.

use num_complex::Complex64;

use super::slit::{slit_forward_real, slit_forward_with_derivative};
use crate::error::{Error, Result};
use crate::pathspace::SampledPath;

/// Flow data of one tracked point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    /// Initial position.
    pub z0: Complex64,
    /// `g_t(z0)`.
    pub g: Complex64,
    /// `g_t'(z0)`.
    pub gprime: Complex64,
    pub alive: bool,
    pub swallow_time: Option<f64>,
}

impl TrackedPoint {
    /// `Z_t = g_t(z0) - λ_t`.
    pub fn offset(&self, lambda: f64) -> Complex64 {
        self.g - lambda
    }
}

/// Snapshot of the flow at capacity time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoewnerFlowState {
    pub t: f64,
    /// Driver value `λ_t`.
    pub lambda: f64,
    pub points: Vec<TrackedPoint>,
}

/// Flows `points` under the driver, recording a snapshot every
/// `record_every` steps (step 0 included, and the final step always).
///
/// Each step applies the closed-form slit map with the driver frozen at the
/// right endpoint of the step, which is exact for piecewise-constant drivers.
/// Real points use real arithmetic; a real point is swallowed when the driver
/// crosses it. Any point is declared swallowed once `|g - λ| < swallow_eps`.
pub fn evolve_points(
    driver: &SampledPath<f64>,
    points: &[Complex64],
    record_every: usize,
    swallow_eps: f64,
) -> Result<Vec<LoewnerFlowState>> {
    if record_every == 0 {
        return Err(Error::invalid("record_every must be at least 1"));
    }
    if !(swallow_eps > 0.0) {
        return Err(Error::invalid("swallow_eps must be positive"));
    }
    let lam = driver.values();
    let lam0 = lam[0];
    let mut state: Vec<TrackedPoint> = Vec::with_capacity(points.len());
    for &z in points {
        if z.im < 0.0 || !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::invalid(format!("point {z} is not in the closed upper half-plane")));
        }
        if z.im == 0.0 && z.re == lam0 {
            return Err(Error::invalid(format!("point {z} coincides with the driver start")));
        }
        state.push(TrackedPoint {
            z0: z,
            g: z,
            gprime: Complex64::new(1.0, 0.0),
            alive: true,
            swallow_time: None,
        });
    }
    let dt = driver.dt();
    let n = lam.len();
    let mut out = Vec::with_capacity(n / record_every + 2);
    out.push(LoewnerFlowState {
        t: 0.0,
        lambda: lam0,
        points: state.clone(),
    });
    for k in 1..n {
        let l = lam[k];
        let t = k as f64 * dt;
        for p in state.iter_mut().filter(|p| p.alive) {
            step_point(p, l, dt, t, swallow_eps);
        }
        if k % record_every == 0 || k == n - 1 {
            out.push(LoewnerFlowState {
                t,
                lambda: l,
                points: state.clone(),
            });
        }
    }
    Ok(out)
}

#[inline]
fn step_point(p: &mut TrackedPoint, lambda: f64, h: f64, t: f64, eps: f64) {
    if p.z0.im == 0.0 {
        let x = p.g.re;
        let w = x - lambda;
        let nx = slit_forward_real(x, lambda, h);
        let side_before = (x - lambda).signum();
        p.gprime *= w / (nx - lambda);
        p.g = Complex64::new(nx, 0.0);
        // the driver jumping over the point swallows it
        if (nx - lambda).abs() < eps || side_before != (p.g.re - lambda).signum() {
            p.alive = false;
            p.swallow_time = Some(t);
        }
        return;
    }
    let (g, d) = slit_forward_with_derivative(p.g, lambda, h);
    p.g = g;
    p.gprime *= d;
    if (g - lambda).norm() < eps || !(g.im > 0.0) {
        p.alive = false;
        p.swallow_time = Some(t);
    }
}

/// Renewal helper: the driver restarted at grid index `k`, i.e.
/// `s ↦ λ(t_k + s)` as a new driver on the same grid.
pub fn restart_driver(driver: &SampledPath<f64>, k: usize) -> Result<SampledPath<f64>> {
    let vals = &driver.values()[k..];
    SampledPath::truncated(driver.dt(), vals.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_driver(dt: f64, horizon: f64) -> SampledPath<f64> {
        let n = crate::pathspace::grid_len(horizon, dt) + 1;
        SampledPath::truncated(dt, vec![0.0; n]).unwrap()
    }

    #[test]
    fn zero_driver_matches_closed_form() {
        let d = zero_driver(1e-4, 1.0);
        let states = evolve_points(&d, &[Complex64::new(1.0, 1.0), Complex64::new(3.0, 0.0)], 1000, 1e-9)
            .unwrap();
        let last = states.last().unwrap();
        assert!((last.t - 1.0).abs() < 1e-12);
        let p = &last.points[0];
        let exact = Complex64::new(4.0, 2.0).sqrt();
        assert!((p.g - exact).norm() < 1e-9);
        assert!((p.gprime - Complex64::new(1.0, 1.0) / exact).norm() < 1e-9);
        let q = &last.points[1];
        assert!(q.alive);
        assert!((q.g.re - 13f64.sqrt()).abs() < 1e-9);
        assert!((q.gprime.re - 3.0 / 13f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn point_on_the_slit_is_swallowed() {
        let d = zero_driver(1e-3, 1.0);
        let states = evolve_points(&d, &[Complex64::new(0.0, 1.0)], 1, 1e-3).unwrap();
        let last = states.last().unwrap();
        let p = &last.points[0];
        assert!(!p.alive);
        // the vertical slit reaches height 1 at t = 1/4
        assert!((p.swallow_time.unwrap() - 0.25).abs() < 2e-3);
    }

    #[test]
    fn start_point_is_rejected() {
        let d = zero_driver(1e-2, 1.0);
        assert!(evolve_points(&d, &[Complex64::new(0.0, 0.0)], 1, 1e-3).is_err());
        assert!(evolve_points(&d, &[Complex64::new(0.0, -1.0)], 1, 1e-3).is_err());
    }

    #[test]
    fn renewal_composes() {
        // g_{τ+t} = (g_{τ+t} ∘ g_τ^{-1}) ∘ g_τ with the restarted driver
        let dt = 1e-3;
        let vals: Vec<f64> = (0..2001).map(|k| (k as f64 * dt * 7.0).sin() * 0.5).collect();
        let d = SampledPath::truncated(dt, vals).unwrap();
        let z = Complex64::new(0.3, 0.8);
        let full = evolve_points(&d, &[z], 2000, 1e-9).unwrap();
        let k = 700;
        let head = SampledPath::truncated(dt, d.values()[..=k].to_vec()).unwrap();
        let mid = evolve_points(&head, &[z], k, 1e-9).unwrap();
        let gz = mid.last().unwrap().points[0].g;
        let tail = restart_driver(&d, k).unwrap();
        let rest = evolve_points(&tail, &[gz], 10_000, 1e-9).unwrap();
        let a = full.last().unwrap().points[0].g;
        let b = rest.last().unwrap().points[0].g;
        assert!((a - b).norm() < 1e-12);
    }
}
