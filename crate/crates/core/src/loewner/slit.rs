//! Elementary vertical-slit maps.
//!
//! Over one step of length `h` with the driver frozen at `λ`, the Loewner map
//! is `z ↦ λ + √((z-λ)² + 4h)` and its inverse is `w ↦ λ + √((w-λ)² - 4h)`,
//! both with the square-root branch that keeps the upper half-plane.

use num_complex::Complex64;

/// `√a` on the branch with non-negative imaginary part. On the positive real
/// axis the sign follows `sign_hint`.
///
/// Computed algebraically rather than through the polar form; this is the
/// innermost operation of every Loewner integrator in the crate.
#[inline]
pub fn upper_sqrt(a: Complex64, sign_hint: f64) -> Complex64 {
    let (p, q) = (a.re, a.im);
    if q == 0.0 {
        return if p >= 0.0 {
            let r = p.sqrt();
            Complex64::new(if sign_hint < 0.0 { -r } else { r }, 0.0)
        } else {
            Complex64::new(0.0, (-p).sqrt())
        };
    }
    let r = (p * p + q * q).sqrt();
    let (re, im) = if p >= 0.0 {
        let re = (0.5 * (r + p)).sqrt();
        (re, 0.5 * q.abs() / re)
    } else {
        let im = (0.5 * (r - p)).sqrt();
        (0.5 * q.abs() / im, im)
    };
    Complex64::new(re.copysign(q), im)
}

/// Forward slit map `g(z) = λ + √((z-λ)² + 4h)`.
#[inline]
pub fn slit_forward(z: Complex64, lambda: f64, h: f64) -> Complex64 {
    let w = z - lambda;
    lambda + upper_sqrt(w * w + 4.0 * h, w.re)
}

/// Forward slit map together with its derivative `g'(z) = (z-λ)/(g(z)-λ)`.
#[inline]
pub fn slit_forward_with_derivative(z: Complex64, lambda: f64, h: f64) -> (Complex64, Complex64) {
    let w = z - lambda;
    let s = upper_sqrt(w * w + 4.0 * h, w.re);
    (lambda + s, w / s)
}

/// Inverse slit map `f(w) = λ + √((w-λ)² - 4h)`.
#[inline]
pub fn slit_inverse(w: Complex64, lambda: f64, h: f64) -> Complex64 {
    let u = Complex64::new(w.re - lambda, w.im.max(0.0));
    lambda + upper_sqrt(u * u - 4.0 * h, u.re)
}

/// Forward map of a real point `x ≠ λ`: `λ + sign(x-λ)·√((x-λ)² + 4h)`.
#[inline]
pub fn slit_forward_real(x: f64, lambda: f64, h: f64) -> f64 {
    let w = x - lambda;
    lambda + w.signum() * (w * w + 4.0 * h).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upper_sqrt_matches_principal_branch() {
        for &(re, im) in &[(1.0, 2.0), (-3.0, 0.5), (-3.0, -0.5), (2.0, -1e-9), (0.0, 1.0)] {
            let a = Complex64::new(re, im);
            let s = upper_sqrt(a, 1.0);
            let mut p = a.sqrt();
            if p.im < 0.0 {
                p = -p;
            }
            assert!((s - p).norm() <= 1e-14 * p.norm(), "{a}: {s} vs {p}");
        }
        assert_eq!(upper_sqrt(Complex64::new(4.0, 0.0), -1.0), Complex64::new(-2.0, 0.0));
        assert_eq!(upper_sqrt(Complex64::new(-4.0, 0.0), 1.0), Complex64::new(0.0, 2.0));
    }

    #[test]
    fn composition_with_fixed_driver_is_exact() {
        let z = Complex64::new(0.0, 1.0);
        let mut g = z;
        for _ in 0..1000 {
            g = slit_forward(g, 0.0, 1e-3);
        }
        assert!((g - Complex64::new(3f64.sqrt(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn inverse_undoes_forward() {
        for &(x, y) in &[(0.3, 0.2), (-2.0, 0.01), (0.0, 5.0), (-0.1, 1.0)] {
            let z = Complex64::new(x, y);
            let w = slit_forward(z, 0.1, 0.01);
            assert!(w.im > 0.0);
            let back = slit_inverse(w, 0.1, 0.01);
            assert!((back - z).norm() < 1e-12, "{z} -> {w} -> {back}");
        }
    }

    #[test]
    fn tip_of_slit() {
        let tip = slit_inverse(Complex64::new(0.5, 0.0), 0.5, 0.25);
        assert!((tip - Complex64::new(0.5, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn real_points_keep_side() {
        assert!(slit_forward_real(1.0, 0.0, 0.1) > 1.0);
        assert!(slit_forward_real(-1.0, 0.0, 0.1) < -1.0);
        assert!((slit_forward_real(3.0, 0.0, 1.0) - 13f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let z = Complex64::new(0.4, 0.7);
        let (_, d) = slit_forward_with_derivative(z, -0.2, 0.05);
        let e = 1e-6;
        let fd = (slit_forward(z + e, -0.2, 0.05) - slit_forward(z - e, -0.2, 0.05)) / (2.0 * e);
        assert!((d - fd).norm() < 1e-8);
    }
}
