//! Closed-form Green's functions and the one-point martingale along a
//! simulated SLE_κ(κ−8) run, plus the quadrature Ψ₀ of a box.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sledecomp::drivers::{simulate_sle_rho_interior, DriverConfig};
use sledecomp::observables::{
    green_capacity_shape, green_interior, green_sle_shape, integrate_green, martingale_m_interior, rect_region,
};
use sledecomp::Complex64;

fn main() -> sledecomp::Result<()> {
    let kappa = 8.0 / 3.0;
    let rho = kappa - 8.0;
    let z0 = Complex64::new(0.3, 1.0);
    println!("G^(kappa,rho)(z0) = {:.6}", green_interior(kappa, rho, z0)?);
    println!("SLE Green shape   = {:.6}", green_sle_shape(kappa, z0)?);
    println!("capacity shape    = {:.6}", green_capacity_shape(kappa, z0)?);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let run = simulate_sle_rho_interior(&DriverConfig::interior(kappa, rho, z0, 1e-3, 1.0), &mut rng)?;
    let steps = run.track.len() - 1;
    let m = martingale_m_interior(&run.track, kappa, rho, steps)?;
    for k in (0..m.len()).step_by((m.len() / 5).max(1)) {
        println!("t = {:.3}  M_t = {:.6}", k as f64 * run.track.dt, m[k]);
    }
    println!("outcome: {:?}", run.outcome);

    let u = rect_region(-0.5, 0.5, 0.25, 1.0)?;
    let psi0 = integrate_green(&u, 0.01, |z| green_interior(kappa, rho, z))?;
    println!("Psi_0(U) = {:.6} (pitch-halving rel. diff {:.2e})", psi0.value, psi0.rel_diff);
    Ok(())
}
