//! Samples SLE_κ(ρ) drivers with an interior force point and tallies how the
//! runs ended.
//!
//! cargo run --release --example simulate_drivers -- [kappa] [rho] [n]

use sledecomp::drivers::{replicate, simulate_sle_rho_interior, DriverConfig, OutcomeCounts};
use sledecomp::stats::mean_se;
use sledecomp::Complex64;

fn main() -> sledecomp::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let kappa = args.first().copied().unwrap_or(6.0);
    let rho = args.get(1).copied().unwrap_or(-8.0);
    let n = args.get(2).map(|&v| v as usize).unwrap_or(500);

    let cfg = DriverConfig::interior(kappa, rho, Complex64::new(0.0, 1.0), 1e-3, 20.0);
    let runs = replicate(42, n, |rng| simulate_sle_rho_interior(&cfg, rng));
    let runs: Vec<_> = runs.into_iter().collect::<sledecomp::Result<_>>()?;

    let counts = OutcomeCounts::tally(runs.iter().map(|r| &r.outcome));
    let times: Vec<f64> = runs.iter().filter_map(|r| r.outcome.swallow_time()).collect();
    let (mean, se) = mean_se(&times);
    println!("kappa={kappa} rho={rho} z0=i n={n}");
    println!("outcomes: {counts:?}");
    println!("mean swallow time {mean:.4} ± {se:.4}");
    Ok(())
}
