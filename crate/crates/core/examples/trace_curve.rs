//! Traces one chordal SLE_κ curve and prints it as CSV (`t,re,im`).
//!
//! cargo run --release --example trace_curve -- [kappa] > curve.csv

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sledecomp::drivers::{simulate_brownian_driver, DriverConfig};
use sledecomp::loewner::{trace_curve, TraceOptions};

fn main() -> sledecomp::Result<()> {
    let kappa = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(8.0 / 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let driver = simulate_brownian_driver(&DriverConfig::brownian(kappa, 1e-4, 1.0), &mut rng)?;
    let curve = trace_curve(&driver, &TraceOptions { stride: 10, ..Default::default() })?;
    eprintln!("{} points, {} tracing failures", curve.points.len(), curve.failures.len());
    print!("{}", curve.to_csv());
    Ok(())
}
