//! Killing and continuation of sampled paths: kill a Brownian path at the
//! first time it reaches a level, restart an independent copy there and
//! concatenate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sledecomp::drivers::{simulate_brownian_driver, DriverConfig};
use sledecomp::pathspace::{concat, kill, split_at_junction};

fn main() -> sledecomp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = DriverConfig::brownian(1.0, 1e-3, 2.0);
    let first = simulate_brownian_driver(&cfg, &mut rng)?;
    let hit = first.values().iter().position(|v| v.abs() >= 0.5);
    let tau = hit.map(|k| k as f64 * first.dt()).unwrap_or(2.0);
    let head = kill(&first, tau)?;
    let tail = simulate_brownian_driver(&cfg, &mut rng)?;
    let joined = concat(&head, &tail)?;
    let (a, b) = split_at_junction(&joined, tau)?;
    println!("level hit at t = {tau:.3}");
    println!("head lifetime {:?}, tail lifetime {:?}", head.lifetime(), tail.lifetime());
    println!("joined lifetime {:?}, value at junction {:?}", joined.lifetime(), joined.value_at(tau));
    println!("split back: {} + {} samples", a.len(), b.len());
    Ok(())
}
