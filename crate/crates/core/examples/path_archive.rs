//! Writes drivers to the binary path archive and reads them back.

use sledecomp::drivers::{replicate, simulate_brownian_driver, DriverConfig};
use sledecomp::pathspace::{read_archive, write_archive, ArchivedPath};

fn main() -> sledecomp::Result<()> {
    let cfg = DriverConfig::brownian(4.0, 1e-3, 0.5);
    let paths: Vec<ArchivedPath> = replicate(5, 4, |rng| simulate_brownian_driver(&cfg, rng))
        .into_iter()
        .map(|p| p.map(ArchivedPath::from))
        .collect::<sledecomp::Result<_>>()?;
    let mut bytes = Vec::new();
    write_archive(&mut bytes, &paths)?;
    let back = read_archive(&mut bytes.as_slice())?;
    println!("{} bytes, {} paths, identical: {}", bytes.len(), back.len(), back == paths);
    for (i, p) in back.iter().enumerate() {
        println!("path {i}: {} samples, dt {}, lifetime {:?}", p.len(), p.dt(), p.lifetime());
    }
    Ok(())
}
