//! Two independent estimates of the capacity Green's function constant at a
//! reduced sample size (about ten seconds in release mode).

use sledecomp::observables::estimate_c_kappa1;
use sledecomp::verify::c_kappa1_quick;

fn main() -> sledecomp::Result<()> {
    let est = estimate_c_kappa1(&c_kappa1_quick(6.0, 1))?;
    for (name, r) in [("occupation", &est.route_a), ("lattice", &est.route_b)] {
        println!("{name:>10}: {:.4} ± {:.4}  95% CI [{:.4}, {:.4}] {:?}", r.value, r.stderr, r.ci95[0], r.ci95[1], r.flags);
    }
    println!("ratio {:.4} ± {:.4}", est.ratio, est.ratio_se);
    Ok(())
}
