//! Runs verification tests at reduced size and prints each check.
//!
//! cargo run --release --example run_verification -- [test names...]

use sledecomp::verify::{run_test, VerifyOptions, TEST_NAMES};

fn main() -> sledecomp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let names: Vec<&str> = if args.is_empty() { vec!["tail-bound", "brownian-bound", "bm-disk"] } else { args.iter().map(String::as_str).collect() };
    let opts = VerifyOptions { seed: 1, quick: true, ..Default::default() };
    for name in names {
        if !TEST_NAMES.contains(&name) {
            eprintln!("unknown test {name}; known: {}", TEST_NAMES.join(", "));
            continue;
        }
        let r = run_test(name, &opts)?;
        println!("{} {}", if r.passed { "PASS" } else { "FAIL" }, r.name);
        for c in &r.checks {
            println!("    {:<48} {:>10.4} {:?} {:.4}", c.name, c.value, c.kind, c.threshold);
        }
    }
    Ok(())
}
