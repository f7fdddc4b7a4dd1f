//! Acceptance criteria, one line per criterion.
//!
//! Runs at full sample sizes; expect a few minutes in release mode. The seed
//! can be overridden with `SLEDECOMP_ACCEPTANCE_SEED`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use sledecomp::cli::{cmd_simulate, cmd_verify, RunConfig};
use sledecomp::loewner::{slit_forward, slit_forward_with_derivative, trace_curve, TraceOptions};
use sledecomp::pathspace::SampledPath;
use sledecomp::verify::{run_test, Check, TestReport, VerifyOptions};
use sledecomp::Complex64;

const DEFAULT_SEED: u64 = 2026;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome { passed, detail: detail.into() }
    }
}

fn seed() -> u64 {
    std::env::var("SLEDECOMP_ACCEPTANCE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

fn full(seed: u64) -> VerifyOptions {
    VerifyOptions {
        seed,
        quick: false,
        ..Default::default()
    }
}

fn describe(checks: &[&Check]) -> String {
    checks
        .iter()
        .map(|c| format!("{} = {:.4} ({:?} {:.4})", c.name, c.value, c.kind, c.threshold))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Passes when every check whose name satisfies `select` passes, and at
/// least one check matched.
fn checks_where(r: &TestReport, select: impl Fn(&str) -> bool) -> Outcome {
    let picked: Vec<&Check> = r.checks.iter().filter(|c| select(&c.name)).collect();
    let passed = !picked.is_empty() && picked.iter().all(|c| c.passed);
    Outcome::new(passed, describe(&picked))
}

fn all_checks(r: &TestReport) -> Outcome {
    checks_where(r, |_| true)
}

fn slit_map_exactness() -> Outcome {
    let start = Instant::now();
    let dt = 1e-4;
    let n = 10_000;
    let zero = Complex64::new(0.0, 0.0);
    // i lies on the slit from t = 1/4 on; compose the step maps without a
    // swallow cutoff to follow its boundary value
    let (mut g, mut gp) = (Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0));
    for _ in 0..n {
        let (ng, d) = slit_forward_with_derivative(g, 0.0, dt);
        g = ng;
        gp *= d;
    }
    let g_err = (g - Complex64::new(3f64.sqrt(), 0.0)).norm();
    let z = (0..n).fold(Complex64::new(1.0, 1.0), |z, _| slit_forward(z, 0.0, dt));
    let z_err = (z - Complex64::new(4.0, 2.0).sqrt()).norm();
    let driver = SampledPath::truncated(dt, vec![0.0; n + 1]).expect("valid driver");
    let curve = trace_curve(&driver, &TraceOptions::default()).expect("traceable");
    let tip_err = (curve.points[n] - Complex64::new(0.0, 2.0)).norm();
    let elapsed = start.elapsed();
    let passed = g_err < 1e-3 && z_err < 1e-3 && tip_err < 1e-3 && curve.points[0] == zero && elapsed < Duration::from_secs(1);
    Outcome::new(
        passed,
        format!(
            "|g_1(i) - sqrt3| = {g_err:.2e}, |g_1(1+i) - sqrt(4+2i)| = {z_err:.2e}, |gamma(1) - 2i| = {tip_err:.2e}, |g_1'(i)| = {:.5}, {elapsed:.2?}",
            gp.norm()
        ),
    )
}

fn determinism(seed: u64) -> Outcome {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().expect("temp dir")).collect();
    let mut archives = Vec::new();
    let mut metadata = Vec::new();
    let mut reports = Vec::new();
    for d in &dirs {
        let mut c = RunConfig::default();
        for (k, v) in [("kind", "sle-rho"), ("kappa", "6"), ("rho", "-8"), ("z0", "1+1i"), ("n", "50"), ("horizon", "5")] {
            c.set(k, v).expect("valid key");
        }
        c.seed = seed;
        c.out = d.path().to_path_buf();
        cmd_simulate(&c).expect("simulate");
        c.test = "tail-bound,path-algebra".into();
        c.quick = true;
        cmd_verify(&c, |_| Ok(())).expect("verify");
        archives.push(std::fs::read(d.path().join("paths.slep")).expect("archive"));
        // the config echo names the output directory; compare everything else
        let meta: serde_json::Value =
            serde_json::from_slice(&std::fs::read(d.path().join("simulate.json")).expect("metadata")).expect("json");
        let mut meta = meta;
        meta["config"]["out"] = serde_json::Value::Null;
        meta["archive"] = serde_json::Value::Null;
        metadata.push(meta);
        reports.push(std::fs::read(d.path().join("verify.jsonl")).expect("reports"));
    }
    let passed = archives[0] == archives[1] && metadata[0] == metadata[1] && reports[0] == reports[1];
    Outcome::new(
        passed,
        format!(
            "archive {} bytes identical: {}; metadata identical: {}; reports {} bytes identical: {}",
            archives[0].len(),
            archives[0] == archives[1],
            metadata[0] == metadata[1],
            reports[0].len(),
            reports[0] == reports[1]
        ),
    )
}

fn run(name: &str, seed: u64) -> Result<TestReport, String> {
    run_test(name, &full(seed)).map_err(|e| format!("{name}: {e}"))
}

fn main() -> ExitCode {
    let seed = seed();
    println!("acceptance seed {seed}");
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut record = |id: usize, title: &'static str, f: &mut dyn FnMut() -> Result<Outcome, String>| {
        let t = Instant::now();
        let o = f().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let dt = t.elapsed();
        println!("criterion {id:>2} {}: {title} [{dt:.1?}] {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, title, o, dt));
    };

    record(1, "slit-map exactness", &mut || Ok(slit_map_exactness()));
    let mut girsanov = None;
    record(2, "Girsanov reweighting", &mut || {
        let r = run("girsanov-reweighting", seed)?;
        let o = checks_where(&r, |n| n.starts_with("ks "));
        girsanov = Some(r);
        Ok(o)
    });
    record(3, "mean-weight identity", &mut || {
        let r = girsanov.as_ref().ok_or("girsanov run failed")?;
        Ok(checks_where(r, |n| n.starts_with("mean weight")))
    });
    record(4, "tail bound", &mut || Ok(all_checks(&run("tail-bound", seed)?)));
    record(5, "cross-simulator agreement", &mut || Ok(all_checks(&run("cross-simulator", seed)?)));
    record(6, "capacity Green's function", &mut || Ok(all_checks(&run("capacity-green", seed)?)));
    record(7, "C_kappa1 consistency", &mut || Ok(all_checks(&run("c-kappa1", seed)?)));
    record(8, "occupation ratio identity", &mut || Ok(all_checks(&run("occupation-identity", seed)?)));
    record(9, "capacity decomposition", &mut || {
        Ok(checks_where(&run("capacity-decomposition", seed)?, |n| n.starts_with("ks ")))
    });
    record(10, "natural decomposition (fixed-r surrogate)", &mut || {
        Ok(checks_where(&run("natural-decomposition", seed)?, |n| {
            n.starts_with("ks ") || n.starts_with("content ratio")
        }))
    });
    record(11, "Psi decay bound", &mut || Ok(all_checks(&run("psi-decay", seed)?)));
    record(12, "path algebra", &mut || Ok(all_checks(&run("path-algebra", seed)?)));
    record(13, "planar BM in the disk", &mut || {
        let t = Instant::now();
        let mut o = checks_where(&run("bm-disk", seed)?, |n| n.contains("tau") || n.contains("hit fraction"));
        let elapsed = t.elapsed();
        o.passed &= elapsed < Duration::from_secs(60);
        o.detail.push_str(&format!("; runtime {elapsed:.1?}"));
        Ok(o)
    });
    record(14, "boundary case", &mut || {
        Ok(checks_where(&run("boundary-martingale", seed)?, |n| {
            n.starts_with("ks ") || n.starts_with("Psi_0")
        }))
    });
    record(15, "determinism", &mut || Ok(determinism(seed)));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
