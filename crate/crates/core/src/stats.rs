//! Small statistics toolbox: two-sample KS tests (plain and weighted),
//! binomial intervals, ratio estimators and χ² goodness of fit.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Outcome of a two-sample Kolmogorov–Smirnov comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// Kish effective sizes when weights were supplied.
    pub effective_sizes: Option<(f64, f64)>,
    /// `"permutation"` or `"asymptotic"`.
    pub method: String,
}

fn check_sample(x: &[f64], name: &str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid(format!("sample {name} is empty")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("sample {name} contains non-finite values")));
    }
    Ok(())
}

fn check_weights(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::invalid("weights and sample differ in length"));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("weights must be finite and non-negative"));
    }
    if !(w.iter().sum::<f64>() > 0.0) {
        return Err(Error::invalid("weights sum to zero"));
    }
    Ok(())
}

/// `sup |F_a − F_b|` for weighted empirical distributions.
pub fn weighted_ks_statistic(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> f64 {
    let sa: f64 = wa.iter().sum();
    let sb: f64 = wb.iter().sum();
    let mut pooled: Vec<(f64, f64)> = a
        .iter()
        .zip(wa)
        .map(|(&x, &w)| (x, w / sa))
        .chain(b.iter().zip(wb).map(|(&x, &w)| (x, -w / sb)))
        .collect();
    pooled.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut diff = 0.0f64;
    let mut best = 0.0f64;
    for (i, &(x, w)) in pooled.iter().enumerate() {
        diff += w;
        let tie_continues = pooled.get(i + 1).is_some_and(|n| n.0 == x);
        if !tie_continues {
            best = best.max(diff.abs());
        }
    }
    best
}

/// Classical two-sample KS statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    weighted_ks_statistic(a, &vec![1.0; a.len()], b, &vec![1.0; b.len()])
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS statistic for effective sizes `na`, `nb`.
pub fn ks_asymptotic_p(d: f64, na: f64, nb: f64) -> f64 {
    let ne = na * nb / (na + nb);
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn kish_ess(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Two-sample KS test with a label-permutation p-value `(1 + #{D* ≥ D}) / (1 + P)`.
pub fn ks_permutation_test<R: Rng + ?Sized>(
    a: &[f64],
    b: &[f64],
    permutations: usize,
    rng: &mut R,
) -> Result<TwoSampleResult> {
    check_sample(a, "a")?;
    check_sample(b, "b")?;
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    // last index of each tie group
    let ends: Vec<bool> = (0..pooled.len())
        .map(|i| i + 1 == pooled.len() || pooled[i + 1] != pooled[i])
        .collect();
    let (na, nb) = (a.len(), b.len());
    let (ia, ib) = (1.0 / na as f64, 1.0 / nb as f64);
    let stat_for = |labels: &[bool]| {
        let mut diff = 0.0f64;
        let mut best = 0.0f64;
        for (i, &is_a) in labels.iter().enumerate() {
            diff += if is_a { ia } else { -ib };
            if ends[i] {
                best = best.max(diff.abs());
            }
        }
        best
    };
    let observed = ks_statistic(a, b);
    let mut labels: Vec<bool> = (0..na + nb).map(|i| i < na).collect();
    let mut hits = 0usize;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if stat_for(&labels) >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok(TwoSampleResult {
        statistic: observed,
        p_value: (1 + hits) as f64 / (1 + permutations) as f64,
        n_a: na,
        n_b: nb,
        effective_sizes: None,
        method: "permutation".into(),
    })
}

fn all_equal(w: &[f64]) -> bool {
    w.windows(2).all(|p| p[0] == p[1])
}

/// Weighted two-sample KS test.
///
/// With constant weights on both sides this is exactly the permutation test.
/// Otherwise the statistic is referred to the Kolmogorov distribution at the
/// Kish effective sizes; label permutation is not valid when the two samples
/// come from different proposal laws.
pub fn weighted_ks_test<R: Rng + ?Sized>(
    a: &[f64],
    wa: &[f64],
    b: &[f64],
    wb: &[f64],
    permutations: usize,
    rng: &mut R,
) -> Result<TwoSampleResult> {
    check_sample(a, "a")?;
    check_sample(b, "b")?;
    check_weights(wa, a.len())?;
    check_weights(wb, b.len())?;
    if all_equal(wa) && all_equal(wb) {
        return ks_permutation_test(a, b, permutations, rng);
    }
    // zero-weight points carry no information
    let keep = |x: &[f64], w: &[f64]| -> (Vec<f64>, Vec<f64>) {
        x.iter().zip(w).filter(|p| *p.1 > 0.0).map(|(x, w)| (*x, *w)).unzip()
    };
    let (a, wa) = keep(a, wa);
    let (b, wb) = keep(b, wb);
    let d = weighted_ks_statistic(&a, &wa, &b, &wb);
    let (ea, eb) = (kish_ess(&wa), kish_ess(&wb));
    Ok(TwoSampleResult {
        statistic: d,
        p_value: ks_asymptotic_p(d, ea, eb),
        n_a: a.len(),
        n_b: b.len(),
        effective_sizes: Some((ea, eb)),
        method: "asymptotic".into(),
    })
}

/// Sample mean and its standard error.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Binomial proportion with Agresti–Coull standard error and 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
    pub estimate: f64,
    pub se: f64,
    pub ci95: (f64, f64),
}

pub fn proportion(successes: usize, trials: usize) -> Proportion {
    let n = trials as f64;
    let z2 = Z95 * Z95;
    let nt = n + z2;
    let pt = (successes as f64 + z2 / 2.0) / nt;
    let se = (pt * (1.0 - pt) / nt).sqrt();
    Proportion {
        successes,
        trials,
        estimate: if trials == 0 { f64::NAN } else { successes as f64 / n },
        se,
        ci95: ((pt - Z95 * se).max(0.0), (pt + Z95 * se).min(1.0)),
    }
}

/// Ratio `E[a]/E[b]` from paired samples, with a delta-method standard error.
pub fn ratio_of_means(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let r = ma / mb;
    let resid: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - r * y).collect();
    let var = resid.iter().map(|v| v * v).sum::<f64>() / (n - 1.0);
    (r, (var / n).sqrt() / mb.abs())
}

/// `|a − b| ≤ z·√(se_a² + se_b²)`.
pub fn within_joint(a: f64, se_a: f64, b: f64, se_b: f64, z: f64) -> bool {
    (a - b).abs() <= z * (se_a * se_a + se_b * se_b).sqrt()
}

/// Pearson χ² goodness of fit; returns `(statistic, p-value)`.
pub fn chi_squared_gof(observed: &[usize], expected_probs: &[f64]) -> Result<(f64, f64)> {
    if observed.len() != expected_probs.len() || observed.len() < 2 {
        return Err(Error::invalid("chi-squared needs matching cell lists of length >= 2"));
    }
    let n: usize = observed.iter().sum();
    let total: f64 = expected_probs.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected_probs)
        .map(|(&o, &p)| {
            let e = n as f64 * p / total;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((stat, 1.0 - dist.cdf(stat)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn ks_statistic_by_hand() {
        // F_a jumps at 1,2,3; F_b at 2.5,3.5: sup gap 2/3 just after 2
        let d = ks_statistic(&[1.0, 2.0, 3.0], &[2.5, 3.5]);
        assert!((d - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn unit_weights_reproduce_classical_statistic() {
        let mut rng = substream(1, 0);
        let n = Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..200).map(|_| n.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..150).map(|_| n.sample(&mut rng) + 0.1).collect();
        let d1 = ks_statistic(&a, &b);
        let d2 = weighted_ks_statistic(&a, &vec![3.0; 200], &b, &vec![0.5; 150]);
        assert!((d1 - d2).abs() < 1e-12);
        let r = weighted_ks_test(&a, &vec![1.0; 200], &b, &vec![1.0; 150], 199, &mut rng).unwrap();
        assert_eq!(r.method, "permutation");
    }

    #[test]
    fn permutation_p_values_are_calibrated_under_null() {
        let n = Normal::new(0.0, 1.0).unwrap();
        let rejections = (0..200)
            .filter(|&i| {
                let mut rng = substream(2, i);
                let a: Vec<f64> = (0..50).map(|_| n.sample(&mut rng)).collect();
                let b: Vec<f64> = (0..60).map(|_| n.sample(&mut rng)).collect();
                ks_permutation_test(&a, &b, 199, &mut rng).unwrap().p_value < 0.05
            })
            .count();
        assert!(rejections < 25, "{rejections}");
    }

    #[test]
    fn detects_a_shift() {
        let mut rng = substream(3, 0);
        let n = Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..500).map(|_| n.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..500).map(|_| n.sample(&mut rng) + 0.5).collect();
        assert!(ks_permutation_test(&a, &b, 199, &mut rng).unwrap().p_value < 0.01);
    }

    #[test]
    fn importance_weights_recover_target() {
        // N(0,1) proposal reweighted to N(0.5,1) vs direct N(0.5,1)
        let mut rng = substream(4, 0);
        let n = Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..4000).map(|_| n.sample(&mut rng)).collect();
        let wa: Vec<f64> = a.iter().map(|x| (0.5 * x - 0.125f64).exp()).collect();
        let b: Vec<f64> = (0..4000).map(|_| n.sample(&mut rng) + 0.5).collect();
        let r = weighted_ks_test(&a, &wa, &b, &vec![1.0; 4000], 0, &mut rng).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
        let unweighted = ks_permutation_test(&a, &b, 199, &mut rng).unwrap();
        assert!(unweighted.p_value < 0.01);
    }

    #[test]
    fn kolmogorov_tail_values() {
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn agresti_coull_brackets_extremes() {
        let p = proportion(100, 100);
        assert!(p.se > 0.0 && p.ci95.1 == 1.0 && p.ci95.0 > 0.95);
        let q = proportion(0, 100);
        assert_eq!(q.estimate, 0.0);
    }

    #[test]
    fn chi_squared_accepts_matching_counts() {
        let (_, p) = chi_squared_gof(&[250, 250, 250, 250], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        let (_, p) = chi_squared_gof(&[400, 200, 200, 200], &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(p < 1e-6);
    }

    #[test]
    fn ratio_estimator_on_exact_ratio() {
        let a = [2.0, 4.0, 6.0];
        let b = [1.0, 2.0, 3.0];
        let (r, se) = ratio_of_means(&a, &b);
        assert_eq!(r, 2.0);
        assert_eq!(se, 0.0);
    }
}
