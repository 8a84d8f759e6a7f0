#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Borel point mass `e^{−ck}(ck)^{k−1}/k!`.
pub fn borel(c: f64, k: usize) -> f64 {
    let kf = k as f64;
    let log_fact: f64 = (1..=k).map(|j| (j as f64).ln()).sum();
    (-c * kf + (kf - 1.0) * (c * kf).ln() - log_fact).exp()
}

/// Largest root of `ρ = 1 − e^{−cρ}` by bisection.
pub fn scalar_rho(c: f64) -> f64 {
    if c <= 1.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (1e-12, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid - (1.0 - (-c * mid).exp()) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// p-value of the two-sample chi-square homogeneity test on binned counts.
/// Adjacent bins are merged from the right until each pooled bin has an
/// expected count of at least 5.
pub fn two_sample_chi_square(a: &[u64], b: &[u64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut ca, mut cb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ca += *x as f64;
        cb += *y as f64;
        let pooled = ca + cb;
        if pooled * na.min(nb) / (na + nb) >= 5.0 {
            bins.push((ca, cb));
            ca = 0.0;
            cb = 0.0;
        }
    }
    if ca + cb > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += ca;
                last.1 += cb;
            }
            None => bins.push((ca, cb)),
        }
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let total = na + nb;
    let mut stat = 0.0;
    for (x, y) in &bins {
        let pooled = x + y;
        let ea = pooled * na / total;
        let eb = pooled * nb / total;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dist = ChiSquared::new((bins.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// p-value of a goodness-of-fit statistic `Σ z²` over `df` independent
/// standardised deviations.
pub fn chi_square_p(stat: f64, df: usize) -> f64 {
    1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat)
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
