//! Descriptive statistics, normal quantiles and the Kolmogorov–Smirnov test.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance (n − 1 denominator); 0 for fewer than two values.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Two-sided critical value `z` with `P(|N(0,1)| ≤ z) = level`.
pub fn normal_critical(level: f64) -> f64 {
    std_normal().inverse_cdf(0.5 + level / 2.0)
}

/// Sup distance between the empirical CDF of `sample` and the standard normal CDF.
pub fn ks_statistic_normal(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.18 {
        // small-x form converges faster: P(K <= x) = sqrt(2π)/x Σ exp(-(2k-1)²π²/(8x²))
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-(m * m) * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / x;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test against N(0,1): `(statistic, p_value)`, with Stephens'
/// finite-sample correction of the asymptotic distribution.
pub fn ks_test_normal(sample: &[f64]) -> (f64, f64) {
    let d = ks_statistic_normal(sample);
    let sn = (sample.len() as f64).sqrt();
    let p = kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d);
    (d, p)
}
