//! Small descriptive-statistics toolkit for Monte Carlo reductions.

/// Moments and robust location summaries of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub median: f64,
    /// Mean after discarding 5% of the sample at each end.
    pub trimmed_mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                n,
                mean: f64::NAN,
                sd: f64::NAN,
                se: f64::NAN,
                median: f64::NAN,
                trimmed_mean: f64::NAN,
            };
        }
        let (mean, var) = mean_var(values);
        let sd = var.sqrt();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Summary {
            n,
            mean,
            sd,
            se: sd / (n as f64).sqrt(),
            median: quantile_sorted(&sorted, 0.5),
            trimmed_mean: trimmed_mean_sorted(&sorted, 0.05),
        }
    }

    /// `|mean - target| / se`, with `0` when both the deviation and the
    /// standard error vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        z_of(self.mean - target, self.se, target.abs()).abs()
    }
}

/// `dev / se`, except that deviations at rounding level relative to `scale`
/// count as exact agreement (sums of masses are 1 only up to rounding).
pub fn z_of(dev: f64, se: f64, scale: f64) -> f64 {
    if dev.abs() <= 1e-12 * scale.max(1.0) {
        0.0
    } else if se > 0.0 {
        dev / se
    } else {
        dev.signum() * f64::INFINITY
    }
}

/// Mean and unbiased variance in one pass (Welford), accumulated in index
/// order.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &v) in values.iter().enumerate() {
        let d = v - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (v - mean);
    }
    let n = values.len();
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    (mean, var)
}

/// Linear-interpolated quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, 0.5)
}

fn trimmed_mean_sorted(sorted: &[f64], frac: f64) -> f64 {
    let cut = (sorted.len() as f64 * frac).floor() as usize;
    let kept = &sorted[cut..sorted.len() - cut];
    if kept.is_empty() {
        return quantile_sorted(sorted, 0.5);
    }
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Ratio-of-means estimate `mean(num) / mean(den)` with its delta-method
/// standard error.
pub fn ratio_estimate(num: &[f64], den: &[f64]) -> (f64, f64) {
    assert_eq!(num.len(), den.len());
    let n = num.len() as f64;
    let (mn, _) = mean_var(num);
    let (md, _) = mean_var(den);
    let r = mn / md;
    let resid: Vec<f64> = num.iter().zip(den).map(|(a, b)| a - r * b).collect();
    let (_, v) = mean_var(&resid);
    (r, v.sqrt() / (md.abs() * n.sqrt()))
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = mean_var(x);
    let (my, _) = mean_var(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// One-sample Kolmogorov–Smirnov distance between a sample and a continuous
/// CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance where the first sample carries
/// nonnegative weights (normalised internally) and the second is unweighted.
pub fn weighted_ks_distance(weighted: &[(f64, f64)], plain: &[f64]) -> f64 {
    let mut a: Vec<(f64, f64)> = weighted.to_vec();
    a.sort_by(|l, r| l.0.total_cmp(&r.0));
    let total: f64 = a.iter().map(|p| p.1).sum();
    let mut b = plain.to_vec();
    b.sort_by(f64::total_cmp);
    let nb = b.len() as f64;
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(pa), Some(&vb)) => pa.0.min(vb),
            (Some(pa), None) => pa.0,
            (None, Some(&vb)) => vb,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i].0 <= next {
            fa += a[i].1 / total;
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            fb += 1.0 / nb;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_basics() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.se - s.sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn trimmed_mean_drops_outliers() {
        let mut v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        v[99] = 1e9;
        let s = Summary::of(&v);
        assert!((s.trimmed_mean - 49.5).abs() < 1e-12);
    }

    #[test]
    fn constant_sample_z_score() {
        let s = Summary::of(&[1.0; 10]);
        assert_eq!(s.z_score(1.0), 0.0);
        assert!(s.z_score(2.0).is_infinite());
    }

    #[test]
    fn slope_of_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        assert!((ls_slope(&x, &y) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ks_of_uniform_grid() {
        let s: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_distance(&s, |x| x) <= 0.0005 + 1e-12);
    }

    #[test]
    fn weighted_ks_matches_plain_when_weights_equal() {
        let a: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 1.0)).collect();
        let b: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert!(weighted_ks_distance(&a, &b) < 1e-12);
        let shifted: Vec<f64> = b.iter().map(|v| v + 100.0).collect();
        assert!((weighted_ks_distance(&a, &shifted) - 1.0).abs() < 1e-12);
    }
}
