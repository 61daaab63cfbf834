//! Small descriptive-statistics helpers shared across modules.

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator). Zero for fewer than two values.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() - 1) as f64).sqrt()
}

/// Excess kurtosis with population moments, `m4 / m2^2 - 3`.
pub fn excess_kurtosis<I>(x: I) -> f64
where
    I: IntoIterator<Item = f64> + Clone,
{
    let (mut n, mut s) = (0usize, 0.0);
    for v in x.clone() {
        n += 1;
        s += v;
    }
    let m = s / n as f64;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n as f64;
    m4 /= n as f64;
    m4 / (m2 * m2) - 3.0
}

/// Sum that does not depend on the order of its inputs: values are sorted first.
pub fn order_free_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}
