use serde::Serialize;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    /// Welford mean and `sd / √M` of `samples`; a constant sample has
    /// exactly zero spread.
    pub fn from_samples(samples: &[f64]) -> Self {
        let (mean, var) = mean_var(samples);
        let m = samples.len();
        let se = if m > 1 { (var / m as f64).sqrt() } else { 0.0 };
        Self { mean, se }
    }

    /// Whether `|mean − other| ≤ sigmas · se`.
    pub fn within(&self, other: f64, sigmas: f64) -> bool {
        (self.mean - other).abs() <= sigmas * self.se
    }
}

/// Welford mean and unbiased variance.
pub(crate) fn mean_var(samples: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in samples.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    let m = samples.len();
    let var = if m > 1 { m2 / (m - 1) as f64 } else { 0.0 };
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_has_zero_spread() {
        let v = vec![0.1 + 0.2; 17];
        let (mean, var) = mean_var(&v);
        assert_eq!(mean, v[0]);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn matches_two_pass() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 1.3).cos()).collect();
        let mean = v.iter().sum::<f64>() / 50.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 49.0;
        let s = MeanSe::from_samples(&v);
        assert!((s.mean - mean).abs() < 1e-14);
        assert!((s.se - (var / 50.0).sqrt()).abs() < 1e-14);
    }
}
