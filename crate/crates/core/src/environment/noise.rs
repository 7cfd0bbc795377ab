use rand_distr::{Distribution, StandardNormal};

use crate::domain::{EncodingOutcome, QualityMetric};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

/// Smallest decoding time a perturbed prediction may report.
const MIN_DEC_TIME_S: f64 = 1e-6;

/// Add zero-mean Gaussian noise with standard deviation `noise_pct * |value|`
/// to quality and decoding time. Bitrate is left untouched.
pub fn perturb_predictions(
    outcome: EncodingOutcome,
    noise_pct: f64,
    metric: QualityMetric,
    rng: &mut Rng,
) -> Result<EncodingOutcome> {
    if !noise_pct.is_finite() || noise_pct < 0.0 {
        return Err(Error::Config(format!("noise level {noise_pct} must be >= 0")));
    }
    if noise_pct == 0.0 {
        return Ok(outcome);
    }
    let zq: f64 = StandardNormal.sample(rng);
    let zt: f64 = StandardNormal.sample(rng);
    let quality = outcome.quality + zq * noise_pct * outcome.quality.abs();
    let dec = outcome.dec_time_s + zt * noise_pct * outcome.dec_time_s.abs();
    Ok(EncodingOutcome {
        quality: metric.clamp(quality),
        dec_time_s: dec.max(MIN_DEC_TIME_S),
        ..outcome
    })
}

/// Seeded noise source; every query draws fresh noise.
#[derive(Debug, Clone)]
pub struct Perturber {
    noise_pct: f64,
    metric: QualityMetric,
    rng: Rng,
}

impl Perturber {
    pub fn new(noise_pct: f64, metric: QualityMetric, seed: u64) -> Result<Self> {
        if !noise_pct.is_finite() || noise_pct < 0.0 {
            return Err(Error::Config(format!("noise level {noise_pct} must be >= 0")));
        }
        Ok(Self {
            noise_pct,
            metric,
            rng: seeded(seed),
        })
    }

    pub fn noise_pct(&self) -> f64 {
        self.noise_pct
    }

    pub fn apply(&mut self, outcome: EncodingOutcome) -> EncodingOutcome {
        perturb_predictions(outcome, self.noise_pct, self.metric, &mut self.rng)
            .expect("noise level validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(q: f64, t: f64) -> EncodingOutcome {
        EncodingOutcome {
            bitrate_kbps: 1234.0,
            quality: q,
            dec_time_s: t,
            enc_time_s: 5.0,
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = seeded(1);
        let o = outcome(40.0, 10.0);
        assert_eq!(perturb_predictions(o, 0.0, QualityMetric::Xpsnr, &mut rng).unwrap(), o);
    }

    #[test]
    fn negative_noise_rejected() {
        let mut rng = seeded(1);
        assert!(perturb_predictions(outcome(40.0, 10.0), -0.1, QualityMetric::Xpsnr, &mut rng).is_err());
        assert!(Perturber::new(-0.1, QualityMetric::Xpsnr, 0).is_err());
    }

    #[test]
    fn monte_carlo_moments_of_dec_time() {
        // Sample moments over 10,000 draws: mean 10 +/- 0.1, std 2 +/- 0.15.
        let mut rng = seeded(2024);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| {
                perturb_predictions(outcome(40.0, 10.0), 0.2, QualityMetric::Xpsnr, &mut rng)
                    .unwrap()
                    .dec_time_s
            })
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 10.0).abs() < 0.1, "mean {mean}");
        assert!((var.sqrt() - 2.0).abs() < 0.15, "std {}", var.sqrt());
    }

    #[test]
    fn vmaf_clamped_and_bitrate_untouched() {
        let mut p = Perturber::new(0.2, QualityMetric::Vmaf, 7).unwrap();
        for _ in 0..10_000 {
            let o = p.apply(outcome(99.0, 0.5));
            assert!(o.quality <= 100.0 && o.quality >= 0.0);
            assert!(o.dec_time_s > 0.0);
            assert_eq!(o.bitrate_kbps, 1234.0);
            assert_eq!(o.enc_time_s, 5.0);
        }
    }
}
