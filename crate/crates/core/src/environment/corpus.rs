use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};

use super::{MeasurementLog, Surrogate, SurrogateParams};
use crate::domain::{ConfigSpace, SegmentFeatures};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

const FEATURE_STREAM: u64 = 0xFEA7;
const SURROGATE_STREAM: u64 = 0x5A11;

/// Draw `n_segments` feature triples and materialise the full outcome grid
/// through the default surrogate.
pub fn generate_synthetic_corpus(n_segments: usize, seed: u64) -> Result<(Vec<SegmentFeatures>, MeasurementLog)> {
    generate_synthetic_corpus_with(n_segments, seed, &ConfigSpace::default(), SurrogateParams::default())
}

pub fn generate_synthetic_corpus_with(
    n_segments: usize,
    seed: u64,
    space: &ConfigSpace,
    params: SurrogateParams,
) -> Result<(Vec<SegmentFeatures>, MeasurementLog)> {
    if n_segments == 0 {
        return Err(Error::Config("corpus needs at least one segment".into()));
    }
    let mut rng = stream(seed, FEATURE_STREAM);
    // Texture and motion are heavy-tailed; a quarter of segments are drawn
    // from a high-motion component so both corners of the (e_y, h) plane are
    // populated.
    let texture = LogNormal::new(45f64.ln(), 0.6).expect("valid lognormal");
    let calm = LogNormal::new(8f64.ln(), 0.7).expect("valid lognormal");
    let busy = LogNormal::new(40f64.ln(), 0.45).expect("valid lognormal");
    let brightness = Normal::new(105.0, 28.0).expect("valid normal");
    let width = n_segments.to_string().len().max(3);
    let features: Vec<SegmentFeatures> = (0..n_segments)
        .map(|i| {
            let e_y: f64 = texture.sample(&mut rng);
            let h: f64 = if rng.random_bool(0.25) {
                busy.sample(&mut rng)
            } else {
                calm.sample(&mut rng)
            };
            let l_y: f64 = brightness.sample(&mut rng);
            SegmentFeatures::new(
                format!("seg{i:0width$}"),
                round3(e_y.clamp(5.0, 200.0)),
                round3(h.clamp(0.5, 120.0)),
                round3(l_y.clamp(16.0, 235.0)),
            )
        })
        .collect::<Result<_>>()?;
    let surrogate = Surrogate::new(SurrogateParams {
        noise_seed: derive_seed(seed, SURROGATE_STREAM),
        ..params
    })?;
    let log = MeasurementLog::from_environment(space.clone(), features.clone(), &surrogate)?;
    Ok((features, log))
}

/// Features are stored with three decimals, as an analyser would report them.
fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_segment_has_full_grid() {
        let (f, log) = generate_synthetic_corpus(1, 3).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(log.len(), 6 * 41);
        assert_eq!(log.len(), 246);
    }

    #[test]
    fn twenty_segments_have_4920_rows() {
        let (_, log) = generate_synthetic_corpus(20, 11).unwrap();
        assert_eq!(log.measurement_rows().len(), 4920);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (_, a) = generate_synthetic_corpus(4, 9).unwrap();
        let (_, b) = generate_synthetic_corpus(4, 9).unwrap();
        assert_eq!(a.features_csv().unwrap(), b.features_csv().unwrap());
        assert_eq!(a.measurements_csv().unwrap(), b.measurements_csv().unwrap());
        let (_, c) = generate_synthetic_corpus(4, 10).unwrap();
        assert_ne!(a.features_csv().unwrap(), c.features_csv().unwrap());
    }

    #[test]
    fn zero_segments_rejected() {
        assert!(generate_synthetic_corpus(0, 1).is_err());
    }

    #[test]
    fn every_target_is_reachable() {
        let (features, log) = generate_synthetic_corpus(200, 5).unwrap();
        let space = ConfigSpace::default();
        for seg in &features {
            let grid = log.grid(&seg.segment_id).unwrap();
            let min_rate = grid.iter().map(|p| p.bitrate_kbps).fold(f64::INFINITY, f64::min);
            for &tb in space.target_bitrates() {
                assert!(min_rate <= tb, "{} cannot reach {tb}", seg.segment_id);
            }
        }
    }

    #[test]
    fn features_span_low_and_high_complexity() {
        let (features, _) = generate_synthetic_corpus(200, 5).unwrap();
        let lo_h = features.iter().filter(|f| f.h < 10.0).count();
        let hi_h = features.iter().filter(|f| f.h > 30.0).count();
        let lo_e = features.iter().filter(|f| f.e_y < 30.0).count();
        let hi_e = features.iter().filter(|f| f.e_y > 80.0).count();
        assert!(lo_h > 20 && hi_h > 20 && lo_e > 20 && hi_e > 20);
    }
}
