use ladderq_core::environment::generate_synthetic_corpus;
use ladderq_core::experiment::train_agent;
use ladderq_core::ladder::PenaltyPolicy;
use ladderq_core::qnet::{select_action, DqnConfig, Mlp};
use ladderq_core::rng::seeded;
use ladderq_core::{QualityMetric, RewardWeights};

#[test]
fn full_exploration_is_uniform_over_the_mask() {
    let net = Mlp::new(&[4, 8, 20], &mut seeded(1)).unwrap();
    let allowed: Vec<usize> = (0..20).filter(|a| a % 3 != 0).collect();
    let draws = 100_000;
    let mut counts = [0usize; 20];
    let mut rng = seeded(2);
    for _ in 0..draws {
        counts[select_action(&net, &[0.3, 0.6, 0.1, 0.9], 1.0, &allowed, &mut rng).unwrap()] += 1;
    }
    let k = allowed.len() as f64;
    let expected = draws as f64 / k;
    let sigma = (draws as f64 * (1.0 / k) * (1.0 - 1.0 / k)).sqrt();
    for (a, &c) in counts.iter().enumerate() {
        if allowed.contains(&a) {
            assert!(
                (c as f64 - expected).abs() < 3.0 * sigma,
                "action {a}: {c} vs {expected}"
            );
        } else {
            assert_eq!(c, 0, "masked action {a} drawn");
        }
    }
    let chi2: f64 = allowed
        .iter()
        .map(|&a| (counts[a] as f64 - expected).powi(2) / expected)
        .sum();
    // 99.9th percentile of chi-square with 12 degrees of freedom.
    assert!(chi2 < 32.91, "chi-square {chi2}");
}

#[test]
fn quality_weight_dominates_final_quality_term() {
    let (_, log) = generate_synthetic_corpus(3, 2).unwrap();
    let cfg = DqnConfig {
        episodes: 40,
        batch_size: 32,
        hidden_layers: vec![32, 16],
        ..Default::default()
    };
    let last_decile = |w: RewardWeights| {
        let out = train_agent(&log, QualityMetric::Xpsnr, w, PenaltyPolicy::Fixed, &cfg, 2).unwrap();
        let tail = &out.trace[out.trace.len() - cfg.episodes / 10..];
        tail.iter().map(|s| s.quality_term).sum::<f64>() / tail.len() as f64
    };
    let quality = last_decile(RewardWeights::new(1.0, 0.0, 0.0));
    let time = last_decile(RewardWeights::new(0.0, 1.0, 0.0));
    assert!(quality >= time, "{quality} < {time}");
    assert!(quality > 0.0);
}
