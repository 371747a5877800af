use lsm_core::spike::{encode, encode_with_rng, rate_summary, EncoderConfig, RateScale, SpikeTrain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn spike_count_mean_matches_rate_times_window() {
    let cfg = EncoderConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let runs = 10_000;
    let counts: Vec<f64> = (0..runs)
        .map(|_| encode_with_rng(&[0.2], &cfg, &mut rng).unwrap().spike_count() as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / runs as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    // binomial(50, 0.2): mean 10, variance 8
    let se = (50.0 * 0.2 * 0.8 / runs as f64).sqrt();
    assert!((mean - 10.0).abs() <= 3.0 * se, "mean {mean}");
    assert!((mean - 10.0).abs() < 0.1);
    assert!((var - 8.0).abs() < 0.5, "variance {var}");
}

#[test]
fn extreme_rates_are_deterministic() {
    let cfg = EncoderConfig::default();
    let t = encode(&[0.0, 1.0], &cfg).unwrap();
    assert_eq!(rate_summary(&t).unwrap(), vec![0.0, 1.0]);
}

#[test]
fn linear_scale_clamps() {
    let cfg = EncoderConfig {
        rate_scale: RateScale::Linear { gain: 4.0 },
        ..Default::default()
    };
    let t = encode(&[0.5], &cfg).unwrap();
    assert_eq!(t.spike_count(), cfg.window);
}

#[test]
fn rejects_out_of_range_features() {
    let cfg = EncoderConfig::default();
    assert!(encode(&[1.5], &cfg).is_err());
    assert!(encode(&[f64::NAN], &cfg).is_err());
}

#[test]
fn same_seed_same_train() {
    let cfg = EncoderConfig { seed: 9, ..Default::default() };
    let f: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
    assert_eq!(encode(&f, &cfg).unwrap(), encode(&f, &cfg).unwrap());
}

#[test]
fn binary_and_csv_round_trip_random_rasters() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (n, t) = (rng.gen_range(1..30), rng.gen_range(1..70));
        let data = ndarray::Array2::from_shape_simple_fn((n, t), || rng.gen_bool(0.3) as u8);
        let train = SpikeTrain::from_array(data).unwrap();
        let mut bin = Vec::new();
        train.write_binary(&mut bin).unwrap();
        assert_eq!(SpikeTrain::read_binary(bin.as_slice()).unwrap(), train);
        let mut csv = Vec::new();
        train.write_csv(&mut csv).unwrap();
        assert_eq!(SpikeTrain::read_csv(csv.as_slice()).unwrap(), train);
    }
}
