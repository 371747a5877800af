mod common;

use common::connectivity_buckets;
use lsm_core::reservoir::{build, quantize_delay, BuildConfig, PairType, ReservoirTopology};

fn config(seed: u64) -> BuildConfig {
    BuildConfig {
        dims: [6, 6, 6],
        seed,
        ..Default::default()
    }
}

#[test]
fn bucket_frequencies_follow_the_distance_rule() {
    let topologies: Vec<ReservoirTopology> = (0..5).map(|s| build(&config(s)).unwrap()).collect();
    let buckets = connectivity_buckets(&topologies);
    assert!(buckets.iter().any(|b| b.pair == PairType::II));
    for b in &buckets {
        // 4 sigma here: this is a smaller sanity check; the default-grid
        // acceptance run uses 3 sigma
        assert!(b.z().abs() <= 4.0, "{b:?}");
    }
}

#[test]
fn labels_and_fan_in_match_the_table() {
    let topo = build(&BuildConfig::default()).unwrap();
    let s = topo.summary();
    assert_eq!(s.neurons, 1000);
    assert_eq!(s.excitatory, 800);
    assert_eq!(s.primary, 400);
    assert_eq!(s.input_connections, 400 * 51);
    for (&e, &p) in topo.is_excitatory().iter().zip(topo.is_primary()) {
        assert!(!p || e);
    }
}

#[test]
fn weights_follow_source_type_and_delays_follow_distance() {
    let topo = build(&config(3)).unwrap();
    let cfg = topo.config();
    for s in topo.synapses() {
        let src_exc = topo.is_excitatory()[s.source as usize];
        let tgt_exc = topo.is_excitatory()[s.target as usize];
        let expected = match (src_exc, tgt_exc) {
            (true, true) => 3.0,
            (true, false) => 2.0,
            (false, false) => -1.0,
            (false, true) => -4.0,
        } * cfg.w_scale;
        assert_eq!(s.weight, expected);
        let (a, b) = (topo.positions()[s.target as usize], topo.positions()[s.source as usize]);
        let d = (((a[0] - b[0]).pow(2) + (a[1] - b[1]).pow(2) + (a[2] - b[2]).pow(2)) as f64).sqrt();
        assert_eq!(s.delay, (d.round() as u32).max(1));
        assert_eq!(s.delay, quantize_delay(d));
    }
}

#[test]
fn vanishing_lambda_gives_no_liquid_connections() {
    let topo = build(&BuildConfig {
        lambda: 1e-6,
        ..config(1)
    })
    .unwrap();
    assert!(topo.synapses().is_empty());
    assert_eq!(topo.t_max(), 0);
}

#[test]
fn same_seed_same_bytes() {
    let mut a = Vec::new();
    let mut b = Vec::new();
    build(&config(7)).unwrap().write_json(&mut a).unwrap();
    build(&config(7)).unwrap().write_json(&mut b).unwrap();
    assert_eq!(a, b);
    let back = ReservoirTopology::read_json(a.as_slice()).unwrap();
    assert_eq!(back, build(&config(7)).unwrap());
}
