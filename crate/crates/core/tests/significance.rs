#[path = "common/oracles.rs"]
mod oracles;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sysrank::metrics::{self, MetricId};
use sysrank::significance::{art_test, cluster_systems, ArtConfig};

const VOCAB: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn sentence(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn corpus(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| sentence(rng, 8)).collect()
}

#[test]
fn sampled_p_tracks_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let config = ArtConfig::default();
    for instance in 0..12 {
        let n = rng.random_range(4..=10);
        let refs = corpus(&mut rng, n);
        let a = corpus(&mut rng, n);
        let b = corpus(&mut rng, n);
        let metric = [MetricId::Wer, MetricId::Ter, MetricId::Bwer, MetricId::Chrf][instance % 4];
        let ra = metric.score(&a, &refs).unwrap();
        let rb = metric.score(&b, &refs).unwrap();
        let exact = oracles::exact_art_p(&ra.segment_stats, &rb.segment_stats, metric);
        let sampled = art_test(&ra.segment_stats, &rb.segment_stats, metric, &config).unwrap();
        assert!((sampled - exact).abs() <= 0.02, "{metric} n={n}: sampled {sampled}, exact {exact}");
    }
}

#[test]
fn bleu_instance_against_enumeration() {
    let refs = ["the cat sat on the mat", "a dog barked at the moon", "birds fly south in winter", "she reads a book every night", "we met at the old station", "rain fell all day long"];
    let a = ["the cat sat on a mat", "a dog barked at the moon", "birds fly south for winter", "she reads books every night", "we met at the station", "rain fell all the day"];
    let b = ["a cat is on the mat", "the dog barks at moon", "birds go south in winter", "she read a book at night", "we met in the old station", "rain fell all day"];
    let ra = metrics::bleu(&a, &refs).unwrap();
    let rb = metrics::bleu(&b, &refs).unwrap();
    let exact = oracles::exact_art_p(&ra.segment_stats, &rb.segment_stats, MetricId::Bleu);
    let sampled = art_test(&ra.segment_stats, &rb.segment_stats, MetricId::Bleu, &ArtConfig::default()).unwrap();
    assert!((sampled - exact).abs() <= 0.02, "sampled {sampled}, exact {exact}");
}

#[test]
fn dominant_system_gets_its_own_cluster() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let refs: Vec<String> = (0..50).map(|_| sentence(&mut rng, 8)).collect();
    let perfect = refs.clone();
    let noisy = |rng: &mut ChaCha8Rng| -> Vec<String> {
        refs.iter().map(|r| format!("{r} {}", sentence(rng, 3))).collect()
    };
    let n1 = noisy(&mut rng);
    let n2 = noisy(&mut rng);
    let reports = [
        metrics::wer(&n1, &refs).unwrap().named("noisy-1"),
        metrics::wer(&perfect, &refs).unwrap().named("best"),
        metrics::wer(&n2, &refs).unwrap().named("noisy-2"),
    ];
    let r = cluster_systems(&reports, MetricId::Wer, &ArtConfig::default()).unwrap();
    assert_eq!(r.clusters[0], vec!["best".to_string()]);
    assert!(r.p_values[0] < 0.05);
}

#[test]
fn duplicates_share_a_cluster_and_partitions_are_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let refs = corpus(&mut rng, 20);
        let hyps: Vec<Vec<String>> = (0..3).map(|_| corpus(&mut rng, 20)).collect();
        let mut reports: Vec<_> = hyps
            .iter()
            .enumerate()
            .map(|(i, h)| metrics::chrf(h, &refs).unwrap().named(format!("sys{i}")))
            .collect();
        reports.push(reports[1].clone().named("sys1-copy"));
        let cfg = ArtConfig { trials: 2000, ..Default::default() };
        let r1 = cluster_systems(&reports, MetricId::Chrf, &cfg).unwrap();
        let r2 = cluster_systems(&reports, MetricId::Chrf, &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.rank_of("sys1"), r1.rank_of("sys1-copy"));
    }
}
