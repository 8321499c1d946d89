use wmlab::attacks::vq_regen;
use wmlab::codebook::{Codebook, CodebookSpec};
use wmlab::hash::WatermarkKey;
use wmlab::schemes::indexmark::indexmark_counts;
use wmlab::schemes::kgw::{embed_kgw_traced, kgw_green_sets};
use wmlab::schemes::*;
use wmlab::tokens::TokenMap;
use wmlab::vae::{lookup, quantize, EncoderKind, EncoderProfile};

fn key() -> WatermarkKey {
    WatermarkKey::new(0xBEEF, 1)
}

#[test]
fn first_token_frequencies_match_softmax() {
    let m = ToyARModel::new(21, 16, 1.0).unwrap();
    let probs = m.probabilities(16);
    let n = 100_000u64;
    let mut counts = [0u64; 16];
    for s in 0..n {
        counts[m.sample_with(1, s, |_, _| {})[0] as usize] += 1;
    }
    for (k, &c) in counts.iter().enumerate() {
        let p = probs[k];
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "token {k}: {c} vs {}", n as f64 * p);
    }
}

#[test]
fn uniform_model_green_fraction_matches_closed_form() {
    let m = ToyARModel::uniform(256).unwrap();
    let (gamma, delta) = (0.25f64, 2.0f64);
    let expected = gamma * delta.exp() / (gamma * delta.exp() + 1.0 - gamma);
    let mut green = 0;
    let mut trials = 0;
    for s in 0..40 {
        let t = embed_kgw(&m, &KgwParams::new(key(), gamma, delta), 16, 16, s).unwrap();
        let r = detect_kgw(&t, &key(), gamma).unwrap();
        green += r.green;
        trials += r.trials;
    }
    assert!(trials >= 10_000);
    let frac = green as f64 / trials as f64;
    assert!((frac - expected).abs() < 0.02, "{frac} vs {expected}");
    assert!((expected - 0.711).abs() < 1e-3);
}

#[test]
fn green_count_grows_with_delta() {
    let m = ToyARModel::new(3, 64, 1.0).unwrap();
    let mut last = 0u64;
    for delta in [0.0, 1.0, 2.0, 4.0] {
        let total: u64 = (0..200)
            .map(|s| {
                let t = embed_kgw(&m, &KgwParams::new(key(), 0.25, delta), 8, 8, s).unwrap();
                detect_kgw(&t, &key(), 0.25).unwrap().green
            })
            .sum();
        assert!(total >= last, "delta {delta}");
        last = total;
    }
}

#[test]
fn detector_recomputes_the_embedding_sets() {
    let m = ToyARModel::new(5, 128, 1.0).unwrap();
    for l in [1, 2, 4] {
        let k = WatermarkKey::new(99, l);
        let (t, used) = embed_kgw_traced(&m, &KgwParams::new(k, 0.25, 2.0), 8, 8, 1).unwrap();
        assert_eq!(kgw_green_sets(&t, &k, 0.25).unwrap(), used);
    }
}

#[test]
fn watermarked_maps_detect_strongly() {
    let m = ToyARModel::new(11, 256, 1.0).unwrap();
    let mut ps: Vec<f64> = (0..51)
        .map(|s| {
            let t = embed_kgw(&m, &KgwParams::new(key(), 0.25, 2.0), 16, 16, s).unwrap();
            detect_kgw(&t, &key(), 0.25).unwrap().p
        })
        .collect();
    ps.sort_by(f64::total_cmp);
    assert!(ps[25] < 1e-6);
}

#[test]
fn wrong_key_is_calibrated() {
    let m = ToyARModel::new(11, 256, 1.0).unwrap();
    let other = WatermarkKey::new(0xF00D, 1);
    let n = 2_000;
    let hits = (0..n)
        .filter(|&s| {
            let t = embed_kgw(&m, &KgwParams::new(key(), 0.25, 2.0), 16, 16, s).unwrap();
            detect_kgw(&t, &other, 0.25).unwrap().p < 0.01
        })
        .count();
    let rate = hits as f64 / n as f64;
    assert!((0.002..=0.025).contains(&rate), "{rate}");
}

#[test]
fn greedy_pairing_is_optimal_on_collinear_codes() {
    let cb = Codebook::new(1, vec![0.0, 0.1, 10.0, 10.1]).unwrap();
    let p = build_pairing(&cb, 1);
    let cost = |pairs: &[(u32, u32)]| -> f64 {
        pairs.iter().map(|&(a, b)| (cb.vector(a as usize)[0] - cb.vector(b as usize)[0]).abs()).sum()
    };
    let all = [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]];
    let best = all.iter().map(|m| cost(m)).fold(f64::INFINITY, f64::min);
    assert!((cost(p.pairs()) - best).abs() < 1e-12);
}

#[test]
fn pairing_partitions_the_vocabulary() {
    for size in [2usize, 9, 64] {
        let cb = CodebookSpec::new(size, 3, size as u64).build().unwrap();
        let p = build_pairing(&cb, 4);
        let mut seen: Vec<u32> = p.pairs().iter().flat_map(|&(a, b)| [a, b]).chain(p.leftover()).collect();
        seen.sort();
        assert_eq!(seen, (0..size as u32).collect::<Vec<_>>());
    }
}

#[test]
fn indexmark_random_tokens_sit_near_half() {
    let cb = CodebookSpec::new(256, 4, 3).twinned().build().unwrap();
    let p = build_pairing(&cb, 7);
    let (mut g, mut t) = (0, 0);
    for s in 0..50 {
        let (trials, hits) = indexmark_counts(&random_tokens(16, 16, 256, s).unwrap(), &p).unwrap();
        g += hits;
        t += trials;
    }
    assert!((g as f64 / t as f64 - 0.5).abs() < 0.02);
}

#[test]
fn second_nearest_regeneration_flips_every_pair() {
    let cb = CodebookSpec::new(256, 4, 3).twinned().build().unwrap();
    let pairing = build_pairing(&cb, 7);
    let prof = EncoderProfile::new(EncoderKind::LinearOrthonormal, 8, 4, 5, cb.clone()).unwrap();
    for s in 0..10 {
        let t = embed_indexmark(&random_tokens(16, 16, 256, s).unwrap(), &pairing).unwrap();
        let img = prof.decode(&lookup(&t, &cb).unwrap()).unwrap();
        let attacked = vq_regen(&img, &prof, 2).unwrap();
        let back = quantize(&prof.encode(&attacked).unwrap(), &cb).unwrap().tokens;
        let r = detect_indexmark(&back, &pairing).unwrap();
        assert_eq!(r.green, 0);
        assert_eq!(r.trials, 256);
    }
}

#[test]
fn clustermark_with_singletons_is_relabelled_kgw() {
    let cb = CodebookSpec::new(64, 3, 8).build().unwrap();
    let cl = cluster_codebook(&cb, 64, 2).unwrap();
    let m = ToyARModel::new(4, 64, 1.0).unwrap();
    for s in 0..20 {
        let t = sample_tokens(&m, 8, 8, s).unwrap();
        let relabelled = TokenMap::new(8, 8, 64, t.indices().iter().map(|&x| cl.label(x)).collect()).unwrap();
        assert_eq!(
            detect_clustermark(&t, &cl, &key(), 0.25).unwrap(),
            detect_kgw(&relabelled, &key(), 0.25).unwrap()
        );
    }
}

#[test]
fn same_cluster_substitution_keeps_the_count() {
    let cb = CodebookSpec::new(256, 4, 5).build().unwrap();
    let cl = cluster_codebook(&cb, 64, 1).unwrap();
    let m = ToyARModel::new(11, 256, 1.0).unwrap();
    let params = KgwParams::new(key(), 0.25, 5.0);
    for s in 0..20 {
        let t = embed_clustermark(&m, &cl, &params, 16, 16, s).unwrap();
        let before = detect_clustermark(&t, &cl, &key(), 0.25).unwrap();
        let swapped: Vec<u32> = t
            .indices()
            .iter()
            .map(|&x| *cl.members(cl.label(x)).last().unwrap())
            .collect();
        let after = detect_clustermark(&t.with_indices(swapped).unwrap(), &cl, &key(), 0.25).unwrap();
        assert_eq!(before, after);
    }
}

#[test]
fn clustermark_detects_at_default_strength() {
    let cb = CodebookSpec::new(256, 4, 5).build().unwrap();
    let cl = cluster_codebook(&cb, 64, 1).unwrap();
    let m = ToyARModel::new(11, 256, 1.0).unwrap();
    let mut ps: Vec<f64> = (0..51)
        .map(|s| {
            let t = embed_clustermark(&m, &cl, &KgwParams::new(key(), 0.25, 5.0), 16, 16, s).unwrap();
            detect_clustermark(&t, &cl, &key(), 0.25).unwrap().p
        })
        .collect();
    ps.sort_by(f64::total_cmp);
    assert!(ps[25] < 1e-6);
}
