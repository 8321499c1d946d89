use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wmlab::codebook::{CodebookSpec, Codebook};
use wmlab::tokens::TokenMap;
use wmlab::vae::{lookup, nearest_tokens, quantize, EncoderKind, EncoderProfile};
use wmlab::{Image, Latent};

fn codebook() -> Codebook {
    CodebookSpec::new(256, 4, 17).build().unwrap()
}

fn profile(kind: EncoderKind, seed: u64) -> EncoderProfile {
    EncoderProfile::new(kind, 4, 4, seed, codebook()).unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Image {
    Image::from_fn(h, w, |_, _, _| rng.random_range(0.05..0.95))
}

fn random_latent(rng: &mut ChaCha8Rng, d: usize, h: usize, w: usize) -> Latent {
    Latent::new(d, h, w, (0..d * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Central-difference gradient of `x ↦ ⟨encode(x), g⟩` against the pullback.
fn gradient_error(p: &EncoderProfile, x: &Image, g: &Latent) -> f64 {
    let analytic = p.encode_pullback(x, g).unwrap();
    let f = |img: &Image| p.encode(img).unwrap().dot(g).unwrap();
    let h = 1e-4;
    let mut worst = 0.0f64;
    let scale = analytic.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..x.data().len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
        worst = worst.max((numeric - analytic.data()[i]).abs() / scale);
    }
    worst
}

#[test]
fn pullback_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in [EncoderKind::LinearOrthonormal, EncoderKind::Nonlinear] {
        let p = profile(kind, 9);
        for _ in 0..20 {
            let x = random_image(&mut rng, 8, 8);
            let g = random_latent(&mut rng, 4, 2, 2);
            let err = gradient_error(&p, &x, &g);
            assert!(err < 1e-4, "{kind:?}: relative error {err}");
        }
    }
}

#[test]
fn token_round_trip_through_pixels() {
    let cb = codebook();
    let p = EncoderProfile::new(EncoderKind::LinearOrthonormal, 8, 4, 3, cb.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..100 {
        let t = TokenMap::new(6, 5, 256, (0..30).map(|_| rng.random_range(0..256)).collect()).unwrap();
        let z = lookup(&t, &cb).unwrap();
        let raw = p.decode_unclamped(&z).unwrap();
        if !raw.is_valid() {
            continue;
        }
        checked += 1;
        let back = quantize(&p.encode(&p.decode(&z).unwrap()).unwrap(), &cb).unwrap();
        assert_eq!(back.tokens, t);
    }
    assert_eq!(checked, 100, "codebook radius keeps every decode clamp-free");
}

#[test]
fn quantize_agrees_with_brute_force() {
    let cb = codebook();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = Latent::new(4, 25, 40, (0..4000).map(|_| rng.random_range(-0.2..0.2)).collect()).unwrap();
    let q = quantize(&z, &cb).unwrap();
    for cell in 0..1000 {
        let v = z.cell(cell / 40, cell % 40);
        let dists: Vec<f64> = (0..256)
            .map(|k| cb.vector(k).iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        let mut best = 0;
        for k in 1..256 {
            if dists[k] < dists[best] {
                best = k;
            }
        }
        assert_eq!(q.tokens.indices()[cell] as usize, best);
        let r = q.cell_ranking(cell);
        assert!(r.windows(2).all(|w| dists[w[0] as usize] <= dists[w[1] as usize]));
    }
    assert_eq!(nearest_tokens(&z, &cb).unwrap(), q.tokens);
}

#[test]
fn codebook_exact_latents_quantize_to_their_index() {
    let cb = codebook();
    let z = lookup(&TokenMap::new(2, 2, 256, vec![7; 4]).unwrap(), &cb).unwrap();
    let q = quantize(&z, &cb).unwrap();
    assert!(q.tokens.indices().iter().all(|&t| t == 7));
    assert_eq!(lookup(&q.tokens, &cb).unwrap(), z);
}

#[test]
fn outputs_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_image(&mut rng, 8, 12);
    for kind in [EncoderKind::LinearOrthonormal, EncoderKind::Nonlinear] {
        let a = profile(kind, 5).encode(&x).unwrap();
        let b = profile(kind, 5).encode(&x).unwrap();
        assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn profiles_survive_json_exactly() {
    let p = profile(EncoderKind::LinearOrthonormal, 12);
    let q = EncoderProfile::from_json(&p.to_json().unwrap()).unwrap();
    assert_eq!(p, q);
    assert_eq!(p.codebook(), q.codebook());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantize_inverts_lookup(idx in proptest::collection::vec(0u32..256, 12)) {
        let cb = codebook();
        let t = TokenMap::new(3, 4, 256, idx).unwrap();
        prop_assert_eq!(quantize(&lookup(&t, &cb).unwrap(), &cb).unwrap().tokens, t);
    }

    #[test]
    fn linear_encode_inverts_decode(vals in proptest::collection::vec(-0.1f64..0.1, 16)) {
        let p = profile(EncoderKind::LinearOrthonormal, 2);
        let z = Latent::new(4, 2, 2, vals).unwrap();
        let back = p.encode(&p.decode_unclamped(&z).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(z.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
