use gric_core::codec::*;
use gric_core::fixtures::{random_image, textured_image};
use gric_core::rng::Lcg64;
use gric_core::{Error, Tensor};

fn weights(m: usize, seed: u64) -> ModelWeights {
    ModelWeights::generate(ModelConfig::new(ModelDims::with_latent_channels(m)), seed, WeightInit::FanIn(2.0))
}

fn zero_biases(w: &mut ModelWeights) {
    for (name, t) in w.tensors.iter_mut() {
        if name.ends_with(".bias") || name.ends_with(".nu") {
            t.data_mut().fill(0.0);
        }
    }
}

fn random_latents(rng: &mut Lcg64, c: usize, h: usize, w: usize) -> LatentGrid {
    LatentGrid::new(c, h, w, (0..c * h * w).map(|_| rng.below(9) as i32 - 4).collect()).unwrap()
}

#[test]
fn geometry_for_multiples_of_sixteen() {
    let codec = Codec::new(&weights(8, 1)).unwrap();
    for (h, w) in [(16, 16), (32, 48), (64, 64), (96, 80)] {
        let y = codec.analyze(&random_image(2, h, w)).unwrap();
        assert_eq!(y.shape(), &[8, h / 16, w / 16]);
        let yhat = quantize(&y).unwrap();
        let z = codec.hyper_analyze(&yhat).unwrap();
        assert_eq!(z.shape(), &[4, (h / 16).div_ceil(4), (w / 16).div_ceil(4)]);
        let zhat = quantize(&z).unwrap();
        let psi = codec.hyper_synthesize(&zhat, h / 16, w / 16).unwrap();
        assert_eq!(psi.shape(), &[16, h / 16, w / 16]);
        assert_eq!(codec.synthesize(&yhat).unwrap().shape(), &[3, h, w]);
    }
    assert!(matches!(codec.analyze(&random_image(2, 20, 32)), Err(Error::Config { .. })));
}

#[test]
fn zero_propagation() {
    let mut w = weights(8, 3);
    zero_biases(&mut w);
    let codec = Codec::new(&w).unwrap();
    let y = codec.analyze(&Tensor::zeros(&[3, 32, 32])).unwrap();
    assert!(y.data().iter().all(|v| *v == 0.0));
    let x = codec.synthesize(&LatentGrid::zeros(8, 2, 2)).unwrap();
    assert!(x.data().iter().all(|v| *v == 0.0));
    let z = codec.hyper_analyze(&LatentGrid::zeros(8, 2, 2)).unwrap();
    assert!(z.data().iter().all(|v| *v == 0.0));

    let trace = codec.trace(&LatentGrid::zeros(8, 3, 3), None, EntropyMode::ContextReference).unwrap();
    let softplus0 = core::f32::consts::LN_2;
    for p in &trace.positions {
        assert!(p.stages[0].mu.iter().all(|v| *v == 0.0));
        assert!(p.stages[0].sigma.iter().all(|v| (v - softplus0).abs() < 1e-6));
        assert_eq!(p.reference.unwrap().source, None);
    }
}

#[test]
fn gating_annihilation_matches_zero_reference_forward() {
    let codec = Codec::new(&weights(8, 4)).unwrap();
    let mut rng = Lcg64::new(5);
    for latents in [LatentGrid::zeros(8, 3, 4), random_latents(&mut rng, 8, 3, 4)] {
        let trace = codec.trace(&latents, None, EntropyMode::ContextReference).unwrap();
        let mut checked = 0;
        for p in &trace.positions {
            let m = p.reference.unwrap();
            if m.source.is_some() && m.similarity * m.confidence != 0.0 {
                continue;
            }
            let s1 = &p.stages[0];
            let input: Vec<f32> = vec![0.0; 8].into_iter().chain(s1.mu.clone()).chain(s1.sigma.clone()).collect();
            assert_eq!(codec.stage_params(2, &input).unwrap(), p.stages[1]);
            checked += 1;
        }
        assert!(checked >= 1);
    }
    assert!(codec.stage_params(2, &[0.0; 5]).is_err());
    assert!(codec.stage_params(4, &[0.0; 24]).is_err());
}

#[test]
fn modes_are_prefixes_of_the_full_pipeline() {
    let codec = Codec::new(&weights(8, 6)).unwrap();
    let img = textured_image(7, 64, 48);
    let yhat = quantize(&codec.analyze(&img).unwrap()).unwrap();
    let zhat = quantize(&codec.hyper_analyze(&yhat).unwrap()).unwrap();
    let psi = codec.hyper_synthesize(&zhat, 4, 3).unwrap();
    let full = codec.trace(&yhat, Some(&psi), EntropyMode::Full).unwrap();
    let cr = codec.trace(&yhat, None, EntropyMode::ContextReference).unwrap();
    let co = codec.trace(&yhat, None, EntropyMode::ContextOnly).unwrap();
    for i in 0..12 {
        assert_eq!(full.positions[i].stages.len(), 3);
        assert_eq!(co.positions[i].stages[..], full.positions[i].stages[..1]);
        assert_eq!(cr.positions[i].stages[..], full.positions[i].stages[..2]);
        assert_eq!(cr.positions[i].reference, full.positions[i].reference);
    }
    assert!(codec.trace(&yhat, None, EntropyMode::Full).is_err());
}

#[test]
fn parameters_never_depend_on_later_latents() {
    let codec = Codec::new(&weights(8, 8)).unwrap();
    let mut rng = Lcg64::new(9);
    let (h, w) = (4, 5);
    for _ in 0..5 {
        let base = random_latents(&mut rng, 8, h, w);
        let psi = Tensor::from_fn(&[16, h, w], |_| rng.symmetric(2.0));
        let reference = codec.trace(&base, Some(&psi), EntropyMode::Full).unwrap();
        for i in 0..h * w {
            let mut changed = base.clone();
            for p in i..h * w {
                let symbols: Vec<i32> = (0..8).map(|_| rng.below(21) as i32 - 10).collect();
                changed.set_position(p, &symbols);
            }
            let trace = codec.trace(&changed, Some(&psi), EntropyMode::Full).unwrap();
            for p in 0..=i {
                assert_eq!(trace.positions[p], reference.positions[p], "position {p} after change at {i}");
            }
        }
    }
}

#[test]
fn round_trip_all_modes_and_sizes() {
    let codec = Codec::new(&weights(8, 10)).unwrap();
    for (k, (h, w)) in [(32, 32), (48, 48), (64, 64), (96, 96), (33, 47), (17, 80)].into_iter().enumerate() {
        let img = if k % 2 == 0 { random_image(k as u64, h, w) } else { textured_image(k as u64, h, w) };
        for mode in EntropyMode::ALL {
            let enc = codec.encode(&img, mode).unwrap();
            let dec = codec.decode(&enc.bitstream).unwrap();
            assert_eq!(dec.latents, enc.latents);
            assert_eq!(dec.hyper_latents, enc.hyper_latents);
            assert_eq!(dec.trace, enc.trace);
            assert_eq!(dec.image.shape(), &[3, h, w]);
            let direct = codec.synthesize(&enc.latents).unwrap().crop(h, w).unwrap();
            assert_eq!(dec.image, direct);
            assert_eq!(!mode.uses_hyperprior(), enc.bitstream.hyper.is_empty());
        }
    }
}

#[test]
fn coded_parameters_agree_between_encoder_and_decoder() {
    let codec = Codec::new(&weights(8, 11)).unwrap();
    let img = textured_image(12, 48, 64);
    let table = gric_core::probability::ScaleTable::default();
    for mode in EntropyMode::ALL {
        let enc = codec.encode(&img, mode).unwrap();
        let dec = codec.decode(&enc.bitstream).unwrap();
        let a = enc.trace.coded_params(&table);
        assert_eq!(a.len(), 8 * 12);
        assert_eq!(a, dec.trace.coded_params(&table));
    }
}

#[test]
fn prefix_decode_matches_full_decode() {
    let codec = Codec::new(&weights(8, 13)).unwrap();
    for seed in 0..3 {
        let img = random_image(100 + seed, 48, 48);
        let full = codec.encode(&img, EntropyMode::Full).unwrap();
        for n in [0, 1, 4, 8] {
            let part = codec.encode_prefix(&img, EntropyMode::Full, n).unwrap();
            let (latents, trace) = codec.decode_prefix(&part.bitstream, n).unwrap();
            assert_eq!(trace.positions[..], full.trace.positions[..n]);
            for p in 0..n {
                assert_eq!(latents.position(p), full.latents.position(p));
            }
        }
    }
}

#[test]
fn decode_rejects_foreign_or_inconsistent_streams() {
    let w = weights(8, 14);
    let codec = Codec::new(&w).unwrap();
    let img = random_image(15, 32, 32);
    let enc = codec.encode(&img, EntropyMode::Full).unwrap();

    let mut other = w.clone();
    other.hash = [7; 32];
    assert_eq!(Codec::new(&other).unwrap().decode(&enc.bitstream).unwrap_err(), Error::HashMismatch);

    let mut bs = enc.bitstream.clone();
    bs.latent.truncate(bs.latent.len() - 1);
    assert!(codec.decode(&bs).is_err());

    let mut bs = enc.bitstream.clone();
    bs.latent.push(0);
    assert!(codec.decode(&bs).is_err());

    let mut bs = enc.bitstream.clone();
    bs.padded_width = 48;
    assert!(codec.decode(&bs).is_err());

    let mut bs = codec.encode(&img, EntropyMode::ContextOnly).unwrap().bitstream;
    bs.hyper = vec![1, 2, 3, 4];
    assert!(codec.decode(&bs).is_err());
}

#[test]
fn rejects_oversize_and_malformed_images() {
    let codec = Codec::new(&weights(4, 16)).unwrap();
    assert_eq!(
        codec.encode(&Tensor::zeros(&[3, 1, 65537]), EntropyMode::ContextOnly).unwrap_err(),
        Error::ImageSize(65537)
    );
    assert!(codec.encode(&Tensor::zeros(&[1, 16, 16]), EntropyMode::Full).is_err());
}

#[test]
fn rate_estimate_sums_and_rd_examples() {
    let codec = Codec::new(&weights(8, 17)).unwrap();
    let img = textured_image(18, 64, 64);
    for mode in EntropyMode::ALL {
        let r = codec.estimate_rate(&img, mode).unwrap();
        assert_eq!(r.position_bits.len(), 16);
        assert_eq!(r.stage_bits.len(), mode.stages());
        let sum: f64 = r.position_bits.iter().sum();
        assert!((sum - r.latent_bits).abs() < 1e-9);
        assert_eq!(!mode.uses_hyperprior(), r.hyper_bits == 0.0);
        assert!((r.bpp - r.total_bits / 4096.0).abs() < 1e-12);
    }
    let rd = codec.rd_loss(&img, 0.0, EntropyMode::Full).unwrap();
    assert_eq!(rd.loss, rd.bpp);
    let rd2 = codec.rd_loss(&img, 100.0, EntropyMode::Full).unwrap();
    assert_eq!(rd2.bpp, rd.bpp);
    assert!((rd2.loss - (rd2.bpp + 100.0 * rd2.mse)).abs() < 1e-12);
    assert!((psnr(65.025) - 30.0).abs() < 1e-12);
    assert_eq!(psnr(0.0), f64::INFINITY);
    assert_eq!(mse(&img, &img).unwrap(), 0.0);
}

#[test]
fn default_weights_are_deterministic_end_to_end() {
    let w = ModelWeights::generate(ModelConfig::new(ModelDims::with_latent_channels(8)), 3, WeightInit::default());
    let codec = Codec::new(&w).unwrap();
    let img = random_image(4, 32, 32);
    let a = codec.encode(&img, EntropyMode::Full).unwrap();
    let b = codec.encode(&img, EntropyMode::Full).unwrap();
    assert_eq!(a, b);
    assert_eq!(codec.decode(&a.bitstream).unwrap(), codec.decode(&b.bitstream).unwrap());
}
