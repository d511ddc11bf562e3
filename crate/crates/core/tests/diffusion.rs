mod common;

use std::time::Instant;

use brushdiff::condition::{compile_conditions, BrushStroke, GradientExtractor};
use brushdiff::diffusion::train::window_mean;
use brushdiff::diffusion::{
    load_checkpoint, sample, sample_with, save_checkpoint, Branches, Checkpoint, DiffusionError, DiffusionSchedule,
    Group, LatentCodec, Phase, Sampler, Tensor, TokenCondition, TrainConfig, Trainer,
};
use brushdiff::eval::unmasked_preservation;
use common::net::{self, Inputs};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn forward_is_deterministic_and_reports_n_taps() {
    let m = net::model(6, 8, 3, 1);
    let inputs = Inputs::random(3, 4, 4, &mut rng(2));
    let a = m.forward(&inputs.full()).unwrap();
    let b = m.forward(&inputs.full()).unwrap();
    assert_eq!(a.noise_pred, b.noise_pred);
    assert_eq!(a.features.len(), 6);
}

#[test]
fn rejects_bad_inputs() {
    let m = net::model(4, 8, 3, 1);
    let inputs = Inputs::random(3, 4, 4, &mut rng(3));
    let mut bad = inputs.full();
    bad.t = 1000.0;
    assert!(matches!(m.forward(&bad), Err(DiffusionError::TimestepOutOfRange { .. })));
    let wrong = Tensor::zeros(&[2, 4, 4]);
    assert!(m.forward_base(&wrong, &inputs.tokens, 3.0).is_err());
    let short_control = Tensor::zeros(&[3, 4, 4]);
    assert!(m.inject_control(&inputs.z_t, &short_control, &inputs.tokens, 3.0).is_err());
    assert!(net::model(4, 8, 3, 1).spec().validate().is_ok());
    for n in [0, 3] {
        let spec = brushdiff::diffusion::UNetSpec::new(n, 8, 3);
        assert!(brushdiff::diffusion::DualBranchModel::new(spec, 1000, &mut rng(0)).is_err());
    }
}

#[test]
fn fresh_branches_are_a_no_op() {
    let mut r = rng(4);
    let m = net::model(4, 8, 3, 5);
    let (zi, zc) = m.zero_conv_params();
    for id in zi.iter().chain(&zc) {
        assert!(m.params().get(*id).data.iter().all(|&v| v == 0.0));
    }
    for _ in 0..5 {
        let inputs = Inputs::random(3, 4, 4, &mut r);
        let base = m.forward_base(&inputs.z_t, &inputs.tokens, inputs.t).unwrap();
        let both = m.forward(&inputs.full()).unwrap();
        assert_eq!(base.noise_pred.max_abs_diff(&both.noise_pred), 0.0);
        let inp = m.inject_inpaint(&inputs.z_t, &inputs.inpaint, &inputs.tokens, inputs.t).unwrap();
        assert_eq!(base.features, inp.features);
    }
}

#[test]
fn inpaint_weight_zero_and_linearity() {
    let mut r = rng(6);
    let mut m = net::model(4, 8, 3, 7);
    net::wake_zero_convs(&mut m, 0.2, &mut r);
    let inputs = Inputs::random(3, 4, 4, &mut r);
    let base = m.forward_base(&inputs.z_t, &inputs.tokens, inputs.t).unwrap();

    let mut off = m.clone();
    off.w_inpaint = 0.0;
    let out = off.inject_inpaint(&inputs.z_t, &inputs.inpaint, &inputs.tokens, inputs.t).unwrap();
    assert_eq!(out.noise_pred, base.noise_pred);

    let w = 0.7;
    let mut a = m.clone();
    a.w_inpaint = w;
    let mut b = m.clone();
    b.w_inpaint = 2.0 * w;
    for id in b.zero_conv_params().0 {
        let t = b.params_mut().get_mut(id);
        *t = t.scaled(0.5);
    }
    let oa = a.inject_inpaint(&inputs.z_t, &inputs.inpaint, &inputs.tokens, inputs.t).unwrap();
    let ob = b.inject_inpaint(&inputs.z_t, &inputs.inpaint, &inputs.tokens, inputs.t).unwrap();
    assert!(oa.noise_pred.max_abs_diff(&ob.noise_pred) <= 1e-6);
    assert!(oa.noise_pred.max_abs_diff(&base.noise_pred) > 1e-6);
}

#[test]
fn control_targets_middle_and_decoder() {
    let spec = brushdiff::diffusion::UNetSpec::new(12, 4, 3);
    assert_eq!(spec.control_target(1), 7);
    assert_eq!(spec.control_target(6), 12);
    for n in [4, 8, 12] {
        let mut r = rng(n as u64);
        let mut m = net::model(n, 6, 3, 11);
        net::wake_zero_convs(&mut m, 0.3, &mut r);
        let inputs = Inputs::random(3, 4, 4, &mut r);
        let base = m.forward_base(&inputs.z_t, &inputs.tokens, inputs.t).unwrap();
        let ctl = m.inject_control(&inputs.z_t, &inputs.control, &inputs.tokens, inputs.t).unwrap();
        for i in 0..n / 2 {
            assert_eq!(base.features[i].data, ctl.features[i].data, "n={n} layer {}", i + 1);
        }
        for i in n / 2..n {
            assert!(base.features[i].max_abs_diff(&ctl.features[i]) > 0.0, "n={n} layer {}", i + 1);
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    for s in net::gradient_check(21, 10) {
        assert!(s.rel_error() <= 1e-3, "{} analytic {} numeric {}", s.name, s.analytic, s.numeric);
    }
}

#[test]
fn loss_is_zero_at_the_optimum() {
    let m = net::model(4, 8, 3, 1);
    let inputs = Inputs::random(3, 4, 4, &mut rng(8));
    let pred = m.forward(&inputs.full()).unwrap().noise_pred;
    let (loss, _) = m.loss_and_grads(&inputs.full(), &pred, &|g: Group| g.is_branch()).unwrap();
    assert_eq!(loss, 0.0);
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        width: 8,
        n_layers: 2,
        batch: 1,
        base_steps: 3,
        inpaint_steps: 3,
        control_steps: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_reproducible_and_keeps_base_frozen() {
    let mut a = Trainer::new(tiny_config()).unwrap();
    let mut b = Trainer::new(tiny_config()).unwrap();
    assert_eq!(a.step(Phase::Base).unwrap().to_bits(), b.step(Phase::Base).unwrap().to_bits());

    let frozen = |t: &Trainer| -> Vec<Tensor> {
        let p = t.model.params();
        p.ids_in(Group::Base).map(|id| p.get(id).clone()).collect()
    };
    let before = frozen(&a);
    for phase in [Phase::Inpaint, Phase::Control, Phase::Inpaint] {
        a.step(phase).unwrap();
    }
    assert_eq!(frozen(&a), before);

    let report = b.run(|_, _, _| {}).unwrap();
    assert_eq!(report.phases.len(), 3);
    assert!(report.phases.iter().all(|p| p.losses.iter().all(|l| l.is_finite())));
    assert_eq!(window_mean(&[1.0, 2.0, 3.0, 4.0], 2, 3), 2.5);
}

fn edit_bundle(seed: u64) -> (brushdiff::image::Image, brushdiff::condition::ConditionBundle) {
    let mut r = rng(seed);
    let img = random_image(32, 32, &mut r);
    let strokes = vec![
        BrushStroke::add(random_mask(32, 32, &mut r)),
        BrushStroke::color(random_mask(32, 32, &mut r), [0.9, 0.2, 0.1], 0.8).unwrap(),
    ];
    let b = compile_conditions(&img, &strokes, 2, &GradientExtractor).unwrap();
    (img, b)
}

#[test]
fn sampling_pastes_back_and_matches_base_at_init() {
    let codec = LatentCodec::patchify(4);
    let m = net::model(4, 16, codec.latent_channels(), 9);
    for sampler in [Sampler::EulerAncestralKarras, Sampler::DdpmAncestral] {
        let schedule = DiffusionSchedule {
            sampler,
            ..Default::default()
        };
        for seed in 0..3 {
            let (img, bundle) = edit_bundle(seed);
            let tokens = TokenCondition::from_prompt("red circle");
            let start = Instant::now();
            let out = sample(&m, &codec, &bundle, &tokens, &schedule, &mut rng(seed)).unwrap();
            assert!(start.elapsed().as_secs_f64() < 5.0);
            assert_eq!(unmasked_preservation(&out, &img, &bundle.mask).unwrap(), 0.0);
            let base_only = sample_with(&m, &codec, &bundle, &tokens, &schedule, Branches::NONE, &mut rng(seed)).unwrap();
            assert_eq!(out, base_only);
            let again = sample(&m, &codec, &bundle, &tokens, &schedule, &mut rng(seed)).unwrap();
            assert_eq!(out, again);
        }
    }
}

#[test]
fn sampler_rejects_mismatched_schedule() {
    let codec = LatentCodec::patchify(4);
    let m = net::model(4, 8, codec.latent_channels(), 9);
    let (_, bundle) = edit_bundle(1);
    let schedule = DiffusionSchedule {
        num_train_steps: 500,
        ..Default::default()
    };
    let err = sample(&m, &codec, &bundle, &TokenCondition::empty(), &schedule, &mut rng(0));
    assert!(matches!(err, Err(DiffusionError::ScheduleMismatch(_))));
    let zero_steps = DiffusionSchedule {
        num_sample_steps: 0,
        ..Default::default()
    };
    assert!(sample(&m, &codec, &bundle, &TokenCondition::empty(), &zero_steps, &mut rng(0)).is_err());
}

#[test]
fn patchify_is_exactly_invertible() {
    let mut r = rng(10);
    for f in [1, 2, 4] {
        let codec = LatentCodec::patchify(f);
        let img = random_image(16, 8, &mut r);
        let z = codec.encode(&img).unwrap();
        assert_eq!(z.shape, vec![3 * f * f, 8 / f, 16 / f]);
        assert_eq!(codec.decode(&z).unwrap(), img);
        assert_eq!(codec.decode_model(&codec.encode_model(&img).unwrap()).unwrap(), img);
    }
    assert!(LatentCodec::patchify(4).encode(&random_image(10, 8, &mut r)).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let mut r = rng(12);
    let codec = LatentCodec::patchify(2);
    let mut model = net::model(4, 8, codec.latent_channels(), 13);
    net::wake_zero_convs(&mut model, 0.1, &mut r);
    model.w_control = 0.2;
    let ck = Checkpoint {
        model,
        codec,
        schedule: DiffusionSchedule::default(),
    };
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(&ck, dir.path()).unwrap();
    let back = load_checkpoint(dir.path()).unwrap();
    assert_eq!(back.model.params(), ck.model.params());
    assert_eq!(back.model.w_control, 0.2);
    assert_eq!(back.schedule, ck.schedule);
    let (_, bundle) = edit_bundle(3);
    let tokens = TokenCondition::empty();
    let a = sample(&ck.model, &ck.codec, &bundle, &tokens, &ck.schedule, &mut rng(1)).unwrap();
    let b = sample(&back.model, &back.codec, &bundle, &tokens, &back.schedule, &mut rng(1)).unwrap();
    assert_eq!(a, b);

    std::fs::write(dir.path().join("params.bin"), b"truncated").unwrap();
    assert!(load_checkpoint(dir.path()).is_err());
}
