mod common;

use brushdiff::condition::io::{load_bundle, save_bundle};
use brushdiff::condition::strokes::{load_strokes, save_strokes};
use brushdiff::condition::{
    apply_add, apply_subtract, blend_color, compile_conditions, extract_edges, grow_mask, grow_union,
    make_color_condition, make_masked_image, BrushStroke, ConditionError, ExtractorRegistry, GradientExtractor,
};
use brushdiff::image::{BinaryMask, EdgeMap, Image};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn constant_image_has_no_edges() {
    let img = Image::filled(12, 9, [0.3, 0.6, 0.1]).unwrap();
    let e = extract_edges(&img, &GradientExtractor).unwrap();
    assert!(e.data().iter().all(|&v| v == 0.0));
}

#[test]
fn step_edge_matches_oracle() {
    let img = Image::from_fn(8, 8, |x, _| if x < 4 { [0.0; 3] } else { [1.0; 3] }).unwrap();
    let e = extract_edges(&img, &GradientExtractor).unwrap();
    let want = oracle_edges(&img);
    assert!(max_abs_plane(&want, e.data()) < 1e-6);
    for y in 0..8 {
        for x in 0..8 {
            let on = x == 3 || x == 4;
            assert_eq!(e.get(x, y) > 0.0, on, "({x}, {y})");
        }
    }
}

#[test]
fn external_extractor_without_backend_errors() {
    let reg = ExtractorRegistry::with_defaults();
    assert!(matches!(reg.resolve("external"), Err(ConditionError::ExtractorUnavailable(_))));
    assert!(matches!(reg.resolve("nope"), Err(ConditionError::UnknownExtractor(_))));
}

#[test]
fn subtract_and_add_pointwise() {
    let e = EdgeMap::new(2, 1, vec![0.7, 0.7]).unwrap();
    let m = BinaryMask::new(2, 1, vec![true, false]).unwrap();
    let s = apply_subtract(&e, &m).unwrap();
    assert_eq!(s.data(), &[0.0, 0.7]);

    let e = EdgeMap::new(2, 1, vec![0.4, 0.4]).unwrap();
    let a = apply_add(&e, &m).unwrap();
    assert!((a.data()[0] - 1.0).abs() < 1e-7);
    assert_eq!(a.data()[1], 0.4);

    let wrong = BinaryMask::empty(3, 1).unwrap();
    assert!(apply_subtract(&e, &wrong).is_err());
    assert!(apply_add(&e, &wrong).is_err());
}

#[test]
fn blend_examples() {
    let img = Image::filled(2, 2, [0.2; 3]).unwrap();
    let full = BinaryMask::full(2, 2).unwrap();
    let half = BrushStroke::color(full.clone(), [1.0, 0.0, 0.0], 0.5).unwrap();
    let out = blend_color(&img, &half).unwrap();
    let p = out.get(0, 0);
    assert!((p[0] - 0.6).abs() < 1e-6 && (p[1] - 0.1).abs() < 1e-6 && (p[2] - 0.1).abs() < 1e-6);

    let clear = BrushStroke::color(full.clone(), [1.0, 0.0, 0.0], 0.0).unwrap();
    assert_eq!(blend_color(&img, &clear).unwrap(), img);
    let solid = BrushStroke::color(full.clone(), [0.1, 0.9, 0.4], 1.0).unwrap();
    assert_eq!(blend_color(&img, &solid).unwrap(), Image::filled(2, 2, [0.1, 0.9, 0.4]).unwrap());
    assert!(blend_color(&img, &BrushStroke::add(full)).is_err());
}

#[test]
fn color_condition_structure() {
    let c = Image::filled(32, 48, [0.25, 0.5, 0.75]).unwrap();
    let out = make_color_condition(&c).unwrap();
    for (a, b) in out.data().iter().zip(c.data()) {
        assert!((a - b).abs() < 1e-6);
    }

    let mut r = rng(1);
    let img = random_image(32, 32, &mut r);
    let out = make_color_condition(&img).unwrap();
    let mut blocks = std::collections::BTreeSet::new();
    for y in 0..32 {
        for x in 0..32 {
            assert_eq!(out.get(x, y), out.get(x / 16 * 16, y / 16 * 16));
            blocks.insert(out.get(x, y).map(f32::to_bits));
        }
    }
    assert!(blocks.len() <= 4);

    let img = random_image(16, 16, &mut r);
    let out = make_color_condition(&img).unwrap();
    let want = oracle_color_condition(&image_pixels(&img), 16, 16);
    assert!(max_abs_rgb(&want, &out) < 1e-6);

    assert!(matches!(
        make_color_condition(&Image::filled(15, 40, [0.0; 3]).unwrap()),
        Err(ConditionError::TooSmall { .. })
    ));
}

#[test]
fn color_condition_pads_odd_sizes() {
    let mut r = rng(2);
    for (w, h) in [(17, 16), (20, 33), (47, 18)] {
        let img = random_image(w, h, &mut r);
        let out = make_color_condition(&img).unwrap();
        assert_eq!(out.dims(), (w, h));
        let want = oracle_color_condition(&image_pixels(&img), w, h);
        assert!(max_abs_rgb(&want, &out) < 1e-6, "{w}x{h}");
    }
}

#[test]
fn grow_examples() {
    assert!(grow_mask(&[], (5, 5), 3).unwrap().is_empty());
    let mut dot = BinaryMask::empty(5, 5).unwrap();
    dot.set(2, 2, true);
    let g = grow_union(&[&dot], (5, 5), 1).unwrap();
    assert_eq!(g.count(), 5);
    for (x, y) in [(2, 2), (1, 2), (3, 2), (2, 1), (2, 3)] {
        assert!(g.get(x, y));
    }
    let mut r = rng(3);
    let m = random_mask(10, 10, &mut r);
    assert_eq!(grow_union(&[&m], (10, 10), 0).unwrap(), m);
    assert!(matches!(grow_union(&[&m], (10, 10), -1), Err(ConditionError::NegativeRadius(-1))));
}

#[test]
fn masked_image_examples() {
    let mut r = rng(4);
    let img = random_image(8, 8, &mut r);
    assert_eq!(make_masked_image(&img, &BinaryMask::empty(8, 8).unwrap()).unwrap(), img);
    let zero = make_masked_image(&img, &BinaryMask::full(8, 8).unwrap()).unwrap();
    assert!(zero.data().iter().all(|&v| v == 0.0));
    let m = noise_mask(8, 8, 0.4, &mut r);
    let out = make_masked_image(&img, &m).unwrap();
    for y in 0..8 {
        for x in 0..8 {
            let want = if m.get(x, y) { [0.0; 3] } else { img.get(x, y) };
            assert_eq!(out.get(x, y), want);
        }
    }
}

#[test]
fn compile_examples() {
    let mut r = rng(5);
    let img = random_image(32, 32, &mut r);
    let ex = GradientExtractor;

    let add = BrushStroke::add(random_mask(32, 32, &mut r));
    let b = compile_conditions(&img, &[add], 15, &ex).unwrap();
    assert_eq!(b.color_cond, make_color_condition(&img).unwrap());

    let sub_mask = random_mask(32, 32, &mut r);
    let b = compile_conditions(&img, &[BrushStroke::subtract(sub_mask.clone())], 2, &ex).unwrap();
    let e = extract_edges(&img, &ex).unwrap();
    for y in 0..32 {
        for x in 0..32 {
            let want = if sub_mask.get(x, y) { 0.0 } else { e.get(x, y) };
            assert_eq!(b.edge_cond.get(x, y), want);
        }
    }

    let m1 = BinaryMask::full(32, 32).unwrap();
    let m2 = BinaryMask::from_fn(32, 32, |x, _| x >= 4).unwrap();
    let s1 = BrushStroke::color(m1, [0.9, 0.1, 0.1], 0.7).unwrap();
    let s2 = BrushStroke::color(m2, [0.1, 0.1, 0.9], 0.4).unwrap();
    let forward = compile_conditions(&img, &[s1.clone(), s2.clone()], 3, &ex).unwrap();
    let sequential = blend_color(&blend_color(&img, &s1).unwrap(), &s2).unwrap();
    assert_eq!(forward.color_cond, make_color_condition(&sequential).unwrap());
    let reversed = compile_conditions(&img, &[s2, s1], 3, &ex).unwrap();
    assert_ne!(forward.color_cond, reversed.color_cond);

    assert!(matches!(compile_conditions(&img, &[], 3, &ex), Err(ConditionError::NoStrokes)));
}

#[test]
fn compile_matches_oracle_on_non_square() {
    let mut r = rng(6);
    for _ in 0..20 {
        let (w, h) = (r.gen_range(16..40), r.gen_range(16..40));
        let img = random_image(w, h, &mut r);
        let strokes = vec![
            BrushStroke::subtract(random_mask(w, h, &mut r)),
            BrushStroke::color(random_mask(w, h, &mut r), [r.gen(), r.gen(), r.gen()], r.gen()).unwrap(),
            BrushStroke::add(random_mask(w, h, &mut r)),
        ];
        let p = r.gen_range(0..6);
        let b = compile_conditions(&img, &strokes, p, &GradientExtractor).unwrap();
        let o = oracle_compile(&img, &strokes, p);
        assert!(max_abs_plane(&o.edge_cond, b.edge_cond.data()) < 1e-6);
        assert!(max_abs_rgb(&o.color_cond, &b.color_cond) < 1e-6);
        assert_eq!(b.mask.bits(), o.mask.as_slice());
        assert!(max_abs_rgb(&o.masked_image, &b.masked_image) == 0.0);
    }
}

#[test]
fn bundle_round_trip_is_bit_exact() {
    let mut r = rng(7);
    let img = random_image(40, 24, &mut r);
    let strokes = vec![
        BrushStroke::add(random_mask(40, 24, &mut r)),
        BrushStroke::color(random_mask(40, 24, &mut r), [0.2, 0.8, 0.3], 0.55).unwrap(),
    ];
    let b = compile_conditions(&img, &strokes, 4, &GradientExtractor).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&b, dir.path()).unwrap();
    let back = load_bundle(dir.path()).unwrap();
    assert_eq!(back, b);
    assert_eq!(back.meta.grow_radius, 4);
    assert_eq!(back.meta.extractor, "gradient");
}

#[test]
fn strokes_file_round_trip() {
    let mut r = rng(8);
    let strokes = vec![
        BrushStroke::subtract(random_mask(20, 20, &mut r)),
        BrushStroke::color(random_mask(20, 20, &mut r), [0.25, 0.5, 1.0], 0.75).unwrap(),
        BrushStroke::add(random_mask(20, 20, &mut r)),
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("strokes.toml");
    save_strokes(&strokes, &path).unwrap();
    assert_eq!(load_strokes(&path).unwrap(), strokes);
}

fn arb_case() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 16usize..28, 16usize..28)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_ops_stay_in_range_and_are_idempotent((seed, w, h) in arb_case()) {
        let mut r = rng(seed);
        let e = random_edges(w, h, &mut r);
        let ms = noise_mask(w, h, 0.3, &mut r);
        let ma = noise_mask(w, h, 0.3, &mut r);
        let sub = apply_subtract(&e, &ms).unwrap();
        let out = apply_add(&sub, &ma).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(apply_subtract(&sub, &ms).unwrap(), sub.clone());
        prop_assert_eq!(apply_add(&out, &ma).unwrap(), out);
    }

    #[test]
    fn grow_is_monotone_and_extensive((seed, w, h) in arb_case(), p1 in 0i64..8, extra in 0i64..8) {
        let mut r = rng(seed);
        let m = noise_mask(w, h, 0.05, &mut r);
        let g1 = grow_union(&[&m], (w, h), p1).unwrap();
        let g2 = grow_union(&[&m], (w, h), p1 + extra).unwrap();
        prop_assert!(m.is_subset_of(&g1));
        prop_assert!(g1.is_subset_of(&g2));
        let want = oracle_dilate(&m, (p1 + extra) as u32);
        prop_assert_eq!(g2.bits(), want.as_slice());
    }

    #[test]
    fn masking_is_idempotent((seed, w, h) in arb_case()) {
        let mut r = rng(seed);
        let img = random_image(w, h, &mut r);
        let m = noise_mask(w, h, 0.5, &mut r);
        let once = make_masked_image(&img, &m).unwrap();
        prop_assert_eq!(make_masked_image(&once, &m).unwrap(), once);
    }

    #[test]
    fn compile_is_pure((seed, w, h) in arb_case()) {
        let mut r = rng(seed);
        let img = random_image(w, h, &mut r);
        let strokes = vec![
            BrushStroke::add(random_mask(w, h, &mut r)),
            BrushStroke::color(random_mask(w, h, &mut r), [r.gen(), r.gen(), r.gen()], r.gen()).unwrap(),
        ];
        let a = compile_conditions(&img, &strokes, 3, &GradientExtractor).unwrap();
        let b = compile_conditions(&img, &strokes, 3, &GradientExtractor).unwrap();
        prop_assert_eq!(a, b);
    }
}
