use estinet::data::{
    add_rain, augment, natural_key, read_frames, synth_clean_clip, synth_pair, write_frames, AugmentConfig, ClipRole,
    FlipMode, FrameFormat, RainParams, VideoClip,
};
use estinet::engine::Tensor;
use estinet::Error;

fn quantized(clip: &VideoClip) -> Vec<Vec<f32>> {
    clip.frames()
        .iter()
        .map(|f| f.data().iter().map(|v| (v * 255.0).round() / 255.0).collect())
        .collect()
}

#[test]
fn frames_roundtrip_through_both_formats() {
    let clip = synth_clean_clip(2, 3, 16, 32).unwrap();
    for format in [FrameFormat::Ppm, FrameFormat::Png] {
        let dir = tempfile::tempdir().unwrap();
        let written = write_frames(&clip, dir.path(), format).unwrap();
        assert_eq!(written.len(), 3);
        let back = read_frames(dir.path(), ClipRole::Clean).unwrap();
        assert_eq!((back.len(), back.height(), back.width()), (3, 16, 32));
        let got: Vec<Vec<f32>> = back.frames().iter().map(|f| f.data().to_vec()).collect();
        for (a, b) in got.iter().flatten().zip(quantized(&clip).iter().flatten()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn directories_without_manifest_are_read_in_natural_order() {
    let dir = tempfile::tempdir().unwrap();
    let clip = synth_clean_clip(5, 11, 16, 16).unwrap();
    let written = write_frames(&clip, dir.path(), FrameFormat::Ppm).unwrap();
    std::fs::remove_file(dir.path().join("manifest.txt")).unwrap();
    for (i, path) in written.iter().enumerate() {
        std::fs::rename(path, dir.path().join(format!("f{}.ppm", i + 1))).unwrap();
    }
    let back = read_frames(dir.path(), ClipRole::Rainy).unwrap();
    assert_eq!(quantized(&back), quantized(&clip));
    assert!(natural_key("f2.ppm") < natural_key("f10.ppm"));
}

#[test]
fn malformed_frame_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.ppm"), b"P6\n4 4\n255\nxx").unwrap();
    match read_frames(dir.path(), ClipRole::Clean) {
        Err(Error::Io { path, .. }) => assert!(path.ends_with("broken.ppm")),
        other => panic!("unexpected {other:?}"),
    }
    let empty = tempfile::tempdir().unwrap();
    assert!(read_frames(empty.path(), ClipRole::Clean).is_err());
}

#[test]
fn rain_only_brightens_and_zero_rain_is_identity() {
    let clean = synth_clean_clip(8, 4, 32, 32).unwrap();
    let rainy = add_rain(&clean, &RainParams::preset("heavy", 32, 32).unwrap()).unwrap();
    for (c, r) in clean.frames().iter().zip(rainy.frames()) {
        assert!(c.data().iter().zip(r.data()).all(|(a, b)| b >= a && *b <= 1.0));
        assert_ne!(c, r);
    }
    let none = add_rain(&clean, &RainParams::preset("none", 32, 32).unwrap()).unwrap();
    assert_eq!(none.frames(), clean.frames());
    assert!(RainParams::preset("drizzle", 32, 32).is_err());
}

#[test]
fn heavier_presets_corrupt_more() {
    let err = |preset: &str| {
        let rain = RainParams::preset(preset, 64, 64).unwrap().with_seed(4);
        let (clean, rainy) = synth_pair(6, 5, 64, 64, &rain).unwrap();
        (0..5)
            .map(|t| estinet::losses::mse(clean.frame(t), rainy.frame(t)).unwrap())
            .sum::<f64>()
    };
    let (light, default, heavy) = (err("light"), err("default"), err("heavy"));
    assert!(light < default && default < heavy, "{light} {default} {heavy}");
}

#[test]
fn augmentation_applies_the_same_crop_and_flip_to_both_frames() {
    let clean = synth_clean_clip(1, 1, 32, 32).unwrap();
    let rainy = clean.clone().with_role(ClipRole::Rainy);
    for seed in 0..8 {
        let config = AugmentConfig {
            crop: Some(16),
            flip: FlipMode::Random,
        };
        let (c, r) = augment(&[clean.frame(0).clone()], &[rainy.frame(0).clone()], config, seed).unwrap();
        assert_eq!(c, r);
        assert_eq!(c[0].shape(), &[3, 16, 16]);
    }
    let config = AugmentConfig {
        crop: Some(64),
        flip: FlipMode::Never,
    };
    assert!(augment(&[clean.frame(0).clone()], &[rainy.frame(0).clone()], config, 0).is_err());
}

#[test]
fn clips_clamp_values_and_reject_mixed_shapes() {
    let bright = Tensor::from_vec([3, 1, 1], vec![1.5f32, -0.5, 0.5]).unwrap();
    let clip = VideoClip::new(vec![bright], ClipRole::Clean).unwrap();
    assert_eq!(clip.frame(0).data(), &[1.0, 0.0, 0.5]);
    let mixed = vec![Tensor::<f32>::zeros([3, 2, 2]), Tensor::zeros([3, 2, 4])];
    assert!(VideoClip::new(mixed, ClipRole::Clean).is_err());
    let nan = Tensor::from_vec([3, 1, 1], vec![f32::NAN, 0.0, 0.0]).unwrap();
    assert!(VideoClip::new(vec![nan], ClipRole::Clean).is_err());
}
