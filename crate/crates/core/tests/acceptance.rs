//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test --test acceptance`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{frame_vars, narrow_model, random_tensor, random_window, tiny_model, tiny_train_config};
use estinet::data::VideoClip;
use estinet::engine::{Graph, Initializer, ParamStore, Tensor, Var};
use estinet::estm::{Estm, EstmConfig};
use estinet::losses::LossWeights;
use estinet::metrics::{psnr, ssim, MetricReport};
use estinet::model::{Estinet, ModelConfig, Variant};
use estinet::nn::Conv2d;
use estinet::trainer::{
    count_params, derain_video, evaluate_loss, initial_checkpoint, train, Checkpoint, DataSource, LossLog, TrainConfig,
    TrainingData,
};
use estinet::verify::{check, randomize, CheckTarget};

const GRADCHECK_TOL: f64 = 1e-4;
const GRADCHECK_BUDGET_S: f64 = 600.0;
const OVERFIT_GAIN_DB: f64 = 5.0;
const OVERFIT_LOSS_RATIO: f64 = 0.5;
const OVERFIT_MAX_ITERS: u64 = 2000;
const HELDOUT_GAIN_DB: f64 = 2.0;
const SSIM_SELF_TOL: f64 = 1e-9;
const PSNR_CAL_TOL: f64 = 1e-6;
const METRIC_REF_TOL: f64 = 1e-5;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient oracle", gradient_oracle),
        ("architecture invariants", architecture_invariants),
        ("ablation structure", ablation_structure),
        ("overfit one clip", overfit_one_clip),
        ("held-out generalization", heldout_generalization),
        ("metric oracles", metric_oracles),
        ("determinism and persistence", determinism_and_persistence),
        ("accounting", accounting),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1} s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.1} s) {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for target in CheckTarget::ALL {
        let report = check(target, 7).map_err(|e| e.to_string())?;
        let checked: usize = report.entries.iter().map(|e| e.checked).sum();
        ok &= report.passes(GRADCHECK_TOL) && checked > 0;
        parts.push(format!("{target}={:.1e}/{checked}", report.max_error()));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < GRADCHECK_BUDGET_S;
    ensure(
        ok,
        format!(
            "max rel error/entries {} (tol {GRADCHECK_TOL:e}), {secs:.1} s of {GRADCHECK_BUDGET_S} s",
            parts.join(" ")
        ),
    )
}

fn architecture_invariants() -> Outcome {
    // Deepest feature and temporal collapse at the default widths.
    let model = Estinet::new(ModelConfig::default()).map_err(|e| e.to_string())?;
    let store = model.init::<f32>(0).map_err(|e| e.to_string())?;
    let (h, w) = (64, 48);
    let mut g = Graph::new();
    let frame = random_window(&mut g, 1, h, w, 1)[0];
    let (_, trace) = model
        .sicm()
        .forward_traced(&mut g, &store, frame)
        .map_err(|e| e.to_string())?;
    let deepest_ok = trace.deepest[2..] == [h / 16, w / 16];

    let refiner = model.refiner().ok_or("full model has no refiner")?;
    let coarse = random_window(&mut g, 5, 16, 16, 2);
    let rainy = random_window(&mut g, 5, 16, 16, 3);
    let (_, estm_trace) = refiner
        .forward_traced(&mut g, &store, &coarse, &rainy)
        .map_err(|e| e.to_string())?;
    let extents_ok = estm_trace.temporal_extents == [5, 3, 1];

    // Gate activations under random weights, in 64-bit.
    let small = Estinet::new(tiny_model(Variant::Full)).map_err(|e| e.to_string())?;
    let mut store64 = small.init::<f64>(0).map_err(|e| e.to_string())?;
    randomize(&mut store64, 11);
    let mut g64 = Graph::new();
    let window = random_window(&mut g64, 5, 16, 16, 4);
    let out = small.forward(&mut g64, &store64, &window).map_err(|e| e.to_string())?;
    let gates = out.stim.ok_or("full model produced no gates")?.gates;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for step in &gates {
        for v in [step.forget, step.input, step.output] {
            for &x in g64.value(v).data() {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    let gates_ok = lo > 0.0 && hi < 1.0;

    // Zero parameters at the default widths.
    let mut zero = store.clone();
    zero.zero_values();
    let mut gz = Graph::new();
    let window = random_window(&mut gz, 5, 32, 32, 5);
    let refined = model
        .forward(&mut gz, &zero, &window)
        .map_err(|e| e.to_string())?
        .refined;
    let identity_ok = gz.value(refined) == gz.value(window[model.center()]);

    ensure(
        deepest_ok && extents_ok && gates_ok && identity_ok,
        format!(
            "deepest {:?} for {h}x{w}; temporal extents {:?}; gates in [{lo:.3e}, {:.3e}]; zero-parameter identity {identity_ok}",
            &trace.deepest[2..],
            estm_trace.temporal_extents,
            hi,
        ),
    )
}

fn randomized(variant: Variant, seed: u64) -> (Estinet, ParamStore<f64>) {
    let model = Estinet::new(tiny_model(variant)).expect("model");
    let mut store = model.init::<f64>(0).expect("init");
    randomize(&mut store, seed);
    (model, store)
}

fn coarse_values(model: &Estinet, store: &ParamStore<f64>, frames: &[Tensor<f64>]) -> Vec<Tensor<f64>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = frames.iter().map(|f| g.constant(f.clone())).collect();
    let (coarse, _) = model.forward_coarse(&mut g, store, &vars).expect("forward");
    coarse.iter().map(|&v| g.value(v).clone()).collect()
}

fn max_diff(a: &[Tensor<f64>], b: &[Tensor<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.max_abs_diff(y).expect("shapes"))
        .fold(0.0, f64::max)
}

fn ablation_structure() -> Outcome {
    let frames: Vec<Tensor<f64>> = (0..5).map(|t| random_tensor(&[1, 3, 16, 16], 40 + t)).collect();
    let perm = [2usize, 0, 4, 1, 3];
    let permuted: Vec<Tensor<f64>> = perm.iter().map(|&p| frames[p].clone()).collect();
    let equivariance_gap = |variant: Variant| {
        let (model, store) = randomized(variant, 21);
        let base = coarse_values(&model, &store, &frames);
        let moved = coarse_values(&model, &store, &permuted);
        let expected: Vec<Tensor<f64>> = perm.iter().map(|&p| base[p].clone()).collect();
        max_diff(&moved, &expected)
    };
    let gap_2d = equivariance_gap(Variant::Sicm2dcnn);
    let gap_full = equivariance_gap(Variant::Full);
    let a_ok = gap_2d < 1e-12 && gap_full > 1e-6;

    // Zero the kernel slice that reads the previous frame's features.
    let (model, store) = randomized(Variant::Full, 22);
    let channels = model.config().sicm.feature_channels;
    let mut cut = store.clone();
    let mut sliced = 0;
    for (name, entry) in cut.iter_mut() {
        if name.starts_with("stim.") && name.contains(".gate_") && name.ends_with(".weight") {
            let s = entry.value.shape().to_vec();
            let per_out = s[1] * s[2] * s[3];
            let per_in = s[2] * s[3];
            for o in 0..s[0] {
                let start = o * per_out + channels * per_in;
                entry.value.data_mut()[start..start + channels * per_in].fill(0.0);
            }
            sliced += 1;
        }
    }
    let gap_slice = max_diff(
        &coarse_values(&model, &store, &frames),
        &coarse_values(&model, &cut, &frames),
    );
    let b_ok = sliced == 8 && gap_slice > 1e-6;

    // Refiner sensitivity to frames other than the center one.
    let config = EstmConfig {
        width: 2,
        rdb_count: 1,
        rdb_layers: 2,
        growth: 2,
        ..Default::default()
    };
    let refine_gap = |estm: Estm| {
        let mut store = ParamStore::new(0);
        estm.init(&mut store, &mut Initializer::new(0)).expect("init");
        randomize(&mut store, 23);
        let run = |shift: u64| {
            let mut g = Graph::<f64>::new();
            let mut coarse = random_window(&mut g, 5, 16, 16, 60);
            let mut rainy = random_window(&mut g, 5, 16, 16, 61);
            for t in [0, 1, 3, 4] {
                coarse[t] = g.constant(random_tensor(&[1, 3, 16, 16], 70 + shift + t as u64));
                rainy[t] = g.constant(random_tensor(&[1, 3, 16, 16], 80 + shift + t as u64));
            }
            let out = estm.forward(&mut g, &store, &coarse, &rainy).expect("forward");
            g.value(out).clone()
        };
        run(0).max_abs_diff(&run(100)).expect("shapes")
    };
    let gap_flat = refine_gap(Estm::new_2dcnn(config).map_err(|e| e.to_string())?);
    let gap_3d = refine_gap(Estm::new(config).map_err(|e| e.to_string())?);
    let c_ok = gap_flat == 0.0 && gap_3d > 1e-6;

    ensure(
        a_ok && b_ok && c_ok,
        format!(
            "(a) permutation gap sicm_2dcnn {gap_2d:.1e} vs full {gap_full:.1e}; \
             (b) previous-frame slice removal moves coarse output by {gap_slice:.1e} over {sliced} gate kernels; \
             (c) non-center change moves 2D refiner by {gap_flat:.1e} vs 3D refiner {gap_3d:.1e}"
        ),
    )
}

/// Reduced-width learning configuration: 32×32 crops, two windows per
/// batch and a larger rate keep a run within minutes on one core.
fn learning_config(stage1: u64, stage2: u64, data: DataSource) -> TrainConfig {
    TrainConfig {
        model: narrow_model(),
        batch_size: 2,
        lr_initial: 1e-3,
        plateau_window: 200,
        stage1_iters: stage1,
        stage2_iters: stage2,
        crop: Some(32),
        seed: 0,
        data,
        ..Default::default()
    }
}

fn clip_quality(ckpt: &Checkpoint, clean: &VideoClip, rainy: &VideoClip) -> (MetricReport, MetricReport) {
    let derained = derain_video(ckpt, rainy).expect("derain");
    (
        MetricReport::evaluate(rainy.frames(), clean.frames()).expect("metrics"),
        MetricReport::evaluate(derained.frames(), clean.frames()).expect("metrics"),
    )
}

fn overfit_one_clip() -> Outcome {
    let source = DataSource::Synthetic {
        clips: 1,
        frames: 20,
        height: 64,
        width: 64,
        preset: "default".into(),
        seed: 0,
    };
    let config = learning_config(500, 700, source);
    if config.stage1_iters + config.stage2_iters > OVERFIT_MAX_ITERS {
        return Err("iteration budget exceeded".into());
    }
    let data = TrainingData::from_source(&config.data).map_err(|e| e.to_string())?;
    let weights = LossWeights::default();
    let start = evaluate_loss(&initial_checkpoint(&config).map_err(|e| e.to_string())?, &data, weights)
        .map_err(|e| e.to_string())?;
    let trained = train(&config, &data, &mut LossLog::default()).map_err(|e| e.to_string())?;
    let end = evaluate_loss(&trained, &data, weights).map_err(|e| e.to_string())?;
    let (clean, rainy) = &data.pairs()[0];
    let (before, after) = clip_quality(&trained, clean, rainy);
    let gain = after.mean_psnr() - before.mean_psnr();
    ensure(
        gain >= OVERFIT_GAIN_DB
            && after.mean_ssim() > before.mean_ssim()
            && end.l_final < OVERFIT_LOSS_RATIO * start.l_final,
        format!(
            "PSNR {:.2} -> {:.2} dB (gain {gain:+.2}, need {OVERFIT_GAIN_DB:+}); SSIM {:.4} -> {:.4}; \
             L_final {:.4e} -> {:.4e} (ratio {:.3}, need < {OVERFIT_LOSS_RATIO}); {} iterations",
            before.mean_psnr(),
            after.mean_psnr(),
            before.mean_ssim(),
            after.mean_ssim(),
            start.l_final,
            end.l_final,
            end.l_final / start.l_final,
            config.stage1_iters + config.stage2_iters,
        ),
    )
}

fn heldout_generalization() -> Outcome {
    let source = DataSource::Synthetic {
        clips: 8,
        frames: 20,
        height: 64,
        width: 64,
        preset: "default".into(),
        seed: 0,
    };
    let config = learning_config(600, 900, source);
    let data = TrainingData::from_source(&config.data).map_err(|e| e.to_string())?;
    let heldout = TrainingData::synthetic(2, 20, 64, 64, "default", 1000).map_err(|e| e.to_string())?;
    let trained = train(&config, &data, &mut LossLog::default()).map_err(|e| e.to_string())?;
    let (mut rainy_db, mut derained_db) = (0.0, 0.0);
    for (clean, rainy) in heldout.pairs() {
        let (before, after) = clip_quality(&trained, clean, rainy);
        rainy_db += before.mean_psnr() / 2.0;
        derained_db += after.mean_psnr() / 2.0;
    }
    let gain = derained_db - rainy_db;
    ensure(
        gain >= HELDOUT_GAIN_DB,
        format!("held-out PSNR {rainy_db:.2} -> {derained_db:.2} dB (gain {gain:+.2}, need {HELDOUT_GAIN_DB:+})"),
    )
}

/// Luma, direct 2D Gaussian window and two-pass local statistics.
fn reference_ssim(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let (h, w) = (a.shape()[1], a.shape()[2]);
    let luma = |t: &Tensor<f64>, y: usize, x: usize| {
        let d = t.data();
        0.299 * d[y * w + x] + 0.587 * d[h * w + y * w + x] + 0.114 * d[2 * h * w + y * w + x]
    };
    let mut window = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in window.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    let mut count = 0;
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut ma, mut mb) = (0.0, 0.0);
            for (i, row) in window.iter().enumerate() {
                for (j, &wij) in row.iter().enumerate() {
                    let wt = wij / total;
                    ma += wt * luma(a, y + i, x + j);
                    mb += wt * luma(b, y + i, x + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for (i, row) in window.iter().enumerate() {
                for (j, &wij) in row.iter().enumerate() {
                    let wt = wij / total;
                    let (da, db) = (luma(a, y + i, x + j) - ma, luma(b, y + i, x + j) - mb);
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

fn reference_psnr(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let plane = a.numel() / 3;
    let (da, db) = (a.data(), b.data());
    let mut se = 0.0;
    for i in 0..plane {
        let la = 0.299 * da[i] + 0.587 * da[plane + i] + 0.114 * da[2 * plane + i];
        let lb = 0.299 * db[i] + 0.587 * db[plane + i] + 0.114 * db[2 * plane + i];
        se += (la - lb) * (la - lb);
    }
    10.0 * (plane as f64 / se).log10()
}

fn metric_oracles() -> Outcome {
    let a = random_tensor::<f64>(&[3, 24, 24], 90);
    let self_ssim = ssim(&a, &a).map_err(|e| e.to_string())?;
    let gray = Tensor::<f64>::full([3, 24, 24], 0.5);
    let lifted = Tensor::<f64>::full([3, 24, 24], 0.6);
    let cal_psnr = psnr(&gray, &lifted).map_err(|e| e.to_string())?;

    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let (h, w) = (16 + (k % 3) as usize * 8, 16 + (k % 4) as usize * 4);
        let clean = random_tensor::<f64>(&[3, h, w], 100 + k);
        let noise = random_tensor::<f64>(&[3, h, w], 200 + k);
        let level = 0.05 + 0.05 * (k % 5) as f64;
        let noisy = Tensor::from_fn([3, h, w], |i| {
            (clean.data()[i] + level * (noise.data()[i] - 0.5)).clamp(0.0, 1.0)
        });
        let ds = (ssim(&clean, &noisy).map_err(|e| e.to_string())? - reference_ssim(&clean, &noisy)).abs();
        let dp = (psnr(&clean, &noisy).map_err(|e| e.to_string())? - reference_psnr(&clean, &noisy)).abs();
        worst = worst.max(ds).max(dp);
    }
    ensure(
        (self_ssim - 1.0).abs() <= SSIM_SELF_TOL && (cal_psnr - 20.0).abs() <= PSNR_CAL_TOL && worst <= METRIC_REF_TOL,
        format!(
            "SSIM(a,a) - 1 = {:.1e} (tol {SSIM_SELF_TOL:e}); PSNR at 0.1 error {cal_psnr:.9} dB (tol {PSNR_CAL_TOL:e}); \
             worst gap to reference on 20 pairs {worst:.1e} (tol {METRIC_REF_TOL:e})",
            self_ssim - 1.0
        ),
    )
}

fn determinism_and_persistence() -> Outcome {
    let config = tiny_train_config(4, 4);
    let data = TrainingData::from_source(&config.data).map_err(|e| e.to_string())?;
    let a = train(&config, &data, &mut LossLog::default()).map_err(|e| e.to_string())?;
    let b = train(&config, &data, &mut LossLog::default()).map_err(|e| e.to_string())?;
    let identical = a.to_bytes() == b.to_bytes();

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.ckpt");
    a.save(&path).map_err(|e| e.to_string())?;
    let loaded = Checkpoint::load(&path).map_err(|e| e.to_string())?;
    let bit_exact = loaded.to_bytes() == a.to_bytes()
        && loaded.params.iter().zip(a.params.iter()).all(|((_, x), (_, y))| {
            x.value
                .data()
                .iter()
                .zip(y.value.data())
                .all(|(p, q)| p.to_bits() == q.to_bits())
        });

    let bytes = a.to_bytes();
    let mut rejected = 0;
    let mut tried = 0;
    for pos in (0..bytes.len()).step_by(bytes.len() / 97 + 1) {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x04;
        tried += 1;
        rejected += usize::from(Checkpoint::from_bytes(&bad).is_err());
    }
    let truncated = Checkpoint::from_bytes(&bytes[..bytes.len() - 5]).is_err();
    ensure(
        identical && bit_exact && rejected == tried && truncated,
        format!(
            "same seed identical {identical}; round-trip bit-exact {bit_exact}; \
             corrupted copies rejected {rejected}/{tried}; truncated copy rejected {truncated}"
        ),
    )
}

fn accounting() -> Outcome {
    // Two layers: 3→4 with 3×3 kernels and 4→2 with a 1×1 kernel.
    let layers = [Conv2d::same("l1", 3, 4, 3), Conv2d::same("l2", 4, 2, 1)];
    let mut params = ParamStore::new(0);
    let mut init = Initializer::new(0);
    for layer in &layers {
        layer.init(&mut params, &mut init).map_err(|e| e.to_string())?;
    }
    let two_layer = Checkpoint {
        model: ModelConfig::default(),
        stage1_iters: 0,
        stage2_iters: 0,
        params,
    };
    let hand = (4 * 3 * 3 * 3 + 4) + (2 * 4 + 2);
    let two_layer_ok = count_params(&two_layer) == hand;

    let full = initial_checkpoint(&TrainConfig {
        model: tiny_model(Variant::Full),
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let summed: usize = full
        .params
        .iter()
        .map(|(_, e)| e.value.shape().iter().product::<usize>())
        .sum();
    let model_ok = count_params(&full) == summed;

    // 3→16, 3×3, 8×8 output: 2 · 9 · 3 · 16 · 64 FLOPs and 16·27 + 16 parameters.
    let conv = Conv2d::same("c", 3, 16, 3);
    let spec = conv.spec(8, 8).map_err(|e| e.to_string())?;
    let mut store = ParamStore::<f32>::new(0);
    conv.init(&mut store, &mut Initializer::new(0))
        .map_err(|e| e.to_string())?;
    let mut g = Graph::new();
    let x = frame_vars(&mut g, &[Tensor::zeros([3, 8, 8])])[0];
    conv.forward(&mut g, &store, x).map_err(|e| e.to_string())?;
    let flops_ok = spec.flops() == 55_296 && g.conv_flops() == 55_296 && spec.params() == 448;

    ensure(
        two_layer_ok && model_ok && flops_ok,
        format!(
            "two-layer count {} vs hand {hand}; tiny model {} vs summed {summed}; \
             single conv {} FLOPs (executed {}) vs hand 55296, {} params vs hand 448",
            count_params(&two_layer),
            count_params(&full),
            spec.flops(),
            g.conv_flops(),
            spec.params(),
        ),
    )
}
