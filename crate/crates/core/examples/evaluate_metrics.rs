//! Per-frame PSNR and SSIM of a rainy clip against its clean source, plus
//! the two calibration points of the metrics.
//!
//! cargo run --example evaluate_metrics

use estinet::data::{synth_pair, RainParams};
use estinet::engine::Tensor;
use estinet::metrics::{psnr, ssim, MetricReport};

fn main() -> estinet::Result<()> {
    let rain = RainParams::preset("default", 64, 64)?.with_seed(5);
    let (clean, rainy) = synth_pair(21, 8, 64, 64, &rain)?;
    let report = MetricReport::evaluate(rainy.frames(), clean.frames())?;
    print!("{}", report.to_table());
    println!("{}", report.summary_line());

    let gray = Tensor::<f64>::full([3, 32, 32], 0.5);
    let shifted = gray.map(|v| v + 0.1);
    println!("PSNR at uniform error 0.1: {:.6} dB", psnr(&gray, &shifted)?);
    println!(
        "SSIM of a frame with itself: {:.12}",
        ssim(clean.frame(0), clean.frame(0))?
    );
    Ok(())
}
