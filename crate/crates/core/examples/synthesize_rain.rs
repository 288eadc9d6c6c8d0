//! Generates a procedural clip, overlays rain streaks at every preset and
//! writes the heavy version to disk as PNG frames.
//!
//! cargo run --example synthesize_rain -- [OUT_DIR]

use estinet::data::{synth_pair, write_frames, FrameFormat, RainParams};
use estinet::metrics::MetricReport;

fn main() -> estinet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("estinet_synth"));
    let (frames, height, width) = (12, 64, 64);

    for preset in ["none", "light", "default", "heavy"] {
        let rain = RainParams::preset(preset, height, width)?.with_seed(11);
        let (clean, rainy) = synth_pair(3, frames, height, width, &rain)?;
        let report = MetricReport::evaluate(rainy.frames(), clean.frames())?;
        println!(
            "{preset:>8}: {:>3} streaks, rainy vs clean {}",
            rain.streak_count,
            report.summary_line()
        );
        if preset == "heavy" {
            write_frames(&clean, out.join("clean"), FrameFormat::Png)?;
            let written = write_frames(&rainy, out.join("rainy"), FrameFormat::Png)?;
            println!("wrote {} rainy frames under {}", written.len(), out.display());
        }
    }
    Ok(())
}
