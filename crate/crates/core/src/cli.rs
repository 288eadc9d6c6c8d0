//! Command-line front end. Exit codes: 0 success, 2 usage or invalid
//! input, 3 I/O, 4 training failure, 5 verification failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::ConfigMap;
use crate::data::{read_frames, synth_pair, write_frames, ClipRole, FrameFormat, RainParams};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::metrics::MetricReport;
use crate::trainer::{
    count_flops, count_params, derain_video, evaluate_loss, initial_checkpoint, train_stage1, train_stage2,
    window_flops, Checkpoint, LossLog, TrainConfig, TrainingData,
};
use crate::verify::{check, CheckTarget, GRADCHECK_TOLERANCE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;
pub const EXIT_VERIFICATION: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "estinet", version, about = "Video rain-streak removal")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Ppm,
    Png,
}

impl From<Format> for FrameFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Ppm => FrameFormat::Ppm,
            Format::Png => FrameFormat::Png,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    All,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic clean clip and its rainy version to OUT/clean and OUT/rainy.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        /// Frame size as HxW; both must be multiples of 16.
        #[arg(long, default_value = "64x64")]
        size: String,
        #[arg(long, default_value = "default")]
        rain_preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "ppm")]
        format: Format,
    },
    /// Train one or both stages.
    Train {
        /// `key = value` or JSON configuration file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        stage: Stage,
        #[arg(long)]
        out: PathBuf,
        /// First-stage checkpoint to continue from (required for `--stage 2`).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Loss log; defaults to OUT with a `.losses.csv` suffix.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        variant: Option<String>,
        /// Extra `key=value` overrides, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Derain every frame of a directory.
    Derain {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "ppm")]
        format: Format,
    },
    /// Per-frame PSNR/SSIM of predicted frames against reference frames.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        /// Comma-separated list of engine, sicm, stim, estm, or all.
        #[arg(long, default_value = "all")]
        module: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parameter and FLOP counts of a configuration.
    Count {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "64x64")]
        size: String,
        /// Clip length for the whole-video FLOP count.
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Checkpoint(_) => EXIT_IO,
        Error::Training { .. } | Error::Numerical(_) => EXIT_TRAINING,
        Error::Shape(_) | Error::Contract(_) | Error::Config(_) | Error::Range(_) => EXIT_USAGE,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn parse_size(text: &str) -> Result<(usize, usize)> {
    let parsed = text
        .split_once(['x', 'X'])
        .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)));
    parsed.ok_or_else(|| Error::Config(format!("size `{text}` is not HxW")))
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ConfigMap> {
    let mut map = match path {
        Some(p) => ConfigMap::load(p)?,
        None => ConfigMap::new(),
    };
    for o in overrides {
        map.set_override(o)?;
    }
    Ok(map)
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    let stdout = Path::new("<stdout>");
    match command {
        Command::Synth {
            out: dir,
            frames,
            size,
            rain_preset,
            seed,
            format,
        } => {
            let (h, w) = parse_size(&size)?;
            let rain = RainParams::preset(&rain_preset, h, w)?.with_seed(seed.wrapping_add(1_000_003));
            let (clean, rainy) = synth_pair(seed, frames, h, w, &rain)?;
            write_frames(&clean, dir.join("clean"), format.into())?;
            write_frames(&rainy, dir.join("rainy"), format.into())?;
            io(
                stdout,
                writeln!(out, "wrote {frames} frames of {h}x{w} to {}", dir.display()),
            )?;
        }
        Command::Train {
            config,
            stage,
            out: ckpt_path,
            resume,
            loss_csv,
            seed,
            variant,
            overrides,
        } => {
            let mut map = load_config(Some(&config), &overrides)?;
            if let Some(seed) = seed {
                map.set("seed", seed.to_string());
            }
            if let Some(v) = variant {
                map.set("variant", v);
            }
            let config = TrainConfig::from_map(map)?;
            let data = TrainingData::from_source(&config.data)?;
            let mut log = LossLog::default();
            let checkpoint = match (stage, resume) {
                (Stage::One, None) => train_stage1(&config, &data, &mut log)?,
                (Stage::All, None) => {
                    let first = train_stage1(&config, &data, &mut log)?;
                    train_stage2(first, &config, &data, &mut log)?
                }
                (Stage::Two, Some(path)) => train_stage2(Checkpoint::load(path)?, &config, &data, &mut log)?,
                (Stage::Two, None) => return Err(Error::Config("--stage 2 needs --resume CKPT".into())),
                (Stage::One | Stage::All, Some(_)) => {
                    return Err(Error::Config("only --stage 2 continues from a checkpoint".into()))
                }
            };
            checkpoint.save(&ckpt_path)?;
            let csv_path = loss_csv.unwrap_or_else(|| {
                let mut p = ckpt_path.clone().into_os_string();
                p.push(".losses.csv");
                p.into()
            });
            io(&csv_path, std::fs::write(&csv_path, log.to_csv()))?;
            let eval = evaluate_loss(&checkpoint, &data, LossWeights::new(config.alpha)?)?;
            let last = log.rows.last();
            io(
                stdout,
                writeln!(
                    out,
                    "iterations={} last_l_final={} eval_l_sti={:.6e} eval_l_est={:.6e} eval_l_final={:.6e}",
                    log.rows.len(),
                    last.map_or("-".into(), |r| format!("{:.6e}", r.l_final)),
                    eval.l_sti,
                    eval.l_est,
                    eval.l_final
                ),
            )?;
        }
        Command::Derain {
            ckpt,
            input,
            out: dir,
            format,
        } => {
            let checkpoint = Checkpoint::load(&ckpt)?;
            let rainy = read_frames(&input, ClipRole::Rainy)?;
            let derained = derain_video(&checkpoint, &rainy)?;
            write_frames(&derained, &dir, format.into())?;
            io(
                stdout,
                writeln!(out, "derained {} frames into {}", derained.len(), dir.display()),
            )?;
        }
        Command::Eval {
            pred,
            reference,
            report,
        } => {
            let p = read_frames(&pred, ClipRole::Derained)?;
            let r = read_frames(&reference, ClipRole::Clean)?;
            let metrics = MetricReport::evaluate(p.frames(), r.frames())?;
            io(&report, std::fs::write(&report, metrics.to_csv()))?;
            io(
                stdout,
                writeln!(out, "{}{}", metrics.to_table(), metrics.summary_line()),
            )?;
        }
        Command::Gradcheck { module, seed } => {
            let mut failed = None;
            for target in CheckTarget::parse_list(&module)? {
                let report = check(target, seed)?;
                let worst = report.worst().map_or("-".to_string(), |w| w.name.clone());
                let pass = report.passes(GRADCHECK_TOLERANCE);
                io(
                    stdout,
                    writeln!(
                        out,
                        "{target}: {} max_rel_error={:.3e} worst={worst} params={}",
                        if pass { "ok" } else { "FAILED" },
                        report.max_error(),
                        report.entries.len()
                    ),
                )?;
                if !pass && failed.is_none() {
                    failed = Some(worst);
                }
            }
            if let Some(name) = failed {
                io(stdout, writeln!(out, "gradient check failed; worst parameter {name}"))?;
                return Ok(EXIT_VERIFICATION);
            }
        }
        Command::Count {
            config,
            size,
            frames,
            overrides,
        } => {
            let config = TrainConfig::from_map(load_config(config.as_deref(), &overrides)?)?;
            let (h, w) = parse_size(&size)?;
            let params = count_params(&initial_checkpoint(&config)?);
            let window = window_flops(&config.model, h, w)?;
            let video = count_flops(&config.model, h, w, frames)?;
            io(
                stdout,
                writeln!(
                    out,
                    "params={params} window_flops={window} video_flops={video} size={h}x{w} frames={frames}"
                ),
            )?;
        }
    }
    Ok(EXIT_OK)
}
