use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{ClipRole, VideoClip};
use crate::engine::Tensor;
use crate::error::{Error, Result};

/// Plain-text index listing frame file names in order, one per line.
pub const MANIFEST: &str = "manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FrameFormat {
    /// Binary PPM (P6).
    #[default]
    Ppm,
    Png,
}

impl FrameFormat {
    pub fn extension(self) -> &'static str {
        match self {
            FrameFormat::Ppm => "ppm",
            FrameFormat::Png => "png",
        }
    }
}

/// Sort key that orders embedded digit runs by value:
/// `frame_2 < frame_10`.
pub fn natural_key(name: &str) -> Vec<(String, u128)> {
    let mut key = Vec::new();
    let mut text = String::new();
    let mut chars = name.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_ascii_digit() {
            let mut digits = String::new();
            while let Some(&d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(d);
                chars.next();
            }
            key.push((std::mem::take(&mut text), digits.parse().unwrap_or(u128::MAX)));
        } else {
            text.push(c);
            chars.next();
        }
    }
    key.push((text, 0));
    key
}

fn is_frame(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm") || e.eq_ignore_ascii_case("png"))
}

/// Frame files of a directory: the manifest order when one exists,
/// otherwise every `.ppm`/`.png` file in natural order.
fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = dir.join(MANIFEST);
    if manifest.is_file() {
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        return Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| dir.join(l))
            .collect());
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_frame(&path) {
            paths.push(path);
        }
    }
    paths.sort_by_cached_key(|p| natural_key(&p.file_name().unwrap_or_default().to_string_lossy()));
    Ok(paths)
}

/// Reads every frame of a directory, mapping 8-bit values to `[0, 1]`.
pub fn read_frames(dir: impl AsRef<Path>, role: ClipRole) -> Result<VideoClip> {
    let dir = dir.as_ref();
    let paths = frame_paths(dir)?;
    if paths.is_empty() {
        return Err(Error::io(dir, "no frames found"));
    }
    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let frame = read_image(path)?;
        if let Some(first) = frames.first().map(|f: &Tensor<f32>| f.shape().to_vec()) {
            if frame.shape() != first.as_slice() {
                return Err(Error::io(
                    path,
                    format!("frame size {:?} differs from {:?}", &frame.shape()[1..], &first[1..]),
                ));
            }
        }
        frames.push(frame);
    }
    VideoClip::new(frames, role)
}

/// Writes `frame_0001.ext`, `frame_0002.ext`, … and the manifest.
pub fn write_frames(clip: &VideoClip, dir: impl AsRef<Path>, format: FrameFormat) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let digits = clip.len().to_string().len().max(4);
    let mut names = String::new();
    let mut paths = Vec::with_capacity(clip.len());
    for (i, frame) in clip.frames().iter().enumerate() {
        let name = format!("frame_{:0digits$}.{}", i + 1, format.extension());
        let path = dir.join(&name);
        write_image(frame, &path, format)?;
        names.push_str(&name);
        names.push('\n');
        paths.push(path);
    }
    let manifest = dir.join(MANIFEST);
    fs::write(&manifest, names).map_err(|e| Error::io(&manifest, e))?;
    Ok(paths)
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn interleaved(frame: &Tensor<f32>) -> (usize, usize, Vec<u8>) {
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    let plane = h * w;
    let d = frame.data();
    let bytes = (0..plane)
        .flat_map(|i| [quantize(d[i]), quantize(d[plane + i]), quantize(d[2 * plane + i])])
        .collect();
    (h, w, bytes)
}

fn planar(h: usize, w: usize, rgb: &[u8], max: f32) -> Result<Tensor<f32>> {
    let plane = h * w;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, px) in rgb.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px[c] as f32 / max;
        }
    }
    Tensor::from_vec([3, h, w], data)
}

fn write_image(frame: &Tensor<f32>, path: &Path, format: FrameFormat) -> Result<()> {
    let (h, w, bytes) = interleaved(frame);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        FrameFormat::Ppm => {
            write!(out, "P6\n{w} {h}\n255\n").map_err(|e| Error::io(path, e))?;
            out.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        }
        FrameFormat::Png => {
            let mut encoder = png::Encoder::new(&mut out, w as u32, h as u32);
            encoder.set_color(png::ColorType::Rgb);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header().map_err(|e| Error::io(path, e))?;
            writer.write_image_data(&bytes).map_err(|e| Error::io(path, e))?;
            writer.finish().map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_image(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P6") {
        decode_ppm(&bytes).map_err(|m| Error::io(path, m))
    } else {
        decode_png(&bytes).map_err(|m| Error::io(path, m))
    }
}

fn decode_ppm(bytes: &[u8]) -> std::result::Result<Tensor<f32>, String> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated PPM header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("malformed PPM header")?;
    }
    let [w, h, max] = fields;
    if w == 0 || h == 0 || !(1..=255).contains(&max) {
        return Err(format!("unsupported PPM: {w}×{h}, maxval {max}"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("malformed PPM header".into());
    }
    let pixels = &bytes[pos + 1..];
    if pixels.len() < 3 * w * h {
        return Err(format!(
            "PPM holds {} bytes, {}×{} needs {}",
            pixels.len(),
            w,
            h,
            3 * w * h
        ));
    }
    planar(h, w, &pixels[..3 * w * h], max as f32).map_err(|e| e.to_string())
}

fn decode_png(bytes: &[u8]) -> std::result::Result<Tensor<f32>, String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader.output_buffer_size().ok_or("PNG too large")?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (w, h) = (info.width as usize, info.height as usize);
    let buf = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => buf.to_vec(),
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        other => return Err(format!("unsupported PNG color type {other:?}")),
    };
    planar(h, w, &rgb, 255.0).map_err(|e| e.to_string())
}
