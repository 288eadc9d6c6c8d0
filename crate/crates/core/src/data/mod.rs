//! Synthetic training material and frame directories.
//!
//! Clean clips are procedural moving textures; rain is an additive layer of
//! blurred bright streaks that drift with a fixed velocity. Frames are
//! `[3, H, W]` `f32` tensors with values in `[0, 1]`.

mod augment;
mod clip;
mod io;
mod rain;
mod synth;
mod window;

pub use augment::{augment, crop_frame, flip_horizontal, AugmentConfig, FlipMode, FramePair};
pub use clip::{ClipRole, VideoClip, DEFAULT_FPS};
pub use io::{natural_key, read_frames, write_frames, FrameFormat, MANIFEST};
pub use rain::{add_rain, streak_layer, RainParams};
pub use synth::{synth_clean_clip, synth_pair};
pub use window::{make_windows, reflect, Window};
