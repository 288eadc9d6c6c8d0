use std::fmt;
use std::str::FromStr;

use crate::engine::Tensor;
use crate::error::{shape_err, Error, Result};

pub const DEFAULT_FPS: f32 = 25.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClipRole {
    Clean,
    Rainy,
    Derained,
}

impl fmt::Display for ClipRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClipRole::Clean => "clean",
            ClipRole::Rainy => "rainy",
            ClipRole::Derained => "derained",
        })
    }
}

impl FromStr for ClipRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(ClipRole::Clean),
            "rainy" => Ok(ClipRole::Rainy),
            "derained" => Ok(ClipRole::Derained),
            other => Err(Error::Config(format!("unknown clip role `{other}`"))),
        }
    }
}

/// A sequence of equally sized RGB frames.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    frames: Vec<Tensor<f32>>,
    fps: f32,
    role: ClipRole,
}

impl VideoClip {
    /// Validates shapes and clamps every value into `[0, 1]`.
    pub fn new(frames: Vec<Tensor<f32>>, role: ClipRole) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Contract("a clip needs at least one frame".into()));
        };
        let shape = first.shape().to_vec();
        if shape.len() != 3 || shape[0] != 3 {
            return Err(shape_err!("frames must be [3,H,W], got {:?}", shape));
        }
        let mut frames = frames;
        for (i, f) in frames.iter_mut().enumerate() {
            if f.shape() != shape.as_slice() {
                return Err(shape_err!(
                    "frame {} has shape {:?}, expected {:?}",
                    i,
                    f.shape(),
                    shape
                ));
            }
            if !f.all_finite() {
                return Err(Error::Numerical(format!("frame {i} holds a non-finite value")));
            }
            f.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        Ok(Self {
            frames,
            fps: DEFAULT_FPS,
            role,
        })
    }

    pub fn with_fps(mut self, fps: f32) -> Self {
        self.fps = fps;
        self
    }

    pub fn with_role(mut self, role: ClipRole) -> Self {
        self.role = role;
        self
    }

    pub fn frames(&self) -> &[Tensor<f32>] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> &Tensor<f32> {
        &self.frames[index]
    }

    pub fn into_frames(self) -> Vec<Tensor<f32>> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames[0].shape()[2]
    }

    pub fn fps(&self) -> f32 {
        self.fps
    }

    pub fn role(&self) -> ClipRole {
        self.role
    }
}
