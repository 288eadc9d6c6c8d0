use crate::error::{Error, Result};

/// Edge reflection without repeating the edge sample:
/// `-1 → 1`, `len → len − 2`.
pub fn reflect(index: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let i = index.rem_euclid(period);
    if i < len as isize {
        i as usize
    } else {
        (period - i) as usize
    }
}

/// Frame indices of one window and the clip index of its center frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub frames: Vec<usize>,
    pub center: usize,
}

/// Splits a clip of `len` frames into `n`-frame windows.
///
/// With `stride == 1` every frame becomes a center once and indices past
/// either end are reflected. With a larger stride windows start at
/// `0, stride, 2·stride, …`; when the last full window leaves frames
/// uncovered, one more window starts at the next stride step and is
/// completed by reflection.
pub fn make_windows(len: usize, n: usize, stride: usize) -> Result<Vec<Window>> {
    if n == 0 || stride == 0 {
        return Err(Error::Config(format!("window {n} and stride {stride} must be ≥ 1")));
    }
    if len < n {
        return Err(Error::Contract(format!(
            "clip of {len} frames is shorter than the window of {n}"
        )));
    }
    let offset = (n - 1) / 2;
    let window_at = |start: isize| -> Window {
        let frames: Vec<usize> = (0..n as isize).map(|j| reflect(start + j, len)).collect();
        Window {
            center: frames[offset],
            frames,
        }
    };
    if stride == 1 {
        return Ok((0..len as isize).map(|c| window_at(c - offset as isize)).collect());
    }
    let mut windows = Vec::new();
    let mut start = 0;
    while start + n <= len {
        windows.push(window_at(start as isize));
        start += stride;
    }
    let covered = windows.last().map_or(0, |w| w.frames[n - 1] + 1);
    if covered < len {
        windows.push(window_at(start as isize));
    }
    Ok(windows)
}
