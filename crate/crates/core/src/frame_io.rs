//! Frame sequences: loading, validation and the raw/PGM on-disk formats.
//!
//! Two input layouts are understood:
//!
//! * a directory of PGM (binary P5, maxval 255) or PNG frames, taken in
//!   strict lexicographic filename order;
//! * a raw `Y8` file (`<name>.y8`, one byte per pixel, frames back to back)
//!   with a sidecar `<name>.y8.meta` holding `width=`, `height=` and `fps=`
//!   lines.
//!
//! Intensities are stored as reals in `[0, 1]` (8-bit values divided by 255).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::plane::Plane;

/// A single grayscale frame.
pub type Frame = Plane;

/// Time-ordered grayscale frames sampled at `fs_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    fs_hz: f64,
}

impl FrameSequence {
    /// Validates that the sequence is non-empty and every frame shares the
    /// dimensions of the first one.
    pub fn new(frames: Vec<Frame>, fs_hz: f64) -> Result<Self> {
        if !(fs_hz.is_finite() && fs_hz > 0.0) {
            return Err(Error::InvalidConfig(format!("frame rate {fs_hz} must be > 0")));
        }
        let first = frames.first().ok_or(Error::EmptySequence)?;
        let (want_w, want_h) = first.dims();
        if want_w == 0 || want_h == 0 {
            return Err(Error::EmptySequence);
        }
        for (index, f) in frames.iter().enumerate() {
            let (got_w, got_h) = f.dims();
            if (got_w, got_h) != (want_w, want_h) {
                return Err(Error::MixedDimensions {
                    index,
                    want_w,
                    want_h,
                    got_w,
                    got_h,
                });
            }
        }
        Ok(Self { frames, fs_hz })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn fs_hz(&self) -> f64 {
        self.fs_hz
    }

    /// Sampling period `T_s = 1 / f_s`.
    pub fn period_s(&self) -> f64 {
        1.0 / self.fs_hz
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    /// Time stamp of frame `n`.
    pub fn time_of(&self, n: usize) -> f64 {
        n as f64 / self.fs_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 / self.fs_hz
    }

    /// The same `w x h` block cut out of every frame.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> FrameSequence {
        let frames = self.frames.iter().map(|f| f.crop(x0, y0, w, h)).collect();
        FrameSequence {
            frames,
            fs_hz: self.fs_hz,
        }
    }

    /// Frames `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> FrameSequence {
        FrameSequence {
            frames: self.frames[start..end].to_vec(),
            fs_hz: self.fs_hz,
        }
    }
}

/// Luma from three equally sized R, G, B planes using Rec.601 weights.
pub fn to_grayscale(r: &Plane, g: &Plane, b: &Plane) -> Result<Frame> {
    if r.dims() != g.dims() || r.dims() != b.dims() {
        return Err(Error::ChannelMismatch);
    }
    let data = r
        .data()
        .iter()
        .zip(g.data())
        .zip(b.data())
        .map(|((&r, &g), &b)| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect();
    Ok(Plane::from_vec(r.width(), r.height(), data))
}

/// Loads a sequence from a frame directory or a `.y8` file.
///
/// For directories `fs_hz` is required. For raw files the sidecar frame rate
/// is used unless `fs_hz` overrides it.
pub fn load_sequence(path: &Path, fs_hz: Option<f64>) -> Result<FrameSequence> {
    if path.is_dir() {
        let fs = fs_hz.ok_or_else(|| {
            Error::InvalidConfig("a frame rate is required for frame directories".into())
        })?;
        load_directory(path, fs)
    } else {
        let (seq_fs, frames) = read_y8(path)?;
        FrameSequence::new(frames, fs_hz.unwrap_or(seq_fs))
    }
}

fn load_directory(dir: &Path, fs_hz: f64) -> Result<FrameSequence> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
                    .unwrap_or(false)
        })
        .collect();
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    let frames = paths
        .iter()
        .map(|p| read_image_frame(p))
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, fs_hz)
}

/// Reads one PGM or PNG file. Color images go through [`to_grayscale`].
pub fn read_image_frame(path: &Path) -> Result<Frame> {
    let unreadable = |reason: String| Error::UnreadableFrame {
        path: path.to_path_buf(),
        reason,
    };
    let img = image::open(path).map_err(|e| unreadable(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        image::DynamicImage::ImageLuma8(buf) => Ok(Plane::from_vec(
            w,
            h,
            buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        )),
        other => {
            let rgb = other.to_rgb8().into_raw();
            let channel =
                |c: usize| Plane::from_vec(w, h, rgb.iter().skip(c).step_by(3).map(|&v| v as f64 / 255.0).collect());
            to_grayscale(&channel(0), &channel(1), &channel(2))
        }
    }
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Contents of a `.y8.meta` sidecar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Y8Meta {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
}

impl Y8Meta {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let (mut width, mut height, mut fps) = (None, None, None);
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("malformed line `{line}`"))?;
            let value = value.trim();
            match key.trim() {
                "width" => width = Some(value.parse::<usize>().map_err(|e| e.to_string())?),
                "height" => height = Some(value.parse::<usize>().map_err(|e| e.to_string())?),
                "fps" => fps = Some(value.parse::<f64>().map_err(|e| e.to_string())?),
                other => return Err(format!("unknown key `{other}`")),
            }
        }
        match (width, height, fps) {
            (Some(width), Some(height), Some(fps)) if width > 0 && height > 0 && fps > 0.0 => {
                Ok(Self { width, height, fps })
            }
            _ => Err("width, height and fps must all be present and positive".into()),
        }
    }

    pub fn render(&self) -> String {
        format!("width={}\nheight={}\nfps={}\n", self.width, self.height, self.fps)
    }
}

fn read_y8(path: &Path) -> Result<(f64, Vec<Frame>)> {
    let unreadable = |reason: String| Error::UnreadableFrame {
        path: path.to_path_buf(),
        reason,
    };
    let meta_file = meta_path(path);
    let meta_text = fs::read_to_string(&meta_file)
        .map_err(|e| unreadable(format!("sidecar {}: {e}", meta_file.display())))?;
    let meta = Y8Meta::parse(&meta_text).map_err(unreadable)?;
    let bytes = fs::read(path).map_err(|e| unreadable(e.to_string()))?;
    let frame_len = meta.width * meta.height;
    if bytes.is_empty() {
        return Err(Error::EmptySequence);
    }
    if bytes.len() % frame_len != 0 {
        return Err(unreadable(format!(
            "{} bytes is not a whole number of {}x{} frames",
            bytes.len(),
            meta.width,
            meta.height
        )));
    }
    let frames = bytes
        .chunks_exact(frame_len)
        .map(|c| {
            Plane::from_vec(
                meta.width,
                meta.height,
                c.iter().map(|&v| v as f64 / 255.0).collect(),
            )
        })
        .collect();
    Ok((meta.fps, frames))
}

/// Quantizes a `[0, 1]` intensity to 8 bits.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes `seq` as `<path>` plus `<path>.meta`.
pub fn save_y8(seq: &FrameSequence, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(seq.len() * seq.width() * seq.height());
    for f in seq.frames() {
        bytes.extend(f.data().iter().map(|&v| quantize(v)));
    }
    fs::write(path, bytes)?;
    let meta = Y8Meta {
        width: seq.width(),
        height: seq.height(),
        fps: seq.fs_hz(),
    };
    fs::write(meta_path(path), meta.render())?;
    Ok(())
}

/// Writes a binary P5 PGM with maxval 255.
pub fn save_pgm(frame: &Frame, path: &Path) -> Result<()> {
    let mut out = fs::File::create(path)?;
    write!(out, "P5\n{} {}\n255\n", frame.width(), frame.height())?;
    let bytes: Vec<u8> = frame.data().iter().map(|&v| quantize(v)).collect();
    out.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_input_is_fixed_point() {
        let half = Plane::filled(4, 3, 0.5);
        let g = to_grayscale(&half, &half, &half).unwrap();
        assert!(g.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn pure_red_gives_red_weight() {
        let one = Plane::filled(2, 2, 1.0);
        let zero = Plane::zeros(2, 2);
        let g = to_grayscale(&one, &zero, &zero).unwrap();
        assert!(g.data().iter().all(|&v| (v - 0.299).abs() < 1e-15));
        let black = to_grayscale(&zero, &zero, &zero).unwrap();
        assert!(black.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch() {
        let a = Plane::zeros(2, 2);
        let b = Plane::zeros(3, 2);
        assert!(matches!(to_grayscale(&a, &b, &a), Err(Error::ChannelMismatch)));
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let frames = vec![Plane::zeros(64, 64), Plane::zeros(32, 32), Plane::zeros(64, 64)];
        match FrameSequence::new(frames, 25.0) {
            Err(Error::MixedDimensions { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(FrameSequence::new(vec![], 25.0), Err(Error::EmptySequence)));
    }

    #[test]
    fn meta_parsing() {
        let m = Y8Meta::parse("width=360\nheight=288\nfps=25\n").unwrap();
        assert_eq!(m, Y8Meta { width: 360, height: 288, fps: 25.0 });
        assert_eq!(Y8Meta::parse(&m.render()).unwrap(), m);
        assert!(Y8Meta::parse("width=3\nheight=2\n").is_err());
        assert!(Y8Meta::parse("width=3\nheight=2\nfps=25\ncolor=1").is_err());
    }

    #[test]
    fn quantize_rounds_and_clamps() {
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(128.0 / 255.0), 128);
    }
}
