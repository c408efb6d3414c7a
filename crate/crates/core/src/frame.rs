//! Grayscale frames, clips and their on-disk formats (binary PGM frames
//! listed by a JSON manifest).

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Frame(format!("empty frame {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Frame(format!(
                "{width}x{height} frame needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=255.0).contains(v)) {
            return Err(Error::Frame(format!(
                "value {} at index {i} outside [0, 255]",
                data[i]
            )));
        }
        Ok(GrayFrame {
            width,
            height,
            data,
        })
    }

    /// Builds a frame from values already known to be in range.
    pub(crate) fn from_clamped(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        GrayFrame {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_u8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Self::new(width, height, pixels.iter().map(|&p| p as f32).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn same_size(&self, other: &GrayFrame) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Encodes as binary PGM, rounding to the nearest integer intensity.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
        out
    }

    /// Returns the frame at the requested size, borrowing when no resampling
    /// is needed.
    pub fn at_size(&self, width: usize, height: usize) -> Cow<'_, GrayFrame> {
        if self.width == width && self.height == height {
            Cow::Borrowed(self)
        } else {
            Cow::Owned(resize_bilinear(self, width, height))
        }
    }
}

/// Rec. 601 luma, clamped to `[0, 255]`.
pub fn luma_from_rgb(r: f64, g: f64, b: f64) -> f64 {
    (0.299 * r + 0.587 * g + 0.114 * b).clamp(0.0, 255.0)
}

/// Parses an 8-bit binary (P5) PGM image.
pub fn load_pgm(bytes: &[u8]) -> Result<GrayFrame> {
    let mut pos = 0;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Pgm("missing P5 magic".into()));
    }
    pos += 2;
    let mut fields = [0usize; 3];
    for (i, name) in ["width", "height", "maxval"].iter().enumerate() {
        // whitespace and `#` comments may separate header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Pgm(format!("malformed header: expected {name}")));
        }
        fields[i] = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Pgm(format!("malformed header: bad {name}")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::Pgm(format!("malformed header: zero size {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::Pgm(format!("unsupported maxval {maxval}, expected 255")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Pgm("malformed header: no separator before pixel data".into()));
    }
    pos += 1;
    let needed = width * height;
    let pixels = &bytes[pos..];
    if pixels.len() < needed {
        return Err(Error::Pgm(format!(
            "truncated pixel data: {width}x{height} needs {needed} bytes, found {}",
            pixels.len()
        )));
    }
    GrayFrame::from_u8(width, height, &pixels[..needed])
}

pub fn read_pgm(path: &Path) -> Result<GrayFrame> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_pgm(&bytes).map_err(|e| match e {
        Error::Pgm(msg) => Error::Pgm(format!("{}: {msg}", path.display())),
        e => e,
    })
}

pub fn write_pgm(path: &Path, frame: &GrayFrame) -> Result<()> {
    std::fs::write(path, frame.to_pgm()).map_err(|e| Error::io(path, e))
}

/// Bilinear resampling with pixel-center alignment: destination pixel `d`
/// samples source coordinate `(d + 0.5) * scale - 0.5`, clamped to the image.
pub fn resize_bilinear(frame: &GrayFrame, out_w: usize, out_h: usize) -> GrayFrame {
    assert!(out_w >= 1 && out_h >= 1, "target size must be positive");
    let src: Vec<f64> = frame.data.iter().map(|&v| v as f64).collect();
    let out = resample(&src, frame.width, frame.height, out_w, out_h);
    GrayFrame::from_clamped(out_w, out_h, out.into_iter().map(|v| v as f32).collect())
}

/// Source coordinate and blend weight for each destination index.
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    let max = (src_len - 1) as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

pub(crate) fn resample(src: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    if w == out_w && h == out_h {
        return src.to_vec();
    }
    let xs = axis_taps(w, out_w);
    let ys = axis_taps(h, out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        let r0 = &src[y0 * w..(y0 + 1) * w];
        let r1 = &src[y1 * w..(y1 + 1) * w];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bot - top) * fy);
        }
    }
    out
}

/// An ordered sequence of same-sized frames with a frame rate.
#[derive(Debug, Clone)]
pub struct Clip {
    id: String,
    fps: f64,
    frames: Vec<GrayFrame>,
}

impl Clip {
    pub fn new(id: impl Into<String>, fps: f64, frames: Vec<GrayFrame>) -> Result<Self> {
        let id = id.into();
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Clip(format!("{id}: fps must be positive, got {fps}")));
        }
        if frames.len() < 2 {
            return Err(Error::Clip(format!(
                "{id}: need at least 2 frames, got {}",
                frames.len()
            )));
        }
        if let Some(i) = frames.iter().position(|f| !f.same_size(&frames[0])) {
            return Err(Error::Clip(format!(
                "{id}: frame {i} is {}x{}, frame 0 is {}x{}",
                frames[i].width, frames[i].height, frames[0].width, frames[0].height
            )));
        }
        Ok(Clip { id, fps, frames })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &[GrayFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    /// Frames `range` resampled to the working resolution.
    pub fn working_frames(
        &self,
        range: std::ops::RangeInclusive<usize>,
        width: usize,
        height: usize,
        exec: Exec,
    ) -> Vec<Cow<'_, GrayFrame>> {
        let frames = &self.frames;
        exec.map_range(*range.start()..*range.end() + 1, |i| frames[i].at_size(width, height))
    }
}

/// JSON manifest describing a clip stored as a PGM sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub id: String,
    pub fps: f64,
    #[serde(rename = "frames")]
    pub frame_files: Vec<PathBuf>,
}

impl ClipManifest {
    /// Reads a manifest, resolving relative frame paths against its directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: ClipManifest = serde_json::from_str(&text)?;
        manifest.validate()?;
        let base = path.parent().unwrap_or(Path::new(""));
        for f in &mut manifest.frame_files {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_files.is_empty() {
            return Err(Error::Clip(format!("{}: manifest lists no frames", self.id)));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Clip(format!("{}: fps must be positive", self.id)));
        }
        Ok(())
    }
}

pub fn load_clip(manifest: &ClipManifest) -> Result<Clip> {
    manifest.validate()?;
    let mut frames: Vec<GrayFrame> = Vec::with_capacity(manifest.frame_files.len());
    for (i, path) in manifest.frame_files.iter().enumerate() {
        let frame = read_pgm(path).map_err(|e| {
            Error::Clip(format!("{}: frame {i} ({}): {e}", manifest.id, path.display()))
        })?;
        if let Some(first) = frames.first() {
            if !frame.same_size(first) {
                return Err(Error::Clip(format!(
                    "{}: frame {i} is {}x{}, frame 0 is {}x{}",
                    manifest.id, frame.width, frame.height, first.width, first.height
                )));
            }
        }
        frames.push(frame);
    }
    Clip::new(manifest.id.clone(), manifest.fps, frames)
}
