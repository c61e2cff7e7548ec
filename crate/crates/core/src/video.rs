//! RGB clips: `T` frames of `[h, w, 3]` values in `[0, 1]`, read from and
//! written to a directory of `%06d.png` files or raw interleaved RGB8 with a
//! `<file>.dims` sidecar holding `frames height width`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::PatchCoord;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VideoFormat {
    PngDir,
    Raw,
}

impl VideoFormat {
    /// Directories hold PNG frames; anything else is raw RGB8.
    pub fn detect(path: &Path) -> Self {
        if path.is_dir() || path.extension().is_none() && !path.exists() {
            VideoFormat::PngDir
        } else {
            VideoFormat::Raw
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "png" => Ok(VideoFormat::PngDir),
            "raw" => Ok(VideoFormat::Raw),
            _ => Err(Error::usage(format!("unknown video format '{s}' (png | raw)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    height: usize,
    width: usize,
    frames: Vec<Tensor<f32>>,
    pub format: VideoFormat,
}

pub const CHANNELS: usize = 3;

impl VideoClip {
    pub fn new(frames: Vec<Tensor<f32>>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::Video("clip has no frames".into()))?;
        let (h, w, c) = first.hwc().map_err(|e| Error::Video(e.to_string()))?;
        for (t, f) in frames.iter().enumerate() {
            if f.shape() != [h, w, CHANNELS] || c != CHANNELS {
                return Err(Error::Video(format!(
                    "frame {t} has shape {:?}, expected [{h}, {w}, {CHANNELS}]",
                    f.shape()
                )));
            }
        }
        Ok(Self {
            height: h,
            width: w,
            frames,
            format: VideoFormat::PngDir,
        })
    }

    pub fn from_fn(frames: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Result<Self> {
        let frames = (0..frames)
            .map(|t| {
                Tensor::from_fn(vec![height, width, CHANNELS], |i| {
                    f(t, i / (width * CHANNELS), i / CHANNELS % width, i % CHANNELS)
                })
            })
            .collect();
        Self::new(frames)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Tensor<f32>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Tensor<f32> {
        &self.frames[t]
    }

    pub fn pixels(&self) -> usize {
        self.len() * self.height * self.width
    }

    /// The `m x m` target of one patch.
    pub fn patch(&self, p: PatchCoord, m: usize) -> Result<Tensor<f32>> {
        self.frames
            .get(p.t)
            .ok_or_else(|| Error::usage(format!("frame {} out of range", p.t)))?
            .crop(p.j * m, p.i * m, m, m)
    }

    /// Frames `range` of this clip.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::usage(format!(
                "frame range {}..{} outside 0..{}",
                range.start,
                range.end,
                self.len()
            )));
        }
        let mut c = Self::new(self.frames[range].to_vec())?;
        c.format = self.format;
        Ok(c)
    }

    /// Interleaved RGB8, frame after frame.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.frames.iter().flat_map(|f| f.data().iter().map(|&v| to_u8(v))).collect()
    }

    pub fn from_rgb8(frames: usize, height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        let per = height * width * CHANNELS;
        if frames == 0 || per == 0 {
            return Err(Error::Video("clip has no pixels".into()));
        }
        if bytes.len() != frames * per {
            return Err(Error::Video(format!(
                "raw data has {} bytes, expected {frames}x{height}x{width}x3 = {}",
                bytes.len(),
                frames * per
            )));
        }
        let frames = bytes
            .chunks_exact(per)
            .map(|c| Tensor::new(vec![height, width, CHANNELS], c.iter().map(|&b| from_u8(b)).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames)
    }

    /// Every value rounded to the nearest 8-bit level.
    pub fn quantized_8bit(&self) -> Self {
        let mut c = self.clone();
        for f in &mut c.frames {
            for v in f.data_mut() {
                *v = from_u8(to_u8(*v));
            }
        }
        c
    }
}

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn from_u8(b: u8) -> f32 {
    b as f32 / 255.0
}

fn dims_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".dims");
    PathBuf::from(s)
}

fn frame_name(t: usize) -> String {
    format!("{t:06}.png")
}

pub fn read_video(path: &Path, format: VideoFormat) -> Result<VideoClip> {
    let mut clip = match format {
        VideoFormat::PngDir => read_png_dir(path)?,
        VideoFormat::Raw => {
            let dp = dims_path(path);
            let text = fs::read_to_string(&dp).map_err(|e| Error::io(&dp, e))?;
            let dims: Vec<usize> = text
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Video(format!("{}: expected 'frames height width'", dp.display())))?;
            let [t, h, w] = dims[..] else {
                return Err(Error::Video(format!("{}: expected 'frames height width'", dp.display())));
            };
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            VideoClip::from_rgb8(t, h, w, &bytes)?
        }
    };
    clip.format = format;
    Ok(clip)
}

fn read_png_dir(dir: &Path) -> Result<VideoClip> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut indices = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let name = e.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".png") {
            if stem.len() == 6 {
                if let Ok(t) = stem.parse::<usize>() {
                    indices.push(t);
                }
            }
        }
    }
    if indices.is_empty() {
        return Err(Error::Video(format!("{}: no %06d.png frames", dir.display())));
    }
    indices.sort_unstable();
    if let Some(t) = (0..indices.len()).find(|&t| indices[t] != t) {
        return Err(Error::Video(format!("{}: frame {} is missing", dir.display(), frame_name(t))));
    }
    let mut frames = Vec::with_capacity(indices.len());
    let mut dims = None;
    for t in indices {
        let p = dir.join(frame_name(t));
        let img = image::open(&p)
            .map_err(|e| Error::Video(format!("{}: {e}", p.display())))?
            .into_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        if *dims.get_or_insert((h, w)) != (h, w) {
            let (eh, ew) = dims.unwrap();
            return Err(Error::Video(format!(
                "{}: {w}x{h} differs from first frame {ew}x{eh}",
                p.display()
            )));
        }
        let data = img.into_raw().into_iter().map(from_u8).collect();
        frames.push(Tensor::new(vec![h, w, CHANNELS], data)?);
    }
    VideoClip::new(frames)
}

pub fn write_video(clip: &VideoClip, path: &Path, format: VideoFormat) -> Result<()> {
    match format {
        VideoFormat::PngDir => {
            fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
            for (t, f) in clip.frames.iter().enumerate() {
                let p = path.join(frame_name(t));
                let bytes: Vec<u8> = f.data().iter().map(|&v| to_u8(v)).collect();
                image::save_buffer(&p, &bytes, clip.width as u32, clip.height as u32, image::ColorType::Rgb8)
                    .map_err(|e| Error::Video(format!("{}: {e}", p.display())))?;
            }
        }
        VideoFormat::Raw => {
            fs::write(path, clip.to_rgb8()).map_err(|e| Error::io(path, e))?;
            let dp = dims_path(path);
            fs::write(&dp, format!("{} {} {}\n", clip.len(), clip.height, clip.width))
                .map_err(|e| Error::io(&dp, e))?;
        }
    }
    Ok(())
}

/// Two-cycle colour waves and a sawtooth ramp drifting across the frame;
/// `T` frames of `h x w`. The desk-scale overfitting target. The
/// sawtooth's hard edge moves by a fraction of a pixel per frame.
pub fn moving_gradient(frames: usize, height: usize, width: usize) -> VideoClip {
    use std::f32::consts::TAU;
    VideoClip::from_fn(frames, height, width, |t, y, x, c| {
        let (u, v) = (x as f32 / width as f32, y as f32 / height as f32);
        let s = t as f32 / frames as f32;
        let val = match c {
            0 => 0.5 + 0.4 * (TAU * (2.0 * u + 0.5 * s)).sin() * (0.5 + 0.5 * v),
            1 => 0.2 + 0.6 * ((u + v) * 2.0 + 0.75 * s).fract(),
            _ => 0.5 + 0.35 * (TAU * (2.0 * v - s) + 3.0 * u).cos(),
        };
        val.clamp(0.0, 1.0)
    })
    .expect("non-empty synthetic clip")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clip.rgb");
        let clip = moving_gradient(3, 8, 12).quantized_8bit();
        write_video(&clip, &p, VideoFormat::Raw).unwrap();
        let back = read_video(&p, VideoFormat::Raw).unwrap();
        assert_eq!(back.to_rgb8(), clip.to_rgb8());
        assert_eq!(back.frames(), clip.frames());
    }

    #[test]
    fn png_round_trip_within_half_step() {
        let dir = tempfile::tempdir().unwrap();
        let clip = moving_gradient(8, 64, 64);
        write_video(&clip, dir.path(), VideoFormat::PngDir).unwrap();
        let back = read_video(dir.path(), VideoFormat::PngDir).unwrap();
        assert_eq!(back.len(), 8);
        for (a, b) in back.frames().iter().zip(clip.frames()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }

    #[test]
    fn missing_and_inconsistent_frames_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_video(dir.path(), VideoFormat::PngDir), Err(Error::Video(_))));
        let clip = moving_gradient(3, 8, 8);
        write_video(&clip, dir.path(), VideoFormat::PngDir).unwrap();
        fs::remove_file(dir.path().join("000001.png")).unwrap();
        let err = read_video(dir.path(), VideoFormat::PngDir).unwrap_err().to_string();
        assert!(err.contains("000001.png"), "{err}");
        write_video(&moving_gradient(2, 8, 10), dir.path(), VideoFormat::PngDir).unwrap();
        let err = read_video(dir.path(), VideoFormat::PngDir).unwrap_err().to_string();
        assert!(err.contains("000002.png"), "{err}");
    }
}
