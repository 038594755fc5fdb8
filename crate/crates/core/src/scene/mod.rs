//! On-disk scenes: a JSON manifest next to PNG color, depth and mask rasters.
//! See `docs/FORMATS.md` for the layout.

mod synthetic;

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameRecord;
use crate::image::{Image, Mask};
use crate::model::{Camera, Intrinsics};
use crate::objectives::DepthMode;
use crate::real::Real;

pub use synthetic::{generate_synthetic, MotionFamily, SyntheticScene, SyntheticSpec};

pub const MANIFEST_NAME: &str = "manifest.json";

/// How frame times are mapped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeRule {
    /// `t_i = i / (T − 1)`.
    #[default]
    Index,
    /// Timestamps rescaled so the first frame is 0 and the last is 1.
    Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub image: PathBuf,
    pub depth: PathBuf,
    /// Missing mask keeps every pixel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// Camera-to-world pose; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<[[f64; 4]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics<f64>,
    #[serde(default)]
    pub depth_mode: DepthMode,
    /// Scene units per stored depth unit.
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    #[serde(default)]
    pub time: TimeRule,
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default = "default_far")]
    pub far: f64,
    pub frames: Vec<FrameEntry>,
}

fn default_depth_scale() -> f64 {
    1.0
}

fn default_near() -> f64 {
    0.01
}

fn default_far() -> f64 {
    1000.0
}

/// A loaded sequence with its deterministic train/test split.
#[derive(Debug, Clone)]
pub struct Scene<F> {
    pub root: PathBuf,
    pub manifest: SceneManifest,
    pub frames: Vec<FrameRecord<F>>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One frame in eight goes to the test split, starting mid-period so that
/// test frames are interior to the sequence.
pub fn is_test_frame(index: usize) -> bool {
    index % 8 == 4
}

pub fn split_indices(count: usize) -> (Vec<usize>, Vec<usize>) {
    (0..count).partition(|&i| !is_test_frame(i))
}

/// Normalized time of every frame under the manifest's rule.
pub fn frame_times(manifest: &SceneManifest) -> Result<Vec<f64>> {
    let n = manifest.frames.len();
    let stamps: Vec<Option<f64>> = manifest.frames.iter().map(|f| f.timestamp).collect();
    for i in 1..n {
        if let (Some(a), Some(b)) = (stamps[i - 1], stamps[i]) {
            if !(b > a) {
                return Err(Error::Frame { frame: i, detail: format!("timestamp {b} does not increase past {a}") });
            }
        }
    }
    match manifest.time {
        TimeRule::Index => Ok((0..n).map(|i| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 }).collect()),
        TimeRule::Timestamp => {
            let ts: Vec<f64> = stamps
                .iter()
                .enumerate()
                .map(|(i, s)| s.ok_or_else(|| Error::Frame { frame: i, detail: "missing timestamp".into() }))
                .collect::<Result<_>>()?;
            if let Some(i) = ts.iter().position(|t| !t.is_finite()) {
                return Err(Error::Frame { frame: i, detail: "non-finite timestamp".into() });
            }
            let (first, last) = (ts[0], ts[n - 1]);
            Ok(ts.iter().map(|t| if n > 1 { (t - first) / (last - first) } else { 0.0 }).collect())
        }
    }
}

impl SceneManifest {
    pub fn camera<F: Real>(&self, frame: usize) -> Result<Camera<F>> {
        let k = Intrinsics {
            fx: F::lit(self.intrinsics.fx),
            fy: F::lit(self.intrinsics.fy),
            cx: F::lit(self.intrinsics.cx),
            cy: F::lit(self.intrinsics.cy),
        };
        let pose = self.frames[frame].pose.unwrap_or([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
        Camera::new(k, pose.map(|r| r.map(F::lit)), self.width, self.height, F::lit(self.near), F::lit(self.far))
            .map_err(|e| Error::Frame { frame, detail: e.to_string() })
    }
}

fn open(path: &Path, frame: usize) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::Scene { path: path.to_path_buf(), detail: format!("frame {frame}: {e}") })
}

/// Color byte to `[0, 1]`.
#[inline]
pub fn color_value<F: Real>(byte: u8) -> F {
    F::lit(byte as f64 / 255.0)
}

fn load_frame<F: Real>(root: &Path, manifest: &SceneManifest, i: usize, time: f64) -> Result<FrameRecord<F>> {
    let entry = &manifest.frames[i];
    let (w, h) = (manifest.width, manifest.height);
    let size_err = |what: &str, iw: u32, ih: u32| Error::Frame {
        frame: i,
        detail: format!("{what} raster is {iw}x{ih}, manifest says {w}x{h}"),
    };

    let rgb = open(&root.join(&entry.image), i)?.into_rgb8();
    if (rgb.width() as usize, rgb.height() as usize) != (w, h) {
        return Err(size_err("image", rgb.width(), rgb.height()));
    }
    let image = Image::from_vec(w, h, 3, rgb.as_raw().iter().map(|&b| color_value(b)).collect())?;

    let raw_depth = open(&root.join(&entry.depth), i)?;
    if (raw_depth.width() as usize, raw_depth.height() as usize) != (w, h) {
        return Err(size_err("depth", raw_depth.width(), raw_depth.height()));
    }
    let scale = manifest.depth_scale;
    let depth_values: Vec<F> = match raw_depth {
        DynamicImage::ImageLuma16(d) => d.as_raw().iter().map(|&v| F::lit(v as f64 * scale)).collect(),
        DynamicImage::ImageLuma8(d) => d.as_raw().iter().map(|&v| F::lit(v as f64 * scale)).collect(),
        other => {
            return Err(Error::Frame { frame: i, detail: format!("depth must be single-channel, got {:?}", other.color()) })
        }
    };
    let depth = Image::from_vec(w, h, 1, depth_values)?;

    let mask = match &entry.mask {
        None => Mask::all(w, h),
        Some(p) => {
            let m = open(&root.join(p), i)?.into_luma8();
            if (m.width() as usize, m.height() as usize) != (w, h) {
                return Err(size_err("mask", m.width(), m.height()));
            }
            Mask { width: w, height: h, data: m.as_raw().iter().map(|&v| v != 0).collect() }
        }
    };

    let frame = FrameRecord { index: i, image, depth, mask, camera: manifest.camera(i)?, time: F::lit(time) };
    frame.validate()?;
    Ok(frame)
}

/// Parses and checks the manifest at `path` (a file or a directory holding
/// `manifest.json`). Returns the directory frame paths are relative to.
pub fn read_manifest(path: &Path) -> Result<(PathBuf, SceneManifest)> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::Scene { path: manifest_path.clone(), detail: e.to_string() })?;
    let manifest: SceneManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Scene { path: manifest_path.clone(), detail: e.to_string() })?;
    if manifest.frames.is_empty() {
        return Err(Error::Scene { path: manifest_path, detail: "manifest lists no frames".into() });
    }
    if manifest.depth_scale <= 0.0 || !manifest.depth_scale.is_finite() {
        return Err(Error::Scene { path: manifest_path, detail: "depth_scale must be positive".into() });
    }
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((root, manifest))
}

/// Loads every frame listed in the manifest at `path` (a manifest file or a
/// directory containing `manifest.json`).
pub fn load_scene<F: Real>(path: &Path) -> Result<Scene<F>> {
    let (root, manifest) = read_manifest(path)?;
    let times = frame_times(&manifest)?;
    let frames = (0..manifest.frames.len())
        .into_par_iter()
        .map(|i| load_frame(&root, &manifest, i, times[i]))
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = split_indices(frames.len());
    Ok(Scene { root, manifest, frames, train, test })
}

/// Rounds a frame to what the on-disk format can hold, so that writing and
/// reloading it is lossless.
pub fn quantize_frame<F: Real>(frame: &mut FrameRecord<F>, depth_scale: f64) -> Result<()> {
    for v in &mut frame.image.data {
        *v = color_value(color_byte(*v));
    }
    for v in &mut frame.depth.data {
        *v = F::lit(depth_code(*v, depth_scale, frame.index)? as f64 * depth_scale);
    }
    Ok(())
}

fn color_byte<F: Real>(v: F) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

fn depth_code<F: Real>(v: F, scale: f64, frame: usize) -> Result<u16> {
    let q = (v.as_f64() / scale).round();
    if !(0.0..=u16::MAX as f64).contains(&q) {
        return Err(Error::Frame { frame, detail: format!("depth {} does not fit 16 bits at scale {scale}", v.as_f64()) });
    }
    Ok(q as u16)
}

/// Writes a 3-channel image in `[0, 1]` as an 8-bit RGB PNG.
pub fn save_color_png<F: Real>(path: &Path, image: &Image<F>) -> Result<()> {
    if image.channels != 3 {
        return Err(Error::Shape(format!("color PNG needs 3 channels, got {}", image.channels)));
    }
    let rgb = RgbImage::from_raw(image.width as u32, image.height as u32, image.data.iter().map(|&v| color_byte(v)).collect())
        .ok_or_else(|| Error::Shape("image buffer size".into()))?;
    rgb.save(path)?;
    Ok(())
}

/// Writes a depth map as a 16-bit PNG holding `round(depth / scale)`.
/// `frame` only labels the error when a value does not fit.
pub fn save_depth_png<F: Real>(path: &Path, depth: &Image<F>, scale: f64, frame: usize) -> Result<()> {
    if depth.channels != 1 {
        return Err(Error::Shape(format!("depth PNG needs 1 channel, got {}", depth.channels)));
    }
    let codes = depth.data.iter().map(|&v| depth_code(v, scale, frame)).collect::<Result<Vec<u16>>>()?;
    let png: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(depth.width as u32, depth.height as u32, codes)
        .ok_or_else(|| Error::Shape("depth buffer size".into()))?;
    png.save(path)?;
    Ok(())
}

/// Writes frames as PNG rasters plus a manifest into `dir`. `template`
/// provides intrinsics and depth settings; its frame list is replaced.
pub fn write_scene<F: Real>(dir: &Path, template: &SceneManifest, frames: &[FrameRecord<F>]) -> Result<SceneManifest> {
    for sub in ["images", "depth", "masks"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    let scale = template.depth_scale;
    let entries = frames
        .par_iter()
        .map(|f| {
            let (w, h) = (f.width() as u32, f.height() as u32);
            let name = format!("{:04}.png", f.index);
            let entry = FrameEntry {
                image: Path::new("images").join(&name),
                depth: Path::new("depth").join(&name),
                mask: Some(Path::new("masks").join(&name)),
                pose: Some(f.camera.cam_to_world_matrix().map(|r| r.map(|v| v.as_f64()))),
                timestamp: None,
            };
            save_color_png(&dir.join(&entry.image), &f.image)?;
            save_depth_png(&dir.join(&entry.depth), &f.depth, scale, f.index)?;
            let mask = GrayImage::from_raw(w, h, f.mask.data.iter().map(|&m| if m { 255 } else { 0 }).collect())
                .ok_or_else(|| Error::Frame { frame: f.index, detail: "mask buffer size".into() })?;
            mask.save(dir.join(entry.mask.as_ref().unwrap()))?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = SceneManifest { frames: entries, time: TimeRule::Index, ..template.clone() };
    std::fs::write(dir.join(MANIFEST_NAME), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_follows_seven_to_one() {
        let (train, test) = split_indices(16);
        assert_eq!((train.len(), test.len()), (14, 2));
        assert_eq!(test, vec![4, 12]);
        let (train, test) = split_indices(8);
        assert_eq!((train.len(), test.len()), (7, 1));
        assert_eq!(split_indices(24).1.len(), 3);
    }

    fn manifest(times: &[Option<f64>], rule: TimeRule) -> SceneManifest {
        SceneManifest {
            width: 4,
            height: 4,
            intrinsics: Intrinsics { fx: 4.0, fy: 4.0, cx: 1.5, cy: 1.5 },
            depth_mode: DepthMode::Binocular,
            depth_scale: 1.0,
            time: rule,
            near: 0.01,
            far: 100.0,
            frames: times
                .iter()
                .map(|&timestamp| FrameEntry { image: "a".into(), depth: "b".into(), mask: None, pose: None, timestamp })
                .collect(),
        }
    }

    #[test]
    fn times_are_normalized() {
        assert_eq!(frame_times(&manifest(&[None; 5], TimeRule::Index)).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let m = manifest(&[Some(10.0), Some(12.0), Some(20.0)], TimeRule::Timestamp);
        assert_eq!(frame_times(&m).unwrap(), vec![0.0, 0.2, 1.0]);
        assert_eq!(frame_times(&manifest(&[None], TimeRule::Index)).unwrap(), vec![0.0]);
    }

    #[test]
    fn non_monotone_timestamps_name_the_frame() {
        let m = manifest(&[Some(0.0), Some(1.0), Some(1.0)], TimeRule::Index);
        assert!(matches!(frame_times(&m), Err(Error::Frame { frame: 2, .. })));
        let missing = manifest(&[Some(0.0), None], TimeRule::Timestamp);
        assert!(matches!(frame_times(&missing), Err(Error::Frame { frame: 1, .. })));
    }

    #[test]
    fn depth_overflow_is_reported() {
        assert!(depth_code(7.0f64, 1e-4, 3).is_err());
        assert_eq!(depth_code(4.0f64, 1e-4, 3).unwrap(), 40000);
        assert!(depth_code(-1.0f64, 1e-4, 3).is_err());
    }
}
