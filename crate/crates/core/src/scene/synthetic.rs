//! Ground-truth dynamic scenes for end-to-end tests: a textured, gently
//! curved sheet of Gaussians seen by a fixed camera while it moves.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameRecord;
use crate::image::Mask;
use crate::model::{Camera, GaussianCloud, Intrinsics, SH_C0};
use crate::objectives::DepthMode;
use crate::raster::{project, render_oracle, RasterConfig};

use super::{quantize_frame, write_scene, SceneManifest, TimeRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MotionFamily {
    /// The whole sheet translates along a fixed in-plane direction by
    /// `amplitude · sin(2πt)`.
    #[default]
    Rigid,
    /// Gaussians near the sheet center swell outward and toward the camera.
    Pulsation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub gaussians: usize,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub motion: MotionFamily,
    /// Peak displacement in scene units.
    pub amplitude: f64,
    pub seed: u64,
    /// Focal length in pixels; the image width when absent.
    pub focal: Option<f64>,
    /// Mean distance from the camera to the sheet.
    pub depth: f64,
    /// Tool rectangle `[x0, y0, x1, y1)` painted gray and masked out in every frame.
    pub tool: Option<[usize; 4]>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            gaussians: 500,
            width: 96,
            height: 96,
            frames: 24,
            motion: MotionFamily::Rigid,
            amplitude: 0.15,
            seed: 0,
            focal: None,
            depth: 4.0,
            tool: None,
        }
    }
}

const WAVE: f64 = 0.2;
const NEAR: f64 = 0.1;
const FAR: f64 = 100.0;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic scene: {m}")));
        if self.gaussians == 0 || self.frames == 0 {
            return bad("needs at least one Gaussian and one frame");
        }
        if self.width < 8 || self.height < 8 {
            return bad("image must be at least 8x8");
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return bad("amplitude must be finite and non-negative");
        }
        if !(self.depth > NEAR + WAVE + self.amplitude && self.depth < FAR / 2.0) {
            return bad("sheet depth out of range");
        }
        if self.focal.is_some_and(|f| !(f > 0.0)) {
            return bad("focal length must be positive");
        }
        Ok(())
    }

    pub fn focal_length(&self) -> f64 {
        self.focal.unwrap_or(self.width as f64)
    }

    pub fn camera(&self) -> Result<Camera<f64>> {
        let f = self.focal_length();
        let k = Intrinsics { fx: f, fy: f, cx: (self.width as f64 - 1.0) / 2.0, cy: (self.height as f64 - 1.0) / 2.0 };
        Camera::identity_pose(k, self.width, self.height, NEAR, FAR)
    }
}

/// A generated scene: canonical ground truth, its motion, and the rendered
/// frames (already quantized to the on-disk precision).
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SyntheticSpec,
    pub cloud: GaussianCloud<f64>,
    pub frames: Vec<FrameRecord<f64>>,
    /// Intrinsics and depth settings; frame entries are filled by [`SyntheticScene::write`].
    pub manifest: SceneManifest,
}

fn displacement(spec: &SyntheticSpec, canonical: &[f64; 3], t: f64) -> [f64; 3] {
    let s = spec.amplitude * (2.0 * PI * t).sin();
    match spec.motion {
        MotionFamily::Rigid => [0.8 * s, 0.6 * s, 0.0],
        MotionFamily::Pulsation => {
            let half = spec.depth * spec.width as f64 / (2.0 * spec.focal_length());
            let r = 0.35 * half;
            let (dx, dy) = (canonical[0], canonical[1]);
            let fall = (-(dx * dx + dy * dy) / (2.0 * r * r)).exp();
            [s * fall * dx / r, s * fall * dy / r, -s * fall]
        }
    }
}

impl SyntheticScene {
    /// Ground-truth cloud at time `t`.
    pub fn cloud_at(&self, t: f64) -> GaussianCloud<f64> {
        moved(&self.spec, &self.cloud, t)
    }

    /// Writes the frames and manifest into `dir`.
    pub fn write(&self, dir: &Path) -> Result<SceneManifest> {
        write_scene(dir, &self.manifest, &self.frames)
    }
}

fn moved(spec: &SyntheticSpec, cloud: &GaussianCloud<f64>, t: f64) -> GaussianCloud<f64> {
    let mut out = cloud.clone();
    for p in &mut out.positions {
        let d = displacement(spec, p, t);
        for a in 0..3 {
            p[a] += d[a];
        }
    }
    out
}

fn canonical_cloud(spec: &SyntheticSpec, camera: &Camera<f64>) -> GaussianCloud<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.gaussians;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let f = spec.focal_length();
    // Keep centers far enough from the border that motion cannot push them out.
    let margin = (spec.amplitude * f / (spec.depth - WAVE - spec.amplitude)).ceil() + 2.0;
    let (uw, vh) = ((w - 1.0 - 2.0 * margin).max(1.0), (h - 1.0 - 2.0 * margin).max(1.0));
    let cols = ((n as f64 * uw / vh).sqrt().round() as usize).max(1);
    let rows = n.div_ceil(cols);
    let (cell_u, cell_v) = (uw / cols as f64, vh / rows as f64);

    let mut cloud = GaussianCloud::new(n, 0);
    for i in 0..n {
        let (c, r) = (i % cols, i / cols);
        let u = margin + (c as f64 + 0.5 + rng.gen_range(-0.35..0.35)) * cell_u;
        let v = margin + (r as f64 + 0.5 + rng.gen_range(-0.35..0.35)) * cell_v;
        let flat = camera.unproject(u, v, spec.depth);
        let z = spec.depth + WAVE * (1.7 * flat[0]).sin() * (1.3 * flat[1]).cos();
        cloud.positions[i] = camera.unproject(u, v, z);

        let footprint = 0.75 * cell_u.max(cell_v) * z / f;
        let jitter: [f64; 2] = [rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15)];
        cloud.log_scales[i] = [(footprint).ln() + jitter[0], (footprint).ln() + jitter[1], (0.3 * footprint).ln()];
        let angle: f64 = rng.gen_range(-PI..PI);
        cloud.rotations[i] = [(angle / 2.0).cos(), 0.0, 0.0, (angle / 2.0).sin()];
        cloud.opacity_logits[i] = 3.0;

        for ch in 0..3 {
            let phase = ch as f64 * 2.1;
            let base = 0.5 + 0.25 * (0.11 * u + phase).sin() * (0.07 * v + 0.5 * phase).cos();
            let color = (base + rng.gen_range(-0.12..0.12)).clamp(0.05, 0.95);
            cloud.sh_coeffs[i * 3 + ch] = (color - 0.5) / SH_C0;
        }
    }
    cloud
}

/// Renders every frame of the scene described by `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let camera = spec.camera()?;
    let cloud = canonical_cloud(spec, &camera);
    let config = RasterConfig::default();
    let n = spec.frames;
    let mut frames = Vec::with_capacity(n);
    let mut max_depth: f64 = 0.0;
    for i in 0..n {
        let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        let posed = moved(spec, &cloud, t);
        for (g, p) in posed.positions.iter().enumerate() {
            let (u, v, z) = camera.project(p);
            let (w, h) = (spec.width as f64 - 1.0, spec.height as f64 - 1.0);
            if !(z > NEAR && z < FAR && (0.0..=w).contains(&u) && (0.0..=h).contains(&v)) {
                return Err(Error::Config(format!("synthetic scene: Gaussian {g} leaves the view at t = {t}")));
            }
        }
        let out = render_oracle(&project(&posed, &camera, &config), &camera, &config);
        let mut image = out.color;
        let mut mask = Mask::all(spec.width, spec.height);
        if let Some([x0, y0, x1, y1]) = spec.tool {
            mask.clear_rect(x0, y0, x1, y1);
            for (p, keep) in mask.data.iter().enumerate() {
                if !keep {
                    image.data[p * 3..p * 3 + 3].fill(0.5);
                }
            }
        }
        max_depth = out.depth.data.iter().cloned().fold(max_depth, f64::max);
        frames.push(FrameRecord { index: i, image, depth: out.depth, mask, camera: camera.clone(), time: t });
    }
    let depth_scale = if max_depth <= 6.5 { 1e-4 } else { max_depth / 60000.0 };
    for f in &mut frames {
        quantize_frame(f, depth_scale)?;
    }
    let manifest = SceneManifest {
        width: spec.width,
        height: spec.height,
        intrinsics: camera.intrinsics,
        depth_mode: DepthMode::Binocular,
        depth_scale,
        time: TimeRule::Index,
        near: NEAR,
        far: FAR,
        frames: Vec::new(),
    };
    Ok(SyntheticScene { spec: spec.clone(), cloud, frames, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::load_scene;

    fn small() -> SyntheticSpec {
        SyntheticSpec { gaussians: 60, width: 24, height: 20, frames: 8, tool: Some([2, 3, 7, 9]), ..Default::default() }
    }

    #[test]
    fn zero_amplitude_gives_identical_frames() {
        let s = generate_synthetic(&SyntheticSpec { amplitude: 0.0, ..small() }).unwrap();
        for f in &s.frames[1..] {
            assert_eq!(f.image, s.frames[0].image);
            assert_eq!(f.depth, s.frames[0].depth);
        }
    }

    #[test]
    fn moving_scene_changes_over_time() {
        for motion in [MotionFamily::Rigid, MotionFamily::Pulsation] {
            let s = generate_synthetic(&SyntheticSpec { motion, ..small() }).unwrap();
            assert_ne!(s.frames[0].image, s.frames[2].image);
        }
    }

    #[test]
    fn tool_rectangle_is_masked_and_gray() {
        let s = generate_synthetic(&small()).unwrap();
        let f = &s.frames[3];
        assert!(!f.mask.get(2, 3) && !f.mask.get(6, 8));
        assert!(f.mask.get(7, 8) && f.mask.get(6, 9));
        assert_eq!(f.image.at(4, 5, 1), 128.0 / 255.0);
        assert_eq!(f.mask.count(), 24 * 20 - 5 * 6);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.cloud, b.cloud);
        assert_eq!(a.frames, b.frames);
        let c = generate_synthetic(&SyntheticSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.cloud, c.cloud);
    }

    #[test]
    fn huge_amplitude_is_rejected() {
        let err = generate_synthetic(&SyntheticSpec { amplitude: 3.0, ..small() }).unwrap_err();
        assert!(err.to_string().contains("leaves the view") || err.to_string().contains("out of range"));
    }

    #[test]
    fn written_scene_reloads_bit_exactly() {
        let s = generate_synthetic(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.write(dir.path()).unwrap();
        let loaded = load_scene::<f64>(dir.path()).unwrap();
        assert_eq!(loaded.frames, s.frames);
        let as_f32 = load_scene::<f32>(dir.path()).unwrap();
        assert_eq!(as_f32.frames[5].image, s.frames[5].image.cast::<f32>());
        assert_eq!((loaded.train.len(), loaded.test.len()), (7, 1));
    }

    #[test]
    fn loader_rejects_mismatched_depth() {
        let s = generate_synthetic(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = s.write(dir.path()).unwrap();
        image::GrayImage::new(5, 5).save(dir.path().join(&m.frames[2].depth)).unwrap();
        match load_scene::<f32>(dir.path()) {
            Err(Error::Frame { frame, .. }) => assert_eq!(frame, 2),
            other => panic!("expected a frame error, got {other:?}"),
        }
        std::fs::remove_file(dir.path().join(&m.frames[1].image)).unwrap();
        let err = load_scene::<f32>(dir.path()).unwrap_err().to_string();
        assert!(err.contains("frame"), "{err}");
    }
}
