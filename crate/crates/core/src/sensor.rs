//! Virtual depth camera with distance-dependent noise.
//!
//! One ray per pixel through a pinhole model; hit depths are perturbed
//! along the ray with std sigma(d) = sigma0 + k*d, so clouds get noisier
//! the farther the camera sits. Dropout grows at grazing incidence and on
//! thin features (detected from neighbor-ray depth spread), which is what
//! makes handles and panel edges vanish from far views.

use crate::error::{Error, Result};
use crate::math::{derive_seed, Vec3};
use crate::scene::Scene;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
}

impl CameraPose {
    pub fn validate(&self) -> Result<()> {
        if (self.look_at - self.position).norm() < 1e-9 {
            return Err(Error::Config("camera position equals look_at".into()));
        }
        let f = (self.look_at - self.position).normalized().unwrap();
        if f.cross(self.up).norm() < 1e-9 {
            return Err(Error::Config("camera up parallel to view direction".into()));
        }
        Ok(())
    }

    pub fn forward(&self) -> Vec3 {
        (self.look_at - self.position).normalized().unwrap_or(Vec3::Y)
    }

    /// Right-handed camera basis (right, true up, forward).
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let f = self.forward();
        let r = f.cross(self.up).normalized().unwrap_or(Vec3::X);
        let u = r.cross(f);
        (r, u, f)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    /// Horizontal field of view in radians.
    pub fov: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov > 0.0 && self.fov < std::f64::consts::PI) {
            return Err(Error::Config("fov must lie in (0, pi)".into()));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::Config("resolution must be at least 16x16".into()));
        }
        Ok(())
    }

    /// Direction through the center of pixel (i, j) in the camera's frame.
    pub fn ray_dir(&self, pose_basis: (Vec3, Vec3, Vec3), i: usize, j: usize) -> Vec3 {
        let (r, u, f) = pose_basis;
        let half = (self.fov / 2.0).tan();
        let aspect = self.height as f64 / self.width as f64;
        let x = (2.0 * (i as f64 + 0.5) / self.width as f64 - 1.0) * half;
        let y = (1.0 - 2.0 * (j as f64 + 0.5) / self.height as f64) * half * aspect;
        (f + r * x + u * y).normalized().unwrap()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Depth-noise floor (meters).
    pub sigma0: f64,
    /// Depth-noise slope (meters of std per meter of depth).
    pub k: f64,
    /// Unconditional dropout probability.
    pub dropout_base: f64,
    /// Exponent shaping grazing-angle dropout: (1 - |n.v|)^exp.
    pub grazing_exponent: f64,
    /// Neighbor-depth deviation (meters) above which a hit counts as lying
    /// on a thin feature and receives doubled dropout.
    pub thin_feature_scale: f64,
}

impl NoiseModel {
    pub fn noiseless() -> NoiseModel {
        NoiseModel {
            sigma0: 0.0,
            k: 0.0,
            dropout_base: 0.0,
            grazing_exponent: f64::INFINITY,
            thin_feature_scale: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma0 < 0.0 || self.k < 0.0 {
            return Err(Error::Config("sigma0 and k must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_base) {
            return Err(Error::Config("dropout_base must lie in [0,1)".into()));
        }
        Ok(())
    }

    pub fn sigma(&self, depth: f64) -> f64 {
        self.sigma0 + self.k * depth
    }
}

impl Default for NoiseModel {
    fn default() -> NoiseModel {
        NoiseModel {
            sigma0: 0.001,
            k: 0.004,
            dropout_base: 0.02,
            grazing_exponent: 8.0,
            thin_feature_scale: 0.02,
        }
    }
}

/// Fixed-size world-frame point cloud with the pose it was captured from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub source_pose: CameraPose,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

struct PixelHit {
    depth: f64,
    cos_incidence: f64,
    dir: Vec3,
}

/// Render a noisy partial point cloud of exactly `n_points` points.
///
/// Hits closer than `min_range` are discarded (depth vanishes too close to
/// the sensor). Surviving hits are farthest-point downsampled to
/// `n_points`; if fewer survive, existing points are duplicated with
/// sigma0 jitter. Deterministic in (scene, pose, seed).
pub fn render(
    scene: &Scene,
    pose: &CameraPose,
    intrinsics: &Intrinsics,
    noise: &NoiseModel,
    min_range: f64,
    n_points: usize,
    seed: u64,
) -> Result<PointCloud> {
    pose.validate()?;
    intrinsics.validate()?;
    noise.validate()?;
    let basis = pose.basis();
    let part = scene.part_world();
    let (w, h) = (intrinsics.width, intrinsics.height);

    // Pass 1: cast every ray, keep front-facing hits beyond min range.
    let mut hits: Vec<Option<PixelHit>> = Vec::with_capacity(w * h);
    for j in 0..h {
        for i in 0..w {
            let dir = intrinsics.ray_dir(basis, i, j);
            let hb = scene.base.ray_cast(pose.position, dir, 1e-9);
            let hp = part.ray_cast(pose.position, dir, 1e-9);
            let hit = match (hb, hp) {
                (Some(a), Some(b)) => Some(if a.t <= b.t { a } else { b }),
                (Some(a), None) => Some(a),
                (None, Some(b)) => Some(b),
                (None, None) => None,
            };
            hits.push(hit.and_then(|rh| {
                let cos = rh.normal.dot(dir);
                // partiality: only front-facing surfaces return
                if cos >= 0.0 || rh.t < min_range {
                    None
                } else {
                    Some(PixelHit { depth: rh.t, cos_incidence: -cos, dir })
                }
            }));
        }
    }

    // Pass 2: per-pixel noise and dropout, seeded per pixel so the result
    // does not depend on traversal order.
    let mut survivors: Vec<Vec3> = Vec::new();
    for j in 0..h {
        for i in 0..w {
            let idx = j * w + i;
            let hit = match &hits[idx] {
                Some(hh) => hh,
                None => continue,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, idx as u64));
            let grazing = (1.0 - hit.cos_incidence).max(0.0);
            let graze_term = if noise.grazing_exponent.is_infinite() {
                if grazing >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                grazing.powf(noise.grazing_exponent)
            };
            let mut p_drop = noise.dropout_base + graze_term;
            if thin_feature(&hits, i, j, w, h, hit.depth, noise.thin_feature_scale) {
                p_drop *= 2.0;
            }
            let p_drop = p_drop.clamp(0.0, 1.0 - 1e-9);
            if rng.random::<f64>() < p_drop {
                continue;
            }
            let d_noisy = hit.depth + noise.sigma(hit.depth) * standard_normal(&mut rng);
            survivors.push(pose.position + hit.dir * d_noisy);
        }
    }

    if survivors.is_empty() {
        return Err(Error::EmptyView);
    }
    // quantize to f32 so in-memory clouds agree bit-exactly with the
    // persisted float32 format (actions index into these points)
    for p in survivors.iter_mut() {
        *p = Vec3::new(p.x as f32 as f64, p.y as f32 as f64, p.z as f32 as f64);
    }

    let points = if survivors.len() >= n_points {
        let idx = crate::encoder::farthest_point_sample(&survivors, n_points)
            .expect("n_points <= survivor count");
        idx.into_iter().map(|i| survivors[i]).collect()
    } else {
        let mut pts = survivors.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xf111));
        while pts.len() < n_points {
            let src = survivors[rng.random_range(0..survivors.len())];
            let jitter = Vec3::new(
                standard_normal(&mut rng),
                standard_normal(&mut rng),
                standard_normal(&mut rng),
            ) * noise.sigma0;
            pts.push(src + jitter);
        }
        pts
    };
    Ok(PointCloud { points, source_pose: pose.clone() })
}

/// Thin-feature heuristic: a hit whose 8-neighborhood contains at least two
/// rays that either missed or differ in depth by more than the scale.
fn thin_feature(
    hits: &[Option<PixelHit>],
    i: usize,
    j: usize,
    w: usize,
    h: usize,
    depth: f64,
    scale: f64,
) -> bool {
    let mut deviants = 0;
    for dj in -1i64..=1 {
        for di in -1i64..=1 {
            if di == 0 && dj == 0 {
                continue;
            }
            let (ni, nj) = (i as i64 + di, j as i64 + dj);
            if ni < 0 || nj < 0 || ni >= w as i64 || nj >= h as i64 {
                continue;
            }
            match &hits[nj as usize * w + ni as usize] {
                None => deviants += 1,
                Some(nb) => {
                    if (nb.depth - depth).abs() > scale {
                        deviants += 1;
                    }
                }
            }
        }
    }
    deviants >= 2
}

/// Box-Muller standard normal draw.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarCameraConfig {
    /// Camera-to-center distance in meters.
    pub distance: f64,
    /// Elevation range in degrees, sampled by scene seed.
    pub elevation_deg: [f64; 2],
}

impl Default for FarCameraConfig {
    fn default() -> Self {
        FarCameraConfig { distance: 3.0, elevation_deg: [12.0, 30.0] }
    }
}

/// Deterministic far pose in front of the object: configured distance,
/// elevation drawn from the scene seed, looking at the object center.
pub fn far_camera_pose(scene: &Scene, cfg: &FarCameraConfig) -> CameraPose {
    far_camera_pose_salted(scene, cfg, 0)
}

/// Far pose with a retry salt: empty-view retries re-sample the elevation.
pub fn far_camera_pose_salted(scene: &Scene, cfg: &FarCameraConfig, salt: u64) -> CameraPose {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scene.seed, 0xfa2 + salt));
    let [lo, hi] = cfg.elevation_deg;
    let elev = if lo == hi { lo } else { rng.random_range(lo..hi) }.to_radians();
    let dir = scene.front * elev.cos() + Vec3::Z * elev.sin();
    CameraPose {
        position: scene.center + dir * cfg.distance,
        look_at: scene.center,
        up: Vec3::Z,
    }
}

/// Near ("eye-on-hand") pose: same height as `p_far`, offset along the
/// horizontal direction from the object toward the far camera, looking at
/// `p_far` so the view axis is parallel to the ground.
pub fn near_camera_pose(scene: &Scene, far: &CameraPose, p_far: Vec3, offset: f64) -> CameraPose {
    let mut horiz = far.position - scene.center;
    horiz.z = 0.0;
    // degenerate horizontal direction: fall back to the front-face normal
    let dir = horiz.normalized().unwrap_or(scene.front);
    CameraPose { position: p_far + dir * offset, look_at: p_far, up: Vec3::Z }
}

#[derive(Serialize, Deserialize)]
struct CloudSidecar {
    pose: CameraPose,
    seed: u64,
    noise: NoiseModel,
    count: usize,
}

/// Persist a cloud as little-endian float32 N x 3 plus a JSON sidecar.
pub fn save_cloud(cloud: &PointCloud, noise: &NoiseModel, seed: u64, path_stem: &Path) -> Result<()> {
    let bin = path_stem.with_extension("f32");
    crate::io::write_f32_le(&bin, &crate::io::points_to_f32(&cloud.points))?;
    let sidecar = CloudSidecar {
        pose: cloud.source_pose.clone(),
        seed,
        noise: *noise,
        count: cloud.points.len(),
    };
    crate::io::write_json(&path_stem.with_extension("json"), &sidecar)
}

pub fn load_cloud(path_stem: &Path) -> Result<PointCloud> {
    let sidecar: CloudSidecar = crate::io::read_json(&path_stem.with_extension("json"))?;
    let points = crate::io::points_from_f32(&crate::io::read_f32_le(&path_stem.with_extension("f32"))?)?;
    if points.len() != sidecar.count {
        return Err(Error::Argument(format!(
            "cloud {} count mismatch: sidecar {} binary {}",
            path_stem.display(),
            sidecar.count,
            points.len()
        )));
    }
    Ok(PointCloud { points, source_pose: sidecar.pose })
}
