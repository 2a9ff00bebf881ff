//! Single-page browser demo of the coarse-to-fine premise: scan a noisy
//! far view, click to zoom into a crisp near view, then click again to
//! pull or push the part and watch the object move.
//!
//! Build: `cargo build --release -p c2f-demo --target wasm32-unknown-unknown`
//! then run `wasm-bindgen` on the produced cdylib (see README).

use c2f_core::interaction::{execute, grasp_test, oracle_action, InteractionParams, Task};
use c2f_core::math::{derive_seed, Vec3};
use c2f_core::scene::{generate_scene, set_joint_state, Category, Scene, ScenarioSpec};
use c2f_core::sensor::{
    far_camera_pose, near_camera_pose, render, CameraPose, Intrinsics, NoiseModel, PointCloud,
};
use wasm_bindgen::prelude::*;

const CLOUD_POINTS: usize = 2048;

fn spec_for(category: Category) -> ScenarioSpec {
    ScenarioSpec { handle_prob: 1.0, ..ScenarioSpec::default_for(category) }
}

/// RGBA software splatter for a captured cloud, drawn from its own camera.
struct Frame {
    rgba: Vec<u8>,
    w: usize,
    h: usize,
    depth: Vec<f32>,
    /// Cloud index per pixel for picking, usize::MAX when empty.
    owner: Vec<usize>,
}

fn project(pose: &CameraPose, intr: &Intrinsics, p: Vec3) -> Option<(f64, f64, f64)> {
    let (r, u, f) = pose.basis();
    let d = p - pose.position;
    let depth = d.dot(f);
    if depth <= 1e-6 {
        return None;
    }
    let half = (intr.fov / 2.0).tan();
    let aspect = intr.height as f64 / intr.width as f64;
    let x = d.dot(r) / depth / half;
    let y = d.dot(u) / depth / (half * aspect);
    Some(((x + 1.0) * 0.5 * intr.width as f64, (1.0 - y) * 0.5 * intr.height as f64, depth))
}

fn turbo_ish(t: f64) -> (u8, u8, u8) {
    // compact blue -> cyan -> yellow -> red ramp
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * (1.5 * t).min(1.0).powf(1.2)) as u8;
    let g = (255.0 * (1.0 - (2.0 * (t - 0.5)).powi(2)).max(0.0)) as u8;
    let b = (255.0 * (1.0 - t).powf(0.8)) as u8;
    (r, g, b)
}

fn splat_cloud(
    cloud: &PointCloud,
    intr: &Intrinsics,
    w: usize,
    h: usize,
    colors: &[(u8, u8, u8)],
) -> Frame {
    let mut frame = Frame {
        rgba: vec![0u8; w * h * 4],
        w,
        h,
        depth: vec![f32::INFINITY; w * h],
        owner: vec![usize::MAX; w * h],
    };
    // background
    for px in frame.rgba.chunks_exact_mut(4) {
        px.copy_from_slice(&[16, 18, 24, 255]);
    }
    let sx = w as f64 / intr.width as f64;
    let sy = h as f64 / intr.height as f64;
    for (i, p) in cloud.points.iter().enumerate() {
        let Some((px, py, depth)) = project(&cloud.source_pose, intr, *p) else {
            continue;
        };
        let (px, py) = (px * sx, py * sy);
        let (r, g, b) = colors[i];
        // two-by-two splat with z-test
        for dy in 0..2usize {
            for dx in 0..2usize {
                let xx = px as isize + dx as isize;
                let yy = py as isize + dy as isize;
                if xx < 0 || yy < 0 || xx as usize >= w || yy as usize >= h {
                    continue;
                }
                let idx = yy as usize * w + xx as usize;
                if (depth as f32) < frame.depth[idx] {
                    frame.depth[idx] = depth as f32;
                    frame.owner[idx] = i;
                    let o = idx * 4;
                    frame.rgba[o] = r;
                    frame.rgba[o + 1] = g;
                    frame.rgba[o + 2] = b;
                    frame.rgba[o + 3] = 255;
                }
            }
        }
    }
    frame
}

/// Pick the cloud point under a pixel, searching a small neighborhood.
fn pick(frame: &Frame, x: f64, y: f64) -> Option<usize> {
    let (xi, yi) = (x as isize, y as isize);
    let mut best: Option<(f32, usize)> = None;
    for dy in -4isize..=4 {
        for dx in -4isize..=4 {
            let (xx, yy) = (xi + dx, yi + dy);
            if xx < 0 || yy < 0 || xx as usize >= frame.w || yy as usize >= frame.h {
                continue;
            }
            let idx = yy as usize * frame.w + xx as usize;
            let owner = frame.owner[idx];
            if owner != usize::MAX {
                let d2 = (dx * dx + dy * dy) as f32;
                if best.map_or(true, |(bd, _)| d2 < bd) {
                    best = Some((d2, owner));
                }
            }
        }
    }
    best.map(|(_, i)| i)
}

/// One interactive session: a procedural scene plus the clouds scanned
/// from it. Exposes three operations to the page: `scan_far`,
/// `zoom` (click a far point) and `interact` (click a near point).
#[wasm_bindgen]
pub struct DemoSession {
    scene: Scene,
    noise: NoiseModel,
    seed: u64,
    scan_count: u64,
    far: Option<PointCloud>,
    far_frame_meta: Option<(usize, usize)>,
    far_frame: Option<Frame>,
    near: Option<PointCloud>,
    near_frame: Option<Frame>,
    p_far: Option<Vec3>,
    params: InteractionParams,
    far_intr: Intrinsics,
    near_intr: Intrinsics,
}

#[wasm_bindgen]
impl DemoSession {
    /// `category` is one of door/drawer/lid.
    #[wasm_bindgen(constructor)]
    pub fn new(category: &str, seed: u32) -> Result<DemoSession, JsError> {
        Self::try_new(category, seed).map_err(|e| JsError::new(&e))
    }

    /// Depth-noise controls, in millimeters (floor) and mm per meter
    /// (slope), plus base dropout probability.
    pub fn set_noise(&mut self, sigma0_mm: f64, k_mm_per_m: f64, dropout: f64) {
        self.set_noise_inner(sigma0_mm, k_mm_per_m, dropout);
    }

    /// Current joint state as a fraction of its range.
    pub fn joint_state_fraction(&self) -> f64 {
        self.joint_fraction()
    }

    /// Scan the far view and return an RGBA buffer of `w` x `h` pixels,
    /// colored by depth. The noisy speckle is the point of the exercise.
    pub fn scan_far(&mut self, w: u32, h: u32) -> Result<Vec<u8>, JsError> {
        self.try_scan_far(w, h).map_err(|e| JsError::new(&e))
    }

    /// Zoom: pick the far point under the click, move the eye-in-hand
    /// camera 0.6 m in front of it, scan the near view, and return its
    /// RGBA frame. Graspable points (the oracle's view) come out green.
    pub fn zoom(&mut self, x: f64, y: f64, w: u32, h: u32) -> Result<Vec<u8>, JsError> {
        self.try_zoom(x, y, w, h).map_err(|e| JsError::new(&e))
    }

    /// Interact at the near point under the click: a well-aligned gripper
    /// executes the task there and the joint advances accordingly.
    /// Returns a JSON outcome; re-scan to see the object move.
    pub fn interact(&mut self, x: f64, y: f64, task: &str) -> Result<String, JsError> {
        self.try_interact(x, y, task).map_err(|e| JsError::new(&e))
    }
}

impl DemoSession {
    fn try_new(category: &str, seed: u32) -> Result<DemoSession, String> {
        let category: Category = category.parse().map_err(|e| format!("{e}"))?;
        let scene =
            generate_scene(&spec_for(category), seed as u64).map_err(|e| format!("{e}"))?;
        Ok(DemoSession {
            scene,
            noise: NoiseModel::default(),
            seed: seed as u64,
            scan_count: 0,
            far: None,
            far_frame_meta: None,
            far_frame: None,
            near: None,
            near_frame: None,
            p_far: None,
            params: InteractionParams::default(),
            far_intr: Intrinsics { fov: 50f64.to_radians(), width: 320, height: 240 },
            near_intr: Intrinsics { fov: 45f64.to_radians(), width: 320, height: 240 },
        })
    }

    fn set_noise_inner(&mut self, sigma0_mm: f64, k_mm_per_m: f64, dropout: f64) {
        self.noise.sigma0 = (sigma0_mm / 1000.0).max(0.0);
        self.noise.k = (k_mm_per_m / 1000.0).max(0.0);
        self.noise.dropout_base = dropout.clamp(0.0, 0.95);
    }

    fn joint_fraction(&self) -> f64 {
        let j = &self.scene.joint;
        (j.q - j.limits[0]) / (j.limits[1] - j.limits[0])
    }

    fn try_scan_far(&mut self, w: u32, h: u32) -> Result<Vec<u8>, String> {
        self.scan_count += 1;
        let pose = far_camera_pose(&self.scene, &Default::default());
        let cloud = render(
            &self.scene,
            &pose,
            &self.far_intr,
            &self.noise,
            0.25,
            CLOUD_POINTS,
            derive_seed(self.seed, 1000 + self.scan_count),
        )
        .map_err(|e| format!("{e}"))?;
        let depths: Vec<f64> =
            cloud.points.iter().map(|p| (*p - pose.position).norm()).collect();
        let (dmin, dmax) = depths
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
        let colors: Vec<(u8, u8, u8)> = depths
            .iter()
            .map(|&d| turbo_ish(1.0 - (d - dmin) / (dmax - dmin).max(1e-9)))
            .collect();
        let frame = splat_cloud(&cloud, &self.far_intr, w as usize, h as usize, &colors);
        let rgba = frame.rgba.clone();
        self.far = Some(cloud);
        self.far_frame = Some(frame);
        self.far_frame_meta = Some((w as usize, h as usize));
        Ok(rgba)
    }

    fn try_zoom(&mut self, x: f64, y: f64, w: u32, h: u32) -> Result<Vec<u8>, String> {
        let far = self.far.as_ref().ok_or_else(|| "scan the far view first".to_string())?;
        let frame = self.far_frame.as_ref().ok_or_else(|| "no far frame".to_string())?;
        let idx = pick(frame, x, y).ok_or_else(|| "no point under cursor".to_string())?;
        let p_far = far.points[idx];
        self.p_far = Some(p_far);
        self.scan_count += 1;
        let pose = near_camera_pose(&self.scene, &far.source_pose, p_far, 0.6);
        let cloud = render(
            &self.scene,
            &pose,
            &self.near_intr,
            &self.noise,
            0.25,
            CLOUD_POINTS,
            derive_seed(self.seed, 2000 + self.scan_count),
        )
        .map_err(|e| format!("{e}"))?;
        let colors: Vec<(u8, u8, u8)> = cloud
            .points
            .iter()
            .map(|&p| {
                let action = oracle_action(&self.scene, p, Task::PullOpen, &self.params);
                if grasp_test(&self.scene, p, &action.rotation(), &self.params) {
                    (80, 230, 120)
                } else {
                    let d = (p - pose.position).norm();
                    turbo_ish(1.0 - ((d - 0.3) / 1.2).clamp(0.0, 1.0))
                }
            })
            .collect();
        let frame = splat_cloud(&cloud, &self.near_intr, w as usize, h as usize, &colors);
        let rgba = frame.rgba.clone();
        self.near = Some(cloud);
        self.near_frame = Some(frame);
        Ok(rgba)
    }

    fn try_interact(&mut self, x: f64, y: f64, task: &str) -> Result<String, String> {
        let task: Task = task.parse().map_err(|e| format!("{e}"))?;
        let near = self.near.as_ref().ok_or_else(|| "zoom in first".to_string())?;
        let frame = self.near_frame.as_ref().ok_or_else(|| "no near frame".to_string())?;
        let idx = pick(frame, x, y).ok_or_else(|| "no point under cursor".to_string())?;
        let p = near.points[idx];
        let action = oracle_action(&self.scene, p, task, &self.params);
        let out = execute(&self.scene, &action, &self.params);
        let sign = match task {
            Task::PullOpen => 1.0,
            Task::PushClose => -1.0,
        };
        let (next, _) = set_joint_state(&self.scene, self.scene.joint.q + sign * out.joint_delta);
        self.scene = next;
        let json = serde_json::json!({
            "gt": out.gt,
            "joint_delta": out.joint_delta,
            "failure_reason": format!("{:?}", out.failure_reason),
            "joint_q": self.scene.joint.q,
            "joint_fraction": self.joint_fraction(),
        });
        Ok(json.to_string())
    }
}
