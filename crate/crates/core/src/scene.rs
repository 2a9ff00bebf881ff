//! Procedural articulated objects with known kinematics.
//!
//! Each scene is one cabinet-like base (a watertight box) plus one movable
//! part (door, drawer front, or lid) attached by a single joint, with an
//! optional handle sub-mesh on the part. All geometry queries are exact.
//!
//! World frame: +z up, +y out of the object's front face, origin at the
//! base center.

use crate::error::{Error, Result};
use crate::math::{derive_seed, Mat3, Vec3};
use crate::mesh::{box_mesh, cylinder_mesh, TriMesh};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One-degree-of-freedom joint in world frame. Units: radians for revolute,
/// meters for prismatic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Joint {
    pub kind: JointKind,
    pub axis: Vec3,
    pub origin: Vec3,
    pub limits: [f64; 2],
    pub q: f64,
}

impl Joint {
    pub fn validate(&self) -> Result<()> {
        if (self.axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("joint axis must be unit length".into()));
        }
        if self.limits[0] >= self.limits[1] {
            return Err(Error::Config("joint limits must satisfy lo < hi".into()));
        }
        if self.q < self.limits[0] - 1e-12 || self.q > self.limits[1] + 1e-12 {
            return Err(Error::Config("joint state outside limits".into()));
        }
        Ok(())
    }

    /// Rigid transform of a rest-pose point to world pose at state `q`.
    pub fn transform_point(&self, p_rest: Vec3, q: f64) -> Vec3 {
        match self.kind {
            JointKind::Revolute => {
                let r = Mat3::rotation_about_axis(self.axis, q);
                r.mul_vec(p_rest - self.origin) + self.origin
            }
            JointKind::Prismatic => p_rest + self.axis * q,
        }
    }

    /// Instantaneous velocity of a point (world) per unit dq at state `q`.
    pub fn point_velocity(&self, p_world: Vec3, _q: f64) -> Vec3 {
        match self.kind {
            JointKind::Revolute => self.axis.cross(p_world - self.origin),
            JointKind::Prismatic => self.axis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Door,
    Drawer,
    Lid,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Door, Category::Drawer, Category::Lid];

    pub fn name(self) -> &'static str {
        match self {
            Category::Door => "door",
            Category::Drawer => "drawer",
            Category::Lid => "lid",
        }
    }
}

impl std::str::FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Category> {
        match s {
            "door" => Ok(Category::Door),
            "drawer" => Ok(Category::Drawer),
            "lid" => Ok(Category::Lid),
            other => Err(Error::Argument(format!("unknown category '{other}'"))),
        }
    }
}

/// Handle primitive shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandleShape {
    Bar,
    Knob,
}

/// Sampling ranges for procedural scene generation. All lengths in meters,
/// all `[lo, hi]` ranges inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub category: Category,
    pub width: [f64; 2],
    pub height: [f64; 2],
    pub depth: [f64; 2],
    pub panel_thickness: [f64; 2],
    /// Probability that the part carries a handle.
    pub handle_prob: f64,
    /// Graspable cross-section of a handle (bar side / knob diameter).
    pub handle_cross: [f64; 2],
    /// Handle length along its main axis.
    pub handle_len: [f64; 2],
    /// Air gap between handle and panel face.
    pub handle_standoff: [f64; 2],
    /// Upper joint limit (lower limit is always 0): radians or meters.
    pub joint_limit_hi: [f64; 2],
    /// Initial joint state as a fraction of the upper limit.
    pub initial_q_frac: [f64; 2],
    /// Bounding-box diagonal is rescaled into this range.
    pub diag_range: [f64; 2],
}

impl ScenarioSpec {
    pub fn default_for(category: Category) -> ScenarioSpec {
        let joint_limit_hi = match category {
            Category::Door => [1.2, 1.9],
            Category::Drawer => [0.18, 0.3],
            Category::Lid => [1.1, 1.6],
        };
        ScenarioSpec {
            category,
            width: [0.45, 0.8],
            height: [0.5, 0.9],
            depth: [0.3, 0.45],
            panel_thickness: [0.02, 0.035],
            handle_prob: 0.9,
            handle_cross: [0.02, 0.035],
            handle_len: [0.04, 0.06],
            handle_standoff: [0.015, 0.025],
            joint_limit_hi,
            initial_q_frac: [0.08, 0.6],
            diag_range: [0.6, 1.2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges: [(&str, [f64; 2]); 9] = [
            ("width", self.width),
            ("height", self.height),
            ("depth", self.depth),
            ("panel_thickness", self.panel_thickness),
            ("handle_cross", self.handle_cross),
            ("handle_len", self.handle_len),
            ("handle_standoff", self.handle_standoff),
            ("joint_limit_hi", self.joint_limit_hi),
            ("diag_range", self.diag_range),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo <= 0.0 {
                return Err(Error::Config(format!("invalid range {name}: [{lo}, {hi}]")));
            }
        }
        let [flo, fhi] = self.initial_q_frac;
        if !(0.0..=1.0).contains(&flo) || !(0.0..=1.0).contains(&fhi) || flo > fhi {
            return Err(Error::Config("initial_q_frac must be a sub-range of [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.handle_prob) {
            return Err(Error::Config("handle_prob must lie in [0,1]".into()));
        }
        Ok(())
    }
}

/// One articulated object. The part mesh is stored at rest pose (q = 0) and
/// posed on demand; values are immutable except through
/// [`Scene::set_joint_state`], which returns a new state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub base: TriMesh,
    pub part_rest: TriMesh,
    /// Triangle indices (into `part_rest.tris`) forming the handle region.
    pub handle_tris: Vec<u32>,
    pub joint: Joint,
    pub category: Category,
    /// Outward normal of the front face (always +y for generated scenes).
    pub front: Vec3,
    /// Object center at rest pose.
    pub center: Vec3,
    pub seed: u64,
}

/// Result of a surface query: exact distance plus ownership of the nearest
/// triangle.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceQuery {
    pub distance: f64,
    pub normal: Vec3,
    pub on_handle: bool,
    pub on_part: bool,
    /// Nearest point on the surface (world frame).
    pub point: Vec3,
}

impl Scene {
    /// Part mesh posed at the current joint state.
    pub fn part_world(&self) -> TriMesh {
        self.part_at(self.joint.q)
    }

    pub fn part_at(&self, q: f64) -> TriMesh {
        match self.joint.kind {
            JointKind::Revolute => {
                let r = Mat3::rotation_about_axis(self.joint.axis, q);
                self.part_rest.rigid_transform(&r, self.joint.origin, Vec3::ZERO)
            }
            JointKind::Prismatic => self.part_rest.rigid_transform(
                &Mat3::IDENTITY,
                Vec3::ZERO,
                self.joint.axis * q,
            ),
        }
    }

    /// Map a world point on the posed part back to rest coordinates.
    pub fn part_point_to_rest(&self, p_world: Vec3, q: f64) -> Vec3 {
        match self.joint.kind {
            JointKind::Revolute => {
                let r = Mat3::rotation_about_axis(self.joint.axis, -q);
                r.mul_vec(p_world - self.joint.origin) + self.joint.origin
            }
            JointKind::Prismatic => p_world - self.joint.axis * q,
        }
    }

    /// Bounding box over base plus posed part.
    pub fn aabb(&self) -> (Vec3, Vec3) {
        let (blo, bhi) = self.base.aabb();
        let (plo, phi) = self.part_world().aabb();
        (
            Vec3::new(blo.x.min(plo.x), blo.y.min(plo.y), blo.z.min(plo.z)),
            Vec3::new(bhi.x.max(phi.x), bhi.y.max(phi.y), bhi.z.max(phi.z)),
        )
    }
}

/// Deterministically generate a scene from a spec and a seed.
pub fn generate_scene(spec: &ScenarioSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5ce_e));

    // Draw order is fixed; changing it changes every generated scene.
    let w = sample(&mut rng, spec.width);
    let h = sample(&mut rng, spec.height);
    let d = sample(&mut rng, spec.depth);
    let t = sample(&mut rng, spec.panel_thickness);
    let gap = 0.006;
    let inset = 0.02 * w.max(h);
    let has_handle = rng.random::<f64>() < spec.handle_prob;
    let handle_shape = if rng.random::<f64>() < 0.7 { HandleShape::Bar } else { HandleShape::Knob };
    let cross = sample(&mut rng, spec.handle_cross);
    let len = sample(&mut rng, spec.handle_len);
    let standoff = sample(&mut rng, spec.handle_standoff);
    let hinge_left = rng.random::<bool>();
    let handle_off = rng.random_range(-0.25..0.25);
    let limit_hi = sample(&mut rng, spec.joint_limit_hi);
    let q0 = sample(&mut rng, spec.initial_q_frac) * limit_hi;

    let base = box_mesh(
        Vec3::new(-w / 2.0, -d / 2.0, -h / 2.0),
        Vec3::new(w / 2.0, d / 2.0, h / 2.0),
    );

    let mut part = TriMesh::default();
    let mut handle_tris = Vec::new();
    let joint;

    match spec.category {
        Category::Door => {
            let front = d / 2.0 + gap;
            part.merge(&box_mesh(
                Vec3::new(-w / 2.0 + inset, front, -h / 2.0 + inset),
                Vec3::new(w / 2.0 - inset, front + t, h / 2.0 - inset),
            ));
            let hinge_x = if hinge_left { -w / 2.0 + inset } else { w / 2.0 - inset };
            // +q must swing the free edge outward (+y), so the axis flips
            // sign with the hinge side.
            let axis = if hinge_left { Vec3::Z } else { -Vec3::Z };
            joint = Joint {
                kind: JointKind::Revolute,
                axis,
                origin: Vec3::new(hinge_x, front + t / 2.0, 0.0),
                limits: [0.0, limit_hi],
                q: q0,
            };
            if has_handle {
                let free_x = if hinge_left { w / 2.0 - inset } else { -w / 2.0 + inset };
                let hx = free_x - free_x.signum() * 0.12 * w;
                let hz = handle_off * h * 0.5;
                handle_tris = add_handle(
                    &mut part,
                    handle_shape,
                    Vec3::new(hx, front + t, hz),
                    Vec3::Y,
                    Vec3::Z,
                    cross,
                    len,
                    standoff,
                );
            }
        }
        Category::Drawer => {
            let front = d / 2.0 + gap;
            part.merge(&box_mesh(
                Vec3::new(-w / 2.0 + inset, front, -h / 2.0 + inset),
                Vec3::new(w / 2.0 - inset, front + t, h / 2.0 - inset),
            ));
            joint = Joint {
                kind: JointKind::Prismatic,
                axis: Vec3::Y,
                origin: Vec3::new(0.0, front + t / 2.0, 0.0),
                limits: [0.0, limit_hi],
                q: q0,
            };
            if has_handle {
                let hz = handle_off * h * 0.5;
                handle_tris = add_handle(
                    &mut part,
                    handle_shape,
                    Vec3::new(0.0, front + t, hz),
                    Vec3::Y,
                    Vec3::X,
                    cross,
                    len,
                    standoff,
                );
            }
        }
        Category::Lid => {
            let top = h / 2.0 + gap;
            part.merge(&box_mesh(
                Vec3::new(-w / 2.0 + inset, -d / 2.0 + inset, top),
                Vec3::new(w / 2.0 - inset, d / 2.0 - inset, top + t),
            ));
            // Hinge along the top rear edge; +q lifts the front edge.
            joint = Joint {
                kind: JointKind::Revolute,
                axis: Vec3::X,
                origin: Vec3::new(0.0, -d / 2.0 + inset, top + t / 2.0),
                limits: [0.0, limit_hi],
                q: q0,
            };
            if has_handle {
                let hy = d / 2.0 - inset - 0.12 * d;
                handle_tris = add_handle(
                    &mut part,
                    handle_shape,
                    Vec3::new(handle_off * w * 0.4, hy, top + t),
                    Vec3::Z,
                    Vec3::X,
                    cross,
                    len,
                    standoff,
                );
            }
        }
    }

    joint.validate()?;
    let mut scene = Scene {
        base,
        part_rest: part,
        handle_tris,
        joint,
        category: spec.category,
        front: Vec3::Y,
        center: Vec3::ZERO,
        seed,
    };
    normalize_scale(&mut scene, spec.diag_range);
    debug_assert!(!scene.base.has_degenerate_tris());
    debug_assert!(!scene.part_rest.has_degenerate_tris());
    Ok(scene)
}

/// Uniformly rescale the rest-pose assembly so its bounding-box diagonal
/// falls inside `range`. Prismatic limits stay in meters and are not
/// rescaled.
fn normalize_scale(scene: &mut Scene, range: [f64; 2]) {
    let (blo, bhi) = scene.base.aabb();
    let (plo, phi) = scene.part_rest.aabb();
    let lo = Vec3::new(blo.x.min(plo.x), blo.y.min(plo.y), blo.z.min(plo.z));
    let hi = Vec3::new(bhi.x.max(phi.x), bhi.y.max(phi.y), bhi.z.max(phi.z));
    let diag = (hi - lo).norm();
    let target = diag.clamp(range[0], range[1]);
    if diag <= 0.0 || target == diag {
        return;
    }
    let s = target / diag;
    for v in scene.base.vertices.iter_mut().chain(scene.part_rest.vertices.iter_mut()) {
        *v = *v * s;
    }
    scene.joint.origin = scene.joint.origin * s;
}

/// Attach a handle to `part`: `out_dir` points away from the panel face,
/// `along` is the handle's long axis. Returns the handle triangle indices.
/// The handle floats `standoff` meters off the face so that a closing line
/// across it measures only the handle cross-section.
fn add_handle(
    part: &mut TriMesh,
    shape: HandleShape,
    face_point: Vec3,
    out_dir: Vec3,
    along: Vec3,
    cross: f64,
    len: f64,
    standoff: f64,
) -> Vec<u32> {
    let mesh = match shape {
        HandleShape::Bar => {
            let c = face_point + out_dir * (standoff + cross / 2.0);
            let half = along * (len / 2.0) + out_dir * (cross / 2.0)
                + along.cross(out_dir) * (cross / 2.0);
            let half = Vec3::new(half.x.abs(), half.y.abs(), half.z.abs());
            box_mesh(c - half, c + half)
        }
        HandleShape::Knob => {
            let half_len = (len / 2.0).max(cross / 2.0);
            let c = face_point + out_dir * (standoff + half_len);
            cylinder_mesh(c, out_dir, cross / 2.0, half_len, 10)
        }
    };
    let offset = part.merge(&mesh);
    (offset as u32..(offset + mesh.tris.len()) as u32).collect()
}

fn sample(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

/// Set the joint state, clamping into limits. Returns the new scene and
/// whether clamping occurred.
pub fn set_joint_state(scene: &Scene, q: f64) -> (Scene, bool) {
    let clamped = q.clamp(scene.joint.limits[0], scene.joint.limits[1]);
    let mut s = scene.clone();
    s.joint.q = clamped;
    (s, clamped != q)
}

/// Joint displacement between two states of the same scene, in joint units.
pub fn joint_delta(before: &Scene, after: &Scene) -> f64 {
    (after.joint.q - before.joint.q).abs()
}

/// Exact nearest-surface query against base plus posed part. Ties between
/// base and part resolve to the part.
pub fn surface_point_query(scene: &Scene, p: Vec3) -> SurfaceQuery {
    let part = scene.part_world();
    let np = part.nearest_point(p);
    let nb = scene.base.nearest_point(p);
    match (np, nb) {
        (Some(np), Some(nb)) if np.distance <= nb.distance => SurfaceQuery {
            distance: np.distance,
            normal: np.normal,
            on_handle: scene.handle_tris.contains(&(np.tri as u32)),
            on_part: true,
            point: np.point,
        },
        (_, Some(nb)) => SurfaceQuery {
            distance: nb.distance,
            normal: nb.normal,
            on_handle: false,
            on_part: false,
            point: nb.point,
        },
        (Some(np), None) => SurfaceQuery {
            distance: np.distance,
            normal: np.normal,
            on_handle: scene.handle_tris.contains(&(np.tri as u32)),
            on_part: true,
            point: np.point,
        },
        (None, None) => SurfaceQuery {
            distance: f64::INFINITY,
            normal: Vec3::Z,
            on_handle: false,
            on_part: false,
            point: Vec3::ZERO,
        },
    }
}

#[derive(Serialize, Deserialize)]
struct SceneDoc {
    joint: Joint,
    category: Category,
    seed: u64,
    front: Vec3,
    center: Vec3,
    handle_tris: Vec<u32>,
    base_vertex_count: usize,
    base_tri_count: usize,
    part_vertex_count: usize,
    part_tri_count: usize,
}

/// Persist a scene as `scene.json` plus float32/uint32 companion binaries.
pub fn save_scene(scene: &Scene, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let doc = SceneDoc {
        joint: scene.joint.clone(),
        category: scene.category,
        seed: scene.seed,
        front: scene.front,
        center: scene.center,
        handle_tris: scene.handle_tris.clone(),
        base_vertex_count: scene.base.vertices.len(),
        base_tri_count: scene.base.tris.len(),
        part_vertex_count: scene.part_rest.vertices.len(),
        part_tri_count: scene.part_rest.tris.len(),
    };
    crate::io::write_json(&dir.join("scene.json"), &doc)?;
    crate::io::write_f32_le(&dir.join("base.vert.f32"), &crate::io::points_to_f32(&scene.base.vertices))?;
    crate::io::write_u32_le(&dir.join("base.tri.u32"), &flat_tris(&scene.base))?;
    crate::io::write_f32_le(&dir.join("part.vert.f32"), &crate::io::points_to_f32(&scene.part_rest.vertices))?;
    crate::io::write_u32_le(&dir.join("part.tri.u32"), &flat_tris(&scene.part_rest))
}

pub fn load_scene(dir: &Path) -> Result<Scene> {
    let doc: SceneDoc = crate::io::read_json(&dir.join("scene.json"))?;
    let base = mesh_from_files(dir, "base", doc.base_vertex_count, doc.base_tri_count)?;
    let part = mesh_from_files(dir, "part", doc.part_vertex_count, doc.part_tri_count)?;
    Ok(Scene {
        base,
        part_rest: part,
        handle_tris: doc.handle_tris,
        joint: doc.joint,
        category: doc.category,
        front: doc.front,
        center: doc.center,
        seed: doc.seed,
    })
}

fn flat_tris(m: &TriMesh) -> Vec<u32> {
    m.tris.iter().flat_map(|t| t.iter().copied()).collect()
}

fn mesh_from_files(dir: &Path, stem: &str, nv: usize, nt: usize) -> Result<TriMesh> {
    let verts = crate::io::points_from_f32(&crate::io::read_f32_le(&dir.join(format!("{stem}.vert.f32")))?)?;
    let idx = crate::io::read_u32_le(&dir.join(format!("{stem}.tri.u32")))?;
    if verts.len() != nv || idx.len() != nt * 3 {
        return Err(Error::Argument(format!("{stem} mesh size mismatch in {}", dir.display())));
    }
    Ok(TriMesh {
        vertices: verts,
        tris: idx.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    })
}
