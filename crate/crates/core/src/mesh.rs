//! Indexed triangle meshes with exact ray casting and distance queries.
//!
//! All procedural geometry is flat-faced (boxes and prisms), so triangle
//! soup queries are exact and cheap at this scale; no BVH is needed.

use crate::math::Vec3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub tris: Vec<[u32; 3]>,
}

/// Closest ray hit against a triangle soup.
#[derive(Debug, Clone, Copy)]
pub struct RayHit {
    pub t: f64,
    pub tri: usize,
    pub point: Vec3,
    /// Geometric triangle normal oriented by winding (outward for the
    /// primitives built in this crate).
    pub normal: Vec3,
}

/// Result of a nearest-point query against a triangle soup.
#[derive(Debug, Clone, Copy)]
pub struct NearestPoint {
    pub distance: f64,
    pub tri: usize,
    pub point: Vec3,
    pub normal: Vec3,
}

impl TriMesh {
    pub fn tri_vertices(&self, i: usize) -> (Vec3, Vec3, Vec3) {
        let [a, b, c] = self.tris[i];
        (
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        )
    }

    pub fn tri_normal(&self, i: usize) -> Vec3 {
        let (a, b, c) = self.tri_vertices(i);
        (b - a).cross(c - a).normalized().unwrap_or(Vec3::Z)
    }

    pub fn tri_area(&self, i: usize) -> f64 {
        let (a, b, c) = self.tri_vertices(i);
        (b - a).cross(c - a).norm() * 0.5
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            lo.z = lo.z.min(v.z);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
            hi.z = hi.z.max(v.z);
        }
        (lo, hi)
    }

    pub fn has_degenerate_tris(&self) -> bool {
        (0..self.tris.len()).any(|i| self.tri_area(i) < 1e-12)
    }

    /// Append another mesh, returning the triangle-index offset at which it
    /// was inserted.
    pub fn merge(&mut self, other: &TriMesh) -> usize {
        let tri_offset = self.tris.len();
        let v_offset = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.tris
            .extend(other.tris.iter().map(|t| [t[0] + v_offset, t[1] + v_offset, t[2] + v_offset]));
        tri_offset
    }

    /// Nearest intersection with `origin + t*dir` for `t > t_min`.
    pub fn ray_cast(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for i in 0..self.tris.len() {
            let (a, b, c) = self.tri_vertices(i);
            if let Some(t) = ray_triangle(origin, dir, a, b, c) {
                if t > t_min && best.map_or(true, |h| t < h.t) {
                    best = Some(RayHit {
                        t,
                        tri: i,
                        point: origin + dir * t,
                        normal: self.tri_normal(i),
                    });
                }
            }
        }
        best
    }

    /// All intersections of the infinite line `origin + t*dir` with the
    /// surface, sorted by `t`. Used for material-thickness probes.
    pub fn line_intersections(&self, origin: Vec3, dir: Vec3) -> Vec<f64> {
        let mut ts = Vec::new();
        for i in 0..self.tris.len() {
            let (a, b, c) = self.tri_vertices(i);
            if let Some(t) = ray_triangle(origin, dir, a, b, c) {
                ts.push(t);
            }
            if let Some(t) = ray_triangle(origin, -dir, a, b, c) {
                ts.push(-t);
            }
        }
        ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        ts
    }

    /// Exact nearest point on the triangle soup (Ericson-style Voronoi
    /// region classification per triangle).
    pub fn nearest_point(&self, p: Vec3) -> Option<NearestPoint> {
        let mut best: Option<NearestPoint> = None;
        for i in 0..self.tris.len() {
            let (a, b, c) = self.tri_vertices(i);
            let q = closest_point_on_triangle(p, a, b, c);
            let d = p.dist(q);
            if best.as_ref().map_or(true, |b| d < b.distance) {
                best = Some(NearestPoint {
                    distance: d,
                    tri: i,
                    point: q,
                    normal: self.tri_normal(i),
                });
            }
        }
        best
    }

    /// Rigidly transform every vertex: `v -> rot*(v - pivot) + pivot + shift`.
    pub fn rigid_transform(&self, rot: &crate::math::Mat3, pivot: Vec3, shift: Vec3) -> TriMesh {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|&v| rot.mul_vec(v - pivot) + pivot + shift)
                .collect(),
            tris: self.tris.clone(),
        }
    }
}

/// Moller-Trumbore intersection, both-sided. Returns `t` for hits with
/// `t >= 0`.
pub fn ray_triangle(origin: Vec3, dir: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let pvec = dir.cross(e2);
    let det = e1.dot(pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - a;
    let u = tvec.dot(pvec) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(e1);
    let v = dir.dot(qvec) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(qvec) * inv_det;
    if t >= 0.0 {
        Some(t)
    } else {
        None
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }

    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }

    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Axis-aligned box `[lo, hi]` as 12 triangles with outward winding.
pub fn box_mesh(lo: Vec3, hi: Vec3) -> TriMesh {
    let v = [
        Vec3::new(lo.x, lo.y, lo.z),
        Vec3::new(hi.x, lo.y, lo.z),
        Vec3::new(hi.x, hi.y, lo.z),
        Vec3::new(lo.x, hi.y, lo.z),
        Vec3::new(lo.x, lo.y, hi.z),
        Vec3::new(hi.x, lo.y, hi.z),
        Vec3::new(hi.x, hi.y, hi.z),
        Vec3::new(lo.x, hi.y, hi.z),
    ];
    // -z, +z, -y, +y, -x, +x; outward CCW winding
    let tris: Vec<[u32; 3]> = vec![
        [0, 2, 1],
        [0, 3, 2],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [3, 7, 6],
        [3, 6, 2],
        [0, 4, 7],
        [0, 7, 3],
        [1, 2, 6],
        [1, 6, 5],
    ];
    TriMesh { vertices: v.to_vec(), tris }
}

/// Closed prism approximating a cylinder: `sides`-gon cross-section of
/// radius `r` about `axis`, spanning `[-half_len, +half_len]` around
/// `center`.
pub fn cylinder_mesh(center: Vec3, axis: Vec3, r: f64, half_len: f64, sides: usize) -> TriMesh {
    let a = axis.normalized().unwrap_or(Vec3::Z);
    let u = if a.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    let e1 = (u - a * a.dot(u)).normalized().unwrap();
    let e2 = a.cross(e1);
    let mut vertices = Vec::with_capacity(sides * 2 + 2);
    for ring in [-half_len, half_len] {
        for i in 0..sides {
            let th = 2.0 * std::f64::consts::PI * (i as f64) / (sides as f64);
            vertices.push(center + a * ring + (e1 * th.cos() + e2 * th.sin()) * r);
        }
    }
    vertices.push(center - a * half_len);
    vertices.push(center + a * half_len);
    let bot_c = (sides * 2) as u32;
    let top_c = bot_c + 1;
    let mut tris = Vec::new();
    for i in 0..sides as u32 {
        let j = (i + 1) % sides as u32;
        let (b0, b1) = (i, j);
        let (t0, t1) = (i + sides as u32, j + sides as u32);
        tris.push([b0, b1, t1]);
        tris.push([b0, t1, t0]);
        tris.push([bot_c, b1, b0]);
        tris.push([top_c, t0, t1]);
    }
    TriMesh { vertices, tris }
}
