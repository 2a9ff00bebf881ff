//! Hierarchical point-set feature learning: set abstraction, feature
//! propagation, and the cross-view variant that interpolates far-view
//! features onto near-view points in the shared world frame.

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::nn::{mlp_forward_tracked, ForwardCtx, Mlp, OutAct, ParamStore};
use crate::tape::{Scalar, Tape, Var};
use serde::{Deserialize, Serialize};

/// One set-abstraction level.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaLevelConfig {
    pub centroids: usize,
    pub radius: f64,
    pub k: usize,
    pub mlp: Vec<usize>,
}

/// Architecture of one encoder-decoder pyramid. `fp_mlps` are ordered
/// deepest-first; the last one must end at `feature_dim`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub levels: Vec<SaLevelConfig>,
    pub global_mlp: Vec<usize>,
    pub fp_mlps: Vec<Vec<usize>>,
    /// FP steps (deepest-first indices) that receive far-view injections
    /// in the cross-view decoder.
    pub cross_levels: Vec<usize>,
    pub feature_dim: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("encoder needs at least one SA level".into()));
        }
        for w in self.levels.windows(2) {
            if w[1].radius <= w[0].radius {
                return Err(Error::Config("SA radii must be strictly increasing".into()));
            }
            if w[1].centroids >= w[0].centroids {
                return Err(Error::Config("SA centroid counts must decrease".into()));
            }
        }
        for l in &self.levels {
            if l.centroids == 0 || l.k == 0 || l.radius <= 0.0 || l.mlp.is_empty() {
                return Err(Error::Config("invalid SA level".into()));
            }
        }
        if self.global_mlp.is_empty() {
            return Err(Error::Config("global MLP must be non-empty".into()));
        }
        if self.fp_mlps.len() != self.levels.len() + 1 {
            return Err(Error::Config(format!(
                "need {} FP units for {} SA levels, got {}",
                self.levels.len() + 1,
                self.levels.len(),
                self.fp_mlps.len()
            )));
        }
        let last = self.fp_mlps.last().and_then(|m| m.last()).copied().unwrap_or(0);
        if last != self.feature_dim {
            return Err(Error::Config(format!(
                "final FP width {last} must equal feature_dim {}",
                self.feature_dim
            )));
        }
        for s in &self.cross_levels {
            if *s >= self.fp_mlps.len() {
                return Err(Error::Config(format!("cross level {s} out of range")));
            }
        }
        Ok(())
    }

    /// Default pyramid for production clouds (2048 -> 512 -> 128 -> 1).
    pub fn default_full() -> EncoderConfig {
        EncoderConfig {
            levels: vec![
                SaLevelConfig { centroids: 512, radius: 0.1, k: 32, mlp: vec![32, 32, 64] },
                SaLevelConfig { centroids: 128, radius: 0.2, k: 32, mlp: vec![64, 64, 128] },
            ],
            global_mlp: vec![128, 128, 256],
            fp_mlps: vec![vec![128, 128], vec![128, 128], vec![128, 128]],
            cross_levels: vec![0, 1, 2],
            feature_dim: 128,
        }
    }

    /// Per-level feature dims. Level 0 carries the handcrafted per-point
    /// input channels (see [`LEVEL0_DIM`]); then each SA output, then the
    /// global vector.
    pub fn level_dims(&self) -> Vec<usize> {
        let mut dims = vec![LEVEL0_DIM];
        for l in &self.levels {
            dims.push(*l.mlp.last().unwrap());
        }
        dims.push(*self.global_mlp.last().unwrap());
        dims
    }
}

/// Level-0 input channels per point: centroid-relative position (3),
/// estimated surface normal oriented toward the sensor (3), and the
/// covariance shape descriptors linearity, planarity, scatter and scale
/// (4). All are exact functions of the cloud and translation invariant.
pub const LEVEL0_DIM: usize = 10;

/// Neighborhood for the level-0 covariance descriptors.
const LOCAL_DESC_K: usize = 10;
const LOCAL_DESC_RADIUS: f64 = 0.06;

/// Per-point local covariance descriptors: for each point, the
/// eigen-structure of its neighborhood within `LOCAL_DESC_RADIUS`
/// (at most `LOCAL_DESC_K` nearest neighbors). Thin bars read as high
/// linearity, flat panels as high planarity, and the smallest
/// eigenvector estimates the surface normal (sign oriented toward
/// `viewpoint`).
pub fn local_geometry(points: &[Vec3], viewpoint: Vec3) -> Vec<[f64; 7]> {
    let r2 = LOCAL_DESC_RADIUS * LOCAL_DESC_RADIUS;
    points
        .iter()
        .map(|&p| {
            let mut near: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .filter_map(|(j, q)| {
                    let d = q.dist_sq(p);
                    (d <= r2).then_some((d, j))
                })
                .collect();
            near.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            near.truncate(LOCAL_DESC_K);
            let to_view = (viewpoint - p).normalized().unwrap_or(crate::math::Vec3::Z);
            if near.len() < 3 {
                return [to_view.x, to_view.y, to_view.z, 0.0, 0.0, 0.0, 0.0];
            }
            let mean = near.iter().fold(Vec3::ZERO, |a, &(_, j)| a + points[j])
                / near.len() as f64;
            let mut cov = [[0.0f64; 3]; 3];
            for &(_, j) in &near {
                let d = points[j] - mean;
                let v = [d.x, d.y, d.z];
                for a in 0..3 {
                    for b in 0..3 {
                        cov[a][b] += v[a] * v[b];
                    }
                }
            }
            let n = near.len() as f64;
            for row in cov.iter_mut() {
                for x in row.iter_mut() {
                    *x /= n;
                }
            }
            let (vals, basis) = crate::math::sym_eigen3(&crate::math::Mat3 { m: cov });
            let l1 = vals[0].max(1e-12);
            let mut normal = basis.col(2);
            if normal.dot(to_view) < 0.0 {
                normal = -normal;
            }
            [
                normal.x,
                normal.y,
                normal.z,
                (vals[0] - vals[1]) / l1,
                (vals[1] - vals[2]) / l1,
                vals[2] / l1,
                l1.sqrt(),
            ]
        })
        .collect()
}

/// Greedy max-min farthest point sampling. The first selected index is 0
/// by convention; ties break to the lowest index.
pub fn farthest_point_sample(points: &[Vec3], m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > points.len() {
        return Err(Error::Argument(format!(
            "farthest_point_sample: m={m} out of range for {} points",
            points.len()
        )));
    }
    let mut selected = Vec::with_capacity(m);
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut last = 0usize;
    selected.push(0);
    while selected.len() < m {
        let lp = points[last];
        let mut best = 0usize;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let d = p.dist_sq(lp);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best_d {
                best_d = min_d[i];
                best = i;
            }
        }
        selected.push(best);
        last = best;
    }
    Ok(selected)
}

/// Indices within `radius` of each centroid, nearest-first (ties by index),
/// at most `k` per group. A centroid with no neighbors yields its own
/// index (the self-group).
pub fn ball_query(
    points: &[Vec3],
    centroids: &[usize],
    radius: f64,
    k: usize,
) -> Vec<Vec<usize>> {
    let r2 = radius * radius;
    centroids
        .iter()
        .map(|&c| {
            let cp = points[c];
            let mut within: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .filter_map(|(i, p)| {
                    let d = p.dist_sq(cp);
                    (d <= r2).then_some((d, i))
                })
                .collect();
            within.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            within.truncate(k);
            if within.is_empty() {
                vec![c]
            } else {
                within.into_iter().map(|(_, i)| i).collect()
            }
        })
        .collect()
}

/// 3-nearest-neighbor inverse-distance interpolation weights from `src`
/// onto each of `dst`. When a destination coincides exactly with one or
/// more sources, the weight concentrates equally on those sources (exact
/// copy); otherwise w_j = 1/(d_j + 1e-8), normalized. Sources with fewer
/// than 3 points are padded with zero weights.
pub fn interp_weights(src: &[Vec3], dst: &[Vec3]) -> (Vec<[usize; 3]>, Vec<[f64; 3]>) {
    assert!(!src.is_empty(), "interp_weights: empty source");
    let mut idx_out = Vec::with_capacity(dst.len());
    let mut w_out = Vec::with_capacity(dst.len());
    for d in dst {
        let mut near: Vec<(f64, usize)> =
            src.iter().enumerate().map(|(i, s)| (s.dist(*d), i)).collect();
        near.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        near.truncate(3);
        let mut idx = [near[0].1; 3];
        let mut w = [0.0f64; 3];
        if near[0].0 == 0.0 {
            let zeros = near.iter().filter(|(d, _)| *d == 0.0).count();
            for (j, (_, i)) in near.iter().enumerate().take(zeros) {
                idx[j] = *i;
                w[j] = 1.0 / zeros as f64;
            }
        } else {
            let mut total = 0.0;
            for (j, (dist, i)) in near.iter().enumerate() {
                idx[j] = *i;
                w[j] = 1.0 / (dist + 1e-8);
                total += w[j];
            }
            for wj in w.iter_mut() {
                *wj /= total;
            }
        }
        idx_out.push(idx);
        w_out.push(w);
    }
    (idx_out, w_out)
}

/// One pyramid level: points plus their tape features (input level has
/// none).
pub struct PyrLevel {
    pub points: Vec<Vec3>,
    pub feat: Option<Var>,
}

/// Encoder output: level 0 is the raw cloud; the last level is the single
/// global point (the centroid mean).
pub struct Pyramid {
    pub levels: Vec<PyrLevel>,
}

impl Pyramid {
    pub fn global_feat(&self) -> Var {
        self.levels.last().unwrap().feat.expect("global level has features")
    }
}

/// Parameters of one encoder pyramid.
pub struct EncoderParams {
    pub sa: Vec<Mlp>,
    pub global: Mlp,
}

/// Parameters of one decoder (FP chain). Input widths depend on whether
/// far-view injections are concatenated at each step.
pub struct DecoderParams {
    pub fp: Vec<Mlp>,
    pub cross: bool,
}

pub fn build_encoder_params<S: Scalar>(
    store: &mut ParamStore<S>,
    name: &str,
    cfg: &EncoderConfig,
    seed: u64,
) -> EncoderParams {
    let mut sa = Vec::new();
    // group-relative coordinates plus the handcrafted level-0 channels
    let mut in_dim = 3 + LEVEL0_DIM;
    for (i, level) in cfg.levels.iter().enumerate() {
        sa.push(Mlp::new(store, &format!("{name}.sa{i}"), in_dim, &level.mlp, OutAct::Relu, seed));
        in_dim = 3 + level.mlp.last().unwrap();
    }
    let global = Mlp::new(store, &format!("{name}.global"), in_dim, &cfg.global_mlp, OutAct::Relu, seed);
    EncoderParams { sa, global }
}

pub fn build_decoder_params<S: Scalar>(
    store: &mut ParamStore<S>,
    name: &str,
    cfg: &EncoderConfig,
    cross: bool,
    seed: u64,
) -> DecoderParams {
    let dims = cfg.level_dims();
    let n_steps = cfg.fp_mlps.len();
    let mut fp = Vec::new();
    let mut src_dim = *dims.last().unwrap(); // start from the global vector
    for step in 0..n_steps {
        let src_level = dims.len() - 1 - step; // level being upsampled
        let dst_level = src_level - 1;
        let mut in_dim = src_dim + dims[dst_level]; // interp + skip
        if cross && cfg.cross_levels.contains(&step) {
            in_dim += dims[src_level]; // far features are encoder features
        }
        let mlp = Mlp::new(
            store,
            &format!("{name}.fp{step}"),
            in_dim,
            &cfg.fp_mlps[step],
            OutAct::Relu,
            seed,
        );
        src_dim = *cfg.fp_mlps[step].last().unwrap();
        fp.push(mlp);
    }
    DecoderParams { fp, cross }
}

/// Set abstraction: FPS centroids, ball grouping, shared MLP on
/// [relative coords || member features], per-group max pool.
pub fn set_abstraction<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    ctx: &mut ForwardCtx,
    mlp: &Mlp,
    points: &[Vec3],
    feats: Option<Var>,
    level: &SaLevelConfig,
) -> (Vec<Vec3>, Var) {
    let m = level.centroids.min(points.len());
    let centroid_idx = farthest_point_sample(points, m).expect("m clamped to point count");
    let groups = ball_query(points, &centroid_idx, level.radius, level.k);
    group_and_pool(tape, store, ctx, mlp, points, feats, &centroid_idx, &groups, level.k)
}

/// Group-all "global" abstraction onto a single centroid at the point mean.
pub fn global_abstraction<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    ctx: &mut ForwardCtx,
    mlp: &Mlp,
    points: &[Vec3],
    feats: Option<Var>,
) -> (Vec<Vec3>, Var) {
    let mean = points.iter().fold(Vec3::ZERO, |a, &p| a + p) / points.len() as f64;
    let k = points.len();
    let members: Vec<usize> = (0..k).collect();
    // shared grouping path with one group holding every point
    let mut rel = Vec::with_capacity(k * 3);
    for &i in &members {
        let r = points[i] - mean;
        rel.extend_from_slice(&[S::from_f64(r.x), S::from_f64(r.y), S::from_f64(r.z)]);
    }
    let rel_var = tape.leaf(rel, k, 3);
    let input = match feats {
        Some(f) => {
            let gathered = tape.gather_rows(f, &members);
            tape.concat_cols(&[rel_var, gathered])
        }
        None => rel_var,
    };
    let transformed = mlp_forward_tracked(mlp, tape, store, ctx, input);
    let pooled = tape.group_max_pool(transformed, k);
    (vec![mean], pooled)
}

#[allow(clippy::too_many_arguments)]
fn group_and_pool<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    ctx: &mut ForwardCtx,
    mlp: &Mlp,
    points: &[Vec3],
    feats: Option<Var>,
    centroid_idx: &[usize],
    groups: &[Vec<usize>],
    k: usize,
) -> (Vec<Vec3>, Var) {
    let g = centroid_idx.len();
    // pad each group to k by repeating its nearest member so pooling over
    // the fixed-size multiset equals pooling over the true group
    let mut flat = Vec::with_capacity(g * k);
    for grp in groups {
        for j in 0..k {
            flat.push(grp[j.min(grp.len() - 1)]);
        }
    }
    let mut rel = Vec::with_capacity(g * k * 3);
    for (gi, &ci) in centroid_idx.iter().enumerate() {
        let c = points[ci];
        for j in 0..k {
            let r = points[flat[gi * k + j]] - c;
            rel.extend_from_slice(&[S::from_f64(r.x), S::from_f64(r.y), S::from_f64(r.z)]);
        }
    }
    let rel_var = tape.leaf(rel, g * k, 3);
    let input = match feats {
        Some(f) => {
            let gathered = tape.gather_rows(f, &flat);
            tape.concat_cols(&[rel_var, gathered])
        }
        None => rel_var,
    };
    let transformed = mlp_forward_tracked(mlp, tape, store, ctx, input);
    let pooled = tape.group_max_pool(transformed, k);
    let sub_points = centroid_idx.iter().map(|&i| points[i]).collect();
    (sub_points, pooled)
}

/// Inverse-distance 3-NN interpolation of `src_feat` onto `dst_points`,
/// concatenated with optional skip features, then the unit pointnet.
pub fn feature_propagation<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    ctx: &mut ForwardCtx,
    unit: &Mlp,
    src_points: &[Vec3],
    src_feat: Var,
    dst_points: &[Vec3],
    skip: Option<Var>,
) -> Var {
    let (idx, w) = interp_weights(src_points, dst_points);
    let interp = tape.interp_rows(src_feat, idx, w);
    let input = match skip {
        Some(s) => tape.concat_cols(&[interp, s]),
        None => interp,
    };
    mlp_forward_tracked(unit, tape, store, ctx, input)
}

/// Run the full SA pyramid over a cloud. Level-0 features combine the
/// points' offsets from the cloud centroid with the local covariance
/// descriptors, keeping the pyramid translation invariant while giving
/// the decoder's final skip connection per-point spatial and shape
/// resolution. `viewpoint` is the capturing camera position (orients the
/// estimated normals).
pub fn encode<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    ctx: &mut ForwardCtx,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    points: &[Vec3],
    viewpoint: Vec3,
) -> Pyramid {
    let centroid = points.iter().fold(Vec3::ZERO, |a, &p| a + p) / points.len() as f64;
    let desc = local_geometry(points, viewpoint);
    let mut rel = Vec::with_capacity(points.len() * LEVEL0_DIM);
    for (p, d) in points.iter().zip(&desc) {
        let r = *p - centroid;
        rel.extend_from_slice(&[S::from_f64(r.x), S::from_f64(r.y), S::from_f64(r.z)]);
        rel.extend(d.iter().map(|v| S::from_f64(*v)));
    }
    let feat0 = tape.leaf(rel, points.len(), LEVEL0_DIM);
    let mut levels = vec![PyrLevel { points: points.to_vec(), feat: Some(feat0) }];
    let mut cur_points = points.to_vec();
    let mut cur_feat: Option<Var> = Some(feat0);
    for (i, level_cfg) in cfg.levels.iter().enumerate() {
        let (pts, feat) =
            set_abstraction(tape, store, ctx, &params.sa[i], &cur_points, cur_feat, level_cfg);
        levels.push(PyrLevel { points: pts.clone(), feat: Some(feat) });
        cur_points = pts;
        cur_feat = Some(feat);
    }
    let (gp, gf) = global_abstraction(tape, store, ctx, &params.global, &cur_points, cur_feat);
    levels.push(PyrLevel { points: gp, feat: Some(gf) });
    Pyramid { levels }
}

/// FP decode of a pyramid down to per-point features (dim
/// `cfg.feature_dim`). With `cross = Some(far)`, the configured FP steps
/// additionally interpolate the matching far level onto the near points in
/// the shared world frame and concatenate it before the unit net.
pub fn decode<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    ctx: &mut ForwardCtx,
    params: &DecoderParams,
    cfg: &EncoderConfig,
    pyr: &Pyramid,
    cross: Option<&Pyramid>,
) -> Var {
    if let Some(far) = cross {
        assert_eq!(
            far.levels.len(),
            pyr.levels.len(),
            "cross-view pyramids must have equal depth"
        );
    }
    let top = pyr.levels.len() - 1;
    let mut cur = pyr.global_feat();
    let mut cur_points = pyr.levels[top].points.clone();
    for step in 0..params.fp.len() {
        let src_level = top - step;
        let dst_level = src_level - 1;
        let dst_points = &pyr.levels[dst_level].points;
        let (idx, w) = interp_weights(&cur_points, dst_points);
        let interp = tape.interp_rows(cur, idx, w);
        let mut parts = vec![interp];
        if params.cross && cfg.cross_levels.contains(&step) {
            let far = cross.expect("cross decoder requires a far pyramid");
            let farl = &far.levels[src_level];
            let (fidx, fw) = interp_weights(&farl.points, dst_points);
            let finterp = tape.interp_rows(farl.feat.expect("far level has features"), fidx, fw);
            parts.push(finterp);
        }
        if let Some(skip) = pyr.levels[dst_level].feat {
            parts.push(skip);
        }
        let input = if parts.len() == 1 { parts[0] } else { tape.concat_cols(&parts) };
        cur = mlp_forward_tracked(&params.fp[step], tape, store, ctx, input);
        cur_points = dst_points.clone();
    }
    cur
}

/// Cross-view propagation: encode-decode the near pyramid with far-level
/// injections at every configured FP step, yielding one `feature_dim`
/// feature per near point.
pub fn cross_view_propagate<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    ctx: &mut ForwardCtx,
    decoder: &DecoderParams,
    cfg: &EncoderConfig,
    far_pyr: &Pyramid,
    near_pyr: &Pyramid,
) -> Result<Var> {
    if far_pyr.levels.len() != near_pyr.levels.len() {
        return Err(Error::Config("mismatched pyramid depths".into()));
    }
    Ok(decode(tape, store, ctx, decoder, cfg, near_pyr, Some(far_pyr)))
}
