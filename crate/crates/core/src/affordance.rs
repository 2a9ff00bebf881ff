//! Coarse (where to zoom) and Fine (how actionable is this action)
//! affordance networks plus their losses.
//!
//! The coarse net scores every far-view point for zoom-in value. The fine
//! net embeds every near-view point into a 128-dim feature, decoding the
//! near pyramid with far-view injections (or, in the `Separate` ablation
//! variant, fusing a single far global vector instead), and its critic
//! scores (feature, orientation, task) triples.

use crate::encoder::{
    build_decoder_params, build_encoder_params, decode, encode, DecoderParams, EncoderConfig,
    EncoderParams, Pyramid,
};
use crate::error::{Error, Result};
use crate::interaction::Task;
use crate::math::Vec3;
use crate::nn::{mlp_forward_tracked, ForwardCtx, Mlp, OutAct, ParamStore};
use crate::sensor::PointCloud;
use crate::tape::{Scalar, Tape, Var};
use serde::{Deserialize, Serialize};

/// Per-point scores in [0,1], aligned index-for-index with a cloud.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffordanceMap {
    pub scores: Vec<f64>,
}

/// Supervision radius of the coarse label rule: a record supervises the
/// coarse score at its zoom point only when the manipulation point landed
/// within `delta` of it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseLabelRule {
    pub delta: f64,
}

impl Default for CoarseLabelRule {
    fn default() -> Self {
        CoarseLabelRule { delta: 0.1 }
    }
}

impl CoarseLabelRule {
    pub fn validate(&self) -> Result<()> {
        if self.delta <= 0.0 {
            return Err(Error::Config("coarse label delta must be positive".into()));
        }
        Ok(())
    }

    pub fn gate(&self, p: Vec3, p_far: Vec3) -> bool {
        p.dist(p_far) <= self.delta
    }
}

/// Probability clamp used by every BCE in the pipeline.
pub const PROB_EPS: f64 = 1e-7;

/// Coarse module: far encoder-decoder plus per-point sigmoid head.
pub struct CoarseNet {
    pub enc: EncoderParams,
    pub dec: DecoderParams,
    pub head: Mlp,
}

impl CoarseNet {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        cfg: &EncoderConfig,
        head_widths: &[usize],
        seed: u64,
    ) -> CoarseNet {
        let enc = build_encoder_params(store, "coarse.enc", cfg, seed);
        let dec = build_decoder_params(store, "coarse.dec", cfg, false, seed);
        let mut widths = head_widths.to_vec();
        widths.push(1);
        let head = Mlp::new_zero_final(
            store,
            "coarse.head",
            cfg.feature_dim,
            &widths,
            OutAct::Sigmoid,
            seed,
        );
        CoarseNet { enc, dec, head }
    }

    /// Per-point zoom-in scores, shape [N x 1]. `viewpoint` is the far
    /// camera position.
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        ctx: &mut ForwardCtx,
        cfg: &EncoderConfig,
        points: &[Vec3],
        viewpoint: Vec3,
    ) -> Var {
        let pyr = encode(tape, store, ctx, &self.enc, cfg, points, viewpoint);
        let feats = decode(tape, store, ctx, &self.dec, cfg, &pyr, None);
        mlp_forward_tracked(&self.head, tape, store, ctx, feats)
    }
}

/// Inference entry: coarse scores for a far cloud.
pub fn coarse_forward<S: Scalar>(
    store: &ParamStore<S>,
    net: &CoarseNet,
    cfg: &EncoderConfig,
    cloud: &PointCloud,
) -> AffordanceMap {
    let mut tape = Tape::new();
    let mut ctx = ForwardCtx::new();
    let scores =
        net.forward(&mut tape, store, &mut ctx, cfg, &cloud.points, cloud.source_pose.position);
    AffordanceMap { scores: tape.value(scores).iter().map(|v| v.to_f64()).collect() }
}

/// Argmax zoom point; ties break to the lowest index.
pub fn select_zoom_point(map: &AffordanceMap, cloud: &PointCloud) -> (usize, Vec3) {
    assert!(!map.scores.is_empty(), "select_zoom_point on empty map");
    assert_eq!(map.scores.len(), cloud.points.len(), "map/cloud length mismatch");
    let mut best = 0usize;
    for (i, s) in map.scores.iter().enumerate() {
        if *s > map.scores[best] {
            best = i;
        }
    }
    (best, cloud.points[best])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FineVariant {
    /// Cross-view feature propagation at every configured FP level.
    Integrated,
    /// Ablation: near-only decoding plus one far global vector fused per
    /// point.
    Separate,
}

/// Fine module: near+far encoders, cross-view (or fused) decoding, and the
/// action critic.
pub struct FineNet {
    pub variant: FineVariant,
    pub far_enc: EncoderParams,
    pub near_enc: EncoderParams,
    pub dec: DecoderParams,
    pub fuse: Option<Mlp>,
    pub critic: Mlp,
}

/// Critic input width: per-point feature, 6D orientation, task one-hot.
pub fn critic_in_dim(feature_dim: usize) -> usize {
    feature_dim + 6 + 2
}

impl FineNet {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        cfg: &EncoderConfig,
        variant: FineVariant,
        critic_widths: &[usize],
        seed: u64,
    ) -> FineNet {
        let far_enc = build_encoder_params(store, "fine.far_enc", cfg, seed);
        let near_enc = build_encoder_params(store, "fine.near_enc", cfg, seed.wrapping_add(1));
        let cross = variant == FineVariant::Integrated;
        let dec = build_decoder_params(store, "fine.dec", cfg, cross, seed);
        let fuse = match variant {
            FineVariant::Integrated => None,
            FineVariant::Separate => {
                let global_dim = *cfg.global_mlp.last().unwrap();
                Some(Mlp::new(
                    store,
                    "fine.fuse",
                    cfg.feature_dim + global_dim,
                    &[cfg.feature_dim, cfg.feature_dim],
                    OutAct::Relu,
                    seed,
                ))
            }
        };
        let mut widths = critic_widths.to_vec();
        widths.push(1);
        let critic = Mlp::new_zero_final(
            store,
            "fine.critic",
            critic_in_dim(cfg.feature_dim),
            &widths,
            OutAct::Sigmoid,
            seed,
        );
        FineNet { variant, far_enc, near_enc, dec, fuse, critic }
    }

    /// Per-near-point features, shape [N x feature_dim]. The viewpoints
    /// are the capturing camera positions of each cloud.
    #[allow(clippy::too_many_arguments)]
    pub fn forward<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        ctx: &mut ForwardCtx,
        cfg: &EncoderConfig,
        near_points: &[Vec3],
        near_viewpoint: Vec3,
        far_points: &[Vec3],
        far_viewpoint: Vec3,
    ) -> Var {
        let far_pyr = encode(tape, store, ctx, &self.far_enc, cfg, far_points, far_viewpoint);
        let near_pyr = encode(tape, store, ctx, &self.near_enc, cfg, near_points, near_viewpoint);
        match self.variant {
            FineVariant::Integrated => {
                decode(tape, store, ctx, &self.dec, cfg, &near_pyr, Some(&far_pyr))
            }
            FineVariant::Separate => {
                let near_feat = decode(tape, store, ctx, &self.dec, cfg, &near_pyr, None);
                self.fuse_with_global(tape, store, ctx, near_feat, &far_pyr, near_points.len())
            }
        }
    }

    fn fuse_with_global<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        ctx: &mut ForwardCtx,
        near_feat: Var,
        far_pyr: &Pyramid,
        n: usize,
    ) -> Var {
        let global = far_pyr.global_feat();
        let broadcast = tape.gather_rows(global, &vec![0; n]);
        let cat = tape.concat_cols(&[near_feat, broadcast]);
        mlp_forward_tracked(self.fuse.as_ref().expect("separate variant has fuse"), tape, store, ctx, cat)
    }

    /// Critic scores for rows of (feature, rot6d, task), shape [n x 1].
    pub fn critic_scores<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        store: &ParamStore<S>,
        ctx: &mut ForwardCtx,
        f_rows: Var,
        rot6d: &[[f64; 6]],
        tasks: &[Task],
    ) -> Var {
        let n = tape.rows(f_rows);
        assert_eq!(rot6d.len(), n);
        assert_eq!(tasks.len(), n);
        let mut act_cols = Vec::with_capacity(n * 8);
        for (r, t) in rot6d.iter().zip(tasks) {
            for v in r {
                act_cols.push(S::from_f64(*v));
            }
            for v in t.one_hot() {
                act_cols.push(S::from_f64(v));
            }
        }
        let act = tape.leaf(act_cols, n, 8);
        let cat = tape.concat_cols(&[f_rows, act]);
        mlp_forward_tracked(&self.critic, tape, store, ctx, cat)
    }
}

/// Frames must share one world frame before the fine module may fuse them.
pub fn check_shared_frame(near: &PointCloud, far: &PointCloud) -> Result<()> {
    if near.points.is_empty() || far.points.is_empty() {
        return Err(Error::Argument("empty cloud passed to fine_forward".into()));
    }
    Ok(())
}

/// Inference entry: per-point fine features for a near cloud.
pub fn fine_forward<S: Scalar>(
    store: &ParamStore<S>,
    net: &FineNet,
    cfg: &EncoderConfig,
    near: &PointCloud,
    far: &PointCloud,
) -> Result<Vec<Vec<f64>>> {
    check_shared_frame(near, far)?;
    let mut tape = Tape::new();
    let mut ctx = ForwardCtx::new();
    let f = net.forward(
        &mut tape,
        store,
        &mut ctx,
        cfg,
        &near.points,
        near.source_pose.position,
        &far.points,
        far.source_pose.position,
    );
    let c = tape.cols(f);
    Ok(tape
        .value(f)
        .chunks_exact(c)
        .map(|row| row.iter().map(|v| v.to_f64()).collect())
        .collect())
}

/// Inference entry: critic probability for one (feature, action) pair.
pub fn critic<S: Scalar>(
    store: &ParamStore<S>,
    net: &FineNet,
    f_p: &[f64],
    rot6d: [f64; 6],
    task: Task,
) -> f64 {
    let mut tape = Tape::new();
    let mut ctx = ForwardCtx::new();
    let f = tape.leaf(f_p.iter().map(|v| S::from_f64(*v)).collect(), 1, f_p.len());
    let s = net.critic_scores(&mut tape, store, &mut ctx, f, &[rot6d], &[task]);
    tape.scalar_value(s)
}

/// Gated mean BCE for the coarse module. `gates` marks records whose
/// manipulation point fell within the label rule's radius of the zoom
/// point. Returns `None` when no record is gated (the caller counts a
/// warning and treats the loss as zero).
pub fn coarse_loss_from_scores<S: Scalar>(
    tape: &mut Tape<S>,
    scores: Var,
    gts: &[f64],
    gates: &[bool],
) -> Option<Var> {
    if gates.iter().all(|g| !g) {
        return None;
    }
    let gate_f: Vec<f64> = gates.iter().map(|&g| if g { 1.0 } else { 0.0 }).collect();
    Some(tape.bce_mean(scores, gts, &gate_f, PROB_EPS))
}

/// Ungated mean BCE for the fine critic.
pub fn fine_loss_from_scores<S: Scalar>(tape: &mut Tape<S>, scores: Var, gts: &[f64]) -> Var {
    let gates = vec![1.0; gts.len()];
    tape.bce_mean(scores, gts, &gates, PROB_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::SaLevelConfig;
    use crate::sensor::CameraPose;

    fn tiny_cfg() -> EncoderConfig {
        EncoderConfig {
            levels: vec![SaLevelConfig { centroids: 6, radius: 0.4, k: 4, mlp: vec![8] }],
            global_mlp: vec![12],
            fp_mlps: vec![vec![10], vec![16]],
            cross_levels: vec![0, 1],
            feature_dim: 16,
        }
    }

    fn cloud(n: usize, seed: u64) -> PointCloud {
        let mut state = seed;
        let mut r = move || {
            state = crate::math::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        PointCloud {
            points: (0..n).map(|_| Vec3::new(r(), r(), r())).collect(),
            source_pose: CameraPose {
                position: Vec3::new(0.0, 3.0, 0.0),
                look_at: Vec3::ZERO,
                up: Vec3::Z,
            },
        }
    }

    #[test]
    fn coarse_scores_in_unit_interval_and_fresh_head_at_half() {
        let cfg = tiny_cfg();
        let mut store = ParamStore::<f64>::new();
        let net = CoarseNet::new(&mut store, &cfg, &[8], 3);
        let map = coarse_forward(&store, &net, &cfg, &cloud(12, 5));
        assert_eq!(map.scores.len(), 12);
        for s in &map.scores {
            // zero-initialized head: exactly 0.5 before training
            assert!((s - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_scores_permute_with_input() {
        let cfg = tiny_cfg();
        let mut store = ParamStore::<f64>::new();
        let net = CoarseNet::new(&mut store, &cfg, &[8], 3);
        // train-free equivariance needs a non-constant head; randomize it
        let mut k = 0.0;
        let ids: Vec<_> = store.iter_ids().collect();
        for id in ids {
            for v in store.values_mut(id) {
                k += 0.618;
                *v += (k % 1.0) * 0.2 - 0.1;
            }
        }
        let c = cloud(10, 6);
        let map = coarse_forward(&store, &net, &cfg, &c);
        // a permutation that fixes index 0 (the FPS seed point)
        let perm: Vec<usize> = vec![0, 3, 1, 2, 7, 9, 4, 6, 5, 8];
        let pc = PointCloud {
            points: perm.iter().map(|&i| c.points[i]).collect(),
            source_pose: c.source_pose.clone(),
        };
        let pmap = coarse_forward(&store, &net, &cfg, &pc);
        for (pi, &src) in perm.iter().enumerate() {
            assert!(
                (pmap.scores[pi] - map.scores[src]).abs() < 1e-9,
                "score at permuted {pi} (src {src})"
            );
        }
    }

    #[test]
    fn zoom_point_argmax_and_ties() {
        let c = cloud(3, 1);
        let map = AffordanceMap { scores: vec![0.1, 0.9, 0.3] };
        assert_eq!(select_zoom_point(&map, &c).0, 1);
        let flat = AffordanceMap { scores: vec![0.5, 0.5, 0.5] };
        assert_eq!(select_zoom_point(&flat, &c).0, 0);
        let scaled = AffordanceMap { scores: map.scores.iter().map(|s| s * 0.5).collect() };
        assert_eq!(select_zoom_point(&scaled, &c).0, 1);
    }

    #[test]
    fn fine_forward_shape_and_critic_range() {
        let cfg = tiny_cfg();
        let mut store = ParamStore::<f64>::new();
        let net = FineNet::new(&mut store, &cfg, FineVariant::Integrated, &[8], 4);
        let near = cloud(9, 2);
        let far = cloud(11, 3);
        let f = fine_forward(&store, &net, &cfg, &near, &far).unwrap();
        assert_eq!(f.len(), 9);
        assert!(f.iter().all(|row| row.len() == cfg.feature_dim));
        let c = critic::<f64>(&store, &net, &f[0], [1.0, 0.0, 0.0, 0.0, 1.0, 0.0], Task::PullOpen);
        assert!((c - 0.5).abs() < 1e-12); // zero-initialized critic head
    }

    #[test]
    fn separate_variant_shapes() {
        let cfg = tiny_cfg();
        let mut store = ParamStore::<f64>::new();
        let net = FineNet::new(&mut store, &cfg, FineVariant::Separate, &[8], 4);
        let f = fine_forward(&store, &net, &cfg, &cloud(7, 2), &cloud(13, 3)).unwrap();
        assert_eq!(f.len(), 7);
        assert!(f.iter().all(|row| row.len() == cfg.feature_dim));
    }

    #[test]
    fn coarse_loss_gating_and_hand_batch() {
        // batch of 4 hand-set (a_p, gt, gate) tuples
        let mut tape = Tape::<f64>::new();
        let probs = tape.leaf(vec![0.9, 0.2, 0.6, 0.5], 4, 1);
        let gts = [1.0, 0.0, 1.0, 0.0];
        let gates = [true, true, false, true];
        let loss = coarse_loss_from_scores(&mut tape, probs, &gts, &gates).unwrap();
        let want = (-(0.9f64.ln()) - (1.0f64 - 0.2).ln() - 0.5f64.ln()) / 3.0;
        assert!((tape.scalar_value(loss) - want).abs() < 1e-12);

        // all-gated-out batch is None (caller logs a warning, loss 0)
        let mut tape = Tape::<f64>::new();
        let probs = tape.leaf(vec![0.9, 0.2], 2, 1);
        assert!(coarse_loss_from_scores(&mut tape, probs, &[1.0, 0.0], &[false, false]).is_none());
    }

    #[test]
    fn fine_loss_closed_forms() {
        let mut tape = Tape::<f64>::new();
        let probs = tape.leaf(vec![0.5], 1, 1);
        let l = fine_loss_from_scores(&mut tape, probs, &[1.0]);
        assert!((tape.scalar_value(l) - std::f64::consts::LN_2).abs() < 1e-12);

        let mut tape = Tape::<f64>::new();
        let probs = tape.leaf(vec![0.0], 1, 1);
        let l = fine_loss_from_scores(&mut tape, probs, &[0.0]);
        assert!(tape.scalar_value(l) <= 1.2e-7);
    }

    #[test]
    fn zero_weight_critic_outputs_half_for_any_input() {
        let cfg = tiny_cfg();
        let mut store = ParamStore::<f64>::new();
        let net = FineNet::new(&mut store, &cfg, FineVariant::Integrated, &[8], 4);
        let mut state = 5u64;
        let mut r = move || {
            state = crate::math::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for _ in 0..100 {
            let f: Vec<f64> = (0..cfg.feature_dim).map(|_| r()).collect();
            let rot = [r(), r(), r(), r(), r(), r()];
            let c = critic::<f64>(&store, &net, &f, rot, Task::PushClose);
            assert!((c - 0.5).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&c));
        }
    }
}
