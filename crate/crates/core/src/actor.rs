//! Action proposal (cVAE over 6D gripper orientations conditioned on point
//! features), the action scoring head, and the end-to-end action selector.

use crate::affordance::FineNet;
use crate::encoder::EncoderConfig;
use crate::interaction::{Action, Task};
use crate::math::derive_seed;
use crate::nn::{mlp_forward_tracked, ForwardCtx, Mlp, OutAct, ParamStore};
use crate::sensor::{standard_normal, PointCloud};
use crate::tape::{Scalar, Tape, Var};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorConfig {
    pub z_dim: usize,
    pub beta: f64,
    pub n_proposals: usize,
    pub k_points: usize,
    pub enc_widths: Vec<usize>,
    pub dec_widths: Vec<usize>,
    pub ds_widths: Vec<usize>,
}

impl Default for ActorConfig {
    fn default() -> Self {
        ActorConfig {
            z_dim: 16,
            beta: 0.01,
            n_proposals: 32,
            k_points: 10,
            enc_widths: vec![128, 128],
            dec_widths: vec![128, 128],
            ds_widths: vec![128, 128],
        }
    }
}

impl ActorConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.z_dim == 0 || self.n_proposals == 0 || self.k_points == 0 {
            return Err(crate::Error::Config(
                "actor z_dim, n_proposals and k_points must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// cVAE encoder/decoder plus the action scoring head D_s.
pub struct ActorNet {
    pub z_dim: usize,
    /// q(z | f_p, rot6d): outputs [mu, logvar].
    pub enc: Mlp,
    /// rot6d = dec(f_p, z).
    pub dec: Mlp,
    /// Action scorer D_s(f_p, rot6d) in [0,1].
    pub ds: Mlp,
}

impl ActorNet {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        feature_dim: usize,
        cfg: &ActorConfig,
        seed: u64,
    ) -> ActorNet {
        let mut enc_w = cfg.enc_widths.clone();
        enc_w.push(2 * cfg.z_dim);
        let enc = Mlp::new(store, "actor.enc", feature_dim + 6, &enc_w, OutAct::None, seed);
        // start the posterior tight (logvar = -2): reconstruction signal
        // reaches the decoder before the reparameterization noise drowns it
        let (_, b_last) = *enc.layers.last().expect("enc has layers");
        for v in store.values_mut(b_last)[cfg.z_dim..].iter_mut() {
            *v = S::from_f64(-2.0);
        }
        let mut dec_w = cfg.dec_widths.clone();
        dec_w.push(6);
        let dec = Mlp::new(store, "actor.dec", feature_dim + cfg.z_dim, &dec_w, OutAct::None, seed);
        let mut ds_w = cfg.ds_widths.clone();
        ds_w.push(1);
        let ds =
            Mlp::new_zero_final(store, "actor.ds", feature_dim + 6, &ds_w, OutAct::Sigmoid, seed);
        ActorNet { z_dim: cfg.z_dim, enc, dec, ds }
    }
}

/// Decode `n` prior samples per feature row into 6D orientations and
/// orthonormalize each via Gram-Schmidt, so every proposal is a valid
/// rotation in 6D form (and critic inputs stay in the distribution seen
/// during training, where executed orientations are orthonormal).
/// Row-major output: proposals `[i * n + j]` belongs to feature row `i`.
/// Deterministic in `seed`.
pub fn propose_batch<S: Scalar>(
    store: &ParamStore<S>,
    net: &ActorNet,
    features: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Vec<[f64; 6]> {
    assert!(n >= 1, "propose requires n >= 1");
    let rows = features.len() * n;
    let fdim = features[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xac7097));
    let mut z = Vec::with_capacity(rows * net.z_dim);
    for _ in 0..rows * net.z_dim {
        z.push(S::from_f64(standard_normal(&mut rng)));
    }
    let mut tape = Tape::new();
    let mut ctx = ForwardCtx::new();
    let mut f_flat = Vec::with_capacity(rows * fdim);
    for f in features {
        for _ in 0..n {
            f_flat.extend(f.iter().map(|v| S::from_f64(*v)));
        }
    }
    let f_var = tape.leaf(f_flat, rows, fdim);
    let z_var = tape.leaf(z, rows, net.z_dim);
    let cat = tape.concat_cols(&[f_var, z_var]);
    let out = mlp_forward_tracked(&net.dec, &mut tape, store, &mut ctx, cat);
    tape.value(out)
        .chunks_exact(6)
        .map(|c| {
            let raw = [
                c[0].to_f64(),
                c[1].to_f64(),
                c[2].to_f64(),
                c[3].to_f64(),
                c[4].to_f64(),
                c[5].to_f64(),
            ];
            crate::math::matrix_to_rot6d(&crate::math::rot6d_to_matrix(&raw))
        })
        .collect()
}

/// Propose `n` actions at one point. Orientations orthonormalize to valid
/// rotations through [`Action::rotation`].
pub fn propose<S: Scalar>(
    store: &ParamStore<S>,
    net: &ActorNet,
    f_p: &[f64],
    p: crate::math::Vec3,
    task: Task,
    n: usize,
    seed: u64,
) -> Vec<Action> {
    propose_batch(store, net, &[f_p.to_vec()], n, seed)
        .into_iter()
        .map(|rot6d| Action { p, rot6d, task })
        .collect()
}

/// Mean BCE of D_s over a batch of (feature, orientation, outcome) rows.
pub fn actor_scoring_loss<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    ctx: &mut ForwardCtx,
    net: &ActorNet,
    f_rows: Var,
    rot6d: &[[f64; 6]],
    labels: &[f64],
) -> Var {
    let n = tape.rows(f_rows);
    assert_eq!(rot6d.len(), n);
    assert_eq!(labels.len(), n);
    let mut cols = Vec::with_capacity(n * 6);
    for r in rot6d {
        cols.extend(r.iter().map(|v| S::from_f64(*v)));
    }
    let rot = tape.leaf(cols, n, 6);
    let cat = tape.concat_cols(&[f_rows, rot]);
    let probs = mlp_forward_tracked(&net.ds, tape, store, ctx, cat);
    let gates = vec![1.0; n];
    tape.bce_mean(probs, labels, &gates, crate::affordance::PROB_EPS)
}

/// The three scalars of the cVAE objective.
pub struct CvaeLosses {
    pub total: Var,
    pub recon: Var,
    pub kl: Var,
}

/// cVAE loss over positive records: squared 6D reconstruction error plus
/// beta-weighted closed-form KL to the standard normal. The
/// reparameterization noise is drawn from `seed`.
pub fn cvae_loss<S: Scalar>(
    tape: &mut Tape<S>,
    store: &ParamStore<S>,
    ctx: &mut ForwardCtx,
    net: &ActorNet,
    f_rows: Var,
    target_rot6d: &[[f64; 6]],
    beta: f64,
    seed: u64,
) -> CvaeLosses {
    let n = tape.rows(f_rows);
    assert_eq!(target_rot6d.len(), n);
    let mut cols = Vec::with_capacity(n * 6);
    let mut flat_target = Vec::with_capacity(n * 6);
    for r in target_rot6d {
        cols.extend(r.iter().map(|v| S::from_f64(*v)));
        flat_target.extend_from_slice(r);
    }
    let rot = tape.leaf(cols, n, 6);
    let enc_in = tape.concat_cols(&[f_rows, rot]);
    let enc_out = mlp_forward_tracked(&net.enc, tape, store, ctx, enc_in);
    let mu = tape.slice_cols(enc_out, 0, net.z_dim);
    let logvar = tape.slice_cols(enc_out, net.z_dim, net.z_dim);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xc4ae));
    let eps: Vec<S> =
        (0..n * net.z_dim).map(|_| S::from_f64(standard_normal(&mut rng))).collect();
    let half_lv = tape.scale(logvar, 0.5);
    let std = tape.exp(half_lv);
    let noise = tape.mul_const(std, eps);
    let z = tape.add(mu, noise);

    let dec_in = tape.concat_cols(&[f_rows, z]);
    let recon = mlp_forward_tracked(&net.dec, tape, store, ctx, dec_in);
    let recon_loss = tape.mse_mean(recon, &flat_target);
    let kl = tape.kl_normal_mean(mu, logvar);
    let kl_w = tape.scale(kl, beta);
    let total = tape.add(recon_loss, kl_w);
    CvaeLosses { total, recon: recon_loss, kl }
}

/// Diagnostics from [`select_action`]: per-point potential (max critic
/// score over that point's proposals).
pub struct SelectionDetail {
    pub potentials: Vec<f64>,
    pub best_point: usize,
    pub best_proposal: usize,
    pub best_score: f64,
}

/// End-to-end selection: fine features for every near point, `n_proposals`
/// orientations per point, critic scoring, restriction to the `k_points`
/// highest-potential points, then the globally best (p, R). Ties break to
/// the lowest point index, then the lowest proposal index.
#[allow(clippy::too_many_arguments)]
pub fn select_action<S: Scalar>(
    store: &ParamStore<S>,
    fine: &FineNet,
    actor: &ActorNet,
    cfg: &EncoderConfig,
    near: &PointCloud,
    far: &PointCloud,
    task: Task,
    k_points: usize,
    n_proposals: usize,
    seed: u64,
) -> crate::Result<(Action, SelectionDetail)> {
    let feats = crate::affordance::fine_forward(store, fine, cfg, near, far)?;
    let n_pts = feats.len();
    let proposals = propose_batch(store, actor, &feats, n_proposals, seed);

    // critic over every (point, proposal) row in one pass
    let mut tape = Tape::new();
    let mut ctx = ForwardCtx::new();
    let fdim = feats[0].len();
    let mut f_flat = Vec::with_capacity(n_pts * n_proposals * fdim);
    for f in &feats {
        for _ in 0..n_proposals {
            f_flat.extend(f.iter().map(|v| S::from_f64(*v)));
        }
    }
    let f_var = tape.leaf(f_flat, n_pts * n_proposals, fdim);
    let tasks = vec![task; n_pts * n_proposals];
    let scores_var = fine.critic_scores(&mut tape, store, &mut ctx, f_var, &proposals, &tasks);
    let scores: Vec<f64> = tape.value(scores_var).iter().map(|v| v.to_f64()).collect();

    let potentials: Vec<f64> = (0..n_pts)
        .map(|i| {
            scores[i * n_proposals..(i + 1) * n_proposals]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut order: Vec<usize> = (0..n_pts).collect();
    order.sort_by(|&a, &b| {
        potentials[b].partial_cmp(&potentials[a]).unwrap().then(a.cmp(&b))
    });
    order.truncate(k_points.min(n_pts));

    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    let mut shortlisted = order.clone();
    shortlisted.sort_unstable(); // scan in ascending point order for the tie rule
    for &i in &shortlisted {
        for j in 0..n_proposals {
            let s = scores[i * n_proposals + j];
            if s > best.2 {
                best = (i, j, s);
            }
        }
    }
    let (bi, bj, bs) = best;
    let action = Action { p: near.points[bi], rot6d: proposals[bi * n_proposals + bj], task };
    Ok((
        action,
        SelectionDetail { potentials, best_point: bi, best_proposal: bj, best_score: bs },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affordance::FineVariant;
    use crate::encoder::SaLevelConfig;
    use crate::math::Vec3;
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

    fn actor_cfg() -> ActorConfig {
        ActorConfig {
            z_dim: 4,
            beta: 0.01,
            n_proposals: 5,
            k_points: 3,
            enc_widths: vec![12],
            dec_widths: vec![12],
            ds_widths: vec![12],
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
    fn proposals_are_valid_rotations_and_seed_deterministic() {
        let mut store = ParamStore::<f64>::new();
        let net = ActorNet::new(&mut store, 16, &actor_cfg(), 7);
        let f: Vec<f64> = (0..16).map(|i| (i as f64) * 0.1 - 0.8).collect();
        let a = propose(&store, &net, &f, Vec3::ZERO, Task::PullOpen, 16, 42);
        let b = propose(&store, &net, &f, Vec3::ZERO, Task::PullOpen, 16, 42);
        let c = propose(&store, &net, &f, Vec3::ZERO, Task::PullOpen, 16, 43);
        assert_eq!(a.len(), 16);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.rot6d, y.rot6d);
        }
        assert!(a.iter().zip(&c).any(|(x, y)| x.rot6d != y.rot6d));
        for act in &a {
            let r = act.rotation();
            let rt_r = r.transpose().mul_mat(&r);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((rt_r.m[i][j] - want).abs() < 1e-5);
                }
            }
            assert!((r.det() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_weight_decoder_yields_constant_proposals() {
        let mut store = ParamStore::<f64>::new();
        let net = ActorNet::new(&mut store, 16, &actor_cfg(), 7);
        for (w, b) in &net.dec.layers {
            for v in store.values_mut(*w) {
                *v = 0.0;
            }
            for v in store.values_mut(*b) {
                *v = 0.0;
            }
        }
        // set the final bias to a fixed 6D value
        let (_, b_last) = *net.dec.layers.last().unwrap();
        store.values_mut(b_last).copy_from_slice(&[0.3, 0.1, -0.2, 0.0, 0.9, 0.4]);
        let f: Vec<f64> = vec![0.5; 16];
        let acts = propose(&store, &net, &f, Vec3::ZERO, Task::PullOpen, 8, 1);
        // all proposals equal orthonormalize(bias)
        let want = crate::math::matrix_to_rot6d(&crate::math::rot6d_to_matrix(&[
            0.3, 0.1, -0.2, 0.0, 0.9, 0.4,
        ]));
        for a in &acts {
            for (got, want) in a.rot6d.iter().zip(want) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scoring_loss_closed_forms_and_hand_batch() {
        let mut store = ParamStore::<f64>::new();
        let net = ActorNet::new(&mut store, 4, &actor_cfg(), 3);
        // fresh zero-final D_s outputs 0.5 -> loss = ln 2 for B=1
        let mut tape = Tape::new();
        let mut ctx = ForwardCtx::new();
        let f = tape.leaf(vec![0.1, 0.2, 0.3, 0.4], 1, 4);
        let l = actor_scoring_loss(
            &mut tape,
            &store,
            &mut ctx,
            &net,
            f,
            &[[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]],
            &[1.0],
        );
        assert!((tape.scalar_value(l) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cvae_kl_and_recon_closed_forms() {
        // hand-set mean/logvar: KL per dim = 0.5*(mu^2 + sigma^2 - 1 - ln sigma^2)
        let mut tape = Tape::<f64>::new();
        let mu = tape.leaf(vec![0.5, 0.5], 1, 2);
        let lv = tape.leaf(vec![0.25f64.ln(), 0.25f64.ln()], 1, 2);
        let kl = tape.kl_normal_mean(mu, lv);
        let per_dim = 0.5 * (0.25 + 0.25 - 1.0 - 0.25f64.ln());
        assert!((tape.scalar_value(kl) - 2.0 * per_dim).abs() < 1e-12);

        // standard normal posterior has zero KL inside the full loss
        let mut store = ParamStore::<f64>::new();
        let net = ActorNet::new(&mut store, 4, &actor_cfg(), 3);
        for (w, b) in &net.enc.layers {
            for v in store.values_mut(*w) {
                *v = 0.0;
            }
            for v in store.values_mut(*b) {
                *v = 0.0;
            }
        }
        let mut tape = Tape::new();
        let mut ctx = ForwardCtx::new();
        let f = tape.leaf(vec![0.3; 4], 1, 4);
        let target = [[0.1, 0.0, 0.0, 0.0, 0.1, 0.0]];
        let losses = cvae_loss(&mut tape, &store, &mut ctx, &net, f, &target, 1.0, 9);
        // zeroed encoder emits mu = 0, logvar = 0: exactly the standard normal
        assert!(tape.scalar_value(losses.kl).abs() < 1e-12);
        assert!(
            (tape.scalar_value(losses.total) - tape.scalar_value(losses.recon)).abs() < 1e-12
        );
    }

    #[test]
    fn select_action_restricted_matches_exhaustive_on_toys() {
        let cfg = tiny_cfg();
        let acfg = actor_cfg();
        let mut store = ParamStore::<f64>::new();
        let fine = crate::affordance::FineNet::new(&mut store, &cfg, FineVariant::Integrated, &[8], 4);
        let actor = ActorNet::new(&mut store, cfg.feature_dim, &acfg, 5);
        // non-trivial critic: perturb every parameter deterministically
        let ids: Vec<_> = store.iter_ids().collect();
        let mut k = 0.0f64;
        for id in ids {
            for v in store.values_mut(id) {
                k += 0.37;
                *v += (k.sin()) * 0.3;
            }
        }
        let near = cloud(16, 1);
        let far = cloud(16, 2);
        let (full, detail_full) = select_action(
            &store, &fine, &actor, &cfg, &near, &far, Task::PullOpen, 16, acfg.n_proposals, 11,
        )
        .unwrap();
        let (restricted, detail_r) = select_action(
            &store, &fine, &actor, &cfg, &near, &far, Task::PullOpen, acfg.k_points,
            acfg.n_proposals, 11,
        )
        .unwrap();
        // the global argmax survives any k >= 1 ranking stage
        assert_eq!(detail_full.best_point, detail_r.best_point);
        assert_eq!(detail_full.best_proposal, detail_r.best_proposal);
        assert_eq!(full.rot6d, restricted.rot6d);
        assert!((detail_full.best_score - detail_r.best_score).abs() < 1e-12);
    }

    #[test]
    fn select_action_single_pair_is_that_pair() {
        let cfg = tiny_cfg();
        let mut store = ParamStore::<f64>::new();
        let fine = crate::affordance::FineNet::new(&mut store, &cfg, FineVariant::Integrated, &[8], 4);
        let actor = ActorNet::new(&mut store, cfg.feature_dim, &actor_cfg(), 5);
        let near = cloud(6, 3);
        let far = cloud(6, 4);
        let (action, detail) =
            select_action(&store, &fine, &actor, &cfg, &near, &far, Task::PushClose, 1, 1, 2)
                .unwrap();
        assert_eq!(detail.best_proposal, 0);
        // fresh critic scores everything 0.5; tie rule picks point 0
        assert_eq!(detail.best_point, 0);
        assert_eq!(action.p, near.points[0]);
    }
}
