//! Two-stage training: jointly fit the coarse and fine modules on balanced
//! data, then fit the actor (cVAE + action scorer) with the point-set
//! encoders frozen.

use crate::actor::{actor_scoring_loss, cvae_loss, ActorNet};
use crate::affordance::{
    coarse_loss_from_scores, fine_loss_from_scores, CoarseNet, FineNet, FineVariant,
};
use crate::checkpoint::{
    checkpoint_exists, load_checkpoint, save_checkpoint, STAGE_ACTOR, STAGE_COARSE_FINE, STAGE_KEY,
};
use crate::config::AppConfig;
use crate::datagen::InteractionRecord;
use crate::error::{Error, Result};
use crate::interaction::Task;
use crate::math::derive_seed;
use crate::nn::{Adam, ForwardCtx, GradAccum, ParamId, ParamStore};
use crate::tape::{Scalar, Tape};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// All networks of one trained pipeline, sharing a single parameter store.
pub struct ModelSet<S: Scalar> {
    pub store: ParamStore<S>,
    pub coarse: CoarseNet,
    pub fine: FineNet,
    pub actor: ActorNet,
    pub variant: FineVariant,
}

impl<S: Scalar> ModelSet<S> {
    pub fn new(app: &AppConfig, variant: FineVariant, init_seed: u64) -> ModelSet<S> {
        let mut store = ParamStore::new();
        let coarse = CoarseNet::new(&mut store, &app.encoder, &app.affordance.head_widths, init_seed);
        let fine = FineNet::new(
            &mut store,
            &app.encoder,
            variant,
            &app.affordance.critic_widths,
            derive_seed(init_seed, 1),
        );
        let actor = ActorNet::new(&mut store, app.encoder.feature_dim, &app.actor, derive_seed(init_seed, 2));
        ModelSet { store, coarse, fine, actor, variant }
    }

    fn ids_with_prefix(&self, prefixes: &[&str]) -> Vec<ParamId> {
        self.store
            .iter_ids()
            .filter(|id| prefixes.iter().any(|p| self.store.name(*id).starts_with(p)))
            .collect()
    }

    /// Stage-1 trainable parameters: coarse and fine modules.
    pub fn stage1_params(&self) -> Vec<ParamId> {
        self.ids_with_prefix(&["coarse.", "fine."])
    }

    /// Stage-2 trainable parameters: the actor only.
    pub fn stage2_params(&self) -> Vec<ParamId> {
        self.ids_with_prefix(&["actor."])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage1Report {
    pub steps: u64,
    /// Full-dataset losses evaluated after the final step.
    pub final_coarse: f64,
    pub final_fine: f64,
    pub final_total: f64,
    /// Batches whose coarse gate was empty (loss defined as zero).
    pub zero_gated_batches: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage2Report {
    pub steps: u64,
    pub final_scoring: f64,
    pub final_cvae: f64,
    pub final_recon: f64,
    pub final_kl: f64,
}

struct NdjsonLog {
    file: std::fs::File,
}

impl NdjsonLog {
    fn create(path: &Path) -> Result<NdjsonLog> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(NdjsonLog {
            file: std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
        })
    }

    fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        let line = serde_json::to_string(row).expect("log row serializes");
        writeln!(self.file, "{line}").map_err(|e| Error::io("train_log.ndjson", e))
    }
}

/// Seeded epoch shuffler yielding record indices forever, reshuffled each
/// epoch (single-worker in-order semantics).
struct BatchStream {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(n: usize, seed: u64) -> BatchStream {
        let mut s = BatchStream {
            order: (0..n).collect(),
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.shuffle();
        s
    }

    fn shuffle(&mut self) {
        for i in (1..self.order.len()).rev() {
            let j = self.rng.random_range(0..=i);
            self.order.swap(i, j);
        }
        self.pos = 0;
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        for _ in 0..size {
            if self.pos >= self.order.len() {
                self.shuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn dump_diagnostics(
    out_dir: &Path,
    step: u64,
    batch: &[usize],
    values: &[(String, f64)],
) -> String {
    #[derive(Serialize)]
    struct Dump<'a> {
        step: u64,
        batch: &'a [usize],
        values: &'a [(String, f64)],
    }
    let path = out_dir.join(format!("diagnostic_step{step}.json"));
    let _ = crate::io::write_json(&path, &Dump { step, batch, values });
    path.display().to_string()
}

/// Stage 1: minimize mean coarse BCE (gated) plus mean fine BCE over
/// stochastic batches. Deterministic under a fixed seed and the
/// single-worker in-order loading this implementation always uses.
pub fn train_coarse_fine<S: Scalar>(
    models: &mut ModelSet<S>,
    dataset: &[InteractionRecord],
    app: &AppConfig,
    task: Task,
    out_dir: &Path,
    run_seed: u64,
) -> Result<Stage1Report> {
    if dataset.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut log = NdjsonLog::create(&out_dir.join("train_log.ndjson"))?;
    let trainable = models.stage1_params();
    let mut adam = Adam::new(&models.store, app.trainer.lr);
    let mut stream = BatchStream::new(dataset.len(), derive_seed(run_seed, 0x51));
    let mut zero_gated = 0u64;
    let t0 = Instant::now();

    for step in 0..app.trainer.steps_stage1 {
        let batch = stream.next_batch(app.trainer.batch.min(dataset.len()));
        let gates: Vec<bool> = batch
            .iter()
            .map(|&i| {
                let r = &dataset[i];
                app.affordance.label_rule.gate(r.p(), r.p_far())
            })
            .collect();
        let n_gated = gates.iter().filter(|&&g| g).count();
        if n_gated == 0 {
            zero_gated += 1;
        }

        let mut grads = GradAccum::new(&models.store);
        let mut coarse_sum = 0.0;
        let mut fine_sum = 0.0;
        for (bi, &ri) in batch.iter().enumerate() {
            let r = &dataset[ri];
            let mut tape = Tape::<S>::new();
            let mut ctx = ForwardCtx::new();
            let mut parts = Vec::new();

            if gates[bi] {
                let scores = models.coarse.forward(
                    &mut tape,
                    &models.store,
                    &mut ctx,
                    &app.encoder,
                    &r.far.points,
                    r.far.source_pose.position,
                );
                let row = tape.gather_rows(scores, &[r.p_far_index]);
                let gt = if r.gt { 1.0 } else { 0.0 };
                let bce = coarse_loss_from_scores(&mut tape, row, &[gt], &[true])
                    .expect("gate is true");
                coarse_sum += tape.scalar_value(bce);
                parts.push(tape.scale(bce, 1.0 / n_gated as f64));
            }
            {
                let feats = models.fine.forward(
                    &mut tape,
                    &models.store,
                    &mut ctx,
                    &app.encoder,
                    &r.near.points,
                    r.near.source_pose.position,
                    &r.far.points,
                    r.far.source_pose.position,
                );
                let frow = tape.gather_rows(feats, &[r.p_index]);
                let score = models.fine.critic_scores(
                    &mut tape,
                    &models.store,
                    &mut ctx,
                    frow,
                    &[r.action.rot6d],
                    &[task],
                );
                let gt = if r.gt { 1.0 } else { 0.0 };
                let bce = fine_loss_from_scores(&mut tape, score, &[gt]);
                fine_sum += tape.scalar_value(bce);
                parts.push(tape.scale(bce, 1.0 / batch.len() as f64));
            }
            let root = if parts.len() == 2 {
                tape.add(parts[0], parts[1])
            } else {
                parts[0]
            };
            let g = tape.backward(root);
            grads.add_scaled(&tape, &g, &ctx, 1.0);
        }

        let coarse_loss = if n_gated > 0 { coarse_sum / n_gated as f64 } else { 0.0 };
        let fine_loss = fine_sum / batch.len() as f64;
        let total = coarse_loss + fine_loss;
        if !total.is_finite() {
            let dump = dump_diagnostics(
                out_dir,
                step,
                &batch,
                &[("coarse".into(), coarse_loss), ("fine".into(), fine_loss)],
            );
            return Err(Error::NonFiniteLoss { step, dump });
        }
        adam.step(&mut models.store, &grads, &trainable);

        if step % app.trainer.log_every == 0 || step + 1 == app.trainer.steps_stage1 {
            #[derive(Serialize)]
            struct Row {
                step: u64,
                coarse: f64,
                fine: f64,
                total: f64,
                gated: usize,
                wall_ms: u128,
            }
            log.write(&Row {
                step,
                coarse: coarse_loss,
                fine: fine_loss,
                total,
                gated: n_gated,
                wall_ms: t0.elapsed().as_millis(),
            })?;
        }
        if app.trainer.checkpoint_every > 0
            && step > 0
            && step % app.trainer.checkpoint_every == 0
        {
            save_stage_checkpoint(models, app, task, STAGE_COARSE_FINE, &out_dir.join(format!("checkpoint_step{step}")))?;
        }
    }

    save_stage_checkpoint(models, app, task, STAGE_COARSE_FINE, &out_dir.join("checkpoint"))?;
    let (final_coarse, final_fine) = eval_stage1_losses(models, dataset, app, task);
    Ok(Stage1Report {
        steps: app.trainer.steps_stage1,
        final_coarse,
        final_fine,
        final_total: final_coarse + final_fine,
        zero_gated_batches: zero_gated,
    })
}

/// Full-dataset stage-1 losses in inference mode.
pub fn eval_stage1_losses<S: Scalar>(
    models: &ModelSet<S>,
    dataset: &[InteractionRecord],
    app: &AppConfig,
    task: Task,
) -> (f64, f64) {
    let mut coarse_sum = 0.0;
    let mut coarse_n = 0usize;
    let mut fine_sum = 0.0;
    for r in dataset {
        let mut tape = Tape::<S>::new();
        let mut ctx = ForwardCtx::new();
        let gt = if r.gt { 1.0 } else { 0.0 };
        if app.affordance.label_rule.gate(r.p(), r.p_far()) {
            let scores = models.coarse.forward(
                &mut tape,
                &models.store,
                &mut ctx,
                &app.encoder,
                &r.far.points,
                r.far.source_pose.position,
            );
            let row = tape.gather_rows(scores, &[r.p_far_index]);
            let bce = coarse_loss_from_scores(&mut tape, row, &[gt], &[true]).expect("gated");
            coarse_sum += tape.scalar_value(bce);
            coarse_n += 1;
        }
        let feats = models.fine.forward(
            &mut tape,
            &models.store,
            &mut ctx,
            &app.encoder,
            &r.near.points,
            r.near.source_pose.position,
            &r.far.points,
            r.far.source_pose.position,
        );
        let frow = tape.gather_rows(feats, &[r.p_index]);
        let score = models.fine.critic_scores(&mut tape, &models.store, &mut ctx, frow, &[r.action.rot6d], &[task]);
        let bce = fine_loss_from_scores(&mut tape, score, &[gt]);
        fine_sum += tape.scalar_value(bce);
    }
    (
        if coarse_n > 0 { coarse_sum / coarse_n as f64 } else { 0.0 },
        fine_sum / dataset.len() as f64,
    )
}

fn save_stage_checkpoint<S: Scalar>(
    models: &ModelSet<S>,
    app: &AppConfig,
    task: Task,
    stage: &str,
    dir: &Path,
) -> Result<()> {
    let mut meta = BTreeMap::new();
    meta.insert(STAGE_KEY.to_string(), stage.to_string());
    meta.insert("task".to_string(), task.name().to_string());
    meta.insert(
        "variant".to_string(),
        match models.variant {
            FineVariant::Integrated => "integrated".to_string(),
            FineVariant::Separate => "separate".to_string(),
        },
    );
    save_checkpoint(&models.store, app.model_hash(models.variant), &meta, dir)
}

/// Per-record fine feature at the manipulation point, precomputed once
/// for stage 2 (the encoders are frozen, so features never change).
pub fn precompute_features<S: Scalar>(
    models: &ModelSet<S>,
    dataset: &[InteractionRecord],
    app: &AppConfig,
) -> Vec<Vec<f64>> {
    dataset
        .iter()
        .map(|r| {
            let mut tape = Tape::<S>::new();
            let mut ctx = ForwardCtx::new();
            let feats = models.fine.forward(
            &mut tape,
            &models.store,
            &mut ctx,
            &app.encoder,
            &r.near.points,
            r.near.source_pose.position,
            &r.far.points,
            r.far.source_pose.position,
        );
            let c = tape.cols(feats);
            tape.value(feats)[r.p_index * c..(r.p_index + 1) * c]
                .iter()
                .map(|v| v.to_f64())
                .collect()
        })
        .collect()
}

/// Stage 2: load the stage-1 checkpoint, freeze every encoder parameter,
/// and minimize the summed cVAE and action-scoring losses over the actor
/// parameters. Refuses to run without a stage-1 checkpoint.
pub fn train_actor<S: Scalar>(
    models: &mut ModelSet<S>,
    dataset: &[InteractionRecord],
    app: &AppConfig,
    task: Task,
    stage1_dir: &Path,
    out_dir: &Path,
    run_seed: u64,
) -> Result<Stage2Report> {
    if !checkpoint_exists(stage1_dir) {
        return Err(Error::Dependency(format!(
            "stage-1 checkpoint not found at {}",
            stage1_dir.display()
        )));
    }
    let manifest = load_checkpoint(&mut models.store, stage1_dir, Some(app.model_hash(models.variant)))?;
    match manifest.meta.get(STAGE_KEY).map(String::as_str) {
        Some(STAGE_COARSE_FINE) | Some(STAGE_ACTOR) => {}
        other => {
            return Err(Error::Dependency(format!(
                "checkpoint at {} has stage {:?}, need coarse_fine",
                stage1_dir.display(),
                other
            )))
        }
    }
    let positives: Vec<usize> = (0..dataset.len()).filter(|&i| dataset[i].gt).collect();
    if positives.is_empty() {
        return Err(Error::Argument("actor training requires positive records".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut log = NdjsonLog::create(&out_dir.join("train_log.ndjson"))?;

    let feats = precompute_features(models, dataset, app);
    let fdim = app.encoder.feature_dim;
    let trainable = models.stage2_params();
    let mut adam = Adam::new(&models.store, app.trainer.lr);
    let mut ds_stream = BatchStream::new(dataset.len(), derive_seed(run_seed, 0x52));
    let mut pos_stream = BatchStream::new(positives.len(), derive_seed(run_seed, 0x53));
    let t0 = Instant::now();

    for step in 0..app.trainer.steps_stage2 {
        let b = app.trainer.batch;
        let ds_batch = ds_stream.next_batch(b.min(dataset.len()));
        let pos_batch: Vec<usize> = pos_stream
            .next_batch(b.min(positives.len()))
            .into_iter()
            .map(|i| positives[i])
            .collect();

        let mut tape = Tape::<S>::new();
        let mut ctx = ForwardCtx::new();

        let mut ds_flat = Vec::with_capacity(ds_batch.len() * fdim);
        let mut ds_rot = Vec::with_capacity(ds_batch.len());
        let mut ds_labels = Vec::with_capacity(ds_batch.len());
        for &i in &ds_batch {
            ds_flat.extend(feats[i].iter().map(|v| S::from_f64(*v)));
            ds_rot.push(dataset[i].action.rot6d);
            ds_labels.push(if dataset[i].gt { 1.0 } else { 0.0 });
        }
        let ds_rows = tape.leaf(ds_flat, ds_batch.len(), fdim);
        let scoring = actor_scoring_loss(&mut tape, &models.store, &mut ctx, &models.actor, ds_rows, &ds_rot, &ds_labels);

        let mut cv_flat = Vec::with_capacity(pos_batch.len() * fdim);
        let mut cv_rot = Vec::with_capacity(pos_batch.len());
        for &i in &pos_batch {
            cv_flat.extend(feats[i].iter().map(|v| S::from_f64(*v)));
            cv_rot.push(dataset[i].action.rot6d);
        }
        let cv_rows = tape.leaf(cv_flat, pos_batch.len(), fdim);
        let cvae = cvae_loss(
            &mut tape,
            &models.store,
            &mut ctx,
            &models.actor,
            cv_rows,
            &cv_rot,
            app.actor.beta,
            derive_seed(run_seed, 0x54 + step),
        );

        let total_var = tape.add(scoring, cvae.total);
        let scoring_v = tape.scalar_value(scoring);
        let cvae_v = tape.scalar_value(cvae.total);
        let recon_v = tape.scalar_value(cvae.recon);
        let total = scoring_v + cvae_v;
        if !total.is_finite() {
            let dump = dump_diagnostics(
                out_dir,
                step,
                &ds_batch,
                &[("scoring".into(), scoring_v), ("cvae".into(), cvae_v)],
            );
            return Err(Error::NonFiniteLoss { step, dump });
        }
        let g = tape.backward(total_var);
        let mut grads = GradAccum::new(&models.store);
        grads.add_scaled(&tape, &g, &ctx, 1.0);
        adam.step(&mut models.store, &grads, &trainable);

        if step % app.trainer.log_every == 0 || step + 1 == app.trainer.steps_stage2 {
            #[derive(Serialize)]
            struct Row {
                step: u64,
                scoring: f64,
                cvae: f64,
                recon: f64,
                wall_ms: u128,
            }
            log.write(&Row {
                step,
                scoring: scoring_v,
                cvae: cvae_v,
                recon: recon_v,
                wall_ms: t0.elapsed().as_millis(),
            })?;
        }
    }

    save_stage_checkpoint(models, app, task, STAGE_ACTOR, &out_dir.join("checkpoint"))?;
    let report = eval_stage2_losses(models, dataset, &feats, &positives, app, run_seed);
    Ok(report)
}

/// Full-dataset stage-2 losses in inference mode.
fn eval_stage2_losses<S: Scalar>(
    models: &ModelSet<S>,
    dataset: &[InteractionRecord],
    feats: &[Vec<f64>],
    positives: &[usize],
    app: &AppConfig,
    run_seed: u64,
) -> Stage2Report {
    let fdim = app.encoder.feature_dim;
    let mut tape = Tape::<S>::new();
    let mut ctx = ForwardCtx::new();

    let mut ds_flat = Vec::new();
    let mut ds_rot = Vec::new();
    let mut ds_labels = Vec::new();
    for (i, r) in dataset.iter().enumerate() {
        ds_flat.extend(feats[i].iter().map(|v| S::from_f64(*v)));
        ds_rot.push(r.action.rot6d);
        ds_labels.push(if r.gt { 1.0 } else { 0.0 });
    }
    let ds_rows = tape.leaf(ds_flat, dataset.len(), fdim);
    let scoring = actor_scoring_loss(&mut tape, &models.store, &mut ctx, &models.actor, ds_rows, &ds_rot, &ds_labels);

    let mut cv_flat = Vec::new();
    let mut cv_rot = Vec::new();
    for &i in positives {
        cv_flat.extend(feats[i].iter().map(|v| S::from_f64(*v)));
        cv_rot.push(dataset[i].action.rot6d);
    }
    let cv_rows = tape.leaf(cv_flat, positives.len(), fdim);
    let cvae = cvae_loss(
        &mut tape,
        &models.store,
        &mut ctx,
        &models.actor,
        cv_rows,
        &cv_rot,
        app.actor.beta,
        derive_seed(run_seed, 0x55),
    );
    Stage2Report {
        steps: app.trainer.steps_stage2,
        final_scoring: tape.scalar_value(scoring),
        final_cvae: tape.scalar_value(cvae.total),
        final_recon: tape.scalar_value(cvae.recon),
        final_kl: tape.scalar_value(cvae.kl),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{collect_episode, CollectionPolicy};
    use crate::scene::Category;

    fn tiny_app() -> AppConfig {
        let mut app = AppConfig::default();
        app.points_per_cloud = 48;
        app.sensor.far_intrinsics =
            crate::sensor::Intrinsics { fov: 50f64.to_radians(), width: 48, height: 36 };
        app.sensor.near_intrinsics =
            crate::sensor::Intrinsics { fov: 45f64.to_radians(), width: 48, height: 36 };
        app.encoder = crate::encoder::EncoderConfig {
            levels: vec![crate::encoder::SaLevelConfig {
                centroids: 12,
                radius: 0.25,
                k: 8,
                mlp: vec![16],
            }],
            global_mlp: vec![24],
            fp_mlps: vec![vec![16], vec![24]],
            cross_levels: vec![0, 1],
            feature_dim: 24,
        };
        app.affordance.head_widths = vec![16];
        app.affordance.critic_widths = vec![16];
        app.actor = crate::actor::ActorConfig {
            z_dim: 4,
            beta: 0.01,
            n_proposals: 4,
            k_points: 3,
            enc_widths: vec![16],
            dec_widths: vec![16],
            ds_widths: vec![16],
        };
        app.trainer.steps_stage1 = 60;
        app.trainer.steps_stage2 = 60;
        app.trainer.batch = 8;
        app.trainer.checkpoint_every = 0;
        app
    }

    fn tiny_dataset(app: &AppConfig, n: usize) -> Vec<InteractionRecord> {
        let policy = CollectionPolicy::<f32>::random_only(60.0);
        let mut recs = Vec::new();
        let mut s = 0u64;
        while recs.len() < n {
            let rec = collect_episode(app, Category::Door, Task::PullOpen, &policy, s).unwrap();
            recs.push(rec);
            s += 1;
        }
        // alternate labels so both classes exist regardless of physics
        for (i, r) in recs.iter_mut().enumerate() {
            r.gt = i % 2 == 0;
        }
        recs
    }

    #[test]
    fn stage1_loss_decreases_and_is_deterministic() {
        let app = tiny_app();
        let data = tiny_dataset(&app, 10);
        let dir = std::env::temp_dir().join(format!("c2f_tr1_{}", std::process::id()));

        let mut m1 = ModelSet::<f32>::new(&app, FineVariant::Integrated, 7);
        let (c0, f0) = eval_stage1_losses(&m1, &data, &app, Task::PullOpen);
        let r1 = train_coarse_fine(&mut m1, &data, &app, Task::PullOpen, &dir, 9).unwrap();
        assert!(
            r1.final_total < c0 + f0,
            "training did not reduce loss: {} -> {}",
            c0 + f0,
            r1.final_total
        );

        let mut m2 = ModelSet::<f32>::new(&app, FineVariant::Integrated, 7);
        let r2 = train_coarse_fine(&mut m2, &data, &app, Task::PullOpen, &dir, 9).unwrap();
        assert!((r1.final_total - r2.final_total).abs() < 1e-6);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn fresh_heads_start_at_two_ln2() {
        let mut app = tiny_app();
        // gate every record so the coarse term is populated
        app.affordance.label_rule.delta = 10.0;
        let data = tiny_dataset(&app, 6);
        let m = ModelSet::<f32>::new(&app, FineVariant::Integrated, 3);
        let (c, f) = eval_stage1_losses(&m, &data, &app, Task::PullOpen);
        // zero-initialized output layers: both sigmoids at 0.5 exactly
        assert!((c - std::f64::consts::LN_2).abs() < 1e-6, "coarse {c}");
        assert!((f - std::f64::consts::LN_2).abs() < 1e-6, "fine {f}");
    }

    #[test]
    fn stage2_requires_stage1_and_freezes_encoders() {
        let app = tiny_app();
        let data = tiny_dataset(&app, 10);
        let root = std::env::temp_dir().join(format!("c2f_tr2_{}", std::process::id()));
        let s1 = root.join("stage1");
        let s2 = root.join("stage2");

        let mut models = ModelSet::<f32>::new(&app, FineVariant::Integrated, 7);
        // missing checkpoint -> dependency error
        let err = train_actor(&mut models, &data, &app, Task::PullOpen, &s1, &s2, 1);
        assert!(matches!(err, Err(Error::Dependency(_))));

        train_coarse_fine(&mut models, &data, &app, Task::PullOpen, &s1, 1).unwrap();
        let frozen_before: Vec<Vec<f32>> = models
            .stage1_params()
            .iter()
            .map(|id| models.store.values(*id).to_vec())
            .collect();
        train_actor(&mut models, &data, &app, Task::PullOpen, &s1.join("checkpoint"), &s2, 1)
            .unwrap();
        for (id, before) in models.stage1_params().iter().zip(&frozen_before) {
            assert_eq!(models.store.values(*id), &before[..], "encoder param changed in stage 2");
        }
        std::fs::remove_dir_all(&root).ok();
    }
}
