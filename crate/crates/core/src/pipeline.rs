//! End-to-end orchestration: round-based data collection with epsilon-
//! greedy self-bootstrapping, full two-stage training, and checkpoint
//! loading.

use crate::affordance::FineVariant;
use crate::checkpoint::{load_checkpoint, read_manifest, Manifest, STAGE_KEY};
use crate::config::AppConfig;
use crate::datagen::{balance, collect_episode, CollectionPolicy, Guidance, InteractionRecord};
use crate::error::{Error, Result};
use crate::interaction::Task;
use crate::math::derive_seed;
use crate::scene::Category;
use crate::tape::Scalar;
use crate::trainer::{train_actor, train_coarse_fine, ModelSet, Stage1Report, Stage2Report};
use std::path::Path;

fn task_tag(task: Task) -> u64 {
    match task {
        Task::PullOpen => 0x9e11,
        Task::PushClose => 0x9e12,
    }
}

/// Exact two-class balance truncated to at most `target` records
/// (target/2 per class), shuffled by seed.
pub fn balance_to(
    records: Vec<InteractionRecord>,
    target: usize,
    seed: u64,
) -> Result<Vec<InteractionRecord>> {
    let mut balanced = balance(records, seed)?;
    if balanced.len() > target {
        let per_class = target / 2;
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for r in balanced {
            if r.gt && pos.len() < per_class {
                pos.push(r);
            } else if !r.gt && neg.len() < per_class {
                neg.push(r);
            }
        }
        balanced = balance(pos.into_iter().chain(neg).collect(), derive_seed(seed, 1))?;
    }
    Ok(balanced)
}

/// Quick stage-1 + stage-2 fit used to guide later collection rounds.
fn bootstrap_models<S: Scalar>(
    app: &AppConfig,
    task: Task,
    records: &[InteractionRecord],
    work_dir: &Path,
    seed: u64,
) -> Result<ModelSet<S>> {
    let mut boot_cfg = app.clone();
    boot_cfg.trainer.steps_stage1 = app.datagen.bootstrap_steps;
    boot_cfg.trainer.steps_stage2 = app.datagen.bootstrap_steps;
    boot_cfg.trainer.checkpoint_every = 0;
    let mut models = ModelSet::new(&boot_cfg, FineVariant::Integrated, derive_seed(seed, 7));
    let s1 = work_dir.join("bootstrap_stage1");
    train_coarse_fine(&mut models, records, &boot_cfg, task, &s1, derive_seed(seed, 8))?;
    train_actor(
        &mut models,
        records,
        &boot_cfg,
        task,
        &s1.join("checkpoint"),
        &work_dir.join("bootstrap_stage2"),
        derive_seed(seed, 9),
    )?;
    Ok(models)
}

/// Collect a balanced dataset for one task over the configured rounds.
/// Round 0 usually runs fully random; each later round re-fits bootstrap
/// models on everything collected so far and mixes model guidance in. If
/// the final balance falls short of `records_per_task`, guided top-up
/// batches run until the target is met (bounded at 4x the last round).
pub fn generate_task_dataset<S: Scalar>(
    app: &AppConfig,
    task: Task,
    work_dir: &Path,
    verbose: bool,
) -> Result<Vec<InteractionRecord>> {
    let categories = app.bench.categories.clone();
    let mut all: Vec<InteractionRecord> = Vec::new();
    let mut counter = 0u64;
    let mut models: Option<ModelSet<S>> = None;
    let say = |msg: String| {
        if verbose {
            eprintln!("{msg}");
        }
    };

    let n_rounds = app.datagen.rounds.len();
    for (ri, round) in app.datagen.rounds.iter().enumerate() {
        let epsilon = if models.is_none() { 1.0 } else { round.epsilon };
        collect_batch(
            app,
            task,
            &categories,
            epsilon,
            models.as_ref(),
            round.episodes,
            &mut counter,
            &mut all,
        )?;
        let pos = all.iter().filter(|r| r.gt).count();
        say(format!(
            "round {ri}: {} episodes total, {pos} positives ({:.1}%)",
            all.len(),
            100.0 * pos as f64 / all.len().max(1) as f64
        ));
        // refit guidance between rounds when both classes exist
        if ri + 1 < n_rounds && pos > 0 && pos < all.len() {
            let boot = balance(all.clone(), derive_seed(app.seed, 0xb0 + ri as u64))?;
            say(format!("round {ri}: bootstrapping on {} balanced records", boot.len()));
            models = Some(bootstrap_models(app, task, &boot, work_dir, derive_seed(app.seed, 0xbb + ri as u64))?);
        }
    }

    // top up until the balanced target is reachable
    let target = app.datagen.records_per_task;
    let last = app.datagen.rounds.last().expect("validated non-empty");
    let chunk = last.episodes.max(1);
    let mut extra = 0usize;
    loop {
        let pos = all.iter().filter(|r| r.gt).count();
        let neg = all.len() - pos;
        if 2 * pos.min(neg) >= target || extra >= 4 * chunk {
            break;
        }
        let epsilon = if models.is_none() { 1.0 } else { last.epsilon };
        collect_batch(
            app,
            task,
            &categories,
            epsilon,
            models.as_ref(),
            chunk.min(target),
            &mut counter,
            &mut all,
        )?;
        extra += chunk.min(target);
        say(format!(
            "top-up: {} episodes total, {} positives",
            all.len(),
            all.iter().filter(|r| r.gt).count()
        ));
    }

    let dataset = balance_to(all, target, derive_seed(app.seed, 0xba7))?;
    say(format!("final dataset: {} balanced records", dataset.len()));
    Ok(dataset)
}

#[allow(clippy::too_many_arguments)]
fn collect_batch<S: Scalar>(
    app: &AppConfig,
    task: Task,
    categories: &[Category],
    epsilon: f64,
    models: Option<&ModelSet<S>>,
    episodes: usize,
    counter: &mut u64,
    out: &mut Vec<InteractionRecord>,
) -> Result<()> {
    let guidance = models.map(|m| Guidance {
        store: &m.store,
        coarse: &m.coarse,
        fine: &m.fine,
        actor: &m.actor,
        encoder_cfg: &app.encoder,
    });
    let policy = CollectionPolicy {
        epsilon,
        guidance,
        random_action_cone: app.datagen.random_action_cone_deg.to_radians(),
        gumbel_temp: app.datagen.gumbel_temp,
        candidate_points: app.datagen.guided_candidate_points,
        candidate_actions: app.datagen.guided_candidate_actions,
    };
    // cap stored records per class: the final balance subsamples anyway,
    // and unbounded negatives would dominate memory at full scale
    let cap = 2 * app.datagen.records_per_task.max(1);
    let mut pos = out.iter().filter(|r| r.gt).count();
    let mut neg = out.len() - pos;
    for _ in 0..episodes {
        let cat = categories[(*counter % categories.len() as u64) as usize];
        let seed = derive_seed(app.seed, task_tag(task).wrapping_add(*counter));
        *counter += 1;
        match collect_episode(app, cat, task, &policy, seed) {
            Ok(rec) => {
                let class = if rec.gt { &mut pos } else { &mut neg };
                if *class < cap {
                    *class += 1;
                    out.push(rec);
                }
            }
            // rare pathological viewpoints are skipped, not fatal
            Err(Error::EpisodeFailed { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Train stage 1 then stage 2 into `out_dir/stage1` and `out_dir/stage2`.
pub fn train_full<S: Scalar>(
    app: &AppConfig,
    task: Task,
    variant: FineVariant,
    dataset: &[InteractionRecord],
    out_dir: &Path,
    run_seed: u64,
) -> Result<(Stage1Report, Stage2Report)> {
    let mut models = ModelSet::<S>::new(app, variant, derive_seed(run_seed, 1));
    let s1_dir = out_dir.join("stage1");
    let r1 = train_coarse_fine(&mut models, dataset, app, task, &s1_dir, derive_seed(run_seed, 2))?;
    let r2 = train_actor(
        &mut models,
        dataset,
        app,
        task,
        &s1_dir.join("checkpoint"),
        &out_dir.join("stage2"),
        derive_seed(run_seed, 3),
    )?;
    Ok((r1, r2))
}

/// Build a model set matching a checkpoint's recorded variant and load it.
pub fn load_modelset<S: Scalar>(app: &AppConfig, ckpt_dir: &Path) -> Result<(ModelSet<S>, Manifest)> {
    let manifest = read_manifest(ckpt_dir)?;
    let variant = match manifest.meta.get("variant").map(String::as_str) {
        Some("separate") => FineVariant::Separate,
        Some("integrated") | None => FineVariant::Integrated,
        Some(other) => {
            return Err(Error::Checkpoint(format!("unknown variant '{other}' in checkpoint")))
        }
    };
    let mut models = ModelSet::new(app, variant, 0);
    let manifest = load_checkpoint(&mut models.store, ckpt_dir, Some(app.model_hash(variant)))?;
    Ok((models, manifest))
}

/// The checkpoint stage tag, when present.
pub fn checkpoint_stage(manifest: &Manifest) -> Option<&str> {
    manifest.meta.get(STAGE_KEY).map(String::as_str)
}
