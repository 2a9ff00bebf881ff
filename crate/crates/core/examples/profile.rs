//! Rough wall-clock profile of the pipeline's hot paths at a given scale.
//! Run: cargo run --release -p c2f-core --example profile

use c2f_core::affordance::FineVariant;
use c2f_core::config::AppConfig;
use c2f_core::datagen::{collect_episode, CollectionPolicy, Guidance};
use c2f_core::encoder::{EncoderConfig, SaLevelConfig};
use c2f_core::interaction::Task;
use c2f_core::scene::Category;
use c2f_core::sensor::Intrinsics;
use c2f_core::trainer::{eval_stage1_losses, train_coarse_fine, ModelSet};
use std::time::Instant;

fn acceptance_scale() -> AppConfig {
    let mut app = AppConfig::default();
    app.points_per_cloud = 256;
    app.sensor.far_intrinsics = Intrinsics { fov: 50f64.to_radians(), width: 96, height: 72 };
    app.sensor.near_intrinsics = Intrinsics { fov: 45f64.to_radians(), width: 96, height: 72 };
    app.encoder = EncoderConfig {
        levels: vec![
            SaLevelConfig { centroids: 128, radius: 0.08, k: 8, mlp: vec![16, 16, 32] },
            SaLevelConfig { centroids: 32, radius: 0.2, k: 12, mlp: vec![32, 32, 64] },
        ],
        global_mlp: vec![64, 128],
        fp_mlps: vec![vec![64, 64], vec![64, 64], vec![64, 128]],
        cross_levels: vec![0, 1, 2],
        feature_dim: 128,
    };
    app.affordance.head_widths = vec![64, 64];
    app.affordance.critic_widths = vec![64, 64];
    app.actor.n_proposals = 16;
    app.actor.enc_widths = vec![64, 64];
    app.actor.dec_widths = vec![64, 64];
    app.actor.ds_widths = vec![64, 64];
    app.trainer.batch = 32;
    app
}

fn main() {
    let app = acceptance_scale();
    let policy = CollectionPolicy::<f32>::random_only(60.0);

    // random episodes
    let t = Instant::now();
    let mut recs = Vec::new();
    for s in 0..20 {
        recs.push(collect_episode(&app, Category::Door, Task::PullOpen, &policy, s).unwrap());
    }
    println!("random episode: {:.1} ms", t.elapsed().as_secs_f64() * 1000.0 / 20.0);

    // inference pieces
    let models = ModelSet::<f32>::new(&app, FineVariant::Integrated, 1);
    let t = Instant::now();
    for r in recs.iter().take(5) {
        let _ = c2f_core::affordance::coarse_forward(&models.store, &models.coarse, &app.encoder, &r.far);
    }
    println!("coarse forward: {:.1} ms", t.elapsed().as_secs_f64() * 1000.0 / 5.0);
    let t = Instant::now();
    for r in recs.iter().take(5) {
        let _ = c2f_core::affordance::fine_forward(&models.store, &models.fine, &app.encoder, &r.near, &r.far).unwrap();
    }
    println!("fine forward: {:.1} ms", t.elapsed().as_secs_f64() * 1000.0 / 5.0);

    // full select_action (eval episode cost ~ render + coarse + select)
    let t = Instant::now();
    for r in recs.iter().take(3) {
        let _ = c2f_core::actor::select_action(
            &models.store, &models.fine, &models.actor, &app.encoder,
            &r.near, &r.far, Task::PullOpen, app.actor.k_points, app.actor.n_proposals, 3,
        )
        .unwrap();
    }
    println!("select_action: {:.1} ms", t.elapsed().as_secs_f64() * 1000.0 / 3.0);

    // guided episode
    let guided = CollectionPolicy {
        epsilon: 0.5,
        guidance: Some(Guidance {
            store: &models.store,
            coarse: &models.coarse,
            fine: &models.fine,
            actor: &models.actor,
            encoder_cfg: &app.encoder,
        }),
        random_action_cone: 60f64.to_radians(),
        gumbel_temp: 0.05,
        candidate_points: 24,
        candidate_actions: 8,
    };
    let t = Instant::now();
    for s in 100..110 {
        let _ = collect_episode(&app, Category::Door, Task::PullOpen, &guided, s).unwrap();
    }
    println!("guided episode: {:.1} ms", t.elapsed().as_secs_f64() * 1000.0 / 10.0);

    // one training step (batch 32): run 3 steps and divide
    let mut app_t = app.clone();
    app_t.trainer.steps_stage1 = 3;
    app_t.trainer.checkpoint_every = 0;
    let mut models_t = ModelSet::<f32>::new(&app_t, FineVariant::Integrated, 2);
    let dir = std::env::temp_dir().join("c2f_profile");
    let t = Instant::now();
    train_coarse_fine(&mut models_t, &recs, &app_t, Task::PullOpen, &dir, 1).unwrap();
    println!("stage1 step (batch 32): {:.1} ms", t.elapsed().as_secs_f64() * 1000.0 / 3.0);

    let t = Instant::now();
    let _ = eval_stage1_losses(&models_t, &recs, &app_t, Task::PullOpen);
    println!("eval_stage1 per record: {:.1} ms", t.elapsed().as_secs_f64() * 1000.0 / recs.len() as f64);
    std::fs::remove_dir_all(&dir).ok();
}
