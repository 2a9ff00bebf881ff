//! Reduced-scale end-to-end rehearsal of the ablation benchmark.
//! Run: cargo run --release -p c2f-core --example dryrun

use c2f_core::affordance::FineVariant;
use c2f_core::bench::{evaluate, EvalMode};
use c2f_core::config::AppConfig;
use c2f_core::encoder::{EncoderConfig, SaLevelConfig};
use c2f_core::interaction::Task;
use c2f_core::pipeline::{generate_task_dataset, train_full};
use c2f_core::sensor::Intrinsics;
use c2f_core::trainer::ModelSet;
use std::time::Instant;

fn dry_cfg() -> AppConfig {
    let mut app = AppConfig::default();
    app.seed = 1;
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
    app.datagen.records_per_task = 1500;
    app.datagen.rounds = vec![
        c2f_core::config::RoundConfig { episodes: 3000, epsilon: 1.0 },
        c2f_core::config::RoundConfig { episodes: 4000, epsilon: 0.5 },
    ];
    app.datagen.bootstrap_steps = 300;
    app.trainer.steps_stage1 = 1200;
    app.trainer.steps_stage2 = 600;
    app.trainer.checkpoint_every = 0;
    app.bench.n_per_cell = 60;
    app
}

fn main() {
    let app = dry_cfg();
    let t0 = Instant::now();
    let work = std::env::temp_dir().join("c2f_dryrun3");
    std::fs::create_dir_all(&work).unwrap();

    let tasks: &[Task] = if std::env::var("PULL_ONLY").is_ok() {
        &[Task::PullOpen]
    } else {
        &[Task::PullOpen, Task::PushClose]
    };
    for &task in tasks {
        eprintln!("=== {} ===", task.name());
        let data = generate_task_dataset::<f32>(&app, task, &work.join(task.name()), true).unwrap();
        eprintln!("[{:.0}s] dataset: {} records", t0.elapsed().as_secs_f64(), data.len());

        let out_int = work.join(format!("{}_int", task.name()));
        let (r1, r2) = train_full::<f32>(&app, task, FineVariant::Integrated, &data, &out_int, 5).unwrap();
        eprintln!(
            "[{:.0}s] integrated: stage1 {:.3} (c {:.3} f {:.3}), stage2 recon {:.4}",
            t0.elapsed().as_secs_f64(),
            r1.final_total,
            r1.final_coarse,
            r1.final_fine,
            r2.final_recon
        );
        let (models_int, _) =
            c2f_core::pipeline::load_modelset::<f32>(&app, &out_int.join("stage2/checkpoint")).unwrap();

        let modes: &[EvalMode] = if task == Task::PullOpen {
            &[EvalMode::Final, EvalMode::RandomCoarse, EvalMode::RandomFine]
        } else {
            &[EvalMode::Final]
        };
        for &mode in modes {
            let table = evaluate(&models_int, &app, mode, task, &app.bench.categories, app.bench.n_per_cell, 99).unwrap();
            let cells: Vec<String> =
                table.cells.iter().map(|c| format!("{} {:.2}", c.category.name(), c.rate)).collect();
            eprintln!(
                "[{:.0}s] {} {}: overall {:.3}  ({})",
                t0.elapsed().as_secs_f64(),
                mode.name(),
                task.name(),
                table.overall,
                cells.join(", ")
            );
        }

        if task == Task::PullOpen {
            let out_sep = work.join("pull_sep");
            let (r1s, _r2s) =
                train_full::<f32>(&app, task, FineVariant::Separate, &data, &out_sep, 5).unwrap();
            eprintln!(
                "[{:.0}s] separate: stage1 {:.3}",
                t0.elapsed().as_secs_f64(),
                r1s.final_total
            );
            let (models_sep, _) =
                c2f_core::pipeline::load_modelset::<f32>(&app, &out_sep.join("stage2/checkpoint")).unwrap();
            let table = evaluate(&models_sep, &app, EvalMode::Separate, task, &app.bench.categories, app.bench.n_per_cell, 99).unwrap();
            eprintln!(
                "[{:.0}s] separate pull_open: overall {:.3}",
                t0.elapsed().as_secs_f64(),
                table.overall
            );
        }
        let _ = ModelSet::<f32>::new(&app, FineVariant::Integrated, 0);
    }
    eprintln!("total: {:.0}s", t0.elapsed().as_secs_f64());
}
