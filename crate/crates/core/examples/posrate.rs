//! Positive-rate probe for random collection at acceptance scale.
//! Run: cargo run --release -p c2f-core --example posrate

use c2f_core::config::AppConfig;
use c2f_core::datagen::{collect_episode, CollectionPolicy};
use c2f_core::encoder::{EncoderConfig, SaLevelConfig};
use c2f_core::interaction::Task;
use c2f_core::scene::Category;
use c2f_core::sensor::Intrinsics;

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
    app
}

fn main() {
    let app = acceptance_scale();
    let policy = CollectionPolicy::<f32>::random_only(60.0);
    for task in Task::ALL {
        for cat in Category::ALL {
            let mut pos = 0usize;
            let mut reasons = std::collections::BTreeMap::new();
            let n = 400;
            for s in 0..n {
                let rec = collect_episode(&app, cat, task, &policy, 7_000 + s as u64).unwrap();
                if rec.gt {
                    pos += 1;
                }
                // re-derive the failure reason for diagnostics
                let scene = c2f_core::scene::generate_scene(app.scene.spec(cat), rec.scene_seed).unwrap();
                let out = c2f_core::interaction::execute(&scene, &rec.action, &app.interaction);
                *reasons.entry(format!("{:?}", out.failure_reason)).or_insert(0usize) += 1;
            }
            println!(
                "{} {}: {:.1}% positive   {:?}",
                task.name(),
                cat.name(),
                100.0 * pos as f64 / n as f64,
                reasons
            );
        }
    }
}
