//! Regenerate the checked-in config files from code.
//! Run: cargo run -p c2f-core --example dump_configs

use c2f_core::config::AppConfig;
use c2f_core::encoder::{EncoderConfig, SaLevelConfig};
use c2f_core::sensor::Intrinsics;

/// Desk-scale benchmark setup: small clouds and a lean pyramid sized for a
/// single-machine end-to-end run (collection + training + evaluation).
pub fn desk_config() -> AppConfig {
    let mut app = AppConfig::default();
    app.seed = 20_240_817;
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
    app.datagen.records_per_task = 10_000;
    app.datagen.rounds = vec![
        c2f_core::config::RoundConfig { episodes: 12_000, epsilon: 1.0 },
        c2f_core::config::RoundConfig { episodes: 18_000, epsilon: 0.5 },
    ];
    app.datagen.bootstrap_steps = 400;
    app.trainer.steps_stage1 = 2_500;
    app.trainer.steps_stage2 = 1_500;
    app.trainer.checkpoint_every = 1_000;
    app.bench.n_per_cell = 200;
    app
}

fn main() {
    let default = AppConfig::default();
    std::fs::create_dir_all("configs").unwrap();
    std::fs::write(
        "configs/default.json",
        serde_json::to_string_pretty(&default).unwrap() + "\n",
    )
    .unwrap();
    std::fs::write(
        "configs/desk.json",
        serde_json::to_string_pretty(&desk_config()).unwrap() + "\n",
    )
    .unwrap();
    eprintln!("wrote configs/default.json and configs/desk.json");
}
