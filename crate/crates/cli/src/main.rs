//! `c2f`: single entry point for the coarse-to-fine affordance pipeline.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 runtime error.

use c2f_core::affordance::{coarse_forward, fine_forward, FineVariant};
use c2f_core::bench::{evaluate, export_heatmap, write_table_csv, write_table_json, EvalMode};
use c2f_core::config::{load_config, write_resolved, AppConfig};
use c2f_core::datagen::{load_dataset, save_dataset};
use c2f_core::error::Error as CoreError;
use c2f_core::interaction::Task;
use c2f_core::math::derive_seed;
use c2f_core::pipeline::{generate_task_dataset, load_modelset, train_full};
use c2f_core::scene::{generate_scene, Category};
use c2f_core::sensor::{far_camera_pose, near_camera_pose, render};
use c2f_core::trainer::{train_actor, train_coarse_fine, ModelSet};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

type S = f32;

#[derive(Parser)]
#[command(name = "c2f", version, about = "Coarse-to-fine point-cloud affordance pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path overrides, e.g. --set trainer.lr=0.01
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<AppConfig, CliError> {
        load_config(self.config.as_deref(), &self.set).map_err(CliError::from)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Collect a balanced interaction dataset for one task.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        task: String,
        /// Use only the first N configured collection rounds.
        #[arg(long)]
        rounds: Option<usize>,
        /// Override the episode budget of every round.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train one stage of the pipeline on a collected dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_parser = ["coarse_fine", "actor", "full"])]
        stage: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long, default_value = "integrated", value_parser = ["integrated", "separate"])]
        variant: String,
        /// Stage-1 checkpoint consumed by --stage actor
        /// (default: <out>/stage1/checkpoint).
        #[arg(long)]
        stage1: Option<PathBuf>,
    },
    /// Evaluate a trained pipeline on held-out scenes.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        mode: String,
        #[arg(long)]
        task: String,
        /// Interactions per (category, task) cell.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select an action for one held-out scene and print it as JSON.
    Infer {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene_seed: u64,
        #[arg(long)]
        task: String,
        #[arg(long, default_value = "door")]
        category: String,
        /// Also write action.json and the config snapshot here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export far and near affordance heatmaps for one scene as PLY.
    Heatmap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene_seed: u64,
        #[arg(long)]
        task: String,
        #[arg(long, default_value = "door")]
        category: String,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) | CoreError::Argument(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version as "errors" with success intent
            if e.use_stderr() {
                let _ = e.print();
                return ExitCode::from(1);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn parse_task(s: &str) -> Result<Task, CliError> {
    s.parse::<Task>().map_err(CliError::from)
}

fn parse_category(s: &str) -> Result<Category, CliError> {
    s.parse::<Category>().map_err(CliError::from)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::GenData { cfg, out, task, rounds, episodes } => {
            let mut app = cfg.load()?;
            let task = parse_task(&task)?;
            if let Some(r) = rounds {
                if r == 0 || r > app.datagen.rounds.len() {
                    return Err(CliError::Usage(format!(
                        "--rounds must lie in 1..={}",
                        app.datagen.rounds.len()
                    )));
                }
                app.datagen.rounds.truncate(r);
            }
            if let Some(e) = episodes {
                for r in app.datagen.rounds.iter_mut() {
                    r.episodes = e;
                }
            }
            write_resolved(&app, &out).map_err(CliError::from)?;
            let work = out.join("work");
            let dataset =
                generate_task_dataset::<S>(&app, task, &work, true).map_err(CliError::from)?;
            save_dataset(&dataset, &out).map_err(CliError::from)?;
            std::fs::remove_dir_all(&work).ok();
            eprintln!("wrote {} records to {}", dataset.len(), out.display());
            Ok(())
        }
        Cmd::Train { cfg, stage, data, out, task, variant, stage1 } => {
            let app = cfg.load()?;
            let task = parse_task(&task)?;
            let variant = match variant.as_str() {
                "separate" => FineVariant::Separate,
                _ => FineVariant::Integrated,
            };
            let dataset = load_dataset(&data).map_err(CliError::from)?;
            write_resolved(&app, &out).map_err(CliError::from)?;
            let run_seed = derive_seed(app.seed, 0x7e);
            match stage.as_str() {
                "full" => {
                    let (r1, r2) = train_full::<S>(&app, task, variant, &dataset, &out, run_seed)
                        .map_err(CliError::from)?;
                    eprintln!(
                        "stage1 final loss {:.4} (coarse {:.4}, fine {:.4}); stage2 recon {:.4}",
                        r1.final_total, r1.final_coarse, r1.final_fine, r2.final_recon
                    );
                }
                "coarse_fine" => {
                    let mut models = ModelSet::<S>::new(&app, variant, derive_seed(run_seed, 1));
                    let r1 = train_coarse_fine(
                        &mut models,
                        &dataset,
                        &app,
                        task,
                        &out.join("stage1"),
                        derive_seed(run_seed, 2),
                    )
                    .map_err(CliError::from)?;
                    eprintln!(
                        "stage1 final loss {:.4} (coarse {:.4}, fine {:.4})",
                        r1.final_total, r1.final_coarse, r1.final_fine
                    );
                }
                "actor" => {
                    let s1 = stage1.unwrap_or_else(|| out.join("stage1").join("checkpoint"));
                    let mut models = ModelSet::<S>::new(&app, variant, derive_seed(run_seed, 1));
                    let r2 = train_actor(
                        &mut models,
                        &dataset,
                        &app,
                        task,
                        &s1,
                        &out.join("stage2"),
                        derive_seed(run_seed, 3),
                    )
                    .map_err(CliError::from)?;
                    eprintln!(
                        "stage2 scoring {:.4}, cvae {:.4} (recon {:.4})",
                        r2.final_scoring, r2.final_cvae, r2.final_recon
                    );
                }
                other => return Err(CliError::Usage(format!("unknown stage '{other}'"))),
            }
            Ok(())
        }
        Cmd::Eval { cfg, ckpt, mode, task, n, out } => {
            let mut app = cfg.load()?;
            let task = parse_task(&task)?;
            let mode: EvalMode = mode.parse().map_err(CliError::from)?;
            if let Some(n) = n {
                app.bench.n_per_cell = n;
            }
            let (models, _manifest) = load_modelset::<S>(&app, &ckpt).map_err(CliError::from)?;
            write_resolved(&app, &out).map_err(CliError::from)?;
            let table = evaluate(
                &models,
                &app,
                mode,
                task,
                &app.bench.categories,
                app.bench.n_per_cell,
                app.seed,
            )
            .map_err(CliError::from)?;
            let stem = format!("eval_{}_{}", mode.name(), task.name());
            write_table_csv(&table, &out.join(format!("{stem}.csv"))).map_err(CliError::from)?;
            write_table_json(&table, &out.join(format!("{stem}.json"))).map_err(CliError::from)?;
            for c in &table.cells {
                println!("{} {} {}: {:.3}", mode.name(), c.task.name(), c.category.name(), c.rate);
            }
            println!("{} {} overall: {:.3}", mode.name(), task.name(), table.overall);
            Ok(())
        }
        Cmd::Infer { cfg, ckpt, scene_seed, task, category, out } => {
            let app = cfg.load()?;
            let task = parse_task(&task)?;
            let category = parse_category(&category)?;
            let (models, _) = load_modelset::<S>(&app, &ckpt).map_err(CliError::from)?;
            let (action, _detail) =
                infer_action(&app, &models, category, scene_seed, task).map_err(CliError::from)?;
            let json = serde_json::to_string_pretty(&action)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{json}");
            if let Some(out) = out {
                write_resolved(&app, &out).map_err(CliError::from)?;
                std::fs::write(out.join("action.json"), format!("{json}\n"))
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            Ok(())
        }
        Cmd::Heatmap { cfg, ckpt, scene_seed, task, category, out } => {
            let app = cfg.load()?;
            let task = parse_task(&task)?;
            let category = parse_category(&category)?;
            let (models, _) = load_modelset::<S>(&app, &ckpt).map_err(CliError::from)?;
            write_resolved(&app, &out).map_err(CliError::from)?;
            let scene =
                generate_scene(app.scene.spec(category), scene_seed).map_err(CliError::from)?;
            let n = app.points_per_cloud;
            let far_pose = far_camera_pose(&scene, &app.sensor.far);
            let far = render(
                &scene,
                &far_pose,
                &app.sensor.far_intrinsics,
                &app.sensor.noise,
                app.sensor.min_range,
                n,
                derive_seed(scene_seed, 1),
            )
            .map_err(CliError::from)?;
            let map = coarse_forward(&models.store, &models.coarse, &app.encoder, &far);
            export_heatmap(&far.points, &map.scores, &out.join("far.ply"))
                .map_err(CliError::from)?;

            let (_, p_far) = c2f_core::affordance::select_zoom_point(&map, &far);
            let near_pose = near_camera_pose(&scene, &far_pose, p_far, app.sensor.near_offset);
            let near = render(
                &scene,
                &near_pose,
                &app.sensor.near_intrinsics,
                &app.sensor.noise,
                app.sensor.min_range,
                n,
                derive_seed(scene_seed, 2),
            )
            .map_err(CliError::from)?;
            let feats = fine_forward(&models.store, &models.fine, &app.encoder, &near, &far)
                .map_err(CliError::from)?;
            let potentials =
                near_potentials(&app, &models, &feats, task, derive_seed(scene_seed, 3));
            export_heatmap(&near.points, &potentials, &out.join("near.ply"))
                .map_err(CliError::from)?;
            eprintln!("wrote {} and {}", out.join("far.ply").display(), out.join("near.ply").display());
            Ok(())
        }
    }
}

/// Fine affordance per near point: max critic score over actor proposals.
fn near_potentials(
    app: &AppConfig,
    models: &ModelSet<S>,
    feats: &[Vec<f64>],
    task: Task,
    seed: u64,
) -> Vec<f64> {
    use c2f_core::nn::ForwardCtx;
    use c2f_core::tape::{Scalar as _, Tape};
    let n_prop = app.actor.n_proposals;
    let proposals =
        c2f_core::actor::propose_batch(&models.store, &models.actor, feats, n_prop, seed);
    let fdim = feats[0].len();
    let rows = feats.len() * n_prop;
    let mut tape = Tape::<S>::new();
    let mut ctx = ForwardCtx::new();
    let mut flat = Vec::with_capacity(rows * fdim);
    for f in feats {
        for _ in 0..n_prop {
            flat.extend(f.iter().map(|v| *v as S));
        }
    }
    let f_var = tape.leaf(flat, rows, fdim);
    let tasks = vec![task; rows];
    let scores = models.fine.critic_scores(&mut tape, &models.store, &mut ctx, f_var, &proposals, &tasks);
    (0..feats.len())
        .map(|i| {
            tape.value(scores)[i * n_prop..(i + 1) * n_prop]
                .iter()
                .map(|v| v.to_f64())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn infer_action(
    app: &AppConfig,
    models: &ModelSet<S>,
    category: Category,
    scene_seed: u64,
    task: Task,
) -> c2f_core::Result<(c2f_core::interaction::Action, c2f_core::actor::SelectionDetail)> {
    let scene = generate_scene(app.scene.spec(category), scene_seed)?;
    let n = app.points_per_cloud;
    let far_pose = far_camera_pose(&scene, &app.sensor.far);
    let far = render(
        &scene,
        &far_pose,
        &app.sensor.far_intrinsics,
        &app.sensor.noise,
        app.sensor.min_range,
        n,
        derive_seed(scene_seed, 1),
    )?;
    let map = coarse_forward(&models.store, &models.coarse, &app.encoder, &far);
    let (_, p_far) = c2f_core::affordance::select_zoom_point(&map, &far);
    let near_pose = near_camera_pose(&scene, &far_pose, p_far, app.sensor.near_offset);
    let near = render(
        &scene,
        &near_pose,
        &app.sensor.near_intrinsics,
        &app.sensor.noise,
        app.sensor.min_range,
        n,
        derive_seed(scene_seed, 2),
    )?;
    c2f_core::actor::select_action(
        &models.store,
        &models.fine,
        &models.actor,
        &app.encoder,
        &near,
        &far,
        task,
        app.actor.k_points,
        app.actor.n_proposals,
        derive_seed(scene_seed, 3),
    )
}
