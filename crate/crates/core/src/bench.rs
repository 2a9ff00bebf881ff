//! Evaluation harness: full coarse-to-fine pipelines on held-out scenes,
//! ablation modes, success-rate tables, and affordance-heatmap export.

use crate::actor::{propose_batch, select_action};
use crate::affordance::{coarse_forward, fine_forward, select_zoom_point, FineVariant};
use crate::config::AppConfig;
use crate::error::{Error, Result};
use crate::interaction::{execute, Action, Task};
use crate::math::{derive_seed, Vec3};
use crate::nn::ForwardCtx;
use crate::scene::{generate_scene, Category};
use crate::sensor::{far_camera_pose_salted, near_camera_pose, render};
use crate::tape::{Scalar, Tape};
use crate::trainer::ModelSet;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Full pipeline: coarse zoom, cross-view fine, actor.
    Final,
    /// Zoom point chosen uniformly at random over far-cloud indices.
    RandomCoarse,
    /// Manipulation point chosen uniformly at random over near-cloud
    /// indices; orientations still come from the actor plus critic.
    RandomFine,
    /// Integration ablation: the fine module fuses one far global vector
    /// instead of cross-view propagation (requires a separate-variant
    /// model).
    Separate,
}

impl EvalMode {
    pub const ALL: [EvalMode; 4] =
        [EvalMode::Final, EvalMode::RandomCoarse, EvalMode::RandomFine, EvalMode::Separate];

    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Final => "final",
            EvalMode::RandomCoarse => "random_coarse",
            EvalMode::RandomFine => "random_fine",
            EvalMode::Separate => "separate",
        }
    }

    pub fn required_variant(self) -> FineVariant {
        match self {
            EvalMode::Separate => FineVariant::Separate,
            _ => FineVariant::Integrated,
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<EvalMode> {
        match s {
            "final" => Ok(EvalMode::Final),
            "random_coarse" => Ok(EvalMode::RandomCoarse),
            "random_fine" => Ok(EvalMode::RandomFine),
            "separate" => Ok(EvalMode::Separate),
            other => Err(Error::Argument(format!("unknown eval mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub category: Category,
    pub task: Task,
    pub successes: usize,
    pub n: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalTable {
    pub mode: EvalMode,
    pub task: Task,
    pub cells: Vec<CellResult>,
    pub overall: f64,
}

/// Run `n_per_cell` full pipelines per category on test-split scenes and
/// report per-cell success rates. Deterministic in `seed`.
pub fn evaluate<S: Scalar>(
    models: &ModelSet<S>,
    app: &AppConfig,
    mode: EvalMode,
    task: Task,
    categories: &[Category],
    n_per_cell: usize,
    seed: u64,
) -> Result<EvalTable> {
    if models.variant != mode.required_variant() {
        return Err(Error::Argument(format!(
            "mode {} needs a {:?}-variant model, got {:?}",
            mode.name(),
            mode.required_variant(),
            models.variant
        )));
    }
    if !app.scene.seed_ranges_disjoint() {
        return Err(Error::Config("train and test seed ranges overlap".into()));
    }
    let mut cells = Vec::new();
    let mut total_succ = 0usize;
    let mut total_n = 0usize;
    for (ci, &cat) in categories.iter().enumerate() {
        let mut successes = 0usize;
        for i in 0..n_per_cell {
            let ep_seed = derive_seed(seed, (ci as u64) << 32 | i as u64);
            // a scene the sensor cannot capture counts as a failed interaction
            let outcome = match run_episode(models, app, mode, task, cat, ep_seed) {
                Ok(gt) => gt,
                Err(Error::EpisodeFailed { .. }) => false,
                Err(e) => return Err(e),
            };
            if outcome {
                successes += 1;
            }
        }
        total_succ += successes;
        total_n += n_per_cell;
        cells.push(CellResult {
            category: cat,
            task,
            successes,
            n: n_per_cell,
            rate: successes as f64 / n_per_cell as f64,
        });
    }
    Ok(EvalTable {
        mode,
        task,
        cells,
        overall: total_succ as f64 / total_n.max(1) as f64,
    })
}

fn run_episode<S: Scalar>(
    models: &ModelSet<S>,
    app: &AppConfig,
    mode: EvalMode,
    task: Task,
    category: Category,
    ep_seed: u64,
) -> Result<bool> {
    let [lo, hi] = app.scene.test_seeds;
    let scene_seed = lo + derive_seed(ep_seed, 1) % (hi - lo).max(1);
    let scene = generate_scene(app.scene.spec(category), scene_seed)?;
    let n = app.points_per_cloud;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ep_seed, 2));

    let mut attempt = 0u64;
    let (far, near) = loop {
        let far_pose = far_camera_pose_salted(&scene, &app.sensor.far, attempt);
        let far = match render(
            &scene,
            &far_pose,
            &app.sensor.far_intrinsics,
            &app.sensor.noise,
            app.sensor.min_range,
            n,
            derive_seed(ep_seed, 10 + attempt),
        ) {
            Ok(c) => c,
            Err(Error::EmptyView) if attempt < 5 => {
                attempt += 1;
                continue;
            }
            Err(Error::EmptyView) => return Err(Error::EpisodeFailed { retries: 5 }),
            Err(e) => return Err(e),
        };
        let p_far = match mode {
            EvalMode::RandomCoarse => far.points[rng.random_range(0..far.points.len())],
            _ => {
                let map = coarse_forward(&models.store, &models.coarse, &app.encoder, &far);
                select_zoom_point(&map, &far).1
            }
        };
        let near_pose = near_camera_pose(&scene, &far.source_pose, p_far, app.sensor.near_offset);
        match render(
            &scene,
            &near_pose,
            &app.sensor.near_intrinsics,
            &app.sensor.noise,
            app.sensor.min_range,
            n,
            derive_seed(ep_seed, 20 + attempt),
        ) {
            Ok(c) => break (far, c),
            Err(Error::EmptyView) if attempt < 5 => {
                attempt += 1;
                continue;
            }
            Err(Error::EmptyView) => return Err(Error::EpisodeFailed { retries: 5 }),
            Err(e) => return Err(e),
        }
    };

    let action = match mode {
        EvalMode::RandomFine => {
            // random manipulation point; actor + critic still pick the
            // orientation at that point
            let idx = rng.random_range(0..near.points.len());
            let feats = fine_forward(&models.store, &models.fine, &app.encoder, &near, &far)?;
            let proposals = propose_batch(
                &models.store,
                &models.actor,
                &[feats[idx].clone()],
                app.actor.n_proposals,
                derive_seed(ep_seed, 30),
            );
            let mut tape = Tape::<S>::new();
            let mut ctx = ForwardCtx::new();
            let fdim = feats[idx].len();
            let mut flat = Vec::with_capacity(proposals.len() * fdim);
            for _ in 0..proposals.len() {
                flat.extend(feats[idx].iter().map(|v| S::from_f64(*v)));
            }
            let f_var = tape.leaf(flat, proposals.len(), fdim);
            let tasks = vec![task; proposals.len()];
            let scores =
                models.fine.critic_scores(&mut tape, &models.store, &mut ctx, f_var, &proposals, &tasks);
            let best = tape
                .value(scores)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.to_f64().partial_cmp(&b.1.to_f64()).unwrap().then(b.0.cmp(&a.0)))
                .map(|(j, _)| j)
                .unwrap_or(0);
            Action { p: near.points[idx], rot6d: proposals[best], task }
        }
        _ => {
            let (action, _) = select_action(
                &models.store,
                &models.fine,
                &models.actor,
                &app.encoder,
                &near,
                &far,
                task,
                app.actor.k_points,
                app.actor.n_proposals,
                derive_seed(ep_seed, 30),
            )?;
            action
        }
    };
    Ok(execute(&scene, &action, &app.interaction).gt)
}

/// CSV rows: mode,task,category,successes,n,rate plus an overall row.
pub fn write_table_csv(table: &EvalTable, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = |line: String| -> Result<()> {
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))
    };
    w("mode,task,category,successes,n,rate".to_string())?;
    for c in &table.cells {
        w(format!(
            "{},{},{},{},{},{:.6}",
            table.mode.name(),
            c.task.name(),
            c.category.name(),
            c.successes,
            c.n,
            c.rate
        ))?;
    }
    w(format!(
        "{},{},overall,{},{},{:.6}",
        table.mode.name(),
        table.task.name(),
        table.cells.iter().map(|c| c.successes).sum::<usize>(),
        table.cells.iter().map(|c| c.n).sum::<usize>(),
        table.overall
    ))
}

pub fn write_table_json(table: &EvalTable, path: &Path) -> Result<()> {
    crate::io::write_json(path, table)
}

/// Map a score to the export color: 0 is blue, 1 is red, linear between.
pub fn score_color(score: f64) -> (u8, u8, u8) {
    let r = ((score.clamp(0.0, 1.0) * 256.0).floor() as i64).min(255) as u8;
    (r, 0, 255 - r)
}

/// ASCII PLY point cloud with per-vertex colors encoding scores.
pub fn export_heatmap(points: &[Vec3], scores: &[f64], path: &Path) -> Result<()> {
    if points.len() != scores.len() {
        return Err(Error::Argument(format!(
            "heatmap length mismatch: {} points vs {} scores",
            points.len(),
            scores.len()
        )));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", points.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    out.push_str("end_header\n");
    for (p, s) in points.iter().zip(scores) {
        let (r, g, b) = score_color(*s);
        out.push_str(&format!("{} {} {} {r} {g} {b}\n", p.x as f32, p.y as f32, p.z as f32));
    }
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parse an exported heatmap back into points and red-channel scores.
pub fn parse_heatmap(path: &Path) -> Result<(Vec<Vec3>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let mut count = 0usize;
    for line in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("element vertex ") {
            count = rest
                .trim()
                .parse()
                .map_err(|_| Error::Argument("bad vertex count".into()))?;
        }
        if line == "end_header" {
            break;
        }
    }
    let mut points = Vec::with_capacity(count);
    let mut scores = Vec::with_capacity(count);
    for line in lines.take(count) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::Argument(format!("bad PLY vertex line: '{line}'")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Argument("bad float".into()));
        points.push(Vec3::new(parse(f[0])?, parse(f[1])?, parse(f[2])?));
        let red: f64 = parse(f[3])?;
        scores.push(red / 255.0);
    }
    Ok((points, scores))
}
