//! Post-mortem diagnostics for a trained pull_open pipeline.
//! Run: cargo run --release -p c2f-core --example diagnose

use c2f_core::affordance::{coarse_forward, fine_forward};
use c2f_core::config::AppConfig;
use c2f_core::datagen::{collect_episode, CollectionPolicy};
use c2f_core::encoder::{EncoderConfig, SaLevelConfig};
use c2f_core::interaction::{execute, grasp_test, Action, Task};
use c2f_core::math::derive_seed;
use c2f_core::scene::{generate_scene, surface_point_query, Category};
use c2f_core::sensor::{far_camera_pose, near_camera_pose, render, Intrinsics};

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
    app
}

fn main() {
    if std::env::var("TRACE").is_ok() {
        trace_pipeline();
        return;
    }
    let app = dry_cfg();
    let ckpt = std::env::temp_dir().join("c2f_dryrun3/pull_open_int/stage2/checkpoint");
    let (models, _) = c2f_core::pipeline::load_modelset::<f32>(&app, &ckpt).unwrap();
    let task = Task::PullOpen;

    // 1. gate rate and gated label balance over fresh random records
    let policy = CollectionPolicy::<f32>::random_only(60.0);
    let mut gate_n = 0usize;
    let mut gate_pos = 0usize;
    let mut pos = 0usize;
    let n_rec = 400;
    let mut records = Vec::new();
    for s in 0..n_rec {
        let r = collect_episode(&app, Category::Door, task, &policy, 50_000 + s).unwrap();
        if app.affordance.label_rule.gate(r.p(), r.p_far()) {
            gate_n += 1;
            if r.gt {
                gate_pos += 1;
            }
        }
        if r.gt {
            pos += 1;
        }
        records.push(r);
    }
    println!(
        "gate rate {:.1}%  gated-positive {:.1}%  overall-positive {:.1}%",
        100.0 * gate_n as f64 / n_rec as f64,
        100.0 * gate_pos as f64 / gate_n.max(1) as f64,
        100.0 * pos as f64 / n_rec as f64
    );

    // 2. coarse separation on held-out scenes: handle-near vs far points
    let mut handle_mean = 0.0f64;
    let mut other_mean = 0.0f64;
    let mut hn = 0.0f64;
    let mut on = 0.0f64;
    for seed in 1_000_100..1_000_110u64 {
        let scene = generate_scene(app.scene.spec(Category::Door), seed).unwrap();
        let pose = far_camera_pose(&scene, &app.sensor.far);
        let far = render(&scene, &pose, &app.sensor.far_intrinsics, &app.sensor.noise, 0.25, 256, seed).unwrap();
        let map = coarse_forward(&models.store, &models.coarse, &app.encoder, &far);
        for (p, s) in far.points.iter().zip(&map.scores) {
            let q = surface_point_query(&scene, *p);
            if q.on_handle || (q.on_part && q.distance < 0.02) {
                handle_mean += s;
                hn += 1.0;
            } else {
                other_mean += s;
                on += 1.0;
            }
        }
    }
    println!(
        "coarse mean score: part/handle {:.3}  elsewhere {:.3}",
        handle_mean / hn.max(1.0),
        other_mean / on.max(1.0)
    );

    // 3. critic separation on the records' own actions
    let mut c_pos = 0.0f64;
    let mut c_neg = 0.0f64;
    let mut np = 0.0f64;
    let mut nn = 0.0f64;
    for r in records.iter().take(150) {
        let feats = fine_forward(&models.store, &models.fine, &app.encoder, &r.near, &r.far).unwrap();
        let c = c2f_core::affordance::critic::<f32>(
            &models.store,
            &models.fine,
            &feats[r.p_index],
            r.action.rot6d,
            task,
        );
        if r.gt {
            c_pos += c;
            np += 1.0;
        } else {
            c_neg += c;
            nn += 1.0;
        }
    }
    println!(
        "critic mean: positives {:.3} ({np})  negatives {:.3} ({nn})",
        c_pos / np.max(1.0),
        c_neg / nn.max(1.0)
    );

    // 4. proposal quality at the handle of held-out door scenes
    let mut pass = 0usize;
    let mut total = 0usize;
    let mut exec_ok = 0usize;
    let mut scenes_n = 0usize;
    for seed in 1_000_200..1_000_215u64 {
        let scene = generate_scene(app.scene.spec(Category::Door), seed).unwrap();
        if scene.handle_tris.is_empty() {
            continue;
        }
        scenes_n += 1;
        // handle centroid, projected to the surface
        let part = scene.part_world();
        let mut c = c2f_core::math::Vec3::ZERO;
        for &t in &scene.handle_tris {
            let (a, b, cc) = part.tri_vertices(t as usize);
            c += (a + b + cc) / 3.0;
        }
        let p = surface_point_query(&scene, c / scene.handle_tris.len() as f64).point;
        // fine features at the nearest near-cloud point to the handle
        let fpose = far_camera_pose(&scene, &app.sensor.far);
        let far = render(&scene, &fpose, &app.sensor.far_intrinsics, &app.sensor.noise, 0.25, 256, seed).unwrap();
        let npose = near_camera_pose(&scene, &fpose, p, app.sensor.near_offset);
        let near = match render(&scene, &npose, &app.sensor.near_intrinsics, &app.sensor.noise, 0.25, 256, seed + 1) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let idx = near
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.dist(p).partial_cmp(&b.1.dist(p)).unwrap())
            .unwrap()
            .0;
        let feats = fine_forward(&models.store, &models.fine, &app.encoder, &near, &far).unwrap();
        let props = c2f_core::actor::propose_batch(
            &models.store,
            &models.actor,
            &[feats[idx].clone()],
            16,
            derive_seed(seed, 9),
        );
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (j, rot) in props.iter().enumerate() {
            let action = Action { p: near.points[idx], rot6d: *rot, task };
            if grasp_test(&scene, action.p, &action.rotation(), &app.interaction) {
                pass += 1;
            }
            let cs = c2f_core::affordance::critic::<f32>(&models.store, &models.fine, &feats[idx], *rot, task);
            if cs > best.0 {
                best = (cs, j);
            }
            total += 1;
        }
        let chosen = Action { p: near.points[idx], rot6d: props[best.1], task };
        if execute(&scene, &chosen, &app.interaction).gt {
            exec_ok += 1;
        }
    }
    println!(
        "proposals at handle: grasp-pass {:.1}%  critic-best executes {:.1}% over {scenes_n} scenes",
        100.0 * pass as f64 / total.max(1) as f64,
        100.0 * exec_ok as f64 / scenes_n.max(1) as f64
    );
}

// Appended: full-pipeline episode trace. Invoked when TRACE=1.
#[allow(dead_code)]
fn trace_pipeline() {
    let app = dry_cfg();
    let ckpt = std::env::temp_dir().join("c2f_dryrun3/pull_open_int/stage2/checkpoint");
    let (models, _) = c2f_core::pipeline::load_modelset::<f32>(&app, &ckpt).unwrap();
    let task = Task::PullOpen;
    let mut reasons: std::collections::BTreeMap<String, usize> = Default::default();
    let mut zoom_handle = 0usize;
    let mut zoom_part = 0usize;
    let mut grasp_ok = 0usize;
    let mut succ = 0usize;
    let n = 40;
    for i in 0..n {
        let seed = 1_000_000 + 37 * i as u64;
        let scene = generate_scene(app.scene.spec(Category::Door), seed).unwrap();
        let fpose = far_camera_pose(&scene, &app.sensor.far);
        let far = render(&scene, &fpose, &app.sensor.far_intrinsics, &app.sensor.noise, 0.25, 256, seed).unwrap();
        let map = coarse_forward(&models.store, &models.coarse, &app.encoder, &far);
        let (_, p_far) = c2f_core::affordance::select_zoom_point(&map, &far);
        let q = surface_point_query(&scene, p_far);
        if q.on_handle { zoom_handle += 1; }
        if q.on_part { zoom_part += 1; }
        let npose = near_camera_pose(&scene, &fpose, p_far, app.sensor.near_offset);
        let near = match render(&scene, &npose, &app.sensor.near_intrinsics, &app.sensor.noise, 0.25, 256, seed + 1) {
            Ok(c) => c, Err(_) => { *reasons.entry("empty_near".into()).or_default() += 1; continue; }
        };
        let (action, detail) = c2f_core::actor::select_action(
            &models.store, &models.fine, &models.actor, &app.encoder,
            &near, &far, task, app.actor.k_points, app.actor.n_proposals, seed + 2,
        ).unwrap();
        let g = c2f_core::interaction::grasp_test(&scene, action.p, &action.rotation(), &app.interaction);
        if g { grasp_ok += 1; }
        let out = execute(&scene, &action, &app.interaction);
        if out.gt { succ += 1; }
        *reasons.entry(format!("{:?}", out.failure_reason)).or_default() += 1;
        let pq = surface_point_query(&scene, action.p);
        eprintln!(
            "ep {i}: zoom on_part={} on_handle={} | chosen p on_part={} on_handle={} dist={:.3} | score {:.2} grasp={} -> {:?} d={:.3}",
            q.on_part, q.on_handle, pq.on_part, pq.on_handle, pq.distance, detail.best_score, g, out.failure_reason, out.joint_delta
        );
    }
    eprintln!("zoom: part {zoom_part}/{n} handle {zoom_handle}/{n}; chosen grasp ok {grasp_ok}/{n}; success {succ}/{n}");
    eprintln!("reasons: {reasons:?}");
}
