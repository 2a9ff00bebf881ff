//! Strict-schema application configuration with dotted-path overrides.
//!
//! Unknown keys anywhere in the document are rejected, so typos in
//! experiment sweeps fail loudly instead of silently running defaults.

use crate::actor::ActorConfig;
use crate::affordance::CoarseLabelRule;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::interaction::InteractionParams;
use crate::scene::{Category, ScenarioSpec};
use crate::sensor::{FarCameraConfig, Intrinsics, NoiseModel};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub door: ScenarioSpec,
    pub drawer: ScenarioSpec,
    pub lid: ScenarioSpec,
    /// Scene-seed ranges [lo, hi) for data collection and evaluation; must
    /// be disjoint.
    pub train_seeds: [u64; 2],
    pub test_seeds: [u64; 2],
}

impl SceneConfig {
    pub fn spec(&self, category: Category) -> &ScenarioSpec {
        match category {
            Category::Door => &self.door,
            Category::Drawer => &self.drawer,
            Category::Lid => &self.lid,
        }
    }

    pub fn seed_ranges_disjoint(&self) -> bool {
        let [a0, a1] = self.train_seeds;
        let [b0, b1] = self.test_seeds;
        a1 <= b0 || b1 <= a0
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            door: ScenarioSpec::default_for(Category::Door),
            drawer: ScenarioSpec::default_for(Category::Drawer),
            lid: ScenarioSpec::default_for(Category::Lid),
            train_seeds: [0, 1_000_000],
            test_seeds: [1_000_000, 2_000_000],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub far: FarCameraConfig,
    pub far_intrinsics: Intrinsics,
    pub near_intrinsics: Intrinsics,
    /// Near-camera standoff from the zoom point (meters).
    pub near_offset: f64,
    /// Minimum sensing range: nearer hits are dropped.
    pub min_range: f64,
    pub noise: NoiseModel,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            far: FarCameraConfig::default(),
            far_intrinsics: Intrinsics { fov: 50f64.to_radians(), width: 128, height: 96 },
            near_intrinsics: Intrinsics { fov: 45f64.to_radians(), width: 128, height: 96 },
            near_offset: 0.6,
            min_range: 0.25,
            noise: NoiseModel::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffordanceConfig {
    /// Hidden widths of the coarse per-point head (output layer appended).
    pub head_widths: Vec<usize>,
    /// Hidden widths of the fine action critic.
    pub critic_widths: Vec<usize>,
    pub label_rule: CoarseLabelRule,
    /// Separate parameter sets per task (matching per-task evaluation).
    pub per_task_params: bool,
}

impl Default for AffordanceConfig {
    fn default() -> Self {
        AffordanceConfig {
            head_widths: vec![128, 128],
            critic_widths: vec![128, 128],
            label_rule: CoarseLabelRule::default(),
            per_task_params: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundConfig {
    pub episodes: usize,
    /// Probability of a random (vs model-guided) choice for each of
    /// p_far, p and the action.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenConfig {
    /// Balanced records per task in the final dataset.
    pub records_per_task: usize,
    /// Collection rounds; the first usually runs fully random, later
    /// rounds mix in model guidance from the freshest checkpoints.
    pub rounds: Vec<RoundConfig>,
    /// Candidate subset sizes for model-guided point/action choice.
    pub guided_candidate_points: usize,
    pub guided_candidate_actions: usize,
    /// Random actions approach within this cone of the inward normal.
    pub random_action_cone_deg: f64,
    /// Gumbel temperature of argmax-with-noise guidance.
    pub gumbel_temp: f64,
    /// Training budget for mid-collection bootstrap checkpoints.
    pub bootstrap_steps: u64,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        DatagenConfig {
            records_per_task: 10_000,
            rounds: vec![
                RoundConfig { episodes: 12_000, epsilon: 1.0 },
                RoundConfig { episodes: 30_000, epsilon: 0.5 },
            ],
            guided_candidate_points: 24,
            guided_candidate_actions: 8,
            random_action_cone_deg: 45.0,
            gumbel_temp: 0.05,
            bootstrap_steps: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub lr: f64,
    pub batch: usize,
    pub steps_stage1: u64,
    pub steps_stage2: u64,
    pub log_every: u64,
    pub checkpoint_every: u64,
    /// Single-worker in-order data loading for bit-reproducible runs.
    pub determinism: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            lr: 1e-3,
            batch: 32,
            steps_stage1: 10_000,
            steps_stage2: 10_000,
            log_every: 50,
            checkpoint_every: 2_000,
            determinism: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub n_per_cell: usize,
    pub categories: Vec<Category>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { n_per_cell: 200, categories: Category::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub seed: u64,
    /// Fixed cloud cardinality N for both views.
    pub points_per_cloud: usize,
    pub scene: SceneConfig,
    pub sensor: SensorConfig,
    pub interaction: InteractionParams,
    pub encoder: EncoderConfig,
    pub affordance: AffordanceConfig,
    pub actor: ActorConfig,
    pub datagen: DatagenConfig,
    pub trainer: TrainerConfig,
    pub bench: BenchConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            seed: 0,
            points_per_cloud: 2048,
            scene: SceneConfig::default(),
            sensor: SensorConfig::default(),
            interaction: InteractionParams::default(),
            encoder: EncoderConfig::default_full(),
            affordance: AffordanceConfig::default(),
            actor: ActorConfig::default(),
            datagen: DatagenConfig::default(),
            trainer: TrainerConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_cloud < 16 {
            return Err(Error::Config("points_per_cloud must be at least 16".into()));
        }
        for cat in Category::ALL {
            self.scene.spec(cat).validate()?;
        }
        if !self.scene.seed_ranges_disjoint() {
            return Err(Error::Config("train and test seed ranges overlap".into()));
        }
        self.sensor.far_intrinsics.validate()?;
        self.sensor.near_intrinsics.validate()?;
        self.sensor.noise.validate()?;
        self.encoder.validate()?;
        self.affordance.label_rule.validate()?;
        self.actor.validate()?;
        if self.trainer.batch == 0 {
            return Err(Error::Config("trainer batch must be positive".into()));
        }
        if self.datagen.rounds.is_empty() {
            return Err(Error::Config("datagen needs at least one round".into()));
        }
        for r in &self.datagen.rounds {
            if !(0.0..=1.0).contains(&r.epsilon) {
                return Err(Error::Config("round epsilon must lie in [0,1]".into()));
            }
        }
        Ok(())
    }

    /// Fingerprint of everything that shapes network parameters; stored in
    /// checkpoints and verified on load. Loss weights and runtime knobs
    /// (beta, proposal counts) are deliberately excluded.
    pub fn model_hash(&self, variant: crate::affordance::FineVariant) -> u64 {
        #[derive(Serialize)]
        struct Key<'a> {
            encoder: &'a EncoderConfig,
            affordance_heads: (&'a [usize], &'a [usize]),
            actor_shapes: (usize, &'a [usize], &'a [usize], &'a [usize]),
            variant: crate::affordance::FineVariant,
        }
        let key = Key {
            encoder: &self.encoder,
            affordance_heads: (&self.affordance.head_widths, &self.affordance.critic_widths),
            actor_shapes: (
                self.actor.z_dim,
                &self.actor.enc_widths,
                &self.actor.dec_widths,
                &self.actor.ds_widths,
            ),
            variant,
        };
        crate::math::fnv1a64(serde_json::to_string(&key).expect("serializable").as_bytes())
    }
}

/// Load a config (or defaults when `path` is None) and apply dotted-path
/// overrides like `trainer.lr=0.01`. Values parse as JSON first, falling
/// back to bare strings. Unknown keys are rejected by the strict schema.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<AppConfig> {
    let mut value: serde_json::Value = match path {
        Some(p) => {
            let s = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&s).map_err(|e| Error::json(p, e))?
        }
        None => serde_json::to_value(AppConfig::default())
            .map_err(|e| Error::Config(format!("default config serialization: {e}")))?,
    };
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("override '{ov}' must be key=value")))?;
        apply_override(&mut value, key, raw)?;
    }
    let cfg: AppConfig = serde_json::from_value(value)
        .map_err(|e| Error::Config(format!("config rejected: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(value: &mut serde_json::Value, dotted: &str, raw: &str) -> Result<()> {
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cur = value;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        match cur {
            serde_json::Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), parsed);
                    return Ok(());
                }
                cur = map
                    .get_mut(*part)
                    .ok_or_else(|| Error::Argument(format!("unknown config path '{dotted}'")))?;
            }
            serde_json::Value::Array(arr) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Argument(format!("non-numeric index in '{dotted}'")))?;
                let slot = arr
                    .get_mut(idx)
                    .ok_or_else(|| Error::Argument(format!("index out of range in '{dotted}'")))?;
                if last {
                    *slot = parsed;
                    return Ok(());
                }
                cur = slot;
            }
            _ => return Err(Error::Argument(format!("cannot descend into '{dotted}'"))),
        }
    }
    Ok(())
}

/// Write the fully resolved config next to a command's outputs.
pub fn write_resolved(cfg: &AppConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    crate::io::write_json(&out_dir.join("config.resolved.json"), cfg)
}
