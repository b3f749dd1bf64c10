//! Run configuration.
//!
//! A run is described by one JSON file with full defaulting: every field can
//! be omitted. The teacher's step size `alpha`, exploration rate `epsilon`,
//! latch length `steps_per_group`, reward window `history_window`, the
//! Poisson mean `lambda`, and the group count `num_groups` are all named
//! fields, so experiment files are self-describing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compositor::CompositionConfig;
use crate::error::{Error, Result};
use crate::grouping::FeatureKind;
use crate::metrics::EvalConfig;
use crate::student::{MaskPolicy, OracleParams};

/// Group-selection strategy for a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Trainable teacher biases synthetic sampling toward hard groups.
    Teacher,
    /// Uniform-random group per latch period; no teacher is instantiated.
    Uniform,
}

/// How difficulty groups are derived from sample features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingConfig {
    pub kind: FeatureKind,
    pub num_groups: usize,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            kind: FeatureKind::MinDistance,
            num_groups: 10,
        }
    }
}

/// Teacher hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    /// Pseudo-ground-truth step size.
    pub alpha: f64,
    /// Uniform exploration probability.
    pub epsilon: f64,
    /// Steps a selected group is held for.
    pub steps_per_group: usize,
    /// Reward window length (number of past losses).
    pub history_window: usize,
    /// Optimizer learning rate.
    pub learning_rate: f64,
    /// Gradient steps taken toward each pseudo-ground-truth target. The
    /// teacher updates once per group selection; this controls how far its
    /// output is pulled toward that selection's target.
    pub updates_per_selection: usize,
    /// Hidden layer width.
    pub hidden_dim: usize,
    /// Coefficient of the state summary's moving averages.
    pub state_ema: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            epsilon: 0.1,
            steps_per_group: 20,
            history_window: 10,
            learning_rate: 3e-3,
            updates_per_selection: 40,
            hidden_dim: 32,
            state_ema: 0.1,
        }
    }
}

/// A difficulty profile change applied mid-run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultySwitch {
    pub at_step: usize,
    pub difficulties: Vec<f64>,
}

/// Oracle-student settings: the [`OracleParams`] plus an optional mid-run
/// difficulty switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct OracleConfig {
    #[serde(flatten)]
    pub params: OracleParams,
    pub difficulty_switch: Option<DifficultySwitch>,
}


/// Batch and pool sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub batch_size: usize,
    /// Real pool size when no real dataset is configured.
    pub real_pool_size: usize,
    /// Per-group synthetic pool size when no synthetic dataset is
    /// configured.
    pub synthetic_pool_per_group: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            real_pool_size: 200,
            synthetic_pool_per_group: 100,
        }
    }
}

/// Dataset sources. When absent, abstract pools are generated and an
/// internal evaluation dataset is composed on the fly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub synthetic_dataset: Option<PathBuf>,
    pub real_dataset: Option<PathBuf>,
}

/// Evaluation settings for the end-of-run report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    #[serde(flatten)]
    pub config: EvalConfig,
    /// Predictor noise per unit of residual difficulty, as a fraction of
    /// head size.
    pub noise_gain: f64,
    /// Scenes composed for the internal evaluation set when no dataset is
    /// configured.
    pub eval_scenes: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            config: EvalConfig::default(),
            noise_gain: 0.5,
            eval_scenes: 40,
        }
    }
}

/// Dataset composition settings for `compose` (and the internal eval set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComposeSettings {
    /// `synthetic` composes over empty backgrounds (default lambda 9);
    /// `mixed` superimposes instances on an annotated real dataset
    /// (default lambda 4, background pitch kept).
    pub mode: ComposeMode,
    /// Overrides the mode's default Poisson mean when set.
    pub lambda: Option<f64>,
    pub max_overlap_iou: f64,
    pub pitch_range: (f64, f64),
    pub renders_per_background: usize,
    /// Empty canvases to use in synthetic mode.
    pub num_backgrounds: usize,
    /// Background dataset path for mixed mode.
    pub background_dataset: Option<PathBuf>,
    pub canvas: (u32, u32),
    pub scale_px: (f64, f64),
    pub rejection_attempts: usize,
    pub parallelism: usize,
    /// Number of procedurally generated person templates.
    pub template_count: usize,
    /// Also dump one PGM raster per scene.
    pub write_pgm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeMode {
    Synthetic,
    Mixed,
}

impl Default for ComposeSettings {
    fn default() -> Self {
        Self {
            mode: ComposeMode::Synthetic,
            lambda: None,
            max_overlap_iou: 0.6,
            pitch_range: (0.0, 45.0),
            renders_per_background: 5,
            num_backgrounds: 20,
            background_dataset: None,
            canvas: (640, 640),
            scale_px: (120.0, 320.0),
            rejection_attempts: 100,
            parallelism: 1,
            template_count: 20,
            write_pgm: false,
        }
    }
}

impl ComposeSettings {
    pub fn effective_lambda(&self) -> f64 {
        self.lambda.unwrap_or(match self.mode {
            ComposeMode::Synthetic => 9.0,
            ComposeMode::Mixed => 4.0,
        })
    }

    /// Lower to the compositor's own config.
    pub fn composition_config(&self, seed: u64) -> CompositionConfig {
        CompositionConfig {
            lambda: self.effective_lambda(),
            max_overlap_iou: self.max_overlap_iou,
            pitch_range: self.pitch_range,
            keep_background_pitch: self.mode == ComposeMode::Mixed,
            renders_per_background: self.renders_per_background,
            scale_px: self.scale_px,
            rejection_attempts: self.rejection_attempts,
            parallelism: self.parallelism,
            seed,
        }
    }
}

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: RunMode,
    pub seed: u64,
    pub total_steps: usize,
    pub out_dir: PathBuf,
    pub grouping: GroupingConfig,
    pub teacher: TeacherConfig,
    pub oracle: OracleConfig,
    pub sampler: SamplerConfig,
    pub data: DataConfig,
    pub compose: ComposeSettings,
    pub eval: EvalSettings,
    pub mask: MaskPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Teacher,
            seed: 7,
            total_steps: 5000,
            out_dir: PathBuf::from("runs/out"),
            grouping: GroupingConfig::default(),
            teacher: TeacherConfig::default(),
            oracle: OracleConfig::default(),
            sampler: SamplerConfig::default(),
            data: DataConfig::default(),
            compose: ComposeSettings::default(),
            eval: EvalSettings::default(),
            mask: MaskPolicy::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Field-level validation with the offending field in the message.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, err: Error| Error::config(format!("{name}: {err}"));
        if self.total_steps == 0 {
            return Err(Error::config("total_steps: must be positive"));
        }
        if self.grouping.num_groups < 2 {
            return Err(Error::config("grouping.num_groups: must be at least 2"));
        }
        let t = &self.teacher;
        if !(0.0..=1.0).contains(&t.alpha) {
            return Err(Error::config("teacher.alpha: outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&t.epsilon) {
            return Err(Error::config("teacher.epsilon: outside [0, 1]"));
        }
        if t.steps_per_group == 0 {
            return Err(Error::config("teacher.steps_per_group: must be positive"));
        }
        if t.history_window == 0 {
            return Err(Error::config("teacher.history_window: must be positive"));
        }
        if t.learning_rate <= 0.0 || !t.learning_rate.is_finite() {
            return Err(Error::config("teacher.learning_rate: must be positive"));
        }
        if t.updates_per_selection == 0 {
            return Err(Error::config(
                "teacher.updates_per_selection: must be positive",
            ));
        }
        if t.hidden_dim == 0 {
            return Err(Error::config("teacher.hidden_dim: must be positive"));
        }
        if !(0.0..=1.0).contains(&t.state_ema) {
            return Err(Error::config("teacher.state_ema: outside [0, 1]"));
        }
        self.oracle
            .params
            .validate()
            .map_err(|e| field("oracle", e))?;
        if self.oracle.params.difficulties.len() != self.grouping.num_groups {
            return Err(Error::config(format!(
                "oracle.difficulties: {} entries for {} groups",
                self.oracle.params.difficulties.len(),
                self.grouping.num_groups
            )));
        }
        if let Some(switch) = &self.oracle.difficulty_switch {
            if switch.difficulties.len() != self.grouping.num_groups {
                return Err(Error::config(
                    "oracle.difficulty_switch.difficulties: length mismatch",
                ));
            }
            if switch.at_step >= self.total_steps {
                return Err(Error::config(
                    "oracle.difficulty_switch.at_step: past the end of the run",
                ));
            }
        }
        let s = &self.sampler;
        if s.batch_size == 0 || !s.batch_size.is_multiple_of(2) {
            return Err(Error::config("sampler.batch_size: must be even and positive"));
        }
        if s.real_pool_size == 0 {
            return Err(Error::config("sampler.real_pool_size: must be positive"));
        }
        if s.synthetic_pool_per_group == 0 {
            return Err(Error::config(
                "sampler.synthetic_pool_per_group: must be positive",
            ));
        }
        self.compose
            .composition_config(self.seed)
            .validate()
            .map_err(|e| field("compose", e))?;
        if self.compose.num_backgrounds == 0 {
            return Err(Error::config("compose.num_backgrounds: must be positive"));
        }
        if self.compose.template_count == 0 {
            return Err(Error::config("compose.template_count: must be positive"));
        }
        if self.compose.canvas.0 == 0 || self.compose.canvas.1 == 0 {
            return Err(Error::config("compose.canvas: zero-area canvas"));
        }
        self.eval.config.validate().map_err(|e| field("eval", e))?;
        if self.eval.noise_gain < 0.0 || !self.eval.noise_gain.is_finite() {
            return Err(Error::config("eval.noise_gain: must be nonnegative"));
        }
        if self.eval.eval_scenes == 0 {
            return Err(Error::config("eval.eval_scenes: must be positive"));
        }
        Ok(())
    }
}
