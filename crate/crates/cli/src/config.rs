//! Config-file handling: pipeline-wide defaults that individual flags
//! override, the synthetic-corpus recipe, and the split manifest artifact.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use scenesift_core::bn::ZeroCountPolicy;
use scenesift_core::dataset::{Dataset, MatchConfig};
use scenesift_core::Error as CoreError;

/// A problem with flags, config files, or referenced paths — anything the
/// user fixes by changing the invocation rather than the data.
#[derive(Debug)]
pub struct ConfigProblem(pub String);

impl fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigProblem {}

/// Fails with a config-class error when an input file is absent, so missing
/// inputs are caught before any artifact is written.
pub fn require_file(path: &Path) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ConfigProblem(format!("input file not found: {}", path.display())).into())
    }
}

/// Defaults shared across subcommands, loaded from `--config`. Every field
/// is optional; a flag given on the command line always wins.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub alpha: Option<f64>,
    pub train_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub zero_count_policy: Option<ZeroCountPolicy>,
    /// Default instance-table path for commands that read one.
    pub input: Option<PathBuf>,
    /// Default model path for commands that read one.
    pub model: Option<PathBuf>,
    #[serde(default, rename = "match")]
    pub match_defaults: MatchDefaults,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchDefaults {
    pub cost_threshold: Option<f64>,
    pub x_limit: Option<f64>,
    pub y_limit: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        require_file(path)?;
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| {
            ConfigProblem(format!("config {}: {e}", path.display())).into()
        })
    }

    /// Match parameters with flag > config > built-in default precedence.
    pub fn match_config(
        &self,
        cost_threshold: Option<f64>,
        x_limit: Option<f64>,
        y_limit: Option<f64>,
    ) -> MatchConfig {
        let base = MatchConfig::default();
        MatchConfig {
            cost_threshold: cost_threshold
                .or(self.match_defaults.cost_threshold)
                .unwrap_or(base.cost_threshold),
            x_limit: x_limit.or(self.match_defaults.x_limit).unwrap_or(base.x_limit),
            y_limit: y_limit.or(self.match_defaults.y_limit).unwrap_or(base.y_limit),
        }
    }
}

fn default_fn_node() -> String {
    scenesift_core::dataset::FN_ATTRIBUTE.to_string()
}

fn default_fn_positive() -> String {
    scenesift_core::dataset::FN_YES.to_string()
}

fn default_noise_std() -> f64 {
    0.3
}

fn default_x_limit() -> f64 {
    140.0
}

fn default_y_limit() -> f64 {
    50.0
}

/// Recipe for one synthetic corpus. `truth_model` is resolved relative to
/// the recipe file's own directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub truth_model: PathBuf,
    pub scenes: usize,
    pub instances_min: usize,
    pub instances_max: usize,
    pub scene_level_nodes: Vec<String>,
    pub instance_level_nodes: Vec<String>,
    #[serde(default)]
    pub hidden_nodes: Vec<String>,
    #[serde(default)]
    pub fn_emission: bool,
    #[serde(default = "default_fn_node")]
    pub fn_node: String,
    #[serde(default = "default_fn_positive")]
    pub fn_positive_state: String,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default = "default_x_limit")]
    pub x_limit: f64,
    #[serde(default = "default_y_limit")]
    pub y_limit: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn load(path: &Path) -> anyhow::Result<(Self, PathBuf)> {
        require_file(path)?;
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading recipe {}", path.display()))?;
        let cfg: SynthConfig = toml::from_str(&text).map_err(|e| {
            ConfigProblem(format!("recipe {}: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        let model_path = if cfg.truth_model.is_absolute() {
            cfg.truth_model.clone()
        } else {
            base.join(&cfg.truth_model)
        };
        Ok((cfg, model_path))
    }
}

/// On-disk record of one train/test partition: the seed and fraction that
/// produced it plus the full scene-id lists, so any later command can apply
/// the exact same partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_fraction: f64,
    pub train_scenes: Vec<String>,
    pub test_scenes: Vec<String>,
}

impl SplitManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        require_file(path)?;
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading split manifest {}", path.display()))?;
        let manifest: SplitManifest = serde_json::from_str(&text).map_err(|e| {
            CoreError::Parse {
                reason: format!("split manifest {}: {e}", path.display()),
            }
        })?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)
            .with_context(|| format!("writing split manifest {}", path.display()))?;
        Ok(())
    }

    /// Partitions `data` per the manifest. Every dataset scene must be
    /// listed on exactly one side and every listed scene must exist;
    /// anything else means the manifest belongs to different data.
    pub fn apply(&self, data: &Dataset) -> anyhow::Result<(Dataset, Dataset)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for scene in &data.scenes {
            let in_train = self.train_scenes.contains(&scene.scene_id);
            let in_test = self.test_scenes.contains(&scene.scene_id);
            match (in_train, in_test) {
                (true, false) => train.push(scene.clone()),
                (false, true) => test.push(scene.clone()),
                (true, true) => {
                    return Err(CoreError::Parse {
                        reason: format!(
                            "split manifest lists scene '{}' on both sides",
                            scene.scene_id
                        ),
                    }
                    .into())
                }
                (false, false) => {
                    return Err(CoreError::Parse {
                        reason: format!(
                            "split manifest does not cover scene '{}'",
                            scene.scene_id
                        ),
                    }
                    .into())
                }
            }
        }
        for listed in self.train_scenes.iter().chain(&self.test_scenes) {
            if data.scene(listed).is_none() {
                return Err(CoreError::Parse {
                    reason: format!(
                        "split manifest lists scene '{listed}' absent from the data"
                    ),
                }
                .into());
            }
        }
        Ok((Dataset { scenes: train }, Dataset { scenes: test }))
    }
}
