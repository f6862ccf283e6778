//! One TOML file per run: corpus, partition, model and training sections.
//!
//! Unknown keys are rejected and every field has a default, so an empty file is a
//! valid configuration. `[model] preset = "tiny" | "full"` selects the base network
//! before the remaining model keys are applied.

use std::path::{Path, PathBuf};

use fakespan::corpus::CorpusSpec;
use fakespan::model::ModelConfig;
use fakespan::train::TrainConfig;
use fakespan::{Error, Result};
use serde::{Deserialize, Serialize};

/// Environment variable naming the directory that relative `--out` paths and
/// default run directories live under.
pub const RUN_ROOT_ENV: &str = "FAKESPAN_RUN_ROOT";

/// How a generated corpus is cut into training, validation and test manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Partition {
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for Partition {
    fn default() -> Self {
        Self {
            val_fraction: 0.125,
            test_fraction: 0.125,
        }
    }
}

impl Partition {
    pub fn validate(&self) -> Result<()> {
        let (v, t) = (self.val_fraction, self.test_fraction);
        if !(v >= 0.0 && t >= 0.0 && v + t < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "partition fractions must be non-negative and leave a training share, got {v} and {t}"
            )));
        }
        Ok(())
    }

    pub fn is_enabled(&self) -> bool {
        self.val_fraction > 0.0 || self.test_fraction > 0.0
    }

    /// Record counts of the training, validation and test blocks.
    pub fn sizes(&self, total: usize) -> [usize; 3] {
        let val = (self.val_fraction * total as f64).round() as usize;
        let test = (self.test_fraction * total as f64).round() as usize;
        [total - val - test, val, test]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: CorpusSpec,
    pub partition: Partition,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn config_err(origin: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{}: {e}", origin.display()))
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut root: toml::Table = text.parse().map_err(|e| config_err(origin, e))?;
        let preset = match root.get_mut("model") {
            Some(toml::Value::Table(model)) => model.remove("preset").map(|p| (p, model)),
            _ => None,
        };
        let cfg: RunConfig = match preset {
            None => toml::from_str(text).map_err(|e| config_err(origin, e))?,
            Some((preset, model)) => {
                let frames = match model.get("frames") {
                    Some(v) => v
                        .as_integer()
                        .and_then(|f| usize::try_from(f).ok())
                        .ok_or_else(|| config_err(origin, "model.frames must be a non-negative integer"))?,
                    None => ModelConfig::full().frames,
                };
                let base = match preset.as_str() {
                    Some("full") => ModelConfig {
                        frames,
                        ..ModelConfig::full()
                    },
                    Some("tiny") => ModelConfig::tiny(frames),
                    _ => return Err(config_err(origin, format!("model.preset must be \"tiny\" or \"full\", got {preset}"))),
                };
                let mut resolved = toml::Table::try_from(&base).map_err(|e| config_err(origin, e))?;
                resolved.extend(std::mem::take(model));
                *model = resolved;
                let text = toml::to_string(&root).map_err(|e| config_err(origin, e))?;
                toml::from_str(&text).map_err(|e| config_err(origin, e))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.partition.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.n_bins != self.train.feature.n_bins {
            return Err(Error::InvalidConfig(format!(
                "model.n_bins ({}) differs from train.feature.n_bins ({})",
                self.model.n_bins, self.train.feature.n_bins
            )));
        }
        Ok(())
    }

    /// The fully resolved configuration, as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(format!("config does not serialize: {e}")))
    }

    /// Write the resolved configuration to `dir/config.toml`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("config.toml"), self.to_toml()?)?;
        Ok(())
    }
}

/// Resolve an output location: absolute paths are kept, relative ones go under the
/// run root when it is set, and a missing `--out` becomes `<root>/<default_name>`
/// (root defaults to `runs`).
pub fn run_path(out: Option<&Path>, default_name: &str) -> PathBuf {
    let root = std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from);
    match (out, root) {
        (Some(p), _) if p.is_absolute() => p.to_path_buf(),
        (Some(p), Some(root)) => root.join(p),
        (Some(p), None) => p.to_path_buf(),
        (None, root) => root.unwrap_or_else(|| PathBuf::from("runs")).join(default_name),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fakespan::model::Pooling;

    fn parse(s: &str) -> Result<RunConfig> {
        RunConfig::parse(s, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn preset_then_overrides() {
        let c = parse("[model]\npreset = \"tiny\"\nframes = 64\npooling = \"avg\"\n").unwrap();
        assert_eq!(
            c.model,
            ModelConfig {
                pooling: Pooling::Avg,
                ..ModelConfig::tiny(64)
            }
        );
        assert!(parse("[model]\npreset = \"huge\"\n").is_err());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        for bad in [
            "colour = 3\n",
            "[train]\nlearning_rate = 0.1\n",
            "[model]\npreset = \"tiny\"\nwidth = 3\n",
            "[train]\nlr = -1.0\n",
            "[partition]\nval_fraction = 0.6\ntest_fraction = 0.5\n",
            "not toml at all [",
        ] {
            assert!(matches!(parse(bad), Err(Error::InvalidConfig(_))), "{bad}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = parse("[model]\npreset = \"tiny\"\nframes = 40\n[train]\nepochs = 2\n[corpus]\nsize = 12\n").unwrap();
        let again = parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn partition_sizes() {
        assert_eq!(Partition::default().sizes(2000), [1500, 250, 250]);
        let none = Partition {
            val_fraction: 0.0,
            test_fraction: 0.0,
        };
        assert!(!none.is_enabled());
        assert_eq!(none.sizes(7), [7, 0, 0]);
    }
}
