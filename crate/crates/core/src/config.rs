//! TOML experiment configuration.
//!
//! ```toml
//! output_dir = "runs/demo"
//!
//! [[hierarchy.levels]]
//! names = ["benign", "malignant"]
//! chain = true
//!
//! [[hierarchy.levels]]
//! names = ["normal", "atypical", "invasive"]
//! parents = [0, 0, 1]
//! chain = true
//!
//! [synth]
//! feature_dim = 16
//! ...
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_at, Error, Result};
use crate::hierarchy::{Hierarchy, Level, PriorityMatrix};
use crate::losses::HyperParams;
use crate::metrics::MetricSettings;
use crate::remix::RemixSettings;
use crate::synth::SynthSpec;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    /// Class names; give either this or `classes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    /// Parent class in the previous level for each class. Omit on the first level.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<usize>,
    /// Shorthand: class `i` is more urgent than every class `j < i`.
    #[serde(default, skip_serializing_if = "is_false")]
    pub chain: bool,
    /// `[more, less]` pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub more_urgent: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub equivalent: Vec<[usize; 2]>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl LevelSpec {
    pub fn num_classes(&self) -> Result<usize> {
        match (&self.names, self.classes) {
            (Some(n), None) => Ok(n.len()),
            (None, Some(c)) => Ok(c),
            (Some(n), Some(c)) if n.len() == c => Ok(c),
            (Some(n), Some(c)) => Err(Error::Config(format!(
                "level lists {} names but classes = {c}",
                n.len()
            ))),
            (None, None) => Err(Error::Config("level needs `names` or `classes`".into())),
        }
    }

    fn build(&self) -> Result<Level> {
        let n = self.num_classes()?;
        let pairs = |v: &[[usize; 2]]| v.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>();
        let mut more = pairs(&self.more_urgent);
        if self.chain {
            more.extend((0..n).flat_map(|i| (0..i).map(move |j| (i, j))));
        }
        let priority = PriorityMatrix::from_pairs(n, &more, &pairs(&self.equivalent))?.closure();
        let names = self
            .names
            .clone()
            .unwrap_or_else(|| (0..n).map(|i| format!("c{i}")).collect());
        Ok(Level::new(names, self.parents.clone(), priority))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchySpec {
    /// Coarsest level first.
    pub levels: Vec<LevelSpec>,
}

impl HierarchySpec {
    pub fn build(&self) -> Result<Hierarchy> {
        let levels = self
            .levels
            .iter()
            .map(LevelSpec::build)
            .collect::<Result<Vec<_>>>()?;
        Hierarchy::new(levels)
    }

    /// Every level a chain by index.
    pub fn chains(sizes: &[usize], parent_maps: &[Vec<usize>]) -> Self {
        let levels = sizes
            .iter()
            .enumerate()
            .map(|(h, &n)| LevelSpec {
                classes: Some(n),
                parents: if h == 0 {
                    Vec::new()
                } else {
                    parent_maps[h - 1].clone()
                },
                chain: true,
                ..LevelSpec::default()
            })
            .collect();
        Self { levels }
    }
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Manifest of an existing dataset; when absent, training data comes from `synth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub hierarchy: HierarchySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub loss: HyperParams,
    #[serde(default)]
    pub remix: RemixSettings,
    #[serde(default)]
    pub metrics: MetricSettings,
}

impl ExperimentConfig {
    pub fn new(hierarchy: HierarchySpec) -> Self {
        Self {
            output_dir: default_output_dir(),
            dataset: None,
            hierarchy,
            synth: None,
            train: TrainConfig::default(),
            loss: HyperParams::default(),
            remix: RemixSettings::default(),
            metrics: MetricSettings::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without data. Returns the hierarchy.
    pub fn validate(&self) -> Result<Hierarchy> {
        let h = self.hierarchy.build()?;
        if let Some(s) = &self.synth {
            s.validate()?;
        }
        self.train.validate()?;
        self.loss.validate()?;
        self.remix.sfr.validate()?;
        if !(self.remix.random_fraction > 0.0 && self.remix.random_fraction <= 1.0) {
            return Err(Error::Config(
                "remix.random_fraction must be in (0, 1]".into(),
            ));
        }
        if !(self.metrics.penalty >= 0.0) {
            return Err(Error::Config("metrics.penalty must be >= 0".into()));
        }
        if let Some(w) = &self.loss.class_weights {
            if w.iter().map(Vec::len).ne(h.class_counts()) {
                return Err(Error::Config(
                    "loss.class_weights do not match the hierarchy".into(),
                ));
            }
        }
        Ok(h)
    }

    pub fn hierarchy(&self) -> Result<Hierarchy> {
        self.hierarchy.build()
    }

    /// Overrides every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        if let Some(s) = &mut self.synth {
            s.seed = seed;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
output_dir = "runs/x"

[[hierarchy.levels]]
names = ["benign", "malignant"]
chain = true

[[hierarchy.levels]]
names = ["normal", "atypical", "invasive"]
parents = [0, 0, 1]
chain = true

[synth]
feature_dim = 4
instances_min = 2
instances_max = 5
class_centers = { layout = "chain", spacing = 2.0, offset = 1.0 }
noise_sigma = 0.5
background_fraction = 0.4
bags_per_class = 3
seed = 1

[train]
epochs = 3
loss = "msce_ha"

[train.remix]
method = "sfr"
probability = 0.5

[metrics]
penalty = 2.0
risk_factor = "double"
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::parse(EXAMPLE).unwrap();
        let h = cfg.hierarchy().unwrap();
        assert_eq!(h.class_counts(), vec![2, 3]);
        assert!(h.is_severe(1, 0, 2).unwrap());
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = EXAMPLE.replace("epochs = 3", "epochs = 3\nepoch = 4");
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn invalid_hierarchy_rejected() {
        let bad = EXAMPLE.replace("parents = [0, 0, 1]", "parents = [0, 0, 0]");
        assert!(matches!(
            ExperimentConfig::parse(&bad),
            Err(Error::InvalidHierarchy(_))
        ));
    }

    #[test]
    fn pairs_are_closed() {
        let spec = LevelSpec {
            classes: Some(3),
            more_urgent: vec![[2, 1], [1, 0]],
            ..LevelSpec::default()
        };
        let level = spec.build().unwrap();
        assert!(level.priority.is_more_urgent(2, 0));
    }
}
