//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use geniepath_core::graph::Graph;
use geniepath_core::{Activation, Dataset, ModelConfig, Residual, Task, Variant};

use crate::error::{read_to_string, Error, Result};
use crate::io;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    MultiClass,
    MultiLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualName {
    None,
    Add,
    Concat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationName {
    Identity,
    Tanh,
    Relu,
}

/// Mirrors [`ModelConfig`]; omitted fields take its defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: String,
    pub depth: usize,
    pub hidden: usize,
    pub residual: ResidualName,
    pub lr: f64,
    pub l2_penalty: f64,
    pub epochs: usize,
    pub seed: u64,
    pub task: TaskName,
    pub bias: bool,
    pub patience: usize,
    pub activation: ActivationName,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        ModelSection {
            variant: d.variant.as_str().to_string(),
            depth: d.depth,
            hidden: d.hidden,
            residual: ResidualName::None,
            lr: d.lr,
            l2_penalty: d.l2_penalty,
            epochs: d.epochs,
            seed: d.seed,
            task: TaskName::MultiClass,
            bias: d.bias,
            patience: d.patience,
            activation: ActivationName::Relu,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self) -> Result<ModelConfig> {
        let variant: Variant = self.variant.parse()?;
        let config = ModelConfig {
            variant,
            depth: self.depth,
            hidden: self.hidden,
            residual: match self.residual {
                ResidualName::None => Residual::None,
                ResidualName::Add => Residual::Add,
                ResidualName::Concat => Residual::Concat,
            },
            lr: self.lr,
            l2_penalty: self.l2_penalty,
            epochs: self.epochs,
            seed: self.seed,
            task: self.task(),
            bias: self.bias,
            patience: self.patience,
            activation: match self.activation {
                ActivationName::Identity => Activation::Identity,
                ActivationName::Tanh => Activation::Tanh,
                ActivationName::Relu => Activation::Relu,
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn task(&self) -> Task {
        match self.task {
            TaskName::MultiClass => Task::MultiClass,
            TaskName::MultiLabel => Task::MultiLabel,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub splits: PathBuf,
    #[serde(default = "default_true")]
    pub undirected: bool,
    /// Inferred from the label file when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

impl DataSection {
    pub fn paths(&self) -> [&Path; 4] {
        [&self.edges, &self.features, &self.labels, &self.splits]
    }

    /// Fails on the first input file that does not exist.
    pub fn check_paths(&self) -> Result<()> {
        for p in self.paths() {
            if !p.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn load(&self, task: Task) -> Result<Dataset> {
        self.check_paths()?;
        let features = io::load_features(&self.features)?;
        let n = features.rows();
        let edges = io::load_edge_list(&self.edges)?;
        let graph = Graph::from_edges(&edges, n, self.undirected).map_err(|e| Error::Format {
            path: self.edges.clone(),
            message: e.to_string(),
        })?;
        let labels = io::load_labels(&self.labels, task, n, self.num_classes)?;
        let splits = io::load_splits(&self.splits, n)?;
        Dataset::new(graph, features, labels, splits).map_err(|e| Error::Config(format!("inconsistent dataset: {e}")))
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSection,
    pub data: DataSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// Applies one `a.b.c=value` override. The value is read as JSON when it
/// parses, otherwise as a string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = doc;
    for part in key.split('.') {
        if part.is_empty() {
            return Err(Error::Config(format!("override key {key:?} has an empty segment")));
        }
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?} descends into a non-object")))?;
        slot = obj.entry(part).or_insert_with(|| Value::Object(Default::default()));
    }
    *slot = value;
    Ok(())
}

impl RunConfig {
    /// Parses `text` with overrides applied; relative paths are resolved
    /// against `base`.
    pub fn parse(text: &str, base: &Path, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut config: RunConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        for p in [
            &mut config.data.edges,
            &mut config.data.features,
            &mut config.data.labels,
            &mut config.data.splits,
            &mut config.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.model.to_config()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"data": {"edges": "e.tsv", "features": "x.txt", "labels": "y.tsv", "splits": "s.tsv"}}"#;

    #[test]
    fn defaults_and_relative_paths() {
        let c = RunConfig::parse(MINIMAL, Path::new("/data/run"), &[]).unwrap();
        assert_eq!(c.model, ModelSection::default());
        assert_eq!(c.model.to_config().unwrap(), ModelConfig::default());
        assert_eq!(c.data.edges, Path::new("/data/run/e.tsv"));
        assert_eq!(c.output_dir, Path::new("/data/run/out"));
        assert!(c.data.undirected);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"data\"", "\"dropout\": 0.5, \"data\"");
        assert!(RunConfig::parse(&text, Path::new(""), &[]).is_err());
        assert!(RunConfig::parse(MINIMAL, Path::new(""), &["model.heads=4".into()]).is_err());
    }

    #[test]
    fn overrides() {
        let c = RunConfig::parse(
            MINIMAL,
            Path::new(""),
            &[
                "model.depth=7".into(),
                "model.variant=gcn-mean".into(),
                "model.residual=\"concat\"".into(),
                "output_dir=/tmp/x".into(),
            ],
        )
        .unwrap();
        let m = c.model.to_config().unwrap();
        assert_eq!(
            (m.depth, m.variant, m.residual),
            (7, Variant::GcnMean, Residual::Concat)
        );
        assert_eq!(c.output_dir, Path::new("/tmp/x"));
        assert!(RunConfig::parse(MINIMAL, Path::new(""), &["model.depth".into()]).is_err());
        assert!(RunConfig::parse(MINIMAL, Path::new(""), &["model.variant=gat".into()]).is_err());
        assert!(RunConfig::parse(MINIMAL, Path::new(""), &["model.depth=0".into()]).is_err());
    }
}
