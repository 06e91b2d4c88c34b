//! TOML run configuration. Every section and key is optional; missing values
//! take the library defaults.
//!
//! ```toml
//! [synth]              # one video; see SynthConfig
//! width = 64
//! [dataset]
//! videos = 4
//! [pipeline]
//! preset = "outdoor"   # or long_range / short_range directly
//! variant = "l+s+c"
//! [flow]
//! search_radius = 4
//! [train]              # fusion layer
//! epochs = 500
//! [parser]
//! learning_rate = 0.5
//! [metrics]
//! class_names = ["bk", "person", "bag"]
//! ```

use std::path::Path;

use labelprop::{FlowConfig, MetricsOptions, PipelineConfig, SynthConfig, TrainConfig, Variant};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub dataset: DatasetSection,
    pub pipeline: PipelineSection,
    pub flow: FlowConfig,
    pub train: TrainSection,
    pub parser: TrainSection,
    pub metrics: MetricsSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub videos: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { videos: 1 }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub preset: Option<String>,
    pub long_range: Option<usize>,
    pub short_range: Option<usize>,
    pub variant: Option<Variant>,
    pub classes: Option<usize>,
}

/// Overrides applied on top of a [`TrainConfig`] default.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub deep_supervision_weight: Option<f64>,
    pub seed: Option<u64>,
}

impl TrainSection {
    fn apply(&self, mut base: TrainConfig) -> TrainConfig {
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.epochs {
            base.epochs = v;
        }
        if let Some(v) = self.deep_supervision_weight {
            base.deep_supervision_weight = v;
        }
        if let Some(v) = self.seed {
            base.seed = v;
        }
        base
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub background: usize,
    pub exclude_background: bool,
    pub class_names: Vec<String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let p = &self.pipeline;
        let mut cfg = match &p.preset {
            Some(name) => PipelineConfig::preset(name).map_err(CliError::from_lib)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = p.long_range {
            cfg.long_range = v;
        }
        if let Some(v) = p.short_range {
            cfg.short_range = v;
        }
        if let Some(v) = p.variant {
            cfg.variant = v;
        }
        cfg.classes = p.classes;
        cfg.flow = self.flow;
        cfg.train = self.train.apply(cfg.train);
        cfg.parser = self.parser.apply(cfg.parser);
        cfg.validate().map_err(CliError::from_lib)?;
        Ok(cfg)
    }

    pub fn metrics_options(&self) -> MetricsOptions {
        MetricsOptions {
            background: self.metrics.background,
            average_background: !self.metrics.exclude_background,
        }
    }

    /// Configured class names, padded with `bk`, `c1`, `c2`, ... up to `k`.
    pub fn class_names(&self, k: usize) -> Result<Vec<String>, CliError> {
        let given = &self.metrics.class_names;
        if given.len() > k {
            return Err(CliError::usage(format!(
                "{} class names configured for {k} classes",
                given.len()
            )));
        }
        Ok((0..k)
            .map(|c| {
                given.get(c).cloned().unwrap_or_else(|| {
                    if c == 0 {
                        "bk".to_string()
                    } else {
                        format!("c{c}")
                    }
                })
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.pipeline().unwrap(), PipelineConfig::default());
        assert_eq!(c.synth, SynthConfig::default());
        assert_eq!(c.dataset.videos, 1);
    }

    #[test]
    fn sections_override() {
        let c = RunConfig::parse(
            "[pipeline]\npreset = \"outdoor\"\nvariant = \"l+s\"\n[train]\nepochs = 7\n[parser]\nseed = 3\n[flow]\nsearch_radius = 2\n",
        )
        .unwrap();
        let p = c.pipeline().unwrap();
        assert_eq!((p.long_range, p.short_range), (2, 1));
        assert_eq!(p.variant, Variant::LongShort);
        assert_eq!(p.train.epochs, 7);
        assert_eq!(p.train.learning_rate, TrainConfig::default().learning_rate);
        assert_eq!(p.parser.seed, 3);
        assert_eq!(p.parser.epochs, PipelineConfig::default().parser.epochs);
        assert_eq!(p.flow.search_radius, 2);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = RunConfig::parse("[flow]\nsearch_radius = 2\nbogus = 1\n").unwrap_err();
        assert!(e.contains("line 3"), "{e}");
        let e = RunConfig::parse("[pipeline]\nvariant = \"x+y\"\n").unwrap_err();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn invalid_ranges_rejected() {
        let c = RunConfig::parse("[pipeline]\nlong_range = 1\nshort_range = 1\n").unwrap();
        assert!(c.pipeline().is_err());
    }

    #[test]
    fn class_name_padding() {
        let c = RunConfig::parse("[metrics]\nclass_names = [\"bg\", \"hat\"]\n").unwrap();
        assert_eq!(c.class_names(3).unwrap(), vec!["bg", "hat", "c2"]);
        assert!(c.class_names(1).is_err());
    }
}
