//! Pipeline configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survstack::baselines::{CoxConfig, LogisticConfig};
use survstack::gam::GamConfig;
use survstack::metrics::{AucAggregation, CensoringSource, DEFAULT_GRID_POINTS};
use survstack::model::ModelChoice;
use survstack::prediction::{Sampling, DEFAULT_N_MC};
use survstack::select::ForestConfig;
use survstack::stacking::DEFAULT_GAMMA;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Truth sidecar written by `synth`; enables oracle columns in reports.
    pub truth: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: None,
            out_dir: PathBuf::from("out"),
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    /// Columns to one-hot encode even if they look numeric.
    pub categorical: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackingSection {
    pub gamma: f64,
}

impl Default for StackingSection {
    fn default() -> Self {
        Self { gamma: DEFAULT_GAMMA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelChoice,
    pub raw_hazard: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    #[default]
    None,
    Controlburn,
    LassoLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub method: SelectionMethod,
    pub k: usize,
    /// Above this many expected stacked rows, select on fixed-horizon labels instead.
    pub row_budget: f64,
    /// Horizon of the fixed-horizon labels; the median training event time if unset.
    pub horizon: Option<f64>,
    pub bisection_steps: usize,
    pub forest: ForestConfig,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            method: SelectionMethod::None,
            k: 10,
            row_budget: 5e6,
            horizon: None,
            bisection_steps: 40,
            forest: ForestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictionSection {
    pub n_mc: usize,
    pub sampling: Sampling,
}

impl Default for PredictionSection {
    fn default() -> Self {
        Self {
            n_mc: DEFAULT_N_MC,
            sampling: Sampling::Stratified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub grid_points: usize,
    /// Explicit evaluation grid; empty means the default percentile grid.
    pub grid: Vec<f64>,
    pub censoring: CensoringSource,
    pub aggregation: AucAggregation,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            grid: Vec::new(),
            censoring: CensoringSource::Train,
            aggregation: AucAggregation::EventWeighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub time: f64,
    pub bins: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { time: 5.0, bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage derives its own seed from it.
    pub seed: u64,
    pub paths: Paths,
    pub split: SplitSection,
    pub preprocess: PreprocessSection,
    pub stacking: StackingSection,
    pub model: ModelSection,
    pub gam: GamConfig,
    pub logistic: LogisticConfig,
    pub cox: CoxConfig,
    pub selection: SelectionSection,
    pub prediction: PredictionSection,
    pub metrics: MetricsSection,
    pub compare: CompareSection,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Seed of a named stage, derived from the master seed.
    pub fn stage_seed(&self, stage: Stage) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stage as u64)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Split = 1,
    Stacking = 2,
    Model = 3,
    Selection = 4,
    Prediction = 5,
}

/// Default configuration with every setting spelled out.
pub const DEFAULT_CONFIG: &str = r#"# survstack pipeline configuration.
# Every key is optional; the values below are the defaults.

# Master seed. Split, stacking, boosting, forest and Monte Carlo seeds are
# derived from it; the per-section `seed` keys are overridden.
seed = 0

[paths]
# Input table: feature columns plus `time` and `event` (0/1).
# data = "data.csv"
out_dir = "out"
# Truth sidecar from `survstack synth`; adds oracle columns to reports.
# truth = "truth.json"

[split]
# Stratified by event indicator.
test_fraction = 0.2

[preprocess]
# Columns forced to one-hot encoding; text columns are detected automatically.
categorical = []

[stacking]
# Probability of keeping each at-risk negative row. Tool default.
gamma = 0.01

[model]
# gam | logistic | cox. Cox is fit on the unstacked data.
kind = "gam"
# true: integrate the classifier probability itself as the hazard.
# false: convert it to a rate with the event-time calibration first.
raw_hazard = false

[gam]
learning_rate = 0.05      # tool default
max_rounds = 5000         # common EBM setting
n_interactions = 20       # common EBM setting
max_bins = 64             # common EBM setting
validation_fraction = 0.15
early_stop_patience = 50
early_stop_tolerance = 1e-7
max_cuts = 2              # cuts per feature per boosting round
interaction_sample_cap = 50000
bags = 1                  # >1 averages fits over independent hold-out draws
seed = 0

[logistic]
l2 = 1.0
max_iter = 100
tol = 1e-10

[cox]
ridge = 1e-6              # guards against separation
max_iter = 100
tol = 1e-9
divergence_bound = 30.0

[selection]
# none | controlburn | lasso_linear
method = "none"
k = 10
# Above this many expected stacked rows, select on fixed-horizon labels.
row_budget = 5000000.0
# horizon = 5.0           # default: median training event time
bisection_steps = 40

[selection.forest]
n_trees = 96
max_depth = 3
bag_fraction = 0.5
learning_rate = 0.3
batch = 8
max_bins = 32
min_leaf = 5
seed = 0

[prediction]
n_mc = 64                 # Monte Carlo samples per grid interval; tool default
sampling = "stratified"   # stratified | uniform

[metrics]
grid_points = 21          # between the 10th and 90th test event-time percentiles
grid = []                 # explicit grid overrides the default
censoring = "train"       # train | test: where the censoring weights come from
aggregation = "event_weighted"   # event_weighted | plain

[compare]
time = 5.0
bins = 20
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_parses_to_defaults() {
        let parsed = PipelineConfig::parse(DEFAULT_CONFIG).unwrap();
        assert_eq!(parsed, PipelineConfig::default());
    }

    #[test]
    fn round_trip_lossless() {
        let mut cfg = PipelineConfig {
            seed: 17,
            ..PipelineConfig::default()
        };
        cfg.paths.data = Some("x.csv".into());
        cfg.selection.horizon = Some(3.25);
        cfg.metrics.grid = vec![0.1, 1.0 / 3.0, 2.0];
        cfg.gam.learning_rate = 0.1 + 0.2;
        let back = PipelineConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::parse("gama = 0.1").is_err());
        assert!(PipelineConfig::parse("[stacking]\ngama = 0.1").is_err());
    }
}
