//! Run configuration files (JSON). Every default is materialized when a
//! config is resolved, and the resolved form is what lands in the run manifest.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faithfulness::{
    BaselineKind, Granularity, DEFAULT_BLUR_KERNEL, DEFAULT_BLUR_SIGMA, DEFAULT_STEP_FRACTION,
};
use crate::image::NormalizationSpec;
use crate::model::{
    ConstantModel, Endpoint, ModelAdapter, RegionMeanModel, RemoteScorer, DEFAULT_BATCH_SIZE,
};
use crate::road::{default_fractions, ImputationConfig};
use crate::saliency::{OcclusionConfig, RiseConfig, DEFAULT_BANDWIDTH, DEFAULT_EVAL_POINTS};

/// Environment variable naming the external scorer endpoint.
pub const SCORER_ENV: &str = "SJ_SCORER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    RegionMean {
        region: Vec<(usize, usize)>,
        #[serde(default = "default_classes")]
        n_classes: usize,
    },
    Constant {
        value: f32,
        #[serde(default = "default_classes")]
        n_classes: usize,
    },
    /// External scorer; `endpoint` falls back to `SJ_SCORER`.
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
    },
}

fn default_classes() -> usize {
    2
}

impl ModelConfig {
    pub fn build(&self) -> Result<Arc<dyn ModelAdapter>> {
        Ok(match self {
            ModelConfig::RegionMean { region, n_classes } => {
                Arc::new(RegionMeanModel::new(region.clone(), *n_classes)?)
            }
            ModelConfig::Constant { value, n_classes } => {
                Arc::new(ConstantModel::with_classes(*value, *n_classes)?)
            }
            ModelConfig::Remote { endpoint } => {
                let ep = match endpoint {
                    Some(e) => e.clone(),
                    None => std::env::var(SCORER_ENV).map_err(|_| {
                        Error::Config(format!("remote model needs an endpoint or {SCORER_ENV}"))
                    })?,
                };
                Arc::new(RemoteScorer::connect(&ep.parse::<Endpoint>()?)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassPolicy {
    /// Explain the annotated label, whatever the model predicts.
    #[default]
    GroundTruth,
    /// Explain the model's top-scoring class on the clean image.
    Predicted,
}

/// Baseline named in a config; noise seeds are derived per sample and repeat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineSpec {
    DatasetMean,
    Blur {
        #[serde(default = "default_blur_kernel")]
        kernel_size: usize,
        #[serde(default = "default_blur_sigma")]
        sigma: f32,
    },
    UniformNoise,
}

fn default_blur_kernel() -> usize {
    DEFAULT_BLUR_KERNEL
}

fn default_blur_sigma() -> f32 {
    DEFAULT_BLUR_SIGMA
}

impl BaselineSpec {
    pub fn to_kind(self, noise_seed: u64) -> BaselineKind {
        match self {
            BaselineSpec::DatasetMean => BaselineKind::DatasetMean,
            BaselineSpec::Blur { kernel_size, sigma } => BaselineKind::Blur { kernel_size, sigma },
            BaselineSpec::UniformNoise => BaselineKind::UniformNoise { seed: noise_seed },
        }
    }

    pub fn label(&self) -> &'static str {
        self.to_kind(0).label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveMetricConfig {
    pub baselines: Vec<BaselineSpec>,
    pub granularities: Vec<Granularity>,
    pub step_fraction: f32,
    /// Uniform-noise curves are repeated this many times and AUCs averaged.
    pub noise_repeats: usize,
}

impl Default for CurveMetricConfig {
    fn default() -> Self {
        Self {
            baselines: vec![BaselineSpec::DatasetMean],
            granularities: vec![Granularity::Pixel],
            step_fraction: DEFAULT_STEP_FRACTION,
            noise_repeats: 5,
        }
    }
}

impl CurveMetricConfig {
    /// Every (baseline, granularity) pair, baselines outermost.
    pub fn grid(&self) -> Vec<(BaselineSpec, Granularity)> {
        self.baselines
            .iter()
            .flat_map(|b| self.granularities.iter().map(move |g| (*b, *g)))
            .collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.baselines.is_empty() || self.granularities.is_empty() {
            return Err(Error::Config(format!("{name}: needs at least one baseline and granularity")));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::Config(format!("{name}: step_fraction must be in (0, 1]")));
        }
        if self.noise_repeats == 0 {
            return Err(Error::Config(format!("{name}: noise_repeats must be >= 1")));
        }
        for g in &self.granularities {
            if matches!(g, Granularity::Region { radius: 0 }) {
                return Err(Error::Config(format!("{name}: region radius must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Label of one curve configuration, e.g. `blur-region4`.
pub fn curve_config_label(baseline: &BaselineSpec, granularity: &Granularity) -> String {
    format!("{}-{}", baseline.label(), granularity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadMetricConfig {
    pub fractions: Vec<f32>,
    pub imputation: ImputationConfig,
}

impl Default for RoadMetricConfig {
    fn default() -> Self {
        Self {
            fractions: default_fractions(),
            imputation: ImputationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AverageDropConfig {
    /// Extra binarized variants, one per percentile.
    pub binarize_percentiles: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointingConfig {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsityConfig {
    pub bandwidth: f32,
    pub eval_points: usize,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        Self {
            bandwidth: DEFAULT_BANDWIDTH,
            eval_points: DEFAULT_EVAL_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub insertion: Option<CurveMetricConfig>,
    pub deletion: Option<CurveMetricConfig>,
    pub road: Option<RoadMetricConfig>,
    pub average_drop: Option<AverageDropConfig>,
    pub pointing_game: Option<PointingConfig>,
    pub sparsity: Option<SparsityConfig>,
}

impl MetricsConfig {
    pub fn is_empty(&self) -> bool {
        self.insertion.is_none()
            && self.deletion.is_none()
            && self.road.is_none()
            && self.average_drop.is_none()
            && self.pointing_game.is_none()
            && self.sparsity.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarsenConfig {
    pub kernel_size: usize,
    pub sigma: f32,
}

impl Default for CoarsenConfig {
    fn default() -> Self {
        Self {
            kernel_size: DEFAULT_BLUR_KERNEL,
            sigma: DEFAULT_BLUR_SIGMA,
        }
    }
}

/// Config for `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub dataset: PathBuf,
    pub model: ModelConfig,
    /// Explanation methods; maps are read from `<image_id>.<method>.smap`.
    pub methods: Vec<String>,
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub class_policy: ClassPolicy,
    #[serde(default)]
    pub normalization: NormalizationSpec,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Also evaluate blurred copies of each method's maps as `<method>+coarse`.
    #[serde(default)]
    pub coarsen: Option<CoarsenConfig>,
    /// Thread count; execution detail, not recorded with the results.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

/// Config for `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub dataset: PathBuf,
    pub model: ModelConfig,
    #[serde(default)]
    pub rise: Option<RiseConfig>,
    #[serde(default)]
    pub occlusion: Option<OcclusionConfig>,
    #[serde(default)]
    pub class_policy: ClassPolicy,
    #[serde(default)]
    pub normalization: NormalizationSpec,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Resolves a path relative to the directory holding the config file.
fn relative_to(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn check_common(batch_size: usize, workers: Option<usize>, norm: &NormalizationSpec) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if workers == Some(0) {
        return Err(Error::Config("workers must be >= 1".into()));
    }
    NormalizationSpec::new(norm.mean, norm.std).map_err(|e| Error::Config(e.to_string()))?;
    Ok(())
}

impl EvaluateConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_json(path)?;
        cfg.dataset = relative_to(path, &cfg.dataset);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics selected".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no explanation methods listed".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if m.is_empty() || m.contains(['/', '\\', '.']) {
                return Err(Error::Config(format!("invalid method name {m:?}")));
            }
            if !seen.insert(m) {
                return Err(Error::Config(format!("method {m:?} listed twice")));
            }
        }
        check_common(self.batch_size, self.workers, &self.normalization)?;
        if let Some(c) = &self.metrics.insertion {
            c.validate("insertion")?;
        }
        if let Some(c) = &self.metrics.deletion {
            c.validate("deletion")?;
        }
        if let Some(r) = &self.metrics.road {
            if r.fractions.is_empty()
                || r.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0))
                || r.fractions.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(Error::Config("road: fractions must be ascending within (0, 1)".into()));
            }
            r.imputation.validate().map_err(|e| Error::Config(format!("road: {e}")))?;
        }
        if let Some(a) = &self.metrics.average_drop {
            if a.binarize_percentiles.iter().any(|p| !(0.0..100.0).contains(p)) {
                return Err(Error::Config("average_drop: percentiles must be in [0, 100)".into()));
            }
        }
        if let Some(s) = &self.metrics.sparsity {
            if !(s.bandwidth > 0.0) || s.eval_points == 0 {
                return Err(Error::Config("sparsity: bandwidth and eval_points must be positive".into()));
            }
        }
        if let Some(c) = &self.coarsen {
            crate::image::gaussian_kernel(c.kernel_size, c.sigma)
                .map_err(|e| Error::Config(format!("coarsen: {e}")))?;
        }
        Ok(())
    }
}

impl GenerateConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_json(path)?;
        cfg.dataset = relative_to(path, &cfg.dataset);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rise.is_none() && self.occlusion.is_none() {
            return Err(Error::Config("no generation method selected".into()));
        }
        check_common(self.batch_size, self.workers, &self.normalization)?;
        if let Some(r) = &self.rise {
            r.validate().map_err(|e| Error::Config(format!("rise: {e}")))?;
        }
        if let Some(o) = &self.occlusion {
            o.validate().map_err(|e| Error::Config(format!("occlusion: {e}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> Result<EvaluateConfig> {
        let cfg: EvaluateConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn zero_metrics_is_config_error() {
        let err = parse(
            r#"{"dataset": "d.json", "model": {"kind": "constant", "value": 0.5},
                "methods": ["rise"], "metrics": {}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn defaults_are_materialized() {
        let cfg = parse(
            r#"{"dataset": "d.json", "model": {"kind": "region_mean", "region": [[0, 0]]},
                "methods": ["rise"],
                "metrics": {"insertion": {}, "road": {}}}"#,
        )
        .unwrap();
        let ins = cfg.metrics.insertion.as_ref().unwrap();
        assert_eq!(ins.step_fraction, 0.01);
        assert_eq!(ins.noise_repeats, 5);
        assert_eq!(cfg.metrics.road.as_ref().unwrap().fractions.len(), 9);
        assert_eq!(cfg.batch_size, 32);
        let json = serde_json::to_value(&cfg).unwrap();
        assert_eq!(json["metrics"]["road"]["imputation"]["direct"], 2.0);
        assert_eq!(json["class_policy"], "ground_truth");
        assert!(json.get("workers").is_none());
    }

    #[test]
    fn grid_combinatorics() {
        let cfg = parse(
            r#"{"dataset": "d.json", "model": {"kind": "constant", "value": 0.5},
                "methods": ["rise"],
                "metrics": {"insertion": {
                    "baselines": [{"kind": "dataset_mean"}, {"kind": "blur"}, {"kind": "uniform_noise"}],
                    "granularities": [{"kind": "pixel"}, {"kind": "region", "radius": 4}]}}}"#,
        )
        .unwrap();
        let grid = cfg.metrics.insertion.unwrap().grid();
        assert_eq!(grid.len(), 6);
        let labels: Vec<String> = grid.iter().map(|(b, g)| curve_config_label(b, g)).collect();
        assert_eq!(labels[0], "mean-pixel");
        assert_eq!(labels[3], "blur-region4");
        assert_eq!(labels[5], "uniform-region4");
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(parse(
            r#"{"dataset": "d", "model": {"kind": "constant", "value": 0.5},
                "methods": ["rise"], "metrics": {"insertion": {"stepfraction": 0.1}}}"#
        )
        .is_err());
        assert!(parse(
            r#"{"dataset": "d", "model": {"kind": "constant", "value": 0.5},
                "methods": ["a.b"], "metrics": {"pointing_game": {}}}"#
        )
        .is_err());
        assert!(parse(
            r#"{"dataset": "d", "model": {"kind": "constant", "value": 0.5},
                "methods": ["rise"], "metrics": {"road": {"fractions": [0.5, 0.2]}}}"#
        )
        .is_err());
    }
}
