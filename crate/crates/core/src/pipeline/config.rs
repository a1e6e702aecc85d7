use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::intensity::RefineConfig;

/// Which stages a pairwise registration runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Keypoint affine refined by intensity optimization.
    #[default]
    TwoStage,
    /// Keypoint affine only.
    Stage1Only,
    /// Intensity optimization from identity.
    Stage2Only,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::TwoStage => "two_stage",
            Method::Stage1Only => "stage1_only",
            Method::Stage2Only => "stage2_only",
        }
    }

    pub fn stages(&self) -> StageSelection {
        match self {
            Method::TwoStage => StageSelection {
                stage1: true,
                stage2: true,
            },
            Method::Stage1Only => StageSelection {
                stage1: true,
                stage2: false,
            },
            Method::Stage2Only => StageSelection {
                stage1: false,
                stage2: true,
            },
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage" => Ok(Method::TwoStage),
            "stage1_only" => Ok(Method::Stage1Only),
            "stage2_only" => Ok(Method::Stage2Only),
            other => Err(Error::InvalidValue(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSelection {
    pub stage1: bool,
    pub stage2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub grayscale_weights: [f64; 3],
    /// Make stained tissue bright on a dark background.
    pub invert: bool,
    pub percentile_low: f64,
    pub percentile_high: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            grayscale_weights: [0.299, 0.587, 0.114],
            invert: true,
            percentile_low: 1.0,
            percentile_high: 99.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct OutputToggles {
    pub warped_images: bool,
    pub overlays: bool,
    pub traces: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub working_max_dim: usize,
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub refine: RefineConfig,
    pub method: Method,
    pub outputs: OutputToggles,
    pub seed: u64,
    pub worker_count: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            working_max_dim: 1024,
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::default(),
            refine: RefineConfig::default(),
            method: Method::default(),
            outputs: OutputToggles::default(),
            seed: 0,
            worker_count: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.working_max_dim < 64 {
            return Err(Error::InvalidValue(format!(
                "working_max_dim must be at least 64, got {}",
                self.working_max_dim
            )));
        }
        let p = &self.preprocess;
        if !(0.0 <= p.percentile_low && p.percentile_low < p.percentile_high && p.percentile_high <= 100.0) {
            return Err(Error::InvalidValue(format!(
                "percentile bounds must satisfy 0 <= low < high <= 100, got {} and {}",
                p.percentile_low, p.percentile_high
            )));
        }
        if p.grayscale_weights.iter().any(|w| !(*w >= 0.0)) || p.grayscale_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidValue("grayscale weights must be non-negative and not all zero".into()));
        }
        self.features.validate()?;
        self.refine.validate()?;
        Ok(())
    }

    pub fn from_json_str(text: &str, source_name: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}
