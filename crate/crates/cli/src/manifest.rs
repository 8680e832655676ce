//! Run manifests: the full description of one fit, loadable from a
//! versioned TOML file and overridable by command-line flags. One master
//! seed reproduces the whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use logitmc::consensus::SubsampleSize;
use logitmc::error::{Error, Result};
use logitmc::model::Beta;
use logitmc::samplers::{ChainConfig, ProposalSpec, RefreshSchedule, DEFAULT_TARGET_ACCEPTANCE};

pub const MANIFEST_VERSION: u32 = 1;

/// Sampling method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mh,
    ParallelMh,
    Subsample,
    TwoStage,
    Consensus,
    ConsensusTwoStage,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mh => "mh",
            Method::ParallelMh => "parallel-mh",
            Method::Subsample => "subsample",
            Method::TwoStage => "two-stage",
            Method::Consensus => "consensus",
            Method::ConsensusTwoStage => "consensus-two-stage",
        }
    }

    pub fn parse(raw: &str) -> Result<Self> {
        match raw {
            "mh" => Ok(Method::Mh),
            "parallel-mh" => Ok(Method::ParallelMh),
            "subsample" => Ok(Method::Subsample),
            "two-stage" => Ok(Method::TwoStage),
            "consensus" => Ok(Method::Consensus),
            "consensus-two-stage" => Ok(Method::ConsensusTwoStage),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected mh, parallel-mh, subsample, two-stage, \
                 consensus, or consensus-two-stage)"
            ))),
        }
    }

    pub fn needs_partitions(&self) -> bool {
        matches!(self, Method::Consensus | Method::ConsensusTwoStage)
    }

    pub fn needs_subsample(&self) -> bool {
        matches!(
            self,
            Method::Subsample | Method::TwoStage | Method::ConsensusTwoStage
        )
    }
}

/// Input data: a delimited file plus schema, or a synthetic specification.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub file: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub synthetic: Option<SyntheticSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub n: usize,
    pub beta: Vec<f64>,
    pub sparsity: f64,
    pub seed: u64,
}

/// Prior settings. The mean is fixed at zero; a manifest that names one is
/// rejected at configuration time rather than silently ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub variance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            variance: 1000.0,
            mean: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub iterations: usize,
    pub burnin: usize,
    pub thinning: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default = "default_adapt")]
    pub adapt: bool,
    #[serde(default = "default_target")]
    pub target_acceptance: f64,
}

fn default_scale() -> f64 {
    0.01
}

fn default_adapt() -> bool {
    true
}

fn default_target() -> f64 {
    DEFAULT_TARGET_ACCEPTANCE
}

impl Default for ChainSection {
    fn default() -> Self {
        // The small-data preset: 500k iterations, burn-in 1000, thin 20.
        Self {
            iterations: 500_000,
            burnin: 1000,
            thinning: 20,
            seed: 0,
            init: None,
            scale: default_scale(),
            adapt: default_adapt(),
            target_acceptance: default_target(),
        }
    }
}

/// Method parameters: subsample size, partition count, refresh interval.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub a: Option<usize>,
    pub a_frac: Option<f64>,
    pub p: Option<usize>,
    /// 0 = fixed subsample (default); k > 0 redraws it every k iterations.
    #[serde(default)]
    pub refresh: usize,
}

/// Everything one fit needs; serializable so a run is reproducible from the
/// manifest alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default = "default_version")]
    pub version: u32,
    pub method: Method,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub output: Option<PathBuf>,
    /// Abort on unknown categorical levels instead of dropping the row.
    #[serde(default)]
    pub strict_levels: bool,
}

fn default_version() -> u32 {
    MANIFEST_VERSION
}

fn default_workers() -> usize {
    1
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: RunManifest = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("manifest {}: {e}", path.display())))?;
        Ok(manifest)
    }

    /// Method-parameter compatibility and the fixed-mean rule.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        let has_file = self.data.file.is_some();
        let has_synth = self.data.synthetic.is_some();
        if has_file == has_synth {
            return Err(Error::Config(
                "exactly one of data.file and data.synthetic is required".into(),
            ));
        }
        if has_file && self.data.schema.is_none() {
            return Err(Error::Config("data.file requires data.schema".into()));
        }
        if let Some(mean) = &self.prior.mean {
            if mean.iter().any(|v| *v != 0.0) {
                return Err(Error::Config(
                    "the prior mean is fixed at zero; remove prior.mean".into(),
                ));
            }
        }
        if self.method.needs_partitions() {
            if self.params.p.is_none() {
                return Err(Error::Config(format!(
                    "method {} requires params.p",
                    self.method.as_str()
                )));
            }
        } else if self.params.p.is_some() {
            return Err(Error::Config(format!(
                "params.p is only valid for consensus methods, not {}",
                self.method.as_str()
            )));
        }
        if self.method.needs_subsample() {
            match (self.params.a, self.params.a_frac) {
                (Some(_), Some(_)) => {
                    return Err(Error::Config(
                        "give either params.a or params.a_frac, not both".into(),
                    ))
                }
                (None, None) => {
                    return Err(Error::Config(format!(
                        "method {} requires params.a or params.a_frac (no default is \
                         claimed optimal)",
                        self.method.as_str()
                    )))
                }
                _ => {}
            }
        } else if self.params.a.is_some() || self.params.a_frac.is_some() {
            return Err(Error::Config(format!(
                "subsample parameters are only valid for subsample/two-stage methods, not {}",
                self.method.as_str()
            )));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn subsample_size(&self) -> Result<SubsampleSize> {
        match (self.params.a, self.params.a_frac) {
            (Some(a), None) => Ok(SubsampleSize::Count(a)),
            (None, Some(f)) => Ok(SubsampleSize::Fraction(f)),
            _ => Err(Error::Config("subsample size not specified".into())),
        }
    }

    pub fn refresh_schedule(&self) -> RefreshSchedule {
        if self.params.refresh == 0 {
            RefreshSchedule::Fixed
        } else {
            RefreshSchedule::EveryIterations(self.params.refresh)
        }
    }

    pub fn chain_config(&self) -> Result<ChainConfig> {
        let mut config = ChainConfig::new(
            self.chain.iterations,
            self.chain.burnin,
            self.chain.thinning,
            self.chain.seed,
        );
        if let Some(init) = &self.chain.init {
            config.init = Some(Beta::new(init.clone())?);
        }
        Ok(config)
    }

    pub fn proposal(&self) -> Result<ProposalSpec> {
        let spec = ProposalSpec::isotropic(self.chain.scale)?;
        if self.chain.adapt {
            spec.with_adaptation(self.chain.target_acceptance)
        } else {
            Ok(spec)
        }
    }

    /// Effective worker count; parallel-mh defaults to the machine width
    /// when the manifest leaves workers at 1.
    pub fn effective_workers(&self) -> usize {
        if self.method == Method::ParallelMh && self.workers == 1 {
            std::thread::available_parallelism()
                .map(std::num::NonZeroUsize::get)
                .unwrap_or(1)
        } else {
            self.workers
        }
    }
}
