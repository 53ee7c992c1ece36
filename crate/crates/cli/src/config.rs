//! The run configuration: one TOML document with a strict schema.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use priorgan_core::data::{ImbalanceSpec, NormMode, NormScope, DEFAULT_TEST_FRACTION};
use priorgan_core::eval::DEFAULT_RESTARTS;
use priorgan_core::sim_prior::PriorConfig;
use priorgan_core::simi_gan::TrainConfig;
use serde::{Deserialize, Serialize};

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "PRIORGAN_OUTPUT_DIR";

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every random stream is derived from it.
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Prior parameters for `train-gan`; defaults to `prior.params` in the
    /// output directory. Ignored when `gan.uniform_prior` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_params: Option<PathBuf>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub gan: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Number of clusters M; also the width of the categorical code.
    pub classes: usize,
    #[serde(default = "default_mode")]
    pub normalization: NormMode,
    /// How min/max are fitted for tabular and synthetic data. Image data is
    /// always scaled from the fixed pixel range.
    #[serde(default = "default_scope")]
    pub scope: NormScope,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default, skip_serializing_if = "ImbalanceSpec::is_identity")]
    pub imbalance: ImbalanceSpec,
    pub source: Source,
}

fn default_mode() -> NormMode {
    NormMode::Signed
}

fn default_scope() -> NormScope {
    NormScope::PerFeature
}

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Source {
    /// IDX image container plus optional label file.
    Idx {
        images: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<PathBuf>,
    },
    /// Header row, numeric feature columns, optional integer label column.
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label_column: Option<String>,
    },
    /// Gaussian blobs, one per class, drawn from the data stream.
    Synthetic {
        per_class: Vec<usize>,
        dim: usize,
        spread: f64,
        #[serde(default = "unit")]
        noise: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// k-means restarts per clustering.
    pub restarts: usize,
    /// One clustering per seed; the first also drives per-epoch evaluation.
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            seeds: vec![0],
        }
    }
}

impl RunConfig {
    /// Parses a config file. Relative paths resolve against the file's
    /// directory; `PRIORGAN_OUTPUT_DIR`, when set, replaces `output_dir`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config = Self::parse(&text).with_context(|| format!("in config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = if base.as_os_str().is_empty() {
            Path::new(".")
        } else {
            base
        };
        let base = std::path::absolute(base).with_context(|| format!("resolving {}", base.display()))?;
        config.rebase(&base);
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            config.output_dir = lexical_clean(&std::path::absolute(PathBuf::from(dir))?);
        }
        config.validate()?;
        Ok(config)
    }

    /// Parses TOML text; errors name the offending field path.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("{path}: {}", e.into_inner().message())
        })
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| *p = lexical_clean(&base.join(&*p));
        join(&mut self.output_dir);
        if let Some(p) = self.prior_params.as_mut() {
            join(p);
        }
        match &mut self.dataset.source {
            Source::Idx { images, labels } => {
                join(images);
                if let Some(l) = labels.as_mut() {
                    join(l);
                }
            }
            Source::Csv { path, .. } => join(path),
            Source::Synthetic { .. } => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.classes == 0 {
            bail!("dataset.classes must be >= 1");
        }
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            bail!("dataset.test_fraction must lie in (0, 1), got {}", d.test_fraction);
        }
        for (i, f) in d.imbalance.0.iter().enumerate() {
            if f.class >= d.classes {
                bail!(
                    "dataset.imbalance[{i}].class {} is not below dataset.classes = {}",
                    f.class,
                    d.classes
                );
            }
        }
        let exists = |field: &str, p: &Path| -> Result<()> {
            if !p.is_file() {
                bail!("{field}: no such file {}", p.display());
            }
            Ok(())
        };
        match &d.source {
            Source::Idx { images, labels } => {
                exists("dataset.source.images", images)?;
                if let Some(l) = labels {
                    exists("dataset.source.labels", l)?;
                }
            }
            Source::Csv { path, .. } => exists("dataset.source.path", path)?,
            Source::Synthetic {
                per_class,
                dim,
                spread,
                noise,
            } => {
                if per_class.is_empty() || per_class.contains(&0) {
                    bail!("dataset.source.per_class needs positive counts");
                }
                if per_class.len() != 1 && per_class.len() != d.classes {
                    bail!(
                        "dataset.source.per_class has {} entries for {} classes",
                        per_class.len(),
                        d.classes
                    );
                }
                if *dim == 0 || !(*spread > 0.0) || !(*noise > 0.0) {
                    bail!("dataset.source needs dim >= 1, spread > 0 and noise > 0");
                }
            }
        }
        self.prior.validate()?;
        self.gan.validate()?;
        if self.gan.continuous_dim == 0 {
            bail!("gan.continuous_dim must be >= 1");
        }
        if self.eval.restarts == 0 {
            bail!("eval.restarts must be >= 1");
        }
        if self.eval.seeds.is_empty() {
            bail!("eval.seeds must list at least one seed");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes the fully resolved configuration into the output directory.
    pub fn write_resolved(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("creating output directory {}", self.output_dir.display()))?;
        let path = self.output_dir.join(RESOLVED_CONFIG);
        std::fs::write(&path, self.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// Drops `.` and folds `..` into its parent without touching the filesystem.
fn lexical_clean(path: &Path) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => match out.components().next_back() {
                // `..` above the root is the root.
                Some(Component::RootDir | Component::Prefix(_)) => {}
                Some(Component::Normal(_)) => {
                    out.pop();
                }
                _ => out.push(c),
            },
            other => out.push(other),
        }
    }
    out
}
