//! TOML run configuration shared by the CLI subcommands.
//!
//! ```toml
//! [train]
//! num_centroids = 100
//!
//! [prune]
//! target_centroids = 3
//! restarts = 10
//!
//! [dist]
//! preset = "uniform(-4,4)"     # or: kind = "uniform", lower = [-4.0], upper = [4.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pruning::{Bernoulli, GaussianMixture, InputDistribution, MixtureComponent, PruneConfig, UniformBox};
use crate::training::TrainConfig;

use super::csv::CsvOptions;
use super::read_to_string;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub train: TrainConfig,
    pub prune: PruneConfig,
    pub data: DataSection,
    pub paths: PathsSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub has_header: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_column: Option<usize>,
    pub binary_to_pm1: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_dim: Option<usize>,
    /// Share of the training file held out for early stopping when no
    /// separate validation file is given.
    pub val_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let csv = CsvOptions::default();
        Self {
            has_header: csv.has_header,
            response_column: csv.response_column,
            binary_to_pm1: csv.binary_to_pm1,
            expected_dim: csv.expected_dim,
            val_fraction: 0.2,
        }
    }
}

impl DataSection {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            has_header: self.has_header,
            response_column: self.response_column,
            binary_to_pm1: self.binary_to_pm1,
            expected_dim: self.expected_dim,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_out: Option<PathBuf>,
}

/// Distribution section: either a `preset` or a `kind` with per-dimension
/// arrays. Arrays of length one are broadcast to every dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// `gaussian_mixture`: per dimension, per component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<Vec<f64>>>,
    /// `uniform`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    /// `bernoulli`: probability of `+1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
}

fn broadcast<T: Clone>(name: &str, v: Option<&Vec<T>>, dim: usize) -> Result<Vec<T>> {
    let v = v.ok_or_else(|| Error::Config(format!("dist.{name} is required for this kind")))?;
    match v.len() {
        1 => Ok(vec![v[0].clone(); dim]),
        n if n == dim => Ok(v.clone()),
        n => Err(Error::dim("distribution parameter array", dim, n)),
    }
}

impl DistSpec {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn to_distribution(&self, dim: usize) -> Result<InputDistribution<f64>> {
        match (&self.preset, &self.kind) {
            (Some(p), None) => parse_preset(p, dim),
            (None, Some(kind)) => self.explicit(kind, dim),
            (Some(_), Some(_)) => Err(Error::Config("dist: give either preset or kind, not both".into())),
            (None, None) => Err(Error::Config("dist: missing preset or kind".into())),
        }
    }

    fn explicit(&self, kind: &str, dim: usize) -> Result<InputDistribution<f64>> {
        match kind {
            "gaussian_mixture" => {
                let w = broadcast("weights", self.weights.as_ref(), dim)?;
                let m = broadcast("means", self.means.as_ref(), dim)?;
                let s = broadcast("variances", self.variances.as_ref(), dim)?;
                let dims = (0..dim)
                    .map(|i| {
                        if w[i].len() != m[i].len() || w[i].len() != s[i].len() {
                            return Err(Error::Config(format!("dist dimension {i}: component arrays differ in length")));
                        }
                        Ok((0..w[i].len())
                            .map(|j| MixtureComponent {
                                weight: w[i][j],
                                mean: m[i][j],
                                variance: s[i][j],
                            })
                            .collect())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(GaussianMixture::new(dims)?.into())
            }
            "uniform" => Ok(UniformBox::new(
                broadcast("lower", self.lower.as_ref(), dim)?,
                broadcast("upper", self.upper.as_ref(), dim)?,
            )?
            .into()),
            "bernoulli" => Ok(Bernoulli::new(broadcast("q", self.q.as_ref(), dim)?)?.into()),
            other => Err(Error::Config(format!(
                "unknown dist.kind {other:?} (expected gaussian_mixture, uniform or bernoulli)"
            ))),
        }
    }
}

fn parse_args(name: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("preset {name}: cannot parse {t:?}")))
        })
        .collect()
}

/// `std_normal`, `normal(mean,var)`, `uniform(a,b)`, `bernoulli` or `bernoulli(q)`.
pub fn parse_preset(preset: &str, dim: usize) -> Result<InputDistribution<f64>> {
    let p = preset.trim();
    let (name, args) = match p.find('(') {
        Some(i) if p.ends_with(')') => (&p[..i], Some(parse_args(p, &p[i + 1..p.len() - 1])?)),
        Some(_) => return Err(Error::Config(format!("malformed preset {p:?}"))),
        None => (p, None),
    };
    let args = args.unwrap_or_default();
    match (name, args.as_slice()) {
        ("std_normal", []) => Ok(GaussianMixture::standard_normal(dim)?.into()),
        ("normal", [m, v]) => Ok(GaussianMixture::normal(dim, *m, *v)?.into()),
        ("uniform", [a, b]) => Ok(UniformBox::cube(dim, *a, *b)?.into()),
        ("bernoulli", []) => Ok(Bernoulli::uniform(dim, 0.5)?.into()),
        ("bernoulli", [q]) => Ok(Bernoulli::uniform(dim, *q)?.into()),
        _ => Err(Error::Config(format!(
            "unknown preset {p:?} (expected std_normal, normal(m,v), uniform(a,b) or bernoulli(q))"
        ))),
    }
}

impl RunConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_protocol() {
        let cfg = RunConfigFile::from_toml("").unwrap();
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.weight_decay, 1e-5);
        assert_eq!(cfg.train.lr_start, 1e-2);
        assert_eq!(cfg.train.lr_floor, 1e-4);
        assert_eq!(cfg.prune.lr_start, 1e-3);
        assert_eq!(cfg.prune.lr_floor, 1e-5);
        assert_eq!(cfg.prune.restarts, 10);
        assert_eq!(cfg.data.val_fraction, 0.2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfigFile::from_toml("[train]\nbatch = 3\n").is_err());
        assert!(RunConfigFile::from_toml("[nope]\n").is_err());
        assert!(RunConfigFile::from_toml("[dist]\npreset = \"std_normal\"\nextra = 1\n").is_err());
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let text = "[train]\nnum_centroids = 7\nseed = 3\n[prune]\ntarget_centroids = 2\n[dist]\nkind = \"uniform\"\nlower = [-4.0]\nupper = [4.0]\n";
        let cfg = RunConfigFile::from_toml(text).unwrap();
        assert_eq!(cfg.train.num_centroids, 7);
        let again = RunConfigFile::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
        let d = cfg.dist.unwrap().to_distribution(3).unwrap();
        assert_eq!(d, UniformBox::cube(3, -4.0, 4.0).unwrap().into());
    }

    #[test]
    fn presets() {
        assert_eq!(parse_preset("std_normal", 2).unwrap(), GaussianMixture::standard_normal(2).unwrap().into());
        assert_eq!(parse_preset("uniform(-4, 4)", 1).unwrap(), UniformBox::cube(1, -4.0, 4.0).unwrap().into());
        assert_eq!(parse_preset("bernoulli(0.5)", 26).unwrap(), Bernoulli::uniform(26, 0.5).unwrap().into());
        assert_eq!(parse_preset("bernoulli", 3).unwrap(), Bernoulli::uniform(3, 0.5).unwrap().into());
        assert!(parse_preset("uniform(1)", 1).is_err());
        assert!(parse_preset("cauchy", 1).is_err());
    }

    #[test]
    fn explicit_mixture() {
        let text = "[dist]\nkind = \"gaussian_mixture\"\nweights = [[0.25, 0.75]]\nmeans = [[-1.0, 1.0]]\nvariances = [[0.5, 2.0]]\n";
        let cfg = RunConfigFile::from_toml(text).unwrap();
        let d = cfg.dist.unwrap().to_distribution(2).unwrap();
        assert_eq!(d.dim(), 2);
        let bad = "[dist]\nkind = \"bernoulli\"\nq = [0.5, 0.5]\n";
        assert!(RunConfigFile::from_toml(bad).unwrap().dist.unwrap().to_distribution(3).is_err());
    }
}
