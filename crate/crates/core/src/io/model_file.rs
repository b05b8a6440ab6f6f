//! JSON model documents.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::RbfNetwork;

use super::{read_to_string, write_string};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub command: String,
    /// SHA-256 of the effective run configuration.
    pub config_hash: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

/// On-disk form of an [`RbfNetwork`]. Floats are written in shortest
/// round-trip form and parsed with correct rounding, so a save/load cycle
/// reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub dim: usize,
    pub num_centroids: usize,
    pub log_gamma: f64,
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn from_network(net: &RbfNetwork<f64>, provenance: Provenance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            dim: net.dim(),
            num_centroids: net.num_centroids(),
            log_gamma: net.log_gamma(),
            alpha: net.alpha(),
            beta: net.beta().to_vec(),
            theta: net.theta().iter_rows().map(<[f64]>::to_vec).collect(),
            provenance,
        }
    }

    pub fn to_network(&self) -> Result<RbfNetwork<f64>> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.beta.len() != self.num_centroids {
            return Err(Error::Schema(format!(
                "beta has {} entries but num_centroids is {}",
                self.beta.len(),
                self.num_centroids
            )));
        }
        if self.theta.len() != self.num_centroids {
            return Err(Error::Schema(format!(
                "theta has {} rows but num_centroids is {}",
                self.theta.len(),
                self.num_centroids
            )));
        }
        if let Some(row) = self.theta.iter().find(|r| r.len() != self.dim) {
            return Err(Error::Schema(format!("theta row of length {} but dim is {}", row.len(), self.dim)));
        }
        RbfNetwork::new(self.log_gamma, self.alpha, self.beta.clone(), Matrix::from_rows(&self.theta, self.dim)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("model file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?)
    }
}

pub fn load_network(path: &Path) -> Result<RbfNetwork<f64>> {
    ModelFile::load(path)?.to_network()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(lg in -5.0f64..5.0, a in any::<f64>().prop_filter("finite", |v| v.is_finite()),
                                   vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6)) {
            let net = RbfNetwork::new(lg, a, vals[..2].to_vec(), Matrix::from_vec(2, 2, vals[2..].to_vec()).unwrap()).unwrap();
            let file = ModelFile::from_network(&net, Provenance::default());
            let back = ModelFile::from_json(&file.to_json()).unwrap().to_network().unwrap();
            prop_assert_eq!(net.to_param_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            back.to_param_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn schema_checks() {
        let net = RbfNetwork::new(0.0, 1.0, vec![1.0], Matrix::from_vec(1, 2, vec![0.5, 0.25]).unwrap()).unwrap();
        let mut file = ModelFile::from_network(&net, Provenance::default());
        file.schema_version = 9;
        assert!(matches!(file.to_network(), Err(Error::Schema(_))));
        let mut file = ModelFile::from_network(&net, Provenance::default());
        file.theta[0].pop();
        assert!(matches!(file.to_network(), Err(Error::Schema(_))));
        let text = ModelFile::from_network(&net, Provenance::default()).to_json().replace("\"alpha\"", "\"bogus\": 1, \"alpha\"");
        assert!(ModelFile::from_json(&text).is_err());
    }
}
