//! Chain spec files: `{"n": 3, "P": [[...], ...], "labels": [...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{TransitionMatrix, DEFAULT_ROW_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub n: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl ChainSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ChainSpec =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("chain spec: {e}")))?;
        spec.check_shape()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn check_shape(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Parse("field `n` must be at least 1".into()));
        }
        if self.p.len() != self.n {
            return Err(Error::Parse(format!(
                "field `P` has {} rows, expected n = {}",
                self.p.len(),
                self.n
            )));
        }
        for (i, row) in self.p.iter().enumerate() {
            if row.len() != self.n {
                return Err(Error::Parse(format!(
                    "row {} of `P` has {} entries, expected {}",
                    i + 1,
                    row.len(),
                    self.n
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.n {
                return Err(Error::Parse(format!(
                    "field `labels` has {} entries, expected {}",
                    labels.len(),
                    self.n
                )));
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> Result<TransitionMatrix> {
        TransitionMatrix::with_tolerance(self.p.clone(), DEFAULT_ROW_TOLERANCE)
    }

    pub fn from_matrix(p: &TransitionMatrix) -> Self {
        Self {
            n: p.n(),
            p: p.rows(),
            labels: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain spec serializes")
    }
}
