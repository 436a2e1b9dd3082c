//! JSON descriptions of base measures.
//!
//! ```json
//! {"kind": "gaussian", "mean": [0, 1], "cov": [[1, 0], [0, 2]]}
//! {"kind": "mixture", "components": [{"weight": 0.5, "mean": [-1], "cov": [[1]]}, ...]}
//! {"kind": "potential-ref", "name": "quartic", "dim": 1, "param": 0.1}
//! ```
//!
//! Covariances are row-major, either nested (`[[..], [..]]`) or flat.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

use super::{BuiltinPotential, GaussianMeasure, GaussianMixture, GenericPotential, TargetMeasure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, dim: usize) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Nested(rows) => linalg::matrix_from_rows(rows),
            MatrixSpec::Flat(v) => {
                if v.len() != dim * dim {
                    return Err(Error::InvalidArgument(format!(
                        "flat covariance has {} entries, expected {}",
                        v.len(),
                        dim * dim
                    )));
                }
                Ok(DMatrix::from_row_slice(dim, dim, v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: MatrixSpec,
    },
    Mixture {
        components: Vec<ComponentSpec>,
    },
    PotentialRef {
        name: String,
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        param: Option<f64>,
    },
}

impl TargetSpec {
    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Gaussian { mean, .. } => mean.len(),
            TargetSpec::Mixture { components } => components.first().map_or(0, |c| c.mean.len()),
            TargetSpec::PotentialRef { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<TargetMeasure> {
        match self {
            TargetSpec::Gaussian { mean, cov } => Ok(gaussian(mean, cov)?.into()),
            TargetSpec::Mixture { components } => {
                let comps = components
                    .iter()
                    .map(|c| Ok((c.weight, gaussian(&c.mean, &c.cov)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(GaussianMixture::new(comps)?.into())
            }
            TargetSpec::PotentialRef { name, dim, param } => {
                Ok(GenericPotential::builtin(BuiltinPotential::by_name(name, *dim, *param)?).into())
            }
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn gaussian(mean: &[f64], cov: &MatrixSpec) -> Result<GaussianMeasure> {
    let d = mean.len();
    GaussianMeasure::new(DVector::from_column_slice(mean), cov.to_matrix(d)?)
}
