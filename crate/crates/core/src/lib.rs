//! Bayesian Markov-switching vector autoregressions with conjugate
//! Normal-Inverse-Wishart priors and Dirichlet transition rows.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ddm;
pub mod distributions;
pub mod error;
pub mod estimation;
pub mod filter;
pub mod importance;
pub mod linalg;
pub mod model;
pub mod posterior;
pub mod priors;
pub mod regimes;
pub mod sampler;

pub use error::{Error, Result};
pub use linalg::SpdMatrix;
pub use model::{ModelDims, MsVarModel, Observations};
pub use regimes::{DirichletPriorSet, RegimeVector};
pub use sampler::{GibbsSettings, RegimeUpdate, TransitionMatrix};
