//! Built-in model families: the gamma-exponential chain, the dependent coin
//! pair, the bivariate normal with unknown common mean, and a tabulated
//! finite family for exact enumeration. Each ships its conjugate closed
//! forms next to the generic [`crate::model::ModelFamily`] implementation.

mod bi_normal;
mod coin_pair;
mod finite_table;
mod gamma_exp;

pub use bi_normal::{binormal_density, normal_cdf, BivariateNormalFamily, NormalPosterior, NormalPredictive};
pub use coin_pair::{coin_counts, CoinCounts, CoinPairFamily};
pub use finite_table::{two_point_family, FiniteTableFamily, MAX_GRID, MAX_PARAMS};
pub use gamma_exp::GammaExpFamily;

use std::sync::Arc;

use crate::model::ModelFamily;
use crate::prior::PriorSpec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error("invalid hyperparameter {name} = {value}")]
    BadHyper { name: &'static str, value: f64 },
    #[error("{what} must be 0 or 1, got {value}")]
    NotBinary { what: &'static str, value: f64 },
    #[error("pair {index}: {message}")]
    BadPair { index: usize, message: String },
    #[error("argument {name} = {value} outside the family domain")]
    BadArg { name: &'static str, value: f64 },
    #[error("finite table: {0}")]
    BadTable(String),
    #[error("finite table line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Runtime-selected built-in family together with its canonical prior,
/// the dispatch point for the CLI, the risk harness and the browser demo.
#[derive(Debug, Clone)]
pub enum BuiltinFamily {
    Gamma(GammaExpFamily),
    Coin(CoinPairFamily),
    Normal(BivariateNormalFamily),
    Finite(FiniteTableFamily),
}

impl BuiltinFamily {
    pub fn model(&self) -> &dyn ModelFamily {
        match self {
            BuiltinFamily::Gamma(f) => f,
            BuiltinFamily::Coin(f) => f,
            BuiltinFamily::Normal(f) => f,
            BuiltinFamily::Finite(f) => f,
        }
    }

    /// The prior the family's worked example fixes: `G(1, 1/lambda)` for the
    /// gamma family, uniform on (0,1) for the coin pair, `N(mu, tau^2)` for
    /// the bivariate normal, and the declared weights for a finite table.
    pub fn canonical_prior(&self) -> PriorSpec {
        match self {
            BuiltinFamily::Gamma(f) => f.prior(),
            BuiltinFamily::Coin(f) => f.prior(),
            BuiltinFamily::Normal(f) => f.prior(),
            BuiltinFamily::Finite(f) => f.prior(),
        }
    }

    /// The model behind a shared pointer, for APIs that hold onto it.
    pub fn model_arc(&self) -> Arc<dyn ModelFamily> {
        match self {
            BuiltinFamily::Gamma(f) => Arc::new(f.clone()),
            BuiltinFamily::Coin(f) => Arc::new(*f),
            BuiltinFamily::Normal(f) => Arc::new(f.clone()),
            BuiltinFamily::Finite(f) => Arc::new(f.clone()),
        }
    }

    pub fn name(&self) -> &'static str {
        self.model().name()
    }

    /// Whether the family has closed-form Bayes estimators.
    pub fn has_closed_forms(&self) -> bool {
        !matches!(self, BuiltinFamily::Finite(_))
    }
}
