//! Estimation of conditional distributions, conditional densities,
//! conditional CDFs and regression curves from a finite sample of pairs,
//! by averaging the model's conditional objects over the posterior on the
//! parameter. The same average is what the predictive distribution of one
//! more pair induces, so each estimate inherits the predictive's
//! risk-optimality for its matching loss: squared total variation for the
//! distribution, squared `L1` for the density, squared sup-distance for
//! the CDF, and squared error for the regression curve.
//!
//! The crate is organized as:
//!
//! - [`model`]: the pair-model abstraction and validated samples.
//! - [`prior`]: priors over the parameter (gamma, normal, uniform, finite).
//! - [`integrate`]: composite Gauss-Legendre quadrature with panel
//!   refinement and domain transforms.
//! - [`posterior`]: the reweighted parameter distribution after a sample.
//! - [`predictive`]: the numeric engine for the four estimated objects.
//! - [`families`]: built-in families with conjugate closed forms, plus
//!   fully tabulated finite models.
//! - [`oracle`]: exact enumeration on finite models, identity checks and
//!   exact Bayes risks.
//! - [`risk`]: Monte Carlo risk estimation and estimator comparisons.
//! - [`stream`]: deterministic, splittable random substreams.

pub mod families;
pub mod posterior;
pub mod predictive;
pub mod integrate;
pub mod model;
pub mod oracle;
pub mod prior;
pub mod risk;
pub mod stream;

pub use families::{BuiltinFamily, FamilyError};
pub use integrate::{IntegralResult, QuadError, QuadratureSettings};
pub use model::{DomainError, ModelFamily, Observation, SampleBatch, Support};
pub use oracle::{
    build_joint_table, check_identities, check_predictive_marginal_identity, competitor_pool,
    exact_bayes_risk, exact_conditional_expectation, FiniteCurveEstimator, FiniteEstimate,
    IdentityReport, JointTable, OracleError,
};
pub use posterior::{build_posterior, Posterior, PosteriorError};
pub use predictive::{CdfValue, ObsSet, PredictiveError, PredictiveEvaluator};
pub use prior::{PriorError, PriorSpec};
pub use risk::{
    compare, estimate_bayes_risk, estimator_from_name, ComparisonReport, CurveBundle,
    CurveEstimator, LossKind, PairedMargin, RiskError, RiskReport, RiskRequest,
};
