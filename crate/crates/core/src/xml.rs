//! Sample-based explanation selection: fit the prediction on the user summary
//! plus at most `s` features and return the support of the feature
//! coefficients. A population variant solves the same problem exactly from
//! the Gaussian model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExplanationSupport, GaussianModel, SampleSet};
use crate::regression::{self, L0Strategy, PathPoint, SolverConfig, SparseFit};
use crate::search;

/// Largest `n` for which [`Method::Auto`] picks exhaustive L0 search.
pub const AUTO_EXHAUSTIVE_LIMIT: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Auto,
    L0Exhaustive,
    Omp,
    LassoPath,
}

impl Method {
    /// Resolves `Auto` for a problem with `n` features.
    pub fn resolve(self, n: usize) -> Method {
        match self {
            Method::Auto if n <= AUTO_EXHAUSTIVE_LIMIT => Method::L0Exhaustive,
            Method::Auto => Method::LassoPath,
            other => other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Auto => "auto",
            Method::L0Exhaustive => "l0_exhaustive",
            Method::Omp => "omp",
            Method::LassoPath => "lasso_path",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Method::Auto),
            "l0_exhaustive" => Ok(Method::L0Exhaustive),
            "omp" => Ok(Method::Omp),
            "lasso_path" => Ok(Method::LassoPath),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected auto, l0_exhaustive, omp or lasso_path)"
            ))),
        }
    }
}

/// Fitted explanation with the solver output it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    /// Method actually run (never `Auto`).
    pub method: Method,
    pub fit: SparseFit,
    /// λ path, for `LassoPath` only.
    pub path: Option<Vec<PathPoint>>,
}

impl Explanation {
    pub fn support(&self) -> &ExplanationSupport {
        &self.fit.support
    }
}

pub fn xml_fit(
    samples: &SampleSet,
    s: usize,
    method: Method,
    config: &SolverConfig,
) -> Result<Explanation> {
    if s > samples.n() {
        return Err(Error::InvalidArgument(format!(
            "sparsity {s} exceeds dimension {}",
            samples.n()
        )));
    }
    let method = method.resolve(samples.n());
    let (fit, path) = match method {
        Method::L0Exhaustive => (
            regression::solve_l0(samples, s, L0Strategy::Exhaustive, config)?,
            None,
        ),
        Method::Omp => (
            regression::solve_l0(samples, s, L0Strategy::Omp, config)?,
            None,
        ),
        Method::LassoPath => {
            let path = regression::lasso_path(samples, s, config)?;
            (path.fit, Some(path.points))
        }
        Method::Auto => unreachable!("resolved above"),
    };
    debug_assert!(fit.support.len() <= s);
    Ok(Explanation { method, fit, path })
}

/// Support of the fitted feature coefficients, `|support| ≤ s`.
pub fn xml_explain(samples: &SampleSet, s: usize, method: Method) -> Result<ExplanationSupport> {
    xml_fit(samples, s, method, &SolverConfig::default()).map(|e| e.fit.support)
}

/// Exact population optimum from the model's analytic moments.
pub fn xml_explain_population(model: &GaussianModel, s: usize) -> Result<ExplanationSupport> {
    search::optimal_support_exhaustive(&model.analytic_moments(), s).map(|r| r.support)
}
