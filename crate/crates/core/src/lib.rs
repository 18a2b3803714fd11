//! Explanations of linear predictions that are personalized to a user
//! summary: choose a few features that carry the most information about the
//! prediction beyond what the summary already reveals.
//!
//! The population problem is solved from Gaussian moments ([`search`]); the
//! sample problem is a sparse regression of the prediction on the summary and
//! the features ([`xml`]).

// `!(x > 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod mi;
pub mod model;
pub mod regression;
pub mod search;
pub mod subsets;
pub mod xml;

pub use error::{Error, ErrorKind, Result};
pub use model::{ExplanationSupport, GaussianModel, JointMoments, MomentSource, SampleSet};
pub use xml::{xml_explain, xml_explain_population, xml_fit, Method};
