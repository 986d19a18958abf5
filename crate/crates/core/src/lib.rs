//! Classification as a sequential decision process.
//!
//! Two families of classifiers are built on a shared deterministic MDP core:
//! datum-wise sparse classifiers over tabular data ([`dwsc`]) and
//! sentence-by-sentence text classifiers ([`text`]). Policies are linear in a
//! block-structured feature map and trained by approximate policy iteration
//! with Monte Carlo rollouts ([`learner`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

pub mod baselines;
pub mod data;
pub mod dwsc;
pub mod error;
pub mod eval;
pub mod learner;
mod linalg;
pub mod mdp;
pub mod model_io;
pub mod scalar;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
pub use mdp::{ActionId, Featurized, LinearPolicy, Mdp};
pub use scalar::Scalar;

pub type Policy = mdp::LinearPolicy<f64>;
pub type Dataset = data::TabularDataset<f64>;
pub type DwscClassifier = dwsc::DwscModel<f64>;
pub type TextClassifier = text::TextModel;
pub type L1Model = baselines::L1LinearModel<f64>;
