//! Cross-lingual word-embedding alignment with language-specific rotations
//! and a shared Mahalanobis metric.
//!
//! Every language `i` gets an orthogonal map `U_i` into a common latent
//! space, and all languages share an SPD metric `B` there. Translation from
//! language `s` to `t` is `W_ts = U_t B U_sᵀ`, and retrieval is done with
//! cosine or CSLS similarity on the latent vectors `B^{½} U_iᵀ x`. Parameters
//! are learned by Riemannian conjugate gradient on `O(d)^k × SPD(d)`.

pub mod bootstrap;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod linalg;
pub mod manifolds;
pub mod model;
pub mod optimizer;
pub mod pipelines;
pub mod retrieval;
pub mod synthetic;

pub use error::{Error, Result};
