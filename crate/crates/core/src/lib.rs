//! Semi-supervised linear regression from a small matched sample and a large
//! unmatched sample.
//!
//! The model is `Y = b' X + e` with noise density known up to the
//! exponential-power family `f(t) = c_a exp(-d^-a |t|^a)`. Estimation combines
//! the matched pairs with the unmatched covariate and response blocks through
//! the empirical log-likelihood
//!
//! ```text
//! l(b) = 1/(n+m) [ sum_j log( 1/n sum_i f(Yu_j - b' Xu_i) )
//!                + sum_k log f(Y_k - b' X_k) ]
//! ```
//!
//! whose maximizer is the SSLEMLE. The crate provides:
//!
//! - [`noise`]: the exponential-power noise family (density, derivatives,
//!   CDF, sampling, Fisher-type integral),
//! - [`data`]: sample containers, CSV ingestion, standardization, and the
//!   matched/unmatched subsampling protocol,
//! - [`likelihood`]: the combined log-likelihood, its score and Hessian,
//!   intercept and unknown-scale variants, the existence radius, and the
//!   population criterion,
//! - [`optimize`]: quasi-Newton and Nelder-Mead maximizers plus a grid oracle,
//! - [`estimators`]: SSLEMLE, matched MLE, OLSE, DLSE, and the logistic
//!   SSLEMLE,
//! - [`asymptotics`]: asymptotic covariances, confidence ellipsoids and the
//!   statistical gain of adding the unmatched sample,
//! - [`montecarlo`]: the simulation harness estimating empirical gains,
//! - [`dataapp`]: the golden-sample protocol for real data sets.

pub mod asymptotics;
pub mod data;
pub mod dataapp;
pub mod error;
pub mod estimators;
pub mod likelihood;
pub mod model;
pub mod montecarlo;
pub mod noise;
pub mod numeric;
pub mod optimize;

pub use error::{Error, Result};
