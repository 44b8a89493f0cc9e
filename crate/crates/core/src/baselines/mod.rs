//! Comparison maps: logistic and Bayesian Hilbert maps.

pub mod bhm;
pub mod hm;

pub use bhm::{bhm_predict, fit_bhm, fit_bhm_features, BhmModel, BhmPrior};
pub(crate) use hm::{sigmoid, softplus};
pub use hm::{fit_hm, fit_hm_features, HmComposite, HmModel};
