//! Panel mixed logit estimation by maximum simulated likelihood.

pub mod dataset;
pub mod modelspec;
pub mod qmc;
pub mod simlik;
pub mod designsim;
pub mod mslestim;
pub mod postfit;
