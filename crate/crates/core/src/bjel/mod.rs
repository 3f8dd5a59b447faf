//! Flat-prior jackknife pseudo-EL posteriors and their frequentist
//! counterparts.
//!
//! Three posteriors share one construction, differing in weights and scale:
//!
//! | methods       | weights       | scale            | constraint      |
//! |---------------|---------------|------------------|-----------------|
//! | JEL, BJEL     | `d_i / sum d` | `n / deff_H`     | mean            |
//! | JEL_d, BJEL_d | `d_i / sum d` | `n / deff_GR`    | mean + aux mean |
//! | JEL_w, BJEL_w | `w_i / sum w` | `S_v^2 / var_GR` | mean            |
//!
//! With equal weights and unknown inclusion probabilities the first row is
//! the plain iid posterior `exp{n * mean log p_i}`.
//!
//! Credible intervals are equal-tailed posterior quantiles; the JEL
//! comparators invert the chi-square calibrated likelihood ratio.

mod interval;
mod methods;
mod posterior;

pub use interval::{
    chi2_1_quantile, credible_interval, invert_log_likelihood, jel_interval, Family,
    IntervalResult, Method,
};
pub use methods::{interval_for, LikelihoodSetup, SurveySample};
pub use posterior::{
    build_posterior, build_posterior_with, monahan_boos_h, posterior_quantile, PosteriorGrid,
    GRID_POINTS,
};
