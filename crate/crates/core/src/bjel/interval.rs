use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::posterior::PosteriorGrid;
use crate::elcore::{profile_log_el, profile_maximizer, WeightedSample};
use crate::error::{Error, Result};

/// The six interval constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Jel,
    Bjel,
    JelD,
    BjelD,
    JelW,
    BjelW,
}

/// Which weights and scale a method uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Normalised design weights, scale `n / deff_H`, no auxiliary constraint.
    Hajek,
    /// Normalised design weights, scale `n / deff_GR`, auxiliary constraint.
    Design,
    /// Normalised calibration weights, scale `m`.
    Calibration,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Jel,
        Method::Bjel,
        Method::JelD,
        Method::BjelD,
        Method::JelW,
        Method::BjelW,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Jel => "jel",
            Method::Bjel => "bjel",
            Method::JelD => "jel_d",
            Method::BjelD => "bjel_d",
            Method::JelW => "jel_w",
            Method::BjelW => "bjel_w",
        }
    }

    /// Row label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Jel => "JEL",
            Method::Bjel => "BJEL",
            Method::JelD => "JEL_d",
            Method::BjelD => "BJEL_d",
            Method::JelW => "JEL_w",
            Method::BjelW => "BJEL_w",
        }
    }

    pub fn is_bayesian(self) -> bool {
        matches!(self, Method::Bjel | Method::BjelD | Method::BjelW)
    }

    pub fn family(self) -> Family {
        match self {
            Method::Jel | Method::Bjel => Family::Hajek,
            Method::JelD | Method::BjelD => Family::Design,
            Method::JelW | Method::BjelW => Family::Calibration,
        }
    }

    /// The frequentist (or Bayesian) counterpart using the same likelihood.
    pub fn counterpart(self) -> Method {
        match self {
            Method::Jel => Method::Bjel,
            Method::Bjel => Method::Jel,
            Method::JelD => Method::BjelD,
            Method::BjelD => Method::JelD,
            Method::JelW => Method::BjelW,
            Method::BjelW => Method::JelW,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub lower: f64,
    pub upper: f64,
    pub method: Option<Method>,
    pub level: f64,
    pub diagnostics: Vec<String>,
}

impl IntervalResult {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.lower <= theta && theta <= self.upper
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = Some(method);
        self
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "level {level} is not in (0, 1)"
        )))
    }
}

/// Equal-tailed credible interval `(t_{(1-level)/2}, t_{(1+level)/2})`.
pub fn credible_interval(pg: &PosteriorGrid, level: f64) -> Result<IntervalResult> {
    check_level(level)?;
    let lower = pg.quantile(0.5 * (1.0 - level));
    let upper = pg.quantile(0.5 * (1.0 + level));
    if !(lower < upper) {
        return Err(Error::DegeneratePosterior {
            feasible: pg.density.iter().filter(|d| **d > 0.0).count(),
        });
    }
    Ok(IntervalResult {
        lower,
        upper,
        method: None,
        level,
        diagnostics: pg.diagnostics.clone(),
    })
}

/// Upper `level` quantile of the chi-square distribution with one degree of freedom.
pub fn chi2_1_quantile(level: f64) -> f64 {
    ChiSquared::new(1.0)
        .expect("one degree of freedom is valid")
        .inverse_cdf(level)
}

/// Inverts a log-likelihood: `{theta : 2 (max_value - loglik(theta)) <= crit}`.
///
/// Each side is bracketed by stepping outwards from `center` in growing
/// multiples of `se` and then bisected to `1e-6 * se`. A `-inf` log-likelihood
/// counts as outside the interval.
pub fn invert_log_likelihood<F>(
    mut loglik: F,
    center: f64,
    max_value: f64,
    se: f64,
    level: f64,
) -> Result<IntervalResult>
where
    F: FnMut(f64) -> f64,
{
    check_level(level)?;
    if !(se > 0.0 && se.is_finite()) {
        return Err(Error::DegenerateVariance("standard error is zero".into()));
    }
    let crit = chi2_1_quantile(level);
    let tol = 1e-6 * se;
    let mut ratio = |theta: f64| -> f64 {
        let l = loglik(theta);
        if l.is_finite() {
            2.0 * (max_value - l)
        } else {
            f64::INFINITY
        }
    };
    let mut diagnostics = Vec::new();
    let mut ends = [0.0; 2];
    for (slot, (side, dir)) in [("lower", -1.0), ("upper", 1.0)].into_iter().enumerate() {
        let mut inside = center;
        let mut step = 0.5 * se;
        let mut outside = None;
        for _ in 0..200 {
            let trial = center + dir * step;
            if ratio(trial) >= crit {
                outside = Some(trial);
                break;
            }
            inside = trial;
            step *= 1.5;
        }
        let Some(mut outside) = outside else {
            return Err(Error::RootNotBracketed { side, edge: inside });
        };
        while (outside - inside).abs() > tol {
            let mid = 0.5 * (inside + outside);
            if ratio(mid) >= crit {
                outside = mid;
            } else {
                inside = mid;
            }
        }
        if !ratio(outside).is_finite() {
            diagnostics.push(Error::RootNotBracketed { side, edge: inside }.to_string());
        }
        ends[slot] = 0.5 * (inside + outside);
    }
    Ok(IntervalResult {
        lower: ends[0],
        upper: ends[1],
        method: None,
        level,
        diagnostics,
    })
}

/// Frequentist interval from the chi-square calibrated EL ratio
/// `2 {l(theta_hat) - l(theta)} <= chi2_1(level)`.
pub fn jel_interval(
    ws: &WeightedSample,
    scale: f64,
    use_aux: bool,
    level: f64,
) -> Result<IntervalResult> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "scale {scale} is not positive"
        )));
    }
    let (center, at_max) = profile_maximizer(ws, use_aux)?;
    let max_value = scale * at_max.log_el;
    let se = (ws.weighted_sq_dev(center) / scale).sqrt();
    if !(se > 1e-12 * center.abs().max(1.0)) {
        return Err(Error::DegenerateVariance(
            "pseudo-values are constant".into(),
        ));
    }
    invert_log_likelihood(
        |theta| profile_log_el(ws, theta, scale, use_aux).value,
        center,
        max_value,
        se,
        level,
    )
}
