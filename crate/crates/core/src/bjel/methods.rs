use super::interval::{credible_interval, jel_interval, Family, IntervalResult, Method};
use super::posterior::{build_posterior, PosteriorGrid};
use crate::design::{
    design_effect, normalize_weights, regression_coeff, scale_factor_w, DeffVariant,
};
use crate::elcore::WeightedSample;
use crate::error::{Error, Result};

/// Pseudo-values of one sample together with everything the survey
/// variants need.
#[derive(Debug, Clone, Copy)]
pub struct SurveySample<'a> {
    pub values: &'a [f64],
    /// Basic design weights `d_i` (not normalised).
    pub design_weights: &'a [f64],
    /// First-order inclusion probabilities; `None` drops the finite
    /// population correction from variance estimates.
    pub incl_probs: Option<&'a [f64]>,
    /// Auxiliary rows and their known population mean.
    pub aux: Option<(&'a [Vec<f64>], &'a [f64])>,
    /// Calibration weights `w_i`; the design weights are used when absent.
    pub calibration_weights: Option<&'a [f64]>,
}

/// Weighted sample, likelihood scale and constraint choice for one family.
#[derive(Debug, Clone)]
pub struct LikelihoodSetup {
    pub ws: WeightedSample,
    pub scale: f64,
    pub use_aux: bool,
}

impl LikelihoodSetup {
    /// Equal weights with scale `n`.
    pub fn iid(values: &[f64]) -> Result<Self> {
        let ws = WeightedSample::uniform(values.to_vec())?;
        let scale = ws.n() as f64;
        Ok(LikelihoodSetup {
            ws,
            scale,
            use_aux: false,
        })
    }

    /// Design weights without auxiliary information and the effective sample
    /// size `n / deff_H`. Equal weights with unknown inclusion probabilities
    /// give `deff_H = 1`, i.e. [`LikelihoodSetup::iid`].
    pub fn hajek(s: &SurveySample<'_>) -> Result<Self> {
        Self::design(&SurveySample { aux: None, ..*s })
    }

    /// Design weights with the auxiliary constraint and `n / deff_GR`; falls
    /// back to [`LikelihoodSetup::hajek`] when no auxiliary data is given.
    pub fn design(s: &SurveySample<'_>) -> Result<Self> {
        let ws = design_sample(s)?;
        let (scale, use_aux) = match ws.aux() {
            Some(_) => {
                let b = regression_coeff(&ws)?;
                (
                    design_effect(&ws, s.incl_probs, DeffVariant::Greg(&b))?.n_star,
                    true,
                )
            }
            None => (
                design_effect(&ws, s.incl_probs, DeffVariant::Hajek)?.n_star,
                false,
            ),
        };
        Ok(LikelihoodSetup { ws, scale, use_aux })
    }

    /// Calibration weights with the scale factor `m = S_v^2 / var(V_GR)`.
    pub fn calibration(s: &SurveySample<'_>) -> Result<Self> {
        let dws = design_sample(s)?;
        let b = match dws.aux() {
            Some(_) => Some(regression_coeff(&dws)?),
            None => None,
        };
        let scale = scale_factor_w(&dws, s.incl_probs, b.as_deref())?;
        let w = normalize_weights(s.calibration_weights.unwrap_or(s.design_weights))?;
        Ok(LikelihoodSetup {
            ws: WeightedSample::new(s.values.to_vec(), w)?,
            scale,
            use_aux: false,
        })
    }

    pub fn for_family(family: Family, s: &SurveySample<'_>) -> Result<Self> {
        match family {
            Family::Hajek => Self::hajek(s),
            Family::Design => Self::design(s),
            Family::Calibration => Self::calibration(s),
        }
    }

    pub fn posterior(&self) -> Result<PosteriorGrid> {
        build_posterior(&self.ws, self.scale, self.use_aux)
    }

    /// Credible interval for Bayesian methods, chi-square calibrated ratio
    /// interval otherwise.
    pub fn interval(&self, method: Method, level: f64) -> Result<IntervalResult> {
        let res = if method.is_bayesian() {
            credible_interval(&self.posterior()?, level)?
        } else {
            jel_interval(&self.ws, self.scale, self.use_aux, level)?
        };
        Ok(res.with_method(method))
    }

    /// Profile maximiser, the point estimate of this family.
    pub fn estimate(&self) -> Result<f64> {
        Ok(crate::elcore::profile_maximizer(&self.ws, self.use_aux)?.0)
    }
}

fn design_sample(s: &SurveySample<'_>) -> Result<WeightedSample> {
    if s.design_weights.len() != s.values.len() {
        return Err(Error::InvalidInput(
            "design weights and values differ in length".into(),
        ));
    }
    let ws = WeightedSample::new(s.values.to_vec(), normalize_weights(s.design_weights)?)?;
    match s.aux {
        Some((rows, mean)) if !mean.is_empty() => ws.with_aux(rows.to_vec(), mean.to_vec()),
        _ => Ok(ws),
    }
}

/// Interval for a single method.
pub fn interval_for(method: Method, s: &SurveySample<'_>, level: f64) -> Result<IntervalResult> {
    LikelihoodSetup::for_family(method.family(), s)?.interval(method, level)
}
