//! Sampling designs, survey weights and design effects.
//!
//! Two fixed-size designs are supported: simple random sampling without
//! replacement and Rao-Sampford πps sampling, whose first-order inclusion
//! probabilities are exactly `n z_i / sum(z)`.
//!
//! Design-based variances use the Hájek approximation for high-entropy
//! fixed-size designs, which needs only first-order inclusion probabilities:
//!
//! ```text
//! var(sum d~_i e_i) ~= sum c_i (d~_i e_i - A)^2,   c_i = (1 - pi_i) n / (n - 1),
//! A = sum c_i d~_i e_i / sum c_i
//! ```
//!
//! with `e_i` the Hájek (or GREG) residuals. When inclusion probabilities are
//! unknown the finite-population factor `1 - pi_i` is dropped.

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elcore::WeightedSample;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, weighted_outer};

/// Restarts allowed before a Rao-Sampford draw is abandoned.
pub const REJECTION_BUDGET: usize = 1_000_000;

/// Largest `n* / n` ratio reported by [`design_effect`].
const MAX_EFFECTIVE_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Srswor,
    RaoSampford,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub population_size: usize,
    pub sample_size: usize,
    /// Size measures `z_i` for πps sampling; `None` means SRSWOR.
    pub size_measures: Option<Vec<f64>>,
}

impl DesignSpec {
    pub fn srswor(population_size: usize, sample_size: usize) -> Self {
        DesignSpec {
            population_size,
            sample_size,
            size_measures: None,
        }
    }

    pub fn rao_sampford(sample_size: usize, size_measures: Vec<f64>) -> Self {
        DesignSpec {
            population_size: size_measures.len(),
            sample_size,
            size_measures: Some(size_measures),
        }
    }

    pub fn kind(&self) -> DesignKind {
        if self.size_measures.is_some() {
            DesignKind::RaoSampford
        } else {
            DesignKind::Srswor
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (big_n, n) = (self.population_size, self.sample_size);
        if n == 0 || n >= big_n {
            return Err(Error::InvalidInput(format!(
                "sample size must satisfy 0 < n < N (n = {n}, N = {big_n})"
            )));
        }
        if let Some(z) = &self.size_measures {
            if z.len() != big_n {
                return Err(Error::InvalidInput(format!(
                    "{} size measures for a population of {big_n}",
                    z.len()
                )));
            }
            if let Some((i, &v)) = z
                .iter()
                .enumerate()
                .find(|(_, v)| !(v.is_finite() && **v > 0.0))
            {
                return Err(Error::NonPositiveWeight { index: i, value: v });
            }
            let total: f64 = z.iter().sum();
            if let Some((unit, scaled)) = z
                .iter()
                .map(|v| n as f64 * v / total)
                .enumerate()
                .find(|(_, s)| *s >= 1.0)
            {
                return Err(Error::SizeMeasureTooLarge { unit, scaled });
            }
        }
        Ok(())
    }

    /// First-order inclusion probabilities for every population unit.
    pub fn inclusion_probabilities(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = self.sample_size as f64;
        Ok(match &self.size_measures {
            None => vec![n / self.population_size as f64; self.population_size],
            Some(z) => {
                let total: f64 = z.iter().sum();
                z.iter().map(|v| n * v / total).collect()
            }
        })
    }
}

/// Sampled unit indices (ascending) with their inclusion probabilities and
/// design weights `d_i = 1 / pi_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDraw {
    pub indices: Vec<usize>,
    pub incl_probs: Vec<f64>,
    pub design_weights: Vec<f64>,
}

impl SampleDraw {
    fn from_indices(mut indices: Vec<usize>, pi: &[f64]) -> Self {
        indices.sort_unstable();
        let incl_probs: Vec<f64> = indices.iter().map(|&i| pi[i]).collect();
        let design_weights = incl_probs.iter().map(|p| 1.0 / p).collect();
        SampleDraw {
            indices,
            incl_probs,
            design_weights,
        }
    }

    pub fn n(&self) -> usize {
        self.indices.len()
    }

    /// Normalised design weights `d_i / sum d_j`.
    pub fn norm_weights(&self) -> Vec<f64> {
        normalize_weights(&self.design_weights).expect("design weights are positive")
    }
}

/// Draws a sample with a generator seeded from `seed`.
pub fn draw_sample(spec: &DesignSpec, seed: u64) -> Result<SampleDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_sample_with(spec, &mut rng)
}

/// Draws a sample from a caller-supplied generator.
pub fn draw_sample_with<R: Rng + ?Sized>(spec: &DesignSpec, rng: &mut R) -> Result<SampleDraw> {
    let pi = spec.inclusion_probabilities()?;
    let indices = match &spec.size_measures {
        None => rand::seq::index::sample(rng, spec.population_size, spec.sample_size).into_vec(),
        Some(z) => rao_sampford_indices(z, &pi, spec.sample_size, rng)?,
    };
    Ok(SampleDraw::from_indices(indices, &pi))
}

/// Sampford's rejective procedure: the first unit is drawn with probability
/// `p_i = z_i / sum z`, the remaining `n - 1` with replacement proportional to
/// `p_i / (1 - n p_i)`; any duplicate restarts the whole draw.
fn rao_sampford_indices<R: Rng + ?Sized>(
    z: &[f64],
    pi: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let first = WeightedIndex::new(z).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let rest = WeightedIndex::new(pi.iter().map(|p| p / (1.0 - p)))
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut taken = vec![false; z.len()];
    let mut chosen = Vec::with_capacity(n);
    for _ in 0..REJECTION_BUDGET {
        for &i in &chosen {
            taken[i] = false;
        }
        chosen.clear();
        let i = first.sample(rng);
        taken[i] = true;
        chosen.push(i);
        while chosen.len() < n {
            let j = rest.sample(rng);
            if taken[j] {
                break;
            }
            taken[j] = true;
            chosen.push(j);
        }
        if chosen.len() == n {
            return Ok(chosen);
        }
    }
    Err(Error::RejectionBudgetExceeded {
        budget: REJECTION_BUDGET,
    })
}

/// Scales positive weights to sum to one.
pub fn normalize_weights(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::InvalidInput("no weights".into()));
    }
    if let Some((i, &v)) = raw
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::NonPositiveWeight { index: i, value: v });
    }
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // absorb the last ulp of rounding so the weights pass strict sum checks
    let drift = w.iter().sum::<f64>() - 1.0;
    let heaviest = w
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    w[heaviest] -= drift;
    Ok(w)
}

/// Chi-square (GREG) calibrated weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub weights: Vec<f64>,
    /// Units whose calibrated weight is not positive.
    pub negative: Vec<usize>,
}

/// `w_i = d_i (1 + (X - X_HT)' T^{-1} x_i)` with `T = sum d_i x_i x_i'`, so
/// that `sum w_i x_i = X` exactly.
pub fn calibrate_weights(d: &[f64], x: &[Vec<f64>], target_total: &[f64]) -> Result<Calibration> {
    let k = target_total.len();
    if d.len() != x.len() || x.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidInput(
            "calibration inputs differ in dimension".into(),
        ));
    }
    if let Some((i, &v)) = d
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::NonPositiveWeight { index: i, value: v });
    }
    let t = weighted_outer(
        k,
        d.iter()
            .zip(x)
            .map(|(&w, r)| (w, r.as_slice(), r.as_slice())),
    );
    let mut gap = DVector::from_column_slice(target_total);
    for (w, r) in d.iter().zip(x) {
        for c in 0..k {
            gap[c] -= w * r[c];
        }
    }
    let g = solve_spd(t, &gap, 1e-12).ok_or(Error::SingularCalibration)?;
    let weights: Vec<f64> = d
        .iter()
        .zip(x)
        .map(|(w, r)| w * (1.0 + r.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>()))
        .collect();
    let negative = weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w <= 0.0)
        .map(|(i, _)| i)
        .collect();
    Ok(Calibration { weights, negative })
}

/// Design-weighted regression coefficient of the values on the auxiliary
/// vectors, both centred at their Hájek means.
pub fn regression_coeff(ws: &WeightedSample) -> Result<Vec<f64>> {
    let aux = ws
        .aux()
        .ok_or_else(|| Error::InvalidInput("regression needs auxiliary data".into()))?;
    let k = aux.dim();
    let w = ws.norm_weights();
    let vbar = ws.weighted_mean();
    let mut xbar = vec![0.0; k];
    for (wi, r) in w.iter().zip(&aux.rows) {
        for c in 0..k {
            xbar[c] += wi * r[c];
        }
    }
    let centred: Vec<Vec<f64>> = aux
        .rows
        .iter()
        .map(|r| r.iter().zip(&xbar).map(|(a, b)| a - b).collect())
        .collect();
    let sxx = weighted_outer(
        k,
        w.iter()
            .zip(&centred)
            .map(|(&wi, r)| (wi, r.as_slice(), r.as_slice())),
    );
    let mut sxv = DVector::zeros(k);
    for ((wi, r), v) in w.iter().zip(&centred).zip(ws.values()) {
        for c in 0..k {
            sxv[c] += wi * r[c] * (v - vbar);
        }
    }
    let b = solve_spd(sxx, &sxv, 1e-12)
        .ok_or_else(|| Error::SingularSystem("auxiliary covariance matrix is singular".into()))?;
    Ok(b.iter().copied().collect())
}

/// GREG residuals `r_i = v_i - vbar_d - B'(x_i - xbar_d)`; they have zero
/// Hájek mean.
pub fn greg_residuals(ws: &WeightedSample, b: &[f64]) -> Result<Vec<f64>> {
    let aux = ws
        .aux()
        .ok_or_else(|| Error::InvalidInput("GREG residuals need auxiliary data".into()))?;
    if b.len() != aux.dim() {
        return Err(Error::InvalidInput("coefficient dimension mismatch".into()));
    }
    let w = ws.norm_weights();
    let mut xbar = vec![0.0; aux.dim()];
    for (wi, r) in w.iter().zip(&aux.rows) {
        for (acc, x) in xbar.iter_mut().zip(r) {
            *acc += wi * x;
        }
    }
    let vbar = ws.weighted_mean();
    Ok(ws
        .values()
        .iter()
        .zip(&aux.rows)
        .map(|(v, r)| {
            let fit: f64 = r
                .iter()
                .zip(&xbar)
                .zip(b)
                .map(|((x, m), bc)| bc * (x - m))
                .sum();
            v - vbar - fit
        })
        .collect())
}

/// GREG point estimate `V_H + B'(xbar - xbar_H)`.
pub fn greg_estimate(ws: &WeightedSample, b: &[f64]) -> Result<f64> {
    let aux = ws
        .aux()
        .ok_or_else(|| Error::InvalidInput("GREG estimate needs auxiliary data".into()))?;
    let w = ws.norm_weights();
    let mut adj = 0.0;
    for c in 0..aux.dim() {
        let xh: f64 = w.iter().zip(&aux.rows).map(|(wi, r)| wi * r[c]).sum();
        adj += b[c] * (aux.mean[c] - xh);
    }
    Ok(ws.weighted_mean() + adj)
}

/// Hájek-approximation variance of `sum d~_i e_i` for residuals `e`.
pub fn hajek_variance(norm_weights: &[f64], incl_probs: Option<&[f64]>, e: &[f64]) -> Result<f64> {
    let n = norm_weights.len();
    if n < 2 || e.len() != n || incl_probs.is_some_and(|p| p.len() != n) {
        return Err(Error::InvalidInput(
            "variance inputs differ in length".into(),
        ));
    }
    let corr = n as f64 / (n as f64 - 1.0);
    let c: Vec<f64> = match incl_probs {
        Some(pi) => pi.iter().map(|p| (1.0 - p).max(0.0) * corr).collect(),
        None => vec![corr; n],
    };
    let csum: f64 = c.iter().sum();
    if !(csum > 0.0) {
        return Err(Error::DegenerateVariance(
            "every unit was sampled with certainty".into(),
        ));
    }
    let z: Vec<f64> = norm_weights.iter().zip(e).map(|(w, r)| w * r).collect();
    let a = c.iter().zip(&z).map(|(ci, zi)| ci * zi).sum::<f64>() / csum;
    Ok(c.iter().zip(&z).map(|(ci, zi)| ci * (zi - a).powi(2)).sum())
}

/// `n/(n-1) sum d~_i (e_i - ebar)^2`, the Hájek-type estimator of a
/// population variance.
pub fn hajek_population_variance(norm_weights: &[f64], e: &[f64]) -> f64 {
    let n = norm_weights.len() as f64;
    let mean: f64 = norm_weights.iter().zip(e).map(|(w, v)| w * v).sum();
    let ss: f64 = norm_weights
        .iter()
        .zip(e)
        .map(|(w, v)| w * (v - mean).powi(2))
        .sum();
    ss * n / (n - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeffVariant<'a> {
    /// Hájek estimator of the mean.
    Hajek,
    /// GREG estimator with the given regression coefficients.
    Greg(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEffect {
    pub deff: f64,
    /// Estimated design variance of the point estimator.
    pub variance_vp: f64,
    /// `S^2 / n` with `S^2` the Hájek-type variance estimate.
    pub srs_variance: f64,
    /// Effective sample size `n / deff`.
    pub n_star: f64,
    /// Set when `n_star` had to be clamped to `(0, 10 n]`.
    pub clamped: bool,
}

/// Design effect of the Hájek or GREG estimator and the effective sample
/// size `n* = n / deff`. `ws` carries the normalised design weights (and the
/// auxiliary data for the GREG variant).
pub fn design_effect(
    ws: &WeightedSample,
    incl_probs: Option<&[f64]>,
    variant: DeffVariant<'_>,
) -> Result<DesignEffect> {
    let n = ws.n();
    if n < 2 {
        return Err(Error::SampleTooSmall { n, order: 1 });
    }
    let w = ws.norm_weights();
    let e: Vec<f64> = match variant {
        DeffVariant::Hajek => {
            let m = ws.weighted_mean();
            ws.values().iter().map(|v| v - m).collect()
        }
        DeffVariant::Greg(b) => greg_residuals(ws, b)?,
    };
    let s2 = hajek_population_variance(w, &e);
    let scale = ws
        .values()
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()))
        .max(1.0);
    if !(s2 > 1e-24 * scale * scale) {
        return Err(Error::DegenerateVariance(
            "residual variance is zero".into(),
        ));
    }
    let variance_vp = hajek_variance(w, incl_probs, &e)?;
    let srs_variance = s2 / n as f64;
    let deff = variance_vp / srs_variance;
    let max_star = MAX_EFFECTIVE_RATIO * n as f64;
    let (n_star, clamped) = if deff > 0.0 && n as f64 / deff <= max_star {
        (n as f64 / deff, false)
    } else {
        (max_star, true)
    };
    Ok(DesignEffect {
        deff: n as f64 / n_star,
        variance_vp,
        srs_variance,
        n_star,
        clamped,
    })
}

/// Scale factor `m = S_v^2 / var(V_GR)` for the calibration-weighted
/// likelihood. `ws` carries the design weights and auxiliary data; `b` the
/// regression coefficients. Without auxiliary data the Hájek variance is used.
pub fn scale_factor_w(
    ws: &WeightedSample,
    incl_probs: Option<&[f64]>,
    b: Option<&[f64]>,
) -> Result<f64> {
    let w = ws.norm_weights();
    let m = ws.weighted_mean();
    let centred: Vec<f64> = ws.values().iter().map(|v| v - m).collect();
    let sv2 = hajek_population_variance(w, &centred);
    let scale = ws
        .values()
        .iter()
        .fold(0.0, |a: f64, v| a.max(v.abs()))
        .max(1.0);
    if !(sv2 > 1e-24 * scale * scale) {
        return Err(Error::DegenerateVariance("value variance is zero".into()));
    }
    let resid = match (b, ws.aux()) {
        (Some(b), Some(_)) => greg_residuals(ws, b)?,
        _ => centred,
    };
    let var_gr = hajek_variance(w, incl_probs, &resid)?;
    if !(var_gr > 0.0) {
        return Err(Error::DegenerateVariance("GREG variance is zero".into()));
    }
    Ok((sv2 / var_gr).min(MAX_EFFECTIVE_RATIO * ws.n() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_weights(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(normalize_weights(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert!(matches!(
            normalize_weights(&[1.0, 0.0]),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
        assert!(normalize_weights(&[]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(DesignSpec::srswor(10, 10).validate().is_err());
        assert!(DesignSpec::srswor(10, 0).validate().is_err());
        assert!(matches!(
            DesignSpec::rao_sampford(2, vec![1.0, 1.0, 5.0]).validate(),
            Err(Error::SizeMeasureTooLarge { unit: 2, .. })
        ));
        assert!(DesignSpec::rao_sampford(2, vec![1.0, -1.0, 5.0])
            .validate()
            .is_err());
        let pi = DesignSpec::rao_sampford(2, vec![1.0, 1.0, 1.0, 1.0, 2.0])
            .inclusion_probabilities()
            .unwrap();
        let expected = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
        for (a, b) in pi.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn draws_are_reproducible() {
        let spec = DesignSpec::rao_sampford(3, (1..=12).map(f64::from).collect());
        let a = draw_sample(&spec, 99).unwrap();
        let b = draw_sample(&spec, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 3);
        assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
        for (p, d) in a.incl_probs.iter().zip(&a.design_weights) {
            assert_eq!(*d, 1.0 / p);
        }
        let s = draw_sample(&DesignSpec::srswor(50, 7), 3).unwrap();
        assert_eq!(s, draw_sample(&DesignSpec::srswor(50, 7), 3).unwrap());
        assert!(s.incl_probs.iter().all(|&p| p == 7.0 / 50.0));
    }

    fn inclusion_frequencies(spec: &DesignSpec, reps: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = vec![0usize; spec.population_size];
        for _ in 0..reps {
            for i in draw_sample_with(spec, &mut rng).unwrap().indices {
                counts[i] += 1;
            }
        }
        counts.iter().map(|&c| c as f64 / reps as f64).collect()
    }

    #[test]
    fn equal_sizes_behave_like_srs() {
        let spec = DesignSpec::rao_sampford(2, vec![1.0; 4]);
        let reps = 100_000;
        for f in inclusion_frequencies(&spec, reps) {
            let se = (0.25f64 / reps as f64).sqrt();
            assert!((f - 0.5).abs() <= 3.0 * se, "frequency {f}");
        }
    }

    #[test]
    fn unequal_sizes_hit_exact_probabilities() {
        let spec = DesignSpec::rao_sampford(2, vec![1.0, 1.0, 1.0, 1.0, 2.0]);
        let pi = spec.inclusion_probabilities().unwrap();
        let reps = 100_000;
        for (f, p) in inclusion_frequencies(&spec, reps).iter().zip(pi) {
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((f - p).abs() <= 3.0 * se, "frequency {f} vs {p}");
        }
    }

    #[test]
    fn calibration_examples() {
        let cal = calibrate_weights(&[2.0, 2.0], &[vec![1.0], vec![2.0]], &[7.0]).unwrap();
        assert!((cal.weights[0] - 2.2).abs() < 1e-12);
        assert!((cal.weights[1] - 2.4).abs() < 1e-12);
        assert!(cal.negative.is_empty());

        let d = [3.0, 1.5, 2.0];
        let x = vec![vec![1.0, 0.2], vec![1.0, 1.4], vec![1.0, 3.0]];
        let total = [6.5, 5.0];
        let ht = [
            d.iter().sum::<f64>(),
            d.iter().zip(&x).map(|(a, r)| a * r[1]).sum(),
        ];
        let same = calibrate_weights(&d, &x, &ht).unwrap();
        for (a, b) in same.weights.iter().zip(d) {
            assert!((a - b).abs() < 1e-12);
        }
        let cal = calibrate_weights(&d, &x, &total).unwrap();
        for c in 0..2 {
            let got: f64 = cal.weights.iter().zip(&x).map(|(w, r)| w * r[c]).sum();
            assert!((got - total[c]).abs() <= 1e-8 * total[c].abs());
        }

        let dup = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        assert_eq!(
            calibrate_weights(&d, &dup, &[6.0, 6.0]),
            Err(Error::SingularCalibration)
        );
    }

    #[test]
    fn calibration_flags_negative_weights() {
        let cal = calibrate_weights(
            &[1.0, 1.0, 1.0],
            &[vec![1.0], vec![2.0], vec![10.0]],
            &[-5.0],
        )
        .unwrap();
        assert!(!cal.negative.is_empty());
    }

    fn aux_sample(v: Vec<f64>, x: &[f64], w: Vec<f64>) -> WeightedSample {
        WeightedSample::new(v, w)
            .unwrap()
            .with_aux(x.iter().map(|&a| vec![a]).collect(), vec![0.0])
            .unwrap()
    }

    #[test]
    fn regression_exact_fit_and_constant() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let ws = aux_sample(x.iter().map(|a| 3.0 - 2.0 * a).collect(), &x, vec![0.25; 4]);
        let b = regression_coeff(&ws).unwrap();
        assert!((b[0] + 2.0).abs() < 1e-12);
        assert!(greg_residuals(&ws, &b)
            .unwrap()
            .iter()
            .all(|r| r.abs() < 1e-12));

        let ws = aux_sample(vec![4.0; 4], &x, vec![0.25; 4]);
        assert!(regression_coeff(&ws).unwrap()[0].abs() < 1e-14);

        let ws = aux_sample(vec![1.0, 2.0, 3.0, 4.0], &[1.0; 4], vec![0.25; 4]);
        assert!(matches!(
            regression_coeff(&ws),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn regression_matches_weighted_least_squares() {
        // Normal equations of WLS with an intercept, solved by Cramer's rule.
        let v = [1.3, -0.4, 2.9, 0.7, 1.8];
        let x = [[0.2, 1.0], [1.5, -0.3], [2.2, 0.8], [0.9, 0.1], [3.1, -1.2]];
        let w = normalize_weights(&[1.0, 2.5, 0.7, 1.9, 3.3]).unwrap();
        let ws = WeightedSample::new(v.to_vec(), w.clone())
            .unwrap()
            .with_aux(x.iter().map(|r| r.to_vec()).collect(), vec![0.0, 0.0])
            .unwrap();
        let b = regression_coeff(&ws).unwrap();

        let design: Vec<[f64; 3]> = x.iter().map(|r| [1.0, r[0], r[1]]).collect();
        let mut a = [[0.0; 3]; 3];
        let mut rhs = [0.0; 3];
        for ((row, wi), vi) in design.iter().zip(&w).zip(&v) {
            for r in 0..3 {
                rhs[r] += wi * row[r] * vi;
                for c in 0..3 {
                    a[r][c] += wi * row[r] * row[c];
                }
            }
        }
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let det = det3(a);
        for (col, got) in [1usize, 2].iter().zip(&b) {
            let mut m = a;
            for r in 0..3 {
                m[r][*col] = rhs[r];
            }
            let coef = det3(m) / det;
            assert!((coef - got).abs() < 1e-10, "{coef} vs {got}");
        }
    }

    #[test]
    fn srswor_deff_is_one_minus_f() {
        let spec = DesignSpec::srswor(1000, 100);
        let draw = draw_sample(&spec, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = (0..100).map(|_| rng.random::<f64>() * 10.0).collect();
        let ws = WeightedSample::new(v, draw.norm_weights()).unwrap();
        let de = design_effect(&ws, Some(&draw.incl_probs), DeffVariant::Hajek).unwrap();
        assert!((de.deff - 0.9).abs() < 0.05);
        assert!((de.n_star - 100.0 / de.deff).abs() < 1e-9);

        // equal-size Rao-Sampford has identical inclusion probabilities
        let rs = draw_sample(&DesignSpec::rao_sampford(100, vec![2.0; 1000]), 5).unwrap();
        let ws2 = WeightedSample::new(ws.values().to_vec(), rs.norm_weights()).unwrap();
        let de2 = design_effect(&ws2, Some(&rs.incl_probs), DeffVariant::Hajek).unwrap();
        assert!((de2.deff - de.deff).abs() < 0.05);
    }

    #[test]
    fn unknown_inclusion_probabilities_with_equal_weights_give_unit_deff() {
        let ws = WeightedSample::uniform(vec![1.0, 4.0, 2.0, 8.0, 5.0]).unwrap();
        let de = design_effect(&ws, None, DeffVariant::Hajek).unwrap();
        assert!((de.deff - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_values_are_degenerate() {
        let ws = WeightedSample::uniform(vec![3.0; 6]).unwrap();
        assert!(matches!(
            design_effect(&ws, None, DeffVariant::Hajek),
            Err(Error::DegenerateVariance(_))
        ));
        assert!(matches!(
            scale_factor_w(&ws, None, None),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn weight_scaling_invariance() {
        let d = [3.0, 7.5, 2.25, 11.0, 4.0, 6.5];
        let pi: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
        let v = vec![0.4, 2.2, -1.0, 3.3, 1.1, 0.0];
        let x: Vec<Vec<f64>> = [1.0, 2.5, 0.5, 3.0, 1.2, 0.9]
            .iter()
            .map(|&a| vec![a])
            .collect();
        let build = |scale: f64| {
            let raw: Vec<f64> = d.iter().map(|x| x * scale).collect();
            WeightedSample::new(v.clone(), normalize_weights(&raw).unwrap())
                .unwrap()
                .with_aux(x.clone(), vec![1.5])
                .unwrap()
        };
        let (a, b) = (build(1.0), build(37.0));
        for (p, q) in a.norm_weights().iter().zip(b.norm_weights()) {
            assert!((p - q).abs() < 1e-15);
        }
        let (ba, bb) = (regression_coeff(&a).unwrap(), regression_coeff(&b).unwrap());
        assert!((ba[0] - bb[0]).abs() < 1e-12);
        let da = design_effect(&a, Some(&pi), DeffVariant::Hajek).unwrap();
        let db = design_effect(&b, Some(&pi), DeffVariant::Hajek).unwrap();
        assert!((da.deff - db.deff).abs() < 1e-12);
        assert!((da.n_star - db.n_star).abs() < 1e-12 * da.n_star);
    }
}
