//! Finite-population coverage studies.
//!
//! A population follows `y = beta0 + beta1 x + sigma e` with `x ~ Exp(1)`
//! shifted by a positive constant and `e ~ N(0, 1)`; `sigma` is solved so the
//! realised correlation of `y` and `x` hits the target. The population is
//! generated once and held fixed; each replicate draws a sample (Rao-Sampford
//! with sizes `z = x`, or SRSWOR), computes pseudo-values and the requested
//! intervals, and records whether the finite-population parameter is covered.
//!
//! Replicate `r` uses a generator seeded with `seed + r`, so results do not
//! depend on how replicates are scheduled across threads.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bjel::{Family, IntervalResult, LikelihoodSetup, Method, SurveySample};
use crate::design::{calibrate_weights, draw_sample_with, DesignKind, DesignSpec};
use crate::error::{Error, Result};
use crate::ustat::{jackknife_pseudovalues, u_statistic, Kernel};

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub population_size: usize,
    pub beta0: f64,
    pub beta1: f64,
    /// Constant added to every `x_i`.
    pub x_shift: f64,
    pub target_rho: f64,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            population_size: 1000,
            beta0: 1.0,
            beta1: 1.0,
            x_shift: 1.0,
            target_rho: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub spec: PopulationSpec,
    pub sigma: f64,
    pub realized_rho: f64,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

fn moments(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
        sab += (x - ma) * (y - mb);
    }
    (saa, sbb, sab)
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (saa, sbb, sab) = moments(a, b);
    sab / (saa * sbb).sqrt()
}

/// Generates the population and solves for `sigma` by bisection on the
/// realised correlation.
pub fn generate_population(spec: &PopulationSpec) -> Result<Population> {
    if spec.population_size < 2 {
        return Err(Error::InvalidInput(
            "population needs at least two units".into(),
        ));
    }
    if !(spec.x_shift > 0.0) {
        return Err(Error::InvalidInput("x_shift must be positive".into()));
    }
    if spec.beta1 == 0.0 {
        return Err(Error::InvalidInput("beta1 must be non-zero".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let big_n = spec.population_size;
    let x: Vec<f64> = (0..big_n)
        .map(|_| {
            let e: f64 = Exp1.sample(&mut rng);
            e + spec.x_shift
        })
        .collect();
    let eps: Vec<f64> = (0..big_n)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();

    // corr(sigma) = (b vx + sigma cxe) / sqrt(vx (b^2 vx + 2 b sigma cxe + sigma^2 ve))
    let (vx, ve, cxe) = moments(&x, &eps);
    let b = spec.beta1;
    let corr =
        |s: f64| (b * vx + s * cxe) / (vx * (b * b * vx + 2.0 * b * s * cxe + s * s * ve)).sqrt();
    let hi_rho = corr(0.0);
    let lo_rho = cxe / (vx * ve).sqrt();
    let target = spec.target_rho;
    if !(target > lo_rho && target <= hi_rho) {
        return Err(Error::RhoUnattainable {
            target,
            lo: lo_rho,
            hi: hi_rho,
        });
    }
    let mut hi = 1.0;
    while corr(hi) > target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::RhoUnattainable {
                target,
                lo: lo_rho,
                hi: hi_rho,
            });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if corr(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let y: Vec<f64> = x
        .iter()
        .zip(&eps)
        .map(|(xi, e)| spec.beta0 + b * xi + sigma * e)
        .collect();
    let realized_rho = correlation(&y, &x);
    if (realized_rho - target).abs() > 0.02 {
        return Err(Error::RhoUnattainable {
            target,
            lo: lo_rho,
            hi: hi_rho,
        });
    }
    Ok(Population {
        spec: spec.clone(),
        sigma,
        realized_rho,
        y,
        x,
    })
}

impl Population {
    pub fn size(&self) -> usize {
        self.y.len()
    }

    /// Finite-population parameter: the U-statistic over all `N` units.
    pub fn theta_true(&self, kernel: &Kernel) -> Result<f64> {
        u_statistic(&self.y, kernel)
    }

    pub fn x_mean(&self) -> f64 {
        self.x.iter().sum::<f64>() / self.x.len() as f64
    }

    pub fn design(&self, kind: DesignKind, sample_size: usize) -> DesignSpec {
        match kind {
            DesignKind::Srswor => DesignSpec::srswor(self.size(), sample_size),
            DesignKind::RaoSampford => DesignSpec::rao_sampford(sample_size, self.x.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub design: DesignKind,
    pub sample_size: usize,
    pub kernel: String,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

/// Everything computed for one drawn sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    /// Intervals in the order of [`StudyConfig::methods`].
    pub intervals: Vec<IntervalResult>,
}

/// Draws replicate `r` and computes the requested intervals.
pub fn run_replicate(
    pop: &Population,
    design: &DesignSpec,
    kernel: &Kernel,
    methods: &[Method],
    level: f64,
    seed: u64,
) -> Result<Vec<IntervalResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = draw_sample_with(design, &mut rng)?;
    let y: Vec<f64> = draw.indices.iter().map(|&i| pop.y[i]).collect();
    let pv = jackknife_pseudovalues(&y, kernel)?;
    let x_rows: Vec<Vec<f64>> = draw.indices.iter().map(|&i| vec![pop.x[i]]).collect();
    let x_mean = [pop.x_mean()];

    let needs = |f: Family| methods.iter().any(|m| m.family() == f);
    let calibrated = if needs(Family::Calibration) {
        let with_intercept: Vec<Vec<f64>> = x_rows.iter().map(|r| vec![1.0, r[0]]).collect();
        let big_n = pop.size() as f64;
        let cal = calibrate_weights(
            &draw.design_weights,
            &with_intercept,
            &[big_n, big_n * x_mean[0]],
        )?;
        if let Some(&i) = cal.negative.first() {
            return Err(Error::NonPositiveWeight {
                index: i,
                value: cal.weights[i],
            });
        }
        Some(cal.weights)
    } else {
        None
    };
    let sample = SurveySample {
        values: &pv.values,
        design_weights: &draw.design_weights,
        incl_probs: Some(&draw.incl_probs),
        aux: Some((&x_rows, &x_mean)),
        calibration_weights: calibrated.as_deref(),
    };
    let mut setups: Vec<(Family, LikelihoodSetup)> = Vec::new();
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let fam = m.family();
        if !setups.iter().any(|(f, _)| *f == fam) {
            setups.push((fam, LikelihoodSetup::for_family(fam, &sample)?));
        }
        let setup = &setups.iter().find(|(f, _)| *f == fam).unwrap().1;
        out.push(setup.interval(m, level)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    /// Coverage, lower and upper tail error rates in percent.
    pub cp: f64,
    pub l: f64,
    pub u: f64,
    /// Average length and average lower bound.
    pub al: f64,
    pub lb: f64,
    pub covered: usize,
    pub below: usize,
    pub above: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub population: PopulationSummary,
    pub theta_true: f64,
    pub replicates: usize,
    pub used: usize,
    pub failures: usize,
    /// Up to ten failure messages, prefixed with the replicate index.
    pub failure_examples: Vec<String>,
    pub metrics: Vec<MethodMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub spec: PopulationSpec,
    pub sigma: f64,
    pub realized_rho: f64,
}

impl StudyResult {
    pub fn metrics_for(&self, method: Method) -> Option<&MethodMetrics> {
        self.metrics.iter().find(|m| m.method == method)
    }

    pub fn failure_rate(&self) -> f64 {
        if self.replicates == 0 {
            0.0
        } else {
            self.failures as f64 / self.replicates as f64
        }
    }

    /// Fails when more than 2% of the replicates were excluded.
    pub fn check_failures(&self) -> Result<()> {
        if self.failure_rate() > MAX_FAILURE_RATE {
            Err(Error::TooManyFailures {
                failed: self.failures,
                total: self.replicates,
            })
        } else {
            Ok(())
        }
    }

    /// Mean `|L - U|` over the Bayesian (or frequentist) methods present.
    pub fn mean_tail_imbalance(&self, bayesian: bool) -> Option<f64> {
        let vals: Vec<f64> = self
            .metrics
            .iter()
            .filter(|m| m.method.is_bayesian() == bayesian)
            .map(|m| (m.l - m.u).abs())
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Aligned table with columns CI, CP, L, U, AL, LB.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let pop = &self.population;
        let _ = writeln!(
            s,
            "# N={} n={} rho={:.3} kernel={} design={:?} level={} B={} used={} failures={} theta={:.4}",
            pop.spec.population_size,
            self.config.sample_size,
            pop.realized_rho,
            self.config.kernel,
            self.config.design,
            self.config.level,
            self.replicates,
            self.used,
            self.failures,
            self.theta_true,
        );
        let _ = writeln!(
            s,
            "{:<8} {:>6} {:>5} {:>5} {:>8} {:>8}",
            "CI", "CP(%)", "L", "U", "AL", "LB"
        );
        for m in &self.metrics {
            let _ = writeln!(
                s,
                "{:<8} {:>6.1} {:>5.1} {:>5.1} {:>8.3} {:>8.3}",
                m.method.label(),
                m.cp,
                m.l,
                m.u,
                m.al,
                m.lb
            );
        }
        s
    }
}

/// Runs the replication study. Failed replicates are excluded and counted;
/// use [`StudyResult::check_failures`] to enforce the 2% limit.
pub fn run_study(pop: &Population, config: &StudyConfig) -> Result<StudyResult> {
    if config.methods.is_empty() {
        return Err(Error::InvalidInput("no methods requested".into()));
    }
    if config.replicates == 0 {
        return Err(Error::InvalidInput(
            "replicate count must be positive".into(),
        ));
    }
    let kernel = Kernel::by_name(&config.kernel)
        .ok_or_else(|| Error::InvalidInput(format!("unknown kernel '{}'", config.kernel)))?;
    let design = pop.design(config.design, config.sample_size);
    design.validate()?;
    let theta_true = pop.theta_true(&kernel)?;

    let outcomes: Vec<std::result::Result<ReplicateOutcome, String>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            run_replicate(
                pop,
                &design,
                &kernel,
                &config.methods,
                config.level,
                config.seed.wrapping_add(r as u64),
            )
            .map(|intervals| ReplicateOutcome {
                replicate: r,
                intervals,
            })
            .map_err(|e| format!("replicate {r}: {e}"))
        })
        .collect();

    let k = config.methods.len();
    let mut covered = vec![0usize; k];
    let mut below = vec![0usize; k];
    let mut above = vec![0usize; k];
    let mut len_sum = vec![0.0; k];
    let mut lb_sum = vec![0.0; k];
    let mut failures = 0;
    let mut failure_examples = Vec::new();
    for o in &outcomes {
        match o {
            Ok(rep) => {
                for (j, iv) in rep.intervals.iter().enumerate() {
                    if theta_true < iv.lower {
                        below[j] += 1;
                    } else if theta_true > iv.upper {
                        above[j] += 1;
                    } else {
                        covered[j] += 1;
                    }
                    len_sum[j] += iv.length();
                    lb_sum[j] += iv.lower;
                }
            }
            Err(msg) => {
                failures += 1;
                if failure_examples.len() < 10 {
                    failure_examples.push(msg.clone());
                }
            }
        }
    }
    let used = config.replicates - failures;
    let denom = used.max(1) as f64;
    let metrics = config
        .methods
        .iter()
        .enumerate()
        .map(|(j, &method)| MethodMetrics {
            method,
            cp: 100.0 * covered[j] as f64 / denom,
            l: 100.0 * below[j] as f64 / denom,
            u: 100.0 * above[j] as f64 / denom,
            al: len_sum[j] / denom,
            lb: lb_sum[j] / denom,
            covered: covered[j],
            below: below[j],
            above: above[j],
        })
        .collect();
    Ok(StudyResult {
        config: config.clone(),
        population: PopulationSummary {
            spec: pop.spec.clone(),
            sigma: pop.sigma,
            realized_rho: pop.realized_rho,
        },
        theta_true,
        replicates: config.replicates,
        used,
        failures,
        failure_examples,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_pop(rho: f64, seed: u64) -> Population {
        generate_population(&PopulationSpec {
            population_size: 300,
            x_shift: 2.0,
            target_rho: rho,
            seed,
            ..PopulationSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn population_hits_target_correlation() {
        for rho in [0.3, 0.5] {
            let p = small_pop(rho, 3);
            assert!((correlation(&p.y, &p.x) - rho).abs() <= 0.02);
            assert!(p.sigma > 0.0);
            assert!(p.x.iter().all(|&x| x >= 2.0));
        }
    }

    #[test]
    fn near_one_correlation_needs_little_noise() {
        let p = small_pop(0.9999, 5);
        assert!(p.sigma < 0.02, "sigma {}", p.sigma);
        assert!(correlation(&p.y, &p.x) > 0.999);
    }

    #[test]
    fn unattainable_correlation_is_reported() {
        let mut spec = PopulationSpec {
            population_size: 100,
            ..PopulationSpec::default()
        };
        for rho in [1.5, -0.5] {
            spec.target_rho = rho;
            assert!(matches!(
                generate_population(&spec),
                Err(Error::RhoUnattainable { .. })
            ));
        }
    }

    #[test]
    fn population_is_deterministic() {
        assert_eq!(small_pop(0.3, 9), small_pop(0.3, 9));
        assert_ne!(small_pop(0.3, 9).y, small_pop(0.3, 10).y);
    }

    #[test]
    fn theta_true_matches_double_loop() {
        let p = small_pop(0.3, 11);
        let n = p.y.len();
        let mut var = 0.0;
        let mut pwm = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    var += (p.y[i] - p.y[j]).powi(2) / 2.0;
                    pwm += p.y[i].max(p.y[j]) / 2.0;
                }
            }
        }
        let pairs = (n * (n - 1)) as f64;
        let tv = p.theta_true(&Kernel::variance()).unwrap();
        let tp = p.theta_true(&Kernel::pwm()).unwrap();
        assert!((tv - var / pairs).abs() < 1e-9 * tv);
        assert!((tp - pwm / pairs).abs() < 1e-9 * tp);
    }

    fn config(methods: Vec<Method>, replicates: usize, level: f64) -> StudyConfig {
        StudyConfig {
            design: DesignKind::RaoSampford,
            sample_size: 30,
            kernel: "mean".into(),
            methods,
            replicates,
            level,
            seed: 77,
        }
    }

    #[test]
    fn accounting_identity_and_reproducibility() {
        let pop = small_pop(0.5, 13);
        let cfg = config(Method::ALL.to_vec(), 40, 0.95);
        let a = run_study(&pop, &cfg).unwrap();
        let b = run_study(&pop, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        for m in &a.metrics {
            assert_eq!(m.covered + m.below + m.above, a.used);
            assert!((m.cp + m.l + m.u - 100.0).abs() < 1e-9);
            assert!(m.al > 0.0);
        }
        assert_eq!(a.to_table().lines().count(), 2 + Method::ALL.len());
    }

    #[test]
    fn coverage_is_monotone_in_level() {
        let pop = small_pop(0.3, 17);
        let lo = run_study(&pop, &config(Method::ALL.to_vec(), 60, 0.90)).unwrap();
        let hi = run_study(&pop, &config(Method::ALL.to_vec(), 60, 0.95)).unwrap();
        for (a, b) in lo.metrics.iter().zip(&hi.metrics) {
            assert!(b.covered >= a.covered, "{}", a.method);
            assert!(b.al > a.al);
        }
    }

    #[test]
    fn constant_population_fails_every_replicate() {
        let mut pop = small_pop(0.3, 19);
        pop.y.iter_mut().for_each(|y| *y = 4.0);
        let res = run_study(&pop, &config(vec![Method::Bjel, Method::Jel], 10, 0.95)).unwrap();
        assert_eq!(res.failures, 10);
        assert_eq!(res.used, 0);
        assert!(
            res.failure_examples[0].contains("variance")
                || res.failure_examples[0].contains("posterior")
        );
        assert!(matches!(
            res.check_failures(),
            Err(Error::TooManyFailures {
                failed: 10,
                total: 10
            })
        ));
    }

    #[test]
    fn rejects_empty_method_list() {
        let pop = small_pop(0.3, 23);
        assert!(run_study(&pop, &config(Vec::new(), 5, 0.95)).is_err());
    }
}
