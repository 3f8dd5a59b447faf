//! Inner empirical-likelihood problem.
//!
//! For a fixed `theta` the weighted pseudo-empirical log-likelihood
//! `sum_i w_i log p_i` is maximised subject to `sum p_i = 1`,
//! `sum p_i v_i = theta` and optionally `sum p_i x_i = xbar`. The solution is
//! `p_i = w_i / (1 + lambda' u_i)` with `u_i = (v_i - theta, x_i - xbar)`
//! and `lambda` the root of `sum_i w_i u_i / (1 + lambda' u_i) = 0`.
//!
//! The scalar root is found by Newton steps safeguarded with a bisection
//! bracket (the score is strictly decreasing on its domain). The vector root
//! is found by damped Newton on the concave dual `sum w_i log(1 + lambda' u_i)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Denominators `1 + lambda' u_i` are never allowed below this value.
pub const MIN_DENOMINATOR: f64 = 1e-10;

/// `max_i lambda' u_i` beyond which the multiplier is declared divergent.
const DIVERGENCE_LIMIT: f64 = 1e8;

/// Consecutive non-improving damped steps before a point is declared infeasible.
const STALL_LIMIT: usize = 30;

/// Unit values with normalised weights and optional auxiliary information.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    values: Vec<f64>,
    norm_weights: Vec<f64>,
    aux: Option<Auxiliary>,
}

/// Auxiliary vectors `x_i` (row-major, `n x k`) and their known population mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Auxiliary {
    pub rows: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

impl Auxiliary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

impl WeightedSample {
    /// `norm_weights` must be strictly positive and sum to one within 1e-12.
    pub fn new(values: Vec<f64>, norm_weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty sample".into()));
        }
        if values.len() != norm_weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} values but {} weights",
                values.len(),
                norm_weights.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("value {i} is not finite")));
        }
        if let Some((i, &w)) = norm_weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::NonPositiveWeight { index: i, value: w });
        }
        let total: f64 = norm_weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "normalised weights sum to {total}, not 1"
            )));
        }
        Ok(WeightedSample {
            values,
            norm_weights,
            aux: None,
        })
    }

    /// Equal weights `1/n`.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(values, vec![1.0 / n as f64; n])
    }

    /// Attaches auxiliary rows (one per unit) and their population mean.
    pub fn with_aux(mut self, rows: Vec<Vec<f64>>, mean: Vec<f64>) -> Result<Self> {
        if rows.len() != self.values.len() {
            return Err(Error::InvalidInput(format!(
                "{} auxiliary rows for {} units",
                rows.len(),
                self.values.len()
            )));
        }
        if rows.iter().any(|r| r.len() != mean.len()) {
            return Err(Error::InvalidInput(
                "auxiliary rows and mean differ in dimension".into(),
            ));
        }
        if rows.iter().flatten().chain(&mean).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite auxiliary value".into()));
        }
        self.aux = Some(Auxiliary { rows, mean });
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm_weights(&self) -> &[f64] {
        &self.norm_weights
    }

    pub fn aux(&self) -> Option<&Auxiliary> {
        self.aux.as_ref()
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Hájek mean `sum w_i v_i`.
    pub fn weighted_mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.norm_weights)
            .map(|(v, w)| v * w)
            .sum()
    }

    /// `sum w_i (v_i - center)^2`.
    pub fn weighted_sq_dev(&self, center: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.norm_weights)
            .map(|(v, w)| w * (v - center).powi(2))
            .sum()
    }

    fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Multiplier, EL weights and unscaled log-likelihood `sum w_i log p_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElSolution {
    pub lambda: Vec<f64>,
    pub p: Vec<f64>,
    pub log_el: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub residual: f64,
}

impl ElSolution {
    fn infeasible(dim: usize, iterations: usize) -> Self {
        ElSolution {
            lambda: vec![f64::NAN; dim],
            p: Vec::new(),
            log_el: f64::NEG_INFINITY,
            feasible: false,
            iterations,
            residual: f64::INFINITY,
        }
    }

    /// Converts an infeasible solution into [`Error::InfeasibleTheta`].
    pub fn require_feasible(self, theta: f64) -> Result<Self> {
        if self.feasible {
            Ok(self)
        } else {
            Err(Error::InfeasibleTheta { theta })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Tolerance on the constraint residuals `sum p_i u_i` and `sum p_i - 1`.
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverOptions {
    pub const SCALAR: SolverOptions = SolverOptions {
        tol: 1e-10,
        max_iter: 100,
    };
    pub const VECTOR: SolverOptions = SolverOptions {
        tol: 1e-8,
        max_iter: 100,
    };
}

fn finish(
    weights: &[f64],
    denoms: &[f64],
    lambda: Vec<f64>,
    iterations: usize,
    residual: f64,
) -> ElSolution {
    let p: Vec<f64> = weights.iter().zip(denoms).map(|(w, d)| w / d).collect();
    let log_el = weights.iter().zip(&p).map(|(w, p)| w * p.ln()).sum();
    ElSolution {
        lambda,
        p,
        log_el,
        feasible: true,
        iterations,
        residual,
    }
}

/// Scalar multiplier for the constraint `sum p_i v_i = theta`.
pub fn solve_lambda_1d(ws: &WeightedSample, theta: f64) -> Result<ElSolution> {
    solve_lambda_1d_with(ws, theta, SolverOptions::SCALAR, None)
}

/// [`solve_lambda_1d`] with explicit options and an optional starting multiplier.
pub fn solve_lambda_1d_with(
    ws: &WeightedSample,
    theta: f64,
    opts: SolverOptions,
    start: Option<f64>,
) -> Result<ElSolution> {
    if !theta.is_finite() {
        return Err(Error::InvalidInput("theta is not finite".into()));
    }
    let (vmin, vmax) = ws.range();
    if !(vmin < theta && theta < vmax) {
        return Ok(ElSolution::infeasible(1, 0));
    }
    let w = ws.norm_weights();
    let u: Vec<f64> = ws.values().iter().map(|v| v - theta).collect();
    // open domain of lambda on which every 1 + lambda u_i > 0
    let mut lo = -1.0 / (vmax - theta);
    let mut hi = 1.0 / (theta - vmin);
    let score = |lambda: f64| -> (f64, f64) {
        let mut g = 0.0;
        let mut dg = 0.0;
        for (wi, ui) in w.iter().zip(&u) {
            let d = 1.0 + lambda * ui;
            g += wi * ui / d;
            dg -= wi * ui * ui / (d * d);
        }
        (g, dg)
    };
    let admissible = |lambda: f64| u.iter().all(|ui| 1.0 + lambda * ui >= MIN_DENOMINATOR);

    let mut lambda = start
        .filter(|&l| l > lo && l < hi && admissible(l))
        .unwrap_or(0.0);
    let mut residual = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let (g, dg) = score(lambda);
        // sum p_i u_i = g and sum p_i - 1 = -lambda g
        residual = g.abs() * lambda.abs().max(1.0);
        if residual <= opts.tol || hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            let denoms: Vec<f64> = u.iter().map(|ui| 1.0 + lambda * ui).collect();
            return Ok(finish(w, &denoms, vec![lambda], iter, residual));
        }
        if g > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let newton = lambda - g / dg;
        lambda = if newton > lo && newton < hi && admissible(newton) {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

enum DualOutcome {
    Converged {
        lambda: Vec<f64>,
        denoms: Vec<f64>,
        iterations: usize,
        residual: f64,
    },
    Infeasible {
        iterations: usize,
    },
}

/// Damped Newton on `Q(lambda) = sum w_i log(1 + lambda' u_i)` for points
/// `u` stored row-major with `q` columns.
fn newton_dual(
    w: &[f64],
    u: &[f64],
    q: usize,
    start: Option<&[f64]>,
    opts: SolverOptions,
) -> Result<DualOutcome> {
    let n = w.len();
    let dot = |lambda: &[f64], i: usize| -> f64 {
        lambda
            .iter()
            .zip(&u[i * q..(i + 1) * q])
            .map(|(a, b)| a * b)
            .sum()
    };
    let dual = |lambda: &[f64]| -> Option<(f64, Vec<f64>)> {
        let mut q_val = 0.0;
        let mut denoms = Vec::with_capacity(n);
        for (i, wi) in w.iter().enumerate() {
            let d = 1.0 + dot(lambda, i);
            if d < MIN_DENOMINATOR {
                return None;
            }
            q_val += wi * d.ln();
            denoms.push(d);
        }
        Some((q_val, denoms))
    };

    let mut lambda = vec![0.0; q];
    if let Some(s) = start {
        if s.len() == q && s.iter().all(|v| v.is_finite()) && dual(s).is_some() {
            lambda.copy_from_slice(s);
        }
    }
    let (mut q_val, mut denoms) = dual(&lambda).expect("lambda = 0 is always admissible");
    let mut best_residual = f64::INFINITY;
    let mut stall = 0;

    for iter in 1..=opts.max_iter {
        let mut grad = DVector::<f64>::zeros(q);
        let mut hess = DMatrix::<f64>::zeros(q, q);
        for i in 0..n {
            let row = &u[i * q..(i + 1) * q];
            let d = denoms[i];
            let a = w[i] / d;
            let b = w[i] / (d * d);
            for r in 0..q {
                grad[r] += a * row[r];
                for c in 0..=r {
                    hess[(r, c)] += b * row[r] * row[c];
                }
            }
        }
        for r in 0..q {
            for c in 0..r {
                hess[(c, r)] = hess[(r, c)];
            }
        }
        // sum p_i u_i = grad and sum p_i - 1 = -lambda' grad
        let residual = grad
            .amax()
            .max(grad.dot(&DVector::from_column_slice(&lambda)).abs());
        if residual <= opts.tol {
            return Ok(DualOutcome::Converged {
                lambda,
                denoms,
                iterations: iter,
                residual,
            });
        }
        if residual < best_residual * (1.0 - 1e-12) {
            best_residual = residual;
            stall = 0;
        } else {
            stall += 1;
            if stall >= STALL_LIMIT {
                return Ok(DualOutcome::Infeasible { iterations: iter });
            }
        }

        let scale = (0..q).map(|r| hess[(r, r)]).fold(0.0, f64::max);
        let chol = hess
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("EL Jacobian is not positive definite".into()))?;
        let min_pivot = chol
            .l()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v * v));
        if !(min_pivot > 1e-13 * scale) {
            return Err(Error::SingularSystem(
                "EL Jacobian is numerically singular (collinear constraints?)".into(),
            ));
        }
        let step = chol.solve(&grad);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = lambda
                .iter()
                .zip(step.iter())
                .map(|(l, s)| l + t * s)
                .collect();
            if let Some((qt, dt)) = dual(&trial) {
                if qt >= q_val - 1e-14 * q_val.abs().max(1.0) {
                    accepted = Some((trial, qt, dt));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, qt, dt)) => {
                lambda = trial;
                q_val = qt;
                denoms = dt;
            }
            None => {
                stall += 1;
                if stall >= STALL_LIMIT {
                    return Ok(DualOutcome::Infeasible { iterations: iter });
                }
            }
        }
        let max_lu = denoms.iter().fold(f64::NEG_INFINITY, |m, d| m.max(d - 1.0));
        if max_lu > DIVERGENCE_LIMIT {
            return Ok(DualOutcome::Infeasible { iterations: iter });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: best_residual,
    })
}

/// Strict sign change in every coordinate: necessary for 0 to be interior
/// to the convex hull of the points.
fn coordinates_straddle_zero(u: &[f64], q: usize) -> bool {
    (0..q).all(|c| {
        let (mut neg, mut pos) = (false, false);
        for row in u.chunks_exact(q) {
            neg |= row[c] < 0.0;
            pos |= row[c] > 0.0;
        }
        neg && pos
    })
}

fn stacked_points(ws: &WeightedSample, theta: Option<f64>) -> (Vec<f64>, usize) {
    let k = ws.aux().map_or(0, Auxiliary::dim);
    let q = k + usize::from(theta.is_some());
    let mut u = Vec::with_capacity(ws.n() * q);
    for i in 0..ws.n() {
        if let Some(t) = theta {
            u.push(ws.values()[i] - t);
        }
        if let Some(aux) = ws.aux() {
            u.extend(aux.rows[i].iter().zip(&aux.mean).map(|(x, m)| x - m));
        }
    }
    (u, q)
}

/// Vector multiplier for `sum p_i v_i = theta` together with the auxiliary
/// constraint `sum p_i x_i = xbar`. Without auxiliary data this reduces to
/// the scalar problem, solved by the same damped Newton iteration.
pub fn solve_lambda_multi(ws: &WeightedSample, theta: f64) -> Result<ElSolution> {
    solve_lambda_multi_with(ws, theta, SolverOptions::VECTOR, None)
}

pub fn solve_lambda_multi_with(
    ws: &WeightedSample,
    theta: f64,
    opts: SolverOptions,
    start: Option<&[f64]>,
) -> Result<ElSolution> {
    if !theta.is_finite() {
        return Err(Error::InvalidInput("theta is not finite".into()));
    }
    let (u, q) = stacked_points(ws, Some(theta));
    solve_points(ws.norm_weights(), &u, q, start, opts)
}

fn solve_points(
    w: &[f64],
    u: &[f64],
    q: usize,
    start: Option<&[f64]>,
    opts: SolverOptions,
) -> Result<ElSolution> {
    if q == 0 {
        let denoms = vec![1.0; w.len()];
        return Ok(finish(w, &denoms, Vec::new(), 0, 0.0));
    }
    if !coordinates_straddle_zero(u, q) {
        return Ok(ElSolution::infeasible(q, 0));
    }
    match newton_dual(w, u, q, start, opts)? {
        DualOutcome::Converged {
            lambda,
            denoms,
            iterations,
            residual,
        } => Ok(finish(w, &denoms, lambda, iterations, residual)),
        DualOutcome::Infeasible { iterations } => Ok(ElSolution::infeasible(q, iterations)),
    }
}

/// Maximiser of the profile log-EL over `theta`.
///
/// Without auxiliary data this is the Hájek mean with `p_i = w_i`. With
/// auxiliary data it is `sum p_i v_i` where `p` solves the auxiliary
/// constraint alone (the regression-type estimator).
pub fn profile_maximizer(ws: &WeightedSample, use_aux: bool) -> Result<(f64, ElSolution)> {
    let aux = if use_aux { ws.aux() } else { None };
    match aux {
        None => {
            let w = ws.norm_weights();
            let sol = finish(w, &vec![1.0; w.len()], vec![0.0], 0, 0.0);
            Ok((ws.weighted_mean(), sol))
        }
        Some(_) => {
            let (u, q) = stacked_points(ws, None);
            let sol = solve_points(ws.norm_weights(), &u, q, None, SolverOptions::VECTOR)?;
            if !sol.feasible {
                return Err(Error::InvalidInput(
                    "auxiliary mean lies outside the convex hull of the sample".into(),
                ));
            }
            let theta = sol.p.iter().zip(ws.values()).map(|(p, v)| p * v).sum();
            Ok((theta, sol))
        }
    }
}

/// Value of a scaled profile log-EL, `-inf` when `theta` is infeasible or
/// the inner solver failed (the failure is kept as a diagnostic).
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileValue {
    pub value: f64,
    pub diagnostic: Option<Error>,
    pub lambda: Option<Vec<f64>>,
}

impl ProfileValue {
    fn neg_inf(diagnostic: Error) -> Self {
        ProfileValue {
            value: f64::NEG_INFINITY,
            diagnostic: Some(diagnostic),
            lambda: None,
        }
    }
}

/// `scale * sum_i w_i log p_i(theta)`.
pub fn profile_log_el(ws: &WeightedSample, theta: f64, scale: f64, use_aux: bool) -> ProfileValue {
    profile_log_el_from(ws, theta, scale, use_aux, None)
}

/// [`profile_log_el`] warm-started from a nearby multiplier.
pub fn profile_log_el_from(
    ws: &WeightedSample,
    theta: f64,
    scale: f64,
    use_aux: bool,
    start: Option<&[f64]>,
) -> ProfileValue {
    if !(scale > 0.0 && scale.is_finite()) {
        return ProfileValue::neg_inf(Error::InvalidInput(format!(
            "scale {scale} is not positive"
        )));
    }
    let solved = if use_aux && ws.aux().is_some() {
        solve_lambda_multi_with(ws, theta, SolverOptions::VECTOR, start)
    } else {
        solve_lambda_1d_with(
            ws,
            theta,
            SolverOptions::SCALAR,
            start.and_then(|s| s.first().copied()),
        )
    };
    match solved {
        Ok(sol) if sol.feasible => ProfileValue {
            value: scale * sol.log_el,
            diagnostic: None,
            lambda: Some(sol.lambda),
        },
        Ok(_) => ProfileValue::neg_inf(Error::InfeasibleTheta { theta }),
        Err(e) => ProfileValue::neg_inf(e),
    }
}
