//! Flat-prior posteriors of `theta` on a deterministic grid.
//!
//! With `pi(theta)` constant the posterior is proportional to
//! `exp{scale * sum w_i log p_i(theta)}`. The density is evaluated on a
//! uniform grid, normalised by log-sum-exp and the trapezoid rule, and its
//! CDF accumulated with the same rule. Points outside the EL support carry
//! zero density.

use crate::elcore::{profile_log_el_from, profile_maximizer, WeightedSample};
use crate::error::{Error, Result};

/// Grid points used by [`build_posterior`].
pub const GRID_POINTS: usize = 2001;
/// Initial half-width of the grid in units of the plug-in standard error.
const HALF_WIDTH_SE: f64 = 6.0;
/// Span doublings allowed while mass remains near the grid ends.
const MAX_EXTENSIONS: usize = 3;
/// Mass tolerated in the outer 5% of the grid on either side.
const BOUNDARY_MASS: f64 = 1e-6;
/// Minimum number of grid steps per posterior standard deviation.
const STEPS_PER_SD: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    pub thetas: Vec<f64>,
    pub log_density: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    /// Point estimate the grid was built around.
    pub center: f64,
    pub scale_used: f64,
    pub diagnostics: Vec<String>,
}

impl PosteriorGrid {
    /// Normalises an arbitrary log density given on a strictly increasing grid.
    pub fn from_log_density(
        thetas: Vec<f64>,
        log_density: Vec<f64>,
        center: f64,
        scale_used: f64,
    ) -> Result<Self> {
        if thetas.len() != log_density.len() || thetas.len() < 2 {
            return Err(Error::InvalidInput(
                "grid and density lengths differ".into(),
            ));
        }
        if thetas.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(
                "grid is not strictly increasing".into(),
            ));
        }
        let feasible = log_density.iter().filter(|v| v.is_finite()).count();
        if feasible < 5 {
            return Err(Error::DegeneratePosterior { feasible });
        }
        let top = log_density
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut density: Vec<f64> = log_density
            .iter()
            .map(|&v| if v.is_finite() { (v - top).exp() } else { 0.0 })
            .collect();
        let mut cdf = vec![0.0; thetas.len()];
        for i in 1..thetas.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (density[i - 1] + density[i]) * (thetas[i] - thetas[i - 1]);
        }
        let total = cdf[cdf.len() - 1];
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegeneratePosterior { feasible });
        }
        for d in &mut density {
            *d /= total;
        }
        for c in &mut cdf {
            *c /= total;
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(PosteriorGrid {
            thetas,
            log_density,
            density,
            cdf,
            center,
            scale_used,
            diagnostics: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.thetas[self.len() - 1] - self.thetas[0]) / (self.len() - 1) as f64
    }

    /// Trapezoid integral of the density.
    pub fn total_mass(&self) -> f64 {
        self.thetas
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(t, d)| 0.5 * (d[0] + d[1]) * (t[1] - t[0]))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.moment(|t| t)
    }

    pub fn sd(&self) -> f64 {
        let m = self.mean();
        self.moment(|t| (t - m).powi(2)).sqrt()
    }

    fn moment(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.thetas
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(t, d)| 0.5 * (d[0] * f(t[0]) + d[1] * f(t[1])) * (t[1] - t[0]))
            .sum()
    }

    /// Grid point of highest density.
    pub fn mode(&self) -> f64 {
        let i = self
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        self.thetas[i]
    }

    /// Posterior CDF at `theta`; 0 below the grid and 1 above it.
    pub fn cdf_at(&self, theta: f64) -> f64 {
        let n = self.len();
        if theta <= self.thetas[0] {
            return 0.0;
        }
        if theta >= self.thetas[n - 1] {
            return 1.0;
        }
        let j = self.thetas.partition_point(|&t| t <= theta);
        let (t0, t1) = (self.thetas[j - 1], self.thetas[j]);
        let f = (theta - t0) / (t1 - t0);
        self.cdf[j - 1] + f * (self.cdf[j] - self.cdf[j - 1])
    }

    /// Inverse CDF by linear interpolation; `alpha` outside the resolved mass
    /// clamps to the grid ends.
    pub fn quantile(&self, alpha: f64) -> f64 {
        let n = self.len();
        if alpha <= self.cdf[0] {
            return self.thetas[0];
        }
        if alpha >= 1.0 {
            return self.thetas[n - 1];
        }
        let j = self.cdf.partition_point(|&c| c < alpha);
        if j == 0 {
            return self.thetas[0];
        }
        if j >= n {
            return self.thetas[n - 1];
        }
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let f = if c1 > c0 {
            (alpha - c0) / (c1 - c0)
        } else {
            0.0
        };
        self.thetas[j - 1] + f * (self.thetas[j] - self.thetas[j - 1])
    }

    /// Posterior mass in the outer `frac` of the grid on either side.
    fn edge_mass(&self, frac: f64) -> f64 {
        let k = ((self.len() as f64 * frac) as usize).max(1);
        let n = self.len();
        self.cdf[k] + (1.0 - self.cdf[n - 1 - k])
    }
}

/// Evaluates the scaled profile log-EL on `[lo, hi]`, walking outwards from
/// the grid point nearest `center` so each solve is warm-started from its
/// neighbour. Past the first infeasible point on a side the rest is `-inf`.
fn evaluate_grid(
    ws: &WeightedSample,
    scale: f64,
    use_aux: bool,
    center: f64,
    lo: f64,
    hi: f64,
    points: usize,
) -> (Vec<f64>, Vec<f64>, usize) {
    let step = (hi - lo) / (points - 1) as f64;
    let thetas: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let mut logd = vec![f64::NEG_INFINITY; points];
    let mid = (((center - lo) / step).round().max(0.0) as usize).min(points - 1);
    let mut failures = 0;
    for dir in [1isize, -1] {
        let mut warm: Option<Vec<f64>> = None;
        let mut i = if dir > 0 {
            mid as isize
        } else {
            mid as isize - 1
        };
        while i >= 0 && (i as usize) < points {
            let pv = profile_log_el_from(ws, thetas[i as usize], scale, use_aux, warm.as_deref());
            logd[i as usize] = pv.value;
            match pv.diagnostic {
                None => warm = pv.lambda,
                Some(Error::InfeasibleTheta { .. }) => break,
                Some(_) => failures += 1,
            }
            i += dir;
        }
    }
    (thetas, logd, failures)
}

/// Builds the flat-prior posterior `exp{scale * sum w_i log p_i(theta)}`.
///
/// The grid spans `±6` plug-in standard errors around the profile maximiser,
/// `SE^2 = sum w_i (v_i - theta_hat)^2 / scale`, and is widened (up to three
/// doublings) while mass remains near its ends. A posterior much narrower
/// than the grid is re-gridded around its own mean.
pub fn build_posterior(ws: &WeightedSample, scale: f64, use_aux: bool) -> Result<PosteriorGrid> {
    build_posterior_with(ws, scale, use_aux, GRID_POINTS)
}

pub fn build_posterior_with(
    ws: &WeightedSample,
    scale: f64,
    use_aux: bool,
    points: usize,
) -> Result<PosteriorGrid> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "scale {scale} is not positive"
        )));
    }
    if points < 5 {
        return Err(Error::InvalidInput(
            "posterior grid needs at least 5 points".into(),
        ));
    }
    let (center, _) = profile_maximizer(ws, use_aux)?;
    let se = (ws.weighted_sq_dev(center) / scale).sqrt();
    if !(se > 1e-12 * center.abs().max(1.0)) {
        return Err(Error::DegeneratePosterior { feasible: 0 });
    }

    let mut diagnostics = Vec::new();
    let mut grid_center = center;
    let mut half = HALF_WIDTH_SE * se;
    let mut extensions = 0;
    let mut zoomed = false;
    loop {
        let (thetas, logd, failures) = evaluate_grid(
            ws,
            scale,
            use_aux,
            grid_center,
            grid_center - half,
            grid_center + half,
            points,
        );
        if failures > 0 {
            diagnostics.push(format!(
                "{failures} grid points failed to solve and carry zero density"
            ));
        }
        let pg = PosteriorGrid::from_log_density(thetas, logd, center, scale)?;
        if pg.edge_mass(0.05) > BOUNDARY_MASS && extensions < MAX_EXTENSIONS {
            extensions += 1;
            half *= 2.0;
            diagnostics.push(format!("grid extended to ±{:.3e}", half));
            continue;
        }
        let sd = pg.sd();
        if !zoomed && sd > 0.0 && sd < STEPS_PER_SD * pg.spacing() {
            zoomed = true;
            grid_center = pg.mean();
            half = 8.0 * sd;
            diagnostics.push("grid refined around the posterior mass".into());
            continue;
        }
        if pg.edge_mass(0.05) > BOUNDARY_MASS {
            diagnostics.push(format!(
                "posterior mass {:.2e} remains near the grid ends",
                pg.edge_mass(0.05)
            ));
        }
        return Ok(PosteriorGrid { diagnostics, ..pg });
    }
}

/// Posterior `alpha`-quantile.
pub fn posterior_quantile(pg: &PosteriorGrid, alpha: f64) -> f64 {
    pg.quantile(alpha)
}

/// Posterior CDF at the true parameter; uniform on (0, 1) across
/// replications when the posterior is valid by coverage.
pub fn monahan_boos_h(pg: &PosteriorGrid, theta_true: f64) -> f64 {
    pg.cdf_at(theta_true)
}
