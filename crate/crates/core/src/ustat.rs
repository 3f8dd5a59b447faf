//! One-sample U-statistics and their jackknife pseudo-values.
//!
//! A U-statistic of order `m` averages a symmetric kernel over all
//! `m`-subsets of the sample. Pseudo-values
//! `v_i = n T_n - (n - 1) T_{n-1}^{(-i)}` linearise it into per-unit values
//! whose mean is exactly `T_n`; every likelihood variant downstream works on
//! these values.
//!
//! Kernels of order 1 and 2 use cached row sums so that all `n`
//! leave-one-out statistics cost `O(n^m)` in total. Higher orders fall back
//! to naive recomputation, `O(n^{m+1})` kernel calls.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type KernelFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Symmetric kernel `h` of a fixed number of arguments.
#[derive(Clone)]
pub struct Kernel {
    name: String,
    order: usize,
    eval: Arc<KernelFn>,
}

impl Kernel {
    /// Wraps `eval` as a kernel of `order` arguments. The function must be
    /// symmetric in its arguments; this is not checked.
    pub fn new<F>(name: impl Into<String>, order: usize, eval: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if order == 0 {
            return Err(Error::InvalidInput(
                "kernel order must be at least 1".into(),
            ));
        }
        Ok(Kernel {
            name: name.into(),
            order,
            eval: Arc::new(eval),
        })
    }

    /// `h(x) = x`; the U-statistic is the sample mean.
    pub fn mean() -> Self {
        Self::new("mean", 1, |a| a[0]).unwrap()
    }

    /// `h(x, y) = (x - y)^2 / 2`; the U-statistic is the unbiased sample variance.
    pub fn variance() -> Self {
        Self::new("variance", 2, |a| 0.5 * (a[0] - a[1]).powi(2)).unwrap()
    }

    /// `h(x, y) = max(x, y) / 2`; the probability-weighted moment `E{Y F(Y)}`.
    pub fn pwm() -> Self {
        Self::new("pwm", 2, |a| 0.5 * a[0].max(a[1])).unwrap()
    }

    /// Looks up one of the builtin kernels by name.
    pub fn by_name(name: &str) -> Option<Self> {
        builtin_kernels().into_iter().find(|k| k.name == name)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn eval(&self, args: &[f64]) -> f64 {
        debug_assert_eq!(args.len(), self.order);
        (self.eval)(args)
    }

    fn eval_checked(&self, args: &[f64]) -> Result<f64> {
        let v = self.eval(args);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidInput(format!(
                "kernel '{}' returned a non-finite value at {:?}",
                self.name, args
            )))
        }
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("order", &self.order)
            .finish()
    }
}

/// The mean, variance and probability-weighted-moment kernels.
pub fn builtin_kernels() -> Vec<Kernel> {
    vec![Kernel::mean(), Kernel::variance(), Kernel::pwm()]
}

/// Jackknife pseudo-values of a sample together with the full-sample statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoValues {
    pub values: Vec<f64>,
    pub u_stat: f64,
}

impl PseudoValues {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn check_input(y: &[f64], min_n: usize, order: usize) -> Result<()> {
    if y.len() < min_n {
        return Err(Error::SampleTooSmall { n: y.len(), order });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "observation {i} is not finite"
        )));
    }
    Ok(())
}

/// Binomial coefficient as a float; exact for the sizes used here.
fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Sum of `h` over all `order`-subsets of `y`, optionally skipping one index.
fn subset_sum(y: &[f64], k: &Kernel, skip: Option<usize>) -> Result<f64> {
    let pool: Vec<f64> = y
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(_, &v)| v)
        .collect();
    let m = k.order();
    let n = pool.len();
    if n < m {
        return Ok(0.0);
    }
    let mut idx: Vec<usize> = (0..m).collect();
    let mut args = vec![0.0; m];
    let mut total = 0.0;
    loop {
        for (a, &i) in args.iter_mut().zip(&idx) {
            *a = pool[i];
        }
        total += k.eval_checked(&args)?;
        // next combination in lexicographic order
        let mut pos = m;
        loop {
            if pos == 0 {
                return Ok(total);
            }
            pos -= 1;
            if idx[pos] < n - m + pos {
                break;
            }
        }
        idx[pos] += 1;
        for j in pos + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Per-row kernel sums `R_i = sum_{j != i} h(y_i, y_j)` for an order-2 kernel.
fn pair_row_sums(y: &[f64], k: &Kernel) -> Result<Vec<f64>> {
    let n = y.len();
    let mut rows = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let h = k.eval_checked(&[y[i], y[j]])?;
            rows[i] += h;
            rows[j] += h;
        }
    }
    Ok(rows)
}

/// `C(n, m)^{-1} sum_{i1 < ... < im} h(y_i1, ..., y_im)`.
pub fn u_statistic(y: &[f64], k: &Kernel) -> Result<f64> {
    check_input(y, k.order(), k.order())?;
    let n = y.len();
    let total = match k.order() {
        1 => y
            .iter()
            .map(|&v| k.eval_checked(&[v]))
            .sum::<Result<f64>>()?,
        2 => pair_row_sums(y, k)?.iter().sum::<f64>() / 2.0,
        _ => subset_sum(y, k, None)?,
    };
    Ok(total / choose(n, k.order()))
}

/// Jackknife pseudo-values `v_i = n T_n - (n - 1) T_{n-1}^{(-i)}`.
pub fn jackknife_pseudovalues(y: &[f64], k: &Kernel) -> Result<PseudoValues> {
    let m = k.order();
    check_input(y, m + 1, m)?;
    let n = y.len();
    let nf = n as f64;
    let (u_stat, loo): (f64, Vec<f64>) = match m {
        1 => {
            let h: Vec<f64> = y
                .iter()
                .map(|&v| k.eval_checked(&[v]))
                .collect::<Result<_>>()?;
            let total: f64 = h.iter().sum();
            let loo = h.iter().map(|hi| (total - hi) / (nf - 1.0)).collect();
            (total / nf, loo)
        }
        2 => {
            let rows = pair_row_sums(y, k)?;
            let total: f64 = rows.iter().sum::<f64>() / 2.0;
            let c_full = choose(n, 2);
            let c_loo = choose(n - 1, 2);
            let loo = rows.iter().map(|r| (total - r) / c_loo).collect();
            (total / c_full, loo)
        }
        _ => {
            let c_loo = choose(n - 1, m);
            let loo = (0..n)
                .map(|i| subset_sum(y, k, Some(i)).map(|s| s / c_loo))
                .collect::<Result<Vec<_>>>()?;
            (subset_sum(y, k, None)? / choose(n, m), loo)
        }
    };
    let values = loo.iter().map(|t| nf * u_stat - (nf - 1.0) * t).collect();
    Ok(PseudoValues { values, u_stat })
}

/// Leave-one-out statistics by direct recomputation for any kernel order.
/// Slow; kept for cross-checking the cached paths.
pub fn leave_one_out_naive(y: &[f64], k: &Kernel) -> Result<Vec<f64>> {
    check_input(y, k.order() + 1, k.order())?;
    let c_loo = choose(y.len() - 1, k.order());
    (0..y.len())
        .map(|i| subset_sum(y, k, Some(i)).map(|s| s / c_loo))
        .collect()
}
