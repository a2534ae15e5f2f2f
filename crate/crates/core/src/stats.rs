//! Small statistics toolkit: streaming means, jackknife errors, least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Streaming mean/variance (Welford), mergeable in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        Self { n, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        self.m2 / (self.n - 1) as f64
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Mean and standard error of per-replica values. For a plain mean the
/// delete-one jackknife error coincides with this.
pub fn mean_stderr(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Statistics(format!(
            "need at least 2 replicas, got {}",
            values.len()
        )));
    }
    let mut acc = MeanAccumulator::default();
    values.iter().for_each(|v| acc.push(*v));
    Ok((acc.mean(), acc.stderr()))
}

/// Sample covariance of paired observations with its delete-one jackknife
/// standard error.
pub fn jackknife_covariance(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Statistics("paired samples differ in length".into()));
    }
    if n < 2 {
        return Err(Error::Statistics(format!("need at least 2 replicas, got {n}")));
    }
    let nf = n as f64;
    // Centre first for numerical stability; covariance is shift invariant.
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let xc: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - my).collect();
    let sx: f64 = xc.iter().sum();
    let sy: f64 = yc.iter().sum();
    let sxy: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    let cov = (sxy - sx * sy / nf) / (nf - 1.0);
    if n == 2 {
        return Ok((cov, f64::NAN));
    }
    let m = nf - 1.0;
    let loo: Vec<f64> = (0..n)
        .map(|i| {
            let sx_i = sx - xc[i];
            let sy_i = sy - yc[i];
            let sxy_i = sxy - xc[i] * yc[i];
            (sxy_i - sx_i * sy_i / m) / (m - 1.0)
        })
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / nf;
    let var = (nf - 1.0) / nf * loo.iter().map(|v| (v - mean_loo).powi(2)).sum::<f64>();
    Ok((cov, var.sqrt()))
}

/// Ordinary least squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    /// Standard errors of the coefficients from the residual variance.
    pub stderr: Vec<f64>,
    pub r2: f64,
    pub dof: usize,
}

/// Least squares of `y` on the columns of `design` (row-major, one row per
/// observation). Include a column of ones for an intercept.
pub fn least_squares(design: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    let n = y.len();
    let k = design.first().map(|r| r.len()).unwrap_or(0);
    if n != design.len() || k == 0 {
        return Err(Error::Regression("design/response size mismatch".into()));
    }
    if n <= k {
        return Err(Error::Regression(format!("{n} observations for {k} coefficients")));
    }
    let x = DMatrix::from_fn(n, k, |i, j| design[i][j]);
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    // Reject collinear designs on the scale-free condition of XᵀX.
    let eig = xtx.clone().symmetric_eigen();
    let (emin, emax) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(emin > emax * 1e-12) {
        return Err(Error::Regression("collinear regression design".into()));
    }
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::Regression("singular normal matrix".into()))?;
    let beta = &inv * x.transpose() * &yv;
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let dof = n - k;
    let sigma2 = rss / dof as f64;
    let stderr = (0..k).map(|j| (sigma2 * inv[(j, j)]).sqrt()).collect();
    Ok(LinearFit {
        coef: beta.iter().copied().collect(),
        stderr,
        r2,
        dof,
    })
}
