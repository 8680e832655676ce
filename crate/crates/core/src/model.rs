//! Logistic model core: dataset and prior types, the numerically stable
//! log-likelihood, and the exact log-posterior.
//!
//! Likelihood evaluation follows a fixed-block reduction: rows are grouped
//! into blocks of [`EVAL_BLOCK_ROWS`], per-block partial sums are computed
//! independently (possibly on several workers), and the partials are folded
//! in ascending block order. The addition order therefore never depends on
//! the worker count, which makes every chain bitwise reproducible under a
//! fixed seed no matter how many cores evaluate the likelihood.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, Cholesky};

/// Rows per reduction block. Fixed so the summation tree depends only on n.
pub const EVAL_BLOCK_ROWS: usize = 4096;

const LN_2PI: f64 = 1.8378770664093453; // ln(2π)

/// Design matrix, binary responses, and feature labels.
///
/// Immutable after construction; shared freely across worker threads.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    y: Vec<u8>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Validates shapes, the {0,1} response range, and finiteness of the
    /// design matrix.
    pub fn new(x: Array2<f64>, y: Vec<u8>, feature_names: Vec<String>) -> Result<Self> {
        let (n, l) = x.dim();
        if n == 0 || l == 0 {
            return Err(Error::InvalidDataset(format!(
                "design matrix must be non-empty, got {n}x{l}"
            )));
        }
        if y.len() != n {
            return Err(Error::InvalidDataset(format!(
                "response length {} does not match {} rows",
                y.len(),
                n
            )));
        }
        if feature_names.len() != l {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                l
            )));
        }
        if let Some(i) = y.iter().position(|v| *v > 1) {
            return Err(Error::InvalidDataset(format!(
                "response at row {i} is {} (must be 0 or 1)",
                y[i]
            )));
        }
        if let Some((i, _)) = x
            .rows()
            .into_iter()
            .enumerate()
            .find(|(_, row)| row.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidDataset(format!(
                "non-finite covariate at row {i}"
            )));
        }
        Ok(Self { x, y, feature_names })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn design(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn responses(&self) -> &[u8] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Owned copy of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_rows()) {
            return Err(Error::Dimension(format!(
                "row {bad} out of range (n = {})",
                self.n_rows()
            )));
        }
        if rows.is_empty() {
            return Err(Error::InvalidDataset("row selection is empty".into()));
        }
        let x = self.x.select(Axis(0), rows);
        let y = rows.iter().map(|&r| self.y[r]).collect();
        Ok(Self {
            x,
            y,
            feature_names: self.feature_names.clone(),
        })
    }
}

/// Classification coefficient vector; entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Beta(Array1<f64>);

impl Beta {
    pub fn new(values: impl Into<Array1<f64>>) -> Result<Self> {
        let values = values.into();
        if values.is_empty() {
            return Err(Error::Dimension("coefficient vector is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("coefficient vector has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(Array1::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("beta storage is contiguous")
    }
}

/// Zero-mean Gaussian prior with an SPD covariance and a weight exponent.
///
/// The weight multiplies the whole log-density (including the normalizing
/// constant); consensus runs use weight 1/p. The prior mean is fixed at
/// zero — a nonzero mean is not representable rather than silently ignored.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    covariance: Array2<f64>,
    weight: f64,
    chol: Cholesky,
    log_norm: f64,
}

impl PriorSpec {
    pub fn new(covariance: Array2<f64>, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::Config(format!(
                "prior weight must be in (0, 1], got {weight}"
            )));
        }
        if !is_symmetric(&covariance.view()) {
            return Err(Error::NotPositiveDefinite(
                "prior covariance is not symmetric".into(),
            ));
        }
        let chol = Cholesky::new(&covariance.view())?;
        let l = covariance.nrows() as f64;
        let log_norm = -0.5 * (l * LN_2PI + chol.log_det());
        Ok(Self {
            covariance,
            weight,
            chol,
            log_norm,
        })
    }

    /// `variance · I` prior, the paper-style default (variance 1000).
    pub fn isotropic(dim: usize, variance: f64, weight: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::Config(format!(
                "prior variance must be positive and finite, got {variance}"
            )));
        }
        PriorSpec::new(Array2::eye(dim) * variance, weight)
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    /// Same covariance with a different weight (consensus down-weighting).
    pub fn reweighted(&self, weight: f64) -> Result<Self> {
        PriorSpec::new(self.covariance.clone(), weight)
    }

    /// `weight · log N(beta; 0, Σ0)` including the normalizing constant.
    pub fn log_density(&self, beta: &Beta) -> Result<f64> {
        if beta.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "beta has length {} but prior dimension is {}",
                beta.len(),
                self.dim()
            )));
        }
        let quad = self.chol.quad_form_inv(&beta.values().view());
        Ok(self.weight * (-0.5 * quad + self.log_norm))
    }
}

/// Exact log-posterior split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPosteriorValue {
    pub log_likelihood: f64,
    pub log_prior: f64,
    pub total: f64,
}

impl LogPosteriorValue {
    pub fn new(log_likelihood: f64, log_prior: f64) -> Self {
        Self {
            log_likelihood,
            log_prior,
            total: log_likelihood + log_prior,
        }
    }
}

/// Likelihood evaluation strategy: how many workers share the fixed blocks.
///
/// The result never depends on the worker count; only wall time does.
#[derive(Debug)]
pub struct Evaluator {
    workers: usize,
    pool: Option<rayon::ThreadPool>,
}

impl Evaluator {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self { workers, pool })
    }

    pub fn sequential() -> Self {
        Self {
            workers: 1,
            pool: None,
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}

/// `log(1 + e^t)` without overflow: `max(t, 0) + log1p(e^{-|t|})`.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Bernoulli log-probability of outcome `y` at linear predictor `theta`.
#[inline]
pub(crate) fn bernoulli_log_term(theta: f64, y: u8) -> f64 {
    if y == 1 {
        theta - softplus(theta)
    } else {
        -softplus(theta)
    }
}

#[inline]
pub(crate) fn row_dot(x: &Array2<f64>, row: usize, beta: &[f64]) -> f64 {
    let r = x.row(row);
    let xs = r.as_slice().expect("row-major design matrix");
    let mut sum = 0.0;
    for (a, b) in xs.iter().zip(beta) {
        sum += a * b;
    }
    sum
}

fn check_dims(beta: &Beta, dataset: &Dataset) -> Result<()> {
    if beta.len() != dataset.n_features() {
        return Err(Error::Dimension(format!(
            "beta has length {} but design has {} columns",
            beta.len(),
            dataset.n_features()
        )));
    }
    Ok(())
}

/// Linear predictors `θ_i = x_i · β` for the requested row range, in row
/// order.
pub fn linear_predictor(
    beta: &Beta,
    dataset: &Dataset,
    rows: std::ops::Range<usize>,
) -> Result<Array1<f64>> {
    check_dims(beta, dataset)?;
    if rows.end > dataset.n_rows() {
        return Err(Error::Dimension(format!(
            "row range {}..{} exceeds {} rows",
            rows.start,
            rows.end,
            dataset.n_rows()
        )));
    }
    let b = beta.as_slice();
    Ok(Array1::from_iter(
        rows.map(|i| row_dot(dataset.design(), i, b)),
    ))
}

fn block_log_likelihood(dataset: &Dataset, beta: &[f64], start: usize, end: usize) -> Result<f64> {
    let mut sum = 0.0;
    let y = dataset.responses();
    for i in start..end {
        let theta = row_dot(dataset.design(), i, beta);
        if !theta.is_finite() {
            return Err(Error::NonFinite {
                row: i,
                context: "log-likelihood evaluation",
            });
        }
        sum += bernoulli_log_term(theta, y[i]);
    }
    Ok(sum)
}

/// Exact logistic log-likelihood over the whole dataset.
///
/// Deterministic for any worker count: blocks are fixed-size and their
/// partial sums fold in ascending block order.
pub fn exact_log_likelihood(beta: &Beta, dataset: &Dataset, eval: &Evaluator) -> Result<f64> {
    check_dims(beta, dataset)?;
    let n = dataset.n_rows();
    let b = beta.as_slice();
    let n_blocks = n.div_ceil(EVAL_BLOCK_ROWS);
    let partials: Result<Vec<f64>> = match &eval.pool {
        Some(pool) if n_blocks > 1 => pool.install(|| {
            (0..n_blocks)
                .into_par_iter()
                .map(|blk| {
                    let start = blk * EVAL_BLOCK_ROWS;
                    let end = (start + EVAL_BLOCK_ROWS).min(n);
                    block_log_likelihood(dataset, b, start, end)
                })
                .collect()
        }),
        _ => (0..n_blocks)
            .map(|blk| {
                let start = blk * EVAL_BLOCK_ROWS;
                let end = (start + EVAL_BLOCK_ROWS).min(n);
                block_log_likelihood(dataset, b, start, end)
            })
            .collect(),
    };
    Ok(partials?.iter().sum())
}

/// Weighted Gaussian log-prior; see [`PriorSpec::log_density`].
pub fn log_prior(beta: &Beta, prior: &PriorSpec) -> Result<f64> {
    prior.log_density(beta)
}

/// Exact log-posterior `log p(y|β,X) + w log p(β)`.
pub fn exact_log_posterior(
    beta: &Beta,
    dataset: &Dataset,
    prior: &PriorSpec,
    eval: &Evaluator,
) -> Result<LogPosteriorValue> {
    let ll = exact_log_likelihood(beta, dataset, eval)?;
    let lp = log_prior(beta, prior)?;
    Ok(LogPosteriorValue::new(ll, lp))
}

/// Anything a Metropolis kernel can target.
pub trait PosteriorTarget: Sync {
    fn dim(&self) -> usize;
    fn log_posterior(&self, beta: &Beta) -> Result<LogPosteriorValue>;
}

/// The exact logistic posterior of Eq. (1): likelihood times weighted prior.
pub struct ExactPosterior<'a> {
    pub dataset: &'a Dataset,
    pub prior: &'a PriorSpec,
    pub eval: &'a Evaluator,
}

impl PosteriorTarget for ExactPosterior<'_> {
    fn dim(&self) -> usize {
        self.dataset.n_features()
    }

    fn log_posterior(&self, beta: &Beta) -> Result<LogPosteriorValue> {
        exact_log_posterior(beta, self.dataset, self.prior, self.eval)
    }
}

/// Prior-only target (zero log-likelihood). Used to validate kernel
/// acceptance rates against quadrature on the prior alone.
pub struct PriorOnly<'a> {
    pub prior: &'a PriorSpec,
}

impl PosteriorTarget for PriorOnly<'_> {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn log_posterior(&self, beta: &Beta) -> Result<LogPosteriorValue> {
        Ok(LogPosteriorValue::new(0.0, self.prior.log_density(beta)?))
    }
}

/// Gaussian-response target: the logistic likelihood replaced by
/// `y_i ~ N(x_i β, σ²)`. The posterior is conjugate, so consensus averaging
/// can be validated against the analytic full-data posterior.
pub struct GaussianResponse<'a> {
    pub design: &'a Array2<f64>,
    pub response: &'a Array1<f64>,
    pub noise_sd: f64,
    pub prior: &'a PriorSpec,
}

impl GaussianResponse<'_> {
    /// Analytic posterior `N(μ, Λ⁻¹)` with
    /// `Λ = w Σ0⁻¹ + XᵀX/σ²` and `μ = Λ⁻¹ Xᵀy/σ²`.
    pub fn analytic_posterior(&self) -> Result<(Array1<f64>, Array2<f64>)> {
        let l = self.design.ncols();
        let prior_precision = {
            let inv = Cholesky::new(&self.prior.covariance().view())?.inverse();
            inv * self.prior.weight()
        };
        let xtx = self.design.t().dot(self.design);
        let lambda = &prior_precision + &(xtx / (self.noise_sd * self.noise_sd));
        let xty = self.design.t().dot(self.response) / (self.noise_sd * self.noise_sd);
        let chol = Cholesky::new(&lambda.view())?;
        let mean = chol.solve(&xty.view());
        let cov = chol.inverse();
        debug_assert_eq!(cov.nrows(), l);
        Ok((mean, cov))
    }
}

impl PosteriorTarget for GaussianResponse<'_> {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn log_posterior(&self, beta: &Beta) -> Result<LogPosteriorValue> {
        if beta.len() != self.design.ncols() {
            return Err(Error::Dimension(format!(
                "beta has length {} but design has {} columns",
                beta.len(),
                self.design.ncols()
            )));
        }
        let theta = self.design.dot(beta.values());
        let inv_var = 1.0 / (self.noise_sd * self.noise_sd);
        let n = self.response.len() as f64;
        let mut ss = 0.0;
        for (t, y) in theta.iter().zip(self.response.iter()) {
            let r = y - t;
            ss += r * r;
        }
        let ll = -0.5 * ss * inv_var - n * (self.noise_sd.ln() + 0.5 * LN_2PI);
        Ok(LogPosteriorValue::new(ll, self.prior.log_density(beta)?))
    }
}
