//! Case-control log-likelihood estimator.
//!
//! The logistic log-likelihood splits into a sum over successes and a sum
//! over failures. When outcomes are sparse the minority-class sum is cheap
//! to keep exact, and the majority-class sum is estimated from a uniform
//! without-replacement subsample scaled by (class size / subsample size).
//! The estimate is unbiased for the log-likelihood; no bias correction of
//! the likelihood itself is applied.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    bernoulli_log_term, exact_log_likelihood, row_dot, Beta, Dataset, Evaluator,
    LogPosteriorValue, PosteriorTarget, PriorSpec,
};

/// Row indices partitioned by outcome.
///
/// When successes outnumber failures the estimator swaps roles and
/// subsamples the majority class instead, so the exact sum is always the
/// cheap one; [`CaseControlIndex::swapped`] records this.
#[derive(Debug, Clone)]
pub struct CaseControlIndex {
    success_rows: Vec<usize>,
    failure_rows: Vec<usize>,
}

impl CaseControlIndex {
    pub fn success_rows(&self) -> &[usize] {
        &self.success_rows
    }

    pub fn failure_rows(&self) -> &[usize] {
        &self.failure_rows
    }

    pub fn n1(&self) -> usize {
        self.success_rows.len()
    }

    pub fn n0(&self) -> usize {
        self.failure_rows.len()
    }

    /// True when successes are the majority class and therefore the
    /// subsampled one.
    pub fn swapped(&self) -> bool {
        self.n1() > self.n0()
    }

    /// Rows whose terms are kept exact (the minority class).
    pub fn exact_class_rows(&self) -> &[usize] {
        if self.swapped() {
            &self.failure_rows
        } else {
            &self.success_rows
        }
    }

    /// Rows of the class the subsample is drawn from (the majority class).
    pub fn sampled_class_rows(&self) -> &[usize] {
        if self.swapped() {
            &self.success_rows
        } else {
            &self.failure_rows
        }
    }

    pub fn sampled_class_size(&self) -> usize {
        self.sampled_class_rows().len()
    }
}

/// Partition row indices by outcome, preserving row order within each class.
///
/// Errors when either class is empty: the two-sum split is meaningless and
/// the caller must fall back to the exact likelihood.
pub fn build_index(dataset: &Dataset) -> Result<CaseControlIndex> {
    let mut success_rows = Vec::new();
    let mut failure_rows = Vec::new();
    for (i, y) in dataset.responses().iter().enumerate() {
        if *y == 1 {
            success_rows.push(i);
        } else {
            failure_rows.push(i);
        }
    }
    if success_rows.is_empty() || failure_rows.is_empty() {
        return Err(Error::DegenerateOutcome(format!(
            "n1 = {}, n0 = {}; both classes must be present",
            success_rows.len(),
            failure_rows.len()
        )));
    }
    Ok(CaseControlIndex {
        success_rows,
        failure_rows,
    })
}

/// A without-replacement subsample of the sampled class.
#[derive(Debug, Clone)]
pub struct Subsample {
    rows: Vec<usize>,
    seed_tag: Option<u64>,
}

impl Subsample {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    /// Seed that produced this subsample; `None` for manually assembled
    /// subsamples (enumeration tests, variance studies).
    pub fn seed_tag(&self) -> Option<u64> {
        self.seed_tag
    }

    /// Build a subsample from explicit rows of the sampled class.
    pub fn from_rows(index: &CaseControlIndex, mut rows: Vec<usize>) -> Result<Self> {
        rows.sort_unstable();
        if rows.is_empty() {
            return Err(Error::Config("subsample is empty".into()));
        }
        if rows.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("subsample has duplicate rows".into()));
        }
        let class = index.sampled_class_rows();
        if !rows.iter().all(|r| class.binary_search(r).is_ok()) {
            return Err(Error::Config(
                "subsample rows must belong to the sampled class".into(),
            ));
        }
        Ok(Self {
            rows,
            seed_tag: None,
        })
    }
}

/// Uniform without-replacement draw of `a` rows from the sampled class.
/// Identical seed implies an identical subsample. Rows are stored in
/// ascending order, which also fixes the summation order of the estimator.
pub fn draw_subsample(index: &CaseControlIndex, a: usize, seed: u64) -> Result<Subsample> {
    let class = index.sampled_class_rows();
    if a == 0 || a > class.len() {
        return Err(Error::Config(format!(
            "subsample size {a} out of range 1..={}",
            class.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = rand::seq::index::sample(&mut rng, class.len(), a)
        .into_iter()
        .map(|k| class[k])
        .collect();
    rows.sort_unstable();
    Ok(Subsample {
        rows,
        seed_tag: Some(seed),
    })
}

fn sum_terms(beta: &Beta, dataset: &Dataset, rows: &[usize]) -> Result<f64> {
    let b = beta.as_slice();
    let y = dataset.responses();
    let mut sum = 0.0;
    for &i in rows {
        let theta = row_dot(dataset.design(), i, b);
        if !theta.is_finite() {
            return Err(Error::NonFinite {
                row: i,
                context: "case-control estimate",
            });
        }
        sum += bernoulli_log_term(theta, y[i]);
    }
    Ok(sum)
}

/// Case-control estimate of the log-likelihood: exact minority-class sum
/// plus the subsample sum scaled by (sampled class size / subsample size).
///
/// An exhaustive subsample (`a` equal to the sampled class size) collapses
/// to the exact likelihood and is evaluated by the exact path so the
/// estimator and the exact evaluator agree bitwise at that boundary.
pub fn approx_log_likelihood(
    beta: &Beta,
    dataset: &Dataset,
    index: &CaseControlIndex,
    sub: &Subsample,
    eval: &Evaluator,
) -> Result<f64> {
    if beta.len() != dataset.n_features() {
        return Err(Error::Dimension(format!(
            "beta has length {} but design has {} columns",
            beta.len(),
            dataset.n_features()
        )));
    }
    if sub.size() == index.sampled_class_size() {
        return exact_log_likelihood(beta, dataset, eval);
    }
    let exact_sum = sum_terms(beta, dataset, index.exact_class_rows())?;
    let sub_sum = sum_terms(beta, dataset, sub.rows())?;
    let scale = index.sampled_class_size() as f64 / sub.size() as f64;
    Ok(exact_sum + scale * sub_sum)
}

/// Case-control estimate of the log-posterior.
pub fn approx_log_posterior(
    beta: &Beta,
    dataset: &Dataset,
    index: &CaseControlIndex,
    sub: &Subsample,
    prior: &PriorSpec,
    eval: &Evaluator,
) -> Result<f64> {
    Ok(approx_log_likelihood(beta, dataset, index, sub, eval)? + prior.log_density(beta)?)
}

/// Approximate posterior as a Metropolis target (fixed subsample).
pub struct ApproxPosterior<'a> {
    pub dataset: &'a Dataset,
    pub prior: &'a PriorSpec,
    pub index: &'a CaseControlIndex,
    pub sub: &'a Subsample,
    pub eval: &'a Evaluator,
}

impl PosteriorTarget for ApproxPosterior<'_> {
    fn dim(&self) -> usize {
        self.dataset.n_features()
    }

    fn log_posterior(&self, beta: &Beta) -> Result<LogPosteriorValue> {
        let ll = approx_log_likelihood(beta, self.dataset, self.index, self.sub, self.eval)?;
        Ok(LogPosteriorValue::new(ll, self.prior.log_density(beta)?))
    }
}
