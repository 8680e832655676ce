//! Consensus Monte Carlo: balanced random partitioning, independent
//! per-partition chains with the prior down-weighted to 1/p of its original
//! weight, inverse-posterior-covariance weights, and the weighted draw
//! combination `β^(s) = (Σ W_i)⁻¹ Σ W_i β_i^(s)`.
//!
//! Draws are paired across partitions by kept-draw index, so all partitions
//! share one chain configuration. Weights are computed on the kept
//! (post-thinning) draws. Partitions may run either the plain Metropolis
//! kernel or the two-stage kernel; a partition that lacks one outcome class
//! falls back to plain Metropolis and the fallback is recorded.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::build_index;
use crate::linalg::{condition_estimate, symmetrize, Cholesky};
use crate::model::{Dataset, PriorSpec};
use crate::samplers::{
    mh_run, two_stage_mh_run, ChainConfig, ChainOutput, ProposalSpec, RefreshSchedule,
};
use crate::seeds::derive_seed;

/// Ridge factor applied to near-singular sample covariances.
const RIDGE_EPSILON: f64 = 1e-8;
/// Condition-number threshold beyond which the ridge kicks in.
const CONDITION_LIMIT: f64 = 1e12;

/// Balanced random assignment of rows to partitions.
#[derive(Debug, Clone)]
pub struct PartitionPlan {
    partition_count: usize,
    assignment: Vec<u32>,
    seed: u64,
}

impl PartitionPlan {
    /// Uniform balanced split: sizes differ by at most one, assignment is a
    /// uniformly random balanced labeling, deterministic under the seed.
    /// `p = 1` assigns every row to partition 0 without consuming
    /// randomness, so a single-partition run reproduces an unpartitioned
    /// one exactly.
    pub fn new(n: usize, p: usize, seed: u64) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("partition count must be at least 1".into()));
        }
        if p > n {
            return Err(Error::Config(format!(
                "partition count {p} exceeds the number of rows {n}"
            )));
        }
        let mut assignment = vec![0u32; n];
        if p > 1 {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            order.shuffle(&mut rng);
            let base = n / p;
            let remainder = n % p;
            let mut pos = 0usize;
            for part in 0..p {
                let size = base + usize::from(part < remainder);
                for &row in &order[pos..pos + size] {
                    assignment[row] = part as u32;
                }
                pos += size;
            }
        }
        Ok(Self {
            partition_count: p,
            assignment,
            seed,
        })
    }

    pub fn partition_count(&self) -> usize {
        self.partition_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Rows of one partition in ascending order.
    pub fn rows_of(&self, partition: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &part)| part as usize == partition)
            .map(|(row, _)| row)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.partition_count];
        for &part in &self.assignment {
            sizes[part as usize] += 1;
        }
        sizes
    }
}

/// Balanced random partition of a dataset's rows.
pub fn partition(dataset: &Dataset, p: usize, seed: u64) -> Result<PartitionPlan> {
    PartitionPlan::new(dataset.n_rows(), p, seed)
}

/// Inverse sample covariance of a draw matrix, with a ridge fallback.
#[derive(Debug, Clone)]
pub struct WeightEstimate {
    pub matrix: Array2<f64>,
    /// True when the ridge was applied before inversion.
    pub ridged: bool,
}

/// Weight for one partition: the inverse of the sample covariance of its
/// kept draws. Covariances with 1-norm condition estimates above 1e12 get
/// a ridge `ε · trace/l · I` (ε = 1e-8) before inversion and are flagged.
pub fn estimate_weight(draws: &ArrayView2<f64>) -> Result<WeightEstimate> {
    let (m, l) = draws.dim();
    if m <= l {
        return Err(Error::InsufficientDraws(format!(
            "weight estimation needs more draws ({m}) than coefficients ({l})"
        )));
    }
    let means = draws.mean_axis(Axis(0)).expect("non-empty draws");
    let centered = draws.to_owned() - &means.broadcast((m, l)).expect("broadcast");
    let mut cov = centered.t().dot(&centered) / (m - 1) as f64;
    symmetrize(&mut cov);

    let needs_ridge = match Cholesky::new(&cov.view()) {
        Ok(chol) => condition_estimate(&cov.view(), &chol) > CONDITION_LIMIT,
        Err(_) => true,
    };
    if needs_ridge {
        let trace: f64 = (0..l).map(|i| cov[(i, i)]).sum();
        let ridge = RIDGE_EPSILON * trace / l as f64;
        if !(ridge > 0.0) {
            return Err(Error::NotPositiveDefinite(
                "sample covariance of the draws is identically zero".into(),
            ));
        }
        for i in 0..l {
            cov[(i, i)] += ridge;
        }
    }
    let chol = Cholesky::new(&cov.view())?;
    Ok(WeightEstimate {
        matrix: chol.inverse(),
        ridged: needs_ridge,
    })
}

/// Weighted combination of paired draws:
/// `combined^(s) = (Σ W_i)⁻¹ Σ W_i β_i^(s)` for each kept-draw index `s`.
///
/// A single partition short-circuits to its own draws (the solve is the
/// identity there), so `p = 1` reproduces the chain bitwise.
pub fn combine(draws: &[ArrayView2<f64>], weights: &[Array2<f64>]) -> Result<Array2<f64>> {
    if draws.is_empty() || draws.len() != weights.len() {
        return Err(Error::Combination(format!(
            "{} draw matrices with {} weights",
            draws.len(),
            weights.len()
        )));
    }
    let (m, l) = draws[0].dim();
    for (i, d) in draws.iter().enumerate() {
        if d.dim() != (m, l) {
            return Err(Error::Combination(format!(
                "draw matrix {i} has shape {:?}, expected ({m}, {l})",
                d.dim()
            )));
        }
    }
    for (i, w) in weights.iter().enumerate() {
        if w.dim() != (l, l) {
            return Err(Error::Combination(format!(
                "weight {i} has shape {:?}, expected ({l}, {l})",
                w.dim()
            )));
        }
    }
    if draws.len() == 1 {
        return Ok(draws[0].to_owned());
    }
    let mut total = Array2::<f64>::zeros((l, l));
    for w in weights {
        total += w;
    }
    let chol = Cholesky::new(&total.view())?;
    let mut combined = Array2::<f64>::zeros((m, l));
    let mut rhs = Array1::<f64>::zeros(l);
    for s in 0..m {
        rhs.fill(0.0);
        for (d, w) in draws.iter().zip(weights) {
            rhs += &w.dot(&d.row(s));
        }
        combined.row_mut(s).assign(&chol.solve(&rhs.view()));
    }
    Ok(combined)
}

/// Which kernel each partition chain runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConsensusKernel {
    Metropolis,
    TwoStage {
        a: SubsampleSize,
        refresh: RefreshSchedule,
    },
}

/// Subsample size given either absolutely or as a fraction of the sampled
/// class, resolved per partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubsampleSize {
    Count(usize),
    Fraction(f64),
}

impl SubsampleSize {
    pub fn resolve(&self, class_size: usize) -> Result<usize> {
        match *self {
            SubsampleSize::Count(a) => {
                if a == 0 || a > class_size {
                    Err(Error::Config(format!(
                        "subsample size {a} out of range 1..={class_size}"
                    )))
                } else {
                    Ok(a)
                }
            }
            SubsampleSize::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Config(format!(
                        "subsample fraction must be in (0, 1], got {f}"
                    )));
                }
                Ok(((class_size as f64 * f).round() as usize).clamp(1, class_size))
            }
        }
    }
}

/// Per-partition bookkeeping recorded alongside the ensemble.
#[derive(Debug, Clone)]
pub struct PartitionMeta {
    pub kernel_used: String,
    /// Two-stage was requested but the partition lacked one outcome class.
    pub fell_back: bool,
    /// Weight needed the ridge.
    pub ridged: bool,
}

/// Per-partition chains, their weights, and the combined draw matrix.
#[derive(Debug, Clone)]
pub struct ConsensusEnsemble {
    pub plan: PartitionPlan,
    pub per_partition: Vec<ChainOutput>,
    pub weights: Vec<Array2<f64>>,
    pub combined: Array2<f64>,
    pub partition_meta: Vec<PartitionMeta>,
}

/// Result of one partition chain produced by a chain factory.
pub struct PartitionRun {
    pub output: ChainOutput,
    pub kernel_used: String,
    pub fell_back: bool,
}

/// Drive consensus with an arbitrary chain factory. The factory receives
/// the partition id and its rows (ascending); chains run concurrently on at
/// most `workers` threads. Weight estimation and combination follow.
///
/// This is the seam the conjugate Gaussian validation uses: the factory can
/// target any posterior, not just the logistic one.
pub fn run_consensus_with<F>(
    plan: &PartitionPlan,
    workers: usize,
    run_chain: F,
) -> Result<ConsensusEnsemble>
where
    F: Fn(usize, &[usize]) -> Result<PartitionRun> + Sync,
{
    let p = plan.partition_count();
    let run_one = |i: usize| -> Result<PartitionRun> {
        let rows = plan.rows_of(i);
        run_chain(i, &rows).map_err(|e| Error::Partition {
            partition: i,
            source: Box::new(e),
        })
    };
    let runs: Result<Vec<PartitionRun>> = if workers > 1 && p > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.min(p))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..p).into_par_iter().map(run_one).collect())
    } else {
        (0..p).map(run_one).collect()
    };
    let runs = runs?;

    let kept = runs[0].output.kept_draws();
    for (i, run) in runs.iter().enumerate() {
        if run.output.kept_draws() != kept {
            return Err(Error::Combination(format!(
                "partition {i} kept {} draws, expected {kept}",
                run.output.kept_draws()
            )));
        }
    }

    let mut per_partition = Vec::with_capacity(p);
    let mut weights = Vec::with_capacity(p);
    let mut partition_meta = Vec::with_capacity(p);
    for (i, run) in runs.into_iter().enumerate() {
        let estimate = estimate_weight(&run.output.draws.view()).map_err(|e| Error::Partition {
            partition: i,
            source: Box::new(e),
        })?;
        weights.push(estimate.matrix);
        partition_meta.push(PartitionMeta {
            kernel_used: run.kernel_used,
            fell_back: run.fell_back,
            ridged: estimate.ridged,
        });
        per_partition.push(run.output);
    }
    let views: Vec<ArrayView2<f64>> = per_partition.iter().map(|o| o.draws.view()).collect();
    let combined = combine(&views, &weights)?;
    Ok(ConsensusEnsemble {
        plan: plan.clone(),
        per_partition,
        weights,
        combined,
        partition_meta,
    })
}

/// Consensus Monte Carlo over the logistic posterior.
///
/// Each partition chain sees its own rows and the prior reweighted to
/// `weight/p`, and is seeded from the master seed and its partition id. A
/// single partition keeps the master seed itself, so `p = 1` reproduces the
/// plain chain exactly.
pub fn run_consensus(
    dataset: &Dataset,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    config: &ChainConfig,
    p: usize,
    kernel: ConsensusKernel,
    workers: usize,
) -> Result<ConsensusEnsemble> {
    let plan = partition(dataset, p, derive_seed(config.seed, "partition-plan", 0))?;
    let weighted_prior = prior.reweighted(prior.weight() / p as f64)?;
    let chain_workers = (workers / workers.min(p).max(1)).max(1);
    run_consensus_with(&plan, workers, |i, rows| {
        let shard = dataset.select_rows(rows)?;
        let mut chain_config = config.clone();
        chain_config.seed = if p == 1 {
            config.seed
        } else {
            derive_seed(config.seed, "partition", i as u64)
        };
        match kernel {
            ConsensusKernel::Metropolis => {
                let output = mh_run(&shard, &weighted_prior, proposal, &chain_config, chain_workers)?;
                Ok(PartitionRun {
                    output,
                    kernel_used: "mh".into(),
                    fell_back: false,
                })
            }
            ConsensusKernel::TwoStage { a, refresh } => match build_index(&shard) {
                Ok(index) => {
                    let resolved = a.resolve(index.sampled_class_size())?;
                    let output = two_stage_mh_run(
                        &shard,
                        &weighted_prior,
                        proposal,
                        &chain_config,
                        resolved,
                        refresh,
                        chain_workers,
                    )?;
                    Ok(PartitionRun {
                        output,
                        kernel_used: "two-stage".into(),
                        fell_back: false,
                    })
                }
                Err(Error::DegenerateOutcome(_)) => {
                    let output =
                        mh_run(&shard, &weighted_prior, proposal, &chain_config, chain_workers)?;
                    Ok(PartitionRun {
                        output,
                        kernel_used: "mh".into(),
                        fell_back: true,
                    })
                }
                Err(e) => Err(e),
            },
        }
    })
}

/// Frobenius norm of the difference of two matrices.
pub fn frobenius_distance(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Relative Frobenius distance `‖a − b‖_F / ‖b‖_F`.
pub fn relative_frobenius(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    let norm_b = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    frobenius_distance(a, b) / norm_b.max(f64::MIN_POSITIVE)
}
