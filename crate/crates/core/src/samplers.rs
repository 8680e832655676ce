//! Chain kernels: exact Metropolis-Hastings, subsampling MH against the
//! approximate posterior, and two-stage (delayed acceptance) MH.
//!
//! All kernels use a symmetric Gaussian random walk, so proposal densities
//! cancel from every acceptance ratio. Acceptance tests run in the log
//! domain with an explicit `min(0, ·)` and ties accept; this makes the
//! exhaustive-subsample boundary (`a = n0`, where the approximate and exact
//! posteriors coincide bitwise) accept stage two with probability exactly 1.
//!
//! The two-stage kernel screens each proposal with the approximate
//! posterior (stage one) and evaluates the exact posterior only for
//! promoted proposals (stage two), accepting with the closed-form ratio
//! `min(1, [p*(β_t) p(β')] / [p*(β') p(β_t)])`. The integral form over the
//! screened proposal kernel reduces to this ratio, and only the ratio is
//! ever computed. Exact-posterior values for the current state are cached,
//! so each iteration costs one approximate evaluation plus one exact
//! evaluation per promotion: `exact_evals = stage1_promotions + 1`.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimator::{approx_log_posterior, build_index, draw_subsample, Subsample};
use crate::linalg::Cholesky;
use crate::model::{
    exact_log_posterior, Beta, Dataset, Evaluator, PosteriorTarget, PriorSpec,
};
use crate::seeds::derive_seed;

/// Default Robbins-Monro target acceptance rate.
pub const DEFAULT_TARGET_ACCEPTANCE: f64 = 0.234;

const CHAIN_STREAM: &str = "chain";
const SUBSAMPLE_STREAM: &str = "subsample";

#[derive(Debug, Clone)]
enum ProposalScale {
    Isotropic { sd: f64 },
    Matrix { chol: Cholesky },
}

/// Symmetric Gaussian random-walk proposal.
///
/// Optional burn-in-only Robbins-Monro scale adaptation steers the
/// acceptance rate toward `target_acceptance`; the multiplier freezes after
/// burn-in so the post-burn-in kernel is a fixed, valid MH kernel.
#[derive(Debug, Clone)]
pub struct ProposalSpec {
    scale: ProposalScale,
    adapt_burnin: bool,
    target_acceptance: f64,
}

impl ProposalSpec {
    /// Covariance `variance · I`.
    pub fn isotropic(variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::Config(format!(
                "proposal variance must be positive and finite, got {variance}"
            )));
        }
        Ok(Self {
            scale: ProposalScale::Isotropic {
                sd: variance.sqrt(),
            },
            adapt_burnin: false,
            target_acceptance: DEFAULT_TARGET_ACCEPTANCE,
        })
    }

    /// Full covariance random walk.
    pub fn matrix(covariance: Array2<f64>) -> Result<Self> {
        let chol = Cholesky::new(&covariance.view())?;
        Ok(Self {
            scale: ProposalScale::Matrix { chol },
            adapt_burnin: false,
            target_acceptance: DEFAULT_TARGET_ACCEPTANCE,
        })
    }

    /// Enable burn-in scale adaptation toward the given acceptance rate.
    pub fn with_adaptation(mut self, target_acceptance: f64) -> Result<Self> {
        if !(target_acceptance > 0.05 && target_acceptance < 0.95) {
            return Err(Error::Config(format!(
                "target acceptance must lie in (0.05, 0.95), got {target_acceptance}"
            )));
        }
        self.adapt_burnin = true;
        self.target_acceptance = target_acceptance;
        Ok(self)
    }

    pub fn adapts(&self) -> bool {
        self.adapt_burnin
    }

    pub fn target_acceptance(&self) -> f64 {
        self.target_acceptance
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if let ProposalScale::Matrix { chol } = &self.scale {
            if chol.dim() != dim {
                return Err(Error::Dimension(format!(
                    "proposal covariance is {}x{} but the model has {dim} coefficients",
                    chol.dim(),
                    chol.dim()
                )));
            }
        }
        Ok(())
    }

    fn step(&self, dim: usize, log_mult: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
        let z = Array1::from_iter((0..dim).map(|_| StandardNormal.sample(rng)));
        let mult = log_mult.exp();
        match &self.scale {
            ProposalScale::Isotropic { sd } => z * (sd * mult),
            ProposalScale::Matrix { chol } => chol.mul_lower(&z.view()) * mult,
        }
    }
}

/// One random-walk proposal from the current state. Symmetric by
/// construction: the correction `q(β_t|β)/q(β|β_t)` is identically 1.
pub fn propose(current: &Beta, spec: &ProposalSpec, rng: &mut ChaCha8Rng) -> Result<Beta> {
    spec.check_dim(current.len())?;
    let step = spec.step(current.len(), 0.0, rng);
    Beta::new(current.values() + &step)
}

/// Length, retention, and seeding of one chain.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub thinning: usize,
    pub seed: u64,
    /// Initial state; defaults to the prior mean (zero vector).
    pub init: Option<Beta>,
}

impl ChainConfig {
    pub fn new(iterations: usize, burnin: usize, thinning: usize, seed: u64) -> Self {
        Self {
            iterations,
            burnin,
            thinning,
            seed,
            init: None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burnin >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burnin, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if let Some(init) = &self.init {
            if init.len() != dim {
                return Err(Error::Dimension(format!(
                    "init has length {} but the model has {dim} coefficients",
                    init.len()
                )));
            }
        }
        Ok(())
    }

    /// Number of retained draws: floor((iterations - burnin)/thinning).
    pub fn kept_draws(&self) -> usize {
        (self.iterations - self.burnin) / self.thinning
    }

    fn initial_state(&self, dim: usize) -> Beta {
        self.init.clone().unwrap_or_else(|| Beta::zeros(dim))
    }
}

/// When the failure subsample is re-drawn during a run.
///
/// `Fixed` (the default) draws the subsample once per chain, making the
/// approximate posterior a deterministic function and the two-stage kernel
/// a delayed-acceptance kernel targeting the exact posterior. The
/// every-K-iterations mode exists for variance studies and is recorded in
/// the output metadata; with it the subsampling kernel behaves like
/// Monte-Carlo-within-Metropolis and its target is smoothed by estimator
/// noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefreshSchedule {
    Fixed,
    EveryIterations(usize),
}

impl RefreshSchedule {
    fn validate(&self) -> Result<()> {
        if let RefreshSchedule::EveryIterations(0) = self {
            return Err(Error::Config(
                "refresh interval must be at least 1 iteration".into(),
            ));
        }
        Ok(())
    }

    fn due(&self, t: usize) -> bool {
        match self {
            RefreshSchedule::Fixed => false,
            RefreshSchedule::EveryIterations(k) => t > 1 && (t - 1) % k == 0,
        }
    }
}

/// Subsample bookkeeping attached to subsampling and two-stage outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsampleMeta {
    pub a: usize,
    /// True when successes were the majority class and therefore subsampled.
    pub swapped: bool,
    pub refresh: RefreshSchedule,
    pub refresh_count: usize,
    pub initial_seed_tag: u64,
}

/// Retained draws plus per-stage counters for one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// kept-draws x l matrix of retained posterior draws.
    pub draws: Array2<f64>,
    /// Proposals drawn (one per iteration).
    pub stage1_proposals: u64,
    /// Proposals that reached the exact-posterior test. Equals the
    /// iteration count for plain MH (no screen) and the accepted count for
    /// subsampling MH (the approximate test is the only stage).
    pub stage1_promotions: u64,
    /// Proposals finally accepted.
    pub stage2_accepts: u64,
    pub exact_evals: u64,
    pub approx_evals: u64,
    pub wall_seconds: f64,
    pub method_tag: String,
    pub subsample_meta: Option<SubsampleMeta>,
    pub iterations: usize,
    pub burnin: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl ChainOutput {
    pub fn kept_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.stage2_accepts as f64 / self.stage1_proposals.max(1) as f64
    }

    pub fn promotion_rate(&self) -> f64 {
        self.stage1_promotions as f64 / self.stage1_proposals.max(1) as f64
    }

    /// Fraction of promoted proposals accepted at stage two.
    pub fn stage2_acceptance_among_promoted(&self) -> f64 {
        if self.stage1_promotions == 0 {
            return 0.0;
        }
        self.stage2_accepts as f64 / self.stage1_promotions as f64
    }

    pub fn iterations_per_second(&self) -> f64 {
        self.iterations as f64 / self.wall_seconds.max(f64::MIN_POSITIVE)
    }
}

/// Log acceptance probability of stage two for a promoted proposal:
/// `min(0, [p*(β_t) + p(β')] - [p*(β') + p(β_t)])` in log densities.
pub fn two_stage_log_acceptance(
    approx_current: f64,
    exact_current: f64,
    approx_proposed: f64,
    exact_proposed: f64,
) -> f64 {
    ((approx_current + exact_proposed) - (approx_proposed + exact_current)).min(0.0)
}

/// Accept when the log ratio is non-negative (ties accept) or the uniform
/// draw lands below it. No uniform is consumed on a sure accept, so kernels
/// that share a log-ratio sequence also share their random streams.
fn accept(log_ratio: f64, rng: &mut ChaCha8Rng) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

struct Recorder {
    draws: Array2<f64>,
    next: usize,
    burnin: usize,
    thinning: usize,
}

impl Recorder {
    fn new(config: &ChainConfig, dim: usize) -> Self {
        Self {
            draws: Array2::zeros((config.kept_draws(), dim)),
            next: 0,
            burnin: config.burnin,
            thinning: config.thinning,
        }
    }

    fn observe(&mut self, t: usize, state: &Beta) {
        if t > self.burnin && (t - self.burnin) % self.thinning == 0 && self.next < self.draws.nrows()
        {
            self.draws.row_mut(self.next).assign(state.values());
            self.next += 1;
        }
    }

    fn finish(self) -> Array2<f64> {
        debug_assert_eq!(self.next, self.draws.nrows());
        self.draws
    }
}

struct Adaptation {
    enabled: bool,
    target: f64,
    burnin: usize,
    log_mult: f64,
}

impl Adaptation {
    fn new(proposal: &ProposalSpec, config: &ChainConfig) -> Self {
        Self {
            enabled: proposal.adapts(),
            target: proposal.target_acceptance(),
            burnin: config.burnin,
            log_mult: 0.0,
        }
    }

    /// Robbins-Monro update on the log scale multiplier, burn-in only.
    fn update(&mut self, t: usize, alpha: f64) {
        if self.enabled && t <= self.burnin {
            let gamma = (t as f64).powf(-0.66);
            self.log_mult = (self.log_mult + gamma * (alpha - self.target)).clamp(-15.0, 15.0);
        }
    }
}

fn ensure_finite_init(value: f64, what: &str) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Initialization(format!(
            "{what} is {value} at the initial state"
        )));
    }
    Ok(())
}

fn ensure_not_nan(value: f64, t: usize) -> Result<()> {
    if value.is_nan() {
        return Err(Error::Numerical(format!(
            "log-posterior is NaN at iteration {t}"
        )));
    }
    Ok(())
}

/// Metropolis chain against an arbitrary target. Counters treat every
/// target evaluation as exact, which matches the targets this is used with
/// (exact posterior, prior-only, Gaussian-response).
pub fn run_metropolis(
    target: &dyn PosteriorTarget,
    proposal: &ProposalSpec,
    config: &ChainConfig,
    method_tag: &str,
) -> Result<ChainOutput> {
    let dim = target.dim();
    config.validate(dim)?;
    proposal.check_dim(dim)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, CHAIN_STREAM, 0));
    let mut current = config.initial_state(dim);
    let mut current_lp = target.log_posterior(&current)?;
    ensure_finite_init(current_lp.total, "log-posterior")?;
    let mut exact_evals: u64 = 1;
    let mut accepts: u64 = 0;
    let mut recorder = Recorder::new(config, dim);
    let mut adapt = Adaptation::new(proposal, config);

    for t in 1..=config.iterations {
        let step = proposal.step(dim, adapt.log_mult, &mut rng);
        let proposed = Beta::new(current.values() + &step)?;
        let prop_lp = target.log_posterior(&proposed)?;
        exact_evals += 1;
        ensure_not_nan(prop_lp.total, t)?;
        let delta = prop_lp.total - current_lp.total;
        adapt.update(t, delta.min(0.0).exp());
        if accept(delta, &mut rng) {
            current = proposed;
            current_lp = prop_lp;
            accepts += 1;
        }
        recorder.observe(t, &current);
    }

    Ok(ChainOutput {
        draws: recorder.finish(),
        stage1_proposals: config.iterations as u64,
        stage1_promotions: config.iterations as u64,
        stage2_accepts: accepts,
        exact_evals,
        approx_evals: 0,
        wall_seconds: start.elapsed().as_secs_f64(),
        method_tag: method_tag.to_string(),
        subsample_meta: None,
        iterations: config.iterations,
        burnin: config.burnin,
        thinning: config.thinning,
        seed: config.seed,
    })
}

/// Metropolis-Hastings against the exact posterior.
pub fn mh_run(
    dataset: &Dataset,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    config: &ChainConfig,
    workers: usize,
) -> Result<ChainOutput> {
    check_model_dims(dataset, prior)?;
    let eval = Evaluator::new(workers)?;
    let target = crate::model::ExactPosterior {
        dataset,
        prior,
        eval: &eval,
    };
    run_metropolis(&target, proposal, config, "mh")
}

fn check_model_dims(dataset: &Dataset, prior: &PriorSpec) -> Result<()> {
    if prior.dim() != dataset.n_features() {
        return Err(Error::Dimension(format!(
            "prior dimension {} does not match design width {}",
            prior.dim(),
            dataset.n_features()
        )));
    }
    Ok(())
}

/// Metropolis-Hastings against the approximate posterior built on the
/// case-control estimate. Never evaluates the exact likelihood; the output
/// metadata records that the target is approximate.
pub fn subsampling_mh_run(
    dataset: &Dataset,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    config: &ChainConfig,
    a: usize,
    refresh: RefreshSchedule,
    workers: usize,
) -> Result<ChainOutput> {
    check_model_dims(dataset, prior)?;
    let dim = dataset.n_features();
    config.validate(dim)?;
    proposal.check_dim(dim)?;
    refresh.validate()?;
    let start = Instant::now();
    let index = build_index(dataset)?;
    let eval = Evaluator::new(workers)?;
    let initial_seed_tag = derive_seed(config.seed, SUBSAMPLE_STREAM, 0);
    let mut sub = draw_subsample(&index, a, initial_seed_tag)?;
    let mut sub_draws: u64 = 0;
    let mut refresh_count = 0usize;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, CHAIN_STREAM, 0));
    let mut current = config.initial_state(dim);
    let mut current_lp = approx_log_posterior(&current, dataset, &index, &sub, prior, &eval)?;
    ensure_finite_init(current_lp, "approximate log-posterior")?;
    let mut approx_evals: u64 = 1;
    let mut accepts: u64 = 0;
    let mut recorder = Recorder::new(config, dim);
    let mut adapt = Adaptation::new(proposal, config);

    for t in 1..=config.iterations {
        if refresh.due(t) {
            sub_draws += 1;
            refresh_count += 1;
            sub = draw_subsample(
                &index,
                a,
                derive_seed(config.seed, SUBSAMPLE_STREAM, sub_draws),
            )?;
            current_lp = approx_log_posterior(&current, dataset, &index, &sub, prior, &eval)?;
            approx_evals += 1;
            ensure_not_nan(current_lp, t)?;
        }
        let step = proposal.step(dim, adapt.log_mult, &mut rng);
        let proposed = Beta::new(current.values() + &step)?;
        let prop_lp = approx_log_posterior(&proposed, dataset, &index, &sub, prior, &eval)?;
        approx_evals += 1;
        ensure_not_nan(prop_lp, t)?;
        let delta = prop_lp - current_lp;
        adapt.update(t, delta.min(0.0).exp());
        if accept(delta, &mut rng) {
            current = proposed;
            current_lp = prop_lp;
            accepts += 1;
        }
        recorder.observe(t, &current);
    }

    Ok(ChainOutput {
        draws: recorder.finish(),
        stage1_proposals: config.iterations as u64,
        stage1_promotions: accepts,
        stage2_accepts: accepts,
        exact_evals: 0,
        approx_evals,
        wall_seconds: start.elapsed().as_secs_f64(),
        method_tag: "subsample".to_string(),
        subsample_meta: Some(SubsampleMeta {
            a,
            swapped: index.swapped(),
            refresh,
            refresh_count,
            initial_seed_tag,
        }),
        iterations: config.iterations,
        burnin: config.burnin,
        thinning: config.thinning,
        seed: config.seed,
    })
}

/// Two-stage (delayed acceptance) Metropolis-Hastings.
///
/// Stage one screens each proposal with the approximate posterior; stage
/// two corrects promoted proposals with the exact posterior through the
/// closed-form ratio, so the chain targets the exact posterior. Stage-one
/// rejections cost no exact evaluation.
pub fn two_stage_mh_run(
    dataset: &Dataset,
    prior: &PriorSpec,
    proposal: &ProposalSpec,
    config: &ChainConfig,
    a: usize,
    refresh: RefreshSchedule,
    workers: usize,
) -> Result<ChainOutput> {
    check_model_dims(dataset, prior)?;
    let dim = dataset.n_features();
    config.validate(dim)?;
    proposal.check_dim(dim)?;
    refresh.validate()?;
    let start = Instant::now();
    let index = build_index(dataset)?;
    let eval = Evaluator::new(workers)?;
    let initial_seed_tag = derive_seed(config.seed, SUBSAMPLE_STREAM, 0);
    let mut sub: Subsample = draw_subsample(&index, a, initial_seed_tag)?;
    let mut sub_draws: u64 = 0;
    let mut refresh_count = 0usize;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, CHAIN_STREAM, 0));
    let mut current = config.initial_state(dim);
    let mut current_approx =
        approx_log_posterior(&current, dataset, &index, &sub, prior, &eval)?;
    ensure_finite_init(current_approx, "approximate log-posterior")?;
    let mut current_exact = exact_log_posterior(&current, dataset, prior, &eval)?;
    ensure_finite_init(current_exact.total, "log-posterior")?;
    let mut approx_evals: u64 = 1;
    let mut exact_evals: u64 = 1;
    let mut proposals: u64 = 0;
    let mut promotions: u64 = 0;
    let mut accepts: u64 = 0;
    let mut recorder = Recorder::new(config, dim);
    let mut adapt = Adaptation::new(proposal, config);

    for t in 1..=config.iterations {
        if refresh.due(t) {
            sub_draws += 1;
            refresh_count += 1;
            sub = draw_subsample(
                &index,
                a,
                derive_seed(config.seed, SUBSAMPLE_STREAM, sub_draws),
            )?;
            current_approx =
                approx_log_posterior(&current, dataset, &index, &sub, prior, &eval)?;
            approx_evals += 1;
            ensure_not_nan(current_approx, t)?;
        }
        let step = proposal.step(dim, adapt.log_mult, &mut rng);
        let proposed = Beta::new(current.values() + &step)?;
        proposals += 1;
        let prop_approx = approx_log_posterior(&proposed, dataset, &index, &sub, prior, &eval)?;
        approx_evals += 1;
        ensure_not_nan(prop_approx, t)?;
        let delta_screen = prop_approx - current_approx;
        adapt.update(t, delta_screen.min(0.0).exp());
        if accept(delta_screen, &mut rng) {
            promotions += 1;
            let prop_exact = exact_log_posterior(&proposed, dataset, prior, &eval)?;
            exact_evals += 1;
            ensure_not_nan(prop_exact.total, t)?;
            let log_rho = two_stage_log_acceptance(
                current_approx,
                current_exact.total,
                prop_approx,
                prop_exact.total,
            );
            if accept(log_rho, &mut rng) {
                current = proposed;
                current_approx = prop_approx;
                current_exact = prop_exact;
                accepts += 1;
            }
        }
        recorder.observe(t, &current);
    }

    Ok(ChainOutput {
        draws: recorder.finish(),
        stage1_proposals: proposals,
        stage1_promotions: promotions,
        stage2_accepts: accepts,
        exact_evals,
        approx_evals,
        wall_seconds: start.elapsed().as_secs_f64(),
        method_tag: "two-stage".to_string(),
        subsample_meta: Some(SubsampleMeta {
            a,
            swapped: index.swapped(),
            refresh,
            refresh_count,
            initial_seed_tag,
        }),
        iterations: config.iterations,
        burnin: config.burnin,
        thinning: config.thinning,
        seed: config.seed,
    })
}

/// Effective sample size of one draws column via the initial positive
/// sequence estimator on autocovariances. Requires at least 100 draws;
/// errors on a constant column. The result is capped at the draw count.
pub fn effective_sample_size(draws: &[f64]) -> Result<f64> {
    let n = draws.len();
    if n < 100 {
        return Err(Error::InsufficientDraws(format!(
            "effective sample size needs at least 100 draws, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = draws.iter().sum::<f64>() / nf;
    let c0 = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nf;
    if c0 == 0.0 {
        return Err(Error::EssUndefined("draws column is constant".into()));
    }
    let autocov = |k: usize| -> f64 {
        let mut s = 0.0;
        for t in 0..(n - k) {
            s += (draws[t] - mean) * (draws[t + k] - mean);
        }
        s / nf
    };
    // Sum Geyer pairs (rho_{2m}, rho_{2m+1}) while they stay positive.
    let mut pair_sum = 1.0 + autocov(1) / c0; // m = 0: rho_0 + rho_1
    let mut lag = 2;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        pair_sum += pair;
        lag += 2;
    }
    let tau = 2.0 * pair_sum - 1.0;
    if tau <= 0.0 {
        // Strongly antithetic draws: cap at the number of draws.
        return Ok(nf);
    }
    Ok((nf / tau).min(nf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PriorOnly;
    use ndarray::array;
    use rand::Rng;

    fn tiny_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |(_, j)| {
            if j == 0 {
                1.0
            } else {
                rng.random::<f64>() * 2.0 - 1.0
            }
        });
        let y = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.3)).collect();
        Dataset::new(x, y, vec!["intercept".into(), "x1".into()]).unwrap()
    }

    #[test]
    fn degenerate_scale_keeps_the_proposal_at_the_current_state() {
        let spec = ProposalSpec::isotropic(1e-30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let current = Beta::new(vec![0.5, -0.5]).unwrap();
        let proposed = propose(&current, &spec, &mut rng).unwrap();
        for (a, b) in proposed.values().iter().zip(current.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn proposal_sequence_is_seed_deterministic() {
        let spec = ProposalSpec::isotropic(0.5).unwrap();
        let current = Beta::zeros(3);
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let a = propose(&current, &spec, &mut r1).unwrap();
            let b = propose(&current, &spec, &mut r2).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn proposal_moments_match_the_law_of_large_numbers() {
        let spec = ProposalSpec::isotropic(1.0).unwrap();
        let current = Beta::zeros(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sum = [0.0f64; 2];
        let mut sum_sq = [0.0f64; 2];
        let mut sum_cross = 0.0f64;
        let trials = 10_000;
        for _ in 0..trials {
            let p = propose(&current, &spec, &mut rng).unwrap();
            sum[0] += p.values()[0];
            sum[1] += p.values()[1];
            sum_sq[0] += p.values()[0] * p.values()[0];
            sum_sq[1] += p.values()[1] * p.values()[1];
            sum_cross += p.values()[0] * p.values()[1];
        }
        let nf = trials as f64;
        let mean = [sum[0] / nf, sum[1] / nf];
        assert!(mean[0].abs() < 0.05 && mean[1].abs() < 0.05);
        let cov = [
            [sum_sq[0] / nf - mean[0] * mean[0], sum_cross / nf - mean[0] * mean[1]],
            [sum_cross / nf - mean[0] * mean[1], sum_sq[1] / nf - mean[1] * mean[1]],
        ];
        let frob = ((cov[0][0] - 1.0).powi(2)
            + cov[0][1].powi(2)
            + cov[1][0].powi(2)
            + (cov[1][1] - 1.0).powi(2))
        .sqrt();
        assert!(frob < 0.1, "covariance Frobenius distance {frob}");
    }

    #[test]
    fn config_validation_rejects_bad_lengths() {
        let config = ChainConfig::new(100, 100, 1, 0);
        assert!(matches!(config.validate(2), Err(Error::Config(_))));
        let config = ChainConfig::new(100, 10, 0, 0);
        assert!(matches!(config.validate(2), Err(Error::Config(_))));
        let mut config = ChainConfig::new(100, 10, 1, 0);
        config.init = Some(Beta::zeros(3));
        assert!(matches!(config.validate(2), Err(Error::Dimension(_))));
    }

    #[test]
    fn kept_draw_count_follows_the_floor_rule() {
        let config = ChainConfig::new(2000, 100, 20, 0);
        assert_eq!(config.kept_draws(), 95);
        let ds = tiny_dataset(40, 3);
        let prior = PriorSpec::isotropic(2, 100.0, 1.0).unwrap();
        let proposal = ProposalSpec::isotropic(0.25).unwrap();
        let out = mh_run(&ds, &prior, &proposal, &config, 1).unwrap();
        assert_eq!(out.kept_draws(), 95);
        assert_eq!(out.exact_evals, 2001);
        assert_eq!(out.stage1_proposals, 2000);
    }

    #[test]
    fn near_zero_scale_accepts_almost_everything() {
        let ds = tiny_dataset(30, 5);
        let prior = PriorSpec::isotropic(2, 100.0, 1.0).unwrap();
        let proposal = ProposalSpec::isotropic(1e-30).unwrap();
        let config = ChainConfig::new(2000, 100, 1, 11);
        let out = mh_run(&ds, &prior, &proposal, &config, 1).unwrap();
        assert!(out.acceptance_rate() > 0.999);
    }

    #[test]
    fn chains_are_bitwise_deterministic_per_seed_and_worker_count() {
        let ds = tiny_dataset(6000, 8);
        let prior = PriorSpec::isotropic(2, 100.0, 1.0).unwrap();
        let proposal = ProposalSpec::isotropic(0.02).unwrap();
        let config = ChainConfig::new(400, 50, 5, 123);
        let base = mh_run(&ds, &prior, &proposal, &config, 1).unwrap();
        for workers in [2, 16] {
            let other = mh_run(&ds, &prior, &proposal, &config, workers).unwrap();
            assert_eq!(base.draws, other.draws);
        }
        let again = mh_run(&ds, &prior, &proposal, &config, 1).unwrap();
        assert_eq!(base.draws, again.draws);
    }

    #[test]
    fn exhaustive_subsample_chain_matches_exact_chain_bitwise() {
        let ds = tiny_dataset(300, 21);
        let prior = PriorSpec::isotropic(2, 100.0, 1.0).unwrap();
        let proposal = ProposalSpec::isotropic(0.05).unwrap();
        let config = ChainConfig::new(1500, 100, 2, 77);
        let n0 = build_index(&ds).unwrap().sampled_class_size();
        let exact = mh_run(&ds, &prior, &proposal, &config, 1).unwrap();
        let sub = subsampling_mh_run(
            &ds,
            &prior,
            &proposal,
            &config,
            n0,
            RefreshSchedule::Fixed,
            1,
        )
        .unwrap();
        assert_eq!(exact.draws, sub.draws);
        assert_eq!(sub.exact_evals, 0);
        let two = two_stage_mh_run(
            &ds,
            &prior,
            &proposal,
            &config,
            n0,
            RefreshSchedule::Fixed,
            1,
        )
        .unwrap();
        assert_eq!(exact.draws, two.draws);
        // Stage two never rejects at the boundary: rho = 1 exactly.
        assert_eq!(two.stage2_accepts, two.stage1_promotions);
    }

    #[test]
    fn two_stage_counters_satisfy_the_cost_invariants() {
        let ds = tiny_dataset(500, 33);
        let prior = PriorSpec::isotropic(2, 100.0, 1.0).unwrap();
        let proposal = ProposalSpec::isotropic(0.1).unwrap();
        let config = ChainConfig::new(3000, 200, 4, 5);
        let n0 = build_index(&ds).unwrap().sampled_class_size();
        let out = two_stage_mh_run(
            &ds,
            &prior,
            &proposal,
            &config,
            (n0 / 10).max(1),
            RefreshSchedule::Fixed,
            1,
        )
        .unwrap();
        assert_eq!(out.exact_evals, out.stage1_promotions + 1);
        assert!(out.stage2_accepts <= out.stage1_promotions);
        assert!(out.stage1_promotions <= out.stage1_proposals);
        assert_eq!(out.stage1_proposals, 3000);
        assert!(out.approx_evals >= out.stage1_proposals);
    }

    #[test]
    fn refresh_schedule_redraws_and_is_recorded() {
        let ds = tiny_dataset(400, 55);
        let prior = PriorSpec::isotropic(2, 100.0, 1.0).unwrap();
        let proposal = ProposalSpec::isotropic(0.1).unwrap();
        let config = ChainConfig::new(500, 100, 2, 6);
        let n0 = build_index(&ds).unwrap().sampled_class_size();
        let out = subsampling_mh_run(
            &ds,
            &prior,
            &proposal,
            &config,
            (n0 / 4).max(1),
            RefreshSchedule::EveryIterations(50),
            1,
        )
        .unwrap();
        let meta = out.subsample_meta.as_ref().unwrap();
        assert_eq!(meta.refresh, RefreshSchedule::EveryIterations(50));
        // Refresh fires at t = 51, 101, ..., 451.
        assert_eq!(meta.refresh_count, 9);
        assert!(out.approx_evals > 500);
        assert!(matches!(
            subsampling_mh_run(
                &ds,
                &prior,
                &proposal,
                &config,
                1,
                RefreshSchedule::EveryIterations(0),
                1
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn prior_only_target_runs_and_covers_the_prior() {
        let prior = PriorSpec::isotropic(1, 1.0, 1.0).unwrap();
        let target = PriorOnly { prior: &prior };
        let proposal = ProposalSpec::isotropic(1.0).unwrap();
        let config = ChainConfig::new(5000, 500, 1, 8);
        let out = run_metropolis(&target, &proposal, &config, "prior-only").unwrap();
        let mean = out.draws.column(0).mean().unwrap();
        assert!(mean.abs() < 0.15, "prior chain mean {mean}");
    }

    #[test]
    fn result_one_ratio_matches_the_direct_form_and_is_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        for _ in 0..1000 {
            let at = rng.random::<f64>() * 40.0 - 20.0;
            let et = rng.random::<f64>() * 40.0 - 20.0;
            let ap = rng.random::<f64>() * 40.0 - 20.0;
            let ep = rng.random::<f64>() * 40.0 - 20.0;
            let rho = two_stage_log_acceptance(at, et, ap, ep).exp();
            let direct = ((at + ep) - (ap + et)).exp().min(1.0);
            assert!((rho - direct).abs() <= 1e-12);
            let c = rng.random::<f64>() * 100.0 - 50.0;
            let shifted = two_stage_log_acceptance(at + c, et + c, ap + c, ep + c).exp();
            assert!((rho - shifted).abs() <= 1e-12);
        }
    }

    #[test]
    fn ess_recovers_iid_and_duplicated_structures() {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let iid: Vec<f64> = (0..10_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let ess = effective_sample_size(&iid).unwrap();
        assert!(
            (ess - 10_000.0).abs() / 10_000.0 < 0.15,
            "iid ESS {ess} too far from 10000"
        );
        // Duplicated pairs: lag-1 autocorrelation 1/2, so ESS ~= n/2.
        let mut pairs = Vec::with_capacity(10_000);
        for _ in 0..5_000 {
            let z: f64 = StandardNormal.sample(&mut rng);
            pairs.push(z);
            pairs.push(z);
        }
        let ess = effective_sample_size(&pairs).unwrap();
        assert!(
            (ess - 5_000.0).abs() / 5_000.0 < 0.15,
            "paired ESS {ess} too far from 5000"
        );
        let constant = vec![1.5; 200];
        assert!(matches!(
            effective_sample_size(&constant),
            Err(Error::EssUndefined(_))
        ));
        assert!(matches!(
            effective_sample_size(&[1.0; 50]),
            Err(Error::InsufficientDraws(_))
        ));
    }

    #[test]
    fn adaptation_moves_acceptance_toward_the_target() {
        let ds = tiny_dataset(600, 71);
        let prior = PriorSpec::isotropic(2, 100.0, 1.0).unwrap();
        // Start with a hopeless scale; adaptation has to rescue it.
        let proposal = ProposalSpec::isotropic(400.0)
            .unwrap()
            .with_adaptation(0.234)
            .unwrap();
        let config = ChainConfig::new(12_000, 6_000, 1, 15);
        let out = mh_run(&ds, &prior, &proposal, &config, 1).unwrap();
        // Post-burn-in acceptance should sit near the target.
        let rate = out.acceptance_rate();
        assert!(rate > 0.08 && rate < 0.5, "adapted acceptance rate {rate}");
        assert!(matches!(
            ProposalSpec::isotropic(1.0).unwrap().with_adaptation(0.99),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn matrix_proposal_requires_matching_dimension() {
        let cov = array![[1.0, 0.0], [0.0, 1.0]];
        let spec = ProposalSpec::matrix(cov).unwrap();
        let current = Beta::zeros(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(
            propose(&current, &spec, &mut rng),
            Err(Error::Dimension(_))
        ));
    }
}
