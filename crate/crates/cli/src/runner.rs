//! Shared run machinery: load or generate the dataset, dispatch the method,
//! and aggregate counters for reporting.

use logitmc::consensus::{run_consensus, ConsensusEnsemble, ConsensusKernel, SubsampleSize};
use logitmc::data::{generate, ingest, SchemaSpec, SyntheticSpec, UnknownLevelPolicy};
use logitmc::error::{Error, Result};
use logitmc::estimator::build_index;
use logitmc::model::{Dataset, PriorSpec};
use logitmc::samplers::{mh_run, subsampling_mh_run, two_stage_mh_run, ChainOutput};

use crate::manifest::{Method, RunManifest};

/// The outcome of one fit: a single chain or a consensus ensemble.
pub enum FitResult {
    Chain(ChainOutput),
    Ensemble(ConsensusEnsemble),
}

impl FitResult {
    pub fn combined_draws(&self) -> &ndarray::Array2<f64> {
        match self {
            FitResult::Chain(c) => &c.draws,
            FitResult::Ensemble(e) => &e.combined,
        }
    }

    /// Counter totals: single-chain counters, or sums across partitions.
    pub fn totals(&self) -> RunTotals {
        match self {
            FitResult::Chain(c) => RunTotals::from_chain(c),
            FitResult::Ensemble(e) => {
                let mut totals = RunTotals::default();
                for c in &e.per_partition {
                    totals.stage1_proposals += c.stage1_proposals;
                    totals.stage1_promotions += c.stage1_promotions;
                    totals.stage2_accepts += c.stage2_accepts;
                    totals.exact_evals += c.exact_evals;
                    totals.approx_evals += c.approx_evals;
                    // Chains run concurrently; aggregate throughput is the
                    // sum of per-partition rates.
                    totals.iterations_per_second += c.iterations_per_second();
                }
                totals
            }
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct RunTotals {
    pub stage1_proposals: u64,
    pub stage1_promotions: u64,
    pub stage2_accepts: u64,
    pub exact_evals: u64,
    pub approx_evals: u64,
    pub iterations_per_second: f64,
}

impl RunTotals {
    fn from_chain(c: &ChainOutput) -> Self {
        Self {
            stage1_proposals: c.stage1_proposals,
            stage1_promotions: c.stage1_promotions,
            stage2_accepts: c.stage2_accepts,
            exact_evals: c.exact_evals,
            approx_evals: c.approx_evals,
            iterations_per_second: c.iterations_per_second(),
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.stage2_accepts as f64 / self.stage1_proposals.max(1) as f64
    }

    pub fn promotion_rate(&self) -> f64 {
        self.stage1_promotions as f64 / self.stage1_proposals.max(1) as f64
    }

    pub fn stage2_acceptance_among_promoted(&self) -> f64 {
        if self.stage1_promotions == 0 {
            return 0.0;
        }
        self.stage2_accepts as f64 / self.stage1_promotions as f64
    }
}

/// Load the dataset named by the manifest (file + schema, or synthetic).
pub fn load_dataset(manifest: &RunManifest) -> Result<Dataset> {
    if let Some(synth) = &manifest.data.synthetic {
        let spec = SyntheticSpec {
            n: synth.n,
            true_beta: synth.beta.clone(),
            sparsity_target: synth.sparsity,
            seed: synth.seed,
        };
        return Ok(generate(&spec)?.dataset);
    }
    let file = manifest
        .data
        .file
        .as_ref()
        .ok_or_else(|| Error::Config("no data source in manifest".into()))?;
    let schema_path = manifest
        .data
        .schema
        .as_ref()
        .ok_or_else(|| Error::Config("data.file requires data.schema".into()))?;
    let schema = SchemaSpec::load(schema_path)?;
    let policy = if manifest.strict_levels {
        UnknownLevelPolicy::Abort
    } else {
        UnknownLevelPolicy::DropAndCount
    };
    let outcome = ingest(file, &schema, policy)?;
    if outcome.rows_dropped_missing + outcome.rows_dropped_unknown_level
        + outcome.rows_dropped_bad_numeric
        > 0
    {
        eprintln!(
            "logitmc: note: dropped {} missing, {} unknown-level, {} bad-numeric of {} rows",
            outcome.rows_dropped_missing,
            outcome.rows_dropped_unknown_level,
            outcome.rows_dropped_bad_numeric,
            outcome.rows_read
        );
    }
    Ok(outcome.dataset)
}

fn resolve_count(size: SubsampleSize, dataset: &Dataset) -> Result<usize> {
    let index = build_index(dataset)?;
    size.resolve(index.sampled_class_size())
}

/// Dispatch the manifest's method over a loaded dataset.
pub fn run_method(manifest: &RunManifest, dataset: &Dataset) -> Result<FitResult> {
    let prior = PriorSpec::isotropic(dataset.n_features(), manifest.prior.variance, 1.0)?;
    let proposal = manifest.proposal()?;
    let config = manifest.chain_config()?;
    let workers = manifest.effective_workers();
    match manifest.method {
        Method::Mh => Ok(FitResult::Chain(mh_run(
            dataset, &prior, &proposal, &config, 1,
        )?)),
        Method::ParallelMh => Ok(FitResult::Chain(mh_run(
            dataset, &prior, &proposal, &config, workers,
        )?)),
        Method::Subsample => {
            let a = resolve_count(manifest.subsample_size()?, dataset)?;
            Ok(FitResult::Chain(subsampling_mh_run(
                dataset,
                &prior,
                &proposal,
                &config,
                a,
                manifest.refresh_schedule(),
                workers,
            )?))
        }
        Method::TwoStage => {
            let a = resolve_count(manifest.subsample_size()?, dataset)?;
            Ok(FitResult::Chain(two_stage_mh_run(
                dataset,
                &prior,
                &proposal,
                &config,
                a,
                manifest.refresh_schedule(),
                workers,
            )?))
        }
        Method::Consensus => {
            let p = manifest.params.p.expect("validated");
            Ok(FitResult::Ensemble(run_consensus(
                dataset,
                &prior,
                &proposal,
                &config,
                p,
                ConsensusKernel::Metropolis,
                workers,
            )?))
        }
        Method::ConsensusTwoStage => {
            let p = manifest.params.p.expect("validated");
            Ok(FitResult::Ensemble(run_consensus(
                dataset,
                &prior,
                &proposal,
                &config,
                p,
                ConsensusKernel::TwoStage {
                    a: manifest.subsample_size()?,
                    refresh: manifest.refresh_schedule(),
                },
                workers,
            )?))
        }
    }
}
