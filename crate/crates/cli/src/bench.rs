//! Benchmark mode: repeated timed runs per manifest, median iterations per
//! second, and speed ratios against the parallel-MH baseline.

use std::fmt::Write as _;
use std::path::Path;

use logitmc::error::{Error, Result};

use crate::manifest::{Method, RunManifest};
use crate::runner::{load_dataset, run_method, FitResult};

/// Runs shorter than this are too close to timer resolution to trust.
const MIN_TRUSTED_SECONDS: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub method: String,
    pub workers: usize,
    pub median_iterations_per_second: f64,
    pub per_core_iterations_per_second: f64,
    /// Speed ratio against the parallel-MH baseline; None for the baseline
    /// itself (printed as "--" to match the reference table layout).
    pub ratio_vs_parallel: Option<f64>,
}

fn wall_and_rate(result: &FitResult) -> (f64, f64) {
    match result {
        FitResult::Chain(c) => (c.wall_seconds, c.iterations_per_second()),
        FitResult::Ensemble(e) => {
            let wall = e
                .per_partition
                .iter()
                .map(|c| c.wall_seconds)
                .fold(0.0f64, f64::max);
            let rate = e
                .per_partition
                .iter()
                .map(|c| c.iterations_per_second())
                .sum();
            (wall, rate)
        }
    }
}

/// Time every manifest `repeat` times and aggregate medians. The baseline
/// for ratios is the first parallel-mh manifest, else the first manifest.
pub fn run_bench(manifests: &[RunManifest], repeat: usize) -> Result<Vec<BenchRow>> {
    if manifests.is_empty() {
        return Err(Error::Config("bench needs at least one manifest".into()));
    }
    if repeat < 3 {
        return Err(Error::Config(format!(
            "bench needs at least 3 repeats, got {repeat}"
        )));
    }
    let mut rows = Vec::with_capacity(manifests.len());
    for manifest in manifests {
        manifest.validate()?;
        let dataset = load_dataset(manifest)?;
        let mut rates = Vec::with_capacity(repeat);
        for _ in 0..repeat {
            let result = run_method(manifest, &dataset)?;
            let (wall, rate) = wall_and_rate(&result);
            if wall < MIN_TRUSTED_SECONDS {
                return Err(Error::Benchmark(format!(
                    "{} finished in {wall:.4}s, below the {MIN_TRUSTED_SECONDS}s timer \
                     floor; increase iterations or data size",
                    manifest.method.as_str()
                )));
            }
            rates.push(rate);
        }
        rates.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
        let median = rates[rates.len() / 2];
        let workers = manifest.effective_workers();
        rows.push(BenchRow {
            method: manifest.method.as_str().to_string(),
            workers,
            median_iterations_per_second: median,
            per_core_iterations_per_second: median / workers as f64,
            ratio_vs_parallel: None,
        });
    }
    let baseline_idx = manifests
        .iter()
        .position(|m| m.method == Method::ParallelMh)
        .unwrap_or(0);
    let baseline = rows[baseline_idx].median_iterations_per_second;
    for (i, row) in rows.iter_mut().enumerate() {
        if i != baseline_idx {
            row.ratio_vs_parallel = Some(row.median_iterations_per_second / baseline);
        }
    }
    Ok(rows)
}

/// `<out>.bench.csv`: one row per method plus environment metadata.
pub fn write_bench_csv(rows: &[BenchRow], repeat: usize, path: &Path) -> Result<()> {
    let cores = std::thread::available_parallelism()
        .map(std::num::NonZeroUsize::get)
        .unwrap_or(1);
    let mut text = String::new();
    let _ = writeln!(text, "# cores = {cores}, repeats = {repeat}");
    text.push_str("method,workers,iterations_per_second,per_core_per_second,speed_ratio\n");
    for row in rows {
        let ratio = row
            .ratio_vs_parallel
            .map_or("--".to_string(), |r| format!("{r:.4}"));
        let _ = writeln!(
            text,
            "{},{},{:.4},{:.4},{}",
            row.method,
            row.workers,
            row.median_iterations_per_second,
            row.per_core_iterations_per_second,
            ratio
        );
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn render(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>22} {:>22} {:>12}",
        "Method", "Iterations/second", "Per core per second", "Speed Ratio"
    );
    for row in rows {
        let ratio = row
            .ratio_vs_parallel
            .map_or("--".to_string(), |r| format!("{r:.2}"));
        let _ = writeln!(
            out,
            "{:<24} {:>22.1} {:>22.1} {:>12}",
            row.method,
            row.median_iterations_per_second,
            row.per_core_iterations_per_second,
            ratio
        );
    }
    out
}
