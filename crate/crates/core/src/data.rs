//! Dataset ingestion, synthetic data generation, and chain serialization.
//!
//! File formats:
//! - dataset files: comma-delimited UTF-8 with a header row;
//! - schema files: versioned TOML (`version = 1`) mapping columns to the
//!   design matrix (intercept flag, numeric columns, reference-level dummy
//!   coding for categoricals);
//! - chain files: `<stem>.draws.csv` (header = feature names, one kept draw
//!   per row, 17 significant digits so round-trips are lossless) plus
//!   `<stem>.meta.txt` (`key = value` lines with counters and seeds).

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::consensus::ConsensusEnsemble;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::samplers::{ChainOutput, RefreshSchedule, SubsampleMeta};

/// Schema file version understood by this crate.
pub const SCHEMA_VERSION: u32 = 1;
/// Chain/ensemble metadata format version.
pub const CHAIN_FORMAT_VERSION: u32 = 1;

/// Response column and the label that codes as 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseSpec {
    pub column: String,
    pub positive: String,
}

/// One categorical column with reference-level dummy coding. The reference
/// level is explicit and never inferred from data order, so the design
/// matrix is identical for any row ordering of the input file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub column: String,
    pub reference: String,
    pub levels: Vec<String>,
}

/// Mapping from a delimited text file to a design matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub version: u32,
    pub response: ResponseSpec,
    #[serde(default)]
    pub intercept: bool,
    #[serde(default)]
    pub numeric: Vec<String>,
    #[serde(default)]
    pub categorical: Vec<CategoricalSpec>,
}

impl SchemaSpec {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        let mut feature_columns: Vec<&str> = Vec::new();
        feature_columns.extend(self.numeric.iter().map(String::as_str));
        feature_columns.extend(self.categorical.iter().map(|c| c.column.as_str()));
        for (i, col) in feature_columns.iter().enumerate() {
            if *col == self.response.column {
                return Err(Error::Schema(format!(
                    "response column '{col}' also appears as a feature"
                )));
            }
            if feature_columns[..i].contains(col) {
                return Err(Error::Schema(format!("column '{col}' used twice")));
            }
        }
        for cat in &self.categorical {
            if !cat.levels.contains(&cat.reference) {
                return Err(Error::Schema(format!(
                    "reference level '{}' of '{}' is not among its levels",
                    cat.reference, cat.column
                )));
            }
            if cat.levels.len() < 2 {
                return Err(Error::Schema(format!(
                    "categorical '{}' needs at least two levels",
                    cat.column
                )));
            }
        }
        if self.design_width() == 0 {
            return Err(Error::Schema("schema produces an empty design".into()));
        }
        Ok(())
    }

    /// l = intercept + |numeric| + Σ (levels − 1).
    pub fn design_width(&self) -> usize {
        usize::from(self.intercept)
            + self.numeric.len()
            + self
                .categorical
                .iter()
                .map(|c| c.levels.len() - 1)
                .sum::<usize>()
    }

    /// Design column labels in matrix order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.design_width());
        if self.intercept {
            names.push("intercept".to_string());
        }
        names.extend(self.numeric.iter().cloned());
        for cat in &self.categorical {
            for level in cat.levels.iter().filter(|l| **l != cat.reference) {
                names.push(format!("{}={}", cat.column, level));
            }
        }
        names
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let schema: SchemaSpec = toml::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }
}

/// What to do with a row whose categorical value is not a declared level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownLevelPolicy {
    #[default]
    DropAndCount,
    Abort,
}

/// Ingestion result: the dataset plus drop accounting.
#[derive(Debug)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    pub rows_read: usize,
    pub rows_dropped_missing: usize,
    pub rows_dropped_unknown_level: usize,
    pub rows_dropped_bad_numeric: usize,
}

/// Build a design matrix from a delimited file per the schema: intercept
/// column of ones first, numeric columns as-is, categoricals expanded to
/// indicators omitting the reference level. Rows with missing values in
/// used columns are dropped and counted.
pub fn ingest(path: &Path, schema: &SchemaSpec, policy: UnknownLevelPolicy) -> Result<IngestOutcome> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Ingestion(e.to_string()))?
        .clone();
    let column_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in {}", path.display())))
    };

    let response_idx = column_index(&schema.response.column)?;
    let numeric_idx: Vec<usize> = schema
        .numeric
        .iter()
        .map(|c| column_index(c))
        .collect::<Result<_>>()?;
    let categorical_idx: Vec<usize> = schema
        .categorical
        .iter()
        .map(|c| column_index(&c.column))
        .collect::<Result<_>>()?;

    let width = schema.design_width();
    let mut rows: Vec<f64> = Vec::new();
    let mut responses: Vec<u8> = Vec::new();
    let mut rows_read = 0usize;
    let mut dropped_missing = 0usize;
    let mut dropped_unknown = 0usize;
    let mut dropped_bad_numeric = 0usize;

    'records: for (record_no, record) in reader.records().enumerate() {
        let line = record_no + 2; // header is line 1
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        rows_read += 1;

        let used: Vec<usize> = std::iter::once(response_idx)
            .chain(numeric_idx.iter().copied())
            .chain(categorical_idx.iter().copied())
            .collect();
        if used.iter().any(|&i| record.get(i).map_or(true, str::is_empty)) {
            dropped_missing += 1;
            continue;
        }

        let mut row = Vec::with_capacity(width);
        if schema.intercept {
            row.push(1.0);
        }
        for (&idx, name) in numeric_idx.iter().zip(&schema.numeric) {
            let raw = record.get(idx).unwrap_or_default();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    dropped_bad_numeric += 1;
                    let _ = name;
                    continue 'records;
                }
            }
        }
        for (&idx, cat) in categorical_idx.iter().zip(&schema.categorical) {
            let raw = record.get(idx).unwrap_or_default();
            if !cat.levels.iter().any(|l| l == raw) {
                match policy {
                    UnknownLevelPolicy::DropAndCount => {
                        dropped_unknown += 1;
                        continue 'records;
                    }
                    UnknownLevelPolicy::Abort => {
                        return Err(Error::Ingestion(format!(
                            "line {line}: unknown level '{raw}' in column '{}'",
                            cat.column
                        )));
                    }
                }
            }
            for level in cat.levels.iter().filter(|l| **l != cat.reference) {
                row.push(f64::from(u8::from(level == raw)));
            }
        }
        responses.push(u8::from(record.get(response_idx).unwrap_or_default() == schema.response.positive));
        rows.extend_from_slice(&row);
    }

    if responses.is_empty() {
        return Err(Error::Ingestion(format!(
            "no usable rows in {} ({rows_read} read, {dropped_missing} missing, \
             {dropped_unknown} unknown-level, {dropped_bad_numeric} bad-numeric)",
            path.display()
        )));
    }
    let n = responses.len();
    let x = Array2::from_shape_vec((n, width), rows)
        .map_err(|e| Error::Ingestion(e.to_string()))?;
    let dataset = Dataset::new(x, responses, schema.feature_names())?;
    Ok(IngestOutcome {
        dataset,
        rows_read,
        rows_dropped_missing: dropped_missing,
        rows_dropped_unknown_level: dropped_unknown,
        rows_dropped_bad_numeric: dropped_bad_numeric,
    })
}

/// Synthetic sparse-classification data: standard-normal covariates plus an
/// intercept calibrated by bisection so the expected success fraction hits
/// `sparsity_target`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Slope coefficients; the intercept is calibrated, so the design width
    /// is `true_beta.len() + 1`.
    pub true_beta: Vec<f64>,
    pub sparsity_target: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("synthetic n must be positive".into()));
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            return Err(Error::Config(format!(
                "sparsity target must lie in (0, 1), got {}",
                self.sparsity_target
            )));
        }
        if self.true_beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("true beta has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn design_width(&self) -> usize {
        self.true_beta.len() + 1
    }
}

/// A generated dataset with its calibrated ground truth.
#[derive(Debug)]
pub struct SyntheticOutcome {
    pub dataset: Dataset,
    /// Full coefficient vector (calibrated intercept first, then slopes).
    pub true_beta: Vec<f64>,
    pub realized_fraction: f64,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Generate covariates, calibrate the intercept, and draw responses.
/// Deterministic per seed.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticOutcome> {
    spec.validate()?;
    let n = spec.n;
    let k = spec.true_beta.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let covariates = Array2::from_shape_fn((n, k), |_| StandardNormal.sample(&mut rng));
    let mut base = vec![0.0f64; n];
    for (i, mut_row) in covariates.rows().into_iter().enumerate() {
        base[i] = mut_row
            .iter()
            .zip(&spec.true_beta)
            .map(|(x, b)| x * b)
            .sum();
    }

    let target = spec.sparsity_target;
    let mean_at = |b0: f64| -> f64 {
        base.iter().map(|eta| sigmoid(b0 + eta)).sum::<f64>() / n as f64
    };
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    let mut intercept = 0.0;
    let mut calibrated = false;
    for _ in 0..100 {
        intercept = 0.5 * (lo + hi);
        let m = mean_at(intercept);
        if (m - target).abs() <= 1e-3 * target {
            calibrated = true;
            break;
        }
        if m < target {
            lo = intercept;
        } else {
            hi = intercept;
        }
    }
    if !calibrated {
        return Err(Error::Generation(format!(
            "intercept calibration did not converge to {target} within 100 bisection steps"
        )));
    }

    let mut y = Vec::with_capacity(n);
    for eta in &base {
        let pi = sigmoid(intercept + eta);
        y.push(u8::from(rng.random::<f64>() < pi));
    }
    let realized = y.iter().map(|v| f64::from(*v)).sum::<f64>() / n as f64;
    if (realized - target).abs() > 0.2 * target {
        return Err(Error::Generation(format!(
            "realized success fraction {realized:.5} misses target {target:.5} by more \
             than 20% relative; increase n"
        )));
    }

    let mut x = Array2::<f64>::ones((n, k + 1));
    x.slice_mut(ndarray::s![.., 1..]).assign(&covariates);
    let mut names = Vec::with_capacity(k + 1);
    names.push("intercept".to_string());
    names.extend((1..=k).map(|j| format!("x{j}")));
    let dataset = Dataset::new(x, y, names)?;
    let mut true_beta = Vec::with_capacity(k + 1);
    true_beta.push(intercept);
    true_beta.extend_from_slice(&spec.true_beta);
    Ok(SyntheticOutcome {
        dataset,
        true_beta,
        realized_fraction: realized,
    })
}

/// Write a generated dataset as `y,x1,...` (covariates without the
/// intercept column), plus a matching schema file and a ground-truth
/// record.
pub fn write_synthetic(outcome: &SyntheticOutcome, stem: &Path) -> Result<(PathBuf, PathBuf, PathBuf)> {
    let data_path = stem.with_extension("csv");
    let schema_path = stem.with_extension("schema.toml");
    let truth_path = stem.with_extension("truth.txt");

    let ds = &outcome.dataset;
    let k = ds.n_features() - 1;
    let mut w = BufWriter::new(fs::File::create(&data_path)?);
    let mut header = String::from("y");
    for j in 1..=k {
        let _ = write!(header, ",x{j}");
    }
    writeln!(w, "{header}")?;
    for (i, y) in ds.responses().iter().enumerate() {
        let mut line = String::with_capacity(24 * (k + 1));
        let _ = write!(line, "{y}");
        for j in 1..=k {
            let _ = write!(line, ",{:.16e}", ds.design()[(i, j)]);
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;

    let schema = SchemaSpec {
        version: SCHEMA_VERSION,
        response: ResponseSpec {
            column: "y".into(),
            positive: "1".into(),
        },
        intercept: true,
        numeric: (1..=k).map(|j| format!("x{j}")).collect(),
        categorical: Vec::new(),
    };
    schema.save(&schema_path)?;

    let mut t = BufWriter::new(fs::File::create(&truth_path)?);
    writeln!(t, "format_version = {CHAIN_FORMAT_VERSION}")?;
    writeln!(t, "realized_fraction = {:.16e}", outcome.realized_fraction)?;
    for (name, value) in ds.feature_names().iter().zip(&outcome.true_beta) {
        writeln!(t, "{name} = {value:.16e}")?;
    }
    t.flush()?;
    Ok((data_path, schema_path, truth_path))
}

/// Write a draw matrix with feature-name header at 17 significant digits.
pub fn write_draws_csv(path: &Path, draws: &ArrayView2<f64>, names: &[String]) -> Result<()> {
    if names.len() != draws.ncols() {
        return Err(Error::Dimension(format!(
            "{} names for {} columns",
            names.len(),
            draws.ncols()
        )));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{}", names.join(","))?;
    let mut line = String::new();
    for row in draws.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            let _ = write!(line, "{v:.16e}");
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a draw matrix written by [`write_draws_csv`].
pub fn read_draws_csv(path: &Path) -> Result<(Array2<f64>, Vec<String>)> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty draws file".into(),
    })?;
    let header = header?;
    let names: Vec<String> = header.split(',').map(str::to_string).collect();
    let width = names.len();
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut count = 0usize;
        for field in line.split(',') {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad numeric field '{field}'"),
            })?;
            values.push(v);
            count += 1;
        }
        if count != width {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {width} fields, found {count}"),
            });
        }
        rows += 1;
    }
    let draws = Array2::from_shape_vec((rows, width), values)
        .map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
    Ok((draws, names))
}

fn chain_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let mut draws = stem.as_os_str().to_owned();
    draws.push(".draws.csv");
    let mut meta = stem.as_os_str().to_owned();
    meta.push(".meta.txt");
    (PathBuf::from(draws), PathBuf::from(meta))
}

fn refresh_to_string(refresh: RefreshSchedule) -> String {
    match refresh {
        RefreshSchedule::Fixed => "fixed".to_string(),
        RefreshSchedule::EveryIterations(k) => format!("every:{k}"),
    }
}

fn refresh_from_str(raw: &str) -> Result<RefreshSchedule> {
    if raw == "fixed" {
        return Ok(RefreshSchedule::Fixed);
    }
    if let Some(k) = raw.strip_prefix("every:") {
        let k: usize = k.parse().map_err(|_| Error::Parse {
            line: 0,
            message: format!("bad refresh interval '{raw}'"),
        })?;
        return Ok(RefreshSchedule::EveryIterations(k));
    }
    Err(Error::Parse {
        line: 0,
        message: format!("bad refresh schedule '{raw}'"),
    })
}

/// Write a chain as `<stem>.draws.csv` + `<stem>.meta.txt`.
pub fn write_chain(output: &ChainOutput, feature_names: &[String], stem: &Path) -> Result<()> {
    let (draws_path, meta_path) = chain_paths(stem);
    write_draws_csv(&draws_path, &output.draws.view(), feature_names)?;
    let mut w = BufWriter::new(fs::File::create(meta_path)?);
    writeln!(w, "format_version = {CHAIN_FORMAT_VERSION}")?;
    writeln!(w, "method = {}", output.method_tag)?;
    writeln!(w, "iterations = {}", output.iterations)?;
    writeln!(w, "burnin = {}", output.burnin)?;
    writeln!(w, "thinning = {}", output.thinning)?;
    writeln!(w, "seed = {}", output.seed)?;
    writeln!(w, "stage1_proposals = {}", output.stage1_proposals)?;
    writeln!(w, "stage1_promotions = {}", output.stage1_promotions)?;
    writeln!(w, "stage2_accepts = {}", output.stage2_accepts)?;
    writeln!(w, "exact_evals = {}", output.exact_evals)?;
    writeln!(w, "approx_evals = {}", output.approx_evals)?;
    writeln!(w, "wall_seconds = {:.16e}", output.wall_seconds)?;
    if let Some(meta) = &output.subsample_meta {
        writeln!(w, "subsample_a = {}", meta.a)?;
        writeln!(w, "subsample_swapped = {}", meta.swapped)?;
        writeln!(w, "subsample_refresh = {}", refresh_to_string(meta.refresh))?;
        writeln!(w, "subsample_refresh_count = {}", meta.refresh_count)?;
        writeln!(w, "subsample_seed_tag = {}", meta.initial_seed_tag)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_meta_file(path: &Path) -> Result<std::collections::HashMap<String, String>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut map = std::collections::HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or(Error::Parse {
            line: line_no,
            message: format!("expected 'key = value', found '{trimmed}'"),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn meta_field<T: std::str::FromStr>(
    map: &std::collections::HashMap<String, String>,
    key: &str,
) -> Result<T> {
    let raw = map.get(key).ok_or(Error::Parse {
        line: 0,
        message: format!("missing metadata key '{key}'"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        line: 0,
        message: format!("bad value '{raw}' for metadata key '{key}'"),
    })
}

/// Read a chain written by [`write_chain`]; feature names come back from
/// the draws header.
pub fn read_chain(stem: &Path) -> Result<(ChainOutput, Vec<String>)> {
    let (draws_path, meta_path) = chain_paths(stem);
    let (draws, names) = read_draws_csv(&draws_path)?;
    let map = parse_meta_file(&meta_path)?;
    let version: u32 = meta_field(&map, "format_version")?;
    if version != CHAIN_FORMAT_VERSION {
        return Err(Error::Parse {
            line: 0,
            message: format!("unsupported chain format version {version}"),
        });
    }
    let subsample_meta = if map.contains_key("subsample_a") {
        Some(SubsampleMeta {
            a: meta_field(&map, "subsample_a")?,
            swapped: meta_field(&map, "subsample_swapped")?,
            refresh: refresh_from_str(
                map.get("subsample_refresh").map(String::as_str).unwrap_or("fixed"),
            )?,
            refresh_count: meta_field(&map, "subsample_refresh_count")?,
            initial_seed_tag: meta_field(&map, "subsample_seed_tag")?,
        })
    } else {
        None
    };
    let output = ChainOutput {
        draws,
        stage1_proposals: meta_field(&map, "stage1_proposals")?,
        stage1_promotions: meta_field(&map, "stage1_promotions")?,
        stage2_accepts: meta_field(&map, "stage2_accepts")?,
        exact_evals: meta_field(&map, "exact_evals")?,
        approx_evals: meta_field(&map, "approx_evals")?,
        wall_seconds: meta_field(&map, "wall_seconds")?,
        method_tag: meta_field(&map, "method")?,
        subsample_meta,
        iterations: meta_field(&map, "iterations")?,
        burnin: meta_field(&map, "burnin")?,
        thinning: meta_field(&map, "thinning")?,
        seed: meta_field(&map, "seed")?,
    };
    Ok((output, names))
}

/// Write a consensus ensemble: per-partition chains (`<stem>.p<i>`), the
/// combined draw matrix, the partition plan, weights, and ensemble
/// metadata (including that weights were computed on post-thinning draws).
pub fn write_ensemble(
    ensemble: &ConsensusEnsemble,
    feature_names: &[String],
    stem: &Path,
) -> Result<()> {
    for (i, output) in ensemble.per_partition.iter().enumerate() {
        let mut part_stem = stem.as_os_str().to_owned();
        part_stem.push(format!(".p{i}"));
        write_chain(output, feature_names, Path::new(&part_stem))?;
    }
    let mut combined_path = stem.as_os_str().to_owned();
    combined_path.push(".combined.draws.csv");
    write_draws_csv(
        Path::new(&combined_path),
        &ensemble.combined.view(),
        feature_names,
    )?;

    let mut plan_path = stem.as_os_str().to_owned();
    plan_path.push(".plan.csv");
    let mut w = BufWriter::new(fs::File::create(Path::new(&plan_path))?);
    writeln!(w, "row,partition")?;
    for (row, part) in ensemble.plan.assignment().iter().enumerate() {
        writeln!(w, "{row},{part}")?;
    }
    w.flush()?;

    let mut weights_path = stem.as_os_str().to_owned();
    weights_path.push(".weights.csv");
    let mut w = BufWriter::new(fs::File::create(Path::new(&weights_path))?);
    writeln!(w, "partition,row,col,value")?;
    for (i, weight) in ensemble.weights.iter().enumerate() {
        for ((r, c), v) in weight.indexed_iter() {
            writeln!(w, "{i},{r},{c},{v:.16e}")?;
        }
    }
    w.flush()?;

    let mut meta_path = stem.as_os_str().to_owned();
    meta_path.push(".ensemble.txt");
    let mut w = BufWriter::new(fs::File::create(Path::new(&meta_path))?);
    writeln!(w, "format_version = {CHAIN_FORMAT_VERSION}")?;
    writeln!(w, "partitions = {}", ensemble.plan.partition_count())?;
    writeln!(w, "plan_seed = {}", ensemble.plan.seed())?;
    writeln!(w, "weights_computed_on = post-thinning-draws")?;
    for (i, meta) in ensemble.partition_meta.iter().enumerate() {
        writeln!(w, "partition_{i}_kernel = {}", meta.kernel_used)?;
        writeln!(w, "partition_{i}_fell_back = {}", meta.fell_back)?;
        writeln!(w, "partition_{i}_ridged = {}", meta.ridged)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    fn bank_schema() -> SchemaSpec {
        SchemaSpec {
            version: 1,
            response: ResponseSpec {
                column: "outcome".into(),
                positive: "yes".into(),
            },
            intercept: true,
            numeric: vec!["age".into()],
            categorical: vec![
                CategoricalSpec {
                    column: "poutcome".into(),
                    reference: "nonexistent".into(),
                    levels: vec!["nonexistent".into(), "failure".into(), "success".into()],
                },
                CategoricalSpec {
                    column: "contact".into(),
                    reference: "telephone".into(),
                    levels: vec!["telephone".into(), "cellular".into()],
                },
            ],
        }
    }

    #[test]
    fn width_law_counts_intercept_numeric_and_levels() {
        let schema = bank_schema();
        assert_eq!(schema.design_width(), 5);
        assert_eq!(
            schema.feature_names(),
            vec![
                "intercept",
                "age",
                "poutcome=failure",
                "poutcome=success",
                "contact=cellular"
            ]
        );
    }

    #[test]
    fn schema_validation_catches_misuse() {
        let mut schema = bank_schema();
        schema.numeric.push("outcome".into());
        assert!(matches!(schema.validate(), Err(Error::Schema(_))));
        let mut schema = bank_schema();
        schema.categorical[0].reference = "unheard-of".into();
        assert!(matches!(schema.validate(), Err(Error::Schema(_))));
        let mut schema = bank_schema();
        schema.version = 9;
        assert!(matches!(schema.validate(), Err(Error::Schema(_))));
    }

    #[test]
    fn ingest_encodes_the_bank_fixture_as_hand_checked() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bank.csv");
        fs::write(
            &path,
            "outcome,age,poutcome,contact\n\
             yes,30,success,cellular\n\
             no,41,nonexistent,telephone\n\
             no,28,failure,cellular\n\
             yes,55,nonexistent,cellular\n\
             no,36,success,telephone\n",
        )
        .unwrap();
        let outcome = ingest(&path, &bank_schema(), UnknownLevelPolicy::DropAndCount).unwrap();
        let ds = &outcome.dataset;
        assert_eq!(ds.n_features(), 5);
        assert_eq!(ds.responses(), &[1, 0, 0, 1, 0]);
        let expect = array![
            [1.0, 30.0, 0.0, 1.0, 1.0],
            [1.0, 41.0, 0.0, 0.0, 0.0],
            [1.0, 28.0, 1.0, 0.0, 1.0],
            [1.0, 55.0, 0.0, 0.0, 1.0],
            [1.0, 36.0, 0.0, 1.0, 0.0]
        ];
        assert_eq!(ds.design(), &expect);
        assert_eq!(outcome.rows_read, 5);
        assert_eq!(outcome.rows_dropped_missing, 0);
    }

    #[test]
    fn ingest_single_numeric_row() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.csv");
        fs::write(&path, "y,v\n1,7\n").unwrap();
        let schema = SchemaSpec {
            version: 1,
            response: ResponseSpec {
                column: "y".into(),
                positive: "1".into(),
            },
            intercept: true,
            numeric: vec!["v".into()],
            categorical: Vec::new(),
        };
        let outcome = ingest(&path, &schema, UnknownLevelPolicy::DropAndCount).unwrap();
        assert_eq!(outcome.dataset.design(), &array![[1.0, 7.0]]);
    }

    #[test]
    fn ingest_drop_policies_and_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bank.csv");
        fs::write(
            &path,
            "outcome,age,poutcome,contact\n\
             yes,,success,cellular\n\
             no,41,other,telephone\n\
             no,abc,failure,cellular\n\
             yes,55,nonexistent,cellular\n",
        )
        .unwrap();
        let outcome = ingest(&path, &bank_schema(), UnknownLevelPolicy::DropAndCount).unwrap();
        assert_eq!(outcome.rows_read, 4);
        assert_eq!(outcome.rows_dropped_missing, 1);
        assert_eq!(outcome.rows_dropped_unknown_level, 1);
        assert_eq!(outcome.rows_dropped_bad_numeric, 1);
        assert_eq!(outcome.dataset.n_rows(), 1);

        assert!(matches!(
            ingest(&path, &bank_schema(), UnknownLevelPolicy::Abort),
            Err(Error::Ingestion(_))
        ));

        let mut schema = bank_schema();
        schema.numeric = vec!["salary".into()];
        assert!(matches!(
            ingest(&path, &schema, UnknownLevelPolicy::DropAndCount),
            Err(Error::Schema(_))
        ));

        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "outcome,age,poutcome,contact\nyes,,success,cellular\n").unwrap();
        assert!(matches!(
            ingest(&empty, &bank_schema(), UnknownLevelPolicy::DropAndCount),
            Err(Error::Ingestion(_))
        ));
    }

    #[test]
    fn generator_is_seed_deterministic_and_hits_balanced_targets() {
        let spec = SyntheticSpec {
            n: 20_000,
            true_beta: vec![],
            sparsity_target: 0.5,
            seed: 7,
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.dataset.design(), b.dataset.design());
        assert_eq!(a.dataset.responses(), b.dataset.responses());
        assert!((a.realized_fraction - 0.5).abs() < 0.01);
        assert!(a.true_beta[0].abs() < 0.05);
    }

    #[test]
    fn generator_hits_sparse_targets() {
        let spec = SyntheticSpec {
            n: 100_000,
            true_beta: vec![0.5, -0.5],
            sparsity_target: 0.046,
            seed: 11,
        };
        let out = generate(&spec).unwrap();
        assert!(out.realized_fraction > 0.037 && out.realized_fraction < 0.055);
        let n1 = out.dataset.responses().iter().map(|v| usize::from(*v)).sum::<usize>();
        assert_eq!(
            n1,
            (out.realized_fraction * 100_000.0).round() as usize
        );
    }

    #[test]
    fn generator_rejects_bad_specs() {
        let spec = SyntheticSpec {
            n: 0,
            true_beta: vec![],
            sparsity_target: 0.5,
            seed: 1,
        };
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
        let spec = SyntheticSpec {
            n: 10,
            true_beta: vec![],
            sparsity_target: 1.5,
            seed: 1,
        };
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn chain_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let stem = dir.path().join("run");
        let output = ChainOutput {
            draws: array![
                [0.1234567890123456, -1.5e-13],
                [2.0 / 3.0, 1e300],
                [-0.0, 42.0]
            ],
            stage1_proposals: 100,
            stage1_promotions: 40,
            stage2_accepts: 30,
            exact_evals: 41,
            approx_evals: 101,
            wall_seconds: 1.25,
            method_tag: "two-stage".into(),
            subsample_meta: Some(SubsampleMeta {
                a: 16,
                swapped: false,
                refresh: RefreshSchedule::EveryIterations(20),
                refresh_count: 4,
                initial_seed_tag: 987,
            }),
            iterations: 100,
            burnin: 10,
            thinning: 30,
            seed: 5,
        };
        let names = vec!["intercept".to_string(), "x1".to_string()];
        write_chain(&output, &names, &stem).unwrap();
        let (back, back_names) = read_chain(&stem).unwrap();
        assert_eq!(back_names, names);
        assert_eq!(back.draws, output.draws);
        assert_eq!(back.stage1_proposals, 100);
        assert_eq!(back.stage1_promotions, 40);
        assert_eq!(back.stage2_accepts, 30);
        assert_eq!(back.exact_evals, 41);
        assert_eq!(back.approx_evals, 101);
        assert_eq!(back.wall_seconds, 1.25);
        assert_eq!(back.method_tag, "two-stage");
        assert_eq!(back.subsample_meta, output.subsample_meta);
        assert_eq!(back.iterations, 100);
        assert_eq!(back.seed, 5);
    }

    #[test]
    fn malformed_chain_files_report_line_numbers() {
        let dir = tempdir().unwrap();
        let stem = dir.path().join("bad");
        let (draws_path, meta_path) = chain_paths(&stem);
        fs::write(&draws_path, "a,b\n1.0,2.0\n3.0,oops\n").unwrap();
        fs::write(&meta_path, "format_version = 1\n").unwrap();
        match read_chain(&stem) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(&draws_path, "a,b\n1.0,2.0\n").unwrap();
        fs::write(&meta_path, "format_version = 1\nnot a pair\n").unwrap();
        match read_chain(&stem) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
