//! Run comparison: aligned per-coefficient statistics, pairwise
//! Kolmogorov-Smirnov distances, and shared-edge density exports ready for
//! external plotting.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use logitmc::diagnostics::{histogram, ks_statistic, mean, quantile, sample_sd};
use logitmc::error::{Error, Result};

pub struct ComparisonInput {
    pub label: String,
    pub draws: Array2<f64>,
    pub names: Vec<String>,
}

pub struct CoefficientComparison {
    pub name: String,
    /// Per-run (mean, sd, q025, q500, q975) aligned with the input order.
    pub stats: Vec<(f64, f64, f64, f64, f64)>,
    /// Pairwise KS distances, (i, j, distance) with i < j.
    pub ks: Vec<(usize, usize, f64)>,
    pub bin_edges: Vec<f64>,
    /// Per-run histogram counts over the shared edges.
    pub counts: Vec<Vec<u64>>,
}

pub struct Comparison {
    pub labels: Vec<String>,
    pub coefficients: Vec<CoefficientComparison>,
}

/// Compare two or more runs over the same model.
pub fn compare(inputs: &[ComparisonInput], bins: usize) -> Result<Comparison> {
    if inputs.len() < 2 {
        return Err(Error::Config("compare needs at least two runs".into()));
    }
    let names = &inputs[0].names;
    for input in inputs.iter().skip(1) {
        if &input.names != names {
            return Err(Error::Dimension(format!(
                "coefficient names differ between runs: {:?} vs {:?}",
                names, input.names
            )));
        }
    }
    let mut coefficients = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let columns: Vec<Vec<f64>> = inputs
            .iter()
            .map(|input| input.draws.column(j).to_vec())
            .collect();
        let stats = columns
            .iter()
            .map(|c| {
                (
                    mean(c),
                    sample_sd(c),
                    quantile(c, 0.025),
                    quantile(c, 0.5),
                    quantile(c, 0.975),
                )
            })
            .collect();
        let mut ks = Vec::new();
        for i in 0..columns.len() {
            for k in (i + 1)..columns.len() {
                ks.push((i, k, ks_statistic(&columns[i], &columns[k])?));
            }
        }
        let lo = columns
            .iter()
            .flat_map(|c| c.iter())
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let hi = columns
            .iter()
            .flat_map(|c| c.iter())
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let bin_edges: Vec<f64> = (0..=bins)
            .map(|b| lo + (hi - lo) * b as f64 / bins as f64)
            .collect();
        let counts = columns.iter().map(|c| histogram(c, lo, hi, bins)).collect();
        coefficients.push(CoefficientComparison {
            name: name.clone(),
            stats,
            ks,
            bin_edges,
            counts,
        });
    }
    Ok(Comparison {
        labels: inputs.iter().map(|i| i.label.clone()).collect(),
        coefficients,
    })
}

impl Comparison {
    /// `<out>.compare.csv`: aligned statistics and pairwise KS per
    /// coefficient.
    pub fn write_table_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("coefficient,run,mean,sd,q025,q500,q975\n");
        for c in &self.coefficients {
            for (label, s) in self.labels.iter().zip(&c.stats) {
                let _ = writeln!(
                    text,
                    "{},{label},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                    c.name, s.0, s.1, s.2, s.3, s.4
                );
            }
        }
        text.push_str("coefficient,run_a,run_b,ks\n");
        for c in &self.coefficients {
            for (i, j, d) in &c.ks {
                let _ = writeln!(
                    text,
                    "{},{},{},{:.9e}",
                    c.name, self.labels[*i], self.labels[*j], d
                );
            }
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    /// `<out>.density.csv`: shared-edge binned counts per coefficient and
    /// run, ready for external plotting.
    pub fn write_density_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("coefficient,bin_lo,bin_hi");
        for label in &self.labels {
            let _ = write!(text, ",count_{label}");
        }
        text.push('\n');
        for c in &self.coefficients {
            for b in 0..(c.bin_edges.len() - 1) {
                let _ = write!(
                    text,
                    "{},{:.9e},{:.9e}",
                    c.name,
                    c.bin_edges[b],
                    c.bin_edges[b + 1]
                );
                for counts in &c.counts {
                    let _ = write!(text, ",{}", counts[b]);
                }
                text.push('\n');
            }
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.coefficients {
            let _ = writeln!(out, "coefficient {}", c.name);
            for (label, s) in self.labels.iter().zip(&c.stats) {
                let _ = writeln!(
                    out,
                    "  {label:<24} mean {:>12.5} sd {:>12.5} [{:.5}, {:.5}]",
                    s.0, s.1, s.2, s.4
                );
            }
            for (i, j, d) in &c.ks {
                let _ = writeln!(
                    out,
                    "  KS({}, {}) = {:.5}",
                    self.labels[*i], self.labels[*j], d
                );
            }
        }
        out
    }
}
