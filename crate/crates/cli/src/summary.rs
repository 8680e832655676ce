//! Posterior summary reports: per-coefficient moments, quantiles, effective
//! sample sizes, and Monte Carlo standard errors.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView2;

use logitmc::diagnostics::{mean, quantile_sorted, sample_sd};
use logitmc::error::{Error, Result};
use logitmc::samplers::effective_sample_size;

use crate::runner::RunTotals;

#[derive(Debug, Clone)]
pub struct CoefficientSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
    /// ESS and MCSE are undefined for very short or constant chains.
    pub ess: Option<f64>,
    pub mcse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SummaryReport {
    pub method: String,
    pub coefficients: Vec<CoefficientSummary>,
    pub totals: RunTotals,
}

impl SummaryReport {
    pub fn from_draws(
        method: &str,
        draws: &ArrayView2<f64>,
        names: &[String],
        totals: RunTotals,
    ) -> Result<Self> {
        if names.len() != draws.ncols() {
            return Err(Error::Dimension(format!(
                "{} names for {} draw columns",
                names.len(),
                draws.ncols()
            )));
        }
        if draws.nrows() == 0 {
            return Err(Error::InsufficientDraws("no kept draws".into()));
        }
        let mut coefficients = Vec::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            let column: Vec<f64> = draws.column(j).to_vec();
            let mut sorted = column.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
            let sd = sample_sd(&column);
            let ess = effective_sample_size(&column).ok();
            let mcse = ess.map(|e| sd / e.sqrt());
            coefficients.push(CoefficientSummary {
                name: name.clone(),
                mean: mean(&column),
                sd,
                q025: quantile_sorted(&sorted, 0.025),
                q500: quantile_sorted(&sorted, 0.5),
                q975: quantile_sorted(&sorted, 0.975),
                ess,
                mcse,
            });
        }
        Ok(Self {
            method: method.to_string(),
            coefficients,
            totals,
        })
    }

    /// `<stem>.summary.csv`: one row per coefficient.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("coefficient,mean,sd,q025,q500,q975,ess,mcse\n");
        for c in &self.coefficients {
            let _ = write!(
                text,
                "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},",
                c.name, c.mean, c.sd, c.q025, c.q500, c.q975
            );
            match (c.ess, c.mcse) {
                (Some(ess), Some(mcse)) => {
                    let _ = writeln!(text, "{ess:.9e},{mcse:.9e}");
                }
                _ => {
                    let _ = writeln!(text, ",");
                }
            }
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10} {:>12}",
            "coefficient", "mean", "sd", "2.5%", "50%", "97.5%", "ess", "mcse"
        );
        for c in &self.coefficients {
            let ess = c.ess.map_or("-".to_string(), |e| format!("{e:.0}"));
            let mcse = c.mcse.map_or("-".to_string(), |m| format!("{m:.4e}"));
            let _ = writeln!(
                out,
                "{:<20} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>10} {:>12}",
                c.name, c.mean, c.sd, c.q025, c.q500, c.q975, ess, mcse
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "method {} | acceptance {:.4} | promotions {:.4} | stage-2 acceptance {:.4}",
            self.method,
            t.acceptance_rate(),
            t.promotion_rate(),
            t.stage2_acceptance_among_promoted()
        );
        let _ = writeln!(
            out,
            "exact evals {} | approx evals {} | iterations/s {:.1}",
            t.exact_evals, t.approx_evals, t.iterations_per_second
        );
        out
    }
}
