//! Nonparametric bootstrap standard errors.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::is_feasible;
use crate::model::{Dataset, ParamVector};
use crate::optimizer::{fit, OptimizerConfig};
use crate::simulation::substream;

/// Share of failed resamples above which the result carries a warning.
const FAILURE_WARNING_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleFit {
    /// Flat estimate; `None` when the fit raised an error.
    pub estimate: Option<Vec<f64>>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Standard error per coordinate of the flat parameter layout.
    pub se: Vec<f64>,
    pub b: usize,
    pub failed_count: usize,
    pub resamples: Vec<ResampleFit>,
    pub warning: Option<String>,
}

/// Sample standard deviation (denominator `n - 1`) of each column. Values
/// are shifted by the first row, so a constant column gives exactly zero.
pub fn column_sd(rows: &[&[f64]]) -> Vec<f64> {
    let n = rows.len() as f64;
    let dim = rows.first().map_or(0, |r| r.len());
    (0..dim)
        .map(|j| {
            let shift = rows[0][j];
            let mean = rows.iter().map(|r| r[j] - shift).sum::<f64>() / n;
            let ss = rows
                .iter()
                .map(|r| (r[j] - shift - mean).powi(2))
                .sum::<f64>();
            (ss / (n - 1.0)).sqrt()
        })
        .collect()
}

fn resample_fit(
    data: &Dataset,
    theta_hat: &ParamVector,
    cfg: &OptimizerConfig,
    seed: u64,
    index: usize,
) -> ResampleFit {
    let mut rng = substream(seed, index as u64);
    let n = data.len();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let outcome = data
        .select(&rows)
        .and_then(|resampled| fit(&resampled, theta_hat, cfg));
    match outcome {
        Ok(f) => ResampleFit {
            estimate: Some(f.theta_hat.to_vec()),
            converged: f.converged,
        },
        Err(_) => ResampleFit {
            estimate: None,
            converged: false,
        },
    }
}

/// Bootstrap standard errors from `b` with-replacement resamples of whole
/// subjects. Each resample is refitted from `theta_hat` on its own random
/// stream; only converged refits enter the standard deviation.
pub fn bootstrap_se(
    data: &Dataset,
    theta_hat: &ParamVector,
    b: usize,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<BootstrapResult> {
    if b < 2 {
        return Err(Error::Usage(format!("bootstrap needs B >= 2, got {b}")));
    }
    if !is_feasible(theta_hat) {
        return Err(Error::Domain("bootstrap start value is infeasible".into()));
    }
    cfg.validate()?;
    let resamples: Vec<ResampleFit> = (0..b)
        .into_par_iter()
        .map(|i| resample_fit(data, theta_hat, cfg, seed, i))
        .collect();
    let good: Vec<&[f64]> = resamples
        .iter()
        .filter(|r| r.converged)
        .filter_map(|r| r.estimate.as_deref())
        .collect();
    let failed_count = b - good.len();
    if good.len() < 2 {
        return Err(Error::Inference(format!(
            "only {} of {b} bootstrap refits converged",
            good.len()
        )));
    }
    let warning = (failed_count as f64 > FAILURE_WARNING_FRACTION * b as f64)
        .then(|| format!("{failed_count} of {b} bootstrap refits did not converge"));
    Ok(BootstrapResult {
        se: column_sd(&good),
        b,
        failed_count,
        resamples,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Subject;

    #[test]
    fn column_sd_by_hand() {
        let a = [1.0, 10.0];
        let b = [2.0, 10.0];
        let c = [3.0, 10.0];
        let sd = column_sd(&[&a, &b, &c]);
        assert!((sd[0] - 1.0).abs() < 1e-15);
        assert_eq!(sd[1], 0.0);
    }

    #[test]
    fn b_below_two_rejected() {
        let data = Dataset::new(vec![Subject::new(1.0, true, vec![1.0], vec![1.0])]).unwrap();
        let theta = ParamVector::new(0.5, vec![0.0], vec![0.0], 0.5, 0.5);
        assert!(matches!(
            bootstrap_se(&data, &theta, 1, &OptimizerConfig::default(), 0),
            Err(Error::Usage(_))
        ));
    }
}
