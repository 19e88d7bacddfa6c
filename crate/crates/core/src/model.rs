//! Distributional building blocks of the destructive negative-binomial cure
//! rate model: covariate links, Weibull progression times, the negative
//! binomial laws of the initial and active risk counts, and the resulting
//! improper population survival and density functions.
//!
//! Every count probability is computed in log space through `ln_gamma` and
//! exponentiated last, so small dispersions (large `1/phi`) do not overflow.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Upper bound applied to the Weibull cdf inside [`pop_density`].
const CDF_CEILING: f64 = 1.0 - 1e-16;

/// Full parameter vector of the model.
///
/// The flat layout used by the optimizer is
/// `[phi, beta1[0..q1], beta2[0..q2], gamma1, gamma2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    /// Dispersion of the initial risk count.
    pub phi: f64,
    /// Coefficients of the activation-probability link; `beta1[0]` is the intercept.
    pub beta1: Vec<f64>,
    /// Coefficients of the mean-risk link (no intercept).
    pub beta2: Vec<f64>,
    /// Reciprocal Weibull shape.
    pub gamma1: f64,
    /// Weibull rate (1/time).
    pub gamma2: f64,
}

impl ParamVector {
    pub fn new(phi: f64, beta1: Vec<f64>, beta2: Vec<f64>, gamma1: f64, gamma2: f64) -> Self {
        Self {
            phi,
            beta1,
            beta2,
            gamma1,
            gamma2,
        }
    }

    pub fn q1(&self) -> usize {
        self.beta1.len()
    }

    pub fn q2(&self) -> usize {
        self.beta2.len()
    }

    /// Total number of free parameters, `3 + q1 + q2`.
    pub fn dim(&self) -> usize {
        3 + self.q1() + self.q2()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.phi);
        v.extend_from_slice(&self.beta1);
        v.extend_from_slice(&self.beta2);
        v.push(self.gamma1);
        v.push(self.gamma2);
        v
    }

    /// Rebuild a parameter vector from its flat layout.
    pub fn from_slice(values: &[f64], q1: usize, q2: usize) -> Result<Self> {
        if values.len() != 3 + q1 + q2 {
            return Err(Error::Usage(format!(
                "flat parameter vector has length {}, expected {}",
                values.len(),
                3 + q1 + q2
            )));
        }
        Ok(Self {
            phi: values[0],
            beta1: values[1..1 + q1].to_vec(),
            beta2: values[1 + q1..1 + q1 + q2].to_vec(),
            gamma1: values[1 + q1 + q2],
            gamma2: values[2 + q1 + q2],
        })
    }

    /// Indices of the positivity-constrained coordinates in the flat layout.
    pub fn positive_indices(q1: usize, q2: usize) -> [usize; 3] {
        [0, 1 + q1 + q2, 2 + q1 + q2]
    }
}

/// One observed subject: follow-up time, event indicator and the two
/// covariate vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    /// Observed time, event or censoring (> 0).
    pub time: f64,
    /// `true` when the event was observed, `false` when right-censored.
    pub event: bool,
    /// Covariates of the activation-probability link, leading 1 for the intercept.
    pub x_p: Vec<f64>,
    /// Covariates of the mean-risk link.
    pub x_eta: Vec<f64>,
}

impl Subject {
    pub fn new(time: f64, event: bool, x_p: Vec<f64>, x_eta: Vec<f64>) -> Self {
        Self {
            time,
            event,
            x_p,
            x_eta,
        }
    }
}

/// A non-empty collection of subjects sharing covariate dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    subjects: Vec<Subject>,
    q1: usize,
    q2: usize,
}

impl Dataset {
    /// Validate and wrap subjects. Reports the first offending subject by
    /// zero-based index.
    pub fn new(subjects: Vec<Subject>) -> Result<Self> {
        let first = subjects.first().ok_or_else(|| Error::Data {
            row: 0,
            message: "dataset has no subjects".into(),
        })?;
        let q1 = first.x_p.len();
        let q2 = first.x_eta.len();
        if q1 == 0 || q2 == 0 {
            return Err(Error::Data {
                row: 0,
                message: "both covariate vectors need at least one entry".into(),
            });
        }
        for (row, s) in subjects.iter().enumerate() {
            if !(s.time.is_finite() && s.time > 0.0) {
                return Err(Error::Data {
                    row,
                    message: format!("time must be finite and > 0, got {}", s.time),
                });
            }
            if s.x_p.len() != q1 || s.x_eta.len() != q2 {
                return Err(Error::Data {
                    row,
                    message: format!(
                        "covariate lengths ({}, {}) differ from ({q1}, {q2})",
                        s.x_p.len(),
                        s.x_eta.len()
                    ),
                });
            }
            if s.x_p[0] != 1.0 {
                return Err(Error::Data {
                    row,
                    message: "first p-covariate must be the intercept 1".into(),
                });
            }
            if s.x_p.iter().chain(&s.x_eta).any(|v| !v.is_finite()) {
                return Err(Error::Data {
                    row,
                    message: "non-finite covariate".into(),
                });
            }
        }
        Ok(Self { subjects, q1, q2 })
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn q1(&self) -> usize {
        self.q1
    }

    pub fn q2(&self) -> usize {
        self.q2
    }

    /// New dataset made of the rows at `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let subjects = indices
            .iter()
            .map(|&i| {
                self.subjects
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Usage(format!("row index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subjects)
    }

    pub fn into_subjects(self) -> Vec<Subject> {
        self.subjects
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dims(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "{what}: covariate length {} != coefficient length {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Domain(format!("p must lie in [0, 1], got {p}")))
    }
}

/// Logistic function evaluated in the sign-split form so neither branch
/// overflows.
pub fn logistic(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Activation probability `p = logistic(x_p . beta1)`.
pub fn logistic_link(x_p: &[f64], beta1: &[f64]) -> Result<f64> {
    check_dims(x_p, beta1, "logistic link")?;
    Ok(logistic(dot(x_p, beta1)))
}

/// Mean-risk parameter `eta = exp(x_eta . beta2)`.
pub fn loglinear_link(x_eta: &[f64], beta2: &[f64]) -> Result<f64> {
    check_dims(x_eta, beta2, "log-linear link")?;
    Ok(dot(x_eta, beta2).exp())
}

/// Weibull progression-time cdf `1 - exp(-(gamma2 y)^(1/gamma1))`.
pub fn weibull_cdf(y: f64, gamma1: f64, gamma2: f64) -> Result<f64> {
    check_positive("gamma1", gamma1)?;
    check_positive("gamma2", gamma2)?;
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {y}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    Ok(-(-(gamma2 * y).powf(1.0 / gamma1)).exp_m1())
}

/// Weibull progression-time density.
pub fn weibull_pdf(y: f64, gamma1: f64, gamma2: f64) -> Result<f64> {
    check_positive("gamma1", gamma1)?;
    check_positive("gamma2", gamma2)?;
    if !(y > 0.0) || y.is_nan() {
        return Err(Error::Domain(format!("density needs time > 0, got {y}")));
    }
    if y.is_infinite() {
        return Ok(0.0);
    }
    let log_scaled = (gamma2 * y).ln() / gamma1;
    let z = log_scaled.exp();
    Ok((log_scaled - gamma1.ln() - y.ln() - z).exp())
}

/// Log mass of a negative binomial count with the given mean and dispersion.
/// A zero mean is the point mass at 0.
fn ln_nb_mass(m: u64, mean: f64, phi: f64) -> f64 {
    if mean == 0.0 {
        return if m == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let r = 1.0 / phi;
    let scaled = phi * mean;
    let mf = m as f64;
    let log_coeff = if m == 0 {
        0.0
    } else {
        ln_gamma(mf + r) - ln_gamma(r) - ln_gamma(mf + 1.0)
    };
    log_coeff + mf * (scaled.ln() - scaled.ln_1p()) - r * scaled.ln_1p()
}

/// Mass function of the initial number of risks `M`, negative binomial with
/// mean `eta` and dispersion `phi`.
pub fn nb_pmf(m: u64, eta: f64, phi: f64) -> Result<f64> {
    check_positive("eta", eta)?;
    check_positive("phi", phi)?;
    Ok(ln_nb_mass(m, eta, phi).exp())
}

/// Mass function of the number of active risks `D` after thinning each of
/// the `M` initial risks with survival probability `p`.
pub fn active_risk_pmf(d: u64, eta: f64, phi: f64, p: f64) -> Result<f64> {
    check_positive("eta", eta)?;
    check_positive("phi", phi)?;
    check_probability(p)?;
    Ok(ln_nb_mass(d, eta * p, phi).exp())
}

/// Sum a count pmf from 0 upwards until the accumulated mass reaches
/// `1 - 1e-12` or `100_000` terms have been added. Returns the sum and the
/// number of terms used.
pub fn truncated_mass<F>(mut pmf: F) -> Result<(f64, u64)>
where
    F: FnMut(u64) -> Result<f64>,
{
    let mut total = 0.0;
    let mut m = 0;
    while m < 100_000 {
        total += pmf(m)?;
        m += 1;
        if total >= 1.0 - 1e-12 {
            break;
        }
    }
    Ok((total, m))
}

fn check_model_params(eta: f64, p: f64, phi: f64) -> Result<()> {
    check_positive("eta", eta)?;
    check_positive("phi", phi)?;
    check_probability(p)
}

/// Population (improper) survival function `{1 + phi eta p F(y)}^(-1/phi)`.
pub fn pop_survival(y: f64, eta: f64, p: f64, phi: f64, gamma1: f64, gamma2: f64) -> Result<f64> {
    check_model_params(eta, p, phi)?;
    let cdf = weibull_cdf(y, gamma1, gamma2)?;
    Ok((-(phi * eta * p * cdf).ln_1p() / phi).exp())
}

/// Population density, the negative derivative of [`pop_survival`] in `y`.
pub fn pop_density(y: f64, eta: f64, p: f64, phi: f64, gamma1: f64, gamma2: f64) -> Result<f64> {
    check_model_params(eta, p, phi)?;
    let f = weibull_pdf(y, gamma1, gamma2)?;
    let cdf = weibull_cdf(y, gamma1, gamma2)?.clamp(0.0, CDF_CEILING);
    let a = phi * eta * p * cdf;
    let survival = (-a.ln_1p() / phi).exp();
    Ok(eta * p * f * survival / (1.0 + a))
}

/// Cure rate `p0 = {1 / (1 + phi eta p)}^(1/phi)`.
pub fn cure_rate(eta: f64, p: f64, phi: f64) -> Result<f64> {
    check_model_params(eta, p, phi)?;
    Ok((-(phi * eta * p).ln_1p() / phi).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn logistic_link_values() {
        assert_eq!(logistic_link(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.5);
        let p = logistic_link(&[1.0, 2.92], &[-5.841, 1.183]).unwrap();
        // logistic(-2.38664) by hand
        assert!((p - 0.08419).abs() < 1e-4, "{p}");
        let hi = logistic_link(&[1000.0], &[1.0]).unwrap();
        assert!(hi > 1.0 - 1e-12 && hi <= 1.0);
        let lo = logistic_link(&[-1000.0], &[1.0]).unwrap();
        assert!(lo >= 0.0 && lo.is_finite());
        assert!(matches!(
            logistic_link(&[1.0], &[1.0, 2.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn loglinear_link_values() {
        assert_eq!(loglinear_link(&[0.0], &[7.0]).unwrap(), 1.0);
        assert_relative_eq!(
            loglinear_link(&[1.0], &[1.099]).unwrap(),
            3.0012,
            epsilon = 1e-4
        );
        assert_eq!(loglinear_link(&[2.0, -1.0], &[0.5, 1.0]).unwrap(), 1.0);
        assert!(loglinear_link(&[], &[1.0]).is_err());
    }

    #[test]
    fn weibull_values_and_domain() {
        assert_eq!(weibull_cdf(0.0, 0.3, 0.2).unwrap(), 0.0);
        assert_relative_eq!(
            weibull_cdf(2.0, 1.0, 0.5).unwrap(),
            1.0 - (-1.0f64).exp(),
            max_relative = 1e-14
        );
        assert!((1.0 - weibull_cdf(1e9, 0.215, 0.183).unwrap()).abs() < 1e-15);
        assert_relative_eq!(
            weibull_pdf(2.0, 1.0, 0.5).unwrap(),
            0.5 * (-1.0f64).exp(),
            max_relative = 1e-14
        );
        assert!(matches!(weibull_cdf(1.0, 0.0, 0.2), Err(Error::Domain(_))));
        assert!(matches!(weibull_cdf(1.0, 0.3, -1.0), Err(Error::Domain(_))));
        assert!(matches!(weibull_pdf(0.0, 0.3, 0.2), Err(Error::Domain(_))));
        assert!(matches!(weibull_pdf(-1.0, 0.3, 0.2), Err(Error::Domain(_))));
    }

    #[test]
    fn weibull_pdf_is_cdf_derivative() {
        let (y, g1, g2) = (3.0, 0.316, 0.179);
        let h = 1e-6;
        let fd =
            (weibull_cdf(y + h, g1, g2).unwrap() - weibull_cdf(y - h, g1, g2).unwrap()) / (2.0 * h);
        let f = weibull_pdf(y, g1, g2).unwrap();
        assert!(((fd - f) / f).abs() < 1e-6, "{fd} vs {f}");
    }

    #[test]
    fn nb_geometric_special_case() {
        assert_relative_eq!(nb_pmf(0, 1.0, 1.0).unwrap(), 0.5, max_relative = 1e-14);
        assert_relative_eq!(nb_pmf(1, 1.0, 1.0).unwrap(), 0.25, max_relative = 1e-14);
        assert_relative_eq!(
            nb_pmf(4, 1.0, 1.0).unwrap(),
            0.5f64.powi(5),
            max_relative = 1e-13
        );
        assert!(matches!(nb_pmf(0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(nb_pmf(0, 1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn nb_normalises() {
        let total: f64 = (0..=2000).map(|m| nb_pmf(m, 3.0, 0.5).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn nb_small_dispersion_does_not_overflow() {
        // 1/phi = 1e6: Gamma(m + 1/phi) alone would overflow.
        let p = nb_pmf(3, 3.0, 1e-6).unwrap();
        let poisson = (-3.0f64).exp() * 27.0 / 6.0;
        assert_relative_eq!(p, poisson, max_relative = 1e-4);
    }

    #[test]
    fn active_risk_boundaries() {
        assert_eq!(active_risk_pmf(0, 3.0, 0.5, 0.0).unwrap(), 1.0);
        assert_eq!(active_risk_pmf(1, 3.0, 0.5, 0.0).unwrap(), 0.0);
        assert_eq!(active_risk_pmf(7, 3.0, 0.5, 0.0).unwrap(), 0.0);
        assert_eq!(
            active_risk_pmf(0, 3.0, 0.5, 0.4).unwrap(),
            cure_rate(3.0, 0.4, 0.5).unwrap()
        );
        assert!(active_risk_pmf(0, 3.0, 0.5, 1.5).is_err());
    }

    #[test]
    fn survival_limits() {
        let s0 = pop_survival(0.0, 3.0, 0.5, 0.5, 0.215, 0.183).unwrap();
        assert_eq!(s0, 1.0);
        let s_inf = pop_survival(1e9, 3.0, 0.5, 0.5, 0.215, 0.183).unwrap();
        assert_relative_eq!(s_inf, 1.75f64.powi(-2), max_relative = 1e-12);
        assert_relative_eq!(s_inf, 0.326531, epsilon = 1e-6);
        let mut prev = 1.0;
        for i in 0..=500 {
            let s = pop_survival(i as f64 * 0.1, 3.0, 0.5, 0.5, 0.215, 0.183).unwrap();
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn density_zero_without_active_risks() {
        for y in [0.1, 1.0, 5.0, 40.0] {
            assert_eq!(pop_density(y, 3.0, 0.0, 0.5, 0.215, 0.183).unwrap(), 0.0);
        }
        assert!(pop_density(0.0, 3.0, 0.5, 0.5, 0.215, 0.183).is_err());
    }

    #[test]
    fn density_at_saturation_is_finite() {
        let d = pop_density(1e6, 3.0, 0.5, 0.5, 0.215, 0.183).unwrap();
        assert!(d.is_finite() && d >= 0.0);
    }

    #[test]
    fn cure_rate_values() {
        assert_eq!(cure_rate(3.0, 0.0, 0.5).unwrap(), 1.0);
        assert_relative_eq!(cure_rate(1.0, 1.0, 1.0).unwrap(), 0.5, max_relative = 1e-15);
        assert!(cure_rate(0.0, 0.5, 0.5).is_err());
        assert!(cure_rate(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn cure_rate_strictly_decreasing() {
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
        for phi in [0.2, 0.5, 2.0] {
            for w in grid.windows(2) {
                assert!(cure_rate(2.0, w[1], phi).unwrap() < cure_rate(2.0, w[0], phi).unwrap());
                assert!(
                    cure_rate(w[1] * 10.0, 0.5, phi).unwrap()
                        < cure_rate(w[0] * 10.0, 0.5, phi).unwrap()
                );
            }
        }
    }

    #[test]
    fn param_vector_layout() {
        let theta = ParamVector::new(0.5, vec![-1.0, 0.3], vec![1.1], 0.2, 0.18);
        let flat = theta.to_vec();
        assert_eq!(flat, vec![0.5, -1.0, 0.3, 1.1, 0.2, 0.18]);
        assert_eq!(ParamVector::from_slice(&flat, 2, 1).unwrap(), theta);
        assert_eq!(ParamVector::positive_indices(2, 1), [0, 4, 5]);
        assert!(ParamVector::from_slice(&flat, 1, 1).is_err());
    }

    #[test]
    fn dataset_validation() {
        let ok = Subject::new(1.0, true, vec![1.0, 2.0], vec![1.0]);
        assert!(Dataset::new(vec![ok.clone()]).is_ok());
        assert!(Dataset::new(vec![]).is_err());
        let bad_time = Subject::new(0.0, false, vec![1.0, 2.0], vec![1.0]);
        assert_eq!(
            Dataset::new(vec![ok.clone(), bad_time]).unwrap_err(),
            Error::Data {
                row: 1,
                message: "time must be finite and > 0, got 0".into()
            }
        );
        let no_intercept = Subject::new(1.0, false, vec![2.0, 2.0], vec![1.0]);
        assert!(Dataset::new(vec![no_intercept]).is_err());
        let ragged = Subject::new(1.0, false, vec![1.0], vec![1.0]);
        assert!(Dataset::new(vec![ok, ragged]).is_err());
    }
}
