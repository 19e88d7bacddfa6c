//! Synthetic data in the image of the melanoma study, and Monte Carlo
//! bias/RMSE studies of the estimators.
//!
//! Covariates: ulceration is Bernoulli; tumour thickness is Weibull (moments
//! matched to the ulcerated group) or exponential (non-ulcerated group).
//! The activation probability is linked to thickness with an intercept and
//! the mean risk to ulceration without one. Lifetimes come from the latent
//! competing-risks construction: an initial negative binomial risk count is
//! thinned binomially, each surviving risk draws a Weibull progression time,
//! and the first one wins unless an exponential censoring time comes first.
//!
//! Every replicate draws from its own ChaCha stream keyed by
//! `(seed, replicate index)`, so all optimizer variants in a study see the
//! same datasets and starting points.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Gamma, Poisson, Weibull};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::likelihood::project;
use crate::model::{dot, logistic, logit, Dataset, ParamVector, Subject};
use crate::optimizer::{fit, OptimizerConfig, Variant};

/// Random stream for replicate `index` of a study seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn default_beta2() -> f64 {
    3f64.ln()
}
fn default_p_low() -> f64 {
    0.3
}
fn default_p_high() -> f64 {
    0.9
}
fn default_ulcer_prob() -> f64 {
    0.44
}
fn default_thick_ulcer_mean() -> f64 {
    4.34
}
fn default_thick_ulcer_var() -> f64 {
    10.37
}
fn default_thick_noulcer_mean() -> f64 {
    1.81
}
fn default_censor_rate() -> f64 {
    0.15
}

/// A simulation scenario. Only `n`, `phi_true`, `gamma1_true` and
/// `gamma2_true` are required in a settings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSetting {
    pub n: usize,
    pub phi_true: f64,
    pub gamma1_true: f64,
    pub gamma2_true: f64,
    #[serde(default = "default_beta2")]
    pub beta2_true: f64,
    #[serde(default = "default_p_low")]
    pub p_low: f64,
    #[serde(default = "default_p_high")]
    pub p_high: f64,
    #[serde(default = "default_ulcer_prob")]
    pub ulcer_prob: f64,
    #[serde(default = "default_thick_ulcer_mean")]
    pub thick_ulcer_mean: f64,
    #[serde(default = "default_thick_ulcer_var")]
    pub thick_ulcer_var: f64,
    #[serde(default = "default_thick_noulcer_mean")]
    pub thick_noulcer_mean: f64,
    /// Rate of the exponential censoring distribution.
    #[serde(default = "default_censor_rate")]
    pub censor_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimSetting {
    pub fn new(n: usize, phi: f64, gamma1: f64, gamma2: f64) -> Self {
        Self {
            n,
            phi_true: phi,
            gamma1_true: gamma1,
            gamma2_true: gamma2,
            beta2_true: default_beta2(),
            p_low: default_p_low(),
            p_high: default_p_high(),
            ulcer_prob: default_ulcer_prob(),
            thick_ulcer_mean: default_thick_ulcer_mean(),
            thick_ulcer_var: default_thick_ulcer_var(),
            thick_noulcer_mean: default_thick_noulcer_mean(),
            censor_rate: default_censor_rate(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        let positives = [
            ("phi_true", self.phi_true),
            ("gamma1_true", self.gamma1_true),
            ("gamma2_true", self.gamma2_true),
            ("thick_ulcer_mean", self.thick_ulcer_mean),
            ("thick_ulcer_var", self.thick_ulcer_var),
            ("thick_noulcer_mean", self.thick_noulcer_mean),
            ("censor_rate", self.censor_rate),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.beta2_true.is_finite() {
            return Err(Error::Config("beta2_true must be finite".into()));
        }
        if !(0.0 < self.p_low && self.p_low < self.p_high && self.p_high < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < p_low < p_high < 1, got ({}, {})",
                self.p_low, self.p_high
            )));
        }
        if !(0.0..=1.0).contains(&self.ulcer_prob) {
            return Err(Error::Config(format!(
                "ulcer_prob must lie in [0, 1], got {}",
                self.ulcer_prob
            )));
        }
        Ok(())
    }
}

/// Shape and scale of a Weibull law with the given mean and variance.
/// The shape is found by bisection on `[0.1, 50]`.
pub fn weibull_moment_match(mean: f64, var: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && var > 0.0) {
        return Err(Error::Config(format!(
            "Weibull moments need positive mean and variance, got ({mean}, {var})"
        )));
    }
    let target = var / (mean * mean);
    // squared coefficient of variation as a function of the shape, decreasing
    let cv2 = |k: f64| (ln_gamma(1.0 + 2.0 / k) - 2.0 * ln_gamma(1.0 + 1.0 / k)).exp() - 1.0;
    let (mut lo, mut hi) = (0.1, 50.0);
    if !(cv2(lo) >= target && cv2(hi) <= target) {
        return Err(Error::Config(format!(
            "no Weibull shape in [0.1, 50] gives squared CV {target}"
        )));
    }
    let mut shape = 0.5 * (lo + hi);
    for _ in 0..200 {
        shape = 0.5 * (lo + hi);
        let r = cv2(shape) - target;
        if r.abs() < 1e-12 || hi - lo < 1e-15 {
            break;
        }
        if r > 0.0 {
            lo = shape;
        } else {
            hi = shape;
        }
    }
    let scale = mean / ln_gamma(1.0 + 1.0 / shape).exp();
    Ok((shape, scale))
}

/// Ulceration status and tumour thickness (mm) of one simulated subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub ulcer: bool,
    pub thickness: f64,
}

impl Covariates {
    fn x_p(&self) -> Vec<f64> {
        vec![1.0, self.thickness]
    }

    fn x_eta(&self) -> Vec<f64> {
        vec![if self.ulcer { 1.0 } else { 0.0 }]
    }
}

pub fn gen_covariates<R: Rng + ?Sized>(
    setting: &SimSetting,
    rng: &mut R,
) -> Result<Vec<Covariates>> {
    if setting.n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let (shape, scale) = weibull_moment_match(setting.thick_ulcer_mean, setting.thick_ulcer_var)?;
    let ulcerated = Weibull::new(scale, shape).map_err(|e| Error::Config(e.to_string()))?;
    let plain =
        Exp::new(1.0 / setting.thick_noulcer_mean).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..setting.n)
        .map(|_| {
            let u: f64 = rng.random();
            if u <= setting.ulcer_prob {
                Covariates {
                    ulcer: true,
                    thickness: ulcerated.sample(rng),
                }
            } else {
                Covariates {
                    ulcer: false,
                    thickness: plain.sample(rng),
                }
            }
        })
        .collect())
}

/// Intercept and slope of the logistic line through `(x_min, p_low)` and
/// `(x_max, p_high)`.
pub fn solve_p_regression(x_min: f64, x_max: f64, p_low: f64, p_high: f64) -> Result<(f64, f64)> {
    if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
        return Err(Error::Config(format!(
            "degenerate covariate range [{x_min}, {x_max}]"
        )));
    }
    if !(0.0 < p_low && p_low <= p_high && p_high < 1.0) {
        return Err(Error::Config(format!(
            "need 0 < p_low <= p_high < 1, got ({p_low}, {p_high})"
        )));
    }
    let slope = (logit(p_high) - logit(p_low)) / (x_max - x_min);
    let intercept = logit(p_low) - slope * x_min;
    Ok((intercept, slope))
}

/// Latent and observed variables of one simulated subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDraw {
    /// Initial number of risks.
    pub m: u64,
    /// Risks still active after thinning.
    pub d: u64,
    pub progression_times: Vec<f64>,
    pub censor_time: f64,
    pub time: f64,
    pub event: bool,
}

/// Negative binomial draw with mean `mean` and dispersion `phi`, as a
/// Poisson count with gamma-distributed rate.
fn sample_nb<R: Rng + ?Sized>(mean: f64, phi: f64, rng: &mut R) -> Result<u64> {
    let rate = Gamma::new(1.0 / phi, phi * mean)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng);
    if !(rate > 0.0) {
        return Ok(0);
    }
    let count: f64 = Poisson::new(rate)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(rng);
    Ok(count as u64)
}

/// Generate one subject's latent risks and observed time. A `censor_rate` of
/// zero disables censoring (`censor_time = inf`), which tests use to observe
/// the uncensored lifetime.
pub fn gen_subject<R: Rng + ?Sized>(
    covariates: Covariates,
    truths: &ParamVector,
    censor_rate: f64,
    rng: &mut R,
) -> Result<LatentDraw> {
    if !crate::likelihood::is_feasible(truths) {
        return Err(Error::Domain("true parameters are infeasible".into()));
    }
    if !(censor_rate >= 0.0) {
        return Err(Error::Domain(format!(
            "censor rate must be >= 0, got {censor_rate}"
        )));
    }
    let p = logistic(dot(&covariates.x_p(), &truths.beta1));
    let eta = dot(&covariates.x_eta(), &truths.beta2).exp();
    let m = sample_nb(eta, truths.phi, rng)?;
    let d = if m == 0 {
        0
    } else {
        Binomial::new(m, p)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sample(rng)
    };
    let censor_time = if censor_rate > 0.0 {
        Exp::new(censor_rate)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sample(rng)
    } else {
        f64::INFINITY
    };
    let progression = Weibull::new(1.0 / truths.gamma2, 1.0 / truths.gamma1)
        .map_err(|e| Error::Domain(e.to_string()))?;
    let progression_times: Vec<f64> = (0..d).map(|_| progression.sample(rng)).collect();
    let first = progression_times
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let (time, event) = if first < censor_time {
        (first, true)
    } else {
        (censor_time, false)
    };
    Ok(LatentDraw {
        m,
        d,
        progression_times,
        censor_time,
        time,
        event,
    })
}

/// One simulated dataset with the truths used to generate it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub data: Dataset,
    pub covariates: Vec<Covariates>,
    /// True parameters, with the intercept and slope solved from this
    /// dataset's thickness range.
    pub truths: ParamVector,
}

pub fn gen_dataset<R: Rng + ?Sized>(setting: &SimSetting, rng: &mut R) -> Result<SimulatedData> {
    setting.validate()?;
    let covariates = gen_covariates(setting, rng)?;
    let (x_min, x_max) = covariates
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c.thickness), hi.max(c.thickness))
        });
    // A single subject has no thickness range; any line through p_low works.
    let (beta0, beta1) = if covariates.len() == 1 {
        (logit(setting.p_low), 0.0)
    } else {
        solve_p_regression(x_min, x_max, setting.p_low, setting.p_high)?
    };
    let truths = ParamVector::new(
        setting.phi_true,
        vec![beta0, beta1],
        vec![setting.beta2_true],
        setting.gamma1_true,
        setting.gamma2_true,
    );
    let subjects = covariates
        .iter()
        .map(|c| {
            let draw = gen_subject(*c, &truths, setting.censor_rate, rng)?;
            Ok(Subject::new(draw.time, draw.event, c.x_p(), c.x_eta()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulatedData {
        data: Dataset::new(subjects)?,
        covariates,
        truths,
    })
}

/// Start value drawn uniformly within 20% of each true coordinate, then
/// projected onto the feasible set.
pub fn initial_guess<R: Rng + ?Sized>(truths: &ParamVector, rng: &mut R) -> Result<ParamVector> {
    let flat: Vec<f64> = truths
        .to_vec()
        .into_iter()
        .map(|t| {
            let half = 0.2 * t.abs();
            let u: f64 = rng.random();
            t - half + 2.0 * half * u
        })
        .collect();
    Ok(project(&ParamVector::from_slice(
        &flat,
        truths.q1(),
        truths.q2(),
    )?))
}

/// Stable SHA-256 fingerprint of a dataset's contents.
pub fn dataset_hash(data: &Dataset) -> String {
    let mut hasher = Sha256::new();
    for s in data.subjects() {
        hasher.update(s.time.to_le_bytes());
        hasher.update([u8::from(s.event)]);
        for v in s.x_p.iter().chain(&s.x_eta) {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Parameter labels for the simulated design, in flat layout order.
pub const SIM_PARAMETERS: [&str; 6] = ["phi", "beta0", "beta1", "beta2", "gamma1", "gamma2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    pub variant: Variant,
    pub estimate: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    pub truths: Vec<f64>,
    pub start: Vec<f64>,
    pub dataset_hash: String,
    pub fits: Vec<ReplicateFit>,
}

/// Bias and RMSE of one parameter under one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCell {
    pub parameter: String,
    pub variant: Variant,
    pub bias: f64,
    pub rmse: f64,
    pub converged_frac: f64,
    pub mean_iters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub setting: SimSetting,
    pub reps: usize,
    pub variants: Vec<Variant>,
    pub parameters: Vec<String>,
    pub cells: Vec<McCell>,
    pub replicates: Vec<Replicate>,
    pub wall_time_secs: f64,
}

impl McReport {
    pub fn cell(&self, parameter: &str, variant: Variant) -> Option<&McCell> {
        self.cells
            .iter()
            .find(|c| c.parameter == parameter && c.variant == variant)
    }
}

fn run_replicate(
    setting: &SimSetting,
    index: usize,
    variants: &[Variant],
    cfg: &OptimizerConfig,
) -> Result<Replicate> {
    let mut rng = substream(setting.seed, index as u64);
    let sim = gen_dataset(setting, &mut rng)?;
    let start = initial_guess(&sim.truths, &mut rng)?;
    let fits = variants
        .iter()
        .map(|&variant| {
            let cfg = cfg.clone().with_variant(variant);
            let result = fit(&sim.data, &start, &cfg)?;
            Ok(ReplicateFit {
                variant,
                estimate: result.theta_hat.to_vec(),
                loglik: result.loglik,
                iterations: result.iterations,
                converged: result.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Replicate {
        index,
        truths: sim.truths.to_vec(),
        start: start.to_vec(),
        dataset_hash: dataset_hash(&sim.data),
        fits,
    })
}

/// Summarise replicate fits into per-parameter, per-variant bias and RMSE.
/// Non-converged fits are included.
pub fn summarize(
    replicates: &[Replicate],
    variants: &[Variant],
    parameters: &[String],
) -> Vec<McCell> {
    let reps = replicates.len() as f64;
    let mut cells = Vec::with_capacity(parameters.len() * variants.len());
    for (j, parameter) in parameters.iter().enumerate() {
        for (v, &variant) in variants.iter().enumerate() {
            let errors: Vec<f64> = replicates
                .iter()
                .map(|r| r.fits[v].estimate[j] - r.truths[j])
                .collect();
            let bias = errors.iter().sum::<f64>() / reps;
            let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / reps).sqrt();
            let converged = replicates.iter().filter(|r| r.fits[v].converged).count();
            let iters: usize = replicates.iter().map(|r| r.fits[v].iterations).sum();
            cells.push(McCell {
                parameter: parameter.clone(),
                variant,
                bias,
                rmse,
                converged_frac: converged as f64 / reps,
                mean_iters: iters as f64 / reps,
            });
        }
    }
    cells
}

/// Monte Carlo study: `reps` replicates of `setting`, each fitted once per
/// variant from a shared start. Replicates run in parallel on the current
/// rayon pool; results are collected in replicate order.
pub fn run_mc_study(
    setting: &SimSetting,
    reps: usize,
    variants: &[Variant],
    cfg: &OptimizerConfig,
) -> Result<McReport> {
    if reps == 0 {
        return Err(Error::Usage(
            "a Monte Carlo study needs at least one replicate".into(),
        ));
    }
    if variants.is_empty() {
        return Err(Error::Usage("no optimizer variants requested".into()));
    }
    setting.validate()?;
    cfg.validate()?;
    let started = Instant::now();
    let replicates = (0..reps)
        .into_par_iter()
        .map(|i| run_replicate(setting, i, variants, cfg))
        .collect::<Result<Vec<_>>>()?;
    let parameters: Vec<String> = SIM_PARAMETERS.iter().map(|s| s.to_string()).collect();
    let cells = summarize(&replicates, variants, &parameters);
    Ok(McReport {
        setting: setting.clone(),
        reps,
        variants: variants.to_vec(),
        parameters,
        cells,
        replicates,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}
