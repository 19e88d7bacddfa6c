use std::path::{Path, PathBuf};
use std::time::Instant;

use dnbcure::model::{cure_rate, logistic_link, loglinear_link};
use dnbcure::simulation::{gen_dataset, substream, SIM_PARAMETERS};
use dnbcure::{
    bootstrap_se, fit, run_mc_study, BootstrapResult, Dataset, OptimizerConfig, ParamVector,
    SimSetting, Status, Variant,
};
use serde::{Deserialize, Serialize};

use crate::data::{read_design, write_simulated, Design, DesignSpec};
use crate::error::{exit, CliError, CliResult};
use crate::manifest::{manifest_path, read_json, write_json, Resolved, RunManifest};
use crate::{BootstrapArgs, Command, FitArgs, GlobalOpts, Invocation, McStudyArgs, SimulateArgs};

/// Sidecar written by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthsFile {
    pub setting: SimSetting,
    pub seed: u64,
    pub parameter_labels: Vec<String>,
    pub truths: ParamVector,
}

/// Report written by `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub design: DesignSpec,
    pub variant: Variant,
    pub optimizer: OptimizerConfig,
    pub n: usize,
    pub events: usize,
    pub parameter_labels: Vec<String>,
    pub theta_hat: ParamVector,
    /// `theta_hat` in the flat layout matching `parameter_labels`.
    pub estimates: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: Status,
    pub initial: ParamVector,
    pub cure_rates: Vec<f64>,
    pub mean_cure_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truths: Option<ParamVector>,
    /// Estimate minus truth, flat layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<Vec<f64>>,
}

/// Report written by `bootstrap`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub seed: u64,
    pub parameter_labels: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub b: usize,
    pub failed_count: usize,
    pub warning: Option<String>,
    pub resamples: Vec<dnbcure::inference::ResampleFit>,
}

/// Anything `--init` accepts: a bare parameter vector, a truths file or a
/// fit report.
#[derive(Deserialize)]
#[serde(untagged)]
enum InitFile {
    Bare(ParamVector),
    Truths { truths: ParamVector },
    Fitted { theta_hat: ParamVector },
}

impl InitFile {
    fn into_params(self) -> ParamVector {
        match self {
            InitFile::Bare(p)
            | InitFile::Truths { truths: p }
            | InitFile::Fitted { theta_hat: p } => p,
        }
    }
}

pub fn dispatch(invocation: Invocation) -> CliResult<i32> {
    let invocation = match invocation.command {
        Command::Replay(args) => {
            let manifest: RunManifest = read_json(&args.manifest)?;
            if matches!(manifest.invocation.command, Command::Replay(_)) {
                return Err(CliError::Usage(
                    "a manifest cannot replay another replay".into(),
                ));
            }
            let mut replayed = manifest.invocation;
            if invocation.global.threads.is_some() {
                replayed.global.threads = invocation.global.threads;
            }
            replayed
        }
        _ => invocation,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(invocation.global.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))?;
    pool.install(|| execute(&invocation))
}

fn execute(invocation: &Invocation) -> CliResult<i32> {
    let started = Instant::now();
    let global = &invocation.global;
    let outcome = match &invocation.command {
        Command::Simulate(args) => simulate(global, args)?,
        Command::Fit(args) => fit_command(global, args)?,
        Command::McStudy(args) => mc_study(global, args)?,
        Command::Bootstrap(args) => bootstrap(global, args)?,
        Command::Replay(_) => unreachable!("replay is resolved in dispatch"),
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: invocation.command.name().into(),
        invocation: invocation.clone(),
        resolved: Resolved {
            seed: outcome.seed,
            threads: rayon::current_num_threads(),
            optimizer: outcome.optimizer,
        },
        inputs: outcome.inputs,
        outputs: outcome.outputs.clone(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        details: outcome.details,
    };
    write_json(&manifest_path(&outcome.outputs[0]), &manifest)?;
    Ok(outcome.exit_code)
}

struct Outcome {
    seed: u64,
    optimizer: OptimizerConfig,
    inputs: Vec<PathBuf>,
    /// The first output names the manifest.
    outputs: Vec<PathBuf>,
    details: serde_json::Value,
    exit_code: i32,
}

fn load_setting(path: &Path, global: &GlobalOpts) -> CliResult<SimSetting> {
    let mut setting: SimSetting = read_json(path)?;
    if let Some(seed) = global.seed {
        setting.seed = seed;
    }
    setting.validate()?;
    Ok(setting)
}

fn simulate(global: &GlobalOpts, args: &SimulateArgs) -> CliResult<Outcome> {
    let setting = load_setting(&args.setting, global)?;
    let mut rng = substream(setting.seed, 0);
    let sim = gen_dataset(&setting, &mut rng)?;
    let truths_path = args
        .truths_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("truths.json"));
    write_simulated(&args.out, &sim)?;
    write_json(
        &truths_path,
        &TruthsFile {
            setting: setting.clone(),
            seed: setting.seed,
            parameter_labels: SIM_PARAMETERS.iter().map(|s| s.to_string()).collect(),
            truths: sim.truths.clone(),
        },
    )?;
    Ok(Outcome {
        seed: setting.seed,
        optimizer: global.optimizer(Variant::Hz),
        inputs: vec![args.setting.clone()],
        outputs: vec![args.out.clone(), truths_path],
        details: serde_json::json!({
            "n": sim.data.len(),
            "dataset_hash": dnbcure::simulation::dataset_hash(&sim.data),
        }),
        exit_code: exit::OK,
    })
}

/// Default start: unit dispersion, zero regression coefficients, unit Weibull
/// shape and a scale matching the median observed time.
pub fn auto_init(data: &Dataset) -> ParamVector {
    let mut times: Vec<f64> = data.subjects().iter().map(|s| s.time).collect();
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    ParamVector::new(
        1.0,
        vec![0.0; data.q1()],
        vec![0.0; data.q2()],
        1.0,
        1.0 / median,
    )
}

fn subject_cure_rates(theta: &ParamVector, data: &Dataset) -> CliResult<Vec<f64>> {
    data.subjects()
        .iter()
        .map(|s| {
            let p = logistic_link(&s.x_p, &theta.beta1)?;
            let eta = loglinear_link(&s.x_eta, &theta.beta2)?;
            Ok(cure_rate(eta, p, theta.phi)?)
        })
        .collect()
}

fn check_dims(what: &str, theta: &ParamVector, design: &Design) -> CliResult<()> {
    if theta.q1() != design.data.q1() || theta.q2() != design.data.q2() {
        return Err(CliError::Usage(format!(
            "{what} has {} p- and {} eta-coefficients, the design has {} ({}) and {} ({})",
            theta.q1(),
            theta.q2(),
            design.data.q1(),
            design.beta1_labels.join(","),
            design.data.q2(),
            design.beta2_labels.join(","),
        )));
    }
    Ok(())
}

fn fit_command(global: &GlobalOpts, args: &FitArgs) -> CliResult<Outcome> {
    let spec = DesignSpec {
        p_covariates: args.p_covariates.clone(),
        eta_covariates: args.eta_covariates.clone(),
        eta_factors: args.eta_factors.clone(),
    };
    let design = read_design(&args.data, &spec)?;
    let mut inputs = vec![args.data.clone()];
    let initial = if args.init == "auto" {
        auto_init(&design.data)
    } else {
        let path = PathBuf::from(&args.init);
        inputs.push(path.clone());
        read_json::<InitFile>(&path)?.into_params()
    };
    check_dims("initial value", &initial, &design)?;
    let truths = match &args.truths {
        Some(path) => {
            inputs.push(path.clone());
            let t = read_json::<InitFile>(path)?.into_params();
            check_dims("truths", &t, &design)?;
            Some(t)
        }
        None => None,
    };
    let cfg = global.optimizer(args.variant);
    let result = fit(&design.data, &initial, &cfg)?;
    let cure_rates = subject_cure_rates(&result.theta_hat, &design.data)?;
    let estimates = result.theta_hat.to_vec();
    let deviation = truths.as_ref().map(|t| {
        estimates
            .iter()
            .zip(t.to_vec())
            .map(|(e, t)| e - t)
            .collect()
    });
    let report = FitReport {
        design: spec,
        variant: args.variant,
        optimizer: cfg.clone(),
        n: design.data.len(),
        events: design.data.subjects().iter().filter(|s| s.event).count(),
        parameter_labels: design.parameter_labels(),
        theta_hat: result.theta_hat.clone(),
        estimates,
        loglik: result.loglik,
        iterations: result.iterations,
        converged: result.converged,
        status: result.status,
        initial,
        mean_cure_rate: cure_rates.iter().sum::<f64>() / cure_rates.len() as f64,
        cure_rates,
        truths,
        deviation,
    };
    write_json(&args.out, &report)?;
    if !result.converged {
        eprintln!(
            "warning: no convergence within {} iterations; report written to {}",
            cfg.k_max,
            args.out.display()
        );
    }
    Ok(Outcome {
        seed: global.seed.unwrap_or(0),
        optimizer: cfg,
        inputs,
        outputs: vec![args.out.clone()],
        details: serde_json::Value::Null,
        exit_code: if result.converged {
            exit::OK
        } else {
            exit::NOT_CONVERGED
        },
    })
}

fn mc_study(global: &GlobalOpts, args: &McStudyArgs) -> CliResult<Outcome> {
    let setting = load_setting(&args.setting, global)?;
    let cfg = global.optimizer(Variant::Hz);
    let report = run_mc_study(&setting, args.reps, &args.variants, &cfg)?;

    let path = &args.out;
    let io = |e: csv::Error| CliError::io(path, e);
    let mut writer = csv::Writer::from_path(path).map_err(io)?;
    writer
        .write_record([
            "parameter",
            "variant",
            "bias",
            "rmse",
            "converged_frac",
            "mean_iters",
        ])
        .map_err(io)?;
    for c in &report.cells {
        writer
            .write_record([
                c.parameter.clone(),
                c.variant.to_string(),
                c.bias.to_string(),
                c.rmse.to_string(),
                c.converged_frac.to_string(),
                c.mean_iters.to_string(),
            ])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))?;

    let mut outputs = vec![args.out.clone()];
    if let Some(replicates) = &args.replicates_out {
        write_json(replicates, &report.replicates)?;
        outputs.push(replicates.clone());
    }
    let hashes: Vec<&str> = report
        .replicates
        .iter()
        .map(|r| r.dataset_hash.as_str())
        .collect();
    Ok(Outcome {
        seed: setting.seed,
        optimizer: cfg,
        inputs: vec![args.setting.clone()],
        outputs,
        details: serde_json::json!({
            "setting": setting,
            "reps": args.reps,
            "variants": args.variants,
            "dataset_hashes": hashes,
        }),
        exit_code: exit::OK,
    })
}

fn bootstrap(global: &GlobalOpts, args: &BootstrapArgs) -> CliResult<Outcome> {
    let fitted: FitReport = read_json(&args.fit_report)?;
    let design = read_design(&args.data, &fitted.design)?;
    check_dims("fit report", &fitted.theta_hat, &design)?;
    let cfg = global.apply(fitted.optimizer.clone());
    let seed = global.seed.unwrap_or(0);
    let BootstrapResult {
        se,
        b,
        failed_count,
        resamples,
        warning,
    } = bootstrap_se(&design.data, &fitted.theta_hat, args.b, &cfg, seed)?;
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }
    write_json(
        &args.out,
        &BootstrapReport {
            seed,
            parameter_labels: design.parameter_labels(),
            theta_hat: fitted.estimates.clone(),
            se,
            b,
            failed_count,
            warning,
            resamples,
        },
    )?;
    Ok(Outcome {
        seed,
        optimizer: cfg,
        inputs: vec![args.data.clone(), args.fit_report.clone()],
        outputs: vec![args.out.clone()],
        details: serde_json::Value::Null,
        exit_code: exit::OK,
    })
}
