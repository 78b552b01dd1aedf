//! Executes configured experiments: resolves step-size rules, dispatches the
//! solver, and persists traces and reconstructions.

use crate::config::{Algorithm, ExperimentConfig, RestartSpec, SamplerKindSpec, ScheduleKind};
use crate::images::{write_pgm16, write_raw_f64};
use crate::metrics::{rows_from_trace, to_csv, MetricsRow};
use crate::problems::{build_problem, compute_reference, BuiltProblem};
use std::fmt;
use std::fs;
use std::path::Path;
use stochograd::sampling::SamplerKind;
use stochograd::solvers::deterministic::{
    run_admm, run_condat_vu, run_coordinate_descent, run_fista, run_gd, run_nag, run_pd3o,
    run_pdhg, run_pgd,
};
use stochograd::solvers::stochastic::{
    run_accelerated_vr, run_adaptive, run_sag, run_saga, run_sgd, run_spdhg, run_svrg,
    spdhg_default_steps, AdaptiveVariant, Estimator, EtaRule, SagaForm,
};
use stochograd::solvers::{DecayPower, Momentum, Restart, StepSchedule};
use stochograd::{DenseVector, Error, Functional, IterateTrace, Sampler, SolverConfig};

#[derive(Debug)]
pub enum HarnessError {
    Config(String),
    Solver(Error),
    Io(std::io::Error),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(m) => write!(f, "invalid config: {m}"),
            HarnessError::Solver(e) => write!(f, "solver error: {e}"),
            HarnessError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<Error> for HarnessError {
    fn from(e: Error) -> Self {
        HarnessError::Solver(e)
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

pub type HarnessResult<T> = Result<T, HarnessError>;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: IterateTrace,
    pub rows: Vec<MetricsRow>,
    pub csv: String,
    pub tau: f64,
    pub sigma: Option<f64>,
}

/// The default step rule of each algorithm, before `step_scale`.
pub fn default_tau(alg: Algorithm, built: &BuiltProblem) -> f64 {
    let sm = &built.partitioned.smoothness;
    let n = built.partitioned.n() as f64;
    match alg {
        Algorithm::Gd | Algorithm::Nag | Algorithm::NagSc | Algorithm::Pgd | Algorithm::Fista => {
            1.0 / sm.l
        }
        Algorithm::CoordinateDescent => 1.0 / sm.l,
        Algorithm::Sgd => 1.0 / (2.0 * n * sm.l_max),
        Algorithm::Adam => 1e-2,
        Algorithm::DiagSgd => 1.0 / (2.0 * n * sm.l_max),
        Algorithm::Sag
        | Algorithm::Saga
        | Algorithm::SagaModified
        | Algorithm::Svrg
        | Algorithm::Lsvrg
        | Algorithm::AccSaga
        | Algorithm::AccSvrg => 1.0 / (3.0 * n * sm.l_max),
        Algorithm::Admm => 1.0,
        Algorithm::Pdhg | Algorithm::CondatVu | Algorithm::Pd3o | Algorithm::Spdhg => {
            // resolved together with sigma in `resolve_steps`
            0.0
        }
    }
}

/// Resolve `(tau, sigma)` for an algorithm on a built problem, honouring
/// explicit overrides and `step_scale`.
pub fn resolve_steps(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
) -> HarnessResult<(f64, Option<f64>)> {
    let alg = cfg.algorithm;
    let explicit = (cfg.solver.tau, cfg.solver.sigma);
    let (mut tau, mut sigma) = match alg {
        Algorithm::Pdhg => {
            let a = pdhg_operator(cfg, built)?;
            let norm = a.norm_sq_auto().sqrt().max(1e-30);
            (0.99 / norm, Some(0.99 / norm))
        }
        Algorithm::CondatVu => {
            let d = built
                .dualised
                .as_ref()
                .ok_or_else(|| HarnessError::Config("condat-vu needs a dualised form".into()))?;
            let norm_sq = d.a.norm_sq_auto();
            let l = d.h.as_ref().and_then(|h| h.lipschitz()).unwrap_or(0.0);
            let sg = 0.9 / norm_sq.sqrt().max(1e-30);
            (0.9 / (sg * norm_sq + 0.5 * l), Some(sg))
        }
        Algorithm::Pd3o => {
            let d = built
                .dualised
                .as_ref()
                .ok_or_else(|| HarnessError::Config("pd3o needs a dualised form".into()))?;
            let norm_sq = d.a.norm_sq_auto();
            let l = d.h.as_ref().and_then(|h| h.lipschitz()).unwrap_or(0.0);
            let sg = 0.9 / norm_sq.sqrt().max(1e-30);
            let tau = (0.99 / (sg * norm_sq)).min(if l > 0.0 { 1.9 / l } else { f64::INFINITY });
            (tau, Some(sg))
        }
        Algorithm::Spdhg => {
            let (sg, tau) =
                spdhg_default_steps(&built.partitioned, cfg.solver.gamma, cfg.solver.rho);
            (tau, Some(sg))
        }
        _ => (default_tau(alg, built), None),
    };
    tau *= cfg.solver.step_scale;
    if let Some(t) = explicit.0 {
        tau = t;
    }
    if let Some(s) = explicit.1 {
        sigma = Some(s);
    }
    if tau <= 0.0 || !tau.is_finite() {
        return Err(HarnessError::Config(format!(
            "resolved step tau = {tau} is not positive"
        )));
    }
    Ok((tau, sigma))
}

/// The `f(Ax) + g(x)` identification PDHG runs on: the data fit dualised for
/// the inverse problems (the regulariser keeps its prox), the regulariser
/// dualised for the denoising problems.
fn pdhg_operator(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
) -> HarnessResult<stochograd::LinearMap> {
    use crate::config::ExperimentKind::*;
    Ok(match cfg.experiment {
        SpikesDeblur | CtSheppLogan | TridiagLs => built.partitioned.full.op.clone(),
        DenoiseTv | DenoiseTgv => built
            .dualised
            .as_ref()
            .ok_or_else(|| HarnessError::Config("missing dualised form".into()))?
            .a
            .clone(),
    })
}

fn build_sampler(cfg: &ExperimentConfig, built: &BuiltProblem) -> HarnessResult<Sampler> {
    let n = built.partitioned.n();
    let kind = match cfg.sampler.kind {
        SamplerKindSpec::Uniform => SamplerKind::UniformReplacement,
        SamplerKindSpec::Permutation => SamplerKind::Permutation,
        SamplerKindSpec::Cyclic => SamplerKind::Cyclic,
        SamplerKindSpec::HermanMeyer => SamplerKind::HermanMeyer,
        SamplerKindSpec::Importance => {
            let total: f64 = built.partitioned.smoothness.l_i.iter().sum();
            let p: Vec<f64> = built
                .partitioned
                .smoothness
                .l_i
                .iter()
                .map(|l| l / total)
                .collect();
            SamplerKind::Importance(p)
        }
    };
    Sampler::new(kind, n, cfg.sampler_seed()).map_err(HarnessError::from)
}

fn solver_config(
    cfg: &ExperimentConfig,
    tau: f64,
    sigma: Option<f64>,
    reference: Option<&(DenseVector, f64)>,
) -> SolverConfig {
    let mut sc = SolverConfig::new(tau).with_passes(cfg.passes);
    sc.sigma = sigma;
    sc.restart = match cfg.solver.restart {
        RestartSpec::Off => Restart::Off,
        RestartSpec::FunctionValue => Restart::FunctionValue,
        RestartSpec::Gradient => Restart::Gradient,
    };
    sc.rel_change_tol = cfg.solver.rel_change_tol;
    if let Some((x_star, phi_star)) = reference {
        sc.reference_obj = Some(*phi_star);
        // without a target tolerance the reference only fills the distance
        // column (a negative tolerance never triggers)
        sc.target = Some(stochograd::solvers::Target {
            x: x_star.clone(),
            tol: cfg.solver.target_tol.unwrap_or(-1.0),
        });
    }
    sc
}

fn schedule_for(cfg: &ExperimentConfig, tau0: f64) -> HarnessResult<StepSchedule> {
    Ok(match cfg.schedule.kind {
        ScheduleKind::Constant => StepSchedule::Constant(tau0),
        ScheduleKind::SgdDecay => {
            let power = if (cfg.schedule.power - 1.0).abs() < 1e-12 {
                DecayPower::Linear
            } else if (cfg.schedule.power - 0.5).abs() < 1e-12 {
                DecayPower::Sqrt
            } else {
                return Err(HarnessError::Config(format!(
                    "schedule power must be 1 or 0.5, got {}",
                    cfg.schedule.power
                )));
            };
            StepSchedule::SgdDecay {
                tau0,
                c: cfg.schedule.c,
                power,
            }
        }
    })
}

/// Run the configured algorithm on a built problem.
pub fn execute(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    reference: Option<&(DenseVector, f64)>,
) -> HarnessResult<RunOutput> {
    let (tau, sigma) = resolve_steps(cfg, built)?;
    let sc = solver_config(cfg, tau, sigma, reference);
    let p = &built.partitioned;
    let g = &p.g;
    let h = p.full_as_functional();
    let x0 = &built.x0;

    // optional SGD warm-start phase for the variance-reduced methods
    let (start, warm_trace) = if cfg.solver.warm_start_passes > 0.0 && cfg.algorithm.is_stochastic()
    {
        let mut sampler = build_sampler(cfg, built)?;
        let tau_sgd = default_tau(Algorithm::Sgd, built);
        let mut warm_cfg = sc.clone();
        warm_cfg.max_passes = cfg.solver.warm_start_passes;
        let t = run_sgd(
            p,
            &StepSchedule::Constant(tau_sgd),
            &mut sampler,
            &warm_cfg,
            x0,
        )?;
        (t.final_x.clone(), Some(t))
    } else {
        (x0.clone(), None)
    };
    let x0 = &start;

    let trace = match cfg.algorithm {
        Algorithm::Gd => run_gd(&h, &sc, x0)?,
        Algorithm::Nag => run_nag(&h, &sc, x0)?,
        Algorithm::NagSc => {
            let mu = cfg.solver.mu.ok_or_else(|| {
                HarnessError::Config("nag-sc needs the strong-convexity constant `mu`".into())
            })?;
            let mut c = sc.clone();
            c.momentum = Momentum::NagSc {
                mu,
                l: p.smoothness.l,
            };
            run_nag(&h, &c, x0)?
        }
        Algorithm::Pgd => run_pgd(g, &h, &sc, x0)?,
        Algorithm::Fista => run_fista(g, &h, &sc, x0)?,
        Algorithm::CoordinateDescent => {
            let n_blocks = x0.len().div_ceil(cfg.solver.block_size);
            let kind = match cfg.sampler.kind {
                SamplerKindSpec::Uniform => SamplerKind::UniformReplacement,
                SamplerKindSpec::Permutation => SamplerKind::Permutation,
                SamplerKindSpec::Cyclic => SamplerKind::Cyclic,
                SamplerKindSpec::HermanMeyer => SamplerKind::HermanMeyer,
                SamplerKindSpec::Importance => {
                    return Err(HarnessError::Config(
                        "importance sampling is not defined for coordinate blocks".into(),
                    ))
                }
            };
            let mut order = Sampler::new(kind, n_blocks, cfg.sampler_seed())?;
            run_coordinate_descent(&h, cfg.solver.block_size, &mut order, &sc, x0)?
        }
        Algorithm::Pdhg => {
            use crate::config::ExperimentKind::*;
            match cfg.experiment {
                SpikesDeblur | CtSheppLogan | TridiagLs => {
                    run_pdhg(&p.full.inner, &p.full.op, g, &sc, x0, None)?
                }
                DenoiseTv | DenoiseTgv => {
                    let d = built.dualised.as_ref().expect("built with dualised form");
                    run_pdhg(&d.f, &d.a, &d.g, &sc, x0, None)?
                }
            }
        }
        Algorithm::Admm => {
            use crate::config::ExperimentKind::*;
            match cfg.experiment {
                SpikesDeblur | CtSheppLogan | TridiagLs => {
                    run_admm(&p.full.inner, &p.full.op, g, &sc, x0)?
                }
                DenoiseTv | DenoiseTgv => {
                    let d = built.dualised.as_ref().expect("built with dualised form");
                    run_admm(&d.f, &d.a, &d.g, &sc, x0)?
                }
            }
        }
        Algorithm::CondatVu => {
            let d = built
                .dualised
                .as_ref()
                .ok_or_else(|| HarnessError::Config("condat-vu needs a dualised form".into()))?;
            let zero = Functional::zero(x0.shape());
            let hh = d.h.as_ref().unwrap_or(&zero);
            run_condat_vu(&d.f, &d.a, &d.g, hh, &sc, x0, None)?
        }
        Algorithm::Pd3o => {
            let d = built
                .dualised
                .as_ref()
                .ok_or_else(|| HarnessError::Config("pd3o needs a dualised form".into()))?;
            let zero = Functional::zero(x0.shape());
            let hh = d.h.as_ref().unwrap_or(&zero);
            run_pd3o(&d.f, &d.a, &d.g, hh, &sc, x0, None)?
        }
        Algorithm::Sgd => {
            let mut sampler = build_sampler(cfg, built)?;
            let schedule = schedule_for(cfg, tau)?;
            run_sgd(p, &schedule, &mut sampler, &sc, x0)?
        }
        Algorithm::Sag => {
            let mut sampler = build_sampler(cfg, built)?;
            run_sag(p, &sc, &mut sampler, x0)?
        }
        Algorithm::Saga => {
            let mut sampler = build_sampler(cfg, built)?;
            run_saga(p, &sc, &mut sampler, SagaForm::Standard, x0)?
        }
        Algorithm::SagaModified => {
            let mut sampler = build_sampler(cfg, built)?;
            run_saga(p, &sc, &mut sampler, SagaForm::Modified, x0)?
        }
        Algorithm::Svrg => {
            let mut sampler = build_sampler(cfg, built)?;
            run_svrg(p, &sc, &mut sampler, cfg.solver.inner_length, None, x0)?
        }
        Algorithm::Lsvrg => {
            let mut sampler = build_sampler(cfg, built)?;
            let p_coin = cfg.solver.loopless_p.unwrap_or(1.0 / (2.0 * p.n() as f64));
            run_svrg(p, &sc, &mut sampler, None, Some(p_coin), x0)?
        }
        Algorithm::AccSaga => {
            let mut sampler = build_sampler(cfg, built)?;
            run_accelerated_vr(
                p,
                Estimator::Saga,
                &sc,
                &mut sampler,
                EtaRule::TwoOverKPlusTwo,
                x0,
            )?
        }
        Algorithm::AccSvrg => {
            let mut sampler = build_sampler(cfg, built)?;
            run_accelerated_vr(
                p,
                Estimator::Svrg,
                &sc,
                &mut sampler,
                EtaRule::TwoOverKPlusTwo,
                x0,
            )?
        }
        Algorithm::Spdhg => {
            let mut sampler = build_sampler(cfg, built)?;
            run_spdhg(p, &sc, &mut sampler, x0)?.0
        }
        Algorithm::Adam => {
            let mut sampler = build_sampler(cfg, built)?;
            run_adaptive(p, &sc, &mut sampler, AdaptiveVariant::adam_default(), x0)?
        }
        Algorithm::DiagSgd => {
            let mut sampler = build_sampler(cfg, built)?;
            run_adaptive(
                p,
                &sc,
                &mut sampler,
                AdaptiveVariant::DiagAccum { epsilon: 1e-8 },
                x0,
            )?
        }
    };

    let trace = match warm_trace {
        Some(w) => concat_traces(w, trace),
        None => trace,
    };

    let rows = rows_from_trace(
        &trace,
        cfg.experiment.name(),
        cfg.algorithm.name(),
        cfg.seed,
        cfg.timing,
    );
    let csv = to_csv(&rows, sampler_kind_name(cfg), cfg.sampler_seed());
    Ok(RunOutput {
        trace,
        rows,
        csv,
        tau,
        sigma,
    })
}

fn sampler_kind_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.sampler.kind {
        SamplerKindSpec::Uniform => "uniform",
        SamplerKindSpec::Permutation => "permutation",
        SamplerKindSpec::Cyclic => "cyclic",
        SamplerKindSpec::HermanMeyer => "herman-meyer",
        SamplerKindSpec::Importance => "importance",
    }
}

/// Splice a warm-start trace in front of the main trace, shifting pass and
/// iteration counters.
fn concat_traces(warm: IterateTrace, mut main: IterateTrace) -> IterateTrace {
    let pass_off = warm.final_passes;
    let k_off = warm.rows.last().map(|r| r.k).unwrap_or(0);
    let mut rows = warm.rows;
    for r in &mut main.rows {
        r.passes += pass_off;
        r.k += k_off;
    }
    rows.extend(main.rows);
    main.rows = rows;
    main.final_passes += pass_off;
    let mut iterates = warm.iterates;
    iterates.extend(main.iterates);
    main.iterates = iterates;
    let mut warnings = warm.warnings;
    warnings.extend(main.warnings);
    main.warnings = warnings;
    main
}

/// Full run: build, optional reference, execute, persist artifacts.
/// Returns the output and the process exit code (0 ok, 2 divergence).
pub fn run_experiment(cfg: &ExperimentConfig) -> HarnessResult<(RunOutput, i32)> {
    let built = build_problem(cfg)?;
    let reference = match cfg.reference_passes {
        Some(budget) => Some(compute_reference(&built, budget)?),
        None => None,
    };
    let out = execute(cfg, &built, reference.as_ref())?;
    if let Some(dir) = &cfg.out {
        persist(cfg, &built, &out, dir, None)?;
    }
    let code = if out.trace.diverged { 2 } else { 0 };
    Ok((out, code))
}

/// Multi-algorithm sweep sharing one problem and reference; one CSV per
/// algorithm plus a merged file. Workers run in parallel, capped by
/// `STOCHOGRAD_THREADS`.
pub fn compare_experiment(
    cfg: &ExperimentConfig,
) -> HarnessResult<(Vec<(Algorithm, RunOutput)>, i32)> {
    let algorithms = if cfg.algorithms.is_empty() {
        vec![cfg.algorithm]
    } else {
        cfg.algorithms.clone()
    };
    let built = build_problem(cfg)?;
    let reference = match cfg.reference_passes {
        Some(budget) => Some(compute_reference(&built, budget)?),
        None => None,
    };

    let cap = std::env::var("STOCHOGRAD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });

    let mut results: Vec<Option<HarnessResult<RunOutput>>> =
        (0..algorithms.len()).map(|_| None).collect();
    for chunk in (0..algorithms.len()).collect::<Vec<_>>().chunks(cap.max(1)) {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for &idx in chunk {
                let mut sub_cfg = cfg.clone();
                sub_cfg.algorithm = algorithms[idx];
                // each worker owns its problem copy and sampler
                let built = built.clone();
                let reference = reference.clone();
                handles.push((
                    idx,
                    scope.spawn(move || execute(&sub_cfg, &built, reference.as_ref())),
                ));
            }
            for (idx, h) in handles {
                results[idx] = Some(h.join().expect("worker does not panic"));
            }
        });
    }

    let mut outputs = Vec::with_capacity(algorithms.len());
    for (alg, res) in algorithms.iter().zip(results) {
        outputs.push((*alg, res.expect("filled")?));
    }

    let mut code = 0;
    if let Some(dir) = &cfg.out {
        let dir_path = Path::new(dir);
        fs::create_dir_all(dir_path)?;
        // CSV merge is serialised: per-algorithm files plus one merged file
        let mut merged: Vec<MetricsRow> = Vec::new();
        for (alg, out) in &outputs {
            fs::write(
                dir_path.join(format!("metrics-{}.csv", alg.name())),
                &out.csv,
            )?;
            merged.extend(out.rows.iter().cloned());
        }
        let merged_csv = to_csv(&merged, sampler_kind_name(cfg), cfg.sampler_seed());
        fs::write(dir_path.join("metrics.csv"), merged_csv)?;
        fs::write(dir_path.join("config.json"), cfg.to_json_pretty())?;
    }
    if outputs.iter().any(|(_, o)| o.trace.diverged) {
        code = 2;
    }
    Ok((outputs, code))
}

/// Write the artifacts of a single run into `dir`.
pub fn persist(
    cfg: &ExperimentConfig,
    built: &BuiltProblem,
    out: &RunOutput,
    dir: &str,
    suffix: Option<&str>,
) -> HarnessResult<()> {
    let dir = Path::new(dir);
    fs::create_dir_all(dir)?;
    let tag = suffix.unwrap_or("");
    fs::write(dir.join(format!("metrics{tag}.csv")), &out.csv)?;
    fs::write(dir.join(format!("config{tag}.json")), cfg.to_json_pretty())?;
    if let Some((h, w)) = built.image_shape {
        // reconstruction lives in the leading h*w block (TGV stacks (u, w))
        let img = DenseVector::new(
            out.trace.final_x.as_slice()[..h * w].to_vec(),
            stochograd::Shape::Image { h, w },
        )?;
        write_pgm16(&dir.join(format!("recon{tag}.pgm")), &img, h, w)?;
        write_raw_f64(&dir.join(format!("recon{tag}")), &img)?;
        if let Some(truth) = &built.truth {
            write_pgm16(&dir.join("truth.pgm"), truth, h, w)?;
        }
    } else {
        write_raw_f64(&dir.join(format!("recon{tag}")), &out.trace.final_x)?;
    }
    Ok(())
}
