//! Solver configuration, iterate traces, step-size guards and schedules.

pub mod deterministic;
pub mod stochastic;

use crate::vector::DenseVector;
use std::time::Instant;

/// Stop when `||x - x_ref|| / ||x_ref|| <= tol`; used by the benchmark
/// harness to count data passes to a target accuracy.
#[derive(Debug, Clone)]
pub struct Target {
    pub x: DenseVector,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Momentum {
    Off,
    /// `t_{k+1} = (1 + sqrt(1 + 4 t_k^2))/2`, `a_k = (t_k - 1)/t_{k+1}`.
    FistaT,
    Constant(f64),
    /// Constant `(sqrt(L) - sqrt(mu)) / (sqrt(L) + sqrt(mu))` for
    /// `mu`-strongly convex, `L`-smooth objectives.
    NagSc {
        mu: f64,
        l: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restart {
    Off,
    /// Reset momentum whenever the objective increases.
    FunctionValue,
    /// Reset momentum when the update opposes the previous step.
    Gradient,
}

/// Which variable PDHG over-relaxes. The dual form matches the SPDHG update
/// structure (its single-block limit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extrapolation {
    Primal,
    Dual,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Primal step.
    pub tau: f64,
    /// Dual step, for primal-dual methods.
    pub sigma: Option<f64>,
    pub momentum: Momentum,
    pub restart: Restart,
    /// Budget in data passes (one pass = one full-gradient-equivalent).
    pub max_passes: f64,
    /// Stop on relative iterate change below this.
    pub rel_change_tol: Option<f64>,
    pub target: Option<Target>,
    /// Known optimal value; fills the sub-optimality trace column.
    pub reference_obj: Option<f64>,
    /// Keep a snapshot of the iterate at every logged row.
    pub record_iterates: bool,
    pub extrapolation: Extrapolation,
}

impl SolverConfig {
    pub fn new(tau: f64) -> Self {
        SolverConfig {
            tau,
            sigma: None,
            momentum: Momentum::Off,
            restart: Restart::Off,
            max_passes: 100.0,
            rel_change_tol: None,
            target: None,
            reference_obj: None,
            record_iterates: false,
            extrapolation: Extrapolation::Primal,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_momentum(mut self, m: Momentum) -> Self {
        self.momentum = m;
        self
    }

    pub fn with_restart(mut self, r: Restart) -> Self {
        self.restart = r;
        self
    }

    pub fn with_passes(mut self, p: f64) -> Self {
        self.max_passes = p;
        self
    }

    pub fn with_rel_change_tol(mut self, tol: f64) -> Self {
        self.rel_change_tol = Some(tol);
        self
    }

    pub fn with_target(mut self, x: DenseVector, tol: f64) -> Self {
        self.target = Some(Target { x, tol });
        self
    }

    pub fn with_reference_obj(mut self, obj: f64) -> Self {
        self.reference_obj = Some(obj);
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_iterates = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    BudgetExhausted,
    RelChange,
    TargetReached,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub k: usize,
    /// Cumulative data passes; rational because subset methods advance in
    /// fractions of a pass.
    pub passes: f64,
    pub seconds: f64,
    pub objective: f64,
    pub rel_dist: Option<f64>,
    pub subopt: Option<f64>,
}

/// Per-pass convergence record of one solver run.
#[derive(Debug, Clone)]
pub struct IterateTrace {
    pub rows: Vec<TraceRow>,
    pub warnings: Vec<String>,
    pub diverged: bool,
    pub stop: StopReason,
    pub final_x: DenseVector,
    pub final_passes: f64,
    /// Iterate snapshots at logged rows, when requested.
    pub iterates: Vec<DenseVector>,
    /// ADMM primal residuals `||A x - z||`, one per iteration; empty for
    /// other solvers.
    pub residuals: Vec<f64>,
}

impl IterateTrace {
    pub fn last_objective(&self) -> f64 {
        self.rows.last().map(|r| r.objective).unwrap_or(f64::NAN)
    }

    pub fn last_subopt(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.subopt)
    }
}

/// Shared bookkeeping: logs one row per data pass, evaluates the stopping
/// rules, and flags divergence.
pub(crate) struct Recorder {
    cfg: SolverConfig,
    start: Instant,
    rows: Vec<TraceRow>,
    iterates: Vec<DenseVector>,
    warnings: Vec<String>,
    next_log_pass: f64,
    pub stop: Option<StopReason>,
}

impl Recorder {
    pub fn new(cfg: &SolverConfig, warnings: Vec<String>) -> Self {
        Recorder {
            cfg: cfg.clone(),
            start: Instant::now(),
            rows: Vec::new(),
            iterates: Vec::new(),
            warnings,
            next_log_pass: 0.0,
            stop: None,
        }
    }

    pub fn due(&self, passes: f64) -> bool {
        passes + 1e-9 >= self.next_log_pass
    }

    /// Record a row and run the pass-granularity stopping checks.
    pub fn log(&mut self, k: usize, passes: f64, x: &DenseVector, objective: f64) {
        let rel_dist = self.cfg.target.as_ref().map(|t| x.rel_dist(&t.x));
        let subopt = self.cfg.reference_obj.map(|o| objective - o);
        self.rows.push(TraceRow {
            k,
            passes,
            seconds: self.start.elapsed().as_secs_f64(),
            objective,
            rel_dist,
            subopt,
        });
        if self.cfg.record_iterates {
            self.iterates.push(x.clone());
        }
        while self.due(passes) {
            self.next_log_pass += 1.0;
        }
        if let (Some(t), Some(d)) = (self.cfg.target.as_ref(), rel_dist) {
            if d <= t.tol {
                self.stop = Some(StopReason::TargetReached);
            }
        }
    }

    pub fn check_finite(&mut self, x: &DenseVector) -> bool {
        if x.is_finite() {
            true
        } else {
            self.stop = Some(StopReason::Diverged);
            false
        }
    }

    pub fn check_rel_change(&mut self, x_new: &DenseVector, x_old: &DenseVector) {
        if let Some(tol) = self.cfg.rel_change_tol {
            if x_new.rel_dist(x_old) <= tol {
                self.stop = Some(StopReason::RelChange);
            }
        }
    }

    pub fn budget_left(&self, passes: f64) -> bool {
        passes + 1e-9 < self.cfg.max_passes
    }

    pub fn finish(self, final_x: DenseVector, final_passes: f64) -> IterateTrace {
        let stop = self.stop.unwrap_or(StopReason::BudgetExhausted);
        IterateTrace {
            rows: self.rows,
            warnings: self.warnings,
            diverged: stop == StopReason::Diverged,
            stop,
            final_x,
            final_passes,
            iterates: self.iterates,
            residuals: Vec::new(),
        }
    }
}

/// `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`
pub fn fista_t_next(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayPower {
    /// `k^(1/2)`: decays too slowly for the classical summability condition.
    Sqrt,
    /// `k`: satisfies `sum tau_k = inf`, `sum tau_k^2 < inf`.
    Linear,
}

/// Step-size schedule for SGD-type methods:
/// constant, or `tau_k = tau0 / (1 + c k^p / n)`.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    SgdDecay {
        tau0: f64,
        c: f64,
        power: DecayPower,
    },
}

impl StepSchedule {
    pub fn value(&self, k: usize, n: usize) -> f64 {
        match *self {
            StepSchedule::Constant(t) => t,
            StepSchedule::SgdDecay { tau0, c, power } => {
                let kp = match power {
                    DecayPower::Sqrt => (k as f64).sqrt(),
                    DecayPower::Linear => k as f64,
                };
                tau0 / (1.0 + c * kp / n as f64)
            }
        }
    }
}

/// Sufficient step-size conditions from the convergence theory. A `false`
/// return means the guard fires and the solver records a warning; runs are
/// never aborted since probing unstable steps is a legitimate experiment.
pub mod guards {
    /// PGD: `tau < 2/L`.
    pub fn pgd_step_ok(tau: f64, l: f64) -> bool {
        tau * l < 2.0
    }

    /// PDHG: `sigma tau ||A||^2 < 1` (the classical threshold; steps in
    /// `(1, 4/3)` are known to work but still warn here).
    pub fn pdhg_step_ok(sigma: f64, tau: f64, op_norm_sq: f64) -> bool {
        sigma * tau * op_norm_sq < 1.0
    }

    /// Condat–Vũ: `tau (sigma ||A||^2 + L/2) < 1`.
    pub fn condat_vu_step_ok(tau: f64, sigma: f64, op_norm_sq: f64, l: f64) -> bool {
        tau * (sigma * op_norm_sq + 0.5 * l) < 1.0
    }

    /// PD3O: `sigma tau ||A||^2 < 1` and `tau L < 2`.
    pub fn pd3o_step_ok(sigma: f64, tau: f64, op_norm_sq: f64, l: f64) -> bool {
        sigma * tau * op_norm_sq < 1.0 && tau * l < 2.0
    }

    /// SPDHG: `sigma tau < 1 / (n_blocks max_i ||A_i||^2)`.
    pub fn spdhg_step_ok(sigma: f64, tau: f64, n_blocks: usize, max_block_norm_sq: f64) -> bool {
        sigma * tau * n_blocks as f64 * max_block_norm_sq < 1.0
    }
}
