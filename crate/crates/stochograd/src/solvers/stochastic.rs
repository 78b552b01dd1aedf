//! Stochastic gradient methods over partitioned problems: SGD, SAG/SAGA
//! (standard and memory-efficient), SVRG and loopless SVRG, a universal
//! acceleration wrapper, SPDHG, and adaptive diagonal step sizes.
//!
//! Data-pass accounting: one pass equals `n` subset-gradient evaluations.
//! The SAGA table initialisation costs one pass; every SVRG anchor refresh
//! costs one pass; each SVRG inner step costs two subset evaluations (fresh
//! point and anchor point). Traces log once per data pass.

use crate::error::{invalid, Error, Result};
use crate::functionals::ProxWarm;
use crate::problem::PartitionedProblem;
use crate::rng::{stream, STREAM_COIN};
use crate::sampling::Sampler;
use crate::solvers::{guards, IterateTrace, Recorder, SolverConfig, StepSchedule};
use crate::vector::DenseVector;
use rand::RngExt;

/// Which stochastic gradient estimator to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Sgd,
    Sag,
    Saga,
    Svrg,
}

/// SAGA/SAG gradient table in the iterate space, with its running sum.
#[derive(Debug, Clone)]
pub struct GradientTable {
    pub table: Vec<DenseVector>,
    pub sum: DenseVector,
}

impl GradientTable {
    /// Fill the table with subset gradients at `x0`; costs one data pass.
    pub fn init(problem: &PartitionedProblem, x0: &DenseVector) -> Result<Self> {
        let mut table = Vec::with_capacity(problem.n());
        let mut sum = DenseVector::zeros(x0.shape());
        for t in &problem.terms {
            let gi = t.gradient(x0)?;
            sum.add_assign(&gi);
            table.push(gi);
        }
        Ok(GradientTable { table, sum })
    }

    /// Relative drift of the running sum against a from-scratch recompute.
    pub fn sum_drift(&self) -> f64 {
        let mut recomputed = DenseVector::zeros(self.sum.shape());
        for g in &self.table {
            recomputed.add_assign(g);
        }
        recomputed.sub_assign(&self.sum);
        recomputed.norm() / (1.0 + self.sum.norm())
    }
}

/// Memory-efficient SAGA state: codomain-side slots `y_i = grad hbar_i(A_i x)`
/// and the running image-space sum `gamma = sum_i A_i* y_i`.
#[derive(Debug, Clone)]
pub struct DualTable {
    pub slots: Vec<DenseVector>,
    pub sum: DenseVector,
}

impl DualTable {
    pub fn init(problem: &PartitionedProblem, x0: &DenseVector) -> Result<Self> {
        let mut slots = Vec::with_capacity(problem.n());
        let mut sum = DenseVector::zeros(x0.shape());
        for t in &problem.terms {
            let yi = t.dual_gradient(x0)?;
            sum.add_assign(&t.op.adjoint(&yi)?);
            slots.push(yi);
        }
        Ok(DualTable { slots, sum })
    }
}

/// SVRG anchor: reference iterate and its full gradient.
#[derive(Debug, Clone)]
pub struct SvrgAnchor {
    pub anchor: DenseVector,
    pub anchor_grad: DenseVector,
}

impl SvrgAnchor {
    /// Full gradient at `x`; costs one data pass.
    pub fn refresh(problem: &PartitionedProblem, x: &DenseVector) -> Result<Self> {
        let mut g = DenseVector::zeros(x.shape());
        for t in &problem.terms {
            g.add_assign(&t.gradient(x)?);
        }
        Ok(SvrgAnchor {
            anchor: x.clone(),
            anchor_grad: g,
        })
    }
}

/// Estimator state for [`stochastic_gradient`].
#[derive(Debug, Clone)]
pub enum EstimatorState {
    Sgd,
    Sag(GradientTable),
    Saga(GradientTable),
    ModifiedSaga(DualTable),
    Svrg(SvrgAnchor),
}

impl EstimatorState {
    /// State at `x0` plus the subset evaluations the initialisation cost.
    pub fn fresh(
        estimator: Estimator,
        problem: &PartitionedProblem,
        x0: &DenseVector,
    ) -> Result<(Self, usize)> {
        Ok(match estimator {
            Estimator::Sgd => (EstimatorState::Sgd, 0),
            Estimator::Sag => (
                EstimatorState::Sag(GradientTable::init(problem, x0)?),
                problem.n(),
            ),
            Estimator::Saga => (
                EstimatorState::Saga(GradientTable::init(problem, x0)?),
                problem.n(),
            ),
            Estimator::Svrg => (
                EstimatorState::Svrg(SvrgAnchor::refresh(problem, x0)?),
                problem.n(),
            ),
        })
    }
}

/// One stochastic gradient direction for subset `i` at `x`, mutating the
/// estimator state (table/slot update at `i`). Returns the direction and the
/// number of subset-gradient evaluations spent.
pub fn stochastic_gradient(
    problem: &PartitionedProblem,
    state: &mut EstimatorState,
    x: &DenseVector,
    i: usize,
) -> Result<(DenseVector, usize)> {
    let n = problem.n() as f64;
    if i >= problem.n() {
        return Err(invalid(format!("subset index {i} out of range")));
    }
    match state {
        EstimatorState::Sgd => {
            let mut dir = problem.terms[i].gradient(x)?;
            dir.scale(n);
            Ok((dir, 1))
        }
        EstimatorState::Saga(tab) => {
            let g_new = problem.terms[i].gradient(x)?;
            let mut dir = g_new.clone();
            dir.sub_assign(&tab.table[i]);
            dir.scale(n);
            dir.add_assign(&tab.sum);
            tab.sum.add_assign(&g_new);
            tab.sum.sub_assign(&tab.table[i]);
            tab.table[i] = g_new;
            Ok((dir, 1))
        }
        EstimatorState::Sag(tab) => {
            // no n factor on the innovation: lower variance, biased
            let g_new = problem.terms[i].gradient(x)?;
            let mut dir = g_new.clone();
            dir.sub_assign(&tab.table[i]);
            dir.add_assign(&tab.sum);
            tab.sum.add_assign(&g_new);
            tab.sum.sub_assign(&tab.table[i]);
            tab.table[i] = g_new;
            Ok((dir, 1))
        }
        EstimatorState::ModifiedSaga(tab) => {
            let y_new = problem.terms[i].dual_gradient(x)?;
            let mut diff = y_new.clone();
            diff.sub_assign(&tab.slots[i]);
            let d = problem.terms[i].op.adjoint(&diff)?;
            let mut dir = d.scaled(n);
            dir.add_assign(&tab.sum);
            tab.sum.add_assign(&d);
            tab.slots[i] = y_new;
            Ok((dir, 1))
        }
        EstimatorState::Svrg(anchor) => {
            let g_now = problem.terms[i].gradient(x)?;
            let g_ref = problem.terms[i].gradient(&anchor.anchor)?;
            let mut dir = g_now;
            dir.sub_assign(&g_ref);
            dir.scale(n);
            dir.add_assign(&anchor.anchor_grad);
            Ok((dir, 2))
        }
    }
}

fn check_sampler(problem: &PartitionedProblem, sampler: &Sampler) -> Result<()> {
    if sampler.n() != problem.n() {
        return Err(Error::Invalid(format!(
            "sampler ranges over {} indices, problem has {} subsets",
            sampler.n(),
            problem.n()
        )));
    }
    Ok(())
}

/// Proximal SGD with a step schedule.
pub fn run_sgd(
    problem: &PartitionedProblem,
    schedule: &StepSchedule,
    sampler: &mut Sampler,
    cfg: &SolverConfig,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    check_sampler(problem, sampler)?;
    let n = problem.n();
    let mut rec = Recorder::new(cfg, Vec::new());
    let mut warm = ProxWarm::default();
    let mut x = x0.clone();
    rec.log(0, 0.0, &x, problem.objective(&x)?);

    let mut k = 0usize;
    let mut evals = 0usize;
    let mut passes = 0.0;
    while rec.stop.is_none() && rec.budget_left(passes) {
        let i = sampler.next_index();
        let mut dir = problem.terms[i].gradient(&x)?;
        dir.scale(n as f64);
        let tau = schedule.value(k, n);
        let mut step = x.clone();
        step.axpy(-tau, &dir);
        let x_next = problem.g.prox_warm(tau, &step, &mut warm)?;
        evals += 1;
        k += 1;
        passes = evals as f64 / n as f64;
        if !rec.check_finite(&x_next) {
            rec.log(k, passes, &x_next, f64::NAN);
            break;
        }
        x = x_next;
        if rec.due(passes) {
            rec.log(k, passes, &x, problem.objective(&x)?);
        }
    }
    Ok(rec.finish(x, passes))
}

/// Which SAGA realisation to run. The two are algebraically identical
/// trajectories; the modified form stores codomain-side gradients, shrinking
/// the memory from `O(n dim X)` to `O(dim X + dim Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SagaForm {
    Standard,
    Modified,
}

/// SAGA with constant step `cfg.tau`; the gradient table is initialised at
/// `x0` and charged one data pass.
pub fn run_saga(
    problem: &PartitionedProblem,
    cfg: &SolverConfig,
    sampler: &mut Sampler,
    form: SagaForm,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    let state = match form {
        SagaForm::Standard => EstimatorState::Saga(GradientTable::init(problem, x0)?),
        SagaForm::Modified => EstimatorState::ModifiedSaga(DualTable::init(problem, x0)?),
    };
    run_estimator_loop(problem, cfg, sampler, state, problem.n(), x0)
}

/// SAG (biased) with constant step `cfg.tau`.
pub fn run_sag(
    problem: &PartitionedProblem,
    cfg: &SolverConfig,
    sampler: &mut Sampler,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    let state = EstimatorState::Sag(GradientTable::init(problem, x0)?);
    run_estimator_loop(problem, cfg, sampler, state, problem.n(), x0)
}

/// Constant-step estimator loop shared by SAG/SAGA.
fn run_estimator_loop(
    problem: &PartitionedProblem,
    cfg: &SolverConfig,
    sampler: &mut Sampler,
    mut state: EstimatorState,
    init_evals: usize,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    check_sampler(problem, sampler)?;
    let n = problem.n();
    let mut rec = Recorder::new(cfg, Vec::new());
    let mut warm = ProxWarm::default();
    let mut x = x0.clone();
    let mut evals = init_evals;
    let mut passes = evals as f64 / n as f64;
    rec.log(0, passes, &x, problem.objective(&x)?);

    let mut k = 0usize;
    while rec.stop.is_none() && rec.budget_left(passes) {
        let i = sampler.next_index();
        let (dir, spent) = stochastic_gradient(problem, &mut state, &x, i)?;
        let mut step = x.clone();
        step.axpy(-cfg.tau, &dir);
        let x_next = problem.g.prox_warm(cfg.tau, &step, &mut warm)?;
        evals += spent;
        k += 1;
        passes = evals as f64 / n as f64;
        if !rec.check_finite(&x_next) {
            rec.log(k, passes, &x_next, f64::NAN);
            break;
        }
        x = x_next;
        if rec.due(passes) {
            debug_assert!(
                match &state {
                    EstimatorState::Saga(tab) | EstimatorState::Sag(tab) =>
                        tab.sum_drift() <= 1e-10,
                    _ => true,
                },
                "gradient table running sum drifted"
            );
            rec.log(k, passes, &x, problem.objective(&x)?);
        }
    }
    Ok(rec.finish(x, passes))
}

/// SVRG. `inner_len` is the two-loop inner length (default `2n`); passing
/// `loopless_p = Some(p)` switches to the loopless variant that refreshes
/// the anchor with probability `p` per iteration (coin stream derived from
/// the sampler seed).
pub fn run_svrg(
    problem: &PartitionedProblem,
    cfg: &SolverConfig,
    sampler: &mut Sampler,
    inner_len: Option<usize>,
    loopless_p: Option<f64>,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    check_sampler(problem, sampler)?;
    let n = problem.n();
    let t_inner = inner_len.unwrap_or(2 * n);
    if t_inner == 0 {
        return Err(invalid("inner loop length must be at least 1"));
    }
    if let Some(p) = loopless_p {
        if !(0.0..=1.0).contains(&p) || p == 0.0 {
            return Err(invalid("loopless probability must lie in (0, 1]"));
        }
    }
    let mut coin = stream(sampler.seed(), STREAM_COIN);

    let mut rec = Recorder::new(cfg, Vec::new());
    let mut warm = ProxWarm::default();
    let mut x = x0.clone();
    let mut anchor = SvrgAnchor::refresh(problem, &x)?;
    let mut evals = n; // initial anchor
    let mut passes = evals as f64 / n as f64;
    rec.log(0, passes, &x, problem.objective(&x)?);

    let mut k = 0usize;
    let mut since_refresh = 0usize;
    while rec.stop.is_none() && rec.budget_left(passes) {
        // anchor refresh: scheduled (two-loop) or coin-flip (loopless)
        let refresh = match loopless_p {
            Some(p) => coin.random_range(0.0..1.0) < p,
            None => since_refresh == t_inner,
        };
        if refresh {
            anchor = SvrgAnchor::refresh(problem, &x)?;
            evals += n;
            since_refresh = 0;
            passes = evals as f64 / n as f64;
            if rec.due(passes) {
                rec.log(k, passes, &x, problem.objective(&x)?);
            }
            if !rec.budget_left(passes) || rec.stop.is_some() {
                break;
            }
        }
        let i = sampler.next_index();
        let g_now = problem.terms[i].gradient(&x)?;
        let g_ref = problem.terms[i].gradient(&anchor.anchor)?;
        let mut dir = g_now;
        dir.sub_assign(&g_ref);
        dir.scale(n as f64);
        dir.add_assign(&anchor.anchor_grad);
        let mut step = x.clone();
        step.axpy(-cfg.tau, &dir);
        let x_next = problem.g.prox_warm(cfg.tau, &step, &mut warm)?;
        evals += 2;
        k += 1;
        since_refresh += 1;
        passes = evals as f64 / n as f64;
        if !rec.check_finite(&x_next) {
            rec.log(k, passes, &x_next, f64::NAN);
            break;
        }
        x = x_next;
        if rec.due(passes) {
            rec.log(k, passes, &x, problem.objective(&x)?);
        }
    }
    Ok(rec.finish(x, passes))
}

/// How the acceleration mixing weight `eta_k` evolves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    Constant(f64),
    /// `eta_k = 2 / (k + 2)`, the Nesterov-style averaging weight.
    TwoOverKPlusTwo,
}

impl EtaRule {
    fn value(&self, k: usize) -> f64 {
        match *self {
            EtaRule::Constant(c) => c,
            EtaRule::TwoOverKPlusTwo => 2.0 / (k as f64 + 2.0),
        }
    }
}

/// Universal acceleration of a variance-reduced estimator: the three-point
/// scheme `x = eta z + (1-eta) y`, prox step on `z`, convex average into `y`.
/// With `eta_k = 1` it collapses to the plain estimator loop.
pub fn run_accelerated_vr(
    problem: &PartitionedProblem,
    estimator: Estimator,
    cfg: &SolverConfig,
    sampler: &mut Sampler,
    eta: EtaRule,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    if !matches!(estimator, Estimator::Saga | Estimator::Svrg) {
        return Err(invalid("acceleration expects a variance-reduced estimator"));
    }
    check_sampler(problem, sampler)?;
    let n = problem.n();
    let (mut state, init_evals) = EstimatorState::fresh(estimator, problem, x0)?;
    let svrg_refresh_every = 2 * n;

    let mut rec = Recorder::new(cfg, Vec::new());
    let mut warm = ProxWarm::default();
    let mut y = x0.clone();
    let mut z = x0.clone();
    let mut evals = init_evals;
    let mut passes = evals as f64 / n as f64;
    rec.log(0, passes, &y, problem.objective(&y)?);

    let mut k = 0usize;
    let mut since_refresh = 0usize;
    while rec.stop.is_none() && rec.budget_left(passes) {
        if matches!(state, EstimatorState::Svrg(_)) && since_refresh == svrg_refresh_every {
            let x_probe = mix(&z, &y, eta.value(k));
            state = EstimatorState::Svrg(SvrgAnchor::refresh(problem, &x_probe)?);
            evals += n;
            since_refresh = 0;
            passes = evals as f64 / n as f64;
            if !rec.budget_left(passes) {
                break;
            }
        }
        let eta_k = eta.value(k);
        let x = mix(&z, &y, eta_k);
        let i = sampler.next_index();
        let (dir, spent) = stochastic_gradient(problem, &mut state, &x, i)?;
        // the z-step is scaled by 1/eta so the y-average contracts at the
        // accelerated rate; eta = 1 recovers the plain estimator loop
        let tau_k = cfg.tau / eta_k;
        let mut step = z.clone();
        step.axpy(-tau_k, &dir);
        let z_next = problem.g.prox_warm(tau_k, &step, &mut warm)?;
        let y_next = mix(&z_next, &y, eta_k);
        evals += spent;
        k += 1;
        since_refresh += 1;
        passes = evals as f64 / n as f64;
        if !rec.check_finite(&z_next) || !rec.check_finite(&y_next) {
            rec.log(k, passes, &y_next, f64::NAN);
            break;
        }
        z = z_next;
        y = y_next;
        if rec.due(passes) {
            rec.log(k, passes, &y, problem.objective(&y)?);
        }
    }
    Ok(rec.finish(y, passes))
}

/// `eta a + (1 - eta) b`
fn mix(a: &DenseVector, b: &DenseVector, eta: f64) -> DenseVector {
    let mut out = DenseVector::zeros(a.shape());
    for i in 0..out.len() {
        out[i] = eta * a[i] + (1.0 - eta) * b[i];
    }
    out
}

/// Dual state of an SPDHG run, exposed so the incremental bookkeeping can be
/// audited against a from-scratch recompute.
#[derive(Debug, Clone)]
pub struct SpdhgState {
    pub y: Vec<DenseVector>,
    pub y_bar: Vec<DenseVector>,
    /// `u = A* y`, maintained incrementally.
    pub u: DenseVector,
    /// `w = A* y_bar`, maintained incrementally; the primal step reads this.
    pub w: DenseVector,
}

impl SpdhgState {
    /// `sum_i A_i* y_bar_i` recomputed from scratch.
    pub fn recompute_w(&self, problem: &PartitionedProblem) -> Result<DenseVector> {
        let mut w = DenseVector::zeros(self.w.shape());
        for (t, yb) in problem.terms.iter().zip(&self.y_bar) {
            w.add_assign(&t.op.adjoint(yb)?);
        }
        Ok(w)
    }
}

/// Default SPDHG steps `sigma = gamma rho / K_max`, `tau = 1 / (l gamma K_max)`
/// with `K_max = max_i ||A_i||`.
pub fn spdhg_default_steps(problem: &PartitionedProblem, gamma: f64, rho: f64) -> (f64, f64) {
    let k_max = problem
        .smoothness
        .l_i
        .iter()
        .fold(0.0f64, |m, &l| m.max(l))
        .sqrt();
    let l = problem.n() as f64;
    (gamma * rho / k_max, 1.0 / (l * gamma * k_max))
}

/// SPDHG: full primal prox step against the maintained `w = A* y_bar`, one
/// dual block prox-ascent per iteration, dual extrapolation by the block
/// count. One iteration touches one block, i.e. `1/l` of a data pass.
pub fn run_spdhg(
    problem: &PartitionedProblem,
    cfg: &SolverConfig,
    sampler: &mut Sampler,
    x0: &DenseVector,
) -> Result<(IterateTrace, SpdhgState)> {
    check_sampler(problem, sampler)?;
    let l = problem.n();
    let sigma = cfg
        .sigma
        .ok_or_else(|| invalid("SPDHG needs a dual step sigma"))?;
    let tau = cfg.tau;
    if tau <= 0.0 || sigma <= 0.0 {
        return Err(invalid("step sizes must be positive"));
    }
    for t in &problem.terms {
        if !t.inner.is_prox_friendly() {
            return Err(Error::NotProxFriendly("SPDHG dual blocks"));
        }
    }

    let mut warnings = Vec::new();
    let max_norm_sq = problem.smoothness.l_i.iter().fold(0.0f64, |m, &v| m.max(v));
    if !guards::spdhg_step_ok(sigma, tau, l, max_norm_sq) {
        warnings.push(format!(
            "step sizes sigma={sigma}, tau={tau} violate sigma tau l max||A_i||^2 < 1 \
             (l={l}, max||A_i||^2={max_norm_sq})"
        ));
    }

    let mut rec = Recorder::new(cfg, warnings);
    let mut warm = ProxWarm::default();
    let mut x = x0.clone();
    let mut state = SpdhgState {
        y: problem
            .terms
            .iter()
            .map(|t| DenseVector::zeros(t.op.codomain()))
            .collect(),
        y_bar: problem
            .terms
            .iter()
            .map(|t| DenseVector::zeros(t.op.codomain()))
            .collect(),
        u: DenseVector::zeros(x0.shape()),
        w: DenseVector::zeros(x0.shape()),
    };
    rec.log(0, 0.0, &x, problem.objective(&x)?);

    let mut k = 0usize;
    let mut passes = 0.0f64;
    let mut extrapolated: Option<usize> = None;
    while rec.stop.is_none() && rec.budget_left(passes) {
        // primal descent against w = A* y_bar
        let mut step = x.clone();
        step.axpy(-tau, &state.w);
        let x_next = problem.g.prox_warm(tau, &step, &mut warm)?;

        // one dual block ascends
        let i = sampler.next_index();
        let term = &problem.terms[i];
        let mut dual_arg = state.y[i].clone();
        dual_arg.axpy(sigma, &term.op.apply(&x_next)?);
        let y_new = term.inner.prox_conjugate(sigma, &dual_arg)?;

        let mut delta = y_new.clone();
        delta.sub_assign(&state.y[i]);
        let d = term.op.adjoint(&delta)?;
        // w^{k+1} = A* y^k + (1 + l) A_i* delta; u tracks A* y
        state.w.copy_from(&state.u);
        state.w.axpy(1.0 + l as f64, &d);
        state.u.add_assign(&d);
        // the non-selected branch writes y_i^(k), so the extrapolation on a
        // block lives exactly one iteration before collapsing back onto y
        if let Some(j) = extrapolated.take() {
            let yj = state.y[j].clone();
            state.y_bar[j] = yj;
        }
        let mut yb = y_new.clone();
        yb.axpy(l as f64, &delta);
        state.y_bar[i] = yb;
        state.y[i] = y_new;
        extrapolated = Some(i);

        k += 1;
        passes = k as f64 / l as f64;
        if !rec.check_finite(&x_next) || !rec.check_finite(&state.y[i]) {
            rec.log(k, passes, &x_next, f64::NAN);
            break;
        }
        x = x_next;
        if rec.due(passes) {
            rec.log(k, passes, &x, problem.objective(&x)?);
        }
    }
    Ok((rec.finish(x, passes), state))
}

/// Adaptive diagonal step-size variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdaptiveVariant {
    /// `D_i = eps + sum_k |d_i^(k)|`, per-coordinate step `tau / D_i`.
    DiagAccum { epsilon: f64 },
    /// First/second moment estimates with bias correction.
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl AdaptiveVariant {
    pub fn adam_default() -> Self {
        AdaptiveVariant::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-step SGD: stochastic directions preconditioned per coordinate,
/// prox on `g` applied after the preconditioned step.
pub fn run_adaptive(
    problem: &PartitionedProblem,
    cfg: &SolverConfig,
    sampler: &mut Sampler,
    variant: AdaptiveVariant,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    check_sampler(problem, sampler)?;
    let n = problem.n();
    let mut rec = Recorder::new(cfg, Vec::new());
    let mut warm = ProxWarm::default();
    let mut x = x0.clone();
    rec.log(0, 0.0, &x, problem.objective(&x)?);

    let d = x0.len();
    let mut accum = match variant {
        AdaptiveVariant::DiagAccum { epsilon } => vec![epsilon; d],
        AdaptiveVariant::Adam { .. } => vec![0.0; d],
    };
    let mut second = vec![0.0; d];

    let mut k = 0usize;
    let mut evals = 0usize;
    let mut passes = 0.0;
    while rec.stop.is_none() && rec.budget_left(passes) {
        let i = sampler.next_index();
        let mut dir = problem.terms[i].gradient(&x)?;
        dir.scale(n as f64);
        evals += 1;
        k += 1;

        let mut step = x.clone();
        match variant {
            AdaptiveVariant::DiagAccum { .. } => {
                for j in 0..d {
                    accum[j] += dir[j].abs();
                    step[j] -= cfg.tau * dir[j] / accum[j];
                }
            }
            AdaptiveVariant::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let bc1 = 1.0 - beta1.powi(k as i32);
                let bc2 = 1.0 - beta2.powi(k as i32);
                for j in 0..d {
                    accum[j] = beta1 * accum[j] + (1.0 - beta1) * dir[j];
                    second[j] = beta2 * second[j] + (1.0 - beta2) * dir[j] * dir[j];
                    let m_hat = accum[j] / bc1;
                    let v_hat = second[j] / bc2;
                    step[j] -= cfg.tau * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        let x_next = problem.g.prox_warm(cfg.tau, &step, &mut warm)?;
        passes = evals as f64 / n as f64;
        if !rec.check_finite(&x_next) {
            rec.log(k, passes, &x_next, f64::NAN);
            break;
        }
        x = x_next;
        if rec.due(passes) {
            rec.log(k, passes, &x, problem.objective(&x)?);
        }
    }
    Ok(rec.finish(x, passes))
}
