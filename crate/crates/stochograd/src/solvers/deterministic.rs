//! Full-gradient baselines: GD/NAG, PGD/FISTA, PDHG, ADMM, Condat–Vũ, PD3O,
//! coordinate descent.
//!
//! One iteration of any of these touches all the data, so every iteration
//! counts as one data pass and gets one trace row.

use crate::error::{invalid, Error, Result};
use crate::functionals::{Functional, ProxWarm};
use crate::linops::LinearMap;
use crate::sampling::Sampler;
use crate::solvers::{
    fista_t_next, guards, Extrapolation, IterateTrace, Momentum, Recorder, Restart, SolverConfig,
};
use crate::vector::DenseVector;

fn require_smooth(h: &Functional) -> Result<()> {
    if !h.is_smooth() {
        return Err(Error::NotSmooth("smooth term required"));
    }
    Ok(())
}

fn require_prox(g: &Functional) -> Result<()> {
    if !g.is_prox_friendly() {
        return Err(Error::NotProxFriendly("prox-friendly term required"));
    }
    Ok(())
}

/// Gradient descent `x <- x - tau grad h(x)`.
pub fn run_gd(h: &Functional, cfg: &SolverConfig, x0: &DenseVector) -> Result<IterateTrace> {
    let mut cfg = cfg.clone();
    cfg.momentum = Momentum::Off;
    proximal_gradient_engine(&Functional::zero(x0.shape()), h, &cfg, x0)
}

/// Nesterov-accelerated gradient descent; `cfg.momentum` selects the t-based
/// rule (default) or the strongly convex constant.
pub fn run_nag(h: &Functional, cfg: &SolverConfig, x0: &DenseVector) -> Result<IterateTrace> {
    let mut cfg = cfg.clone();
    if cfg.momentum == Momentum::Off {
        cfg.momentum = Momentum::FistaT;
    }
    proximal_gradient_engine(&Functional::zero(x0.shape()), h, &cfg, x0)
}

/// Proximal gradient descent: a gradient step on `h`, then `prox_{tau g}`.
pub fn run_pgd(
    g: &Functional,
    h: &Functional,
    cfg: &SolverConfig,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    let mut cfg = cfg.clone();
    cfg.momentum = Momentum::Off;
    proximal_gradient_engine(g, h, &cfg, x0)
}

/// FISTA: PGD with the `t_k` momentum sequence, optional restart.
pub fn run_fista(
    g: &Functional,
    h: &Functional,
    cfg: &SolverConfig,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    let mut cfg = cfg.clone();
    if cfg.momentum == Momentum::Off {
        cfg.momentum = Momentum::FistaT;
    }
    proximal_gradient_engine(g, h, &cfg, x0)
}

fn proximal_gradient_engine(
    g: &Functional,
    h: &Functional,
    cfg: &SolverConfig,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    require_smooth(h)?;
    require_prox(g)?;
    if cfg.tau <= 0.0 {
        return Err(invalid("step size must be positive"));
    }
    let mut warnings = Vec::new();
    if let Some(l) = h.lipschitz() {
        if l > 0.0 && !guards::pgd_step_ok(cfg.tau, l) {
            warnings.push(format!(
                "step size tau={} violates tau < 2/L with L={l}",
                cfg.tau
            ));
        }
    }
    let mut rec = Recorder::new(cfg, warnings);
    let mut warm = ProxWarm::default();

    let objective = |x: &DenseVector| -> Result<f64> { Ok(g.eval(x)? + h.eval(x)?) };

    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    let mut t = 1.0f64;
    let mut phi = objective(&x)?;
    rec.log(0, 0.0, &x, phi);

    let mut k = 0usize;
    let mut passes = 0.0f64;
    while rec.stop.is_none() && rec.budget_left(passes) {
        // momentum coefficient for this step
        let (a, t_next) = match cfg.momentum {
            Momentum::Off => (0.0, 1.0),
            Momentum::FistaT => {
                let tn = fista_t_next(t);
                ((t - 1.0) / tn, tn)
            }
            Momentum::Constant(c) => (c, 1.0),
            Momentum::NagSc { mu, l } => {
                let (sl, sm) = (l.sqrt(), mu.sqrt());
                ((sl - sm) / (sl + sm), 1.0)
            }
        };
        let mut x_tilde = x.clone();
        if a != 0.0 {
            for i in 0..x_tilde.len() {
                x_tilde[i] = x[i] + a * (x[i] - x_prev[i]);
            }
        }
        let grad = h.gradient(&x_tilde)?;
        let mut step = x_tilde.clone();
        step.axpy(-cfg.tau, &grad);
        let x_next = g.prox_warm(cfg.tau, &step, &mut warm)?;
        k += 1;
        passes += 1.0;

        if !rec.check_finite(&x_next) {
            rec.log(k, passes, &x_next, f64::NAN);
            break;
        }
        let phi_next = objective(&x_next)?;

        let mut restarted = false;
        match cfg.restart {
            Restart::Off => {}
            Restart::FunctionValue => {
                if phi_next > phi {
                    restarted = true;
                }
            }
            Restart::Gradient => {
                // momentum opposes the latest update direction
                let mut dot = 0.0;
                for i in 0..x.len() {
                    dot += (x_tilde[i] - x_next[i]) * (x_next[i] - x[i]);
                }
                if dot > 0.0 {
                    restarted = true;
                }
            }
        }

        rec.check_rel_change(&x_next, &x);
        if restarted {
            t = 1.0;
            x_prev = x_next.clone();
        } else {
            t = t_next;
            x_prev = x;
        }
        x = x_next;
        phi = phi_next;
        rec.log(k, passes, &x, phi);
    }
    Ok(rec.finish(x, passes))
}

/// PDHG (Chambolle–Pock) for `min_x f(Ax) + g(x)`.
///
/// `Extrapolation::Primal` is the classical form (over-relaxed primal);
/// `Extrapolation::Dual` over-relaxes the dual instead and is the exact
/// single-block limit of SPDHG.
pub fn run_pdhg(
    f: &Functional,
    a: &LinearMap,
    g: &Functional,
    cfg: &SolverConfig,
    x0: &DenseVector,
    y0: Option<&DenseVector>,
) -> Result<IterateTrace> {
    match cfg.extrapolation {
        Extrapolation::Primal => {
            let h = Functional::zero(x0.shape());
            three_term_engine(f, a, g, &h, cfg, x0, y0, false, GuardKind::Pdhg)
        }
        Extrapolation::Dual => pdhg_dual_extrapolated(f, a, g, cfg, x0, y0),
    }
}

/// Condat–Vũ for `min_x f(Ax) + g(x) + h(x)`: one gradient of `h`, one
/// `prox_g` and one conjugate `prox_f` per iteration.
pub fn run_condat_vu(
    f: &Functional,
    a: &LinearMap,
    g: &Functional,
    h: &Functional,
    cfg: &SolverConfig,
    x0: &DenseVector,
    y0: Option<&DenseVector>,
) -> Result<IterateTrace> {
    three_term_engine(f, a, g, h, cfg, x0, y0, false, GuardKind::CondatVu)
}

/// PD3O: Condat–Vũ plus the gradient-momentum term in the extrapolation,
/// decoupling the step-size conditions. The fresh gradient is cached so the
/// count stays at one per iteration.
pub fn run_pd3o(
    f: &Functional,
    a: &LinearMap,
    g: &Functional,
    h: &Functional,
    cfg: &SolverConfig,
    x0: &DenseVector,
    y0: Option<&DenseVector>,
) -> Result<IterateTrace> {
    three_term_engine(f, a, g, h, cfg, x0, y0, true, GuardKind::Pd3o)
}

enum GuardKind {
    Pdhg,
    CondatVu,
    Pd3o,
}

#[allow(clippy::too_many_arguments)]
fn three_term_engine(
    f: &Functional,
    a: &LinearMap,
    g: &Functional,
    h: &Functional,
    cfg: &SolverConfig,
    x0: &DenseVector,
    y0: Option<&DenseVector>,
    gradient_extrapolation: bool,
    guard: GuardKind,
) -> Result<IterateTrace> {
    require_smooth(h)?;
    require_prox(g)?;
    require_prox(f)?;
    let sigma = cfg
        .sigma
        .ok_or_else(|| invalid("primal-dual methods need a dual step sigma"))?;
    let tau = cfg.tau;
    if tau <= 0.0 || sigma <= 0.0 {
        return Err(invalid("step sizes must be positive"));
    }

    let mut warnings = Vec::new();
    let norm_sq = a.norm_sq_auto();
    let l = h.lipschitz().unwrap_or(0.0);
    let ok = match guard {
        GuardKind::Pdhg => guards::pdhg_step_ok(sigma, tau, norm_sq),
        GuardKind::CondatVu => guards::condat_vu_step_ok(tau, sigma, norm_sq, l),
        GuardKind::Pd3o => guards::pd3o_step_ok(sigma, tau, norm_sq, l),
    };
    if !ok {
        warnings.push(format!(
            "step sizes sigma={sigma}, tau={tau} violate the sufficient condition \
             (||A||^2={norm_sq}, L={l})"
        ));
    }

    let mut rec = Recorder::new(cfg, warnings);
    let mut warm_g = ProxWarm::default();

    let objective =
        |x: &DenseVector| -> Result<f64> { Ok(f.eval(&a.apply(x)?)? + g.eval(x)? + h.eval(x)?) };

    let mut x = x0.clone();
    let mut y = match y0 {
        Some(y) => y.clone(),
        None => DenseVector::zeros(a.codomain()),
    };
    let mut grad = h.gradient(&x)?;
    rec.log(0, 0.0, &x, objective(&x)?);

    let mut k = 0usize;
    let mut passes = 0.0f64;
    while rec.stop.is_none() && rec.budget_left(passes) {
        let aty = a.adjoint(&y)?;
        let mut step = x.clone();
        step.axpy(-tau, &grad);
        step.axpy(-tau, &aty);
        let x_next = g.prox_warm(tau, &step, &mut warm_g)?;

        // extrapolate: 2 x_{k+1} - x_k (+ tau (grad_k - grad_{k+1}) for PD3O)
        let mut x_bar = DenseVector::zeros(x.shape());
        for i in 0..x.len() {
            x_bar[i] = 2.0 * x_next[i] - x[i];
        }
        let grad_next = if gradient_extrapolation {
            let gn = h.gradient(&x_next)?;
            x_bar.axpy(tau, &grad);
            x_bar.axpy(-tau, &gn);
            gn
        } else {
            h.gradient(&x_next)?
        };

        let mut dual_arg = y.clone();
        dual_arg.axpy(sigma, &a.apply(&x_bar)?);
        let y_next = f.prox_conjugate(sigma, &dual_arg)?;

        k += 1;
        passes += 1.0;
        if !rec.check_finite(&x_next) || !rec.check_finite(&y_next) {
            rec.log(k, passes, &x_next, f64::NAN);
            break;
        }
        rec.check_rel_change(&x_next, &x);
        x = x_next;
        y = y_next;
        grad = grad_next;
        rec.log(k, passes, &x, objective(&x)?);
    }
    Ok(rec.finish(x, passes))
}

fn pdhg_dual_extrapolated(
    f: &Functional,
    a: &LinearMap,
    g: &Functional,
    cfg: &SolverConfig,
    x0: &DenseVector,
    y0: Option<&DenseVector>,
) -> Result<IterateTrace> {
    require_prox(g)?;
    require_prox(f)?;
    let sigma = cfg
        .sigma
        .ok_or_else(|| invalid("primal-dual methods need a dual step sigma"))?;
    let tau = cfg.tau;
    if tau <= 0.0 || sigma <= 0.0 {
        return Err(invalid("step sizes must be positive"));
    }
    let mut warnings = Vec::new();
    let norm_sq = a.norm_sq_auto();
    if !guards::pdhg_step_ok(sigma, tau, norm_sq) {
        warnings.push(format!(
            "step sizes sigma={sigma}, tau={tau} violate sigma tau ||A||^2 < 1 (||A||^2={norm_sq})"
        ));
    }
    let mut rec = Recorder::new(cfg, warnings);
    let mut warm_g = ProxWarm::default();

    let objective = |x: &DenseVector| -> Result<f64> { Ok(f.eval(&a.apply(x)?)? + g.eval(x)?) };

    let mut x = x0.clone();
    let mut y = match y0 {
        Some(y) => y.clone(),
        None => DenseVector::zeros(a.codomain()),
    };
    let mut y_bar = y.clone();
    rec.log(0, 0.0, &x, objective(&x)?);

    let mut k = 0usize;
    let mut passes = 0.0f64;
    while rec.stop.is_none() && rec.budget_left(passes) {
        let w = a.adjoint(&y_bar)?;
        let mut step = x.clone();
        step.axpy(-tau, &w);
        let x_next = g.prox_warm(tau, &step, &mut warm_g)?;

        let mut dual_arg = y.clone();
        dual_arg.axpy(sigma, &a.apply(&x_next)?);
        let y_next = f.prox_conjugate(sigma, &dual_arg)?;
        for i in 0..y_bar.len() {
            y_bar[i] = 2.0 * y_next[i] - y[i];
        }

        k += 1;
        passes += 1.0;
        if !rec.check_finite(&x_next) || !rec.check_finite(&y_next) {
            rec.log(k, passes, &x_next, f64::NAN);
            break;
        }
        rec.check_rel_change(&x_next, &x);
        x = x_next;
        y = y_next;
        rec.log(k, passes, &x, objective(&x)?);
    }
    Ok(rec.finish(x, passes))
}

/// ADMM for `min_x f(Ax) + g(x)` via the splitting `z = Ax`.
///
/// The `z`-update is `prox_{f/tau}`; the `x`-update adds the proximal term
/// `tau/2 ||x - x_k||^2_Q` with `Q = I/beta - A*A`, `beta = 1/||A||^2`, which
/// turns the subproblem into a prox of `g` (for orthogonal `A` it is the
/// exact minimiser). `cfg.tau` is the augmented-Lagrangian parameter.
pub fn run_admm(
    f: &Functional,
    a: &LinearMap,
    g: &Functional,
    cfg: &SolverConfig,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    require_prox(f)?;
    require_prox(g)?;
    let tau = cfg.tau;
    if tau <= 0.0 {
        return Err(invalid("augmented-Lagrangian parameter must be positive"));
    }
    let norm_sq = a.norm_sq_auto();
    if norm_sq <= 0.0 {
        return Err(invalid("ADMM needs a nonzero coupling operator"));
    }
    let beta = 1.0 / norm_sq;

    let mut rec = Recorder::new(cfg, Vec::new());
    let mut warm_f = ProxWarm::default();
    let mut warm_g = ProxWarm::default();

    let objective = |x: &DenseVector| -> Result<f64> { Ok(f.eval(&a.apply(x)?)? + g.eval(x)?) };

    let mut x = x0.clone();
    let mut y = DenseVector::zeros(a.codomain());
    let mut residuals = Vec::new();
    rec.log(0, 0.0, &x, objective(&x)?);

    let mut k = 0usize;
    let mut passes = 0.0f64;
    while rec.stop.is_none() && rec.budget_left(passes) {
        let ax = a.apply(&x)?;
        // z-update: prox_{f/tau}(Ax + y/tau)
        let mut zarg = ax.clone();
        zarg.axpy(1.0 / tau, &y);
        let z = f.prox_warm(1.0 / tau, &zarg, &mut warm_f)?;

        // x-update: prox of g after linearising the coupling at x_k
        let mut resid = ax.clone();
        resid.sub_assign(&z);
        resid.axpy(1.0 / tau, &y);
        let back = a.adjoint(&resid)?;
        let mut xarg = x.clone();
        xarg.axpy(-beta, &back);
        let x_next = g.prox_warm(beta / tau, &xarg, &mut warm_g)?;

        // multiplier ascent on the constraint Ax = z
        let ax_next = a.apply(&x_next)?;
        let mut gap = ax_next.clone();
        gap.sub_assign(&z);
        y.axpy(tau, &gap);
        residuals.push(gap.norm());

        k += 1;
        passes += 1.0;
        if !rec.check_finite(&x_next) || !rec.check_finite(&y) {
            rec.log(k, passes, &x_next, f64::NAN);
            break;
        }
        rec.check_rel_change(&x_next, &x);
        x = x_next;
        rec.log(k, passes, &x, objective(&x)?);
    }
    let mut trace = rec.finish(x, passes);
    trace.residuals = residuals;
    Ok(trace)
}

/// Block coordinate descent on a smooth `h`: a partial gradient step on one
/// block of coordinates per iteration. `order` samples block indices
/// (cyclic, permuted or random); a pass is `d` coordinate updates.
pub fn run_coordinate_descent(
    h: &Functional,
    block_size: usize,
    order: &mut Sampler,
    cfg: &SolverConfig,
    x0: &DenseVector,
) -> Result<IterateTrace> {
    require_smooth(h)?;
    if block_size == 0 {
        return Err(invalid("block size must be positive"));
    }
    let d = x0.len();
    let n_blocks = d.div_ceil(block_size);
    if order.n() != n_blocks {
        return Err(invalid(format!(
            "order sampler ranges over {} blocks, expected {n_blocks}",
            order.n()
        )));
    }

    let mut rec = Recorder::new(cfg, Vec::new());
    let mut x = x0.clone();
    rec.log(0, 0.0, &x, h.eval(&x)?);

    let mut k = 0usize;
    let mut coords = 0usize;
    let mut passes = 0.0f64;
    while rec.stop.is_none() && rec.budget_left(passes) {
        let b = order.next_index();
        let lo = b * block_size;
        let hi = (lo + block_size).min(d);
        let grad = h.gradient(&x)?;
        for i in lo..hi {
            x[i] -= cfg.tau * grad[i];
        }
        k += 1;
        coords += hi - lo;
        passes = coords as f64 / d as f64;
        if !rec.check_finite(&x) {
            rec.log(k, passes, &x, f64::NAN);
            break;
        }
        if rec.due(passes) {
            rec.log(k, passes, &x, h.eval(&x)?);
        }
    }
    Ok(rec.finish(x, passes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SamplerKind;
    use crate::solvers::StopReason;
    use crate::vector::Shape;

    #[test]
    fn gd_one_step_on_scalar_quadratic() {
        // h(x) = x^2/2, tau = 1: converges in one step from 5
        let h = Functional::squared_l2(Shape::Flat(1), 1.0, None);
        let cfg = SolverConfig::new(1.0).with_passes(3.0);
        let trace = run_gd(&h, &cfg, &DenseVector::from_slice(&[5.0])).unwrap();
        assert!(trace.rows[1].objective.abs() < 1e-30);
        assert_eq!(trace.final_x[0], 0.0);
    }

    #[test]
    fn nag_zero_function_stays_put() {
        let h = Functional::zero(Shape::Flat(2));
        let cfg = SolverConfig::new(0.5).with_passes(5.0);
        let trace = run_nag(&h, &cfg, &DenseVector::from_slice(&[1.0, -2.0])).unwrap();
        assert_eq!(trace.final_x.as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn pgd_with_zero_g_equals_gd_bitwise() {
        let h = Functional::squared_l2(
            Shape::Flat(3),
            1.0,
            Some(DenseVector::from_slice(&[1.0, -0.5, 2.0])),
        );
        let cfg = SolverConfig::new(0.3).with_passes(20.0);
        let x0 = DenseVector::from_slice(&[0.1, 0.2, 0.3]);
        let a = run_gd(&h, &cfg, &x0).unwrap();
        let b = run_pgd(&Functional::zero(Shape::Flat(3)), &h, &cfg, &x0).unwrap();
        assert_eq!(a.final_x.as_slice(), b.final_x.as_slice());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.objective, rb.objective);
        }
    }

    #[test]
    fn step_size_warning_fires_past_two_over_l() {
        let h = Functional::squared_l2(Shape::Flat(1), 1.0, None);
        let cfg = SolverConfig::new(2.5).with_passes(1.0);
        let trace = run_gd(&h, &cfg, &DenseVector::from_slice(&[1.0])).unwrap();
        assert!(!trace.warnings.is_empty());
    }

    #[test]
    fn divergent_run_is_flagged() {
        // tau far beyond 2/L on a quadratic blows up
        let h = Functional::squared_l2(Shape::Flat(1), 1.0, None);
        let cfg = SolverConfig::new(1e8).with_passes(2000.0);
        let trace = run_gd(&h, &cfg, &DenseVector::from_slice(&[1.0])).unwrap();
        assert!(trace.diverged);
        assert_eq!(trace.stop, StopReason::Diverged);
    }

    #[test]
    fn coordinate_descent_zeroes_separable_quadratic_in_one_pass() {
        let h = Functional::squared_l2(Shape::Flat(4), 1.0, None);
        let mut order = Sampler::new(SamplerKind::Cyclic, 4, 0).unwrap();
        let cfg = SolverConfig::new(1.0).with_passes(1.0);
        let trace = run_coordinate_descent(
            &h,
            1,
            &mut order,
            &cfg,
            &DenseVector::from_slice(&[1.0, -2.0, 3.0, 4.0]),
        )
        .unwrap();
        assert!(trace.final_x.norm() < 1e-30);
    }
}
