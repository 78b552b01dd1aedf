//! Wires configurations into solvable problem instances and computes
//! high-accuracy reference solutions.

use crate::config::{ExperimentConfig, ExperimentKind, NoiseKind};
use crate::data::{add_gaussian_noise, beer_lambert_noise, gen_shepp_logan, gen_sparse_spikes};
use rand::RngExt;
use std::sync::Arc;
use stochograd::linops::{
    make_circulant_blur, make_grad_2d, make_parallel_radon, make_tgv_operator, DenseMatrix,
    LinearMap,
};
use stochograd::problem::{CompositeTerm, PartitionedProblem};
use stochograd::rng::{stream, STREAM_DATA};
use stochograd::sampling::partition_staggered;
use stochograd::solvers::deterministic::run_fista;
use stochograd::solvers::Restart;
use stochograd::{DenseVector, Error, Functional, Result, Shape, SolverConfig};

/// Three-term identification `f(Ax) + g(x) + h(x)` used by the primal-dual
/// solvers on problems whose regulariser is dualised.
#[derive(Debug, Clone)]
pub struct DualisedForm {
    pub f: Functional,
    pub a: LinearMap,
    pub g: Functional,
    pub h: Option<Functional>,
}

/// A built experiment instance.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub partitioned: PartitionedProblem,
    pub x0: DenseVector,
    pub truth: Option<DenseVector>,
    /// TV/TGV-dualised identification for PDHG on denoising and for the
    /// three-term solvers.
    pub dualised: Option<DualisedForm>,
    /// Rows of the measurement vector, for sinogram artifacts.
    pub data: DenseVector,
    pub image_shape: Option<(usize, usize)>,
}

/// Build the problem instance a config describes: operators, data with the
/// configured noise, regulariser, subset partition, and `x0 = 0`.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<BuiltProblem> {
    match cfg.experiment {
        ExperimentKind::SpikesDeblur => build_spikes(cfg),
        ExperimentKind::CtSheppLogan => build_ct(cfg),
        ExperimentKind::DenoiseTv => build_denoise_tv(cfg),
        ExperimentKind::DenoiseTgv => build_denoise_tgv(cfg),
        ExperimentKind::TridiagLs => build_tridiag(cfg),
    }
}

fn apply_noise(cfg: &ExperimentConfig, clean: &DenseVector, peak: f64) -> DenseVector {
    match cfg.problem.noise.kind {
        NoiseKind::None => clean.clone(),
        NoiseKind::Gaussian => add_gaussian_noise(clean, cfg.problem.noise.sigma, cfg.seed),
        NoiseKind::BeerLambert => {
            // scale to a physical attenuation range, corrupt, scale back
            let max = clean.norm_inf().max(1e-12);
            let s = peak / max;
            let scaled = clean.scaled(s);
            let noisy = beer_lambert_noise(&scaled, cfg.problem.noise.i0, cfg.seed);
            noisy.scaled(1.0 / s)
        }
    }
}

fn build_spikes(cfg: &ExperimentConfig) -> Result<BuiltProblem> {
    let d = cfg.problem.d;
    let op = make_circulant_blur(d, cfg.problem.kappa)?;
    let truth = gen_sparse_spikes(d, cfg.problem.n_spikes, cfg.seed);
    let clean = op.apply(&truth)?;
    let v = apply_noise(cfg, &clean, cfg.problem.peak_attenuation);

    // mu = mu_scale * ||K* v||_inf, computed on the normalised operator
    let mu = cfg.problem.mu_scale * op.adjoint(&v)?.norm_inf();
    let g = Functional::l1(Shape::Flat(d), mu);

    let part = partition_staggered(d, cfg.n_subsets())?;
    let partitioned = PartitionedProblem::least_squares_split(g, op, v.clone(), &part)?;
    Ok(BuiltProblem {
        x0: DenseVector::zeros(partitioned.domain()),
        truth: Some(truth),
        dualised: None,
        data: v,
        partitioned,
        image_shape: None,
    })
}

fn build_ct(cfg: &ExperimentConfig) -> Result<BuiltProblem> {
    let size = cfg.problem.size;
    let n_det = cfg.detectors();
    let n_angles = cfg.problem.angles;
    let op = make_parallel_radon(size, size, n_angles, n_det)?;
    let truth = gen_shepp_logan(size);
    let clean = op.apply(&truth)?;
    let v = apply_noise(cfg, &clean, cfg.problem.peak_attenuation);

    let g = Functional::tv_with_bounds(
        cfg.problem.alpha,
        size,
        size,
        cfg.solver.fgp_iters,
        0.0,
        f64::INFINITY,
    )?;

    // partition over angles, staggered, then expanded to sinogram rows
    let n = cfg.n_subsets();
    if n > n_angles {
        return Err(Error::Invalid(format!(
            "{n} subsets exceed {n_angles} angles"
        )));
    }
    let angle_part = partition_staggered(n_angles, n)?;
    let parent = Arc::new(op.clone());
    let mut terms = Vec::with_capacity(n);
    let geometry = match &op {
        LinearMap::ParallelRadon(geo) => geo.clone(),
        _ => unreachable!("constructed above"),
    };
    for angle_set in angle_part.subsets() {
        let rows = geometry.rows_for_angles(angle_set);
        let vals: Vec<f64> = rows.iter().map(|&r| v[r]).collect();
        let sub = if n == 1 {
            op.clone()
        } else {
            LinearMap::row_subset(parent.clone(), rows)?
        };
        terms.push(CompositeTerm::least_squares(
            sub,
            DenseVector::from_slice(&vals),
        )?);
    }
    let full = CompositeTerm::least_squares(op, v.clone())?;
    let partitioned = PartitionedProblem::new(g, full, terms)?;

    // three-term identification, TV dualised: f = alpha |.|_{2,1} of grad,
    // g = nonnegativity, h = data fit
    let dualised = DualisedForm {
        f: Functional::group_l2(Shape::Flat(2 * size * size), cfg.problem.alpha, 2)?,
        a: make_grad_2d(size, size)?,
        g: Functional::nonneg(Shape::Image { h: size, w: size }),
        h: Some(partitioned.full_as_functional()),
    };

    Ok(BuiltProblem {
        x0: DenseVector::zeros(partitioned.domain()),
        truth: Some(truth),
        dualised: Some(dualised),
        data: v,
        partitioned,
        image_shape: Some((size, size)),
    })
}

fn build_denoise_tv(cfg: &ExperimentConfig) -> Result<BuiltProblem> {
    let size = cfg.problem.size;
    let shape = Shape::Image { h: size, w: size };
    let truth = gen_shepp_logan(size);
    let v = apply_noise(cfg, &truth, cfg.problem.peak_attenuation);

    let g = Functional::tv(cfg.problem.alpha, size, size, cfg.solver.fgp_iters)?;
    let full = CompositeTerm::least_squares(
        LinearMap::identity(shape),
        v.clone().with_shape(Shape::Flat(size * size))?,
    )?;
    let terms = vec![full.clone()];
    let partitioned = PartitionedProblem::new(g, full, terms)?;
    let dualised = DualisedForm {
        f: Functional::group_l2(Shape::Flat(2 * size * size), cfg.problem.alpha, 2)?,
        a: make_grad_2d(size, size)?,
        g: Functional::squared_l2(shape, 1.0, Some(v.clone())),
        h: None,
    };
    Ok(BuiltProblem {
        x0: DenseVector::zeros(shape),
        truth: Some(truth),
        dualised: Some(dualised),
        data: v,
        partitioned,
        image_shape: Some((size, size)),
    })
}

fn build_denoise_tgv(cfg: &ExperimentConfig) -> Result<BuiltProblem> {
    let size = cfg.problem.size;
    let hw = size * size;
    let truth = gen_shepp_logan(size);
    let v = apply_noise(cfg, &truth, cfg.problem.peak_attenuation);
    let v_flat = v.clone().with_shape(Shape::Flat(hw))?;

    // x = (u, w): the data term reads the image block through the selector
    // [I | 0]
    let selector = stochograd::linops::make_block_operator(vec![vec![
        stochograd::linops::BlockCell::Op(LinearMap::identity(Shape::Flat(hw))),
        stochograd::linops::BlockCell::Op(LinearMap::zero(Shape::Flat(2 * hw), Shape::Flat(hw))),
    ]])?;

    let full = CompositeTerm::least_squares(selector, v_flat.clone())?;
    let partitioned = PartitionedProblem::new(
        Functional::zero(Shape::Flat(3 * hw)),
        full.clone(),
        vec![full.clone()],
    )?;

    let lam = cfg.problem.alpha;
    let beta = cfg.problem.beta;
    let dualised = DualisedForm {
        f: Functional::separable_sum(vec![
            Functional::group_l2(Shape::Flat(2 * hw), lam, 2)?,
            Functional::group_l2(Shape::Flat(4 * hw), lam * beta, 4)?,
        ])?,
        a: make_tgv_operator(size, size)?,
        g: Functional::separable_sum(vec![
            Functional::squared_l2(Shape::Flat(hw), 1.0, Some(v_flat)),
            Functional::zero(Shape::Flat(2 * hw)),
        ])?,
        h: None,
    };
    Ok(BuiltProblem {
        x0: DenseVector::zeros(Shape::Flat(3 * hw)),
        truth: Some(truth),
        dualised: Some(dualised),
        data: v,
        partitioned,
        image_shape: Some((size, size)),
    })
}

fn build_tridiag(cfg: &ExperimentConfig) -> Result<BuiltProblem> {
    let n = 100usize;
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        *m.at_mut(i, i) = 2.0;
        if i + 1 < n {
            *m.at_mut(i, i + 1) = -1.0;
            *m.at_mut(i + 1, i) = -1.0;
        }
    }
    let mut rng = stream(cfg.seed, STREAM_DATA);
    let v = DenseVector::from_slice(
        &(0..n)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect::<Vec<_>>(),
    );
    let part = partition_staggered(n, cfg.n_subsets())?;
    let partitioned = PartitionedProblem::least_squares_split(
        Functional::zero(Shape::Flat(n)),
        LinearMap::dense(m),
        v.clone(),
        &part,
    )?;
    Ok(BuiltProblem {
        x0: DenseVector::zeros(Shape::Flat(n)),
        truth: None,
        dualised: None,
        data: v,
        partitioned,
        image_shape: None,
    })
}

/// High-accuracy reference by FISTA with function-value restart, run to a
/// relative iterate change of 1e-9 or the pass budget. The objective at the
/// reference uses the exact TV value (the prox inner budget is raised for
/// the run itself).
pub fn compute_reference(built: &BuiltProblem, budget: f64) -> Result<(DenseVector, f64)> {
    let mut tight = built.partitioned.clone();
    // tighter inner prox budget than the solvers under test
    if let Functional::Tv {
        ref mut fgp_iters, ..
    } = tight.g
    {
        *fgp_iters = (*fgp_iters).max(2000);
    }
    let h = tight.full_as_functional();
    let l = tight.smoothness.l.max(f64::MIN_POSITIVE);
    let cfg = SolverConfig::new(1.0 / l)
        .with_restart(Restart::FunctionValue)
        .with_passes(budget)
        .with_rel_change_tol(1e-9);
    let trace = run_fista(&tight.g, &h, &cfg, &built.x0)?;
    let x_star = trace.final_x;
    let phi_star = built.partitioned.g.eval(&x_star)? + built.partitioned.full.eval(&x_star)?;
    Ok((x_star, phi_star))
}
