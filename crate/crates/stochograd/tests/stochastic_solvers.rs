//! Stochastic estimator and solver properties: unbiasedness by enumeration,
//! variance-reduction limits, trajectory equivalences, data-pass accounting,
//! and the SPDHG bookkeeping identities.

use rand::RngExt;
use stochograd::linops::{make_circulant_blur, DenseMatrix, LinearMap};
use stochograd::problem::{CompositeTerm, PartitionedProblem};
use stochograd::rng::{stream, STREAM_TEST};
use stochograd::sampling::partition_staggered;
use stochograd::solvers::deterministic::{run_pdhg, run_pgd};
use stochograd::solvers::stochastic::{
    run_accelerated_vr, run_adaptive, run_saga, run_sgd, run_spdhg, run_svrg, spdhg_default_steps,
    stochastic_gradient, AdaptiveVariant, Estimator, EstimatorState, GradientTable, SagaForm,
    SvrgAnchor,
};
use stochograd::solvers::{Extrapolation, StepSchedule};
use stochograd::{DenseVector, Functional, Sampler, Shape, SolverConfig};
use testkit::max_rel_iterate_diff;

fn random_vec(shape: Shape, seed: u64) -> DenseVector {
    let mut rng = stream(seed, STREAM_TEST);
    DenseVector::new(
        (0..shape.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
        shape,
    )
    .unwrap()
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = stream(seed, STREAM_TEST);
    DenseMatrix::new(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

/// Least-squares problem over a dense matrix split into `n` staggered row
/// blocks, with regulariser `g`.
fn dense_ls_problem(
    rows: usize,
    cols: usize,
    n: usize,
    g: Functional,
    seed: u64,
) -> PartitionedProblem {
    let m = random_matrix(rows, cols, seed);
    let v = random_vec(Shape::Flat(rows), seed + 1);
    let part = partition_staggered(rows, n).unwrap();
    PartitionedProblem::least_squares_split(g, LinearMap::dense(m), v, &part).unwrap()
}

#[test]
fn estimator_enumeration_unbiasedness() {
    // mean over i of the directions equals the full gradient for SGD, SAGA
    // (fresh and stale tables) and SVRG; SAG matches its own biased formula
    let p = dense_ls_problem(18, 7, 6, Functional::zero(Shape::Flat(7)), 700);
    let x = random_vec(Shape::Flat(7), 41);
    let stale_point = random_vec(Shape::Flat(7), 42);
    let full = p.full.gradient(&x).unwrap();
    let nf = p.n() as f64;

    let states: Vec<(&str, EstimatorState)> = vec![
        ("sgd", EstimatorState::Sgd),
        (
            "saga-stale",
            EstimatorState::Saga(GradientTable::init(&p, &stale_point).unwrap()),
        ),
        (
            "svrg-stale",
            EstimatorState::Svrg(SvrgAnchor::refresh(&p, &stale_point).unwrap()),
        ),
    ];
    for (label, state) in states {
        let mut mean = DenseVector::zeros(x.shape());
        for i in 0..p.n() {
            let mut st = state.clone();
            let (dir, _) = stochastic_gradient(&p, &mut st, &x, i).unwrap();
            mean.axpy(1.0 / nf, &dir);
        }
        let mut diff = mean;
        diff.sub_assign(&full);
        assert!(
            diff.norm() <= 1e-10 * (1.0 + full.norm()),
            "{label}: bias {}",
            diff.norm()
        );
    }

    // SAG: mean over i equals grad h / n + (1 - 1/n) * table sum
    let table = GradientTable::init(&p, &stale_point).unwrap();
    let mut want = full.scaled(1.0 / nf);
    want.axpy(1.0 - 1.0 / nf, &table.sum);
    let mut mean = DenseVector::zeros(x.shape());
    for i in 0..p.n() {
        let mut st = EstimatorState::Sag(table.clone());
        let (dir, _) = stochastic_gradient(&p, &mut st, &x, i).unwrap();
        mean.axpy(1.0 / nf, &dir);
    }
    let mut diff = mean;
    diff.sub_assign(&want);
    assert!(diff.norm() <= 1e-10 * (1.0 + want.norm()), "sag formula");
}

#[test]
fn variance_reduction_vanishes_at_the_minimiser_of_consistent_data() {
    // consistent least squares: v = K x_true, so grad h_i(x_true) = 0 and
    // the VR directions vanish identically
    let d = 12;
    let op = make_circulant_blur(d, 5).unwrap();
    let x_true = random_vec(Shape::Flat(d), 90);
    let v = op.apply(&x_true).unwrap();
    let part = partition_staggered(d, 4).unwrap();
    let p = PartitionedProblem::least_squares_split(Functional::zero(Shape::Flat(d)), op, v, &part)
        .unwrap();

    let anchor = SvrgAnchor::refresh(&p, &x_true).unwrap();
    for i in 0..p.n() {
        let mut st = EstimatorState::Svrg(anchor.clone());
        let (dir, _) = stochastic_gradient(&p, &mut st, &x_true, i).unwrap();
        assert_eq!(dir.norm(), 0.0, "svrg direction at the minimiser");
    }
    let table = GradientTable::init(&p, &x_true).unwrap();
    for i in 0..p.n() {
        let mut st = EstimatorState::Saga(table.clone());
        let (dir, _) = stochastic_gradient(&p, &mut st, &x_true, i).unwrap();
        assert_eq!(
            dir.norm(),
            0.0,
            "saga direction with table at the minimiser"
        );
    }
}

#[test]
fn modified_saga_follows_the_standard_trajectory() {
    let p = dense_ls_problem(24, 10, 6, Functional::l1(Shape::Flat(10), 0.05), 800);
    let tau = 1.0 / (3.0 * p.n() as f64 * p.smoothness.l_max);
    let x0 = DenseVector::zeros(Shape::Flat(10));
    let cfg = SolverConfig::new(tau).with_passes(20.0).recording();
    let mut s1 = Sampler::uniform(p.n(), 33).unwrap();
    let mut s2 = Sampler::uniform(p.n(), 33).unwrap();
    let a = run_saga(&p, &cfg, &mut s1, SagaForm::Standard, &x0).unwrap();
    let b = run_saga(&p, &cfg, &mut s2, SagaForm::Modified, &x0).unwrap();
    let worst = max_rel_iterate_diff(&a.iterates, &b.iterates);
    assert!(worst <= 1e-10, "trajectories drifted apart: {worst}");
}

#[test]
fn saga_matches_pgd_reference_on_lasso() {
    // 40x20 lasso at tau = 1/(3 n L_max): final objective within 1e-7 of the
    // long-run PGD reference
    let g = Functional::l1(Shape::Flat(20), 0.1);
    let p = dense_ls_problem(40, 20, 8, g.clone(), 900);
    let h = p.full_as_functional();
    let l = p.smoothness.l;
    let x0 = DenseVector::zeros(Shape::Flat(20));
    let reference = run_pgd(
        &g,
        &h,
        &SolverConfig::new(1.0 / l).with_passes(60_000.0),
        &x0,
    )
    .unwrap();
    let phi_star = reference.last_objective();

    let tau = 1.0 / (3.0 * p.n() as f64 * p.smoothness.l_max);
    let mut sampler = Sampler::uniform(p.n(), 7).unwrap();
    let cfg = SolverConfig::new(tau).with_passes(4000.0);
    let trace = run_saga(&p, &cfg, &mut sampler, SagaForm::Standard, &x0).unwrap();
    let gap = trace.last_objective() - phi_star;
    assert!(
        gap.abs() <= 1e-7 * (1.0 + phi_star.abs()),
        "objective gap {gap}"
    );
}

#[test]
fn svrg_matches_pgd_reference_on_lasso() {
    let g = Functional::l1(Shape::Flat(16), 0.08);
    let p = dense_ls_problem(32, 16, 8, g.clone(), 910);
    let h = p.full_as_functional();
    let l = p.smoothness.l;
    let x0 = DenseVector::zeros(Shape::Flat(16));
    let reference = run_pgd(
        &g,
        &h,
        &SolverConfig::new(1.0 / l).with_passes(60_000.0),
        &x0,
    )
    .unwrap();
    let phi_star = reference.last_objective();

    let tau = 1.0 / (3.0 * p.n() as f64 * p.smoothness.l_max);
    let mut sampler = Sampler::uniform(p.n(), 8).unwrap();
    let cfg = SolverConfig::new(tau).with_passes(4000.0);
    let trace = run_svrg(&p, &cfg, &mut sampler, None, None, &x0).unwrap();
    let gap = trace.last_objective() - phi_star;
    assert!(
        gap.abs() <= 1e-7 * (1.0 + phi_star.abs()),
        "objective gap {gap}"
    );
}

#[test]
fn sgd_interpolation_regime_converges_with_constant_step() {
    // noise-free consistent data: constant tau = 1/(n L_max) reaches 1e-6
    let d = 16;
    let op = make_circulant_blur(d, 5).unwrap();
    let x_true = random_vec(Shape::Flat(d), 95);
    let v = op.apply(&x_true).unwrap();
    let part = partition_staggered(d, 4).unwrap();
    let p = PartitionedProblem::least_squares_split(Functional::zero(Shape::Flat(d)), op, v, &part)
        .unwrap();
    let tau = 1.0 / (p.n() as f64 * p.smoothness.l_max);
    let mut sampler = Sampler::uniform(p.n(), 3).unwrap();
    let cfg = SolverConfig::new(tau)
        .with_passes(4000.0)
        .with_reference_obj(0.0);
    let trace = run_sgd(
        &p,
        &StepSchedule::Constant(tau),
        &mut sampler,
        &cfg,
        &DenseVector::zeros(Shape::Flat(d)),
    )
    .unwrap();
    assert!(
        trace.last_subopt().unwrap() <= 1e-6,
        "subopt {}",
        trace.last_subopt().unwrap()
    );
}

#[test]
fn svrg_with_unit_inner_length_takes_full_gradient_steps() {
    // t = 1 refreshes the anchor before every inner step, so each update is
    // an exact full-gradient PGD step (the per-pass accounting differs)
    let g = Functional::l1(Shape::Flat(8), 0.05);
    let p = dense_ls_problem(16, 8, 4, g.clone(), 920);
    let h = p.full_as_functional();
    let tau = 0.4 / p.smoothness.l;
    let x0 = DenseVector::zeros(Shape::Flat(8));

    let mut sampler = Sampler::uniform(p.n(), 5).unwrap();
    let cfg = SolverConfig::new(tau).with_passes(40.0).recording();
    let svrg = run_svrg(&p, &cfg, &mut sampler, Some(1), None, &x0).unwrap();

    let pgd = run_pgd(
        &g,
        &h,
        &SolverConfig::new(tau).with_passes(40.0).recording(),
        &x0,
    )
    .unwrap();
    // traces log at pass boundaries, so align snapshots by iteration count
    let mut compared = 0;
    for (idx, row) in svrg.rows.iter().enumerate() {
        if row.k < pgd.iterates.len() {
            let rel = svrg.iterates[idx].rel_dist(&pgd.iterates[row.k]);
            assert!(rel <= 1e-10, "k={}: rel {rel}", row.k);
            compared += 1;
        }
    }
    assert!(compared > 3);
}

#[test]
fn data_pass_accounting_is_exact() {
    let p = dense_ls_problem(20, 6, 4, Functional::zero(Shape::Flat(6)), 930);
    let x0 = DenseVector::zeros(Shape::Flat(6));
    let n = p.n() as f64;

    // SGD: one eval per iteration, rows at integer passes starting from 0
    let mut s = Sampler::uniform(p.n(), 1).unwrap();
    let sgd = run_sgd(
        &p,
        &StepSchedule::Constant(1e-3),
        &mut s,
        &SolverConfig::new(1e-3).with_passes(3.0),
        &x0,
    )
    .unwrap();
    let passes: Vec<f64> = sgd.rows.iter().map(|r| r.passes).collect();
    assert_eq!(passes, vec![0.0, 1.0, 2.0, 3.0]);

    // SAGA: table init charges one pass up front
    let mut s = Sampler::uniform(p.n(), 1).unwrap();
    let saga = run_saga(
        &p,
        &SolverConfig::new(1e-3).with_passes(3.0),
        &mut s,
        SagaForm::Standard,
        &x0,
    )
    .unwrap();
    let passes: Vec<f64> = saga.rows.iter().map(|r| r.passes).collect();
    assert_eq!(passes, vec![1.0, 2.0, 3.0]);

    // SVRG two-loop with t = 2n: anchor pass + 2 evals per inner step;
    // after j full inner loops the counter reads (1 + j) * n + 4 n j evals
    let mut s = Sampler::uniform(p.n(), 1).unwrap();
    let svrg = run_svrg(
        &p,
        &SolverConfig::new(1e-3).with_passes(11.0),
        &mut s,
        None,
        None,
        &x0,
    )
    .unwrap();
    // first row after the initial anchor
    assert_eq!(svrg.rows[0].passes, 1.0);
    // the trace must account exactly: evals = n * (1 + refreshes) + 2 * k
    let last = svrg.rows.last().unwrap();
    let refreshes = 1 + last.k / (2 * p.n());
    let expect = (refreshes as f64 * n + 2.0 * last.k as f64) / n;
    assert!(
        (last.passes - expect).abs() < 1e-12,
        "passes {} vs expected {expect}",
        last.passes
    );
}

#[test]
fn loopless_anchor_cost_matches_two_loop_in_expectation() {
    // two-loop with t = 2n refreshes once per 2n iterations: 1/(2n) pass per
    // iteration; loopless with p = 1/(2n) spends p * n / n of a pass per
    // iteration in expectation, the same number
    let n = 10usize;
    let t = 2 * n;
    let per_iter_two_loop = 1.0 / t as f64;
    let p_loopless = 1.0 / (2.0 * n as f64);
    assert_eq!(per_iter_two_loop, p_loopless);

    // and empirically the refresh frequency concentrates around p
    let p = dense_ls_problem(20, 6, 4, Functional::zero(Shape::Flat(6)), 940);
    let x0 = DenseVector::zeros(Shape::Flat(6));
    let mut s = Sampler::uniform(p.n(), 2).unwrap();
    let probe = run_svrg(
        &p,
        &SolverConfig::new(1e-4).with_passes(400.0),
        &mut s,
        None,
        Some(1.0 / (2.0 * p.n() as f64)),
        &x0,
    )
    .unwrap();
    let last = probe.rows.last().unwrap();
    // evals = n * (1 + refreshes) + 2k  =>  refreshes from the trace
    let refreshes =
        ((last.passes * p.n() as f64 - 2.0 * last.k as f64) / p.n() as f64 - 1.0).round();
    let expected = last.k as f64 / (2.0 * p.n() as f64);
    assert!(
        (refreshes - expected).abs() <= 4.0 * expected.sqrt().max(1.0),
        "refreshes {refreshes} vs expected {expected}"
    );
}

#[test]
fn accelerated_vr_with_eta_one_is_the_plain_estimator_loop() {
    let g = Functional::l1(Shape::Flat(8), 0.02);
    let p = dense_ls_problem(16, 8, 4, g, 950);
    let tau = 1.0 / (3.0 * p.n() as f64 * p.smoothness.l_max);
    let x0 = DenseVector::zeros(Shape::Flat(8));
    let cfg = SolverConfig::new(tau).with_passes(12.0).recording();

    let mut s1 = Sampler::uniform(p.n(), 77).unwrap();
    let acc = run_accelerated_vr(
        &p,
        Estimator::Saga,
        &cfg,
        &mut s1,
        stochograd::solvers::stochastic::EtaRule::Constant(1.0),
        &x0,
    )
    .unwrap();
    let mut s2 = Sampler::uniform(p.n(), 77).unwrap();
    let plain = run_saga(&p, &cfg, &mut s2, SagaForm::Standard, &x0).unwrap();
    // identical sampling and eta = 1 collapse the three sequences onto z
    let shorter = acc.iterates.len().min(plain.iterates.len());
    for k in 0..shorter {
        assert!(acc.iterates[k].rel_dist(&plain.iterates[k]) <= 1e-12);
    }
}

#[test]
fn accelerated_full_gradient_shows_fast_polynomial_decay() {
    // g = 0, n = 1: the scheme is an accelerated full-gradient method; fit
    // the decay slope of the sub-optimality over k in [10, 1000]
    let d = 30;
    let m = random_matrix(d, d, 961);
    let v = random_vec(Shape::Flat(d), 962);
    let full = CompositeTerm::least_squares(LinearMap::dense(m.clone()), v.clone()).unwrap();
    let p = PartitionedProblem::new(
        Functional::zero(Shape::Flat(d)),
        full.clone(),
        vec![CompositeTerm::least_squares(LinearMap::dense(m.clone()), v.clone()).unwrap()],
    )
    .unwrap();
    let x_star = DenseVector::from_slice(&testkit::solve_dense(&m, v.as_slice()));
    let phi_star = full.eval(&x_star).unwrap();

    let tau = 1.0 / p.smoothness.l;
    let x0 = random_vec(Shape::Flat(d), 963);
    let mut s = Sampler::uniform(1, 0).unwrap();
    let cfg = SolverConfig::new(tau)
        .with_passes(4100.0)
        .with_reference_obj(phi_star);
    let trace = run_accelerated_vr(
        &p,
        Estimator::Svrg,
        &cfg,
        &mut s,
        stochograd::solvers::stochastic::EtaRule::TwoOverKPlusTwo,
        &x0,
    )
    .unwrap();

    // slope of log subopt vs log k between k=10 and k=1000
    let pick = |kk: usize| {
        trace
            .rows
            .iter()
            .filter(|r| r.k >= kk)
            .map(|r| r.subopt.unwrap().max(1e-300))
            .next()
            .unwrap()
    };
    let (s10, s1000) = (pick(10), pick(1000));
    let slope = (s1000.ln() - s10.ln()) / ((1000.0f64).ln() - (10.0f64).ln());
    assert!(slope <= -1.5, "decay slope {slope} too shallow");
}

#[test]
fn accelerated_svrg_beats_plain_svrg_on_an_ill_conditioned_quadratic() {
    // matched step sizes; the accelerated wrapper should need fewer passes
    // to 1e-6 sub-optimality
    let (rows, cols, n) = (40, 20, 4);
    let mut m = random_matrix(rows, cols, 971);
    // squash the trailing columns to widen the spectrum
    for r in 0..rows {
        for c in 0..cols {
            let f = 1.0 / (1.0 + c as f64).powf(1.35);
            *m.at_mut(r, c) *= f;
        }
    }
    let v = random_vec(Shape::Flat(rows), 972).scaled(0.3);
    let part = partition_staggered(rows, n).unwrap();
    let p = PartitionedProblem::least_squares_split(
        Functional::zero(Shape::Flat(cols)),
        LinearMap::dense(m.clone()),
        v.clone(),
        &part,
    )
    .unwrap();
    let reference = run_pgd(
        &p.g,
        &p.full_as_functional(),
        &SolverConfig::new(1.0 / p.smoothness.l).with_passes(200_000.0),
        &DenseVector::zeros(Shape::Flat(cols)),
    )
    .unwrap();
    let phi_star = reference.last_objective();

    let tau = 1.0 / (3.0 * n as f64 * p.smoothness.l_max);
    let budget = 15_000.0;
    let x0 = DenseVector::zeros(Shape::Flat(cols));
    let passes_to_tol = |trace: &stochograd::IterateTrace| {
        trace
            .rows
            .iter()
            .find(|r| r.objective - phi_star <= 1e-6 * (1.0 + phi_star.abs()))
            .map(|r| r.passes)
    };

    let mut s1 = Sampler::uniform(n, 5).unwrap();
    let plain = run_svrg(
        &p,
        &SolverConfig::new(tau).with_passes(budget),
        &mut s1,
        None,
        None,
        &x0,
    )
    .unwrap();
    let mut s2 = Sampler::uniform(n, 5).unwrap();
    let acc = run_accelerated_vr(
        &p,
        Estimator::Svrg,
        &SolverConfig::new(tau).with_passes(budget),
        &mut s2,
        stochograd::solvers::stochastic::EtaRule::TwoOverKPlusTwo,
        &x0,
    )
    .unwrap();

    let acc_passes = passes_to_tol(&acc).expect("accelerated run must reach the tolerance");
    // a plain run that exhausts the budget only strengthens the claim
    if let Some(pp) = passes_to_tol(&plain) {
        assert!(
            acc_passes < pp,
            "accelerated {acc_passes} vs plain {pp} passes"
        );
    }
}

#[test]
fn spdhg_single_block_matches_dual_extrapolated_pdhg() {
    let d = 20;
    let op = make_circulant_blur(d, 5).unwrap();
    let v = random_vec(Shape::Flat(d), 980);
    let part = partition_staggered(d, 1).unwrap();
    let g = Functional::l1(Shape::Flat(d), 0.05);
    let p =
        PartitionedProblem::least_squares_split(g.clone(), op.clone(), v.clone(), &part).unwrap();

    let (sigma, tau) = spdhg_default_steps(&p, 1.0, 0.99);
    let mut cfg = SolverConfig::new(tau)
        .with_sigma(sigma)
        .with_passes(60.0)
        .recording();
    let mut sampler = Sampler::uniform(1, 0).unwrap();
    let (spdhg, _) =
        run_spdhg(&p, &cfg, &mut sampler, &DenseVector::zeros(Shape::Flat(d))).unwrap();

    cfg.extrapolation = Extrapolation::Dual;
    let f = Functional::squared_l2(Shape::Flat(d), 1.0, Some(v));
    let pdhg = run_pdhg(&f, &op, &g, &cfg, &DenseVector::zeros(Shape::Flat(d)), None).unwrap();

    assert_eq!(spdhg.iterates.len(), pdhg.iterates.len());
    let worst = max_rel_iterate_diff(&spdhg.iterates, &pdhg.iterates);
    assert!(worst <= 1e-12, "single-block SPDHG vs PDHG: {worst}");
}

#[test]
fn spdhg_incremental_w_matches_recomputed_sum() {
    let d = 24;
    let op = make_circulant_blur(d, 7).unwrap();
    let truth = random_vec(Shape::Flat(d), 990);
    let mut v = op.apply(&truth).unwrap();
    let noise = random_vec(Shape::Flat(d), 991);
    v.axpy(0.05, &noise);
    let part = partition_staggered(d, 6).unwrap();
    let p =
        PartitionedProblem::least_squares_split(Functional::l1(Shape::Flat(d), 0.02), op, v, &part)
            .unwrap();
    let (sigma, tau) = spdhg_default_steps(&p, 1.0, 0.99);
    let cfg = SolverConfig::new(tau).with_sigma(sigma).with_passes(10.0);
    let mut sampler = Sampler::uniform(p.n(), 4).unwrap();
    let (_, state) =
        run_spdhg(&p, &cfg, &mut sampler, &DenseVector::zeros(Shape::Flat(d))).unwrap();
    let recomputed = state.recompute_w(&p).unwrap();
    let mut diff = recomputed;
    diff.sub_assign(&state.w);
    assert!(diff.norm() <= 1e-8, "w drift {}", diff.norm());
}

#[test]
fn spdhg_emits_warning_exactly_when_guard_fires() {
    let p = dense_ls_problem(12, 6, 3, Functional::zero(Shape::Flat(6)), 995);
    let max_norm_sq = p.smoothness.l_i.iter().fold(0.0f64, |m, &v| m.max(v));
    let boundary = 1.0 / (p.n() as f64 * max_norm_sq);
    let x0 = DenseVector::zeros(Shape::Flat(6));

    // just inside: no warning
    let cfg = SolverConfig::new(boundary * 0.99)
        .with_sigma(1.0)
        .with_passes(1.0);
    let mut s = Sampler::uniform(p.n(), 0).unwrap();
    let (ok_trace, _) = run_spdhg(&p, &cfg, &mut s, &x0).unwrap();
    assert!(ok_trace.warnings.is_empty());

    // just past the threshold: warning
    let cfg = SolverConfig::new(boundary * 1.01)
        .with_sigma(1.0)
        .with_passes(1.0);
    let mut s = Sampler::uniform(p.n(), 0).unwrap();
    let (warn_trace, _) = run_spdhg(&p, &cfg, &mut s, &x0).unwrap();
    assert_eq!(warn_trace.warnings.len(), 1);
}

#[test]
fn adaptive_diag_with_uniform_history_matches_sgd_up_to_scale() {
    // a problem with one subset and constant gradient magnitude: after the
    // first iteration the preconditioner is proportional to the identity
    let p = dense_ls_problem(6, 3, 2, Functional::zero(Shape::Flat(3)), 996);
    let x0 = DenseVector::zeros(Shape::Flat(3));
    let mut s = Sampler::uniform(p.n(), 9).unwrap();
    let trace = run_adaptive(
        &p,
        &SolverConfig::new(1e-3).with_passes(5.0),
        &mut s,
        AdaptiveVariant::DiagAccum { epsilon: 1e-8 },
        &x0,
    )
    .unwrap();
    assert!(trace.rows.last().unwrap().objective <= trace.rows[0].objective);
}

#[test]
fn adaptive_diag_zero_history_keeps_the_largest_step() {
    // coordinate with zero gradient history keeps effective step tau/eps:
    // build data whose gradients never touch the last coordinate
    let rows = 4;
    let mut m = DenseMatrix::zeros(rows, 3);
    for r in 0..rows {
        *m.at_mut(r, 0) = 1.0;
        *m.at_mut(r, 1) = -0.5;
        // column 2 stays zero: no gradient signal ever
    }
    let v = random_vec(Shape::Flat(rows), 997);
    let part = partition_staggered(rows, 2).unwrap();
    let p = PartitionedProblem::least_squares_split(
        Functional::zero(Shape::Flat(3)),
        LinearMap::dense(m),
        v,
        &part,
    )
    .unwrap();
    let eps = 1e-8;
    let mut s = Sampler::uniform(p.n(), 10).unwrap();
    // a single iteration: the update on coordinate 2 must be zero while its
    // accumulated denominator is still exactly eps
    let trace = run_adaptive(
        &p,
        &SolverConfig::new(1e-3).with_passes(3.0),
        &mut s,
        AdaptiveVariant::DiagAccum { epsilon: eps },
        &DenseVector::zeros(Shape::Flat(3)),
    )
    .unwrap();
    assert_eq!(trace.final_x[2], 0.0);
}

#[test]
fn adam_decreases_the_objective_on_a_least_squares_problem() {
    let p = dense_ls_problem(24, 8, 4, Functional::zero(Shape::Flat(8)), 998);
    let mut s = Sampler::uniform(p.n(), 11).unwrap();
    let trace = run_adaptive(
        &p,
        &SolverConfig::new(0.05).with_passes(60.0),
        &mut s,
        AdaptiveVariant::adam_default(),
        &DenseVector::zeros(Shape::Flat(8)),
    )
    .unwrap();
    let first = trace.rows[0].objective;
    let last = trace.rows.last().unwrap().objective;
    assert!(
        last < 0.5 * first,
        "adam made little progress: {first} -> {last}"
    );
}

#[test]
fn sgd_decaying_schedule_decreases_objective_on_noisy_deblurring() {
    let d = 64;
    let op = make_circulant_blur(d, 9).unwrap();
    let truth = random_vec(Shape::Flat(d), 999);
    let mut v = op.apply(&truth).unwrap();
    v.axpy(0.02, &random_vec(Shape::Flat(d), 1000));
    let part = partition_staggered(d, 8).unwrap();
    let p =
        PartitionedProblem::least_squares_split(Functional::l1(Shape::Flat(d), 0.01), op, v, &part)
            .unwrap();
    let n = p.n();
    let tau0 = 1.0 / (2.0 * n as f64 * p.smoothness.l_max);
    let schedule = StepSchedule::SgdDecay {
        tau0,
        c: 0.01,
        power: stochograd::solvers::DecayPower::Linear,
    };
    let mut s = Sampler::uniform(n, 12).unwrap();
    let trace = run_sgd(
        &p,
        &schedule,
        &mut s,
        &SolverConfig::new(tau0).with_passes(20.0),
        &DenseVector::zeros(Shape::Flat(d)),
    )
    .unwrap();
    assert!(trace.rows.last().unwrap().objective < trace.rows[0].objective);
}
