//! Partition, sampler and smoothness-diagnostic properties.

use proptest::prelude::*;
use rand::RngExt;
use stochograd::linops::{make_circulant_blur, DenseMatrix, LinearMap};
use stochograd::problem::PartitionedProblem;
use stochograd::rng::{stream, STREAM_TEST};
use stochograd::sampling::{herman_meyer_order, partition_staggered, SamplerKind};
use stochograd::{DenseVector, Functional, Sampler, Shape};
use testkit::dense_top_singular_value;

#[test]
fn herman_meyer_order_six_matches_mixed_radix_oracle() {
    // independent oracle: expand i in the (2, 3) mixed radix and reassemble
    // with reversed place values
    let oracle: Vec<usize> = (0..6)
        .map(|i| {
            let d0 = i % 2; // base 2 digit, place value 1
            let d1 = (i / 2) % 3; // base 3 digit, place value 2
            d0 * 3 + d1
        })
        .collect();
    assert_eq!(herman_meyer_order(6), oracle);
}

#[test]
fn herman_meyer_power_of_two_is_bit_reversal() {
    for bits in 1..=6usize {
        let n = 1 << bits;
        let order = herman_meyer_order(n);
        for (i, &o) in order.iter().enumerate() {
            let mut rev = 0usize;
            for b in 0..bits {
                rev |= ((i >> b) & 1) << (bits - 1 - b);
            }
            assert_eq!(o, rev, "n={n}, i={i}");
        }
    }
}

#[test]
fn upsilon_of_random_gaussian_row_blocks_matches_dense_svd() {
    // 64x32 Gaussian matrix, 8 staggered row blocks: upsilon from the
    // library vs a from-scratch dense computation
    let (rows, cols, n) = (64usize, 32usize, 8usize);
    let mut rng = stream(17, STREAM_TEST);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let m = DenseMatrix::new(rows, cols, data).unwrap();
    let v = DenseVector::zeros(Shape::Flat(rows));
    let part = partition_staggered(rows, n).unwrap();
    let p = PartitionedProblem::least_squares_split(
        Functional::zero(Shape::Flat(cols)),
        LinearMap::dense(m.clone()),
        v,
        &part,
    )
    .unwrap();

    let l_dense = dense_top_singular_value(&m).powi(2);
    let mut l_max_dense = 0.0f64;
    for set in part.subsets() {
        let mut block = DenseMatrix::zeros(set.len(), cols);
        for (r_local, &r) in set.iter().enumerate() {
            for c in 0..cols {
                *block.at_mut(r_local, c) = m.at(r, c);
            }
        }
        l_max_dense = l_max_dense.max(dense_top_singular_value(&block).powi(2));
    }
    let upsilon_dense = l_dense / l_max_dense;
    let rel = (p.smoothness.upsilon - upsilon_dense).abs() / upsilon_dense;
    assert!(
        rel <= 0.01,
        "upsilon {} vs dense {}",
        p.smoothness.upsilon,
        upsilon_dense
    );
}

#[test]
fn upsilon_identity_split_is_one() {
    let d = 16;
    let part = partition_staggered(d, d).unwrap();
    let p = PartitionedProblem::least_squares_split(
        Functional::zero(Shape::Flat(d)),
        LinearMap::identity(Shape::Flat(d)),
        DenseVector::zeros(Shape::Flat(d)),
        &part,
    )
    .unwrap();
    assert!((p.smoothness.upsilon - 1.0).abs() < 1e-12);
}

#[test]
fn upsilon_kappa_blur_single_row_split_is_kappa() {
    let d = 120;
    for kappa in [5usize, 25, 99] {
        let part = partition_staggered(d, d).unwrap();
        let p = PartitionedProblem::least_squares_split(
            Functional::zero(Shape::Flat(d)),
            make_circulant_blur(d, kappa).unwrap(),
            DenseVector::zeros(Shape::Flat(d)),
            &part,
        )
        .unwrap();
        assert!(
            (p.smoothness.upsilon - kappa as f64).abs() <= 1e-9 * kappa as f64,
            "kappa {kappa}: upsilon {}",
            p.smoothness.upsilon
        );
        assert!(1.0 <= p.smoothness.upsilon && p.smoothness.upsilon <= d as f64 + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn staggered_partition_invariants(n_items in 1usize..10_000, frac in 0.01f64..1.0) {
        let n_subsets = ((n_items as f64 * frac) as usize).clamp(1, n_items);
        let p = partition_staggered(n_items, n_subsets).unwrap();
        // disjoint + covering
        let mut seen = vec![false; n_items];
        for set in p.subsets() {
            for &i in set {
                prop_assert!(!seen[i], "index {i} appears twice");
                seen[i] = true;
            }
        }
        prop_assert!(seen.into_iter().all(|s| s));
        // balance: sizes differ by at most one
        let min = p.subsets().iter().map(|s| s.len()).min().unwrap();
        let max = p.subsets().iter().map(|s| s.len()).max().unwrap();
        prop_assert!(max - min <= 1);
    }

    #[test]
    fn herman_meyer_is_a_bijection(n in 1usize..10_000) {
        let order = herman_meyer_order(n);
        let mut seen = vec![false; n];
        for &o in &order {
            prop_assert!(o < n);
            prop_assert!(!seen[o]);
            seen[o] = true;
        }
    }

    #[test]
    fn samplers_are_seed_deterministic(seed in 0u64..5000, n in 1usize..128) {
        for kind in [SamplerKind::UniformReplacement, SamplerKind::Permutation] {
            let mut a = Sampler::new(kind.clone(), n, seed).unwrap();
            let mut b = Sampler::new(kind.clone(), n, seed).unwrap();
            for _ in 0..64 {
                prop_assert_eq!(a.next_index(), b.next_index());
            }
        }
    }

    #[test]
    fn uniform_sampler_long_run_frequencies(seed in 0u64..50) {
        let n = 8;
        let mut s = Sampler::uniform(n, seed).unwrap();
        let draws = 40_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[s.next_index()] += 1;
        }
        let want = draws as f64 / n as f64;
        for c in counts {
            prop_assert!((c as f64 - want).abs() < 0.05 * draws as f64);
        }
    }
}
