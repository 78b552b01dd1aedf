//! Independent numerical oracles for the test suites. Nothing here is used
//! by the library itself: oracles must stay independent of the
//! implementation paths they check.

use stochograd::linops::DenseMatrix;
use stochograd::{DenseVector, Functional};

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns eigenvalues (descending) and the matching orthonormal columns.
pub fn jacobi_symmetric_eig(m: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = m.rows();
    assert_eq!(n, m.cols(), "symmetric eigensolver needs a square matrix");
    let mut a: Vec<f64> = (0..n * n).map(|i| m.at(i / n, i % n)).collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    s += a[p * n + q] * a[p * n + q];
                }
            }
        }
        s
    };
    let fro_sq: f64 = a.iter().map(|v| v * v).sum::<f64>().max(1e-300);

    for _sweep in 0..60 {
        if off(&a) <= 1e-26 * fro_sq {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (a[i * n + i], i)).collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).expect("finite eigenvalues"));
    let eigvals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (col, &(_, src)) in pairs.iter().enumerate() {
        for row in 0..n {
            *vecs.at_mut(row, col) = v[row * n + src];
        }
    }
    (eigvals, vecs)
}

/// Largest singular value of a dense matrix via Jacobi on the Gram matrix
/// of the thinner side.
pub fn dense_top_singular_value(m: &DenseMatrix) -> f64 {
    let (r, c) = (m.rows(), m.cols());
    let k = r.min(c);
    let mut gram = DenseMatrix::zeros(k, k);
    if c <= r {
        // A^T A
        for i in 0..k {
            for j in i..k {
                let mut s = 0.0;
                for t in 0..r {
                    s += m.at(t, i) * m.at(t, j);
                }
                *gram.at_mut(i, j) = s;
                *gram.at_mut(j, i) = s;
            }
        }
    } else {
        // A A^T
        for i in 0..k {
            for j in i..k {
                let mut s = 0.0;
                for t in 0..c {
                    s += m.at(i, t) * m.at(j, t);
                }
                *gram.at_mut(i, j) = s;
                *gram.at_mut(j, i) = s;
            }
        }
    }
    let (vals, _) = jacobi_symmetric_eig(&gram);
    vals[0].max(0.0).sqrt()
}

/// Dense linear solve `M x = b` by Gaussian elimination with partial
/// pivoting; reference minimisers for consistent least-squares problems.
pub fn solve_dense(m: &DenseMatrix, b: &[f64]) -> Vec<f64> {
    let n = m.rows();
    assert_eq!(n, m.cols(), "solver needs a square matrix");
    assert_eq!(n, b.len());
    let mut a: Vec<f64> = (0..n * n).map(|i| m.at(i / n, i % n)).collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        assert!(a[piv * n + col].abs() > 1e-300, "singular matrix");
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            rhs.swap(col, piv);
        }
        for r in (col + 1)..n {
            let f = a[r * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for c in (row + 1)..n {
            s -= a[row * n + c] * x[c];
        }
        x[row] = s / a[row * n + row];
    }
    x
}

/// Central finite-difference gradient of `f`.
pub fn finite_difference_gradient<F: Fn(&DenseVector) -> f64>(
    f: F,
    x: &DenseVector,
    h: f64,
) -> DenseVector {
    let mut g = DenseVector::zeros(x.shape());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Golden-section minimiser of a unimodal scalar function on `[lo, hi]`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Brute-force prox for 1-D functionals: coarse grid search refined by
/// golden section. Independent of every closed-form prox path.
pub fn prox_oracle_1d(f: &Functional, tau: f64, z: f64, lo: f64, hi: f64) -> f64 {
    let obj = |x: f64| {
        let xv = DenseVector::from_slice(&[x]);
        f.eval(&xv).expect("shape is 1-d") + (x - z) * (x - z) / (2.0 * tau)
    };
    let n_grid = 2000;
    let mut best_x = lo;
    let mut best_v = f64::INFINITY;
    for i in 0..=n_grid {
        let x = lo + (hi - lo) * i as f64 / n_grid as f64;
        let v = obj(x);
        if v < best_v {
            best_v = v;
            best_x = x;
        }
    }
    let half = (hi - lo) / n_grid as f64;
    golden_section_min(obj, best_x - half, best_x + half, 1e-12)
}

/// FNV-1a hash over the little-endian bytes of a float slice; used for
/// golden-file checks of generated data.
pub fn fnv1a_hash_f64(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Largest relative pointwise gap between two iterate snapshot sequences.
pub fn max_rel_iterate_diff(a: &[DenseVector], b: &[DenseVector]) -> f64 {
    assert_eq!(a.len(), b.len(), "snapshot sequences differ in length");
    let mut worst = 0.0f64;
    for (xa, xb) in a.iter().zip(b) {
        let mut diff = xa.clone();
        diff.sub_assign(xb);
        worst = worst.max(diff.norm() / (1.0 + xb.norm()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_recovers_diagonal_spectrum() {
        let m = DenseMatrix::new(3, 3, vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        let (vals, _) = jacobi_symmetric_eig(&m);
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((vals[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_singular_value_of_known_matrix() {
        // [[1, 0], [0, 0.5], [0, 0]]
        let m = DenseMatrix::new(3, 2, vec![1.0, 0.0, 0.0, 0.5, 0.0, 0.0]).unwrap();
        assert!((dense_top_singular_value(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn golden_section_finds_parabola_min() {
        let x = golden_section_min(|t| (t - 0.3) * (t - 0.3), -2.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn finite_differences_match_quadratic() {
        let f = |x: &DenseVector| 0.5 * x.norm_sq();
        let x = DenseVector::from_slice(&[1.0, -2.0, 0.5]);
        let g = finite_difference_gradient(f, &x, 1e-6);
        for (gi, xi) in g.as_slice().iter().zip(x.as_slice()) {
            assert!((gi - xi).abs() < 1e-8);
        }
    }
}
