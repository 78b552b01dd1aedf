//! Ground-truth generators and measurement-noise pipelines.

use rand::RngExt;
use rand_distr::{Distribution, Normal, Poisson};
use stochograd::rng::{stream, STREAM_DATA, STREAM_NOISE};
use stochograd::{DenseVector, Shape};

/// Sparse spike train: `n_spikes` evenly spaced entries of unit magnitude
/// with seeded sign and amplitude jitter (amplitudes in [0.75, 1.25]).
/// Spacing rule: stride `d / n_spikes`, first spike at half a stride.
pub fn gen_sparse_spikes(d: usize, n_spikes: usize, seed: u64) -> DenseVector {
    assert!(n_spikes >= 1 && n_spikes <= d, "need 1 <= n_spikes <= d");
    let mut x = DenseVector::zeros(Shape::Flat(d));
    let stride = d / n_spikes;
    let mut rng = stream(seed, STREAM_DATA);
    for s in 0..n_spikes {
        let pos = stride / 2 + s * stride;
        let sign = if rng.random_range(0..2u32) == 0 {
            1.0
        } else {
            -1.0
        };
        let amp = 1.0 + 0.25 * rng.random_range(-1.0..1.0);
        x[pos.min(d - 1)] = sign * amp;
    }
    x
}

/// Modified (high-contrast) Shepp–Logan phantom: intensity, semi-axes a/b,
/// centre x0/y0, rotation phi in degrees.
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
];

/// The ten-ellipse modified Shepp–Logan phantom rasterised at pixel centres
/// on `[-1, 1]^2`, values in `[0, 1]`.
pub fn gen_shepp_logan(size: usize) -> DenseVector {
    assert!(size >= 16, "phantom needs at least 16 pixels per side");
    render_ellipses(size, &SHEPP_LOGAN)
}

/// Rasterise a subset of the ellipse table; exposed so tests can check the
/// mirror symmetry of the symmetric ellipses alone.
pub fn render_ellipses(size: usize, table: &[(f64, f64, f64, f64, f64, f64)]) -> DenseVector {
    let mut img = DenseVector::zeros(Shape::Image { h: size, w: size });
    let s = size as i64;
    for i in 0..size {
        // pixel centres; the integer form keeps x exactly antisymmetric
        let y = -((2 * i as i64 + 1 - s) as f64) / s as f64;
        for j in 0..size {
            let x = ((2 * j as i64 + 1 - s) as f64) / s as f64;
            let mut val = 0.0;
            for &(a_int, a, b, x0, y0, phi_deg) in table {
                let phi = phi_deg.to_radians();
                let (c, sn) = (phi.cos(), phi.sin());
                let dx = x - x0;
                let dy = y - y0;
                let u = dx * c + dy * sn;
                let v = -dx * sn + dy * c;
                if (u / a) * (u / a) + (v / b) * (v / b) <= 1.0 {
                    val += a_int;
                }
            }
            img[i * size + j] = val.clamp(0.0, 1.0);
        }
    }
    img
}

/// The ellipses that are individually symmetric under x -> -x (centred on
/// the axis, unrotated). The eye ellipses 3/4 have different semi-axes and
/// 8/10 different centres, so neither pair mirrors.
pub fn shepp_logan_symmetric_subset() -> Vec<(f64, f64, f64, f64, f64, f64)> {
    [0usize, 1, 4, 5, 6, 8]
        .iter()
        .map(|&i| SHEPP_LOGAN[i])
        .collect()
}

/// `v + eta`, `eta ~ N(0, sigma^2 I)`, seeded.
pub fn add_gaussian_noise(v: &DenseVector, sigma: f64, seed: u64) -> DenseVector {
    let mut out = v.clone();
    if sigma == 0.0 {
        return out;
    }
    let mut rng = stream(seed, STREAM_NOISE);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and nonnegative");
    for x in out.as_mut_slice() {
        *x += normal.sample(&mut rng);
    }
    out
}

/// Beer–Lambert photon-count pipeline: `N = Poisson(I0 exp(-v))`, zero
/// counts corrected to one, post-log measurement `-ln(N / I0)`.
pub fn beer_lambert_noise(v: &DenseVector, i0: f64, seed: u64) -> DenseVector {
    assert!(i0 > 0.0, "beam intensity must be positive");
    let mut rng = stream(seed, STREAM_NOISE);
    let mut out = DenseVector::zeros(v.shape());
    for (o, &a) in out.as_mut_slice().iter_mut().zip(v.as_slice()) {
        debug_assert!(a >= 0.0, "attenuation sinogram must be nonnegative");
        let lambda = i0 * (-a).exp();
        let count = if lambda > 0.0 {
            let pois = Poisson::new(lambda).expect("positive rate");
            let n: f64 = pois.sample(&mut rng);
            n.max(1.0)
        } else {
            1.0
        };
        *o = -(count / i0).ln();
    }
    out
}
