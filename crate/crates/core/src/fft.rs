//! Centered, unitary 2-D discrete Fourier transforms on square arrays.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

/// Circularly shifts `a` so that element `(i, j)` lands on
/// `((i + rows) mod n, (j + cols) mod n)`.
pub fn circshift<T: Clone>(a: &Array2<T>, shift: (isize, isize)) -> Array2<T> {
    let (nr, nc) = a.dim();
    let sr = shift.0.rem_euclid(nr as isize) as usize;
    let sc = shift.1.rem_euclid(nc as isize) as usize;
    Array2::from_shape_fn((nr, nc), |(i, j)| {
        a[((i + nr - sr) % nr, (j + nc - sc) % nc)].clone()
    })
}

fn transform_rows(data: &mut Array2<Complex64>, direction: FftDirection) {
    let n = data.ncols();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft(n, direction);
    let buf = data
        .as_slice_mut()
        .expect("arrays are kept in standard layout");
    fft.process(buf);
}

fn transform(data: &Array2<Complex64>, direction: FftDirection) -> Array2<Complex64> {
    let mut work = data.as_standard_layout().into_owned();
    transform_rows(&mut work, direction);
    let mut t = work.reversed_axes().as_standard_layout().into_owned();
    transform_rows(&mut t, direction);
    t.reversed_axes().as_standard_layout().into_owned()
}

/// Centered unitary forward transform:
/// `out[k] = (1/n) * sum_j in[j] * exp(-2*pi*i*(k - n/2)·(j - n/2)/n)`.
pub fn fft2_centered(data: &Array2<Complex64>) -> Array2<Complex64> {
    centered(data, FftDirection::Forward)
}

/// Inverse of [`fft2_centered`].
pub fn ifft2_centered(data: &Array2<Complex64>) -> Array2<Complex64> {
    centered(data, FftDirection::Inverse)
}

fn centered(data: &Array2<Complex64>, direction: FftDirection) -> Array2<Complex64> {
    let (nr, nc) = data.dim();
    debug_assert!(nr % 2 == 0 && nc % 2 == 0);
    let half = (nr as isize / 2, nc as isize / 2);
    let unshifted = circshift(data, (-half.0, -half.1));
    let mut out = circshift(&transform(&unshifted, direction), half);
    let scale = 1.0 / ((nr * nc) as f64).sqrt();
    out.mapv_inplace(|v| v * scale);
    out
}

/// Unnormalized circular autocorrelation `r[d] = sum_x a[x] * a[x + d]`,
/// returned with zero lag at the array centre.
pub fn circular_autocorrelation(a: &Array2<f64>) -> Array2<f64> {
    let spec = transform(&a.mapv(|v| Complex64::new(v, 0.0)), FftDirection::Forward);
    let power = spec.mapv(|v| Complex64::new(v.norm_sqr(), 0.0));
    let (nr, nc) = a.dim();
    let back = transform(&power, FftDirection::Inverse);
    let scale = 1.0 / (nr * nc) as f64;
    let corr = back.mapv(|v| v.re * scale);
    circshift(&corr, (nr as isize / 2, nc as isize / 2))
}

/// Circular convolution of a real map with a real kernel whose origin is at
/// the array centre.
pub fn circular_convolve(a: &Array2<f64>, centered_kernel: &Array2<f64>) -> Array2<f64> {
    let (nr, nc) = a.dim();
    let kernel = circshift(centered_kernel, (-(nr as isize / 2), -(nc as isize / 2)));
    let fa = transform(&a.mapv(|v| Complex64::new(v, 0.0)), FftDirection::Forward);
    let fk = transform(
        &kernel.mapv(|v| Complex64::new(v, 0.0)),
        FftDirection::Forward,
    );
    let prod = &fa * &fk;
    let scale = 1.0 / (nr * nc) as f64;
    transform(&prod, FftDirection::Inverse).mapv(|v| v.re * scale)
}

/// Gaussian smoothing with standard deviation `sigma_px` (circular
/// boundaries).
pub fn gaussian_smooth(a: &Array2<f64>, sigma_px: f64) -> Array2<f64> {
    let (nr, nc) = a.dim();
    let mut kernel = Array2::from_shape_fn((nr, nc), |(i, j)| {
        let y = i as f64 - (nr / 2) as f64;
        let x = j as f64 - (nc / 2) as f64;
        (-(x * x + y * y) / (2.0 * sigma_px * sigma_px)).exp()
    });
    let total = kernel.sum();
    kernel.mapv_inplace(|v| v / total);
    circular_convolve(a, &kernel)
}
