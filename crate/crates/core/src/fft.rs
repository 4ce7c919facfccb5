//! Internal FFT helpers built on `rustfft`.
//!
//! Conventions: the forward transform is unscaled, the inverse carries the
//! full `1/n` factor, and frequencies follow the usual wrapped DFT layout
//! (`freqs`) or the ascending, centre-DC layout after `fftshift`.

use ndarray::{Array2, Axis as NdAxis};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Transform every lane of `a` along array axis `axis` (0 = down columns,
/// i.e. along coordinate 1; 1 = along rows / coordinate 2).
pub(crate) fn fft_axis_inplace(a: &mut Array2<Complex64>, axis: usize, inverse: bool) {
    let len = a.shape()[axis];
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    };
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let scale = if inverse { 1.0 / len as f64 } else { 1.0 };
    // Iterate over lanes perpendicular to `axis`.
    for mut lane in a.lanes_mut(NdAxis(axis)).into_iter() {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        fft.process(&mut buf);
        for (v, b) in lane.iter_mut().zip(buf.iter()) {
            *v = *b * scale;
        }
    }
}

/// 2-D transform (both axes).
pub(crate) fn fft2_inplace(a: &mut Array2<Complex64>, inverse: bool) {
    fft_axis_inplace(a, 0, inverse);
    fft_axis_inplace(a, 1, inverse);
}

/// Wrapped DFT sample frequencies for `n` samples with spacing `dx`:
/// index `j` maps to `j/(n dx)` for `j <= (n-1)/2` and `(j-n)/(n dx)` above.
pub(crate) fn freqs(n: usize, dx: f64) -> Vec<f64> {
    let denom = n as f64 * dx;
    (0..n)
        .map(|j| {
            let k = if j <= (n - 1) / 2 { j as f64 } else { j as f64 - n as f64 };
            k / denom
        })
        .collect()
}

/// Move the DC sample to index `n/2` (floor) along both axes, returning a new
/// array: `out[k] = in[(k + n - n/2) % n]` per axis.
pub(crate) fn fftshift2<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (n1, n2) = a.dim();
    let (h1, h2) = (n1 / 2, n2 / 2);
    Array2::from_shape_fn((n1, n2), |(i, j)| {
        a[[(i + n1 - h1) % n1, (j + n2 - h2) % n2]].clone()
    })
}

/// Frequencies in ascending order matching [`fftshift2`] output positions:
/// position `k` holds `(k - n/2) / (n dx)` (floor division).
pub(crate) fn shifted_freqs(n: usize, dx: f64) -> Vec<f64> {
    let denom = n as f64 * dx;
    let half = (n / 2) as f64;
    (0..n).map(|k| (k as f64 - half) / denom).collect()
}
