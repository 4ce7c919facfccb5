//! Separable Daubechies-4 discrete wavelet transform.
//!
//! The 4-tap orthonormal Daubechies filter bank, periodised at each level,
//! gives an exactly invertible, energy-preserving (Parseval) decomposition
//! into one approximation image and per-level horizontal / vertical /
//! diagonal detail images. Images whose sides are not divisible by
//! `2^levels` are reflect-padded before the transform and cropped after the
//! inverse, which keeps perfect reconstruction regardless of shape.

use ndarray::{s, Array2, Axis as NdAxis};

use crate::error::{Error, Result};

/// Orthonormal Daubechies-4 scaling (low-pass) filter,
/// `(1 + sqrt 3, 3 + sqrt 3, 3 - sqrt 3, 1 - sqrt 3) / (4 sqrt 2)`.
const H: [f64; 4] = [
    0.482_962_913_144_534_1,
    0.836_516_303_737_807_7,
    0.224_143_868_042_013_4,
    -0.129_409_522_551_260_34,
];

/// Matching wavelet (high-pass) filter, `g[k] = (-1)^k h[3-k]`.
const G: [f64; 4] = [H[3], -H[2], H[1], -H[0]];

/// Detail images of one decomposition level.
#[derive(Debug, Clone)]
pub struct WaveletDetail {
    /// Low-pass along rows (axis 0), high-pass along columns (axis 1).
    pub lh: Array2<f64>,
    /// High-pass along rows, low-pass along columns.
    pub hl: Array2<f64>,
    /// High-pass along both axes.
    pub hh: Array2<f64>,
}

/// Multi-level wavelet decomposition of a 2D image.
#[derive(Debug, Clone)]
pub struct WaveletPyramid {
    /// Deepest-level approximation image, side `padded / 2^levels`.
    pub approx: Array2<f64>,
    /// Details per level, `details[0]` finest.
    pub details: Vec<WaveletDetail>,
    /// Decomposition depth.
    pub levels: usize,
    original: (usize, usize),
    padded: (usize, usize),
}

impl WaveletPyramid {
    /// Shape the inverse transform restores.
    pub fn original_shape(&self) -> (usize, usize) {
        self.original
    }

    /// Internal (padded) working shape.
    pub fn padded_shape(&self) -> (usize, usize) {
        self.padded
    }

    /// Every pixel of the original image is covered by `2^levels`-times
    /// larger approximation pixels; the factor matters when mapping
    /// frequency cutoffs between the two resolutions.
    pub fn downsample_factor(&self) -> usize {
        1 << self.levels
    }
}

/// Reflected (bounce) index into an axis of length `n`.
fn reflect(i: usize, n: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    let period = 2 * n - 2;
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// One analysis pass along `axis`: each lane becomes its periodised
/// low-pass half followed by its high-pass half.
fn analyze_axis(img: &Array2<f64>, axis: NdAxis) -> Array2<f64> {
    let n = img.len_of(axis);
    let half = n / 2;
    let mut out = img.clone();
    let mut buf = vec![0.0; n];
    for (lane_in, mut lane_out) in img.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        for i in 0..half {
            let mut a = 0.0;
            let mut d = 0.0;
            for m in 0..4 {
                let x = lane_in[(2 * i + m) % n];
                a += H[m] * x;
                d += G[m] * x;
            }
            buf[i] = a;
            buf[half + i] = d;
        }
        for (o, b) in lane_out.iter_mut().zip(buf.iter()) {
            *o = *b;
        }
    }
    out
}

/// Exact transpose of [`analyze_axis`]: scatter each half back through the
/// filters. Orthonormality makes the transpose the inverse.
fn synthesize_axis(img: &Array2<f64>, axis: NdAxis) -> Array2<f64> {
    let n = img.len_of(axis);
    let half = n / 2;
    let mut out = img.clone();
    let mut buf = vec![0.0; n];
    for (lane_in, mut lane_out) in img.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        buf.fill(0.0);
        for i in 0..half {
            let a = lane_in[i];
            let d = lane_in[half + i];
            for m in 0..4 {
                buf[(2 * i + m) % n] += H[m] * a + G[m] * d;
            }
        }
        for (o, b) in lane_out.iter_mut().zip(buf.iter()) {
            *o = *b;
        }
    }
    out
}

/// Decompose `image` into `levels` wavelet levels.
///
/// Sides are reflect-padded up to a multiple of `2^levels` (at least
/// `2^(levels+1)`, so the deepest level keeps two samples per lane); the
/// matching [`idwt2`] crops back, so round-trips restore the input exactly.
pub fn dwt2(image: &Array2<f64>, levels: usize) -> Result<WaveletPyramid> {
    if levels == 0 || levels > 12 {
        return Err(Error::domain(format!(
            "wavelet depth must be between 1 and 12 levels, got {levels}"
        )));
    }
    let original = image.dim();
    if original.0 == 0 || original.1 == 0 {
        return Err(Error::domain("cannot transform an empty image"));
    }
    let unit = 1usize << levels;
    let pad_to = |n: usize| -> usize { n.div_ceil(unit).max(2) * unit };
    let padded = (pad_to(original.0), pad_to(original.1));
    let mut current = Array2::from_shape_fn(padded, |(i, j)| {
        image[[reflect(i, original.0), reflect(j, original.1)]]
    });
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (r, c) = current.dim();
        let t = analyze_axis(&analyze_axis(&current, NdAxis(0)), NdAxis(1));
        let (hr, hc) = (r / 2, c / 2);
        details.push(WaveletDetail {
            lh: t.slice(s![..hr, hc..]).to_owned(),
            hl: t.slice(s![hr.., ..hc]).to_owned(),
            hh: t.slice(s![hr.., hc..]).to_owned(),
        });
        current = t.slice(s![..hr, ..hc]).to_owned();
    }
    Ok(WaveletPyramid { approx: current, details, levels, original, padded })
}

/// Inverse of [`dwt2`]: recombine the pyramid and crop to the original
/// shape. Panics only if the pyramid's images were resized inconsistently.
pub fn idwt2(pyramid: &WaveletPyramid) -> Array2<f64> {
    let mut current = pyramid.approx.clone();
    for detail in pyramid.details.iter().rev() {
        let (hr, hc) = current.dim();
        assert_eq!(detail.lh.dim(), (hr, hc), "detail/approximation shape mismatch");
        let mut t = Array2::zeros((2 * hr, 2 * hc));
        t.slice_mut(s![..hr, ..hc]).assign(&current);
        t.slice_mut(s![..hr, hc..]).assign(&detail.lh);
        t.slice_mut(s![hr.., ..hc]).assign(&detail.hl);
        t.slice_mut(s![hr.., hc..]).assign(&detail.hh);
        current = synthesize_axis(&synthesize_axis(&t, NdAxis(1)), NdAxis(0));
    }
    current.slice(s![..pyramid.original.0, ..pyramid.original.1]).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_image(r: usize, c: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((r, c), |_| rng.random::<f64>() - 0.5)
    }

    #[test]
    fn filters_are_orthonormal() {
        let h2: f64 = H.iter().map(|v| v * v).sum();
        let g2: f64 = G.iter().map(|v| v * v).sum();
        let hg: f64 = H.iter().zip(G.iter()).map(|(a, b)| a * b).sum();
        assert!((h2 - 1.0).abs() < 1e-15);
        assert!((g2 - 1.0).abs() < 1e-15);
        assert!(hg.abs() < 1e-15);
        let g_sum: f64 = G.iter().sum();
        assert!(g_sum.abs() < 1e-15, "high-pass must kill constants");
    }

    #[test]
    fn perfect_reconstruction_on_divisible_image() {
        let img = random_image(64, 64, 1);
        for levels in [1, 2, 3] {
            let back = idwt2(&dwt2(&img, levels).unwrap());
            let err = img
                .iter()
                .zip(back.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "levels {levels}: max error {err}");
        }
    }

    #[test]
    fn perfect_reconstruction_with_padding() {
        // 50 x 46 is divisible by neither 4 nor 8: exercises the
        // reflect-pad plus crop path.
        let img = random_image(50, 46, 2);
        for levels in [2, 3] {
            let p = dwt2(&img, levels).unwrap();
            assert_eq!(p.original_shape(), (50, 46));
            assert_eq!(p.padded_shape().0 % (1 << levels), 0);
            let back = idwt2(&p);
            assert_eq!(back.dim(), (50, 46));
            let err = img
                .iter()
                .zip(back.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "levels {levels}: max error {err}");
        }
    }

    #[test]
    fn energy_is_preserved() {
        let img = random_image(64, 64, 3);
        let p = dwt2(&img, 2).unwrap();
        let image_energy: f64 = img.iter().map(|v| v * v).sum();
        let mut coeff_energy: f64 = p.approx.iter().map(|v| v * v).sum();
        for d in &p.details {
            coeff_energy += d.lh.iter().map(|v| v * v).sum::<f64>();
            coeff_energy += d.hl.iter().map(|v| v * v).sum::<f64>();
            coeff_energy += d.hh.iter().map(|v| v * v).sum::<f64>();
        }
        assert!(
            (image_energy - coeff_energy).abs() < 1e-10 * image_energy,
            "{image_energy} vs {coeff_energy}"
        );
    }

    #[test]
    fn constant_image_has_zero_details() {
        let img = Array2::from_elem((32, 32), 2.5);
        let p = dwt2(&img, 2).unwrap();
        for d in &p.details {
            for v in d.lh.iter().chain(d.hl.iter()).chain(d.hh.iter()) {
                assert!(v.abs() < 1e-12);
            }
        }
        // The approximation holds all the mass, scaled by 2 per level.
        let expect = 2.5 * 4.0;
        for v in p.approx.iter() {
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_validation() {
        let img = random_image(16, 16, 4);
        assert!(dwt2(&img, 0).is_err());
        assert!(dwt2(&img, 13).is_err());
        // Tiny images still round-trip thanks to the minimum padding.
        let tiny = random_image(3, 5, 5);
        let back = idwt2(&dwt2(&tiny, 2).unwrap());
        for (a, b) in tiny.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reflect_indexing_bounces() {
        assert_eq!(reflect(0, 4), 0);
        assert_eq!(reflect(3, 4), 3);
        assert_eq!(reflect(4, 4), 2);
        assert_eq!(reflect(5, 4), 1);
        assert_eq!(reflect(6, 4), 0);
        assert_eq!(reflect(7, 4), 1);
        assert_eq!(reflect(9, 1), 0);
    }
}
