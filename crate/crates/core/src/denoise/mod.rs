//! Cleaning stack for reconstructed joint maps.
//!
//! Raw pairwise-estimator maps carry several distinct artifacts, each with
//! a dedicated, separately usable remedy:
//!
//! * charge blooming spills along detector rows, faking a positive
//!   position correlation: modelled as a narrow diagonal double-Gaussian
//!   ridge and removed by [`bloom_baseline`] / [`subtract_baseline`];
//! * smooth singles envelopes and offsets: removed by a radial
//!   [`butterworth_bandpass`];
//! * broadband counting noise on interference maps: split by the wavelet
//!   transform ([`dwt2`]), with the smooth envelope removed from the
//!   approximation by [`marginal_highpass`], detail noise reduced by
//!   [`tv_denoise`], and the recombined map polished by [`kde_smooth`].
//!
//! [`clean_pipeline`] chains the stages in two standard profiles and
//! reports the mass flowing through each stage.

mod wavelet;
pub use wavelet::{dwt2, idwt2, WaveletDetail, WaveletPyramid};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{ensure_positive, Error, Result};
use crate::fft::{fft2_inplace, freqs};
use crate::grid::{kahan_sum, Jpd2};
use crate::recon::{fit_dg_2d, DgFitOptions};

/// Fitted model of the blooming artifact in a joint x map.
///
/// Blooming spills charge along detector rows, so a lit pixel drags a
/// neighbour at a small row offset with it. In the joint map that appears
/// as a ridge: narrow in the difference coordinate (the spill length) and
/// following the beam envelope in the sum coordinate.
#[derive(Debug, Clone)]
pub struct BloomBaseline {
    /// Spill width along the difference coordinate (pixels).
    pub sigma_b: f64,
    /// Beam width setting the sum-coordinate envelope (pixels).
    pub sigma_beam: f64,
    /// Least-squares ridge amplitude (map value units).
    pub amplitude: f64,
    /// Fitted flat pedestal under the ridge (map value units). Pairwise
    /// estimators on photon-pair light carry a broad positive offset from
    /// the super-Poissonian photon-number statistics; it is estimated as a
    /// nuisance parameter so it cannot bias the ridge amplitude, but it is
    /// not part of the subtracted baseline.
    pub offset: f64,
    /// Sum-coordinate centre of the envelope (m).
    pub center_sum: f64,
    /// The baseline map itself, on the input's axes.
    pub baseline: Jpd2,
    /// Cells that entered the amplitude fit (0 when overridden).
    pub cells_used: usize,
}

/// Options for the bloom-baseline amplitude fit.
#[derive(Debug, Clone, Default)]
pub struct BloomFitOptions {
    /// Exclude `|x1 - x2|` up to this many pixels as genuine signal.
    pub exclude_signal_halfwidth_px: f64,
    /// Skip the amplitude fit and use this value instead (the escape hatch
    /// when the signal band covers the whole bloom ridge).
    pub amplitude_override: Option<f64>,
}

/// Half-width of the fitted diagonal band, in units of the spill width.
const BLOOM_BAND_SIGMAS: f64 = 3.0;
/// Minimum usable fraction of the band for an unforced amplitude fit.
const BLOOM_MIN_BAND_FRACTION: f64 = 0.2;

/// Fit the blooming baseline of `jpd` with default options.
pub fn bloom_baseline(jpd: &Jpd2, sigma_b_px: f64, sigma_beam_px: f64) -> Result<BloomBaseline> {
    bloom_baseline_with(jpd, sigma_b_px, sigma_beam_px, &BloomFitOptions::default())
}

/// Fit the blooming baseline of `jpd`.
///
/// The baseline shape is fixed by the given widths:
/// `exp(-u^2 / (2 sb^2) - (v - v0)^2 / (2 (2 s_beam)^2))` with
/// `u = x1 - x2`, `v = x1 + x2` (the beam envelope doubles in the sum
/// coordinate). Only the amplitude is fitted, by least squares over the
/// diagonal band `|u| <= 3 sb` with the self-pixel cells (`x1 = x2`, pure
/// singles) and an optional signal band removed. If the exclusions leave
/// less than 20% of the band, the fit fails and an explicit
/// `amplitude_override` is required.
pub fn bloom_baseline_with(
    jpd: &Jpd2,
    sigma_b_px: f64,
    sigma_beam_px: f64,
    options: &BloomFitOptions,
) -> Result<BloomBaseline> {
    ensure_positive(sigma_b_px, "spill width")?;
    ensure_positive(sigma_beam_px, "beam width")?;
    if !jpd.is_square_grid() {
        return Err(Error::domain("bloom baseline needs a square joint grid"));
    }
    let dx = jpd.axis1.dx;
    let sigma_u = sigma_b_px * dx;
    let sigma_v = 2.0 * sigma_beam_px * dx;

    // Envelope centre from the positive part of the map.
    let (n1, n2) = jpd.values.dim();
    let mut w_sum = 0.0;
    let mut wv = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            let w = jpd.values[[i, j]].max(0.0);
            w_sum += w;
            wv += w * (jpd.axis1.coord(i) + jpd.axis2.coord(j));
        }
    }
    if w_sum <= 0.0 {
        return Err(Error::degenerate("map has no positive mass to centre the baseline on"));
    }
    let v0 = wv / w_sum;

    let shape = |i: usize, j: usize| -> f64 {
        let u = jpd.axis1.coord(i) - jpd.axis2.coord(j);
        let v = jpd.axis1.coord(i) + jpd.axis2.coord(j) - v0;
        (-u * u / (2.0 * sigma_u * sigma_u) - v * v / (2.0 * sigma_v * sigma_v)).exp()
    };

    let mut band_cells = 0usize;
    let mut cells_used = 0usize;
    // Least squares of y = A*s + c over the band: the flat nuisance term c
    // absorbs the pairwise-estimator pedestal so it cannot bias A.
    let (mut s_yy, mut s_s, mut s_ss, mut s_sy) = (0.0, 0.0, 0.0, 0.0);
    let exclude_u = options.exclude_signal_halfwidth_px * dx;
    for i in 0..n1 {
        for j in 0..n2 {
            let u = jpd.axis1.coord(i) - jpd.axis2.coord(j);
            if u.abs() > BLOOM_BAND_SIGMAS * sigma_u {
                continue;
            }
            band_cells += 1;
            if u.abs() < 0.5 * dx {
                continue; // self-pixel cells hold singles statistics
            }
            if u.abs() <= exclude_u {
                continue;
            }
            let s = shape(i, j);
            let y = jpd.values[[i, j]];
            s_yy += y;
            s_s += s;
            s_ss += s * s;
            s_sy += s * y;
            cells_used += 1;
        }
    }
    let n = cells_used as f64;
    let det = n * s_ss - s_s * s_s;
    let (amplitude, offset) = if let Some(a) = options.amplitude_override {
        cells_used = 0;
        (a, 0.0)
    } else {
        if band_cells == 0
            || (cells_used as f64) < BLOOM_MIN_BAND_FRACTION * band_cells as f64
            || det <= f64::EPSILON * n * s_ss
        {
            return Err(Error::degenerate(format!(
                "signal exclusion leaves {cells_used} of {band_cells} bloom-band cells; \
                 the bands overlap — supply amplitude_override"
            )));
        }
        let a = (n * s_sy - s_s * s_yy) / det;
        (a, (s_yy - a * s_s) / n)
    };
    let values = Array2::from_shape_fn((n1, n2), |(i, j)| amplitude * shape(i, j));
    Ok(BloomBaseline {
        sigma_b: sigma_b_px,
        sigma_beam: sigma_beam_px,
        amplitude,
        offset,
        center_sum: v0,
        baseline: Jpd2::new(jpd.axis1.clone(), jpd.axis2.clone(), values)?,
        cells_used,
    })
}

/// Subtract a fitted bloom baseline from a map on the same grid.
pub fn subtract_baseline(jpd: &Jpd2, baseline: &BloomBaseline) -> Result<Jpd2> {
    if !jpd.axis1.same_geometry(&baseline.baseline.axis1)
        || !jpd.axis2.same_geometry(&baseline.baseline.axis2)
    {
        return Err(Error::domain("baseline was fitted on a different grid"));
    }
    Jpd2::new(
        jpd.axis1.clone(),
        jpd.axis2.clone(),
        &jpd.values - &baseline.baseline.values,
    )
}

/// Radial Butterworth band-pass in the 2D Fourier domain.
///
/// Frequencies are in cycles per pixel along each axis; the response at
/// radial frequency `f` is
/// `H(f) = [1 / (1 + (f_lo/f)^(2n))] * [1 / (1 + (f/f_hi)^(2n))]`.
/// With `f_lo > 0` the DC term is removed entirely (`H(0) = 0`);
/// `f_lo = 0` makes a pure low-pass. Real input gives real output.
pub fn butterworth_bandpass(
    image: &Array2<f64>,
    f_lo: f64,
    f_hi: f64,
    order: u32,
) -> Result<Array2<f64>> {
    if !(0.0..0.5).contains(&f_lo) || !(f_lo < f_hi && f_hi <= 0.5) {
        return Err(Error::domain(format!(
            "band must satisfy 0 <= f_lo < f_hi <= 0.5 cycles/px, got [{f_lo}, {f_hi}]"
        )));
    }
    if order == 0 {
        return Err(Error::domain("filter order must be at least 1"));
    }
    let (n1, n2) = image.dim();
    let mut field = image.mapv(|v| Complex64::new(v, 0.0));
    fft2_inplace(&mut field, false);
    let f1 = freqs(n1, 1.0);
    let f2 = freqs(n2, 1.0);
    let p = 2 * order as i32;
    for i in 0..n1 {
        for j in 0..n2 {
            let f = f1[i].hypot(f2[j]);
            let low = if f_lo == 0.0 {
                1.0
            } else if f == 0.0 {
                0.0
            } else {
                1.0 / (1.0 + (f_lo / f).powi(p))
            };
            let high = 1.0 / (1.0 + (f / f_hi).powi(p));
            field[[i, j]] *= low * high;
        }
    }
    fft2_inplace(&mut field, true);
    Ok(field.mapv(|v| v.re))
}

/// Options for [`marginal_highpass_with`].
#[derive(Debug, Clone)]
pub struct HighpassOptions {
    /// Power fraction of the spectral peak defining the marginal bandwidth.
    pub fraction: f64,
    /// Raised-cosine transition half-width as a fraction of the cutoff.
    pub transition: f64,
    /// Use this cutoff (cycles per full-resolution pixel) instead of
    /// deriving it from the marginal.
    pub cutoff_override: Option<f64>,
}

impl Default for HighpassOptions {
    fn default() -> Self {
        HighpassOptions { fraction: 0.01, transition: 0.15, cutoff_override: None }
    }
}

/// High-pass an approximation image above the marginal's own bandwidth,
/// with default options. See [`marginal_highpass_with`].
pub fn marginal_highpass(
    approx: &Array2<f64>,
    marginal: &[f64],
    downsample_factor: usize,
) -> Result<Array2<f64>> {
    marginal_highpass_with(approx, marginal, downsample_factor, &HighpassOptions::default())
}

/// Remove everything at or below the marginal's spatial bandwidth from an
/// image.
///
/// The singles envelope of a joint map is (by construction) band-limited to
/// the marginal's own spectrum, while genuine joint structure such as
/// fringes lives above it. The cutoff is placed where the marginal's power
/// spectrum falls below `fraction` of its peak; radial frequencies below it
/// are suppressed with a raised-cosine edge.
///
/// `marginal` is sampled at full resolution; `approx` may be a
/// `downsample_factor`-times coarser image (wavelet approximation), which
/// scales the cutoff accordingly. Fails when the marginal is flat (no
/// bandwidth to read) or its bandwidth exceeds the coarse image's Nyquist
/// frequency (structure of interest was lost in the downsampling).
pub fn marginal_highpass_with(
    approx: &Array2<f64>,
    marginal: &[f64],
    downsample_factor: usize,
    options: &HighpassOptions,
) -> Result<Array2<f64>> {
    if downsample_factor == 0 {
        return Err(Error::domain("downsample factor must be at least 1"));
    }
    if !(options.fraction > 0.0 && options.fraction < 1.0) {
        return Err(Error::domain(format!(
            "power fraction must be in (0, 1), got {}",
            options.fraction
        )));
    }
    if !(options.transition > 0.0 && options.transition < 1.0) {
        return Err(Error::domain(format!(
            "transition fraction must be in (0, 1), got {}",
            options.transition
        )));
    }
    let cutoff_full = match options.cutoff_override {
        Some(f) => {
            ensure_positive(f, "cutoff")?;
            f
        }
        None => {
            let n = marginal.len();
            if n < 4 {
                return Err(Error::domain("marginal too short for a spectrum"));
            }
            let mut line = Array2::from_shape_fn((n, 1), |(i, _)| {
                Complex64::new(marginal[i], 0.0)
            });
            fft2_inplace(&mut line, false);
            let power: Vec<f64> = (0..=n / 2).map(|k| line[[k, 0]].norm_sqr()).collect();
            let peak = power.iter().cloned().fold(0.0, f64::max);
            if peak <= 0.0 {
                return Err(Error::degenerate(
                    "marginal is all zero; supply cutoff_override",
                ));
            }
            let threshold = options.fraction * peak;
            let k_keep =
                (0..=n / 2).rev().find(|&k| power[k] >= threshold).unwrap_or(0);
            if k_keep == 0 {
                return Err(Error::degenerate(
                    "marginal is spectrally flat; supply cutoff_override",
                ));
            }
            // First frequency past the band still holding power: where the
            // spectrum has fallen below the threshold.
            (k_keep + 1).min(n / 2) as f64 / n as f64
        }
    };
    let cutoff = cutoff_full * downsample_factor as f64;
    if cutoff >= 0.5 {
        return Err(Error::degenerate(format!(
            "marginal bandwidth {cutoff_full:.4} cycles/px maps to {cutoff:.4} at the \
             downsampled scale, at or past Nyquist; use fewer wavelet levels"
        )));
    }
    let lo = cutoff * (1.0 - options.transition);
    let hi = (cutoff * (1.0 + options.transition)).min(0.5);
    let (n1, n2) = approx.dim();
    let mut field = approx.mapv(|v| Complex64::new(v, 0.0));
    fft2_inplace(&mut field, false);
    let f1 = freqs(n1, 1.0);
    let f2 = freqs(n2, 1.0);
    for i in 0..n1 {
        for j in 0..n2 {
            let f = f1[i].hypot(f2[j]);
            let h = if f <= lo {
                0.0
            } else if f >= hi {
                1.0
            } else {
                0.5 * (1.0 - (std::f64::consts::PI * (hi - f) / (hi - lo)).cos())
            };
            field[[i, j]] *= h;
        }
    }
    fft2_inplace(&mut field, true);
    Ok(field.mapv(|v| v.re))
}

/// Objective trace of a total-variation denoising run.
#[derive(Debug, Clone)]
pub struct TvReport {
    /// `1/2 * ||u - f||^2 + weight * TV(u)` after each accepted step,
    /// starting from the input; non-increasing by construction.
    pub objectives: Vec<f64>,
}

fn tv_gradient(u: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (n1, n2) = u.dim();
    let mut g1 = Array2::zeros((n1, n2));
    let mut g2 = Array2::zeros((n1, n2));
    for i in 0..n1 {
        for j in 0..n2 {
            if i + 1 < n1 {
                g1[[i, j]] = u[[i + 1, j]] - u[[i, j]];
            }
            if j + 1 < n2 {
                g2[[i, j]] = u[[i, j + 1]] - u[[i, j]];
            }
        }
    }
    (g1, g2)
}

fn tv_divergence(p1: &Array2<f64>, p2: &Array2<f64>) -> Array2<f64> {
    let (n1, n2) = p1.dim();
    Array2::from_shape_fn((n1, n2), |(i, j)| {
        let mut d = 0.0;
        if i + 1 < n1 {
            d += p1[[i, j]];
        }
        if i > 0 {
            d -= p1[[i - 1, j]];
        }
        if j + 1 < n2 {
            d += p2[[i, j]];
        }
        if j > 0 {
            d -= p2[[i, j - 1]];
        }
        d
    })
}

fn tv_objective(u: &Array2<f64>, f: &Array2<f64>, weight: f64) -> f64 {
    let fidelity: f64 = u
        .iter()
        .zip(f.iter())
        .map(|(a, b)| 0.5 * (a - b) * (a - b))
        .sum();
    let (g1, g2) = tv_gradient(u);
    let tv: f64 = g1.iter().zip(g2.iter()).map(|(a, b)| a.hypot(*b)).sum();
    fidelity + weight * tv
}

/// Total-variation (Rudin-Osher-Fatemi) denoising.
pub fn tv_denoise(image: &Array2<f64>, weight: f64, iterations: usize) -> Result<Array2<f64>> {
    tv_denoise_with_report(image, weight, iterations).map(|(u, _)| u)
}

/// Total-variation denoising with the objective trace.
///
/// Minimises `1/2 ||u - f||^2 + weight * TV(u)` by the dual projection
/// iteration (step 1/8). Steps that would raise the objective are rejected
/// and end the run, so the reported trace is monotone non-increasing.
pub fn tv_denoise_with_report(
    image: &Array2<f64>,
    weight: f64,
    iterations: usize,
) -> Result<(Array2<f64>, TvReport)> {
    if weight < 0.0 || !weight.is_finite() {
        return Err(Error::domain(format!("weight must be finite and >= 0, got {weight}")));
    }
    if weight == 0.0 || iterations == 0 {
        let objectives = vec![tv_objective(image, image, weight)];
        return Ok((image.clone(), TvReport { objectives }));
    }
    let tau = 0.125;
    let dim = image.dim();
    let mut p1 = Array2::zeros(dim);
    let mut p2 = Array2::zeros(dim);
    let mut u = image.clone();
    let mut best = tv_objective(&u, image, weight);
    let mut objectives = vec![best];
    for _ in 0..iterations {
        // w = div(p) - f/weight; p <- (p + tau grad w) / (1 + tau |grad w|)
        let mut w = tv_divergence(&p1, &p2);
        w.zip_mut_with(image, |a, b| *a -= b / weight);
        let (g1, g2) = tv_gradient(&w);
        let mut q1 = p1.clone();
        let mut q2 = p2.clone();
        for ((q1, q2), (g1, g2)) in
            q1.iter_mut().zip(q2.iter_mut()).zip(g1.iter().zip(g2.iter()))
        {
            let norm = 1.0 + tau * g1.hypot(*g2);
            *q1 = (*q1 + tau * g1) / norm;
            *q2 = (*q2 + tau * g2) / norm;
        }
        let mut candidate = tv_divergence(&q1, &q2);
        candidate.zip_mut_with(image, |a, b| *a = b - weight * *a);
        let obj = tv_objective(&candidate, image, weight);
        if obj > best {
            break; // converged to projection accuracy; keep the best iterate
        }
        best = obj;
        objectives.push(obj);
        p1 = q1;
        p2 = q2;
        u = candidate;
    }
    Ok((u, TvReport { objectives }))
}

/// Gaussian kernel smoothing of a joint map (separable, circular), mass
/// preserving. `bandwidth` is the kernel standard deviation in pixels.
pub fn kde_smooth(jpd: &Jpd2, bandwidth: f64) -> Result<Jpd2> {
    ensure_positive(bandwidth, "bandwidth")?;
    let smooth_axis = |values: &Array2<f64>, axis: usize| -> Array2<f64> {
        let n = values.dim();
        let len = if axis == 0 { n.0 } else { n.1 };
        // Sampled Gaussian, wrapped onto the axis length and sum-normalised:
        // circular convolution then moves mass around without losing any.
        let radius = (6.0 * bandwidth).ceil() as isize;
        let mut kernel = vec![0.0; len];
        for k in -radius..=radius {
            let w = (-0.5 * (k as f64 / bandwidth).powi(2)).exp();
            let idx = (k.rem_euclid(len as isize)) as usize;
            kernel[idx] += w;
        }
        let total: f64 = kernel.iter().sum();
        for k in kernel.iter_mut() {
            *k /= total;
        }
        let offsets: Vec<(usize, f64)> = kernel
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| (i, *w))
            .collect();
        Array2::from_shape_fn(n, |(i, j)| {
            let (pos, fixed) = if axis == 0 { (i, j) } else { (j, i) };
            let mut acc = 0.0;
            for &(off, w) in &offsets {
                let src = (pos + len - off) % len;
                acc += w
                    * if axis == 0 {
                        values[[src, fixed]]
                    } else {
                        values[[fixed, src]]
                    };
            }
            acc
        })
    };
    let values = smooth_axis(&smooth_axis(&jpd.values, 0), 1);
    Jpd2::new(jpd.axis1.clone(), jpd.axis2.clone(), values)
}

/// Which artifact family a cleaning run targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CleanProfile {
    /// Near/far-field propagation maps: bloom subtraction, then a radial
    /// band-pass removing offsets and the singles envelope.
    Propagation,
    /// Interference maps: wavelet split, envelope high-pass on the
    /// approximation, TV on the details, recombine, kernel smooth.
    Interference,
}

/// Bloom-removal stage parameters.
#[derive(Debug, Clone)]
pub struct BloomCleanParams {
    /// Spill width (pixels).
    pub sigma_spill_px: f64,
    /// Beam width (pixels), normally from a Gaussian fit of the beam image.
    pub sigma_beam_px: f64,
    /// Amplitude-fit options.
    pub fit: BloomFitOptions,
}

/// Band-pass stage parameters.
#[derive(Debug, Clone)]
pub struct BandpassParams {
    /// Low cutoff (cycles/px).
    pub f_lo: f64,
    /// High cutoff (cycles/px).
    pub f_hi: f64,
    /// Butterworth order.
    pub order: u32,
}

/// Options for [`clean_pipeline`].
#[derive(Debug, Clone)]
pub struct CleanOptions {
    /// Stage selection.
    pub profile: CleanProfile,
    /// Bloom removal (propagation profile); skipped when `None`.
    pub bloom: Option<BloomCleanParams>,
    /// Band-pass parameters (propagation profile). `None` derives them
    /// from the map: `f_lo = 1 / (8 * fitted ridge width in px)`,
    /// `f_hi = 0.5`, order 3.
    pub bandpass: Option<BandpassParams>,
    /// Wavelet depth (interference profile).
    pub wavelet_levels: usize,
    /// Envelope high-pass options (interference profile).
    pub highpass: HighpassOptions,
    /// TV weight as a fraction of each detail band's max magnitude.
    pub tv_weight_fraction: f64,
    /// TV iterations.
    pub tv_iterations: usize,
    /// Final smoothing bandwidth (pixels).
    pub kde_bandwidth_px: f64,
}

impl CleanOptions {
    /// Standard propagation-map cleaning (derive band-pass, no bloom stage
    /// unless parameters are added).
    pub fn propagation() -> Self {
        CleanOptions {
            profile: CleanProfile::Propagation,
            bloom: None,
            bandpass: None,
            wavelet_levels: 2,
            highpass: HighpassOptions::default(),
            tv_weight_fraction: 0.1,
            tv_iterations: 100,
            kde_bandwidth_px: 1.0,
        }
    }

    /// Standard interference-map cleaning.
    pub fn interference() -> Self {
        CleanOptions { profile: CleanProfile::Interference, ..Self::propagation() }
    }
}

/// Mass bookkeeping for one pipeline stage.
#[derive(Debug, Clone)]
pub struct CleanStage {
    /// Stage name.
    pub name: String,
    /// Total map mass entering the stage.
    pub mass_in: f64,
    /// Total map mass leaving the stage.
    pub mass_out: f64,
}

/// Report of a [`clean_pipeline`] run.
#[derive(Debug, Clone, Default)]
pub struct CleanReport {
    /// Stages in execution order.
    pub stages: Vec<CleanStage>,
}

fn map_mass(jpd: &Jpd2) -> f64 {
    kahan_sum(jpd.values.iter().copied()) * jpd.axis1.dx * jpd.axis2.dx
}

/// Run the standard cleaning chain for the chosen profile. Deterministic;
/// every stage's mass flow is reported.
pub fn clean_pipeline(jpd: &Jpd2, options: &CleanOptions) -> Result<(Jpd2, CleanReport)> {
    let mut report = CleanReport::default();
    let mut map = jpd.clone();
    match options.profile {
        CleanProfile::Propagation => {
            if let Some(bloom) = &options.bloom {
                let mass_in = map_mass(&map);
                let baseline = bloom_baseline_with(
                    &map,
                    bloom.sigma_spill_px,
                    bloom.sigma_beam_px,
                    &bloom.fit,
                )?;
                map = subtract_baseline(&map, &baseline)?;
                report.stages.push(CleanStage {
                    name: "bloom-subtract".into(),
                    mass_in,
                    mass_out: map_mass(&map),
                });
            }
            let band = match &options.bandpass {
                Some(b) => b.clone(),
                None => {
                    let fit = fit_dg_2d(
                        &map,
                        &DgFitOptions { exclude_zero_diff: true, ..Default::default() },
                    )?;
                    // Sub-pixel ridges carry no resolvable envelope scale;
                    // the floor keeps the pass band meaningful for them.
                    let width_px = (fit.sigma_minus / map.axis1.dx).max(1.0);
                    BandpassParams { f_lo: 1.0 / (8.0 * width_px), f_hi: 0.5, order: 3 }
                }
            };
            let mass_in = map_mass(&map);
            let values = butterworth_bandpass(&map.values, band.f_lo, band.f_hi, band.order)?;
            map = Jpd2::new(map.axis1.clone(), map.axis2.clone(), values)?;
            report.stages.push(CleanStage {
                name: "butterworth".into(),
                mass_in,
                mass_out: map_mass(&map),
            });
        }
        CleanProfile::Interference => {
            let mass_in = map_mass(&map);
            let marginal = map.marginal1();
            let mut pyramid = dwt2(&map.values, options.wavelet_levels)?;
            pyramid.approx = marginal_highpass_with(
                &pyramid.approx,
                &marginal,
                pyramid.downsample_factor(),
                &options.highpass,
            )?;
            for detail in pyramid.details.iter_mut() {
                for band in [&mut detail.lh, &mut detail.hl, &mut detail.hh] {
                    let peak = band.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if peak > 0.0 {
                        *band = tv_denoise(
                            band,
                            options.tv_weight_fraction * peak,
                            options.tv_iterations,
                        )?;
                    }
                }
            }
            let values = idwt2(&pyramid);
            map = Jpd2::new(map.axis1.clone(), map.axis2.clone(), values)?;
            report.stages.push(CleanStage {
                name: "wavelet-clean".into(),
                mass_in,
                mass_out: map_mass(&map),
            });
            let mass_in = map_mass(&map);
            map = kde_smooth(&map, options.kde_bandwidth_px)?;
            report.stages.push(CleanStage {
                name: "kde-smooth".into(),
                mass_in,
                mass_out: map_mass(&map),
            });
        }
    }
    Ok((map, report))
}
