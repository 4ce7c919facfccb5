//! Correlation metrics and the width-ratio detection sweep.
//!
//! This module turns joint position densities — analytic or reconstructed —
//! into the quantities used to judge whether a source is correlated and in
//! which basis:
//!
//! * [`marginal_g1`]: the single-photon marginal with a transpose-symmetry
//!   check, normalised to unit mass;
//! * [`delta_g2`]: the excess joint density over the product of marginals,
//!   which vanishes for separable inputs and keeps the correlation ridge
//!   for entangled ones;
//! * [`fringe_visibility`]: modulation depth of a marginal at a known
//!   fringe period, for the double-slit basis dichotomy;
//! * [`fedorov_sweep`]: width ratio versus detection-plane distance behind
//!   a lens fold, either from closed-form widths or through the full
//!   camera simulation and pairwise reconstruction;
//! * [`write_sweep_csv`]: plain-text table of a sweep for plotting.

use std::fmt;
use std::io::Write;

use ndarray::Array2;

use crate::camera::{render_frames, CameraModel, PairSampler};
use crate::denoise::{bloom_baseline_with, subtract_baseline, BloomCleanParams};
use crate::dg::DGSource;
use crate::error::{ensure_positive, Error, Result};
use crate::grid::{kahan_sum, Axis, Jpd2};
use crate::optics::LensFoldMap;
use crate::recon::{fit_dg_2d, gamma_reduced, DgFitOptions, GammaOptions, Roi};

/// Relative Frobenius asymmetry above which a map is flagged as not
/// exchange-symmetric.
pub const MARGINAL_ASYMMETRY_WARN: f64 = 0.05;

/// Single-photon marginal of a joint map.
#[derive(Debug, Clone)]
pub struct MarginalG1 {
    /// Marginal density over the first coordinate, normalised to unit mass
    /// on the map's first axis.
    pub values: Vec<f64>,
    /// `|rho - rho^T|_F / |rho|_F`: relative Frobenius distance from
    /// exchange symmetry.
    pub asymmetry: f64,
    /// Whether `asymmetry` is below [`MARGINAL_ASYMMETRY_WARN`]. A `false`
    /// here is the warning flag: the two photons do not see the same
    /// geometry, so a single shared marginal is suspect.
    pub symmetric: bool,
}

/// Single-photon marginal with an exchange-symmetry diagnostic.
///
/// Integrates the joint map over its second coordinate and normalises the
/// result to unit mass. Negative cells (routine in reconstructed maps) are
/// kept; the normalisation uses the signed mass, which must be positive.
///
/// The map must live on identical axes: the exchange-symmetry comparison
/// against the transpose is meaningless otherwise.
pub fn marginal_g1(jpd: &Jpd2) -> Result<MarginalG1> {
    if !jpd.axis1.same_geometry(&jpd.axis2) {
        return Err(Error::domain(
            "marginal with symmetry check needs identical axes on both coordinates",
        ));
    }
    let n = jpd.axis1.n;
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = jpd.values[[i, j]];
            norm2 += v * v;
            let d = v - jpd.values[[j, i]];
            diff2 += d * d;
        }
    }
    if norm2 <= 0.0 || !norm2.is_finite() {
        return Err(Error::degenerate("joint map is empty or non-finite"));
    }
    let asymmetry = (diff2 / norm2).sqrt();

    let mut values: Vec<f64> = (0..n)
        .map(|i| kahan_sum(jpd.values.row(i).iter().copied()) * jpd.axis2.dx)
        .collect();
    let mass = kahan_sum(values.iter().copied()) * jpd.axis1.dx;
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::degenerate(format!(
            "joint map has non-positive total mass {mass:.3e}; cannot normalise the marginal"
        )));
    }
    for v in &mut values {
        *v /= mass;
    }
    Ok(MarginalG1 { values, asymmetry, symmetric: asymmetry < MARGINAL_ASYMMETRY_WARN })
}

/// Excess joint density over the product of marginals.
///
/// Returns `rho - g1(x1) g1(x2)` on the input axes, where `rho` is the
/// input normalised to unit mass and `g1` its marginal. The output sums to
/// zero by construction; it vanishes identically when the input factorises
/// and keeps the correlation ridge (with compensating negative lobes) when
/// it does not.
pub fn delta_g2(jpd: &Jpd2) -> Result<Jpd2> {
    let mut rho = jpd.clone();
    rho.normalize()?;
    let g = marginal_g1(&rho)?;
    let n = rho.axis1.n;
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            values[[i, j]] = rho.values[[i, j]] - g.values[i] * g.values[j];
        }
    }
    Jpd2::new(rho.axis1, rho.axis2, values)
}

/// Modulation depth of `marginal` at the given `period` (m), in `[0, 1]`.
///
/// Measures the discrete Fourier amplitude of the marginal at frequency
/// `1/period` relative to its total mass, so a fully modulated pattern
/// `(1 + cos(2 pi x / period)) * envelope` scores about 1 and a smooth
/// envelope about 0. The sampling must resolve the fringe: at least four
/// samples per period.
pub fn fringe_visibility(axis: &Axis, marginal: &[f64], period: f64) -> Result<f64> {
    ensure_positive(period, "fringe period")?;
    if marginal.len() != axis.n {
        return Err(Error::domain(format!(
            "marginal has {} samples but the axis has {}",
            marginal.len(),
            axis.n
        )));
    }
    if axis.dx > period / 4.0 {
        return Err(Error::domain(format!(
            "fringe period {:.3e} m needs at least 4 samples per period; axis spacing is {:.3e} m",
            period, axis.dx
        )));
    }
    let omega = std::f64::consts::TAU / period;
    let mut re = 0.0;
    let mut im = 0.0;
    for (i, &y) in marginal.iter().enumerate() {
        let phase = omega * axis.coord(i);
        re += y * phase.cos();
        im += y * phase.sin();
    }
    let total = kahan_sum(marginal.iter().copied());
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::degenerate(format!(
            "marginal has non-positive total mass {total:.3e}"
        )));
    }
    Ok((2.0 * re.hypot(im) / total).min(1.0))
}

/// Where a sweep point's numbers came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepSource {
    /// Closed-form propagated widths.
    Analytic,
    /// Camera simulation, pairwise reconstruction, and model fit.
    Reconstructed,
}

impl fmt::Display for SweepSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepSource::Analytic => "analytic",
            SweepSource::Reconstructed => "reconstructed",
        })
    }
}

/// One detection distance of a width-ratio sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// Lens-to-detection-plane distance (m).
    pub zbar: f64,
    /// Equivalent source-side propagation distance (m, non-positive).
    pub z: f64,
    /// Width ratio `(s+^2 + s-^2) / (2 s+ s-)` at the detection plane.
    pub fedorov: f64,
    /// Sum-coordinate width at the detection plane (m).
    pub sigma_fit_plus: f64,
    /// Difference-coordinate width at the detection plane (m).
    pub sigma_fit_minus: f64,
    /// Provenance of the numbers.
    pub source: SweepSource,
}

/// Camera round trip settings for [`SweepMode::Simulate`].
#[derive(Debug, Clone)]
pub struct SimulateOptions {
    /// Detector model; each sweep point reseeds a copy so points are
    /// statistically independent.
    pub camera: CameraModel,
    /// Frames per sweep point.
    pub frames: usize,
    /// Optional spill-baseline removal before the model fit, for blooming
    /// cameras.
    pub bloom: Option<BloomCleanParams>,
}

/// How sweep points are evaluated.
#[derive(Debug, Clone)]
pub enum SweepMode {
    /// Closed-form propagated widths.
    Analytic,
    /// Full simulate-and-reconstruct round trip.
    Simulate(SimulateOptions),
}

/// One requested detection distance and its result.
#[derive(Debug)]
pub struct SweepOutcome {
    /// Requested lens-to-plane distance (m).
    pub zbar: f64,
    /// The evaluated point, or why this distance failed.
    pub result: Result<SweepPoint>,
}

/// Per-point seed stride (Weyl increment), decorrelating sweep points from
/// each other and from the per-frame `seed ^ k` streams inside each point.
const SWEEP_SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Width ratio versus detection distance behind a lens fold.
///
/// For each `zbar` (lens-to-detection-plane distance, m) the lens fold maps
/// the detection plane to an equivalent source-side distance `z <= 0` and a
/// magnification; the point reports the detected widths and their ratio
/// `F = (s+^2 + s-^2) / (2 s+ s-)`, which is scale-free and equals 1 exactly
/// where the state factorises.
///
/// Out-of-range distances (at or before the focal plane, or beyond the
/// image plane) produce an error entry for that point; the sweep continues.
/// The output is sorted by `zbar` regardless of input order. In simulate
/// mode each point derives its camera seed from the input position, so
/// results are deterministic and independent of evaluation order.
pub fn fedorov_sweep(
    src: &DGSource,
    u: f64,
    f: f64,
    zbars: &[f64],
    mode: &SweepMode,
) -> Vec<SweepOutcome> {
    let mut outcomes: Vec<SweepOutcome> = zbars
        .iter()
        .enumerate()
        .map(|(k, &zbar)| {
            let result = match mode {
                SweepMode::Analytic => analytic_point(src, u, f, zbar),
                SweepMode::Simulate(opts) => simulated_point(src, u, f, zbar, k, opts),
            };
            SweepOutcome { zbar, result }
        })
        .collect();
    outcomes.sort_by(|a, b| a.zbar.total_cmp(&b.zbar));
    outcomes
}

fn analytic_point(src: &DGSource, u: f64, f: f64, zbar: f64) -> Result<SweepPoint> {
    let fold = LensFoldMap::new(u, f, zbar)?;
    let w = src.widths_at(fold.z);
    let mag = fold.scale.abs().recip();
    Ok(SweepPoint {
        zbar,
        z: fold.z,
        fedorov: src.fedorov_analytic(fold.z),
        sigma_fit_plus: w.sigma_plus * mag,
        sigma_fit_minus: w.sigma_minus * mag,
        source: SweepSource::Analytic,
    })
}

fn simulated_point(
    src: &DGSource,
    u: f64,
    f: f64,
    zbar: f64,
    index: usize,
    opts: &SimulateOptions,
) -> Result<SweepPoint> {
    let fold = LensFoldMap::new(u, f, zbar)?;
    let sampler = PairSampler::dg_folded(src, &fold);
    let mut camera = opts.camera.clone();
    camera.seed ^= (index as u64).wrapping_mul(SWEEP_SEED_STRIDE);
    let (stack, _stats) = render_frames(&sampler, &camera, opts.frames)?;
    let (mut map, _clamped) = gamma_reduced(
        &stack,
        &Roi::full_frame(&stack),
        camera.eta,
        camera.mu,
        &GammaOptions::default(),
    )?;
    if let Some(bloom) = &opts.bloom {
        let baseline =
            bloom_baseline_with(&map, bloom.sigma_spill_px, bloom.sigma_beam_px, &bloom.fit)?;
        map = subtract_baseline(&map, &baseline)?;
    }
    let fit = fit_dg_2d(&map, &DgFitOptions { exclude_zero_diff: true, ..Default::default() })?;
    if !fit.converged {
        return Err(Error::degenerate("joint model fit did not converge"));
    }
    // Undo pixel binning: u = x1 - x2 and v = x1 + x2 each collect both
    // pixels' top-hat variance, dx^2/12 twice.
    let correction = map.axis1.dx * map.axis1.dx / 6.0;
    let debin = |width: f64| -> Result<f64> {
        let squared = width * width - correction;
        if squared <= 0.0 {
            return Err(Error::degenerate(format!(
                "fitted width {width:.3e} m is narrower than the pixel binning allows"
            )));
        }
        Ok(squared.sqrt())
    };
    let sp = debin(fit.sigma_plus)?;
    let sm = debin(fit.sigma_minus)?;
    Ok(SweepPoint {
        zbar,
        z: fold.z,
        fedorov: (sp * sp + sm * sm) / (2.0 * sp * sm),
        sigma_fit_plus: sp,
        sigma_fit_minus: sm,
        source: SweepSource::Reconstructed,
    })
}

/// Write a sweep as a comma-separated table.
///
/// Header: `zbar_mm,z_mm,fedorov,sigma_plus_um,sigma_minus_um,mode`.
/// Failed points become `#`-prefixed comment rows carrying the requested
/// distance and the error text, so a partial sweep still plots cleanly.
pub fn write_sweep_csv<W: Write>(out: &mut W, outcomes: &[SweepOutcome]) -> Result<()> {
    writeln!(out, "zbar_mm,z_mm,fedorov,sigma_plus_um,sigma_minus_um,mode")?;
    for outcome in outcomes {
        match &outcome.result {
            Ok(p) => writeln!(
                out,
                "{:.6},{:.6},{:.9},{:.4},{:.4},{}",
                p.zbar * 1e3,
                p.z * 1e3,
                p.fedorov,
                p.sigma_fit_plus * 1e6,
                p.sigma_fit_minus * 1e6,
                p.source
            )?,
            Err(e) => writeln!(out, "# zbar_mm={:.6} error: {e}", outcome.zbar * 1e3)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{interference_density, scale_field, FieldAxis, SlitSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const SIGMA_PLUS: f64 = 140.2e-6;
    const SIGMA_MINUS: f64 = 12.6e-6;
    const LAMBDA: f64 = 810e-9;

    fn source() -> DGSource {
        DGSource::new(SIGMA_PLUS, SIGMA_MINUS, LAMBDA).unwrap()
    }

    fn separable_map(axis: &Axis, sigma: f64, amplitude: f64) -> Jpd2 {
        let g: Vec<f64> =
            (0..axis.n).map(|i| (-axis.coord(i).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
        let mut values = Array2::zeros((axis.n, axis.n));
        for i in 0..axis.n {
            for j in 0..axis.n {
                values[[i, j]] = amplitude * g[i] * g[j];
            }
        }
        Jpd2::new(axis.clone(), axis.clone(), values).unwrap()
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            cov += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn marginal_of_separable_map_recovers_factor() {
        let axis = Axis::centered(64, 20e-6).unwrap();
        let sigma = 150e-6;
        let jpd = separable_map(&axis, sigma, 3.7);
        let g = marginal_g1(&jpd).unwrap();
        assert!(g.symmetric);
        assert!(g.asymmetry < 1e-12);
        let mass = kahan_sum(g.values.iter().copied()) * axis.dx;
        assert_relative_eq!(mass, 1.0, max_relative = 1e-12);
        // Same shape as the 1D factor, rescaled to unit mass.
        let factor: Vec<f64> =
            (0..axis.n).map(|i| (-axis.coord(i).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
        let factor_mass = kahan_sum(factor.iter().copied()) * axis.dx;
        for (got, want) in g.values.iter().zip(&factor) {
            assert_relative_eq!(*got, want / factor_mass, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn marginal_width_matches_closed_form() {
        let src = source();
        let axis = Axis::centered(256, 4.5e-6).unwrap();
        let jpd = src.jpd_analytic(&axis, &axis, 0.0).unwrap();
        let g = marginal_g1(&jpd).unwrap();
        assert!(g.symmetric);
        let (_mean, std) = crate::grid::density_mean_std(&axis, &g.values).unwrap();
        assert_relative_eq!(std, src.marginal_std(0.0), max_relative = 1e-3);
    }

    #[test]
    fn asymmetric_map_raises_warning_flag() {
        let axis = Axis::centered(64, 20e-6).unwrap();
        let mut jpd = separable_map(&axis, 150e-6, 1.0);
        jpd.values[[5, 40]] += 0.5 * jpd.values[[32, 32]];
        let g = marginal_g1(&jpd).unwrap();
        assert!(g.asymmetry > MARGINAL_ASYMMETRY_WARN);
        assert!(!g.symmetric);
        let mass = kahan_sum(g.values.iter().copied()) * axis.dx;
        assert_relative_eq!(mass, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn marginal_rejects_rectangular_grids() {
        let a1 = Axis::centered(16, 1.0).unwrap();
        let a2 = Axis::centered(12, 1.0).unwrap();
        let jpd = Jpd2::new(a1, a2, Array2::from_elem((16, 12), 1.0)).unwrap();
        assert!(marginal_g1(&jpd).is_err());
    }

    #[test]
    fn delta_g2_matches_hand_example() {
        let axis = Axis::centered(2, 1.0).unwrap();
        let values = ndarray::array![[0.5, 0.0], [0.0, 0.5]];
        let jpd = Jpd2::new(axis.clone(), axis, values).unwrap();
        let delta = delta_g2(&jpd).unwrap();
        let want = [[0.25, -0.25], [-0.25, 0.25]];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(delta.values[[i, j]], want[i][j], epsilon = 1e-12);
            }
        }
        let total = delta.values.iter().sum::<f64>();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn delta_g2_vanishes_for_factorising_state() {
        let src = source();
        let axis = Axis::centered(256, 4.5e-6).unwrap();
        // At the factorisation distance the joint modulus separates, so the
        // excess map must be zero to rounding.
        let field = src.eval_phase_state(&axis, &axis).unwrap();
        let rho = field.density();
        let delta = delta_g2(&rho).unwrap();
        let mut rho_n = rho.clone();
        rho_n.normalize().unwrap();
        let peak = rho_n.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let worst = delta.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(worst < 1e-10 * peak, "residual {worst:.3e} vs peak {peak:.3e}");
    }

    #[test]
    fn delta_g2_keeps_ridge_of_correlated_state() {
        let src = source();
        let axis = Axis::centered(256, 4.5e-6).unwrap();
        let rho = src.jpd_analytic(&axis, &axis, 0.0).unwrap();
        let delta = delta_g2(&rho).unwrap();

        let mut rho_n = rho.clone();
        rho_n.normalize().unwrap();
        let peak = rho_n.values.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut ridge_rho = Vec::new();
        let mut ridge_delta = Vec::new();
        for i in 0..axis.n {
            for j in 0..axis.n {
                if rho_n.values[[i, j]] >= 0.05 * peak {
                    ridge_rho.push(rho_n.values[[i, j]]);
                    ridge_delta.push(delta.values[[i, j]]);
                }
            }
        }
        assert!(
            pearson(&ridge_rho, &ridge_delta) > 0.9,
            "ridge correlation {}",
            pearson(&ridge_rho, &ridge_delta)
        );

        // Zero total and exchange symmetry.
        let total = kahan_sum(delta.values.iter().copied()) * axis.dx * axis.dx;
        assert!(total.abs() < 1e-10, "total {total:.3e}");
        let dmax = delta.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        for i in 0..axis.n {
            for j in (i + 1)..axis.n {
                assert!((delta.values[[i, j]] - delta.values[[j, i]]).abs() <= 1e-12 * dmax);
            }
        }
    }

    #[test]
    fn visibility_separates_modulated_from_smooth() {
        let axis = Axis::centered(512, 10e-6).unwrap();
        let period = 253.125e-6;
        let envelope: Vec<f64> =
            (0..axis.n).map(|i| (-axis.coord(i).powi(2) / (2.0 * 400e-6f64.powi(2))).exp()).collect();
        let fringed: Vec<f64> = envelope
            .iter()
            .enumerate()
            .map(|(i, &e)| e * (1.0 + (std::f64::consts::TAU * axis.coord(i) / period).cos()))
            .collect();
        let v_full = fringe_visibility(&axis, &fringed, period).unwrap();
        assert!(v_full > 0.95 && v_full <= 1.0, "full modulation scored {v_full}");
        let v_flat = fringe_visibility(&axis, &envelope, period).unwrap();
        assert!(v_flat < 0.05, "smooth envelope scored {v_flat}");
        // Under-resolved period: fewer than 4 samples per cycle.
        assert!(fringe_visibility(&axis, &envelope, 30e-6).is_err());
    }

    /// Image a source-plane state onto the slit plane with magnification
    /// `mag` (amplitude-preserving coordinate rescale on both axes).
    fn image_onto_slits(
        field: &crate::grid::ComplexField2D,
        mag: f64,
    ) -> crate::grid::ComplexField2D {
        let s = 1.0 / mag;
        let once = scale_field(field, FieldAxis::X1, s).unwrap();
        scale_field(&once, FieldAxis::X2, s).unwrap()
    }

    #[test]
    fn slit_dichotomy_separates_bases() {
        let src = DGSource::new(326e-6, 9e-6, LAMBDA).unwrap();
        let axis = Axis::centered(1024, 2.75e-6).unwrap();
        let slit = SlitSpec::new(400e-6, 150e-6).unwrap();
        let f3 = 125e-3;
        let mag = -2.0;
        let period = LAMBDA * f3 / 400e-6;

        // Position-correlated input: no marginal fringes, joint ridge stays.
        let pos = image_onto_slits(&src.eval_dg(&axis, &axis, 0.0).unwrap(), mag);
        let rho_pos = interference_density(&pos, &slit, f3, LAMBDA).unwrap();
        let g_pos = marginal_g1(&rho_pos).unwrap();
        let v_pos = fringe_visibility(&rho_pos.axis1, &g_pos.values, period).unwrap();
        assert!(v_pos < 0.05, "position-basis visibility {v_pos}");

        let delta_pos = delta_g2(&rho_pos).unwrap();
        let peak = rho_pos.values.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut band_rho = Vec::new();
        let mut band_delta = Vec::new();
        for i in 0..axis.n {
            for j in 0..axis.n {
                if rho_pos.values[[i, j]] >= 0.05 * peak {
                    band_rho.push(rho_pos.values[[i, j]]);
                    band_delta.push(delta_pos.values[[i, j]]);
                }
            }
        }
        assert!(pearson(&band_rho, &band_delta) > 0.9);

        // Phase-basis input: fringes move to the marginal. These singles
        // fringes only exist because the partner is masked too; the
        // unmasked single-photon coherence at the slit separation is nil.
        let phase = image_onto_slits(&src.eval_phase_state(&axis, &axis).unwrap(), mag);
        let rho_ph = interference_density(&phase, &slit, f3, LAMBDA).unwrap();
        let g_ph = marginal_g1(&rho_ph).unwrap();
        let v_ph = fringe_visibility(&rho_ph.axis1, &g_ph.values, period).unwrap();
        assert!(v_ph > 0.5, "phase-basis visibility {v_ph}");

        let delta_ph = delta_g2(&rho_ph).unwrap();
        let peak_ph = rho_ph.values.iter().fold(0.0f64, |m, &v| m.max(v));
        let mut rho_ph_n = rho_ph.clone();
        rho_ph_n.normalize().unwrap();
        let peak_n = rho_ph_n.values.iter().fold(0.0f64, |m, &v| m.max(v));
        let dmax = delta_ph.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(peak_ph > 0.0);
        assert!(dmax / peak_n > 0.1, "excess-to-peak ratio {}", dmax / peak_n);
    }

    #[test]
    fn analytic_sweep_dips_to_one_at_the_special_plane() {
        let src = source();
        let (u, f) = (60e-3, 40e-3);
        let zbar_star = 0.08747361865480191;
        let zbar_lo = f * 1.001;
        let zbar_hi = u * f / (u - f);
        let mut zbars: Vec<f64> =
            (0..31).map(|i| zbar_lo + (zbar_hi - zbar_lo) * i as f64 / 30.0).collect();
        zbars.push(zbar_star);
        // Shuffle roughly to exercise output ordering.
        zbars.reverse();
        zbars.swap(3, 17);

        let outcomes = fedorov_sweep(&src, u, f, &zbars, &SweepMode::Analytic);
        assert_eq!(outcomes.len(), zbars.len());
        assert!(outcomes.windows(2).all(|w| w[0].zbar <= w[1].zbar));

        let points: Vec<&SweepPoint> =
            outcomes.iter().map(|o| o.result.as_ref().expect("in-range point")).collect();
        for p in &points {
            assert!(p.fedorov >= 1.0 - 1e-12);
            assert!(p.z <= 1e-12);
            assert_eq!(p.source, SweepSource::Analytic);
        }

        let f0 = 5.608427869483504;
        assert_relative_eq!(points.first().unwrap().fedorov, f0, max_relative = 0.02);
        assert_relative_eq!(points.last().unwrap().fedorov, f0, max_relative = 0.02);

        let star = points.iter().find(|p| (p.zbar - zbar_star).abs() < 1e-12).unwrap();
        assert!((star.fedorov - 1.0).abs() < 1e-6, "minimum {}", star.fedorov);
        assert_relative_eq!(star.sigma_fit_plus, star.sigma_fit_minus, max_relative = 1e-6);

        // Exactly one falling-to-rising transition across the sweep.
        let mut transitions = 0;
        let mut rising = false;
        for w in points.windows(2) {
            let d = w[1].fedorov - w[0].fedorov;
            if d.abs() < 1e-12 {
                continue;
            }
            if d > 0.0 && !rising {
                transitions += 1;
                rising = true;
            }
            assert!(!(d < 0.0 && rising), "second dip after the minimum");
        }
        assert_eq!(transitions, 1);

        // Image plane: unit-ratio magnified copy of the source widths.
        let image = points.last().unwrap();
        assert!((image.zbar - zbar_hi).abs() < 1e-12);
        assert_relative_eq!(image.sigma_fit_minus, 2.0 * SIGMA_MINUS, max_relative = 1e-12);
        assert_relative_eq!(image.sigma_fit_plus, 2.0 * SIGMA_PLUS, max_relative = 1e-12);
    }

    #[test]
    fn sweep_reports_out_of_range_points_and_continues() {
        let src = source();
        let (u, f) = (60e-3, 40e-3);
        let zbars = [0.02, 0.08, 0.20];
        let outcomes = fedorov_sweep(&src, u, f, &zbars, &SweepMode::Analytic);
        assert_eq!(outcomes.len(), 3);
        assert!(outcomes[0].result.is_err());
        assert!(outcomes[1].result.is_ok());
        assert!(outcomes[2].result.is_err());
    }

    #[test]
    fn simulated_sweep_matches_analytic_at_image_plane() {
        let src = source();
        let (u, f) = (60e-3, 40e-3);
        let zbar = u * f / (u - f);
        let mut camera = CameraModel::new(64, 64, 16e-6);
        camera.eta = 0.6;
        camera.mu = 8.0;
        camera.bg_rate = 2.0;
        camera.seed = 20260819;
        let mode = SweepMode::Simulate(SimulateOptions { camera, frames: 20_000, bloom: None });
        let outcomes = fedorov_sweep(&src, u, f, &[zbar], &mode);
        assert_eq!(outcomes.len(), 1);
        let point = outcomes[0].result.as_ref().expect("image-plane point");
        assert_eq!(point.source, SweepSource::Reconstructed);
        let analytic = src.fedorov_analytic(0.0);
        assert_relative_eq!(point.fedorov, analytic, max_relative = 0.15);
        assert!(point.sigma_fit_plus > point.sigma_fit_minus);
        assert!(point.sigma_fit_minus > 0.0);
    }

    #[test]
    fn sweep_csv_has_header_rows_and_comments() {
        let outcomes = vec![
            SweepOutcome {
                zbar: 0.02,
                result: Err(Error::domain("detection plane before the focal plane")),
            },
            SweepOutcome {
                zbar: 0.12,
                result: Ok(SweepPoint {
                    zbar: 0.12,
                    z: 0.0,
                    fedorov: 5.608427869,
                    sigma_fit_plus: 280.4e-6,
                    sigma_fit_minus: 25.2e-6,
                    source: SweepSource::Analytic,
                }),
            },
        ];
        let mut buffer = Vec::new();
        write_sweep_csv(&mut buffer, &outcomes).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "zbar_mm,z_mm,fedorov,sigma_plus_um,sigma_minus_um,mode");
        assert!(lines[1].starts_with("# zbar_mm=20.000000 error:"));
        assert!(lines[2].starts_with("120.000000,0.000000,5.608427869"));
        assert!(lines[2].ends_with(",analytic"));
        assert!(lines[2].contains(",280.4000,25.2000,"));
        assert_eq!(lines.len(), 3);
    }

    proptest! {
        #[test]
        fn excess_map_sums_to_zero(
            n in 3usize..10,
            dx in 0.5f64..2.0,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let axis = Axis::centered(n, dx).unwrap();
            let mut values = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    values[[i, j]] = rng.random::<f64>() + 0.01;
                }
            }
            let jpd = Jpd2::new(axis.clone(), axis.clone(), values).unwrap();
            let delta = delta_g2(&jpd).unwrap();
            let total = kahan_sum(delta.values.iter().copied()) * dx * dx;
            prop_assert!(total.abs() < 1e-10, "total {total:.3e}");

            // A symmetrised input yields an exchange-symmetric excess map.
            let mut sym = jpd.clone();
            for i in 0..n {
                for j in 0..i {
                    let m = 0.5 * (sym.values[[i, j]] + sym.values[[j, i]]);
                    sym.values[[i, j]] = m;
                    sym.values[[j, i]] = m;
                }
            }
            let delta_sym = delta_g2(&sym).unwrap();
            let dmax = delta_sym.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            for i in 0..n {
                for j in 0..i {
                    prop_assert!(
                        (delta_sym.values[[i, j]] - delta_sym.values[[j, i]]).abs()
                            <= 1e-12 * (dmax + 1e-30)
                    );
                }
            }
        }
    }
}
