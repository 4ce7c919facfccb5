//! `reconstruct`: estimate the joint map from a frame stack, remove
//! artifacts, fit the widths, and report.
//!
//! Quantitative widths are fitted after the mass-aware stages only (bloom
//! baseline subtraction, when the config declares blooming): the spectral
//! stages (band-pass, wavelet shrinkage) sharpen ridges for presentation but
//! reshape the broad envelope, so fitting after them would bias the
//! sum-coordinate width. The profile-cleaned map is what gets written to
//! disk.

use std::path::Path;

use biphoton::camera::read_stack;
use biphoton::denoise::{
    bloom_baseline_with, clean_pipeline, subtract_baseline, BloomCleanParams, BloomFitOptions,
    CleanOptions, CleanReport,
};
use biphoton::grid::{density_mean_std, Jpd2};
use biphoton::gridfile::{save_jpd2, save_pgm16};
use biphoton::recon::{
    fedorov_from_jpd, fit_dg_2d, gamma_reduced, ConditionalWidth, DgFitOptions, FedorovOptions,
    GammaOptions, Roi,
};

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};
use crate::provenance::{OutDir, Provenance};

use super::{debinned, Report};

/// Cleaning profile selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProfileArg {
    /// No cleaning: write the raw reduced map.
    None,
    /// Bloom baseline subtraction plus radial band-pass.
    Propagation,
    /// Wavelet split, envelope high-pass, TV details, kernel smoothing.
    Interference,
}

impl std::fmt::Display for ProfileArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProfileArg::None => "none",
            ProfileArg::Propagation => "propagation",
            ProfileArg::Interference => "interference",
        })
    }
}

/// Reconstruct `stack_path` and write the cleaned map plus a fit report.
pub fn run(
    cfg: &RunConfig,
    stack_path: &Path,
    profile: ProfileArg,
    prov: &Provenance,
    out: &mut OutDir,
) -> CliResult<()> {
    let stack = read_stack(stack_path).map_err(|e| match e {
        biphoton::Error::Io(io) => CliError::Io(format!("{}: {io}", stack_path.display())),
        other => CliError::from(other),
    })?;
    let roi = centered_roi(&stack, cfg.run.roi)?;
    let (raw, clamped) =
        gamma_reduced(&stack, &roi, cfg.camera.eta, cfg.camera.mu, &GammaOptions::default())?;
    let dx = raw.axis1.dx;

    // Mass-aware artifact removal feeding the quantitative fit.
    let bloom_params = if cfg.camera.bloom_prob > 0.0 {
        Some(derive_bloom_params(cfg, &raw)?)
    } else {
        None
    };
    let fit_map = match &bloom_params {
        Some(params) => {
            let baseline = bloom_baseline_with(
                &raw,
                params.sigma_spill_px,
                params.sigma_beam_px,
                &params.fit,
            )?;
            subtract_baseline(&raw, &baseline)?
        }
        None => raw.clone(),
    };

    let fit = fit_dg_2d(&fit_map, &DgFitOptions { exclude_zero_diff: true, ..Default::default() })?;
    if !fit.converged {
        return Err(CliError::Domain(
            "the joint-map fit did not converge; more frames or a larger region are needed".into(),
        ));
    }
    let sigma_minus = debinned(fit.sigma_minus, dx)?;
    let sigma_plus = debinned(fit.sigma_plus, dx)?;
    let estimate = fedorov_from_jpd(
        &fit_map,
        &FedorovOptions {
            conditional: ConditionalWidth::DgModel,
            debin: true,
            clip_negatives: false,
        },
    )?;

    // Presentation cleaning per the selected profile.
    let (cleaned, clean_report) = match profile {
        ProfileArg::None => (fit_map.clone(), CleanReport::default()),
        ProfileArg::Propagation => {
            let mut options = CleanOptions::propagation();
            options.bloom = bloom_params.clone();
            clean_pipeline(&raw, &options)?
        }
        ProfileArg::Interference => clean_pipeline(&raw, &CleanOptions::interference())?,
    };

    let map_path = out.file("recon.bpg");
    save_jpd2(&map_path, &cleaned)?;
    let pgm_path = out.file("recon.pgm");
    save_pgm16(&pgm_path, &cleaned.values)?;

    let mut report = Report::default();
    report
        .kv("stack", stack_path.display())
        .kv("profile", profile)
        .kv("frames", stack.n_frames)
        .kv("roi_px", roi.width)
        .kv("clamped_log_args", clamped)
        .kv("bloom_subtracted", bloom_params.is_some())
        .kv("sigma_minus_um", sigma_minus * 1e6)
        .kv("sigma_plus_um", sigma_plus * 1e6)
        .kv("fedorov", estimate.fedorov)
        .kv("sigma_marginal_um", estimate.sigma_marginal * 1e6)
        .kv("sigma_conditional_um", estimate.sigma_conditional * 1e6)
        .kv("conditional_slope", estimate.slope)
        .kv("fit_iterations", fit.iterations)
        .kv("fit_rms_residual", fit.rms_residual);
    for stage in &clean_report.stages {
        report.kv(
            &format!("stage_{}", stage.name.replace('-', "_")),
            format!("mass {:.6e} -> {:.6e}", stage.mass_in, stage.mass_out),
        );
    }
    report.kv("map", map_path.display()).kv("preview", pgm_path.display());

    let body = report.body();
    out.write_text("reconstruct_report.txt", prov, &body)?;
    print!("{body}");
    Ok(())
}

/// Spill and beam widths for the baseline stage: the spill width comes from
/// the camera declaration; the beam width from the map's own marginal. The
/// signal ridge (fitted on the raw map) is excluded from the amplitude fit.
fn derive_bloom_params(cfg: &RunConfig, raw: &Jpd2) -> CliResult<BloomCleanParams> {
    let dx = raw.axis1.dx;
    let marginal: Vec<f64> = raw.marginal1().iter().map(|v| v.max(0.0)).collect();
    let (_, sigma_m) = density_mean_std(&raw.axis1, &marginal)?;
    let fit = fit_dg_2d(raw, &DgFitOptions { exclude_zero_diff: true, ..Default::default() })?;
    Ok(BloomCleanParams {
        sigma_spill_px: cfg.camera.bloom_sigma_px,
        sigma_beam_px: sigma_m / dx,
        fit: BloomFitOptions {
            exclude_signal_halfwidth_px: 3.0 * fit.sigma_minus / dx,
            amplitude_override: None,
        },
    })
}

/// The centred `roi x roi` region, or the full frame when `roi` is 0.
fn centered_roi(stack: &biphoton::camera::FrameStack, roi: usize) -> CliResult<Roi> {
    if roi == 0 {
        return Ok(Roi::full_frame(stack));
    }
    if roi > stack.width || roi > stack.height {
        return Err(CliError::Config(format!(
            "[run]: roi {roi} exceeds the {}x{} frame",
            stack.width, stack.height
        )));
    }
    Ok(Roi::new((stack.width - roi) / 2, (stack.height - roi) / 2, roi, roi)?)
}
