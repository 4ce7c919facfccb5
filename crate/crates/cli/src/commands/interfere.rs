//! `interfere`: double-slit run for either input state. Writes the
//! detection-plane joint density, the product of its marginals, and the
//! excess-correlation map, plus the fringe-visibility report.
//!
//! The state is first imaged onto the slit plane at the configured
//! magnification (this stage is load-bearing: the single-photon fringes of
//! the phase state exist only because the partner photon passes the same
//! mask, and skipping the relay collapses the marginal visibility).

use std::fmt::Write as _;

use biphoton::analysis::{delta_g2, fringe_visibility, marginal_g1};
use biphoton::grid::Jpd2;
use biphoton::gridfile::{save_jpd2, save_pgm16};
use biphoton::optics::{interference_density, scale_field, FieldAxis};
use ndarray::Array2;

use crate::config::RunConfig;
use crate::errors::CliResult;
use crate::provenance::{OutDir, Provenance};

use super::{Report, GRID_COVERAGE};

/// Which input state goes through the slits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StateArg {
    /// The waist-plane state (tight position correlations).
    Position,
    /// The phase-transition-plane state (correlations moved into phase).
    Phase,
}

/// Samples per axis of the slit-plane evaluation grid.
const GRID_N: usize = 1024;

/// Run the double-slit arm and write maps, marginal, and report.
pub fn run(cfg: &RunConfig, state: StateArg, prov: &Provenance, out: &mut OutDir) -> CliResult<()> {
    let src = cfg.source()?;
    let slit = cfg.slit()?;
    let lambda = cfg.lambda();
    let f3 = cfg.slit_f3();
    let mag = cfg.slit.mag;

    // Source-plane grid sized to the state; the imaging relay rescales the
    // axes (exactly, sample for sample), keeping the coverage ratio intact.
    let sigma_max = src.widths_at(0.0).sigma_plus.max(src.widths_at(0.0).sigma_minus);
    let dx = 2.0 * GRID_COVERAGE * sigma_max / GRID_N as f64;
    let axis = biphoton::grid::Axis::centered(GRID_N, dx)?;
    let field = match state {
        StateArg::Position => src.eval_dg(&axis, &axis, 0.0)?,
        StateArg::Phase => src.eval_phase_state(&axis, &axis)?,
    };

    let s = mag.recip();
    let imaged = scale_field(&scale_field(&field, FieldAxis::X1, s)?, FieldAxis::X2, s)?;
    let rho = interference_density(&imaged, &slit, f3, lambda)?;

    let marginal = marginal_g1(&rho)?;
    let period = lambda * f3 / (cfg.slit.d_um * 1e-6);
    let visibility = fringe_visibility(&rho.axis1, &marginal.values, period)?;

    let excess = delta_g2(&rho)?;
    let peak_rho = rho.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let peak_excess = excess.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    // delta_g2 normalises its input; compare against the normalised peak.
    let mass = rho
        .values
        .iter()
        .sum::<f64>()
        * rho.axis1.dx
        * rho.axis2.dx;
    let excess_over_peak = peak_excess / (peak_rho / mass);

    let n = rho.axis1.n;
    let product = Array2::from_shape_fn((n, n), |(i, j)| {
        marginal.values[i] * marginal.values[j]
    });
    let product = Jpd2::new(rho.axis1.clone(), rho.axis2.clone(), product)?;

    let joint_path = out.file("joint.bpg");
    save_jpd2(&joint_path, &rho)?;
    save_pgm16(out.file("joint.pgm"), &rho.values)?;
    save_jpd2(out.file("marginal_product.bpg"), &product)?;
    save_pgm16(out.file("marginal_product.pgm"), &product.values)?;
    save_jpd2(out.file("excess.bpg"), &excess)?;
    save_pgm16(out.file("excess.pgm"), &excess.values)?;

    let mut csv = String::from("x_um,marginal\n");
    for (i, value) in marginal.values.iter().enumerate() {
        let _ = writeln!(csv, "{:.4},{:.9e}", rho.axis1.coord(i) * 1e6, value);
    }
    out.write_text("marginal.csv", prov, &csv)?;

    let mut report = Report::default();
    report
        .kv("state", format!("{state:?}").to_lowercase())
        .kv("magnification", mag)
        .kv("fringe_period_um", period * 1e6)
        .kv("visibility", visibility)
        .kv("excess_over_peak", excess_over_peak)
        .kv("marginal_asymmetry", marginal.asymmetry)
        .kv("detection_dx_um", rho.axis1.dx * 1e6)
        .kv("grid_n", n)
        .kv("joint", joint_path.display());

    let body = report.body();
    out.write_text("interfere_report.txt", prov, &body)?;
    print!("{body}");
    Ok(())
}
