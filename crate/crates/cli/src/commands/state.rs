//! `state`: closed-form metrics and the analytic joint map at a plane.

use biphoton::gridfile::{save_jpd2, save_pgm16};

use crate::config::RunConfig;
use crate::errors::CliResult;
use crate::provenance::{OutDir, Provenance};

use super::{coverage_axis, Report};

/// Evaluate the state at `z_mm` and write the map, its preview, and a
/// metrics report.
pub fn run(cfg: &RunConfig, z_mm: f64, prov: &Provenance, out: &mut OutDir) -> CliResult<()> {
    let src = cfg.source()?;
    let z = z_mm * 1e-3;
    let widths = src.widths_at(z);

    let dx = cfg.camera.pitch_um * 1e-6;
    let axis = coverage_axis(widths.sigma_plus.max(widths.sigma_minus), dx)?;
    let jpd = src.jpd_analytic(&axis, &axis, z)?;

    let map_path = out.file("state.bpg");
    save_jpd2(&map_path, &jpd)?;
    let pgm_path = out.file("state.pgm");
    save_pgm16(&pgm_path, &jpd.values)?;

    let mut report = Report::default();
    report
        .kv("z_mm", z_mm)
        .kv("sigma_plus_um", widths.sigma_plus * 1e6)
        .kv("sigma_minus_um", widths.sigma_minus * 1e6)
        .kv("fedorov", src.fedorov_analytic(z))
        .kv("schmidt_number", src.schmidt_number())
        .kv("z_phase_mm", src.z_phase() * 1e3)
        .kv("marginal_std_um", src.marginal_std(z) * 1e6)
        .kv("conditional_std_um", src.conditional_std(z) * 1e6)
        .kv("grid_n", axis.n)
        .kv("grid_dx_um", axis.dx * 1e6)
        .kv("map", map_path.display())
        .kv("preview", pgm_path.display());

    let body = report.body();
    out.write_text("state_report.txt", prov, &body)?;
    print!("{body}");
    Ok(())
}
