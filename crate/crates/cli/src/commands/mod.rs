//! The five command implementations and their shared plumbing.

pub mod interfere;
pub mod reconstruct;
pub mod simulate;
pub mod state;
pub mod sweep;

use std::fmt::Display;

use biphoton::grid::Axis;

use crate::errors::{CliError, CliResult};

/// Half-width of every analytic evaluation grid, in units of the widest
/// Gaussian at the evaluated plane (comfortably above the evaluator's own
/// minimum coverage requirement).
pub(crate) const GRID_COVERAGE: f64 = 4.5;

/// Largest analytic grid the commands will allocate per axis.
pub(crate) const GRID_N_MAX: usize = 4096;

/// A centred axis with the camera's pixel pitch covering `sigma_max` to
/// [`GRID_COVERAGE`] on both sides, sized to the next power of two.
pub(crate) fn coverage_axis(sigma_max: f64, dx: f64) -> CliResult<Axis> {
    let needed = (2.0 * GRID_COVERAGE * sigma_max / dx).ceil() as usize;
    let n = needed.next_power_of_two().clamp(64, GRID_N_MAX);
    Ok(Axis::centered(n, dx)?)
}

/// Remove the variance a square pixel bin adds to a fitted width.
pub(crate) fn debinned(width: f64, dx: f64) -> CliResult<f64> {
    let corrected = width * width - dx * dx / 6.0;
    if corrected <= 0.0 {
        return Err(CliError::Domain(format!(
            "fitted width {:.3} um is narrower than the pixel binning allows",
            width * 1e6
        )));
    }
    Ok(corrected.sqrt())
}

/// `key = value` report accumulator; the same text goes to stdout and to the
/// report file.
#[derive(Default)]
pub(crate) struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn kv(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.lines.push(format!("{key} = {value}"));
        self
    }

    pub fn body(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}
