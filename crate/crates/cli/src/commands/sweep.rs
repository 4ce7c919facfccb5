//! `sweep`: width-ratio curve over a set of folded distances, as CSV.

use std::io::Write as _;

use biphoton::analysis::{fedorov_sweep, write_sweep_csv, SimulateOptions, SweepMode};
use biphoton::optics::LensFoldMap;

use crate::config::RunConfig;
use crate::errors::{CliError, CliResult};
use crate::provenance::{OutDir, Provenance};

use super::Report;

/// Points in the default sweep plan.
const DEFAULT_POINTS: usize = 30;

/// Sweep evaluation mode selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    /// Closed-form widths at each folded plane.
    Analytic,
    /// Render frames and reconstruct the widths at each folded plane.
    Simulate,
}

/// Run the sweep and write `sweep.csv`.
pub fn run(
    cfg: &RunConfig,
    zbar_arg: Option<&str>,
    mode: ModeArg,
    frames: Option<usize>,
    prov: &Provenance,
    out: &mut OutDir,
) -> CliResult<()> {
    let src = cfg.source()?;
    let (u, f) = (cfg.lens_u(), cfg.lens_f());
    let zbars = match zbar_arg {
        Some(arg) => parse_plan(arg)?,
        None => default_plan(u, f, src.z_phase()),
    };
    if zbars.is_empty() {
        return Err(CliError::Config("the sweep plan is empty".into()));
    }

    let sweep_mode = match mode {
        ModeArg::Analytic => SweepMode::Analytic,
        ModeArg::Simulate => {
            if cfg.camera.bloom_prob > 0.0 {
                return Err(CliError::Config(
                    "sweep simulate mode does not clean blooming; set [camera] bloom_prob = 0, \
                     or render per-plane stacks with `simulate` and clean them with `reconstruct`"
                        .into(),
                ));
            }
            SweepMode::Simulate(SimulateOptions {
                camera: cfg.camera()?,
                frames: frames.unwrap_or(cfg.run.frames),
                bloom: None,
            })
        }
    };

    let outcomes = fedorov_sweep(&src, u, f, &zbars, &sweep_mode);

    let csv_path = out.file("sweep.csv");
    let mut buf: Vec<u8> = prov.header().into_bytes();
    write_sweep_csv(&mut buf, &outcomes)?;
    std::fs::write(&csv_path, &buf).map_err(|e| CliError::io_at(&csv_path, e))?;

    let mut ok = 0usize;
    let mut failed = 0usize;
    let mut min: Option<(f64, f64)> = None;
    for outcome in &outcomes {
        match &outcome.result {
            Ok(point) => {
                ok += 1;
                if min.is_none_or(|(f_min, _)| point.fedorov < f_min) {
                    min = Some((point.fedorov, outcome.zbar));
                }
            }
            Err(_) => failed += 1,
        }
    }

    let mut report = Report::default();
    report.kv("mode", format!("{mode:?}").to_lowercase()).kv("points", ok).kv("failed", failed);
    if let Some((f_min, zbar)) = min {
        report.kv("min_fedorov", f_min).kv("min_fedorov_zbar_mm", zbar * 1e3);
    }
    report.kv("csv", csv_path.display());
    let body = report.body();
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(body.as_bytes());
    Ok(())
}

/// Parse `a,b,c` (mm) or `start:stop:n` (mm, inclusive) into metres.
fn parse_plan(arg: &str) -> CliResult<Vec<f64>> {
    let bad = |what: &str| CliError::Config(format!("--zbar: {what} in `{arg}`"));
    if arg.contains(':') {
        let parts: Vec<&str> = arg.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:n"));
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad("invalid start"))?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad("invalid stop"))?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad("invalid count"))?;
        if n < 2 {
            return Err(bad("count must be at least 2"));
        }
        let step = (stop - start) / (n as f64 - 1.0);
        return Ok((0..n).map(|k| (start + step * k as f64) * 1e-3).collect());
    }
    arg.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map(|mm| mm * 1e-3)
                .map_err(|_| bad(&format!("invalid distance `{}`", tok.trim())))
        })
        .collect()
}

/// Thirty planes spanning `(f, 3f]`, with the one nearest the balanced
/// plane (folded distance equal to minus the phase-transition distance)
/// snapped onto it so the curve's minimum is exact.
fn default_plan(u: f64, f: f64, z_phase: f64) -> Vec<f64> {
    let mut zbars: Vec<f64> = (1..=DEFAULT_POINTS)
        .map(|k| f + 2.0 * f * k as f64 / DEFAULT_POINTS as f64)
        .collect();
    if let Ok(star) = LensFoldMap::zbar_for(u, f, -z_phase) {
        if star > f && star <= 3.0 * f {
            let nearest = (0..zbars.len())
                .min_by(|&a, &b| {
                    (zbars[a] - star).abs().total_cmp(&(zbars[b] - star).abs())
                })
                .expect("plan is non-empty");
            zbars[nearest] = star;
        }
    }
    zbars
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_parses_comma_lists_and_ranges() {
        let plan = parse_plan("45, 60,87.5").unwrap();
        assert_eq!(plan.len(), 3);
        assert!((plan[2] - 87.5e-3).abs() < 1e-12);

        let plan = parse_plan("40:120:5").unwrap();
        assert_eq!(plan.len(), 5);
        assert!((plan[0] - 40e-3).abs() < 1e-12);
        assert!((plan[4] - 120e-3).abs() < 1e-12);
        assert!((plan[1] - 60e-3).abs() < 1e-12);

        assert!(parse_plan("40:120").is_err());
        assert!(parse_plan("forty").is_err());
    }

    #[test]
    fn default_plan_contains_the_balanced_plane() {
        // Same lens and source family as the defaults.
        let (u, f) = (60e-3, 40e-3);
        let z_phase = 0.013702929023257879;
        let plan = default_plan(u, f, z_phase);
        assert_eq!(plan.len(), DEFAULT_POINTS);
        let star = LensFoldMap::zbar_for(u, f, -z_phase).unwrap();
        assert!(plan.iter().any(|&z| (z - star).abs() < 1e-12));
        assert!(plan.iter().all(|&z| z > f && z <= 3.0 * f + 1e-12));
    }
}
