//! Width-ratio estimation from joint position maps.
//!
//! The correlation strength of a joint map is summarised by the ratio
//! `F = sigma_marginal / sigma_conditional`: the width of one photon's
//! marginal distribution over the width of its distribution conditioned on
//! the partner's position. For the separable double-Gaussian shape this
//! equals `(s+^2 + s-^2) / (2 s+ s-)` and is 1 exactly when the map
//! factorises.
//!
//! Three protocols are offered, trading robustness against model
//! assumptions:
//!
//! * [`ConditionalWidth::SliceFits`]: Gaussian fits of the marginal and of
//!   per-column conditional slices (mass-weighted average). Robust to
//!   baseline offsets and noise, and can exclude the contaminated
//!   self-pixel cell of each slice.
//! * [`ConditionalWidth::DgModel`]: a single 2D rotated-Gaussian fit; the
//!   widths follow from the fitted sum/difference deviations.
//! * [`ConditionalWidth::Moments`]: direct second moments. Exact on clean
//!   maps, fragile under noise or negative cells.
//!
//! Pixel binning inflates measured widths; `debin` subtracts the known
//! top-hat variance so detector-sampled maps land on the continuous values.

use crate::error::{Error, Result};
use crate::grid::{density_mean_std, Jpd2};
use crate::recon::fit::{fit_dg_2d, fit_gaussian_1d, DgFitOptions};

/// How the conditional (and marginal) widths are extracted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConditionalWidth {
    /// Gaussian fits of per-column slices, averaged with slice-mass weights
    /// over the columns holding the central `central_mass` fraction of the
    /// second photon's marginal.
    SliceFits {
        /// Fraction of marginal mass selecting the fitted columns, in (0, 1].
        central_mass: f64,
        /// Drop each slice's `x1 = x2` cell before fitting.
        exclude_self_cell: bool,
    },
    /// One 2D rotated-Gaussian fit of the whole map (always excludes the
    /// `x1 = x2` cells).
    DgModel,
    /// Second moments of the marginal and of every column slice
    /// (mass-weighted). Requires a non-negative map.
    Moments,
}

/// Options for [`fedorov_from_jpd`].
#[derive(Debug, Clone)]
pub struct FedorovOptions {
    /// Width-extraction protocol.
    pub conditional: ConditionalWidth,
    /// Subtract the pixel-binning variance from the squared widths.
    pub debin: bool,
    /// Clip negative cells to zero instead of failing. Only the moment
    /// protocol is sensitive to small negatives; the fit protocols never
    /// need clipping.
    pub clip_negatives: bool,
}

impl Default for FedorovOptions {
    fn default() -> Self {
        FedorovOptions {
            conditional: ConditionalWidth::SliceFits {
                central_mass: 0.5,
                exclude_self_cell: false,
            },
            debin: false,
            clip_negatives: false,
        }
    }
}

/// Width-ratio estimate with its ingredients.
#[derive(Debug, Clone)]
pub struct FedorovEstimate {
    /// `sigma_marginal / sigma_conditional`.
    pub fedorov: f64,
    /// Single-photon marginal width (m).
    pub sigma_marginal: f64,
    /// Conditional width (m).
    pub sigma_conditional: f64,
    /// Drift of the conditional centre per unit partner position
    /// (dimensionless; `(s+^2 - s-^2) / (s+^2 + s-^2)` for the
    /// double-Gaussian shape).
    pub slope: f64,
    /// Conditional slices that entered the average (0 for the model fit).
    pub n_slices: usize,
}

fn weighted_linear_slope(xs: &[f64], ys: &[f64], ws: &[f64]) -> f64 {
    let w: f64 = ws.iter().sum();
    if w <= 0.0 {
        return 0.0;
    }
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / w;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / w;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((&x, &y), &wi) in xs.iter().zip(ys).zip(ws) {
        sxx += wi * (x - mx) * (x - mx);
        sxy += wi * (x - mx) * (y - my);
    }
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Columns of `marginal` holding the central `central_mass` fraction of its
/// total, found by trimming equal tails.
fn central_mass_columns(marginal: &[f64], central_mass: f64) -> (usize, usize) {
    let total: f64 = marginal.iter().sum();
    let tail = 0.5 * (1.0 - central_mass) * total;
    let mut lo = 0usize;
    let mut acc = 0.0;
    while lo + 1 < marginal.len() && acc + marginal[lo] <= tail {
        acc += marginal[lo];
        lo += 1;
    }
    let mut hi = marginal.len();
    acc = 0.0;
    while hi > lo + 1 && acc + marginal[hi - 1] <= tail {
        acc += marginal[hi - 1];
        hi -= 1;
    }
    (lo, hi)
}

struct Widths {
    marginal: f64,
    conditional: f64,
    slope: f64,
    n_slices: usize,
}

fn widths_by_moments(jpd: &Jpd2) -> Result<Widths> {
    if jpd.min_value() < 0.0 {
        return Err(Error::degenerate(
            "moment widths need a non-negative map; clip negatives or use a fit protocol",
        ));
    }
    let marg1 = jpd.marginal1();
    let (_, sigma_marginal) = density_mean_std(&jpd.axis1, &marg1)?;
    let (n1, n2) = jpd.values.dim();
    let mut centers = Vec::new();
    let mut sigmas = Vec::new();
    let mut masses = Vec::new();
    let mut x2s = Vec::new();
    let total: f64 = jpd.values.iter().sum();
    for j in 0..n2 {
        let col: Vec<f64> = (0..n1).map(|i| jpd.values[[i, j]]).collect();
        let mass: f64 = col.iter().sum();
        if mass <= 1e-9 * total {
            continue;
        }
        let (c, s) = density_mean_std(&jpd.axis1, &col)?;
        centers.push(c);
        sigmas.push(s);
        masses.push(mass);
        x2s.push(jpd.axis2.coord(j));
    }
    if sigmas.len() < 3 {
        return Err(Error::degenerate(format!(
            "only {} usable conditional slices",
            sigmas.len()
        )));
    }
    let w: f64 = masses.iter().sum();
    let conditional = sigmas.iter().zip(&masses).map(|(s, m)| s * m).sum::<f64>() / w;
    let slope = weighted_linear_slope(&x2s, &centers, &masses);
    Ok(Widths { marginal: sigma_marginal, conditional, slope, n_slices: sigmas.len() })
}

fn widths_by_slice_fits(
    jpd: &Jpd2,
    central_mass: f64,
    exclude_self_cell: bool,
) -> Result<Widths> {
    if !(central_mass > 0.0 && central_mass <= 1.0) {
        return Err(Error::domain(format!(
            "central mass fraction must be in (0, 1], got {central_mass}"
        )));
    }
    let marg1 = jpd.marginal1();
    let x1s = jpd.axis1.coords();
    let marginal_fit = fit_gaussian_1d(&x1s, &marg1)?;
    if !marginal_fit.converged {
        return Err(Error::degenerate("marginal fit did not converge"));
    }
    // Select slice columns by the partner photon's marginal mass. Work on
    // the positive part only: raw estimator maps carry negative noise cells
    // that would unbalance the tail trimming.
    let marg2: Vec<f64> = jpd.marginal2().iter().map(|v| v.max(0.0)).collect();
    let (lo, hi) = central_mass_columns(&marg2, central_mass);
    let (n1, _) = jpd.values.dim();
    let mut centers = Vec::new();
    let mut sigmas = Vec::new();
    let mut masses = Vec::new();
    let mut x2s = Vec::new();
    for j in lo..hi {
        let x2 = jpd.axis2.coord(j);
        let skip = if exclude_self_cell {
            Some(jpd.axis1.nearest_index(x2))
        } else {
            None
        };
        let mut xs = Vec::with_capacity(n1);
        let mut ys = Vec::with_capacity(n1);
        for i in 0..n1 {
            if Some(i) == skip {
                continue;
            }
            xs.push(jpd.axis1.coord(i));
            ys.push(jpd.values[[i, j]]);
        }
        let Ok(fit) = fit_gaussian_1d(&xs, &ys) else { continue };
        if !fit.converged || fit.amplitude <= 0.0 {
            continue;
        }
        let mass: f64 = ys.iter().map(|v| v.max(0.0)).sum();
        centers.push(fit.center);
        sigmas.push(fit.sigma);
        masses.push(mass);
        x2s.push(x2);
    }
    if sigmas.len() < 3 {
        return Err(Error::degenerate(format!(
            "only {} conditional slices fit successfully",
            sigmas.len()
        )));
    }
    let w: f64 = masses.iter().sum();
    let conditional = sigmas.iter().zip(&masses).map(|(s, m)| s * m).sum::<f64>() / w;
    let slope = weighted_linear_slope(&x2s, &centers, &masses);
    Ok(Widths {
        marginal: marginal_fit.sigma,
        conditional,
        slope,
        n_slices: sigmas.len(),
    })
}

/// Estimate the width ratio of a joint position map.
///
/// The map's own normalisation is irrelevant (fit protocols) or handled
/// internally (moments). With `debin`, the squared widths are corrected for
/// pixel binning: `dx^2/12` per sampled coordinate, which for conditional
/// slices grows to `(1 + slope^2) dx^2/12` because the conditional centre
/// moves with the partner coordinate inside each partner pixel.
pub fn fedorov_from_jpd(jpd: &Jpd2, options: &FedorovOptions) -> Result<FedorovEstimate> {
    let negatives = jpd.negative_count();
    let mut working;
    let jpd = if negatives > 0 && options.clip_negatives {
        working = jpd.clone();
        working.clip_negatives();
        &working
    } else {
        jpd
    };
    if negatives > 0
        && !options.clip_negatives
        && matches!(options.conditional, ConditionalWidth::Moments)
    {
        return Err(Error::degenerate(format!(
            "map has {negatives} negative cells; enable clipping or use a fit protocol"
        )));
    }
    let dx = jpd.axis1.dx;
    let debin = |squared: f64, correction: f64| -> Result<f64> {
        if !squared.is_finite() || squared <= correction {
            return Err(Error::degenerate(format!(
                "binning correction {correction:.3e} exceeds squared width {squared:.3e}; \
                 the feature is narrower than a pixel"
            )));
        }
        Ok((squared - correction).sqrt())
    };
    match options.conditional {
        ConditionalWidth::DgModel => {
            let fit = fit_dg_2d(jpd, &DgFitOptions { exclude_zero_diff: true, ..Default::default() })?;
            if !fit.converged {
                return Err(Error::degenerate("joint model fit did not converge"));
            }
            // Binning acts on x1 and x2; in the rotated frame each of
            // u = x1 - x2 and v = x1 + x2 picks up both pixels' variance.
            let corr = if options.debin { dx * dx / 6.0 } else { 0.0 };
            let sm = debin(fit.sigma_minus * fit.sigma_minus, corr)?;
            let sp = debin(fit.sigma_plus * fit.sigma_plus, corr)?;
            let s2 = sp * sp + sm * sm;
            Ok(FedorovEstimate {
                fedorov: s2 / (2.0 * sp * sm),
                sigma_marginal: 0.5 * s2.sqrt(),
                sigma_conditional: sp * sm / s2.sqrt(),
                slope: (sp * sp - sm * sm) / s2,
                n_slices: 0,
            })
        }
        ConditionalWidth::SliceFits { central_mass, exclude_self_cell } => {
            let w = widths_by_slice_fits(jpd, central_mass, exclude_self_cell)?;
            finish_widths(w, dx, options.debin, debin)
        }
        ConditionalWidth::Moments => {
            let w = widths_by_moments(jpd)?;
            finish_widths(w, dx, options.debin, debin)
        }
    }
}

fn finish_widths(
    w: Widths,
    dx: f64,
    apply: bool,
    debin: impl Fn(f64, f64) -> Result<f64>,
) -> Result<FedorovEstimate> {
    let (marginal, conditional) = if apply {
        (
            debin(w.marginal * w.marginal, dx * dx / 12.0)?,
            debin(
                w.conditional * w.conditional,
                (1.0 + w.slope * w.slope) * dx * dx / 12.0,
            )?,
        )
    } else {
        (w.marginal, w.conditional)
    };
    Ok(FedorovEstimate {
        fedorov: marginal / conditional,
        sigma_marginal: marginal,
        sigma_conditional: conditional,
        slope: w.slope,
        n_slices: w.n_slices,
    })
}
