//! Paraxial field transformations: Fresnel transfer-function propagation,
//! quadratic phase screens, coordinate scaling, the lens fold map, and the
//! double-slit far-field density.
//!
//! Sign conventions match [`crate::dg`]: per coordinate axis, free
//! propagation by `z` multiplies the angular spectrum by
//! `exp(-i pi lambda z nu^2)`, which advances a Gaussian parameter
//! `q = sigma^2` to `q + i z / (2k)` per axis (and `sigma_pm^2 + i z / k`
//! jointly for the two-photon sum/difference coordinates).

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::fft::{fft_axis_inplace, fft2_inplace, fftshift2, freqs, shifted_freqs};
use crate::grid::{Axis, ComplexField2D, Jpd2};

/// Which coordinate of a two-coordinate field an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldAxis {
    /// Coordinate 1 (array rows).
    X1,
    /// Coordinate 2 (array columns).
    X2,
}

impl FieldAxis {
    fn index(self) -> usize {
        match self {
            FieldAxis::X1 => 0,
            FieldAxis::X2 => 1,
        }
    }
}

/// Longest propagation distance the transfer-function method supports on
/// `axis` without frequency-domain aliasing: `n dx^2 / lambda`.
pub fn max_safe_propagation(axis: &Axis, lambda: f64) -> f64 {
    axis.n as f64 * axis.dx * axis.dx / lambda
}

fn field_axis_of(field: &ComplexField2D, which: FieldAxis) -> &Axis {
    match which {
        FieldAxis::X1 => &field.axis1,
        FieldAxis::X2 => &field.axis2,
    }
}

/// Propagate one coordinate of `field` by distance `z` (either sign) using
/// the Fresnel transfer function `exp(-i pi lambda z nu^2)`.
///
/// Errors with [`Error::AliasingGuard`] when `|z|` exceeds
/// [`max_safe_propagation`] for that axis.
pub fn fresnel_propagate_axis(
    field: &ComplexField2D,
    which: FieldAxis,
    z: f64,
    lambda: f64,
) -> Result<ComplexField2D> {
    ensure_positive(lambda, "wavelength")?;
    ensure_finite(z, "propagation distance")?;
    let axis = field_axis_of(field, which);
    let max_safe = max_safe_propagation(axis, lambda);
    if z.abs() > max_safe {
        return Err(Error::AliasingGuard { z_m: z, max_safe_m: max_safe });
    }
    if z == 0.0 {
        return Ok(field.clone());
    }
    let nu = freqs(axis.n, axis.dx);
    let phase: Vec<Complex64> = nu
        .iter()
        .map(|&v| Complex64::from_polar(1.0, -std::f64::consts::PI * lambda * z * v * v))
        .collect();
    let mut values = field.values.clone();
    let ax = which.index();
    fft_axis_inplace(&mut values, ax, false);
    match which {
        FieldAxis::X1 => {
            for (i, mut row) in values.rows_mut().into_iter().enumerate() {
                let p = phase[i];
                row.mapv_inplace(|v| v * p);
            }
        }
        FieldAxis::X2 => {
            for mut row in values.rows_mut() {
                for (v, p) in row.iter_mut().zip(phase.iter()) {
                    *v *= *p;
                }
            }
        }
    }
    fft_axis_inplace(&mut values, ax, true);
    ComplexField2D::new(field.axis1.clone(), field.axis2.clone(), values)
}

/// Propagate both coordinates of `field` by the same distance `z`.
pub fn fresnel_propagate(field: &ComplexField2D, z: f64, lambda: f64) -> Result<ComplexField2D> {
    let step1 = fresnel_propagate_axis(field, FieldAxis::X1, z, lambda)?;
    fresnel_propagate_axis(&step1, FieldAxis::X2, z, lambda)
}

/// Multiply one coordinate by the thin quadratic phase screen
/// `exp(i pi c x^2 / lambda)`; `c` has units 1/metre (a thin lens of focal
/// length `f` is `c = -1/f`). Leaves the density untouched.
pub fn quadratic_phase(
    field: &ComplexField2D,
    which: FieldAxis,
    c: f64,
    lambda: f64,
) -> Result<ComplexField2D> {
    ensure_positive(lambda, "wavelength")?;
    ensure_finite(c, "quadratic phase curvature")?;
    let axis = field_axis_of(field, which);
    let phase: Vec<Complex64> = axis
        .coords()
        .iter()
        .map(|&x| Complex64::from_polar(1.0, std::f64::consts::PI * c * x * x / lambda))
        .collect();
    let mut values = field.values.clone();
    match which {
        FieldAxis::X1 => {
            for (i, mut row) in values.rows_mut().into_iter().enumerate() {
                let p = phase[i];
                row.mapv_inplace(|v| v * p);
            }
        }
        FieldAxis::X2 => {
            for mut row in values.rows_mut() {
                for (v, p) in row.iter_mut().zip(phase.iter()) {
                    *v *= *p;
                }
            }
        }
    }
    ComplexField2D::new(field.axis1.clone(), field.axis2.clone(), values)
}

/// Unitary coordinate scaling of one axis: `g(x) -> sqrt(|s|) g(s x)`,
/// realised exactly by recalibrating the axis to `x' = x / s` (with sample
/// order reversed when `s < 0`) and rescaling the amplitude. No
/// interpolation is performed, so the operation is lossless.
pub fn scale_field(field: &ComplexField2D, which: FieldAxis, s: f64) -> Result<ComplexField2D> {
    ensure_finite(s, "scale factor")?;
    if s == 0.0 {
        return Err(Error::domain("scale factor must be non-zero"));
    }
    let axis = field_axis_of(field, which);
    let amp = s.abs().sqrt();
    let new_axis = if s > 0.0 {
        Axis::new(axis.n, axis.dx / s, axis.x0 / s)?
    } else {
        // Reversed order keeps dx positive: sample i now holds the value at
        // x'_i = x_{n-1-i} / s, which ascends.
        Axis::new(axis.n, axis.dx / s.abs(), axis.last() / s)?
    };
    let (n1, n2) = field.values.dim();
    let values = if s > 0.0 {
        field.values.mapv(|v| v * amp)
    } else {
        match which {
            FieldAxis::X1 => {
                Array2::from_shape_fn((n1, n2), |(i, j)| field.values[[n1 - 1 - i, j]] * amp)
            }
            FieldAxis::X2 => {
                Array2::from_shape_fn((n1, n2), |(i, j)| field.values[[i, n2 - 1 - j]] * amp)
            }
        }
    };
    match which {
        FieldAxis::X1 => ComplexField2D::new(new_axis, field.axis2.clone(), values),
        FieldAxis::X2 => ComplexField2D::new(field.axis1.clone(), new_axis, values),
    }
}

/// Fold of a source -> lens -> detection-plane chain into an equivalent
/// source-side free propagation plus a coordinate scaling and a quadratic
/// phase.
///
/// For a thin lens of focal length `f` at distance `u` from the source and a
/// detection plane a further `zbar` behind the lens, the detected field
/// equals (up to a global phase)
/// `Q[c] V[s] R[z]` applied to the source field, with
///
/// * `z = u - zbar f / (zbar - f)` — equivalent free-propagation distance,
/// * `s = 1 / (1 - zbar / f)` — coordinate scale (negative: inverted),
/// * `c = 1 / (zbar - f)` — residual quadratic phase curvature (1/m).
///
/// `zbar` must lie in `(f, u f / (u - f)]`: the upper end is the imaging
/// plane (`z = 0`), and `zbar -> f+` sends `z -> -infinity`. Detection
/// distances outside that interval have no negative-`z` equivalent and are
/// rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensFoldMap {
    /// Source-to-lens distance (m).
    pub u: f64,
    /// Lens focal length (m).
    pub f: f64,
    /// Lens-to-detection distance (m).
    pub zbar: f64,
    /// Equivalent free-propagation distance (m), always <= 0 in-domain.
    pub z: f64,
    /// Coordinate scale factor (negative: image inversion).
    pub scale: f64,
    /// Residual quadratic phase curvature (1/m).
    pub curvature: f64,
}

impl LensFoldMap {
    /// Build the fold for detection distance `zbar`, validating the domain.
    pub fn new(u: f64, f: f64, zbar: f64) -> Result<Self> {
        ensure_positive(u, "source-to-lens distance u")?;
        ensure_positive(f, "focal length f")?;
        ensure_positive(zbar, "detection distance zbar")?;
        if u <= f {
            return Err(Error::domain(format!(
                "lens fold needs u > f (real image); got u = {u}, f = {f}"
            )));
        }
        let z_image = u * f / (u - f);
        if zbar <= f || zbar > z_image * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "zbar = {zbar} outside the fold domain ({f}, {z_image}]"
            )));
        }
        let zbar = zbar.min(z_image);
        let z = u - zbar * f / (zbar - f);
        let scale = 1.0 / (1.0 - zbar / f);
        let curvature = 1.0 / (zbar - f);
        Ok(LensFoldMap { u, f, zbar, z, scale, curvature })
    }

    /// Detection distance whose fold reproduces free propagation by `z`
    /// (requires `z <= 0`): `zbar = (u - z) f / (u - z - f)`.
    pub fn zbar_for(u: f64, f: f64, z: f64) -> Result<f64> {
        ensure_positive(u, "source-to-lens distance u")?;
        ensure_positive(f, "focal length f")?;
        ensure_finite(z, "equivalent distance z")?;
        if u <= f {
            return Err(Error::domain(format!(
                "lens fold needs u > f (real image); got u = {u}, f = {f}"
            )));
        }
        if z > 0.0 {
            return Err(Error::domain(format!(
                "only z <= 0 has a fold-equivalent detection plane; got z = {z}"
            )));
        }
        Ok((u - z) * f / (u - z - f))
    }

    /// Apply the fold to a two-coordinate field: `R[z]` on both axes, then
    /// the coordinate scaling, then the residual quadratic phase (both axes).
    pub fn apply(&self, field: &ComplexField2D, lambda: f64) -> Result<ComplexField2D> {
        let propagated = fresnel_propagate(field, self.z, lambda)?;
        let scaled1 = scale_field(&propagated, FieldAxis::X1, self.scale)?;
        let scaled = scale_field(&scaled1, FieldAxis::X2, self.scale)?;
        let chirped1 = quadratic_phase(&scaled, FieldAxis::X1, self.curvature, lambda)?;
        quadratic_phase(&chirped1, FieldAxis::X2, self.curvature, lambda)
    }
}

/// Double-slit geometry: two openings of width `opening`, centre-to-centre
/// separation `separation`, centred on the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlitSpec {
    /// Centre-to-centre slit separation (m).
    pub separation: f64,
    /// Width of each opening (m).
    pub opening: f64,
}

impl SlitSpec {
    /// Build a slit pair, requiring `separation > opening > 0` so the
    /// openings do not overlap.
    pub fn new(separation: f64, opening: f64) -> Result<Self> {
        ensure_positive(opening, "slit opening")?;
        ensure_positive(separation, "slit separation")?;
        if separation <= opening {
            return Err(Error::domain(format!(
                "slit separation ({separation}) must exceed the opening ({opening})"
            )));
        }
        Ok(SlitSpec { separation, opening })
    }

    /// Transmission of the mask at coordinate `x` (1 inside either opening,
    /// 0 outside; edges inclusive).
    pub fn transmission(&self, x: f64) -> f64 {
        if (x.abs() - 0.5 * self.separation).abs() <= 0.5 * self.opening {
            1.0
        } else {
            0.0
        }
    }
}

/// Minimum number of grid samples across one slit opening.
pub const SLIT_MIN_SAMPLES: f64 = 8.0;

/// Apply the double-slit mask to both coordinates of a two-photon field
/// (both photons traverse the same aperture).
pub fn apply_slit_mask(field: &ComplexField2D, slit: &SlitSpec) -> Result<ComplexField2D> {
    for axis in [&field.axis1, &field.axis2] {
        let samples = slit.opening / axis.dx;
        if samples < SLIT_MIN_SAMPLES {
            return Err(Error::SlitUnderResolved {
                samples_across: samples,
                required: SLIT_MIN_SAMPLES,
            });
        }
    }
    let t1: Vec<f64> = field.axis1.coords().iter().map(|&x| slit.transmission(x)).collect();
    let t2: Vec<f64> = field.axis2.coords().iter().map(|&x| slit.transmission(x)).collect();
    let values = Array2::from_shape_fn(field.values.dim(), |(i, j)| {
        field.values[[i, j]] * (t1[i] * t2[j])
    });
    ComplexField2D::new(field.axis1.clone(), field.axis2.clone(), values)
}

/// Far-field (focal-plane) two-photon density behind a double slit.
///
/// Masks `field` with `slit` on both coordinates, Fourier-transforms to the
/// focal plane of a lens with focal length `f3`, maps frequency to position
/// as `x = lambda f3 nu`, and returns the normalised joint density on the
/// new (centre-DC, ascending) axes.
pub fn interference_density(
    field: &ComplexField2D,
    slit: &SlitSpec,
    f3: f64,
    lambda: f64,
) -> Result<Jpd2> {
    ensure_positive(f3, "focal length f3")?;
    ensure_positive(lambda, "wavelength")?;
    let masked = apply_slit_mask(field, slit)?;
    let mut spectrum = masked.values;
    fft2_inplace(&mut spectrum, false);
    let shifted = fftshift2(&spectrum);
    let axis_out = |axis: &Axis| -> Result<Axis> {
        let nu = shifted_freqs(axis.n, axis.dx);
        let dx_out = lambda * f3 / (axis.n as f64 * axis.dx);
        Axis::new(axis.n, dx_out, lambda * f3 * nu[0])
    };
    let ax1 = axis_out(&masked.axis1)?;
    let ax2 = axis_out(&masked.axis2)?;
    let mut jpd = Jpd2::new(ax1, ax2, shifted.mapv(|v| v.norm_sqr()))?;
    jpd.normalize()?;
    Ok(jpd)
}
