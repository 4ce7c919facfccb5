//! Sampled coordinate axes, complex two-coordinate fields, and real joint
//! densities.
//!
//! Conventions used throughout the crate:
//! * an [`Axis`] is a uniform grid `x_i = x0 + i*dx`;
//! * a [`ComplexField2D`] stores `psi(x1, x2)` with coordinate `x1` along
//!   array rows (index 0) and `x2` along columns (index 1);
//! * a [`Jpd2`] stores a real joint density on the same layout. Densities are
//!   normalised so that `sum(values) * dx1 * dx2 == 1`; maps derived from
//!   densities by subtraction (correlation residuals, baseline-subtracted
//!   maps) reuse the type with signed values, and every consumer that needs
//!   positivity checks for it explicitly.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// Relative tolerance used when deciding whether two axes describe the same
/// geometry.
/// Relative tolerance used when comparing axis geometry.
pub(crate) const AXIS_GEOMETRY_RTOL: f64 = 1e-9;

/// A uniform sampling axis: `n` points `x_i = x0 + i * dx` with `dx > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    /// Number of samples (>= 2).
    pub n: usize,
    /// Sample spacing in metres (> 0).
    pub dx: f64,
    /// Coordinate of sample 0 in metres.
    pub x0: f64,
}

impl Axis {
    /// Build an axis, validating the geometry.
    pub fn new(n: usize, dx: f64, x0: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("axis needs at least 2 samples, got {n}")));
        }
        ensure_positive(dx, "axis spacing dx")?;
        ensure_finite(x0, "axis origin x0")?;
        Ok(Axis { n, dx, x0 })
    }

    /// Build an axis of `n` samples centred on 0: `x0 = -(n-1)/2 * dx`.
    ///
    /// For even `n` the origin falls midway between the two central samples,
    /// so the sample set is exactly mirror-symmetric about 0.
    pub fn centered(n: usize, dx: f64) -> Result<Self> {
        Axis::new(n, dx, -0.5 * (n as f64 - 1.0) * dx)
    }

    /// Coordinate of sample `i`.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    /// All sample coordinates.
    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    /// Coordinate of the last sample.
    #[inline]
    pub fn last(&self) -> f64 {
        self.coord(self.n - 1)
    }

    /// Total span `(n-1) * dx`.
    #[inline]
    pub fn span(&self) -> f64 {
        (self.n - 1) as f64 * self.dx
    }

    /// Distance from the origin to the nearest axis end.
    ///
    /// This is the usable half-extent for states centred on 0.
    #[inline]
    pub fn min_edge_abs(&self) -> f64 {
        self.x0.abs().min(self.last().abs())
    }

    /// Whether `other` has the same sample count, spacing, and origin (up to
    /// a tight relative tolerance).
    pub fn same_geometry(&self, other: &Axis) -> bool {
        fn close(a: f64, b: f64, scale: f64) -> bool {
            (a - b).abs() <= AXIS_GEOMETRY_RTOL * scale.abs().max(1e-300)
        }
        self.n == other.n
            && close(self.dx, other.dx, self.dx)
            && close(self.x0, other.x0, self.dx.max(self.x0.abs()))
    }

    /// Index of the sample closest to coordinate `x`, clamped to the axis.
    pub fn nearest_index(&self, x: f64) -> usize {
        let raw = ((x - self.x0) / self.dx).round();
        if raw <= 0.0 {
            0
        } else if raw >= (self.n - 1) as f64 {
            self.n - 1
        } else {
            raw as usize
        }
    }
}

/// Compensated (Kahan-Babuska) sum; keeps error growth O(1) in the element
/// count, which matters for the 10^6-cell mass sums used by normalisation.
pub(crate) fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A complex field sampled on the tensor grid `axis1 x axis2`.
///
/// `values[[i, j]] = psi(axis1.coord(i), axis2.coord(j))`.
#[derive(Debug, Clone)]
pub struct ComplexField2D {
    pub axis1: Axis,
    pub axis2: Axis,
    pub values: Array2<Complex64>,
}

impl ComplexField2D {
    /// Build a field, validating that the array shape matches the axes.
    pub fn new(axis1: Axis, axis2: Axis, values: Array2<Complex64>) -> Result<Self> {
        if values.dim() != (axis1.n, axis2.n) {
            return Err(Error::domain(format!(
                "field shape {:?} does not match axes ({}, {})",
                values.dim(),
                axis1.n,
                axis2.n
            )));
        }
        Ok(ComplexField2D { axis1, axis2, values })
    }

    /// Squared-modulus mass `sum |psi|^2 dx1 dx2`.
    pub fn mass(&self) -> f64 {
        let cell = self.axis1.dx * self.axis2.dx;
        kahan_sum(self.values.iter().map(|v| v.norm_sqr())) * cell
    }

    /// Scale the field so that [`mass`](Self::mass) becomes 1.
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::degenerate(format!(
                "cannot normalise field with squared mass {m}"
            )));
        }
        let scale = 1.0 / m.sqrt();
        self.values.mapv_inplace(|v| v * scale);
        Ok(())
    }

    /// Squared modulus as a joint density (not re-normalised).
    pub fn density(&self) -> Jpd2 {
        Jpd2 {
            axis1: self.axis1.clone(),
            axis2: self.axis2.clone(),
            values: self.values.mapv(|v| v.norm_sqr()),
        }
    }
}

/// A real-valued joint distribution (or signed residual map) on `axis1 x axis2`.
#[derive(Debug, Clone)]
pub struct Jpd2 {
    pub axis1: Axis,
    pub axis2: Axis,
    pub values: Array2<f64>,
}

impl Jpd2 {
    /// Build a map, validating that the array shape matches the axes.
    pub fn new(axis1: Axis, axis2: Axis, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (axis1.n, axis2.n) {
            return Err(Error::domain(format!(
                "map shape {:?} does not match axes ({}, {})",
                values.dim(),
                axis1.n,
                axis2.n
            )));
        }
        Ok(Jpd2 { axis1, axis2, values })
    }

    /// Total mass `sum(values) * dx1 * dx2` (signed).
    pub fn mass(&self) -> f64 {
        kahan_sum(self.values.iter().copied()) * self.axis1.dx * self.axis2.dx
    }

    /// Scale so that [`mass`](Self::mass) becomes 1.
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::degenerate(format!("cannot normalise map with mass {m}")));
        }
        let scale = 1.0 / m;
        self.values.mapv_inplace(|v| v * scale);
        Ok(())
    }

    /// Number of strictly negative cells.
    pub fn negative_count(&self) -> usize {
        self.values.iter().filter(|&&v| v < 0.0).count()
    }

    /// Smallest cell value.
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest cell value.
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Clamp negative cells to 0, returning how many were clipped.
    pub fn clip_negatives(&mut self) -> usize {
        let mut clipped = 0usize;
        self.values.mapv_inplace(|v| {
            if v < 0.0 {
                clipped += 1;
                0.0
            } else {
                v
            }
        });
        clipped
    }

    /// Marginal density along coordinate 1: `m(x1) = sum_j values * dx2`.
    pub fn marginal1(&self) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|row| kahan_sum(row.iter().copied()) * self.axis2.dx)
            .collect()
    }

    /// Marginal density along coordinate 2: `m(x2) = sum_i values * dx1`.
    pub fn marginal2(&self) -> Vec<f64> {
        (0..self.axis2.n)
            .map(|j| kahan_sum(self.values.column(j).iter().copied()) * self.axis1.dx)
            .collect()
    }

    /// Whether the two axes describe the same geometry (square map).
    pub fn is_square_grid(&self) -> bool {
        self.axis1.same_geometry(&self.axis2)
    }
}

/// Mean and standard deviation of a sampled 1-D density.
///
/// `values` are density samples on `axis`; the result uses the discrete
/// probability weights `values * dx / mass`. Returns an error when the mass
/// is not strictly positive.
pub fn density_mean_std(axis: &Axis, values: &[f64]) -> Result<(f64, f64)> {
    if values.len() != axis.n {
        return Err(Error::domain(format!(
            "density length {} does not match axis ({})",
            values.len(),
            axis.n
        )));
    }
    let mass = kahan_sum(values.iter().copied());
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::degenerate(format!(
            "cannot take moments of a density with non-positive mass ({mass})"
        )));
    }
    let mean = kahan_sum(values.iter().enumerate().map(|(i, &v)| v * axis.coord(i))) / mass;
    let var = kahan_sum(values.iter().enumerate().map(|(i, &v)| {
        let d = axis.coord(i) - mean;
        v * d * d
    })) / mass;
    Ok((mean, var.max(0.0).sqrt()))
}
