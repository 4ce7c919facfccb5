//! Double-Gaussian two-photon transverse states.
//!
//! A source is parameterised by the standard deviations of the transverse
//! sum and difference coordinates at the source plane, `sigma_plus` and
//! `sigma_minus`, plus the photon wavelength. With `u = x1 - x2` and
//! `v = x1 + x2`, the source-plane amplitude is
//!
//! ```text
//! psi(x1, x2) ~ exp(-u^2 / (4 sigma_minus^2) - v^2 / (4 sigma_plus^2))
//! ```
//!
//! so the joint density has `std(u) = sigma_minus` and `std(v) = sigma_plus`.
//! Free paraxial propagation by a distance `z` turns each real width into the
//! complex parameter `i z / k + sigma^2`, giving the propagated widths
//! `sigma(z) = sqrt(sigma^2 + (z / (k sigma))^2)`.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{ensure_positive, Error, Result};
use crate::grid::{Axis, ComplexField2D, Jpd2};

/// Required clearance between the state's widest Gaussian and the nearest
/// grid edge, in units of that Gaussian's standard deviation.
pub const REQUIRED_SIGMA_COVERAGE: f64 = 4.0;

/// Sum/difference widths after propagating a distance `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatedWidths {
    /// Standard deviation of `x1 + x2` at plane `z` (metres).
    pub sigma_plus: f64,
    /// Standard deviation of `x1 - x2` at plane `z` (metres).
    pub sigma_minus: f64,
}

/// A double-Gaussian two-photon source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DGSource {
    /// Source-plane standard deviation of the sum coordinate (metres).
    pub sigma_plus: f64,
    /// Source-plane standard deviation of the difference coordinate (metres).
    pub sigma_minus: f64,
    /// Photon wavelength (metres).
    pub lambda: f64,
}

impl DGSource {
    /// Build a source, validating all parameters.
    pub fn new(sigma_plus: f64, sigma_minus: f64, lambda: f64) -> Result<Self> {
        ensure_positive(sigma_plus, "sigma_plus")?;
        ensure_positive(sigma_minus, "sigma_minus")?;
        ensure_positive(lambda, "lambda")?;
        Ok(DGSource { sigma_plus, sigma_minus, lambda })
    }

    /// Photon wavenumber `k = 2 pi / lambda`.
    #[inline]
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lambda
    }

    /// Widths of the sum/difference Gaussians after free propagation by `z`
    /// (either sign): `sigma(z) = sqrt(sigma^2 + (z/(k sigma))^2)`.
    pub fn widths_at(&self, z: f64) -> PropagatedWidths {
        let k = self.wavenumber();
        PropagatedWidths {
            sigma_plus: self.sigma_plus.hypot(z / (k * self.sigma_plus)),
            sigma_minus: self.sigma_minus.hypot(z / (k * self.sigma_minus)),
        }
    }

    /// Schmidt number `K = (r + 1/r)^2 / 4` with `r = sigma_plus/sigma_minus`.
    pub fn schmidt_number(&self) -> f64 {
        let r = self.sigma_plus / self.sigma_minus;
        0.25 * (r + 1.0 / r) * (r + 1.0 / r)
    }

    /// Distance `z_p = k sigma_plus sigma_minus` at which the sum and
    /// difference widths become equal (the balanced, phase-dominated plane).
    pub fn z_phase(&self) -> f64 {
        self.wavenumber() * self.sigma_plus * self.sigma_minus
    }

    /// Fedorov ratio at plane `z`: marginal width over conditional width,
    /// `F(z) = (a/b + b/a) / 2` with `a, b` the propagated sum/difference
    /// widths. Equals 1 exactly at `z = +/- z_phase`.
    pub fn fedorov_analytic(&self, z: f64) -> f64 {
        let w = self.widths_at(z);
        let r = w.sigma_plus / w.sigma_minus;
        0.5 * (r + 1.0 / r)
    }

    /// Per-coordinate marginal standard deviation of the joint density at
    /// plane `z`: `sqrt(sigma_plus(z)^2 + sigma_minus(z)^2) / 2`.
    pub fn marginal_std(&self, z: f64) -> f64 {
        let w = self.widths_at(z);
        0.5 * w.sigma_plus.hypot(w.sigma_minus)
    }

    /// Conditional standard deviation of `x1` given `x2` at plane `z`:
    /// `sigma_plus(z) sigma_minus(z) / sqrt(sigma_plus(z)^2 + sigma_minus(z)^2)`.
    pub fn conditional_std(&self, z: f64) -> f64 {
        let w = self.widths_at(z);
        w.sigma_plus * w.sigma_minus / w.sigma_plus.hypot(w.sigma_minus)
    }

    fn check_grid(&self, axis1: &Axis, axis2: &Axis, z: f64) -> Result<()> {
        let w = self.widths_at(z);
        // The u/v Gaussians live on the diagonals; per-axis coverage of the
        // widest one keeps the state's support inside the grid.
        let required = REQUIRED_SIGMA_COVERAGE * w.sigma_plus.max(w.sigma_minus);
        let extent = axis1.min_edge_abs().min(axis2.min_edge_abs());
        if extent < required {
            return Err(Error::GridTooSmall { required_m: required, extent_m: extent });
        }
        Ok(())
    }

    /// Evaluate the propagated two-photon amplitude on `axis1 x axis2` at
    /// plane `z` and normalise it to unit squared mass on the grid.
    ///
    /// Errors with [`Error::GridTooSmall`] when the grid edge is closer than
    /// [`REQUIRED_SIGMA_COVERAGE`] standard deviations of the widest
    /// propagated Gaussian.
    pub fn eval_dg(&self, axis1: &Axis, axis2: &Axis, z: f64) -> Result<ComplexField2D> {
        self.check_grid(axis1, axis2, z)?;
        let k = self.wavenumber();
        let q_minus = Complex64::new(self.sigma_minus * self.sigma_minus, z / k);
        let q_plus = Complex64::new(self.sigma_plus * self.sigma_plus, z / k);
        let inv4_minus = (q_minus * 4.0).inv();
        let inv4_plus = (q_plus * 4.0).inv();
        let x1 = axis1.coords();
        let x2 = axis2.coords();
        let values = Array2::from_shape_fn((axis1.n, axis2.n), |(i, j)| {
            let u = x1[i] - x2[j];
            let v = x1[i] + x2[j];
            (-(inv4_minus * (u * u)) - inv4_plus * (v * v)).exp()
        });
        let mut field = ComplexField2D::new(axis1.clone(), axis2.clone(), values)?;
        field.normalize()?;
        Ok(field)
    }

    /// Evaluate the state at the balanced plane `z = +z_phase` in its
    /// factorised closed form and normalise it.
    ///
    /// With `S = sigma_plus^2 + sigma_minus^2`, the modulus separates as
    /// `exp(-(x1^2 + x2^2) / (2 S))` while all two-photon structure moves
    /// into the quadratic phase
    /// `(u^2 sigma_plus/sigma_minus + v^2 sigma_minus/sigma_plus) / (4 S)`.
    /// Identical (including phase) to `eval_dg` at `z = z_phase`.
    pub fn eval_phase_state(&self, axis1: &Axis, axis2: &Axis) -> Result<ComplexField2D> {
        let zp = self.z_phase();
        self.check_grid(axis1, axis2, zp)?;
        let s = self.sigma_plus * self.sigma_plus + self.sigma_minus * self.sigma_minus;
        let ratio_pm = self.sigma_plus / self.sigma_minus;
        let x1 = axis1.coords();
        let x2 = axis2.coords();
        let values = Array2::from_shape_fn((axis1.n, axis2.n), |(i, j)| {
            let u = x1[i] - x2[j];
            let v = x1[i] + x2[j];
            let modulus = -(x1[i] * x1[i] + x2[j] * x2[j]) / (2.0 * s);
            let phase = (u * u * ratio_pm + v * v / ratio_pm) / (4.0 * s);
            Complex64::new(modulus, phase).exp()
        });
        let mut field = ComplexField2D::new(axis1.clone(), axis2.clone(), values)?;
        field.normalize()?;
        Ok(field)
    }

    /// Closed-form joint density at plane `z`, normalised on the grid.
    ///
    /// Equal to `eval_dg(...).density()` but cheaper and exactly real:
    /// `rho ~ exp(-u^2/(2 sigma_minus(z)^2) - v^2/(2 sigma_plus(z)^2))`.
    pub fn jpd_analytic(&self, axis1: &Axis, axis2: &Axis, z: f64) -> Result<Jpd2> {
        self.check_grid(axis1, axis2, z)?;
        let w = self.widths_at(z);
        let inv2m = 1.0 / (2.0 * w.sigma_minus * w.sigma_minus);
        let inv2p = 1.0 / (2.0 * w.sigma_plus * w.sigma_plus);
        let x1 = axis1.coords();
        let x2 = axis2.coords();
        let values = Array2::from_shape_fn((axis1.n, axis2.n), |(i, j)| {
            let u = x1[i] - x2[j];
            let v = x1[i] + x2[j];
            (-u * u * inv2m - v * v * inv2p).exp()
        });
        let mut jpd = Jpd2::new(axis1.clone(), axis2.clone(), values)?;
        jpd.normalize()?;
        Ok(jpd)
    }
}

/// Difference-coordinate width produced by a crystal of length `length`
/// pumped at `lambda_pump` with refractive index `n_pump`:
/// `sigma_minus = sqrt(length * lambda_pump / (6 pi n_pump))`.
pub fn sigma_minus_from_crystal(length: f64, lambda_pump: f64, n_pump: f64) -> Result<f64> {
    ensure_positive(length, "crystal length")?;
    ensure_positive(lambda_pump, "pump wavelength")?;
    ensure_positive(n_pump, "pump refractive index")?;
    Ok((length * lambda_pump / (6.0 * std::f64::consts::PI * n_pump)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::density_mean_std;
    use approx::assert_relative_eq;

    /// Reference source used by most tests: 140.2 um / 12.6 um at 810 nm.
    fn src_a() -> DGSource {
        DGSource::new(140.2e-6, 12.6e-6, 810e-9).unwrap()
    }

    /// Strongly phase-structured source: 326 um / 9 um at 810 nm.
    fn src_b() -> DGSource {
        DGSource::new(326e-6, 9e-6, 810e-9).unwrap()
    }

    #[test]
    fn crystal_width_reference_values() {
        // 10 mm crystal, 405 nm pump, n = 1.8.
        let s = sigma_minus_from_crystal(10e-3, 405e-9, 1.8).unwrap();
        assert_relative_eq!(s, 1.0925484305920791e-5, max_relative = 1e-12);
        // Half-length crystal scales by sqrt(1/2).
        let s5 = sigma_minus_from_crystal(5e-3, 405e-9, 1.8).unwrap();
        assert_relative_eq!(s5, 7.725484040463793e-6, max_relative = 1e-12);
        assert_relative_eq!(s5, s / 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn schmidt_number_reference_values() {
        assert_relative_eq!(src_a().schmidt_number(), 31.454463167199272, max_relative = 1e-12);
        assert_relative_eq!(src_b().schmidt_number(), 328.512536220621, max_relative = 1e-9);
    }

    #[test]
    fn balanced_distance_reference_values() {
        assert_relative_eq!(src_a().z_phase(), 0.013702929023257879, max_relative = 1e-12);
        assert_relative_eq!(src_b().z_phase(), 0.022759093446006056, max_relative = 1e-12);
    }

    #[test]
    fn widths_equalise_at_balanced_plane() {
        let src = src_a();
        let w = src.widths_at(src.z_phase());
        assert_relative_eq!(w.sigma_plus, 1.4076505248107572e-4, max_relative = 1e-12);
        assert_relative_eq!(w.sigma_minus, 1.4076505248107572e-4, max_relative = 1e-12);
        assert_relative_eq!(src.fedorov_analytic(src.z_phase()), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fedorov_reference_values() {
        assert_relative_eq!(src_a().fedorov_analytic(0.0), 5.608427869483504, max_relative = 1e-12);
        let fig = DGSource::new(140.24e-6, 12.56e-6, 810e-9).unwrap();
        assert_relative_eq!(fig.fedorov_analytic(0.0), 5.6275829242681334, max_relative = 1e-12);
        // K = F(0)^2 for this family.
        let f0 = src_a().fedorov_analytic(0.0);
        assert_relative_eq!(src_a().schmidt_number(), f0 * f0, max_relative = 1e-12);
    }

    #[test]
    fn widths_are_even_in_z() {
        let src = src_a();
        for z in [1e-3, 7e-3, 0.02] {
            let wp = src.widths_at(z);
            let wm = src.widths_at(-z);
            assert_relative_eq!(wp.sigma_plus, wm.sigma_plus, max_relative = 1e-15);
            assert_relative_eq!(wp.sigma_minus, wm.sigma_minus, max_relative = 1e-15);
            assert_relative_eq!(
                src.fedorov_analytic(z),
                src.fedorov_analytic(-z),
                max_relative = 1e-15
            );
        }
    }

    #[test]
    fn marginal_and_conditional_reference_values() {
        let src = src_a();
        assert_relative_eq!(src.marginal_std(0.0), 7.038252624053786e-5, max_relative = 1e-12);
        assert_relative_eq!(src.conditional_std(0.0), 1.2549421670108698e-5, max_relative = 1e-12);
        // Their ratio is the Fedorov ratio.
        assert_relative_eq!(
            src.marginal_std(0.0) / src.conditional_std(0.0),
            src.fedorov_analytic(0.0),
            max_relative = 1e-12
        );
    }

    fn grid_for(src: &DGSource, z: f64, n: usize, sigmas: f64) -> Axis {
        let w = src.widths_at(z);
        let half = sigmas * w.sigma_plus.max(w.sigma_minus);
        Axis::centered(n, 2.0 * half / (n as f64 - 1.0)).unwrap()
    }

    #[test]
    fn eval_rejects_undersized_grid() {
        let src = src_a();
        let ax = grid_for(&src, 0.0, 64, 3.0);
        match src.eval_dg(&ax, &ax, 0.0) {
            Err(Error::GridTooSmall { .. }) => {}
            other => panic!("expected GridTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn density_matches_closed_form() {
        let src = src_a();
        let ax = grid_for(&src, 0.0, 129, 6.0);
        let field = src.eval_dg(&ax, &ax, 0.0).unwrap();
        let direct = src.jpd_analytic(&ax, &ax, 0.0).unwrap();
        let dens = field.density();
        for (a, b) in dens.values.iter().zip(direct.values.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-6 * direct.max_value());
        }
    }

    #[test]
    fn marginals_are_gaussian_with_stated_width() {
        let src = src_a();
        for z in [0.0, src.z_phase(), 2.0 * src.z_phase()] {
            let ax = grid_for(&src, z, 257, 6.0);
            let jpd = src.jpd_analytic(&ax, &ax, z).unwrap();
            let m1 = jpd.marginal1();
            let (mean, std) = density_mean_std(&ax, &m1).unwrap();
            assert!(mean.abs() < 1e-12);
            assert_relative_eq!(std, src.marginal_std(z), max_relative = 1e-3);
            // Excess kurtosis of the marginal stays below 0.01.
            let mass: f64 = m1.iter().sum();
            let m4: f64 = m1
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let d = ax.coord(i) - mean;
                    v * d * d * d * d
                })
                .sum::<f64>()
                / mass;
            let kurt = m4 / (std * std * std * std) - 3.0;
            assert!(kurt.abs() < 0.01, "excess kurtosis {kurt} at z = {z}");
        }
    }

    #[test]
    fn phase_state_matches_propagated_state() {
        let src = src_a();
        let zp = src.z_phase();
        let ax = grid_for(&src, zp, 128, 5.0);
        let closed = src.eval_phase_state(&ax, &ax).unwrap();
        let evolved = src.eval_dg(&ax, &ax, zp).unwrap();
        // Both are normalised with a real-positive value at the grid centre,
        // so they agree including phase.
        let mut max_err = 0.0f64;
        for (a, b) in closed.values.iter().zip(evolved.values.iter()) {
            max_err = max_err.max((a - b).norm());
        }
        let peak = closed.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(max_err < 1e-10 * peak, "max deviation {max_err}, peak {peak}");
    }

    #[test]
    fn phase_state_modulus_factorises() {
        let src = src_b();
        let ax = grid_for(&src, src.z_phase(), 96, 5.0);
        let rho = src.eval_phase_state(&ax, &ax).unwrap().density();
        // Separability cross-ratio: rho(i,j) rho(c,c) = rho(i,c) rho(c,j).
        let c = ax.n / 2;
        let peak = rho.max_value();
        for i in (0..ax.n).step_by(7) {
            for j in (0..ax.n).step_by(7) {
                let lhs = rho.values[[i, j]] * rho.values[[c, c]];
                let rhs = rho.values[[i, c]] * rho.values[[c, j]];
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * peak * peak,
                    "separability residual {} at ({i},{j})",
                    (lhs - rhs).abs() / (peak * peak)
                );
            }
        }
    }

    #[test]
    fn phase_state_cross_derivative_matches_closed_form() {
        let src = src_b();
        // Fine grid near the origin for the finite difference; the closed
        // form needs no grid-coverage guard here, so build the state by hand
        // via the public API on a compliant grid and read near the centre.
        let ax = grid_for(&src, src.z_phase(), 1025, 5.0);
        let field = src.eval_phase_state(&ax, &ax).unwrap();
        let c = ax.n / 2; // odd n: exact centre sample at x = 0
        let phase = |i: usize, j: usize| field.values[[i, j]].arg();
        let d = 1usize;
        let num = phase(c + d, c + d) - phase(c + d, c - d) - phase(c - d, c + d)
            + phase(c - d, c - d);
        let cross = num / (4.0 * ax.dx * ax.dx);
        let s = src.sigma_plus * src.sigma_plus + src.sigma_minus * src.sigma_minus;
        let expect = (src.sigma_minus / src.sigma_plus - src.sigma_plus / src.sigma_minus)
            / (2.0 * s);
        assert_relative_eq!(cross, expect, max_relative = 1e-4);
    }

    #[test]
    fn swapping_photons_is_a_symmetry() {
        let src = src_a();
        let ax = grid_for(&src, 0.0, 65, 5.0);
        let jpd = src.jpd_analytic(&ax, &ax, 0.0).unwrap();
        for i in 0..ax.n {
            for j in 0..ax.n {
                assert_relative_eq!(
                    jpd.values[[i, j]],
                    jpd.values[[j, i]],
                    max_relative = 1e-12
                );
            }
        }
    }
}
