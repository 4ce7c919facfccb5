//! Nonlinear least-squares fits for reconstructed maps.
//!
//! A small Levenberg-Marquardt core (numeric central-difference Jacobian,
//! damped normal equations) drives two models:
//!
//! * a 1D Gaussian with offset, used for marginals and conditional slices;
//! * a 2D Gaussian that is separable in the rotated coordinates
//!   `u = x1 - x2`, `v = x1 + x2`, the natural shape of the joint maps
//!   produced here. Its widths are reported directly as the
//!   difference-coordinate and sum-coordinate standard deviations.
//!
//! Coordinates and values are normalised internally so the damping and
//! convergence thresholds are scale-free.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{Jpd2, AXIS_GEOMETRY_RTOL};

/// Minimum number of data points per fitted parameter-set.
const MIN_POINTS_1D: usize = 8;

struct LmResult {
    params: Vec<f64>,
    rms: f64,
    converged: bool,
    iterations: usize,
}

/// Solve `a x = b` for small dense systems by Gaussian elimination with
/// partial pivoting. Returns None when the pivot collapses.
fn solve_dense(mut a: Array2<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[[row, col]].abs() > a[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if a[[pivot, col]].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                let tmp = a[[col, k]];
                a[[col, k]] = a[[pivot, k]];
                a[[pivot, k]] = tmp;
            }
            b.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let f = a[[row, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[[row, k]] * x[k];
        }
        x[row] = acc / a[[row, row]];
    }
    Some(x)
}

/// Levenberg-Marquardt over a residual function `r(params, out)`.
fn lm_fit<F>(residuals: F, n_resid: usize, p0: &[f64], max_iterations: usize) -> LmResult
where
    F: Fn(&[f64], &mut [f64]),
{
    let np = p0.len();
    let tol = 1e-10;
    let mut params = p0.to_vec();
    let mut r = vec![0.0; n_resid];
    let mut r_trial = vec![0.0; n_resid];
    residuals(&params, &mut r);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = vec![0.0; n_resid * np];
    let mut rp = vec![0.0; n_resid];
    let mut rm = vec![0.0; n_resid];

    for iter in 0..max_iterations {
        iterations = iter + 1;
        // Central-difference Jacobian.
        for p in 0..np {
            let h = 1e-6 * params[p].abs().max(1.0);
            let mut probe = params.clone();
            probe[p] += h;
            residuals(&probe, &mut rp);
            probe[p] = params[p] - h;
            residuals(&probe, &mut rm);
            let inv = 0.5 / h;
            for i in 0..n_resid {
                jac[i * np + p] = (rp[i] - rm[i]) * inv;
            }
        }
        // Normal equations J^T J and J^T r.
        let mut jtj = Array2::<f64>::zeros((np, np));
        let mut jtr = vec![0.0; np];
        for i in 0..n_resid {
            let row = &jac[i * np..(i + 1) * np];
            for a in 0..np {
                jtr[a] += row[a] * r[i];
                for b in a..np {
                    jtj[[a, b]] += row[a] * row[b];
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                jtj[[a, b]] = jtj[[b, a]];
            }
        }
        // Damped step, retrying with stronger damping on failure.
        let mut accepted = false;
        for _ in 0..10 {
            let mut damped = jtj.clone();
            for a in 0..np {
                damped[[a, a]] += lambda * jtj[[a, a]].max(1e-12);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = solve_dense(damped, rhs) else {
                lambda *= 4.0;
                continue;
            };
            let trial: Vec<f64> =
                params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            residuals(&trial, &mut r_trial);
            let trial_cost: f64 = r_trial.iter().map(|v| v * v).sum();
            if trial_cost <= cost {
                let step_norm: f64 = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                let param_norm: f64 = params.iter().map(|v| v * v).sum::<f64>().sqrt();
                let improvement = cost - trial_cost;
                params = trial;
                std::mem::swap(&mut r, &mut r_trial);
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if step_norm <= tol * (1.0 + param_norm) || improvement <= tol * cost.max(1e-300) {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if converged || !accepted {
            converged = converged || !accepted && cost.is_finite();
            break;
        }
    }
    LmResult { params, rms: (cost / n_resid as f64).sqrt(), converged, iterations }
}

/// Result of a 1D Gaussian-with-offset fit.
#[derive(Debug, Clone)]
pub struct Gaussian1dFit {
    /// Peak height above the offset.
    pub amplitude: f64,
    /// Peak centre (input x units).
    pub center: f64,
    /// Standard deviation (input x units, positive).
    pub sigma: f64,
    /// Constant offset.
    pub offset: f64,
    /// Root-mean-square residual (input y units).
    pub rms_residual: f64,
    /// Whether the optimiser met its convergence threshold.
    pub converged: bool,
    /// Iterations used.
    pub iterations: usize,
}

/// Fit `y = A exp(-(x - c)^2 / (2 s^2)) + b` to `(xs, ys)`.
///
/// Needs at least 8 points spanning a nonzero range and a nonzero value
/// spread. Points need not be evenly spaced or sorted, so masked cells can
/// simply be left out.
pub fn fit_gaussian_1d(xs: &[f64], ys: &[f64]) -> Result<Gaussian1dFit> {
    if xs.len() != ys.len() {
        return Err(Error::domain(format!(
            "coordinate/value length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < MIN_POINTS_1D {
        return Err(Error::degenerate(format!(
            "1D fit needs at least {MIN_POINTS_1D} points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("fit data contains non-finite values"));
    }
    let (xmin, xmax) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
        (lo.min(y), hi.max(y))
    });
    if xmax - xmin <= 0.0 {
        return Err(Error::degenerate("1D fit needs a nonzero coordinate span"));
    }
    if ymax - ymin <= 0.0 {
        return Err(Error::degenerate("1D fit needs a nonzero value spread"));
    }
    // Moment-based initial guess from the offset-stripped positive part.
    let mut w_sum = 0.0;
    let mut wx = 0.0;
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        let w = (y - ymin).max(0.0);
        w_sum += w;
        wx += w * x;
    }
    let c0 = wx / w_sum;
    let mut wxx = 0.0;
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        let w = (y - ymin).max(0.0);
        wxx += w * (x - c0) * (x - c0);
    }
    let s0 = (wxx / w_sum).sqrt().max(0.05 * (xmax - xmin));

    // Normalised coordinates: x' centred on the guess, unit guess width.
    let yscale = (ymax - ymin).max(ymin.abs()).max(1e-300);
    let xn: Vec<f64> = xs.iter().map(|&x| (x - c0) / s0).collect();
    let yn: Vec<f64> = ys.iter().map(|&y| y / yscale).collect();
    let p0 = [(ymax - ymin) / yscale, 0.0, 1.0, ymin / yscale];
    let model = |p: &[f64], out: &mut [f64]| {
        let (a, c, s, b) = (p[0], p[1], p[2], p[3]);
        let inv = 1.0 / (2.0 * s * s).max(1e-300);
        for (i, (&x, &y)) in xn.iter().zip(yn.iter()).enumerate() {
            let d = x - c;
            out[i] = a * (-d * d * inv).exp() + b - y;
        }
    };
    let lm = lm_fit(model, xn.len(), &p0, 200);
    Ok(Gaussian1dFit {
        amplitude: lm.params[0] * yscale,
        center: c0 + lm.params[1] * s0,
        sigma: lm.params[2].abs() * s0,
        offset: lm.params[3] * yscale,
        rms_residual: lm.rms * yscale,
        converged: lm.converged,
        iterations: lm.iterations,
    })
}

/// Options for the 2D rotated-Gaussian fit.
#[derive(Debug, Clone)]
pub struct DgFitOptions {
    /// Leave out cells with `x1 = x2` (the self-pixel diagonal, which the
    /// pairwise estimator fills with singles statistics).
    pub exclude_zero_diff: bool,
    /// Optimiser iteration cap.
    pub max_iterations: usize,
}

impl Default for DgFitOptions {
    fn default() -> Self {
        DgFitOptions { exclude_zero_diff: false, max_iterations: 200 }
    }
}

/// Result of the 2D rotated-Gaussian fit.
#[derive(Debug, Clone)]
pub struct FitResultDg {
    /// Peak height above the offset.
    pub amplitude: f64,
    /// Standard deviation along `x1 - x2` (m).
    pub sigma_minus: f64,
    /// Standard deviation along `x1 + x2` (m).
    pub sigma_plus: f64,
    /// Centre along `x1 - x2` (m).
    pub center_diff: f64,
    /// Centre along `x1 + x2` (m).
    pub center_sum: f64,
    /// Constant offset.
    pub offset: f64,
    /// Root-mean-square residual (map value units).
    pub rms_residual: f64,
    /// Whether the optimiser met its convergence threshold.
    pub converged: bool,
    /// Iterations used.
    pub iterations: usize,
}

/// Fit `A exp(-(u - cu)^2/(2 su^2) - (v - cv)^2/(2 sv^2)) + b` to a joint
/// map, with `u = x1 - x2` and `v = x1 + x2`.
///
/// Both axes must share the same step. Negative cells are used as-is (the
/// fit is what makes raw estimator output usable without clipping).
pub fn fit_dg_2d(jpd: &Jpd2, options: &DgFitOptions) -> Result<FitResultDg> {
    let dx = jpd.axis1.dx;
    if (jpd.axis2.dx - dx).abs() > AXIS_GEOMETRY_RTOL * dx {
        return Err(Error::domain(format!(
            "joint fit needs equal axis steps, got {} and {}",
            jpd.axis1.dx, jpd.axis2.dx
        )));
    }
    let (n1, n2) = jpd.values.dim();
    let mut us = Vec::with_capacity(n1 * n2);
    let mut vs = Vec::with_capacity(n1 * n2);
    let mut ys = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        let x1 = jpd.axis1.coord(i);
        for j in 0..n2 {
            let x2 = jpd.axis2.coord(j);
            if options.exclude_zero_diff && (x1 - x2).abs() < 0.5 * dx {
                continue;
            }
            us.push((x1 - x2) / dx);
            vs.push((x1 + x2) / dx);
            ys.push(jpd.values[[i, j]]);
        }
    }
    if ys.len() < MIN_POINTS_1D * 2 {
        return Err(Error::degenerate(format!(
            "joint fit has only {} usable cells",
            ys.len()
        )));
    }
    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
        (lo.min(y), hi.max(y))
    });
    if ymax - ymin <= 0.0 {
        return Err(Error::degenerate("joint fit needs a nonzero value spread"));
    }
    // Moment guesses from the offset-stripped positive part.
    let mut w_sum = 0.0;
    let mut wu = 0.0;
    let mut wv = 0.0;
    for ((&u, &v), &y) in us.iter().zip(vs.iter()).zip(ys.iter()) {
        let w = (y - ymin).max(0.0);
        w_sum += w;
        wu += w * u;
        wv += w * v;
    }
    let (cu0, cv0) = (wu / w_sum, wv / w_sum);
    let mut wuu = 0.0;
    let mut wvv = 0.0;
    for ((&u, &v), &y) in us.iter().zip(vs.iter()).zip(ys.iter()) {
        let w = (y - ymin).max(0.0);
        wuu += w * (u - cu0) * (u - cu0);
        wvv += w * (v - cv0) * (v - cv0);
    }
    let su0 = (wuu / w_sum).sqrt().max(0.5);
    let sv0 = (wvv / w_sum).sqrt().max(0.5);

    let yscale = (ymax - ymin).max(ymin.abs()).max(1e-300);
    let yn: Vec<f64> = ys.iter().map(|&y| y / yscale).collect();
    let p0 = [
        (ymax - ymin) / yscale,
        cu0,
        su0,
        cv0,
        sv0,
        ymin / yscale,
    ];
    let model = |p: &[f64], out: &mut [f64]| {
        let (a, cu, su, cv, sv, b) = (p[0], p[1], p[2], p[3], p[4], p[5]);
        let inv_u = 1.0 / (2.0 * su * su).max(1e-300);
        let inv_v = 1.0 / (2.0 * sv * sv).max(1e-300);
        for i in 0..out.len() {
            let du = us[i] - cu;
            let dv = vs[i] - cv;
            out[i] = a * (-du * du * inv_u - dv * dv * inv_v).exp() + b - yn[i];
        }
    };
    let lm = lm_fit(model, yn.len(), &p0, options.max_iterations);
    Ok(FitResultDg {
        amplitude: lm.params[0] * yscale,
        sigma_minus: lm.params[2].abs() * dx,
        sigma_plus: lm.params[4].abs() * dx,
        center_diff: lm.params[1] * dx,
        center_sum: lm.params[3] * dx,
        offset: lm.params[5] * yscale,
        rms_residual: lm.rms * yscale,
        converged: lm.converged,
        iterations: lm.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::DGSource;
    use crate::grid::Axis;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_1d_recovers_exact_parameters() {
        let xs: Vec<f64> = (0..64).map(|i| -3.2e-4 + 1e-5 * i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 2.5 * (-(x - 4e-5) * (x - 4e-5) / (2.0 * 7e-5 * 7e-5)).exp() + 0.3)
            .collect();
        let fit = fit_gaussian_1d(&xs, &ys).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.amplitude, 2.5, max_relative = 1e-6);
        assert_relative_eq!(fit.center, 4e-5, max_relative = 1e-6);
        assert_relative_eq!(fit.sigma, 7e-5, max_relative = 1e-6);
        assert_relative_eq!(fit.offset, 0.3, max_relative = 1e-6);
        assert!(fit.rms_residual < 1e-9);
    }

    #[test]
    fn gaussian_1d_handles_noise_and_masked_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..80 {
            if i % 7 == 0 {
                continue; // unevenly masked points
            }
            let x = -4e-4 + 1e-5 * i as f64;
            let y = 1.8 * (-x * x / (2.0 * 9e-5 * 9e-5)).exp() + 0.1
                + 0.02 * (rng.random::<f64>() - 0.5);
            xs.push(x);
            ys.push(y);
        }
        let fit = fit_gaussian_1d(&xs, &ys).unwrap();
        assert_relative_eq!(fit.sigma, 9e-5, max_relative = 0.03);
        assert_relative_eq!(fit.center, 0.0, epsilon = 5e-6);
    }

    #[test]
    fn gaussian_1d_rejects_degenerate_input() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(fit_gaussian_1d(&xs[..4], &[1.0, 2.0, 3.0, 2.0]).is_err());
        let flat = vec![1.0; 10];
        assert!(fit_gaussian_1d(&xs, &flat).is_err());
        let same_x = vec![0.0; 10];
        assert!(fit_gaussian_1d(&same_x, &xs).is_err());
    }

    #[test]
    fn dg_2d_recovers_analytic_widths() {
        let src = DGSource::new(140.2e-6, 12.6e-6, 810e-9).unwrap();
        let axis = Axis::centered(128, 9e-6).unwrap();
        let jpd = src.jpd_analytic(&axis, &axis, 0.0).unwrap();
        let fit = fit_dg_2d(&jpd, &DgFitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.sigma_minus, 12.6e-6, max_relative = 5e-3);
        assert_relative_eq!(fit.sigma_plus, 140.2e-6, max_relative = 5e-3);
        assert_relative_eq!(fit.center_diff, 0.0, epsilon = 1e-8);
        assert_relative_eq!(fit.center_sum, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn dg_2d_ignores_contaminated_diagonal_when_excluded() {
        let src = DGSource::new(140.2e-6, 12.6e-6, 810e-9).unwrap();
        let axis = Axis::centered(128, 9e-6).unwrap();
        let mut jpd = src.jpd_analytic(&axis, &axis, 0.0).unwrap();
        let peak = jpd.max_value();
        for i in 0..128 {
            jpd.values[[i, i]] += 3.0 * peak; // singles artifact on x1 = x2
        }
        let poisoned = fit_dg_2d(&jpd, &DgFitOptions::default()).unwrap();
        let masked = fit_dg_2d(
            &jpd,
            &DgFitOptions { exclude_zero_diff: true, ..Default::default() },
        )
        .unwrap();
        assert_relative_eq!(masked.sigma_minus, 12.6e-6, max_relative = 5e-3);
        assert_relative_eq!(masked.sigma_plus, 140.2e-6, max_relative = 5e-3);
        let err_poisoned = (poisoned.sigma_minus - 12.6e-6).abs();
        let err_masked = (masked.sigma_minus - 12.6e-6).abs();
        assert!(
            err_masked < 0.2 * err_poisoned,
            "masking should beat fitting through the artifact: {err_masked} vs {err_poisoned}"
        );
    }

    #[test]
    fn dg_2d_tolerates_noise_and_offset() {
        let src = DGSource::new(140.2e-6, 12.6e-6, 810e-9).unwrap();
        let axis = Axis::centered(128, 9e-6).unwrap();
        let mut jpd = src.jpd_analytic(&axis, &axis, 0.0).unwrap();
        let peak = jpd.max_value();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for v in jpd.values.iter_mut() {
            *v += peak * (0.05 + 0.02 * (rng.random::<f64>() - 0.5));
        }
        let fit = fit_dg_2d(&jpd, &DgFitOptions::default()).unwrap();
        assert_relative_eq!(fit.sigma_minus, 12.6e-6, max_relative = 0.05);
        assert_relative_eq!(fit.sigma_plus, 140.2e-6, max_relative = 0.05);
        assert_relative_eq!(fit.offset, 0.05 * peak, max_relative = 0.2);
    }

    #[test]
    fn dg_2d_requires_matching_steps() {
        let a = Axis::centered(32, 1e-5).unwrap();
        let b = Axis::centered(32, 2e-5).unwrap();
        let jpd = Jpd2::new(a, b, Array2::from_elem((32, 32), 1.0)).unwrap();
        assert!(fit_dg_2d(&jpd, &DgFitOptions::default()).is_err());
    }
}
