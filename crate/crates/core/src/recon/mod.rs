//! Reconstruction of joint photon statistics from binary frame stacks.
//!
//! The central estimator turns per-pixel binary counts `c_i` into an
//! estimate of the pairwise joint distribution: with `m_i = <c_i>` the pixel
//! means, `eta` the detection efficiency and `mu` the mean pairs per frame,
//!
//! ```text
//! G_ij = ln(1 + (<c_i c_j> - <c_i><c_j>) / ((1 - m_i)(1 - m_j))) / (2 eta^2 mu)
//! ```
//!
//! The independent product `<c_i><c_j>` is estimated from adjacent-frame
//! products by default (exactly cancelling static structure) or from all
//! frame pairs. Diagonal entries measure only singles statistics — for
//! binary counts `<c_i c_i> = m_i`, so `G_ii -> -ln(1 - m_i) / (2 eta^2 mu)`
//! carries no pair information — and every downstream fitting protocol can
//! exclude the `x1 = x2` cells for that reason.
//!
//! All counting uses integer accumulators and a fixed tile order, so results
//! are bit-identical regardless of thread count.

mod fit;
pub use fit::{fit_dg_2d, fit_gaussian_1d, DgFitOptions, FitResultDg, Gaussian1dFit};

mod fedorov;
pub use fedorov::{fedorov_from_jpd, ConditionalWidth, FedorovEstimate, FedorovOptions};

use ndarray::Array2;
use rayon::prelude::*;

use crate::camera::FrameStack;
use crate::error::{ensure_positive, Error, Result};
use crate::grid::{Axis, Jpd2};

/// Rectangular pixel region of a frame, `width x height` pixels starting at
/// column `x0`, row `y0`. Region-linear pixel index is
/// `i = ry * width + rx` with `rx = ix - x0`, `ry = iy - y0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    /// First column.
    pub x0: usize,
    /// First row.
    pub y0: usize,
    /// Columns.
    pub width: usize,
    /// Rows.
    pub height: usize,
}

impl Roi {
    /// Build a region, requiring at least one pixel.
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Region("region needs at least one pixel per axis".into()));
        }
        Ok(Roi { x0, y0, width, height })
    }

    /// The whole frame of `stack`.
    pub fn full_frame(stack: &FrameStack) -> Self {
        Roi { x0: 0, y0: 0, width: stack.width, height: stack.height }
    }

    /// Pixels in the region.
    #[inline]
    pub fn npix(&self) -> usize {
        self.width * self.height
    }

    /// Check the region lies inside `stack`'s frames.
    pub fn validate_within(&self, stack: &FrameStack) -> Result<()> {
        if self.x0 + self.width > stack.width || self.y0 + self.height > stack.height {
            return Err(Error::Region(format!(
                "region {}x{} at ({}, {}) exceeds the {}x{} frame",
                self.width, self.height, self.x0, self.y0, stack.width, stack.height
            )));
        }
        Ok(())
    }

    /// Coordinate axis of the region's pixel-centre x positions in the
    /// camera frame (`x = 0` on the frame-centre boundary).
    pub fn x_axis(&self, stack: &FrameStack) -> Result<Axis> {
        let x0 = (self.x0 as f64 - 0.5 * stack.width as f64 + 0.5) * stack.pitch;
        Axis::new(self.width, stack.pitch, x0)
    }
}

/// Per-frame lists of lit region-linear pixel indices, ascending.
fn roi_lit_lists(stack: &FrameStack, roi: &Roi) -> Vec<Vec<u16>> {
    let full = *roi == Roi::full_frame(stack);
    (0..stack.n_frames)
        .into_par_iter()
        .map(|k| {
            let mut raw = Vec::new();
            stack.lit_indices(k, &mut raw);
            if full {
                raw.into_iter().map(|p| p as u16).collect()
            } else {
                let mut out = Vec::new();
                for p in raw {
                    let (iy, ix) = ((p as usize) / stack.width, (p as usize) % stack.width);
                    if ix >= roi.x0
                        && ix < roi.x0 + roi.width
                        && iy >= roi.y0
                        && iy < roi.y0 + roi.height
                    {
                        out.push(((iy - roi.y0) * roi.width + (ix - roi.x0)) as u16);
                    }
                }
                out
            }
        })
        .collect()
}

/// Integer pair counts for a band of region pixels (`tile`) against all
/// region pixels: same-frame products plus forward/backward adjacent-frame
/// products.
struct TileCounts {
    start: usize,
    rows: usize,
    /// `same[(i - start) * npix + j]`: frames where both i and j were lit.
    same: Vec<u32>,
    /// Adjacent products, i from frame k, j from frame k+1.
    fwd: Vec<u32>,
    /// Adjacent products, i from frame k+1, j from frame k.
    bwd: Vec<u32>,
}

fn count_tile(lists: &[Vec<u16>], start: usize, rows: usize, npix: usize) -> TileCounts {
    let end = start + rows;
    let mut same = vec![0u32; rows * npix];
    let mut fwd = vec![0u32; rows * npix];
    let mut bwd = vec![0u32; rows * npix];
    let in_tile = |list: &[u16]| -> (usize, usize) {
        (
            list.partition_point(|&p| (p as usize) < start),
            list.partition_point(|&p| (p as usize) < end),
        )
    };
    for k in 0..lists.len() {
        let cur = &lists[k];
        let (lo, hi) = in_tile(cur);
        for &a in &cur[lo..hi] {
            let row = (a as usize - start) * npix;
            for &b in cur.iter() {
                same[row + b as usize] += 1;
            }
        }
        if k + 1 < lists.len() {
            let next = &lists[k + 1];
            for &a in &cur[lo..hi] {
                let row = (a as usize - start) * npix;
                for &b in next.iter() {
                    fwd[row + b as usize] += 1;
                }
            }
            let (nlo, nhi) = in_tile(next);
            for &a in &next[nlo..nhi] {
                let row = (a as usize - start) * npix;
                for &b in cur.iter() {
                    bwd[row + b as usize] += 1;
                }
            }
        }
    }
    TileCounts { start, rows, same, fwd, bwd }
}

fn per_pixel_counts(lists: &[Vec<u16>], npix: usize) -> Vec<u32> {
    let mut counts = vec![0u32; npix];
    for list in lists {
        for &p in list {
            counts[p as usize] += 1;
        }
    }
    counts
}

/// Largest region (in pixels) for which the dense pairwise matrices are
/// materialised without an explicit override.
pub const DENSE_PIXEL_CAP: usize = 4096;

/// First- and second-order binary count statistics over a region.
#[derive(Debug, Clone)]
pub struct EnsembleAverages {
    /// Region the statistics cover.
    pub roi: Roi,
    /// Frames averaged.
    pub n_frames: usize,
    /// Per-pixel mean counts `<c_i>`, region-linear order.
    pub pixel_mean: Vec<f64>,
    /// Same-frame products `<c_i c_j>` (symmetric).
    pub same: Array2<f64>,
    /// Adjacent-frame products `<c_i^(k) c_j^(k+1)>`, kept asymmetric: rows
    /// index the earlier frame's pixel.
    pub shifted: Array2<f64>,
}

/// Compute first/second-order count averages over `roi`.
///
/// Needs at least 2 frames; the region is capped at [`DENSE_PIXEL_CAP`]
/// pixels because two dense `npix^2` matrices are materialised.
pub fn ensemble_averages(stack: &FrameStack, roi: &Roi) -> Result<EnsembleAverages> {
    roi.validate_within(stack)?;
    let npix = roi.npix();
    if npix > DENSE_PIXEL_CAP {
        return Err(Error::Region(format!(
            "dense averages over {npix} pixels exceed the {DENSE_PIXEL_CAP}-pixel cap; \
             use the reduced estimator or a smaller region"
        )));
    }
    let m = stack.n_frames;
    if m < 2 {
        return Err(Error::domain(format!("need at least 2 frames, got {m}")));
    }
    let lists = roi_lit_lists(stack, roi);
    let counts = per_pixel_counts(&lists, npix);
    let tiles = plan_tiles(npix, 64);
    let counted: Vec<TileCounts> = tiles
        .par_iter()
        .map(|&(start, rows)| count_tile(&lists, start, rows, npix))
        .collect();
    let mut same = Array2::zeros((npix, npix));
    let mut shifted = Array2::zeros((npix, npix));
    let inv_m = 1.0 / m as f64;
    let inv_m1 = 1.0 / (m as f64 - 1.0);
    for tile in counted {
        for r in 0..tile.rows {
            let i = tile.start + r;
            for j in 0..npix {
                same[[i, j]] = tile.same[r * npix + j] as f64 * inv_m;
                shifted[[i, j]] = tile.fwd[r * npix + j] as f64 * inv_m1;
            }
        }
    }
    Ok(EnsembleAverages {
        roi: *roi,
        n_frames: m,
        pixel_mean: counts.iter().map(|&c| c as f64 * inv_m).collect(),
        same,
        shifted,
    })
}

/// How the independent product `<c_i><c_j>` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndependentEstimate {
    /// Symmetrised adjacent-frame products (default): insensitive to slow
    /// drifts and exactly cancels static structure.
    AdjacentFrames,
    /// Unbiased all-frame-pairs product `(n_i n_j - n_ij) / (M (M-1))`.
    AllPairs,
}

/// Options for the pairwise estimator.
#[derive(Debug, Clone)]
pub struct GammaOptions {
    /// Independent-product estimator.
    pub estimate: IndependentEstimate,
    /// Logarithm arguments below this floor are clamped (and counted).
    pub clamp_floor: f64,
    /// Allow dense regions beyond [`DENSE_PIXEL_CAP`] pixels.
    pub allow_large_roi: bool,
    /// Pixel rows per work tile (determinism is independent of this).
    pub tile_rows: usize,
}

impl Default for GammaOptions {
    fn default() -> Self {
        GammaOptions {
            estimate: IndependentEstimate::AdjacentFrames,
            clamp_floor: 1e-9,
            allow_large_roi: false,
            tile_rows: 64,
        }
    }
}

/// Dense pairwise estimate over a region.
#[derive(Debug, Clone)]
pub struct Gamma4 {
    /// Region covered.
    pub roi: Roi,
    /// Source frame width (pixels), for coordinate reconstruction.
    pub frame_width: usize,
    /// Source frame height (pixels).
    pub frame_height: usize,
    /// Pixel pitch (m).
    pub pitch: f64,
    /// Detection efficiency used in the scaling.
    pub eta: f64,
    /// Mean pairs per frame used in the scaling.
    pub mu: f64,
    /// Frames used.
    pub n_frames: usize,
    /// `values[[i, j]]` over region-linear pixel indices; exactly symmetric.
    pub values: Array2<f64>,
    /// Number of log arguments clamped at the floor.
    pub clamped: usize,
}

fn plan_tiles(npix: usize, tile_rows: usize) -> Vec<(usize, usize)> {
    let step = tile_rows.max(1);
    (0..npix.div_ceil(step))
        .map(|t| {
            let start = t * step;
            (start, step.min(npix - start))
        })
        .collect()
}

struct GammaScale {
    inv_m: f64,
    inv_adjacent: f64,
    inv_pairs: f64,
    norm: f64,
    floor: f64,
    estimate: IndependentEstimate,
}

impl GammaScale {
    fn new(m: usize, eta: f64, mu: f64, opts: &GammaOptions) -> Self {
        GammaScale {
            inv_m: 1.0 / m as f64,
            inv_adjacent: 0.5 / (m as f64 - 1.0),
            inv_pairs: 1.0 / (m as f64 * (m as f64 - 1.0)),
            norm: 1.0 / (2.0 * eta * eta * mu),
            floor: opts.clamp_floor,
            estimate: opts.estimate,
        }
    }

    /// Estimator value for one pixel pair; `clamped` reports a floored log.
    #[inline]
    fn value(&self, same: u32, fwd: u32, bwd: u32, cnt_i: u32, cnt_j: u32) -> (f64, bool) {
        let same_mean = same as f64 * self.inv_m;
        let indep = match self.estimate {
            IndependentEstimate::AdjacentFrames => (fwd + bwd) as f64 * self.inv_adjacent,
            IndependentEstimate::AllPairs => {
                (cnt_i as u64 * cnt_j as u64 - same as u64) as f64 * self.inv_pairs
            }
        };
        let m_i = cnt_i as f64 * self.inv_m;
        let m_j = cnt_j as f64 * self.inv_m;
        let denom = (1.0 - m_i) * (1.0 - m_j);
        let arg = if denom > 0.0 { 1.0 + (same_mean - indep) / denom } else { self.floor };
        if arg < self.floor {
            (self.floor.ln() * self.norm, true)
        } else {
            (arg.ln() * self.norm, false)
        }
    }
}

fn gamma_preconditions(
    stack: &FrameStack,
    roi: &Roi,
    eta: f64,
    mu: f64,
    opts: &GammaOptions,
    dense: bool,
) -> Result<()> {
    roi.validate_within(stack)?;
    if stack.n_frames < 2 {
        return Err(Error::domain(format!(
            "the pairwise estimator needs at least 2 frames, got {}",
            stack.n_frames
        )));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!("eta must be in (0, 1], got {eta}")));
    }
    ensure_positive(mu, "mean pairs per frame")?;
    ensure_positive(opts.clamp_floor, "clamp floor")?;
    if dense && roi.npix() > DENSE_PIXEL_CAP && !opts.allow_large_roi {
        return Err(Error::Region(format!(
            "dense pairwise matrix over {} pixels exceeds the {DENSE_PIXEL_CAP}-pixel cap \
             ({} MB); use the reduced estimator or set allow_large_roi",
            roi.npix(),
            roi.npix() * roi.npix() * 8 / (1024 * 1024),
        )));
    }
    Ok(())
}

/// Dense pairwise estimate with default options.
pub fn gamma_4d(stack: &FrameStack, roi: &Roi, eta: f64, mu: f64) -> Result<Gamma4> {
    gamma_4d_with(stack, roi, eta, mu, &GammaOptions::default())
}

/// Dense pairwise estimate over `roi`.
///
/// The result is exactly symmetric (the adjacent-frame products are
/// symmetrised inside) and deterministic for fixed inputs regardless of
/// thread count.
pub fn gamma_4d_with(
    stack: &FrameStack,
    roi: &Roi,
    eta: f64,
    mu: f64,
    opts: &GammaOptions,
) -> Result<Gamma4> {
    gamma_preconditions(stack, roi, eta, mu, opts, true)?;
    let npix = roi.npix();
    let lists = roi_lit_lists(stack, roi);
    let counts = per_pixel_counts(&lists, npix);
    let scale = GammaScale::new(stack.n_frames, eta, mu, opts);
    let tiles = plan_tiles(npix, opts.tile_rows);
    let counted: Vec<TileCounts> = tiles
        .par_iter()
        .map(|&(start, rows)| count_tile(&lists, start, rows, npix))
        .collect();
    let mut values = Array2::zeros((npix, npix));
    let mut clamped = 0usize;
    for tile in &counted {
        for r in 0..tile.rows {
            let i = tile.start + r;
            for j in 0..npix {
                let (v, cl) = scale.value(
                    tile.same[r * npix + j],
                    tile.fwd[r * npix + j],
                    tile.bwd[r * npix + j],
                    counts[i],
                    counts[j],
                );
                values[[i, j]] = v;
                clamped += usize::from(cl);
            }
        }
    }
    Ok(Gamma4 {
        roi: *roi,
        frame_width: stack.width,
        frame_height: stack.height,
        pitch: stack.pitch,
        eta,
        mu,
        n_frames: stack.n_frames,
        values,
        clamped,
    })
}

/// Reduce a dense pairwise estimate over the y pixel pairs, leaving the
/// joint x-coordinate map: `rho[rx_i, rx_j] = sum over (ry_i, ry_j)`.
///
/// The output axes are the region's pixel-centre x coordinates; values keep
/// the estimator's per-pixel-pair units (no re-normalisation, negative cells
/// are preserved).
pub fn reduce_x(gamma: &Gamma4) -> Result<Jpd2> {
    let (w, h) = (gamma.roi.width, gamma.roi.height);
    let x0 = (gamma.roi.x0 as f64 - 0.5 * gamma.frame_width as f64 + 0.5) * gamma.pitch;
    let axis = Axis::new(w, gamma.pitch, x0)?;
    let mut values = Array2::zeros((w, w));
    for ryi in 0..h {
        for ryj in 0..h {
            for rxi in 0..w {
                let i = ryi * w + rxi;
                for rxj in 0..w {
                    values[[rxi, rxj]] += gamma.values[[i, ryj * w + rxj]];
                }
            }
        }
    }
    Jpd2::new(axis.clone(), axis, values)
}

/// Fused estimator: the y-reduced joint x map computed tile by tile without
/// materialising the dense pairwise matrix. Identical (up to floating-point
/// summation order) to [`gamma_4d`] followed by [`reduce_x`], but bounded by
/// the tile size in memory, so it handles full frames.
///
/// Returns the map plus the number of clamped log arguments.
pub fn gamma_reduced(
    stack: &FrameStack,
    roi: &Roi,
    eta: f64,
    mu: f64,
    opts: &GammaOptions,
) -> Result<(Jpd2, usize)> {
    gamma_preconditions(stack, roi, eta, mu, opts, false)?;
    let npix = roi.npix();
    let w = roi.width;
    let lists = roi_lit_lists(stack, roi);
    let counts = per_pixel_counts(&lists, npix);
    let scale = GammaScale::new(stack.n_frames, eta, mu, opts);
    let tiles = plan_tiles(npix, opts.tile_rows);
    // Each tile folds its rows into a private w x w map; tiles are then
    // combined in tile order, keeping the summation order fixed.
    let partials: Vec<(Array2<f64>, usize)> = tiles
        .par_iter()
        .map(|&(start, rows)| {
            let tile = count_tile(&lists, start, rows, npix);
            let mut acc = Array2::zeros((w, w));
            let mut clamped = 0usize;
            for r in 0..rows {
                let i = start + r;
                let rxi = i % w;
                for j in 0..npix {
                    let (v, cl) = scale.value(
                        tile.same[r * npix + j],
                        tile.fwd[r * npix + j],
                        tile.bwd[r * npix + j],
                        counts[i],
                        counts[j],
                    );
                    acc[[rxi, j % w]] += v;
                    clamped += usize::from(cl);
                }
            }
            (acc, clamped)
        })
        .collect();
    let mut values = Array2::zeros((w, w));
    let mut clamped = 0usize;
    for (acc, cl) in partials {
        values += &acc;
        clamped += cl;
    }
    let x0 = (roi.x0 as f64 - 0.5 * stack.width as f64 + 0.5) * stack.pitch;
    let axis = Axis::new(w, stack.pitch, x0)?;
    Ok((Jpd2::new(axis.clone(), axis, values)?, clamped))
}

/// Which pair coordinate a [`PairHistogram`] bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairCoordinate {
    /// Bin `x_i + x_j` (and `y_i + y_j`): the autoconvolution.
    Sum,
    /// Bin `x_i - x_j` (and `y_i - y_j`): the autocorrelation.
    Diff,
}

/// Histogram of ordered same-frame pixel pairs (i != j) over a pair
/// coordinate, with the accidental background estimated from adjacent-frame
/// pairs (also i != j, matching the same-frame exclusion).
#[derive(Debug, Clone)]
pub struct PairHistogram {
    /// Binned coordinate.
    pub kind: PairCoordinate,
    /// Pixel-unit value of x bin 0 (`0` for sums, `-(width - 1)` for diffs).
    pub x_bin0: isize,
    /// Pixel-unit value of y bin 0.
    pub y_bin0: isize,
    /// Same-frame pair rate per frame, `(y_bin, x_bin)` layout.
    pub same: Array2<f64>,
    /// Independent (adjacent-frame) pair rate per frame.
    pub background: Array2<f64>,
    /// `same - background`: the correlated excess.
    pub signal: Array2<f64>,
    /// Frames used.
    pub n_frames: usize,
}

impl PairHistogram {
    /// Signal profile along the x pair coordinate (summed over y bins),
    /// with the pixel-unit bin coordinates.
    pub fn profile_x(&self) -> (Vec<f64>, Vec<f64>) {
        let coords = (0..self.signal.dim().1)
            .map(|b| (self.x_bin0 + b as isize) as f64)
            .collect();
        let values = (0..self.signal.dim().1)
            .map(|b| self.signal.column(b).sum())
            .collect();
        (coords, values)
    }
}

fn pair_histogram(
    stack: &FrameStack,
    roi: &Roi,
    kind: PairCoordinate,
) -> Result<PairHistogram> {
    roi.validate_within(stack)?;
    if stack.n_frames < 2 {
        return Err(Error::domain(format!(
            "pair histograms need at least 2 frames, got {}",
            stack.n_frames
        )));
    }
    let (w, h) = (roi.width, roi.height);
    let (nx, ny) = (2 * w - 1, 2 * h - 1);
    let (x_bin0, y_bin0) = match kind {
        PairCoordinate::Sum => (0isize, 0isize),
        PairCoordinate::Diff => (-(w as isize - 1), -(h as isize - 1)),
    };
    let lists = roi_lit_lists(stack, roi);
    let bin = |a: u16, b: u16| -> (usize, usize) {
        let (ya, xa) = ((a as usize) / w, (a as usize) % w);
        let (yb, xb) = ((b as usize) / w, (b as usize) % w);
        match kind {
            PairCoordinate::Sum => (ya + yb, xa + xb),
            PairCoordinate::Diff => (
                (ya as isize - yb as isize - y_bin0) as usize,
                (xa as isize - xb as isize - x_bin0) as usize,
            ),
        }
    };
    let mut same = vec![0u64; ny * nx];
    let mut cross = vec![0u64; ny * nx];
    for k in 0..lists.len() {
        let cur = &lists[k];
        for &a in cur {
            for &b in cur {
                if a != b {
                    let (by, bx) = bin(a, b);
                    same[by * nx + bx] += 1;
                }
            }
        }
        if k + 1 < lists.len() {
            let next = &lists[k + 1];
            for &a in cur {
                for &b in next {
                    if a != b {
                        let (by, bx) = bin(a, b);
                        cross[by * nx + bx] += 1;
                    }
                }
            }
            // The reversed direction mirrors every pair, keeping the
            // background exactly as symmetric as the same-frame counts.
            for &a in next {
                for &b in cur {
                    if a != b {
                        let (by, bx) = bin(a, b);
                        cross[by * nx + bx] += 1;
                    }
                }
            }
        }
    }
    let m = stack.n_frames as f64;
    let same = Array2::from_shape_fn((ny, nx), |(y, x)| same[y * nx + x] as f64 / m);
    let background =
        Array2::from_shape_fn((ny, nx), |(y, x)| cross[y * nx + x] as f64 / (2.0 * (m - 1.0)));
    let signal = &same - &background;
    Ok(PairHistogram { kind, x_bin0, y_bin0, same, background, signal, n_frames: stack.n_frames })
}

/// Autoconvolution of frames over `roi`: histogram of `x_i + x_j` (ordered
/// same-frame pairs, i != j) minus the adjacent-frame accidental background.
/// Correlated pairs concentrate around twice the beam centre.
pub fn autoconvolve_frames(stack: &FrameStack, roi: &Roi) -> Result<PairHistogram> {
    pair_histogram(stack, roi, PairCoordinate::Sum)
}

/// Autocorrelation of frames over `roi`: histogram of `x_i - x_j`, same
/// conventions as [`autoconvolve_frames`]. Position-correlated pairs
/// concentrate around zero separation.
pub fn autocorrelate_frames(stack: &FrameStack, roi: &Roi) -> Result<PairHistogram> {
    pair_histogram(stack, roi, PairCoordinate::Diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{render_frames, CameraModel, PairSampler};
    use crate::dg::DGSource;
    use approx::assert_relative_eq;

    /// 2-pixel stack with hand-checkable statistics: frames light
    /// {0,1}, {0}, {0,1}, {}.
    fn tiny_stack() -> FrameStack {
        let mut stack = FrameStack::new_empty(2, 1, 1e-5, 4).unwrap();
        stack.set(0, 0, 0);
        stack.set(0, 0, 1);
        stack.set(1, 0, 0);
        stack.set(2, 0, 0);
        stack.set(2, 0, 1);
        stack
    }

    #[test]
    fn ensemble_averages_match_hand_computation() {
        let stack = tiny_stack();
        let roi = Roi::full_frame(&stack);
        let avg = ensemble_averages(&stack, &roi).unwrap();
        assert_eq!(avg.n_frames, 4);
        assert_relative_eq!(avg.pixel_mean[0], 0.75);
        assert_relative_eq!(avg.pixel_mean[1], 0.5);
        assert_relative_eq!(avg.same[[0, 1]], 0.5);
        assert_relative_eq!(avg.same[[0, 0]], 0.75);
        // Adjacent products stay direction-resolved here: pixel 0 then
        // pixel 1 one frame later fires in transitions 1->2 only.
        assert_relative_eq!(avg.shifted[[0, 1]], 1.0 / 3.0);
        assert_relative_eq!(avg.shifted[[1, 0]], 1.0 / 3.0);
        // A genuinely asymmetric case: pixel 0 fires, then pixel 1, then
        // nothing — the 0-then-1 order shows up in one direction only.
        let mut alt = FrameStack::new_empty(2, 1, 1e-5, 3).unwrap();
        alt.set(0, 0, 0);
        alt.set(1, 0, 1);
        let avg = ensemble_averages(&alt, &Roi::full_frame(&alt)).unwrap();
        assert_relative_eq!(avg.shifted[[0, 1]], 0.5); // transition 0 of 2
        assert_relative_eq!(avg.shifted[[1, 0]], 0.0); // never 1-then-0
    }

    #[test]
    fn gamma_matches_hand_value() {
        // From the tiny stack: <c0 c1> = 1/2, symmetrised adjacent product
        // 1/3, pixel means 3/4 and 1/2, so the log argument is
        // 1 + (1/6) / (1/8) = 7/3; with eta = 0.5, mu = 2 the prefactor is 1.
        let stack = tiny_stack();
        let roi = Roi::full_frame(&stack);
        let gamma = gamma_4d(&stack, &roi, 0.5, 2.0).unwrap();
        assert_relative_eq!(gamma.values[[0, 1]], (7.0f64 / 3.0).ln(), max_relative = 1e-12);
        assert_relative_eq!(gamma.values[[1, 0]], (7.0f64 / 3.0).ln(), max_relative = 1e-12);
        assert_eq!(gamma.clamped, 0);
    }

    #[test]
    fn gamma_is_exactly_symmetric() {
        let src = DGSource::new(140.2e-6, 12.6e-6, 810e-9).unwrap();
        let sampler = PairSampler::dg_at_plane(&src, 0.0);
        let mut cam = CameraModel::new(16, 16, 16e-6);
        cam.eta = 0.6;
        cam.mu = 6.0;
        cam.bg_rate = 2.0;
        cam.seed = 31;
        let (stack, _) = render_frames(&sampler, &cam, 800).unwrap();
        let gamma = gamma_4d(&stack, &Roi::full_frame(&stack), 0.6, 6.0).unwrap();
        let n = gamma.values.dim().0;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = gamma.values[[i, j]];
                let b = gamma.values[[j, i]];
                assert!(a == b, "asymmetry at ({i},{j}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn clamping_counts_anticorrelated_pairs() {
        // Pixels alternate: strongly anti-correlated counts drive the log
        // argument negative, which must clamp (and be counted), not panic.
        let mut stack = FrameStack::new_empty(2, 1, 1e-5, 4).unwrap();
        for k in 0..4 {
            if k % 2 == 0 {
                stack.set(k, 0, 0);
            } else {
                stack.set(k, 0, 1);
            }
        }
        let gamma = gamma_4d(&stack, &Roi::full_frame(&stack), 0.5, 2.0).unwrap();
        assert_eq!(gamma.clamped, 2);
        assert_relative_eq!(gamma.values[[0, 1]], 1e-9f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn diagonal_measures_only_singles() {
        // With the all-pairs independent estimate and binary counts, the
        // diagonal converges on -ln(1 - m_i) / (2 eta^2 mu): pure singles.
        let sampler = PairSampler::Uncorrelated { std: 60e-6 };
        let mut cam = CameraModel::new(8, 8, 16e-6);
        cam.mu = 4.0;
        cam.seed = 7;
        let (stack, _) = render_frames(&sampler, &cam, 20_000).unwrap();
        let opts = GammaOptions { estimate: IndependentEstimate::AllPairs, ..Default::default() };
        let gamma = gamma_4d_with(&stack, &Roi::full_frame(&stack), 1.0, 4.0, &opts).unwrap();
        let avg = ensemble_averages(&stack, &Roi::full_frame(&stack)).unwrap();
        let norm = 1.0 / (2.0 * 4.0);
        for i in [0usize, 27, 36, 63] {
            let m = avg.pixel_mean[i];
            if m < 1e-3 {
                continue;
            }
            let ideal = -(1.0 - m).ln() * norm;
            assert_relative_eq!(gamma.values[[i, i]], ideal, max_relative = 0.05);
        }
    }

    #[test]
    fn reduced_estimator_matches_dense_reduction() {
        let src = DGSource::new(140.2e-6, 12.6e-6, 810e-9).unwrap();
        let sampler = PairSampler::dg_at_plane(&src, 0.0);
        let mut cam = CameraModel::new(16, 12, 16e-6);
        cam.eta = 0.7;
        cam.mu = 5.0;
        cam.bg_rate = 1.0;
        cam.seed = 13;
        let (stack, _) = render_frames(&sampler, &cam, 1500).unwrap();
        let roi = Roi::new(2, 1, 12, 10).unwrap();
        let gamma = gamma_4d(&stack, &roi, 0.7, 5.0).unwrap();
        let dense = reduce_x(&gamma).unwrap();
        let (fused, clamped) =
            gamma_reduced(&stack, &roi, 0.7, 5.0, &GammaOptions::default()).unwrap();
        assert_eq!(clamped, gamma.clamped);
        assert!(fused.axis1.same_geometry(&dense.axis1));
        let scale = dense.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in fused.values.iter().zip(dense.values.iter()) {
            assert!((a - b).abs() <= 1e-12 * scale, "fused {a} vs dense {b}");
        }
    }

    #[test]
    fn reduced_estimator_is_thread_count_invariant() {
        let src = DGSource::new(140.2e-6, 12.6e-6, 810e-9).unwrap();
        let sampler = PairSampler::dg_at_plane(&src, 0.0);
        let mut cam = CameraModel::new(16, 16, 16e-6);
        cam.eta = 0.6;
        cam.mu = 4.0;
        cam.seed = 3;
        let (stack, _) = render_frames(&sampler, &cam, 600).unwrap();
        let roi = Roi::full_frame(&stack);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| gamma_reduced(&stack, &roi, 0.6, 4.0, &GammaOptions::default()))
                .unwrap()
        };
        let (a, ca) = run(1);
        let (b, cb) = run(4);
        assert_eq!(ca, cb);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn roi_axis_coordinates() {
        let stack = FrameStack::new_empty(8, 8, 2.0, 1).unwrap();
        let roi = Roi::new(2, 0, 4, 8).unwrap();
        let axis = roi.x_axis(&stack).unwrap();
        // Column 2 of an 8-wide frame with pitch 2: centre at (2-4+0.5)*2 = -3.
        assert_relative_eq!(axis.x0, -3.0);
        assert_eq!(axis.n, 4);
        assert_relative_eq!(axis.dx, 2.0);
    }

    #[test]
    fn pair_histograms_bin_where_expected() {
        // One frame lights x = 3 and x = 5 in the single row; the second
        // frame is dark.
        let mut stack = FrameStack::new_empty(8, 1, 1e-5, 2).unwrap();
        stack.set(0, 0, 3);
        stack.set(0, 0, 5);
        let roi = Roi::full_frame(&stack);
        let conv = autoconvolve_frames(&stack, &roi).unwrap();
        let (xs, prof) = conv.profile_x();
        for (x, v) in xs.iter().zip(prof.iter()) {
            if *x == 8.0 {
                assert_relative_eq!(*v, 1.0); // two ordered pairs / 2 frames
            } else {
                assert_relative_eq!(*v, 0.0);
            }
        }
        let corr = autocorrelate_frames(&stack, &roi).unwrap();
        let (xs, prof) = corr.profile_x();
        for (x, v) in xs.iter().zip(prof.iter()) {
            if *x == 2.0 || *x == -2.0 {
                assert_relative_eq!(*v, 0.5); // one ordered pair each / 2 frames
            } else {
                assert_relative_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn pair_histogram_background_subtracts_uncorrelated_light() {
        // Background-only frames: Poisson photon numbers, independent
        // positions. Same-frame and adjacent-frame pair rates then agree in
        // expectation and the subtraction leaves only counting noise.
        let mut cam = CameraModel::new(16, 16, 16e-6);
        cam.mu = 0.0;
        cam.bg_rate = 12.0;
        cam.seed = 17;
        let dark_sampler = PairSampler::Uncorrelated { std: 50e-6 };
        let (stack, _) = render_frames(&dark_sampler, &cam, 8000).unwrap();
        let conv = autoconvolve_frames(&stack, &Roi::full_frame(&stack)).unwrap();
        let raw: f64 = conv.same.iter().sum();
        let residual: f64 = conv.signal.iter().map(|v| v.abs()).sum();
        assert!(
            residual < 0.06 * raw,
            "background-only stack left residual {residual} of raw {raw}"
        );
        // The same photon rate as position-correlated pairs leaves a strong
        // excess concentrated at small pair separations (the difference
        // width here is under a pixel).
        let src = DGSource::new(140.2e-6, 12.6e-6, 810e-9).unwrap();
        cam.mu = 6.0;
        cam.bg_rate = 0.0;
        let (stack2, _) =
            render_frames(&PairSampler::dg_at_plane(&src, 0.0), &cam, 8000).unwrap();
        let central = |hist: &PairHistogram| -> f64 {
            let (ny, nx) = hist.signal.dim();
            let mut acc = 0.0;
            for y in 0..ny {
                for x in 0..nx {
                    let dy = (y as isize + hist.y_bin0).abs();
                    let dx = (x as isize + hist.x_bin0).abs();
                    if dx <= 2 && dy <= 2 {
                        acc += hist.signal[[y, x]];
                    }
                }
            }
            acc
        };
        let corr_window = central(&autocorrelate_frames(&stack2, &Roi::full_frame(&stack2)).unwrap());
        let noise_window = central(&autocorrelate_frames(&stack, &Roi::full_frame(&stack)).unwrap());
        assert!(
            corr_window > 1.0 && corr_window > 10.0 * noise_window.abs(),
            "central excess {corr_window} should dwarf the uncorrelated window {noise_window}"
        );
    }

    #[test]
    fn estimator_noise_scales_inversely_with_sqrt_frames() {
        let src = DGSource::new(140.2e-6, 12.6e-6, 810e-9).unwrap();
        let sampler = PairSampler::dg_at_plane(&src, 0.0);
        let mut cam = CameraModel::new(24, 24, 16e-6);
        cam.eta = 0.6;
        cam.mu = 6.0;
        cam.bg_rate = 1.0;
        cam.seed = 23;
        let noise_rms = |frames: usize| -> f64 {
            let (stack, _) = render_frames(&sampler, &cam, frames).unwrap();
            let (map, _) =
                gamma_reduced(&stack, &Roi::full_frame(&stack), 0.6, 6.0, &GammaOptions::default())
                    .unwrap();
            // Far off-diagonal cells carry no pair signal, only noise.
            let mut acc = 0.0;
            let mut n = 0usize;
            for i in 0..map.axis1.n {
                for j in 0..map.axis2.n {
                    if i.abs_diff(j) > 10 {
                        acc += map.values[[i, j]] * map.values[[i, j]];
                        n += 1;
                    }
                }
            }
            (acc / n as f64).sqrt()
        };
        let r1 = noise_rms(5_000);
        let r2 = noise_rms(20_000);
        let ratio = r1 / r2;
        assert!(
            (ratio - 2.0).abs() < 0.4,
            "4x frames should halve the noise; got ratio {ratio}"
        );
    }

    #[test]
    fn region_validation() {
        let stack = FrameStack::new_empty(8, 8, 1e-5, 2).unwrap();
        assert!(Roi::new(0, 0, 0, 4).is_err());
        let roi = Roi::new(4, 4, 8, 8).unwrap();
        assert!(roi.validate_within(&stack).is_err());
        let big = FrameStack::new_empty(96, 96, 1e-5, 2).unwrap();
        let full = Roi::full_frame(&big);
        match gamma_4d(&big, &full, 1.0, 1.0) {
            Err(Error::Region(_)) => {}
            other => panic!("expected dense-cap Region error, got {other:?}"),
        }
        // The fused reduction handles the same region.
        assert!(gamma_reduced(&big, &full, 1.0, 1.0, &GammaOptions::default()).is_ok());
    }
}
