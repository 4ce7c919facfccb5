//! Binary single-photon camera simulation.
//!
//! A camera exposes an array of `width x height` square pixels of size
//! `pitch`. Each frame is a binary image: a pixel is lit when at least one
//! photon (or background/bloom event) landed on it during the exposure.
//! Frames are statistically independent; all randomness for frame `k` comes
//! from a dedicated `ChaCha8` stream seeded with `seed ^ k`, consumed in a
//! fixed, documented order, so a stack renders byte-identically regardless
//! of thread count or render batching.
//!
//! Per frame the events are, in order:
//!
//! 1. draw the photon-pair count from `Poisson(mu)`;
//! 2. per pair: draw the transverse x-pair, then the y-pair, from the
//!    [`PairSampler`]; then draw the two detection flags (probability `eta`
//!    each) and bin the surviving photons onto pixels;
//! 3. draw the background count from `Poisson(bg_rate)` and light that many
//!    uniformly random pixels (anywhere in the frame);
//! 4. if blooming is enabled, walk the lit pixels in raster order and, with
//!    probability `bloom_prob` each, light one extra pixel in the same row
//!    at a non-zero integer offset `round(N(0, bloom_sigma))` (spill pixels
//!    do not themselves re-bloom).
//!
//! Positions map to pixels as `ix = floor(x / pitch + width / 2)`, so the
//! optical axis `x = 0` falls on the boundary `width/2` and out-of-frame
//! photons are dropped.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::dg::DGSource;
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::grid::{Axis, Jpd2};
use crate::optics::LensFoldMap;

/// Per-pixel mean occupancy above which the binary-count statistics start to
/// saturate and estimator linearity degrades; renders exceeding it set
/// [`RenderStats::occupancy_warning`].
pub const OCCUPANCY_WARN_THRESHOLD: f64 = 0.1;

/// Detector and exposure model.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    /// Pixels per row.
    pub width: usize,
    /// Pixel rows.
    pub height: usize,
    /// Pixel size (m).
    pub pitch: f64,
    /// Per-photon detection probability, in (0, 1].
    pub eta: f64,
    /// Mean photon pairs per frame (>= 0).
    pub mu: f64,
    /// Probability that a lit pixel spills into one neighbour, in [0, 1).
    pub bloom_prob: f64,
    /// Standard deviation of the spill offset in pixels (> 0 when blooming).
    pub bloom_sigma: f64,
    /// Mean background counts per frame (>= 0), uniform over the frame.
    pub bg_rate: f64,
    /// Base RNG seed; frame `k` uses the stream `seed ^ k`.
    pub seed: u64,
}

impl CameraModel {
    /// A camera with unit efficiency, one pair per frame, no background and
    /// no blooming; adjust fields as needed.
    pub fn new(width: usize, height: usize, pitch: f64) -> Self {
        CameraModel {
            width,
            height,
            pitch,
            eta: 1.0,
            mu: 1.0,
            bloom_prob: 0.0,
            bloom_sigma: 1.0,
            bg_rate: 0.0,
            seed: 0,
        }
    }

    /// Validate all parameters.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain("camera needs at least one pixel per axis"));
        }
        ensure_positive(self.pitch, "pixel pitch")?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::domain(format!(
                "detection efficiency must be in (0, 1], got {}",
                self.eta
            )));
        }
        ensure_non_negative(self.mu, "mean pairs per frame")?;
        if !(0.0..1.0).contains(&self.bloom_prob) {
            return Err(Error::domain(format!(
                "bloom probability must be in [0, 1), got {}",
                self.bloom_prob
            )));
        }
        if self.bloom_prob > 0.0 {
            ensure_positive(self.bloom_sigma, "bloom sigma")?;
        }
        ensure_non_negative(self.bg_rate, "background rate")?;
        Ok(())
    }

    /// Pixel centre coordinate of column `ix` (m), with `x = 0` on the
    /// boundary at `width/2`.
    pub fn pixel_center_x(&self, ix: usize) -> f64 {
        (ix as f64 - 0.5 * self.width as f64 + 0.5) * self.pitch
    }
}

/// Map a position to its pixel column/row: `floor(x / pitch + n / 2)`;
/// `None` when the photon misses the array.
pub fn pixel_index(x: f64, pitch: f64, n: usize) -> Option<usize> {
    let raw = (x / pitch + 0.5 * n as f64).floor();
    if raw >= 0.0 && raw < n as f64 {
        Some(raw as usize)
    } else {
        None
    }
}

/// Transverse pair-position law used by [`render_frames`]; one draw yields
/// the coordinate pair `(x1, x2)` of both photons along one axis.
#[derive(Debug, Clone)]
pub enum PairSampler {
    /// Gaussian sum/difference law: `x1 - x2 ~ N(0, diff_std)`,
    /// `x1 + x2 ~ N(0, sum_std)` independently.
    Gaussian {
        /// Standard deviation of `x1 - x2` (m).
        diff_std: f64,
        /// Standard deviation of `x1 + x2` (m).
        sum_std: f64,
    },
    /// Two statistically independent photons, `x1, x2 ~ N(0, std)`; use for
    /// classical (uncorrelated) sources.
    Uncorrelated {
        /// Per-photon standard deviation (m).
        std: f64,
    },
    /// Pairs drawn from a sampled joint density by cell-CDF inversion with
    /// uniform jitter inside the chosen cell.
    Grid {
        /// Coordinate-1 axis of the sampled density.
        axis1: Axis,
        /// Coordinate-2 axis of the sampled density.
        axis2: Axis,
        /// Cumulative cell masses, row-major, normalised to end at 1.
        cdf: Vec<f64>,
    },
}

impl PairSampler {
    /// Pair law of a source propagated a distance `z` from its waist.
    pub fn dg_at_plane(src: &DGSource, z: f64) -> Self {
        let w = src.widths_at(z);
        PairSampler::Gaussian { diff_std: w.sigma_minus, sum_std: w.sigma_plus }
    }

    /// Pair law in the focal plane of a lens with focal length `f` (the far
    /// field): widths invert, `std(x1 + x2) = lambda f / (2 pi sigma_plus)`
    /// and `std(x1 - x2) = lambda f / (2 pi sigma_minus)`.
    pub fn dg_far_field(src: &DGSource, f: f64) -> Result<Self> {
        ensure_positive(f, "focal length")?;
        let scale = src.lambda * f / (2.0 * std::f64::consts::PI);
        Ok(PairSampler::Gaussian {
            diff_std: scale / src.sigma_minus,
            sum_std: scale / src.sigma_plus,
        })
    }

    /// Pair law on the detection plane of a lens fold: source-plane widths
    /// at the equivalent distance, rescaled by the fold magnification.
    pub fn dg_folded(src: &DGSource, fold: &LensFoldMap) -> Self {
        let w = src.widths_at(fold.z);
        let m = fold.scale.abs();
        PairSampler::Gaussian { diff_std: w.sigma_minus / m, sum_std: w.sigma_plus / m }
    }

    /// Pair law sampled from a non-negative joint density.
    pub fn from_jpd(jpd: &Jpd2) -> Result<Self> {
        if jpd.negative_count() > 0 {
            return Err(Error::domain(
                "density has negative cells; clip them before building a sampler",
            ));
        }
        let mut cdf = Vec::with_capacity(jpd.values.len());
        let mut acc = 0.0f64;
        for &v in jpd.values.iter() {
            acc += v;
            cdf.push(acc);
        }
        if !(acc.is_finite() && acc > 0.0) {
            return Err(Error::degenerate(format!(
                "cannot sample from a density with total cell mass {acc}"
            )));
        }
        let inv = 1.0 / acc;
        for c in cdf.iter_mut() {
            *c *= inv;
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Ok(PairSampler::Grid { axis1: jpd.axis1.clone(), axis2: jpd.axis2.clone(), cdf })
    }

    /// Draw one coordinate pair.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            PairSampler::Gaussian { diff_std, sum_std } => {
                let u = draw_normal(rng, *diff_std);
                let v = draw_normal(rng, *sum_std);
                (0.5 * (v + u), 0.5 * (v - u))
            }
            PairSampler::Uncorrelated { std } => {
                let x1 = draw_normal(rng, *std);
                let x2 = draw_normal(rng, *std);
                (x1, x2)
            }
            PairSampler::Grid { axis1, axis2, cdf } => {
                let u: f64 = rng.random();
                let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                let (i, j) = (idx / axis2.n, idx % axis2.n);
                let j1: f64 = rng.random::<f64>() - 0.5;
                let j2: f64 = rng.random::<f64>() - 0.5;
                (axis1.coord(i) + j1 * axis1.dx, axis2.coord(j) + j2 * axis2.dx)
            }
        }
    }

    /// Draw `n` pairs from the stream `seed`.
    pub fn sample_n(&self, n: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

fn draw_normal<R: Rng>(rng: &mut R, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("validated std").sample(rng)
    } else {
        0.0
    }
}

fn draw_poisson<R: Rng>(rng: &mut R, rate: f64) -> u64 {
    if rate > 0.0 {
        Poisson::new(rate).expect("validated rate").sample(rng) as u64
    } else {
        0
    }
}

/// A stack of binary frames, bit-packed in memory (LSB-first within each
/// byte, pixels in raster order `p = iy * width + ix`).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    /// Pixels per row.
    pub width: usize,
    /// Pixel rows.
    pub height: usize,
    /// Pixel size (m).
    pub pitch: f64,
    /// Number of frames.
    pub n_frames: usize,
    bits: Vec<u8>,
}

impl FrameStack {
    /// Allocate an all-dark stack.
    pub fn new_empty(width: usize, height: usize, pitch: f64, n_frames: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("frame needs at least one pixel per axis"));
        }
        ensure_positive(pitch, "pixel pitch")?;
        let stride = (width * height + 7) / 8;
        Ok(FrameStack {
            width,
            height,
            pitch,
            n_frames,
            bits: vec![0u8; stride * n_frames],
        })
    }

    /// Bytes per frame in the packed representation.
    #[inline]
    pub fn stride_bytes(&self) -> usize {
        (self.width * self.height + 7) / 8
    }

    #[inline]
    fn check_frame(&self, frame: usize) {
        assert!(frame < self.n_frames, "frame {frame} out of {}", self.n_frames);
    }

    /// Read pixel `(iy, ix)` of `frame`.
    #[inline]
    pub fn get(&self, frame: usize, iy: usize, ix: usize) -> bool {
        self.check_frame(frame);
        let p = iy * self.width + ix;
        let byte = self.bits[frame * self.stride_bytes() + p / 8];
        byte & (1u8 << (p % 8)) != 0
    }

    /// Light pixel `(iy, ix)` of `frame`.
    #[inline]
    pub fn set(&mut self, frame: usize, iy: usize, ix: usize) {
        self.check_frame(frame);
        let stride = self.stride_bytes();
        let p = iy * self.width + ix;
        self.bits[frame * stride + p / 8] |= 1u8 << (p % 8);
    }

    /// Append the linear indices (`iy * width + ix`) of all lit pixels of
    /// `frame` to `out`, ascending.
    pub fn lit_indices(&self, frame: usize, out: &mut Vec<u32>) {
        self.check_frame(frame);
        let stride = self.stride_bytes();
        let bytes = &self.bits[frame * stride..(frame + 1) * stride];
        let npix = self.width * self.height;
        for (b, &byte) in bytes.iter().enumerate() {
            if byte == 0 {
                continue;
            }
            let mut rest = byte;
            while rest != 0 {
                let bit = rest.trailing_zeros() as usize;
                let p = b * 8 + bit;
                if p < npix {
                    out.push(p as u32);
                }
                rest &= rest - 1;
            }
        }
    }

    /// Number of lit pixels in `frame`.
    pub fn lit_count(&self, frame: usize) -> usize {
        self.check_frame(frame);
        let stride = self.stride_bytes();
        self.bits[frame * stride..(frame + 1) * stride]
            .iter()
            .map(|b| b.count_ones() as usize)
            .sum()
    }

    /// Copy `frame` into a `(height, width)` image of 0/1 bytes.
    pub fn frame_image(&self, frame: usize) -> Array2<u8> {
        Array2::from_shape_fn((self.height, self.width), |(iy, ix)| {
            u8::from(self.get(frame, iy, ix))
        })
    }

    /// Overwrite `frame` from a `(height, width)` image of 0/1 bytes.
    pub fn set_frame_image(&mut self, frame: usize, image: &Array2<u8>) -> Result<()> {
        if image.dim() != (self.height, self.width) {
            return Err(Error::domain(format!(
                "image shape {:?} does not match frame ({}, {})",
                image.dim(),
                self.height,
                self.width
            )));
        }
        let stride = self.stride_bytes();
        self.check_frame(frame);
        let bytes = &mut self.bits[frame * stride..(frame + 1) * stride];
        bytes.fill(0);
        for ((iy, ix), &v) in image.indexed_iter() {
            if v != 0 {
                let p = iy * self.width + ix;
                bytes[p / 8] |= 1u8 << (p % 8);
            }
        }
        Ok(())
    }

    /// Mean occupancy of every pixel across the stack (fraction of frames in
    /// which it was lit), raster order.
    pub fn pixel_occupancy(&self) -> Vec<f64> {
        let npix = self.width * self.height;
        if self.n_frames == 0 {
            return vec![0.0; npix];
        }
        let stride = self.stride_bytes();
        let counts = self
            .bits
            .par_chunks(stride)
            .fold(
                || vec![0u32; npix],
                |mut acc, frame_bytes| {
                    for (b, &byte) in frame_bytes.iter().enumerate() {
                        if byte == 0 {
                            continue;
                        }
                        let mut rest = byte;
                        while rest != 0 {
                            let bit = rest.trailing_zeros() as usize;
                            let p = b * 8 + bit;
                            if p < npix {
                                acc[p] += 1;
                            }
                            rest &= rest - 1;
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u32; npix],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b.iter()) {
                        *x += *y;
                    }
                    a
                },
            );
        let inv = 1.0 / self.n_frames as f64;
        counts.into_iter().map(|c| c as f64 * inv).collect()
    }
}

/// Counters and occupancy diagnostics from a render.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderStats {
    /// Frames rendered.
    pub frames: usize,
    /// Photon pairs drawn (before detection thinning).
    pub pairs_drawn: u64,
    /// Pair photons that were detected and landed inside the frame.
    pub photons_binned: u64,
    /// Background events binned.
    pub background_binned: u64,
    /// Bloom spill events that landed inside the frame.
    pub bloom_spills: u64,
    /// Largest per-pixel mean occupancy.
    pub max_pixel_occupancy: f64,
    /// Mean per-pixel occupancy.
    pub mean_pixel_occupancy: f64,
    /// Set when `max_pixel_occupancy` exceeds [`OCCUPANCY_WARN_THRESHOLD`].
    pub occupancy_warning: bool,
}

struct FrameCounters {
    pairs: u64,
    photons: u64,
    background: u64,
    blooms: u64,
}

/// Render `n_frames` statistically independent binary frames.
///
/// Deterministic in all inputs: the result is byte-identical for a given
/// `(sampler, camera, n_frames)` regardless of thread count.
pub fn render_frames(
    sampler: &PairSampler,
    camera: &CameraModel,
    n_frames: usize,
) -> Result<(FrameStack, RenderStats)> {
    camera.validate()?;
    let mut stack = FrameStack::new_empty(camera.width, camera.height, camera.pitch, n_frames)?;
    let stride = stack.stride_bytes();
    let width = camera.width;
    let height = camera.height;

    let totals = stack
        .bits
        .par_chunks_mut(stride)
        .enumerate()
        .map(|(k, frame_bits)| render_one_frame(sampler, camera, k as u64, frame_bits, width, height))
        .reduce(
            || FrameCounters { pairs: 0, photons: 0, background: 0, blooms: 0 },
            |a, b| FrameCounters {
                pairs: a.pairs + b.pairs,
                photons: a.photons + b.photons,
                background: a.background + b.background,
                blooms: a.blooms + b.blooms,
            },
        );

    let occupancy = stack.pixel_occupancy();
    let max_occ = occupancy.iter().copied().fold(0.0, f64::max);
    let mean_occ = occupancy.iter().sum::<f64>() / occupancy.len() as f64;
    let stats = RenderStats {
        frames: n_frames,
        pairs_drawn: totals.pairs,
        photons_binned: totals.photons,
        background_binned: totals.background,
        bloom_spills: totals.blooms,
        max_pixel_occupancy: max_occ,
        mean_pixel_occupancy: mean_occ,
        occupancy_warning: max_occ > OCCUPANCY_WARN_THRESHOLD,
    };
    Ok((stack, stats))
}

fn render_one_frame(
    sampler: &PairSampler,
    camera: &CameraModel,
    frame_index: u64,
    frame_bits: &mut [u8],
    width: usize,
    height: usize,
) -> FrameCounters {
    let mut rng = ChaCha8Rng::seed_from_u64(camera.seed ^ frame_index);
    let mut counters = FrameCounters { pairs: 0, photons: 0, background: 0, blooms: 0 };
    let set = |bits: &mut [u8], iy: usize, ix: usize| {
        let p = iy * width + ix;
        bits[p / 8] |= 1u8 << (p % 8);
    };

    // 1-2. Photon pairs.
    let pairs = draw_poisson(&mut rng, camera.mu);
    counters.pairs = pairs;
    for _ in 0..pairs {
        let (x1, x2) = sampler.sample(&mut rng);
        let (y1, y2) = sampler.sample(&mut rng);
        let d1 = rng.random_bool(camera.eta);
        let d2 = rng.random_bool(camera.eta);
        if d1 {
            if let (Some(ix), Some(iy)) = (
                pixel_index(x1, camera.pitch, width),
                pixel_index(y1, camera.pitch, height),
            ) {
                set(frame_bits, iy, ix);
                counters.photons += 1;
            }
        }
        if d2 {
            if let (Some(ix), Some(iy)) = (
                pixel_index(x2, camera.pitch, width),
                pixel_index(y2, camera.pitch, height),
            ) {
                set(frame_bits, iy, ix);
                counters.photons += 1;
            }
        }
    }

    // 3. Background.
    let bg = draw_poisson(&mut rng, camera.bg_rate);
    for _ in 0..bg {
        let ix = rng.random_range(0..width);
        let iy = rng.random_range(0..height);
        set(frame_bits, iy, ix);
        counters.background += 1;
    }

    // 4. Blooming.
    if camera.bloom_prob > 0.0 {
        counters.blooms = bloom_bits(
            frame_bits,
            width,
            height,
            camera.bloom_prob,
            camera.bloom_sigma,
            &mut rng,
        );
    }
    counters
}

/// One generation of blooming over packed frame bits; returns the number of
/// spill pixels that landed in-frame.
fn bloom_bits<R: Rng>(
    frame_bits: &mut [u8],
    width: usize,
    height: usize,
    prob: f64,
    sigma: f64,
    rng: &mut R,
) -> u64 {
    let npix = width * height;
    let mut additions: Vec<usize> = Vec::new();
    for (b, &byte) in frame_bits.iter().enumerate() {
        if byte == 0 {
            continue;
        }
        let mut rest = byte;
        while rest != 0 {
            let bit = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let p = b * 8 + bit;
            if p >= npix {
                continue;
            }
            if !rng.random_bool(prob) {
                continue;
            }
            // Non-zero integer offset along the readout row.
            let normal = Normal::new(0.0, sigma).expect("validated sigma");
            let delta = loop {
                let d = normal.sample(rng).round();
                if d != 0.0 {
                    break d as i64;
                }
            };
            let ix = (p % width) as i64 + delta;
            if ix >= 0 && ix < width as i64 {
                additions.push(p - p % width + ix as usize);
            }
        }
    }
    let spills = additions.len() as u64;
    for p in additions {
        frame_bits[p / 8] |= 1u8 << (p % 8);
    }
    spills
}

/// One generation of blooming on a 0/1 image: every lit pixel spills, with
/// probability `prob`, into one extra pixel of the same row at a non-zero
/// offset `round(N(0, sigma))`; spill pixels do not re-bloom. Deterministic
/// in `seed`.
pub fn apply_blooming(image: &Array2<u8>, prob: f64, sigma: f64, seed: u64) -> Result<Array2<u8>> {
    if !(0.0..1.0).contains(&prob) {
        return Err(Error::domain(format!("bloom probability must be in [0, 1), got {prob}")));
    }
    if prob > 0.0 {
        ensure_positive(sigma, "bloom sigma")?;
    }
    if image.iter().any(|&v| v > 1) {
        return Err(Error::domain("bloom input must be a 0/1 image"));
    }
    let (height, width) = image.dim();
    let stride = (width * height + 7) / 8;
    let mut bits = vec![0u8; stride];
    for ((iy, ix), &v) in image.indexed_iter() {
        if v != 0 {
            let p = iy * width + ix;
            bits[p / 8] |= 1u8 << (p % 8);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bloom_bits(&mut bits, width, height, prob, sigma, &mut rng);
    Ok(Array2::from_shape_fn((height, width), |(iy, ix)| {
        let p = iy * width + ix;
        u8::from(bits[p / 8] & (1u8 << (p % 8)) != 0)
    }))
}

const STACK_MAGIC: &[u8; 4] = b"BPF1";

/// Serialise a stack: magic `BPF1`, then little-endian `u32` width, height
/// and frame count, the `f64` pixel pitch, and the frames in raster order at
/// one byte (0/1) per pixel.
pub fn write_stack(stack: &FrameStack, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STACK_MAGIC)?;
    w.write_all(&(stack.width as u32).to_le_bytes())?;
    w.write_all(&(stack.height as u32).to_le_bytes())?;
    w.write_all(&(stack.n_frames as u32).to_le_bytes())?;
    w.write_all(&stack.pitch.to_le_bytes())?;
    let mut row = vec![0u8; stack.width];
    for k in 0..stack.n_frames {
        for iy in 0..stack.height {
            for (ix, slot) in row.iter_mut().enumerate() {
                *slot = u8::from(stack.get(k, iy, ix));
            }
            w.write_all(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_at(r: &mut impl Read, buf: &mut [u8], offset: u64, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Format {
        offset,
        reason: format!("truncated while reading {what}"),
    })
}

/// Deserialise a stack written by [`write_stack`], validating the header and
/// every pixel byte.
pub fn read_stack(path: &Path) -> Result<FrameStack> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_at(&mut r, &mut magic, 0, "magic")?;
    if &magic != STACK_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: format!("bad magic {magic:?}, expected {STACK_MAGIC:?}"),
        });
    }
    let mut u32buf = [0u8; 4];
    read_exact_at(&mut r, &mut u32buf, 4, "width")?;
    let width = u32::from_le_bytes(u32buf) as usize;
    read_exact_at(&mut r, &mut u32buf, 8, "height")?;
    let height = u32::from_le_bytes(u32buf) as usize;
    read_exact_at(&mut r, &mut u32buf, 12, "frame count")?;
    let n_frames = u32::from_le_bytes(u32buf) as usize;
    let mut f64buf = [0u8; 8];
    read_exact_at(&mut r, &mut f64buf, 16, "pixel pitch")?;
    let pitch = f64::from_le_bytes(f64buf);
    if width == 0 || height == 0 {
        return Err(Error::Format {
            offset: 4,
            reason: format!("frame dimensions {width} x {height} must be non-zero"),
        });
    }
    if !(pitch.is_finite() && pitch > 0.0) {
        return Err(Error::Format {
            offset: 16,
            reason: format!("pixel pitch must be finite and positive, got {pitch}"),
        });
    }
    let mut stack = FrameStack::new_empty(width, height, pitch, n_frames)?;
    let mut row = vec![0u8; width];
    let mut offset = 24u64;
    for k in 0..n_frames {
        for iy in 0..height {
            read_exact_at(&mut r, &mut row, offset, "frame data")?;
            for (ix, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => stack.set(k, iy, ix),
                    other => {
                        return Err(Error::Format {
                            offset: offset + ix as u64,
                            reason: format!("pixel byte must be 0 or 1, got {other}"),
                        });
                    }
                }
            }
            offset += width as u64;
        }
    }
    // Trailing garbage is a format error too.
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(stack),
        Ok(_) => Err(Error::Format {
            offset,
            reason: "trailing bytes after final frame".into(),
        }),
        Err(e) => Err(Error::Io(e)),
    }
}
