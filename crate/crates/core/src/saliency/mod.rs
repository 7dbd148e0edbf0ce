//! Saliency-encoded spectrograms: the log-amplitude Fourier map `FT`, the
//! spectral-residual saliency map `S1`, the multi-scale center-surround map
//! `S2`, and their normalized three-channel stack.

mod cache;
mod fft;

pub use cache::{read_feature_cache, write_feature_cache, CacheRecordHeader, SESP_MAGIC, SESP_VERSION};
pub use fft::{fft_1d, fft_2d, fft_complex, FftPlan};

use num_complex::Complex64;

use crate::eeg_io::MontageSignal;
use crate::error::{Error, Result};

/// Guard added to amplitudes before the logarithm.
pub const LOG_EPSILON: f64 = 1e-8;
/// Standard deviation of the smoothing Gaussian applied to `S1`.
pub const GAUSSIAN_SIGMA: f64 = 2.5;
/// Side of the (square) smoothing Gaussian kernel.
pub const GAUSSIAN_SIZE: usize = 9;
/// Neighborhood radii of the center-surround map.
pub const SURROUND_RADII: [usize; 3] = [2, 3, 4];
/// Default side length of the stacked network input.
pub const DEFAULT_STACK_SIZE: usize = 224;

/// Row-major 2-D array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!("{} values for a {rows}x{cols} grid", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Value at `(r, c)` with indices clamped to the border.
    #[inline]
    fn clamped(&self, r: isize, c: isize) -> f64 {
        let r = r.clamp(0, self.rows as isize - 1) as usize;
        let c = c.clamp(0, self.cols as isize - 1) as usize;
        self.at(r, c)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn same_shape(&self, other: &Grid) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// Correlate with a square odd-sized kernel, replicating border values.
    pub fn filter(&self, kernel: &[f64], size: usize) -> Grid {
        let half = (size / 2) as isize;
        let mut out = Vec::with_capacity(self.data.len());
        for r in 0..self.rows as isize {
            for c in 0..self.cols as isize {
                let mut acc = 0.0;
                for (kr, row) in kernel.chunks(size).enumerate() {
                    for (kc, w) in row.iter().enumerate() {
                        acc += w * self.clamped(r + kr as isize - half, c + kc as isize - half);
                    }
                }
                out.push(acc);
            }
        }
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: out,
        }
    }
}

/// Normalized `size x size` Gaussian kernel, row-major.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64 - half, (i % size) as f64 - half);
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Log-amplitude Fourier map: `p` frequency bins (rows) by 20 channels (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct FtMap {
    pub values: Grid,
    /// Sampling rate of the window the map was computed from.
    pub window_rate: f64,
}

/// Per-channel 1-D FFT of a 20-channel window; entry `(i, c) = ln(|F(x_c)|_i + eps)`.
pub fn compute_ft_map(segment: &MontageSignal) -> Result<FtMap> {
    if segment.channels.len() != MontageSignal::CHANNELS {
        return Err(Error::shape(format!(
            "FT map needs 20 channels, got {}",
            segment.channels.len()
        )));
    }
    let p = segment.len();
    let plan = FftPlan::new(p)?;
    let cols = segment.channels.len();
    let mut data = vec![0.0; p * cols];
    let mut buf = vec![Complex64::new(0.0, 0.0); p];
    for (c, ch) in segment.channels.iter().enumerate() {
        if ch.len() != p {
            return Err(Error::shape("FT map channels have unequal lengths"));
        }
        for (b, &v) in buf.iter_mut().zip(ch) {
            *b = Complex64::new(v, 0.0);
        }
        plan.transform(&mut buf, false);
        for (i, z) in buf.iter().enumerate() {
            data[i * cols + c] = (z.norm() + LOG_EPSILON).ln();
        }
    }
    Ok(FtMap {
        values: Grid::new(p, cols, data)?,
        window_rate: segment.rate,
    })
}

/// How the phase map enters the `S1` reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum S1Variant {
    /// `G * |F^-1(exp(R + iP))|^2`: the residual is the log amplitude, `P` the phase.
    #[default]
    Residual,
    /// `G * |F^-1(exp(R) + P)|^2`: the phase is added outside the exponential, as printed.
    Literal,
}

/// Relative imaginary part below which a bin counts as real.
pub const REAL_BIN_TOLERANCE: f64 = 1e-12;

/// Phase of `z`, with numerically real bins pinned to 0 or pi so the sign of
/// a rounding-level imaginary part cannot flip it to -pi.
pub fn phase(z: &Complex64) -> f64 {
    if z.im.abs() <= REAL_BIN_TOLERANCE * z.norm() {
        if z.re < 0.0 {
            std::f64::consts::PI
        } else {
            0.0
        }
    } else {
        z.arg()
    }
}

/// Spectral-residual saliency of the FT map.
///
/// `R = FT - H * FT` with a 3x3 mean filter `H`; `P` is the phase of the 2-D
/// transform of `FT`. The reconstruction's squared magnitude is smoothed by
/// a 9x9 Gaussian with sigma 2.5. Borders replicate.
pub fn compute_s1(ft: &FtMap, variant: S1Variant) -> Result<Grid> {
    let map = &ft.values;
    let (rows, cols) = (map.rows, map.cols);
    let local_mean = map.filter(&[1.0 / 9.0; 9], 3);

    let mut spectrum: Vec<Complex64> = map.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_2d(&mut spectrum, rows, cols, false)?;

    let mut recon: Vec<Complex64> = map
        .data
        .iter()
        .zip(&local_mean.data)
        .zip(&spectrum)
        .map(|((&v, &m), z)| {
            let residual = v - m;
            match variant {
                S1Variant::Residual => Complex64::from_polar(residual.exp(), phase(z)),
                S1Variant::Literal => Complex64::new(residual.exp() + phase(z), 0.0),
            }
        })
        .collect();
    fft_2d(&mut recon, rows, cols, true)?;

    let energy = Grid::new(rows, cols, recon.iter().map(|z| z.norm_sqr()).collect())?;
    Ok(energy.filter(&gaussian_kernel(GAUSSIAN_SIZE, GAUSSIAN_SIGMA), GAUSSIAN_SIZE))
}

/// Offsets `(dr, dc)` with `dr^2 + dc^2 <= radius^2`.
fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r * r {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Multi-scale center-surround saliency: for each cell, the sum over radii
/// 2, 3 and 4 of the cell value minus the minimum over its circular
/// neighborhood. Neighborhoods are clipped at the borders.
pub fn compute_s2(ft: &FtMap) -> Grid {
    let map = &ft.values;
    let discs: Vec<Vec<(isize, isize)>> = SURROUND_RADII.iter().map(|&r| disc_offsets(r)).collect();
    let (rows, cols) = (map.rows as isize, map.cols as isize);
    let mut out = Vec::with_capacity(map.data.len());
    for r in 0..rows {
        for c in 0..cols {
            let center = map.at(r as usize, c as usize);
            let mut total = 0.0;
            for disc in &discs {
                let lowest = disc
                    .iter()
                    .map(|&(dr, dc)| (r + dr, c + dc))
                    .filter(|&(y, x)| y >= 0 && y < rows && x >= 0 && x < cols)
                    .map(|(y, x)| map.at(y as usize, x as usize))
                    .fold(f64::INFINITY, f64::min);
                total += center - lowest;
            }
            out.push(total);
        }
    }
    Grid {
        rows: map.rows,
        cols: map.cols,
        data: out,
    }
}

/// Affinely map `map` onto `[0, 255]`; a constant map becomes all zeros.
pub fn min_max_scale(map: &Grid) -> Grid {
    let (lo, hi) = (map.min(), map.max());
    let span = hi - lo;
    let data = if span > 0.0 && span.is_finite() {
        map.data.iter().map(|v| (v - lo) / span * 255.0).collect()
    } else {
        vec![0.0; map.data.len()]
    };
    Grid {
        rows: map.rows,
        cols: map.cols,
        data,
    }
}

/// Bilinear resize with half-pixel centers and clamped borders.
pub fn resize_bilinear(map: &Grid, out_rows: usize, out_cols: usize) -> Result<Grid> {
    if out_rows == 0 || out_cols == 0 {
        return Err(Error::invalid(format!("zero-area output size {out_rows}x{out_cols}")));
    }
    let axis = |out: usize, input: usize| -> Vec<(usize, usize, f64)> {
        let scale = input as f64 / out as f64;
        (0..out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(input - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = axis(out_rows, map.rows);
    let xs = axis(out_cols, map.cols);
    let mut data = Vec::with_capacity(out_rows * out_cols);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = map.at(y0, x0) * (1.0 - fx) + map.at(y0, x1) * fx;
            let bottom = map.at(y1, x0) * (1.0 - fx) + map.at(y1, x1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Grid::new(out_rows, out_cols, data)
}

/// The three maps plus their normalized, resized, channel-first stack.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencySpectrogram {
    pub ft: FtMap,
    pub s1: Grid,
    pub s2: Grid,
    pub height: usize,
    pub width: usize,
    /// `3 x height x width` values in `[0, 255]`, channels ordered FT, S1, S2.
    pub stacked: Vec<f32>,
}

pub fn assemble_stack(ft: FtMap, s1: Grid, s2: Grid, out_size: (usize, usize)) -> Result<SaliencySpectrogram> {
    if !ft.values.same_shape(&s1) || !ft.values.same_shape(&s2) {
        return Err(Error::shape("FT, S1 and S2 maps must share dimensions"));
    }
    let (height, width) = out_size;
    let mut stacked = Vec::with_capacity(3 * height * width);
    for map in [&ft.values, &s1, &s2] {
        let scaled = resize_bilinear(&min_max_scale(map), height, width)?;
        stacked.extend(scaled.data.iter().map(|&v| v.clamp(0.0, 255.0) as f32));
    }
    Ok(SaliencySpectrogram {
        ft,
        s1,
        s2,
        height,
        width,
        stacked,
    })
}

/// Full featurization of one 20-channel window.
pub fn saliency_spectrogram(
    window: &MontageSignal,
    out_size: (usize, usize),
    variant: S1Variant,
) -> Result<SaliencySpectrogram> {
    let ft = compute_ft_map(window)?;
    let s1 = compute_s1(&ft, variant)?;
    let s2 = compute_s2(&ft);
    assemble_stack(ft, s1, s2, out_size)
}
