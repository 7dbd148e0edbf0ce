#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// O(n²) discrete Fourier transform; `inverse` includes the 1/n factor.
pub fn naive_dft(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = x.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out: Vec<Complex64> = (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(t, &v)| v * Complex64::from_polar(1.0, sign * 2.0 * PI * ((k * t) % n) as f64 / n as f64))
                .sum()
        })
        .collect();
    if inverse {
        out.iter_mut().for_each(|v| *v /= n as f64);
    }
    out
}

/// Row-major 2-D DFT built from row then column 1-D naive transforms.
pub fn naive_dft2(x: &[Complex64], rows: usize, cols: usize, inverse: bool) -> Vec<Complex64> {
    let mut tmp = vec![Complex64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        tmp[r * cols..(r + 1) * cols].copy_from_slice(&naive_dft(&x[r * cols..(r + 1) * cols], inverse));
    }
    for c in 0..cols {
        let col: Vec<Complex64> = (0..rows).map(|r| tmp[r * cols + c]).collect();
        for (r, v) in naive_dft(&col, inverse).into_iter().enumerate() {
            tmp[r * cols + c] = v;
        }
    }
    tmp
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_series(rng: &mut StdRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn max_abs(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max |a - b| / max(max |b|, 1)`.
pub fn relative_gap(a: &[Complex64], b: &[Complex64]) -> f64 {
    let gap = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    gap / max_abs(b).max(1.0)
}

use seizure_forge::msfs::{FeatureRecord, FeatureSubspace, SamplingParams};

/// Three member subspaces of `events` events with `windows` windows each.
/// Class `c` lights up row band `c` of every channel, plus noise.
pub fn toy_subspaces(events: u32, windows: u32, size: usize, classes: u8, seed: u64) -> Vec<FeatureSubspace> {
    let mut r = rng(seed);
    let freqs = [24, 48, 64];
    (0..3u16)
        .map(|m| {
            let params = SamplingParams::new(freqs[m as usize], 1.0, 0.5, u64::from(m)).unwrap();
            let band = size / usize::from(classes.max(1));
            let records = (0..events)
                .flat_map(|e| (0..windows).map(move |w| (e, w)))
                .map(|(e, w)| {
                    let label = (e % u32::from(classes)) as u8;
                    let mut stacked = vec![0.0f32; 3 * size * size];
                    for (i, v) in stacked.iter_mut().enumerate() {
                        let row = (i / size) % size;
                        let lit = row / band.max(1) == usize::from(label);
                        *v = if lit { 200.0 } else { 30.0 } + r.random_range(-20.0..20.0);
                    }
                    FeatureRecord {
                        member: m,
                        event: e,
                        window: w,
                        params,
                        label,
                        height: size,
                        width: size,
                        stacked,
                    }
                })
                .collect();
            FeatureSubspace {
                member: m,
                params,
                records,
                dropped_segments: 0,
            }
        })
        .collect()
}
