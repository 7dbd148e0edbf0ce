mod common;

use std::f64::consts::PI;

use common::{naive_dft, naive_dft2, random_series, relative_gap, rng};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use seizure_forge::eeg_io::MontageSignal;
use seizure_forge::saliency::{
    assemble_stack, compute_ft_map, compute_s1, compute_s2, fft_1d, fft_2d, fft_complex, FtMap, Grid, S1Variant,
    GAUSSIAN_SIGMA, GAUSSIAN_SIZE, LOG_EPSILON,
};

fn complex(x: &[f64]) -> Vec<Complex64> {
    x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

#[test]
fn fft_matches_naive_dft_on_random_lengths() {
    let mut r = rng(11);
    for _ in 0..200 {
        let n = r.random_range(1..=1024);
        let x = random_series(&mut r, n);
        let fast = fft_1d(&x, false).unwrap();
        let slow = naive_dft(&complex(&x), false);
        let gap = relative_gap(&fast, &slow);
        assert!(gap < 1e-9, "n = {n}: relative gap {gap}");
        let back = fft_complex(&fast, true).unwrap();
        let gap = relative_gap(&back, &complex(&x));
        assert!(gap < 1e-9, "n = {n}: round trip gap {gap}");
    }
}

#[test]
fn fft_2d_matches_naive_on_odd_shapes() {
    let mut r = rng(3);
    for (rows, cols) in [(1, 1), (5, 20), (24, 20), (17, 3)] {
        let x = complex(&random_series(&mut r, rows * cols));
        let mut fast = x.clone();
        fft_2d(&mut fast, rows, cols, false).unwrap();
        assert!(relative_gap(&fast, &naive_dft2(&x, rows, cols, false)) < 1e-9);
    }
}

fn random_window(seed: u64, p: usize) -> MontageSignal {
    let mut r = rng(seed);
    MontageSignal::new((0..20).map(|_| random_series(&mut r, p)).collect(), p as f64).unwrap()
}

#[test]
fn ft_map_matches_naive_pipeline() {
    for (seed, p) in [(1, 24), (2, 48), (3, 64), (4, 96)] {
        let w = random_window(seed, p);
        let ft = compute_ft_map(&w).unwrap();
        assert_eq!((ft.values.rows, ft.values.cols), (p, 20));
        for (c, ch) in w.channels.iter().enumerate() {
            let spec = naive_dft(&complex(ch), false);
            for (i, z) in spec.iter().enumerate() {
                let want = (z.norm() + LOG_EPSILON).ln();
                let got = ft.values.at(i, c);
                assert!((got - want).abs() < 1e-6 * want.abs().max(1.0), "p {p} bin {i} ch {c}: {got} vs {want}");
            }
        }
    }
}

/// Replicated-border convolution with a square kernel, written out per cell.
fn smooth(values: &[f64], rows: usize, cols: usize, kernel: &[f64], size: usize) -> Vec<f64> {
    let half = (size / 2) as isize;
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, rows as isize - 1) as usize;
        let c = c.clamp(0, cols as isize - 1) as usize;
        values[r * cols + c]
    };
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for dy in 0..size {
                for dx in 0..size {
                    acc += kernel[dy * size + dx] * at(r as isize + dy as isize - half, c as isize + dx as isize - half);
                }
            }
            out[r * cols + c] = acc;
        }
    }
    out
}

fn gaussian(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let raw: Vec<f64> = (0..size * size)
        .map(|i| {
            let y = (i / size) as f64 - half;
            let x = (i % size) as f64 - half;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// Spectral residual on a scalar path: naive 2-D DFTs and explicit loops.
fn s1_reference(ft: &Grid, literal: bool) -> Vec<f64> {
    let (rows, cols) = (ft.rows, ft.cols);
    let mean = smooth(&ft.data, rows, cols, &[1.0 / 9.0; 9], 3);
    let spectrum = naive_dft2(&complex(&ft.data), rows, cols, false);
    let recon: Vec<Complex64> = (0..rows * cols)
        .map(|i| {
            let residual = ft.data[i] - mean[i];
            let z = spectrum[i];
            // Bins that are real up to rounding sit on the branch cut.
            let phase = if z.im.abs() <= 1e-12 * z.norm() {
                if z.re < 0.0 { PI } else { 0.0 }
            } else {
                z.im.atan2(z.re)
            };
            if literal {
                Complex64::new(residual.exp() + phase, 0.0)
            } else {
                Complex64::new(residual.exp() * phase.cos(), residual.exp() * phase.sin())
            }
        })
        .collect();
    let energy: Vec<f64> = naive_dft2(&recon, rows, cols, true).iter().map(|z| z.norm_sqr()).collect();
    smooth(&energy, rows, cols, &gaussian(GAUSSIAN_SIZE, GAUSSIAN_SIGMA), GAUSSIAN_SIZE)
}

#[test]
fn s1_matches_scalar_reference() {
    for (seed, p) in [(5, 24), (6, 48)] {
        let ft = compute_ft_map(&random_window(seed, p)).unwrap();
        for (variant, literal) in [(S1Variant::Residual, false), (S1Variant::Literal, true)] {
            let got = compute_s1(&ft, variant).unwrap();
            let want = s1_reference(&ft.values, literal);
            let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            for (g, w) in got.data.iter().zip(&want) {
                assert!((g - w).abs() / scale < 1e-9, "{variant:?}: {g} vs {w}");
            }
        }
    }
}

fn grid_map(rows: usize, cols: usize, data: Vec<f64>) -> FtMap {
    FtMap {
        values: Grid::new(rows, cols, data).unwrap(),
        window_rate: rows as f64,
    }
}

#[test]
fn s2_vanishes_on_constant_maps() {
    for v in [-3.5, 0.0, 12.0] {
        let s2 = compute_s2(&grid_map(24, 20, vec![v; 480]));
        assert!(s2.data.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn s2_is_nonnegative_on_random_maps() {
    let mut r = rng(17);
    for _ in 0..1000 {
        let rows = r.random_range(1..=30);
        let cols = r.random_range(1..=20);
        let data = (0..rows * cols).map(|_| r.random_range(-20.0..20.0)).collect();
        let s2 = compute_s2(&grid_map(rows, cols, data));
        assert!(s2.data.iter().all(|&x| x >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stack_in_range_and_offset_invariant(
        data in prop::collection::vec(-30.0f64..30.0, 24 * 20),
        offsets in prop::array::uniform3(-100.0f64..100.0),
        side in 8usize..40,
    ) {
        let ft = grid_map(24, 20, data.clone());
        let s1 = compute_s1(&ft, S1Variant::Residual).unwrap();
        let s2 = compute_s2(&ft);
        let base = assemble_stack(ft.clone(), s1.clone(), s2.clone(), (side, side)).unwrap();
        prop_assert_eq!(base.stacked.len(), 3 * side * side);
        prop_assert!(base.stacked.iter().all(|&v| (0.0..=255.0).contains(&v)));

        let shift = |g: &Grid, o: f64| Grid::new(g.rows, g.cols, g.data.iter().map(|v| v + o).collect()).unwrap();
        let moved = assemble_stack(
            grid_map(24, 20, shift(&ft.values, offsets[0]).data),
            shift(&s1, offsets[1]),
            shift(&s2, offsets[2]),
            (side, side),
        )
        .unwrap();
        for (a, b) in base.stacked.iter().zip(&moved.stacked) {
            prop_assert!((a - b).abs() < 1e-3, "{} vs {}", a, b);
        }
    }
}
