//! Discrete Fourier transforms of arbitrary length.
//!
//! Power-of-two lengths use an iterative radix-2 Cooley-Tukey kernel; every
//! other length is mapped onto a power-of-two circular convolution with
//! Bluestein's chirp-z identity `jk = (j^2 + k^2 - (k - j)^2) / 2`, so results
//! are the exact DFT rather than a zero-padded approximation.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    algo: Algo,
}

#[derive(Debug, Clone)]
enum Algo {
    Single,
    Radix2 {
        /// `exp(-2 pi i k / n)` for `k < n / 2`.
        twiddles: Vec<Complex64>,
    },
    Bluestein {
        /// `exp(-pi i j^2 / n)`.
        chirp: Vec<Complex64>,
        /// Forward transform of the conjugate chirp laid out circularly over `m` points.
        kernel: Vec<Complex64>,
        inner: Box<FftPlan>,
    },
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("FFT of an empty series"));
        }
        let algo = if n == 1 {
            Algo::Single
        } else if n.is_power_of_two() {
            Algo::Radix2 {
                twiddles: (0..n / 2)
                    .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
                    .collect(),
            }
        } else {
            let m = (2 * n - 1).next_power_of_two();
            let inner = FftPlan::new(m)?;
            // Reduce j^2 modulo 2n before scaling so the angle stays small and exact.
            let chirp: Vec<Complex64> = (0..n)
                .map(|j| {
                    let q = (j as u128 * j as u128 % (2 * n) as u128) as f64;
                    Complex64::from_polar(1.0, -PI * q / n as f64)
                })
                .collect();
            let mut kernel = vec![Complex64::new(0.0, 0.0); m];
            kernel[0] = chirp[0].conj();
            for j in 1..n {
                kernel[j] = chirp[j].conj();
                kernel[m - j] = chirp[j].conj();
            }
            inner.process(&mut kernel, false);
            Algo::Bluestein {
                chirp,
                kernel,
                inner: Box::new(inner),
            }
        };
        Ok(Self { n, algo })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized in-place transform; `inverse` flips the exponent sign only.
    pub fn process(&self, buf: &mut [Complex64], inverse: bool) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        match &self.algo {
            Algo::Single => {}
            Algo::Radix2 { twiddles } => radix2(buf, twiddles, inverse),
            Algo::Bluestein { chirp, kernel, inner } => {
                if inverse {
                    buf.iter_mut().for_each(|z| *z = z.conj());
                }
                let m = kernel.len();
                let mut work = vec![Complex64::new(0.0, 0.0); m];
                for (w, (x, c)) in work.iter_mut().zip(buf.iter().zip(chirp)) {
                    *w = x * c;
                }
                inner.process(&mut work, false);
                for (w, k) in work.iter_mut().zip(kernel) {
                    *w *= k;
                }
                inner.process(&mut work, true);
                let scale = 1.0 / m as f64;
                for (out, (w, c)) in buf.iter_mut().zip(work.iter().zip(chirp)) {
                    *out = w * c * scale;
                }
                if inverse {
                    buf.iter_mut().for_each(|z| *z = z.conj());
                }
            }
        }
    }

    /// Forward transform, or the inverse scaled by `1/n`.
    pub fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        self.process(buf, inverse);
        if inverse {
            let s = 1.0 / self.n as f64;
            buf.iter_mut().for_each(|z| *z *= s);
        }
    }
}

fn radix2(buf: &mut [Complex64], twiddles: &[Complex64], inverse: bool) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let mut w = twiddles[k * stride];
                if inverse {
                    w = w.conj();
                }
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// DFT of a real series; with `inverse` the result is scaled by `1/n`.
pub fn fft_1d(x: &[f64], inverse: bool) -> Result<Vec<Complex64>> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlan::new(x.len())?.transform(&mut buf, inverse);
    Ok(buf)
}

/// DFT of a complex series; with `inverse` the result is scaled by `1/n`.
pub fn fft_complex(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    let mut buf = x.to_vec();
    FftPlan::new(x.len())?.transform(&mut buf, inverse);
    Ok(buf)
}

/// 2-D transform of a row-major `rows x cols` array (rows first, then columns).
pub fn fft_2d(data: &mut [Complex64], rows: usize, cols: usize, inverse: bool) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::shape(format!("{} values for a {rows}x{cols} array", data.len())));
    }
    let row_plan = FftPlan::new(cols)?;
    let col_plan = FftPlan::new(rows)?;
    for r in data.chunks_mut(cols) {
        row_plan.transform(r, inverse);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        col_plan.transform(&mut column, inverse);
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }
    Ok(())
}
