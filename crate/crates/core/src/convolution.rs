//! Full linear convolution of one nonnegative signal against several kernels.
//!
//! The FFT route packs two real kernels into one complex transform. The
//! direct route sums each output index independently (parallel over output
//! cells, summed in ascending source index, so results are deterministic).

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::exec::Exec;

/// Grids at or below this size use the direct sum under [`Method::Auto`].
pub const DIRECT_MAX_CELLS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Auto,
    Direct,
    Fft,
}

pub struct Convolver {
    n: usize,
    method: Method,
    exec: Exec,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver")
            .field("n", &self.n)
            .field("method", &self.method)
            .field("fft_len", &self.fft_len)
            .finish()
    }
}

impl Convolver {
    pub fn new(n: usize, method: Method, exec: Exec) -> Self {
        let fft_len = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let method = match method {
            Method::Auto if n <= DIRECT_MAX_CELLS => Method::Direct,
            Method::Auto => Method::Fft,
            m => m,
        };
        Self {
            n,
            method,
            exec,
            fft_len,
            forward,
            inverse,
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Returns `signal * kernel` (length `2n - 1`) for each of the four kernels.
    pub fn convolve4(&self, signal: &[f64], kernels: [&[f64]; 4]) -> [Vec<f64>; 4] {
        debug_assert_eq!(signal.len(), self.n);
        match self.method {
            Method::Direct => {
                let [a, b, c, d] = kernels;
                let ((ra, rb), (rc, rd)) = self.exec.join(
                    || (self.direct(signal, a), self.direct(signal, b)),
                    || (self.direct(signal, c), self.direct(signal, d)),
                );
                [ra, rb, rc, rd]
            }
            _ => self.fft4(signal, kernels),
        }
    }

    fn direct(&self, signal: &[f64], kernel: &[f64]) -> Vec<f64> {
        let n = self.n;
        self.exec.map_range(2 * n - 1, |k| {
            let lo = k.saturating_sub(n - 1);
            let hi = k.min(n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += signal[j] * kernel[k - j];
            }
            acc
        })
    }

    fn fft4(&self, signal: &[f64], kernels: [&[f64]; 4]) -> [Vec<f64>; 4] {
        let len = self.fft_len;
        let mut s: Vec<Complex<f64>> = signal
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(len)
            .collect();
        self.forward.process(&mut s);

        let signal_norm: f64 = signal.iter().map(|v| v.abs()).sum();
        let out_len = 2 * self.n - 1;
        let packed = |re: &[f64], im: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut k: Vec<Complex<f64>> = (0..len)
                .map(|i| {
                    if i < self.n {
                        Complex::new(re[i], im[i])
                    } else {
                        Complex::new(0.0, 0.0)
                    }
                })
                .collect();
            self.forward.process(&mut k);
            for (kv, sv) in k.iter_mut().zip(&s) {
                *kv *= sv;
            }
            self.inverse.process(&mut k);
            let scale = 1.0 / len as f64;
            let re_max = re.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let im_max = im.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // Round-off of the transform is ~1e-16 relative to |signal|_1 * max|kernel|;
            // anything below that is not resolved and is zeroed.
            let noise_re = 1e-15 * signal_norm * re_max;
            let noise_im = 1e-15 * signal_norm * im_max;
            let denoise = |v: f64, noise: f64| if v.abs() <= noise { 0.0 } else { v };
            let a = k[..out_len]
                .iter()
                .map(|c| denoise(c.re * scale, noise_re))
                .collect();
            let b = k[..out_len]
                .iter()
                .map(|c| denoise(c.im * scale, noise_im))
                .collect();
            (a, b)
        };
        let [k0, k1, k2, k3] = kernels;
        let ((a, b), (c, d)) = self.exec.join(|| packed(k0, k1), || packed(k2, k3));
        [a, b, c, d]
    }
}
