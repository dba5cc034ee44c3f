//! Discrete Fourier transforms and the spectral features taken from them.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::FeatureError;

/// Shortest block accepted by [`fft_features`].
pub const MIN_FFT_BLOCK: usize = 16;

/// DFT output `X_k` for `k = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    /// Transform length (after any padding).
    pub n: usize,
    /// Length of the signal before padding.
    pub original_len: usize,
}

impl Spectrum {
    /// Energy `sum |X_k|^2`.
    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// `exp(-2 pi i k / n)` with `k` reduced mod `n` so the angle stays small.
fn twiddle(k: usize, n: usize) -> Complex64 {
    let angle = -2.0 * PI * ((k % n) as f64) / n as f64;
    let (s, c) = angle.sin_cos();
    Complex64::new(c, s)
}

/// Direct O(N^2) evaluation of `X_k = sum_n x_n exp(-2 pi i k n / N)`.
pub fn dft(signal: &[f64]) -> Spectrum {
    let n = signal.len();
    assert!(n >= 1, "dft of an empty signal");
    let bins = (0..n)
        .map(|k| signal.iter().enumerate().map(|(j, &x)| twiddle(k * j % n, n) * x).sum())
        .collect();
    Spectrum {
        bins,
        n,
        original_len: n,
    }
}

/// Iterative radix-2 Cooley-Tukey FFT. The signal is zero-padded to the next
/// power of two; `original_len` records the unpadded length.
pub fn fft(signal: &[f64]) -> Spectrum {
    let original_len = signal.len();
    let n = original_len.max(1).next_power_of_two();
    let mut buf: Vec<Complex64> = signal
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    fft_in_place(&mut buf);
    Spectrum {
        bins: buf,
        n,
        original_len,
    }
}

fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let table: Vec<Complex64> = (0..n / 2).map(|k| twiddle(k, n)).collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for chunk in buf.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for (k, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                let t = table[k * step] * *b;
                *b = *a - t;
                *a += t;
            }
        }
        len <<= 1;
    }
}

/// Scalar features of one block's spectrum, positive frequencies only.
#[derive(Debug, Clone, PartialEq)]
pub struct FftFeatures {
    /// Frequency (Hz) of the strongest non-DC bin.
    pub dominant_freq_hz: f64,
    pub dominant_magnitude: f64,
    /// Energy `|X_k|^2 / N` summed over equal-width bands of `(0, rate/2]`.
    pub band_energies: Vec<f64>,
}

impl FftFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.dominant_freq_hz, self.dominant_magnitude];
        v.extend_from_slice(&self.band_energies);
        v
    }

    pub fn names(n_bands: usize) -> Vec<String> {
        let mut v = vec!["fft_domfreq".to_string(), "fft_dommag".to_string()];
        v.extend((1..=n_bands).map(|b| format!("band_e{b}")));
        v
    }
}

pub fn fft_features(block: &[f64], rate_hz: f64, n_bands: usize) -> Result<FftFeatures, FeatureError> {
    if block.len() < MIN_FFT_BLOCK {
        return Err(FeatureError::BlockTooShort {
            len: block.len(),
            min: MIN_FFT_BLOCK,
        });
    }
    let spec = fft(block);
    let n = spec.n;
    let nyquist = rate_hz / 2.0;
    let bin_hz = rate_hz / n as f64;

    let mut dom_k = 1;
    let mut dom_mag = f64::NEG_INFINITY;
    let mut bands = vec![0.0; n_bands];
    for k in 1..=n / 2 {
        let mag = spec.bins[k].norm();
        if mag > dom_mag {
            dom_mag = mag;
            dom_k = k;
        }
        let freq = k as f64 * bin_hz;
        // band b covers (b * w, (b + 1) * w]
        let band = ((freq / nyquist * n_bands as f64).ceil() as usize).clamp(1, n_bands.max(1)) - 1;
        if let Some(e) = bands.get_mut(band) {
            *e += spec.bins[k].norm_sqr() / n as f64;
        }
    }
    Ok(FftFeatures {
        dominant_freq_hz: dom_k as f64 * bin_hz,
        dominant_magnitude: dom_mag,
        band_energies: bands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn dft_constant_and_impulse() {
        let s = dft(&[1.0, 1.0, 1.0, 1.0]);
        assert!(close(s.bins[0], Complex64::new(4.0, 0.0), 1e-12));
        for k in 1..4 {
            assert!(close(s.bins[k], Complex64::new(0.0, 0.0), 1e-12));
        }
        let s = dft(&[1.0, 0.0, 0.0, 0.0]);
        assert!(s.bins.iter().all(|b| close(*b, Complex64::new(1.0, 0.0), 1e-15)));
    }

    #[test]
    fn dft_four_point_sine() {
        let s = dft(&[0.0, 1.0, 0.0, -1.0]);
        assert!(close(s.bins[0], Complex64::new(0.0, 0.0), 1e-12));
        assert!(close(s.bins[1], Complex64::new(0.0, -2.0), 1e-12));
        assert!(close(s.bins[2], Complex64::new(0.0, 0.0), 1e-12));
        assert!(close(s.bins[3], Complex64::new(0.0, 2.0), 1e-12));
    }

    #[test]
    fn fft_single_sample_and_padding() {
        let s = fft(&[3.5]);
        assert_eq!(s.n, 1);
        assert_eq!(s.bins[0], Complex64::new(3.5, 0.0));
        let s = fft(&[1.0, 2.0, 3.0]);
        assert_eq!(s.n, 4);
        assert_eq!(s.original_len, 3);
        let d = dft(&[1.0, 2.0, 3.0, 0.0]);
        for (a, b) in s.bins.iter().zip(&d.bins) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn single_tone_dominant_frequency() {
        let block: Vec<f64> = (0..64).map(|j| (2.0 * PI * 5.0 * j as f64 / 64.0).sin()).collect();
        let f = fft_features(&block, 2.0, 3).unwrap();
        assert_eq!(f.dominant_freq_hz, 5.0 * 2.0 / 64.0);
        assert!((f.dominant_magnitude - 32.0).abs() < 1e-9);
    }

    #[test]
    fn constant_block_has_no_ac_energy() {
        let f = fft_features(&[2.5; 64], 2.0, 3).unwrap();
        assert!(f.dominant_magnitude < 1e-9);
        assert!(f.band_energies.iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn noise_block_bands_positive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let block: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = fft_features(&block, 2.0, 3).unwrap();
        assert!(f.band_energies.iter().all(|&e| e > 0.0 && e.is_finite()));
        assert!(f.to_vec().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn short_block_rejected() {
        assert!(matches!(
            fft_features(&[0.0; 15], 2.0, 3),
            Err(FeatureError::BlockTooShort { len: 15, .. })
        ));
    }
}
