//! Waveform to log-mel front end.
//!
//! 25 ms Hann-windowed frames with a 10 ms hop, power spectrum via a
//! radix-2 FFT, HTK-style triangular mel filters from 0 Hz to Nyquist, and a
//! natural-log floor. Synthetic corpora bypass this module entirely; it
//! exists so real WAV audio can feed the same pipeline.

use alloc::vec;
use alloc::vec::Vec;

use crate::{CoreError, Result};

/// T x F matrix of log-mel energies for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: usize,
    mel_bins: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_vec(frames: usize, mel_bins: usize, data: Vec<f64>) -> Result<Self> {
        if frames == 0 || mel_bins == 0 {
            return Err(CoreError::Empty("FeatureMatrix dimensions"));
        }
        if data.len() != frames * mel_bins {
            return Err(CoreError::ShapeMismatch {
                context: "FeatureMatrix::from_vec",
                expected: frames * mel_bins,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { term: "feature matrix".into() });
        }
        Ok(FeatureMatrix { frames, mel_bins, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn mel_bins(&self) -> usize {
        self.mel_bins
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.mel_bins..(t + 1) * self.mel_bins]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Concatenate `stack` consecutive frames into one step vector.
    /// Yields floor(T / stack) steps; trailing frames are dropped.
    pub fn stacked(&self, stack: usize, step: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(stack * self.mel_bins);
        for k in 0..stack {
            out.extend_from_slice(self.frame(step * stack + k));
        }
        out
    }

    pub fn num_steps(&self, stack: usize) -> usize {
        self.frames / stack
    }
}

/// Front-end parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMelConfig {
    pub frame_ms: u32,
    pub hop_ms: u32,
    pub mel_bins: usize,
    /// Energy floor applied before the log.
    pub floor: f64,
}

impl Default for LogMelConfig {
    fn default() -> Self {
        LogMelConfig { frame_ms: 25, hop_ms: 10, mel_bins: 40, floor: 1e-10 }
    }
}

/// Compute log-mel features for a mono waveform.
///
/// `T = 1 + floor((N - frame_len) / hop_len)`; every value is
/// `ln(max(mel_energy, floor))`.
pub fn logmel(samples: &[f64], sample_rate: u32, cfg: &LogMelConfig) -> Result<FeatureMatrix> {
    if sample_rate != 8000 && sample_rate != 16000 {
        return Err(CoreError::UnsupportedSampleRate(sample_rate));
    }
    let frame_len = (sample_rate as usize * cfg.frame_ms as usize) / 1000;
    let hop_len = (sample_rate as usize * cfg.hop_ms as usize) / 1000;
    if samples.len() < frame_len {
        return Err(CoreError::WaveformTooShort { samples: samples.len(), frame_len });
    }

    let num_frames = 1 + (samples.len() - frame_len) / hop_len;
    let n_fft = frame_len.next_power_of_two();
    let window = hann(frame_len);
    let bank = mel_filterbank(cfg.mel_bins, n_fft, sample_rate as f64);

    let mut data = Vec::with_capacity(num_frames * cfg.mel_bins);
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    for t in 0..num_frames {
        let start = t * hop_len;
        for i in 0..n_fft {
            re[i] = if i < frame_len { samples[start + i] * window[i] } else { 0.0 };
            im[i] = 0.0;
        }
        fft_in_place(&mut re, &mut im);
        // Power spectrum over the non-negative frequencies.
        let half = n_fft / 2 + 1;
        let mut power = vec![0.0; half];
        for k in 0..half {
            power[k] = re[k] * re[k] + im[k] * im[k];
        }
        for filt in bank.iter() {
            let mut e = 0.0;
            for &(k, w) in filt {
                e += w * power[k];
            }
            data.push(libm::log(if e > cfg.floor { e } else { cfg.floor }));
        }
    }
    FeatureMatrix::from_vec(num_frames, cfg.mel_bins, data)
}

fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| {
            0.5 * (1.0
                - libm::cos(2.0 * core::f64::consts::PI * n as f64 / (len as f64 - 1.0)))
        })
        .collect()
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * libm::log10(1.0 + f / 700.0)
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (libm::pow(10.0, m / 2595.0) - 1.0)
}

/// Sparse triangular filters (FFT-bin index, weight), peak weight 1.0.
fn mel_filterbank(mel_bins: usize, n_fft: usize, sample_rate: f64) -> Vec<Vec<(usize, f64)>> {
    let nyquist = sample_rate / 2.0;
    let mel_max = hz_to_mel(nyquist);
    // mel_bins + 2 edge points, equally spaced in mel from 0 to Nyquist.
    let edges: Vec<f64> = (0..mel_bins + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (mel_bins + 1) as f64))
        .collect();
    let half = n_fft / 2 + 1;
    let bin_hz = sample_rate / n_fft as f64;
    let mut bank = Vec::with_capacity(mel_bins);
    for m in 0..mel_bins {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut filt = Vec::new();
        for k in 0..half {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f < center {
                (f - lo) / (center - lo)
            } else if (f - center).abs() == 0.0 {
                1.0
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            if w > 0.0 {
                filt.push((k, w));
            }
        }
        bank.push(filt);
    }
    bank
}

/// Iterative radix-2 decimation-in-time FFT. `re.len()` must be a power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    debug_assert_eq!(n, im.len());
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * core::f64::consts::PI / len as f64;
        let (wr, wi) = (libm::cos(ang), libm::sin(ang));
        let mut i = 0;
        while i < n {
            let (mut cr, mut ci) = (1.0, 0.0);
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cr - im[i + k + len / 2] * ci,
                    re[i + k + len / 2] * ci + im[i + k + len / 2] * cr,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
            i += len;
        }
        len <<= 1;
    }
}
