//! Log-mel spectrogram front end.
//!
//! Pipeline: zero-pad the waveform by `n_fft / 2` on both sides, slice
//! frames every `hop_length` samples, apply a periodic Hann window of
//! `win_length` centred in the `n_fft` frame, take the magnitude of the
//! real FFT, project onto `n_mels` triangular filters on the HTK mel scale,
//! compress with `ln(max(floor, x))`, and finally keep one frame out of every
//! `reduction` frames (the first of each group).

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop_length: usize,
    pub win_length: usize,
    pub n_mels: usize,
    /// Keep one frame out of this many.
    pub reduction: usize,
    pub log_floor: f64,
    pub f_min: f64,
    /// Upper filter edge; `None` means Nyquist.
    pub f_max: Option<f64>,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22050,
            n_fft: 2048,
            hop_length: 256,
            win_length: 1024,
            n_mels: 80,
            reduction: 16,
            log_floor: 1e-5,
            f_min: 0.0,
            f_max: None,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("mel config: {m}")));
        if self.sample_rate == 0 {
            return fail("sample_rate must be positive");
        }
        if self.n_mels == 0 || self.reduction == 0 || self.hop_length == 0 || self.win_length == 0 {
            return fail("n_mels, reduction, hop_length and win_length must be >= 1");
        }
        if self.n_fft < self.win_length {
            return fail("n_fft must be >= win_length");
        }
        if !(self.log_floor > 0.0) {
            return fail("log_floor must be positive");
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max()) || self.f_max() > self.sample_rate as f64 / 2.0 {
            return fail("need 0 <= f_min < f_max <= sample_rate / 2");
        }
        Ok(())
    }

    pub fn f_max(&self) -> f64 {
        self.f_max.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Centre frequency (Hz) of every filter, lowest first.
pub fn mel_band_centers(cfg: &MelConfig) -> Vec<f64> {
    mel_edges(cfg)[1..=cfg.n_mels].to_vec()
}

fn mel_edges(cfg: &MelConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.f_min);
    let hi = hz_to_mel(cfg.f_max());
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Triangular filters, `n_mels × (n_fft / 2 + 1)`, peak height 1.
pub fn mel_filter_bank(cfg: &MelConfig) -> Result<Tensor> {
    cfg.validate()?;
    let edges = mel_edges(cfg);
    let bins = cfg.bins();
    let mut data = vec![0.0; cfg.n_mels * bins];
    for m in 0..cfg.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            data[m * bins + k] = rising.min(falling).max(0.0);
        }
    }
    Tensor::matrix(cfg.n_mels, bins, data)
}

/// Periodic Hann window of `win_length`, zero-padded to `n_fft` and centred.
pub fn analysis_window(cfg: &MelConfig) -> Vec<f64> {
    let mut w = vec![0.0; cfg.n_fft];
    let offset = (cfg.n_fft - cfg.win_length) / 2;
    for n in 0..cfg.win_length {
        w[offset + n] = 0.5 - 0.5 * (2.0 * PI * n as f64 / cfg.win_length as f64).cos();
    }
    w
}

pub fn frame_count(samples: usize, cfg: &MelConfig) -> usize {
    let padded = samples + 2 * (cfg.n_fft / 2);
    if padded < cfg.n_fft {
        1
    } else {
        1 + (padded - cfg.n_fft) / cfg.hop_length
    }
}

/// Magnitude STFT, `frames × (n_fft / 2 + 1)`.
pub fn stft_magnitude(waveform: &[f64], cfg: &MelConfig) -> Result<Tensor> {
    cfg.validate()?;
    if waveform.is_empty() {
        return Err(Error::Contract("waveform is empty".into()));
    }
    if let Some(bad) = waveform.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("waveform contains {bad}")));
    }
    let pad = cfg.n_fft / 2;
    let mut padded = vec![0.0; waveform.len() + 2 * pad];
    padded[pad..pad + waveform.len()].copy_from_slice(waveform);
    if padded.len() < cfg.n_fft {
        padded.resize(cfg.n_fft, 0.0);
    }
    let window = analysis_window(cfg);
    let frames = frame_count(waveform.len(), cfg);
    let bins = cfg.bins();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut out = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let start = t * cfg.hop_length;
        for (n, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(padded[start + n] * window[n], 0.0);
        }
        fft.process(&mut buf);
        out.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    Tensor::matrix(frames, bins, out)
}

/// Keeps rows `0, stride, 2·stride, …`; yields `ceil(rows / stride)` rows.
pub fn temporal_reduction(frames: &Tensor, stride: usize) -> Result<Tensor> {
    if stride == 0 {
        return Err(Error::Contract("reduction stride must be >= 1".into()));
    }
    let rows: Vec<Vec<f64>> = (0..frames.rows()).step_by(stride).map(|r| frames.row(r).to_vec()).collect();
    Tensor::from_rows(&rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MelOutput {
    /// `ceil(frames / reduction) × n_mels`.
    pub spectrogram: Tensor,
    /// The waveform was shorter than one analysis window.
    pub short_input: bool,
}

/// Log-mel frames before temporal reduction, `frames × n_mels`.
pub fn log_mel_frames(waveform: &[f64], cfg: &MelConfig) -> Result<Tensor> {
    let mag = stft_magnitude(waveform, cfg)?;
    let filters = mel_filter_bank(cfg)?;
    let bins = cfg.bins();
    let mut out = Vec::with_capacity(mag.rows() * cfg.n_mels);
    for t in 0..mag.rows() {
        let spectrum = mag.row(t);
        for m in 0..cfg.n_mels {
            let energy: f64 = filters.data()[m * bins..(m + 1) * bins]
                .iter()
                .zip(spectrum)
                .map(|(w, s)| w * s)
                .sum();
            out.push(energy.max(cfg.log_floor).ln());
        }
    }
    Tensor::matrix(mag.rows(), cfg.n_mels, out)
}

pub fn mel_spectrogram(waveform: &[f64], cfg: &MelConfig) -> Result<MelOutput> {
    let frames = log_mel_frames(waveform, cfg)?;
    Ok(MelOutput {
        spectrogram: temporal_reduction(&frames, cfg.reduction)?,
        short_input: waveform.len() < cfg.win_length,
    })
}

/// Linear-interpolation resampler. Adequate for speech features; it does
/// no anti-alias filtering, so downsampling folds energy above the new
/// Nyquist frequency back into the band.
pub fn resample_linear(samples: &[f64], from_rate: u32, to_rate: u32) -> Result<Vec<f64>> {
    if from_rate == 0 || to_rate == 0 {
        return Err(Error::Config("sample rates must be positive".into()));
    }
    if from_rate == to_rate || samples.len() < 2 {
        return Ok(samples.to_vec());
    }
    let ratio = from_rate as f64 / to_rate as f64;
    let out_len = ((samples.len() as f64) / ratio).round().max(1.0) as usize;
    Ok((0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = pos.floor() as usize;
            if j + 1 >= samples.len() {
                samples[samples.len() - 1]
            } else {
                let frac = pos - j as f64;
                samples[j] * (1.0 - frac) + samples[j + 1] * frac
            }
        })
        .collect())
}
