//! Log-mel reference: explicit padding, window, O(n²) DFT and triangular
//! weights evaluated from the mel-scale definition.

use std::f64::consts::PI;

use tbje_core::features::MelConfig;
use tbje_core::Tensor;

pub fn mel_oracle(signal: &[f64], cfg: &MelConfig) -> Vec<Vec<f64>> {
    let n_fft = cfg.n_fft;
    let pad = n_fft / 2;
    let mut padded = vec![0.0; pad];
    padded.extend_from_slice(signal);
    padded.extend(std::iter::repeat_n(0.0, pad));
    let offset = (n_fft - cfg.win_length) / 2;
    let window: Vec<f64> = (0..n_fft)
        .map(|n| {
            if n < offset || n >= offset + cfg.win_length {
                0.0
            } else {
                let m = (n - offset) as f64;
                (PI * m / cfg.win_length as f64).sin().powi(2)
            }
        })
        .collect();
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(cfg.sample_rate as f64 / 2.0);
    let points: Vec<f64> = (0..cfg.n_mels + 2).map(|i| hz(top * i as f64 / (cfg.n_mels + 1) as f64)).collect();
    let bins = n_fft / 2 + 1;
    let mut frames = Vec::new();
    let mut start = 0;
    while start + n_fft <= padded.len() {
        let spectrum: Vec<f64> = (0..bins)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..n_fft {
                    let x = padded[start + n] * window[n];
                    let angle = -2.0 * PI * ((k * n) % n_fft) as f64 / n_fft as f64;
                    re += x * angle.cos();
                    im += x * angle.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        let row = (0..cfg.n_mels)
            .map(|m| {
                let (lo, mid, hi) = (points[m], points[m + 1], points[m + 2]);
                let energy: f64 = spectrum
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        let f = k as f64 * cfg.sample_rate as f64 / n_fft as f64;
                        let w = if f <= lo || f >= hi {
                            0.0
                        } else if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        };
                        w * s
                    })
                    .sum();
                energy.max(cfg.log_floor).ln()
            })
            .collect();
        frames.push(row);
        start += cfg.hop_length;
    }
    frames
}

pub fn relative(got: &Tensor, expected: &[Vec<f64>]) -> f64 {
    let scale = expected.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = expected.iter().flatten().zip(got.data()).fold(0.0f64, |m, (e, g)| m.max((e - g).abs()));
    diff / scale
}
