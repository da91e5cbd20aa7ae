//! Tapped-delay-line Rayleigh fading, timing offsets, superposition and noise.
//!
//! Each device gets a fresh block-fading realization per round: complex
//! Gaussian taps at integer sample positions plus an integer arrival offset.
//! As long as the last tap plus the offset stays inside the cyclic prefix, the
//! receiver's FFT window sees a circular convolution.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dsp::OfdmConfig;
use crate::{Complex64, Error, Result};

/// Tap delays and normalized linear powers (summing to one).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDelayProfile {
    delays_ns: Vec<f64>,
    powers: Vec<f64>,
}

impl PowerDelayProfile {
    pub fn new(delays_ns: Vec<f64>, powers_db: Vec<f64>) -> Result<Self> {
        if delays_ns.is_empty() || delays_ns.len() != powers_db.len() {
            return Err(Error::invalid(format!(
                "profile needs matching non-empty delay and power lists, got {} and {}",
                delays_ns.len(),
                powers_db.len()
            )));
        }
        if delays_ns.iter().chain(&powers_db).any(|x| !x.is_finite()) {
            return Err(Error::invalid("profile values must be finite"));
        }
        if delays_ns[0] < 0.0 {
            return Err(Error::invalid("tap delays must be non-negative"));
        }
        if delays_ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tap delays must be strictly increasing"));
        }
        let linear: Vec<f64> = powers_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
        let total: f64 = linear.iter().sum();
        Ok(Self {
            delays_ns,
            powers: linear.into_iter().map(|p| p / total).collect(),
        })
    }

    /// ITU Extended Pedestrian A.
    pub fn epa() -> Self {
        Self::new(
            vec![0.0, 30.0, 70.0, 90.0, 110.0, 190.0, 410.0],
            vec![0.0, -1.0, -2.0, -3.0, -8.0, -17.2, -20.8],
        )
        .expect("EPA table is valid")
    }

    /// Single Rayleigh tap.
    pub fn flat() -> Self {
        Self::new(vec![0.0], vec![0.0]).expect("flat profile is valid")
    }

    pub fn delays_ns(&self) -> &[f64] {
        &self.delays_ns
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn mean_delay_ns(&self) -> f64 {
        self.delays_ns.iter().zip(&self.powers).map(|(d, p)| d * p).sum()
    }

    pub fn rms_delay_spread_ns(&self) -> f64 {
        let mean = self.mean_delay_ns();
        let second: f64 = self.delays_ns.iter().zip(&self.powers).map(|(d, p)| d * d * p).sum();
        (second - mean * mean).max(0.0).sqrt()
    }

    /// Maximum excess delay by the four-times-RMS rule of thumb, in seconds.
    pub fn max_excess_delay_s(&self) -> f64 {
        4.0 * self.rms_delay_spread_ns() * 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay: usize,
    pub gain: Complex64,
}

/// One device's channel for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Tap>,
    pub timing_offset: usize,
}

impl ChannelRealization {
    pub fn identity() -> Self {
        Self::single(Complex64::new(1.0, 0.0), 0)
    }

    pub fn single(gain: Complex64, timing_offset: usize) -> Self {
        Self {
            taps: vec![Tap { delay: 0, gain }],
            timing_offset,
        }
    }

    /// Last sample position touched by the impulse response, offset included.
    pub fn span(&self) -> usize {
        self.taps.iter().map(|t| t.delay).max().unwrap_or(0) + self.timing_offset
    }

    /// Frequency response on the occupied subcarriers, timing offset included.
    pub fn frequency_response(&self, cfg: &OfdmConfig) -> Vec<Complex64> {
        self.response(cfg, self.timing_offset)
    }

    /// Frequency response of the multipath taps alone, as a genie channel
    /// estimate that knows the taps but not the arrival offset.
    pub fn multipath_response(&self, cfg: &OfdmConfig) -> Vec<Complex64> {
        self.response(cfg, 0)
    }

    fn response(&self, cfg: &OfdmConfig, offset: usize) -> Vec<Complex64> {
        let n = cfg.n_idft as f64;
        (0..cfg.m_bins)
            .map(|j| {
                let k = cfg.subcarrier_index(j) as f64;
                self.taps
                    .iter()
                    .map(|t| {
                        let d = (t.delay + offset) as f64;
                        t.gain * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k * d / n)
                    })
                    .sum()
            })
            .collect()
    }
}

/// A profile discretized at one sample rate, with taps that round onto the
/// same sample merged (their variances add).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    positions: Vec<usize>,
    variances: Vec<f64>,
    max_offset: usize,
}

impl ChannelModel {
    /// Build a model whose realizations always fit inside `cp_len`.
    pub fn new(profile: &PowerDelayProfile, sample_rate_hz: f64, cp_len: usize, t_sync_s: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if !(t_sync_s.is_finite() && t_sync_s >= 0.0) {
            return Err(Error::invalid("t_sync must be non-negative"));
        }
        let mut positions: Vec<usize> = Vec::new();
        let mut variances: Vec<f64> = Vec::new();
        for (d, p) in profile.delays_ns.iter().zip(&profile.powers) {
            let pos = (d * 1e-9 * sample_rate_hz).round() as usize;
            match positions.last() {
                Some(&last) if last == pos => *variances.last_mut().unwrap() += p,
                _ => {
                    positions.push(pos);
                    variances.push(*p);
                }
            }
        }
        let max_offset = max_timing_offset(t_sync_s, sample_rate_hz);
        let span = positions.last().copied().unwrap_or(0) + max_offset;
        if span >= cp_len {
            return Err(Error::config(format!(
                "channel spans {span} samples (taps up to {} plus timing offset up to {max_offset}) \
                 but the cyclic prefix is {cp_len} samples",
                positions.last().copied().unwrap_or(0)
            )));
        }
        Ok(Self {
            positions,
            variances,
            max_offset,
        })
    }

    pub fn tap_positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn tap_variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn max_offset(&self) -> usize {
        self.max_offset
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let taps = self
            .positions
            .iter()
            .zip(&self.variances)
            .map(|(&delay, &var)| Tap {
                delay,
                gain: complex_gaussian(rng, var),
            })
            .collect();
        ChannelRealization {
            taps,
            timing_offset: rng.random_range(0..=self.max_offset),
        }
    }
}

fn max_timing_offset(t_sync_s: f64, sample_rate_hz: f64) -> usize {
    (t_sync_s * sample_rate_hz).round() as usize
}

/// Circularly-symmetric complex Gaussian with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Multipath taps only, no timing offset.
pub fn draw_channel<R: Rng + ?Sized>(
    profile: &PowerDelayProfile,
    rng: &mut R,
    sample_rate_hz: f64,
) -> Result<ChannelRealization> {
    let model = ChannelModel::new(profile, sample_rate_hz, usize::MAX, 0.0)?;
    Ok(model.draw(rng))
}

/// Uniform over `{0, …, round(t_sync · fs)}` samples.
pub fn draw_timing_offset<R: Rng + ?Sized>(rng: &mut R, t_sync_s: f64, sample_rate_hz: f64) -> usize {
    rng.random_range(0..=max_timing_offset(t_sync_s, sample_rate_hz))
}

/// Linear convolution with the taps, delayed by the timing offset, truncated
/// to the input length.
pub fn apply_channel(x: &[Complex64], chn: &ChannelRealization) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
    for tap in &chn.taps {
        let shift = tap.delay + chn.timing_offset;
        if shift >= x.len() {
            continue;
        }
        for (out, v) in y[shift..].iter_mut().zip(x) {
            *out += tap.gain * v;
        }
    }
    y
}

/// Sum of `signals` plus complex Gaussian noise of variance `sigma_n_sq` per sample.
pub fn superpose<R: Rng + ?Sized>(signals: &[Vec<Complex64>], sigma_n_sq: f64, rng: &mut R) -> Result<Vec<Complex64>> {
    let len = signals.first().map_or(0, Vec::len);
    if signals.iter().any(|s| s.len() != len) {
        return Err(Error::invalid("superposed signals differ in length"));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for s in signals {
        out.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    add_noise(&mut out, sigma_n_sq, rng)?;
    Ok(out)
}

pub fn add_noise<R: Rng + ?Sized>(samples: &mut [Complex64], sigma_n_sq: f64, rng: &mut R) -> Result<()> {
    if !(sigma_n_sq.is_finite() && sigma_n_sq >= 0.0) {
        return Err(Error::invalid(format!("noise variance {sigma_n_sq} is not valid")));
    }
    if sigma_n_sq > 0.0 {
        samples.iter_mut().for_each(|x| *x += complex_gaussian(rng, sigma_n_sq));
    }
    Ok(())
}
