//! Unitary DFTs and the DFT-spread OFDM transmit/receive chain.
//!
//! Transmit: `x = IDFT_N · M_f · DFT_M · s`, then a cyclic prefix copied from
//! the tail. Receive: `ŝ = DFT_M^H · M_f^H · DFT_N · y` on the CP-stripped
//! body, with no frequency-domain equalization. All transforms are scaled by
//! `1/√n` in both directions so they preserve energy.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::{Complex64, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sampling and subcarrier layout of one OFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    pub n_idft: usize,
    pub m_bins: usize,
    pub cp_len: usize,
    pub first_subcarrier: usize,
    pub sample_rate_hz: f64,
}

impl OfdmConfig {
    /// Config with the `m_bins` occupied subcarriers centred in the band.
    pub fn new(n_idft: usize, m_bins: usize, cp_len: usize, sample_rate_hz: f64) -> Result<Self> {
        let first_subcarrier = n_idft.saturating_sub(m_bins) / 2;
        let cfg = Self {
            n_idft,
            m_bins,
            cp_len,
            first_subcarrier,
            sample_rate_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 2048-point IDFT, 1200 occupied subcarriers, 144-sample CP at 30.72 Msps.
    pub fn nr_default() -> Self {
        Self::new(2048, 1200, 144, 30.72e6).expect("default OFDM config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_idft == 0 || self.m_bins == 0 {
            return Err(Error::invalid("n_idft and m_bins must be positive"));
        }
        if self.m_bins > self.n_idft {
            return Err(Error::invalid(format!(
                "m_bins ({}) exceeds n_idft ({})",
                self.m_bins, self.n_idft
            )));
        }
        if self.first_subcarrier + self.m_bins > self.n_idft {
            return Err(Error::invalid(format!(
                "subcarriers {}..{} do not fit in an IDFT of size {}",
                self.first_subcarrier,
                self.first_subcarrier + self.m_bins,
                self.n_idft
            )));
        }
        if self.cp_len >= self.n_idft {
            return Err(Error::invalid(format!(
                "cp_len ({}) must be shorter than n_idft ({})",
                self.cp_len, self.n_idft
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample_rate_hz must be positive"));
        }
        Ok(())
    }

    pub fn symbol_len(&self) -> usize {
        self.n_idft + self.cp_len
    }

    /// Time between adjacent bins of the DFT-spread symbol, `N·T_sample/M`.
    pub fn t_spacing_s(&self) -> f64 {
        self.n_idft as f64 / (self.sample_rate_hz * self.m_bins as f64)
    }

    /// Absolute IDFT index of occupied subcarrier `j`.
    pub fn subcarrier_index(&self, j: usize) -> usize {
        self.first_subcarrier + j
    }
}

fn scale(v: &mut [Complex64]) {
    let s = 1.0 / (v.len() as f64).sqrt();
    v.iter_mut().for_each(|x| *x *= s);
}

/// Unitary forward DFT.
pub fn dft(v: &[Complex64]) -> Result<Vec<Complex64>> {
    transform(v, false)
}

/// Unitary inverse DFT.
pub fn idft(v: &[Complex64]) -> Result<Vec<Complex64>> {
    transform(v, true)
}

fn transform(v: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    if v.is_empty() {
        return Err(Error::invalid("transform of an empty vector"));
    }
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(v.len())
    } else {
        planner.plan_fft_forward(v.len())
    };
    let mut out = v.to_vec();
    plan.process(&mut out);
    scale(&mut out);
    Ok(out)
}

/// Planned transforms for one [`OfdmConfig`]. Cheap to share across threads.
#[derive(Clone)]
pub struct Modem {
    cfg: OfdmConfig,
    fwd_n: Arc<dyn Fft<f64>>,
    inv_n: Arc<dyn Fft<f64>>,
    fwd_m: Arc<dyn Fft<f64>>,
    inv_m: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Modem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Modem").field("cfg", &self.cfg).finish()
    }
}

impl Modem {
    pub fn new(cfg: OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            fwd_n: planner.plan_fft_forward(cfg.n_idft),
            inv_n: planner.plan_fft_inverse(cfg.n_idft),
            fwd_m: planner.plan_fft_forward(cfg.m_bins),
            inv_m: planner.plan_fft_inverse(cfg.m_bins),
            cfg,
        })
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.cfg
    }

    fn check_len(&self, got: usize, want: usize, what: &str) -> Result<()> {
        if got != want {
            return Err(Error::invalid(format!("{what}: expected {want} samples, got {got}")));
        }
        Ok(())
    }

    /// DFT-spread OFDM symbol with cyclic prefix, length `n_idft + cp_len`.
    pub fn modulate(&self, bins: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(bins.len(), self.cfg.m_bins, "modulate")?;
        let mut spread = bins.to_vec();
        self.fwd_m.process(&mut spread);
        scale(&mut spread);
        Ok(self.subcarriers_to_time(&spread))
    }

    /// Recover the bins of a CP-stripped DFT-spread symbol.
    pub fn demodulate(&self, body: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut sc = self.demodulate_ofdm(body)?;
        self.inv_m.process(&mut sc);
        scale(&mut sc);
        Ok(sc)
    }

    /// Plain OFDM symbol with cyclic prefix: subcarrier values straight into the IDFT.
    pub fn modulate_ofdm(&self, subcarriers: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(subcarriers.len(), self.cfg.m_bins, "modulate_ofdm")?;
        Ok(self.subcarriers_to_time(subcarriers))
    }

    /// Occupied subcarrier values of a CP-stripped plain OFDM symbol.
    pub fn demodulate_ofdm(&self, body: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(body.len(), self.cfg.n_idft, "demodulate")?;
        let mut grid = body.to_vec();
        self.fwd_n.process(&mut grid);
        scale(&mut grid);
        let first = self.cfg.first_subcarrier;
        Ok(grid[first..first + self.cfg.m_bins].to_vec())
    }

    /// Drop the cyclic prefix of a received symbol.
    pub fn strip_cp<'a>(&self, symbol: &'a [Complex64]) -> Result<&'a [Complex64]> {
        self.check_len(symbol.len(), self.cfg.symbol_len(), "strip_cp")?;
        Ok(&symbol[self.cfg.cp_len..])
    }

    fn subcarriers_to_time(&self, subcarriers: &[Complex64]) -> Vec<Complex64> {
        let n = self.cfg.n_idft;
        let cp = self.cfg.cp_len;
        let mut out = vec![ZERO; cp + n];
        let body = &mut out[cp..];
        let first = self.cfg.first_subcarrier;
        body[first..first + subcarriers.len()].copy_from_slice(subcarriers);
        self.inv_n.process(body);
        scale(body);
        let (prefix, body) = out.split_at_mut(cp);
        prefix.copy_from_slice(&body[n - cp..]);
        out
    }
}

/// Peak-to-mean envelope power ratio of one symbol, in dB.
///
/// The continuous-time envelope is approximated by a zero-padded IDFT that is
/// `oversample` times longer than the symbol. The mean envelope power is the
/// full-occupancy value `P_tx = M / N_IDFT`, so frames with `‖s‖² = M` are
/// measured against their own average power.
pub struct PmeprMeter {
    modem: Modem,
    oversample: usize,
    padded: Arc<dyn Fft<f64>>,
}

impl PmeprMeter {
    pub const DEFAULT_OVERSAMPLE: usize = 4;

    pub fn new(modem: Modem, oversample: usize) -> Result<Self> {
        if oversample < 4 {
            return Err(Error::invalid(format!("oversample must be at least 4, got {oversample}")));
        }
        let padded = FftPlanner::new().plan_fft_inverse(modem.cfg.n_idft * oversample);
        Ok(Self {
            modem,
            oversample,
            padded,
        })
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    /// PMEPR of a DFT-spread symbol carrying `bins`.
    pub fn dft_spread_db(&self, bins: &[Complex64]) -> Result<f64> {
        self.modem.check_len(bins.len(), self.modem.cfg.m_bins, "pmepr")?;
        let mut spread = bins.to_vec();
        self.modem.fwd_m.process(&mut spread);
        scale(&mut spread);
        Ok(self.subcarrier_db(&spread))
    }

    /// PMEPR of a plain OFDM symbol carrying `subcarriers`.
    pub fn ofdm_db(&self, subcarriers: &[Complex64]) -> Result<f64> {
        self.modem.check_len(subcarriers.len(), self.modem.cfg.m_bins, "pmepr")?;
        Ok(self.subcarrier_db(subcarriers))
    }

    fn subcarrier_db(&self, subcarriers: &[Complex64]) -> f64 {
        let cfg = &self.modem.cfg;
        let mut grid = vec![ZERO; cfg.n_idft * self.oversample];
        grid[cfg.first_subcarrier..cfg.first_subcarrier + cfg.m_bins].copy_from_slice(subcarriers);
        self.padded.process(&mut grid);
        // Unnormalized inverse sums the subcarriers; 1/√N gives the unitary envelope.
        let peak = grid.iter().map(|x| x.norm_sqr()).fold(0.0, f64::max) / cfg.n_idft as f64;
        let p_tx = cfg.m_bins as f64 / cfg.n_idft as f64;
        10.0 * (peak / p_tx).log10()
    }
}

/// One-shot PMEPR of a DFT-spread symbol. Plans transforms on every call.
pub fn pmepr_db(bins: &[Complex64], cfg: &OfdmConfig, oversample: usize) -> Result<f64> {
    PmeprMeter::new(Modem::new(cfg.clone())?, oversample)?.dft_spread_db(bins)
}
