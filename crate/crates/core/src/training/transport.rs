//! How the edge server obtains the majority vote from the devices' sign vectors.

use rayon::prelude::*;

use super::ideal_mv;
use crate::channel::{add_noise, apply_channel, ChannelModel, ChannelRealization};
use crate::detector::detect_mv;
use crate::dsp::Modem;
use crate::obda::{obda_detect, obda_encode, obda_symbols, TciConfig};
use crate::ppm::{default_vote_map, draw_dithers, encode_votes, PpmLayout, VoteAssignment};
use crate::rng::{Purpose, SeedTree};
use crate::{Complex64, Error, Result, SignVector};

/// Per-device propagation model.
#[derive(Debug, Clone)]
pub enum LinkChannel {
    /// Unit gain, no delay.
    Identity,
    /// Fresh tapped-delay-line draw and timing offset per device per round.
    Faded(ChannelModel),
}

impl LinkChannel {
    fn draw(&self, seeds: &SeedTree, round: u64, device: u64) -> ChannelRealization {
        match self {
            LinkChannel::Identity => ChannelRealization::identity(),
            LinkChannel::Faded(model) => model.draw(&mut seeds.stream(Purpose::Channel, round, device)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PpmLink {
    pub modem: Modem,
    pub layout: PpmLayout,
    pub map: VoteAssignment,
    pub channel: LinkChannel,
    pub sigma_n_sq: f64,
}

impl PpmLink {
    pub fn new(modem: Modem, layout: PpmLayout, channel: LinkChannel, sigma_n_sq: f64) -> Result<Self> {
        if layout.m_bins != modem.config().m_bins {
            return Err(Error::config(format!(
                "layout assumes {} bins, modem has {}",
                layout.m_bins,
                modem.config().m_bins
            )));
        }
        check_noise(sigma_n_sq)?;
        let map = default_vote_map(&layout);
        Ok(Self {
            modem,
            layout,
            map,
            channel,
            sigma_n_sq,
        })
    }

    /// Demodulated bin frames at the server for one round.
    pub fn receive(&self, round: u64, votes: &[SignVector], seeds: &SeedTree) -> Result<Vec<Vec<Complex64>>> {
        let q = self.layout.q;
        let devices: Vec<(Vec<Vec<Complex64>>, ChannelRealization)> = votes
            .par_iter()
            .enumerate()
            .map(|(k, signs)| {
                let dither = draw_dithers(&mut seeds.stream(Purpose::Dither, round, k as u64), q);
                let frames = encode_votes(signs, &self.map, &self.layout, &dither)?;
                Ok((frames, self.channel.draw(seeds, round, k as u64)))
            })
            .collect::<Result<_>>()?;
        let mut noise = seeds.stream(Purpose::Noise, round, 0);
        (0..self.layout.n_symbols)
            .map(|m| {
                let rx = superpose_devices(&self.modem, &devices, m, false)?;
                receive_symbol(&self.modem, rx, self.sigma_n_sq, &mut noise, false)
            })
            .collect()
    }

    pub fn aggregate(&self, round: u64, votes: &[SignVector], seeds: &SeedTree) -> Result<SignVector> {
        let frames = self.receive(round, votes, seeds)?;
        detect_mv(&frames, &self.map, &self.layout, &mut seeds.stream(Purpose::Detect, round, 0))
    }
}

#[derive(Debug, Clone)]
pub struct ObdaLink {
    pub modem: Modem,
    pub q: usize,
    pub channel: LinkChannel,
    pub tci: TciConfig,
    pub use_tci: bool,
    pub sigma_n_sq: f64,
}

impl ObdaLink {
    pub fn new(modem: Modem, q: usize, channel: LinkChannel, tci: TciConfig, use_tci: bool, sigma_n_sq: f64) -> Result<Self> {
        check_noise(sigma_n_sq)?;
        if q == 0 {
            return Err(Error::config("q must be positive"));
        }
        Ok(Self {
            modem,
            q,
            channel,
            tci,
            use_tci,
            sigma_n_sq,
        })
    }

    pub fn n_symbols(&self) -> usize {
        obda_symbols(self.q, self.modem.config().m_bins)
    }

    pub fn aggregate(&self, round: u64, votes: &[SignVector], seeds: &SeedTree) -> Result<SignVector> {
        let cfg = self.modem.config();
        let devices: Vec<(Vec<Vec<Complex64>>, ChannelRealization)> = votes
            .par_iter()
            .enumerate()
            .map(|(k, signs)| {
                let chn = self.channel.draw(seeds, round, k as u64);
                // Genie CSI: exact multipath taps, blind to the arrival offset.
                let h = chn.multipath_response(cfg);
                let frames = obda_encode(signs, cfg.m_bins, &h, &self.tci, self.use_tci)?;
                Ok((frames, chn))
            })
            .collect::<Result<_>>()?;
        let mut noise = seeds.stream(Purpose::Noise, round, 0);
        let frames = (0..self.n_symbols())
            .map(|m| {
                let rx = superpose_devices(&self.modem, &devices, m, true)?;
                receive_symbol(&self.modem, rx, self.sigma_n_sq, &mut noise, true)
            })
            .collect::<Result<Vec<_>>>()?;
        obda_detect(&frames, self.q, &mut seeds.stream(Purpose::Detect, round, 0))
    }
}

fn check_noise(sigma_n_sq: f64) -> Result<()> {
    if !(sigma_n_sq.is_finite() && sigma_n_sq >= 0.0) {
        return Err(Error::config(format!("noise variance {sigma_n_sq} is not valid")));
    }
    Ok(())
}

/// Sum of every device's symbol `m` after its channel, in device order.
fn superpose_devices(
    modem: &Modem,
    devices: &[(Vec<Vec<Complex64>>, ChannelRealization)],
    m: usize,
    plain_ofdm: bool,
) -> Result<Vec<Complex64>> {
    let through: Vec<Vec<Complex64>> = devices
        .par_iter()
        .map(|(frames, chn)| {
            let x = if plain_ofdm {
                modem.modulate_ofdm(&frames[m])?
            } else {
                modem.modulate(&frames[m])?
            };
            Ok(apply_channel(&x, chn))
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![Complex64::new(0.0, 0.0); modem.config().symbol_len()];
    for y in &through {
        sum.iter_mut().zip(y).for_each(|(a, b)| *a += b);
    }
    Ok(sum)
}

fn receive_symbol(
    modem: &Modem,
    mut rx: Vec<Complex64>,
    sigma_n_sq: f64,
    noise: &mut crate::rng::StreamRng,
    plain_ofdm: bool,
) -> Result<Vec<Complex64>> {
    add_noise(&mut rx, sigma_n_sq, noise)?;
    let body = modem.strip_cp(&rx)?;
    if plain_ofdm {
        modem.demodulate_ofdm(body)
    } else {
        modem.demodulate(body)
    }
}

#[derive(Debug, Clone)]
pub enum Transport {
    /// Error-free majority vote.
    Ideal,
    Ppm(PpmLink),
    Obda(ObdaLink),
}

impl Transport {
    pub fn q(&self) -> Option<usize> {
        match self {
            Transport::Ideal => None,
            Transport::Ppm(l) => Some(l.layout.q),
            Transport::Obda(l) => Some(l.q),
        }
    }

    pub fn aggregate(&self, round: u64, votes: &[SignVector], seeds: &SeedTree) -> Result<SignVector> {
        match self {
            Transport::Ideal => ideal_mv(votes, &mut seeds.stream(Purpose::MajorityTie, round, 0)),
            Transport::Ppm(l) => l.aggregate(round, votes, seeds),
            Transport::Obda(l) => l.aggregate(round, votes, seeds),
        }
    }
}
