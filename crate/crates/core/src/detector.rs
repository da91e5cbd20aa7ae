//! Non-coherent energy detection of the majority vote.
//!
//! For vote `i` the server sums `|ŝ|²` over the whole `m_pulse + m_gap` bin
//! window of the plus slot and of the minus slot, then takes the sign of the
//! difference. No channel estimate is involved.

use rand::Rng;

use crate::ppm::{PpmLayout, SlotPos, VoteAssignment};
use crate::{Complex64, Error, Result, SignVector};

/// Relative size below which an energy difference counts as a tie.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyPair {
    pub e_plus: f64,
    pub e_minus: f64,
}

impl EnergyPair {
    pub fn delta(&self) -> f64 {
        self.e_plus - self.e_minus
    }

    /// `sign(Δ)`, with ties broken uniformly at random.
    pub fn decide<R: Rng + ?Sized>(&self, rng: &mut R) -> i8 {
        let delta = self.delta();
        if delta.abs() <= TIE_TOLERANCE * (self.e_plus + self.e_minus) {
            crate::sign_or_random(0.0, rng)
        } else {
            crate::sign_or_random(delta, rng)
        }
    }
}

fn window_energy(frames: &[Vec<Complex64>], layout: &PpmLayout, pos: SlotPos) -> Result<f64> {
    let frame = frames.get(pos.symbol).ok_or_else(|| {
        Error::invalid(format!(
            "vote refers to symbol {} but only {} frames were received",
            pos.symbol,
            frames.len()
        ))
    })?;
    let start = layout.first_bin(pos.slot);
    let end = start + layout.slot_width();
    let window = frame.get(start..end).ok_or_else(|| {
        Error::invalid(format!(
            "window {start}..{end} exceeds frame of {} bins",
            frame.len()
        ))
    })?;
    Ok(window.iter().map(|x| x.norm_sqr()).sum())
}

pub fn vote_energies(
    frames: &[Vec<Complex64>],
    map: &VoteAssignment,
    layout: &PpmLayout,
    i: usize,
) -> Result<EnergyPair> {
    if i >= map.q() {
        return Err(Error::invalid(format!(
            "gradient index {i} out of range for {} votes",
            map.q()
        )));
    }
    Ok(EnergyPair {
        e_plus: window_energy(frames, layout, map.plus(i))?,
        e_minus: window_energy(frames, layout, map.minus(i))?,
    })
}

pub fn detect_mv<R: Rng + ?Sized>(
    frames: &[Vec<Complex64>],
    map: &VoteAssignment,
    layout: &PpmLayout,
    rng: &mut R,
) -> Result<SignVector> {
    let signs = (0..map.q())
        .map(|i| vote_energies(frames, map, layout, i).map(|e| e.decide(rng)))
        .collect::<Result<Vec<_>>>()?;
    SignVector::new(signs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{Modem, OfdmConfig};
    use crate::ppm::{compute_layout, default_vote_map, draw_dithers, encode_votes, DitherVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn loopback(frames: &[Vec<Complex64>], modem: &Modem) -> Vec<Vec<Complex64>> {
        frames
            .iter()
            .map(|f| {
                let x = modem.modulate(f).unwrap();
                modem.demodulate(modem.strip_cp(&x).unwrap()).unwrap()
            })
            .collect()
    }

    #[test]
    fn noiseless_loopback_energies() {
        let modem = Modem::new(OfdmConfig::nr_default()).unwrap();
        let l = compute_layout(1200, 1, 7, 1).unwrap();
        let map = default_vote_map(&l);
        let tx = encode_votes(&SignVector::new(vec![1]).unwrap(), &map, &l, &DitherVector::ones(1)).unwrap();
        let e = vote_energies(&loopback(&tx, &modem), &map, &l, 0).unwrap();
        assert!((e.e_plus - 16.0).abs() < 1e-9, "{e:?}");
        assert!(e.e_minus < 1e-20);
    }

    #[test]
    fn zero_frames_have_zero_energy() {
        let l = compute_layout(1200, 1, 7, 10).unwrap();
        let map = default_vote_map(&l);
        let frames = vec![vec![Complex64::new(0.0, 0.0); 1200]];
        let e = vote_energies(&frames, &map, &l, 9).unwrap();
        assert_eq!((e.e_plus, e.e_minus), (0.0, 0.0));
    }

    #[test]
    fn out_of_range_requests_fail() {
        let l = compute_layout(1200, 1, 7, 100).unwrap();
        let map = default_vote_map(&l);
        let one_frame = vec![vec![Complex64::new(0.0, 0.0); 1200]];
        assert!(vote_energies(&one_frame, &map, &l, 100).is_err());
        // Vote 80 lives in the second symbol.
        assert!(vote_energies(&one_frame, &map, &l, 80).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(detect_mv(&one_frame, &map, &l, &mut rng).is_err());
    }

    #[test]
    fn noise_energy_per_window() {
        let l = compute_layout(1200, 1, 7, 75).unwrap();
        let map = default_vote_map(&l);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sigma2 = 0.5;
        let draws = 10_000;
        let (mut sp, mut sm) = (0.0, 0.0);
        for d in 0..draws {
            let frame: Vec<Complex64> = (0..1200)
                .map(|_| {
                    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * (sigma2 / 2.0f64).sqrt()
                })
                .collect();
            let e = vote_energies(&[frame], &map, &l, d % 75).unwrap();
            sp += e.e_plus;
            sm += e.e_minus;
        }
        let want = 8.0 * sigma2;
        for got in [sp / draws as f64, sm / draws as f64] {
            assert!((got / want - 1.0).abs() < 0.05, "{got} vs {want}");
        }
    }

    #[test]
    fn ties_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tie = EnergyPair { e_plus: 3.0, e_minus: 3.0 };
        let n = 10_000;
        let plus = (0..n).filter(|_| tie.decide(&mut rng) == 1).count();
        assert!((plus as f64 / n as f64 - 0.5).abs() < 0.02);
        let zero = EnergyPair { e_plus: 0.0, e_minus: 0.0 };
        let plus = (0..n).filter(|_| zero.decide(&mut rng) == 1).count();
        assert!((plus as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn noiseless_single_device_recovers_signs() {
        let modem = Modem::new(OfdmConfig::nr_default()).unwrap();
        let l = compute_layout(1200, 3, 7, 200).unwrap();
        let map = default_vote_map(&l);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let signs = SignVector::random(200, &mut rng);
        let d = draw_dithers(&mut rng, 200);
        let rx = loopback(&encode_votes(&signs, &map, &l, &d).unwrap(), &modem);
        assert_eq!(detect_mv(&rx, &map, &l, &mut rng).unwrap(), signs);
    }

    // Unit channels and QPSK dithers, 3 devices for +1 and 1 for -1. Enumerating
    // the 64 dither patterns of the plus side against |r|² = 1 on the minus side:
    // 28 patterns give |Σr|² > 1 and 36 give exactly 1 (a tie), so
    // P(+1) = 28/64 + 36/128 = 23/32.
    #[test]
    fn unit_channel_split_matches_enumeration() {
        let modem = Modem::new(OfdmConfig::nr_default()).unwrap();
        let l = compute_layout(1200, 1, 7, 1).unwrap();
        let map = default_vote_map(&l);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let trials = 10_000;
        let mut plus = 0;
        for _ in 0..trials {
            let mut sum = vec![vec![Complex64::new(0.0, 0.0); 1200]];
            for k in 0..4 {
                let s = SignVector::new(vec![if k < 3 { 1 } else { -1 }]).unwrap();
                let f = encode_votes(&s, &map, &l, &draw_dithers(&mut rng, 1)).unwrap();
                sum[0].iter_mut().zip(&f[0]).for_each(|(a, b)| *a += b);
            }
            let rx = loopback(&sum, &modem);
            if detect_mv(&rx, &map, &l, &mut rng).unwrap().as_slice()[0] == 1 {
                plus += 1;
            }
        }
        let p = plus as f64 / trials as f64;
        let want = 23.0 / 32.0;
        let se = (want * (1.0 - want) / trials as f64).sqrt();
        assert!((p - want).abs() < 3.0 * se, "{p} vs {want}");
    }

    proptest! {
        #[test]
        fn decision_is_scale_invariant(seed in any::<u64>(), re in -5.0f64..5.0, im in -5.0f64..5.0) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let l = compute_layout(1200, 1, 7, 150).unwrap();
            let map = default_vote_map(&l);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames: Vec<Vec<Complex64>> = (0..2)
                .map(|_| (0..1200).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect())
                .collect();
            let c = Complex64::new(re, im);
            let scaled: Vec<Vec<Complex64>> = frames.iter().map(|f| f.iter().map(|x| x * c).collect()).collect();
            let a = detect_mv(&frames, &map, &l, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let b = detect_mv(&scaled, &map, &l, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn windows_are_disjoint(seed in any::<u64>(), i in 0usize..150) {
            let l = compute_layout(1200, 2, 6, 150).unwrap();
            let map = default_vote_map(&l);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let signs = SignVector::random(150, &mut rng);
            let d = draw_dithers(&mut rng, 150);
            let frames = encode_votes(&signs, &map, &l, &d).unwrap();
            let base = vote_energies(&frames, &map, &l, i).unwrap();
            // Rewrite every other vote: vote i's energies must not move.
            let mut other = SignVector::random(150, &mut rng).as_slice().to_vec();
            other[i] = signs.as_slice()[i];
            let mut d2 = draw_dithers(&mut rng, 150).as_slice().to_vec();
            d2[i] = d.as_slice()[i];
            let frames2 = encode_votes(&SignVector::new(other).unwrap(), &map, &l, &DitherVector::from_values(d2)).unwrap();
            prop_assert_eq!(base, vote_energies(&frames2, &map, &l, i).unwrap());
        }
    }
}
