//! Pulse-position encoding of gradient signs on DFT-spread OFDM bins.
//!
//! A symbol of `M` bins is cut into slots of `m_pulse + m_gap` bins. A vote
//! owns two slots: the pulse goes into the plus slot when the sign is +1 and
//! into the minus slot otherwise. The `m_gap` empty bins after each pulse
//! absorb delay spread and timing error.

use rand::Rng;

use crate::{Complex64, Error, Result, SignVector};

/// Bin budget for carrying `q` votes.
#[derive(Debug, Clone, PartialEq)]
pub struct PpmLayout {
    pub m_bins: usize,
    pub m_pulse: usize,
    pub m_gap: usize,
    pub m_vote: usize,
    pub n_symbols: usize,
    pub e_s: f64,
    pub q: usize,
}

impl PpmLayout {
    pub fn slot_width(&self) -> usize {
        self.m_pulse + self.m_gap
    }

    pub fn slots_per_symbol(&self) -> usize {
        2 * self.m_vote
    }

    pub fn first_bin(&self, slot: usize) -> usize {
        slot * self.slot_width()
    }
}

pub fn compute_layout(m_bins: usize, m_pulse: usize, m_gap: usize, q: usize) -> Result<PpmLayout> {
    if m_pulse == 0 {
        return Err(Error::invalid("m_pulse must be at least 1"));
    }
    if q == 0 {
        return Err(Error::invalid("q must be at least 1"));
    }
    let pair = 2 * (m_pulse + m_gap);
    if pair > m_bins {
        return Err(Error::invalid(format!(
            "one vote needs 2·(m_pulse + m_gap) = {pair} bins but the symbol has {m_bins}"
        )));
    }
    let m_vote = m_bins / pair;
    Ok(PpmLayout {
        m_bins,
        m_pulse,
        m_gap,
        m_vote,
        n_symbols: q.div_ceil(m_vote),
        e_s: pair as f64 / m_pulse as f64,
        q,
    })
}

/// Smallest guard, in bins, that covers `t_chn_s + t_sync_s`.
pub fn min_guard_bins(t_chn_s: f64, t_sync_s: f64, t_spacing_s: f64) -> usize {
    let ratio = (t_chn_s + t_sync_s) / t_spacing_s;
    // Absorb floating-point noise on exact multiples.
    (ratio - 1e-9).ceil().max(0.0) as usize
}

pub fn check_guard(m_gap: usize, t_chn_s: f64, t_sync_s: f64, t_spacing_s: f64) -> Result<()> {
    let min_gap = min_guard_bins(t_chn_s, t_sync_s, t_spacing_s);
    if m_gap < min_gap {
        return Err(Error::GuardTooShort { m_gap, min_gap });
    }
    Ok(())
}

/// A (DFT-s-OFDM symbol, slot) position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotPos {
    pub symbol: usize,
    pub slot: usize,
}

/// Where each gradient index places its plus and minus pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteAssignment {
    plus: Vec<SlotPos>,
    minus: Vec<SlotPos>,
    n_symbols: usize,
    slots_per_symbol: usize,
}

impl VoteAssignment {
    /// A general mapping. All `2q` positions must be distinct and in range.
    pub fn new(plus: Vec<SlotPos>, minus: Vec<SlotPos>, n_symbols: usize, slots_per_symbol: usize) -> Result<Self> {
        if plus.len() != minus.len() {
            return Err(Error::invalid("plus and minus position lists differ in length"));
        }
        let mut seen = std::collections::HashSet::with_capacity(2 * plus.len());
        for p in plus.iter().chain(&minus) {
            if p.symbol >= n_symbols || p.slot >= slots_per_symbol {
                return Err(Error::invalid(format!(
                    "position {p:?} outside {n_symbols} symbols × {slots_per_symbol} slots"
                )));
            }
            if !seen.insert(*p) {
                return Err(Error::invalid(format!("position {p:?} used twice")));
            }
        }
        Ok(Self {
            plus,
            minus,
            n_symbols,
            slots_per_symbol,
        })
    }

    pub fn q(&self) -> usize {
        self.plus.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn plus(&self, i: usize) -> SlotPos {
        self.plus[i]
    }

    pub fn minus(&self, i: usize) -> SlotPos {
        self.minus[i]
    }

    fn check_fits(&self, layout: &PpmLayout) -> Result<()> {
        if self.slots_per_symbol > layout.slots_per_symbol() {
            return Err(Error::invalid(format!(
                "mapping uses {} slots per symbol, layout has {}",
                self.slots_per_symbol,
                layout.slots_per_symbol()
            )));
        }
        Ok(())
    }
}

/// Adjacent-slot mapping: vote `i = t·m_vote + j` uses slots `2j` (minus) and
/// `2j + 1` (plus) of symbol `t`.
pub fn default_vote_map(layout: &PpmLayout) -> VoteAssignment {
    let (plus, minus) = (0..layout.q)
        .map(|i| {
            let symbol = i / layout.m_vote;
            let j = i % layout.m_vote;
            (
                SlotPos { symbol, slot: 2 * j + 1 },
                SlotPos { symbol, slot: 2 * j },
            )
        })
        .unzip();
    VoteAssignment {
        plus,
        minus,
        n_symbols: layout.n_symbols,
        slots_per_symbol: layout.slots_per_symbol(),
    }
}

/// Alternating-sign pulse `√E_s · [1, −1, 1, …]` of length `m_pulse`.
pub fn pulse_weights(layout: &PpmLayout) -> Vec<Complex64> {
    let amp = layout.e_s.sqrt();
    (0..layout.m_pulse)
        .map(|k| Complex64::new(if k % 2 == 0 { amp } else { -amp }, 0.0))
        .collect()
}

/// Unit-modulus QPSK dithers, one per gradient index.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherVector(Vec<Complex64>);

impl DitherVector {
    pub fn ones(q: usize) -> Self {
        Self(vec![Complex64::new(1.0, 0.0); q])
    }

    pub fn from_values(values: Vec<Complex64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The four QPSK points `e^{jπ(2k+1)/4}`.
pub fn qpsk_point(k: u8) -> Complex64 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match k & 3 {
        0 => Complex64::new(h, h),
        1 => Complex64::new(-h, h),
        2 => Complex64::new(-h, -h),
        _ => Complex64::new(h, -h),
    }
}

pub fn draw_dithers<R: Rng + ?Sized>(rng: &mut R, q: usize) -> DitherVector {
    DitherVector((0..q).map(|_| qpsk_point(rng.random_range(0..4u8))).collect())
}

/// Bin frames for one device: `n_symbols` vectors of `m_bins` values.
pub fn encode_votes(
    signs: &SignVector,
    map: &VoteAssignment,
    layout: &PpmLayout,
    dither: &DitherVector,
) -> Result<Vec<Vec<Complex64>>> {
    if signs.len() != map.q() {
        return Err(Error::invalid(format!(
            "{} signs for a mapping of {} votes",
            signs.len(),
            map.q()
        )));
    }
    if dither.len() != signs.len() {
        return Err(Error::invalid(format!(
            "{} dithers for {} votes",
            dither.len(),
            signs.len()
        )));
    }
    map.check_fits(layout)?;
    let pulse = pulse_weights(layout);
    let mut frames = vec![vec![Complex64::new(0.0, 0.0); layout.m_bins]; map.n_symbols()];
    for (i, (&sign, &r)) in signs.as_slice().iter().zip(dither.as_slice()).enumerate() {
        let pos = if sign > 0 { map.plus(i) } else { map.minus(i) };
        let start = layout.first_bin(pos.slot);
        let frame = &mut frames[pos.symbol];
        for (bin, p) in frame[start..start + layout.m_pulse].iter_mut().zip(&pulse) {
            *bin = p * r;
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_symbol_counts() {
        for (m_pulse, m_vote, n_symbols) in [(1, 75, 1642), (3, 60, 2052), (8, 40, 3078), (13, 30, 4103)] {
            let l = compute_layout(1200, m_pulse, 7, 123_090).unwrap();
            assert_eq!((l.m_vote, l.n_symbols), (m_vote, n_symbols), "m_pulse={m_pulse}");
        }
    }

    #[test]
    fn layout_rejects_bad_arguments() {
        assert!(compute_layout(1200, 0, 7, 10).is_err());
        assert!(compute_layout(1200, 1, 7, 0).is_err());
        assert!(compute_layout(15, 1, 7, 10).is_err());
        assert!(compute_layout(16, 1, 7, 10).is_ok());
    }

    #[test]
    fn guard_condition() {
        let spacing = 2048.0 / (30.72e6 * 1200.0);
        assert_eq!(min_guard_bins(172.4e-9, 55.6e-9, spacing), 5);
        assert!(check_guard(7, 172.4e-9, 55.6e-9, spacing).is_ok());
        match check_guard(3, 172.4e-9, 55.6e-9, spacing) {
            Err(Error::GuardTooShort { m_gap: 3, min_gap: 5 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(min_guard_bins(0.0, 0.0, spacing), 0);
        assert_eq!(min_guard_bins(2.0, 0.0, 1.0), 2);
    }

    #[test]
    fn default_map_positions() {
        let l = compute_layout(1200, 1, 7, 300).unwrap();
        let map = default_vote_map(&l);
        assert_eq!(map.plus(0), SlotPos { symbol: 0, slot: 1 });
        assert_eq!(map.minus(0), SlotPos { symbol: 0, slot: 0 });
        assert_eq!(map.plus(75), SlotPos { symbol: 1, slot: 1 });
        assert_eq!(map.minus(75), SlotPos { symbol: 1, slot: 0 });
        // Exhaustive distinctness check through the validating constructor.
        let plus = (0..300).map(|i| map.plus(i)).collect();
        let minus = (0..300).map(|i| map.minus(i)).collect();
        assert!(VoteAssignment::new(plus, minus, l.n_symbols, l.slots_per_symbol()).is_ok());
    }

    #[test]
    fn general_mapping_rejects_collisions() {
        let a = SlotPos { symbol: 0, slot: 0 };
        let b = SlotPos { symbol: 0, slot: 1 };
        assert!(VoteAssignment::new(vec![a], vec![a], 1, 2).is_err());
        assert!(VoteAssignment::new(vec![a], vec![SlotPos { symbol: 1, slot: 0 }], 1, 2).is_err());
        // Votes split across different symbols are fine.
        let m = VoteAssignment::new(vec![a], vec![SlotPos { symbol: 1, slot: 0 }], 2, 2).unwrap();
        assert_eq!(m.q(), 1);
        assert!(VoteAssignment::new(vec![a, b], vec![b], 1, 2).is_err());
    }

    #[test]
    fn pulse_shapes() {
        let p = pulse_weights(&compute_layout(1200, 1, 7, 1).unwrap());
        assert_eq!(p, vec![Complex64::new(4.0, 0.0)]);
        let p = pulse_weights(&compute_layout(1200, 2, 6, 1).unwrap());
        let r8 = 8f64.sqrt();
        assert!((p[0] - Complex64::new(r8, 0.0)).norm() < 1e-15);
        assert!((p[1] - Complex64::new(-r8, 0.0)).norm() < 1e-15);
        for (mp, mg) in [(1, 7), (2, 6), (5, 3), (13, 7)] {
            let l = compute_layout(1200, mp, mg, 1).unwrap();
            let e: f64 = pulse_weights(&l).iter().map(|x| x.norm_sqr()).sum();
            assert!((e - 2.0 * (mp + mg) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn single_vote_lands_in_its_slot() {
        let l = compute_layout(1200, 1, 7, 1).unwrap();
        let map = default_vote_map(&l);
        let d = DitherVector::ones(1);
        let plus = encode_votes(&SignVector::new(vec![1]).unwrap(), &map, &l, &d).unwrap();
        assert_eq!(plus.len(), 1);
        for (b, v) in plus[0].iter().enumerate() {
            let want = if b == 8 { 4.0 } else { 0.0 };
            assert_eq!(*v, Complex64::new(want, 0.0), "bin {b}");
        }
        let minus = encode_votes(&SignVector::new(vec![-1]).unwrap(), &map, &l, &d).unwrap();
        assert_eq!(minus[0][0], Complex64::new(4.0, 0.0));
        assert_eq!(minus[0].iter().filter(|v| v.norm() > 0.0).count(), 1);
    }

    #[test]
    fn encode_checks_lengths() {
        let l = compute_layout(1200, 1, 7, 3).unwrap();
        let map = default_vote_map(&l);
        let s = SignVector::new(vec![1, -1]).unwrap();
        assert!(encode_votes(&s, &map, &l, &DitherVector::ones(2)).is_err());
        let s = SignVector::new(vec![1, -1, 1]).unwrap();
        assert!(encode_votes(&s, &map, &l, &DitherVector::ones(2)).is_err());
    }

    #[test]
    fn dithers_are_uniform_qpsk() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let d = draw_dithers(&mut rng, n);
        let mut counts = [0usize; 4];
        for v in d.as_slice() {
            assert!((v.norm() - 1.0).abs() < 1e-15);
            let k = (0..4u8).find(|k| (qpsk_point(*k) - v).norm() < 1e-12).expect("QPSK point");
            counts[k as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
        let again = draw_dithers(&mut ChaCha8Rng::seed_from_u64(17), n);
        assert_eq!(d, again);
    }

    proptest! {
        #[test]
        fn encoded_frames_respect_the_energy_budget(
            seed in any::<u64>(),
            m_pulse in 1usize..14,
            m_gap in 0usize..9,
            q in 1usize..400,
        ) {
            let l = compute_layout(1200, m_pulse, m_gap, q).unwrap();
            let map = default_vote_map(&l);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let signs = SignVector::random(q, &mut rng);
            let d = draw_dithers(&mut rng, q);
            let frames = encode_votes(&signs, &map, &l, &d).unwrap();
            prop_assert_eq!(frames.len(), l.n_symbols);
            let full = 2.0 * (l.m_vote * (m_pulse + m_gap)) as f64;
            for (t, f) in frames.iter().enumerate() {
                let votes = (q - t * l.m_vote).min(l.m_vote);
                let e: f64 = f.iter().map(|x| x.norm_sqr()).sum();
                prop_assert!((e - votes as f64 * m_pulse as f64 * l.e_s).abs() < 1e-9);
                prop_assert!(e <= full + 1e-9 && full <= 1200.0);
                prop_assert_eq!(f.iter().filter(|x| x.norm() > 0.0).count(), votes * m_pulse);
            }
            // Flipping all signs moves each pulse to the other slot of its pair.
            let flipped = encode_votes(&signs.negated(), &map, &l, &d).unwrap();
            for i in 0..q {
                let (on, off) = if signs.as_slice()[i] > 0 { (map.plus(i), map.minus(i)) } else { (map.minus(i), map.plus(i)) };
                prop_assert!(frames[on.symbol][l.first_bin(on.slot)].norm() > 0.0);
                prop_assert!(flipped[off.symbol][l.first_bin(off.slot)].norm() > 0.0);
                prop_assert!(flipped[on.symbol][l.first_bin(on.slot)].norm() == 0.0);
            }
        }
    }
}
