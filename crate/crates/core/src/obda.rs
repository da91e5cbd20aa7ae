//! One-bit digital aggregation (OBDA): the coherent baseline.
//!
//! Two gradient signs ride on one plain-OFDM subcarrier as a QPSK point, real
//! part first. With truncated channel inversion (TCI) each device pre-divides
//! by its own channel and mutes subcarriers whose gain is under the threshold.
//! The server reads the signs of the real and imaginary parts of the sum.

use rand::Rng;

use crate::{sign_or_random, Complex64, Error, Result, SignVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TciConfig {
    pub threshold: f64,
    pub power_scale: f64,
}

impl TciConfig {
    pub fn new(threshold: f64, power_scale: f64) -> Result<Self> {
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::invalid(format!("TCI threshold {threshold} must be non-negative")));
        }
        if !(power_scale.is_finite() && power_scale > 0.0) {
            return Err(Error::invalid(format!("TCI power scale {power_scale} must be positive")));
        }
        Ok(Self { threshold, power_scale })
    }

    /// Scale chosen so that a unit-power Rayleigh subcarrier transmits unit
    /// energy on average after inversion and truncation:
    /// `E[1{|h| ≥ t} / |h|²] = E1(t²)` for `|h|²` exponential with mean one.
    pub fn rayleigh_normalized(threshold: f64) -> Result<Self> {
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::invalid("power normalization needs a positive threshold"));
        }
        Self::new(threshold, 1.0 / exp_integral_e1(threshold * threshold).sqrt())
    }
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 is only defined here for x > 0");
    if x <= 1.0 {
        // -γ - ln x + Σ_{k≥1} (-1)^{k+1} x^k / (k·k!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..60 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -0.577_215_664_901_532_9 - x.ln() + sum
    } else {
        // Continued fraction, modified Lentz.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Symbols needed for `q` signs on `m_bins` subcarriers.
pub fn obda_symbols(q: usize, m_bins: usize) -> usize {
    q.div_ceil(2 * m_bins)
}

/// Subcarrier frames for one device.
///
/// `h_freq` holds the device's channel on the `m_bins` subcarriers and is only
/// read when `use_tci` is set. Without TCI the QPSK points go out unscaled.
pub fn obda_encode(
    signs: &SignVector,
    m_bins: usize,
    h_freq: &[Complex64],
    tci: &TciConfig,
    use_tci: bool,
) -> Result<Vec<Vec<Complex64>>> {
    if m_bins == 0 {
        return Err(Error::invalid("m_bins must be positive"));
    }
    if use_tci && h_freq.len() != m_bins {
        return Err(Error::invalid(format!(
            "channel response has {} values for {m_bins} subcarriers",
            h_freq.len()
        )));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let n_symbols = obda_symbols(signs.len(), m_bins);
    let mut frames = vec![vec![Complex64::new(0.0, 0.0); m_bins]; n_symbols];
    for (j, pair) in signs.as_slice().chunks(2).enumerate() {
        let re = pair[0] as f64 * h;
        let im = pair.get(1).map_or(0.0, |&b| b as f64 * h);
        let mut value = Complex64::new(re, im);
        let sc = j % m_bins;
        if use_tci {
            let g = h_freq[sc];
            value = if g.norm() >= tci.threshold && g.norm() > 0.0 {
                value / g * tci.power_scale
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        frames[j / m_bins][sc] = value;
    }
    Ok(frames)
}

/// Signs of the real and imaginary parts, in the packing order of [`obda_encode`].
pub fn obda_detect<R: Rng + ?Sized>(frames: &[Vec<Complex64>], q: usize, rng: &mut R) -> Result<SignVector> {
    let m_bins = frames.first().map_or(0, Vec::len);
    if frames.iter().any(|f| f.len() != m_bins) {
        return Err(Error::invalid("frames differ in length"));
    }
    if q > 2 * m_bins * frames.len() {
        return Err(Error::invalid(format!(
            "{q} signs do not fit in {} frames of {m_bins} subcarriers",
            frames.len()
        )));
    }
    let signs = (0..q)
        .map(|i| {
            let j = i / 2;
            let v = frames[j / m_bins][j % m_bins];
            sign_or_random(if i % 2 == 0 { v.re } else { v.im }, rng)
        })
        .collect();
    SignVector::new(signs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::complex_gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ideal_majority(votes: &[SignVector]) -> Vec<i32> {
        (0..votes[0].len())
            .map(|i| votes.iter().map(|v| v.as_slice()[i] as i32).sum())
            .collect()
    }

    #[test]
    fn e1_matches_quadrature() {
        // Substituting t = x·e^u turns the tail integral into ∫_0^∞ exp(-x e^u) du.
        for x in [0.01, 0.04, 0.5, 1.0, 1.5, 4.0] {
            let steps = 200_000;
            let upper = 40.0;
            let du = upper / steps as f64;
            let f = |u: f64| (-x * u.exp()).exp();
            let mut acc = 0.5 * (f(0.0) + f(upper));
            for k in 1..steps {
                acc += f(k as f64 * du);
            }
            let quad = acc * du;
            assert!((exp_integral_e1(x) - quad).abs() < 1e-7 * quad, "x={x}");
        }
    }

    #[test]
    fn normalized_scale_gives_unit_mean_energy() {
        let tci = TciConfig::rayleigh_normalized(0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let h = complex_gaussian(&mut rng, 1.0);
            if h.norm() >= tci.threshold {
                acc += (tci.power_scale / h.norm()).powi(2);
            }
        }
        // Heavy-ish tail near the threshold, so a loose band.
        assert!((acc / n as f64 - 1.0).abs() < 0.03, "{}", acc / n as f64);
        assert!(TciConfig::rayleigh_normalized(0.0).is_err());
        assert!(TciConfig::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn faded_subcarrier_is_muted() {
        let signs = SignVector::new(vec![1, -1, -1, 1]).unwrap();
        let h = [Complex64::new(0.1, 0.0), Complex64::new(0.0, 2.0)];
        let tci = TciConfig::new(0.2, 1.0).unwrap();
        let f = obda_encode(&signs, 2, &h, &tci, true).unwrap();
        assert_eq!(f[0][0], Complex64::new(0.0, 0.0));
        let want = Complex64::new(-1.0, 1.0) / 2f64.sqrt() / h[1];
        assert!((f[0][1] - want).norm() < 1e-15);
    }

    #[test]
    fn unit_channel_values() {
        let signs = SignVector::new(vec![1, -1, -1, -1, 1]).unwrap();
        let h = vec![Complex64::new(1.0, 0.0); 2];
        let tci = TciConfig::new(0.2, 0.8).unwrap();
        let f = obda_encode(&signs, 2, &h, &tci, true).unwrap();
        assert_eq!(f.len(), 2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((f[0][0] - Complex64::new(r, -r) * 0.8).norm() < 1e-15);
        assert!((f[0][1] - Complex64::new(-r, -r) * 0.8).norm() < 1e-15);
        assert!((f[1][0] - Complex64::new(r, 0.0) * 0.8).norm() < 1e-15);
        let plain = obda_encode(&signs, 2, &[], &tci, false).unwrap();
        assert!((plain[0][0] - Complex64::new(r, -r)).norm() < 1e-15);
        let back = obda_detect(&plain, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(back, signs);
    }

    #[test]
    fn phase_inversion_flips_the_vote() {
        let signs = SignVector::new(vec![1, 1]).unwrap();
        let tci = TciConfig::new(0.2, 1.0).unwrap();
        let tx = obda_encode(&signs, 1, &[], &tci, false).unwrap();
        let g = Complex64::from_polar(0.9, std::f64::consts::PI * 0.98);
        let rx = vec![vec![tx[0][0] * g]];
        let got = obda_detect(&rx, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(got.as_slice(), &[-1, -1]);
    }

    #[test]
    fn perfect_inversion_reproduces_majority_vote() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = 32;
        let q = 2 * m * 2 - 3;
        let tci = TciConfig::new(0.0, 1.0).unwrap();
        for _ in 0..50 {
            let votes: Vec<SignVector> = (0..5).map(|_| SignVector::random(q, &mut rng)).collect();
            let mut sum = vec![vec![Complex64::new(0.0, 0.0); m]; obda_symbols(q, m)];
            for v in &votes {
                let h: Vec<Complex64> = (0..m).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
                let tx = obda_encode(v, m, &h, &tci, true).unwrap();
                for (s, f) in sum.iter_mut().zip(&tx) {
                    for ((acc, x), g) in s.iter_mut().zip(f).zip(&h) {
                        *acc += x * g;
                    }
                }
            }
            let got = obda_detect(&sum, q, &mut rng).unwrap();
            for (g, w) in got.as_slice().iter().zip(ideal_majority(&votes)) {
                assert_eq!(*g as i32, w.signum());
            }
        }
    }

    #[test]
    fn detect_validates_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = vec![vec![Complex64::new(1.0, 1.0); 2]];
        assert!(obda_detect(&f, 5, &mut rng).is_err());
        let ragged = vec![vec![Complex64::new(1.0, 1.0); 2], vec![Complex64::new(1.0, 1.0); 1]];
        assert!(obda_detect(&ragged, 2, &mut rng).is_err());
    }
}
