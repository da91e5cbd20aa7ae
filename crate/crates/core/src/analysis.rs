//! Closed-form error probabilities and the convergence bound for majority vote
//! over the PPM energy detector, plus PMEPR distribution helpers.
//!
//! With Rayleigh fading and random dithers, the window energies `e⁺` and `e⁻`
//! are exponential with means `μ± = M_pulse·E_s·K± + (M_pulse+M_gap)·σ_n²`.
//! Their difference then has a two-sided exponential density, and the
//! probability of deciding against `K⁺` votes reduces to a ratio of means.

use crate::{Error, Result};

/// Means of the plus and minus window energies for a vote split `(k_plus, k_minus)`.
pub fn energy_means(k_plus: usize, k_minus: usize, m_pulse: usize, m_gap: usize, e_s: f64, sigma_n_sq: f64) -> (f64, f64) {
    let pulse = m_pulse as f64 * e_s;
    let noise = (m_pulse + m_gap) as f64 * sigma_n_sq;
    (pulse * k_plus as f64 + noise, pulse * k_minus as f64 + noise)
}

/// Effective SNR `ξ = M_pulse·E_s / ((M_pulse+M_gap)·σ_n²)`; infinite without noise.
pub fn xi(m_pulse: usize, m_gap: usize, e_s: f64, sigma_n_sq: f64) -> f64 {
    m_pulse as f64 * e_s / ((m_pulse + m_gap) as f64 * sigma_n_sq)
}

/// `σ_n²` for an SNR given in dB, with SNR defined as `1/σ_n²`.
pub fn sigma_sq_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Density of `Δ = e⁺ − e⁻` for independent exponential energies.
pub fn delta_pdf(delta: f64, mu_plus: f64, mu_minus: f64) -> f64 {
    let norm = mu_plus + mu_minus;
    if delta <= 0.0 {
        if mu_minus == 0.0 {
            return 0.0;
        }
        (delta / mu_minus).exp() / norm
    } else {
        if mu_plus == 0.0 {
            return 0.0;
        }
        (-delta / mu_plus).exp() / norm
    }
}

/// `P(Δ ≤ 0)` given the split: `((K − K⁺) + 1/ξ) / (K + 2/ξ)`.
pub fn sign_error_prob_given_split(k: usize, k_plus: usize, xi: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if k_plus > k {
        return Err(Error::invalid(format!("K⁺ = {k_plus} exceeds K = {k}")));
    }
    if xi.is_nan() || xi <= 0.0 {
        return Err(Error::invalid(format!("ξ = {xi} must be positive")));
    }
    Ok(((k - k_plus) as f64 + 1.0 / xi) / (k as f64 + 2.0 / xi))
}

/// Probability that the detected vote disagrees with the true gradient sign
/// when each device errs independently with probability `q_i`:
/// `(1/(ξK) + q_i) / (1 + 2/(Kξ))`.
pub fn mv_error_prob(k: usize, q_i: f64, xi: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if !(0.0..=0.5).contains(&q_i) {
        return Err(Error::invalid(format!("q_i = {q_i} must lie in [0, 0.5]")));
    }
    if xi.is_nan() || xi <= 0.0 {
        return Err(Error::invalid(format!("ξ = {xi} must be positive")));
    }
    let inv = 1.0 / (xi * k as f64);
    Ok((inv + q_i) / (1.0 + 2.0 * inv))
}

/// Upper bound on a device's sign-error probability under unimodal symmetric
/// gradient noise: `√2·σ_i / (3·|g_i|·√n_b)`. Values above one are vacuous
/// but returned as is.
pub fn q_bound(sigma_i: f64, g_i: f64, n_b: usize) -> Result<f64> {
    if n_b == 0 {
        return Err(Error::invalid("n_b must be positive"));
    }
    if sigma_i < 0.0 || !sigma_i.is_finite() || !g_i.is_finite() {
        return Err(Error::invalid("σ_i must be finite and non-negative, g_i finite"));
    }
    if sigma_i == 0.0 {
        if g_i == 0.0 {
            return Err(Error::invalid("bound undefined for σ_i = 0 and g_i = 0"));
        }
        return Ok(0.0);
    }
    Ok(2f64.sqrt() * sigma_i / (3.0 * g_i.abs() * (n_b as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremParams {
    /// Communication rounds `N`.
    pub n: f64,
    /// Edge devices `K`.
    pub k: f64,
    /// Batch-size ratio: `n_b = N/γ`.
    pub gamma: f64,
    pub l1_l: f64,
    pub l1_sigma: f64,
    pub f0_minus_fstar: f64,
    /// May be `f64::INFINITY` for the noiseless limit.
    pub xi: f64,
}

impl TheoremParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("N", self.n),
            ("K", self.k),
            ("gamma", self.gamma),
            ("l1_L", self.l1_l),
            ("l1_sigma", self.l1_sigma),
            ("f0_minus_fstar", self.f0_minus_fstar),
            ("xi", self.xi),
        ];
        for (name, v) in fields {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::invalid(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in &fields[..6] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// `a = (1 + 2/(ξK)) / √γ`.
    pub fn a(&self) -> f64 {
        (1.0 + 2.0 / (self.xi * self.k)) / self.gamma.sqrt()
    }
}

/// Bound on `E[(1/N) Σ ‖g_n‖₁]` for majority vote over the PPM detector:
/// `(1/√N)·(a·√‖L‖₁·(F₀ − F* + γ/2) + (2√(2γ)/3)·‖σ‖₁)`.
pub fn convergence_bound(p: &TheoremParams) -> Result<f64> {
    p.validate()?;
    let first = p.a() * p.l1_l.sqrt() * (p.f0_minus_fstar + p.gamma / 2.0);
    let second = 2.0 * (2.0 * p.gamma).sqrt() / 3.0 * p.l1_sigma;
    Ok((first + second) / p.n.sqrt())
}

/// Fraction of `samples` strictly above each threshold.
pub fn pmepr_ccdf(samples: &[f64], thresholds: &[f64]) -> Vec<f64> {
    if samples.is_empty() {
        return vec![0.0; thresholds.len()];
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    thresholds
        .iter()
        .map(|&t| {
            let at_or_below = sorted.partition_point(|&x| x <= t);
            (sorted.len() - at_or_below) as f64 / n
        })
        .collect()
}

/// Smallest sample value `t` with `CCDF(t) ≤ level`.
pub fn ccdf_crossing(samples: &[f64], level: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::invalid(format!("CCDF level {level} must lie in [0, 1)")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // CCDF(sorted[i]) ≤ (n - 1 - i)/n; pick the first index where that is ≤ level.
    let exceed = (level * n as f64).floor() as usize;
    Ok(sorted[n - 1 - exceed.min(n - 1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn means_plug_in() {
        assert_eq!(energy_means(1, 0, 1, 7, 16.0, 0.0), (16.0, 0.0));
        assert_eq!(energy_means(0, 0, 1, 7, 16.0, 1.0), (8.0, 8.0));
        let (a, b) = energy_means(3, 2, 2, 5, 7.0, 0.3);
        assert_eq!(energy_means(2, 3, 2, 5, 7.0, 0.3), (b, a));
    }

    #[test]
    fn xi_values() {
        assert!((xi(1, 7, 16.0, 1.0) - 2.0).abs() < 1e-12);
        assert!((xi(1, 7, 16.0, 0.01) - 200.0).abs() < 1e-9);
        assert!(xi(1, 7, 16.0, 1e300) < 1e-290);
        assert_eq!(xi(1, 7, 16.0, 0.0), f64::INFINITY);
        assert!((sigma_sq_from_snr_db(20.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn split_probability() {
        assert!(sign_error_prob_given_split(1, 1, 1e9).unwrap() < 1e-8);
        for x in [0.1, 1.0, 10.0, f64::INFINITY] {
            assert!((sign_error_prob_given_split(2, 1, x).unwrap() - 0.5).abs() < 1e-15);
        }
        assert!(sign_error_prob_given_split(0, 0, 1.0).is_err());
        assert!(sign_error_prob_given_split(2, 3, 1.0).is_err());
        assert!(sign_error_prob_given_split(2, 1, 0.0).is_err());
    }

    #[test]
    fn mv_error_limits() {
        for k in [1, 2, 7, 50] {
            for x in [0.1, 1.0, 100.0] {
                assert!((mv_error_prob(k, 0.5, x).unwrap() - 0.5).abs() < 1e-15);
            }
        }
        assert!(mv_error_prob(1000, 0.0, 1e12).unwrap() < 1e-14);
        assert_eq!(mv_error_prob(3, 0.0, f64::INFINITY).unwrap(), 0.0);
        assert!(mv_error_prob(3, 0.6, 1.0).is_err());
    }

    #[test]
    fn q_bound_values() {
        assert_eq!(q_bound(0.0, 0.3, 64).unwrap(), 0.0);
        assert!((q_bound(3.0, 2f64.sqrt(), 4).unwrap() - 0.5).abs() < 1e-15);
        let a = q_bound(1.0, 0.5, 16).unwrap();
        let b = q_bound(1.0, 0.5, 64).unwrap();
        assert!((b / a - 0.5).abs() < 1e-15);
        assert_eq!(q_bound(1.0, 0.0, 4).unwrap(), f64::INFINITY);
        assert!(q_bound(0.0, 0.0, 4).is_err());
        assert!(q_bound(1.0, 1.0, 0).is_err());
    }

    fn base_params() -> TheoremParams {
        TheoremParams {
            n: 100.0,
            k: 10.0,
            gamma: 1.0,
            l1_l: 1.0,
            l1_sigma: 1.0,
            f0_minus_fstar: 1.0,
            xi: f64::INFINITY,
        }
    }

    #[test]
    fn bound_hand_arithmetic() {
        let want = (1.5 + 2.0 * 2f64.sqrt() / 3.0) / 10.0;
        assert!((convergence_bound(&base_params()).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.2443).abs() < 1e-4);
    }

    #[test]
    fn bound_scales_and_limits() {
        let p = TheoremParams { xi: 3.0, ..base_params() };
        let b1 = convergence_bound(&p).unwrap();
        let b4 = convergence_bound(&TheoremParams { n: 400.0, ..p }).unwrap();
        assert!((b4 / b1 - 0.5).abs() < 1e-12);
        assert!(b1 > convergence_bound(&base_params()).unwrap());
        let big = convergence_bound(&TheoremParams { xi: 1e15, ..p }).unwrap();
        assert!((big - convergence_bound(&base_params()).unwrap()).abs() < 1e-12);
        assert!(convergence_bound(&TheoremParams { gamma: 0.0, ..p }).is_err());
        assert!(convergence_bound(&TheoremParams { n: f64::INFINITY, ..p }).is_err());
    }

    #[test]
    fn ccdf_basics() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(pmepr_ccdf(&s, &[f64::NEG_INFINITY, 0.5, 2.0, 4.0]), vec![1.0, 1.0, 0.5, 0.0]);
        let flat = [1e-12; 10];
        assert_eq!(pmepr_ccdf(&flat, &[-0.01, 0.01]), vec![1.0, 0.0]);
        assert_eq!(ccdf_crossing(&flat, 0.01).unwrap(), 1e-12);
        let ramp: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let t = ccdf_crossing(&ramp, 0.01).unwrap();
        assert_eq!(t, 989.0);
        assert!(pmepr_ccdf(&ramp, &[t])[0] <= 0.01);
        assert!(pmepr_ccdf(&ramp, &[t - 1.0])[0] > 0.01);
    }

    proptest! {
        #[test]
        fn ccdf_is_monotone(samples in proptest::collection::vec(-5.0f64..20.0, 1..200)) {
            let th: Vec<f64> = (0..60).map(|i| -6.0 + i as f64 * 0.5).collect();
            let c = pmepr_ccdf(&samples, &th);
            prop_assert!(c.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(c[0], 1.0);
        }

        #[test]
        fn delta_negative_mass_is_split_probability(k in 1usize..12, kp in 0usize..12, snr in -10.0f64..30.0) {
            prop_assume!(kp <= k);
            let s2 = sigma_sq_from_snr_db(snr);
            let (mp, mm) = energy_means(kp, k - kp, 1, 7, 16.0, s2);
            // ∫_{-∞}^0 e^{δ/μ⁻}/(μ⁺+μ⁻) dδ = μ⁻/(μ⁺+μ⁻)
            let neg = mm / (mp + mm);
            let closed = sign_error_prob_given_split(k, kp, xi(1, 7, 16.0, s2)).unwrap();
            prop_assert!((neg - closed).abs() < 1e-12);
        }
    }
}
