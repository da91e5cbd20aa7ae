//! Consistency checks between the simulated physical layer and the closed forms.
//!
//! Each check pits an implementation path against something computed another
//! way: exact enumeration, direct sampling of the assumed distributions,
//! numerical quadrature, or a Monte Carlo run of the full transmit chain.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::analysis::{delta_pdf, energy_means, mv_error_prob, sign_error_prob_given_split, xi};
use crate::channel::{add_noise, apply_channel, ChannelModel, PowerDelayProfile};
use crate::detector::vote_energies;
use crate::dsp::{dft, idft, Modem, OfdmConfig};
use crate::ppm::{compute_layout, default_vote_map, draw_dithers, encode_votes};
use crate::rng::{Purpose, SeedTree};
use crate::{Complex64, Result, SignVector};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name, passed, detail }
}

/// Binomial-weighted sum of the conditional error probability over every vote split.
pub fn mv_error_by_summation(k: usize, q_i: f64, xi: f64) -> Result<f64> {
    let p_correct = 1.0 - q_i;
    let mut total = 0.0;
    let mut binom = 1.0;
    for k_plus in 0..=k {
        if k_plus > 0 {
            binom *= (k - k_plus + 1) as f64 / k_plus as f64;
        }
        let weight = binom * p_correct.powi(k_plus as i32) * q_i.powi((k - k_plus) as i32);
        total += sign_error_prob_given_split(k, k_plus, xi)? * weight;
    }
    Ok(total)
}

/// Frequency of `e⁺ ≤ e⁻` with energies drawn directly from exponentials.
pub fn sampled_split_error(k: usize, k_plus: usize, xi_value: f64, trials: usize, seeds: &SeedTree) -> f64 {
    // Scale so the per-device pulse energy is one; then noise mean is 1/ξ.
    let noise = 1.0 / xi_value;
    let mu_p = k_plus as f64 + noise;
    let mu_m = (k - k_plus) as f64 + noise;
    let errors: usize = (0..trials.div_ceil(1000))
        .into_par_iter()
        .map(|chunk| {
            let mut rng = seeds.stream(Purpose::Validation, 1, chunk as u64);
            let n = 1000.min(trials - chunk * 1000);
            let ep = Exp::new(1.0 / mu_p).unwrap();
            let em = Exp::new(1.0 / mu_m).unwrap();
            (0..n).filter(|_| ep.sample(&mut rng) <= em.sample(&mut rng)).count()
        })
        .sum();
    errors as f64 / trials as f64
}

/// Trapezoidal integral of `delta_pdf` over `[-span, span]` with a break at zero.
pub fn delta_pdf_mass(mu_plus: f64, mu_minus: f64) -> (f64, f64) {
    let integrate = |lo: f64, hi: f64| {
        let steps = 400_000;
        let h = (hi - lo) / steps as f64;
        let mut acc = 0.5 * (delta_pdf(lo, mu_plus, mu_minus) + delta_pdf(hi, mu_plus, mu_minus));
        for i in 1..steps {
            acc += delta_pdf(lo + i as f64 * h, mu_plus, mu_minus);
        }
        acc * h
    };
    // Right limit at 0⁺ differs from the value at 0; integrate each side separately.
    let neg = integrate(-60.0 * mu_minus.max(1e-12), 0.0);
    let pos_lo = 1e-300;
    let pos = {
        let steps = 400_000;
        let hi = 60.0 * mu_plus.max(1e-12);
        let h = (hi - pos_lo) / steps as f64;
        let f = |d: f64| delta_pdf(d, mu_plus, mu_minus);
        let mut acc = 0.5 * ((1.0 / (mu_plus + mu_minus)) + f(hi));
        for i in 1..steps {
            acc += f(pos_lo + i as f64 * h);
        }
        acc * h
    };
    (neg, neg + pos)
}

/// Scenario for [`simulate_window_energies`].
#[derive(Debug, Clone)]
pub struct EnergyScenario {
    pub ofdm: OfdmConfig,
    pub m_pulse: usize,
    pub m_gap: usize,
    pub profile: PowerDelayProfile,
    pub t_sync_s: f64,
    pub k_plus: usize,
    pub k_minus: usize,
    pub sigma_n_sq: f64,
}

/// Mean `(e⁺, e⁻)` of one vote measured through the full chain: PPM encoder,
/// DFT-s-OFDM modulator, fading channel with timing offset, superposition,
/// noise, demodulator and energy windows. Every other vote slot in the symbol
/// carries a random sign so inter-pulse leakage is present.
pub fn simulate_window_energies(sc: &EnergyScenario, trials: usize, seeds: &SeedTree) -> Result<(f64, f64)> {
    let modem = Modem::new(sc.ofdm.clone())?;
    let probe = compute_layout(sc.ofdm.m_bins, sc.m_pulse, sc.m_gap, 1)?;
    let layout = compute_layout(sc.ofdm.m_bins, sc.m_pulse, sc.m_gap, probe.m_vote)?;
    let map = default_vote_map(&layout);
    let model = ChannelModel::new(&sc.profile, sc.ofdm.sample_rate_hz, sc.ofdm.cp_len, sc.t_sync_s)?;
    let target = layout.m_vote / 2;
    let k = sc.k_plus + sc.k_minus;
    let sums = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(f64, f64)> {
            let t = t as u64;
            let mut rx = vec![Complex64::new(0.0, 0.0); sc.ofdm.symbol_len()];
            for dev in 0..k {
                let mut rng = seeds.stream(Purpose::Validation, 2 + t, dev as u64);
                let mut signs = SignVector::random(layout.q, &mut rng).as_slice().to_vec();
                signs[target] = if dev < sc.k_plus { 1 } else { -1 };
                let dither = draw_dithers(&mut rng, layout.q);
                let frames = encode_votes(&SignVector::new(signs)?, &map, &layout, &dither)?;
                let y = apply_channel(&modem.modulate(&frames[0])?, &model.draw(&mut rng));
                rx.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
            }
            add_noise(&mut rx, sc.sigma_n_sq, &mut seeds.stream(Purpose::Noise, 2 + t, 0))?;
            let frames = vec![modem.demodulate(modem.strip_cp(&rx)?)?];
            let e = vote_energies(&frames, &map, &layout, target)?;
            Ok((e.e_plus, e.e_minus))
        })
        .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    Ok((sums.0 / trials as f64, sums.1 / trials as f64))
}

fn relative_gap(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs()
}

fn check_transforms(seeds: &SeedTree) -> Result<CheckOutcome> {
    let mut rng = seeds.stream(Purpose::Validation, 0, 0);
    let mut worst: f64 = 0.0;
    for n in [1usize, 7, 64, 1200, 2048] {
        let v: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.random(), rng.random())).collect();
        let e: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        let f = dft(&v)?;
        let ef: f64 = f.iter().map(|x| x.norm_sqr()).sum();
        worst = worst.max(relative_gap(ef, e));
        let back = idft(&f)?;
        worst = worst.max(back.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
    }
    Ok(outcome("dft_unitary", worst < 1e-10, format!("worst deviation {worst:.2e}")))
}

fn check_loopback(seeds: &SeedTree) -> Result<CheckOutcome> {
    let cfg = OfdmConfig::nr_default();
    let modem = Modem::new(cfg.clone())?;
    let layout = compute_layout(cfg.m_bins, 1, 7, 300)?;
    let map = default_vote_map(&layout);
    let mut failures = 0;
    for trial in 0..100 {
        let mut rng = seeds.stream(Purpose::Validation, 0, 100 + trial);
        let signs = SignVector::random(300, &mut rng);
        let frames = encode_votes(&signs, &map, &layout, &draw_dithers(&mut rng, 300))?;
        let rx = frames
            .iter()
            .map(|f| modem.demodulate(modem.strip_cp(&modem.modulate(f)?)?))
            .collect::<Result<Vec<_>>>()?;
        if crate::detector::detect_mv(&rx, &map, &layout, &mut rng)? != signs {
            failures += 1;
        }
    }
    Ok(outcome("noiseless_loopback", failures == 0, format!("{failures}/100 trials with a wrong sign")))
}

fn check_layout() -> Result<CheckOutcome> {
    let got: Vec<usize> = [1, 3, 8, 13]
        .iter()
        .map(|&mp| compute_layout(1200, mp, 7, 123_090).map(|l| l.n_symbols))
        .collect::<Result<_>>()?;
    Ok(outcome(
        "layout_symbol_counts",
        got == [1642, 2052, 3078, 4103],
        format!("{got:?} (4103 for m_pulse=13 by the layout formulas)"),
    ))
}

fn check_mv_summation() -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for k in 1..=10 {
        for x in [0.1, 1.0, 10.0, 100.0] {
            for q in [0.0, 0.1, 0.25, 0.5] {
                worst = worst.max((mv_error_prob(k, q, x)? - mv_error_by_summation(k, q, x)?).abs());
            }
        }
    }
    Ok(outcome("mv_error_closed_form_vs_binomial_sum", worst <= 1e-12, format!("max |diff| {worst:.2e}")))
}

fn check_split_sampling(seeds: &SeedTree) -> Result<CheckOutcome> {
    let trials = 100_000;
    let mut worst_z: f64 = 0.0;
    for k in [1usize, 2, 5] {
        for x in [1.0, 10.0] {
            for k_plus in 0..=k {
                let p = sign_error_prob_given_split(k, k_plus, x)?;
                let got = sampled_split_error(k, k_plus, x, trials, seeds);
                let se = (p * (1.0 - p) / trials as f64).sqrt();
                worst_z = worst_z.max((got - p).abs() / se);
            }
        }
    }
    Ok(outcome("split_error_vs_exponential_sampling", worst_z < 3.0, format!("worst |z| {worst_z:.2}")))
}

fn check_delta_pdf() -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for (mp, mm) in [(1.0, 1.0), (16.0, 8.0), (0.5, 30.0)] {
        let (neg, total) = delta_pdf_mass(mp, mm);
        worst = worst.max((total - 1.0).abs()).max((neg - mm / (mp + mm)).abs());
    }
    Ok(outcome("delta_pdf_quadrature", worst < 1e-6, format!("max deviation {worst:.2e}")))
}

fn check_energy_bridge(
    name: &'static str,
    profile: PowerDelayProfile,
    t_sync_s: f64,
    tol: f64,
    trials: usize,
    seeds: &SeedTree,
) -> Result<CheckOutcome> {
    let sc = EnergyScenario {
        ofdm: OfdmConfig::nr_default(),
        m_pulse: 1,
        m_gap: 7,
        profile,
        t_sync_s,
        k_plus: 2,
        k_minus: 1,
        sigma_n_sq: 0.5,
    };
    let (got_p, got_m) = simulate_window_energies(&sc, trials, seeds)?;
    let l = compute_layout(1200, 1, 7, 1)?;
    let (want_p, want_m) = energy_means(2, 1, 1, 7, l.e_s, sc.sigma_n_sq);
    let worst = relative_gap(got_p, want_p).max(relative_gap(got_m, want_m));
    Ok(outcome(
        name,
        worst <= tol,
        format!("e+ {got_p:.3} vs {want_p:.3}, e- {got_m:.3} vs {want_m:.3}, tolerance {:.0}%", tol * 100.0),
    ))
}

fn check_detector_split(seeds: &SeedTree) -> Result<CheckOutcome> {
    // Flat Rayleigh, K+ = 3, K- = 1, no noise: exponential energies with means
    // 3·16 and 16, so P(+1) = 3/4 without any approximation.
    let sc = EnergyScenario {
        ofdm: OfdmConfig::nr_default(),
        m_pulse: 1,
        m_gap: 7,
        profile: PowerDelayProfile::flat(),
        t_sync_s: 0.0,
        k_plus: 3,
        k_minus: 1,
        sigma_n_sq: 0.0,
    };
    let trials = 10_000usize;
    let modem = Modem::new(sc.ofdm.clone())?;
    let layout = compute_layout(1200, 1, 7, 1)?;
    let map = default_vote_map(&layout);
    let model = ChannelModel::new(&sc.profile, sc.ofdm.sample_rate_hz, sc.ofdm.cp_len, 0.0)?;
    let plus: usize = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<usize> {
            let mut rng = seeds.stream(Purpose::Validation, 500_000 + t as u64, 0);
            let mut rx = vec![Complex64::new(0.0, 0.0); sc.ofdm.symbol_len()];
            for dev in 0..4 {
                let s = SignVector::new(vec![if dev < 3 { 1 } else { -1 }])?;
                let f = encode_votes(&s, &map, &layout, &draw_dithers(&mut rng, 1))?;
                let y = apply_channel(&modem.modulate(&f[0])?, &model.draw(&mut rng));
                rx.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
            }
            let frames = vec![modem.demodulate(modem.strip_cp(&rx)?)?];
            let mv = crate::detector::detect_mv(&frames, &map, &layout, &mut rng)?;
            Ok(usize::from(mv.as_slice()[0] == 1))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let want = 1.0 - sign_error_prob_given_split(4, 3, f64::INFINITY)?;
    let got = plus as f64 / trials as f64;
    let se = (want * (1.0 - want) / trials as f64).sqrt();
    Ok(outcome(
        "detector_split_vs_closed_form",
        (got - want).abs() < 3.0 * se,
        format!("P(+1) {got:.4} vs {want:.4} (3 s.e. = {:.4})", 3.0 * se),
    ))
}

fn check_epa() -> Result<CheckOutcome> {
    let rms = PowerDelayProfile::epa().rms_delay_spread_ns();
    Ok(outcome("epa_rms_delay_spread", (42.0..=45.0).contains(&rms), format!("{rms:.2} ns")))
}

fn check_xi_consistency() -> Result<CheckOutcome> {
    // μ⁻/(μ⁺+μ⁻) from the energy means must equal the ξ form.
    let mut worst: f64 = 0.0;
    for k in 1..=8usize {
        for kp in 0..=k {
            for s2 in [0.01, 0.3, 1.0, 5.0] {
                let (mp, mm) = energy_means(kp, k - kp, 1, 7, 16.0, s2);
                let closed = sign_error_prob_given_split(k, kp, xi(1, 7, 16.0, s2))?;
                worst = worst.max((mm / (mp + mm) - closed).abs());
            }
        }
    }
    Ok(outcome("energy_means_vs_xi_form", worst < 1e-12, format!("max |diff| {worst:.2e}")))
}

/// Run every check. `trials` sets the Monte Carlo size of the full-chain energy checks.
pub fn run_all(seeds: &SeedTree, trials: usize) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_transforms(seeds)?,
        check_loopback(seeds)?,
        check_layout()?,
        check_epa()?,
        check_mv_summation()?,
        check_xi_consistency()?,
        check_split_sampling(seeds)?,
        check_delta_pdf()?,
        check_detector_split(seeds)?,
        check_energy_bridge("energy_means_flat_rayleigh", PowerDelayProfile::flat(), 0.0, 0.03, trials, seeds)?,
        check_energy_bridge("energy_means_epa", PowerDelayProfile::epa(), 55.6e-9, 0.10, trials, seeds)?,
    ])
}
