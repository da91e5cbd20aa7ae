//! The four subcommands. Each returns the lines it wants printed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use otamv::analysis::{ccdf_crossing, convergence_bound, mv_error_prob, sigma_sq_from_snr_db, xi, TheoremParams};
use otamv::channel::ChannelRealization;
use otamv::dsp::{Modem, PmeprMeter};
use otamv::obda::{obda_encode, TciConfig};
use otamv::ppm::{compute_layout, default_vote_map, draw_dithers, encode_votes};
use otamv::rng::{Purpose, SeedTree};
use otamv::training::{
    run_training, LinkChannel, MnistMlp, ObdaLink, PpmLink, SyntheticLogistic, Task, TrainConfig, TrainingRun,
    Transport,
};
use otamv::validate::run_all;
use otamv::{Complex64, SignVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Scheme};
use crate::{CliError, VERSION};

pub const ROUNDS_HEADER: &str = "round,test_accuracy,mv_error_rate,wall_ms";
pub const PMEPR_HEADER: &str = "scheme,m_pulse,symbol_index,pmepr_db";

fn runtime(e: otamv::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// CSV preamble line carrying the config hash. Readers skip it as a comment.
fn hash_line(cfg: &ExperimentConfig) -> String {
    format!("# config_hash={}\n", cfg.hash())
}

pub fn build_task(cfg: &ExperimentConfig, seeds: &SeedTree) -> Result<Box<dyn Task>, CliError> {
    let t = &cfg.train;
    match t.task.as_str() {
        "synthetic-logistic" => Ok(Box::new(SyntheticLogistic::generate(
            SyntheticLogistic::DIM,
            t.n_train.unwrap_or(SyntheticLogistic::TRAIN),
            t.n_test.unwrap_or(SyntheticLogistic::TEST),
            &mut seeds.stream(Purpose::Dataset, 0, 0),
        ))),
        "mnist-mlp" => {
            let dir = t.dataset_path.as_deref().expect("checked at load");
            MnistMlp::load(
                dir,
                t.n_train.unwrap_or(2000),
                t.n_test.unwrap_or(1000),
                t.hidden.unwrap_or(MnistMlp::DEFAULT_HIDDEN),
            )
            .map(|m| Box::new(m) as Box<dyn Task>)
            .map_err(|e| CliError::Config(format!("dataset: {e}")))
        }
        other => Err(CliError::Config(format!("unknown task {other:?}"))),
    }
}

pub fn build_transport(cfg: &ExperimentConfig, q: usize) -> Result<Transport, CliError> {
    let sigma = sigma_sq_from_snr_db(cfg.channel.snr_db);
    let channel = match cfg.channel_model()? {
        None => LinkChannel::Identity,
        Some(m) => LinkChannel::Faded(m),
    };
    let modem = || Modem::new(cfg.ofdm_config()?).map_err(|e| CliError::Config(e.to_string()));
    let transport = match cfg.scheme {
        Scheme::Ideal => Transport::Ideal,
        Scheme::Ppm => {
            let layout = compute_layout(cfg.ofdm.m_bins, cfg.ppm.m_pulse, cfg.ppm.m_gap, q)
                .map_err(|e| CliError::Config(e.to_string()))?;
            Transport::Ppm(PpmLink::new(modem()?, layout, channel, sigma).map_err(|e| CliError::Config(e.to_string()))?)
        }
        Scheme::Obda | Scheme::ObdaNoTci => {
            let tci = TciConfig::rayleigh_normalized(cfg.obda.tci_threshold).map_err(|e| CliError::Config(e.to_string()))?;
            Transport::Obda(
                ObdaLink::new(modem()?, q, channel, tci, cfg.scheme == Scheme::Obda, sigma)
                    .map_err(|e| CliError::Config(e.to_string()))?,
            )
        }
    };
    Ok(transport)
}

#[derive(Debug, Serialize)]
struct TrainSummary<'a> {
    config_hash: String,
    version: &'a str,
    scheme: &'a str,
    seed: u64,
    task: &'a str,
    q: usize,
    ofdm_symbols_per_round: Option<usize>,
    xi: Option<f64>,
    rounds: usize,
    final_test_accuracy: f64,
    mean_mv_error_rate: f64,
    total_wall_ms: f64,
    wall_ms: Vec<f64>,
}

/// Train and write `rounds.csv` and `summary.json`. Measured wall times go to
/// the summary; `rounds.csv` carries them only when `wall_clock` is set, so the
/// default file is reproducible byte for byte.
pub fn cmd_train(cfg: &ExperimentConfig, wall_clock: bool) -> Result<Vec<String>, CliError> {
    let seeds = SeedTree::new(cfg.seed);
    let task = build_task(cfg, &seeds)?;
    let q = task.num_params();
    let transport = build_transport(cfg, q)?;
    let train = TrainConfig {
        eta: cfg.train.eta,
        n_b: cfg.train.n_b,
        rounds: cfg.train.rounds,
        k: cfg.train.k,
    };
    let run = run_training(&train, task.as_ref(), &transport, &seeds).map_err(|e| match e {
        otamv::Error::Config(msg) => CliError::Config(msg),
        other => runtime(other),
    })?;
    write_train_outputs(cfg, &cfg.output_dir, &run, &transport, q, wall_clock)
}

fn write_train_outputs(
    cfg: &ExperimentConfig,
    dir: &Path,
    run: &TrainingRun,
    transport: &Transport,
    q: usize,
    wall_clock: bool,
) -> Result<Vec<String>, CliError> {
    prepare_dir(dir)?;
    let mut csv = hash_line(cfg);
    csv.push_str(ROUNDS_HEADER);
    csv.push('\n');
    for r in &run.records {
        let wall = if wall_clock { r.wall_ms } else { 0.0 };
        writeln!(csv, "{},{:.6},{:.6},{:.3}", r.round, r.test_accuracy, r.mv_error_rate, wall).unwrap();
    }
    let rounds_path = dir.join("rounds.csv");
    write_file(&rounds_path, &csv)?;

    let (symbols, xi_value) = match transport {
        Transport::Ideal => (None, None),
        Transport::Ppm(l) => (
            Some(l.layout.n_symbols),
            Some(xi(l.layout.m_pulse, l.layout.m_gap, l.layout.e_s, l.sigma_n_sq)),
        ),
        Transport::Obda(l) => (Some(l.n_symbols()), None),
    };
    let n = run.records.len().max(1) as f64;
    let wall_ms: Vec<f64> = run.records.iter().map(|r| r.wall_ms).collect();
    let final_acc = run.records.last().map_or(0.0, |r| r.test_accuracy);
    let summary = TrainSummary {
        config_hash: cfg.hash(),
        version: VERSION,
        scheme: cfg.scheme.name(),
        seed: cfg.seed,
        task: &cfg.train.task,
        q,
        ofdm_symbols_per_round: symbols,
        xi: xi_value.filter(|v| v.is_finite()),
        rounds: run.records.len(),
        final_test_accuracy: final_acc,
        mean_mv_error_rate: run.records.iter().map(|r| r.mv_error_rate).sum::<f64>() / n,
        total_wall_ms: wall_ms.iter().sum(),
        wall_ms,
    };
    let summary_path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&summary_path, &(json + "\n"))?;
    Ok(vec![
        format!(
            "{} on {}: final test accuracy {:.4}, mean MV disagreement {:.4}",
            cfg.scheme, cfg.train.task, final_acc, summary.mean_mv_error_rate
        ),
        format!("wrote {} and {}", rounds_path.display(), summary_path.display()),
    ])
}

/// PMEPR series labels written to `pmepr.csv`.
pub const CONTROL_SCHEME: &str = "constant-envelope";

#[derive(Debug, Clone, PartialEq)]
pub struct PmeprSeries {
    pub scheme: String,
    pub m_pulse: usize,
    pub values_db: Vec<f64>,
}

/// Per-symbol PMEPR with random votes. PPM symbols are full DFT-s-OFDM
/// symbols of `m_vote` random votes; OBDA symbols are truncated-inversion
/// precoded QPSK votes on every subcarrier under a fresh channel draw; the
/// control puts equal values on every bin, which spreads to a single tone.
pub fn pmepr_series(cfg: &ExperimentConfig, only: Option<Scheme>) -> Result<Vec<PmeprSeries>, CliError> {
    let seeds = SeedTree::new(cfg.seed);
    let ofdm = cfg.ofdm_config()?;
    let meter = PmeprMeter::new(Modem::new(ofdm.clone()).map_err(runtime)?, cfg.pmepr.oversample).map_err(runtime)?;
    let n = cfg.pmepr.symbols;
    let mut out = Vec::new();
    let want = |s: Scheme| only.is_none() || only == Some(s);

    if want(Scheme::Ppm) {
        for &mp in &cfg.pmepr.m_pulse {
            let probe = compute_layout(ofdm.m_bins, mp, cfg.ppm.m_gap, 1).map_err(runtime)?;
            let layout = compute_layout(ofdm.m_bins, mp, cfg.ppm.m_gap, probe.m_vote).map_err(runtime)?;
            let map = default_vote_map(&layout);
            let values_db = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = seeds.stream(Purpose::Waveform, i as u64, mp as u64);
                    let signs = SignVector::random(layout.q, &mut rng);
                    let frames = encode_votes(&signs, &map, &layout, &draw_dithers(&mut rng, layout.q))?;
                    meter.dft_spread_db(&frames[0])
                })
                .collect::<otamv::Result<Vec<f64>>>()
                .map_err(runtime)?;
            out.push(PmeprSeries {
                scheme: "ppm".into(),
                m_pulse: mp,
                values_db,
            });
        }
    }
    if want(Scheme::Obda) {
        let model = cfg.channel_model()?;
        let tci = TciConfig::rayleigh_normalized(cfg.obda.tci_threshold).map_err(runtime)?;
        let values_db = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = seeds.stream(Purpose::Waveform, i as u64, OBDA_STREAM);
                let chn = model.as_ref().map_or_else(ChannelRealization::identity, |m| m.draw(&mut rng));
                let signs = SignVector::random(2 * ofdm.m_bins, &mut rng);
                let frames = obda_encode(&signs, ofdm.m_bins, &chn.multipath_response(&ofdm), &tci, true)?;
                meter.ofdm_db(&frames[0])
            })
            .collect::<otamv::Result<Vec<f64>>>()
            .map_err(runtime)?;
        out.push(PmeprSeries {
            scheme: "obda".into(),
            m_pulse: 0,
            values_db,
        });
    }
    if only.is_none() {
        let values_db = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = seeds.stream(Purpose::Waveform, i as u64, CONTROL_STREAM);
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                meter.dft_spread_db(&vec![Complex64::from_polar(1.0, phase); ofdm.m_bins])
            })
            .collect::<otamv::Result<Vec<f64>>>()
            .map_err(runtime)?;
        out.push(PmeprSeries {
            scheme: CONTROL_SCHEME.into(),
            m_pulse: 0,
            values_db,
        });
    }
    Ok(out)
}

const OBDA_STREAM: u64 = 1 << 32;
const CONTROL_STREAM: u64 = (1 << 32) + 1;

pub fn cmd_pmepr(cfg: &ExperimentConfig, only: Option<Scheme>) -> Result<Vec<String>, CliError> {
    let series = pmepr_series(cfg, only)?;
    prepare_dir(&cfg.output_dir)?;
    let mut csv = hash_line(cfg);
    csv.push_str(PMEPR_HEADER);
    csv.push('\n');
    let mut lines = Vec::new();
    for s in &series {
        for (i, v) in s.values_db.iter().enumerate() {
            writeln!(csv, "{},{},{},{:.6}", s.scheme, s.m_pulse, i, v).unwrap();
        }
        let at = ccdf_crossing(&s.values_db, 1e-2).map_err(runtime)?;
        let label = if s.scheme == "ppm" {
            format!("ppm (m_pulse={})", s.m_pulse)
        } else {
            s.scheme.clone()
        };
        lines.push(format!("{label:<20} PMEPR at CCDF 1e-2: {at:.2} dB"));
    }
    let path = cfg.output_dir.join("pmepr.csv");
    write_file(&path, &csv)?;
    lines.push(format!("wrote {}", path.display()));
    Ok(lines)
}

/// Closed-form tables: the convergence bound against rounds, and the
/// per-coordinate MV error against effective SNR.
pub fn cmd_analyze(cfg: &ExperimentConfig) -> Result<Vec<String>, CliError> {
    let a = &cfg.analysis;
    let mut bound = hash_line(cfg);
    bound.push_str("n,k,xi,a,bound\n");
    let mut xis: Vec<f64> = a.xi.clone();
    xis.push(f64::INFINITY);
    for &n in &a.rounds {
        for &k in &a.k {
            for &x in &xis {
                let p = TheoremParams {
                    n,
                    k: k as f64,
                    gamma: a.gamma,
                    l1_l: a.l1_l,
                    l1_sigma: a.l1_sigma,
                    f0_minus_fstar: a.f0_minus_fstar,
                    xi: x,
                };
                let b = convergence_bound(&p).map_err(|e| CliError::Config(e.to_string()))?;
                writeln!(bound, "{n},{k},{x},{:.12},{b:.12}", p.a()).unwrap();
            }
        }
    }
    let mut err = hash_line(cfg);
    err.push_str("k,q_i,xi,p_i\n");
    for &k in &a.k {
        for &q in &a.q_i {
            for &x in &a.xi {
                let p = mv_error_prob(k, q, x).map_err(|e| CliError::Config(e.to_string()))?;
                writeln!(err, "{k},{q},{x},{p:.12}").unwrap();
            }
        }
    }
    prepare_dir(&cfg.output_dir)?;
    let paths: [PathBuf; 2] = [cfg.output_dir.join("bound_vs_n.csv"), cfg.output_dir.join("error_vs_xi.csv")];
    write_file(&paths[0], &bound)?;
    write_file(&paths[1], &err)?;
    Ok(paths.iter().map(|p| format!("wrote {}", p.display())).collect())
}

/// Run the Monte Carlo versus closed-form checks. Any failure is a validation error.
pub fn cmd_validate(seed: u64, trials: usize) -> Result<Vec<String>, CliError> {
    let checks = run_all(&SeedTree::new(seed), trials).map_err(runtime)?;
    let lines: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {:<40} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
        .collect();
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Validation(format!("{}\n{failed} of {} checks failed", lines.join("\n"), checks.len())));
    }
    Ok(lines)
}
