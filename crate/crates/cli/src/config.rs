//! Experiment configuration: a TOML file with strict keys.
//!
//! ```toml
//! seed = 7
//! scheme = "ppm"            # ppm | obda | obda-no-tci | ideal
//! output_dir = "out"
//!
//! [ofdm]
//! n_idft = 2048
//! m_bins = 1200
//! cp_len = 144
//! sample_rate_hz = 30.72e6
//!
//! [ppm]
//! m_pulse = 1
//! m_gap = 7
//!
//! [channel]
//! profile = "epa"           # epa | flat | identity | custom (with delays_ns, powers_db)
//! t_sync_s = 55.6e-9
//! snr_db = 20.0
//!
//! [train]
//! eta = 0.01
//! n_b = 32
//! rounds = 300
//! k = 10
//! task = "synthetic-logistic"   # or mnist-mlp with dataset_path
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use otamv::channel::{ChannelModel, PowerDelayProfile};
use otamv::dsp::OfdmConfig;
use otamv::ppm::{compute_layout, min_guard_bins};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Ppm,
    Obda,
    ObdaNoTci,
    Ideal,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ppm => "ppm",
            Scheme::Obda => "obda",
            Scheme::ObdaNoTci => "obda-no-tci",
            Scheme::Ideal => "ideal",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ppm" => Ok(Scheme::Ppm),
            "obda" => Ok(Scheme::Obda),
            "obda-no-tci" => Ok(Scheme::ObdaNoTci),
            "ideal" => Ok(Scheme::Ideal),
            other => Err(format!("unknown scheme {other:?}; expected ppm, obda, obda-no-tci or ideal")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmSection {
    pub n_idft: usize,
    pub m_bins: usize,
    pub cp_len: usize,
    pub sample_rate_hz: f64,
    /// Defaults to the band-centred start `(n_idft - m_bins) / 2`.
    #[serde(default)]
    pub first_subcarrier: Option<usize>,
}

impl Default for OfdmSection {
    fn default() -> Self {
        let d = OfdmConfig::nr_default();
        Self {
            n_idft: d.n_idft,
            m_bins: d.m_bins,
            cp_len: d.cp_len,
            sample_rate_hz: d.sample_rate_hz,
            first_subcarrier: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpmSection {
    pub m_pulse: usize,
    pub m_gap: usize,
}

impl Default for PpmSection {
    fn default() -> Self {
        Self { m_pulse: 1, m_gap: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub profile: String,
    #[serde(default)]
    pub delays_ns: Option<Vec<f64>>,
    #[serde(default)]
    pub powers_db: Option<Vec<f64>>,
    pub t_sync_s: f64,
    pub snr_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            profile: "epa".into(),
            delays_ns: None,
            powers_db: None,
            t_sync_s: 55.6e-9,
            snr_db: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObdaSection {
    pub tci_threshold: f64,
}

impl Default for ObdaSection {
    fn default() -> Self {
        Self { tci_threshold: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub eta: f64,
    pub n_b: usize,
    pub rounds: usize,
    pub k: usize,
    #[serde(default = "default_task")]
    pub task: String,
    #[serde(default)]
    pub dataset_path: Option<PathBuf>,
    /// Examples taken from the head of each IDX split.
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default)]
    pub hidden: Option<usize>,
}

fn default_task() -> String {
    "synthetic-logistic".into()
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            eta: 0.01,
            n_b: 32,
            rounds: 300,
            k: 10,
            task: default_task(),
            dataset_path: None,
            n_train: None,
            n_test: None,
            hidden: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmeprSection {
    pub symbols: usize,
    pub oversample: usize,
    pub m_pulse: Vec<usize>,
}

impl Default for PmeprSection {
    fn default() -> Self {
        Self {
            symbols: 10_000,
            oversample: 4,
            m_pulse: vec![1, 3, 8, 13],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub rounds: Vec<f64>,
    pub k: Vec<usize>,
    pub xi: Vec<f64>,
    pub q_i: Vec<f64>,
    pub gamma: f64,
    pub l1_l: f64,
    pub l1_sigma: f64,
    pub f0_minus_fstar: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            rounds: vec![1e1, 1e2, 1e3, 1e4, 1e5],
            k: vec![1, 10, 50],
            xi: vec![0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 200.0],
            q_i: vec![0.0, 0.1, 0.25, 0.4, 0.5],
            gamma: 1.0,
            l1_l: 1.0,
            l1_sigma: 1.0,
            f0_minus_fstar: 1.0,
        }
    }
}

/// File form. Every section may be omitted; `seed` may be omitted only when
/// supplied on the command line.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    scheme: Option<Scheme>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    ofdm: OfdmSection,
    #[serde(default)]
    ppm: PpmSection,
    #[serde(default)]
    channel: ChannelSection,
    #[serde(default)]
    obda: ObdaSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    pmepr: PmeprSection,
    #[serde(default)]
    analysis: AnalysisSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub scheme: Option<Scheme>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scheme: Scheme,
    /// Not part of the hash: where results land does not change them.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub ofdm: OfdmSection,
    pub ppm: PpmSection,
    pub channel: ChannelSection,
    pub obda: ObdaSection,
    pub train: TrainSection,
    pub pmepr: PmeprSection,
    pub analysis: AnalysisSection,
}

/// Read, apply overrides, and check every constraint.
pub fn load_config(path: &Path, over: &Overrides) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, over).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config(text: &str, over: &Overrides) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let seed = over
        .seed
        .or(raw.seed)
        .ok_or_else(|| CliError::Config("seed is required (set `seed` in the file or pass --seed)".into()))?;
    let cfg = ExperimentConfig {
        seed,
        scheme: over.scheme.or(raw.scheme).unwrap_or(Scheme::Ppm),
        output_dir: over.output_dir.clone().or(raw.output_dir).unwrap_or_else(|| "out".into()),
        ofdm: raw.ofdm,
        ppm: raw.ppm,
        channel: raw.channel,
        obda: raw.obda,
        train: raw.train,
        pmepr: raw.pmepr,
        analysis: raw.analysis,
    };
    let problems = cfg.violations();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(format!("invalid configuration:\n  - {}", problems.join("\n  - "))))
    }
}

impl ExperimentConfig {
    pub fn ofdm_config(&self) -> Result<OfdmConfig, CliError> {
        let o = &self.ofdm;
        let mut cfg = OfdmConfig::new(o.n_idft, o.m_bins, o.cp_len, o.sample_rate_hz).map_err(config_err)?;
        if let Some(first) = o.first_subcarrier {
            cfg.first_subcarrier = first;
            cfg.validate().map_err(config_err)?;
        }
        Ok(cfg)
    }

    /// `None` for the identity channel.
    pub fn profile(&self) -> Result<Option<PowerDelayProfile>, CliError> {
        let c = &self.channel;
        let explicit = c.delays_ns.is_some() || c.powers_db.is_some();
        match c.profile.as_str() {
            "epa" | "flat" | "identity" if explicit => Err(CliError::Config(format!(
                "delays_ns/powers_db are only read with profile = \"custom\", not {:?}",
                c.profile
            ))),
            "epa" => Ok(Some(PowerDelayProfile::epa())),
            "flat" => Ok(Some(PowerDelayProfile::flat())),
            "identity" => Ok(None),
            "custom" => match (&c.delays_ns, &c.powers_db) {
                (Some(d), Some(p)) => PowerDelayProfile::new(d.clone(), p.clone()).map(Some).map_err(config_err),
                _ => Err(CliError::Config("profile = \"custom\" needs both delays_ns and powers_db".into())),
            },
            other => Err(CliError::Config(format!(
                "unknown channel profile {other:?}; expected epa, flat, identity or custom"
            ))),
        }
    }

    pub fn channel_model(&self) -> Result<Option<ChannelModel>, CliError> {
        let ofdm = self.ofdm_config()?;
        match self.profile()? {
            None => Ok(None),
            Some(p) => ChannelModel::new(&p, ofdm.sample_rate_hz, ofdm.cp_len, self.channel.t_sync_s)
                .map(Some)
                .map_err(config_err),
        }
    }

    /// Smallest guard (in bins) that keeps channel spread plus timing error
    /// inside a PPM window.
    pub fn min_m_gap(&self) -> Result<usize, CliError> {
        let ofdm = self.ofdm_config()?;
        let t_chn = self.profile()?.map_or(0.0, |p| 4.0 * p.rms_delay_spread_ns() * 1e-9);
        Ok(min_guard_bins(t_chn, self.channel.t_sync_s, ofdm.t_spacing_s()))
    }

    /// Every violated constraint, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |r: Result<(), CliError>| {
            if let Err(e) = r {
                out.push(e.message().to_string());
            }
        };
        push(self.ofdm_config().map(drop));
        push(self.channel_model().map(drop));
        let c = &self.channel;
        if !(c.t_sync_s.is_finite() && c.t_sync_s >= 0.0) {
            push(Err(CliError::Config(format!("t_sync_s = {} must be non-negative", c.t_sync_s))));
        }
        if !c.snr_db.is_finite() {
            push(Err(CliError::Config("snr_db must be finite".into())));
        }
        if !(self.obda.tci_threshold.is_finite() && self.obda.tci_threshold > 0.0) {
            push(Err(CliError::Config(format!(
                "obda.tci_threshold = {} must be positive",
                self.obda.tci_threshold
            ))));
        }
        push(compute_layout(self.ofdm.m_bins, self.ppm.m_pulse, self.ppm.m_gap, 1).map(drop).map_err(config_err));
        if self.scheme == Scheme::Ppm {
            if let Ok(min) = self.min_m_gap() {
                if self.ppm.m_gap < min {
                    push(Err(CliError::Config(format!(
                        "m_gap = {} is too short for the channel spread plus timing offset; minimum m_gap is {min}",
                        self.ppm.m_gap
                    ))));
                }
            }
        }
        let t = &self.train;
        if !(t.eta.is_finite() && t.eta > 0.0) {
            push(Err(CliError::Config(format!("train.eta = {} must be positive", t.eta))));
        }
        for (name, v) in [("train.n_b", t.n_b), ("train.rounds", t.rounds), ("train.k", t.k)] {
            if v == 0 {
                push(Err(CliError::Config(format!("{name} must be positive"))));
            }
        }
        match t.task.as_str() {
            "synthetic-logistic" => {}
            "mnist-mlp" if t.dataset_path.is_none() => {
                push(Err(CliError::Config("task mnist-mlp needs train.dataset_path".into())));
            }
            "mnist-mlp" => {}
            other => push(Err(CliError::Config(format!(
                "unknown task {other:?}; expected synthetic-logistic or mnist-mlp"
            )))),
        }
        if self.pmepr.symbols == 0 {
            push(Err(CliError::Config("pmepr.symbols must be positive".into())));
        }
        if self.pmepr.oversample < 4 {
            push(Err(CliError::Config("pmepr.oversample must be at least 4".into())));
        }
        for &mp in &self.pmepr.m_pulse {
            push(compute_layout(self.ofdm.m_bins, mp, self.ppm.m_gap, 1).map(drop).map_err(config_err));
        }
        let a = &self.analysis;
        for (name, v) in [
            ("analysis.gamma", a.gamma),
            ("analysis.l1_l", a.l1_l),
            ("analysis.l1_sigma", a.l1_sigma),
            ("analysis.f0_minus_fstar", a.f0_minus_fstar),
        ] {
            if !(v.is_finite() && v > 0.0) {
                push(Err(CliError::Config(format!("{name} = {v} must be positive"))));
            }
        }
        if a.rounds.iter().chain(&a.xi).any(|v| v.is_nan() || *v <= 0.0) || a.k.contains(&0) {
            push(Err(CliError::Config("analysis grids must hold positive values".into())));
        }
        if a.q_i.iter().any(|q| !(0.0..=0.5).contains(q)) {
            push(Err(CliError::Config("analysis.q_i values must lie in [0, 0.5]".into())));
        }
        out
    }

    /// SHA-256 over the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

fn config_err(e: otamv::Error) -> CliError {
    CliError::Config(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded() -> Overrides {
        Overrides {
            seed: Some(1),
            ..Default::default()
        }
    }

    #[test]
    fn empty_file_with_cli_seed_uses_defaults() {
        let cfg = parse_config("", &seeded()).unwrap();
        assert_eq!(cfg.scheme, Scheme::Ppm);
        assert_eq!(cfg.ppm.m_gap, 7);
        assert_eq!(cfg.min_m_gap().unwrap(), 5);
        let layout = compute_layout(cfg.ofdm.m_bins, cfg.ppm.m_pulse, cfg.ppm.m_gap, 1).unwrap();
        assert_eq!(layout.m_vote, 75);
    }

    #[test]
    fn seed_is_mandatory() {
        let err = parse_config("scheme = \"ppm\"", &Overrides::default()).unwrap_err();
        assert!(err.message().contains("seed"), "{err}");
        assert_eq!(parse_config("seed = 3", &Overrides::default()).unwrap().seed, 3);
        assert_eq!(parse_config("seed = 3", &seeded()).unwrap().seed, 1);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["seed = 1\nsede = 2", "seed = 1\n[ppm]\nm_pulse = 1\nm_gap = 7\nm_gapp = 3", "seed = 1\n[extra]\n"] {
            assert!(matches!(parse_config(text, &Overrides::default()), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn short_guard_names_minimum() {
        let err = parse_config("seed = 1\n[ppm]\nm_pulse = 1\nm_gap = 3", &Overrides::default()).unwrap_err();
        assert!(err.message().contains("minimum m_gap is 5"), "{err}");
        // Other schemes do not use the guard.
        let text = "seed = 1\nscheme = \"obda\"\n[ppm]\nm_pulse = 1\nm_gap = 3";
        assert!(parse_config(text, &Overrides::default()).is_ok());
    }

    #[test]
    fn reports_every_violation() {
        let text = "seed = 1\n[train]\neta = -1.0\nn_b = 0\nrounds = 10\nk = 2\n[obda]\ntci_threshold = 0.0";
        let err = parse_config(text, &Overrides::default()).unwrap_err();
        let msg = err.message();
        for needle in ["eta", "n_b", "tci_threshold"] {
            assert!(msg.contains(needle), "{needle} missing from {msg}");
        }
    }

    #[test]
    fn custom_profile() {
        let text = "seed = 1\n[channel]\nprofile = \"custom\"\ndelays_ns = [0.0, 100.0]\npowers_db = [0.0, -3.0]\nt_sync_s = 0.0\nsnr_db = 10.0";
        let cfg = parse_config(text, &Overrides::default()).unwrap();
        assert_eq!(cfg.channel_model().unwrap().unwrap().tap_positions(), &[0, 3]);
        let bad = text.replace("powers_db = [0.0, -3.0]\n", "");
        assert!(parse_config(&bad, &Overrides::default()).is_err());
        // A spread longer than the cyclic prefix is refused.
        let long = text.replace("100.0]", "9000.0]");
        assert!(parse_config(&long, &Overrides::default()).is_err());
    }

    #[test]
    fn hash_tracks_content_not_output_dir() {
        let a = parse_config("seed = 1\noutput_dir = \"a\"", &Overrides::default()).unwrap();
        let b = parse_config("seed = 1\noutput_dir = \"b\"", &Overrides::default()).unwrap();
        let c = parse_config("seed = 2\noutput_dir = \"a\"", &Overrides::default()).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [Scheme::Ppm, Scheme::Obda, Scheme::ObdaNoTci, Scheme::Ideal] {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("ofdm".parse::<Scheme>().is_err());
    }
}
