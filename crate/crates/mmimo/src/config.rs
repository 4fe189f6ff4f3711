//! Run configuration documents.
//!
//! A configuration is a TOML document. Every key except `experiment` has a
//! default; unknown keys are rejected.
//!
//! ```toml
//! experiment = "uplink_ber"        # or "downlink_sumrate"
//! n_a = 128                         # base-station antennas
//! k = 8                             # users
//! n_u = 8                           # antennas per user
//! snr_db = [0, 5, 10, 15]
//! seed = 1
//! packet_len = 1000                 # channel uses per packet
//! n_packets = 1000                  # packets (uplink) or channel draws (downlink)
//! algorithms = ["rmf_su", "sic", "mmse", "rmf"]
//! p_total = 64.0                    # downlink power budget, default K N_U
//! workers = 0                       # 0 = one per available core
//!
//! [options]
//! mmse_gamma = "auto"               # or a number
//! rbd_alpha = "auto"
//! mmse_loading = "standard"         # standard | inverted
//! sic_ordering = "sinr"             # sinr | natural
//! sic_variant = "deflating"         # deflating | one_shot
//! vp_radius = 1
//! vp_inner = "zf"                   # zf | mmse | tmf
//! vp_cap = 1000000
//! ml_cap = 1048576
//! sum_rate_mode = "per_user"        # per_user | joint
//!
//! [output]
//! dir = "out"                       # default: $MMIMO_OUT_DIR, then ./out
//! formats = ["csv"]                 # csv and/or json
//! plot_data = true
//! ```

use std::fmt;
use std::path::PathBuf;

use mmimo_core::channel::{NtConvention, Scenario};
use mmimo_core::detectors::{MmseLoading, SicOrdering, ML_DEFAULT_CAP};
use mmimo_core::precoders::{PowerBudget, VP_DEFAULT_CAP};
use mmimo_core::sim::{
    Algorithm, AlgorithmOptions, ExperimentKind, ExperimentSpec, Loading, SicVariant, SumRateMode, VpInner, SIGMA_S2,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse { origin: String, line: usize, column: usize, message: String },
    #[error("{origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("{0}")]
    Invalid(#[from] mmimo_core::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    UplinkBer,
    DownlinkSumrate,
}

impl From<ExperimentName> for ExperimentKind {
    fn from(e: ExperimentName) -> Self {
        match e {
            ExperimentName::UplinkBer => ExperimentKind::UplinkBer,
            ExperimentName::DownlinkSumrate => ExperimentKind::DownlinkSumRate,
        }
    }
}

/// `"auto"` or a number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LoadingValue {
    Value(f64),
    Rule(String),
}

impl Default for LoadingValue {
    fn default() -> Self {
        LoadingValue::Rule("auto".into())
    }
}

impl LoadingValue {
    fn resolve(&self, field: &'static str) -> Result<Loading, mmimo_core::Error> {
        match self {
            LoadingValue::Value(v) => Ok(Loading::Fixed(*v)),
            LoadingValue::Rule(r) if r == "auto" => Ok(Loading::Auto),
            LoadingValue::Rule(r) => {
                Err(mmimo_core::Error::Invalid { field, constraint: format!("expected \"auto\" or a number, got \"{r}\"") })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingRule {
    #[default]
    Standard,
    Inverted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingRule {
    #[default]
    Sinr,
    Natural,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SicVariantName {
    #[default]
    Deflating,
    OneShot,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VpInnerName {
    #[default]
    Zf,
    Mmse,
    Tmf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumRateModeName {
    #[default]
    PerUser,
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptionsConfig {
    pub mmse_gamma: LoadingValue,
    pub rbd_alpha: LoadingValue,
    pub mmse_loading: LoadingRule,
    pub sic_ordering: OrderingRule,
    pub sic_variant: SicVariantName,
    pub vp_radius: u32,
    pub vp_inner: VpInnerName,
    pub vp_cap: u64,
    pub ml_cap: u64,
    pub sum_rate_mode: SumRateModeName,
}

impl Default for OptionsConfig {
    fn default() -> Self {
        Self {
            mmse_gamma: LoadingValue::default(),
            rbd_alpha: LoadingValue::default(),
            mmse_loading: LoadingRule::default(),
            sic_ordering: OrderingRule::default(),
            sic_variant: SicVariantName::default(),
            vp_radius: 1,
            vp_inner: VpInnerName::default(),
            vp_cap: VP_DEFAULT_CAP,
            ml_cap: ML_DEFAULT_CAP,
            sum_rate_mode: SumRateModeName::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
    pub plot_data: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, formats: vec![Format::Csv], plot_data: true }
    }
}

/// A configuration document with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentName,
    #[serde(default = "default_n_a")]
    pub n_a: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n_u")]
    pub n_u: usize,
    #[serde(default = "default_snr")]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_packet_len")]
    pub packet_len: usize,
    #[serde(default = "default_packets")]
    pub n_packets: usize,
    #[serde(default)]
    pub algorithms: Option<Vec<String>>,
    #[serde(default)]
    pub p_total: Option<f64>,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub options: OptionsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_n_a() -> usize {
    128
}
fn default_k() -> usize {
    8
}
fn default_n_u() -> usize {
    8
}
fn default_snr() -> Vec<f64> {
    vec![0.0, 5.0, 10.0, 15.0, 20.0]
}
fn default_seed() -> u64 {
    1
}
fn default_packet_len() -> usize {
    1000
}
fn default_packets() -> usize {
    1000
}

/// Command-line values that take precedence over the document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub snr_db: Option<Vec<f64>>,
    pub n_packets: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(s) = &o.snr_db {
            self.snr_db = s.clone();
        }
        if let Some(n) = o.n_packets {
            self.n_packets = n;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(d) = &o.out {
            self.output.dir = Some(d.clone());
        }
    }

    /// Replaces optional entries by their resolved values so the echo in the
    /// run metadata is self-contained.
    pub fn fill_defaults(&mut self) {
        let kind: ExperimentKind = self.experiment.into();
        if self.algorithms.is_none() {
            self.algorithms = Some(kind.default_algorithms().into_iter().map(|a| a.name().to_string()).collect());
        }
        if self.p_total.is_none() {
            self.p_total = Some((self.k * self.n_u) as f64 * SIGMA_S2);
        }
    }

    pub fn to_spec(&self) -> Result<ExperimentSpec, ConfigError> {
        let experiment: ExperimentKind = self.experiment.into();
        let scenario = Scenario {
            n_a: self.n_a,
            k_users: self.k,
            n_u: self.n_u,
            link: experiment.link(),
            snr_grid_db: self.snr_db.clone(),
            packet_len: self.packet_len,
            n_packets: self.n_packets,
            seed: self.seed,
            n_t_convention: NtConvention::TotalTransmitAntennas,
        };
        let algorithms = match &self.algorithms {
            None => experiment.default_algorithms(),
            Some(names) => {
                names.iter().map(|n| Algorithm::parse(n, experiment)).collect::<Result<Vec<_>, _>>()?
            }
        };
        let p_total = self.p_total.unwrap_or((self.k * self.n_u) as f64 * SIGMA_S2);
        let o = &self.options;
        let options = AlgorithmOptions {
            mmse_gamma: o.mmse_gamma.resolve("mmse_gamma")?,
            rbd_alpha: o.rbd_alpha.resolve("rbd_alpha")?,
            mmse_loading: match o.mmse_loading {
                LoadingRule::Standard => MmseLoading::Standard,
                LoadingRule::Inverted => MmseLoading::Inverted,
            },
            sic_ordering: match o.sic_ordering {
                OrderingRule::Sinr => SicOrdering::Sinr,
                OrderingRule::Natural => SicOrdering::Natural,
            },
            sic_variant: match o.sic_variant {
                SicVariantName::Deflating => SicVariant::Deflating,
                SicVariantName::OneShot => SicVariant::OneShot,
            },
            vp_radius: o.vp_radius,
            vp_inner: match o.vp_inner {
                VpInnerName::Zf => VpInner::Zf,
                VpInnerName::Mmse => VpInner::Mmse,
                VpInnerName::Tmf => VpInner::Tmf,
            },
            vp_cap: o.vp_cap,
            ml_cap: o.ml_cap,
            sum_rate_mode: match o.sum_rate_mode {
                SumRateModeName::PerUser => SumRateMode::PerUser,
                SumRateModeName::Joint => SumRateMode::Joint,
            },
        };
        let spec = ExperimentSpec { scenario, experiment, algorithms, power: PowerBudget::new(p_total)?, options };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses a TOML document. `origin` names the source in error messages.
pub fn parse_toml(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    toml::from_str::<RunConfig>(text).map_err(|e| {
        let message = e.message().to_string();
        match e.span() {
            Some(span) => {
                let (line, column) = line_col(text, span.start);
                ConfigError::Parse { origin: origin.to_string(), line, column, message }
            }
            None => ConfigError::Syntax { origin: origin.to_string(), message },
        }
    })
}

/// Reads the configuration echoed in a run's `metadata.json`.
pub fn parse_metadata(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    #[derive(Deserialize)]
    struct Envelope {
        config: RunConfig,
    }
    serde_json::from_str::<Envelope>(text).map(|e| e.config).map_err(|e| ConfigError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses either format (JSON documents are run metadata), applies
/// overrides and defaults, and validates.
pub fn parse_config(text: &str, origin: &str, overrides: &Overrides) -> Result<(RunConfig, ExperimentSpec), ConfigError> {
    let mut cfg =
        if text.trim_start().starts_with('{') { parse_metadata(text, origin)? } else { parse_toml(text, origin)? };
    cfg.apply(overrides);
    cfg.fill_defaults();
    let spec = cfg.to_spec()?;
    Ok((cfg, spec))
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "uplink_ber"
n_a = 16
k = 2
n_u = 2
snr_db = [0, 5, 10]
seed = 42
"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let (cfg, spec) = parse_config(MINIMAL, "mem", &Overrides::default()).unwrap();
        assert_eq!(spec.scenario.snr_grid_db, vec![0.0, 5.0, 10.0]);
        assert_eq!(spec.scenario.packet_len, 1000);
        assert_eq!(spec.scenario.n_packets, 1000);
        assert_eq!(spec.power.p_total(), 4.0);
        assert_eq!(spec.options, AlgorithmOptions::default());
        assert_eq!(spec.algorithms, ExperimentKind::UplinkBer.default_algorithms());
        assert_eq!(cfg.output, OutputConfig::default());
    }

    #[test]
    fn excess_dof_violation_names_the_constraint() {
        let doc = MINIMAL.replace("n_a = 16", "n_a = 4");
        let err = parse_config(&doc, "mem", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("N_A > K N_U"), "{err}");
    }

    #[test]
    fn unknown_key_is_named_with_position() {
        let doc = format!("{MINIMAL}bogus_key = 3\n");
        match parse_toml(&doc, "mem").unwrap_err() {
            ConfigError::Parse { line, message, .. } => {
                assert!(message.contains("bogus_key"), "{message}");
                assert_eq!(line, 8);
            }
            e => panic!("{e:?}"),
        }
        let doc = format!("{MINIMAL}[options]\nsic_order = \"sinr\"\n");
        assert!(parse_toml(&doc, "mem").unwrap_err().to_string().contains("sic_order"));
    }

    #[test]
    fn experiment_is_required() {
        let err = parse_toml("n_a = 16\n", "mem").unwrap_err();
        assert!(err.to_string().contains("experiment"), "{err}");
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_toml("experiment = \"uplink_ber\"\nn_a = = 3\n", "f.toml").unwrap_err();
        let ConfigError::Parse { origin, line, .. } = err else { panic!() };
        assert_eq!((origin.as_str(), line), ("f.toml", 2));
    }

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides { seed: Some(7), snr_db: Some(vec![3.0]), n_packets: Some(5), workers: Some(2), out: None };
        let (cfg, spec) = parse_config(MINIMAL, "mem", &o).unwrap();
        assert_eq!(spec.scenario.seed, 7);
        assert_eq!(spec.scenario.snr_grid_db, vec![3.0]);
        assert_eq!(spec.scenario.n_packets, 5);
        assert_eq!(cfg.workers, 2);
    }

    #[test]
    fn loading_values() {
        let doc = format!("{MINIMAL}[options]\nmmse_gamma = 0.5\nrbd_alpha = \"auto\"\n");
        let (_, spec) = parse_config(&doc, "mem", &Overrides::default()).unwrap();
        assert_eq!(spec.options.mmse_gamma, Loading::Fixed(0.5));
        let doc = format!("{MINIMAL}[options]\nmmse_gamma = \"big\"\n");
        assert!(parse_config(&doc, "mem", &Overrides::default()).is_err());
    }

    #[test]
    fn wrong_algorithm_kind_rejected() {
        let doc = format!("{MINIMAL}algorithms = [\"thp\"]\n");
        let err = parse_config(&doc, "mem", &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("thp"));
    }

    #[test]
    fn toml_echo_roundtrip() {
        let (cfg, spec) = parse_config(MINIMAL, "mem", &Overrides::default()).unwrap();
        let (cfg2, spec2) = parse_config(&cfg.to_toml(), "echo", &Overrides::default()).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(spec, spec2);
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
