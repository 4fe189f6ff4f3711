//! Monte-Carlo experiment definitions and the per-packet kernels.
//!
//! Every random quantity of packet `p` is drawn from the stream path
//! `[p, purpose]` (purpose = channel, bits or noise), so all algorithms in
//! one run see identical channels, data and noise, and the outcome of a
//! packet does not depend on which worker computed it. Drivers combine
//! packet outcomes in packet order with [`assemble_uplink`] and
//! [`assemble_downlink`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::channel::{generate_channels, Link, Scenario};
use crate::detectors::{self, MmseLoading, SicDetector, SicOrdering, ML_DEFAULT_CAP};
use crate::metrics::{
    count_symbol_bit_errors, joint_rate, noise_variance_for, per_user_rate, BerTally, MetricKind, RateTally,
    ResultRow, ResultTable,
};
use crate::modem::{self, qpsk_point, QPSK_TAU};
use crate::numerics::{lq_decompose, Complex, ComplexMatrix};
use crate::precoders::{self, PowerBudget, VP_DEFAULT_CAP};
use crate::stream::RandomStream;
use crate::Error;

/// Symbol variance of the unit-energy constellation.
pub const SIGMA_S2: f64 = 1.0;

/// Symbol vectors used to estimate the average power of vector perturbation
/// in the sum-rate experiment.
pub const VP_POWER_PROBES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    UplinkBer,
    DownlinkSumRate,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::UplinkBer => "uplink_ber",
            ExperimentKind::DownlinkSumRate => "downlink_sumrate",
        }
    }

    pub fn link(self) -> Link {
        match self {
            ExperimentKind::UplinkBer => Link::Uplink,
            ExperimentKind::DownlinkSumRate => Link::Downlink,
        }
    }

    pub fn default_algorithms(self) -> Vec<Algorithm> {
        match self {
            ExperimentKind::UplinkBer => [Detector::RmfSingleUser, Detector::Sic, Detector::Mmse, Detector::Rmf]
                .into_iter()
                .map(Algorithm::Detector)
                .collect(),
            ExperimentKind::DownlinkSumRate => {
                [Precoder::TmfSingleUser, Precoder::Thp, Precoder::Rbd, Precoder::Mmse, Precoder::Tmf]
                    .into_iter()
                    .map(Algorithm::Precoder)
                    .collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Detector {
    Ml,
    Rmf,
    Zf,
    Mmse,
    Sic,
    /// Matched filter with a single user (`K = 1`): the interference-free
    /// reference curve.
    RmfSingleUser,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precoder {
    Tmf,
    Zf,
    Mmse,
    Thp,
    Vp,
    Rbd,
    /// Matched filter serving each user alone, summed over users.
    TmfSingleUser,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Detector(Detector),
    Precoder(Precoder),
}

/// Registry entry for `list-algorithms`.
#[derive(Clone, Copy, Debug)]
pub struct AlgorithmInfo {
    pub name: &'static str,
    pub algorithm: Algorithm,
    pub experiment: ExperimentKind,
    pub summary: &'static str,
    /// `(option key, default, meaning)`.
    pub options: &'static [(&'static str, &'static str, &'static str)],
}

pub const REGISTRY: &[AlgorithmInfo] = &[
    AlgorithmInfo {
        name: "tmf",
        algorithm: Algorithm::Precoder(Precoder::Tmf),
        experiment: ExperimentKind::DownlinkSumRate,
        summary: "transmit matched filter, x = beta H^H s",
        options: &[],
    },
    AlgorithmInfo {
        name: "zf",
        algorithm: Algorithm::Precoder(Precoder::Zf),
        experiment: ExperimentKind::DownlinkSumRate,
        summary: "zero-forcing precoder H^H (H H^H)^-1",
        options: &[],
    },
    AlgorithmInfo {
        name: "mmse",
        algorithm: Algorithm::Precoder(Precoder::Mmse),
        experiment: ExperimentKind::DownlinkSumRate,
        summary: "regularized channel inversion H^H (H H^H + gamma I)^-1",
        options: &[("mmse_gamma", "auto", "loading gamma; auto = K N_U sigma_n^2 / p_total")],
    },
    AlgorithmInfo {
        name: "thp",
        algorithm: Algorithm::Precoder(Precoder::Thp),
        experiment: ExperimentKind::DownlinkSumRate,
        summary: "Tomlinson-Harashima precoding from the LQ factorization, natural order",
        options: &[],
    },
    AlgorithmInfo {
        name: "vp",
        algorithm: Algorithm::Precoder(Precoder::Vp),
        experiment: ExperimentKind::DownlinkSumRate,
        summary: "vector perturbation with exhaustive lattice search",
        options: &[
            ("vp_radius", "1", "per-dimension integer search radius"),
            ("vp_inner", "zf", "inner linear precoder: zf | mmse | tmf"),
            ("vp_cap", "1000000", "maximum number of search candidates"),
        ],
    },
    AlgorithmInfo {
        name: "rbd",
        algorithm: Algorithm::Precoder(Precoder::Rbd),
        experiment: ExperimentKind::DownlinkSumRate,
        summary: "regularized block diagonalization (two-stage, equal power per user)",
        options: &[("rbd_alpha", "auto", "regularization alpha; auto = K N_U sigma_n^2 / p_total")],
    },
    AlgorithmInfo {
        name: "tmf_su",
        algorithm: Algorithm::Precoder(Precoder::TmfSingleUser),
        experiment: ExperimentKind::DownlinkSumRate,
        summary: "single-user matched filter reference, summed over the K users",
        options: &[],
    },
    AlgorithmInfo {
        name: "ml",
        algorithm: Algorithm::Detector(Detector::Ml),
        experiment: ExperimentKind::UplinkBer,
        summary: "exhaustive maximum-likelihood detection",
        options: &[("ml_cap", "1048576", "maximum 4^(K N_U) candidates")],
    },
    AlgorithmInfo {
        name: "rmf",
        algorithm: Algorithm::Detector(Detector::Rmf),
        experiment: ExperimentKind::UplinkBer,
        summary: "receive matched filter W = H",
        options: &[],
    },
    AlgorithmInfo {
        name: "zf",
        algorithm: Algorithm::Detector(Detector::Zf),
        experiment: ExperimentKind::UplinkBer,
        summary: "zero-forcing receive filter H (H^H H)^-1",
        options: &[],
    },
    AlgorithmInfo {
        name: "mmse",
        algorithm: Algorithm::Detector(Detector::Mmse),
        experiment: ExperimentKind::UplinkBer,
        summary: "linear MMSE receive filter",
        options: &[("mmse_loading", "standard", "standard = sigma_n^2/sigma_s^2 | inverted = sigma_s^2/sigma_n^2")],
    },
    AlgorithmInfo {
        name: "sic",
        algorithm: Algorithm::Detector(Detector::Sic),
        experiment: ExperimentKind::UplinkBer,
        summary: "MMSE decision feedback with successive interference cancellation",
        options: &[
            ("sic_ordering", "sinr", "detection order: sinr (highest post-MMSE SINR first) | natural"),
            ("sic_variant", "deflating", "deflating (filters recomputed per stage) | one_shot (single-pass DF)"),
        ],
    },
    AlgorithmInfo {
        name: "rmf_su",
        algorithm: Algorithm::Detector(Detector::RmfSingleUser),
        experiment: ExperimentKind::UplinkBer,
        summary: "single-user matched filter reference (K = 1, same N_A)",
        options: &[],
    },
];

impl Algorithm {
    pub fn name(self) -> &'static str {
        REGISTRY.iter().find(|i| i.algorithm == self).map(|i| i.name).expect("registered")
    }

    pub fn parse(name: &str, experiment: ExperimentKind) -> Result<Self, Error> {
        REGISTRY
            .iter()
            .find(|i| i.name == name && i.experiment == experiment)
            .map(|i| i.algorithm)
            .ok_or_else(|| Error::UnknownAlgorithm { name: name.to_string(), experiment: experiment.as_str() })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Loading {
    /// `K N_U sigma_n^2 / p_total`.
    #[default]
    Auto,
    Fixed(f64),
}

impl Loading {
    pub fn resolve(self, streams: usize, sigma_n2: f64, p_total: f64) -> f64 {
        match self {
            Loading::Auto => precoders::default_mmse_gamma(streams, sigma_n2, p_total),
            Loading::Fixed(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SumRateMode {
    /// Each user decodes its own streams, other users are noise.
    #[default]
    PerUser,
    /// All receive antennas decode jointly.
    Joint,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SicVariant {
    #[default]
    Deflating,
    OneShot,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VpInner {
    #[default]
    Zf,
    Mmse,
    Tmf,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgorithmOptions {
    pub mmse_gamma: Loading,
    pub rbd_alpha: Loading,
    pub mmse_loading: MmseLoading,
    pub sic_ordering: SicOrdering,
    pub sic_variant: SicVariant,
    pub vp_radius: u32,
    pub vp_inner: VpInner,
    pub vp_cap: u64,
    pub ml_cap: u64,
    pub sum_rate_mode: SumRateMode,
}

impl Default for AlgorithmOptions {
    fn default() -> Self {
        Self {
            mmse_gamma: Loading::Auto,
            rbd_alpha: Loading::Auto,
            mmse_loading: MmseLoading::Standard,
            sic_ordering: SicOrdering::Sinr,
            sic_variant: SicVariant::Deflating,
            vp_radius: 1,
            vp_inner: VpInner::Zf,
            vp_cap: VP_DEFAULT_CAP,
            ml_cap: ML_DEFAULT_CAP,
            sum_rate_mode: SumRateMode::PerUser,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub experiment: ExperimentKind,
    pub algorithms: Vec<Algorithm>,
    pub power: PowerBudget,
    pub options: AlgorithmOptions,
}

impl ExperimentSpec {
    /// Spec with default algorithms, options and `p_total = K N_U sigma_s^2`.
    pub fn new(scenario: Scenario, experiment: ExperimentKind) -> Result<Self, Error> {
        let power = PowerBudget::new(scenario.streams() as f64 * SIGMA_S2)?;
        Ok(Self { scenario, experiment, algorithms: experiment.default_algorithms(), power, options: Default::default() })
    }

    /// Checks everything that can fail before any simulation work.
    pub fn validate(&self) -> Result<(), Error> {
        self.scenario.validate()?;
        if self.scenario.link != self.experiment.link() {
            return Err(Error::Invalid {
                field: "link",
                constraint: format!("{} requires the {:?} link", self.experiment.as_str(), self.experiment.link()),
            });
        }
        if self.algorithms.is_empty() {
            return Err(Error::Invalid { field: "algorithms", constraint: "at least one algorithm required".into() });
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(Error::Invalid { field: "algorithms", constraint: format!("duplicate algorithm `{}`", a.name()) });
            }
            let kind_ok = matches!(
                (a, self.experiment),
                (Algorithm::Detector(_), ExperimentKind::UplinkBer) | (Algorithm::Precoder(_), ExperimentKind::DownlinkSumRate)
            );
            if !kind_ok {
                return Err(Error::UnknownAlgorithm { name: a.name().to_string(), experiment: self.experiment.as_str() });
            }
        }
        let m = self.scenario.streams();
        let o = &self.options;
        for loading in [(o.mmse_gamma, "mmse_gamma"), (o.rbd_alpha, "rbd_alpha")] {
            if let (Loading::Fixed(v), field) = loading {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Invalid { field, constraint: format!("must be finite and >= 0, got {v}") });
                }
            }
        }
        if self.algorithms.contains(&Algorithm::Detector(Detector::Ml)) && detectors::ml_candidates(m) > o.ml_cap as f64 {
            return Err(Error::SearchSpaceTooLarge {
                candidates: detectors::ml_candidates(m),
                cap: o.ml_cap,
                hint: "ML detection needs fewer streams",
            });
        }
        if self.algorithms.contains(&Algorithm::Precoder(Precoder::Vp)) && precoders::vp_candidates(m, o.vp_radius) > o.vp_cap as f64 {
            return Err(Error::SearchSpaceTooLarge {
                candidates: precoders::vp_candidates(m, o.vp_radius),
                cap: o.vp_cap,
                hint: "reduce vp_radius or the number of streams",
            });
        }
        if self.algorithms.contains(&Algorithm::Precoder(Precoder::Rbd)) && self.scenario.k_users < 2 {
            return Err(Error::Invalid { field: "k", constraint: "rbd needs at least two users".into() });
        }
        Ok(())
    }

    pub fn sigma_n2(&self, snr_db: f64) -> f64 {
        noise_variance_for(snr_db, self.scenario.n_t(), SIGMA_S2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Channel = 0,
    Bits = 1,
    Noise = 2,
}

/// Assignment of random substreams to `(packet, purpose)`; shared by every
/// algorithm in a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamPlan {
    root: RandomStream,
}

pub fn paired_streams(spec: &ExperimentSpec) -> StreamPlan {
    StreamPlan { root: RandomStream::root(spec.scenario.seed) }
}

impl StreamPlan {
    pub fn stream(&self, packet: u64, purpose: Purpose) -> RandomStream {
        self.root.substream(packet).substream(purpose as u64)
    }

    pub fn channel(&self, packet: u64) -> RandomStream {
        self.stream(packet, Purpose::Channel)
    }

    pub fn bits(&self, packet: u64) -> RandomStream {
        self.stream(packet, Purpose::Bits)
    }

    pub fn noise(&self, packet: u64) -> RandomStream {
        self.stream(packet, Purpose::Noise)
    }
}

/// Per-packet result of the uplink experiment, indexed `[snr][algorithm]`.
#[derive(Clone, Debug, PartialEq)]
pub struct UplinkPacketOutcome {
    pub tallies: Vec<Vec<BerTally>>,
    /// `sum |n|^2` of the unit-variance noise and its sample count.
    pub unit_noise_energy: f64,
    pub noise_samples: u64,
}

/// Per-draw sum-rates of the downlink experiment, indexed `[snr][algorithm]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DownlinkDrawOutcome {
    pub rates: Vec<Vec<f64>>,
}

/// Symbols of one packet, row `i` holding the `K N_U` indices of channel use `i`.
pub fn packet_symbol_indices(plan: &StreamPlan, packet: u64, uses: usize, streams: usize) -> Vec<u8> {
    let bits = plan.bits(packet).rng().bits(2 * uses * streams);
    modem::bits_to_indices(&bits).expect("even by construction")
}

/// Row-per-use matrix of `N` unit-variance noise samples per use.
fn unit_noise(plan: &StreamPlan, packet: u64, uses: usize, n: usize) -> ComplexMatrix {
    let mut rng = plan.noise(packet).rng();
    let mut m = ComplexMatrix::zeros(uses, n);
    rng.fill_complex_normal(m.as_mut_slice());
    m
}

fn transpose(m: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.cols(), m.rows(), |i, j| m[(j, i)])
}

fn conj_elementwise(m: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)].conj())
}

/// Runs every detector in `spec` on one uplink packet at every SNR point.
pub fn simulate_uplink_packet(
    spec: &ExperimentSpec,
    plan: &StreamPlan,
    packet: u64,
) -> Result<UplinkPacketOutcome, Error> {
    let sc = &spec.scenario;
    let (n_a, m, n_u, uses) = (sc.n_a, sc.streams(), sc.n_u, sc.packet_len);
    let channels = generate_channels(sc, &plan.channel(packet));
    let h = &channels.composite; // N_A x M
    let tx = packet_symbol_indices(plan, packet, uses, m);
    let s_rows = ComplexMatrix::from_fn(uses, m, |i, j| qpsk_point(tx[i * m + j]));
    let noise = unit_noise(plan, packet, uses, n_a);
    let h_t = transpose(h);
    let clean = s_rows.matmul(&h_t)?; // uses x N_A, row i = (H s_i)^T

    let needs_su = spec.algorithms.contains(&Algorithm::Detector(Detector::RmfSingleUser));
    let (h_su, clean_su, tx_su) = if needs_su {
        let h_su = channels.per_user[0].clone();
        let s_su = s_rows.block(0, 0, uses, n_u);
        let clean_su = s_su.matmul(&transpose(&h_su))?;
        let tx_su: Vec<u8> = (0..uses).flat_map(|i| tx[i * m..i * m + n_u].iter().copied()).collect();
        (Some(h_su), Some(clean_su), tx_su)
    } else {
        (None, None, Vec::new())
    };

    let mut tallies = Vec::with_capacity(sc.snr_grid_db.len());
    let mut detected = vec![0u8; uses * m];
    let mut scratch = Vec::with_capacity(n_a);
    for &snr_db in &sc.snr_grid_db {
        let sigma_n2 = spec.sigma_n2(snr_db);
        let sigma = sigma_n2.sqrt();
        let received = add_scaled(&clean, &noise, sigma);
        let mut row = Vec::with_capacity(spec.algorithms.len());
        for alg in &spec.algorithms {
            let Algorithm::Detector(det) = alg else { unreachable!("validated") };
            let tally = match det {
                Detector::RmfSingleUser => {
                    let sigma_su = noise_variance_for(snr_db, n_u, SIGMA_S2).sqrt();
                    let h_su = h_su.as_ref().expect("prepared");
                    let rx = add_scaled(clean_su.as_ref().expect("prepared"), &noise, sigma_su);
                    let mut out = vec![0u8; uses * n_u];
                    detect_linear(&detectors::rmf_filter(h_su), &rx, &mut out)?;
                    BerTally::packet(count_symbol_bit_errors(&tx_su, &out), 2 * tx_su.len() as u64)
                }
                _ => {
                    run_detector(*det, spec, h, sigma_n2, &received, &mut detected, &mut scratch)?;
                    BerTally::packet(count_symbol_bit_errors(&tx, &detected), 2 * tx.len() as u64)
                }
            };
            row.push(tally);
        }
        tallies.push(row);
    }
    let unit_noise_energy = noise.norm_sqr();
    Ok(UplinkPacketOutcome { tallies, unit_noise_energy, noise_samples: (uses * n_a) as u64 })
}

fn add_scaled(clean: &ComplexMatrix, noise: &ComplexMatrix, sigma: f64) -> ComplexMatrix {
    clean.add(&noise.scale(sigma)).expect("same shape")
}

/// Linear detection of all uses at once: row `i` of `rx` is `r_i^T`, so
/// `Z = rx conj(W)` has row `i` equal to `(W^H r_i)^T`.
fn detect_linear(filters: &detectors::ReceiveFilterSet, rx: &ComplexMatrix, out: &mut [u8]) -> Result<(), Error> {
    let z = rx.matmul(&conj_elementwise(&filters.w))?;
    match &filters.feedback {
        None => {
            for (o, v) in out.iter_mut().zip(z.as_slice()) {
                *o = modem::slice_index(*v);
            }
        }
        Some(fb) => {
            let m = z.cols();
            let mut initial = vec![Complex::new(0.0, 0.0); m];
            for i in 0..z.rows() {
                let zi = z.row(i);
                for (d, v) in initial.iter_mut().zip(zi) {
                    *d = modem::slice(*v);
                }
                let corr = fb.mul_vec(&initial)?;
                for j in 0..m {
                    out[i * m + j] = modem::slice_index(zi[j] - corr[j]);
                }
            }
        }
    }
    Ok(())
}

fn run_detector(
    det: Detector,
    spec: &ExperimentSpec,
    h: &ComplexMatrix,
    sigma_n2: f64,
    rx: &ComplexMatrix,
    out: &mut [u8],
    scratch: &mut Vec<Complex>,
) -> Result<(), Error> {
    let o = &spec.options;
    let loading = o.mmse_loading.value(SIGMA_S2, sigma_n2);
    let m = h.cols();
    match det {
        Detector::Rmf => detect_linear(&detectors::rmf_filter(h), rx, out),
        Detector::Zf => detect_linear(&detectors::zf_filter(h)?, rx, out),
        Detector::Mmse => detect_linear(&detectors::mmse_filter_loaded(h, loading)?, rx, out),
        Detector::Sic => match o.sic_variant {
            SicVariant::OneShot => {
                let mut f = detectors::mmse_filter_loaded(h, loading)?;
                let whh = f.w.hermitian_matmul(h)?;
                f.feedback = Some(ComplexMatrix::from_fn(m, m, |i, j| {
                    if j < i {
                        whh[(i, j)]
                    } else {
                        Complex::new(0.0, 0.0)
                    }
                }));
                detect_linear(&f, rx, out)
            }
            SicVariant::Deflating => {
                let sic = SicDetector::with_loading(h, loading, o.sic_ordering)?;
                for i in 0..rx.rows() {
                    sic.detect_indices(rx.row(i), scratch, &mut out[i * m..(i + 1) * m]);
                }
                Ok(())
            }
        },
        Detector::Ml => {
            for i in 0..rx.rows() {
                let idx = detectors::ml_detect_indices(rx.row(i), h, o.ml_cap)?;
                out[i * m..(i + 1) * m].copy_from_slice(&idx);
            }
            Ok(())
        }
        Detector::RmfSingleUser => unreachable!("handled by caller"),
    }
}

/// Effective `K N_U x K N_U` channel `beta H P` with `beta^2 = P / tr(P P^H)`.
fn normalized_effective(h: &ComplexMatrix, p: &ComplexMatrix, budget: PowerBudget) -> Result<ComplexMatrix, Error> {
    let beta = (budget.p_total() / p.norm_sqr()).sqrt();
    Ok(h.matmul(p)?.scale(beta))
}

/// Sum-rate of every precoder on one downlink channel draw.
///
/// Linear precoders use `P = beta W` with `tr(P P^H) = p_total`. THP uses
/// `beta F` with the modulo loss ignored; with per-user decoding the
/// successively pre-cancelled interference is removed, leaving the
/// per-stream gains `beta L_ll`. Vector perturbation scales `W` by the
/// average perturbed energy over [`VP_POWER_PROBES`] symbol vectors.
pub fn simulate_downlink_draw(
    spec: &ExperimentSpec,
    plan: &StreamPlan,
    draw: u64,
) -> Result<DownlinkDrawOutcome, Error> {
    let sc = &spec.scenario;
    let (m, n_u, k) = (sc.streams(), sc.n_u, sc.k_users);
    let budget = spec.power;
    let p_total = budget.p_total();
    let channels = generate_channels(sc, &plan.channel(draw));
    let h = &channels.composite; // M x N_A
    let gram = h.gram_rows();
    let o = &spec.options;

    let has = |p: Precoder| spec.algorithms.contains(&Algorithm::Precoder(p));
    let thp_l = if has(Precoder::Thp) { Some(lq_decompose(h)?.l) } else { None };
    let zf_w = if has(Precoder::Zf) || (has(Precoder::Vp) && o.vp_inner == VpInner::Zf) {
        Some(precoders::zf_precoder_matrix(h)?)
    } else {
        None
    };
    let probes = if has(Precoder::Vp) {
        let uses = sc.packet_len.min(VP_POWER_PROBES);
        let idx = packet_symbol_indices(plan, draw, uses, m);
        Some((uses, idx))
    } else {
        None
    };

    let rate = |g: &ComplexMatrix, sigma_n2: f64| -> Result<f64, Error> {
        match o.sum_rate_mode {
            SumRateMode::PerUser => per_user_rate(g, n_u, sigma_n2),
            SumRateMode::Joint => joint_rate(g, sigma_n2),
        }
    };

    let mut rates = Vec::with_capacity(sc.snr_grid_db.len());
    for &snr_db in &sc.snr_grid_db {
        let sigma_n2 = spec.sigma_n2(snr_db);
        let mut row = Vec::with_capacity(spec.algorithms.len());
        for alg in &spec.algorithms {
            let Algorithm::Precoder(pre) = alg else { unreachable!("validated") };
            let value = match pre {
                Precoder::Tmf => {
                    let beta = (p_total / gram.trace().re).sqrt();
                    rate(&gram.scale(beta), sigma_n2)?
                }
                Precoder::Zf => rate(&normalized_effective(h, zf_w.as_ref().expect("prepared"), budget)?, sigma_n2)?,
                Precoder::Mmse => {
                    let gamma = o.mmse_gamma.resolve(m, sigma_n2, p_total);
                    let w = precoders::mmse_precoder_matrix(h, gamma)?;
                    rate(&normalized_effective(h, &w, budget)?, sigma_n2)?
                }
                Precoder::Rbd => {
                    let alpha = o.rbd_alpha.resolve(m, sigma_n2, p_total);
                    let w = precoders::rbd_precoder_matrix(&channels.per_user, alpha)?;
                    rate(&normalized_effective(h, &w, budget)?, sigma_n2)?
                }
                Precoder::Thp => {
                    let l = thp_l.as_ref().expect("prepared");
                    // F = Q^H has orthonormal columns, tr(F F^H) = M
                    let beta = (p_total / m as f64).sqrt();
                    let g = match o.sum_rate_mode {
                        SumRateMode::PerUser => ComplexMatrix::from_fn(m, m, |i, j| {
                            if i == j {
                                l[(i, i)] * beta
                            } else {
                                Complex::new(0.0, 0.0)
                            }
                        }),
                        SumRateMode::Joint => l.scale(beta),
                    };
                    rate(&g, sigma_n2)?
                }
                Precoder::Vp => {
                    let w = match o.vp_inner {
                        VpInner::Zf => zf_w.clone().expect("prepared"),
                        VpInner::Mmse => precoders::mmse_precoder_matrix(h, o.mmse_gamma.resolve(m, sigma_n2, p_total))?,
                        VpInner::Tmf => h.hermitian(),
                    };
                    let (uses, idx) = probes.as_ref().expect("prepared");
                    let wgram = w.hermitian_matmul(&w)?;
                    let mut energy = 0.0;
                    for i in 0..*uses {
                        let s: Vec<Complex> = idx[i * m..(i + 1) * m].iter().map(|&x| qpsk_point(x)).collect();
                        let (_, obj) = precoders::vp_search(&wgram, &s, QPSK_TAU, o.vp_radius, o.vp_cap)?;
                        energy += obj;
                    }
                    let beta = (p_total / (energy / *uses as f64)).sqrt();
                    rate(&h.matmul(&w)?.scale(beta), sigma_n2)?
                }
                Precoder::TmfSingleUser => {
                    let per_user_power = p_total / k as f64;
                    let mut total = 0.0;
                    for hk in &channels.per_user {
                        let gk = hk.gram_rows();
                        let beta = (per_user_power / gk.trace().re).sqrt();
                        total += joint_rate(&gk.scale(beta), sigma_n2)?;
                    }
                    total
                }
            };
            row.push(value);
        }
        rates.push(row);
    }
    Ok(DownlinkDrawOutcome { rates })
}

/// Realized noise variance against the configured one at one SNR point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseCheck {
    pub snr_db: f64,
    pub configured: f64,
    pub realized: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub table: ResultTable,
    pub noise_checks: Vec<NoiseCheck>,
}

/// Folds packet outcomes (in packet order) into the result table.
pub fn assemble_uplink(spec: &ExperimentSpec, outcomes: &[UplinkPacketOutcome]) -> Report {
    let sc = &spec.scenario;
    let mut table = ResultTable::default();
    let (energy, samples) =
        outcomes.iter().fold((0.0, 0u64), |(e, n), o| (e + o.unit_noise_energy, n + o.noise_samples));
    let mut noise_checks = Vec::new();
    for (si, &snr_db) in sc.snr_grid_db.iter().enumerate() {
        for (ai, alg) in spec.algorithms.iter().enumerate() {
            let t = outcomes.iter().fold(BerTally::default(), |acc, o| acc.merge(o.tallies[si][ai]));
            table.rows.push(ResultRow {
                algorithm: alg.name().to_string(),
                snr_db,
                metric: MetricKind::Ber,
                value: t.ber(),
                trials: t.packets,
                stderr: t.stderr(),
            });
        }
        let configured = spec.sigma_n2(snr_db);
        let realized = if samples == 0 { 0.0 } else { configured * energy / samples as f64 };
        noise_checks.push(NoiseCheck { snr_db, configured, realized });
    }
    Report { table, noise_checks }
}

pub fn assemble_downlink(spec: &ExperimentSpec, outcomes: &[DownlinkDrawOutcome]) -> Report {
    let mut table = ResultTable::default();
    for (si, &snr_db) in spec.scenario.snr_grid_db.iter().enumerate() {
        for (ai, alg) in spec.algorithms.iter().enumerate() {
            let mut t = RateTally::default();
            for o in outcomes {
                t.push(o.rates[si][ai]);
            }
            table.rows.push(ResultRow {
                algorithm: alg.name().to_string(),
                snr_db,
                metric: MetricKind::SumRateBits,
                value: t.mean(),
                trials: t.n,
                stderr: t.stderr(),
            });
        }
    }
    Report { table, noise_checks: Vec::new() }
}

/// Sequential uplink BER run.
pub fn run_uplink_ber(spec: &ExperimentSpec) -> Result<Report, Error> {
    expect_kind(spec, ExperimentKind::UplinkBer)?;
    spec.validate()?;
    let plan = paired_streams(spec);
    let outcomes = (0..spec.scenario.n_packets as u64)
        .map(|p| simulate_uplink_packet(spec, &plan, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_uplink(spec, &outcomes))
}

/// Sequential downlink sum-rate run.
pub fn run_downlink_sumrate(spec: &ExperimentSpec) -> Result<Report, Error> {
    expect_kind(spec, ExperimentKind::DownlinkSumRate)?;
    spec.validate()?;
    let plan = paired_streams(spec);
    let outcomes = (0..spec.scenario.n_packets as u64)
        .map(|p| simulate_downlink_draw(spec, &plan, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_downlink(spec, &outcomes))
}

pub fn run(spec: &ExperimentSpec) -> Result<Report, Error> {
    match spec.experiment {
        ExperimentKind::UplinkBer => run_uplink_ber(spec),
        ExperimentKind::DownlinkSumRate => run_downlink_sumrate(spec),
    }
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<(), Error> {
    if spec.experiment != kind {
        return Err(Error::Invalid {
            field: "experiment",
            constraint: format!("expected {}, got {}", kind.as_str(), spec.experiment.as_str()),
        });
    }
    Ok(())
}

/// Names of the algorithms in `spec`, in run order.
pub fn algorithm_names(spec: &ExperimentSpec) -> Vec<String> {
    spec.algorithms.iter().map(|a| a.name().to_string()).collect()
}
