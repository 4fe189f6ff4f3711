//! SNR bookkeeping, bit-error tallies, sum-rate and the result table.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::numerics::{logdet2_hpd, ComplexMatrix};
use crate::Error;

/// One point of the SNR axis, `snr_db = 10 log10(n_t sigma_s^2 / sigma_n^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub sigma_n2: f64,
    pub n_t: usize,
    pub sigma_s2: f64,
}

impl SnrPoint {
    pub fn new(snr_db: f64, n_t: usize, sigma_s2: f64) -> Self {
        Self { snr_db, sigma_n2: noise_variance_for(snr_db, n_t, sigma_s2), n_t, sigma_s2 }
    }

    /// SNR recomputed from the stored variances.
    pub fn snr_db_readback(&self) -> f64 {
        10.0 * (self.n_t as f64 * self.sigma_s2 / self.sigma_n2).log10()
    }
}

/// `sigma_n^2 = n_t sigma_s^2 / 10^(snr_db / 10)`.
pub fn noise_variance_for(snr_db: f64, n_t: usize, sigma_s2: f64) -> f64 {
    n_t as f64 * sigma_s2 / 10f64.powf(snr_db / 10.0)
}

/// `(errors, total)` between two bit streams.
pub fn count_bit_errors(tx: &[u8], rx: &[u8]) -> Result<(u64, u64), Error> {
    if tx.len() != rx.len() {
        return Err(Error::LengthMismatch { left: tx.len(), right: rx.len() });
    }
    let errors = tx.iter().zip(rx).filter(|(a, b)| (*a & 1) != (*b & 1)).count() as u64;
    Ok((errors, tx.len() as u64))
}

/// Bit errors between two QPSK symbol-index streams (two bits per index).
pub fn count_symbol_bit_errors(tx: &[u8], rx: &[u8]) -> u64 {
    tx.iter().zip(rx).map(|(a, b)| ((a ^ b) & 3).count_ones() as u64).sum()
}

/// `log2 det(I + sigma_n^{-2} H P P^H H^H)`: the rate of the link with all
/// receive antennas decoding jointly.
pub fn sum_rate(h: &ComplexMatrix, p: &ComplexMatrix, sigma_n2: f64) -> Result<f64, Error> {
    joint_rate(&h.matmul(p)?, sigma_n2)
}

/// Joint rate from the effective channel `G = H P`.
pub fn joint_rate(g: &ComplexMatrix, sigma_n2: f64) -> Result<f64, Error> {
    check_noise(sigma_n2)?;
    let mut a = g.gram_rows();
    a.scale_mut(1.0 / sigma_n2);
    a.add_diagonal(1.0);
    Ok(logdet2_hpd(&a)?)
}

/// Sum over users of `log2 det(I + R_k^{-1} G_kk G_kk^H)` with
/// `R_k = sigma_n^2 I + sum_{j != k} G_kj G_kj^H`: each user decodes its own
/// `N_U` streams and treats the other users' signals as noise.
///
/// `g` is the `K N_U x K N_U` effective channel (rows: receive antennas
/// grouped by user; columns: streams grouped by user). With one user it
/// coincides with [`joint_rate`].
pub fn per_user_rate(g: &ComplexMatrix, streams_per_user: usize, sigma_n2: f64) -> Result<f64, Error> {
    check_noise(sigma_n2)?;
    let (rows, cols) = g.shape();
    if streams_per_user == 0 || rows % streams_per_user != 0 || cols != rows {
        return Err(Error::LengthMismatch { left: rows, right: cols });
    }
    let k = rows / streams_per_user;
    let mut total = 0.0;
    for user in 0..k {
        let rows_k = g.block(user * streams_per_user, 0, streams_per_user, cols);
        // signal-plus-interference-plus-noise
        let mut total_cov = rows_k.gram_rows();
        total_cov.add_diagonal(sigma_n2);
        let own = rows_k.block(0, user * streams_per_user, streams_per_user, streams_per_user);
        let interference = total_cov.sub(&own.gram_rows())?;
        total += logdet2_hpd(&total_cov)? - logdet2_hpd(&interference)?;
    }
    Ok(total)
}

fn check_noise(sigma_n2: f64) -> Result<(), Error> {
    if !(sigma_n2 > 0.0 && sigma_n2.is_finite()) {
        return Err(Error::Invalid { field: "sigma_n2", constraint: alloc::format!("must be finite and > 0, got {sigma_n2}") });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Ber,
    SumRateBits,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Ber => "ber",
            MetricKind::SumRateBits => "sum_rate_bits",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub algorithm: String,
    pub snr_db: f64,
    pub metric: MetricKind,
    pub value: f64,
    pub trials: u64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn get(&self, algorithm: &str, snr_db: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm && r.snr_db == snr_db)
    }

    pub fn algorithms(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.algorithm.as_str()) {
                out.push(&r.algorithm);
            }
        }
        out
    }

    /// Checks the value-range invariants of every row.
    pub fn validate(&self) -> Result<(), Error> {
        for r in &self.rows {
            let ok = match r.metric {
                MetricKind::Ber => (0.0..=1.0).contains(&r.value),
                MetricKind::SumRateBits => r.value >= 0.0,
            };
            if !ok || r.trials == 0 || !r.stderr.is_finite() {
                return Err(Error::Invalid { field: "result", constraint: alloc::format!("row out of range: {r:?}") });
            }
        }
        Ok(())
    }
}

/// Pooled bit-error counts. Merging is integer addition, so totals do not
/// depend on how packets were split among workers.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BerTally {
    pub errors: u64,
    pub bits: u64,
    pub packets: u64,
    /// Sum of squared per-packet error rates, for the between-packet spread.
    pub packet_ber_sq: f64,
}

impl BerTally {
    /// Tally of a single packet.
    pub fn packet(errors: u64, bits: u64) -> Self {
        let r = if bits == 0 { 0.0 } else { errors as f64 / bits as f64 };
        Self { errors, bits, packets: 1, packet_ber_sq: r * r }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            errors: self.errors + other.errors,
            bits: self.bits + other.bits,
            packets: self.packets + other.packets,
            packet_ber_sq: self.packet_ber_sq + other.packet_ber_sq,
        }
    }

    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    /// Standard error of the BER across packets (all packets carry the same
    /// number of bits). Errors within a packet share one channel and are not
    /// independent, so the binomial formula would be too optimistic. With a
    /// single packet the binomial value is returned instead.
    pub fn stderr(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        let p = self.ber();
        if self.packets < 2 {
            return (p * (1.0 - p) / self.bits as f64).sqrt();
        }
        let n = self.packets as f64;
        let var = ((self.packet_ber_sq - n * p * p) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Sample mean and standard error over channel draws, folded in draw order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RateTally {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl RateTally {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}
