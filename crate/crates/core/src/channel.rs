//! Flat-fading multiuser channels.

use alloc::format;
use alloc::vec::Vec;

use crate::numerics::ComplexMatrix;
use crate::stream::RandomStream;
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Link {
    Downlink,
    Uplink,
}

/// How the `N_T` in the SNR definition is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum NtConvention {
    /// Total transmit antennas of the simulated link: `N_A` on the
    /// downlink, `K N_U` on the uplink.
    #[default]
    TotalTransmitAntennas,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub n_a: usize,
    pub k_users: usize,
    pub n_u: usize,
    pub link: Link,
    pub snr_grid_db: Vec<f64>,
    pub packet_len: usize,
    pub n_packets: usize,
    pub seed: u64,
    pub n_t_convention: NtConvention,
}

impl Scenario {
    /// Total number of user-side streams, `K N_U`.
    pub fn streams(&self) -> usize {
        self.k_users * self.n_u
    }

    pub fn n_t(&self) -> usize {
        match (self.n_t_convention, self.link) {
            (NtConvention::TotalTransmitAntennas, Link::Downlink) => self.n_a,
            (NtConvention::TotalTransmitAntennas, Link::Uplink) => self.streams(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let positive = |field: &'static str, v: usize| {
            if v == 0 {
                Err(Error::Invalid { field, constraint: format!("must be positive, got {v}") })
            } else {
                Ok(())
            }
        };
        positive("n_a", self.n_a)?;
        positive("k", self.k_users)?;
        positive("n_u", self.n_u)?;
        positive("packet_len", self.packet_len)?;
        positive("n_packets", self.n_packets)?;
        if self.n_a <= self.streams() {
            return Err(Error::Invalid {
                field: "n_a",
                constraint: format!(
                    "N_A > K N_U required (excess degrees of freedom); got N_A = {}, K N_U = {}",
                    self.n_a,
                    self.streams()
                ),
            });
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Invalid { field: "snr_db", constraint: "at least one SNR point required".into() });
        }
        if let Some(bad) = self.snr_grid_db.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid { field: "snr_db", constraint: format!("non-finite SNR {bad}") });
        }
        Ok(())
    }

    /// Per-user block shape for this link direction.
    pub fn block_shape(&self) -> (usize, usize) {
        match self.link {
            Link::Downlink => (self.n_u, self.n_a),
            Link::Uplink => (self.n_a, self.n_u),
        }
    }
}

/// Per-user channels plus their stacked composite.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub link: Link,
    pub per_user: Vec<ComplexMatrix>,
    pub composite: ComplexMatrix,
}

impl ChannelSet {
    pub fn from_blocks(per_user: Vec<ComplexMatrix>, link: Link) -> Result<Self, Error> {
        let composite = stack_composite(&per_user, link)?;
        Ok(Self { link, per_user, composite })
    }

    pub fn users(&self) -> usize {
        self.per_user.len()
    }

    /// Extracts user `k`'s block back out of the composite.
    pub fn composite_block(&self, k: usize) -> ComplexMatrix {
        let (r, c) = self.per_user[k].shape();
        match self.link {
            Link::Downlink => self.composite.block(k * r, 0, r, c),
            Link::Uplink => self.composite.block(0, k * c, r, c),
        }
    }
}

/// Draws i.i.d. CN(0, 1) entries for every user; user `k` reads from
/// `stream.substream(k)`.
pub fn generate_channels(sc: &Scenario, stream: &RandomStream) -> ChannelSet {
    let (rows, cols) = sc.block_shape();
    let per_user: Vec<ComplexMatrix> = (0..sc.k_users)
        .map(|k| {
            let mut rng = stream.substream(k as u64).rng();
            ComplexMatrix::from_fn(rows, cols, |_, _| rng.complex_normal())
        })
        .collect();
    ChannelSet::from_blocks(per_user, sc.link).expect("uniform blocks by construction")
}

/// Row-block stack (downlink) or column-block stack (uplink), in user order.
pub fn stack_composite(per_user: &[ComplexMatrix], link: Link) -> Result<ComplexMatrix, Error> {
    let first = per_user.first().ok_or(Error::Invalid { field: "per_user", constraint: "no users".into() })?;
    let (r, c) = first.shape();
    for (index, b) in per_user.iter().enumerate() {
        if b.shape() != (r, c) {
            return Err(Error::BlockShape { index, found: b.shape(), expected: (r, c) });
        }
    }
    let k = per_user.len();
    let mut out = match link {
        Link::Downlink => ComplexMatrix::zeros(k * r, c),
        Link::Uplink => ComplexMatrix::zeros(r, k * c),
    };
    for (i, b) in per_user.iter().enumerate() {
        match link {
            Link::Downlink => out.set_block(i * r, 0, b),
            Link::Uplink => out.set_block(0, i * c, b),
        }
    }
    Ok(out)
}
