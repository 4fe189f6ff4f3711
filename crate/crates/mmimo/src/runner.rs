//! Packet-parallel execution of the simulation kernels.
//!
//! Packets are independent and their randomness depends only on the seed and
//! the packet index, so workers may take them in any order. Outcomes are
//! collected in packet order and folded sequentially, which makes the
//! result independent of the worker count down to the last bit.

use mmimo_core::sim::{
    assemble_downlink, assemble_uplink, paired_streams, simulate_downlink_draw, simulate_uplink_packet, ExperimentKind,
    ExperimentSpec, Report,
};
use rayon::prelude::*;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] mmimo_core::Error),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Number of threads used for `workers = 0`.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn run_parallel(spec: &ExperimentSpec, workers: usize) -> Result<Report, RunError> {
    spec.validate()?;
    let threads = if workers == 0 { default_workers() } else { workers };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let plan = paired_streams(spec);
    let packets = 0..spec.scenario.n_packets as u64;
    let report = pool.install(|| -> Result<Report, mmimo_core::Error> {
        Ok(match spec.experiment {
            ExperimentKind::UplinkBer => {
                let outcomes = packets
                    .into_par_iter()
                    .map(|p| simulate_uplink_packet(spec, &plan, p))
                    .collect::<Result<Vec<_>, _>>()?;
                assemble_uplink(spec, &outcomes)
            }
            ExperimentKind::DownlinkSumRate => {
                let outcomes = packets
                    .into_par_iter()
                    .map(|p| simulate_downlink_draw(spec, &plan, p))
                    .collect::<Result<Vec<_>, _>>()?;
                assemble_downlink(spec, &outcomes)
            }
        })
    })?;
    Ok(report)
}
