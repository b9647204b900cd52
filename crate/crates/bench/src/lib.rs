//! Shared fixtures for the benchmarks.

use feeder_core::allocator::QueueState;
use feeder_core::powerflow::{NetworkConfig, PowerAllocation};

/// Uneven but deterministic loads well inside the feasible region.
pub fn loads(n: usize) -> PowerAllocation {
    let scale = 0.5 / (n as f64 * n as f64);
    PowerAllocation::new((0..n).map(|j| scale * (1.0 + ((j * 7919) % 13) as f64 / 13.0)).collect()).unwrap()
}

/// Queue state with a few empty stations.
pub fn queues(n: usize) -> QueueState {
    QueueState::new((0..n).map(|j| ((j * 31 + 7) % 9) as u64).collect())
}

pub fn network(n: usize) -> NetworkConfig {
    NetworkConfig::new(n, 1.0, 0.1).unwrap()
}
