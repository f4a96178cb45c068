//! Synthetic traffic with planted cluster structure.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::SignalTensor;
use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;

/// Steps per synthetic day (5-minute resolution).
pub const SYNTH_PERIOD: usize = 288;
/// Nominal amplitude of the daily component, in flow units.
pub const SYNTH_AMPLITUDE: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub signal: SignalTensor,
    /// Cluster of each node; node `i` belongs to cluster `i % n_clusters`.
    pub labels: Vec<usize>,
    /// Ring inside every cluster.
    pub spatial: AdjacencyMatrix,
}

struct Waveform {
    level: f64,
    daily: (f64, f64),
    half_daily: (f64, f64),
}

impl Waveform {
    fn at(&self, t: usize) -> f64 {
        let x = TAU * t as f64 / SYNTH_PERIOD as f64;
        self.level
            + self.daily.0 * (x + self.daily.1).sin()
            + self.half_daily.0 * (2.0 * x + self.half_daily.1).sin()
    }
}

/// Each cluster gets a daily waveform (two sinusoids with cluster-specific
/// phase and amplitude); every node emits its cluster's waveform plus i.i.d.
/// Gaussian noise with standard deviation `noise_sigma`.
pub fn synth_traffic(
    nodes: usize,
    n_clusters: usize,
    steps: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SyntheticData> {
    if n_clusters == 0 || nodes < n_clusters {
        return Err(Error::Usage(format!(
            "need nodes >= clusters >= 1, got {nodes} nodes and {n_clusters} clusters"
        )));
    }
    if steps == 0 || !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Usage(
            "steps must be positive and sigma finite and nonnegative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<Waveform> = (0..n_clusters)
        .map(|c| Waveform {
            level: 2.0 * SYNTH_AMPLITUDE,
            daily: (
                SYNTH_AMPLITUDE * rng.random_range(0.6..1.0),
                TAU * c as f64 / n_clusters as f64 + rng.random_range(-0.2..0.2),
            ),
            half_daily: (
                SYNTH_AMPLITUDE * rng.random_range(0.2..0.4),
                rng.random_range(0.0..TAU),
            ),
        })
        .collect();
    let labels: Vec<usize> = (0..nodes).map(|i| i % n_clusters).collect();

    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::Usage(e.to_string()))?;
    let mut values = Vec::with_capacity(steps * nodes);
    for t in 0..steps {
        for &c in &labels {
            let v = waves[c].at(t)
                + if noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
            values.push(v as f32);
        }
    }

    let mut edges = Vec::new();
    for c in 0..n_clusters {
        let members: Vec<usize> = (c..nodes).step_by(n_clusters).collect();
        match members.len() {
            0 | 1 => {}
            2 => edges.push((members[0], members[1])),
            len => edges.extend((0..len).map(|i| (members[i], members[(i + 1) % len]))),
        }
    }
    let mut dense = vec![0.0; nodes * nodes];
    for (a, b) in edges {
        dense[a * nodes + b] = 1.0;
        dense[b * nodes + a] = 1.0;
    }

    Ok(SyntheticData {
        signal: SignalTensor::new(steps, nodes, 1, values)?,
        labels,
        spatial: AdjacencyMatrix::from_dense(nodes, dense)?,
    })
}
